#include "metareg/runner.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "metareg/rng.hpp"

namespace metareg {

namespace fs = std::filesystem;

namespace {

constexpr char kCheckpointMagic[] = "MRCKPT1\n";

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// feeds raw bytes into an fnv1a64 running hash
void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

void atomic_write(const std::string& path, const std::string& payload, bool binary) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
        if (!out) throw IoError("runner: cannot open '" + tmp + "' for writing");
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw IoError("runner: short write to '" + tmp + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("runner: cannot move '" + tmp + "' into place: " + ec.message());
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::map<std::string, std::string>& meta) {
    if (params.count() == 0) throw ContractError("save_checkpoint: empty parameter set");
    std::ostringstream out;
    out << kCheckpointMagic;
    out << "meta " << meta.size() << "\n";
    for (const auto& [k, v] : meta) {
        if (k.empty() || k.find_first_of(" \t\n") != std::string::npos ||
            v.find('\n') != std::string::npos)
            throw ContractError("save_checkpoint: meta key '" + k +
                                "' is not single-line friendly");
        out << k << " = " << v << "\n";
    }
    out << "params " << params.count() << "\n";
    for (const auto& e : params.entries()) {
        if (e.name.find_first_of(" \t\n") != std::string::npos)
            throw ContractError("save_checkpoint: parameter name '" + e.name +
                                "' contains whitespace");
        out << e.name << " " << segment_name(e.segment) << " " << e.tensor.shape().size();
        for (auto d : e.tensor.shape()) out << " " << d;
        out << "\n";
    }
    out << "payload\n";
    for (const auto& e : params.entries()) {
        const auto v = e.tensor.values();
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    atomic_write(path, out.str(), /*binary=*/true);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line))
            throw IoError("load_checkpoint: '" + path + "' ends early");
        return line;
    };
    if (next_line() != "MRCKPT1")
        throw IoError("load_checkpoint: '" + path + "' is not a checkpoint file");

    Checkpoint ck;
    {
        std::istringstream hd(next_line());
        std::string tag;
        std::size_t n = 0;
        if (!(hd >> tag >> n) || tag != "meta")
            throw IoError("load_checkpoint: bad meta header in '" + path + "'");
        for (std::size_t i = 0; i < n; ++i) {
            const std::string& ml = next_line();
            const auto sep = ml.find(" = ");
            if (sep == std::string::npos || sep == 0)
                throw IoError("load_checkpoint: bad meta line '" + ml + "'");
            ck.meta.emplace(ml.substr(0, sep), ml.substr(sep + 3));
        }
    }
    struct Header {
        std::string name;
        Segment segment;
        Shape shape;
    };
    std::vector<Header> headers;
    {
        std::istringstream hd(next_line());
        std::string tag;
        std::size_t n = 0;
        if (!(hd >> tag >> n) || tag != "params" || n == 0)
            throw IoError("load_checkpoint: bad params header in '" + path + "'");
        for (std::size_t i = 0; i < n; ++i) {
            std::istringstream ph(next_line());
            Header h;
            std::string seg;
            std::size_t rank = 0;
            if (!(ph >> h.name >> seg >> rank))
                throw IoError("load_checkpoint: bad parameter header '" + line + "'");
            h.segment = segment_from_name(seg);
            h.shape.resize(rank);
            for (auto& d : h.shape)
                if (!(ph >> d) || d < 1)
                    throw IoError("load_checkpoint: bad shape in header '" + line + "'");
            headers.push_back(std::move(h));
        }
    }
    if (next_line() != "payload")
        throw IoError("load_checkpoint: missing payload marker in '" + path + "'");
    for (auto& h : headers) {
        std::vector<double> vals(static_cast<std::size_t>(numel(h.shape)));
        in.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(vals.size() * sizeof(double)))
            throw IoError("load_checkpoint: payload of '" + path + "' ends early");
        ck.params.add(std::move(h.name), h.segment,
                      Tensor::from_values(std::move(h.shape), std::move(vals), true));
    }
    if (in.get() != std::ifstream::traits_type::eof())
        throw IoError("load_checkpoint: trailing bytes in '" + path + "'");
    return ck;
}

std::string resolve_data_root(const ExperimentConfig& cfg) {
    if (!cfg.data_root.empty()) return cfg.data_root;
    const char* env = std::getenv("METAREG_DATA_ROOT");
    if (env && *env) return env;
    throw ConfigError("config: key 'data.root' is empty and METAREG_DATA_ROOT is unset");
}

CharacterStore build_store(const ExperimentConfig& cfg) {
    if (cfg.dataset == Dataset::SynthRegression)
        throw ContractError("build_store: synth_regression has no character store");
    return load_omniglot(resolve_data_root(cfg), cfg.split, cfg.split_seed);
}

std::uint64_t dataset_checksum(const CharacterStore& store) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t c = 0; c < store.n_classes(); ++c) {
        const auto& cls = store.cls(c);
        hash_bytes(h, cls.name.data(), cls.name.size());
        for (const auto& img : cls.images)
            hash_bytes(h, img.data(), img.size() * sizeof(double));
    }
    return h;
}

std::uint64_t dataset_checksum(const RegressionTaskSpec& spec) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : {spec.amp_min, spec.amp_max, spec.phase_min, spec.phase_max, spec.x_min,
                     spec.x_max, spec.interval_width}) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        hash_bytes(h, &bits, sizeof(bits));
    }
    hash_bytes(h, &spec.seed, sizeof(spec.seed));
    return h;
}

namespace {

void write_timing_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
    std::ostringstream out;
    out << "iteration,wall_ms\n";
    for (const auto& r : records) out << r.iteration << "," << fmt_double(r.wall_ms) << "\n";
    atomic_write(path, out.str(), /*binary=*/false);
}

}  // namespace

RunResult run_train(const ExperimentConfig& cfg, const std::string& out_dir,
                    const MetricsSink& progress, const RunManifest* expect) {
    const std::string dir = !out_dir.empty() ? out_dir : cfg.out_dir;
    if (dir.empty())
        throw ConfigError("config: key 'out_dir' is empty and no output directory given");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("run_train: cannot create '" + dir + "': " + ec.message());
    const std::string manifest_path = dir + "/manifest.txt";
    if (fs::exists(manifest_path))
        throw ConfigError("run_train: '" + dir +
                          "' already holds a manifest; use a fresh directory");

    RunManifest manifest;
    manifest.config = cfg.resolved;
    manifest.code_version = kCodeVersion;

    // The data is bound (and fingerprinted) before any training work.
    std::optional<CharacterStore> store;
    if (cfg.dataset == Dataset::SynthRegression) {
        manifest.dataset_checksum = std::to_string(dataset_checksum(cfg.regression));
        manifest.split_hash = 0;
    } else {
        store.emplace(build_store(cfg));
        manifest.dataset_checksum = std::to_string(dataset_checksum(*store));
        manifest.split_hash = store->assignment_hash();
    }
    if (expect) {
        if (manifest.dataset_checksum != expect->dataset_checksum)
            throw ValidationError("run_train: dataset checksum " + manifest.dataset_checksum +
                                  " does not match the manifest's " +
                                  expect->dataset_checksum);
        if (manifest.split_hash != expect->split_hash)
            throw ValidationError("run_train: split assignment does not match the manifest");
    }
    write_manifest(manifest, manifest_path);

    RunResult result;
    result.run_dir = dir;
    const MetricsSink sink = [&](const MetricsRecord& r) {
        result.records.push_back(r);
        if (progress) progress(r);
    };

    MannModel mann;
    MamlModel maml;
    const bool is_mann = cfg.learner == Learner::Mann;
    if (is_mann)
        mann = mann_init(cfg.mann, cfg.seed);
    else
        maml = maml_init(cfg.maml, cfg.seed);

    auto flush = [&]() {
        write_csv(result.records, dir + "/metrics.csv", /*with_wall_ms=*/false);
        write_timing_csv(result.records, dir + "/timing.csv");
        save_checkpoint(dir + "/checkpoint.mrckpt", is_mann ? mann.params : maml.params,
                        cfg.resolved);
    };
    try {
        if (is_mann)
            train_mann(mann, *store, cfg.mann_train(), cfg.mer_mann, sink);
        else if (cfg.dataset == Dataset::SynthRegression)
            train_maml_regression(maml, cfg.regression, cfg.maml_train(), cfg.mer_maml, sink);
        else
            train_maml(maml, *store, cfg.maml_train(), cfg.mer_maml, sink);
    } catch (const NumericError&) {
        flush();  // keep the diagnostic tail of the run inspectable
        throw;
    }
    flush();
    return result;
}

RunResult run_train_from_manifest(const std::string& manifest_path, const std::string& out_dir,
                                  const MetricsSink& progress) {
    const RunManifest m = read_manifest(manifest_path);
    ConfigMap map;
    for (const auto& [k, v] : m.config) map.set(k, v);
    return run_train(resolve_experiment(map), out_dir, progress, &m);
}

EvalOutput run_eval(const EvalRequest& req) {
    if (req.n_episodes < 1) throw ConfigError("eval: n_episodes must be >= 1");
    const Checkpoint ck = load_checkpoint(req.checkpoint);
    ConfigMap map;
    for (const auto& [k, v] : ck.meta) map.set(k, v);
    const ExperimentConfig cfg = resolve_experiment(map);

    auto install = [&](ParamSet& dst) {
        // the freshly initialized schema guards against checkpoints from a
        // different learner or architecture
        if (dst.count() != ck.params.count())
            throw ValidationError("eval: checkpoint does not fit the configured model (" +
                                  std::to_string(ck.params.count()) + " tensors vs " +
                                  std::to_string(dst.count()) + ")");
        for (const auto& e : ck.params.entries()) {
            if (!dst.contains(e.name) || dst.at(e.name).shape() != e.tensor.shape() ||
                dst.segment_of(e.name) != e.segment)
                throw ValidationError("eval: checkpoint tensor '" + e.name +
                                      "' does not fit the configured model");
        }
        dst = ck.params;
    };

    EvalOutput out;
    auto rng = make_stream(req.seed, "eval-cli");
    if (cfg.learner == Learner::Mann) {
        MannModel model = mann_init(cfg.mann, cfg.seed);
        install(model.params);
        const auto store = build_store(cfg);
        const auto r = evaluate_mann(model, store, req.split, cfg.label_mode, req.n_episodes,
                                     cfg.n_way, cfg.k_shot, cfg.q_queries, rng);
        out.pre_acc = out.post_acc = r.mean_acc;
        out.pre_std = out.post_std = r.std_acc;
    } else {
        MamlModel model = maml_init(cfg.maml, cfg.seed);
        install(model.params);
        const std::int64_t steps =
            cfg.eval_inner_steps >= 0 ? cfg.eval_inner_steps : cfg.maml.inner_steps;
        out.adapted = true;
        if (cfg.dataset == Dataset::SynthRegression) {
            if (req.split == SplitName::train)
                throw ValidationError(
                    "eval: regression checkpoints evaluate held-out tasks; use val or test");
            out.regression = true;
            const auto r = evaluate_maml_regression(model, cfg.regression,
                                                    cfg.reg_train_tasks, req.n_episodes,
                                                    cfg.k_shot, cfg.q_queries,
                                                    cfg.reg_noise_sd, steps, rng);
            out.pre_acc = r.pre_acc;
            out.pre_std = r.pre_std;
            out.post_acc = r.post_acc;
            out.post_std = r.post_std;
        } else {
            const auto store = build_store(cfg);
            const auto r = evaluate_maml(model, store, req.split, cfg.label_mode,
                                         req.n_episodes, cfg.n_way, cfg.k_shot,
                                         cfg.q_queries, steps, rng);
            out.pre_acc = r.pre_acc;
            out.pre_std = r.pre_std;
            out.post_acc = r.post_acc;
            out.post_std = r.post_std;
        }
    }

    // one appended row per evaluation, beside the checkpoint
    const std::string dir = fs::path(req.checkpoint).parent_path().string();
    const std::string eval_csv = (dir.empty() ? std::string(".") : dir) + "/eval.csv";
    const bool fresh = !fs::exists(eval_csv);
    std::ofstream app(eval_csv, std::ios::app);
    if (!app) throw IoError("eval: cannot append to '" + eval_csv + "'");
    if (fresh) app << "split,episodes,seed,pre_acc,pre_std,post_acc,post_std\n";
    app << split_name(req.split) << "," << req.n_episodes << "," << req.seed << ","
        << fmt_double(out.pre_acc) << "," << fmt_double(out.pre_std) << ","
        << fmt_double(out.post_acc) << "," << fmt_double(out.post_std) << "\n";
    if (!app) throw IoError("eval: short write to '" + eval_csv + "'");
    return out;
}

}  // namespace metareg
