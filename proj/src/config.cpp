#include "metareg/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace metareg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ConfigMap ConfigMap::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return from_string(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (in '" + path + "')");
    }
}

ConfigMap ConfigMap::from_string(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              " is not 'key = value': '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config: line " + std::to_string(lineno) + " has an empty key");
        if (key.find_first_of(" \t") != std::string::npos)
            throw ConfigError("config: key '" + key + "' contains whitespace");
        if (out.entries_.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        out.entries_.emplace(key, value);
    }
    return out;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of(" \t") != std::string::npos)
        throw ConfigError("config: override key '" + key + "' is malformed");
    entries_[key] = trim(value);
}

bool ConfigMap::contains(const std::string& key) const { return entries_.count(key) != 0; }

std::string ConfigMap::get_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
}

std::int64_t ConfigMap::get_int(const std::string& key) const {
    const std::string s = get_string(key);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0')
        throw ConfigError("config: key '" + key + "' wants an integer, got '" + s + "'");
    return v;
}

double ConfigMap::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ConfigError("config: key '" + key + "' wants a number, got '" + s + "'");
    return v;
}

bool ConfigMap::get_bool(const std::string& key) const {
    const std::string s = get_string(key);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError("config: key '" + key + "' wants true or false, got '" + s + "'");
}

const char* learner_name(Learner l) {
    switch (l) {
        case Learner::Mann: return "mann";
        case Learner::Maml: return "maml";
        case Learner::MamlSimple: return "maml_simple";
    }
    throw ContractError("learner_name: unknown learner");
}

Learner learner_from_name(const std::string& name) {
    if (name == "mann") return Learner::Mann;
    if (name == "maml") return Learner::Maml;
    if (name == "maml_simple") return Learner::MamlSimple;
    throw ConfigError("config: key 'learner' must be mann, maml, or maml_simple, got '" +
                      name + "'");
}

const char* dataset_name(Dataset d) {
    switch (d) {
        case Dataset::Omniglot: return "omniglot";
        case Dataset::SynthRegression: return "synth_regression";
        case Dataset::Fixture: return "fixture";
    }
    throw ContractError("dataset_name: unknown dataset");
}

Dataset dataset_from_name(const std::string& name) {
    if (name == "omniglot") return Dataset::Omniglot;
    if (name == "synth_regression") return Dataset::SynthRegression;
    if (name == "fixture") return Dataset::Fixture;
    throw ConfigError(
        "config: key 'dataset' must be omniglot, synth_regression, or fixture, got '" + name +
        "'");
}

namespace {

// Pulls keys out of a working copy so leftovers can be reported as unknown.
class Resolver {
    // The user's spelling is kept verbatim in the resolved map; defaults are
    // recorded canonically.
    std::string record(const std::string& key, const std::string& fallback) {
        auto it = rem_.find(key);
        const std::string value = it != rem_.end() ? it->second : fallback;
        if (it != rem_.end()) rem_.erase(it);
        resolved_[key] = value;
        return value;
    }
    template <typename Getter>
    auto parse(const std::string& key, const std::string& fallback, Getter getter) {
        ConfigMap one;
        one.set(key, record(key, fallback));
        return (one.*getter)(key);
    }

    std::map<std::string, std::string> rem_;
    std::map<std::string, std::string>& resolved_;

public:
    Resolver(const ConfigMap& map, std::map<std::string, std::string>& resolved)
        : rem_(map.entries()), resolved_(resolved) {}

    bool present(const std::string& key) const { return rem_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback) {
        return record(key, fallback);
    }
    std::string required(const std::string& key) {
        auto it = rem_.find(key);
        if (it == rem_.end()) throw ConfigError("config: missing key '" + key + "'");
        return record(key, it->second);
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        return parse(key, std::to_string(fallback), &ConfigMap::get_int);
    }
    double number(const std::string& key, double fallback) {
        return parse(key, fmt_double(fallback), &ConfigMap::get_double);
    }
    bool boolean(const std::string& key, bool fallback) {
        return parse(key, fallback ? "true" : "false", &ConfigMap::get_bool);
    }
    std::uint64_t uinteger(const std::string& key, std::uint64_t fallback) {
        const std::string s = record(key, std::to_string(fallback));
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
        if (errno != 0 || end == s.c_str() || *end != '\0' || s.front() == '-')
            throw ConfigError("config: key '" + key + "' wants a non-negative integer, got '" +
                              s + "'");
        return v;
    }

    // A key meaningful for one learner only; setting it elsewhere is treated
    // as the typo it almost certainly is.
    void forbid(const std::string& key, const char* owner) {
        if (rem_.count(key))
            throw ConfigError("config: key '" + key + "' applies to the " + owner +
                              " learner only");
    }
    void forbid_dataset(const std::string& key, const char* owner) {
        if (rem_.count(key))
            throw ConfigError("config: key '" + key + "' applies to the " + owner +
                              " dataset only");
    }

    void finish() const {
        if (!rem_.empty())
            throw ConfigError("config: unknown key '" + rem_.begin()->first + "'");
    }
};

}  // namespace

ExperimentConfig resolve_experiment(const ConfigMap& map) {
    ExperimentConfig cfg;
    Resolver r(map, cfg.resolved);

    cfg.learner = learner_from_name(r.required("learner"));
    cfg.dataset = dataset_from_name(r.required("dataset"));
    const bool is_mann = cfg.learner == Learner::Mann;
    const bool is_regression = cfg.dataset == Dataset::SynthRegression;
    if (is_mann && is_regression)
        throw ConfigError("config: dataset 'synth_regression' needs a maml learner");

    // keys exclusive to the other learner are typos here, not defaults
    if (is_mann) {
        for (const char* k : {"opt.inner_lr", "opt.outer_lr", "model.inner_steps",
                              "model.first_order", "mer.k_pairs", "mer.abs_form"})
            r.forbid(k, "maml");
    } else {
        for (const char* k : {"opt.lr", "mer.method", "mer.reg_cap_factor", "model.latent_dim"})
            r.forbid(k, "mann");
    }
    if (!is_regression) {
        for (const char* k : {"regression.noise_sd", "regression.train_tasks",
                              "regression.amp_min", "regression.amp_max",
                              "regression.interval_width", "regression.x_min",
                              "regression.x_max"})
            r.forbid_dataset(k, "synth_regression");
    } else {
        for (const char* k : {"data.root", "split.train", "split.val", "split.test",
                              "split.seed", "label_mode"})
            r.forbid_dataset(k, "omniglot/fixture");
    }

    cfg.seed = r.uinteger("seed", 0);
    if (!is_regression) {
        cfg.data_root = r.str("data.root", "");
        cfg.split.n_train = r.integer("split.train", cfg.split.n_train);
        cfg.split.n_val = r.integer("split.val", cfg.split.n_val);
        cfg.split.n_test = r.integer("split.test", cfg.split.n_test);
        cfg.split_seed = r.uinteger("split.seed", cfg.seed);
        const std::string mode = r.str("label_mode", "fixed");
        try {
            cfg.label_mode = label_mode_from_name(mode);
        } catch (const ValidationError&) {
            throw ConfigError("config: key 'label_mode' must be fixed or shuffled, got '" +
                              mode + "'");
        }
    }

    cfg.n_way = r.integer("n_way", 5);
    cfg.k_shot = r.integer("k_shot", 1);
    cfg.q_queries = r.integer("q_queries", 1);
    if (!is_regression && cfg.n_way < 2)
        throw ConfigError("config: key 'n_way' must be >= 2, got " +
                          std::to_string(cfg.n_way));
    if (cfg.k_shot < 1 || cfg.q_queries < 1)
        throw ConfigError("config: keys 'k_shot' and 'q_queries' must be >= 1");

    cfg.batch = r.integer("batch", is_mann ? 32 : 10);
    cfg.iterations = r.integer("iterations", 1000);
    cfg.eval_every = r.integer("eval_every", 100);
    cfg.eval_episodes = r.integer("eval_episodes", 600);
    if (cfg.batch < 1) throw ConfigError("config: key 'batch' must be >= 1");
    if (cfg.iterations < 1) throw ConfigError("config: key 'iterations' must be >= 1");
    if (cfg.eval_every < 0) throw ConfigError("config: key 'eval_every' must be >= 0");
    if (cfg.eval_every > 0 && cfg.eval_episodes < 1)
        throw ConfigError("config: key 'eval_episodes' must be >= 1 when eval_every > 0");
    cfg.out_dir = r.str("out_dir", "");

    if (is_mann) {
        cfg.mann.n_way = cfg.n_way;
        cfg.mann.conv_filters = r.integer("model.conv_filters", 32);
        cfg.mann.latent_dim = r.integer("model.latent_dim", 64);
        cfg.mann.hidden_dim = r.integer("model.hidden_dim", 64);
        cfg.adam_lr = r.number("opt.lr", 0.001);
        if (cfg.adam_lr <= 0.0) throw ConfigError("config: key 'opt.lr' must be > 0");
        const std::string method = r.str("mer.method", "none");
        try {
            cfg.mer_mann.method = mer_method_from_name(method);
        } catch (const ValidationError&) {
            throw ConfigError("config: key 'mer.method' must be none, distance, ratio, or "
                              "ratio_target, got '" + method + "'");
        }
        cfg.mer_mann.lambda = r.number("mer.lambda", 0.0);
        cfg.mer_mann.eta = r.number("mer.eta", 1.0);
        cfg.mer_mann.epsilon_z = r.number("mer.epsilon_z", 1e-6);
        cfg.mer_mann.reg_cap_factor = r.number("mer.reg_cap_factor", 10.0);
        validate(cfg.mann);
        validate(cfg.mer_mann);
        if (cfg.mer_mann.method != MerMethod::None && cfg.batch < 2)
            throw ConfigError(
                "config: key 'batch' must be >= 2 when mer.method is not none");
    } else {
        cfg.maml.arch = is_regression ? MamlArch::MlpRegression : MamlArch::ConvImage;
        cfg.maml.n_way = cfg.n_way;
        cfg.maml.conv_filters = r.integer("model.conv_filters", 32);
        cfg.maml.hidden_dim = r.integer("model.hidden_dim", 40);
        cfg.maml.inner_steps = r.integer("model.inner_steps", 1);
        cfg.maml.first_order = r.boolean("model.first_order", false);
        cfg.maml.inner_lr = r.number("opt.inner_lr", 0.04);
        cfg.outer_lr = r.number("opt.outer_lr", 0.0025);
        if (cfg.maml.inner_lr <= 0.0)
            throw ConfigError("config: key 'opt.inner_lr' must be > 0");
        if (cfg.outer_lr <= 0.0) throw ConfigError("config: key 'opt.outer_lr' must be > 0");
        cfg.mer_maml.lambda = r.number("mer.lambda", 0.0);
        cfg.mer_maml.eta = r.number("mer.eta", 1.0);
        cfg.mer_maml.k_pairs = r.integer("mer.k_pairs", 4);
        cfg.mer_maml.epsilon_z = r.number("mer.epsilon_z", 1e-6);
        cfg.mer_maml.abs_form = r.boolean("mer.abs_form", false);
        cfg.mer_maml.simple_denominator = cfg.learner == Learner::MamlSimple;
        validate(cfg.maml);
        validate(cfg.mer_maml);
        if (cfg.mer_maml.lambda > 0.0 && cfg.mer_maml.k_pairs >= cfg.batch)
            throw ConfigError("config: key 'mer.k_pairs' must be below 'batch' (" +
                              std::to_string(cfg.mer_maml.k_pairs) + " vs " +
                              std::to_string(cfg.batch) + ")");
        cfg.eval_inner_steps = r.integer("eval_inner_steps", -1);
        if (cfg.eval_inner_steps < -1)
            throw ConfigError("config: key 'eval_inner_steps' must be >= -1");
    }

    if (is_regression) {
        cfg.regression.seed = cfg.seed;
        cfg.regression.amp_min = r.number("regression.amp_min", cfg.regression.amp_min);
        cfg.regression.amp_max = r.number("regression.amp_max", cfg.regression.amp_max);
        cfg.regression.x_min = r.number("regression.x_min", cfg.regression.x_min);
        cfg.regression.x_max = r.number("regression.x_max", cfg.regression.x_max);
        cfg.regression.interval_width =
            r.number("regression.interval_width", cfg.regression.interval_width);
        cfg.reg_noise_sd = r.number("regression.noise_sd", 0.0);
        cfg.reg_train_tasks = r.integer("regression.train_tasks", 16);
        if (cfg.regression.amp_min <= 0.0 || cfg.regression.amp_max < cfg.regression.amp_min)
            throw ConfigError("config: keys 'regression.amp_min/amp_max' must satisfy "
                              "0 < amp_min <= amp_max");
        if (cfg.regression.interval_width <= 0.0 ||
            cfg.regression.x_max <= cfg.regression.x_min)
            throw ConfigError("config: regression x range or interval width is degenerate");
        if (cfg.reg_noise_sd < 0.0)
            throw ConfigError("config: key 'regression.noise_sd' must be >= 0");
        if (cfg.reg_train_tasks < 1 || cfg.reg_train_tasks >= cfg.regression.n_tasks())
            throw ConfigError("config: key 'regression.train_tasks' must leave held-out "
                              "tasks (have " + std::to_string(cfg.regression.n_tasks()) +
                              " tasks)");
    } else {
        if (cfg.split.n_train < cfg.n_way)
            throw ConfigError("config: key 'split.train' must cover at least n_way classes");
        if (cfg.eval_every > 0 && cfg.split.n_val < cfg.n_way)
            throw ConfigError("config: key 'split.val' must cover at least n_way classes "
                              "when eval_every > 0");
    }

    r.finish();
    return cfg;
}

MannTrainConfig ExperimentConfig::mann_train() const {
    if (learner != Learner::Mann)
        throw ContractError("mann_train: experiment uses the maml learner");
    MannTrainConfig tc;
    tc.iterations = iterations;
    tc.batch_size = batch;
    tc.n_way = n_way;
    tc.k_shot = k_shot;
    tc.q_queries = q_queries;
    tc.mode = label_mode;
    tc.lr = adam_lr;
    tc.eval_every = eval_every;
    tc.eval_episodes = eval_episodes;
    tc.seed = seed;
    return tc;
}

MamlTrainConfig ExperimentConfig::maml_train() const {
    if (learner == Learner::Mann)
        throw ContractError("maml_train: experiment uses the mann learner");
    MamlTrainConfig tc;
    tc.iterations = iterations;
    tc.meta_batch = batch;
    tc.n_way = n_way;
    tc.k_shot = k_shot;
    tc.q_queries = q_queries;
    tc.mode = label_mode;
    tc.outer_lr = outer_lr;
    tc.eval_every = eval_every;
    tc.eval_episodes = eval_episodes;
    tc.eval_inner_steps = eval_inner_steps;
    tc.seed = seed;
    tc.reg_noise_sd = reg_noise_sd;
    tc.reg_train_tasks = reg_train_tasks;
    return tc;
}

}  // namespace metareg
