#include "metareg/episodes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "metareg/image_io.hpp"
#include "metareg/rng.hpp"

namespace fs = std::filesystem;

namespace metareg {

const char* split_name(SplitName s) {
    switch (s) {
        case SplitName::train: return "train";
        case SplitName::val: return "val";
        case SplitName::test: return "test";
    }
    throw ContractError("split_name: unknown split");
}

SplitName split_from_name(const std::string& name) {
    if (name == "train") return SplitName::train;
    if (name == "val") return SplitName::val;
    if (name == "test") return SplitName::test;
    throw ValidationError("split_from_name: unknown split '" + name + "'");
}

const char* label_mode_name(LabelMode m) {
    return m == LabelMode::Fixed ? "fixed" : "shuffled";
}

LabelMode label_mode_from_name(const std::string& name) {
    if (name == "fixed") return LabelMode::Fixed;
    if (name == "shuffled") return LabelMode::Shuffled;
    throw ValidationError("label_mode_from_name: unknown mode '" + name + "'");
}

CharacterStore::CharacterStore(std::vector<CharacterClass> classes, SplitSpec spec,
                               std::uint64_t seed)
    : classes_(std::move(classes)), spec_(spec), seed_(seed) {
    if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0)
        throw ConfigError("CharacterStore: negative split counts");
    const std::int64_t want = spec.n_train + spec.n_val + spec.n_test;
    if (want > n_classes())
        throw SamplingError("CharacterStore: split wants " + std::to_string(want) +
                            " classes but only " + std::to_string(n_classes()) +
                            " are available");
    std::vector<std::int64_t> order(classes_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
    auto rng = make_stream(seed, "class-split");
    shuffle_vec(order, rng);
    train_.assign(order.begin(), order.begin() + spec.n_train);
    val_.assign(order.begin() + spec.n_train, order.begin() + spec.n_train + spec.n_val);
    test_.assign(order.begin() + spec.n_train + spec.n_val,
                 order.begin() + spec.n_train + spec.n_val + spec.n_test);
}

const CharacterClass& CharacterStore::cls(std::int64_t id) const {
    if (id < 0 || id >= n_classes())
        throw ContractError("CharacterStore: class id " + std::to_string(id) +
                            " out of range");
    return classes_[static_cast<std::size_t>(id)];
}

const std::vector<std::int64_t>& CharacterStore::split_ids(SplitName split) const {
    switch (split) {
        case SplitName::train: return train_;
        case SplitName::val: return val_;
        case SplitName::test: return test_;
    }
    throw ContractError("CharacterStore: unknown split");
}

std::uint64_t CharacterStore::assignment_hash() const {
    std::string blob;
    for (SplitName s : {SplitName::train, SplitName::val, SplitName::test}) {
        blob += split_name(s);
        blob += ':';
        for (auto id : split_ids(s)) {
            blob += classes_[static_cast<std::size_t>(id)].name;
            blob += ';';
        }
    }
    return fnv1a64(blob);
}

std::int64_t CharacterStore::n_fixed_groups(SplitName split, std::int64_t n_way) const {
    if (n_way < 1) throw ConfigError("n_fixed_groups: n_way must be >= 1");
    return static_cast<std::int64_t>(split_ids(split).size()) / n_way;
}

std::vector<std::int64_t> CharacterStore::fixed_group(SplitName split, std::int64_t n_way,
                                                      std::int64_t group) const {
    const auto& ids = split_ids(split);
    if (group < 0 || group >= n_fixed_groups(split, n_way))
        throw ContractError("fixed_group: group " + std::to_string(group) +
                            " out of range for split '" + split_name(split) + "'");
    return {ids.begin() + group * n_way, ids.begin() + (group + 1) * n_way};
}

CharacterStore load_omniglot(const std::string& root, SplitSpec spec, std::uint64_t seed) {
    if (!fs::is_directory(root))
        throw IoError("load_omniglot: '" + root + "' is not a directory");

    // Deterministic scan order: sorted alphabets, characters, images.
    std::vector<fs::path> alphabets;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) alphabets.push_back(e.path());
    std::sort(alphabets.begin(), alphabets.end());

    std::vector<CharacterClass> classes;
    for (const auto& alphabet : alphabets) {
        std::vector<fs::path> chars;
        for (const auto& e : fs::directory_iterator(alphabet))
            if (e.is_directory()) chars.push_back(e.path());
        std::sort(chars.begin(), chars.end());
        for (const auto& character : chars) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(character))
                if (e.is_regular_file() && e.path().extension() == ".png")
                    files.push_back(e.path());
            std::sort(files.begin(), files.end());
            if (files.empty())
                throw IoError("load_omniglot: class directory '" + character.string() +
                              "' holds no .png images");
            CharacterClass cc;
            cc.name = alphabet.filename().string() + "/" + character.filename().string();
            for (const auto& f : files) {
                GrayImage img = read_png_gray(f.string());
                img = resize_bilinear(img, kImageSide, kImageSide);
                // dark-on-light originals become strokes ~1 on background ~0
                for (auto& p : img.pixels) p = 1.0 - p;
                cc.images.push_back(std::move(img.pixels));
            }
            classes.push_back(std::move(cc));
        }
    }
    if (classes.empty())
        throw IoError("load_omniglot: no alphabet/character/*.png classes under '" + root + "'");
    return CharacterStore(std::move(classes), spec, seed);
}

namespace {

struct Drawn {
    std::int64_t label;
    std::int64_t class_id;
    std::int64_t image;
};

Tensor stack_images(const CharacterStore& store, const std::vector<Drawn>& rows) {
    const auto n = static_cast<std::int64_t>(rows.size());
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(n * kImageSide * kImageSide));
    for (const auto& r : rows) {
        const auto& img = store.cls(r.class_id).images[static_cast<std::size_t>(r.image)];
        vals.insert(vals.end(), img.begin(), img.end());
    }
    return Tensor::from_values({n, 1, kImageSide, kImageSide}, std::move(vals));
}

Tensor one_hot_labels(const std::vector<Drawn>& rows, std::int64_t n_way) {
    const auto n = static_cast<std::int64_t>(rows.size());
    std::vector<double> vals(static_cast<std::size_t>(n * n_way), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        vals[static_cast<std::size_t>(i * n_way + rows[static_cast<std::size_t>(i)].label)] =
            1.0;
    return Tensor::from_values({n, n_way}, std::move(vals));
}

}  // namespace

Episode sample_episode(const CharacterStore& store, SplitName split, std::int64_t n_way,
                       std::int64_t k_shot, std::int64_t q_queries, LabelMode mode,
                       std::mt19937_64& rng) {
    if (n_way < 1 || k_shot < 1 || q_queries < 1)
        throw ConfigError("sample_episode: n_way, k_shot, q_queries must be >= 1");

    std::vector<std::int64_t> chosen;  // label index -> class id
    if (mode == LabelMode::Fixed) {
        const std::int64_t groups = store.n_fixed_groups(split, n_way);
        if (groups < 1)
            throw SamplingError("sample_episode: split '" + std::string(split_name(split)) +
                                "' has " + std::to_string(store.split_ids(split).size()) +
                                " classes, fewer than n_way=" + std::to_string(n_way));
        chosen = store.fixed_group(split, n_way,
                                   static_cast<std::int64_t>(
                                       uniform_below(rng, static_cast<std::uint64_t>(groups))));
    } else {
        const auto& ids = store.split_ids(split);
        if (static_cast<std::int64_t>(ids.size()) < n_way)
            throw SamplingError("sample_episode: split '" + std::string(split_name(split)) +
                                "' has " + std::to_string(ids.size()) +
                                " classes, fewer than n_way=" + std::to_string(n_way));
        // Position in the partial shuffle is the (uniformly random) label.
        for (auto pick : sample_without_replacement(
                 static_cast<std::int64_t>(ids.size()), n_way, rng))
            chosen.push_back(ids[static_cast<std::size_t>(pick)]);
    }

    std::vector<Drawn> support, query;
    for (std::int64_t label = 0; label < n_way; ++label) {
        const std::int64_t cid = chosen[static_cast<std::size_t>(label)];
        const auto n_images = static_cast<std::int64_t>(store.cls(cid).images.size());
        if (n_images < k_shot + q_queries)
            throw SamplingError("sample_episode: class '" + store.cls(cid).name + "' has " +
                                std::to_string(n_images) + " images, needs " +
                                std::to_string(k_shot + q_queries));
        auto picks = sample_without_replacement(n_images, k_shot + q_queries, rng);
        for (std::int64_t j = 0; j < k_shot; ++j)
            support.push_back({label, cid, picks[static_cast<std::size_t>(j)]});
        for (std::int64_t j = 0; j < q_queries; ++j)
            query.push_back({label, cid, picks[static_cast<std::size_t>(k_shot + j)]});
    }
    shuffle_vec(support, rng);
    shuffle_vec(query, rng);

    Episode ep;
    ep.support_x = stack_images(store, support);
    ep.support_y = one_hot_labels(support, n_way);
    ep.query_x = stack_images(store, query);
    ep.query_y = one_hot_labels(query, n_way);
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.q_queries = q_queries;
    ep.mode = mode;
    ep.class_ids = std::move(chosen);
    return ep;
}

// --- regression family ------------------------------------------------------

std::int64_t RegressionTaskSpec::n_tasks() const {
    if (interval_width <= 0.0 || x_max <= x_min)
        throw ConfigError("RegressionTaskSpec: empty input range");
    return static_cast<std::int64_t>((x_max - x_min) / interval_width + 1e-9);
}

RegressionTaskSpec::Task RegressionTaskSpec::task(std::int64_t task_id) const {
    if (task_id < 0 || task_id >= n_tasks())
        throw ContractError("RegressionTaskSpec: task id " + std::to_string(task_id) +
                            " outside [0," + std::to_string(n_tasks()) + ")");
    auto rng = make_stream(seed, "regression-task-" + std::to_string(task_id));
    std::uniform_real_distribution<double> ua(amp_min, amp_max), up(phase_min, phase_max);
    Task t;
    t.amplitude = ua(rng);
    t.phase = up(rng);
    t.x_lo = x_min + static_cast<double>(task_id) * interval_width;
    t.x_hi = t.x_lo + interval_width;
    return t;
}

Episode sample_regression_episode(const RegressionTaskSpec& spec, std::int64_t task_id,
                                  std::int64_t k_shot, std::int64_t q_queries, double noise_sd,
                                  std::mt19937_64& rng) {
    if (k_shot < 1 || q_queries < 1)
        throw ConfigError("sample_regression_episode: k_shot and q_queries must be >= 1");
    if (noise_sd < 0.0)
        throw ConfigError("sample_regression_episode: noise_sd must be >= 0");
    const auto t = spec.task(task_id);
    std::uniform_real_distribution<double> ux(t.x_lo, t.x_hi);
    std::normal_distribution<double> noise(0.0, noise_sd);
    auto draw = [&](std::int64_t n, std::vector<double>& xs, std::vector<double>& ys) {
        for (std::int64_t i = 0; i < n; ++i) {
            const double x = ux(rng);
            double y = t.amplitude * std::sin(x + t.phase);
            if (noise_sd > 0.0) y += noise(rng);
            xs.push_back(x);
            ys.push_back(y);
        }
    };
    std::vector<double> sx, sy, qx, qy;
    draw(k_shot, sx, sy);
    draw(q_queries, qx, qy);

    Episode ep;
    ep.support_x = Tensor::from_values({k_shot, 1}, std::move(sx));
    ep.support_y = Tensor::from_values({k_shot, 1}, std::move(sy));
    ep.query_x = Tensor::from_values({q_queries, 1}, std::move(qx));
    ep.query_y = Tensor::from_values({q_queries, 1}, std::move(qy));
    ep.n_way = 1;
    ep.k_shot = k_shot;
    ep.q_queries = q_queries;
    ep.mode = LabelMode::Shuffled;
    ep.regression = true;
    ep.class_ids = {task_id};
    return ep;
}

// --- episode dump ----------------------------------------------------------

namespace {

void write_tensor_header(std::ostream& os, const char* name, const Tensor& t) {
    os << "tensor " << name << " " << t.shape().size();
    for (auto d : t.shape()) os << " " << d;
    os << "\n";
}

void write_tensor_payload(std::ostream& os, const Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void dump_episode(const Episode& ep, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("dump_episode: cannot open '" + path + "' for writing");
    os << "MREPI1\n";
    os << "meta " << ep.n_way << " " << ep.k_shot << " " << ep.q_queries << " "
       << label_mode_name(ep.mode) << " " << (ep.regression ? 1 : 0) << "\n";
    os << "classes " << ep.class_ids.size();
    for (auto id : ep.class_ids) os << " " << id;
    os << "\n";
    write_tensor_header(os, "support_x", ep.support_x);
    write_tensor_header(os, "support_y", ep.support_y);
    write_tensor_header(os, "query_x", ep.query_x);
    write_tensor_header(os, "query_y", ep.query_y);
    os << "payload\n";
    write_tensor_payload(os, ep.support_x);
    write_tensor_payload(os, ep.support_y);
    write_tensor_payload(os, ep.query_x);
    write_tensor_payload(os, ep.query_y);
    if (!os) throw IoError("dump_episode: write failed for '" + path + "'");
}

Episode load_episode(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_episode: cannot open '" + path + "'");
    std::string line;
    auto next_line = [&]() -> std::string {
        if (!std::getline(is, line))
            throw IoError("load_episode: truncated header in '" + path + "'");
        return line;
    };
    if (next_line() != "MREPI1")
        throw IoError("load_episode: '" + path + "' is not an episode dump (bad magic)");

    Episode ep;
    {
        std::istringstream meta(next_line());
        std::string tag, mode;
        int regression = 0;
        meta >> tag >> ep.n_way >> ep.k_shot >> ep.q_queries >> mode >> regression;
        if (!meta || tag != "meta")
            throw IoError("load_episode: malformed meta line in '" + path + "'");
        ep.mode = label_mode_from_name(mode);
        ep.regression = regression != 0;
    }
    {
        std::istringstream cl(next_line());
        std::string tag;
        std::size_t n = 0;
        cl >> tag >> n;
        if (!cl || tag != "classes")
            throw IoError("load_episode: malformed classes line in '" + path + "'");
        ep.class_ids.resize(n);
        for (auto& id : ep.class_ids) cl >> id;
        if (!cl) throw IoError("load_episode: malformed classes line in '" + path + "'");
    }
    std::vector<Shape> shapes;
    for (const char* want : {"support_x", "support_y", "query_x", "query_y"}) {
        std::istringstream th(next_line());
        std::string tag, name;
        std::size_t rank = 0;
        th >> tag >> name >> rank;
        if (!th || tag != "tensor" || name != want)
            throw IoError("load_episode: expected tensor header for '" + std::string(want) +
                          "' in '" + path + "'");
        Shape s(rank);
        for (auto& d : s) th >> d;
        if (!th) throw IoError("load_episode: malformed tensor header in '" + path + "'");
        shapes.push_back(std::move(s));
    }
    if (next_line() != "payload")
        throw IoError("load_episode: missing payload marker in '" + path + "'");

    auto read_payload = [&](Shape shape) {
        std::vector<double> vals(static_cast<std::size_t>(numel(shape)));
        is.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
        if (!is) throw IoError("load_episode: truncated payload in '" + path + "'");
        return Tensor::from_values(std::move(shape), std::move(vals));
    };
    ep.support_x = read_payload(shapes[0]);
    ep.support_y = read_payload(shapes[1]);
    ep.query_x = read_payload(shapes[2]);
    ep.query_y = read_payload(shapes[3]);
    return ep;
}

// --- fixture dataset --------------------------------------------------------

void make_fixture_dataset(const std::string& root, std::int64_t n_classes,
                          std::int64_t images_per_class, std::uint64_t seed) {
    if (n_classes < 1 || images_per_class < 1)
        throw ConfigError("make_fixture_dataset: class and image counts must be >= 1");
    auto rng = make_stream(seed, "fixture-glyphs");
    std::set<std::uint16_t> used;

    constexpr int kCell = 4;   // glyphs are 4x4 ink patterns
    constexpr int kScale = 7;  // upsampled to 28x28
    std::normal_distribution<double> pixel_noise(0.0, 0.15);

    for (std::int64_t c = 0; c < n_classes; ++c) {
        // distinct, moderately dense ink pattern per class
        std::uint16_t pattern = 0;
        for (;;) {
            pattern = static_cast<std::uint16_t>(rng() & 0xffff);
            const int ink = std::popcount(static_cast<unsigned>(pattern));
            if (ink >= 4 && ink <= 12 && !used.count(pattern)) break;
        }
        used.insert(pattern);

        char alpha[32], chr[32];
        std::snprintf(alpha, sizeof(alpha), "alphabet%03lld",
                      static_cast<long long>(c / 20));
        std::snprintf(chr, sizeof(chr), "character%04lld", static_cast<long long>(c));
        const fs::path dir = fs::path(root) / alpha / chr;
        fs::create_directories(dir);

        for (std::int64_t i = 0; i < images_per_class; ++i) {
            const int tx = static_cast<int>(uniform_below(rng, 7)) - 3;
            const int ty = static_cast<int>(uniform_below(rng, 7)) - 3;
            // Corrupt two cells per drawing: most of the pattern survives, so
            // the class stays recognizable, but any single image is an
            // unreliable template.  Few-shot comparison has to be learned,
            // not read off the pixels.
            std::uint16_t glyph = pattern;
            for (int f = 0; f < 2; ++f)
                glyph = static_cast<std::uint16_t>(glyph ^ (1u << uniform_below(rng, 16)));
            // dark strokes on a light background, as in the real scans
            std::vector<double> img(kImageSide * kImageSide, 1.0);
            for (int y = 0; y < kImageSide; ++y)
                for (int x = 0; x < kImageSide; ++x) {
                    const int sy = y - ty, sx = x - tx;
                    if (sy < 0 || sy >= kCell * kScale || sx < 0 || sx >= kCell * kScale)
                        continue;
                    const int cell = (sy / kScale) * kCell + (sx / kScale);
                    if (glyph & (1u << cell)) img[y * kImageSide + x] = 0.0;
                }
            for (auto& p : img) p = std::clamp(p + pixel_noise(rng), 0.0, 1.0);
            char name[32];
            std::snprintf(name, sizeof(name), "img%03lld.png", static_cast<long long>(i));
            write_png_gray((dir / name).string(), kImageSide, kImageSide, img);
        }
    }
}

}  // namespace metareg
