#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "metareg.h"

namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& tag) {
    const auto dir = fs::temp_directory_path() / ("metareg-capi-" + tag);
    fs::remove_all(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Owns an mr_config for the duration of a test.
struct Cfg {
    mr_config* p = nullptr;
    ~Cfg() { mr_config_free(p); }
};

constexpr const char* kTinyMann =
    "learner = mann\n"
    "dataset = fixture\n"
    "split.train = 10\nsplit.val = 5\nsplit.test = 5\n"
    "n_way = 2\n"
    "model.conv_filters = 2\nmodel.latent_dim = 3\nmodel.hidden_dim = 3\n"
    "batch = 2\niterations = 3\neval_every = 3\neval_episodes = 2\n"
    "seed = 2\n";

std::string fixture_root(const std::string& tag) {
    const std::string root = scratch("fixture-" + tag);
    REQUIRE(mr_make_fixture(root.c_str(), 20, 4, 1) == MR_OK);
    return root;
}

}  // namespace

TEST_CASE("version and error strings are always valid pointers") {
    REQUIRE(mr_version() != nullptr);
    CHECK(std::string(mr_version()).find("metareg") == 0);
    REQUIRE(mr_last_error() != nullptr);
}

TEST_CASE("config handles parse, override, and validate") {
    Cfg cfg;
    REQUIRE(mr_config_parse(kTinyMann, &cfg.p) == MR_OK);
    CHECK(mr_config_check(cfg.p) == MR_OK);
    CHECK(std::string(mr_last_error()).empty());

    REQUIRE(mr_config_set(cfg.p, "split.train", "1") == MR_OK);  // fewer classes than ways
    CHECK(mr_config_check(cfg.p) == MR_CONFIG_ERROR);
    CHECK(std::string(mr_last_error()).find("split.train") != std::string::npos);
    REQUIRE(mr_config_set(cfg.p, "split.train", "10") == MR_OK);
    CHECK(mr_config_check(cfg.p) == MR_OK);

    REQUIRE(mr_config_set(cfg.p, "mer.lamda", "1") == MR_OK);  // typo sticks out on check
    CHECK(mr_config_check(cfg.p) == MR_CONFIG_ERROR);
    CHECK(std::string(mr_last_error()).find("mer.lamda") != std::string::npos);

    mr_config* bad = nullptr;
    CHECK(mr_config_parse("no equals sign", &bad) == MR_CONFIG_ERROR);
    CHECK(bad == nullptr);
    CHECK(mr_config_load("/no/such/config.cfg", &bad) == MR_CONFIG_ERROR);
    CHECK(mr_config_set(nullptr, "k", "v") == MR_ERROR);
    CHECK(mr_config_parse(nullptr, &bad) == MR_ERROR);
}

TEST_CASE("training, replay, evaluation, and curves run through the c surface") {
    const std::string root = fixture_root("train");
    Cfg cfg;
    REQUIRE(mr_config_parse(kTinyMann, &cfg.p) == MR_OK);
    REQUIRE(mr_config_set(cfg.p, "data.root", root.c_str()) == MR_OK);

    const std::string dir = scratch("run");
    std::vector<mr_metrics_row> rows;
    const auto sink = [](const mr_metrics_row* row, void* user) {
        static_cast<std::vector<mr_metrics_row>*>(user)->push_back(*row);
    };
    REQUIRE(mr_train(cfg.p, dir.c_str(), sink, &rows) == MR_OK);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].iteration == 0);
    CHECK(rows[2].iteration == 2);
    CHECK(rows[2].val_post_acc == rows[2].val_pre_acc);  // mann does not adapt
    CHECK(fs::exists(dir + "/manifest.txt"));
    CHECK(fs::exists(dir + "/checkpoint.mrckpt"));

    // the run directory is single-use
    CHECK(mr_train(cfg.p, dir.c_str(), nullptr, nullptr) == MR_CONFIG_ERROR);

    // manifest replay reproduces the canonical csv byte for byte
    const std::string dir2 = scratch("replay");
    REQUIRE(mr_train_from_manifest((dir + "/manifest.txt").c_str(), dir2.c_str(), nullptr,
                                   nullptr) == MR_OK);
    CHECK(slurp(dir2 + "/metrics.csv") == slurp(dir + "/metrics.csv"));

    mr_eval_result a{}, b{};
    const std::string ckpt = dir + "/checkpoint.mrckpt";
    REQUIRE(mr_eval(ckpt.c_str(), "val", 4, 9, &a) == MR_OK);
    REQUIRE(mr_eval(ckpt.c_str(), nullptr, 4, 9, &b) == MR_OK);  // null split means val
    CHECK(a.pre_mean == b.pre_mean);
    CHECK(a.adapted == 0);
    CHECK(a.regression == 0);
    CHECK(a.pre_mean >= 0.0);
    CHECK(a.pre_mean <= 1.0);
    CHECK(mr_eval(ckpt.c_str(), "validation", 4, 9, &a) == MR_CONFIG_ERROR);
    CHECK(mr_eval("/no/such.mrckpt", "val", 4, 9, &a) == MR_CONFIG_ERROR);

    const std::string svg = dir + "/curves.svg";
    REQUIRE(mr_render_curves((dir + "/metrics.csv").c_str(), nullptr, svg.c_str()) == MR_OK);
    CHECK(fs::file_size(svg) > 0);
    CHECK(mr_render_curves((dir + "/metrics.csv").c_str(), "no_such_column",
                           svg.c_str()) == MR_CONFIG_ERROR);
}

TEST_CASE("a diverging run surfaces as a numeric failure with artifacts intact") {
    const std::string root = fixture_root("diverge");
    Cfg cfg;
    REQUIRE(mr_config_parse(
                "learner = maml\n"
                "dataset = fixture\n"
                "split.train = 10\nsplit.val = 5\nsplit.test = 5\n"
                "n_way = 2\nmodel.conv_filters = 2\n"
                "batch = 2\niterations = 8\neval_every = 0\n"
                "opt.inner_lr = 1e150\n"  // guarantees overflow inside adaptation
                "seed = 4\n",
                &cfg.p) == MR_OK);
    REQUIRE(mr_config_set(cfg.p, "data.root", root.c_str()) == MR_OK);

    const std::string dir = scratch("diverge-run");
    const mr_status st = mr_train(cfg.p, dir.c_str(), nullptr, nullptr);
    CHECK(st == MR_NUMERIC_ERROR);
    CHECK(std::string(mr_last_error()).find("finite") != std::string::npos);
    CHECK(fs::exists(dir + "/metrics.csv"));  // flushed before the abort surfaced
    CHECK(fs::exists(dir + "/checkpoint.mrckpt"));
}

TEST_CASE("the gradient battery reports every item as passing") {
    struct Tally {
        int items = 0;
        int failed = 0;
    } tally;
    const auto cb = [](const char* name, double err, double threshold, int ok, void* user) {
        auto* t = static_cast<Tally*>(user);
        ++t->items;
        if (!ok) ++t->failed;
        CHECK(name != nullptr);
        CHECK(err >= 0.0);
        CHECK(threshold > 0.0);
    };
    REQUIRE(mr_gradcheck(cb, &tally) == MR_OK);
    CHECK(tally.items >= 14);
    CHECK(tally.failed == 0);
}
