// Command-line front end.  All real work happens behind the C interface in
// metareg.h; this file only parses arguments, prints results, and maps
// statuses to exit codes (0 ok, 2 config, 3 numeric abort, 4 failed check).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metareg.h"

namespace {

int fail(mr_status st) {
    std::fprintf(stderr, "error: %s\n", mr_last_error());
    return static_cast<int>(st);
}

// --set VALUE arguments arrive as "key=value"; the value keeps the user's
// spelling all the way into the manifest.
bool split_override(const std::string& kv, std::string& key, std::string& value) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) return false;
    key = kv.substr(0, eq);
    value = kv.substr(eq + 1);
    return true;
}

mr_status apply_overrides(mr_config* cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        std::string key, value;
        if (!split_override(kv, key, value)) {
            std::fprintf(stderr, "error: --set wants key=value, got '%s'\n", kv.c_str());
            return MR_CONFIG_ERROR;
        }
        const mr_status st = mr_config_set(cfg, key.c_str(), value.c_str());
        if (st != MR_OK) return st;
    }
    return MR_OK;
}

struct ProgressPrinter {
    std::int64_t every = 50;
    mr_metrics_row last{};
    bool any = false;
};

void print_row(const mr_metrics_row* row, void* user) {
    auto* p = static_cast<ProgressPrinter*>(user);
    p->last = *row;
    p->any = true;
    if (p->every > 0 && row->iteration % p->every == 0)
        std::printf("iter %6lld  task %.4f  reg %.4f  acc %.3f  ratio %.3f  val %.3f/%.3f\n",
                    static_cast<long long>(row->iteration), row->task_loss, row->reg_loss,
                    row->train_acc, row->summary_ratio, row->val_pre_acc, row->val_post_acc);
}

void print_summary(const ProgressPrinter& p) {
    if (!p.any) return;
    std::printf("final iter %lld  task %.4f  train acc %.3f  val %.3f/%.3f\n",
                static_cast<long long>(p.last.iteration), p.last.task_loss, p.last.train_acc,
                p.last.val_pre_acc, p.last.val_post_acc);
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const auto comma = csv.find(',', start);
        const auto end = comma == std::string::npos ? csv.size() : comma;
        if (end > start) out.push_back(csv.substr(start, end - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parses_as_double(const std::string& s) {
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end != s.c_str() && *end == '\0';
}

int run_train_cmd(const std::string& config_path, const std::string& manifest_path,
                  const std::vector<std::string>& sets, const std::string& out_dir,
                  std::int64_t log_every) {
    ProgressPrinter progress;
    progress.every = log_every;
    mr_status st = MR_OK;
    if (!manifest_path.empty()) {
        if (!sets.empty()) {
            std::fprintf(stderr,
                         "error: --set does not apply to a manifest replay; edit a config "
                         "instead\n");
            return MR_CONFIG_ERROR;
        }
        if (out_dir.empty()) {
            std::fprintf(stderr, "error: --manifest needs --out\n");
            return MR_CONFIG_ERROR;
        }
        st = mr_train_from_manifest(manifest_path.c_str(), out_dir.c_str(), print_row,
                                    &progress);
    } else {
        mr_config* cfg = nullptr;
        st = mr_config_load(config_path.c_str(), &cfg);
        if (st == MR_OK) st = apply_overrides(cfg, sets);
        if (st == MR_OK)
            st = mr_train(cfg, out_dir.empty() ? nullptr : out_dir.c_str(), print_row,
                          &progress);
        mr_config_free(cfg);
    }
    if (st != MR_OK) return fail(st);
    print_summary(progress);
    return 0;
}

int run_eval_cmd(const std::string& checkpoint, const std::string& split,
                 std::int64_t episodes, std::uint64_t seed) {
    mr_eval_result r{};
    const mr_status st = mr_eval(checkpoint.c_str(), split.c_str(), episodes, seed, &r);
    if (st != MR_OK) return fail(st);
    const char* metric = r.regression ? "mse" : "accuracy";
    std::printf("%s on %s over %lld episodes (seed %llu)\n", metric, split.c_str(),
                static_cast<long long>(episodes), static_cast<unsigned long long>(seed));
    std::printf("  before adaptation: %.4f +/- %.4f\n", r.pre_mean, r.pre_std);
    if (r.adapted)
        std::printf("  after adaptation:  %.4f +/- %.4f\n", r.post_mean, r.post_std);
    else
        std::printf("  (no test-time adaptation for this learner)\n");
    return 0;
}

struct SweepCell {
    std::string lambda, eta, run_dir;
    mr_eval_result result{};
    bool ok = false;
    std::string error;
};

int run_sweep_cmd(const std::string& config_path, const std::vector<std::string>& sets,
                  const std::string& lambdas_csv, const std::string& etas_csv,
                  const std::string& out_dir, const std::string& split,
                  std::int64_t episodes, std::uint64_t seed, std::int64_t log_every) {
    const auto lambdas = split_list(lambdas_csv);
    const auto etas = split_list(etas_csv);
    if (lambdas.empty() || etas.empty()) {
        std::fprintf(stderr, "error: --lambda and --eta each want a non-empty list\n");
        return MR_CONFIG_ERROR;
    }
    for (const auto& v : lambdas)
        if (!parses_as_double(v)) {
            std::fprintf(stderr, "error: --lambda entry '%s' is not a number\n", v.c_str());
            return MR_CONFIG_ERROR;
        }
    for (const auto& v : etas)
        if (!parses_as_double(v)) {
            std::fprintf(stderr, "error: --eta entry '%s' is not a number\n", v.c_str());
            return MR_CONFIG_ERROR;
        }

    std::vector<SweepCell> cells;
    for (const auto& lam : lambdas) {
        for (const auto& eta : etas) {
            SweepCell cell;
            cell.lambda = lam;
            cell.eta = eta;
            cell.run_dir = out_dir + "/lam" + lam + "_eta" + eta;
            std::printf("== cell lambda=%s eta=%s -> %s\n", lam.c_str(), eta.c_str(),
                        cell.run_dir.c_str());

            mr_config* cfg = nullptr;
            ProgressPrinter progress;
            progress.every = log_every;
            mr_status st = mr_config_load(config_path.c_str(), &cfg);
            if (st == MR_OK) st = apply_overrides(cfg, sets);
            if (st == MR_OK) st = mr_config_set(cfg, "mer.lambda", lam.c_str());
            if (st == MR_OK) st = mr_config_set(cfg, "mer.eta", eta.c_str());
            if (st == MR_OK) st = mr_train(cfg, cell.run_dir.c_str(), print_row, &progress);
            mr_config_free(cfg);
            if (st == MR_OK) {
                const std::string ckpt = cell.run_dir + "/checkpoint.mrckpt";
                st = mr_eval(ckpt.c_str(), split.c_str(), episodes, seed, &cell.result);
            }
            cell.ok = st == MR_OK;
            if (!cell.ok) {
                cell.error = mr_last_error();
                std::fprintf(stderr, "cell lambda=%s eta=%s failed: %s\n", lam.c_str(),
                             eta.c_str(), cell.error.c_str());
            }
            cells.push_back(cell);
        }
    }

    // best score first; failed cells close the table
    std::stable_sort(cells.begin(), cells.end(), [](const SweepCell& a, const SweepCell& b) {
        if (a.ok != b.ok) return a.ok;
        const bool lower_is_better = a.ok && a.result.regression;
        return lower_is_better ? a.result.post_mean < b.result.post_mean
                               : a.result.post_mean > b.result.post_mean;
    });

    std::printf("\n| lambda | eta | pre | post | run |\n|---|---|---|---|---|\n");
    std::ofstream csv(out_dir + "/sweep.csv");
    csv << "lambda,eta,pre_mean,pre_std,post_mean,post_std,status,run_dir\n";
    for (const auto& c : cells) {
        if (c.ok) {
            std::printf("| %s | %s | %.4f | %.4f | %s |\n", c.lambda.c_str(), c.eta.c_str(),
                        c.result.pre_mean, c.result.post_mean, c.run_dir.c_str());
            csv << c.lambda << ',' << c.eta << ',' << c.result.pre_mean << ','
                << c.result.pre_std << ',' << c.result.post_mean << ',' << c.result.post_std
                << ",ok," << c.run_dir << '\n';
        } else {
            std::printf("| %s | %s | failed | failed | %s |\n", c.lambda.c_str(),
                        c.eta.c_str(), c.run_dir.c_str());
            std::string reason = c.error;
            std::replace(reason.begin(), reason.end(), ',', ';');
            std::replace(reason.begin(), reason.end(), '\n', ' ');
            csv << c.lambda << ',' << c.eta << ",,,,," << reason << ',' << c.run_dir << '\n';
        }
    }
    if (!csv) {
        std::fprintf(stderr, "error: cannot write %s/sweep.csv\n", out_dir.c_str());
        return MR_ERROR;
    }
    const auto failed =
        std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return !c.ok; });
    if (failed > 0) {
        std::fprintf(stderr, "%lld of %zu cells failed\n", static_cast<long long>(failed),
                     cells.size());
        return MR_ERROR;
    }
    return 0;
}

int run_gradcheck_cmd() {
    const auto print_item = [](const char* name, double err, double threshold, int ok,
                               void*) {
        std::printf("%s  %-55s max rel err %.3e  (threshold %.0e)\n", ok ? "PASS" : "FAIL",
                    name, err, threshold);
    };
    const mr_status st = mr_gradcheck(print_item, nullptr);
    if (st == MR_OK) {
        std::printf("all gradient checks passed\n");
        return 0;
    }
    return fail(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot meta-learning experiments: black-box and optimization-based "
                 "learners with mutual-exclusiveness regularization"};
    app.require_subcommand(1);

    // train ------------------------------------------------------------------
    std::string config_path, manifest_path, out_dir;
    std::vector<std::string> sets;
    std::int64_t log_every = 50;
    auto* train = app.add_subcommand("train", "Train a learner into a run directory");
    auto* cfg_opt = train->add_option("--config", config_path, "Experiment config file");
    train->add_option("--manifest", manifest_path, "Replay a recorded run bit for bit")
        ->excludes(cfg_opt);
    train->add_option("--set", sets, "Override key=value (repeatable)");
    train->add_option("--out", out_dir, "Fresh run directory");
    train->add_option("--log-every", log_every, "Progress print period, 0 silences");

    // eval -------------------------------------------------------------------
    std::string checkpoint, split = "val";
    std::int64_t episodes = 600;
    std::uint64_t seed = 0;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on held-out episodes");
    eval->add_option("--checkpoint", checkpoint, "checkpoint.mrckpt from a run")->required();
    eval->add_option("--split", split, "train, val, or test");
    eval->add_option("--episodes", episodes, "Episode count");
    eval->add_option("--seed", seed, "Episode stream seed");

    // sweep ------------------------------------------------------------------
    std::string sw_config, sw_out, sw_lambdas, sw_etas, sw_split = "val";
    std::vector<std::string> sw_sets;
    std::int64_t sw_episodes = 200, sw_log_every = 0;
    std::uint64_t sw_seed = 0;
    auto* sweep = app.add_subcommand(
        "sweep", "Train and score a (lambda, eta) grid, one run directory per cell");
    sweep->add_option("--config", sw_config, "Base experiment config")->required();
    sweep->add_option("--set", sw_sets, "Override key=value applied to every cell");
    sweep->add_option("--lambda", sw_lambdas, "Comma-separated regularizer weights")
        ->required();
    sweep->add_option("--eta", sw_etas, "Comma-separated ratio targets")->required();
    sweep->add_option("--out", sw_out, "Parent directory for cell runs")->required();
    sweep->add_option("--split", sw_split, "Evaluation split");
    sweep->add_option("--episodes", sw_episodes, "Evaluation episode count");
    sweep->add_option("--seed", sw_seed, "Evaluation episode seed");
    sweep->add_option("--log-every", sw_log_every, "Per-cell progress period, 0 silences");

    // check ------------------------------------------------------------------
    std::string ck_config;
    std::vector<std::string> ck_sets;
    auto* check = app.add_subcommand("check", "Validate a config without training");
    check->add_option("--config", ck_config, "Experiment config file")->required();
    check->add_option("--set", ck_sets, "Override key=value (repeatable)");

    // gradcheck --------------------------------------------------------------
    app.add_subcommand("gradcheck",
                       "Finite-difference check of every primitive and both learner losses");

    // fetch-omniglot ---------------------------------------------------------
    std::string fo_root, fo_bg_sha, fo_ev_sha;
    std::string fo_bg_url =
        "https://github.com/brendenlake/omniglot/raw/master/python/images_background.zip";
    std::string fo_ev_url =
        "https://github.com/brendenlake/omniglot/raw/master/python/images_evaluation.zip";
    auto* fetch = app.add_subcommand(
        "fetch-omniglot", "Download and unpack the handwritten-character corpus");
    fetch->add_option("--root", fo_root,
                      "Dataset root (default: METAREG_DATA_ROOT from the environment)");
    fetch->add_option("--background-url", fo_bg_url, "Archive URL, background half");
    fetch->add_option("--evaluation-url", fo_ev_url, "Archive URL, evaluation half");
    fetch->add_option("--background-sha256", fo_bg_sha, "Expected digest; empty skips");
    fetch->add_option("--evaluation-sha256", fo_ev_sha, "Expected digest; empty skips");

    // make-fixture -----------------------------------------------------------
    std::string fx_root;
    std::int64_t fx_classes = 30, fx_images = 20;
    std::uint64_t fx_seed = 0;
    auto* fixture = app.add_subcommand(
        "make-fixture", "Generate a small synthetic image corpus in the dataset layout");
    fixture->add_option("--root", fx_root, "Destination root")->required();
    fixture->add_option("--classes", fx_classes, "Class count");
    fixture->add_option("--images", fx_images, "Images per class");
    fixture->add_option("--seed", fx_seed, "Generator seed");

    // curves -----------------------------------------------------------------
    std::string cv_csv, cv_out, cv_columns;
    auto* curves = app.add_subcommand("curves", "Render training curves from a metrics.csv");
    curves->add_option("--csv", cv_csv, "metrics.csv from a run")->required();
    curves->add_option("--columns", cv_columns,
                       "Comma-separated metric names (default task_loss,train_acc)");
    curves->add_option("--out", cv_out, "Output SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return MR_CONFIG_ERROR;
    }

    if (train->parsed()) {
        if (config_path.empty() && manifest_path.empty()) {
            std::fprintf(stderr, "error: train wants --config or --manifest\n");
            return MR_CONFIG_ERROR;
        }
        return run_train_cmd(config_path, manifest_path, sets, out_dir, log_every);
    }
    if (eval->parsed()) return run_eval_cmd(checkpoint, split, episodes, seed);
    if (check->parsed()) {
        mr_config* cfg = nullptr;
        mr_status st = mr_config_load(ck_config.c_str(), &cfg);
        if (st == MR_OK) st = apply_overrides(cfg, ck_sets);
        if (st == MR_OK) st = mr_config_check(cfg);
        mr_config_free(cfg);
        if (st != MR_OK) return fail(st);
        std::printf("%s is a valid experiment config\n", ck_config.c_str());
        return 0;
    }
    if (sweep->parsed()) {
        std::filesystem::create_directories(sw_out);
        return run_sweep_cmd(sw_config, sw_sets, sw_lambdas, sw_etas, sw_out, sw_split,
                             sw_episodes, sw_seed, sw_log_every);
    }
    if (app.get_subcommand("gradcheck")->parsed()) return run_gradcheck_cmd();
    if (fetch->parsed()) {
        if (fo_root.empty()) {
            const char* env = std::getenv("METAREG_DATA_ROOT");
            if (!env || !*env) {
                std::fprintf(stderr,
                             "error: give --root or set METAREG_DATA_ROOT\n");
                return MR_CONFIG_ERROR;
            }
            fo_root = env;
        }
        char bg_digest[65] = {0}, ev_digest[65] = {0};
        const mr_status st = mr_fetch_omniglot(
            fo_root.c_str(), fo_bg_url.c_str(), fo_ev_url.c_str(),
            fo_bg_sha.empty() ? nullptr : fo_bg_sha.c_str(),
            fo_ev_sha.empty() ? nullptr : fo_ev_sha.c_str(), bg_digest, ev_digest);
        if (st != MR_OK) return fail(st);
        std::printf("background sha256 %s%s\n", bg_digest,
                    fo_bg_sha.empty() ? " (record this for verified fetches)" : " (verified)");
        std::printf("evaluation sha256 %s%s\n", ev_digest,
                    fo_ev_sha.empty() ? " (record this for verified fetches)" : " (verified)");
        std::printf("unpacked into %s\n", fo_root.c_str());
        return 0;
    }
    if (fixture->parsed()) {
        const mr_status st = mr_make_fixture(fx_root.c_str(), fx_classes, fx_images, fx_seed);
        if (st != MR_OK) return fail(st);
        std::printf("fixture dataset at %s (%lld classes x %lld images)\n", fx_root.c_str(),
                    static_cast<long long>(fx_classes), static_cast<long long>(fx_images));
        return 0;
    }
    if (curves->parsed()) {
        const mr_status st = mr_render_curves(
            cv_csv.c_str(), cv_columns.empty() ? nullptr : cv_columns.c_str(),
            cv_out.c_str());
        if (st != MR_OK) return fail(st);
        std::printf("wrote %s\n", cv_out.c_str());
        return 0;
    }
    return MR_ERROR;  // unreachable with require_subcommand(1)
}
