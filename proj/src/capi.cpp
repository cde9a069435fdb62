#include "metareg.h"

#include <cstring>
#include <exception>
#include <string>
#include <vector>

#include "metareg/config.hpp"
#include "metareg/episodes.hpp"
#include "metareg/errors.hpp"
#include "metareg/fetch.hpp"
#include "metareg/gradcheck.hpp"
#include "metareg/metrics.hpp"
#include "metareg/runner.hpp"

using namespace metareg;

struct mr_config {
    ConfigMap map;
};

namespace {

thread_local std::string t_last_error;

mr_status classify(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return MR_NUMERIC_ERROR;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const IoError*>(&e) || dynamic_cast<const SamplingError*>(&e))
        return MR_CONFIG_ERROR;
    return MR_ERROR;
}

template <typename Fn>
mr_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return MR_OK;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return classify(e);
    } catch (...) {
        t_last_error = "unknown error";
        return MR_ERROR;
    }
}

mr_status bad_argument(const char* what) {
    t_last_error = std::string("null argument: ") + what;
    return MR_ERROR;
}

mr_metrics_row to_row(const MetricsRecord& r) {
    mr_metrics_row row;
    row.iteration = r.iteration;
    row.task_loss = r.task_loss;
    row.reg_loss = r.reg_loss;
    row.total_loss = r.total_loss;
    row.train_acc = r.train_acc;
    row.val_pre_acc = r.val_pre_acc;
    row.val_post_acc = r.val_post_acc;
    row.summary_ratio = r.summary_ratio;
    row.mean_phi_distance = r.mean_phi_distance;
    row.wall_ms = r.wall_ms;
    row.seed = r.seed;
    return row;
}

MetricsSink wrap_progress(mr_progress_fn progress, void* user) {
    if (!progress) return {};
    return [progress, user](const MetricsRecord& r) {
        const mr_metrics_row row = to_row(r);
        progress(&row, user);
    };
}

}  // namespace

extern "C" {

const char* mr_version(void) { return kCodeVersion; }

const char* mr_last_error(void) { return t_last_error.c_str(); }

mr_status mr_config_new(mr_config** out) {
    if (!out) return bad_argument("out");
    return guarded([&] { *out = new mr_config{}; });
}

mr_status mr_config_load(const char* path, mr_config** out) {
    if (!path) return bad_argument("path");
    if (!out) return bad_argument("out");
    return guarded([&] { *out = new mr_config{ConfigMap::from_file(path)}; });
}

mr_status mr_config_parse(const char* text, mr_config** out) {
    if (!text) return bad_argument("text");
    if (!out) return bad_argument("out");
    return guarded([&] { *out = new mr_config{ConfigMap::from_string(text)}; });
}

mr_status mr_config_set(mr_config* cfg, const char* key, const char* value) {
    if (!cfg) return bad_argument("cfg");
    if (!key) return bad_argument("key");
    if (!value) return bad_argument("value");
    return guarded([&] { cfg->map.set(key, value); });
}

mr_status mr_config_check(const mr_config* cfg) {
    if (!cfg) return bad_argument("cfg");
    return guarded([&] { resolve_experiment(cfg->map); });
}

void mr_config_free(mr_config* cfg) { delete cfg; }

mr_status mr_train(const mr_config* cfg, const char* out_dir, mr_progress_fn progress,
                   void* user) {
    if (!cfg) return bad_argument("cfg");
    return guarded([&] {
        const auto resolved = resolve_experiment(cfg->map);
        run_train(resolved, out_dir ? out_dir : "", wrap_progress(progress, user));
    });
}

mr_status mr_train_from_manifest(const char* manifest_path, const char* out_dir,
                                 mr_progress_fn progress, void* user) {
    if (!manifest_path) return bad_argument("manifest_path");
    if (!out_dir) return bad_argument("out_dir");
    return guarded([&] {
        run_train_from_manifest(manifest_path, out_dir, wrap_progress(progress, user));
    });
}

mr_status mr_eval(const char* checkpoint_path, const char* split, int64_t episodes,
                  uint64_t seed, mr_eval_result* out) {
    if (!checkpoint_path) return bad_argument("checkpoint_path");
    if (!out) return bad_argument("out");
    return guarded([&] {
        EvalRequest req;
        req.checkpoint = checkpoint_path;
        req.split = split ? split_from_name(split) : SplitName::val;
        req.n_episodes = episodes;
        req.seed = seed;
        const EvalOutput r = run_eval(req);
        out->pre_mean = r.pre_acc;
        out->pre_std = r.pre_std;
        out->post_mean = r.post_acc;
        out->post_std = r.post_std;
        out->adapted = r.adapted ? 1 : 0;
        out->regression = r.regression ? 1 : 0;
    });
}

mr_status mr_gradcheck(mr_gradcheck_fn item, void* user) {
    bool all_ok = true;
    const mr_status st = guarded([&] {
        for (const auto& it : gradcheck_report()) {
            if (!it.ok()) all_ok = false;
            if (item) item(it.name.c_str(), it.max_rel_error, it.threshold, it.ok() ? 1 : 0, user);
        }
    });
    if (st != MR_OK) return st;
    if (!all_ok) {
        t_last_error = "gradient check exceeded its error threshold";
        return MR_THRESHOLD_ERROR;
    }
    return MR_OK;
}

mr_status mr_render_curves(const char* csv_path, const char* columns, const char* out_path) {
    if (!csv_path) return bad_argument("csv_path");
    if (!out_path) return bad_argument("out_path");
    return guarded([&] {
        std::vector<std::string> cols;
        const std::string joined = columns && *columns ? columns : "task_loss,train_acc";
        std::size_t start = 0;
        while (start <= joined.size()) {
            const auto comma = joined.find(',', start);
            const auto end = comma == std::string::npos ? joined.size() : comma;
            if (end > start) cols.push_back(joined.substr(start, end - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        render_curves(csv_path, cols, out_path);
    });
}

mr_status mr_make_fixture(const char* root, int64_t n_classes, int64_t images_per_class,
                          uint64_t seed) {
    if (!root) return bad_argument("root");
    return guarded([&] { make_fixture_dataset(root, n_classes, images_per_class, seed); });
}

mr_status mr_fetch_omniglot(const char* root, const char* background_url,
                            const char* evaluation_url, const char* background_sha256,
                            const char* evaluation_sha256, char* out_background_sha256,
                            char* out_evaluation_sha256) {
    if (!root) return bad_argument("root");
    if (!background_url) return bad_argument("background_url");
    if (!evaluation_url) return bad_argument("evaluation_url");
    return guarded([&] {
        FetchPlan plan;
        plan.root = root;
        plan.background = {background_url, background_sha256 ? background_sha256 : ""};
        plan.evaluation = {evaluation_url, evaluation_sha256 ? evaluation_sha256 : ""};
        const FetchReport report = fetch_omniglot(plan);
        if (out_background_sha256) {
            std::strncpy(out_background_sha256, report.background_sha256.c_str(), 64);
            out_background_sha256[64] = '\0';
        }
        if (out_evaluation_sha256) {
            std::strncpy(out_evaluation_sha256, report.evaluation_sha256.c_str(), 64);
            out_evaluation_sha256[64] = '\0';
        }
    });
}

}  // extern "C"
