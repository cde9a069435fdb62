#pragma once

// Experiment runner: turns a resolved ExperimentConfig into a run directory
// holding a manifest, a canonical metrics CSV, a timing sidecar, and a final
// checkpoint.  The metrics CSV omits wall-clock times so a re-run from the
// manifest reproduces it byte for byte; timings live in timing.csv.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metareg/config.hpp"
#include "metareg/metrics.hpp"

namespace metareg {

inline constexpr const char* kCodeVersion = "metareg 0.1.0";

// Parameter snapshot with enough metadata (the resolved config) to rebuild
// the model and dataset it came from.
void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::map<std::string, std::string>& meta);
struct Checkpoint {
    ParamSet params;
    std::map<std::string, std::string> meta;
};
Checkpoint load_checkpoint(const std::string& path);

// data.root from the config, falling back to METAREG_DATA_ROOT.
std::string resolve_data_root(const ExperimentConfig& cfg);
CharacterStore build_store(const ExperimentConfig& cfg);

// Content hashes for the manifest: class names + image pixels for stores,
// the generating parameters for synthetic regression.
std::uint64_t dataset_checksum(const CharacterStore& store);
std::uint64_t dataset_checksum(const RegressionTaskSpec& spec);

struct RunResult {
    std::string run_dir;
    std::vector<MetricsRecord> records;
};

// Trains into `out_dir` (falling back to cfg.out_dir), writing manifest.txt,
// metrics.csv, timing.csv, and checkpoint.mrckpt.  On a NaN abort the files
// written so far (including the diagnostic record) are flushed before the
// NumericError propagates.  A directory that already holds a manifest is
// refused.  `expect`, when given, must match the data actually loaded.
RunResult run_train(const ExperimentConfig& cfg, const std::string& out_dir,
                    const MetricsSink& progress = {}, const RunManifest* expect = nullptr);

// Reconstructs the config from a manifest and trains into a fresh directory;
// the dataset and split hashes must match the manifest's.
RunResult run_train_from_manifest(const std::string& manifest_path,
                                  const std::string& out_dir,
                                  const MetricsSink& progress = {});

struct EvalRequest {
    std::string checkpoint;
    SplitName split = SplitName::val;
    std::int64_t n_episodes = 600;
    std::uint64_t seed = 0;
};
struct EvalOutput {
    double pre_acc = 0.0, pre_std = 0.0;   // == post for learners without adaptation
    double post_acc = 0.0, post_std = 0.0;
    bool adapted = false;      // maml: post is after inner-loop adaptation
    bool regression = false;   // scores are MSE, lower is better
};

// Deterministic in (checkpoint, split, n_episodes, seed); appends one row to
// eval.csv beside the checkpoint.
EvalOutput run_eval(const EvalRequest& req);

}  // namespace metareg
