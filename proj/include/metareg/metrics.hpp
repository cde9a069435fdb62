#pragma once

// Run logging and memorization diagnostics shared by both learners: the
// per-iteration metrics record, its CSV serialization, SVG training curves,
// and the manifest that makes a run directory reproducible.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace metareg {

// One training-loop sample.  summary_ratio is the h/z ratio for the
// black-box learner and the solver/encoder parameter-distance ratio for the
// optimization-based learner; mean_phi_distance is the mean pairwise
// distance between per-task summaries (adapted solver parameters, or LSTM
// task summaries h).  Validation columns repeat the latest evaluation until
// the next one lands.
struct MetricsRecord {
    std::int64_t iteration = 0;
    double task_loss = 0.0;
    double reg_loss = 0.0;
    double total_loss = 0.0;
    double train_acc = 0.0;
    double val_pre_acc = 0.0;
    double val_post_acc = 0.0;
    double summary_ratio = 0.0;
    double mean_phi_distance = 0.0;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const MetricsRecord&) const = default;
};

// Mean off-diagonal pairwise L2 distance between the rows.
double mean_pairwise_distance(const std::vector<std::vector<double>>& rows);

// Memorization diagnostic: mean pairwise distance of the task summaries h
// divided by that of the latents z, denominator clamped below at eps.
// Needs at least two rows on each side.
double summary_latent_ratio(const std::vector<std::vector<double>>& h,
                            const std::vector<std::vector<double>>& z, double eps = 1e-6);

// CSV with the full MetricsRecord schema in declaration order.  Doubles are
// printed with enough digits to round-trip bit-exactly.  Writes are atomic
// (temp file + rename).  `with_wall_ms=false` drops the wall_ms column so a
// re-run of the same config produces a byte-identical file; pair it with a
// separate timing file when the measurement matters.
void write_csv(const std::vector<MetricsRecord>& records, const std::string& path,
               bool with_wall_ms = true);
std::vector<MetricsRecord> read_csv(const std::string& path);

// Line chart of the given CSV columns against `iteration`, one polyline per
// column plus axes and a legend.  Unknown columns are rejected by name.
void render_curves(const std::string& csv_path, const std::vector<std::string>& columns,
                   const std::string& out_path);

// Everything needed to re-run an experiment bit-identically: the resolved
// config, the dataset checksum, the code version, and the split assignment
// hash actually used.
struct RunManifest {
    std::map<std::string, std::string> config;
    std::string dataset_checksum;
    std::string code_version;
    std::uint64_t split_hash = 0;

    bool operator==(const RunManifest&) const = default;
};

void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace metareg
