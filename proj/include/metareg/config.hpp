#pragma once

// Experiment configuration.  Files are flat "key = value" text (one pair per
// line, '#' comments) so manifests stay diff-friendly; command-line
// overrides are plain set() calls on the parsed map.  ExperimentConfig
// resolves the map into typed learner/dataset settings and validates every
// cross-field constraint with a message naming the key.

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "metareg/episodes.hpp"
#include "metareg/maml.hpp"
#include "metareg/mann.hpp"

namespace metareg {

class ConfigMap {
public:
    static ConfigMap from_file(const std::string& path);
    static ConfigMap from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool contains(const std::string& key) const;

    // Typed getters; the *_or forms fall back to a default and record it so
    // the resolved map is complete.  Parse failures name the key.
    std::string get_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

enum class Learner { Mann, Maml, MamlSimple };
const char* learner_name(Learner l);
Learner learner_from_name(const std::string& name);

enum class Dataset { Omniglot, SynthRegression, Fixture };
const char* dataset_name(Dataset d);
Dataset dataset_from_name(const std::string& name);

// Fully resolved experiment: every knob typed, plus the resolved key/value
// map (defaults materialized, overrides applied) that manifests record.
struct ExperimentConfig {
    Learner learner = Learner::Mann;
    Dataset dataset = Dataset::Fixture;
    std::string data_root;  // omniglot/fixture only; empty means unset
    SplitSpec split{1100, 100, 423};
    std::uint64_t split_seed = 0;

    std::int64_t n_way = 5, k_shot = 1, q_queries = 1;
    LabelMode label_mode = LabelMode::Fixed;

    MannConfig mann;           // learner == Mann
    MerMannConfig mer_mann;
    double adam_lr = 0.001;

    MamlConfig maml;           // learner == Maml / MamlSimple
    MerMamlConfig mer_maml;
    double outer_lr = 0.0025;

    std::int64_t batch = 32;   // episodes per outer step
    std::int64_t iterations = 1000;
    std::int64_t eval_every = 100;
    std::int64_t eval_episodes = 600;
    std::int64_t eval_inner_steps = -1;
    std::uint64_t seed = 0;
    std::string out_dir;       // empty: the caller chooses

    RegressionTaskSpec regression;
    double reg_noise_sd = 0.0;
    std::int64_t reg_train_tasks = 16;

    std::map<std::string, std::string> resolved;  // manifest payload

    MannTrainConfig mann_train() const;
    MamlTrainConfig maml_train() const;
};

// Resolves and cross-validates a parsed map.  Unknown keys are rejected (a
// typo silently falling back to a default would poison a sweep).
ExperimentConfig resolve_experiment(const ConfigMap& map);

}  // namespace metareg
