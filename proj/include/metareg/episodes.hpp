#pragma once

// Dataset ingestion and episodic task sampling.  A CharacterStore holds the
// class images and the seeded split assignment; samplers draw N-way K-shot
// episodes whose label assignment is either globally consistent (Fixed) or
// freshly permuted per episode (Shuffled).  A synthetic sine-regression
// family provides a non-mutually-exclusive regression task distribution.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "metareg/tensor.hpp"

namespace metareg {

inline constexpr std::int64_t kImageSide = 28;

struct SplitSpec {
    std::int64_t n_train = 0;
    std::int64_t n_val = 0;
    std::int64_t n_test = 0;
};

enum class SplitName { train, val, test };
const char* split_name(SplitName s);
SplitName split_from_name(const std::string& name);

enum class LabelMode { Fixed, Shuffled };
const char* label_mode_name(LabelMode m);
LabelMode label_mode_from_name(const std::string& name);

struct CharacterClass {
    std::string name;                         // e.g. alphabet/character
    std::vector<std::vector<double>> images;  // each kImageSide^2, strokes ~1
};

class CharacterStore {
public:
    // Shuffles class order by seed, then assigns the first n_train to train,
    // next n_val to val, next n_test to test.
    CharacterStore(std::vector<CharacterClass> classes, SplitSpec spec, std::uint64_t seed);

    std::int64_t n_classes() const { return static_cast<std::int64_t>(classes_.size()); }
    const CharacterClass& cls(std::int64_t id) const;
    const std::vector<std::int64_t>& split_ids(SplitName split) const;
    const SplitSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }

    // Hash over (class name, split) pairs; equal iff the assignment is equal.
    std::uint64_t assignment_hash() const;

    // Fixed-label grouping: the split's (seed-ordered) classes are chunked
    // into consecutive disjoint groups of n_way; a class's label is its
    // position inside its group, so it never varies across episodes.
    std::int64_t n_fixed_groups(SplitName split, std::int64_t n_way) const;
    std::vector<std::int64_t> fixed_group(SplitName split, std::int64_t n_way,
                                          std::int64_t group) const;

private:
    std::vector<CharacterClass> classes_;
    SplitSpec spec_;
    std::uint64_t seed_;
    std::vector<std::int64_t> train_, val_, test_;
};

// Walks root/<alphabet>/<character>/<image>.png, decodes to grayscale,
// resizes to 28x28, inverts so strokes ~1, and splits classes by seed.
CharacterStore load_omniglot(const std::string& root, SplitSpec spec, std::uint64_t seed);

struct Episode {
    Tensor support_x;  // [N*K, 1, 28, 28]  (regression: [K, 1])
    Tensor support_y;  // one-hot [N*K, N]  (regression: [K, 1])
    Tensor query_x;    // [N*Q, 1, 28, 28]  (regression: [Q, 1])
    Tensor query_y;    // one-hot [N*Q, N]  (regression: [Q, 1])
    std::int64_t n_way = 0;
    std::int64_t k_shot = 0;
    std::int64_t q_queries = 0;
    LabelMode mode = LabelMode::Shuffled;
    bool regression = false;
    // label index -> backing class id (classification only; diagnostics).
    std::vector<std::int64_t> class_ids;
};

// Draws n_way classes (whole Fixed group, or uniformly without replacement
// in Shuffled mode), then k_shot+q_queries distinct images per class.
// Support and query rows are emitted in a shuffled order.
Episode sample_episode(const CharacterStore& store, SplitName split, std::int64_t n_way,
                       std::int64_t k_shot, std::int64_t q_queries, LabelMode mode,
                       std::mt19937_64& rng);

// Sine tasks y = A sin(x + phase) where each task owns a private x-interval
// of fixed width; the input alone identifies the task, which is what makes
// the family non-mutually-exclusive.
struct RegressionTaskSpec {
    double amp_min = 0.1, amp_max = 5.0;
    double phase_min = 0.0, phase_max = 3.14159265358979323846;
    double x_min = -5.0, x_max = 5.0;
    double interval_width = 0.5;
    std::uint64_t seed = 0;

    std::int64_t n_tasks() const;

    struct Task {
        double amplitude, phase, x_lo, x_hi;
    };
    Task task(std::int64_t task_id) const;  // deterministic in (seed, task_id)
};

Episode sample_regression_episode(const RegressionTaskSpec& spec, std::int64_t task_id,
                                  std::int64_t k_shot, std::int64_t q_queries, double noise_sd,
                                  std::mt19937_64& rng);

// Debug dump: text header + raw little-endian doubles (layout in
// docs/FORMATS.md); load round-trips bit-exactly.
void dump_episode(const Episode& ep, const std::string& path);
Episode load_episode(const std::string& path);

// Writes a synthetic glyph tree under root (alphabet/character/image.png,
// dark strokes on light background like the real dataset) for tests and
// desk-scale experiments.
void make_fixture_dataset(const std::string& root, std::int64_t n_classes,
                          std::int64_t images_per_class, std::uint64_t seed);

}  // namespace metareg
