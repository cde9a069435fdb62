#pragma once

// Optimization-based few-shot learner.  Meta-parameters adapt per task by
// taped inner gradient descent, so the outer step differentiates through the
// adaptation (second order unless switched off).  The regularizer samples
// task pairs and drives the ratio of adapted-solver distance to encoder
// distance toward a target, which keeps tasks from collapsing onto a single
// support-independent solution.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "metareg/episodes.hpp"
#include "metareg/mann.hpp"  // MetricsSink, EvalResult
#include "metareg/metrics.hpp"
#include "metareg/ops.hpp"
#include "metareg/param_set.hpp"

namespace metareg {

// ConvImage classifies 28x28 episodes through a conv encoder + linear
// solver; MlpRegression maps scalars through a small MLP for the sine tasks.
enum class MamlArch { ConvImage, MlpRegression };
const char* maml_arch_name(MamlArch a);
MamlArch maml_arch_from_name(const std::string& name);

struct MamlConfig {
    MamlArch arch = MamlArch::ConvImage;
    std::int64_t n_way = 5;          // ConvImage output width
    std::int64_t conv_filters = 32;  // ConvImage
    std::int64_t hidden_dim = 40;    // MlpRegression
    double inner_lr = 0.04;          // adaptation step size
    std::int64_t inner_steps = 1;    // adaptation steps during training
    bool first_order = false;        // drop the gradient-through-gradient term
};
void validate(const MamlConfig& cfg);

struct MamlModel {
    MamlConfig cfg;
    ParamSet params;  // enc.* segment encoder, solver.* segment solver
};
MamlModel maml_init(const MamlConfig& cfg, std::uint64_t seed);

// Forward pass under an explicit parameter set (the adapted copies reuse it).
Tensor maml_forward(const MamlConfig& cfg, const ParamSet& params, const Tensor& x);

// Support cross-entropy (or MSE for regression episodes) under the params.
Tensor maml_task_loss(const MamlConfig& cfg, const ParamSet& params, const Tensor& x,
                      const Tensor& y, bool regression);

struct AdaptedParams {
    ParamSet phi;  // same schema as the parameters it was adapted from
    std::int64_t task_index = -1;
    std::int64_t steps_taken = 0;
};

// `steps` taped gradient-descent steps on the episode's support loss.
// Downstream gradients flow through the adaptation unless first_order.
// alpha=0 or steps=0 leaves the parameters bitwise untouched.
AdaptedParams inner_adapt(const MamlConfig& cfg, const ParamSet& theta, const Episode& ep,
                          double alpha, std::int64_t steps, bool first_order,
                          std::int64_t task_index = -1);

// l2 distance between the flattened tensors of one segment; schemas must
// match entry for entry.
Tensor segment_distance(const ParamSet& a, const ParamSet& b, Segment segment);

struct MerMamlConfig {
    double lambda = 0.0;
    double eta = 1.0;
    std::int64_t k_pairs = 4;  // task pairs sampled per outer step
    double epsilon_z = 1e-6;   // encoder-distance floor
    bool abs_form = false;     // |eta - ratio| instead of signed eta - ratio
    // replace the encoder-parameter distance with the raw support-pixel
    // distance of the two episodes
    bool simple_denominator = false;
};
void validate(const MerMamlConfig& mer);

// Mean over `k_pairs` distinct unordered task pairs (drawn from rng without
// replacement) of eta - solver_distance / max(denominator, epsilon_z).
// Differentiable through both segments; `batch` supplies the support pixels
// for the simple denominator.
Tensor mer_regularizer(std::span<const AdaptedParams> adapted, std::span<const Episode> batch,
                       const MerMamlConfig& mer, std::mt19937_64& rng);

struct MamlTrainConfig {
    std::int64_t iterations = 100;
    std::int64_t meta_batch = 10;
    std::int64_t n_way = 5;
    std::int64_t k_shot = 1;
    std::int64_t q_queries = 1;
    LabelMode mode = LabelMode::Fixed;
    double outer_lr = 0.0025;          // plain SGD on the meta-objective
    std::int64_t eval_every = 50;      // 0 disables periodic validation
    std::int64_t eval_episodes = 50;
    std::int64_t eval_inner_steps = -1;  // -1: use the model's inner_steps
    std::uint64_t seed = 0;
    // regression runs only: episode noise and the first task id held out
    // from training (ids below it train, the rest evaluate)
    double reg_noise_sd = 0.0;
    std::int64_t reg_train_tasks = 16;
};
void validate(const MamlTrainConfig& tc);

// Per-step diagnostics.  pre_score/post_score are query accuracy before and
// after adaptation for classification, query MSE for regression.  ratio is
// mean pairwise adapted-solver distance over mean pairwise encoder distance.
// On a NumericError abort the stats filled so far remain readable.
struct MetaStepStats {
    double task_loss = 0.0;  // sum of per-task query losses
    double reg_loss = 0.0;
    double total_loss = 0.0;
    double pre_score = 0.0;
    double post_score = 0.0;
    double ratio = 0.0;
    double mean_phi_distance = 0.0;
};

// One outer update: adapts every task, sums the query losses, adds the
// regularizer when lambda > 0 (only then does rng advance), and takes one
// outer_lr SGD step.  Returns fresh leaf parameters; bitwise-reproducible
// under identical inputs.
ParamSet meta_step(const MamlModel& model, std::span<const Episode> batch,
                   const MamlTrainConfig& tc, const MerMamlConfig& mer, std::mt19937_64& rng,
                   MetaStepStats* stats = nullptr);

struct MamlEvalResult {
    double pre_acc = 0.0;  // query score under the unadapted parameters
    double post_acc = 0.0;  // after eval_inner_steps support steps
    double pre_std = 0.0;
    double post_std = 0.0;  // sample std over episodes
};

// Classification evaluation; eval_inner_steps=0 makes pre == post exactly.
MamlEvalResult evaluate_maml(const MamlModel& model, const CharacterStore& store,
                             SplitName split, LabelMode mode, std::int64_t n_episodes,
                             std::int64_t n_way, std::int64_t k_shot, std::int64_t q_queries,
                             std::int64_t eval_inner_steps, std::mt19937_64& rng);

// Regression evaluation on task ids in [first_task, spec.n_tasks()); the
// acc fields carry MSE (lower is better).
MamlEvalResult evaluate_maml_regression(const MamlModel& model, const RegressionTaskSpec& spec,
                                        std::int64_t first_task, std::int64_t n_episodes,
                                        std::int64_t k_shot, std::int64_t q_queries,
                                        double noise_sd, std::int64_t eval_inner_steps,
                                        std::mt19937_64& rng);

// Meta-training loops; one MetricsRecord per meta-step (train_acc is the
// post-adaptation batch score, val columns hold the latest evaluation).
void train_maml(MamlModel& model, const CharacterStore& store, const MamlTrainConfig& tc,
                const MerMamlConfig& mer, const MetricsSink& sink);
void train_maml_regression(MamlModel& model, const RegressionTaskSpec& spec,
                           const MamlTrainConfig& tc, const MerMamlConfig& mer,
                           const MetricsSink& sink);

}  // namespace metareg
