#pragma once

// Black-box few-shot learner: a conv encoder feeds an LSTM that consumes the
// labelled support sequence into a task summary h, conditioned on which each
// query is classified.  The regularized objectives push the pairwise
// distances between per-task summaries (optionally relative to the latent
// distances) away from the collapse that marks task memorization.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "metareg/episodes.hpp"
#include "metareg/metrics.hpp"
#include "metareg/ops.hpp"
#include "metareg/param_set.hpp"
#include "metareg/tensor.hpp"

namespace metareg {

// Regularizer selector: DistanceOnly maximizes pairwise summary distances,
// RatioMax maximizes summary-to-latent distance ratios, RatioTarget pins the
// ratio at a configured value eta.
enum class MerMethod { None, DistanceOnly, RatioMax, RatioTarget };
const char* mer_method_name(MerMethod m);
MerMethod mer_method_from_name(const std::string& name);

struct MannConfig {
    std::int64_t n_way = 5;
    std::int64_t conv_filters = 32;
    std::int64_t latent_dim = 64;  // encoder output width (z)
    std::int64_t hidden_dim = 64;  // LSTM state width (h)
};
void validate(const MannConfig& cfg);

struct MerMannConfig {
    MerMethod method = MerMethod::None;
    double lambda = 0.0;
    double eta = 1.0;         // RatioTarget's desired ratio
    double epsilon_z = 1e-6;  // latent-distance floor for the ratio forms
    // DistanceOnly/RatioMax are unbounded below; the regularizer magnitude is
    // rescaled down to this multiple of |task_loss| when it overshoots.
    double reg_cap_factor = 10.0;
};
void validate(const MerMannConfig& mer);

struct MannModel {
    MannConfig cfg;
    ParamSet params;  // enc.* are segment encoder; lstm.*, head.* are solver
};

// Fresh parameters with a fixed draw order under the given seed.
MannModel mann_init(const MannConfig& cfg, std::uint64_t seed);

struct MannTrace {
    Tensor z;       // [B, latent]: support encoder outputs, mean-pooled per task
    Tensor h;       // [B, hidden]: LSTM hidden after the full support sequence
    Tensor logits;  // [B*N*Q, N] in query-step-major row order (see below)
    std::int64_t n_tasks = 0;
    std::int64_t n_way = 0;
    std::int64_t k_shot = 0;
    std::int64_t q_queries = 0;
};

// Runs the batch through encoder + LSTM.  All episodes must share
// (n_way, k_shot, q_queries) and match the model's n_way.  Queries are fed
// one LSTM step from the post-support state with a zero label vector.
// Row order of logits: query step s of every episode, then step s+1
// (row = s * batch + episode).
MannTrace mann_forward(const MannModel& model, std::span<const Episode> batch);

// Query one-hot labels stacked in the same row order as trace logits.
Tensor stacked_query_labels(std::span<const Episode> batch);

// Pairwise l2_distance matrix of flat vectors; zero diagonal, symmetric,
// differentiable through every entry.
Tensor task_distance_matrix(const std::vector<Tensor>& vectors);

struct LossBreakdown {
    Tensor task_loss;
    Tensor reg_loss;  // untracked zero when the regularizer is switched off
    Tensor total;     // task_loss + lambda * reg_loss
};

// Mean query cross-entropy plus the selected pairwise-distance regularizer
// over the batch's (h, z) summaries, averaged over the B*(B-1) ordered task
// pairs so its scale is independent of batch size.  lambda=0 returns
// total == task_loss as the very same tape node.
LossBreakdown mer_mann_loss(const MannTrace& trace, std::span<const Episode> batch,
                            const MerMannConfig& mer);

struct MannTrainConfig {
    std::int64_t iterations = 100;
    std::int64_t batch_size = 32;
    std::int64_t n_way = 5;
    std::int64_t k_shot = 1;
    std::int64_t q_queries = 1;
    LabelMode mode = LabelMode::Fixed;
    double lr = 0.001;              // Adam step size
    std::int64_t eval_every = 50;   // 0 disables periodic validation
    std::int64_t eval_episodes = 50;
    std::uint64_t seed = 0;
};
void validate(const MannTrainConfig& tc);

using MetricsSink = std::function<void(const MetricsRecord&)>;

struct EvalResult {
    double mean_acc = 0.0;
    double std_acc = 0.0;  // sample standard deviation over episodes
};

// Query accuracy over freshly sampled episodes (no parameter updates).
EvalResult evaluate_mann(const MannModel& model, const CharacterStore& store, SplitName split,
                         LabelMode mode, std::int64_t n_episodes, std::int64_t n_way,
                         std::int64_t k_shot, std::int64_t q_queries, std::mt19937_64& rng);

// Adam on the regularized objective; one MetricsRecord per iteration.
// Validation columns hold the latest val split evaluation (0 until the
// first).  A non-finite loss emits a final diagnostic record and throws
// NumericError.
void train_mann(MannModel& model, const CharacterStore& store, const MannTrainConfig& tc,
                const MerMannConfig& mer, const MetricsSink& sink);

}  // namespace metareg
