#include "metareg/mann.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "metareg/optim.hpp"
#include "metareg/rng.hpp"

namespace metareg {

const char* mer_method_name(MerMethod m) {
    switch (m) {
        case MerMethod::None: return "none";
        case MerMethod::DistanceOnly: return "distance";
        case MerMethod::RatioMax: return "ratio";
        case MerMethod::RatioTarget: return "ratio_target";
    }
    throw ContractError("mer_method_name: unknown method");
}

MerMethod mer_method_from_name(const std::string& name) {
    if (name == "none") return MerMethod::None;
    if (name == "distance") return MerMethod::DistanceOnly;
    if (name == "ratio") return MerMethod::RatioMax;
    if (name == "ratio_target") return MerMethod::RatioTarget;
    throw ValidationError("mer_method_from_name: unknown method '" + name + "'");
}

void validate(const MannConfig& cfg) {
    if (cfg.n_way < 2) throw ConfigError("MannConfig: n_way must be >= 2");
    if (cfg.conv_filters < 1 || cfg.latent_dim < 1 || cfg.hidden_dim < 1)
        throw ConfigError("MannConfig: layer widths must be >= 1");
}

void validate(const MerMannConfig& mer) {
    if (mer.lambda < 0.0) throw ConfigError("MerMannConfig: lambda must be >= 0");
    if (mer.method == MerMethod::RatioTarget && mer.eta <= 0.0)
        throw ConfigError("MerMannConfig: eta must be > 0 for the ratio_target method");
    if (mer.epsilon_z <= 0.0) throw ConfigError("MerMannConfig: epsilon_z must be > 0");
    if (mer.reg_cap_factor <= 0.0)
        throw ConfigError("MerMannConfig: reg_cap_factor must be > 0");
}

void validate(const MannTrainConfig& tc) {
    if (tc.iterations < 1) throw ConfigError("MannTrainConfig: iterations must be >= 1");
    if (tc.batch_size < 1) throw ConfigError("MannTrainConfig: batch_size must be >= 1");
    if (tc.n_way < 2 || tc.k_shot < 1 || tc.q_queries < 1)
        throw ConfigError("MannTrainConfig: episode shape must have n_way>=2, k,q>=1");
    if (!(tc.lr > 0.0)) throw ConfigError("MannTrainConfig: lr must be > 0");
    if (tc.eval_every < 0) throw ConfigError("MannTrainConfig: eval_every must be >= 0");
    if (tc.eval_every > 0 && tc.eval_episodes < 1)
        throw ConfigError("MannTrainConfig: eval_episodes must be >= 1 when evaluating");
}

namespace {

Tensor he_normal(Shape shape, double fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = d(rng);
    return Tensor::from_values(std::move(shape), std::move(v), /*tracked=*/true);
}

Tensor glorot_uniform(Shape shape, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> d(-lim, lim);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = d(rng);
    return Tensor::from_values(std::move(shape), std::move(v), /*tracked=*/true);
}

}  // namespace

MannModel mann_init(const MannConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    auto rng = make_stream(seed, "init-mann");
    const std::int64_t F = cfg.conv_filters, L = cfg.latent_dim, H = cfg.hidden_dim,
                       N = cfg.n_way;
    MannModel m;
    m.cfg = cfg;
    // draw order is part of the determinism contract: conv1..4, fc, lstm, head
    m.params.add("enc.conv1.w", Segment::encoder, he_normal({F, 1, 3, 3}, 9.0, rng));
    m.params.add("enc.conv1.b", Segment::encoder, Tensor::zeros({F}, true));
    for (int i = 2; i <= 4; ++i) {
        const std::string base = "enc.conv" + std::to_string(i);
        m.params.add(base + ".w", Segment::encoder,
                     he_normal({F, F, 3, 3}, static_cast<double>(F) * 9.0, rng));
        m.params.add(base + ".b", Segment::encoder, Tensor::zeros({F}, true));
    }
    // four stride-2 blocks take 28 -> 14 -> 7 -> 4 -> 2
    const std::int64_t flat = F * 2 * 2;
    m.params.add("enc.fc.w", Segment::encoder,
                 glorot_uniform({flat, L}, static_cast<double>(flat),
                                static_cast<double>(L), rng));
    m.params.add("enc.fc.b", Segment::encoder, Tensor::zeros({L}, true));

    const std::int64_t I = L + N;  // latent plus one-hot label
    m.params.add("lstm.w", Segment::solver,
                 glorot_uniform({I + H, 4 * H}, static_cast<double>(I + H),
                                static_cast<double>(4 * H), rng));
    std::vector<double> bias(static_cast<std::size_t>(4 * H), 0.0);
    for (std::int64_t j = H; j < 2 * H; ++j) bias[static_cast<std::size_t>(j)] = 1.0;
    m.params.add("lstm.b", Segment::solver,
                 Tensor::from_values({4 * H}, std::move(bias), true));  // forget gate open

    m.params.add("head.w", Segment::solver,
                 glorot_uniform({H, N}, static_cast<double>(H), static_cast<double>(N), rng));
    m.params.add("head.b", Segment::solver, Tensor::zeros({N}, true));
    return m;
}

namespace {

// conv blocks + fc: [R,1,28,28] -> [R, latent]
Tensor encode_images(const MannModel& model, const Tensor& input) {
    Tensor x = input;
    for (int i = 1; i <= 4; ++i) {
        const std::string base = "enc.conv" + std::to_string(i);
        x = relu(conv2d_bias(x, model.params.at(base + ".w"), model.params.at(base + ".b"),
                             /*stride=*/2, /*padding=*/1));
    }
    const std::int64_t R = x.shape()[0];
    x = reshape(x, {R, model.cfg.conv_filters * 2 * 2});
    return linear(x, model.params.at("enc.fc.w"), model.params.at("enc.fc.b"));
}

void check_batch(const MannModel& model, std::span<const Episode> batch) {
    if (batch.empty()) throw ValidationError("mann batch: no episodes");
    const auto& first = batch.front();
    if (first.n_way != model.cfg.n_way)
        throw ValidationError("mann batch: episodes are " + std::to_string(first.n_way) +
                              "-way but the model expects " +
                              std::to_string(model.cfg.n_way));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& ep = batch[b];
        if (ep.regression)
            throw ValidationError("mann batch: episode " + std::to_string(b) +
                                  " is a regression episode");
        if (ep.n_way != first.n_way || ep.k_shot != first.k_shot ||
            ep.q_queries != first.q_queries)
            throw ValidationError("mann batch: episode " + std::to_string(b) +
                                  " shape differs from episode 0");
        const std::int64_t T = ep.n_way * ep.k_shot, S = ep.n_way * ep.q_queries;
        if (ep.support_x.size() != T * kImageSide * kImageSide ||
            ep.support_y.size() != T * ep.n_way ||
            ep.query_x.size() != S * kImageSide * kImageSide ||
            ep.query_y.size() != S * ep.n_way)
            throw ValidationError("mann batch: episode " + std::to_string(b) +
                                  " tensor sizes do not match its declared shape");
    }
}

}  // namespace

Tensor stacked_query_labels(std::span<const Episode> batch) {
    const auto B = static_cast<std::int64_t>(batch.size());
    const std::int64_t N = batch.front().n_way;
    const std::int64_t S = N * batch.front().q_queries;
    std::vector<double> vals(static_cast<std::size_t>(S * B * N));
    for (std::int64_t s = 0; s < S; ++s)
        for (std::int64_t b = 0; b < B; ++b) {
            const auto src = batch[static_cast<std::size_t>(b)].query_y.values();
            std::copy(src.begin() + s * N, src.begin() + (s + 1) * N,
                      vals.begin() + (s * B + b) * N);
        }
    return Tensor::from_values({S * B, N}, std::move(vals));
}

MannTrace mann_forward(const MannModel& model, std::span<const Episode> batch) {
    check_batch(model, batch);
    const auto B = static_cast<std::int64_t>(batch.size());
    const std::int64_t N = batch.front().n_way, K = batch.front().k_shot,
                       Q = batch.front().q_queries;
    const std::int64_t T = N * K, S = N * Q, px = kImageSide * kImageSide;
    const std::int64_t L = model.cfg.latent_dim, H = model.cfg.hidden_dim;

    // one encoder pass over every image: support rows first (step-major),
    // then query rows, row = step * B + episode
    std::vector<double> pixels(static_cast<std::size_t>((T + S) * B * px));
    for (std::int64_t b = 0; b < B; ++b) {
        const auto sv = batch[static_cast<std::size_t>(b)].support_x.values();
        const auto qv = batch[static_cast<std::size_t>(b)].query_x.values();
        for (std::int64_t t = 0; t < T; ++t)
            std::copy(sv.begin() + t * px, sv.begin() + (t + 1) * px,
                      pixels.begin() + (t * B + b) * px);
        for (std::int64_t s = 0; s < S; ++s)
            std::copy(qv.begin() + s * px, qv.begin() + (s + 1) * px,
                      pixels.begin() + ((T + s) * B + b) * px);
    }
    const Tensor enc = encode_images(
        model, Tensor::from_values({(T + S) * B, 1, kImageSide, kImageSide},
                                   std::move(pixels)));
    const Tensor enc_flat = reshape(enc, {(T + S) * B * L});
    auto latent_at = [&](std::int64_t step) {
        return reshape(slice_vec(enc_flat, step * B * L, B * L), {B, L});
    };

    ParamSet lstm;
    lstm.add("w", Segment::solver, model.params.at("lstm.w"));
    lstm.add("b", Segment::solver, model.params.at("lstm.b"));

    Tensor h = Tensor::zeros({B, H}), c = Tensor::zeros({B, H});
    Tensor z_sum;
    for (std::int64_t t = 0; t < T; ++t) {
        const Tensor lat = latent_at(t);
        z_sum = t == 0 ? lat : add(z_sum, lat);
        std::vector<double> lab(static_cast<std::size_t>(B * N));
        for (std::int64_t b = 0; b < B; ++b) {
            const auto src = batch[static_cast<std::size_t>(b)].support_y.values();
            std::copy(src.begin() + t * N, src.begin() + (t + 1) * N, lab.begin() + b * N);
        }
        const Tensor x = concat_cols(lat, Tensor::from_values({B, N}, std::move(lab)));
        std::tie(h, c) = lstm_cell(x, h, c, lstm);
    }

    // queries read out independently from the post-support state, with an
    // all-zero label slot
    const Tensor zero_lab = Tensor::zeros({B, N});
    std::vector<Tensor> hidden_parts;
    hidden_parts.reserve(static_cast<std::size_t>(S));
    for (std::int64_t s = 0; s < S; ++s) {
        const Tensor x = concat_cols(latent_at(T + s), zero_lab);
        auto [hq, cq] = lstm_cell(x, h, c, lstm);
        hidden_parts.push_back(reshape(hq, {B * H}));
    }
    const Tensor hq_all = reshape(concat_vec(hidden_parts), {S * B, H});

    MannTrace trace;
    trace.z = scale(z_sum, 1.0 / static_cast<double>(T));
    trace.h = h;
    trace.logits = linear(hq_all, model.params.at("head.w"), model.params.at("head.b"));
    trace.n_tasks = B;
    trace.n_way = N;
    trace.k_shot = K;
    trace.q_queries = Q;
    return trace;
}

Tensor task_distance_matrix(const std::vector<Tensor>& vectors) {
    const auto n = static_cast<std::int64_t>(vectors.size());
    if (n < 2)
        throw ConfigError("task_distance_matrix: needs at least 2 vectors, got " +
                          std::to_string(n));
    const std::int64_t len = vectors.front().size();
    for (std::int64_t i = 1; i < n; ++i)
        if (vectors[static_cast<std::size_t>(i)].size() != len)
            throw DimensionError("task_distance_matrix: vector " + std::to_string(i) +
                                 " has length " +
                                 std::to_string(vectors[static_cast<std::size_t>(i)].size()) +
                                 ", expected " + std::to_string(len));
    std::vector<Tensor> cells(static_cast<std::size_t>(n * n));
    const Tensor zero = Tensor::zeros({1});
    for (std::int64_t i = 0; i < n; ++i) cells[static_cast<std::size_t>(i * n + i)] = zero;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j) {
            const Tensor d = reshape(l2_distance(vectors[static_cast<std::size_t>(i)],
                                                 vectors[static_cast<std::size_t>(j)]),
                                     {1});
            cells[static_cast<std::size_t>(i * n + j)] = d;  // symmetric: shared node
            cells[static_cast<std::size_t>(j * n + i)] = d;
        }
    return reshape(concat_vec(cells), {n, n});
}

namespace {

std::vector<Tensor> matrix_rows(const Tensor& m) {
    const std::int64_t B = m.shape()[0], D = m.shape()[1];
    const Tensor flat = reshape(m, {B * D});
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(B));
    for (std::int64_t i = 0; i < B; ++i) rows.push_back(slice_vec(flat, i * D, D));
    return rows;
}

Tensor off_diagonal_mask(std::int64_t n) {
    std::vector<double> v(static_cast<std::size_t>(n * n), 1.0);
    for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = 0.0;
    return Tensor::from_values({n, n}, std::move(v));
}

}  // namespace

LossBreakdown mer_mann_loss(const MannTrace& trace, std::span<const Episode> batch,
                            const MerMannConfig& mer) {
    validate(mer);
    const std::int64_t B = trace.n_tasks;
    if (static_cast<std::int64_t>(batch.size()) != B)
        throw ContractError("mer_mann_loss: trace covers " + std::to_string(B) +
                            " tasks but the batch has " + std::to_string(batch.size()));
    const Tensor labels = stacked_query_labels(batch);
    if (trace.logits.shape() != labels.shape())
        throw ContractError("mer_mann_loss: logits shape " + shape_str(trace.logits.shape()) +
                            " does not match stacked labels " + shape_str(labels.shape()));
    const Tensor task_loss = softmax_cross_entropy(trace.logits, labels);

    if (mer.method != MerMethod::None && B < 2)
        throw ConfigError("mer_mann_loss: the pairwise regularizer needs a batch of >= 2 "
                          "tasks, got 1");
    if (mer.method == MerMethod::None || mer.lambda == 0.0)
        return {task_loss, Tensor::scalar(0.0), task_loss};  // bitwise Eq-off path

    // Per-pair mean, not raw sum: at batch 32 the 992 ordered pairs would
    // otherwise outweigh the task gradient by two orders of magnitude and
    // lambda = 1 would stall task learning entirely.
    const double inv_pairs = 1.0 / static_cast<double>(B * (B - 1));
    const Tensor dist_h = task_distance_matrix(matrix_rows(trace.h));
    Tensor reg;
    if (mer.method == MerMethod::DistanceOnly) {
        reg = scale(neg(sum_all(dist_h)), inv_pairs);
    } else {
        const Tensor dist_z = task_distance_matrix(matrix_rows(trace.z));
        const Tensor ratio = mul(dist_h, reciprocal(clamp_min(dist_z, mer.epsilon_z)));
        if (mer.method == MerMethod::RatioMax)
            reg = scale(neg(sum_all(ratio)), inv_pairs);
        else  // RatioTarget: |eta - ratio| averaged off the diagonal
            reg = scale(
                sum_all(mul(abs_op(rsub_scalar(mer.eta, ratio)), off_diagonal_mask(B))),
                inv_pairs);
    }
    if (mer.method != MerMethod::RatioTarget) {
        // unbounded-below penalties get a constant rescale when they dwarf
        // the task objective
        const double mag = std::abs(reg.value());
        const double cap = mer.reg_cap_factor * std::abs(task_loss.value());
        if (mag > cap) reg = scale(reg, cap / mag);
    }
    const Tensor total = add(task_loss, scale(reg, mer.lambda));
    return {task_loss, reg, total};
}

EvalResult evaluate_mann(const MannModel& model, const CharacterStore& store, SplitName split,
                         LabelMode mode, std::int64_t n_episodes, std::int64_t n_way,
                         std::int64_t k_shot, std::int64_t q_queries, std::mt19937_64& rng) {
    if (n_episodes < 1) throw ConfigError("evaluate_mann: n_episodes must be >= 1");
    NoGradGuard no_grad;
    std::vector<double> accs;
    accs.reserve(static_cast<std::size_t>(n_episodes));
    for (std::int64_t e = 0; e < n_episodes; ++e) {
        const Episode ep = sample_episode(store, split, n_way, k_shot, q_queries, mode, rng);
        const auto trace = mann_forward(model, {&ep, 1});
        accs.push_back(accuracy(trace.logits, stacked_query_labels({&ep, 1})));
    }
    EvalResult r;
    for (double a : accs) r.mean_acc += a;
    r.mean_acc /= static_cast<double>(accs.size());
    if (accs.size() > 1) {
        double ss = 0.0;
        for (double a : accs) ss += (a - r.mean_acc) * (a - r.mean_acc);
        r.std_acc = std::sqrt(ss / static_cast<double>(accs.size() - 1));
    }
    return r;
}

void train_mann(MannModel& model, const CharacterStore& store, const MannTrainConfig& tc,
                const MerMannConfig& mer, const MetricsSink& sink) {
    validate(tc);
    validate(mer);
    if (tc.n_way != model.cfg.n_way)
        throw ConfigError("train_mann: config n_way " + std::to_string(tc.n_way) +
                          " does not match the model's " + std::to_string(model.cfg.n_way));
    AdamState state;
    auto ep_rng = make_stream(tc.seed, "mann-train-episodes");
    double val_acc = 0.0;

    for (std::int64_t iter = 0; iter < tc.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<Episode> batch;
        batch.reserve(static_cast<std::size_t>(tc.batch_size));
        for (std::int64_t b = 0; b < tc.batch_size; ++b)
            batch.push_back(sample_episode(store, SplitName::train, tc.n_way, tc.k_shot,
                                           tc.q_queries, tc.mode, ep_rng));
        const auto trace = mann_forward(model, batch);
        const auto loss = mer_mann_loss(trace, batch, mer);

        MetricsRecord rec;
        rec.iteration = iter;
        rec.seed = tc.seed;
        rec.task_loss = loss.task_loss.value();
        rec.reg_loss = loss.reg_loss.value();
        rec.total_loss = loss.total.value();
        rec.train_acc = accuracy(trace.logits, stacked_query_labels(batch));
        if (trace.n_tasks >= 2) {
            auto rows = [](const Tensor& m) {
                const std::int64_t B = m.shape()[0], D = m.shape()[1];
                std::vector<std::vector<double>> out(static_cast<std::size_t>(B));
                const auto v = m.values();
                for (std::int64_t i = 0; i < B; ++i)
                    out[static_cast<std::size_t>(i)].assign(v.begin() + i * D,
                                                            v.begin() + (i + 1) * D);
                return out;
            };
            const auto h_rows = rows(trace.h);
            rec.summary_ratio = summary_latent_ratio(h_rows, rows(trace.z), mer.epsilon_z);
            rec.mean_phi_distance = mean_pairwise_distance(h_rows);
        }
        auto elapsed_ms = [&]() {
            return std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                .count();
        };
        if (!std::isfinite(rec.total_loss)) {
            rec.wall_ms = elapsed_ms();
            sink(rec);  // diagnostic record for the abort
            throw NumericError("train_mann: non-finite loss at iteration " +
                               std::to_string(iter));
        }
        const ParamSet grads = grad_params(loss.total, model.params, /*create_graph=*/false);
        model.params = adam_step(state, model.params, grads, tc.lr);

        if (tc.eval_every > 0 &&
            ((iter + 1) % tc.eval_every == 0 || iter + 1 == tc.iterations)) {
            auto val_rng = make_stream(tc.seed, "mann-val-" + std::to_string(iter));
            val_acc = evaluate_mann(model, store, SplitName::val, tc.mode, tc.eval_episodes,
                                    tc.n_way, tc.k_shot, tc.q_queries, val_rng)
                          .mean_acc;
        }
        // the black-box learner has no inner adaptation: pre == post
        rec.val_pre_acc = rec.val_post_acc = val_acc;
        rec.wall_ms = elapsed_ms();
        sink(rec);
    }
}

}  // namespace metareg
