#include "metareg/maml.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "metareg/optim.hpp"
#include "metareg/rng.hpp"

namespace metareg {

const char* maml_arch_name(MamlArch a) {
    return a == MamlArch::ConvImage ? "conv_image" : "mlp_regression";
}

MamlArch maml_arch_from_name(const std::string& name) {
    if (name == "conv_image") return MamlArch::ConvImage;
    if (name == "mlp_regression") return MamlArch::MlpRegression;
    throw ValidationError("maml_arch_from_name: unknown architecture '" + name + "'");
}

void validate(const MamlConfig& cfg) {
    if (cfg.arch == MamlArch::ConvImage && cfg.n_way < 2)
        throw ConfigError("MamlConfig: n_way must be >= 2");
    if (cfg.conv_filters < 1 || cfg.hidden_dim < 1)
        throw ConfigError("MamlConfig: layer widths must be >= 1");
    if (cfg.inner_lr < 0.0) throw ConfigError("MamlConfig: inner_lr must be >= 0");
    if (cfg.inner_steps < 0) throw ConfigError("MamlConfig: inner_steps must be >= 0");
}

void validate(const MerMamlConfig& mer) {
    if (mer.lambda < 0.0) throw ConfigError("MerMamlConfig: lambda must be >= 0");
    if (mer.eta <= 0.0) throw ConfigError("MerMamlConfig: eta must be > 0");
    if (mer.lambda > 0.0 && mer.k_pairs < 1)
        throw ConfigError("MerMamlConfig: k_pairs must be >= 1 when lambda > 0");
    if (mer.epsilon_z <= 0.0) throw ConfigError("MerMamlConfig: epsilon_z must be > 0");
}

void validate(const MamlTrainConfig& tc) {
    if (tc.iterations < 1) throw ConfigError("MamlTrainConfig: iterations must be >= 1");
    if (tc.meta_batch < 1) throw ConfigError("MamlTrainConfig: meta_batch must be >= 1");
    if (tc.k_shot < 1 || tc.q_queries < 1)
        throw ConfigError("MamlTrainConfig: k_shot and q_queries must be >= 1");
    if (tc.outer_lr < 0.0) throw ConfigError("MamlTrainConfig: outer_lr must be >= 0");
    if (tc.eval_every < 0) throw ConfigError("MamlTrainConfig: eval_every must be >= 0");
    if (tc.eval_every > 0 && tc.eval_episodes < 1)
        throw ConfigError("MamlTrainConfig: eval_episodes must be >= 1 when evaluating");
    if (tc.reg_noise_sd < 0.0) throw ConfigError("MamlTrainConfig: reg_noise_sd must be >= 0");
    if (tc.reg_train_tasks < 1)
        throw ConfigError("MamlTrainConfig: reg_train_tasks must be >= 1");
}

namespace {

Tensor draw_normal(Shape shape, double sd, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = d(rng);
    return Tensor::from_values(std::move(shape), std::move(v), /*tracked=*/true);
}

Tensor draw_glorot(Shape shape, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> d(-lim, lim);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = d(rng);
    return Tensor::from_values(std::move(shape), std::move(v), /*tracked=*/true);
}

}  // namespace

MamlModel maml_init(const MamlConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    auto rng = make_stream(seed, "init-maml");
    MamlModel m;
    m.cfg = cfg;
    if (cfg.arch == MamlArch::ConvImage) {
        const std::int64_t F = cfg.conv_filters, N = cfg.n_way;
        m.params.add("enc.conv1.w", Segment::encoder,
                     draw_normal({F, 1, 3, 3}, std::sqrt(2.0 / 9.0), rng));
        m.params.add("enc.conv1.b", Segment::encoder, Tensor::zeros({F}, true));
        for (int i = 2; i <= 4; ++i) {
            const std::string base = "enc.conv" + std::to_string(i);
            m.params.add(base + ".w", Segment::encoder,
                         draw_normal({F, F, 3, 3},
                                     std::sqrt(2.0 / (static_cast<double>(F) * 9.0)), rng));
            m.params.add(base + ".b", Segment::encoder, Tensor::zeros({F}, true));
        }
        const std::int64_t flat = F * 2 * 2;  // 28 -> 14 -> 7 -> 4 -> 2
        m.params.add("solver.w", Segment::solver,
                     draw_glorot({flat, N}, static_cast<double>(flat),
                                 static_cast<double>(N), rng));
        m.params.add("solver.b", Segment::solver, Tensor::zeros({N}, true));
    } else {
        const std::int64_t H = cfg.hidden_dim;
        m.params.add("enc.fc1.w", Segment::encoder,
                     draw_glorot({1, H}, 1.0, static_cast<double>(H), rng));
        m.params.add("enc.fc1.b", Segment::encoder, Tensor::zeros({H}, true));
        m.params.add("enc.fc2.w", Segment::encoder,
                     draw_glorot({H, H}, static_cast<double>(H), static_cast<double>(H), rng));
        m.params.add("enc.fc2.b", Segment::encoder, Tensor::zeros({H}, true));
        m.params.add("solver.w", Segment::solver,
                     draw_glorot({H, 1}, static_cast<double>(H), 1.0, rng));
        m.params.add("solver.b", Segment::solver, Tensor::zeros({1}, true));
    }
    return m;
}

Tensor maml_forward(const MamlConfig& cfg, const ParamSet& params, const Tensor& x) {
    if (cfg.arch == MamlArch::ConvImage) {
        if (x.shape().size() != 4)
            throw DimensionError("maml_forward: image input must be rank 4, got " +
                                 shape_str(x.shape()));
        Tensor t = x;
        for (int i = 1; i <= 4; ++i) {
            const std::string base = "enc.conv" + std::to_string(i);
            t = relu(conv2d_bias(t, params.at(base + ".w"), params.at(base + ".b"),
                                 /*stride=*/2, /*padding=*/1));
        }
        t = reshape(t, {x.shape()[0], cfg.conv_filters * 2 * 2});
        return linear(t, params.at("solver.w"), params.at("solver.b"));
    }
    if (x.shape().size() != 2 || x.shape()[1] != 1)
        throw DimensionError("maml_forward: regression input must be [n,1], got " +
                             shape_str(x.shape()));
    Tensor t = relu(linear(x, params.at("enc.fc1.w"), params.at("enc.fc1.b")));
    t = relu(linear(t, params.at("enc.fc2.w"), params.at("enc.fc2.b")));
    return linear(t, params.at("solver.w"), params.at("solver.b"));
}

Tensor maml_task_loss(const MamlConfig& cfg, const ParamSet& params, const Tensor& x,
                      const Tensor& y, bool regression) {
    const Tensor pred = maml_forward(cfg, params, x);
    return regression ? mse(pred, y) : softmax_cross_entropy(pred, y);
}

AdaptedParams inner_adapt(const MamlConfig& cfg, const ParamSet& theta, const Episode& ep,
                          double alpha, std::int64_t steps, bool first_order,
                          std::int64_t task_index) {
    if (alpha < 0.0) throw ConfigError("inner_adapt: alpha must be >= 0");
    if (steps < 0) throw ConfigError("inner_adapt: steps must be >= 0");
    AdaptedParams out;
    out.phi = theta;
    out.task_index = task_index;
    out.steps_taken = steps;
    for (std::int64_t s = 0; s < steps; ++s) {
        const Tensor loss =
            maml_task_loss(cfg, out.phi, ep.support_x, ep.support_y, ep.regression);
        if (!std::isfinite(loss.value()))
            throw NumericError("inner_adapt: non-finite support loss at step " +
                               std::to_string(s) + " of task " + std::to_string(task_index));
        const ParamSet grads = grad_params(loss, out.phi, /*create_graph=*/!first_order);
        out.phi = sgd_step(out.phi, grads, alpha);
    }
    return out;
}

namespace {

void require_same_schema(const ParamSet& a, const ParamSet& b, const char* who) {
    if (a.count() != b.count())
        throw ContractError(std::string(who) + ": schemas differ (" +
                            std::to_string(a.count()) + " vs " + std::to_string(b.count()) +
                            " entries)");
    for (std::size_t i = 0; i < a.count(); ++i) {
        const auto& ea = a.entries()[i];
        const auto& eb = b.entries()[i];
        if (ea.name != eb.name || ea.segment != eb.segment ||
            ea.tensor.shape() != eb.tensor.shape())
            throw ContractError(std::string(who) + ": schemas differ at entry '" + ea.name +
                                "'");
    }
}

}  // namespace

Tensor segment_distance(const ParamSet& a, const ParamSet& b, Segment segment) {
    require_same_schema(a, b, "segment_distance");
    return l2_distance(a.flatten_segment(segment), b.flatten_segment(segment));
}

namespace {

// p-th unordered pair (i, j), i < j, in lexicographic order
std::pair<std::int64_t, std::int64_t> unrank_pair(std::int64_t p, std::int64_t n) {
    for (std::int64_t i = 0; i < n - 1; ++i) {
        const std::int64_t row = n - 1 - i;
        if (p < row) return {i, i + 1 + p};
        p -= row;
    }
    throw ContractError("unrank_pair: index out of range");
}

}  // namespace

Tensor mer_regularizer(std::span<const AdaptedParams> adapted, std::span<const Episode> batch,
                       const MerMamlConfig& mer, std::mt19937_64& rng) {
    validate(mer);
    const auto n = static_cast<std::int64_t>(adapted.size());
    if (n < 2)
        throw ConfigError("mer_regularizer: needs at least 2 adapted tasks, got " +
                          std::to_string(n));
    const std::int64_t total_pairs = n * (n - 1) / 2;
    if (mer.k_pairs > total_pairs)
        throw ConfigError("mer_regularizer: k_pairs=" + std::to_string(mer.k_pairs) +
                          " exceeds the " + std::to_string(total_pairs) +
                          " unordered pairs of " + std::to_string(n) + " tasks");
    if (mer.simple_denominator && static_cast<std::int64_t>(batch.size()) != n)
        throw ContractError("mer_regularizer: simple denominator needs one episode per "
                            "adapted task");

    Tensor sum;
    for (auto pick : sample_without_replacement(total_pairs, mer.k_pairs, rng)) {
        const auto [i, j] = unrank_pair(pick, n);
        const ParamSet& pi = adapted[static_cast<std::size_t>(i)].phi;
        const ParamSet& pj = adapted[static_cast<std::size_t>(j)].phi;
        const Tensor num = segment_distance(pi, pj, Segment::solver);
        const Tensor den = mer.simple_denominator
                               ? l2_distance(batch[static_cast<std::size_t>(i)].support_x,
                                             batch[static_cast<std::size_t>(j)].support_x)
                               : segment_distance(pi, pj, Segment::encoder);
        const Tensor ratio = mul(num, reciprocal(clamp_min(den, mer.epsilon_z)));
        Tensor term = rsub_scalar(mer.eta, ratio);
        if (mer.abs_form) term = abs_op(term);
        sum = sum.defined() ? add(sum, term) : term;
    }
    return scale(sum, 1.0 / static_cast<double>(mer.k_pairs));
}

namespace {

void check_maml_batch(const MamlConfig& cfg, std::span<const Episode> batch) {
    if (batch.empty()) throw ValidationError("maml batch: no episodes");
    const bool regression = batch.front().regression;
    if (regression != (cfg.arch == MamlArch::MlpRegression))
        throw ValidationError("maml batch: episode kind does not match the model "
                              "architecture");
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& ep = batch[b];
        if (ep.regression != regression)
            throw ValidationError("maml batch: episode " + std::to_string(b) +
                                  " mixes regression and classification");
        if (!regression && ep.n_way != cfg.n_way)
            throw ValidationError("maml batch: episode " + std::to_string(b) + " is " +
                                  std::to_string(ep.n_way) + "-way but the model expects " +
                                  std::to_string(cfg.n_way));
    }
}

// flat segment values of an adapted copy, for value-level diagnostics
std::vector<double> segment_values(const ParamSet& p, Segment seg) {
    std::vector<double> out;
    for (const auto& e : p.entries())
        if (e.segment == seg) {
            const auto v = e.tensor.values();
            out.insert(out.end(), v.begin(), v.end());
        }
    return out;
}

}  // namespace

ParamSet meta_step(const MamlModel& model, std::span<const Episode> batch,
                   const MamlTrainConfig& tc, const MerMamlConfig& mer, std::mt19937_64& rng,
                   MetaStepStats* stats) {
    validate(tc);
    validate(mer);
    check_maml_batch(model.cfg, batch);
    if (static_cast<std::int64_t>(batch.size()) != tc.meta_batch)
        throw ValidationError("meta_step: got " + std::to_string(batch.size()) +
                              " episodes for meta_batch=" + std::to_string(tc.meta_batch));
    const bool regression = batch.front().regression;
    MetaStepStats local;
    MetaStepStats& st = stats ? *stats : local;

    // pre-adaptation batch score under the shared parameters
    {
        NoGradGuard no_grad;
        double acc = 0.0;
        for (const auto& ep : batch) {
            if (regression)
                acc += maml_task_loss(model.cfg, model.params, ep.query_x, ep.query_y, true)
                           .value();
            else
                acc += accuracy(maml_forward(model.cfg, model.params, ep.query_x), ep.query_y);
        }
        st.pre_score = acc / static_cast<double>(batch.size());
    }

    std::vector<AdaptedParams> adapted;
    adapted.reserve(batch.size());
    Tensor task_sum;
    double post = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ep = batch[i];
        adapted.push_back(inner_adapt(model.cfg, model.params, ep, model.cfg.inner_lr,
                                      model.cfg.inner_steps, model.cfg.first_order,
                                      static_cast<std::int64_t>(i)));
        const Tensor pred = maml_forward(model.cfg, adapted.back().phi, ep.query_x);
        const Tensor loss =
            regression ? mse(pred, ep.query_y) : softmax_cross_entropy(pred, ep.query_y);
        post += regression ? loss.value() : accuracy(pred, ep.query_y);
        task_sum = task_sum.defined() ? add(task_sum, loss) : loss;
    }
    st.post_score = post / static_cast<double>(batch.size());
    st.task_loss = task_sum.value();

    Tensor total = task_sum;
    if (mer.lambda > 0.0) {  // lambda=0 must not touch rng or the tape
        const Tensor reg = mer_regularizer(adapted, batch, mer, rng);
        st.reg_loss = reg.value();
        total = add(task_sum, scale(reg, mer.lambda));
    }
    st.total_loss = total.value();

    // value-level distance diagnostics over every unordered pair
    if (adapted.size() >= 2) {
        std::vector<std::vector<double>> sol, enc, full;
        for (const auto& a : adapted) {
            sol.push_back(segment_values(a.phi, Segment::solver));
            enc.push_back(segment_values(a.phi, Segment::encoder));
            std::vector<double> all = enc.back();
            all.insert(all.end(), sol.back().begin(), sol.back().end());
            full.push_back(std::move(all));
        }
        st.ratio = summary_latent_ratio(sol, enc, mer.epsilon_z);
        st.mean_phi_distance = mean_pairwise_distance(full);
    }

    if (!std::isfinite(st.total_loss))
        throw NumericError("meta_step: non-finite meta-loss (task " +
                           std::to_string(st.task_loss) + ", reg " +
                           std::to_string(st.reg_loss) + ")");
    const ParamSet grads = grad_params(total, model.params, /*create_graph=*/false);
    // the update itself is a value step; the tape ends here
    return sgd_step(model.params, grads, tc.outer_lr).detached(true);
}

MamlEvalResult evaluate_maml(const MamlModel& model, const CharacterStore& store,
                             SplitName split, LabelMode mode, std::int64_t n_episodes,
                             std::int64_t n_way, std::int64_t k_shot, std::int64_t q_queries,
                             std::int64_t eval_inner_steps, std::mt19937_64& rng) {
    if (n_episodes < 1) throw ConfigError("evaluate_maml: n_episodes must be >= 1");
    if (eval_inner_steps < 0)
        throw ConfigError("evaluate_maml: eval_inner_steps must be >= 0");
    std::vector<double> pre, post;
    for (std::int64_t e = 0; e < n_episodes; ++e) {
        const Episode ep = sample_episode(store, split, n_way, k_shot, q_queries, mode, rng);
        {
            NoGradGuard no_grad;
            pre.push_back(accuracy(maml_forward(model.cfg, model.params, ep.query_x),
                                   ep.query_y));
        }
        // adaptation needs the tape for its own gradients, but nothing
        // differentiates through it afterwards
        const auto phi = inner_adapt(model.cfg, model.params, ep, model.cfg.inner_lr,
                                     eval_inner_steps, /*first_order=*/true, e);
        NoGradGuard no_grad;
        post.push_back(accuracy(maml_forward(model.cfg, phi.phi, ep.query_x), ep.query_y));
    }
    auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        const double sd =
            v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>{m, sd};
    };
    MamlEvalResult r;
    std::tie(r.pre_acc, r.pre_std) = mean_std(pre);
    std::tie(r.post_acc, r.post_std) = mean_std(post);
    return r;
}

MamlEvalResult evaluate_maml_regression(const MamlModel& model, const RegressionTaskSpec& spec,
                                        std::int64_t first_task, std::int64_t n_episodes,
                                        std::int64_t k_shot, std::int64_t q_queries,
                                        double noise_sd, std::int64_t eval_inner_steps,
                                        std::mt19937_64& rng) {
    if (n_episodes < 1)
        throw ConfigError("evaluate_maml_regression: n_episodes must be >= 1");
    const std::int64_t n_tasks = spec.n_tasks();
    if (first_task < 0 || first_task >= n_tasks)
        throw ConfigError("evaluate_maml_regression: first_task outside the task range");
    std::vector<double> pre, post;
    for (std::int64_t e = 0; e < n_episodes; ++e) {
        const std::int64_t task =
            first_task + static_cast<std::int64_t>(uniform_below(
                             rng, static_cast<std::uint64_t>(n_tasks - first_task)));
        const Episode ep =
            sample_regression_episode(spec, task, k_shot, q_queries, noise_sd, rng);
        {
            NoGradGuard no_grad;
            pre.push_back(
                maml_task_loss(model.cfg, model.params, ep.query_x, ep.query_y, true).value());
        }
        const auto phi = inner_adapt(model.cfg, model.params, ep, model.cfg.inner_lr,
                                     eval_inner_steps, /*first_order=*/true, e);
        NoGradGuard no_grad;
        post.push_back(
            maml_task_loss(model.cfg, phi.phi, ep.query_x, ep.query_y, true).value());
    }
    auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        const double sd =
            v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>{m, sd};
    };
    MamlEvalResult r;
    std::tie(r.pre_acc, r.pre_std) = mean_std(pre);
    std::tie(r.post_acc, r.post_std) = mean_std(post);
    return r;
}

namespace {

template <typename SampleBatch, typename Evaluate>
void run_maml_loop(MamlModel& model, const MamlTrainConfig& tc, const MerMamlConfig& mer,
                   const MetricsSink& sink, SampleBatch&& sample_batch, Evaluate&& evaluate) {
    validate(tc);
    validate(mer);
    auto pair_rng = make_stream(tc.seed, "maml-pairs");
    double val_pre = 0.0, val_post = 0.0;
    for (std::int64_t iter = 0; iter < tc.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<Episode> batch = sample_batch();
        MetricsRecord rec;
        rec.iteration = iter;
        rec.seed = tc.seed;
        MetaStepStats st;
        auto fill = [&]() {
            rec.task_loss = st.task_loss;
            rec.reg_loss = st.reg_loss;
            rec.total_loss = st.total_loss;
            rec.train_acc = st.post_score;
            rec.summary_ratio = st.ratio;
            rec.mean_phi_distance = st.mean_phi_distance;
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        };
        try {
            model.params = meta_step(model, batch, tc, mer, pair_rng, &st);
        } catch (const NumericError&) {
            fill();
            sink(rec);  // diagnostic record for the abort
            throw;
        }
        if (tc.eval_every > 0 &&
            ((iter + 1) % tc.eval_every == 0 || iter + 1 == tc.iterations)) {
            const auto ev = evaluate(iter);
            val_pre = ev.pre_acc;
            val_post = ev.post_acc;
        }
        rec.val_pre_acc = val_pre;
        rec.val_post_acc = val_post;
        fill();
        sink(rec);
    }
}

}  // namespace

void train_maml(MamlModel& model, const CharacterStore& store, const MamlTrainConfig& tc,
                const MerMamlConfig& mer, const MetricsSink& sink) {
    if (model.cfg.arch != MamlArch::ConvImage)
        throw ConfigError("train_maml: model is not an image classifier");
    if (tc.n_way != model.cfg.n_way)
        throw ConfigError("train_maml: config n_way " + std::to_string(tc.n_way) +
                          " does not match the model's " + std::to_string(model.cfg.n_way));
    auto ep_rng = make_stream(tc.seed, "maml-train-episodes");
    const std::int64_t eval_steps =
        tc.eval_inner_steps >= 0 ? tc.eval_inner_steps : model.cfg.inner_steps;
    run_maml_loop(
        model, tc, mer, sink,
        [&]() {
            std::vector<Episode> batch;
            batch.reserve(static_cast<std::size_t>(tc.meta_batch));
            for (std::int64_t b = 0; b < tc.meta_batch; ++b)
                batch.push_back(sample_episode(store, SplitName::train, tc.n_way, tc.k_shot,
                                               tc.q_queries, tc.mode, ep_rng));
            return batch;
        },
        [&](std::int64_t iter) {
            auto val_rng = make_stream(tc.seed, "maml-val-" + std::to_string(iter));
            return evaluate_maml(model, store, SplitName::val, tc.mode, tc.eval_episodes,
                                 tc.n_way, tc.k_shot, tc.q_queries, eval_steps, val_rng);
        });
}

void train_maml_regression(MamlModel& model, const RegressionTaskSpec& spec,
                           const MamlTrainConfig& tc, const MerMamlConfig& mer,
                           const MetricsSink& sink) {
    if (model.cfg.arch != MamlArch::MlpRegression)
        throw ConfigError("train_maml_regression: model is not a regression net");
    if (tc.reg_train_tasks >= spec.n_tasks())
        throw ConfigError("train_maml_regression: reg_train_tasks leaves no held-out tasks");
    auto ep_rng = make_stream(tc.seed, "maml-train-episodes");
    const std::int64_t eval_steps =
        tc.eval_inner_steps >= 0 ? tc.eval_inner_steps : model.cfg.inner_steps;
    run_maml_loop(
        model, tc, mer, sink,
        [&]() {
            std::vector<Episode> batch;
            batch.reserve(static_cast<std::size_t>(tc.meta_batch));
            for (std::int64_t b = 0; b < tc.meta_batch; ++b) {
                const auto task = static_cast<std::int64_t>(
                    uniform_below(ep_rng, static_cast<std::uint64_t>(tc.reg_train_tasks)));
                batch.push_back(sample_regression_episode(spec, task, tc.k_shot, tc.q_queries,
                                                          tc.reg_noise_sd, ep_rng));
            }
            return batch;
        },
        [&](std::int64_t iter) {
            auto val_rng = make_stream(tc.seed, "maml-val-" + std::to_string(iter));
            return evaluate_maml_regression(model, spec, tc.reg_train_tasks, tc.eval_episodes,
                                            tc.k_shot, tc.q_queries, tc.reg_noise_sd,
                                            eval_steps, val_rng);
        });
}

}  // namespace metareg
