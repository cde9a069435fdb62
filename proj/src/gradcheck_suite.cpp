#include "metareg/gradcheck.hpp"

#include <random>
#include <vector>

#include "metareg/episodes.hpp"
#include "metareg/maml.hpp"
#include "metareg/mann.hpp"
#include "metareg/ops.hpp"
#include "metareg/rng.hpp"

namespace metareg {

namespace {

// Uniform values in ±[lo, hi]: magnitudes bounded away from zero so kinked
// ops (relu, abs, sqrt0, clamp floors) stay differentiable across the
// finite-difference window.
Tensor rand_signed(Shape shape, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution flip(0.5);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = flip(rng) ? mag(rng) : -mag(rng);
    return Tensor::from_values(std::move(shape), std::move(v), /*tracked=*/true);
}

Tensor rand_positive(Shape shape, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = mag(rng);
    return Tensor::from_values(std::move(shape), std::move(v), /*tracked=*/true);
}

CharacterStore random_store(std::int64_t n_classes, std::int64_t n_images, SplitSpec spec,
                            std::uint64_t seed) {
    auto rng = make_stream(seed, "random-store");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<CharacterClass> cs;
    for (std::int64_t c = 0; c < n_classes; ++c) {
        CharacterClass cc;
        cc.name = "class" + std::to_string(c);
        for (std::int64_t j = 0; j < n_images; ++j) {
            std::vector<double> img(kImageSide * kImageSide);
            for (auto& p : img) p = u(rng);
            cc.images.push_back(std::move(img));
        }
        cs.push_back(std::move(cc));
    }
    return CharacterStore(std::move(cs), spec, seed);
}

}  // namespace

std::vector<GradcheckItem> gradcheck_report() {
    std::vector<GradcheckItem> report;
    auto run = [&](std::string name, double threshold, const ParamSet& inputs,
                   const std::function<Tensor(const ParamSet&)>& f) {
        report.push_back({std::move(name), finite_difference_check(f, inputs), threshold});
    };

    {
        auto rng = make_stream(1, "gradcheck-elementwise");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({3, 4}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_signed({3, 4}, 0.2, 1.0, rng));
        run("elementwise arithmetic", 1e-4, ps, [](const ParamSet& p) {
            const Tensor mix = add(scale(p.at("a"), 1.3), neg(sub(p.at("b"), p.at("a"))));
            return sum_all(add(mul(mix, p.at("b")), add_scalar(mix, 0.7)));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-divide");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({2, 5}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_positive({2, 5}, 0.5, 1.5, rng));
        run("division and reciprocal", 1e-4, ps, [](const ParamSet& p) {
            return sum_all(add(div(p.at("a"), p.at("b")), reciprocal(p.at("b"))));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-smooth");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({4, 3}, 0.1, 0.9, rng));
        ps.add("b", Segment::other, rand_positive({4, 3}, 0.3, 1.2, rng));
        run("exp log sigmoid tanh", 1e-4, ps, [](const ParamSet& p) {
            const Tensor lhs = add(exp_op(p.at("a")), log_op(p.at("b")));
            return sum_all(add(lhs, add(sigmoid(p.at("a")), tanh_op(p.at("b")))));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-kinked");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({3, 5}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_positive({3, 5}, 0.4, 1.0, rng));
        run("relu abs clamp sqrt away from kinks", 1e-4, ps, [](const ParamSet& p) {
            const Tensor lhs = add(relu(p.at("a")), abs_op(p.at("a")));
            const Tensor rhs = add(clamp_min(p.at("b"), 0.1), sqrt0(p.at("b")));
            return sum_all(mul(lhs, rhs));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-matmul");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({3, 4}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_signed({5, 4}, 0.2, 1.0, rng));
        run("matmul and transpose", 1e-4, ps, [](const ParamSet& p) {
            return sum_all(matmul(p.at("a"), transpose(p.at("b"))));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-linear");
        ParamSet ps;
        ps.add("x", Segment::other, rand_signed({4, 3}, 0.2, 1.0, rng));
        ps.add("w", Segment::other, rand_signed({3, 2}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_signed({2}, 0.2, 1.0, rng));
        run("linear with column bias", 1e-4, ps, [](const ParamSet& p) {
            const Tensor y = linear(p.at("x"), p.at("w"), p.at("b"));
            return sum_all(mul(y, y));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-plumbing");
        ParamSet ps;
        ps.add("v", Segment::other, rand_signed({8}, 0.2, 1.0, rng));
        ps.add("m", Segment::other, rand_signed({3, 4}, 0.2, 1.0, rng));
        run("reshape concat slice embed", 1e-4, ps, [](const ParamSet& p) {
            const Tensor joined =
                concat_vec({slice_vec(p.at("v"), 1, 3), embed_vec(slice_vec(p.at("v"), 4, 2),
                                                                  1, 5)});
            const Tensor grid = reshape(joined, {2, 4});
            const Tensor cols = concat_cols(slice_cols(p.at("m"), 1, 2),
                                            embed_cols(slice_cols(p.at("m"), 0, 1), 0, 2));
            return add(sum_all(mul(grid, grid)), sum_all(mul(cols, cols)));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-reduce");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({3, 4}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_signed({3, 4}, 0.2, 1.0, rng));
        run("row sums and broadcasts", 1e-4, ps, [](const ParamSet& p) {
            const Tensor rows = broadcast_cols(sum_rows(p.at("a")), 4);
            const Tensor full = broadcast_full(sum_all(p.at("b")), {3, 4});
            return sum_all(mul(rows, add(full, p.at("b"))));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-gather");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({6}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_signed({4}, 0.2, 1.0, rng));
        const auto idx = std::make_shared<const std::vector<std::int64_t>>(
            std::vector<std::int64_t>{4, 0, -1, 2});
        run("gather and scatter", 1e-4, ps, [idx](const ParamSet& p) {
            const Tensor picked = gather(p.at("a"), idx, {4});
            const Tensor spread = scatter_sum(p.at("b"), idx, {6});
            return add(sum_all(mul(picked, p.at("b"))), sum_all(mul(spread, p.at("a"))));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-conv");
        ParamSet ps;
        ps.add("x", Segment::other, rand_signed({2, 2, 6, 6}, 0.2, 1.0, rng));
        ps.add("w", Segment::other, rand_signed({3, 2, 3, 3}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_signed({3}, 0.2, 1.0, rng));
        run("strided padded convolution", 1e-4, ps, [](const ParamSet& p) {
            const Tensor y = conv2d_bias(p.at("x"), p.at("w"), p.at("b"), 2, 1);
            return sum_all(mul(y, y));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-lstm");
        ParamSet ps;
        ps.add("x", Segment::other, rand_signed({2, 3}, 0.2, 1.0, rng));
        ps.add("h", Segment::other, rand_signed({2, 4}, 0.2, 1.0, rng));
        ps.add("c", Segment::other, rand_signed({2, 4}, 0.2, 1.0, rng));
        ps.add("w", Segment::other, rand_signed({7, 16}, 0.1, 0.6, rng));
        ps.add("b", Segment::other, rand_signed({16}, 0.1, 0.6, rng));
        run("lstm cell", 1e-4, ps, [](const ParamSet& p) {
            ParamSet weights;
            weights.add("w", Segment::other, p.at("w"));
            weights.add("b", Segment::other, p.at("b"));
            const auto [h, c] = lstm_cell(p.at("x"), p.at("h"), p.at("c"), weights);
            return add(sum_all(mul(h, h)), sum_all(mul(c, c)));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-xent");
        ParamSet ps;
        ps.add("logits", Segment::other, rand_signed({4, 3}, 0.2, 1.5, rng));
        std::vector<double> y(12, 0.0);
        for (int r = 0; r < 4; ++r) y[static_cast<std::size_t>(r * 3 + r % 3)] = 1.0;
        const Tensor labels = Tensor::from_values({4, 3}, std::move(y));
        run("softmax cross entropy", 1e-4, ps, [labels](const ParamSet& p) {
            return softmax_cross_entropy(p.at("logits"), labels);
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-l2");
        ParamSet ps;
        ps.add("a", Segment::other, rand_signed({7}, 0.2, 1.0, rng));
        ps.add("b", Segment::other, rand_signed({7}, 1.2, 2.0, rng));
        run("l2 distance away from zero", 1e-4, ps, [](const ParamSet& p) {
            return l2_distance(p.at("a"), p.at("b"));
        });
    }
    {
        auto rng = make_stream(1, "gradcheck-mse");
        ParamSet ps;
        ps.add("pred", Segment::other, rand_signed({5, 1}, 0.2, 1.0, rng));
        const Tensor target = rand_signed({5, 1}, 0.2, 1.0, rng);
        run("mean squared error", 1e-4, ps,
            [target](const ParamSet& p) { return mse(p.at("pred"), target); });
    }

    {
        // Full MANN loss with the ratio-target regularizer.  Model seed
        // pinned so no conv activation sits within the finite-difference
        // step of a relu kink (a kink inside the window poisons the numeric
        // derivative without any gradient bug).
        MannConfig cfg;
        cfg.n_way = 2;
        cfg.conv_filters = 2;
        cfg.latent_dim = 3;
        cfg.hidden_dim = 3;
        auto model = mann_init(cfg, 8);
        auto store = random_store(6, 4, {6, 0, 0}, 6);
        auto rng = make_stream(7, "fd");
        std::vector<Episode> batch{
            sample_episode(store, SplitName::train, 2, 1, 1, LabelMode::Shuffled, rng),
            sample_episode(store, SplitName::train, 2, 1, 1, LabelMode::Shuffled, rng)};
        MerMannConfig mer;
        mer.method = MerMethod::RatioTarget;
        mer.lambda = 1.0;
        mer.eta = 1.0;
        run("full mann loss with ratio-target regularizer", 1e-4, model.params,
            [&](const ParamSet& p) {
                MannModel probe{cfg, p};
                return mer_mann_loss(mann_forward(probe, batch), batch, mer).total;
            });
    }
    {
        // Second-order MAML meta-loss with the pair regularizer; same
        // kink-free seed policy as above.
        MamlConfig cfg;
        cfg.arch = MamlArch::ConvImage;
        cfg.n_way = 2;
        cfg.conv_filters = 2;
        cfg.inner_lr = 0.05;
        auto model = maml_init(cfg, 8);
        auto store = random_store(8, 4, {4, 2, 2}, 31);
        auto rng = make_stream(31, "eps");
        std::vector<Episode> batch;
        for (int b = 0; b < 2; ++b)
            batch.push_back(
                sample_episode(store, SplitName::train, 2, 1, 1, LabelMode::Shuffled, rng));
        MerMamlConfig mer;
        mer.lambda = 0.3;
        mer.eta = 1.0;
        mer.k_pairs = 1;
        run("second-order maml meta-loss with pair regularizer", 1e-3, model.params,
            [&](const ParamSet& p) {
                std::vector<AdaptedParams> adapted;
                Tensor sum;
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    adapted.push_back(inner_adapt(cfg, p, batch[i], cfg.inner_lr, 1, false,
                                                  static_cast<std::int64_t>(i)));
                    const Tensor loss = maml_task_loss(cfg, adapted.back().phi,
                                                       batch[i].query_x, batch[i].query_y,
                                                       false);
                    sum = sum.defined() ? add(sum, loss) : loss;
                }
                auto pair_rng = make_stream(0, "pairs");
                return add(sum, scale(mer_regularizer(adapted, batch, mer, pair_rng),
                                      mer.lambda));
            });
    }
    return report;
}

}  // namespace metareg
