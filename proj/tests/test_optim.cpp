#include <doctest.h>

#include <cmath>
#include <random>

#include "metareg/gradcheck.hpp"
#include "metareg/optim.hpp"
#include "metareg/rng.hpp"

using namespace metareg;

namespace {

ParamSet single(const char* name, Tensor t) {
    ParamSet ps;
    ps.add(name, Segment::other, std::move(t));
    return ps;
}

}  // namespace

TEST_CASE("sgd_step with lr 0 is the identity") {
    ParamSet p = single("w", Tensor::from_values({3}, {1.5, -2.0, 0.25}, true));
    ParamSet g = single("w", Tensor::from_values({3}, {10, 20, 30}));
    ParamSet out = sgd_step(p, g, 0.0);
    for (int i = 0; i < 3; ++i) CHECK(out.at("w").values()[i] == p.at("w").values()[i]);
}

TEST_CASE("sgd_step arithmetic matches the inner-loop regime") {
    ParamSet p = single("w", Tensor::scalar(1.0, true));
    ParamSet g = single("w", Tensor::scalar(2.0));
    CHECK(sgd_step(p, g, 0.04).at("w").value() == doctest::Approx(0.92).epsilon(1e-15));
}

TEST_CASE("sgd_step rejects schema mismatches") {
    ParamSet p = single("w", Tensor::zeros({3}, true));
    CHECK_THROWS_AS(sgd_step(p, single("w", Tensor::zeros({4})), 0.1), DimensionError);
    CHECK_THROWS_AS(sgd_step(p, single("v", Tensor::zeros({3})), 0.1), ContractError);
}

TEST_CASE("differentiating through sgd_step sees I - lr*Hessian") {
    // scalar quadratic: L = theta^2, phi = theta - lr*2*theta, dphi/dtheta = 1 - 2 lr
    Tensor theta = Tensor::scalar(1.5, true);
    Tensor L = mul(theta, theta);
    auto g = backward(L, std::vector<Tensor>{theta}, /*create_graph=*/true);
    ParamSet p = single("w", theta);
    ParamSet gs = p.with_tensors({g[0]});
    ParamSet phi = sgd_step(p, gs, 0.04);
    auto j = backward(phi.at("w"), std::vector<Tensor>{theta});
    CHECK(j[0].value() == doctest::Approx(0.92).epsilon(1e-12));
}

TEST_CASE("adam_step leaves params unchanged under zero gradients") {
    AdamState st;
    ParamSet p = single("w", Tensor::from_values({2}, {0.7, -0.3}, true));
    ParamSet g = single("w", Tensor::zeros({2}));
    ParamSet out = adam_step(st, p, g, 0.001);
    CHECK(out.at("w").values()[0] == 0.7);
    CHECK(out.at("w").values()[1] == -0.3);
    CHECK(st.t == 1);
}

TEST_CASE("first adam step moves each coordinate by ~lr*sign(grad)") {
    AdamState st;
    ParamSet p = single("w", Tensor::from_values({3}, {0.0, 1.0, -2.0}, true));
    ParamSet g = single("w", Tensor::from_values({3}, {0.5, -3.0, 1e-3}));
    const double lr = 0.001;
    ParamSet out = adam_step(st, p, g, lr);
    for (int i = 0; i < 3; ++i) {
        const double step = out.at("w").values()[i] - p.at("w").values()[i];
        const double sign = g.at("w").values()[i] > 0 ? 1.0 : -1.0;
        CHECK(step == doctest::Approx(-lr * sign).epsilon(1e-4));
    }
}

TEST_CASE("adam 10-step trajectory on x^2 matches a scalar reference") {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    // independent scalar implementation
    double x = 1.0, m = 0.0, v = 0.0;
    std::vector<double> ref;
    for (int t = 1; t <= 10; ++t) {
        const double grad = 2.0 * x;
        m = b1 * m + (1 - b1) * grad;
        v = b2 * v + (1 - b2) * grad * grad;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        x -= lr * mh / (std::sqrt(vh) + eps);
        ref.push_back(x);
    }

    AdamState st;
    ParamSet p = single("x", Tensor::scalar(1.0, true));
    for (int t = 0; t < 10; ++t) {
        Tensor loss = mul(p.at("x"), p.at("x"));
        ParamSet g = grad_params(loss, p);
        p = adam_step(st, p, g, lr, b1, b2, eps);
        CHECK(p.at("x").value() == doctest::Approx(ref[static_cast<std::size_t>(t)])
                                       .epsilon(1e-10));
    }
}

TEST_CASE("adam_step refuses non-finite gradients") {
    AdamState st;
    ParamSet p = single("w", Tensor::scalar(1.0, true));
    ParamSet g = single("w", Tensor::scalar(std::nan("")));
    CHECK_THROWS_AS(adam_step(st, p, g, 0.001), NumericError);
}

TEST_CASE("adam trajectories are bitwise deterministic") {
    auto run = [] {
        AdamState st;
        ParamSet p;
        p.add("w", Segment::other, Tensor::from_values({2}, {0.3, -0.8}, true));
        for (int t = 0; t < 5; ++t) {
            Tensor loss = sum_all(mul(p.at("w"), p.at("w")));
            p = adam_step(st, p, grad_params(loss, p), 0.01);
        }
        return p.flatten();
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);
}

TEST_CASE("finite_difference_check on a pure quadratic is tight") {
    auto rng = make_stream(11, "fd-quad");
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(6);
    for (auto& x : v) x = dist(rng);
    ParamSet ps = single("w", Tensor::from_values({6}, v));
    auto f = [](const ParamSet& p) { return sum_all(mul(p.at("w"), p.at("w"))); };
    CHECK(finite_difference_check(f, ps, 1e-5) < 1e-8);
}
