#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "metareg/gradcheck.hpp"
#include "metareg/ops.hpp"
#include "metareg/param_set.hpp"
#include "metareg/rng.hpp"
#include "metareg/tensor.hpp"

using namespace metareg;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = dist(rng);
    return Tensor::from_values(std::move(shape), std::move(v), false);
}

// Finite-difference check of a scalar function of one tensor input.
double fd_check_1(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-5) {
    ParamSet ps;
    ps.add("x", Segment::other, x);
    return finite_difference_check([&](const ParamSet& p) { return f(p.at("x")); }, ps, step);
}

double fd_check_2(const std::function<Tensor(const Tensor&, const Tensor&)>& f, const Tensor& a,
                  const Tensor& b, double step = 1e-5) {
    ParamSet ps;
    ps.add("a", Segment::other, a);
    ps.add("b", Segment::other, b);
    return finite_difference_check(
        [&](const ParamSet& p) { return f(p.at("a"), p.at("b")); }, ps, step);
}

}  // namespace

TEST_CASE("tensor factories validate shape/value agreement") {
    CHECK_THROWS_AS(Tensor::from_values({2, 3}, {1.0, 2.0}), DimensionError);
    Tensor t = Tensor::full({2, 2}, 3.5);
    CHECK(t.size() == 4);
    CHECK(t.values()[3] == 3.5);
    CHECK(Tensor::scalar(2.0).value() == 2.0);
    CHECK_THROWS_AS(Tensor::full({2, 2}, 1.0).value(), ContractError);
}

TEST_CASE("elementwise ops broadcast single elements and reject mismatches") {
    Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor s = Tensor::scalar(10.0);
    Tensor r = add(a, s);
    CHECK(r.shape() == Shape{2, 2});
    CHECK(r.values()[0] == 11.0);
    CHECK(r.values()[3] == 14.0);
    Tensor m = mul(s, a);
    CHECK(m.values()[2] == 30.0);
    CHECK_THROWS_AS(add(a, Tensor::zeros({2, 3})), DimensionError);
    CHECK_THROWS_AS(add(a, Tensor::zeros({2})), DimensionError);
}

TEST_CASE("matmul values and shape errors") {
    Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_values({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(c.values()[0] == doctest::Approx(58).epsilon(1e-14));
    CHECK(c.values()[3] == doctest::Approx(154).epsilon(1e-14));
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("grad of x^2 at x=3 is 6") {
    Tensor x = Tensor::scalar(3.0, true);
    Tensor loss = mul(x, x);
    auto g = backward(loss, std::vector<Tensor>{x});
    CHECK(g[0].value() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("grad of squared distance to a shifted copy is -2*eps") {
    auto rng = make_stream(7, "shift");
    Tensor a = random_tensor({5}, rng);
    std::vector<double> shifted(a.values().begin(), a.values().end());
    const double eps = 0.125;
    for (auto& v : shifted) v += eps;
    Tensor a_leaf = Tensor::from_values({5}, {a.values().begin(), a.values().end()}, true);
    Tensor b = Tensor::from_values({5}, std::move(shifted), false);
    Tensor d = l2_distance(a_leaf, b);
    Tensor loss = mul(d, d);
    auto g = backward(loss, std::vector<Tensor>{a_leaf});
    for (double v : g[0].values()) CHECK(v == doctest::Approx(-2.0 * eps).epsilon(1e-9));
}

TEST_CASE("backward requires a scalar loss and fills unreachable entries with zeros") {
    Tensor x = Tensor::zeros({2, 2}, true);
    CHECK_THROWS_AS(backward(x, std::vector<Tensor>{x}), ContractError);

    Tensor used = Tensor::scalar(2.0, true);
    Tensor unused = Tensor::from_values({3}, {1, 2, 3}, true);
    Tensor loss = mul(used, used);
    auto g = backward(loss, std::vector<Tensor>{used, unused});
    CHECK(g[0].value() == doctest::Approx(4.0));
    CHECK(g[1].shape() == Shape{3});
    for (double v : g[1].values()) CHECK(v == 0.0);
}

TEST_CASE("fan-out accumulates gradients from every consumer") {
    Tensor x = Tensor::scalar(1.5, true);
    Tensor loss = add(mul(x, x), scale(x, 3.0));  // x^2 + 3x -> grad 2x + 3
    auto g = backward(loss, std::vector<Tensor>{x});
    CHECK(g[0].value() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("NoGradGuard suppresses taping") {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor y;
    {
        NoGradGuard ng;
        y = mul(x, x);
    }
    CHECK_FALSE(y.tracked());
    auto g = backward(mul(x, x), std::vector<Tensor>{x});
    CHECK(g[0].value() == doctest::Approx(4.0));
}

TEST_CASE("detach cuts the tape") {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor y = mul(x, x).detach();
    Tensor loss = mul(y, x);
    auto g = backward(loss, std::vector<Tensor>{x});
    CHECK(g[0].value() == doctest::Approx(4.0));  // y treated as the constant 4
}

TEST_CASE("primitive gradients match central finite differences over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = make_stream(seed, "fd-primitives");
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
        Tensor v = random_tensor({6}, rng);
        Tensor m1 = random_tensor({3, 4}, rng);
        Tensor m2 = random_tensor({4, 2}, rng);

        // sum of squares keeps every output coordinate active in the loss
        auto weigh = [](const Tensor& t) { return sum_all(mul(t, t)); };

        CHECK(fd_check_2([&](const Tensor& x, const Tensor& y) { return weigh(add(x, y)); }, a,
                         b) < 1e-4);
        CHECK(fd_check_2([&](const Tensor& x, const Tensor& y) { return weigh(sub(x, y)); }, a,
                         b) < 1e-4);
        CHECK(fd_check_2([&](const Tensor& x, const Tensor& y) { return weigh(mul(x, y)); }, a,
                         b) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(neg(x)); }, a) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(scale(x, -1.7)); }, a) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(add_scalar(x, 0.3)); }, a) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(rsub_scalar(2.0, x)); }, a) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(sigmoid(x)); }, a) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(tanh_op(x)); }, a) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(exp_op(x)); }, a) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(log_op(x)); }, pos) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(reciprocal(x)); }, pos) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(sqrt0(x)); }, pos) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(relu(x)); }, pos) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(abs_op(x)); }, pos) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(clamp_min(x, 0.7)); },
                         random_tensor({3, 3}, rng, 1.0, 2.0)) < 1e-4);
        CHECK(fd_check_2([&](const Tensor& x, const Tensor& y) { return weigh(matmul(x, y)); },
                         m1, m2) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(transpose(x)); }, m1) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(reshape(x, {4, 3})); }, m1) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(slice_vec(x, 1, 4)); }, v) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(embed_vec(x, 2, 10)); }, v) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(slice_cols(x, 1, 2)); }, m1) <
              1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(embed_cols(x, 1, 6)); }, m1) <
              1e-4);
        CHECK(fd_check_2(
                  [&](const Tensor& x, const Tensor& y) { return weigh(concat_cols(x, y)); },
                  m1, random_tensor({3, 2}, rng)) < 1e-4);
        CHECK(fd_check_1(
                  [&](const Tensor& x) {
                      return weigh(concat_vec({slice_vec(x, 0, 2), slice_vec(x, 3, 3)}));
                  },
                  v) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return mul(sum_all(x), sum_all(x)); }, a) <
              1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(sum_rows(x)); }, m1) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(broadcast_cols(x, 3)); }, v) <
              1e-4);
        CHECK(fd_check_1(
                  [&](const Tensor& x) { return weigh(broadcast_full(sum_all(x), {2, 2})); },
                  v) < 1e-4);
        CHECK(fd_check_2([&](const Tensor& x, const Tensor& y) { return weigh(div(x, y)); }, a,
                         pos) < 1e-4);
        CHECK(fd_check_1([&](const Tensor& x) { return mean_all(mul(x, x)); }, a) < 1e-4);

        auto idx = std::make_shared<const std::vector<std::int64_t>>(
            std::vector<std::int64_t>{0, 5, -1, 3, 5, 11});
        CHECK(fd_check_1([&](const Tensor& x) { return weigh(gather(x, idx, {6})); }, a) < 1e-4);
        CHECK(fd_check_1(
                  [&](const Tensor& x) {
                      return weigh(scatter_sum(reshape(x, {6}), idx, {12}));
                  },
                  v) < 1e-4);
    }
}

TEST_CASE("second derivative of sigmoid via taped backward matches analytic") {
    Tensor x = Tensor::scalar(0.31, true);
    Tensor y = sigmoid(x);
    auto g1 = backward(y, std::vector<Tensor>{x}, /*create_graph=*/true);
    auto g2 = backward(g1[0], std::vector<Tensor>{x});
    const double s = 1.0 / (1.0 + std::exp(-0.31));
    const double expected = s * (1 - s) * (1 - 2 * s);
    CHECK(g2[0].value() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("inner-step jacobian on a quadratic equals I - lr*Hessian") {
    // L(theta) = 0.5 theta^T A theta, A symmetric; one gradient step gives
    // phi = (I - a A) theta and d/dtheta of 0.5|phi|^2 is (I - a A)^2 theta.
    const double alpha = 0.1;
    std::vector<double> A = {2.0, 0.5, 0.5, 1.0};
    Tensor theta = Tensor::from_values({2, 1}, {0.7, -0.4}, true);
    Tensor Amat = Tensor::from_values({2, 2}, A);

    Tensor L = scale(sum_all(matmul(transpose(theta), matmul(Amat, theta))), 0.5);
    auto g = backward(L, std::vector<Tensor>{theta}, /*create_graph=*/true);
    Tensor phi = sub(theta, scale(g[0], alpha));
    Tensor outer = scale(sum_all(mul(phi, phi)), 0.5);
    auto meta = backward(outer, std::vector<Tensor>{theta});

    // analytic (I - a A)^2 theta
    double J[4] = {1 - alpha * A[0], -alpha * A[1], -alpha * A[2], 1 - alpha * A[3]};
    double J2[4] = {J[0] * J[0] + J[1] * J[2], J[0] * J[1] + J[1] * J[3],
                    J[2] * J[0] + J[3] * J[2], J[2] * J[1] + J[3] * J[3]};
    double th[2] = {0.7, -0.4};
    double expected[2] = {J2[0] * th[0] + J2[1] * th[1], J2[2] * th[0] + J2[3] * th[1]};
    CHECK(meta[0].values()[0] == doctest::Approx(expected[0]).epsilon(1e-8));
    CHECK(meta[0].values()[1] == doctest::Approx(expected[1]).epsilon(1e-8));
}

TEST_CASE("meta-gradient through one inner step matches finite differences") {
    ParamSet ps;
    ps.add("theta", Segment::other, Tensor::from_values({2, 1}, {0.7, -0.4}, true));
    Tensor Amat = Tensor::from_values({2, 2}, {2.0, 0.5, 0.5, 1.0});
    auto meta_loss = [&](const ParamSet& p) {
        const Tensor& th = p.at("theta");
        Tensor L = scale(sum_all(matmul(transpose(th), matmul(Amat, th))), 0.5);
        auto g = backward(L, std::vector<Tensor>{th}, /*create_graph=*/true);
        Tensor phi = sub(th, scale(g[0], 0.1));
        return scale(sum_all(mul(phi, phi)), 0.5);
    };
    CHECK(finite_difference_check(meta_loss, ps, 1e-5) < 1e-6);
}

TEST_CASE("identical seeds give identical streams, tags decorrelate") {
    auto r1 = make_stream(42, "episodes");
    auto r2 = make_stream(42, "episodes");
    auto r3 = make_stream(42, "init");
    bool all_equal = true, any_diff_tag = false;
    for (int i = 0; i < 50; ++i) {
        auto a = r1(), b = r2(), c = r3();
        all_equal = all_equal && (a == b);
        any_diff_tag = any_diff_tag || (a != c);
    }
    CHECK(all_equal);
    CHECK(any_diff_tag);
}

TEST_CASE("deep chains tear down and backprop without recursion limits") {
    Tensor x = Tensor::scalar(1.0, true);
    Tensor y = x;
    for (int i = 0; i < 60000; ++i) y = add_scalar(y, 0.0);
    auto g = backward(y, std::vector<Tensor>{x});
    CHECK(g[0].value() == doctest::Approx(1.0));
    // destruction of the 60k-node tape happens here
}

TEST_CASE("ParamSet flatten/unflatten round-trips bit-exactly") {
    auto rng = make_stream(3, "paramset");
    ParamSet ps;
    ps.add("enc.w", Segment::encoder, random_tensor({3, 2}, rng));
    ps.add("enc.b", Segment::encoder, random_tensor({2}, rng));
    ps.add("head.w", Segment::solver, random_tensor({2, 5}, rng));
    ps.add("stat", Segment::other,
           Tensor::from_values({3}, {1e-300, -0.0, std::nextafter(1.0, 2.0)}));

    auto flat = ps.flatten();
    CHECK(flat.size() == static_cast<std::size_t>(ps.total_size()));
    ParamSet back = ps.unflattened(flat, true);
    for (std::size_t i = 0; i < ps.count(); ++i) {
        const auto& a = ps.entries()[i];
        const auto& b = back.entries()[i];
        CHECK(a.name == b.name);
        CHECK(a.segment == b.segment);
        REQUIRE(a.tensor.shape() == b.tensor.shape());
        for (std::int64_t j = 0; j < a.tensor.size(); ++j) {
            // bit-exact, including -0.0 and denormals
            CHECK(std::memcmp(&a.tensor.values()[j], &b.tensor.values()[j], sizeof(double)) ==
                  0);
        }
    }
    CHECK(back.at("enc.b").tracked());
    CHECK_THROWS_AS(ps.unflattened(std::vector<double>(3), true), DimensionError);
}

TEST_CASE("ParamSet rejects duplicates and unknown names") {
    ParamSet ps;
    ps.add("w", Segment::encoder, Tensor::zeros({2}));
    CHECK_THROWS_AS(ps.add("w", Segment::solver, Tensor::zeros({2})), ContractError);
    CHECK_THROWS_AS(ps.at("nope"), ContractError);
    CHECK(ps.segment_of("w") == Segment::encoder);
}

TEST_CASE("segment flattening concatenates in entry order") {
    ParamSet ps;
    ps.add("e1", Segment::encoder, Tensor::from_values({2}, {1, 2}, true));
    ps.add("s1", Segment::solver, Tensor::from_values({2, 1}, {5, 6}, true));
    ps.add("e2", Segment::encoder, Tensor::from_values({1}, {3}, true));
    Tensor enc = ps.flatten_segment(Segment::encoder);
    CHECK(enc.shape() == Shape{3});
    CHECK(enc.values()[0] == 1.0);
    CHECK(enc.values()[2] == 3.0);
    CHECK_THROWS_AS(ps.flatten_segment(Segment::other), ContractError);

    // taped: gradient flows back to the entries
    Tensor loss = sum_all(mul(enc, enc));
    auto g = backward(loss, std::vector<Tensor>{ps.at("e2")});
    CHECK(g[0].values()[0] == doctest::Approx(6.0));
}

TEST_CASE("grad_params keeps schema and zero-fills unreached entries") {
    ParamSet ps;
    ps.add("a", Segment::other, Tensor::scalar(3.0, true));
    ps.add("b", Segment::other, Tensor::scalar(5.0, true));
    Tensor loss = mul(ps.at("a"), ps.at("a"));
    ParamSet g = grad_params(loss, ps);
    CHECK(g.at("a").value() == doctest::Approx(6.0));
    CHECK(g.at("b").value() == 0.0);
    CHECK(g.entries()[1].segment == Segment::other);
}
