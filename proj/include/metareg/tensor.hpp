#pragma once

// Reverse-mode autodiff on dense double tensors.  Every primitive records a
// vjp closure built from other primitives, so a backward pass with
// create_graph=true yields a tape that can itself be differentiated.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metareg/errors.hpp"

namespace metareg {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

// Maps the output gradient to per-parent gradients.  Closures must not
// capture graph nodes; everything they need arrives via the arguments
// (plus constant data such as index tables).
using VjpFn = std::function<std::vector<Tensor>(
    const Tensor& grad, const std::vector<Tensor>& parents, const Tensor& self)>;

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    bool tracked = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    VjpFn vjp;
    ~TensorNode();  // iterative teardown; long tapes must not recurse
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor from_values(Shape shape, std::vector<double> values, bool tracked = false);
    static Tensor zeros(Shape shape, bool tracked = false);
    static Tensor full(Shape shape, double value, bool tracked = false);
    static Tensor scalar(double value, bool tracked = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t size() const;
    bool tracked() const;
    std::span<const double> values() const;
    double value() const;  // scalar-only convenience
    Tensor detach() const;
    bool all_finite() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// Thread-local switch; ops built while disabled are constants.
struct GradMode {
    static bool enabled();
    static void set_enabled(bool on);
};

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Elementwise; binary ops broadcast a single-element operand against the
// other operand's shape, otherwise shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor rsub_scalar(double c, const Tensor& a);  // c - a
Tensor clamp_min(const Tensor& a, double floor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor abs_op(const Tensor& a);
Tensor sqrt0(const Tensor& a);  // sqrt with zero subgradient at 0

// 2-D linear algebra, row-major.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Flat-index gather/scatter.  An index of -1 reads/writes nothing (gather
// emits 0 there); the two ops are adjoint, which is what their vjps use.
Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> indices,
              Shape out_shape);
Tensor scatter_sum(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> indices,
                   Shape out_shape);

// 1-D concatenation / windowing and the matching zero-padded inverses.
Tensor concat_vec(const std::vector<Tensor>& parts);
Tensor slice_vec(const Tensor& a, std::int64_t start, std::int64_t len);
Tensor embed_vec(const Tensor& a, std::int64_t start, std::int64_t out_len);

// Column-wise variants for [m,n] matrices.
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t len);
Tensor embed_cols(const Tensor& a, std::int64_t start, std::int64_t out_cols);

// Reductions and their broadcast adjoints.
Tensor sum_all(const Tensor& a);                    // -> scalar
Tensor broadcast_full(const Tensor& s, Shape shape);
Tensor sum_rows(const Tensor& a);                   // [m,n] -> [m]
Tensor broadcast_cols(const Tensor& v, std::int64_t n);  // [m] -> [m,n]

// Composites.
Tensor div(const Tensor& a, const Tensor& b);
Tensor mean_all(const Tensor& a);

// Gradients of a scalar loss with respect to each entry of wrt.  Entries the
// loss does not reach get exact zero tensors of matching shape.  With
// create_graph=true the returned gradients are themselves differentiable.
std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> wrt,
                             bool create_graph = false);

}  // namespace metareg
