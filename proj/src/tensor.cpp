#include "metareg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace metareg {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

TensorNode::~TensorNode() {
    // Drain the ancestor chain iteratively so long tapes do not blow the stack.
    std::vector<std::shared_ptr<TensorNode>> stack(std::move(parents));
    while (!stack.empty()) {
        auto p = std::move(stack.back());
        stack.pop_back();
        if (p && p.use_count() == 1) {
            for (auto& gp : p->parents) stack.push_back(std::move(gp));
            p->parents.clear();
        }
    }
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> values) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    return n;
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

bool any_tracked(const std::vector<Tensor>& parents) {
    for (const auto& p : parents)
        if (p.tracked()) return true;
    return false;
}

// Builds an op node.  Tracking is dropped (along with parent links and the
// vjp) when grad mode is off or no parent is tracked.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents, VjpFn vjp) {
    auto n = make_node(std::move(shape), std::move(values));
    if (g_grad_enabled && any_tracked(parents)) {
        n->tracked = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->vjp = std::move(vjp);
    }
    return Tensor(std::move(n));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return;
    if (a.shape().size() != b.shape().size())
        throw DimensionError(std::string(op) + ": rank mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    for (std::size_t ax = 0; ax < a.shape().size(); ++ax)
        if (a.shape()[ax] != b.shape()[ax])
            throw DimensionError(std::string(op) + ": axis " + std::to_string(ax) +
                                 " mismatch " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
}

// Collapses an output-shaped gradient to the operand's shape; only needed
// when a single-element operand was broadcast against a larger one.
Tensor reduce_to(const Tensor& g, const Tensor& operand) {
    if (g.shape() == operand.shape()) return g;
    Tensor r = operand.size() == 1 && g.size() > 1 ? sum_all(g) : g;
    return reshape(r, operand.shape());
}

// Elementwise binary with single-element broadcast on either side.
template <typename Fwd>
Tensor binary_ew(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, VjpFn vjp) {
    require_defined(a, name);
    require_defined(b, name);
    const bool sa = a.size() == 1, sb = b.size() == 1;
    if (!sa && !sb) require_same_shape(name, a, b);
    const Shape& out_shape = sa ? b.shape() : a.shape();
    const std::int64_t n = numel(out_shape);
    std::vector<double> out(static_cast<std::size_t>(n));
    auto av = a.values(), bv = b.values();
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = fwd(av[sa ? 0 : i], bv[sb ? 0 : i]);
    return make_op(out_shape, std::move(out), {a, b}, std::move(vjp));
}

template <typename Fwd>
Tensor unary_ew(const char* name, const Tensor& a, Fwd fwd, VjpFn vjp) {
    require_defined(a, name);
    const std::int64_t n = a.size();
    std::vector<double> out(static_cast<std::size_t>(n));
    auto av = a.values();
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fwd(av[i]);
    return make_op(a.shape(), std::move(out), {a}, std::move(vjp));
}

void require_2d(const char* op, const Tensor& a) {
    if (a.shape().size() != 2)
        throw DimensionError(std::string(op) + ": expects 2-D input, got " +
                             shape_str(a.shape()));
}

}  // namespace

// --- Tensor basics ---------------------------------------------------------

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool tracked) {
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
        throw DimensionError("from_values: shape " + shape_str(shape) + " wants " +
                             std::to_string(numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    auto n = make_node(std::move(shape), std::move(values));
    n->tracked = tracked;
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool tracked) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)), 0.0);
    return from_values(std::move(shape), std::move(v), tracked);
}

Tensor Tensor::full(Shape shape, double value, bool tracked) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)), value);
    return from_values(std::move(shape), std::move(v), tracked);
}

Tensor Tensor::scalar(double value, bool tracked) {
    return from_values(Shape{}, {value}, tracked);
}

const Shape& Tensor::shape() const {
    require_defined(*this, "shape");
    return node_->shape;
}

std::int64_t Tensor::size() const {
    require_defined(*this, "size");
    return static_cast<std::int64_t>(node_->values.size());
}

bool Tensor::tracked() const { return node_ && node_->tracked; }

std::span<const double> Tensor::values() const {
    require_defined(*this, "values");
    return {node_->values.data(), node_->values.size()};
}

double Tensor::value() const {
    if (size() != 1)
        throw ContractError("value: tensor has " + std::to_string(size()) +
                            " elements, expected a single one");
    return node_->values[0];
}

Tensor Tensor::detach() const {
    require_defined(*this, "detach");
    return from_values(node_->shape, node_->values, false);
}

bool Tensor::all_finite() const {
    for (double v : values())
        if (!std::isfinite(v)) return false;
    return true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// --- Elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "add", a, b, [](double x, double y) { return x + y; },
        [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
            return std::vector<Tensor>{reduce_to(g, p[0]), reduce_to(g, p[1])};
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
            return std::vector<Tensor>{reduce_to(g, p[0]), reduce_to(neg(g), p[1])};
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_ew(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
            return std::vector<Tensor>{reduce_to(mul(g, p[1]), p[0]),
                                       reduce_to(mul(g, p[0]), p[1])};
        });
}

Tensor neg(const Tensor& a) {
    return unary_ew(
        "neg", a, [](double x) { return -x; },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
            return std::vector<Tensor>{neg(g)};
        });
}

Tensor scale(const Tensor& a, double c) {
    return unary_ew(
        "scale", a, [c](double x) { return x * c; },
        [c](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
            return std::vector<Tensor>{scale(g, c)};
        });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_ew(
        "add_scalar", a, [c](double x) { return x + c; },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
            return std::vector<Tensor>{g};
        });
}

Tensor rsub_scalar(double c, const Tensor& a) {
    return unary_ew(
        "rsub_scalar", a, [c](double x) { return c - x; },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
            return std::vector<Tensor>{neg(g)};
        });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary_ew(
        "clamp_min", a, [floor](double x) { return x > floor ? x : floor; },
        [floor](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
            auto av = p[0].values();
            std::vector<double> mask(av.size());
            for (std::size_t i = 0; i < av.size(); ++i) mask[i] = av[i] > floor ? 1.0 : 0.0;
            Tensor m = Tensor::from_values(p[0].shape(), std::move(mask));
            return std::vector<Tensor>{mul(g, m)};
        });
}

Tensor relu(const Tensor& a) {
    return unary_ew(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
            auto av = p[0].values();
            std::vector<double> mask(av.size());
            for (std::size_t i = 0; i < av.size(); ++i) mask[i] = av[i] > 0.0 ? 1.0 : 0.0;
            Tensor m = Tensor::from_values(p[0].shape(), std::move(mask));
            return std::vector<Tensor>{mul(g, m)};
        });
}

Tensor sigmoid(const Tensor& a) {
    return unary_ew(
        "sigmoid", a,
        [](double x) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor& self) {
            // s' = s (1 - s), expressed through taped ops so it stays differentiable
            return std::vector<Tensor>{mul(mul(g, self), rsub_scalar(1.0, self))};
        });
}

Tensor tanh_op(const Tensor& a) {
    return unary_ew(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor& self) {
            return std::vector<Tensor>{mul(g, rsub_scalar(1.0, mul(self, self)))};
        });
}

Tensor exp_op(const Tensor& a) {
    return unary_ew(
        "exp", a, [](double x) { return std::exp(x); },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor& self) {
            return std::vector<Tensor>{mul(g, self)};
        });
}

Tensor log_op(const Tensor& a) {
    return unary_ew(
        "log", a, [](double x) { return std::log(x); },
        [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
            return std::vector<Tensor>{mul(g, reciprocal(p[0]))};
        });
}

Tensor reciprocal(const Tensor& a) {
    return unary_ew(
        "reciprocal", a, [](double x) { return 1.0 / x; },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor& self) {
            return std::vector<Tensor>{neg(mul(g, mul(self, self)))};
        });
}

Tensor abs_op(const Tensor& a) {
    return unary_ew(
        "abs", a, [](double x) { return std::abs(x); },
        [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
            auto av = p[0].values();
            std::vector<double> sign(av.size());
            for (std::size_t i = 0; i < av.size(); ++i)
                sign[i] = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
            Tensor s = Tensor::from_values(p[0].shape(), std::move(sign));
            return std::vector<Tensor>{mul(g, s)};
        });
}

Tensor sqrt0(const Tensor& a) {
    require_defined(a, "sqrt0");
    for (double v : a.values())
        if (v < 0.0) throw NumericError("sqrt0: negative input " + std::to_string(v));
    return unary_ew(
        "sqrt0", a, [](double x) { return std::sqrt(x); },
        [](const Tensor& g, const std::vector<Tensor>&, const Tensor& self) {
            // d sqrt = g / (2 sqrt); zero subgradient where the output is 0.
            auto sv = self.values();
            bool has_zero =
                std::any_of(sv.begin(), sv.end(), [](double v) { return v == 0.0; });
            if (!has_zero)
                return std::vector<Tensor>{scale(mul(g, reciprocal(self)), 0.5)};
            // Bump zero entries to a denominator of 1 before masking them out,
            // so no overflow sneaks in ahead of the multiply by 0.
            std::vector<double> bump(sv.size()), mask(sv.size());
            for (std::size_t i = 0; i < sv.size(); ++i) {
                bump[i] = sv[i] == 0.0 ? 1.0 : 0.0;
                mask[i] = sv[i] > 0.0 ? 1.0 : 0.0;
            }
            Tensor safe = add(self, Tensor::from_values(self.shape(), std::move(bump)));
            Tensor da = scale(mul(g, reciprocal(safe)), 0.5);
            da = mul(da, Tensor::from_values(self.shape(), std::move(mask)));
            return std::vector<Tensor>{da};
        });
}

// --- Linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    require_2d("matmul", a);
    require_2d("matmul", b);
    const std::int64_t m = a.shape()[0], k = a.shape()[1];
    const std::int64_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul: inner axis mismatch, lhs axis 1 is " + std::to_string(k) +
                             " but rhs axis 0 is " + std::to_string(k2));
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::int64_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        const double* arow = av + i * k;
        for (std::int64_t l = 0; l < k; ++l) {
            const double ail = arow[l];
            if (ail == 0.0) continue;
            const double* brow = bv + l * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
        }
    }
    return make_op({m, n}, std::move(out), {a, b},
                   [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
                       return std::vector<Tensor>{matmul(g, transpose(p[1])),
                                                  matmul(transpose(p[0]), g)};
                   });
}

Tensor transpose(const Tensor& a) {
    require_defined(a, "transpose");
    require_2d("transpose", a);
    const std::int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(m * n));
    auto av = a.values();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j * m + i)] = av[i * n + j];
    return make_op({n, m}, std::move(out), {a},
                   [](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       return std::vector<Tensor>{transpose(g)};
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (numel(shape) != a.size())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    std::vector<double> vals(a.values().begin(), a.values().end());
    return make_op(std::move(shape), std::move(vals), {a},
                   [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
                       return std::vector<Tensor>{reshape(g, p[0].shape())};
                   });
}

// --- Indexing --------------------------------------------------------------

Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> indices,
              Shape out_shape) {
    require_defined(a, "gather");
    if (!indices) throw ContractError("gather: null index table");
    if (static_cast<std::int64_t>(indices->size()) != numel(out_shape))
        throw DimensionError("gather: " + std::to_string(indices->size()) +
                             " indices cannot fill " + shape_str(out_shape));
    const std::int64_t in_size = a.size();
    auto av = a.values();
    std::vector<double> out(indices->size());
    for (std::size_t r = 0; r < indices->size(); ++r) {
        const std::int64_t idx = (*indices)[r];
        if (idx >= in_size)
            throw DimensionError("gather: index " + std::to_string(idx) +
                                 " out of range for input of size " + std::to_string(in_size));
        out[r] = idx < 0 ? 0.0 : av[idx];
    }
    return make_op(std::move(out_shape), std::move(out), {a},
                   [indices](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
                       return std::vector<Tensor>{scatter_sum(g, indices, p[0].shape())};
                   });
}

Tensor scatter_sum(const Tensor& a, std::shared_ptr<const std::vector<std::int64_t>> indices,
                   Shape out_shape) {
    require_defined(a, "scatter_sum");
    if (!indices) throw ContractError("scatter_sum: null index table");
    if (static_cast<std::int64_t>(indices->size()) != a.size())
        throw DimensionError("scatter_sum: " + std::to_string(indices->size()) +
                             " indices for input of size " + std::to_string(a.size()));
    const std::int64_t out_size = numel(out_shape);
    std::vector<double> out(static_cast<std::size_t>(out_size), 0.0);
    auto av = a.values();
    for (std::size_t r = 0; r < indices->size(); ++r) {
        const std::int64_t idx = (*indices)[r];
        if (idx >= out_size)
            throw DimensionError("scatter_sum: index " + std::to_string(idx) +
                                 " out of range for output of size " + std::to_string(out_size));
        if (idx >= 0) out[static_cast<std::size_t>(idx)] += av[r];
    }
    return make_op(std::move(out_shape), std::move(out), {a},
                   [indices](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
                       return std::vector<Tensor>{gather(g, indices, p[0].shape())};
                   });
}

// --- Concatenation / slicing ----------------------------------------------

Tensor concat_vec(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_vec: no parts");
    std::vector<double> out;
    std::vector<std::int64_t> lens;
    lens.reserve(parts.size());
    for (const auto& p : parts) {
        require_defined(p, "concat_vec");
        if (p.shape().size() != 1)
            throw DimensionError("concat_vec: expects 1-D parts, got " + shape_str(p.shape()));
        lens.push_back(p.size());
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    const std::int64_t total = static_cast<std::int64_t>(out.size());
    return make_op({total}, std::move(out), parts,
                   [lens](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       std::vector<Tensor> grads;
                       grads.reserve(lens.size());
                       std::int64_t off = 0;
                       for (auto len : lens) {
                           grads.push_back(slice_vec(g, off, len));
                           off += len;
                       }
                       return grads;
                   });
}

Tensor slice_vec(const Tensor& a, std::int64_t start, std::int64_t len) {
    require_defined(a, "slice_vec");
    if (a.shape().size() != 1)
        throw DimensionError("slice_vec: expects 1-D input, got " + shape_str(a.shape()));
    if (start < 0 || len < 0 || start + len > a.size())
        throw DimensionError("slice_vec: range [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") outside length " +
                             std::to_string(a.size()));
    auto av = a.values();
    std::vector<double> out(av.begin() + start, av.begin() + start + len);
    return make_op({len}, std::move(out), {a},
                   [start](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
                       return std::vector<Tensor>{embed_vec(g, start, p[0].size())};
                   });
}

Tensor embed_vec(const Tensor& a, std::int64_t start, std::int64_t out_len) {
    require_defined(a, "embed_vec");
    if (a.shape().size() != 1)
        throw DimensionError("embed_vec: expects 1-D input, got " + shape_str(a.shape()));
    if (start < 0 || start + a.size() > out_len)
        throw DimensionError("embed_vec: input of length " + std::to_string(a.size()) +
                             " at offset " + std::to_string(start) +
                             " does not fit output length " + std::to_string(out_len));
    std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
    auto av = a.values();
    std::copy(av.begin(), av.end(), out.begin() + start);
    const std::int64_t len = a.size();
    return make_op({out_len}, std::move(out), {a},
                   [start, len](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       return std::vector<Tensor>{slice_vec(g, start, len)};
                   });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_defined(a, "concat_cols");
    require_defined(b, "concat_cols");
    require_2d("concat_cols", a);
    require_2d("concat_cols", b);
    if (a.shape()[0] != b.shape()[0])
        throw DimensionError("concat_cols: axis 0 mismatch, " + std::to_string(a.shape()[0]) +
                             " vs " + std::to_string(b.shape()[0]));
    const std::int64_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(m * (p + q)));
    auto av = a.values(), bv = b.values();
    for (std::int64_t i = 0; i < m; ++i) {
        std::copy(av.begin() + i * p, av.begin() + (i + 1) * p, out.begin() + i * (p + q));
        std::copy(bv.begin() + i * q, bv.begin() + (i + 1) * q, out.begin() + i * (p + q) + p);
    }
    return make_op({m, p + q}, std::move(out), {a, b},
                   [p, q](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       return std::vector<Tensor>{slice_cols(g, 0, p), slice_cols(g, p, q)};
                   });
}

Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t len) {
    require_defined(a, "slice_cols");
    require_2d("slice_cols", a);
    const std::int64_t m = a.shape()[0], n = a.shape()[1];
    if (start < 0 || len < 0 || start + len > n)
        throw DimensionError("slice_cols: column range [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") outside axis 1 of size " +
                             std::to_string(n));
    std::vector<double> out(static_cast<std::size_t>(m * len));
    auto av = a.values();
    for (std::int64_t i = 0; i < m; ++i)
        std::copy(av.begin() + i * n + start, av.begin() + i * n + start + len,
                  out.begin() + i * len);
    return make_op({m, len}, std::move(out), {a},
                   [start, n](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       return std::vector<Tensor>{embed_cols(g, start, n)};
                   });
}

Tensor embed_cols(const Tensor& a, std::int64_t start, std::int64_t out_cols) {
    require_defined(a, "embed_cols");
    require_2d("embed_cols", a);
    const std::int64_t m = a.shape()[0], len = a.shape()[1];
    if (start < 0 || start + len > out_cols)
        throw DimensionError("embed_cols: " + std::to_string(len) + " columns at offset " +
                             std::to_string(start) + " do not fit output width " +
                             std::to_string(out_cols));
    std::vector<double> out(static_cast<std::size_t>(m * out_cols), 0.0);
    auto av = a.values();
    for (std::int64_t i = 0; i < m; ++i)
        std::copy(av.begin() + i * len, av.begin() + (i + 1) * len,
                  out.begin() + i * out_cols + start);
    return make_op({m, out_cols}, std::move(out), {a},
                   [start, len](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       return std::vector<Tensor>{slice_cols(g, start, len)};
                   });
}

// --- Reductions / broadcasts -----------------------------------------------

Tensor sum_all(const Tensor& a) {
    require_defined(a, "sum_all");
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_op({}, {s}, {a},
                   [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
                       return std::vector<Tensor>{broadcast_full(g, p[0].shape())};
                   });
}

Tensor broadcast_full(const Tensor& s, Shape shape) {
    require_defined(s, "broadcast_full");
    if (s.size() != 1)
        throw DimensionError("broadcast_full: source must have a single element, got " +
                             shape_str(s.shape()));
    std::vector<double> out(static_cast<std::size_t>(numel(shape)), s.values()[0]);
    return make_op(std::move(shape), std::move(out), {s},
                   [](const Tensor& g, const std::vector<Tensor>& p, const Tensor&) {
                       return std::vector<Tensor>{reduce_to(sum_all(g), p[0])};
                   });
}

Tensor sum_rows(const Tensor& a) {
    require_defined(a, "sum_rows");
    require_2d("sum_rows", a);
    const std::int64_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    auto av = a.values();
    for (std::int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) s += av[i * n + j];
        out[static_cast<std::size_t>(i)] = s;
    }
    return make_op({m}, std::move(out), {a},
                   [n](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       return std::vector<Tensor>{broadcast_cols(g, n)};
                   });
}

Tensor broadcast_cols(const Tensor& v, std::int64_t n) {
    require_defined(v, "broadcast_cols");
    if (v.shape().size() != 1)
        throw DimensionError("broadcast_cols: expects 1-D input, got " + shape_str(v.shape()));
    const std::int64_t m = v.shape()[0];
    std::vector<double> out(static_cast<std::size_t>(m * n));
    auto vv = v.values();
    for (std::int64_t i = 0; i < m; ++i)
        std::fill(out.begin() + i * n, out.begin() + (i + 1) * n, vv[i]);
    return make_op({m, n}, std::move(out), {v},
                   [](const Tensor& g, const std::vector<Tensor>&, const Tensor&) {
                       return std::vector<Tensor>{sum_rows(g)};
                   });
}

Tensor div(const Tensor& a, const Tensor& b) { return mul(a, reciprocal(b)); }

Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// --- backward --------------------------------------------------------------

namespace {

// Post-order DFS over tracked ancestors; parents come before consumers.
// Holds shared_ptrs so vjp calls can hand out live Tensor handles.
std::vector<std::shared_ptr<TensorNode>> topo_order(const std::shared_ptr<TensorNode>& root) {
    std::vector<std::shared_ptr<TensorNode>> order;
    if (!root->tracked) return order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<std::shared_ptr<TensorNode>, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            std::shared_ptr<TensorNode> child = node->parents[next_child++];
            if (child && child->tracked && !visited.count(child.get())) {
                visited.insert(child.get());
                stack.emplace_back(std::move(child), 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> wrt,
                             bool create_graph) {
    require_defined(loss, "backward");
    if (loss.size() != 1)
        throw ContractError("backward: loss must be a scalar, got shape " +
                            shape_str(loss.shape()));

    std::unordered_map<TensorNode*, Tensor> grads;
    if (loss.tracked()) {
        auto order = topo_order(loss.node());
        grads.emplace(loss.node().get(), Tensor::from_values(loss.shape(), {1.0}, false));

        // Unless the caller wants a differentiable gradient, the vjp ops run
        // untracked so the backward pass leaves no tape behind.
        std::optional<NoGradGuard> guard;
        if (!create_graph) guard.emplace();

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const std::shared_ptr<TensorNode>& node = *it;
            auto git = grads.find(node.get());
            if (git == grads.end() || !node->vjp) continue;
            std::vector<Tensor> parent_tensors;
            parent_tensors.reserve(node->parents.size());
            for (const auto& p : node->parents) parent_tensors.emplace_back(p);
            std::vector<Tensor> pgrads = node->vjp(git->second, parent_tensors, Tensor(node));
            if (pgrads.size() != node->parents.size())
                throw ContractError("backward: vjp emitted " + std::to_string(pgrads.size()) +
                                    " gradients for " + std::to_string(node->parents.size()) +
                                    " parents");
            for (std::size_t i = 0; i < pgrads.size(); ++i) {
                const auto& parent = node->parents[i];
                if (!parent || !parent->tracked || !pgrads[i].defined()) continue;
                auto [acc, inserted] = grads.try_emplace(parent.get(), pgrads[i]);
                if (!inserted) acc->second = add(acc->second, pgrads[i]);
            }
        }
    }

    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        require_defined(w, "backward");
        auto it = grads.find(w.node().get());
        out.push_back(it != grads.end() ? it->second : Tensor::zeros(w.shape()));
    }
    return out;
}

}  // namespace metareg
