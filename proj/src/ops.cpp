#include "metareg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace metareg {

namespace {

using IndexTable = std::shared_ptr<const std::vector<std::int64_t>>;

// im2col and layout-permute tables depend only on geometry, so they are
// built once per shape and reused across iterations.
struct TableCache {
    std::mutex mu;
    std::map<std::vector<std::int64_t>, IndexTable> tables;

    IndexTable get(std::vector<std::int64_t> key,
                   const std::function<std::vector<std::int64_t>()>& build) {
        std::lock_guard<std::mutex> lock(mu);
        auto it = tables.find(key);
        if (it != tables.end()) return it->second;
        auto table = std::make_shared<std::vector<std::int64_t>>(build());
        tables.emplace(std::move(key), table);
        return table;
    }
};

TableCache& im2col_cache() {
    static TableCache cache;
    return cache;
}

TableCache& permute_cache() {
    static TableCache cache;
    return cache;
}

}  // namespace

Tensor add_col_bias(const Tensor& x, const Tensor& b) {
    if (x.shape().size() != 2)
        throw DimensionError("add_col_bias: expects 2-D input, got " + shape_str(x.shape()));
    if (b.shape().size() != 1 || b.shape()[0] != x.shape()[1])
        throw DimensionError("add_col_bias: bias " + shape_str(b.shape()) +
                             " does not match axis 1 of " + shape_str(x.shape()));
    return add(x, transpose(broadcast_cols(b, x.shape()[0])));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_col_bias(matmul(x, w), b);
}

namespace {

Tensor conv2d_impl(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                   std::int64_t stride, std::int64_t padding) {
    if (input.shape().size() != 4)
        throw DimensionError("conv2d: input must be [B,C,H,W], got " + shape_str(input.shape()));
    if (kernel.shape().size() != 4)
        throw DimensionError("conv2d: kernel must be [F,C,k,k], got " +
                             shape_str(kernel.shape()));
    if (stride < 1) throw ContractError("conv2d: stride must be positive");
    if (padding < 0) throw ContractError("conv2d: padding must be non-negative");
    const std::int64_t B = input.shape()[0], C = input.shape()[1];
    const std::int64_t H = input.shape()[2], W = input.shape()[3];
    const std::int64_t F = kernel.shape()[0], KC = kernel.shape()[1];
    const std::int64_t k = kernel.shape()[2];
    if (kernel.shape()[3] != k)
        throw DimensionError("conv2d: kernel axes 2 and 3 must match, got " +
                             shape_str(kernel.shape()));
    if (KC != C)
        throw DimensionError("conv2d: kernel axis 1 is " + std::to_string(KC) +
                             " but input axis 1 is " + std::to_string(C));
    if (k > H + 2 * padding)
        throw DimensionError("conv2d: kernel extent " + std::to_string(k) +
                             " exceeds padded input axis 2 of " +
                             std::to_string(H + 2 * padding));
    if (k > W + 2 * padding)
        throw DimensionError("conv2d: kernel extent " + std::to_string(k) +
                             " exceeds padded input axis 3 of " +
                             std::to_string(W + 2 * padding));
    const std::int64_t OH = (H + 2 * padding - k) / stride + 1;
    const std::int64_t OW = (W + 2 * padding - k) / stride + 1;

    IndexTable cols_idx = im2col_cache().get(
        {B, C, H, W, k, stride, padding}, [&] {
            std::vector<std::int64_t> idx;
            idx.reserve(static_cast<std::size_t>(B * OH * OW * C * k * k));
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t oh = 0; oh < OH; ++oh)
                    for (std::int64_t ow = 0; ow < OW; ++ow)
                        for (std::int64_t c = 0; c < C; ++c)
                            for (std::int64_t kh = 0; kh < k; ++kh)
                                for (std::int64_t kw = 0; kw < k; ++kw) {
                                    const std::int64_t ih = oh * stride + kh - padding;
                                    const std::int64_t iw = ow * stride + kw - padding;
                                    const bool in = ih >= 0 && ih < H && iw >= 0 && iw < W;
                                    idx.push_back(in ? ((b * C + c) * H + ih) * W + iw : -1);
                                }
            return idx;
        });

    Tensor cols = gather(input, cols_idx, {B * OH * OW, C * k * k});
    Tensor out2d = matmul(cols, transpose(reshape(kernel, {F, C * k * k})));
    if (bias) {
        if (bias->shape().size() != 1 || bias->shape()[0] != F)
            throw DimensionError("conv2d: bias " + shape_str(bias->shape()) +
                                 " does not match filter count " + std::to_string(F));
        out2d = add_col_bias(out2d, *bias);
    }

    // [B*OH*OW, F] row-major -> [B, F, OH, OW]
    IndexTable perm_idx = permute_cache().get({B, F, OH, OW}, [&] {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(B * F * OH * OW));
        std::size_t w = 0;
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t f = 0; f < F; ++f)
                for (std::int64_t oh = 0; oh < OH; ++oh)
                    for (std::int64_t ow = 0; ow < OW; ++ow)
                        idx[w++] = ((b * OH + oh) * OW + ow) * F + f;
        return idx;
    });
    return gather(out2d, perm_idx, {B, F, OH, OW});
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::int64_t stride,
              std::int64_t padding) {
    return conv2d_impl(input, kernel, nullptr, stride, padding);
}

Tensor conv2d_bias(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                   std::int64_t stride, std::int64_t padding) {
    return conv2d_impl(input, kernel, &bias, stride, padding);
}

ParamSet lstm_weight_schema(std::int64_t input_size, std::int64_t hidden_size, Segment segment,
                            const std::string& prefix) {
    ParamSet out;
    out.add(prefix + "w", segment,
            Tensor::zeros({input_size + hidden_size, 4 * hidden_size}, true));
    out.add(prefix + "b", segment, Tensor::zeros({4 * hidden_size}, true));
    return out;
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const ParamSet& weights) {
    if (x.shape().size() != 2 || h_prev.shape().size() != 2 || c_prev.shape().size() != 2)
        throw DimensionError("lstm_cell: x, h_prev, c_prev must be 2-D");
    const std::int64_t B = x.shape()[0], I = x.shape()[1];
    const std::int64_t Hs = h_prev.shape()[1];
    if (h_prev.shape()[0] != B || c_prev.shape()[0] != B)
        throw DimensionError("lstm_cell: batch mismatch, x has " + std::to_string(B) +
                             " rows, h_prev " + std::to_string(h_prev.shape()[0]) +
                             ", c_prev " + std::to_string(c_prev.shape()[0]));
    if (c_prev.shape()[1] != Hs)
        throw DimensionError("lstm_cell: hidden size mismatch, h_prev axis 1 is " +
                             std::to_string(Hs) + " but c_prev axis 1 is " +
                             std::to_string(c_prev.shape()[1]));
    const Tensor& w = weights.at("w");
    const Tensor& b = weights.at("b");
    if (w.shape().size() != 2 || w.shape()[0] != I + Hs || w.shape()[1] != 4 * Hs)
        throw DimensionError("lstm_cell: fused weight must be [" + std::to_string(I + Hs) + "," +
                             std::to_string(4 * Hs) + "], got " + shape_str(w.shape()));
    if (b.shape().size() != 1 || b.shape()[0] != 4 * Hs)
        throw DimensionError("lstm_cell: fused bias must be [" + std::to_string(4 * Hs) +
                             "], got " + shape_str(b.shape()));

    Tensor z = linear(concat_cols(x, h_prev), w, b);
    Tensor gi = sigmoid(slice_cols(z, 0, Hs));
    Tensor gf = sigmoid(slice_cols(z, Hs, Hs));
    Tensor gg = tanh_op(slice_cols(z, 2 * Hs, Hs));
    Tensor go = sigmoid(slice_cols(z, 3 * Hs, Hs));
    Tensor c = add(mul(gf, c_prev), mul(gi, gg));
    Tensor h = mul(go, tanh_op(c));
    return {h, c};
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels) {
    if (logits.shape().size() != 2)
        throw DimensionError("softmax_cross_entropy: logits must be 2-D, got " +
                             shape_str(logits.shape()));
    if (labels.shape() != logits.shape())
        throw DimensionError("softmax_cross_entropy: labels " + shape_str(labels.shape()) +
                             " do not match logits " + shape_str(logits.shape()));
    const std::int64_t B = logits.shape()[0], N = logits.shape()[1];
    auto lv = labels.values();
    for (std::int64_t i = 0; i < B; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < N; ++j) {
            const double t = lv[i * N + j];
            if (t < 0.0)
                throw ValidationError("softmax_cross_entropy: label row " + std::to_string(i) +
                                      " has negative mass");
            s += t;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw ValidationError("softmax_cross_entropy: label row " + std::to_string(i) +
                                  " sums to " + std::to_string(s) + ", expected 1");
    }

    // Constant per-row shift keeps exp in range; the softmax gradient is
    // invariant to it, so treating the shift as data is exact.
    auto zv = logits.values();
    std::vector<double> row_max(static_cast<std::size_t>(B));
    for (std::int64_t i = 0; i < B; ++i) {
        double m = zv[i * N];
        for (std::int64_t j = 1; j < N; ++j) m = std::max(m, zv[i * N + j]);
        row_max[static_cast<std::size_t>(i)] = m;
    }
    Tensor shift = broadcast_cols(Tensor::from_values({B}, std::move(row_max)), N);
    Tensor z = sub(logits, shift);
    Tensor lse = log_op(sum_rows(exp_op(z)));          // [B]
    Tensor picked = sum_rows(mul(labels, z));          // [B]
    return scale(sum_all(sub(lse, picked)), 1.0 / static_cast<double>(B));
}

double accuracy(const Tensor& logits, const Tensor& labels) {
    if (logits.shape().size() != 2 || labels.shape() != logits.shape())
        throw DimensionError("accuracy: logits " + shape_str(logits.shape()) +
                             " vs labels " + shape_str(labels.shape()));
    const std::int64_t B = logits.shape()[0], N = logits.shape()[1];
    auto zv = logits.values();
    auto lv = labels.values();
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < B; ++i) {
        const auto* zr = zv.data() + i * N;
        const auto* lr = lv.data() + i * N;
        const auto zbest = std::max_element(zr, zr + N) - zr;
        const auto lbest = std::max_element(lr, lr + N) - lr;
        if (zbest == lbest) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

Tensor l2_distance(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw DimensionError("l2_distance: length mismatch " + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()));
    Tensor af = a.shape() == b.shape() ? a : reshape(a, {a.size()});
    Tensor bf = a.shape() == b.shape() ? b : reshape(b, {b.size()});
    Tensor d = sub(af, bf);
    return sqrt0(sum_all(mul(d, d)));
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw DimensionError("mse: prediction " + shape_str(pred.shape()) +
                             " vs target " + shape_str(target.shape()));
    Tensor d = sub(pred, target);
    return mean_all(mul(d, d));
}

}  // namespace metareg
