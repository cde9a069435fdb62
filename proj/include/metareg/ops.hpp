#pragma once

// Network-level composites built from the autodiff primitives: convolution,
// LSTM cell, losses, and the distance metric the regularizers share.

#include <utility>

#include "metareg/param_set.hpp"
#include "metareg/tensor.hpp"

namespace metareg {

// x[m,in] * w[in,out] + b[out] broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Adds a per-column bias vector b[n] to every row of x[m,n].
Tensor add_col_bias(const Tensor& x, const Tensor& b);

// input [B,C,H,W], kernel [F,C,k,k] (square) -> [B,F,H',W'] with
// H' = floor((H + 2 pad - k)/stride) + 1.  Lowered to a cached
// im2col gather plus one matmul.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::int64_t stride,
              std::int64_t padding);
// Same with a per-filter bias [F] folded in before the output permute.
Tensor conv2d_bias(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                   std::int64_t stride, std::int64_t padding);

// Fused-gate LSTM step.  weights holds "w" [(I+H),4H] and "b" [4H]; the gate
// order along the fused axis is input, forget, candidate, output.
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const ParamSet& weights);

// Expected weight shapes for lstm_cell given input/hidden sizes.
ParamSet lstm_weight_schema(std::int64_t input_size, std::int64_t hidden_size, Segment segment,
                            const std::string& prefix);

// Mean over rows of -log softmax probability of the labelled class.
// Label rows must be a distribution (non-negative, summing to 1).
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels);

// Fraction of rows where argmax(logits) == argmax(labels).
double accuracy(const Tensor& logits, const Tensor& labels);

// sqrt(sum (a-b)^2) over all elements; zero subgradient at a == b.
Tensor l2_distance(const Tensor& a, const Tensor& b);

// Mean squared error over all elements.
Tensor mse(const Tensor& pred, const Tensor& target);

}  // namespace metareg
