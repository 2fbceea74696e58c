#pragma once

// Differentiable operations. Each returns a new tensor whose backward rule
// accumulates into the inputs that require gradients. Shape violations throw
// Error(ShapeError).

#include <cstddef>
#include <span>
#include <vector>

#include "elp/nn/tensor.hpp"
#include "elp/rng.hpp"

namespace elp::nn {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor transpose(const Tensor& a);

/// Elementwise sum. `b` may also be a [1, cols] row that is broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor elu(const Tensor& a, double alpha = 1.0);

/// Row-wise normalisation over the last dimension with affine [1,cols] gain/bias.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor softmax_lastdim(const Tensor& x);

/// Softmax of row r over its first `active_cols[r]` columns; the rest are 0.
Tensor masked_softmax_lastdim(const Tensor& x, std::span<const std::size_t> active_cols);

/// 1-D convolution along rows with zero "same" padding (odd kernel widths).
/// `weight` is [kernel * in_channels, out_channels], tap-major; `bias` is
/// [1, out_channels] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel);

/// Max over row windows; padded positions never win.
Tensor maxpool1d(const Tensor& x, std::size_t window, std::size_t stride, std::size_t padding);

/// Inverted dropout. Identity when `train` is false or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool train);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Copy of `base` whose rows `at[i]` are replaced by row i of `rows`. Indices must be distinct.
Tensor merge_rows(const Tensor& base, const Tensor& rows, std::span<const std::size_t> at);

Tensor mean_rows(const Tensor& x);         // [1, cols]
Tensor prefix_mean_rows(const Tensor& x);  // row i = mean of rows 0..i
Tensor broadcast_rows(const Tensor& row, std::size_t n);
Tensor sum(const Tensor& x);               // [1, 1]

Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace elp::nn
