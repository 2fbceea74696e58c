#pragma once

// ProbSparse self-attention.
//
// Queries are ranked by the max-mean sparsity score M(q, K) estimated on a
// random key sample; only the Top-u queries get a full softmax row, every
// other query falls back to the mean of V (the causal prefix mean when
// masked).

#include <cstddef>
#include <span>
#include <vector>

#include "elp/nn/tensor.hpp"
#include "elp/rng.hpp"

namespace elp::model {

/// Per-query key indices used to estimate M. Exhaustive when the sample
/// size reaches the number of keys.
using KeySample = std::vector<std::vector<std::size_t>>;

std::size_t sample_size(std::size_t factor, std::size_t length);  // min(length, factor * ceil(ln length)), >= 1
std::size_t top_u(std::size_t factor, std::size_t query_length);  // same rule applied to the queries

KeySample sample_keys(std::size_t queries, std::size_t keys, std::size_t per_query, Rng& rng);

/// M_i = max_j(q_i . k_j / sqrt(d)) - mean_j(q_i . k_j / sqrt(d)) over sample[i].
/// Q is [Lq, d] and K is [Lk, d], both row-major.
std::vector<double> sparsity_measure(std::span<const double> q, std::span<const double> k, std::size_t d,
                                     const KeySample& sample);

/// Indices of the u largest scores, ties broken towards the lower index, returned ascending.
std::vector<std::size_t> select_top(std::span<const double> scores, std::size_t u);

/// Dense scaled dot-product attention, optionally causal (requires Lq == Lk).
nn::Tensor dense_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v, bool causal);

/// ProbSparse attention with an explicit query selection.
nn::Tensor probsparse_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v,
                                std::span<const std::size_t> selected, bool causal);

/// ProbSparse attention that samples keys, scores queries and keeps the Top-u.
nn::Tensor probsparse_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v, std::size_t u,
                                std::size_t factor, Rng& rng, bool causal);

}  // namespace elp::model
