#include "elp/model/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "elp/error.hpp"
#include "elp/nn/ops.hpp"

namespace elp::model {

std::size_t sample_size(std::size_t factor, std::size_t length) {
    if (length == 0) return 0;
    const auto log_len = static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(length))));
    return std::clamp<std::size_t>(factor * log_len, 1, length);
}

std::size_t top_u(std::size_t factor, std::size_t query_length) { return sample_size(factor, query_length); }

KeySample sample_keys(std::size_t queries, std::size_t keys, std::size_t per_query, Rng& rng) {
    KeySample out(queries);
    std::vector<std::size_t> pool(keys);
    for (auto& row : out) {
        if (per_query >= keys) {
            row.resize(keys);
            std::iota(row.begin(), row.end(), 0);
            continue;
        }
        // Partial Fisher-Yates: the first per_query slots form a uniform subset.
        std::iota(pool.begin(), pool.end(), 0);
        for (std::size_t i = 0; i < per_query; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(keys - i));
            std::swap(pool[i], pool[j]);
        }
        row.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_query));
    }
    return out;
}

std::vector<double> sparsity_measure(std::span<const double> q, std::span<const double> k, std::size_t d,
                                     const KeySample& sample) {
    if (d == 0 || q.size() % d != 0 || k.size() % d != 0) {
        throw Error(ErrorKind::ShapeError, "sparsity_measure: inputs are not multiples of the head width");
    }
    const std::size_t lq = q.size() / d;
    const std::size_t lk = k.size() / d;
    if (sample.size() != lq) throw Error(ErrorKind::ShapeError, "sparsity_measure: one key sample per query");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> m(lq);
    for (std::size_t i = 0; i < lq; ++i) {
        const auto& keys = sample[i];
        if (keys.empty()) throw Error(ErrorKind::InvalidParam, "sparsity_measure: empty key sample");
        double mx = -std::numeric_limits<double>::infinity();
        double total = 0.0;
        for (std::size_t j : keys) {
            if (j >= lk) throw Error(ErrorKind::ShapeError, "sparsity_measure: key index out of range");
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
            dot *= inv_sqrt_d;
            mx = std::max(mx, dot);
            total += dot;
        }
        m[i] = mx - total / static_cast<double>(keys.size());
    }
    return m;
}

std::vector<std::size_t> select_top(std::span<const double> scores, std::size_t u) {
    if (u == 0) throw Error(ErrorKind::InvalidParam, "probsparse: u must be > 0");
    if (u > scores.size()) throw Error(ErrorKind::InvalidParam, "probsparse: u exceeds the number of queries");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(u);
    std::sort(idx.begin(), idx.end());
    return idx;
}

nn::Tensor dense_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v, bool causal) {
    std::vector<std::size_t> all(q.rows());
    std::iota(all.begin(), all.end(), 0);
    return probsparse_attention(q, k, v, all, causal);
}

nn::Tensor probsparse_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v,
                                std::span<const std::size_t> selected, bool causal) {
    if (q.cols() != k.cols() || k.rows() != v.rows()) {
        throw Error(ErrorKind::ShapeError, "attention: Q/K/V shapes disagree");
    }
    if (causal && q.rows() != k.rows()) throw Error(ErrorKind::ShapeError, "attention: causal mask needs Lq == Lk");
    if (selected.empty()) throw Error(ErrorKind::InvalidParam, "probsparse: u must be > 0");

    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    const bool all_selected = selected.size() == q.rows();
    nn::Tensor q_top = all_selected ? q : nn::gather_rows(q, selected);
    nn::Tensor scores = nn::scale(nn::matmul_nt(q_top, k), scale);
    std::vector<std::size_t> active(selected.size(), k.rows());
    if (causal) {
        for (std::size_t r = 0; r < selected.size(); ++r) active[r] = selected[r] + 1;
    }
    nn::Tensor top_out = nn::matmul(nn::masked_softmax_lastdim(scores, active), v);
    if (all_selected) return top_out;

    nn::Tensor fallback = causal ? nn::prefix_mean_rows(v) : nn::broadcast_rows(nn::mean_rows(v), q.rows());
    return nn::merge_rows(fallback, top_out, selected);
}

nn::Tensor probsparse_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v, std::size_t u,
                                std::size_t factor, Rng& rng, bool causal) {
    if (u == 0) throw Error(ErrorKind::InvalidParam, "probsparse: u must be > 0");
    if (u > q.rows()) throw Error(ErrorKind::InvalidParam, "probsparse: u exceeds the number of queries");
    if (u == q.rows()) return dense_attention(q, k, v, causal);
    const KeySample sample = sample_keys(q.rows(), k.rows(), sample_size(factor, k.rows()), rng);
    const auto m = sparsity_measure(q.values(), k.values(), q.cols(), sample);
    const auto top = select_top(m, u);
    return probsparse_attention(q, k, v, top, causal);
}

}  // namespace elp::model
