#include "elp/nn/layers.hpp"

#include <cmath>

namespace elp::nn {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = store.uniform(name + ".weight", {in, out}, bound, rng);
    if (with_bias) bias_ = store.uniform(name + ".bias", {1, out}, bound, rng);
}

Tensor Linear::operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight_);
    return bias_.defined() ? add(y, bias_) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t features) {
    gamma_ = store.constant(name + ".gamma", {1, features}, 1.0);
    beta_ = store.constant(name + ".beta", {1, features}, 0.0);
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::size_t kernel, Rng& rng)
    : kernel_(kernel) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    weight_ = store.uniform(name + ".weight", {kernel * in, out}, bound, rng);
    bias_ = store.uniform(name + ".bias", {1, out}, bound, rng);
}

}  // namespace elp::nn
