#pragma once

#include <cstddef>
#include <string>

#include "elp/nn/ops.hpp"
#include "elp/nn/parameters.hpp"

namespace elp::nn {

/// y = x W + b with W [in, out].
class Linear {
public:
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
           bool with_bias = true);

    Tensor operator()(const Tensor& x) const;
    std::size_t out_features() const { return weight_.cols(); }

private:
    Tensor weight_;
    Tensor bias_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParameterStore& store, const std::string& name, std::size_t features);

    Tensor operator()(const Tensor& x) const { return layernorm(x, gamma_, beta_); }

private:
    Tensor gamma_;
    Tensor beta_;
};

/// Same-padded convolution along the sequence axis.
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
           Rng& rng);

    Tensor operator()(const Tensor& x) const { return conv1d(x, weight_, bias_, kernel_); }

private:
    Tensor weight_;
    Tensor bias_;
    std::size_t kernel_ = 3;
};

}  // namespace elp::nn
