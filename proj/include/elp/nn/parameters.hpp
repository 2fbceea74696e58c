#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "elp/nn/tensor.hpp"
#include "elp/rng.hpp"

namespace elp::nn {

struct NamedParameter {
    std::string name;
    Tensor tensor;  // leaf with requires_grad
};

/// Owns every trainable leaf of a model, in registration order.
class ParameterStore {
public:
    Tensor create(const std::string& name, Shape shape, std::vector<double> init);
    Tensor uniform(const std::string& name, Shape shape, double bound, Rng& rng);
    Tensor constant(const std::string& name, Shape shape, double value);

    const std::vector<NamedParameter>& parameters() const { return params_; }
    std::vector<NamedParameter>& parameters() { return params_; }
    const Tensor& get(const std::string& name) const;
    std::size_t scalar_count() const;

    void zero_grad();

private:
    std::vector<NamedParameter> params_;
};

/// Checkpoint text format, version 1:
///
///   elp-checkpoint 1
///   <parameter count>
///   <name> <rows> <cols>
///   <rows*cols values, shortest round-trip decimal, space separated>
///   ...
///
/// Values round-trip exactly. Loading requires every stored name to exist
/// in the store with an identical shape.
void save_checkpoint(const ParameterStore& store, const std::string& path);
void load_checkpoint(ParameterStore& store, const std::string& path);
std::string checkpoint_to_string(const ParameterStore& store);
void checkpoint_from_string(ParameterStore& store, const std::string& text);

}  // namespace elp::nn
