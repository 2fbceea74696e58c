#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "elp/nn/parameters.hpp"

namespace elp::nn {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update of `param` in place. `step` is 1-based.
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments, std::uint64_t step,
                 const AdamHyper& hyper, double lr);

/// Optimizer state over a whole parameter store.
class Adam {
public:
    explicit Adam(const ParameterStore& store, AdamHyper hyper = {}, double base_lr = 1e-4);

    /// Applies one update from the gradients currently held by `store`.
    void step(ParameterStore& store, double lr);

    std::uint64_t steps() const { return step_; }
    double base_lr() const { return base_lr_; }
    const std::vector<AdamMoments>& moments() const { return moments_; }

private:
    AdamHyper hyper_;
    double base_lr_;
    std::uint64_t step_ = 0;
    std::vector<AdamMoments> moments_;
};

/// Step decay: base_lr * 0.5^epoch.
double lr_schedule(int epoch, double base_lr);

}  // namespace elp::nn
