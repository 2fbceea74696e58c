#include "elp/nn/adam.hpp"

#include <cmath>

#include "elp/error.hpp"

namespace elp::nn {

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments, std::uint64_t step,
                 const AdamHyper& hyper, double lr) {
    if (grad.size() != param.size()) throw Error(ErrorKind::ShapeError, "adam: gradient size mismatch");
    if (step == 0) throw Error(ErrorKind::InvalidParam, "adam: step counter is 1-based");
    if (moments.m.size() != param.size()) moments.m.assign(param.size(), 0.0);
    if (moments.v.size() != param.size()) moments.v.assign(param.size(), 0.0);
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * g;
        moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * g * g;
        const double m_hat = moments.m[i] / c1;
        const double v_hat = moments.v[i] / c2;
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

Adam::Adam(const ParameterStore& store, AdamHyper hyper, double base_lr)
    : hyper_(hyper), base_lr_(base_lr), moments_(store.parameters().size()) {}

void Adam::step(ParameterStore& store, double lr) {
    auto& params = store.parameters();
    if (params.size() != moments_.size()) throw Error(ErrorKind::ShapeError, "adam: parameter set changed");
    ++step_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params[i].tensor;
        const auto g = t.grad();
        adam_update(t.mutable_values(), g, moments_[i], step_, hyper_, lr);
    }
}

double lr_schedule(int epoch, double base_lr) {
    if (epoch < 0) throw Error(ErrorKind::InvalidParam, "lr_schedule: negative epoch");
    return base_lr * std::pow(0.5, epoch);
}

}  // namespace elp::nn
