#pragma once

#include <span>
#include <vector>

namespace elp::regression {

/// Self-consumption model: usage(t) = slope * t + intercept.
struct LinearModel {
    double slope = 0.0;      // mAh per minute
    double intercept = 0.0;  // mAh
};

/// Ordinary least squares on (t, y). Needs at least two distinct t values.
LinearModel fit_linear(std::span<const double> t, std::span<const double> y);

std::vector<double> predict_linear(const LinearModel& model, std::span<const double> t);

}  // namespace elp::regression
