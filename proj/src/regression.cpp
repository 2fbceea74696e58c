#include "elp/regression.hpp"

#include <cmath>

#include "elp/error.hpp"

namespace elp::regression {

LinearModel fit_linear(std::span<const double> t, std::span<const double> y) {
    if (t.size() != y.size()) throw Error(ErrorKind::ShapeError, "fit_linear: t and y lengths differ");
    if (t.size() < 2) throw Error(ErrorKind::DegenerateInput, "fit_linear: need at least two points");
    const double n = static_cast<double>(t.size());
    double t_mean = 0.0;
    double y_mean = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        t_mean += t[i];
        y_mean += y[i];
    }
    t_mean /= n;
    y_mean /= n;
    // Centred sums keep the closed form well conditioned for large t.
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double dt = t[i] - t_mean;
        sxx += dt * dt;
        sxy += dt * (y[i] - y_mean);
    }
    if (sxx == 0.0) throw Error(ErrorKind::DegenerateInput, "fit_linear: all time points are identical");
    LinearModel m;
    m.slope = sxy / sxx;
    m.intercept = y_mean - m.slope * t_mean;
    if (!std::isfinite(m.slope) || !std::isfinite(m.intercept)) {
        throw Error(ErrorKind::NumericsError, "fit_linear: non-finite coefficients");
    }
    return m;
}

std::vector<double> predict_linear(const LinearModel& model, std::span<const double> t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = model.slope * t[i] + model.intercept;
    return out;
}

}  // namespace elp::regression
