#include "elp/model/eit.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "elp/error.hpp"

namespace elp::model {

namespace {
constexpr double kSameDistance = 1e-9;
}

DistancePreferenceTable::DistancePreferenceTable(std::vector<double> distances, std::vector<double> normalized,
                                                 std::vector<double> probabilities, double temperature)
    : distances_(std::move(distances)),
      normalized_(std::move(normalized)),
      probabilities_(std::move(probabilities)),
      temperature_(temperature) {}

bool DistancePreferenceTable::contains(double distance_cm) const {
    return std::any_of(distances_.begin(), distances_.end(),
                       [&](double d) { return std::abs(d - distance_cm) <= kSameDistance; });
}

double DistancePreferenceTable::lookup(double distance_cm) const {
    if (distances_.empty()) throw Error(ErrorKind::InvalidParam, "distance table is empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < distances_.size(); ++i) {
        if (std::abs(distances_[i] - distance_cm) < std::abs(distances_[best] - distance_cm)) best = i;
    }
    if (std::abs(distances_[best] - distance_cm) > kSameDistance) {
        std::cerr << "warning: unseen sharing distance " << distance_cm << " cm, using " << distances_[best]
                  << " cm\n";
    }
    return probabilities_[best];
}

DistancePreferenceTable eit_transform(std::span<const double> distances_cm, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw Error(ErrorKind::InvalidParam, "eit: temperature must be > 0");
    }
    if (distances_cm.empty()) throw Error(ErrorKind::InvalidParam, "eit: no distances");
    std::vector<double> unique(distances_cm.begin(), distances_cm.end());
    for (double d : unique) {
        if (!std::isfinite(d)) throw Error(ErrorKind::InvalidParam, "eit: non-finite distance");
    }
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end(),
                             [](double a, double b) { return std::abs(a - b) <= kSameDistance; }),
                 unique.end());

    const double lo = unique.front();
    const double span = unique.back() - lo;
    std::vector<double> normalized(unique.size(), 0.0);
    if (span > 0.0) {
        for (std::size_t i = 0; i < unique.size(); ++i) normalized[i] = (unique[i] - lo) / span;
    }

    // Softmax with temperature; subtracting the max keeps exp() in range for tiny tau.
    const double top = *std::max_element(normalized.begin(), normalized.end()) / temperature;
    std::vector<double> prob(unique.size());
    double z = 0.0;
    for (std::size_t i = 0; i < unique.size(); ++i) {
        prob[i] = std::exp(normalized[i] / temperature - top);
        z += prob[i];
    }
    for (double& p : prob) p /= z;
    return DistancePreferenceTable(std::move(unique), std::move(normalized), std::move(prob), temperature);
}

}  // namespace elp::model
