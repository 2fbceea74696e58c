#pragma once

#include <span>
#include <vector>

namespace elp::model {

/// User distance-preference lookup produced by the encoder input transformer.
///
/// Unique sharing distances are min-max normalised to [0, 1] and passed
/// through a temperature softmax, so longer distances get higher probability
/// and a large temperature flattens the distribution towards uniform.
class DistancePreferenceTable {
public:
    DistancePreferenceTable() = default;
    DistancePreferenceTable(std::vector<double> distances, std::vector<double> normalized,
                            std::vector<double> probabilities, double temperature);

    const std::vector<double>& distances() const { return distances_; }
    const std::vector<double>& normalized() const { return normalized_; }
    const std::vector<double>& probabilities() const { return probabilities_; }
    double temperature() const { return temperature_; }
    bool empty() const { return distances_.empty(); }

    bool contains(double distance_cm) const;

    /// Probability for `distance_cm`. Unknown distances resolve to the
    /// nearest known one and emit a warning on stderr.
    double lookup(double distance_cm) const;

private:
    std::vector<double> distances_;  // ascending, unique
    std::vector<double> normalized_;
    std::vector<double> probabilities_;
    double temperature_ = 1.0;
};

DistancePreferenceTable eit_transform(std::span<const double> distances_cm, double temperature);

}  // namespace elp::model
