#pragma once

// Phase 1: outlier removal over session-final provider loss / consumer gain.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "elp/domain.hpp"

namespace elp::filter {

inline constexpr int kNoise = -1;

struct DbscanParams {
    double eps = 0.15;
    std::size_t min_pts = 4;  // neighbourhood size including the point itself

    void validate() const;
};

using Point = std::vector<double>;

/// Density-based clustering. Labels are 0..k-1 in discovery order, or kNoise.
/// A border point reachable from several clusters keeps the first one found.
std::vector<int> dbscan(const std::vector<Point>& points, const DbscanParams& params);

/// How final values are brought to a common scale before clustering.
enum class FinalScaling {
    MedianRelative,  // x / median(|x|)
    MinMax,          // (x - min) / (max - min)
};

struct ScalingStats {
    double offset = 0.0;
    double scale = 1.0;

    double apply(double x) const { return (x - offset) / scale; }
};

ScalingStats fit_scaling(const std::vector<double>& values, FinalScaling mode);

struct FilterConfig {
    DbscanParams dbscan;
    FinalScaling scaling = FinalScaling::MedianRelative;
    // Reuse previously fitted statistics instead of fitting on this input.
    std::optional<ScalingStats> provider_stats;
    std::optional<ScalingStats> consumer_stats;
};

struct FilterReport {
    std::vector<std::string> kept_session_ids;
    std::vector<std::string> outlier_session_ids;
    std::size_t points_removed = 0;
    ScalingStats provider_stats;
    ScalingStats consumer_stats;
    std::vector<int> provider_labels;  // per session, input order
    std::vector<int> consumer_labels;
};

struct FilterResult {
    domain::UserEnergyProfile provider;
    domain::UserEnergyProfile consumer;
    FilterReport report;
};

/// Pairs provider and consumer sharing records by session id, clusters the
/// final PL and CG values separately and drops every session where either
/// final value is noise. Both records of a dropped session are removed.
FilterResult filter_sessions(const std::vector<domain::EnergyHistoryRecord>& provider_records,
                             const std::vector<domain::EnergyHistoryRecord>& consumer_records,
                             const FilterConfig& config = {});

/// CSV rendering: one session_id,status row per session plus a points_removed trailer.
std::string report_csv(const FilterReport& report);

}  // namespace elp::filter
