#pragma once

// Session-log CSV, the synthetic dataset generator, session splitting and
// standardisation.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elp/domain.hpp"

namespace elp::data {

/// Column order of the session log. The header row is mandatory.
inline constexpr std::array<const char*, 6> kSessionColumns = {
    "session_id", "role", "state", "distance_cm", "minute_index", "battery_mAh"};

std::string sessions_to_csv(const std::vector<domain::EnergyHistoryRecord>& records);
std::vector<domain::EnergyHistoryRecord> sessions_from_csv(const std::string& text);

void write_sessions(const std::string& path, const std::vector<domain::EnergyHistoryRecord>& records);
std::vector<domain::EnergyHistoryRecord> load_sessions(const std::string& path);

/// Records grouped by role and state, each group in file order.
struct SessionSet {
    std::vector<domain::EnergyHistoryRecord> provider_sharing;
    std::vector<domain::EnergyHistoryRecord> consumer_sharing;
    std::vector<domain::EnergyHistoryRecord> provider_idle;
    std::vector<domain::EnergyHistoryRecord> consumer_idle;
};

SessionSet partition(const std::vector<domain::EnergyHistoryRecord>& records);

struct GeneratorConfig {
    std::vector<double> distances_cm = {1.0, 1.5, 2.0};
    std::vector<std::size_t> repeats = {7, 14, 21};
    std::size_t session_minutes = 30;  // samples per sharing record
    std::int64_t interval_min = 1;
    double transfer_rate = 2.0;        // mAh per minute delivered to the consumer
    // efficiency(d) = clamp(1 - eff_slope * (d - eff_ref_cm), eff_floor, 1)
    double eff_slope = 0.25;
    double eff_ref_cm = 1.0;
    double eff_floor = 0.3;
    double provider_drain = 0.1;       // provider self-consumption while sharing, mAh/min
    double noise_sigma = 0.3;          // per-minute increment noise, mAh
    std::size_t anomaly_count = 6;
    double anomaly_factor = 3.0;       // provider decrement multiplier in anomalous sessions
    std::size_t idle_records = 5;      // per role
    std::size_t idle_minutes = 30;
    double provider_idle_drain = 0.25;
    double consumer_idle_drain = 0.2;
    double idle_noise = 0.01;          // reading noise on idle levels, mAh
    double provider_start = 3000.0;
    double consumer_start = 1500.0;
    bool shuffle_order = true;         // interleave distances in collection order
    std::uint64_t seed = 0;

    void validate() const;
    double efficiency(double distance_cm) const;
    std::size_t session_count() const;

    std::string to_kv() const;
    static GeneratorConfig from_kv(const std::map<std::string, std::string>& kv, GeneratorConfig base);
    static GeneratorConfig from_kv(const std::map<std::string, std::string>& kv) { return from_kv(kv, GeneratorConfig()); }
};

/// Session ids are s000, s001, ... in collection order; idle ids are idle-p000 / idle-c000.
std::vector<domain::EnergyHistoryRecord> generate_synthetic(const GeneratorConfig& config);

/// Session ids that were generated as anomalies, for test bookkeeping.
std::vector<std::string> anomalous_sessions(const GeneratorConfig& config);

struct SplitFractions {
    double train = 0.5;
    double val = 0.25;
    double test = 0.25;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Largest-remainder allocation of n items; ties go to the later part.
std::array<std::size_t, 3> allocate_counts(std::size_t n, const SplitFractions& f);

/// Chronological split per stratum: within each distance, the earliest
/// sessions go to train, then val, then test. Output indices keep input order.
SplitIndices split(const std::vector<double>& session_strata, const SplitFractions& f = {});

/// A per-role session series ready for windowing.
struct SessionSeries {
    std::string session_id;
    double distance_cm = 0.0;
    std::vector<double> target;   // PL or CG, mAh
    std::vector<double> minutes;  // minute index within the session
    bool normalized = false;
};

std::vector<SessionSeries> to_series(const domain::UserEnergyProfile& profile);

struct NormStats {
    double target_mean = 0.0;
    double target_std = 1.0;
    double time_mean = 0.0;
    double time_std = 1.0;

    double target_forward(double v) const { return (v - target_mean) / target_std; }
    double target_inverse(double v) const { return v * target_std + target_mean; }
    double time_forward(double v) const { return (v - time_mean) / time_std; }
};

/// Per-channel mean and standard deviation of target and time; distance is untouched.
NormStats normalize_fit(const std::vector<SessionSeries>& train);
std::vector<SessionSeries> normalize_apply(const NormStats& stats, std::vector<SessionSeries> series);

}  // namespace elp::data
