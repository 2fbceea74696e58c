#pragma once

// Entity model and energy bookkeeping for wireless energy sharing sessions.
//
// All battery quantities are mAh, timestamps are minute indices and distances
// are centimetres. Differences are signed and never clamped so that anomalous
// sessions reach the outlier filter intact.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace elp::domain {

using Series = std::vector<double>;

enum class EnergyState { Sharing, Idle };
enum class UserType { Consumer, Provider };

std::string to_string(EnergyState s);
std::string to_string(UserType t);

struct BatterySample {
    std::int64_t minute = 0;
    double level_mah = 0.0;
};

/// One session's battery trace for one device.
///
/// `distance_cm` and `user_type` are present iff `state == Sharing`. Idle
/// records still carry the role of the device they were measured on in
/// `idle_role` so that usage can be attributed to provider or consumer.
struct EnergyHistoryRecord {
    std::string rid;
    std::string session_id;  // pairs the provider and consumer records of one session
    std::string uid;
    EnergyState state = EnergyState::Sharing;
    std::optional<double> distance_cm;
    std::optional<UserType> user_type;
    UserType idle_role = UserType::Consumer;
    std::vector<BatterySample> bl;

    UserType role() const { return user_type.value_or(idle_role); }
    Series levels() const;
    Series minutes() const;
};

struct RecordCheck {
    bool valid = true;          // structural invariants hold
    bool monotone = true;       // sharing-direction monotonicity holds
    std::string message;
};

/// Checks structural invariants (non-empty, uniform strictly increasing
/// minutes, finite non-negative levels, metadata presence). Monotonicity
/// violations are reported in `monotone` but do not make a record invalid.
RecordCheck check_record(const EnergyHistoryRecord& r, std::int64_t interval_min = 1);

// Differences relative to the session start.
Series consumer_gain(std::span<const double> cb);     // cb[j] - cb[0]
Series consumer_usage(std::span<const double> ncb);   // ncb[0] - ncb[j]
Series provider_loss(std::span<const double> pb);     // pb[0] - pb[j]
Series provider_usage(std::span<const double> npb);   // npb[0] - npb[j]

Series real_transferred(std::span<const double> pl, std::span<const double> pu);
Series real_received(std::span<const double> cg, std::span<const double> cu);
Series energy_loss(std::span<const double> rt, std::span<const double> rr);

/// Transferred, received and lost energy for one horizon. el == rt - rr exactly.
struct EnergyFlow {
    Series rt;
    Series rr;
    Series el;
};

EnergyFlow integrate(std::span<const double> pl, std::span<const double> pu,
                     std::span<const double> cg, std::span<const double> cu);

/// Derived series of one role across all of its records.
struct UserEnergyProfile {
    UserType role = UserType::Consumer;
    std::vector<EnergyHistoryRecord> sharing;  // CB / PB records
    std::vector<EnergyHistoryRecord> idle;     // NCB / NPB records
    std::vector<Series> sharing_derived;       // CG or PL per sharing record
    std::vector<Series> idle_derived;          // CU or PU per idle record
    std::vector<double> distances;             // one per sharing record
    std::vector<Series> times;                 // minute indices per sharing record
};

UserEnergyProfile build_profile(UserType role, std::vector<EnergyHistoryRecord> sharing,
                                std::vector<EnergyHistoryRecord> idle);

double mse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

}  // namespace elp::domain
