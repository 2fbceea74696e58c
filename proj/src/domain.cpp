#include "elp/domain.hpp"

#include <cmath>
#include <sstream>

#include "elp/error.hpp"

namespace elp::domain {

namespace {

void require_non_empty(std::span<const double> s, const char* what) {
    if (s.empty()) {
        throw Error(ErrorKind::InvalidSeries, std::string(what) + ": empty battery series");
    }
}

void require_same_length(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        std::ostringstream os;
        os << what << ": length mismatch " << a.size() << " vs " << b.size();
        throw Error(ErrorKind::ShapeError, os.str());
    }
}

}  // namespace

std::string to_string(EnergyState s) { return s == EnergyState::Sharing ? "sharing" : "idle"; }

std::string to_string(UserType t) { return t == UserType::Provider ? "provider" : "consumer"; }

Series EnergyHistoryRecord::levels() const {
    Series out;
    out.reserve(bl.size());
    for (const auto& s : bl) out.push_back(s.level_mah);
    return out;
}

Series EnergyHistoryRecord::minutes() const {
    Series out;
    out.reserve(bl.size());
    for (const auto& s : bl) out.push_back(static_cast<double>(s.minute));
    return out;
}

RecordCheck check_record(const EnergyHistoryRecord& r, std::int64_t interval_min) {
    RecordCheck check;
    auto fail = [&](std::string msg) {
        check.valid = false;
        check.message = std::move(msg);
        return check;
    };
    if (r.bl.empty()) return fail("record " + r.rid + " has no samples");
    for (std::size_t i = 0; i < r.bl.size(); ++i) {
        const double v = r.bl[i].level_mah;
        if (!std::isfinite(v) || v < 0.0) return fail("record " + r.rid + " has an invalid level");
        if (i > 0 && r.bl[i].minute - r.bl[i - 1].minute != interval_min) {
            return fail("record " + r.rid + " has non-uniform timestamps");
        }
    }
    const bool sharing = r.state == EnergyState::Sharing;
    if (sharing != r.distance_cm.has_value() || sharing != r.user_type.has_value()) {
        return fail("record " + r.rid + " has inconsistent sharing metadata");
    }
    if (sharing) {
        const bool consumer = *r.user_type == UserType::Consumer;
        for (std::size_t i = 1; i < r.bl.size(); ++i) {
            const double step = r.bl[i].level_mah - r.bl[i - 1].level_mah;
            if ((consumer && step < 0.0) || (!consumer && step > 0.0)) {
                check.monotone = false;
                check.message = "record " + r.rid + " is not monotone for its role";
                break;
            }
        }
    }
    return check;
}

Series consumer_gain(std::span<const double> cb) {
    require_non_empty(cb, "consumer_gain");
    Series out(cb.size());
    for (std::size_t j = 0; j < cb.size(); ++j) out[j] = cb[j] - cb[0];
    return out;
}

Series consumer_usage(std::span<const double> ncb) {
    require_non_empty(ncb, "consumer_usage");
    Series out(ncb.size());
    for (std::size_t j = 0; j < ncb.size(); ++j) out[j] = ncb[0] - ncb[j];
    return out;
}

Series provider_loss(std::span<const double> pb) {
    require_non_empty(pb, "provider_loss");
    Series out(pb.size());
    for (std::size_t j = 0; j < pb.size(); ++j) out[j] = pb[0] - pb[j];
    return out;
}

Series provider_usage(std::span<const double> npb) {
    require_non_empty(npb, "provider_usage");
    Series out(npb.size());
    for (std::size_t j = 0; j < npb.size(); ++j) out[j] = npb[0] - npb[j];
    return out;
}

Series real_transferred(std::span<const double> pl, std::span<const double> pu) {
    require_same_length(pl, pu, "real_transferred");
    Series out(pl.size());
    for (std::size_t j = 0; j < pl.size(); ++j) out[j] = pl[j] - pu[j];
    return out;
}

Series real_received(std::span<const double> cg, std::span<const double> cu) {
    require_same_length(cg, cu, "real_received");
    Series out(cg.size());
    for (std::size_t j = 0; j < cg.size(); ++j) out[j] = cg[j] + cu[j];
    return out;
}

Series energy_loss(std::span<const double> rt, std::span<const double> rr) {
    require_same_length(rt, rr, "energy_loss");
    Series out(rt.size());
    for (std::size_t j = 0; j < rt.size(); ++j) out[j] = rt[j] - rr[j];
    return out;
}

EnergyFlow integrate(std::span<const double> pl, std::span<const double> pu,
                     std::span<const double> cg, std::span<const double> cu) {
    EnergyFlow flow;
    flow.rt = real_transferred(pl, pu);
    flow.rr = real_received(cg, cu);
    flow.el = energy_loss(flow.rt, flow.rr);
    return flow;
}

UserEnergyProfile build_profile(UserType role, std::vector<EnergyHistoryRecord> sharing,
                                std::vector<EnergyHistoryRecord> idle) {
    UserEnergyProfile p;
    p.role = role;
    const bool provider = role == UserType::Provider;
    for (const auto& r : sharing) {
        if (r.state != EnergyState::Sharing || r.role() != role) {
            throw Error(ErrorKind::InvalidInput, "record " + r.rid + " does not belong in a " +
                                                     to_string(role) + " sharing profile");
        }
        const Series lv = r.levels();
        p.sharing_derived.push_back(provider ? provider_loss(lv) : consumer_gain(lv));
        p.distances.push_back(*r.distance_cm);
        p.times.push_back(r.minutes());
    }
    for (const auto& r : idle) {
        if (r.state != EnergyState::Idle || r.role() != role) {
            throw Error(ErrorKind::InvalidInput, "record " + r.rid + " does not belong in a " +
                                                     to_string(role) + " idle profile");
        }
        const Series lv = r.levels();
        p.idle_derived.push_back(provider ? provider_usage(lv) : consumer_usage(lv));
    }
    p.sharing = std::move(sharing);
    p.idle = std::move(idle);
    return p;
}

double mse(std::span<const double> pred, std::span<const double> truth) {
    require_same_length(pred, truth, "mse");
    if (pred.empty()) throw Error(ErrorKind::InvalidSeries, "mse: empty series");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - truth[i];
        acc += r * r;
    }
    return acc / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> truth) {
    require_same_length(pred, truth, "mae");
    if (pred.empty()) throw Error(ErrorKind::InvalidSeries, "mae: empty series");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
    return acc / static_cast<double>(pred.size());
}

}  // namespace elp::domain
