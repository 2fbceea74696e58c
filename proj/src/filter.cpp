#include "elp/filter.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>

#include "elp/error.hpp"

namespace elp::filter {

void DbscanParams::validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(ErrorKind::InvalidParam, "dbscan eps must be > 0");
    if (min_pts < 1) throw Error(ErrorKind::InvalidParam, "dbscan min_pts must be >= 1");
}

namespace {

double sq_distance(const Point& a, const Point& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

std::vector<int> dbscan(const std::vector<Point>& points, const DbscanParams& params) {
    params.validate();
    const std::size_t n = points.size();
    if (n == 0) return {};
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw Error(ErrorKind::InvalidInput, "dbscan: points have mixed dimensions");
        for (double v : p) {
            if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "dbscan: non-finite coordinate");
        }
    }

    const double eps2 = params.eps * params.eps;
    auto neighbours = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n; ++j) {
            if (sq_distance(points[i], points[j]) <= eps2) out.push_back(j);
        }
        return out;
    };

    constexpr int kUnvisited = -2;
    std::vector<int> labels(n, kUnvisited);
    int cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != kUnvisited) continue;
        auto seeds = neighbours(i);
        if (seeds.size() < params.min_pts) {
            labels[i] = kNoise;
            continue;
        }
        labels[i] = cluster;
        std::deque<std::size_t> frontier(seeds.begin(), seeds.end());
        while (!frontier.empty()) {
            const std::size_t q = frontier.front();
            frontier.pop_front();
            if (labels[q] == kNoise) labels[q] = cluster;  // border point
            if (labels[q] != kUnvisited) continue;
            labels[q] = cluster;
            auto nq = neighbours(q);
            if (nq.size() >= params.min_pts) frontier.insert(frontier.end(), nq.begin(), nq.end());
        }
        ++cluster;
    }
    return labels;
}

ScalingStats fit_scaling(const std::vector<double>& values, FinalScaling mode) {
    ScalingStats s;
    if (values.empty()) return s;
    if (mode == FinalScaling::MinMax) {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        s.offset = *lo;
        s.scale = *hi > *lo ? *hi - *lo : 1.0;
        return s;
    }
    std::vector<double> mags;
    mags.reserve(values.size());
    for (double v : values) mags.push_back(std::abs(v));
    const auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
    std::nth_element(mags.begin(), mid, mags.end());
    double median = *mid;
    if (mags.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(mags.begin(), mid));
    }
    s.offset = 0.0;
    s.scale = median > 0.0 ? median : 1.0;
    return s;
}

FilterResult filter_sessions(const std::vector<domain::EnergyHistoryRecord>& provider_records,
                             const std::vector<domain::EnergyHistoryRecord>& consumer_records,
                             const FilterConfig& config) {
    using domain::UserType;
    config.dbscan.validate();

    std::map<std::string, std::size_t> consumer_by_session;
    for (std::size_t i = 0; i < consumer_records.size(); ++i) {
        const auto& r = consumer_records[i];
        if (r.role() != UserType::Consumer || r.state != domain::EnergyState::Sharing) {
            throw Error(ErrorKind::InvalidInput, "filter: " + r.rid + " is not a consumer sharing record");
        }
        if (!consumer_by_session.emplace(r.session_id, i).second) {
            throw Error(ErrorKind::PairingError, "filter: duplicate consumer session " + r.session_id);
        }
    }
    if (consumer_records.size() != provider_records.size()) {
        throw Error(ErrorKind::PairingError, "filter: provider and consumer record counts differ");
    }

    std::vector<std::size_t> pair_of(provider_records.size());
    std::vector<double> pl_final;
    std::vector<double> cg_final;
    std::map<std::string, bool> seen;
    for (std::size_t i = 0; i < provider_records.size(); ++i) {
        const auto& p = provider_records[i];
        if (p.role() != UserType::Provider || p.state != domain::EnergyState::Sharing) {
            throw Error(ErrorKind::InvalidInput, "filter: " + p.rid + " is not a provider sharing record");
        }
        if (!seen.emplace(p.session_id, true).second) {
            throw Error(ErrorKind::PairingError, "filter: duplicate provider session " + p.session_id);
        }
        auto it = consumer_by_session.find(p.session_id);
        if (it == consumer_by_session.end()) {
            throw Error(ErrorKind::PairingError, "filter: session " + p.session_id + " has no consumer record");
        }
        pair_of[i] = it->second;
        pl_final.push_back(domain::provider_loss(p.levels()).back());
        cg_final.push_back(domain::consumer_gain(consumer_records[it->second].levels()).back());
    }

    FilterReport report;
    report.provider_stats = config.provider_stats.value_or(fit_scaling(pl_final, config.scaling));
    report.consumer_stats = config.consumer_stats.value_or(fit_scaling(cg_final, config.scaling));

    auto cluster = [&](const std::vector<double>& finals, const ScalingStats& st) {
        std::vector<Point> pts;
        pts.reserve(finals.size());
        for (double v : finals) pts.push_back({st.apply(v)});
        return dbscan(pts, config.dbscan);
    };
    report.provider_labels = cluster(pl_final, report.provider_stats);
    report.consumer_labels = cluster(cg_final, report.consumer_stats);

    std::vector<domain::EnergyHistoryRecord> kept_p;
    std::vector<domain::EnergyHistoryRecord> kept_c;
    for (std::size_t i = 0; i < provider_records.size(); ++i) {
        const auto& p = provider_records[i];
        const auto& c = consumer_records[pair_of[i]];
        if (report.provider_labels[i] == kNoise || report.consumer_labels[i] == kNoise) {
            report.outlier_session_ids.push_back(p.session_id);
            report.points_removed += p.bl.size() + c.bl.size();
        } else {
            report.kept_session_ids.push_back(p.session_id);
            kept_p.push_back(p);
            kept_c.push_back(c);
        }
    }

    FilterResult result;
    result.provider = domain::build_profile(UserType::Provider, std::move(kept_p), {});
    result.consumer = domain::build_profile(UserType::Consumer, std::move(kept_c), {});
    result.report = std::move(report);
    return result;
}

std::string report_csv(const FilterReport& report) {
    std::ostringstream os;
    os << "session_id,status\n";
    for (const auto& id : report.kept_session_ids) os << id << ",kept\n";
    for (const auto& id : report.outlier_session_ids) os << id << ",outlier\n";
    os << "# points_removed=" << report.points_removed << '\n';
    return os.str();
}

}  // namespace elp::filter
