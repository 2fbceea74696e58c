#include "elp/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "elp/error.hpp"
#include "elp/rng.hpp"

namespace elp::data {

using domain::EnergyHistoryRecord;
using domain::EnergyState;
using domain::UserType;

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

[[noreturn]] void parse_error(std::size_t line_no, const std::string& what) {
    throw Error(ErrorKind::ParseError, "row " + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& s, std::size_t line_no, const char* what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        parse_error(line_no, std::string("invalid ") + what + " '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(const std::string& s, std::size_t line_no, const char* what) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        parse_error(line_no, std::string("invalid ") + what + " '" + s + "'");
    }
    return v;
}

EnergyHistoryRecord make_record(const std::string& session_id, UserType role, EnergyState state,
                                std::optional<double> distance) {
    EnergyHistoryRecord r;
    r.session_id = session_id;
    r.rid = session_id + "/" + domain::to_string(role);
    r.uid = domain::to_string(role);
    r.state = state;
    if (state == EnergyState::Sharing) {
        r.distance_cm = distance;
        r.user_type = role;
    }
    r.idle_role = role;
    return r;
}

}  // namespace

std::string sessions_to_csv(const std::vector<EnergyHistoryRecord>& records) {
    std::string out;
    for (std::size_t i = 0; i < kSessionColumns.size(); ++i) {
        out += kSessionColumns[i];
        out += i + 1 < kSessionColumns.size() ? ',' : '\n';
    }
    for (const auto& r : records) {
        const std::string prefix = r.session_id + "," + domain::to_string(r.role()) + "," +
                                   domain::to_string(r.state) + "," +
                                   (r.distance_cm ? format_double(*r.distance_cm) : std::string()) + ",";
        for (const auto& s : r.bl) {
            out += prefix + std::to_string(s.minute) + "," + format_double(s.level_mah) + "\n";
        }
    }
    return out;
}

std::vector<EnergyHistoryRecord> sessions_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "row 1: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_fields(line);
    if (header.size() != kSessionColumns.size() ||
        !std::equal(header.begin(), header.end(), kSessionColumns.begin())) {
        parse_error(line_no, "header must be session_id,role,state,distance_cm,minute_index,battery_mAh");
    }

    std::vector<EnergyHistoryRecord> records;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != kSessionColumns.size()) parse_error(line_no, "expected 6 fields");
        if (f[0].empty()) parse_error(line_no, "empty session_id");
        UserType role;
        if (f[1] == "provider") {
            role = UserType::Provider;
        } else if (f[1] == "consumer") {
            role = UserType::Consumer;
        } else {
            parse_error(line_no, "role must be provider or consumer");
        }
        EnergyState state;
        if (f[2] == "sharing") {
            state = EnergyState::Sharing;
        } else if (f[2] == "idle") {
            state = EnergyState::Idle;
        } else {
            parse_error(line_no, "state must be sharing or idle");
        }
        std::optional<double> distance;
        if (state == EnergyState::Sharing) {
            if (f[3].empty()) parse_error(line_no, "sharing rows need distance_cm");
            distance = parse_double(f[3], line_no, "distance_cm");
            if (*distance < 0.0) parse_error(line_no, "negative distance_cm");
        } else if (!f[3].empty()) {
            parse_error(line_no, "idle rows must leave distance_cm empty");
        }
        const std::int64_t minute = parse_int(f[4], line_no, "minute_index");
        const double level = parse_double(f[5], line_no, "battery_mAh");
        if (level < 0.0) parse_error(line_no, "negative battery_mAh");

        const auto key = std::make_pair(f[0], f[1]);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, records.size()).first;
            records.push_back(make_record(f[0], role, state, distance));
        }
        auto& rec = records[it->second];
        if (rec.state != state || rec.distance_cm != distance) {
            parse_error(line_no, "state/distance changes within session " + f[0]);
        }
        const std::int64_t expected = static_cast<std::int64_t>(rec.bl.size());
        if (minute < expected) parse_error(line_no, "duplicate or out-of-order minute_index " + f[4]);
        if (minute != expected) {
            throw Error(ErrorKind::GapError, "row " + std::to_string(line_no) + ": session " + f[0] + "/" + f[1] +
                                                 " jumps to minute " + f[4] + ", expected " +
                                                 std::to_string(expected));
        }
        rec.bl.push_back({minute, level});
    }
    return records;
}

void write_sessions(const std::string& path, const std::vector<EnergyHistoryRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    out << sessions_to_csv(records);
}

std::vector<EnergyHistoryRecord> load_sessions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return sessions_from_csv(ss.str());
}

SessionSet partition(const std::vector<EnergyHistoryRecord>& records) {
    SessionSet set;
    for (const auto& r : records) {
        const bool provider = r.role() == UserType::Provider;
        if (r.state == EnergyState::Sharing) {
            (provider ? set.provider_sharing : set.consumer_sharing).push_back(r);
        } else {
            (provider ? set.provider_idle : set.consumer_idle).push_back(r);
        }
    }
    return set;
}

void GeneratorConfig::validate() const {
    auto bad = [](const std::string& msg) { throw Error(ErrorKind::InvalidParam, "generator: " + msg); };
    if (distances_cm.size() != repeats.size()) bad("distances and repeats differ in length");
    if (session_minutes == 0 || idle_minutes == 0) bad("record lengths must be positive");
    if (interval_min <= 0) bad("interval must be positive");
    if (eff_floor <= 0.0 || eff_floor > 1.0) bad("efficiency floor must lie in (0, 1]");
    if (noise_sigma < 0.0 || idle_noise < 0.0) bad("noise must be non-negative");
    if (anomaly_count > session_count()) bad("more anomalies than sessions");
    if (anomaly_factor <= 0.0) bad("anomaly factor must be positive");
}

double GeneratorConfig::efficiency(double distance_cm) const {
    return std::clamp(1.0 - eff_slope * (distance_cm - eff_ref_cm), eff_floor, 1.0);
}

std::size_t GeneratorConfig::session_count() const {
    return std::accumulate(repeats.begin(), repeats.end(), std::size_t{0});
}

std::string GeneratorConfig::to_kv() const {
    std::string out = "distances_cm=";
    for (std::size_t i = 0; i < distances_cm.size(); ++i) out += (i ? "," : "") + format_double(distances_cm[i]);
    out += "\nrepeats=";
    for (std::size_t i = 0; i < repeats.size(); ++i) out += (i ? "," : "") + std::to_string(repeats[i]);
    out += "\n";
    auto put = [&](const char* key, const std::string& v) { out += std::string(key) + "=" + v + "\n"; };
    put("session_minutes", std::to_string(session_minutes));
    put("interval_min", std::to_string(interval_min));
    put("transfer_rate", format_double(transfer_rate));
    put("eff_slope", format_double(eff_slope));
    put("eff_ref_cm", format_double(eff_ref_cm));
    put("eff_floor", format_double(eff_floor));
    put("provider_drain", format_double(provider_drain));
    put("noise_sigma", format_double(noise_sigma));
    put("anomaly_count", std::to_string(anomaly_count));
    put("anomaly_factor", format_double(anomaly_factor));
    put("idle_records", std::to_string(idle_records));
    put("idle_minutes", std::to_string(idle_minutes));
    put("provider_idle_drain", format_double(provider_idle_drain));
    put("consumer_idle_drain", format_double(consumer_idle_drain));
    put("idle_noise", format_double(idle_noise));
    put("provider_start", format_double(provider_start));
    put("consumer_start", format_double(consumer_start));
    put("shuffle_order", shuffle_order ? "1" : "0");
    put("seed", std::to_string(seed));
    return out;
}

GeneratorConfig GeneratorConfig::from_kv(const std::map<std::string, std::string>& kv, GeneratorConfig c) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto fail = [](const char* key) {
        throw Error(ErrorKind::ParseError, std::string("generator config: bad value for ") + key);
    };
    auto real = [&](const char* key, double& field) {
        if (const auto* v = get(key)) {
            std::size_t used = 0;
            try { field = std::stod(*v, &used); } catch (const std::exception&) { fail(key); }
            if (used != v->size()) fail(key);
        }
    };
    auto count = [&](const char* key, auto& field) {
        if (const auto* v = get(key)) {
            std::size_t used = 0;
            long long n = 0;
            try { n = std::stoll(*v, &used); } catch (const std::exception&) { fail(key); }
            if (used != v->size() || n < 0) fail(key);
            field = static_cast<std::decay_t<decltype(field)>>(n);
        }
    };
    auto list = [&](const char* key, auto& field) {
        if (const auto* v = get(key)) {
            field.clear();
            std::istringstream is(*v);
            std::string tok;
            while (std::getline(is, tok, ',')) {
                std::size_t used = 0;
                double x = 0.0;
                try { x = std::stod(tok, &used); } catch (const std::exception&) { fail(key); }
                if (used != tok.size()) fail(key);
                field.push_back(static_cast<typename std::decay_t<decltype(field)>::value_type>(x));
            }
        }
    };
    list("distances_cm", c.distances_cm);
    list("repeats", c.repeats);
    count("session_minutes", c.session_minutes);
    count("interval_min", c.interval_min);
    real("transfer_rate", c.transfer_rate);
    real("eff_slope", c.eff_slope);
    real("eff_ref_cm", c.eff_ref_cm);
    real("eff_floor", c.eff_floor);
    real("provider_drain", c.provider_drain);
    real("noise_sigma", c.noise_sigma);
    count("anomaly_count", c.anomaly_count);
    real("anomaly_factor", c.anomaly_factor);
    count("idle_records", c.idle_records);
    count("idle_minutes", c.idle_minutes);
    real("provider_idle_drain", c.provider_idle_drain);
    real("consumer_idle_drain", c.consumer_idle_drain);
    real("idle_noise", c.idle_noise);
    real("provider_start", c.provider_start);
    real("consumer_start", c.consumer_start);
    if (const auto* v = get("shuffle_order")) c.shuffle_order = *v == "1" || *v == "true" || *v == "on";
    count("seed", c.seed);
    return c;
}

namespace {

struct Plan {
    std::vector<double> distance;  // per session, collection order
    std::vector<double> inflation; // 1 for normal sessions
};

// Collection order and anomaly assignment, shared by the generator and its bookkeeping.
Plan plan_sessions(const GeneratorConfig& c) {
    Plan plan;
    for (std::size_t i = 0; i < c.distances_cm.size(); ++i) {
        plan.distance.insert(plan.distance.end(), c.repeats[i], c.distances_cm[i]);
    }
    Rng rng = Rng(c.seed).derive(11);
    if (c.shuffle_order) std::shuffle(plan.distance.begin(), plan.distance.end(), rng.engine());
    plan.inflation.assign(plan.distance.size(), 1.0);
    std::vector<std::size_t> idx(plan.distance.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    // Each anomaly gets its own multiplier so anomalies stay sparse rather
    // than forming a dense group of their own.
    for (std::size_t a = 0; a < c.anomaly_count; ++a) {
        plan.inflation[idx[a]] = c.anomaly_factor * (1.0 + 0.5 * static_cast<double>(a));
    }
    return plan;
}

std::string session_name(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
    return buf;
}

}  // namespace

std::vector<std::string> anomalous_sessions(const GeneratorConfig& config) {
    config.validate();
    const Plan plan = plan_sessions(config);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < plan.inflation.size(); ++i) {
        if (plan.inflation[i] != 1.0) out.push_back(session_name("s", i));
    }
    return out;
}

std::vector<EnergyHistoryRecord> generate_synthetic(const GeneratorConfig& c) {
    c.validate();
    const Plan plan = plan_sessions(c);
    Rng noise = Rng(c.seed).derive(12);
    std::vector<EnergyHistoryRecord> out;

    for (std::size_t s = 0; s < plan.distance.size(); ++s) {
        const double d = plan.distance[s];
        const std::string id = session_name("s", s);
        auto provider = make_record(id, UserType::Provider, EnergyState::Sharing, d);
        auto consumer = make_record(id, UserType::Consumer, EnergyState::Sharing, d);
        double pb = c.provider_start - 10.0 * static_cast<double>(s % 10);
        double cb = c.consumer_start + 10.0 * static_cast<double>(s % 10);
        const double provider_step = c.transfer_rate / c.efficiency(d) + c.provider_drain;
        for (std::size_t j = 0; j < c.session_minutes; ++j) {
            if (j > 0) {
                const double dp = std::max(0.0, provider_step + noise.normal(0.0, c.noise_sigma)) * plan.inflation[s];
                const double dc = std::max(0.0, c.transfer_rate + noise.normal(0.0, c.noise_sigma));
                pb = std::max(0.0, pb - dp);
                cb += dc;
            }
            const auto minute = static_cast<std::int64_t>(j) * c.interval_min;
            provider.bl.push_back({minute, pb});
            consumer.bl.push_back({minute, cb});
        }
        out.push_back(std::move(provider));
        out.push_back(std::move(consumer));
    }

    for (int role = 0; role < 2; ++role) {
        const bool is_provider = role == 0;
        const double drain = is_provider ? c.provider_idle_drain : c.consumer_idle_drain;
        for (std::size_t k = 0; k < c.idle_records; ++k) {
            auto rec = make_record(session_name(is_provider ? "idle-p" : "idle-c", k),
                                   is_provider ? UserType::Provider : UserType::Consumer, EnergyState::Idle,
                                   std::nullopt);
            const double start = (is_provider ? c.provider_start : c.consumer_start) - 50.0 * static_cast<double>(k);
            for (std::size_t j = 0; j < c.idle_minutes; ++j) {
                const double level = start - drain * static_cast<double>(j) + noise.normal(0.0, c.idle_noise);
                rec.bl.push_back({static_cast<std::int64_t>(j) * c.interval_min, std::max(0.0, level)});
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

void SplitFractions::validate() const {
    if (train < 0.0 || val < 0.0 || test < 0.0) throw Error(ErrorKind::InvalidParam, "split: negative fraction");
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidParam, "split: fractions must sum to 1");
    }
}

std::array<std::size_t, 3> allocate_counts(std::size_t n, const SplitFractions& f) {
    f.validate();
    const std::array<double, 3> share = {f.train, f.val, f.test};
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = share[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-12));
        rem[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order = {2, 1, 0};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + 1e-12; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
    return counts;
}

SplitIndices split(const std::vector<double>& session_strata, const SplitFractions& f) {
    f.validate();
    std::vector<double> strata;
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < session_strata.size(); ++i) {
        auto it = std::find(strata.begin(), strata.end(), session_strata[i]);
        if (it == strata.end()) {
            strata.push_back(session_strata[i]);
            members.emplace_back();
            it = strata.end() - 1;
        }
        members[static_cast<std::size_t>(it - strata.begin())].push_back(i);
    }
    SplitIndices out;
    for (const auto& group : members) {
        const auto counts = allocate_counts(group.size(), f);
        std::size_t k = 0;
        for (std::size_t i = 0; i < counts[0]; ++i) out.train.push_back(group[k++]);
        for (std::size_t i = 0; i < counts[1]; ++i) out.val.push_back(group[k++]);
        for (std::size_t i = 0; i < counts[2]; ++i) out.test.push_back(group[k++]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<SessionSeries> to_series(const domain::UserEnergyProfile& profile) {
    std::vector<SessionSeries> out;
    for (std::size_t i = 0; i < profile.sharing.size(); ++i) {
        SessionSeries s;
        s.session_id = profile.sharing[i].session_id;
        s.distance_cm = profile.distances[i];
        s.target = profile.sharing_derived[i];
        s.minutes = profile.times[i];
        out.push_back(std::move(s));
    }
    return out;
}

NormStats normalize_fit(const std::vector<SessionSeries>& train) {
    double n = 0.0;
    double t_sum = 0.0;
    double m_sum = 0.0;
    for (const auto& s : train) {
        if (s.normalized) throw Error(ErrorKind::InvalidInput, "normalize_fit: series already normalised");
        for (std::size_t i = 0; i < s.target.size(); ++i) {
            t_sum += s.target[i];
            m_sum += s.minutes[i];
            n += 1.0;
        }
    }
    if (n == 0.0) throw Error(ErrorKind::InvalidDataset, "normalize_fit: no training points");
    NormStats st;
    st.target_mean = t_sum / n;
    st.time_mean = m_sum / n;
    double t_var = 0.0;
    double m_var = 0.0;
    for (const auto& s : train) {
        for (std::size_t i = 0; i < s.target.size(); ++i) {
            t_var += (s.target[i] - st.target_mean) * (s.target[i] - st.target_mean);
            m_var += (s.minutes[i] - st.time_mean) * (s.minutes[i] - st.time_mean);
        }
    }
    st.target_std = t_var > 0.0 ? std::sqrt(t_var / n) : 1.0;
    st.time_std = m_var > 0.0 ? std::sqrt(m_var / n) : 1.0;
    return st;
}

std::vector<SessionSeries> normalize_apply(const NormStats& stats, std::vector<SessionSeries> series) {
    for (auto& s : series) {
        if (s.normalized) throw Error(ErrorKind::InvalidInput, "normalize_apply: series " + s.session_id +
                                                                   " is already normalised");
        for (double& v : s.target) v = stats.target_forward(v);
        for (double& v : s.minutes) v = stats.time_forward(v);
        s.normalized = true;
    }
    return series;
}

}  // namespace elp::data
