#include "elp/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "elp/error.hpp"

namespace elp::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string real(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

[[noreturn]] void bad(const std::string& key, const std::string& value) {
    throw Error(ErrorKind::ParseError, "config: bad value '" + value + "' for " + key);
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
    if (s.empty() || s[0] < '0' || s[0] > '9') bad(key, s);
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != s.size()) bad(key, s);
        return v;
    } catch (const std::logic_error&) {
        bad(key, s);
    }
}

double to_real(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) bad(key, s);
        return v;
    } catch (const std::logic_error&) {
        bad(key, s);
    }
}

bool to_bool(const std::string& key, const std::string& s) {
    if (s == "on" || s == "1" || s == "true") return true;
    if (s == "off" || s == "0" || s == "false") return false;
    bad(key, s);
}

// Keys owned by RunConfig itself; the generator and model keys come from their own to_kv().
const std::vector<std::string>& run_keys() {
    static const std::vector<std::string> keys = {
        "dbscan_eps", "dbscan_min_pts", "scaling", "filter", "split_train", "split_val", "split_test",
        "target",     "seeds",          "token_lens", "elp_token_len", "train_stride"};
    return keys;
}

std::vector<std::string> keys_of(const std::string& kv_text) {
    std::vector<std::string> keys;
    for (const auto& [k, v] : parse_kv(kv_text)) keys.push_back(k);
    return keys;
}

}  // namespace

KeyValues parse_kv(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::ParseError, "config line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw Error(ErrorKind::ParseError, "config line " + std::to_string(line_no) + ": empty key");
        kv[key] = trim(t.substr(eq + 1));
    }
    return kv;
}

KeyValues load_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_kv(ss.str());
}

std::string format_kv(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const auto lo = to_u64("seeds", text.substr(0, dots));
        const auto hi = to_u64("seeds", text.substr(dots + 2));
        if (hi < lo) bad("seeds", text);
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        return seeds;
    }
    std::istringstream is(text);
    std::string tok;
    while (std::getline(is, tok, ',')) seeds.push_back(to_u64("seeds", trim(tok)));
    if (seeds.empty()) bad("seeds", text);
    return seeds;
}

std::string format_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
    return out;
}

KeyValues RunConfig::to_kv() const {
    KeyValues kv = parse_kv(generator.to_kv());
    for (const auto& [k, v] : parse_kv(model.to_kv())) kv[k] = v;
    kv["dbscan_eps"] = real(filter.dbscan.eps);
    kv["dbscan_min_pts"] = std::to_string(filter.dbscan.min_pts);
    kv["scaling"] = filter.scaling == filter::FinalScaling::MinMax ? "minmax" : "median";
    kv["filter"] = apply_filter ? "on" : "off";
    kv["split_train"] = real(fractions.train);
    kv["split_val"] = real(fractions.val);
    kv["split_test"] = real(fractions.test);
    kv["target"] = target == pipeline::Target::ProviderLoss ? "provider" : "consumer";
    kv["seeds"] = format_seeds(seeds);
    kv["token_lens"] = join(token_lens);
    kv["elp_token_len"] = std::to_string(elp_token_len);
    kv["train_stride"] = std::to_string(train_stride);
    return kv;
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
    RunConfig c;
    std::set<std::string> known(run_keys().begin(), run_keys().end());
    for (const auto& k : keys_of(c.generator.to_kv())) known.insert(k);
    for (const auto& k : keys_of(c.model.to_kv())) known.insert(k);
    for (const auto& [k, v] : kv) {
        if (!known.count(k)) throw Error(ErrorKind::ParseError, "config: unknown key '" + k + "'");
    }

    c.generator = data::GeneratorConfig::from_kv(kv, c.generator);
    c.model = model::EaseformerConfig::from_kv(kv, c.model);
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("dbscan_eps")) c.filter.dbscan.eps = to_real("dbscan_eps", *v);
    if (auto v = get("dbscan_min_pts")) c.filter.dbscan.min_pts = to_u64("dbscan_min_pts", *v);
    if (auto v = get("scaling")) {
        if (*v == "median") {
            c.filter.scaling = filter::FinalScaling::MedianRelative;
        } else if (*v == "minmax") {
            c.filter.scaling = filter::FinalScaling::MinMax;
        } else {
            bad("scaling", *v);
        }
    }
    if (auto v = get("filter")) c.apply_filter = to_bool("filter", *v);
    if (auto v = get("split_train")) c.fractions.train = to_real("split_train", *v);
    if (auto v = get("split_val")) c.fractions.val = to_real("split_val", *v);
    if (auto v = get("split_test")) c.fractions.test = to_real("split_test", *v);
    if (auto v = get("target")) {
        if (*v == "provider") {
            c.target = pipeline::Target::ProviderLoss;
        } else if (*v == "consumer") {
            c.target = pipeline::Target::ConsumerGain;
        } else {
            bad("target", *v);
        }
    }
    if (auto v = get("seeds")) c.seeds = parse_seeds(*v);
    if (auto v = get("token_lens")) {
        c.token_lens.clear();
        std::istringstream is(*v);
        std::string tok;
        while (std::getline(is, tok, ',')) c.token_lens.push_back(to_u64("token_lens", trim(tok)));
        if (c.token_lens.empty()) bad("token_lens", *v);
    }
    if (auto v = get("elp_token_len")) c.elp_token_len = to_u64("elp_token_len", *v);
    if (auto v = get("train_stride")) c.train_stride = to_u64("train_stride", *v);
    return c;
}

std::vector<std::pair<std::string, std::string>> documented_keys(const std::string& subcommand) {
    const RunConfig defaults;
    const KeyValues kv = defaults.to_kv();
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    auto add = [&](const std::string& k) {
        if (seen.insert(k).second) out.emplace_back(k, kv.at(k));
    };
    const std::vector<std::string> filter_keys = {"dbscan_eps", "dbscan_min_pts", "scaling", "filter"};
    const std::vector<std::string> split_keys = {"split_train", "split_val", "split_test", "train_stride"};
    const bool all = subcommand != "generate" && subcommand != "filter" && subcommand != "train" &&
                     subcommand != "predict" && subcommand != "evaluate" && subcommand != "experiment";
    if (all || subcommand == "generate") {
        for (const auto& k : keys_of(defaults.generator.to_kv())) add(k);
    }
    if (all || subcommand == "filter") {
        for (const auto& k : filter_keys) add(k);
    }
    if (all || subcommand == "train" || subcommand == "predict" || subcommand == "experiment") {
        for (const auto& k : keys_of(defaults.model.to_kv())) add(k);
        for (const auto& k : filter_keys) add(k);
        for (const auto& k : split_keys) add(k);
    }
    if (all || subcommand == "train" || subcommand == "predict") add("target");
    if (all || subcommand == "experiment") {
        add("seeds");
        add("token_lens");
        add("elp_token_len");
    }
    return out;
}

}  // namespace elp::config
