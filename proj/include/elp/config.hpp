#pragma once

// key=value run configuration shared by every CLI subcommand.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elp/dataio.hpp"
#include "elp/filter.hpp"
#include "elp/model/easeformer.hpp"
#include "elp/pipeline.hpp"

namespace elp::config {

using KeyValues = std::map<std::string, std::string>;

/// Parses `key=value` lines. Blank lines and lines starting with '#' are
/// skipped; whitespace around keys and values is trimmed.
KeyValues parse_kv(const std::string& text);
KeyValues load_kv(const std::string& path);
std::string format_kv(const KeyValues& kv);

/// "0..9" or "0,3,7".
std::vector<std::uint64_t> parse_seeds(const std::string& text);
std::string format_seeds(const std::vector<std::uint64_t>& seeds);

/// Model defaults used by the CLI: the library defaults with base_lr 1e-3.
inline model::EaseformerConfig desk_model() {
    model::EaseformerConfig m;
    m.base_lr = 1e-3;
    return m;
}

struct RunConfig {
    data::GeneratorConfig generator;
    filter::FilterConfig filter;
    bool apply_filter = true;
    data::SplitFractions fractions;
    model::EaseformerConfig model = desk_model();
    pipeline::Target target = pipeline::Target::ProviderLoss;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<std::size_t> token_lens = {30, 60, 90};
    std::size_t elp_token_len = 30;
    std::size_t train_stride = 2;

    KeyValues to_kv() const;
    /// Unknown keys raise ParseError.
    static RunConfig from_kv(const KeyValues& kv);
};

/// Keys honoured by a subcommand with their default values. An unknown
/// subcommand name yields every key.
std::vector<std::pair<std::string, std::string>> documented_keys(const std::string& subcommand = "");

}  // namespace elp::config
