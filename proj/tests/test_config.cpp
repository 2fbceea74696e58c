#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "elp/config.hpp"
#include "elp/error.hpp"

using namespace elp;
using namespace elp::config;

TEST(ParseKv, TrimsAndSkipsComments) {
    const auto kv = parse_kv("# comment\n  seed = 4 \n\nd_model=32\r\n");
    EXPECT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv.at("seed"), "4");
    EXPECT_EQ(kv.at("d_model"), "32");
    EXPECT_THROW(parse_kv("novalue\n"), Error);
    EXPECT_THROW(parse_kv("=3\n"), Error);
}

TEST(Seeds, RangesAndLists) {
    EXPECT_EQ(parse_seeds("0..3"), (std::vector<std::uint64_t>{0, 1, 2, 3}));
    EXPECT_EQ(parse_seeds("5, 2,9"), (std::vector<std::uint64_t>{5, 2, 9}));
    EXPECT_EQ(format_seeds({1, 2}), "1,2");
    EXPECT_THROW(parse_seeds("3..1"), Error);
    EXPECT_THROW(parse_seeds("a"), Error);
}

TEST(RunConfig, DefaultsRoundTrip) {
    const RunConfig c;
    const auto kv = c.to_kv();
    EXPECT_EQ(RunConfig::from_kv(kv).to_kv(), kv);
    EXPECT_EQ(parse_kv(format_kv(kv)), kv);
}

TEST(RunConfig, ModifiedRoundTripIsLossless) {
    RunConfig c;
    c.generator.noise_sigma = 0.1 + 0.2;
    c.generator.repeats = {1, 2, 3};
    c.filter.dbscan.eps = 0.3333333333333333;
    c.filter.scaling = filter::FinalScaling::MinMax;
    c.apply_filter = false;
    c.fractions = {0.6, 0.2, 0.2};
    c.model.d_model = 32;
    c.model.temperature = 1.0 / 3.0;
    c.model.eit_enabled = false;
    c.target = pipeline::Target::ConsumerGain;
    c.seeds = {3, 4, 5};
    c.token_lens = {10, 20};
    c.elp_token_len = 20;
    c.train_stride = 3;

    const auto text = format_kv(c.to_kv());
    const auto back = RunConfig::from_kv(parse_kv(text));
    EXPECT_EQ(format_kv(back.to_kv()), text);
    EXPECT_EQ(back.generator.noise_sigma, c.generator.noise_sigma);
    EXPECT_EQ(back.filter.dbscan.eps, c.filter.dbscan.eps);
    EXPECT_EQ(back.model.temperature, c.model.temperature);
    EXPECT_EQ(back.seeds, c.seeds);
    EXPECT_EQ(back.target, c.target);
    EXPECT_FALSE(back.apply_filter);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    try {
        RunConfig::from_kv({{"d_modle", "3"}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    }
    EXPECT_THROW(RunConfig::from_kv({{"target", "both"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"filter", "maybe"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"dbscan_eps", "0.1x"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"train_stride", "-1"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"d_model", "-8"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"d_model", "8x"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"eit_enabled", "yes"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"base_lr", "1e-3e"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"anomaly_count", "-2"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"noise_sigma", "0.1.2"}}), Error);
    EXPECT_THROW(RunConfig::from_kv({{"repeats", "1,x"}}), Error);
}

TEST(RunConfig, DeskModelDefaults) {
    const RunConfig c;
    EXPECT_DOUBLE_EQ(c.model.base_lr, 1e-3);
    EXPECT_EQ(c.model.d_model, 64u);
    EXPECT_EQ(c.model.epochs, 10);
    EXPECT_EQ(c.token_lens, (std::vector<std::size_t>{30, 60, 90}));
    EXPECT_EQ(c.seeds, parse_seeds("0..9"));
}

TEST(LoadKv, FromFile) {
    const auto path = std::filesystem::temp_directory_path() / "elp_config_test.cfg";
    std::ofstream(path) << "seed=7\n";
    EXPECT_EQ(load_kv(path.string()).at("seed"), "7");
    std::filesystem::remove(path);
    EXPECT_THROW(load_kv(path.string()), Error);
}

TEST(DocumentedKeys, PerSubcommand) {
    auto has = [](const std::string& sub, const std::string& key) {
        for (const auto& [k, v] : documented_keys(sub)) {
            if (k == key) return true;
        }
        return false;
    };
    EXPECT_TRUE(has("generate", "anomaly_count"));
    EXPECT_FALSE(has("generate", "d_model"));
    EXPECT_TRUE(has("filter", "dbscan_eps"));
    EXPECT_TRUE(has("train", "token_len"));
    EXPECT_TRUE(has("train", "target"));
    EXPECT_TRUE(has("experiment", "seeds"));
    EXPECT_EQ(documented_keys("").size(), RunConfig().to_kv().size());
}
