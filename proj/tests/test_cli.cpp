#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "elp/config.hpp"
#include "support/process.hpp"

using elp::check::run_command;
using elp::check::slurp;

namespace {

const std::string kCli = ELP_CLI_PATH;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("elp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::remove_all(dir_);
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    elp::check::CommandResult elp(const std::string& args) const { return run_command(kCli + " " + args); }

    std::filesystem::path dir_;
};

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_F(Cli, GenerateDefaultDataset) {
    const auto r = elp("generate --out " + path("data.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(line_count(slurp(path("data.csv"))), 2821u);
}

TEST_F(Cli, GenerateHonoursConfigAndFlags) {
    std::ofstream(path("gen.cfg")) << "repeats=1,1,1\nsession_minutes=10\nidle_records=2\nidle_minutes=5\nanomaly_count=0\n";
    auto r = elp("generate --config " + path("gen.cfg") + " --out " + path("a.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(line_count(slurp(path("a.csv"))), 1u + 3 * 2 * 10 + 2 * 2 * 5);
    // Flags win over the config file.
    r = elp("generate --config " + path("gen.cfg") + " --set session_minutes=4 --seed 3 --out " + path("b.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(line_count(slurp(path("b.csv"))), 1u + 3 * 2 * 4 + 2 * 2 * 5);
}

TEST_F(Cli, FilterRemovesAnomalies) {
    ASSERT_EQ(elp("generate --out " + path("data.csv")).exit_code, 0);
    const auto r = elp("filter --data " + path("data.csv") + " --out " + path("f.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_NE(r.output.find("removed 6 sessions (360 points), 2160 sharing points remain"), std::string::npos)
        << r.output;
    EXPECT_EQ(line_count(slurp(path("f.csv"))), 1u + 2160 + 300);
    EXPECT_NE(slurp(path("f.csv.report.csv")).find("# points_removed=360"), std::string::npos);
}

TEST_F(Cli, EvaluateIdenticalFilesIsZero) {
    ASSERT_EQ(elp("generate --out " + path("data.csv")).exit_code, 0);
    const auto r = elp("evaluate --pred " + path("data.csv") + " --truth " + path("data.csv") + " --out " +
                       path("m.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_NE(r.output.find("MSE=0 MAE=0"), std::string::npos) << r.output;
    EXPECT_EQ(slurp(path("m.csv")), "metric,value\nMSE,0\nMAE,0\n");
}

TEST_F(Cli, EvaluatePredictionFile) {
    std::ofstream(path("p.csv")) << "session_id,minute_index,truth,prediction\ns0,0,1,2\ns0,1,3,1\n";
    const auto r = elp("evaluate --pred " + path("p.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_NE(r.output.find("n=2 MSE=2.5 MAE=1.5"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainThenPredict) {
    ASSERT_EQ(elp("generate --out " + path("data.csv")).exit_code, 0);
    const std::string small = " --d-model 8 --epochs 1 --set n_heads=2 --set d_ff=16 --set train_stride=8";
    auto r = elp("train --data " + path("data.csv") + " --out " + path("m.ckpt") + " --l-token 60 --eit off" + small);
    ASSERT_EQ(r.exit_code, 0) << r.output;
    const auto sidecar = elp::config::load_kv(path("m.ckpt.cfg"));
    EXPECT_EQ(sidecar.at("token_len"), "60");
    EXPECT_EQ(sidecar.at("eit_enabled"), "0");
    r = elp("predict --data " + path("data.csv") + " --model " + path("m.ckpt") + " --out " + path("p.csv"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(slurp(path("p.csv")).rfind("session_id,minute_index,truth,prediction\n", 0), 0u);
    r = elp("evaluate --pred " + path("p.csv"));
    EXPECT_EQ(r.exit_code, 0) << r.output;
}

TEST_F(Cli, HelpListsConfigKeys) {
    for (const std::string sub : {"generate", "filter", "train", "predict", "evaluate", "experiment"}) {
        const auto r = elp(sub + " --help");
        EXPECT_EQ(r.exit_code, 0);
        for (const auto& [key, value] : elp::config::documented_keys(sub)) {
            EXPECT_NE(r.output.find(key), std::string::npos) << sub << " help lacks " << key;
        }
    }
}

TEST_F(Cli, UsageErrorsExitTwo) {
    auto r = elp("generate --out x.csv --bogus");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("--out"), std::string::npos);
    EXPECT_EQ(elp("").exit_code, 2);
    EXPECT_EQ(elp("frobnicate").exit_code, 2);
    EXPECT_EQ(elp("train --data x.csv --out y --eit maybe").exit_code, 2);
}

TEST_F(Cli, PipelineErrorsExitOneWithPhase) {
    auto r = elp("filter --data " + path("missing.csv") + " --out " + path("f.csv"));
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.output.find("elp: error phase=load kind=IoError"), std::string::npos) << r.output;
    EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);

    std::ofstream(path("bad.csv")) << "session_id,role,state,distance_cm,minute_index,battery_mAh\ns0,provider,sharing,1,0,x\n";
    r = elp("filter --data " + path("bad.csv") + " --out " + path("f.csv"));
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.output.find("kind=ParseError"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("row 2"), std::string::npos) << r.output;

    r = elp("generate --set nonsense=1 --out " + path("g.csv"));
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.output.find("kind=ParseError"), std::string::npos) << r.output;
}
