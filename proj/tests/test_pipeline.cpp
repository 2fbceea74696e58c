#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <tuple>

#include "elp/error.hpp"
#include "elp/pipeline.hpp"

using namespace elp;
using namespace elp::pipeline;

namespace {

data::SessionSet default_sessions(data::GeneratorConfig g = {}) { return data::partition(data::generate_synthetic(g)); }

model::EaseformerConfig small_model() {
    model::EaseformerConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ff = 16;
    c.e_layers = 2;
    c.d_layers = 1;
    c.epochs = 1;
    c.base_lr = 1e-3;
    return c;
}

// Usage of one idle record at the requested minutes, straight from its battery levels.
std::vector<double> idle_truth(const domain::EnergyHistoryRecord& r, const std::vector<double>& minutes) {
    const auto levels = r.levels();
    std::vector<double> out;
    for (double m : minutes) out.push_back(levels.front() - levels[static_cast<std::size_t>(m)]);
    return out;
}

}  // namespace

TEST(Bundle, AssembleSatisfiesInvariants) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        domain::Series pl(30), pu(30), cg(30), cu(30);
        for (auto* s : {&pl, &pu, &cg, &cu}) {
            for (double& v : *s) v = rng.normal(10.0, 5.0);
        }
        const auto b = PredictionBundle::assemble(pl, pu, cg, cu);
        EXPECT_TRUE(b.invariants_hold());
        auto broken = b;
        broken.el_hat[3] += 1e-12;
        EXPECT_FALSE(broken.invariants_hold());
    }
    EXPECT_THROW(PredictionBundle::assemble({1, 2}, {1}, {1, 2}, {1, 2}), Error);
}

TEST(Modes, FlagsPerMode) {
    const model::EaseformerConfig base;
    const auto inf = apply_mode(base, ModelMode::Informer);
    EXPECT_FALSE(inf.eit_enabled);
    EXPECT_TRUE(inf.zero_init_decoder);
    const auto prior = apply_mode(base, ModelMode::EaseformerPrior);
    EXPECT_FALSE(prior.eit_enabled);
    EXPECT_FALSE(prior.zero_init_decoder);
    const auto eit = apply_mode(base, ModelMode::EaseformerEit);
    EXPECT_TRUE(eit.eit_enabled);
    EXPECT_FALSE(eit.zero_init_decoder);
    // Only the two flags differ.
    auto a = inf, b = eit;
    a.eit_enabled = b.eit_enabled;
    a.zero_init_decoder = b.zero_init_decoder;
    EXPECT_EQ(a.to_kv(), b.to_kv());
}

TEST(Prepare, FilterSplitAndLeakageGuard) {
    const auto data = prepare(default_sessions(), {}, {});
    EXPECT_EQ(data.filtered.report.outlier_session_ids.size(), 6u);
    const std::size_t kept = data.provider.stream.size();
    EXPECT_EQ(kept, 36u);
    EXPECT_EQ(data.split.train.size() + data.split.val.size() + data.split.test.size(), kept);

    std::vector<data::SessionSeries> train;
    for (std::size_t i : data.split.train) train.push_back(data.provider.raw[i]);
    const auto stats = data::normalize_fit(train);
    EXPECT_EQ(stats.target_mean, data.provider.stats.target_mean);
    EXPECT_EQ(stats.target_std, data.provider.stats.target_std);
    EXPECT_EQ(data.provider.train_distances.size(), data.split.train.size());

    // Consumer and provider share the session split.
    for (std::size_t i = 0; i < kept; ++i) {
        EXPECT_EQ(data.provider.stream[i].session_id, data.consumer.stream[i].session_id);
    }
    EXPECT_EQ(data.provider_idle.usage.size(), 5u);
}

TEST(Prepare, UnfilteredKeepsEverything) {
    const auto data = prepare(default_sessions(), {}, {}, false);
    EXPECT_EQ(data.provider.stream.size(), 42u);
    EXPECT_TRUE(data.filtered.report.outlier_session_ids.empty());
}

TEST(Prepare, ErrorsCarryPhase) {
    auto sessions = default_sessions();
    sessions.consumer_sharing.pop_back();
    try {
        prepare(sessions, {}, {});
        FAIL();
    } catch (const PhaseError& e) {
        EXPECT_EQ(e.phase(), Phase::Filter);
        EXPECT_EQ(e.kind(), ErrorKind::PairingError);
        EXPECT_NE(std::string(e.what()).find("[filter]"), std::string::npos);
    }
    try {
        prepare(default_sessions(), {}, {0.5, 0.5, 0.5});
        FAIL();
    } catch (const PhaseError& e) {
        EXPECT_EQ(e.phase(), Phase::Split);
    }
}

TEST(Windows, TrainingWindowLayout) {
    const auto data = prepare(default_sessions(), {}, {});
    auto cfg = small_model();
    const auto table = fit_table(data.provider, cfg);
    const std::size_t rows = 30 * data.split.train.size();
    for (std::size_t stride : {1u, 2u, 7u}) {
        const auto w = training_windows(data.provider, data.split.train, cfg, table, stride);
        EXPECT_EQ(w.size(), (rows - (cfg.seq_len + cfg.pred_len)) / stride + 1);
        for (const auto& s : w) {
            EXPECT_EQ(s.x_en.rows, cfg.seq_len);
            EXPECT_EQ(s.x_de.rows, cfg.token_len + cfg.pred_len);
            EXPECT_EQ(s.target.size(), cfg.pred_len);
            for (std::size_t r = cfg.token_len; r < s.x_de.rows; ++r) {
                EXPECT_EQ(s.x_de.at(r, model::kTargetCol), 0.0);
                EXPECT_EQ(s.x_de.at(r, model::kTimeCol), 0.0);
                EXPECT_GT(s.x_de.at(r, model::kDistanceCol), 0.0);
                EXPECT_LT(s.x_de.at(r, model::kDistanceCol), 1.0);
            }
        }
    }
    EXPECT_THROW(training_windows(data.provider, data.split.train, cfg, table, 0), Error);
}

TEST(Windows, DistanceChannelPerMode) {
    const auto data = prepare(default_sessions(), {}, {});
    const auto table = fit_table(data.provider, model::EaseformerConfig{});
    for (ModelMode mode : kAllModes) {
        const auto cfg = apply_mode(small_model(), mode);
        const auto w = eval_windows(data.provider, data.split.test, cfg, table).front();
        const double d = w.distance_cm;
        for (std::size_t r = cfg.token_len; r < w.sample.x_de.rows; ++r) {
            const double v = w.sample.x_de.at(r, model::kDistanceCol);
            switch (mode) {
                case ModelMode::Informer: EXPECT_EQ(v, 0.0); break;
                case ModelMode::EaseformerPrior: EXPECT_EQ(v, d); break;
                case ModelMode::EaseformerEit: EXPECT_EQ(v, table.lookup(d)); break;
            }
        }
        // The encoder carries the distance feature in every mode.
        EXPECT_NE(w.sample.x_en.at(0, model::kDistanceCol), 0.0);
    }
}

TEST(Windows, EvalWindowIsOneSessionWithStreamHistory) {
    const auto data = prepare(default_sessions(), {}, {});
    const auto cfg = small_model();
    const auto table = fit_table(data.provider, cfg);
    const auto windows = eval_windows(data.provider, data.split.test, cfg, table);
    EXPECT_FALSE(windows.empty());
    for (const auto& w : windows) {
        const auto& raw = data.provider.raw[w.stream_index];
        EXPECT_EQ(w.truth_raw, raw.target);
        EXPECT_EQ(w.minutes, raw.minutes);
        EXPECT_EQ(w.session_id, raw.session_id);
        // The last history row is the final row of the previous stream session.
        const auto& prev = data.provider.stream[w.stream_index - 1];
        EXPECT_EQ(w.sample.x_en.at(cfg.seq_len - 1, model::kTargetCol), prev.target.back());
        for (std::size_t j = 0; j < cfg.pred_len; ++j) {
            EXPECT_DOUBLE_EQ(w.sample.target[j], data.provider.stats.target_forward(raw.target[j]));
        }
    }
}

TEST(IdleSplit, ValFoldedIntoTrain) {
    const auto s = split_idle(5, {});
    EXPECT_EQ(s.train, (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(s.test, (std::vector<std::size_t>{4}));
    EXPECT_EQ(split_idle(2, {1.0, 0.0, 0.0}).test.size(), 1u);
    EXPECT_THROW(split_idle(1, {}), Error);
}

TEST(RunElp, PerfectForecastsLeaveOnlyUsageError) {
    const auto sessions = default_sessions();
    ElpConfig cfg;
    cfg.model = small_model();
    ElpOverrides o;
    o.pl = [](const EvalWindow& w) { return w.truth_raw; };
    o.cg = [](const EvalWindow& w) { return w.truth_raw; };
    const auto r = run_elp(sessions, cfg, o);
    EXPECT_FALSE(r.pl_run.has_value());
    ASSERT_FALSE(r.sessions.empty());

    // EL error = -(PU error + CU error) when PL and CG are exact.
    double sq = 0.0;
    std::size_t n = 0;
    const auto& p_test = sessions.provider_idle.back();
    const auto& c_test = sessions.consumer_idle.back();
    for (const auto& s : r.sessions) {
        EXPECT_EQ(s.bundle.el_hat.size(), 30u);
        EXPECT_TRUE(s.bundle.invariants_hold());
        const auto pu_true = idle_truth(p_test, s.minutes);
        const auto cu_true = idle_truth(c_test, s.minutes);
        for (std::size_t j = 0; j < s.minutes.size(); ++j) {
            const double pu_hat = r.pu_model.slope * s.minutes[j] + r.pu_model.intercept;
            const double cu_hat = r.cu_model.slope * s.minutes[j] + r.cu_model.intercept;
            const double e = (pu_hat - pu_true[j]) + (cu_hat - cu_true[j]);
            sq += e * e;
            ++n;
        }
    }
    EXPECT_NEAR(r.el_mse_raw, sq / static_cast<double>(n), 1e-12);
    EXPECT_LT(r.pu_mse, 1e-3);
    EXPECT_LT(r.cu_mse, 1e-3);
}

TEST(RunElp, NoiselessAndPerfectIsExact) {
    data::GeneratorConfig g;
    g.noise_sigma = 0.0;
    g.idle_noise = 0.0;
    const auto sessions = default_sessions(g);
    ElpConfig cfg;
    cfg.model = small_model();
    ElpOverrides o;
    o.pl = [](const EvalWindow& w) { return w.truth_raw; };
    o.cg = [](const EvalWindow& w) { return w.truth_raw; };
    const auto& p_test = sessions.provider_idle.back();
    const auto& c_test = sessions.consumer_idle.back();
    o.pu = [&](const std::vector<double>& m) { return idle_truth(p_test, m); };
    o.cu = [&](const std::vector<double>& m) { return idle_truth(c_test, m); };
    const auto r = run_elp(sessions, cfg, o);
    EXPECT_EQ(r.el_mse_raw, 0.0);
    EXPECT_EQ(r.el_mae_raw, 0.0);
    EXPECT_EQ(r.el_mse, 0.0);
}

TEST(RunElp, TrainedRunIsWellFormed) {
    ElpConfig cfg;
    cfg.model = small_model();
    cfg.options.train_stride = 8;
    const auto r = run_elp(default_sessions(), cfg);
    ASSERT_TRUE(r.pl_run.has_value());
    ASSERT_TRUE(r.cg_run.has_value());
    EXPECT_EQ(r.filter.outlier_session_ids.size(), 6u);
    for (const auto& s : r.sessions) {
        EXPECT_EQ(s.bundle.el_hat.size(), 30u);
        EXPECT_TRUE(s.bundle.invariants_hold());
    }
    EXPECT_TRUE(std::isfinite(r.el_mse));
    EXPECT_TRUE(std::is_sorted(r.sessions.begin(), r.sessions.end(),
                               [](const auto& a, const auto& b) { return a.session_id < b.session_id; }));
}

TEST(RunElp, ForecasterFailuresAreTagged) {
    ElpConfig cfg;
    cfg.model = small_model();
    ElpOverrides o;
    o.pl = [](const EvalWindow&) { return std::vector<double>(3, 0.0); };
    o.cg = [](const EvalWindow& w) { return w.truth_raw; };
    try {
        run_elp(default_sessions(), cfg, o);
        FAIL();
    } catch (const PhaseError& e) {
        EXPECT_EQ(e.phase(), Phase::Predict);
    }

    cfg.model.seq_len = 2000;
    cfg.model.token_len = 30;
    try {
        run_elp(default_sessions(), cfg);
        FAIL();
    } catch (const PhaseError& e) {
        EXPECT_EQ(e.phase(), Phase::Train);
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientHistory);
    }
}

TEST(Stats, MeanStdUsesSampleDeviation) {
    const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m, 2.5);
    EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(mean_std({7.0}).second, 0.0);
}

TEST(ParallelFor, VisitsEachIndexOnce) {
    for (std::size_t threads : {1u, 3u, 8u}) {
        std::vector<std::atomic<int>> hits(50);
        parallel_for(50, threads, [&](std::size_t i) { ++hits[i]; });
        for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
    EXPECT_THROW(parallel_for(4, 2, [](std::size_t i) { if (i == 2) throw Error(ErrorKind::InvalidParam, "x"); }),
                 Error);
}

TEST(Grid, ShapeFinitenessAndDeterminism) {
    ExperimentConfig cfg;
    cfg.base = small_model();
    cfg.options.train_stride = 16;
    cfg.seeds = {0, 1};
    const auto sessions = default_sessions();
    const auto a = run_experiment_grid(sessions, cfg);
    EXPECT_EQ(a.cells.size(), 36u);
    EXPECT_EQ(a.summary.size(), 4u);
    EXPECT_TRUE(a.all_finite());
    EXPECT_EQ(a.runs.size(), 2u * 3 * 3 * 2);
    std::set<std::tuple<ModelMode, std::size_t, Target, std::string>> keys;
    for (const auto& c : a.cells) {
        keys.emplace(c.mode, c.token_len, c.target, c.metric);
        EXPECT_EQ(c.per_seed.size(), 2u);
    }
    EXPECT_EQ(keys.size(), 36u);
    EXPECT_FALSE(a.footnotes.empty());

    cfg.threads = 3;
    const auto b = run_experiment_grid(sessions, cfg);
    EXPECT_EQ(a.to_csv(), b.to_csv());
    EXPECT_EQ(a.to_table(), b.to_table());
}

TEST(Grid, PredictionsCsv) {
    EvalWindow w;
    w.session_id = "s001";
    w.minutes = {0, 1};
    w.truth_raw = {0.0, 1.5};
    EXPECT_EQ(predictions_csv({w}, {{0.25, 1.0}}),
              "session_id,minute_index,truth,prediction\ns001,0,0,0.25\ns001,1,1.5,1\n");
}
