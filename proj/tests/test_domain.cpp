#include <gtest/gtest.h>

#include "elp/domain.hpp"
#include "elp/error.hpp"
#include "elp/rng.hpp"

using namespace elp;
using namespace elp::domain;

namespace {

Series random_series(Rng& rng, std::size_t n, double lo, double hi) {
    Series s(n);
    for (double& v : s) v = lo + (hi - lo) * rng.uniform();
    return s;
}

EnergyHistoryRecord sharing_record(const std::string& id, UserType role, Series levels, double distance = 1.0) {
    EnergyHistoryRecord r;
    r.rid = id;
    r.session_id = id;
    r.state = EnergyState::Sharing;
    r.user_type = role;
    r.distance_cm = distance;
    for (std::size_t i = 0; i < levels.size(); ++i) r.bl.push_back({static_cast<std::int64_t>(i), levels[i]});
    return r;
}

}  // namespace

TEST(ConsumerGain, Examples) {
    EXPECT_EQ(consumer_gain(Series{3000, 3010, 3025}), (Series{0, 10, 25}));
    EXPECT_EQ(consumer_gain(Series{7, 7, 7}), (Series{0, 0, 0}));
    EXPECT_EQ(consumer_gain(Series{5, 4, 6}), (Series{0, -1, 1}));
}

TEST(ConsumerUsage, Examples) {
    EXPECT_EQ(consumer_usage(Series{3000, 2995, 2988}), (Series{0, 5, 12}));
    EXPECT_EQ(consumer_usage(Series{4, 4}), (Series{0, 0}));
    EXPECT_EQ(consumer_usage(Series{10, 11}), (Series{0, -1}));
}

TEST(ProviderLoss, Examples) {
    EXPECT_EQ(provider_loss(Series{4000, 3980, 3955}), (Series{0, 20, 45}));
    EXPECT_EQ(provider_loss(Series{9, 9, 9}), (Series{0, 0, 0}));
    EXPECT_EQ(provider_loss(Series{100, 101}), (Series{0, -1}));
}

TEST(ProviderUsage, Examples) {
    EXPECT_EQ(provider_usage(Series{4000, 3998}), (Series{0, 2}));
    EXPECT_EQ(provider_usage(Series{3, 3, 3}), (Series{0, 0, 0}));
    EXPECT_EQ(provider_usage(Series{1, 2, 4}), (Series{0, -1, -3}));
}

TEST(Integration, Examples) {
    EXPECT_EQ(real_transferred(Series{0, 20, 45}, Series{0, 2, 4}), (Series{0, 18, 41}));
    EXPECT_EQ(real_received(Series{0, 10, 25}, Series{0, 1, 3}), (Series{0, 11, 28}));
    EXPECT_EQ(energy_loss(Series{0, 18, 41}, Series{0, 11, 28}), (Series{0, 7, 13}));

    const Series pl{0, 3, 5}, zeros{0, 0, 0};
    EXPECT_EQ(real_transferred(pl, zeros), pl);
    EXPECT_EQ(real_transferred(pl, pl), zeros);
    EXPECT_EQ(real_received(pl, zeros), pl);
    EXPECT_EQ(real_received(zeros, pl), pl);
    EXPECT_EQ(energy_loss(pl, pl), zeros);
}

TEST(Integration, ExpandedIdentityOnRandomInputs) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto pl = random_series(rng, 30, 0, 100);
        const auto pu = random_series(rng, 30, 0, 10);
        const auto cg = random_series(rng, 30, 0, 100);
        const auto cu = random_series(rng, 30, 0, 10);
        const auto flow = integrate(pl, pu, cg, cu);
        for (std::size_t j = 0; j < pl.size(); ++j) {
            const double expanded = pl[j] - pu[j] - cg[j] - cu[j];
            EXPECT_NEAR(flow.el[j], expanded, 1e-12);
            EXPECT_EQ(flow.el[j], flow.rt[j] - flow.rr[j]);
        }
    }
}

TEST(Integration, ExactOnDyadicInputs) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        Series pl(16), pu(16), cg(16), cu(16);
        for (auto* s : {&pl, &pu, &cg, &cu}) {
            for (double& v : *s) v = static_cast<double>(rng.below(4096)) / 8.0;
        }
        const auto flow = integrate(pl, pu, cg, cu);
        for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(flow.el[j], pl[j] - pu[j] - cg[j] - cu[j]);
    }
}

TEST(Derivations, FirstElementZeroAndOffsetInvariant) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_series(rng, 12, 500, 4000);
        const double k = static_cast<double>(rng.below(1000));
        Series shifted = s;
        for (double& v : shifted) v += k;
        for (auto fn : {consumer_gain, consumer_usage, provider_loss, provider_usage}) {
            const auto a = fn(s);
            const auto b = fn(shifted);
            ASSERT_EQ(a.size(), s.size());
            EXPECT_EQ(a[0], 0.0);
            for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-9);
        }
    }
}

TEST(Derivations, EmptyAndMismatchedInputsThrow) {
    try {
        consumer_gain(Series{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidSeries);
    }
    try {
        energy_loss(Series{0, 1}, Series{0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeError);
    }
}

TEST(Metrics, Examples) {
    EXPECT_EQ(mse(Series{1, 2}, Series{1, 2}), 0.0);
    EXPECT_EQ(mae(Series{1, 2}, Series{1, 2}), 0.0);
    EXPECT_DOUBLE_EQ(mse(Series{1, 2}, Series{0, 0}), 2.5);
    EXPECT_DOUBLE_EQ(mae(Series{1, 2}, Series{0, 0}), 1.5);
}

TEST(Metrics, MatchTwoPassOracle) {
    Rng rng(6);
    const auto pred = random_series(rng, 100, -5, 5);
    const auto truth = random_series(rng, 100, -5, 5);
    std::vector<double> diff(100);
    for (std::size_t i = 0; i < 100; ++i) diff[i] = pred[i] - truth[i];
    long double sq = 0, ab = 0;
    for (double d : diff) sq += static_cast<long double>(d) * d;
    for (double d : diff) ab += d < 0 ? -d : d;
    EXPECT_NEAR(mse(pred, truth), static_cast<double>(sq / 100), 1e-12);
    EXPECT_NEAR(mae(pred, truth), static_cast<double>(ab / 100), 1e-12);
}

TEST(Metrics, NonNegativeAndZeroOnlyWhenEqual) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_series(rng, 10, -1, 1);
        auto b = a;
        EXPECT_EQ(mse(a, b), 0.0);
        b[rng.below(10)] += 1e-3;
        EXPECT_GT(mse(a, b), 0.0);
        EXPECT_GT(mae(a, b), 0.0);
    }
}

TEST(CheckRecord, StructureAndMonotonicity) {
    auto ok = sharing_record("a", UserType::Consumer, {10, 11, 12});
    EXPECT_TRUE(check_record(ok).valid);
    EXPECT_TRUE(check_record(ok).monotone);

    auto dropping = sharing_record("b", UserType::Consumer, {10, 9, 12});
    EXPECT_TRUE(check_record(dropping).valid);
    EXPECT_FALSE(check_record(dropping).monotone);

    auto provider = sharing_record("c", UserType::Provider, {10, 9, 8});
    EXPECT_TRUE(check_record(provider).monotone);

    auto negative = sharing_record("d", UserType::Consumer, {1, -1});
    EXPECT_FALSE(check_record(negative).valid);

    auto gap = sharing_record("e", UserType::Consumer, {1, 2, 3});
    gap.bl[2].minute = 5;
    EXPECT_FALSE(check_record(gap).valid);

    EnergyHistoryRecord empty;
    EXPECT_FALSE(check_record(empty).valid);
}

TEST(BuildProfile, DerivesPerRecordSeries) {
    auto s1 = sharing_record("s1", UserType::Provider, {100, 90, 70}, 1.5);
    EnergyHistoryRecord idle;
    idle.rid = "i";
    idle.state = EnergyState::Idle;
    idle.idle_role = UserType::Provider;
    idle.bl = {{0, 50}, {1, 49}, {2, 47}};
    const auto p = build_profile(UserType::Provider, {s1}, {idle});
    ASSERT_EQ(p.sharing_derived.size(), 1u);
    EXPECT_EQ(p.sharing_derived[0], (Series{0, 10, 30}));
    EXPECT_EQ(p.idle_derived[0], (Series{0, 1, 3}));
    EXPECT_EQ(p.distances, (std::vector<double>{1.5}));
    EXPECT_EQ(p.times[0], (Series{0, 1, 2}));

    EXPECT_THROW(build_profile(UserType::Consumer, {s1}, {}), Error);
}
