#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "recon/eval.hpp"

using namespace recon;
using namespace recon::eval;

namespace {

using V = std::vector<double>;

HourStamp hour(int h) { return HourStamp::from_civil(2015, 1, 1) + h; }

}  // namespace

TEST(Rmse, Examples) {
    EXPECT_EQ(rmse(V{1, 2, 3}, V{1, 2, 3}), 0.0);
    EXPECT_EQ(rmse(V{0, 0}, V{3, 4}), std::sqrt(12.5));
    EXPECT_NEAR(rmse(V{0, 0}, V{3, 4}), 3.53553, 1e-5);
    EXPECT_EQ(rmse(V{1}, V{0}), 1.0);
    EXPECT_THROW(rmse(V{1}, V{0, 1}), LengthMismatch);
    EXPECT_THROW(rmse(V{}, V{}), EmptyInput);
}

TEST(RSquared, Examples) {
    EXPECT_EQ(r_squared(V{1, 2, 4}, V{1, 2, 4}), 1.0);
    EXPECT_EQ(r_squared(V{1, 2, 3}, V{2, 2, 2}), 0.0);
    EXPECT_THROW(r_squared(V{2, 2, 2}, V{1, 2, 3}), ConstantTarget);
}

TEST(AdjustedRSquared, Example) {
    const V y{1, 2, 3, 4, 5};
    const V yhat{1.5, 1.5, 3.5, 3.5, 5};  // SS_res = 1, SS_tot = 10
    EXPECT_NEAR(r_squared(y, yhat), 0.9, 1e-15);
    const double adj = adjusted_r_squared(y, yhat, 1);
    EXPECT_NEAR(adj, 1.0 - 0.1 * 4.0 / 3.0, 1e-14);
    EXPECT_NEAR(adj, 0.8667, 5e-5);
    EXPECT_THROW(adjusted_r_squared(y, yhat, 4), DegreesOfFreedom);
}

TEST(Mape, Examples) {
    EXPECT_EQ(mape(V{100}, V{94}).percent, 6.0);
    EXPECT_EQ(mape(V{5, 7}, V{5, 7}).percent, 0.0);
    EXPECT_EQ(mape(V{100, 200}, V{110, 180}).percent, 10.0);
}

TEST(Mape, ZeroTargetsExcludedAndCounted) {
    const auto r = mape(V{0, 100, 0}, V{5, 94, 1});
    EXPECT_EQ(r.percent, 6.0);
    EXPECT_EQ(r.excluded_zero_targets, 2u);
    EXPECT_THROW(mape(V{0, 0}, V{1, 1}), AllTargetsZero);
}

TEST(Spearman, Examples) {
    EXPECT_EQ(spearman(V{1, 2, 3}, V{10, 20, 30}), 1.0);
    EXPECT_EQ(spearman(V{1, 2, 3}, V{30, 20, 10}), -1.0);
    EXPECT_EQ(average_ranks(V{1, 1, 2}), (V{1.5, 1.5, 3}));
    EXPECT_EQ(average_ranks(V{3, 3, 5}), (V{1.5, 1.5, 3}));
    EXPECT_NEAR(spearman(V{1, 1, 2}, V{3, 3, 5}), 1.0, 1e-15);
    EXPECT_THROW(spearman(V{1, 1, 1}, V{1, 2, 3}), ConstantInput);
}

TEST(Spearman, InvariantUnderMonotoneTransform) {
    const V x{3.2, -1, 7, 0.5, 2, 9, -4};
    const V y{1, 5, 2, 2, 8, 0, 3};
    V x3;
    for (const double v : x) x3.push_back(v * v * v + 10);
    EXPECT_NEAR(spearman(x, y), spearman(x3, y), 1e-15);
}

TEST(GroupedStats, Examples) {
    const std::vector<TimedValue> s{{hour(0), 1}, {hour(24), 3}};
    EXPECT_EQ(grouped_stats(s, GroupKey::HourOfDay, GroupStat::Max)[0].value, 3.0);
    EXPECT_EQ(grouped_stats(s, GroupKey::HourOfDay, GroupStat::Mean)[0].value, 2.0);
    EXPECT_NEAR(grouped_stats(s, GroupKey::HourOfDay, GroupStat::StdError)[0].value, 1.0, 1e-15);
}

TEST(GroupedStats, TwoDaysGiveTwentyFourGroupsOfTwo) {
    std::vector<TimedValue> s;
    for (int h = 0; h < 48; ++h) s.push_back({hour(h), static_cast<double>(h)});
    const auto rows = grouped_stats(s, GroupKey::HourOfDay, GroupStat::Mean);
    ASSERT_EQ(rows.size(), 24u);
    for (int h = 0; h < 24; ++h) {
        EXPECT_EQ(rows[h].key, h);
        EXPECT_EQ(rows[h].count, 2u);
        EXPECT_EQ(rows[h].value, h + 12.0);
    }
}

TEST(GroupedStats, ByYearAndSingletonStdError) {
    const std::vector<TimedValue> s{{HourStamp::from_civil(1990, 5, 1), 4}, {HourStamp::from_civil(1991, 5, 1), 6},
                                    {HourStamp::from_civil(1991, 6, 1), 8}};
    const auto rows = grouped_stats(s, GroupKey::Year, GroupStat::StdError);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].key, 1990);
    EXPECT_TRUE(std::isnan(rows[0].value));
    EXPECT_NEAR(rows[1].value, 1.0, 1e-15);
}

TEST(TopKHours, TieBreakAndShortData) {
    const std::vector<TimedValue> s{{hour(1), 5}, {hour(2), 9}, {hour(3), 9}};
    const auto one = top_k_hours(s, 1, false);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], (TimedValue{hour(2), 9}));
    EXPECT_EQ(top_k_hours(std::span(s).first(2), 3, false).size(), 2u);
}

TEST(TopKHours, PerYear) {
    std::vector<TimedValue> s;
    for (int y = 1980; y < 1983; ++y)
        for (int d = 0; d < 30; ++d) s.push_back({HourStamp::from_civil(y, 7, 1) + d * 24, y * 100.0 + d});
    const auto top = top_k_hours(s, 20, true);
    ASSERT_EQ(top.size(), 60u);
    EXPECT_EQ(top[0].value, 198029.0);
    EXPECT_EQ(top[19].value, 198010.0);
    EXPECT_EQ(top[20].value, 198129.0);
}

TEST(Summarize, AllFields) {
    const V y{100, 200, 300, 400};
    const V yhat{110, 190, 310, 390};
    const V t{30, 20, 10, 0};
    const auto r = summarize(y, yhat, t, 1);
    EXPECT_EQ(r.n, 4u);
    EXPECT_EQ(r.p, 1);
    EXPECT_EQ(r.rmse_mw, 10.0);
    EXPECT_EQ(r.sse, 400.0);
    ASSERT_TRUE(r.adjusted_r2);
    ASSERT_TRUE(r.spearman_temp_demand);
    EXPECT_EQ(*r.spearman_temp_demand, -1.0);
    EXPECT_FALSE(summarize(y, yhat, t, -1).adjusted_r2);
    const auto j = to_json(r);
    EXPECT_EQ(j["n"], 4);
    EXPECT_EQ(j["rmse_mw"], 10.0);
}

TEST(Summarize, UndefinedMetricsDoNotThrow) {
    const auto r = summarize(V{5}, V{4}, V{1}, 1);
    EXPECT_EQ(r.rmse_mw, 1.0);
    EXPECT_TRUE(std::isnan(r.r2));
    EXPECT_FALSE(r.adjusted_r2);
    EXPECT_FALSE(r.spearman_temp_demand);
    EXPECT_TRUE(to_json(r)["r2"].is_null());
}
