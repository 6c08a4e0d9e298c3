#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recon/features.hpp"
#include "test_util.hpp"

using namespace recon;
using namespace recon::features;
using recon::testing::hourly_series;

namespace {

const HourStamp kStart = HourStamp::from_civil(2015, 1, 1);

HourlySeries ramp(std::size_t n, HourStamp start = kStart) {
    return hourly_series(
        start, n, [](std::size_t i) { return std::optional<double>(1000.0 + static_cast<double>(i)); },
        [](std::size_t i) { return static_cast<double>(i % 30); });
}

}  // namespace

TEST(ExtractCalendar, Examples) {
    EXPECT_EQ(extract_calendar(HourStamp::from_civil(2015, 1, 1, 0)), (CalendarFeatures{0, 3, 1, 2015}));
    EXPECT_EQ(extract_calendar(HourStamp::from_civil(2016, 2, 29, 23)), (CalendarFeatures{23, 0, 2, 2016}));
    EXPECT_EQ(extract_calendar(HourStamp::from_civil(1970, 1, 1, 12)), (CalendarFeatures{12, 3, 1, 1970}));
}

TEST(ExtractCalendar, WeekdayAdvancesDaily) {
    for (int d = 0; d < 400; ++d) {
        const auto c = extract_calendar(kStart + d * 24 + 7);
        EXPECT_EQ(c.day_of_week, (3 + d) % 7);
        EXPECT_EQ(c.hour, 7);
    }
}

TEST(FitScaler, Examples) {
    EXPECT_EQ(fit_scaler(std::vector<double>{10, 20, 30}), (ScalerParams{10, 30}));
    EXPECT_EQ(fit_scaler(std::vector<double>{5}), (ScalerParams{5, 5}));
    EXPECT_EQ(fit_scaler(std::vector<double>{-1, 0, 1}), (ScalerParams{-1, 1}));
    EXPECT_THROW(fit_scaler(std::vector<double>{}), EmptyInput);
}

TEST(ApplyScaler, Examples) {
    const ScalerParams p{10, 30};
    EXPECT_EQ(apply_scaler(p, 10), 0.0);
    EXPECT_EQ(apply_scaler(p, 20), 0.5);
    EXPECT_EQ(apply_scaler(p, 30), 1.0);
    EXPECT_NEAR(invert_scaler(p, apply_scaler(p, 17.3)), 17.3, 1e-12 * 17.3);
    EXPECT_GT(apply_scaler(p, 40), 1.0);
    EXPECT_LT(apply_scaler(p, 0), 0.0);
}

TEST(ApplyScaler, Degenerate) {
    const ScalerParams p{5, 5};
    EXPECT_EQ(apply_scaler(p, 123.0), 0.0);
    EXPECT_EQ(invert_scaler(p, apply_scaler(p, 123.0)), 5.0);
}

TEST(ApplyScaler, RoundTripProperty) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e4, 1e4);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng);
        if (a == b) continue;
        const ScalerParams p{std::min(a, b), std::max(a, b)};
        EXPECT_EQ(apply_scaler(p, p.feature_min), 0.0);
        EXPECT_EQ(apply_scaler(p, p.feature_max), 1.0);
        const double x = u(rng);
        EXPECT_NEAR(invert_scaler(p, apply_scaler(p, x)), x, 1e-12 * std::max(1.0, std::abs(x)) * 1e2);
    }
}

TEST(ChronoSplit, Examples) {
    const auto s = ramp(100);
    const auto split = chrono_split(s, 0.2);
    ASSERT_EQ(split.holdout.size(), 20u);
    ASSERT_EQ(split.train.size(), 80u);
    EXPECT_EQ(split.holdout[0].timestamp, kStart);
    EXPECT_EQ(split.holdout[19].timestamp, kStart + 19);
    EXPECT_EQ(split.train[0].timestamp, kStart + 20);

    const auto half = chrono_split(ramp(10), 0.5);
    EXPECT_EQ(half.holdout.size(), 5u);
    EXPECT_EQ(half.train.size(), 5u);

    EXPECT_THROW(chrono_split(ramp(1), 0.2), TooFewRecords);
}

TEST(ChronoSplit, RejectsBadFraction) {
    EXPECT_THROW(chrono_split(ramp(10), 0.0), ConfigError);
    EXPECT_THROW(chrono_split(ramp(10), 1.0), ConfigError);
}

TEST(Season, Quarters) {
    EXPECT_EQ(season_of_month(1), Season::Q1);
    EXPECT_EQ(season_of_month(6), Season::Q2);
    EXPECT_EQ(season_of_month(7), Season::Summer);
    EXPECT_EQ(season_of_month(9), Season::Summer);
    EXPECT_EQ(season_of_month(10), Season::Winter);
    EXPECT_EQ(season_of_month(12), Season::Winter);
    for (const auto s : kAllSeasons) EXPECT_EQ(parse_season(to_string(s)), s);
}

TEST(SeasonalFilter, Examples) {
    const auto one = [](int month) {
        return ingest::HourlySeries({{HourStamp::from_civil(2015, static_cast<unsigned>(month), 3), 1.0, 0.0}});
    };
    EXPECT_EQ(seasonal_filter(one(7), Season::Summer).size(), 1u);
    EXPECT_EQ(seasonal_filter(one(10), Season::Winter).size(), 1u);
    EXPECT_EQ(seasonal_filter(one(2), Season::Summer).size(), 0u);
}

TEST(MakeSequences, Counting) {
    const ScalerParams tp{0, 29};
    const auto s30 = make_sequences(ramp(30), 24, tp, ScalerParams{1000, 1029});
    ASSERT_EQ(s30.size(), 7u);
    EXPECT_EQ(s30.front().target_time, kStart + 23);
    EXPECT_EQ(s30.back().target_time, kStart + 29);
    EXPECT_EQ(make_sequences(ramp(24), 24, tp, std::nullopt).size(), 1u);
    EXPECT_THROW(make_sequences(ramp(23), 24, tp, std::nullopt), SeriesTooShort);
}

TEST(MakeSequences, WindowContents) {
    const ScalerParams tp{0, 29};
    const auto s = make_sequences(ramp(30), 24, tp, ScalerParams{1000, 1029});
    const auto& last = s.back();
    ASSERT_EQ(last.temperature_window.size(), 24u);
    for (int k = 0; k < 24; ++k) EXPECT_DOUBLE_EQ(last.temperature_window[k], ((6 + k) % 30) / 29.0);
    EXPECT_DOUBLE_EQ(*last.target_demand_scaled, 1.0);
    EXPECT_EQ(last.calendar, extract_calendar(kStart + 29));
    EXPECT_FALSE(make_sequences(ramp(30), 24, tp, std::nullopt).back().target_demand_scaled);
}

TEST(MakeSequences, WindowsNeverSpanGaps) {
    std::vector<ingest::HourlyRecord> recs;
    for (int i = 0; i < 30; ++i) recs.push_back({kStart + i, 1.0, 0.0});
    for (int i = 40; i < 70; ++i) recs.push_back({kStart + i, 1.0, 0.0});
    const auto s = make_sequences(ingest::HourlySeries(recs), 24, {0, 1}, std::nullopt);
    ASSERT_EQ(s.size(), 14u);
    for (const auto& x : s) EXPECT_TRUE(x.target_time <= kStart + 29 || x.target_time >= kStart + 63);
}

TEST(MakeSequences, TargetRangeUsesEarlierWindow) {
    const auto s = make_sequences(ramp(100), 24, {0, 29}, std::nullopt, kStart + 10, kStart + 50);
    ASSERT_EQ(s.size(), 28u);
    EXPECT_EQ(s.front().target_time, kStart + 23);
    EXPECT_EQ(s.back().target_time, kStart + 50);
    const auto t = make_sequences(ramp(100), 24, {0, 29}, std::nullopt, kStart + 60, kStart + 200);
    EXPECT_EQ(t.front().target_time, kStart + 60);
    EXPECT_EQ(t.size(), 40u);
}
