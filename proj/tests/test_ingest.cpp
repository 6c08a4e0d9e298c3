#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "recon/ingest.hpp"
#include "test_util.hpp"

using namespace recon;
using namespace recon::ingest;
using recon::testing::TempDir;
using recon::testing::write_file;

namespace {

HourStamp h(int hour) { return HourStamp::from_civil(2015, 1, 1) + hour; }

std::vector<RawSeriesRow> rows(std::initializer_list<std::pair<int, std::optional<double>>> items) {
    std::vector<RawSeriesRow> out;
    for (const auto& [hour, v] : items) out.push_back({h(hour), v});
    return out;
}

}  // namespace

TEST(ParseSeriesCsv, ValueAndMissingMarker) {
    TempDir dir;
    write_file(dir / "d.csv", "timestamp,value\n2015-01-01T00:00,3100.5\n2015-01-01T01:00,\n");
    const auto r = parse_series_csv(dir / "d.csv", ValueUnit::Megawatt);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].timestamp, h(0));
    EXPECT_EQ(r[0].value, 3100.5);
    EXPECT_EQ(r[1].timestamp, h(1));
    EXPECT_FALSE(r[1].value);
}

TEST(ParseSeriesCsv, BadTimestampNamesLine) {
    TempDir dir;
    write_file(dir / "d.csv", "timestamp,value\n2015-01-01T00:00,1\nnot-a-date,5\n");
    try {
        parse_series_csv(dir / "d.csv", ValueUnit::Megawatt);
        FAIL() << "expected BadTimestamp";
    } catch (const BadTimestamp& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("not-a-date"), std::string::npos);
    }
}

TEST(ParseSeriesCsv, SchemaColumnsQuotesAndBom) {
    TempDir dir;
    write_file(dir / "d.csv",
               "\xEF\xBB\xBF\"id\",\"when\",\"load\"\n7,\"2015-01-01 00:00\",\"12.5\"\n8,2015-01-01T01:00,NaN\n");
    const auto r = parse_series_csv(dir / "d.csv", ValueUnit::Megawatt, {"when", "load", 0});
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].value, 12.5);
    EXPECT_FALSE(r[1].value);
}

TEST(ParseSeriesCsv, Errors) {
    TempDir dir;
    EXPECT_THROW(parse_series_csv(dir / "missing.csv", ValueUnit::Megawatt), FileNotFound);
    write_file(dir / "h.csv", "time,value\n");
    EXPECT_THROW(parse_series_csv(dir / "h.csv", ValueUnit::Megawatt), MalformedHeader);
    write_file(dir / "e.csv", "");
    EXPECT_THROW(parse_series_csv(dir / "e.csv", ValueUnit::Megawatt), MalformedHeader);
    write_file(dir / "k.csv", "timestamp,value\n2015-01-01T00:00,-1\n");
    EXPECT_THROW(parse_series_csv(dir / "k.csv", ValueUnit::Kelvin), NegativeKelvin);
}

TEST(ParseSeriesCsv, WriteReadRoundTrip) {
    TempDir dir;
    const auto original = rows({{0, 1.0 / 3.0}, {1, std::nullopt}, {5, 1e-9}});
    write_series_csv(dir / "r.csv", original);
    EXPECT_EQ(parse_series_csv(dir / "r.csv", ValueUnit::Megawatt), original);
}

TEST(KelvinToCelsius, Examples) {
    EXPECT_EQ(kelvin_to_celsius(273.15), 0.0);
    EXPECT_EQ(kelvin_to_celsius(0.0), -273.15);
    EXPECT_NEAR(kelvin_to_celsius(300.0), 26.85, 1e-12);
    EXPECT_EQ(kelvin_to_celsius(300.0), 300.0 - 273.15);
    EXPECT_THROW(kelvin_to_celsius(-0.5), NegativeKelvin);
}

TEST(TemperatureToCelsius, KeepsMissing) {
    const auto c = temperature_to_celsius(rows({{0, 273.15}, {1, std::nullopt}}), ValueUnit::Kelvin);
    EXPECT_EQ(c[0].value, 0.0);
    EXPECT_FALSE(c[1].value);
    EXPECT_EQ(temperature_to_celsius(rows({{0, 12.0}}), ValueUnit::Celsius)[0].value, 12.0);
}

TEST(JoinHourly, MatchingHours) {
    const auto s = join_hourly(rows({{0, 10}, {1, 11}, {2, 12}}), rows({{0, 1}, {1, 2}, {2, 3}}));
    ASSERT_EQ(s.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(s[i].demand_mw, 10.0 + static_cast<double>(i));
        EXPECT_EQ(s[i].temperature_c, 1.0 + static_cast<double>(i));
    }
    EXPECT_TRUE(s.gaps().empty());
}

TEST(JoinHourly, BackcastSpanHasNoDemand) {
    const auto s = join_hourly({}, rows({{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}}));
    ASSERT_EQ(s.size(), 5u);
    for (const auto& r : s) EXPECT_FALSE(r.demand_mw);
}

TEST(JoinHourly, DemandWithoutTemperature) {
    try {
        join_hourly(rows({{0, 10}, {3, 10}}), rows({{0, 1}, {1, 1}}));
        FAIL() << "expected MissingTemperature";
    } catch (const MissingTemperature& e) {
        EXPECT_EQ(e.at(), h(3));
    }
    EXPECT_THROW(join_hourly(rows({{0, 10}}), rows({{0, std::nullopt}})), MissingTemperature);
}

TEST(JoinHourly, EmptyTemperature) { EXPECT_THROW(join_hourly(rows({{0, 1}}), {}), EmptyInput); }

TEST(JoinHourly, DuplicatesKeepFirst) {
    const auto s = join_hourly(rows({{0, 10}, {0, 99}}), rows({{0, 1}, {0, 50}, {1, 2}}));
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].demand_mw, 10.0);
    EXPECT_EQ(s[0].temperature_c, 1.0);
}

TEST(JoinHourly, UnsortedInputIsOrdered) {
    const auto s = join_hourly(rows({{2, 12}, {0, 10}}), rows({{2, 3}, {0, 1}, {1, 2}}));
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].timestamp, h(0));
    EXPECT_FALSE(s[1].demand_mw);
    EXPECT_EQ(s[2].demand_mw, 12.0);
}

TEST(HourlySeries, GapIndex) {
    const auto s = join_hourly({}, rows({{0, 1}, {1, 1}, {5, 1}, {6, 1}, {9, 1}}));
    ASSERT_EQ(s.gaps().size(), 2u);
    EXPECT_EQ(s.gaps()[0], (Gap{h(1), h(5), 3}));
    EXPECT_EQ(s.gaps()[1], (Gap{h(6), h(9), 2}));
    EXPECT_TRUE(s.contiguous_with_previous(1));
    EXPECT_FALSE(s.contiguous_with_previous(2));
    const auto j = gap_index_json(s);
    EXPECT_EQ(j["records"], 5);
    EXPECT_EQ(j["gaps"][0]["missing_hours"], 3);
}

TEST(HourlySeries, Invariants) {
    EXPECT_THROW(HourlySeries({{h(1), 1.0, 0.0}, {h(0), 1.0, 0.0}}), DataError);
    EXPECT_THROW(HourlySeries({{h(0), 1.0, 0.0}, {h(0), 1.0, 0.0}}), DataError);
    EXPECT_THROW(HourlySeries({{h(0), -1.0, 0.0}}), DataError);
    EXPECT_THROW(HourlySeries({{h(0), 1.0, 95.0}}), TemperatureOutOfRange);
    EXPECT_THROW(HourlySeries({{h(0), 1.0, -120.0}}), TemperatureOutOfRange);
}

namespace {

HourlySeries with_missing(std::size_t n, std::size_t missing) {
    std::vector<HourlyRecord> recs;
    for (std::size_t i = 0; i < n; ++i)
        recs.push_back({h(static_cast<int>(i)), i < missing ? std::nullopt : std::optional<double>(100.0), 20.0});
    return HourlySeries(std::move(recs));
}

}  // namespace

TEST(DropMissingDemand, Examples) {
    auto one = drop_missing_demand(with_missing(100, 1), 0.05);
    EXPECT_EQ(one.series.size(), 99u);
    EXPECT_EQ(one.dropped_count, 1u);

    const auto full = with_missing(100, 0);
    auto none = drop_missing_demand(full, 0.05);
    EXPECT_EQ(none.dropped_count, 0u);
    EXPECT_EQ(none.series.records(), full.records());

    try {
        drop_missing_demand(with_missing(100, 10), 0.05);
        FAIL() << "expected TooManyMissing";
    } catch (const TooManyMissing& e) {
        EXPECT_DOUBLE_EQ(e.fraction(), 0.10);
    }
}

TEST(DropMissingDemand, ThresholdIsInclusive) {
    EXPECT_EQ(drop_missing_demand(with_missing(100, 5), 0.05).dropped_count, 5u);
}

TEST(WriteHourlyCsv, Layout) {
    TempDir dir;
    write_hourly_csv(dir / "o.csv", with_missing(2, 1));
    EXPECT_EQ(recon::testing::read_file(dir / "o.csv"),
              "timestamp,demand_mw,temperature_c\n2015-01-01T00:00,,20\n2015-01-01T01:00,100,20\n");
}
