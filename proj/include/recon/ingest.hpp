#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "recon/errors.hpp"
#include "recon/time.hpp"

namespace recon::ingest {

enum class ValueUnit { Megawatt, Kelvin, Celsius };

ValueUnit parse_value_unit(const std::string& name);
std::string to_string(ValueUnit unit);

/// Plausible range for near-surface air temperature in degrees Celsius.
inline constexpr double kMinTemperatureC = -90.0;
inline constexpr double kMaxTemperatureC = 70.0;

struct RawSeriesRow {
    HourStamp timestamp;
    std::optional<double> value;  // finite when present

    friend bool operator==(const RawSeriesRow&, const RawSeriesRow&) = default;
};

/// Column layout of a series CSV.
struct CsvSchema {
    std::string timestamp_column = "timestamp";
    std::string value_column = "value";
    int utc_offset_minutes = 0;  // clock the series is carried on
};

struct HourlyRecord {
    HourStamp timestamp;
    std::optional<double> demand_mw;
    double temperature_c = 0.0;

    friend bool operator==(const HourlyRecord&, const HourlyRecord&) = default;
};

/// Run of absent hours between two consecutive records.
struct Gap {
    HourStamp last_before;
    HourStamp first_after;
    std::int64_t missing_hours = 0;

    friend bool operator==(const Gap&, const Gap&) = default;
};

/// Time-ordered hourly records. Construction validates strict ordering and
/// record invariants and builds the gap index; the series is immutable after.
class HourlySeries {
public:
    HourlySeries() = default;
    explicit HourlySeries(std::vector<HourlyRecord> records, std::vector<std::string> source_labels = {});

    const std::vector<HourlyRecord>& records() const { return records_; }
    const std::vector<std::string>& source_labels() const { return source_labels_; }
    const std::vector<Gap>& gaps() const { return gaps_; }

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const HourlyRecord& operator[](std::size_t i) const { return records_[i]; }
    auto begin() const { return records_.begin(); }
    auto end() const { return records_.end(); }

    /// True when record i-1 is exactly one hour before record i.
    bool contiguous_with_previous(std::size_t i) const {
        return i > 0 && records_[i].timestamp - records_[i - 1].timestamp == 1;
    }

    /// Records in [first, last], order preserved.
    HourlySeries between(HourStamp first, HourStamp last) const;

    template <class Pred>
    HourlySeries filter(Pred&& keep) const {
        std::vector<HourlyRecord> out;
        for (const auto& r : records_)
            if (keep(r)) out.push_back(r);
        return HourlySeries(std::move(out), source_labels_);
    }

private:
    std::vector<HourlyRecord> records_;
    std::vector<std::string> source_labels_;
    std::vector<Gap> gaps_;
};

class MissingTemperature : public DataError {
public:
    explicit MissingTemperature(HourStamp at)
        : DataError("no temperature for demand hour " + format_timestamp(at)), at_(at) {}
    HourStamp at() const { return at_; }

private:
    HourStamp at_;
};

class NegativeKelvin : public DataError {
public:
    using DataError::DataError;
};

class TemperatureOutOfRange : public DataError {
public:
    using DataError::DataError;
};

class TooManyMissing : public DataError {
public:
    explicit TooManyMissing(double fraction);
    double fraction() const { return fraction_; }

private:
    double fraction_;
};

/// Reads a two-column time series out of a CSV with a header row. Cells that
/// do not parse as finite numbers become missing values. Rows are returned in
/// file order. `unit` only selects per-unit validation (Kelvin must be >= 0).
std::vector<RawSeriesRow> parse_series_csv(const std::filesystem::path& path, ValueUnit unit,
                                           const CsvSchema& schema = {});

/// Writes rows in the layout `parse_series_csv` reads.
void write_series_csv(const std::filesystem::path& path, std::span<const RawSeriesRow> rows,
                      const CsvSchema& schema = {});

double kelvin_to_celsius(double kelvin);

/// Converts temperature rows to Celsius. Missing values stay missing.
std::vector<RawSeriesRow> temperature_to_celsius(std::span<const RawSeriesRow> rows, ValueUnit unit);

/// Joins demand (MW) onto hourly temperature (Celsius). Every temperature hour
/// is kept; hours without a demand row carry no demand. Duplicate timestamps
/// keep the first occurrence.
HourlySeries join_hourly(std::span<const RawSeriesRow> demand, std::span<const RawSeriesRow> temperature);

struct DropResult {
    HourlySeries series;
    std::size_t dropped_count = 0;
};

/// Removes records without demand. Throws TooManyMissing when the missing
/// fraction exceeds `max_missing_frac`.
DropResult drop_missing_demand(const HourlySeries& series, double max_missing_frac);

/// Gap index as JSON: `{"records": n, "gaps": [{"after": ts, "resumes": ts, "missing_hours": k}]}`.
nlohmann::json gap_index_json(const HourlySeries& series);

/// Series in the ingested layout `timestamp,demand_mw,temperature_c`.
void write_hourly_csv(const std::filesystem::path& path, const HourlySeries& series);

}  // namespace recon::ingest
