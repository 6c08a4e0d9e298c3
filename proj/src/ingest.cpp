#include "recon/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace recon::ingest {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Splits one CSV line. Double-quoted fields may contain commas; "" is an escaped quote.
std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.emplace_back(trim(current));
    return fields;
}

std::optional<double> parse_value(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::vector<RawSeriesRow> dedupe_first(std::span<const RawSeriesRow> rows, const char* what) {
    std::map<HourStamp, RawSeriesRow> by_hour;
    std::size_t duplicates = 0;
    for (const auto& row : rows) {
        if (!by_hour.emplace(row.timestamp, row).second) ++duplicates;
    }
    if (duplicates > 0)
        spdlog::warn("{} series: {} duplicate timestamps, kept first occurrence", what, duplicates);
    std::vector<RawSeriesRow> out;
    out.reserve(by_hour.size());
    for (auto& [_, row] : by_hour) out.push_back(row);
    return out;
}

}  // namespace

ValueUnit parse_value_unit(const std::string& name) {
    if (name == "MW" || name == "mw" || name == "megawatt") return ValueUnit::Megawatt;
    if (name == "K" || name == "kelvin" || name == "Kelvin") return ValueUnit::Kelvin;
    if (name == "C" || name == "celsius" || name == "Celsius") return ValueUnit::Celsius;
    throw ConfigError("unknown value unit '" + name + "' (expected MW, kelvin or celsius)");
}

std::string to_string(ValueUnit unit) {
    switch (unit) {
        case ValueUnit::Megawatt: return "MW";
        case ValueUnit::Kelvin: return "kelvin";
        case ValueUnit::Celsius: return "celsius";
    }
    return "?";
}

TooManyMissing::TooManyMissing(double fraction)
    : DataError(fmt::format("missing demand fraction {:.4f} exceeds threshold", fraction)), fraction_(fraction) {}

HourlySeries::HourlySeries(std::vector<HourlyRecord> records, std::vector<std::string> source_labels)
    : records_(std::move(records)), source_labels_(std::move(source_labels)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (!std::isfinite(r.temperature_c) || r.temperature_c < kMinTemperatureC ||
            r.temperature_c > kMaxTemperatureC)
            throw TemperatureOutOfRange(fmt::format("temperature {} C at {} outside [{}, {}]", r.temperature_c,
                                                    format_timestamp(r.timestamp), kMinTemperatureC,
                                                    kMaxTemperatureC));
        if (r.demand_mw && (!std::isfinite(*r.demand_mw) || *r.demand_mw < 0.0))
            throw DataError(fmt::format("invalid demand {} MW at {}", *r.demand_mw, format_timestamp(r.timestamp)));
        if (i > 0) {
            const auto step = r.timestamp - records_[i - 1].timestamp;
            if (step <= 0)
                throw DataError("series timestamps not strictly increasing at " + format_timestamp(r.timestamp));
            if (step > 1) gaps_.push_back(Gap{records_[i - 1].timestamp, r.timestamp, step - 1});
        }
    }
}

HourlySeries HourlySeries::between(HourStamp first, HourStamp last) const {
    const auto lo = std::lower_bound(records_.begin(), records_.end(), first,
                                     [](const HourlyRecord& r, HourStamp t) { return r.timestamp < t; });
    const auto hi = std::upper_bound(records_.begin(), records_.end(), last,
                                     [](HourStamp t, const HourlyRecord& r) { return t < r.timestamp; });
    if (lo >= hi) return HourlySeries({}, source_labels_);
    return HourlySeries(std::vector<HourlyRecord>(lo, hi), source_labels_);
}

std::vector<RawSeriesRow> parse_series_csv(const std::filesystem::path& path, ValueUnit unit,
                                           const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string());

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw MalformedHeader(path.string() + ": missing header row");
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);

    const auto header = split_csv_line(line);
    const auto find_column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw MalformedHeader(fmt::format("{}: header has no column '{}'", path.string(), name));
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ts_col = find_column(schema.timestamp_column);
    const std::size_t value_col = find_column(schema.value_column);

    std::vector<RawSeriesRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        const std::string ts_text = ts_col < fields.size() ? fields[ts_col] : std::string{};
        const auto stamp = parse_timestamp(ts_text, schema.utc_offset_minutes);
        if (!stamp) throw BadTimestamp(path.string(), line_no, ts_text);
        std::optional<double> value;
        if (value_col < fields.size()) value = parse_value(fields[value_col]);
        if (value && unit == ValueUnit::Kelvin && *value < 0.0)
            throw NegativeKelvin(fmt::format("{}:{}: negative Kelvin temperature {}", path.string(), line_no, *value));
        rows.push_back(RawSeriesRow{*stamp, value});
    }
    return rows;
}

void write_series_csv(const std::filesystem::path& path, std::span<const RawSeriesRow> rows,
                      const CsvSchema& schema) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << schema.timestamp_column << ',' << schema.value_column << '\n';
    for (const auto& row : rows) {
        out << format_timestamp(row.timestamp) << ',';
        if (row.value) out << fmt::format("{}", *row.value);
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

double kelvin_to_celsius(double kelvin) {
    if (!(kelvin >= 0.0)) throw NegativeKelvin(fmt::format("negative Kelvin temperature {}", kelvin));
    return kelvin - 273.15;
}

std::vector<RawSeriesRow> temperature_to_celsius(std::span<const RawSeriesRow> rows, ValueUnit unit) {
    if (unit == ValueUnit::Megawatt) throw ConfigError("temperature series cannot be in MW");
    std::vector<RawSeriesRow> out(rows.begin(), rows.end());
    if (unit == ValueUnit::Kelvin)
        for (auto& row : out)
            if (row.value) row.value = kelvin_to_celsius(*row.value);
    return out;
}

HourlySeries join_hourly(std::span<const RawSeriesRow> demand, std::span<const RawSeriesRow> temperature) {
    if (temperature.empty()) throw EmptyInput("join_hourly: temperature series is empty");

    const auto temps = dedupe_first(temperature, "temperature");
    const auto loads = dedupe_first(demand, "demand");

    std::unordered_map<std::int64_t, std::optional<double>> temp_by_hour;
    temp_by_hour.reserve(temps.size());
    for (const auto& row : temps) temp_by_hour.emplace(row.timestamp.hours_since_epoch(), row.value);

    std::unordered_map<std::int64_t, std::optional<double>> demand_by_hour;
    demand_by_hour.reserve(loads.size());
    for (const auto& row : loads) {
        const auto it = temp_by_hour.find(row.timestamp.hours_since_epoch());
        if (it == temp_by_hour.end() || !it->second) throw MissingTemperature(row.timestamp);
        demand_by_hour.emplace(row.timestamp.hours_since_epoch(), row.value);
    }

    std::vector<HourlyRecord> records;
    records.reserve(temps.size());
    for (const auto& row : temps) {
        if (!row.value) continue;  // no demand here, so the hour is just absent
        HourlyRecord rec{row.timestamp, std::nullopt, *row.value};
        if (const auto it = demand_by_hour.find(row.timestamp.hours_since_epoch()); it != demand_by_hour.end())
            rec.demand_mw = it->second;
        records.push_back(rec);
    }
    return HourlySeries(std::move(records));
}

DropResult drop_missing_demand(const HourlySeries& series, double max_missing_frac) {
    if (!(max_missing_frac >= 0.0 && max_missing_frac <= 1.0))
        throw ConfigError(fmt::format("max_missing_frac {} outside [0, 1]", max_missing_frac));
    std::vector<HourlyRecord> kept;
    kept.reserve(series.size());
    for (const auto& r : series)
        if (r.demand_mw) kept.push_back(r);
    const std::size_t dropped = series.size() - kept.size();
    if (dropped > 0) {
        const double fraction = static_cast<double>(dropped) / static_cast<double>(series.size());
        if (fraction > max_missing_frac) throw TooManyMissing(fraction);
    }
    return DropResult{HourlySeries(std::move(kept), series.source_labels()), dropped};
}

nlohmann::json gap_index_json(const HourlySeries& series) {
    nlohmann::json gaps = nlohmann::json::array();
    for (const auto& g : series.gaps())
        gaps.push_back({{"after", format_timestamp(g.last_before)},
                        {"resumes", format_timestamp(g.first_after)},
                        {"missing_hours", g.missing_hours}});
    nlohmann::json out = {{"records", series.size()}, {"gaps", gaps}};
    if (!series.empty()) {
        out["first"] = format_timestamp(series.records().front().timestamp);
        out["last"] = format_timestamp(series.records().back().timestamp);
    }
    return out;
}

void write_hourly_csv(const std::filesystem::path& path, const HourlySeries& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "timestamp,demand_mw,temperature_c\n";
    for (const auto& r : series) {
        out << format_timestamp(r.timestamp) << ',';
        if (r.demand_mw) out << fmt::format("{}", *r.demand_mw);
        out << ',' << fmt::format("{}", r.temperature_c) << '\n';
    }
}

}  // namespace recon::ingest
