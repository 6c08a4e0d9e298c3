#include "recon/features.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace recon::features {

CalendarFeatures extract_calendar(HourStamp stamp) {
    const CivilHour c = stamp.to_civil();
    return CalendarFeatures{static_cast<int>(c.hour), static_cast<int>(stamp.weekday()), static_cast<int>(c.month),
                            c.year};
}

ScalerParams fit_scaler(std::span<const double> values) {
    if (values.empty()) throw EmptyInput("fit_scaler: no values");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!std::isfinite(*lo) || !std::isfinite(*hi)) throw DataError("fit_scaler: non-finite value");
    return ScalerParams{*lo, *hi};
}

ChronoSplit chrono_split(const HourlySeries& series, double holdout_frac) {
    if (!(holdout_frac > 0.0 && holdout_frac < 1.0))
        throw ConfigError(fmt::format("holdout_frac {} outside (0, 1)", holdout_frac));
    const auto n = series.size();
    const auto n_holdout = static_cast<std::size_t>(std::floor(static_cast<double>(n) * holdout_frac));
    if (n_holdout == 0 || n_holdout >= n)
        throw TooFewRecords(fmt::format("chrono_split: {} records cannot be split at {}", n, holdout_frac));
    const auto& recs = series.records();
    return ChronoSplit{
        HourlySeries({recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(n_holdout)}, series.source_labels()),
        HourlySeries({recs.begin() + static_cast<std::ptrdiff_t>(n_holdout), recs.end()}, series.source_labels())};
}

Season season_of_month(int month) {
    if (month < 1 || month > 12) throw DataError(fmt::format("month {} out of range", month));
    if (month <= 3) return Season::Q1;
    if (month <= 6) return Season::Q2;
    if (month <= 9) return Season::Summer;
    return Season::Winter;
}

std::string to_string(Season season) {
    switch (season) {
        case Season::Q1: return "q1";
        case Season::Q2: return "q2";
        case Season::Summer: return "summer";
        case Season::Winter: return "winter";
    }
    return "?";
}

Season parse_season(const std::string& name) {
    for (const auto s : kAllSeasons)
        if (to_string(s) == name) return s;
    throw ConfigError("unknown season '" + name + "'");
}

HourlySeries seasonal_filter(const HourlySeries& series, Season label) {
    return series.filter([label](const ingest::HourlyRecord& r) {
        return season_of_month(static_cast<int>(r.timestamp.to_civil().month)) == label;
    });
}

std::vector<SequenceSample> make_sequences(const HourlySeries& series, int length, const ScalerParams& temp_scaler,
                                           const std::optional<ScalerParams>& demand_scaler) {
    if (series.empty()) throw SeriesTooShort("make_sequences: empty series");
    return make_sequences(series, length, temp_scaler, demand_scaler, series.records().front().timestamp,
                          series.records().back().timestamp);
}

std::vector<SequenceSample> make_sequences(const HourlySeries& series, int length, const ScalerParams& temp_scaler,
                                           const std::optional<ScalerParams>& demand_scaler, HourStamp first_target,
                                           HourStamp last_target) {
    if (length < 1) throw ConfigError(fmt::format("sequence length {} must be >= 1", length));
    const auto& recs = series.records();
    const auto window = static_cast<std::size_t>(length);

    std::vector<SequenceSample> out;
    // run = number of contiguous records ending at i
    std::size_t run = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        run = series.contiguous_with_previous(i) ? run + 1 : 1;
        const auto t = recs[i].timestamp;
        if (t < first_target) continue;
        if (t > last_target) break;
        if (run < window) continue;

        SequenceSample s;
        s.temperature_window.resize(window);
        for (std::size_t k = 0; k < window; ++k)
            s.temperature_window[k] = apply_scaler(temp_scaler, recs[i + 1 - window + k].temperature_c);
        s.calendar = extract_calendar(t);
        s.target_time = t;
        if (demand_scaler && recs[i].demand_mw) s.target_demand_scaled = apply_scaler(*demand_scaler, *recs[i].demand_mw);
        out.push_back(std::move(s));
    }
    if (out.empty())
        throw SeriesTooShort(fmt::format("make_sequences: no contiguous window of {} hours", length));
    return out;
}

}  // namespace recon::features
