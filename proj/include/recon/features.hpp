#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recon/errors.hpp"
#include "recon/ingest.hpp"
#include "recon/time.hpp"

namespace recon::features {

using ingest::HourlySeries;

/// Calendar fixed effects of one hour. Monday = 0.
struct CalendarFeatures {
    int hour = 0;
    int day_of_week = 0;
    int month = 1;
    int year = 1970;

    friend bool operator==(const CalendarFeatures&, const CalendarFeatures&) = default;
};

CalendarFeatures extract_calendar(HourStamp stamp);

struct ScalerParams {
    double feature_min = 0.0;
    double feature_max = 1.0;

    friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

ScalerParams fit_scaler(std::span<const double> values);

/// (x - min) / (max - min) without clamping; 0 when min == max.
inline double apply_scaler(const ScalerParams& p, double x) {
    const double range = p.feature_max - p.feature_min;
    return range == 0.0 ? 0.0 : (x - p.feature_min) / range;
}

inline double invert_scaler(const ScalerParams& p, double y) {
    return p.feature_min + y * (p.feature_max - p.feature_min);
}

class TooFewRecords : public DataError {
public:
    using DataError::DataError;
};

class SeriesTooShort : public DataError {
public:
    using DataError::DataError;
};

struct ChronoSplit {
    HourlySeries holdout;  // chronologically earliest records
    HourlySeries train;
};

/// Hold-out is the first floor(n * holdout_frac) records, train the rest.
ChronoSplit chrono_split(const HourlySeries& series, double holdout_frac);

/// Quarter-of-year label. Summer is Jul-Sep and Winter is Oct-Dec.
enum class Season { Q1, Q2, Summer, Winter };

inline constexpr std::array<Season, 4> kAllSeasons{Season::Q1, Season::Q2, Season::Summer, Season::Winter};

Season season_of_month(int month);
std::string to_string(Season season);
Season parse_season(const std::string& name);

HourlySeries seasonal_filter(const HourlySeries& series, Season label);

struct SequenceSample {
    std::vector<double> temperature_window;  // scaled, oldest first, last entry is the target hour
    CalendarFeatures calendar;               // of the target hour
    std::optional<double> target_demand_scaled;
    HourStamp target_time;
};

/// Builds one sample per record whose preceding `length - 1` hours are all
/// present and contiguous. Windows never span gaps. The target is present
/// iff the record has demand and a demand scaler is supplied.
std::vector<SequenceSample> make_sequences(const HourlySeries& series, int length, const ScalerParams& temp_scaler,
                                           const std::optional<ScalerParams>& demand_scaler);

/// Same, restricted to targets in [first_target, last_target]. Windows may
/// draw on records before `first_target`.
std::vector<SequenceSample> make_sequences(const HourlySeries& series, int length, const ScalerParams& temp_scaler,
                                           const std::optional<ScalerParams>& demand_scaler, HourStamp first_target,
                                           HourStamp last_target);

}  // namespace recon::features
