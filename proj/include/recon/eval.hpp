#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "recon/errors.hpp"
#include "recon/time.hpp"

namespace recon::eval {

class ConstantTarget : public DataError {
public:
    using DataError::DataError;
};

class DegreesOfFreedom : public DataError {
public:
    using DataError::DataError;
};

class AllTargetsZero : public DataError {
public:
    using DataError::DataError;
};

class ConstantInput : public DataError {
public:
    using DataError::DataError;
};

double rmse(std::span<const double> y, std::span<const double> yhat);

/// Sum of squared residuals.
double sse(std::span<const double> y, std::span<const double> yhat);

/// 1 - SS_res / SS_tot, with SS_tot about the mean of y.
double r_squared(std::span<const double> y, std::span<const double> yhat);

/// 1 - (1 - R^2)(n - 1)/(n - p - 1); needs n > p + 1.
double adjusted_r_squared(std::span<const double> y, std::span<const double> yhat, int predictors);

struct MapeResult {
    double percent = 0.0;
    std::size_t excluded_zero_targets = 0;
};

/// 100 * mean(|y - yhat| / |y|) over nonzero targets.
MapeResult mape(std::span<const double> y, std::span<const double> yhat);

/// Pearson correlation of mid-ranks (ties share their mean rank).
double spearman(std::span<const double> x, std::span<const double> y);

/// Mid-ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> x);

enum class GroupKey { HourOfDay, Year };
enum class GroupStat { Max, Mean, StdError };

struct TimedValue {
    HourStamp timestamp;
    double value = 0.0;

    friend bool operator==(const TimedValue&, const TimedValue&) = default;
};

struct GroupRow {
    int key = 0;
    std::size_t count = 0;
    double value = 0.0;
};

/// One row per group, ascending by key. The standard error is the sample
/// standard deviation (n - 1) over sqrt(count); NaN for single-member groups.
std::vector<GroupRow> grouped_stats(std::span<const TimedValue> series, GroupKey key, GroupStat stat);

/// The k largest values (per calendar year when `per_year`), descending, ties
/// broken by the earlier timestamp. Per-year output is ordered by year.
std::vector<TimedValue> top_k_hours(std::span<const TimedValue> series, int k, bool per_year);

struct MetricsReport {
    double rmse_mw = 0.0;
    double r2 = 0.0;
    std::optional<double> adjusted_r2;  // only for models with a linear predictor count
    double mape_percent = 0.0;
    std::size_t mape_excluded = 0;
    std::optional<double> spearman_temp_demand;
    std::size_t n = 0;
    int p = 0;
    double sse = 0.0;
    std::map<std::string, MetricsReport> seasons;
};

/// Fills every metric that is defined for the inputs; undefined ones (constant
/// target, too few degrees of freedom) are left empty or NaN rather than thrown.
/// `predictors` < 0 skips adjusted R^2.
MetricsReport summarize(std::span<const double> y, std::span<const double> yhat, std::span<const double> temperature,
                        int predictors);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace recon::eval
