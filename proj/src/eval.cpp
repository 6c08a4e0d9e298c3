#include "recon/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace recon::eval {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) throw LengthMismatch(fmt::format("{}: lengths {} and {} differ", what, a.size(), b.size()));
    if (a.empty()) throw EmptyInput(fmt::format("{}: empty input", what));
}

double mean(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double pearson(std::span<const double> x, std::span<const double> y) {
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw ConstantInput("correlation undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double sse(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "sse");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return s;
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "rmse");
    return std::sqrt(sse(y, yhat) / static_cast<double>(y.size()));
}

double r_squared(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "r_squared");
    if (y.size() < 2) throw DegreesOfFreedom("r_squared needs at least 2 observations");
    const double my = mean(y);
    double tot = 0.0;
    for (const double v : y) tot += (v - my) * (v - my);
    if (tot == 0.0) throw ConstantTarget("r_squared undefined for constant target");
    return 1.0 - sse(y, yhat) / tot;
}

double adjusted_r_squared(std::span<const double> y, std::span<const double> yhat, int predictors) {
    const double r2 = r_squared(y, yhat);
    const auto n = static_cast<double>(y.size());
    const auto p = static_cast<double>(predictors);
    if (predictors < 0 || n <= p + 1.0)
        throw DegreesOfFreedom(fmt::format("adjusted R^2 needs n > p + 1 (n={}, p={})", y.size(), predictors));
    return 1.0 - (1.0 - r2) * (n - 1.0) / (n - p - 1.0);
}

MapeResult mape(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "mape");
    MapeResult r;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) {
            ++r.excluded_zero_targets;
            continue;
        }
        sum += std::abs(y[i] - yhat[i]) / std::abs(y[i]);
        ++used;
    }
    if (used == 0) throw AllTargetsZero("mape undefined: every target is zero");
    r.percent = 100.0 * sum / static_cast<double>(used);
    return r;
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    check_lengths(x, y, "spearman");
    if (x.size() < 2) throw DegreesOfFreedom("spearman needs at least 2 observations");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

std::vector<GroupRow> grouped_stats(std::span<const TimedValue> series, GroupKey key, GroupStat stat) {
    std::map<int, std::vector<double>> groups;
    for (const auto& tv : series) {
        const CivilHour c = tv.timestamp.to_civil();
        groups[key == GroupKey::HourOfDay ? static_cast<int>(c.hour) : c.year].push_back(tv.value);
    }
    std::vector<GroupRow> rows;
    for (const auto& [k, values] : groups) {
        GroupRow row{k, values.size(), 0.0};
        switch (stat) {
            case GroupStat::Max: row.value = *std::max_element(values.begin(), values.end()); break;
            case GroupStat::Mean: row.value = mean(values); break;
            case GroupStat::StdError: {
                if (values.size() < 2) {
                    row.value = std::numeric_limits<double>::quiet_NaN();
                    break;
                }
                const double m = mean(values);
                double ss = 0.0;
                for (const double v : values) ss += (v - m) * (v - m);
                const auto n = static_cast<double>(values.size());
                row.value = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
                break;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<TimedValue> top_k_hours(std::span<const TimedValue> series, int k, bool per_year) {
    if (k < 1) throw ConfigError("top_k_hours: k must be >= 1");
    const auto better = [](const TimedValue& a, const TimedValue& b) {
        return a.value != b.value ? a.value > b.value : a.timestamp < b.timestamp;
    };
    const auto take = [&](std::vector<TimedValue> v) {
        const auto keep = std::min(v.size(), static_cast<std::size_t>(k));
        std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(keep), v.end(), better);
        v.resize(keep);
        return v;
    };
    if (!per_year) return take({series.begin(), series.end()});

    std::map<int, std::vector<TimedValue>> by_year;
    for (const auto& tv : series) by_year[tv.timestamp.to_civil().year].push_back(tv);
    std::vector<TimedValue> out;
    for (auto& [_, values] : by_year) {
        auto top = take(std::move(values));
        out.insert(out.end(), top.begin(), top.end());
    }
    return out;
}

MetricsReport summarize(std::span<const double> y, std::span<const double> yhat, std::span<const double> temperature,
                        int predictors) {
    check_lengths(y, yhat, "summarize");
    MetricsReport r;
    r.n = y.size();
    r.p = std::max(predictors, 0);
    r.sse = sse(y, yhat);
    r.rmse_mw = rmse(y, yhat);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    try {
        r.r2 = r_squared(y, yhat);
    } catch (const DataError&) {
        r.r2 = nan;
    }
    if (predictors >= 0) {
        try {
            r.adjusted_r2 = adjusted_r_squared(y, yhat, predictors);
        } catch (const DataError&) {
        }
    }
    try {
        const auto m = mape(y, yhat);
        r.mape_percent = m.percent;
        r.mape_excluded = m.excluded_zero_targets;
    } catch (const DataError&) {
        r.mape_percent = nan;
        r.mape_excluded = y.size();
    }
    if (temperature.size() == y.size()) {
        try {
            r.spearman_temp_demand = spearman(temperature, y);
        } catch (const DataError&) {
        }
    }
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    const auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    nlohmann::json j = {{"rmse_mw", num(r.rmse_mw)},
                        {"r2", num(r.r2)},
                        {"adjusted_r2", r.adjusted_r2 ? num(*r.adjusted_r2) : nlohmann::json()},
                        {"mape_percent", num(r.mape_percent)},
                        {"mape_excluded_zero_targets", r.mape_excluded},
                        {"spearman_temp_demand", r.spearman_temp_demand ? num(*r.spearman_temp_demand) : nlohmann::json()},
                        {"n", r.n},
                        {"p", r.p},
                        {"sse", num(r.sse)}};
    if (!r.seasons.empty()) {
        nlohmann::json seasons = nlohmann::json::object();
        for (const auto& [name, sub] : r.seasons) seasons[name] = to_json(sub);
        j["seasons"] = seasons;
    }
    return j;
}

}  // namespace recon::eval
