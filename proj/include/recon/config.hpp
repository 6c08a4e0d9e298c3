#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recon/errors.hpp"
#include "recon/neural.hpp"
#include "recon/piecewise.hpp"
#include "recon/time.hpp"

namespace recon::pipeline {

enum class ModelKind { Piecewise, Lstm, Both };
enum class SeasonalMode { Annual, SummerWinter };

std::string to_string(ModelKind kind);
std::string to_string(SeasonalMode mode);

struct SeriesInput {
    std::filesystem::path path;
    std::string timestamp_column = "timestamp";
    std::string value_column;
    std::string unit;
};

struct RunConfig {
    SeriesInput demand{"demand.csv", "timestamp", "demand_mw", "MW"};
    SeriesInput temperature{"temperature.csv", "timestamp", "temperature_k", "kelvin"};
    int utc_offset_minutes = 0;
    double max_missing_frac = 0.05;
    double holdout_frac = 0.2;
    ModelKind model = ModelKind::Both;
    SeasonalMode seasonal_mode = SeasonalMode::Annual;
    neural::TrainConfig train;
    int knot_count = 4;
    std::optional<std::vector<double>> knots;  // explicit knots override knot_count
    piecewise::FixedEffects effects;
    std::optional<HourStamp> backcast_start;
    std::optional<HourStamp> backcast_end;  // inclusive
    std::filesystem::path output_dir = "out";
    bool figures = true;
    int top_k = 20;

    bool wants_piecewise() const { return model != ModelKind::Lstm; }
    bool wants_lstm() const { return model != ModelKind::Piecewise; }
};

class ConfigSpanError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Full configuration document including defaults. `include_output_dir`
/// false drops the output directory (used for reproducible run records).
nlohmann::json to_json(const RunConfig& config, bool include_output_dir = true);

/// Strict parse: every key must exist in the default document.
RunConfig run_config_from_json(const nlohmann::json& doc);

/// Merges `user` onto `defaults`, rejecting keys the defaults do not have.
/// Keys whose default is null accept any value.
void merge_strict(nlohmann::json& defaults, const nlohmann::json& user, const std::string& where = "");

/// Applies one `dotted.key=value` override. The value is read as JSON when it
/// parses, otherwise as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a config file (when given), applies overrides and resolves relative
/// input paths against the config file's directory.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

}  // namespace recon::pipeline
