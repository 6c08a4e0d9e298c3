#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recon/config.hpp"
#include "recon/eval.hpp"
#include "recon/features.hpp"
#include "recon/ingest.hpp"
#include "recon/neural.hpp"
#include "recon/piecewise.hpp"

namespace recon::pipeline {

using features::Season;

/// Joined input split into the spans the pipeline works on.
struct PreparedData {
    ingest::HourlySeries full;          // every hour with temperature
    ingest::HourlySeries training_era;  // demand hours after the backcast span, missing demand dropped
    ingest::HourlySeries holdout;       // earliest part of the training era
    ingest::HourlySeries train;
    std::size_t dropped_missing = 0;
};

/// Reads and joins the configured CSVs.
ingest::HourlySeries ingest_inputs(const RunConfig& config);

PreparedData prepare_data(const RunConfig& config);
PreparedData prepare_data(const RunConfig& config, ingest::HourlySeries joined);

/// Which model serves an hour: the annual one, or in summer/winter mode the
/// dedicated Summer or Winter model for Jul-Sep and Oct-Dec hours.
enum class Role { Annual, Summer, Winter };
std::string to_string(Role role);

enum class Variant { Annual, Seasonal };
std::string to_string(Variant variant);

template <class Model>
struct SeasonalSet {
    Model annual;
    std::optional<Model> summer;
    std::optional<Model> winter;

    const Model& serving(Season season, Variant variant) const {
        if (variant == Variant::Seasonal) {
            if (season == Season::Summer && summer) return *summer;
            if (season == Season::Winter && winter) return *winter;
        }
        return annual;
    }
};

struct FittedModels {
    SeasonalMode mode = SeasonalMode::Annual;
    int sequence_length = 24;
    features::ScalerParams temperature_scaler;
    features::ScalerParams demand_scaler;
    std::optional<SeasonalSet<piecewise::PiecewiseModel>> piecewise;
    std::optional<SeasonalSet<neural::LstmParams>> lstm;
    std::map<std::string, neural::TrainTrace> traces;  // keyed by role
};

/// Fits scalers and every requested model on the training partition only.
FittedModels fit_models(const PreparedData& data, const RunConfig& config);

struct HourPrediction {
    HourStamp timestamp;
    Season season = Season::Q1;
    double temperature_c = 0.0;
    double demand_mw = 0.0;
    std::optional<double> actual_mw;
};

struct PredictionSet {
    std::vector<HourPrediction> rows;
    std::size_t clamped = 0;  // predictions raised to 0 MW
};

/// Predicts every hour in [first, last] of `series` that has a full,
/// gap-free window of `sequence_length` hours ending at it.
PredictionSet predict_span(const FittedModels& models, ModelKind kind, Variant variant,
                           const ingest::HourlySeries& series, HourStamp first, HourStamp last);

struct HoldoutEvaluation {
    std::string model_id;  // e.g. "lstm/annual"
    ModelKind kind = ModelKind::Lstm;
    Variant variant = Variant::Annual;
    std::vector<HourPrediction> predictions;  // actual demand always present
    eval::MetricsReport metrics;              // overall plus per-season slices
};

/// Hold-out metrics for every fitted model kind; in summer/winter mode both
/// the annual models and the seasonal composite are evaluated.
std::vector<HoldoutEvaluation> evaluate_holdout(const FittedModels& models, const PreparedData& data);

struct BackcastResult {
    nlohmann::json run_record;  // resolved config without output paths
    FittedModels models;
    std::vector<HoldoutEvaluation> holdout;
    std::map<std::string, PredictionSet> backcast;  // keyed by model kind
    std::size_t dropped_missing = 0;
};

/// Backcast predictions for each fitted kind over the configured span.
std::map<std::string, PredictionSet> backcast_span(const FittedModels& models, const PreparedData& data,
                                                   const RunConfig& config);

BackcastResult run_backcast(const RunConfig& config);
BackcastResult run_backcast(const RunConfig& config, const PreparedData& data);

/// Model artifacts: one JSON file per (kind, role) plus `models/index.json`.
std::vector<std::filesystem::path> save_models(const FittedModels& models, const RunConfig& config,
                                               const std::filesystem::path& dir);
FittedModels load_models(const std::filesystem::path& dir);

struct ManifestEntry {
    std::string path;  // relative to the output directory
    std::uintmax_t bytes = 0;
    std::string sha256;
    std::string hash_scope = "content";
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::string digest;  // sha256 over the entry list
};

/// Writes predictions, metrics, report tables, figures, models, traces and
/// `manifest.json` under `outdir`.
Manifest emit_report(const BackcastResult& result, const std::filesystem::path& outdir, bool figures = true,
                     int top_k = 20);

/// Metrics JSON for a set of hold-out evaluations.
nlohmann::json metrics_json(const std::vector<HoldoutEvaluation>& holdout);

}  // namespace recon::pipeline
