#include "recon/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace recon::pipeline {

namespace {

constexpr int kArtifactVersion = 1;

std::vector<piecewise::PiecewiseInput> piecewise_inputs(const ingest::HourlySeries& series) {
    std::vector<piecewise::PiecewiseInput> out;
    out.reserve(series.size());
    for (const auto& r : series) out.push_back({r.temperature_c, features::extract_calendar(r.timestamp)});
    return out;
}

std::optional<Season> role_season(Role role) {
    switch (role) {
        case Role::Summer: return Season::Summer;
        case Role::Winter: return Season::Winter;
        case Role::Annual: return std::nullopt;
    }
    return std::nullopt;
}

std::vector<Role> roles_for(SeasonalMode mode) {
    if (mode == SeasonalMode::SummerWinter) return {Role::Annual, Role::Summer, Role::Winter};
    return {Role::Annual};
}

const ingest::HourlyRecord& record_at(const ingest::HourlySeries& series, HourStamp t) {
    const auto& recs = series.records();
    const auto it = std::lower_bound(recs.begin(), recs.end(), t,
                                     [](const ingest::HourlyRecord& r, HourStamp x) { return r.timestamp < x; });
    return *it;
}

nlohmann::json scaler_json(const features::ScalerParams& p) { return {{"min", p.feature_min}, {"max", p.feature_max}}; }

features::ScalerParams scaler_from_json(const nlohmann::json& j) {
    return {j.at("min").get<double>(), j.at("max").get<double>()};
}

}  // namespace

std::string to_string(Role role) {
    switch (role) {
        case Role::Annual: return "annual";
        case Role::Summer: return "summer";
        case Role::Winter: return "winter";
    }
    return "?";
}

std::string to_string(Variant variant) { return variant == Variant::Annual ? "annual" : "seasonal"; }

ingest::HourlySeries ingest_inputs(const RunConfig& config) {
    using namespace ingest;
    const auto demand_unit = parse_value_unit(config.demand.unit);
    if (demand_unit != ValueUnit::Megawatt) throw ConfigError("demand.unit must be MW");
    const auto temp_unit = parse_value_unit(config.temperature.unit);
    const auto demand = parse_series_csv(
        config.demand.path, demand_unit,
        CsvSchema{config.demand.timestamp_column, config.demand.value_column, config.utc_offset_minutes});
    const auto temperature = temperature_to_celsius(
        parse_series_csv(config.temperature.path, temp_unit,
                         CsvSchema{config.temperature.timestamp_column, config.temperature.value_column,
                                   config.utc_offset_minutes}),
        temp_unit);
    const auto joined = join_hourly(demand, temperature);
    spdlog::info("ingested {} demand rows and {} temperature rows into {} hours ({} gaps)", demand.size(),
                 temperature.size(), joined.size(), joined.gaps().size());
    return HourlySeries(joined.records(), {config.demand.path.string(), config.temperature.path.string()});
}

PreparedData prepare_data(const RunConfig& config) { return prepare_data(config, ingest_inputs(config)); }

PreparedData prepare_data(const RunConfig& config, ingest::HourlySeries joined) {
    if (joined.empty()) throw EmptyInput("no joined hourly records");
    const auto& recs = joined.records();
    const auto first_demand = std::find_if(recs.begin(), recs.end(), [](const auto& r) { return r.demand_mw.has_value(); });
    if (first_demand == recs.end()) throw DataError("no demand values in the input");
    const auto last_demand =
        std::find_if(recs.rbegin(), recs.rend(), [](const auto& r) { return r.demand_mw.has_value(); });

    if (config.backcast_start) {
        if (*config.backcast_end >= first_demand->timestamp)
            throw ConfigSpanError(fmt::format("backcast span must end before the first demand hour {}",
                                              format_timestamp(first_demand->timestamp)));
        if (recs.front().timestamp > *config.backcast_start || recs.back().timestamp < *config.backcast_end)
            throw ConfigSpanError(fmt::format("temperature data {}..{} does not cover the backcast span",
                                              format_timestamp(recs.front().timestamp),
                                              format_timestamp(recs.back().timestamp)));
    }

    PreparedData data;
    data.full = std::move(joined);
    auto dropped = ingest::drop_missing_demand(data.full.between(first_demand->timestamp, last_demand->timestamp),
                                               config.max_missing_frac);
    data.training_era = std::move(dropped.series);
    data.dropped_missing = dropped.dropped_count;
    if (data.dropped_missing > 0) spdlog::info("dropped {} hours with missing demand", data.dropped_missing);
    auto split = features::chrono_split(data.training_era, config.holdout_frac);
    data.holdout = std::move(split.holdout);
    data.train = std::move(split.train);
    spdlog::info("hold-out {}..{} ({} h), train {}..{} ({} h)", format_timestamp(data.holdout.records().front().timestamp),
                 format_timestamp(data.holdout.records().back().timestamp), data.holdout.size(),
                 format_timestamp(data.train.records().front().timestamp),
                 format_timestamp(data.train.records().back().timestamp), data.train.size());
    return data;
}

FittedModels fit_models(const PreparedData& data, const RunConfig& config) {
    FittedModels m;
    m.mode = config.seasonal_mode;
    m.sequence_length = config.train.sequence_length;

    std::vector<double> temps, demand;
    temps.reserve(data.train.size());
    demand.reserve(data.train.size());
    for (const auto& r : data.train) {
        temps.push_back(r.temperature_c);
        demand.push_back(*r.demand_mw);
    }
    m.temperature_scaler = features::fit_scaler(temps);
    m.demand_scaler = features::fit_scaler(demand);
    const auto roles = roles_for(config.seasonal_mode);

    if (config.wants_piecewise()) {
        const auto fit_role = [&](Role role) {
            const auto season = role_season(role);
            const auto subset = season ? features::seasonal_filter(data.train, *season) : data.train;
            if (subset.empty()) throw DataError("no training hours for the " + to_string(role) + " piecewise model");
            const auto inputs = piecewise_inputs(subset);
            std::vector<double> y, t;
            for (const auto& r : subset) {
                y.push_back(*r.demand_mw);
                t.push_back(r.temperature_c);
            }
            piecewise::PiecewiseSpec spec{config.knots ? *config.knots : piecewise::select_knots(t, config.knot_count),
                                          config.effects};
            return piecewise::fit_piecewise(inputs, y, std::move(spec));
        };
        SeasonalSet<piecewise::PiecewiseModel> set{fit_role(Role::Annual), std::nullopt, std::nullopt};
        for (const auto role : roles) {
            if (role == Role::Summer) set.summer = fit_role(role);
            if (role == Role::Winter) set.winter = fit_role(role);
        }
        m.piecewise = std::move(set);
    }

    if (config.wants_lstm()) {
        const auto samples =
            features::make_sequences(data.train, config.train.sequence_length, m.temperature_scaler, m.demand_scaler);
        const auto fit_role = [&](Role role) {
            const auto season = role_season(role);
            std::vector<features::SequenceSample> subset;
            for (const auto& s : samples)
                if (s.target_demand_scaled && (!season || features::season_of_month(s.calendar.month) == *season))
                    subset.push_back(s);
            const auto n_val =
                static_cast<std::size_t>(static_cast<double>(subset.size()) * config.train.validation_frac);
            if (subset.size() <= n_val) throw DataError("no training samples for the " + to_string(role) + " LSTM");
            const std::span<const features::SequenceSample> all(subset);
            spdlog::info("training {} LSTM on {} samples", to_string(role), subset.size() - n_val);
            auto result = neural::train(all.first(subset.size() - n_val), all.last(n_val), config.train, m.demand_scaler);
            m.traces[to_string(role)] = std::move(result.trace);
            return std::move(result.params);
        };
        SeasonalSet<neural::LstmParams> set{fit_role(Role::Annual), std::nullopt, std::nullopt};
        for (const auto role : roles) {
            if (role == Role::Summer) set.summer = fit_role(role);
            if (role == Role::Winter) set.winter = fit_role(role);
        }
        m.lstm = std::move(set);
    }
    return m;
}

PredictionSet predict_span(const FittedModels& models, ModelKind kind, Variant variant,
                           const ingest::HourlySeries& series, HourStamp first, HourStamp last) {
    PredictionSet out;
    std::vector<features::SequenceSample> samples;
    try {
        samples = features::make_sequences(series, models.sequence_length, models.temperature_scaler, std::nullopt,
                                           first, last);
    } catch (const features::SeriesTooShort&) {
        return out;
    }

    out.rows.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& rec = record_at(series, samples[i].target_time);
        auto& row = out.rows[i];
        row.timestamp = rec.timestamp;
        row.season = features::season_of_month(samples[i].calendar.month);
        row.temperature_c = rec.temperature_c;
        row.actual_mw = rec.demand_mw;
    }

    if (kind == ModelKind::Piecewise) {
        if (!models.piecewise) throw ConfigError("no piecewise model fitted");
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto& row = out.rows[i];
            row.demand_mw = piecewise::predict_piecewise(models.piecewise->serving(row.season, variant),
                                                         row.temperature_c, samples[i].calendar);
        }
    } else if (kind == ModelKind::Lstm) {
        if (!models.lstm) throw ConfigError("no LSTM model fitted");
        // Group samples by serving model so each network runs batched.
        std::map<const neural::LstmParams*, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < samples.size(); ++i)
            groups[&models.lstm->serving(out.rows[i].season, variant)].push_back(i);
        for (const auto& [params, idx] : groups) {
            std::vector<features::SequenceSample> subset;
            subset.reserve(idx.size());
            for (const auto i : idx) subset.push_back(std::move(samples[i]));
            const auto scaled = neural::predict(*params, subset);
            for (std::size_t k = 0; k < idx.size(); ++k)
                out.rows[idx[k]].demand_mw = features::invert_scaler(models.demand_scaler, scaled[k]);
        }
    } else {
        throw ConfigError("predict_span needs a single model kind");
    }

    for (auto& row : out.rows) {
        if (!std::isfinite(row.demand_mw)) throw NumericalError("non-finite prediction at " + format_timestamp(row.timestamp));
        if (row.demand_mw < 0.0) {
            row.demand_mw = 0.0;
            ++out.clamped;
        }
    }
    if (out.clamped > 0) spdlog::warn("clamped {} negative predictions to 0 MW", out.clamped);
    return out;
}

namespace {

std::vector<ModelKind> fitted_kinds(const FittedModels& m) {
    std::vector<ModelKind> kinds;
    if (m.piecewise) kinds.push_back(ModelKind::Piecewise);
    if (m.lstm) kinds.push_back(ModelKind::Lstm);
    return kinds;
}

int predictor_count(const FittedModels& m, ModelKind kind, Variant variant, std::optional<Season> season) {
    if (kind != ModelKind::Piecewise) return -1;
    const auto& set = *m.piecewise;
    if (season) return set.serving(*season, variant).layout.predictor_count();
    int p = set.annual.layout.predictor_count();
    if (variant == Variant::Seasonal) {
        if (set.summer) p += set.summer->layout.predictor_count();
        if (set.winter) p += set.winter->layout.predictor_count();
    }
    return p;
}

eval::MetricsReport summarize_rows(const std::vector<HourPrediction>& rows, int predictors) {
    std::vector<double> y, yhat, t;
    for (const auto& r : rows) {
        y.push_back(*r.actual_mw);
        yhat.push_back(r.demand_mw);
        t.push_back(r.temperature_c);
    }
    return eval::summarize(y, yhat, t, predictors);
}

}  // namespace

std::vector<HoldoutEvaluation> evaluate_holdout(const FittedModels& models, const PreparedData& data) {
    std::vector<HoldoutEvaluation> out;
    const auto first = data.holdout.records().front().timestamp;
    const auto last = data.holdout.records().back().timestamp;
    std::vector<Variant> variants{Variant::Annual};
    if (models.mode == SeasonalMode::SummerWinter) variants.push_back(Variant::Seasonal);

    for (const auto kind : fitted_kinds(models)) {
        for (const auto variant : variants) {
            HoldoutEvaluation ev;
            ev.kind = kind;
            ev.variant = variant;
            ev.model_id = to_string(kind) + "/" + to_string(variant);
            auto preds = predict_span(models, kind, variant, data.full, first, last);
            std::erase_if(preds.rows, [](const HourPrediction& r) { return !r.actual_mw; });
            if (preds.rows.empty()) throw DataError("hold-out has no hour with a full temperature window");
            ev.predictions = std::move(preds.rows);
            ev.metrics = summarize_rows(ev.predictions, predictor_count(models, kind, variant, std::nullopt));
            for (const auto season : features::kAllSeasons) {
                std::vector<HourPrediction> slice;
                for (const auto& r : ev.predictions)
                    if (r.season == season) slice.push_back(r);
                if (slice.empty()) continue;
                ev.metrics.seasons[features::to_string(season)] =
                    summarize_rows(slice, predictor_count(models, kind, variant, season));
            }
            spdlog::info("hold-out {}: RMSE {:.2f} MW, R2 {:.4f}, n {}", ev.model_id, ev.metrics.rmse_mw, ev.metrics.r2,
                         ev.metrics.n);
            out.push_back(std::move(ev));
        }
    }
    return out;
}

std::map<std::string, PredictionSet> backcast_span(const FittedModels& models, const PreparedData& data,
                                                   const RunConfig& config) {
    std::map<std::string, PredictionSet> out;
    if (!config.backcast_start) return out;
    const auto variant = models.mode == SeasonalMode::SummerWinter ? Variant::Seasonal : Variant::Annual;
    for (const auto kind : fitted_kinds(models)) {
        auto preds = predict_span(models, kind, variant, data.full, *config.backcast_start, *config.backcast_end);
        spdlog::info("backcast {}: {} hourly predictions", to_string(kind), preds.rows.size());
        out[to_string(kind)] = std::move(preds);
    }
    return out;
}

BackcastResult run_backcast(const RunConfig& config) { return run_backcast(config, prepare_data(config)); }

BackcastResult run_backcast(const RunConfig& config, const PreparedData& data) {
    BackcastResult r;
    r.run_record = to_json(config, false);
    r.models = fit_models(data, config);
    r.holdout = evaluate_holdout(r.models, data);
    r.backcast = backcast_span(r.models, data, config);
    r.dropped_missing = data.dropped_missing;
    return r;
}

std::vector<std::filesystem::path> save_models(const FittedModels& models, const RunConfig& config,
                                               const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    nlohmann::json index = {{"format_version", kArtifactVersion},
                            {"seasonal_mode", to_string(models.mode)},
                            {"sequence_length", models.sequence_length},
                            {"scalers",
                             {{"temperature", scaler_json(models.temperature_scaler)},
                              {"demand", scaler_json(models.demand_scaler)}}},
                            {"models", nlohmann::json::array()}};

    const auto write = [&](const std::string& kind, Role role, nlohmann::json model) {
        const std::string file = kind + "_" + to_string(role) + ".json";
        nlohmann::json doc = {{"format_version", kArtifactVersion},
                              {"kind", kind},
                              {"role", to_string(role)},
                              {"sequence_length", models.sequence_length},
                              {"scalers", index["scalers"]},
                              {"model", std::move(model)}};
        if (kind == "lstm") doc["train_config"] = neural::to_json(config.train);
        std::ofstream out(dir / file);
        out << doc.dump(1) << '\n';
        if (!out) throw DataError("cannot write " + (dir / file).string());
        index["models"].push_back({{"kind", kind}, {"role", to_string(role)}, {"file", file}});
        written.push_back(dir / file);
    };
    const auto each = [&](const auto& set, const std::string& kind) {
        write(kind, Role::Annual, to_json(set.annual));
        if (set.summer) write(kind, Role::Summer, to_json(*set.summer));
        if (set.winter) write(kind, Role::Winter, to_json(*set.winter));
    };
    using piecewise::to_json;
    using neural::to_json;
    if (models.piecewise) each(*models.piecewise, "piecewise");
    if (models.lstm) each(*models.lstm, "lstm");

    std::ofstream out(dir / "index.json");
    out << index.dump(1) << '\n';
    written.push_back(dir / "index.json");
    return written;
}

FittedModels load_models(const std::filesystem::path& dir) {
    const auto read = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) throw FileNotFound(p.string());
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw DataError(p.string() + " is not valid JSON");
        if (!j.contains("format_version") || j["format_version"] != kArtifactVersion)
            throw DataError(p.string() + ": unsupported or missing format_version");
        return j;
    };
    try {
        const auto index = read(dir / "index.json");
        FittedModels m;
        const auto mode = index.at("seasonal_mode").get<std::string>();
        m.mode = mode == "annual" ? SeasonalMode::Annual : SeasonalMode::SummerWinter;
        m.sequence_length = index.at("sequence_length").get<int>();
        m.temperature_scaler = scaler_from_json(index.at("scalers").at("temperature"));
        m.demand_scaler = scaler_from_json(index.at("scalers").at("demand"));
        for (const auto& entry : index.at("models")) {
            const auto doc = read(dir / entry.at("file").get<std::string>());
            const auto kind = entry.at("kind").get<std::string>();
            const auto role = entry.at("role").get<std::string>();
            const auto place = [&](auto& opt_set, auto model) {
                if (role == "annual") {
                    opt_set.emplace();
                    opt_set->annual = std::move(model);
                } else if (!opt_set) {
                    throw DataError("model index lists a seasonal model before its annual model");
                } else if (role == "summer") {
                    opt_set->summer = std::move(model);
                } else if (role == "winter") {
                    opt_set->winter = std::move(model);
                } else {
                    throw DataError("unknown model role '" + role + "'");
                }
            };
            if (kind == "piecewise")
                place(m.piecewise, piecewise::piecewise_from_json(doc.at("model")));
            else if (kind == "lstm")
                place(m.lstm, neural::lstm_from_json(doc.at("model")));
            else
                throw DataError("unknown model kind '" + kind + "'");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model artifact: ") + e.what());
    }
}

}  // namespace recon::pipeline
