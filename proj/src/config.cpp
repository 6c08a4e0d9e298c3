#include "recon/config.hpp"

#include <fstream>

#include <fmt/format.h>

namespace recon::pipeline {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Piecewise: return "piecewise";
        case ModelKind::Lstm: return "lstm";
        case ModelKind::Both: return "both";
    }
    return "?";
}

std::string to_string(SeasonalMode mode) { return mode == SeasonalMode::Annual ? "annual" : "summer_winter"; }

namespace {

ModelKind parse_model_kind(const std::string& s) {
    for (const auto k : {ModelKind::Piecewise, ModelKind::Lstm, ModelKind::Both})
        if (to_string(k) == s) return k;
    throw ConfigError("model must be piecewise, lstm or both, got '" + s + "'");
}

SeasonalMode parse_seasonal_mode(const std::string& s) {
    if (s == "annual") return SeasonalMode::Annual;
    if (s == "summer_winter") return SeasonalMode::SummerWinter;
    throw ConfigError("seasonal_mode must be annual or summer_winter, got '" + s + "'");
}

nlohmann::json series_json(const SeriesInput& s) {
    return {{"path", s.path.string()},
            {"timestamp_column", s.timestamp_column},
            {"value_column", s.value_column},
            {"unit", s.unit}};
}

SeriesInput series_from_json(const nlohmann::json& j) {
    return SeriesInput{j.at("path").get<std::string>(), j.at("timestamp_column").get<std::string>(),
                       j.at("value_column").get<std::string>(), j.at("unit").get<std::string>()};
}

std::optional<HourStamp> optional_stamp(const nlohmann::json& j, const char* what) {
    if (j.is_null()) return std::nullopt;
    const auto text = j.get<std::string>();
    const auto t = parse_timestamp(text);
    if (!t) throw ConfigError(fmt::format("{}: bad timestamp '{}'", what, text));
    return t;
}

bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

}  // namespace

nlohmann::json to_json(const RunConfig& c, bool include_output_dir) {
    nlohmann::json j = {
        {"demand", series_json(c.demand)},
        {"temperature", series_json(c.temperature)},
        {"utc_offset_minutes", c.utc_offset_minutes},
        {"max_missing_frac", c.max_missing_frac},
        {"holdout_frac", c.holdout_frac},
        {"model", to_string(c.model)},
        {"seasonal_mode", to_string(c.seasonal_mode)},
        {"train", neural::to_json(c.train)},
        {"piecewise",
         {{"knot_count", c.knot_count},
          {"knots", c.knots ? nlohmann::json(*c.knots) : nlohmann::json()},
          {"effects",
           {{"hour", c.effects.hour},
            {"day_of_week", c.effects.day_of_week},
            {"month", c.effects.month},
            {"year", c.effects.year}}}}},
        {"backcast",
         {{"start", c.backcast_start ? nlohmann::json(format_timestamp(*c.backcast_start)) : nlohmann::json()},
          {"end", c.backcast_end ? nlohmann::json(format_timestamp(*c.backcast_end)) : nlohmann::json()}}},
        {"report", {{"figures", c.figures}, {"top_k", c.top_k}}},
    };
    if (include_output_dir) j["output_dir"] = c.output_dir.string();
    return j;
}

void merge_strict(nlohmann::json& defaults, const nlohmann::json& user, const std::string& where) {
    if (!user.is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", where));
    for (const auto& [key, value] : user.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!defaults.contains(key)) throw ConfigError(fmt::format("unknown config key '{}'", path));
        auto& slot = defaults[key];
        if (slot.is_object() && value.is_object()) {
            merge_strict(slot, value, path);
        } else if (slot.is_null() || value.is_null() || same_kind(slot, value)) {
            slot = value;
        } else {
            throw ConfigError(fmt::format("config key '{}' expects {}, got {}", path, slot.type_name(), value.type_name()));
        }
    }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError(fmt::format("override '{}' is not of the form key=value", assignment));
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    // Build a nested patch and merge it strictly.
    nlohmann::json patch = value;
    std::size_t end = key.size();
    while (true) {
        const auto dot = key.rfind('.', end - 1);
        const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1,
                                            end - (dot == std::string::npos ? 0 : dot + 1));
        if (part.empty()) throw ConfigError(fmt::format("override key '{}' is malformed", key));
        patch = nlohmann::json{{part, patch}};
        if (dot == std::string::npos) break;
        end = dot;
    }
    merge_strict(doc, patch);
}

RunConfig run_config_from_json(const nlohmann::json& user) {
    nlohmann::json doc = to_json(RunConfig{});
    merge_strict(doc, user);
    try {
        RunConfig c;
        c.demand = series_from_json(doc.at("demand"));
        c.temperature = series_from_json(doc.at("temperature"));
        c.utc_offset_minutes = doc.at("utc_offset_minutes").get<int>();
        c.max_missing_frac = doc.at("max_missing_frac").get<double>();
        c.holdout_frac = doc.at("holdout_frac").get<double>();
        c.model = parse_model_kind(doc.at("model").get<std::string>());
        c.seasonal_mode = parse_seasonal_mode(doc.at("seasonal_mode").get<std::string>());

        const auto& sched = doc.at("train").at("scheduler");
        if (sched.is_object())
            for (const auto& [k, _] : sched.items())
                if (k != "factor" && k != "patience" && k != "min_lr")
                    throw ConfigError("unknown config key 'train.scheduler." + k + "'");
        c.train = neural::train_config_from_json(doc.at("train"));
        neural::validate(c.train);

        const auto& pw = doc.at("piecewise");
        c.knot_count = pw.at("knot_count").get<int>();
        if (c.knot_count < 0) throw ConfigError("piecewise.knot_count must be >= 0");
        if (!pw.at("knots").is_null()) c.knots = pw.at("knots").get<std::vector<double>>();
        const auto& e = pw.at("effects");
        c.effects = piecewise::FixedEffects{e.at("hour").get<bool>(), e.at("day_of_week").get<bool>(),
                                            e.at("month").get<bool>(), e.at("year").get<bool>()};

        c.backcast_start = optional_stamp(doc.at("backcast").at("start"), "backcast.start");
        c.backcast_end = optional_stamp(doc.at("backcast").at("end"), "backcast.end");
        if (c.backcast_start.has_value() != c.backcast_end.has_value())
            throw ConfigSpanError("backcast.start and backcast.end must be given together");
        if (c.backcast_start && *c.backcast_start > *c.backcast_end)
            throw ConfigSpanError("backcast.start is after backcast.end");

        c.output_dir = doc.at("output_dir").get<std::string>();
        c.figures = doc.at("report").at("figures").get<bool>();
        c.top_k = doc.at("report").at("top_k").get<int>();
        if (c.top_k < 1) throw ConfigError("report.top_k must be >= 1");
        if (!(c.max_missing_frac >= 0.0 && c.max_missing_frac <= 1.0))
            throw ConfigError("max_missing_frac must be in [0, 1]");
        if (!(c.holdout_frac > 0.0 && c.holdout_frac < 1.0)) throw ConfigError("holdout_frac must be in (0, 1)");
        return c;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("invalid config: ") + ex.what());
    }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
    nlohmann::json doc = to_json(RunConfig{});
    std::filesystem::path base;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file " + path->string());
        const nlohmann::json user = nlohmann::json::parse(in, nullptr, false);
        if (user.is_discarded()) throw ConfigError("config file " + path->string() + " is not valid JSON");
        merge_strict(doc, user);
        base = path->parent_path();
    }
    for (const auto& o : overrides) apply_override(doc, o);
    RunConfig c = run_config_from_json(doc);
    if (!base.empty()) {
        for (auto* p : {&c.demand.path, &c.temperature.path, &c.output_dir})
            if (p->is_relative()) *p = base / *p;
    }
    return c;
}

}  // namespace recon::pipeline
