#include "recon/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace recon::synth {

void validate(const SynthScenario& s) {
    if (s.end - s.start + 1 < 48) throw InvalidScenario("scenario span must cover at least 48 hours");
    if (s.cooling_slope < 0.0 || s.heating_slope < 0.0) throw InvalidScenario("cooling/heating slopes must be >= 0");
    if (s.noise_sigma_mw < 0.0) throw InvalidScenario("noise_sigma_mw must be >= 0");
    const auto& t = s.temperature;
    if (t.noise_sigma_c < 0.0 || !(t.noise_persistence >= 0.0 && t.noise_persistence < 1.0))
        throw InvalidScenario("temperature noise must have sigma >= 0 and persistence in [0, 1)");
    if (!(t.min_c < t.max_c) || t.min_c < ingest::kMinTemperatureC || t.max_c > ingest::kMaxTemperatureC)
        throw InvalidScenario("temperature bounds must be ordered and physically plausible");
}

SynthScenario default_scenario() {
    SynthScenario s;
    for (int h = 0; h < 24; ++h)
        s.hour_profile[static_cast<std::size_t>(h)] =
            -900.0 * std::cos(2.0 * std::numbers::pi * (h - 4) / 24.0) - 300.0 * std::cos(4.0 * std::numbers::pi * (h - 8) / 24.0);
    s.dow_profile = {0.0, 50.0, 60.0, 40.0, -50.0, -600.0, -800.0};
    s.month_profile = {100.0, 50.0, 0.0, -100.0, -50.0, 150.0, 250.0, 250.0, 100.0, -50.0, 0.0, 150.0};
    s.year_trend = 150.0;
    s.noise_sigma_mw = 0.02 * s.base_load_mw;
    return s;
}

double noiseless_demand(const SynthScenario& s, double t, const features::CalendarFeatures& cal) {
    const int start_year = s.start.to_civil().year;
    double d = s.base_load_mw + s.hour_profile[static_cast<std::size_t>(cal.hour)] +
               s.dow_profile[static_cast<std::size_t>(cal.day_of_week)] +
               s.month_profile[static_cast<std::size_t>(cal.month - 1)] + s.year_trend * (cal.year - start_year) +
               s.cooling_slope * std::max(0.0, t - s.balance_temp_c) +
               s.heating_slope * std::max(0.0, s.balance_temp_c - t);
    if (s.winter_regime && cal.month >= 10)
        d += s.winter_regime->slope * std::max(0.0, s.winter_regime->balance_temp_c - t);
    return d;
}

SynthOutput generate(const SynthScenario& s, std::uint64_t seed) {
    validate(s);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto& tm = s.temperature;
    const double innovation = tm.noise_sigma_c * std::sqrt(1.0 - tm.noise_persistence * tm.noise_persistence);

    const auto n = static_cast<std::size_t>(s.end - s.start + 1);
    std::vector<ingest::HourlyRecord> records;
    std::vector<double> noiseless;
    records.reserve(n);
    noiseless.reserve(n);
    std::size_t clamped = 0;
    double ar = tm.noise_sigma_c * gauss(rng);

    for (std::size_t i = 0; i < n; ++i) {
        const HourStamp t = s.start + static_cast<std::int64_t>(i);
        const auto cal = features::extract_calendar(t);
        const CivilHour civil = t.to_civil();
        const auto jan1 = HourStamp::from_civil(civil.year, 1, 1, 0);
        const double day_of_year = static_cast<double>(t - jan1) / 24.0;

        if (i > 0) ar = tm.noise_persistence * ar + innovation * gauss(rng);
        double temp = tm.annual_mean_c +
                      tm.annual_amplitude_c * std::cos(2.0 * std::numbers::pi * (day_of_year - tm.peak_day_of_year) / 365.25) +
                      tm.diurnal_amplitude_c * std::cos(2.0 * std::numbers::pi * (cal.hour - tm.peak_hour) / 24.0) + ar;
        temp = std::clamp(temp, tm.min_c, tm.max_c);

        const double clean = noiseless_demand(s, temp, cal);
        double demand = clean + s.noise_sigma_mw * gauss(rng);
        if (demand < 0.0) {
            demand = 0.0;
            ++clamped;
        }
        ingest::HourlyRecord rec{t, std::nullopt, temp};
        if (!s.demand_from || t >= *s.demand_from) rec.demand_mw = demand;
        records.push_back(rec);
        noiseless.push_back(clean);
    }
    if (clamped > 0) spdlog::warn("synth: clamped {} negative demand values to 0", clamped);
    return SynthOutput{ingest::HourlySeries(std::move(records), {"synthetic"}), std::move(noiseless), clamped};
}

nlohmann::json to_json(const SynthScenario& s) {
    const auto& t = s.temperature;
    nlohmann::json regime = nullptr;
    if (s.winter_regime) regime = {{"balance_temp_c", s.winter_regime->balance_temp_c}, {"slope", s.winter_regime->slope}};
    return {{"start", format_timestamp(s.start)},
            {"end", format_timestamp(s.end)},
            {"demand_from", s.demand_from ? nlohmann::json(format_timestamp(*s.demand_from)) : nlohmann::json()},
            {"base_load_mw", s.base_load_mw},
            {"cooling_slope", s.cooling_slope},
            {"heating_slope", s.heating_slope},
            {"balance_temp_c", s.balance_temp_c},
            {"hour_profile", s.hour_profile},
            {"dow_profile", s.dow_profile},
            {"month_profile", s.month_profile},
            {"year_trend", s.year_trend},
            {"noise_sigma_mw", s.noise_sigma_mw},
            {"winter_regime", regime},
            {"temperature",
             {{"annual_mean_c", t.annual_mean_c},
              {"annual_amplitude_c", t.annual_amplitude_c},
              {"peak_day_of_year", t.peak_day_of_year},
              {"diurnal_amplitude_c", t.diurnal_amplitude_c},
              {"peak_hour", t.peak_hour},
              {"noise_sigma_c", t.noise_sigma_c},
              {"noise_persistence", t.noise_persistence},
              {"min_c", t.min_c},
              {"max_c", t.max_c}}}};
}

namespace {

HourStamp stamp_field(const nlohmann::json& j, const char* key) {
    const auto text = j.at(key).get<std::string>();
    const auto t = parse_timestamp(text);
    if (!t) throw InvalidScenario(fmt::format("scenario field {}: bad timestamp '{}'", key, text));
    return *t;
}

}  // namespace

SynthScenario scenario_from_json(const nlohmann::json& j) {
    const nlohmann::json defaults = to_json(default_scenario());
    for (const auto& [key, _] : j.items())
        if (!defaults.contains(key)) throw InvalidScenario("unknown scenario field '" + key + "'");
    nlohmann::json merged = defaults;
    for (const auto& [key, value] : j.items()) {
        if (value.is_object() && merged[key].is_object())
            merged[key].merge_patch(value);
        else
            merged[key] = value;
    }
    if (j.contains("winter_regime") && j["winter_regime"].is_object()) {
        merged["winter_regime"] = {{"balance_temp_c", 12.0}, {"slope", -400.0}};
        merged["winter_regime"].update(j["winter_regime"]);
    }

    try {
        SynthScenario s;
        s.start = stamp_field(merged, "start");
        s.end = stamp_field(merged, "end");
        if (!merged.at("demand_from").is_null()) s.demand_from = stamp_field(merged, "demand_from");
        s.base_load_mw = merged.at("base_load_mw").get<double>();
        s.cooling_slope = merged.at("cooling_slope").get<double>();
        s.heating_slope = merged.at("heating_slope").get<double>();
        s.balance_temp_c = merged.at("balance_temp_c").get<double>();
        s.hour_profile = merged.at("hour_profile").get<std::array<double, 24>>();
        s.dow_profile = merged.at("dow_profile").get<std::array<double, 7>>();
        s.month_profile = merged.at("month_profile").get<std::array<double, 12>>();
        s.year_trend = merged.at("year_trend").get<double>();
        s.noise_sigma_mw = merged.at("noise_sigma_mw").get<double>();
        if (const auto& r = merged.at("winter_regime"); !r.is_null())
            s.winter_regime = WinterRegime{r.at("balance_temp_c").get<double>(), r.at("slope").get<double>()};
        const auto& t = merged.at("temperature");
        auto& tm = s.temperature;
        tm.annual_mean_c = t.at("annual_mean_c").get<double>();
        tm.annual_amplitude_c = t.at("annual_amplitude_c").get<double>();
        tm.peak_day_of_year = t.at("peak_day_of_year").get<double>();
        tm.diurnal_amplitude_c = t.at("diurnal_amplitude_c").get<double>();
        tm.peak_hour = t.at("peak_hour").get<double>();
        tm.noise_sigma_c = t.at("noise_sigma_c").get<double>();
        tm.noise_persistence = t.at("noise_persistence").get<double>();
        tm.min_c = t.at("min_c").get<double>();
        tm.max_c = t.at("max_c").get<double>();
        validate(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidScenario(std::string("scenario: ") + e.what());
    }
}

SynthFiles write_csvs(const SynthOutput& output, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    SynthFiles files{dir / "demand.csv", dir / "temperature.csv", dir / "noiseless.csv"};
    std::ofstream demand(files.demand), temp(files.temperature), clean(files.noiseless);
    if (!demand || !temp || !clean) throw DataError("cannot write synthetic CSVs under " + dir.string());
    demand << "timestamp,demand_mw\n";
    temp << "timestamp,temperature_k\n";
    clean << "timestamp,demand_mw\n";
    const auto& recs = output.series.records();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto ts = format_timestamp(recs[i].timestamp);
        temp << ts << ',' << fmt::format("{}", recs[i].temperature_c + 273.15) << '\n';
        clean << ts << ',' << fmt::format("{}", output.noiseless_mw[i]) << '\n';
        if (recs[i].demand_mw) demand << ts << ',' << fmt::format("{}", *recs[i].demand_mw) << '\n';
    }
    return files;
}

}  // namespace recon::synth
