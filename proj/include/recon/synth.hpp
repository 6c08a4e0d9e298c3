#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "recon/errors.hpp"
#include "recon/features.hpp"
#include "recon/ingest.hpp"

namespace recon::synth {

/// Extra hinge that only applies in October-December:
/// `slope * max(0, balance_temp_c - T)`. A negative slope makes the winter
/// response non-monotone in temperature.
struct WinterRegime {
    double balance_temp_c = 12.0;
    double slope = -400.0;
};

/// Seasonal plus diurnal sinusoid with AR(1) noise.
struct TemperatureModel {
    double annual_mean_c = 19.0;
    double annual_amplitude_c = 10.0;
    double peak_day_of_year = 200.0;
    double diurnal_amplitude_c = 5.0;
    double peak_hour = 15.0;
    double noise_sigma_c = 2.5;
    double noise_persistence = 0.95;  // AR(1) coefficient in [0, 1)
    double min_c = -40.0;
    double max_c = 50.0;
};

struct SynthScenario {
    HourStamp start = HourStamp::from_civil(2015, 1, 1, 0);
    HourStamp end = HourStamp::from_civil(2016, 12, 31, 23);  // inclusive
    /// Demand is only emitted from this hour on (temperature covers the whole span).
    std::optional<HourStamp> demand_from;
    double base_load_mw = 10000.0;
    double cooling_slope = 300.0;  // MW per degree above balance
    double heating_slope = 150.0;  // MW per degree below balance
    double balance_temp_c = 18.0;
    std::array<double, 24> hour_profile{};
    std::array<double, 7> dow_profile{};
    std::array<double, 12> month_profile{};
    double year_trend = 0.0;  // MW per year since the start year
    double noise_sigma_mw = 0.0;
    std::optional<WinterRegime> winter_regime;
    TemperatureModel temperature;
};

class InvalidScenario : public ConfigError {
public:
    using ConfigError::ConfigError;
};

void validate(const SynthScenario& scenario);

/// Typical load shape: evening peak, quieter weekends, 2% noise.
SynthScenario default_scenario();

/// Noise-free demand for one hour:
///   base + hour[h] + dow[d] + month[m] + trend * (year - start_year)
///   + cooling * max(0, T - Tb) + heating * max(0, Tb - T) + winter regime term.
double noiseless_demand(const SynthScenario& scenario, double temperature_c, const features::CalendarFeatures& cal);

struct SynthOutput {
    ingest::HourlySeries series;           // demand after noise and clamping
    std::vector<double> noiseless_mw;      // closed form, one per record
    std::size_t clamped_count = 0;         // demand values raised to 0
};

SynthOutput generate(const SynthScenario& scenario, std::uint64_t seed);

nlohmann::json to_json(const SynthScenario& scenario);
SynthScenario scenario_from_json(const nlohmann::json& j);

struct SynthFiles {
    std::filesystem::path demand;       // timestamp,demand_mw
    std::filesystem::path temperature;  // timestamp,temperature_k
    std::filesystem::path noiseless;    // timestamp,demand_mw
};

/// Writes the series in the layout the ingest module reads, with temperature
/// in Kelvin.
SynthFiles write_csvs(const SynthOutput& output, const std::filesystem::path& dir);

}  // namespace recon::synth
