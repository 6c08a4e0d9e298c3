// recon: command-line front end for the demand reconstruction pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "recon/config.hpp"
#include "recon/errors.hpp"
#include "recon/ingest.hpp"
#include "recon/neural.hpp"
#include "recon/pipeline.hpp"
#include "recon/synth.hpp"

namespace fs = std::filesystem;
using namespace recon;
using namespace recon::pipeline;

namespace {

struct Options {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    std::optional<std::string> out;
    bool quiet = false;
    int verbose = 0;
    std::optional<std::string> scenario;
    bool winter_regime = false;
};

RunConfig resolve(const Options& o) {
    auto overrides = o.overrides;
    if (o.seed) overrides.push_back(fmt::format("train.seed={}", *o.seed));
    auto config = load_run_config(o.config ? std::optional<fs::path>(*o.config) : std::nullopt, overrides);
    if (o.out) config.output_dir = *o.out;
    return config;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write " + path.string());
}

int cmd_ingest(const Options& o) {
    const auto config = resolve(o);
    const auto series = ingest_inputs(config);
    fs::create_directories(config.output_dir);
    ingest::write_hourly_csv(config.output_dir / "ingested.csv", series);
    write_json(config.output_dir / "gaps.json", ingest::gap_index_json(series));
    return 0;
}

int cmd_synth(const Options& o) {
    synth::SynthScenario scenario = synth::default_scenario();
    if (o.scenario) {
        std::ifstream in(*o.scenario);
        if (!in) throw FileNotFound(*o.scenario);
        const auto doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ConfigError(*o.scenario + " is not valid JSON");
        scenario = synth::scenario_from_json(doc);
    }
    if (o.winter_regime && !scenario.winter_regime) scenario.winter_regime = synth::WinterRegime{};
    const fs::path dir = o.out.value_or("synth");
    const auto output = synth::generate(scenario, o.seed.value_or(42));
    const auto files = synth::write_csvs(output, dir);
    write_json(dir / "scenario.json", synth::to_json(scenario));
    spdlog::info("wrote {} hours to {}", output.series.size(), files.demand.string());
    return 0;
}

int cmd_train(const Options& o) {
    const auto config = resolve(o);
    const auto data = prepare_data(config);
    const auto models = fit_models(data, config);
    save_models(models, config, config.output_dir / "models");
    fs::create_directories(config.output_dir / "traces");
    for (const auto& [role, trace] : models.traces)
        neural::write_trace_csv(config.output_dir / "traces" / ("lstm_" + role + ".csv"), trace);
    write_json(config.output_dir / "metrics.json", {{"holdout", metrics_json(evaluate_holdout(models, data))}});
    return 0;
}

int cmd_evaluate(const Options& o) {
    const auto config = resolve(o);
    const auto models = load_models(config.output_dir / "models");
    const auto data = prepare_data(config);
    write_json(config.output_dir / "metrics.json", {{"holdout", metrics_json(evaluate_holdout(models, data))}});
    return 0;
}

int cmd_report(const Options& o) {
    const auto config = resolve(o);
    BackcastResult result;
    result.models = load_models(config.output_dir / "models");
    const auto data = prepare_data(config);
    result.run_record = to_json(config, false);
    result.holdout = evaluate_holdout(result.models, data);
    result.backcast = backcast_span(result.models, data, config);
    result.dropped_missing = data.dropped_missing;
    emit_report(result, config.output_dir, config.figures, config.top_k);
    return 0;
}

int cmd_backcast(const Options& o) {
    const auto config = resolve(o);
    const auto result = run_backcast(config);
    const auto manifest = emit_report(result, config.output_dir, config.figures, config.top_k);
    std::cout << manifest.digest << '\n';
    return 0;
}

int cmd_gradcheck(const Options& o) {
    neural::GradCheckConfig gc;
    gc.seed = o.seed.value_or(gc.seed);
    const auto report = neural::grad_check(gc, 1e-4);
    for (const auto& g : report.groups) spdlog::debug("{}: {:.3e}", g.name, g.max_relative_error);
    std::cout << fmt::format("max relative error {:.3e} ({})\n", report.max_relative_error,
                             report.passed ? "pass" : "fail");
    return report.passed ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_logger_mt("recon"));
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"Reconstruct historical hourly electricity demand from temperature"};
    app.fallthrough();
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "Run configuration (JSON)");
    app.add_option("--seed", o.seed, "Seed for every stochastic step");
    app.add_option("--set", o.overrides, "Config override key=value (repeatable)")->take_all()->allow_extra_args(false);
    app.add_option("--out", o.out, "Output directory");
    app.add_flag("--quiet,-q", o.quiet, "Only log errors");
    app.add_flag("-v,--verbose", o.verbose, "More logging (repeat for trace)");

    int (*handler)(const Options&) = nullptr;
    const auto sub = [&](const char* name, const char* help, int (*fn)(const Options&)) {
        auto* cmd = app.add_subcommand(name, help);
        cmd->callback([&handler, fn] { handler = fn; });
        return cmd;
    };
    sub("ingest", "Parse, convert and join the inputs; write ingested.csv and gaps.json", cmd_ingest);
    auto* synth_cmd = sub("synth", "Generate a synthetic demand/temperature scenario", cmd_synth);
    synth_cmd->add_option("--scenario", o.scenario, "Scenario JSON (defaults otherwise)");
    synth_cmd->add_flag("--winter-regime", o.winter_regime, "Add the cold-weather regime term");
    sub("train", "Fit the configured models and save them with hold-out metrics", cmd_train);
    sub("backcast", "Full run: fit, evaluate, backcast and write the report", cmd_backcast);
    sub("evaluate", "Recompute hold-out metrics from saved models", cmd_evaluate);
    sub("report", "Backcast and write the report from saved models", cmd_report);
    sub("gradcheck", "Check LSTM gradients against finite differences", cmd_gradcheck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        if (e.get_exit_code() != 0) std::cerr << app.help();
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    if (o.quiet)
        spdlog::set_level(spdlog::level::err);
    else if (o.verbose >= 2)
        spdlog::set_level(spdlog::level::trace);
    else if (o.verbose == 1)
        spdlog::set_level(spdlog::level::debug);

    try {
        return handler(o);
    } catch (const ConfigError& e) {
        spdlog::error("configuration: {}", e.what());
        return 1;
    } catch (const DataError& e) {
        spdlog::error("data: {}", e.what());
        return 2;
    } catch (const NumericalError& e) {
        spdlog::error("numerical: {}", e.what());
        return 3;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("io: {}", e.what());
        return 2;
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("configuration: {}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}
