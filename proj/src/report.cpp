#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "recon/pipeline.hpp"
#include "recon/sha256.hpp"

namespace recon::pipeline {

namespace {

namespace fs = std::filesystem;

constexpr int kArtifactVersion = 1;

std::string num(double v) { return std::isfinite(v) ? fmt::format("{}", v) : std::string(); }

double gw(double mw) { return mw / 1000.0; }

// Linear interpolation between order statistics (the usual "type 7" rule).
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct FiveNumber {
    std::size_t count = 0;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

FiveNumber five_number(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return {v.size(), v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75), v.back()};
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError("cannot write " + path.string());
}

struct DistributionRow {
    std::string model;
    Season season;
    int year;
    FiveNumber gw;
};

std::vector<DistributionRow> seasonal_distribution(const std::map<std::string, PredictionSet>& backcast) {
    std::vector<DistributionRow> rows;
    for (const auto& [model, set] : backcast) {
        for (const auto season : {Season::Summer, Season::Winter}) {
            std::map<int, std::vector<double>> by_year;
            for (const auto& r : set.rows)
                if (r.season == season) by_year[r.timestamp.to_civil().year].push_back(gw(r.demand_mw));
            for (auto& [year, values] : by_year) rows.push_back({model, season, year, five_number(std::move(values))});
        }
    }
    return rows;
}

struct HourlyRow {
    std::string model;
    Season season;
    int hour;
    std::size_t count = 0;
    double pred_max = NAN, pred_mean = NAN, pred_se = NAN;
    double actual_max = NAN, actual_mean = NAN, actual_se = NAN;
};

std::vector<HourlyRow> holdout_hourly(const std::vector<HoldoutEvaluation>& holdout) {
    std::vector<HourlyRow> rows;
    for (const auto& ev : holdout) {
        for (const auto season : {Season::Summer, Season::Winter}) {
            std::vector<eval::TimedValue> pred, actual;
            for (const auto& r : ev.predictions) {
                if (r.season != season) continue;
                pred.push_back({r.timestamp, gw(r.demand_mw)});
                actual.push_back({r.timestamp, gw(*r.actual_mw)});
            }
            std::vector<HourlyRow> block(24);
            for (int h = 0; h < 24; ++h) block[h] = {ev.model_id, season, h};
            const auto fill = [&](const std::vector<eval::TimedValue>& v, eval::GroupStat stat, double HourlyRow::*field) {
                for (const auto& g : eval::grouped_stats(v, eval::GroupKey::HourOfDay, stat)) {
                    block[g.key].count = g.count;
                    block[g.key].*field = g.value;
                }
            };
            if (!pred.empty()) {
                fill(pred, eval::GroupStat::Max, &HourlyRow::pred_max);
                fill(pred, eval::GroupStat::Mean, &HourlyRow::pred_mean);
                fill(pred, eval::GroupStat::StdError, &HourlyRow::pred_se);
                fill(actual, eval::GroupStat::Max, &HourlyRow::actual_max);
                fill(actual, eval::GroupStat::Mean, &HourlyRow::actual_mean);
                fill(actual, eval::GroupStat::StdError, &HourlyRow::actual_se);
            }
            rows.insert(rows.end(), block.begin(), block.end());
        }
    }
    return rows;
}

struct TopRow {
    std::string model;
    int year;
    int rank;
    eval::TimedValue value;
};

std::vector<TopRow> top_by_year(const std::map<std::string, PredictionSet>& backcast, int k) {
    std::vector<TopRow> rows;
    for (const auto& [model, set] : backcast) {
        std::vector<eval::TimedValue> series;
        series.reserve(set.rows.size());
        for (const auto& r : set.rows) series.push_back({r.timestamp, gw(r.demand_mw)});
        int year = std::numeric_limits<int>::min();
        int rank = 0;
        for (const auto& tv : eval::top_k_hours(series, k, true)) {
            const int y = tv.timestamp.to_civil().year;
            rank = y == year ? rank + 1 : 1;
            year = y;
            rows.push_back({model, y, rank, tv});
        }
    }
    return rows;
}

// --- SVG -------------------------------------------------------------------

struct Frame {
    double width = 960, height = 420, left = 70, right = 20, top = 40, bottom = 50;
    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;

    double x(double v) const { return left + (v - x_lo) / (x_hi - x_lo) * (width - left - right); }
    double y(double v) const { return height - bottom - (v - y_lo) / (y_hi - y_lo) * (height - top - bottom); }
};

void fit_y(Frame& f, double lo, double hi) {
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    f.y_lo = lo - pad;
    f.y_hi = hi + pad;
}

std::string svg_open(const Frame& f, const std::string& title, const std::string& y_label) {
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<text x=\"{2}\" y=\"20\" font-size=\"14\">{3}</text>\n",
        f.width, f.height, f.left, title);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", f.left, f.top,
                     f.height - f.bottom);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", f.left,
                     f.height - f.bottom, f.width - f.right);
    for (int i = 0; i <= 4; ++i) {
        const double v = f.y_lo + (f.y_hi - f.y_lo) * i / 4.0;
        s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", f.left - 6, f.y(v) + 4, v);
    }
    s += fmt::format("<text x=\"14\" y=\"{:.1f}\" transform=\"rotate(-90 14 {:.1f})\" text-anchor=\"middle\">{}</text>\n",
                     f.height / 2, f.height / 2, y_label);
    return s;
}

std::string x_tick(const Frame& f, double v, const std::string& label) {
    return fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", f.x(v),
                       f.height - f.bottom + 16, label);
}

std::string distribution_svg(const std::vector<DistributionRow>& rows, const std::string& title) {
    Frame f;
    if (rows.empty()) return svg_open(f, title + " (no data)", "GW") + "</svg>\n";
    double lo = rows.front().gw.min, hi = rows.front().gw.max;
    for (const auto& r : rows) {
        lo = std::min(lo, r.gw.min);
        hi = std::max(hi, r.gw.max);
    }
    fit_y(f, lo, hi);
    f.x_lo = -0.5;
    f.x_hi = static_cast<double>(rows.size()) - 0.5;
    std::string s = svg_open(f, title, "GW");
    const double half = 0.3 * (f.x(1) - f.x(0));
    const std::size_t label_every = std::max<std::size_t>(1, rows.size() / 12);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& b = rows[i].gw;
        const double cx = f.x(static_cast<double>(i));
        s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#555\"/>\n", cx,
                         f.y(b.min), f.y(b.max));
        s += fmt::format(
            "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n",
            cx - half, f.y(b.q3), 2 * half, std::max(0.5, f.y(b.q1) - f.y(b.q3)));
        s += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#08519c\"/>\n", cx - half,
                         f.y(b.median), cx + half, f.y(b.median));
        if (i % label_every == 0) s += x_tick(f, static_cast<double>(i), std::to_string(rows[i].year));
    }
    return s + "</svg>\n";
}

std::string hourly_svg(const std::vector<HourlyRow>& rows, const std::string& title) {
    Frame f;
    f.x_lo = -0.5;
    f.x_hi = 23.5;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : rows)
        for (const double v : {r.pred_max, r.actual_max, r.pred_mean, r.actual_mean})
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!std::isfinite(lo)) return svg_open(f, title + " (no data)", "GW") + "</svg>\n";
    fit_y(f, lo, hi);
    std::string s = svg_open(f, title, "GW");
    const auto polyline = [&](double HourlyRow::*field, const char* colour, const char* dash) {
        std::string pts;
        for (const auto& r : rows)
            if (std::isfinite(r.*field)) pts += fmt::format("{:.1f},{:.1f} ", f.x(r.hour), f.y(r.*field));
        return fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-dasharray=\"{}\"/>\n", pts, colour,
                           dash);
    };
    s += polyline(&HourlyRow::actual_max, "black", "none");
    s += polyline(&HourlyRow::pred_max, "#d62728", "none");
    s += polyline(&HourlyRow::actual_mean, "black", "4 3");
    s += polyline(&HourlyRow::pred_mean, "#d62728", "4 3");
    for (const auto& r : rows) {
        if (!std::isfinite(r.pred_se) || !std::isfinite(r.pred_mean)) continue;
        s += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#d62728\"/>\n",
                         f.x(r.hour), f.y(r.pred_mean - r.pred_se), f.y(r.pred_mean + r.pred_se));
    }
    for (int h = 0; h < 24; h += 3) s += x_tick(f, h, std::to_string(h));
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">black: actual, red: predicted; solid max, dashed mean</text>\n",
                     f.left + 10, f.top + 12);
    return s + "</svg>\n";
}

std::string top_svg(const std::vector<TopRow>& rows, const std::string& title) {
    Frame f;
    if (rows.empty()) return svg_open(f, title + " (no data)", "GW") + "</svg>\n";
    double lo = rows.front().value.value, hi = lo;
    int y_first = rows.front().year, y_last = rows.front().year;
    for (const auto& r : rows) {
        lo = std::min(lo, r.value.value);
        hi = std::max(hi, r.value.value);
        y_first = std::min(y_first, r.year);
        y_last = std::max(y_last, r.year);
    }
    fit_y(f, lo, hi);
    f.x_lo = y_first - 0.5;
    f.x_hi = y_last + 0.5;
    std::string s = svg_open(f, title, "GW");
    for (const auto& r : rows)
        s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"2\" fill=\"#3182bd\"/>\n", f.x(r.year), f.y(r.value.value));
    const int every = std::max(1, (y_last - y_first + 1) / 12);
    for (int y = y_first; y <= y_last; y += every) s += x_tick(f, y, std::to_string(y));
    return s + "</svg>\n";
}

// Trace CSVs carry wall-clock seconds in the last column; the manifest hash
// covers every other column.
std::string hash_without_last_column(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string line, kept;
    while (std::getline(in, line)) {
        const auto cut = line.rfind(',');
        kept += line.substr(0, cut);
        kept += '\n';
    }
    return sha256_hex(kept);
}

}  // namespace

nlohmann::json metrics_json(const std::vector<HoldoutEvaluation>& holdout) {
    nlohmann::json models = nlohmann::json::object();
    for (const auto& ev : holdout) {
        auto j = eval::to_json(ev.metrics);
        j["kind"] = to_string(ev.kind);
        j["variant"] = to_string(ev.variant);
        models[ev.model_id] = std::move(j);
    }
    return models;
}

Manifest emit_report(const BackcastResult& result, const fs::path& outdir, bool figures, int top_k) {
    fs::create_directories(outdir);
    std::vector<std::pair<std::string, std::string>> files;  // relative path, hash scope
    const auto emit = [&](const std::string& rel, const std::string& text) {
        write_text(outdir / rel, text);
        files.emplace_back(rel, "content");
    };

    {
        std::string csv = "timestamp,model,season,demand_mw\n";
        for (const auto& [model, set] : result.backcast)
            for (const auto& r : set.rows)
                csv += fmt::format("{},{},{},{}\n", format_timestamp(r.timestamp), model, features::to_string(r.season),
                                   r.demand_mw);
        emit("predictions.csv", csv);
    }
    {
        std::string csv = "timestamp,model,season,demand_mw,actual_mw\n";
        for (const auto& ev : result.holdout)
            for (const auto& r : ev.predictions)
                csv += fmt::format("{},{},{},{},{}\n", format_timestamp(r.timestamp), ev.model_id,
                                   features::to_string(r.season), r.demand_mw, *r.actual_mw);
        emit("holdout_predictions.csv", csv);
    }
    {
        nlohmann::json backcast = nlohmann::json::object();
        for (const auto& [model, set] : result.backcast)
            backcast[model] = {{"rows", set.rows.size()}, {"clamped", set.clamped}};
        const nlohmann::json doc = {{"format_version", kArtifactVersion},
                                    {"holdout", metrics_json(result.holdout)},
                                    {"backcast", backcast},
                                    {"dropped_missing_hours", result.dropped_missing}};
        emit("metrics.json", doc.dump(2) + "\n");
    }

    const auto distribution = seasonal_distribution(result.backcast);
    {
        std::string csv = "model,season,year,count,min_gw,q1_gw,median_gw,q3_gw,max_gw\n";
        for (const auto& r : distribution)
            csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.model, features::to_string(r.season), r.year, r.gw.count,
                               r.gw.min, r.gw.q1, r.gw.median, r.gw.q3, r.gw.max);
        emit("report/seasonal_distribution.csv", csv);
    }
    const auto hourly = holdout_hourly(result.holdout);
    {
        std::string csv =
            "model,season,hour,count,pred_max_gw,pred_mean_gw,pred_se_gw,actual_max_gw,actual_mean_gw,actual_se_gw\n";
        for (const auto& r : hourly)
            csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.model, features::to_string(r.season), r.hour, r.count,
                               num(r.pred_max), num(r.pred_mean), num(r.pred_se), num(r.actual_max),
                               num(r.actual_mean), num(r.actual_se));
        emit("report/holdout_hourly.csv", csv);
    }
    const auto top = top_by_year(result.backcast, top_k);
    {
        std::string csv = "model,year,rank,timestamp,demand_gw\n";
        for (const auto& r : top)
            csv += fmt::format("{},{},{},{},{}\n", r.model, r.year, r.rank, format_timestamp(r.value.timestamp),
                               r.value.value);
        emit(fmt::format("report/top{}_by_year.csv", top_k), csv);
    }

    if (figures) {
        for (const auto& [model, _] : result.backcast) {
            for (const auto season : {Season::Summer, Season::Winter}) {
                std::vector<DistributionRow> rows;
                for (const auto& r : distribution)
                    if (r.model == model && r.season == season) rows.push_back(r);
                const auto name = features::to_string(season);
                emit(fmt::format("figures/distribution_{}_{}.svg", model, name),
                     distribution_svg(rows, fmt::format("Backcast {} demand by year, {}", name, model)));
            }
            std::vector<TopRow> rows;
            for (const auto& r : top)
                if (r.model == model) rows.push_back(r);
            emit(fmt::format("figures/top{}_{}.svg", top_k, model),
                 top_svg(rows, fmt::format("Largest {} hourly demands per year, {}", top_k, model)));
        }
        for (const auto& ev : result.holdout) {
            for (const auto season : {Season::Summer, Season::Winter}) {
                std::vector<HourlyRow> rows;
                for (const auto& r : hourly)
                    if (r.model == ev.model_id && r.season == season) rows.push_back(r);
                auto id = ev.model_id;
                std::replace(id.begin(), id.end(), '/', '_');
                const auto name = features::to_string(season);
                emit(fmt::format("figures/holdout_hourly_{}_{}.svg", id, name),
                     hourly_svg(rows, fmt::format("Hold-out {} demand by hour, {}", name, ev.model_id)));
            }
        }
    }

    const auto run_config = run_config_from_json(result.run_record);
    for (const auto& p : save_models(result.models, run_config, outdir / "models"))
        files.emplace_back(fs::relative(p, outdir).generic_string(), "content");
    for (const auto& [role, trace] : result.models.traces) {
        const std::string rel = "traces/lstm_" + role + ".csv";
        fs::create_directories(outdir / "traces");
        neural::write_trace_csv(outdir / rel, trace);
        files.emplace_back(rel, "excluding-seconds-column");
    }
    emit("config.json", result.run_record.dump(2) + "\n");

    std::sort(files.begin(), files.end());
    Manifest manifest;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [rel, scope] : files) {
        ManifestEntry e;
        e.path = rel;
        e.hash_scope = scope;
        e.bytes = fs::file_size(outdir / rel);
        e.sha256 = scope == "content" ? sha256_file(outdir / rel) : hash_without_last_column(outdir / rel);
        entries.push_back({{"path", e.path}, {"sha256", e.sha256}, {"hash_scope", e.hash_scope}});
        manifest.entries.push_back(std::move(e));
    }
    manifest.digest = sha256_hex(entries.dump());
    nlohmann::json doc = {{"format_version", kArtifactVersion}, {"digest", manifest.digest}, {"files", entries}};
    // Trace sizes depend on wall time, so only content-hashed files list their size.
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        if (manifest.entries[i].hash_scope == "content") doc["files"][i]["bytes"] = manifest.entries[i].bytes;
    write_text(outdir / "manifest.json", doc.dump(2) + "\n");
    spdlog::info("wrote {} artifacts under {} (manifest digest {})", manifest.entries.size(), outdir.string(),
                 manifest.digest.substr(0, 12));
    return manifest;
}

}  // namespace recon::pipeline
