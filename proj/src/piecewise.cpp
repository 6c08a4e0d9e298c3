#include "recon/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace recon::piecewise {

DesignLayout::DesignLayout(PiecewiseSpec spec, EffectLevels levels) : spec_(std::move(spec)), levels_(std::move(levels)) {
    for (std::size_t i = 1; i < spec_.knots.size(); ++i)
        if (!(spec_.knots[i] > spec_.knots[i - 1])) throw ConfigError("piecewise knots must be strictly ascending");
    for (const double k : spec_.knots)
        if (!std::isfinite(k)) throw ConfigError("piecewise knot is not finite");

    Eigen::Index next = 2 + static_cast<Eigen::Index>(spec_.knots.size());
    const auto make_block = [&](bool included, std::vector<int>& lv) {
        Block b;
        if (!included) {
            lv.clear();
            return b;
        }
        std::sort(lv.begin(), lv.end());
        lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
        b.offset = next;
        b.levels = lv;
        if (!lv.empty()) next += static_cast<Eigen::Index>(lv.size()) - 1;
        return b;
    };
    hour_ = make_block(spec_.effects.hour, levels_.hour);
    dow_ = make_block(spec_.effects.day_of_week, levels_.day_of_week);
    month_ = make_block(spec_.effects.month, levels_.month);
    year_ = make_block(spec_.effects.year, levels_.year);
    columns_ = next;
}

DesignLayout DesignLayout::from_training(PiecewiseSpec spec, std::span<const PiecewiseInput> records) {
    std::set<int> hours, dows, months, years;
    for (const auto& r : records) {
        hours.insert(r.calendar.hour);
        dows.insert(r.calendar.day_of_week);
        months.insert(r.calendar.month);
        years.insert(r.calendar.year);
    }
    EffectLevels lv{{hours.begin(), hours.end()}, {dows.begin(), dows.end()}, {months.begin(), months.end()},
                    {years.begin(), years.end()}};
    return DesignLayout(std::move(spec), std::move(lv));
}

std::vector<std::string> DesignLayout::column_names() const {
    std::vector<std::string> names{"intercept", "temperature"};
    for (const double k : spec_.knots) names.push_back(fmt::format("hinge@{}", k));
    const auto add = [&](const Block& b, const char* prefix) {
        for (std::size_t i = 1; i < b.levels.size(); ++i) names.push_back(fmt::format("{}={}", prefix, b.levels[i]));
    };
    add(hour_, "hour");
    add(dow_, "dow");
    add(month_, "month");
    add(year_, "year");
    return names;
}

void DesignLayout::place(const Block& block, int level, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
    if (block.levels.size() < 2) return;
    const auto it = std::lower_bound(block.levels.begin(), block.levels.end(), level);
    if (it == block.levels.end() || *it != level || it == block.levels.begin()) return;  // reference or unseen
    row(block.offset + (it - block.levels.begin()) - 1) = 1.0;
}

void DesignLayout::fill_row(const PiecewiseInput& input, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
    const double t = input.temperature_c;
    if (!std::isfinite(t)) throw NonFiniteInput("design row: non-finite temperature");
    row.setZero();
    row(0) = 1.0;
    row(1) = t;
    for (std::size_t k = 0; k < spec_.knots.size(); ++k)
        row(2 + static_cast<Eigen::Index>(k)) = std::max(0.0, t - spec_.knots[k]);
    if (spec_.effects.hour) place(hour_, input.calendar.hour, row);
    if (spec_.effects.day_of_week) place(dow_, input.calendar.day_of_week, row);
    if (spec_.effects.month) place(month_, input.calendar.month, row);
    if (spec_.effects.year) place(year_, input.calendar.year, row);
}

std::vector<double> select_knots(std::span<const double> temps, int k) {
    if (temps.empty()) throw EmptyInput("select_knots: no temperatures");
    if (k < 0) throw ConfigError("select_knots: negative knot count");
    std::vector<double> sorted(temps.begin(), temps.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    const auto n = sorted.size();

    std::vector<double> knots;
    for (int j = 1; j <= k; ++j) {
        const double q = static_cast<double>(j) / static_cast<double>(k + 1);
        const double h = q * static_cast<double>(n - 1);
        const auto below = static_cast<std::size_t>(std::floor(h));
        const std::size_t above = std::min(below + 1, n - 1);
        const double value = sorted[below] + (h - static_cast<double>(below)) * (sorted[above] - sorted[below]);
        if (value <= lo || value >= hi) continue;
        if (!knots.empty() && value <= knots.back()) continue;
        knots.push_back(value);
    }
    return knots;
}

Eigen::MatrixXd build_design_matrix(std::span<const PiecewiseInput> records, const DesignLayout& layout) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), layout.columns());
    for (std::size_t i = 0; i < records.size(); ++i) layout.fill_row(records[i], x.row(static_cast<Eigen::Index>(i)));
    return x;
}

Eigen::MatrixXd build_design_matrix(std::span<const PiecewiseInput> records, const PiecewiseSpec& spec) {
    return build_design_matrix(records, DesignLayout::from_training(spec, records));
}

OlsResult fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& target) {
    if (design.rows() != target.size())
        throw LengthMismatch(fmt::format("fit_ols: {} rows vs {} targets", design.rows(), target.size()));
    if (design.rows() == 0) throw EmptyInput("fit_ols: no rows");
    if (!design.allFinite() || !target.allFinite()) throw NonFiniteInput("fit_ols: non-finite input");
    if (design.cols() == 0) return OlsResult{Eigen::VectorXd(0), 0, false};

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    OlsResult out;
    out.coefficients = cod.solve(target);
    out.rank = cod.rank();
    out.rank_deficient = out.rank < design.cols();
    if (out.rank_deficient)
        spdlog::warn("fit_ols: design matrix rank {} < {} columns, using minimum-norm solution", out.rank,
                     design.cols());
    return out;
}

int PiecewiseModel::reference_year() const {
    const auto& years = layout.levels().year;
    return years.empty() ? 0 : years.front();
}

PiecewiseModel fit_piecewise(std::span<const PiecewiseInput> records, std::span<const double> demand_mw,
                             PiecewiseSpec spec) {
    if (records.size() != demand_mw.size())
        throw LengthMismatch(fmt::format("fit_piecewise: {} records vs {} targets", records.size(), demand_mw.size()));
    if (records.empty()) throw EmptyInput("fit_piecewise: no training records");

    const auto [lo, hi] = std::minmax_element(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return a.temperature_c < b.temperature_c;
    });
    const auto before = spec.knots.size();
    std::erase_if(spec.knots, [&](double k) { return k <= lo->temperature_c || k >= hi->temperature_c; });
    if (spec.knots.size() != before)
        spdlog::warn("fit_piecewise: dropped {} knots outside training range [{}, {}]", before - spec.knots.size(),
                     lo->temperature_c, hi->temperature_c);

    PiecewiseModel model;
    model.layout = DesignLayout::from_training(std::move(spec), records);
    const Eigen::MatrixXd x = build_design_matrix(records, model.layout);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(demand_mw.data(), static_cast<Eigen::Index>(demand_mw.size()));
    auto ols = fit_ols(x, y);
    model.coefficients = std::move(ols.coefficients);
    model.rank_deficient = ols.rank_deficient;
    return model;
}

double predict_piecewise(const PiecewiseModel& model, double temperature_c, const CalendarFeatures& calendar) {
    Eigen::RowVectorXd row(model.layout.columns());
    model.layout.fill_row(PiecewiseInput{temperature_c, calendar}, row);
    return row.dot(model.coefficients);
}

nlohmann::json to_json(const PiecewiseSpec& spec) {
    return {{"knots", spec.knots},
            {"effects",
             {{"hour", spec.effects.hour},
              {"day_of_week", spec.effects.day_of_week},
              {"month", spec.effects.month},
              {"year", spec.effects.year}}}};
}

PiecewiseSpec spec_from_json(const nlohmann::json& j) {
    PiecewiseSpec spec;
    spec.knots = j.at("knots").get<std::vector<double>>();
    const auto& e = j.at("effects");
    spec.effects = FixedEffects{e.at("hour").get<bool>(), e.at("day_of_week").get<bool>(), e.at("month").get<bool>(),
                                e.at("year").get<bool>()};
    return spec;
}

nlohmann::json to_json(const PiecewiseModel& model) {
    const auto& lv = model.layout.levels();
    nlohmann::json reference;
    const auto ref = [&](const char* name, const std::vector<int>& levels) {
        if (!levels.empty()) reference[name] = levels.front();
    };
    ref("hour", lv.hour);
    ref("day_of_week", lv.day_of_week);
    ref("month", lv.month);
    ref("year", lv.year);
    return {{"kind", "piecewise"},
            {"spec", to_json(model.layout.spec())},
            {"levels", {{"hour", lv.hour}, {"day_of_week", lv.day_of_week}, {"month", lv.month}, {"year", lv.year}}},
            {"reference_levels", reference},
            {"columns", model.layout.column_names()},
            {"coefficients", std::vector<double>(model.coefficients.begin(), model.coefficients.end())},
            {"rank_deficient", model.rank_deficient}};
}

PiecewiseModel piecewise_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "piecewise") throw DataError("model artifact is not a piecewise model");
    const auto& l = j.at("levels");
    EffectLevels levels{l.at("hour").get<std::vector<int>>(), l.at("day_of_week").get<std::vector<int>>(),
                        l.at("month").get<std::vector<int>>(), l.at("year").get<std::vector<int>>()};
    PiecewiseModel model;
    model.layout = DesignLayout(spec_from_json(j.at("spec")), std::move(levels));
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(coef.size()) != model.layout.columns())
        throw DataError(fmt::format("piecewise artifact has {} coefficients for {} columns", coef.size(),
                                    model.layout.columns()));
    model.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    model.rank_deficient = j.value("rank_deficient", false);
    return model;
}

}  // namespace recon::piecewise
