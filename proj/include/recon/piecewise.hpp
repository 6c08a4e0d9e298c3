#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "recon/errors.hpp"
#include "recon/features.hpp"

namespace recon::piecewise {

using features::CalendarFeatures;

struct FixedEffects {
    bool hour = true;
    bool day_of_week = true;
    bool month = true;
    bool year = true;

    friend bool operator==(const FixedEffects&, const FixedEffects&) = default;
};

struct PiecewiseSpec {
    std::vector<double> knots;  // degrees Celsius, strictly ascending
    FixedEffects effects;
};

/// Levels of each included fixed effect, ascending. The first level of each
/// list is the reference level and gets no column.
struct EffectLevels {
    std::vector<int> hour;
    std::vector<int> day_of_week;
    std::vector<int> month;
    std::vector<int> year;

    friend bool operator==(const EffectLevels&, const EffectLevels&) = default;
};

struct PiecewiseInput {
    double temperature_c = 0.0;
    CalendarFeatures calendar;
};

class NonFiniteInput : public DataError {
public:
    using DataError::DataError;
};

/// Column layout of the hinge design matrix:
///
///   [1, T, max(0, T - k_1), ..., max(0, T - k_K),
///    hour dummies, day-of-week dummies, month dummies, year dummies]
///
/// Dummy blocks appear only for included effects, each with its reference
/// level dropped. Levels never seen in training encode as the reference.
class DesignLayout {
public:
    DesignLayout() = default;
    DesignLayout(PiecewiseSpec spec, EffectLevels levels);

    /// Levels are the values observed in `records` (all 24 hours, 7 days and
    /// 12 months when the data covers them).
    static DesignLayout from_training(PiecewiseSpec spec, std::span<const PiecewiseInput> records);

    const PiecewiseSpec& spec() const { return spec_; }
    const EffectLevels& levels() const { return levels_; }

    Eigen::Index columns() const { return columns_; }
    /// Predictors excluding the intercept.
    int predictor_count() const { return static_cast<int>(columns_) - 1; }
    std::vector<std::string> column_names() const;

    void fill_row(const PiecewiseInput& input, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const;

private:
    struct Block {
        Eigen::Index offset = 0;
        std::vector<int> levels;
    };
    void place(const Block& block, int level, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const;

    PiecewiseSpec spec_;
    EffectLevels levels_;
    Block hour_, dow_, month_, year_;
    Eigen::Index columns_ = 2;
};

/// Interior knots at quantiles 1/(k+1) .. k/(k+1) (linear interpolation
/// between order statistics). Knots at the data extremes and duplicates are
/// dropped, so constant data yields no knots.
std::vector<double> select_knots(std::span<const double> temps, int k);

Eigen::MatrixXd build_design_matrix(std::span<const PiecewiseInput> records, const DesignLayout& layout);
Eigen::MatrixXd build_design_matrix(std::span<const PiecewiseInput> records, const PiecewiseSpec& spec);

struct OlsResult {
    Eigen::VectorXd coefficients;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

/// Least squares via complete orthogonal decomposition. Rank-deficient
/// systems get the minimum-norm solution and `rank_deficient` set.
OlsResult fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& target);

struct PiecewiseModel {
    DesignLayout layout;
    Eigen::VectorXd coefficients;
    bool rank_deficient = false;

    int reference_year() const;
};

PiecewiseModel fit_piecewise(std::span<const PiecewiseInput> records, std::span<const double> demand_mw,
                             PiecewiseSpec spec);

double predict_piecewise(const PiecewiseModel& model, double temperature_c, const CalendarFeatures& calendar);

nlohmann::json to_json(const PiecewiseModel& model);
PiecewiseModel piecewise_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PiecewiseSpec& spec);
PiecewiseSpec spec_from_json(const nlohmann::json& j);

}  // namespace recon::piecewise
