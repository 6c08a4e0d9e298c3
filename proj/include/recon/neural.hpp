#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "recon/errors.hpp"
#include "recon/features.hpp"

namespace recon::neural {

using features::ScalerParams;
using features::SequenceSample;
using Rng = std::mt19937_64;

enum class Optimizer { Adam, Sgd };

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(const std::string& name);

/// Reduce-on-plateau schedule on the validation metric.
struct PlateauConfig {
    double factor = 0.5;
    int patience = 10;
    double min_lr = 1e-5;
};

struct TrainConfig {
    double learning_rate = 0.009;
    int epochs = 1700;
    Optimizer optimizer = Optimizer::Adam;
    int batch_size = 256;
    std::uint64_t seed = 42;
    int sequence_length = 24;
    int hidden_size = 64;
    int embed_hour = 8;
    int embed_dow = 4;
    int embed_month = 8;
    int embed_year = 4;
    int dense_size = 32;
    double dropout = 0.2;
    std::optional<PlateauConfig> scheduler;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Chronologically latest fraction of each model's training samples held
    /// back for checkpoint selection and the scheduler. 0 disables both.
    double validation_frac = 0.1;
};

/// Throws ConfigError on invalid values; warns for sequence lengths outside 12..36.
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LstmShape {
    int sequence_length = 24;
    int hidden = 64;
    int embed_hour = 8;
    int embed_dow = 4;
    int embed_month = 8;
    int embed_year = 4;
    int dense = 32;
    int year_slots = 1;  // trained years + 1 out-of-vocabulary slot

    int feature_width() const { return hidden + embed_hour + embed_dow + embed_month + embed_year; }
    friend bool operator==(const LstmShape&, const LstmShape&) = default;
};

/// Every trainable tensor of the network. Embedding tables hold one column
/// per level. Gate blocks are stacked input, forget, cell, output.
struct LstmTensors {
    Eigen::MatrixXd embed_hour;      // d_h x 24
    Eigen::MatrixXd embed_dow;       // d_d x 7
    Eigen::MatrixXd embed_month;     // d_m x 12
    Eigen::MatrixXd embed_year;      // d_y x year_slots
    Eigen::MatrixXd gate_input;      // 4H x 1
    Eigen::MatrixXd gate_recurrent;  // 4H x H
    Eigen::MatrixXd gate_bias;       // 4H x 1
    Eigen::MatrixXd dense1_weight;   // M x F
    Eigen::MatrixXd dense1_bias;     // M x 1
    Eigen::MatrixXd dense2_weight;   // 1 x M
    Eigen::MatrixXd dense2_bias;     // 1 x 1

    using Field = Eigen::MatrixXd LstmTensors::*;
    static constexpr std::array<std::pair<const char*, Field>, 11> kFields{{
        {"embed_hour", &LstmTensors::embed_hour},
        {"embed_dow", &LstmTensors::embed_dow},
        {"embed_month", &LstmTensors::embed_month},
        {"embed_year", &LstmTensors::embed_year},
        {"gate_input", &LstmTensors::gate_input},
        {"gate_recurrent", &LstmTensors::gate_recurrent},
        {"gate_bias", &LstmTensors::gate_bias},
        {"dense1_weight", &LstmTensors::dense1_weight},
        {"dense1_bias", &LstmTensors::dense1_bias},
        {"dense2_weight", &LstmTensors::dense2_weight},
        {"dense2_bias", &LstmTensors::dense2_bias},
    }};

    static LstmTensors zeros(const LstmShape& shape);
    LstmTensors zeros_like() const;
    bool all_finite() const;
    std::size_t parameter_count() const;

    friend bool operator==(const LstmTensors& a, const LstmTensors& b);
};

using Gradients = LstmTensors;

struct LstmParams {
    LstmShape shape;
    double dropout_rate = 0.0;
    std::vector<int> years;  // trained year vocabulary, ascending
    LstmTensors weights;
    /// Bumped by every optimizer step; forward caches remember it.
    std::uint64_t version = 0;

    /// Column of `embed_year` for a calendar year; unseen years map to the
    /// reserved last column.
    int year_slot(int year) const;
};

LstmShape shape_for(const TrainConfig& config, std::size_t trained_years);

/// Gate weights uniform in +-1/sqrt(H), embeddings uniform in +-0.05, dense
/// weights uniform in +-1/sqrt(fan_in), biases zero except the forget gate at 1.
LstmParams init_params(const TrainConfig& config, std::vector<int> years, std::uint64_t seed);

class DimensionMismatch : public DataError {
public:
    using DataError::DataError;
};

class StaleCache : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Samples packed column-wise for one forward pass.
struct SequenceBatch {
    Eigen::MatrixXd temperatures;  // L x B
    std::vector<int> hour, dow, month, year_slot;
    Eigen::RowVectorXd targets;  // scaled demand, empty when absent

    Eigen::Index size() const { return temperatures.cols(); }
};

/// Packs `samples[indices]` (all samples when `indices` is empty). Targets are
/// packed only when every selected sample has one.
SequenceBatch make_batch(const LstmParams& params, std::span<const SequenceSample> samples,
                         std::span<const std::size_t> indices = {});

struct ForwardCache {
    SequenceBatch batch;
    std::vector<Eigen::MatrixXd> gates;   // L x (4H x B), activated
    std::vector<Eigen::MatrixXd> cell;    // L+1 x (H x B), cell[0] = 0
    std::vector<Eigen::MatrixXd> cell_tanh;  // L x (H x B)
    std::vector<Eigen::MatrixXd> hidden;  // L+1 x (H x B), hidden[0] = 0
    Eigen::MatrixXd features;             // F x B before dropout
    Eigen::MatrixXd dropout_mask;         // F x B, empty in eval mode
    Eigen::MatrixXd dense1_pre;           // M x B
    Eigen::MatrixXd dense1_out;           // M x B after ReLU
    Eigen::RowVectorXd predictions;       // 1 x B, scaled demand
    std::uint64_t version = 0;
    bool valid = false;
};

/// Runs the network on a batch. With `training` true and an rng, inverted
/// dropout is applied to the concatenated LSTM state and embeddings.
void forward(const LstmParams& params, const SequenceBatch& batch, bool training, Rng* rng, ForwardCache& cache);

struct ForwardResult {
    double prediction_scaled = 0.0;
    ForwardCache cache;
};

ForwardResult forward(const LstmParams& params, const SequenceSample& sample, bool training, Rng* rng);

/// Eval-mode predictions (scaled) for many samples, in order.
std::vector<double> predict(const LstmParams& params, std::span<const SequenceSample> samples,
                            std::size_t batch_size = 1024);

double mse_loss(std::span<const double> predictions, std::span<const double> targets);

/// Analytic gradients of a loss L given dL/dprediction for each batch column.
Gradients backward(const LstmParams& params, const ForwardCache& cache, const Eigen::RowVectorXd& loss_gradient);

struct AdamState {
    LstmTensors first_moment;
    LstmTensors second_moment;
    long step = 0;

    static AdamState zeros_for(const LstmParams& params);
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update of every tensor.
void adam_step(LstmParams& params, const Gradients& grads, AdamState& state, double lr, const AdamHyper& hyper = {});

void sgd_step(LstmParams& params, const Gradients& grads, double lr);

class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, const PlateauConfig& config);

    /// Feeds one epoch's validation metric (lower is better), returns the
    /// learning rate for the next epoch.
    double step(double metric);
    double learning_rate() const { return lr_; }

private:
    PlateauConfig config_;
    double lr_;
    double best_;
    int stalled_ = 0;
};

struct TraceEntry {
    int epoch = 0;
    double train_loss = 0.0;   // mean squared error on scaled demand
    double val_rmse_mw = 0.0;  // NaN without validation samples
    double learning_rate = 0.0;
    double seconds = 0.0;
};

using TrainTrace = std::vector<TraceEntry>;

/// `epoch,train_loss,val_rmse_mw,lr,seconds`
void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);

struct TrainResult {
    LstmParams params;  // from the epoch with the best validation RMSE
    TrainTrace trace;
    int best_epoch = 0;
};

/// Mini-batch training on scaled targets. The year vocabulary is taken from
/// the training samples; the reserved unseen-year embedding is set to the
/// mean of the trained year embeddings before returning.
TrainResult train(std::span<const SequenceSample> train_samples, std::span<const SequenceSample> validation_samples,
                  const TrainConfig& config, const ScalerParams& demand_scaler);

struct GradCheckConfig {
    int hidden = 4;
    int sequence_length = 3;
    int embed_dim = 2;
    int dense = 3;
    int batch = 5;
    double dropout = 0.2;
    double step = 1e-5;
    /// Relative errors use max(|analytic|, |numeric|, floor) as denominator.
    double relative_floor = 1e-7;
    std::uint64_t seed = 1;
};

struct GroupError {
    std::string name;
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t entries = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<GroupError> groups;
    double tolerance = 0.0;
    bool passed = false;
};

/// Compares backward() with central finite differences on a small random
/// network, batch and dropout mask.
GradCheckReport grad_check(const GradCheckConfig& config, double tolerance);

nlohmann::json to_json(const LstmParams& params);
LstmParams lstm_from_json(const nlohmann::json& j);

}  // namespace recon::neural
