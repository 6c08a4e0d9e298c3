#include "recon/neural.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace recon::neural {

namespace {

// tanh(x) = 1 - 2 / (exp(2x) + 1); Eigen vectorizes exp but not tanh for doubles.
template <class Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& x) {
    return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

template <class Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
    return 1.0 / (1.0 + (-x).exp());
}

void uniform_fill(Eigen::MatrixXd& m, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

}  // namespace

LstmTensors LstmTensors::zeros(const LstmShape& s) {
    LstmTensors t;
    const int h4 = 4 * s.hidden;
    t.embed_hour = Eigen::MatrixXd::Zero(s.embed_hour, 24);
    t.embed_dow = Eigen::MatrixXd::Zero(s.embed_dow, 7);
    t.embed_month = Eigen::MatrixXd::Zero(s.embed_month, 12);
    t.embed_year = Eigen::MatrixXd::Zero(s.embed_year, s.year_slots);
    t.gate_input = Eigen::MatrixXd::Zero(h4, 1);
    t.gate_recurrent = Eigen::MatrixXd::Zero(h4, s.hidden);
    t.gate_bias = Eigen::MatrixXd::Zero(h4, 1);
    t.dense1_weight = Eigen::MatrixXd::Zero(s.dense, s.feature_width());
    t.dense1_bias = Eigen::MatrixXd::Zero(s.dense, 1);
    t.dense2_weight = Eigen::MatrixXd::Zero(1, s.dense);
    t.dense2_bias = Eigen::MatrixXd::Zero(1, 1);
    return t;
}

LstmTensors LstmTensors::zeros_like() const {
    LstmTensors t;
    for (const auto& [_, field] : kFields) t.*field = Eigen::MatrixXd::Zero((this->*field).rows(), (this->*field).cols());
    return t;
}

bool LstmTensors::all_finite() const {
    return std::all_of(kFields.begin(), kFields.end(), [&](const auto& f) { return (this->*f.second).allFinite(); });
}

std::size_t LstmTensors::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, field] : kFields) n += static_cast<std::size_t>((this->*field).size());
    return n;
}

bool operator==(const LstmTensors& a, const LstmTensors& b) {
    for (const auto& [_, field] : LstmTensors::kFields) {
        const auto& x = a.*field;
        const auto& y = b.*field;
        if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) return false;
    }
    return true;
}

int LstmParams::year_slot(int year) const {
    const auto it = std::lower_bound(years.begin(), years.end(), year);
    if (it != years.end() && *it == year) return static_cast<int>(it - years.begin());
    return static_cast<int>(years.size());
}

LstmShape shape_for(const TrainConfig& c, std::size_t trained_years) {
    return LstmShape{c.sequence_length, c.hidden_size, c.embed_hour, c.embed_dow, c.embed_month, c.embed_year,
                     c.dense_size, static_cast<int>(trained_years) + 1};
}

LstmParams init_params(const TrainConfig& config, std::vector<int> years, std::uint64_t seed) {
    std::sort(years.begin(), years.end());
    years.erase(std::unique(years.begin(), years.end()), years.end());

    LstmParams p;
    p.shape = shape_for(config, years.size());
    p.dropout_rate = config.dropout;
    p.years = std::move(years);
    p.weights = LstmTensors::zeros(p.shape);

    Rng rng(seed);
    auto& w = p.weights;
    const double gate_bound = 1.0 / std::sqrt(static_cast<double>(p.shape.hidden));
    uniform_fill(w.embed_hour, 0.05, rng);
    uniform_fill(w.embed_dow, 0.05, rng);
    uniform_fill(w.embed_month, 0.05, rng);
    uniform_fill(w.embed_year, 0.05, rng);
    uniform_fill(w.gate_input, gate_bound, rng);
    uniform_fill(w.gate_recurrent, gate_bound, rng);
    uniform_fill(w.dense1_weight, 1.0 / std::sqrt(static_cast<double>(p.shape.feature_width())), rng);
    uniform_fill(w.dense2_weight, 1.0 / std::sqrt(static_cast<double>(p.shape.dense)), rng);
    w.gate_bias.middleRows(p.shape.hidden, p.shape.hidden).setOnes();
    return p;
}

SequenceBatch make_batch(const LstmParams& params, std::span<const SequenceSample> samples,
                         std::span<const std::size_t> indices) {
    const auto length = static_cast<std::size_t>(params.shape.sequence_length);
    const std::size_t n = indices.empty() ? samples.size() : indices.size();
    SequenceBatch b;
    b.temperatures.resize(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(n));
    b.hour.resize(n);
    b.dow.resize(n);
    b.month.resize(n);
    b.year_slot.resize(n);
    bool all_targets = n > 0;
    Eigen::RowVectorXd targets(static_cast<Eigen::Index>(n));
    for (std::size_t c = 0; c < n; ++c) {
        const auto& s = samples[indices.empty() ? c : indices[c]];
        if (s.temperature_window.size() != length)
            throw DimensionMismatch(
                fmt::format("sample window has {} steps, network expects {}", s.temperature_window.size(), length));
        const auto col = static_cast<Eigen::Index>(c);
        for (std::size_t k = 0; k < length; ++k) b.temperatures(static_cast<Eigen::Index>(k), col) = s.temperature_window[k];
        const auto& cal = s.calendar;
        if (cal.hour < 0 || cal.hour > 23 || cal.day_of_week < 0 || cal.day_of_week > 6 || cal.month < 1 || cal.month > 12)
            throw DimensionMismatch("calendar features out of range");
        b.hour[c] = cal.hour;
        b.dow[c] = cal.day_of_week;
        b.month[c] = cal.month - 1;
        b.year_slot[c] = params.year_slot(cal.year);
        if (s.target_demand_scaled)
            targets(col) = *s.target_demand_scaled;
        else
            all_targets = false;
    }
    if (all_targets) b.targets = std::move(targets);
    return b;
}

void forward(const LstmParams& params, const SequenceBatch& batch, bool training, Rng* rng, ForwardCache& cache) {
    const auto& s = params.shape;
    const auto& w = params.weights;
    const Eigen::Index hidden = s.hidden;
    const Eigen::Index steps = s.sequence_length;
    const Eigen::Index n = batch.size();
    if (batch.temperatures.rows() != steps)
        throw DimensionMismatch(fmt::format("batch has {} steps, network expects {}", batch.temperatures.rows(), steps));

    cache.batch = batch;
    cache.gates.resize(static_cast<std::size_t>(steps));
    cache.cell_tanh.resize(static_cast<std::size_t>(steps));
    cache.cell.resize(static_cast<std::size_t>(steps + 1));
    cache.hidden.resize(static_cast<std::size_t>(steps + 1));
    cache.cell[0].setZero(hidden, n);
    cache.hidden[0].setZero(hidden, n);

    for (Eigen::Index t = 0; t < steps; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        auto& z = cache.gates[ti];
        z.noalias() = w.gate_recurrent * cache.hidden[ti];
        z.noalias() += w.gate_input * batch.temperatures.row(t);
        z.colwise() += w.gate_bias.col(0);

        z.topRows(2 * hidden) = sigmoid(z.topRows(2 * hidden).array()).matrix();
        z.middleRows(2 * hidden, hidden) = fast_tanh(z.middleRows(2 * hidden, hidden).array()).matrix();
        z.bottomRows(hidden) = sigmoid(z.bottomRows(hidden).array()).matrix();

        const auto in = z.topRows(hidden).array();
        const auto forget = z.middleRows(hidden, hidden).array();
        const auto cand = z.middleRows(2 * hidden, hidden).array();
        const auto out = z.bottomRows(hidden).array();
        cache.cell[ti + 1] = (forget * cache.cell[ti].array() + in * cand).matrix();
        cache.cell_tanh[ti] = fast_tanh(cache.cell[ti + 1].array()).matrix();
        cache.hidden[ti + 1] = (out * cache.cell_tanh[ti].array()).matrix();
    }

    // [h_L; hour; dow; month; year]
    auto& feat = cache.features;
    feat.resize(s.feature_width(), n);
    feat.topRows(hidden) = cache.hidden[static_cast<std::size_t>(steps)];
    Eigen::Index row = hidden;
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        Eigen::Index r = row;
        feat.block(r, c, s.embed_hour, 1) = w.embed_hour.col(batch.hour[cu]);
        r += s.embed_hour;
        feat.block(r, c, s.embed_dow, 1) = w.embed_dow.col(batch.dow[cu]);
        r += s.embed_dow;
        feat.block(r, c, s.embed_month, 1) = w.embed_month.col(batch.month[cu]);
        r += s.embed_month;
        feat.block(r, c, s.embed_year, 1) = w.embed_year.col(batch.year_slot[cu]);
    }

    const bool drop = training && rng != nullptr && params.dropout_rate > 0.0;
    if (drop) {
        const double keep = 1.0 - params.dropout_rate;
        std::bernoulli_distribution bern(keep);
        cache.dropout_mask.resize(feat.rows(), n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < feat.rows(); ++i) cache.dropout_mask(i, j) = bern(*rng) ? 1.0 / keep : 0.0;
        cache.dense1_pre.noalias() = w.dense1_weight * feat.cwiseProduct(cache.dropout_mask);
    } else {
        cache.dropout_mask.resize(0, 0);
        cache.dense1_pre.noalias() = w.dense1_weight * feat;
    }
    cache.dense1_pre.colwise() += w.dense1_bias.col(0);
    cache.dense1_out = cache.dense1_pre.cwiseMax(0.0);
    cache.predictions.noalias() = w.dense2_weight * cache.dense1_out;
    cache.predictions.array() += w.dense2_bias(0, 0);

    cache.version = params.version;
    cache.valid = true;
}

ForwardResult forward(const LstmParams& params, const SequenceSample& sample, bool training, Rng* rng) {
    ForwardResult r;
    forward(params, make_batch(params, std::span<const SequenceSample>(&sample, 1)), training, rng, r.cache);
    r.prediction_scaled = r.cache.predictions(0);
    return r;
}

std::vector<double> predict(const LstmParams& params, std::span<const SequenceSample> samples, std::size_t batch_size) {
    std::vector<double> out;
    out.reserve(samples.size());
    ForwardCache cache;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, samples.size() - start);
        forward(params, make_batch(params, samples.subspan(start, count)), false, nullptr, cache);
        for (Eigen::Index i = 0; i < cache.predictions.size(); ++i) out.push_back(cache.predictions(i));
    }
    return out;
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size() || predictions.empty())
        throw LengthMismatch(fmt::format("mse_loss: {} predictions vs {} targets", predictions.size(), targets.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        sum += d * d;
    }
    return sum / static_cast<double>(predictions.size());
}

Gradients backward(const LstmParams& params, const ForwardCache& cache, const Eigen::RowVectorXd& loss_gradient) {
    if (!cache.valid) throw StaleCache("backward: cache was never filled by forward");
    if (cache.version != params.version)
        throw StaleCache(fmt::format("backward: cache from parameter version {}, parameters are at {}", cache.version,
                                     params.version));
    const auto& s = params.shape;
    const auto& w = params.weights;
    const Eigen::Index n = cache.batch.size();
    if (loss_gradient.size() != n || cache.features.rows() != s.feature_width() ||
        static_cast<Eigen::Index>(cache.gates.size()) != s.sequence_length)
        throw StaleCache("backward: cache does not match parameter shapes");

    Gradients g = w.zeros_like();
    const Eigen::Index hidden = s.hidden;

    // Dense head.
    g.dense2_weight.noalias() = loss_gradient * cache.dense1_out.transpose();
    g.dense2_bias(0, 0) = loss_gradient.sum();
    Eigen::MatrixXd d_pre = w.dense2_weight.transpose() * loss_gradient;
    d_pre = (cache.dense1_pre.array() > 0.0).select(d_pre, 0.0);
    g.dense1_bias = d_pre.rowwise().sum();
    Eigen::MatrixXd d_feat = w.dense1_weight.transpose() * d_pre;
    if (cache.dropout_mask.size() > 0) {
        g.dense1_weight.noalias() = d_pre * cache.features.cwiseProduct(cache.dropout_mask).transpose();
        d_feat.array() *= cache.dropout_mask.array();
    } else {
        g.dense1_weight.noalias() = d_pre * cache.features.transpose();
    }

    // Embedding rows touched by the batch.
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        Eigen::Index r = hidden;
        g.embed_hour.col(cache.batch.hour[cu]) += d_feat.block(r, c, s.embed_hour, 1);
        r += s.embed_hour;
        g.embed_dow.col(cache.batch.dow[cu]) += d_feat.block(r, c, s.embed_dow, 1);
        r += s.embed_dow;
        g.embed_month.col(cache.batch.month[cu]) += d_feat.block(r, c, s.embed_month, 1);
        r += s.embed_month;
        g.embed_year.col(cache.batch.year_slot[cu]) += d_feat.block(r, c, s.embed_year, 1);
    }

    // Backpropagation through time.
    Eigen::MatrixXd d_hidden = d_feat.topRows(hidden);
    Eigen::MatrixXd d_cell = Eigen::MatrixXd::Zero(hidden, n);
    Eigen::MatrixXd d_gates(4 * hidden, n);
    for (Eigen::Index t = s.sequence_length - 1; t >= 0; --t) {
        const auto ti = static_cast<std::size_t>(t);
        const auto& z = cache.gates[ti];
        const auto in = z.topRows(hidden).array();
        const auto forget = z.middleRows(hidden, hidden).array();
        const auto cand = z.middleRows(2 * hidden, hidden).array();
        const auto out = z.bottomRows(hidden).array();
        const auto tc = cache.cell_tanh[ti].array();

        d_cell.array() += d_hidden.array() * out * (1.0 - tc * tc);
        d_gates.topRows(hidden) = (d_cell.array() * cand * in * (1.0 - in)).matrix();
        d_gates.middleRows(hidden, hidden) =
            (d_cell.array() * cache.cell[ti].array() * forget * (1.0 - forget)).matrix();
        d_gates.middleRows(2 * hidden, hidden) = (d_cell.array() * in * (1.0 - cand * cand)).matrix();
        d_gates.bottomRows(hidden) = (d_hidden.array() * tc * out * (1.0 - out)).matrix();
        d_cell.array() *= forget;

        g.gate_recurrent.noalias() += d_gates * cache.hidden[ti].transpose();
        g.gate_input.noalias() += d_gates * cache.batch.temperatures.row(t).transpose();
        g.gate_bias += d_gates.rowwise().sum();
        d_hidden.noalias() = w.gate_recurrent.transpose() * d_gates;
    }
    return g;
}

AdamState AdamState::zeros_for(const LstmParams& params) {
    return AdamState{params.weights.zeros_like(), params.weights.zeros_like(), 0};
}

void adam_step(LstmParams& params, const Gradients& grads, AdamState& state, double lr, const AdamHyper& hyper) {
    ++state.step;
    const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (const auto& [_, field] : LstmTensors::kFields) {
        auto theta = (params.weights.*field).array();
        const auto g = (grads.*field).array();
        auto m = (state.first_moment.*field).array();
        auto v = (state.second_moment.*field).array();
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
        theta -= lr * (m / correction1) / ((v / correction2).sqrt() + hyper.epsilon);
    }
    ++params.version;
}

void sgd_step(LstmParams& params, const Gradients& grads, double lr) {
    for (const auto& [_, field] : LstmTensors::kFields) params.weights.*field -= lr * (grads.*field);
    ++params.version;
}

PlateauScheduler::PlateauScheduler(double initial_lr, const PlateauConfig& config)
    : config_(config), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {
    if (!(config.factor > 0.0 && config.factor < 1.0)) throw ConfigError("scheduler factor must be in (0, 1)");
    if (config.patience < 1) throw ConfigError("scheduler patience must be >= 1");
}

double PlateauScheduler::step(double metric) {
    if (metric < best_) {
        best_ = metric;
        stalled_ = 0;
    } else if (++stalled_ >= config_.patience) {
        lr_ = std::max(lr_ * config_.factor, config_.min_lr);
        stalled_ = 0;
    }
    return lr_;
}

}  // namespace recon::neural
