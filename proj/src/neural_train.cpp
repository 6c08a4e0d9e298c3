#include "recon/neural.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace recon::neural {

std::string to_string(Optimizer opt) { return opt == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(const std::string& name) {
    if (name == "adam" || name == "Adam") return Optimizer::Adam;
    if (name == "sgd" || name == "SGD") return Optimizer::Sgd;
    throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

void validate(const TrainConfig& c) {
    if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.sequence_length < 1) throw ConfigError("sequence_length must be >= 1");
    if (c.hidden_size < 1 || c.dense_size < 1) throw ConfigError("hidden_size and dense_size must be >= 1");
    if (c.embed_hour < 1 || c.embed_dow < 1 || c.embed_month < 1 || c.embed_year < 1)
        throw ConfigError("embedding dimensions must be >= 1");
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(c.validation_frac >= 0.0 && c.validation_frac < 1.0)) throw ConfigError("validation_frac must be in [0, 1)");
    if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0) ||
        !(c.adam_epsilon > 0.0))
        throw ConfigError("invalid Adam hyper-parameters");
    if (c.scheduler) {
        if (!(c.scheduler->factor > 0.0 && c.scheduler->factor < 1.0))
            throw ConfigError("scheduler factor must be in (0, 1)");
        if (c.scheduler->patience < 1) throw ConfigError("scheduler patience must be >= 1");
        if (!(c.scheduler->min_lr >= 0.0)) throw ConfigError("scheduler min_lr must be >= 0");
    }
    if (c.sequence_length < 12 || c.sequence_length > 36)
        spdlog::warn("sequence_length {} is outside the 12..36 band", c.sequence_length);
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json sched = nullptr;
    if (c.scheduler)
        sched = {{"factor", c.scheduler->factor}, {"patience", c.scheduler->patience}, {"min_lr", c.scheduler->min_lr}};
    return {{"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"optimizer", to_string(c.optimizer)},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"sequence_length", c.sequence_length},
            {"hidden_size", c.hidden_size},
            {"embed_hour", c.embed_hour},
            {"embed_dow", c.embed_dow},
            {"embed_month", c.embed_month},
            {"embed_year", c.embed_year},
            {"dense_size", c.dense_size},
            {"dropout", c.dropout},
            {"scheduler", sched},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"validation_frac", c.validation_frac}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.sequence_length = j.at("sequence_length").get<int>();
    c.hidden_size = j.at("hidden_size").get<int>();
    c.embed_hour = j.at("embed_hour").get<int>();
    c.embed_dow = j.at("embed_dow").get<int>();
    c.embed_month = j.at("embed_month").get<int>();
    c.embed_year = j.at("embed_year").get<int>();
    c.dense_size = j.at("dense_size").get<int>();
    c.dropout = j.at("dropout").get<double>();
    if (const auto& s = j.at("scheduler"); !s.is_null()) {
        PlateauConfig p;
        p.factor = s.value("factor", p.factor);
        p.patience = s.value("patience", p.patience);
        p.min_lr = s.value("min_lr", p.min_lr);
        c.scheduler = p;
    }
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.validation_frac = j.at("validation_frac").get<double>();
    return c;
}

namespace {

void gather(const SequenceBatch& all, std::span<const std::size_t> idx, SequenceBatch& out) {
    const auto n = static_cast<Eigen::Index>(idx.size());
    out.temperatures.resize(all.temperatures.rows(), n);
    out.targets.resize(n);
    out.hour.resize(idx.size());
    out.dow.resize(idx.size());
    out.month.resize(idx.size());
    out.year_slot.resize(idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) {
        const auto src = static_cast<Eigen::Index>(idx[c]);
        const auto col = static_cast<Eigen::Index>(c);
        out.temperatures.col(col) = all.temperatures.col(src);
        out.targets(col) = all.targets(src);
        out.hour[c] = all.hour[idx[c]];
        out.dow[c] = all.dow[idx[c]];
        out.month[c] = all.month[idx[c]];
        out.year_slot[c] = all.year_slot[idx[c]];
    }
}

double validation_rmse_mw(const LstmParams& params, const std::vector<SequenceBatch>& chunks,
                          const ScalerParams& demand_scaler, ForwardCache& cache) {
    double sse = 0.0;
    std::size_t n = 0;
    for (const auto& chunk : chunks) {
        forward(params, chunk, false, nullptr, cache);
        for (Eigen::Index i = 0; i < chunk.size(); ++i) {
            const double d = features::invert_scaler(demand_scaler, cache.predictions(i)) -
                             features::invert_scaler(demand_scaler, chunk.targets(i));
            sse += d * d;
        }
        n += static_cast<std::size_t>(chunk.size());
    }
    return std::sqrt(sse / static_cast<double>(n));
}

}  // namespace

TrainResult train(std::span<const SequenceSample> train_samples, std::span<const SequenceSample> validation_samples,
                  const TrainConfig& config, const ScalerParams& demand_scaler) {
    validate(config);
    if (train_samples.empty()) throw EmptyInput("train: no training samples");
    const auto need_targets = [](std::span<const SequenceSample> s, const char* what) {
        for (const auto& x : s)
            if (!x.target_demand_scaled) throw DataError(fmt::format("train: {} sample without demand target", what));
    };
    need_targets(train_samples, "training");
    need_targets(validation_samples, "validation");

    std::set<int> year_set;
    for (const auto& s : train_samples) year_set.insert(s.calendar.year);
    LstmParams params = init_params(config, {year_set.begin(), year_set.end()}, config.seed);

    std::seed_seq shuffle_seq{config.seed, std::uint64_t{0x5348}};
    std::seed_seq dropout_seq{config.seed, std::uint64_t{0x4452}};
    Rng shuffle_rng(shuffle_seq);
    Rng dropout_rng(dropout_seq);

    const SequenceBatch all = make_batch(params, train_samples);
    std::vector<SequenceBatch> val_chunks;
    constexpr std::size_t kEvalChunk = 1024;
    for (std::size_t start = 0; start < validation_samples.size(); start += kEvalChunk)
        val_chunks.push_back(make_batch(
            params, validation_samples.subspan(start, std::min(kEvalChunk, validation_samples.size() - start))));

    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    AdamState adam = AdamState::zeros_for(params);
    const AdamHyper hyper{config.adam_beta1, config.adam_beta2, config.adam_epsilon};
    std::optional<PlateauScheduler> scheduler;
    if (config.scheduler) scheduler.emplace(config.learning_rate, *config.scheduler);
    double lr = config.learning_rate;

    TrainResult result;
    result.params = params;
    double best = std::numeric_limits<double>::infinity();
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    SequenceBatch batch;
    ForwardCache cache;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sse = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(batch_size, order.size() - start));
            gather(all, idx, batch);
            forward(params, batch, true, &dropout_rng, cache);
            const Eigen::RowVectorXd residual = cache.predictions - batch.targets;
            const double batch_sse = residual.squaredNorm();
            if (!std::isfinite(batch_sse))
                throw Diverged(fmt::format("training loss became non-finite in epoch {}", epoch));
            sse += batch_sse;
            const Gradients grads = backward(params, cache, (2.0 / static_cast<double>(idx.size())) * residual);
            if (config.optimizer == Optimizer::Adam)
                adam_step(params, grads, adam, lr, hyper);
            else
                sgd_step(params, grads, lr);
        }
        if (!params.weights.all_finite()) throw Diverged(fmt::format("parameters became non-finite in epoch {}", epoch));

        TraceEntry entry;
        entry.epoch = epoch;
        entry.train_loss = sse / static_cast<double>(order.size());
        entry.learning_rate = lr;
        entry.val_rmse_mw = val_chunks.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : validation_rmse_mw(params, val_chunks, demand_scaler, cache);
        entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.trace.push_back(entry);

        const double metric = val_chunks.empty() ? entry.train_loss : entry.val_rmse_mw;
        if (val_chunks.empty() || metric < best) {
            best = metric;
            result.params = params;
            result.best_epoch = epoch;
        }
        if (scheduler) lr = scheduler->step(metric);
        spdlog::debug("epoch {}: loss {:.6g}, val rmse {:.6g} MW, lr {:.3g}", epoch, entry.train_loss,
                      entry.val_rmse_mw, entry.learning_rate);
    }

    auto& yr = result.params.weights.embed_year;
    const auto trained = static_cast<Eigen::Index>(result.params.years.size());
    if (trained > 0) yr.col(trained) = yr.leftCols(trained).rowwise().mean();
    spdlog::info("trained LSTM: {} epochs, best epoch {} ({} samples, {} validation)", config.epochs,
                 result.best_epoch, train_samples.size(), validation_samples.size());
    return result;
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch,train_loss,val_rmse_mw,lr,seconds\n";
    for (const auto& e : trace)
        out << fmt::format("{},{},{},{},{:.6f}\n", e.epoch, e.train_loss, e.val_rmse_mw, e.learning_rate, e.seconds);
}

GradCheckReport grad_check(const GradCheckConfig& gc, double tolerance) {
    TrainConfig tc;
    tc.hidden_size = gc.hidden;
    tc.sequence_length = gc.sequence_length;
    tc.embed_hour = tc.embed_dow = tc.embed_month = tc.embed_year = gc.embed_dim;
    tc.dense_size = gc.dense;
    tc.dropout = gc.dropout;

    LstmParams params = init_params(tc, {2000, 2001}, gc.seed);
    Rng rng(gc.seed * 7919 + 17);
    std::uniform_real_distribution<double> weight(-0.5, 0.5);
    for (const auto& [_, field] : LstmTensors::kFields)
        for (Eigen::Index i = 0; i < (params.weights.*field).size(); ++i) (params.weights.*field)(i) = weight(rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SequenceSample> samples(static_cast<std::size_t>(gc.batch));
    const std::array<int, 3> years{2000, 2001, 1990};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& s = samples[i];
        s.temperature_window.resize(static_cast<std::size_t>(gc.sequence_length));
        for (auto& v : s.temperature_window) v = unit(rng);
        s.calendar = features::CalendarFeatures{static_cast<int>(rng() % 24), static_cast<int>(rng() % 7),
                                                static_cast<int>(rng() % 12) + 1, years[i % years.size()]};
        s.target_demand_scaled = unit(rng);
    }
    const SequenceBatch batch = make_batch(params, samples);
    const Rng mask_rng(gc.seed * 31 + 5);
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    ForwardCache cache;
    const auto loss = [&](const LstmParams& p) {
        Rng r = mask_rng;
        forward(p, batch, true, &r, cache);
        return (cache.predictions - batch.targets).squaredNorm() * inv_n;
    };

    loss(params);
    const Gradients analytic = backward(params, cache, 2.0 * inv_n * (cache.predictions - batch.targets));

    GradCheckReport report;
    report.tolerance = tolerance;
    for (const auto& [name, field] : LstmTensors::kFields) {
        GroupError ge;
        ge.name = name;
        auto& tensor = params.weights.*field;
        for (Eigen::Index i = 0; i < tensor.size(); ++i) {
            const double saved = tensor(i);
            tensor(i) = saved + gc.step;
            const double up = loss(params);
            tensor(i) = saved - gc.step;
            const double down = loss(params);
            tensor(i) = saved;
            const double numeric = (up - down) / (2.0 * gc.step);
            const double a = (analytic.*field)(i);
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), gc.relative_floor});
            ge.max_absolute_error = std::max(ge.max_absolute_error, abs_err);
            ge.max_relative_error = std::max(ge.max_relative_error, rel);
            ++ge.entries;
        }
        report.max_relative_error = std::max(report.max_relative_error, ge.max_relative_error);
        report.groups.push_back(ge);
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

namespace {

nlohmann::json tensor_json(const Eigen::MatrixXd& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd tensor_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols)
        throw DataError(fmt::format("LSTM artifact tensor {} has wrong shape", name));
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw DataError(fmt::format("LSTM artifact tensor {} has {} values", name, data.size()));
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

}  // namespace

nlohmann::json to_json(const LstmParams& p) {
    nlohmann::json tensors;
    for (const auto& [name, field] : LstmTensors::kFields) tensors[name] = tensor_json(p.weights.*field);
    const auto& s = p.shape;
    return {{"kind", "lstm"},
            {"shape",
             {{"sequence_length", s.sequence_length},
              {"hidden", s.hidden},
              {"embed_hour", s.embed_hour},
              {"embed_dow", s.embed_dow},
              {"embed_month", s.embed_month},
              {"embed_year", s.embed_year},
              {"dense", s.dense},
              {"year_slots", s.year_slots}}},
            {"dropout_rate", p.dropout_rate},
            {"years", p.years},
            {"tensor_layout", "column-major"},
            {"tensors", tensors}};
}

LstmParams lstm_from_json(const nlohmann::json& j) {
    if (j.at("kind") != "lstm") throw DataError("model artifact is not an LSTM");
    LstmParams p;
    const auto& s = j.at("shape");
    p.shape = LstmShape{s.at("sequence_length").get<int>(), s.at("hidden").get<int>(),    s.at("embed_hour").get<int>(),
                        s.at("embed_dow").get<int>(),       s.at("embed_month").get<int>(), s.at("embed_year").get<int>(),
                        s.at("dense").get<int>(),           s.at("year_slots").get<int>()};
    p.dropout_rate = j.at("dropout_rate").get<double>();
    p.years = j.at("years").get<std::vector<int>>();
    if (static_cast<int>(p.years.size()) + 1 != p.shape.year_slots)
        throw DataError("LSTM artifact year vocabulary does not match embedding table");
    const LstmTensors shapes = LstmTensors::zeros(p.shape);
    const auto& t = j.at("tensors");
    for (const auto& [name, field] : LstmTensors::kFields)
        p.weights.*field = tensor_from_json(t.at(name), (shapes.*field).rows(), (shapes.*field).cols(), name);
    return p;
}

}  // namespace recon::neural
