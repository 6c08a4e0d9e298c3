#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "recon/neural.hpp"

using namespace recon;
using namespace recon::neural;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.hidden_size = 8;
    c.sequence_length = 6;
    c.embed_hour = c.embed_dow = c.embed_month = c.embed_year = 2;
    c.dense_size = 5;
    c.dropout = 0.0;
    c.batch_size = 32;
    return c;
}

std::vector<SequenceSample> random_samples(std::size_t n, int length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<SequenceSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = out[i];
        for (int k = 0; k < length; ++k) s.temperature_window.push_back(u(rng));
        s.calendar = {static_cast<int>(i % 24), static_cast<int>(i % 7), 1 + static_cast<int>(i % 12),
                      2015 + static_cast<int>(i % 2)};
        s.target_demand_scaled = u(rng);
        s.target_time = HourStamp::from_civil(2015, 1, 1) + static_cast<std::int64_t>(i);
    }
    return out;
}

}  // namespace

TEST(InitParams, Deterministic) {
    const auto a = init_params(tiny_config(), {2015, 2016}, 9);
    const auto b = init_params(tiny_config(), {2016, 2015}, 9);
    EXPECT_TRUE(a.weights == b.weights);
    EXPECT_FALSE(a.weights == init_params(tiny_config(), {2015, 2016}, 10).weights);
}

TEST(InitParams, RangesAndForgetBias) {
    const auto p = init_params(tiny_config(), {2015, 2016}, 1);
    const double bound = 1.0 / std::sqrt(8.0);
    EXPECT_LE(p.weights.gate_recurrent.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(p.weights.gate_input.cwiseAbs().maxCoeff(), bound);
    EXPECT_NEAR(bound, 0.3536, 1e-4);
    EXPECT_TRUE((p.weights.gate_bias.middleRows(8, 8).array() == 1.0).all());
    EXPECT_TRUE((p.weights.gate_bias.topRows(8).array() == 0.0).all());
    EXPECT_TRUE((p.weights.gate_bias.bottomRows(16).array() == 0.0).all());
}

TEST(InitParams, Shapes) {
    const auto p = init_params(tiny_config(), {2015, 2016, 2017}, 1);
    EXPECT_EQ(p.weights.embed_hour.cols(), 24);
    EXPECT_EQ(p.weights.embed_dow.cols(), 7);
    EXPECT_EQ(p.weights.embed_month.cols(), 12);
    EXPECT_EQ(p.weights.embed_year.cols(), 4);  // 3 years + reserved slot
    EXPECT_EQ(p.weights.gate_recurrent.rows(), 32);
    EXPECT_EQ(p.weights.dense1_weight.cols(), 8 + 2 + 2 + 2 + 2);
    EXPECT_EQ(p.year_slot(2016), 1);
    EXPECT_EQ(p.year_slot(1980), 3);
}

TEST(Forward, ZeroNetworkPredictsZero) {
    auto p = init_params(tiny_config(), {2015}, 1);
    p.weights = LstmTensors::zeros(p.shape);
    const auto s = random_samples(3, 6, 2);
    for (const double y : predict(p, s)) EXPECT_EQ(y, 0.0);
}

TEST(Forward, EvalModeIsPure) {
    auto cfg = tiny_config();
    cfg.dropout = 0.5;
    const auto p = init_params(cfg, {2015, 2016}, 3);
    const auto s = random_samples(50, 6, 4);
    const auto a = predict(p, s);
    EXPECT_EQ(a, predict(p, s));
    Rng rng(1);
    EXPECT_NEAR(forward(p, s[7], false, &rng).prediction_scaled, a[7], 1e-14);
}

TEST(Forward, BatchOrderAndSizeIndependence) {
    const auto p = init_params(tiny_config(), {2015, 2016}, 3);
    const auto s = random_samples(37, 6, 4);
    const auto whole = predict(p, s);
    const auto small = predict(p, s, 5);
    ASSERT_EQ(whole.size(), 37u);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_NEAR(small[i], whole[i], 1e-14);
        EXPECT_NEAR(forward(p, s[i], false, nullptr).prediction_scaled, whole[i], 1e-14);
    }
}

TEST(Forward, WrongWindowLength) {
    const auto p = init_params(tiny_config(), {2015}, 3);
    EXPECT_THROW(predict(p, random_samples(2, 5, 1)), DimensionMismatch);
}

TEST(Forward, DropoutVariesInTraining) {
    auto cfg = tiny_config();
    cfg.dropout = 0.5;
    const auto p = init_params(cfg, {2015, 2016}, 3);
    const auto s = random_samples(1, 6, 4);
    Rng rng(8);
    const double a = forward(p, s[0], true, &rng).prediction_scaled;
    bool differs = false;
    for (int i = 0; i < 10 && !differs; ++i) differs = forward(p, s[0], true, &rng).prediction_scaled != a;
    EXPECT_TRUE(differs);
}

TEST(MseLoss, Examples) {
    EXPECT_EQ(mse_loss(std::vector<double>{1, 2}, std::vector<double>{1, 2}), 0.0);
    EXPECT_EQ(mse_loss(std::vector<double>{0, 0}, std::vector<double>{3, 4}), 12.5);
    EXPECT_EQ(mse_loss(std::vector<double>{1}, std::vector<double>{0}), 1.0);
    EXPECT_THROW(mse_loss(std::vector<double>{1}, std::vector<double>{0, 1}), LengthMismatch);
}

TEST(Backward, ZeroLossGradient) {
    const auto p = init_params(tiny_config(), {2015, 2016}, 3);
    const auto s = random_samples(4, 6, 4);
    ForwardCache cache;
    forward(p, make_batch(p, s), false, nullptr, cache);
    const auto g = backward(p, cache, Eigen::RowVectorXd::Zero(4));
    for (const auto& [name, field] : LstmTensors::kFields) EXPECT_TRUE(((g.*field).array() == 0.0).all()) << name;
}

TEST(Backward, AbsentEmbeddingLevelsGetNoGradient) {
    const auto p = init_params(tiny_config(), {2015, 2016}, 3);
    auto s = random_samples(4, 6, 4);  // hours 0..3
    ForwardCache cache;
    forward(p, make_batch(p, s), false, nullptr, cache);
    const auto g = backward(p, cache, Eigen::RowVectorXd::Ones(4));
    for (int h = 4; h < 24; ++h) EXPECT_TRUE((g.embed_hour.col(h).array() == 0.0).all());
    EXPECT_GT(g.embed_hour.col(0).norm(), 0.0);
    EXPECT_TRUE((g.embed_year.col(2).array() == 0.0).all());
}

TEST(Backward, StaleCacheDetected) {
    auto p = init_params(tiny_config(), {2015}, 3);
    const auto s = random_samples(2, 6, 4);
    ForwardCache cache;
    EXPECT_THROW(backward(p, cache, Eigen::RowVectorXd::Ones(2)), StaleCache);
    forward(p, make_batch(p, s), false, nullptr, cache);
    auto state = AdamState::zeros_for(p);
    adam_step(p, backward(p, cache, Eigen::RowVectorXd::Ones(2)), state, 0.01);
    EXPECT_THROW(backward(p, cache, Eigen::RowVectorXd::Ones(2)), StaleCache);
}

TEST(Adam, FirstStepClosedForm) {
    for (const double g0 : {1.0, 1e-3, -250.0}) {
        auto p = init_params(tiny_config(), {2015}, 3);
        const double before = p.weights.dense2_bias(0, 0);
        auto g = p.weights.zeros_like();
        g.dense2_bias(0, 0) = g0;
        auto state = AdamState::zeros_for(p);
        adam_step(p, g, state, 0.009);
        const double expected = -0.009 * std::abs(g0) / (std::abs(g0) + 1e-8) * (g0 > 0 ? 1 : -1);
        EXPECT_NEAR(p.weights.dense2_bias(0, 0) - before, expected, 1e-15);
        EXPECT_NEAR(std::abs(p.weights.dense2_bias(0, 0) - before), 0.009, 1e-7);
    }
}

TEST(Adam, ZeroGradientIsFixedPoint) {
    auto p = init_params(tiny_config(), {2015}, 3);
    const auto before = p.weights;
    auto state = AdamState::zeros_for(p);
    adam_step(p, p.weights.zeros_like(), state, 0.009);
    EXPECT_TRUE(p.weights == before);
    EXPECT_EQ(p.version, 1u);
}

TEST(Sgd, Step) {
    auto p = init_params(tiny_config(), {2015}, 3);
    const double before = p.weights.dense2_bias(0, 0);
    auto g = p.weights.zeros_like();
    g.dense2_bias(0, 0) = 2.0;
    sgd_step(p, g, 0.1);
    EXPECT_DOUBLE_EQ(p.weights.dense2_bias(0, 0), before - 0.2);
}

TEST(PlateauScheduler, Examples) {
    PlateauScheduler improving(0.01, {0.5, 2, 1e-5});
    for (const double m : {5.0, 4.9, 4.8}) EXPECT_EQ(improving.step(m), 0.01);

    PlateauScheduler stalled(0.01, {0.5, 2, 1e-5});
    EXPECT_EQ(stalled.step(5.0), 0.01);
    EXPECT_EQ(stalled.step(5.0), 0.01);
    EXPECT_EQ(stalled.step(5.0), 0.005);

    PlateauScheduler floor(2e-5, {0.5, 1, 1e-5});
    floor.step(1.0);
    for (int i = 0; i < 10; ++i) floor.step(1.0);
    EXPECT_EQ(floor.learning_rate(), 1e-5);
}

TEST(Train, OneEpochOneTraceEntry) {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    const auto s = random_samples(64, 6, 4);
    const auto r = train(s, {}, cfg, {0, 1});
    ASSERT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.trace[0].epoch, 1);
    EXPECT_TRUE(std::isnan(r.trace[0].val_rmse_mw));
}

TEST(Train, Deterministic) {
    auto cfg = tiny_config();
    cfg.epochs = 3;
    cfg.dropout = 0.2;
    const auto s = random_samples(200, 6, 4);
    const std::span<const SequenceSample> all(s);
    const auto a = train(all.first(180), all.last(20), cfg, {0, 1000});
    const auto b = train(all.first(180), all.last(20), cfg, {0, 1000});
    EXPECT_TRUE(a.params.weights == b.params.weights);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        EXPECT_EQ(a.trace[i].train_loss, b.trace[i].train_loss);
        EXPECT_EQ(a.trace[i].val_rmse_mw, b.trace[i].val_rmse_mw);
    }
}

TEST(Train, UnseenYearSlotIsMeanOfTrainedYears) {
    auto cfg = tiny_config();
    cfg.epochs = 2;
    const auto r = train(random_samples(100, 6, 4), {}, cfg, {0, 1});
    const auto& e = r.params.weights.embed_year;
    ASSERT_EQ(e.cols(), 3);
    EXPECT_TRUE(e.col(2).isApprox(0.5 * (e.col(0) + e.col(1)), 1e-14));
}

TEST(Train, LearnsLinearResponse) {
    // demand = 100 T + 5000 + noise, T varying smoothly with a daily cycle.
    const double sigma = 100.0;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0, sigma);
    const int length = 6;
    const std::size_t n = 3000;
    std::vector<double> temp(n + length), demand(n + length);
    for (std::size_t i = 0; i < temp.size(); ++i) {
        temp[i] = 15 + 10 * std::sin(2 * M_PI * static_cast<double>(i) / 24.0) + 5 * std::sin(static_cast<double>(i) / 200.0);
        demand[i] = 100 * temp[i] + 5000 + noise(rng);
    }
    const ScalerParams ts{0, 30}, ds{3000, 8000};
    std::vector<SequenceSample> samples;
    for (std::size_t i = length - 1; i < temp.size(); ++i) {
        SequenceSample s;
        for (int k = length - 1; k >= 0; --k) s.temperature_window.push_back(features::apply_scaler(ts, temp[i - k]));
        s.calendar = features::extract_calendar(HourStamp::from_civil(2015, 1, 1) + static_cast<std::int64_t>(i));
        s.target_demand_scaled = features::apply_scaler(ds, demand[i]);
        s.target_time = HourStamp::from_civil(2015, 1, 1) + static_cast<std::int64_t>(i);
        samples.push_back(std::move(s));
    }
    auto cfg = tiny_config();
    cfg.sequence_length = length;
    cfg.epochs = 200;
    cfg.batch_size = 64;
    cfg.dropout = 0.0;
    cfg.learning_rate = 0.003;
    const std::span<const SequenceSample> all(samples);
    const auto r = train(all.first(2700), all.last(all.size() - 2700), cfg, ds);
    double best = INFINITY;
    for (const auto& e : r.trace) best = std::min(best, e.val_rmse_mw);
    EXPECT_LE(best, 1.5 * sigma);
}

TEST(GradCheck, DefaultTinyNetwork) {
    const auto r = grad_check({}, 1e-4);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_relative_error, 1e-4);
    EXPECT_EQ(r.groups.size(), LstmTensors::kFields.size());
}

TEST(GradCheck, ImpossibleToleranceFails) { EXPECT_FALSE(grad_check({}, 1e-12).passed); }

TEST(GradCheck, Deterministic) {
    GradCheckConfig c;
    c.seed = 99;
    EXPECT_EQ(grad_check(c, 1e-4).max_relative_error, grad_check(c, 1e-4).max_relative_error);
}

TEST(LstmJson, RoundTrip) {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    const auto s = random_samples(50, 6, 4);
    const auto r = train(s, {}, cfg, {0, 1});
    const auto back = lstm_from_json(nlohmann::json::parse(to_json(r.params).dump()));
    EXPECT_TRUE(back.weights == r.params.weights);
    EXPECT_EQ(back.years, r.params.years);
    EXPECT_EQ(predict(back, s), predict(r.params, s));
}

TEST(TrainConfigJson, RoundTripAndValidation) {
    auto c = tiny_config();
    c.scheduler = PlateauConfig{0.3, 4, 1e-6};
    const auto back = train_config_from_json(to_json(c));
    EXPECT_EQ(back.hidden_size, c.hidden_size);
    ASSERT_TRUE(back.scheduler);
    EXPECT_EQ(back.scheduler->patience, 4);
    c.epochs = 0;
    EXPECT_THROW(validate(c), ConfigError);
    c = tiny_config();
    c.dropout = 1.0;
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(TrainConfig, TableDefaults) {
    const TrainConfig c;
    EXPECT_EQ(c.learning_rate, 0.009);
    EXPECT_EQ(c.epochs, 1700);
    EXPECT_EQ(c.optimizer, Optimizer::Adam);
    EXPECT_EQ(c.sequence_length, 24);
    EXPECT_EQ(c.dropout, 0.2);
}
