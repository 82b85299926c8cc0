#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hgad/model.hpp"
#include "oracle.hpp"

using namespace hgad;

namespace {

ModelConfig small_config(std::size_t n, std::size_t w, std::size_t d, std::size_t k, double ratio = 0.5) {
    ModelConfig cfg;
    cfg.sensors = n;
    cfg.window = w;
    cfg.embedding_dim = d;
    cfg.k = k;
    cfg.pool_ratio = ratio;
    return cfg;
}

SensorSeries sine_series(std::size_t n, std::size_t steps, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.01);
    SensorSeries s;
    s.values = Tensor::matrix(n, steps);
    for (std::size_t i = 0; i < n; ++i) {
        s.names.push_back("s" + std::to_string(i));
        const double p1 = 20 + 40 * u(rng), p2 = 60 + 80 * u(rng), lag = 6.28 * u(rng);
        for (std::size_t t = 0; t < steps; ++t) {
            const double x = static_cast<double>(t);
            s.values(i, t) = 0.5 + 0.3 * std::sin(2 * M_PI * x / p1 + lag) + 0.15 * std::sin(2 * M_PI * x / p2) + noise(rng);
        }
    }
    return s;
}

SensorSeries constant_series(std::size_t n, std::size_t steps, double value) {
    SensorSeries s;
    s.values = Tensor({n, steps}, value);
    for (std::size_t i = 0; i < n; ++i) s.names.push_back("c" + std::to_string(i));
    return s;
}

Tensor random_window(std::size_t n, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return oracle::random_tensor({n, w}, rng, 0.0, 1.0);
}

void expect_forecast_matches_oracle(const HgadModel& model, const Tensor& window, double tol) {
    const auto got = model.forecast(window);
    const auto want = oracle::forecast(model, window);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "sensor " << i;
}

}  // namespace

TEST(Forecast, MatchesScalarOracle) {
    for (const auto& [cfg, seed] : {std::pair{small_config(6, 5, 4, 2), 1u}, std::pair{small_config(5, 4, 3, 3, 1.0), 2u},
                                    std::pair{small_config(7, 6, 3, 2, 0.3), 3u}}) {
        const HgadModel model(cfg, seed);
        expect_forecast_matches_oracle(model, random_window(cfg.sensors, cfg.window, seed), 1e-10);
    }
}

TEST(Forecast, TwoSensorHandInstance) {
    const HgadModel model(small_config(2, 3, 2, 1), 4);
    expect_forecast_matches_oracle(model, Tensor::matrix({{0.1, 0.4, 0.7}, {0.9, 0.2, 0.5}}), 1e-12);
}

TEST(Forecast, ZeroHeadGivesBias) {
    HgadModel model(small_config(4, 5, 3, 2), 5);
    for (double& v : model.parameters().head_weight.data()) v = 0.0;
    model.parameters().head_bias = Tensor::matrix({{0.1, -0.2, 0.3, 0.4}});
    model.parameters().head_bias.set_requires_grad(true);
    EXPECT_EQ(model.forecast(random_window(4, 5, 5)), (std::vector<double>{0.1, -0.2, 0.3, 0.4}));
}

TEST(Forecast, OutputShapeIsSensorCount) {
    for (std::size_t k = 1; k < 6; ++k)
        for (double ratio : {0.1, 0.5, 1.0}) {
            const HgadModel model(small_config(6, 4, 3, k, ratio), k);
            EXPECT_EQ(model.forecast(random_window(6, 4, k)).size(), 6u);
        }
    const HgadModel model(small_config(3, 4, 2, 1), 6);
    EXPECT_THROW(model.forecast(random_window(3, 5, 6)), DimensionError);
}

TEST(Forecast, InvariantToHyperedgeOrder) {
    HgadModel model(small_config(6, 5, 4, 2, 1.0), 7);
    const Tensor window = random_window(6, 5, 7);
    const auto before = model.forecast(window);
    std::vector<std::vector<std::size_t>> edges;
    for (std::size_t p = 6; p-- > 0;) edges.push_back(model.hypergraph().members(p));
    std::rotate(edges.begin(), edges.begin() + 2, edges.end());
    model.set_hypergraph(Hypergraph::from_members(6, edges));
    const auto after = model.forecast(window);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(after[i], before[i], 1e-12);
}

TEST(Classify, ZeroHeadGivesOneHalfAndBiasIsMonotone) {
    ModelConfig cfg = small_config(4, 5, 3, 2);
    cfg.supervised = true;
    HgadModel model(cfg, 8);
    const SensorWindow win{5, random_window(4, 5, 8), {}};
    for (double& v : model.parameters().cls_weight.data()) v = 0.0;
    EXPECT_EQ(model.classify(win), 0.5);
    double previous = 0.0;
    for (double bias : {-2.0, -0.5, 0.0, 0.1, 3.0}) {
        model.parameters().cls_bias[0] = bias;
        const double p = model.classify(win);
        EXPECT_GT(p, previous);
        EXPECT_LT(p, 1.0);
        previous = p;
    }
}

TEST(Classify, RequiresSupervisedMode) {
    const HgadModel model(small_config(4, 5, 3, 2), 9);
    EXPECT_THROW(model.classify(SensorWindow{5, random_window(4, 5, 9), {}}), ConfigError);
}

TEST(ModelConfig, ValidationMessages) {
    ModelConfig cfg = small_config(4, 5, 3, 4);
    try {
        cfg.validate();
        FAIL() << "k = n accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("k=4"), std::string::npos);
    }
    cfg.k = 2;
    cfg.pool_ratio = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.pool_ratio = 1.2;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.pool_ratio = 1.0;
    EXPECT_NO_THROW(cfg.validate());
    cfg.variant.two_graph = true;
    cfg.k = 99;
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Parameters, ShapesFollowConfiguration) {
    ModelParameters p = ModelParameters::init(small_config(5, 7, 3, 2), 10);
    EXPECT_EQ(p.embeddings.shape(), (Shape{5, 3}));
    EXPECT_EQ(p.positional.shape(), (Shape{5, 7}));
    EXPECT_EQ(p.head_weight.shape(), (Shape{15, 5}));
    EXPECT_EQ(p.head_bias.shape(), (Shape{1, 5}));
    EXPECT_EQ(p.cls_weight.shape(), (Shape{15, 1}));
    for (const auto& t : p.all()) EXPECT_TRUE(t.tensor->all_finite()) << t.name;
}

TEST(Training, GradientsMatchFiniteDifferences) {
    for (bool supervised : {false, true}) {
        ModelConfig cfg = small_config(4, 5, 4, 2);
        cfg.supervised = supervised;
        HgadModel model(cfg, 11);
        SensorSeries series = sine_series(4, 12, 11);
        series.labels = std::vector<int>{0, 0, 0, 0, 0, 1, 0, 1, 1, 0, 0, 1};
        const auto windows = sliding_windows(series, 5);
        std::vector<const SensorWindow*> batch;
        for (const auto& w : windows) batch.push_back(&w);
        batch_gradient(model, batch, series);
        const auto loss = [&] {
            Tape tape;
            const BoundParameters b = model.bind_frozen(tape);
            double total = 0.0;
            for (const auto* w : batch) total += detail::window_loss(model, b, *w, series).value()[0];
            return total / static_cast<double>(batch.size());
        };
        const auto check = oracle::finite_difference(model.parameters().trainable(), loss);
        EXPECT_LT(check.worst, 1e-4) << check.worst_name << (supervised ? " (supervised)" : "");
        EXPECT_GT(check.checked, 0u);
    }
}

TEST(Training, ConstantSeriesIsLearnedViaBias) {
    HgadModel model(small_config(4, 5, 4, 2), 12);
    TrainConfig tc;
    tc.epochs = 20;
    const TrainResult r = train(model, constant_series(4, 2000, 0.5), tc);
    EXPECT_LT(r.history[r.best_epoch].best_validation_loss, 1e-6);
}

TEST(Training, BestSoFarIsMonotoneAndRunsAreReproducible) {
    const SensorSeries series = sine_series(4, 400, 13);
    TrainConfig tc;
    tc.epochs = 8;
    tc.lr = 0.01;
    tc.seed = 3;
    HgadModel a(small_config(4, 5, 4, 2), 13), b(small_config(4, 5, 4, 2), 13);
    const TrainResult ra = train(a, series, tc);
    const TrainResult rb = train(b, series, tc);
    ASSERT_EQ(ra.history.size(), rb.history.size());
    for (std::size_t e = 0; e < ra.history.size(); ++e) {
        EXPECT_EQ(ra.history[e].validation_loss, rb.history[e].validation_loss);
        EXPECT_EQ(ra.history[e].train_loss == rb.history[e].train_loss || e == 0, true);
        if (e > 0) EXPECT_LE(ra.history[e].best_validation_loss, ra.history[e - 1].best_validation_loss);
        EXPECT_EQ(ra.history[e].epoch, e);
    }
    EXPECT_EQ(a.parameters().head_weight.values(), b.parameters().head_weight.values());
    // The returned model is the best-validation one.
    const auto windows = split_windows(sliding_windows(series, 5), tc.validation_fraction).validation;
    EXPECT_NEAR(evaluate_loss(a, windows, series), ra.history[ra.best_epoch].validation_loss, 1e-12);
}

TEST(Training, SineMixtureValidationErrorDropsTenfold) {
    HgadModel model(small_config(8, 10, 16, 3), 14);
    TrainConfig tc;
    tc.epochs = 30;
    const TrainResult r = train(model, sine_series(8, 2000, 14), tc);
    EXPECT_LE(r.history[r.best_epoch].best_validation_loss * 10.0, r.history[0].validation_loss);
}

TEST(Training, SensorMismatchAndBadConfigAreErrors) {
    HgadModel model(small_config(4, 5, 4, 2), 15);
    TrainConfig tc;
    EXPECT_THROW(train(model, sine_series(3, 100, 1), tc), DimensionError);
    tc.batch_size = 0;
    EXPECT_THROW(train(model, sine_series(4, 100, 1), tc), ConfigError);
}

TEST(SplitWindows, LastFractionIsValidation) {
    const auto windows = sliding_windows(sine_series(2, 105, 1), 5);
    const WindowSplit s = split_windows(windows, 0.2);
    EXPECT_EQ(s.train.size(), 80u);
    EXPECT_EQ(s.validation.size(), 20u);
    EXPECT_EQ(s.validation.front().t, s.train.back().t + 1);
}
