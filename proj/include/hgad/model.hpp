#pragma once

// Full forecasting model: learned hypergraph, positional table, encoder-decoder
// and fully connected forecast / classification heads, plus the training loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgad/conv.hpp"
#include "hgad/hierarchy.hpp"
#include "hgad/random.hpp"
#include "hgad/structure.hpp"
#include "hgad/tensor.hpp"
#include "hgad/variant.hpp"

namespace hgad {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
    std::size_t sensors = 0;
    std::size_t window = 30;
    std::size_t embedding_dim = 128;
    std::size_t k = 15;
    double pool_ratio = 0.5;
    Variant variant;
    bool supervised = false;

    std::size_t effective_k() const { return variant.two_graph ? 1 : k; }

    void validate() const {
        if (sensors < 2) throw ConfigError("at least 2 sensors are required, got " + std::to_string(sensors));
        if (window == 0) throw ConfigError("window length w must be positive");
        if (embedding_dim == 0) throw ConfigError("embedding dimension d must be positive");
        if (effective_k() < 1 || effective_k() >= sensors) {
            throw ConfigError("k=" + std::to_string(effective_k()) + " must satisfy 1 <= k < n=" +
                              std::to_string(sensors) + "; lower k or add sensors");
        }
        if (!(pool_ratio > 0.0 && pool_ratio <= 1.0)) {
            throw ConfigError("pooling ratio p_r=" + std::to_string(pool_ratio) + " must lie in (0, 1]");
        }
    }
};

struct ModelParameters {
    Tensor embeddings;  // n x d
    Tensor positional;  // n x w; trainable only in learned mode
    HgcnnParams conv;
    PoolParams pool;
    UnpoolParams unpool;
    Tensor head_weight;  // (n*d) x n
    Tensor head_bias;    // 1 x n
    Tensor cls_weight;   // (n*d) x 1
    Tensor cls_bias;     // 1 x 1

    static ModelParameters init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Rng rng = make_stream(seed, "init");
        const std::size_t n = cfg.sensors, d = cfg.embedding_dim, w = cfg.window;
        ModelParameters p;
        p.embeddings = init_embeddings(n, d, rng);
        p.positional = init_positional(n, w, rng);
        if (cfg.variant.positional == PositionalMode::sinusoidal) {
            p.positional = sinusoidal_positional(n, w);
        } else if (cfg.variant.positional == PositionalMode::none) {
            p.positional = Tensor::matrix(n, w);
        }
        p.conv = HgcnnParams::init(d, w, cfg.variant.use_embeddings, rng);
        p.pool = PoolParams::init(d, cfg.variant.use_embeddings, cfg.pool_ratio, rng);
        p.unpool = UnpoolParams::init(d, cfg.variant.use_embeddings, rng);
        p.head_weight = glorot({n * d, n}, n * d, n, rng);
        p.head_bias = Tensor::matrix(1, n);
        p.head_bias.set_requires_grad(true);
        p.cls_weight = glorot({n * d, 1}, n * d, 1, rng);
        p.cls_bias = Tensor::matrix(1, 1);
        p.cls_bias.set_requires_grad(true);
        return p;
    }

    /// Every tensor that appears in a checkpoint, in a fixed order.
    std::vector<NamedTensor> all() {
        return {{"embeddings", &embeddings}, {"positional", &positional},  {"W1", &conv.w1},
                {"W2", &conv.w2},            {"W3", &conv.w3},              {"W4", &conv.w4},
                {"W5", &conv.w5},            {"theta_p", &pool.theta},      {"W6", &pool.w6},
                {"W7", &pool.w7},            {"W8", &pool.w8},              {"W9", &unpool.w9},
                {"W10", &unpool.w10},        {"W11", &unpool.w11},          {"W12", &unpool.w12},
                {"head_weight", &head_weight}, {"head_bias", &head_bias},  {"cls_weight", &cls_weight},
                {"cls_bias", &cls_bias}};
    }

    /// Tensors the optimizer updates.
    std::vector<NamedTensor> trainable() {
        std::vector<NamedTensor> out;
        for (const auto& t : all())
            if (t.tensor->requires_grad()) out.push_back(t);
        return out;
    }
};

struct BoundParameters {
    Var embeddings;
    Var positional;
    HgedVars hged;
    Var head_weight, head_bias, cls_weight, cls_bias;
};

struct ForwardPass {
    HgedOutput hged;
    Var features;  // positional-encoded input
    Var gated;     // z_i (.) x_v_i, n x d
    Var forecast;  // 1 x n
    Var probability;  // 1 x 1, supervised head
};

class HgadModel {
public:
    HgadModel() = default;

    HgadModel(ModelConfig config, std::uint64_t seed)
        : config_(std::move(config)), params_(ModelParameters::init(config_, seed)) {
        rebuild_hypergraph();
    }

    HgadModel(ModelConfig config, ModelParameters params, Hypergraph graph)
        : config_(std::move(config)), params_(std::move(params)) {
        config_.validate();
        set_hypergraph(std::move(graph));
    }

    const ModelConfig& config() const { return config_; }
    ModelParameters& parameters() { return params_; }
    const ModelParameters& parameters() const { return params_; }
    const Hypergraph& hypergraph() const { return graph_; }

    /// Recomputes the k-uniform hypergraph from the current embeddings.
    void rebuild_hypergraph() {
        set_hypergraph(build_incidence(pairwise_distances(params_.embeddings), config_.effective_k()));
    }

    void set_hypergraph(Hypergraph graph) {
        if (graph.nodes() != config_.sensors) throw DimensionError("hypergraph size does not match sensor count");
        pairs_ = incidence_pairs(graph);
        graph_ = std::move(graph);
    }

    BoundParameters bind_trainable(Tape& tape) {
        ModelParameters& p = params_;
        BoundParameters b;
        b.embeddings = tape.leaf(p.embeddings);
        b.positional = config_.variant.positional == PositionalMode::learned ? tape.leaf(p.positional)
                                                                              : tape.view(p.positional);
        b.hged = {HgcnnVars::bind(tape, p.conv), PoolVars::bind(tape, p.pool), UnpoolVars::bind(tape, p.unpool)};
        b.head_weight = tape.leaf(p.head_weight);
        b.head_bias = tape.leaf(p.head_bias);
        b.cls_weight = tape.leaf(p.cls_weight);
        b.cls_bias = tape.leaf(p.cls_bias);
        return b;
    }

    BoundParameters bind_frozen(Tape& tape) const {
        const ModelParameters& p = params_;
        BoundParameters b;
        b.embeddings = tape.view(p.embeddings);
        b.positional = tape.view(p.positional);
        b.hged.conv = {tape.view(p.conv.w1), tape.view(p.conv.w2), tape.view(p.conv.w3), tape.view(p.conv.w4),
                       tape.view(p.conv.w5)};
        b.hged.pool = {tape.view(p.pool.theta), tape.view(p.pool.w6), tape.view(p.pool.w7), tape.view(p.pool.w8)};
        b.hged.unpool = {tape.view(p.unpool.w9), tape.view(p.unpool.w10), tape.view(p.unpool.w11),
                         tape.view(p.unpool.w12)};
        b.head_weight = tape.view(p.head_weight);
        b.head_bias = tape.view(p.head_bias);
        b.cls_weight = tape.view(p.cls_weight);
        b.cls_bias = tape.view(p.cls_bias);
        return b;
    }

    /// Records one window on the tape.
    ForwardPass forward(const BoundParameters& b, const Tensor& features) const {
        Tape& tape = b.embeddings.tape();
        if (features.rows() != config_.sensors || features.cols() != config_.window) {
            throw DimensionError("window features " + shape_string(features.shape()) + " do not match n x w = " +
                                 std::to_string(config_.sensors) + "x" + std::to_string(config_.window));
        }
        ForwardPass fp;
        fp.features = tape.view(features);
        if (config_.variant.positional != PositionalMode::none) fp.features = add(fp.features, b.positional);
        fp.hged = hged_forward(graph_, pairs_, fp.features, b.embeddings, b.hged, config_.pool_ratio, config_.variant);
        fp.gated = mul(b.embeddings, fp.hged.x_v);
        const Var flat = reshape(fp.gated, {1, config_.sensors * config_.embedding_dim});
        fp.forecast = add(matmul(flat, b.head_weight), b.head_bias);
        if (config_.supervised) fp.probability = sigmoid(add(matmul(flat, b.cls_weight), b.cls_bias));
        return fp;
    }

    std::vector<double> forecast(const SensorWindow& window) const { return forecast(window.features); }

    std::vector<double> forecast(const Tensor& features) const {
        Tape tape;
        const BoundParameters b = bind_frozen(tape);
        const ForwardPass fp = forward(b, features);
        return fp.forecast.value().values();
    }

    /// Probability that the window's target step is anomalous.
    double classify(const SensorWindow& window) const {
        if (!config_.supervised) throw ConfigError("classify needs a model configured for supervised mode");
        Tape tape;
        const BoundParameters b = bind_frozen(tape);
        return forward(b, window.features).probability.value()[0];
    }

private:
    ModelConfig config_;
    ModelParameters params_;
    Hypergraph graph_;
    IncidencePairs pairs_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 48;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.99;
    std::size_t lr_halving_patience = 10;
    std::size_t early_stop_patience = 25;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs == 0) throw ConfigError("epochs must be positive");
        if (batch_size == 0) throw ConfigError("batch size must be positive");
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
        if (lr_halving_patience == 0 || early_stop_patience == 0) throw ConfigError("patience values must be positive");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
            throw ConfigError("validation fraction must lie in (0, 1)");
        }
    }
};

struct EpochRecord {
    std::size_t epoch = 0;  // 0 is the untrained model
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double best_validation_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

/// Chronological split of windows: the last `fraction` of them is validation.
struct WindowSplit {
    std::vector<SensorWindow> train;
    std::vector<SensorWindow> validation;
};

inline WindowSplit split_windows(std::vector<SensorWindow> windows, double fraction) {
    const auto count = windows.size();
    const auto val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
    if (val == 0 || val >= count) {
        throw ConfigError("series yields " + std::to_string(count) + " windows, too few for a train/validation split");
    }
    WindowSplit s;
    s.train.assign(std::make_move_iterator(windows.begin()),
                   std::make_move_iterator(windows.end() - static_cast<std::ptrdiff_t>(val)));
    s.validation.assign(std::make_move_iterator(windows.end() - static_cast<std::ptrdiff_t>(val)),
                        std::make_move_iterator(windows.end()));
    return s;
}

/// Label of the window's target step; supervised mode only.
inline double window_label(const SensorSeries& series, const SensorWindow& w) {
    if (!series.labels) throw ConfigError("supervised training needs a label column");
    return static_cast<double>((*series.labels)[w.t]);
}

namespace detail {

inline Var window_loss(const HgadModel& model, const BoundParameters& b, const SensorWindow& w,
                       const SensorSeries& series) {
    Tape& tape = b.embeddings.tape();
    const ForwardPass fp = model.forward(b, w.features);
    if (model.config().supervised) {
        return binary_cross_entropy(fp.probability, tape.constant(Tensor({1, 1}, window_label(series, w))));
    }
    return mean_squared_error(fp.forecast, tape.constant(Tensor({1, w.target.size()}, w.target)));
}

}  // namespace detail

/// Mean per-window loss over a set of windows, without gradients.
inline double evaluate_loss(const HgadModel& model, const std::vector<SensorWindow>& windows,
                            const SensorSeries& series) {
    double total = 0.0;
    constexpr std::size_t kChunk = 64;
    for (std::size_t begin = 0; begin < windows.size(); begin += kChunk) {
        Tape tape;
        const BoundParameters b = model.bind_frozen(tape);
        for (std::size_t i = begin; i < std::min(windows.size(), begin + kChunk); ++i) {
            total += detail::window_loss(model, b, windows[i], series).value()[0];
        }
    }
    return total / static_cast<double>(windows.size());
}

/// Batch loss (mean over windows) and its gradient written into the model parameters.
inline double batch_gradient(HgadModel& model, std::span<const SensorWindow* const> batch, const SensorSeries& series) {
    Tape tape;
    const BoundParameters b = model.bind_trainable(tape);
    std::vector<Var> losses;
    losses.reserve(batch.size());
    for (const SensorWindow* w : batch) losses.push_back(detail::window_loss(model, b, *w, series));
    const Var loss = scale(add_all(losses), 1.0 / static_cast<double>(batch.size()));
    tape.backward(loss);
    return loss.value()[0];
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam training with per-epoch hypergraph rebuild, validation-driven lr halving
/// and early stopping. The model ends with its best-validation parameters.
inline TrainResult train(HgadModel& model, const SensorSeries& series, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (series.sensors() != model.config().sensors) {
        throw DimensionError("series has " + std::to_string(series.sensors()) + " sensors, model expects " +
                             std::to_string(model.config().sensors));
    }
    WindowSplit split = split_windows(sliding_windows(series, model.config().window), cfg.validation_fraction);
    Rng batch_rng = make_stream(cfg.seed, "batching");

    AdamState adam;
    adam.lr = cfg.lr;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;

    TrainResult result;
    model.rebuild_hypergraph();
    double best = evaluate_loss(model, split.validation, series);
    HgadModel best_model = model;
    result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), best, best, adam.lr});
    if (on_epoch) on_epoch(result.history.back());

    std::vector<const SensorWindow*> order;
    for (const auto& w : split.train) order.push_back(&w);
    std::size_t since_best = 0, since_halving = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        model.rebuild_hypergraph();
        std::shuffle(order.begin(), order.end(), batch_rng);
        double train_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const double loss =
                batch_gradient(model, std::span<const SensorWindow* const>(order.data() + begin, end - begin), series);
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batches));
            }
            auto params = model.parameters().trainable();
            adam_step(params, adam);
            train_total += loss;
            ++batches;
        }
        const double val = evaluate_loss(model, split.validation, series);
        if (!std::isfinite(val)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        if (val < best) {
            best = val;
            best_model = model;
            result.best_epoch = epoch;
            since_best = 0;
            since_halving = 0;
        } else {
            ++since_best;
            if (++since_halving >= cfg.lr_halving_patience) {
                adam.lr *= 0.5;
                since_halving = 0;
            }
        }
        result.history.push_back({epoch, train_total / static_cast<double>(batches), val, best, adam.lr});
        if (on_epoch) on_epoch(result.history.back());
        if (since_best >= cfg.early_stop_patience) {
            result.stopped_early = true;
            break;
        }
    }
    model = best_model;
    return result;
}

}  // namespace hgad
