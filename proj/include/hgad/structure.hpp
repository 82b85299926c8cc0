#pragma once

// Sensor series ingestion, sliding windows, and k-uniform nearest-neighbour
// hypergraph construction from hypernode embeddings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hgad/random.hpp"
#include "hgad/tensor.hpp"

namespace hgad {

/// n sensors observed over T steps. `values` is n x T.
struct SensorSeries {
    std::vector<std::string> names;
    Tensor values;
    std::optional<std::vector<int>> labels;

    std::size_t sensors() const { return values.rows(); }
    std::size_t steps() const { return values.cols(); }
    double at(std::size_t sensor, std::size_t t) const { return values(sensor, t); }

    /// Steps [begin, end) as a new series.
    SensorSeries slice(std::size_t begin, std::size_t end) const {
        if (begin >= end || end > steps()) throw DimensionError("series slice out of range");
        SensorSeries out;
        out.names = names;
        out.values = Tensor::matrix(sensors(), end - begin);
        for (std::size_t i = 0; i < sensors(); ++i)
            for (std::size_t t = begin; t < end; ++t) out.values(i, t - begin) = values(i, t);
        if (labels) out.labels.emplace(labels->begin() + begin, labels->begin() + end);
        return out;
    }
};

inline constexpr double kScaledClipLow = -0.5;
inline constexpr double kScaledClipHigh = 1.5;

/// Per-sensor min-max constants fitted on a training range.
class MinMaxScaler {
public:
    MinMaxScaler() = default;
    MinMaxScaler(std::vector<double> low, std::vector<double> high) : low_(std::move(low)), high_(std::move(high)) {
        if (low_.size() != high_.size()) throw DimensionError("scaler bounds differ in length");
    }

    /// Fits on steps [begin, end). Constant sensors are recorded as warnings.
    static MinMaxScaler fit(const SensorSeries& series, std::size_t begin, std::size_t end) {
        if (begin >= end || end > series.steps()) throw DimensionError("scaler training range out of bounds");
        MinMaxScaler s;
        for (std::size_t i = 0; i < series.sensors(); ++i) {
            double lo = series.at(i, begin), hi = lo;
            for (std::size_t t = begin; t < end; ++t) {
                lo = std::min(lo, series.at(i, t));
                hi = std::max(hi, series.at(i, t));
            }
            s.low_.push_back(lo);
            s.high_.push_back(hi);
            if (hi == lo) {
                const std::string name = i < series.names.size() ? series.names[i] : std::to_string(i);
                s.warnings_.push_back("sensor '" + name + "' is constant over the training range; scaled to 0");
            }
        }
        return s;
    }

    double scale(std::size_t sensor, double value) const {
        const double range = high_[sensor] - low_[sensor];
        if (range == 0.0) return 0.0;
        return std::clamp((value - low_[sensor]) / range, kScaledClipLow, kScaledClipHigh);
    }

    double unscale(std::size_t sensor, double value) const {
        return low_[sensor] + value * (high_[sensor] - low_[sensor]);
    }

    SensorSeries transform(const SensorSeries& series) const {
        if (series.sensors() != low_.size()) {
            throw DimensionError("scaler fitted on " + std::to_string(low_.size()) + " sensors, series has " +
                                 std::to_string(series.sensors()));
        }
        SensorSeries out = series;
        for (std::size_t i = 0; i < series.sensors(); ++i)
            for (std::size_t t = 0; t < series.steps(); ++t) out.values(i, t) = scale(i, series.at(i, t));
        return out;
    }

    const std::vector<double>& low() const { return low_; }
    const std::vector<double>& high() const { return high_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    std::vector<double> low_;
    std::vector<double> high_;
    std::vector<std::string> warnings_;
};

struct ScaledSeries {
    SensorSeries series;
    MinMaxScaler scaler;
};

inline ScaledSeries minmax_scale(const SensorSeries& series, std::size_t train_begin, std::size_t train_end) {
    MinMaxScaler scaler = MinMaxScaler::fit(series, train_begin, train_end);
    SensorSeries scaled = scaler.transform(series);
    return {std::move(scaled), std::move(scaler)};
}

/// History matrix F (n x w) of steps t-w..t-1 and the target column f(t).
/// `t` is a 0-based step index into the source series.
struct SensorWindow {
    std::size_t t = 0;
    Tensor features;
    std::vector<double> target;
};

inline SensorWindow window_at(const SensorSeries& series, std::size_t t, std::size_t w) {
    if (w == 0 || t < w || t >= series.steps()) {
        throw DimensionError("window at step " + std::to_string(t) + " with length " + std::to_string(w) +
                             " does not fit a series of " + std::to_string(series.steps()) + " steps");
    }
    const std::size_t n = series.sensors();
    SensorWindow win;
    win.t = t;
    win.features = Tensor::matrix(n, w);
    win.target.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) win.features(i, j) = series.at(i, t - w + j);
        win.target[i] = series.at(i, t);
    }
    return win;
}

/// Stride-1 windows; one per target step w..T-1, so T-w windows in total.
inline std::vector<SensorWindow> sliding_windows(const SensorSeries& series, std::size_t w) {
    if (w == 0) throw DimensionError("window length must be positive");
    if (series.steps() <= w) {
        throw DimensionError("series of " + std::to_string(series.steps()) + " steps is too short for window " +
                             std::to_string(w));
    }
    std::vector<SensorWindow> out;
    out.reserve(series.steps() - w);
    for (std::size_t t = w; t < series.steps(); ++t) out.push_back(window_at(series, t, w));
    return out;
}

/// Binary incidence structure with cached member/incidence lists.
class Hypergraph {
public:
    Hypergraph() = default;

    /// `incidence` is row-major n x m with entries in {0, 1}.
    Hypergraph(std::size_t nodes, std::size_t edges, std::vector<std::uint8_t> incidence)
        : n_(nodes), m_(edges), h_(std::move(incidence)) {
        if (h_.size() != n_ * m_) throw DimensionError("incidence size does not match n x m");
        for (auto v : h_) {
            if (v > 1) throw DimensionError("incidence entries must be 0 or 1");
        }
        members_.assign(m_, {});
        incident_.assign(n_, {});
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t p = 0; p < m_; ++p)
                if (h_[i * m_ + p]) {
                    members_[p].push_back(i);
                    incident_[i].push_back(p);
                }
    }

    static Hypergraph from_members(std::size_t nodes, const std::vector<std::vector<std::size_t>>& edges) {
        std::vector<std::uint8_t> h(nodes * edges.size(), 0);
        for (std::size_t p = 0; p < edges.size(); ++p)
            for (std::size_t i : edges[p]) {
                if (i >= nodes) throw DimensionError("hyperedge member out of range");
                h[i * edges.size() + p] = 1;
            }
        return Hypergraph(nodes, edges.size(), std::move(h));
    }

    std::size_t nodes() const { return n_; }
    std::size_t edges() const { return m_; }
    bool contains(std::size_t node, std::size_t edge) const { return h_[node * m_ + edge] != 0; }
    const std::vector<std::uint8_t>& incidence() const { return h_; }

    /// N_p: hypernodes in hyperedge p, ascending.
    const std::vector<std::size_t>& members(std::size_t edge) const { return members_[edge]; }
    /// N_i: hyperedges incident to hypernode i, ascending.
    const std::vector<std::size_t>& incident(std::size_t node) const { return incident_[node]; }

    std::size_t nonzeros() const {
        std::size_t nnz = 0;
        for (const auto& m : members_) nnz += m.size();
        return nnz;
    }

    bool operator==(const Hypergraph& other) const {
        return n_ == other.n_ && m_ == other.m_ && h_ == other.h_;
    }

private:
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    std::vector<std::uint8_t> h_;
    std::vector<std::vector<std::size_t>> members_;
    std::vector<std::vector<std::size_t>> incident_;
};

/// Hypernode-hyperedge incidence pairs in two orders, with softmax groups for each.
struct IncidencePairs {
    // Edge-major: grouped by hyperedge, used for node -> edge aggregation.
    std::vector<std::size_t> edge_of_edge_major;
    std::vector<std::size_t> node_of_edge_major;
    Groups edge_groups;
    // Node-major: grouped by hypernode, used for edge -> node aggregation.
    std::vector<std::size_t> node_of_node_major;
    std::vector<std::size_t> edge_of_node_major;
    Groups node_groups;
};

inline IncidencePairs incidence_pairs(const Hypergraph& g) {
    IncidencePairs out;
    for (std::size_t p = 0; p < g.edges(); ++p) {
        if (g.members(p).empty()) throw DimensionError("hyperedge " + std::to_string(p) + " has no members");
        std::vector<std::size_t> group;
        for (std::size_t i : g.members(p)) {
            group.push_back(out.edge_of_edge_major.size());
            out.edge_of_edge_major.push_back(p);
            out.node_of_edge_major.push_back(i);
        }
        out.edge_groups.push_back(std::move(group));
    }
    for (std::size_t i = 0; i < g.nodes(); ++i) {
        if (g.incident(i).empty()) {
            throw DimensionError("hypernode " + std::to_string(i) + " is not incident to any hyperedge");
        }
        std::vector<std::size_t> group;
        for (std::size_t p : g.incident(i)) {
            group.push_back(out.node_of_node_major.size());
            out.node_of_node_major.push_back(i);
            out.edge_of_node_major.push_back(p);
        }
        out.node_groups.push_back(std::move(group));
    }
    return out;
}

/// Euclidean distances between embedding rows.
inline Tensor pairwise_distances(const Tensor& embeddings) {
    const std::size_t n = embeddings.rows(), d = embeddings.cols();
    if (n < 2) throw DimensionError("pairwise_distances needs at least two hypernodes");
    if (!embeddings.all_finite()) throw NumericError("pairwise_distances: embedding table has non-finite entries");
    Tensor dist = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = embeddings(i, c) - embeddings(j, c);
                acc += diff * diff;
            }
            dist(i, j) = dist(j, i) = std::sqrt(acc);
        }
    return dist;
}

/// One hyperedge per seed hypernode: the seed plus its k nearest hypernodes.
/// Ties are broken by the lower hypernode index.
inline Hypergraph build_incidence(const Tensor& distances, std::size_t k) {
    const std::size_t n = distances.rows();
    if (distances.cols() != n) throw DimensionError("distance matrix must be square");
    if (k < 1 || k + 1 > n) {
        throw std::invalid_argument("k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n - 1) + "]");
    }
    std::vector<std::uint8_t> h(n * n, 0);
    std::vector<std::size_t> order(n);
    for (std::size_t seed = 0; seed < n; ++seed) {
        h[seed * n + seed] = 1;
        order.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != seed) order.push_back(j);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double da = distances(seed, a), db = distances(seed, b);
                              return da < db || (da == db && a < b);
                          });
        for (std::size_t r = 0; r < k; ++r) h[order[r] * n + seed] = 1;
    }
    return Hypergraph(n, n, std::move(h));
}

/// Rows drawn from N(0, 1/sqrt(d)).
inline Tensor init_embeddings(std::size_t n, std::size_t d, Rng& rng) {
    return gaussian({n, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
}

enum class PositionalMode { learned, sinusoidal, none };

inline Tensor init_positional(std::size_t n, std::size_t w, Rng& rng) { return gaussian({n, w}, 0.01, rng); }

/// Fixed sinusoidal table over the hypernode index: column pairs alternate sin and cos.
inline Tensor sinusoidal_positional(std::size_t n, std::size_t w) {
    Tensor pe = Tensor::matrix(n, w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double rate = std::pow(10000.0, static_cast<double>(2 * (j / 2)) / static_cast<double>(w));
            const double angle = static_cast<double>(i) / rate;
            pe(i, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

inline Tensor positional_encode(const Tensor& positional, const Tensor& features, bool enabled = true) {
    if (positional.shape() != features.shape()) {
        throw DimensionError("positional table " + shape_string(positional.shape()) + " does not match features " +
                             shape_string(features.shape()));
    }
    Tensor out = features;
    if (!enabled) return out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += positional[i];
    return out;
}

}  // namespace hgad
