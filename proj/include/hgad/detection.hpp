#pragma once

// Forecast-error anomaly scoring: absolute deviations, median/IQR
// normalisation, smoothed max aggregate, validation-max threshold, point
// adjustment and precision/recall/F1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgad/tensor.hpp"

namespace hgad {

inline constexpr double kIqrFloor = 1e-6;
inline constexpr std::size_t kDefaultSmoothing = 10;

/// Time-major matrix: rows are time points, columns are sensors.
using TimeMatrix = std::vector<std::vector<double>>;

inline TimeMatrix deviations(const TimeMatrix& forecasts, const TimeMatrix& targets) {
    if (forecasts.size() != targets.size()) throw DimensionError("deviations: forecast and target lengths differ");
    TimeMatrix dev(forecasts.size());
    for (std::size_t t = 0; t < forecasts.size(); ++t) {
        if (forecasts[t].size() != targets[t].size()) throw DimensionError("deviations: sensor counts differ");
        dev[t].resize(forecasts[t].size());
        for (std::size_t i = 0; i < forecasts[t].size(); ++i) dev[t][i] = std::abs(targets[t][i] - forecasts[t][i]);
    }
    return dev;
}

/// Quantile with linear interpolation between order statistics (position q * (n - 1)).
inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

struct RobustStats {
    std::vector<double> median;
    std::vector<double> iqr;  // floored at kIqrFloor
};

inline RobustStats robust_stats(const TimeMatrix& dev) {
    if (dev.size() < 4) {
        throw std::invalid_argument("robust_stats needs at least 4 validation points, got " + std::to_string(dev.size()));
    }
    const std::size_t n = dev.front().size();
    RobustStats s;
    std::vector<double> column(dev.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < dev.size(); ++t) column[t] = dev[t].at(i);
        s.median.push_back(quantile(column, 0.5));
        s.iqr.push_back(std::max(quantile(column, 0.75) - quantile(column, 0.25), kIqrFloor));
    }
    return s;
}

/// A_i(t) = (dev_i(t) - median_i) / iqr_i.
inline TimeMatrix scores(const TimeMatrix& dev, const RobustStats& stats) {
    TimeMatrix out(dev.size());
    for (std::size_t t = 0; t < dev.size(); ++t) {
        if (dev[t].size() != stats.median.size()) throw DimensionError("scores: sensor count mismatch");
        out[t].resize(dev[t].size());
        for (std::size_t i = 0; i < dev[t].size(); ++i) out[t][i] = (dev[t][i] - stats.median[i]) / stats.iqr[i];
    }
    return out;
}

inline std::vector<double> max_per_time(const TimeMatrix& sensor_scores) {
    std::vector<double> out;
    out.reserve(sensor_scores.size());
    for (const auto& row : sensor_scores) out.push_back(*std::max_element(row.begin(), row.end()));
    return out;
}

/// Trailing moving average of the per-time maxima; the first points average
/// whatever history is available.
inline std::vector<double> aggregate_maxima(const std::vector<double>& maxima, std::size_t window = kDefaultSmoothing) {
    if (window == 0) throw std::invalid_argument("moving-average window must be positive");
    std::vector<double> out(maxima.size());
    for (std::size_t t = 0; t < maxima.size(); ++t) {
        const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
        double total = 0.0;
        for (std::size_t j = first; j <= t; ++j) total += maxima[j];
        out[t] = total / static_cast<double>(t + 1 - first);
    }
    return out;
}

inline std::vector<double> aggregate(const TimeMatrix& sensor_scores, std::size_t window = kDefaultSmoothing) {
    return aggregate_maxima(max_per_time(sensor_scores), window);
}

inline double threshold(const std::vector<double>& validation_aggregate) {
    if (validation_aggregate.empty()) throw std::invalid_argument("threshold needs at least one validation score");
    return *std::max_element(validation_aggregate.begin(), validation_aggregate.end());
}

/// Strict rule: a point is anomalous iff its aggregate exceeds the threshold.
inline std::vector<int> verdicts(const std::vector<double>& aggregate_scores, double th) {
    std::vector<int> out;
    out.reserve(aggregate_scores.size());
    for (double a : aggregate_scores) out.push_back(a > th ? 1 : 0);
    return out;
}

/// Marks a whole ground-truth segment as detected when any point inside it was flagged.
inline std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw DimensionError("point_adjust: prediction and truth lengths differ");
    std::vector<int> out = pred;
    std::size_t t = 0;
    while (t < truth.size()) {
        if (!truth[t]) {
            ++t;
            continue;
        }
        std::size_t end = t;
        bool hit = false;
        while (end < truth.size() && truth[end]) hit = hit || pred[end] != 0, ++end;
        if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(t), out.begin() + static_cast<std::ptrdiff_t>(end), 1);
        t = end;
    }
    return out;
}

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    bool degenerate = false;  // some denominator was zero and its ratio reported as 0
};

inline Metrics prf1(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw DimensionError("prf1: prediction and truth lengths differ");
    Metrics m;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        if (pred[t] && truth[t]) ++m.tp;
        else if (pred[t]) ++m.fp;
        else if (truth[t]) ++m.fn;
    }
    const auto ratio = [&](std::size_t num, std::size_t den) {
        if (den == 0) {
            m.degenerate = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    if (m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
        m.degenerate = true;
    }
    return m;
}

/// Everything the detector needs at test time: robust statistics and threshold fixed on validation.
struct DetectorState {
    RobustStats stats;
    double threshold = 0.0;
    std::size_t smoothing = kDefaultSmoothing;
};

/// Per-time detection outcome for a scored segment of a series.
struct AnomalyTrace {
    std::vector<std::size_t> steps;  // source step index of each row
    TimeMatrix deviation;
    TimeMatrix sensor_scores;  // A_i(t)
    std::vector<double> aggregate;
    double threshold = 0.0;
    std::vector<int> verdict;

    std::size_t top_sensor(std::size_t row) const {
        const auto& s = sensor_scores.at(row);
        return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    }
};

/// Fits robust statistics and the threshold on validation forecasts.
inline DetectorState calibrate(const TimeMatrix& forecasts, const TimeMatrix& targets,
                               std::size_t smoothing = kDefaultSmoothing) {
    DetectorState state;
    state.smoothing = smoothing;
    const TimeMatrix dev = deviations(forecasts, targets);
    state.stats = robust_stats(dev);
    state.threshold = threshold(aggregate(scores(dev, state.stats), smoothing));
    return state;
}

inline AnomalyTrace score_trace(const TimeMatrix& forecasts, const TimeMatrix& targets, std::vector<std::size_t> steps,
                                const DetectorState& state) {
    AnomalyTrace trace;
    trace.steps = std::move(steps);
    trace.deviation = deviations(forecasts, targets);
    trace.sensor_scores = scores(trace.deviation, state.stats);
    trace.aggregate = aggregate(trace.sensor_scores, state.smoothing);
    trace.threshold = state.threshold;
    trace.verdict = verdicts(trace.aggregate, state.threshold);
    return trace;
}

/// CSV rows: t, top sensor, aggregate score, threshold, verdict, adjusted verdict.
inline void write_detection_csv(std::ostream& os, const AnomalyTrace& trace, const std::vector<std::string>& names,
                                const std::vector<int>& adjusted) {
    os << "t,top_sensor,score,threshold,verdict,adjusted_verdict\n";
    os.precision(17);
    for (std::size_t r = 0; r < trace.steps.size(); ++r) {
        const std::size_t top = trace.top_sensor(r);
        os << trace.steps[r] << ',' << (top < names.size() ? names[top] : std::to_string(top)) << ','
           << trace.aggregate[r] << ',' << trace.threshold << ',' << trace.verdict[r] << ','
           << (adjusted.empty() ? trace.verdict[r] : adjusted[r]) << '\n';
    }
}

/// Per-sensor A_i(t) matrix, one row per scored step.
inline void write_sensor_scores_csv(std::ostream& os, const AnomalyTrace& trace, const std::vector<std::string>& names) {
    os << 't';
    for (const auto& n : names) os << ',' << n;
    os << '\n';
    os.precision(17);
    for (std::size_t r = 0; r < trace.steps.size(); ++r) {
        os << trace.steps[r];
        for (double a : trace.sensor_scores[r]) os << ',' << a;
        os << '\n';
    }
}

}  // namespace hgad
