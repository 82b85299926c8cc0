#pragma once

// Offline corrective-setpoint search. A real-coded genetic algorithm looks for
// manipulated-sensor values that bring the model's aggregate anomaly score back
// under the detection threshold.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgad/detection.hpp"
#include "hgad/model.hpp"
#include "hgad/random.hpp"
#include "hgad/structure.hpp"

namespace hgad {

struct GaConfig {
    std::size_t population = 64;
    std::size_t generations = 100;
    std::size_t tournament = 3;
    double crossover_rate = 0.9;
    double mutation_rate = 0.1;
    double mutation_scale = 0.05;  // stddev as a fraction of each gene's range
    std::uint64_t seed = 0;

    void validate() const {
        if (population < 2) throw std::invalid_argument("GA population must be at least 2");
        if (tournament < 1) throw std::invalid_argument("tournament size must be at least 1");
        for (double r : {crossover_rate, mutation_rate}) {
            if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("GA rates must lie in [0, 1]");
        }
        if (!(mutation_scale >= 0.0)) throw std::invalid_argument("mutation scale must be non-negative");
    }
};

struct Bounds {
    std::vector<double> low;
    std::vector<double> high;

    std::size_t size() const { return low.size(); }

    void validate() const {
        if (low.size() != high.size() || low.empty()) throw std::invalid_argument("bounds must be non-empty and paired");
        for (std::size_t i = 0; i < low.size(); ++i) {
            if (!(low[i] < high[i])) throw std::invalid_argument("bound " + std::to_string(i) + " has low >= high");
        }
    }

    bool contains(std::span<const double> x) const {
        if (x.size() != low.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!(x[i] >= low[i] && x[i] <= high[i])) return false;
        return true;
    }
};

struct GaResult {
    std::vector<double> best;
    double best_fitness = std::numeric_limits<double>::infinity();
    std::vector<double> best_per_generation;  // best-so-far after each generation, index 0 = initial population
    std::vector<std::vector<double>> initial_population;
    std::vector<std::vector<double>> final_population;
};

/// Minimises `fitness` over the box `bounds`: uniform initialisation, tournament
/// selection, uniform crossover, clipped Gaussian mutation and one elite.
template <class Fitness>
GaResult ga_minimize(const Bounds& bounds, Fitness&& fitness, const GaConfig& cfg) {
    cfg.validate();
    bounds.validate();
    Rng rng = make_stream(cfg.seed, "ga");
    const std::size_t dim = bounds.size();

    using Individual = std::vector<double>;
    std::vector<Individual> pop(cfg.population, Individual(dim));
    for (auto& ind : pop)
        for (std::size_t j = 0; j < dim; ++j) ind[j] = uniform(rng, bounds.low[j], bounds.high[j]);

    std::vector<double> fit(pop.size());
    GaResult result;
    const auto evaluate = [&] {
        for (std::size_t i = 0; i < pop.size(); ++i) {
            fit[i] = fitness(std::span<const double>(pop[i]));
            if (fit[i] < result.best_fitness) {
                result.best_fitness = fit[i];
                result.best = pop[i];
            }
        }
    };
    const auto argmin = [&] { return static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin()); };
    const auto tournament = [&]() -> const Individual& {
        std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pop.size() - 1)(rng);
        for (std::size_t r = 1; r < cfg.tournament; ++r) {
            const std::size_t c = std::uniform_int_distribution<std::size_t>(0, pop.size() - 1)(rng);
            if (fit[c] < fit[pick] || (fit[c] == fit[pick] && c < pick)) pick = c;
        }
        return pop[pick];
    };

    result.initial_population = pop;
    evaluate();
    result.best_per_generation.push_back(result.best_fitness);

    for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
        std::vector<Individual> next;
        next.reserve(pop.size());
        next.push_back(pop[argmin()]);
        while (next.size() < pop.size()) {
            const Individual& a = tournament();
            const Individual& b = tournament();
            Individual child = a;
            if (uniform(rng, 0.0, 1.0) < cfg.crossover_rate) {
                for (std::size_t j = 0; j < dim; ++j)
                    if (uniform(rng, 0.0, 1.0) < 0.5) child[j] = b[j];
            }
            for (std::size_t j = 0; j < dim; ++j) {
                if (uniform(rng, 0.0, 1.0) < cfg.mutation_rate) {
                    const double span = bounds.high[j] - bounds.low[j];
                    child[j] = std::clamp(child[j] + normal(rng, 0.0, cfg.mutation_scale * span), bounds.low[j],
                                          bounds.high[j]);
                }
            }
            next.push_back(std::move(child));
        }
        pop = std::move(next);
        evaluate();
        result.best_per_generation.push_back(result.best_fitness);
    }
    result.final_population = pop;
    return result;
}

/// Which sensors to override, over which future steps, and the model/threshold to judge by.
struct ControlProblem {
    const HgadModel* model = nullptr;
    const SensorSeries* series = nullptr;  // scaled
    DetectorState detector;
    std::size_t start = 0;  // first planned step (0-based source index)
    std::size_t horizon = 1;
    std::vector<std::size_t> manipulated;
    Bounds bounds;  // one (low, high) per manipulated sensor, scaled units

    void validate() const {
        if (!model || !series) throw std::invalid_argument("control problem needs a model and a series");
        const std::size_t w = model->config().window;
        if (horizon == 0) throw std::invalid_argument("control horizon must be positive");
        if (start < w || start + horizon > series->steps()) {
            throw std::invalid_argument("planning steps [" + std::to_string(start) + ", " +
                                        std::to_string(start + horizon) + ") need " + std::to_string(w) +
                                        " steps of history inside a series of " + std::to_string(series->steps()));
        }
        if (manipulated.empty()) throw std::invalid_argument("at least one manipulated sensor is required");
        for (std::size_t s : manipulated) {
            if (s >= series->sensors()) throw std::invalid_argument("manipulated sensor " + std::to_string(s) + " is invalid");
        }
        if (bounds.size() != manipulated.size()) throw std::invalid_argument("one bound pair per manipulated sensor");
        bounds.validate();
    }

    /// Per-gene bounds for a candidate laid out sensor-major (sensor s, step h at s*horizon + h).
    Bounds gene_bounds() const {
        Bounds b;
        for (std::size_t s = 0; s < manipulated.size(); ++s)
            for (std::size_t h = 0; h < horizon; ++h) {
                b.low.push_back(bounds.low[s]);
                b.high.push_back(bounds.high[s]);
            }
        return b;
    }

    /// The values actually observed over the horizon, in candidate layout.
    std::vector<double> observed() const {
        std::vector<double> out;
        for (std::size_t s : manipulated)
            for (std::size_t h = 0; h < horizon; ++h) out.push_back(series->at(s, start + h));
        return out;
    }
};

/// Maximum smoothed anomaly score over the horizon after substituting the candidate values.
inline double fitness(std::span<const double> candidate, const ControlProblem& problem) {
    const HgadModel& model = *problem.model;
    const SensorSeries& series = *problem.series;
    const std::size_t n = series.sensors(), w = model.config().window, h = problem.horizon;
    if (candidate.size() != problem.manipulated.size() * h) {
        throw DimensionError("candidate has " + std::to_string(candidate.size()) + " values, expected " +
                             std::to_string(problem.manipulated.size() * h));
    }
    if (!problem.gene_bounds().contains(candidate)) throw std::invalid_argument("candidate lies outside its bounds");

    // Columns start-w .. start+h-1 with the planned values written in.
    Tensor block = Tensor::matrix(n, w + h);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < w + h; ++c) block(i, c) = series.at(i, problem.start - w + c);
    for (std::size_t s = 0; s < problem.manipulated.size(); ++s)
        for (std::size_t j = 0; j < h; ++j) block(problem.manipulated[s], w + j) = candidate[s * h + j];

    std::vector<double> maxima;
    maxima.reserve(h);
    Tensor features = Tensor::matrix(n, w);
    for (std::size_t j = 0; j < h; ++j) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < w; ++c) features(i, c) = block(i, j + c);
        const std::vector<double> predicted = model.forecast(features);
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double dev = std::abs(block(i, w + j) - predicted[i]);
            worst = std::max(worst, (dev - problem.detector.stats.median[i]) / problem.detector.stats.iqr[i]);
        }
        maxima.push_back(worst);
    }
    const std::vector<double> smoothed = aggregate_maxima(maxima, problem.detector.smoothing);
    return *std::max_element(smoothed.begin(), smoothed.end());
}

struct ControlPlan {
    std::vector<std::size_t> sensors;
    std::vector<std::vector<double>> values;  // per manipulated sensor, one value per horizon step (scaled)
    double fitness = 0.0;
    double baseline = 0.0;  // fitness of the observed values
    double threshold = 0.0;
    bool feasible = false;  // fitness <= threshold
    std::vector<double> best_per_generation;
};

inline ControlPlan ga_optimize(const ControlProblem& problem, const GaConfig& ga) {
    problem.validate();
    const GaResult r = ga_minimize(
        problem.gene_bounds(), [&](std::span<const double> x) { return fitness(x, problem); }, ga);
    ControlPlan plan;
    plan.sensors = problem.manipulated;
    for (std::size_t s = 0; s < problem.manipulated.size(); ++s) {
        plan.values.emplace_back(r.best.begin() + static_cast<std::ptrdiff_t>(s * problem.horizon),
                                 r.best.begin() + static_cast<std::ptrdiff_t>((s + 1) * problem.horizon));
    }
    plan.fitness = r.best_fitness;
    const std::vector<double> seen = problem.observed();
    plan.baseline = problem.gene_bounds().contains(seen) ? fitness(seen, problem)
                                                         : std::numeric_limits<double>::quiet_NaN();
    plan.threshold = problem.detector.threshold;
    plan.feasible = plan.fitness <= plan.threshold;
    plan.best_per_generation = r.best_per_generation;
    return plan;
}

}  // namespace hgad
