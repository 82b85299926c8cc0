#pragma once

// Seeded synthetic plant: coupled sinusoids with small noise and labelled
// anomaly injections. Used for desk-scale end-to-end checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgad/random.hpp"
#include "hgad/structure.hpp"

namespace hgad {

enum class AnomalyKind { spike, drift, stuck, decoupling };

inline const char* anomaly_kind_name(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::spike: return "spike";
        case AnomalyKind::drift: return "drift";
        case AnomalyKind::stuck: return "stuck";
        case AnomalyKind::decoupling: return "decoupling";
    }
    return "spike";
}

inline AnomalyKind anomaly_kind_from(const std::string& s) {
    if (s == "spike") return AnomalyKind::spike;
    if (s == "drift") return AnomalyKind::drift;
    if (s == "stuck") return AnomalyKind::stuck;
    if (s == "decoupling") return AnomalyKind::decoupling;
    throw std::invalid_argument("unknown anomaly kind '" + s + "' (spike, drift, stuck, decoupling)");
}

struct Injection {
    std::size_t start = 0;  // 0-based first step
    std::size_t length = 1;
    std::vector<std::size_t> sensors;
    AnomalyKind kind = AnomalyKind::spike;
    double magnitude = 1.0;  // in units of the sensor's clean amplitude
};

struct SyntheticSpec {
    std::size_t sensors = 8;
    std::size_t steps = 4000;
    std::vector<double> periods = {50.0, 90.0, 140.0};  // latent drivers shared across sensors
    double noise = 0.02;
    std::vector<Injection> injections;
    std::uint64_t seed = 0;

    void validate() const {
        if (sensors < 2) throw std::invalid_argument("synthetic spec needs at least 2 sensors");
        if (steps < 2) throw std::invalid_argument("synthetic spec needs at least 2 steps");
        if (periods.empty()) throw std::invalid_argument("synthetic spec needs at least one latent period");
        if (!(noise >= 0.0)) throw std::invalid_argument("noise must be non-negative");
        for (const auto& inj : injections) {
            if (inj.length == 0 || inj.start + inj.length > steps) {
                throw std::invalid_argument("injection [" + std::to_string(inj.start) + ", " +
                                            std::to_string(inj.start + inj.length) + ") lies outside the series");
            }
            if (inj.sensors.empty()) throw std::invalid_argument("injection names no sensors");
            for (std::size_t s : inj.sensors)
                if (s >= sensors) throw std::invalid_argument("injection sensor " + std::to_string(s) + " is invalid");
        }
    }
};

struct SyntheticData {
    SensorSeries series;  // with injections and labels
    Tensor clean;         // same plant without injections, n x T
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng = make_stream(spec.seed, "synthetic");
    const std::size_t n = spec.sensors, T = spec.steps, L = spec.periods.size();

    // Each sensor mixes the latent drivers with its own weights and phase lags.
    std::vector<std::vector<double>> weight(n, std::vector<double>(L)), lag(n, std::vector<double>(L));
    std::vector<double> offset(n);
    for (std::size_t i = 0; i < n; ++i) {
        offset[i] = uniform(rng, -1.0, 1.0);
        for (std::size_t l = 0; l < L; ++l) {
            weight[i][l] = uniform(rng, 0.3, 1.0) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
            lag[i][l] = uniform(rng, 0.0, 0.5);
        }
    }
    SyntheticData out;
    out.clean = Tensor::matrix(n, T);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < T; ++t) {
            double v = offset[i];
            for (std::size_t l = 0; l < L; ++l)
                v += weight[i][l] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.periods[l] + lag[i][l]);
            out.clean(i, t) = v;
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < T; ++t) out.clean(i, t) += normal(rng, 0.0, spec.noise);

    std::vector<double> lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        lo[i] = hi[i] = out.clean(i, 0);
        for (std::size_t t = 0; t < T; ++t) {
            lo[i] = std::min(lo[i], out.clean(i, t));
            hi[i] = std::max(hi[i], out.clean(i, t));
        }
    }

    SensorSeries& s = out.series;
    for (std::size_t i = 0; i < n; ++i) s.names.push_back("s" + std::to_string(i));
    s.values = out.clean;
    s.labels = std::vector<int>(T, 0);
    for (const Injection& inj : spec.injections) {
        for (std::size_t i : inj.sensors) {
            const double amp = hi[i] - lo[i];
            const double mid = 0.5 * (hi[i] + lo[i]);
            for (std::size_t j = 0; j < inj.length; ++j) {
                const std::size_t t = inj.start + j;
                double& v = s.values(i, t);
                switch (inj.kind) {
                    case AnomalyKind::spike: v += inj.magnitude * amp; break;
                    case AnomalyKind::drift:
                        v += inj.magnitude * amp * static_cast<double>(j + 1) / static_cast<double>(inj.length);
                        break;
                    case AnomalyKind::stuck: v = hi[i] + (inj.magnitude - 1.0) * amp; break;
                    case AnomalyKind::decoupling: v = 2.0 * mid - out.clean(i, t); break;
                }
            }
        }
        std::fill(s.labels->begin() + static_cast<std::ptrdiff_t>(inj.start),
                  s.labels->begin() + static_cast<std::ptrdiff_t>(inj.start + inj.length), 1);
    }
    return out;
}

/// The standard desk-scale benchmark: 8 sensors, 4000 steps, anomaly-free first
/// half, six ~120-step anomalies of mixed kinds in the second half.
inline SyntheticSpec synthetic_benchmark(std::uint64_t seed = 7) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.injections = {
        {2150, 120, {2}, AnomalyKind::spike, 0.5},
        {2450, 120, {5}, AnomalyKind::drift, 0.8},
        {2750, 120, {1}, AnomalyKind::stuck, 1.0},
        {3050, 120, {6}, AnomalyKind::decoupling, 1.0},
        {3350, 120, {0, 3}, AnomalyKind::spike, -0.5},
        {3650, 120, {7}, AnomalyKind::drift, -0.8},
    };
    return spec;
}

/// Step where the benchmark's anomaly-free training segment ends.
inline constexpr std::size_t kBenchmarkTrainSteps = 2000;

}  // namespace hgad
