#pragma once

// Run configuration (key=value files, dataset presets) and the end-to-end
// operations behind the command-line tool: train, detect, diagnose, recommend, ablate.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hgad/control.hpp"
#include "hgad/detection.hpp"
#include "hgad/diagnosis.hpp"
#include "hgad/io.hpp"
#include "hgad/model.hpp"
#include "hgad/structure.hpp"
#include "hgad/synthetic.hpp"
#include "hgad/variant.hpp"

namespace hgad {

struct DatasetPreset {
    std::string name;
    std::size_t sensors;
    std::size_t window;
    std::size_t k;
};

/// Per-dataset window length and neighbourhood size used for the benchmark datasets.
inline const std::vector<DatasetPreset>& dataset_presets() {
    static const std::vector<DatasetPreset> presets = {
        {"swat", 51, 30, 15}, {"wadi", 123, 30, 25}, {"smap", 25, 60, 7},
        {"msl", 55, 60, 10},  {"tep", 52, 30, 20},   {"hai", 59, 25, 20},
    };
    return presets;
}

inline const DatasetPreset& dataset_preset(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& p : dataset_presets())
        if (p.name == lower) return p;
    std::string known;
    for (const auto& p : dataset_presets()) known += (known.empty() ? "" : ", ") + p.name;
    throw ConfigError("unknown preset '" + name + "'; known presets: " + known);
}

struct RunConfig {
    std::string data;  // training CSV
    std::string test;  // test CSV
    std::string preset;
    ModelConfig model;
    TrainConfig train;
    std::size_t smoothing = kDefaultSmoothing;
    bool point_adjust = false;
    std::vector<std::string> variants;  // toggles applied to the model
    std::uint64_t seed = 0;
    std::string output_dir = ".";

    /// Sets one key from its textual value. Unknown keys are errors.
    void set(const std::string& key, const std::string& value) {
        const auto as_size = [&] {
            try {
                std::size_t used = 0;
                const long long v = std::stoll(value, &used);
                if (used != value.size() || v < 0) throw std::invalid_argument(value);
                return static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
            }
        };
        const auto as_double = [&] {
            try {
                std::size_t used = 0;
                const double v = std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
                return v;
            } catch (const std::exception&) {
                throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
            }
        };
        const auto as_bool = [&] {
            if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
            if (value == "false" || value == "0" || value == "off" || value == "no") return false;
            throw ConfigError("'" + key + "' expects true/false, got '" + value + "'");
        };
        if (key == "data") data = value;
        else if (key == "test") test = value;
        else if (key == "preset") apply_preset(value);
        else if (key == "window" || key == "w") model.window = as_size();
        else if (key == "k") model.k = as_size();
        else if (key == "dim" || key == "d") model.embedding_dim = as_size();
        else if (key == "pool_ratio") model.pool_ratio = as_double();
        else if (key == "supervised") model.supervised = as_bool();
        else if (key == "epochs") train.epochs = as_size();
        else if (key == "batch_size") train.batch_size = as_size();
        else if (key == "lr") train.lr = as_double();
        else if (key == "beta1") train.beta1 = as_double();
        else if (key == "beta2") train.beta2 = as_double();
        else if (key == "lr_patience") train.lr_halving_patience = as_size();
        else if (key == "early_stop") train.early_stop_patience = as_size();
        else if (key == "val_fraction") train.validation_fraction = as_double();
        else if (key == "smoothing") smoothing = as_size();
        else if (key == "point_adjust") point_adjust = as_bool();
        else if (key == "variant") set_variants(value);
        else if (key == "seed") seed = as_size();
        else if (key == "output_dir") output_dir = value;
        else throw ConfigError("unknown configuration key '" + key + "'");
    }

    void apply_preset(const std::string& name) {
        const DatasetPreset& p = dataset_preset(name);
        preset = p.name;
        model.window = p.window;
        model.k = p.k;
    }

    void set_variants(const std::string& list) {
        variants.clear();
        std::istringstream ss(list);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            apply_variant(Variant{}, item);  // rejects unknown names early
            variants.push_back(item);
        }
    }

    /// Model configuration for `sensors` sensors with the configured toggles applied.
    ModelConfig model_for(std::size_t sensors) const {
        ModelConfig c = model;
        c.sensors = sensors;
        Variant v;
        for (const auto& name : variants) v = apply_variant(v, name);
        c.variant = v;
        c.validate();
        return c;
    }

    TrainConfig train_config() const {
        TrainConfig t = train;
        t.seed = seed;
        t.validate();
        return t;
    }

    void validate(std::size_t sensors) const {
        model_for(sensors);
        train_config();
        if (smoothing == 0) throw ConfigError("smoothing window w_a must be positive");
    }
};

/// key = value lines; '#' starts a comment.
inline void parse_config(std::istream& in, RunConfig& cfg, const std::string& source = "<config>") {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline void load_config_file(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
    parse_config(in, cfg, path);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Forecasts for every window of a scaled series, time-major.
struct ForecastSet {
    std::vector<std::size_t> steps;
    TimeMatrix forecasts;
    TimeMatrix targets;
};

inline ForecastSet forecast_windows(const HgadModel& model, const std::vector<SensorWindow>& windows) {
    ForecastSet out;
    for (const auto& w : windows) {
        out.steps.push_back(w.t);
        out.forecasts.push_back(model.forecast(w));
        out.targets.push_back(w.target);
    }
    return out;
}

inline ForecastSet forecast_series(const HgadModel& model, const SensorSeries& scaled) {
    return forecast_windows(model, sliding_windows(scaled, model.config().window));
}

struct TrainRun {
    Checkpoint checkpoint;
    TrainResult result;
    std::vector<std::string> warnings;
};

/// Scales on the training series, trains, and calibrates the detector on the validation tail.
inline TrainRun train_run(const SensorSeries& raw, const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
    const ModelConfig mc = cfg.model_for(raw.sensors());
    const TrainConfig tc = cfg.train_config();
    ScaledSeries scaled = minmax_scale(raw, 0, raw.steps());
    HgadModel model(mc, cfg.seed);
    TrainRun run;
    run.warnings = scaled.scaler.warnings();
    run.result = train(model, scaled.series, tc, on_epoch);
    const WindowSplit split = split_windows(sliding_windows(scaled.series, mc.window), tc.validation_fraction);
    const ForecastSet val = forecast_windows(model, split.validation);
    DetectorState detector = calibrate(val.forecasts, val.targets, cfg.smoothing);
    run.checkpoint = Checkpoint{std::move(model), raw.names, std::move(scaled.scaler), std::move(detector)};
    return run;
}

struct DetectionRun {
    AnomalyTrace trace;
    std::vector<int> adjusted;             // point-adjusted verdicts, or the raw verdicts when disabled
    std::optional<std::vector<int>> truth;  // labels aligned with trace rows
    std::optional<Metrics> metrics;
};

inline SensorSeries scale_for(const Checkpoint& ck, const SensorSeries& raw) {
    if (raw.sensors() != ck.sensor_names.size()) {
        throw DataError("data has " + std::to_string(raw.sensors()) + " sensors, checkpoint expects " +
                        std::to_string(ck.sensor_names.size()));
    }
    for (std::size_t i = 0; i < raw.sensors(); ++i) {
        if (raw.names[i] != ck.sensor_names[i]) {
            throw DataError("column " + std::to_string(i) + " is '" + raw.names[i] + "', checkpoint expects '" +
                            ck.sensor_names[i] + "'");
        }
    }
    return ck.scaler.transform(raw);
}

inline DetectionRun detect_run(const Checkpoint& ck, const SensorSeries& raw, bool point_adjust) {
    if (!ck.detector) throw ConfigError("checkpoint has no calibrated detector");
    const SensorSeries scaled = scale_for(ck, raw);
    ForecastSet f = forecast_series(ck.model, scaled);
    DetectionRun run;
    run.trace = score_trace(f.forecasts, f.targets, f.steps, *ck.detector);
    run.adjusted = run.trace.verdict;
    if (raw.labels) {
        std::vector<int> truth;
        for (std::size_t t : run.trace.steps) truth.push_back((*raw.labels)[t]);
        if (point_adjust) run.adjusted = hgad::point_adjust(run.trace.verdict, truth);
        run.metrics = prf1(run.adjusted, truth);
        run.truth = std::move(truth);
    }
    return run;
}

/// Sensors to diagnose at one scored row: the top-1 sensor, or all sensors whose
/// score reaches the given quantile of that row's scores.
inline std::vector<std::size_t> diagnosis_roots(const std::vector<double>& row_scores, std::optional<double> quantile_level) {
    if (!quantile_level) return {root_sensor(row_scores)};
    const double cut = quantile(row_scores, *quantile_level);
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < row_scores.size(); ++i)
        if (row_scores[i] >= cut) roots.push_back(i);
    std::stable_sort(roots.begin(), roots.end(), [&](std::size_t a, std::size_t b) { return row_scores[a] > row_scores[b]; });
    return roots;
}

/// Builds the control problem at source step `t` for the named sensors.
inline ControlProblem control_problem(const Checkpoint& ck, const SensorSeries& scaled, std::size_t t,
                                      std::size_t horizon, const std::vector<std::size_t>& manipulated,
                                      std::optional<Bounds> bounds = std::nullopt) {
    if (!ck.detector) throw ConfigError("checkpoint has no calibrated detector");
    ControlProblem p;
    p.model = &ck.model;
    p.series = &scaled;
    p.detector = *ck.detector;
    p.start = t;
    p.horizon = horizon;
    p.manipulated = manipulated;
    if (bounds) {
        p.bounds = *bounds;
    } else {
        p.bounds.low.assign(manipulated.size(), 0.0);
        p.bounds.high.assign(manipulated.size(), 1.0);
    }
    p.validate();
    return p;
}

inline void write_control_report(std::ostream& os, const ControlPlan& plan, const Checkpoint& ck, std::size_t start) {
    os.precision(6);
    os << "control plan from step " << start << '\n';
    os << "predicted score before: " << plan.baseline << '\n';
    os << "predicted score after:  " << plan.fitness << '\n';
    os << "threshold:              " << plan.threshold << '\n';
    os << "feasible:               " << (plan.feasible ? "yes" : "no") << '\n';
    for (std::size_t s = 0; s < plan.sensors.size(); ++s) {
        const std::size_t i = plan.sensors[s];
        os << "set " << ck.sensor_names.at(i) << " to";
        for (double v : plan.values[s]) os << ' ' << ck.scaler.unscale(i, v);
        os << '\n';
    }
}

struct AblationRow {
    std::string variant;
    Metrics metrics;
    std::size_t epochs = 0;
};

/// Trains and evaluates each named variant on the same data and seed.
inline std::vector<AblationRow> ablate(const SensorSeries& train_raw, const SensorSeries& test_raw, const RunConfig& base,
                                       const std::vector<std::string>& names,
                                       const std::function<void(const std::string&)>& on_variant = {}) {
    if (!test_raw.labels) throw DataError("ablation needs a labelled test series");
    std::vector<AblationRow> rows;
    for (const auto& name : names) {
        if (on_variant) on_variant(name);
        RunConfig cfg = base;
        apply_variant(Variant{}, name);
        if (name != "full") cfg.variants.push_back(name);
        TrainRun tr = train_run(train_raw, cfg);
        DetectionRun dr = detect_run(tr.checkpoint, test_raw, base.point_adjust);
        rows.push_back({name, *dr.metrics, tr.result.history.size() - 1});
    }
    return rows;
}

}  // namespace hgad
