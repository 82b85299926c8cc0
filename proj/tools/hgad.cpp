// hgad: train, detect, diagnose, recommend, ablate and synth subcommands.
//
// Exit codes: 0 success, 1 usage, 2 configuration error, 3 data error, 4 runtime/numeric error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hgad/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hgad;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kRuntime = 4 };

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;  // key=value
    std::map<std::string, std::string> flags;
};

void add_common(CLI::App* cmd, Common& c, const std::vector<std::pair<std::string, std::string>>& keys) {
    cmd->add_option("-c,--config", c.config_file, "key=value configuration file");
    cmd->add_option("--set", c.overrides, "override a configuration key (key=value), repeatable");
    for (const auto& [key, help] : keys) {
        cmd->add_option_function<std::string>(
            "--" + key, [&c, key](const std::string& v) { c.flags[key] = v; }, help);
    }
}

RunConfig resolve(const Common& c) {
    RunConfig cfg;
    if (const char* env = std::getenv("HGAD_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
    if (!c.config_file.empty()) load_config_file(c.config_file, cfg);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    // Preset first so explicit window/k flags override it.
    if (auto it = c.flags.find("preset"); it != c.flags.end()) cfg.set("preset", it->second);
    for (const auto& [k, v] : c.flags)
        if (k != "preset") cfg.set(k, v);
    return cfg;
}

fs::path out_path(const RunConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.output_dir);
    return fs::path(cfg.output_dir) / name;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw DataError("cannot write '" + p.string() + "'");
    return os;
}

std::size_t sensor_index(const std::vector<std::string>& names, const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw DataError("unknown sensor '" + name + "'");
}

const std::vector<std::pair<std::string, std::string>> kModelKeys = {
    {"preset", "dataset preset (swat, wadi, smap, msl, tep, hai)"},
    {"window", "sliding window length w"},
    {"k", "hyperedge neighbourhood size"},
    {"dim", "embedding dimension d"},
    {"pool_ratio", "pooling ratio p_r"},
    {"epochs", "maximum training epochs"},
    {"batch_size", "mini-batch size"},
    {"lr", "Adam learning rate"},
    {"variant", "comma-separated ablation toggles"},
    {"smoothing", "moving-average window w_a"},
    {"seed", "run seed"},
    {"output_dir", "output directory (default $HGAD_OUTPUT_DIR or .)"},
};

int cmd_train(const Common& common, const std::string& checkpoint_name) {
    RunConfig cfg = resolve(common);
    if (cfg.data.empty()) throw ConfigError("train needs --data or 'data' in the configuration");
    const SensorSeries raw = read_series_csv(cfg.data);
    cfg.validate(raw.sensors());
    std::ofstream history = open_out(out_path(cfg, "history.csv"));
    history << "epoch,train_loss,validation_loss,best_validation_loss,lr\n";
    history.precision(17);
    TrainRun run = train_run(raw, cfg, [&](const EpochRecord& r) {
        history << r.epoch << ',' << r.train_loss << ',' << r.validation_loss << ',' << r.best_validation_loss << ','
                << r.lr << '\n';
        std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.validation_loss << '\n';
    });
    for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
    const fs::path ck = out_path(cfg, checkpoint_name);
    save_checkpoint(ck.string(), run.checkpoint);
    std::cout << "best epoch " << run.result.best_epoch << ", threshold " << run.checkpoint.detector->threshold
              << "\ncheckpoint written to " << ck.string() << '\n';
    return kOk;
}

int cmd_detect(const Common& common, const std::string& checkpoint) {
    RunConfig cfg = resolve(common);
    const std::string data = cfg.test.empty() ? cfg.data : cfg.test;
    if (data.empty()) throw ConfigError("detect needs --data with the series to score");
    const Checkpoint ck = load_checkpoint(checkpoint);
    const DetectionRun run = detect_run(ck, read_series_csv(data), cfg.point_adjust);
    {
        std::ofstream os = open_out(out_path(cfg, "detection.csv"));
        write_detection_csv(os, run.trace, ck.sensor_names, run.adjusted);
    }
    {
        std::ofstream os = open_out(out_path(cfg, "sensor_scores.csv"));
        write_sensor_scores_csv(os, run.trace, ck.sensor_names);
    }
    std::size_t flagged = 0;
    for (int v : run.trace.verdict) flagged += static_cast<std::size_t>(v);
    std::cout << "scored " << run.trace.steps.size() << " steps, threshold " << run.trace.threshold << ", flagged "
              << flagged << '\n';
    if (run.metrics) {
        const Metrics& m = *run.metrics;
        std::cout << (cfg.point_adjust ? "point-adjusted " : "") << "precision " << m.precision << " recall "
                  << m.recall << " F1 " << m.f1 << (m.degenerate ? " (degenerate denominators)" : "") << '\n';
    }
    return kOk;
}

int cmd_diagnose(const Common& common, const std::string& checkpoint, const std::string& scores_csv, std::size_t t,
                 std::size_t hops, std::optional<double> level) {
    RunConfig cfg = resolve(common);
    const Checkpoint ck = load_checkpoint(checkpoint);
    const SensorSeries report = read_series_csv(scores_csv);
    if (report.names.empty() || report.names.front() != "t") throw DataError(scores_csv + ": first column must be 't'");
    std::optional<std::size_t> row;
    for (std::size_t r = 0; r < report.steps(); ++r)
        if (static_cast<std::size_t>(report.at(0, r)) == t) row = r;
    if (!row) throw DataError("step " + std::to_string(t) + " is not in " + scores_csv);
    std::vector<double> scores;
    for (std::size_t i = 1; i < report.sensors(); ++i) scores.push_back(report.at(i, *row));
    if (scores.size() != ck.sensor_names.size()) throw DataError("score report does not match the checkpoint's sensors");

    for (std::size_t root : diagnosis_roots(scores, level)) {
        const ComputationHypergraph c = expand(ck.model.hypergraph(), root, hops, scores);
        const std::string stem = "diagnosis_t" + std::to_string(t) + "_" + ck.sensor_names[root];
        {
            std::ofstream os = open_out(out_path(cfg, stem + ".txt"));
            write_tree(os, c, ck.sensor_names);
        }
        {
            std::ofstream os = open_out(out_path(cfg, stem + ".json"));
            write_adjacency_json(os, c, ck.sensor_names);
        }
        {
            std::ofstream os = open_out(out_path(cfg, stem + ".dot"));
            write_dot(os, c, ck.sensor_names);
        }
        write_tree(std::cout, c, ck.sensor_names);
    }
    return kOk;
}

struct RecommendArgs {
    std::string checkpoint;
    std::size_t t = 0;
    std::size_t horizon = 1;
    std::vector<std::string> sensors;
    std::vector<double> low, high;
    GaConfig ga;
};

int cmd_recommend(const Common& common, RecommendArgs args) {
    RunConfig cfg = resolve(common);
    const std::string data = cfg.test.empty() ? cfg.data : cfg.test;
    if (data.empty()) throw ConfigError("recommend needs --data with the series around step t");
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const SensorSeries scaled = scale_for(ck, read_series_csv(data));
    std::vector<std::size_t> manipulated;
    for (const auto& s : args.sensors) manipulated.push_back(sensor_index(ck.sensor_names, s));
    std::optional<Bounds> bounds;
    if (!args.low.empty() || !args.high.empty()) bounds = Bounds{args.low, args.high};
    args.ga.seed = cfg.seed;
    const ControlProblem problem = control_problem(ck, scaled, args.t, args.horizon, manipulated, bounds);
    const ControlPlan plan = ga_optimize(problem, args.ga);
    {
        std::ofstream os = open_out(out_path(cfg, "control_plan.txt"));
        write_control_report(os, plan, ck, args.t);
    }
    write_control_report(std::cout, plan, ck, args.t);
    return kOk;
}

int cmd_ablate(const Common& common, std::vector<std::string> names) {
    RunConfig cfg = resolve(common);
    if (cfg.data.empty() || cfg.test.empty()) throw ConfigError("ablate needs --data (training) and --test (labelled)");
    if (names.empty()) names = variant_names();
    const SensorSeries train_raw = read_series_csv(cfg.data);
    const SensorSeries test_raw = read_series_csv(cfg.test);
    cfg.validate(train_raw.sensors());
    const auto rows = ablate(train_raw, test_raw, cfg, names, [](const std::string& n) { std::cerr << "variant " << n << '\n'; });
    std::ofstream os = open_out(out_path(cfg, "ablation.csv"));
    os << "variant,precision,recall,f1,epochs\n";
    std::cout << "variant              precision  recall     F1\n";
    for (const auto& r : rows) {
        os << r.variant << ',' << r.metrics.precision << ',' << r.metrics.recall << ',' << r.metrics.f1 << ','
           << r.epochs << '\n';
        std::printf("%-20s %-10.4f %-10.4f %.4f\n", r.variant.c_str(), r.metrics.precision, r.metrics.recall,
                    r.metrics.f1);
    }
    return kOk;
}

int cmd_synth(const Common& common) {
    RunConfig cfg = resolve(common);
    const SyntheticSpec spec = synthetic_benchmark(cfg.seed);
    const SyntheticData data = generate_synthetic(spec);
    write_series_csv(out_path(cfg, "train.csv").string(), data.series.slice(0, kBenchmarkTrainSteps));
    write_series_csv(out_path(cfg, "test.csv").string(), data.series.slice(kBenchmarkTrainSteps, spec.steps));
    std::ofstream os = open_out(out_path(cfg, "injections.csv"));
    os << "test_start,length,kind,sensors\n";
    for (const auto& inj : spec.injections) {
        os << inj.start - kBenchmarkTrainSteps << ',' << inj.length << ',' << anomaly_kind_name(inj.kind) << ',';
        for (std::size_t k = 0; k < inj.sensors.size(); ++k) os << (k ? ";" : "") << data.series.names[inj.sensors[k]];
        os << '\n';
    }
    std::cout << "wrote train.csv, test.csv and injections.csv to " << cfg.output_dir << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hypergraph anomaly detection, diagnosis and corrective control for multi-sensor series"};
    app.require_subcommand(1);

    Common common;
    std::string checkpoint = "model.json";
    std::string data_flag_help = "sensor CSV (header row, optional 'label' column)";
    const auto model_keys = [&] {
        auto keys = kModelKeys;
        keys.emplace_back("data", data_flag_help);
        return keys;
    }();

    auto* train = app.add_subcommand("train", "train a model and calibrate its detector");
    add_common(train, common, model_keys);
    train->add_option("--checkpoint", checkpoint, "checkpoint file name inside the output directory");

    auto* detect = app.add_subcommand("detect", "score a series and write detection.csv / sensor_scores.csv");
    add_common(detect, common, {{"data", data_flag_help}, {"output_dir", "output directory"}, {"point_adjust", "apply point adjustment (true/false)"}});
    detect->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

    std::string scores_csv;
    std::size_t t = 0, hops = 2;
    std::optional<double> level;
    auto* diagnose = app.add_subcommand("diagnose", "root-cause report for one scored step");
    add_common(diagnose, common, {{"output_dir", "output directory"}});
    diagnose->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    diagnose->add_option("--scores", scores_csv, "sensor_scores.csv written by detect")->required();
    diagnose->add_option("--t", t, "scored step to diagnose")->required();
    diagnose->add_option("--hops", hops, "expansion depth");
    diagnose->add_option_function<double>("--quantile", [&](double q) { level = q; },
                                          "diagnose every sensor at or above this score quantile (default: top-1)");

    RecommendArgs rec;
    auto* recommend = app.add_subcommand("recommend", "search corrective values for manipulated sensors");
    add_common(recommend, common, {{"data", data_flag_help}, {"output_dir", "output directory"}, {"seed", "GA seed"}});
    recommend->add_option("--checkpoint", rec.checkpoint, "trained checkpoint")->required();
    recommend->add_option("--t", rec.t, "first planned step")->required();
    recommend->add_option("--sensors", rec.sensors, "manipulated sensor names")->required()->delimiter(',');
    recommend->add_option("--horizon", rec.horizon, "planned steps");
    recommend->add_option("--low", rec.low, "lower bound per sensor, scaled units")->delimiter(',');
    recommend->add_option("--high", rec.high, "upper bound per sensor, scaled units")->delimiter(',');
    recommend->add_option("--population", rec.ga.population, "GA population");
    recommend->add_option("--generations", rec.ga.generations, "GA generations");
    recommend->add_option("--tournament", rec.ga.tournament, "tournament size");
    recommend->add_option("--crossover", rec.ga.crossover_rate, "crossover rate");
    recommend->add_option("--mutation", rec.ga.mutation_rate, "per-gene mutation rate");
    recommend->add_option("--mutation-scale", rec.ga.mutation_scale, "mutation stddev as a fraction of the range");

    std::vector<std::string> variants;
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare variants on the same data");
    auto ablate_keys = model_keys;
    ablate_keys.emplace_back("test", "labelled test CSV");
    ablate_keys.emplace_back("point_adjust", "apply point adjustment (true/false)");
    add_common(ablate_cmd, common, ablate_keys);
    ablate_cmd->add_option("--variants", variants, "variants to compare (default: all)")->delimiter(',');

    auto* synth = app.add_subcommand("synth", "write the seeded synthetic benchmark");
    add_common(synth, common, {{"seed", "benchmark seed"}, {"output_dir", "output directory"}});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train) return cmd_train(common, checkpoint);
        if (*detect) return cmd_detect(common, checkpoint);
        if (*diagnose) return cmd_diagnose(common, checkpoint, scores_csv, t, hops, level);
        if (*recommend) return cmd_recommend(common, rec);
        if (*ablate_cmd) return cmd_ablate(common, variants);
        if (*synth) return cmd_synth(common);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}
