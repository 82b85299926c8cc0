#pragma once

// CSV ingestion/emission for sensor series and the JSON checkpoint format.

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgad/detection.hpp"
#include "hgad/model.hpp"
#include "hgad/structure.hpp"

namespace hgad {

/// Malformed or unreadable input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Header row of sensor names, one row per time step; a column named "label" holds ground truth.
inline SensorSeries read_series_csv(std::istream& in, const std::string& source = "<stream>") {
    std::string line;
    if (!std::getline(in, line)) throw DataError(source + ": empty file, expected a header row");
    const std::vector<std::string> header = detail::split_csv_line(line);
    std::optional<std::size_t> label_col;
    std::vector<std::size_t> sensor_cols;
    SensorSeries series;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "label") {
            if (label_col) throw DataError(source + ": more than one 'label' column");
            label_col = c;
        } else {
            sensor_cols.push_back(c);
            series.names.push_back(header[c]);
        }
    }
    if (sensor_cols.empty()) throw DataError(source + ": no sensor columns in header");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(cells.size()));
        }
        const auto number = [&](std::size_t c) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cells[c], &used);
                if (used != cells[c].size() || !std::isfinite(v)) throw std::invalid_argument("bad");
                return v;
            } catch (const std::exception&) {
                throw DataError(source + ":" + std::to_string(line_no) + ": column '" + header[c] +
                                "' is not a finite number: '" + cells[c] + "'");
            }
        };
        std::vector<double> row;
        row.reserve(sensor_cols.size());
        for (std::size_t c : sensor_cols) row.push_back(number(c));
        rows.push_back(std::move(row));
        if (label_col) {
            const double y = number(*label_col);
            if (y != 0.0 && y != 1.0) {
                throw DataError(source + ":" + std::to_string(line_no) + ": label must be 0 or 1");
            }
            labels.push_back(static_cast<int>(y));
        }
    }
    if (rows.empty()) throw DataError(source + ": no data rows");
    series.values = Tensor::matrix(sensor_cols.size(), rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t i = 0; i < sensor_cols.size(); ++i) series.values(i, t) = rows[t][i];
    if (label_col) series.labels = std::move(labels);
    return series;
}

inline SensorSeries read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_series_csv(in, path);
}

inline void write_series_csv(std::ostream& os, const SensorSeries& series) {
    for (std::size_t i = 0; i < series.sensors(); ++i) os << (i ? "," : "") << series.names.at(i);
    if (series.labels) os << ",label";
    os << '\n';
    os.precision(17);
    for (std::size_t t = 0; t < series.steps(); ++t) {
        for (std::size_t i = 0; i < series.sensors(); ++i) os << (i ? "," : "") << series.at(i, t);
        if (series.labels) os << ',' << (*series.labels)[t];
        os << '\n';
    }
}

inline void write_series_csv(const std::string& path, const SensorSeries& series) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write '" + path + "'");
    write_series_csv(os, series);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "hgad-checkpoint/1";

/// A trained model with everything needed to score new data.
struct Checkpoint {
    HgadModel model;
    std::vector<std::string> sensor_names;
    MinMaxScaler scaler;
    std::optional<DetectorState> detector;
};

namespace detail {

inline const char* positional_name(PositionalMode m) {
    switch (m) {
        case PositionalMode::learned: return "learned";
        case PositionalMode::sinusoidal: return "sinusoidal";
        case PositionalMode::none: return "none";
    }
    return "learned";
}

inline PositionalMode positional_from(const std::string& s) {
    if (s == "learned") return PositionalMode::learned;
    if (s == "sinusoidal") return PositionalMode::sinusoidal;
    if (s == "none") return PositionalMode::none;
    throw DataError("unknown positional mode '" + s + "'");
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const Checkpoint& ck) {
    using nlohmann::json;
    const ModelConfig& c = ck.model.config();
    json j;
    j["format"] = kCheckpointFormat;
    j["config"] = {{"sensors", c.sensors},
                   {"window", c.window},
                   {"embedding_dim", c.embedding_dim},
                   {"k", c.k},
                   {"pool_ratio", c.pool_ratio},
                   {"supervised", c.supervised},
                   {"variant",
                    {{"use_embeddings", c.variant.use_embeddings},
                     {"use_attention", c.variant.use_attention},
                     {"use_gating", c.variant.use_gating},
                     {"scoring", c.variant.scoring == NodeScoring::softmax ? "softmax" : "projection"},
                     {"delay", c.variant.delay == DelayScore::propagation ? "propagation" : "bilinear"},
                     {"positional", detail::positional_name(c.variant.positional)},
                     {"two_graph", c.variant.two_graph}}}};
    j["sensor_names"] = ck.sensor_names;
    j["scaler"] = {{"low", ck.scaler.low()}, {"high", ck.scaler.high()}};
    json tensors = json::array();
    auto& params = const_cast<ModelParameters&>(ck.model.parameters());
    for (const NamedTensor& t : params.all()) {
        tensors.push_back({{"name", t.name},
                           {"shape", t.tensor->shape()},
                           {"trainable", t.tensor->requires_grad()},
                           {"data", t.tensor->values()}});
    }
    j["tensors"] = std::move(tensors);
    const Hypergraph& g = ck.model.hypergraph();
    j["hypergraph"] = {{"nodes", g.nodes()}, {"edges", g.edges()}, {"incidence", g.incidence()}};
    if (ck.detector) {
        j["detector"] = {{"median", ck.detector->stats.median},
                         {"iqr", ck.detector->stats.iqr},
                         {"threshold", ck.detector->threshold},
                         {"smoothing", ck.detector->smoothing}};
    }
    return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) {
            throw DataError("unsupported checkpoint format '" + j.at("format").get<std::string>() + "'");
        }
        const auto& jc = j.at("config");
        ModelConfig cfg;
        cfg.sensors = jc.at("sensors").get<std::size_t>();
        cfg.window = jc.at("window").get<std::size_t>();
        cfg.embedding_dim = jc.at("embedding_dim").get<std::size_t>();
        cfg.k = jc.at("k").get<std::size_t>();
        cfg.pool_ratio = jc.at("pool_ratio").get<double>();
        cfg.supervised = jc.at("supervised").get<bool>();
        const auto& jv = jc.at("variant");
        cfg.variant.use_embeddings = jv.at("use_embeddings").get<bool>();
        cfg.variant.use_attention = jv.at("use_attention").get<bool>();
        cfg.variant.use_gating = jv.at("use_gating").get<bool>();
        cfg.variant.scoring = jv.at("scoring").get<std::string>() == "projection" ? NodeScoring::projection
                                                                                 : NodeScoring::softmax;
        cfg.variant.delay = jv.at("delay").get<std::string>() == "bilinear" ? DelayScore::bilinear
                                                                           : DelayScore::propagation;
        cfg.variant.positional = detail::positional_from(jv.at("positional").get<std::string>());
        cfg.variant.two_graph = jv.at("two_graph").get<bool>();

        // Shapes and names come from a freshly initialised parameter set.
        ModelParameters params = ModelParameters::init(cfg, 0);
        const auto& jt = j.at("tensors");
        auto slots = params.all();
        if (jt.size() != slots.size()) throw DataError("checkpoint holds " + std::to_string(jt.size()) + " tensors, expected " + std::to_string(slots.size()));
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const auto& e = jt.at(s);
            if (e.at("name").get<std::string>() != slots[s].name) {
                throw DataError("checkpoint tensor " + std::to_string(s) + " is '" + e.at("name").get<std::string>() +
                                "', expected '" + slots[s].name + "'");
            }
            Tensor t(e.at("shape").get<Shape>(), e.at("data").get<std::vector<double>>());
            if (t.shape() != slots[s].tensor->shape()) throw DataError("tensor '" + slots[s].name + "' has the wrong shape");
            t.set_requires_grad(e.at("trainable").get<bool>());
            *slots[s].tensor = std::move(t);
        }
        const auto& jg = j.at("hypergraph");
        Hypergraph g(jg.at("nodes").get<std::size_t>(), jg.at("edges").get<std::size_t>(),
                     jg.at("incidence").get<std::vector<std::uint8_t>>());
        Checkpoint ck{HgadModel(cfg, std::move(params), std::move(g)), j.at("sensor_names").get<std::vector<std::string>>(),
                      MinMaxScaler(j.at("scaler").at("low").get<std::vector<double>>(),
                                   j.at("scaler").at("high").get<std::vector<double>>()),
                      std::nullopt};
        if (j.contains("detector")) {
            const auto& jd = j.at("detector");
            DetectorState d;
            d.stats.median = jd.at("median").get<std::vector<double>>();
            d.stats.iqr = jd.at("iqr").get<std::vector<double>>();
            d.threshold = jd.at("threshold").get<double>();
            d.smoothing = jd.at("smoothing").get<std::size_t>();
            ck.detector = std::move(d);
        }
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write checkpoint '" + path + "'");
    os << checkpoint_json(ck).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace hgad
