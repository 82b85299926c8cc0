#pragma once

// Root-cause reporting: the top-scoring sensor at a flagged step and its
// k-hop computation hypergraph over the learned structure.

#include <algorithm>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgad/detection.hpp"
#include "hgad/structure.hpp"

namespace hgad {

/// argmax_i A_i(t); ties resolve to the lower sensor index.
inline std::size_t root_sensor(const std::vector<double>& sensor_scores) {
    if (sensor_scores.empty()) throw std::invalid_argument("root_sensor: no sensor scores");
    return static_cast<std::size_t>(std::max_element(sensor_scores.begin(), sensor_scores.end()) -
                                    sensor_scores.begin());
}

inline std::size_t root_sensor(const AnomalyTrace& trace, std::size_t row) {
    return root_sensor(trace.sensor_scores.at(row));
}

struct HopEdge {
    std::size_t edge = 0;
    std::vector<std::size_t> members;      // every member of the hyperedge
    std::vector<std::size_t> new_members;  // members first reached at this hop
};

struct ComputationHypergraph {
    std::size_t root = 0;
    std::size_t depth = 0;
    std::vector<std::vector<HopEdge>> hops;         // hops[0] is empty; hop h lists hyperedges expanded at h
    std::vector<std::vector<std::size_t>> nodes;    // nodes first visited at each hop; nodes[0] = {root}
    std::vector<double> annotations;                // A_i(t) per hypernode, may be empty

    std::vector<std::size_t> reached() const {
        std::vector<std::size_t> out;
        for (const auto& hop : nodes) out.insert(out.end(), hop.begin(), hop.end());
        std::sort(out.begin(), out.end());
        return out;
    }
};

/// Breadth-first expansion from `root` through shared hyperedges, first-visit depth.
inline ComputationHypergraph expand(const Hypergraph& g, std::size_t root, std::size_t k_hops,
                                    std::vector<double> annotations = {}) {
    if (root >= g.nodes()) {
        throw std::invalid_argument("root hypernode " + std::to_string(root) + " is outside 0.." +
                                    std::to_string(g.nodes() - 1));
    }
    ComputationHypergraph out;
    out.root = root;
    out.depth = k_hops;
    out.annotations = std::move(annotations);
    out.hops.emplace_back();
    out.nodes.push_back({root});
    std::vector<bool> visited(g.nodes(), false);
    visited[root] = true;
    std::vector<std::size_t> frontier{root};
    for (std::size_t h = 1; h <= k_hops && !frontier.empty(); ++h) {
        std::set<std::size_t> edges;
        for (std::size_t i : frontier)
            for (std::size_t p : g.incident(i)) edges.insert(p);
        std::vector<HopEdge> hop;
        std::vector<std::size_t> next;
        for (std::size_t p : edges) {
            HopEdge e{p, g.members(p), {}};
            for (std::size_t j : g.members(p)) {
                if (!visited[j]) {
                    visited[j] = true;
                    e.new_members.push_back(j);
                    next.push_back(j);
                }
            }
            hop.push_back(std::move(e));
        }
        std::sort(next.begin(), next.end());
        out.hops.push_back(std::move(hop));
        out.nodes.push_back(next);
        frontier = std::move(next);
    }
    return out;
}

namespace detail {

inline std::string sensor_label(const std::vector<std::string>& names, std::size_t i) {
    return i < names.size() ? names[i] : "sensor" + std::to_string(i);
}

}  // namespace detail

/// Indented tree: hop by hop, each hyperedge with the members it reached.
inline void write_tree(std::ostream& os, const ComputationHypergraph& c, const std::vector<std::string>& names) {
    const auto score = [&](std::size_t i) {
        return c.annotations.empty() ? std::string() : " (A=" + std::to_string(c.annotations[i]) + ")";
    };
    os << "root " << detail::sensor_label(names, c.root) << score(c.root) << '\n';
    for (std::size_t h = 1; h < c.hops.size(); ++h) {
        os << "hop " << h << '\n';
        for (const auto& e : c.hops[h]) {
            os << "  hyperedge e" << e.edge << " (seed " << detail::sensor_label(names, e.edge) << ")\n";
            for (std::size_t j : e.new_members) os << "    " << detail::sensor_label(names, j) << score(j) << '\n';
        }
    }
}

/// JSON adjacency listing: hyperedge -> members with their scores.
inline void write_adjacency_json(std::ostream& os, const ComputationHypergraph& c,
                                 const std::vector<std::string>& names) {
    os.precision(17);
    os << "{\n  \"root\": \"" << detail::sensor_label(names, c.root) << "\",\n  \"depth\": " << c.depth
       << ",\n  \"hops\": [";
    for (std::size_t h = 1; h < c.hops.size(); ++h) {
        os << (h > 1 ? "," : "") << "\n    {\"hop\": " << h << ", \"hyperedges\": [";
        for (std::size_t k = 0; k < c.hops[h].size(); ++k) {
            const auto& e = c.hops[h][k];
            os << (k ? ", " : "") << "{\"id\": " << e.edge << ", \"members\": [";
            for (std::size_t m = 0; m < e.members.size(); ++m) {
                const std::size_t j = e.members[m];
                os << (m ? ", " : "") << "{\"sensor\": \"" << detail::sensor_label(names, j) << "\"";
                if (!c.annotations.empty()) os << ", \"score\": " << c.annotations[j];
                os << '}';
            }
            os << "]}";
        }
        os << "]}";
    }
    os << "\n  ]\n}\n";
}

/// Graphviz description: hypernodes as ellipses, hyperedges as boxes.
inline void write_dot(std::ostream& os, const ComputationHypergraph& c, const std::vector<std::string>& names) {
    os << "graph computation_hypergraph {\n  node [shape=ellipse];\n";
    for (std::size_t i : c.reached()) {
        os << "  n" << i << " [label=\"" << detail::sensor_label(names, i);
        if (!c.annotations.empty()) os << "\\nA=" << c.annotations[i];
        os << '"' << (i == c.root ? ", style=filled, fillcolor=salmon" : "") << "];\n";
    }
    std::set<std::size_t> drawn;
    for (std::size_t h = 1; h < c.hops.size(); ++h)
        for (const auto& e : c.hops[h]) {
            if (!drawn.insert(e.edge).second) continue;
            os << "  e" << e.edge << " [shape=box, label=\"e" << e.edge << "\"];\n";
            for (std::size_t j : e.members) os << "  e" << e.edge << " -- n" << j << ";\n";
        }
    os << "}\n";
}

}  // namespace hgad
