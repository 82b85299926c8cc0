#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hgad/diagnosis.hpp"
#include "oracle.hpp"

using namespace hgad;

namespace {

// Nodes sharing any hyperedge with the root, transitively.
std::vector<std::size_t> component_oracle(const Hypergraph& g, std::size_t root) {
    std::vector<std::size_t> parent(g.nodes());
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t p = 0; p < g.edges(); ++p) {
        const auto& m = g.members(p);
        for (std::size_t j : m) parent[find(j)] = find(m.front());
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.nodes(); ++i)
        if (find(i) == find(root)) out.push_back(i);
    return out;
}

// Hop distance by repeated relaxation over co-membership.
std::vector<std::size_t> hop_distance_oracle(const Hypergraph& g, std::size_t root) {
    const std::size_t inf = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> d(g.nodes(), inf);
    d[root] = 0;
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t p = 0; p < g.edges(); ++p) {
            std::size_t best = inf;
            for (std::size_t j : g.members(p)) best = std::min(best, d[j]);
            if (best == inf) continue;
            for (std::size_t j : g.members(p))
                if (d[j] > best + 1) d[j] = best + 1, changed = true;
        }
    }
    return d;
}

Hypergraph path_hypergraph() {
    // Five nodes chained by pairwise hyperedges plus singleton-seeded edges.
    return Hypergraph::from_members(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4}});
}

}  // namespace

TEST(RootSensor, ArgmaxWithLowerIndexTies) {
    // Sensors 2 and 1 counted from one are indices 1 and 0.
    EXPECT_EQ(root_sensor(std::vector<double>{0.1, 5.2, 0.3}), 1u);
    EXPECT_EQ(root_sensor(std::vector<double>{2.0, 2.0}), 0u);
    EXPECT_EQ(root_sensor(std::vector<double>{-1.0, 4.0, 4.0}), 1u);
    EXPECT_THROW(root_sensor(std::vector<double>{}), std::invalid_argument);
    AnomalyTrace tr;
    tr.sensor_scores = {{0.0, 1.0}, {3.0, 1.0}};
    EXPECT_EQ(root_sensor(tr, 1), 0u);
}

TEST(Expand, ZeroHopsIsRootOnly) {
    const ComputationHypergraph c = expand(path_hypergraph(), 2, 0);
    EXPECT_EQ(c.reached(), (std::vector<std::size_t>{2}));
    EXPECT_EQ(c.nodes.size(), 1u);
}

TEST(Expand, PathExampleOneHop) {
    const Hypergraph g = path_hypergraph();
    const ComputationHypergraph c = expand(g, 3, 1);
    ASSERT_EQ(c.hops.size(), 2u);
    ASSERT_EQ(c.hops[1].size(), 2u);
    EXPECT_EQ(c.hops[1][0].edge, 2u);
    EXPECT_EQ(c.hops[1][0].members, (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(c.hops[1][1].edge, 3u);
    EXPECT_EQ(c.hops[1][1].members, (std::vector<std::size_t>{3, 4}));
    EXPECT_EQ(c.nodes[1], (std::vector<std::size_t>{2, 4}));
    EXPECT_EQ(c.reached(), (std::vector<std::size_t>{2, 3, 4}));
}

TEST(Expand, DiameterReachesEverything) {
    const ComputationHypergraph c = expand(path_hypergraph(), 0, 4);
    EXPECT_EQ(c.reached(), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    for (std::size_t h = 0; h < c.nodes.size(); ++h) EXPECT_EQ(c.nodes[h], (std::vector<std::size_t>{h}));
}

TEST(Expand, InvalidRoot) { EXPECT_THROW(expand(path_hypergraph(), 5, 1), std::invalid_argument); }

TEST(Expand, PropertiesOnRandomHypergraphs) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 14;
        std::vector<std::vector<std::size_t>> edges(n);
        for (std::size_t p = 0; p < n; ++p) {
            edges[p].push_back(p);
            for (std::size_t j = 0; j < n; ++j)
                if (j != p && rng() % 6 == 0) edges[p].push_back(j);
            std::sort(edges[p].begin(), edges[p].end());
        }
        const Hypergraph g = Hypergraph::from_members(n, edges);
        const std::size_t root = rng() % n;
        const auto dist = hop_distance_oracle(g, root);
        std::vector<std::size_t> previous;
        for (std::size_t h = 0; h <= 3; ++h) {
            const ComputationHypergraph c = expand(g, root, h);
            const auto reached = c.reached();
            EXPECT_TRUE(std::includes(reached.begin(), reached.end(), previous.begin(), previous.end()));
            EXPECT_EQ(std::adjacent_find(reached.begin(), reached.end()), reached.end()) << "node listed twice";
            for (std::size_t d = 0; d < c.nodes.size(); ++d)
                for (std::size_t j : c.nodes[d]) EXPECT_EQ(dist[j], d);
            std::size_t expected = 0;
            for (std::size_t j = 0; j < n; ++j) expected += dist[j] <= h;
            EXPECT_EQ(reached.size(), expected);
            previous = reached;
        }
        EXPECT_EQ(expand(g, root, n).reached(), component_oracle(g, root));
        const ComputationHypergraph a = expand(g, root, 2), b = expand(g, root, 2);
        EXPECT_EQ(a.nodes, b.nodes);
    }
}

TEST(Expand, LearnedKnnHypergraphIsConnectedFromAnyRoot) {
    std::mt19937_64 rng(2);
    const Tensor z = oracle::random_tensor({9, 3}, rng);
    const Hypergraph g = build_incidence(pairwise_distances(z), 2);
    for (std::size_t r = 0; r < 9; ++r) EXPECT_EQ(expand(g, r, 9).reached(), component_oracle(g, r));
}

TEST(Writers, TreeJsonAndDot) {
    const ComputationHypergraph c = expand(path_hypergraph(), 3, 1, {0.1, 0.2, 0.3, 4.0, 0.5});
    const std::vector<std::string> names{"a", "b", "c", "d", "e"};
    std::ostringstream tree, json, dot;
    write_tree(tree, c, names);
    EXPECT_EQ(tree.str().substr(0, tree.str().find('\n')), "root d (A=4.000000)");
    EXPECT_NE(tree.str().find("hyperedge e2 (seed c)"), std::string::npos);
    write_adjacency_json(json, c, names);
    const auto parsed = nlohmann::json::parse(json.str());
    EXPECT_EQ(parsed["root"], "d");
    EXPECT_EQ(parsed["depth"], 1);
    EXPECT_EQ(parsed["hops"][0]["hyperedges"].size(), 2u);
    EXPECT_EQ(parsed["hops"][0]["hyperedges"][1]["members"][1]["sensor"], "e");
    EXPECT_DOUBLE_EQ(parsed["hops"][0]["hyperedges"][1]["members"][1]["score"].get<double>(), 0.5);
    write_dot(dot, c, names);
    EXPECT_EQ(dot.str().rfind("graph computation_hypergraph {", 0), 0u);
    EXPECT_NE(dot.str().find("e3 -- n4;"), std::string::npos);
    EXPECT_NE(dot.str().find("fillcolor=salmon"), std::string::npos);
}
