#pragma once

// Score-based hypergraph pooling, index-guided unpooling and the single-stage
// encoder-decoder built from them.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "hgad/conv.hpp"
#include "hgad/random.hpp"
#include "hgad/structure.hpp"
#include "hgad/tensor.hpp"
#include "hgad/variant.hpp"

namespace hgad {

struct PoolParams {
    Tensor theta;  // d, scoring vector
    Tensor w6;     // d x d
    Tensor w7;     // d x d
    Tensor w8;     // 3d (2d without embeddings)
    double ratio = 0.5;

    static PoolParams init(std::size_t d, bool use_embeddings, double ratio, Rng& rng) {
        if (!(ratio > 0.0 && ratio <= 1.0)) {
            throw std::invalid_argument("pooling ratio must lie in (0, 1], got " + std::to_string(ratio));
        }
        const std::size_t a = use_embeddings ? 3 * d : 2 * d;
        PoolParams p;
        p.theta = glorot({d}, d, 1, rng);
        p.w6 = glorot({d, d}, d, d, rng);
        p.w7 = glorot({d, d}, d, d, rng);
        p.w8 = glorot({a}, a, 1, rng);
        p.ratio = ratio;
        return p;
    }
};

struct UnpoolParams {
    Tensor w9;   // d x d
    Tensor w10;  // d x d
    Tensor w11;  // d x 2d (d x d without embeddings)
    Tensor w12;  // d x d

    static UnpoolParams init(std::size_t d, bool use_embeddings, Rng& rng) {
        const std::size_t g = use_embeddings ? 2 * d : d;
        UnpoolParams p;
        p.w9 = glorot({d, d}, d, d, rng);
        p.w10 = glorot({d, d}, d, d, rng);
        p.w11 = glorot({d, g}, g, d, rng);
        p.w12 = glorot({d, d}, d, d, rng);
        return p;
    }
};

struct PoolVars {
    Var theta, w6, w7, w8;
    static PoolVars bind(Tape& tape, PoolParams& p) {
        return {tape.leaf(p.theta), tape.leaf(p.w6), tape.leaf(p.w7), tape.leaf(p.w8)};
    }
};

struct UnpoolVars {
    Var w9, w10, w11, w12;
    static UnpoolVars bind(Tape& tape, UnpoolParams& p) {
        return {tape.leaf(p.w9), tape.leaf(p.w10), tape.leaf(p.w11), tape.leaf(p.w12)};
    }
};

inline std::size_t pooled_size(std::size_t n, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("pooling ratio must lie in (0, 1], got " + std::to_string(ratio));
    }
    // The small slack keeps ratios such as 2/3 * 3 from rounding up to 3.
    const auto np = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(np, 1, n);
}

/// Importance of every hypernode: softmax(X_v theta), or X_v theta / |theta| for projection scoring.
inline Var node_scores(const Var& x_v, const Var& theta, const Variant& variant) {
    const Var projected = matmul(x_v, theta);
    if (variant.scoring == NodeScoring::projection) {
        return scale_by(projected, reciprocal(sqrt(sum(mul(theta, theta)))));
    }
    std::vector<std::size_t> all(x_v.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return grouped_softmax(projected, Groups{all});
}

/// Indices of the ceil(ratio * n) highest scores, ties to the lower index, returned ascending.
inline std::vector<std::size_t> topk_nodes(std::span<const double> scores, double ratio) {
    const std::size_t np = pooled_size(scores.size(), ratio);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(np);
    std::sort(order.begin(), order.end());
    return order;
}

/// H restricted to the retained hypernodes: H[idx, idx] with hypernodes relabelled
/// 0..n_p-1. Hyperedges left empty are dropped; a retained hypernode left without
/// any hyperedge gets a self-loop hyperedge.
struct RestrictedHypergraph {
    Hypergraph graph;
    std::vector<long> edge_origin;  // original hyperedge id, or -1 for an added self-loop
};

inline RestrictedHypergraph restrict_hypergraph(const Hypergraph& g, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw DimensionError("pooling retained no hypernodes");
    std::vector<std::vector<std::size_t>> edges;
    std::vector<long> origin;
    std::vector<bool> covered(idx.size(), false);
    for (std::size_t pp = 0; pp < idx.size(); ++pp) {
        const std::size_t p = idx[pp];
        if (p >= g.edges()) continue;
        std::vector<std::size_t> members;
        for (std::size_t ii = 0; ii < idx.size(); ++ii)
            if (g.contains(idx[ii], p)) members.push_back(ii);
        if (members.empty()) continue;
        for (std::size_t ii : members) covered[ii] = true;
        edges.push_back(std::move(members));
        origin.push_back(static_cast<long>(p));
    }
    for (std::size_t ii = 0; ii < idx.size(); ++ii) {
        if (!covered[ii]) {
            edges.push_back({ii});
            origin.push_back(-1);
        }
    }
    return {Hypergraph::from_members(idx.size(), edges), std::move(origin)};
}

struct PooledHypergraph {
    std::vector<std::size_t> idx;
    RestrictedHypergraph restricted;
    IncidencePairs pairs;
    Var gated;  // n_p x d, selected rows scaled by their scores
    Var x_v;    // n_p x d, refined pooled hypernode features
    Var x_e;   // pooled hyperedge features
    Var zeta;  // node-major pairs of the pooled hypergraph
};

inline PooledHypergraph pool(const Hypergraph& g, const Var& x_v, const Var& scores, std::vector<std::size_t> idx,
                             const Var& embeddings, const PoolVars& params, const Variant& variant) {
    if (idx.empty()) throw DimensionError("pool: no hypernodes retained");
    Tape& tape = x_v.tape();
    PooledHypergraph out;
    out.restricted = restrict_hypergraph(g, idx);
    out.pairs = incidence_pairs(out.restricted.graph);
    const auto& pairs = out.pairs;
    const std::size_t np = idx.size();

    const Var selected = gather_rows(x_v, idx);
    Var gated = selected;
    if (variant.use_gating) {
        const Var picked = gather_rows(scores, idx);
        const Var gate = variant.scoring == NodeScoring::projection ? tanh(picked) : relu(picked);
        gated = mul_rows(selected, gate);
    }
    const Var own = linear_rows(gated, params.w6);
    const Var ones = tape.constant(Tensor({pairs.edge_of_edge_major.size()}, 1.0));
    const Var x_e = sigmoid(segment_weighted_sum(ones, own, pairs.edge_of_edge_major, pairs.node_of_edge_major,
                                                 out.restricted.graph.edges()));
    const Var edge_msg = linear_rows(x_e, params.w7);
    const Var node_input =
        variant.use_embeddings ? concat_cols(gather_rows(embeddings, idx), own) : own;
    const std::size_t gdim = node_input.cols();
    const Var node_part = matmul(node_input, slice_rows(params.w8, 0, gdim));
    const Var edge_part = matmul(edge_msg, slice_rows(params.w8, gdim, params.w8.size()));
    const Var kappa = relu(add(gather_rows(node_part, pairs.node_of_node_major),
                               gather_rows(edge_part, pairs.edge_of_node_major)));
    const Var zeta = attention_weights(kappa, pairs.node_groups, variant.use_attention);
    const Var fused = segment_weighted_sum(zeta, edge_msg, pairs.node_of_node_major, pairs.edge_of_node_major, np);
    out.idx = std::move(idx);
    out.gated = gated;
    out.x_v = sigmoid(add(own, fused));
    out.x_e = x_e;
    out.zeta = zeta;
    return out;
}

/// Places pooled rows back at their original hypernode positions; other rows are zero.
inline Var unpool_scatter(const Var& pooled, const std::vector<std::size_t>& idx, std::size_t n) {
    return scatter_rows(pooled, idx, n);
}

/// Sum with the pre-pooling features. Rows the scatter left at zero become the pre-pooling rows.
inline Var skip_connect(const Var& scattered, const Var& pre_pool) { return add(scattered, pre_pool); }

struct Refinement {
    Var x_v;    // n x d
    Var x_e;    // m x d
    Var delta;  // node-major pairs
    Var gamma;  // node-major pairs
};

/// Delay-aware refinement on the full hypergraph. The node output is kept linear.
inline Refinement unpool_refine(const Hypergraph& g, const IncidencePairs& pairs, const Var& x_v,
                                const Var& embeddings, const UnpoolVars& params, const Variant& variant) {
    Tape& tape = x_v.tape();
    const std::size_t n = g.nodes();
    const Var own = linear_rows(x_v, params.w9);
    const Var ones = tape.constant(Tensor({pairs.edge_of_edge_major.size()}, 1.0));
    const Var x_e =
        sigmoid(segment_weighted_sum(ones, own, pairs.edge_of_edge_major, pairs.node_of_edge_major, g.edges()));
    const Var g_edge = linear_rows(x_e, params.w10);
    const Var g_node = linear_rows(attention_input(embeddings, own, variant.use_embeddings), params.w11);
    const Var a = gather_rows(linear_rows(g_node, params.w12), pairs.node_of_node_major);
    const Var b = gather_rows(linear_rows(g_edge, params.w12), pairs.edge_of_node_major);
    const Var delta = variant.delay == DelayScore::propagation ? rowwise_dot(sub(b, a), add(b, a)) : rowwise_dot(a, b);
    const Var gamma = attention_weights(delta, pairs.node_groups, variant.use_attention);
    const Var fused = segment_weighted_sum(gamma, g_edge, pairs.node_of_node_major, pairs.edge_of_node_major, n);
    return {add(own, fused), x_e, delta, gamma};
}

struct HgedVars {
    HgcnnVars conv;
    PoolVars pool;
    UnpoolVars unpool;
};

struct HgedOutput {
    HgcnnOutput encoded;
    Var scores;
    PooledHypergraph pooled;
    Var skipped;
    Refinement refined;
    Var x_v;  // n x d on the original hypergraph
};

inline HgedOutput hged_forward(const Hypergraph& g, const IncidencePairs& pairs, const Var& features,
                               const Var& embeddings, const HgedVars& params, double ratio, const Variant& variant) {
    HgedOutput out;
    out.encoded = hgcnn_forward(g, pairs, features, embeddings, params.conv, variant);
    out.scores = node_scores(out.encoded.x_v, params.pool.theta, variant);
    std::vector<std::size_t> idx = topk_nodes(out.scores.value().data(), ratio);
    out.pooled = pool(g, out.encoded.x_v, out.scores, std::move(idx), embeddings, params.pool, variant);
    const Var scattered = unpool_scatter(out.pooled.x_v, out.pooled.idx, g.nodes());
    out.skipped = skip_connect(scattered, out.encoded.x_v);
    out.refined = unpool_refine(g, pairs, out.skipped, embeddings, params.unpool, variant);
    out.x_v = out.refined.x_v;
    return out;
}

}  // namespace hgad
