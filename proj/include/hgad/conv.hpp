#pragma once

// Two-phase attention convolution on a hypergraph: hypernodes are first
// aggregated into hyperedge features (weights alpha), then hyperedge features
// are fused back into hypernode features (weights beta).

#include <vector>

#include "hgad/random.hpp"
#include "hgad/structure.hpp"
#include "hgad/tensor.hpp"
#include "hgad/variant.hpp"

namespace hgad {

struct HgcnnParams {
    Tensor w1;  // d x w, feature projection
    Tensor w2;  // 2d (d without embeddings), node attention vector
    Tensor w3;  // d x w, self term of the node update
    Tensor w4;  // d x d, hyperedge message transform
    Tensor w5;  // 3d (2d without embeddings), hyperedge attention vector

    static HgcnnParams init(std::size_t d, std::size_t w, bool use_embeddings, Rng& rng) {
        const std::size_t g = use_embeddings ? 2 * d : d;
        HgcnnParams p;
        p.w1 = glorot({d, w}, w, d, rng);
        p.w2 = glorot({g}, g, 1, rng);
        p.w3 = glorot({d, w}, w, d, rng);
        p.w4 = glorot({d, d}, d, d, rng);
        p.w5 = glorot({g + d}, g + d, 1, rng);
        return p;
    }
};

struct HgcnnVars {
    Var w1, w2, w3, w4, w5;

    static HgcnnVars bind(Tape& tape, HgcnnParams& p) {
        return {tape.leaf(p.w1), tape.leaf(p.w2), tape.leaf(p.w3), tape.leaf(p.w4), tape.leaf(p.w5)};
    }
};

/// Row i is W * x_i for every row x_i of `rows`.
inline Var linear_rows(const Var& rows, const Var& weight) { return matmul(rows, transpose(weight)); }

/// g_i = z_i (+) W1 F_i, or just W1 F_i when embeddings are disabled.
inline Var attention_input(const Var& embeddings, const Var& projected, bool use_embeddings) {
    return use_embeddings ? concat_cols(embeddings, projected) : projected;
}

/// alpha_{p,i}: softmax over i in N_p of relu(W2 . g_i), in edge-major pair order.
inline Var edge_attention(const IncidencePairs& pairs, const Var& node_input, const Var& w2, const Variant& variant) {
    const Var e = relu(matmul(node_input, w2));
    const Var per_pair = gather_rows(e, pairs.node_of_edge_major);
    return attention_weights(per_pair, pairs.edge_groups, variant.use_attention);
}

/// x_e_p = sigmoid(sum_{i in N_p} alpha_{p,i} W1 F_i).
inline Var aggregate_edges(const IncidencePairs& pairs, const Var& projected, const Var& alpha, std::size_t edges) {
    return sigmoid(segment_weighted_sum(alpha, projected, pairs.edge_of_edge_major, pairs.node_of_edge_major, edges));
}

struct NodeUpdate {
    Var x_v;
    Var beta;  // node-major pair order
};

/// phi(i,p) = relu(W5 . (g_i (+) W4 x_e_p)); beta = softmax over p in N_i;
/// x_v_i = relu(W3 F_i + sum_p beta_{i,p} W4 x_e_p).
inline NodeUpdate node_update(const IncidencePairs& pairs, const Var& features, const Var& x_e, const Var& node_input,
                              const HgcnnVars& params, const Variant& variant) {
    const std::size_t gdim = node_input.cols();
    const Var messages = linear_rows(x_e, params.w4);
    const Var node_part = matmul(node_input, slice_rows(params.w5, 0, gdim));
    const Var edge_part = matmul(messages, slice_rows(params.w5, gdim, params.w5.size()));
    const Var phi = relu(add(gather_rows(node_part, pairs.node_of_node_major),
                             gather_rows(edge_part, pairs.edge_of_node_major)));
    const Var beta = attention_weights(phi, pairs.node_groups, variant.use_attention);
    const std::size_t n = features.rows();
    const Var fused = segment_weighted_sum(beta, messages, pairs.node_of_node_major, pairs.edge_of_node_major, n);
    return {relu(add(linear_rows(features, params.w3), fused)), beta};
}

struct HgcnnOutput {
    Var x_v;    // n x d
    Var x_e;    // m x d
    Var alpha;  // edge-major pairs
    Var beta;   // node-major pairs
};

inline HgcnnOutput hgcnn_forward(const Hypergraph& graph, const IncidencePairs& pairs, const Var& features,
                                 const Var& embeddings, const HgcnnVars& params, const Variant& variant) {
    const Var projected = linear_rows(features, params.w1);
    const Var node_input = attention_input(embeddings, projected, variant.use_embeddings);
    const Var alpha = edge_attention(pairs, node_input, params.w2, variant);
    const Var x_e = aggregate_edges(pairs, projected, alpha, graph.edges());
    NodeUpdate upd = node_update(pairs, features, x_e, node_input, params, variant);
    return {upd.x_v, x_e, alpha, upd.beta};
}

}  // namespace hgad
