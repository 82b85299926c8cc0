#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hgad/structure.hpp"

namespace hgad {

enum class NodeScoring { softmax, projection };
enum class DelayScore { propagation, bilinear };

/// Architecture toggles. The default is the full model; each flag switches
/// one component to its reduced form.
struct Variant {
    bool use_embeddings = true;  // z_i inside attention scores
    bool use_attention = true;   // false: every softmax group becomes a plain mean
    bool use_gating = true;      // score gating of pooled rows
    NodeScoring scoring = NodeScoring::softmax;
    DelayScore delay = DelayScore::propagation;
    PositionalMode positional = PositionalMode::learned;
    bool two_graph = false;  // forces k = 1

    bool operator==(const Variant&) const = default;
};

inline const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names = {"full",         "2-graph",     "no-posemb",
                                                   "sinusoidal-posemb", "no-z",   "no-attention",
                                                   "projection-scoring", "no-gating", "bilinear-delta"};
    return names;
}

/// Applies a named toggle on top of `base`.
inline Variant apply_variant(Variant base, std::string_view name) {
    if (name == "full") return base;
    if (name == "2-graph") base.two_graph = true;
    else if (name == "no-posemb") base.positional = PositionalMode::none;
    else if (name == "sinusoidal-posemb") base.positional = PositionalMode::sinusoidal;
    else if (name == "no-z") base.use_embeddings = false;
    else if (name == "no-attention") base.use_attention = false;
    else if (name == "projection-scoring") base.scoring = NodeScoring::projection;
    else if (name == "no-gating") base.use_gating = false;
    else if (name == "bilinear-delta") base.delay = DelayScore::bilinear;
    else throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
    return base;
}

/// Softmax within each group, or the uniform mean weights when attention is off.
inline Var attention_weights(const Var& scores, const Groups& groups, bool use_attention) {
    if (use_attention) return grouped_softmax(scores, groups);
    Tensor uniform_weights(scores.value().shape(), 0.0);
    for (const auto& group : groups)
        for (std::size_t i : group) uniform_weights[i] = 1.0 / static_cast<double>(group.size());
    return scores.tape().constant(std::move(uniform_weights));
}

}  // namespace hgad
