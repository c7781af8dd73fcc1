#ifndef LVLINGAM_MODEL_HPP
#define LVLINGAM_MODEL_HPP

#include <Eigen/Dense>

#include "lvlingam/graph.hpp"

namespace lvlingam {

//! An LvDag together with one weight per edge, stored parallel to
//! LvDag::edges() (sorted by (from, to)). Non-edges carry implicit weight 0.
class WeightedModel {
public:
    WeightedModel(LvDag graph, std::vector<double> weights)
        : graph_(std::move(graph)), weights_(std::move(weights)) {
        if (weights_.size() != graph_.edges().size())
            throw DimensionMismatch("expected " + std::to_string(graph_.edges().size()) + " weights, got " +
                                    std::to_string(weights_.size()));
    }

    const LvDag& graph() const { return graph_; }
    const std::vector<double>& weights() const { return weights_; }

    bool has_edge(NodeId from, NodeId to) const { return graph_.has_edge(from, to); }

    double weight(NodeId from, NodeId to) const {
        const auto& e = graph_.edges();
        auto it = std::lower_bound(e.begin(), e.end(), Edge{from, to});
        if (it == e.end() || *it != Edge{from, to})
            throw UnknownEdge("no edge (" + std::to_string(from) + "," + std::to_string(to) + ")");
        return weights_[static_cast<std::size_t>(it - e.begin())];
    }

    //! Full adjacency A with A(to, from) = weight, so that V = AV + N.
    Eigen::MatrixXd adjacency() const {
        const int p = graph_.node_count();
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
        const auto& e = graph_.edges();
        for (std::size_t k = 0; k < e.size(); ++k) a(e[k].to, e[k].from) = weights_[k];
        return a;
    }

private:
    LvDag graph_;
    std::vector<double> weights_;
};

//! Dense p_o × p matrix mapping exogenous noises to observed variables.
//! Rows are bound to observed node ids (ascending), columns to all node ids.
struct MixingMatrix {
    Eigen::MatrixXd values;
    std::vector<NodeId> row_nodes;
    std::vector<NodeId> col_nodes;
};

namespace detail {

//! Positions of observed node ids among 0..p-1 (ascending), i.e. row binding.
inline std::vector<int> observed_positions(const LvDag& g) {
    std::vector<int> pos(static_cast<std::size_t>(g.node_count()), -1);
    int r = 0;
    for (NodeId v = 0; v < g.node_count(); ++v)
        if (g.is_observed(v)) pos[static_cast<std::size_t>(v)] = r++;
    return pos;
}

//! [B_o, B_l] for a canonical model: B_o = (I - A_oo)^{-1}, B_l = B_o * A_ol.
//! No validity checks; callers guarantee canonical structure.
inline MixingMatrix mixing_unchecked(const WeightedModel& m) {
    const LvDag& g = m.graph();
    const int p = g.node_count();
    const int p_o = g.observed_count();
    const std::vector<int> pos = observed_positions(g);

    Eigen::MatrixXd a_oo = Eigen::MatrixXd::Zero(p_o, p_o);
    Eigen::MatrixXd a_ol = Eigen::MatrixXd::Zero(p_o, p - p_o);
    std::vector<NodeId> latents = g.latent_ids();
    std::vector<int> lat_pos(static_cast<std::size_t>(p), -1);
    for (std::size_t i = 0; i < latents.size(); ++i) lat_pos[static_cast<std::size_t>(latents[i])] = static_cast<int>(i);

    const auto& edges = g.edges();
    const auto& w = m.weights();
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const Edge e = edges[k];
        if (g.is_observed(e.from))
            a_oo(pos[static_cast<std::size_t>(e.to)], pos[static_cast<std::size_t>(e.from)]) = w[k];
        else
            a_ol(pos[static_cast<std::size_t>(e.to)], lat_pos[static_cast<std::size_t>(e.from)]) = w[k];
    }

    MixingMatrix out;
    out.values.resize(p_o, p);
    Eigen::MatrixXd b_o = (Eigen::MatrixXd::Identity(p_o, p_o) - a_oo).inverse();
    Eigen::MatrixXd b_l = b_o * a_ol;
    out.row_nodes = g.observed_ids();
    out.col_nodes.resize(static_cast<std::size_t>(p));
    for (NodeId v = 0; v < p; ++v) {
        out.col_nodes[static_cast<std::size_t>(v)] = v;
        if (g.is_observed(v))
            out.values.col(v) = b_o.col(pos[static_cast<std::size_t>(v)]);
        else
            out.values.col(v) = b_l.col(lat_pos[static_cast<std::size_t>(v)]);
    }
    return out;
}

}  // namespace detail

//! Mixing matrix of a canonical model. Entry (i, v) is the total causal effect
//! of v's exogenous noise on observed node i: the sum over directed paths v→i
//! of edge-weight products.
inline MixingMatrix build_mixing(const WeightedModel& m) {
    validate(m.graph());
    return detail::mixing_unchecked(m);
}

struct ReducedMixing {
    CanonicalizeResult shape;
    MixingMatrix bprime;  // mixing of the canonical model; ids are new (dense) ids
};

//! Canonicalizes an arbitrary acyclic weighted model and returns the mixing
//! matrix of the observationally equivalent canonical model, restricted to the
//! surviving columns. Computed from the full (I - A)^{-1}, a route independent
//! of the blockwise formula build_mixing uses, so the two can cross-check.
//! Columns of deleted latents are dropped; their noise folds into the noise of
//! the single child (or vanishes when they reach nothing).
inline ReducedMixing reduce_weights_to_canonical(const WeightedModel& m) {
    const LvDag& g = m.graph();
    const int p = g.node_count();
    CanonicalizeResult shape = canonicalize(g);

    Eigen::MatrixXd full = (Eigen::MatrixXd::Identity(p, p) - m.adjacency()).inverse();

    const int kept = static_cast<int>(shape.kept_original_ids.size());
    MixingMatrix bp;
    bp.values.resize(g.observed_count(), kept);
    const std::vector<NodeId> obs = g.observed_ids();
    for (int r = 0; r < static_cast<int>(obs.size()); ++r)
        for (int c = 0; c < kept; ++c)
            bp.values(r, c) = full(obs[static_cast<std::size_t>(r)],
                                   shape.kept_original_ids[static_cast<std::size_t>(c)]);
    bp.row_nodes = shape.dag.dag().observed_ids();
    bp.col_nodes.resize(static_cast<std::size_t>(kept));
    for (int c = 0; c < kept; ++c) bp.col_nodes[static_cast<std::size_t>(c)] = c;
    return ReducedMixing{std::move(shape), std::move(bp)};
}

}  // namespace lvlingam

#endif
