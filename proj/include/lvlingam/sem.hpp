#ifndef LVLINGAM_SEM_HPP
#define LVLINGAM_SEM_HPP

#include <cmath>
#include <cstdint>
#include <map>

#include "lvlingam/model.hpp"
#include "lvlingam/rng.hpp"

namespace lvlingam {

enum class NoiseFamily : unsigned char { Laplace, Exponential, Uniform };

//! Exogenous noise description: one non-Gaussian family shared by all nodes,
//! plus optional per-node scale multipliers applied to each drawn value.
struct NoiseSpec {
    NoiseFamily family = NoiseFamily::Laplace;
    double location = 0.0;  // Laplace only
    double scale = 1.0;     // Laplace and Exponential
    double low = -1.0;      // Uniform only
    double high = 1.0;
    std::map<NodeId, double> node_scales;

    static NoiseSpec laplace(double location = 0.0, double scale = 1.0) {
        NoiseSpec s;
        s.family = NoiseFamily::Laplace;
        s.location = location;
        s.scale = scale;
        return s;
    }
    static NoiseSpec exponential(double scale = 1.0) {
        NoiseSpec s;
        s.family = NoiseFamily::Exponential;
        s.scale = scale;
        return s;
    }
    static NoiseSpec uniform(double low = -1.0, double high = 1.0) {
        NoiseSpec s;
        s.family = NoiseFamily::Uniform;
        s.low = low;
        s.high = high;
        return s;
    }

    NoiseSpec& with_node_scale(NodeId v, double multiplier) {
        node_scales[v] = multiplier;
        return *this;
    }

    void check() const {
        if ((family != NoiseFamily::Uniform && scale <= 0.0) || (family == NoiseFamily::Uniform && low >= high))
            throw PreconditionViolated("noise scale parameters must describe a nondegenerate distribution");
        for (const auto& [v, m] : node_scales)
            if (m <= 0.0) throw PreconditionViolated("node scale multipliers must be positive");
    }

    double draw(Rng& rng) const {
        switch (family) {
            case NoiseFamily::Laplace: return location + rng.laplace(scale);
            case NoiseFamily::Exponential: return rng.exponential(scale);
            case NoiseFamily::Uniform:
            default: return rng.uniform(low, high);
        }
    }

    double multiplier(NodeId v) const {
        auto it = node_scales.find(v);
        return it == node_scales.end() ? 1.0 : it->second;
    }
};

//! Observed samples, one row per draw; columns bound to observed node ids.
struct Dataset {
    Eigen::MatrixXd values;
    std::vector<NodeId> columns;

    int n() const { return static_cast<int>(values.rows()); }
};

namespace detail {

//! Magnitudes uniform in [0.5, 1] with random signs; the latent -> first-child
//! scaling edges are pinned to exactly 1.
inline WeightedModel draw_weights(const LvDag& g, Rng& rng) {
    std::vector<int> topo_pos(static_cast<std::size_t>(g.node_count()));
    {
        const std::vector<NodeId> topo = topological_order(g);
        for (std::size_t i = 0; i < topo.size(); ++i) topo_pos[static_cast<std::size_t>(topo[i])] = static_cast<int>(i);
    }
    std::vector<NodeId> first_child(static_cast<std::size_t>(g.node_count()), -1);
    for (NodeId l : g.latent_ids()) {
        NodeId best = -1;
        for (NodeId c : g.children(l))
            if (best == -1 || topo_pos[static_cast<std::size_t>(c)] < topo_pos[static_cast<std::size_t>(best)]) best = c;
        first_child[static_cast<std::size_t>(l)] = best;
    }
    std::vector<double> w;
    w.reserve(g.edges().size());
    for (const Edge& e : g.edges()) {
        if (g.is_latent(e.from) && first_child[static_cast<std::size_t>(e.from)] == e.to) {
            w.push_back(1.0);
        } else {
            const double mag = rng.uniform(0.5, 1.0);
            w.push_back(rng.bernoulli(0.5) ? mag : -mag);
        }
    }
    return WeightedModel(g, std::move(w));
}

//! n x p noise matrix, row-major draw order, one column per node id.
inline Eigen::MatrixXd draw_noise(const LvDag& g, const NoiseSpec& noise, int n, Rng& rng) {
    noise.check();
    const int p = g.node_count();
    Eigen::MatrixXd out(n, p);
    for (int r = 0; r < n; ++r)
        for (NodeId v = 0; v < p; ++v) out(r, v) = noise.draw(rng) * noise.multiplier(v);
    return out;
}

}  // namespace detail

//! Random canonical graph: observed ids 0..p_o-1, latent ids p_o..p-1. A random
//! topological order is fixed over the observed nodes; each forward
//! observed->observed pair and each latent->observed pair becomes an edge with
//! probability edge_prob; latents left with fewer than two children get
//! uniformly chosen extra observed children.
inline CanonicalDag random_canonical_dag(int p_o, int p_l, double edge_prob, std::uint64_t seed) {
    if (p_o < 0 || p_l < 0 || (p_l >= 1 && p_o < 2))
        throw InvalidDimensions("latents need at least two observed children");
    if (!(edge_prob > 0.0) || edge_prob > 1.0) throw InvalidDimensions("edge_prob must be in (0, 1]");

    Rng rng(seed);
    std::vector<NodeId> order(static_cast<std::size_t>(p_o));
    for (int i = 0; i < p_o; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);

    std::vector<NodeKind> kinds(static_cast<std::size_t>(p_o), NodeKind::Observed);
    kinds.resize(static_cast<std::size_t>(p_o + p_l), NodeKind::Latent);

    std::vector<Edge> edges;
    for (int a = 0; a < p_o; ++a)
        for (int b = a + 1; b < p_o; ++b)
            if (rng.bernoulli(edge_prob)) edges.push_back({order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]});

    std::vector<std::vector<char>> is_child(static_cast<std::size_t>(p_l), std::vector<char>(static_cast<std::size_t>(p_o), 0));
    for (int l = 0; l < p_l; ++l)
        for (int o = 0; o < p_o; ++o)
            if (rng.bernoulli(edge_prob)) {
                edges.push_back({p_o + l, o});
                is_child[static_cast<std::size_t>(l)][static_cast<std::size_t>(o)] = 1;
            }
    for (int l = 0; l < p_l; ++l) {
        auto& mine = is_child[static_cast<std::size_t>(l)];
        int count = 0;
        for (char c : mine) count += c;
        while (count < 2) {
            const int o = static_cast<int>(rng.below(static_cast<std::uint64_t>(p_o)));
            if (mine[static_cast<std::size_t>(o)]) continue;
            mine[static_cast<std::size_t>(o)] = 1;
            edges.push_back({p_o + l, o});
            ++count;
        }
    }
    return validate(LvDag(std::move(kinds), std::move(edges)));
}

//! Weights uniform on [-1,-0.5] U [0.5,1]; scaling edges exactly 1.
inline WeightedModel sample_weights(const CanonicalDag& dag, std::uint64_t seed) {
    Rng rng(seed);
    return detail::draw_weights(dag, rng);
}

//! X = N (B')^T: n independent noise vectors pushed through the mixing map.
inline Dataset simulate_linear(const WeightedModel& model, const NoiseSpec& noise, int n, std::uint64_t seed) {
    if (n < 1) throw InvalidDimensions("need at least one sample");
    MixingMatrix b = build_mixing(model);
    Rng rng(seed);
    Eigen::MatrixXd nmat = detail::draw_noise(model.graph(), noise, n, rng);
    Dataset out;
    out.values = nmat * b.values.transpose();
    out.columns = model.graph().observed_ids();
    return out;
}

//! Nearly linear mechanism: every node is tanh(weighted parent sum) plus its
//! noise, except that the target edge's contribution enters the outcome
//! linearly. Noise draws match simulate_linear for equal seeds.
inline Dataset simulate_misspecified(const WeightedModel& model, const NoiseSpec& noise, Edge target_edge, int n,
                                     std::uint64_t seed) {
    const LvDag& g = model.graph();
    validate(g);
    if (n < 1) throw InvalidDimensions("need at least one sample");
    if (!g.has_edge(target_edge.from, target_edge.to) || !g.is_observed(target_edge.from) ||
        !g.is_observed(target_edge.to))
        throw UnknownEdge("target edge (" + std::to_string(target_edge.from) + "," +
                          std::to_string(target_edge.to) + ") is not an observed edge of the graph");

    Rng rng(seed);
    Eigen::MatrixXd nmat = detail::draw_noise(g, noise, n, rng);
    const std::vector<NodeId> topo = topological_order(g);
    const NodeId outcome = target_edge.to;

    Eigen::MatrixXd v(n, g.node_count());
    for (NodeId node : topo) {
        Eigen::ArrayXd inside = Eigen::ArrayXd::Zero(n);
        Eigen::ArrayXd linear = Eigen::ArrayXd::Zero(n);
        for (NodeId parent : g.parents(node)) {
            const double w = model.weight(parent, node);
            if (node == outcome && parent == target_edge.from)
                linear += w * v.col(parent).array();
            else
                inside += w * v.col(parent).array();
        }
        v.col(node) = inside.tanh() + linear + nmat.col(node).array();
    }

    Dataset out;
    out.columns = g.observed_ids();
    out.values.resize(n, g.observed_count());
    for (std::size_t c = 0; c < out.columns.size(); ++c)
        out.values.col(static_cast<Eigen::Index>(c)) = v.col(out.columns[c]);
    return out;
}

}  // namespace lvlingam

#endif
