#ifndef LVLINGAM_CERTIFY_HPP
#define LVLINGAM_CERTIFY_HPP

#include <optional>
#include <variant>

#include "lvlingam/graph.hpp"

namespace lvlingam {

enum class QueryKind : unsigned char { TotalEffect, DirectEffect, FullMatrix };
enum class GraphSetting : unsigned char { KnownGraph, UnknownGraph };

struct IdQuery {
    QueryKind kind = QueryKind::TotalEffect;
    GraphSetting setting = GraphSetting::KnownGraph;
    NodeId source = -1;  // j; unused for FullMatrix
    NodeId target = -1;  // i; unused for FullMatrix
};

struct WitnessLatent { NodeId latent; };
struct WitnessPair { NodeId k; NodeId latent; };
struct WitnessTriple { NodeId i; NodeId j; NodeId latent; };
using Witness = std::variant<WitnessLatent, WitnessPair, WitnessTriple>;

struct IdVerdict {
    bool identifiable = true;
    std::optional<Witness> witness;  // present iff identifiable is false
    bool structurally_zero = false;  // the queried effect is zero by graph shape alone
    QueryKind kind = QueryKind::TotalEffect;
    GraphSetting setting = GraphSetting::KnownGraph;
};

namespace detail {

//! Shared scratch for one certification run over a fixed graph.
struct CertifyCtx {
    const LvDag& g;
    std::vector<NodeId> topo;
    std::vector<int> topo_pos;
    DescendantCache desc;
    std::vector<NodeId> latents_topo;

    explicit CertifyCtx(const LvDag& graph) : g(graph), topo(topological_order(graph)), desc(graph) {
        topo_pos.resize(static_cast<std::size_t>(g.node_count()));
        for (std::size_t i = 0; i < topo.size(); ++i) topo_pos[static_cast<std::size_t>(topo[i])] = static_cast<int>(i);
        for (NodeId v : topo)
            if (g.is_latent(v)) latents_topo.push_back(v);
    }

    NodeId first_child(NodeId l) const {
        NodeId best = -1;
        for (NodeId c : g.children(l))
            if (best == -1 || topo_pos[static_cast<std::size_t>(c)] < topo_pos[static_cast<std::size_t>(best)]) best = c;
        return best;
    }

    //! ch(l) \ (ch(k) ∪ {k}) == ∅
    bool children_covered_by(NodeId l, NodeId k) const {
        const auto ck = g.children(k);
        for (NodeId c : g.children(l)) {
            if (c == k) continue;
            if (!std::binary_search(ck.begin(), ck.end(), c)) return false;
        }
        return true;
    }

    //! The swap of columns j and l preserves the graph: every parent of j
    //! (of either kind), and j itself, has all of ch(l) among its children.
    bool swap_preserves_graph(NodeId j, NodeId l) {
        if (!children_covered_by(l, j)) return false;
        for (NodeId k : g.parents(j))
            if (!children_covered_by(l, k)) return false;
        return true;
    }

    NodeId first_in_topo(const NodeSet& s) const {
        NodeId best = -1;
        s.for_each([&](NodeId v) {
            if (best == -1 || topo_pos[static_cast<std::size_t>(v)] < topo_pos[static_cast<std::size_t>(best)]) best = v;
        });
        return best;
    }

    void check_pair(NodeId j, NodeId i) const {
        g.check_node(j);
        g.check_node(i);
        if (!g.is_observed(j)) throw NotObserved("node " + std::to_string(j) + " is latent");
        if (!g.is_observed(i)) throw NotObserved("node " + std::to_string(i) + " is latent");
        if (i == j) throw SameNode("source and target are both " + std::to_string(j));
    }
};

}  // namespace detail

//! Total effect of j on i, graph not assumed known. Non-identifiable iff some
//! latent l has the same observed descendants as j (forcing j to be l's
//! topologically first child) and i is still reachable from l once every edge
//! into j is removed.
inline IdVerdict tce_unknown(const CanonicalDag& dag, NodeId j, NodeId i) {
    const LvDag& g = dag;
    detail::CertifyCtx ctx(g);
    ctx.check_pair(j, i);
    IdVerdict v{true, std::nullopt, !ctx.desc.observed_descendants(j).test(i), QueryKind::TotalEffect,
                GraphSetting::UnknownGraph};
    for (NodeId l : ctx.latents_topo) {
        if (ctx.first_child(l) != j) continue;
        if (!(ctx.desc.observed_descendants(l) == ctx.desc.observed_descendants(j))) continue;
        if (!observed_descendants_cut(g, l, j).test(i)) continue;
        v.identifiable = false;
        v.witness = WitnessLatent{l};
        break;
    }
    return v;
}

//! Total effect of j on i with the graph known. As tce_unknown, but the swap
//! must additionally preserve the graph, so a witness also needs every parent
//! of j (and j itself) to dominate ch(l).
inline IdVerdict tce_known(const CanonicalDag& dag, NodeId j, NodeId i) {
    const LvDag& g = dag;
    detail::CertifyCtx ctx(g);
    ctx.check_pair(j, i);
    IdVerdict v{true, std::nullopt, !ctx.desc.observed_descendants(j).test(i), QueryKind::TotalEffect,
                GraphSetting::KnownGraph};
    for (NodeId l : ctx.latents_topo) {
        if (ctx.first_child(l) != j) continue;
        if (!(ctx.desc.observed_descendants(l) == ctx.desc.observed_descendants(j))) continue;
        if (!observed_descendants_cut(g, l, j).test(i)) continue;
        if (!ctx.swap_preserves_graph(j, l)) continue;
        v.identifiable = false;
        v.witness = WitnessLatent{l};
        break;
    }
    return v;
}

//! Direct effect of j on i, graph not assumed known. A latent l whose first
//! child k shares its observed-descendant set marks an interchangeable column
//! pair (k, l): the mixing matrix stays admissible when column k and a
//! rescaled column l trade places. One such swap perturbs the recovered
//! weight on j -> i when i is a child of l other than k and k is j or a child
//! of j. Swaps applied together also interact: each swapped column feeds the
//! rows where the next latent loads, so a sequence of pairs
//! (k_1, l_1), ..., (k_d, l_d) with i a child of l_1 (i != k_1), each k_t a
//! child of l_{t+1}, and k_d equal to j or a child of j perturbs the weight
//! too, and the correction terms of distinct sequences cannot cancel for
//! generic weights. The scan looks for a single pair first, then walks the
//! pair-interaction relation for longer sequences.
inline IdVerdict dce_unknown(const CanonicalDag& dag, NodeId j, NodeId i) {
    const LvDag& g = dag;
    detail::CertifyCtx ctx(g);
    ctx.check_pair(j, i);
    IdVerdict v{true, std::nullopt, !g.has_edge(j, i), QueryKind::DirectEffect, GraphSetting::UnknownGraph};
    for (NodeId l : ctx.latents_topo) {
        const NodeId k = ctx.first_child(l);
        if (k == i) continue;  // the swapped column's own row never changes
        if (!(k == j || g.has_edge(j, k))) continue;
        if (!g.has_edge(l, i)) continue;
        if (!(ctx.desc.observed_descendants(k) == ctx.desc.observed_descendants(l))) continue;
        v.identifiable = false;
        v.witness = WitnessPair{k, l};
        break;
    }
    if (!v.identifiable) return v;

    // No single pair moves the weight. Group swappable latents by their first
    // child; a sequence uses at most one pair per group (one column per slot),
    // so it is a path over groups under the relation "some latent of the next
    // group has the previous group's first child among its children".
    std::vector<NodeId> group_child;                 // shared first child per group
    std::vector<std::vector<NodeId>> group_latents;  // members, in scan order
    std::vector<int> group_of(static_cast<std::size_t>(g.node_count()), -1);
    for (NodeId l : ctx.latents_topo) {
        const NodeId k = ctx.first_child(l);
        if (!(ctx.desc.observed_descendants(k) == ctx.desc.observed_descendants(l))) continue;
        int c = group_of[k];
        if (c < 0) {
            c = static_cast<int>(group_child.size());
            group_of[k] = c;
            group_child.push_back(k);
            group_latents.emplace_back();
        }
        group_latents[c].push_back(l);
    }
    const int n_groups = static_cast<int>(group_child.size());
    if (n_groups < 2) return v;  // single pairs were already covered above

    std::vector<std::vector<int>> successor(n_groups);
    for (int to = 0; to < n_groups; ++to)
        for (NodeId l : group_latents[to])
            for (NodeId r : g.children(l)) {
                const int from = group_of[r];
                if (from >= 0 && from != to) successor[from].push_back(to);
            }

    // try sequence starts in scan order so the reported pair is stable
    for (int start = 0; start < n_groups && v.identifiable; ++start) {
        const NodeId k1 = group_child[start];
        if (k1 == i) continue;
        NodeId l1 = -1;
        for (NodeId l : group_latents[start])
            if (g.has_edge(l, i)) { l1 = l; break; }
        if (l1 < 0) continue;
        std::vector<char> seen(static_cast<std::size_t>(n_groups), 0);
        std::vector<int> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            const int c = stack.back();
            stack.pop_back();
            const NodeId kc = group_child[c];
            if (kc == j || g.has_edge(j, kc)) {
                v.identifiable = false;
                v.witness = WitnessPair{k1, l1};
                break;
            }
            for (int nx : successor[c])
                if (!seen[nx]) { seen[nx] = 1; stack.push_back(nx); }
        }
    }
    return v;
}

//! Direct effect of j on i with the graph known: dce_unknown plus the
//! graph-preservation requirement on the (k, l) swap.
inline IdVerdict dce_known(const CanonicalDag& dag, NodeId j, NodeId i) {
    const LvDag& g = dag;
    detail::CertifyCtx ctx(g);
    ctx.check_pair(j, i);
    IdVerdict v{true, std::nullopt, !g.has_edge(j, i), QueryKind::DirectEffect, GraphSetting::KnownGraph};
    for (NodeId l : ctx.latents_topo) {
        const NodeId k = ctx.first_child(l);
        if (k == i) continue;
        if (!(k == j || g.has_edge(j, k))) continue;
        if (!g.has_edge(l, i)) continue;
        if (!(ctx.desc.observed_descendants(k) == ctx.desc.observed_descendants(l))) continue;
        if (!ctx.swap_preserves_graph(k, l)) continue;
        v.identifiable = false;
        v.witness = WitnessPair{k, l};
        break;
    }
    return v;
}

//! Whole observed-block identifiability, graph unknown. Non-identifiable iff
//! any latent shares its observed-descendant set with its first child.
inline IdVerdict matrix_unknown(const CanonicalDag& dag) {
    const LvDag& g = dag;
    detail::CertifyCtx ctx(g);
    IdVerdict v{true, std::nullopt, false, QueryKind::FullMatrix, GraphSetting::UnknownGraph};
    for (NodeId l : ctx.latents_topo) {
        const NodeId j = ctx.first_child(l);
        if (!(ctx.desc.observed_descendants(j) == ctx.desc.observed_descendants(l))) continue;
        v.identifiable = false;
        v.witness = WitnessPair{j, l};
        break;
    }
    return v;
}

//! Whole observed-block identifiability with the graph known. The witness
//! names a concrete non-identifiable total effect (i, j) along with the
//! latent: i is the topologically first node still reachable from l with j's
//! in-edges cut, which is never empty (l has a second child).
inline IdVerdict matrix_known(const CanonicalDag& dag) {
    const LvDag& g = dag;
    detail::CertifyCtx ctx(g);
    IdVerdict v{true, std::nullopt, false, QueryKind::FullMatrix, GraphSetting::KnownGraph};
    for (NodeId l : ctx.latents_topo) {
        const NodeId j = ctx.first_child(l);
        if (!(ctx.desc.observed_descendants(j) == ctx.desc.observed_descendants(l))) continue;
        if (!ctx.swap_preserves_graph(j, l)) continue;
        const NodeId i = ctx.first_in_topo(observed_descendants_cut(g, l, j));
        v.identifiable = false;
        v.witness = WitnessTriple{i, j, l};
        break;
    }
    return v;
}

//! Single entry point used by the CLI and the oracle cross-checks.
inline IdVerdict certify(const CanonicalDag& dag, const IdQuery& q) {
    switch (q.kind) {
        case QueryKind::TotalEffect:
            return q.setting == GraphSetting::KnownGraph ? tce_known(dag, q.source, q.target)
                                                         : tce_unknown(dag, q.source, q.target);
        case QueryKind::DirectEffect:
            return q.setting == GraphSetting::KnownGraph ? dce_known(dag, q.source, q.target)
                                                         : dce_unknown(dag, q.source, q.target);
        case QueryKind::FullMatrix:
        default:
            return q.setting == GraphSetting::KnownGraph ? matrix_known(dag) : matrix_unknown(dag);
    }
}

}  // namespace lvlingam

#endif
