#ifndef LVLINGAM_GRAPH_HPP
#define LVLINGAM_GRAPH_HPP

#include <algorithm>
#include <queue>
#include <span>
#include <sstream>
#include <utility>

#include "lvlingam/common.hpp"

namespace lvlingam {

//! Directed graph over a fixed node set partitioned into observed and latent
//! nodes. Node ids are dense integers 0..p-1. Construction checks ids, self
//! loops and duplicate edges; acyclicity and canonical form are checked by
//! topological_order / validate.
class LvDag {
public:
    LvDag() = default;

    LvDag(std::vector<NodeKind> kinds, std::vector<Edge> edges)
        : kinds_(std::move(kinds)), edges_(std::move(edges)) {
        const int p = static_cast<int>(kinds_.size());
        for (const auto& e : edges_) {
            if (e.from < 0 || e.from >= p || e.to < 0 || e.to >= p)
                throw InvalidGraph("edge (" + std::to_string(e.from) + "," + std::to_string(e.to) +
                                   ") references a node outside 0.." + std::to_string(p - 1));
            if (e.from == e.to)
                throw InvalidGraph("self loop on node " + std::to_string(e.from));
        }
        std::sort(edges_.begin(), edges_.end());
        if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
            throw InvalidGraph("duplicate edge");
        children_.resize(kinds_.size());
        parents_.resize(kinds_.size());
        for (const auto& e : edges_) {
            children_[static_cast<std::size_t>(e.from)].push_back(e.to);
            parents_[static_cast<std::size_t>(e.to)].push_back(e.from);
        }
        for (auto& v : parents_) std::sort(v.begin(), v.end());
        for (auto k : kinds_) (k == NodeKind::Observed ? p_o_ : p_l_)++;
    }

    int node_count() const { return static_cast<int>(kinds_.size()); }
    int observed_count() const { return p_o_; }
    int latent_count() const { return p_l_; }

    void check_node(NodeId v) const {
        if (v < 0 || v >= node_count()) throw UnknownNode("node " + std::to_string(v) + " does not exist");
    }

    NodeKind kind(NodeId v) const {
        check_node(v);
        return kinds_[static_cast<std::size_t>(v)];
    }
    bool is_observed(NodeId v) const { return kind(v) == NodeKind::Observed; }
    bool is_latent(NodeId v) const { return kind(v) == NodeKind::Latent; }
    const std::vector<NodeKind>& kinds() const { return kinds_; }

    std::span<const NodeId> children(NodeId v) const {
        check_node(v);
        return children_[static_cast<std::size_t>(v)];
    }
    std::span<const NodeId> parents(NodeId v) const {
        check_node(v);
        return parents_[static_cast<std::size_t>(v)];
    }

    //! Edges sorted by (from, to); parallel containers elsewhere rely on this order.
    const std::vector<Edge>& edges() const { return edges_; }

    bool has_edge(NodeId from, NodeId to) const {
        check_node(from);
        check_node(to);
        const auto& c = children_[static_cast<std::size_t>(from)];
        return std::binary_search(c.begin(), c.end(), to);
    }

    std::vector<NodeId> observed_ids() const {
        std::vector<NodeId> out;
        for (NodeId v = 0; v < node_count(); ++v)
            if (kinds_[static_cast<std::size_t>(v)] == NodeKind::Observed) out.push_back(v);
        return out;
    }
    std::vector<NodeId> latent_ids() const {
        std::vector<NodeId> out;
        for (NodeId v = 0; v < node_count(); ++v)
            if (kinds_[static_cast<std::size_t>(v)] == NodeKind::Latent) out.push_back(v);
        return out;
    }

    friend bool operator==(const LvDag&, const LvDag&) = default;

private:
    std::vector<NodeKind> kinds_;
    std::vector<Edge> edges_;
    std::vector<std::vector<NodeId>> children_;  // insertion order of sorted edges: ascending
    std::vector<std::vector<NodeId>> parents_;   // ascending
    int p_o_ = 0;
    int p_l_ = 0;
};

//! Kahn's algorithm; ties broken by ascending node id. Throws CycleDetected
//! naming every node left unplaced (nodes on or downstream of a cycle).
inline std::vector<NodeId> topological_order(const LvDag& g) {
    const int p = g.node_count();
    std::vector<int> indeg(static_cast<std::size_t>(p), 0);
    for (const auto& e : g.edges()) indeg[static_cast<std::size_t>(e.to)]++;
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (NodeId v = 0; v < p; ++v)
        if (indeg[static_cast<std::size_t>(v)] == 0) ready.push(v);
    std::vector<NodeId> order;
    order.reserve(static_cast<std::size_t>(p));
    while (!ready.empty()) {
        NodeId v = ready.top();
        ready.pop();
        order.push_back(v);
        for (NodeId c : g.children(v))
            if (--indeg[static_cast<std::size_t>(c)] == 0) ready.push(c);
    }
    if (static_cast<int>(order.size()) != p) {
        std::vector<NodeId> stuck;
        for (NodeId v = 0; v < p; ++v)
            if (indeg[static_cast<std::size_t>(v)] > 0) stuck.push_back(v);
        std::ostringstream msg;
        msg << "cycle detected involving nodes";
        for (NodeId v : stuck) msg << ' ' << v;
        throw CycleDetected(msg.str(), {Violation{ViolationKind::Cycle, stuck}});
    }
    return order;
}

//! Observed descendants of v, including v itself when observed.
inline NodeSet observed_descendants(const LvDag& g, NodeId v) {
    g.check_node(v);
    NodeSet seen(g.node_count());
    NodeSet out(g.node_count());
    std::vector<NodeId> stack{v};
    seen.set(v);
    if (g.is_observed(v)) out.set(v);
    while (!stack.empty()) {
        NodeId u = stack.back();
        stack.pop_back();
        for (NodeId c : g.children(u)) {
            if (seen.test(c)) continue;
            seen.set(c);
            if (g.is_observed(c)) out.set(c);
            stack.push_back(c);
        }
    }
    return out;
}

//! Observed descendants of l in the graph with every in-edge of j removed.
inline NodeSet observed_descendants_cut(const LvDag& g, NodeId l, NodeId j) {
    g.check_node(l);
    g.check_node(j);
    if (l == j) throw PreconditionViolated("cut source equals cut node");
    NodeSet seen(g.node_count());
    NodeSet out(g.node_count());
    std::vector<NodeId> stack{l};
    seen.set(l);
    if (g.is_observed(l)) out.set(l);
    while (!stack.empty()) {
        NodeId u = stack.back();
        stack.pop_back();
        for (NodeId c : g.children(u)) {
            if (c == j || seen.test(c)) continue;
            seen.set(c);
            if (g.is_observed(c)) out.set(c);
            stack.push_back(c);
        }
    }
    return out;
}

//! Memoizes observed_descendants per node; meant to live for one certification run.
class DescendantCache {
public:
    explicit DescendantCache(const LvDag& g)
        : g_(&g), done_(static_cast<std::size_t>(g.node_count()), 0), memo_(static_cast<std::size_t>(g.node_count())) {}

    const NodeSet& observed_descendants(NodeId v) {
        g_->check_node(v);
        auto i = static_cast<std::size_t>(v);
        if (!done_[i]) {
            memo_[i] = lvlingam::observed_descendants(*g_, v);
            done_[i] = 1;
        }
        return memo_[i];
    }

private:
    const LvDag* g_;
    std::vector<char> done_;
    std::vector<NodeSet> memo_;
};

//! A validated canonical graph: acyclic, latents have no parents and at least
//! two observed children. Only validate() and canonicalize() construct one.
class CanonicalDag {
public:
    const LvDag& dag() const { return dag_; }
    operator const LvDag&() const { return dag_; }

private:
    friend CanonicalDag validate(LvDag dag);
    explicit CanonicalDag(LvDag d) : dag_(std::move(d)) {}
    LvDag dag_;
};

inline CanonicalDag validate(LvDag dag) {
    std::vector<Violation> violations;
    std::ostringstream msg;
    try {
        topological_order(dag);
    } catch (const CycleDetected& c) {
        violations.push_back(c.violations.front());
        msg << c.what() << "; ";
    }
    for (NodeId l = 0; l < dag.node_count(); ++l) {
        if (!dag.is_latent(l)) continue;
        if (!dag.parents(l).empty()) {
            violations.push_back({ViolationKind::LatentWithParent, {l}});
            msg << "latent " << l << " has a parent; ";
        }
        int obs_children = 0;
        for (NodeId c : dag.children(l))
            if (dag.is_observed(c)) obs_children++;
        if (obs_children < 2) {
            violations.push_back({ViolationKind::LatentWithFewChildren, {l}});
            msg << "latent " << l << " has " << obs_children << " observed children; ";
        }
    }
    if (!violations.empty()) {
        switch (violations.front().kind) {
            case ViolationKind::Cycle: throw CycleDetected(msg.str(), violations);
            case ViolationKind::LatentWithParent: throw LatentWithParent(msg.str(), violations);
            case ViolationKind::LatentWithFewChildren: throw LatentWithFewChildren(msg.str(), violations);
        }
    }
    return CanonicalDag(std::move(dag));
}

struct CanonicalizeResult {
    CanonicalDag dag;
    std::vector<NodeId> kept_original_ids;  // new id -> original id
    std::vector<NodeId> deleted_latents;    // original ids, ascending
    std::vector<Edge> added_edges;          // in original ids
    std::vector<Edge> dropped_edges;        // in original ids
    bool changed = false;

    NodeId to_original(NodeId v) const { return kept_original_ids[static_cast<std::size_t>(v)]; }
};

//! Rewrites an arbitrary acyclic LvDag into an observationally equivalent
//! canonical one: every latent is wired directly to each observed node it
//! reaches through latent-only paths, observed nodes gain direct edges to
//! observed nodes they reach the same way, all edges into latents go away, and
//! latents left with fewer than two observed children are deleted (their
//! contribution folds into the children's noise).
inline CanonicalizeResult canonicalize(const LvDag& g) {
    topological_order(g);  // throws on cycles
    const int p = g.node_count();

    // observed nodes reachable from `start` where every hop after the first
    // stays inside the latent part until it exits
    auto observed_reach_via_latents = [&](NodeId start, bool first_hop_latent_only) {
        NodeSet seen(p);
        NodeSet out(p);
        std::vector<NodeId> stack;
        for (NodeId c : g.children(start)) {
            if (first_hop_latent_only && !g.is_latent(c)) continue;
            if (g.is_observed(c)) {
                out.set(c);
            } else if (!seen.test(c)) {
                seen.set(c);
                stack.push_back(c);
            }
        }
        while (!stack.empty()) {
            NodeId u = stack.back();
            stack.pop_back();
            for (NodeId c : g.children(u)) {
                if (g.is_observed(c)) {
                    out.set(c);
                } else if (!seen.test(c)) {
                    seen.set(c);
                    stack.push_back(c);
                }
            }
        }
        return out;
    };

    std::vector<Edge> new_edges;
    std::vector<NodeId> deleted;
    NodeSet kept(p);
    for (NodeId v = 0; v < p; ++v) {
        if (g.is_observed(v)) {
            kept.set(v);
            for (NodeId c : g.children(v))
                if (g.is_observed(c)) new_edges.push_back({v, c});
            observed_reach_via_latents(v, true).for_each([&](NodeId o) {
                if (!g.has_edge(v, o)) new_edges.push_back({v, o});
            });
        } else {
            NodeSet reach = observed_reach_via_latents(v, false);
            if (reach.count() < 2) {
                deleted.push_back(v);
                continue;
            }
            kept.set(v);
            reach.for_each([&](NodeId o) { new_edges.push_back({v, o}); });
        }
    }

    std::vector<NodeId> kept_ids = kept.to_vector();
    std::vector<NodeId> new_id(static_cast<std::size_t>(p), -1);
    for (std::size_t i = 0; i < kept_ids.size(); ++i) new_id[static_cast<std::size_t>(kept_ids[i])] = static_cast<NodeId>(i);

    std::vector<NodeKind> kinds;
    kinds.reserve(kept_ids.size());
    for (NodeId v : kept_ids) kinds.push_back(g.kind(v));

    std::sort(new_edges.begin(), new_edges.end());
    std::vector<Edge> remapped;
    remapped.reserve(new_edges.size());
    for (const auto& e : new_edges)
        remapped.push_back({new_id[static_cast<std::size_t>(e.from)], new_id[static_cast<std::size_t>(e.to)]});

    std::vector<Edge> added, droppedv;
    for (const auto& e : new_edges)
        if (!g.has_edge(e.from, e.to)) added.push_back(e);
    for (const auto& e : g.edges())
        if (!std::binary_search(new_edges.begin(), new_edges.end(), e)) droppedv.push_back(e);

    bool changed = !added.empty() || !droppedv.empty() || !deleted.empty();
    return CanonicalizeResult{validate(LvDag(std::move(kinds), std::move(remapped))),
                              std::move(kept_ids),
                              std::move(deleted),
                              std::move(added),
                              std::move(droppedv),
                              changed};
}

}  // namespace lvlingam

#endif
