#ifndef LVLINGAM_ORACLE_HPP
#define LVLINGAM_ORACLE_HPP

#include <cstdint>
#include <functional>
#include <map>

#include "lvlingam/certify.hpp"
#include "lvlingam/model.hpp"
#include "lvlingam/rng.hpp"
#include "lvlingam/sem.hpp"

namespace lvlingam {

struct OracleOptions {
    int draws = 5;
    int max_nodes = 12;
    std::uint64_t seed = 0x5eedULL;
    double rel_tol = 1e-6;      // quantity-change detection
    double support_tol = 1e-7;  // absolute threshold for support recovery
    std::uint64_t max_permutations = 1u << 20;
};

namespace detail {

//! All directed paths from `from` to `to`: weight product and visited-node set
//! (endpoints included). The trivial path appears when from == to.
inline void enumerate_paths(const WeightedModel& m, NodeId at, NodeId to, double prod, NodeSet& visited,
                            std::vector<std::pair<double, NodeSet>>& out) {
    if (at == to) {
        out.emplace_back(prod, visited);
        return;
    }
    for (NodeId c : m.graph().children(at)) {
        if (visited.test(c)) continue;
        visited.set(c);
        enumerate_paths(m, c, to, prod * m.weight(at, c), visited, out);
        visited.reset(c);
    }
}

inline std::vector<std::pair<double, NodeSet>> all_paths(const WeightedModel& m, NodeId from, NodeId to) {
    std::vector<std::pair<double, NodeSet>> out;
    NodeSet visited(m.graph().node_count());
    visited.set(from);
    enumerate_paths(m, from, to, 1.0, visited, out);
    return out;
}

}  // namespace detail

//! Sum over all directed paths j -> i of edge-weight products, by explicit
//! enumeration. Equals [(I-A)^{-1}]_{i,j}; kept deliberately free of linear
//! algebra so it can serve as an independent reference.
inline double path_sum_total_effect(const WeightedModel& m, NodeId j, NodeId i, int max_nodes = 12) {
    m.graph().check_node(j);
    m.graph().check_node(i);
    if (m.graph().node_count() > max_nodes)
        throw GraphTooLargeForEnumeration("path enumeration capped at " + std::to_string(max_nodes) + " nodes");
    topological_order(m.graph());
    double total = 0.0;
    for (const auto& [w, nodes] : detail::all_paths(m, j, i)) total += w;
    return total;
}

//! det([(I-A)^{-1}]_{{i1,i2},{j1,j2}}) as the signed sum over vertex-disjoint
//! path systems (j1 -> i1, j2 -> i2) minus (j1 -> i2, j2 -> i1).
inline double minor_disjoint_path_systems(const WeightedModel& m, NodeId i1, NodeId i2, NodeId j1, NodeId j2,
                                          int max_nodes = 12) {
    if (m.graph().node_count() > max_nodes)
        throw GraphTooLargeForEnumeration("path enumeration capped at " + std::to_string(max_nodes) + " nodes");
    auto disjoint_sum = [&](NodeId a1, NodeId b1, NodeId a2, NodeId b2) {
        double s = 0.0;
        for (const auto& [w1, n1] : detail::all_paths(m, a1, b1))
            for (const auto& [w2, n2] : detail::all_paths(m, a2, b2))
                if (!n1.intersects(n2)) s += w1 * w2;
        return s;
    };
    return disjoint_sum(j1, i1, j2, i2) - disjoint_sum(j1, i2, j2, i1);
}

//! Column permutation of a mixing matrix: position v receives old column map[v].
struct ColumnPermutation {
    std::vector<NodeId> map;

    bool is_identity() const {
        for (std::size_t v = 0; v < map.size(); ++v)
            if (map[v] != static_cast<NodeId>(v)) return false;
        return true;
    }

    std::vector<std::vector<NodeId>> cycles() const {  // nontrivial only
        std::vector<std::vector<NodeId>> out;
        std::vector<char> seen(map.size(), 0);
        for (std::size_t s = 0; s < map.size(); ++s) {
            if (seen[s] || map[s] == static_cast<NodeId>(s)) continue;
            std::vector<NodeId> cyc;
            auto v = static_cast<NodeId>(s);
            while (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                cyc.push_back(v);
                v = map[static_cast<std::size_t>(v)];
            }
            out.push_back(std::move(cyc));
        }
        return out;
    }
};

struct RecoveredModel {
    Eigen::MatrixXd a_oo;            // indexed by observed position (row-binding order)
    Eigen::MatrixXd a_ol;            // columns follow lat_cols
    std::vector<NodeId> obs_cols;    // column indices holding observed roles
    std::vector<NodeId> lat_cols;    // column indices holding latent roles
    LvDag support;                   // thresholded structure; node ids = column indices
    bool canonical_valid = false;    // zero diagonal, acyclic, latents with >= 2 children
};

//! Inverts the mixing map: rescales every column so its first nonzero entry in
//! row_scan_order is 1, then A_oo = I - B_o^{-1} and A_ol = B_o^{-1} B_l, and
//! thresholds to a support graph.
//! row_scan_order lists row indices (0..p_o-1) topologically.
inline RecoveredModel recover_model(const Eigen::MatrixXd& bprime, const std::vector<NodeKind>& column_roles,
                                    const std::vector<int>& row_scan_order, double support_tol = 1e-7) {
    const int p_o = static_cast<int>(bprime.rows());
    const int p = static_cast<int>(bprime.cols());
    if (static_cast<int>(column_roles.size()) != p || static_cast<int>(row_scan_order.size()) != p_o)
        throw DimensionMismatch("column_roles/row_scan_order do not match the mixing matrix");

    Eigen::MatrixXd scaled = bprime;
    for (int c = 0; c < p; ++c) {
        double pivot = 0.0;
        for (int r : row_scan_order) {
            if (std::abs(scaled(r, c)) > support_tol) {
                pivot = scaled(r, c);
                break;
            }
        }
        if (pivot != 0.0) scaled.col(c) /= pivot;
    }

    RecoveredModel out;
    for (int c = 0; c < p; ++c)
        (column_roles[static_cast<std::size_t>(c)] == NodeKind::Observed ? out.obs_cols : out.lat_cols)
            .push_back(c);
    if (static_cast<int>(out.obs_cols.size()) != p_o)
        throw DimensionMismatch("observed column count differs from row count");

    Eigen::MatrixXd b_o(p_o, p_o), b_l(p_o, p - p_o);
    for (int c = 0; c < p_o; ++c) b_o.col(c) = scaled.col(out.obs_cols[static_cast<std::size_t>(c)]);
    for (std::size_t c = 0; c < out.lat_cols.size(); ++c) b_l.col(static_cast<Eigen::Index>(c)) = scaled.col(out.lat_cols[c]);

    Eigen::FullPivLU<Eigen::MatrixXd> lu(b_o);
    if (!lu.isInvertible()) throw SingularObservedBlock("observed block of the mixing matrix is singular");
    Eigen::MatrixXd b_o_inv = lu.inverse();
    out.a_oo = Eigen::MatrixXd::Identity(p_o, p_o) - b_o_inv;
    out.a_ol = b_o_inv * b_l;

    bool zero_diag = true;
    for (int v = 0; v < p_o; ++v) zero_diag = zero_diag && std::abs(out.a_oo(v, v)) <= support_tol;

    std::vector<NodeKind> kinds(static_cast<std::size_t>(p));
    for (int c = 0; c < p; ++c) kinds[static_cast<std::size_t>(c)] = column_roles[static_cast<std::size_t>(c)];
    std::vector<Edge> edges;
    for (int r = 0; r < p_o; ++r)
        for (int c = 0; c < p_o; ++c)
            if (r != c && std::abs(out.a_oo(r, c)) > support_tol)
                edges.push_back({out.obs_cols[static_cast<std::size_t>(c)], out.obs_cols[static_cast<std::size_t>(r)]});
    for (int r = 0; r < p_o; ++r)
        for (std::size_t c = 0; c < out.lat_cols.size(); ++c)
            if (std::abs(out.a_ol(r, static_cast<Eigen::Index>(c))) > support_tol)
                edges.push_back({out.lat_cols[c], out.obs_cols[static_cast<std::size_t>(r)]});
    out.support = LvDag(std::move(kinds), std::move(edges));

    bool acyclic = true;
    try {
        topological_order(out.support);
    } catch (const CycleDetected&) {
        acyclic = false;
    }
    bool latents_ok = true;
    for (NodeId l : out.support.latent_ids())
        latents_ok = latents_ok && static_cast<int>(out.support.children(l).size()) >= 2;
    out.canonical_valid = zero_diag && acyclic && latents_ok;
    return out;
}

namespace detail {

inline std::vector<int> observed_row_scan_order(const LvDag& g) {
    const std::vector<int> pos = observed_positions(g);
    std::vector<int> order;
    for (NodeId v : topological_order(g))
        if (g.is_observed(v)) order.push_back(pos[static_cast<std::size_t>(v)]);
    return order;
}

inline WeightedModel generic_draw(const LvDag& g, Rng& rng) { return draw_weights(g, rng); }

}  // namespace detail

//! Checks the closed form for what a (j, l) column swap does to the recovered
//! observed adjacency: with u the direct-edge column of l (unit at j),
//! A_oo picks up (u - e_j) * row_j(I - A_oo). Equivalently, entries move only
//! at rows in ch(l) \ {j} and columns in (pa(j) ∩ O) ∪ {j}, by exactly
//! a_{i,l} * [I - A_oo]_{j,k}. Returns true when the numerically recovered
//! adjacency matches this prediction entrywise within tol.
inline bool swapped_adjacency_check(const WeightedModel& m, NodeId j, NodeId l, double tol = 1e-8) {
    const LvDag& g = m.graph();
    validate(g);
    g.check_node(j);
    g.check_node(l);
    if (!g.is_observed(j) || !g.is_latent(l)) throw PreconditionViolated("need an observed j and a latent l");
    if (!(observed_descendants(g, j) == observed_descendants(g, l)))
        throw PreconditionViolated("j and l do not share their observed descendants");

    const int p_o = g.observed_count();
    const std::vector<int> pos = detail::observed_positions(g);
    const std::vector<NodeId> latents = g.latent_ids();

    MixingMatrix mm = detail::mixing_unchecked(m);
    Eigen::MatrixXd swapped = mm.values;
    swapped.col(j).swap(swapped.col(l));

    RecoveredModel rec = recover_model(swapped, g.kinds(), detail::observed_row_scan_order(g), tol * 1e-2);

    // ground truth blocks of the unswapped model
    Eigen::MatrixXd a = m.adjacency();
    Eigen::MatrixXd a_oo(p_o, p_o);
    const std::vector<NodeId> obs = g.observed_ids();
    for (int r = 0; r < p_o; ++r)
        for (int c = 0; c < p_o; ++c) a_oo(r, c) = a(obs[static_cast<std::size_t>(r)], obs[static_cast<std::size_t>(c)]);

    // predicted change: outer product of (direct effects of l, minus e_j) with row j of I - A_oo
    Eigen::VectorXd u = Eigen::VectorXd::Zero(p_o);
    for (NodeId c : g.children(l)) u(pos[static_cast<std::size_t>(c)]) = m.weight(l, c);
    u(pos[static_cast<std::size_t>(j)]) -= 1.0;
    Eigen::RowVectorXd row_j = -a_oo.row(pos[static_cast<std::size_t>(j)]);
    row_j(pos[static_cast<std::size_t>(j)]) += 1.0;
    Eigen::MatrixXd predicted = a_oo + u * row_j;

    if (((rec.a_oo - predicted).cwiseAbs().maxCoeff()) > tol) return false;

    // the change pattern itself: rows ch(l) \ {j}, columns (pa(j) ∩ O) ∪ {j}
    Eigen::MatrixXd delta = predicted - a_oo;
    for (int r = 0; r < p_o; ++r) {
        for (int c = 0; c < p_o; ++c) {
            if (std::abs(delta(r, c)) <= tol) continue;
            const NodeId rn = obs[static_cast<std::size_t>(r)];
            const NodeId cn = obs[static_cast<std::size_t>(c)];
            const bool row_ok = g.has_edge(l, rn) && rn != j;
            const bool col_ok = cn == j || g.has_edge(cn, j);
            if (!row_ok || !col_ok) return false;
        }
    }
    return true;
}

//! Precomputes generic draws and the valid permutation sets for one graph,
//! then answers brute-force identifiability queries against them.
class OracleRun {
public:
    OracleRun(const CanonicalDag& dag, OracleOptions opts = {})
        : g_(dag), opts_(opts), topo_(topological_order(g_)), pos_(detail::observed_positions(g_)) {
        const int p = g_.node_count();
        if (p > opts_.max_nodes)
            throw GraphTooLargeForEnumeration("oracle capped at " + std::to_string(opts_.max_nodes) + " nodes");
        Rng rng(opts_.seed);
        for (int d = 0; d < opts_.draws; ++d) {
            models_.push_back(detail::generic_draw(g_, rng));
            mixings_.push_back(detail::mixing_unchecked(models_.back()));
        }
        scan_order_ = detail::observed_row_scan_order(g_);
        candidates_ = class_restricted_permutations();
    }

    const LvDag& graph() const { return g_; }

    //! Candidate permutations (within observed-descendant classes) that are
    //! valid alternatives for the setting. Identity is always first.
    const std::vector<ColumnPermutation>& valid_permutations(GraphSetting setting) {
        auto& slot = setting == GraphSetting::KnownGraph ? valid_known_ : valid_unknown_;
        if (!slot) {
            std::vector<ColumnPermutation> out;
            for (const auto& cand : candidates_)
                if (cand.is_identity() || permutation_valid(cand, setting)) out.push_back(cand);
            slot = std::move(out);
        }
        return *slot;
    }

    IdVerdict tce(NodeId j, NodeId i, GraphSetting setting) {
        detail::CertifyCtx ctx(g_);
        ctx.check_pair(j, i);
        IdVerdict v{true, std::nullopt, !observed_descendants(g_, j).test(i), QueryKind::TotalEffect, setting};
        for (const auto& sigma : valid_permutations(setting)) {
            if (sigma.map[static_cast<std::size_t>(j)] == j) continue;  // column j untouched
            for (int d = 0; d < opts_.draws; ++d) {
                const Eigen::MatrixXd scaled = rescaled_permuted(d, sigma);
                const double before = mixings_[static_cast<std::size_t>(d)].values(pos_[static_cast<std::size_t>(i)], j);
                const double after = scaled(pos_[static_cast<std::size_t>(i)], j);
                if (changed(before, after)) {
                    v.identifiable = false;
                    v.witness = WitnessLatent{sigma.map[static_cast<std::size_t>(j)]};
                    return v;
                }
            }
        }
        return v;
    }

    IdVerdict dce(NodeId j, NodeId i, GraphSetting setting) {
        detail::CertifyCtx ctx(g_);
        ctx.check_pair(j, i);
        IdVerdict v{true, std::nullopt, !g_.has_edge(j, i), QueryKind::DirectEffect, setting};
        const int rj = pos_[static_cast<std::size_t>(j)];
        const int ri = pos_[static_cast<std::size_t>(i)];
        for (const auto& sigma : valid_permutations(setting)) {
            if (sigma.is_identity()) continue;
            for (int d = 0; d < opts_.draws; ++d) {
                const double before = models_[static_cast<std::size_t>(d)].graph().has_edge(j, i)
                                          ? models_[static_cast<std::size_t>(d)].weight(j, i)
                                          : 0.0;
                RecoveredModel rec = recover_or_null(d, sigma);
                if (rec.obs_cols.empty()) continue;  // singular; not a usable alternative
                if (changed(before, rec.a_oo(ri, rj))) {
                    v.identifiable = false;
                    v.witness = first_moved_pair(sigma);
                    return v;
                }
            }
        }
        return v;
    }

    IdVerdict matrix(GraphSetting setting) {
        IdVerdict v{true, std::nullopt, false, QueryKind::FullMatrix, setting};
        for (const auto& sigma : valid_permutations(setting)) {
            if (sigma.is_identity()) continue;
            for (int d = 0; d < opts_.draws; ++d) {
                const Eigen::MatrixXd scaled = rescaled_permuted(d, sigma);
                bool moved = false;
                for (NodeId c : g_.observed_ids())
                    for (int r = 0; r < g_.observed_count() && !moved; ++r)
                        moved = changed(mixings_[static_cast<std::size_t>(d)].values(r, c), scaled(r, c));
                if (moved) {
                    v.identifiable = false;
                    v.witness = first_moved_pair(sigma);
                    return v;
                }
            }
        }
        return v;
    }

    IdVerdict query(const IdQuery& q) {
        switch (q.kind) {
            case QueryKind::TotalEffect: return tce(q.source, q.target, q.setting);
            case QueryKind::DirectEffect: return dce(q.source, q.target, q.setting);
            case QueryKind::FullMatrix:
            default: return matrix(q.setting);
        }
    }

private:
    bool changed(double before, double after) const {
        return std::abs(after - before) > opts_.rel_tol * std::max(1.0, std::abs(before));
    }

    Witness first_moved_pair(const ColumnPermutation& sigma) const {
        for (NodeId v : topo_) {
            if (!g_.is_observed(v) || sigma.map[static_cast<std::size_t>(v)] == v) continue;
            return WitnessPair{v, sigma.map[static_cast<std::size_t>(v)]};
        }
        return WitnessPair{-1, -1};
    }

    Eigen::MatrixXd permuted(int draw, const ColumnPermutation& sigma) const {
        const Eigen::MatrixXd& b = mixings_[static_cast<std::size_t>(draw)].values;
        Eigen::MatrixXd out(b.rows(), b.cols());
        for (int v = 0; v < static_cast<int>(b.cols()); ++v) out.col(v) = b.col(sigma.map[static_cast<std::size_t>(v)]);
        return out;
    }

    //! Permute, then rescale each column to unit first entry in scan order,
    //! mirroring the scaling ambiguity the observational distribution leaves.
    Eigen::MatrixXd rescaled_permuted(int draw, const ColumnPermutation& sigma) const {
        Eigen::MatrixXd out = permuted(draw, sigma);
        for (int c = 0; c < static_cast<int>(out.cols()); ++c) {
            double pivot = 0.0;
            for (int r : scan_order_) {
                if (std::abs(out(r, c)) > opts_.support_tol) {
                    pivot = out(r, c);
                    break;
                }
            }
            if (pivot != 0.0) out.col(c) /= pivot;
        }
        return out;
    }

    RecoveredModel recover_or_null(int draw, const ColumnPermutation& sigma) const {
        try {
            return recover_model(permuted(draw, sigma), g_.kinds(), scan_order_, opts_.support_tol);
        } catch (const SingularObservedBlock&) {
            return RecoveredModel{};
        }
    }

    //! Support of the permuted mixing across all draws (max magnitude), so a
    //! single accidental near-zero cannot hide an edge.
    bool permutation_valid(const ColumnPermutation& sigma, GraphSetting setting) {
        const int p = g_.node_count();
        const int p_o = g_.observed_count();
        Eigen::MatrixXd max_oo = Eigen::MatrixXd::Zero(p_o, p_o);
        Eigen::MatrixXd max_ol = Eigen::MatrixXd::Zero(p_o, p - p_o);
        bool diag_zero = true;
        for (int d = 0; d < opts_.draws; ++d) {
            RecoveredModel rec = recover_or_null(d, sigma);
            if (rec.obs_cols.empty()) return false;  // singular observed block
            max_oo = max_oo.cwiseMax(rec.a_oo.cwiseAbs());
            max_ol = max_ol.cwiseMax(rec.a_ol.cwiseAbs());
            for (int v = 0; v < p_o; ++v) diag_zero = diag_zero && std::abs(rec.a_oo(v, v)) <= opts_.support_tol;
        }
        if (!diag_zero) return false;

        std::vector<NodeKind> kinds = g_.kinds();
        const std::vector<NodeId> obs = g_.observed_ids();
        const std::vector<NodeId> lats = g_.latent_ids();
        std::vector<Edge> edges;
        for (int r = 0; r < p_o; ++r)
            for (int c = 0; c < p_o; ++c)
                if (r != c && max_oo(r, c) > opts_.support_tol)
                    edges.push_back({obs[static_cast<std::size_t>(c)], obs[static_cast<std::size_t>(r)]});
        for (int r = 0; r < p_o; ++r)
            for (std::size_t c = 0; c < lats.size(); ++c)
                if (max_ol(r, static_cast<Eigen::Index>(c)) > opts_.support_tol)
                    edges.push_back({lats[c], obs[static_cast<std::size_t>(r)]});

        if (setting == GraphSetting::KnownGraph) {
            std::sort(edges.begin(), edges.end());
            return edges == g_.edges();
        }
        LvDag support(std::move(kinds), std::move(edges));
        try {
            topological_order(support);
        } catch (const CycleDetected&) {
            return false;
        }
        for (NodeId l : support.latent_ids())
            if (static_cast<int>(support.children(l).size()) < 2) return false;
        return true;
    }

    //! All permutations fixing each observed-descendant equivalence class.
    std::vector<ColumnPermutation> class_restricted_permutations() const {
        const int p = g_.node_count();
        std::map<std::vector<NodeId>, std::vector<NodeId>> classes;
        for (NodeId v = 0; v < p; ++v) classes[observed_descendants(g_, v).to_vector()].push_back(v);

        std::vector<std::vector<NodeId>> groups;
        std::uint64_t total = 1;
        for (auto& [key, members] : classes) {
            if (members.size() < 2) continue;
            std::uint64_t f = 1;
            for (std::size_t t = 2; t <= members.size(); ++t) f *= t;
            if (total > opts_.max_permutations / f)
                throw GraphTooLargeForEnumeration("too many class-restricted column permutations");
            total *= f;
            groups.push_back(members);
        }

        std::vector<ColumnPermutation> out;
        ColumnPermutation identity;
        identity.map.resize(static_cast<std::size_t>(p));
        for (NodeId v = 0; v < p; ++v) identity.map[static_cast<std::size_t>(v)] = v;

        std::vector<std::vector<NodeId>> arrangement(groups.size());
        for (std::size_t i = 0; i < groups.size(); ++i) arrangement[i] = groups[i];

        // odometer over per-class permutations
        std::function<void(std::size_t, ColumnPermutation&)> rec = [&](std::size_t gi, ColumnPermutation& acc) {
            if (gi == groups.size()) {
                out.push_back(acc);
                return;
            }
            std::vector<NodeId> perm = groups[gi];
            std::sort(perm.begin(), perm.end());
            do {
                for (std::size_t t = 0; t < perm.size(); ++t)
                    acc.map[static_cast<std::size_t>(groups[gi][t])] = perm[t];
                rec(gi + 1, acc);
            } while (std::next_permutation(perm.begin(), perm.end()));
            for (NodeId v : groups[gi]) acc.map[static_cast<std::size_t>(v)] = v;
        };
        ColumnPermutation acc = identity;
        rec(0, acc);

        // identity first, for readability of listings
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].is_identity()) {
                std::swap(out[0], out[i]);
                break;
            }
        }
        return out;
    }

    LvDag g_;  // owned copy; callers may pass temporaries
    OracleOptions opts_;
    std::vector<NodeId> topo_;
    std::vector<int> pos_;
    std::vector<int> scan_order_;
    std::vector<WeightedModel> models_;
    std::vector<MixingMatrix> mixings_;
    std::vector<ColumnPermutation> candidates_;
    std::optional<std::vector<ColumnPermutation>> valid_known_;
    std::optional<std::vector<ColumnPermutation>> valid_unknown_;
};

//! One-shot wrapper over OracleRun.
inline IdVerdict bruteforce_identifiable(const CanonicalDag& dag, const IdQuery& q, OracleOptions opts = {}) {
    OracleRun run(dag, opts);
    return run.query(q);
}

//! Candidate-free convenience used by the CLI --oracle flag.
inline std::vector<ColumnPermutation> valid_permutations(const CanonicalDag& dag, GraphSetting setting,
                                                         OracleOptions opts = {}) {
    OracleRun run(dag, opts);
    return run.valid_permutations(setting);
}

}  // namespace lvlingam

#endif
