#ifndef LVLINGAM_GRICA_HPP
#define LVLINGAM_GRICA_HPP

#include <cmath>
#include <cstdint>
#include <limits>

#include "lvlingam/model.hpp"
#include "lvlingam/rng.hpp"
#include "lvlingam/sem.hpp"

namespace lvlingam {

enum class ContrastKind : unsigned char { SmoothL1, LogCosh };

//! Smooth non-Gaussianity contrast applied componentwise to reconstructed
//! noise. SmoothL1(beta) tends to |u| as beta grows; LogCosh(scale) is its
//! rescaled sibling with slope tanh(u/scale).
struct Contrast {
    ContrastKind kind = ContrastKind::SmoothL1;
    double param = 10.0;  // sharpness beta, or the LogCosh scale

    void check() const {
        if (!(param > 0.0)) throw PreconditionViolated("contrast parameter must be positive");
    }

    static double logcosh(double x) {  // overflow-safe
        const double a = std::abs(x);
        return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453;
    }

    double value(double u) const {
        return kind == ContrastKind::SmoothL1 ? logcosh(param * u) / param : param * logcosh(u / param);
    }
    double slope(double u) const {
        return kind == ContrastKind::SmoothL1 ? std::tanh(param * u) : std::tanh(u / param);
    }
};

enum class OptimizerKind : unsigned char { QuasiSecondOrder, FirstOrderAdaptive };
enum class InitKind : unsigned char { Zeros, Random, Warm };

struct EstimatorConfig {
    Contrast contrast{};
    OptimizerKind optimizer = OptimizerKind::QuasiSecondOrder;
    double step_size = 0.05;  // first-order learning rate
    int max_iterations = 2000;
    double tolerance = 1e-7;  // sup-norm of the gradient
    int restarts = 5;
    InitKind init = InitKind::Zeros;  // used by the first restart; later restarts draw random points
    double init_scale = 0.1;
    std::vector<double> warm;  // free-edge weights for InitKind::Warm
    bool normalize = false;    // opt-in: optimize on unit-variance columns, map weights back
    std::uint64_t seed = 0;

    void check() const {
        contrast.check();
        if (!(step_size > 0.0) || !(tolerance > 0.0) || max_iterations < 1 || restarts < 1 ||
            !(init_scale >= 0.0))
            throw PreconditionViolated("estimator configuration out of range");
    }
};

struct EstimateReport {
    WeightedModel model;  // all edges, scaling edges pinned to 1
    MixingMatrix bprime;
    std::vector<double> restart_objectives;  // NaN marks a diverged restart
    int chosen_restart = -1;
    std::vector<int> iterations;
    double grad_norm = 0.0;
};

//! Edges whose weights the estimator searches over: everything except each
//! latent's scaling edge onto its first child.
inline std::vector<Edge> free_edges(const LvDag& g) {
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
    std::vector<Edge> out;
    for (const Edge& e : g.edges())
        if (!(g.is_latent(e.from) && first_child[static_cast<std::size_t>(e.from)] == e.to)) out.push_back(e);
    return out;
}

namespace detail {

//! Mirrored Gauss-Legendre panels, widths doubling away from the center, used
//! for multi-latent tensor grids where exact feature alignment is infeasible.
inline std::vector<std::pair<double, double>> quad_layout() {
    static constexpr double x7[] = {0.0, 0.40584515137739716691, 0.74153118559939443986, 0.94910791234275852453};
    static constexpr double w7[] = {0.41795918367346938776, 0.38183005050511894495, 0.27970539148927666790,
                                    0.12948496616886969327};
    const std::vector<double> breaks = {0.0, 0.3, 0.8, 1.8, 3.8, 7.8, 15.8};
    std::vector<std::pair<double, double>> gauss{{x7[0], w7[0]}};
    for (int m = 1; m < 4; ++m) {
        gauss.emplace_back(-x7[m], w7[m]);
        gauss.emplace_back(x7[m], w7[m]);
    }
    std::vector<std::pair<double, double>> out;
    for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
        const double a = breaks[p], b = breaks[p + 1];
        for (const auto& [t, w] : gauss) {
            const double xi = a + (b - a) * 0.5 * (1.0 + t);
            const double wt = (b - a) * 0.5 * w;
            out.emplace_back(xi, wt);
            out.emplace_back(-xi, wt);
        }
    }
    return out;
}

//! Everything the inner loop needs that depends only on the graph and data.
struct ContrastProblem {
    const LvDag& g;
    Eigen::MatrixXd x;  // n x p_o, columns in ascending observed-id order
    Contrast contrast;
    std::vector<Edge> free;
    std::vector<double> base_weights;   // scaling edges 1, free edges 0
    std::vector<std::size_t> free_idx;  // position of each free edge in edges()
    std::vector<int> pos;               // observed id -> row/col position
    std::vector<int> lat_pos;           // latent id -> latent column position
    std::vector<std::pair<double, double>> q1d;  // per-dimension quadrature offsets
    Eigen::ArrayXd col_scale;                    // per observed column contrast factor (preconditioning)
    double n;

    ContrastProblem(const LvDag& graph, const Dataset& data, const Contrast& c)
        : g(graph), contrast(c), free(free_edges(graph)), pos(observed_positions(graph)), n(data.values.rows()) {
        contrast.check();
        if (data.columns != g.observed_ids() || data.values.cols() != g.observed_count())
            throw DimensionMismatch("dataset columns are not bound to the graph's observed nodes");
        x = data.values;
        base_weights.assign(g.edges().size(), 1.0);
        const auto& edges = g.edges();
        free_idx.reserve(free.size());
        std::size_t cursor = 0;
        for (std::size_t k = 0; k < edges.size(); ++k) {
            if (cursor < free.size() && edges[k] == free[cursor]) {
                base_weights[k] = 0.0;
                free_idx.push_back(k);
                ++cursor;
            }
        }
        lat_pos.assign(static_cast<std::size_t>(g.node_count()), -1);
        const std::vector<NodeId> lats = g.latent_ids();
        for (std::size_t i = 0; i < lats.size(); ++i) lat_pos[static_cast<std::size_t>(lats[i])] = static_cast<int>(i);
        if (g.latent_count() > 1) q1d = quad_layout();
        col_scale = Eigen::ArrayXd::Ones(g.observed_count());
    }

    std::vector<double> full_weights(const Eigen::VectorXd& theta) const {
        std::vector<double> w = base_weights;
        for (std::size_t t = 0; t < free_idx.size(); ++t) w[free_idx[t]] = theta(static_cast<Eigen::Index>(t));
        return w;
    }

    // both contrasts share the shape g(t) = logcosh(k t)/k
    double sharp() const { return contrast.kind == ContrastKind::SmoothL1 ? contrast.param : 1.0 / contrast.param; }

    //! Accumulates g(cs * t) over t into val_sum; optionally writes its
    //! derivative in t, cs * tanh(k cs t), into slope. One vectorized exp
    //! serves the value, the slope, and (via the slope) the curvature
    //! k (cs^2 - slope^2). The per-column factor cs lets unit-variance
    //! preconditioning evaluate the raw objective in scaled coordinates.
    template <typename Expr>
    void contrast_terms(const Expr& t, double cs, Eigen::ArrayXd& val_sum, Eigen::ArrayXd* slope) const {
        const double k = sharp();
        const Eigen::ArrayXd s = (k * cs * t).abs();
        const Eigen::ArrayXd e = (-2.0 * s).exp();
        val_sum += (s + e.log1p() - 0.6931471805599453) / k;
        if (slope) *slope = cs * t.sign() * (1.0 - e) / (1.0 + e);
    }

    //! Objective and gradient at theta.
    //!
    //! The model x = B_o n_o + B_l n_l is inverted as n_o = (I - A_oo)x -
    //! A_ol n_l, a triangular relation that never needs a matrix inverse.
    //! Latent-free graphs score the reconstructed noise directly:
    //! F = mean_i sum_j g(n_o(x_i)_j). With latents, the unknown latent noise
    //! is marginalized: each sample contributes -log integral over u of
    //! exp(-sum_j g((I-A_oo)x_i - A_ol u)_j - sum_l g(u_l)) du.
    //!
    //! A single latent is integrated with per-sample Gauss-Legendre panels
    //! whose boundaries snap to the exponent's creases (u = 0 and the zeros
    //! u = r_ij / a_jl of each reconstructed coordinate), so the quadrature
    //! error stays smooth in theta and finite differences of the objective
    //! match the analytic gradient. Two or more latents fall back to a tensor
    //! grid centered on the per-sample mode of the exponent; that grid is
    //! accurate enough for estimation but its placement error is not smooth
    //! at finite-difference resolution. Gradients are posterior-weighted
    //! averages of d/dtheta of the exponent; node-motion terms are dropped
    //! because the posterior mean of the u-gradient of the exponent vanishes.
    double eval(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
        const int p_o = g.observed_count();
        const int p_l = g.latent_count();
        const Eigen::Index nn = x.rows();
        const double k = sharp();
        Eigen::MatrixXd a_oo = Eigen::MatrixXd::Zero(p_o, p_o);
        Eigen::MatrixXd a_ol = Eigen::MatrixXd::Zero(p_o, p_l);
        const std::vector<double> w = full_weights(theta);
        const auto& edges = g.edges();
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const Edge ed = edges[e];
            if (g.is_observed(ed.from))
                a_oo(pos[static_cast<std::size_t>(ed.to)], pos[static_cast<std::size_t>(ed.from)]) = w[e];
            else
                a_ol(pos[static_cast<std::size_t>(ed.to)], lat_pos[static_cast<std::size_t>(ed.from)]) = w[e];
        }
        Eigen::MatrixXd r = x - x * a_oo.transpose();  // rows are (I - A_oo) x_i

        if (grad) grad->setZero(static_cast<Eigen::Index>(free.size()));

        if (p_l == 0) {
            Eigen::ArrayXd total = Eigen::ArrayXd::Zero(nn);
            Eigen::MatrixXd slopes;
            if (grad) slopes.resize(nn, p_o);
            Eigen::ArrayXd sl;
            for (int j = 0; j < p_o; ++j) {
                contrast_terms(r.col(j).array(), col_scale(j), total, grad ? &sl : nullptr);
                if (grad) slopes.col(j) = sl;
            }
            if (grad && nn > 0) {
                Eigen::MatrixXd gm = x.transpose() * slopes / n;  // (from, to)
                for (std::size_t t = 0; t < free.size(); ++t)
                    (*grad)(static_cast<Eigen::Index>(t)) =
                        -gm(pos[static_cast<std::size_t>(free[t].from)], pos[static_cast<std::size_t>(free[t].to)]);
            }
            return nn > 0 ? total.sum() / n : 0.0;
        }

        // per-sample mode of the integrand's exponent: damped Newton, a fixed
        // sweep count so the placement varies smoothly with theta
        Eigen::MatrixXd u = Eigen::MatrixXd::Zero(nn, p_l);
        const Eigen::MatrixXd aol_sq = a_ol.cwiseProduct(a_ol);
        Eigen::MatrixXd st(nn, p_o), ct(nn, p_o), su(nn, p_l), cu(nn, p_l);
        for (int sweep = 0; sweep < 16; ++sweep) {
            Eigen::MatrixXd t = r - u * a_ol.transpose();
            Eigen::ArrayXd dummy = Eigen::ArrayXd::Zero(nn), sl;
            for (int j = 0; j < p_o; ++j) {
                contrast_terms(t.col(j).array(), col_scale(j), dummy, &sl);
                st.col(j) = sl;
                ct.col(j) = k * (col_scale(j) * col_scale(j) - sl.square());
            }
            for (int l = 0; l < p_l; ++l) {
                contrast_terms(u.col(l).array(), 1.0, dummy, &sl);
                su.col(l) = sl;
                cu.col(l) = k * (1.0 - sl.square());
            }
            Eigen::MatrixXd gu = su - st * a_ol;  // n x p_l
            if (p_l == 1) {
                Eigen::ArrayXd h = cu.col(0).array() + (ct * aol_sq).col(0).array();
                u.col(0) -= (gu.col(0).array() / (h + 0.05)).min(3.0).max(-3.0).matrix();
            } else {
                Eigen::MatrixXd hess(p_l, p_l);
                for (Eigen::Index i = 0; i < nn; ++i) {
                    hess = a_ol.transpose() * ct.row(i).asDiagonal() * a_ol;
                    hess.diagonal() += cu.row(i).transpose();
                    hess.diagonal().array() += 0.05;
                    Eigen::VectorXd step = hess.ldlt().solve(gu.row(i).transpose());
                    u.row(i) -= step.cwiseMin(3.0).cwiseMax(-3.0).transpose();
                }
            }
        }

        Eigen::MatrixXd t_hat = r - u * a_ol.transpose();
        Eigen::ArrayXd peak = Eigen::ArrayXd::Zero(nn);  // exponent at the mode, for stable exp
        for (int j = 0; j < p_o; ++j) contrast_terms(t_hat.col(j).array(), col_scale(j), peak, nullptr);
        for (int l = 0; l < p_l; ++l) contrast_terms(u.col(l).array(), 1.0, peak, nullptr);

        Eigen::ArrayXd z = Eigen::ArrayXd::Zero(nn);
        Eigen::MatrixXd slope_acc, lat_acc;
        if (grad) {
            slope_acc = Eigen::MatrixXd::Zero(nn, p_o);
            lat_acc = Eigen::MatrixXd::Zero(nn, p_o * p_l);
        }

        if (p_l == 1) {
            const Eigen::VectorXd acol = a_ol.col(0);
            // panel width resolving the sharpest smoothing scale in any column
            const double w0 = 1.5 / (k * std::max(1.0, col_scale.maxCoeff()));
            const double cap_near = std::max(1.6, 2.0 * w0);
            const double cap_far = std::max(4.0, 4.0 * w0);
            static constexpr double glx[5] = {-0.90617984593866399280, -0.53846931010568309104, 0.0,
                                              0.53846931010568309104, 0.90617984593866399280};
            static constexpr double glw[5] = {0.23692688505618908751, 0.47862867049936646804, 0.56888888888888888889,
                                              0.47862867049936646804, 0.23692688505618908751};
            auto gs = [k](double t, double cs) {
                const double s = std::abs(k * cs * t);
                return (s + std::log1p(std::exp(-2.0 * s)) - 0.6931471805599453) / k;
            };
            // exponent at latent value uu; terms are nonnegative, so give up
            // early once the partial sum clears bail
            auto exponent = [&](Eigen::Index i, double uu, double bail) {
                double p = gs(uu, 1.0);
                for (int j = 0; j < p_o && p < bail; ++j) p += gs(r(i, j) - acol(j) * uu, col_scale(j));
                return p;
            };

            const Eigen::Index nb = 512;
            std::vector<double> nd, wts, kv;
            std::vector<Eigen::Index> begin;
            Eigen::MatrixXd un, wn, sl_b;
            Eigen::ArrayXd sl;
            for (Eigen::Index i0 = 0; i0 < nn; i0 += nb) {
                const Eigen::Index bsz = std::min(nb, nn - i0);
                nd.clear();
                wts.clear();
                begin.assign(static_cast<std::size_t>(bsz) + 1, 0);
                for (Eigen::Index b = 0; b < bsz; ++b) {
                    const Eigen::Index i = i0 + b;
                    kv.clear();
                    kv.push_back(0.0);
                    for (int j = 0; j < p_o; ++j) {
                        const double aj = acol(j);
                        if (std::abs(aj) < 1e-8) continue;
                        const double c = r(i, j) / aj;
                        if (std::abs(c) <= 1e6) kv.push_back(c);
                    }
                    const double uh = u(i, 0), pk = peak(i);
                    for (const int dir : {1, -1}) {
                        double posn = uh, last = 0.0;
                        for (int panels = 0; panels < 220; ++panels) {
                            const double cap = std::abs(posn - uh) < 8.0 ? cap_near : cap_far;
                            double width = last == 0.0 ? w0 : std::min(2.0 * last, cap);
                            double gap = std::numeric_limits<double>::infinity();
                            for (const double c : kv) {
                                const double d = dir > 0 ? c - posn : posn - c;
                                if (d > 1e-9 && d < gap) gap = d;
                            }
                            bool land = false;
                            if (gap <= 1.6 * w0) {
                                width = gap;  // close enough: land exactly on the crease
                                land = true;
                            } else if (std::isfinite(gap)) {
                                width = std::min(width, std::max(w0, 0.5 * gap));  // halve into the crease
                            }
                            const double nxt = posn + dir * width;
                            const double half = 0.5 * width, mid = 0.5 * (posn + nxt);
                            for (int q = 0; q < 5; ++q) {
                                nd.push_back(mid + half * glx[q]);
                                wts.push_back(half * glw[q]);
                            }
                            last = land ? 0.0 : width;
                            posn = nxt;
                            if (std::abs(posn - uh) > 2.0) {
                                const double bail = pk + 28.0;
                                // the exponent is convex, so once it clears the
                                // mass scale by e^-28 nothing beyond matters
                                if (exponent(i, posn, bail) >= bail) break;
                            }
                        }
                    }
                    begin[static_cast<std::size_t>(b) + 1] = static_cast<Eigen::Index>(nd.size());
                }
                Eigen::Index kmax = 0;
                for (Eigen::Index b = 0; b < bsz; ++b)
                    kmax = std::max(kmax, begin[static_cast<std::size_t>(b) + 1] - begin[static_cast<std::size_t>(b)]);
                un.resize(bsz, kmax);
                wn.setZero(bsz, kmax);
                for (Eigen::Index b = 0; b < bsz; ++b) {
                    const Eigen::Index s = begin[static_cast<std::size_t>(b)];
                    const Eigen::Index c = begin[static_cast<std::size_t>(b) + 1] - s;
                    for (Eigen::Index q = 0; q < c; ++q) {
                        un(b, q) = nd[static_cast<std::size_t>(s + q)];
                        wn(b, q) = wts[static_cast<std::size_t>(s + q)];
                    }
                    for (Eigen::Index q = c; q < kmax; ++q) un(b, q) = u(i0 + b, 0);  // zero-weight padding
                }
                if (grad) sl_b.resize(bsz, p_o);
                for (Eigen::Index q = 0; q < kmax; ++q) {
                    const Eigen::ArrayXd uq = un.col(q);
                    Eigen::ArrayXd phi = Eigen::ArrayXd::Zero(bsz);
                    contrast_terms(uq, 1.0, phi, nullptr);
                    for (int j = 0; j < p_o; ++j) {
                        contrast_terms(r.col(j).segment(i0, bsz).array() - acol(j) * uq, col_scale(j), phi,
                                       grad ? &sl : nullptr);
                        if (grad) sl_b.col(j) = sl;
                    }
                    const Eigen::ArrayXd e = wn.col(q).array() * (peak.segment(i0, bsz) - phi).exp();
                    z.segment(i0, bsz) += e;
                    if (grad) {
                        for (int j = 0; j < p_o; ++j) {
                            slope_acc.col(j).segment(i0, bsz).array() += e * sl_b.col(j).array();
                            lat_acc.col(j).segment(i0, bsz).array() += e * sl_b.col(j).array() * uq;
                        }
                    }
                }
            }
        } else {
            Eigen::MatrixXd sl_node(nn, p_o);
            std::vector<std::size_t> idx(static_cast<std::size_t>(p_l), 0);
            Eigen::VectorXd xi(p_l);
            Eigen::ArrayXd sl;
            for (;;) {
                double wt = 1.0;
                for (int l = 0; l < p_l; ++l) {
                    xi(l) = q1d[idx[static_cast<std::size_t>(l)]].first;
                    wt *= q1d[idx[static_cast<std::size_t>(l)]].second;
                }
                const Eigen::VectorXd off = a_ol * xi;  // shift of each observed-noise column
                Eigen::ArrayXd phi = Eigen::ArrayXd::Zero(nn);
                for (int l = 0; l < p_l; ++l) contrast_terms(u.col(l).array() + xi(l), 1.0, phi, nullptr);
                for (int j = 0; j < p_o; ++j) {
                    contrast_terms(t_hat.col(j).array() - off(j), col_scale(j), phi, grad ? &sl : nullptr);
                    if (grad) sl_node.col(j) = sl;
                }
                Eigen::ArrayXd e = wt * (peak - phi).exp();
                z += e;
                if (grad) {
                    for (int j = 0; j < p_o; ++j) {
                        slope_acc.col(j).array() += e * sl_node.col(j).array();
                        for (int l = 0; l < p_l; ++l)
                            lat_acc.col(j * p_l + l).array() += e * sl_node.col(j).array() * (u.col(l).array() + xi(l));
                    }
                }
                std::size_t d = 0;
                while (d < idx.size() && ++idx[d] == q1d.size()) idx[d++] = 0;
                if (d == idx.size()) break;
            }
        }

        const double f = (peak - z.log()).sum() / n;
        if (grad) {
            const Eigen::ArrayXd zinv = z.inverse();
            Eigen::MatrixXd post = slope_acc.array().colwise() * zinv;  // posterior-mean slopes
            Eigen::MatrixXd gm = x.transpose() * post / n;
            for (std::size_t t = 0; t < free.size(); ++t) {
                const Edge e = free[t];
                if (g.is_observed(e.from))
                    (*grad)(static_cast<Eigen::Index>(t)) =
                        -gm(pos[static_cast<std::size_t>(e.from)], pos[static_cast<std::size_t>(e.to)]);
                else {
                    const int l = lat_pos[static_cast<std::size_t>(e.from)];
                    const int j = pos[static_cast<std::size_t>(e.to)];
                    (*grad)(static_cast<Eigen::Index>(t)) = -(lat_acc.col(j * p_l + l).array() * zinv).sum() / n;
                }
            }
        }
        return f;
    }
};

struct OptimizeResult {
    Eigen::VectorXd theta;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    bool finite = false;
};

//! Strong-Wolfe line search (bracket and zoom). Returns the accepted step, or
//! 0 when no acceptable step exists (objective then stays at phi0).
inline double wolfe_search(const ContrastProblem& prob, const Eigen::VectorXd& theta, const Eigen::VectorXd& dir,
                           double phi0, double dphi0, Eigen::VectorXd& theta_out, double& phi_out,
                           Eigen::VectorXd& grad_out) {
    constexpr double c1 = 1e-4, c2 = 0.9;
    auto phi = [&](double a, double& dphi, Eigen::VectorXd& grad_at) {
        theta_out = theta + a * dir;
        const double f = prob.eval(theta_out, &grad_at);
        dphi = grad_at.dot(dir);
        return f;
    };

    double lo = 0.0, hi = 0.0;
    double phi_lo = phi0, dphi_lo = dphi0;
    double prev_a = 0.0, prev_phi = phi0, prev_dphi = dphi0;
    double a = 1.0;
    bool bracketed = false;
    Eigen::VectorXd grad_trial;
    for (int it = 0; it < 30 && !bracketed; ++it) {
        double dphi_a;
        const double phi_a = phi(a, dphi_a, grad_trial);
        if (!std::isfinite(phi_a)) {
            a *= 0.5;
            continue;
        }
        if (phi_a > phi0 + c1 * a * dphi0 || (it > 0 && phi_a >= prev_phi)) {
            lo = prev_a, phi_lo = prev_phi, dphi_lo = prev_dphi, hi = a;
            bracketed = true;
            break;
        }
        if (std::abs(dphi_a) <= -c2 * dphi0) {
            phi_out = phi_a;
            grad_out = grad_trial;
            return a;
        }
        if (dphi_a >= 0.0) {
            lo = a, phi_lo = phi_a, dphi_lo = dphi_a, hi = prev_a;
            bracketed = true;
            break;
        }
        prev_a = a, prev_phi = phi_a, prev_dphi = dphi_a;
        a *= 2.0;
    }
    if (!bracketed) return 0.0;

    for (int it = 0; it < 25; ++it) {
        a = 0.5 * (lo + hi);
        double dphi_a;
        const double phi_a = phi(a, dphi_a, grad_trial);
        if (!std::isfinite(phi_a) || phi_a > phi0 + c1 * a * dphi0 || phi_a >= phi_lo) {
            hi = a;
        } else {
            if (std::abs(dphi_a) <= -c2 * dphi0) {
                phi_out = phi_a;
                grad_out = grad_trial;
                return a;
            }
            if (dphi_a * (hi - lo) >= 0.0) hi = lo;
            lo = a, phi_lo = phi_a, dphi_lo = dphi_a;
        }
    }
    // settle for the best sufficient-decrease point found
    if (lo > 0.0 && phi_lo <= phi0 + c1 * lo * dphi0) {
        double dphi_a;
        phi_out = phi(lo, dphi_a, grad_out);
        return lo;
    }
    return 0.0;
}

inline OptimizeResult lbfgs(const ContrastProblem& prob, Eigen::VectorXd theta, int max_iters, double tol) {
    constexpr int history = 8;
    OptimizeResult res;
    Eigen::VectorXd grad;
    double f = prob.eval(theta, &grad);
    if (!std::isfinite(f) || !grad.allFinite()) return res;
    if (theta.size() == 0) {
        res.theta = std::move(theta);
        res.objective = f;
        res.grad_norm = 0.0;
        res.finite = true;
        return res;
    }

    std::vector<Eigen::VectorXd> s_hist, y_hist;
    std::vector<double> rho_hist;
    int it = 0;
    for (; it < max_iters; ++it) {
        if (grad.lpNorm<Eigen::Infinity>() <= tol) break;

        // two-loop recursion
        Eigen::VectorXd dir = -grad;
        std::vector<double> alpha(s_hist.size());
        for (int h = static_cast<int>(s_hist.size()) - 1; h >= 0; --h) {
            alpha[static_cast<std::size_t>(h)] =
                rho_hist[static_cast<std::size_t>(h)] * s_hist[static_cast<std::size_t>(h)].dot(dir);
            dir -= alpha[static_cast<std::size_t>(h)] * y_hist[static_cast<std::size_t>(h)];
        }
        if (!s_hist.empty()) {
            const auto& s = s_hist.back();
            const auto& y = y_hist.back();
            dir *= s.dot(y) / y.dot(y);
        }
        for (std::size_t h = 0; h < s_hist.size(); ++h) {
            const double beta = rho_hist[h] * y_hist[h].dot(dir);
            dir += (alpha[h] - beta) * s_hist[h];
        }
        double dphi0 = grad.dot(dir);
        if (!(dphi0 < 0.0)) {  // not a descent direction; restart from steepest descent
            dir = -grad;
            dphi0 = grad.dot(dir);
            s_hist.clear(), y_hist.clear(), rho_hist.clear();
        }

        Eigen::VectorXd theta_new, grad_new;
        double f_new = f;
        const double step = wolfe_search(prob, theta, dir, f, dphi0, theta_new, f_new, grad_new);
        if (step == 0.0) break;  // no progress possible along any remembered curvature

        Eigen::VectorXd s = theta_new - theta;
        Eigen::VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > history) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        theta = std::move(theta_new);
        grad = std::move(grad_new);
        f = f_new;
        if (!std::isfinite(f) || !grad.allFinite()) return res;
    }
    res.theta = std::move(theta);
    res.objective = f;
    res.iterations = it;
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    res.finite = true;
    return res;
}

inline OptimizeResult adam(const ContrastProblem& prob, Eigen::VectorXd theta, double lr, int max_iters, double tol) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    OptimizeResult res;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
    Eigen::VectorXd grad;
    double f = prob.eval(theta, &grad);
    if (!std::isfinite(f) || !grad.allFinite()) return res;
    if (theta.size() == 0) {
        res.theta = std::move(theta);
        res.objective = f;
        res.grad_norm = 0.0;
        res.finite = true;
        return res;
    }
    int it = 0;
    for (; it < max_iters; ++it) {
        if (grad.lpNorm<Eigen::Infinity>() <= tol) break;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(b1, it + 1);
        const double bc2 = 1.0 - std::pow(b2, it + 1);
        theta -= (lr / bc1) * (m.array() / ((v.array() / bc2).sqrt() + eps)).matrix();
        f = prob.eval(theta, &grad);
        if (!std::isfinite(f) || !grad.allFinite()) return res;
    }
    res.theta = std::move(theta);
    res.objective = f;
    res.iterations = it;
    res.grad_norm = grad.lpNorm<Eigen::Infinity>();
    res.finite = true;
    return res;
}

}  // namespace detail

//! Graph-constrained noise contrast at the model's own weights: the mean
//! componentwise contrast of the reconstructed exogenous noise, with latent
//! noise coordinates marginalized (see ContrastProblem::eval).
inline double objective(const WeightedModel& model, const Dataset& data, const Contrast& contrast = {}) {
    validate(model.graph());
    detail::ContrastProblem prob(model.graph(), data, contrast);
    // evaluate at the model's own weights, scaling edges included
    prob.base_weights = model.weights();
    Eigen::VectorXd theta(static_cast<Eigen::Index>(prob.free.size()));
    for (std::size_t t = 0; t < prob.free.size(); ++t)
        theta(static_cast<Eigen::Index>(t)) = model.weights()[prob.free_idx[t]];
    return prob.eval(theta, nullptr);
}

//! Analytic gradient with respect to the free edge weights, ordered like
//! free_edges(graph). Scaling-edge weights are held at the model's values.
inline std::vector<double> gradient(const WeightedModel& model, const Dataset& data, const Contrast& contrast = {}) {
    validate(model.graph());
    detail::ContrastProblem prob(model.graph(), data, contrast);
    for (std::size_t k = 0; k < prob.base_weights.size(); ++k) prob.base_weights[k] = model.weights()[k];
    Eigen::VectorXd theta(static_cast<Eigen::Index>(prob.free.size()));
    for (std::size_t t = 0; t < prob.free.size(); ++t)
        theta(static_cast<Eigen::Index>(t)) = model.weights()[prob.free_idx[t]];
    Eigen::VectorXd grad;
    prob.eval(theta, &grad);
    return std::vector<double>(grad.data(), grad.data() + grad.size());
}

//! Multi-restart minimization of the contrast over free edge weights.
//!
//! With config.normalize the optimization runs in unit-variance column
//! coordinates as a pure preconditioner: pinned scaling edges become
//! 1/sd(first child) there, per-column contrast factors keep the objective
//! numerically equal to the raw one, and the fitted weights are mapped back
//! exactly afterwards (observed edge j->i by sd_i/sd_j, latent loadings by
//! sd_i, pins back to 1). Only the gradient norm refers to the
//! preconditioned coordinates.
inline EstimateReport estimate(const CanonicalDag& dag, const Dataset& data, const EstimatorConfig& config = {}) {
    config.check();
    const LvDag& g = dag.dag();

    Eigen::ArrayXd sd;  // per observed column, when normalizing
    Dataset scaled;
    const Dataset* src = &data;
    if (config.normalize) {
        if (data.values.rows() < 2) throw DimensionMismatch("column normalization needs at least two samples");
        scaled = data;
        sd.resize(data.values.cols());
        for (Eigen::Index c = 0; c < data.values.cols(); ++c) {
            const double mu = data.values.col(c).mean();
            sd(c) = std::sqrt((data.values.col(c).array() - mu).square().sum() /
                              static_cast<double>(data.values.rows()));
            if (!(sd(c) > 0.0)) sd(c) = 1.0;  // constant column: leave untouched
            scaled.values.col(c) /= sd(c);
        }
        src = &scaled;
    }

    detail::ContrastProblem prob(g, *src, config.contrast);
    if (data.values.rows() < g.node_count())
        throw DimensionMismatch("need at least as many samples as nodes");
    if (config.init == InitKind::Warm && config.warm.size() != prob.free.size())
        throw DimensionMismatch("warm start must provide one value per free edge");

    const auto& edges = g.edges();
    std::vector<char> is_free(edges.size(), 0);
    for (std::size_t t : prob.free_idx) is_free[t] = 1;
    auto scale_of = [&](NodeId v) { return sd(prob.pos[static_cast<std::size_t>(v)]); };
    if (config.normalize) {
        prob.col_scale = sd;
        for (std::size_t k = 0; k < edges.size(); ++k)
            if (!is_free[k]) prob.base_weights[k] = 1.0 / scale_of(edges[k].to);
    }

    const auto ncols = static_cast<Eigen::Index>(prob.free.size());
    std::vector<detail::OptimizeResult> runs;
    for (int r = 0; r < config.restarts; ++r) {
        Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(ncols);
        if (r == 0 && config.init == InitKind::Warm) {
            for (std::size_t t = 0; t < config.warm.size(); ++t) {
                double w0 = config.warm[t];
                if (config.normalize) {
                    const Edge e = prob.free[t];
                    w0 *= g.is_observed(e.from) ? scale_of(e.from) / scale_of(e.to) : 1.0 / scale_of(e.to);
                }
                theta0(static_cast<Eigen::Index>(t)) = w0;
            }
        } else if (!(r == 0 && config.init == InitKind::Zeros)) {
            Rng rng(derive_seed(config.seed, 0xe57, static_cast<std::uint64_t>(r)));
            for (Eigen::Index t = 0; t < ncols; ++t) theta0(t) = rng.uniform(-config.init_scale, config.init_scale);
        }
        runs.push_back(config.optimizer == OptimizerKind::QuasiSecondOrder
                           ? detail::lbfgs(prob, std::move(theta0), config.max_iterations, config.tolerance)
                           : detail::adam(prob, std::move(theta0), config.step_size, config.max_iterations,
                                          config.tolerance));
    }

    int best = -1;
    for (int r = 0; r < config.restarts; ++r)
        if (runs[static_cast<std::size_t>(r)].finite &&
            (best < 0 ||
             runs[static_cast<std::size_t>(r)].objective < runs[static_cast<std::size_t>(best)].objective))
            best = r;
    if (best < 0) throw NonFiniteObjective("every restart diverged");

    const detail::OptimizeResult& win = runs[static_cast<std::size_t>(best)];
    std::vector<double> w_full = prob.full_weights(win.theta);
    if (config.normalize) {
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const Edge e = edges[k];
            if (!is_free[k])
                w_full[k] = 1.0;  // pins return to their defining value exactly
            else
                w_full[k] *= g.is_observed(e.from) ? scale_of(e.to) / scale_of(e.from) : scale_of(e.to);
        }
    }
    WeightedModel fitted(g, std::move(w_full));
    MixingMatrix bprime = detail::mixing_unchecked(fitted);
    EstimateReport report{std::move(fitted), std::move(bprime), {}, best, {}, win.grad_norm};
    for (const auto& run : runs) {
        report.restart_objectives.push_back(run.objective);
        report.iterations.push_back(run.iterations);
    }
    return report;
}

//! |estimated - truth| / |truth|.
inline double relative_error(double estimated, double truth) {
    if (truth == 0.0) throw ZeroTrueValue("relative error undefined for a zero true value");
    return std::abs(estimated - truth) / std::abs(truth);
}

//! ||estimated - truth||_F / ||truth||_F over the dense mixing values.
inline double normalized_frobenius(const MixingMatrix& estimated, const MixingMatrix& truth) {
    if (estimated.values.rows() != truth.values.rows() || estimated.values.cols() != truth.values.cols())
        throw DimensionMismatch("mixing matrices differ in shape");
    const double denom = truth.values.norm();
    if (denom == 0.0) throw ZeroTrueValue("normalized Frobenius loss undefined for a zero matrix");
    return (estimated.values - truth.values).norm() / denom;
}

}  // namespace lvlingam

#endif
