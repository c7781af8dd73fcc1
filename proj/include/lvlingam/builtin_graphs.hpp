#ifndef LVLINGAM_BUILTIN_GRAPHS_HPP
#define LVLINGAM_BUILTIN_GRAPHS_HPP

#include "lvlingam/graph.hpp"

//! Small named graphs used across tests, benchmarks, and the CLI's generate
//! subcommand. Node ids are listed next to each constructor.
namespace lvlingam::builtin {

namespace detail {
inline CanonicalDag make(std::string_view kinds, std::vector<Edge> edges) {
    std::vector<NodeKind> ks;
    ks.reserve(kinds.size());
    for (char c : kinds) ks.push_back(c == 'L' ? NodeKind::Latent : NodeKind::Observed);
    return validate(LvDag(std::move(ks), std::move(edges)));
}
}  // namespace detail

//! Instrument I -> treatment T -> outcome Y with a confounder of (T, Y).
//! Ids: I=0, T=1, Y=2, L=3.
inline CanonicalDag iv_graph() {
    return detail::make("OOOL", {{0, 1}, {1, 2}, {3, 1}, {3, 2}});
}

//! One confounder of proxy W, treatment T, outcome Y; T -> Y.
//! Ids: W=0, T=1, Y=2, L1=3.
inline CanonicalDag proxy_one_confounder() {
    return detail::make("OOOL", {{1, 2}, {3, 0}, {3, 1}, {3, 2}});
}

//! proxy_one_confounder plus a proxy -> treatment edge.
//! Ids: W=0, T=1, Y=2, L1=3.
inline CanonicalDag proxy_one_confounder_wt() {
    return detail::make("OOOL", {{0, 1}, {1, 2}, {3, 0}, {3, 1}, {3, 2}});
}

//! One confounder observed through two proxies W and Z; T -> Y.
//! Ids: W=0, T=1, Y=2, Z=3, L1=4.
inline CanonicalDag proxy_two_proxies() {
    return detail::make("OOOOL", {{1, 2}, {4, 0}, {4, 1}, {4, 2}, {4, 3}});
}

//! Two confounders behind a single proxy that also points at treatment and
//! outcome. Ids: W=0, T=1, Y=2, L1=3, L2=4.
inline CanonicalDag proxy_two_confounders() {
    return detail::make("OOOLL", {{0, 1}, {0, 2}, {1, 2}, {3, 0}, {3, 1}, {3, 2}, {4, 0}, {4, 1}, {4, 2}});
}

//! Two-period panel with a time-varying confounder and per-period covariates.
//! Ids: C1=0, C2=1, T1=2, T2=3, Y1=4, Y2=5, L1=6, L2=7.
inline CanonicalDag panel_two_periods() {
    return detail::make("OOOOOOLL", {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5},
                                     {1, 3}, {1, 5},
                                     {2, 3}, {2, 4},
                                     {3, 5},
                                     {6, 0}, {6, 1}, {6, 2}, {6, 3}, {6, 4}, {6, 5},
                                     {7, 1}, {7, 3}, {7, 5}});
}

//! One instrument for two separately confounded treatments of one outcome.
//! Ids: I=0, T1=1, T2=2, Y=3, L1=4, L2=5.
inline CanonicalDag underspecified_iv() {
    return detail::make("OOOOLL", {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {4, 1}, {4, 3}, {5, 2}, {5, 3}});
}

}  // namespace lvlingam::builtin

#endif
