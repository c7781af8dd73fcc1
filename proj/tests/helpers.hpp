#ifndef LVLINGAM_TESTS_HELPERS_HPP
#define LVLINGAM_TESTS_HELPERS_HPP

#include <random>
#include <string_view>
#include <vector>

#include "lvlingam/graph.hpp"
#include "lvlingam/model.hpp"

namespace lvtest {

// kinds given as a string, e.g. "OOOL" = nodes 0..2 observed, 3 latent
inline lvlingam::LvDag dag_of(std::string_view kinds, std::vector<lvlingam::Edge> edges) {
    std::vector<lvlingam::NodeKind> k;
    k.reserve(kinds.size());
    for (char c : kinds)
        k.push_back(c == 'L' ? lvlingam::NodeKind::Latent : lvlingam::NodeKind::Observed);
    return lvlingam::LvDag(std::move(k), std::move(edges));
}

// arbitrary acyclic graph, latents allowed anywhere in the order (may be far
// from canonical form)
inline lvlingam::LvDag random_acyclic(std::mt19937_64& rng, int p, double edge_prob, double latent_frac = 0.4) {
    std::vector<int> order(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<lvlingam::NodeKind> kinds(static_cast<std::size_t>(p), lvlingam::NodeKind::Observed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < p; ++i)
        if (u(rng) < latent_frac) kinds[static_cast<std::size_t>(i)] = lvlingam::NodeKind::Latent;
    std::vector<lvlingam::Edge> edges;
    for (int a = 0; a < p; ++a)
        for (int b = a + 1; b < p; ++b)
            if (u(rng) < edge_prob) edges.push_back({order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]});
    return lvlingam::LvDag(std::move(kinds), std::move(edges));
}

// canonical form of a random acyclic graph (may end up latent-free)
inline lvlingam::CanonicalDag random_canonical(std::mt19937_64& rng, int p, double edge_prob) {
    return lvlingam::canonicalize(random_acyclic(rng, p, edge_prob)).dag;
}

// weights with magnitude in [0.5, 1] and random sign on every edge
inline lvlingam::WeightedModel random_model(std::mt19937_64& rng, const lvlingam::LvDag& g) {
    std::uniform_real_distribution<double> mag(0.5, 1.0);
    std::vector<double> w;
    w.reserve(g.edges().size());
    for (std::size_t k = 0; k < g.edges().size(); ++k) {
        const double m = mag(rng);
        w.push_back((rng() & 1u) ? m : -m);
    }
    return lvlingam::WeightedModel(g, std::move(w));
}

}  // namespace lvtest

#endif
