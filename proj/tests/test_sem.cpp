#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "lvlingam/builtin_graphs.hpp"
#include "lvlingam/certify.hpp"
#include "lvlingam/sem.hpp"

using namespace lvlingam;

namespace {

double column_variance(const Eigen::VectorXd& x) {
    const double mean = x.mean();
    return (x.array() - mean).square().sum() / static_cast<double>(x.size());
}

double excess_kurtosis(const Eigen::VectorXd& x) {
    const double mean = x.mean();
    Eigen::ArrayXd d = x.array() - mean;
    const double m2 = d.square().mean();
    const double m4 = d.square().square().mean();
    return m4 / (m2 * m2) - 3.0;
}

}  // namespace

TEST_CASE("random canonical graphs are canonical and deterministic") {
    CanonicalDag a = random_canonical_dag(5, 1, 0.5, 99);
    CanonicalDag b = random_canonical_dag(5, 1, 0.5, 99);
    CHECK(a.dag() == b.dag());
    CHECK(a.dag().observed_count() == 5);
    CHECK(a.dag().latent_count() == 1);
    CHECK(a.dag().is_latent(5));
    CHECK(a.dag().children(5).size() >= 2);

    CanonicalDag c = random_canonical_dag(10, 2, 0.5, 7);
    CHECK(c.dag().observed_count() == 10);
    for (NodeId l : c.dag().latent_ids()) CHECK(c.dag().children(l).size() >= 2);

    // saturated generation: complete layered DAG
    CanonicalDag full = random_canonical_dag(4, 2, 1.0, 1);
    CHECK(full.dag().edges().size() == 6 + 2 * 4);
    for (NodeId l : full.dag().latent_ids()) CHECK(full.dag().children(l).size() == 4);

    CHECK_THROWS_AS(random_canonical_dag(1, 1, 0.5, 0), InvalidDimensions);
    CHECK_THROWS_AS(random_canonical_dag(5, 1, 0.0, 0), InvalidDimensions);
    CHECK_THROWS_AS(random_canonical_dag(5, 1, 1.5, 0), InvalidDimensions);
    CHECK_THROWS_AS(random_canonical_dag(-1, 0, 0.5, 0), InvalidDimensions);
}

TEST_CASE("latent children stay distinct under repair") {
    // low edge_prob forces the repair path often
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        CanonicalDag dag = random_canonical_dag(3, 2, 0.05, seed);
        for (NodeId l : dag.dag().latent_ids()) {
            auto ch = dag.dag().children(l);
            CHECK(ch.size() >= 2);
            for (std::size_t i = 1; i < ch.size(); ++i) CHECK(ch[i - 1] < ch[i]);
        }
    }
}

TEST_CASE("weight sampling pins scaling edges") {
    WeightedModel m = sample_weights(builtin::iv_graph(), 5);
    CHECK(m.weight(3, 1) == 1.0);  // latent's first child is T
    for (Edge e : std::vector<Edge>{{0, 1}, {1, 2}, {3, 2}}) {
        const double w = m.weight(e.from, e.to);
        CHECK(std::abs(w) >= 0.5);
        CHECK(std::abs(w) <= 1.0);
    }
    WeightedModel again = sample_weights(builtin::iv_graph(), 5);
    CHECK(again.weights() == m.weights());

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        CanonicalDag dag = random_canonical_dag(6, 2, 0.4, seed);
        WeightedModel w = sample_weights(dag, seed + 1000);
        detail::CertifyCtx ctx(dag.dag());
        for (NodeId l : dag.dag().latent_ids()) CHECK(w.weight(l, ctx.first_child(l)) == 1.0);
        for (double x : w.weights()) {
            CHECK(std::abs(x) >= 0.5);
            CHECK(std::abs(x) <= 1.0);
        }
    }
}

TEST_CASE("linear simulation shape and determinism") {
    WeightedModel m(builtin::iv_graph().dag(), {0.7, 0.9, 1.0, 0.8});
    Dataset d = simulate_linear(m, NoiseSpec::laplace(), 100, 42);
    REQUIRE(d.values.rows() == 100);
    REQUIRE(d.values.cols() == 3);
    CHECK(d.columns == std::vector<NodeId>{0, 1, 2});
    CHECK(d.values.allFinite());
    Dataset d2 = simulate_linear(m, NoiseSpec::laplace(), 100, 42);
    CHECK(d.values == d2.values);
    Dataset d3 = simulate_linear(m, NoiseSpec::laplace(), 100, 43);
    CHECK(d.values != d3.values);
    CHECK_THROWS_AS(simulate_linear(m, NoiseSpec::laplace(), 0, 1), InvalidDimensions);
}

TEST_CASE("zero weights leave noise plus scaling-edge contributions") {
    WeightedModel m(builtin::iv_graph().dag(), {0.0, 0.0, 1.0, 0.0});
    const int n = 50;
    Dataset d = simulate_linear(m, NoiseSpec::uniform(-1, 1), n, 11);
    Rng rng(11);
    Eigen::MatrixXd noise = detail::draw_noise(m.graph(), NoiseSpec::uniform(-1, 1), n, rng);
    CHECK((d.values.col(0) - noise.col(0)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((d.values.col(1) - noise.col(1) - noise.col(3)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((d.values.col(2) - noise.col(2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sample covariance approaches the mixing-implied covariance") {
    WeightedModel m(builtin::iv_graph().dag(), {0.7, 0.9, 1.0, 0.8});
    const double s3 = std::sqrt(3.0);
    Dataset d = simulate_linear(m, NoiseSpec::uniform(-s3, s3), 100000, 17);  // unit variance
    Eigen::MatrixXd centered = d.values.rowwise() - d.values.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(d.values.rows());
    Eigen::MatrixXd b = build_mixing(m).values;
    CHECK((cov - b * b.transpose()).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("noise marginals match the requested family") {
    WeightedModel m(builtin::iv_graph().dag(), {0.7, 0.9, 1.0, 0.8});
    // column of I is exactly its own noise
    Dataset lap = simulate_linear(m, NoiseSpec::laplace(0.0, 1.0), 100000, 23);
    CHECK(excess_kurtosis(lap.values.col(0)) == Catch::Approx(3.0).margin(0.3));
    CHECK(column_variance(lap.values.col(0)) == Catch::Approx(2.0).margin(0.1));

    Dataset exp = simulate_linear(m, NoiseSpec::exponential(1.0), 100000, 23);
    CHECK(exp.values.col(0).mean() == Catch::Approx(1.0).margin(0.05));
    CHECK(column_variance(exp.values.col(0)) == Catch::Approx(1.0).margin(0.1));
    CHECK(exp.values.col(0).minCoeff() > 0.0);

    NoiseSpec scaled = NoiseSpec::laplace().with_node_scale(0, 3.0);
    Dataset big = simulate_linear(m, scaled, 100000, 29);
    CHECK(column_variance(big.values.col(0)) == Catch::Approx(18.0).margin(1.0));

    CHECK_THROWS_AS(simulate_linear(m, NoiseSpec::laplace(0.0, -1.0), 10, 1), PreconditionViolated);
    CHECK_THROWS_AS(simulate_linear(m, NoiseSpec::uniform(2.0, -2.0), 10, 1), PreconditionViolated);
    CHECK_THROWS_AS(simulate_linear(m, NoiseSpec::laplace().with_node_scale(1, 0.0), 10, 1), PreconditionViolated);
}

TEST_CASE("misspecified mechanism validates the target edge") {
    WeightedModel m(builtin::iv_graph().dag(), {0.7, 0.9, 1.0, 0.8});
    CHECK_THROWS_AS(simulate_misspecified(m, NoiseSpec::laplace(), {0, 2}, 10, 1), UnknownEdge);
    CHECK_THROWS_AS(simulate_misspecified(m, NoiseSpec::laplace(), {3, 1}, 10, 1), UnknownEdge);
    Dataset d = simulate_misspecified(m, NoiseSpec::laplace(), {1, 2}, 10, 1);
    CHECK(d.values.rows() == 10);
    CHECK(d.values.allFinite());
}

TEST_CASE("zero-weight misspecified data is pure noise") {
    WeightedModel m(builtin::iv_graph().dag(), {0.0, 0.0, 0.0, 0.0});
    Dataset mis = simulate_misspecified(m, NoiseSpec::laplace(), {1, 2}, 40, 3);
    Dataset lin = simulate_linear(m, NoiseSpec::laplace(), 40, 3);
    CHECK((mis.values - lin.values).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("small weights make the misspecified mechanism nearly linear") {
    LvDag chain = lvtest::dag_of("OOO", {{0, 1}, {1, 2}});
    WeightedModel m(chain, {0.1, 0.1});
    Dataset mis = simulate_misspecified(m, NoiseSpec::uniform(-1, 1), {1, 2}, 500, 5);
    Dataset lin = simulate_linear(m, NoiseSpec::uniform(-1, 1), 500, 5);
    for (int r = 0; r < 500; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(mis.values(r, c) - lin.values(r, c)) <=
                  0.01 * std::max(1.0, std::abs(lin.values(r, c))));
}

TEST_CASE("target edge enters the outcome linearly") {
    // W=0, T=1, Y=2, L1=3 with strong weights: Y = tanh(w_LY N_L') + w_TY V_T + N_Y
    CanonicalDag g = builtin::proxy_one_confounder();
    WeightedModel m(g.dag(), {0.9, 1.0, 0.8, 0.7});  // edges (1,2) (3,0) (3,1) (3,2)
    const int n = 64;
    Dataset mis = simulate_misspecified(m, NoiseSpec::uniform(-2, 2), {1, 2}, n, 8);
    Rng rng(8);
    Eigen::MatrixXd noise = detail::draw_noise(g.dag(), NoiseSpec::uniform(-2, 2), n, rng);
    Eigen::ArrayXd v_l = noise.col(3).array();
    Eigen::ArrayXd v_w = (1.0 * v_l).tanh() + noise.col(0).array();
    Eigen::ArrayXd v_t = (0.8 * v_l).tanh() + noise.col(1).array();
    Eigen::ArrayXd v_y = (0.7 * v_l).tanh() + 0.9 * v_t + noise.col(2).array();
    CHECK((mis.values.col(0).array() - v_w).abs().maxCoeff() < 1e-12);
    CHECK((mis.values.col(1).array() - v_t).abs().maxCoeff() < 1e-12);
    CHECK((mis.values.col(2).array() - v_y).abs().maxCoeff() < 1e-12);
}
