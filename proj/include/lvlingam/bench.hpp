#ifndef LVLINGAM_BENCH_HPP
#define LVLINGAM_BENCH_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lvlingam/builtin_graphs.hpp"
#include "lvlingam/io.hpp"

//! Benchmark protocols emitting long-form records for external plotting.
//! Work units are (grid point, trial) tasks; each task's seed derives from
//! (base seed, grid index, trial index), and records are emitted in task
//! order, so the worker count never changes the output.
namespace lvlingam::bench {

enum class Protocol : unsigned char {
    IdentifiabilityCurve,   // fraction of identifiable random-edge queries vs edge prob
    RuntimeCurve,           // certify wall clock vs graph size, p_o/p = 0.5
    ErrorVsSamples,         // estimation error vs n on the proxy graphs G1/G2
    ErrorVsNoiseScale,      // error vs per-node noise scaling on G1/G3
    RandomGraphFrobenius,   // mixing-matrix loss on random graphs, two sizes
    Misspecification,       // error under the tanh mechanism on G1/G2
};

inline std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::IdentifiabilityCurve: return "IdentifiabilityCurve";
        case Protocol::RuntimeCurve: return "RuntimeCurve";
        case Protocol::ErrorVsSamples: return "ErrorVsSamples";
        case Protocol::ErrorVsNoiseScale: return "ErrorVsNoiseScale";
        case Protocol::RandomGraphFrobenius: return "RandomGraphFrobenius";
        case Protocol::Misspecification:
        default: return "Misspecification";
    }
}

inline Protocol protocol_from_string(std::string_view s) {
    for (Protocol p : {Protocol::IdentifiabilityCurve, Protocol::RuntimeCurve, Protocol::ErrorVsSamples,
                       Protocol::ErrorVsNoiseScale, Protocol::RandomGraphFrobenius, Protocol::Misspecification})
        if (s == to_string(p)) return p;
    throw ParseInvalid("bench: unknown protocol \"" + std::string(s) + "\"");
}

struct BenchProtocol {
    Protocol protocol = Protocol::IdentifiabilityCurve;
    std::vector<double> edge_probs = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<int> sizes = {10};                                  // graph sizes p
    std::vector<int> sample_sizes = {500, 1000, 5000, 10000, 50000};
    std::vector<double> scale_ratios = {0.25, 0.5, 1.0, 2.0, 4.0};
    int trials = 10;
    std::uint64_t seed = 0;

    //! The grid the active protocol sweeps.
    std::string_view grid_param() const {
        switch (protocol) {
            case Protocol::IdentifiabilityCurve: return "edge_prob";
            case Protocol::RuntimeCurve: return "p";
            case Protocol::ErrorVsNoiseScale: return "scale_ratio";
            case Protocol::ErrorVsSamples:
            case Protocol::RandomGraphFrobenius:
            case Protocol::Misspecification:
            default: return "n";
        }
    }

    std::size_t grid_size() const {
        switch (protocol) {
            case Protocol::IdentifiabilityCurve: return edge_probs.size();
            case Protocol::RuntimeCurve: return sizes.size();
            case Protocol::ErrorVsNoiseScale: return scale_ratios.size();
            default: return sample_sizes.size();
        }
    }

    double grid_value(std::size_t gi) const {
        switch (protocol) {
            case Protocol::IdentifiabilityCurve: return edge_probs[gi];
            case Protocol::RuntimeCurve: return sizes[gi];
            case Protocol::ErrorVsNoiseScale: return scale_ratios[gi];
            default: return sample_sizes[gi];
        }
    }

    void check() const {
        if (trials < 1) throw PreconditionViolated("bench: trials must be at least 1");
        if (grid_size() == 0)
            throw PreconditionViolated("bench: the " + std::string(grid_param()) + " grid is empty");
        for (double q : edge_probs)
            if (!(q > 0.0 && q <= 1.0)) throw PreconditionViolated("bench: edge probabilities must lie in (0, 1]");
        for (int p : sizes)
            if (p < 4) throw PreconditionViolated("bench: graph sizes must be at least 4");
        for (int n : sample_sizes)
            if (n < 1) throw PreconditionViolated("bench: sample sizes must be positive");
        for (double r : scale_ratios)
            if (!(r > 0.0)) throw PreconditionViolated("bench: scale ratios must be positive");
    }
};

//! Strict config parse. Only "protocol" is required; grids and trial count
//! fall back to defaults (RandomGraphFrobenius gets a smaller sample grid:
//! its two-latent setup integrates over a full tensor grid and is the one
//! genuinely expensive protocol).
inline BenchProtocol bench_from_json(const io::Json& j) {
    io::detail::expect_object(j, "bench config");
    for (const auto& item : j.items()) {
        static constexpr std::string_view known[] = {"protocol",     "edge_probs", "sizes", "sample_sizes",
                                                     "scale_ratios", "trials",     "seed"};
        bool ok = false;
        for (auto k : known)
            if (item.key() == k) ok = true;
        if (!ok) throw ParseInvalid("bench config: unknown key \"" + item.key() + "\"");
    }
    if (!j.contains("protocol") || !j.at("protocol").is_string())
        throw ParseInvalid("bench config: missing string key \"protocol\"");
    BenchProtocol cfg;
    cfg.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    if (cfg.protocol == Protocol::RandomGraphFrobenius) cfg.sample_sizes = {500, 1000, 2000};

    auto doubles = [&](const char* key, std::vector<double>& out) {
        if (!j.contains(key)) return;
        const io::Json& v = j.at(key);
        if (!v.is_array()) throw ParseInvalid("bench config: \"" + std::string(key) + "\" must be an array");
        out.clear();
        for (const io::Json& e : v) {
            if (!e.is_number()) throw ParseInvalid("bench config: \"" + std::string(key) + "\" must hold numbers");
            out.push_back(e.get<double>());
        }
    };
    auto ints = [&](const char* key, std::vector<int>& out) {
        if (!j.contains(key)) return;
        const io::Json& v = j.at(key);
        if (!v.is_array()) throw ParseInvalid("bench config: \"" + std::string(key) + "\" must be an array");
        out.clear();
        for (const io::Json& e : v) {
            if (!e.is_number_integer())
                throw ParseInvalid("bench config: \"" + std::string(key) + "\" must hold integers");
            out.push_back(e.get<int>());
        }
    };
    doubles("edge_probs", cfg.edge_probs);
    ints("sizes", cfg.sizes);
    ints("sample_sizes", cfg.sample_sizes);
    doubles("scale_ratios", cfg.scale_ratios);
    if (j.contains("trials")) {
        if (!j.at("trials").is_number_integer()) throw ParseInvalid("bench config: \"trials\" must be an integer");
        cfg.trials = j.at("trials").get<int>();
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0)
            throw ParseInvalid("bench config: \"seed\" must be a non-negative integer");
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }
    cfg.check();
    return cfg;
}

struct BenchRecord {
    std::string metric;
    double value = 0.0;
    double seconds = 0.0;
};

inline constexpr std::string_view csv_header = "protocol,grid_param,grid_value,trial,metric,value,seconds";

inline std::string to_csv_row(const BenchProtocol& cfg, std::size_t gi, int trial, const BenchRecord& r) {
    std::string row;
    row += to_string(cfg.protocol);
    row += ',';
    row += cfg.grid_param();
    row += ',';
    row += io::format_double(cfg.grid_value(gi));
    row += ',';
    row += std::to_string(trial);
    row += ',';
    row += r.metric;
    row += ',';
    row += io::format_double(r.value);
    row += ',';
    row += io::format_double(r.seconds);
    return row;
}

namespace detail {

inline double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

template <typename F>
auto timed(F&& f, double& seconds) {
    const double t0 = now_seconds();
    auto out = f();
    seconds = now_seconds() - t0;
    return out;
}

//! Estimation settings shared by every error protocol: a single zero-start
//! of the quasi-second-order optimizer at a loose tolerance, which recovers
//! these small graphs reliably in a fraction of the default budget.
inline EstimatorConfig bench_estimator() {
    EstimatorConfig cfg;
    cfg.restarts = 1;
    cfg.init = InitKind::Zeros;
    cfg.tolerance = 1e-4;
    cfg.max_iterations = 200;
    return cfg;
}

//! A random canonical graph that contains at least one observed->observed
//! edge, plus one such edge chosen uniformly. Resamples (deterministically)
//! when a sparse draw has none.
inline std::pair<CanonicalDag, Edge> graph_with_edge_query(int p_o, int p_l, double edge_prob, Rng& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        CanonicalDag dag = random_canonical_dag(p_o, p_l, edge_prob, rng.next_u64());
        const LvDag& g = dag.dag();
        std::vector<Edge> oo;
        for (const Edge& e : g.edges())
            if (g.is_observed(e.from) && g.is_observed(e.to)) oo.push_back(e);
        if (oo.empty()) continue;
        return {std::move(dag), oo[rng.below(oo.size())]};
    }
    throw PreconditionViolated("bench: no observed->observed edge in 1000 graph draws");
}

inline double effect_rel_err(const EstimateReport& rep, NodeId from, NodeId to, double truth) {
    return relative_error(rep.model.weight(from, to), truth);
}

inline std::vector<BenchRecord> run_identifiability(const BenchProtocol& cfg, std::size_t gi, int trial) {
    Rng rng(derive_seed(cfg.seed, gi, static_cast<std::uint64_t>(trial)));
    const int p = cfg.sizes.front();
    auto [dag, e] = graph_with_edge_query(p / 2 + p % 2, p / 2, cfg.edge_probs[gi], rng);
    std::vector<BenchRecord> out;
    const auto query = [&](const char* name, IdVerdict (*f)(const CanonicalDag&, NodeId, NodeId)) {
        double secs = 0.0;
        const IdVerdict v = timed([&] { return f(dag, e.from, e.to); }, secs);
        out.push_back({name, v.identifiable ? 1.0 : 0.0, secs});
    };
    query("tce_known", tce_known);
    query("tce_unknown", tce_unknown);
    query("dce_known", dce_known);
    query("dce_unknown", dce_unknown);
    return out;
}

inline std::vector<BenchRecord> run_runtime(const BenchProtocol& cfg, std::size_t gi, int trial) {
    Rng rng(derive_seed(cfg.seed, gi, static_cast<std::uint64_t>(trial)));
    const int p = cfg.sizes[gi];
    const double prob = cfg.edge_probs.front();
    auto [dag, e] = graph_with_edge_query(p / 2 + p % 2, p / 2, prob, rng);
    double secs = 0.0;
    timed([&] { return tce_known(dag, e.from, e.to); }, secs);
    return {{"certify_seconds", secs, secs}};
}

//! One estimation run on a fixed graph: simulate, fit, report the relative
//! error of the T -> Y coefficient (node ids 1 -> 2 on every proxy graph).
inline BenchRecord proxy_error(const char* metric, const CanonicalDag& dag, const WeightedModel& m,
                               const NoiseSpec& noise, int n, Rng& rng) {
    const Dataset data = simulate_linear(m, noise, n, rng.next_u64());
    double secs = 0.0;
    const EstimateReport rep = timed([&] { return estimate(dag, data, bench_estimator()); }, secs);
    return {metric, effect_rel_err(rep, 1, 2, m.weight(1, 2)), secs};
}

inline std::vector<BenchRecord> run_error_vs_samples(const BenchProtocol& cfg, std::size_t gi, int trial) {
    Rng rng(derive_seed(cfg.seed, gi, static_cast<std::uint64_t>(trial)));
    const int n = cfg.sample_sizes[gi];
    std::vector<BenchRecord> out;
    const CanonicalDag g1 = builtin::proxy_one_confounder();
    const CanonicalDag g2 = builtin::proxy_one_confounder_wt();
    out.push_back(proxy_error("rel_err_g1", g1, sample_weights(g1, rng.next_u64()), NoiseSpec{}, n, rng));
    out.push_back(proxy_error("rel_err_g2", g2, sample_weights(g2, rng.next_u64()), NoiseSpec{}, n, rng));
    return out;
}

inline std::vector<BenchRecord> run_error_vs_noise(const BenchProtocol& cfg, std::size_t gi, int trial) {
    Rng rng(derive_seed(cfg.seed, gi, static_cast<std::uint64_t>(trial)));
    const double ratio = cfg.scale_ratios[gi];
    const int n = cfg.sample_sizes.front();
    std::vector<BenchRecord> out;

    // proxy noise scaled by the ratio; every coefficient equals one
    const CanonicalDag g1 = builtin::proxy_one_confounder();
    const WeightedModel m1(g1.dag(), std::vector<double>(g1.dag().edges().size(), 1.0));
    out.push_back(proxy_error("rel_err_g1_w_scaled", g1, m1, NoiseSpec{}.with_node_scale(0, ratio), n, rng));

    // two proxies, scaled in opposite directions (W up, Z down)
    const CanonicalDag g3 = builtin::proxy_two_proxies();
    const WeightedModel m3(g3.dag(), std::vector<double>(g3.dag().edges().size(), 1.0));
    NoiseSpec noise3;
    noise3.with_node_scale(0, ratio).with_node_scale(3, 1.0 / ratio);
    out.push_back(proxy_error("rel_err_g3_ratio", g3, m3, noise3, n, rng));
    return out;
}

inline std::vector<BenchRecord> run_frobenius(const BenchProtocol& cfg, std::size_t gi, int trial) {
    Rng rng(derive_seed(cfg.seed, gi, static_cast<std::uint64_t>(trial)));
    const int n = cfg.sample_sizes[gi];
    std::vector<BenchRecord> out;
    const auto setup = [&](const char* metric, int p_o, int p_l) {
        const CanonicalDag dag = random_canonical_dag(p_o, p_l, 0.5, rng.next_u64());
        const WeightedModel m = sample_weights(dag, rng.next_u64());
        const Dataset data = simulate_linear(m, NoiseSpec{}, n, rng.next_u64());
        double secs = 0.0;
        const EstimateReport rep = timed([&] { return estimate(dag, data, bench_estimator()); }, secs);
        out.push_back({metric, normalized_frobenius(rep.bprime, build_mixing(m)), secs});
    };
    setup("frobenius_po5_pl1", 5, 1);
    setup("frobenius_po10_pl2", 10, 2);
    return out;
}

inline std::vector<BenchRecord> run_misspecification(const BenchProtocol& cfg, std::size_t gi, int trial) {
    Rng rng(derive_seed(cfg.seed, gi, static_cast<std::uint64_t>(trial)));
    const int n = cfg.sample_sizes[gi];
    std::vector<BenchRecord> out;
    const Edge target{1, 2};  // T -> Y enters the outcome linearly
    for (const auto& [metric, dag] : {std::pair<const char*, CanonicalDag>{"rel_err_g1", builtin::proxy_one_confounder()},
                                      {"rel_err_g2", builtin::proxy_one_confounder_wt()}}) {
        const WeightedModel m = sample_weights(dag, rng.next_u64());
        const Dataset data = simulate_misspecified(m, NoiseSpec{}, target, n, rng.next_u64());
        double secs = 0.0;
        const EstimateReport rep = timed([&] { return estimate(dag, data, bench_estimator()); }, secs);
        out.push_back({metric, effect_rel_err(rep, target.from, target.to, m.weight(target.from, target.to)), secs});
    }
    return out;
}

inline std::vector<BenchRecord> run_task(const BenchProtocol& cfg, std::size_t gi, int trial) {
    switch (cfg.protocol) {
        case Protocol::IdentifiabilityCurve: return run_identifiability(cfg, gi, trial);
        case Protocol::RuntimeCurve: return run_runtime(cfg, gi, trial);
        case Protocol::ErrorVsSamples: return run_error_vs_samples(cfg, gi, trial);
        case Protocol::ErrorVsNoiseScale: return run_error_vs_noise(cfg, gi, trial);
        case Protocol::RandomGraphFrobenius: return run_frobenius(cfg, gi, trial);
        case Protocol::Misspecification:
        default: return run_misspecification(cfg, gi, trial);
    }
}

}  // namespace detail

//! LVLINGAM_WORKERS, else the hardware concurrency, else 1.
inline int default_worker_count() {
    if (const char* env = std::getenv("LVLINGAM_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) return w;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

//! Runs the protocol over grid x trials and hands rows to `sink` in task
//! order (grid-major). `stop`, if given, requests a clean early exit: no new
//! task starts, finished rows up to the first unstarted task still flush, so
//! an interrupted run leaves a deterministic prefix of the full output.
//! Returns the number of tasks emitted.
inline std::size_t run(const BenchProtocol& cfg, const std::function<void(const std::string&)>& sink,
                       const std::atomic<bool>* stop = nullptr, int workers = 0) {
    cfg.check();
    if (workers <= 0) workers = default_worker_count();
    const std::size_t tasks = cfg.grid_size() * static_cast<std::size_t>(cfg.trials);
    workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), tasks));

    enum : char { NotStarted, Running, Done };
    std::vector<char> state(tasks, NotStarted);
    std::vector<std::vector<BenchRecord>> results(tasks);
    std::mutex mu;
    std::condition_variable cv;
    std::size_t next = 0;

    auto worker = [&] {
        while (true) {
            std::size_t t;
            {
                std::unique_lock lock(mu);
                if (next >= tasks || (stop && stop->load())) return;
                t = next++;
                state[t] = Running;
            }
            auto records = detail::run_task(cfg, t / static_cast<std::size_t>(cfg.trials),
                                            static_cast<int>(t % static_cast<std::size_t>(cfg.trials)));
            {
                std::lock_guard lock(mu);
                results[t] = std::move(records);
                state[t] = Done;
            }
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);

    std::size_t emitted = 0;
    for (std::size_t t = 0; t < tasks; ++t) {
        std::unique_lock lock(mu);
        // wait_for, not wait: the stop flag may flip from a signal handler,
        // which cannot notify the condition variable
        while (!(state[t] == Done || (stop && stop->load() && state[t] == NotStarted)))
            cv.wait_for(lock, std::chrono::milliseconds(50));
        if (state[t] != Done) break;
        const auto rows = std::move(results[t]);
        lock.unlock();
        for (const BenchRecord& r : rows)
            sink(to_csv_row(cfg, t / static_cast<std::size_t>(cfg.trials),
                            static_cast<int>(t % static_cast<std::size_t>(cfg.trials)), r));
        ++emitted;
    }
    for (auto& th : pool) th.join();
    return emitted;
}

}  // namespace lvlingam::bench

#endif
