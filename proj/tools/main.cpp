#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "lvlingam/bench.hpp"
#include "lvlingam/oracle.hpp"

namespace lv = lvlingam;

namespace {

std::atomic<bool> g_interrupted{false};

void on_sigint(int) { g_interrupted.store(true); }

// ------------------------------------------------------------ graph input

struct NamedGraph {
    lv::LvDag graph;
    std::vector<std::string> names;  // node id -> display name; empty for file graphs
};

struct BuiltinEntry {
    std::string_view name;
    lv::CanonicalDag (*make)();
    std::vector<std::string> node_names;
};

const std::vector<BuiltinEntry>& builtins() {
    static const std::vector<BuiltinEntry> table = {
        {"iv", lv::builtin::iv_graph, {"I", "T", "Y", "L"}},
        {"proxy", lv::builtin::proxy_one_confounder, {"W", "T", "Y", "L1"}},
        {"proxy_wt", lv::builtin::proxy_one_confounder_wt, {"W", "T", "Y", "L1"}},
        {"proxy_two_proxies", lv::builtin::proxy_two_proxies, {"W", "T", "Y", "Z", "L1"}},
        {"proxy_two_confounders", lv::builtin::proxy_two_confounders, {"W", "T", "Y", "L1", "L2"}},
        {"panel", lv::builtin::panel_two_periods, {"C1", "C2", "T1", "T2", "Y1", "Y2", "L1", "L2"}},
        {"underspecified_iv", lv::builtin::underspecified_iv, {"I", "T1", "T2", "Y", "L1", "L2"}},
    };
    return table;
}

std::string builtin_names_joined() {
    std::string out;
    for (const auto& b : builtins()) {
        if (!out.empty()) out += ", ";
        out += b.name;
    }
    return out;
}

//! A path wins over a built-in name of the same spelling; a built-in name is
//! only consulted when no such file exists. Model files work wherever a graph
//! is expected: the weights are simply ignored.
NamedGraph resolve_graph(const std::string& arg) {
    if (!std::filesystem::exists(arg)) {
        for (const auto& b : builtins())
            if (arg == b.name) return {b.make().dag(), b.node_names};
        throw lv::ParseInvalid("\"" + arg + "\" is neither a file nor a built-in graph (" + builtin_names_joined() +
                               ")");
    }
    const lv::io::Json j = lv::io::parse_json(lv::io::read_text_file(arg), "graph");
    if (j.is_object() && j.contains("weights")) return {lv::io::model_from_json(j).graph(), {}};
    return {lv::io::graph_from_json(j), {}};
}

//! Node argument: an integer id, or a node name when the graph is built in.
lv::NodeId resolve_node(const std::string& token, const NamedGraph& ng, const char* flag) {
    lv::NodeId id = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), id);
    if (ec == std::errc() && ptr == token.data() + token.size()) {
        ng.graph.check_node(id);
        return id;
    }
    for (std::size_t v = 0; v < ng.names.size(); ++v)
        if (token == ng.names[v]) return static_cast<lv::NodeId>(v);
    if (ng.names.empty())
        throw lv::ParseInvalid(std::string(flag) + ": node names work only with built-in graphs; file graphs use "
                                                   "integer ids");
    throw lv::ParseInvalid(std::string(flag) + ": no node named \"" + token + "\"");
}

//! Canonicalize, explaining every rewrite on stderr in the input's node ids.
lv::CanonicalizeResult canonicalize_with_warning(const NamedGraph& ng, const char* what) {
    lv::CanonicalizeResult canon = lv::canonicalize(ng.graph);
    if (!canon.changed) return canon;
    auto label = [&](lv::NodeId v) {
        return static_cast<std::size_t>(v) < ng.names.size() ? ng.names[static_cast<std::size_t>(v)]
                                                             : std::to_string(v);
    };
    std::cerr << "warning: " << what << " graph is not canonical; canonicalized before answering\n";
    for (lv::NodeId l : canon.deleted_latents)
        std::cerr << "warning:   latent " << label(l) << " deleted (fewer than two observed children)\n";
    for (const lv::Edge& e : canon.added_edges)
        std::cerr << "warning:   edge " << label(e.from) << " -> " << label(e.to) << " added (latent-path shortcut)\n";
    for (const lv::Edge& e : canon.dropped_edges)
        std::cerr << "warning:   edge " << label(e.from) << " -> " << label(e.to) << " dropped\n";
    if (!canon.deleted_latents.empty()) {
        std::cerr << "warning:   surviving nodes renumbered:";
        for (std::size_t v = 0; v < canon.kept_original_ids.size(); ++v)
            std::cerr << " " << label(canon.kept_original_ids[v]) << "->" << v;
        std::cerr << "\n";
    }
    return canon;
}

std::vector<lv::NodeId> original_to_new(const lv::CanonicalizeResult& canon, int original_count) {
    std::vector<lv::NodeId> map(static_cast<std::size_t>(original_count), -1);
    for (std::size_t v = 0; v < canon.kept_original_ids.size(); ++v)
        map[static_cast<std::size_t>(canon.kept_original_ids[v])] = static_cast<lv::NodeId>(v);
    return map;
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty())
        std::cout << text;
    else
        lv::io::write_text_file(out_path, text);
}

// --------------------------------------------------------------- certify

struct CertifyArgs {
    std::string graph;
    std::string kind = "tce";
    std::string setting = "known";
    std::string source, target;
    bool oracle = false;
};

int cmd_certify(const CertifyArgs& a) {
    const NamedGraph ng = resolve_graph(a.graph);
    const lv::CanonicalizeResult canon = canonicalize_with_warning(ng, "certify:");

    lv::IdQuery q;
    if (a.kind == "tce" || a.kind == "total")
        q.kind = lv::QueryKind::TotalEffect;
    else if (a.kind == "dce" || a.kind == "direct")
        q.kind = lv::QueryKind::DirectEffect;
    else if (a.kind == "matrix" || a.kind == "full")
        q.kind = lv::QueryKind::FullMatrix;
    else
        throw lv::ParseInvalid("--kind must be tce, dce, or matrix");
    if (a.setting == "known")
        q.setting = lv::GraphSetting::KnownGraph;
    else if (a.setting == "unknown")
        q.setting = lv::GraphSetting::UnknownGraph;
    else
        throw lv::ParseInvalid("--setting must be known or unknown");

    const auto orig_to_new = original_to_new(canon, ng.graph.node_count());
    if (q.kind == lv::QueryKind::FullMatrix) {
        if (!a.source.empty() || !a.target.empty())
            throw lv::ParseInvalid("--kind matrix certifies every effect at once; drop --source/--target");
    } else {
        if (a.source.empty() || a.target.empty())
            throw lv::ParseInvalid("--kind " + a.kind + " needs --source and --target");
        q.source = orig_to_new[static_cast<std::size_t>(resolve_node(a.source, ng, "--source"))];
        q.target = orig_to_new[static_cast<std::size_t>(resolve_node(a.target, ng, "--target"))];
    }

    lv::IdVerdict v = lv::certify(canon.dag, q);
    if (v.witness) {  // report witnesses in the caller's node ids
        const auto back = [&](lv::NodeId x) { return canon.to_original(x); };
        std::visit(
            [&](auto& w) {
                using T = std::decay_t<decltype(w)>;
                if constexpr (std::is_same_v<T, lv::WitnessLatent>) {
                    w.latent = back(w.latent);
                } else if constexpr (std::is_same_v<T, lv::WitnessPair>) {
                    w.k = back(w.k);
                    w.latent = back(w.latent);
                } else {
                    w.i = back(w.i);
                    w.j = back(w.j);
                    w.latent = back(w.latent);
                }
            },
            *v.witness);
    }

    lv::io::Json out = lv::io::verdict_to_json(v, ng.names.empty() ? nullptr : &ng.names);
    if (a.oracle) {
        const lv::IdVerdict ov = lv::bruteforce_identifiable(canon.dag, q);  // throws past the cap -> exit 3
        out["oracle_identifiable"] = ov.identifiable;
        out["agreement"] = ov.identifiable == v.identifiable;
    }
    std::cout << out.dump() << "\n";
    return 0;
}

// ---------------------------------------------- generate, simulate, estimate

struct GenerateArgs {
    int po = 5, pl = 1;
    double prob = 0.5;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_generate(const GenerateArgs& a) {
    const lv::CanonicalDag dag = lv::random_canonical_dag(a.po, a.pl, a.prob, lv::derive_seed(a.seed, 0, 0));
    const lv::WeightedModel m = lv::sample_weights(dag, lv::derive_seed(a.seed, 1, 0));
    emit(a.out, lv::io::model_to_json(m).dump(2) + "\n");
    return 0;
}

struct SimulateArgs {
    std::string model;
    std::string noise = "laplace";
    double location = 0.0, scale = 1.0, low = -1.0, high = 1.0;
    std::vector<std::string> node_scales;
    int n = 1000;
    std::uint64_t seed = 0;
    std::vector<int> misspecify_target;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
    const lv::WeightedModel m = lv::io::read_model_file(a.model);
    lv::NoiseSpec noise;
    if (a.noise == "laplace")
        noise = lv::NoiseSpec::laplace(a.location, a.scale);
    else if (a.noise == "exponential")
        noise = lv::NoiseSpec::exponential(a.scale);
    else if (a.noise == "uniform")
        noise = lv::NoiseSpec::uniform(a.low, a.high);
    else
        throw lv::ParseInvalid("--noise must be laplace, exponential, or uniform");
    for (const std::string& s : a.node_scales) {
        const auto eq = s.find('=');
        lv::NodeId id = -1;
        double mult = 0.0;
        bool ok = eq != std::string::npos;
        if (ok) {
            const auto r1 = std::from_chars(s.data(), s.data() + eq, id);
            const auto r2 = std::from_chars(s.data() + eq + 1, s.data() + s.size(), mult);
            ok = r1.ec == std::errc() && r1.ptr == s.data() + eq && r2.ec == std::errc() &&
                 r2.ptr == s.data() + s.size();
        }
        if (!ok) throw lv::ParseInvalid("--node-scale expects ID=FACTOR, got \"" + s + "\"");
        noise.with_node_scale(id, mult);
    }
    lv::Dataset d;
    if (a.misspecify_target.empty()) {
        d = lv::simulate_linear(m, noise, a.n, a.seed);
    } else {
        const lv::Edge target{a.misspecify_target[0], a.misspecify_target[1]};
        d = lv::simulate_misspecified(m, noise, target, a.n, a.seed);
    }
    emit(a.out, lv::io::dataset_to_csv(d));
    return 0;
}

struct EstimateArgs {
    std::string graph;
    std::string data;
    int restarts = 5;
    std::string contrast = "smoothl1";
    double contrast_param = -1.0;  // <0: family default
    std::string optimizer = "lbfgs";
    double step_size = 0.05;
    double tolerance = 1e-7;
    int max_iterations = 2000;
    std::string init = "zeros";
    double init_scale = 0.1;
    bool normalize = false;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_estimate(const EstimateArgs& a) {
    const NamedGraph ng = resolve_graph(a.graph);
    const lv::CanonicalizeResult canon = canonicalize_with_warning(ng, "estimate:");
    if (canon.changed) std::cerr << "warning: the report uses the canonicalized graph's node ids\n";

    lv::Dataset data = lv::io::read_dataset_file(a.data);
    const auto orig_to_new = original_to_new(canon, ng.graph.node_count());
    for (lv::NodeId& c : data.columns) {
        if (c < 0 || c >= ng.graph.node_count() || orig_to_new[static_cast<std::size_t>(c)] < 0)
            throw lv::ParseInvalid("dataset column " + std::to_string(c) + " is not a node of the graph");
        c = orig_to_new[static_cast<std::size_t>(c)];
    }
    {  // estimate() wants columns bound in ascending observed-id order
        std::vector<int> order(data.columns.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(),
                  [&](int x, int y) { return data.columns[static_cast<std::size_t>(x)] < data.columns[static_cast<std::size_t>(y)]; });
        lv::Dataset sorted;
        sorted.values.resize(data.values.rows(), data.values.cols());
        for (std::size_t i = 0; i < order.size(); ++i) {
            sorted.columns.push_back(data.columns[static_cast<std::size_t>(order[i])]);
            sorted.values.col(static_cast<Eigen::Index>(i)) = data.values.col(order[i]);
        }
        data = std::move(sorted);
    }

    lv::EstimatorConfig cfg;
    if (a.contrast == "smoothl1")
        cfg.contrast = {lv::ContrastKind::SmoothL1, a.contrast_param > 0 ? a.contrast_param : 10.0};
    else if (a.contrast == "logcosh")
        cfg.contrast = {lv::ContrastKind::LogCosh, a.contrast_param > 0 ? a.contrast_param : 1.0};
    else
        throw lv::ParseInvalid("--contrast must be smoothl1 or logcosh");
    if (a.optimizer == "lbfgs")
        cfg.optimizer = lv::OptimizerKind::QuasiSecondOrder;
    else if (a.optimizer == "adam")
        cfg.optimizer = lv::OptimizerKind::FirstOrderAdaptive;
    else
        throw lv::ParseInvalid("--optimizer must be lbfgs or adam");
    if (a.init == "zeros")
        cfg.init = lv::InitKind::Zeros;
    else if (a.init == "random")
        cfg.init = lv::InitKind::Random;
    else
        throw lv::ParseInvalid("--init must be zeros or random");
    cfg.restarts = a.restarts;
    cfg.step_size = a.step_size;
    cfg.tolerance = a.tolerance;
    cfg.max_iterations = a.max_iterations;
    cfg.init_scale = a.init_scale;
    cfg.normalize = a.normalize;
    cfg.seed = a.seed;

    const lv::EstimateReport rep = lv::estimate(canon.dag, data, cfg);
    emit(a.out, lv::io::report_to_json(rep).dump(2) + "\n");
    return 0;
}

// ------------------------------------------------------------------ bench

struct BenchArgs {
    std::string config;
    std::string out;
    int workers = 0;
};

int cmd_bench(const BenchArgs& a) {
    const lv::bench::BenchProtocol cfg =
        lv::bench::bench_from_json(lv::io::parse_json(lv::io::read_text_file(a.config), "bench config"));

    std::ofstream file;
    if (!a.out.empty()) {
        file.open(a.out, std::ios::binary | std::ios::trunc);
        if (!file) throw lv::Error("cannot write " + a.out);
    }
    std::ostream& os = a.out.empty() ? std::cout : file;
    os << lv::bench::csv_header << "\n";
    os.flush();

    std::signal(SIGINT, on_sigint);
    const std::size_t tasks = cfg.grid_size() * static_cast<std::size_t>(cfg.trials);
    const std::size_t done = lv::bench::run(
        cfg,
        [&](const std::string& row) {
            os << row << "\n";
            os.flush();  // interrupt may land at any time; keep rows durable
        },
        &g_interrupted, a.workers);
    if (done < tasks) {
        std::cerr << "interrupted: flushed " << done << " of " << tasks << " tasks\n";
        return 130;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear non-Gaussian causal models with latent variables: identifiability certification,"
                 " synthetic data, and graph-constrained ICA estimation"};
    app.require_subcommand(1);

    CertifyArgs ca;
    auto* certify = app.add_subcommand("certify", "Certify generic identifiability of a causal effect");
    certify->add_option("graph", ca.graph, "graph JSON file, or built-in: " + builtin_names_joined())->required();
    certify->add_option("--kind", ca.kind, "tce | dce | matrix (default tce)");
    certify->add_option("--setting", ca.setting, "known | unknown (default known)");
    certify->add_option("--source", ca.source, "cause node (id, or name for built-ins)");
    certify->add_option("--target", ca.target, "effect node (id, or name for built-ins)");
    certify->add_flag("--oracle", ca.oracle, "cross-check against the brute-force permutation oracle");

    GenerateArgs ga;
    auto* generate = app.add_subcommand("generate", "Generate a random canonical weighted model as JSON");
    generate->add_option("--po", ga.po, "observed node count")->required();
    generate->add_option("--pl", ga.pl, "latent node count")->required();
    generate->add_option("--prob", ga.prob, "edge inclusion probability")->required();
    generate->add_option("--seed", ga.seed, "RNG seed (default 0)");
    generate->add_option("--out", ga.out, "output path (default stdout)");

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Draw samples from a weighted model as CSV");
    simulate->add_option("--model", sa.model, "model JSON file")->required();
    simulate->add_option("--noise", sa.noise, "laplace | exponential | uniform (default laplace)");
    simulate->add_option("--location", sa.location, "laplace location (default 0)");
    simulate->add_option("--scale", sa.scale, "laplace/exponential scale (default 1)");
    simulate->add_option("--low", sa.low, "uniform lower bound (default -1)");
    simulate->add_option("--high", sa.high, "uniform upper bound (default 1)");
    simulate->add_option("--node-scale", sa.node_scales, "per-node noise multiplier, ID=FACTOR (repeatable)");
    simulate->add_option("--n", sa.n, "sample count")->required();
    simulate->add_option("--seed", sa.seed, "RNG seed (default 0)");
    simulate->add_option("--misspecify-target", sa.misspecify_target,
                         "FROM TO: tanh mechanism everywhere except this edge, which stays linear")
        ->expected(2);
    simulate->add_option("--out", sa.out, "output path (default stdout)");

    EstimateArgs ea;
    auto* estimate = app.add_subcommand("estimate", "Estimate edge weights from data under a fixed graph");
    estimate->add_option("--graph", ea.graph, "graph JSON file, or built-in name")->required();
    estimate->add_option("--data", ea.data, "dataset CSV file")->required();
    estimate->add_option("--restarts", ea.restarts, "optimizer restarts (default 5)");
    estimate->add_option("--contrast", ea.contrast, "smoothl1 | logcosh (default smoothl1)");
    estimate->add_option("--contrast-param", ea.contrast_param, "sharpness / scale of the contrast");
    estimate->add_option("--optimizer", ea.optimizer, "lbfgs | adam (default lbfgs)");
    estimate->add_option("--step-size", ea.step_size, "adam learning rate (default 0.05)");
    estimate->add_option("--tolerance", ea.tolerance, "gradient sup-norm stop (default 1e-7)");
    estimate->add_option("--max-iters", ea.max_iterations, "iteration cap per restart (default 2000)");
    estimate->add_option("--init", ea.init, "zeros | random (default zeros; later restarts always draw randomly)");
    estimate->add_option("--init-scale", ea.init_scale, "random init magnitude (default 0.1)");
    estimate->add_flag("--normalize", ea.normalize, "precondition on unit-variance columns");
    estimate->add_option("--seed", ea.seed, "RNG seed (default 0)");
    estimate->add_option("--out", ea.out, "output path (default stdout)");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Run a benchmark protocol, emitting long-form CSV");
    bench->add_option("config", ba.config, "protocol config JSON file")->required();
    bench->add_option("--out", ba.out, "output path (default stdout)");
    bench->add_option("--workers", ba.workers, "worker threads (default: LVLINGAM_WORKERS, else hardware)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // help/version exit 0; bad arguments exit 2
    }

    try {
        if (certify->parsed()) return cmd_certify(ca);
        if (generate->parsed()) return cmd_generate(ga);
        if (simulate->parsed()) return cmd_simulate(sa);
        if (estimate->parsed()) return cmd_estimate(ea);
        if (bench->parsed()) return cmd_bench(ba);
    } catch (const lv::GraphTooLargeForEnumeration& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
