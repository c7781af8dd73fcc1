#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "lvlingam/io.hpp"

using namespace lvlingam;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
};

// stdout only; stderr passes through unless redirected inside `args`
RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(CLI_BINARY) + " " + args;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (std::size_t got = fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string data_file(const std::string& name) { return std::string(DATA_DIR) + "/" + name; }

}  // namespace

TEST_CASE("certify answers the instrument graph queries") {
    auto r = run_cli("certify iv --kind tce --source T --target Y --setting known");
    CHECK(r.exit_code == 0);
    CHECK(r.out ==
          "{\"identifiable\":true,\"witness\":null,\"structurally_zero\":false,\"setting\":\"known\",\"kind\":\"total\"}\n");

    r = run_cli("certify iv --kind tce --source T --target Y --setting unknown");
    CHECK(r.exit_code == 0);  // a negative verdict is still success
    const io::Json j = io::parse_json(r.out, "verdict");
    CHECK(j["identifiable"] == false);
    CHECK(j["witness"]["latent"] == "L");

    // file input answers like the built-in, with integer ids
    r = run_cli("certify " + data_file("iv.json") + " --kind tce --source 1 --target 2 --setting unknown");
    CHECK(r.exit_code == 0);
    CHECK(io::parse_json(r.out, "verdict")["witness"]["latent"] == 3);
}

TEST_CASE("certify rejects bad inputs with exit 2") {
    CHECK(run_cli("certify no_such_file.json --kind tce --source 0 --target 1 2>/dev/null").exit_code == 2);
    CHECK(run_cli("certify iv --kind tce --source T 2>/dev/null").exit_code == 2);          // missing target
    CHECK(run_cli("certify iv --kind nonsense --source T --target Y 2>/dev/null").exit_code == 2);
    CHECK(run_cli("certify iv --kind matrix --source T --target Y 2>/dev/null").exit_code == 2);
    CHECK(run_cli("certify iv --kind tce --source Q --target Y 2>/dev/null").exit_code == 2);
    CHECK(run_cli("certify iv --kind tce --source T --target Y --setting maybe 2>/dev/null").exit_code == 2);
    CHECK(run_cli("nonsense-subcommand 2>/dev/null").exit_code == 2);

    const std::string dir = "cli_test_bad";
    std::filesystem::create_directories(dir);
    io::write_text_file(dir + "/broken.json", "{\"p_o\": ");
    CHECK(run_cli("certify " + dir + "/broken.json --kind tce --source 0 --target 1 2>/dev/null").exit_code == 2);
    io::write_text_file(dir + "/extra_key.json",
                        R"({"p_o":2,"p_l":0,"observed":[0,1],"latent":[],"edges":[[0,1]],"oops":1})");
    CHECK(run_cli("certify " + dir + "/extra_key.json --kind tce --source 0 --target 1 2>/dev/null").exit_code == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("certify agrees with the oracle on every shipped example graph") {
    for (const auto& entry : std::filesystem::directory_iterator(DATA_DIR)) {
        const std::string path = entry.path().string();
        if (entry.path().extension() != ".json") continue;
        if (path.find("bench") != std::string::npos) continue;  // protocol config, not a graph

        const io::Json j = io::parse_json(io::read_text_file(path), "graph");
        const LvDag g = j.contains("weights") ? io::model_from_json(j).graph() : io::graph_from_json(j);
        std::vector<Edge> oo;
        for (const Edge& e : g.edges())
            if (g.is_observed(e.from) && g.is_observed(e.to)) oo.push_back(e);
        // a handful of queries per graph keeps the suite quick; the library
        // test drives the oracle exhaustively
        if (oo.size() > 3) oo.resize(3);

        for (const Edge& e : oo)
            for (const char* kind : {"tce", "dce"})
                for (const char* setting : {"known", "unknown"}) {
                    const std::string args = "certify " + path + " --kind " + kind + " --source " +
                                             std::to_string(e.from) + " --target " + std::to_string(e.to) +
                                             " --setting " + setting + " --oracle 2>/dev/null";
                    const RunResult r = run_cli(args);
                    INFO(path << " " << e.from << "->" << e.to << " " << kind << " " << setting);
                    REQUIRE(r.exit_code == 0);
                    CHECK(io::parse_json(r.out, "verdict")["agreement"] == true);
                }
    }
}

TEST_CASE("non-canonical input is canonicalized with a warning") {
    const std::string graph = data_file("noncanonical_chain.json");
    // stderr carries the rewrite trace
    const RunResult warn = run_cli("certify " + graph + " --kind tce --source 0 --target 2 2>&1 1>/dev/null");
    CHECK(warn.exit_code == 0);
    CHECK(warn.out.find("not canonical") != std::string::npos);
    CHECK(warn.out.find("deleted") != std::string::npos);
    // stdout stays pure JSON
    const RunResult r = run_cli("certify " + graph + " --kind tce --source 0 --target 2 2>/dev/null");
    CHECK(io::parse_json(r.out, "verdict")["identifiable"].is_boolean());
}

TEST_CASE("generate, simulate, estimate chain with byte-identical reruns") {
    const std::string dir = "cli_test_chain";
    std::filesystem::create_directories(dir);

    const std::string gen = "generate --po 4 --pl 1 --prob 0.6 --seed 11 --out " + dir;
    CHECK(run_cli(gen + "/m1.json").exit_code == 0);
    CHECK(run_cli(gen + "/m2.json").exit_code == 0);
    const std::string model = io::read_text_file(dir + "/m1.json");
    CHECK(model == io::read_text_file(dir + "/m2.json"));
    CHECK_NOTHROW(io::model_from_json(io::parse_json(model, "model")));

    const std::string sim = "simulate --model " + dir + "/m1.json --noise laplace --n 400 --seed 3 --out " + dir;
    CHECK(run_cli(sim + "/d1.csv").exit_code == 0);
    CHECK(run_cli(sim + "/d2.csv").exit_code == 0);
    const std::string data = io::read_text_file(dir + "/d1.csv");
    CHECK(data == io::read_text_file(dir + "/d2.csv"));
    CHECK(io::dataset_from_csv(data).values.rows() == 400);

    const std::string est = "estimate --graph " + dir + "/m1.json --data " + dir +
                            "/d1.csv --restarts 2 --tolerance 1e-3 --max-iters 60 --seed 9 --out " + dir;
    CHECK(run_cli(est + "/r1.json").exit_code == 0);
    CHECK(run_cli(est + "/r2.json").exit_code == 0);
    const std::string report = io::read_text_file(dir + "/r1.json");
    CHECK(report == io::read_text_file(dir + "/r2.json"));
    const io::Json rep = io::parse_json(report, "report");
    CHECK(rep["restart_objectives"].size() == 2);
    CHECK(rep["model"]["weights"].size() == io::model_from_json(io::parse_json(model, "model")).weights().size());

    std::filesystem::remove_all(dir);
}

TEST_CASE("simulate supports the other noise families and the tanh mechanism") {
    const std::string dir = "cli_test_noise";
    std::filesystem::create_directories(dir);
    REQUIRE(run_cli("generate --po 3 --pl 1 --prob 0.8 --seed 2 --out " + dir + "/m.json").exit_code == 0);

    CHECK(run_cli("simulate --model " + dir + "/m.json --noise exponential --scale 2 --n 50 --seed 1 --out " + dir +
                  "/e.csv")
              .exit_code == 0);
    CHECK(run_cli("simulate --model " + dir + "/m.json --noise uniform --low -2 --high 2 --n 50 --seed 1 --out " +
                  dir + "/u.csv")
              .exit_code == 0);
    CHECK(run_cli("simulate --model " + dir + "/m.json --node-scale 0=3.5 --n 50 --seed 1 --out " + dir + "/s.csv")
              .exit_code == 0);
    CHECK(run_cli("simulate --model " + dir + "/m.json --noise gaussian --n 50 2>/dev/null").exit_code == 2);
    CHECK(run_cli("simulate --model " + dir + "/m.json --node-scale bogus --n 50 2>/dev/null").exit_code == 2);

    // the model's first observed->observed edge can enter linearly
    const WeightedModel m = io::read_model_file(dir + "/m.json");
    for (const Edge& e : m.graph().edges())
        if (m.graph().is_observed(e.from) && m.graph().is_observed(e.to)) {
            CHECK(run_cli("simulate --model " + dir + "/m.json --misspecify-target " + std::to_string(e.from) + " " +
                          std::to_string(e.to) + " --n 50 --seed 1 --out " + dir + "/t.csv")
                      .exit_code == 0);
            break;
        }
    std::filesystem::remove_all(dir);
}

TEST_CASE("bench emits the documented schema and is deterministic up to wall clock") {
    const std::string dir = "cli_test_bench";
    std::filesystem::create_directories(dir);
    io::write_text_file(dir + "/cfg.json",
                        R"({"protocol":"IdentifiabilityCurve","edge_probs":[0.4],"sizes":[8],"trials":2,"seed":5})");

    REQUIRE(run_cli("bench " + dir + "/cfg.json --out " + dir + "/a.csv").exit_code == 0);
    REQUIRE(run_cli("bench " + dir + "/cfg.json --out " + dir + "/b.csv").exit_code == 0);

    auto strip_seconds = [](const std::string& text) {
        std::string out;
        std::size_t start = 0;
        while (start < text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            const std::string_view line(text.data() + start, end - start);
            out.append(line.substr(0, line.rfind(',')));
            out += '\n';
            start = end + 1;
        }
        return out;
    };
    const std::string a = io::read_text_file(dir + "/a.csv");
    CHECK(a.substr(0, a.find('\n')) == "protocol,grid_param,grid_value,trial,metric,value,seconds");
    CHECK(strip_seconds(a) == strip_seconds(io::read_text_file(dir + "/b.csv")));
    // 1 grid point x 2 trials x 4 metrics, plus the header
    CHECK(std::count(a.begin(), a.end(), '\n') == 9);

    io::write_text_file(dir + "/zero.json", R"({"protocol":"IdentifiabilityCurve","trials":0})");
    CHECK(run_cli("bench " + dir + "/zero.json 2>/dev/null").exit_code == 2);
    io::write_text_file(dir + "/unknown.json", R"({"protocol":"IdentifiabilityCurve","spam":1})");
    CHECK(run_cli("bench " + dir + "/unknown.json 2>/dev/null").exit_code == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("help exits zero") {
    CHECK(run_cli("--help >/dev/null").exit_code == 0);
    CHECK(run_cli("certify --help >/dev/null").exit_code == 0);
}
