#ifndef LVLINGAM_IO_HPP
#define LVLINGAM_IO_HPP

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lvlingam/certify.hpp"
#include "lvlingam/grica.hpp"
#include "lvlingam/model.hpp"
#include "lvlingam/sem.hpp"

//! File formats. Graphs and models travel as JSON with a closed key set
//! (unknown keys are rejected so typos fail loudly), datasets as CSV whose
//! numbers are printed shortest-round-trip, so write -> read -> write is
//! byte identical. All serialization uses insertion-ordered JSON objects to
//! keep reruns byte stable.
namespace lvlingam::io {

using Json = nlohmann::ordered_json;

namespace detail {

inline void expect_object(const Json& j, const char* what) {
    if (!j.is_object()) throw ParseInvalid(std::string(what) + ": expected a JSON object");
}

inline void expect_keys(const Json& j, std::initializer_list<std::string_view> keys, const char* what) {
    expect_object(j, what);
    for (const auto& item : j.items()) {
        bool known = false;
        for (auto k : keys)
            if (item.key() == k) known = true;
        if (!known) throw ParseInvalid(std::string(what) + ": unknown key \"" + item.key() + "\"");
    }
    for (auto k : keys)
        if (!j.contains(k)) throw ParseInvalid(std::string(what) + ": missing key \"" + std::string(k) + "\"");
}

inline int get_count(const Json& j, const char* key, const char* what) {
    const Json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ParseInvalid(std::string(what) + ": \"" + key + "\" must be a non-negative integer");
    return v.get<int>();
}

inline std::vector<NodeId> get_id_list(const Json& j, const char* key, const char* what) {
    const Json& v = j.at(key);
    if (!v.is_array()) throw ParseInvalid(std::string(what) + ": \"" + key + "\" must be an array");
    std::vector<NodeId> out;
    out.reserve(v.size());
    for (const Json& e : v) {
        if (!e.is_number_integer())
            throw ParseInvalid(std::string(what) + ": \"" + key + "\" must contain integers only");
        out.push_back(e.get<NodeId>());
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------- graphs

inline Json graph_to_json(const LvDag& g) {
    Json j = Json::object();
    j["p_o"] = g.observed_count();
    j["p_l"] = g.latent_count();
    j["observed"] = g.observed_ids();
    j["latent"] = g.latent_ids();
    Json edges = Json::array();
    for (const Edge& e : g.edges()) edges.push_back(Json::array({e.from, e.to}));
    j["edges"] = std::move(edges);
    return j;
}

inline LvDag graph_from_json(const Json& j) {
    detail::expect_keys(j, {"p_o", "p_l", "observed", "latent", "edges"}, "graph");
    const int p_o = detail::get_count(j, "p_o", "graph");
    const int p_l = detail::get_count(j, "p_l", "graph");
    const std::vector<NodeId> observed = detail::get_id_list(j, "observed", "graph");
    const std::vector<NodeId> latent = detail::get_id_list(j, "latent", "graph");
    if (static_cast<int>(observed.size()) != p_o)
        throw ParseInvalid("graph: p_o is " + std::to_string(p_o) + " but \"observed\" lists " +
                           std::to_string(observed.size()) + " ids");
    if (static_cast<int>(latent.size()) != p_l)
        throw ParseInvalid("graph: p_l is " + std::to_string(p_l) + " but \"latent\" lists " +
                           std::to_string(latent.size()) + " ids");
    const int p = p_o + p_l;
    std::vector<NodeKind> kinds(static_cast<std::size_t>(p), NodeKind::Observed);
    std::vector<char> seen(static_cast<std::size_t>(p), 0);
    auto place = [&](const std::vector<NodeId>& ids, NodeKind kind, const char* key) {
        for (NodeId v : ids) {
            if (v < 0 || v >= p)
                throw ParseInvalid("graph: \"" + std::string(key) + "\" id " + std::to_string(v) +
                                   " outside 0.." + std::to_string(p - 1));
            if (seen[static_cast<std::size_t>(v)])
                throw ParseInvalid("graph: node id " + std::to_string(v) + " listed twice");
            seen[static_cast<std::size_t>(v)] = 1;
            kinds[static_cast<std::size_t>(v)] = kind;
        }
    };
    place(observed, NodeKind::Observed, "observed");
    place(latent, NodeKind::Latent, "latent");

    const Json& je = j.at("edges");
    if (!je.is_array()) throw ParseInvalid("graph: \"edges\" must be an array");
    std::vector<Edge> edges;
    edges.reserve(je.size());
    for (const Json& e : je) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
            throw ParseInvalid("graph: each edge must be a [from, to] pair of integers");
        edges.push_back({e[0].get<NodeId>(), e[1].get<NodeId>()});
    }
    return LvDag(std::move(kinds), std::move(edges));  // range / self-loop / duplicate checks live there
}

// ---------------------------------------------------------------- models

inline Json model_to_json(const WeightedModel& m) {
    Json j = graph_to_json(m.graph());
    Json w = Json::array();
    const auto& edges = m.graph().edges();
    for (std::size_t k = 0; k < edges.size(); ++k)
        w.push_back(Json::array({edges[k].from, edges[k].to, m.weights()[k]}));
    j["weights"] = std::move(w);
    return j;
}

inline WeightedModel model_from_json(const Json& j) {
    detail::expect_keys(j, {"p_o", "p_l", "observed", "latent", "edges", "weights"}, "model");
    Json graph_part = j;
    graph_part.erase("weights");
    LvDag g = graph_from_json(graph_part);

    const Json& jw = j.at("weights");
    if (!jw.is_array()) throw ParseInvalid("model: \"weights\" must be an array");
    const auto& edges = g.edges();
    std::vector<double> weights(edges.size(), 0.0);
    std::vector<char> filled(edges.size(), 0);
    for (const Json& t : jw) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() || !t[1].is_number_integer() ||
            !t[2].is_number())
            throw ParseInvalid("model: each weight must be a [from, to, value] triplet");
        const Edge e{t[0].get<NodeId>(), t[1].get<NodeId>()};
        auto it = std::lower_bound(edges.begin(), edges.end(), e);
        if (it == edges.end() || *it != e)
            throw ParseInvalid("model: weight on non-edge (" + std::to_string(e.from) + "," +
                               std::to_string(e.to) + ")");
        const auto k = static_cast<std::size_t>(it - edges.begin());
        if (filled[k])
            throw ParseInvalid("model: duplicate weight for edge (" + std::to_string(e.from) + "," +
                               std::to_string(e.to) + ")");
        filled[k] = 1;
        weights[k] = t[2].get<double>();
    }
    for (std::size_t k = 0; k < edges.size(); ++k)
        if (!filled[k])
            throw ParseInvalid("model: missing weight for edge (" + std::to_string(edges[k].from) + "," +
                               std::to_string(edges[k].to) + ")");
    return WeightedModel(std::move(g), std::move(weights));
}

// --------------------------------------------------------------- datasets

//! Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;  // 32 bytes always suffice for shortest round-trip form
    return std::string(buf, ptr);
}

inline std::string dataset_to_csv(const Dataset& d) {
    if (static_cast<int>(d.columns.size()) != d.values.cols())
        throw DimensionMismatch("dataset has " + std::to_string(d.values.cols()) + " value columns but " +
                                std::to_string(d.columns.size()) + " column ids");
    std::string out;
    out.reserve(static_cast<std::size_t>(d.values.size()) * 12 + 64);
    for (std::size_t c = 0; c < d.columns.size(); ++c) {
        if (c) out += ',';
        out += std::to_string(d.columns[c]);
    }
    out += '\n';
    for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.values.cols(); ++c) {
            if (c) out += ',';
            out += format_double(d.values(r, c));
        }
        out += '\n';
    }
    return out;
}

inline Dataset dataset_from_csv(std::string_view text) {
    auto next_line = [&](std::string_view& rest) -> std::string_view {
        const auto nl = rest.find('\n');
        std::string_view line = nl == std::string_view::npos ? rest : rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        return line;
    };
    std::string_view rest = text;
    std::string_view header = next_line(rest);
    if (header.empty()) throw ParseInvalid("dataset: empty file");

    auto split = [](std::string_view line) {
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return cells;
    };

    Dataset d;
    for (std::string_view cell : split(header)) {
        NodeId id = 0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), id);
        if (ec != std::errc() || ptr != cell.data() + cell.size())
            throw ParseInvalid("dataset: header cell \"" + std::string(cell) + "\" is not a node id");
        d.columns.push_back(id);
    }
    const std::size_t width = d.columns.size();

    std::vector<double> cells;
    std::size_t rows = 0;
    while (!rest.empty()) {
        std::string_view line = next_line(rest);
        if (line.empty() && rest.empty()) break;  // trailing newline
        const auto row = split(line);
        if (row.size() != width)
            throw ParseInvalid("dataset: row " + std::to_string(rows + 1) + " has " + std::to_string(row.size()) +
                               " cells, header has " + std::to_string(width));
        for (std::string_view cell : row) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size())
                throw ParseInvalid("dataset: cell \"" + std::string(cell) + "\" in row " + std::to_string(rows + 1) +
                                   " is not a number");
            cells.push_back(v);
        }
        ++rows;
    }
    d.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c)
            d.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cells[r * width + c];
    return d;
}

// --------------------------------------------------------------- verdicts

inline std::string_view to_string(QueryKind k) {
    switch (k) {
        case QueryKind::TotalEffect: return "total";
        case QueryKind::DirectEffect: return "direct";
        case QueryKind::FullMatrix:
        default: return "full";
    }
}

inline std::string_view to_string(GraphSetting s) {
    return s == GraphSetting::KnownGraph ? "known" : "unknown";
}

//! Node label inside a verdict: the id itself, or a name when the caller
//! supplies a table (the CLI does for its built-in graphs).
inline Json node_label(NodeId v, const std::vector<std::string>* names) {
    if (names && v >= 0 && static_cast<std::size_t>(v) < names->size()) return (*names)[static_cast<std::size_t>(v)];
    return v;
}

inline Json verdict_to_json(const IdVerdict& v, const std::vector<std::string>* names = nullptr) {
    Json j = Json::object();
    j["identifiable"] = v.identifiable;
    if (v.witness) {
        Json w = Json::object();
        std::visit(
            [&](const auto& wit) {
                using T = std::decay_t<decltype(wit)>;
                if constexpr (std::is_same_v<T, WitnessLatent>) {
                    w["latent"] = node_label(wit.latent, names);
                } else if constexpr (std::is_same_v<T, WitnessPair>) {
                    w["k"] = node_label(wit.k, names);
                    w["latent"] = node_label(wit.latent, names);
                } else {
                    w["i"] = node_label(wit.i, names);
                    w["j"] = node_label(wit.j, names);
                    w["latent"] = node_label(wit.latent, names);
                }
            },
            *v.witness);
        j["witness"] = std::move(w);
    } else {
        j["witness"] = nullptr;
    }
    j["structurally_zero"] = v.structurally_zero;
    j["setting"] = to_string(v.setting);
    j["kind"] = to_string(v.kind);
    return j;
}

// ---------------------------------------------------------------- reports

inline Json mixing_to_json(const MixingMatrix& m) {
    Json j = Json::object();
    j["rows"] = m.row_nodes;
    j["cols"] = m.col_nodes;
    Json values = Json::array();
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) row.push_back(m.values(r, c));
        values.push_back(std::move(row));
    }
    j["values"] = std::move(values);
    return j;
}

//! Diverged restarts carry NaN objectives, which JSON cannot spell; they are
//! emitted as null.
inline Json report_to_json(const EstimateReport& rep) {
    Json j = Json::object();
    j["model"] = model_to_json(rep.model);
    j["bprime"] = mixing_to_json(rep.bprime);
    Json objs = Json::array();
    for (double f : rep.restart_objectives) {
        if (std::isfinite(f))
            objs.push_back(f);
        else
            objs.push_back(nullptr);
    }
    j["restart_objectives"] = std::move(objs);
    j["chosen_restart"] = rep.chosen_restart;
    j["iterations"] = rep.iterations;
    j["grad_norm"] = rep.grad_norm;
    return j;
}

// ------------------------------------------------------------------ files

inline Json parse_json(std::string_view text, const char* what) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseInvalid(std::string(what) + ": malformed JSON");
    return j;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseInvalid("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("short write to " + path);
}

inline LvDag read_graph_file(const std::string& path) {
    return graph_from_json(parse_json(read_text_file(path), "graph"));
}

inline WeightedModel read_model_file(const std::string& path) {
    return model_from_json(parse_json(read_text_file(path), "model"));
}

inline Dataset read_dataset_file(const std::string& path) { return dataset_from_csv(read_text_file(path)); }

}  // namespace lvlingam::io

#endif
