#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "graph.hpp"
#include "interventions.hpp"
#include "oracle.hpp"
#include "reduction.hpp"
#include "solver.hpp"

namespace attackgame {

using Json = nlohmann::ordered_json;

inline constexpr const char* kEngineVersion = "1.0.0";

// --- parsing helpers -------------------------------------------------------

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line, col = 1;
        else ++col;
    }
    return {line, col};
}

// Collects shape problems so one pass reports all of them.
class Reader {
public:
    std::vector<Violation> problems;

    void bad(const std::string& where, const std::string& msg, ErrorCode code = ErrorCode::SyntaxError) {
        problems.push_back({code, msg, where});
    }

    const Json* field(const Json& obj, const std::string& where, const char* key, bool required = true) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) bad(where + "/" + key, std::string("missing field '") + key + "'");
            return nullptr;
        }
        return &*it;
    }

    bool object(const Json& j, const std::string& where) {
        if (j.is_object()) return true;
        bad(where, "expected an object");
        return false;
    }

    std::optional<double> number(const Json& obj, const std::string& where, const char* key, bool required = true) {
        const Json* j = field(obj, where, key, required);
        if (!j) return std::nullopt;
        if (!j->is_number()) {
            bad(where + "/" + key, std::string("'") + key + "' must be a number");
            return std::nullopt;
        }
        return j->get<double>();
    }

    std::optional<std::string> string(const Json& obj, const std::string& where, const char* key, bool required = true) {
        const Json* j = field(obj, where, key, required);
        if (!j) return std::nullopt;
        if (!j->is_string()) {
            bad(where + "/" + key, std::string("'") + key + "' must be a string");
            return std::nullopt;
        }
        return j->get<std::string>();
    }

    std::vector<std::string> strings(const Json& j, const std::string& where) {
        std::vector<std::string> out;
        if (!j.is_array()) {
            bad(where, "expected an array of strings");
            return out;
        }
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (j[i].is_string()) out.push_back(j[i].get<std::string>());
            else bad(where + "/" + std::to_string(i), "expected a string");
        }
        return out;
    }

    void finish(const char* what) {
        if (problems.empty()) return;
        std::string msg = std::string(what) + " is malformed: " + problems.front().message + " at " + problems.front().location;
        if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
        throw Error(ErrorCode::ValidationFailed, msg, std::move(problems));
    }
};

inline NodeAttr read_node(Reader& rd, const Json& j, const std::string& where) {
    NodeAttr a;
    if (!rd.object(j, where)) return a;
    a.id = rd.string(j, where, "id").value_or("");
    a.loss = rd.number(j, where, "loss").value_or(0.0);
    a.p0 = rd.number(j, where, "p0").value_or(1.0);
    a.kappa = rd.number(j, where, "kappa").value_or(1.0);
    if (const Json* inv = rd.field(j, where, "investable", false)) {
        if (inv->is_boolean()) a.investable = inv->get<bool>();
        else rd.bad(where + "/investable", "'investable' must be true or false");
    }
    return a;
}

inline RawGraph read_graph(Reader& rd, const Json& j, const std::string& where) {
    RawGraph g;
    if (!rd.object(j, where)) return g;
    if (const Json* nodes = rd.field(j, where, "nodes")) {
        if (!nodes->is_array()) rd.bad(where + "/nodes", "'nodes' must be an array");
        else
            for (std::size_t i = 0; i < nodes->size(); ++i)
                g.nodes.push_back(read_node(rd, (*nodes)[i], where + "/nodes/" + std::to_string(i)));
    }
    if (const Json* edges = rd.field(j, where, "edges")) {
        if (!edges->is_array()) rd.bad(where + "/edges", "'edges' must be an array");
        else
            for (std::size_t i = 0; i < edges->size(); ++i) {
                const Json& e = (*edges)[i];
                if (e.is_array() && e.size() == 2 && e[0].is_string() && e[1].is_string())
                    g.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
                else rd.bad(where + "/edges/" + std::to_string(i), "an edge is a pair [source id, destination id]");
            }
    }
    if (const Json* s = rd.field(j, where, "sources")) g.sources = rd.strings(*s, where + "/sources");
    g.target = rd.string(j, where, "target").value_or("");
    return g;
}

inline Json parse_json(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        std::string where = "line " + std::to_string(line) + ", column " + std::to_string(col);
        throw Error(ErrorCode::SyntaxError, "SyntaxError: " + where + ": " + e.what(),
                    {{ErrorCode::SyntaxError, e.what(), where}});
    }
}

// Graph problems are reported against the document, so their pointers get
// the prefix of where the graph sits.
inline AttackGraph validate_at(const RawGraph& raw, const std::string& prefix) {
    auto problems = check(raw);
    if (problems.empty()) return validate(raw);
    for (auto& p : problems) p.location = prefix + p.location;
    std::string msg = "graph failed validation: " + problems.front().message;
    if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
    throw Error(ErrorCode::ValidationFailed, msg, std::move(problems));
}

}  // namespace detail

// --- documents ---------------------------------------------------------------

struct GameOptions {
    std::optional<double> tolerance;
    std::optional<std::size_t> path_cap;
    std::optional<double> resolution;
    std::optional<double> perimeter_per_source;
    std::optional<Method> method;
};

struct GameDocument {
    RawGraph graph;
    double budget = 0.0;
    GameOptions options;
    std::optional<Json> notes;  // free-form, carried through untouched
    std::string graph_pointer = "/graph";  // where the graph sits in its source document
};

inline RawGraph graph_from_json(const Json& j) {
    detail::Reader rd;
    RawGraph g = detail::read_graph(rd, j, "");
    rd.finish("graph document");
    return g;
}

inline GameDocument game_from_json(const Json& j) {
    detail::Reader rd;
    GameDocument d;
    if (!rd.object(j, "")) rd.finish("game document");
    if (const Json* g = rd.field(j, "", "graph")) d.graph = detail::read_graph(rd, *g, "/graph");
    d.budget = rd.number(j, "", "budget").value_or(0.0);
    if (const Json* o = rd.field(j, "", "options", false)) {
        if (rd.object(*o, "/options")) {
            d.options.tolerance = rd.number(*o, "/options", "tolerance", false);
            d.options.resolution = rd.number(*o, "/options", "resolution", false);
            d.options.perimeter_per_source = rd.number(*o, "/options", "perimeter_per_source", false);
            if (auto m = rd.string(*o, "/options", "method", false)) {
                if (*m == "barrier" || *m == "smooth") d.options.method = *m == "smooth" ? Method::Smooth : Method::Barrier;
                else rd.bad("/options/method", "'method' must be \"barrier\" or \"smooth\"", ErrorCode::InvalidArgument);
            }
            if (auto cap = rd.number(*o, "/options", "path_cap", false)) {
                if (*cap >= 1.0) d.options.path_cap = static_cast<std::size_t>(*cap);
                else rd.bad("/options/path_cap", "'path_cap' must be a positive integer", ErrorCode::InvalidArgument);
            }
        }
    }
    for (const char* key : {"notes", "description"})
        if (auto it = j.find(key); it != j.end()) d.notes = *it;
    if (!(d.budget >= 0.0) || !std::isfinite(d.budget)) rd.bad("/budget", "budget must be finite and >= 0", ErrorCode::InvalidArgument);
    rd.finish("game document");
    return d;
}

inline Json to_json(const NodeAttr& a) {
    return Json{{"id", a.id}, {"loss", a.loss}, {"p0", a.p0}, {"kappa", a.kappa}, {"investable", a.investable}};
}

inline Json to_json(const RawGraph& g) {
    Json nodes = Json::array(), edges = Json::array();
    for (const auto& n : g.nodes) nodes.push_back(to_json(n));
    for (const auto& [a, b] : g.edges) edges.push_back(Json::array({a, b}));
    return Json{{"nodes", nodes}, {"edges", edges}, {"sources", g.sources}, {"target", g.target}};
}

inline Json to_json(const GameDocument& d) {
    Json j;
    if (d.notes) j["notes"] = *d.notes;
    j["graph"] = to_json(d.graph);
    j["budget"] = d.budget;
    Json o = Json::object();
    if (d.options.tolerance) o["tolerance"] = *d.options.tolerance;
    if (d.options.path_cap) o["path_cap"] = *d.options.path_cap;
    if (d.options.resolution) o["resolution"] = *d.options.resolution;
    if (d.options.perimeter_per_source) o["perimeter_per_source"] = *d.options.perimeter_per_source;
    if (d.options.method) o["method"] = *d.options.method == Method::Smooth ? "smooth" : "barrier";
    if (!o.empty()) j["options"] = o;
    return j;
}

inline GameInstance instantiate(const GameDocument& d) {
    GameInstance g;
    g.graph = detail::validate_at(d.graph, d.graph_pointer);
    g.budget = d.budget;
    if (d.options.tolerance) g.options.tolerance = *d.options.tolerance;
    if (d.options.path_cap) g.options.path_cap = *d.options.path_cap;
    if (d.options.method) g.options.method = *d.options.method;
    return g;
}

inline AttackGraph parse_graph(const std::string& text) {
    return detail::validate_at(graph_from_json(detail::parse_json(text)), "");
}

inline GameDocument parse_game_document(const std::string& text) { return game_from_json(detail::parse_json(text)); }

inline GameInstance parse_game(const std::string& text) { return instantiate(parse_game_document(text)); }

inline std::string serialize(const RawGraph& g, int indent = 2) { return to_json(g).dump(indent); }
inline std::string serialize(const AttackGraph& g, int indent = 2) { return serialize(g.raw(), indent); }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::InvalidArgument, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- intervention specs --------------------------------------------------------

inline InterventionSpec spec_from_json(const Json& j, const std::string& where = "") {
    detail::Reader rd;
    InterventionSpec s;
    if (rd.object(j, where)) {
        if (auto k = rd.string(j, where, "kind")) {
            if (auto kind = intervention_kind_from_string(*k)) s.kind = *kind;
            else rd.bad(where + "/kind", "unknown intervention kind '" + *k + "'", ErrorCode::InvalidArgument);
        }
        if (const Json* a = rd.field(j, where, "anchor")) {
            if (a->is_string()) s.anchor = {a->get<std::string>()};
            else s.anchor = rd.strings(*a, where + "/anchor");
        }
        if (auto pos = rd.string(j, where, "position", false)) {
            if (*pos == "after") s.position = SeriesPosition::After;
            else if (*pos == "before") s.position = SeriesPosition::Before;
            else rd.bad(where + "/position", "position is 'after' or 'before'", ErrorCode::InvalidArgument);
        }
        if (const Json* n = rd.field(j, where, "new_attrs")) s.new_attrs = detail::read_node(rd, *n, where + "/new_attrs");
    }
    rd.finish("intervention spec");
    return s;
}

inline Json to_json(const InterventionSpec& s) {
    Json j{{"kind", to_string(s.kind)}, {"anchor", s.anchor}};
    if (s.kind == InterventionKind::Series && s.anchor.size() == 1) j["position"] = to_string(s.position);
    j["new_attrs"] = to_json(s.new_attrs);
    return j;
}

// A spec file holds one spec, an array of specs, or {"candidates": [...]}.
inline std::vector<InterventionSpec> specs_from_json(const Json& j) {
    const Json* list = &j;
    std::string where;
    if (j.is_object() && j.contains("candidates")) list = &j["candidates"], where = "/candidates";
    if (!list->is_array()) return {spec_from_json(j)};
    std::vector<InterventionSpec> out;
    for (std::size_t i = 0; i < list->size(); ++i) out.push_back(spec_from_json((*list)[i], where + "/" + std::to_string(i)));
    return out;
}

// --- results -------------------------------------------------------------------

inline Json investment_json(const AttackGraph& g, const Investment& x) {
    Json j = Json::object();
    for (NodeIndex i = 0; i < g.size(); ++i) j[g.node(i).id] = x[i];
    return j;
}

inline Json paths_json(const AttackGraph& g, const std::vector<Path>& paths) {
    Json j = Json::array();
    for (const auto& p : paths) j.push_back(g.ids(p));
    return j;
}

inline Json to_json(const Certificate& c) {
    return Json{{"spread", c.spread},       {"budget_slack", c.budget_slack}, {"residual", c.residual},
                {"iterations", c.iterations}, {"relative_gap", c.relative_gap}, {"lower_bound", c.lower_bound},
                {"method", c.method}};
}

inline Json to_json(const AttackGraph& g, const EquilibriumResult& r) {
    return Json{{"loss", r.loss},
                {"x", investment_json(g, r.x)},
                {"critical_paths", paths_json(g, r.critical_paths)},
                {"certificate", to_json(r.certificate)}};
}

inline Json to_json(const AttackGraph& g, const PerimeterReport& r) {
    Json paths = Json::array();
    for (const auto& [p, l] : r.path_losses) paths.push_back(Json{{"path", g.ids(p)}, {"loss", l}});
    return Json{{"per_source", r.per_source},
                {"x", investment_json(g, r.x)},
                {"loss", r.loss},
                {"path_losses", paths},
                {"equal_split", Json{{"x", investment_json(g, r.equal_split_x)}, {"loss", r.equal_split_loss}}},
                {"best_perimeter", to_json(g, r.best)}};
}

inline Json to_json(const AttackGraph& g, const OracleResult& r) {
    return Json{{"loss", r.loss},
                {"x", investment_json(g, r.x)},
                {"critical_paths", paths_json(g, r.critical_paths)},
                {"resolution", r.resolution},
                {"bound", r.bound},
                {"evaluations", r.evaluations}};
}

inline Json to_json(const std::map<std::string, double>& m) {
    Json j = Json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

inline Json to_json(const NodeState& s) {
    Json j = to_json(s.attr);
    j["reserve"] = s.reserve;
    return j;
}

inline Json edges_json(const std::vector<std::pair<std::string, std::string>>& edges) {
    Json j = Json::array();
    for (const auto& [a, b] : edges) j.push_back(Json::array({a, b}));
    return j;
}

inline Json to_json(const ReductionStep& s) {
    Json shares = Json::array();
    for (const auto& sh : s.shares) shares.push_back(Json{{"id", sh.id}, {"a", sh.a}, {"b", sh.b}});
    Json upserted = Json::array();
    for (const auto& n : s.delta.upserted) upserted.push_back(to_json(n));
    return Json{{"kind", to_string(s.kind)},
                {"consumed", s.consumed},
                {"produced", s.produced ? Json(*s.produced) : Json(nullptr)},
                {"carrier", s.carrier},
                {"fixed_total", s.fixed_total},
                {"shares", shares},
                {"closure", to_json(s.closure)},
                {"delta", Json{{"removed", s.delta.removed},
                               {"edges_removed", edges_json(s.delta.edges_removed)},
                               {"upserted", upserted},
                               {"edges_added", edges_json(s.delta.edges_added)}}}};
}

inline Json to_json(const ReductionTrace& t) {
    Json steps = Json::array();
    for (const auto& s : t.steps) steps.push_back(to_json(s));
    return Json{{"original", to_json(t.original)}, {"steps", steps}, {"reduced", to_json(t.reduced)}, {"reserves", to_json(t.reserves)}};
}

inline ReductionTrace trace_from_json(const Json& j) {
    detail::Reader rd;
    ReductionTrace t;
    auto edge_list = [&](const Json& e, const std::string& where) {
        std::vector<std::pair<std::string, std::string>> out;
        if (!e.is_array()) {
            rd.bad(where, "expected an array of edges");
            return out;
        }
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e[i].is_array() && e[i].size() == 2 && e[i][0].is_string() && e[i][1].is_string())
                out.emplace_back(e[i][0].get<std::string>(), e[i][1].get<std::string>());
            else rd.bad(where + "/" + std::to_string(i), "an edge is a pair of ids");
        }
        return out;
    };
    auto number_map = [&](const Json& m, const std::string& where) {
        std::map<std::string, double> out;
        if (!m.is_object()) {
            rd.bad(where, "expected an object of numbers");
            return out;
        }
        for (auto it = m.begin(); it != m.end(); ++it) {
            if (it.value().is_number()) out[it.key()] = it.value().get<double>();
            else rd.bad(where + "/" + it.key(), "expected a number");
        }
        return out;
    };
    if (rd.object(j, "")) {
        if (const Json* o = rd.field(j, "", "original")) t.original = detail::read_graph(rd, *o, "/original");
        if (const Json* r = rd.field(j, "", "reduced")) t.reduced = detail::read_graph(rd, *r, "/reduced");
        if (const Json* r = rd.field(j, "", "reserves", false)) t.reserves = number_map(*r, "/reserves");
        const Json* steps = rd.field(j, "", "steps");
        if (steps && !steps->is_array()) rd.bad("/steps", "'steps' must be an array");
        for (std::size_t i = 0; steps && steps->is_array() && i < steps->size(); ++i) {
            const Json& s = (*steps)[i];
            const std::string w = "/steps/" + std::to_string(i);
            if (!rd.object(s, w)) continue;
            ReductionStep st;
            if (auto k = rd.string(s, w, "kind")) {
                if (auto kind = step_kind_from_string(*k)) st.kind = *kind;
                else rd.bad(w + "/kind", "unknown step kind '" + *k + "'");
            }
            if (const Json* c = rd.field(s, w, "consumed")) st.consumed = rd.strings(*c, w + "/consumed");
            if (const Json* p = rd.field(s, w, "produced", false); p && !p->is_null()) {
                if (p->is_string()) st.produced = p->get<std::string>();
                else rd.bad(w + "/produced", "'produced' must be a string or null");
            }
            st.carrier = rd.string(s, w, "carrier", false).value_or("");
            st.fixed_total = rd.number(s, w, "fixed_total", false).value_or(0.0);
            if (const Json* sh = rd.field(s, w, "shares", false)) {
                for (std::size_t k = 0; sh->is_array() && k < sh->size(); ++k) {
                    const std::string sw = w + "/shares/" + std::to_string(k);
                    if (!rd.object((*sh)[k], sw)) continue;
                    st.shares.push_back({rd.string((*sh)[k], sw, "id").value_or(""), rd.number((*sh)[k], sw, "a").value_or(0.0),
                                         rd.number((*sh)[k], sw, "b").value_or(0.0)});
                }
            }
            if (const Json* c = rd.field(s, w, "closure", false)) st.closure = number_map(*c, w + "/closure");
            if (const Json* d = rd.field(s, w, "delta"); d && rd.object(*d, w + "/delta")) {
                const std::string dw = w + "/delta";
                if (const Json* x = rd.field(*d, dw, "removed")) st.delta.removed = rd.strings(*x, dw + "/removed");
                if (const Json* x = rd.field(*d, dw, "edges_removed")) st.delta.edges_removed = edge_list(*x, dw + "/edges_removed");
                if (const Json* x = rd.field(*d, dw, "edges_added")) st.delta.edges_added = edge_list(*x, dw + "/edges_added");
                if (const Json* x = rd.field(*d, dw, "upserted")) {
                    for (std::size_t k = 0; x->is_array() && k < x->size(); ++k) {
                        const std::string uw = dw + "/upserted/" + std::to_string(k);
                        NodeState ns;
                        ns.attr = detail::read_node(rd, (*x)[k], uw);
                        if ((*x)[k].is_object()) ns.reserve = rd.number((*x)[k], uw, "reserve", false).value_or(0.0);
                        st.delta.upserted.push_back(ns);
                    }
                }
            }
            t.steps.push_back(std::move(st));
        }
    }
    rd.finish("reduction trace");
    return t;
}

inline Json to_json(const InterventionReport& r) {
    Json j{{"spec", to_json(r.spec)},
           {"budget", r.budget},
           {"base_loss", r.base_loss},
           {"modified_loss", r.modified_loss},
           {"delta", r.delta},
           {"verdict", to_string(r.verdict)},
           {"base_x", to_json(r.base_x)},
           {"modified_x", to_json(r.modified_x)},
           {"base_attack_probability", to_json(r.base_attack_probability)},
           {"modified_attack_probability", to_json(r.modified_attack_probability)},
           {"modified_graph", to_json(r.modified_graph)},
           {"warnings", r.warnings}};
    return j;
}

inline Json to_json(const Error& e) {
    Json locations = Json::array(), details = Json::array();
    for (const auto& d : e.details()) {
        if (!d.location.empty()) locations.push_back(d.location);
        details.push_back(Json{{"code", to_string(d.code)}, {"message", d.message}, {"location", d.location}});
    }
    Json j{{"code", to_string(e.code())}, {"message", e.what()}, {"locations", locations}};
    if (!details.empty()) j["details"] = details;
    return j;
}

inline Json to_json(const std::vector<RankEntry>& ranked) {
    Json j = Json::array();
    for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
        const auto& e = ranked[pos];
        Json item{{"index", e.index}};
        if (e.report) {
            item["rank"] = pos + 1;
            item["report"] = to_json(*e.report);
        } else {
            item["error"] = to_json(*e.error);
        }
        j.push_back(item);
    }
    return j;
}

}  // namespace attackgame
