#pragma once

#include <optional>
#include <string>
#include <vector>

#include "io.hpp"

// Machine-readable payloads shared by the command line (--json) and the
// HTTP service, so both emit identical documents for identical inputs.
namespace attackgame::api {

enum class Strategy { Optimal, Perimeter };

struct Overrides {
    std::optional<double> budget;
    std::optional<double> tolerance;
    std::optional<double> resolution;
    std::optional<Method> method;
};

inline GameDocument with_overrides(GameDocument d, const Overrides& o) {
    if (o.budget) d.budget = *o.budget;
    if (o.tolerance) d.options.tolerance = *o.tolerance;
    if (o.resolution) d.options.resolution = *o.resolution;
    if (o.method) d.options.method = *o.method;
    if (!(d.budget >= 0.0)) throw Error(ErrorCode::ValidationFailed, "budget must be >= 0",
                                        {{ErrorCode::InvalidArgument, "budget must be >= 0", "/budget"}});
    return d;
}

inline Json header(const char* command, const GameInstance& g) {
    return Json{{"command", command}, {"engine_version", kEngineVersion}, {"budget", g.budget}};
}

inline Json solve(const GameDocument& doc, Strategy strategy = Strategy::Optimal) {
    auto g = instantiate(doc);
    Json out = header("solve", g);
    auto r = attackgame::solve(g.graph, g.budget, g.options);
    out["strategy"] = strategy == Strategy::Optimal ? "optimal" : "perimeter";
    out["result"] = to_json(g.graph, r);
    if (strategy == Strategy::Perimeter) {
        auto p = perimeter(g.graph, g.budget, doc.options.perimeter_per_source, g.options);
        out["perimeter"] = to_json(g.graph, p);
        out["perimeter"]["ratio_to_optimal"] = p.loss / r.loss;
    }
    return out;
}

inline Json reduce(const GameDocument& doc) {
    auto g = instantiate(doc);
    Json out = header("reduce", g);
    auto red = attackgame::reduce(g.graph);
    out["reduced_graph"] = to_json(red.graph.raw());
    out["trace"] = to_json(red.trace);
    auto rs = attackgame::solve(red.graph, g.budget, g.options);
    out["reduced_result"] = to_json(red.graph, rs);
    try {
        auto x = backmap(red, g.graph, rs.x);
        out["backmap"] = Json{{"x", investment_json(g.graph, x)}, {"loss", max_loss(g.graph, x)}};
    } catch (const Error& e) {
        if (e.code() != ErrorCode::InfeasibleBackmap) throw;
        out["backmap"] = Json{{"error", to_json(e)}};
    }
    return out;
}

inline Json intervene(const GameDocument& doc, const InterventionSpec& spec) {
    auto g = instantiate(doc);
    Json out = header("intervene", g);
    out["report"] = to_json(evaluate(g, spec));
    return out;
}

inline Json rank(const GameDocument& doc, const std::vector<InterventionSpec>& specs) {
    auto g = instantiate(doc);
    Json out = header("rank", g);
    out["ranking"] = to_json(attackgame::rank(g, specs));
    return out;
}

inline constexpr double kDefaultResolution = 1e-3;

inline Json oracle(const GameDocument& doc) {
    auto g = instantiate(doc);
    Json out = header("oracle", g);
    const double h = doc.options.resolution.value_or(kDefaultResolution);
    out["result"] = to_json(g.graph, grid_oracle(g.graph, g.budget, h, g.options.path_cap));
    return out;
}

// Error body plus, for a stalled solve, the best iterate and its certificate.
inline Json error_body(const Error& e) {
    Json j = to_json(e);
    if (const auto* nc = dynamic_cast<const NonConvergence*>(&e)) {
        Json partial{{"loss", nc->partial().loss}, {"certificate", to_json(nc->partial().certificate)}};
        Json x = Json::array();
        for (double v : nc->partial().x) x.push_back(v);
        partial["x_in_node_order"] = x;
        j["partial"] = partial;
    }
    j["engine_version"] = kEngineVersion;
    return j;
}

}  // namespace attackgame::api
