#include <cstdio>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "attackgame/attackgame.hpp"
#include "attackgame/service.hpp"

#ifndef ATTACKGAME_DATA_DIR
#define ATTACKGAME_DATA_DIR "data"
#endif

namespace ag = attackgame;
using ag::Json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kValidation = 2, kNonConvergence = 3 };

std::string num(double v, const char* fmt = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::string join(const Json& ids, const char* sep = " -> ") {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? sep : "") + ids[i].get<std::string>();
    return s;
}

void print_x(const Json& x, const char* title = "x*") {
    std::cout << title << ":\n";
    for (auto it = x.begin(); it != x.end(); ++it)
        std::cout << "  " << std::left << std::setw(12) << it.key() << num(it.value().get<double>(), "%.6f") << "\n";
}

void print_graph(const Json& g) {
    std::cout << "  " << std::left << std::setw(28) << "node" << std::setw(14) << "loss" << std::setw(12) << "p0"
              << std::setw(12) << "kappa"
              << "investable\n";
    for (const auto& n : g["nodes"])
        std::cout << "  " << std::setw(28) << n["id"].get<std::string>() << std::setw(14) << num(n["loss"].get<double>())
                  << std::setw(12) << num(n["p0"].get<double>()) << std::setw(12) << num(n["kappa"].get<double>())
                  << (n["investable"].get<bool>() ? "yes" : "no") << "\n";
    std::cout << "  edges:";
    for (const auto& e : g["edges"]) std::cout << " " << e[0].get<std::string>() << "->" << e[1].get<std::string>();
    std::cout << "\n";
}

void print_equilibrium(const Json& r) {
    std::cout << "L* = " << num(r["loss"].get<double>(), "%.2f") << "  (" << num(r["loss"].get<double>(), "%.10g") << ")\n";
    print_x(r["x"]);
    std::cout << "critical paths:\n";
    for (const auto& p : r["critical_paths"]) std::cout << "  " << join(p) << "\n";
    if (r.contains("certificate")) {
        const auto& c = r["certificate"];
        std::cout << "certificate: relative gap " << num(c["relative_gap"].get<double>(), "%.3g") << ", spread "
                  << num(c["spread"].get<double>(), "%.3g") << ", budget slack " << num(c["budget_slack"].get<double>(), "%.3g")
                  << ", residual " << num(c["residual"].get<double>(), "%.3g") << ", iterations " << c["iterations"].get<int>()
                  << " (" << c["method"].get<std::string>() << ")\n";
    }
}

void print_solve(const Json& out) {
    print_equilibrium(out["result"]);
    if (!out.contains("perimeter")) return;
    const auto& p = out["perimeter"];
    std::cout << "\nperimeter defence: " << num(p["per_source"].get<double>()) << " on each entry node\n";
    std::cout << "  expected loss = " << num(p["loss"].get<double>(), "%.4g") << "  (" << num(p["ratio_to_optimal"].get<double>(), "%.1f")
              << "x the optimum)\n";
    for (const auto& pl : p["path_losses"])
        std::cout << "    path " << join(pl["path"]) << ": " << num(pl["loss"].get<double>(), "%.6g") << "\n";
    std::cout << "  equal split of the whole budget: loss = " << num(p["equal_split"]["loss"].get<double>(), "%.4g") << "\n";
    std::cout << "  best entry-only allocation: loss = " << num(p["best_perimeter"]["loss"].get<double>(), "%.4g") << "\n";
}

void print_reduce(const Json& out) {
    const auto& g = out["reduced_graph"];
    std::cout << "reduced graph (" << g["nodes"].size() << " nodes):\n";
    print_graph(g);
    std::cout << "trace:\n";
    for (const auto& s : out["trace"]["steps"])
        std::cout << "  " << std::left << std::setw(18) << s["kind"].get<std::string>() << join(s["consumed"], ", ") << " => "
                  << (s["produced"].is_null() ? std::string("(removed)") : s["produced"].get<std::string>()) << "\n";
    if (!out["trace"]["reserves"].empty()) {
        std::cout << "reserves:";
        for (auto it = out["trace"]["reserves"].begin(); it != out["trace"]["reserves"].end(); ++it)
            std::cout << " " << it.key() << "=" << num(it.value().get<double>());
        std::cout << "\n";
    }
    std::cout << "reduced L* = " << num(out["reduced_result"]["loss"].get<double>(), "%.10g") << "\n";
    if (out["backmap"].contains("x")) {
        print_x(out["backmap"]["x"], "back-mapped x*");
        std::cout << "loss at back-mapped x* = " << num(out["backmap"]["loss"].get<double>(), "%.10g") << "\n";
    } else {
        std::cout << "back-map unavailable: " << out["backmap"]["error"]["message"].get<std::string>() << "\n";
    }
}

void print_report(const Json& r) {
    std::cout << "intervention: " << r["spec"]["kind"].get<std::string>() << " at " << join(r["spec"]["anchor"], ", ") << ", new node "
              << r["spec"]["new_attrs"]["id"].get<std::string>() << "\n";
    std::cout << "  base loss     " << num(r["base_loss"].get<double>(), "%.6g") << "\n";
    std::cout << "  modified loss " << num(r["modified_loss"].get<double>(), "%.6g") << "\n";
    std::cout << "  delta         " << num(r["delta"].get<double>(), "%+.6g") << "  => " << r["verdict"].get<std::string>() << "\n";
    print_x(r["modified_x"], "  modified x*");
    for (const auto& w : r["warnings"]) std::cout << "  warning: " << w.get<std::string>() << "\n";
}

void print_rank(const Json& out) {
    for (const auto& e : out["ranking"]) {
        if (e.contains("report")) {
            const auto& r = e["report"];
            std::cout << "#" << e["rank"].get<int>() << "  candidate " << e["index"].get<int>() << "  " << r["spec"]["kind"].get<std::string>()
                      << " at " << join(r["spec"]["anchor"], ", ") << ": modified loss " << num(r["modified_loss"].get<double>(), "%.6g")
                      << " (" << r["verdict"].get<std::string>() << ")\n";
        } else {
            std::cout << "--  candidate " << e["index"].get<int>() << " failed: " << e["error"]["message"].get<std::string>() << "\n";
        }
    }
}

void print_oracle(const Json& out) {
    const auto& r = out["result"];
    std::cout << "grid optimum at resolution " << num(r["resolution"].get<double>()) << ": loss "
              << num(r["loss"].get<double>(), "%.10g") << " (within " << num(r["bound"].get<double>(), "%.3g")
              << " of L*)\n";
    print_x(r["x"]);
    std::cout << "evaluations: " << r["evaluations"].get<std::uint64_t>() << "\n";
}

struct Inputs {
    std::string game, graph, spec;
    std::optional<double> budget, tolerance, resolution;
    std::string method;
    bool json = false;
};

ag::GameDocument load(const Inputs& in) {
    ag::GameDocument d;
    if (!in.game.empty()) {
        d = ag::parse_game_document(ag::read_file(in.game));
    } else if (!in.graph.empty()) {
        d.graph = ag::graph_from_json(ag::detail::parse_json(ag::read_file(in.graph)));
        d.graph_pointer = "";
        if (!in.budget) ag::fail(ag::ErrorCode::InvalidArgument, "--graph needs --budget");
    } else {
        ag::fail(ag::ErrorCode::InvalidArgument, "one of --game or --graph is required");
    }
    std::optional<ag::Method> method;
    if (!in.method.empty()) method = in.method == "smooth" ? ag::Method::Smooth : ag::Method::Barrier;
    return ag::api::with_overrides(d, {in.budget, in.tolerance, in.resolution, method});
}

void emit(const Json& out, bool json, void (*human)(const Json&)) {
    if (json) std::cout << out.dump(2) << "\n";
    else human(out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attack-graph security games: equilibria, reductions and design interventions"};
    app.require_subcommand(1);
    Inputs in;
    std::string strategy = "optimal";
    std::string data_dir = ATTACKGAME_DATA_DIR, host = "0.0.0.0";
    int port = 8080;

    auto common = [&](CLI::App* c) {
        c->add_option("--game", in.game, "game document (graph, budget, options)");
        c->add_option("--graph", in.graph, "graph document; needs --budget");
        c->add_option("--budget", in.budget, "defender budget, overrides the document");
        c->add_option("--tolerance", in.tolerance, "relative optimality gap for the solver");
        c->add_option("--method", in.method, "solver: barrier (default) or smooth")
            ->check(CLI::IsMember({"barrier", "smooth"}));
        c->add_flag("--json", in.json, "print the machine-readable document");
    };
    auto* solve = app.add_subcommand("solve", "equilibrium investment and loss");
    common(solve);
    solve->add_option("--strategy", strategy, "optimal or perimeter")->check(CLI::IsMember({"optimal", "perimeter"}));
    auto* reduce = app.add_subcommand("reduce", "reduce the graph and map the solution back");
    common(reduce);
    auto* intervene = app.add_subcommand("intervene", "evaluate one design intervention");
    common(intervene);
    intervene->add_option("--spec", in.spec, "intervention spec document")->required();
    auto* rank = app.add_subcommand("rank", "rank candidate interventions by resulting loss");
    common(rank);
    rank->add_option("--spec", in.spec, "list of intervention specs")->required();
    auto* oracle = app.add_subcommand("oracle", "exact optimum over a budget lattice");
    common(oracle);
    oracle->add_option("--resolution", in.resolution, "lattice step");
    auto* serve = app.add_subcommand("serve", "start the HTTP service");
    serve->add_option("--port", port, "listening port");
    serve->add_option("--host", host, "listening address");
    serve->add_option("--data", data_dir, "directory holding the bundled examples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (serve->parsed()) {
            ag::service::Service svc(data_dir);
            httplib::Server server;
            svc.mount(server);
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!server.listen(host, port)) {
                std::cerr << "cannot listen on " << host << ":" << port << "\n";
                return kInternal;
            }
            return kOk;
        }
        auto doc = load(in);
        if (solve->parsed())
            emit(ag::api::solve(doc, strategy == "perimeter" ? ag::api::Strategy::Perimeter : ag::api::Strategy::Optimal), in.json,
                 print_solve);
        else if (reduce->parsed())
            emit(ag::api::reduce(doc), in.json, print_reduce);
        else if (intervene->parsed()) {
            auto specs = ag::specs_from_json(ag::detail::parse_json(ag::read_file(in.spec)));
            if (specs.size() != 1) ag::fail(ag::ErrorCode::InvalidArgument, "intervene takes exactly one spec; use rank for lists");
            auto out = ag::api::intervene(doc, specs.front());
            if (in.json) std::cout << out.dump(2) << "\n";
            else print_report(out["report"]);
        } else if (rank->parsed())
            emit(ag::api::rank(doc, ag::specs_from_json(ag::detail::parse_json(ag::read_file(in.spec)))), in.json, print_rank);
        else if (oracle->parsed())
            emit(ag::api::oracle(doc), in.json, print_oracle);
        return kOk;
    } catch (const ag::Error& e) {
        if (in.json) std::cout << ag::api::error_body(e).dump(2) << "\n";
        std::cerr << "error: " << e.what() << "\n";
        for (const auto& d : e.details()) std::cerr << "  " << d.location << ": " << d.message << "\n";
        return e.code() == ag::ErrorCode::NonConvergence ? kNonConvergence : kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
}
