#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "reduction.hpp"
#include "solver.hpp"

namespace attackgame {

enum class InterventionKind { Series, Parallel, Hybrid, Input };
enum class SeriesPosition { After, Before };

inline std::string_view to_string(InterventionKind k) {
    switch (k) {
        case InterventionKind::Series: return "Series";
        case InterventionKind::Parallel: return "Parallel";
        case InterventionKind::Hybrid: return "Hybrid";
        case InterventionKind::Input: return "Input";
    }
    return "Unknown";
}

inline std::optional<InterventionKind> intervention_kind_from_string(std::string_view s) {
    for (auto k : {InterventionKind::Series, InterventionKind::Parallel, InterventionKind::Hybrid, InterventionKind::Input})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

inline std::string_view to_string(SeriesPosition p) { return p == SeriesPosition::After ? "after" : "before"; }

// Where and what to add.
//   Series:   anchor {u, v} splices into edge u->v; anchor {v} goes right
//             after or before v depending on `position`.
//   Parallel: anchor {v}; the new node copies v's in- and out-edges.
//   Hybrid:   anchor {v}; a functional duplicate of v. Every route through
//             the pair must cross one original and one zero-loss auxiliary.
//   Input:    anchor {v}; the new node is an entry point feeding v.
struct InterventionSpec {
    InterventionKind kind = InterventionKind::Series;
    std::vector<std::string> anchor;
    SeriesPosition position = SeriesPosition::After;
    NodeAttr new_attrs;
};

namespace detail {

[[noreturn]] inline void bad_anchor(const std::string& msg) {
    throw Error(ErrorCode::InvalidAnchor, "InvalidAnchor: " + msg, {{ErrorCode::InvalidAnchor, msg, "/anchor"}});
}

inline std::string fresh_id(const RawGraph& r, std::string id) {
    auto taken = [&](const std::string& s) {
        return std::any_of(r.nodes.begin(), r.nodes.end(), [&](const NodeAttr& n) { return n.id == s; });
    };
    do id += '\'';
    while (taken(id));
    return id;
}

inline void reroute_out(RawGraph& r, const std::string& from, const std::string& to) {
    for (auto& e : r.edges)
        if (e.first == from) e.first = to;
}

inline void reroute_in(RawGraph& r, const std::string& from, const std::string& to) {
    for (auto& e : r.edges)
        if (e.second == from) e.second = to;
}

}  // namespace detail

// Returns the transformed graph. The input is left untouched and the output
// is validated like a fresh document.
inline AttackGraph apply(const AttackGraph& g, const InterventionSpec& spec) {
    const auto& anchor = spec.anchor;
    const std::size_t want = spec.kind == InterventionKind::Series ? (anchor.size() == 2 ? 2 : 1) : 1;
    if (anchor.size() != want)
        detail::bad_anchor(std::string(to_string(spec.kind)) + " takes " +
                           (spec.kind == InterventionKind::Series ? "one node or one edge" : "exactly one node"));
    for (const auto& a : anchor)
        if (!g.contains(a)) detail::bad_anchor("unknown node '" + a + "'");
    const std::string& v = anchor.front();
    const NodeIndex vi = g.index_of(v);
    const bool is_source = std::find(g.sources().begin(), g.sources().end(), vi) != g.sources().end();
    const bool is_target = vi == g.target();

    RawGraph r = g.raw();
    NodeAttr fresh = spec.new_attrs;
    const std::string& n = fresh.id;
    r.nodes.push_back(fresh);

    switch (spec.kind) {
        case InterventionKind::Series: {
            if (anchor.size() == 2) {
                auto it = std::find(r.edges.begin(), r.edges.end(), std::pair(anchor[0], anchor[1]));
                if (it == r.edges.end()) detail::bad_anchor("no edge " + anchor[0] + " -> " + anchor[1]);
                it->second = n;
                r.edges.emplace_back(n, anchor[1]);
            } else if (spec.position == SeriesPosition::After) {
                if (is_target) detail::bad_anchor("nothing can follow the target");
                detail::reroute_out(r, v, n);
                r.edges.emplace_back(v, n);
            } else {
                if (is_target) detail::bad_anchor("a node before the target would need to be its only predecessor; anchor an edge instead");
                detail::reroute_in(r, v, n);
                r.edges.emplace_back(n, v);
                if (is_source) std::replace(r.sources.begin(), r.sources.end(), v, n);
            }
            break;
        }
        case InterventionKind::Parallel: {
            if (is_target) detail::bad_anchor("the target cannot be duplicated");
            for (NodeIndex p : g.predecessors(vi)) r.edges.emplace_back(g.node(p).id, n);
            for (NodeIndex s : g.successors(vi)) r.edges.emplace_back(n, g.node(s).id);
            if (is_source) r.sources.push_back(n);
            break;
        }
        case InterventionKind::Hybrid: {
            if (is_target) detail::bad_anchor("the target cannot be duplicated");
            // v -> n' -> succ(v) and pred(v) -> n -> v' -> succ(v).
            NodeAttr v_aux = g.node(vi);
            v_aux.id = detail::fresh_id(r, v);
            v_aux.loss = 0.0;
            r.nodes.push_back(v_aux);
            NodeAttr n_aux = fresh;
            n_aux.id = detail::fresh_id(r, n);
            n_aux.loss = 0.0;
            r.nodes.push_back(n_aux);
            std::erase_if(r.edges, [&](const auto& e) { return e.first == v; });
            r.edges.emplace_back(v, n_aux.id);
            for (NodeIndex s : g.successors(vi)) {
                r.edges.emplace_back(n_aux.id, g.node(s).id);
                r.edges.emplace_back(v_aux.id, g.node(s).id);
            }
            for (NodeIndex p : g.predecessors(vi)) r.edges.emplace_back(g.node(p).id, n);
            r.edges.emplace_back(n, v_aux.id);
            if (is_source) r.sources.push_back(n);
            break;
        }
        case InterventionKind::Input: {
            r.edges.emplace_back(n, v);
            r.sources.push_back(n);
            break;
        }
    }
    return validate(r);
}

enum class Verdict { Improves, Worsens, Neutral };

inline std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Improves: return "Improves";
        case Verdict::Worsens: return "Worsens";
        case Verdict::Neutral: return "Neutral";
    }
    return "Unknown";
}

inline constexpr double kNeutralBand = 1e-6;

struct InterventionReport {
    InterventionSpec spec;
    double budget = 0.0;
    double base_loss = 0.0;
    double modified_loss = 0.0;
    double delta = 0.0;  // modified_loss - base_loss
    std::map<std::string, double> base_x;
    std::map<std::string, double> modified_x;
    // Per-node p0 * exp(-kappa * x) at each equilibrium.
    std::map<std::string, double> base_attack_probability;
    std::map<std::string, double> modified_attack_probability;
    Verdict verdict = Verdict::Neutral;
    RawGraph modified_graph;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::map<std::string, double> by_id(const AttackGraph& g, const std::vector<double>& v) {
    std::map<std::string, double> m;
    for (NodeIndex i = 0; i < g.size(); ++i) m[g.node(i).id] = v[i];
    return m;
}

inline std::optional<std::string> budget_warning(const AttackGraph& g, double budget, const SolveOptions& opt,
                                                 const char* which) {
    try {
        auto s = sufficient_budget(g, opt);
        if (budget < s.budget)
            return std::string(which) + " graph: budget " + std::to_string(budget) + " is below the sufficient budget " +
                   std::to_string(s.budget) + (s.heuristic ? " (heuristic)" : "");
    } catch (const Error& e) {
        return std::string(which) + " graph: sufficient budget unknown (" + e.what() + ")";
    }
    return std::nullopt;
}

}  // namespace detail

inline Verdict verdict_for(double base_loss, double modified_loss) {
    const double band = kNeutralBand * std::max(std::abs(base_loss), std::abs(modified_loss));
    if (modified_loss < base_loss - band) return Verdict::Improves;
    if (modified_loss > base_loss + band) return Verdict::Worsens;
    return Verdict::Neutral;
}

// Solves the game before and after the intervention at the same budget.
inline InterventionReport evaluate(const GameInstance& game, const InterventionSpec& spec) {
    InterventionReport rep;
    rep.spec = spec;
    rep.budget = game.budget;
    AttackGraph mod = apply(game.graph, spec);
    rep.modified_graph = mod.raw();
    for (const auto* which : {"base", "modified"}) {
        const AttackGraph& g = which[0] == 'b' ? game.graph : mod;
        if (auto w = detail::budget_warning(g, game.budget, game.options, which)) rep.warnings.push_back(*w);
    }
    auto base = solve(game.graph, game.budget, game.options);
    auto after = solve(mod, game.budget, game.options);
    rep.base_loss = base.loss;
    rep.modified_loss = after.loss;
    rep.delta = after.loss - base.loss;
    rep.base_x = detail::by_id(game.graph, base.x);
    rep.modified_x = detail::by_id(mod, after.x);
    rep.base_attack_probability = detail::by_id(game.graph, attack_probabilities(game.graph, base.x));
    rep.modified_attack_probability = detail::by_id(mod, attack_probabilities(mod, after.x));
    rep.verdict = verdict_for(base.loss, after.loss);
    return rep;
}

struct RankEntry {
    std::size_t index = 0;  // position in the candidate list
    std::optional<InterventionReport> report;
    std::optional<Error> error;
};

// Successful candidates by ascending modified loss, ties by candidate index,
// followed by failed candidates in index order.
inline std::vector<RankEntry> rank(const GameInstance& game, const std::vector<InterventionSpec>& candidates) {
    if (candidates.empty()) fail(ErrorCode::InvalidArgument, "no candidates to rank");
    std::vector<std::future<RankEntry>> jobs;
    jobs.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        jobs.push_back(std::async(std::launch::async, [&game, &candidates, i] {
            RankEntry e;
            e.index = i;
            try {
                e.report = evaluate(game, candidates[i]);
            } catch (const Error& err) {
                e.error = err;
            } catch (const std::exception& err) {
                e.error = Error(ErrorCode::InvalidArgument, err.what());
            }
            return e;
        }));
    std::vector<RankEntry> out;
    for (auto& j : jobs) out.push_back(j.get());
    std::stable_sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
        if (a.report.has_value() != b.report.has_value()) return a.report.has_value();
        if (a.report && a.report->modified_loss != b.report->modified_loss)
            return a.report->modified_loss < b.report->modified_loss;
        return a.index < b.index;
    });
    return out;
}

// --- closed forms on the base network -----------------------------------------

// Base network v1 -> v2 -> vg with every p0 equal to p and vg not investable.
// v3 is the added node; the hybrid uses L2 as the common loss L, and the
// input intervention requires L3 = L1.
struct BaseNetworkParams {
    double L1 = 1.0, L2 = 1.0, Lg = 6.0;
    double kappa1 = 1.0, kappa2 = 2.0;
    double p = 1.0;
    double B = 1.0;
    double L3 = 0.0, kappa3 = 1.0;
};

enum class ClosedForm {
    Base,
    SeriesPost,
    SeriesPre,
    ParallelScenario1,
    ParallelScenario2,
    ParallelLimit,
    HybridScenario1,
    InputCase1,
    InputCase2,
};

inline constexpr ClosedForm kAllClosedForms[] = {
    ClosedForm::Base,           ClosedForm::SeriesPost,      ClosedForm::SeriesPre,
    ClosedForm::ParallelScenario1, ClosedForm::ParallelScenario2, ClosedForm::ParallelLimit,
    ClosedForm::HybridScenario1, ClosedForm::InputCase1,      ClosedForm::InputCase2,
};

inline std::string_view to_string(ClosedForm f) {
    switch (f) {
        case ClosedForm::Base: return "base";
        case ClosedForm::SeriesPost: return "series_post";
        case ClosedForm::SeriesPre: return "series_pre";
        case ClosedForm::ParallelScenario1: return "parallel_scenario1";
        case ClosedForm::ParallelScenario2: return "parallel_scenario2";
        case ClosedForm::ParallelLimit: return "parallel_limit";
        case ClosedForm::HybridScenario1: return "hybrid_scenario1";
        case ClosedForm::InputCase1: return "input_case1";
        case ClosedForm::InputCase2: return "input_case2";
    }
    return "unknown";
}

// The graph each closed form describes: the base network with the matching
// intervention applied, new node "v3".
inline AttackGraph closed_form_graph(ClosedForm f, const BaseNetworkParams& q) {
    RawGraph r;
    r.nodes = {{"v1", q.L1, q.p, q.kappa1, true}, {"v2", q.L2, q.p, q.kappa2, true}, {"vg", q.Lg, q.p, 1.0, false}};
    r.edges = {{"v1", "v2"}, {"v2", "vg"}};
    r.sources = {"v1"};
    r.target = "vg";
    AttackGraph base = validate(r);
    InterventionSpec s;
    s.anchor = {"v2"};
    s.new_attrs = {"v3", q.L3, q.p, q.kappa3, true};
    switch (f) {
        case ClosedForm::Base:
        case ClosedForm::ParallelLimit: return base;
        case ClosedForm::SeriesPost: s.kind = InterventionKind::Series; break;
        case ClosedForm::SeriesPre:
            s.kind = InterventionKind::Series;
            s.position = SeriesPosition::Before;
            break;
        case ClosedForm::ParallelScenario1:
        case ClosedForm::ParallelScenario2: s.kind = InterventionKind::Parallel; break;
        case ClosedForm::HybridScenario1: s.kind = InterventionKind::Hybrid; break;
        case ClosedForm::InputCase1:
        case ClosedForm::InputCase2: s.kind = InterventionKind::Input; break;
    }
    return apply(base, s);
}

namespace detail {

[[noreturn]] inline void regime(ClosedForm f, const std::string& why) {
    fail(ErrorCode::RegimeViolation, std::string(to_string(f)) + ": " + why);
}

// Chain with per-node terms A_k (loss contributions at zero investment) and
// sensitivities k_k, all nodes funded. Returns the loss, or the violated
// condition.
inline double chain_closed_form(ClosedForm f, const std::vector<double>& A, const std::vector<double>& k, double B) {
    const std::size_t n = A.size();
    std::vector<double> rho(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(k[i] < k[i + 1])) regime(f, "sensitivities must increase along the chain");
        rho[i] = (1.0 / k[i] - 1.0 / k[i + 1]) / A[i];
    }
    rho[n - 1] = 1.0 / (k[n - 1] * A[n - 1]);
    double interior = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        if (!(rho[i] < rho[i - 1])) regime(f, "node " + std::to_string(i + 1) + " of the chain would receive no investment");
        interior += std::log(rho[i - 1] / rho[i]) / k[i];
    }
    if (B < interior) regime(f, "budget " + std::to_string(B) + " is below the sufficient budget " + std::to_string(interior));
    return std::exp(-k[0] * (B - interior)) / (k[0] * rho[0]);
}

}  // namespace detail

// Evaluates one closed form as printed, after checking it applies. Throws
// RegimeViolation naming the first failed condition.
inline double closed_form(ClosedForm f, const BaseNetworkParams& q) {
    const double p = q.p, p2 = p * p, p3 = p2 * p, p4 = p3 * p;
    const double k1 = q.kappa1, k2 = q.kappa2, k3 = q.kappa3, B = q.B;
    if (!(p > 0.0 && p <= 1.0)) detail::regime(f, "p must lie in (0, 1]");
    if (!(B >= 0.0)) detail::regime(f, "budget must be >= 0");
    const double W = q.L2 * p2 + q.Lg * p3;  // v2 and the target behind it
    switch (f) {
        case ClosedForm::Base: {
            if (!(k2 > k1)) detail::regime(f, "needs kappa2 > kappa1");
            const double r = (k1 / (k2 - k1)) * (q.L1 * p / W);
            if (!(r < 1.0)) detail::regime(f, "v2 receives no investment");
            const double x2 = -std::log(r) / k2;
            if (B < x2) detail::regime(f, "budget below the sufficient budget " + std::to_string(x2));
            return q.L1 * k2 * p / (k2 - k1) * std::pow(r, -k1 / k2) * std::exp(-k1 * B);
        }
        case ClosedForm::SeriesPost:
        case ClosedForm::SeriesPre: {
            const bool post = f == ClosedForm::SeriesPost;
            const double Lmid = post ? q.L2 : q.L3, Llast = post ? q.L3 : q.L2;
            const double kmid = post ? k2 : k3, klast = post ? k3 : k2;
            // Conditions on the chain, then the printed product form.
            const std::vector<double> A = {q.L1 * p, Lmid * p2, Llast * p3 + q.Lg * p4};
            detail::chain_closed_form(f, A, {k1, kmid, klast}, B);
            const double first = (k1 / klast) * ((klast - kmid) / (kmid - k1)) * (q.L1 * p) / (Lmid * p2);
            const double second = (kmid / (klast - kmid)) * (Lmid * p2) / (Llast * p3 + q.Lg * p4);
            return q.L1 * kmid * p / (kmid - k1) * std::pow(first, -k1 / kmid) * std::pow(second, -k1 / klast) *
                   std::exp(-k1 * B);
        }
        case ClosedForm::ParallelScenario1: {
            const double kpar = 1.0 / k2 + 1.0 / k3;
            const bool two_high = q.L2 >= q.L3;
            const double Lhi = two_high ? q.L2 : q.L3, Llo = two_high ? q.L3 : q.L2;
            const double khi = two_high ? k2 : k3;
            const double ylo = Llo * p2 + q.Lg * p3;
            if (!parallel_zero_test(q.L1 * p, k1, ylo, kpar))
                detail::regime(f, "the lower branch would be funded (parallel zero test fails)");
            if (Lhi > Llo) {
                // Funding the higher branch alone must beat the root all the
                // way down to the lower branch.
                const double K = k1 / khi;
                if (!(K < 1.0) || K * q.L1 * p / (1.0 - K) > ylo)
                    detail::regime(f, "the higher branch is not funded down to the lower branch");
            }
            const double ratio = (Llo + q.Lg * p) / (Lhi + q.Lg * p);
            const double xhi = -std::log(ratio) / khi;
            if (B < xhi) detail::regime(f, "budget below the equalising investment " + std::to_string(xhi));
            return (q.L1 * p + Llo * p2 + q.Lg * p3) * std::pow(ratio, -k1 / khi) * std::exp(-k1 * B);
        }
        case ClosedForm::ParallelScenario2: {
            const double kpar = 1.0 / k2 + 1.0 / k3;
            const double K = k1 * kpar;
            if (!(K < 1.0)) detail::regime(f, "needs kappa1 * kappa_par < 1");
            const double c = K / (1.0 - K) * q.L1 * p;
            const double r2 = c / (q.L2 * p2 + q.Lg * p3), r3 = c / (q.L3 * p2 + q.Lg * p3);
            if (!(r2 < 1.0)) detail::regime(f, "v2 receives no investment");
            if (!(r3 < 1.0)) detail::regime(f, "v3 receives no investment");
            const double interior = -std::log(r2) / k2 - std::log(r3) / k3;
            if (B < interior) detail::regime(f, "budget below the sufficient budget " + std::to_string(interior));
            return q.L1 * p / (1.0 - K) * std::pow(r2, -k1 / k2) * std::pow(r3, -k1 / k3) * std::exp(-k1 * B);
        }
        case ClosedForm::ParallelLimit: {
            // All budget on v2 is optimal only while v2 is still short of its
            // sufficient-budget investment.
            if (!(k2 > k1)) detail::regime(f, "needs kappa2 > kappa1");
            const double r = (k1 / (k2 - k1)) * (q.L1 * p / W);
            const double x2 = r < 1.0 ? -std::log(r) / k2 : 0.0;
            if (B > x2) detail::regime(f, "budget above v2's sufficient investment " + std::to_string(x2));
            return q.L1 * p + W * std::exp(-k2 * B);
        }
        case ClosedForm::HybridScenario1: {
            if (q.L3 != q.L2) detail::regime(f, "needs L3 = L2");
            const double Wh = q.L2 * p2 + q.Lg * p4;
            const double V = q.L1 * p + Wh;
            const double ca = std::min(1.0 / (k2 * Wh), 1.0 / (k3 * q.Lg * p4));
            const double cb = std::min(1.0 / (k3 * Wh), 1.0 / (k2 * q.Lg * p4));
            if (!(1.0 / (k1 * V) <= ca + cb)) detail::regime(f, "the duplicated pair would be funded");
            return V * std::exp(-k1 * B);
        }
        case ClosedForm::InputCase1:
        case ClosedForm::InputCase2: {
            if (q.L3 != q.L1) detail::regime(f, "needs L3 = L1");
            const double kinp = 1.0 / k1 + 1.0 / k3;
            const double K = k2 * kinp;
            const double L = q.L1;
            const bool zero = K <= 1.0 || L >= (K - 1.0) * W / p;
            if (f == ClosedForm::InputCase1) {
                if (!zero) detail::regime(f, "v2 would be funded (input zero test fails)");
                return (L * p + W) * std::exp(-B / kinp);
            }
            if (zero) detail::regime(f, "v2 receives no investment (input zero test holds)");
            const double r = L * p / ((K - 1.0) * W);
            const double x2 = -std::log(r) / k2;
            if (B < x2) detail::regime(f, "budget below the sufficient budget " + std::to_string(x2));
            // The printed prefactor omits p; it is L p K / (K - 1).
            return L * p * K / (K - 1.0) * std::pow(r, -1.0 / K) * std::exp(-B / kinp);
        }
    }
    fail(ErrorCode::InvalidArgument, "unknown closed form");
}

// Named values of the requested closed forms; the first one out of regime
// raises RegimeViolation.
inline std::map<std::string, double> closed_form_losses(const BaseNetworkParams& q,
                                                        std::span<const ClosedForm> which = kAllClosedForms) {
    std::map<std::string, double> out;
    for (ClosedForm f : which) out.emplace(to_string(f), closed_form(f, q));
    return out;
}

// Every closed form whose conditions hold for these parameters.
inline std::map<std::string, double> applicable_closed_forms(const BaseNetworkParams& q) {
    std::map<std::string, double> out;
    for (ClosedForm f : kAllClosedForms) {
        try {
            out.emplace(to_string(f), closed_form(f, q));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RegimeViolation) throw;
        }
    }
    return out;
}

}  // namespace attackgame
