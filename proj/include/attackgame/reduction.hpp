#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "solver.hpp"

namespace attackgame {

enum class StepKind {
    InertMerge,
    SeriesZeroMerge,
    SeriesReduce,
    ParallelZeroPrune,
    ParallelReduce,
    InputZeroTest,
    InputReduce,
};

inline std::string_view to_string(StepKind k) {
    switch (k) {
        case StepKind::InertMerge: return "InertMerge";
        case StepKind::SeriesZeroMerge: return "SeriesZeroMerge";
        case StepKind::SeriesReduce: return "SeriesReduce";
        case StepKind::ParallelZeroPrune: return "ParallelZeroPrune";
        case StepKind::ParallelReduce: return "ParallelReduce";
        case StepKind::InputZeroTest: return "InputZeroTest";
        case StepKind::InputReduce: return "InputReduce";
    }
    return "Unknown";
}

inline std::optional<StepKind> step_kind_from_string(std::string_view s) {
    for (auto k : {StepKind::InertMerge, StepKind::SeriesZeroMerge, StepKind::SeriesReduce, StepKind::ParallelZeroPrune,
                   StepKind::ParallelReduce, StepKind::InputZeroTest, StepKind::InputReduce})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

// A working node: attributes plus the minimum investment its constituents
// need before the equivalent form is exact.
struct NodeState {
    NodeAttr attr;
    double reserve = 0.0;
    friend bool operator==(const NodeState&, const NodeState&) = default;
};

// Constituent investment as an affine function of the carrier's investment y:
//   x = a * (y - F) + b
struct Share {
    std::string id;
    double a = 0.0;
    double b = 0.0;
};

// Applied in field order: node removals, edge removals, upserts, new edges.
struct GraphDelta {
    std::vector<std::string> removed;
    std::vector<std::pair<std::string, std::string>> edges_removed;
    std::vector<NodeState> upserted;
    std::vector<std::pair<std::string, std::string>> edges_added;
};

struct ReductionStep {
    StepKind kind{};
    std::vector<std::string> consumed;
    std::optional<std::string> produced;
    std::string carrier;  // node whose reduced investment drives the shares
    double fixed_total = 0.0;  // F
    std::vector<Share> shares;
    std::map<std::string, double> closure;
    GraphDelta delta;
};

struct ReductionTrace {
    RawGraph original;
    std::vector<ReductionStep> steps;
    RawGraph reduced;
    std::map<std::string, double> reserves;  // nonzero reserves of the reduced graph
};

struct ReductionResult {
    AttackGraph graph;
    ReductionTrace trace;
};

// Reduced graphs may hold equivalent nodes with kappa below one.
inline ValidateOptions reduced_graph_options() {
    ValidateOptions o;
    o.kappa_strictly_positive_only = true;
    return o;
}

// ---------------------------------------------------------------------------
// Block-level operations. These work on attribute records and know nothing
// about the surrounding graph; reduce() supplies ids, downstream constants
// and the graph edits.

struct Block {
    NodeAttr attr;
    double reserve = 0.0;
    // Only meaningful with a reserve: the log-slope of the node's value just
    // below its reserve, its loss-to-go with nothing invested behind it, and
    // the rate that loss falls at with the first unit of budget. The
    // equivalent form is exact only while zeta >= kappa.
    double zeta = std::numeric_limits<double>::infinity();
    double zero_value = 0.0;
    double zero_slope = 0.0;
};

using IdMaker = std::function<std::string(const std::string&)>;

inline std::string join_ids(const std::vector<std::string>& ids) {
    std::string s;
    for (const auto& id : ids) s += (s.empty() ? "" : "+") + id;
    return s;
}

// Node with loss-to-go V (at zero investment) in front of a constant
// downstream D. Prefers default probability p0_cand; if that cannot reach V
// the loss is set to zero and p0 scaled down instead.
inline NodeAttr represent(std::string id, double V, double p0_cand, double D, double kappa, bool investable) {
    NodeAttr a;
    a.id = std::move(id);
    a.kappa = kappa;
    a.investable = investable;
    if (V >= p0_cand * D) {
        a.p0 = p0_cand;
        a.loss = V / p0_cand - D;
    } else {
        a.p0 = V / D;
        a.loss = 0.0;
    }
    return a;
}

// Default probability after the node's reserve has been spent on it.
inline double effective_p0(const Block& b) { return b.attr.p0 * std::exp(-b.attr.kappa * b.reserve); }

// Loss-to-go at zero investment, given the constant downstream D.
inline double value_at_zero(const Block& b, double D) {
    return b.reserve > 0.0 ? b.zero_value : b.attr.p0 * (b.attr.loss + D);
}

inline double slope_at_zero(const Block& b, double D) {
    return b.reserve > 0.0 ? b.zero_slope : b.attr.kappa * b.attr.p0 * (b.attr.loss + D);
}

inline constexpr double kKinkTolerance = 1e-9;

// --- series ---------------------------------------------------------------

// Closed-form pair test. `kappa_after` empty: the pair ends the chain and
// L_next already carries the downstream loss. Otherwise the mid-chain test,
// with the successor of `next` supplying the third kappa. Losses are
// p0-folded.
struct SeriesPair {
    double L_prev = 0.0, kappa_prev = 1.0;
    double L_next = 0.0, kappa_next = 1.0;
    std::optional<double> kappa_after;
};

inline bool series_zero_test(const SeriesPair& p) {
    if (p.kappa_prev >= p.kappa_next) return true;
    if (!p.kappa_after) return p.L_prev >= (p.kappa_next / p.kappa_prev - 1.0) * p.L_next;
    const double k3 = *p.kappa_after;
    if (p.kappa_next >= k3) return false;  // next pools with its own successor first
    return p.L_prev >= ((p.kappa_next / p.kappa_prev - 1.0) / (1.0 - p.kappa_next / k3)) * p.L_next;
}

// A maximal chain of investable blocks; `downstream` is the constant loss of
// the settled node it exits into, when it has one.
struct Chain {
    std::vector<Block> blocks;
    std::optional<double> downstream;
};

namespace detail {

// Terms A_b = L_b * prod_{c<=b} p0_c e^{-kappa_c r_c} (last includes D).
inline std::vector<double> chain_terms(const Chain& c) {
    std::vector<double> A(c.blocks.size());
    double prefix = 1.0;
    for (std::size_t b = 0; b < c.blocks.size(); ++b) {
        prefix *= effective_p0(c.blocks[b]);
        double L = c.blocks[b].attr.loss;
        if (b + 1 == c.blocks.size() && c.downstream) L += *c.downstream;
        A[b] = L * prefix;
    }
    return A;
}

// rho_b = (1/k_b - 1/k_{b+1}) / A_b, rho_last = 1/(k_last A_last).
// Interior investment of block b >= 2 is ln(rho_{b-1}/rho_b)/k_b.
inline double chain_rho(const Chain& c, const std::vector<double>& A, std::size_t b) {
    const double kb = c.blocks[b].attr.kappa;
    if (b + 1 == c.blocks.size()) return 1.0 / (kb * A[b]);
    const double num = 1.0 / kb - 1.0 / c.blocks[b + 1].attr.kappa;
    if (A[b] == 0.0) return num > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    return num / A[b];
}

// Does block b+1 pool into block b?
inline bool pools(const Chain& c, const std::vector<double>& A, std::size_t b) {
    if (c.blocks[b].attr.kappa >= c.blocks[b + 1].attr.kappa) return true;
    if (!c.downstream) return false;
    return chain_rho(c, A, b) <= chain_rho(c, A, b + 1);
}

}  // namespace detail

struct SeriesMergeResult {
    Chain chain;
    std::vector<ReductionStep> steps;
    std::vector<Block> produced;  // node made by each step
    bool blocked = false;  // a pool into a reserved block would not be exact
};

// Pools zero-investment blocks into their predecessors, from the chain end
// backwards, re-testing after each merge. Without a settled downstream only
// kappa-ordered pairs pool, since those merges hold whatever follows.
inline SeriesMergeResult series_merge_zeros(Chain chain, const IdMaker& make_id = {}) {
    SeriesMergeResult out;
    while (chain.blocks.size() >= 2) {
        auto A = detail::chain_terms(chain);
        std::optional<std::size_t> hit;
        for (std::size_t b = chain.blocks.size() - 1; b-- > 0;)
            if (detail::pools(chain, A, b)) {
                hit = b;
                break;
            }
        if (!hit) break;
        const std::size_t b = *hit;
        const Block& prev = chain.blocks[b];
        const Block& next = chain.blocks[b + 1];
        const bool last = b + 2 == chain.blocks.size();
        const double q = effective_p0(next);
        std::string id = join_ids({prev.attr.id, next.attr.id});
        if (make_id) id = make_id(id);

        Block merged;
        bool next_idle = false;  // next's whole structure stays at zero
        if (next.reserve > 0.0 && last && chain.downstream) {
            // next takes no budget beyond its reserve. It either keeps all of
            // the reserve (taking budget out of next costs more than prev
            // gains) or none of it (even its first unit is worth less).
            const double D = *chain.downstream;
            const double M = q * (next.attr.loss + D);
            const double zeta = next.zeta * M / (prev.attr.loss + M);
            const double V0 = value_at_zero(next, D);
            if (zeta >= prev.attr.kappa * (1.0 - kKinkTolerance)) {
                const double V = prev.attr.p0 * q * std::exp(prev.attr.kappa * next.reserve) *
                                 (prev.attr.loss / q + next.attr.loss + D);
                merged.attr = represent(id, V, prev.attr.p0 * q, D, prev.attr.kappa, true);
                merged.reserve = next.reserve;
                merged.zeta = zeta;
                merged.zero_value = prev.attr.p0 * (prev.attr.loss + V0);
                merged.zero_slope =
                    std::max(prev.attr.kappa * merged.zero_value, prev.attr.p0 * slope_at_zero(next, D));
            } else if (slope_at_zero(next, D) <= prev.attr.kappa * (prev.attr.loss + V0)) {
                next_idle = true;
                merged.attr = represent(id, prev.attr.p0 * (prev.attr.loss + V0), prev.attr.p0 * next.attr.p0, D,
                                        prev.attr.kappa, true);
            } else {
                out.blocked = true;
                break;
            }
        } else {
            merged.attr = {id, prev.attr.loss / q + next.attr.loss, prev.attr.p0 * q, prev.attr.kappa, true};
        }

        ReductionStep st;
        st.kind = StepKind::SeriesZeroMerge;
        st.consumed = {prev.attr.id, next.attr.id};
        st.produced = id;
        st.carrier = id;
        st.fixed_total = merged.reserve;
        st.shares = {{prev.attr.id, 1.0, 0.0}};
        if (!next_idle) st.shares.push_back({next.attr.id, 0.0, next.reserve});
        st.closure = {{"kappa_prev", prev.attr.kappa}, {"kappa_next", next.attr.kappa}, {"q", q},
                      {"next_idle", next_idle ? 1.0 : 0.0}};
        out.steps.push_back(std::move(st));
        out.produced.push_back(merged);

        chain.blocks[b] = merged;
        chain.blocks.erase(chain.blocks.begin() + static_cast<std::ptrdiff_t>(b) + 1);
    }
    out.chain = std::move(chain);
    return out;
}

struct BlockResult {
    Block block;
    ReductionStep step;
    // False when a reserved part would be partly funded; the block is then
    // not an exact stand-in and callers should leave the structure alone.
    bool exact = true;
};

// Replaces a terminal chain whose blocks all receive investment by one node
// with kappa of the head. Interior investments are budget-independent.
inline BlockResult series_reduce(const Chain& chain, const IdMaker& make_id = {}) {
    if (!chain.downstream) fail(ErrorCode::InvalidArgument, "series_reduce needs a chain ending in a settled node");
    if (chain.blocks.size() < 2) fail(ErrorCode::InvalidArgument, "series_reduce needs at least two blocks");
    for (std::size_t b = 0; b + 1 < chain.blocks.size(); ++b)
        if (chain.blocks[b].attr.kappa == chain.blocks[b + 1].attr.kappa)
            fail(ErrorCode::DegenerateKappa, "consecutive blocks '" + chain.blocks[b].attr.id + "' and '" +
                                                 chain.blocks[b + 1].attr.id + "' share kappa; merge them first");
    auto A = detail::chain_terms(chain);
    const std::size_t k = chain.blocks.size();
    std::vector<double> rho(k);
    for (std::size_t b = 0; b < k; ++b) rho[b] = detail::chain_rho(chain, A, b);
    for (std::size_t b = 1; b < k; ++b)
        if (!(rho[b - 1] > rho[b]) || !(rho[b] > 0.0) || !std::isfinite(rho[b - 1]))
            fail(ErrorCode::InvalidArgument, "block '" + chain.blocks[b].attr.id +
                                                 "' would not receive investment; apply series_merge_zeros first");

    std::vector<std::string> ids;
    for (const auto& bl : chain.blocks) ids.push_back(bl.attr.id);
    std::string id = join_ids(ids);
    if (make_id) id = make_id(id);

    ReductionStep st;
    st.kind = StepKind::SeriesReduce;
    st.consumed = ids;
    st.produced = id;
    st.carrier = id;
    double reserve = chain.blocks.back().reserve;
    std::vector<double> z(k, 0.0);
    for (std::size_t b = 1; b < k; ++b) {
        z[b] = std::log(rho[b - 1] / rho[b]) / chain.blocks[b].attr.kappa;
        reserve += z[b];
        st.closure["rho_" + ids[b - 1]] = rho[b - 1];
    }
    st.closure["rho_" + ids.back()] = rho.back();
    st.fixed_total = reserve;
    st.shares.push_back({ids[0], 1.0, 0.0});
    for (std::size_t b = 1; b < k; ++b)
        st.shares.push_back({ids[b], 0.0, z[b] + (b + 1 == k ? chain.blocks[b].reserve : 0.0)});

    const double k1 = chain.blocks[0].attr.kappa;
    const double V = std::exp(k1 * reserve) / (k1 * rho[0]);
    st.closure["value_at_zero"] = V;
    st.closure["reserve"] = reserve;
    BlockResult out;
    out.block.attr = represent(id, V, chain.blocks[0].attr.p0, *chain.downstream, k1, true);
    out.block.reserve = reserve;
    out.block.zeta = k1;  // interior blocks give way first and match the head's slope
    // First unit of budget goes to whichever block cuts the zero-investment
    // loss fastest.
    double v0 = value_at_zero(chain.blocks.back(), *chain.downstream);
    double s0 = slope_at_zero(chain.blocks.back(), *chain.downstream);
    for (std::size_t b = k - 1; b-- > 0;) {
        const auto& a = chain.blocks[b].attr;
        v0 = a.p0 * (a.loss + v0);
        s0 = std::max(a.kappa * v0, a.p0 * s0);
    }
    out.block.zero_value = v0;
    out.block.zero_slope = s0;
    out.step = std::move(st);
    return out;
}

// --- parallel -------------------------------------------------------------

// Closed-form parallel test: is the lowest branch left uninvested?
// `M_min` is that branch's loss including its downstream.
inline bool parallel_zero_test(double L_root, double kappa_root, double M_min, double kappa_par) {
    const double K = kappa_root * kappa_par;
    return K >= 1.0 || L_root >= ((1.0 - K) / K) * M_min;
}

// Root with investable branches, each exiting into a settled node.
// `fixed` holds the loss-to-go of settled nodes the root reaches directly;
// they behave as branches that can never be invested.
struct Fan {
    Block root;
    std::vector<Block> branches;
    std::vector<double> downstream;  // per branch
    std::vector<double> fixed;
};

struct FanPlan {
    std::vector<std::size_t> survivors;  // branch indices, ascending value
    std::vector<std::size_t> pruned;     // in prune order
    std::vector<double> M;               // branch value at its reserve
    std::vector<double> invest;          // per branch: fixed investment
    double K = 0.0;
    double y_A = 0.0;    // water level the survivors settle at without binding
    double level = 0.0;  // the level actually used
    double tax = 0.0;    // total fixed branch investment
    double zeta = std::numeric_limits<double>::infinity();  // root slope below the tax
    bool binding = false;
    bool survivor_prunable = false;
    // Some branch would need only part of its reserve, or the root's value
    // would not be convex at the tax. No closed form; leave the fan alone.
    bool inexact = false;
    bool reduce = false;  // false: leave the root and survivor to the series pass
};

inline FanPlan plan_fan(const Fan& fan) {
    FanPlan p;
    const std::size_t m = fan.branches.size();
    p.M.resize(m);
    p.invest.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        p.M[j] = effective_p0(fan.branches[j]) * (fan.branches[j].attr.loss + fan.downstream[j]);
    std::vector<std::size_t> A(m);
    for (std::size_t j = 0; j < m; ++j) A[j] = j;
    std::stable_sort(A.begin(), A.end(), [&](std::size_t a, std::size_t b) {
        if (p.M[a] != p.M[b]) return p.M[a] < p.M[b];
        return fan.branches[a].attr.id < fan.branches[b].attr.id;
    });
    const double ki = fan.root.attr.kappa, Li = fan.root.attr.loss;
    auto kpar = [&](const std::vector<std::size_t>& set) {
        double s = 0.0;
        for (std::size_t j : set) s += 1.0 / fan.branches[j].attr.kappa;
        return s;
    };
    while (A.size() > 1 && parallel_zero_test(Li, ki, p.M[A.front()], kpar(A))) {
        p.pruned.push_back(A.front());
        A.erase(A.begin());
    }
    p.survivors = A;
    if (A.empty()) return p;
    p.K = ki * kpar(A);
    p.y_A = p.K < 1.0 ? p.K * Li / (1.0 - p.K) : std::numeric_limits<double>::infinity();
    double floor_level = 0.0;
    for (std::size_t j : p.pruned) floor_level = std::max(floor_level, p.M[j]);
    for (double f : fan.fixed) floor_level = std::max(floor_level, f);

    p.survivor_prunable = A.size() == 1 && parallel_zero_test(Li, ki, p.M[A.front()], kpar(A));
    if (p.survivor_prunable) {
        p.level = std::max(p.M[A.front()], floor_level);
    } else {
        p.level = std::max(p.y_A, floor_level);
        p.binding = floor_level > p.y_A;
    }

    // Taking budget back out of the fan raises the level, and every part
    // sitting at the level gives some up: survivors above their reserve at
    // rate 1/kappa, reserved parts at 1/zeta. A reserved part settled below
    // the level needs either none of its reserve or only some of it.
    const double total = Li + p.level;
    const double at_level = p.level * (1.0 - 1e-12);
    double give = 0.0;
    bool pruned_reserve = false;
    auto reserved = [&](std::size_t j, bool pruned) {
        const auto& br = fan.branches[j];
        if (p.M[j] >= at_level) {
            p.invest[j] = br.reserve;
            give += 1.0 / br.zeta;
            pruned_reserve = pruned_reserve || pruned;
        } else if (value_at_zero(br, fan.downstream[j]) > p.level) {
            p.inexact = true;
        }
    };
    for (std::size_t j : A) {
        const auto& br = fan.branches[j];
        const double z = p.M[j] > p.level ? std::log(p.M[j] / p.level) / br.attr.kappa : 0.0;
        if (z > 0.0) {
            p.invest[j] = br.reserve + z;
            give += 1.0 / br.attr.kappa;
        } else if (br.reserve > 0.0) {
            reserved(j, false);
        }
    }
    for (std::size_t j : p.pruned)
        if (fan.branches[j].reserve > 0.0) reserved(j, true);
    if (give > 0.0) p.zeta = p.level / total / give;
    for (std::size_t j : A) p.tax += p.invest[j];
    for (std::size_t j : p.pruned) p.tax += p.invest[j];
    if (p.tax > 0.0 && p.zeta < ki * (1.0 - kKinkTolerance)) p.inexact = true;
    if (p.inexact) return p;
    if (p.survivor_prunable)
        p.reduce = !fan.fixed.empty() || pruned_reserve;
    else
        p.reduce = A.size() > 1 || p.binding || !fan.fixed.empty() || pruned_reserve;
    return p;
}

// One step per branch that the parallel test (applied repeatedly) leaves
// uninvested. A pruned branch keeps its reserve when it needs it; otherwise
// the step carries no share and everything behind the branch stays at zero.
inline std::vector<ReductionStep> parallel_zero_prune(const Fan& fan, const FanPlan& plan) {
    std::vector<ReductionStep> out;
    for (std::size_t j : plan.pruned) {
        ReductionStep st;
        st.kind = StepKind::ParallelZeroPrune;
        st.consumed = {fan.branches[j].attr.id};
        if (plan.invest[j] > 0.0) st.shares = {{fan.branches[j].attr.id, 0.0, plan.invest[j]}};
        st.closure = {{"branch_value", plan.M[j]}, {"invest", plan.invest[j]}};
        out.push_back(std::move(st));
    }
    return out;
}

struct ParallelResult {
    Block root;          // same id, loss scaled by the tax
    NodeAttr collapsed;  // non-investable node standing for the branch set
    ReductionStep step;
};

// Replaces the surviving branches by a constant-loss node behind the root.
// Branch investments are fixed (the tax t, budget independent) and charged
// to the root as its reserve. `downstream` is the loss-to-go of the node the
// collapsed node will point at.
inline ParallelResult parallel_reduce(const Fan& fan, const FanPlan& plan, double downstream,
                                      const IdMaker& make_id = {}) {
    if (plan.survivors.empty()) fail(ErrorCode::InvalidArgument, "fan has no branches");
    if (plan.inexact) fail(ErrorCode::NotDecomposable, "fan has no exact equivalent node");
    if (!plan.survivor_prunable && std::abs(1.0 - plan.K) < 1e-15)
        fail(ErrorCode::DegenerateDenominator, "kappa_root * kappa_par = 1; prune instead");
    const double ki = fan.root.attr.kappa;
    std::vector<std::string> surv_ids;
    ReductionStep st;
    st.kind = StepKind::ParallelReduce;
    st.consumed.push_back(fan.root.attr.id);
    st.shares.push_back({fan.root.attr.id, 1.0, 0.0});
    for (std::size_t j : plan.survivors) {
        const auto& br = fan.branches[j];
        surv_ids.push_back(br.attr.id);
        st.consumed.push_back(br.attr.id);
        st.shares.push_back({br.attr.id, 0.0, plan.invest[j]});
    }
    const double t = plan.tax;
    std::string id = join_ids(surv_ids);
    if (make_id) id = make_id(id);
    const double scale = std::exp(ki * t);
    const double C = scale * plan.level;
    const double p0c = plan.survivors.size() == 1 ? fan.branches[plan.survivors.front()].attr.p0 : 1.0;

    ParallelResult out;
    out.root = fan.root;
    out.root.attr.loss = fan.root.attr.loss * scale;
    out.root.reserve = t;
    out.root.zeta = plan.zeta;
    double worst = 0.0, worst_slope = 0.0;
    int at_worst = 0;
    auto consider = [&](double v, double slope) {
        if (v > worst) {
            worst = v;
            worst_slope = slope;
            at_worst = 1;
        } else if (v == worst) {
            ++at_worst;
        }
    };
    for (std::size_t j = 0; j < fan.branches.size(); ++j)
        consider(value_at_zero(fan.branches[j], fan.downstream[j]), slope_at_zero(fan.branches[j], fan.downstream[j]));
    for (double f : fan.fixed) consider(f, 0.0);
    out.root.zero_value = fan.root.attr.p0 * (fan.root.attr.loss + worst);
    out.root.zero_slope = std::max(fan.root.attr.kappa * out.root.zero_value,
                                   at_worst == 1 ? fan.root.attr.p0 * worst_slope : 0.0);
    out.collapsed = represent(id, C, p0c, downstream, 1.0, false);

    st.produced = id;
    st.carrier = fan.root.attr.id;
    st.fixed_total = t;
    st.closure = {{"level", plan.level}, {"tax", t}, {"y_A", plan.y_A}, {"K", plan.K},
                  {"L_eq", scale * (fan.root.attr.loss + plan.level)}};
    out.step = std::move(st);
    return out;
}

// --- input stars ----------------------------------------------------------

// Sources feeding one investable node t, which exits into a settled node.
struct Star {
    std::vector<Block> inputs;
    Block t;
    double downstream = 0.0;
};

struct StarParams {
    double L = 0.0;        // common input loss
    double W = 0.0;        // t's full tail at its reserve
    double kappa_par = 0.0;
    double K = 0.0;        // kappa_t * kappa_par
    double Delta = 0.0;    // total free investment from p0 < 1
    double p0_eq = 1.0;
};

inline StarParams star_params(const Star& s) {
    if (s.inputs.size() < 2) fail(ErrorCode::InvalidArgument, "a star needs at least two inputs");
    StarParams p;
    p.L = s.inputs.front().attr.loss;
    for (const auto& in : s.inputs)
        if (std::abs(in.attr.loss - p.L) > 1e-12 * std::max(1.0, std::abs(p.L)))
            fail(ErrorCode::UnequalInputLosses, "input '" + in.attr.id + "' loss differs from '" +
                                                    s.inputs.front().attr.id + "'");
    p.W = effective_p0(s.t) * (s.t.attr.loss + s.downstream);
    for (const auto& in : s.inputs) {
        p.kappa_par += 1.0 / in.attr.kappa;
        p.Delta += -std::log(in.attr.p0) / in.attr.kappa;
    }
    p.K = s.t.attr.kappa * p.kappa_par;
    p.p0_eq = std::exp(-p.Delta / p.kappa_par);
    return p;
}

// x_t* = 0 iff the star loss has nonnegative derivative in x_t at zero.
inline bool input_zero_test(const Star& s) {
    auto p = star_params(s);
    return p.K <= 1.0 || p.L >= (p.K - 1.0) * p.W;
}

// Two published variants of the predicate, one dropping the downstream term
// and one the fed node's loss. Neither is used by the reducer; they are kept
// so a test can show where each disagrees with the exact optimum.
inline bool input_zero_test_statement(double L, double L_t, double L_g, double kappa_t, double kappa_par) {
    const double K = kappa_t * kappa_par;
    return K <= 1.0 || L >= (1.0 - K) * (L_t + L_g);
}
inline bool input_zero_test_proof(double L, double L_t, double kappa_t, double kappa_par) {
    const double K = kappa_t * kappa_par;
    return K <= 1.0 || L <= (K - 1.0) * L_t;
}

inline BlockResult input_reduce(const Star& s, const IdMaker& make_id = {}) {
    auto p = star_params(s);
    const double kt = s.t.attr.kappa;
    const bool zero = p.K <= 1.0 || p.L >= (p.K - 1.0) * p.W;
    if (!zero && std::abs(p.K - 1.0) < 1e-15) fail(ErrorCode::DegenerateDenominator, "kappa_t * kappa_par = 1");
    double worst_shift = 0.0;
    for (const auto& in : s.inputs) worst_shift = std::max(worst_shift, -std::log(in.attr.p0));
    double kpar_cut = 0.0;  // inputs still funded at the reserve
    for (const auto& in : s.inputs)
        if (-std::log(in.attr.p0) < worst_shift * (1.0 - 1e-12)) kpar_cut += 1.0 / in.attr.kappa;

    // With t at its reserve and no more, check the kink; failing that, t's
    // structure may stay at zero altogether.
    bool t_idle = false, exact = true;
    double W = p.W, r_t = s.t.reserve;
    double zeta = kpar_cut > 0.0 ? 1.0 / kpar_cut : std::numeric_limits<double>::infinity();
    if (zero && s.t.reserve > 0.0) {
        const double zt = s.t.zeta * p.W / (p.L + p.W);
        if (zt >= (1.0 / p.kappa_par) * (1.0 - kKinkTolerance)) {
            zeta = std::min(zeta, zt);
        } else {
            const double W0 = value_at_zero(s.t, s.downstream);
            if (p.kappa_par * slope_at_zero(s.t, s.downstream) <= p.L + W0) {
                t_idle = true;
                W = W0;
                r_t = 0.0;
            } else {
                exact = false;
            }
        }
    }
    double z_t = 0.0, L_eq = p.L + W;
    if (!zero) {
        const double ratio = p.L / ((p.K - 1.0) * W);
        z_t = -std::log(ratio) / kt;
        L_eq = p.L * p.K / (p.K - 1.0) * std::pow(ratio, -1.0 / p.K);
        zeta = std::min(zeta, 1.0 / p.kappa_par);
    }
    const double y_t = r_t + z_t;
    const double V = p.p0_eq * L_eq * std::exp(r_t / p.kappa_par);
    const double reserve = y_t + p.kappa_par * worst_shift - p.Delta;

    std::vector<std::string> ids;
    for (const auto& in : s.inputs) ids.push_back(in.attr.id);
    ids.push_back(s.t.attr.id);
    std::string id = join_ids(ids);
    if (make_id) id = make_id(id);

    ReductionStep st;
    st.kind = zero ? StepKind::InputZeroTest : StepKind::InputReduce;
    st.consumed = ids;
    st.produced = id;
    st.carrier = id;
    st.fixed_total = y_t;
    for (const auto& in : s.inputs) {
        const double kk = in.attr.kappa * p.kappa_par;
        st.shares.push_back({in.attr.id, 1.0 / kk, p.Delta / kk + std::log(in.attr.p0) / in.attr.kappa});
    }
    if (!t_idle) st.shares.push_back({s.t.attr.id, 0.0, y_t});
    st.closure = {{"K", p.K}, {"kappa_par", p.kappa_par}, {"W", W}, {"z_t", z_t}, {"L_eq", L_eq},
                  {"p0_eq", p.p0_eq}, {"reserve", reserve}, {"t_idle", t_idle ? 1.0 : 0.0}};

    BlockResult out;
    out.exact = exact;
    out.block.attr = represent(id, V, std::min(1.0, p.p0_eq * s.t.attr.p0), s.downstream, 1.0 / p.kappa_par, true);
    out.block.reserve = reserve;
    out.block.zeta = zeta;
    // Zero-investment behaviour: the top input carries the loss; the first
    // unit goes to it alone if it is unique, else to t.
    const double V0t = t_idle ? W : value_at_zero(s.t, s.downstream);
    const double S0t = t_idle ? 0.0 : slope_at_zero(s.t, s.downstream);
    double top = 0.0;
    int at_top = 0;
    double top_kappa = 0.0;
    for (const auto& in : s.inputs) {
        if (in.attr.p0 > top) {
            top = in.attr.p0;
            at_top = 1;
            top_kappa = in.attr.kappa;
        } else if (in.attr.p0 == top) {
            ++at_top;
        }
    }
    out.block.zero_value = top * (p.L + V0t);
    out.block.zero_slope = std::max(at_top == 1 ? top_kappa * out.block.zero_value : 0.0, top * S0t);
    out.step = std::move(st);
    return out;
}

// ---------------------------------------------------------------------------
// Working graph. Every edit goes through apply(), so replaying a trace on the
// original graph reproduces the reduced graph exactly.

class WorkGraph {
public:
    explicit WorkGraph(const RawGraph& g) : target_(g.target) {
        for (const auto& n : g.nodes) add({n, 0.0});
        for (const auto& [a, b] : g.edges) link(a, b);
    }

    void apply(const GraphDelta& d) {
        for (const auto& id : d.removed) kill(id);
        for (const auto& [a, b] : d.edges_removed) unlink(a, b);
        for (const auto& ns : d.upserted) {
            auto it = index_.find(ns.attr.id);
            if (it != index_.end() && nodes_[it->second].alive)
                nodes_[it->second].state = ns;
            else
                add(ns);
        }
        for (const auto& [a, b] : d.edges_added) link(a, b);
    }

    bool alive(const std::string& id) const {
        auto it = index_.find(id);
        return it != index_.end() && nodes_[it->second].alive;
    }
    const NodeState& state(const std::string& id) const { return nodes_.at(index_.at(id)).state; }
    const std::set<std::string>& succ(const std::string& id) const { return nodes_.at(index_.at(id)).succ; }
    const std::set<std::string>& pred(const std::string& id) const { return nodes_.at(index_.at(id)).pred; }
    const std::string& target() const { return target_; }

    // Alive ids in insertion order.
    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& n : nodes_)
            if (n.alive) out.push_back(n.state.attr.id);
        return out;
    }

    // Kahn order, ties broken by insertion order.
    std::vector<std::string> topo() const {
        std::map<std::string, std::size_t> indeg;
        for (const auto& id : ids()) indeg[id] = pred(id).size();
        std::vector<std::string> order;
        std::vector<char> done(nodes_.size(), 0);
        bool progress = true;
        while (progress) {
            progress = false;
            for (std::size_t i = 0; i < nodes_.size(); ++i) {
                if (!nodes_[i].alive || done[i]) continue;
                const auto& id = nodes_[i].state.attr.id;
                if (indeg[id] != 0) continue;
                done[i] = 1;
                order.push_back(id);
                for (const auto& w : nodes_[i].succ) --indeg[w];
                progress = true;
            }
        }
        return order;
    }

    // Settled nodes (no investable node at or after them) and their constant
    // loss-to-go.
    std::map<std::string, double> settled() const {
        std::map<std::string, double> D;
        auto order = topo();
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const auto& a = state(*it).attr;
            if (a.investable) continue;
            double down = 0.0;
            bool ok = true;
            for (const auto& w : succ(*it)) {
                auto f = D.find(w);
                if (f == D.end()) {
                    ok = false;
                    break;
                }
                down = std::max(down, f->second);
            }
            if (ok) D[*it] = a.p0 * (a.loss + down);
        }
        return D;
    }

    bool single_path() const {
        std::size_t sources = 0;
        for (const auto& id : ids()) {
            if (succ(id).size() > 1 || pred(id).size() > 1) return false;
            if (pred(id).empty()) ++sources;
        }
        return sources == 1;
    }

    // Fresh id, treating `freed` as about to be removed.
    std::string fresh(std::string id, const std::set<std::string>& freed = {}) const {
        while (index_.count(id) && !freed.count(id)) id += "'";
        return id;
    }

    RawGraph raw() const {
        RawGraph r;
        for (const auto& n : nodes_)
            if (n.alive) {
                r.nodes.push_back(n.state.attr);
                for (const auto& w : n.succ) r.edges.emplace_back(n.state.attr.id, w);
                if (n.pred.empty()) r.sources.push_back(n.state.attr.id);
            }
        r.target = target_;
        return r;
    }

    std::map<std::string, double> reserves() const {
        std::map<std::string, double> out;
        for (const auto& n : nodes_)
            if (n.alive && n.state.reserve != 0.0) out[n.state.attr.id] = n.state.reserve;
        return out;
    }

private:
    struct Slot {
        NodeState state;
        bool alive = true;
        std::set<std::string> succ, pred;
    };

    void add(const NodeState& ns) {
        auto it = index_.find(ns.attr.id);
        if (it != index_.end()) {
            // reuse of an id freed earlier in the same step
            Slot& s = nodes_[it->second];
            s = Slot{ns, true, {}, {}};
            return;
        }
        index_[ns.attr.id] = nodes_.size();
        nodes_.push_back({ns, true, {}, {}});
    }
    void link(const std::string& a, const std::string& b) {
        nodes_.at(index_.at(a)).succ.insert(b);
        nodes_.at(index_.at(b)).pred.insert(a);
    }
    void unlink(const std::string& a, const std::string& b) {
        nodes_.at(index_.at(a)).succ.erase(b);
        nodes_.at(index_.at(b)).pred.erase(a);
    }
    void kill(const std::string& id) {
        Slot& s = nodes_.at(index_.at(id));
        for (const auto& w : s.succ) nodes_.at(index_.at(w)).pred.erase(id);
        for (const auto& u : s.pred) nodes_.at(index_.at(u)).succ.erase(id);
        s.succ.clear();
        s.pred.clear();
        s.alive = false;
    }

    std::vector<Slot> nodes_;
    std::map<std::string, std::size_t> index_;
    std::string target_;
};

// ---------------------------------------------------------------------------

struct ReduceOptions {
    // Also collapse the final remaining path and keep looping after input
    // stars. Used to read off the sufficient budget.
    bool full = false;
};

namespace detail {

// Identifies a step across reruns of the reducer on the same graph.
inline std::string step_key(const ReductionStep& st) {
    return std::string(to_string(st.kind)) + ":" + join_ids(st.consumed);
}

class Reducer {
public:
    Reducer(const AttackGraph& g, ReduceOptions opt, std::set<std::string> banned = {})
        : original_(g.raw()), w_(original_), opt_(opt), banned_(std::move(banned)) {}

    // Keys of the steps behind reserves still carried by a graph that has
    // more than one investable node left. Nothing guarantees the optimum
    // ever covers them.
    std::set<std::string> stranded() const {
        std::set<std::string> out;
        std::size_t investable_left = 0;
        for (const auto& id : w_.ids()) investable_left += investable(id);
        if (investable_left < 2) return out;
        for (const auto& id : w_.ids())
            if (w_.state(id).reserve > 0.0)
                if (auto it = origin_.find(id); it != origin_.end()) out.insert(it->second.begin(), it->second.end());
        return out;
    }

    ReductionResult run() {
        while (true) {
            bool changed = inert_merges();
            changed = one_chain() || changed;
            changed = one_fan() || changed;
            if (changed) continue;
            if (stars()) {
                if (opt_.full) continue;
            }
            break;
        }
        ReductionResult out{validate(w_.raw(), reduced_graph_options()), {}};
        out.trace.original = original_;
        out.trace.steps = std::move(steps_);
        out.trace.reduced = out.graph.raw();
        out.trace.reserves = w_.reserves();
        return out;
    }

private:
    bool investable(const std::string& id) const { return w_.state(id).attr.investable; }
    Block block(const std::string& id) const {
        Block b{w_.state(id).attr, w_.state(id).reserve};
        if (auto it = kinks_.find(id); it != kinks_.end()) {
            b.zeta = it->second.zeta;
            b.zero_value = it->second.zero_value;
            b.zero_slope = it->second.zero_slope;
        }
        return b;
    }

    void record(ReductionStep st, const std::vector<Block>& made = {}) {
        // A merge passes on the reserve it absorbed; other steps create one.
        std::set<std::string> from;
        if (st.kind == StepKind::SeriesZeroMerge) {
            for (const auto& c : st.consumed)
                if (auto it = origin_.find(c); it != origin_.end()) from.insert(it->second.begin(), it->second.end());
        } else {
            from.insert(step_key(st));
        }
        w_.apply(st.delta);
        for (const auto& id : st.delta.removed) {
            kinks_.erase(id);
            origin_.erase(id);
        }
        for (const auto& b : made)
            if (b.reserve > 0.0) {
                kinks_[b.attr.id] = {b.zeta, b.zero_value, b.zero_slope};
                origin_[b.attr.id] = from;
            }
        steps_.push_back(std::move(st));
    }

    bool banned(const ReductionStep& st) const { return banned_.count(step_key(st)) > 0; }

    // Records a step, then removes settled nodes the step cut off from
    // every predecessor. The removals are appended to the step's delta.
    void record_with_cleanup(ReductionStep st, const std::vector<Block>& made = {}) {
        std::set<std::string> had_pred;
        for (const auto& id : w_.ids())
            if (!w_.pred(id).empty()) had_pred.insert(id);
        record(std::move(st), made);
        auto& delta = steps_.back().delta;
        bool more = true;
        while (more) {
            more = false;
            auto D = w_.settled();
            for (const auto& id : w_.ids()) {
                if (id == w_.target() || !D.count(id) || !had_pred.count(id) || !w_.pred(id).empty()) continue;
                w_.apply({{id}, {}, {}, {}});
                delta.removed.push_back(id);
                more = true;
                break;
            }
        }
    }

    // A non-investable, unsettled node whose only predecessor u feeds only it
    // is folded into u: it can never be invested in.
    bool inert_merges() {
        bool any = false;
        bool again = true;
        while (again) {
            again = false;
            auto D = w_.settled();
            for (const auto& n : w_.topo()) {
                if (investable(n) || D.count(n) || w_.pred(n).size() != 1) continue;
                const std::string u = *w_.pred(n).begin();
                if (w_.succ(u).size() != 1) continue;
                const NodeAttr& an = w_.state(n).attr;
                const NodeState& su = w_.state(u);
                if (su.reserve != 0.0) continue;
                const std::string id = w_.fresh(join_ids({u, n}), {u, n});
                ReductionStep st;
                st.kind = StepKind::InertMerge;
                st.consumed = {u, n};
                st.produced = id;
                st.carrier = id;
                if (su.attr.investable) st.shares = {{u, 1.0, 0.0}};
                NodeState m{{id, su.attr.loss / an.p0 + an.loss, su.attr.p0 * an.p0, su.attr.kappa, su.attr.investable},
                            0.0};
                st.delta.removed = {u, n};
                st.delta.upserted = {m};
                for (const auto& p : w_.pred(u)) st.delta.edges_added.emplace_back(p, id);
                for (const auto& s : w_.succ(n)) st.delta.edges_added.emplace_back(id, s);
                record(std::move(st));
                any = again = true;
                break;
            }
        }
        return any;
    }

    std::vector<std::vector<std::string>> chains() const {
        std::vector<std::vector<std::string>> out;
        std::set<std::string> used;
        for (const auto& v : w_.topo()) {
            if (!investable(v) || used.count(v)) continue;
            const auto& pv = w_.pred(v);
            if (pv.size() == 1) {
                const auto& u = *pv.begin();
                if (investable(u) && w_.succ(u).size() == 1) continue;  // not a head
            }
            std::vector<std::string> c{v};
            while (true) {
                const auto& sc = w_.succ(c.back());
                if (sc.size() != 1) break;
                const auto& nx = *sc.begin();
                if (!investable(nx) || w_.pred(nx).size() != 1) break;
                c.push_back(nx);
            }
            for (const auto& id : c) used.insert(id);
            out.push_back(std::move(c));
        }
        return out;
    }

    bool one_chain() {
        auto D = w_.settled();
        for (const auto& ids : chains()) {
            Chain ch;
            for (const auto& id : ids) ch.blocks.push_back(block(id));
            const auto& sl = w_.succ(ids.back());
            if (sl.size() == 1 && D.count(*sl.begin())) ch.downstream = D.at(*sl.begin());

            // Mid-chain reserves never occur: only nodes in front of a
            // settled node carry one. One merge per call keeps ids simple.
            auto merged = series_merge_zeros(ch);
            if (!merged.steps.empty()) {
                auto& st = merged.steps.front();
                Block made = merged.produced.front();
                const auto a = st.consumed[0];
                const auto b = st.consumed[1];
                const std::string id = w_.fresh(*st.produced, {a, b});
                rename(st, id);
                made.attr.id = id;
                st.delta.removed = {a, b};
                st.delta.upserted = {{made.attr, made.reserve}};
                for (const auto& p : w_.pred(a)) st.delta.edges_added.emplace_back(p, id);
                for (const auto& s : w_.succ(b)) st.delta.edges_added.emplace_back(id, s);
                record(std::move(st), {made});
                return true;
            }
            if (merged.blocked) continue;
            if (!ch.downstream || ch.blocks.size() < 2) continue;
            if (!opt_.full && w_.single_path()) continue;
            if (!(detail::chain_terms(ch).front() > 0.0)) continue;
            auto red = series_reduce(ch);
            if (banned(red.step)) continue;
            const std::string id = w_.fresh(*red.step.produced, {ids.begin(), ids.end()});
            rename(red.step, id);
            red.block.attr.id = id;
            red.step.delta.removed = ids;
            red.step.delta.upserted = {{red.block.attr, red.block.reserve}};
            for (const auto& p : w_.pred(ids.front())) red.step.delta.edges_added.emplace_back(p, id);
            red.step.delta.edges_added.emplace_back(id, *sl.begin());
            record(std::move(red.step), {red.block});
            return true;
        }
        return false;
    }

    static void rename(ReductionStep& st, const std::string& id) {
        const std::string old = *st.produced;
        if (old == id) return;
        st.produced = id;
        if (st.carrier == old) st.carrier = id;
    }

    bool one_fan() {
        auto D = w_.settled();
        for (const auto& i : w_.topo()) {
            if (!investable(i) || w_.succ(i).size() < 2 || w_.state(i).reserve != 0.0) continue;
            Fan fan;
            fan.root = block(i);
            std::vector<std::string> branch_ids, fixed_ids;
            std::set<std::string> exits;
            bool ok = true;
            for (const auto& j : w_.succ(i)) {
                if (D.count(j)) {
                    fan.fixed.push_back(D.at(j));
                    fixed_ids.push_back(j);
                    exits.insert(j);
                    continue;
                }
                const auto& sj = w_.succ(j);
                if (!investable(j) || w_.pred(j).size() != 1 || sj.size() != 1 || !D.count(*sj.begin())) {
                    ok = false;
                    break;
                }
                fan.branches.push_back(block(j));
                fan.downstream.push_back(D.at(*sj.begin()));
                branch_ids.push_back(j);
                exits.insert(*sj.begin());
            }
            if (!ok || fan.branches.empty()) continue;
            // A reserved branch whose first unit cuts less than the root's
            // does is never funded: settle it at its zero-investment value.
            bool settled_any = false;
            for (std::size_t j = 0; j < fan.branches.size(); ++j) {
                const auto& br = fan.branches[j];
                if (br.reserve <= 0.0) continue;
                const double v0 = value_at_zero(br, fan.downstream[j]);
                if (slope_at_zero(br, fan.downstream[j]) > fan.root.attr.kappa * (fan.root.attr.loss + v0)) continue;
                ReductionStep st;
                st.kind = StepKind::ParallelZeroPrune;
                st.consumed = {br.attr.id};
                st.produced = br.attr.id;
                st.closure = {{"branch_value", v0}, {"invest", 0.0}};
                const std::string exit = *w_.succ(br.attr.id).begin();
                st.delta.upserted = {{represent(br.attr.id, v0, br.attr.p0, D.at(exit), br.attr.kappa, false), 0.0}};
                record(std::move(st));
                kinks_.erase(br.attr.id);
                settled_any = true;
            }
            if (settled_any) return true;
            auto plan = plan_fan(fan);
            if (plan.inexact || (plan.pruned.empty() && !plan.reduce)) continue;
            std::optional<ParallelResult> red;
            if (plan.reduce) red = parallel_reduce(fan, plan, 0.0);
            const bool skip = red && banned(red->step);

            if (!plan.reduce || skip) {
                // The fan stays, so a pruned branch still bounds the level
                // from below: keep it as a constant instead of dropping it.
                bool settled_pruned = false;
                std::size_t k = 0;
                for (auto& st : parallel_zero_prune(fan, plan)) {
                    const std::size_t j = plan.pruned[k++];
                    if (!st.shares.empty()) continue;
                    const auto& br = fan.branches[j];
                    const double v = br.reserve > 0.0 ? value_at_zero(br, fan.downstream[j]) : plan.M[j];
                    const std::string exit = *w_.succ(br.attr.id).begin();
                    st.produced = br.attr.id;
                    st.delta.upserted = {{represent(br.attr.id, v, br.attr.p0, D.at(exit), br.attr.kappa, false), 0.0}};
                    record(std::move(st));
                    kinks_.erase(br.attr.id);
                    settled_pruned = true;
                }
                if (settled_pruned) return true;
                continue;
            }
            for (auto& st : parallel_zero_prune(fan, plan)) {
                st.delta.removed = {st.consumed[0]};
                record_with_cleanup(std::move(st));
            }

            // The collapsed node exits into the common settled successor when
            // there is one, otherwise straight into the target. Direct edges
            // from the root to settled nodes are dominated by its level.
            const std::string exit = exits.size() == 1 ? *exits.begin() : w_.target();
            std::vector<std::string> surv;
            for (std::size_t j : plan.survivors) surv.push_back(branch_ids[j]);
            const std::string nid = w_.fresh(join_ids(surv), {surv.begin(), surv.end()});
            red = parallel_reduce(fan, plan, w_.settled().at(exit));
            rename(red->step, nid);
            red->collapsed.id = nid;
            auto& delta = red->step.delta;
            delta.removed = surv;
            for (const auto& f : fixed_ids) delta.edges_removed.emplace_back(i, f);
            delta.upserted = {{red->root.attr, red->root.reserve}, {red->collapsed, 0.0}};
            delta.edges_added = {{i, nid}, {nid, exit}};
            record_with_cleanup(std::move(red->step), {red->root});
            return true;
        }
        return false;
    }

    bool stars() {
        bool any = false;
        bool again = true;
        while (again) {
            again = false;
            auto D = w_.settled();
            for (const auto& t : w_.topo()) {
                if (!investable(t) || w_.pred(t).size() < 2 || w_.succ(t).size() != 1) continue;
                const std::string s = *w_.succ(t).begin();
                if (!D.count(s)) continue;
                Star star;
                star.t = block(t);
                star.downstream = D.at(s);
                bool ok = true;
                std::vector<std::string> ins;
                for (const auto& j : w_.pred(t)) {
                    if (!investable(j) || !w_.pred(j).empty() || w_.succ(j).size() != 1 || w_.state(j).reserve != 0.0) {
                        ok = false;
                        break;
                    }
                    star.inputs.push_back(block(j));
                    ins.push_back(j);
                }
                if (!ok) continue;
                const double L0 = star.inputs.front().attr.loss;
                bool equal = L0 > 0.0;
                for (const auto& in : star.inputs)
                    if (std::abs(in.attr.loss - L0) > 1e-12 * std::max(1.0, std::abs(L0))) equal = false;
                if (!equal) continue;
                auto red = input_reduce(star);
                if (!red.exact || banned(red.step)) continue;
                std::set<std::string> freed(ins.begin(), ins.end());
                freed.insert(t);
                const std::string id = w_.fresh(*red.step.produced, freed);
                rename(red.step, id);
                red.block.attr.id = id;
                red.step.delta.removed = ins;
                red.step.delta.removed.push_back(t);
                red.step.delta.upserted = {{red.block.attr, red.block.reserve}};
                red.step.delta.edges_added = {{id, s}};
                record(std::move(red.step), {red.block});
                any = again = true;
                break;
            }
        }
        return any;
    }

    RawGraph original_;
    WorkGraph w_;
    ReduceOptions opt_;
    std::vector<ReductionStep> steps_;
    struct Kink {
        double zeta, zero_value, zero_slope;
    };
    std::map<std::string, Kink> kinks_;
    std::set<std::string> banned_;
    std::map<std::string, std::set<std::string>> origin_;  // reserved id -> steps behind its reserve
};

}  // namespace detail

// Series, parallel and input-star reductions to a fixpoint. The result is
// equivalent to the input at any sufficient budget.
inline ReductionResult reduce(const AttackGraph& g, const ReduceOptions& opt = {}) {
    // Reserves the fully reduced graph cannot place are undone by rerunning
    // without the steps that created them, until none are left.
    std::set<std::string> banned;
    while (true) {
        detail::Reducer r(g, {.full = true}, banned);
        r.run();
        auto more = r.stranded();
        const std::size_t before = banned.size();
        banned.insert(more.begin(), more.end());
        if (banned.size() == before) break;
    }
    return detail::Reducer(g, opt, std::move(banned)).run();
}

// Applies the recorded graph edits to the original graph.
inline AttackGraph replay(const RawGraph& original, const std::vector<ReductionStep>& steps) {
    WorkGraph w(original);
    for (const auto& st : steps) w.apply(st.delta);
    return validate(w.raw(), reduced_graph_options());
}

inline constexpr double kBackmapTolerance = 1e-7;

// Expands investments on the reduced graph into investments on the original
// graph by running the trace backwards.
inline Investment backmap(const ReductionTrace& trace, const AttackGraph& original, const std::map<std::string, double>& x_reduced,
                          double tolerance = kBackmapTolerance) {
    std::map<std::string, double> x = x_reduced;
    for (auto it = trace.steps.rbegin(); it != trace.steps.rend(); ++it) {
        const auto& st = *it;
        double y = 0.0;
        bool live = true;
        if (!st.carrier.empty()) {
            auto f = x.find(st.carrier);
            live = f != x.end();
            if (live) y = f->second;
        }
        if (st.produced) x.erase(*st.produced);
        // A carrier nobody assigned belongs to a branch pruned at zero:
        // everything behind it stays at zero.
        if (!live) continue;
        for (const auto& sh : st.shares) {
            double v = sh.a * (y - st.fixed_total) + sh.b;
            if (v < -tolerance)
                fail(ErrorCode::InfeasibleBackmap, "step " + std::string(to_string(st.kind)) + " gives '" + sh.id +
                                                       "' investment " + std::to_string(v) +
                                                       "; the budget is not sufficient");
            x[sh.id] = std::max(0.0, v);
        }
    }
    Investment out = original.zero_investment();
    for (const auto& [id, v] : x) {
        auto i = original.find(id);
        if (i && original.node(*i).investable) out[*i] = v;
    }
    return out;
}

inline Investment backmap(const ReductionResult& r, const AttackGraph& original, const Investment& x_reduced,
                          double tolerance = kBackmapTolerance) {
    std::map<std::string, double> m;
    for (NodeIndex i = 0; i < r.graph.size(); ++i) m[r.graph.node(i).id] = x_reduced[i];
    return backmap(r.trace, original, m, tolerance);
}

struct SufficientBudget {
    double budget = 0.0;
    bool heuristic = false;  // graph not fully decomposable; doubling search used
    std::string note;
};

inline constexpr double kZeroThreshold = 1e-6;

inline std::vector<char> zero_pattern(const AttackGraph& g, const Investment& x) {
    std::vector<char> z(g.size(), 0);
    for (NodeIndex i = 0; i < g.size(); ++i) z[i] = x[i] < kZeroThreshold;
    return z;
}

inline SufficientBudget sufficient_budget(const AttackGraph& g, const SolveOptions& solve_opt = {}) {
    ReduceOptions ro;
    ro.full = true;
    auto r = reduce(g, ro);
    auto inv = r.graph.investable_nodes();
    if (inv.empty()) return {0.0, false, "no investable nodes"};
    if (inv.size() == 1) {
        auto it = r.trace.reserves.find(r.graph.node(inv.front()).id);
        return {it == r.trace.reserves.end() ? 0.0 : it->second, false, "closed form from the reduction trace"};
    }
    // Not decomposable: double the budget until the reduced solution covers
    // every reserve and the zero pattern of non-entry nodes agrees at B and 2B.
    std::vector<char> entry(g.size(), 0);
    for (NodeIndex s : g.sources()) entry[s] = 1;
    auto pattern = [&](double B) {
        auto z = zero_pattern(g, solve(g, B, solve_opt).x);
        for (NodeIndex i = 0; i < g.size(); ++i)
            if (entry[i]) z[i] = 0;
        return z;
    };
    auto covers = [&](double B) {
        auto y = solve(r.graph, B, solve_opt).x;
        for (NodeIndex i = 0; i < r.graph.size(); ++i) {
            auto it = r.trace.reserves.find(r.graph.node(i).id);
            if (it != r.trace.reserves.end() && y[i] < it->second * (1.0 - 1e-9) - 1e-12) return false;
        }
        return true;
    };
    double B = 0.125;
    auto prev = pattern(B);
    for (int k = 0; k < 40; ++k) {
        auto next = pattern(2.0 * B);
        if (next == prev && covers(B)) return {B, true, "doubling search; graph is not fully reducible"};
        prev = std::move(next);
        B *= 2.0;
    }
    return {B, true, "doubling search did not stabilise; returning the last budget tried"};
}

// With `allow_heuristic` false, a graph the reduction cannot fully decompose
// raises NotDecomposable instead of trusting the doubling search.
inline bool is_sufficient(const AttackGraph& g, double budget, bool allow_heuristic = false,
                          const SolveOptions& solve_opt = {}) {
    auto s = sufficient_budget(g, solve_opt);
    if (s.heuristic && !allow_heuristic)
        fail(ErrorCode::NotDecomposable, "graph is not reducible to a single node; sufficient budget " +
                                             std::to_string(s.budget) + " is heuristic");
    return budget >= s.budget;
}

// Insufficient budget on a single chain: the nodes nearest the target are
// funded first, each up to its sufficient-budget value.
inline Investment series_insufficient_allocate(const AttackGraph& chain, double budget) {
    bool path = chain.sources().size() == 1;
    for (NodeIndex v = 0; v < chain.size(); ++v) path = path && chain.successors(v).size() <= 1;
    if (!path) fail(ErrorCode::InvalidArgument, "series_insufficient_allocate needs a single path");
    ReduceOptions ro;
    ro.full = true;
    auto r = reduce(chain, ro);
    auto inv = r.graph.investable_nodes();
    if (inv.empty()) return chain.zero_investment();
    const auto& head = r.graph.node(inv.front()).id;
    auto rit = r.trace.reserves.find(head);
    const double T = rit == r.trace.reserves.end() ? 0.0 : rit->second;
    if (budget >= T) return backmap(r.trace, chain, {{head, budget}});
    Investment full = backmap(r.trace, chain, {{head, T}});
    Investment out = chain.zero_investment();
    double left = budget;
    const auto& order = chain.topological_order();
    for (auto it = order.rbegin(); it != order.rend() && left > 0.0; ++it) {
        const double give = std::min(full[*it], left);
        out[*it] = give;
        left -= give;
    }
    return out;
}

}  // namespace attackgame
