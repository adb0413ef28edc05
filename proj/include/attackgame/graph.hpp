#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"

namespace attackgame {

struct NodeAttr {
    std::string id;
    double loss = 0.0;
    double p0 = 1.0;
    double kappa = 1.0;
    bool investable = true;

    friend bool operator==(const NodeAttr&, const NodeAttr&) = default;
};

// Unvalidated description, as read from a document or assembled by hand.
struct RawGraph {
    std::vector<NodeAttr> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
    std::vector<std::string> sources;
    std::string target;
};

struct ValidateOptions {
    // Equivalent nodes produced by reduction may carry kappa below one
    // (1/kappa_par for input stars), so reduced graphs relax this bound.
    double min_kappa = 1.0;
    bool kappa_strictly_positive_only = false;
};

using NodeIndex = std::size_t;
using Path = std::vector<NodeIndex>;
// Per-node investment aligned with AttackGraph::nodes().
using Investment = std::vector<double>;

inline constexpr std::size_t kDefaultPathCap = 1'000'000;
inline constexpr double kPathTieTolerance = 1e-9;

class AttackGraph {
public:
    const std::vector<NodeAttr>& nodes() const { return nodes_; }
    const NodeAttr& node(NodeIndex i) const { return nodes_.at(i); }
    std::size_t size() const { return nodes_.size(); }

    const std::vector<NodeIndex>& successors(NodeIndex i) const { return succ_.at(i); }
    const std::vector<NodeIndex>& predecessors(NodeIndex i) const { return pred_.at(i); }
    const std::vector<NodeIndex>& sources() const { return sources_; }
    NodeIndex target() const { return target_; }
    const std::vector<NodeIndex>& topological_order() const { return topo_; }

    std::optional<NodeIndex> find(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    NodeIndex index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) fail(ErrorCode::UnknownNode, "no node '" + id + "'");
        return it->second;
    }
    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    std::vector<std::pair<NodeIndex, NodeIndex>> edges() const {
        std::vector<std::pair<NodeIndex, NodeIndex>> out;
        for (NodeIndex u = 0; u < nodes_.size(); ++u)
            for (NodeIndex v : succ_[u]) out.emplace_back(u, v);
        return out;
    }

    std::vector<NodeIndex> investable_nodes() const {
        std::vector<NodeIndex> out;
        for (NodeIndex i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].investable) out.push_back(i);
        return out;
    }

    RawGraph raw() const {
        RawGraph r;
        r.nodes = nodes_;
        for (auto [u, v] : edges()) r.edges.emplace_back(nodes_[u].id, nodes_[v].id);
        for (NodeIndex s : sources_) r.sources.push_back(nodes_[s].id);
        r.target = nodes_[target_].id;
        return r;
    }

    std::vector<std::string> ids(const Path& p) const {
        std::vector<std::string> out;
        out.reserve(p.size());
        for (NodeIndex i : p) out.push_back(nodes_[i].id);
        return out;
    }

    Investment zero_investment() const { return Investment(nodes_.size(), 0.0); }

    Investment investment_from(const std::map<std::string, double>& values) const {
        Investment x = zero_investment();
        for (const auto& [id, v] : values) x[index_of(id)] = v;
        return x;
    }

    // Same nodes, edges, sources and target; attribute values compared exactly.
    friend bool operator==(const AttackGraph& a, const AttackGraph& b) {
        return a.nodes_ == b.nodes_ && a.succ_ == b.succ_ && a.sources_ == b.sources_ &&
               a.target_ == b.target_;
    }

private:
    friend AttackGraph validate(const RawGraph&, const ValidateOptions&);

    std::vector<NodeAttr> nodes_;
    std::vector<std::vector<NodeIndex>> succ_, pred_;
    std::vector<NodeIndex> sources_;
    NodeIndex target_ = 0;
    std::vector<NodeIndex> topo_;
    std::unordered_map<std::string, NodeIndex> index_;
};

namespace detail {

inline std::string node_loc(std::size_t i, const char* field = nullptr) {
    std::string s = "/nodes/" + std::to_string(i);
    if (field) s += std::string("/") + field;
    return s;
}

}  // namespace detail

// Every violation found, in document order. Empty means the graph is valid.
inline std::vector<Violation> check(const RawGraph& raw, const ValidateOptions& opt = {}) {
    std::vector<Violation> out;
    const std::size_t n = raw.nodes.size();
    if (n == 0) {
        out.push_back({ErrorCode::EmptyGraph, "graph has no nodes", "/nodes"});
        return out;
    }

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = raw.nodes[i];
        if (!index.emplace(a.id, i).second)
            out.push_back({ErrorCode::DuplicateNode, "duplicate node id '" + a.id + "'", detail::node_loc(i, "id")});
        if (!(a.loss >= 0.0) || !std::isfinite(a.loss))
            out.push_back({ErrorCode::AttributeOutOfRange, "loss of '" + a.id + "' must be a finite value >= 0",
                           detail::node_loc(i, "loss")});
        if (!(a.p0 > 0.0 && a.p0 <= 1.0))
            out.push_back({ErrorCode::AttributeOutOfRange, "p0 of '" + a.id + "' must lie in (0, 1]",
                           detail::node_loc(i, "p0")});
        const bool kappa_ok = opt.kappa_strictly_positive_only ? (a.kappa > 0.0) : (a.kappa >= opt.min_kappa);
        if (!kappa_ok || !std::isfinite(a.kappa))
            out.push_back({ErrorCode::AttributeOutOfRange, "kappa of '" + a.id + "' is out of range",
                           detail::node_loc(i, "kappa")});
    }

    std::vector<std::vector<std::size_t>> succ(n), pred(n);
    for (std::size_t e = 0; e < raw.edges.size(); ++e) {
        const auto& [a, b] = raw.edges[e];
        auto ia = index.find(a), ib = index.find(b);
        if (ia == index.end() || ib == index.end()) {
            out.push_back({ErrorCode::UnknownNode, "edge references unknown node", "/edges/" + std::to_string(e)});
            continue;
        }
        if (std::find(succ[ia->second].begin(), succ[ia->second].end(), ib->second) != succ[ia->second].end())
            continue;  // duplicate edges collapse
        succ[ia->second].push_back(ib->second);
        pred[ib->second].push_back(ia->second);
    }

    auto t = index.find(raw.target);
    if (raw.target.empty() || t == index.end()) {
        out.push_back({ErrorCode::UnknownNode, "target '" + raw.target + "' is not a node", "/target"});
        return out;
    }
    const std::size_t tg = t->second;
    if (raw.nodes[tg].investable)
        out.push_back({ErrorCode::InvestableTarget, "target must not be investable", detail::node_loc(tg, "investable")});
    if (!(raw.nodes[tg].loss > 0.0))
        out.push_back({ErrorCode::AttributeOutOfRange, "target loss must be > 0", detail::node_loc(tg, "loss")});
    if (!succ[tg].empty())
        out.push_back({ErrorCode::MultipleTargets, "target has outgoing edges", "/target"});
    for (std::size_t i = 0; i < n; ++i)
        if (i != tg && succ[i].empty())
            out.push_back({ErrorCode::MultipleTargets,
                           "node '" + raw.nodes[i].id + "' has no successors and is not the target",
                           detail::node_loc(i)});

    if (raw.sources.empty()) out.push_back({ErrorCode::UnreachableTarget, "no sources given", "/sources"});
    std::vector<char> is_source(n, 0);
    for (std::size_t k = 0; k < raw.sources.size(); ++k) {
        auto s = index.find(raw.sources[k]);
        const std::string loc = "/sources/" + std::to_string(k);
        if (s == index.end()) {
            out.push_back({ErrorCode::UnknownNode, "source '" + raw.sources[k] + "' is not a node", loc});
            continue;
        }
        is_source[s->second] = 1;
        if (!pred[s->second].empty())
            out.push_back({ErrorCode::DanglingNode, "source '" + raw.sources[k] + "' has incoming edges", loc});
    }

    // Kahn's algorithm; leftover nodes sit on a cycle.
    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = pred[i].size();
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) queue.push_back(i);
    std::size_t seen = 0;
    while (seen < queue.size()) {
        std::size_t u = queue[seen++];
        for (std::size_t v : succ[u])
            if (--indeg[v] == 0) queue.push_back(v);
    }
    if (queue.size() != n) {
        std::string members;
        for (std::size_t i = 0; i < n; ++i)
            if (indeg[i] != 0) members += (members.empty() ? "" : ", ") + raw.nodes[i].id;
        out.push_back({ErrorCode::CycleDetected, "cycle through {" + members + "}", "/edges"});
        return out;
    }

    std::vector<char> from_source(n, 0), to_target(n, 0);
    for (std::size_t u : queue)
        if (is_source[u] || from_source[u])
            for (std::size_t v : succ[u]) from_source[v] = 1;
    for (std::size_t i = 0; i < n; ++i)
        if (is_source[i]) from_source[i] = 1;
    to_target[tg] = 1;
    for (auto it = queue.rbegin(); it != queue.rend(); ++it)
        for (std::size_t v : succ[*it])
            if (to_target[v]) to_target[*it] = 1;

    if (!from_source[tg]) out.push_back({ErrorCode::UnreachableTarget, "target unreachable from every source", "/target"});
    for (std::size_t i = 0; i < n; ++i)
        if (i != tg && (!from_source[i] || !to_target[i]))
            out.push_back({ErrorCode::DanglingNode, "node '" + raw.nodes[i].id + "' lies on no source-target path",
                           detail::node_loc(i)});
    return out;
}

inline AttackGraph validate(const RawGraph& raw, const ValidateOptions& opt = {}) {
    auto problems = check(raw, opt);
    if (!problems.empty()) {
        std::string msg = "graph failed validation: " + problems.front().message;
        if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
        throw Error(ErrorCode::ValidationFailed, msg, std::move(problems));
    }

    AttackGraph g;
    g.nodes_ = raw.nodes;
    const std::size_t n = raw.nodes.size();
    for (std::size_t i = 0; i < n; ++i) g.index_.emplace(raw.nodes[i].id, i);
    g.succ_.assign(n, {});
    g.pred_.assign(n, {});
    for (const auto& [a, b] : raw.edges) {
        NodeIndex u = g.index_.at(a), v = g.index_.at(b);
        if (std::find(g.succ_[u].begin(), g.succ_[u].end(), v) != g.succ_[u].end()) continue;
        g.succ_[u].push_back(v);
        g.pred_[v].push_back(u);
    }
    auto by_id = [&](NodeIndex a, NodeIndex b) { return g.nodes_[a].id < g.nodes_[b].id; };
    for (auto& s : g.succ_) std::sort(s.begin(), s.end(), by_id);
    for (auto& p : g.pred_) std::sort(p.begin(), p.end(), by_id);
    for (const auto& s : raw.sources) g.sources_.push_back(g.index_.at(s));
    std::sort(g.sources_.begin(), g.sources_.end(), by_id);
    g.sources_.erase(std::unique(g.sources_.begin(), g.sources_.end()), g.sources_.end());
    g.target_ = g.index_.at(raw.target);

    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = g.pred_[i].size();
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) g.topo_.push_back(i);
    for (std::size_t k = 0; k < g.topo_.size(); ++k)
        for (NodeIndex v : g.succ_[g.topo_[k]])
            if (--indeg[v] == 0) g.topo_.push_back(v);
    return g;
}

// Pre(v): v and every node from which v can be reached.
inline std::set<std::string> pre_set(const AttackGraph& g, const std::string& id) {
    std::vector<NodeIndex> stack{g.index_of(id)};
    std::vector<char> seen(g.size(), 0);
    std::set<std::string> out;
    while (!stack.empty()) {
        NodeIndex v = stack.back();
        stack.pop_back();
        if (seen[v]) continue;
        seen[v] = 1;
        out.insert(g.node(v).id);
        for (NodeIndex u : g.predecessors(v)) stack.push_back(u);
    }
    return out;
}

// Post(v): v and every node reachable from v.
inline std::set<std::string> post_set(const AttackGraph& g, const std::string& id) {
    std::vector<NodeIndex> stack{g.index_of(id)};
    std::vector<char> seen(g.size(), 0);
    std::set<std::string> out;
    while (!stack.empty()) {
        NodeIndex v = stack.back();
        stack.pop_back();
        if (seen[v]) continue;
        seen[v] = 1;
        out.insert(g.node(v).id);
        for (NodeIndex w : g.successors(v)) stack.push_back(w);
    }
    return out;
}

// Number of source-target paths, computed without enumerating them.
inline double count_paths(const AttackGraph& g) {
    std::vector<double> count(g.size(), 0.0);
    count[g.target()] = 1.0;
    const auto& topo = g.topological_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        for (NodeIndex w : g.successors(*it)) count[*it] += count[w];
    double total = 0.0;
    for (NodeIndex s : g.sources()) total += count[s];
    return total;
}

// All source-target paths in lexicographic order of their id sequences.
inline std::vector<Path> enumerate_paths(const AttackGraph& g, std::size_t cap = kDefaultPathCap) {
    const double total = count_paths(g);
    if (total > static_cast<double>(cap))
        fail(ErrorCode::PathExplosion,
             std::to_string(static_cast<long long>(total)) + " paths exceed the cap of " + std::to_string(cap) +
                 "; reduce the graph first");
    std::vector<Path> out;
    out.reserve(static_cast<std::size_t>(total));
    Path cur;
    struct Frame {
        NodeIndex v;
        std::size_t next;
    };
    for (NodeIndex s : g.sources()) {
        std::vector<Frame> stack{{s, 0}};
        cur.assign(1, s);
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.v == g.target()) {
                out.push_back(cur);
                stack.pop_back();
                cur.pop_back();
                continue;
            }
            const auto& succ = g.successors(f.v);
            if (f.next == succ.size()) {
                stack.pop_back();
                cur.pop_back();
                continue;
            }
            NodeIndex w = succ[f.next++];
            stack.push_back({w, 0});
            cur.push_back(w);
        }
    }
    return out;
}

inline double attack_probability(const NodeAttr& a, double x) { return a.p0 * std::exp(-a.kappa * x); }

// Sum over path nodes of L_i times the product of p_j(x_j) for j up to and
// including i.
inline double path_loss(const AttackGraph& g, const Path& path, const Investment& x) {
    double total = 0.0, prob = 1.0;
    for (NodeIndex i : path) {
        const auto& a = g.node(i);
        prob *= attack_probability(a, x[i]);
        total += a.loss * prob;
    }
    return total;
}

struct WorstCase {
    double loss = 0.0;
    std::vector<Path> argmax;
};

inline WorstCase worst_case(const AttackGraph& g, const std::vector<Path>& paths, const Investment& x,
                            double tie_tol = kPathTieTolerance) {
    WorstCase wc;
    std::vector<double> losses(paths.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < paths.size(); ++k) {
        losses[k] = path_loss(g, paths[k], x);
        best = std::max(best, losses[k]);
    }
    wc.loss = best;
    for (std::size_t k = 0; k < paths.size(); ++k)
        if (losses[k] >= best - tie_tol) wc.argmax.push_back(paths[k]);
    return wc;
}

inline WorstCase worst_case(const AttackGraph& g, const Investment& x, std::size_t cap = kDefaultPathCap) {
    return worst_case(g, enumerate_paths(g, cap), x);
}

// Worst-case loss by dynamic programming over the DAG:
// LTG(v) = p_v(x_v) (L_v + max over successors of LTG). Equals the path
// maximum without enumerating paths.
inline std::vector<double> loss_to_go(const AttackGraph& g, const Investment& x) {
    std::vector<double> ltg(g.size(), 0.0);
    const auto& topo = g.topological_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        NodeIndex v = *it;
        double down = 0.0;
        for (NodeIndex w : g.successors(v)) down = std::max(down, ltg[w]);
        const auto& a = g.node(v);
        ltg[v] = attack_probability(a, x[v]) * (a.loss + down);
    }
    return ltg;
}

inline double max_loss(const AttackGraph& g, const Investment& x) {
    auto ltg = loss_to_go(g, x);
    double best = 0.0;
    for (NodeIndex s : g.sources()) best = std::max(best, ltg[s]);
    return best;
}

inline std::vector<double> attack_probabilities(const AttackGraph& g, const Investment& x) {
    std::vector<double> p(g.size());
    for (NodeIndex i = 0; i < g.size(); ++i) p[i] = attack_probability(g.node(i), x[i]);
    return p;
}

}  // namespace attackgame
