#pragma once

#include <random>
#include <set>
#include <string>
#include <vector>

#include "attackgame/attackgame.hpp"

namespace testing {

using namespace attackgame;

inline std::string data_path(const std::string& name) { return std::string(ATTACKGAME_DATA_DIR) + "/" + name; }

inline GameInstance load_game(const std::string& name) { return parse_game(read_file(data_path(name))); }

// v1 -> v2 -> vg, every p0 equal to p.
inline AttackGraph base_network(double L1 = 1, double L2 = 1, double Lg = 6, double k1 = 1, double k2 = 2, double p = 1) {
    RawGraph r;
    r.nodes = {{"v1", L1, p, k1, true}, {"v2", L2, p, k2, true}, {"vg", Lg, p, 1, false}};
    r.edges = {{"v1", "v2"}, {"v2", "vg"}};
    r.sources = {"v1"};
    r.target = "vg";
    return validate(r);
}

inline void add_sources(RawGraph& r) {
    std::set<std::string> has_pred;
    for (const auto& e : r.edges) has_pred.insert(e.second);
    for (const auto& n : r.nodes)
        if (!has_pred.count(n.id) && n.id != r.target) r.sources.push_back(n.id);
}

// Random series-parallel attack graph with 4 to 12 nodes including the
// target: nested chains and fans, and in about a third of the cases two
// equal-loss entry nodes feeding the top of the structure. Losses in
// [0.1, 10], kappa in [1, 5], p0 either 1 or uniform in (0, 1].
class SeriesParallelGenerator {
public:
    explicit SeriesParallelGenerator(std::uint64_t seed) : rng_(seed) {}

    AttackGraph make() {
        r_ = {};
        next_ = 0;
        r_.nodes.push_back({"g", U(0.1, 10), 1, 1, false});
        r_.target = "g";
        const int n = I(3, 11);
        const bool star = U(0, 1) < 0.3 && n >= 4;
        const std::string head = build(star ? n - 2 : n, "g");
        if (star) {
            const double L = U(0.1, 10);
            for (int j = 0; j < 2; ++j) {
                std::string id = "s" + std::to_string(j);
                r_.nodes.push_back({id, L, U(0, 1) < 0.5 ? 1.0 : U(0.01, 1), U(1, 5), true});
                r_.edges.push_back({id, head});
            }
        }
        add_sources(r_);
        return validate(r_);
    }

    double U(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    int I(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }

private:
    std::mt19937_64 rng_;
    RawGraph r_;
    int next_ = 0;

    std::string node() {
        std::string id = "n" + std::to_string(next_++);
        const double p0 = U(0, 1) < 0.5 ? 1.0 : U(1e-3, 1.0);
        r_.nodes.push_back({id, U(0.1, 10), p0, U(1, 5), true});
        return id;
    }

    std::string build(int k, const std::string& exit) {
        if (k == 1) {
            auto v = node();
            r_.edges.push_back({v, exit});
            return v;
        }
        if (k >= 3 && U(0, 1) < 0.5) {
            auto v = node();
            int left = k - 1;
            const int branches = I(2, std::min(3, left));
            std::vector<int> size(branches, 1);
            left -= branches;
            while (left-- > 0) ++size[I(0, branches - 1)];
            for (int s : size) r_.edges.push_back({v, build(s, exit)});
            return v;
        }
        auto v = node();
        r_.edges.push_back({v, build(k - 1, exit)});
        return v;
    }
};

// Random DAG: every non-target node reaches the target; losses spread over
// several orders of magnitude.
inline AttackGraph random_dag(std::uint64_t seed, int max_inner = 14) {
    std::mt19937_64 rng(seed);
    auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    const int n = 3 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_inner - 2));
    RawGraph r;
    r.target = "g";
    r.nodes.push_back({"g", std::exp(U(0, std::log(1e6))), U(0, 1) < 0.5 ? 1.0 : U(0.05, 1), 1, false});
    for (int i = 0; i < n; ++i)
        r.nodes.push_back({"n" + std::to_string(i), std::exp(U(std::log(0.1), std::log(1e6))), U(0, 1) < 0.3 ? 1.0 : U(0.01, 1),
                           U(1, 6), true});
    for (int i = 0; i < n; ++i) {
        bool any = false;
        for (int j = i + 1; j < n; ++j)
            if (U(0, 1) < 0.25) {
                r.edges.push_back({"n" + std::to_string(i), "n" + std::to_string(j)});
                any = true;
            }
        if (!any || U(0, 1) < 0.2) r.edges.push_back({"n" + std::to_string(i), "g"});
    }
    add_sources(r);
    return validate(r);
}

struct Fixture {
    std::string name;
    AttackGraph graph;
    double budget = 0.0;
};

// Small games (at most five investable nodes) that the grid oracle can
// search exactly: the base network and each intervention on it, the reduced
// SCADA chain, and random series-parallel graphs of that size.
inline std::vector<Fixture> small_fixtures(int random_count = 24) {
    std::vector<Fixture> out;
    for (double B : {0.25, 1.0, 3.0}) out.push_back({"base B=" + std::to_string(B), base_network(), B});
    out.push_back({"base p=0.6", base_network(2, 1, 6, 1, 3, 0.6), 2.0});
    out.push_back({"base zero v2", base_network(5, 1, 1, 2, 3), 1.0});
    BaseNetworkParams q;
    q.L3 = 0.5;
    q.kappa3 = 4;
    out.push_back({"series post", closed_form_graph(ClosedForm::SeriesPost, q), 2.0});
    out.push_back({"series pre", closed_form_graph(ClosedForm::SeriesPre, q), 2.0});
    out.push_back({"parallel", closed_form_graph(ClosedForm::ParallelScenario1, q), 2.0});
    BaseNetworkParams q2 = q;
    q2.kappa1 = 1, q2.kappa2 = 3, q2.kappa3 = 3, q2.L1 = 0.2, q2.L3 = 1, q2.Lg = 8;
    out.push_back({"parallel both funded", closed_form_graph(ClosedForm::ParallelScenario2, q2), 2.5});
    BaseNetworkParams h = q;
    h.L3 = h.L2;
    h.kappa3 = 10;
    out.push_back({"hybrid", closed_form_graph(ClosedForm::HybridScenario1, h), 1.5});
    BaseNetworkParams in = q;
    in.L3 = in.L1;
    in.kappa3 = 2;
    out.push_back({"input", closed_form_graph(ClosedForm::InputCase2, in), 2.0});
    auto scada = load_game("scada.json");
    out.push_back({"scada reduced", reduce(scada.graph).graph, scada.budget});
    SeriesParallelGenerator gen(77);
    for (int made = 0, tries = 0; made < random_count && tries < 10 * random_count; ++tries) {
        auto g = gen.make();
        if (g.investable_nodes().size() > 5) continue;
        out.push_back({"random sp " + std::to_string(tries), g, 0.5 + 3.0 * static_cast<double>(made % 4) / 3.0});
        ++made;
    }
    return out;
}

// Random base-network parameters for a closed form. Forms that assume equal
// losses on a pair of nodes get them.
inline BaseNetworkParams closed_form_params(ClosedForm f, std::mt19937_64& rng) {
    auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    BaseNetworkParams q;
    q.L1 = U(0.1, 10), q.L2 = U(0.1, 10), q.Lg = U(0.1, 20);
    q.kappa1 = U(1, 5), q.kappa2 = U(1, 5), q.kappa3 = U(1, 10);
    q.p = U(0, 1) < 0.5 ? 1.0 : U(0.2, 1);
    q.B = U(0, 6);
    q.L3 = f == ClosedForm::HybridScenario1                                  ? q.L2
           : (f == ClosedForm::InputCase1 || f == ClosedForm::InputCase2) ? q.L1
                                                                              : U(0, 10);
    return q;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double sum(const Investment& x) {
    double s = 0;
    for (double v : x) s += v;
    return s;
}

}  // namespace testing
