#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "solver.hpp"

namespace attackgame {

struct OracleResult {
    Investment x;
    double loss = 0.0;
    std::vector<Path> critical_paths;
    double resolution = 0.0;
    // Rigorous bound on loss - L*: rounding x* down onto the lattice costs at
    // most a factor exp(kappa_max * n * h) on every path.
    double bound = 0.0;
    std::uint64_t evaluations = 0;
};

inline constexpr std::size_t kOracleMaxInvestable = 6;

// Exact minimiser of the worst-case loss over the lattice
// {x = h*k : k integer >= 0, sum k <= floor(B/h)}.
//
// Loss is nonincreasing in every coordinate, so a minimiser exists on the
// top layer sum k = N. The search is a depth-first branch and bound over
// integer boxes of that layer. A box is bounded below by the larger of the
// loss at its tightened upper corner (monotonicity) and the minimum over the
// box of a supporting hyperplane taken at its centre (convexity). Boxes whose
// bound is within 1e-12 relative of the incumbent are discarded.
inline OracleResult grid_oracle(const AttackGraph& g, double budget, double resolution,
                                std::size_t path_cap = kDefaultPathCap) {
    if (!(resolution > 0.0)) fail(ErrorCode::InvalidArgument, "resolution must be > 0");
    if (!(budget >= 0.0)) fail(ErrorCode::InvalidArgument, "budget must be >= 0");
    const auto vars = g.investable_nodes();
    if (vars.size() > kOracleMaxInvestable)
        fail(ErrorCode::TooManyInvestableNodes, std::to_string(vars.size()) + " investable nodes exceed the oracle limit of " +
                                                    std::to_string(kOracleMaxInvestable));
    const auto paths = enumerate_paths(g, path_cap);  // surfaces PathExplosion up front
    const std::size_t n = vars.size();
    const std::int64_t N = static_cast<std::int64_t>(std::floor(budget / resolution + 1e-9));

    OracleResult out;
    out.resolution = resolution;
    Investment x = g.zero_investment();
    auto f = [&](const std::vector<std::int64_t>& k) {
        for (std::size_t j = 0; j < n; ++j) x[vars[j]] = static_cast<double>(k[j]) * resolution;
        ++out.evaluations;
        return max_loss(g, x);
    };

    // Supporting hyperplane at a real point y (lattice units): value and
    // slope per unit. The active path's gradient is a subgradient of the max.
    std::vector<double> slope(n);
    auto support = [&](const std::vector<double>& y) {
        for (std::size_t j = 0; j < n; ++j) x[vars[j]] = y[j] * resolution;
        ++out.evaluations;
        auto ltg = loss_to_go(g, x);
        NodeIndex v = g.sources().front();
        for (NodeIndex s : g.sources())
            if (ltg[s] > ltg[v]) v = s;
        const double val = ltg[v];
        std::vector<double> d(g.size(), 0.0);
        double prefix = 1.0;  // compromise probability of the path so far
        while (true) {
            d[v] = -g.node(v).kappa * prefix * ltg[v] * resolution;
            prefix *= attack_probability(g.node(v), x[v]);
            if (v == g.target()) break;
            NodeIndex nx = g.successors(v).front();
            for (NodeIndex w : g.successors(v))
                if (ltg[w] > ltg[nx]) nx = w;
            v = nx;
        }
        for (std::size_t j = 0; j < n; ++j) slope[j] = d[vars[j]];
        return val;
    };

    std::vector<std::int64_t> best(n, 0);
    double best_val = f(best);
    if (n > 0 && N > 0) {
        // Incumbent from a coarse sub-lattice of the top layer.
        const std::int64_t coarse_units = std::max<std::int64_t>(1, std::min<std::int64_t>(N, n <= 3 ? 40 : 12));
        const std::int64_t step = N / coarse_units;
        std::vector<std::int64_t> k(n, 0);
        auto coarse = [&](auto&& self, std::size_t j, std::int64_t left) -> void {
            if (j + 1 == n) {
                k[j] = left * step + (N - coarse_units * step);
                double v = f(k);
                if (v < best_val) best_val = v, best = k;
                return;
            }
            for (std::int64_t u = 0; u <= left; ++u) {
                k[j] = u * step;
                self(self, j + 1, left - u);
            }
        };
        coarse(coarse, 0, coarse_units);

        std::vector<std::int64_t> lo(n, 0), hi(n, N);
        // Shrinks the box to its intersection with the top layer; false if empty.
        auto tighten = [&](std::vector<std::int64_t>& l, std::vector<std::int64_t>& h) {
            std::int64_t sl = 0, sh = 0;
            for (std::size_t j = 0; j < n; ++j) sl += l[j], sh += h[j];
            if (sl > N || sh < N) return false;
            for (std::size_t j = 0; j < n; ++j) {
                std::int64_t nh = std::min(h[j], N - (sl - l[j]));
                std::int64_t nl = std::max(l[j], N - (sh - h[j]));
                h[j] = nh;
                l[j] = nl;
            }
            return true;
        };
        auto search = [&](auto&& self, std::vector<std::int64_t> l, std::vector<std::int64_t> h) -> void {
            if (!tighten(l, h)) return;
            std::size_t widest = 0;
            std::int64_t width = -1;
            for (std::size_t j = 0; j < n; ++j)
                if (h[j] - l[j] > width) width = h[j] - l[j], widest = j;
            if (width == 0) {
                double v = f(l);
                if (v < best_val) best_val = v, best = l;
                return;
            }
            const double cut = best_val * (1.0 - 1e-12);
            if (f(h) >= cut) return;
            // Linear bound: minimise the hyperplane over the box and the layer.
            std::vector<double> centre(n);
            for (std::size_t j = 0; j < n; ++j) centre[j] = 0.5 * static_cast<double>(l[j] + h[j]);
            double lin = support(centre);
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return slope[a] < slope[b]; });
            std::int64_t room = N;
            for (std::size_t j = 0; j < n; ++j) room -= l[j];
            for (std::size_t j : order) {
                std::int64_t take = std::min(room, h[j] - l[j]);
                room -= take;
                lin += slope[j] * (static_cast<double>(l[j] + take) - centre[j]);
            }
            if (lin >= cut) return;
            const std::int64_t mid = l[widest] + width / 2;
            auto l2 = l, h1 = h;
            h1[widest] = mid;
            l2[widest] = mid + 1;
            // Visit the half whose corner promises more first.
            double b1 = f(h1), b2 = f(h);
            if (b2 < b1) {
                self(self, l2, h);
                self(self, l, h1);
            } else {
                self(self, l, h1);
                self(self, l2, h);
            }
        };
        search(search, lo, hi);
    }

    for (std::size_t j = 0; j < n; ++j) x[vars[j]] = static_cast<double>(best[j]) * resolution;
    out.x = x;
    out.loss = worst_case(g, paths, x).loss;
    for (const auto& p : paths)
        if (path_loss(g, p, x) >= out.loss * (1.0 - kCriticalRelTol)) out.critical_paths.push_back(p);
    double kmax = 0.0;
    for (NodeIndex v : vars) kmax = std::max(kmax, g.node(v).kappa);
    out.bound = out.loss * std::expm1(kmax * static_cast<double>(n) * resolution);
    return out;
}

}  // namespace attackgame
