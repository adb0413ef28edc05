#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"

namespace attackgame {

enum class Method { Barrier, Smooth };

struct SolveOptions {
    double tolerance = 1e-8;  // relative gap on the worst-case loss
    std::size_t path_cap = kDefaultPathCap;
    Method method = Method::Barrier;
    int max_newton_steps = 5000;
    // When set, only nodes flagged here (and investable) may receive budget.
    std::optional<std::vector<char>> allowed;
};

struct Certificate {
    double spread = 0.0;          // max minus min loss across critical paths
    double budget_slack = 0.0;    // B minus total investment
    double residual = 0.0;        // final Newton decrement or projected-gradient norm
    int iterations = 0;
    double log_gap = 0.0;         // log(upper) - (lower bound on log L*)
    double relative_gap = 0.0;    // exp(log_gap) - 1, bounds (loss - L*) / L*
    double lower_bound = 0.0;     // certified lower bound on L*
    std::string method;
};

struct EquilibriumResult {
    Investment x;
    double loss = 0.0;
    std::vector<Path> critical_paths;
    Certificate certificate;
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& msg, EquilibriumResult partial)
        : Error(ErrorCode::NonConvergence, msg), partial_(std::move(partial)) {}
    const EquilibriumResult& partial() const noexcept { return partial_; }

private:
    EquilibriumResult partial_;
};

// Paths whose loss is within this relative distance of the worst case are
// reported as critical. Looser than the path tie tolerance because x* is
// only known to the solver tolerance.
inline constexpr double kCriticalRelTol = 1e-6;

namespace detail {

inline std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// One path written in log space: g(x) = log sum_i exp(a_i - sum_{j<=i} kappa_j x_j).
struct LogPath {
    struct Entry {
        int var;       // column in the reduced variable vector, or -1
        double kappa;
        double a;      // log(L_i) + sum_{j<=i} log p0_j
        bool has_loss;
    };
    std::vector<Entry> entries;
};

struct PathEval {
    double g = 0.0;
    // (var, kappa, suffix weight from that position) for each investable entry.
    std::vector<std::tuple<int, double, double>> terms;
};

inline PathEval eval_path(const LogPath& p, const Eigen::VectorXd& x) {
    PathEval out;
    const std::size_t k = p.entries.size();
    std::vector<double> e(k, -std::numeric_limits<double>::infinity());
    double cum = 0.0, top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
        const auto& en = p.entries[i];
        if (en.var >= 0) cum += en.kappa * x[en.var];
        if (en.has_loss) {
            e[i] = en.a - cum;
            top = std::max(top, e[i]);
        }
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        if (p.entries[i].has_loss) sum += std::exp(e[i] - top);
    out.g = top + std::log(sum);
    double suffix = 0.0;
    for (std::size_t i = k; i-- > 0;) {
        if (p.entries[i].has_loss) suffix += std::exp(e[i] - top) / sum;
        if (p.entries[i].var >= 0) out.terms.emplace_back(p.entries[i].var, p.entries[i].kappa, suffix);
    }
    return out;
}

struct Epigraph {
    std::vector<NodeIndex> vars;  // investable node per column
    std::vector<LogPath> paths;
    std::vector<Path> raw_paths;
    // Subtracted from every log term so the iterates do not depend on the
    // unit losses are measured in.
    double shift = 0.0;

    Investment expand(const AttackGraph& g, const Eigen::VectorXd& x) const {
        Investment full = g.zero_investment();
        for (std::size_t j = 0; j < vars.size(); ++j) full[vars[j]] = std::max(0.0, x[j]);
        return full;
    }
};

inline Epigraph build_epigraph(const AttackGraph& g, const SolveOptions& opt) {
    Epigraph ep;
    std::vector<int> col(g.size(), -1);
    for (NodeIndex i = 0; i < g.size(); ++i) {
        bool ok = g.node(i).investable && (!opt.allowed || (*opt.allowed)[i]);
        if (ok) {
            col[i] = static_cast<int>(ep.vars.size());
            ep.vars.push_back(i);
        }
    }
    ep.raw_paths = enumerate_paths(g, opt.path_cap);
    double top = 0.0;
    for (NodeIndex i = 0; i < g.size(); ++i) top = std::max(top, g.node(i).loss);
    if (top > 0.0) ep.shift = std::log(top);
    for (const auto& path : ep.raw_paths) {
        LogPath lp;
        double logp = 0.0;
        bool any = false;
        for (NodeIndex v : path) {
            const auto& a = g.node(v);
            logp += std::log(a.p0);
            bool has = a.loss > 0.0;
            any = any || has;
            lp.entries.push_back({col[v], a.kappa, has ? std::log(a.loss) - ep.shift + logp : 0.0, has});
        }
        if (any) ep.paths.push_back(std::move(lp));
    }
    return ep;
}

// Lagrangian lower bound on min_x max_P g_P(x) for path weights lambda on
// the simplex, linearised at x: valid because each g_P is convex.
inline double lagrangian_bound(const Epigraph& ep, const Eigen::VectorXd& x, const std::vector<double>& lambda,
                               double budget) {
    const std::size_t n = ep.vars.size();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    double val = 0.0;
    for (std::size_t p = 0; p < ep.paths.size(); ++p) {
        if (lambda[p] == 0.0) continue;
        auto ev = eval_path(ep.paths[p], x);
        val += lambda[p] * ev.g;
        for (auto [v, k, s] : ev.terms) c[v] += lambda[p] * (-k * s);
    }
    double cmin = n ? c.minCoeff() : 0.0;
    return val + budget * std::min(0.0, cmin) - c.dot(x);
}

// Barrier multipliers lose digits to cancellation in t - g_P. Re-fit them on
// the near-active paths so that the weighted gradient is equal across the
// clearly positive coordinates (the stationarity condition). The system is
// usually underdetermined, so take the smallest correction to the barrier
// values: they already carry the right signs on the zero coordinates.
// Returns an empty vector when the fit is unusable; any simplex point is a
// valid input to lagrangian_bound, so this only ever tightens the bound.
inline std::vector<double> polish_multipliers(const Epigraph& ep, const Eigen::VectorXd& x,
                                              const std::vector<double>& lambda, double budget) {
    const std::size_t np = ep.paths.size();
    const int n = static_cast<int>(x.size());
    std::vector<PathEval> evals(np);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < np; ++p) {
        evals[p] = eval_path(ep.paths[p], x);
        top = std::max(top, evals[p].g);
    }
    std::vector<std::size_t> act;
    for (std::size_t p = 0; p < np; ++p)
        if (lambda[p] > 1e-12 && evals[p].g >= top - 1e-6) act.push_back(p);
    std::vector<int> pos;
    for (int j = 0; j < n; ++j)
        if (x[j] > 1e-6 * budget) pos.push_back(j);
    if (act.empty() || pos.empty()) return {};
    const int k = static_cast<int>(act.size());
    // Unknowns: lambda over active paths, then the common gradient value nu.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pos.size()) + 1, k + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(A.rows());
    std::vector<int> row(n, -1);
    for (std::size_t r = 0; r < pos.size(); ++r) row[pos[r]] = static_cast<int>(r);
    for (int c = 0; c < k; ++c) {
        for (auto [v, kap, s] : evals[act[c]].terms)
            if (row[v] >= 0) A(row[v], c) = -kap * s;
        A(A.rows() - 1, c) = 1.0;
    }
    for (std::size_t r = 0; r < pos.size(); ++r) A(static_cast<Eigen::Index>(r), k) = -1.0;
    rhs[A.rows() - 1] = 1.0;
    Eigen::VectorXd u0(k + 1);
    double mass = 0.0;
    for (int c = 0; c < k; ++c) mass += lambda[act[c]];
    for (int c = 0; c < k; ++c) u0[c] = lambda[act[c]] / mass;
    u0[k] = 0.0;
    for (std::size_t r = 0; r < pos.size(); ++r) u0[k] += A.row(static_cast<Eigen::Index>(r)).head(k).dot(u0.head(k));
    u0[k] /= static_cast<double>(pos.size());
    Eigen::VectorXd sol = u0 + A.completeOrthogonalDecomposition().solve(rhs - A * u0);
    if (!sol.allFinite()) return {};
    std::vector<double> out(np, 0.0);
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        out[act[c]] = std::max(0.0, sol[c]);
        total += out[act[c]];
    }
    if (!(total > 0.0)) return {};
    for (double& l : out) l /= total;
    return out;
}

inline EquilibriumResult finish(const AttackGraph& g, const Epigraph& ep, const Eigen::VectorXd& xv, double budget,
                                double lower_log, Certificate cert) {
    EquilibriumResult r;
    r.x = ep.expand(g, xv);
    auto wc = worst_case(g, ep.raw_paths, r.x, 0.0);
    r.loss = wc.loss;
    double lo = r.loss;
    for (const auto& p : ep.raw_paths) {
        double l = path_loss(g, p, r.x);
        if (l >= r.loss * (1.0 - kCriticalRelTol)) {
            r.critical_paths.push_back(p);
            lo = std::min(lo, l);
        }
    }
    double spent = 0.0;
    for (double v : r.x) spent += v;
    cert.spread = r.loss - lo;
    cert.budget_slack = budget - spent;
    if (std::isfinite(lower_log)) {
        lower_log += ep.shift;
        cert.log_gap = std::max(0.0, std::log(r.loss) - lower_log);
        cert.relative_gap = std::expm1(cert.log_gap);
        cert.lower_bound = std::exp(lower_log);
    } else {
        cert.log_gap = cert.relative_gap = 0.0;
        cert.lower_bound = r.loss;
    }
    r.certificate = cert;
    return r;
}

inline EquilibriumResult trivial_result(const AttackGraph& g, const Epigraph& ep, double budget, const char* method) {
    Certificate c;
    c.method = method;
    return finish(g, ep, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ep.vars.size())), budget,
                  std::numeric_limits<double>::quiet_NaN(), c);
}

// Log-barrier interior point on the epigraph
//   min t  s.t.  g_P(x) <= t,  x >= 0,  sum x <= B
// with dense Newton steps. Each g_P is log-sum-exp, hence convex.
inline EquilibriumResult solve_barrier(const AttackGraph& g, const Epigraph& ep, double B, const SolveOptions& opt) {
    const int n = static_cast<int>(ep.vars.size());
    const int dim = n + 1;
    const std::size_t np = ep.paths.size();
    const double m_constraints = static_cast<double>(np + ep.vars.size() + 1);

    Eigen::VectorXd z(dim);
    for (int j = 0; j < n; ++j) z[j] = B / (n + 1);
    double gmax = -std::numeric_limits<double>::infinity();
    for (const auto& p : ep.paths) gmax = std::max(gmax, eval_path(p, z.head(n)).g);
    z[n] = gmax + 1.0;

    // Barrier part of the objective, or +inf outside the domain. The linear
    // term tau*t is added as a difference by the line search: at large tau
    // its absolute size would swamp the decrease being tested.
    auto barrier = [&](const Eigen::VectorXd& v) {
        double spent = v.head(n).sum();
        if (!(B - spent > 0.0)) return std::numeric_limits<double>::infinity();
        double f = -std::log(B - spent);
        for (int j = 0; j < n; ++j) {
            if (!(v[j] > 0.0)) return std::numeric_limits<double>::infinity();
            f -= std::log(v[j]);
        }
        for (const auto& p : ep.paths) {
            double s = v[n] - eval_path(p, v.head(n)).g;
            if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
            f -= std::log(s);
        }
        return f;
    };

    double tau = 1.0;
    int steps = 0;
    double decrement = 0.0;
    double lower_log = -std::numeric_limits<double>::infinity();
    std::vector<double> lambda(np);
    Certificate cert;
    cert.method = "barrier";

    for (int outer = 0; outer < 80; ++outer) {
        // Centering by damped Newton.
        for (int it = 0; it < 200; ++it) {
            Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
            grad[n] = tau;
            const Eigen::VectorXd x = z.head(n);
            for (const auto& p : ep.paths) {
                auto ev = eval_path(p, x);
                const double s = z[n] - ev.g;
                const double is = 1.0 / s, is2 = is * is;
                grad[n] -= is;
                H(n, n) += is2;
                for (std::size_t a = 0; a < ev.terms.size(); ++a) {
                    auto [va, ka, sa] = ev.terms[a];
                    const double ma = -ka * sa;
                    grad[va] += is * ma;
                    H(va, n) -= ma * is2;
                    H(n, va) -= ma * is2;
                    for (std::size_t b = 0; b < ev.terms.size(); ++b) {
                        auto [vb, kb, sb] = ev.terms[b];
                        const double mb = -kb * sb;
                        // terms run from the path end, so the later position
                        // has the smaller suffix weight
                        const double smax = std::min(sa, sb);
                        H(va, vb) += is * (ka * kb * smax - ma * mb) + ma * mb * is2;
                    }
                }
            }
            const double slack = B - x.sum();
            for (int j = 0; j < n; ++j) {
                grad[j] += -1.0 / x[j] + 1.0 / slack;
                H(j, j) += 1.0 / (x[j] * x[j]);
            }
            H.topLeftCorner(n, n).array() += 1.0 / (slack * slack);

            // Symmetric diagonal scaling keeps LDLT accurate when some x_j
            // are many orders of magnitude smaller than others.
            Eigen::VectorXd d = H.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
            Eigen::MatrixXd Hs = d.asDiagonal() * H * d.asDiagonal();
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Hs);
            Eigen::VectorXd dz = d.asDiagonal() * ldlt.solve(-(d.asDiagonal() * grad));
            if (ldlt.info() != Eigen::Success || !dz.allFinite()) break;
            decrement = -grad.dot(dz);
            ++steps;
            if (decrement / 2.0 <= 1e-12) break;

            const double f0 = barrier(z);
            double step = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 60; ++ls) {
                Eigen::VectorXd cand = z + step * dz;
                double f1 = barrier(cand);
                double change = tau * (cand[n] - z[n]) + (f1 - f0);
                if (std::isfinite(f1) && change <= -0.25 * step * decrement) {
                    z = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved || steps >= opt.max_newton_steps) break;
        }

        // Certificate from the central-path multipliers.
        const Eigen::VectorXd x = z.head(n);
        double total = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double s = z[n] - eval_path(ep.paths[p], x).g;
            lambda[p] = 1.0 / (tau * s);
            total += lambda[p];
        }
        for (double& l : lambda) l /= total;
        lower_log = std::max(lower_log, lagrangian_bound(ep, x, lambda, B));
        auto polished = polish_multipliers(ep, x, lambda, B);
        if (!polished.empty()) lower_log = std::max(lower_log, lagrangian_bound(ep, x, polished, B));
        double upper = -std::numeric_limits<double>::infinity();
        for (const auto& p : ep.paths) upper = std::max(upper, eval_path(p, x).g);
        if (std::expm1(upper - lower_log) <= opt.tolerance) break;
        if (steps >= opt.max_newton_steps) break;
        tau *= (m_constraints / tau > 1e-4) ? 10.0 : 4.0;
    }

    cert.iterations = steps;
    cert.residual = std::sqrt(std::max(0.0, decrement));
    auto r = finish(g, ep, z.head(n), B, lower_log, cert);
    if (!(r.certificate.relative_gap <= opt.tolerance))
        throw NonConvergence("barrier method stopped with relative gap " + detail::short_num(r.certificate.relative_gap) +
                                 " above tolerance",
                             r);
    return r;
}

// Euclidean projection onto {y >= 0, sum y <= B}.
inline Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& v, double B) {
    Eigen::VectorXd y = v.cwiseMax(0.0);
    if (y.sum() <= B) return y;
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        double t = (cum - B) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) theta = t;
    }
    return (v.array() - theta).cwiseMax(0.0).matrix();
}

// Log-sum-exp smoothing of the path maximum with an annealed temperature
// and projected gradient steps (Armijo backtracking).
inline EquilibriumResult solve_smooth(const AttackGraph& g, const Epigraph& ep, double B, const SolveOptions& opt) {
    const int n = static_cast<int>(ep.vars.size());
    const std::size_t np = ep.paths.size();
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, B / (n + 1));
    std::vector<double> w(np);

    auto smoothed = [&](const Eigen::VectorXd& v, double mu, Eigen::VectorXd* grad) {
        std::vector<PathEval> evs(np);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < np; ++p) {
            evs[p] = eval_path(ep.paths[p], v);
            top = std::max(top, evs[p].g);
        }
        double sum = 0.0;
        for (std::size_t p = 0; p < np; ++p) sum += std::exp((evs[p].g - top) / mu);
        if (grad) {
            grad->setZero(n);
            for (std::size_t p = 0; p < np; ++p) {
                w[p] = std::exp((evs[p].g - top) / mu) / sum;
                for (auto [var, k, s] : evs[p].terms) (*grad)[var] += w[p] * (-k * s);
            }
        }
        return top + mu * std::log(sum);
    };

    int iters = 0;
    double lower_log = -std::numeric_limits<double>::infinity();
    double pg_norm = 0.0;
    Eigen::VectorXd grad(n);
    for (double mu = 1.0; mu >= 1e-6 * 0.999; mu *= 0.5) {
        double step = 1.0;
        for (int it = 0; it < 2000; ++it) {
            double f0 = smoothed(x, mu, &grad);
            ++iters;
            bool moved = false;
            for (int ls = 0; ls < 50; ++ls) {
                Eigen::VectorXd cand = project_capped_simplex(x - step * grad, B);
                Eigen::VectorXd d = cand - x;
                double f1 = smoothed(cand, mu, nullptr);
                if (f1 <= f0 + 0.5 * grad.dot(d)) {
                    pg_norm = d.norm() / std::max(step, 1e-300);
                    x = cand;
                    moved = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if (!moved || pg_norm < 1e-12) break;
        }
        smoothed(x, mu, &grad);
        lower_log = std::max(lower_log, lagrangian_bound(ep, x, w, B));
        double upper = -std::numeric_limits<double>::infinity();
        for (const auto& p : ep.paths) upper = std::max(upper, eval_path(p, x).g);
        if (std::expm1(upper - lower_log) <= opt.tolerance) break;
    }
    Certificate cert;
    cert.method = "smooth";
    cert.iterations = iters;
    cert.residual = pg_norm;
    auto r = finish(g, ep, x, B, lower_log, cert);
    if (!(r.certificate.relative_gap <= opt.tolerance))
        throw NonConvergence("smoothed projected gradient stopped with relative gap " +
                                 detail::short_num(r.certificate.relative_gap) + " above tolerance",
                             r);
    return r;
}

}  // namespace detail

inline EquilibriumResult solve(const AttackGraph& g, double budget, const SolveOptions& opt = {}) {
    if (!(budget >= 0.0) || !std::isfinite(budget)) fail(ErrorCode::InvalidArgument, "budget must be finite and >= 0");
    if (!(opt.tolerance > 0.0)) fail(ErrorCode::InvalidArgument, "tolerance must be > 0");
    auto ep = detail::build_epigraph(g, opt);
    const char* name = opt.method == Method::Barrier ? "barrier" : "smooth";
    if (budget == 0.0 || ep.vars.empty()) return detail::trivial_result(g, ep, budget, name);
    return opt.method == Method::Barrier ? detail::solve_barrier(g, ep, budget, opt)
                                         : detail::solve_smooth(g, ep, budget, opt);
}

// A graph with the budget and solver settings it should be played with.
struct GameInstance {
    AttackGraph graph;
    double budget = 0.0;
    SolveOptions options;
};

// Perimeter defence: only the entry nodes receive budget.
struct PerimeterReport {
    double per_source = 0.0;
    Investment x;                                  // fixed allocation
    double loss = 0.0;                             // worst case at x
    std::vector<std::pair<Path, double>> path_losses;
    Investment equal_split_x;                      // B divided evenly over sources
    double equal_split_loss = 0.0;
    EquilibriumResult best;                        // optimum restricted to sources
};

inline PerimeterReport perimeter(const AttackGraph& g, double budget, std::optional<double> per_source = std::nullopt,
                                 const SolveOptions& opt = {}) {
    std::vector<NodeIndex> entry;
    for (NodeIndex s : g.sources())
        if (g.node(s).investable) entry.push_back(s);
    PerimeterReport r;
    const double even = entry.empty() ? 0.0 : budget / static_cast<double>(entry.size());
    r.per_source = per_source.value_or(even);
    if (r.per_source < 0.0 || r.per_source * static_cast<double>(entry.size()) > budget * (1.0 + 1e-12))
        fail(ErrorCode::InvalidArgument, "per-source amount exceeds the budget");
    r.x = g.zero_investment();
    r.equal_split_x = g.zero_investment();
    for (NodeIndex s : entry) {
        r.x[s] = r.per_source;
        r.equal_split_x[s] = even;
    }
    auto paths = enumerate_paths(g, opt.path_cap);
    for (const auto& p : paths) r.path_losses.emplace_back(p, path_loss(g, p, r.x));
    r.loss = worst_case(g, paths, r.x).loss;
    r.equal_split_loss = worst_case(g, paths, r.equal_split_x).loss;
    SolveOptions o = opt;
    o.allowed = std::vector<char>(g.size(), 0);
    for (NodeIndex s : entry) (*o.allowed)[s] = 1;
    r.best = solve(g, budget, o);
    return r;
}

}  // namespace attackgame
