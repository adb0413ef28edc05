#include <catch_amalgamated.hpp>

#include <chrono>

#include "support.hpp"

using namespace attackgame;
using testing::base_network;
using testing::rel;

TEST_CASE("base network equilibrium matches the hand-derived optimum", "[solver]") {
    // x2* = ln(7)/2 from the first-order conditions; L* = 2 sqrt(7) / e at B = 1.
    auto g = base_network();
    auto r = solve(g, 1.0);
    CHECK(rel(r.loss, 2.0 * std::sqrt(7.0) / std::exp(1.0)) < 1e-8);
    CHECK(r.x[g.index_of("v2")] == Catch::Approx(std::log(7.0) / 2.0).margin(1e-6));
    CHECK(r.x[g.index_of("v1")] == Catch::Approx(1.0 - std::log(7.0) / 2.0).margin(1e-6));
    CHECK(r.certificate.relative_gap <= 1e-8);
    CHECK(r.certificate.lower_bound <= r.loss);
    CHECK(std::abs(r.certificate.budget_slack) < 1e-7);
}

TEST_CASE("zero budget leaves the loss at its undefended value", "[solver]") {
    auto g = base_network();
    auto r = solve(g, 0.0);
    CHECK(r.loss == Catch::Approx(8.0));
    CHECK(testing::sum(r.x) == 0.0);
    REQUIRE(r.critical_paths.size() == 1);
}

TEST_CASE("SCADA equilibrium reproduces the published allocation", "[solver][scada]") {
    auto game = testing::load_game("scada.json");
    auto t0 = std::chrono::steady_clock::now();
    auto r = solve(game.graph, game.budget);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(rel(r.loss, 586.67) < 5e-3);
    const std::vector<double> published = {1.4689, 1.4689, 0, 0, 2.0447, 0, 0, 0.0174};
    for (int i = 0; i < 8; ++i)
        CHECK(r.x[game.graph.index_of("v" + std::to_string(i + 1))] == Catch::Approx(published[i]).margin(1e-2));
    CHECK(r.critical_paths.size() == 4);
    CHECK(secs < 5.0);
}

TEST_CASE("solve agrees with the exhaustive lattice oracle on small games", "[solver][oracle]") {
    for (const auto& f : testing::small_fixtures()) {
        INFO(f.name);
        auto s = solve(f.graph, f.budget);
        auto o = grid_oracle(f.graph, f.budget, 1e-3);
        // The lattice optimum can only sit above L*, by at most the bound.
        CHECK(o.loss >= s.loss * (1.0 - s.certificate.relative_gap - 1e-9));
        CHECK(o.loss - s.loss <= o.bound);
        CHECK(testing::sum(o.x) <= f.budget + 1e-9);
    }
}

TEST_CASE("grid oracle finds the optimum of a coarse lattice exactly", "[oracle]") {
    // Brute force over every lattice point of the base network.
    auto g = base_network(1, 2, 5, 1, 3, 0.8);
    const double B = 1.3, h = 0.05;
    const int N = static_cast<int>(std::floor(B / h + 1e-9));
    double best = 1e300;
    for (int a = 0; a <= N; ++a)
        for (int b = 0; a + b <= N; ++b) best = std::min(best, max_loss(g, {a * h, b * h, 0.0}));
    auto o = grid_oracle(g, B, h);
    CHECK(o.loss == Catch::Approx(best).epsilon(1e-14));
}

TEST_CASE("grid oracle refuses graphs it cannot search", "[oracle]") {
    auto scada = testing::load_game("scada.json");
    try {
        grid_oracle(scada.graph, 5.0, 1e-3);
        FAIL("expected TooManyInvestableNodes");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooManyInvestableNodes);
    }
    CHECK_THROWS_AS(grid_oracle(base_network(), 1.0, 0.0), Error);
}

TEST_CASE("loss scaling leaves the allocation unchanged", "[solver][scaling]") {
    testing::SeriesParallelGenerator gen(4242);
    for (int k = 0; k < 50; ++k) {
        auto g = k % 2 ? gen.make() : testing::random_dag(900 + static_cast<std::uint64_t>(k), 10);
        const double B = 0.5 + static_cast<double>(k % 5);
        const double c = std::pow(10.0, static_cast<double>(k % 7) - 3.0);
        RawGraph r = g.raw();
        for (auto& n : r.nodes) n.loss *= c;
        auto scaled = validate(r);
        auto a = solve(g, B), b = solve(scaled, B);
        INFO("instance " << k << " scale " << c);
        CHECK(rel(b.loss, c * a.loss) < 1e-9);
        for (NodeIndex i = 0; i < g.size(); ++i) CHECK(std::abs(a.x[i] - b.x[i]) < 1e-6);
    }
}

TEST_CASE("solver converges on random DAGs with widely spread losses", "[solver]") {
    for (std::uint64_t seed = 5000; seed < 5100; ++seed) {
        auto g = testing::random_dag(seed);
        const double B = 0.01 + static_cast<double>(seed % 13);
        auto r = solve(g, B);
        INFO("seed " << seed);
        CHECK(r.certificate.relative_gap <= 1e-8);
        CHECK(testing::sum(r.x) <= B * (1 + 1e-9) + 1e-12);
        CHECK(r.loss == Catch::Approx(max_loss(g, r.x)).epsilon(1e-12));
        for (double v : r.x) CHECK(v >= 0.0);
    }
}

TEST_CASE("smoothed projected gradient reaches a looser tolerance", "[solver]") {
    SolveOptions opt;
    opt.method = Method::Smooth;
    opt.tolerance = 1e-4;
    auto g = base_network();
    auto r = solve(g, 1.0, opt);
    CHECK(rel(r.loss, 2.0 * std::sqrt(7.0) / std::exp(1.0)) < 1e-4);
    CHECK(r.certificate.method == "smooth");
}

TEST_CASE("an unreachable tolerance raises NonConvergence with the best iterate", "[solver]") {
    auto game = testing::load_game("scada.json");
    SolveOptions opt;
    opt.tolerance = 1e-300;
    try {
        solve(game.graph, game.budget, opt);
        FAIL("expected NonConvergence");
    } catch (const NonConvergence& e) {
        CHECK(e.code() == ErrorCode::NonConvergence);
        CHECK(rel(e.partial().loss, 586.6618) < 1e-5);
        CHECK(e.partial().certificate.relative_gap < 1e-6);
    }
}

TEST_CASE("invalid solver arguments", "[solver]") {
    auto g = base_network();
    CHECK_THROWS_AS(solve(g, -1.0), Error);
    CHECK_THROWS_AS(solve(g, std::numeric_limits<double>::infinity()), Error);
    SolveOptions opt;
    opt.tolerance = 0;
    CHECK_THROWS_AS(solve(g, 1.0, opt), Error);
}

TEST_CASE("perimeter defence on SCADA", "[solver][perimeter]") {
    auto game = testing::load_game("scada.json");
    const auto& g = game.graph;
    auto p = perimeter(g, game.budget, 2.25);
    // Hand evaluation of the two path families at x1 = x2 = 2.25.
    const double q1 = 0.18 * std::exp(-2.25), q3 = q1 * 0.09, q5 = q3 * 0.09, q6 = q5 * 0.13;
    const double head = 1e4 * q1 + 2e4 * q3 + 2e7 * q5 + 2e5 * q6;
    const double via7 = head + q6 * 0.08 * (1e9 + 1e10), via8 = head + q6 * 0.08 * (2e9 + 1e10);
    CHECK(p.loss == Catch::Approx(via8).epsilon(1e-12));
    CHECK(p.loss == Catch::Approx(22479.6).epsilon(1e-5));
    std::vector<double> losses;
    for (const auto& [path, l] : p.path_losses) losses.push_back(l);
    CHECK(std::count_if(losses.begin(), losses.end(), [&](double l) { return std::abs(l - via7) < 1e-6 * via7; }) == 2);
    CHECK(p.equal_split_loss == Catch::Approx(17507.1).epsilon(1e-5));
    // The best entry-only allocation is the even split here, by symmetry.
    CHECK(p.best.loss == Catch::Approx(p.equal_split_loss).epsilon(1e-7));
    CHECK_THROWS_AS(perimeter(g, game.budget, 3.0), Error);
}

TEST_CASE("restricting investment to allowed nodes", "[solver]") {
    auto g = base_network();
    SolveOptions opt;
    opt.allowed = std::vector<char>{0, 1, 0};
    auto r = solve(g, 1.0, opt);
    CHECK(r.x[g.index_of("v1")] == 0.0);
    CHECK(r.loss == Catch::Approx(1 + 7 * std::exp(-2.0)).epsilon(1e-8));
}
