#include <catch_amalgamated.hpp>

#include <chrono>

#include "zero_checks.hpp"

using namespace attackgame;
using testing::base_network;
using testing::rel;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST_CASE("SCADA reduces to a three-node chain with the same equilibrium", "[reduction][scada]") {
    auto game = testing::load_game("scada.json");
    const auto& g = game.graph;
    auto full = solve(g, game.budget);
    auto t0 = std::chrono::steady_clock::now();
    auto red = reduce(g);
    auto rs = solve(red.graph, game.budget);
    auto x = backmap(red, g, rs.x);
    const double secs = seconds_since(t0);

    REQUIRE(red.graph.size() == 3);
    CHECK(red.graph.sources().size() == 1);
    for (NodeIndex v = 0; v < red.graph.size(); ++v) CHECK(red.graph.successors(v).size() <= 1);
    CHECK(red.graph.investable_nodes().size() == 1);
    CHECK(rel(rs.loss, full.loss) < 1e-3);
    for (NodeIndex i = 0; i < g.size(); ++i) CHECK(std::abs(x[i] - full.x[i]) < 1e-4);
    CHECK(rel(max_loss(g, x), full.loss) < 1e-6);
    CHECK(secs < 1.0);

    std::set<StepKind> kinds;
    for (const auto& s : red.trace.steps) kinds.insert(s.kind);
    CHECK(kinds.count(StepKind::InputReduce));
    CHECK(kinds.count(StepKind::ParallelReduce));
}

TEST_CASE("a minimal chain is left as it is", "[reduction]") {
    auto g = base_network();
    auto red = reduce(g);
    CHECK(red.trace.steps.empty());
    CHECK(red.graph == g);
}

TEST_CASE("sufficient budget of the base network", "[reduction]") {
    auto s = sufficient_budget(base_network());
    CHECK_FALSE(s.heuristic);
    CHECK(s.budget == Catch::Approx(std::log(7.0) / 2.0).epsilon(1e-12));
    CHECK(is_sufficient(base_network(), 1.0));
    CHECK_FALSE(is_sufficient(base_network(), 0.9));
}

TEST_CASE("reduction preserves the equilibrium on random series-parallel graphs", "[reduction][equivalence]") {
    auto t0 = std::chrono::steady_clock::now();
    double worst_gap = 0.0, worst_back = 0.0;
    for (int t = 0; t < 100; ++t) {
        testing::SeriesParallelGenerator gen(1000 + static_cast<std::uint64_t>(t));
        auto g = gen.make();
        const double B = sufficient_budget(g).budget * 1.2 + 0.1;
        auto red = reduce(g);
        auto rs = solve(red.graph, B);
        auto fs = solve(g, B);
        auto x = backmap(red, g, rs.x);
        INFO("seed " << 1000 + t);
        const double gap = rel(rs.loss, fs.loss);
        const double back = rel(max_loss(g, x), rs.loss);
        worst_gap = std::max(worst_gap, gap);
        worst_back = std::max(worst_back, back);
        CHECK(gap <= 1e-4);
        CHECK(back <= 1e-6);
        CHECK(testing::sum(x) <= B * (1 + 1e-9));
        for (NodeIndex i = 0; i < g.size(); ++i) CHECK(x[i] >= 0.0);
    }
    CHECK(seconds_since(t0) < 120.0);
    UNSCOPED_INFO("worst loss gap " << worst_gap << ", worst back-map gap " << worst_back);
}

TEST_CASE("back-mapping below the sufficient budget is refused", "[reduction]") {
    auto game = testing::load_game("scada.json");
    auto red = reduce(game.graph);
    auto rs = solve(red.graph, 1.0);
    try {
        backmap(red, game.graph, rs.x);
        FAIL("expected InfeasibleBackmap");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InfeasibleBackmap);
    }
}

TEST_CASE("replaying the trace rebuilds the reduced graph", "[reduction]") {
    auto game = testing::load_game("scada.json");
    auto red = reduce(game.graph);
    CHECK(replay(red.trace.original, red.trace.steps) == red.graph);
    for (int t = 0; t < 20; ++t) {
        testing::SeriesParallelGenerator gen(2000 + static_cast<std::uint64_t>(t));
        auto g = gen.make();
        auto r = reduce(g);
        CHECK(replay(r.trace.original, r.trace.steps) == r.graph);
    }
}

TEST_CASE("trace documents round-trip", "[reduction][io]") {
    auto game = testing::load_game("scada.json");
    auto red = reduce(game.graph);
    const Json j = to_json(red.trace);
    auto back = trace_from_json(j);
    CHECK(to_json(back) == j);
    auto rs = solve(red.graph, game.budget);
    std::map<std::string, double> xr;
    for (NodeIndex i = 0; i < red.graph.size(); ++i) xr[red.graph.node(i).id] = rs.x[i];
    CHECK(backmap(back, game.graph, xr) == backmap(red.trace, game.graph, xr));
}

namespace {

int mismatches(const std::vector<testing::zero::Case>& cases, int* zeros = nullptr) {
    int bad = 0;
    for (const auto& c : cases) {
        INFO(c.params);
        CHECK(c.predicted == c.oracle_zero);
        bad += c.predicted != c.oracle_zero;
        if (zeros) *zeros += c.oracle_zero;
    }
    return bad;
}

}  // namespace

TEST_CASE("series zero test at the end of a chain", "[reduction][zero]") {
    CHECK(mismatches(testing::zero::series_end()) == 0);
}

TEST_CASE("series zero test inside a chain", "[reduction][zero]") {
    int zeros = 0;
    CHECK(mismatches(testing::zero::series_mid(), &zeros) == 0);
    CHECK(zeros > 5);
    CHECK(zeros < 55);
}

TEST_CASE("parallel zero test on the lowest branch", "[reduction][zero]") {
    int zeros = 0;
    CHECK(mismatches(testing::zero::parallel_lowest(), &zeros) == 0);
    CHECK(zeros > 5);
    CHECK(zeros < 55);
}

TEST_CASE("input zero test on the fed node", "[reduction][zero]") {
    int zeros = 0;
    CHECK(mismatches(testing::zero::input_fed(), &zeros) == 0);
    CHECK(zeros > 5);
    CHECK(zeros < 55);
}

// Two printed forms of the input test (one omitting the downstream term, one
// the target's own loss) both misclassify some draws; the derivative form
// does not. Counts are printed so the disagreement stays visible in the log.
TEST_CASE("printed input zero tests disagree with the oracle", "[reduction][zero]") {
    auto cases = testing::zero::input_fed(60, 75, true);
    int statement_wrong = 0, proof_wrong = 0, derivative_wrong = 0;
    for (const auto& c : cases) {
        statement_wrong += c.statement != c.oracle_zero;
        proof_wrong += c.proof != c.oracle_zero;
        derivative_wrong += c.predicted != c.oracle_zero;
    }
    WARN("input zero test over " << cases.size() << " draws: statement form wrong " << statement_wrong
                                 << ", proof form wrong " << proof_wrong << ", derivative form wrong " << derivative_wrong);
    CHECK(derivative_wrong == 0);
    CHECK(statement_wrong > 0);
    CHECK(proof_wrong > 0);
}

TEST_CASE("reducer zero patterns match the oracle on small games", "[reduction][zero]") {
    for (const auto& f : testing::zero::fixture_zeros()) {
        INFO(f.name);
        CHECK(f.predicted == f.oracle);
    }
}
