#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace attackgame;
using testing::base_network;

namespace {

RawGraph chain_raw() { return base_network().raw(); }

bool has_code(const std::vector<Violation>& v, ErrorCode c) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.code == c; });
}

}  // namespace

TEST_CASE("a well-formed base network validates", "[graph]") {
    auto g = base_network();
    CHECK(g.size() == 3);
    CHECK(g.sources().size() == 1);
    CHECK(g.node(g.target()).id == "vg");
    CHECK(g.investable_nodes().size() == 2);
    CHECK(check(g.raw()).empty());
}

TEST_CASE("validation reports every problem with a document location", "[graph]") {
    SECTION("cycle") {
        auto r = chain_raw();
        r.edges.push_back({"v2", "v1"});
        r.sources = {"v1"};
        auto v = check(r);
        CHECK(has_code(v, ErrorCode::CycleDetected));
    }
    SECTION("duplicate id and out-of-range attributes") {
        auto r = chain_raw();
        r.nodes[1].id = "v1";
        r.nodes[0].p0 = 0.0;
        r.nodes[0].kappa = 0.5;
        r.nodes[0].loss = -1;
        auto v = check(r);
        CHECK(has_code(v, ErrorCode::DuplicateNode));
        CHECK(has_code(v, ErrorCode::AttributeOutOfRange));
        CHECK(std::any_of(v.begin(), v.end(), [](const Violation& x) { return x.location == "/nodes/0/p0"; }));
        CHECK(std::any_of(v.begin(), v.end(), [](const Violation& x) { return x.location == "/nodes/0/kappa"; }));
    }
    SECTION("investable target") {
        auto r = chain_raw();
        r.nodes[2].investable = true;
        CHECK(has_code(check(r), ErrorCode::InvestableTarget));
    }
    SECTION("second sink") {
        auto r = chain_raw();
        r.nodes.push_back({"x", 1, 1, 1, true});
        r.edges.push_back({"v1", "x"});
        CHECK(has_code(check(r), ErrorCode::MultipleTargets));
    }
    SECTION("node off every path") {
        auto r = chain_raw();
        r.nodes.push_back({"x", 1, 1, 1, true});
        r.edges.push_back({"x", "vg"});
        CHECK(has_code(check(r), ErrorCode::DanglingNode));
    }
    SECTION("unknown references") {
        auto r = chain_raw();
        r.edges.push_back({"v1", "nowhere"});
        r.sources.push_back("ghost");
        auto v = check(r);
        CHECK(has_code(v, ErrorCode::UnknownNode));
    }
    SECTION("empty") { CHECK(has_code(check(RawGraph{}), ErrorCode::EmptyGraph)); }
    SECTION("validate throws ValidationFailed carrying the list") {
        auto r = chain_raw();
        r.nodes[0].p0 = 2.0;
        try {
            validate(r);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ValidationFailed);
            REQUIRE_FALSE(e.details().empty());
            CHECK(e.details().front().location == "/nodes/0/p0");
        }
    }
}

TEST_CASE("path loss multiplies compromise probabilities along the path", "[graph]") {
    auto g = base_network(1, 1, 6, 1, 2, 0.5);
    Investment x = {0.3, 0.2, 0.0};
    auto paths = enumerate_paths(g);
    REQUIRE(paths.size() == 1);
    const double p1 = 0.5 * std::exp(-0.3), p2 = 0.5 * std::exp(-0.4);
    const double expected = 1 * p1 + 1 * p1 * p2 + 6 * p1 * p2 * 0.5;
    CHECK(path_loss(g, paths[0], x) == Catch::Approx(expected).epsilon(1e-14));
    CHECK(max_loss(g, x) == Catch::Approx(expected).epsilon(1e-14));
    CHECK(attack_probabilities(g, x)[1] == Catch::Approx(p2));
}

TEST_CASE("path enumeration, counting and the dynamic programme agree", "[graph]") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto g = testing::random_dag(seed);
        auto paths = enumerate_paths(g);
        CHECK(static_cast<double>(paths.size()) == count_paths(g));
        Investment x = g.zero_investment();
        for (NodeIndex i = 0; i < g.size(); ++i)
            if (g.node(i).investable) x[i] = 0.1 * static_cast<double>(i % 4);
        CHECK(worst_case(g, paths, x).loss == Catch::Approx(max_loss(g, x)).epsilon(1e-12));
        for (const auto& p : paths) {
            CHECK(std::find(g.sources().begin(), g.sources().end(), p.front()) != g.sources().end());
            CHECK(p.back() == g.target());
        }
    }
}

TEST_CASE("path cap raises PathExplosion", "[graph]") {
    // Ladder of diamonds: 2^k paths.
    RawGraph r;
    r.nodes.push_back({"s", 1, 1, 1, true});
    std::string prev = "s";
    for (int k = 0; k < 12; ++k) {
        std::string a = "a" + std::to_string(k), b = "b" + std::to_string(k), j = "j" + std::to_string(k);
        r.nodes.push_back({a, 1, 1, 1, true});
        r.nodes.push_back({b, 1, 1, 1, true});
        r.nodes.push_back({j, 1, 1, 1, true});
        r.edges.insert(r.edges.end(), {{prev, a}, {prev, b}, {a, j}, {b, j}});
        prev = j;
    }
    r.nodes.push_back({"g", 1, 1, 1, false});
    r.edges.push_back({prev, "g"});
    r.sources = {"s"};
    r.target = "g";
    auto g = validate(r);
    CHECK(count_paths(g) == 4096.0);
    try {
        enumerate_paths(g, 1000);
        FAIL("expected PathExplosion");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::PathExplosion);
    }
    CHECK(enumerate_paths(g, 5000).size() == 4096);
}

TEST_CASE("pre and post sets", "[graph]") {
    auto g = testing::load_game("scada.json").graph;
    CHECK(pre_set(g, "v5") == std::set<std::string>{"v1", "v2", "v3", "v4", "v5"});
    CHECK(post_set(g, "v6") == std::set<std::string>{"v6", "v7", "v8", "vg"});
}

TEST_CASE("investment_from maps ids to positions", "[graph]") {
    auto g = base_network();
    auto x = g.investment_from({{"v2", 0.5}});
    CHECK(x[g.index_of("v2")] == 0.5);
    CHECK(x[g.index_of("v1")] == 0.0);
    CHECK_THROWS(g.index_of("missing"));
}
