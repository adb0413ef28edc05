#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace attackgame;

namespace {

Error error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e;
    }
    FAIL("no error raised");
    return Error(ErrorCode::InvalidArgument, "");
}

std::vector<std::string> locations(const Error& e) {
    std::vector<std::string> out;
    for (const auto& d : e.details()) out.push_back(d.location);
    return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST_CASE("bundled games parse and round-trip", "[io]") {
    for (const char* name : {"scada.json", "automotive.json"}) {
        INFO(name);
        auto doc = parse_game_document(read_file(testing::data_path(name)));
        CHECK(doc.notes.has_value());
        auto again = parse_game_document(to_json(doc).dump(2));
        CHECK(to_json(again) == to_json(doc));
        auto g = instantiate(doc).graph;
        CHECK(parse_graph(serialize(g)) == g);
    }
    auto scada = parse_game_document(read_file(testing::data_path("scada.json")));
    CHECK(scada.budget == 5.0);
    CHECK(scada.options.perimeter_per_source == 2.25);

    scada.options.method = Method::Smooth;
    auto again = parse_game_document(to_json(scada).dump());
    CHECK(again.options.method == Method::Smooth);
    CHECK(instantiate(again).options.method == Method::Smooth);
}

TEST_CASE("random graphs round-trip bit for bit", "[io]") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto g = testing::random_dag(300 + seed);
        const std::string text = serialize(g);
        auto back = parse_graph(text);
        CHECK(back == g);
        CHECK(serialize(back) == text);
    }
}

TEST_CASE("malformed JSON reports line and column", "[io]") {
    auto e = error_of([] { detail::parse_json("{\n  \"budget\": 1,\n  \"graph\": [1, 2,,]\n}"); });
    CHECK(e.code() == ErrorCode::SyntaxError);
    REQUIRE(e.details().size() == 1);
    CHECK(e.details()[0].location.rfind("line 3, column ", 0) == 0);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(error_of([] { parse_game_document(read_file(ATTACKGAME_TEST_DATA "/malformed.json")); }).code() ==
          ErrorCode::SyntaxError);
}

TEST_CASE("shape problems are collected with JSON pointers", "[io]") {
    auto e = error_of([] {
        parse_game_document(R"({"graph": {"nodes": [{"id": 3, "loss": "x", "p0": 1, "kappa": 1}], "edges": [["a"]],
                                          "sources": "a"}, "budget": -1})");
    });
    CHECK(e.code() == ErrorCode::ValidationFailed);
    auto locs = locations(e);
    CHECK(contains(locs, "/graph/nodes/0/id"));
    CHECK(contains(locs, "/graph/nodes/0/loss"));
    CHECK(contains(locs, "/graph/edges/0"));
    CHECK(contains(locs, "/graph/sources"));
    CHECK(contains(locs, "/graph/target"));
    CHECK(contains(locs, "/budget"));

    CHECK(contains(locations(error_of([] { parse_game_document(R"({"graph": {}})"); })), "/budget"));
    CHECK(contains(locations(error_of([] {
              parse_game_document(R"({"graph": {}, "budget": 1, "options": {"method": "newton"}})");
          })),
          "/options/method"));
    CHECK(error_of([] { parse_game_document("[1]"); }).code() == ErrorCode::ValidationFailed);
}

TEST_CASE("graph violations point into the document", "[io]") {
    const Json cyclic = Json::parse(read_file(ATTACKGAME_TEST_DATA "/cyclic_graph.json"));
    auto bare = error_of([&] { parse_graph(cyclic.dump()); });
    CHECK(bare.code() == ErrorCode::ValidationFailed);
    for (const auto& d : bare.details()) CHECK(d.location.rfind("/graph", 0) != 0);
    auto e = error_of([&] { parse_game(Json{{"graph", cyclic}, {"budget", 1}}.dump()); });
    CHECK(e.code() == ErrorCode::ValidationFailed);
    bool cycle = false;
    for (const auto& d : e.details()) {
        cycle = cycle || d.code == ErrorCode::CycleDetected;
        CHECK(d.location.rfind("/graph", 0) == 0);
    }
    CHECK(cycle);

    auto doc = parse_game_document(read_file(testing::data_path("scada.json")));
    doc.graph.nodes[2].p0 = 1.5;
    auto v = error_of([&] { instantiate(doc); });
    CHECK(contains(locations(v), "/graph/nodes/2/p0"));
    doc.graph_pointer = "";
    CHECK(contains(locations(error_of([&] { instantiate(doc); })), "/nodes/2/p0"));
}

TEST_CASE("intervention specs", "[io]") {
    auto one = specs_from_json(Json::parse(R"({"kind": "Series", "anchor": "v2", "position": "before",
                                               "new_attrs": {"id": "v3", "loss": 1, "p0": 1, "kappa": 3}})"));
    REQUIRE(one.size() == 1);
    CHECK(one[0].kind == InterventionKind::Series);
    CHECK(one[0].anchor == std::vector<std::string>{"v2"});
    CHECK(one[0].position == SeriesPosition::Before);
    CHECK(one[0].new_attrs.investable);
    CHECK(spec_from_json(to_json(one[0])).new_attrs == one[0].new_attrs);

    auto list = specs_from_json(Json::parse(read_file(ATTACKGAME_TEST_DATA "/base_candidates.json")));
    CHECK(list.size() == 3);

    auto e = error_of([] {
        specs_from_json(Json::parse(R"({"candidates": [{"kind": "Sideways", "anchor": ["v2"], "new_attrs": {}}]})"));
    });
    auto locs = locations(e);
    CHECK(contains(locs, "/candidates/0/kind"));
    CHECK(contains(locs, "/candidates/0/new_attrs/id"));
}

TEST_CASE("result documents", "[io]") {
    auto g = testing::base_network();
    auto r = solve(g, 1.0);
    Json j = to_json(g, r);
    CHECK(j["loss"].get<double>() == r.loss);
    CHECK(j["x"]["v2"].get<double>() == r.x[g.index_of("v2")]);
    CHECK(j["critical_paths"][0] == Json::array({"v1", "v2", "vg"}));
    CHECK(j["certificate"]["method"] == "barrier");
    // Shortest round-trip form: every double survives a dump and parse.
    CHECK(Json::parse(j.dump())["loss"].get<double>() == r.loss);

    Error err(ErrorCode::InvalidAnchor, "bad", {{ErrorCode::InvalidAnchor, "unknown node", "/anchor"}});
    Json ej = to_json(err);
    CHECK(ej["code"] == "InvalidAnchor");
    CHECK(ej["message"] == "bad");
    CHECK(ej["locations"] == Json::array({"/anchor"}));
}
