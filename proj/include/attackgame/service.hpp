#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>

// Eigen before httplib: <resolv.h> defines a _res macro that clashes with
// Eigen parameter names.
#include "api.hpp"

#include <httplib.h>

namespace attackgame::service {

struct Reply {
    int status = 200;
    Json body;
};

// Status for an engine error: the caller sent something unusable (400), the
// graph has too many paths (413), or the solver stalled (422).
inline int status_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::PathExplosion: return 413;
        case ErrorCode::NonConvergence: return 422;
        default: return 400;
    }
}

// Stateless request handling over the bundled examples, which are loaded
// once and never modified.
class Service {
public:
    static constexpr const char* kExampleNames[] = {"scada", "automotive"};

    explicit Service(const std::filesystem::path& data_dir) {
        for (const char* name : kExampleNames)
            examples_.emplace(name, detail::parse_json(read_file((data_dir / (std::string(name) + ".json")).string())));
    }

    Reply handle(const std::string& method, const std::string& path, const std::string& body) const {
        try {
            if (method == "GET" && path == "/api/examples") {
                Json names = Json::array();
                for (const char* n : kExampleNames) names.push_back(n);
                return {200, names};
            }
            if (method == "GET" && path.rfind("/api/examples/", 0) == 0) {
                auto it = examples_.find(path.substr(std::string("/api/examples/").size()));
                if (it == examples_.end()) return {404, not_found(path)};
                return {200, it->second};
            }
            if (method != "POST") return {404, not_found(path)};
            const Json request = detail::parse_json(body);
            Json out;
            if (path == "/api/solve") {
                auto strategy = api::Strategy::Optimal;
                if (auto it = request.find("strategy"); it != request.end() && *it == "perimeter")
                    strategy = api::Strategy::Perimeter;
                out = api::solve(game_from_json(request), strategy);
            } else if (path == "/api/reduce") {
                out = api::reduce(game_from_json(request));
            } else if (path == "/api/intervene") {
                out = api::intervene(game_from_json(request), spec_from_json(member(request, "spec"), "/spec"));
            } else if (path == "/api/rank") {
                out = api::rank(game_from_json(request), specs_from_json(Json{{"candidates", member(request, "candidates")}}));
            } else {
                return {404, not_found(path)};
            }
            out["request"] = request;
            return {200, out};
        } catch (const Error& e) {
            return {status_for(e), api::error_body(e)};
        } catch (const std::exception& e) {
            return {500, Json{{"code", "Internal"}, {"message", e.what()}, {"locations", Json::array()},
                              {"engine_version", kEngineVersion}}};
        }
    }

    // Routes plus permissive CORS so a browser UI on another origin can call in.
    void mount(httplib::Server& server) const {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        auto route = [this](const httplib::Request& req, httplib::Response& res) {
            Reply r = handle(req.method, req.path, req.body);
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        server.Get("/api/examples", route);
        server.Get(R"(/api/examples/([A-Za-z0-9_-]+))", route);
        for (const char* p : {"/api/solve", "/api/reduce", "/api/intervene", "/api/rank"}) server.Post(p, route);
    }

private:
    std::map<std::string, Json> examples_;

    static const Json& member(const Json& request, const char* key) {
        auto it = request.find(key);
        if (it == request.end())
            throw Error(ErrorCode::ValidationFailed, std::string("request is missing '") + key + "'",
                        {{ErrorCode::SyntaxError, std::string("missing field '") + key + "'", std::string("/") + key}});
        return *it;
    }

    static Json not_found(const std::string& path) {
        return Json{{"code", "NotFound"}, {"message", "no route for " + path}, {"locations", Json::array()},
                    {"engine_version", kEngineVersion}};
    }
};

}  // namespace attackgame::service
