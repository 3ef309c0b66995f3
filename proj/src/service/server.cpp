#include "rescue/service/server.hpp"

#include "rescue/error.hpp"
#include "rescue/kb/dsl.hpp"

#include "httplib.h"

#include <fstream>
#include <sstream>

namespace rescue::service {

using nlohmann::json;
namespace fs = std::filesystem;

sim::Scenario resolve_scenario(const std::string& spec, std::optional<std::uint64_t> seed,
                               const fs::path& data_dir)
{
    sim::Scenario s;
    const fs::path named = data_dir / "scenarios" / (spec + ".json");
    if (fs::is_regular_file(spec)) {
        s = sim::load_scenario_file(spec);
    } else if (fs::is_regular_file(named)) {
        s = sim::load_scenario_file(named);
    } else {
        return sim::synthesize_city(sim::city_preset(spec), seed.value_or(1));
    }
    if (seed) {
        s.seed = *seed;
    }
    return s;
}

fs::path resolve_ruleset(const std::string& spec, const fs::path& data_dir)
{
    if (fs::is_regular_file(spec)) {
        return spec;
    }
    const fs::path named = data_dir / "rulesets" / (spec + ".fs");
    if (fs::is_regular_file(named)) {
        return named;
    }
    throw Error(ErrorCode::not_found, "no rule set '" + spec + "'");
}

kb::FrameSet load_ruleset_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot read " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return kb::parse_frame_source(s.str());
}

int http_status(ErrorCode code)
{
    switch (code) {
    case ErrorCode::not_found:
    case ErrorCode::unknown_entity:
    case ErrorCode::unknown_agent:
    case ErrorCode::unknown_frame:
        return 404;
    case ErrorCode::invalid_state:
        return 409;
    case ErrorCode::io:
        return 500;
    default:
        return 422;
    }
}

// -- host ------------------------------------------------------------------------------

SessionHost::SessionHost(fs::path data_dir, std::chrono::milliseconds step_period)
    : data_dir_(std::move(data_dir)), period_(step_period)
{
}

std::shared_ptr<Session> SessionHost::create(const json& request)
{
    if (!request.is_object()) {
        throw Error(ErrorCode::syntax, "session request must be a JSON object");
    }
    const std::string scenario = request.value("scenario", std::string("test_city"));
    const std::string ruleset = request.value("ruleset", std::string("defaults"));
    std::optional<std::uint64_t> seed;
    if (request.contains("seed") && !request["seed"].is_null()) {
        if (!request["seed"].is_number_unsigned()) {
            throw Error(ErrorCode::syntax, "seed must be a non-negative integer");
        }
        seed = request["seed"].get<std::uint64_t>();
    }
    auto s = resolve_scenario(scenario, seed, data_dir_);
    auto rules = load_ruleset_file(resolve_ruleset(ruleset, data_dir_));
    std::lock_guard lock(mutex_);
    const std::string id = "s" + std::to_string(next_++);
    auto session = std::make_shared<Session>(id, std::move(s), std::move(rules),
                                             SessionOptions{{}, period_});
    sessions_.emplace(id, session);
    return session;
}

std::shared_ptr<Session> SessionHost::find(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error(ErrorCode::not_found, "no session '" + id + "'");
    }
    return it->second;
}

std::vector<std::string> SessionHost::ids() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) {
        out.push_back(id);
    }
    return out;
}

// -- routes ----------------------------------------------------------------------------

namespace {

void reply(httplib::Response& res, const json& body, int status = 200)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json body_of(const httplib::Request& req)
{
    if (req.body.empty()) {
        return json::object();
    }
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::syntax, std::string("malformed JSON body: ") + e.what());
    }
}

std::optional<std::int64_t> time_param(const httplib::Request& req)
{
    if (!req.has_param("t")) {
        return std::nullopt;
    }
    try {
        return std::stoll(req.get_param_value("t"));
    } catch (const std::exception&) {
        throw Error(ErrorCode::syntax, "t must be an integer");
    }
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

/// Maps library errors and JSON type errors onto status codes.
Handler guarded(Handler h)
{
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
        try {
            h(req, res);
        } catch (const Error& e) {
            reply(res,
                  {{"error", std::string(to_string(e.code()))}, {"message", e.what()}},
                  http_status(e.code()));
        } catch (const json::exception& e) {
            reply(res, {{"error", "syntax"}, {"message", e.what()}}, 422);
        }
    };
}

} // namespace

void mount_routes(httplib::Server& server, SessionHost& host)
{
    server.Post("/sessions", guarded([&](const auto& req, auto& res) {
                    auto s = host.create(body_of(req));
                    reply(res,
                          {{"id", s->id()},
                           {"time", s->time()},
                           {"status", std::string(to_string(s->status()))}},
                          201);
                }));
    server.Get("/sessions", guarded([&](const auto&, auto& res) { reply(res, host.ids()); }));
    server.Post(R"(/sessions/([^/]+)/control)", guarded([&](const auto& req, auto& res) {
                    auto s = host.find(req.matches[1]);
                    const json b = body_of(req);
                    std::optional<std::int64_t> arg;
                    if (b.contains("arg") && !b["arg"].is_null()) {
                        arg = b["arg"].template get<std::int64_t>();
                    }
                    reply(res, s->control(b.at("command").template get<std::string>(), arg));
                }));
    server.Get(R"(/sessions/([^/]+)/state)", guarded([&](const auto& req, auto& res) {
                   reply(res, host.find(req.matches[1])->query_state(time_param(req)));
               }));
    server.Get(R"(/sessions/([^/]+)/goals)", guarded([&](const auto& req, auto& res) {
                   reply(res, host.find(req.matches[1])->goals_view(time_param(req)));
               }));
    server.Get(R"(/sessions/([^/]+)/rdr/([^/]+))", guarded([&](const auto& req, auto& res) {
                   reply(res, host.find(req.matches[1])->tree_view(req.matches[2]));
               }));
    server.Get(R"(/sessions/([^/]+)/report)", guarded([&](const auto& req, auto& res) {
                   reply(res, host.find(req.matches[1])->report().to_json());
               }));
    server.Get(R"(/sessions/([^/]+)/updates)", guarded([&](const auto& req, auto& res) {
                   json out = json::array();
                   for (const auto& d : host.find(req.matches[1])->drafts()) {
                       out.push_back(d.to_json());
                   }
                   reply(res, out);
               }));
    server.Post(R"(/sessions/([^/]+)/updates)", guarded([&](const auto& req, auto& res) {
                    auto s = host.find(req.matches[1]);
                    const json b = body_of(req);
                    const auto t = b.contains("time") ? b["time"].template get<std::int64_t>()
                                                      : s->time();
                    auto d = s->begin_rule_update(t, b.at("entity").template get<std::string>(),
                                                  b.at("tree").template get<std::string>(),
                                                  b.at("proposed").template get<std::string>());
                    reply(res, d.to_json(), 201);
                }));
    server.Post(R"(/sessions/([^/]+)/updates/([^/]+)/commit)",
                guarded([&](const auto& req, auto& res) {
                    auto s = host.find(req.matches[1]);
                    const json b = body_of(req);
                    auto indices = b.value("literal_indices", std::vector<std::size_t>{});
                    reply(res, s->commit_rule_update(req.matches[2], indices,
                                                     b.value("case_id", std::string()))
                                   .to_json());
                }));
    server.Delete(R"(/sessions/([^/]+)/updates/([^/]+))", guarded([&](const auto& req, auto& res) {
                      host.find(req.matches[1])->discard_update(req.matches[2]);
                      reply(res, {{"discarded", req.matches[2].str()}});
                  }));
    server.Post(R"(/sessions/([^/]+)/ruleset/(save|load))", guarded([&](const auto& req, auto& res) {
                    auto s = host.find(req.matches[1]);
                    const std::string path = body_of(req).at("path").template get<std::string>();
                    if (req.matches[2] == "save") {
                        s->save_ruleset(path);
                    } else {
                        s->load_ruleset(path);
                    }
                    reply(res, {{"ok", true}, {"path", path}});
                }));
    server.Get(R"(/sessions/([^/]+)/events)", guarded([&](const auto& req, auto& res) {
                   auto s = host.find(req.matches[1]);
                   std::size_t from = 0;
                   std::optional<std::size_t> max;
                   try {
                       if (req.has_param("from")) {
                           from = std::stoul(req.get_param_value("from"));
                       }
                       if (req.has_param("max")) {
                           max = std::stoul(req.get_param_value("max"));
                       }
                   } catch (const std::exception&) {
                       throw Error(ErrorCode::syntax, "from and max must be integers");
                   }
                   auto sent = std::make_shared<std::size_t>(0);
                   res.set_chunked_content_provider(
                       "text/event-stream",
                       [s, next = from, max, sent](std::size_t, httplib::DataSink& sink) mutable {
                           if (max && *sent >= *max) {
                               sink.done();
                               return true;
                           }
                           for (const auto& e : s->events().since(next, std::chrono::milliseconds(500))) {
                               const std::string chunk = "event: " + e.value("event", std::string("message")) +
                                                         "\nid: " + std::to_string(next) +
                                                         "\ndata: " + e.dump() + "\n\n";
                               if (!sink.write(chunk.data(), chunk.size())) {
                                   return false;
                               }
                               ++next;
                               if (max && ++*sent >= *max) {
                                   sink.done();
                                   return true;
                               }
                           }
                           return sink.is_writable();
                       });
               }));
}

} // namespace rescue::service
