#pragma once

// Session registry and the HTTP API in front of it.
//
//   POST /sessions                         {scenario, ruleset, seed}
//   GET  /sessions
//   POST /sessions/{id}/control            {command, arg}
//   GET  /sessions/{id}/state?t=
//   GET  /sessions/{id}/goals?t=
//   GET  /sessions/{id}/rdr/{tree}
//   GET  /sessions/{id}/updates
//   POST /sessions/{id}/updates            {time, entity, tree, proposed}
//   POST /sessions/{id}/updates/{uid}/commit {literal_indices}
//   DELETE /sessions/{id}/updates/{uid}
//   POST /sessions/{id}/ruleset/{save|load} {path}
//   GET  /sessions/{id}/report
//   GET  /sessions/{id}/events?from=&max=  server-sent events

#include "rescue/error.hpp"
#include "rescue/service/session.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace rescue::service {

/// A scenario file, a scenario name under <data>/scenarios, or a city
/// preset synthesized with `seed`. A given seed also reseeds the world.
sim::Scenario resolve_scenario(const std::string& spec, std::optional<std::uint64_t> seed,
                               const std::filesystem::path& data_dir);
/// A rule file or a rule set name under <data>/rulesets.
std::filesystem::path resolve_ruleset(const std::string& spec,
                                      const std::filesystem::path& data_dir);
kb::FrameSet load_ruleset_file(const std::filesystem::path& path);

/// HTTP status for an error code.
int http_status(ErrorCode code);

class SessionHost {
public:
    explicit SessionHost(std::filesystem::path data_dir,
                         std::chrono::milliseconds step_period = std::chrono::milliseconds(100));

    std::shared_ptr<Session> create(const nlohmann::json& request);
    /// Throws not_found.
    std::shared_ptr<Session> find(const std::string& id) const;
    std::vector<std::string> ids() const;

private:
    std::filesystem::path data_dir_;
    std::chrono::milliseconds period_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::size_t next_ = 1;
};

void mount_routes(httplib::Server& server, SessionHost& host);

} // namespace rescue::service
