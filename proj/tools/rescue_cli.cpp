#include "rescue/error.hpp"
#include "rescue/kb/dsl.hpp"
#include "rescue/planner/planner.hpp"
#include "rescue/service/server.hpp"
#include "rescue/sim/scenario.hpp"

#include "CLI11.hpp"
#include "httplib.h"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace rescue;
namespace fs = std::filesystem;

namespace {

httplib::Server* g_server = nullptr;

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        throw Error(ErrorCode::io, "cannot write " + path.string());
    }
}

std::size_t rule_count(const kb::FrameSet& kb)
{
    std::size_t n = 0;
    for (const auto& f : kb.frames()) {
        for (const auto& s : f.slots) {
            if (s.if_needed) {
                n += s.if_needed->size();
            }
        }
    }
    return n;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"rescue: goal reasoning over ripple-down rules"};
    app.require_subcommand(1);
    std::string data_dir = RESCUE_DATA_DIR;
    app.add_option("--data", data_dir, "Directory with scenarios/ and rulesets/");

    std::string preset;
    std::uint64_t seed = 1;
    std::string out_path;
    auto* gen = app.add_subcommand("gen-scenario", "Write a synthetic city scenario");
    gen->add_option("preset", preset, "test_city, kobe or montreal")->required();
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("-o,--output", out_path, "Output file (stdout if omitted)");

    std::string scenario = "test_city";
    std::string ruleset = "test_city";
    std::optional<std::uint64_t> run_seed;
    std::int64_t steps = -1;
    std::string report_path;
    std::string events_path;
    std::string pddl_dir;
    auto* run = app.add_subcommand("run", "Run a session headless and write a report");
    run->add_option("--scenario", scenario, "Scenario file, scenario name or city preset");
    run->add_option("--ruleset", ruleset, "Rule file or rule set name");
    run->add_option("--seed", run_seed, "World seed");
    run->add_option("--steps", steps, "Steps to simulate (default: scenario limit)");
    run->add_option("--report", report_path, "Report file (stdout if omitted)");
    run->add_option("--events", events_path, "Event log as NDJSON");
    run->add_option("--emit-pddl", pddl_dir, "Write domains/ and a PDDL problem per plan expansion under problems/");

    int port = 8080;
    std::string host_name = "127.0.0.1";
    int period_ms = 100;
    auto* serve = app.add_subcommand("serve", "Serve the trainer HTTP API");
    serve->add_option("--port", port, "Port");
    serve->add_option("--host", host_name, "Bind address");
    serve->add_option("--period", period_ms, "Milliseconds between steps while running");

    std::string rules_path;
    auto* validate = app.add_subcommand("validate-ruleset", "Check a rule file");
    validate->add_option("file", rules_path, "Rule file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            sim::Scenario s = sim::synthesize_city(sim::city_preset(preset), seed);
            if (out_path.empty()) {
                std::cout << sim::scenario_to_json(s).dump(1) << '\n';
            } else {
                sim::save_scenario_file(s, out_path);
            }
        } else if (*run) {
            auto s = service::resolve_scenario(scenario, run_seed, data_dir);
            const std::int64_t n = steps >= 0 ? steps : s.steps;
            auto rules = service::load_ruleset_file(service::resolve_ruleset(ruleset, data_dir));
            if (!pddl_dir.empty()) {
                for (auto t : planner::kGoalTypes) {
                    write_text(fs::path(pddl_dir) / "domains" / (planner::domain_name(t) + ".pddl"),
                               std::string(planner::domain_pddl(t)));
                }
            }
            service::Session session("run", std::move(s), std::move(rules),
                                     service::SessionOptions{
                                         pddl_dir.empty() ? "" : (fs::path(pddl_dir) / "problems").string()});
            if (n > 0) {
                session.step(n);
            }
            const std::string report = session.report().to_json().dump(2) + "\n";
            if (report_path.empty()) {
                std::cout << report;
            } else {
                write_text(report_path, report);
            }
            if (!events_path.empty()) {
                std::string lines;
                for (const auto& e : session.events().all()) {
                    lines += e.dump() + "\n";
                }
                write_text(events_path, lines);
            }
        } else if (*serve) {
            service::SessionHost host(data_dir, std::chrono::milliseconds(period_ms));
            httplib::Server server;
            service::mount_routes(server, host);
            g_server = &server;
            std::signal(SIGINT, [](int) { g_server->stop(); });
            std::signal(SIGTERM, [](int) { g_server->stop(); });
            std::cerr << "listening on " << host_name << ":" << port << '\n';
            if (!server.listen(host_name, port)) {
                throw Error(ErrorCode::io, "cannot listen on port " + std::to_string(port));
            }
        } else if (*validate) {
            const auto kb = service::load_ruleset_file(rules_path);
            service::check_ruleset(kb);
            std::size_t trees = 0;
            for (const auto& f : kb.frames()) {
                for (const auto& s : f.slots) {
                    trees += s.if_needed ? 1 : 0;
                }
            }
            std::cout << rules_path << ": ok, " << kb.size() << " frames, " << trees << " trees, "
                      << rule_count(kb) << " rules\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
