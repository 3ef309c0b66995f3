#pragma once

// Small hand-built worlds and random action schedules for simulator tests.

#include "rescue/sim/world.hpp"

#include <random>
#include <string>
#include <vector>

namespace worlds {

using namespace rescue::sim;

/// n nodes in a line, one road between each consecutive pair.
inline Scenario line_city(int n)
{
    Scenario s;
    s.name = "line";
    for (int i = 0; i < n; ++i) {
        s.nodes.push_back({"n" + std::to_string(i), 10.0 * i, 0});
    }
    for (int i = 0; i + 1 < n; ++i) {
        s.roads.push_back({"r" + std::to_string(i), "n" + std::to_string(i),
                           "n" + std::to_string(i + 1), 1, false, false, false});
    }
    return s;
}

inline Dynamics calm()
{
    Dynamics d;
    d.spread_probability = 0.0;
    return d;
}

/// Some plausible action per agent: a random neighbour move or an action on
/// something at its node. Not guaranteed legal.
inline ActionMap random_actions(const WorldState& w, std::mt19937_64& rng)
{
    ActionMap out;
    const Environment& env = *w.env;
    for (const auto& a : w.agents) {
        const int roll = static_cast<int>(rng() % 10);
        if (roll < 4) {
            const auto& inc = env.incident(env.node_index(a.node));
            if (!inc.empty()) {
                out[a.id] = Action::move({env.nodes()[inc[rng() % inc.size()].neighbour].id});
            }
            continue;
        }
        std::vector<Action> options;
        for (const auto& b : w.buildings) {
            if (b.node == a.node) {
                options.push_back(Action::on(Action::Kind::douse, b.id));
                options.push_back(Action::on(Action::Kind::scout, b.id));
            }
        }
        for (const auto& h : w.humans) {
            if (h.node == a.node) {
                options.push_back(Action::on(Action::Kind::unbury, h.id));
            }
        }
        for (const auto& r : w.roads) {
            if (r.a == a.node || r.b == a.node) {
                options.push_back(Action::on(Action::Kind::clear, r.id));
                options.push_back(Action::on(Action::Kind::request, r.id));
            }
        }
        if (!options.empty()) {
            out[a.id] = options[rng() % options.size()];
        }
    }
    return out;
}

/// Random connected scenario with fires, burials and blockages.
inline Scenario random_city(std::mt19937_64& rng)
{
    CitySpec spec;
    spec.name = "random";
    spec.counts = {3 + rng() % 8, 2 + rng() % 6, 5 + rng() % 20, 8 + rng() % 30};
    spec.initial_fires = 1 + rng() % 4;
    spec.blocked_fraction = 0.2;
    Dynamics d;
    d.fire_escalation_interval = 1 + static_cast<int>(rng() % 6);
    d.spread_probability = 0.3;
    d.sensor_radius = static_cast<int>(rng() % 4);
    d.agent_speed = 1 + static_cast<int>(rng() % 2);
    d.burial_decay = 1 + static_cast<int>(rng() % 3);
    return synthesize_city(spec, rng(), d);
}

} // namespace worlds
