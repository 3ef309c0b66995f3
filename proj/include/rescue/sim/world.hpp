#pragma once

#include "rescue/sim/entities.hpp"
#include "rescue/sim/scenario.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace rescue::sim {

struct WorldState {
    std::shared_ptr<const Environment> env;
    std::int64_t time = 0;
    std::vector<Building> buildings;
    std::vector<Road> roads;
    std::vector<Human> humans;
    std::vector<Agent> agents;
    std::mt19937_64 rng;

    const Building* building(const std::string& id) const;
    const Road* road(const std::string& id) const;
    const Human* human(const std::string& id) const;
    const Agent* agent(const std::string& id) const;

    std::size_t entity_count() const
    {
        return buildings.size() + roads.size() + humans.size() + agents.size();
    }
    EntityCounts counts() const;

    /// Same environment pointer, same dynamic content and generator state.
    friend bool operator==(const WorldState& a, const WorldState& b);
};

WorldState initial_state(const Scenario& s);
/// Validates and builds the time-0 world.
WorldState load_scenario(const nlohmann::json& config);

struct Rejection {
    std::string agent;
    Action action;
    std::string reason;
};

struct StepRecord {
    std::int64_t time = 0; // time of the state the actions were applied to
    std::vector<std::pair<std::string, Action>> executed;
    std::vector<Rejection> rejected;
    std::uint64_t hash = 0; // of the successor state

    nlohmann::json to_json() const;
};

WorldState step_world(const WorldState& state, const ActionMap& actions,
                      StepRecord* record = nullptr);

/// FNV-1a over a canonical encoding of every dynamic field and the generator.
std::uint64_t state_hash(const WorldState& s);

// -- sensing ------------------------------------------------------------------

struct Observation {
    std::string agent;
    std::int64_t time = 0;
    std::vector<Entity> entities;
};

/// Entities whose node is within `hops` of the agent; a road is seen when
/// either endpoint is. Uses the scenario sensor radius when hops < 0.
Observation observe(const WorldState& state, const std::string& agent, int hops = -1);

struct BeliefEntry {
    Entity value;
    std::int64_t stamp = 0;
};

struct Belief {
    std::map<std::string, BeliefEntry> entries;

    const BeliefEntry* find(const std::string& id) const;

    template <class T>
    const T* get(const std::string& id) const
    {
        const BeliefEntry* e = find(id);
        return e ? std::get_if<T>(&e->value) : nullptr;
    }
    template <class T>
    std::vector<const T*> all() const
    {
        std::vector<const T*> out;
        for (const auto& [id, e] : entries) {
            if (const T* p = std::get_if<T>(&e.value)) {
                out.push_back(p);
            }
        }
        return out;
    }
};

/// Last writer wins per entity; observations are stamped with their own time.
Belief merge_belief(const Belief& prior, const std::vector<Observation>& observations,
                    std::int64_t t);

/// Every entity as it is, stamped with the world time.
Belief full_belief(const WorldState& w);

// -- history --------------------------------------------------------------------

class History {
public:
    History() = default;
    explicit History(WorldState initial);

    void record(WorldState next, StepRecord step);
    const WorldState& current() const { return snapshots_.back(); }
    std::int64_t current_time() const { return current().time; }
    const WorldState& at(std::int64_t t) const;
    /// Copy of the snapshot at t; throws out_of_range when t is not recorded.
    WorldState rewind(std::int64_t t) const;
    /// Drops everything after t so the timeline can fork from there.
    void truncate(std::int64_t t);
    const std::vector<StepRecord>& log() const { return log_; }
    std::size_t size() const { return snapshots_.size(); }
    bool empty() const { return snapshots_.empty(); }

private:
    std::size_t index_of(std::int64_t t) const;

    std::vector<WorldState> snapshots_;
    std::vector<StepRecord> log_;
};

/// Replays a logged action schedule from `from`.
WorldState replay(const WorldState& from, const std::vector<StepRecord>& log,
                  std::int64_t until);

} // namespace rescue::sim
