#pragma once

// Scenario description: the static city map, dynamics parameters, scripted
// exogenous events, and the initial entity states.
//
// JSON layout (see README for the full schema):
//   { "name": ..., "seed": N,
//     "map": { "nodes": [{id, x, y}], "roads": [{id, from, to, length, blocked}] },
//     "entities": { "buildings": [...], "humans": [...], "agents": [...] },
//     "dynamics": { fire_escalation_interval, spread_probability, spread_radius,
//                   burial_decay, sensor_radius, agent_speed },
//     "limits": { "steps": N },
//     "events": [{ "time": t, "kind": "block_road"|"ignite"|"bury", "target": id, "amount": n }] }

#include "rescue/sim/entities.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace rescue::sim {

struct MapNode {
    std::string id;
    double x = 0;
    double y = 0;
};

struct Dynamics {
    int fire_escalation_interval = 20;
    double spread_probability = 0.05;
    int spread_radius = 1;
    int burial_decay = 1;
    int sensor_radius = 2;
    int agent_speed = 1;
};

struct ScheduledEvent {
    enum class Kind : std::uint8_t { block_road, ignite, bury };
    std::int64_t time = 0;
    Kind kind = Kind::block_road;
    std::string target;
    int amount = 1; // bury: added burial depth
};

struct EntityCounts {
    std::size_t civilians = 0;
    std::size_t agents = 0;
    std::size_t buildings = 0;
    std::size_t roads = 0;

    friend bool operator==(const EntityCounts&, const EntityCounts&) = default;
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 1;
    std::int64_t steps = 300;
    Dynamics dynamics;
    std::vector<MapNode> nodes;
    std::vector<Building> buildings;
    std::vector<Road> roads;
    std::vector<Human> humans;
    std::vector<Agent> agents;
    std::vector<ScheduledEvent> events;

    EntityCounts counts() const;
};

/// Throws Error(invalid_scenario) on dangling references, duplicate ids or
/// out-of-range parameters, naming the offending entity.
void validate(const Scenario& s);

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario_file(const std::filesystem::path& path);
void save_scenario_file(const Scenario& s, const std::filesystem::path& path);

enum class EntityType : std::uint8_t { building, road, human, agent };

struct EntityRef {
    EntityType type;
    std::size_t index;
};

/// Immutable part of a running world, shared by every snapshot.
class Environment {
public:
    explicit Environment(const Scenario& s);

    const std::string& name() const { return name_; }
    const Dynamics& dynamics() const { return dynamics_; }
    const std::vector<MapNode>& nodes() const { return nodes_; }
    bool has_node(const std::string& id) const { return node_index_.contains(id); }
    std::size_t node_index(const std::string& id) const { return node_index_.at(id); }
    const std::vector<ScheduledEvent>& events() const { return events_; }
    std::int64_t step_budget() const { return steps_; }

    struct Incidence {
        std::size_t neighbour; // node index
        std::size_t road;      // road index
    };
    const std::vector<Incidence>& incident(std::size_t node) const { return adjacency_[node]; }

    std::optional<EntityRef> find(const std::string& id) const;

    /// Node indices within `hops` of `start` over every road, blocked or not.
    std::vector<bool> within_hops(std::size_t start, int hops) const;
    /// Hop distance over every road; -1 if disconnected.
    std::vector<int> hop_distances(std::size_t start) const;

    /// Buildings whose node lies within the spread radius of building i's node.
    const std::vector<std::size_t>& spread_targets(std::size_t building) const
    {
        return spread_targets_[building];
    }

private:
    std::string name_;
    Dynamics dynamics_;
    std::int64_t steps_;
    std::vector<MapNode> nodes_;
    std::unordered_map<std::string, std::size_t> node_index_;
    std::vector<std::vector<Incidence>> adjacency_;
    std::unordered_map<std::string, EntityRef> entities_;
    std::vector<ScheduledEvent> events_;
    std::vector<std::vector<std::size_t>> spread_targets_;
};

// -- synthetic cities ----------------------------------------------------------

struct CitySpec {
    std::string name = "synthetic";
    EntityCounts counts;
    double blocked_fraction = 0.08;
    std::size_t initial_fires = 3;
    double buried_fraction = 0.6;
    double trapped_on_road_fraction = 0.2;
};

/// Test city / Kobe / Montreal entity counts.
CitySpec city_preset(std::string_view name);

/// Grid-like connected road network with exactly the requested counts.
Scenario synthesize_city(const CitySpec& spec, std::uint64_t seed, Dynamics dynamics = {});

} // namespace rescue::sim
