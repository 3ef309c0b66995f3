#pragma once

#include "rescue/sim/world.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rescue::planner {

enum class GoalType : std::uint8_t { unbury, douse, unblock, scout };

inline constexpr GoalType kGoalTypes[] = {GoalType::unbury, GoalType::douse, GoalType::unblock,
                                          GoalType::scout};

std::string_view to_string(GoalType t);
std::optional<GoalType> parse_goal_type(std::string_view s);

/// What a planner needs to know about a goal.
struct GoalSpec {
    std::string id;
    GoalType type = GoalType::scout;
    std::string target;
};

struct Edge {
    std::string id;
    std::string a;
    std::string b;
    std::int64_t length = 1;
    bool blocked = false;
};

class RoadGraph {
public:
    void add_node(const std::string& id);
    void add_edge(Edge e);

    /// Static topology from the environment, blocked flags as the command
    /// centre believes them. Roads never observed are assumed open.
    static RoadGraph from_belief(const sim::Environment& env, const std::vector<sim::Road>& roads,
                                 const sim::Belief& belief);
    /// Ground-truth topology.
    static RoadGraph from_world(const sim::WorldState& w);

    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    bool has_node(const std::string& id) const { return index_.contains(id); }
    std::size_t index(const std::string& id) const { return index_.at(id); }
    /// Edge indices incident to a node index.
    const std::vector<std::size_t>& incident(std::size_t node) const { return incident_[node]; }
    const Edge* find_edge(const std::string& id) const;

private:
    std::vector<std::string> nodes_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Edge> edges_;
    std::unordered_map<std::string, std::size_t> edge_index_;
    std::vector<std::vector<std::size_t>> incident_;
};

struct Route {
    std::vector<std::string> nodes; // from ... to, inclusive
    std::vector<std::string> edges;
    std::int64_t cost = 0;
};

/// Cheapest path; among equal-cost paths the lexicographically smallest
/// node sequence. Throws unknown_entity for unknown nodes.
std::optional<Route> plan_route(const RoadGraph& g, const std::string& from, const std::string& to,
                                bool traverse_blocked = false);

struct Plan {
    std::string goal_id;
    std::string agent;
    std::vector<sim::Action> actions;
    std::int64_t cost = 0;
    Route route;
};

/// Where an agent must stand for a goal, and how many terminal actions it
/// takes from the believed target state.
struct TargetSite {
    std::vector<std::string> nodes; // candidate standing nodes
    sim::Action::Kind action = sim::Action::Kind::rest;
    int repetitions = 0;
};

std::optional<TargetSite> target_site(const GoalSpec& goal, const sim::Belief& belief);

/// Route plus repeated terminal action; nullopt when no route exists or the
/// target or agent is unknown to the belief.
std::optional<Plan> build_plan(const GoalSpec& goal, const std::string& agent,
                               const sim::Belief& belief, const RoadGraph& graph);

// -- PDDL ------------------------------------------------------------------------

/// Fixed STRIPS domain for a goal type.
std::string_view domain_pddl(GoalType t);
std::string domain_name(GoalType t);

struct PddlProblem {
    std::string name;
    std::string domain;
    std::vector<std::pair<std::string, std::string>> objects; // name, type
    std::vector<std::string> init;                            // "(pred a b)"
    std::vector<std::string> goal;

    std::string to_string() const;
};

/// PDDL-safe rendering of an identifier.
std::string pddl_name(std::string_view id);

PddlProblem make_pddl_problem(const GoalSpec& goal, const std::string& agent,
                              const sim::Belief& belief, const RoadGraph& graph);
std::string emit_pddl_problem(const GoalSpec& goal, const std::string& agent,
                              const sim::Belief& belief, const RoadGraph& graph);

/// Breadth-first search over a typed STRIPS domain/problem pair. Returns the
/// ground action sequence, or nullopt when the goal is unreachable within
/// `max_states`. Throws syntax errors on malformed input.
std::optional<std::vector<std::string>> solve_strips(std::string_view domain,
                                                     std::string_view problem,
                                                     std::size_t max_states = 1'000'000);

} // namespace rescue::planner
