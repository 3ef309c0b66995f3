#pragma once

// Goal lifecycle over the command centre's belief.
//
//   FORMULATED -> SELECTED -> EXPANDED -> COMMITTED -> DISPATCHED -> FINISHED
//
// plus loop-backs: DISPATCHED -> EXPANDED when the plan fails, any active
// mode -> DEFERRED when no plan exists, DEFERRED -> FORMULATED when one does,
// SELECTED..DISPATCHED -> FORMULATED on preemption or loss of the agent, and
// any active mode -> DROPPED.

#include "rescue/kb/frame.hpp"
#include "rescue/planner/planner.hpp"
#include "rescue/sim/world.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace rescue::reasoner {

using planner::GoalType;

enum class Mode : std::uint8_t {
    formulated,
    selected,
    expanded,
    committed,
    dispatched,
    finished,
    dropped,
    deferred
};

std::string_view to_string(Mode m);
bool is_active(Mode m);
/// Holds an agent: SELECTED through DISPATCHED.
bool is_assigned(Mode m);
bool allowed_transition(std::optional<Mode> from, Mode to);

/// unbury -> ambulance, unblock -> police, douse -> fire brigade, scout -> any.
bool capable(GoalType type, sim::AgentKind kind);
/// Atom used for the goal in ordering rules: rescueGoal, clearGoal, ...
std::string_view order_atom(GoalType type);
std::optional<GoalType> goal_type_of_atom(std::string_view atom);

struct Goal {
    std::string id;
    GoalType type = GoalType::scout;
    std::string target;
    Mode mode = Mode::formulated;
    std::optional<std::string> agent;
    std::optional<planner::Plan> plan;
    std::int64_t created_at = 0;
    std::int64_t updated_at = 0;

    std::string label() const; // "douse(building_3)"
};

struct Transition {
    std::int64_t time = 0;
    std::string goal;
    std::optional<Mode> from; // empty on creation
    Mode to = Mode::formulated;
    std::string reason;

    nlohmann::json to_json() const;
};

class GoalLedger {
public:
    /// Adds a FORMULATED goal with a fresh id; no-op returning nullptr when an
    /// active goal with the same (type, target) exists.
    const Goal* admit(GoalType type, const std::string& target, std::int64_t time);
    /// Throws invalid_state for an edge outside the lifecycle graph.
    void transition(Goal& g, Mode to, std::int64_t time, std::string reason);

    bool has_active(GoalType type, const std::string& target) const;
    const std::vector<Goal>& goals() const { return goals_; }
    std::vector<Goal>& goals() { return goals_; }
    const Goal* find(const std::string& id) const;
    Goal* find(const std::string& id);
    const std::vector<Transition>& log() const { return log_; }
    std::size_t created() const { return goals_.size(); }
    /// Goal the agent currently holds, if any.
    Goal* held_by(const std::string& agent);

    /// Copy without the transition log, for per-step snapshots.
    GoalLedger without_log() const;
    /// Takes goals from `snapshot` and cuts the log back to `log_size` entries.
    void restore(const GoalLedger& snapshot, std::size_t log_size);

private:
    std::vector<Goal> goals_;
    std::vector<Transition> log_;
    std::set<std::pair<GoalType, std::string>> active_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// -- rules KB ------------------------------------------------------------------------

/// Frame and slot names the reasoner reads from the rules KB.
struct Schema {
    std::string building = "building";
    std::string road = "road";
    std::string human = "human";
    std::string goal_slot = "goal";
    std::string order_frame = "goal_order";
    std::string order_slot = "before";
};

/// Slot values of an entity as the rules see them.
rdr::Bindings entity_case(const sim::Entity& e);

/// Instance frame for one entity under its generic frame, carrying the
/// slots that frame declares; nullopt when the rules lack the generic frame.
std::optional<kb::Frame> instance_frame(const kb::FrameSet& rules, const std::string& id,
                                        const sim::Entity& e, const Schema& schema = {});

/// Rules KB plus one instance frame per believed entity.
kb::FrameSet mirror_belief(const kb::FrameSet& rules, const sim::Belief& belief,
                           const Schema& schema = {});

/// Candidate goals (id empty, mode FORMULATED) from the mirrored KB: every
/// entity whose goal slot resolves to something other than `none`, minus
/// targets that are dead or destroyed and (type, target) pairs already active.
std::vector<Goal> formulate_goals(const sim::Belief& belief, const kb::FrameSet& mirrored,
                                  const GoalLedger& ledger, std::int64_t time,
                                  const Schema& schema = {});

/// The ordering tree of the rules KB, if present.
const rdr::Tree* order_tree(const kb::FrameSet& rules, const Schema& schema = {});

/// before[a][b] for the four goal types.
using OrderMatrix = std::array<std::array<bool, 4>, 4>;
OrderMatrix order_matrix(const rdr::Tree* tree);

/// Stable: a goal is placed once every goal whose type must precede it is
/// placed; among the placeable, input order wins.
std::vector<const Goal*> order_goals(const std::vector<const Goal*>& goals, const OrderMatrix& m);

// -- goal conditions -------------------------------------------------------------------

/// Target condition met according to the belief.
bool condition_met(const Goal& g, const sim::Belief& belief);
/// Target dead or destroyed.
bool target_lost(const Goal& g, const sim::Belief& belief);

// -- the reasoner ----------------------------------------------------------------------

struct Assignment {
    std::string goal;
    std::string agent;
    std::optional<std::string> preempted; // goal displaced from the agent
};

struct TickTiming {
    double formulate_ms = 0;
    double order_ms = 0;
    double select_ms = 0;
    double advance_ms = 0;
    double reasoning_ms() const { return formulate_ms + order_ms + select_ms; }
};

struct TickResult {
    sim::ActionMap actions;
    std::vector<Assignment> assignments;
    std::vector<Transition> transitions;
    std::vector<planner::Plan> expansions; // every plan produced this tick
    TickTiming timing;
};

class Reasoner {
public:
    explicit Reasoner(Schema schema = {}) : schema_(std::move(schema)) {}

    /// One full cycle for step `time`: evaluate, formulate, order, select,
    /// expand/commit/dispatch. Returns the agents' actions for this step.
    TickResult tick(const sim::Belief& belief, const kb::FrameSet& rules,
                    const sim::Environment& env, const std::vector<sim::Road>& roads,
                    std::int64_t time);

    const GoalLedger& ledger() const { return ledger_; }
    GoalLedger& ledger() { return ledger_; }
    const Schema& schema() const { return schema_; }

private:
    Schema schema_;
    GoalLedger ledger_;
};

/// Greedy selection over an ordered goal list; exposed for tests.
std::vector<Assignment> select_and_assign(GoalLedger& ledger,
                                          const std::vector<const Goal*>& ordered,
                                          const sim::Belief& belief,
                                          const planner::RoadGraph& graph, const OrderMatrix& m,
                                          std::int64_t time);

} // namespace rescue::reasoner
