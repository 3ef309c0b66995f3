#pragma once

// Trainer session: a world with its full history, the command centre's
// belief and goal ledger per step, the rules KB, and the two-phase rule
// update workflow. Every public member is serialized by one session mutex.

#include "rescue/kb/frame.hpp"
#include "rescue/reasoner/goals.hpp"
#include "rescue/sim/world.hpp"

#include "json.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace rescue::service {

enum class Status { paused, running };
std::string_view to_string(Status s);

/// Append-only event sequence with blocking reads for stream consumers.
class EventBus {
public:
    void publish(nlohmann::json event);
    /// Events from sequence number `from` on; waits up to `timeout` when
    /// there are none yet.
    std::vector<nlohmann::json> since(std::size_t from, std::chrono::milliseconds timeout) const;
    std::size_t size() const;
    std::vector<nlohmann::json> all() const;

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<nlohmann::json> events_;
};

/// "building", "building.goal", "goal_order" ...
kb::TreeLocation resolve_tree_ref(const kb::FrameSet& kb, const std::string& ref);
std::string tree_ref(const kb::TreeLocation& where);

struct UpdateDraft {
    std::string id;
    std::int64_t time = 0;
    std::string entity;
    kb::UpdateRequest request;

    nlohmann::json to_json() const;
};

struct AuditRecord {
    std::int64_t time = 0; // session time at commit
    std::string draft;
    std::string tree;
    std::string entity;
    std::string node; // path of the new rule
    std::string case_id;
    std::vector<rdr::Literal> literals;
    rdr::Atom conclusion;

    nlohmann::json to_json() const;
};

/// Command-centre state after the reasoner ran at `time`.
struct SessionFrame {
    std::int64_t time = 0;
    sim::Belief belief;
    reasoner::GoalLedger goals; // without log
    std::size_t log_size = 0;
    reasoner::TickResult tick;
};

struct RunReport {
    std::int64_t steps = 0;
    std::map<std::string, std::size_t> created_by_type;
    std::size_t created = 0;
    std::size_t finished = 0;
    std::size_t dropped = 0;
    std::size_t active = 0;
    // Per-step formulate+order+select time, milliseconds.
    double p50_ms = 0;
    double p90_ms = 0;
    double p99_ms = 0;
    double max_ms = 0;

    nlohmann::json to_json() const;
};

/// Throws inconsistent_tree when a tree loses a cornerstone and
/// inconsistent_ordering when the ordering tree has a conflict or a cycle.
void check_ruleset(const kb::FrameSet& kb, const reasoner::Schema& schema = {});

/// Nearest-rank percentile; 0 for an empty sample.
double percentile(std::vector<double> sample, double p);

struct SessionOptions {
    /// When set, every plan expansion also writes its PDDL problem there.
    std::string pddl_dir;
    /// Delay between steps while running.
    std::chrono::milliseconds step_period{100};
};

class Session {
public:
    Session(std::string id, sim::Scenario scenario, kb::FrameSet rules,
            SessionOptions options = {});
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const { return id_; }

    // -- control --------------------------------------------------------------------
    /// start | pause | resume | step(arg=n, default 1) | rewind(arg=t).
    nlohmann::json control(const std::string& command, std::optional<std::int64_t> arg = {});
    void step(std::int64_t n = 1);
    void start();
    void pause();
    void rewind(std::int64_t t);
    /// Delay between steps while running.
    void set_step_period(std::chrono::milliseconds period);

    Status status() const;
    std::int64_t time() const;

    // -- rule updates -----------------------------------------------------------------
    /// Entity trees take a belief entity id; the ordering tree takes
    /// `before(A, B)`. Throws no_change when `proposed` is the current output.
    UpdateDraft begin_rule_update(std::int64_t time, const std::string& entity,
                                  const std::string& tree, const rdr::Atom& proposed);
    /// Applies the chosen candidate literals; rolls back on any consistency
    /// failure and keeps the draft so another choice can be tried.
    /// An empty `case_id` gets the tree's next generated id.
    AuditRecord commit_rule_update(const std::string& draft,
                                   const std::vector<std::size_t>& literal_indices,
                                   std::string case_id = {});
    void discard_update(const std::string& draft);
    std::vector<UpdateDraft> drafts() const;
    std::vector<AuditRecord> audit() const;

    // -- persistence ------------------------------------------------------------------
    void save_ruleset(const std::string& path) const;
    /// Replaces the KB only when the file parses and every tree passes the
    /// cornerstone and ordering checks.
    void load_ruleset(const std::string& path);
    kb::FrameSet rules() const;

    // -- views --------------------------------------------------------------------------
    /// Belief, goals, trees and timing at `t` (default: now).
    nlohmann::json query_state(std::optional<std::int64_t> t = {}) const;
    nlohmann::json goals_view(std::optional<std::int64_t> t = {}) const;
    nlohmann::json tree_view(const std::string& ref) const;
    RunReport report() const;

    /// Snapshot hash per recorded step, index = time.
    std::vector<std::uint64_t> hashes() const;
    sim::WorldState world_at(std::int64_t t) const;
    std::vector<std::vector<sim::StepRecord>> archived_logs() const;

    EventBus& events() { return events_; }
    const EventBus& events() const { return events_; }

private:
    void reason_locked(); // runs the reasoner for the current world time
    void advance_locked();
    void require_paused(const char* what) const;
    void stop_runner();
    const SessionFrame& frame_at(std::int64_t t) const;

    std::string id_;
    mutable std::mutex mutex_;
    std::shared_ptr<const sim::Environment> env_;
    sim::History history_;
    std::vector<SessionFrame> frames_;
    std::vector<std::vector<sim::StepRecord>> archived_;
    kb::FrameSet rules_;
    reasoner::Reasoner reasoner_;
    Status status_ = Status::paused;
    std::map<std::string, UpdateDraft> drafts_;
    std::size_t next_draft_ = 1;
    std::vector<AuditRecord> audit_;
    EventBus events_;
    std::string pddl_dir_;
    std::chrono::milliseconds period_;
    std::jthread runner_;
};

} // namespace rescue::service
