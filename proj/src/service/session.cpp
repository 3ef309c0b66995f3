#include "rescue/service/session.hpp"

#include "rescue/error.hpp"
#include "rescue/kb/dsl.hpp"
#include "rescue/planner/planner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace rescue::service {

using nlohmann::json;

std::string_view to_string(Status s) { return s == Status::running ? "running" : "paused"; }

// -- events --------------------------------------------------------------------------

void EventBus::publish(json event)
{
    {
        std::lock_guard lock(mutex_);
        event["seq"] = events_.size();
        events_.push_back(std::move(event));
    }
    cv_.notify_all();
}

std::vector<json> EventBus::since(std::size_t from, std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return events_.size() > from; });
    if (events_.size() <= from) {
        return {};
    }
    return {events_.begin() + static_cast<std::ptrdiff_t>(from), events_.end()};
}

std::size_t EventBus::size() const
{
    std::lock_guard lock(mutex_);
    return events_.size();
}

std::vector<json> EventBus::all() const
{
    std::lock_guard lock(mutex_);
    return events_;
}

// -- tree references -------------------------------------------------------------------

kb::TreeLocation resolve_tree_ref(const kb::FrameSet& kb, const std::string& ref)
{
    const auto dot = ref.find('.');
    const std::string frame = ref.substr(0, dot);
    const kb::Frame* f = kb.find(frame);
    if (!f) {
        throw Error(ErrorCode::not_found, "unknown tree '" + ref + "'");
    }
    for (const auto& s : f->slots) {
        if (s.if_needed && (dot == std::string::npos || s.name == ref.substr(dot + 1))) {
            return {frame, s.name};
        }
    }
    throw Error(ErrorCode::not_found, "unknown tree '" + ref + "'");
}

std::string tree_ref(const kb::TreeLocation& where) { return where.frame + "." + where.slot; }

namespace {

json literals_json(const std::vector<rdr::Literal>& literals)
{
    json out = json::array();
    for (const auto& l : literals) {
        out.push_back(l.to_string());
    }
    return out;
}

json entity_json(const sim::Entity& e)
{
    using namespace sim;
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Building>) {
                return {{"kind", "building"},
                        {"id", x.id},
                        {"node", x.node},
                        {"fieryness", std::string(to_string(x.fieryness))},
                        {"scouted", x.scouted}};
            } else if constexpr (std::is_same_v<T, Road>) {
                return {{"kind", "road"},         {"id", x.id},
                        {"from", x.a},            {"to", x.b},
                        {"blocked", x.blocked},   {"requested", x.requested},
                        {"has_civilians", x.has_civilians}};
            } else if constexpr (std::is_same_v<T, Human>) {
                json o = {{"kind", "human"},
                          {"id", x.id},
                          {"type", std::string(to_string(x.type))},
                          {"node", x.node},
                          {"hp", x.hp},
                          {"burial_depth", x.burial_depth}};
                if (x.road) {
                    o["road"] = *x.road;
                }
                return o;
            } else {
                return {{"kind", "agent"},
                        {"id", x.id},
                        {"agent_kind", std::string(to_string(x.kind))},
                        {"node", x.node},
                        {"hp", x.hp},
                        {"burial_depth", x.burial_depth},
                        {"action", x.current_action}};
            }
        },
        e);
}

json goal_json(const reasoner::Goal& g)
{
    json o = {{"id", g.id},
              {"type", std::string(planner::to_string(g.type))},
              {"target", g.target},
              {"mode", std::string(reasoner::to_string(g.mode))},
              {"agent", g.agent ? json(*g.agent) : json()},
              {"created_at", g.created_at},
              {"updated_at", g.updated_at}};
    if (g.plan) {
        json actions = json::array();
        for (const auto& a : g.plan->actions) {
            actions.push_back(a.to_string());
        }
        o["plan"] = {{"cost", g.plan->cost}, {"actions", actions}};
    }
    return o;
}

std::optional<std::pair<std::string, std::string>> parse_pair(const std::string& text)
{
    static const std::regex re(R"(\s*before\(\s*(\w+)\s*,\s*(\w+)\s*\)\s*)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) {
        return std::nullopt;
    }
    return std::make_pair(m[1].str(), m[2].str());
}

std::vector<rdr::Atom> order_vocabulary(const kb::FrameSet& kb, const std::string& frame)
{
    if (const auto* range = kb::find_range(kb, frame, rdr::kGoalA)) {
        return *range;
    }
    std::vector<rdr::Atom> out;
    for (auto t : planner::kGoalTypes) {
        out.emplace_back(reasoner::order_atom(t));
    }
    return out;
}

} // namespace

void check_ruleset(const kb::FrameSet& kb, const reasoner::Schema& schema)
{
    for (const auto& f : kb.frames()) {
        for (const auto& s : f.slots) {
            if (!s.if_needed) {
                continue;
            }
            const auto violations = rdr::verify_cornerstones(*s.if_needed);
            if (!violations.empty()) {
                throw Error(ErrorCode::inconsistent_tree,
                            f.id + "." + s.name + ": cornerstone " + violations[0].cornerstone +
                                " now concludes " + violations[0].actual);
            }
            if (f.id == schema.order_frame && s.name == schema.order_slot) {
                const auto vocab = order_vocabulary(kb, f.id);
                const auto conflicts = rdr::ordering_conflicts(*s.if_needed, vocab);
                if (!conflicts.empty()) {
                    throw Error(ErrorCode::inconsistent_ordering,
                                "ordering conflict between " + conflicts[0].first + " and " +
                                    conflicts[0].second);
                }
                if (auto cycle = rdr::ordering_cycle(*s.if_needed, vocab)) {
                    std::string text;
                    for (const auto& a : *cycle) {
                        text += (text.empty() ? "" : " -> ") + a;
                    }
                    throw Error(ErrorCode::inconsistent_ordering, "ordering cycle " + text);
                }
            }
        }
    }
}

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot read " + path);
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

json UpdateDraft::to_json() const
{
    json cases = json::object();
    for (const auto& [k, v] : request.case_bindings) {
        cases[k] = v;
    }
    json corner = json::object();
    for (const auto& [k, v] : request.cornerstone.bindings) {
        corner[k] = v;
    }
    return {{"id", id},
            {"time", time},
            {"entity", entity},
            {"tree", tree_ref(request.tree)},
            {"current", request.current},
            {"proposed", request.proposed},
            {"fired", rdr::to_string(request.fired)},
            {"case", cases},
            {"cornerstone", {{"id", request.cornerstone.id}, {"bindings", corner}}},
            {"hints", request.hints},
            {"candidates", literals_json(request.candidates)}};
}

json AuditRecord::to_json() const
{
    return {{"time", time},   {"draft", draft},     {"tree", tree},
            {"entity", entity}, {"node", node},     {"case", case_id},
            {"literals", literals_json(literals)}, {"conclusion", conclusion}};
}

json RunReport::to_json() const
{
    return {{"steps", steps},
            {"goals",
             {{"created", created},
              {"by_type", created_by_type},
              {"finished", finished},
              {"dropped", dropped},
              {"active", active}}},
            {"latency_ms", {{"p50", p50_ms}, {"p90", p90_ms}, {"p99", p99_ms}, {"max", max_ms}}}};
}

double percentile(std::vector<double> sample, double p)
{
    if (sample.empty()) {
        return 0;
    }
    std::sort(sample.begin(), sample.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * sample.size()));
    return sample[std::clamp<std::size_t>(rank, 1, sample.size()) - 1];
}

// -- session ---------------------------------------------------------------------------

Session::Session(std::string id, sim::Scenario scenario, kb::FrameSet rules,
                 SessionOptions options)
    : id_(std::move(id)),
      rules_(std::move(rules)),
      pddl_dir_(std::move(options.pddl_dir)),
      period_(options.step_period)
{
    if (!pddl_dir_.empty()) {
        std::filesystem::create_directories(pddl_dir_);
    }
    rules_.validate();
    check_ruleset(rules_, reasoner_.schema());
    sim::WorldState w = sim::initial_state(scenario);
    env_ = w.env;
    history_ = sim::History(std::move(w));
    std::lock_guard lock(mutex_);
    reason_locked();
}

Session::~Session() { stop_runner(); }

void Session::reason_locked()
{
    const sim::WorldState& w = history_.current();
    std::vector<sim::Observation> obs;
    for (const auto& a : w.agents) {
        obs.push_back(sim::observe(w, a.id));
    }
    SessionFrame f;
    f.time = w.time;
    f.belief = sim::merge_belief(frames_.empty() ? sim::Belief{} : frames_.back().belief, obs,
                                 w.time);
    f.tick = reasoner_.tick(f.belief, rules_, *env_, w.roads, w.time);
    f.goals = reasoner_.ledger().without_log();
    f.log_size = reasoner_.ledger().log().size();
    for (const auto& t : f.tick.transitions) {
        json e = t.to_json();
        e["event"] = "goal";
        events_.publish(std::move(e));
    }
    if (!pddl_dir_.empty() && !f.tick.expansions.empty()) {
        const auto graph = planner::RoadGraph::from_belief(*env_, w.roads, f.belief);
        for (const auto& plan : f.tick.expansions) {
            const reasoner::Goal* g = reasoner_.ledger().find(plan.goal_id);
            const planner::GoalSpec spec{g->id, g->type, g->target};
            std::ofstream out(std::filesystem::path(pddl_dir_) /
                              ("t" + std::to_string(w.time) + "_" + g->id + ".pddl"));
            out << planner::emit_pddl_problem(spec, plan.agent, f.belief, graph);
        }
    }
    frames_.push_back(std::move(f));
}

void Session::advance_locked()
{
    sim::StepRecord rec;
    sim::WorldState next = sim::step_world(history_.current(), frames_.back().tick.actions, &rec);
    json e = {{"event", "step"}, {"record", rec.to_json()}};
    history_.record(std::move(next), std::move(rec));
    events_.publish(std::move(e));
    reason_locked();
}

void Session::require_paused(const char* what) const
{
    if (status_ != Status::paused) {
        throw Error(ErrorCode::invalid_state, std::string(what) + " requires a paused session");
    }
}

void Session::stop_runner()
{
    if (runner_.joinable() && runner_.get_id() != std::this_thread::get_id()) {
        runner_.request_stop();
        runner_.join();
    }
}

void Session::step(std::int64_t n)
{
    if (n < 1) {
        throw Error(ErrorCode::out_of_range, "step count must be positive");
    }
    std::lock_guard lock(mutex_);
    require_paused("step");
    for (std::int64_t i = 0; i < n; ++i) {
        advance_locked();
    }
}

void Session::start()
{
    {
        std::lock_guard lock(mutex_);
        if (status_ == Status::running) {
            return;
        }
        status_ = Status::running;
    }
    stop_runner();
    runner_ = std::jthread([this](std::stop_token stop) {
        while (!stop.stop_requested()) {
            std::chrono::milliseconds period;
            {
                std::lock_guard lock(mutex_);
                if (status_ != Status::running) {
                    return;
                }
                advance_locked();
                if (history_.current_time() >= env_->step_budget()) {
                    status_ = Status::paused;
                    events_.publish({{"event", "control"},
                                     {"command", "pause"},
                                     {"status", "paused"},
                                     {"time", history_.current_time()}});
                    return;
                }
                period = period_;
            }
            std::this_thread::sleep_for(period);
        }
    });
}

void Session::pause()
{
    {
        std::lock_guard lock(mutex_);
        status_ = Status::paused;
    }
    stop_runner();
}

void Session::rewind(std::int64_t t)
{
    std::lock_guard lock(mutex_);
    require_paused("rewind");
    if (t < 0 || t > history_.current_time()) {
        throw Error(ErrorCode::out_of_range, "rewind target " + std::to_string(t) +
                                                 " outside [0, " +
                                                 std::to_string(history_.current_time()) + "]");
    }
    std::vector<sim::StepRecord> tail;
    for (const auto& r : history_.log()) {
        if (r.time >= t) {
            tail.push_back(r);
        }
    }
    if (!tail.empty()) {
        archived_.push_back(std::move(tail));
    }
    history_.truncate(t);
    // Frame t is recomputed so the fork continues under the current rules.
    frames_.resize(static_cast<std::size_t>(t));
    if (frames_.empty()) {
        reasoner_ = reasoner::Reasoner(reasoner_.schema());
    } else {
        reasoner_.ledger().restore(frames_.back().goals, frames_.back().log_size);
    }
    reason_locked();
    std::erase_if(drafts_, [&](const auto& kv) { return kv.second.time > t; });
}

nlohmann::json Session::control(const std::string& command, std::optional<std::int64_t> arg)
{
    if (command == "start" || command == "resume") {
        start();
    } else if (command == "pause") {
        pause();
    } else if (command == "step") {
        step(arg.value_or(1));
    } else if (command == "rewind") {
        if (!arg) {
            throw Error(ErrorCode::out_of_range, "rewind needs a target time");
        }
        rewind(*arg);
    } else {
        throw Error(ErrorCode::syntax, "unknown command '" + command + "'");
    }
    json out = {{"status", std::string(to_string(status()))}, {"time", time()}};
    json e = out;
    e["event"] = "control";
    e["command"] = command;
    events_.publish(std::move(e));
    return out;
}

void Session::set_step_period(std::chrono::milliseconds period)
{
    std::lock_guard lock(mutex_);
    period_ = period;
}

Status Session::status() const
{
    std::lock_guard lock(mutex_);
    return status_;
}

std::int64_t Session::time() const
{
    std::lock_guard lock(mutex_);
    return history_.current_time();
}

const SessionFrame& Session::frame_at(std::int64_t t) const
{
    if (t < 0 || t >= static_cast<std::int64_t>(frames_.size())) {
        throw Error(ErrorCode::out_of_range, "time " + std::to_string(t) + " outside [0, " +
                                                 std::to_string(frames_.size() - 1) + "]");
    }
    return frames_[static_cast<std::size_t>(t)];
}

// -- rule updates ------------------------------------------------------------------------

UpdateDraft Session::begin_rule_update(std::int64_t time, const std::string& entity,
                                       const std::string& tree, const rdr::Atom& proposed)
{
    std::lock_guard lock(mutex_);
    require_paused("a rule update");
    const SessionFrame& f = frame_at(time);
    const kb::TreeLocation where = resolve_tree_ref(rules_, tree);
    const reasoner::Schema& schema = reasoner_.schema();

    kb::FrameSet scratch = rules_;
    kb::Frame inst;
    if (where.frame == schema.order_frame) {
        auto pair = parse_pair(entity);
        if (!pair) {
            throw Error(ErrorCode::unknown_entity,
                        "ordering updates name a pair as before(A, B), got '" + entity + "'");
        }
        inst.kind = kb::FrameKind::instance;
        inst.parents = {where.frame};
        inst.slots = {kb::Slot{rdr::kGoalA, {}, pair->first, {}, {}},
                      kb::Slot{rdr::kGoalB, {}, pair->second, {}, {}}};
    } else {
        const sim::BeliefEntry* e = f.belief.find(entity);
        if (!e) {
            throw Error(ErrorCode::unknown_entity,
                        "'" + entity + "' is not in the belief at t=" + std::to_string(time));
        }
        auto made = reasoner::instance_frame(rules_, entity, e->value, schema);
        if (!made) {
            throw Error(ErrorCode::not_found, "no generic frame for '" + entity + "'");
        }
        inst = std::move(*made);
    }
    inst.id = "draft_case";
    scratch.add(std::move(inst));
    const auto seen = kb::find_if_needed(scratch, "draft_case", where.slot);
    if (!seen || seen->frame != where.frame) {
        throw Error(ErrorCode::not_found, "'" + entity + "' is not classified by " + tree);
    }
    kb::SetOutcome out = kb::set_slot_value(scratch, "draft_case", where.slot, proposed);
    if (out.kind == kb::SetOutcome::Kind::unchanged) {
        throw Error(ErrorCode::no_change, tree + " already concludes " + proposed + " for " + entity);
    }
    if (!out.request) {
        throw Error(ErrorCode::not_found, tree + " has no if_replaced daemon");
    }
    UpdateDraft d;
    d.id = "u" + std::to_string(next_draft_++);
    d.time = time;
    d.entity = entity;
    d.request = std::move(*out.request);
    d.request.frame = entity;
    drafts_.emplace(d.id, d);
    return d;
}

AuditRecord Session::commit_rule_update(const std::string& draft,
                                        const std::vector<std::size_t>& literal_indices,
                                        std::string case_id)
{
    std::lock_guard lock(mutex_);
    auto it = drafts_.find(draft);
    if (it == drafts_.end()) {
        throw Error(ErrorCode::not_found, "no draft '" + draft + "'");
    }
    const UpdateDraft& d = it->second;
    if (literal_indices.empty()) {
        throw Error(ErrorCode::empty_selection, "select at least one condition");
    }
    rdr::Condition cond;
    std::set<std::size_t> seen;
    for (std::size_t i : literal_indices) {
        if (i >= d.request.candidates.size()) {
            throw Error(ErrorCode::out_of_range, "no candidate condition " + std::to_string(i));
        }
        if (seen.insert(i).second) {
            cond.literals.push_back(d.request.candidates[i]);
        }
    }
    const reasoner::Schema& schema = reasoner_.schema();
    if (case_id.empty() && d.request.tree.frame == schema.order_frame) {
        case_id = "before(" + d.request.case_bindings.at(rdr::kGoalA) + ", " +
                  d.request.case_bindings.at(rdr::kGoalB) + ")";
    }
    kb::FrameSet scratch = rules_;
    case_id = kb::commit_update(scratch, d.request, cond, case_id, d.time);
    check_ruleset(scratch, schema);

    AuditRecord rec;
    rec.time = history_.current_time();
    rec.draft = d.id;
    rec.tree = tree_ref(d.request.tree);
    rec.entity = d.entity;
    rec.case_id = case_id;
    rec.literals = cond.literals;
    rec.conclusion = d.request.proposed;
    const rdr::Tree& updated = kb::tree_at(scratch, d.request.tree);
    for (const auto& n : updated.nodes()) {
        if (n.node->cornerstone == case_id) {
            rec.node = rdr::to_string(n.path);
        }
    }
    rules_ = std::move(scratch);
    drafts_.erase(it);
    audit_.push_back(rec);
    json e = rec.to_json();
    e["event"] = "rule";
    events_.publish(std::move(e));
    return rec;
}

void Session::discard_update(const std::string& draft)
{
    std::lock_guard lock(mutex_);
    if (drafts_.erase(draft) == 0) {
        throw Error(ErrorCode::not_found, "no draft '" + draft + "'");
    }
}

std::vector<UpdateDraft> Session::drafts() const
{
    std::lock_guard lock(mutex_);
    std::vector<UpdateDraft> out;
    for (const auto& [id, d] : drafts_) {
        out.push_back(d);
    }
    return out;
}

std::vector<AuditRecord> Session::audit() const
{
    std::lock_guard lock(mutex_);
    return audit_;
}

// -- persistence ----------------------------------------------------------------------------

void Session::save_ruleset(const std::string& path) const
{
    std::string text;
    {
        std::lock_guard lock(mutex_);
        text = kb::serialize_kb(rules_);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        throw Error(ErrorCode::io, "cannot write " + path);
    }
}

void Session::load_ruleset(const std::string& path)
{
    kb::FrameSet loaded = kb::parse_frame_source(read_file(path));
    std::lock_guard lock(mutex_);
    check_ruleset(loaded, reasoner_.schema());
    rules_ = std::move(loaded);
    drafts_.clear();
}

kb::FrameSet Session::rules() const
{
    std::lock_guard lock(mutex_);
    return rules_;
}

// -- views ------------------------------------------------------------------------------------

json Session::goals_view(std::optional<std::int64_t> t) const
{
    std::lock_guard lock(mutex_);
    const SessionFrame& f = frame_at(t.value_or(history_.current_time()));
    json goals = json::array();
    std::map<std::string, std::size_t> counts;
    for (const auto& g : f.goals.goals()) {
        goals.push_back(goal_json(g));
        ++counts[std::string(reasoner::to_string(g.mode))];
    }
    return {{"time", f.time}, {"goals", goals}, {"counts", counts}};
}

json Session::tree_view(const std::string& ref) const
{
    std::lock_guard lock(mutex_);
    const kb::TreeLocation where = resolve_tree_ref(rules_, ref);
    const rdr::Tree& tree = kb::tree_at(rules_, where);
    json nodes = json::array();
    for (const auto& n : tree.nodes()) {
        nodes.push_back({{"path", rdr::to_string(n.path)},
                         {"condition", n.node->condition.to_string()},
                         {"conclusion", n.node->conclusion},
                         {"cornerstone", n.node->cornerstone}});
    }
    return {{"tree", tree_ref(where)}, {"text", rdr::format_tree(tree)}, {"nodes", nodes}};
}

json Session::query_state(std::optional<std::int64_t> t) const
{
    const std::int64_t now = time();
    const std::int64_t at = t.value_or(now);
    json goals = goals_view(at);
    std::lock_guard lock(mutex_);
    const SessionFrame& f = frame_at(at);
    json entities = json::array();
    for (const auto& [id, e] : f.belief.entries) {
        json o = entity_json(e.value);
        o["stamp"] = e.stamp;
        entities.push_back(std::move(o));
    }
    json trees = json::array();
    for (const auto& fr : rules_.frames()) {
        for (const auto& s : fr.slots) {
            if (s.if_needed) {
                trees.push_back({{"tree", fr.id + "." + s.name},
                                 {"text", rdr::format_tree(*s.if_needed)}});
            }
        }
    }
    json actions = json::object();
    for (const auto& [agent, a] : f.tick.actions) {
        actions[agent] = a.to_string();
    }
    const auto& tm = f.tick.timing;
    return {{"session", id_},
            {"time", at},
            {"now", now},
            {"status", std::string(to_string(status_))},
            {"belief", entities},
            {"goals", goals["goals"]},
            {"actions", actions},
            {"trees", trees},
            {"timing_ms",
             {{"formulate", tm.formulate_ms},
              {"order", tm.order_ms},
              {"select", tm.select_ms},
              {"advance", tm.advance_ms}}}};
}

RunReport Session::report() const
{
    std::lock_guard lock(mutex_);
    RunReport r;
    r.steps = history_.current_time();
    for (const auto& g : reasoner_.ledger().goals()) {
        ++r.created;
        ++r.created_by_type[std::string(planner::to_string(g.type))];
        if (g.mode == reasoner::Mode::finished) {
            ++r.finished;
        } else if (g.mode == reasoner::Mode::dropped) {
            ++r.dropped;
        } else {
            ++r.active;
        }
    }
    std::vector<double> ms;
    for (const auto& f : frames_) {
        ms.push_back(f.tick.timing.reasoning_ms());
    }
    r.p50_ms = percentile(ms, 50);
    r.p90_ms = percentile(ms, 90);
    r.p99_ms = percentile(ms, 99);
    r.max_ms = ms.empty() ? 0 : *std::max_element(ms.begin(), ms.end());
    return r;
}

std::vector<std::uint64_t> Session::hashes() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::uint64_t> out;
    for (std::int64_t t = 0; t <= history_.current_time(); ++t) {
        out.push_back(sim::state_hash(history_.at(t)));
    }
    return out;
}

sim::WorldState Session::world_at(std::int64_t t) const
{
    std::lock_guard lock(mutex_);
    return history_.rewind(t);
}

std::vector<std::vector<sim::StepRecord>> Session::archived_logs() const
{
    std::lock_guard lock(mutex_);
    return archived_;
}

} // namespace rescue::service
