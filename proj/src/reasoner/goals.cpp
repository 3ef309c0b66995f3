#include "rescue/reasoner/goals.hpp"

#include "rescue/error.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <numeric>

namespace rescue::reasoner {

namespace {

constexpr std::string_view kModeNames[] = {"FORMULATED", "SELECTED",  "EXPANDED", "COMMITTED",
                                           "DISPATCHED", "FINISHED", "DROPPED",  "DEFERRED"};
constexpr std::string_view kOrderAtoms[] = {"rescueGoal", "douseGoal", "clearGoal", "scoutGoal"};

std::size_t idx(GoalType t) { return static_cast<std::size_t>(t); }

const char* yes_no(bool b) { return b ? "yes" : "no"; }

double ms_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

std::string_view to_string(Mode m) { return kModeNames[static_cast<std::size_t>(m)]; }

bool is_active(Mode m) { return m != Mode::finished && m != Mode::dropped; }

bool is_assigned(Mode m)
{
    return m == Mode::selected || m == Mode::expanded || m == Mode::committed ||
           m == Mode::dispatched;
}

bool allowed_transition(std::optional<Mode> from, Mode to)
{
    if (!from) {
        return to == Mode::formulated;
    }
    using M = Mode;
    const M f = *from;
    if (!is_active(f) || f == to) {
        return false;
    }
    if (to == M::dropped) {
        return true;
    }
    switch (f) {
    case M::formulated:
        return to == M::selected || to == M::deferred;
    case M::selected:
        return to == M::expanded || to == M::formulated || to == M::deferred;
    case M::expanded:
        return to == M::committed || to == M::formulated || to == M::deferred;
    case M::committed:
        return to == M::dispatched || to == M::formulated || to == M::deferred;
    case M::dispatched:
        return to == M::finished || to == M::expanded || to == M::formulated || to == M::deferred;
    case M::deferred:
        return to == M::formulated;
    default:
        return false;
    }
}

bool capable(GoalType type, sim::AgentKind kind)
{
    switch (type) {
    case GoalType::unbury:
        return kind == sim::AgentKind::ambulance;
    case GoalType::unblock:
        return kind == sim::AgentKind::police;
    case GoalType::douse:
        return kind == sim::AgentKind::fire_brigade;
    case GoalType::scout:
        return true;
    }
    return false;
}

std::string_view order_atom(GoalType type) { return kOrderAtoms[idx(type)]; }

std::optional<GoalType> goal_type_of_atom(std::string_view atom)
{
    for (GoalType t : planner::kGoalTypes) {
        if (order_atom(t) == atom) {
            return t;
        }
    }
    return std::nullopt;
}

std::string Goal::label() const
{
    return std::string(planner::to_string(type)) + "(" + target + ")";
}

nlohmann::json Transition::to_json() const
{
    return {{"time", time},
            {"goal", goal},
            {"from", from ? nlohmann::json(std::string(to_string(*from))) : nlohmann::json()},
            {"to", std::string(to_string(to))},
            {"reason", reason}};
}

// -- ledger ------------------------------------------------------------------------------

const Goal* GoalLedger::admit(GoalType type, const std::string& target, std::int64_t time)
{
    if (!active_.emplace(type, target).second) {
        return nullptr;
    }
    Goal g;
    g.id = "g" + std::to_string(goals_.size() + 1);
    g.type = type;
    g.target = target;
    g.created_at = time;
    g.updated_at = time;
    by_id_.emplace(g.id, goals_.size());
    log_.push_back({time, g.id, std::nullopt, Mode::formulated, "formulated"});
    goals_.push_back(std::move(g));
    return &goals_.back();
}

void GoalLedger::transition(Goal& g, Mode to, std::int64_t time, std::string reason)
{
    if (!allowed_transition(g.mode, to)) {
        throw Error(ErrorCode::invalid_state, "illegal goal transition " +
                                                  std::string(to_string(g.mode)) + " -> " +
                                                  std::string(to_string(to)) + " for " + g.id);
    }
    log_.push_back({time, g.id, g.mode, to, std::move(reason)});
    g.mode = to;
    g.updated_at = time;
    if (!is_assigned(to)) {
        g.agent.reset();
        g.plan.reset();
    }
    if (!is_active(to)) {
        active_.erase({g.type, g.target});
    }
}

bool GoalLedger::has_active(GoalType type, const std::string& target) const
{
    return active_.contains({type, target});
}

const Goal* GoalLedger::find(const std::string& id) const
{
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &goals_[it->second];
}

Goal* GoalLedger::find(const std::string& id)
{
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &goals_[it->second];
}

Goal* GoalLedger::held_by(const std::string& agent)
{
    for (auto& g : goals_) {
        if (is_assigned(g.mode) && g.agent == agent) {
            return &g;
        }
    }
    return nullptr;
}

GoalLedger GoalLedger::without_log() const
{
    GoalLedger out;
    out.goals_ = goals_;
    out.active_ = active_;
    out.by_id_ = by_id_;
    return out;
}

void GoalLedger::restore(const GoalLedger& snapshot, std::size_t log_size)
{
    goals_ = snapshot.goals_;
    active_ = snapshot.active_;
    by_id_ = snapshot.by_id_;
    log_.resize(std::min(log_size, log_.size()));
}

// -- rules KB --------------------------------------------------------------------------

rdr::Bindings entity_case(const sim::Entity& e)
{
    using namespace sim;
    return std::visit(
        [](const auto& x) -> rdr::Bindings {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Building>) {
                return {{"fieryness", std::string(to_string(x.fieryness))},
                        {"scouted", yes_no(x.scouted)}};
            } else if constexpr (std::is_same_v<T, Road>) {
                return {{"blocked", yes_no(x.blocked)},
                        {"requested", yes_no(x.requested)},
                        {"has_civilians", yes_no(x.has_civilians)}};
            } else if constexpr (std::is_same_v<T, Human>) {
                return {{"type", std::string(to_string(x.type))},
                        {"buriedness", x.buried() ? "buried" : "non_buried"},
                        {"health", std::string(to_string(health_of(x.hp)))}};
            } else {
                return {{"type", "agent"},
                        {"buriedness", x.buried() ? "buried" : "non_buried"},
                        {"health", std::string(to_string(health_of(x.hp)))}};
            }
        },
        e);
}

namespace {

const std::string& generic_for(const sim::Entity& e, const Schema& s)
{
    switch (e.index()) {
    case 0:
        return s.building;
    case 1:
        return s.road;
    default:
        return s.human;
    }
}

} // namespace

std::optional<kb::Frame> instance_frame(const kb::FrameSet& rules, const std::string& id,
                                        const sim::Entity& e, const Schema& schema)
{
    const std::string& parent = generic_for(e, schema);
    if (!rules.contains(parent)) {
        return std::nullopt;
    }
    kb::Frame f;
    f.id = id;
    f.kind = kb::FrameKind::instance;
    f.parents = {parent};
    for (auto& [slot, value] : entity_case(e)) {
        if (kb::is_declared(rules, parent, slot)) {
            f.slots.push_back(kb::Slot{slot, {}, value, {}, {}});
        }
    }
    return f;
}

kb::FrameSet mirror_belief(const kb::FrameSet& rules, const sim::Belief& belief,
                           const Schema& schema)
{
    kb::FrameSet out = rules;
    for (const auto& [id, entry] : belief.entries) {
        if (out.contains(id)) {
            continue;
        }
        if (auto f = instance_frame(rules, id, entry.value, schema)) {
            out.add(std::move(*f));
        }
    }
    return out;
}

bool target_lost(const Goal& g, const sim::Belief& belief)
{
    const sim::BeliefEntry* e = belief.find(g.target);
    if (!e) {
        return false;
    }
    if (const auto* b = std::get_if<sim::Building>(&e->value)) {
        return b->fieryness == sim::Fieryness::destroyed;
    }
    if (const auto* h = std::get_if<sim::Human>(&e->value)) {
        return h->dead();
    }
    if (const auto* a = std::get_if<sim::Agent>(&e->value)) {
        return a->dead();
    }
    return false;
}

bool condition_met(const Goal& g, const sim::Belief& belief)
{
    switch (g.type) {
    case GoalType::douse:
        if (const auto* b = belief.get<sim::Building>(g.target)) {
            return b->fieryness == sim::Fieryness::none;
        }
        break;
    case GoalType::scout:
        if (const auto* b = belief.get<sim::Building>(g.target)) {
            return b->scouted;
        }
        break;
    case GoalType::unblock:
        if (const auto* r = belief.get<sim::Road>(g.target)) {
            return !r->blocked;
        }
        break;
    case GoalType::unbury:
        if (const auto* h = belief.get<sim::Human>(g.target)) {
            return h->burial_depth == 0;
        }
        if (const auto* a = belief.get<sim::Agent>(g.target)) {
            return a->burial_depth == 0;
        }
        break;
    }
    return false;
}

std::vector<Goal> formulate_goals(const sim::Belief& belief, const kb::FrameSet& mirrored,
                                  const GoalLedger& ledger, std::int64_t time,
                                  const Schema& schema)
{
    std::vector<Goal> out;
    for (const auto& [id, entry] : belief.entries) {
        const kb::Frame* f = mirrored.find(id);
        if (!f || f->kind != kb::FrameKind::instance ||
            !kb::is_declared(mirrored, id, schema.goal_slot)) {
            continue;
        }
        rdr::Atom conclusion;
        try {
            conclusion = kb::resolve_slot(mirrored, id, schema.goal_slot);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::value_unavailable) {
                continue;
            }
            throw;
        }
        auto type = planner::parse_goal_type(conclusion);
        if (!type) {
            continue;
        }
        Goal g;
        g.type = *type;
        g.target = id;
        g.created_at = time;
        g.updated_at = time;
        if (target_lost(g, belief) || ledger.has_active(g.type, g.target)) {
            continue;
        }
        out.push_back(std::move(g));
    }
    return out;
}

const rdr::Tree* order_tree(const kb::FrameSet& rules, const Schema& schema)
{
    if (!rules.contains(schema.order_frame)) {
        return nullptr;
    }
    auto where = kb::find_if_needed(rules, schema.order_frame, schema.order_slot);
    return where ? &kb::tree_at(rules, *where) : nullptr;
}

OrderMatrix order_matrix(const rdr::Tree* tree)
{
    OrderMatrix m{};
    if (!tree) {
        return m;
    }
    for (GoalType a : planner::kGoalTypes) {
        for (GoalType b : planner::kGoalTypes) {
            m[idx(a)][idx(b)] =
                rdr::evaluate_order(*tree, std::string(order_atom(a)), std::string(order_atom(b)));
        }
    }
    return m;
}

std::vector<const Goal*> order_goals(const std::vector<const Goal*>& goals, const OrderMatrix& m)
{
    // One queue per type keeps this linear in the number of goals.
    std::array<std::deque<std::size_t>, 4> queues;
    for (std::size_t i = 0; i < goals.size(); ++i) {
        queues[idx(goals[i]->type)].push_back(i);
    }
    std::vector<const Goal*> out;
    out.reserve(goals.size());
    while (out.size() < goals.size()) {
        std::optional<std::size_t> pick;
        std::optional<std::size_t> fallback;
        for (std::size_t t = 0; t < 4; ++t) {
            if (queues[t].empty()) {
                continue;
            }
            const std::size_t head = queues[t].front();
            if (!fallback || head < *fallback) {
                fallback = head;
            }
            bool blocked = false;
            for (std::size_t u = 0; u < 4 && !blocked; ++u) {
                blocked = u != t && m[u][t] && !queues[u].empty();
            }
            if (!blocked && (!pick || head < *pick)) {
                pick = head;
            }
        }
        // A precedence cycle cannot pass rule commit; keep input order if one slips in.
        const std::size_t i = pick ? *pick : *fallback;
        out.push_back(goals[i]);
        queues[idx(goals[i]->type)].pop_front();
    }
    return out;
}

// -- selection -------------------------------------------------------------------------

namespace {

struct Reach {
    std::vector<std::size_t> component; // per node index

    static Reach of(const planner::RoadGraph& g)
    {
        std::vector<std::size_t> parent(g.nodes().size());
        std::iota(parent.begin(), parent.end(), 0);
        auto root = [&](std::size_t v) {
            while (parent[v] != v) {
                v = parent[v] = parent[parent[v]];
            }
            return v;
        };
        for (const auto& e : g.edges()) {
            if (!e.blocked) {
                parent[root(g.index(e.a))] = root(g.index(e.b));
            }
        }
        Reach r;
        r.component.resize(parent.size());
        for (std::size_t v = 0; v < parent.size(); ++v) {
            r.component[v] = root(v);
        }
        return r;
    }
};

/// Nodes an agent may stand on to work on the goal.
std::vector<std::string> site_nodes(const Goal& g, const sim::Belief& belief)
{
    auto site = planner::target_site({g.id, g.type, g.target}, belief);
    return site ? site->nodes : std::vector<std::string>{};
}

/// Hop distance from the nearest site node over believed-open roads.
std::vector<int> hops_from(const planner::RoadGraph& g, const std::vector<std::string>& sources)
{
    std::vector<int> dist(g.nodes().size(), -1);
    std::deque<std::size_t> q;
    for (const auto& s : sources) {
        if (g.has_node(s) && dist[g.index(s)] < 0) {
            dist[g.index(s)] = 0;
            q.push_back(g.index(s));
        }
    }
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop_front();
        for (std::size_t ei : g.incident(u)) {
            const planner::Edge& e = g.edges()[ei];
            if (e.blocked) {
                continue;
            }
            const std::size_t v = g.index(e.a) == u ? g.index(e.b) : g.index(e.a);
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    return dist;
}

std::vector<const sim::Agent*> roster(const sim::Belief& belief)
{
    std::vector<const sim::Agent*> out;
    for (const sim::Agent* a : belief.all<sim::Agent>()) {
        if (a->can_act()) {
            out.push_back(a);
        }
    }
    return out;
}

bool reachable(const Goal& g, const sim::Belief& belief, const planner::RoadGraph& graph,
               const Reach& reach, const std::vector<const sim::Agent*>& agents)
{
    const auto nodes = site_nodes(g, belief);
    for (const sim::Agent* a : agents) {
        if (!capable(g.type, a->kind) || !graph.has_node(a->node)) {
            continue;
        }
        for (const auto& n : nodes) {
            if (graph.has_node(n) &&
                reach.component[graph.index(n)] == reach.component[graph.index(a->node)]) {
                return true;
            }
        }
    }
    return false;
}

} // namespace

std::vector<Assignment> select_and_assign(GoalLedger& ledger,
                                          const std::vector<const Goal*>& ordered,
                                          const sim::Belief& belief,
                                          const planner::RoadGraph& graph, const OrderMatrix& m,
                                          std::int64_t time)
{
    std::vector<Assignment> out;
    const auto agents = roster(belief);
    const Reach reach = Reach::of(graph);

    std::unordered_map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        rank.emplace(ordered[i]->id, i);
    }
    std::unordered_map<std::string, Goal*> holding; // agent -> goal
    for (auto& g : ledger.goals()) {
        if (is_assigned(g.mode) && g.agent) {
            holding[*g.agent] = &g;
        }
    }
    for (const Goal* cg : ordered) {
        Goal* g = ledger.find(cg->id);
        if (g->mode != Mode::formulated) {
            continue;
        }
        std::vector<const sim::Agent*> free;
        std::vector<const sim::Agent*> victims;
        for (const sim::Agent* a : agents) {
            if (!capable(g->type, a->kind)) {
                continue;
            }
            auto it = holding.find(a->id);
            if (it == holding.end()) {
                free.push_back(a);
            } else if (m[idx(g->type)][idx(it->second->type)]) {
                victims.push_back(a);
            }
        }
        if (free.empty() && victims.empty()) {
            continue;
        }
        const auto dist = hops_from(graph, site_nodes(*g, belief));
        auto hops = [&](const sim::Agent* a) {
            return graph.has_node(a->node) ? dist[graph.index(a->node)] : -1;
        };

        const sim::Agent* chosen = nullptr;
        for (const sim::Agent* a : free) {
            const int d = hops(a);
            if (d >= 0 && (!chosen || d < hops(chosen) || (d == hops(chosen) && a->id < chosen->id))) {
                chosen = a;
            }
        }
        std::optional<std::string> displaced;
        if (!chosen) {
            // Lowest-ordered reachable victim; ties by agent id.
            for (const sim::Agent* a : victims) {
                if (hops(a) < 0) {
                    continue;
                }
                if (!chosen) {
                    chosen = a;
                    continue;
                }
                const std::size_t ra = rank.count(holding[a->id]->id) ? rank[holding[a->id]->id] : 0;
                const std::size_t rc =
                    rank.count(holding[chosen->id]->id) ? rank[holding[chosen->id]->id] : 0;
                if (ra > rc || (ra == rc && a->id < chosen->id)) {
                    chosen = a;
                }
            }
            if (chosen) {
                Goal* victim = holding[chosen->id];
                displaced = victim->id;
                ledger.transition(*victim, Mode::formulated, time, "preempted by " + g->id);
                holding.erase(chosen->id);
            }
        }
        if (!chosen) {
            if (!reachable(*g, belief, graph, reach, agents)) {
                ledger.transition(*g, Mode::deferred, time, "no capable agent can reach the target");
            }
            continue;
        }
        g->agent = chosen->id;
        ledger.transition(*g, Mode::selected, time, "assigned to " + chosen->id);
        holding[chosen->id] = g;
        out.push_back({g->id, chosen->id, displaced});
    }
    return out;
}

// -- the cycle ----------------------------------------------------------------------------

namespace {

/// Next action of a dispatched goal given where the belief puts its agent.
/// Sets `obstruction` when a remaining road on the route is believed blocked.
std::optional<sim::Action> next_action(const Goal& g, const sim::Agent& agent,
                                       const sim::Belief& belief, const planner::RoadGraph& graph,
                                       std::optional<std::string>& obstruction)
{
    const planner::Plan& plan = *g.plan;
    const auto& nodes = plan.route.nodes;
    auto at = std::find(nodes.begin(), nodes.end(), agent.node);
    if (at == nodes.end()) {
        return std::nullopt;
    }
    const std::size_t pos = static_cast<std::size_t>(at - nodes.begin());
    for (std::size_t i = pos; i < plan.route.edges.size(); ++i) {
        const planner::Edge* e = graph.find_edge(plan.route.edges[i]);
        if (e && e->blocked) {
            obstruction = e->id;
            return std::nullopt;
        }
    }
    if (pos + 1 < nodes.size()) {
        return sim::Action::move({nodes[pos + 1]});
    }
    auto site = planner::target_site({g.id, g.type, g.target}, belief);
    if (!site || site->action == sim::Action::Kind::rest) {
        return std::nullopt;
    }
    return sim::Action::on(site->action, g.target);
}

} // namespace

TickResult Reasoner::tick(const sim::Belief& belief, const kb::FrameSet& rules,
                          const sim::Environment& env, const std::vector<sim::Road>& roads,
                          std::int64_t time)
{
    using clock = std::chrono::steady_clock;
    TickResult result;
    const std::size_t log_mark = ledger_.log().size();
    const planner::RoadGraph graph = planner::RoadGraph::from_belief(env, roads, belief);

    auto agent_ok = [&](const std::string& id) {
        const auto* a = belief.get<sim::Agent>(id);
        return a && a->can_act();
    };

    // EVALUATE everything still open.
    const auto agents = roster(belief);
    const Reach reach = Reach::of(graph);
    for (auto& g : ledger_.goals()) {
        if (!is_active(g.mode)) {
            continue;
        }
        if (target_lost(g, belief)) {
            ledger_.transition(g, Mode::dropped, time, "target dead or destroyed");
        } else if (condition_met(g, belief)) {
            if (g.mode == Mode::dispatched) {
                ledger_.transition(g, Mode::finished, time, "goal condition met");
            } else {
                ledger_.transition(g, Mode::dropped, time, "condition met before dispatch");
            }
        } else if (is_assigned(g.mode) && !(g.agent && agent_ok(*g.agent))) {
            ledger_.transition(g, Mode::formulated, time, "agent lost");
        } else if (g.mode == Mode::deferred && reachable(g, belief, graph, reach, agents)) {
            ledger_.transition(g, Mode::formulated, time, "plan may exist again");
        }
    }

    // FORMULATE
    auto t0 = clock::now();
    const kb::FrameSet mirrored = mirror_belief(rules, belief, schema_);
    for (const Goal& g : formulate_goals(belief, mirrored, ledger_, time, schema_)) {
        ledger_.admit(g.type, g.target, time);
    }
    result.timing.formulate_ms = ms_since(t0);

    // ORDER the open goals.
    t0 = clock::now();
    const OrderMatrix m = order_matrix(order_tree(rules, schema_));
    std::vector<const Goal*> open;
    for (const auto& g : ledger_.goals()) {
        if (is_active(g.mode) && g.mode != Mode::deferred) {
            open.push_back(&g);
        }
    }
    const auto ordered = order_goals(open, m);
    result.timing.order_ms = ms_since(t0);

    // SELECT
    t0 = clock::now();
    result.assignments = select_and_assign(ledger_, ordered, belief, graph, m, time);
    result.timing.select_ms = ms_since(t0);

    // EXPAND, COMMIT, DISPATCH
    t0 = clock::now();
    for (auto& g : ledger_.goals()) {
        if (!is_assigned(g.mode)) {
            continue;
        }
        const sim::Agent* agent = belief.get<sim::Agent>(*g.agent);
        auto expand = [&]() -> bool {
            auto plan = planner::build_plan({g.id, g.type, g.target}, *g.agent, belief, graph);
            if (!plan) {
                ledger_.transition(g, Mode::deferred, time, "no plan");
                return false;
            }
            result.expansions.push_back(*plan);
            g.plan = std::move(plan);
            if (g.mode != Mode::expanded) {
                ledger_.transition(g, Mode::expanded, time, "1 plan");
            }
            ledger_.transition(g, Mode::committed, time, "cheapest expansion");
            ledger_.transition(g, Mode::dispatched, time, "dispatched to " + *g.agent);
            return true;
        };
        if (g.mode == Mode::selected || g.mode == Mode::expanded) {
            if (!expand()) {
                continue;
            }
        } else if (g.mode == Mode::committed) {
            ledger_.transition(g, Mode::dispatched, time, "dispatched to " + *g.agent);
        }
        std::optional<std::string> obstruction;
        auto act = next_action(g, *agent, belief, graph, obstruction);
        if (obstruction) {
            result.actions[*g.agent] = sim::Action::on(sim::Action::Kind::request, *obstruction);
            ledger_.transition(g, Mode::expanded, time, "route blocked at " + *obstruction);
            g.plan.reset();
            continue;
        }
        if (!act) {
            // Off the planned route: plan again from here.
            ledger_.transition(g, Mode::expanded, time, "agent off route");
            if (!expand()) {
                continue;
            }
            act = next_action(g, *agent, belief, graph, obstruction);
        }
        if (act) {
            result.actions[*g.agent] = *act;
        }
    }
    result.timing.advance_ms = ms_since(t0);

    result.transitions.assign(ledger_.log().begin() + static_cast<std::ptrdiff_t>(log_mark),
                              ledger_.log().end());
    return result;
}

} // namespace rescue::reasoner
