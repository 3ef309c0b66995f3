#include "rescue/sim/world.hpp"

#include "rescue/error.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace rescue::sim {

using nlohmann::json;

// -- world state ------------------------------------------------------------------

namespace {

template <class T>
const T* lookup(const WorldState& w, const std::string& id, EntityType type,
                const std::vector<T>& items)
{
    if (!w.env) {
        return nullptr;
    }
    auto ref = w.env->find(id);
    if (!ref || ref->type != type) {
        return nullptr;
    }
    return &items[ref->index];
}

} // namespace

const Building* WorldState::building(const std::string& id) const
{
    return lookup(*this, id, EntityType::building, buildings);
}
const Road* WorldState::road(const std::string& id) const
{
    return lookup(*this, id, EntityType::road, roads);
}
const Human* WorldState::human(const std::string& id) const
{
    return lookup(*this, id, EntityType::human, humans);
}
const Agent* WorldState::agent(const std::string& id) const
{
    return lookup(*this, id, EntityType::agent, agents);
}

EntityCounts WorldState::counts() const
{
    return {humans.size(), agents.size(), buildings.size(), roads.size()};
}

bool operator==(const WorldState& a, const WorldState& b)
{
    return a.env == b.env && a.time == b.time && a.buildings == b.buildings &&
           a.roads == b.roads && a.humans == b.humans && a.agents == b.agents && a.rng == b.rng;
}

namespace {

void refresh_trapped(WorldState& w)
{
    for (auto& r : w.roads) {
        r.has_civilians = false;
    }
    for (const auto& h : w.humans) {
        if (h.road && h.type == HumanType::civilian && !h.dead() && h.buried()) {
            auto ref = w.env->find(*h.road);
            w.roads[ref->index].has_civilians = true;
        }
    }
}

} // namespace

WorldState initial_state(const Scenario& s)
{
    validate(s);
    WorldState w;
    w.env = std::make_shared<const Environment>(s);
    w.buildings = s.buildings;
    w.roads = s.roads;
    w.humans = s.humans;
    for (auto& h : w.humans) {
        h.type = HumanType::civilian;
    }
    w.agents = s.agents;
    w.rng.seed(s.seed);
    refresh_trapped(w);
    return w;
}

WorldState load_scenario(const json& config)
{
    return initial_state(scenario_from_json(config));
}

json StepRecord::to_json() const
{
    json exec = json::array();
    for (const auto& [agent, action] : executed) {
        exec.push_back({{"agent", agent}, {"action", action.to_string()}});
    }
    json rej = json::array();
    for (const auto& r : rejected) {
        rej.push_back({{"agent", r.agent}, {"action", r.action.to_string()}, {"reason", r.reason}});
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
    return {{"time", time}, {"executed", exec}, {"rejected", rej}, {"hash", hex}};
}

// -- dynamics ---------------------------------------------------------------------

namespace {

struct Stepper {
    WorldState& w;
    const Environment& env;
    StepRecord& rec;
    std::vector<bool> doused;

    Building* building(const std::string& id)
    {
        auto ref = env.find(id);
        return ref && ref->type == EntityType::building ? &w.buildings[ref->index] : nullptr;
    }
    Road* road(const std::string& id)
    {
        auto ref = env.find(id);
        return ref && ref->type == EntityType::road ? &w.roads[ref->index] : nullptr;
    }
    // Humans and agents share burial and health.
    struct Body {
        std::string* node;
        int* hp;
        int* depth;
    };
    std::optional<Body> body(const std::string& id)
    {
        auto ref = env.find(id);
        if (ref && ref->type == EntityType::human) {
            Human& h = w.humans[ref->index];
            return Body{&h.node, &h.hp, &h.burial_depth};
        }
        if (ref && ref->type == EntityType::agent) {
            Agent& a = w.agents[ref->index];
            return Body{&a.node, &a.hp, &a.burial_depth};
        }
        return std::nullopt;
    }

    void reject(const std::string& agent, const Action& action, std::string reason)
    {
        rec.rejected.push_back({agent, action, std::move(reason)});
    }

    void scheduled_events()
    {
        for (const auto& e : env.events()) {
            if (e.time != w.time) {
                continue;
            }
            switch (e.kind) {
            case ScheduledEvent::Kind::block_road:
                road(e.target)->blocked = true;
                break;
            case ScheduledEvent::Kind::ignite:
                if (Building* b = building(e.target); b->fieryness == Fieryness::none) {
                    b->fieryness = Fieryness::heating;
                    b->fire_timer = 0;
                }
                break;
            case ScheduledEvent::Kind::bury:
                if (auto b = body(e.target); *b->hp > 0) {
                    *b->depth += e.amount;
                }
                break;
            }
        }
    }

    // Returns an empty string when legal.
    std::string check_move(const Agent& a, const Action& act) const
    {
        if (act.path.empty()) {
            return "empty path";
        }
        if (static_cast<int>(act.path.size()) > env.dynamics().agent_speed) {
            return "path longer than agent speed";
        }
        std::string at = a.node;
        for (const auto& next : act.path) {
            if (!env.has_node(next)) {
                return "unknown node " + next;
            }
            const std::size_t u = env.node_index(at);
            const std::size_t v = env.node_index(next);
            bool open = false;
            bool linked = false;
            for (const auto& inc : env.incident(u)) {
                if (inc.neighbour == v) {
                    linked = true;
                    open = open || !w.roads[inc.road].blocked;
                }
            }
            if (!linked) {
                return "no road " + at + "-" + next;
            }
            if (!open) {
                return "road " + at + "-" + next + " is blocked";
            }
            at = next;
        }
        return {};
    }

    std::string check_terminal(const Agent& a, const Action& act)
    {
        using K = Action::Kind;
        switch (act.kind) {
        case K::douse: {
            if (a.kind != AgentKind::fire_brigade) {
                return "only fire brigades douse";
            }
            const Building* b = building(act.target);
            if (!b) {
                return "unknown building " + act.target;
            }
            if (b->node != a.node) {
                return "not at building";
            }
            if (!is_burning(b->fieryness)) {
                return "building is not on fire";
            }
            return {};
        }
        case K::unbury: {
            if (a.kind != AgentKind::ambulance) {
                return "only ambulances unbury";
            }
            auto b = body(act.target);
            if (!b || act.target == a.id) {
                return "unknown human " + act.target;
            }
            if (*b->node != a.node) {
                return "not at human";
            }
            if (*b->hp <= 0) {
                return "human is dead";
            }
            if (*b->depth <= 0) {
                return "human is not buried";
            }
            return {};
        }
        case K::clear: {
            if (a.kind != AgentKind::police) {
                return "only police clear";
            }
            const Road* r = road(act.target);
            if (!r) {
                return "unknown road " + act.target;
            }
            if (r->a != a.node && r->b != a.node) {
                return "not at road";
            }
            if (!r->blocked) {
                return "road is not blocked";
            }
            return {};
        }
        case K::scout: {
            const Building* b = building(act.target);
            if (!b) {
                return "unknown building " + act.target;
            }
            if (b->node != a.node) {
                return "not at building";
            }
            if (b->fieryness == Fieryness::destroyed) {
                return "building is destroyed";
            }
            return {};
        }
        case K::request: {
            const Road* r = road(act.target);
            if (!r) {
                return "unknown road " + act.target;
            }
            if (!r->blocked) {
                return "road is not blocked";
            }
            return {};
        }
        default:
            return "not a terminal action";
        }
    }

    void apply_terminal(const Action& act)
    {
        using K = Action::Kind;
        switch (act.kind) {
        case K::douse: {
            auto ref = env.find(act.target);
            Building& b = w.buildings[ref->index];
            // One ladder level per step however many brigades pour water on it.
            if (!doused[ref->index]) {
                b.fieryness = static_cast<Fieryness>(static_cast<int>(b.fieryness) - 1);
                b.fire_timer = 0;
                doused[ref->index] = true;
            }
            break;
        }
        case K::unbury:
            *body(act.target)->depth -= 1;
            break;
        case K::clear: {
            Road* r = road(act.target);
            r->blocked = false;
            r->requested = false;
            break;
        }
        case K::scout:
            building(act.target)->scouted = true;
            break;
        case K::request:
            road(act.target)->requested = true;
            break;
        default:
            break;
        }
    }

    void agent_actions(const ActionMap& actions)
    {
        for (auto& a : w.agents) {
            a.current_action = "rest";
        }
        std::vector<std::pair<Agent*, const Action*>> terminal;
        for (const auto& [id, act] : actions) {
            auto ref = env.find(id);
            if (!ref || ref->type != EntityType::agent) {
                reject(id, act, "unknown agent");
                continue;
            }
            Agent& a = w.agents[ref->index];
            if (act.kind == Action::Kind::rest) {
                rec.executed.emplace_back(id, act);
                continue;
            }
            if (a.dead()) {
                reject(id, act, "agent is dead");
                continue;
            }
            if (a.buried()) {
                reject(id, act, "agent is buried");
                continue;
            }
            if (act.kind != Action::Kind::move) {
                terminal.emplace_back(&a, &act);
                continue;
            }
            if (std::string why = check_move(a, act); !why.empty()) {
                reject(id, act, why);
                continue;
            }
            a.node = act.path.back();
            a.current_action = act.to_string();
            rec.executed.emplace_back(id, act);
        }
        for (auto [a, act] : terminal) {
            if (std::string why = check_terminal(*a, *act); !why.empty()) {
                reject(a->id, *act, why);
                continue;
            }
            apply_terminal(*act);
            a->current_action = act->to_string();
            rec.executed.emplace_back(a->id, *act);
        }
    }

    void fire()
    {
        const Dynamics& d = env.dynamics();
        for (std::size_t i = 0; i < w.buildings.size(); ++i) {
            Building& b = w.buildings[i];
            if (!is_burning(b.fieryness) || doused[i]) {
                continue;
            }
            if (++b.fire_timer >= d.fire_escalation_interval) {
                b.fieryness = static_cast<Fieryness>(static_cast<int>(b.fieryness) + 1);
                b.fire_timer = 0;
            }
        }
        if (d.spread_probability <= 0.0) {
            return;
        }
        std::vector<std::size_t> ignited;
        for (std::size_t i = 0; i < w.buildings.size(); ++i) {
            const Fieryness f = w.buildings[i].fieryness;
            if (f != Fieryness::burning && f != Fieryness::inferno) {
                continue;
            }
            for (std::size_t j : env.spread_targets(i)) {
                if (w.buildings[j].fieryness != Fieryness::none) {
                    continue;
                }
                const double u = static_cast<double>(w.rng() >> 11) * 0x1.0p-53;
                if (u < d.spread_probability) {
                    ignited.push_back(j);
                }
            }
        }
        for (std::size_t j : ignited) {
            w.buildings[j].fieryness = Fieryness::heating;
            w.buildings[j].fire_timer = 0;
        }
    }

    void burial_decay()
    {
        const int decay = env.dynamics().burial_decay;
        auto hurt = [decay](int& hp, int depth) {
            if (depth > 0 && hp > 0) {
                hp = std::max(0, hp - decay);
            }
        };
        for (auto& h : w.humans) {
            hurt(h.hp, h.burial_depth);
        }
        for (auto& a : w.agents) {
            hurt(a.hp, a.burial_depth);
        }
    }
};

} // namespace

WorldState step_world(const WorldState& state, const ActionMap& actions, StepRecord* record)
{
    if (!state.env) {
        throw Error(ErrorCode::invalid_state, "world has no environment");
    }
    WorldState next = state;
    StepRecord local;
    StepRecord& rec = record ? *record : local;
    rec = StepRecord{};
    rec.time = state.time;

    Stepper s{next, *state.env, rec, std::vector<bool>(next.buildings.size(), false)};
    s.scheduled_events();
    s.agent_actions(actions);
    s.fire();
    s.burial_decay();
    next.time = state.time + 1;
    refresh_trapped(next);
    rec.hash = state_hash(next);
    return next;
}

std::uint64_t state_hash(const WorldState& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto bytes = [&h](const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto num = [&](std::int64_t v) { bytes(&v, sizeof v); };
    auto str = [&](const std::string& v) {
        num(static_cast<std::int64_t>(v.size()));
        bytes(v.data(), v.size());
    };
    num(s.time);
    for (const auto& b : s.buildings) {
        str(b.id);
        num(static_cast<int>(b.fieryness));
        num(b.scouted);
        num(b.fire_timer);
    }
    for (const auto& r : s.roads) {
        str(r.id);
        num(r.blocked);
        num(r.requested);
        num(r.has_civilians);
    }
    for (const auto& x : s.humans) {
        str(x.id);
        str(x.node);
        num(x.hp);
        num(x.burial_depth);
    }
    for (const auto& a : s.agents) {
        str(a.id);
        str(a.node);
        num(a.hp);
        num(a.burial_depth);
        str(a.current_action);
    }
    std::ostringstream rng;
    rng << s.rng;
    str(rng.str());
    return h;
}

// -- sensing ------------------------------------------------------------------------

Observation observe(const WorldState& state, const std::string& agent, int hops)
{
    const Agent* a = state.agent(agent);
    if (!a) {
        throw Error(ErrorCode::unknown_agent, "unknown agent '" + agent + "'");
    }
    const Environment& env = *state.env;
    const auto seen = env.within_hops(env.node_index(a->node),
                                      hops < 0 ? env.dynamics().sensor_radius : hops);
    auto visible = [&](const std::string& node) { return seen[env.node_index(node)]; };

    Observation obs{agent, state.time, {}};
    for (const auto& b : state.buildings) {
        if (visible(b.node)) {
            obs.entities.emplace_back(b);
        }
    }
    for (const auto& r : state.roads) {
        if (visible(r.a) || visible(r.b)) {
            obs.entities.emplace_back(r);
        }
    }
    for (const auto& h : state.humans) {
        if (visible(h.node)) {
            obs.entities.emplace_back(h);
        }
    }
    for (const auto& x : state.agents) {
        if (visible(x.node)) {
            obs.entities.emplace_back(x);
        }
    }
    return obs;
}

const BeliefEntry* Belief::find(const std::string& id) const
{
    auto it = entries.find(id);
    return it == entries.end() ? nullptr : &it->second;
}

Belief merge_belief(const Belief& prior, const std::vector<Observation>& observations,
                    std::int64_t t)
{
    Belief out = prior;
    for (const auto& obs : observations) {
        if (obs.time > t) {
            throw Error(ErrorCode::invalid_state, "observation from the future");
        }
        for (const auto& e : obs.entities) {
            auto [it, fresh] = out.entries.try_emplace(entity_id(e), BeliefEntry{e, obs.time});
            if (!fresh && obs.time >= it->second.stamp) {
                it->second = BeliefEntry{e, obs.time};
            }
        }
    }
    return out;
}

Belief full_belief(const WorldState& w)
{
    Belief b;
    auto put = [&](const auto& items) {
        for (const auto& x : items) {
            b.entries.insert_or_assign(x.id, BeliefEntry{x, w.time});
        }
    };
    put(w.buildings);
    put(w.roads);
    put(w.humans);
    put(w.agents);
    return b;
}

// -- history ------------------------------------------------------------------------

History::History(WorldState initial) { snapshots_.push_back(std::move(initial)); }

void History::record(WorldState next, StepRecord step)
{
    if (snapshots_.empty() || next.time != current_time() + 1) {
        throw Error(ErrorCode::invalid_state, "history must grow one step at a time");
    }
    snapshots_.push_back(std::move(next));
    log_.push_back(std::move(step));
}

std::size_t History::index_of(std::int64_t t) const
{
    if (snapshots_.empty() || t < snapshots_.front().time || t > current_time()) {
        throw Error(ErrorCode::out_of_range, "step " + std::to_string(t) + " is not recorded");
    }
    return static_cast<std::size_t>(t - snapshots_.front().time);
}

const WorldState& History::at(std::int64_t t) const { return snapshots_[index_of(t)]; }

WorldState History::rewind(std::int64_t t) const { return at(t); }

void History::truncate(std::int64_t t)
{
    const std::size_t i = index_of(t);
    snapshots_.resize(i + 1);
    log_.resize(i);
}

WorldState replay(const WorldState& from, const std::vector<StepRecord>& log, std::int64_t until)
{
    WorldState w = from;
    for (const auto& rec : log) {
        if (rec.time < w.time) {
            continue;
        }
        if (rec.time >= until) {
            break;
        }
        if (rec.time != w.time) {
            throw Error(ErrorCode::invalid_state, "gap in the action log");
        }
        ActionMap actions;
        for (const auto& [agent, act] : rec.executed) {
            actions.emplace(agent, act);
        }
        for (const auto& r : rec.rejected) {
            actions.emplace(r.agent, r.action);
        }
        w = step_world(w, actions);
    }
    return w;
}

} // namespace rescue::sim
