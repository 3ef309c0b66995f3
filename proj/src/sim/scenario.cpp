#include "rescue/sim/scenario.hpp"

#include "rescue/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace rescue::sim {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& msg)
{
    throw Error(ErrorCode::invalid_scenario, msg);
}

template <class T>
T field(const json& j, const char* key, T fallback)
{
    auto it = j.find(key);
    return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

std::string required_string(const json& j, const char* key, const std::string& where)
{
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        invalid(where + ": missing string field '" + key + "'");
    }
    return it->get<std::string>();
}

const char* event_kind_name(ScheduledEvent::Kind k)
{
    switch (k) {
    case ScheduledEvent::Kind::block_road:
        return "block_road";
    case ScheduledEvent::Kind::ignite:
        return "ignite";
    case ScheduledEvent::Kind::bury:
        return "bury";
    }
    return "?";
}

} // namespace

EntityCounts Scenario::counts() const
{
    return {humans.size(), agents.size(), buildings.size(), roads.size()};
}

void validate(const Scenario& s)
{
    const Dynamics& d = s.dynamics;
    if (d.fire_escalation_interval < 1) {
        invalid("dynamics.fire_escalation_interval must be >= 1");
    }
    if (!(d.spread_probability >= 0.0 && d.spread_probability <= 1.0)) {
        invalid("dynamics.spread_probability must lie in [0, 1]");
    }
    if (d.spread_radius < 0) {
        invalid("dynamics.spread_radius must be >= 0");
    }
    if (d.burial_decay < 0) {
        invalid("dynamics.burial_decay must be >= 0");
    }
    if (d.sensor_radius < 0) {
        invalid("dynamics.sensor_radius must be >= 0");
    }
    if (d.agent_speed < 1) {
        invalid("dynamics.agent_speed must be >= 1");
    }
    if (s.steps < 0) {
        invalid("limits.steps must be >= 0");
    }

    std::set<std::string> nodes;
    for (const auto& n : s.nodes) {
        if (n.id.empty() || !nodes.insert(n.id).second) {
            invalid("duplicate or empty node id '" + n.id + "'");
        }
    }
    std::map<std::string, EntityType> ids;
    auto claim = [&](const std::string& id, EntityType t) {
        if (id.empty()) {
            invalid("entity with empty id");
        }
        if (!ids.emplace(id, t).second) {
            invalid("duplicate entity id '" + id + "'");
        }
    };
    auto need_node = [&](const std::string& id, const std::string& node) {
        if (!nodes.contains(node)) {
            invalid(id + ": unknown node '" + node + "'");
        }
    };
    auto check_hp = [](const std::string& id, int hp, int depth) {
        if (hp < 0 || hp > 100) {
            invalid(id + ": hp out of range [0, 100]");
        }
        if (depth < 0) {
            invalid(id + ": negative burial_depth");
        }
    };

    std::map<std::string, const Road*> roads;
    for (const auto& r : s.roads) {
        claim(r.id, EntityType::road);
        need_node(r.id, r.a);
        need_node(r.id, r.b);
        if (r.a == r.b) {
            invalid(r.id + ": road joins a node to itself");
        }
        if (r.length < 1) {
            invalid(r.id + ": length must be >= 1");
        }
        roads.emplace(r.id, &r);
    }
    for (const auto& b : s.buildings) {
        claim(b.id, EntityType::building);
        need_node(b.id, b.node);
        if (b.fire_timer < 0) {
            invalid(b.id + ": negative fire_timer");
        }
    }
    for (const auto& h : s.humans) {
        claim(h.id, EntityType::human);
        need_node(h.id, h.node);
        check_hp(h.id, h.hp, h.burial_depth);
        if (h.road) {
            auto it = roads.find(*h.road);
            if (it == roads.end()) {
                invalid(h.id + ": unknown road '" + *h.road + "'");
            }
            if (it->second->a != h.node && it->second->b != h.node) {
                invalid(h.id + ": node is not an endpoint of road '" + *h.road + "'");
            }
        }
    }
    for (const auto& a : s.agents) {
        claim(a.id, EntityType::agent);
        need_node(a.id, a.node);
        check_hp(a.id, a.hp, a.burial_depth);
    }
    for (const auto& e : s.events) {
        const std::string where = std::string("event ") + event_kind_name(e.kind) + "@" +
                                  std::to_string(e.time);
        if (e.time < 0) {
            invalid(where + ": negative time");
        }
        auto it = ids.find(e.target);
        if (it == ids.end()) {
            invalid(where + ": unknown target '" + e.target + "'");
        }
        const bool ok = (e.kind == ScheduledEvent::Kind::block_road && it->second == EntityType::road) ||
                        (e.kind == ScheduledEvent::Kind::ignite && it->second == EntityType::building) ||
                        (e.kind == ScheduledEvent::Kind::bury &&
                         (it->second == EntityType::human || it->second == EntityType::agent));
        if (!ok) {
            invalid(where + ": target '" + e.target + "' has the wrong type");
        }
        if (e.amount < 1) {
            invalid(where + ": amount must be >= 1");
        }
    }
}

Scenario scenario_from_json(const json& j)
{
    if (!j.is_object()) {
        invalid("scenario must be a JSON object");
    }
    Scenario s;
    try {
        s.name = field<std::string>(j, "name", "");
        s.seed = field<std::uint64_t>(j, "seed", 1);
        const json map = j.value("map", json::object());
        for (const auto& n : map.value("nodes", json::array())) {
            s.nodes.push_back({required_string(n, "id", "node"), field(n, "x", 0.0), field(n, "y", 0.0)});
        }
        for (const auto& r : map.value("roads", json::array())) {
            Road road;
            road.id = required_string(r, "id", "road");
            road.a = required_string(r, "from", road.id);
            road.b = required_string(r, "to", road.id);
            road.length = field<std::int64_t>(r, "length", 1);
            road.blocked = field(r, "blocked", false);
            road.requested = field(r, "requested", false);
            s.roads.push_back(std::move(road));
        }
        const json ents = j.value("entities", json::object());
        for (const auto& b : ents.value("buildings", json::array())) {
            Building bd;
            bd.id = required_string(b, "id", "building");
            bd.node = required_string(b, "node", bd.id);
            const std::string f = field<std::string>(b, "fieryness", "none");
            auto parsed = parse_fieryness(f);
            if (!parsed) {
                invalid(bd.id + ": unknown fieryness '" + f + "'");
            }
            bd.fieryness = *parsed;
            bd.scouted = field(b, "scouted", false);
            bd.fire_timer = field(b, "fire_timer", 0);
            s.buildings.push_back(std::move(bd));
        }
        for (const auto& h : ents.value("humans", json::array())) {
            Human hu;
            hu.id = required_string(h, "id", "human");
            hu.node = required_string(h, "node", hu.id);
            hu.hp = field(h, "hp", 100);
            hu.burial_depth = field(h, "burial_depth", 0);
            if (h.contains("road") && !h["road"].is_null()) {
                hu.road = h["road"].get<std::string>();
            }
            s.humans.push_back(std::move(hu));
        }
        for (const auto& a : ents.value("agents", json::array())) {
            Agent ag;
            ag.id = required_string(a, "id", "agent");
            const std::string k = required_string(a, "kind", ag.id);
            auto kind = parse_agent_kind(k);
            if (!kind) {
                invalid(ag.id + ": unknown agent kind '" + k + "'");
            }
            ag.kind = *kind;
            ag.node = required_string(a, "node", ag.id);
            ag.hp = field(a, "hp", 100);
            ag.burial_depth = field(a, "burial_depth", 0);
            s.agents.push_back(std::move(ag));
        }
        const json dyn = j.value("dynamics", json::object());
        Dynamics& d = s.dynamics;
        d.fire_escalation_interval = field(dyn, "fire_escalation_interval", d.fire_escalation_interval);
        d.spread_probability = field(dyn, "spread_probability", d.spread_probability);
        d.spread_radius = field(dyn, "spread_radius", d.spread_radius);
        d.burial_decay = field(dyn, "burial_decay", d.burial_decay);
        d.sensor_radius = field(dyn, "sensor_radius", d.sensor_radius);
        d.agent_speed = field(dyn, "agent_speed", d.agent_speed);
        s.steps = field<std::int64_t>(j.value("limits", json::object()), "steps", s.steps);
        for (const auto& e : j.value("events", json::array())) {
            ScheduledEvent ev;
            ev.time = field<std::int64_t>(e, "time", 0);
            const std::string k = required_string(e, "kind", "event");
            if (k == "block_road") {
                ev.kind = ScheduledEvent::Kind::block_road;
            } else if (k == "ignite") {
                ev.kind = ScheduledEvent::Kind::ignite;
            } else if (k == "bury") {
                ev.kind = ScheduledEvent::Kind::bury;
            } else {
                invalid("unknown event kind '" + k + "'");
            }
            ev.target = required_string(e, "target", "event");
            ev.amount = field(e, "amount", 1);
            s.events.push_back(std::move(ev));
        }
    } catch (const json::exception& e) {
        invalid(std::string("malformed scenario: ") + e.what());
    }
    validate(s);
    return s;
}

json scenario_to_json(const Scenario& s)
{
    json nodes = json::array();
    for (const auto& n : s.nodes) {
        nodes.push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
    }
    json roads = json::array();
    for (const auto& r : s.roads) {
        json o = {{"id", r.id}, {"from", r.a}, {"to", r.b}, {"length", r.length}};
        if (r.blocked) {
            o["blocked"] = true;
        }
        if (r.requested) {
            o["requested"] = true;
        }
        roads.push_back(std::move(o));
    }
    json buildings = json::array();
    for (const auto& b : s.buildings) {
        json o = {{"id", b.id}, {"node", b.node}};
        if (b.fieryness != Fieryness::none) {
            o["fieryness"] = std::string(to_string(b.fieryness));
        }
        if (b.scouted) {
            o["scouted"] = true;
        }
        if (b.fire_timer) {
            o["fire_timer"] = b.fire_timer;
        }
        buildings.push_back(std::move(o));
    }
    json humans = json::array();
    for (const auto& h : s.humans) {
        json o = {{"id", h.id}, {"node", h.node}, {"hp", h.hp}, {"burial_depth", h.burial_depth}};
        if (h.road) {
            o["road"] = *h.road;
        }
        humans.push_back(std::move(o));
    }
    json agents = json::array();
    for (const auto& a : s.agents) {
        agents.push_back({{"id", a.id},
                          {"kind", std::string(to_string(a.kind))},
                          {"node", a.node},
                          {"hp", a.hp},
                          {"burial_depth", a.burial_depth}});
    }
    json events = json::array();
    for (const auto& e : s.events) {
        events.push_back({{"time", e.time},
                          {"kind", event_kind_name(e.kind)},
                          {"target", e.target},
                          {"amount", e.amount}});
    }
    const Dynamics& d = s.dynamics;
    json out = {
        {"name", s.name},
        {"seed", s.seed},
        {"map", {{"nodes", nodes}, {"roads", roads}}},
        {"entities", {{"buildings", buildings}, {"humans", humans}, {"agents", agents}}},
        {"dynamics",
         {{"fire_escalation_interval", d.fire_escalation_interval},
          {"spread_probability", d.spread_probability},
          {"spread_radius", d.spread_radius},
          {"burial_decay", d.burial_decay},
          {"sensor_radius", d.sensor_radius},
          {"agent_speed", d.agent_speed}}},
        {"limits", {{"steps", s.steps}}},
    };
    if (!events.empty()) {
        out["events"] = events;
    }
    return out;
}

Scenario load_scenario_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        invalid(path.string() + ": " + e.what());
    }
    return scenario_from_json(j);
}

void save_scenario_file(const Scenario& s, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write " + path.string());
    }
    out << scenario_to_json(s).dump(1) << '\n';
}

// -- environment -----------------------------------------------------------------

Environment::Environment(const Scenario& s)
    : name_(s.name), dynamics_(s.dynamics), steps_(s.steps), nodes_(s.nodes), events_(s.events)
{
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        node_index_.emplace(nodes_[i].id, i);
    }
    adjacency_.resize(nodes_.size());
    for (std::size_t r = 0; r < s.roads.size(); ++r) {
        const std::size_t a = node_index_.at(s.roads[r].a);
        const std::size_t b = node_index_.at(s.roads[r].b);
        adjacency_[a].push_back({b, r});
        adjacency_[b].push_back({a, r});
        entities_.emplace(s.roads[r].id, EntityRef{EntityType::road, r});
    }
    for (auto& inc : adjacency_) {
        std::sort(inc.begin(), inc.end(), [](const Incidence& x, const Incidence& y) {
            return std::tie(x.neighbour, x.road) < std::tie(y.neighbour, y.road);
        });
    }
    for (std::size_t i = 0; i < s.buildings.size(); ++i) {
        entities_.emplace(s.buildings[i].id, EntityRef{EntityType::building, i});
    }
    for (std::size_t i = 0; i < s.humans.size(); ++i) {
        entities_.emplace(s.humans[i].id, EntityRef{EntityType::human, i});
    }
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        entities_.emplace(s.agents[i].id, EntityRef{EntityType::agent, i});
    }
    std::stable_sort(events_.begin(), events_.end(),
                     [](const ScheduledEvent& a, const ScheduledEvent& b) { return a.time < b.time; });

    std::vector<std::vector<std::size_t>> at_node(nodes_.size());
    for (std::size_t i = 0; i < s.buildings.size(); ++i) {
        at_node[node_index_.at(s.buildings[i].node)].push_back(i);
    }
    spread_targets_.resize(s.buildings.size());
    for (std::size_t i = 0; i < s.buildings.size(); ++i) {
        const auto seen = within_hops(node_index_.at(s.buildings[i].node), dynamics_.spread_radius);
        for (std::size_t n = 0; n < seen.size(); ++n) {
            if (!seen[n]) {
                continue;
            }
            for (std::size_t j : at_node[n]) {
                if (j != i) {
                    spread_targets_[i].push_back(j);
                }
            }
        }
        std::sort(spread_targets_[i].begin(), spread_targets_[i].end());
    }
}

std::optional<EntityRef> Environment::find(const std::string& id) const
{
    auto it = entities_.find(id);
    if (it == entities_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<int> Environment::hop_distances(std::size_t start) const
{
    std::vector<int> dist(nodes_.size(), -1);
    std::deque<std::size_t> queue{start};
    dist[start] = 0;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        for (const auto& inc : adjacency_[u]) {
            if (dist[inc.neighbour] < 0) {
                dist[inc.neighbour] = dist[u] + 1;
                queue.push_back(inc.neighbour);
            }
        }
    }
    return dist;
}

std::vector<bool> Environment::within_hops(std::size_t start, int hops) const
{
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<std::size_t> frontier{start};
    seen[start] = true;
    for (int d = 0; d < hops && !frontier.empty(); ++d) {
        std::vector<std::size_t> next;
        for (std::size_t u : frontier) {
            for (const auto& inc : adjacency_[u]) {
                if (!seen[inc.neighbour]) {
                    seen[inc.neighbour] = true;
                    next.push_back(inc.neighbour);
                }
            }
        }
        frontier = std::move(next);
    }
    return seen;
}

// -- synthetic cities ------------------------------------------------------------

CitySpec city_preset(std::string_view name)
{
    CitySpec c;
    c.name = std::string(name);
    if (name == "test_city" || name == "test-city") {
        c.name = "test_city";
        c.counts = {5, 3, 37, 58};
        c.initial_fires = 1;
    } else if (name == "kobe") {
        c.counts = {200, 90, 757, 1602};
        c.initial_fires = 12;
    } else if (name == "montreal") {
        c.counts = {100, 36, 927, 3059};
        c.initial_fires = 10;
    } else {
        throw Error(ErrorCode::not_found, "unknown city preset '" + std::string(name) + "'");
    }
    return c;
}

namespace {

struct Grid {
    std::size_t width;
    std::size_t nodes;
    std::vector<std::pair<std::size_t, std::size_t>> edges; // candidate edges
};

Grid make_grid(std::size_t n)
{
    Grid g{static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)))), n, {}};
    if (g.width == 0) {
        g.width = 1;
    }
    auto id = [&](std::size_t x, std::size_t y) { return y * g.width + x; };
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t x = v % g.width;
        const std::size_t y = v / g.width;
        if (x + 1 < g.width && id(x + 1, y) < n) {
            g.edges.emplace_back(v, id(x + 1, y));
        }
        if (id(x, y + 1) < n) {
            g.edges.emplace_back(v, id(x, y + 1));
        }
        if (x + 1 < g.width && id(x + 1, y + 1) < n) {
            g.edges.emplace_back(v, id(x + 1, y + 1));
        }
        if (x > 0 && id(x - 1, y + 1) < n) {
            g.edges.emplace_back(v, id(x - 1, y + 1));
        }
    }
    return g;
}

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t root(std::size_t v)
    {
        while (parent[v] != v) {
            v = parent[v] = parent[parent[v]];
        }
        return v;
    }
    bool join(std::size_t a, std::size_t b)
    {
        a = root(a);
        b = root(b);
        if (a == b) {
            return false;
        }
        parent[a] = b;
        return true;
    }
};

} // namespace

Scenario synthesize_city(const CitySpec& spec, std::uint64_t seed, Dynamics dynamics)
{
    std::mt19937_64 rng(seed);
    auto below = [&](std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    };
    auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };

    const EntityCounts& want = spec.counts;
    std::size_t n = std::max<std::size_t>(1, std::min(std::max<std::size_t>(want.buildings, 2),
                                                     want.roads + 1));
    Grid grid = make_grid(n);
    while (grid.edges.size() < want.roads) {
        grid = make_grid(++n);
    }

    Scenario s;
    s.name = spec.name;
    s.seed = seed;
    s.dynamics = dynamics;
    s.steps = (spec.name == "kobe" || spec.name == "montreal") ? 270 : 300;
    for (std::size_t v = 0; v < n; ++v) {
        s.nodes.push_back({"n" + std::to_string(v), 100.0 * static_cast<double>(v % grid.width),
                           100.0 * static_cast<double>(v / grid.width)});
    }

    // Random spanning tree first so the network is connected, then fill up.
    std::shuffle(grid.edges.begin(), grid.edges.end(), rng);
    DisjointSets sets(n);
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    std::vector<std::pair<std::size_t, std::size_t>> spare;
    for (const auto& e : grid.edges) {
        if (sets.join(e.first, e.second)) {
            chosen.push_back(e);
        } else {
            spare.push_back(e);
        }
    }
    for (std::size_t i = 0; chosen.size() < want.roads && i < spare.size(); ++i) {
        chosen.push_back(spare[i]);
    }
    chosen.resize(std::min(chosen.size(), want.roads));
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        Road r;
        r.id = "road_" + std::to_string(i);
        r.a = s.nodes[chosen[i].first].id;
        r.b = s.nodes[chosen[i].second].id;
        const bool diagonal = (chosen[i].first % grid.width) != (chosen[i].second % grid.width) &&
                              (chosen[i].first / grid.width) != (chosen[i].second / grid.width);
        r.length = diagonal ? 141 : 100;
        r.blocked = chance(spec.blocked_fraction);
        s.roads.push_back(std::move(r));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < want.buildings; ++i) {
        s.buildings.push_back({"building_" + std::to_string(i), s.nodes[order[i % n]].id,
                               Fieryness::none, false, 0});
    }
    for (std::size_t i = 0; i < spec.initial_fires && !s.buildings.empty(); ++i) {
        Building& b = s.buildings[below(s.buildings.size())];
        b.fieryness = chance(0.5) ? Fieryness::heating : Fieryness::burning;
        b.fire_timer = static_cast<int>(below(static_cast<std::size_t>(dynamics.fire_escalation_interval)));
    }

    for (std::size_t i = 0; i < want.civilians; ++i) {
        Human h;
        h.id = "civilian_" + std::to_string(i);
        h.type = HumanType::civilian;
        h.hp = 40 + static_cast<int>(below(61));
        if (chance(spec.buried_fraction)) {
            h.burial_depth = 1 + static_cast<int>(below(30));
        }
        if (!s.roads.empty() && chance(spec.trapped_on_road_fraction)) {
            const Road& r = s.roads[below(s.roads.size())];
            h.road = r.id;
            h.node = r.a;
            if (h.burial_depth == 0) {
                h.burial_depth = 1 + static_cast<int>(below(10));
            }
        } else {
            h.node = s.nodes[below(n)].id;
        }
        s.humans.push_back(std::move(h));
    }
    constexpr AgentKind kinds[] = {AgentKind::fire_brigade, AgentKind::ambulance, AgentKind::police};
    for (std::size_t i = 0; i < want.agents; ++i) {
        Agent a;
        a.id = "agent_" + std::to_string(i);
        a.kind = kinds[i % 3];
        a.node = s.nodes[below(n)].id;
        s.agents.push_back(std::move(a));
    }
    validate(s);
    return s;
}

} // namespace rescue::sim
