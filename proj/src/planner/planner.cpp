#include "rescue/planner/planner.hpp"

#include "rescue/error.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <tuple>

namespace rescue::planner {

namespace {
constexpr std::string_view kTypeNames[] = {"unbury", "douse", "unblock", "scout"};
constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
} // namespace

std::string_view to_string(GoalType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

std::optional<GoalType> parse_goal_type(std::string_view s)
{
    for (GoalType t : kGoalTypes) {
        if (to_string(t) == s) {
            return t;
        }
    }
    return std::nullopt;
}

// -- graph --------------------------------------------------------------------------

void RoadGraph::add_node(const std::string& id)
{
    if (index_.contains(id)) {
        throw Error(ErrorCode::duplicate_id, "duplicate node '" + id + "'");
    }
    index_.emplace(id, nodes_.size());
    nodes_.push_back(id);
    incident_.emplace_back();
}

void RoadGraph::add_edge(Edge e)
{
    if (!has_node(e.a) || !has_node(e.b)) {
        throw Error(ErrorCode::unknown_entity, "edge '" + e.id + "' references an unknown node");
    }
    if (edge_index_.contains(e.id)) {
        throw Error(ErrorCode::duplicate_id, "duplicate edge '" + e.id + "'");
    }
    if (e.length < 1) {
        throw Error(ErrorCode::out_of_range, "edge '" + e.id + "' must have positive length");
    }
    const std::size_t i = edges_.size();
    incident_[index(e.a)].push_back(i);
    if (e.b != e.a) {
        incident_[index(e.b)].push_back(i);
    }
    edge_index_.emplace(e.id, i);
    edges_.push_back(std::move(e));
}

const Edge* RoadGraph::find_edge(const std::string& id) const
{
    auto it = edge_index_.find(id);
    return it == edge_index_.end() ? nullptr : &edges_[it->second];
}

RoadGraph RoadGraph::from_belief(const sim::Environment& env, const std::vector<sim::Road>& roads,
                                 const sim::Belief& belief)
{
    RoadGraph g;
    for (const auto& n : env.nodes()) {
        g.add_node(n.id);
    }
    for (const auto& r : roads) {
        const sim::Road* seen = belief.get<sim::Road>(r.id);
        g.add_edge({r.id, r.a, r.b, r.length, seen ? seen->blocked : false});
    }
    return g;
}

RoadGraph RoadGraph::from_world(const sim::WorldState& w)
{
    RoadGraph g;
    for (const auto& n : w.env->nodes()) {
        g.add_node(n.id);
    }
    for (const auto& r : w.roads) {
        g.add_edge({r.id, r.a, r.b, r.length, r.blocked});
    }
    return g;
}

// -- routing ------------------------------------------------------------------------

std::optional<Route> plan_route(const RoadGraph& g, const std::string& from, const std::string& to,
                                bool traverse_blocked)
{
    for (const auto* n : {&from, &to}) {
        if (!g.has_node(*n)) {
            throw Error(ErrorCode::unknown_entity, "unknown node '" + *n + "'");
        }
    }
    const std::size_t src = g.index(from);
    const std::size_t dst = g.index(to);
    auto usable = [&](const Edge& e) { return traverse_blocked || !e.blocked; };
    auto other = [&](const Edge& e, std::size_t u) {
        return g.index(e.a) == u ? g.index(e.b) : g.index(e.a);
    };

    // Distances to the destination; the forward walk then picks the smallest
    // next node id among edges that stay on a shortest path.
    std::vector<std::int64_t> dist(g.nodes().size(), kInf);
    using Item = std::pair<std::int64_t, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[dst] = 0;
    pq.emplace(0, dst);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d != dist[u]) {
            continue;
        }
        for (std::size_t ei : g.incident(u)) {
            const Edge& e = g.edges()[ei];
            if (!usable(e)) {
                continue;
            }
            const std::size_t v = other(e, u);
            if (d + e.length < dist[v]) {
                dist[v] = d + e.length;
                pq.emplace(dist[v], v);
            }
        }
    }
    if (dist[src] == kInf) {
        return std::nullopt;
    }

    Route route;
    route.cost = dist[src];
    route.nodes.push_back(from);
    std::size_t u = src;
    while (u != dst) {
        const Edge* best = nullptr;
        std::size_t best_v = 0;
        for (std::size_t ei : g.incident(u)) {
            const Edge& e = g.edges()[ei];
            const std::size_t v = other(e, u);
            if (!usable(e) || dist[v] == kInf || dist[v] + e.length != dist[u]) {
                continue;
            }
            if (!best || std::tie(g.nodes()[v], e.id) < std::tie(g.nodes()[best_v], best->id)) {
                best = &e;
                best_v = v;
            }
        }
        route.nodes.push_back(g.nodes()[best_v]);
        route.edges.push_back(best->id);
        u = best_v;
    }
    return route;
}

// -- plans --------------------------------------------------------------------------

std::optional<TargetSite> target_site(const GoalSpec& goal, const sim::Belief& belief)
{
    using K = sim::Action::Kind;
    switch (goal.type) {
    case GoalType::douse:
        if (const auto* b = belief.get<sim::Building>(goal.target)) {
            return TargetSite{{b->node}, K::douse, sim::fire_level(b->fieryness)};
        }
        break;
    case GoalType::scout:
        if (const auto* b = belief.get<sim::Building>(goal.target)) {
            return TargetSite{{b->node}, K::scout, b->scouted ? 0 : 1};
        }
        break;
    case GoalType::unbury:
        if (const auto* h = belief.get<sim::Human>(goal.target)) {
            return TargetSite{{h->node}, K::unbury, h->burial_depth};
        }
        if (const auto* a = belief.get<sim::Agent>(goal.target)) {
            return TargetSite{{a->node}, K::unbury, a->burial_depth};
        }
        break;
    case GoalType::unblock:
        if (const auto* r = belief.get<sim::Road>(goal.target)) {
            return TargetSite{{r->a, r->b}, K::clear, r->blocked ? 1 : 0};
        }
        break;
    }
    return std::nullopt;
}

std::optional<Plan> build_plan(const GoalSpec& goal, const std::string& agent,
                               const sim::Belief& belief, const RoadGraph& graph)
{
    const auto* a = belief.get<sim::Agent>(agent);
    auto site = target_site(goal, belief);
    if (!a || !site) {
        return std::nullopt;
    }
    if (site->repetitions == 0) {
        // Already achieved: nothing to route to.
        return Plan{goal.id, agent, {}, 0, Route{{a->node}, {}, 0}};
    }
    std::optional<Route> best;
    for (const auto& node : site->nodes) {
        if (!graph.has_node(node) || !graph.has_node(a->node)) {
            continue;
        }
        auto r = plan_route(graph, a->node, node);
        if (r && (!best || std::tie(r->cost, r->nodes) < std::tie(best->cost, best->nodes))) {
            best = std::move(r);
        }
    }
    if (!best) {
        return std::nullopt;
    }
    Plan plan;
    plan.goal_id = goal.id;
    plan.agent = agent;
    plan.cost = best->cost;
    for (std::size_t i = 1; i < best->nodes.size(); ++i) {
        plan.actions.push_back(sim::Action::move({best->nodes[i]}));
    }
    for (int i = 0; i < site->repetitions; ++i) {
        plan.actions.push_back(sim::Action::on(site->action, goal.target));
    }
    plan.route = std::move(*best);
    return plan;
}

} // namespace rescue::planner
