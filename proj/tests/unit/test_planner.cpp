#include "doctest.h"

#include "rescue/error.hpp"
#include "rescue/planner/planner.hpp"
#include "support/oracles.hpp"
#include "support/worlds.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace rescue;
using namespace rescue::planner;
using sim::Action;
using oracle::brute_force;
using oracle::Brute;
using oracle::make_graph;

namespace {

// Two routes from n0 to n4: n0-n1-n4 costs 7, n0-n2-n3-n4 costs 9.
RoadGraph two_routes()
{
    return make_graph(5, {{"e01", "n0", "n1", 3, false},
                          {"e14", "n1", "n4", 4, false},
                          {"e02", "n0", "n2", 2, false},
                          {"e23", "n2", "n3", 3, false},
                          {"e34", "n3", "n4", 4, false}});
}

RoadGraph random_graph(std::mt19937_64& rng, int max_nodes = 8)
{
    const int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_nodes));
    std::vector<Edge> edges;
    const int m = static_cast<int>(rng() % static_cast<unsigned>(n * 2 + 1));
    for (int i = 0; i < m; ++i) {
        const int a = static_cast<int>(rng() % n);
        const int b = static_cast<int>(rng() % n);
        if (a == b) {
            continue;
        }
        edges.push_back({"e" + std::to_string(i), "n" + std::to_string(a), "n" + std::to_string(b),
                         1 + static_cast<std::int64_t>(rng() % 4), rng() % 5 == 0});
    }
    return make_graph(n, edges);
}

std::size_t count_of(const std::string& text, const std::string& needle)
{
    std::size_t n = 0;
    for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) {
        ++n;
    }
    return n;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A world with one fire brigade two hops from a burning building.
sim::Scenario douse_city()
{
    sim::Scenario s = worlds::line_city(5);
    s.dynamics = worlds::calm();
    s.buildings.push_back({"b1", "n2", sim::Fieryness::burning, false, 0});
    s.agents.push_back({"fire", sim::AgentKind::fire_brigade, "n0", 100, 0, "rest"});
    return s;
}

} // namespace

TEST_CASE("plan_route basics")
{
    RoadGraph g = two_routes();
    auto same = plan_route(g, "n3", "n3");
    REQUIRE(same);
    CHECK(same->cost == 0);
    CHECK(same->edges.empty());
    CHECK(same->nodes == std::vector<std::string>{"n3"});

    auto r = plan_route(g, "n0", "n4");
    REQUIRE(r);
    CHECK(r->cost == 7);
    CHECK(r->nodes == std::vector<std::string>{"n0", "n1", "n4"});
    CHECK(r->cost == brute_force(g, "n0", "n4", false).cost);

    RoadGraph walled = make_graph(3, {{"a", "n0", "n1", 1, false}, {"b", "n1", "n2", 1, true}});
    CHECK_FALSE(plan_route(walled, "n0", "n2"));
    auto through = plan_route(walled, "n0", "n2", true);
    REQUIRE(through);
    CHECK(through->cost == 2);
    CHECK_THROWS_AS(plan_route(walled, "n0", "n9"), Error);
}

TEST_CASE("plan_route: equal-cost ties break lexicographically")
{
    RoadGraph g = make_graph(4, {{"x", "n0", "n2", 1, false},
                                 {"y", "n2", "n3", 1, false},
                                 {"z", "n0", "n1", 1, false},
                                 {"w", "n1", "n3", 1, false}});
    CHECK(plan_route(g, "n0", "n3")->nodes == std::vector<std::string>{"n0", "n1", "n3"});
    CHECK(plan_route(g, "n3", "n0")->nodes == std::vector<std::string>{"n3", "n1", "n0"});
}

TEST_CASE("plan_route is optimal on small graphs")
{
    std::mt19937_64 rng(8);
    for (int i = 0; i < 3000; ++i) {
        RoadGraph g = random_graph(rng);
        const std::string from = g.nodes()[rng() % g.nodes().size()];
        const std::string to = g.nodes()[rng() % g.nodes().size()];
        const bool blocked_ok = rng() % 2 == 0;
        Brute want = brute_force(g, from, to, blocked_ok);
        auto got = plan_route(g, from, to, blocked_ok);
        if (want.cost < 0) {
            CHECK_FALSE(got);
            continue;
        }
        REQUIRE(got);
        CHECK(got->cost == want.cost);
        CHECK(got->nodes == want.nodes);
        std::int64_t sum = 0;
        for (const auto& e : got->edges) {
            sum += g.find_edge(e)->length;
        }
        CHECK(sum == got->cost);
    }
}

TEST_CASE("build_plan")
{
    sim::WorldState w = sim::initial_state(douse_city());
    sim::Belief belief = sim::full_belief(w);
    RoadGraph g = RoadGraph::from_belief(*w.env, w.roads, belief);

    SUBCASE("douse two hops away")
    {
        auto plan = build_plan({"g1", GoalType::douse, "b1"}, "fire", belief, g);
        REQUIRE(plan);
        REQUIRE(plan->actions.size() == 4);
        CHECK(plan->actions[0] == Action::move({"n1"}));
        CHECK(plan->actions[1] == Action::move({"n2"}));
        // burning -> heating -> none
        CHECK(plan->actions[2] == Action::on(Action::Kind::douse, "b1"));
        CHECK(plan->actions[3] == Action::on(Action::Kind::douse, "b1"));
        CHECK(plan->cost == 2);
    }

    SUBCASE("zero-move unbury")
    {
        sim::Scenario s = douse_city();
        s.humans.push_back({"c", sim::HumanType::civilian, "n3", 80, 3, std::nullopt});
        s.agents.push_back({"amb", sim::AgentKind::ambulance, "n3", 100, 0, "rest"});
        sim::WorldState v = sim::initial_state(s);
        sim::Belief b = sim::full_belief(v);
        auto plan = build_plan({"g2", GoalType::unbury, "c"}, "amb", b,
                               RoadGraph::from_belief(*v.env, v.roads, b));
        REQUIRE(plan);
        CHECK(plan->actions == std::vector<Action>(3, Action::on(Action::Kind::unbury, "c")));
    }

    SUBCASE("unblock goes to the nearer endpoint")
    {
        sim::Scenario s = douse_city();
        s.roads[2].blocked = true; // n2-n3
        s.agents.push_back({"pol", sim::AgentKind::police, "n0", 100, 0, "rest"});
        sim::WorldState v = sim::initial_state(s);
        sim::Belief b = sim::full_belief(v);
        auto plan = build_plan({"g3", GoalType::unblock, "r2"}, "pol", b,
                               RoadGraph::from_belief(*v.env, v.roads, b));
        REQUIRE(plan);
        CHECK(plan->route.nodes.back() == "n2");
        CHECK(plan->actions.back() == Action::on(Action::Kind::clear, "r2"));
    }

    SUBCASE("unreachable or unknown")
    {
        sim::Scenario s = douse_city();
        s.roads[0].blocked = true;
        sim::WorldState v = sim::initial_state(s);
        sim::Belief b = sim::full_belief(v);
        RoadGraph vg = RoadGraph::from_belief(*v.env, v.roads, b);
        CHECK_FALSE(build_plan({"g4", GoalType::douse, "b1"}, "fire", b, vg));
        CHECK_FALSE(build_plan({"g5", GoalType::douse, "nothing"}, "fire", b, vg));
        CHECK_FALSE(build_plan({"g6", GoalType::douse, "b1"}, "nobody", b, vg));
    }
}

TEST_CASE("executing a plan achieves the goal condition")
{
    std::mt19937_64 rng(31);
    int executed = 0;
    for (int round = 0; round < 40; ++round) {
        sim::Scenario s = worlds::random_city(rng);
        // Exogenous change off: no spread, no escalation, no decay.
        s.dynamics.spread_probability = 0;
        s.dynamics.fire_escalation_interval = 1'000'000;
        s.dynamics.burial_decay = 0;
        s.dynamics.agent_speed = 1;
        sim::WorldState start = sim::initial_state(s);
        sim::Belief belief = sim::full_belief(start);
        RoadGraph g = RoadGraph::from_world(start);

        std::vector<std::pair<GoalSpec, sim::AgentKind>> goals;
        for (const auto& b : start.buildings) {
            if (sim::is_burning(b.fieryness)) {
                goals.push_back({{"d", GoalType::douse, b.id}, sim::AgentKind::fire_brigade});
            }
            goals.push_back({{"s", GoalType::scout, b.id}, sim::AgentKind::police});
        }
        for (const auto& h : start.humans) {
            if (h.buried() && !h.dead()) {
                goals.push_back({{"u", GoalType::unbury, h.id}, sim::AgentKind::ambulance});
            }
        }
        for (const auto& r : start.roads) {
            if (r.blocked) {
                goals.push_back({{"c", GoalType::unblock, r.id}, sim::AgentKind::police});
            }
        }
        for (const auto& [goal, kind] : goals) {
            for (const auto& a : start.agents) {
                if (a.kind != kind) {
                    continue;
                }
                auto plan = build_plan(goal, a.id, belief, g);
                if (!plan) {
                    continue;
                }
                sim::WorldState w = start;
                for (const auto& act : plan->actions) {
                    sim::StepRecord rec;
                    w = sim::step_world(w, {{a.id, act}}, &rec);
                    CHECK(rec.rejected.empty());
                }
                switch (goal.type) {
                case GoalType::douse:
                    CHECK(w.building(goal.target)->fieryness == sim::Fieryness::none);
                    break;
                case GoalType::scout:
                    CHECK(w.building(goal.target)->scouted);
                    break;
                case GoalType::unbury:
                    CHECK(w.human(goal.target)->burial_depth == 0);
                    break;
                case GoalType::unblock:
                    CHECK_FALSE(w.road(goal.target)->blocked);
                    break;
                }
                ++executed;
            }
        }
    }
    CHECK(executed > 100);
}

TEST_CASE("pddl emission")
{
    sim::WorldState w = sim::initial_state(douse_city());
    sim::Belief belief = sim::full_belief(w);
    RoadGraph g = RoadGraph::from_belief(*w.env, w.roads, belief);
    const GoalSpec goal{"g1", GoalType::douse, "b1"};
    const std::string text = emit_pddl_problem(goal, "fire", belief, g);
    CHECK(count_of(text, "(connected ") == g.edges().size());
    CHECK(text.find("(:goal (and (extinguished b1)))") != std::string::npos);
    CHECK(text.find("(at fire n0)") != std::string::npos);
    CHECK(text.find("(burning b1)") != std::string::npos);
    auto solved = solve_strips(domain_pddl(GoalType::douse), text);
    REQUIRE(solved);
    CHECK(solved->size() == 3);
    CHECK(solved->back() == "(douse fire b1 n2)");

    SUBCASE("blocked edges are left out")
    {
        sim::Scenario s = douse_city();
        s.roads[3].blocked = true;
        sim::WorldState v = sim::initial_state(s);
        sim::Belief b = sim::full_belief(v);
        RoadGraph vg = RoadGraph::from_belief(*v.env, v.roads, b);
        CHECK(count_of(emit_pddl_problem(goal, "fire", b, vg), "(connected ") == 3);
    }

    SUBCASE("degenerate graph: co-located, no edges")
    {
        sim::Scenario s;
        s.nodes.push_back({"n0", 0, 0});
        s.buildings.push_back({"b1", "n0", sim::Fieryness::heating, false, 0});
        s.agents.push_back({"fire", sim::AgentKind::fire_brigade, "n0", 100, 0, "rest"});
        sim::WorldState v = sim::initial_state(s);
        sim::Belief b = sim::full_belief(v);
        RoadGraph vg = RoadGraph::from_belief(*v.env, v.roads, b);
        const std::string p = emit_pddl_problem(goal, "fire", b, vg);
        CHECK(count_of(p, "(connected ") == 0);
        auto plan = solve_strips(domain_pddl(GoalType::douse), p);
        REQUIRE(plan);
        CHECK(*plan == std::vector<std::string>{"(douse fire b1 n0)"});
        auto internal = build_plan(goal, "fire", b, vg);
        REQUIRE(internal);
        CHECK(internal->actions == std::vector<Action>{Action::on(Action::Kind::douse, "b1")});
    }
}

TEST_CASE("shipped domain files match the emitter's domains")
{
    for (GoalType t : kGoalTypes) {
        const std::string path = std::string(RESCUE_DATA_DIR) + "/domains/" + domain_name(t) + ".pddl";
        CHECK(read_file(path) == domain_pddl(t));
    }
}

TEST_CASE("emitted problems are solvable exactly when build_plan succeeds")
{
    std::mt19937_64 rng(77);
    int solvable = 0;
    int unsolvable = 0;
    for (int round = 0; round < 30; ++round) {
        sim::Scenario s = worlds::random_city(rng);
        sim::WorldState w = sim::initial_state(s);
        sim::Belief belief = sim::full_belief(w);
        RoadGraph g = RoadGraph::from_belief(*w.env, w.roads, belief);
        for (const auto& a : w.agents) {
            std::vector<GoalSpec> goals;
            for (const auto& b : w.buildings) {
                goals.push_back({"s_" + b.id, GoalType::scout, b.id});
                if (sim::is_burning(b.fieryness)) {
                    goals.push_back({"d_" + b.id, GoalType::douse, b.id});
                }
            }
            for (const auto& h : w.humans) {
                goals.push_back({"u_" + h.id, GoalType::unbury, h.id});
            }
            for (const auto& r : w.roads) {
                if (r.blocked) {
                    goals.push_back({"c_" + r.id, GoalType::unblock, r.id});
                }
            }
            for (const auto& goal : goals) {
                if (rng() % 4 != 0) {
                    continue;
                }
                auto plan = build_plan(goal, a.id, belief, g);
                auto found = solve_strips(domain_pddl(goal.type),
                                          emit_pddl_problem(goal, a.id, belief, g));
                CHECK(plan.has_value() == found.has_value());
                if (plan && found) {
                    const std::size_t moves = plan->route.edges.size();
                    // BFS is shortest in steps; one terminal action at most.
                    CHECK(found->size() <= moves + 1);
                    ++solvable;
                } else {
                    ++unsolvable;
                }
            }
        }
    }
    CHECK(solvable > 50);
    CHECK(unsolvable > 0);
}

TEST_CASE("strips reader rejects malformed input")
{
    const std::string_view dom = domain_pddl(GoalType::scout);
    CHECK_THROWS_AS(solve_strips(dom, "(define (problem p) (:domain scout)"), Error);
    CHECK_THROWS_AS(solve_strips(dom, "(define (problem p) (:domain douse) (:objects) (:init) (:goal (and)))"),
                    Error);
    CHECK_THROWS_AS(
        solve_strips(dom, "(define (problem p) (:domain scout) (:objects a - node) (:init (flying a)) (:goal (and)))"),
        Error);
    CHECK_THROWS_AS(solve_strips("(define (domain d) (:requirements :adl))", "(define (problem p) (:domain d))"),
                    Error);
    // Empty goal is satisfied at once.
    auto p = solve_strips(dom, "(define (problem p) (:domain scout) (:objects a - node) (:init) (:goal (and)))");
    REQUIRE(p);
    CHECK(p->empty());
}

TEST_CASE("pddl names")
{
    CHECK(pddl_name("building_19") == "building_19");
    CHECK(pddl_name("Road.7") == "road_7");
    CHECK(pddl_name("9lives") == "x9lives");
    CHECK(parse_goal_type("unblock") == GoalType::unblock);
    CHECK_FALSE(parse_goal_type("rescueGoal"));
}
