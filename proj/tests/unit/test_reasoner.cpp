#include "doctest.h"

#include "rescue/error.hpp"
#include "rescue/kb/dsl.hpp"
#include "rescue/reasoner/goals.hpp"
#include "support/loop.hpp"
#include "support/narrative.hpp"
#include "support/worlds.hpp"

#include <algorithm>
#include <map>
#include <random>

using namespace rescue;
using namespace rescue::reasoner;
using rescue::sim::Action;
using rescue::sim::AgentKind;
using rescue::sim::Fieryness;

namespace {

const std::string kData = RESCUE_DATA_DIR;

kb::FrameSet ruleset(const std::string& name)
{
    return kb::parse_frame_source(narrative::read_text(kData + "/rulesets/" + name + ".fs"));
}

sim::Agent agent(const std::string& id, AgentKind kind, const std::string& node)
{
    sim::Agent a;
    a.id = id;
    a.kind = kind;
    a.node = node;
    return a;
}

sim::Building building(const std::string& id, const std::string& node, Fieryness f, bool scouted)
{
    sim::Building b;
    b.id = id;
    b.node = node;
    b.fieryness = f;
    b.scouted = scouted;
    return b;
}

sim::Human civilian(const std::string& id, const std::string& node, int depth)
{
    sim::Human h;
    h.id = id;
    h.node = node;
    h.burial_depth = depth;
    return h;
}

sim::Scenario ring(int n)
{
    auto s = worlds::line_city(n);
    s.roads.push_back({"r" + std::to_string(n - 1), "n" + std::to_string(n - 1), "n0", 1});
    s.dynamics = worlds::calm();
    return s;
}

std::multiset<std::pair<std::string, std::string>> labels(const std::vector<Goal>& goals)
{
    std::multiset<std::pair<std::string, std::string>> out;
    for (const auto& g : goals) {
        out.emplace(std::string(planner::to_string(g.type)), g.target);
    }
    return out;
}

std::vector<Mode> modes_of(const GoalLedger& ledger, const std::string& id)
{
    std::vector<Mode> out;
    for (const auto& t : ledger.log()) {
        if (t.goal == id) {
            out.push_back(t.to);
        }
    }
    return out;
}

const Goal* goal_for(const GoalLedger& ledger, GoalType type, const std::string& target)
{
    for (const auto& g : ledger.goals()) {
        if (g.type == type && g.target == target) {
            return &g;
        }
    }
    return nullptr;
}

} // namespace

TEST_CASE("lifecycle edges")
{
    CHECK(allowed_transition(std::nullopt, Mode::formulated));
    CHECK_FALSE(allowed_transition(std::nullopt, Mode::selected));
    CHECK(allowed_transition(Mode::formulated, Mode::selected));
    CHECK(allowed_transition(Mode::dispatched, Mode::finished));
    CHECK(allowed_transition(Mode::dispatched, Mode::expanded));
    CHECK(allowed_transition(Mode::deferred, Mode::formulated));
    CHECK_FALSE(allowed_transition(Mode::formulated, Mode::finished));
    CHECK_FALSE(allowed_transition(Mode::finished, Mode::formulated));
    CHECK_FALSE(allowed_transition(Mode::dropped, Mode::formulated));
    CHECK_FALSE(allowed_transition(Mode::selected, Mode::dispatched));
    for (Mode m : {Mode::formulated, Mode::selected, Mode::expanded, Mode::committed,
                   Mode::dispatched, Mode::deferred}) {
        CHECK(allowed_transition(m, Mode::dropped));
    }

    GoalLedger ledger;
    const Goal* g = ledger.admit(GoalType::douse, "b", 0);
    REQUIRE(g);
    CHECK(g->id == "g1");
    CHECK(ledger.admit(GoalType::douse, "b", 1) == nullptr);
    CHECK(ledger.admit(GoalType::scout, "b", 1) != nullptr);
    Goal& mg = ledger.goals()[0];
    CHECK_THROWS_AS(ledger.transition(mg, Mode::finished, 1, ""), Error);
    ledger.transition(mg, Mode::dropped, 1, "test");
    CHECK_FALSE(ledger.has_active(GoalType::douse, "b"));
    CHECK(ledger.admit(GoalType::douse, "b", 2)->id == "g3");
}

TEST_CASE("entity cases use the rule vocabulary")
{
    sim::Entity b = building("b", "n0", Fieryness::heating, true);
    CHECK(entity_case(b) == rdr::Bindings{{"fieryness", "heating"}, {"scouted", "yes"}});
    sim::Road r{"r", "n0", "n1", 1, true, false, true};
    CHECK(entity_case(r) ==
          rdr::Bindings{{"blocked", "yes"}, {"has_civilians", "yes"}, {"requested", "no"}});
    auto h = civilian("c", "n0", 2);
    h.hp = 50;
    CHECK(entity_case(sim::Entity{h}) ==
          rdr::Bindings{{"buriedness", "buried"}, {"health", "injured"}, {"type", "civilian"}});
    CHECK(entity_case(sim::Entity{agent("a", AgentKind::police, "n0")}).at("type") == "agent");
}

TEST_CASE("formulation oracle on a hand-built world")
{
    auto s = worlds::line_city(4);
    s.dynamics = worlds::calm();
    s.buildings = {building("b_unscouted_1", "n0", Fieryness::none, false),
                   building("b_unscouted_2", "n1", Fieryness::none, false),
                   building("b_heating", "n2", Fieryness::heating, true),
                   building("b_quiet", "n3", Fieryness::none, true)};
    s.roads[1].blocked = true;
    s.roads[1].requested = true;
    s.roads[2].blocked = true; // blocked but nobody asked
    s.humans = {civilian("c_buried", "n2", 3), civilian("c_free", "n1", 0)};
    s.agents = {agent("a_fire", AgentKind::fire_brigade, "n0")};
    const auto w = sim::initial_state(s);
    const auto belief = sim::full_belief(w);

    const auto rules = ruleset("test_city");
    GoalLedger ledger;
    const auto goals = formulate_goals(belief, mirror_belief(rules, belief), ledger, 0);
    CHECK(labels(goals) == std::multiset<std::pair<std::string, std::string>>{
                               {"scout", "b_unscouted_1"},
                               {"scout", "b_unscouted_2"},
                               {"douse", "b_heating"},
                               {"unblock", "r1"},
                               {"unbury", "c_buried"}});

    // Kobe rules add the road with a trapped civilian.
    auto s2 = s;
    s2.humans[0].road = "r2";
    const auto b2 = sim::full_belief(sim::initial_state(s2));
    const auto kobe = formulate_goals(b2, mirror_belief(ruleset("kobe"), b2), ledger, 0);
    CHECK(b2.get<sim::Road>("r2")->has_civilians);
    CHECK(labels(kobe).count({"unblock", "r2"}) == 1);

    // Untrained rules conclude none everywhere.
    const auto none = formulate_goals(belief, mirror_belief(ruleset("defaults"), belief), ledger, 0);
    CHECK(none.empty());

    // Active (type, target) pairs are not formulated twice.
    ledger.admit(GoalType::douse, "b_heating", 0);
    CHECK(labels(formulate_goals(belief, mirror_belief(rules, belief), ledger, 1))
              .count({"douse", "b_heating"}) == 0);
}

TEST_CASE("the buried brigade member gets an unbury goal")
{
    const auto rules = ruleset("test_city");
    const auto kb = kb::parse_frame_source(
        narrative::read_text(kData + "/rulesets/test_city.fs") +
        "frame(human_937073426, [human], [buriedness: buried]);\n");
    CHECK(kb::resolve_slot(kb, "human_937073426", "goal") == "unbury");

    sim::Belief belief;
    auto a = agent("brigade", AgentKind::fire_brigade, "n0");
    a.burial_depth = 2;
    belief.entries["brigade"] = {a, 0};
    GoalLedger ledger;
    const auto goals = formulate_goals(belief, mirror_belief(rules, belief), ledger, 0);
    REQUIRE(goals.size() == 1);
    CHECK(goals[0].type == GoalType::unbury);
}

TEST_CASE("dead and destroyed targets yield no goals")
{
    sim::Belief belief;
    auto h = civilian("c", "n0", 3);
    h.hp = 0;
    belief.entries["c"] = {h, 0};
    belief.entries["b"] = {building("b", "n0", Fieryness::destroyed, false), 0};
    GoalLedger ledger;
    CHECK(formulate_goals(belief, mirror_belief(ruleset("test_city"), belief), ledger, 0).empty());
}

TEST_CASE("ordering matrix from the trained ordering tree")
{
    const auto m = order_matrix(order_tree(ruleset("test_city")));
    auto before = [&](GoalType a, GoalType b) {
        return m[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    };
    for (GoalType a : planner::kGoalTypes) {
        for (GoalType b : planner::kGoalTypes) {
            const bool expected = b == GoalType::scout && a != GoalType::scout;
            CHECK(before(a, b) == expected);
        }
    }
    const auto untrained = order_matrix(order_tree(ruleset("defaults")));
    for (const auto& row : untrained) {
        CHECK(std::none_of(row.begin(), row.end(), [](bool x) { return x; }));
    }
    CHECK(order_tree(kb::FrameSet{}) == nullptr);
}

TEST_CASE("ordering places scouting last and keeps input order otherwise")
{
    GoalLedger ledger;
    ledger.admit(GoalType::scout, "b1", 0);
    ledger.admit(GoalType::douse, "b2", 0);
    ledger.admit(GoalType::unbury, "c1", 0);
    ledger.admit(GoalType::scout, "b3", 0);
    ledger.admit(GoalType::unblock, "r1", 0);
    std::vector<const Goal*> in;
    for (const auto& g : ledger.goals()) {
        in.push_back(&g);
    }
    const auto m = order_matrix(order_tree(ruleset("test_city")));
    std::vector<std::string> ids;
    for (const Goal* g : order_goals(in, m)) {
        ids.push_back(g->id);
    }
    CHECK(ids == std::vector<std::string>{"g2", "g3", "g5", "g1", "g4"});

    const auto flat = order_matrix(order_tree(ruleset("defaults")));
    ids.clear();
    for (const Goal* g : order_goals(in, flat)) {
        ids.push_back(g->id);
    }
    CHECK(ids == std::vector<std::string>{"g1", "g2", "g3", "g4", "g5"});
}

namespace {

struct Fixture {
    sim::WorldState world;
    sim::Belief belief;
    planner::RoadGraph graph;
    OrderMatrix m;
};

Fixture three_agents(std::vector<sim::Agent> agents)
{
    auto s = worlds::line_city(5);
    s.dynamics = worlds::calm();
    s.buildings = {building("b_fire", "n4", Fieryness::burning, true),
                   building("b_scout", "n3", Fieryness::none, false)};
    s.roads[2].blocked = true;
    s.roads[2].requested = true;
    s.humans = {civilian("c", "n1", 4)};
    s.agents = std::move(agents);
    Fixture f;
    f.world = sim::initial_state(s);
    f.belief = sim::full_belief(f.world);
    f.graph = planner::RoadGraph::from_belief(*f.world.env, f.world.roads, f.belief);
    f.m = order_matrix(order_tree(ruleset("test_city")));
    return f;
}

} // namespace

TEST_CASE("selection matches goals to capable agents")
{
    auto f = three_agents({agent("fire", AgentKind::fire_brigade, "n3"),
                           agent("amb", AgentKind::ambulance, "n0"),
                           agent("pol", AgentKind::police, "n0")});
    GoalLedger ledger;
    ledger.admit(GoalType::scout, "b_scout", 0);
    ledger.admit(GoalType::douse, "b_fire", 0);
    ledger.admit(GoalType::unbury, "c", 0);
    ledger.admit(GoalType::unblock, "r2", 0);
    std::vector<const Goal*> in;
    for (const auto& g : ledger.goals()) {
        in.push_back(&g);
    }
    const auto ordered = order_goals(in, f.m);
    const auto assigned = select_and_assign(ledger, ordered, f.belief, f.graph, f.m, 0);
    std::map<std::string, std::string> by_goal;
    for (const auto& a : assigned) {
        by_goal[a.goal] = a.agent;
        CHECK_FALSE(a.preempted);
    }
    CHECK(by_goal == std::map<std::string, std::string>{{"g2", "fire"}, {"g3", "amb"}, {"g4", "pol"}});
    // Scouting ranks below everything and every agent is busy.
    CHECK(ledger.find("g1")->mode == Mode::formulated);
}

TEST_CASE("a higher-priority goal preempts a scouting agent")
{
    auto f = three_agents({agent("fire", AgentKind::fire_brigade, "n3")});
    GoalLedger ledger;
    ledger.admit(GoalType::scout, "b_scout", 0);
    std::vector<const Goal*> first{&ledger.goals()[0]};
    REQUIRE(select_and_assign(ledger, first, f.belief, f.graph, f.m, 0).size() == 1);
    CHECK(ledger.find("g1")->agent == "fire");

    ledger.admit(GoalType::douse, "b_fire", 1);
    std::vector<const Goal*> in;
    for (const auto& g : ledger.goals()) {
        in.push_back(&g);
    }
    const auto assigned = select_and_assign(ledger, order_goals(in, f.m), f.belief, f.graph, f.m, 1);
    REQUIRE(assigned.size() == 1);
    CHECK(assigned[0].goal == "g2");
    CHECK(assigned[0].agent == "fire");
    CHECK(assigned[0].preempted == "g1");
    CHECK(ledger.find("g1")->mode == Mode::formulated);
    CHECK_FALSE(ledger.find("g1")->agent);
}

TEST_CASE("a lower-priority goal cannot take a busy agent")
{
    auto f = three_agents({agent("pol", AgentKind::police, "n0")});
    GoalLedger ledger;
    ledger.admit(GoalType::unblock, "r2", 0);
    ledger.admit(GoalType::scout, "b_scout", 0);
    std::vector<const Goal*> in;
    for (const auto& g : ledger.goals()) {
        in.push_back(&g);
    }
    const auto assigned = select_and_assign(ledger, order_goals(in, f.m), f.belief, f.graph, f.m, 0);
    REQUIRE(assigned.size() == 1);
    CHECK(assigned[0].goal == "g1");
    CHECK(ledger.find("g2")->mode == Mode::formulated);
}

TEST_CASE("a goal no capable agent can reach is deferred")
{
    // The ambulance is cut off from the civilian by the blocked road.
    auto f = three_agents({agent("amb", AgentKind::ambulance, "n4")});
    GoalLedger ledger;
    ledger.admit(GoalType::unbury, "c", 0);
    std::vector<const Goal*> in{&ledger.goals()[0]};
    CHECK(select_and_assign(ledger, in, f.belief, f.graph, f.m, 0).empty());
    CHECK(ledger.find("g1")->mode == Mode::deferred);
}

TEST_CASE("a douse goal runs through the whole lifecycle")
{
    auto s = worlds::line_city(5);
    s.dynamics = worlds::calm();
    s.dynamics.fire_escalation_interval = 1000;
    s.dynamics.sensor_radius = 4;
    s.buildings = {building("b", "n3", Fieryness::burning, true)};
    s.agents = {agent("fire", AgentKind::fire_brigade, "n0")};
    loop::Run run{sim::initial_state(s), {}, {}, {}};
    loop::run(run, ruleset("test_city"), 10);

    const Goal* g = goal_for(run.reasoner.ledger(), GoalType::douse, "b");
    REQUIRE(g);
    CHECK(modes_of(run.reasoner.ledger(), g->id) ==
          std::vector<Mode>{Mode::formulated, Mode::selected, Mode::expanded, Mode::committed,
                            Mode::dispatched, Mode::finished});
    CHECK(run.world.building("b")->fieryness == Fieryness::none);
    // Three moves then two douses, issued from the first tick on.
    std::vector<std::string> issued;
    for (std::size_t i = 0; i < 5; ++i) {
        issued.push_back(run.ticks[i].actions.at("fire").to_string());
    }
    CHECK(issued == std::vector<std::string>{"move(n1)", "move(n2)", "move(n3)", "douse(b)",
                                             "douse(b)"});
    CHECK(run.ticks[0].expansions.size() == 1);
}

TEST_CASE("an unbury goal finishes when the burial depth reaches zero")
{
    auto s = worlds::line_city(3);
    s.dynamics = worlds::calm();
    s.humans = {civilian("c", "n2", 3)};
    s.agents = {agent("amb", AgentKind::ambulance, "n0")};
    loop::Run run{sim::initial_state(s), {}, {}, {}};
    loop::run(run, ruleset("test_city"), 8);
    const Goal* g = goal_for(run.reasoner.ledger(), GoalType::unbury, "c");
    REQUIRE(g);
    CHECK(g->mode == Mode::finished);
    CHECK(run.world.human("c")->burial_depth == 0);
    CHECK(run.world.human("c")->hp > 0);
}

TEST_CASE("a road blocked mid-plan triggers a request and a new route")
{
    auto s = ring(6);
    s.dynamics.fire_escalation_interval = 1000;
    s.buildings = {building("b", "n2", Fieryness::heating, true)};
    s.agents = {agent("fire", AgentKind::fire_brigade, "n0"),
                agent("pol", AgentKind::police, "n4")};
    s.events.push_back({1, sim::ScheduledEvent::Kind::block_road, "r1", 1});
    loop::Run run{sim::initial_state(s), {}, {}, {}};
    loop::run(run, ruleset("test_city"), 12);

    const auto& ledger = run.reasoner.ledger();
    const Goal* g = goal_for(ledger, GoalType::douse, "b");
    REQUIRE(g);
    CHECK(g->mode == Mode::finished);
    const auto modes = modes_of(ledger, g->id);
    CHECK(std::count(modes.begin(), modes.end(), Mode::dispatched) == 2);
    bool requested = false;
    for (const auto& t : run.ticks) {
        auto it = t.actions.find("fire");
        requested = requested || (it != t.actions.end() && it->second.to_string() == "request(r1)");
    }
    CHECK(requested);
    CHECK(run.world.building("b")->fieryness == Fieryness::none);
    // The request turns the road into an unblock goal for the police agent.
    const Goal* u = goal_for(ledger, GoalType::unblock, "r1");
    REQUIRE(u);
    CHECK(modes_of(ledger, u->id).front() == Mode::formulated);
}

TEST_CASE("losing the target drops the goal")
{
    auto s = worlds::line_city(8);
    s.dynamics = worlds::calm();
    s.dynamics.burial_decay = 40;
    auto c = civilian("c", "n7", 50);
    c.hp = 100;
    s.humans = {c};
    s.agents = {agent("amb", AgentKind::ambulance, "n0")};
    s.dynamics.sensor_radius = 7;
    loop::Run run{sim::initial_state(s), {}, {}, {}};
    loop::run(run, ruleset("test_city"), 6);
    const Goal* g = goal_for(run.reasoner.ledger(), GoalType::unbury, "c");
    REQUIRE(g);
    CHECK(g->mode == Mode::dropped);
}

TEST_CASE("lifecycle invariants hold in random cities")
{
    std::mt19937_64 rng(42);
    const auto rules = ruleset("kobe");
    for (int city = 0; city < 12; ++city) {
        loop::Run run{sim::initial_state(worlds::random_city(rng)), {}, {}, {}};
        std::size_t checked = 0;
        loop::run(run, rules, 60, [&](const loop::Run& r) {
            const auto& ledger = r.reasoner.ledger();
            std::map<std::string, Mode> mode;
            for (std::size_t i = 0; i < ledger.log().size(); ++i) {
                const auto& t = ledger.log()[i];
                auto it = mode.find(t.goal);
                const std::optional<Mode> from =
                    it == mode.end() ? std::nullopt : std::optional<Mode>(it->second);
                if (i >= checked) {
                    CHECK(t.from == from);
                    CHECK(allowed_transition(from, t.to));
                }
                mode[t.goal] = t.to;
            }
            checked = ledger.log().size();
            std::set<std::string> holders;
            std::set<std::pair<GoalType, std::string>> active;
            for (const auto& g : ledger.goals()) {
                CHECK(mode.at(g.id) == g.mode);
                if (is_active(g.mode)) {
                    CHECK(active.emplace(g.type, g.target).second);
                }
                if (is_assigned(g.mode)) {
                    REQUIRE(g.agent);
                    CHECK(holders.insert(*g.agent).second);
                    const auto* a = r.belief.get<sim::Agent>(*g.agent);
                    REQUIRE(a);
                    CHECK(capable(g.type, a->kind));
                } else {
                    CHECK_FALSE(g.agent);
                }
            }
            for (const auto& [id, act] : r.ticks.back().actions) {
                CHECK(holders.count(id) == 1);
            }
        });
    }
}
