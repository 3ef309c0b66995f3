#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rescue::sim {

enum class Fieryness : std::uint8_t { none, heating, burning, inferno, destroyed };
enum class HumanType : std::uint8_t { agent, civilian };
enum class AgentKind : std::uint8_t { fire_brigade, ambulance, police };
enum class Health : std::uint8_t { dead, critical, injured, healthy };

/// dead = 0, critical 1-30, injured 31-70, healthy 71-100.
Health health_of(int hp);

std::string_view to_string(Fieryness f);
std::string_view to_string(HumanType t);
std::string_view to_string(AgentKind k);
std::string_view to_string(Health h);
std::optional<Fieryness> parse_fieryness(std::string_view s);
std::optional<HumanType> parse_human_type(std::string_view s);
std::optional<AgentKind> parse_agent_kind(std::string_view s);

/// Levels of fire above `none`; what it takes to extinguish.
int fire_level(Fieryness f);
bool is_burning(Fieryness f);

struct Building {
    std::string id;
    std::string node;
    Fieryness fieryness = Fieryness::none;
    bool scouted = false;
    int fire_timer = 0; // steps spent at the current fire level

    friend bool operator==(const Building&, const Building&) = default;
};

struct Road {
    std::string id;
    std::string a;
    std::string b;
    std::int64_t length = 1;
    bool blocked = false;
    bool requested = false;
    bool has_civilians = false; // a living buried civilian is trapped on it

    const std::string& other_end(const std::string& node) const { return node == a ? b : a; }
    friend bool operator==(const Road&, const Road&) = default;
};

struct Human {
    std::string id;
    HumanType type = HumanType::civilian;
    std::string node;
    int hp = 100;
    int burial_depth = 0;
    std::optional<std::string> road; // trapped on this road, if any

    bool buried() const { return burial_depth > 0; }
    bool dead() const { return hp <= 0; }
    friend bool operator==(const Human&, const Human&) = default;
};

struct Agent {
    std::string id;
    AgentKind kind = AgentKind::fire_brigade;
    std::string node;
    int hp = 100;
    int burial_depth = 0;
    std::string current_action = "rest";

    bool buried() const { return burial_depth > 0; }
    bool dead() const { return hp <= 0; }
    bool can_act() const { return !dead() && !buried(); }
    friend bool operator==(const Agent&, const Agent&) = default;
};

using Entity = std::variant<Building, Road, Human, Agent>;

const std::string& entity_id(const Entity& e);
/// "building", "road", "human" or "agent".
std::string_view entity_kind(const Entity& e);

struct Action {
    enum class Kind : std::uint8_t { rest, move, douse, unbury, clear, scout, request };

    Kind kind = Kind::rest;
    std::vector<std::string> path; // move: nodes to visit, in order
    std::string target;            // entity acted upon

    static Action rest() { return {}; }
    static Action move(std::vector<std::string> nodes) { return {Kind::move, std::move(nodes), {}}; }
    static Action on(Kind k, std::string target) { return {k, {}, std::move(target)}; }

    std::string to_string() const;
    friend bool operator==(const Action&, const Action&) = default;
};

std::string_view to_string(Action::Kind k);

using ActionMap = std::map<std::string, Action>;

} // namespace rescue::sim
