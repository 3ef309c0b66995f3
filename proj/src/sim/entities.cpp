#include "rescue/sim/entities.hpp"

#include <array>

namespace rescue::sim {

namespace {

constexpr std::array<std::string_view, 5> kFieryness{"none", "heating", "burning", "inferno",
                                                     "destroyed"};
constexpr std::array<std::string_view, 2> kHumanType{"agent", "civilian"};
constexpr std::array<std::string_view, 3> kAgentKind{"fire_brigade", "ambulance", "police"};
constexpr std::array<std::string_view, 4> kHealth{"dead", "critical", "injured", "healthy"};
constexpr std::array<std::string_view, 7> kActionKind{"rest",  "move",  "douse",  "unbury",
                                                      "clear", "scout", "request"};

template <class E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s)
{
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) {
            return static_cast<E>(i);
        }
    }
    return std::nullopt;
}

} // namespace

Health health_of(int hp)
{
    if (hp <= 0) {
        return Health::dead;
    }
    if (hp <= 30) {
        return Health::critical;
    }
    if (hp <= 70) {
        return Health::injured;
    }
    return Health::healthy;
}

std::string_view to_string(Fieryness f) { return kFieryness[static_cast<std::size_t>(f)]; }
std::string_view to_string(HumanType t) { return kHumanType[static_cast<std::size_t>(t)]; }
std::string_view to_string(AgentKind k) { return kAgentKind[static_cast<std::size_t>(k)]; }
std::string_view to_string(Health h) { return kHealth[static_cast<std::size_t>(h)]; }
std::string_view to_string(Action::Kind k) { return kActionKind[static_cast<std::size_t>(k)]; }

std::optional<Fieryness> parse_fieryness(std::string_view s)
{
    return lookup<Fieryness>(kFieryness, s);
}
std::optional<HumanType> parse_human_type(std::string_view s)
{
    return lookup<HumanType>(kHumanType, s);
}
std::optional<AgentKind> parse_agent_kind(std::string_view s)
{
    return lookup<AgentKind>(kAgentKind, s);
}

int fire_level(Fieryness f)
{
    switch (f) {
    case Fieryness::heating:
        return 1;
    case Fieryness::burning:
        return 2;
    case Fieryness::inferno:
        return 3;
    default:
        return 0;
    }
}

bool is_burning(Fieryness f) { return fire_level(f) > 0; }

const std::string& entity_id(const Entity& e)
{
    return std::visit([](const auto& x) -> const std::string& { return x.id; }, e);
}

std::string_view entity_kind(const Entity& e)
{
    constexpr std::array<std::string_view, 4> names{"building", "road", "human", "agent"};
    return names[e.index()];
}

std::string Action::to_string() const
{
    std::string out(sim::to_string(kind));
    if (kind == Kind::move) {
        out += "(";
        for (std::size_t i = 0; i < path.size(); ++i) {
            out += (i ? "," : "") + path[i];
        }
        out += ")";
    } else if (kind != Kind::rest) {
        out += "(" + target + ")";
    }
    return out;
}

} // namespace rescue::sim
