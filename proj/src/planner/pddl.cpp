#include "rescue/planner/planner.hpp"

#include "rescue/error.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace rescue::planner {

namespace {

constexpr std::string_view kDouse = R"((define (domain douse)
  (:requirements :strips :typing)
  (:types node agent building)
  (:predicates
    (at ?a - agent ?n - node)
    (connected ?x - node ?y - node)
    (located ?b - building ?n - node)
    (burning ?b - building)
    (extinguished ?b - building))
  (:action move
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?from ?to))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action move-reverse
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?to ?from))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action douse
    :parameters (?a - agent ?b - building ?n - node)
    :precondition (and (at ?a ?n) (located ?b ?n) (burning ?b))
    :effect (and (extinguished ?b) (not (burning ?b)))))
)";

constexpr std::string_view kUnbury = R"((define (domain unbury)
  (:requirements :strips :typing)
  (:types node agent victim)
  (:predicates
    (at ?a - agent ?n - node)
    (connected ?x - node ?y - node)
    (located ?v - victim ?n - node)
    (buried ?v - victim)
    (unburied ?v - victim))
  (:action move
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?from ?to))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action move-reverse
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?to ?from))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action unbury
    :parameters (?a - agent ?v - victim ?n - node)
    :precondition (and (at ?a ?n) (located ?v ?n) (buried ?v))
    :effect (and (unburied ?v) (not (buried ?v)))))
)";

constexpr std::string_view kClear = R"((define (domain clear)
  (:requirements :strips :typing)
  (:types node agent road)
  (:predicates
    (at ?a - agent ?n - node)
    (connected ?x - node ?y - node)
    (endpoint ?r - road ?n - node)
    (blocked ?r - road)
    (cleared ?r - road))
  (:action move
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?from ?to))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action move-reverse
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?to ?from))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action clear
    :parameters (?a - agent ?r - road ?n - node)
    :precondition (and (at ?a ?n) (endpoint ?r ?n) (blocked ?r))
    :effect (and (cleared ?r) (not (blocked ?r)))))
)";

constexpr std::string_view kScout = R"((define (domain scout)
  (:requirements :strips :typing)
  (:types node agent building)
  (:predicates
    (at ?a - agent ?n - node)
    (connected ?x - node ?y - node)
    (located ?b - building ?n - node)
    (unscouted ?b - building)
    (scouted ?b - building))
  (:action move
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?from ?to))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action move-reverse
    :parameters (?a - agent ?from - node ?to - node)
    :precondition (and (at ?a ?from) (connected ?to ?from))
    :effect (and (at ?a ?to) (not (at ?a ?from))))
  (:action scout
    :parameters (?a - agent ?b - building ?n - node)
    :precondition (and (at ?a ?n) (located ?b ?n) (unscouted ?b))
    :effect (and (scouted ?b) (not (unscouted ?b)))))
)";

std::string atom(std::initializer_list<std::string> parts)
{
    std::string out = "(";
    bool first = true;
    for (const auto& p : parts) {
        out += (first ? "" : " ") + p;
        first = false;
    }
    return out + ")";
}

} // namespace

std::string_view domain_pddl(GoalType t)
{
    switch (t) {
    case GoalType::douse:
        return kDouse;
    case GoalType::unbury:
        return kUnbury;
    case GoalType::unblock:
        return kClear;
    case GoalType::scout:
        return kScout;
    }
    return {};
}

std::string domain_name(GoalType t)
{
    return t == GoalType::unblock ? "clear" : std::string(to_string(t));
}

std::string pddl_name(std::string_view id)
{
    std::string out;
    for (char c : id) {
        const auto u = static_cast<unsigned char>(c);
        out += std::isalnum(u) || c == '_' || c == '-' ? static_cast<char>(std::tolower(u)) : '_';
    }
    if (out.empty() || !std::isalpha(static_cast<unsigned char>(out.front()))) {
        out.insert(0, "x");
    }
    return out;
}

std::string PddlProblem::to_string() const
{
    std::ostringstream out;
    out << "(define (problem " << name << ")\n  (:domain " << domain << ")\n  (:objects";
    // Group consecutive objects of the same type.
    for (std::size_t i = 0; i < objects.size();) {
        out << "\n   ";
        std::size_t j = i;
        while (j < objects.size() && objects[j].second == objects[i].second) {
            out << ' ' << objects[j].first;
            ++j;
        }
        out << " - " << objects[i].second;
        i = j;
    }
    out << ")\n  (:init";
    for (const auto& f : init) {
        out << "\n    " << f;
    }
    out << ")\n  (:goal (and";
    for (const auto& g : goal) {
        out << ' ' << g;
    }
    out << ")))\n";
    return out.str();
}

PddlProblem make_pddl_problem(const GoalSpec& goal, const std::string& agent,
                              const sim::Belief& belief, const RoadGraph& graph)
{
    const auto* a = belief.get<sim::Agent>(agent);
    auto site = target_site(goal, belief);
    if (!a || !site) {
        throw Error(ErrorCode::unknown_entity,
                    "agent '" + agent + "' or target '" + goal.target + "' not in belief");
    }
    PddlProblem p;
    p.domain = domain_name(goal.type);
    p.name = pddl_name(goal.id + "-" + agent);
    for (const auto& n : graph.nodes()) {
        p.objects.emplace_back(pddl_name(n), "node");
    }
    const std::string ag = pddl_name(agent);
    const std::string tg = pddl_name(goal.target);
    p.objects.emplace_back(ag, "agent");
    const char* target_type = goal.type == GoalType::unbury    ? "victim"
                              : goal.type == GoalType::unblock ? "road"
                                                               : "building";
    p.objects.emplace_back(tg, target_type);

    p.init.push_back(atom({"at", ag, pddl_name(a->node)}));
    for (const auto& e : graph.edges()) {
        if (!e.blocked) {
            p.init.push_back(atom({"connected", pddl_name(e.a), pddl_name(e.b)}));
        }
    }
    const bool pending = site->repetitions > 0;
    std::string need;
    std::string done;
    switch (goal.type) {
    case GoalType::douse:
        need = "burning";
        done = "extinguished";
        break;
    case GoalType::unbury:
        need = "buried";
        done = "unburied";
        break;
    case GoalType::unblock:
        need = "blocked";
        done = "cleared";
        break;
    case GoalType::scout:
        need = "unscouted";
        done = "scouted";
        break;
    }
    for (const auto& n : site->nodes) {
        p.init.push_back(atom({goal.type == GoalType::unblock ? "endpoint" : "located", tg, pddl_name(n)}));
    }
    p.init.push_back(atom({pending ? need : done, tg}));
    p.goal.push_back(atom({done, tg}));
    return p;
}

std::string emit_pddl_problem(const GoalSpec& goal, const std::string& agent,
                              const sim::Belief& belief, const RoadGraph& graph)
{
    return make_pddl_problem(goal, agent, belief, graph).to_string();
}

// -- a small STRIPS reader and breadth-first solver ---------------------------------

namespace {

struct SExpr {
    std::string atom;
    std::vector<SExpr> list;
    bool is_list = false;
};

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::syntax, "pddl: " + msg); }

SExpr read_sexpr(std::string_view text)
{
    std::size_t i = 0;
    std::function<SExpr()> read = [&]() -> SExpr {
        auto skip = [&] {
            while (i < text.size()) {
                if (std::isspace(static_cast<unsigned char>(text[i]))) {
                    ++i;
                } else if (text[i] == ';') {
                    while (i < text.size() && text[i] != '\n') {
                        ++i;
                    }
                } else {
                    break;
                }
            }
        };
        skip();
        if (i >= text.size()) {
            bad("unexpected end of input");
        }
        if (text[i] == ')') {
            bad("unexpected ')'");
        }
        SExpr e;
        if (text[i] == '(') {
            ++i;
            e.is_list = true;
            for (;;) {
                skip();
                if (i >= text.size()) {
                    bad("unbalanced '('");
                }
                if (text[i] == ')') {
                    ++i;
                    break;
                }
                e.list.push_back(read());
            }
            return e;
        }
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
               text[i] != '(' && text[i] != ')' && text[i] != ';') {
            ++i;
        }
        e.atom = std::string(text.substr(start, i - start));
        std::transform(e.atom.begin(), e.atom.end(), e.atom.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return e;
    };
    SExpr root = read();
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
        ++i;
    }
    if (i != text.size()) {
        bad("trailing input");
    }
    return root;
}

const std::string& word(const SExpr& e)
{
    if (e.is_list) {
        bad("expected a name");
    }
    return e.atom;
}

/// "a b - t c - u" into (name, type) pairs; untyped names get "object".
std::vector<std::pair<std::string, std::string>> typed_list(const std::vector<SExpr>& items,
                                                            std::size_t from)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::vector<std::string> pending;
    for (std::size_t i = from; i < items.size(); ++i) {
        const std::string& w = word(items[i]);
        if (w == "-") {
            if (i + 1 >= items.size()) {
                bad("dangling '-'");
            }
            const std::string& type = word(items[++i]);
            for (auto& p : pending) {
                out.emplace_back(std::move(p), type);
            }
            pending.clear();
        } else {
            pending.push_back(w);
        }
    }
    for (auto& p : pending) {
        out.emplace_back(std::move(p), "object");
    }
    return out;
}

struct Atom {
    std::string pred;
    std::vector<std::string> args;
};

Atom read_atom(const SExpr& e)
{
    if (!e.is_list || e.list.empty()) {
        bad("expected an atom");
    }
    Atom a{word(e.list[0]), {}};
    for (std::size_t i = 1; i < e.list.size(); ++i) {
        a.args.push_back(word(e.list[i]));
    }
    return a;
}

/// Conjunction of literals; `negatives` receives (not ...) atoms.
std::vector<Atom> read_conjunction(const SExpr& e, std::vector<Atom>* negatives)
{
    std::vector<Atom> out;
    auto one = [&](const SExpr& lit) {
        if (lit.is_list && !lit.list.empty() && !lit.list[0].is_list && lit.list[0].atom == "not") {
            if (!negatives || lit.list.size() != 2) {
                bad("negation not allowed here");
            }
            negatives->push_back(read_atom(lit.list[1]));
        } else {
            out.push_back(read_atom(lit));
        }
    };
    if (e.is_list && !e.list.empty() && !e.list[0].is_list && e.list[0].atom == "and") {
        for (std::size_t i = 1; i < e.list.size(); ++i) {
            one(e.list[i]);
        }
    } else if (e.is_list && !e.list.empty()) {
        one(e);
    }
    return out;
}

struct ActionSchema {
    std::string name;
    std::vector<std::pair<std::string, std::string>> params;
    std::vector<Atom> pre;
    std::vector<Atom> add;
    std::vector<Atom> del;
};

struct Domain {
    std::string name;
    std::map<std::string, std::string> parent; // type -> supertype
    std::map<std::string, std::size_t> arity;
    std::vector<ActionSchema> actions;
};

const SExpr& expect_define(const SExpr& root, const char* kind, std::string& name)
{
    if (!root.is_list || root.list.size() < 2 || word(root.list[0]) != "define") {
        bad("expected (define ...)");
    }
    const SExpr& head = root.list[1];
    if (!head.is_list || head.list.size() != 2 || word(head.list[0]) != kind) {
        bad(std::string("expected (") + kind + " name)");
    }
    name = word(head.list[1]);
    return root;
}

Domain read_domain(std::string_view text)
{
    const SExpr root = read_sexpr(text);
    Domain d;
    expect_define(root, "domain", d.name);
    for (std::size_t s = 2; s < root.list.size(); ++s) {
        const SExpr& sec = root.list[s];
        if (!sec.is_list || sec.list.empty()) {
            bad("expected a section");
        }
        const std::string& key = word(sec.list[0]);
        if (key == ":requirements") {
            for (std::size_t i = 1; i < sec.list.size(); ++i) {
                const std::string& r = word(sec.list[i]);
                if (r != ":strips" && r != ":typing") {
                    bad("unsupported requirement " + r);
                }
            }
        } else if (key == ":types") {
            for (auto& [t, p] : typed_list(sec.list, 1)) {
                d.parent[t] = p;
            }
        } else if (key == ":predicates") {
            for (std::size_t i = 1; i < sec.list.size(); ++i) {
                const SExpr& p = sec.list[i];
                if (!p.is_list || p.list.empty()) {
                    bad("malformed predicate");
                }
                d.arity[word(p.list[0])] = typed_list(p.list, 1).size();
            }
        } else if (key == ":action") {
            ActionSchema a;
            if (sec.list.size() < 2) {
                bad("action without a name");
            }
            a.name = word(sec.list[1]);
            for (std::size_t i = 2; i + 1 < sec.list.size(); i += 2) {
                const std::string& k = word(sec.list[i]);
                const SExpr& v = sec.list[i + 1];
                if (k == ":parameters") {
                    if (!v.is_list) {
                        bad("parameters must be a list");
                    }
                    a.params = typed_list(v.list, 0);
                } else if (k == ":precondition") {
                    a.pre = read_conjunction(v, nullptr);
                } else if (k == ":effect") {
                    a.add = read_conjunction(v, &a.del);
                } else {
                    bad("unknown action field " + k);
                }
            }
            d.actions.push_back(std::move(a));
        } else {
            bad("unsupported section " + key);
        }
    }
    auto check = [&](const Atom& at, const ActionSchema& a) {
        auto it = d.arity.find(at.pred);
        if (it == d.arity.end() || it->second != at.args.size()) {
            bad("action " + a.name + " uses undeclared predicate " + at.pred);
        }
        for (const auto& x : at.args) {
            const bool known = std::any_of(a.params.begin(), a.params.end(),
                                           [&](const auto& p) { return p.first == x; });
            if (!known) {
                bad("action " + a.name + " uses unbound " + x);
            }
        }
    };
    for (const auto& a : d.actions) {
        for (const auto* group : {&a.pre, &a.add, &a.del}) {
            for (const auto& at : *group) {
                check(at, a);
            }
        }
    }
    return d;
}

std::string fact_key(const std::string& pred, const std::vector<std::string>& args)
{
    std::string k = pred;
    for (const auto& a : args) {
        k += ' ';
        k += a;
    }
    return k;
}

} // namespace

std::optional<std::vector<std::string>> solve_strips(std::string_view domain_text,
                                                     std::string_view problem_text,
                                                     std::size_t max_states)
{
    const Domain d = read_domain(domain_text);
    const SExpr root = read_sexpr(problem_text);
    std::string pname;
    expect_define(root, "problem", pname);

    std::vector<std::pair<std::string, std::string>> objects;
    std::set<std::string> init;
    std::vector<std::string> goal;
    bool saw_domain = false;
    for (std::size_t s = 2; s < root.list.size(); ++s) {
        const SExpr& sec = root.list[s];
        if (!sec.is_list || sec.list.empty()) {
            bad("expected a section");
        }
        const std::string& key = word(sec.list[0]);
        auto ground = [&](const Atom& a) {
            auto it = d.arity.find(a.pred);
            if (it == d.arity.end() || it->second != a.args.size()) {
                bad("undeclared predicate " + a.pred);
            }
            for (const auto& x : a.args) {
                const bool known = std::any_of(objects.begin(), objects.end(),
                                               [&](const auto& o) { return o.first == x; });
                if (!known) {
                    bad("unknown object " + x);
                }
            }
            return fact_key(a.pred, a.args);
        };
        if (key == ":domain") {
            if (sec.list.size() != 2 || word(sec.list[1]) != d.name) {
                bad("problem is for a different domain");
            }
            saw_domain = true;
        } else if (key == ":objects") {
            objects = typed_list(sec.list, 1);
            std::set<std::string> names;
            for (const auto& [n, t] : objects) {
                if (!names.insert(n).second) {
                    bad("duplicate object " + n);
                }
                if (!d.parent.contains(t) && t != "object") {
                    bad("undeclared type " + t);
                }
            }
        } else if (key == ":init") {
            for (std::size_t i = 1; i < sec.list.size(); ++i) {
                init.insert(ground(read_atom(sec.list[i])));
            }
        } else if (key == ":goal") {
            if (sec.list.size() != 2) {
                bad("malformed goal");
            }
            for (const auto& a : read_conjunction(sec.list[1], nullptr)) {
                goal.push_back(ground(a));
            }
        } else {
            bad("unsupported section " + key);
        }
    }
    if (!saw_domain) {
        bad("problem names no domain");
    }

    auto is_a = [&](std::string t, const std::string& want) {
        for (int guard = 0; guard < 64; ++guard) {
            if (t == want || want == "object") {
                return true;
            }
            auto it = d.parent.find(t);
            if (it == d.parent.end() || it->second == t) {
                return false;
            }
            t = it->second;
        }
        return false;
    };

    using State = std::set<std::string>;
    auto satisfied = [&](const State& st) {
        return std::all_of(goal.begin(), goal.end(), [&](const auto& g) { return st.contains(g); });
    };

    // Successors by matching preconditions against the state's facts.
    auto successors = [&](const State& st, auto&& emit) {
        std::map<std::string, std::vector<std::vector<std::string>>> by_pred;
        for (const auto& f : st) {
            std::istringstream in(f);
            std::string pred;
            in >> pred;
            std::vector<std::string> args;
            for (std::string x; in >> x;) {
                args.push_back(x);
            }
            by_pred[pred].push_back(std::move(args));
        }
        for (const auto& a : d.actions) {
            std::map<std::string, std::string> bind;
            std::function<void(std::size_t)> match = [&](std::size_t k) {
                if (k == a.pre.size()) {
                    // Parameters not mentioned in preconditions range over objects.
                    std::function<void(std::size_t)> fill = [&](std::size_t p) {
                        if (p == a.params.size()) {
                            State next = st;
                            auto subst = [&](const Atom& at) {
                                std::vector<std::string> args;
                                for (const auto& x : at.args) {
                                    args.push_back(bind.at(x));
                                }
                                return fact_key(at.pred, args);
                            };
                            for (const auto& at : a.del) {
                                next.erase(subst(at));
                            }
                            for (const auto& at : a.add) {
                                next.insert(subst(at));
                            }
                            std::string label = "(" + a.name;
                            for (const auto& [n, t] : a.params) {
                                label += " " + bind.at(n);
                            }
                            emit(std::move(next), label + ")");
                            return;
                        }
                        const auto& [n, t] = a.params[p];
                        if (auto it = bind.find(n); it != bind.end()) {
                            fill(p + 1);
                            return;
                        }
                        for (const auto& [o, ot] : objects) {
                            if (is_a(ot, t)) {
                                bind[n] = o;
                                fill(p + 1);
                                bind.erase(n);
                            }
                        }
                    };
                    // Type-check the bindings made by matching.
                    for (const auto& [n, t] : a.params) {
                        if (auto it = bind.find(n); it != bind.end()) {
                            auto obj = std::find_if(objects.begin(), objects.end(),
                                                    [&](const auto& o) { return o.first == it->second; });
                            if (obj == objects.end() || !is_a(obj->second, t)) {
                                return;
                            }
                        }
                    }
                    fill(0);
                    return;
                }
                const Atom& pre = a.pre[k];
                auto it = by_pred.find(pre.pred);
                if (it == by_pred.end()) {
                    return;
                }
                for (const auto& args : it->second) {
                    std::vector<std::string> fresh;
                    bool ok = true;
                    for (std::size_t i = 0; i < args.size() && ok; ++i) {
                        auto b = bind.find(pre.args[i]);
                        if (b == bind.end()) {
                            bind[pre.args[i]] = args[i];
                            fresh.push_back(pre.args[i]);
                        } else if (b->second != args[i]) {
                            ok = false;
                        }
                    }
                    if (ok) {
                        match(k + 1);
                    }
                    for (const auto& f : fresh) {
                        bind.erase(f);
                    }
                }
            };
            match(0);
        }
    };

    struct Visit {
        std::size_t parent;
        std::string action;
    };
    std::map<State, std::size_t> seen;
    std::vector<Visit> visits;
    std::deque<std::pair<State, std::size_t>> queue;
    seen.emplace(init, 0);
    visits.push_back({0, {}});
    queue.emplace_back(init, 0);
    while (!queue.empty()) {
        auto [st, id] = std::move(queue.front());
        queue.pop_front();
        if (satisfied(st)) {
            std::vector<std::string> plan;
            for (std::size_t v = id; v != 0; v = visits[v].parent) {
                plan.push_back(visits[v].action);
            }
            std::reverse(plan.begin(), plan.end());
            return plan;
        }
        successors(st, [&](State next, std::string label) {
            if (seen.size() >= max_states || seen.contains(next)) {
                return;
            }
            const std::size_t nid = visits.size();
            seen.emplace(next, nid);
            visits.push_back({id, std::move(label)});
            queue.emplace_back(std::move(next), nid);
        });
    }
    return std::nullopt;
}

} // namespace rescue::planner
