#pragma once

// Random generators shared by the unit and acceptance suites.

#include "rescue/kb/frame.hpp"
#include "rescue/rdr/tree.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace gen {

using Rng = std::mt19937_64;

inline std::size_t pick(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline bool coin(Rng& rng, double p = 0.5)
{
    return std::bernoulli_distribution(p)(rng);
}

/// Slot vocabulary: slot name -> admissible atoms.
struct Vocabulary {
    std::vector<std::string> slots;
    std::vector<std::vector<std::string>> values;
    std::vector<std::string> conclusions;
};

inline Vocabulary random_vocabulary(Rng& rng)
{
    Vocabulary v;
    const std::size_t n_slots = 2 + pick(rng, 6);
    for (std::size_t i = 0; i < n_slots; ++i) {
        v.slots.push_back("s" + std::to_string(i));
        std::vector<std::string> vals;
        const std::size_t n_vals = 2 + pick(rng, 4);
        for (std::size_t j = 0; j < n_vals; ++j) {
            vals.push_back("v" + std::to_string(i) + "_" + std::to_string(j));
        }
        v.values.push_back(std::move(vals));
    }
    const std::size_t n_concl = 2 + pick(rng, 4);
    for (std::size_t i = 0; i < n_concl; ++i) {
        v.conclusions.push_back("c" + std::to_string(i));
    }
    return v;
}

/// Each slot is bound with probability `density`.
inline rescue::rdr::Bindings random_case(Rng& rng, const Vocabulary& v, double density = 0.8)
{
    rescue::rdr::Bindings b;
    for (std::size_t i = 0; i < v.slots.size(); ++i) {
        if (coin(rng, density)) {
            b[v.slots[i]] = v.values[i][pick(rng, v.values[i].size())];
        }
    }
    return b;
}

/// Arbitrary tree shape with random conditions; cornerstones are empty cases
/// and do not satisfy the usual invariants. For evaluator checks only.
inline rescue::rdr::Tree random_shape_tree(Rng& rng, const Vocabulary& v, int max_nodes = 25)
{
    using namespace rescue::rdr;
    int budget = 1 + static_cast<int>(pick(rng, static_cast<std::size_t>(max_nodes)));
    int counter = 0;
    std::map<std::string, Case> store;
    auto make = [&](auto& self, bool root, int depth) -> NodePtr {
        auto n = std::make_shared<Node>();
        n->conclusion = v.conclusions[pick(rng, v.conclusions.size())];
        n->cornerstone = "k" + std::to_string(counter++);
        store.emplace(n->cornerstone, Case{n->cornerstone, {}, 0});
        if (!root) {
            const std::size_t lits = 1 + pick(rng, 2);
            for (std::size_t i = 0; i < lits; ++i) {
                const std::size_t s = pick(rng, v.slots.size());
                n->condition.literals.push_back(
                    {v.slots[s], v.values[s][pick(rng, v.values[s].size())]});
            }
        }
        --budget;
        if (budget > 0 && depth < 8 && coin(rng, 0.6)) {
            n->except_child = self(self, false, depth + 1);
        }
        if (!root && budget > 0 && coin(rng, 0.5)) {
            n->else_child = self(self, false, depth + 1);
        }
        return n;
    };
    NodePtr root = make(make, true, 0);
    return Tree(root, std::move(store), "rand");
}

struct UpdateStep {
    rescue::rdr::Case c;
    std::string correct;
    rescue::rdr::Condition condition;
};

/// Draws one update that satisfies apply_update's preconditions, or returns
/// false when the sampled case cannot be discriminated.
inline bool random_valid_update(Rng& rng, const Vocabulary& v, const rescue::rdr::Tree& tree,
                                UpdateStep& out)
{
    using namespace rescue::rdr;
    for (int attempt = 0; attempt < 50; ++attempt) {
        Bindings b = random_case(rng, v);
        Evaluation e = evaluate(tree, b);
        std::vector<std::string> choices;
        for (const auto& c : v.conclusions) {
            if (c != e.conclusion) {
                choices.push_back(c);
            }
        }
        auto diffs = candidate_differences(tree.cornerstone_of(*e.fired.node), b);
        if (diffs.empty()) {
            continue;
        }
        std::shuffle(diffs.begin(), diffs.end(), rng);
        diffs.resize(1 + pick(rng, std::min<std::size_t>(diffs.size(), 3)));
        out.c = Case{"", std::move(b), 0};
        out.correct = choices[pick(rng, choices.size())];
        out.condition = Condition{std::move(diffs)};
        return true;
    }
    return false;
}

/// Tree built purely through valid updates.
inline rescue::rdr::Tree random_learned_tree(Rng& rng, const Vocabulary& v, int updates,
                                             const std::string& domain = "rand")
{
    rescue::rdr::Tree tree(v.conclusions.front(), "case0", domain);
    UpdateStep step;
    for (int i = 0; i < updates; ++i) {
        if (random_valid_update(rng, v, tree, step)) {
            step.c.created_at = static_cast<std::int64_t>(i);
            tree = rescue::rdr::apply_update(tree, step.c, step.correct, step.condition);
        }
    }
    return tree;
}

/// Knowledge base with generic frames (some with learned goal trees, some
/// multi-parent) and instance frames holding in-range values.
inline rescue::kb::FrameSet random_kb(Rng& rng)
{
    using namespace rescue::kb;
    FrameSet kb;
    std::vector<std::string> generics;
    const std::size_t n_generic = pick(rng, 4) + (coin(rng, 0.9) ? 1 : 0);
    for (std::size_t g = 0; g < n_generic; ++g) {
        Frame f;
        f.id = "g" + std::to_string(g);
        f.kind = FrameKind::generic;
        if (generics.empty() || coin(rng, 0.4)) {
            f.parents.push_back(kRootFrame);
        } else {
            f.parents.push_back(generics[pick(rng, generics.size())]);
            if (generics.size() > 1 && coin(rng, 0.2)) {
                const auto& extra = generics[pick(rng, generics.size())];
                if (extra != f.parents.front()) {
                    f.parents.push_back(extra);
                }
            }
        }
        Vocabulary v = random_vocabulary(rng);
        for (std::size_t s = 0; s < v.slots.size(); ++s) {
            Slot slot;
            slot.name = f.id + "_" + v.slots[s];
            slot.range = v.values[s];
            if (coin(rng, 0.2)) {
                slot.value = v.values[s][pick(rng, v.values[s].size())];
            }
            f.slots.push_back(std::move(slot));
        }
        if (coin(rng, 0.8)) {
            // Rename vocabulary slots to the frame-local names.
            Vocabulary local = v;
            for (auto& s : local.slots) {
                s = f.id + "_" + s;
            }
            Slot goal;
            goal.name = f.id + "_goal";
            goal.range = local.conclusions;
            goal.if_needed = random_learned_tree(rng, local, static_cast<int>(pick(rng, 12)), f.id);
            if (coin(rng, 0.7)) {
                goal.if_replaced = std::vector<std::string>{local.slots.front()};
            }
            f.slots.push_back(std::move(goal));
        }
        if (coin(rng, 0.3)) {
            f.slots.push_back(Slot{f.id + "_free", {}, {}, {}, {}});
        }
        kb.add(std::move(f));
        generics.push_back("g" + std::to_string(g));
    }
    const std::size_t n_inst = generics.empty() ? 0 : pick(rng, 6);
    for (std::size_t i = 0; i < n_inst; ++i) {
        Frame inst;
        inst.id = "inst_" + std::to_string(i) + "_" + std::to_string(rng() % 100000);
        inst.kind = FrameKind::instance;
        const std::string parent = generics[pick(rng, generics.size())];
        inst.parents.push_back(parent);
        for (const Frame* f : kb.lineage(parent)) {
            for (const Slot& s : f->slots) {
                if (s.range && !s.if_needed && coin(rng, 0.5) && !inst.find_slot(s.name)) {
                    inst.slots.push_back(
                        Slot{s.name, {}, (*s.range)[pick(rng, s.range->size())], {}, {}});
                }
            }
        }
        if (!kb.contains(inst.id)) {
            kb.add(std::move(inst));
        }
    }
    return kb;
}

} // namespace gen
