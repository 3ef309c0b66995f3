#pragma once

// Ripple-down rule trees.
//
// A tree is a chain of `if <condition> then <conclusion> because <case>`
// nodes linked by two kinds of edges: an except edge, followed when the node
// fires, whose subtree may override the node's conclusion; and an else edge,
// followed when the node's condition fails. The root is always `if true`, so
// every case receives some conclusion. Each node remembers the cornerstone
// case that justified its creation.
//
// Trees are immutable values. apply_update() returns a new tree that shares
// every untouched node with its input.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rescue::rdr {

using Atom = std::string;
using Bindings = std::map<std::string, Atom>;

/// Frozen slot-value snapshot. Never modified after it enters a tree.
struct Case {
    std::string id;
    Bindings bindings;
    std::int64_t created_at = 0;

    std::optional<Atom> value(const std::string& key) const;

    friend bool operator==(const Case&, const Case&) = default;
};

/// Equality test `this slot == atom` or `Var == atom`. Variables (GoalA,
/// GoalB) are keys that start with an upper-case letter; they read from the
/// case exactly like slots, only the surface syntax differs.
struct Literal {
    std::string key;
    Atom value;

    bool is_variable() const;
    bool holds(const Bindings& bindings) const;
    std::string to_string() const;

    friend bool operator==(const Literal&, const Literal&) = default;
};

/// Conjunction of literals. The empty conjunction is the `true` condition.
struct Condition {
    std::vector<Literal> literals;

    bool is_true() const { return literals.empty(); }
    bool holds(const Bindings& bindings) const;
    std::string to_string() const;

    friend bool operator==(const Condition&, const Condition&) = default;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    Condition condition;
    Atom conclusion;
    // Empty only for a root written without a `because` clause.
    std::string cornerstone;
    NodePtr except_child;
    NodePtr else_child;
};

bool structurally_equal(const Node* a, const Node* b);

enum class Branch : char { except_edge = 'x', else_edge = 'e' };
using NodePath = std::vector<Branch>;

/// "root", "root.x", "root.x.e.e", ...
std::string to_string(const NodePath& path);
std::optional<NodePath> parse_node_path(std::string_view text);

struct NodeRef {
    NodePath path;
    const Node* node = nullptr;
};

class Tree {
public:
    /// Default-only tree: `if true then <conclusion> [because <root_case>]`.
    explicit Tree(Atom default_conclusion, std::string root_case = "case0",
                  std::string domain = {});

    /// Adopts an existing node structure. Every `because` id must resolve in
    /// `cornerstones`, except the root's, which defaults to the empty case.
    Tree(NodePtr root, std::map<std::string, Case> cornerstones,
         std::string domain = {});

    const Node& root() const { return *root_; }
    const NodePtr& root_ptr() const { return root_; }
    const std::map<std::string, Case>& cornerstones() const { return cornerstones_; }
    const std::string& domain() const { return domain_; }
    void set_domain(std::string domain) { domain_ = std::move(domain); }

    const Case& cornerstone_of(const Node& node) const;
    const Node* find(const NodePath& path) const;
    /// Pre-order: node, except subtree, else subtree.
    std::vector<NodeRef> nodes() const;
    std::size_t size() const;
    std::vector<Atom> conclusions() const;

    /// `case_<prefix>_<n>` with the smallest n not yet used in this tree.
    std::string next_case_id(std::string_view prefix) const;

    friend bool operator==(const Tree& a, const Tree& b);

private:
    NodePtr root_;
    std::map<std::string, Case> cornerstones_;
    std::string domain_;
    Case empty_case_;
};

struct Evaluation {
    Atom conclusion;
    NodeRef fired;
};

/// Conclusion of the deepest node that fires.
Evaluation evaluate(const Tree& tree, const Bindings& bindings);

/// One `slot == value` literal for every binding of `new_case` that the
/// cornerstone lacks or disagrees with. Hint slots come first, in hint order;
/// the rest follow in key order.
std::vector<Literal> candidate_differences(const Case& cornerstone,
                                           const Bindings& new_case,
                                           std::span<const std::string> hints = {});

/// Adds one rule so that `c` concludes `correct`. The rule goes under the
/// fired node's except edge, or at the end of its exception chain when that
/// edge is already taken. Throws Error(no_change | empty_selection |
/// condition_not_satisfied | non_discriminating | duplicate_id).
///
/// An empty `c.id` is replaced by next_case_id(tree.domain()).
Tree apply_update(const Tree& tree, Case c, const Atom& correct,
                  const Condition& selected);

struct Violation {
    NodePath node;
    std::string cornerstone;
    Atom expected;
    Atom actual;
    NodePath actual_fired;
};

/// Every cornerstone must fire its own node and reproduce its conclusion.
std::vector<Violation> verify_cornerstones(const Tree& tree);

// Goal ordering trees classify the pair case {GoalA: a, GoalB: b} and
// conclude `true` when a must be pursued before b.

inline constexpr const char* kGoalA = "GoalA";
inline constexpr const char* kGoalB = "GoalB";

bool evaluate_order(const Tree& tree, const Atom& a, const Atom& b);

/// Pairs (a, b) with a != b where both a-before-b and b-before-a hold, plus
/// (a, a) pairs where a type precedes itself.
std::vector<std::pair<Atom, Atom>> ordering_conflicts(const Tree& tree,
                                                      std::span<const Atom> vocabulary);

/// A precedence cycle among the vocabulary, if any (first vertex repeated at
/// the end).
std::optional<std::vector<Atom>> ordering_cycle(const Tree& tree,
                                                std::span<const Atom> vocabulary);

/// Canonical text: 4-space indentation, `then` on its own line for every
/// non-trivial condition.
std::string format_tree(const Tree& tree, int indent = 0);

} // namespace rescue::rdr
