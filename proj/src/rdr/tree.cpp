#include "rescue/rdr/tree.hpp"

#include "rescue/error.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>
#include <sstream>

namespace rescue::rdr {

std::optional<Atom> Case::value(const std::string& key) const
{
    auto it = bindings.find(key);
    if (it == bindings.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool Literal::is_variable() const
{
    return !key.empty() && std::isupper(static_cast<unsigned char>(key.front()));
}

bool Literal::holds(const Bindings& bindings) const
{
    auto it = bindings.find(key);
    return it != bindings.end() && it->second == value;
}

std::string Literal::to_string() const
{
    if (is_variable()) {
        return key + " == " + value;
    }
    return "this " + key + " == " + value;
}

bool Condition::holds(const Bindings& bindings) const
{
    return std::all_of(literals.begin(), literals.end(),
                       [&](const Literal& l) { return l.holds(bindings); });
}

std::string Condition::to_string() const
{
    if (literals.empty()) {
        return "true";
    }
    std::string out;
    for (std::size_t i = 0; i < literals.size(); ++i) {
        if (i > 0) {
            out += " and ";
        }
        out += literals[i].to_string();
    }
    return out;
}

bool structurally_equal(const Node* a, const Node* b)
{
    if (a == b) {
        return true;
    }
    if (a == nullptr || b == nullptr) {
        return false;
    }
    return a->condition == b->condition && a->conclusion == b->conclusion &&
           a->cornerstone == b->cornerstone &&
           structurally_equal(a->except_child.get(), b->except_child.get()) &&
           structurally_equal(a->else_child.get(), b->else_child.get());
}

std::string to_string(const NodePath& path)
{
    std::string out = "root";
    for (Branch b : path) {
        out += '.';
        out += static_cast<char>(b);
    }
    return out;
}

std::optional<NodePath> parse_node_path(std::string_view text)
{
    if (text.substr(0, 4) != "root") {
        return std::nullopt;
    }
    text.remove_prefix(4);
    NodePath path;
    while (!text.empty()) {
        if (text.size() < 2 || text[0] != '.') {
            return std::nullopt;
        }
        if (text[1] == 'x') {
            path.push_back(Branch::except_edge);
        } else if (text[1] == 'e') {
            path.push_back(Branch::else_edge);
        } else {
            return std::nullopt;
        }
        text.remove_prefix(2);
    }
    return path;
}

// ---------------------------------------------------------------------------

Tree::Tree(Atom default_conclusion, std::string root_case, std::string domain)
    : domain_(std::move(domain))
{
    auto root = std::make_shared<Node>();
    root->conclusion = std::move(default_conclusion);
    root->cornerstone = root_case;
    root_ = std::move(root);
    if (!root_case.empty()) {
        cornerstones_.emplace(root_case, Case{root_case, {}, 0});
    }
}

Tree::Tree(NodePtr root, std::map<std::string, Case> cornerstones, std::string domain)
    : root_(std::move(root)), cornerstones_(std::move(cornerstones)), domain_(std::move(domain))
{
    if (!root_) {
        throw Error(ErrorCode::inconsistent_tree, "rdr tree has no root");
    }
    if (!root_->condition.is_true()) {
        throw Error(ErrorCode::inconsistent_tree, "rdr root condition must be `true`");
    }
    if (!root_->cornerstone.empty() && !cornerstones_.contains(root_->cornerstone)) {
        cornerstones_.emplace(root_->cornerstone, Case{root_->cornerstone, {}, 0});
    }
    for (const NodeRef& ref : nodes()) {
        if (ref.node == root_.get()) {
            continue;
        }
        if (ref.node->cornerstone.empty()) {
            throw Error(ErrorCode::inconsistent_tree,
                        "rule at " + to_string(ref.path) + " has no cornerstone case");
        }
        if (!cornerstones_.contains(ref.node->cornerstone)) {
            throw Error(ErrorCode::inconsistent_tree,
                        "cornerstone `" + ref.node->cornerstone + "` is not in the case store");
        }
    }
}

const Case& Tree::cornerstone_of(const Node& node) const
{
    if (node.cornerstone.empty()) {
        return empty_case_;
    }
    auto it = cornerstones_.find(node.cornerstone);
    return it == cornerstones_.end() ? empty_case_ : it->second;
}

const Node* Tree::find(const NodePath& path) const
{
    const Node* n = root_.get();
    for (Branch b : path) {
        if (n == nullptr) {
            return nullptr;
        }
        n = (b == Branch::except_edge ? n->except_child : n->else_child).get();
    }
    return n;
}

std::vector<NodeRef> Tree::nodes() const
{
    std::vector<NodeRef> out;
    NodePath path;
    std::function<void(const Node*)> walk = [&](const Node* n) {
        // Else chains can get long; iterate along them, recurse on except.
        std::size_t depth = path.size();
        while (n != nullptr) {
            out.push_back({path, n});
            if (n->except_child) {
                path.push_back(Branch::except_edge);
                walk(n->except_child.get());
                path.pop_back();
            }
            path.push_back(Branch::else_edge);
            n = n->else_child.get();
        }
        path.resize(depth);
    };
    walk(root_.get());
    return out;
}

std::size_t Tree::size() const
{
    return nodes().size();
}

std::vector<Atom> Tree::conclusions() const
{
    std::set<Atom> seen;
    for (const NodeRef& ref : nodes()) {
        seen.insert(ref.node->conclusion);
    }
    return {seen.begin(), seen.end()};
}

std::string Tree::next_case_id(std::string_view prefix) const
{
    const std::string stem = "case_" + std::string(prefix) + "_";
    std::size_t n = 1;
    for (const auto& [id, c] : cornerstones_) {
        if (id.starts_with(stem)) {
            ++n;
        }
    }
    while (cornerstones_.contains(stem + std::to_string(n))) {
        ++n;
    }
    return stem + std::to_string(n);
}

bool operator==(const Tree& a, const Tree& b)
{
    return structurally_equal(a.root_.get(), b.root_.get()) && a.cornerstones_ == b.cornerstones_;
}

// ---------------------------------------------------------------------------

Evaluation evaluate(const Tree& tree, const Bindings& bindings)
{
    // Walk: a firing node records itself and descends into its exceptions;
    // a failing node hands over to its else sibling.
    const Node* fired = nullptr;
    NodePath fired_path;
    NodePath path;
    const Node* n = &tree.root();
    while (n != nullptr) {
        if (n->condition.holds(bindings)) {
            fired = n;
            fired_path = path;
            path.push_back(Branch::except_edge);
            n = n->except_child.get();
        } else {
            path.push_back(Branch::else_edge);
            n = n->else_child.get();
        }
    }
    if (fired == nullptr) {
        // Only reachable if a root was built with a non-true condition.
        fired = &tree.root();
        fired_path.clear();
    }
    return {fired->conclusion, {fired_path, fired}};
}

std::vector<Literal> candidate_differences(const Case& cornerstone, const Bindings& new_case,
                                           std::span<const std::string> hints)
{
    auto differs = [&](const std::string& key, const Atom& value) {
        auto old = cornerstone.bindings.find(key);
        return old == cornerstone.bindings.end() || old->second != value;
    };

    std::vector<Literal> out;
    std::set<std::string> taken;
    for (const std::string& hint : hints) {
        auto it = new_case.find(hint);
        if (it != new_case.end() && !taken.contains(hint) && differs(it->first, it->second)) {
            out.push_back({it->first, it->second});
            taken.insert(hint);
        }
    }
    for (const auto& [key, value] : new_case) {
        if (!taken.contains(key) && differs(key, value)) {
            out.push_back({key, value});
        }
    }
    return out;
}

namespace {

// Copies the nodes along `path` from `node` and hangs `leaf` at its end.
NodePtr graft(const NodePtr& node, const NodePath& path, std::size_t at, NodePtr leaf)
{
    if (at == path.size()) {
        return leaf;
    }
    auto copy = std::make_shared<Node>(*node);
    if (path[at] == Branch::except_edge) {
        copy->except_child = copy->except_child
                                 ? graft(copy->except_child, path, at + 1, std::move(leaf))
                                 : std::move(leaf);
    } else {
        copy->else_child = copy->else_child
                               ? graft(copy->else_child, path, at + 1, std::move(leaf))
                               : std::move(leaf);
    }
    return copy;
}

} // namespace

Tree apply_update(const Tree& tree, Case c, const Atom& correct, const Condition& selected)
{
    const Evaluation current = evaluate(tree, c.bindings);
    if (current.conclusion == correct) {
        throw Error(ErrorCode::no_change,
                    "tree already concludes `" + correct + "` for this case");
    }
    if (selected.is_true()) {
        throw Error(ErrorCode::empty_selection, "an update needs at least one condition literal");
    }
    if (!selected.holds(c.bindings)) {
        throw Error(ErrorCode::condition_not_satisfied,
                    "condition `" + selected.to_string() + "` does not hold on the new case");
    }
    const Case& cornerstone = tree.cornerstone_of(*current.fired.node);
    if (selected.holds(cornerstone.bindings)) {
        throw Error(ErrorCode::non_discriminating,
                    "condition `" + selected.to_string() + "` also holds on cornerstone `" +
                        cornerstone.id + "`");
    }
    if (c.id.empty()) {
        c.id = tree.next_case_id(tree.domain().empty() ? "rdr" : tree.domain());
    }
    if (tree.cornerstones().contains(c.id)) {
        throw Error(ErrorCode::duplicate_id, "case id `" + c.id + "` already used");
    }

    // Walk to the end of the fired node's exception chain.
    NodePath target = current.fired.path;
    target.push_back(Branch::except_edge);
    for (const Node* n = current.fired.node->except_child.get(); n != nullptr;
         n = n->else_child.get()) {
        target.push_back(Branch::else_edge);
    }

    auto leaf = std::make_shared<Node>();
    leaf->condition = selected;
    leaf->conclusion = correct;
    leaf->cornerstone = c.id;

    auto store = tree.cornerstones();
    const std::string id = c.id;
    store.emplace(id, std::move(c));
    return Tree(graft(tree.root_ptr(), target, 0, std::move(leaf)), std::move(store),
                tree.domain());
}

std::vector<Violation> verify_cornerstones(const Tree& tree)
{
    std::vector<Violation> out;
    for (const NodeRef& ref : tree.nodes()) {
        const Case& c = tree.cornerstone_of(*ref.node);
        Evaluation e = evaluate(tree, c.bindings);
        if (e.fired.node != ref.node || e.conclusion != ref.node->conclusion) {
            out.push_back({ref.path, ref.node->cornerstone, ref.node->conclusion, e.conclusion,
                           e.fired.path});
        }
    }
    return out;
}

bool evaluate_order(const Tree& tree, const Atom& a, const Atom& b)
{
    return evaluate(tree, Bindings{{kGoalA, a}, {kGoalB, b}}).conclusion == "true";
}

std::vector<std::pair<Atom, Atom>> ordering_conflicts(const Tree& tree,
                                                      std::span<const Atom> vocabulary)
{
    std::vector<std::pair<Atom, Atom>> out;
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
        if (evaluate_order(tree, vocabulary[i], vocabulary[i])) {
            out.emplace_back(vocabulary[i], vocabulary[i]);
        }
        for (std::size_t j = i + 1; j < vocabulary.size(); ++j) {
            if (evaluate_order(tree, vocabulary[i], vocabulary[j]) &&
                evaluate_order(tree, vocabulary[j], vocabulary[i])) {
                out.emplace_back(vocabulary[i], vocabulary[j]);
            }
        }
    }
    return out;
}

std::optional<std::vector<Atom>> ordering_cycle(const Tree& tree,
                                                std::span<const Atom> vocabulary)
{
    const std::size_t n = vocabulary.size();
    std::vector<std::vector<bool>> before(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            before[i][j] = evaluate_order(tree, vocabulary[i], vocabulary[j]);
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    std::vector<int> state(n, 0);
    std::vector<std::size_t> stack;
    std::optional<std::vector<Atom>> found;
    std::function<bool(std::size_t)> dfs = [&](std::size_t u) {
        state[u] = 1;
        stack.push_back(u);
        for (std::size_t v = 0; v < n; ++v) {
            if (!before[u][v]) {
                continue;
            }
            if (state[v] == 1) {
                std::vector<Atom> cycle;
                auto from = std::find(stack.begin(), stack.end(), v);
                for (auto it = from; it != stack.end(); ++it) {
                    cycle.push_back(vocabulary[*it]);
                }
                cycle.push_back(vocabulary[v]);
                found = std::move(cycle);
                return true;
            }
            if (state[v] == 0 && dfs(v)) {
                return true;
            }
        }
        stack.pop_back();
        state[u] = 2;
        return false;
    };
    for (std::size_t u = 0; u < n; ++u) {
        if (state[u] == 0 && dfs(u)) {
            return found;
        }
    }
    return std::nullopt;
}

namespace {

void format_node(std::ostringstream& out, const Node& node, int indent)
{
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    for (const Node* n = &node; n != nullptr; n = n->else_child.get()) {
        if (n != &node) {
            out << pad << "else\n";
        }
        if (n->condition.is_true()) {
            out << pad << "if true then " << n->conclusion;
            if (!n->cornerstone.empty()) {
                out << " because " << n->cornerstone;
            }
            out << '\n';
        } else {
            out << pad << "if " << n->condition.to_string() << '\n';
            out << pad << "    then " << n->conclusion;
            if (!n->cornerstone.empty()) {
                out << " because " << n->cornerstone;
            }
            out << '\n';
        }
        if (n->except_child) {
            out << pad << "    except\n";
            format_node(out, *n->except_child, indent + 4);
        }
    }
}

} // namespace

std::string format_tree(const Tree& tree, int indent)
{
    std::ostringstream out;
    format_node(out, tree.root(), indent);
    return out.str();
}

} // namespace rescue::rdr
