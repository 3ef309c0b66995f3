#include "rescue/kb/frame.hpp"

#include "rescue/error.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <unordered_set>

namespace rescue::kb {

const Slot* Frame::find_slot(const std::string& name) const
{
    for (const Slot& s : slots) {
        if (s.name == name) {
            return &s;
        }
    }
    return nullptr;
}

Slot* Frame::find_slot(const std::string& name)
{
    for (Slot& s : slots) {
        if (s.name == name) {
            return &s;
        }
    }
    return nullptr;
}

Slot& Frame::slot(const std::string& name)
{
    if (Slot* s = find_slot(name)) {
        return *s;
    }
    slots.push_back(Slot{name, {}, {}, {}, {}});
    return slots.back();
}

// ---------------------------------------------------------------------------

void FrameSet::add(Frame frame)
{
    if (frame.id == kRootFrame || index_.contains(frame.id)) {
        throw Error(ErrorCode::duplicate_id, "frame `" + frame.id + "` declared twice");
    }
    index_.emplace(frame.id, frames_.size());
    frames_.push_back(std::move(frame));
}

void FrameSet::put(Frame frame)
{
    auto it = index_.find(frame.id);
    if (it == index_.end()) {
        add(std::move(frame));
    } else {
        frames_[it->second] = std::move(frame);
    }
}

const Frame* FrameSet::find(const std::string& id) const
{
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &frames_[it->second];
}

Frame* FrameSet::find(const std::string& id)
{
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &frames_[it->second];
}

const Frame& FrameSet::at(const std::string& id) const
{
    if (const Frame* f = find(id)) {
        return *f;
    }
    throw Error(ErrorCode::unknown_frame, "no frame `" + id + "`");
}

Frame& FrameSet::at(const std::string& id)
{
    if (Frame* f = find(id)) {
        return *f;
    }
    throw Error(ErrorCode::unknown_frame, "no frame `" + id + "`");
}

std::vector<const Frame*> FrameSet::lineage(const std::string& id) const
{
    std::vector<const Frame*> out;
    std::unordered_set<std::string> seen;
    std::function<void(const std::string&)> visit = [&](const std::string& f) {
        if (f == kRootFrame || !seen.insert(f).second) {
            return;
        }
        const Frame* frame = find(f);
        if (frame == nullptr) {
            return;
        }
        out.push_back(frame);
        for (const std::string& p : frame->parents) {
            visit(p);
        }
    };
    if (!contains(id)) {
        throw Error(ErrorCode::unknown_frame, "no frame `" + id + "`");
    }
    visit(id);
    return out;
}

namespace {

bool in_range(const std::vector<Atom>& range, const Atom& value)
{
    return std::find(range.begin(), range.end(), value) != range.end();
}

} // namespace

void FrameSet::validate() const
{
    for (const Frame& f : frames_) {
        for (const std::string& p : f.parents) {
            if (p != kRootFrame && !contains(p)) {
                throw Error(ErrorCode::unknown_parent,
                            "frame `" + f.id + "` names unknown parent `" + p + "`");
            }
        }
    }

    // Cycle check: colour DFS over parent links.
    std::unordered_map<std::string, int> colour;
    std::function<void(const Frame&)> dfs = [&](const Frame& f) {
        colour[f.id] = 1;
        for (const std::string& p : f.parents) {
            if (p == kRootFrame) {
                continue;
            }
            int c = colour[p];
            if (c == 1) {
                throw Error(ErrorCode::inheritance_cycle,
                            "inheritance cycle through `" + f.id + "` and `" + p + "`");
            }
            if (c == 0) {
                dfs(at(p));
            }
        }
        colour[f.id] = 2;
    };
    for (const Frame& f : frames_) {
        if (colour[f.id] == 0) {
            dfs(f);
        }
    }

    for (const Frame& f : frames_) {
        for (const Slot& s : f.slots) {
            const std::vector<Atom>* range = find_range(*this, f.id, s.name);
            if (s.value && range && !in_range(*range, *s.value)) {
                throw Error(ErrorCode::range_violation, "value `" + *s.value + "` of " + f.id +
                                                            "." + s.name + " is outside its range");
            }
            if (s.if_replaced) {
                for (const std::string& name : *s.if_replaced) {
                    if (!is_declared(*this, f.id, name)) {
                        throw Error(ErrorCode::undeclared_slot,
                                    "rdr_frame on " + f.id + "." + s.name +
                                        " names undeclared slot `" + name + "`");
                    }
                }
            }
            if (s.if_needed) {
                for (const rdr::NodeRef& ref : s.if_needed->nodes()) {
                    if (range && !in_range(*range, ref.node->conclusion)) {
                        throw Error(ErrorCode::range_violation,
                                    "rule conclusion `" + ref.node->conclusion + "` on " + f.id +
                                        "." + s.name + " is outside its range");
                    }
                    for (const rdr::Literal& l : ref.node->condition.literals) {
                        if (!is_declared(*this, f.id, l.key)) {
                            throw Error(ErrorCode::undeclared_slot,
                                        "rule on " + f.id + "." + s.name + " tests undeclared slot `" +
                                            l.key + "`");
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------

bool is_declared(const FrameSet& kb, const std::string& frame, const std::string& slot)
{
    for (const Frame* f : kb.lineage(frame)) {
        if (f->find_slot(slot) != nullptr) {
            return true;
        }
    }
    return false;
}

std::vector<std::string> declared_slots(const FrameSet& kb, const std::string& frame)
{
    std::set<std::string> names;
    for (const Frame* f : kb.lineage(frame)) {
        for (const Slot& s : f->slots) {
            names.insert(s.name);
        }
    }
    return {names.begin(), names.end()};
}

const std::vector<Atom>* find_range(const FrameSet& kb, const std::string& frame,
                                    const std::string& slot)
{
    for (const Frame* f : kb.lineage(frame)) {
        const Slot* s = f->find_slot(slot);
        if (s != nullptr && s->range) {
            return &*s->range;
        }
    }
    return nullptr;
}

std::optional<TreeLocation> find_if_needed(const FrameSet& kb, const std::string& frame,
                                           const std::string& slot)
{
    for (const Frame* f : kb.lineage(frame)) {
        const Slot* s = f->find_slot(slot);
        if (s != nullptr && s->if_needed) {
            return TreeLocation{f->id, slot};
        }
    }
    return std::nullopt;
}

const std::vector<std::string>* find_if_replaced(const FrameSet& kb, const std::string& frame,
                                                 const std::string& slot)
{
    for (const Frame* f : kb.lineage(frame)) {
        const Slot* s = f->find_slot(slot);
        if (s != nullptr && s->if_replaced) {
            return &*s->if_replaced;
        }
    }
    return nullptr;
}

const rdr::Tree& tree_at(const FrameSet& kb, const TreeLocation& where)
{
    const Slot* s = kb.at(where.frame).find_slot(where.slot);
    if (s == nullptr || !s->if_needed) {
        throw Error(ErrorCode::not_found,
                    "no rule tree on " + where.frame + "." + where.slot);
    }
    return *s->if_needed;
}

void replace_tree(FrameSet& kb, const TreeLocation& where, rdr::Tree tree)
{
    Slot* s = kb.at(where.frame).find_slot(where.slot);
    if (s == nullptr || !s->if_needed) {
        throw Error(ErrorCode::not_found,
                    "no rule tree on " + where.frame + "." + where.slot);
    }
    tree.set_domain(where.frame);
    s->if_needed = std::move(tree);
}

// ---------------------------------------------------------------------------

std::optional<Atom> lookup_value(const FrameSet& kb, const std::string& frame,
                                 const std::string& slot)
{
    for (const Frame* f : kb.lineage(frame)) {
        const Slot* s = f->find_slot(slot);
        if (s != nullptr && s->value) {
            return s->value;
        }
    }
    return std::nullopt;
}

rdr::Bindings case_projection(const FrameSet& kb, const std::string& frame)
{
    rdr::Bindings out;
    // Nearest frame wins, so only the first value seen per slot counts.
    for (const Frame* f : kb.lineage(frame)) {
        for (const Slot& s : f->slots) {
            if (s.value) {
                out.emplace(s.name, *s.value);
            }
        }
    }
    return out;
}

Atom resolve_slot(const FrameSet& kb, const std::string& frame, const std::string& slot)
{
    if (!is_declared(kb, frame, slot)) {
        throw Error(ErrorCode::undeclared_slot, "slot `" + slot + "` is not declared on `" +
                                                    frame + "` or its ancestors");
    }
    if (auto v = lookup_value(kb, frame, slot)) {
        return *v;
    }
    if (auto where = find_if_needed(kb, frame, slot)) {
        return rdr::evaluate(tree_at(kb, *where), case_projection(kb, frame)).conclusion;
    }
    throw Error(ErrorCode::value_unavailable,
                "slot " + frame + "." + slot + " has no value and no if_needed daemon");
}

SetOutcome set_slot_value(FrameSet& kb, const std::string& frame, const std::string& slot,
                          const Atom& value)
{
    if (!is_declared(kb, frame, slot)) {
        throw Error(ErrorCode::undeclared_slot, "slot `" + slot + "` is not declared on `" +
                                                    frame + "` or its ancestors");
    }
    if (const auto* range = find_range(kb, frame, slot); range && !in_range(*range, value)) {
        throw Error(ErrorCode::range_violation,
                    "`" + value + "` is outside the range of " + frame + "." + slot);
    }

    const auto* hints = find_if_replaced(kb, frame, slot);
    const auto where = find_if_needed(kb, frame, slot);
    if (hints != nullptr && where) {
        const rdr::Tree& tree = tree_at(kb, *where);
        rdr::Bindings bindings = case_projection(kb, frame);
        rdr::Evaluation current = rdr::evaluate(tree, bindings);
        if (current.conclusion == value) {
            return {SetOutcome::Kind::unchanged, std::nullopt};
        }
        UpdateRequest req;
        req.tree = *where;
        req.frame = frame;
        req.current = current.conclusion;
        req.proposed = value;
        req.fired = current.fired.path;
        req.cornerstone = tree.cornerstone_of(*current.fired.node);
        req.hints = *hints;
        req.candidates = rdr::candidate_differences(req.cornerstone, bindings, req.hints);
        req.case_bindings = std::move(bindings);
        return {SetOutcome::Kind::update_requested, std::move(req)};
    }

    kb.at(frame).slot(slot).value = value;
    return {SetOutcome::Kind::stored, std::nullopt};
}

std::string commit_update(FrameSet& kb, const UpdateRequest& request,
                          const rdr::Condition& condition, std::string case_id,
                          std::int64_t created_at)
{
    const rdr::Tree& tree = tree_at(kb, request.tree);
    rdr::Case c{std::move(case_id), request.case_bindings, created_at};
    if (c.id.empty()) {
        c.id = tree.next_case_id(request.tree.frame);
    }
    std::string id = c.id;
    rdr::Tree updated = rdr::apply_update(tree, std::move(c), request.proposed, condition);
    replace_tree(kb, request.tree, std::move(updated));
    return id;
}

} // namespace rescue::kb
