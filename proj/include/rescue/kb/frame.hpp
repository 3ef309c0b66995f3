#pragma once

// Frames: generic (class-like) and instance knowledge units. Slots carry
// facets (range, value, if_needed, if_replaced) and every facet is inherited
// independently along `ako` links, nearest frame first. Lineage is
// depth-first over parents in declaration order, so the first parent wins
// conflicts.

#include "rescue/rdr/tree.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace rescue::kb {

using rdr::Atom;

inline constexpr const char* kRootFrame = "object";

struct Slot {
    std::string name;
    std::optional<std::vector<Atom>> range;
    std::optional<Atom> value;
    std::optional<rdr::Tree> if_needed;
    // Slots passed to rdr_frame(...) when a trainer overrides the value.
    std::optional<std::vector<std::string>> if_replaced;

    friend bool operator==(const Slot&, const Slot&) = default;
};

enum class FrameKind { generic, instance };

struct Frame {
    std::string id;
    FrameKind kind = FrameKind::generic;
    std::vector<std::string> parents;
    std::vector<Slot> slots;

    const Slot* find_slot(const std::string& name) const;
    Slot* find_slot(const std::string& name);
    /// Local slot, created on first use.
    Slot& slot(const std::string& name);

    friend bool operator==(const Frame&, const Frame&) = default;
};

class FrameSet {
public:
    /// Appends a frame in declaration order. Throws duplicate_id.
    void add(Frame frame);
    /// Replaces a frame in place, or appends it.
    void put(Frame frame);

    const Frame* find(const std::string& id) const;
    Frame* find(const std::string& id);
    const Frame& at(const std::string& id) const;
    Frame& at(const std::string& id);
    bool contains(const std::string& id) const { return index_.contains(id); }

    const std::vector<Frame>& frames() const { return frames_; }
    bool empty() const { return frames_.empty(); }
    std::size_t size() const { return frames_.size(); }

    /// Self first, then ancestors depth-first; `object` is implicit and omitted.
    std::vector<const Frame*> lineage(const std::string& id) const;

    /// Structural checks: parents resolve, no inheritance cycles, stored
    /// values lie in their ranges, if_replaced slot lists and rule
    /// conditions name declared slots, and rule conclusions lie in range.
    void validate() const;

    friend bool operator==(const FrameSet& a, const FrameSet& b) { return a.frames_ == b.frames_; }

private:
    std::vector<Frame> frames_;
    std::unordered_map<std::string, std::size_t> index_;
};

// -- facet lookup ------------------------------------------------------------

bool is_declared(const FrameSet& kb, const std::string& frame, const std::string& slot);
/// All slot names visible from `frame`, sorted.
std::vector<std::string> declared_slots(const FrameSet& kb, const std::string& frame);

const std::vector<Atom>* find_range(const FrameSet& kb, const std::string& frame,
                                    const std::string& slot);

struct TreeLocation {
    std::string frame; // frame that owns the if_needed facet
    std::string slot;
};

/// Nearest if_needed facet for `slot` as seen from `frame`.
std::optional<TreeLocation> find_if_needed(const FrameSet& kb, const std::string& frame,
                                           const std::string& slot);
const std::vector<std::string>* find_if_replaced(const FrameSet& kb, const std::string& frame,
                                                 const std::string& slot);

const rdr::Tree& tree_at(const FrameSet& kb, const TreeLocation& where);
void replace_tree(FrameSet& kb, const TreeLocation& where, rdr::Tree tree);

// -- slot access -------------------------------------------------------------

/// Stored value (local or inherited) without running daemons. nullopt is the
/// `unknown` outcome.
std::optional<Atom> lookup_value(const FrameSet& kb, const std::string& frame,
                                 const std::string& slot);

/// Every slot resolvable without daemons, as a case for rule evaluation.
rdr::Bindings case_projection(const FrameSet& kb, const std::string& frame);

/// Stored value if any, otherwise the if_needed rule tree's conclusion for
/// the frame's case projection. Throws undeclared_slot / value_unavailable.
Atom resolve_slot(const FrameSet& kb, const std::string& frame, const std::string& slot);

/// What the trainer has to decide to turn a rejected conclusion into a rule.
struct UpdateRequest {
    TreeLocation tree;
    std::string frame;
    Atom current;
    Atom proposed;
    rdr::NodePath fired;
    rdr::Case cornerstone;
    rdr::Bindings case_bindings;
    std::vector<std::string> hints;
    std::vector<rdr::Literal> candidates;
};

struct SetOutcome {
    enum class Kind { stored, unchanged, update_requested };
    Kind kind = Kind::stored;
    std::optional<UpdateRequest> request;
};

/// Plain store, or (when the slot has an if_replaced daemon and the rule
/// tree disagrees) an update request. Throws undeclared_slot /
/// range_violation / unknown_frame.
SetOutcome set_slot_value(FrameSet& kb, const std::string& frame, const std::string& slot,
                          const Atom& value);

/// The `rdr_frame` daemon: applies the trainer's condition to the tree the
/// request came from. Returns the case id used for the new cornerstone.
std::string commit_update(FrameSet& kb, const UpdateRequest& request,
                          const rdr::Condition& condition, std::string case_id = {},
                          std::int64_t created_at = 0);

} // namespace rescue::kb
