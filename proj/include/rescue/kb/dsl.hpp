#pragma once

// Rule-DSL text <-> FrameSet.
//
//   human ako object with
//       buriedness:
//           range [non_buried, buried]
//       goal:
//           range [none, unbury]
//           if_needed
//               if true then none because case0
//           if_replaced
//               rdr_frame([buriedness])
//
//   frame(human_937073426, [human], [buriedness: buried]);
//
// Slot facets are `range [...]`, `value <atom>`, `if_needed <rule>`,
// `if_replaced rdr_frame([...])` and `cases case(<id>, <time>, [...])...`.
// Line comments start with `//`. Inside a rule, an `except` or `else`
// keyword belongs to the innermost open rule whose `if` sits at or left of
// the keyword's column.

#include "rescue/kb/frame.hpp"
#include "rescue/rdr/tree.hpp"

#include <string>
#include <string_view>

namespace rescue::kb {

/// Throws Error(syntax) with `line:col`, or the structural errors raised by
/// FrameSet::validate().
FrameSet parse_frame_source(std::string_view text);

/// A bare rule body, e.g. one of the listings kept under data/rulesets.
/// A trailing `;` is accepted. Cases for non-root rules are not required.
rdr::Tree parse_rule(std::string_view text);

/// Canonical text; parse_frame_source(serialize_kb(kb)) == kb.
std::string serialize_kb(const FrameSet& kb);

} // namespace rescue::kb
