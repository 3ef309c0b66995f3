#pragma once

#include <stdexcept>
#include <string>

namespace rescue {

enum class ErrorCode {
    syntax,
    unknown_parent,
    inheritance_cycle,
    duplicate_id,
    range_violation,
    undeclared_slot,
    value_unavailable,
    unknown_frame,
    no_change,
    non_discriminating,
    condition_not_satisfied,
    empty_selection,
    inconsistent_tree,
    inconsistent_ordering,
    invalid_scenario,
    unknown_entity,
    unknown_agent,
    out_of_range,
    invalid_state,
    not_found,
    io,
};

const char* to_string(ErrorCode code);

/// Base for every recoverable failure raised by the library. The code lets
/// callers (HTTP layer, CLI) map failures without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace rescue
