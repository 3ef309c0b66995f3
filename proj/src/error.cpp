#include "rescue/error.hpp"

namespace rescue {

const char* to_string(ErrorCode code)
{
    switch (code) {
        case ErrorCode::syntax: return "syntax";
        case ErrorCode::unknown_parent: return "unknown_parent";
        case ErrorCode::inheritance_cycle: return "inheritance_cycle";
        case ErrorCode::duplicate_id: return "duplicate_id";
        case ErrorCode::range_violation: return "range_violation";
        case ErrorCode::undeclared_slot: return "undeclared_slot";
        case ErrorCode::value_unavailable: return "value_unavailable";
        case ErrorCode::unknown_frame: return "unknown_frame";
        case ErrorCode::no_change: return "no_change";
        case ErrorCode::non_discriminating: return "non_discriminating";
        case ErrorCode::condition_not_satisfied: return "condition_not_satisfied";
        case ErrorCode::empty_selection: return "empty_selection";
        case ErrorCode::inconsistent_tree: return "inconsistent_tree";
        case ErrorCode::inconsistent_ordering: return "inconsistent_ordering";
        case ErrorCode::invalid_scenario: return "invalid_scenario";
        case ErrorCode::unknown_entity: return "unknown_entity";
        case ErrorCode::unknown_agent: return "unknown_agent";
        case ErrorCode::out_of_range: return "out_of_range";
        case ErrorCode::invalid_state: return "invalid_state";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::io: return "io";
    }
    return "unknown";
}

} // namespace rescue
