#include "doctest.h"

#include "rescue/error.hpp"
#include "rescue/kb/dsl.hpp"
#include "rescue/kb/frame.hpp"
#include "support/generators.hpp"

using namespace rescue;
using namespace rescue::kb;

namespace {

// Generic human frame exactly as printed (odd line breaks and all).
const char* const kHumanSource = R"(human ako object with
    type:
        range [agent, civilian]
    buriedness:
        range
            [non_buried, buried]
    health:
        range [dead, critical, injured, healthy]
    goal:
        range
            [none, unbury]
        if_needed
            if true then none because case0
        if_replaced
            rdr_frame([buriedness])
)";

const char* const kBrigade = "frame(human_937073426, [human], [buriedness: buried]);\n";

ErrorCode error_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::io;
}

} // namespace

TEST_CASE("parse the generic human frame")
{
    FrameSet kb = parse_frame_source(kHumanSource);
    REQUIRE(kb.size() == 1);
    const Frame& human = kb.at("human");
    CHECK(human.kind == FrameKind::generic);
    CHECK(human.parents == std::vector<std::string>{"object"});
    REQUIRE(human.slots.size() == 4);
    CHECK(human.slots[0].name == "type");
    CHECK(human.slots[3].name == "goal");
    const Slot& goal = *human.find_slot("goal");
    CHECK(goal.range == std::vector<std::string>{"none", "unbury"});
    REQUIRE(goal.if_needed.has_value());
    CHECK(goal.if_needed->size() == 1);
    CHECK(goal.if_needed->root().conclusion == "none");
    CHECK(goal.if_needed->root().cornerstone == "case0");
    CHECK(goal.if_replaced == std::vector<std::string>{"buriedness"});
    CHECK(human.find_slot("health")->range ==
          std::vector<std::string>{"dead", "critical", "injured", "healthy"});
}

TEST_CASE("parse an instance frame")
{
    FrameSet kb = parse_frame_source(std::string(kHumanSource) + kBrigade);
    const Frame& brigade = kb.at("human_937073426");
    CHECK(brigade.kind == FrameKind::instance);
    CHECK(brigade.parents == std::vector<std::string>{"human"});
    REQUIRE(brigade.slots.size() == 1);
    CHECK(brigade.slots[0].value == "buried");
}

TEST_CASE("empty source and empty kb")
{
    CHECK(parse_frame_source("").empty());
    CHECK(parse_frame_source("// nothing here\n").empty());
    CHECK(serialize_kb(FrameSet{}).empty());
}

TEST_CASE("parse errors")
{
    CHECK(error_of([] { parse_frame_source("human ako object"); }) == ErrorCode::syntax);
    CHECK(error_of([] { parse_frame_source("frame(x, [ghost], []);"); }) == ErrorCode::unknown_parent);
    CHECK(error_of([] {
              parse_frame_source(std::string(kHumanSource) +
                                 "frame(h1, [human], [health: flying]);");
          }) == ErrorCode::range_violation);
    CHECK(error_of([] {
              parse_frame_source("a ako b with\nb ako a with\n");
          }) == ErrorCode::inheritance_cycle);
    CHECK(error_of([] {
              parse_frame_source("a ako object with\n    g:\n        range [x]\n"
                                 "        if_needed\n            if true then y because c0\n");
          }) == ErrorCode::range_violation);
    CHECK(error_of([] {
              parse_frame_source("a ako object with\n    g:\n        if_replaced\n"
                                 "            rdr_frame([nope])\n");
          }) == ErrorCode::undeclared_slot);
    CHECK(error_of([] { parse_frame_source("a ako object with\na ako object with\n"); }) ==
          ErrorCode::duplicate_id);

    try {
        parse_frame_source("human ako object with\n    type:\n        range [a, b\n");
        FAIL("should throw");
    } catch (const Error& e) {
        // Position of the offending token is reported.
        CHECK(std::string(e.what()).starts_with("4:1:"));
    }
}

TEST_CASE("resolve_slot")
{
    FrameSet kb = parse_frame_source(std::string(kHumanSource) + kBrigade);
    CHECK(resolve_slot(kb, "human_937073426", "goal") == "none");
    CHECK(resolve_slot(kb, "human_937073426", "buriedness") == "buried");
    CHECK(error_of([&] { resolve_slot(kb, "human_937073426", "wings"); }) ==
          ErrorCode::undeclared_slot);
    CHECK(error_of([&] { resolve_slot(kb, "human_937073426", "health"); }) ==
          ErrorCode::value_unavailable);
    CHECK(error_of([&] { resolve_slot(kb, "nobody", "goal"); }) == ErrorCode::unknown_frame);
    CHECK(lookup_value(kb, "human_937073426", "health") == std::nullopt);

    SUBCASE("the updated rule applies to every buried human")
    {
        const char* updated = R"(human ako object with
    type:
        range [agent, civilian]
    buriedness:
        range [non_buried, buried]
    health:
        range [dead, critical, injured, healthy]
    goal:
        range [none, unbury]
        if_needed
            if true then none because case0
                except
                if this buriedness == buried
                    then unbury because case_brigade_1
        if_replaced
            rdr_frame([buriedness])
        cases
            case(case_brigade_1, 0, [buriedness: buried, health: injured, type: agent])

frame(h1, [human], [buriedness: buried, type: civilian]);
frame(h2, [human], [buriedness: non_buried, type: agent]);
frame(h3, [human], [buriedness: buried, health: dead]);
)";
        FrameSet k2 = parse_frame_source(updated);
        CHECK(resolve_slot(k2, "h1", "goal") == "unbury");
        CHECK(resolve_slot(k2, "h2", "goal") == "none");
        CHECK(resolve_slot(k2, "h3", "goal") == "unbury");
        // Pure: repeated calls agree.
        CHECK(resolve_slot(k2, "h1", "goal") == resolve_slot(k2, "h1", "goal"));
    }
}

TEST_CASE("shadowing along a three-deep chain")
{
    const char* src = R"(a ako object with
    colour:
        range [red, green, blue]
        value red
    size:
        range [small, large]
        value small
b ako a with
    colour:
        value green
c ako b with
    size:
        value large
frame(i, [c], [colour: blue]);
frame(j, [c], []);
)";
    FrameSet kb = parse_frame_source(src);
    CHECK(resolve_slot(kb, "i", "colour") == "blue");
    CHECK(resolve_slot(kb, "j", "colour") == "green");
    CHECK(resolve_slot(kb, "j", "size") == "large");
    CHECK(resolve_slot(kb, "b", "size") == "small");
    CHECK(case_projection(kb, "j") == rdr::Bindings{{"colour", "green"}, {"size", "large"}});
}

TEST_CASE("multiple parents: first parent wins, depth first")
{
    const char* src = R"(p ako object with
    x:
        value from_p
q ako p with
r ako object with
    x:
        value from_r
frame(i, [q, r], []);
frame(k, [r, q], []);
)";
    FrameSet kb = parse_frame_source(src);
    CHECK(resolve_slot(kb, "i", "x") == "from_p");
    CHECK(resolve_slot(kb, "k", "x") == "from_r");
}

TEST_CASE("set_slot_value")
{
    FrameSet kb = parse_frame_source(std::string(kHumanSource) +
                                     "frame(human_937073426, [human], [buriedness: buried, "
                                     "health: injured, type: agent]);\n");
    const std::string id = "human_937073426";

    SUBCASE("override through if_replaced yields an update request")
    {
        SetOutcome out = set_slot_value(kb, id, "goal", "unbury");
        REQUIRE(out.kind == SetOutcome::Kind::update_requested);
        const UpdateRequest& req = *out.request;
        CHECK(req.tree.frame == "human");
        CHECK(req.tree.slot == "goal");
        CHECK(req.current == "none");
        CHECK(req.proposed == "unbury");
        CHECK(req.fired.empty());
        CHECK(req.cornerstone.id == "case0");
        REQUIRE(req.candidates.size() == 3);
        CHECK(req.candidates[0].to_string() == "this buriedness == buried");
        CHECK(req.candidates[1].key == "health");
        CHECK(req.candidates[2].key == "type");
        // Nothing stored.
        CHECK(resolve_slot(kb, id, "goal") == "none");

        std::string case_id =
            commit_update(kb, req, rdr::Condition{{req.candidates[0]}}, "case_brigade_1", 0);
        CHECK(case_id == "case_brigade_1");
        CHECK(resolve_slot(kb, id, "goal") == "unbury");
        CHECK(set_slot_value(kb, id, "goal", "unbury").kind == SetOutcome::Kind::unchanged);
    }

    SUBCASE("plain slot stores")
    {
        SetOutcome out = set_slot_value(kb, id, "buriedness", "non_buried");
        CHECK(out.kind == SetOutcome::Kind::stored);
        CHECK(resolve_slot(kb, id, "buriedness") == "non_buried");
    }

    SUBCASE("errors")
    {
        CHECK(error_of([&] { set_slot_value(kb, id, "health", "flying"); }) ==
              ErrorCode::range_violation);
        CHECK(error_of([&] { set_slot_value(kb, id, "mood", "calm"); }) ==
              ErrorCode::undeclared_slot);
    }
}

TEST_CASE("serialize: canonical layout")
{
    FrameSet kb = parse_frame_source(std::string(kHumanSource) + kBrigade);
    const std::string expected = R"(human ako object with
    type:
        range [agent, civilian]
    buriedness:
        range [non_buried, buried]
    health:
        range [dead, critical, injured, healthy]
    goal:
        range [none, unbury]
        if_needed
            if true then none because case0
        if_replaced
            rdr_frame([buriedness])

frame(human_937073426, [human], [buriedness: buried]);
)";
    CHECK(serialize_kb(kb) == expected);
    CHECK(parse_frame_source(expected) == kb);
}

TEST_CASE("serialize: nested rules keep their attachment")
{
    // The else belongs to the first exception, not to its nested exception.
    const char* src = R"(t ako object with
    a:
    b:
    g:
        range [x, y, z, w]
        if_needed
            if true then x because k0
                except
                if this a == p
                    then y because k1
                    except
                    if this b == q
                        then z because k2
                else
                if this a == r
                    then w because k3
        cases
            case(k1, 3, [a: p])
            case(k2, 4, [a: p, b: q])
            case(k3, 5, [a: r])
)";
    FrameSet kb = parse_frame_source(src);
    const rdr::Tree& tree = *kb.at("t").find_slot("g")->if_needed;
    CHECK(tree.root().except_child->else_child->cornerstone == "k3");
    CHECK(tree.root().except_child->except_child->cornerstone == "k2");
    CHECK(rdr::verify_cornerstones(tree).empty());
    CHECK(serialize_kb(kb) == src);
}

TEST_CASE("round-trip fixpoint on generated knowledge bases")
{
    gen::Rng rng(2024);
    for (int i = 0; i < 200; ++i) {
        FrameSet kb = gen::random_kb(rng);
        kb.validate();
        const std::string text = serialize_kb(kb);
        FrameSet back = parse_frame_source(text);
        CHECK(back == kb);
        CHECK(serialize_kb(back) == text);
    }
}
