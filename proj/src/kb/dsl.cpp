#include "rescue/kb/dsl.hpp"

#include "rescue/error.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

namespace rescue::kb {

namespace {

enum class Tok { ident, number, lparen, rparen, lbracket, rbracket, comma, colon, semicolon, eq, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    int line = 1;
    int col = 0;
};

std::vector<Token> lex(std::string_view src)
{
    std::vector<Token> out;
    int line = 1;
    int col = 0;
    std::size_t i = 0;
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorCode::syntax,
                    std::to_string(line) + ":" + std::to_string(col + 1) + ": " + msg);
    };
    while (i < src.size()) {
        char c = src[i];
        if (c == '\n') {
            ++line;
            col = 0;
            ++i;
            continue;
        }
        if (c == '\t') {
            col = (col / 4 + 1) * 4;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\r') {
            ++col;
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') {
                ++i;
            }
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        auto is_word = [](char ch) {
            return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_';
        };
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && is_word(src[j])) {
                ++j;
            }
            t.kind = Tok::ident;
            t.text = std::string(src.substr(i, j - i));
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
                ++j;
            }
            if (j < src.size() && is_word(src[j])) {
                fail("identifiers must not start with a digit");
            }
            t.kind = Tok::number;
            t.text = std::string(src.substr(i, j - i));
        } else if (c == '=' && i + 1 < src.size() && src[i + 1] == '=') {
            t.kind = Tok::eq;
            t.text = "==";
        } else {
            switch (c) {
                case '(': t.kind = Tok::lparen; break;
                case ')': t.kind = Tok::rparen; break;
                case '[': t.kind = Tok::lbracket; break;
                case ']': t.kind = Tok::rbracket; break;
                case ',': t.kind = Tok::comma; break;
                case ':': t.kind = Tok::colon; break;
                case ';': t.kind = Tok::semicolon; break;
                default: fail(std::string("unexpected character `") + c + "`");
            }
            t.text = std::string(1, c);
        }
        i += t.text.size();
        col += static_cast<int>(t.text.size());
        out.push_back(std::move(t));
    }
    Token eof;
    eof.line = line;
    eof.col = col;
    out.push_back(eof);
    return out;
}

const char* describe(Tok k)
{
    switch (k) {
        case Tok::ident: return "identifier";
        case Tok::number: return "number";
        case Tok::lparen: return "`(`";
        case Tok::rparen: return "`)`";
        case Tok::lbracket: return "`[`";
        case Tok::rbracket: return "`]`";
        case Tok::comma: return "`,`";
        case Tok::colon: return "`:`";
        case Tok::semicolon: return "`;`";
        case Tok::eq: return "`==`";
        case Tok::end: return "end of input";
    }
    return "?";
}

bool is_facet_keyword(const std::string& s)
{
    return s == "range" || s == "value" || s == "if_needed" || s == "if_replaced" || s == "cases";
}

class Parser {
public:
    explicit Parser(std::string_view src) : toks_(lex(src)) {}

    FrameSet parse_file()
    {
        FrameSet kb;
        while (!at(Tok::end)) {
            if (at_keyword("frame") && peek(1).kind == Tok::lparen) {
                kb.add(parse_instance());
            } else if (at(Tok::ident) && peek(1).kind == Tok::ident && peek(1).text == "ako") {
                kb.add(parse_generic());
            } else {
                fail("expected `<id> ako <parent> with` or `frame(...)`");
            }
        }
        return kb;
    }

    rdr::Tree parse_bare_rule()
    {
        rdr::NodePtr root = parse_rule_chain();
        accept(Tok::semicolon);
        expect(Tok::end);
        std::map<std::string, rdr::Case> cases;
        collect_missing_cases(root.get(), cases);
        return rdr::Tree(std::move(root), std::move(cases));
    }

private:
    const Token& cur() const { return toks_[pos_]; }
    const Token& peek(std::size_t n) const { return toks_[std::min(pos_ + n, toks_.size() - 1)]; }
    bool at(Tok k) const { return cur().kind == k; }
    bool at_keyword(std::string_view kw) const { return at(Tok::ident) && cur().text == kw; }

    [[noreturn]] void fail(const std::string& msg) const
    {
        const Token& t = cur();
        std::string near = t.kind == Tok::end ? "end of input" : "`" + t.text + "`";
        throw Error(ErrorCode::syntax, std::to_string(t.line) + ":" + std::to_string(t.col + 1) +
                                           ": " + msg + " (near " + near + ")");
    }

    Token expect(Tok k)
    {
        if (!at(k)) {
            fail(std::string("expected ") + describe(k));
        }
        return toks_[pos_++];
    }

    void expect_keyword(std::string_view kw)
    {
        if (!at_keyword(kw)) {
            fail("expected `" + std::string(kw) + "`");
        }
        ++pos_;
    }

    bool accept(Tok k)
    {
        if (at(k)) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string ident() { return expect(Tok::ident).text; }

    std::vector<std::string> ident_list()
    {
        std::vector<std::string> out;
        expect(Tok::lbracket);
        if (!at(Tok::rbracket)) {
            out.push_back(ident());
            while (accept(Tok::comma)) {
                out.push_back(ident());
            }
        }
        expect(Tok::rbracket);
        return out;
    }

    rdr::Bindings binding_list()
    {
        rdr::Bindings out;
        expect(Tok::lbracket);
        if (!at(Tok::rbracket)) {
            do {
                const Token key = expect(Tok::ident);
                expect(Tok::colon);
                std::string value = ident();
                if (!out.emplace(key.text, std::move(value)).second) {
                    throw Error(ErrorCode::syntax, std::to_string(key.line) + ":" +
                                                       std::to_string(key.col + 1) +
                                                       ": slot `" + key.text + "` bound twice");
                }
            } while (accept(Tok::comma));
        }
        expect(Tok::rbracket);
        return out;
    }

    // `name` or `name(arg, arg, ...)`, stored as canonical text.
    std::string case_id()
    {
        std::string id = ident();
        if (accept(Tok::lparen)) {
            id += '(';
            id += ident();
            while (accept(Tok::comma)) {
                id += ", ";
                id += ident();
            }
            expect(Tok::rparen);
            id += ')';
        }
        return id;
    }

    Frame parse_instance()
    {
        expect_keyword("frame");
        expect(Tok::lparen);
        Frame f;
        f.kind = FrameKind::instance;
        f.id = ident();
        expect(Tok::comma);
        f.parents = ident_list();
        expect(Tok::comma);
        expect(Tok::lbracket);
        if (!at(Tok::rbracket)) {
            do {
                std::string name = ident();
                expect(Tok::colon);
                if (f.find_slot(name) != nullptr) {
                    fail("slot `" + name + "` bound twice in `" + f.id + "`");
                }
                f.slots.push_back(Slot{name, {}, ident(), {}, {}});
            } while (accept(Tok::comma));
        }
        expect(Tok::rbracket);
        expect(Tok::rparen);
        expect(Tok::semicolon);
        return f;
    }

    Frame parse_generic()
    {
        Frame f;
        f.kind = FrameKind::generic;
        f.id = ident();
        expect_keyword("ako");
        f.parents.push_back(ident());
        while (accept(Tok::comma)) {
            f.parents.push_back(ident());
        }
        expect_keyword("with");
        while (at(Tok::ident) && peek(1).kind == Tok::colon) {
            Slot s;
            s.name = ident();
            expect(Tok::colon);
            if (f.find_slot(s.name) != nullptr) {
                fail("slot `" + s.name + "` declared twice in `" + f.id + "`");
            }
            parse_facets(f, s);
            f.slots.push_back(std::move(s));
        }
        return f;
    }

    void parse_facets(const Frame& f, Slot& s)
    {
        std::map<std::string, rdr::Case> cases;
        bool has_cases = false;
        rdr::NodePtr rule;
        while (at(Tok::ident) && is_facet_keyword(cur().text) && peek(1).kind != Tok::colon) {
            const std::string facet = ident();
            if (facet == "range") {
                dup_check(s.range.has_value(), facet);
                s.range = ident_list();
            } else if (facet == "value") {
                dup_check(s.value.has_value(), facet);
                s.value = ident();
            } else if (facet == "if_needed") {
                dup_check(rule != nullptr, facet);
                rule = parse_rule_chain();
                accept(Tok::semicolon);
            } else if (facet == "if_replaced") {
                dup_check(s.if_replaced.has_value(), facet);
                expect_keyword("rdr_frame");
                expect(Tok::lparen);
                s.if_replaced = ident_list();
                expect(Tok::rparen);
            } else {
                dup_check(has_cases, facet);
                has_cases = true;
                while (at_keyword("case") && peek(1).kind == Tok::lparen) {
                    ++pos_;
                    expect(Tok::lparen);
                    rdr::Case c;
                    c.id = case_id();
                    expect(Tok::comma);
                    const Token t = expect(Tok::number);
                    std::from_chars(t.text.data(), t.text.data() + t.text.size(), c.created_at);
                    expect(Tok::comma);
                    c.bindings = binding_list();
                    expect(Tok::rparen);
                    const std::string id = c.id;
                    if (!cases.emplace(id, std::move(c)).second) {
                        fail("case `" + id + "` listed twice");
                    }
                }
            }
        }
        if (has_cases && !rule) {
            fail("`cases` on " + f.id + "." + s.name + " without an if_needed rule");
        }
        if (rule) {
            s.if_needed = rdr::Tree(std::move(rule), std::move(cases), f.id);
        }
    }

    void dup_check(bool present, const std::string& facet) const
    {
        if (present) {
            fail("facet `" + facet + "` given twice");
        }
    }

    rdr::Condition parse_condition()
    {
        rdr::Condition cond;
        if (at_keyword("true")) {
            ++pos_;
            return cond;
        }
        do {
            rdr::Literal lit;
            if (at_keyword("this")) {
                ++pos_;
                lit.key = ident();
                if (lit.is_variable()) {
                    fail("slot names after `this` must start in lower case");
                }
            } else {
                lit.key = ident();
                if (!lit.is_variable()) {
                    fail("expected `this <slot>` or a variable");
                }
            }
            expect(Tok::eq);
            lit.value = ident();
            cond.literals.push_back(std::move(lit));
        } while (at_keyword("and") && (++pos_, true));
        return cond;
    }

    // One rule plus its else-linked siblings. Returns the head of the chain.
    rdr::NodePtr parse_rule_chain()
    {
        struct Pending {
            rdr::Node node;
            int col;
        };
        std::vector<Pending> chain;
        for (;;) {
            const int col = cur().col;
            expect_keyword("if");
            Pending p{rdr::Node{}, col};
            p.node.condition = parse_condition();
            expect_keyword("then");
            p.node.conclusion = ident();
            if (at_keyword("because")) {
                ++pos_;
                p.node.cornerstone = case_id();
            }
            if (at_keyword("except") && cur().col >= col) {
                ++pos_;
                p.node.except_child = parse_rule_chain();
            }
            chain.push_back(std::move(p));
            if (at_keyword("else") && cur().col >= col) {
                ++pos_;
                continue;
            }
            break;
        }
        rdr::NodePtr next;
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            it->node.else_child = std::move(next);
            next = std::make_shared<const rdr::Node>(std::move(it->node));
        }
        return next;
    }

    static void collect_missing_cases(const rdr::Node* n, std::map<std::string, rdr::Case>& cases)
    {
        for (; n != nullptr; n = n->else_child.get()) {
            if (!n->cornerstone.empty() && !cases.contains(n->cornerstone)) {
                cases.emplace(n->cornerstone, rdr::Case{n->cornerstone, {}, 0});
            }
            collect_missing_cases(n->except_child.get(), cases);
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

std::string join(const std::vector<std::string>& items)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += items[i];
    }
    return out;
}

std::string format_bindings(const rdr::Bindings& b)
{
    std::string out = "[";
    bool first = true;
    for (const auto& [k, v] : b) {
        if (!first) {
            out += ", ";
        }
        first = false;
        out += k + ": " + v;
    }
    return out + "]";
}

void write_generic(std::ostringstream& out, const Frame& f)
{
    out << f.id << " ako " << join(f.parents) << " with\n";
    for (const Slot& s : f.slots) {
        out << "    " << s.name << ":\n";
        if (s.range) {
            out << "        range [" << join(*s.range) << "]\n";
        }
        if (s.value) {
            out << "        value " << *s.value << "\n";
        }
        if (s.if_needed) {
            out << "        if_needed\n" << rdr::format_tree(*s.if_needed, 12);
        }
        if (s.if_replaced) {
            out << "        if_replaced\n";
            out << "            rdr_frame([" << join(*s.if_replaced) << "])\n";
        }
        if (s.if_needed) {
            bool header = false;
            for (const auto& [id, c] : s.if_needed->cornerstones()) {
                if (c.bindings.empty() && c.created_at == 0) {
                    continue;
                }
                if (!header) {
                    out << "        cases\n";
                    header = true;
                }
                out << "            case(" << id << ", " << c.created_at << ", "
                    << format_bindings(c.bindings) << ")\n";
            }
        }
    }
}

void write_instance(std::ostringstream& out, const Frame& f)
{
    std::string body = "[";
    bool first = true;
    for (const Slot& s : f.slots) {
        if (!s.value) {
            continue;
        }
        if (!first) {
            body += ", ";
        }
        first = false;
        body += s.name + ": " + *s.value;
    }
    body += "]";
    out << "frame(" << f.id << ", [" << join(f.parents) << "], " << body << ");\n";
}

} // namespace

FrameSet parse_frame_source(std::string_view text)
{
    FrameSet kb = Parser(text).parse_file();
    kb.validate();
    return kb;
}

rdr::Tree parse_rule(std::string_view text)
{
    return Parser(text).parse_bare_rule();
}

std::string serialize_kb(const FrameSet& kb)
{
    std::ostringstream out;
    const Frame* prev = nullptr;
    for (const Frame& f : kb.frames()) {
        if (prev != nullptr &&
            !(prev->kind == FrameKind::instance && f.kind == FrameKind::instance)) {
            out << '\n';
        }
        if (f.kind == FrameKind::generic) {
            write_generic(out, f);
        } else {
            write_instance(out, f);
        }
        prev = &f;
    }
    return out.str();
}

} // namespace rescue::kb
