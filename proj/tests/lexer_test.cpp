#include <random>

#include "cpl/lexer.hpp"
#include "doctest.h"

using namespace cpl;

namespace {

std::vector<std::string> texts(const std::vector<Token>& toks) {
    std::vector<std::string> out;
    for (auto& t : toks) {
        if (t.kind == TokKind::EndOfInput) continue;
        if (t.kind == TokKind::Newline)
            out.push_back("<NL>");
        else
            out.push_back(t.text);
    }
    return out;
}

}  // namespace

TEST_CASE("comments strip to end of line") {
    auto toks = texts(tokenize("x=1 ! note\ny=2", "t"));
    CHECK(toks == std::vector<std::string>{"x", "=", "1", "<NL>", "y", "=", "2"});
}

TEST_CASE("nested delimited comments") {
    auto toks = texts(tokenize("a !( c1 !( c2 !) tail !) b", "t"));
    CHECK(toks == std::vector<std::string>{"a", "b"});
}

TEST_CASE("backslash continuation joins lines") {
    auto toks = texts(tokenize("a = b + \\\nc", "t"));
    CHECK(toks == std::vector<std::string>{"a", "=", "b", "+", "c"});
}

TEST_CASE("empty input gives empty stream") {
    auto toks = tokenize("", "t");
    REQUIRE(toks.size() == 1);
    CHECK(toks[0].kind == TokKind::EndOfInput);
}

TEST_CASE("mixed quotes") {
    auto toks = tokenize("'he said \"hi\"'", "t");
    REQUIRE(toks[0].kind == TokKind::StringLit);
    CHECK(toks[0].text == "he said \"hi\"");
    auto toks2 = tokenize("\"\"", "t");
    CHECK(toks2[0].text == "");
}

TEST_CASE("no escapes inside quotes") {
    auto toks = tokenize("\"a\\n\"", "t");
    CHECK(toks[0].text == "a\\n");  // backslash is a literal character
}

TEST_CASE("bare escapes outside quotes") {
    auto toks = tokenize("\\n", "t");
    REQUIRE(toks[0].kind == TokKind::CharEscape);
    CHECK(toks[0].text == "\n");
    CHECK_THROWS_AS(tokenize("\\q", "t"), CompileError);
}

TEST_CASE("heredoc body includes newline before terminator") {
    auto toks = tokenize("x = <<END\na\nEND\n", "t");
    REQUIRE(toks.size() >= 3);
    CHECK(toks[2].kind == TokKind::StringLit);
    CHECK(toks[2].text == "a\n");
    CHECK(toks[2].delimiter == 'H');
    // terminator line's newline still separates statements
    CHECK(toks[3].kind == TokKind::Newline);
}

TEST_CASE("heredoc with leading-whitespace terminator line is content") {
    auto toks = tokenize("x = <<E\na\n E\nE\n", "t");
    CHECK(toks[2].text == "a\n E\n");
}

TEST_CASE("heredoc interpolation splices") {
    auto toks = tokenize("x = <<D\nhello D name D!\nD\n", "t");
    REQUIRE(toks[2].kind == TokKind::StringLit);
    REQUIRE(toks[2].segments.size() == 3);
    CHECK(toks[2].segments[0].text == "hello ");
    CHECK(toks[2].segments[1].is_splice);
    CHECK(toks[2].segments[1].text == "name");
    CHECK(toks[2].segments[2].text == "!\n");
}

TEST_CASE("unterminated forms are errors") {
    CHECK_THROWS_AS(tokenize("a !( never closed", "t"), CompileError);
    CHECK_THROWS_AS(tokenize("\"never closed", "t"), CompileError);
    CHECK_THROWS_AS(tokenize("x = <<END\nbody", "t"), CompileError);
    CHECK_THROWS_AS(tokenize("a !) b", "t"), CompileError);
    CHECK_THROWS_AS(tokenize("a !( x !] b", "t"), CompileError);
}

TEST_CASE("number lexing does not eat ranges") {
    auto toks = texts(tokenize("1..5", "t"));
    CHECK(toks == std::vector<std::string>{"1", "..", "5"});
    auto toks2 = tokenize("x=0. TO 2 BY 0.5", "t");
    CHECK(toks2[2].kind == TokKind::RealLit);
    CHECK(toks2[2].text == "0.");
}

TEST_CASE("star runs lex as one token") {
    auto toks = texts(tokenize("V(****)", "t"));
    CHECK(toks == std::vector<std::string>{"V", "(", "****", ")"});
    auto toks2 = texts(tokenize("a**b", "t"));
    CHECK(toks2 == std::vector<std::string>{"a", "**", "b"});
}

TEST_CASE("keywords vs identifiers are case sensitive") {
    auto toks = tokenize("IF if If", "t");
    CHECK(toks[0].kind == TokKind::Keyword);
    CHECK(toks[1].kind == TokKind::Identifier);
    CHECK(toks[2].kind == TokKind::Identifier);
}

TEST_CASE("error positions point inside the lexeme") {
    try {
        tokenize("ab\ncd \"oops", "t");
        FAIL("expected error");
    } catch (const CompileError& e) {
        CHECK(e.diag.pos.line == 2);
        CHECK(e.diag.pos.column == 4);
    }
}

TEST_CASE("token positions are monotonic") {
    auto toks = tokenize("a b\n   c d ! x\ne", "t");
    int last_line = 0, last_col = 0;
    for (auto& t : toks) {
        if (t.kind == TokKind::EndOfInput) break;
        bool ok = t.pos.line > last_line ||
                  (t.pos.line == last_line && t.pos.column >= last_col);
        CHECK(ok);
        last_line = t.pos.line;
        last_col = t.pos.column;
    }
}

namespace {

bool same_stream(const std::vector<Token>& a, const std::vector<Token>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); i++) {
        if (a[i].kind != b[i].kind) return false;
        if (a[i].kind == TokKind::StringLit || a[i].kind == TokKind::CharEscape) {
            if (a[i].text != b[i].text) return false;
        } else if (a[i].text != b[i].text) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("serialize/tokenize is a fixed point") {
    const char* samples[] = {
        "x = 1 + 2\ny = x*3; z = [x+y]/4",
        "WRITE \"hello\" 'there' 42 3.14, v:1.15",
        "s = <<E\nline1\nline2\nE\nWRITE s",
        "IF a<=b THEN x=1 ELSE x=2 END IF",
        "LOOP FOR i=1 TO 3 AND j=1 DOWN TO 0 BY 2\nREPEAT LOOP",
        "c = \\n; d = \\t",
    };
    for (auto* src : samples) {
        auto t1 = tokenize(src, "t");
        auto s1 = serialize_tokens(t1);
        auto t2 = tokenize(s1, "t");
        CHECK(same_stream(t1, t2));
        CHECK(serialize_tokens(t2) == s1);
    }
}

TEST_CASE("random balanced comment nests lex clean") {
    std::mt19937 rng(1234);
    const char* opens = "([{";
    const char* closes = ")]}";
    for (int trial = 0; trial < 200; trial++) {
        std::string src = "a ";
        std::vector<int> stack;
        int depth_budget = 12;
        src += "!";
        int first = rng() % 3;
        src += opens[first];
        stack.push_back(first);
        while (!stack.empty()) {
            int action = (int)(rng() % 3);
            if ((action == 0 && (int)stack.size() < depth_budget)) {
                int k = rng() % 3;
                src += " !";
                src += opens[k];
                stack.push_back(k);
            } else if (action == 1) {
                src += " word ";
            } else {
                src += " !";
                src += closes[stack.back()];
                stack.pop_back();
            }
        }
        src += " b";
        auto toks = texts(tokenize(src, "t"));
        CHECK(toks == std::vector<std::string>{"a", "b"});
    }
}
