#ifndef CPL_TOKEN_HPP
#define CPL_TOKEN_HPP

#include <string>
#include <vector>

#include "cpl/diag.hpp"

namespace cpl {

enum class TokKind {
    Identifier,
    Keyword,
    IntLit,
    RealLit,
    StringLit,   // decoded content in `text`; `delimiter` records the original quote
    CharEscape,  // bare \n style escape, decoded single char in `text`
    Operator,
    OpenBracket,
    CloseBracket,
    Separator,   // reserved for lexer-internal use
    Newline,
    Semicolon,
    EndOfInput,
};

enum class BracketStyle { None, Round, Square, Curly };

// One interpolation segment of a heredoc literal: either literal text or a
// spliced variable name.
struct StringSegment {
    bool is_splice = false;
    std::string text;  // literal text, or the identifier to splice
};

struct Token {
    TokKind kind = TokKind::EndOfInput;
    std::string text;
    SourcePos pos;
    BracketStyle bracket = BracketStyle::None;
    char delimiter = 0;        // string literals: '"', '\'', 'H' for heredoc, 'E' for escape
    bool space_before = false; // whitespace (or line start) precedes this token
    std::vector<StringSegment> segments;  // heredoc interpolation splices

    bool is_kw(const char* kw) const {
        return kind == TokKind::Keyword && text == kw;
    }
    bool is_op(const char* op) const {
        return kind == TokKind::Operator && text == op;
    }
    bool is_end() const {
        return kind == TokKind::Newline || kind == TokKind::Semicolon ||
               kind == TokKind::EndOfInput;
    }
};

const char* tok_kind_name(TokKind k);

}  // namespace cpl

#endif
