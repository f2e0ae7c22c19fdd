#ifndef CPL_LEXER_HPP
#define CPL_LEXER_HPP

#include <string>
#include <string_view>
#include <vector>

#include "cpl/token.hpp"

namespace cpl {

// Tracks a position while scanning source text.
struct SourceCursor {
    std::string_view text;
    size_t offset = 0;
    int line = 1;
    int column = 1;

    bool at_end() const { return offset >= text.size(); }
    char peek(size_t ahead = 0) const {
        return offset + ahead < text.size() ? text[offset + ahead] : '\0';
    }
    char advance();
};

bool is_keyword(const std::string& word);

// Converts source text to a token stream. Comments are removed, backslash
// continuations elided, statement separators emitted as Newline/Semicolon
// tokens. Throws CompileError on malformed input.
std::vector<Token> tokenize(std::string_view source, const std::string& origin);

// Scans one string literal (quoted, heredoc, or bare escape) at the cursor.
Token scan_string(SourceCursor& cur, const std::string& origin);

// Renders a token stream back to parseable source, one logical line per
// Newline token, everything else single-space separated. Lexing the result
// reproduces the same token content.
std::string serialize_tokens(const std::vector<Token>& toks);

}  // namespace cpl

#endif
