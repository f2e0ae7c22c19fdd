#include "cpl/lexer.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

namespace cpl {

const char* tok_kind_name(TokKind k) {
    switch (k) {
        case TokKind::Identifier: return "identifier";
        case TokKind::Keyword: return "keyword";
        case TokKind::IntLit: return "integer literal";
        case TokKind::RealLit: return "real literal";
        case TokKind::StringLit: return "string literal";
        case TokKind::CharEscape: return "character escape";
        case TokKind::Operator: return "operator";
        case TokKind::OpenBracket: return "open bracket";
        case TokKind::CloseBracket: return "close bracket";
        case TokKind::Separator: return "separator";
        case TokKind::Newline: return "newline";
        case TokKind::Semicolon: return "semicolon";
        case TokKind::EndOfInput: return "end of input";
    }
    return "?";
}

std::string SourcePos::to_string() const {
    return file + ":" + std::to_string(line) + ":" + std::to_string(column);
}

std::string Diagnostic::to_string() const {
    const char* sev = severity == Severity::Error ? "error" : "warning";
    return pos.to_string() + ": " + sev + ": " + message;
}

char SourceCursor::advance() {
    char c = text[offset++];
    if (c == '\n') {
        line++;
        column = 1;
    } else {
        column++;
    }
    return c;
}

namespace {

const std::unordered_set<std::string>& keyword_set() {
    static const std::unordered_set<std::string> kws = {
        "ALL", "AND", "ARGMAX", "ARGMIN", "ARRAY", "ASK", "BINARY", "BITAND",
        "BITNOT", "BITOR", "BITXOR", "BOOLEAN", "BY", "CASE", "CDIV", "CHAR",
        "CMOD", "CONSTANT", "CREATE", "DEFAULTFORMAT", "DIV", "DO", "DOWN",
        "DYNAMIC", "ELSE", "END", "ENUM", "ERROR", "EXCEPT", "EXIT", "FALSE",
        "FILE", "FLUSH", "FOLLOWS", "FOR", "FREE", "FROM", "FUNCTION", "IF",
        "IN", "INCLUDE", "INLINE", "INTEGER", "INTO", "IS", "LOOP", "LSHIFTED",
        "MAX", "MIN", "MOD", "MODULE", "NAME", "NEW", "NO", "NOT", "NULL",
        "OF", "OPEN", "OPTIONAL", "OR", "POINTER", "POSITION", "PRODUCT",
        "READ", "REAL", "REPEAT", "RESULT", "RETURN", "RSHIFTED", "SINGLE",
        "SIZEOF", "STOP", "STORED", "STRING", "STRUCTURE", "STRUCTURED",
        "SUBROUTINE", "SUM", "THEN", "TIMES", "TO", "TRAP", "TRUE", "TYPE",
        "TYPEOF", "UNTIL", "USE", "VARIABLE", "WHILE", "WITH", "WRITE", "YES",
    };
    return kws;
}

bool ident_start(char c) { return std::isalpha((unsigned char)c) || c == '_'; }
bool ident_char(char c) { return std::isalnum((unsigned char)c) || c == '_'; }

[[noreturn]] void lex_error(const std::string& origin, int line, int col,
                            const std::string& msg) {
    throw CompileError({Diagnostic::Severity::Error, {origin, line, col}, msg});
}

struct Lexer {
    SourceCursor cur;
    std::string origin;
    std::vector<Token> out;
    bool pending_space = true;  // line start counts as preceding space

    SourcePos here() const { return {origin, cur.line, cur.column}; }

    void push(Token t) {
        t.space_before = pending_space;
        pending_space = false;
        out.push_back(std::move(t));
    }

    // `!` seen: either to-end-of-line or a delimited comment with nested
    // !bracket pairs of matching kind.
    void skip_comment() {
        SourcePos start = here();
        cur.advance();  // '!'
        char c = cur.peek();
        if (c != '(' && c != '[' && c != '{') {
            if (c == ')' || c == ']' || c == '}')
                lex_error(origin, start.line, start.column,
                          "comment close '!"
                          + std::string(1, c) + "' without matching open");
            while (!cur.at_end() && cur.peek() != '\n') cur.advance();
            return;
        }
        std::vector<char> stack;
        stack.push_back(cur.advance());
        while (!stack.empty()) {
            if (cur.at_end())
                lex_error(origin, start.line, start.column,
                          "unterminated delimited comment");
            char ch = cur.advance();
            if (ch != '!') continue;
            char nx = cur.peek();
            if (nx == '(' || nx == '[' || nx == '{') {
                stack.push_back(cur.advance());
            } else if (nx == ')' || nx == ']' || nx == '}') {
                SourcePos at = here();
                char open = stack.back();
                char want = open == '(' ? ')' : open == '[' ? ']' : '}';
                if (nx != want)
                    lex_error(origin, at.line, at.column,
                              "mismatched comment bracket '!"
                              + std::string(1, nx) + "'");
                cur.advance();
                stack.pop_back();
            }
        }
    }

    void scan_number() {
        SourcePos start = here();
        std::string text;
        bool is_real = false;
        while (std::isdigit((unsigned char)cur.peek())) text += cur.advance();
        // A '.' belongs to the number unless it starts a '..' range.
        if (cur.peek() == '.' && cur.peek(1) != '.') {
            is_real = true;
            text += cur.advance();
            while (std::isdigit((unsigned char)cur.peek())) text += cur.advance();
        }
        if ((cur.peek() == 'E' || cur.peek() == 'e') &&
            (std::isdigit((unsigned char)cur.peek(1)) ||
             ((cur.peek(1) == '+' || cur.peek(1) == '-') &&
              std::isdigit((unsigned char)cur.peek(2))))) {
            is_real = true;
            text += cur.advance();
            if (cur.peek() == '+' || cur.peek() == '-') text += cur.advance();
            while (std::isdigit((unsigned char)cur.peek())) text += cur.advance();
        }
        Token t;
        t.kind = is_real ? TokKind::RealLit : TokKind::IntLit;
        t.text = text;
        t.pos = start;
        push(std::move(t));
    }

    void scan_word() {
        SourcePos start = here();
        std::string text;
        while (ident_char(cur.peek())) text += cur.advance();
        Token t;
        t.kind = keyword_set().count(text) ? TokKind::Keyword : TokKind::Identifier;
        t.text = text;
        t.pos = start;
        push(std::move(t));
    }

    void scan_operator() {
        SourcePos start = here();
        char c = cur.advance();
        std::string text(1, c);
        auto two = [&](char a, const char* merged) {
            if (cur.peek() == a) {
                cur.advance();
                text = merged;
                return true;
            }
            return false;
        };
        switch (c) {
            case '=': two('=', "=="); break;
            case '<': if (!two('=', "<=")) two('<', "<<"); break;
            case '>': if (!two('=', ">=")) two('>', ">>"); break;
            case '-': two('>', "->"); break;
            case '*':
                while (cur.peek() == '*') text += cur.advance();
                break;
            case '.':
                if (cur.peek() == '/' && cur.peek(1) == '.') {
                    cur.advance();
                    cur.advance();
                    text = "./.";
                } else {
                    two('.', "..");
                }
                break;
            default: break;
        }
        Token t;
        t.kind = TokKind::Operator;
        t.text = text;
        t.pos = start;
        push(std::move(t));
    }

    void run() {
        while (!cur.at_end()) {
            char c = cur.peek();
            if (c == ' ' || c == '\t' || c == '\r') {
                cur.advance();
                pending_space = true;
                continue;
            }
            if (c == '!') {
                skip_comment();
                pending_space = true;
                continue;
            }
            if (c == '\n') {
                Token t;
                t.kind = TokKind::Newline;
                t.text = "\n";
                t.pos = here();
                cur.advance();
                push(std::move(t));
                pending_space = true;
                continue;
            }
            if (c == '\\') {
                // Continuation if nothing but whitespace remains on the line,
                // otherwise a bare character escape.
                size_t look = 1;
                while (cur.peek(look) == ' ' || cur.peek(look) == '\t' ||
                       cur.peek(look) == '\r')
                    look++;
                if (cur.peek(look) == '\n' || cur.offset + look >= cur.text.size()) {
                    for (size_t i = 0; i <= look && !cur.at_end(); i++) cur.advance();
                    pending_space = true;
                    continue;
                }
                push(scan_string(cur, origin));
                continue;
            }
            if (c == '"' || c == '\'') {
                push(scan_string(cur, origin));
                continue;
            }
            if (c == '<' && cur.peek(1) == '<' && ident_start(cur.peek(2))) {
                push(scan_string(cur, origin));
                continue;
            }
            if (std::isdigit((unsigned char)c)) {
                scan_number();
                continue;
            }
            if (ident_start(c)) {
                scan_word();
                continue;
            }
            if (c == ';') {
                Token t;
                t.kind = TokKind::Semicolon;
                t.text = ";";
                t.pos = here();
                cur.advance();
                push(std::move(t));
                pending_space = true;
                continue;
            }
            if (c == '(' || c == '[' || c == '{') {
                Token t;
                t.kind = TokKind::OpenBracket;
                t.text = std::string(1, c);
                t.bracket = c == '(' ? BracketStyle::Round
                          : c == '[' ? BracketStyle::Square
                                     : BracketStyle::Curly;
                t.pos = here();
                cur.advance();
                push(std::move(t));
                continue;
            }
            if (c == ')' || c == ']' || c == '}') {
                Token t;
                t.kind = TokKind::CloseBracket;
                t.text = std::string(1, c);
                t.bracket = c == ')' ? BracketStyle::Round
                          : c == ']' ? BracketStyle::Square
                                     : BracketStyle::Curly;
                t.pos = here();
                cur.advance();
                push(std::move(t));
                continue;
            }
            static const std::string op_chars = "+-*/^=<>#,.:|&~$?%@";
            if (op_chars.find(c) != std::string::npos) {
                scan_operator();
                continue;
            }
            lex_error(origin, cur.line, cur.column,
                      std::string("unexpected character '") + c + "'");
        }
        Token t;
        t.kind = TokKind::EndOfInput;
        t.pos = here();
        push(std::move(t));
    }
};

}  // namespace

bool is_keyword(const std::string& word) { return keyword_set().count(word) != 0; }

Token scan_string(SourceCursor& cur, const std::string& origin) {
    SourcePos start{origin, cur.line, cur.column};
    char c = cur.peek();
    Token t;
    t.kind = TokKind::StringLit;
    t.pos = start;

    if (c == '\\') {
        cur.advance();
        char e = cur.peek();
        char decoded;
        switch (e) {
            case 'n': decoded = '\n'; break;
            case 't': decoded = '\t'; break;
            case 'r': decoded = '\r'; break;
            case '0': decoded = '\0'; break;
            case '\\': decoded = '\\'; break;
            case '\'': decoded = '\''; break;
            case '"': decoded = '"'; break;
            default:
                lex_error(origin, start.line, start.column,
                          std::string("unsupported escape sequence '\\") + e + "'");
        }
        cur.advance();
        t.kind = TokKind::CharEscape;
        t.text = std::string(1, decoded);
        t.delimiter = 'E';
        return t;
    }

    if (c == '"' || c == '\'') {
        char quote = cur.advance();
        std::string content;
        while (true) {
            if (cur.at_end() || cur.peek() == '\n')
                lex_error(origin, start.line, start.column,
                          "unterminated string literal");
            char ch = cur.advance();
            if (ch == quote) break;
            content += ch;
        }
        t.text = content;
        t.delimiter = quote;
        return t;
    }

    // <<delimiter heredoc
    cur.advance();
    cur.advance();
    std::string delim;
    while (ident_char(cur.peek())) delim += cur.advance();
    if (delim.empty())
        lex_error(origin, start.line, start.column, "missing heredoc delimiter");
    // rest of the introducing line must be blank
    while (cur.peek() == ' ' || cur.peek() == '\t' || cur.peek() == '\r') cur.advance();
    if (cur.at_end() || cur.peek() != '\n')
        lex_error(origin, start.line, start.column,
                  "heredoc delimiter must end its line");
    cur.advance();  // newline: body starts

    std::vector<StringSegment> segments;
    std::string text_acc;
    auto flush_text = [&]() {
        if (!text_acc.empty()) {
            segments.push_back({false, text_acc});
            text_acc.clear();
        }
    };
    while (true) {
        if (cur.at_end())
            lex_error(origin, start.line, start.column, "unterminated heredoc");
        // collect one body line; the terminator's own newline is left in place
        // so it still separates statements
        std::string line;
        while (!cur.at_end() && cur.peek() != '\n') line += cur.advance();
        if (line == delim) break;
        if (cur.at_end())
            lex_error(origin, start.line, start.column, "unterminated heredoc");
        cur.advance();
        // scan for delimiter var delimiter splices within the line
        size_t pos = 0;
        while (pos < line.size()) {
            size_t hit = line.find(delim, pos);
            if (hit == std::string::npos) {
                text_acc += line.substr(pos);
                pos = line.size();
                break;
            }
            size_t p = hit + delim.size();
            while (p < line.size() && (line[p] == ' ' || line[p] == '\t')) p++;
            size_t id_start = p;
            while (p < line.size() && ident_char(line[p])) p++;
            size_t id_end = p;
            while (p < line.size() && (line[p] == ' ' || line[p] == '\t')) p++;
            if (id_end > id_start && line.compare(p, delim.size(), delim) == 0) {
                text_acc += line.substr(pos, hit - pos);
                flush_text();
                segments.push_back({true, line.substr(id_start, id_end - id_start)});
                pos = p + delim.size();
            } else {
                text_acc += line.substr(pos, hit - pos) + delim;
                pos = hit + delim.size();
            }
        }
        text_acc += '\n';
    }
    flush_text();

    std::string whole;
    for (auto& s : segments)
        if (!s.is_splice) whole += s.text;
    t.text = whole;
    t.delimiter = 'H';
    bool any_splice = std::any_of(segments.begin(), segments.end(),
                                  [](const StringSegment& s) { return s.is_splice; });
    if (any_splice)
        t.segments = std::move(segments);
    return t;
}

std::vector<Token> tokenize(std::string_view source, const std::string& origin) {
    Lexer lx;
    lx.cur.text = source;
    lx.origin = origin;
    lx.run();
    return lx.out;
}

namespace {

std::string render_string_token(const Token& t) {
    const std::string& s = t.text;
    bool has_nl = s.find('\n') != std::string::npos;
    bool has_dq = s.find('"') != std::string::npos;
    bool has_sq = s.find('\'') != std::string::npos;
    if (t.segments.empty() && !has_nl) {
        if (!has_dq) return "\"" + s + "\"";
        if (!has_sq) return "'" + s + "'";
    }
    // heredoc form; content must be empty or newline-terminated
    std::vector<StringSegment> segs = t.segments;
    if (segs.empty() && !s.empty()) segs.push_back({false, s});
    std::string delim = "EOT";
    auto clashes = [&](const std::string& d) {
        for (auto& seg : segs)
            if (!seg.is_splice && seg.text.find(d) != std::string::npos) return true;
        return false;
    };
    for (int n = 0; clashes(delim); n++) delim = "EOT" + std::to_string(n);
    std::string out = "<<" + delim + "\n";
    for (auto& seg : segs) {
        if (seg.is_splice)
            out += delim + " " + seg.text + " " + delim;
        else
            out += seg.text;
    }
    if (!out.empty() && out.back() != '\n') out += "\n";
    out += delim;
    return out;
}

}  // namespace

std::string serialize_tokens(const std::vector<Token>& toks) {
    std::string out;
    bool line_start = true;
    for (const auto& t : toks) {
        switch (t.kind) {
            case TokKind::EndOfInput: continue;
            case TokKind::Newline:
                out += '\n';
                line_start = true;
                continue;
            default: break;
        }
        if (!line_start) out += ' ';
        line_start = false;
        switch (t.kind) {
            case TokKind::Semicolon: out += ';'; break;
            case TokKind::StringLit: out += render_string_token(t); break;
            case TokKind::CharEscape: {
                char c = t.text.empty() ? '0' : t.text[0];
                out += '\\';
                switch (c) {
                    case '\n': out += 'n'; break;
                    case '\t': out += 't'; break;
                    case '\r': out += 'r'; break;
                    case '\0': out += '0'; break;
                    default: out += c; break;
                }
                break;
            }
            default: out += t.text; break;
        }
    }
    return out;
}

}  // namespace cpl
