#include "cpl/repl.hpp"

#include <cstring>

#include "cpl/lexer.hpp"

namespace cpl {

namespace {

// reads one physical line; false at end of input
bool read_line(FileHandle& h, std::string& line) {
    line.clear();
    int c = fh_getc(h);
    if (c == EOF) return false;
    while (c != EOF && c != '\n') {
        line += (char)c;
        c = fh_getc(h);
    }
    return true;
}

bool lexes_complete(const std::string& text, std::vector<Token>& toks) {
    try {
        toks = tokenize(text, "(repl)");
        return true;
    } catch (CompileError&) {
        // unterminated string/heredoc/comment: keep reading
        return false;
    }
}

}  // namespace

int run_repl(Session& session) {
    Machine& m = session.machine;
    session.interactive = true;
    std::string buffer;
    int depth = 0;

    auto prompt = [&](bool more) {
        const char* p = more ? "... " : "> ";
        fh_write_bytes(*m.ferr, p, strlen(p));
        fh_flush(*m.ferr);
    };

    prompt(false);
    std::string line;
    while (read_line(*m.fin, line)) {
        if (buffer.empty() && line == ":quit") break;
        buffer += line;
        buffer += "\n";

        std::vector<Token> toks;
        if (!lexes_complete(buffer, toks)) {
            prompt(true);
            continue;
        }
        depth = block_depth_delta(toks);
        if (depth > 0 || continue_or_end(toks)) {
            prompt(true);
            continue;
        }

        std::string snippet = std::move(buffer);
        buffer.clear();
        bool only_separators = true;
        for (auto& t : toks)
            if (t.kind != TokKind::Newline && t.kind != TokKind::Semicolon &&
                t.kind != TokKind::EndOfInput)
                only_separators = false;
        if (only_separators) {
            prompt(false);
            continue;
        }

        auto mark = session.mark_scope();
        CompileResult res = session.compile(snippet, "(repl)");
        if (!res.ok) {
            // a bare expression prints as though passed to WRITE
            session.rollback_scope(mark);
            CompileResult echo = session.compile("WRITE (" + snippet + ")", "(repl)");
            if (echo.ok) {
                res = std::move(echo);
            } else {
                session.rollback_scope(mark);
                for (auto& d : res.diagnostics) {
                    std::string msg = d.to_string() + "\n";
                    fh_write_bytes(*m.ferr, msg.data(), msg.size());
                }
                fh_flush(*m.ferr);
                prompt(false);
                continue;
            }
        }
        int status = session.execute(res.stmts);
        (void)status;
        if (m.stop_requested) break;
        prompt(false);
    }
    fh_flush(*m.fout);
    return 0;
}

}  // namespace cpl
