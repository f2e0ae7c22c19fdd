#ifndef CPL_TEST_UTIL_HPP
#define CPL_TEST_UTIL_HPP

#include <string>

#include "cpl/lexer.hpp"
#include "cpl/repl.hpp"
#include "cpl/session.hpp"

namespace cpltest {

struct RunResult {
    int status = 0;
    std::string out;
    std::string err;
    bool compile_ok = true;
    std::string first_error;
};

// Compiles and runs a CPL program in-process with captured streams.
inline RunResult run_program(const std::string& source, const std::string& input = "",
                             bool rtchecks = false, unsigned seed = 0,
                             const std::string& origin = "test.cpl") {
    cpl::Session session;
    session.machine.fin = cpl::make_mem_file(input);
    session.machine.fout = cpl::make_mem_file();
    session.machine.ferr = cpl::make_mem_file();
    session.machine.rtchecks = rtchecks;
    if (seed) session.machine.rng.seed(seed);
    RunResult r;
    cpl::CompileResult res = session.compile(source, origin);
    if (!res.ok) {
        r.compile_ok = false;
        r.status = 1;
        for (auto& d : res.diagnostics) r.err += d.to_string() + "\n";
        if (!res.diagnostics.empty()) r.first_error = res.diagnostics[0].message;
        return r;
    }
    r.status = session.execute(res.stmts);
    r.out = session.machine.fout->buf;
    r.err = session.machine.ferr->buf;
    return r;
}

// Feeds the program line-by-line through the REPL; returns captured stdout.
inline RunResult replay_repl(const std::string& source, const std::string& input = "",
                             unsigned seed = 0) {
    cpl::Session session;
    std::string all = source;
    session.machine.fin = cpl::make_mem_file(all + input);
    session.machine.fout = cpl::make_mem_file();
    session.machine.ferr = cpl::make_mem_file();
    if (seed) session.machine.rng.seed(seed);
    RunResult r;
    r.status = cpl::run_repl(session);
    r.out = session.machine.fout->buf;
    r.err = session.machine.ferr->buf;
    return r;
}

inline cpl::CompileResult compile_only(const std::string& source,
                                       cpl::Session& session) {
    return session.compile(source, "test.cpl");
}

}  // namespace cpltest

#endif
