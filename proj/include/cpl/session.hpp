#ifndef CPL_SESSION_HPP
#define CPL_SESSION_HPP

#include <memory>
#include <string>
#include <vector>

#include "cpl/interp.hpp"
#include "cpl/modsys.hpp"
#include "cpl/parser.hpp"

namespace cpl {

// One checker+interpreter instance: persistent top-level scope, module
// registry and machine. The CLI, the REPL and the tests all drive this.
class Session {
public:
    Session();

    Machine machine;
    Registry registry;
    std::shared_ptr<Scope> prelude;
    std::shared_ptr<Scope> top;
    bool interactive = false;

    // compiles source text into the persistent top scope
    CompileResult compile(const std::string& source, const std::string& origin);

    // `cplc check`: diagnostics to machine.ferr; 0 iff clean
    int check_file(const std::string& path);

    // `cplc run`: full pipeline; returns the process status
    int run_file(const std::string& path, const std::vector<std::string>& args);
    int run_source(const std::string& source, const std::string& origin);

    // executes already-compiled statements in the persistent global frame
    int execute(const std::vector<StmtPtr>& stmts);

    // scope snapshot/rollback for the REPL
    struct ScopeMark {
        std::map<std::string, Symbol*> table;
        size_t owned = 0;
        size_t pending_deferred = 0;
        size_t pending_protos = 0;
    };
    ScopeMark mark_scope() const;
    void rollback_scope(const ScopeMark& mark);

    static std::string read_file_or_throw(const std::string& path);

private:
    std::vector<CompileResult> retained_;
    bool machine_ready_ = false;
    void ensure_machine();
};

}  // namespace cpl

#endif
