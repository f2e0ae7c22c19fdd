#ifndef CPL_PARSER_HPP
#define CPL_PARSER_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cpl/ast.hpp"
#include "cpl/resolver.hpp"
#include "cpl/token.hpp"

namespace cpl {

// Hooks the front end uses for USE/INCLUDE; implemented by the module
// registry. Absent support makes USE/INCLUDE compile errors.
struct ModuleSupport {
    virtual ~ModuleSupport() = default;
    // Handles USE at `pos`: loads (compiling or from cache) into `top`, and
    // returns the unit's executable statements (empty when already loaded).
    virtual std::vector<StmtPtr> handle_use(const std::string& path, Scope& top,
                                            SourcePos pos) = 0;
    // Reads an INCLUDE file, resolving relative to the current directory;
    // pushes that file's directory until pop_dir.
    virtual std::string begin_include(const std::string& path, SourcePos pos,
                                      std::string* resolved_path) = 0;
    virtual void end_include() = 0;
};

struct CompileResult {
    std::vector<StmtPtr> stmts;
    std::vector<Diagnostic> diagnostics;
    bool ok = true;
    // keeps scopes (symbol owners) alive as long as the compiled program
    std::vector<std::shared_ptr<Scope>> scopes;
};

// Builds the prelude scope (builtins, predefined constants). The returned
// scope owns its symbols; program scopes should use it as their parent.
std::shared_ptr<Scope> make_prelude_scope();

class Compiler {
public:
    explicit Compiler(ModuleSupport* modules = nullptr) : modules_(modules) {}

    // Parses and checks a whole source into `scope` (usually a child of the
    // prelude scope). Diagnostics collected with statement-level recovery.
    CompileResult compile(std::vector<Token> tokens, Scope& scope);

    // REPL mode: bare expressions become WRITE statements, end-of-scope
    // FOLLOWS checks are skipped.
    bool interactive = false;

private:
    ModuleSupport* modules_;
};

// Decision function used when a newline interrupts a statement: true when
// the prefix is syntactically incomplete and the statement continues on the
// next line.
bool continue_or_end(const std::vector<Token>& prefix);

// True when the token window opens a multi-line construct that is not yet
// closed (REPL completeness detection counts these).
int block_depth_delta(const std::vector<Token>& line);

}  // namespace cpl

#endif
