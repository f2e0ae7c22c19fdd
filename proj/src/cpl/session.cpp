#include "cpl/session.hpp"

#include <unistd.h>

#include <fstream>
#include <sstream>

#include "cpl/lexer.hpp"

namespace cpl {

Session::Session() {
    prelude = make_prelude_scope();
    top = std::make_shared<Scope>();
    top->parent = prelude.get();
    top->block_kind = ScopeKind::Program;
}

std::string Session::read_file_or_throw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CompileError(
            {Diagnostic::Severity::Error, {path, 0, 0}, "cannot open " + path});
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CompileResult Session::compile(const std::string& source, const std::string& origin) {
    Compiler compiler(&registry);
    compiler.interactive = interactive;
    CompileResult res;
    try {
        res = compiler.compile(tokenize(source, origin), *top);
    } catch (CompileError& e) {
        res.ok = false;
        res.diagnostics.push_back(e.diag);
    }
    if (res.ok) retained_.push_back(res);
    return res;
}

void Session::ensure_machine() {
    if (machine_ready_) return;
    machine.setup(*top);
    machine_ready_ = true;
}

int Session::check_file(const std::string& path) {
    std::string text;
    try {
        text = read_file_or_throw(path);
    } catch (CompileError& e) {
        std::string msg = e.diag.message + "\n";
        fh_write_bytes(*machine.ferr, msg.data(), msg.size());
        return 2;
    }
    CompileResult res = compile(text, path);
    for (auto& d : res.diagnostics) {
        std::string msg = d.to_string() + "\n";
        fh_write_bytes(*machine.ferr, msg.data(), msg.size());
    }
    fh_flush(*machine.ferr);
    return res.ok ? 0 : 1;
}

int Session::execute(const std::vector<StmtPtr>& stmts) {
    ensure_machine();
    return machine.run(stmts);
}

int Session::run_source(const std::string& source, const std::string& origin) {
    CompileResult res = compile(source, origin);
    if (!res.ok) {
        for (auto& d : res.diagnostics) {
            std::string msg = d.to_string() + "\n";
            fh_write_bytes(*machine.ferr, msg.data(), msg.size());
        }
        fh_flush(*machine.ferr);
        return 1;
    }
    return execute(res.stmts);
}

int Session::run_file(const std::string& path, const std::vector<std::string>& args) {
    std::string text;
    try {
        text = read_file_or_throw(path);
    } catch (CompileError& e) {
        std::string msg = e.diag.message + "\n";
        fh_write_bytes(*machine.ferr, msg.data(), msg.size());
        return 2;
    }
    machine.commandline.clear();
    machine.commandline.push_back(path);
    for (auto& a : args) machine.commandline.push_back(a);
    // file references resolve relative to the program's directory
    size_t slash = path.find_last_of('/');
    if (slash != std::string::npos) {
        registry.pop_dir();
        char buf[4096];
        std::string dir = path.substr(0, slash);
        if (dir[0] != '/') {
            std::string cwd = ::getcwd(buf, sizeof buf) ? buf : ".";
            dir = cwd + "/" + dir;
        }
        registry.push_dir(dir);
    }
    return run_source(text, path);
}

Session::ScopeMark Session::mark_scope() const {
    ScopeMark m;
    m.table = top->table;
    m.owned = top->owned.size();
    m.pending_deferred = top->pending_deferred.size();
    m.pending_protos = top->pending_prototypes.size();
    return m;
}

void Session::rollback_scope(const ScopeMark& mark) {
    top->table = mark.table;
    top->owned.resize(mark.owned);
    top->pending_deferred.resize(mark.pending_deferred);
    top->pending_prototypes.resize(mark.pending_protos);
    top->with_subjects.clear();
}

}  // namespace cpl
