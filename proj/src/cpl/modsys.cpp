#include "cpl/modsys.hpp"

#include <limits.h>
#include <stdlib.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "cpl/lexer.hpp"

namespace cpl {

namespace {

[[noreturn]] void mod_error(SourcePos pos, const std::string& msg) {
    throw CompileError({Diagnostic::Severity::Error, std::move(pos), msg});
}

long mtime_of(const std::string& path) {
    struct stat st;
    if (::stat(path.c_str(), &st) != 0) return -1;
    return (long)st.st_mtime;  // whole seconds
}

std::string dir_of(const std::string& path) {
    size_t slash = path.find_last_of('/');
    return slash == std::string::npos ? "." : path.substr(0, slash);
}

std::string base_of(const std::string& path) {
    size_t slash = path.find_last_of('/');
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t dot = name.find_last_of('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string canonical(const std::string& path) {
    char buf[PATH_MAX];
    if (::realpath(path.c_str(), buf)) return buf;
    return path;
}

}  // namespace

Registry::Registry() {
    char cwd[PATH_MAX];
    dirs_.push_back(::getcwd(cwd, sizeof cwd) ? cwd : ".");
    if (const char* env = ::getenv("CPL_CACHE_DIR"))
        if (*env) cache_dir = env;
}

std::string Registry::resolve(const std::string& path, bool add_suffix) const {
    std::string p = path;
    std::string name = p.find('/') == std::string::npos
                           ? p
                           : p.substr(p.find_last_of('/') + 1);
    if (add_suffix && name.find('.') == std::string::npos) p += ".cpl";
    if (!p.empty() && p[0] == '/') return p;
    return dirs_.back() + "/" + p;
}

std::string Registry::cache_path_for(const std::string& source) const {
    if (cache_dir.empty()) {
        size_t dot = source.find_last_of('.');
        size_t slash = source.find_last_of('/');
        std::string stem = (dot == std::string::npos ||
                            (slash != std::string::npos && dot < slash))
                               ? source
                               : source.substr(0, dot);
        return stem + ".cplm";
    }
    return cache_dir + "/" + base_of(source) + ".cplm";
}

std::string interface_of(const std::vector<StmtPtr>& stmts) {
    std::ostringstream out;
    for (auto& s : stmts) {
        switch (s->kind) {
            case StmtKind::Decl: {
                const DeclItem& item = s->decls[0];
                out << (s->decl_constant ? "CONSTANT " : "VARIABLE ") << item.sym->name
                    << ": " << type_to_string(item.sym->type) << "\n";
                break;
            }
            case StmtKind::TypeDecl:
                out << "TYPE " << s->sym->name << " = "
                    << type_to_string(s->sym->type ? s->sym->type->def : nullptr)
                    << "\n";
                break;
            case StmtKind::DeferredDecl:
                out << "ALIAS " << s->sym->name << "\n";
                break;
            case StmtKind::SubrDecl: {
                const FunctionMember& m = *s->fn_member;
                out << (m.is_function ? "FUNCTION " : "SUBROUTINE ") << s->name << "(";
                for (size_t i = 0; i < m.sig->params.size(); i++) {
                    const Param& p = m.sig->params[i];
                    if (i) out << (p.sep == "," ? "; " : " " + p.sep + " ");
                    if (p.optional) out << "OPTIONAL ";
                    out << type_to_string(p.type);
                }
                out << ")";
                if (m.is_function) out << "->" << type_to_string(m.sig->result);
                out << "\n";
                break;
            }
            case StmtKind::Use:
                out << "USE " << s->use_path << "\n";
                break;
            case StmtKind::Block:
                out << interface_of(s->body);
                break;
            default:
                break;
        }
    }
    return out.str();
}

std::vector<StmtPtr> Registry::handle_use(const std::string& path, Scope& top,
                                          SourcePos pos) {
    std::string source = canonical(resolve(path, true));
    if (mtime_of(source) < 0) mod_error(pos, "cannot find USEd file " + source);
    auto it = units_.find(source);
    if (it != units_.end()) return {};  // loaded at most once per build
    if (loading_.count(source)) mod_error(pos, "cyclic USE of " + source);
    loading_.insert(source);

    long src_time = mtime_of(source);
    std::string cache = cache_path_for(source);
    long cache_time = mtime_of(cache);
    bool fresh = cache_time > src_time;  // a tie counts as stale

    auto unit = std::make_shared<ModuleUnit>();
    unit->source_path = source;
    unit->source_mtime = src_time;

    push_dir(dir_of(source));
    std::vector<StmtPtr> stmts;
    try {
        if (fresh) {
            // the cached body is loaded; the source's inner blocks are
            // never read
            std::ifstream in(cache, std::ios::binary);
            std::string line;
            std::getline(in, line);
            bool valid = line == "CPLM 1";
            std::string recorded;
            if (valid) {
                std::getline(in, line);
                valid = line.compare(0, 7, "source ") == 0;
                if (valid) recorded = line.substr(7);
            }
            size_t iface_lines = 0;
            std::string iface, body;
            if (valid) {
                std::getline(in, line);
                if (line.compare(0, 10, "interface ") == 0)
                    iface_lines = std::stoul(line.substr(10));
                else
                    valid = false;
            }
            for (size_t i = 0; valid && i < iface_lines; i++) {
                std::getline(in, line);
                iface += line + "\n";
            }
            if (valid) {
                std::getline(in, line);
                if (line.compare(0, 5, "body ") == 0) {
                    size_t body_lines = std::stoul(line.substr(5));
                    for (size_t i = 0; i < body_lines; i++) {
                        std::getline(in, line);
                        body += line + "\n";
                    }
                } else {
                    valid = false;
                }
            }
            if (valid && recorded != source) valid = false;
            if (valid) {
                Compiler nested(this);
                CompileResult res = nested.compile(tokenize(body, cache), top);
                if (res.ok) {
                    stmts = res.stmts;
                    unit->stmts = stmts;
                    unit->interface_text = iface;
                    unit->from_cache = true;
                    retained_.push_back(std::move(res));
                    skim_count++;
                } else {
                    valid = false;
                }
            }
            fresh = valid;
        }
        if (!fresh) {
            std::string text = read_file(source);
            Compiler nested(this);
            CompileResult res = nested.compile(tokenize(text, source), top);
            if (!res.ok) {
                throw CompileError(res.diagnostics.empty()
                                       ? Diagnostic{Diagnostic::Severity::Error, pos,
                                                    "USEd file failed to compile"}
                                       : res.diagnostics[0]);
            }
            stmts = res.stmts;
            unit->stmts = stmts;
            unit->interface_text = interface_of(stmts);
            unit->from_cache = false;
            retained_.push_back(std::move(res));

            std::string body = print_program(stmts);
            std::ostringstream out;
            out << "CPLM 1\n";
            out << "source " << source << "\n";
            size_t iface_lines = 0;
            for (char c : unit->interface_text)
                if (c == '\n') iface_lines++;
            out << "interface " << iface_lines << "\n" << unit->interface_text;
            size_t body_lines = 0;
            for (char c : body)
                if (c == '\n') body_lines++;
            out << "body " << body_lines << "\n" << body;
            std::ofstream of(cache, std::ios::binary | std::ios::trunc);
            if (of) {
                of << out.str();
                compile_count++;
            }
        }
    } catch (...) {
        loading_.erase(source);
        pop_dir();
        throw;
    }
    pop_dir();
    loading_.erase(source);
    units_[source] = unit;
    return stmts;
}

std::string Registry::begin_include(const std::string& path, SourcePos pos,
                                    std::string* resolved_path) {
    std::string source = canonical(resolve(path, true));
    if (loading_.count("inc:" + source))
        mod_error(pos, "recursive INCLUDE of " + source);
    if (mtime_of(source) < 0) mod_error(pos, "cannot find INCLUDEd file " + source);
    loading_.insert("inc:" + source);
    push_dir(dir_of(source));
    if (resolved_path) *resolved_path = source;
    include_stack_.push_back(source);
    return read_file(source);
}

void Registry::end_include() {
    if (!include_stack_.empty()) {
        loading_.erase("inc:" + include_stack_.back());
        include_stack_.pop_back();
    }
    pop_dir();
}

}  // namespace cpl
