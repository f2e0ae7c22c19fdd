#ifndef CPL_MODSYS_HPP
#define CPL_MODSYS_HPP

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cpl/parser.hpp"

namespace cpl {

// A USEd compilation unit: interface summary plus the executable body,
// either freshly compiled or loaded from a .cplm cache.
struct ModuleUnit {
    std::string source_path;  // canonical
    std::string interface_text;
    std::vector<StmtPtr> stmts;
    bool from_cache = false;
    long source_mtime = 0;
};

// Serializes the outer-block interface of a compiled unit.
std::string interface_of(const std::vector<StmtPtr>& stmts);

// USE/INCLUDE support with make-like timestamp caching. Cache files are
// `<base>.cplm` beside sources, or under CPL_CACHE_DIR when set.
class Registry : public ModuleSupport {
public:
    Registry();

    std::string cache_dir;  // empty: beside the source

    int compile_count = 0;  // full compiles (cache writes)
    int skim_count = 0;     // cache loads

    std::vector<StmtPtr> handle_use(const std::string& path, Scope& top,
                                    SourcePos pos) override;
    std::string begin_include(const std::string& path, SourcePos pos,
                              std::string* resolved_path) override;
    void end_include() override;

    void push_dir(const std::string& dir) { dirs_.push_back(dir); }
    void pop_dir() { dirs_.pop_back(); }
    const std::string& current_dir() const { return dirs_.back(); }

    std::string resolve(const std::string& path, bool add_suffix) const;
    std::string cache_path_for(const std::string& source) const;

    const std::map<std::string, std::shared_ptr<ModuleUnit>>& units() const {
        return units_;
    }

private:
    std::vector<std::string> dirs_;
    std::vector<std::string> include_stack_;
    std::map<std::string, std::shared_ptr<ModuleUnit>> units_;
    std::set<std::string> loading_;
    std::vector<CompileResult> retained_;
};

}  // namespace cpl

#endif
