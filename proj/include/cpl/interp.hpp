#ifndef CPL_INTERP_HPP
#define CPL_INTERP_HPP

#include <map>
#include <set>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cpl/ast.hpp"
#include "cpl/arrays.hpp"
#include "cpl/iosys.hpp"
#include "cpl/resolver.hpp"
#include "cpl/value.hpp"

namespace cpl {

// One run-time block activation.
struct Frame {
    std::shared_ptr<Frame> parent;
    const Stmt* block = nullptr;
    std::map<const Symbol*, Value> cells;
    std::vector<const Stmt*> traps;  // TRAPs armed in this block
    Fmt fmt;
    bool has_fmt = false;
};
using FramePtr = std::shared_ptr<Frame>;

// A storage location: memory slot or stored (on-disk) element.
struct Place {
    bool stored = false;
    MemRef mem;
    StoredRef disk;
    TypePtr type;
};

// Tree-walking evaluator. One Machine per program run (or REPL session).
struct Machine {
    Machine();

    bool rtchecks = false;
    FilePtr fin, fout, ferr;
    std::mt19937 rng{default_seed};
    static constexpr unsigned default_seed = 20200608u;

    std::vector<std::string> commandline;

    FramePtr global;
    std::map<const Stmt*, FramePtr> decl_envs;  // SubrDecl -> captured env
    std::map<const Stmt*, FramePtr> module_frames_;
    std::set<const Stmt*> executed_use_;
    std::vector<Value> tilde_stack_;
    SourcePos current_pos;
    Symbol* errormessage_sym = nullptr;  // bound lazily from the prelude
    bool stop_requested = false;         // STOP that unwound to top level

    // prepares the global frame against a program scope (prelude bindings)
    void setup(Scope& program_scope);

    // executes top-level statements in the persistent global frame;
    // returns the process exit status (0 ok, 1 runtime error reported)
    int run(const std::vector<StmtPtr>& stmts);

    void exec(const Stmt& s, FramePtr& env);
    void exec_dispatch(const Stmt& s, FramePtr& env);
    void exec_body(const std::vector<StmtPtr>& body, FramePtr env);
    Value eval(const Expr& e, FramePtr& env);
    Place eval_place(const Expr& e, FramePtr& env);
    Value load_place(const Place& p);
    void store_place(const Place& p, const Value& v);

    double rand01();
    double gauss();

    // runtime errors (trappable); adds the current position under rtchecks
    [[noreturn]] void rt_error(const std::string& msg);

    // reads/writes for the io module
    Fmt current_fmt(const FramePtr& env) const;

    // value helpers shared with builtins
    static double to_real(const Value& v);
    static long to_int(const Value& v);
    static bool value_equal(const Value& a, const Value& b);

    Value call_member(const std::shared_ptr<FunctionMember>& member,
                      std::vector<Value> positional,
                      const std::vector<std::pair<std::string, Value>>& named,
                      FramePtr& caller_env, SourcePos pos);

    WriteOverride write_override_hook(FramePtr& env);

    // variable-size structure support
    void bind_const_field(FramePtr& env, TypePtr struct_t, const std::string& name,
                          const Value& v);
    long field_offset_dyn(TypePtr struct_t, int field_index, const StoragePtr& st,
                          long base, FramePtr& env);
    void read_into_place(FileHandle& h, const ExprPtr& target, FramePtr& env,
                         bool by_name, const std::string& label);
    void render_item(std::string& out, const Value& v, TypePtr type, const Fmt& fmt,
                     FramePtr& env, const FilePtr& dest,
                     const std::shared_ptr<FunctionMember>& override_member);

    Value eval_call(const Expr& e, FramePtr& env);
    Value eval_binary(const Expr& e, FramePtr& env);
    Value eval_looping(const Expr& e, FramePtr& env);
    Value eval_index(const Expr& e, FramePtr& env, bool want_place, Place* out);
    Sel eval_selector(const Expr& e, FramePtr& env);
    Value apply_conversions(const Expr& e, Value v, FramePtr& env);
    Value alloc_for_new(TypePtr t, const std::vector<ExprPtr>& size_args, FramePtr& env);
    long dyn_struct_total(TypePtr struct_t, const std::vector<Value>& sizes,
                          FramePtr& env, StoragePtr fill = nullptr);
    Value read_text_value(FileHandle& h, TypePtr type, FramePtr& env);
    Value invoke_user(const std::shared_ptr<FunctionMember>& member,
                      std::vector<Value> positional,
                      const std::vector<std::pair<std::string, Value>>& named,
                      FramePtr& decl_env, SourcePos pos);
    void bind_param(FramePtr& fenv, Symbol* sym, const Param& p, Value v);
    Value alloc_result(TypePtr rt, FramePtr& fenv);
    void exec_assign(const Stmt& s, FramePtr& env);
    void exec_einstein(const Stmt& s, FramePtr& env);
    void exec_loop(const Stmt& s, FramePtr& env);
    void exec_write(const Stmt& s, FramePtr& env);
    void exec_read(const Stmt& s, FramePtr& env);
    bool do_read(const ReadSpec& spec, FramePtr& env, bool expression_form);
    void exec_decl(const Stmt& s, FramePtr& env);
    void run_clause(const ForClause& clause, FramePtr& env,
                    const std::function<bool()>& body);  // returns false to stop
    std::pair<long, long> infer_bounds(const std::vector<BoundSite>& sites,
                                       FramePtr& env);
    friend struct ClauseRunner;
};

}  // namespace cpl

#endif
