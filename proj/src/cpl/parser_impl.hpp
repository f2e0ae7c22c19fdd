#ifndef CPL_PARSER_IMPL_HPP
#define CPL_PARSER_IMPL_HPP

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cpl/ast.hpp"
#include "cpl/parser.hpp"
#include "cpl/resolver.hpp"
#include "cpl/value.hpp"

namespace cpl {

// Token cursor with splice layers (deferred aliases, INCLUDE, #define).
struct TokenCursor {
    struct Layer {
        std::vector<Token> toks;
        size_t pos = 0;
    };
    std::vector<Layer> layers;

    const Token& peek(int ahead = 0) const;
    const Token& cur() const { return peek(0); }
    Token take();
    void push_layer(std::vector<Token> toks);
    bool in_splice() const { return layers.size() > 1; }
};

// binary operator precedence levels (higher binds tighter)
enum : int {
    PREC_OR = 1,
    PREC_AND = 2,
    PREC_CMP = 3,
    PREC_DOT = 4,     // scalar product '|'
    PREC_CONCAT = 5,  // string juxtaposition
    PREC_BITOR = 6,
    PREC_BITXOR = 7,
    PREC_BITAND = 8,
    PREC_SHIFT = 9,
    PREC_ADD = 10,
    PREC_MUL = 11,
    PREC_POW = 12,
};

class Parser {
public:
    Parser(ModuleSupport* modules, bool interactive)
        : modules_(modules), interactive_(interactive) {}

    CompileResult run(std::vector<Token> tokens, Scope& scope);

    // -------- cursor helpers --------
    TokenCursor cursor;
    const Token& cur() const { return cursor.cur(); }
    const Token& peek(int n = 0) const { return cursor.peek(n); }
    Token take() { return cursor.take(); }
    bool at(TokKind k) const { return cur().kind == k; }
    bool at_kw(const char* kw) const { return cur().is_kw(kw); }
    bool at_op(const char* op) const { return cur().is_op(op); }
    bool eat_kw(const char* kw);
    bool eat_op(const char* op);
    void expect_kw(const char* kw);
    void expect_op(const char* op);
    void skip_newlines();           // unconditional (continuation points)
    void skip_separators();         // newlines and semicolons
    void end_statement();           // expect newline/semicolon/EOF
    bool at_closer() const;         // keyword closing the enclosing block
    bool at_stmt_end() const;
    [[noreturn]] void fail(const std::string& msg, SourcePos pos = {});
    SourcePos here() const { return cur().pos; }

    // -------- scopes --------
    Scope* scope_ = nullptr;
    std::vector<std::shared_ptr<Scope>> scope_pool_;
    Scope* push_scope(ScopeKind kind, const Stmt* block);
    Scope* make_detached_scope(ScopeKind kind);
    void pop_scope(bool check_pending = true);
    Symbol* lookup_plain(const std::string& name) const;  // ignores WITH frames

    // -------- statements --------
    // Parses statements until one of the closers (not consumed); closers are
    // keyword spellings like "END", "REPEAT", "ELSE".
    std::vector<StmtPtr> parse_statement_list(const std::set<std::string>& closers,
                                              bool single_line = false);
    StmtPtr parse_statement();
    StmtPtr parse_block_until(const std::set<std::string>& closers, ScopeKind kind,
                              SourcePos pos, bool single_line = false);
    StmtPtr parse_if(bool as_statement);
    StmtPtr parse_loop(bool inline_hint);
    StmtPtr parse_do();
    StmtPtr parse_case();
    StmtPtr parse_case_arm_body();
    bool at_case_tag() const;
    StmtPtr parse_with();
    StmtPtr parse_trap();
    StmtPtr parse_module();
    StmtPtr parse_write(bool binary);
    StmtPtr parse_read_stmt(bool binary);
    std::shared_ptr<ReadSpec> parse_read_spec(bool binary);
    StmtPtr parse_ask();
    StmtPtr parse_new();
    StmtPtr parse_free();
    StmtPtr parse_open_create(bool create);
    StmtPtr parse_flush();
    StmtPtr parse_position();
    StmtPtr parse_use();
    void parse_include(std::vector<StmtPtr>& out);
    StmtPtr parse_exit();
    StmtPtr parse_error_stmt();
    StmtPtr parse_defaultformat();
    StmtPtr parse_define_macro();
    StmtPtr parse_deferred_alias(const Token& name_tok);
    StmtPtr parse_subroutine(bool is_function, TypePtr result_prefix, bool inline_hint);
    StmtPtr parse_declaration(bool constant_kw, bool variable_kw);
    StmtPtr parse_declaration_with_type(TypePtr t, bool constant_kw, bool variable_kw);
    StmtPtr parse_type_alias();  // after TYPE keyword
    StmtPtr parse_identifier_statement();
    StmtPtr finish_assignment(ExprPtr lhs, TypePtr level);
    std::string parse_path_to_eol();

    // -------- for clauses --------
    std::shared_ptr<ForClause> parse_for_clause();
    // resolves ALL / bare-LO-HI bound sites against a parsed body
    void infer_clause_bounds(ForClause& clause, const std::vector<const Stmt*>& body,
                             const std::vector<const Expr*>& body_exprs);

    // argument-separator stop set active while parsing one call argument
    std::set<std::string> stop_seps_;
    int stop_depth_ = -1;

    // -------- types --------
    bool at_type_declarator();
    TypePtr parse_type_declarator(bool allow_star, bool* had_error = nullptr);
    std::vector<ArrayDim> parse_dims(bool allow_star);
    std::vector<PostfixMod> parse_postfix_mods(bool allow_star);
    std::shared_ptr<ParamSig> parse_param_list(Scope* fn_scope, bool is_type_only);

    // -------- expressions --------
    ExprPtr parse_expression(int min_prec = 0);
    ExprPtr parse_unary();
    ExprPtr parse_postfix_chain(ExprPtr base);
    ExprPtr parse_primary();
    ExprPtr parse_selector();
    ExprPtr parse_selector_expr(int min_prec = 0);
    ExprPtr parse_call_on_set(std::shared_ptr<OverloadSet> set, SourcePos pos,
                              bool bracketless_stmt, ExprPtr first_arg = nullptr);
    ExprPtr finish_indirect_call(ExprPtr callee);
    ExprPtr finish_field_or_method(ExprPtr base, const Token& name);
    ExprPtr rvalue_keep_place(ExprPtr e);
    ExprPtr parse_conditional_expr();
    ExprPtr parse_looping_op(LoopOpKind op);
    ExprPtr resolve_identifier(const Token& tok);
    ExprPtr finish_index(ExprPtr base);

    // -------- checking helpers --------
    ExprPtr rvalue(ExprPtr e);
    ExprPtr coerce(ExprPtr e, TypePtr to, const char* what);
    ExprPtr apply_steps(ExprPtr e, const std::vector<ConversionStep>& steps);
    ExprPtr check_binary(BinOp op, ExprPtr a, ExprPtr b, SourcePos pos);
    ExprPtr check_comparison(BinOp op, ExprPtr a, ExprPtr b, SourcePos pos);
    void check_assignable(const ExprPtr& lhs, SourcePos pos);
    std::optional<Value> fold(const ExprPtr& e) const;
    std::optional<long> fold_int(const ExprPtr& e) const;
    TypePtr value_type(const ExprPtr& e) const { return e->type; }
    bool is_array_type(TypePtr t) const;
    bool is_string_type_p(TypePtr t) const;
    TypePtr index_result_type(TypePtr array_type, size_t rank_consumed,
                              size_t ranges_produced);

    // Walks `e` collecting (index-node, axis) sites where `sym` is mentioned
    // inside selectors.
    void collect_bound_sites(const Expr* e, const Symbol* sym,
                             std::vector<BoundSite>& out) const;
    void collect_in_stmt(const Stmt* s, const Symbol* sym,
                         std::vector<BoundSite>& out) const;

    // -------- einstein --------
    struct EinsteinCtx {
        std::map<std::string, Symbol*> indices;
        std::shared_ptr<Scope> hidden_scope;
        bool active = false;
    };
    EinsteinCtx ein_;
    StmtPtr build_einstein_assign(ExprPtr lhs, ExprPtr rhs, SourcePos pos);

    // -------- selector LO/HI context --------
    struct SelCtx {
        const Expr* array_node;
        int axis;
    };
    std::vector<SelCtx> sel_ctx_;
    Symbol* pending_range_index_ = nullptr;  // FOR k=LO.. TO ..
    std::vector<Expr*> pending_lohi_;        // markers awaiting body inference

    // -------- misc state --------
    ModuleSupport* modules_;
    bool interactive_ = false;
    std::vector<Diagnostic> diags_;
    int bracket_depth_ = 0;
    std::vector<std::string> fn_stack_;       // enclosing FUNCTION/SUBROUTINE names
    std::vector<std::string> exit_targets_;   // names EXIT may refer to
    std::map<std::string, std::shared_ptr<UncommittedSlot>> uncommitted_slots_;
    TypePtr tilde_type_;  // type of ~ inside the current assignment rhs

    ExprPtr write_value(ExprPtr e);  // deref WRITE items to non-pointer values
    Symbol* declare_value_symbol(const std::string& name, SymbolKind kind, TypePtr t,
                                 SourcePos pos, bool constant);
};

// evaluating selector expressions and plain expressions share these kinds
bool expr_mentions_symbol(const Expr* e, const Symbol* sym);

}  // namespace cpl

#endif
