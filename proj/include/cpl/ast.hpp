#ifndef CPL_AST_HPP
#define CPL_AST_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cpl/diag.hpp"
#include "cpl/token.hpp"
#include "cpl/types.hpp"

namespace cpl {

struct Expr;
struct Stmt;
struct Symbol;
struct OverloadSet;
struct FunctionMember;
using ExprPtr = std::shared_ptr<Expr>;
using StmtPtr = std::shared_ptr<Stmt>;

enum class ExprKind {
    IntLit,
    RealLit,
    BoolLit,
    StringLit,
    NullLit,
    Ident,        // resolved symbol
    EnumMember,
    SubrVal,      // subroutine/function name used as a value
    Binary,
    Unary,
    Conditional,  // IF c THEN a ELSE b
    IsTest,       // pointer IS type
    Call,
    Index,
    FieldSelect,
    Deref,        // postfix ^
    AddressOf,    // prefix ^
    Convert,      // implicit conversion chain (invisible when printed)
    Concat,       // string juxtaposition
    LoopingOp,    // SUM/PRODUCT/MAX/MIN/ARGMAX/ARGMIN
    FromFile,     // type FROM file
    ReadExpr,     // READ as a BOOLEAN expression
    Tilde,        // ~ placeholder
    NewExpr,      // NEW type
    OpenFn,
    CreateFn,
    PositionFn,
    ArrayLit,     // (2,5,11) constant list (FOR ... IN)
    RangeSel,     // l..h selector
    StarSel,      // *, star runs, *n permute
    LoHiBound,    // bare LO/HI bound to an axis or a FOR index
};

enum class BinOp {
    Add, Sub, Mul, Div, IDiv, Mod, CDiv, CMod, Pow,
    Shl, Shr, BitAnd, BitOr, BitXor,
    Eq, Ne, Lt, Le, Gt, Ge,
    And, Or,
    Dot,  // scalar product |
};

enum class UnOp { Neg, Not, BitNot };

// How a binary node evaluates (fixed during checking).
enum class BinSem {
    Int,
    IntDivReal,  // '/' on INTEGERs yields REAL
    Real,
    Single,
    Bool,
    Char,
    Enum,
    Pointer,     // address identity
    View,        // array elementwise comparison
    ArrayLin,    // elementwise + or -
    ArrayScale,  // array * / scalar (scalar side flagged)
    ArrayDot,    // |
    StringCmp,
};

enum class LoopOpKind { Sum, Product, Max, Min, ArgMax, ArgMin };

struct ForClause;

// Bound-inference site: the k-th axis of the array appearing in an Index node.
struct BoundSite {
    const Expr* index_node = nullptr;
    int axis = 0;  // 0-based
};

struct CallArg {
    std::string sep;   // separator preceding this argument ("(" for the first)
    std::string name;  // nonempty for named optional arguments
    ExprPtr value;
};

struct ReadTarget {
    ExprPtr place;          // variable target (null for literal matches)
    std::string literal;    // verbatim-match literal
    bool is_literal = false;
    char conj = 0;          // 0 first, ',' / 'A' (AND) / 'O' (OR) before this one
};

struct ReadSpec {
    bool by_name = false;
    bool binary = false;
    ExprPtr from;  // null = stdin
    std::vector<ReadTarget> targets;
};

struct Expr {
    ExprKind kind;
    SourcePos pos;
    TypePtr type;        // checked value type
    bool place = false;  // expression denotes an address

    // literals
    long int_val = 0;
    double real_val = 0;
    bool bool_val = false;
    std::string str_val;
    char str_delim = '"';
    bool null_typed = false;  // NULL type (prints the type)

    // identifiers / members
    Symbol* sym = nullptr;
    std::shared_ptr<OverloadSet> set;
    std::shared_ptr<FunctionMember> member;

    // operators
    BinOp bin_op{};
    UnOp un_op{};
    BinSem sem{};
    bool scalar_on_left = false;  // ArrayScale orientation
    ExprPtr a, b, c;

    // IS / FROM / NEW / NULL
    TypePtr ref_type;

    // conversions
    std::vector<ConversionStep> conv;

    // calls
    std::vector<CallArg> args;
    bool dynamic_call = false;
    bool paren_call = true;  // printed with brackets

    // indexing / concat / array literals
    std::vector<ExprPtr> items;

    // field select
    int field_index = -1;
    std::string field_name;

    // star selectors: count of '*'s; permute ordinal if permutation
    int star_count = 1;
    int permute_n = 0;

    // LoHiBound
    bool is_hi = false;
    std::vector<BoundSite> sites;     // resolved inference sites
    Symbol* bound_index = nullptr;    // FOR-clause index this refers to

    // looping operator
    LoopOpKind loop_op{};
    std::shared_ptr<ForClause> clause;

    // READ expression form
    std::shared_ptr<ReadSpec> read_spec;

    // keeps frame-identity statements alive (looping operators)
    StmtPtr scope_holder;

    // einstein marker: Ident with dollar=true prints as $name
    bool dollar = false;
};

enum class ForItemKind { Range, All, Times, In };

struct ForItem {
    ForItemKind kind;
    // Range
    Symbol* index = nullptr;
    bool implicit_index = true;
    ExprPtr lb, ub, step;
    bool down = false;
    // All
    std::vector<Symbol*> all_indices;
    std::vector<std::vector<BoundSite>> all_sites;  // per index
    // Times
    ExprPtr count;
    // In
    Symbol* elem = nullptr;
    ExprPtr array;
};

struct ForClause {
    std::vector<ForItem> items;   // AND-chained, leftmost outermost
    std::vector<ExprPtr> excepts; // boolean or index-valued exceptions
};

enum class StmtKind {
    Block,
    Decl,
    TypeDecl,
    DeferredDecl,  // name == tokens (also #define)
    Assign,
    EinsteinAssign,
    CallStmt,
    If,
    Loop,
    Case,
    Exit,
    Stop,
    ErrorStmt,
    Trap,
    Write,
    Read,
    Ask,
    NewStmt,
    FreeStmt,
    OpenStmt,
    CreateStmt,
    FlushStmt,
    PositionStmt,
    Use,
    ModuleStmt,
    SubrDecl,
    DefaultFormat,
};

struct DeclItem {
    Symbol* sym = nullptr;
    ExprPtr init;
    std::vector<ExprPtr> size_args;  // variable-size structure allocation
};

struct WriteItem {
    ExprPtr value;
    bool comma_before = false;  // produced by a ',' (prints a tab)
    int width = -1, precision = -1;
    std::string label;  // BY NAME label
    std::shared_ptr<FunctionMember> override_member;  // user SUBROUTINE WRITE
};

struct AskItem {
    std::string prompt;  // empty: use "name?"
    bool has_prompt = false;
    Symbol* declared = nullptr;  // ASK type x declares x
    ExprPtr place;
};

struct CaseArm {
    std::vector<long> tags;
    std::vector<ExprPtr> tag_exprs;  // for printing
    StmtPtr body;
};

// Einstein lowering plan, fixed during checking.
struct EinTerm {
    ExprPtr expr;     // term rooted here
    bool negated = false;
    std::vector<Symbol*> contractions;
};

struct EinPlan {
    std::vector<Symbol*> free_indices;
    std::vector<std::vector<BoundSite>> free_sites;        // per free index
    std::vector<Symbol*> contraction_syms;
    std::vector<std::vector<BoundSite>> contraction_sites; // per contraction sym
    std::vector<EinTerm> terms;
};

struct Scope;

struct Stmt {
    StmtKind kind;
    SourcePos pos;

    // Block / bodies
    std::vector<StmtPtr> body;
    std::shared_ptr<Scope> scope;  // for scope-owning statements

    // Decl
    TypePtr decl_type;
    bool decl_constant = false;
    std::vector<DeclItem> decls;
    bool decl_follows = false;

    // TypeDecl / DeferredDecl
    Symbol* sym = nullptr;
    std::vector<Token> alias_tokens;
    bool is_macro_define = false;

    // Assign
    ExprPtr lhs, rhs;
    TypePtr assign_level;  // REAL a=b typed-assignment level (optional)
    bool uses_tilde = false;

    // EinsteinAssign
    std::shared_ptr<EinPlan> ein;

    // CallStmt / expressions
    ExprPtr expr;

    // If
    ExprPtr cond;
    StmtPtr then_branch, else_branch;

    // Loop
    std::string loop_name;
    bool head_test = true;
    bool test_until = false;  // false: WHILE (or FOR)
    ExprPtr test;             // WHILE/UNTIL condition
    std::shared_ptr<ForClause> clause;
    bool inline_loop = false;
    bool infinite = false;

    // Case
    std::vector<CaseArm> arms;
    StmtPtr default_arm;

    // Exit / Module names
    std::string name;

    // Error / Write
    std::vector<WriteItem> write_items;
    ExprPtr dest;  // WRITE TO destination
    bool write_binary = false;
    bool by_name = false;
    bool suppress_newline = false;

    // Trap
    std::string trap_prefix;
    bool trap_all = true;
    StmtPtr handler;

    // Read
    std::shared_ptr<ReadSpec> read;

    // Ask
    std::vector<AskItem> asks;
    TypePtr ask_type;

    // New / Free / Open / Create / Flush / Position
    std::vector<ExprPtr> ptrs;
    TypePtr new_type;
    std::vector<ExprPtr> size_args;
    ExprPtr file_arg, pos_arg;

    // Use
    std::string use_path;

    // SubrDecl
    std::shared_ptr<FunctionMember> fn_member;
    std::shared_ptr<OverloadSet> fn_set;
    bool fn_follows = false;

    // DefaultFormat
    int width = -1, precision = -1;
};

ExprPtr make_expr(ExprKind k, SourcePos pos);
StmtPtr make_stmt(StmtKind k, SourcePos pos);

// Pretty printer: emits parseable CPL that reproduces the same structure.
std::string print_expr(const Expr& e);
std::string print_stmt(const Stmt& s, int indent = 0);
std::string print_program(const std::vector<StmtPtr>& stmts);

// Structural equality modulo source positions (round-trip checks).
bool expr_equal(const Expr& a, const Expr& b);
bool stmt_equal(const Stmt& a, const Stmt& b);

}  // namespace cpl

#endif
