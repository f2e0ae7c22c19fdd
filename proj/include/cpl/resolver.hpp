#ifndef CPL_RESOLVER_HPP
#define CPL_RESOLVER_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cpl/ast.hpp"
#include "cpl/types.hpp"

namespace cpl {

struct Value;
struct Machine;
struct Frame;

enum class SymbolKind {
    Constant,
    Variable,
    Type,
    Overloads,
    Alias,       // deferred assignment / #define / INCLUDE parameter
    EnumMember,
};

struct Symbol {
    std::string name;
    SymbolKind kind{};
    TypePtr type;            // value type; for Type symbols: the named type
    SourcePos pos;
    const Scope* owner = nullptr;

    bool constant = false;
    bool deferred = false;   // CONSTANT awaiting its single assignment
    bool assigned = false;
    bool synthetic = false;  // loop indices, RESULT, hidden einstein vars

    // folded compile-time constant (monostate when not folded)
    std::shared_ptr<Value> folded;

    // Alias
    std::vector<Token> alias_tokens;
    bool expanding = false;  // recursion guard

    // EnumMember
    long ordinal = 0;

    // Overloads
    std::shared_ptr<OverloadSet> set;

    // uncommitted pointer slot registered under this type name
    std::shared_ptr<UncommittedSlot> uncommitted;
};

// Native builtin implementation; receives evaluated positional arguments.
using NativeFn = std::function<Value(Machine&, const SourcePos&, std::vector<Value>&)>;

// Custom argument matcher for builtins that accept shapes the signature
// grammar cannot express (whole arrays, variadic scalars). Returns a cost or
// nullopt.
struct ActualInfo {
    std::string sep;
    TypePtr type;
    bool place = false;
};
using NativeMatcher =
    std::function<std::optional<int>(const std::vector<ActualInfo>&)>;
using NativeResultFn = std::function<TypePtr(const std::vector<ActualInfo>&)>;

struct FunctionMember {
    std::shared_ptr<ParamSig> sig;
    const Stmt* decl = nullptr;   // SubrDecl statement (user members)
    bool prototype = false;       // FOLLOWS, body pending
    bool inline_hint = false;
    bool is_function = false;
    NativeFn native;
    NativeMatcher matcher;
    NativeResultFn result_fn;  // argument-dependent result types
    std::string doc;
};

struct OverloadSet {
    std::string name;
    std::vector<std::shared_ptr<FunctionMember>> members;
};

enum class ScopeKind { Program, Module, Subroutine, Loop, If, Case, With, Trap, Unit };

struct WithSubject {
    ExprPtr subject;
};

struct Scope {
    Scope* parent = nullptr;
    ScopeKind block_kind = ScopeKind::Program;
    const Stmt* block = nullptr;  // owning statement, frame identity at run time
    std::map<std::string, Symbol*> table;
    std::vector<std::unique_ptr<Symbol>> owned;
    std::vector<WithSubject> with_subjects;  // WITH scopes
    std::vector<Symbol*> pending_deferred;   // FOLLOWS constants to verify
    std::vector<std::pair<std::shared_ptr<OverloadSet>, std::shared_ptr<FunctionMember>>>
        pending_prototypes;

    Symbol* find_local(const std::string& name) const;
    Symbol* find(const std::string& name) const;  // walks up, ignores WITH
};

// Declares `name`; functions merge into an existing overload set visible in
// this scope. Throws CompileError on duplicates or keyword collisions.
Symbol* declare(Scope& scope, const std::string& name, SymbolKind kind, TypePtr type,
                SourcePos pos);

// Prelude-internal: no keyword or duplicate checks.
Symbol* declare_raw(Scope& scope, const std::string& name, SymbolKind kind,
                    TypePtr type);

// Adds a member to the overload set `name`, creating the set in `scope` when
// absent (an outer set visible from `scope` is extended instead). Verifies
// the set stays distinguishable. Returns the set.
std::shared_ptr<OverloadSet> declare_function(Scope& scope, const std::string& name,
                                              std::shared_ptr<FunctionMember> member,
                                              SourcePos pos);

struct OverloadResult {
    std::shared_ptr<FunctionMember> member;
    // per positional argument: conversion chain
    std::vector<std::vector<ConversionStep>> conversions;
    int cost = 0;
    bool dynamic_defer = false;  // a DYNAMIC POINTER argument defers dispatch
};

// Resolves a call against a set: separators must match verbatim, positional
// types must reach the formals through implicit conversion, lowest total
// conversion count wins. `optional_names` are the named arguments after the
// positionals. Errors are reported through `error`.
std::optional<OverloadResult> resolve_overload(
    const OverloadSet& set, const std::vector<ActualInfo>& positionals,
    const std::vector<std::string>& optional_names, std::string* error);

}  // namespace cpl

#endif
