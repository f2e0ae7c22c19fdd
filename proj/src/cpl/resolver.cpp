#include "cpl/resolver.hpp"

#include <algorithm>

#include "cpl/lexer.hpp"
#include "cpl/value.hpp"

namespace cpl {

Symbol* Scope::find_local(const std::string& name) const {
    auto it = table.find(name);
    return it == table.end() ? nullptr : it->second;
}

Symbol* Scope::find(const std::string& name) const {
    for (const Scope* s = this; s; s = s->parent)
        if (Symbol* sym = s->find_local(name)) return sym;
    return nullptr;
}

namespace {

[[noreturn]] void err(SourcePos pos, const std::string& msg) {
    throw CompileError({Diagnostic::Severity::Error, std::move(pos), msg});
}

}  // namespace

Symbol* declare_raw(Scope& scope, const std::string& name, SymbolKind kind,
                    TypePtr type) {
    auto sym = std::make_unique<Symbol>();
    sym->name = name;
    sym->kind = kind;
    sym->type = std::move(type);
    sym->owner = &scope;
    sym->synthetic = true;
    Symbol* raw = sym.get();
    scope.owned.push_back(std::move(sym));
    scope.table[name] = raw;
    return raw;
}

Symbol* declare(Scope& scope, const std::string& name, SymbolKind kind, TypePtr type,
                SourcePos pos) {
    if (is_keyword(name)) err(pos, "'" + name + "' is a keyword and cannot be declared");
    if (Symbol* prev = scope.find(name)) {
        // WRITE may be overridden by a user subroutine; handled by caller.
        err(pos, "'" + name + "' is already declared (at " + prev->pos.to_string() + ")");
    }
    auto sym = std::make_unique<Symbol>();
    sym->name = name;
    sym->kind = kind;
    sym->type = std::move(type);
    sym->pos = pos;
    sym->owner = &scope;
    Symbol* raw = sym.get();
    scope.owned.push_back(std::move(sym));
    scope.table[name] = raw;
    return raw;
}

namespace {

// Distinguishing key of a member: arity, separators and positional types;
// optional parameters cannot disambiguate.
bool same_positional_key(const ParamSig& a, const ParamSig& b) {
    size_t na = a.positional_count(), nb = b.positional_count();
    if (na != nb) return false;
    for (size_t i = 0; i < na; i++) {
        if (a.params[i].sep != b.params[i].sep) return false;
        if (!type_identity(a.params[i].type, b.params[i].type)) return false;
    }
    return true;
}

}  // namespace

std::shared_ptr<OverloadSet> declare_function(Scope& scope, const std::string& name,
                                              std::shared_ptr<FunctionMember> member,
                                              SourcePos pos) {
    // extend a visible set; otherwise create one here
    Symbol* sym = scope.find(name);
    std::shared_ptr<OverloadSet> set;
    if (sym) {
        if (sym->kind != SymbolKind::Overloads)
            err(pos, "'" + name + "' is already declared (at " + sym->pos.to_string() +
                         ") and is not a function");
        set = sym->set;
    } else {
        // a user SUBROUTINE WRITE overrides rendering and is the one
        // keyword-named declaration allowed
        Symbol* s = name == "WRITE"
                        ? declare_raw(scope, name, SymbolKind::Overloads, nullptr)
                        : declare(scope, name, SymbolKind::Overloads, nullptr, pos);
        set = std::make_shared<OverloadSet>();
        set->name = name;
        s->set = set;
    }
    for (auto& m : set->members) {
        if (!m->sig || !member->sig) continue;
        if (same_positional_key(*m->sig, *member->sig)) {
            bool full_opt_match =
                m->sig->params.size() == member->sig->params.size();
            if (m->prototype && !member->prototype && full_opt_match &&
                m->is_function == member->is_function) {
                // body satisfying a FOLLOWS prototype
                m->decl = member->decl;
                m->prototype = false;
                m->inline_hint = member->inline_hint;
                return set;
            }
            err(pos, "overload of '" + name +
                         "' is indistinguishable from a previous declaration"
                         " (optional parameters cannot disambiguate)");
        }
    }
    set->members.push_back(std::move(member));
    return set;
}

namespace {

bool is_unrestricted_dynamic(TypePtr t) {
    TypePtr u = unwrap_named(t);
    return u && u->kind == TypeKind::DynamicPointer && !u->target;
}

bool is_uncommitted_generic(TypePtr t) {
    TypePtr u = unwrap_named(t);
    return u && u->kind == TypeKind::PointerTo && !pointer_target(*u) && u->uncommitted;
}

bool is_star_array(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u || u->kind != TypeKind::Array) return false;
    for (auto& d : u->dims)
        if (d.star) return true;
    return false;
}

// Cost of binding one actual to one formal; nullopt = no match.
std::optional<std::pair<int, std::vector<ConversionStep>>> bind_arg(
    const ActualInfo& actual, const Param& formal) {
    TypePtr ftype = formal.type;
    if (is_uncommitted_generic(ftype)) {
        // generic pointer formal: any pointer actual except POINTER TO ARRAY(*)
        TypePtr at = unwrap_named(actual.type);
        bool ptr_value = at && at->kind == TypeKind::PointerTo;
        if (ptr_value) {
            TypePtr tgt = pointer_target(*at);
            if (tgt && is_star_array(tgt)) return std::nullopt;
            return std::make_pair(1, std::vector<ConversionStep>{
                                         {ConvKind::GenericPointer, ftype, -1}});
        }
        if (actual.place) {
            // the variable's address is a pointer
            return std::make_pair(1, std::vector<ConversionStep>{
                                         {ConvKind::GenericPointer, ftype, -1}});
        }
        return std::nullopt;
    }
    if (auto path = conversion_path(actual.type, ftype, actual.place))
        return std::make_pair((int)path->size(), std::move(*path));
    // scalar actual to an ARRAY(*) formal becomes a (0..0) view
    TypePtr fu = unwrap_named(ftype);
    if (fu && fu->kind == TypeKind::Array && fu->dims.size() == 1 && fu->dims[0].star) {
        if (auto path = conversion_path(actual.type, fu->elem, actual.place)) {
            auto steps = std::move(*path);
            steps.push_back({ConvKind::ScalarToUnitArray, ftype, -1});
            return std::make_pair((int)steps.size(), std::move(steps));
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<OverloadResult> resolve_overload(
    const OverloadSet& set, const std::vector<ActualInfo>& positionals,
    const std::vector<std::string>& optional_names, std::string* error) {
    bool any_dynamic = std::any_of(positionals.begin(), positionals.end(),
                                   [](const ActualInfo& a) {
                                       return is_unrestricted_dynamic(a.type);
                                   });

    struct Candidate {
        std::shared_ptr<FunctionMember> member;
        OverloadResult result;
    };
    std::vector<Candidate> viable;

    for (auto& m : set.members) {
        if (m->matcher) {
            if (auto cost = m->matcher(positionals)) {
                OverloadResult r;
                r.member = m;
                r.cost = *cost;
                r.conversions.resize(positionals.size());
                viable.push_back({m, std::move(r)});
            }
            continue;
        }
        if (!m->sig) continue;
        const ParamSig& sig = *m->sig;
        if (sig.positional_count() != positionals.size()) continue;

        bool seps_ok = true;
        for (size_t i = 0; i < positionals.size(); i++) {
            const std::string& want = i == 0 ? "(" : sig.params[i].sep;
            if (positionals[i].sep != want) {
                seps_ok = false;
                break;
            }
        }
        if (!seps_ok) continue;

        // named optionals must exist
        bool opts_ok = true;
        for (auto& name : optional_names) {
            bool found = false;
            for (auto& p : sig.params)
                if (p.optional && p.name == name) found = true;
            if (!found) {
                opts_ok = false;
                break;
            }
        }
        if (!opts_ok) continue;

        OverloadResult r;
        r.member = m;
        bool ok = true;
        for (size_t i = 0; i < positionals.size(); i++) {
            if (is_unrestricted_dynamic(positionals[i].type)) {
                // defer the type decision to run time
                r.conversions.push_back({});
                continue;
            }
            auto bound = bind_arg(positionals[i], sig.params[i]);
            if (!bound) {
                ok = false;
                break;
            }
            r.cost += bound->first;
            r.conversions.push_back(std::move(bound->second));
        }
        if (ok) viable.push_back({m, std::move(r)});
    }

    if (viable.empty()) {
        if (error)
            *error = "no matching overload of '" + set.name + "' for this call";
        return std::nullopt;
    }
    if (any_dynamic) {
        OverloadResult r;
        r.dynamic_defer = true;
        return r;
    }
    std::sort(viable.begin(), viable.end(),
              [](const Candidate& a, const Candidate& b) {
                  return a.result.cost < b.result.cost;
              });
    if (viable.size() > 1 && viable[0].result.cost == viable[1].result.cost) {
        if (error)
            *error = "ambiguous call to '" + set.name + "': " +
                     std::to_string(viable.size()) +
                     " overloads match at equal conversion cost";
        return std::nullopt;
    }
    return viable[0].result;
}

}  // namespace cpl
