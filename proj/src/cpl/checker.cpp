#include <algorithm>
#include <cmath>

#include "cpl/lexer.hpp"
#include "parser_impl.hpp"

namespace cpl {

// ---------------- checking helpers ----------------

bool Parser::is_array_type(TypePtr t) const {
    if (!t) return false;
    TypePtr u = unwrap_named(t);
    return u && u->kind == TypeKind::Array;
}

bool Parser::is_string_type_p(TypePtr t) const {
    if (!t) return false;
    TypePtr u = unwrap_named(t);
    return u && u->kind == TypeKind::Array && u->elem &&
           unwrap_named(u->elem)->kind == TypeKind::Char;
}

ExprPtr Parser::apply_steps(ExprPtr e, const std::vector<ConversionStep>& steps) {
    if (steps.empty()) return e;
    auto c = make_expr(ExprKind::Convert, e->pos);
    c->a = std::move(e);
    c->conv = steps;
    c->type = steps.back().result;
    c->place = false;
    return c;
}

ExprPtr Parser::rvalue(ExprPtr e) {
    if (!e->place) return e;
    if (e->kind == ExprKind::Ident && e->sym && e->sym->deferred && !e->sym->assigned)
        fail("CONSTANT '" + e->sym->name + "' is used before it is assigned", e->pos);
    return apply_steps(std::move(e), {{ConvKind::Deref, e ? e->type : nullptr, -1}});
}

ExprPtr Parser::coerce(ExprPtr e, TypePtr to, const char* what) {
    if (!e->type) {
        // contextually-typed literals
        if (e->kind == ExprKind::NullLit) {
            TypePtr u = to ? unwrap_named(to) : nullptr;
            if (u && (u->kind == TypeKind::PointerTo ||
                      u->kind == TypeKind::DynamicPointer)) {
                e->type = to;
                return e;
            }
        }
        if (e->kind == ExprKind::SubrVal && e->set) {
            TypePtr u = to ? unwrap_named(to) : nullptr;
            if (u && (u->kind == TypeKind::SubroutineType ||
                      u->kind == TypeKind::FunctionType)) {
                for (auto& m : e->set->members) {
                    if (!m->sig) continue;
                    auto mt = m->is_function ? make_function_type(m->sig)
                                             : make_subroutine_type(m->sig);
                    if (type_identity(mt, to)) {
                        e->member = m;
                        e->type = to;
                        return e;
                    }
                }
            }
            fail("no overload of '" + e->set->name + "' matches the expected type " +
                     type_to_string(to),
                 e->pos);
        }
        fail(std::string(what) + ": expression has no value", e->pos);
    }
    if (!e->place && (type_identity(e->type, to) || star_accepts(to, e->type))) return e;
    // DYNAMIC POINTER targets accept pointers to anything except ARRAY(*)
    // and STORED; restricted ones require convertibility to the bound type
    TypePtr tu = to ? unwrap_named(to) : nullptr;
    if (tu && tu->kind == TypeKind::DynamicPointer) {
        ExprPtr src = e;
        TypePtr su = src->type ? unwrap_named(src->type) : nullptr;
        if (src->place && su && su->kind == TypeKind::PointerTo)
            src = rvalue(std::move(src));  // the pointer variable's value
        su = src->type ? unwrap_named(src->type) : nullptr;
        TypePtr pointee;
        if (src->place) {
            pointee = src->type;  // the variable's own address
        } else if (su && su->kind == TypeKind::PointerTo) {
            pointee = pointer_target(*su);
        } else if (su && su->kind == TypeKind::DynamicPointer) {
            return src;  // dynamic to dynamic
        }
        if (pointee) {
            TypePtr pu = unwrap_named(pointee);
            bool star = pu && pu->kind == TypeKind::Array &&
                        std::any_of(pu->dims.begin(), pu->dims.end(),
                                    [](const ArrayDim& d) { return d.star; });
            if (pu && (star || pu->kind == TypeKind::Stored))
                fail("POINTER TO ARRAY(*) and STORED cannot be assigned to a "
                     "DYNAMIC POINTER",
                     e->pos);
            if (tu->target && !type_identity(pointee, tu->target) &&
                !conversion_path(pointee, tu->target))
                fail("only types convertible to " + type_to_string(tu->target) +
                         " may be assigned to this DYNAMIC POINTER",
                     e->pos);
            return src;  // the tagged reference flows through unchanged
        }
    }
    auto path = conversion_path(e->type, to, e->place);
    if (!path)
        fail(std::string(what) + ": cannot convert " + type_to_string(e->type) +
                 " to " + type_to_string(to),
             e->pos);
    return apply_steps(std::move(e), *path);
}

void Parser::check_assignable(const ExprPtr& lhs, SourcePos pos) {
    const Expr* e = lhs.get();
    while (true) {
        switch (e->kind) {
            case ExprKind::Convert:
            case ExprKind::Index:
            case ExprKind::FieldSelect:
                e = e->a.get();
                continue;
            case ExprKind::Deref:
                return;  // heap/pointee targets are writable
            case ExprKind::Ident: {
                Symbol* sym = e->sym;
                if (!sym) return;
                if (sym->constant) {
                    if (sym->deferred && !sym->assigned) {
                        sym->assigned = true;
                        return;
                    }
                    if (sym->deferred && sym->assigned)
                        fail("CONSTANT '" + sym->name + "' may only be assigned once",
                             pos);
                    fail("cannot assign to CONSTANT '" + sym->name + "'", pos);
                }
                return;
            }
            default:
                if (!lhs->place && is_array_type(lhs->type)) return;  // view targets
                fail("this expression cannot be assigned to", pos);
        }
    }
}

// ---------------- constant folding ----------------

std::optional<Value> Parser::fold(const ExprPtr& e) const {
    if (!e) return std::nullopt;
    switch (e->kind) {
        case ExprKind::IntLit: return Value{(int32_t)e->int_val};
        case ExprKind::RealLit: return Value{e->real_val};
        case ExprKind::BoolLit: return Value{e->bool_val};
        case ExprKind::StringLit: return make_string_value(e->str_val);
        case ExprKind::NullLit: return Value{MemRef{nullptr, 0, e->ref_type}};
        case ExprKind::Ident:
        case ExprKind::EnumMember:
            if (e->sym && e->sym->folded) return *e->sym->folded;
            return std::nullopt;
        case ExprKind::Unary: {
            auto v = fold(e->a);
            if (!v) return std::nullopt;
            if (e->un_op == UnOp::Neg) {
                if (v->is<int32_t>()) return Value{(int32_t)-v->as<int32_t>()};
                if (v->is<double>()) return Value{-v->as<double>()};
            } else if (e->un_op == UnOp::Not) {
                if (v->is<bool>()) return Value{!v->as<bool>()};
            } else if (e->un_op == UnOp::BitNot) {
                if (v->is<int32_t>()) return Value{(int32_t)~v->as<int32_t>()};
            }
            return std::nullopt;
        }
        case ExprKind::Binary: {
            auto va = fold(e->a), vb = fold(e->b);
            if (!va || !vb) return std::nullopt;
            if (va->is<int32_t>() && vb->is<int32_t>()) {
                long a = va->as<int32_t>(), b = vb->as<int32_t>();
                switch (e->bin_op) {
                    case BinOp::Add: return Value{(int32_t)(a + b)};
                    case BinOp::Sub: return Value{(int32_t)(a - b)};
                    case BinOp::Mul: return Value{(int32_t)(a * b)};
                    case BinOp::IDiv:
                        if (b == 0) return std::nullopt;
                        return Value{(int32_t)std::floor((double)a / b)};
                    case BinOp::Mod: {
                        if (b == 0) return std::nullopt;
                        long q = (long)std::floor((double)a / b);
                        return Value{(int32_t)(a - b * q)};
                    }
                    case BinOp::CDiv:
                        if (b == 0) return std::nullopt;
                        return Value{(int32_t)(a / b)};
                    case BinOp::CMod:
                        if (b == 0) return std::nullopt;
                        return Value{(int32_t)(a % b)};
                    case BinOp::BitAnd: return Value{(int32_t)(a & b)};
                    case BinOp::BitOr: return Value{(int32_t)(a | b)};
                    case BinOp::BitXor: return Value{(int32_t)(a ^ b)};
                    case BinOp::Shl: return Value{(int32_t)(a << (b & 31))};
                    case BinOp::Shr: return Value{(int32_t)(a >> (b & 31))};
                    default: return std::nullopt;
                }
            }
            auto num = [](const Value& v) -> std::optional<double> {
                if (v.is<int32_t>()) return (double)v.as<int32_t>();
                if (v.is<double>()) return v.as<double>();
                return std::nullopt;
            };
            auto da = num(*va), db = num(*vb);
            if (da && db) {
                switch (e->bin_op) {
                    case BinOp::Add: return Value{*da + *db};
                    case BinOp::Sub: return Value{*da - *db};
                    case BinOp::Mul: return Value{*da * *db};
                    case BinOp::Div:
                        if (*db == 0) return std::nullopt;
                        return Value{*da / *db};
                    case BinOp::Pow: return Value{std::pow(*da, *db)};
                    default: return std::nullopt;
                }
            }
            return std::nullopt;
        }
        case ExprKind::Convert: {
            auto v = fold(e->a);
            if (!v) return std::nullopt;
            for (auto& step : e->conv) {
                switch (step.kind) {
                    case ConvKind::IntToReal:
                        if (!v->is<int32_t>()) return std::nullopt;
                        v = Value{(double)v->as<int32_t>()};
                        break;
                    case ConvKind::SingleToReal:
                        if (!v->is<float>()) return std::nullopt;
                        v = Value{(double)v->as<float>()};
                        break;
                    case ConvKind::CharToInt:
                        if (!v->is<char>()) return std::nullopt;
                        v = Value{(int32_t)(unsigned char)v->as<char>()};
                        break;
                    case ConvKind::String1ToChar: {
                        if (!v->is<ViewData>()) return std::nullopt;
                        std::string s = string_of_view(v->as<ViewData>());
                        if (s.size() != 1) return std::nullopt;
                        v = Value{s[0]};
                        break;
                    }
                    default:
                        return std::nullopt;
                }
            }
            return v;
        }
        case ExprKind::Concat: {
            std::string out;
            for (auto& item : e->items) {
                auto v = fold(item);
                if (!v || !v->is<ViewData>()) return std::nullopt;
                out += string_of_view(v->as<ViewData>());
            }
            return make_string_value(out);
        }
        default:
            return std::nullopt;
    }
}

std::optional<long> Parser::fold_int(const ExprPtr& e) const {
    auto v = fold(e);
    if (!v) return std::nullopt;
    if (v->is<int32_t>()) return (long)v->as<int32_t>();
    if (v->is<char>()) return (long)v->as<char>();
    return std::nullopt;
}

// ---------------- binary expression checking ----------------

namespace {

TypeKind scalar_kind(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return TypeKind::Named;
    if (u->kind == TypeKind::PointerInto) return TypeKind::Integer;
    return u->kind;
}

}  // namespace

ExprPtr Parser::check_binary(BinOp op, ExprPtr a, ExprPtr b, SourcePos pos) {
    auto node = make_expr(ExprKind::Binary, pos);
    node->bin_op = op;

    switch (op) {
        case BinOp::Eq:
        case BinOp::Ne:
        case BinOp::Lt:
        case BinOp::Le:
        case BinOp::Gt:
        case BinOp::Ge:
            return check_comparison(op, std::move(a), std::move(b), pos);
        case BinOp::And:
        case BinOp::Or:
            node->a = coerce(rvalue(std::move(a)), ty_boolean(), "boolean operand");
            node->b = coerce(rvalue(std::move(b)), ty_boolean(), "boolean operand");
            node->sem = BinSem::Bool;
            node->type = ty_boolean();
            return node;
        default:
            break;
    }

    a = rvalue(std::move(a));
    b = rvalue(std::move(b));
    TypeKind ka = scalar_kind(a->type), kb = scalar_kind(b->type);

    // array linear-space operations
    bool arr_a = ka == TypeKind::Array && !is_string_type_p(a->type);
    bool arr_b = kb == TypeKind::Array && !is_string_type_p(b->type);
    if ((arr_a || arr_b) &&
        (op == BinOp::Add || op == BinOp::Sub || op == BinOp::Mul || op == BinOp::Div ||
         op == BinOp::Dot)) {
        if (op == BinOp::Add || op == BinOp::Sub || op == BinOp::Dot) {
            if (!arr_a || !arr_b)
                fail("both operands of an array operation must be ARRAYs", pos);
            node->a = a;
            node->b = b;
            node->sem = op == BinOp::Dot ? BinSem::ArrayDot : BinSem::ArrayLin;
            if (op == BinOp::Dot) {
                TypePtr ea = unwrap_named(a->type)->elem;
                TypePtr eb = unwrap_named(b->type)->elem;
                TypeKind ke = scalar_kind(ea);
                TypeKind ke2 = scalar_kind(eb);
                node->type = (ke == TypeKind::Real || ke2 == TypeKind::Real ||
                              ke == TypeKind::Single || ke2 == TypeKind::Single)
                                 ? ty_real()
                                 : ty_integer();
                node->bin_op = BinOp::Dot;
            } else {
                node->type = a->type;
            }
            return node;
        }
        // Mul/Div: array x scalar
        if (op == BinOp::Div && !arr_a)
            fail("an ARRAY may only be divided by a scalar", pos);
        ExprPtr arr = arr_a ? a : b;
        ExprPtr scalar = arr_a ? b : a;
        scalar = coerce(std::move(scalar), ty_real(), "array scale factor");
        node->a = arr;
        node->b = scalar;
        node->scalar_on_left = !arr_a;
        node->sem = BinSem::ArrayScale;
        node->type = arr->type;
        return node;
    }

    // bitwise and integer-only operators
    auto int_only = [&](BinSem sem) {
        node->a = coerce(std::move(a), ty_integer(), "INTEGER operand");
        node->b = coerce(std::move(b), ty_integer(), "INTEGER operand");
        node->sem = sem;
        node->type = ty_integer();
        return node;
    };
    switch (op) {
        case BinOp::IDiv:
        case BinOp::Mod:
        case BinOp::CDiv:
        case BinOp::CMod:
        case BinOp::Shl:
        case BinOp::Shr:
        case BinOp::BitAnd:
        case BinOp::BitXor:
            return int_only(BinSem::Int);
        case BinOp::BitOr:
            return int_only(BinSem::Int);
        case BinOp::Dot: {
            // '|' on INTEGERs is BITOR
            node->bin_op = BinOp::BitOr;
            return int_only(BinSem::Int);
        }
        default:
            break;
    }

    // numeric arithmetic: + - * / ^
    if (op == BinOp::Pow) {
        node->a = coerce(std::move(a), ty_real(), "exponentiation operand");
        node->b = coerce(std::move(b), ty_real(), "exponentiation operand");
        node->sem = BinSem::Real;
        node->type = ty_real();
        return node;
    }
    bool int_a = ka == TypeKind::Integer || ka == TypeKind::Char;
    bool int_b = kb == TypeKind::Integer || kb == TypeKind::Char;
    if (int_a && int_b) {
        node->a = coerce(std::move(a), ty_integer(), "INTEGER operand");
        node->b = coerce(std::move(b), ty_integer(), "INTEGER operand");
        if (op == BinOp::Div) {
            node->sem = BinSem::IntDivReal;
            node->type = ty_real();
        } else {
            node->sem = BinSem::Int;
            node->type = ty_integer();
        }
        return node;
    }
    if (ka == TypeKind::Single && kb == TypeKind::Single) {
        node->a = a;
        node->b = b;
        node->sem = BinSem::Single;
        node->type = ty_single();
        return node;
    }
    node->a = coerce(std::move(a), ty_real(), "numeric operand");
    node->b = coerce(std::move(b), ty_real(), "numeric operand");
    node->sem = BinSem::Real;
    node->type = ty_real();
    return node;
}

// comparison with Concealed Pointer Lookup: match at the earliest
// dereferencing level, two constant addresses never compared
ExprPtr Parser::check_comparison(BinOp op, ExprPtr a, ExprPtr b, SourcePos pos) {
    struct Level {
        TypePtr type;
        bool const_addr;
        int derefs;
    };
    auto levels_of = [&](const ExprPtr& e) {
        std::vector<Level> out;
        if (e->place) {
            out.push_back({make_pointer(e->type), true, 0});
            out.push_back({e->type, false, 1});
        } else {
            out.push_back({e->type, false, 0});
        }
        int guard = 0;
        while (guard++ < 4) {
            TypePtr u = unwrap_named(out.back().type);
            if (!u || u->kind != TypeKind::PointerTo) break;
            TypePtr tgt = pointer_target(*u);
            if (!tgt) break;
            out.push_back({tgt, false, out.back().derefs + 1});
        }
        return out;
    };

    auto deref_to = [&](ExprPtr e, const Level& lv) {
        int n = lv.derefs - (e->place ? 0 : 0);
        std::vector<ConversionStep> steps;
        TypePtr t = e->place ? make_pointer(e->type) : e->type;
        for (int i = 0; i < n; i++) {
            TypePtr u = unwrap_named(t);
            TypePtr tgt = pointer_target(*u);
            steps.push_back({ConvKind::Deref, tgt, -1});
            t = tgt;
        }
        return steps.empty() ? e : apply_steps(std::move(e), steps);
    };

    auto node = make_expr(ExprKind::Binary, pos);
    node->bin_op = op;
    node->type = ty_boolean();

    auto la = levels_of(a), lb = levels_of(b);
    const Level* best_a = nullptr;
    const Level* best_b = nullptr;
    int best_cost = 1 << 20;
    for (auto& x : la)
        for (auto& y : lb) {
            if (x.const_addr && y.const_addr) continue;
            if (!x.type || !y.type) continue;
            if (!type_identity(x.type, y.type)) continue;
            int cost = x.derefs + y.derefs;
            int skew = std::abs(x.derefs - y.derefs);
            if (cost * 8 + skew < best_cost) {
                best_cost = cost * 8 + skew;
                best_a = &x;
                best_b = &y;
            }
        }

    if (best_a) {
        ExprPtr ea = deref_to(a, *best_a);
        ExprPtr eb = deref_to(b, *best_b);
        TypePtr u = unwrap_named(best_a->type);
        if (u->kind == TypeKind::PointerTo || u->kind == TypeKind::DynamicPointer) {
            if (op != BinOp::Eq && op != BinOp::Ne)
                fail("pointers support only = and # comparisons", pos);
            node->sem = BinSem::Pointer;
        } else if (u->kind == TypeKind::Enum) {
            if (op != BinOp::Eq && op != BinOp::Ne)
                fail("ENUM supports only = and # comparisons", pos);
            node->sem = BinSem::Enum;
        } else if (u->kind == TypeKind::Boolean) {
            if (op != BinOp::Eq && op != BinOp::Ne)
                fail("BOOLEAN supports only = and # comparisons", pos);
            node->sem = BinSem::Bool;
        } else if (u->kind == TypeKind::Array) {
            if (op != BinOp::Eq && op != BinOp::Ne)
                fail("arrays support only = and # comparisons", pos);
            node->sem = is_string_type_p(best_a->type) ? BinSem::StringCmp : BinSem::View;
            ea = rvalue(std::move(ea));
            eb = rvalue(std::move(eb));
        } else if (u->kind == TypeKind::Structure) {
            if (op != BinOp::Eq && op != BinOp::Ne)
                fail("structures support only = and # comparisons", pos);
            node->sem = BinSem::View;
        } else if (u->kind == TypeKind::Char) {
            node->sem = BinSem::Char;
        } else if (u->kind == TypeKind::Integer || u->kind == TypeKind::PointerInto) {
            node->sem = BinSem::Int;
        } else if (u->kind == TypeKind::Real) {
            node->sem = BinSem::Real;
        } else if (u->kind == TypeKind::Single) {
            node->sem = BinSem::Single;
        } else {
            fail("cannot compare these operands", pos);
        }
        node->a = ea;
        node->b = eb;
        return node;
    }

    // no identical level: unify numerics / char / one-char strings
    ExprPtr ea = rvalue(std::move(a));
    ExprPtr eb = rvalue(std::move(b));
    // NULL literal against any pointer
    if (ea->kind == ExprKind::NullLit || eb->kind == ExprKind::NullLit) {
        ExprPtr& nul = ea->kind == ExprKind::NullLit ? ea : eb;
        ExprPtr& other = ea->kind == ExprKind::NullLit ? eb : ea;
        TypePtr u = other->type ? unwrap_named(other->type) : nullptr;
        if (u && (u->kind == TypeKind::PointerTo || u->kind == TypeKind::DynamicPointer)) {
            nul->type = other->type;
            node->sem = BinSem::Pointer;
            node->a = ea;
            node->b = eb;
            if (op != BinOp::Eq && op != BinOp::Ne)
                fail("pointers support only = and # comparisons", pos);
            return node;
        }
    }
    TypeKind ka = scalar_kind(ea->type), kb = scalar_kind(eb->type);
    auto to_char = [&](ExprPtr e) { return coerce(std::move(e), ty_char(), "comparison"); };
    if (ka == TypeKind::Char && kb == TypeKind::Array)
        eb = to_char(std::move(eb));
    else if (kb == TypeKind::Char && ka == TypeKind::Array)
        ea = to_char(std::move(ea));
    ka = scalar_kind(ea->type);
    kb = scalar_kind(eb->type);
    if (ka == TypeKind::Char && kb == TypeKind::Char) {
        node->sem = BinSem::Char;
    } else if ((ka == TypeKind::Integer || ka == TypeKind::Char) &&
               (kb == TypeKind::Integer || kb == TypeKind::Char)) {
        ea = coerce(std::move(ea), ty_integer(), "comparison");
        eb = coerce(std::move(eb), ty_integer(), "comparison");
        node->sem = BinSem::Int;
    } else if (ea->type && eb->type && ea->type->is_numeric() && eb->type->is_numeric()) {
        ea = coerce(std::move(ea), ty_real(), "comparison");
        eb = coerce(std::move(eb), ty_real(), "comparison");
        node->sem = BinSem::Real;
    } else {
        fail("cannot compare " + type_to_string(ea->type) + " with " +
                 type_to_string(eb->type),
             pos);
    }
    node->a = ea;
    node->b = eb;
    return node;
}

// ---------------- bound-site collection ----------------

bool expr_mentions_symbol(const Expr* e, const Symbol* sym) {
    if (!e) return false;
    if ((e->kind == ExprKind::Ident || e->kind == ExprKind::EnumMember) && e->sym == sym)
        return true;
    for (const ExprPtr& child : {e->a, e->b, e->c})
        if (child && expr_mentions_symbol(child.get(), sym)) return true;
    for (const ExprPtr& item : e->items)
        if (item && expr_mentions_symbol(item.get(), sym)) return true;
    for (const CallArg& arg : e->args)
        if (arg.value && expr_mentions_symbol(arg.value.get(), sym)) return true;
    return false;
}

void Parser::collect_bound_sites(const Expr* e, const Symbol* sym,
                                 std::vector<BoundSite>& out) const {
    if (!e) return;
    if (e->kind == ExprKind::Index) {
        int axis = 0;
        for (auto& sel : e->items) {
            if (sel->kind == ExprKind::StarSel) {
                axis += sel->permute_n > 0 ? 1 : sel->star_count;
                continue;
            }
            if (expr_mentions_symbol(sel.get(), sym)) out.push_back({e, axis});
            axis++;
        }
    }
    for (const ExprPtr& child : {e->a, e->b, e->c})
        if (child) collect_bound_sites(child.get(), sym, out);
    for (const ExprPtr& item : e->items)
        if (item) collect_bound_sites(item.get(), sym, out);
    for (const CallArg& arg : e->args)
        if (arg.value) collect_bound_sites(arg.value.get(), sym, out);
    if (e->read_spec)
        for (auto& t : e->read_spec->targets)
            if (t.place) collect_bound_sites(t.place.get(), sym, out);
}

void Parser::collect_in_stmt(const Stmt* s, const Symbol* sym,
                             std::vector<BoundSite>& out) const {
    if (!s) return;
    for (const ExprPtr& e :
         {s->lhs, s->rhs, s->expr, s->cond, s->test, s->dest, s->file_arg, s->pos_arg})
        if (e) collect_bound_sites(e.get(), sym, out);
    for (auto& item : s->write_items)
        if (item.value) collect_bound_sites(item.value.get(), sym, out);
    if (s->read)
        for (auto& t : s->read->targets)
            if (t.place) collect_bound_sites(t.place.get(), sym, out);
    for (auto& a : s->asks)
        if (a.place) collect_bound_sites(a.place.get(), sym, out);
    for (auto& p : s->ptrs)
        if (p) collect_bound_sites(p.get(), sym, out);
    for (auto& d : s->decls) {
        if (d.init) collect_bound_sites(d.init.get(), sym, out);
        for (auto& sa : d.size_args)
            if (sa) collect_bound_sites(sa.get(), sym, out);
    }
    if (s->clause) {
        for (auto& item : s->clause->items) {
            for (const ExprPtr& e : {item.lb, item.ub, item.step, item.count, item.array})
                if (e) collect_bound_sites(e.get(), sym, out);
        }
        for (auto& e : s->clause->excepts)
            if (e) collect_bound_sites(e.get(), sym, out);
    }
    for (auto& arm : s->arms)
        if (arm.body) collect_in_stmt(arm.body.get(), sym, out);
    for (const StmtPtr& child :
         {s->then_branch, s->else_branch, s->handler, s->default_arm})
        if (child) collect_in_stmt(child.get(), sym, out);
    for (auto& child : s->body) collect_in_stmt(child.get(), sym, out);
}

// ---------------- FOR clauses ----------------

std::shared_ptr<ForClause> Parser::parse_for_clause() {
    auto clause = std::make_shared<ForClause>();
    while (true) {
        skip_newlines();
        ForItem item{};
        if (eat_kw("ALL")) {
            item.kind = ForItemKind::All;
            while (true) {
                if (!at(TokKind::Identifier)) fail("expected an index name after ALL");
                Token name = take();
                Symbol* sym = declare(*scope_, name.text, SymbolKind::Constant,
                                      ty_integer(), name.pos);
                sym->constant = true;
                sym->synthetic = true;
                item.all_indices.push_back(sym);
                if (eat_op(",")) continue;
                break;
            }
        } else if (at(TokKind::Identifier) && peek(1).is_op("=")) {
            item.kind = ForItemKind::Range;
            Token name = take();
            take();  // '='
            Symbol* sym = scope_->find(name.text);
            if (sym && (sym->kind == SymbolKind::Variable) && sym->type &&
                (sym->type->is_numeric() ||
                 unwrap_named(sym->type)->kind == TypeKind::PointerInto)) {
                item.index = sym;
                item.implicit_index = false;
            } else if (sym) {
                fail("'" + name.text + "' is already declared and cannot be a loop index",
                     name.pos);
            } else {
                item.index = declare(*scope_, name.text, SymbolKind::Constant, nullptr,
                                     name.pos);
                item.index->constant = true;
                item.index->synthetic = true;
                item.implicit_index = true;
            }
            Symbol* saved_pending = pending_range_index_;
            pending_range_index_ = item.index;
            item.lb = rvalue(parse_expression(PREC_CMP));
            if (eat_kw("DOWN")) {
                item.down = true;
                expect_kw("TO");
                item.ub = rvalue(parse_expression(PREC_CMP));
            } else {
                expect_kw("TO");
                item.ub = rvalue(parse_expression(PREC_CMP));
            }
            if (eat_kw("BY")) item.step = rvalue(parse_expression(PREC_CMP));
            pending_range_index_ = saved_pending;

            bool real_idx = false;
            for (const ExprPtr& e : {item.lb, item.ub, item.step})
                if (e && e->type && scalar_kind(e->type) == TypeKind::Real)
                    real_idx = true;
            if (item.implicit_index) {
                item.index->type = real_idx ? ty_real() : ty_integer();
            } else if (scalar_kind(item.index->type) == TypeKind::Real) {
                real_idx = true;
            }
            if (real_idx && !item.step)
                fail("BY cannot be omitted when the loop index is REAL");
            TypePtr idx_t = real_idx ? ty_real() : ty_integer();
            item.lb = coerce(item.lb, idx_t, "loop bound");
            item.ub = coerce(item.ub, idx_t, "loop bound");
            if (item.step) item.step = coerce(item.step, idx_t, "loop step");
        } else if (at(TokKind::Identifier) && peek(1).is_kw("IN")) {
            item.kind = ForItemKind::In;
            Token name = take();
            take();  // IN
            item.array = rvalue(parse_expression(PREC_CMP));
            TypePtr at = item.array->type ? unwrap_named(item.array->type) : nullptr;
            if (at && at->kind == TypeKind::PointerTo && pointer_target(*at)) {
                item.array = rvalue(apply_steps(
                    item.array, {{ConvKind::Deref, pointer_target(*at), -1}}));
                at = unwrap_named(item.array->type);
            }
            if (!at || at->kind != TypeKind::Array)
                fail("FOR ... IN requires an ARRAY", item.array->pos);
            item.elem = declare(*scope_, name.text, SymbolKind::Variable, at->elem,
                                name.pos);
            item.elem->synthetic = true;
        } else {
            item.kind = ForItemKind::Times;
            item.count = coerce(rvalue(parse_expression(PREC_CMP)), ty_integer(),
                                "repetition count");
            expect_kw("TIMES");
        }
        clause->items.push_back(std::move(item));
        if (eat_kw("AND")) continue;
        break;
    }
    if (eat_kw("EXCEPT")) {
        while (true) {
            ExprPtr cond = rvalue(parse_expression());
            TypeKind k = scalar_kind(cond->type);
            if (k != TypeKind::Boolean) {
                // an index-valued exception; find the unique range/in index
                const Symbol* idx = nullptr;
                int count = 0;
                for (auto& it : clause->items)
                    if (it.kind == ForItemKind::Range) {
                        idx = it.index;
                        count++;
                    }
                if (count != 1)
                    fail("a value EXCEPT needs exactly one range index", cond->pos);
                cond = coerce(cond, const_cast<Symbol*>(idx)->type, "EXCEPT value");
            }
            clause->excepts.push_back(cond);
            if (eat_op(",")) {
                skip_newlines();
                continue;
            }
            break;
        }
    }
    return clause;
}

void Parser::infer_clause_bounds(ForClause& clause, const std::vector<const Stmt*>& body,
                                 const std::vector<const Expr*>& body_exprs) {
    auto gather = [&](const Symbol* sym) {
        std::vector<BoundSite> sites;
        for (const Stmt* s : body) collect_in_stmt(s, sym, sites);
        for (const Expr* e : body_exprs) collect_bound_sites(e, sym, sites);
        return sites;
    };
    auto static_bounds = [&](const BoundSite& site) -> std::optional<std::pair<long, long>> {
        const Expr* base = site.index_node->a.get();
        while (base->kind == ExprKind::Convert) base = base->a.get();
        TypePtr t = base->type ? unwrap_named(base->type) : nullptr;
        if (!t || t->kind != TypeKind::Array) return std::nullopt;
        if (site.axis >= (int)t->dims.size()) return std::nullopt;
        const ArrayDim& d = t->dims[site.axis];
        if (!d.known) return std::nullopt;
        return std::make_pair(d.lo, d.hi);
    };
    for (auto& item : clause.items) {
        if (item.kind != ForItemKind::All) continue;
        item.all_sites.clear();
        for (Symbol* sym : item.all_indices) {
            auto sites = gather(sym);
            if (sites.empty())
                fail("cannot infer bounds for FOR ALL " + sym->name +
                     ": the index subscripts no array");
            std::optional<std::pair<long, long>> first;
            for (auto& site : sites) {
                auto b = static_bounds(site);
                if (!b) continue;
                if (!first) {
                    first = b;
                } else if (*first != *b) {
                    fail("arrays subscripted by '" + sym->name +
                         "' have differing bounds");
                }
            }
            item.all_sites.push_back(std::move(sites));
        }
    }
    // resolve bare LO/HI markers captured while parsing range bounds
    for (Expr* marker : pending_lohi_) {
        if (!marker->bound_index) continue;
        auto sites = gather(marker->bound_index);
        if (sites.empty())
            fail("cannot infer " + std::string(marker->is_hi ? "HI" : "LO") + " for '" +
                     marker->bound_index->name + "'",
                 marker->pos);
        std::optional<std::pair<long, long>> first;
        for (auto& site : sites) {
            auto b = static_bounds(site);
            if (!b) continue;
            if (!first) {
                first = b;
            } else if (*first != *b) {
                fail("arrays subscripted by '" + marker->bound_index->name +
                     "' have differing bounds");
            }
        }
        marker->sites = std::move(sites);
        marker->bound_index = nullptr;  // resolved
    }
    pending_lohi_.erase(
        std::remove_if(pending_lohi_.begin(), pending_lohi_.end(),
                       [](Expr* e) { return e->bound_index == nullptr; }),
        pending_lohi_.end());
}

// ---------------- einstein assignments ----------------

StmtPtr Parser::build_einstein_assign(ExprPtr lhs, ExprPtr rhs, SourcePos pos) {
    auto st = make_stmt(StmtKind::EinsteinAssign, pos);
    st->lhs = lhs;
    st->rhs = rhs;
    auto plan = std::make_shared<EinPlan>();

    // terms: peel top-level additions/subtractions
    struct TermRef {
        ExprPtr e;
        bool neg;
    };
    std::vector<TermRef> terms;
    std::function<void(ExprPtr, bool)> split = [&](ExprPtr e, bool neg) {
        ExprPtr inner = e;
        while (inner->kind == ExprKind::Convert) inner = inner->a;
        if (inner->kind == ExprKind::Binary &&
            (inner->bin_op == BinOp::Add || inner->bin_op == BinOp::Sub)) {
            split(inner->a, neg);
            split(inner->b, inner->bin_op == BinOp::Sub ? !neg : neg);
            return;
        }
        terms.push_back({e == rhs ? inner : e, neg});
    };
    split(rhs, false);

    auto count_in = [&](const Expr* e, const Symbol* sym) {
        std::function<int(const Expr*)> walk = [&](const Expr* x) -> int {
            if (!x) return 0;
            int n = 0;
            if (x->kind == ExprKind::Ident && x->sym == sym) n++;
            for (const ExprPtr& c : {x->a, x->b, x->c})
                if (c) n += walk(c.get());
            for (const ExprPtr& c : x->items)
                if (c) n += walk(c.get());
            for (const CallArg& arg : x->args)
                if (arg.value) n += walk(arg.value.get());
            return n;
        };
        return walk(e);
    };

    for (auto& [name, sym] : ein_.indices) {
        int in_lhs = count_in(lhs.get(), sym);
        if (in_lhs > 1)
            fail("Einstein index $" + name + " appears more than once on the left side",
                 pos);
        if (in_lhs == 1) {
            // free index: exactly once in every term
            for (auto& t : terms)
                if (count_in(t.e.get(), sym) != 1)
                    fail("free Einstein index $" + name +
                             " must appear exactly once in every term",
                         pos);
            plan->free_indices.push_back(sym);
            std::vector<BoundSite> sites;
            collect_bound_sites(lhs.get(), sym, sites);
            collect_bound_sites(rhs.get(), sym, sites);
            plan->free_sites.push_back(std::move(sites));
        } else {
            // contraction: exactly twice within each term it appears in
            bool used = false;
            for (auto& t : terms) {
                int n = count_in(t.e.get(), sym);
                if (n == 0) continue;
                if (n != 2)
                    fail("Einstein index $" + name +
                             " must appear exactly twice in a product",
                         pos);
                used = true;
            }
            if (!used)
                fail("Einstein index $" + name + " is not used", pos);
            plan->contraction_syms.push_back(sym);
            std::vector<BoundSite> sites;
            collect_bound_sites(rhs.get(), sym, sites);
            plan->contraction_sites.push_back(std::move(sites));
        }
    }
    for (auto& t : terms) {
        EinTerm term;
        term.expr = t.e;
        term.negated = t.neg;
        for (Symbol* sym : plan->contraction_syms)
            if (count_in(t.e.get(), sym) > 0) term.contractions.push_back(sym);
        plan->terms.push_back(std::move(term));
    }
    // static bound agreement where known
    auto check_static = [&](Symbol* sym, const std::vector<BoundSite>& sites) {
        std::optional<std::pair<long, long>> first;
        for (auto& site : sites) {
            const Expr* base = site.index_node->a.get();
            while (base->kind == ExprKind::Convert) base = base->a.get();
            TypePtr t = base->type ? unwrap_named(base->type) : nullptr;
            if (!t || t->kind != TypeKind::Array || site.axis >= (int)t->dims.size())
                continue;
            const ArrayDim& d = t->dims[site.axis];
            if (!d.known) continue;
            if (!first) {
                first = std::make_pair(d.lo, d.hi);
            } else if (first->first != d.lo || first->second != d.hi) {
                fail("bounds of Einstein index $" + sym->name + " disagree", pos);
            }
        }
    };
    for (size_t i = 0; i < plan->free_indices.size(); i++)
        check_static(plan->free_indices[i], plan->free_sites[i]);
    for (size_t i = 0; i < plan->contraction_syms.size(); i++)
        check_static(plan->contraction_syms[i], plan->contraction_sites[i]);

    st->ein = plan;
    st->scope = ein_.hidden_scope;
    if (st->scope) {
        // frames for the hidden indices key on this statement
        const_cast<Scope*>(st->scope.get())->block = st.get();
    }
    ein_ = {};
    return st;
}

}  // namespace cpl
