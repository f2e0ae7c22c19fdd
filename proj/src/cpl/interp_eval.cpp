#include <cmath>
#include <cstring>
#include <functional>

#include "cpl/arrays.hpp"
#include "cpl/interp.hpp"
#include "cpl/lexer.hpp"

namespace cpl {

namespace {

TypeKind kind_of(TypePtr t) {
    TypePtr u = t ? unwrap_named(t) : nullptr;
    return u ? u->kind : TypeKind::Named;
}

int32_t wrap_add(int32_t a, int32_t b) { return (int32_t)((uint32_t)a + (uint32_t)b); }
int32_t wrap_sub(int32_t a, int32_t b) { return (int32_t)((uint32_t)a - (uint32_t)b); }
int32_t wrap_mul(int32_t a, int32_t b) { return (int32_t)((uint32_t)a * (uint32_t)b); }

Value* find_cell(const FramePtr& env, const Symbol* sym) {
    for (Frame* f = env.get(); f; f = f->parent.get()) {
        auto it = f->cells.find(sym);
        if (it != f->cells.end()) return &it->second;
    }
    return nullptr;
}

// floor division and its remainder
std::pair<long, long> div_mod(long a, long b) {
    long q = (long)std::floor((double)a / (double)b);
    long r = a - b * q;
    return {q, r};
}

}  // namespace

// ---------------- expression evaluation ----------------

Value Machine::eval(const Expr& e, FramePtr& env) {
    switch (e.kind) {
        case ExprKind::IntLit: return Value{(int32_t)e.int_val};
        case ExprKind::RealLit: return Value{e.real_val};
        case ExprKind::BoolLit: return Value{e.bool_val};
        case ExprKind::StringLit: return make_string_value(e.str_val);
        case ExprKind::NullLit: {
            TypePtr tgt = e.ref_type ? pointer_target(*unwrap_named(e.ref_type))
                                     : nullptr;
            if (tgt && unwrap_named(tgt)->kind == TypeKind::Stored)
                return Value{FilePtr{}};
            return Value{MemRef{nullptr, 0, tgt}};
        }
        case ExprKind::EnumMember:
            return e.sym && e.sym->folded ? *e.sym->folded : Value{};
        case ExprKind::Ident: {
            if (e.sym && e.sym->folded) return *e.sym->folded;
            Value* cell = find_cell(env, e.sym);
            if (!cell)
                rt_error("'" + (e.sym ? e.sym->name : std::string("?")) +
                         "' is not bound");
            return *cell;
        }
        case ExprKind::SubrVal: {
            if (!e.member) rt_error("unresolved subroutine value");
            SubrValue sv;
            sv.member = e.member;
            auto it = decl_envs.find(e.member->decl);
            if (it != decl_envs.end()) sv.env = it->second;
            return Value{sv};
        }
        case ExprKind::Convert: {
            Value v = eval(*e.a, env);
            return apply_conversions(e, std::move(v), env);
        }
        case ExprKind::Binary: return eval_binary(e, env);
        case ExprKind::Unary: {
            Value v = eval(*e.a, env);
            switch (e.un_op) {
                case UnOp::Neg:
                    if (auto* i = v.get_if<int32_t>())
                        return Value{(int32_t)(-(uint32_t)*i)};
                    if (auto* f = v.get_if<float>()) return Value{-*f};
                    return Value{-to_real(v)};
                case UnOp::Not: return Value{!v.as<bool>()};
                case UnOp::BitNot: return Value{(int32_t)~(uint32_t)to_int(v)};
            }
            return Value{};
        }
        case ExprKind::Conditional: {
            Value c = eval(*e.a, env);
            return c.as<bool>() ? eval(*e.b, env) : eval(*e.c, env);
        }
        case ExprKind::IsTest: {
            if (e.int_val == 1) return Value{e.bool_val};  // static answer
            Value v = eval(*e.a, env);
            if (auto* m = v.get_if<MemRef>()) {
                if (m->null()) return Value{false};
                if (!m->type) return Value{false};
                TypePtr want = e.ref_type;
                if (type_identity(m->type, want)) return Value{true};
                TypePtr wu = unwrap_named(want);
                if (wu->kind == TypeKind::PointerTo && pointer_target(*wu))
                    return Value{type_identity(m->type, pointer_target(*wu))};
                return Value{false};
            }
            return Value{false};
        }
        case ExprKind::Call: return eval_call(e, env);
        case ExprKind::Index: {
            Place out;
            return eval_index(e, env, false, &out);
        }
        case ExprKind::FieldSelect: {
            Value base = eval(*e.a, env);
            if (e.field_index < 0) rt_error("unresolved field");
            if (auto* view = base.get_if<ViewData>())
                return Value{field_slice(*view, e.field_index)};
            if (auto* m = base.get_if<MemRef>()) {
                if (m->null()) rt_error("NULL-pointer dereference");
                TypePtr st = m->type;
                TypePtr u = unwrap_named(st);
                if (!u || u->kind != TypeKind::Structure)
                    rt_error("field access on a non-structure value");
                long off =
                    field_offset_dyn(st, e.field_index, m->storage, m->offset, env);
                TypePtr ft = u->fields[e.field_index].type;
                TypePtr fu = unwrap_named(ft);
                if (fu && fu->kind == TypeKind::Array && !slot_count(ft)) {
                    // run-time dims: evaluate bounds against the instance's
                    // constant fields
                    auto tmp = std::make_shared<Frame>();
                    tmp->parent = env;
                    FramePtr tenv = tmp;
                    long walk = 0;
                    for (int i = 0; i < e.field_index; i++) {
                        auto& f = u->fields[i];
                        if (f.const_size) {
                            bind_const_field(tenv, st, f.name,
                                             m->storage->slots[m->offset + walk]);
                            walk += 1;
                        } else {
                            walk += slot_count(f.type)
                                        ? *slot_count(f.type)
                                        : field_offset_dyn(st, i + 1, m->storage,
                                                           m->offset, env) -
                                              field_offset_dyn(st, i, m->storage,
                                                               m->offset, env);
                        }
                    }
                    ViewData view;
                    view.storage = m->storage;
                    view.elem = fu->elem;
                    view.elem_slots = slot_count(fu->elem).value_or(1);
                    long stride = view.elem_slots;
                    view.axes.resize(fu->dims.size());
                    for (int k = (int)fu->dims.size() - 1; k >= 0; k--) {
                        const ArrayDim& d = fu->dims[k];
                        long lo = d.known ? d.lo
                                          : (d.lo_expr ? to_int(eval(*d.lo_expr, tenv))
                                                       : 1);
                        long hi = d.known ? d.hi : to_int(eval(*d.hi_expr, tenv));
                        view.axes[k] = {lo, hi, stride};
                        stride *= std::max(0L, hi - lo + 1);
                    }
                    long shift = 0;
                    for (auto& ax : view.axes) shift += ax.lo * ax.stride;
                    view.offset = m->offset + off - shift;
                    return Value{view};
                }
                return Value{MemRef{m->storage, m->offset + off, ft}};
            }
            if (auto* sr = base.get_if<StoredRef>()) {
                TypePtr u = unwrap_named(sr->type);
                if (!u || u->kind != TypeKind::Structure)
                    rt_error("field access on a non-structure stored value");
                long off = 0;
                for (int i = 0; i < e.field_index; i++)
                    off += serialized_size(u->fields[i].type).value_or(0);
                return Value{StoredRef{sr->file, sr->byte_offset + off,
                                       u->fields[e.field_index].type}};
            }
            if (auto* sv = base.get_if<StoredViewData>()) {
                // field slice over stored array of structures
                TypePtr u = unwrap_named(sv->elem);
                if (!u || u->kind != TypeKind::Structure)
                    rt_error("field slice on a non-structure stored array");
                long off = 0;
                for (int i = 0; i < e.field_index; i++)
                    off += serialized_size(u->fields[i].type).value_or(0);
                StoredViewData out = *sv;
                out.field_byte_shift += off;
                out.elem = u->fields[e.field_index].type;
                return Value{out};
            }
            rt_error("field access on a non-structure value");
        }
        case ExprKind::Deref: {
            Value v = eval(*e.a, env);
            if (auto* m = v.get_if<MemRef>()) {
                Place p{false, *m, {}, m->type};
                return load_place(p);
            }
            if (auto* sr = v.get_if<StoredRef>()) return stored_read(*sr);
            if (auto* f = v.get_if<FilePtr>()) {
                TypePtr ru = e.type ? unwrap_named(e.type) : nullptr;
                if (ru && ru->kind == TypeKind::Stored) {
                    if (!*f) rt_error("NULL-pointer dereference");
                    return Value{make_stored_view(*f, e.type)};
                }
                return v;
            }
            return v;  // views and direct values are their own referents
        }
        case ExprKind::AddressOf: {
            Value v = eval(*e.a, env);
            return v;  // places and views already are addresses
        }
        case ExprKind::Concat: {
            std::string out;
            Fmt fmt = current_fmt(env);
            for (auto& item : e.items) {
                Value v = eval(*item, env);
                if (auto* view = v.get_if<ViewData>()) {
                    if (view->elem && kind_of(view->elem) == TypeKind::Char) {
                        out += string_of_view(*view);
                        continue;
                    }
                }
                render_item(out, v, item->type, fmt, env, fout, nullptr);
            }
            return make_string_value(out);
        }
        case ExprKind::LoopingOp: {
            return eval_looping(e, env);
        }
        case ExprKind::FromFile: {
            Value f = eval(*e.a, env);
            auto* fp = f.get_if<FilePtr>();
            if (!fp || !*fp) rt_error("FROM requires an open FILE");
            return read_text_value(**fp, e.ref_type, env);
        }
        case ExprKind::ReadExpr: {
            FramePtr& envr = env;
            return Value{do_read(*e.read_spec, envr, true)};
        }
        case ExprKind::Tilde: {
            if (tilde_stack_.empty()) rt_error("'~' outside an assignment");
            return tilde_stack_.back();
        }
        case ExprKind::NewExpr: {
            TypePtr t = e.ref_type;
            TypePtr u = unwrap_named(t);
            if (u->kind == TypeKind::PointerTo) {
                TypePtr tgt = pointer_target(*u);
                u = unwrap_named(tgt);
                t = tgt;
            }
            if (u->kind == TypeKind::Stored) return Value{make_temp_file()};
            Value allocated = alloc_for_new(t, e.items, env);
            return allocated;
        }
        case ExprKind::OpenFn:
        case ExprKind::CreateFn: {
            Value nm = eval(*e.a, env);
            auto* view = nm.get_if<ViewData>();
            if (!view) rt_error("OPEN/CREATE require a file name STRING");
            return Value{open_path(string_of_view(*view), e.kind == ExprKind::CreateFn)};
        }
        case ExprKind::PositionFn: {
            Value f = eval(*e.a, env);
            auto* fp = f.get_if<FilePtr>();
            if (!fp || !*fp) rt_error("POSITION requires an open FILE");
            return Value{(int32_t)fh_tell(**fp)};
        }
        case ExprKind::ArrayLit: {
            TypePtr et = e.items.empty() ? ty_integer() : e.items[0]->type;
            ViewData view = make_view(et, {{0, (long)e.items.size() - 1}});
            long i = 0;
            for (auto& item : e.items)
                view.storage->slots[i++] = eval(*item, env);
            return Value{view};
        }
        case ExprKind::RangeSel:
        case ExprKind::StarSel:
            rt_error("selector used outside a subscript");
        case ExprKind::LoHiBound: {
            auto [lo, hi] = infer_bounds(e.sites, env);
            return Value{(int32_t)(e.is_hi ? hi : lo)};
        }
    }
    rt_error("cannot evaluate this expression");
}

Value Machine::alloc_for_new(TypePtr t, const std::vector<ExprPtr>& size_args,
                             FramePtr& env) {
    TypePtr u = unwrap_named(t);
    if (u->kind == TypeKind::Array) {
        std::vector<std::pair<long, long>> bounds;
        for (auto& d : u->dims) {
            if (d.star) rt_error("NEW cannot size a * dimension");
            if (d.known) {
                bounds.push_back({d.lo, d.hi});
            } else {
                long lo = d.lo_expr ? to_int(eval(*d.lo_expr, env)) : 1;
                long hi = to_int(eval(*d.hi_expr, env));
                bounds.push_back({lo, hi});
            }
        }
        return Value{make_view(u->elem, bounds)};
    }
    if (u->kind == TypeKind::Structure) {
        if (!slot_count(u).has_value()) {
            std::vector<Value> sizes;
            for (auto& e2 : size_args) sizes.push_back(eval(*e2, env));
            // reuse the declaration allocator through a tiny shim
            auto st = std::make_shared<ArrayStorage>();
            long total = dyn_struct_total(t, sizes, env, nullptr);
            st->slots.resize((size_t)total);
            dyn_struct_total(t, sizes, env, st);
            return Value{MemRef{st, 0, t}};
        }
        auto st = allocate_storage(u, 1);
        return Value{MemRef{st, 0, t}};
    }
    auto st = std::make_shared<ArrayStorage>();
    st->slots.push_back(default_scalar(t));
    return Value{MemRef{st, 0, t}};
}

long Machine::dyn_struct_total(TypePtr struct_t, const std::vector<Value>& sizes,
                               FramePtr& env, StoragePtr fill) {
    TypePtr u = unwrap_named(struct_t);
    auto tmp = std::make_shared<Frame>();
    tmp->parent = env;
    FramePtr tenv = tmp;
    long off = 0;
    size_t next = 0;
    for (auto& f : u->fields) {
        TypePtr fu = unwrap_named(f.type);
        if (f.const_size) {
            Value v = next < sizes.size() ? sizes[next] : Value{(int32_t)0};
            next++;
            if (fill) fill->slots[off] = v;
            bind_const_field(tenv, struct_t, f.name, v);
            off += 1;
        } else if (fu->kind == TypeKind::Array && !slot_count(f.type)) {
            long n = 1;
            for (auto& d : fu->dims) {
                long lo = d.known ? d.lo
                                  : (d.lo_expr ? to_int(eval(*d.lo_expr, tenv)) : 1);
                long hi = d.known ? d.hi : to_int(eval(*d.hi_expr, tenv));
                n *= std::max(0L, hi - lo + 1);
            }
            long es = slot_count(fu->elem).value_or(1);
            if (fill)
                for (long i = 0; i < n; i++)
                    default_init_range(*fill, off + i * es, fu->elem);
            off += n * es;
        } else {
            long k = slot_count(f.type).value_or(1);
            if (fill) default_init_range(*fill, off, f.type);
            off += k;
        }
    }
    return off;
}

Value Machine::apply_conversions(const Expr& e, Value v, FramePtr& env) {
    for (auto& step : e.conv) {
        switch (step.kind) {
            case ConvKind::Deref: {
                if (auto* m = v.get_if<MemRef>()) {
                    Place p{false, *m, {}, m->type};
                    v = load_place(p);
                } else if (auto* sr = v.get_if<StoredRef>()) {
                    v = stored_read(*sr);
                } else if (auto* f = v.get_if<FilePtr>()) {
                    // only a deref INTO the stored type opens the view; a
                    // cell load keeps the descriptor
                    TypePtr ru = step.result ? unwrap_named(step.result) : nullptr;
                    if (ru && ru->kind == TypeKind::Stored) {
                        if (!*f) rt_error("NULL-pointer dereference");
                        v = Value{make_stored_view(*f, step.result)};
                    }
                }
                break;
            }
            case ConvKind::AddressOf:
                break;
            case ConvKind::IntToReal: v = Value{(double)to_int(v)}; break;
            case ConvKind::SingleToReal: v = Value{(double)v.as<float>()}; break;
            case ConvKind::CharToInt:
                v = Value{(int32_t)(unsigned char)v.as<char>()};
                break;
            case ConvKind::String1ToChar: {
                auto* view = v.get_if<ViewData>();
                if (!view) rt_error("expected a one-character STRING");
                std::string s = string_of_view(*view);
                if (s.size() != 1) rt_error("expected a one-character STRING");
                v = Value{s[0]};
                break;
            }
            case ConvKind::StructToAnonField: {
                auto* m = v.get_if<MemRef>();
                if (!m || m->null()) rt_error("NULL structure in conversion");
                TypePtr u = unwrap_named(m->type);
                long off = field_offset_dyn(m->type, step.anon_field, m->storage,
                                            m->offset, env);
                v = Value{MemRef{m->storage, m->offset + off,
                                 u->fields[step.anon_field].type}};
                break;
            }
            case ConvKind::RestrictedDynToBase:
                break;
            case ConvKind::ScalarToUnitArray: {
                if (auto* m = v.get_if<MemRef>()) {
                    ViewData view;
                    view.storage = m->storage;
                    view.elem = m->type;
                    view.elem_slots = 1;
                    view.offset = m->offset;
                    view.axes = {{0, 0, 1}};
                    v = Value{view};
                } else {
                    auto st = std::make_shared<ArrayStorage>();
                    st->slots.push_back(v);
                    ViewData view;
                    view.storage = st;
                    view.elem = step.result ? unwrap_named(step.result)->elem : nullptr;
                    view.elem_slots = 1;
                    view.offset = 0;
                    view.axes = {{0, 0, 1}};
                    v = Value{view};
                }
                break;
            }
            case ConvKind::GenericPointer:
                break;
        }
    }
    return v;
}

// ---------------- binary operators ----------------

Value Machine::eval_binary(const Expr& e, FramePtr& env) {
    // short-circuit booleans
    if (e.sem == BinSem::Bool && (e.bin_op == BinOp::And || e.bin_op == BinOp::Or)) {
        bool a = eval(*e.a, env).as<bool>();
        if (e.bin_op == BinOp::And && !a) return Value{false};
        if (e.bin_op == BinOp::Or && a) return Value{true};
        return Value{eval(*e.b, env).as<bool>()};
    }
    Value va = eval(*e.a, env);
    Value vb = eval(*e.b, env);

    auto cmp_result = [&](int c) -> Value {
        switch (e.bin_op) {
            case BinOp::Eq: return Value{c == 0};
            case BinOp::Ne: return Value{c != 0};
            case BinOp::Lt: return Value{c < 0};
            case BinOp::Le: return Value{c <= 0};
            case BinOp::Gt: return Value{c > 0};
            case BinOp::Ge: return Value{c >= 0};
            default: rt_error("bad comparison");
        }
    };

    switch (e.sem) {
        case BinSem::Int: {
            long a = to_int(va), b = to_int(vb);
            switch (e.bin_op) {
                case BinOp::Add: return Value{wrap_add((int32_t)a, (int32_t)b)};
                case BinOp::Sub: return Value{wrap_sub((int32_t)a, (int32_t)b)};
                case BinOp::Mul: return Value{wrap_mul((int32_t)a, (int32_t)b)};
                case BinOp::IDiv: {
                    if (b == 0) rt_error("division by zero");
                    return Value{(int32_t)div_mod(a, b).first};
                }
                case BinOp::Mod: {
                    if (b == 0) rt_error("division by zero");
                    return Value{(int32_t)div_mod(a, b).second};
                }
                case BinOp::CDiv:
                    if (b == 0) rt_error("division by zero");
                    return Value{(int32_t)(a / b)};
                case BinOp::CMod:
                    if (b == 0) rt_error("division by zero");
                    return Value{(int32_t)(a % b)};
                case BinOp::Shl: return Value{(int32_t)((uint32_t)a << (b & 31))};
                case BinOp::Shr: return Value{(int32_t)((uint32_t)a >> (b & 31))};
                case BinOp::BitAnd: return Value{(int32_t)(a & b)};
                case BinOp::BitOr: return Value{(int32_t)(a | b)};
                case BinOp::BitXor: return Value{(int32_t)(a ^ b)};
                default:
                    return cmp_result(a < b ? -1 : a > b ? 1 : 0);
            }
        }
        case BinSem::IntDivReal: {
            double b = (double)to_int(vb);
            if (b == 0) rt_error("division by zero");
            return Value{(double)to_int(va) / b};
        }
        case BinSem::Real: {
            double a = to_real(va), b = to_real(vb);
            switch (e.bin_op) {
                case BinOp::Add: return Value{a + b};
                case BinOp::Sub: return Value{a - b};
                case BinOp::Mul: return Value{a * b};
                case BinOp::Div:
                    if (b == 0) rt_error("division by zero");
                    return Value{a / b};
                case BinOp::Pow: return Value{std::pow(a, b)};
                default:
                    return cmp_result(a < b ? -1 : a > b ? 1 : 0);
            }
        }
        case BinSem::Single: {
            float a = va.as<float>(), b = vb.as<float>();
            switch (e.bin_op) {
                case BinOp::Add: return Value{a + b};
                case BinOp::Sub: return Value{a - b};
                case BinOp::Mul: return Value{a * b};
                case BinOp::Div:
                    if (b == 0) rt_error("division by zero");
                    return Value{a / b};
                default:
                    return cmp_result(a < b ? -1 : a > b ? 1 : 0);
            }
        }
        case BinSem::Bool: {
            bool a = va.as<bool>(), b = vb.as<bool>();
            return cmp_result(a == b ? 0 : 1);
        }
        case BinSem::Char: {
            char a = va.as<char>(), b = vb.as<char>();
            return cmp_result(a < b ? -1 : a > b ? 1 : 0);
        }
        case BinSem::Enum: {
            long a = va.as<EnumValue>().ordinal, b = vb.as<EnumValue>().ordinal;
            return cmp_result(a == b ? 0 : 1);
        }
        case BinSem::Pointer: {
            bool eq = value_equal(va, vb);
            return cmp_result(eq ? 0 : 1);
        }
        case BinSem::View:
        case BinSem::StringCmp: {
            bool eq = value_equal(va, vb);
            return cmp_result(eq ? 0 : 1);
        }
        case BinSem::ArrayLin: {
            auto* x = va.get_if<ViewData>();
            auto* y = vb.get_if<ViewData>();
            if (!x || !y) rt_error("array operation on non-array operands");
            if (!congruent(x->axes, y->axes))
                rt_error("arrays are not congruent");
            bool realish = kind_of(x->elem) != TypeKind::Integer ||
                           kind_of(y->elem) != TypeKind::Integer;
            std::vector<std::pair<long, long>> bounds;
            for (auto& ax : x->axes) bounds.push_back({ax.lo, ax.hi});
            ViewData out = make_view(realish ? ty_real() : ty_integer(), bounds);
            std::vector<long> xo, yo;
            enumerate(x->axes, x->offset, [&](long off) { xo.push_back(off); });
            enumerate(y->axes, y->offset, [&](long off) { yo.push_back(off); });
            size_t i = 0;
            enumerate(out.axes, out.offset, [&](long off) {
                const Value& a = x->storage->slots[xo[i]];
                const Value& b = y->storage->slots[yo[i]];
                i++;
                if (realish) {
                    double r = e.bin_op == BinOp::Add ? to_real(a) + to_real(b)
                                                      : to_real(a) - to_real(b);
                    out.storage->slots[off] = Value{r};
                } else {
                    long r = e.bin_op == BinOp::Add ? to_int(a) + to_int(b)
                                                    : to_int(a) - to_int(b);
                    out.storage->slots[off] = Value{(int32_t)r};
                }
            });
            return Value{out};
        }
        case BinSem::ArrayScale: {
            auto* x = va.get_if<ViewData>();
            const Value& scalar = vb;
            if (!x) rt_error("array operation on non-array operands");
            bool realish = kind_of(x->elem) != TypeKind::Integer ||
                           !(scalar.is<int32_t>() || scalar.is<char>());
            double s = to_real(scalar);
            if (e.bin_op == BinOp::Div && s == 0) rt_error("division by zero");
            std::vector<std::pair<long, long>> bounds;
            for (auto& ax : x->axes) bounds.push_back({ax.lo, ax.hi});
            ViewData out = make_view(realish ? ty_real() : ty_integer(), bounds);
            std::vector<long> xo;
            enumerate(x->axes, x->offset, [&](long off) { xo.push_back(off); });
            size_t i = 0;
            enumerate(out.axes, out.offset, [&](long off) {
                double a = to_real(x->storage->slots[xo[i++]]);
                double r = e.bin_op == BinOp::Mul ? a * s : a / s;
                out.storage->slots[off] =
                    realish ? Value{r} : Value{(int32_t)(long)r};
            });
            return Value{out};
        }
        case BinSem::ArrayDot: {
            auto* x = va.get_if<ViewData>();
            auto* y = vb.get_if<ViewData>();
            if (!x || !y) rt_error("scalar product of non-array operands");
            if (!congruent(x->axes, y->axes)) rt_error("arrays are not congruent");
            bool realish = kind_of(x->elem) == TypeKind::Real ||
                           kind_of(y->elem) == TypeKind::Real ||
                           kind_of(x->elem) == TypeKind::Single ||
                           kind_of(y->elem) == TypeKind::Single;
            std::vector<long> xo, yo;
            enumerate(x->axes, x->offset, [&](long off) { xo.push_back(off); });
            enumerate(y->axes, y->offset, [&](long off) { yo.push_back(off); });
            if (realish) {
                double acc = 0;
                for (size_t i = 0; i < xo.size(); i++)
                    acc += to_real(x->storage->slots[xo[i]]) *
                           to_real(y->storage->slots[yo[i]]);
                return Value{acc};
            }
            long acc = 0;
            for (size_t i = 0; i < xo.size(); i++)
                acc += to_int(x->storage->slots[xo[i]]) *
                       to_int(y->storage->slots[yo[i]]);
            return Value{(int32_t)acc};
        }
    }
    rt_error("cannot evaluate this operator");
}

// ---------------- looping operators ----------------

Value Machine::eval_looping(const Expr& e, FramePtr& env) {
    FramePtr frame = std::make_shared<Frame>();
    frame->parent = env;
    frame->block = e.scope_holder.get();
    FramePtr fenv = frame;

    TypeKind bk = kind_of(e.type);
    bool result_int = bk == TypeKind::Integer || bk == TypeKind::Char;
    bool have = false;
    double best_r = 0;
    long best_i = 0;
    double acc_r = e.loop_op == LoopOpKind::Product ? 1.0 : 0.0;
    long acc_i = e.loop_op == LoopOpKind::Product ? 1 : 0;
    Value arg_value;

    const Symbol* arg_index = nullptr;
    if (e.loop_op == LoopOpKind::ArgMax || e.loop_op == LoopOpKind::ArgMin) {
        for (auto& item : e.clause->items)
            if (item.kind == ForItemKind::Range || item.kind == ForItemKind::All) {
                arg_index = item.kind == ForItemKind::Range ? item.index
                                                            : item.all_indices[0];
                break;
            }
        if (!arg_index) rt_error("ARGMAX/ARGMIN need an index clause");
    }

    run_clause(*e.clause, fenv, [&]() {
        Value v = eval(*e.a, fenv);
        switch (e.loop_op) {
            case LoopOpKind::Sum:
                if (result_int)
                    acc_i += to_int(v);
                else
                    acc_r += to_real(v);
                break;
            case LoopOpKind::Product:
                if (result_int)
                    acc_i *= to_int(v);
                else
                    acc_r *= to_real(v);
                break;
            case LoopOpKind::Max:
            case LoopOpKind::ArgMax: {
                double x = to_real(v);
                if (!have || x > best_r) {
                    best_r = x;
                    best_i = to_int(v);
                    if (arg_index) {
                        Value* c = find_cell(fenv, arg_index);
                        if (c) arg_value = *c;
                    }
                }
                have = true;
                break;
            }
            case LoopOpKind::Min:
            case LoopOpKind::ArgMin: {
                double x = to_real(v);
                if (!have || x < best_r) {
                    best_r = x;
                    best_i = to_int(v);
                    if (arg_index) {
                        Value* c = find_cell(fenv, arg_index);
                        if (c) arg_value = *c;
                    }
                }
                have = true;
                break;
            }
        }
        return true;
    });

    switch (e.loop_op) {
        case LoopOpKind::Sum:
            return result_int ? Value{(int32_t)acc_i} : Value{acc_r};
        case LoopOpKind::Product:
            return result_int ? Value{(int32_t)acc_i} : Value{acc_r};
        case LoopOpKind::Max:
        case LoopOpKind::Min:
            if (!have) rt_error("MAX/MIN over an empty iteration set");
            return result_int ? Value{(int32_t)best_i} : Value{best_r};
        case LoopOpKind::ArgMax:
        case LoopOpKind::ArgMin:
            if (!have) rt_error("ARGMAX/ARGMIN over an empty iteration set");
            return arg_value;
    }
    rt_error("bad looping operator");
}

// ---------------- indexing ----------------

Value Machine::eval_index(const Expr& e, FramePtr& env, bool want_place, Place* out) {
    Value base = eval(*e.a, env);

    // overlay structures expose a flat view
    if (auto* m = base.get_if<MemRef>()) {
        TypePtr u = m->type ? unwrap_named(m->type) : nullptr;
        if (u && u->kind == TypeKind::Structure && u->overlay) {
            TypePtr scalar = nullptr;
            TypePtr f0 = unwrap_named(u->fields[0].type);
            scalar = f0->kind == TypeKind::Array ? f0->elem : u->fields[0].type;
            ViewData view;
            view.storage = m->storage;
            view.elem = scalar;
            view.elem_slots = 1;
            view.offset = m->offset;
            view.axes = {{0, u->overlay_len - 1, 1}};
            base = Value{view};
        } else if (u && u->kind == TypeKind::Array) {
            base = Value{view_of_inline_array(m->storage, m->offset, m->type)};
        }
    }

    std::vector<Sel> sels;
    bool all_single = true;
    for (auto& sexpr : e.items) {
        Sel sel = eval_selector(*sexpr, env);
        if (sel.kind != Sel::Single) all_single = false;
        sels.push_back(std::move(sel));
    }

    if (auto* view = base.get_if<ViewData>()) {
        if (!view->storage) rt_error("array is not bound");
        if (all_single && sels.size() == view->axes.size()) {
            long off = view->offset;
            for (size_t k = 0; k < sels.size(); k++) {
                const Axis& ax = view->axes[k];
                long idx = sels[k].index;
                if (idx < ax.lo || idx > ax.hi) {
                    if (rtchecks)
                        rt_error("index " + std::to_string(idx) + " out of bounds " +
                                 std::to_string(ax.lo) + ".." + std::to_string(ax.hi));
                }
                off += idx * ax.stride;
            }
            MemRef ref{view->storage, off, view->elem};
            if (out) *out = Place{false, ref, {}, view->elem};
            if (want_place) return Value{};
            Place p{false, ref, {}, view->elem};
            if (ref.offset < 0 || ref.offset >= (long)view->storage->slots.size())
                rt_error("index outside the array's allocation");
            return Value{ref};
        }
        ViewData sub = select(*view, sels, rtchecks);
        if (out) *out = Place{};
        return Value{sub};
    }
    if (auto* sv = base.get_if<StoredViewData>()) {
        if (!sv->file) rt_error("stored array is not bound to a file");
        if (all_single && sels.size() == sv->axes.size()) {
            long idx_lin = sv->offset;
            for (size_t k = 0; k < sels.size(); k++) {
                const Axis& ax = sv->axes[k];
                long idx = sels[k].index;
                bool open_axis = sv->auto_extend && k == 0;
                if (idx < ax.lo || (!open_axis && idx > ax.hi)) {
                    if (rtchecks || idx < ax.lo)
                        rt_error("index " + std::to_string(idx) + " out of bounds " +
                                 std::to_string(ax.lo) + ".." + std::to_string(ax.hi));
                }
                idx_lin += idx * ax.stride;
            }
            StoredRef ref{sv->file, idx_lin * sv->elem_size + sv->field_byte_shift,
                          sv->elem};
            if (out) *out = Place{true, {}, ref, sv->elem};
            if (want_place) return Value{};
            return Value{ref};
        }
        StoredViewData sub = select_stored(*sv, sels, rtchecks);
        if (out) *out = Place{};
        return Value{sub};
    }
    rt_error("this value cannot be subscripted");
}

Sel Machine::eval_selector(const Expr& e, FramePtr& env) {
    if (e.kind == ExprKind::StarSel) {
        Sel s;
        if (e.permute_n > 0) {
            s.kind = Sel::Permute;
            s.permute_n = e.permute_n;
            return s;
        }
        if (e.star_count >= 2) {
            s.kind = Sel::StarRun;
            s.star_run = e.star_count;
            return s;
        }
        s.kind = Sel::Affine;
        s.offset = 0;
        s.terms = {{1, SelRange{true, 0, -1}}};
        return s;
    }
    if (e.kind == ExprKind::RangeSel) {
        Sel s;
        s.kind = Sel::Affine;
        s.offset = 0;
        SelRange r;
        r.star = false;
        r.lo = to_int(eval(*e.a, env));
        r.hi = to_int(eval(*e.b, env));
        s.terms = {{1, r}};
        return s;
    }
    // linear decomposition over +,-,* with range/star atoms
    struct Lin {
        long c = 0;
        std::vector<AffineTerm> terms;
        bool pure() const { return terms.empty(); }
    };
    std::function<Lin(const Expr&)> lin = [&](const Expr& x) -> Lin {
        if (x.kind == ExprKind::RangeSel) {
            Lin l;
            SelRange r;
            r.star = false;
            r.lo = to_int(eval(*x.a, env));
            r.hi = to_int(eval(*x.b, env));
            l.terms.push_back({1, r});
            return l;
        }
        if (x.kind == ExprKind::StarSel) {
            Lin l;
            l.terms.push_back({1, SelRange{true, 0, -1}});
            return l;
        }
        if (x.kind == ExprKind::Binary &&
            (x.bin_op == BinOp::Add || x.bin_op == BinOp::Sub ||
             x.bin_op == BinOp::Mul)) {
            // only decompose when a range hides below
            std::function<bool(const Expr*)> rangeful = [&](const Expr* p) -> bool {
                if (!p) return false;
                if (p->kind == ExprKind::RangeSel || p->kind == ExprKind::StarSel)
                    return true;
                for (const ExprPtr& c : {p->a, p->b, p->c})
                    if (c && rangeful(c.get())) return true;
                for (const ExprPtr& c : p->items)
                    if (c && rangeful(c.get())) return true;
                return false;
            };
            if (rangeful(&x)) {
                Lin a = lin(*x.a);
                Lin b = lin(*x.b);
                Lin out;
                if (x.bin_op == BinOp::Add || x.bin_op == BinOp::Sub) {
                    long sign = x.bin_op == BinOp::Sub ? -1 : 1;
                    out.c = a.c + sign * b.c;
                    out.terms = a.terms;
                    for (auto t : b.terms) {
                        t.coef *= sign;
                        out.terms.push_back(t);
                    }
                    return out;
                }
                // Mul: one side must be pure
                if (!a.pure() && !b.pure())
                    rt_error("subarray selector is not linear");
                Lin& rangey = a.pure() ? b : a;
                long k = a.pure() ? a.c : b.c;
                out.c = rangey.c * k;
                out.terms = rangey.terms;
                for (auto& t : out.terms) t.coef *= k;
                return out;
            }
        }
        Lin l;
        l.c = to_int(eval(x, env));
        return l;
    };
    Lin l = lin(e);
    Sel s;
    if (l.terms.empty()) {
        s.kind = Sel::Single;
        s.index = l.c;
        return s;
    }
    s.kind = Sel::Affine;
    s.offset = l.c;
    s.terms = std::move(l.terms);
    return s;
}

// ---------------- places ----------------

Place Machine::eval_place(const Expr& e, FramePtr& env) {
    switch (e.kind) {
        case ExprKind::Ident: {
            Value* cell = find_cell(env, e.sym);
            if (!cell)
                rt_error("'" + (e.sym ? e.sym->name : std::string("?")) +
                         "' is not bound");
            if (auto* m = cell->get_if<MemRef>()) return Place{false, *m, {}, m->type};
            rt_error("'" + e.sym->name + "' cannot be assigned to");
        }
        case ExprKind::Index: {
            Place out;
            eval_index(e, env, true, &out);
            if (!out.mem.storage && !out.stored)
                rt_error("subarray selections cannot be assigned as scalars");
            return out;
        }
        case ExprKind::FieldSelect: {
            Value v = eval(e, env);
            if (auto* m = v.get_if<MemRef>()) return Place{false, *m, {}, m->type};
            if (auto* sr = v.get_if<StoredRef>()) return Place{true, {}, *sr, sr->type};
            rt_error("this field cannot be assigned to");
        }
        case ExprKind::Deref: {
            Value v = eval(*e.a, env);
            if (auto* m = v.get_if<MemRef>()) {
                if (m->null()) rt_error("NULL-pointer dereference");
                return Place{false, *m, {}, m->type};
            }
            if (auto* sr = v.get_if<StoredRef>()) return Place{true, {}, *sr, sr->type};
            rt_error("cannot assign through this pointer");
        }
        case ExprKind::Convert: {
            // deref chains appear on typed assignments
            Value v = eval(*e.a, env);
            for (size_t i = 0; i + 1 < e.conv.size(); i++) {
                // apply all but the last deref
                const ConversionStep& step = e.conv[i];
                if (step.kind != ConvKind::Deref)
                    rt_error("assignment target is not a place");
                if (auto* m = v.get_if<MemRef>()) {
                    Place p{false, *m, {}, m->type};
                    v = load_place(p);
                }
            }
            if (auto* m = v.get_if<MemRef>()) return Place{false, *m, {}, m->type};
            if (auto* sr = v.get_if<StoredRef>()) return Place{true, {}, *sr, sr->type};
            rt_error("assignment target is not a place");
        }
        default:
            rt_error("assignment target is not a place");
    }
}

}  // namespace cpl
