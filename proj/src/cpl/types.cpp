#include "cpl/types.hpp"

#include <atomic>
#include <deque>

namespace cpl {

namespace detail {
// Defined in ast_print.cpp; renders a bound expression for type display.
std::string print_dim_expr(const Expr* e);
}

namespace {

std::atomic<long> g_instance_counter{1};

TypePtr prim(TypeKind k) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = k;
    return t;
}

}  // namespace

long fresh_type_instance_id() { return g_instance_counter++; }

TypePtr ty_boolean() { static TypePtr t = prim(TypeKind::Boolean); return t; }
TypePtr ty_char()    { static TypePtr t = prim(TypeKind::Char); return t; }
TypePtr ty_integer() { static TypePtr t = prim(TypeKind::Integer); return t; }
TypePtr ty_real()    { static TypePtr t = prim(TypeKind::Real); return t; }
TypePtr ty_single()  { static TypePtr t = prim(TypeKind::Single); return t; }

TypePtr make_enum(std::vector<std::string> members) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::Enum;
    t->members = std::move(members);
    return t;
}

TypePtr make_structure(std::vector<StructField> fields) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::Structure;
    t->fields = std::move(fields);
    return t;
}

TypePtr make_array(std::vector<ArrayDim> dims, TypePtr elem) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::Array;
    t->dims = std::move(dims);
    t->elem = std::move(elem);
    return t;
}

TypePtr make_static_array(const std::vector<std::pair<long, long>>& bounds, TypePtr elem) {
    std::vector<ArrayDim> dims;
    for (auto& b : bounds) {
        ArrayDim d;
        d.known = true;
        d.lo = b.first;
        d.hi = b.second;
        dims.push_back(d);
    }
    return make_array(std::move(dims), std::move(elem));
}

TypePtr make_pointer(TypePtr target) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::PointerTo;
    t->target = std::move(target);
    return t;
}

TypePtr make_uncommitted_pointer(std::shared_ptr<UncommittedSlot> slot) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::PointerTo;
    t->uncommitted = std::move(slot);
    return t;
}

TypePtr make_pointer_into(std::vector<std::string> bases) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::PointerInto;
    t->into_bases = std::move(bases);
    return t;
}

TypePtr make_dynamic_pointer(TypePtr bound) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::DynamicPointer;
    t->target = std::move(bound);
    return t;
}

TypePtr make_stored(TypePtr wrapped) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::Stored;
    t->target = std::move(wrapped);
    return t;
}

TypePtr make_named(std::string name, TypePtr def) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::Named;
    t->name = std::move(name);
    t->def = std::move(def);
    t->name_id = fresh_type_instance_id();
    return t;
}

TypePtr make_subroutine_type(std::shared_ptr<ParamSig> sig) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::SubroutineType;
    t->sig = std::move(sig);
    return t;
}

TypePtr make_function_type(std::shared_ptr<ParamSig> sig) {
    auto t = std::make_shared<TypeDescriptor>();
    t->kind = TypeKind::FunctionType;
    t->sig = std::move(sig);
    return t;
}

TypePtr make_string_type() {
    static TypePtr t = [] {
        ArrayDim d;
        d.star = true;
        return make_array({d}, ty_char());
    }();
    return t;
}

TypePtr make_string_literal_type(long n) {
    ArrayDim d;
    d.known = true;
    d.lo = 0;
    d.hi = n - 1;
    return make_array({d}, ty_char());
}

TypePtr make_file_type(TypePtr elem) {
    ArrayDim d;
    d.star = true;
    return make_pointer(make_stored(make_array({d}, std::move(elem))));
}

TypePtr unwrap_named(TypePtr t) {
    while (t) {
        if (t->kind == TypeKind::Named) {
            t = t->def;
        } else if (t->kind == TypeKind::PointerTo && !t->target && t->uncommitted &&
                   t->uncommitted->resolved) {
            t = make_pointer(t->uncommitted->resolved);
        } else {
            break;
        }
    }
    return t;
}

TypePtr pointer_target(const TypeDescriptor& ptr) {
    if (ptr.kind != TypeKind::PointerTo) return nullptr;
    if (ptr.target) return ptr.target;
    if (ptr.uncommitted && ptr.uncommitted->resolved) return ptr.uncommitted->resolved;
    return nullptr;
}

namespace {

bool dims_identical(const std::vector<ArrayDim>& a, const std::vector<ArrayDim>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); i++) {
        const ArrayDim &x = a[i], &y = b[i];
        if (x.star != y.star) return false;
        if (x.star) continue;
        if (x.known != y.known) return false;
        if (x.known) {
            if (x.lo != y.lo || x.hi != y.hi) return false;
        } else {
            // runtime bounds: identical only when they come from the same
            // declaration instance
            if (x.instance != y.instance || x.instance == 0) return false;
        }
    }
    return true;
}

bool sig_identical(const ParamSig& a, const ParamSig& b) {
    if (a.params.size() != b.params.size()) return false;
    for (size_t i = 0; i < a.params.size(); i++) {
        const Param &p = a.params[i], &q = b.params[i];
        if (p.sep != q.sep || p.variable != q.variable || p.optional != q.optional)
            return false;
        if (!type_identity(p.type, q.type)) return false;
    }
    if (!!a.result != !!b.result) return false;
    if (a.result && !type_identity(a.result, b.result)) return false;
    return true;
}

bool structural_equal(TypePtr ta, TypePtr tb) {
    const TypeDescriptor& a = *ta;
    const TypeDescriptor& b = *tb;
    if (a.kind != b.kind) {
        // POINTER INTO behaves as INTEGER for typing purposes
        auto into_int = [](const TypeDescriptor& x, const TypeDescriptor& y) {
            return x.kind == TypeKind::PointerInto && y.kind == TypeKind::Integer;
        };
        return into_int(a, b) || into_int(b, a);
    }
    switch (a.kind) {
        case TypeKind::Boolean:
        case TypeKind::Char:
        case TypeKind::Integer:
        case TypeKind::Real:
        case TypeKind::Single:
        case TypeKind::PointerInto:
            return true;
        case TypeKind::Enum:
            return a.members == b.members;
        case TypeKind::Structure: {
            if (a.overlay != b.overlay) return false;
            if (a.fields.size() != b.fields.size()) return false;
            for (size_t i = 0; i < a.fields.size(); i++) {
                const StructField &f = a.fields[i], &g = b.fields[i];
                if (f.name != g.name || f.constant != g.constant) return false;
                if (!type_identity(f.type, g.type)) return false;
            }
            return true;
        }
        case TypeKind::Array:
            return dims_identical(a.dims, b.dims) && type_identity(a.elem, b.elem);
        case TypeKind::PointerTo: {
            TypePtr x = pointer_target(a), y = pointer_target(b);
            if (x && y) return type_identity(x, y);
            if (!x && !y) {
                if (a.uncommitted && b.uncommitted)
                    return a.uncommitted == b.uncommitted ||
                           a.uncommitted->name == b.uncommitted->name;
                return false;
            }
            return false;
        }
        case TypeKind::DynamicPointer:
            if (!!a.target != !!b.target) return false;
            return !a.target || type_identity(a.target, b.target);
        case TypeKind::Stored:
            return type_identity(a.target, b.target);
        case TypeKind::SubroutineType:
        case TypeKind::FunctionType:
            return sig_identical(*a.sig, *b.sig);
        case TypeKind::Named:
            return false;  // handled before
    }
    return false;
}

}  // namespace

bool type_identity(TypePtr a, TypePtr b) {
    if (!a || !b) return a == b;
    if (a == b) return true;
    bool an = a->kind == TypeKind::Named, bn = b->kind == TypeKind::Named;
    if (an && bn) {
        if (a->name_id == b->name_id) return true;
        // alias-of relation: one name's definition chain reaches the other
        for (TypePtr t = a->def; t && t->kind == TypeKind::Named; t = t->def)
            if (t->name_id == b->name_id) return true;
        for (TypePtr t = b->def; t && t->kind == TypeKind::Named; t = t->def)
            if (t->name_id == a->name_id) return true;
        return false;
    }
    // a typename is identical to its structural definition
    TypePtr ua = unwrap_named(a), ub = unwrap_named(b);
    if (!ua || !ub) return false;
    return structural_equal(ua, ub);
}

bool star_accepts(TypePtr to, TypePtr from) {
    if (type_identity(to, from)) return true;
    TypePtr t = unwrap_named(to), f = unwrap_named(from);
    if (!t || !f) return false;
    if (t->kind == TypeKind::Array && f->kind == TypeKind::Array) {
        if (t->dims.size() != f->dims.size()) return false;
        for (size_t i = 0; i < t->dims.size(); i++) {
            if (t->dims[i].star) continue;
            std::vector<ArrayDim> da{t->dims[i]}, db{f->dims[i]};
            if (!dims_identical(da, db)) return false;
        }
        return star_accepts(t->elem, f->elem);
    }
    if (t->kind == TypeKind::Stored && f->kind == TypeKind::Stored)
        return star_accepts(t->target, f->target);
    if (t->kind == TypeKind::PointerTo && f->kind == TypeKind::PointerTo) {
        TypePtr tt = pointer_target(*t), ft = pointer_target(*f);
        if (tt && ft) return star_accepts(tt, ft);
    }
    return false;
}

std::optional<std::vector<ConversionStep>> conversion_path(TypePtr from, TypePtr to,
                                                           bool from_place) {
    struct Node {
        TypePtr type;
        bool non_deref_used;
        std::vector<ConversionStep> steps;
    };
    TypePtr start = from_place ? make_pointer(from) : from;
    if (star_accepts(to, start)) return std::vector<ConversionStep>{};

    std::deque<Node> queue;
    queue.push_back({start, false, {}});
    const int kMaxSteps = 6;
    while (!queue.empty()) {
        Node n = queue.front();
        queue.pop_front();
        if ((int)n.steps.size() >= kMaxSteps) continue;

        auto try_step = [&](ConvKind k, TypePtr result, int anon = -1)
            -> std::optional<std::vector<ConversionStep>> {
            bool nd = k != ConvKind::Deref;
            if (nd && n.non_deref_used) return std::nullopt;
            auto steps = n.steps;
            steps.push_back({k, result, anon});
            if (star_accepts(to, result)) return steps;
            queue.push_back({result, n.non_deref_used || nd, std::move(steps)});
            return std::nullopt;
        };

        TypePtr u = unwrap_named(n.type);
        if (!u) continue;
        switch (u->kind) {
            case TypeKind::PointerTo: {
                if (TypePtr tgt = pointer_target(*u))
                    if (auto r = try_step(ConvKind::Deref, tgt)) return r;
                break;
            }
            case TypeKind::Integer:
                if (auto r = try_step(ConvKind::IntToReal, ty_real())) return r;
                break;
            case TypeKind::Single:
                if (auto r = try_step(ConvKind::SingleToReal, ty_real())) return r;
                break;
            case TypeKind::Char:
                if (auto r = try_step(ConvKind::CharToInt, ty_integer())) return r;
                break;
            case TypeKind::Array:
                // one-character STRING to CHAR
                if (u->dims.size() == 1 && u->dims[0].known &&
                    u->dims[0].length() == 1 &&
                    unwrap_named(u->elem)->kind == TypeKind::Char) {
                    if (auto r = try_step(ConvKind::String1ToChar, ty_char())) return r;
                }
                break;
            case TypeKind::Structure: {
                for (size_t i = 0; i < u->fields.size(); i++) {
                    if (!u->fields[i].name.empty()) continue;
                    if (auto r = try_step(ConvKind::StructToAnonField,
                                          u->fields[i].type, (int)i))
                        return r;
                }
                break;
            }
            case TypeKind::DynamicPointer:
                if (u->target) {
                    if (auto r = try_step(ConvKind::RestrictedDynToBase,
                                          make_pointer(u->target)))
                        return r;
                }
                break;
            default:
                break;
        }
    }
    return std::nullopt;
}

TypePtr typeof_of(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return t;
    if (u->kind == TypeKind::PointerTo) {
        if (TypePtr tgt = pointer_target(*u)) return tgt;
        return t;
    }
    if (u->kind == TypeKind::Stored) return u->target;
    return t;
}

namespace {

long type_alignment(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return 1;
    switch (u->kind) {
        case TypeKind::Real: return 8;
        case TypeKind::Array: return u->elem ? type_alignment(u->elem) : 1;
        case TypeKind::Structure: {
            long a = 1;
            for (auto& f : u->fields) a = std::max(a, type_alignment(f.type));
            return a;
        }
        default: return 1;
    }
}

}  // namespace

std::optional<long> sizeof_of(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return std::nullopt;
    switch (u->kind) {
        case TypeKind::Boolean: return 4;
        case TypeKind::Char: return 1;
        case TypeKind::Integer: return 4;
        case TypeKind::Single: return 4;
        case TypeKind::Real: return 8;
        case TypeKind::Enum: return 4;
        case TypeKind::PointerTo:
        case TypeKind::PointerInto:
        case TypeKind::DynamicPointer:
        case TypeKind::SubroutineType:
        case TypeKind::FunctionType:
            return 8;
        case TypeKind::Array: {
            auto es = sizeof_of(u->elem);
            if (!es) return std::nullopt;
            long total = *es;
            for (auto& d : u->dims) {
                if (!d.known) return std::nullopt;
                total *= d.length();
            }
            return total;
        }
        case TypeKind::Structure: {
            long off = 0;
            for (auto& f : u->fields) {
                auto fs = sizeof_of(f.type);
                if (!fs) return std::nullopt;
                long align = type_alignment(f.type);
                off = (off + align - 1) / align * align;
                off += *fs;
            }
            return off;
        }
        case TypeKind::Stored:
        case TypeKind::Named:
            return std::nullopt;
    }
    return std::nullopt;
}

TypePtr combine_postfix(TypePtr prefix, const std::vector<PostfixMod>& mods) {
    // Wrappers apply outermost-first in source order:
    //   STRUCTURE(...) A^(10)  ==  POINTER TO ARRAY(10) OF STRUCTURE(...)
    TypePtr result = prefix;
    for (auto it = mods.rbegin(); it != mods.rend(); ++it) {
        if (!it->dims.empty()) result = make_array(it->dims, result);
        if (it->pointer) result = make_pointer(result);
    }
    return result;
}

std::optional<long> slot_count(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return std::nullopt;
    switch (u->kind) {
        case TypeKind::Array: {
            // arrays with any star dim are view-valued (one slot)
            long total = 1;
            for (auto& d : u->dims) {
                if (d.star) return 1;
                if (!d.known) return std::nullopt;
                total *= std::max(0L, d.length());
            }
            auto es = slot_count(u->elem);
            if (!es) return std::nullopt;
            return total * *es;
        }
        case TypeKind::Structure: {
            long total = 0;
            for (auto& f : u->fields) {
                auto fs = slot_count(f.type);
                if (!fs) return std::nullopt;
                total += *fs;
            }
            return total;
        }
        default:
            return 1;
    }
}

std::optional<long> field_slot_offset(TypePtr structure, size_t field_index) {
    TypePtr u = unwrap_named(structure);
    if (!u || u->kind != TypeKind::Structure || field_index >= u->fields.size())
        return std::nullopt;
    long off = 0;
    for (size_t i = 0; i < field_index; i++) {
        auto fs = slot_count(u->fields[i].type);
        if (!fs) return std::nullopt;
        off += *fs;
    }
    return off;
}

namespace {

std::string dims_to_string(const std::vector<ArrayDim>& dims) {
    std::string s = "(";
    for (size_t i = 0; i < dims.size(); i++) {
        if (i) s += ",";
        const ArrayDim& d = dims[i];
        if (d.star) {
            s += "*";
        } else if (d.known) {
            s += std::to_string(d.lo) + ".." + std::to_string(d.hi);
        } else {
            s += d.lo_expr ? detail::print_dim_expr(d.lo_expr.get()) : "?";
            s += "..";
            s += d.hi_expr ? detail::print_dim_expr(d.hi_expr.get()) : "?";
        }
    }
    return s + ")";
}

std::string sig_to_string(const ParamSig& sig) {
    std::string s = "(";
    bool in_optional = false;
    for (size_t i = 0; i < sig.params.size(); i++) {
        const Param& p = sig.params[i];
        if (i) {
            if (p.sep == ",")
                s += "; ";
            else
                s += " " + p.sep + " ";
        }
        if (p.optional && !in_optional) {
            s += "OPTIONAL ";
            in_optional = true;
        }
        if (p.variable) s += "VARIABLE ";
        s += type_to_string(p.type);
        if (!p.name.empty()) s += " " + p.name;
    }
    return s + ")";
}

}  // namespace

std::string type_to_string(TypePtr t) {
    if (!t) return "<none>";
    const TypeDescriptor& d = *t;
    switch (d.kind) {
        case TypeKind::Boolean: return "BOOLEAN";
        case TypeKind::Char: return "CHAR";
        case TypeKind::Integer: return "INTEGER";
        case TypeKind::Real: return "REAL";
        case TypeKind::Single: return "SINGLE";
        case TypeKind::Named: return d.name;
        case TypeKind::Enum: {
            std::string s = "ENUM(";
            for (size_t i = 0; i < d.members.size(); i++) {
                if (i) s += ",";
                s += d.members[i];
            }
            return s + ")";
        }
        case TypeKind::Structure: {
            std::string s = d.overlay ? "STRUCTURED ARRAY(" : "STRUCTURE(";
            for (size_t i = 0; i < d.fields.size(); i++) {
                if (i) s += "; ";
                const StructField& f = d.fields[i];
                if (d.overlay) {
                    s += f.name;
                    TypePtr ft = unwrap_named(f.type);
                    if (ft->kind == TypeKind::Array) s += dims_to_string(ft->dims);
                } else {
                    s += type_to_string(f.type);
                    if (f.constant && f.const_size) s += " CONSTANT";
                    if (!f.name.empty()) s += " " + f.name;
                }
            }
            s += ")";
            if (d.overlay) {
                // element type of the overlay
                for (auto& f : d.fields) {
                    TypePtr ft = unwrap_named(f.type);
                    s += " OF " + type_to_string(ft->kind == TypeKind::Array ? ft->elem
                                                                             : f.type);
                    break;
                }
            }
            return s;
        }
        case TypeKind::Array: {
            // STRING prints as such
            if (d.dims.size() == 1 && d.dims[0].star && d.elem &&
                unwrap_named(d.elem)->kind == TypeKind::Char)
                return "STRING";
            return "ARRAY" + dims_to_string(d.dims) + " OF " + type_to_string(d.elem);
        }
        case TypeKind::PointerTo: {
            if (d.target) {
                TypePtr u = unwrap_named(d.target);
                if (u && u->kind == TypeKind::Stored) {
                    TypePtr arr = unwrap_named(u->target);
                    if (arr && arr->kind == TypeKind::Array && arr->dims.size() == 1 &&
                        arr->dims[0].star) {
                        if (unwrap_named(arr->elem)->kind == TypeKind::Char)
                            return "FILE";
                        return "FILE OF " + type_to_string(arr->elem);
                    }
                }
                return "POINTER TO " + type_to_string(d.target);
            }
            if (d.uncommitted) return "POINTER TO " + d.uncommitted->name;
            return "POINTER TO ?";
        }
        case TypeKind::PointerInto: {
            std::string s = "POINTER INTO ";
            for (size_t i = 0; i < d.into_bases.size(); i++) {
                if (i) s += ", ";
                s += d.into_bases[i];
            }
            return s;
        }
        case TypeKind::DynamicPointer:
            return d.target ? "DYNAMIC POINTER TO " + type_to_string(d.target)
                            : "DYNAMIC POINTER";
        case TypeKind::Stored:
            return "STORED " + type_to_string(d.target);
        case TypeKind::SubroutineType:
            return "SUBROUTINE" + sig_to_string(*d.sig);
        case TypeKind::FunctionType:
            return "FUNCTION" + sig_to_string(*d.sig) + "->" +
                   type_to_string(d.sig->result);
    }
    return "?";
}

bool conversion_graph_ok() {
    // primitive non-deref successors
    struct Edge { TypeKind from; TypeKind to; };
    static const Edge edges[] = {
        {TypeKind::Integer, TypeKind::Real},
        {TypeKind::Single, TypeKind::Real},
        {TypeKind::Char, TypeKind::Integer},
    };
    // single successor per source
    for (size_t i = 0; i < std::size(edges); i++)
        for (size_t j = i + 1; j < std::size(edges); j++)
            if (edges[i].from == edges[j].from) return false;
    // acyclic: walk each chain
    for (auto& e : edges) {
        TypeKind cur = e.to;
        int hops = 0;
        while (hops++ < 8) {
            bool moved = false;
            for (auto& f : edges)
                if (f.from == cur) {
                    cur = f.to;
                    moved = true;
                    if (cur == e.from) return false;
                    break;
                }
            if (!moved) break;
        }
        if (hops >= 8) return false;
    }
    return true;
}

}  // namespace cpl
