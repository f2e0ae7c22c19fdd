#include "cpl/value.hpp"

#include "cpl/arrays.hpp"

namespace cpl {

Value default_scalar(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return Value{};
    switch (u->kind) {
        case TypeKind::Boolean: return Value{false};
        case TypeKind::Char: return Value{char(0)};
        case TypeKind::Integer: return Value{int32_t(0)};
        case TypeKind::Real: return Value{0.0};
        case TypeKind::Single: return Value{0.0f};
        case TypeKind::Enum: return Value{EnumValue{u, 0}};
        case TypeKind::PointerInto: return Value{int32_t(0)};
        case TypeKind::PointerTo: {
            // FILE-like pointers hold file descriptors
            TypePtr tgt = pointer_target(*u);
            if (tgt && unwrap_named(tgt) && unwrap_named(tgt)->kind == TypeKind::Stored)
                return Value{FilePtr{}};
            return Value{MemRef{nullptr, 0, tgt}};
        }
        case TypeKind::DynamicPointer: return Value{MemRef{nullptr, 0, nullptr}};
        case TypeKind::Stored: return Value{StoredViewData{}};
        case TypeKind::SubroutineType:
        case TypeKind::FunctionType: return Value{SubrValue{}};
        case TypeKind::Array: return Value{ViewData{}};  // star-dim view cell
        default: return Value{};
    }
}

void default_init_range(ArrayStorage& st, long offset, TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u) return;
    switch (u->kind) {
        case TypeKind::Structure: {
            long off = offset;
            for (auto& f : u->fields) {
                default_init_range(st, off, f.type);
                off += slot_count(f.type).value_or(1);
            }
            break;
        }
        case TypeKind::Array: {
            auto sc = slot_count(u);
            if (sc && *sc >= 1 && !u->dims.empty() && !u->dims[0].star) {
                long es = slot_count(u->elem).value_or(1);
                long n = *sc / (es == 0 ? 1 : es);
                for (long i = 0; i < n; i++)
                    default_init_range(st, offset + i * es, u->elem);
            } else {
                st.slots[offset] = default_scalar(t);
            }
            break;
        }
        default:
            st.slots[offset] = default_scalar(t);
            break;
    }
}

StoragePtr allocate_storage(TypePtr elem, long count) {
    auto st = std::make_shared<ArrayStorage>();
    long es = slot_count(elem).value_or(1);
    st->slots.resize(size_t(std::max(0L, count) * es));
    for (long i = 0; i < count; i++)
        default_init_range(*st, i * es, elem);
    return st;
}

Value make_string_value(const std::string& s) {
    auto st = std::make_shared<ArrayStorage>();
    st->slots.reserve(s.size());
    for (char c : s) st->slots.push_back(Value{c});
    ViewData v;
    v.storage = st;
    v.elem = ty_char();
    v.elem_slots = 1;
    v.offset = 0;
    v.axes = {{0, (long)s.size() - 1, 1}};
    return Value{v};
}

std::string string_of_view(const ViewData& view) {
    std::string out;
    enumerate(view.axes, view.offset, [&](long off) {
        const Value& c = view.storage->slots[off];
        if (auto* p = c.get_if<char>()) out += *p;
    });
    return out;
}

bool is_string_view(const Value& val) {
    auto* v = val.get_if<ViewData>();
    return v && v->elem && unwrap_named(v->elem)->kind == TypeKind::Char;
}

}  // namespace cpl
