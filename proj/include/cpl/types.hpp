#ifndef CPL_TYPES_HPP
#define CPL_TYPES_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cpl {

struct Expr;
struct TypeDescriptor;
using TypePtr = std::shared_ptr<const TypeDescriptor>;

enum class TypeKind {
    Boolean,
    Char,
    Integer,
    Real,
    Single,
    Enum,
    Structure,
    Array,
    PointerTo,
    PointerInto,
    DynamicPointer,
    Stored,
    SubroutineType,
    FunctionType,
    Named,
};

// One array dimension. Bounds are either compile-time constants (known),
// a `*` wildcard, or runtime expressions tagged with the declaration
// instance they came from.
struct ArrayDim {
    bool star = false;
    bool known = false;
    long lo = 1, hi = 0;
    std::shared_ptr<Expr> lo_expr;
    std::shared_ptr<Expr> hi_expr;
    long instance = 0;

    long length() const { return hi - lo + 1; }
};

struct StructField {
    std::string name;  // empty for anonymous fields
    TypePtr type;
    bool constant = false;
    bool const_size = false;  // INTEGER CONSTANT field of a variable-size structure
};

// One formal parameter. `sep` is the verbatim separator that precedes it in
// a call; "(" marks the first parameter.
struct Param {
    std::string sep = ",";
    std::string name;
    TypePtr type;
    bool variable = false;
    bool optional = false;
    std::shared_ptr<Expr> def;
};

struct ParamSig {
    std::vector<Param> params;
    TypePtr result;  // null for subroutines

    size_t positional_count() const {
        size_t n = 0;
        for (auto& p : params)
            if (!p.optional) n++;
        return n;
    }
};

// Placeholder for POINTER TO <not-yet-declared-name>; filled in when the
// type declaration is met.
struct UncommittedSlot {
    std::string name;
    TypePtr resolved;
};

struct TypeDescriptor {
    TypeKind kind;

    // Named
    std::string name;
    long name_id = 0;
    TypePtr def;

    // Enum
    std::vector<std::string> members;

    // Structure (overlay set for STRUCTURED ARRAY)
    std::vector<StructField> fields;
    bool overlay = false;
    long overlay_len = 0;

    // Array
    std::vector<ArrayDim> dims;
    TypePtr elem;

    // PointerTo / Stored / DynamicPointer bound
    TypePtr target;
    std::shared_ptr<UncommittedSlot> uncommitted;

    // PointerInto
    std::vector<std::string> into_bases;

    // Subroutine / Function types
    std::shared_ptr<ParamSig> sig;

    bool is_numeric() const {
        return kind == TypeKind::Integer || kind == TypeKind::Real ||
               kind == TypeKind::Single;
    }
};

// Primitive singletons
TypePtr ty_boolean();
TypePtr ty_char();
TypePtr ty_integer();
TypePtr ty_real();
TypePtr ty_single();

TypePtr make_enum(std::vector<std::string> members);
TypePtr make_structure(std::vector<StructField> fields);
TypePtr make_array(std::vector<ArrayDim> dims, TypePtr elem);
TypePtr make_static_array(const std::vector<std::pair<long, long>>& bounds, TypePtr elem);
TypePtr make_pointer(TypePtr target);
TypePtr make_uncommitted_pointer(std::shared_ptr<UncommittedSlot> slot);
TypePtr make_pointer_into(std::vector<std::string> bases);
TypePtr make_dynamic_pointer(TypePtr bound);
TypePtr make_stored(TypePtr wrapped);
TypePtr make_named(std::string name, TypePtr def);
TypePtr make_subroutine_type(std::shared_ptr<ParamSig> sig);
TypePtr make_function_type(std::shared_ptr<ParamSig> sig);
TypePtr make_string_type();               // ARRAY(*) OF CHAR
TypePtr make_string_literal_type(long n); // ARRAY(0..n-1) OF CHAR
TypePtr make_file_type(TypePtr elem);     // POINTER TO STORED ARRAY(*) OF elem

// Follows Named chains (and resolved uncommitted pointers) to the first
// structural descriptor.
TypePtr unwrap_named(TypePtr t);
// Target of a committed or resolved-uncommitted pointer; null otherwise.
TypePtr pointer_target(const TypeDescriptor& ptr);

bool type_identity(TypePtr a, TypePtr b);

enum class ConvKind {
    Deref,
    AddressOf,
    IntToReal,
    SingleToReal,
    CharToInt,
    String1ToChar,
    StructToAnonField,
    RestrictedDynToBase,
    ScalarToUnitArray,  // scalar actual bound to an ARRAY(*) formal
    GenericPointer,     // any pointer bound to an uncommitted-pointer formal
};

struct ConversionStep {
    ConvKind kind;
    TypePtr result;
    int anon_field = -1;  // StructToAnonField: field ordinal
};

// Shortest implicit-conversion chain from `from` to `to`; `from_place` marks
// that the source is an address (variable identifier). At most one non-deref
// step per path. Empty vector = identity; nullopt = no path.
std::optional<std::vector<ConversionStep>> conversion_path(TypePtr from, TypePtr to,
                                                           bool from_place = false);

// `to` accepts `from` directly: identity, or formal-style match where `*`
// dims accept any actual bounds.
bool star_accepts(TypePtr to, TypePtr from);

TypePtr typeof_of(TypePtr t);
std::optional<long> sizeof_of(TypePtr t);

struct PostfixMod {
    bool pointer = false;               // '^'
    std::vector<ArrayDim> dims;         // '(dims)'
};
TypePtr combine_postfix(TypePtr prefix, const std::vector<PostfixMod>& mods);

// Number of value slots this type occupies inline (inside an array element
// or structure); nullopt when it depends on runtime values.
std::optional<long> slot_count(TypePtr t);

// Field offset in slots within a structure with static layout.
std::optional<long> field_slot_offset(TypePtr structure, size_t field_index);

std::string type_to_string(TypePtr t);

long fresh_type_instance_id();

// Startup self-check: the primitive implicit-conversion relation is acyclic
// and single-successor.
bool conversion_graph_ok();

}  // namespace cpl

#endif
