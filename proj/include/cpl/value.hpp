#ifndef CPL_VALUE_HPP
#define CPL_VALUE_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "cpl/types.hpp"

namespace cpl {

struct Value;
struct Stmt;
struct Frame;
struct FunctionMember;
struct FileHandle;
using FilePtr = std::shared_ptr<FileHandle>;

struct ArrayStorage {
    std::vector<Value> slots;
    bool freed = false;
};
using StoragePtr = std::shared_ptr<ArrayStorage>;

struct Axis {
    long lo = 1, hi = 0;
    long stride = 1;
    long length() const { return hi - lo + 1; }
};

// Affine view over flat slot storage.
struct ViewData {
    StoragePtr storage;
    TypePtr elem;
    long elem_slots = 1;
    long offset = 0;
    std::vector<Axis> axes;
};

// Affine view over a file; addressing in bytes of serialized elements.
struct StoredViewData {
    FilePtr file;
    TypePtr elem;
    long elem_size = 0;  // serialized bytes
    long offset = 0;     // element units relative to file start
    long field_byte_shift = 0;  // field slice within each element
    std::vector<Axis> axes;
    bool auto_extend = false;
};

// Typed slot address (also the representation of POINTER values).
struct MemRef {
    StoragePtr storage;
    long offset = 0;
    TypePtr type;
    bool null() const { return !storage; }
};

// Typed disk address for STORED element access.
struct StoredRef {
    FilePtr file;
    long byte_offset = 0;
    TypePtr type;
};

struct EnumValue {
    TypePtr type;
    long ordinal = 0;
};

struct SubrValue {
    std::shared_ptr<FunctionMember> member;
    std::shared_ptr<Frame> env;  // declaration environment (nested subroutines)
};

struct Value {
    std::variant<std::monostate, bool, char, int32_t, double, float, EnumValue,
                 MemRef, StoredRef, ViewData, StoredViewData, FilePtr, SubrValue>
        v;

    Value() = default;
    template <typename T>
    Value(T x) : v(std::move(x)) {}

    bool empty() const { return std::holds_alternative<std::monostate>(v); }
    template <typename T>
    bool is() const { return std::holds_alternative<T>(v); }
    template <typename T>
    T& as() { return std::get<T>(v); }
    template <typename T>
    const T& as() const { return std::get<T>(v); }
    template <typename T>
    const T* get_if() const { return std::get_if<T>(&v); }
};

// Zero-value for a scalar slot of the given type.
Value default_scalar(TypePtr t);

// Allocates zero-initialized storage laid out for `count` inline elements of
// type `elem` (slot layout per slot_count).
StoragePtr allocate_storage(TypePtr elem, long count);
void default_init_range(ArrayStorage& st, long offset, TypePtr t);

// Builds a string value (CHAR view indexed from 0) holding `s`.
Value make_string_value(const std::string& s);
// Extracts the characters of a CHAR view.
std::string string_of_view(const ViewData& view);

bool is_string_view(const Value& val);

}  // namespace cpl

#endif
