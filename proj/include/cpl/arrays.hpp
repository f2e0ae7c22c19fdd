#ifndef CPL_ARRAYS_HPP
#define CPL_ARRAYS_HPP

#include <functional>
#include <tuple>
#include <vector>

#include "cpl/value.hpp"

namespace cpl {

// Evaluated dimension selector.
struct SelRange {
    bool star = false;
    long lo = 0, hi = -1;
};

struct AffineTerm {
    long coef = 1;
    SelRange range;
};

struct Sel {
    enum Kind { Single, Affine, Permute, StarRun } kind = Single;
    long index = 0;                 // Single
    long offset = 0;                // Affine constant part
    std::vector<AffineTerm> terms;  // Affine: one new axis per term
    int permute_n = 1;              // Permute
    int star_run = 2;               // StarRun length
};

// Fresh row-major view over newly allocated storage.
ViewData make_view(TypePtr elem, const std::vector<std::pair<long, long>>& bounds);
// Row-major view over an inline array element at a slot address.
ViewData view_of_inline_array(const StoragePtr& st, long offset, TypePtr array_type);

// (LO, HI, LENGTH) of the given 1-based axis. Throws CplError when out of rank.
std::tuple<long, long, long> view_bounds(const std::vector<Axis>& axes, int axis1);

// Applies a selector chain; no elements move. Bounds are validated when
// `rtchecks` is set. Works for memory and stored views alike (axis math only).
struct AxisMap {
    long offset = 0;
    std::vector<Axis> axes;
};
AxisMap select_axes(const AxisMap& in, const std::vector<Sel>& sels, bool rtchecks,
                    bool bounded);  // bounded=false skips range validation
ViewData select(const ViewData& v, const std::vector<Sel>& sels, bool rtchecks);
StoredViewData select_stored(const StoredViewData& v, const std::vector<Sel>& sels,
                             bool rtchecks);

ViewData permute(const ViewData& v, int n);
// Fuses `m` consecutive axes starting at `pos` (0-based); requires row-major
// contiguity, throws CplError otherwise.
AxisMap compound_axes(const AxisMap& in, int pos, int m);

// Shifts a view of an ARRAY OF STRUCTURE onto one field.
ViewData field_slice(const ViewData& v, int field_index);

// Row-major enumeration of element slot offsets.
void enumerate(const std::vector<Axis>& axes, long offset,
               const std::function<void(long)>& fn);
long element_count(const std::vector<Axis>& axes);
bool congruent(const std::vector<Axis>& a, const std::vector<Axis>& b);

}  // namespace cpl

#endif
