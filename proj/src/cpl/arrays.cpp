#include "cpl/arrays.hpp"

#include "cpl/diag.hpp"

namespace cpl {

namespace {

[[noreturn]] void arr_error(const std::string& msg) { throw CplError(msg); }

std::string range_str(long lo, long hi) {
    return std::to_string(lo) + ".." + std::to_string(hi);
}

}  // namespace

ViewData make_view(TypePtr elem, const std::vector<std::pair<long, long>>& bounds) {
    long es = slot_count(elem).value_or(1);
    long count = 1;
    for (auto& b : bounds) count *= std::max(0L, b.second - b.first + 1);
    ViewData v;
    v.storage = allocate_storage(elem, count);
    v.elem = elem;
    v.elem_slots = es;
    // row-major strides; offset chosen so index vector (lo..) maps to slot 0
    v.axes.resize(bounds.size());
    long stride = es;
    for (int k = (int)bounds.size() - 1; k >= 0; k--) {
        v.axes[k] = {bounds[k].first, bounds[k].second, stride};
        stride *= std::max(0L, v.axes[k].length());
    }
    long off = 0;
    for (auto& ax : v.axes) off += ax.lo * ax.stride;
    v.offset = -off;
    return v;
}

ViewData view_of_inline_array(const StoragePtr& st, long offset, TypePtr array_type) {
    TypePtr u = unwrap_named(array_type);
    ViewData v;
    v.storage = st;
    v.elem = u->elem;
    v.elem_slots = slot_count(u->elem).value_or(1);
    long stride = v.elem_slots;
    v.axes.resize(u->dims.size());
    for (int k = (int)u->dims.size() - 1; k >= 0; k--) {
        const ArrayDim& d = u->dims[k];
        v.axes[k] = {d.lo, d.hi, stride};
        stride *= std::max(0L, d.length());
    }
    long off = 0;
    for (auto& ax : v.axes) off += ax.lo * ax.stride;
    v.offset = offset - off;
    return v;
}

std::tuple<long, long, long> view_bounds(const std::vector<Axis>& axes, int axis1) {
    if (axis1 < 1 || axis1 > (int)axes.size())
        arr_error("axis " + std::to_string(axis1) + " out of rank " +
                  std::to_string(axes.size()));
    const Axis& ax = axes[axis1 - 1];
    return {ax.lo, ax.hi, ax.length()};
}

AxisMap select_axes(const AxisMap& in, const std::vector<Sel>& sels, bool rtchecks,
                    bool bounded) {
    AxisMap out;
    out.offset = in.offset;
    size_t next_axis = 0;
    std::vector<Axis> axes = in.axes;

    for (size_t si = 0; si < sels.size(); si++) {
        const Sel& s = sels[si];
        if (s.kind == Sel::Permute) {
            // only meaningful at the front of a selector list
            int n = s.permute_n;
            if (n < 1 || n > (int)(axes.size() - next_axis))
                arr_error("index permutation *" + std::to_string(n) +
                          " out of rank " + std::to_string(axes.size() - next_axis));
            Axis moved = axes[next_axis + n - 1];
            axes.erase(axes.begin() + next_axis + n - 1);
            axes.insert(axes.begin() + next_axis, moved);
            // permute does not consume the axis slot entirely: the permuted
            // first axis is kept whole
            out.axes.push_back(axes[next_axis]);
            next_axis++;
            continue;
        }
        if (s.kind == Sel::StarRun) {
            if (next_axis + s.star_run > axes.size())
                arr_error("compound index consumes " + std::to_string(s.star_run) +
                          " axes but only " +
                          std::to_string(axes.size() - next_axis) + " remain");
            AxisMap tmp;
            tmp.offset = 0;
            for (int k = 0; k < s.star_run; k++) tmp.axes.push_back(axes[next_axis + k]);
            AxisMap fused = compound_axes(tmp, 0, s.star_run);
            out.offset += fused.offset;  // renumbering shift of the fused axis
            out.axes.push_back(fused.axes[0]);
            next_axis += s.star_run;
            continue;
        }
        if (next_axis >= axes.size())
            arr_error("too many subscripts: rank is " + std::to_string(axes.size()));
        const Axis& ax = axes[next_axis];

        if (s.kind == Sel::Single) {
            if ((rtchecks || bounded) && (s.index < ax.lo || s.index > ax.hi))
                arr_error("index " + std::to_string(s.index) + " out of bounds " +
                          range_str(ax.lo, ax.hi));
            out.offset += s.index * ax.stride;
            next_axis++;
            continue;
        }

        // Affine: offset + sum of coef*(range) terms, each term one new axis
        long base = s.offset;
        out.offset += base * ax.stride;
        for (const AffineTerm& t : s.terms) {
            SelRange r = t.range;
            if (r.star) {
                // maximal admissible range for this term
                if (t.coef == 0) arr_error("zero stride in subarray selector");
                long lo_lim = ax.lo - base, hi_lim = ax.hi - base;
                long a, b;
                if (t.coef > 0) {
                    a = (lo_lim >= 0 ? (lo_lim + t.coef - 1) / t.coef
                                     : lo_lim / t.coef);
                    b = (hi_lim >= 0 ? hi_lim / t.coef
                                     : (hi_lim - t.coef + 1) / t.coef);
                } else {
                    a = (hi_lim >= 0 ? -(hi_lim / -t.coef)
                                     : (-hi_lim + (-t.coef) - 1) / (-t.coef));
                    b = (lo_lim <= 0 ? (-lo_lim) / (-t.coef)
                                     : -((lo_lim + (-t.coef) - 1) / (-t.coef)));
                }
                r.lo = a;
                r.hi = b;
            }
            if (rtchecks && !r.star && r.hi >= r.lo) {
                long first = base + t.coef * (t.coef > 0 ? r.lo : r.hi);
                long last = base + t.coef * (t.coef > 0 ? r.hi : r.lo);
                if (first < ax.lo || last > ax.hi)
                    arr_error("subarray range " + range_str(r.lo, r.hi) +
                              " outside bounds " + range_str(ax.lo, ax.hi));
            }
            out.axes.push_back({r.lo, r.hi, t.coef * ax.stride});
        }
        next_axis++;
    }
    // untouched trailing axes stay whole
    for (; next_axis < axes.size(); next_axis++) out.axes.push_back(axes[next_axis]);
    return out;
}

ViewData select(const ViewData& v, const std::vector<Sel>& sels, bool rtchecks) {
    AxisMap m{v.offset, v.axes};
    AxisMap r = select_axes(m, sels, rtchecks, false);
    ViewData out = v;
    out.offset = r.offset;
    out.axes = std::move(r.axes);
    return out;
}

StoredViewData select_stored(const StoredViewData& v, const std::vector<Sel>& sels,
                             bool rtchecks) {
    AxisMap m{v.offset, v.axes};
    AxisMap r = select_axes(m, sels, rtchecks, false);
    StoredViewData out = v;
    out.offset = r.offset;
    out.axes = std::move(r.axes);
    out.auto_extend = false;
    if (!sels.empty() && !v.axes.empty() && v.auto_extend) {
        // a selection that keeps the leading open axis whole keeps extension
        if (!r.axes.empty() && r.axes[0].stride == v.axes[0].stride &&
            sels[0].kind == Sel::Affine && sels[0].terms.size() == 1 &&
            sels[0].terms[0].range.star)
            out.auto_extend = true;
    }
    return out;
}

ViewData permute(const ViewData& v, int n) {
    if (n < 1 || n > (int)v.axes.size())
        arr_error("index permutation *" + std::to_string(n) + " out of rank " +
                  std::to_string(v.axes.size()));
    ViewData out = v;
    Axis moved = out.axes[n - 1];
    out.axes.erase(out.axes.begin() + n - 1);
    out.axes.insert(out.axes.begin(), moved);
    return out;
}

AxisMap compound_axes(const AxisMap& in, int pos, int m) {
    if (pos < 0 || m < 1 || pos + m > (int)in.axes.size())
        arr_error("compound index out of rank");
    for (int k = pos; k < pos + m - 1; k++) {
        const Axis &a = in.axes[k], &b = in.axes[k + 1];
        if (a.stride != b.stride * std::max(0L, b.length()))
            arr_error("compound index requires contiguous axes");
    }
    long len = 1;
    for (int k = pos; k < pos + m; k++) len *= std::max(0L, in.axes[k].length());
    long inner_stride = in.axes[pos + m - 1].stride;
    long first = 0;
    for (int k = pos; k < pos + m; k++) first += in.axes[k].lo * in.axes[k].stride;

    AxisMap out;
    out.offset = in.offset + first;  // fused axis numbered from 0
    for (int k = 0; k < pos; k++) out.axes.push_back(in.axes[k]);
    out.axes.push_back({0, len - 1, inner_stride});
    for (size_t k = pos + m; k < in.axes.size(); k++) out.axes.push_back(in.axes[k]);
    return out;
}

ViewData field_slice(const ViewData& v, int field_index) {
    TypePtr elem = unwrap_named(v.elem);
    if (!elem || elem->kind != TypeKind::Structure)
        arr_error("field selection on a non-structure array");
    auto off = field_slot_offset(elem, field_index);
    if (!off) arr_error("field offset depends on run-time sizes");
    ViewData out = v;
    out.offset += *off;
    out.elem = elem->fields[field_index].type;
    out.elem_slots = slot_count(out.elem).value_or(1);
    return out;
}

void enumerate(const std::vector<Axis>& axes, long offset,
               const std::function<void(long)>& fn) {
    if (axes.empty()) {
        fn(offset);
        return;
    }
    std::vector<long> idx(axes.size());
    for (size_t k = 0; k < axes.size(); k++) {
        if (axes[k].length() <= 0) return;  // empty view
        idx[k] = axes[k].lo;
    }
    while (true) {
        long off = offset;
        for (size_t k = 0; k < axes.size(); k++) off += idx[k] * axes[k].stride;
        fn(off);
        int k = (int)axes.size() - 1;
        while (k >= 0) {
            if (++idx[k] <= axes[k].hi) break;
            idx[k] = axes[k].lo;
            k--;
        }
        if (k < 0) break;
    }
}

long element_count(const std::vector<Axis>& axes) {
    long n = 1;
    for (auto& ax : axes) n *= std::max(0L, ax.length());
    return n;
}

bool congruent(const std::vector<Axis>& a, const std::vector<Axis>& b) {
    if (a.size() != b.size()) return false;
    for (size_t k = 0; k < a.size(); k++)
        if (a[k].lo != b[k].lo || a[k].hi != b[k].hi) return false;
    return true;
}

}  // namespace cpl
