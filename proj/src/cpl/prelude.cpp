#include <cmath>

#include "cpl/arrays.hpp"
#include "cpl/interp.hpp"
#include "cpl/parser.hpp"

namespace cpl {

namespace {

[[noreturn]] void dom_error(const std::string& msg) { throw CplError(msg); }

TypeKind kind_of(TypePtr t) {
    TypePtr u = t ? unwrap_named(t) : nullptr;
    return u ? u->kind : TypeKind::Named;
}

bool numeric_kind(TypeKind k) {
    return k == TypeKind::Integer || k == TypeKind::Real || k == TypeKind::Single ||
           k == TypeKind::Char || k == TypeKind::PointerInto;
}

bool array_of_numeric(TypePtr t) {
    TypePtr u = t ? unwrap_named(t) : nullptr;
    if (!u) return false;
    if (u->kind == TypeKind::Structure && u->overlay) return true;
    if (u->kind != TypeKind::Array) return false;
    return numeric_kind(kind_of(u->elem));
}

// resolve potential places/pointers down to a usable view
const ViewData* as_view(const Value& v) { return v.get_if<ViewData>(); }

double scalar_real(const Value& v) { return Machine::to_real(v); }

void for_each_elem(Machine& m, const Value& v, const std::function<void(double)>& fn) {
    if (auto* view = as_view(v)) {
        enumerate(view->axes, view->offset, [&](long off) {
            fn(scalar_real(view->storage->slots[off]));
        });
        return;
    }
    m.rt_error("expected an ARRAY value");
}

std::shared_ptr<FunctionMember> native(const char* doc, NativeMatcher matcher,
                                       TypePtr result, NativeFn fn,
                                       NativeResultFn result_fn = nullptr) {
    auto m = std::make_shared<FunctionMember>();
    m->matcher = std::move(matcher);
    m->native = std::move(fn);
    m->is_function = true;
    m->doc = doc;
    m->result_fn = std::move(result_fn);
    auto sig = std::make_shared<ParamSig>();
    sig->result = std::move(result);
    m->sig = std::move(sig);
    return m;
}

// result type = the (dereferenced) argument type
TypePtr same_as_arg(const std::vector<ActualInfo>& a) {
    if (a.empty() || !a[0].type) return ty_real();
    TypePtr u = unwrap_named(a[0].type);
    if (u->kind == TypeKind::PointerInto) return ty_integer();
    return a[0].type;
}

// result type = element type of the argument array
TypePtr elem_of_arg(const std::vector<ActualInfo>& a) {
    if (a.empty() || !a[0].type) return ty_real();
    TypePtr u = unwrap_named(a[0].type);
    if (u->kind == TypeKind::Array && u->elem) return u->elem;
    if (u->kind == TypeKind::Structure && u->overlay) {
        TypePtr f0 = unwrap_named(u->fields[0].type);
        return f0->kind == TypeKind::Array ? f0->elem : u->fields[0].type;
    }
    return ty_real();
}

// unified numeric type over all scalar arguments
TypePtr unified_numeric(const std::vector<ActualInfo>& a) {
    bool all_int = true;
    for (auto& x : a) {
        TypeKind k = kind_of(x.type);
        if (!(k == TypeKind::Integer || k == TypeKind::Char ||
              k == TypeKind::PointerInto))
            all_int = false;
    }
    return all_int ? ty_integer() : ty_real();
}

// the permuted array type
TypePtr transposed_type(const std::vector<ActualInfo>& a) {
    if (a.empty() || !a[0].type) return nullptr;
    TypePtr u = unwrap_named(a[0].type);
    if (u->kind != TypeKind::Array || u->dims.size() < 2) return a[0].type;
    std::vector<ArrayDim> dims = u->dims;
    ArrayDim second = dims[1];
    dims.erase(dims.begin() + 1);
    dims.insert(dims.begin(), second);
    return make_array(dims, u->elem);
}

NativeMatcher args_numeric(size_t n) {
    return [n](const std::vector<ActualInfo>& a) -> std::optional<int> {
        if (a.size() != n) return std::nullopt;
        for (auto& x : a)
            if (!numeric_kind(kind_of(x.type))) return std::nullopt;
        return 0;
    };
}

NativeMatcher one_array() {
    return [](const std::vector<ActualInfo>& a) -> std::optional<int> {
        if (a.size() != 1) return std::nullopt;
        return array_of_numeric(a[0].type) ? std::optional<int>(0) : std::nullopt;
    };
}

NativeMatcher any_array_or_string(int want_rank /*0=any*/) {
    return [want_rank](const std::vector<ActualInfo>& a) -> std::optional<int> {
        if (a.size() != 1) return std::nullopt;
        TypePtr u = a[0].type ? unwrap_named(a[0].type) : nullptr;
        if (!u) return std::nullopt;
        if (u->kind == TypeKind::Structure && u->overlay) return 0;
        if (u->kind == TypeKind::PointerTo && pointer_target(*u)) {
            TypePtr tu = unwrap_named(pointer_target(*u));
            if (tu->kind == TypeKind::Array || tu->kind == TypeKind::Stored) return 1;
        }
        if (u->kind == TypeKind::Stored) return 0;
        if (u->kind != TypeKind::Array) return std::nullopt;
        if (want_rank && (int)u->dims.size() < want_rank) return std::nullopt;
        return 0;
    };
}

void declare_set(Scope& scope, const std::string& name,
                 std::vector<std::shared_ptr<FunctionMember>> members) {
    Symbol* sym = declare_raw(scope, name, SymbolKind::Overloads, nullptr);
    sym->set = std::make_shared<OverloadSet>();
    sym->set->name = name;
    sym->set->members = std::move(members);
}

// normalizes LO/HI/LENGTH arguments to axes
std::vector<Axis> axes_of(Machine& m, const Value& v) {
    if (auto* view = v.get_if<ViewData>()) return view->axes;
    if (auto* sv = v.get_if<StoredViewData>()) return sv->axes;
    if (auto* ref = v.get_if<MemRef>()) {
        TypePtr u = ref->type ? unwrap_named(ref->type) : nullptr;
        if (u && u->kind == TypeKind::Structure && u->overlay)
            return {{0, u->overlay_len - 1, 1}};
        if (u && u->kind == TypeKind::Array)
            return view_of_inline_array(ref->storage, ref->offset, ref->type).axes;
    }
    if (auto* f = v.get_if<FilePtr>()) {
        if (!*f) m.rt_error("file is not open");
        m.rt_error("cannot take bounds of a plain FILE");
    }
    m.rt_error("expected an ARRAY");
}

Value real_fn(Machine& m, const char* name, double (*fn)(double),
              std::vector<Value>& args) {
    double x = scalar_real(args[0]);
    double r = fn(x);
    if (std::isnan(r) && !std::isnan(x))
        dom_error(std::string(name) + ": domain error");
    if ((std::string(name) == "LOG" || std::string(name) == "SQRT") &&
        std::isinf(r) && !std::isinf(x))
        dom_error(std::string(name) + ": domain error");
    (void)m;
    return Value{r};
}

}  // namespace

double Machine::rand01() {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    double u;
    do {
        u = dist(rng);
    } while (u <= 0.0 || u >= 1.0);
    return u;
}

double Machine::gauss() {
    double u1 = rand01();
    double u2 = rand01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(M_PI * u2);
}

std::shared_ptr<Scope> make_prelude_scope() {
    auto scope = std::make_shared<Scope>();
    scope->block_kind = ScopeKind::Program;

    auto num1 = args_numeric(1);

    // trigonometric and transcendental functions
    struct RealSpec {
        const char* name;
        double (*fn)(double);
    };
    static const RealSpec reals[] = {
        {"SIN", std::sin},  {"COS", std::cos},  {"TAN", std::tan},
        {"ATAN", std::atan}, {"EXP", std::exp},
    };
    for (auto& r : reals) {
        const char* nm = r.name;
        double (*fp)(double) = r.fn;
        declare_set(*scope, nm,
                    {native(nm, num1, ty_real(),
                            [nm, fp](Machine& m, const SourcePos&, std::vector<Value>& a) {
                                return real_fn(m, nm, fp, a);
                            })});
    }
    declare_set(*scope, "LOG",
                {native("LOG", num1, ty_real(),
                        [](Machine& m, const SourcePos&, std::vector<Value>& a) {
                            double x = scalar_real(a[0]);
                            if (x <= 0) dom_error("LOG: domain error");
                            (void)m;
                            return Value{std::log(x)};
                        })});
    declare_set(*scope, "SQRT",
                {native("SQRT", num1, ty_real(),
                        [](Machine& m, const SourcePos&, std::vector<Value>& a) {
                            double x = scalar_real(a[0]);
                            if (x < 0) dom_error("SQRT: domain error");
                            (void)m;
                            return Value{std::sqrt(x)};
                        })});

    // ABS: scalars keep their kind; arrays give the modulus
    declare_set(
        *scope, "ABS",
        {native("ABS(scalar)", num1, ty_real(),
                [](Machine&, const SourcePos&, std::vector<Value>& a) -> Value {
                    if (auto* i = a[0].get_if<int32_t>())
                        return Value{(int32_t)std::abs((long)*i)};
                    if (auto* f = a[0].get_if<float>()) return Value{std::fabs(*f)};
                    return Value{std::fabs(scalar_real(a[0]))};
                },
                same_as_arg),
         native("ABS(array)", one_array(), ty_real(),
                [](Machine& m, const SourcePos&, std::vector<Value>& a) {
                    double acc = 0;
                    for_each_elem(m, a[0], [&](double x) { acc += x * x; });
                    return Value{std::sqrt(acc)};
                })});

    declare_set(*scope, "CEILING",
                {native("CEILING", num1, ty_integer(),
                        [](Machine&, const SourcePos&, std::vector<Value>& a) {
                            return Value{(int32_t)std::ceil(scalar_real(a[0]))};
                        })});
    declare_set(*scope, "FLOOR",
                {native("FLOOR", num1, ty_integer(),
                        [](Machine&, const SourcePos&, std::vector<Value>& a) {
                            return Value{(int32_t)std::floor(scalar_real(a[0]))};
                        })});
    // ROUND: half away from zero
    declare_set(*scope, "ROUND",
                {native("ROUND", num1, ty_integer(),
                        [](Machine&, const SourcePos&, std::vector<Value>& a) {
                            double x = scalar_real(a[0]);
                            return Value{(int32_t)(x >= 0 ? std::floor(x + 0.5)
                                                          : std::ceil(x - 0.5))};
                        })});

    // MAX/MIN over scalars (2+) and over one array
    auto scalars2plus = [](const std::vector<ActualInfo>& a) -> std::optional<int> {
        if (a.size() < 2) return std::nullopt;
        for (auto& x : a)
            if (!numeric_kind(kind_of(x.type))) return std::nullopt;
        return 0;
    };
    auto fold_minmax = [](bool is_max) {
        return [is_max](Machine& m, const SourcePos&, std::vector<Value>& a) -> Value {
            bool all_int = true;
            for (auto& v : a)
                if (!v.is<int32_t>() && !v.is<char>()) all_int = false;
            if (all_int) {
                long best = Machine::to_int(a[0]);
                for (auto& v : a) {
                    long x = Machine::to_int(v);
                    if (is_max ? x > best : x < best) best = x;
                }
                return Value{(int32_t)best};
            }
            double best = scalar_real(a[0]);
            for (auto& v : a) {
                double x = scalar_real(v);
                if (is_max ? x > best : x < best) best = x;
            }
            (void)m;
            return Value{best};
        };
    };
    auto array_minmax = [](bool is_max) {
        return [is_max](Machine& m, const SourcePos&, std::vector<Value>& a) -> Value {
            auto* view = as_view(a[0]);
            if (!view || element_count(view->axes) == 0)
                m.rt_error(std::string(is_max ? "MAX" : "MIN") + " of an empty array");
            bool is_int = kind_of(view->elem) == TypeKind::Integer;
            bool first = true;
            double best = 0;
            long besti = 0;
            enumerate(view->axes, view->offset, [&](long off) {
                double x = scalar_real(view->storage->slots[off]);
                if (first || (is_max ? x > best : x < best)) {
                    best = x;
                    besti = off;
                }
                first = false;
            });
            (void)besti;
            if (is_int) return Value{(int32_t)(long)best};
            return Value{best};
        };
    };
    declare_set(*scope, "MAX",
                {native("MAX(a,b,...)", scalars2plus, ty_real(), fold_minmax(true),
                        unified_numeric),
                 native("MAX(array)", one_array(), ty_real(), array_minmax(true),
                        elem_of_arg)});
    declare_set(*scope, "MIN",
                {native("MIN(a,b,...)", scalars2plus, ty_real(), fold_minmax(false),
                        unified_numeric),
                 native("MIN(array)", one_array(), ty_real(), array_minmax(false),
                        elem_of_arg)});

    auto argminmax = [](bool is_max) {
        return [is_max](Machine& m, const SourcePos&, std::vector<Value>& a) -> Value {
            auto* view = as_view(a[0]);
            if (!view) m.rt_error("ARGMAX/ARGMIN require an ARRAY");
            if (view->axes.size() != 1)
                m.rt_error("ARGMAX/ARGMIN require a one-dimensional ARRAY");
            const Axis& ax = view->axes[0];
            if (ax.length() <= 0) m.rt_error("ARGMAX of an empty array");
            long best_idx = ax.lo;
            double best = scalar_real(view->storage->slots[view->offset +
                                                           ax.lo * ax.stride]);
            for (long i = ax.lo + 1; i <= ax.hi; i++) {
                double x =
                    scalar_real(view->storage->slots[view->offset + i * ax.stride]);
                if (is_max ? x > best : x < best) {
                    best = x;
                    best_idx = i;
                }
            }
            return Value{(int32_t)best_idx};
        };
    };
    declare_set(*scope, "ARGMAX",
                {native("ARGMAX(array)", one_array(), ty_integer(), argminmax(true))});
    declare_set(*scope, "ARGMIN",
                {native("ARGMIN(array)", one_array(), ty_integer(), argminmax(false))});

    declare_set(*scope, "MAXABS",
                {native("MAXABS(array)", one_array(), ty_real(),
                        [](Machine& m, const SourcePos&, std::vector<Value>& a) -> Value {
                            auto* view = as_view(a[0]);
                            if (!view) m.rt_error("MAXABS requires an ARRAY");
                            bool is_int = kind_of(view->elem) == TypeKind::Integer;
                            double best = 0;
                            for_each_elem(m, a[0], [&](double x) {
                                best = std::max(best, std::fabs(x));
                            });
                            if (is_int) return Value{(int32_t)(long)best};
                            return Value{best};
                        },
                        elem_of_arg)});
    declare_set(
        *scope, "NORM",
        {native("NORM(scalar)", num1, ty_real(),
                [](Machine&, const SourcePos&, std::vector<Value>& a) {
                    double x = scalar_real(a[0]);
                    return Value{x * x};
                }),
         native("NORM(array)", one_array(), ty_real(),
                [](Machine& m, const SourcePos&, std::vector<Value>& a) {
                    double acc = 0;
                    for_each_elem(m, a[0], [&](double x) { acc += x * x; });
                    return Value{acc};
                })});

    declare_set(*scope, "ODD",
                {native("ODD", args_numeric(1), ty_boolean(),
                        [](Machine&, const SourcePos&, std::vector<Value>& a) {
                            return Value{(Machine::to_int(a[0]) & 1) != 0};
                        })});

    declare_set(*scope, "RAND",
                {native("RAND", args_numeric(0), ty_real(),
                        [](Machine& m, const SourcePos&, std::vector<Value>&) {
                            return Value{m.rand01()};
                        })});
    declare_set(*scope, "GAUSS",
                {native("GAUSS", args_numeric(0), ty_real(),
                        [](Machine& m, const SourcePos&, std::vector<Value>&) {
                            return Value{m.gauss()};
                        })});

    // bounds access
    auto axis_fn = [](int axis, bool hi) {
        return [axis, hi](Machine& m, const SourcePos&, std::vector<Value>& a) -> Value {
            auto axes = axes_of(m, a[0]);
            auto [lo, h, len] = view_bounds(axes, axis);
            (void)len;
            return Value{(int32_t)(hi ? h : lo)};
        };
    };
    for (int i = 0; i <= 3; i++) {
        std::string lo_name = i == 0 ? "LO" : "LO" + std::to_string(i);
        std::string hi_name = i == 0 ? "HI" : "HI" + std::to_string(i);
        int axis = i == 0 ? 1 : i;
        declare_set(*scope, lo_name,
                    {native(lo_name.c_str(), any_array_or_string(axis), ty_integer(),
                            axis_fn(axis, false))});
        declare_set(*scope, hi_name,
                    {native(hi_name.c_str(), any_array_or_string(axis), ty_integer(),
                            axis_fn(axis, true))});
    }
    declare_set(*scope, "LENGTH",
                {native("LENGTH", any_array_or_string(1), ty_integer(),
                        [](Machine& m, const SourcePos&, std::vector<Value>& a) {
                            auto axes = axes_of(m, a[0]);
                            auto [lo, hi, len] = view_bounds(axes, 1);
                            (void)lo;
                            (void)hi;
                            return Value{(int32_t)len};
                        })});
    declare_set(*scope, "TRANSPOSED",
                {native("TRANSPOSED", any_array_or_string(2), nullptr,
                        [](Machine& m, const SourcePos&, std::vector<Value>& a) -> Value {
                            auto* view = as_view(a[0]);
                            if (!view) m.rt_error("TRANSPOSED requires an ARRAY");
                            return Value{permute(*view, 2)};
                        },
                        transposed_type)});

    declare_set(*scope, "EOF",
                {native("EOF", [](const std::vector<ActualInfo>& a) -> std::optional<int> {
                            return a.size() <= 1 ? std::optional<int>(0) : std::nullopt;
                        },
                        ty_boolean(),
                        [](Machine& m, const SourcePos&, std::vector<Value>& a) {
                            FilePtr f = a.empty() ? m.fin : a[0].as<FilePtr>();
                            if (!f) m.rt_error("EOF: file is not open");
                            return Value{fh_eof(*f)};
                        })});
    declare_set(
        *scope, "INPUTREADY",
        {native("INPUTREADY",
                [](const std::vector<ActualInfo>& a) -> std::optional<int> {
                    return a.size() <= 2 ? std::optional<int>(0) : std::nullopt;
                },
                ty_boolean(),
                [](Machine& m, const SourcePos&, std::vector<Value>& a) {
                    FilePtr f = m.fin;
                    double timeout = 0;
                    for (auto& v : a) {
                        if (auto* fp = v.get_if<FilePtr>())
                            f = *fp;
                        else
                            timeout = scalar_real(v);
                    }
                    if (!f) m.rt_error("INPUTREADY: file is not open");
                    return Value{fh_input_ready(*f, timeout)};
                })});

    // conversion builtins, reachable from the keyword parser
    declare_set(*scope, "__conv_CHAR",
                {native("CHAR(INTEGER)", args_numeric(1), ty_char(),
                        [](Machine&, const SourcePos&, std::vector<Value>& a) {
                            return Value{(char)Machine::to_int(a[0])};
                        })});
    declare_set(
        *scope, "__conv_INTEGER",
        {native("INTEGER(x)",
                [](const std::vector<ActualInfo>& a) -> std::optional<int> {
                    if (a.size() != 1) return std::nullopt;
                    TypeKind k = kind_of(a[0].type);
                    return (numeric_kind(k) || k == TypeKind::Boolean)
                               ? std::optional<int>(0)
                               : std::nullopt;
                },
                ty_integer(),
                [](Machine&, const SourcePos&, std::vector<Value>& a) -> Value {
                    if (auto* b = a[0].get_if<bool>()) return Value{(int32_t)(*b ? 1 : 0)};
                    if (a[0].is<int32_t>()) return a[0];
                    if (auto* c = a[0].get_if<char>())
                        return Value{(int32_t)(unsigned char)*c};
                    return Value{(int32_t)std::floor(scalar_real(a[0]))};
                })});
    declare_set(*scope, "__conv_REAL",
                {native("REAL(x)", args_numeric(1), ty_real(),
                        [](Machine&, const SourcePos&, std::vector<Value>& a) {
                            return Value{scalar_real(a[0])};
                        })});
    declare_set(*scope, "__conv_SINGLE",
                {native("SINGLE(x)", args_numeric(1), ty_single(),
                        [](Machine&, const SourcePos&, std::vector<Value>& a) {
                            return Value{(float)scalar_real(a[0])};
                        })});

    // predefined streams and variables; values bound by Machine::setup
    TypePtr file_t = make_file_type(ty_char());
    for (const char* nm : {"stdin", "stdout", "stderr"}) {
        Symbol* s = declare_raw(*scope, nm, SymbolKind::Constant, file_t);
        s->constant = true;
    }
    {
        ArrayDim d;
        d.star = true;
        Symbol* s = declare_raw(*scope, "COMMANDLINE", SymbolKind::Constant,
                                make_array({d}, make_string_type()));
        s->constant = true;
    }
    declare_raw(*scope, "ERRORMESSAGE", SymbolKind::Variable, make_string_type());
    return scope;
}

}  // namespace cpl
