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

Value* find_cell(const FramePtr& env, const Symbol* sym) {
    for (Frame* f = env.get(); f; f = f->parent.get()) {
        auto it = f->cells.find(sym);
        if (it != f->cells.end()) return &it->second;
    }
    return nullptr;
}

bool is_star_array_type(TypePtr t) {
    TypePtr u = t ? unwrap_named(t) : nullptr;
    if (!u || u->kind != TypeKind::Array) return false;
    for (auto& d : u->dims)
        if (d.star) return true;
    return false;
}

}  // namespace

// ---------------- calls ----------------

Value Machine::eval_call(const Expr& e, FramePtr& env) {
    // indirect call through a subroutine variable
    if (e.a && !e.set) {
        Value callee = eval(*e.a, env);
        auto* sv = callee.get_if<SubrValue>();
        if (!sv || !sv->member) rt_error("call through an unassigned subroutine variable");
        std::vector<Value> positional;
        for (auto& arg : e.args) positional.push_back(eval(*arg.value, env));
        FramePtr decl_env = sv->env ? sv->env : global;
        return invoke_user(sv->member, std::move(positional), {}, decl_env, e.pos);
    }

    std::shared_ptr<FunctionMember> member = e.member;
    std::vector<Value> positional;
    std::vector<std::pair<std::string, Value>> named;

    if (e.dynamic_call) {
        // re-resolve with run-time type tags
        std::vector<ActualInfo> infos;
        std::vector<Value> vals;
        for (auto& arg : e.args) {
            Value v = eval(*arg.value, env);
            TypePtr st = arg.value->type;
            bool place = arg.value->place;
            if (kind_of(st) == TypeKind::DynamicPointer) {
                if (auto* m = v.get_if<MemRef>()) {
                    if (m->null()) rt_error("dynamic dispatch on a NULL pointer");
                    st = make_pointer(m->type);
                    place = false;
                }
            }
            if (arg.name.empty()) infos.push_back({arg.sep, st, place});
            vals.push_back(std::move(v));
        }
        std::vector<std::string> opt_names;
        for (auto& arg : e.args)
            if (!arg.name.empty()) opt_names.push_back(arg.name);
        std::string err;
        auto result = resolve_overload(*e.set, infos, opt_names, &err);
        if (!result || result->dynamic_defer || !result->member)
            rt_error("no function matches the run-time argument types of '" +
                     e.set->name + "'");
        member = result->member;
        size_t pi = 0;
        for (size_t i = 0; i < e.args.size(); i++) {
            if (!e.args[i].name.empty()) {
                named.push_back({e.args[i].name, vals[i]});
                continue;
            }
            Value v = vals[i];
            // apply the conversions the resolver chose
            for (auto& step : result->conversions[pi]) {
                Expr dummy;
                dummy.conv = {step};
                v = apply_conversions(dummy, std::move(v), env);
            }
            positional.push_back(std::move(v));
            pi++;
        }
    } else {
        if (!member) rt_error("unresolved call");
        for (auto& arg : e.args) {
            Value v = eval(*arg.value, env);
            if (arg.name.empty())
                positional.push_back(std::move(v));
            else
                named.push_back({arg.name, std::move(v)});
        }
    }

    if (member->native) {
        current_pos = e.pos;
        return member->native(*this, e.pos, positional);
    }
    FramePtr decl_env;
    auto it = decl_envs.find(member->decl);
    if (it != decl_envs.end()) decl_env = it->second;
    if (!decl_env) decl_env = global;
    return invoke_user(member, std::move(positional), named, decl_env, e.pos);
}

Value Machine::call_member(const std::shared_ptr<FunctionMember>& member,
                           std::vector<Value> positional,
                           const std::vector<std::pair<std::string, Value>>& named,
                           FramePtr& caller_env, SourcePos pos) {
    if (member->native) return member->native(*this, pos, positional);
    FramePtr decl_env;
    auto it = decl_envs.find(member->decl);
    if (it != decl_envs.end()) decl_env = it->second;
    if (!decl_env) decl_env = caller_env;
    return invoke_user(member, std::move(positional), named, decl_env, pos);
}

Value Machine::invoke_user(const std::shared_ptr<FunctionMember>& member,
                           std::vector<Value> positional,
                           const std::vector<std::pair<std::string, Value>>& named,
                           FramePtr& decl_env, SourcePos pos) {
    const Stmt* decl = member->decl;
    if (!decl) rt_error("call of a FOLLOWS prototype with no body");
    FramePtr frame = std::make_shared<Frame>();
    frame->parent = decl_env;
    frame->block = decl;
    FramePtr fenv = frame;

    const ParamSig& sig = *member->sig;
    // positional parameters
    size_t pi = 0;
    for (auto& p : sig.params) {
        if (p.optional) break;
        if (pi >= positional.size()) rt_error("missing argument for " + p.name);
        Value v = positional[pi++];
        Symbol* sym = decl->scope ? decl->scope->find_local(p.name) : nullptr;
        if (!sym) continue;  // unnamed prototype parameter
        bind_param(fenv, sym, p, std::move(v));
    }
    // optional parameters: named values or defaults
    for (auto& p : sig.params) {
        if (!p.optional) continue;
        Symbol* sym = decl->scope ? decl->scope->find_local(p.name) : nullptr;
        if (!sym) continue;
        const Value* given = nullptr;
        for (auto& [n, v] : named)
            if (n == p.name) given = &v;
        if (given) {
            bind_param(fenv, sym, p, *given);
        } else {
            Value v = eval(*p.def, fenv);
            bind_param(fenv, sym, p, std::move(v));
        }
    }
    // dependent-dimension checks for array formals
    if (rtchecks) {
        size_t ai = 0;
        for (auto& p : sig.params) {
            if (p.optional) break;
            if (ai >= positional.size()) break;
            const Value& v = positional[ai++];
            TypePtr u = p.type ? unwrap_named(p.type) : nullptr;
            if (!u || u->kind != TypeKind::Array) continue;
            auto* view = v.get_if<ViewData>();
            if (!view) continue;
            if (view->axes.size() != u->dims.size()) {
                rt_error("argument rank does not match " + type_to_string(p.type));
            }
            for (size_t k = 0; k < u->dims.size(); k++) {
                const ArrayDim& d = u->dims[k];
                if (d.star) continue;
                long lo = d.known ? d.lo
                                  : (d.lo_expr ? to_int(eval(*d.lo_expr, fenv)) : 1);
                long hi = d.known ? d.hi : to_int(eval(*d.hi_expr, fenv));
                if (view->axes[k].lo != lo || view->axes[k].hi != hi)
                    rt_error("array argument bounds " +
                             std::to_string(view->axes[k].lo) + ".." +
                             std::to_string(view->axes[k].hi) +
                             " do not match the declared " + std::to_string(lo) +
                             ".." + std::to_string(hi));
            }
        }
    }
    // RESULT variable
    Symbol* result_sym = nullptr;
    if (member->is_function && decl->scope) {
        result_sym = decl->scope->find_local("RESULT");
        if (result_sym) {
            TypePtr rt = sig.result;
            Value cell = alloc_result(rt, fenv);
            fenv->cells[result_sym] = cell;
        }
    }

    try {
        exec_body(decl->body, fenv);
    } catch (ExitSignal& e) {
        if (e.target != decl->name) throw;
    }

    if (result_sym) {
        Value* cell = find_cell(fenv, result_sym);
        if (!cell) return Value{};
        if (auto* m = cell->get_if<MemRef>()) {
            Place p{false, *m, {}, m->type};
            return load_place(p);
        }
        return *cell;
    }
    return Value{};
}

void Machine::bind_param(FramePtr& fenv, Symbol* sym, const Param& p, Value v) {
    TypePtr u = p.type ? unwrap_named(p.type) : nullptr;
    bool array_formal = u && (u->kind == TypeKind::Array || u->kind == TypeKind::Stored);
    if (p.variable) {
        // reassignable copy
        auto st = std::make_shared<ArrayStorage>();
        st->slots.push_back(std::move(v));
        fenv->cells[sym] = Value{MemRef{st, 0, p.type}};
        return;
    }
    if (array_formal) {
        fenv->cells[sym] = std::move(v);  // aliasing view
        return;
    }
    if (u && u->kind == TypeKind::Structure) {
        // constant copy of the structure
        if (auto* m = v.get_if<MemRef>()) {
            long n = slot_count(u).value_or(0);
            if (n == 0 && m->storage)
                n = (long)m->storage->slots.size() - m->offset;
            auto st = std::make_shared<ArrayStorage>();
            st->slots.resize((size_t)n);
            for (long i = 0; i < n; i++)
                st->slots[i] = m->storage->slots[m->offset + i];
            fenv->cells[sym] = Value{MemRef{st, 0, p.type}};
            return;
        }
    }
    fenv->cells[sym] = std::move(v);  // constant scalar binding
}

Value Machine::alloc_result(TypePtr rt, FramePtr& fenv) {
    TypePtr u = rt ? unwrap_named(rt) : nullptr;
    if (u && u->kind == TypeKind::Array && !is_star_array_type(rt)) {
        std::vector<std::pair<long, long>> bounds;
        for (auto& d : u->dims) {
            long lo = d.known ? d.lo : (d.lo_expr ? to_int(eval(*d.lo_expr, fenv)) : 1);
            long hi = d.known ? d.hi : to_int(eval(*d.hi_expr, fenv));
            bounds.push_back({lo, hi});
        }
        return Value{make_view(u->elem, bounds)};
    }
    if (u && u->kind == TypeKind::Structure && slot_count(u)) {
        auto st = allocate_storage(u, 1);
        return Value{MemRef{st, 0, rt}};
    }
    auto st = std::make_shared<ArrayStorage>();
    st->slots.push_back(default_scalar(rt));
    return Value{MemRef{st, 0, rt}};
}

// ---------------- WRITE ----------------

WriteOverride Machine::write_override_hook(FramePtr& env) {
    return nullptr;  // overrides resolved per item at compile time
}

void Machine::render_item(std::string& out, const Value& v, TypePtr type, const Fmt& fmt,
                          FramePtr& env, const FilePtr& dest,
                          const std::shared_ptr<FunctionMember>& override_member) {
    if (override_member) {
        FramePtr caller = env;
        std::vector<Value> args = {Value{dest}, v};
        call_member(override_member, std::move(args), {}, caller, current_pos);
        return;
    }
    render_value_text(out, v, type, fmt, nullptr, dest);
}

void Machine::exec_write(const Stmt& s, FramePtr& env) {
    FilePtr dest = fout;
    FilePtr temp_close;
    if (s.dest) {
        Value d = eval(*s.dest, env);
        if (auto* f = d.get_if<FilePtr>()) {
            if (!*f) rt_error("WRITE to a NULL file");
            dest = *f;
        } else if (auto* view = d.get_if<ViewData>()) {
            dest = open_path(string_of_view(*view), true);
            temp_close = dest;
        } else {
            rt_error("WRITE destination must be a FILE or a file name");
        }
    }

    if (s.write_binary) {
        for (auto& item : s.write_items) {
            Value v = eval(*item.value, env);
            write_binary_value(*dest, v, item.value->type);
        }
        if (temp_close) fh_flush(*temp_close);
        return;
    }

    Fmt scope_fmt = current_fmt(env);
    std::string out;
    for (auto& item : s.write_items) {
        if (item.comma_before) out += "\t";
        Fmt fmt = scope_fmt;
        if (item.width >= 0 || item.precision >= 0)
            fmt = Fmt{item.width, item.precision};
        if (s.by_name && !item.label.empty()) out += item.label + "=";
        Value v = eval(*item.value, env);
        if (item.override_member) {
            fh_write_bytes(*dest, out.data(), out.size());
            out.clear();
            render_item(out, v, item.value->type, fmt, env, dest, item.override_member);
            continue;
        }
        render_item(out, v, item.value->type, fmt, env, dest, nullptr);
    }
    if (!s.suppress_newline) out += "\n";
    fh_write_bytes(*dest, out.data(), out.size());
    if (s.suppress_newline) fh_flush(*dest);
    if (temp_close) fh_flush(*temp_close);
}

// ---------------- READ ----------------

Value Machine::read_text_value(FileHandle& h, TypePtr type, FramePtr& env) {
    TypePtr u = unwrap_named(type);
    if (!u) rt_error("cannot READ this type");
    switch (u->kind) {
        case TypeKind::Array: {
            if (is_star_array_type(type)) {
                // read a line into a fresh string
                std::string line;
                int c;
                // skip a leftover newline
                c = fh_getc(h);
                if (c != '\n' && c != EOF) fh_ungetc(h, c);
                while ((c = fh_getc(h)) != EOF && c != '\n') line += (char)c;
                return make_string_value(line);
            }
            std::vector<std::pair<long, long>> bounds;
            for (auto& d : u->dims) {
                long lo = d.known ? d.lo : (d.lo_expr ? to_int(eval(*d.lo_expr, env)) : 1);
                long hi = d.known ? d.hi : to_int(eval(*d.hi_expr, env));
                bounds.push_back({lo, hi});
            }
            ViewData view = make_view(u->elem, bounds);
            enumerate(view.axes, view.offset, [&](long off) {
                Value ev = read_text_value(h, u->elem, env);
                if (auto* m = ev.get_if<MemRef>()) {
                    long n = slot_count(u->elem).value_or(1);
                    for (long i = 0; i < n; i++)
                        view.storage->slots[off + i] = m->storage->slots[m->offset + i];
                } else if (auto* sv = ev.get_if<ViewData>()) {
                    long i = off;
                    enumerate(sv->axes, sv->offset, [&](long so) {
                        view.storage->slots[i++] = sv->storage->slots[so];
                    });
                } else {
                    view.storage->slots[off] = ev;
                }
            });
            return Value{view};
        }
        case TypeKind::Structure: {
            auto st = allocate_storage(u, 1);
            long off = 0;
            for (auto& f : u->fields) {
                Value fv = read_text_value(h, f.type, env);
                long n = slot_count(f.type).value_or(1);
                if (auto* m = fv.get_if<MemRef>()) {
                    for (long i = 0; i < n; i++)
                        st->slots[off + i] = m->storage->slots[m->offset + i];
                } else if (auto* sv = fv.get_if<ViewData>()) {
                    long i = off;
                    enumerate(sv->axes, sv->offset, [&](long so) {
                        st->slots[i++] = sv->storage->slots[so];
                    });
                } else {
                    st->slots[off] = fv;
                }
                off += n;
            }
            return Value{MemRef{st, 0, type}};
        }
        default:
            return parse_value_text(h, type);
    }
}

void Machine::read_into_place(FileHandle& h, const ExprPtr& target, FramePtr& env,
                              bool by_name, const std::string& label) {
    if (by_name) {
        std::string name = label.empty() ? print_expr(*target) : label;
        match_literal_text(h, name);
        skip_input_whitespace(h);
        int c = fh_getc(h);
        if (c != '=') throw CplError("expected '=' after " + name + " in input");
    }
    TypePtr t = target->type;
    TypePtr u = t ? unwrap_named(t) : nullptr;
    if (u && u->kind == TypeKind::Array) {
        if (is_star_array_type(t)) {
            // line read into a rebindable string cell
            Value line = read_text_value(h, t, env);
            Place p = eval_place(*target, env);
            p.mem.storage->slots[p.mem.offset] = line;
            return;
        }
        Value targetv = eval(*target, env);
        if (auto* view = targetv.get_if<ViewData>()) {
            enumerate(view->axes, view->offset, [&](long off) {
                TypePtr et = view->elem;
                TypePtr eu = unwrap_named(et);
                if (eu->kind == TypeKind::Structure || eu->kind == TypeKind::Array) {
                    Value ev = read_text_value(h, et, env);
                    long n = slot_count(et).value_or(1);
                    if (auto* m = ev.get_if<MemRef>())
                        for (long i = 0; i < n; i++)
                            view->storage->slots[off + i] =
                                m->storage->slots[m->offset + i];
                } else {
                    view->storage->slots[off] = parse_value_text(h, et);
                }
            });
            return;
        }
        if (auto* sv = targetv.get_if<StoredViewData>()) {
            enumerate(sv->axes, sv->offset, [&](long idx) {
                StoredRef ref{sv->file, idx * sv->elem_size + sv->field_byte_shift,
                              sv->elem};
                stored_write(ref, read_text_value(h, sv->elem, env));
            });
            return;
        }
        rt_error("cannot READ into this array");
    }
    Place p = eval_place(*target, env);
    Value v = read_text_value(h, p.type ? p.type : t, env);
    store_place(p, v);
}

bool Machine::do_read(const ReadSpec& spec, FramePtr& env, bool expression_form) {
    FilePtr src = fin;
    FilePtr temp_close;
    if (spec.from) {
        Value f = eval(*spec.from, env);
        if (auto* fp = f.get_if<FilePtr>()) {
            if (!*fp) rt_error("READ from a NULL file");
            src = *fp;
        } else if (auto* view = f.get_if<ViewData>()) {
            src = open_path(string_of_view(*view), false);
            temp_close = src;
        } else {
            rt_error("READ source must be a FILE or a file name");
        }
    }

    auto attempt = [&](size_t start, size_t end) -> bool {
        for (size_t i = start; i < end; i++) {
            const ReadTarget& t = spec.targets[i];
            if (spec.binary) {
                if (t.is_literal) rt_error("literals are not allowed in BINARY READ");
                Place p = eval_place(*t.place, env);
                Value v = read_binary_value(*src, p.type);
                store_place(p, v);
                continue;
            }
            if (t.is_literal) {
                match_literal_text(*src, t.literal);
                continue;
            }
            read_into_place(*src, t.place, env, spec.by_name, "");
        }
        return true;
    };

    bool ok = true;
    try {
        if (spec.targets.empty()) {
            if (!spec.binary) {
                // consume through the next newline
                int c;
                while ((c = fh_getc(*src)) != EOF && c != '\n') {
                }
                if (c == EOF && expression_form) ok = false;
            }
        } else {
            // split into OR-alternatives of AND/comma runs
            std::vector<std::pair<size_t, size_t>> runs;
            size_t start = 0;
            for (size_t i = 1; i <= spec.targets.size(); i++) {
                if (i == spec.targets.size() || spec.targets[i].conj == 'O') {
                    runs.push_back({start, i});
                    start = i;
                }
            }
            bool any = false;
            std::string first_err;
            for (size_t r = 0; r < runs.size(); r++) {
                fh_mark(*src);
                try {
                    attempt(runs[r].first, runs[r].second);
                    fh_unmark(*src);
                    any = true;
                    break;
                } catch (CplError& e) {
                    if (first_err.empty()) first_err = e.message;
                    fh_rewind(*src);
                }
            }
            if (!any) {
                if (expression_form) {
                    ok = false;
                } else {
                    throw CplError(first_err.empty() ? "READ failed" : first_err,
                                   rtchecks ? current_pos : SourcePos{});
                }
            }
        }
    } catch (CplError&) {
        if (expression_form) return false;
        throw;
    }
    return ok;
}

void Machine::exec_read(const Stmt& s, FramePtr& env) {
    fh_flush(*fout);
    do_read(*s.read, env, false);
}

}  // namespace cpl
