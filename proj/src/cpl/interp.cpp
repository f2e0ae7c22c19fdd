#include "cpl/interp.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <set>

#include "cpl/arrays.hpp"
#include "cpl/diag.hpp"
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

long eval_dim(Machine& mach, const std::shared_ptr<Expr>& e, FramePtr& env) {
    if (!e) throw CplError("array bound is not available");
    Value v = mach.eval(*e, env);
    return Machine::to_int(v);
}

}  // namespace

Machine::Machine() {
    fin = wrap_std_stream(stdin, "stdin", false);
    fout = wrap_std_stream(stdout, "stdout", true);
    ferr = wrap_std_stream(stderr, "stderr", true);
}

void Machine::rt_error(const std::string& msg) {
    throw CplError(msg, rtchecks ? current_pos : SourcePos{});
}

double Machine::to_real(const Value& v) {
    if (auto* d = v.get_if<double>()) return *d;
    if (auto* i = v.get_if<int32_t>()) return (double)*i;
    if (auto* f = v.get_if<float>()) return (double)*f;
    if (auto* c = v.get_if<char>()) return (double)(unsigned char)*c;
    if (auto* b = v.get_if<bool>()) return *b ? 1.0 : 0.0;
    throw CplError("expected a numeric value");
}

long Machine::to_int(const Value& v) {
    if (auto* i = v.get_if<int32_t>()) return *i;
    if (auto* c = v.get_if<char>()) return (long)(unsigned char)*c;
    if (auto* d = v.get_if<double>()) return (long)*d;
    if (auto* f = v.get_if<float>()) return (long)*f;
    if (auto* b = v.get_if<bool>()) return *b ? 1 : 0;
    throw CplError("expected an INTEGER value");
}

bool Machine::value_equal(const Value& a, const Value& b) {
    if (a.is<int32_t>() && b.is<int32_t>()) return a.as<int32_t>() == b.as<int32_t>();
    if ((a.is<double>() || a.is<int32_t>() || a.is<float>() || a.is<char>()) &&
        (b.is<double>() || b.is<int32_t>() || b.is<float>() || b.is<char>())) {
        if (a.is<char>() && b.is<char>()) return a.as<char>() == b.as<char>();
        return to_real(a) == to_real(b);
    }
    if (a.is<bool>() && b.is<bool>()) return a.as<bool>() == b.as<bool>();
    if (a.is<EnumValue>() && b.is<EnumValue>())
        return a.as<EnumValue>().ordinal == b.as<EnumValue>().ordinal;
    if (a.is<MemRef>() && b.is<MemRef>()) {
        const MemRef &x = a.as<MemRef>(), &y = b.as<MemRef>();
        if (x.null() || y.null()) return x.null() == y.null();
        return x.storage == y.storage && x.offset == y.offset;
    }
    if (a.is<FilePtr>() && b.is<FilePtr>()) return a.as<FilePtr>() == b.as<FilePtr>();
    if (a.is<SubrValue>() && b.is<SubrValue>())
        return a.as<SubrValue>().member == b.as<SubrValue>().member;
    if (a.is<ViewData>() && b.is<ViewData>()) {
        const ViewData &x = a.as<ViewData>(), &y = b.as<ViewData>();
        if (element_count(x.axes) != element_count(y.axes)) return false;
        std::vector<long> xs, ys;
        enumerate(x.axes, x.offset, [&](long off) { xs.push_back(off); });
        enumerate(y.axes, y.offset, [&](long off) { ys.push_back(off); });
        for (size_t i = 0; i < xs.size(); i++)
            if (!value_equal(x.storage->slots[xs[i]], y.storage->slots[ys[i]]))
                return false;
        return true;
    }
    if (a.is<MemRef>() || b.is<MemRef>()) {
        // null against file and similar mismatches
        if (auto* m = a.get_if<MemRef>())
            if (m->null() && b.is<FilePtr>()) return !b.as<FilePtr>();
        if (auto* m = b.get_if<MemRef>())
            if (m->null() && a.is<FilePtr>()) return !a.as<FilePtr>();
    }
    return false;
}

void Machine::setup(Scope& program_scope) {
    global = std::make_shared<Frame>();
    global->block = nullptr;

    auto bind = [&](const char* name, Value v) {
        if (Symbol* sym = program_scope.find(name)) global->cells[sym] = std::move(v);
    };
    bind("stdin", Value{fin});
    bind("stdout", Value{fout});
    bind("stderr", Value{ferr});
    if (Symbol* em = program_scope.find("ERRORMESSAGE")) {
        errormessage_sym = em;
        auto st = std::make_shared<ArrayStorage>();
        st->slots.push_back(make_string_value(""));
        global->cells[em] = Value{MemRef{st, 0, make_string_type()}};
    }
    if (Symbol* cl = program_scope.find("COMMANDLINE")) {
        auto st = std::make_shared<ArrayStorage>();
        for (auto& s : commandline) st->slots.push_back(make_string_value(s));
        ViewData v;
        v.storage = st;
        v.elem = make_string_type();
        v.elem_slots = 1;
        v.offset = 0;
        v.axes = {{0, (long)commandline.size() - 1, 1}};
        global->cells[cl] = Value{v};
    }
}

int Machine::run(const std::vector<StmtPtr>& stmts) {
    try {
        exec_body(stmts, global);
        fh_flush(*fout);
        return 0;
    } catch (StopSignal&) {
        fh_flush(*fout);
        stop_requested = true;
        return 0;
    } catch (CplError& e) {
        fh_flush(*fout);
        std::string msg = e.message;
        if (e.pos.valid())
            msg = e.pos.file + ":" + std::to_string(e.pos.line) + ": " + msg;
        msg += "\n";
        fh_write_bytes(*ferr, msg.data(), msg.size());
        fh_flush(*ferr);
        return 1;
    } catch (ExitSignal&) {
        fh_flush(*fout);
        return 0;
    }
}

Fmt Machine::current_fmt(const FramePtr& env) const {
    for (Frame* f = env.get(); f; f = f->parent.get())
        if (f->has_fmt) return f->fmt;
    return {};
}

// ---------------- places ----------------

Value Machine::load_place(const Place& p) {
    if (p.stored) return stored_read(p.disk);
    const MemRef& m = p.mem;
    if (m.null()) rt_error("NULL-pointer dereference");
    if (m.storage->freed) rt_error("access to FREEd memory");
    TypePtr u = m.type ? unwrap_named(m.type) : nullptr;
    if (u && u->kind == TypeKind::Structure) return Value{m};
    if (u && u->kind == TypeKind::Array && !u->dims.empty() && !u->dims[0].star &&
        slot_count(u))
        return Value{view_of_inline_array(m.storage, m.offset, m.type)};
    if (m.offset < 0 || m.offset >= (long)m.storage->slots.size())
        rt_error("memory access outside its allocation");
    return m.storage->slots[m.offset];
}

void Machine::store_place(const Place& p, const Value& v) {
    if (p.stored) {
        stored_write(p.disk, v);
        return;
    }
    const MemRef& m = p.mem;
    if (m.null()) rt_error("NULL-pointer dereference");
    if (m.storage->freed) rt_error("store to FREEd memory");
    TypePtr u = m.type ? unwrap_named(m.type) : nullptr;
    if (u && u->kind == TypeKind::Structure) {
        const MemRef* src = v.get_if<MemRef>();
        if (!src || src->null()) rt_error("structure assignment from a null value");
        long n = slot_count(u).value_or(0);
        if (n == 0)
            n = (long)src->storage->slots.size() - src->offset;
        for (long i = 0; i < n; i++)
            m.storage->slots[m.offset + i] = src->storage->slots[src->offset + i];
        return;
    }
    if (u && u->kind == TypeKind::Array && !u->dims.empty() && !u->dims[0].star &&
        slot_count(u)) {
        const ViewData* src = v.get_if<ViewData>();
        if (!src) rt_error("array assignment from a non-array value");
        ViewData dst = view_of_inline_array(m.storage, m.offset, m.type);
        if (element_count(dst.axes) != element_count(src->axes))
            rt_error("arrays are not congruent in assignment");
        std::vector<long> offs;
        enumerate(src->axes, src->offset, [&](long off) { offs.push_back(off); });
        size_t i = 0;
        enumerate(dst.axes, dst.offset, [&](long off) {
            dst.storage->slots[off] = src->storage->slots[offs[i++]];
        });
        return;
    }
    if (m.offset < 0 || m.offset >= (long)m.storage->slots.size())
        rt_error("memory store outside its allocation");
    m.storage->slots[m.offset] = v;
}

// ---------------- allocation ----------------

static long dynamic_struct_slots(Machine& mach, TypePtr struct_t, FramePtr& env,
                                 StoragePtr storage, long base, bool fill,
                                 const std::vector<Value>* size_vals);

static Value alloc_value(Machine& mach, TypePtr type,
                         const std::vector<ExprPtr>& size_args, FramePtr& env) {
    TypePtr u = unwrap_named(type);
    if (!u) throw CplError("cannot allocate this type");
    switch (u->kind) {
        case TypeKind::Array: {
            bool has_star = false;
            for (auto& d : u->dims)
                if (d.star) has_star = true;
            if (has_star) {
                auto st = std::make_shared<ArrayStorage>();
                st->slots.push_back(Value{ViewData{}});
                return Value{MemRef{st, 0, type}};
            }
            std::vector<std::pair<long, long>> bounds;
            for (auto& d : u->dims) {
                if (d.known) {
                    bounds.push_back({d.lo, d.hi});
                } else {
                    long lo = d.lo_expr ? eval_dim(mach, d.lo_expr, env) : 1;
                    long hi = eval_dim(mach, d.hi_expr, env);
                    bounds.push_back({lo, hi});
                }
            }
            if (!slot_count(u->elem))
                throw CplError("array elements must have a fixed size");
            return Value{make_view(u->elem, bounds)};
        }
        case TypeKind::Structure: {
            if (!u->overlay && !slot_count(u).has_value()) {
                std::vector<Value> sizes;
                for (auto& e : size_args) sizes.push_back(mach.eval(*e, env));
                auto st = std::make_shared<ArrayStorage>();
                long total =
                    dynamic_struct_slots(mach, type, env, nullptr, 0, false, &sizes);
                st->slots.resize((size_t)total);
                dynamic_struct_slots(mach, type, env, st, 0, true, &sizes);
                return Value{MemRef{st, 0, type}};
            }
            auto st = allocate_storage(u, 1);
            return Value{MemRef{st, 0, type}};
        }
        case TypeKind::Stored: {
            FilePtr f = make_temp_file();
            return Value{make_stored_view(f, type)};
        }
        case TypeKind::PointerTo: {
            TypePtr tgt = pointer_target(*u);
            auto st = std::make_shared<ArrayStorage>();
            if (tgt && unwrap_named(tgt)->kind == TypeKind::Stored)
                st->slots.push_back(Value{FilePtr{}});
            else
                st->slots.push_back(default_scalar(type));
            return Value{MemRef{st, 0, type}};
        }
        default: {
            auto st = std::make_shared<ArrayStorage>();
            st->slots.push_back(default_scalar(type));
            return Value{MemRef{st, 0, type}};
        }
    }
}

static long dynamic_struct_slots(Machine& mach, TypePtr struct_t, FramePtr& env,
                                 StoragePtr storage, long base, bool fill,
                                 const std::vector<Value>* size_vals) {
    TypePtr u = unwrap_named(struct_t);
    long off = base;
    size_t next_size = 0;
    auto tmp = std::make_shared<Frame>();
    tmp->parent = env;
    FramePtr tenv = tmp;

    for (auto& f : u->fields) {
        TypePtr fu = unwrap_named(f.type);
        long fslots;
        if (f.const_size) {
            fslots = 1;
            Value v = size_vals && next_size < size_vals->size() ? (*size_vals)[next_size]
                                                                 : Value{(int32_t)0};
            next_size++;
            if (fill && storage) storage->slots[off] = v;
            mach.bind_const_field(tenv, struct_t, f.name, v);
        } else if (fu->kind == TypeKind::Array && !slot_count(f.type)) {
            long n = 1;
            for (auto& d : fu->dims) {
                long lo = d.known ? d.lo
                                  : (d.lo_expr ? eval_dim(mach, d.lo_expr, tenv) : 1);
                long hi = d.known ? d.hi : eval_dim(mach, d.hi_expr, tenv);
                n *= std::max(0L, hi - lo + 1);
            }
            long es = slot_count(fu->elem).value_or(1);
            fslots = n * es;
            if (fill && storage)
                for (long i = 0; i < n; i++)
                    default_init_range(*storage, off + i * es, fu->elem);
        } else {
            auto sc = slot_count(f.type);
            if (!sc) throw CplError("nested dynamic structures are not supported");
            fslots = *sc;
            if (fill && storage) default_init_range(*storage, off, f.type);
        }
        off += fslots;
    }
    return off - base;
}

void Machine::bind_const_field(FramePtr& env, TypePtr struct_t, const std::string& name,
                               const Value& v) {
    TypePtr u = unwrap_named(struct_t);
    for (auto& f : u->fields) {
        TypePtr fu = unwrap_named(f.type);
        if (fu->kind != TypeKind::Array) continue;
        for (auto& d : fu->dims) {
            for (const std::shared_ptr<Expr>& ex : {d.lo_expr, d.hi_expr}) {
                if (!ex) continue;
                std::function<void(const Expr*)> walk = [&](const Expr* x) {
                    if (!x) return;
                    if (x->kind == ExprKind::Ident && x->sym && x->sym->name == name)
                        env->cells[x->sym] = v;
                    for (const ExprPtr& c : {x->a, x->b, x->c})
                        if (c) walk(c.get());
                    for (const ExprPtr& c : x->items)
                        if (c) walk(c.get());
                };
                walk(ex.get());
            }
        }
    }
}

long Machine::field_offset_dyn(TypePtr struct_t, int field_index, const StoragePtr& st,
                               long base, FramePtr& env) {
    TypePtr u = unwrap_named(struct_t);
    if (auto off = field_slot_offset(u, (size_t)field_index)) return *off;
    auto tmp = std::make_shared<Frame>();
    tmp->parent = env;
    FramePtr tenv = tmp;
    long off = 0;
    for (int i = 0; i < (int)u->fields.size(); i++) {
        if (i == field_index) return off;
        auto& f = u->fields[i];
        TypePtr fu = unwrap_named(f.type);
        if (f.const_size) {
            bind_const_field(tenv, struct_t, f.name, st->slots[base + off]);
            off += 1;
        } else if (fu->kind == TypeKind::Array && !slot_count(f.type)) {
            long n = 1;
            for (auto& d : fu->dims) {
                long lo = d.known ? d.lo
                                  : (d.lo_expr ? eval_dim(*this, d.lo_expr, tenv) : 1);
                long hi = d.known ? d.hi : eval_dim(*this, d.hi_expr, tenv);
                n *= std::max(0L, hi - lo + 1);
            }
            off += n * slot_count(fu->elem).value_or(1);
        } else {
            off += slot_count(f.type).value_or(1);
        }
    }
    return off;
}

// ---------------- statement execution ----------------

void Machine::exec_body(const std::vector<StmtPtr>& body, FramePtr env) {
    size_t i = 0;
    try {
        for (; i < body.size(); i++) exec(*body[i], env);
    } catch (CplError& e) {
        // an armed TRAP in this block handles errors raised downstream
        for (auto it = env->traps.rbegin(); it != env->traps.rend(); ++it) {
            const Stmt* trap = *it;
            if (!trap->trap_all &&
                e.message.compare(0, trap->trap_prefix.size(), trap->trap_prefix) != 0)
                continue;
            // run the handler with ERRORMESSAGE bound, then fall off the block
            if (errormessage_sym) {
                if (Value* cell = find_cell(env, errormessage_sym))
                    if (auto* m = cell->get_if<MemRef>())
                        m->storage->slots[m->offset] = make_string_value(e.message);
            }
            env->traps.clear();
            if (trap->handler) {
                FramePtr henv = std::make_shared<Frame>();
                henv->parent = env;
                henv->block = trap->handler.get();
                exec_body(trap->handler->body, henv);
            }
            return;
        }
        throw;
    } catch (StopSignal&) {
        for (auto it = env->traps.rbegin(); it != env->traps.rend(); ++it) {
            const Stmt* trap = *it;
            if (!trap->trap_all && !trap->trap_prefix.empty()) continue;
            if (errormessage_sym) {
                if (Value* cell = find_cell(env, errormessage_sym))
                    if (auto* m = cell->get_if<MemRef>())
                        m->storage->slots[m->offset] = make_string_value("");
            }
            env->traps.clear();
            if (trap->handler) {
                FramePtr henv = std::make_shared<Frame>();
                henv->parent = env;
                henv->block = trap->handler.get();
                exec_body(trap->handler->body, henv);
            }
            return;
        }
        throw;
    }
}

void Machine::exec(const Stmt& s, FramePtr& env) {
    current_pos = s.pos;
    try {
        exec_dispatch(s, env);
    } catch (CplError& e) {
        if (rtchecks && !e.pos.valid()) throw CplError(e.message, s.pos);
        throw;
    }
}

void Machine::exec_dispatch(const Stmt& s, FramePtr& env) {
    switch (s.kind) {
        case StmtKind::Block: {
            if (s.scope) {
                FramePtr inner = std::make_shared<Frame>();
                inner->parent = env;
                inner->block = &s;
                exec_body(s.body, inner);
            } else {
                for (auto& st : s.body) exec(*st, env);
            }
            return;
        }
        case StmtKind::Decl:
            exec_decl(s, env);
            return;
        case StmtKind::TypeDecl:
        case StmtKind::DeferredDecl:
            return;
        case StmtKind::Assign:
            exec_assign(s, env);
            return;
        case StmtKind::EinsteinAssign:
            exec_einstein(s, env);
            return;
        case StmtKind::CallStmt:
            eval(*s.expr, env);
            return;
        case StmtKind::If: {
            Value c = eval(*s.cond, env);
            bool taken = c.get_if<bool>() && c.as<bool>();
            const StmtPtr& branch = taken ? s.then_branch : s.else_branch;
            if (!branch) return;
            if (taken && s.sym && s.expr) {
                // IS narrowing: bind the tested pointer under its name
                FramePtr nf = std::make_shared<Frame>();
                nf->parent = env;
                nf->block = &s;
                nf->cells[s.sym] = eval(*s.expr, env);
                exec(*branch, nf);
                return;
            }
            exec(*branch, env);
            return;
        }
        case StmtKind::Loop:
            exec_loop(s, env);
            return;
        case StmtKind::Case: {
            long v = to_int(eval(*s.cond, env));
            for (auto& arm : s.arms) {
                for (long tag : arm.tags) {
                    if (tag == v) {
                        exec(*arm.body, env);
                        return;
                    }
                }
            }
            if (s.default_arm) exec(*s.default_arm, env);
            return;
        }
        case StmtKind::Exit:
            throw ExitSignal{s.name};
        case StmtKind::Stop:
            throw StopSignal{};
        case StmtKind::ErrorStmt: {
            std::string msg;
            Fmt fmt = current_fmt(env);
            for (auto& item : s.write_items) {
                if (item.comma_before) msg += "\t";
                Value v = eval(*item.value, env);
                render_item(msg, v, item.value->type, fmt, env, ferr, nullptr);
            }
            throw CplError(msg, rtchecks ? s.pos : SourcePos{});
        }
        case StmtKind::Trap:
            env->traps.push_back(&s);
            return;
        case StmtKind::Write:
            exec_write(s, env);
            return;
        case StmtKind::Read:
            exec_read(s, env);
            return;
        case StmtKind::Ask: {
            for (auto& item : s.asks) {
                if (item.declared) {
                    auto st = std::make_shared<ArrayStorage>();
                    st->slots.push_back(default_scalar(item.declared->type));
                    env->cells[item.declared] =
                        Value{MemRef{st, 0, item.declared->type}};
                }
                std::string prompt = item.has_prompt
                                         ? item.prompt
                                         : print_expr(*item.place) + "?";
                fh_flush(*fout);
                fh_write_bytes(*ferr, prompt.data(), prompt.size());
                fh_write_bytes(*ferr, " ", 1);
                fh_flush(*ferr);
                read_into_place(*fin, item.place, env, false, "");
            }
            return;
        }
        case StmtKind::NewStmt: {
            for (auto& pexpr : s.ptrs) {
                Place p = eval_place(*pexpr, env);
                TypePtr u = unwrap_named(p.type);
                TypePtr tgt = pointer_target(*u);
                if (!tgt) rt_error("NEW on an uncommitted POINTER");
                TypePtr tu = unwrap_named(tgt);
                Value v;
                if (tu->kind == TypeKind::Stored) {
                    FilePtr f = make_temp_file();
                    v = Value{f};
                } else {
                    Value allocated = alloc_value(*this, tgt, {}, env);
                    // pointers hold the referenced cell, not the binding cell
                    if (auto* m = allocated.get_if<MemRef>())
                        v = Value{MemRef{m->storage, m->offset, tgt}};
                    else
                        v = allocated;  // views are fat pointers already
                }
                store_place(p, v);
            }
            return;
        }
        case StmtKind::FreeStmt: {
            for (auto& pexpr : s.ptrs) {
                Place p = eval_place(*pexpr, env);
                Value cur = load_place(p);
                if (auto* f = cur.get_if<FilePtr>()) {
                    if (!*f) {
                        if (rtchecks) rt_error("FREE of a NULL file");
                        return;
                    }
                    fh_flush(**f);
                    fh_close(**f);
                    if ((*f)->temp && !(*f)->path.empty()) {
                        std::remove((*f)->path.c_str());
                        (*f)->temp = false;
                    }
                    store_place(p, Value{FilePtr{}});
                    continue;
                }
                if (auto* m = cur.get_if<MemRef>()) {
                    if (m->null()) {
                        if (rtchecks) rt_error("FREE of a NULL pointer");
                        continue;
                    }
                    m->storage->freed = true;
                    store_place(p, Value{MemRef{nullptr, 0, m->type}});
                    continue;
                }
                if (auto* view = cur.get_if<ViewData>()) {
                    if (view->storage) view->storage->freed = true;
                    store_place(p, Value{ViewData{}});
                    continue;
                }
                if (rtchecks) rt_error("FREE of a value that was not allocated");
            }
            return;
        }
        case StmtKind::OpenStmt:
        case StmtKind::CreateStmt: {
            Place p = eval_place(*s.ptrs[0], env);
            Value nm = eval(*s.file_arg, env);
            auto* view = nm.get_if<ViewData>();
            if (!view) rt_error("OPEN/CREATE require a file name STRING");
            FilePtr f = open_path(string_of_view(*view), s.kind == StmtKind::CreateStmt);
            TypePtr u = unwrap_named(p.type);
            TypePtr tgt = pointer_target(*u);
            TypePtr tu = tgt ? unwrap_named(tgt) : nullptr;
            if (tu && tu->kind == TypeKind::Stored &&
                unwrap_named(tu->target)->kind == TypeKind::Array &&
                !(unwrap_named(tu->target)->dims.size() == 1 &&
                  unwrap_named(tu->target)->dims[0].star &&
                  kind_of(unwrap_named(tu->target)->elem) == TypeKind::Char)) {
                // typed stored pointer: bind the view
                store_place(p, Value{f});
            } else {
                store_place(p, Value{f});
            }
            return;
        }
        case StmtKind::FlushStmt: {
            Value v = eval(*s.file_arg, env);
            if (auto* f = v.get_if<FilePtr>()) {
                if (!*f) rt_error("FLUSH of a NULL file");
                fh_flush(**f);
            }
            return;
        }
        case StmtKind::PositionStmt: {
            Value v = eval(*s.file_arg, env);
            auto* f = v.get_if<FilePtr>();
            if (!f || !*f) rt_error("POSITION requires an open file");
            fh_seek(**f, to_int(eval(*s.pos_arg, env)));
            return;
        }
        case StmtKind::Use: {
            if (executed_use_.insert(&s).second) exec_body(s.body, env);
            return;
        }
        case StmtKind::ModuleStmt: {
            FramePtr inner = std::make_shared<Frame>();
            inner->parent = env;
            inner->block = &s;
            module_frames_[&s] = inner;  // statics persist
            try {
                exec_body(s.body, inner);
            } catch (ExitSignal& e) {
                if (e.target != s.name || s.name.empty()) throw;
            }
            return;
        }
        case StmtKind::SubrDecl:
            if (!s.fn_follows) decl_envs[&s] = env;
            return;
        case StmtKind::DefaultFormat:
            env->fmt = {s.width, s.precision};
            env->has_fmt = true;
            return;
    }
}

// ---------------- declarations ----------------

void Machine::exec_decl(const Stmt& s, FramePtr& env) {
    const DeclItem& item = s.decls[0];
    Symbol* sym = item.sym;
    if (sym->folded) return;  // compile-time constant, no storage

    TypePtr t = sym->type;
    Value cell;
    if (!t) {
        // typeless FOLLOWS constant: one slot, filled by its assignment
        auto st = std::make_shared<ArrayStorage>();
        st->slots.push_back(Value{});
        cell = Value{MemRef{st, 0, nullptr}};
    } else {
        TypePtr u = unwrap_named(t);
        if (u->kind == TypeKind::Array) {
            bool star = false;
            for (auto& d : u->dims)
                if (d.star) star = true;
            if (star) {
                // STRING-style rebindable cell
                auto st = std::make_shared<ArrayStorage>();
                st->slots.push_back(Value{ViewData{}});
                cell = Value{MemRef{st, 0, t}};
            } else {
                cell = alloc_value(*this, t, item.size_args, env);
            }
        } else {
            cell = alloc_value(*this, t, item.size_args, env);
        }
    }
    env->cells[sym] = cell;

    if (item.init) {
        Value init = eval(*item.init, env);
        TypePtr u = t ? unwrap_named(t) : nullptr;
        if (u && u->kind == TypeKind::Array) {
            bool star = false;
            for (auto& d : u->dims)
                if (d.star) star = true;
            if (star) {
                // bind the string cell
                auto* m = cell.get_if<MemRef>();
                m->storage->slots[m->offset] = init;
            } else {
                ViewData& view = env->cells[sym].as<ViewData>();
                if (auto* sv = init.get_if<ViewData>()) {
                    if (element_count(view.axes) != element_count(sv->axes))
                        rt_error("initializer is not congruent with the array");
                    std::vector<long> offs;
                    enumerate(sv->axes, sv->offset,
                              [&](long off) { offs.push_back(off); });
                    size_t i = 0;
                    enumerate(view.axes, view.offset, [&](long off) {
                        view.storage->slots[off] = sv->storage->slots[offs[i++]];
                    });
                } else {
                    // broadcast scalar (also covers = 0)
                    enumerate(view.axes, view.offset,
                              [&](long off) { view.storage->slots[off] = init; });
                }
            }
        } else if (u && u->kind == TypeKind::Structure) {
            Place p{false, cell.as<MemRef>(), {}, t};
            store_place(p, init);
        } else {
            Place p{false, cell.as<MemRef>(), {}, t};
            store_place(p, init);
        }
    }
}

// ---------------- assignment ----------------

void Machine::exec_assign(const Stmt& s, FramePtr& env) {
    TypePtr lt = s.lhs->type;
    TypePtr u = lt ? unwrap_named(lt) : nullptr;
    bool lhs_string_cell = false;
    if (u && u->kind == TypeKind::Array) {
        for (auto& d : u->dims)
            if (d.star) lhs_string_cell = true;
    }
    if (u && u->kind == TypeKind::Array && !lhs_string_cell) {
        // whole-array assignment through the view
        Value target = eval(*s.lhs, env);
        if (auto* sv = target.get_if<StoredViewData>()) {
            Value rv = eval(*s.rhs, env);
            if (auto* src = rv.get_if<ViewData>()) {
                std::vector<long> offs;
                enumerate(src->axes, src->offset, [&](long off) { offs.push_back(off); });
                size_t i = 0;
                enumerate(sv->axes, sv->offset, [&](long idx) {
                    StoredRef ref{sv->file, idx * sv->elem_size, sv->elem};
                    stored_write(ref, src->storage->slots[offs[i++]]);
                });
                return;
            }
            // zero fill
            enumerate(sv->axes, sv->offset, [&](long idx) {
                StoredRef ref{sv->file, idx * sv->elem_size, sv->elem};
                stored_write(ref, default_scalar(sv->elem));
            });
            return;
        }
        auto* view = target.get_if<ViewData>();
        if (!view) rt_error("assignment target is not an array view");
        Value rv = eval(*s.rhs, env);
        if (auto* src = rv.get_if<ViewData>()) {
            if (element_count(view->axes) != element_count(src->axes))
                rt_error("arrays are not congruent in assignment");
            std::vector<long> offs;
            enumerate(src->axes, src->offset, [&](long off) { offs.push_back(off); });
            size_t i = 0;
            enumerate(view->axes, view->offset, [&](long off) {
                view->storage->slots[off] = src->storage->slots[offs[i++]];
            });
            return;
        }
        // the constant 0 fills the whole array
        TypePtr et = view->elem;
        Value zero = default_scalar(et);
        enumerate(view->axes, view->offset,
                  [&](long off) { view->storage->slots[off] = zero; });
        return;
    }

    Place p = eval_place(*s.lhs, env);
    if (s.uses_tilde) tilde_stack_.push_back(load_place(p));
    Value v;
    try {
        v = eval(*s.rhs, env);
    } catch (...) {
        if (s.uses_tilde) tilde_stack_.pop_back();
        throw;
    }
    if (s.uses_tilde) tilde_stack_.pop_back();

    if (!p.type && p.mem.storage) {
        // typeless FOLLOWS constant takes its first value as-is
        p.mem.storage->slots[p.mem.offset] = v;
        return;
    }
    store_place(p, v);
}

// ---------------- einstein ----------------

std::pair<long, long> Machine::infer_bounds(const std::vector<BoundSite>& sites,
                                            FramePtr& env) {
    std::optional<std::pair<long, long>> result;
    for (auto& site : sites) {
        Value base = eval(*site.index_node->a, env);
        std::vector<Axis> axes;
        if (auto* view = base.get_if<ViewData>()) {
            axes = view->axes;
        } else if (auto* sv = base.get_if<StoredViewData>()) {
            axes = sv->axes;
        } else if (auto* m = base.get_if<MemRef>()) {
            TypePtr u = m->type ? unwrap_named(m->type) : nullptr;
            if (u && u->kind == TypeKind::Structure && u->overlay) {
                axes = {{0, u->overlay_len - 1, 1}};
            } else if (u && u->kind == TypeKind::Array) {
                axes = view_of_inline_array(m->storage, m->offset, m->type).axes;
            } else {
                continue;
            }
        } else {
            continue;
        }
        if (site.axis >= (int)axes.size()) continue;
        std::pair<long, long> b{axes[site.axis].lo, axes[site.axis].hi};
        if (!result) {
            result = b;
        } else if (*result != b) {
            rt_error("loop bounds inferred from arrays differ: " +
                     std::to_string(result->first) + ".." + std::to_string(result->second) +
                     " vs " + std::to_string(b.first) + ".." + std::to_string(b.second));
        }
    }
    if (!result) rt_error("cannot infer loop bounds");
    return *result;
}

void Machine::exec_einstein(const Stmt& s, FramePtr& env) {
    const EinPlan& plan = *s.ein;
    FramePtr frame = std::make_shared<Frame>();
    frame->parent = env;
    frame->block = &s;
    FramePtr fenv = frame;

    // resolve bounds
    std::vector<std::pair<long, long>> free_bounds, con_bounds;
    for (auto& sites : plan.free_sites) free_bounds.push_back(infer_bounds(sites, fenv));
    for (auto& sites : plan.contraction_sites)
        con_bounds.push_back(infer_bounds(sites, fenv));

    bool lhs_real = true;
    {
        TypeKind k = kind_of(s.lhs->type);
        lhs_real = !(k == TypeKind::Integer || k == TypeKind::Char);
    }

    std::function<void(size_t)> loop_free = [&](size_t k) {
        if (k == plan.free_indices.size()) {
            // sum terms (with contractions) into the lhs place
            double acc = 0;
            for (auto& term : plan.terms) {
                double tsum = 0;
                // nested contraction loops over the contraction syms of this term
                std::vector<size_t> cons;
                for (Symbol* cs : term.contractions)
                    for (size_t i = 0; i < plan.contraction_syms.size(); i++)
                        if (plan.contraction_syms[i] == cs) cons.push_back(i);
                std::function<void(size_t)> loop_con = [&](size_t ci) {
                    if (ci == cons.size()) {
                        tsum += to_real(eval(*term.expr, fenv));
                        return;
                    }
                    size_t idx = cons[ci];
                    for (long v = con_bounds[idx].first; v <= con_bounds[idx].second; v++) {
                        fenv->cells[plan.contraction_syms[idx]] = Value{(int32_t)v};
                        loop_con(ci + 1);
                    }
                };
                loop_con(0);
                acc += term.negated ? -tsum : tsum;
            }
            Place p = eval_place(*s.lhs, fenv);
            if (lhs_real)
                store_place(p, Value{acc});
            else
                store_place(p, Value{(int32_t)std::llround(acc)});
            return;
        }
        for (long v = free_bounds[k].first; v <= free_bounds[k].second; v++) {
            fenv->cells[plan.free_indices[k]] = Value{(int32_t)v};
            loop_free(k + 1);
        }
    };
    loop_free(0);
}

// ---------------- loops ----------------

void Machine::run_clause(const ForClause& clause, FramePtr& env,
                         const std::function<bool()>& body) {
    const Symbol* value_except_index = nullptr;
    for (auto& item : clause.items)
        if (item.kind == ForItemKind::Range) value_except_index = item.index;

    auto passes_excepts = [&]() {
        for (auto& ex : clause.excepts) {
            Value v = eval(*ex, env);
            if (auto* b = v.get_if<bool>()) {
                if (*b) return false;
                continue;
            }
            if (value_except_index) {
                Value* idx = find_cell(env, value_except_index);
                if (idx && value_equal(*idx, v)) return false;
            }
        }
        return true;
    };

    bool stopped = false;
    std::function<void(size_t)> rec = [&](size_t k) {
        if (stopped) return;
        if (k == clause.items.size()) {
            if (passes_excepts())
                if (!body()) stopped = true;
            return;
        }
        const ForItem& item = clause.items[k];
        switch (item.kind) {
            case ForItemKind::Range: {
                bool down = item.down;
                bool real_idx = kind_of(item.index->type) == TypeKind::Real;
                Value first = eval(*item.lb, env);
                Value last = eval(*item.ub, env);
                Value stepv = item.step ? eval(*item.step, env) : Value{(int32_t)1};
                auto bind = [&](const Value& v) {
                    if (item.implicit_index) {
                        env->cells[item.index] = v;
                    } else {
                        Value* cell = find_cell(env, item.index);
                        if (cell && cell->is<MemRef>())
                            cell->as<MemRef>().storage
                                ->slots[cell->as<MemRef>().offset] = v;
                        else
                            env->cells[item.index] = v;
                    }
                };
                if (real_idx) {
                    double v = to_real(first), lim = to_real(last),
                           st = to_real(stepv);
                    if (st <= 0) rt_error("loop never terminates: step is not positive");
                    for (; down ? v >= lim : v <= lim; v += down ? -st : st) {
                        bind(Value{v});
                        rec(k + 1);
                        if (stopped) return;
                    }
                } else {
                    long v = to_int(first), lim = to_int(last), st = to_int(stepv);
                    if (st <= 0) rt_error("loop never terminates: step is not positive");
                    for (; down ? v >= lim : v <= lim; v += down ? -st : st) {
                        bind(Value{(int32_t)v});
                        rec(k + 1);
                        if (stopped) return;
                    }
                }
                return;
            }
            case ForItemKind::All: {
                std::function<void(size_t)> all_rec = [&](size_t i) {
                    if (stopped) return;
                    if (i == item.all_indices.size()) {
                        rec(k + 1);
                        return;
                    }
                    auto [lo, hi] = infer_bounds(item.all_sites[i], env);
                    for (long v = lo; v <= hi; v++) {
                        env->cells[item.all_indices[i]] = Value{(int32_t)v};
                        all_rec(i + 1);
                        if (stopped) return;
                    }
                };
                all_rec(0);
                return;
            }
            case ForItemKind::Times: {
                long n = to_int(eval(*item.count, env));
                for (long i = 0; i < n; i++) {
                    rec(k + 1);
                    if (stopped) return;
                }
                return;
            }
            case ForItemKind::In: {
                Value arr = eval(*item.array, env);
                if (auto* view = arr.get_if<ViewData>()) {
                    std::vector<long> offs;
                    enumerate(view->axes, view->offset,
                              [&](long off) { offs.push_back(off); });
                    for (long off : offs) {
                        env->cells[item.elem] =
                            Value{MemRef{view->storage, off, view->elem}};
                        rec(k + 1);
                        if (stopped) return;
                    }
                    return;
                }
                rt_error("FOR ... IN requires an ARRAY value");
            }
        }
    };
    rec(0);
}

void Machine::exec_loop(const Stmt& s, FramePtr& env) {
    FramePtr frame = std::make_shared<Frame>();
    frame->parent = env;
    frame->block = &s;
    FramePtr fenv = frame;

    auto run_body = [&]() {
        FramePtr benv = std::make_shared<Frame>();
        benv->parent = fenv;
        benv->block = &s;  // per-iteration frame
        exec_body(s.body, benv);
    };

    try {
        if (s.clause) {
            run_clause(*s.clause, fenv, [&]() {
                run_body();
                return true;
            });
            return;
        }
        if (s.infinite) {
            while (true) run_body();
        }
        auto test = [&]() {
            bool v = eval(*s.test, fenv).as<bool>();
            return s.test_until ? !v : v;
        };
        if (s.head_test) {
            while (test()) run_body();
        } else {
            do {
                run_body();
            } while (test());
        }
    } catch (ExitSignal& e) {
        if (s.loop_name.empty() || e.target != s.loop_name) throw;
    }
}

}  // namespace cpl
