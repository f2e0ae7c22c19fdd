#include <algorithm>

#include "cpl/lexer.hpp"
#include "parser_impl.hpp"

namespace cpl {

// ---------------- type declarators ----------------

bool Parser::at_type_declarator() {
    const Token& t = cur();
    if (t.kind == TokKind::Keyword) {
        static const std::set<std::string> starters = {
            "BOOLEAN", "CHAR", "INTEGER", "REAL", "SINGLE", "ENUM", "STRUCTURE",
            "STRUCTURED", "ARRAY", "POINTER", "DYNAMIC", "STORED", "FILE",
            "STRING", "TYPEOF",
        };
        if (starters.count(t.text)) return true;
        if (t.text == "SUBROUTINE" || t.text == "FUNCTION")
            return peek(1).kind == TokKind::OpenBracket;
        return false;
    }
    if (t.kind == TokKind::Identifier) {
        Symbol* sym = scope_->find(t.text);
        return sym && sym->kind == SymbolKind::Type;
    }
    return false;
}

std::vector<ArrayDim> Parser::parse_dims(bool allow_star) {
    if (!at(TokKind::OpenBracket)) fail("expected array dimensions");
    BracketStyle style = cur().bracket;
    take();
    bracket_depth_++;
    std::vector<ArrayDim> dims;
    long instance = 0;
    while (true) {
        skip_newlines();
        ArrayDim d;
        if (at_op("*")) {
            take();
            if (!allow_star)
                fail("the * dimension is only allowed for formal parameters, "
                     "POINTER TO ARRAY targets and STORED arrays");
            d.star = true;
        } else {
            ExprPtr first = rvalue(parse_selector_expr());
            ExprPtr second;
            if (eat_op("..")) {
                skip_newlines();
                second = rvalue(parse_selector_expr());
            }
            ExprPtr lo_e, hi_e;
            if (second) {
                lo_e = coerce(first, ty_integer(), "array bound");
                hi_e = coerce(second, ty_integer(), "array bound");
            } else {
                hi_e = coerce(first, ty_integer(), "array bound");
            }
            auto lo_v = lo_e ? fold_int(lo_e) : std::optional<long>(1);
            auto hi_v = fold_int(hi_e);
            if (lo_v && hi_v) {
                d.known = true;
                d.lo = *lo_v;
                d.hi = *hi_v;
            } else {
                if (!instance) instance = fresh_type_instance_id();
                d.instance = instance;
                if (!lo_e) {
                    auto one = make_expr(ExprKind::IntLit, hi_e->pos);
                    one->int_val = 1;
                    one->type = ty_integer();
                    lo_e = one;
                }
                d.lo_expr = lo_e;
                d.hi_expr = hi_e;
            }
        }
        dims.push_back(std::move(d));
        skip_newlines();
        if (eat_op(",")) continue;
        if (at(TokKind::CloseBracket)) {
            if (cur().bracket != style) fail("mismatched bracket kind");
            take();
            bracket_depth_--;
            break;
        }
        fail("expected ',' or closing bracket in dimensions");
    }
    return dims;
}

std::vector<PostfixMod> Parser::parse_postfix_mods(bool allow_star) {
    std::vector<PostfixMod> mods;
    while (true) {
        if (at_op("^")) {
            take();
            PostfixMod m;
            m.pointer = true;
            // ^(dims) combines into one wrapper pair
            if (at(TokKind::OpenBracket)) m.dims = parse_dims(allow_star);
            mods.push_back(std::move(m));
            continue;
        }
        if (at(TokKind::OpenBracket)) {
            PostfixMod m;
            m.dims = parse_dims(allow_star);
            mods.push_back(std::move(m));
            continue;
        }
        break;
    }
    return mods;
}

namespace {

bool has_const_size_fields(TypePtr t) {
    TypePtr u = unwrap_named(t);
    if (!u || u->kind != TypeKind::Structure) return false;
    for (auto& f : u->fields)
        if (f.const_size) return true;
    return false;
}

}  // namespace

TypePtr Parser::parse_type_declarator(bool allow_star, bool* had_error) {
    (void)had_error;
    const Token& t = cur();
    if (t.kind == TokKind::Identifier) {
        Symbol* sym = scope_->find(t.text);
        if (sym && sym->kind == SymbolKind::Alias) {
            Token tok = take();
            if (sym->expanding) fail("recursive alias '" + tok.text + "'", tok.pos);
            cursor.push_layer(sym->alias_tokens);
            return parse_type_declarator(allow_star);
        }
        if (sym && sym->kind == SymbolKind::Type) {
            take();
            TypePtr base = sym->type;
            // `t FUNCTION(...)` function type with named result
            if (at_kw("FUNCTION") && peek(1).kind == TokKind::OpenBracket) {
                take();
                Scope* dummy = make_detached_scope(ScopeKind::Unit);
                dummy->parent = scope_;
                auto sig = parse_param_list(dummy, true);
                sig->result = base;
                return make_function_type(sig);
            }
            return base;
        }
        fail("'" + t.text + "' does not name a type");
    }
    if (t.kind != TokKind::Keyword) fail("expected a type declarator");
    const std::string kw = t.text;

    auto prim_or_fn = [&](TypePtr base) -> TypePtr {
        if (at_kw("FUNCTION") && peek(1).kind == TokKind::OpenBracket) {
            take();
            Scope* dummy = make_detached_scope(ScopeKind::Unit);
            dummy->parent = scope_;
            auto sig = parse_param_list(dummy, true);
            sig->result = base;
            return make_function_type(sig);
        }
        return base;
    };

    if (kw == "BOOLEAN") { take(); return prim_or_fn(ty_boolean()); }
    if (kw == "CHAR") { take(); return prim_or_fn(ty_char()); }
    if (kw == "INTEGER") { take(); return prim_or_fn(ty_integer()); }
    if (kw == "REAL") { take(); return prim_or_fn(ty_real()); }
    if (kw == "SINGLE") { take(); return prim_or_fn(ty_single()); }
    if (kw == "STRING") { take(); return prim_or_fn(make_string_type()); }

    if (kw == "ENUM") {
        take();
        if (!at(TokKind::OpenBracket)) fail("expected ( after ENUM");
        take();
        std::vector<std::string> members;
        while (true) {
            if (!at(TokKind::Identifier)) fail("expected an ENUM member name");
            members.push_back(take().text);
            if (eat_op(",")) continue;
            break;
        }
        if (!at(TokKind::CloseBracket)) fail("expected ) after ENUM members");
        take();
        TypePtr et = make_enum(members);
        // members become constants of the new type
        for (size_t i = 0; i < members.size(); i++) {
            Symbol* m = declare(*scope_, members[i], SymbolKind::EnumMember, et, t.pos);
            m->constant = true;
            m->ordinal = (long)i;
            m->folded = std::make_shared<Value>(EnumValue{et, (long)i});
        }
        return et;
    }

    if (kw == "STRUCTURE") {
        take();
        if (!at(TokKind::OpenBracket)) fail("expected ( after STRUCTURE");
        BracketStyle style = cur().bracket;
        take();
        bracket_depth_++;
        std::vector<StructField> fields;
        // transient scope so later dims can reference CONSTANT INTEGER fields
        Scope* field_scope = make_detached_scope(ScopeKind::Unit);
        field_scope->parent = scope_;
        Scope* saved = scope_;
        scope_ = field_scope;
        while (true) {
            skip_newlines();
            if (at(TokKind::CloseBracket)) break;
            bool f_const = eat_kw("CONSTANT");
            bool f_var = eat_kw("VARIABLE");
            TypePtr ft = parse_type_declarator(true);
            if (eat_kw("CONSTANT")) f_const = true;
            if (eat_kw("VARIABLE")) f_var = true;
            (void)f_var;
            // anonymous field: no name follows
            if (!at(TokKind::Identifier)) {
                fields.push_back({"", ft, false, false});
            } else {
                while (true) {
                    Token name = take();
                    auto mods = parse_postfix_mods(true);
                    TypePtr full = combine_postfix(ft, mods);
                    bool const_size =
                        f_const && unwrap_named(full)->kind == TypeKind::Integer;
                    fields.push_back({name.text, full, f_const, const_size});
                    if (const_size) {
                        Symbol* fs = declare(*scope_, name.text, SymbolKind::Constant,
                                             full, name.pos);
                        fs->constant = true;
                        fs->synthetic = true;
                    }
                    if (eat_op(",")) {
                        skip_newlines();
                        continue;
                    }
                    break;
                }
            }
            if (at(TokKind::Semicolon) || at(TokKind::Newline)) {
                take();
                continue;
            }
            if (at(TokKind::CloseBracket)) break;
            fail("expected ';' or ')' in STRUCTURE fields");
        }
        if (cur().bracket != style) fail("mismatched bracket kind");
        take();
        bracket_depth_--;
        scope_ = saved;
        return make_structure(std::move(fields));
    }

    if (kw == "STRUCTURED") {
        take();
        expect_kw("ARRAY");
        if (!at(TokKind::OpenBracket)) fail("expected ( after STRUCTURED ARRAY");
        take();
        bracket_depth_++;
        struct RawField {
            std::string name;
            std::vector<ArrayDim> dims;
        };
        std::vector<RawField> raw;
        while (true) {
            skip_newlines();
            if (!at(TokKind::Identifier)) fail("expected a field name");
            RawField f;
            f.name = take().text;
            if (at(TokKind::OpenBracket)) f.dims = parse_dims(false);
            raw.push_back(std::move(f));
            if (eat_op(",")) continue;
            break;
        }
        if (!at(TokKind::CloseBracket)) fail("expected ) in STRUCTURED ARRAY");
        take();
        bracket_depth_--;
        expect_kw("OF");
        TypePtr base = parse_type_declarator(false);
        auto bs = slot_count(base);
        if (!bs || *bs != 1)
            fail("STRUCTURED ARRAY base type must be a scalar type");
        std::vector<StructField> fields;
        long total = 0;
        for (auto& f : raw) {
            TypePtr ft = base;
            if (!f.dims.empty()) {
                for (auto& d : f.dims)
                    if (!d.known)
                        fail("STRUCTURED ARRAY dimensions must be compile-time constants");
                ft = make_array(f.dims, base);
            }
            total += slot_count(ft).value_or(1);
            fields.push_back({f.name, ft, false, false});
        }
        auto st = std::make_shared<TypeDescriptor>();
        st->kind = TypeKind::Structure;
        st->fields = std::move(fields);
        st->overlay = true;
        st->overlay_len = total;
        return st;
    }

    if (kw == "ARRAY") {
        take();
        std::vector<ArrayDim> dims = parse_dims(allow_star);
        expect_kw("OF");
        TypePtr elem = parse_type_declarator(allow_star);
        // ARRAY(d1,d2) OF t == ARRAY(d1) OF ARRAY(d2) OF t; keep flat dims,
        // but fold a directly nested array element into the dim list
        return make_array(std::move(dims), elem);
    }

    if (kw == "POINTER") {
        take();
        if (eat_kw("INTO")) {
            std::vector<std::string> bases;
            while (true) {
                if (!at(TokKind::Identifier)) fail("expected an array name after INTO");
                Token base = take();
                Symbol* sym = scope_->find(base.text);
                if (!sym || !sym->type || !is_array_type(sym->type))
                    fail("'" + base.text + "' is not an ARRAY", base.pos);
                bases.push_back(base.text);
                if (eat_op(",")) continue;
                break;
            }
            return make_pointer_into(std::move(bases));
        }
        expect_kw("TO");
        // uncommitted pointer: POINTER TO newid
        if (at(TokKind::Identifier)) {
            Symbol* sym = scope_->find(cur().text);
            if (!sym || sym->kind != SymbolKind::Type) {
                if (sym && sym->kind == SymbolKind::Alias) {
                    // alias expands to a type
                } else {
                    Token name = take();
                    auto& slot = uncommitted_slots_[name.text];
                    if (!slot) {
                        slot = std::make_shared<UncommittedSlot>();
                        slot->name = name.text;
                    }
                    return make_uncommitted_pointer(slot);
                }
            }
        }
        return make_pointer(parse_type_declarator(true));
    }

    if (kw == "DYNAMIC") {
        take();
        expect_kw("POINTER");
        if (eat_kw("TO")) return make_dynamic_pointer(parse_type_declarator(false));
        return make_dynamic_pointer(nullptr);
    }

    if (kw == "STORED") {
        take();
        TypePtr inner = parse_type_declarator(true);
        return make_stored(inner);
    }

    if (kw == "FILE") {
        take();
        if (eat_kw("OF")) return make_file_type(parse_type_declarator(false));
        return prim_or_fn(make_file_type(ty_char()));
    }

    if (kw == "TYPEOF") {
        take();
        if (!at(TokKind::OpenBracket)) fail("expected ( after TYPEOF");
        take();
        bracket_depth_++;
        ExprPtr e = parse_expression();
        if (!at(TokKind::CloseBracket)) fail("expected ) after TYPEOF");
        take();
        bracket_depth_--;
        if (!e->type) fail("cannot take TYPEOF of this expression");
        return typeof_of(e->type);
    }

    if (kw == "SUBROUTINE") {
        take();
        Scope* dummy = make_detached_scope(ScopeKind::Unit);
        dummy->parent = scope_;
        auto sig = parse_param_list(dummy, true);
        return make_subroutine_type(sig);
    }
    if (kw == "FUNCTION") {
        take();
        Scope* dummy = make_detached_scope(ScopeKind::Unit);
        dummy->parent = scope_;
        auto sig = parse_param_list(dummy, true);
        expect_op("->");
        sig->result = parse_type_declarator(false);
        return make_function_type(sig);
    }
    fail("expected a type declarator");
}

// ---------------- parameter lists ----------------

std::shared_ptr<ParamSig> Parser::parse_param_list(Scope* fn_scope, bool is_type_only) {
    auto sig = std::make_shared<ParamSig>();
    if (!at(TokKind::OpenBracket)) fail("expected a parameter list");
    BracketStyle style = cur().bracket;
    take();
    bracket_depth_++;
    skip_newlines();
    if (at(TokKind::CloseBracket) && cur().bracket == style) {
        take();
        bracket_depth_--;
        return sig;
    }
    bool optional_section = false;
    std::string next_sep = "(";
    Scope* saved = scope_;
    if (fn_scope) scope_ = fn_scope;

    while (true) {
        skip_newlines();
        if (eat_kw("OPTIONAL")) optional_section = true;
        bool var_flag = eat_kw("VARIABLE");
        bool const_flag = eat_kw("CONSTANT");
        (void)const_flag;
        TypePtr group_type = parse_type_declarator(true);
        if (eat_kw("VARIABLE")) var_flag = true;

        bool more_in_group = true;
        while (more_in_group) {
            Param p;
            p.sep = next_sep;
            p.type = group_type;
            p.variable = var_flag;
            p.optional = optional_section;
            if (at(TokKind::Identifier)) {
                Token name = take();
                auto mods = parse_postfix_mods(true);
                p.type = combine_postfix(group_type, mods);
                p.name = name.text;
                if (eat_op("=")) {
                    skip_newlines();
                    p.def = rvalue(parse_expression());
                    p.def = coerce(p.def, p.type, "default value");
                }
                if (fn_scope && !is_type_only) {
                    Symbol* sym = declare(*fn_scope, p.name,
                                          var_flag ? SymbolKind::Variable
                                                   : SymbolKind::Constant,
                                          p.type, name.pos);
                    sym->constant = !var_flag;
                }
            }
            if (p.optional && !p.def)
                fail("OPTIONAL parameter '" + p.name + "' needs a default value");
            sig->params.push_back(std::move(p));

            skip_newlines();
            if (at(TokKind::CloseBracket)) {
                if (cur().bracket != style) fail("mismatched bracket kind");
                take();
                bracket_depth_--;
                scope_ = saved;
                return sig;
            }
            if (eat_op(",")) {
                next_sep = ",";
                // same group continues only if an identifier follows
                if (at(TokKind::Identifier) && !scope_->find(cur().text)) continue;
                if (at(TokKind::Identifier) &&
                    scope_->find(cur().text)->kind != SymbolKind::Type)
                    continue;
                more_in_group = false;
                continue;
            }
            if (at(TokKind::Semicolon)) {
                take();
                next_sep = ",";
                more_in_group = false;
                continue;
            }
            if (at(TokKind::StringLit)) {
                next_sep = take().text;
                more_in_group = false;
                continue;
            }
            if (at(TokKind::Operator)) {
                next_sep = take().text;
                more_in_group = false;
                continue;
            }
            fail("expected ',', ';', a separator, or ')' in parameter list");
        }
    }
}

// ---------------- subroutines ----------------

StmtPtr Parser::parse_subroutine(bool is_function, TypePtr result_prefix,
                                 bool inline_hint) {
    if (!(at(TokKind::Identifier) || at_kw("WRITE")))
        fail("expected a subroutine or function name");
    Token name = take();
    auto st = make_stmt(StmtKind::SubrDecl, name.pos);
    st->name = name.text;

    push_scope(ScopeKind::Subroutine, st.get());
    st->scope = scope_pool_.back();
    auto sig = parse_param_list(scope_, false);

    if (is_function) {
        if (result_prefix) {
            sig->result = result_prefix;
        } else if (eat_op("->")) {
            sig->result = parse_type_declarator(true);
        } else {
            fail("FUNCTION requires a result type", name.pos);
        }
        Symbol* res = declare_raw(*scope_, "RESULT", SymbolKind::Variable, sig->result);
        res->pos = name.pos;
    }

    auto member = std::make_shared<FunctionMember>();
    member->sig = sig;
    member->decl = st.get();
    member->is_function = is_function;
    member->inline_hint = inline_hint;
    st->fn_member = member;

    if (eat_kw("FOLLOWS")) {
        member->prototype = true;
        Scope* outer = scope_->parent;
        pop_scope(false);
        st->fn_set = declare_function(*outer, name.text, member, name.pos);
        outer->pending_prototypes.push_back({st->fn_set, member});
        st->fn_follows = true;
        end_statement();
        return st;
    }

    // visible immediately, recursion allowed
    Scope* outer = scope_->parent;
    st->fn_set = declare_function(*outer, name.text, member, name.pos);

    fn_stack_.push_back(name.text);
    exit_targets_.push_back(name.text);
    if (eat_op("=")) {
        if (is_function) {
            auto asg = make_stmt(StmtKind::Assign, cur().pos);
            auto lhs = make_expr(ExprKind::Ident, cur().pos);
            Symbol* res = scope_->find_local("RESULT");
            lhs->sym = res;
            lhs->type = res->type;
            lhs->place = true;
            asg->lhs = lhs;
            asg->rhs = coerce(rvalue(parse_expression()), sig->result, "RESULT");
            st->body = {asg};
        } else {
            st->body = parse_statement_list({}, true);
        }
        end_statement();
    } else {
        end_statement();
        st->body = parse_statement_list({"END"});
        if (!at_kw("END"))
            fail("unclosed " + std::string(is_function ? "FUNCTION" : "SUBROUTINE") +
                     " '" + name.text + "' at line " + std::to_string(name.pos.line),
                 name.pos);
        take();
        if (at(TokKind::Identifier) || at_kw("WRITE")) {
            Token n = take();
            if (n.text != name.text)
                fail("END " + n.text + " does not close " + name.text, n.pos);
        } else {
            fail("expected END " + name.text);
        }
        end_statement();
    }
    fn_stack_.pop_back();
    exit_targets_.pop_back();
    pop_scope();
    return st;
}

// ---------------- declarations ----------------

StmtPtr Parser::parse_declaration(bool constant_kw, bool variable_kw) {
    TypePtr t = parse_type_declarator(true);
    if (at_kw("FUNCTION") && peek(1).kind == TokKind::Identifier) {
        take();
        return parse_subroutine(true, t, false);
    }
    if (eat_kw("CONSTANT")) constant_kw = true;
    if (eat_kw("VARIABLE")) variable_kw = true;
    return parse_declaration_with_type(t, constant_kw, variable_kw);
}

StmtPtr Parser::parse_declaration_with_type(TypePtr t, bool constant_kw,
                                            bool variable_kw) {
    (void)variable_kw;
    // variable-size structure: size arguments precede the names
    std::vector<ExprPtr> size_args;
    if (at(TokKind::OpenBracket) && has_const_size_fields(t)) {
        take();
        bracket_depth_++;
        while (true) {
            size_args.push_back(coerce(rvalue(parse_expression()), ty_integer(),
                                       "structure size argument"));
            if (eat_op(",")) continue;
            break;
        }
        if (!at(TokKind::CloseBracket)) fail("expected ) after size arguments");
        take();
        bracket_depth_--;
    }

    if (!at(TokKind::Identifier)) fail("expected a name to declare");

    // typed assignment: `REAL a=b` with a already visible
    {
        Symbol* existing = scope_->find(cur().text);
        if (existing && (existing->kind == SymbolKind::Variable ||
                         existing->kind == SymbolKind::Constant) &&
            size_args.empty() && !constant_kw) {
            ExprPtr lhs = parse_postfix_chain(resolve_identifier(take()));
            if (!at_op("=")) fail("'" + existing->name + "' is already declared");
            return finish_assignment(lhs, t);
        }
    }

    std::vector<StmtPtr> stmts;
    while (true) {
        Token name = take();
        if (name.kind != TokKind::Identifier) fail("expected a name to declare", name.pos);
        auto mods = parse_postfix_mods(true);
        TypePtr full = combine_postfix(t, mods);
        ExprPtr init;
        if (eat_op("=")) {
            skip_newlines();
            init = rvalue(parse_expression());
        }
        auto st = make_stmt(StmtKind::Decl, name.pos);
        st->decl_constant = constant_kw;
        st->decl_type = full;
        bool follows = eat_kw("FOLLOWS");
        st->decl_follows = follows;

        Symbol* sym = declare_value_symbol(
            name.text, constant_kw ? SymbolKind::Constant : SymbolKind::Variable, full,
            name.pos, constant_kw);
        if (init) {
            TypePtr u = unwrap_named(full);
            if (u->kind == TypeKind::Array) {
                // whole-array initialization: 0 or a congruent array
                auto f = fold(init);
                bool zero = f && f->is<int32_t>() && f->as<int32_t>() == 0;
                if (!zero && !(init->type && is_array_type(init->type)) &&
                    !is_string_type_p(full))
                    init = coerce(init, u->elem ? u->elem : full, "initializer");
            } else {
                init = coerce(init, full, "initializer");
            }
            if (constant_kw || !constant_kw) {
                if (constant_kw) {
                    if (auto f = fold(init)) sym->folded = std::make_shared<Value>(*f);
                    sym->assigned = true;
                }
            }
        } else if (constant_kw) {
            sym->deferred = true;
            scope_->pending_deferred.push_back(sym);
        }
        st->decls.push_back({sym, init, size_args});
        stmts.push_back(std::move(st));
        if (eat_op(",")) {
            skip_newlines();
            continue;
        }
        break;
    }
    end_statement();
    if (stmts.size() == 1) return stmts[0];
    auto blk = make_stmt(StmtKind::Block, stmts[0]->pos);
    blk->body = std::move(stmts);
    return blk;
}

// implicit declarations and assignments / calls
StmtPtr Parser::parse_identifier_statement() {
    Token first = cur();
    std::string name = first.text;

    // undeclared name: implicit CONSTANT / TYPE / deferred alias
    Symbol* sym = scope_->find(name);
    bool in_with = false;
    if (!sym) {
        // check WITH frames before deciding it's new
        for (Scope* sc = scope_; sc; sc = sc->parent) {
            if (sc->find_local(name)) break;
            if (sc->block_kind == ScopeKind::With) {
                for (auto& ws : sc->with_subjects) {
                    TypePtr u = ws.subject->type ? unwrap_named(ws.subject->type) : nullptr;
                    while (u && u->kind == TypeKind::PointerTo && pointer_target(*u))
                        u = unwrap_named(pointer_target(*u));
                    if (u && u->kind == TypeKind::Structure)
                        for (auto& f : u->fields)
                            if (f.name == name) in_with = true;
                }
            }
        }
    }
    if (!sym && !in_with) {
        take();
        if (eat_op("==")) {
            // deferred assignment: tokens kept for each use site
            std::vector<Token> toks;
            int depth = 0;
            while (true) {
                if (at(TokKind::EndOfInput)) break;
                if (depth == 0 && (at(TokKind::Newline) || at(TokKind::Semicolon)))
                    break;
                if (at(TokKind::OpenBracket)) depth++;
                if (at(TokKind::CloseBracket)) depth--;
                toks.push_back(take());
            }
            if (toks.empty()) fail("'==' requires an expression", first.pos);
            auto st = make_stmt(StmtKind::DeferredDecl, first.pos);
            Symbol* alias = declare(*scope_, name, SymbolKind::Alias, nullptr, first.pos);
            alias->alias_tokens = toks;
            st->sym = alias;
            st->alias_tokens = std::move(toks);
            end_statement();
            return st;
        }
        if (!eat_op("=")) fail("'" + name + "' is not declared", first.pos);
        skip_newlines();
        if (at_type_declarator()) {
            // newid = typedeclarator declares a TYPE
            TypePtr def = parse_type_declarator(true);
            auto st = make_stmt(StmtKind::TypeDecl, first.pos);
            TypePtr named = make_named(name, def);
            Symbol* ts = declare(*scope_, name, SymbolKind::Type, named, first.pos);
            auto it = uncommitted_slots_.find(name);
            if (it != uncommitted_slots_.end() && !it->second->resolved)
                it->second->resolved = named;
            st->sym = ts;
            end_statement();
            return st;
        }
        ExprPtr rhs = rvalue(parse_expression());
        if (!rhs->type) fail("cannot infer a type for '" + name + "'", first.pos);
        auto st = make_stmt(StmtKind::Decl, first.pos);
        st->decl_constant = true;
        st->decl_type = rhs->type;
        Symbol* cs =
            declare_value_symbol(name, SymbolKind::Constant, rhs->type, first.pos, true);
        cs->assigned = true;
        if (auto f = fold(rhs)) cs->folded = std::make_shared<Value>(*f);
        st->decls.push_back({cs, rhs, {}});
        end_statement();
        if (ein_.active) fail("Einstein indices require an array assignment", first.pos);
        return st;
    }

    // declared (or WITH-implied) name
    if (sym && sym->kind == SymbolKind::Type) {
        TypePtr t = parse_type_declarator(true);
        if (at_kw("FUNCTION") && peek(1).kind == TokKind::Identifier) {
            take();
            return parse_subroutine(true, t, false);
        }
        return parse_declaration_with_type(t, false, false);
    }
    if (sym && sym->kind == SymbolKind::Alias) {
        // alias at statement position: splice and reparse
        take();
        if (sym->expanding) fail("recursive alias '" + name + "'", first.pos);
        cursor.push_layer(sym->alias_tokens);
        return parse_statement();
    }
    if (sym && sym->kind == SymbolKind::Overloads && peek(1).kind != TokKind::OpenBracket &&
        !peek(1).is_op(".")) {
        // bracketless subroutine call
        take();
        ExprPtr call = parse_call_on_set(sym->set, first.pos, true);
        auto st = make_stmt(StmtKind::CallStmt, first.pos);
        st->expr = call;
        end_statement();
        return st;
    }

    ExprPtr lhs = parse_postfix_chain(parse_primary());
    if (at_op("=")) return finish_assignment(lhs, nullptr);
    if (at_op("==")) fail("'" + name + "' is already declared; '==' defines new aliases");
    // call statement
    {
        const Expr* e = lhs.get();
        while (e->kind == ExprKind::Convert) e = e->a.get();
        if (e->kind == ExprKind::Call) {
            auto st = make_stmt(StmtKind::CallStmt, first.pos);
            st->expr = lhs;
            end_statement();
            return st;
        }
    }
    fail("expected '=' or a subroutine call");
}

StmtPtr Parser::finish_assignment(ExprPtr lhs, TypePtr level) {
    SourcePos pos = cur().pos;
    expect_op("=");
    skip_newlines();

    if (level) {
        // REAL a=b assigns at the REAL dereferencing level
        int guard = 0;
        while (!type_identity(lhs->type, level) && guard++ < 4) {
            TypePtr u = lhs->type ? unwrap_named(lhs->type) : nullptr;
            if (!u || u->kind != TypeKind::PointerTo || !pointer_target(*u)) break;
            auto d = make_expr(ExprKind::Deref, lhs->pos);
            d->a = lhs;
            d->type = pointer_target(*u);
            d->place = true;
            lhs = d;
        }
        if (!type_identity(lhs->type, level))
            fail("cannot reach type " + type_to_string(level) + " by dereferencing",
                 pos);
    }

    check_assignable(lhs, pos);
    tilde_type_ = lhs->type;
    ExprPtr rhs = rvalue(parse_expression());
    tilde_type_ = nullptr;

    auto st = make_stmt(StmtKind::Assign, pos);
    st->assign_level = level;
    st->lhs = lhs;
    std::function<bool(const Expr*)> has_tilde = [&](const Expr* e) -> bool {
        if (!e) return false;
        if (e->kind == ExprKind::Tilde) return true;
        for (const ExprPtr& c : {e->a, e->b, e->c})
            if (c && has_tilde(c.get())) return true;
        for (const ExprPtr& c : e->items)
            if (c && has_tilde(c.get())) return true;
        for (const CallArg& a : e->args)
            if (a.value && has_tilde(a.value.get())) return true;
        return false;
    };
    st->uses_tilde = has_tilde(rhs.get());

    TypePtr target = lhs->type;
    TypePtr u = target ? unwrap_named(target) : nullptr;
    if (u && u->kind == TypeKind::Array && !is_string_type_p(target)) {
        // whole-array assignment: constant 0 or a congruent array
        auto f = fold(rhs);
        bool zero = f && ((f->is<int32_t>() && f->as<int32_t>() == 0) ||
                          (f->is<double>() && f->as<double>() == 0.0));
        if (!zero) {
            TypePtr ru = rhs->type ? unwrap_named(rhs->type) : nullptr;
            if (!ru || ru->kind != TypeKind::Array) {
                if (f) fail("only the constant 0 can be assigned to a whole array", pos);
                fail("cannot assign a scalar to a whole array", pos);
            }
            if (!type_identity(ru->elem ? ru->elem : nullptr, u->elem))
                if (!star_accepts(u->elem, ru->elem))
                    fail("array element types do not match in assignment", pos);
        }
    } else if (u && u->kind == TypeKind::Structure) {
        if (!rhs->type || !type_identity(rhs->type, target))
            fail("structure assignment requires identical types", pos);
    } else {
        rhs = coerce(rhs, target, "assignment");
    }
    st->rhs = rhs;
    end_statement();

    if (ein_.active) return build_einstein_assign(st->lhs, st->rhs, pos);
    return st;
}

// ---------------- WRITE / READ / ASK ----------------

StmtPtr Parser::parse_write(bool binary) {
    SourcePos pos = take().pos;  // WRITE
    auto st = make_stmt(StmtKind::Write, pos);
    if (eat_kw("BINARY")) binary = true;
    st->write_binary = binary;
    if (eat_kw("TO")) {
        st->dest = rvalue(parse_expression());
    }
    if (at_kw("BY") && peek(1).is_kw("NAME")) {
        take();
        take();
        st->by_name = true;
    }
    bool comma_pending = false;
    bool first = true;
    while (!at_stmt_end()) {
        if (at_op("./.")) {
            take();
            st->suppress_newline = true;
            break;
        }
        if (at_op(",")) {
            take();
            skip_newlines();
            comma_pending = true;
            continue;
        }
        WriteItem item;
        item.comma_before = comma_pending;
        comma_pending = false;
        ExprPtr e = parse_expression();
        if (st->by_name) item.label = print_expr(*e);
        item.value = write_value(e);
        if (eat_op(":")) {
            if (at(TokKind::RealLit)) {
                std::string text = take().text;
                size_t dot = text.find('.');
                item.width = std::stoi(text.substr(0, dot));
                item.precision =
                    dot + 1 < text.size() ? std::stoi(text.substr(dot + 1)) : 0;
            } else if (at(TokKind::IntLit)) {
                item.width = std::stoi(take().text);
            } else {
                fail("expected digits after ':'");
            }
        }
        // destination shorthand: WRITE file, items
        if (first && !st->dest && at_op(",") && item.value->type && !binary) {
            TypePtr u = unwrap_named(item.value->type);
            if (u && u->kind == TypeKind::PointerTo) {
                TypePtr tgt = pointer_target(*u);
                if (tgt && unwrap_named(tgt)->kind == TypeKind::Stored) {
                    st->dest = item.value;
                    take();
                    skip_newlines();
                    first = false;
                    continue;
                }
            }
        }
        first = false;
        // user-defined WRITE override for this item's type
        if (!binary && item.value->type) {
            if (Symbol* ws = scope_->find("WRITE")) {
                if (ws->kind == SymbolKind::Overloads) {
                    for (auto& m : ws->set->members) {
                        if (!m->sig || m->sig->params.size() != 2) continue;
                        if (type_identity(m->sig->params[1].type, item.value->type)) {
                            item.override_member = m;
                            break;
                        }
                    }
                }
            }
        }
        st->write_items.push_back(std::move(item));
    }
    end_statement();
    return st;
}

// fully dereference a WRITE/ERROR item to a non-pointer value
ExprPtr Parser::write_value(ExprPtr e) {
    e = rvalue(e);
    int guard = 0;
    while (e->type && guard++ < 4) {
        TypePtr u = unwrap_named(e->type);
        if (!u || u->kind != TypeKind::PointerTo) break;
        TypePtr tgt = pointer_target(*u);
        if (!tgt) break;
        if (unwrap_named(tgt)->kind == TypeKind::Stored) break;  // FILE stays
        e = apply_steps(e, {{ConvKind::Deref, tgt, -1}});
    }
    return e;
}

std::shared_ptr<ReadSpec> Parser::parse_read_spec(bool binary) {
    auto spec = std::make_shared<ReadSpec>();
    spec->binary = binary;
    if (eat_kw("BINARY")) spec->binary = true;
    if (at_kw("BY") && peek(1).is_kw("NAME")) {
        take();
        take();
        spec->by_name = true;
    }
    if (eat_kw("FROM")) spec->from = rvalue(parse_unary());
    if (!spec->by_name && at_kw("BY") && peek(1).is_kw("NAME")) {
        take();
        take();
        spec->by_name = true;
    }
    char conj = 0;
    while (true) {
        if (at_stmt_end() || at_kw("THEN") || at(TokKind::CloseBracket)) break;
        ReadTarget t;
        t.conj = conj;
        if (at(TokKind::StringLit)) {
            t.is_literal = true;
            t.literal = take().text;
        } else {
            ExprPtr place = parse_postfix_chain(parse_primary());
            // read through pointers into the pointee
            int guard = 0;
            while (place->type && guard++ < 4) {
                TypePtr u = unwrap_named(place->type);
                if (u && u->kind == TypeKind::PointerTo && pointer_target(*u) &&
                    unwrap_named(pointer_target(*u))->kind != TypeKind::Stored) {
                    auto d = make_expr(ExprKind::Deref, place->pos);
                    d->a = place;
                    d->type = pointer_target(*u);
                    d->place = true;
                    place = d;
                    continue;
                }
                break;
            }
            if (!place->place && !is_array_type(place->type))
                fail("READ target must be a variable", place->pos);
            TypePtr u = place->type ? unwrap_named(place->type) : nullptr;
            if (u && (u->kind == TypeKind::PointerTo ||
                      u->kind == TypeKind::DynamicPointer))
                fail("cannot READ into a POINTER", place->pos);
            check_assignable(place, place->pos);
            t.place = place;
        }
        spec->targets.push_back(std::move(t));
        if (eat_op(",")) {
            skip_newlines();
            conj = ',';
            continue;
        }
        if (at_kw("AND")) {
            take();
            skip_newlines();
            conj = 'A';
            continue;
        }
        if (at_kw("OR")) {
            take();
            skip_newlines();
            conj = 'O';
            continue;
        }
        break;
    }
    return spec;
}

StmtPtr Parser::parse_read_stmt(bool binary) {
    SourcePos pos = take().pos;  // READ
    auto st = make_stmt(StmtKind::Read, pos);
    st->read = parse_read_spec(binary);
    end_statement();
    return st;
}

StmtPtr Parser::parse_ask() {
    SourcePos pos = take().pos;  // ASK
    auto st = make_stmt(StmtKind::Ask, pos);
    if (at_type_declarator()) st->ask_type = parse_type_declarator(false);
    while (true) {
        AskItem item;
        if (at(TokKind::StringLit) && peek(1).is_op(":")) {
            item.prompt = take().text;
            item.has_prompt = true;
            take();  // ':'
        }
        if (!at(TokKind::Identifier)) fail("expected a variable name in ASK");
        Token name = take();
        if (st->ask_type) {
            Symbol* sym = declare_value_symbol(name.text, SymbolKind::Constant,
                                               st->ask_type, name.pos, true);
            sym->assigned = true;
            item.declared = sym;
            auto id = make_expr(ExprKind::Ident, name.pos);
            id->sym = sym;
            id->type = st->ask_type;
            id->place = true;
            item.place = id;
        } else {
            ExprPtr place = parse_postfix_chain(resolve_identifier(name));
            if (!place->place) fail("ASK target must be a variable", name.pos);
            check_assignable(place, name.pos);
            item.place = place;
        }
        st->asks.push_back(std::move(item));
        if (eat_op(",")) {
            skip_newlines();
            continue;
        }
        break;
    }
    end_statement();
    return st;
}

// ---------------- NEW / FREE / file statements ----------------

StmtPtr Parser::parse_new() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::NewStmt, pos);
    while (true) {
        ExprPtr p = parse_postfix_chain(parse_primary());
        if (!p->place) fail("NEW requires POINTER variables", p->pos);
        TypePtr u = p->type ? unwrap_named(p->type) : nullptr;
        if (!u || u->kind != TypeKind::PointerTo)
            fail("NEW requires POINTER variables", p->pos);
        st->ptrs.push_back(p);
        if (eat_op(",")) continue;
        break;
    }
    end_statement();
    return st;
}

StmtPtr Parser::parse_free() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::FreeStmt, pos);
    while (true) {
        ExprPtr p = parse_postfix_chain(parse_primary());
        TypePtr u = p->type ? unwrap_named(p->type) : nullptr;
        if (!u || (u->kind != TypeKind::PointerTo && u->kind != TypeKind::DynamicPointer))
            fail("FREE requires POINTER variables", p->pos);
        st->ptrs.push_back(p);
        if (eat_op(",")) continue;
        break;
    }
    end_statement();
    return st;
}

StmtPtr Parser::parse_open_create(bool create) {
    SourcePos pos = take().pos;
    auto st = make_stmt(create ? StmtKind::CreateStmt : StmtKind::OpenStmt, pos);
    ExprPtr fd = parse_postfix_chain(parse_primary());
    TypePtr u = fd->type ? unwrap_named(fd->type) : nullptr;
    bool stored_ptr = u && u->kind == TypeKind::PointerTo && pointer_target(*u) &&
                      unwrap_named(pointer_target(*u))->kind == TypeKind::Stored;
    if (!fd->place || !stored_ptr)
        fail("expected a POINTER TO STORED (or FILE) variable", fd->pos);
    st->ptrs.push_back(fd);
    expect_op(",");
    skip_newlines();
    ExprPtr name = rvalue(parse_expression());
    if (!is_string_type_p(name->type))
        fail("expected a file name STRING", name->pos);
    st->file_arg = name;
    end_statement();
    return st;
}

StmtPtr Parser::parse_flush() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::FlushStmt, pos);
    st->file_arg = rvalue(parse_expression());
    end_statement();
    return st;
}

StmtPtr Parser::parse_position() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::PositionStmt, pos);
    st->file_arg = rvalue(parse_expression());
    expect_op(",");
    skip_newlines();
    st->pos_arg = coerce(rvalue(parse_expression()), ty_integer(), "POSITION");
    end_statement();
    return st;
}

}  // namespace cpl
