#include <algorithm>
#include <cmath>

#include "cpl/lexer.hpp"
#include "parser_impl.hpp"

namespace cpl {

// ---------------- primaries ----------------

ExprPtr Parser::parse_conditional_expr() {
    SourcePos pos = take().pos;  // IF
    auto node = make_expr(ExprKind::Conditional, pos);
    node->a = coerce(rvalue(parse_expression()), ty_boolean(), "IF condition");
    expect_kw("THEN");
    skip_newlines();
    ExprPtr e1 = rvalue(parse_expression());
    if (!eat_kw("ELSE")) fail("the ELSE part of a conditional expression is mandatory");
    skip_newlines();
    ExprPtr e2 = rvalue(parse_expression());
    // unify the branch types
    if (e1->type && e2->type && type_identity(e1->type, e2->type)) {
        node->type = e1->type;
    } else if (e1->type && e2->type && conversion_path(e1->type, e2->type)) {
        e1 = coerce(std::move(e1), e2->type, "conditional branch");
        node->type = e2->type;
    } else if (e1->type && e2->type && conversion_path(e2->type, e1->type)) {
        e2 = coerce(std::move(e2), e1->type, "conditional branch");
        node->type = e1->type;
    } else {
        fail("conditional branches have incompatible types", pos);
    }
    node->b = e1;
    node->c = e2;
    return node;
}

ExprPtr Parser::resolve_identifier(const Token& tok) {
    const std::string& name = tok.text;

    // bare LO/HI in selector or FOR-range context
    static const std::map<std::string, std::pair<bool, int>> lohi = {
        {"LO", {false, 0}},  {"HI", {true, 0}},  {"LO1", {false, 1}},
        {"HI1", {true, 1}},  {"LO2", {false, 2}}, {"HI2", {true, 2}},
        {"LO3", {false, 3}}, {"HI3", {true, 3}},
    };
    auto lh = lohi.find(name);
    if (lh != lohi.end() && peek(0).kind != TokKind::OpenBracket &&
        (!sel_ctx_.empty() || pending_range_index_)) {
        auto node = make_expr(ExprKind::LoHiBound, tok.pos);
        node->is_hi = lh->second.first;
        node->type = ty_integer();
        if (!sel_ctx_.empty()) {
            const SelCtx& ctx = sel_ctx_.back();
            int axis = lh->second.second > 0 ? lh->second.second - 1 : ctx.axis;
            node->sites.push_back({ctx.array_node, axis});
        } else {
            node->bound_index = pending_range_index_;
            pending_lohi_.push_back(node.get());
        }
        return node;
    }

    // walk scopes: ordinary symbols and WITH frames interleave
    for (Scope* sc = scope_; sc; sc = sc->parent) {
        if (Symbol* sym = sc->find_local(name)) {
            switch (sym->kind) {
                case SymbolKind::Alias: {
                    if (sym->expanding) fail("recursive alias '" + name + "'", tok.pos);
                    // bracket the splice so it parses as one unit
                    std::vector<Token> wrapped;
                    Token open;
                    open.kind = TokKind::OpenBracket;
                    open.text = "(";
                    open.bracket = BracketStyle::Round;
                    open.pos = tok.pos;
                    Token close = open;
                    close.kind = TokKind::CloseBracket;
                    close.text = ")";
                    wrapped.push_back(open);
                    for (auto& t : sym->alias_tokens) wrapped.push_back(t);
                    wrapped.push_back(close);
                    cursor.push_layer(std::move(wrapped));
                    sym->expanding = true;
                    ExprPtr e;
                    try {
                        e = parse_primary();
                    } catch (...) {
                        sym->expanding = false;
                        throw;
                    }
                    sym->expanding = false;
                    return e;
                }
                case SymbolKind::EnumMember: {
                    auto node = make_expr(ExprKind::EnumMember, tok.pos);
                    node->sym = sym;
                    node->type = sym->type;
                    return node;
                }
                case SymbolKind::Type: {
                    if (at_kw("FROM")) {
                        take();
                        auto node = make_expr(ExprKind::FromFile, tok.pos);
                        node->ref_type = sym->type;
                        node->a = rvalue(parse_unary());
                        node->type = sym->type;
                        return node;
                    }
                    fail("type '" + name + "' cannot be used as a value", tok.pos);
                }
                case SymbolKind::Overloads: {
                    auto node = make_expr(ExprKind::SubrVal, tok.pos);
                    node->set = sym->set;
                    node->str_val = name;
                    return node;  // resolved by call or assignment context
                }
                case SymbolKind::Constant:
                case SymbolKind::Variable: {
                    auto node = make_expr(ExprKind::Ident, tok.pos);
                    node->sym = sym;
                    node->type = sym->type;
                    node->place = !(sym->folded != nullptr);
                    return node;
                }
            }
        }
        if (sc->block_kind == ScopeKind::With) {
            for (auto it = sc->with_subjects.rbegin(); it != sc->with_subjects.rend();
                 ++it) {
                ExprPtr subj = it->subject;
                // field of the subject?
                TypePtr u = subj->type ? unwrap_named(subj->type) : nullptr;
                int guard = 0;
                ExprPtr base = subj;
                while (u && u->kind == TypeKind::PointerTo && pointer_target(*u) &&
                       guard++ < 3) {
                    u = unwrap_named(pointer_target(*u));
                }
                if (u && u->kind == TypeKind::Structure) {
                    for (size_t i = 0; i < u->fields.size(); i++) {
                        if (u->fields[i].name == name) {
                            Token nm = tok;
                            return finish_field_or_method(base, nm);
                        }
                    }
                }
                // applicable function with the subject as sole argument?
                Symbol* fsym = sc->parent ? sc->parent->find(name) : nullptr;
                if (fsym && fsym->kind == SymbolKind::Overloads) {
                    std::vector<ActualInfo> one = {
                        {"(", subj->type, subj->place}};
                    std::string err;
                    if (resolve_overload(*fsym->set, one, {}, &err)) {
                        auto node = make_expr(ExprKind::Call, tok.pos);
                        node->set = fsym->set;
                        std::string e2;
                        auto r = resolve_overload(*fsym->set, one, {}, &e2);
                        node->member = r->member;
                        CallArg a;
                        a.sep = "(";
                        a.value = r->conversions[0].empty()
                                      ? subj
                                      : apply_steps(subj, r->conversions[0]);
                        if (a.value->place && r->conversions[0].empty())
                            a.value = rvalue(a.value);
                        node->args.push_back(std::move(a));
                        node->type = r->member->sig ? r->member->sig->result : nullptr;
                        return node;
                    }
                }
            }
        }
    }

    // field-function duality: field(structure) with an undeclared field name
    if (at(TokKind::OpenBracket)) {
        BracketStyle style = cur().bracket;
        SourcePos bpos = take().pos;
        bracket_depth_++;
        std::vector<ExprPtr> args;
        while (true) {
            skip_newlines();
            args.push_back(parse_expression());
            skip_newlines();
            if (eat_op(",")) continue;
            break;
        }
        if (!at(TokKind::CloseBracket) || cur().bracket != style)
            fail("expected a matching closing bracket", bpos);
        take();
        bracket_depth_--;
        if (args.size() == 1) {
            ExprPtr arg = args[0];
            TypePtr u = arg->type ? unwrap_named(arg->type) : nullptr;
            int guard = 0;
            while (u && u->kind == TypeKind::PointerTo && pointer_target(*u) &&
                   guard++ < 3)
                u = unwrap_named(pointer_target(*u));
            if (u && u->kind == TypeKind::Structure) {
                for (size_t i = 0; i < u->fields.size(); i++) {
                    if (u->fields[i].name == name) {
                        Token nm = tok;
                        return finish_field_or_method(arg, nm);
                    }
                }
            }
        }
        fail("'" + name + "' is not declared", tok.pos);
    }
    fail("'" + name + "' is not declared", tok.pos);
}

ExprPtr Parser::parse_primary() {
    if (bracket_depth_ > 0) skip_newlines();
    const Token& t = cur();
    switch (t.kind) {
        case TokKind::IntLit: {
            Token tok = take();
            errno = 0;
            long v = std::stol(tok.text);
            if (v > INT32_MAX) fail("integer literal out of range", tok.pos);
            auto node = make_expr(ExprKind::IntLit, tok.pos);
            node->int_val = v;
            node->type = ty_integer();
            return node;
        }
        case TokKind::RealLit: {
            Token tok = take();
            auto node = make_expr(ExprKind::RealLit, tok.pos);
            node->real_val = std::strtod(tok.text.c_str(), nullptr);
            node->type = ty_real();
            return node;
        }
        case TokKind::StringLit:
        case TokKind::CharEscape: {
            Token tok = take();
            if (!tok.segments.empty()) {
                // heredoc interpolation becomes a concatenation
                auto node = make_expr(ExprKind::Concat, tok.pos);
                for (auto& seg : tok.segments) {
                    if (seg.is_splice) {
                        Token id;
                        id.kind = TokKind::Identifier;
                        id.text = seg.text;
                        id.pos = tok.pos;
                        node->items.push_back(write_value(resolve_identifier(id)));
                    } else {
                        auto lit = make_expr(ExprKind::StringLit, tok.pos);
                        lit->str_val = seg.text;
                        lit->str_delim = 'H';
                        lit->type = make_string_literal_type((long)seg.text.size());
                        node->items.push_back(std::move(lit));
                    }
                }
                node->type = make_string_type();
                return node;
            }
            auto node = make_expr(ExprKind::StringLit, tok.pos);
            node->str_val = tok.text;
            node->str_delim = tok.delimiter ? tok.delimiter : '"';
            node->type = make_string_literal_type((long)tok.text.size());
            return node;
        }
        case TokKind::OpenBracket: {
            BracketStyle style = t.bracket;
            SourcePos pos = take().pos;
            bracket_depth_++;
            skip_newlines();
            ExprPtr e = parse_expression();
            skip_newlines();
            if (at_op(",")) {
                // constant list (2,5,11)
                auto node = make_expr(ExprKind::ArrayLit, pos);
                node->items.push_back(rvalue(std::move(e)));
                while (eat_op(",")) {
                    skip_newlines();
                    node->items.push_back(rvalue(parse_expression()));
                    skip_newlines();
                }
                if (!at(TokKind::CloseBracket) || cur().bracket != style)
                    fail("expected a matching closing bracket");
                take();
                bracket_depth_--;
                TypePtr et = node->items[0]->type;
                for (size_t i = 1; i < node->items.size(); i++)
                    node->items[i] = coerce(node->items[i], et, "list element");
                node->type = make_static_array({{0, (long)node->items.size() - 1}}, et);
                return node;
            }
            if (!at(TokKind::CloseBracket))
                fail("expected a matching closing bracket");
            if (cur().bracket != style) fail("mismatched bracket kind");
            take();
            bracket_depth_--;
            return e;
        }
        case TokKind::Identifier: {
            Token tok = take();
            return resolve_identifier(tok);
        }
        case TokKind::Operator: {
            if (t.text == "~") {
                Token tok = take();
                if (!tilde_type_)
                    fail("'~' is only allowed on the right side of an assignment",
                         tok.pos);
                auto node = make_expr(ExprKind::Tilde, tok.pos);
                node->type = tilde_type_;
                return node;
            }
            if (t.text == "$") {
                Token tok = take();
                if (!at(TokKind::Identifier))
                    fail("expected an index name after '$'", tok.pos);
                Token name = take();
                if (!ein_.hidden_scope) {
                    auto hs = std::make_shared<Scope>();
                    hs->parent = nullptr;
                    hs->block_kind = ScopeKind::Unit;
                    scope_pool_.push_back(hs);
                    ein_.hidden_scope = hs;
                }
                Symbol*& sym = ein_.indices[name.text];
                if (!sym) {
                    auto owned = std::make_unique<Symbol>();
                    owned->name = name.text;
                    owned->kind = SymbolKind::Constant;
                    owned->type = ty_integer();
                    owned->constant = true;
                    owned->synthetic = true;
                    owned->pos = name.pos;
                    owned->owner = ein_.hidden_scope.get();
                    sym = owned.get();
                    ein_.hidden_scope->owned.push_back(std::move(owned));
                    ein_.hidden_scope->table[name.text] = sym;
                }
                ein_.active = true;
                auto node = make_expr(ExprKind::Ident, tok.pos);
                node->sym = sym;
                node->type = ty_integer();
                node->dollar = true;
                return node;
            }
            break;
        }
        case TokKind::Keyword: {
            const std::string& kw = t.text;
            if (kw == "YES" || kw == "TRUE" || kw == "NO" || kw == "FALSE") {
                Token tok = take();
                auto node = make_expr(ExprKind::BoolLit, tok.pos);
                node->bool_val = kw == "YES" || kw == "TRUE";
                node->type = ty_boolean();
                return node;
            }
            if (kw == "NULL") {
                Token tok = take();
                auto node = make_expr(ExprKind::NullLit, tok.pos);
                if (at_type_declarator()) {
                    TypePtr t2 = parse_type_declarator(false);
                    TypePtr u = unwrap_named(t2);
                    node->ref_type =
                        (u && u->kind == TypeKind::PointerTo) ? t2 : make_pointer(t2);
                    node->type = node->ref_type;
                    node->null_typed = true;
                }
                return node;
            }
            if (kw == "IF") return parse_conditional_expr();
            if (kw == "SUM") return parse_looping_op(LoopOpKind::Sum);
            if (kw == "PRODUCT") return parse_looping_op(LoopOpKind::Product);
            if (kw == "MAX" || kw == "MIN" || kw == "ARGMAX" || kw == "ARGMIN") {
                if (peek(1).kind == TokKind::OpenBracket) {
                    Token tok = take();
                    Symbol* sym = scope_->find(tok.text);
                    if (!sym || sym->kind != SymbolKind::Overloads)
                        fail("builtin '" + tok.text + "' is unavailable", tok.pos);
                    return parse_call_on_set(sym->set, tok.pos, false);
                }
                Token tok = cur();
                if (kw == "MAX") return parse_looping_op(LoopOpKind::Max);
                if (kw == "MIN") return parse_looping_op(LoopOpKind::Min);
                if (kw == "ARGMAX") return parse_looping_op(LoopOpKind::ArgMax);
                return parse_looping_op(LoopOpKind::ArgMin);
            }
            if (kw == "READ") {
                Token tok = take();
                auto node = make_expr(ExprKind::ReadExpr, tok.pos);
                node->read_spec = parse_read_spec(false);
                node->type = ty_boolean();
                return node;
            }
            if (kw == "NEW") {
                Token tok = take();
                TypePtr nt = parse_type_declarator(false);
                auto node = make_expr(ExprKind::NewExpr, tok.pos);
                node->ref_type = nt;
                if (at(TokKind::OpenBracket)) {
                    take();
                    bracket_depth_++;
                    while (true) {
                        node->items.push_back(coerce(rvalue(parse_expression()),
                                                     ty_integer(), "size argument"));
                        if (eat_op(",")) continue;
                        break;
                    }
                    if (!at(TokKind::CloseBracket)) fail("expected )");
                    take();
                    bracket_depth_--;
                }
                TypePtr u = unwrap_named(nt);
                node->type = (u && u->kind == TypeKind::PointerTo) ? nt
                                                                   : make_pointer(nt);
                return node;
            }
            if ((kw == "OPEN" || kw == "CREATE") &&
                peek(1).kind == TokKind::OpenBracket) {
                Token tok = take();
                take();
                bracket_depth_++;
                auto node = make_expr(kw == "OPEN" ? ExprKind::OpenFn
                                                   : ExprKind::CreateFn,
                                      tok.pos);
                node->a = rvalue(parse_expression());
                if (!is_string_type_p(node->a->type))
                    fail("expected a file name STRING", node->a->pos);
                if (!at(TokKind::CloseBracket)) fail("expected )");
                take();
                bracket_depth_--;
                node->type = make_file_type(ty_char());
                return node;
            }
            if (kw == "POSITION" && peek(1).kind == TokKind::OpenBracket) {
                Token tok = take();
                take();
                bracket_depth_++;
                auto node = make_expr(ExprKind::PositionFn, tok.pos);
                node->a = rvalue(parse_expression());
                if (!at(TokKind::CloseBracket)) fail("expected )");
                take();
                bracket_depth_--;
                node->type = ty_integer();
                return node;
            }
            if (kw == "SIZEOF") {
                Token tok = take();
                if (!at(TokKind::OpenBracket)) fail("expected ( after SIZEOF");
                take();
                bracket_depth_++;
                TypePtr target;
                if (at_type_declarator()) {
                    target = parse_type_declarator(false);
                } else {
                    ExprPtr e = parse_expression();
                    target = e->type;
                }
                if (!at(TokKind::CloseBracket)) fail("expected )");
                take();
                bracket_depth_--;
                auto size = sizeof_of(target);
                if (!size)
                    fail("SIZEOF requires compile-time dimensions", tok.pos);
                auto node = make_expr(ExprKind::IntLit, tok.pos);
                node->int_val = *size;
                node->type = ty_integer();
                return node;
            }
            if (kw == "RESULT") {
                Token tok = take();
                Symbol* sym = scope_->find("RESULT");
                if (!sym) fail("RESULT is only available inside a FUNCTION", tok.pos);
                auto node = make_expr(ExprKind::Ident, tok.pos);
                node->sym = sym;
                node->type = sym->type;
                node->place = true;
                node->str_val = "RESULT";
                return node;
            }
            // conversion builtins and FROM expressions
            if (kw == "INTEGER" || kw == "REAL" || kw == "CHAR" || kw == "SINGLE" ||
                kw == "BOOLEAN") {
                if (peek(1).kind == TokKind::OpenBracket) {
                    Token tok = take();
                    Symbol* sym = scope_->find("__conv_" + tok.text);
                    if (!sym || sym->kind != SymbolKind::Overloads)
                        fail("conversion '" + tok.text + "' is unavailable", tok.pos);
                    return parse_call_on_set(sym->set, tok.pos, false);
                }
                if (peek(1).is_kw("FROM")) {
                    TypePtr ft = parse_type_declarator(false);
                    take();  // FROM
                    auto node = make_expr(ExprKind::FromFile, t.pos);
                    node->ref_type = ft;
                    node->a = rvalue(parse_unary());
                    node->type = ft;
                    return node;
                }
                fail("type keyword '" + kw + "' cannot appear here");
            }
            if (at_type_declarator()) {
                TypePtr ft = parse_type_declarator(false);
                if (eat_kw("FROM")) {
                    auto node = make_expr(ExprKind::FromFile, t.pos);
                    node->ref_type = ft;
                    node->a = rvalue(parse_unary());
                    node->type = ft;
                    return node;
                }
                fail("expected FROM after the type in an expression");
            }
            break;
        }
        default:
            break;
    }
    fail("unexpected '" + t.text + "' in expression");
}

}  // namespace cpl
