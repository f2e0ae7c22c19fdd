#include "cpl/parser.hpp"

#include <algorithm>
#include <cassert>

#include "cpl/lexer.hpp"
#include "parser_impl.hpp"

namespace cpl {

// ---------------- token cursor ----------------

const Token& TokenCursor::peek(int ahead) const {
    static Token eoi{TokKind::EndOfInput, "", {}, BracketStyle::None, 0, false, {}};
    int remaining = ahead;
    for (int li = (int)layers.size() - 1; li >= 0; li--) {
        const Layer& L = layers[li];
        long avail = (long)L.toks.size() - (long)L.pos;
        if (li == 0) {
            size_t idx = L.pos + remaining;
            if (idx < L.toks.size()) return L.toks[idx];
            return L.toks.empty() ? eoi : L.toks.back();
        }
        if (remaining < avail) return L.toks[L.pos + remaining];
        remaining -= avail;
    }
    return eoi;
}

Token TokenCursor::take() {
    while (layers.size() > 1 && layers.back().pos >= layers.back().toks.size())
        layers.pop_back();
    Layer& L = layers.back();
    if (L.pos < L.toks.size()) {
        Token t = L.toks[L.pos++];
        while (layers.size() > 1 && layers.back().pos >= layers.back().toks.size())
            layers.pop_back();
        return t;
    }
    return L.toks.empty() ? Token{} : L.toks.back();
}

void TokenCursor::push_layer(std::vector<Token> toks) {
    while (!toks.empty() && toks.back().kind == TokKind::EndOfInput) toks.pop_back();
    if (toks.empty()) return;
    layers.push_back({std::move(toks), 0});
}

// ---------------- small helpers ----------------

namespace {
thread_local std::vector<const std::set<std::string>*> g_closer_stack;
thread_local std::vector<bool> g_single_line_stack;
}


bool Parser::eat_kw(const char* kw) {
    if (at_kw(kw)) {
        take();
        return true;
    }
    return false;
}

bool Parser::eat_op(const char* op) {
    if (at_op(op)) {
        take();
        return true;
    }
    return false;
}

void Parser::expect_kw(const char* kw) {
    if (!eat_kw(kw))
        fail(std::string("expected '") + kw + "', found '" + cur().text + "'");
}

void Parser::expect_op(const char* op) {
    if (!eat_op(op))
        fail(std::string("expected '") + op + "', found '" + cur().text + "'");
}

void Parser::skip_newlines() {
    while (at(TokKind::Newline)) take();
}

void Parser::skip_separators() {
    while (at(TokKind::Newline) || at(TokKind::Semicolon)) take();
}

void Parser::end_statement() {
    if (at(TokKind::Newline)) {
        // single-line blocks end at the newline; leave it for the list
        if (!g_single_line_stack.empty() && g_single_line_stack.back()) return;
        take();
        return;
    }
    if (at(TokKind::Semicolon)) {
        take();
        return;
    }
    if (at(TokKind::EndOfInput)) return;
    if (at_closer()) return;  // the enclosing block consumes it
    fail("unexpected '" + cur().text + "' at end of statement");
}

void Parser::fail(const std::string& msg, SourcePos pos) {
    if (!pos.valid()) pos = cur().pos;
    throw CompileError({Diagnostic::Severity::Error, pos, msg});
}

Scope* Parser::push_scope(ScopeKind kind, const Stmt* block) {
    auto s = std::make_shared<Scope>();
    s->parent = scope_;
    s->block_kind = kind;
    s->block = block;
    scope_pool_.push_back(s);
    scope_ = s.get();
    return scope_;
}

Scope* Parser::make_detached_scope(ScopeKind kind) {
    auto s = std::make_shared<Scope>();
    s->parent = nullptr;
    s->block_kind = kind;
    scope_pool_.push_back(s);
    return s.get();
}

void Parser::pop_scope(bool check_pending) {
    if (check_pending) {
        for (Symbol* sym : scope_->pending_deferred)
            if (!sym->assigned)
                fail("CONSTANT '" + sym->name + "' was never assigned a value", sym->pos);
        for (auto& [set, member] : scope_->pending_prototypes)
            if (member->prototype)
                fail("FOLLOWS prototype '" + set->name + "' has no body");
    }
    scope_ = scope_->parent;
}

Symbol* Parser::lookup_plain(const std::string& name) const {
    return scope_->find(name);
}

Symbol* Parser::declare_value_symbol(const std::string& name, SymbolKind kind,
                                     TypePtr t, SourcePos pos, bool constant) {
    Symbol* sym = declare(*scope_, name, kind, std::move(t), pos);
    sym->constant = constant;
    return sym;
}

// ---------------- statement lists ----------------


bool Parser::at_closer() const {
    if (cur().kind != TokKind::Keyword) return false;
    if (g_closer_stack.empty()) return false;
    return g_closer_stack.back()->count(cur().text) != 0;
}

bool Parser::at_stmt_end() const {
    return cur().is_end() || at_closer();
}

std::vector<StmtPtr> Parser::parse_statement_list(const std::set<std::string>& closers,
                                                  bool single_line) {
    g_closer_stack.push_back(&closers);
    g_single_line_stack.push_back(single_line);
    std::vector<StmtPtr> out;
    while (true) {
        if (single_line) {
            while (at(TokKind::Semicolon)) take();
            if (at(TokKind::Newline) || at(TokKind::EndOfInput)) break;
        } else {
            skip_separators();
            if (at(TokKind::EndOfInput)) break;
        }
        if (cur().kind == TokKind::Keyword && closers.count(cur().text)) break;
        try {
            StmtPtr s = parse_statement();
            if (s) out.push_back(std::move(s));
        } catch (CompileError& e) {
            diags_.push_back(e.diag);
            bracket_depth_ = 0;
            sel_ctx_.clear();
            ein_ = {};
            while (!(at(TokKind::Newline) || at(TokKind::Semicolon) ||
                     at(TokKind::EndOfInput)))
                take();
        }
    }
    g_closer_stack.pop_back();
    g_single_line_stack.pop_back();
    return out;
}

StmtPtr Parser::parse_block_until(const std::set<std::string>& closers, ScopeKind kind,
                                  SourcePos pos, bool single_line) {
    auto block = make_stmt(StmtKind::Block, pos);
    push_scope(kind, block.get());
    block->scope = scope_pool_.back();
    block->body = parse_statement_list(closers, single_line);
    pop_scope();
    return block;
}

// ---------------- statement dispatch ----------------

StmtPtr Parser::parse_statement() {
    ein_ = {};
    const Token& t = cur();
    if (t.kind == TokKind::Keyword) {
        const std::string& kw = t.text;
        if (kw == "IF") return parse_if(true);
        if (kw == "LOOP") return parse_loop(false);
        if (kw == "DO") return parse_do();
        if (kw == "CASE") return parse_case();
        if (kw == "WITH") return parse_with();
        if (kw == "EXIT") return parse_exit();
        if (kw == "STOP") {
            auto s = make_stmt(StmtKind::Stop, take().pos);
            end_statement();
            return s;
        }
        if (kw == "ERROR") return parse_error_stmt();
        if (kw == "TRAP") return parse_trap();
        if (kw == "MODULE") return parse_module();
        if (kw == "USE") return parse_use();
        if (kw == "INCLUDE") {
            auto blk = make_stmt(StmtKind::Block, cur().pos);
            parse_include(blk->body);
            return blk;
        }
        if (kw == "NEW") return parse_new();
        if (kw == "FREE") return parse_free();
        if (kw == "OPEN") return parse_open_create(false);
        if (kw == "CREATE") return parse_open_create(true);
        if (kw == "FLUSH") return parse_flush();
        if (kw == "POSITION") return parse_position();
        if (kw == "WRITE") return parse_write(false);
        if (kw == "READ") return parse_read_stmt(false);
        if (kw == "BINARY") {
            take();
            if (at_kw("WRITE")) return parse_write(true);
            if (at_kw("READ")) return parse_read_stmt(true);
            fail("expected WRITE or READ after BINARY");
        }
        if (kw == "ASK") return parse_ask();
        if (kw == "DEFAULTFORMAT") return parse_defaultformat();
        if (kw == "SUBROUTINE") {
            take();
            return parse_subroutine(false, nullptr, false);
        }
        if (kw == "FUNCTION") {
            take();
            return parse_subroutine(true, nullptr, false);
        }
        if (kw == "INLINE") {
            take();
            if (at_kw("SUBROUTINE")) {
                take();
                return parse_subroutine(false, nullptr, true);
            }
            if (at_kw("LOOP")) return parse_loop(true);
            if (at_kw("FUNCTION")) {
                take();
                return parse_subroutine(true, nullptr, true);
            }
            TypePtr result = parse_type_declarator(false);
            expect_kw("FUNCTION");
            return parse_subroutine(true, result, true);
        }
        if (kw == "RETURN") {
            SourcePos pos = take().pos;
            Symbol* res = lookup_plain("RESULT");
            if (fn_stack_.empty() || !res)
                fail("RETURN is only allowed inside a FUNCTION", pos);
            auto blk = make_stmt(StmtKind::Block, pos);
            auto asg = make_stmt(StmtKind::Assign, pos);
            auto lhs = make_expr(ExprKind::Ident, pos);
            lhs->sym = res;
            lhs->type = res->type;
            lhs->place = true;
            asg->lhs = lhs;
            asg->rhs = coerce(rvalue(parse_expression()), res->type, "RESULT");
            auto ex = make_stmt(StmtKind::Exit, pos);
            ex->name = fn_stack_.back();
            blk->body = {asg, ex};
            end_statement();
            return blk;
        }
        if (kw == "CONSTANT") {
            take();
            if (at(TokKind::Identifier) && peek(1).is_kw("FOLLOWS")) {
                Token name = take();
                take();  // FOLLOWS
                auto st = make_stmt(StmtKind::Decl, name.pos);
                Symbol* sym = declare_value_symbol(name.text, SymbolKind::Constant,
                                                   nullptr, name.pos, true);
                sym->deferred = true;
                scope_->pending_deferred.push_back(sym);
                st->decl_constant = true;
                st->decl_follows = true;
                st->decls.push_back({sym, nullptr, {}});
                end_statement();
                return st;
            }
            bool variable_kw = eat_kw("VARIABLE");
            return parse_declaration(!variable_kw, variable_kw);
        }
        if (kw == "VARIABLE") {
            take();
            return parse_declaration(false, true);
        }
        if (kw == "TYPE") {
            take();
            return parse_type_alias();
        }
        if (kw == "RESULT") return parse_identifier_statement();
        if (at_type_declarator()) {
            TypePtr ty = parse_type_declarator(true);
            if (at_kw("FUNCTION") && peek(1).kind == TokKind::Identifier) {
                take();
                return parse_subroutine(true, ty, false);
            }
            if (eat_kw("VARIABLE")) return parse_declaration_with_type(ty, false, true);
            if (eat_kw("CONSTANT")) return parse_declaration_with_type(ty, true, false);
            return parse_declaration_with_type(ty, false, false);
        }
        fail("unexpected keyword '" + kw + "' at start of statement");
    }
    if (t.kind == TokKind::Identifier) return parse_identifier_statement();
    if (t.is_op("#") && peek(1).kind == TokKind::Identifier && peek(1).text == "define")
        return parse_define_macro();
    fail("unexpected '" + t.text + "' at start of statement");
}

StmtPtr Parser::parse_type_alias() {
    if (!at(TokKind::Identifier)) fail("expected a new type name after TYPE");
    Token name = take();
    expect_op("=");
    skip_newlines();
    TypePtr def = parse_type_declarator(true);
    auto st = make_stmt(StmtKind::TypeDecl, name.pos);
    TypePtr named = make_named(name.text, def);
    Symbol* sym = declare(*scope_, name.text, SymbolKind::Type, named, name.pos);
    // commit any pending POINTER TO <name>
    auto slot = uncommitted_slots_.find(name.text);
    if (slot != uncommitted_slots_.end() && !slot->second->resolved)
        slot->second->resolved = named;
    st->sym = sym;
    end_statement();
    return st;
}

StmtPtr Parser::parse_exit() {
    SourcePos pos = take().pos;
    if (!(at(TokKind::Identifier)))
        fail("EXIT requires the name of an enclosing LOOP, SUBROUTINE, FUNCTION or MODULE");
    Token name = take();
    if (std::find(exit_targets_.begin(), exit_targets_.end(), name.text) ==
        exit_targets_.end())
        fail("EXIT target '" + name.text + "' does not name an enclosing block", name.pos);
    auto st = make_stmt(StmtKind::Exit, pos);
    st->name = name.text;
    end_statement();
    return st;
}

StmtPtr Parser::parse_error_stmt() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::ErrorStmt, pos);
    bool comma = false;
    while (!at_stmt_end()) {
        WriteItem item;
        item.comma_before = comma;
        item.value = rvalue(parse_expression());
        st->write_items.push_back(std::move(item));
        comma = false;
        if (at_op(",")) {
            take();
            skip_newlines();
            comma = true;
            continue;
        }
    }
    if (st->write_items.empty()) fail("ERROR requires a message", pos);
    end_statement();
    return st;
}

StmtPtr Parser::parse_defaultformat() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::DefaultFormat, pos);
    if (at(TokKind::RealLit)) {
        std::string text = take().text;
        size_t dot = text.find('.');
        st->width = std::stoi(text.substr(0, dot));
        st->precision = dot + 1 < text.size() ? std::stoi(text.substr(dot + 1)) : 0;
    } else if (at(TokKind::IntLit)) {
        st->width = std::stoi(take().text);
        st->precision = 0;
    } else {
        fail("DEFAULTFORMAT expects digits like 1.15");
    }
    end_statement();
    return st;
}

StmtPtr Parser::parse_define_macro() {
    SourcePos pos = take().pos;  // '#'
    take();                      // define
    if (!at(TokKind::Identifier)) fail("expected a name after #define");
    Token name = take();
    std::vector<Token> toks;
    while (!cur().is_end()) toks.push_back(take());
    if (toks.empty()) fail("#define requires a replacement", name.pos);
    auto st = make_stmt(StmtKind::DeferredDecl, pos);
    Symbol* sym = declare(*scope_, name.text, SymbolKind::Alias, nullptr, name.pos);
    sym->alias_tokens = toks;
    st->sym = sym;
    st->alias_tokens = std::move(toks);
    st->is_macro_define = true;
    end_statement();
    return st;
}

// ---------------- IF ----------------

StmtPtr Parser::parse_if(bool as_statement) {
    SourcePos pos = take().pos;  // IF
    ExprPtr cond = coerce(rvalue(parse_expression()), ty_boolean(), "IF condition");
    expect_kw("THEN");
    auto st = make_stmt(StmtKind::If, pos);
    st->cond = cond;

    // flow-sensitive narrowing for IF dyn IS T THEN
    auto narrow = [&]() {
        const Expr* c = st->cond.get();
        while (c->kind == ExprKind::Convert) c = c->a.get();
        if (c->kind != ExprKind::IsTest) return;
        ExprPtr subj_holder = c->a;
        const Expr* subj = c->a.get();
        while (subj->kind == ExprKind::Convert) subj = subj->a.get();
        if (subj->kind != ExprKind::Ident || !subj->sym) return;
        TypePtr u = subj->sym->type ? unwrap_named(subj->sym->type) : nullptr;
        if (!u || u->kind != TypeKind::DynamicPointer) return;
        Symbol* narrowed = declare_raw(*scope_, subj->sym->name, SymbolKind::Variable,
                                       make_pointer(c->ref_type));
        narrowed->constant = true;
        narrowed->pos = subj->pos;
        st->sym = narrowed;      // bound when the branch is taken
        st->expr = subj_holder;  // the tagged reference
    };

    auto parse_then = [&](bool single_line) {
        auto then_block = make_stmt(StmtKind::Block, pos);
        push_scope(ScopeKind::If, then_block.get());
        then_block->scope = scope_pool_.back();
        narrow();
        then_block->body = parse_statement_list({"ELSE", "END"}, single_line);
        pop_scope();
        st->then_branch = then_block;
    };

    bool multi = at(TokKind::Newline);
    if (multi) take();
    parse_then(!multi);

    if (at_kw("ELSE")) {
        take();
        if (at_kw("IF")) {
            // chained ELSE IF: the inner IF consumes the single END IF
            auto else_block = make_stmt(StmtKind::Block, cur().pos);
            push_scope(ScopeKind::If, else_block.get());
            else_block->scope = scope_pool_.back();
            else_block->body = {parse_if(true)};
            pop_scope();
            st->else_branch = else_block;
            return st;
        }
        bool else_multi = at(TokKind::Newline);
        if (else_multi) take();
        st->else_branch = parse_block_until({"END"}, ScopeKind::If, cur().pos,
                                            /*single_line=*/!else_multi);
        if (else_multi) {
            if (!at_kw("END"))
                fail("unclosed IF at line " + std::to_string(pos.line), pos);
            take();
            expect_kw("IF");
        } else if (at_kw("END")) {
            take();
            expect_kw("IF");
        }
        end_statement();
        return st;
    }
    if (multi) {
        if (!at_kw("END")) fail("unclosed IF at line " + std::to_string(pos.line), pos);
        take();
        expect_kw("IF");
    } else if (at_kw("END")) {
        take();
        expect_kw("IF");
    }
    end_statement();
    return st;
}

// ---------------- loops ----------------

StmtPtr Parser::parse_loop(bool inline_hint) {
    SourcePos pos = take().pos;  // LOOP
    auto st = make_stmt(StmtKind::Loop, pos);
    st->inline_loop = inline_hint;
    if (at(TokKind::Identifier)) st->loop_name = take().text;

    push_scope(ScopeKind::Loop, st.get());
    st->scope = scope_pool_.back();
    exit_targets_.push_back(st->loop_name);

    bool have_head_test = true;
    if (eat_kw("WHILE")) {
        st->test = coerce(rvalue(parse_expression()), ty_boolean(), "WHILE condition");
    } else if (eat_kw("UNTIL")) {
        st->test_until = true;
        st->test = coerce(rvalue(parse_expression()), ty_boolean(), "UNTIL condition");
    } else if (eat_kw("FOR")) {
        st->clause = parse_for_clause();
    } else {
        have_head_test = false;
    }
    st->head_test = have_head_test;
    st->infinite = !have_head_test;

    bool single_line = eat_op(":");
    if (single_line) {
        st->body = parse_statement_list({}, true);
        end_statement();
    } else {
        end_statement();
        st->body = parse_statement_list({"REPEAT"});
        if (!at_kw("REPEAT"))
            fail("unclosed LOOP at line " + std::to_string(pos.line), pos);
        take();
        if (at_kw("LOOP")) {
            take();
        } else if (at(TokKind::Identifier)) {
            Token n = take();
            if (n.text != st->loop_name)
                fail("REPEAT " + n.text + " does not match LOOP " +
                         (st->loop_name.empty() ? "(unnamed)" : st->loop_name),
                     n.pos);
        }
        if (!have_head_test) {
            if (eat_kw("WHILE")) {
                st->test = coerce(rvalue(parse_expression()), ty_boolean(), "WHILE");
                st->infinite = false;
            } else if (eat_kw("UNTIL")) {
                st->test_until = true;
                st->test = coerce(rvalue(parse_expression()), ty_boolean(), "UNTIL");
                st->infinite = false;
            } else if (eat_kw("FOR")) {
                st->clause = parse_for_clause();
                st->infinite = false;
            }
        }
        end_statement();
    }
    if (st->clause) {
        std::vector<const Stmt*> body;
        for (auto& b : st->body) body.push_back(b.get());
        infer_clause_bounds(*st->clause, body, {});
    }
    if (st->inline_loop) {
        if (!st->clause || st->clause->items.size() != 1 ||
            st->clause->items[0].kind != ForItemKind::In)
            fail("INLINE LOOP requires a FOR ... IN clause", pos);
        const ForItem& it = st->clause->items[0];
        TypePtr at = it.array->type ? unwrap_named(it.array->type) : nullptr;
        bool static_dims = at && at->kind == TypeKind::Array && !at->dims.empty();
        if (static_dims)
            for (auto& d : at->dims)
                if (!d.known) static_dims = false;
        if (!static_dims)
            fail("INLINE LOOP requires array dimensions known at compile time", pos);
    }
    exit_targets_.pop_back();
    pop_scope();
    return st;
}

StmtPtr Parser::parse_do() {
    SourcePos pos = take().pos;  // DO
    auto st = make_stmt(StmtKind::Loop, pos);
    st->head_test = false;
    push_scope(ScopeKind::Loop, st.get());
    st->scope = scope_pool_.back();
    exit_targets_.push_back("");

    // the body precedes its test, but a FOR clause declares the loop
    // indices the body uses; collect the body tokens first
    std::vector<Token> body_toks;
    int depth = 0;
    while (true) {
        if (at(TokKind::EndOfInput) ||
            (depth == 0 && (at(TokKind::Newline))))
            fail("DO requires WHILE, UNTIL or FOR on the same line", pos);
        if (depth == 0 &&
            (at_kw("WHILE") || at_kw("UNTIL") || at_kw("FOR")))
            break;
        if (at(TokKind::OpenBracket)) depth++;
        if (at(TokKind::CloseBracket)) depth--;
        body_toks.push_back(take());
    }
    bool is_for = at_kw("FOR");
    bool is_until = at_kw("UNTIL");
    take();  // the test keyword
    size_t marker_base = pending_lohi_.size();
    if (is_for) st->clause = parse_for_clause();

    // now parse the collected body
    body_toks.push_back(
        Token{TokKind::EndOfInput, "", pos, BracketStyle::None, 0, false, {}});
    TokenCursor saved = std::move(cursor);
    cursor = TokenCursor{};
    cursor.layers.push_back({std::move(body_toks), 0});
    int saved_depth = bracket_depth_;
    bracket_depth_ = 0;
    st->body = parse_statement_list({}, true);
    bracket_depth_ = saved_depth;
    cursor = std::move(saved);

    if (!is_for) {
        st->test_until = is_until;
        st->test = coerce(rvalue(parse_expression()), ty_boolean(),
                          is_until ? "UNTIL condition" : "WHILE condition");
    } else {
        st->head_test = true;
    }
    if (st->clause) {
        std::vector<const Stmt*> body;
        for (auto& b : st->body) body.push_back(b.get());
        infer_clause_bounds(*st->clause, body, {});
    }
    (void)marker_base;
    exit_targets_.pop_back();
    pop_scope();
    end_statement();
    return st;
}

// ---------------- CASE ----------------

StmtPtr Parser::parse_case() {
    SourcePos pos = take().pos;  // CASE
    auto st = make_stmt(StmtKind::Case, pos);
    st->cond = coerce(rvalue(parse_expression()), ty_integer(), "CASE selector");
    expect_kw("OF");
    end_statement();

    std::set<long> seen;
    while (true) {
        skip_separators();
        if (at(TokKind::EndOfInput)) fail("unclosed CASE", pos);
        if (at_kw("END")) {
            take();
            expect_kw("CASE");
            break;
        }
        if (at_kw("ELSE")) {
            take();
            skip_newlines();
            st->default_arm = parse_case_arm_body();
            expect_kw("END");
            expect_kw("CASE");
            break;
        }
        CaseArm arm;
        while (true) {
            ExprPtr tag = parse_expression();
            auto v = fold_int(tag);
            if (!v) fail("CASE tags must be INTEGER compile-time constants", tag->pos);
            if (!seen.insert(*v).second)
                fail("duplicate CASE tag " + std::to_string(*v), tag->pos);
            arm.tags.push_back(*v);
            arm.tag_exprs.push_back(tag);
            if (eat_op(",")) continue;
            break;
        }
        expect_op(":");
        arm.body = parse_case_arm_body();
        st->arms.push_back(std::move(arm));
    }
    end_statement();
    return st;
}

// an arm body runs until the next tag line, ELSE, or END CASE
StmtPtr Parser::parse_case_arm_body() {
    auto block = make_stmt(StmtKind::Block, cur().pos);
    push_scope(ScopeKind::Case, block.get());
    block->scope = scope_pool_.back();
    while (true) {
        skip_separators();
        if (at(TokKind::EndOfInput) || at_kw("END") || at_kw("ELSE")) break;
        if (at_case_tag()) break;
        try {
            StmtPtr s = parse_statement();
            if (s) block->body.push_back(std::move(s));
        } catch (CompileError& e) {
            diags_.push_back(e.diag);
            bracket_depth_ = 0;
            sel_ctx_.clear();
            ein_ = {};
            while (!(at(TokKind::Newline) || at(TokKind::Semicolon) ||
                     at(TokKind::EndOfInput)))
                take();
        }
    }
    pop_scope();
    return block;
}

// lookahead: INTEGER-constant expressions separated by commas, ending ':'
bool Parser::at_case_tag() const {
    int i = 0;
    bool any = false;
    while (true) {
        if (peek(i).is_op("-")) i++;
        const Token& t = peek(i);
        if (t.kind == TokKind::IntLit) {
            i++;
        } else if (t.kind == TokKind::Identifier) {
            Symbol* sym = scope_->find(t.text);
            if (!sym || !sym->folded) return false;
            i++;
        } else {
            return false;
        }
        any = true;
        if (peek(i).is_op(",")) {
            i++;
            continue;
        }
        break;
    }
    return any && peek(i).is_op(":");
}

// ---------------- WITH ----------------

StmtPtr Parser::parse_with() {
    SourcePos pos = take().pos;  // WITH
    auto st = make_stmt(StmtKind::Block, pos);
    push_scope(ScopeKind::With, st.get());
    st->scope = scope_pool_.back();
    while (true) {
        ExprPtr subj = parse_expression();
        scope_->with_subjects.push_back({subj});
        if (eat_op(",")) {
            skip_newlines();
            continue;
        }
        break;
    }
    bool colon = eat_op(":");
    if (at(TokKind::Newline) || at(TokKind::EndOfInput)) {
        if (!at(TokKind::EndOfInput)) take();
        const std::set<std::string>* outer =
            g_closer_stack.empty() ? nullptr : g_closer_stack.back();
        std::set<std::string> closers = outer ? *outer : std::set<std::string>{};
        closers.insert("END");
        st->body = parse_statement_list(closers);
        if (at_kw("END") && peek(1).is_kw("WITH")) {
            take();
            take();
            end_statement();
        }
    } else {
        if (!colon) fail("expected ':' or newline after WITH subjects");
        st->body = parse_statement_list({}, true);
        end_statement();
    }
    pop_scope();
    return st;
}

// ---------------- TRAP ----------------

StmtPtr Parser::parse_trap() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::Trap, pos);
    if (at(TokKind::StringLit)) {
        st->trap_prefix = take().text;
        st->trap_all = false;
    }
    end_statement();
    st->handler = parse_block_until({"END"}, ScopeKind::Trap, cur().pos);
    expect_kw("END");
    expect_kw("TRAP");
    end_statement();
    return st;
}

// ---------------- MODULE ----------------

StmtPtr Parser::parse_module() {
    SourcePos pos = take().pos;
    auto st = make_stmt(StmtKind::ModuleStmt, pos);
    if (at(TokKind::Identifier)) st->name = take().text;
    end_statement();
    push_scope(ScopeKind::Module, st.get());
    st->scope = scope_pool_.back();
    exit_targets_.push_back(st->name);
    st->body = parse_statement_list({"END"});
    if (!at_kw("END")) fail("unclosed MODULE at line " + std::to_string(pos.line), pos);
    take();
    if (at_kw("MODULE")) {
        take();
    } else if (at(TokKind::Identifier)) {
        Token n = take();
        if (n.text != st->name)
            fail("END " + n.text + " does not close MODULE " +
                     (st->name.empty() ? "(unnamed)" : st->name),
                 n.pos);
    } else if (!st->name.empty()) {
        fail("expected END " + st->name);
    }
    exit_targets_.pop_back();
    pop_scope();
    end_statement();
    return st;
}

// ---------------- USE / INCLUDE ----------------

std::string Parser::parse_path_to_eol() {
    if (at(TokKind::StringLit)) return take().text;
    std::string path;
    while (!cur().is_end()) path += take().text;
    if (path.empty()) fail("expected a file name");
    return path;
}

StmtPtr Parser::parse_use() {
    SourcePos pos = take().pos;
    std::string path = parse_path_to_eol();
    if (!modules_) fail("USE is not available in this context", pos);
    auto st = make_stmt(StmtKind::Use, pos);
    st->use_path = path;
    st->body = modules_->handle_use(path, *scope_, pos);
    end_statement();
    return st;
}

void Parser::parse_include(std::vector<StmtPtr>& out) {
    SourcePos pos = take().pos;  // INCLUDE
    if (!modules_) fail("INCLUDE is not available in this context", pos);
    std::string path;
    if (at(TokKind::StringLit)) {
        path = take().text;
    } else {
        while (!cur().is_end() && !at(TokKind::OpenBracket)) path += take().text;
    }
    if (path.empty()) fail("expected a file name after INCLUDE", pos);
    std::vector<std::pair<std::string, std::vector<Token>>> aliases;
    if (at(TokKind::OpenBracket)) {
        take();
        while (true) {
            if (!at(TokKind::Identifier)) fail("expected name=value in INCLUDE");
            std::string name = take().text;
            expect_op("=");
            std::vector<Token> val;
            int depth = 0;
            while (true) {
                if (at(TokKind::EndOfInput)) fail("unterminated INCLUDE arguments");
                if (depth == 0 && (at_op(",") || at(TokKind::CloseBracket))) break;
                if (at(TokKind::OpenBracket)) depth++;
                if (at(TokKind::CloseBracket)) depth--;
                val.push_back(take());
            }
            aliases.push_back({name, std::move(val)});
            if (eat_op(",")) continue;
            if (at(TokKind::CloseBracket)) {
                take();
                break;
            }
        }
    }
    std::string resolved;
    std::string text = modules_->begin_include(path, pos, &resolved);
    end_statement();

    std::vector<Symbol*> temp_syms;
    for (auto& [name, toks] : aliases) {
        Symbol* sym = declare(*scope_, name, SymbolKind::Alias, nullptr, pos);
        sym->alias_tokens = toks;
        temp_syms.push_back(sym);
    }
    std::vector<Token> toks = tokenize(text, resolved);
    TokenCursor saved = std::move(cursor);
    cursor = TokenCursor{};
    cursor.layers.push_back({std::move(toks), 0});
    auto stmts = parse_statement_list({});
    if (!at(TokKind::EndOfInput))
        diags_.push_back({Diagnostic::Severity::Error, cur().pos,
                          "unexpected '" + cur().text + "' in included file"});
    cursor = std::move(saved);
    modules_->end_include();
    for (Symbol* sym : temp_syms) scope_->table.erase(sym->name);
    for (auto& s : stmts) out.push_back(std::move(s));
}

// ---------------- driver ----------------

CompileResult Compiler::compile(std::vector<Token> tokens, Scope& scope) {
    Parser p(modules_, interactive);
    return p.run(std::move(tokens), scope);
}

CompileResult Parser::run(std::vector<Token> tokens, Scope& scope) {
    cursor.layers.push_back({std::move(tokens), 0});
    scope_ = &scope;
    CompileResult result;
    result.stmts = parse_statement_list({});
    if (!at(TokKind::EndOfInput))
        diags_.push_back({Diagnostic::Severity::Error, cur().pos,
                          "unexpected '" + cur().text + "'"});
    if (!interactive_) {
        for (Symbol* sym : scope.pending_deferred)
            if (!sym->assigned)
                diags_.push_back({Diagnostic::Severity::Error, sym->pos,
                                  "CONSTANT '" + sym->name +
                                      "' was never assigned a value"});
        for (auto& [set, member] : scope.pending_prototypes)
            if (member->prototype)
                diags_.push_back({Diagnostic::Severity::Error, SourcePos{},
                                  "FOLLOWS prototype '" + set->name + "' has no body"});
        scope.pending_deferred.clear();
        scope.pending_prototypes.clear();
    }
    result.diagnostics = diags_;
    result.ok = std::none_of(diags_.begin(), diags_.end(), [](const Diagnostic& d) {
        return d.severity == Diagnostic::Severity::Error;
    });
    result.scopes = std::move(scope_pool_);
    return result;
}

// ---------------- continue_or_end ----------------

bool continue_or_end(const std::vector<Token>& prefix) {
    int depth = 0;
    for (auto& t : prefix) {
        if (t.kind == TokKind::OpenBracket) depth++;
        if (t.kind == TokKind::CloseBracket) depth--;
    }
    if (depth > 0) return true;
    for (auto it = prefix.rbegin(); it != prefix.rend(); ++it) {
        if (it->kind == TokKind::Newline) continue;
        const Token& t = *it;
        if (t.kind == TokKind::OpenBracket) return true;
        if (t.kind == TokKind::Operator) {
            if (t.text == "^" || t.text == "~" || t.text == "./.") return false;
            return true;  // binary operators, comma, '=', '..', custom seps
        }
        if (t.kind == TokKind::Keyword) {
            static const std::set<std::string> needs_operand = {
                "TO", "BY", "DOWN", "OF", "FROM", "AND", "OR", "NOT", "DIV",
                "MOD", "CDIV", "CMOD", "BITAND", "BITOR", "BITXOR", "BITNOT",
                "RSHIFTED", "LSHIFTED", "IS", "IN", "EXCEPT", "SUM", "PRODUCT",
                "MAX", "MIN", "ARGMAX", "ARGMIN", "NEW", "POINTER", "DYNAMIC",
                "STORED", "ARRAY", "WITH", "ERROR", "CONSTANT", "VARIABLE",
                "TYPE", "USE", "INCLUDE", "OPEN", "CREATE", "FLUSH", "POSITION",
                "EXIT", "FREE", "CASE", "ASK", "DEFAULTFORMAT",
            };
            return needs_operand.count(t.text) != 0;
        }
        return false;
    }
    return false;
}

int block_depth_delta(const std::vector<Token>& line) {
    // counts block openers/closers on one logical line (REPL heuristics)
    int delta = 0;
    for (size_t i = 0; i < line.size(); i++) {
        const Token& t = line[i];
        if (t.kind != TokKind::Keyword) continue;
        auto next_is_newline = [&](size_t k) {
            for (size_t j = k + 1; j < line.size(); j++) {
                if (line[j].kind == TokKind::Newline) return true;
                return false;
            }
            return true;
        };
        if (t.text == "LOOP") {
            // single-line loops use ':'; multi-line otherwise
            bool single = false;
            for (size_t j = i + 1; j < line.size(); j++) {
                if (line[j].kind == TokKind::Newline) break;
                if (line[j].is_op(":")) {
                    single = true;
                    break;
                }
            }
            if (!single) delta++;
        } else if (t.text == "THEN") {
            if (next_is_newline(i)) delta++;
        } else if (t.text == "SUBROUTINE" || t.text == "FUNCTION") {
            // declaration forms with a following body
            bool decl = i + 1 < line.size() && (line[i + 1].kind == TokKind::Identifier ||
                                                line[i + 1].is_kw("WRITE"));
            if (decl) {
                bool has_follows = false, has_eq = false;
                int depth2 = 0;
                for (size_t j = i + 1; j < line.size(); j++) {
                    if (line[j].kind == TokKind::Newline) break;
                    if (line[j].kind == TokKind::OpenBracket) depth2++;
                    if (line[j].kind == TokKind::CloseBracket) depth2--;
                    if (depth2 == 0 && line[j].is_kw("FOLLOWS")) has_follows = true;
                    if (depth2 == 0 && line[j].is_op("=")) has_eq = true;
                }
                if (!has_follows && !has_eq) delta++;
            }
        } else if (t.text == "MODULE" && (i == 0 || !line[i - 1].is_kw("END"))) {
            delta++;
        } else if (t.text == "CASE" && (i == 0 || !line[i - 1].is_kw("END"))) {
            delta++;
        } else if (t.text == "TRAP" && (i == 0 || !line[i - 1].is_kw("END"))) {
            delta++;
        } else if (t.text == "REPEAT") {
            delta--;
        } else if (t.text == "END") {
            delta--;
        }
    }
    return delta;
}

}  // namespace cpl
