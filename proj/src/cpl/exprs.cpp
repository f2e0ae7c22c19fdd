#include <algorithm>
#include <cmath>

#include "cpl/lexer.hpp"
#include "parser_impl.hpp"

namespace cpl {

namespace {

struct OpInfo {
    BinOp op;
    int prec;
    bool right = false;
};

std::optional<OpInfo> binary_op_info(const Token& t) {
    if (t.kind == TokKind::Keyword) {
        const std::string& k = t.text;
        if (k == "OR") return OpInfo{BinOp::Or, PREC_OR};
        if (k == "AND") return OpInfo{BinOp::And, PREC_AND};
        if (k == "DIV") return OpInfo{BinOp::IDiv, PREC_MUL};
        if (k == "MOD") return OpInfo{BinOp::Mod, PREC_MUL};
        if (k == "CDIV") return OpInfo{BinOp::CDiv, PREC_MUL};
        if (k == "CMOD") return OpInfo{BinOp::CMod, PREC_MUL};
        if (k == "BITAND") return OpInfo{BinOp::BitAnd, PREC_BITAND};
        if (k == "BITOR") return OpInfo{BinOp::BitOr, PREC_BITOR};
        if (k == "BITXOR") return OpInfo{BinOp::BitXor, PREC_BITXOR};
        if (k == "RSHIFTED") return OpInfo{BinOp::Shr, PREC_SHIFT};
        if (k == "LSHIFTED") return OpInfo{BinOp::Shl, PREC_SHIFT};
        return std::nullopt;
    }
    if (t.kind != TokKind::Operator) return std::nullopt;
    const std::string& o = t.text;
    if (o == "+") return OpInfo{BinOp::Add, PREC_ADD};
    if (o == "-") return OpInfo{BinOp::Sub, PREC_ADD};
    if (o == "*") return OpInfo{BinOp::Mul, PREC_MUL};
    if (o == "/") return OpInfo{BinOp::Div, PREC_MUL};
    if (o == "^") return OpInfo{BinOp::Pow, PREC_POW, true};
    if (o == "**") return OpInfo{BinOp::Pow, PREC_POW, true};
    if (o == "=") return OpInfo{BinOp::Eq, PREC_CMP};
    if (o == "#") return OpInfo{BinOp::Ne, PREC_CMP};
    if (o == "<") return OpInfo{BinOp::Lt, PREC_CMP};
    if (o == "<=") return OpInfo{BinOp::Le, PREC_CMP};
    if (o == ">") return OpInfo{BinOp::Gt, PREC_CMP};
    if (o == ">=") return OpInfo{BinOp::Ge, PREC_CMP};
    if (o == "|") return OpInfo{BinOp::Dot, PREC_DOT};
    if (o == "&") return OpInfo{BinOp::BitAnd, PREC_BITAND};
    if (o == ">>") return OpInfo{BinOp::Shr, PREC_SHIFT};
    if (o == "<<") return OpInfo{BinOp::Shl, PREC_SHIFT};
    return std::nullopt;
}

bool starts_operand(const Token& t) {
    switch (t.kind) {
        case TokKind::Identifier:
        case TokKind::IntLit:
        case TokKind::RealLit:
        case TokKind::StringLit:
        case TokKind::CharEscape:
        case TokKind::OpenBracket:
            return true;
        case TokKind::Keyword: {
            static const std::set<std::string> kws = {
                "YES", "NO", "TRUE", "FALSE", "NULL", "IF",  "NEW",
                "INTEGER", "REAL", "CHAR", "SINGLE", "BOOLEAN", "RESULT",
            };
            return kws.count(t.text) != 0;
        }
        default:
            return false;
    }
}

}  // namespace

// ---------------- binary expression climbing ----------------

ExprPtr Parser::parse_expression(int min_prec) {
    if (min_prec <= 0) min_prec = PREC_OR;
    ExprPtr lhs = parse_unary();
    bool lhs_is_comparison = false;

    while (true) {
        if (bracket_depth_ > 0) skip_newlines();
        const Token& t = cur();

        // call-argument separator stop
        if (stop_depth_ == bracket_depth_ && !stop_seps_.empty() &&
            (t.kind == TokKind::Operator || t.kind == TokKind::Identifier ||
             t.kind == TokKind::Keyword) &&
            stop_seps_.count(t.text))
            break;

        // IS: comparison with a type on the right
        if (t.is_kw("IS") && PREC_CMP >= min_prec) {
            if (lhs_is_comparison) fail("comparisons cannot be chained", t.pos);
            take();
            auto node = make_expr(ExprKind::IsTest, t.pos);
            node->ref_type = parse_type_declarator(false);
            node->a = lhs;
            node->type = ty_boolean();
            // statically decidable unless the subject is dynamic
            TypePtr u = lhs->type ? unwrap_named(lhs->type) : nullptr;
            if (u && u->kind == TypeKind::DynamicPointer && node->a->place)
                node->a = rvalue(node->a);
            if (!u || u->kind != TypeKind::DynamicPointer) {
                bool v = lhs->type && (type_identity(lhs->type, node->ref_type) ||
                                       (lhs->place &&
                                        type_identity(make_pointer(lhs->type),
                                                      node->ref_type)));
                node->bool_val = v;
                node->int_val = 1;  // marks static answer
            }
            lhs = node;
            lhs_is_comparison = true;
            continue;
        }

        auto info = binary_op_info(t);
        if (info) {
            if (info->prec < min_prec) break;
            if (info->prec == PREC_CMP && lhs_is_comparison)
                fail("comparisons cannot be chained", t.pos);
            take();
            if (info->op == BinOp::Pow && at_op("-"))
                fail("a^-b is ambiguous; use brackets", t.pos);
            skip_newlines();
            ExprPtr rhs =
                parse_expression(info->right ? info->prec : info->prec + 1);
            lhs = check_binary(info->op, std::move(lhs), std::move(rhs), t.pos);
            lhs_is_comparison = info->prec == PREC_CMP;
            continue;
        }

        // string juxtaposition
        if (PREC_CONCAT >= min_prec && lhs->type && is_string_type_p(lhs->type) &&
            starts_operand(t) && !lhs_is_comparison) {
            if (t.kind == TokKind::OpenBracket && !t.space_before) break;
            auto node = make_expr(ExprKind::Concat, lhs->pos);
            node->items.push_back(rvalue(lhs));
            while (true) {
                if (bracket_depth_ > 0) skip_newlines();
                const Token& nt = cur();
                if (stop_depth_ == bracket_depth_ && stop_seps_.count(nt.text)) break;
                if (!starts_operand(nt)) break;
                if (nt.kind == TokKind::OpenBracket && !nt.space_before) break;
                ExprPtr item = rvalue(parse_expression(PREC_CONCAT + 1));
                node->items.push_back(std::move(item));
            }
            node->type = make_string_type();
            lhs = node;
            continue;
        }
        break;
    }
    return lhs;
}

ExprPtr Parser::parse_unary() {
    if (bracket_depth_ > 0) skip_newlines();
    const Token& t = cur();
    if (t.is_op("-")) {
        SourcePos pos = take().pos;
        auto node = make_expr(ExprKind::Unary, pos);
        node->un_op = UnOp::Neg;
        ExprPtr operand = rvalue(parse_unary());
        TypePtr u = operand->type ? unwrap_named(operand->type) : nullptr;
        if (u && u->kind == TypeKind::Integer) {
            node->type = ty_integer();
        } else if (u && u->kind == TypeKind::Single) {
            node->type = ty_single();
        } else {
            operand = coerce(std::move(operand), ty_real(), "negation");
            node->type = ty_real();
        }
        node->a = operand;
        return node;
    }
    if (t.is_kw("NOT")) {
        SourcePos pos = take().pos;
        auto node = make_expr(ExprKind::Unary, pos);
        node->un_op = UnOp::Not;
        node->a = coerce(rvalue(parse_unary()), ty_boolean(), "NOT operand");
        node->type = ty_boolean();
        return node;
    }
    if (t.is_kw("BITNOT")) {
        SourcePos pos = take().pos;
        auto node = make_expr(ExprKind::Unary, pos);
        node->un_op = UnOp::BitNot;
        node->a = coerce(rvalue(parse_unary()), ty_integer(), "BITNOT operand");
        node->type = ty_integer();
        return node;
    }
    if (t.is_op("^")) {
        SourcePos pos = take().pos;
        auto node = make_expr(ExprKind::AddressOf, pos);
        ExprPtr operand = parse_unary();
        if (operand->place) {
            node->type = make_pointer(operand->type);
        } else if (is_array_type(operand->type)) {
            node->type = make_pointer(operand->type);
        } else {
            fail("'^' requires a variable or array", pos);
        }
        node->a = operand;
        return node;
    }
    return parse_postfix_chain(parse_primary());
}

// ---------------- postfix: indexing, calls, fields, deref ----------------

ExprPtr Parser::parse_postfix_chain(ExprPtr base) {
    while (true) {
        const Token& t = cur();
        if (t.kind == TokKind::OpenBracket) {
            // bare overload set: a call
            if (base->kind == ExprKind::SubrVal && base->set && !base->member) {
                base = parse_call_on_set(base->set, base->pos, false);
                continue;
            }
            // indexing a string expression requires adjacency
            if (base->type && is_string_type_p(base->type) && !base->place &&
                t.space_before)
                break;
            TypePtr u = base->type ? unwrap_named(base->type) : nullptr;
            if (u && (u->kind == TypeKind::SubroutineType ||
                      u->kind == TypeKind::FunctionType) &&
                !base->place) {
                base = finish_indirect_call(base);
                continue;
            }
            if (u && u->kind == TypeKind::PointerTo && base->place) {
                // places auto-load before further postfix
                TypePtr tgt = pointer_target(*u);
                if (tgt) {
                    TypePtr tu = unwrap_named(tgt);
                    if (tu->kind == TypeKind::Array || tu->kind == TypeKind::Stored) {
                        base = rvalue(std::move(base));
                        continue;
                    }
                }
            }
            if (u && (u->kind == TypeKind::Array || u->kind == TypeKind::Stored ||
                      (u->kind == TypeKind::PointerTo && pointer_target(*u)) ||
                      u->kind == TypeKind::Structure)) {
                base = finish_index(std::move(base));
                continue;
            }
            break;
        }
        if (t.is_op(".")) {
            take();
            if (!(at(TokKind::Identifier) || at_kw("WRITE")))
                fail("expected a field or function name after '.'");
            Token name = take();
            base = finish_field_or_method(std::move(base), name);
            continue;
        }
        if (t.is_op("^")) {
            TypePtr u = base->type ? unwrap_named(base->type) : nullptr;
            bool pointer_place = base->place && u && u->kind == TypeKind::PointerTo;
            bool pointer_value = !base->place && u && u->kind == TypeKind::PointerTo;
            if (!pointer_place && !pointer_value) break;  // exponentiation
            take();
            if (base->place) base = rvalue(std::move(base));
            u = unwrap_named(base->type);
            TypePtr tgt = pointer_target(*u);
            if (!tgt) fail("cannot dereference an uncommitted POINTER", t.pos);
            auto node = make_expr(ExprKind::Deref, t.pos);
            node->a = base;
            node->type = tgt;
            node->place = true;
            base = node;
            continue;
        }
        break;
    }
    return base;
}

ExprPtr Parser::finish_indirect_call(ExprPtr callee) {
    TypePtr u = unwrap_named(callee->type);
    auto sig = u->sig;
    auto node = make_expr(ExprKind::Call, callee->pos);
    node->a = callee;
    BracketStyle style = cur().bracket;
    take();
    bracket_depth_++;
    size_t idx = 0;
    if (at(TokKind::CloseBracket) && cur().bracket == style) {
        take();
        bracket_depth_--;
    } else {
        while (true) {
            skip_newlines();
            CallArg arg;
            arg.sep = idx == 0 ? "(" : sig && idx < sig->params.size()
                                           ? sig->params[idx].sep
                                           : ",";
            ExprPtr v = parse_expression();
            if (sig && idx < sig->params.size())
                v = coerce(std::move(v), sig->params[idx].type, "argument");
            arg.value = std::move(v);
            node->args.push_back(std::move(arg));
            idx++;
            skip_newlines();
            if (eat_op(",")) continue;
            if (at(TokKind::CloseBracket)) {
                if (cur().bracket != style) fail("mismatched bracket kind");
                take();
                bracket_depth_--;
                break;
            }
            // custom separator of the subroutine type
            if (at(TokKind::Operator) || at(TokKind::Identifier)) {
                take();
                continue;
            }
            fail("expected ',' or ')' in call");
        }
    }
    node->type = sig ? sig->result : nullptr;
    return node;
}

ExprPtr Parser::finish_field_or_method(ExprPtr base, const Token& name) {
    // dereference pointers until a structure appears
    int guard = 0;
    while (guard++ < 4) {
        TypePtr u = base->type ? unwrap_named(base->type) : nullptr;
        if (!u) break;
        if (u->kind == TypeKind::Structure) break;
        if (u->kind == TypeKind::Stored) {
            // stored structure element
            TypePtr inner = unwrap_named(u->target);
            if (inner && inner->kind == TypeKind::Structure) break;
        }
        if (base->place) {
            base = rvalue(std::move(base));
            continue;
        }
        if (u->kind == TypeKind::PointerTo && pointer_target(*u)) {
            auto node = make_expr(ExprKind::Deref, base->pos);
            node->a = base;
            node->type = pointer_target(*u);
            node->place = true;
            base = node;
            // keep a place; loop checks the pointee kind next
            TypePtr nu = unwrap_named(node->type);
            if (nu && nu->kind == TypeKind::Structure) break;
            continue;
        }
        break;
    }

    TypePtr u = base->type ? unwrap_named(base->type) : nullptr;
    if (u && u->kind == TypeKind::Stored) u = unwrap_named(u->target);
    if (u && u->kind == TypeKind::Structure) {
        // direct field, then fields of anonymous members
        for (size_t i = 0; i < u->fields.size(); i++) {
            if (u->fields[i].name == name.text) {
                auto node = make_expr(ExprKind::FieldSelect, name.pos);
                node->a = base;
                node->field_index = (int)i;
                node->field_name = name.text;
                node->type = u->fields[i].type;
                node->place = true;
                return node;
            }
        }
        for (size_t i = 0; i < u->fields.size(); i++) {
            if (!u->fields[i].name.empty()) continue;
            TypePtr ft = unwrap_named(u->fields[i].type);
            if (!ft || ft->kind != TypeKind::Structure) continue;
            for (size_t j = 0; j < ft->fields.size(); j++) {
                if (ft->fields[j].name == name.text) {
                    auto anon = make_expr(ExprKind::FieldSelect, name.pos);
                    anon->a = base;
                    anon->field_index = (int)i;
                    anon->field_name = "";  // anonymous hop
                    anon->type = u->fields[i].type;
                    anon->place = true;
                    auto node = make_expr(ExprKind::FieldSelect, name.pos);
                    node->a = anon;
                    node->field_index = (int)j;
                    node->field_name = name.text;
                    node->type = ft->fields[j].type;
                    node->place = true;
                    return node;
                }
            }
        }
    }
    // array-of-structure field slice: arr.r
    if (u && u->kind == TypeKind::Array) {
        TypePtr eu = u->elem ? unwrap_named(u->elem) : nullptr;
        if (eu && eu->kind == TypeKind::Structure) {
            for (size_t i = 0; i < eu->fields.size(); i++) {
                if (eu->fields[i].name == name.text) {
                    ExprPtr arr = rvalue(std::move(base));
                    auto node = make_expr(ExprKind::FieldSelect, name.pos);
                    node->a = arr;
                    node->field_index = (int)i;
                    node->field_name = name.text;
                    node->type = make_array(u->dims, eu->fields[i].type);
                    node->place = false;
                    return node;
                }
            }
        }
    }
    // method-call duality: base.f(args) == f(base, args)
    Symbol* sym = scope_->find(name.text);
    if (sym && sym->kind == SymbolKind::Overloads)
        return parse_call_on_set(sym->set, name.pos, false, base);
    fail("'" + name.text + "' is neither a field of " +
             (base->type ? type_to_string(base->type) : "this expression") +
             " nor a visible function",
         name.pos);
}

// ---------------- indexing ----------------

ExprPtr Parser::finish_index(ExprPtr base) {
    // resolve the indexable view: load places, deref pointers
    int guard = 0;
    bool stored = false;
    while (guard++ < 5) {
        TypePtr u = base->type ? unwrap_named(base->type) : nullptr;
        if (!u) fail("this expression cannot be subscripted", base->pos);
        if (u->kind == TypeKind::Array && base->place) {
            base = rvalue(std::move(base));
            continue;
        }
        if (u->kind == TypeKind::Array) break;
        if (u->kind == TypeKind::Structure && u->overlay) break;  // overlay indexing
        if (u->kind == TypeKind::Stored) {
            stored = true;
            break;
        }
        if (u->kind == TypeKind::PointerTo) {
            if (base->place) {
                base = rvalue(std::move(base));
                continue;
            }
            TypePtr tgt = pointer_target(*u);
            if (!tgt) fail("cannot subscript an uncommitted POINTER", base->pos);
            auto node = make_expr(ExprKind::Deref, base->pos);
            node->a = base;
            node->type = tgt;
            node->place = false;  // value view / stored view
            TypePtr tu = unwrap_named(tgt);
            if (tu->kind == TypeKind::Array || tu->kind == TypeKind::Stored ||
                (tu->kind == TypeKind::Structure && tu->overlay)) {
                base = node;
                continue;
            }
            fail("this POINTER does not reference an ARRAY", base->pos);
        }
        fail("this expression cannot be subscripted", base->pos);
    }

    TypePtr bt = unwrap_named(base->type);
    TypePtr array_t = bt;
    if (bt->kind == TypeKind::Stored) array_t = unwrap_named(bt->target);
    bool overlay = array_t->kind == TypeKind::Structure && array_t->overlay;
    if (!overlay && array_t->kind != TypeKind::Array)
        fail("this expression cannot be subscripted", base->pos);

    auto node = make_expr(ExprKind::Index, cur().pos);
    node->a = base;

    BracketStyle style = cur().bracket;
    take();
    bracket_depth_++;
    size_t axis = 0;
    while (true) {
        skip_newlines();
        sel_ctx_.push_back({node.get(), (int)axis});
        ExprPtr sel = parse_selector();
        sel_ctx_.pop_back();
        if (sel->kind == ExprKind::StarSel && sel->permute_n == 0)
            axis += sel->star_count;
        else
            axis += 1;
        node->items.push_back(std::move(sel));
        skip_newlines();
        if (eat_op(",")) continue;
        if (at(TokKind::CloseBracket)) {
            if (cur().bracket != style) fail("mismatched bracket kind");
            take();
            bracket_depth_--;
            break;
        }
        fail("expected ',' or closing bracket in subscript");
    }

    // compute the result type
    size_t rank = overlay ? 1 : array_t->dims.size();
    TypePtr elem = overlay ? [&] {
        // overlay element type: the scalar base of the first field
        TypePtr ft = unwrap_named(array_t->fields[0].type);
        return ft->kind == TypeKind::Array ? ft->elem : array_t->fields[0].type;
    }()
                           : array_t->elem;

    struct OutDim {
        bool known = false;
        long lo = 0, hi = -1;
    };
    std::vector<OutDim> out_dims;
    bool all_static = !overlay;
    for (auto& d : array_t->dims)
        if (!d.known) all_static = false;

    // remaining source axes, reordered by permutations as we go
    std::vector<int> remaining;
    for (size_t k = 0; k < rank; k++) remaining.push_back((int)k);
    auto take_axis = [&]() -> int {
        if (remaining.empty()) return -1;
        int a = remaining.front();
        remaining.erase(remaining.begin());
        return a;
    };
    auto dim_of = [&](int axis) {
        OutDim od;
        if (all_static && axis >= 0) {
            od.known = true;
            od.lo = array_t->dims[axis].lo;
            od.hi = array_t->dims[axis].hi;
        }
        return od;
    };

    for (auto& sel : node->items) {
        if (remaining.empty()) fail("too many subscripts", sel->pos);
        if (sel->kind == ExprKind::StarSel) {
            if (sel->permute_n > 0) {
                if (sel->permute_n > (int)remaining.size())
                    fail("index permutation out of rank", sel->pos);
                int moved = remaining[sel->permute_n - 1];
                remaining.erase(remaining.begin() + sel->permute_n - 1);
                out_dims.push_back(dim_of(moved));
                continue;
            }
            if (sel->star_count == 1) {
                out_dims.push_back(dim_of(take_axis()));
            } else {
                if ((int)remaining.size() < sel->star_count)
                    fail("compound index consumes more axes than the array has",
                         sel->pos);
                OutDim od;
                if (all_static) {
                    long len = 1;
                    for (int k = 0; k < sel->star_count; k++)
                        len *= std::max(0L,
                                        array_t->dims[remaining[k]].length());
                    od.known = true;
                    od.lo = 0;
                    od.hi = len - 1;
                }
                for (int k = 0; k < sel->star_count; k++) take_axis();
                out_dims.push_back(od);
            }
            continue;
        }
        // range / affine / plain index
        bool has_range = false;
        std::function<void(const Expr*)> scan = [&](const Expr* e2) {
            if (!e2) return;
            if (e2->kind == ExprKind::RangeSel || e2->kind == ExprKind::StarSel)
                has_range = true;
            for (const ExprPtr& c : {e2->a, e2->b, e2->c})
                if (c) scan(c.get());
            for (const ExprPtr& c : e2->items)
                if (c) scan(c.get());
        };
        scan(sel.get());
        if (!has_range) {
            take_axis();  // single index drops the axis
            continue;
        }
        int src = take_axis();
        // one output axis per range term
        std::function<int(const Expr*, OutDim*)> count_ranges =
            [&](const Expr* e2, OutDim* first) -> int {
            if (!e2) return 0;
            if (e2->kind == ExprKind::RangeSel) {
                if (first && !first->known) {
                    auto lo = fold_int(e2->a);
                    auto hi = fold_int(e2->b);
                    if (lo && hi) {
                        first->known = true;
                        first->lo = *lo;
                        first->hi = *hi;
                    }
                }
                return 1;
            }
            if (e2->kind == ExprKind::StarSel) {
                if (first && all_static && !first->known && src >= 0) {
                    first->known = true;
                    first->lo = array_t->dims[src].lo;
                    first->hi = array_t->dims[src].hi;
                }
                return 1;
            }
            int n = 0;
            for (const ExprPtr& c : {e2->a, e2->b, e2->c})
                if (c) n += count_ranges(c.get(), first);
            for (const ExprPtr& c : e2->items)
                if (c) n += count_ranges(c.get(), first);
            return n;
        };
        OutDim od;
        int nr = count_ranges(sel.get(), &od);
        // bounds survive only for a bare range or whole-axis star
        bool plain = sel->kind == ExprKind::RangeSel ||
                     (sel->kind == ExprKind::StarSel && sel->star_count == 1);
        if (!plain && nr == 1) od.known = od.known && sel->kind == ExprKind::RangeSel;
        for (int k = 0; k < nr; k++) out_dims.push_back(k == 0 ? od : OutDim{});
    }
    for (int axis : remaining) out_dims.push_back(dim_of(axis));

    if (overlay) {
        // overlay of a structured array: 0..N-1
        if (node->items.size() == 1 && out_dims.empty()) {
            node->type = elem;
            node->place = true;
            return node;
        }
        std::vector<ArrayDim> dims;
        for (auto& od : out_dims) {
            ArrayDim d;
            if (od.known) {
                d.known = true;
                d.lo = od.lo;
                d.hi = od.hi;
            } else {
                d.instance = fresh_type_instance_id();
            }
            dims.push_back(d);
        }
        node->type = out_dims.empty() ? elem : make_array(dims, elem);
        node->place = out_dims.empty();
        return node;
    }

    if (out_dims.empty()) {
        // element access
        node->type = elem;
        node->place = true;
        return node;
    }
    std::vector<ArrayDim> dims;
    long instance = 0;
    for (auto& od : out_dims) {
        ArrayDim d;
        if (od.known) {
            d.known = true;
            d.lo = od.lo;
            d.hi = od.hi;
        } else {
            if (!instance) instance = fresh_type_instance_id();
            d.instance = instance;
        }
        dims.push_back(d);
    }
    node->type = make_array(dims, elem);
    node->place = false;
    return node;
}

// selector: permute, star runs, ranges, affine expressions
ExprPtr Parser::parse_selector() {
    const Token& t = cur();
    if (t.kind == TokKind::Operator && !t.text.empty() && t.text[0] == '*' &&
        t.text.find_first_not_of('*') == std::string::npos) {
        int stars = (int)t.text.size();
        SourcePos pos = take().pos;
        auto node = make_expr(ExprKind::StarSel, pos);
        if (stars == 1 && at(TokKind::IntLit)) {
            // permutation *n
            node->permute_n = std::stoi(take().text);
            node->star_count = 1;
            return node;
        }
        node->star_count = stars;
        return node;
    }
    ExprPtr e = parse_selector_expr();
    if (at_op("..")) {
        take();
        skip_newlines();
        ExprPtr hi = parse_selector_expr();
        auto node = make_expr(ExprKind::RangeSel, e->pos);
        node->a = coerce(rvalue(std::move(e)), ty_integer(), "range bound");
        node->b = coerce(rvalue(std::move(hi)), ty_integer(), "range bound");
        return node;
    }
    // plain index expressions load and convert to INTEGER here
    std::function<bool(const Expr*)> rangeful = [&](const Expr* p) -> bool {
        if (!p) return false;
        if (p->kind == ExprKind::RangeSel || p->kind == ExprKind::StarSel) return true;
        for (const ExprPtr& c : {p->a, p->b, p->c})
            if (c && rangeful(c.get())) return true;
        for (const ExprPtr& c : p->items)
            if (c && rangeful(c.get())) return true;
        return false;
    };
    if (!rangeful(e.get())) e = coerce(rvalue(std::move(e)), ty_integer(), "subscript");
    return e;
}

// arithmetic over INTEGERs where (l..h) and * may appear as atoms
ExprPtr Parser::parse_selector_expr(int min_prec) {
    if (min_prec <= 0) min_prec = PREC_ADD;
    ExprPtr lhs;
    // atoms with ranges are only meaningful under +,-,*
    if (at_op("*")) {
        SourcePos pos = take().pos;
        auto node = make_expr(ExprKind::StarSel, pos);
        node->star_count = 1;
        lhs = node;
    } else if (at(TokKind::OpenBracket)) {
        BracketStyle style = cur().bracket;
        SourcePos pos = take().pos;
        bracket_depth_++;
        skip_newlines();
        ExprPtr inner;
        if (at_op("*")) {
            take();
            auto star = make_expr(ExprKind::StarSel, pos);
            star->star_count = 1;
            inner = star;
        } else {
            inner = parse_selector_expr(PREC_ADD);
        }
        skip_newlines();
        if (at_op("..")) {
            take();
            skip_newlines();
            ExprPtr hi = parse_selector_expr(PREC_ADD);
            auto node = make_expr(ExprKind::RangeSel, pos);
            node->a = coerce(rvalue(std::move(inner)), ty_integer(), "range bound");
            node->b = coerce(rvalue(std::move(hi)), ty_integer(), "range bound");
            inner = node;
        }
        skip_newlines();
        if (!at(TokKind::CloseBracket) || cur().bracket != style)
            fail("expected a matching closing bracket");
        take();
        bracket_depth_--;
        lhs = inner;
    } else {
        lhs = parse_unary();
    }

    while (true) {
        const Token& t = cur();
        auto info = binary_op_info(t);
        if (!info || info->prec < min_prec) break;
        if (info->prec > PREC_MUL) break;  // only + - * / within selectors
        take();
        skip_newlines();
        ExprPtr rhs = parse_selector_expr(info->prec + 1);
        // range-bearing operands stay symbolic; others type-check now
        auto rangeful = [](const ExprPtr& e) {
            std::function<bool(const Expr*)> scan = [&](const Expr* x) -> bool {
                if (!x) return false;
                if (x->kind == ExprKind::RangeSel || x->kind == ExprKind::StarSel)
                    return true;
                for (const ExprPtr& c : {x->a, x->b, x->c})
                    if (c && scan(c.get())) return true;
                for (const ExprPtr& c : x->items)
                    if (c && scan(c.get())) return true;
                return false;
            };
            return scan(e.get());
        };
        if (rangeful(lhs) || rangeful(rhs)) {
            auto node = make_expr(ExprKind::Binary, t.pos);
            node->bin_op = info->op;
            node->a = rangeful(lhs) ? lhs : coerce(rvalue(lhs), ty_integer(), "selector");
            node->b = rangeful(rhs) ? rhs : coerce(rvalue(rhs), ty_integer(), "selector");
            node->sem = BinSem::Int;
            node->type = nullptr;  // symbolic
            lhs = node;
        } else {
            lhs = check_binary(info->op, std::move(lhs), std::move(rhs), t.pos);
        }
    }
    return lhs;
}

// ---------------- calls on overload sets ----------------

ExprPtr Parser::parse_call_on_set(std::shared_ptr<OverloadSet> set, SourcePos pos,
                                  bool bracketless_stmt, ExprPtr first_arg) {
    auto node = make_expr(ExprKind::Call, pos);
    node->set = set;
    node->paren_call = !bracketless_stmt;

    std::vector<CallArg> args;
    if (first_arg) args.push_back({"(", "", rvalue_keep_place(first_arg)});

    auto candidate_seps = [&](size_t next_index) {
        std::set<std::string> seps;
        for (auto& m : set->members) {
            if (!m->sig) continue;
            if (next_index < m->sig->params.size() &&
                !m->sig->params[next_index].optional) {
                const std::string& s = m->sig->params[next_index].sep;
                if (s != ",") seps.insert(s);
            }
        }
        return seps;
    };
    auto optional_names_of = [&]() {
        std::set<std::string> names;
        for (auto& m : set->members) {
            if (!m->sig) continue;
            for (auto& p : m->sig->params)
                if (p.optional) names.insert(p.name);
        }
        return names;
    };

    bool bracketed = at(TokKind::OpenBracket);
    BracketStyle style = BracketStyle::None;
    if (bracketed) {
        style = cur().bracket;
        take();
        bracket_depth_++;
    } else if (!bracketless_stmt && !first_arg) {
        fail("expected '(' after '" + set->name + "'", pos);
    }

    bool done = !bracketed && (!bracketless_stmt || at_stmt_end());
    if (bracketed && at(TokKind::CloseBracket) && cur().bracket == style) {
        take();
        bracket_depth_--;
        done = true;
    }
    bool named_mode = false;
    auto opt_names = optional_names_of();
    while (!done) {
        if (bracketed) skip_newlines();
        CallArg arg;
        arg.sep = args.empty() ? "(" : ",";
        if ((at(TokKind::Identifier)) && peek(1).is_op("=") &&
            opt_names.count(cur().text)) {
            arg.name = take().text;
            take();  // '='
            named_mode = true;
            arg.value = rvalue(parse_expression());
        } else {
            if (named_mode) fail("positional arguments cannot follow named ones");
            auto saved_stops = std::move(stop_seps_);
            int saved_depth = stop_depth_;
            stop_seps_ = candidate_seps(args.size() + 1);
            stop_depth_ = bracket_depth_;
            arg.value = rvalue_keep_place(parse_expression());
            stop_seps_ = std::move(saved_stops);
            stop_depth_ = saved_depth;
        }
        args.push_back(std::move(arg));

        if (bracketed) skip_newlines();
        if (bracketed && at(TokKind::CloseBracket)) {
            if (cur().bracket != style) fail("mismatched bracket kind");
            take();
            bracket_depth_--;
            break;
        }
        if (!bracketed && at_stmt_end()) break;
        if (eat_op(",")) {
            if (!bracketed) skip_newlines();
            continue;
        }
        // custom separator
        auto seps = candidate_seps(args.size());
        if ((at(TokKind::Operator) || at(TokKind::Identifier) ||
             cur().kind == TokKind::Keyword) &&
            seps.count(cur().text)) {
            if (!args.back().name.empty())
                fail("separators cannot follow named arguments");
            Token sep = take();
            CallArg next;
            // record the separator on the upcoming argument
            if (bracketed) skip_newlines();
            auto saved_stops = std::move(stop_seps_);
            int saved_depth = stop_depth_;
            stop_seps_ = candidate_seps(args.size() + 1);
            stop_depth_ = bracket_depth_;
            next.sep = sep.text;
            next.value = rvalue_keep_place(parse_expression());
            stop_seps_ = std::move(saved_stops);
            stop_depth_ = saved_depth;
            args.push_back(std::move(next));
            if (bracketed) skip_newlines();
            if (bracketed && at(TokKind::CloseBracket)) {
                if (cur().bracket != style) fail("mismatched bracket kind");
                take();
                bracket_depth_--;
                break;
            }
            if (!bracketed && at_stmt_end()) break;
            if (eat_op(",")) continue;
            // loop again for further separators
            continue;
        }
        if (bracketed) fail("expected ',', a separator, or ')' in call");
        break;
    }

    // resolve
    std::vector<ActualInfo> positionals;
    std::vector<std::string> optional_names;
    for (auto& a : args) {
        if (!a.name.empty()) {
            optional_names.push_back(a.name);
        } else {
            positionals.push_back({a.sep, a.value->type, a.value->place});
        }
    }
    std::string err;
    auto result = resolve_overload(*set, positionals, optional_names, &err);
    if (!result) fail(err.empty() ? "no matching overload" : err, pos);

    if (result->dynamic_defer) {
        node->dynamic_call = true;
        for (auto& a : args) {
            if (!a.name.empty()) continue;
            TypePtr u = a.value->type ? unwrap_named(a.value->type) : nullptr;
            if (u && u->kind == TypeKind::DynamicPointer && a.value->place)
                a.value = rvalue(a.value);  // load the tagged reference
        }
        node->args = std::move(args);
        node->type = nullptr;
        for (auto& m : set->members)
            if (m->is_function && m->sig) node->type = m->sig->result;
        return node;
    }

    auto member = result->member;
    node->member = member;
    // apply per-argument conversions
    size_t pi = 0;
    for (auto& a : args) {
        if (!a.name.empty()) {
            // named optional: coerce to the declared type
            if (member->sig) {
                for (auto& p : member->sig->params)
                    if (p.optional && p.name == a.name)
                        a.value = coerce(a.value, p.type, "optional argument");
            }
            continue;
        }
        if (pi < result->conversions.size() && !result->conversions[pi].empty())
            a.value = apply_steps(a.value, result->conversions[pi]);
        else if (a.value->place && member->sig && pi < member->sig->params.size()) {
            // exact-type match against a place still loads the value unless
            // the formal is itself an array/pointer that aliases
            TypePtr ft = member->sig->params[pi].type;
            TypePtr fu = ft ? unwrap_named(ft) : nullptr;
            bool aliasing = fu && (fu->kind == TypeKind::Array ||
                                   fu->kind == TypeKind::Stored);
            if (!aliasing) a.value = rvalue(a.value);
        } else if (member->matcher) {
            // builtins take loaded values; LO/HI-style matchers see views
            if (a.value->place) a.value = rvalue(a.value);
            TypePtr u = a.value->type ? unwrap_named(a.value->type) : nullptr;
            if (u && u->kind == TypeKind::PointerTo) {
                TypePtr tgt = pointer_target(*u);
                if (tgt && unwrap_named(tgt)->kind == TypeKind::Stored)
                    a.value = apply_steps(a.value, {{ConvKind::Deref, tgt, -1}});
            }
        }
        pi++;
    }
    node->args = std::move(args);
    node->type = member->sig ? member->sig->result : nullptr;
    if (member->result_fn) node->type = member->result_fn(positionals);
    return node;
}

// keeps places intact (argument binding decides whether to load)
ExprPtr Parser::rvalue_keep_place(ExprPtr e) { return e; }

// ---------------- looping operators ----------------

ExprPtr Parser::parse_looping_op(LoopOpKind op) {
    SourcePos pos = take().pos;
    auto node = make_expr(ExprKind::LoopingOp, pos);
    node->loop_op = op;
    node->clause = nullptr;

    // body parses before the clause, so loop indices inside must already be
    // declared by the clause; CPL puts the clause after the body, so we parse
    // the body tokens twice: first scan to find FOR, collect, then reparse.
    // Simpler: parse the clause symbols lazily by deferring body checking is
    // complex, so instead we parse body with a provisional scope where FOR
    // indices get declared on demand: CPL loop indices are implicitly
    // declared, so undeclared identifiers inside the body would fail. To keep
    // this tractable the body is parsed after locating the FOR clause: we
    // first skim tokens to the matching FOR at depth 0.
    std::vector<Token> body_toks;
    int depth = 0;
    while (true) {
        if (at(TokKind::EndOfInput)) fail("looping operator requires FOR", pos);
        if (depth == 0 && at_kw("FOR")) break;
        if (depth == 0 && !bracket_depth_ && cur().is_end())
            fail("looping operator requires FOR", pos);
        if (at(TokKind::OpenBracket)) depth++;
        if (at(TokKind::CloseBracket)) {
            if (depth == 0) fail("looping operator requires FOR before ')'", pos);
            depth--;
        }
        body_toks.push_back(take());
    }
    take();  // FOR

    auto scope_stmt = make_stmt(StmtKind::Block, pos);
    push_scope(ScopeKind::Loop, scope_stmt.get());
    scope_pool_.back()->block = scope_stmt.get();
    node->clause = parse_for_clause();

    // now parse the saved body tokens in the clause scope
    body_toks.push_back(Token{TokKind::EndOfInput, "", pos, BracketStyle::None, 0,
                              false, {}});
    TokenCursor saved = std::move(cursor);
    cursor = TokenCursor{};
    cursor.layers.push_back({std::move(body_toks), 0});
    int saved_depth = bracket_depth_;
    bracket_depth_ = 0;
    ExprPtr body = rvalue(parse_expression());
    if (!at(TokKind::EndOfInput)) fail("unexpected tokens in looping operator body");
    bracket_depth_ = saved_depth;
    cursor = std::move(saved);

    infer_clause_bounds(*node->clause, {}, {body.get()});
    pop_scope();
    node->a = body;
    node->scope_holder = scope_stmt;

    TypePtr bt = body->type;
    switch (op) {
        case LoopOpKind::Sum:
        case LoopOpKind::Product:
        case LoopOpKind::Max:
        case LoopOpKind::Min:
            node->type = bt;
            break;
        case LoopOpKind::ArgMax:
        case LoopOpKind::ArgMin: {
            node->type = ty_integer();
            for (auto& item : node->clause->items)
                if (item.kind == ForItemKind::Range && item.index &&
                    item.index->type)
                    node->type = item.index->type;
            break;
        }
    }
    return node;
}

}  // namespace cpl
