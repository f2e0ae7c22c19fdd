#include "cpl/types.hpp"
#include "doctest.h"

using namespace cpl;

namespace {

TypePtr struct_real_a() {
    return make_structure({{"a", ty_real(), false, false}});
}

}  // namespace

TEST_CASE("startup conversion graph is acyclic and single-successor") {
    CHECK(conversion_graph_ok());
}

TEST_CASE("type identity: named vs anonymous") {
    TypePtr t = make_named("t", struct_real_a());
    CHECK(type_identity(t, t));
    // a typename equals its structural definition
    CHECK(type_identity(t, struct_real_a()));
    // two anonymous equal structures are identical
    CHECK(type_identity(struct_real_a(), struct_real_a()));
    // two distinct typenames are different even with equal definitions
    TypePtr t1 = make_named("t1", struct_real_a());
    TypePtr t2 = make_named("t2", struct_real_a());
    CHECK_FALSE(type_identity(t1, t2));
    // an alias of a typename equals it
    TypePtr w = make_named("w", t1);
    CHECK(type_identity(w, t1));
}

TEST_CASE("runtime-dimensioned arrays are identical only per declaration") {
    ArrayDim d1;
    d1.instance = fresh_type_instance_id();
    ArrayDim d2;
    d2.instance = fresh_type_instance_id();
    TypePtr a1 = make_array({d1}, ty_real());
    TypePtr a1b = make_array({d1}, ty_real());
    TypePtr a2 = make_array({d2}, ty_real());
    CHECK(type_identity(a1, a1b));
    CHECK_FALSE(type_identity(a1, a2));
    // static dims compare by value
    CHECK(type_identity(make_static_array({{1, 5}}, ty_real()),
                        make_static_array({{1, 5}}, ty_real())));
    CHECK_FALSE(type_identity(make_static_array({{1, 5}}, ty_real()),
                              make_static_array({{0, 4}}, ty_real())));
}

TEST_CASE("conversion paths") {
    // POINTER TO INTEGER -> REAL: deref then int-to-real
    auto path = conversion_path(make_pointer(ty_integer()), ty_real());
    REQUIRE(path);
    REQUIRE(path->size() == 2);
    CHECK((*path)[0].kind == ConvKind::Deref);
    CHECK((*path)[1].kind == ConvKind::IntToReal);

    // identity
    auto id = conversion_path(ty_real(), ty_real());
    REQUIRE(id);
    CHECK(id->empty());

    // STRUCTURE(t1; INTEGER n) -> t1 via the anonymous field
    TypePtr t1 = make_named("t1", struct_real_a());
    TypePtr s = make_structure({{"", t1, false, false}, {"n", ty_integer(), false, false}});
    auto anon = conversion_path(s, t1);
    REQUIRE(anon);
    REQUIRE(anon->size() == 1);
    CHECK((*anon)[0].kind == ConvKind::StructToAnonField);

    // REAL -> INTEGER requires an explicit builtin
    CHECK_FALSE(conversion_path(ty_real(), ty_integer()));
    // BOOLEAN -> INTEGER is not implicit
    CHECK_FALSE(conversion_path(ty_boolean(), ty_integer()));
    // CHAR -> INTEGER yes; one-char string -> CHAR yes
    CHECK(conversion_path(ty_char(), ty_integer()));
    CHECK(conversion_path(make_string_literal_type(1), ty_char()));
    // at most one non-deref step: CHAR cannot reach REAL implicitly
    CHECK_FALSE(conversion_path(ty_char(), ty_real()));
    // variable identifiers start as addresses
    CHECK(conversion_path(ty_integer(), ty_real(), /*from_place=*/true));
}

TEST_CASE("path composition on the primitive lattice") {
    TypePtr prims[] = {ty_integer(), ty_single(), ty_real()};
    for (auto& a : prims)
        for (auto& b : prims)
            for (auto& c : prims) {
                auto ab = conversion_path(a, b);
                auto bc = conversion_path(b, c);
                if (ab && bc) CHECK(conversion_path(a, c));
            }
}

TEST_CASE("typeof strips one POINTER or STORED layer") {
    CHECK(type_identity(typeof_of(make_pointer(ty_real())), ty_real()));
    CHECK(type_identity(typeof_of(ty_integer()), ty_integer()));
    TypePtr arr = make_static_array({{1, 3}}, ty_real());
    CHECK(type_identity(typeof_of(make_stored(arr)), arr));
}

TEST_CASE("sizeof follows the layout table") {
    CHECK(sizeof_of(ty_integer()) == 4);
    CHECK(sizeof_of(make_static_array({{1, 10}}, ty_real())) == 80);
    CHECK(sizeof_of(make_enum({"a", "b", "c"})) == 4);
    CHECK(sizeof_of(ty_boolean()) == 4);
    CHECK(sizeof_of(ty_char()) == 1);
    CHECK(sizeof_of(make_pointer(ty_real())) == 8);
    // CHAR then REAL: REAL aligns to 8
    TypePtr s = make_structure({{"c", ty_char(), false, false},
                                {"x", ty_real(), false, false}});
    CHECK(sizeof_of(s) == 16);
    // runtime-dimensioned arrays have no static size
    ArrayDim d;
    d.instance = fresh_type_instance_id();
    CHECK_FALSE(sizeof_of(make_array({d}, ty_real())));
}

TEST_CASE("postfix modifiers prepend to the prefix declarator") {
    TypePtr s = make_structure(
        {{"x", ty_integer(), false, false}, {"y", ty_integer(), false, false}});
    PostfixMod m;
    m.pointer = true;
    ArrayDim d;
    d.known = true;
    d.lo = 1;
    d.hi = 10;
    m.dims = {d};
    TypePtr combined = combine_postfix(s, {m});
    CHECK(type_to_string(combined) ==
          "POINTER TO ARRAY(1..10) OF STRUCTURE(INTEGER x; INTEGER y)");

    PostfixMod ptr_only;
    ptr_only.pointer = true;
    CHECK(type_identity(combine_postfix(ty_integer(), {ptr_only}),
                        make_pointer(ty_integer())));
    CHECK(type_identity(combine_postfix(ty_real(), {}), ty_real()));
}

TEST_CASE("identity is reflexive and symmetric over assorted types") {
    std::vector<TypePtr> types = {
        ty_boolean(), ty_char(), ty_integer(), ty_real(), ty_single(),
        make_enum({"x", "y"}),
        struct_real_a(),
        make_static_array({{1, 4}, {0, 2}}, ty_integer()),
        make_pointer(ty_real()),
        make_dynamic_pointer(ty_real()),
        make_dynamic_pointer(nullptr),
        make_stored(make_static_array({{1, 3}}, ty_real())),
        make_string_type(),
        make_named("nm", struct_real_a()),
    };
    for (auto& a : types) {
        CHECK(type_identity(a, a));
        for (auto& b : types) CHECK(type_identity(a, b) == type_identity(b, a));
    }
    // transitivity over distinct primitive/compound kinds (no shared-definition
    // typenames, where the reference-manual rules are deliberately nominal)
    for (auto& a : types)
        for (auto& b : types)
            for (auto& c : types)
                if (type_identity(a, b) && type_identity(b, c))
                    CHECK(type_identity(a, c));
}

TEST_CASE("star dims accept any actual bounds") {
    TypePtr formal = make_string_type();  // ARRAY(*) OF CHAR
    CHECK(star_accepts(formal, make_string_literal_type(5)));
    CHECK_FALSE(star_accepts(make_string_literal_type(5), formal));
    TypePtr f2 = make_array({ArrayDim{true}}, ty_real());
    CHECK(star_accepts(f2, make_static_array({{1, 7}}, ty_real())));
    CHECK_FALSE(star_accepts(f2, make_static_array({{1, 7}}, ty_integer())));
}
