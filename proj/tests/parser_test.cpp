#include "cpl/lexer.hpp"
#include "cpl/parser.hpp"
#include "cpl/session.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cpl;

namespace {

// scope-less blocks are transparent grouping (multi-declarations, INCLUDE)
void flatten(const std::vector<StmtPtr>& in, std::vector<StmtPtr>& out) {
    for (auto& s : in) {
        if (s->kind == StmtKind::Block && !s->scope) {
            flatten(s->body, out);
        } else {
            out.push_back(s);
        }
    }
}

// one round of print -> reparse must reproduce the same statements
void check_roundtrip(const std::string& source) {
    Session s1;
    CompileResult r1 = s1.compile(source, "rt.cpl");
    REQUIRE_MESSAGE(r1.ok, "source must compile: " << source
                                                   << (r1.diagnostics.empty()
                                                           ? ""
                                                           : r1.diagnostics[0]
                                                                 .to_string()));
    std::string printed = print_program(r1.stmts);
    Session s2;
    CompileResult r2 = s2.compile(printed, "rt2.cpl");
    REQUIRE_MESSAGE(r2.ok, "printed form must reparse:\n"
                               << printed
                               << (r2.diagnostics.empty()
                                       ? ""
                                       : r2.diagnostics[0].to_string()));
    std::string printed2 = print_program(r2.stmts);
    CHECK_MESSAGE(printed == printed2, "printed forms differ:\n--- first\n"
                                           << printed << "--- second\n" << printed2);
    std::vector<StmtPtr> f1, f2;
    flatten(r1.stmts, f1);
    flatten(r2.stmts, f2);
    REQUIRE(f1.size() == f2.size());
    for (size_t i = 0; i < f1.size(); i++)
        CHECK_MESSAGE(stmt_equal(*f1[i], *f2[i]), "statement " << i << " differs");
}

}  // namespace

TEST_CASE("program statements parse") {
    Session s;
    CHECK(s.compile("WRITE \"Hello world\"", "t.cpl").ok);
    CHECK(Session().compile("", "t.cpl").ok);  // empty program
}

TEST_CASE("unclosed blocks name the opening construct") {
    Session s;
    CompileResult r = s.compile("LOOP FOR i=1 TO 3\nWRITE i\n", "t.cpl");
    CHECK_FALSE(r.ok);
    REQUIRE_FALSE(r.diagnostics.empty());
    CHECK(r.diagnostics[0].message.find("unclosed LOOP at line 1") !=
          std::string::npos);
}

TEST_CASE("IF recognized by THEN last on the line") {
    auto multi = cpltest::run_program("IF 1<2 THEN\n  WRITE \"yes\"\nEND IF\n");
    CHECK(multi.out == "yes\n");
    auto single = cpltest::run_program("IF 1<2 THEN WRITE \"a\"; WRITE \"b\" ELSE WRITE \"c\"\n");
    CHECK(single.out == "a\nb\n");
    auto closed = cpltest::run_program("IF 1<2 THEN WRITE \"x\" END IF\n");
    CHECK(closed.out == "x\n");
    auto chain = cpltest::run_program(
        "n = 2\nIF n=1 THEN\nWRITE \"one\"\nELSE IF n=2 THEN\nWRITE \"two\"\nELSE\n"
        "WRITE \"many\"\nEND IF\n");
    CHECK(chain.out == "two\n");
    // ELSE without IF
    CHECK_FALSE(Session().compile("ELSE WRITE 1\n", "t.cpl").ok);
}

TEST_CASE("statement continuation") {
    // after a binary operator the statement continues on the next line
    auto r = cpltest::run_program("x = 1 +\n2\nWRITE x\n");
    CHECK(r.out == "3\n");
    // bracketed continuation
    auto r2 = cpltest::run_program(
        "INTEGER FUNCTION f(INTEGER a; INTEGER b) = a+b\nWRITE f(1,\n2)\n");
    CHECK(r2.out == "3\n");
    // complete statements end at the newline
    auto r3 = cpltest::run_program("x = 1\ny = 2\nWRITE x+y\n");
    CHECK(r3.out == "3\n");
}

TEST_CASE("continue_or_end decision function") {
    auto decide = [](const char* text) {
        return continue_or_end(tokenize(text, "t"));
    };
    CHECK(decide("x = 1 +"));
    CHECK(decide("f(a,"));
    CHECK(decide("x ="));
    CHECK(decide("a = b TO"));
    CHECK_FALSE(decide("x = 1"));
    CHECK_FALSE(decide("WRITE x"));
    CHECK(decide("f(a"));  // unbalanced bracket
}

TEST_CASE("expression precedence") {
    CHECK(cpltest::run_program("WRITE [1+2]/4 + 1\n").out == "1.75\n");
    CHECK(cpltest::run_program("WRITE 2+3*4\n").out == "14\n");
    CHECK(cpltest::run_program("WRITE 2^3^2\n").out == "512\n");  // right assoc
    CHECK(cpltest::run_program("WRITE -2^2\n").out == "4\n");     // prefix binds tighter
    CHECK(cpltest::run_program("WRITE 7 MOD 3\n").out == "1\n");
    CHECK(cpltest::run_program("WRITE 1 < 2 AND 3 > 2\n").out == "Y\n");
    CHECK(cpltest::run_program("WRITE NOT 1 > 2\n").out == "Y\n");
    CHECK(cpltest::run_program("WRITE 6 BITAND 3\n").out == "2\n");
    CHECK(cpltest::run_program("WRITE 6 BITOR 3, 6 BITXOR 3\n").out == "7\t5\n");
    CHECK(cpltest::run_program("WRITE 1 LSHIFTED 4, 32 RSHIFTED 2\n").out == "16\t8\n");
    CHECK(cpltest::run_program("WRITE IF 2>1 THEN 10 ELSE 20\n").out == "10\n");
}

TEST_CASE("mismatched bracket kinds are errors") {
    Session s;
    CompileResult r = s.compile("x = (1+2]\n", "t.cpl");
    CHECK_FALSE(r.ok);
    CHECK(r.diagnostics[0].message.find("mismatched bracket") != std::string::npos);
    CHECK_FALSE(Session().compile("x = 1 < 2 < 3\n", "t.cpl").ok);  // chained
}

TEST_CASE("a^-b requires brackets") {
    CHECK_FALSE(Session().compile("x = 2^-3\n", "t.cpl").ok);
    CHECK(cpltest::run_program("WRITE 2^(-1)\n").out == "0.5\n");
}

TEST_CASE("FOR clause forms parse and iterate") {
    CHECK(cpltest::run_program(
              "LOOP FOR i=1 TO 3 AND j=1 TO 2\nWRITE i j \"-\" ./.\nREPEAT\nWRITE\n")
              .out == "11-12-21-22-31-32-\n");
    CHECK(cpltest::run_program("LOOP FOR i=5 DOWN TO 1 BY 2\nWRITE i ./.\nREPEAT\nWRITE\n")
              .out == "531\n");
    CHECK(cpltest::run_program("LOOP FOR 3 TIMES\nWRITE \"x\" ./.\nREPEAT\nWRITE\n")
              .out == "xxx\n");
    CHECK(cpltest::run_program("LOOP FOR n IN (2,5,11)\nWRITE n ./.\nREPEAT\nWRITE\n")
              .out == "2511\n");
    CHECK(cpltest::run_program(
              "LOOP FOR i=1 TO 10 EXCEPT 7, i MOD 3=0\nWRITE i ./.\nREPEAT\nWRITE\n")
              .out == "1245810\n");
    // REAL index requires BY
    CHECK_FALSE(Session().compile("LOOP FOR x=0. TO 2\nREPEAT\n", "t.cpl").ok);
    CHECK(cpltest::run_program(
              "ARRAY(1..19,1..39) OF REAL var\n"
              "LOOP FOR i=1 TO 19 AND j=1 TO 39\nvar(i,j)=i+j\nREPEAT\n"
              "WRITE var(19,39)\n")
              .out == "58\n");
    // mixed ALL + range with inferred LO/HI
    CHECK(cpltest::run_program("ARRAY(1..2,1..2,1..4) OF INTEGER A\n"
                               "LOOP FOR ALL i,j AND k=LO+2 TO HI-1\n"
                               "A(i,j,k)=1\nREPEAT\n"
                               "WRITE SUM A(i,j,k) FOR ALL i,j,k\n")
              .out == "4\n");
}

TEST_CASE("looping operator parses and binds loosest") {
    auto r = cpltest::run_program(
        "ARRAY(1..3) OF REAL arr\nDO arr(n)=n+1 FOR ALL n\n"
        "WRITE (MAX SIN(x) FOR x=0. TO 2 BY 0.5)+(PRODUCT arr(n) FOR ALL n)\n");
    CHECK(r.out.substr(0, 7) == "24.9974");
}

TEST_CASE("round-trip: printing reparses identically") {
    check_roundtrip("WRITE \"Hello world\"\n");
    check_roundtrip("x = 5\nINTEGER y = 2\ny = y + x\nWRITE y, 3/2, 7 DIV 3\n");
    check_roundtrip(
        "ARRAY(1..5) OF REAL v\nLOOP FOR i=1 TO 5\nv(i) = i*1.5\nREPEAT\n"
        "WRITE v(2..4)\nWRITE v(1+2*(0..2))\n");
    check_roundtrip(
        "STRUCTURE(REAL x,y) v1,v2\nWITH v1: x=v2.y; y=3\nWRITE v1.x\n");
    check_roundtrip(
        "SUBROUTINE test(INTEGER x; OPTIONAL INTEGER y=0,z=3; REAL w=3.14)\n"
        "WRITE x y z w\nEND test\ntest(3,w=1E2,y=1)\n");
    check_roundtrip(
        "TYPE node = STRUCTURE(POINTER TO node next; INTEGER val)\n"
        "POINTER TO node head\nNEW head\nhead.val = 5\nFREE head\n");
    check_roundtrip("LOOP FOR i=1 TO 10 EXCEPT 7, i MOD 3=0\nWRITE i\nREPEAT\n");
    check_roundtrip(
        "CASE 3 OF\n1: WRITE \"a\"\n2,3: WRITE \"b\"\nELSE\nWRITE \"c\"\nEND CASE\n");
    check_roundtrip("TRAP \"disk\"\nWRITE ERRORMESSAGE\nEND TRAP\nERROR \"disk x\"\n");
    check_roundtrip(
        "ARRAY(1..2,1..2) OF REAL A,B,C\nC($i,$j) = A($i,$m)*B($m,$j)\n");
    check_roundtrip("s = <<E\nline one\nline two\nE\nWRITE s\n");
    check_roundtrip("WRITE 3*(INTEGER FROM stdin)\n");
    check_roundtrip("alias == a + b\na = 1\nb = 2\nWRITE alias\n");
    check_roundtrip("MODULE m\nINTEGER hidden = 1\nEND m\n");
    check_roundtrip("DO WRITE \"x\" ./. FOR 2 TIMES\nWRITE\n");
    check_roundtrip("DYNAMIC POINTER d\nINTEGER iv = 1\nd = ^iv\n"
                    "IF d IS INTEGER THEN\nWRITE \"i\"\nEND IF\n");
    check_roundtrip("V = ARRAY(0..4,1..5) OF REAL\nV w\nWRITE LENGTH(w(**))\n");
}

TEST_CASE("bracketless subroutine call statements") {
    auto r = cpltest::run_program(
        "SUBROUTINE greet(STRING who; INTEGER n)\nWRITE who n\nEND greet\n"
        "greet \"hi\", 7\n");
    CHECK(r.out == "hi7\n");
}

TEST_CASE("string index adjacency vs concatenation") {
    CHECK(cpltest::run_program("s = \"abcd\"\nWRITE s(1)\n").out == "b\n");
    CHECK(cpltest::run_program("s = \"abcd\"\nWRITE s (1)\n").out == "abcd1\n");
}

TEST_CASE("WITH forms") {
    auto r = cpltest::run_program(
        "STRUCTURE(REAL x,y) v1,v2\nv2.y = 7.5\nWITH v1: x=v2.y; y=3\n"
        "WRITE v1.x, v1.y\n");
    CHECK(r.out == "7.5\t3\n");
    auto multi = cpltest::run_program(
        "STRUCTURE(REAL x,y) p\nWITH p\nx = 1\ny = 2\nEND WITH\nWRITE p.x+p.y\n");
    CHECK(multi.out == "3\n");
    CHECK(cpltest::run_program("WITH 3: WRITE SIN\n").out ==
          cpltest::run_program("WRITE SIN(3)\n").out);
    // locals shadow WITH frames
    auto shadow = cpltest::run_program(
        "STRUCTURE(REAL x) p\np.x = 9\nWITH p\nREAL x = 1\nWRITE x\nEND WITH\n");
    CHECK(shadow.out == "1\n");
}
