import pytest
from hypothesis import given, strategies as st

from dafnyforge.surface.program import (
    Clause, ClauseKind, DeclKind, Origin, ParseError, Signature, SourceText, parse_program,
)
from synthetic import SYNTHETIC


def test_palindrome_declarations(palindrome_src):
    prog = parse_program(palindrome_src)
    assert prog.names() == ["isStringPalindrome", "reverseString", "IsPalindrome", "Test"]
    main = prog.get("IsPalindrome")
    assert main.kind == DeclKind.METHOD
    assert main.signature == Signature("IsPalindrome", (("s", "string"),), (("isPalindrome", "bool"),))
    assert [c.expr_text for c in main.ensures] == ["isPalindrome == isStringPalindrome(s)",
                                                   "|s| <= 1 ==> isPalindrome"]
    assert main.requires == ()
    fn = prog.get("reverseString")
    assert fn.kind == DeclKind.FUNCTION and fn.return_type == "string"
    assert len(fn.ensures) == 3


@pytest.mark.parametrize("name", ["palindrome.dfy", "arith_complete.dfy", "arith_incomplete.dfy"])
def test_render_is_byte_identical(name):
    from conftest import PROGRAMS
    text = (PROGRAMS / name).read_text()
    assert parse_program(text).render() == text


@pytest.mark.parametrize("name,src,_", SYNTHETIC)
def test_render_synthetic(name, src, _):
    assert parse_program(src).render() == src


def test_multiline_clause_and_requires(arith_complete_src):
    prog = parse_program(arith_complete_src)
    seq = prog.get("IsArithmeticSequence")
    assert [c.norm_text for c in seq.requires] == ["|sequence|>=2"]
    assert "forall i, j" in seq.ensures[0].expr_text
    main = prog.get("ArithmeticProgression")
    assert main.signature.outputs == (("hasSamePattern", "bool"),)


def test_bodyless_method_is_a_declaration():
    src = "method M(x: int) returns (y: int)\n  requires x > 0\n  ensures y > x\n\nmethod Test() {\n}\n"
    prog = parse_program(src)
    m = prog.get("M")
    assert m.body_span is None and m.body_text is None
    assert [c.expr_text for c in m.requires] == ["x > 0"]
    assert prog.get("Test").body_span is not None


def test_set_comprehension_in_clause_is_not_a_body():
    src = "method M(xs: seq<int>) returns (s: set<int>)\n  ensures s == set x | x in xs\n{\n  s := set x | x in xs;\n}\n"
    m = parse_program(src).get("M")
    assert [c.expr_text for c in m.ensures] == ["s == set x | x in xs"]
    assert m.body_text.strip().startswith("{")


def test_generic_parameters_split_on_top_level_commas():
    src = "method M(m: map<int, bool>, x: int) returns (r: seq<(int, int)>)\n{\n}\n"
    sig = parse_program(src).get("M").signature
    assert sig.inputs == (("m", "map<int, bool>"), ("x", "int"))
    assert sig.outputs == (("r", "seq<(int, int)>"),)


def test_other_toplevel_constructs_are_skipped_with_warning():
    src = "datatype Color = Red | Green\n\nmethod M() returns (c: Color)\n{\n  c := Red;\n}\n"
    prog = parse_program(src)
    assert prog.names() == ["M"]
    assert "Red" in prog.other_names and prog.warnings


@pytest.mark.parametrize("bad", [
    "method M() {\n",
    "method M() }\n",
    "method {\n}\n",
    "method M() returns (x: int) {\n}\nmethod M() returns (x: int) {\n}\n",
])
def test_malformed_programs_raise(bad):
    with pytest.raises(ParseError):
        parse_program(bad)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as info:
        parse_program("method A() {\n}\n\nmethod A() {\n}\n")
    assert info.value.line == 4


def test_declaration_at_offset(palindrome_src):
    prog = parse_program(palindrome_src)
    off = palindrome_src.index("isPalindrome := true")
    assert prog.declaration_at(off).name == "IsPalindrome"
    assert prog.declaration_at(0).name == "isStringPalindrome"


def test_source_text_rejects_empty():
    with pytest.raises(ValueError):
        SourceText("", Origin.FIXTURE)


def test_signature_rejects_duplicate_names():
    with pytest.raises(ValueError):
        Signature("M", (("x", "int"),), (("x", "int"),))


def test_signature_render_and_canonical():
    sig = Signature("M", (("a", "seq<int>"),), (("r", "bool"),))
    assert sig.render() == "method M(a: seq<int>) returns (r: bool)"
    assert sig.render("lemma").startswith("lemma M(")
    assert sig.canonical() == Signature("M", (("a", "seq < int >"),), (("r", "bool"),)).canonical()


_exprs = st.sampled_from(["x > 0", "|s| <= 1 ==> r", "forall i :: 0 <= i < n ==> a[i] == 0", "r == x + 1"])


@given(_exprs, st.lists(st.sampled_from([" ", "\n    ", "  "]), min_size=1, max_size=5))
def test_clause_equality_ignores_layout(expr, gaps):
    words = expr.split(" ")
    spaced = words[0] + "".join(g + w for g, w in zip(gaps * len(words), words[1:]))
    a = Clause(ClauseKind.ENSURES, expr)
    b = Clause(ClauseKind.ENSURES, spaced + " // why")
    assert a == b and hash(a) == hash(b)
    assert a != Clause(ClauseKind.ENSURES, expr + " + 1")
