import pytest
from hypothesis import given, strategies as st

from dafnyforge.surface.lexer import LexError, Tok, line_col, normalize, significant, tokenize

_pieces = st.sampled_from([
    "x", "foo", "i'", "_a1", "42", "0x1F", "3.5", " ", "\n", "\t", "==", "<==>", "!in", "::", ":=",
    "(", ")", "[", "]", "{", "}", ",", ";", "|", "+", "-", "*", "/", "%", "<", ">", "..",
    '"abc"', '"a\\"b"', '@"x""y"', "'c'", "'\\n'", "// note\n", "/* c */", "/* a /* nested */ b */",
])
_seps = st.sampled_from([" ", "  ", "\n", "\t ", "\n  "])
source_text = st.lists(st.tuples(_pieces, _seps), max_size=40).map(
    lambda parts: "".join(p + s for p, s in parts))


@given(source_text)
def test_tokens_cover_text_exactly(text):
    toks = tokenize(text)
    assert "".join(t.text for t in toks) == text
    pos = 0
    for t in toks:
        assert t.start == pos
        pos = t.end


@given(source_text)
def test_normalize_idempotent(text):
    once = normalize(text)
    assert normalize(once) == once


@given(source_text)
def test_normalize_ignores_comments_and_spacing(text):
    spaced = " ".join(t.text for t in tokenize(text) if t.kind != Tok.COMMENT)
    assert normalize(spaced) == normalize(text)


def test_normalize_examples():
    assert normalize("a  ==\n b // c") == "a==b"
    assert normalize("forall i :: 0 <= i") == "forall i::0<=i"
    assert normalize("x !in  s") == "x!in s"
    assert normalize('s == "a  b"') == 's=="a  b"'


def test_nested_block_comment_is_one_token():
    toks = tokenize("a /* x /* y */ z */ b")
    kinds = [t.kind for t in toks if not t.kind == Tok.WS]
    assert kinds == [Tok.IDENT, Tok.COMMENT, Tok.IDENT]


def test_multi_char_operators():
    texts = [t.text for t in tokenize("a <==> b ==> c :| d") if not t.trivia]
    assert texts == ["a", "<==>", "b", "==>", "c", ":|", "d"]


def test_char_literal_vs_primed_identifier():
    toks = [t for t in tokenize("x' := 'a'") if not t.trivia]
    assert (toks[0].kind, toks[0].text) == (Tok.IDENT, "x'")
    assert toks[-1].kind == Tok.CHAR


@pytest.mark.parametrize("bad", ['"open', "/* never closed", '@"half'])
def test_unterminated_literals_raise(bad):
    with pytest.raises(LexError):
        tokenize(bad)


def test_line_col_is_one_based():
    text = "ab\ncd\n"
    assert line_col(text, 0) == (1, 1)
    assert line_col(text, 4) == (2, 2)


def test_significant_skips_trivia():
    toks = tokenize("a // c\n b")
    assert [toks[i].text for i in significant(toks)] == ["a", "b"]


@pytest.mark.parametrize("text,norm", [("x / / y", "x/ /y"), ("a / * b", "a/ *b"), ("a = = b", "a= =b"),
                                       ("i ' ", "i '")])
def test_normalize_keeps_spaces_that_prevent_fusion(text, norm):
    assert normalize(text) == norm
