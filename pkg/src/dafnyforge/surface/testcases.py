"""Reading and writing the fixed-shape ``Test()`` method.

Each test case is an optional run of ``var x := <literal>;`` bindings, one
call ``var r := M(args);`` and one ``expect r == v;`` per output, in order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

from .lexer import Tok, Token, line_col, tokenize
from .program import DeclKind, Program, Signature, parse_program


class TestOrigin(str, Enum):
    __test__ = False

    TACO = "TACO"
    GENERATED = "GENERATED"


class MalformedTestBody(ValueError):
    pass


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    ordinal: int
    inputs: tuple[str, ...]
    expected: tuple[str, ...]
    bindings: tuple[tuple[str, str], ...] = ()
    origin: TestOrigin = TestOrigin.GENERATED
    # 1-based source lines of the expect statements; positional metadata only
    expect_lines: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.ordinal < 1:
            raise ValueError("test ordinals are positive")

    @property
    def binding_map(self) -> dict[str, str]:
        return dict(self.bindings)


_TAG = re.compile(r"\[(TACO|GENERATED)\]")
_ORDINAL = re.compile(r"[Tt]est case\s+(\d+)")


def _statements(text: str, toks: list[Token], a: int, b: int):
    """Split tokens ``a..b`` (exclusive) on depth-0 ``;``.

    Yields (significant tokens, comments before the statement, trailing
    same-line comment).
    """
    depth = 0
    cur: list[Token] = []
    pending_comments: list[Token] = []
    stmt_comments: list[Token] = []
    k = a
    while k < b:
        t = toks[k]
        if t.kind == Tok.COMMENT:
            if not cur:
                pending_comments.append(t)
            k += 1
            continue
        if t.kind == Tok.WS:
            k += 1
            continue
        if not cur:
            stmt_comments, pending_comments = pending_comments, []
        cur.append(t)
        if t.text in "([{":
            depth += 1
        elif t.text in ")]}":
            depth -= 1
        elif t.text == ";" and depth == 0:
            trailing = None
            j = k + 1
            while j < b and toks[j].kind == Tok.WS and "\n" not in toks[j].text:
                j += 1
            if j < b and toks[j].kind == Tok.COMMENT and toks[j].text.startswith("//"):
                trailing = toks[j]
                k = j
            yield cur, stmt_comments, trailing
            cur = []
        k += 1
    if cur:
        raise MalformedTestBody(f"statement without ';' at line {line_col(text, cur[0].start)[0]}")


def _split_top(toks: list[Token], sep: str) -> list[list[Token]]:
    parts: list[list[Token]] = [[]]
    depth = 0
    for t in toks:
        if t.text in "([{":
            depth += 1
        elif t.text in ")]}":
            depth -= 1
        if t.text == sep and depth == 0:
            parts.append([])
        else:
            parts[-1].append(t)
    return parts


def _span_text(text: str, toks: list[Token]) -> str:
    return text[toks[0].start : toks[-1].end] if toks else ""


def extract_test_cases(decls: Program | str, test_name: str = "Test") -> list[TestCase]:
    program = parse_program(decls) if isinstance(decls, str) else decls
    test = program.get(test_name)
    if test is None or test.kind != DeclKind.METHOD:
        raise MalformedTestBody(f"no method named {test_name}")
    methods = {d.name: d for d in program.declarations if d.kind == DeclKind.METHOD}
    text = program.text
    toks = tokenize(text)
    a = next(k for k, t in enumerate(toks) if t.start == test.body_span[0]) + 1
    b = next(k for k, t in enumerate(toks) if t.start == test.body_span[1] - 1)

    cases: list[TestCase] = []
    bound: dict[str, str] = {}
    group_comments: list[Token] = []
    call = None  # (callee signature, result vars, inputs, bindings, comments)
    expects: list[tuple[str, int]] = []

    def where(tok: Token) -> str:
        return f"line {line_col(text, tok.start)[0]}"

    def finish():
        nonlocal call, expects, bound, group_comments
        sig, results, inputs, bindings, comments = call
        tag = TestOrigin.GENERATED
        ordinal = len(cases) + 1
        for c in comments:
            if m := _TAG.search(c.text):
                tag = TestOrigin(m.group(1))
            if m := _ORDINAL.search(c.text):
                ordinal = int(m.group(1))
        cases.append(TestCase(
            ordinal=ordinal,
            inputs=tuple(inputs),
            expected=tuple(v for v, _ in expects),
            bindings=tuple(bindings),
            origin=tag,
            expect_lines=tuple(line for _, line in expects),
        ))
        call, expects, bound, group_comments = None, [], {}, []

    for stmt, comments, trailing in _statements(text, toks, a, b):
        head = stmt[0].text
        if head == "var":
            if call is not None:
                if len(expects) != len(call[1]):
                    raise MalformedTestBody(f"missing expect before {where(stmt[0])}")
                finish()
            try:
                assign = next(i for i, t in enumerate(stmt) if t.text == ":=")
            except StopIteration:
                raise MalformedTestBody(f"var without ':=' at {where(stmt[0])}") from None
            lhs = [t.text for t in stmt[1:assign] if t.text != ","]
            rhs = stmt[assign + 1 : -1]
            if not rhs:
                raise MalformedTestBody(f"empty right-hand side at {where(stmt[0])}")
            group_comments.extend(comments)
            if trailing is not None:
                group_comments.append(trailing)
            is_call = (rhs[0].kind == Tok.IDENT and rhs[0].text in methods
                       and len(rhs) > 1 and rhs[1].text == "(" and rhs[-1].text == ")")
            if not is_call:
                if len(lhs) != 1:
                    raise MalformedTestBody(f"multi-variable binding at {where(stmt[0])}")
                bound[lhs[0]] = text[rhs[0].start : rhs[-1].end]
                continue
            sig = methods[rhs[0].text].signature
            if len(lhs) != len(sig.outputs):
                raise MalformedTestBody(
                    f"{sig.name} returns {len(sig.outputs)} values, {len(lhs)} bound at {where(stmt[0])}")
            args = [_span_text(text, p) for p in _split_top(rhs[2:-1], ",")] if len(rhs) > 3 else []
            if len(args) != len(sig.inputs):
                raise MalformedTestBody(f"{sig.name} takes {len(sig.inputs)} arguments at {where(stmt[0])}")
            inputs, bindings = [], []
            for (pname, _), arg in zip(sig.inputs, args):
                if arg in bound:
                    inputs.append(bound[arg])
                    bindings.append((pname, bound[arg]))
                else:
                    inputs.append(arg)
            call = (sig, lhs, inputs, bindings, group_comments)
        elif head == "expect":
            if call is None:
                raise MalformedTestBody(f"expect without a call at {where(stmt[0])}")
            cmp = _split_top(stmt[1:-1], ",")[0]
            results = call[1]
            k = len(expects)
            if (k >= len(results) or len(cmp) < 3 or cmp[0].text != results[k]
                    or cmp[1].text != "=="):
                want = results[min(k, len(results) - 1)]
                raise MalformedTestBody(f"expected 'expect {want} == ...' at {where(stmt[0])}")
            value = _span_text(text, cmp[2:])
            expects.append((value, line_col(text, stmt[0].start)[0]))
        else:
            raise MalformedTestBody(f"unexpected statement '{head}' at {where(stmt[0])}")
    if call is not None:
        if len(expects) != len(call[1]):
            raise MalformedTestBody("last test case is missing its expect statements")
        finish()
    elif bound:
        raise MalformedTestBody("trailing bindings without a call")
    return cases


def render_test_method(sig: Signature, cases: Sequence[TestCase], name: str = "Test") -> str:
    lines = [f"method {name}() {{"]
    for case in cases:
        lines.append(f"  // Test case {case.ordinal} [{case.origin.value}]")
        bmap = case.binding_map
        args = []
        for (pname, _), lit in zip(sig.inputs, case.inputs):
            if pname in bmap:
                var = f"{pname}{case.ordinal}"
                lines.append(f"  var {var} := {bmap[pname]};")
                args.append(var)
            else:
                args.append(lit)
        if len(sig.outputs) == 1:
            results = [f"result{case.ordinal}"]
        else:
            results = [f"result{case.ordinal}_{j + 1}" for j in range(len(sig.outputs))]
        lines.append(f"  var {', '.join(results)} := {sig.name}({', '.join(args)});")
        for r, v in zip(results, case.expected):
            lines.append(f"  expect {r} == {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def make_test_case(ordinal: int, sig: Signature, inputs: Sequence[str], expected: Sequence[str],
                   origin: TestOrigin = TestOrigin.GENERATED,
                   bindings: Optional[Mapping[str, str]] = None) -> TestCase:
    if len(inputs) != len(sig.inputs) or len(expected) != len(sig.outputs):
        raise ValueError(f"test {ordinal} does not match the arity of {sig.name}")
    return TestCase(ordinal, tuple(inputs), tuple(expected), tuple((bindings or {}).items()), origin)
