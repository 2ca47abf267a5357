"""Clause-level parsing of Dafny programs.

This is deliberately not a Dafny grammar. It finds top-level
method/function/predicate/lemma declarations, splits their headers into
signature and specification clauses, and records body spans. Anything else at
top level is skipped with a warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .lexer import LexError, Tok, Token, line_col, normalize, tokenize

log = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{line}:{column}: {message}" if line else message)
        self.message = message
        self.line = line
        self.column = column


class Origin(str, Enum):
    LLM = "llm-generated"
    FIXTURE = "fixture"
    STRIPPED = "stripped"
    RENDERED = "rendered"


@dataclass(frozen=True)
class SourceText:
    text: str
    origin: Origin = Origin.FIXTURE

    def __post_init__(self):
        if not self.text:
            raise ValueError("source text must be non-empty")

    def __str__(self) -> str:
        return self.text


class ClauseKind(str, Enum):
    REQUIRES = "requires"
    ENSURES = "ensures"
    INVARIANT = "invariant"
    ASSERT = "assert"
    DECREASES = "decreases"
    READS = "reads"
    MODIFIES = "modifies"


@dataclass(frozen=True, eq=False)
class Clause:
    """One specification clause. Equality is normalized-text equality."""

    kind: ClauseKind
    expr_text: str
    # rendered as a trailing comment; never part of identity
    note: Optional[str] = None

    @property
    def norm_text(self) -> str:
        return normalize(self.expr_text)

    def __eq__(self, other):
        if not isinstance(other, Clause):
            return NotImplemented
        return self.norm_text == other.norm_text

    def __hash__(self):
        return hash(self.norm_text)

    def __repr__(self):
        return f"Clause({self.kind.value} {self.norm_text!r})"


@dataclass(frozen=True)
class Signature:
    name: str
    inputs: tuple[tuple[str, str], ...] = ()
    outputs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        names = [n for n, _ in self.inputs + self.outputs if n]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate parameter names in {self.name}")

    @property
    def input_names(self) -> list[str]:
        return [n for n, _ in self.inputs]

    @property
    def output_names(self) -> list[str]:
        return [n for n, _ in self.outputs]

    def params_text(self) -> str:
        return ", ".join(f"{n}: {t}" for n, t in self.inputs + self.outputs)

    def render(self, kind: str = "method") -> str:
        ins = ", ".join(f"{n}: {t}" for n, t in self.inputs)
        text = f"{kind} {self.name}({ins})"
        if self.outputs:
            outs = ", ".join(f"{n}: {t}" for n, t in self.outputs)
            text += f" returns ({outs})"
        return text

    def canonical(self) -> str:
        ins = ",".join(f"{n}:{normalize(t)}" for n, t in self.inputs)
        outs = ",".join(f"{n}:{normalize(t)}" for n, t in self.outputs)
        return f"{self.name}({ins})->({outs})"


class DeclKind(str, Enum):
    METHOD = "method"
    FUNCTION = "function"
    PREDICATE = "predicate"
    LEMMA = "lemma"


@dataclass(frozen=True)
class Declaration:
    kind: DeclKind
    name: str
    signature: Signature
    requires: tuple[Clause, ...]
    ensures: tuple[Clause, ...]
    span: tuple[int, int]
    source: str
    # absolute offsets of the body braces, inclusive of both
    body_span: Optional[tuple[int, int]] = None
    return_type: Optional[str] = None
    other_clauses: tuple[Clause, ...] = ()
    proof_hints: tuple = ()

    @property
    def body_text(self) -> Optional[str]:
        if self.body_span is None:
            return None
        off = self.span[0]
        return self.source[self.body_span[0] - off : self.body_span[1] - off]

    @property
    def header_text(self) -> str:
        if self.body_span is None:
            return self.source
        return self.source[: self.body_span[0] - self.span[0]]


@dataclass(frozen=True)
class Program:
    """A parsed program; ``render()`` reproduces the source byte for byte."""

    text: str
    declarations: tuple[Declaration, ...]
    # names introduced by skipped top-level constructs (datatypes, consts, ...)
    other_names: frozenset[str] = frozenset()
    warnings: tuple[str, ...] = ()

    def render(self) -> str:
        parts, pos = [], 0
        for d in self.declarations:
            parts.append(self.text[pos : d.span[0]])
            parts.append(d.source)
            pos = d.span[1]
        parts.append(self.text[pos:])
        return "".join(parts)

    def get(self, name: str) -> Optional[Declaration]:
        for d in self.declarations:
            if d.name == name:
                return d
        return None

    def names(self) -> list[str]:
        return [d.name for d in self.declarations]

    def declaration_at(self, offset: int) -> Optional[Declaration]:
        for d in self.declarations:
            if d.span[0] <= offset < d.span[1]:
                return d
        return None


_MODIFIERS = {"ghost", "static", "opaque", "twostate", "least", "greatest",
              "abstract", "compiled", "inductive"}
_DECL_KINDS = {"method", "function", "predicate", "lemma", "constructor"}
_OTHER_TOPLEVEL = {"datatype", "codatatype", "type", "const", "module", "class",
                   "trait", "import", "include", "newtype", "iterator", "export"}
_TOPLEVEL = _MODIFIERS | _DECL_KINDS | _OTHER_TOPLEVEL
_SPEC_KEYWORDS = {"requires", "ensures", "reads", "modifies", "decreases"}
_OPEN = {"(": ")", "[": "]", "{": "}"}
_CLOSE = {")", "]", "}"}
# a "{" after one of these starts an expression, not a body
_EXPR_LEAD_KEYWORDS = {"in", "requires", "ensures", "reads", "modifies",
                       "decreases", "then", "else", "return", "invariant",
                       "assert", "assume", "expect", "var", "notin"}


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        try:
            self.toks = tokenize(text)
        except LexError as e:
            raise ParseError(str(e), *line_col(text, e.offset)) from None
        self.sig = [k for k, t in enumerate(self.toks) if not t.trivia]

    def tok(self, s: int) -> Token:
        return self.toks[self.sig[s]]

    def error(self, message: str, s: int) -> ParseError:
        off = self.tok(s).start if s < len(self.sig) else len(self.text)
        return ParseError(message, *line_col(self.text, off))

    def match_close(self, s: int) -> int:
        """Index of the bracket closing the one at ``s``."""
        stack = []
        for j in range(s, len(self.sig)):
            t = self.tok(j).text
            if t in _OPEN:
                stack.append(_OPEN[t])
            elif t in _CLOSE:
                if not stack or stack[-1] != t:
                    raise self.error(f"unbalanced '{t}'", j)
                stack.pop()
                if not stack:
                    return j
        raise self.error(f"unclosed '{self.tok(s).text}'", s)

    def is_word(self, s: int, *words: str) -> bool:
        return s < len(self.sig) and self.tok(s).kind == Tok.IDENT and self.tok(s).text in words

    def is_punct(self, s: int, p: str) -> bool:
        return s < len(self.sig) and self.tok(s).kind == Tok.PUNCT and self.tok(s).text == p

    def starts_body(self, s: int) -> bool:
        """Whether the ``{`` at ``s`` opens a block rather than a set display."""
        if not self.is_punct(s, "{") or self.is_punct(s + 1, ":"):
            return False
        if s == 0:
            return True
        prev = self.tok(s - 1)
        if prev.kind == Tok.PUNCT:
            return prev.text in (")", "]", "}", ">")
        if prev.kind == Tok.IDENT:
            return prev.text not in _EXPR_LEAD_KEYWORDS
        return True

    def skip_attribute(self, s: int) -> int:
        while self.is_punct(s, "{") and self.is_punct(s + 1, ":"):
            s = self.match_close(s) + 1
        return s


def parse_program(src: SourceText | str) -> Program:
    text = src.text if isinstance(src, SourceText) else src
    if not text:
        raise ValueError("empty program")
    sc = _Scanner(text)
    decls: list[Declaration] = []
    other: set[str] = set()
    warnings: list[str] = []
    n = len(sc.sig)
    s = 0
    while s < n:
        t = sc.tok(s)
        start = s
        while sc.is_word(s, *_MODIFIERS):
            s += 1
        if sc.is_word(s, *_DECL_KINDS):
            d, s = _parse_declaration(sc, start, s)
            decls.append(d)
            continue
        if sc.is_word(s, *_OTHER_TOPLEVEL):
            kw = sc.tok(s).text
            end = _skip_construct(sc, s)
            other.update(_names_in_construct(sc, s, end))
            line, _ = line_col(text, t.start)
            msg = f"skipped top-level '{kw}' at line {line}"
            log.warning(msg)
            warnings.append(msg)
            s = end
            continue
        if t.text in _OPEN:
            sc.match_close(s)
        if t.text in _CLOSE:
            raise sc.error(f"unbalanced '{t.text}'", s)
        raise sc.error(f"unexpected '{t.text}' at top level", s)
    seen = set()
    for d in decls:
        if d.name in seen:
            raise ParseError(f"duplicate declaration {d.name}", *line_col(text, d.span[0]))
        seen.add(d.name)
    return Program(text, tuple(decls), frozenset(other), tuple(warnings))


def _skip_construct(sc: _Scanner, s: int) -> int:
    s += 1
    while s < len(sc.sig):
        if sc.is_word(s, *_TOPLEVEL):
            return s
        if sc.tok(s).text in _OPEN:
            s = sc.match_close(s)
        elif sc.tok(s).text in _CLOSE:
            raise sc.error(f"unbalanced '{sc.tok(s).text}'", s)
        s += 1
    return s


def _names_in_construct(sc: _Scanner, s: int, end: int) -> set[str]:
    kw = sc.tok(s).text
    names: set[str] = set()
    j = sc.skip_attribute(s + 1)
    if j < end and sc.tok(j).kind == Tok.IDENT:
        names.add(sc.tok(j).text)
    if kw in ("datatype", "codatatype"):
        # constructors follow '=' and each '|'
        for k in range(j, end - 1):
            if sc.tok(k).text in ("=", "|") and sc.tok(k + 1).kind == Tok.IDENT:
                names.add(sc.tok(k + 1).text)
    return names


def _parse_declaration(sc: _Scanner, start: int, s: int) -> tuple[Declaration, int]:
    text = sc.text
    kind_word = sc.tok(s).text
    if kind_word == "constructor":
        raise sc.error("constructors are only allowed inside classes", s)
    kind = DeclKind(kind_word)
    s += 1
    if kind in (DeclKind.FUNCTION, DeclKind.PREDICATE) and sc.is_word(s, "method"):
        s += 1
    s = sc.skip_attribute(s)
    if s >= len(sc.sig) or sc.tok(s).kind != Tok.IDENT or sc.tok(s).text in _TOPLEVEL:
        raise sc.error(f"expected a name after '{kind_word}'", s)
    name = sc.tok(s).text
    s += 1
    if sc.is_punct(s, "<"):
        s = _skip_angles(sc, s)
    if not sc.is_punct(s, "("):
        raise sc.error(f"expected '(' after {name}", s)
    close = sc.match_close(s)
    inputs = _params(sc, s, close)
    s = close + 1
    outputs: list[tuple[str, str]] = []
    return_type = None
    if kind in (DeclKind.METHOD, DeclKind.LEMMA) and sc.is_word(s, "returns"):
        if not sc.is_punct(s + 1, "("):
            raise sc.error("expected '(' after returns", s + 1)
        close = sc.match_close(s + 1)
        outputs = _params(sc, s + 1, close)
        s = close + 1
    elif kind in (DeclKind.FUNCTION, DeclKind.PREDICATE) and sc.is_punct(s, ":"):
        s += 1
        if sc.is_punct(s, "("):
            close = sc.match_close(s)
            outputs = _params(sc, s, close)
            return_type = outputs[0][1] if outputs else None
            s = close + 1
        else:
            t0 = s
            while s < len(sc.sig) and not _header_stop(sc, s):
                if sc.tok(s).text in _OPEN:
                    s = sc.match_close(s)
                s += 1
            if s == t0:
                raise sc.error("expected a return type", s)
            return_type = text[sc.tok(t0).start : sc.tok(s - 1).end]

    clauses: list[Clause] = []
    while sc.is_word(s, *_SPEC_KEYWORDS):
        kw = sc.tok(s).text
        j = s + 1
        while j < len(sc.sig) and not _header_stop(sc, j):
            if sc.tok(j).text in _OPEN:
                j = sc.match_close(j)
            elif sc.tok(j).text in _CLOSE:
                raise sc.error(f"unbalanced '{sc.tok(j).text}'", j)
            j += 1
        if j == s + 1:
            raise sc.error(f"empty {kw} clause", s)
        expr = text[sc.tok(s + 1).start : sc.tok(j - 1).end]
        clauses.append(Clause(ClauseKind(kw), expr))
        s = j

    body_span = None
    if sc.is_punct(s, "{"):
        close = sc.match_close(s)
        body_span = (sc.tok(s).start, sc.tok(close).end)
        s = close + 1
    elif s < len(sc.sig) and not sc.is_word(s, *_TOPLEVEL):
        raise sc.error(f"unexpected '{sc.tok(s).text}' in declaration of {name}", s)

    span = (sc.tok(start).start, sc.tok(s - 1).end)
    sig = Signature(name, tuple(inputs), tuple(outputs))
    decl = Declaration(
        kind=kind,
        name=name,
        signature=sig,
        requires=tuple(c for c in clauses if c.kind == ClauseKind.REQUIRES),
        ensures=tuple(c for c in clauses if c.kind == ClauseKind.ENSURES),
        span=span,
        source=text[span[0] : span[1]],
        body_span=body_span,
        return_type=return_type,
        other_clauses=tuple(c for c in clauses if c.kind not in (ClauseKind.REQUIRES, ClauseKind.ENSURES)),
    )
    return decl, s


def _header_stop(sc: _Scanner, s: int) -> bool:
    t = sc.tok(s)
    if t.kind == Tok.IDENT and (t.text in _SPEC_KEYWORDS or t.text in _TOPLEVEL):
        return True
    return sc.starts_body(s)


def _skip_angles(sc: _Scanner, s: int) -> int:
    depth = 0
    while s < len(sc.sig):
        t = sc.tok(s).text
        if t == "<":
            depth += 1
        elif t == ">":
            depth -= 1
        elif t == ">>":
            depth -= 2
        if depth <= 0:
            return s + 1
        s += 1
    raise sc.error("unclosed '<'", s)


def _params(sc: _Scanner, open_: int, close: int) -> list[tuple[str, str]]:
    """Split ``(a: T, b: map<K, V>)`` into (name, type) pairs."""
    text = sc.text
    params: list[tuple[str, str]] = []
    groups: list[tuple[int, int]] = []
    depth_angle = 0
    first = open_ + 1
    j = first
    while j < close:
        t = sc.tok(j).text
        if t in _OPEN:
            j = sc.match_close(j)
        elif t == "<":
            depth_angle += 1
        elif t == ">":
            depth_angle -= 1
        elif t == ">>":
            depth_angle -= 2
        elif t == "," and depth_angle == 0:
            groups.append((first, j))
            first = j + 1
        j += 1
    if first < close:
        groups.append((first, close))
    for a, b in groups:
        while sc.is_word(a, "ghost", "nameonly", "older", "new"):
            a += 1
        if sc.tok(a).kind != Tok.IDENT or not sc.is_punct(a + 1, ":"):
            raise sc.error("expected 'name: type' parameter", a)
        if a + 2 >= b:
            raise sc.error("missing parameter type", a + 1)
        typ = text[sc.tok(a + 2).start : sc.tok(b - 1).end]
        params.append((sc.tok(a).text, typ))
    return params
