"""Removing proof hints from verified programs, reversibly.

A hint is removed together with the whitespace run in front of it and any
``//`` comment trailing it on the same line. The removed text is kept
verbatim, so putting every hint back at its recorded offset reproduces the
input exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .lexer import Tok, Token, tokenize
from .program import DeclKind, Origin, Program, SourceText, parse_program


class HintKind(str, Enum):
    LOOP_INVARIANT = "loopInvariant"
    ASSERT = "assertStatement"
    DECREASES = "decreasesClause"
    LEMMA_CALL = "lemmaCallStatement"
    AUX_LEMMA = "auxiliaryLemmaDeclaration"


@dataclass(frozen=True)
class ProofHint:
    kind: HintKind
    declaration: str
    # half-open character span in the original text
    span: tuple[int, int]
    # exactly original[span[0]:span[1]]
    removed_text: str
    clause_text: str


_LOOP_SPEC = {"invariant", "decreases", "modifies"}


def _extend(text: str, toks: list[Token], first: int, last: int) -> tuple[int, int]:
    """Span of tokens first..last plus leading whitespace and a trailing line comment."""
    start = toks[first].start
    if first > 0 and toks[first - 1].kind == Tok.WS:
        start = toks[first - 1].start
    end = toks[last].end
    j = last + 1
    if j < len(toks) and toks[j].kind == Tok.WS and "\n" not in toks[j].text:
        j += 1
    if j < len(toks) and toks[j].kind == Tok.COMMENT and toks[j].text.startswith("//"):
        end = toks[j].end
    return start, end


def _body_hints(text: str, toks: list[Token], a: int, b: int, decl: str,
                lemma_names: set[str]) -> list[ProofHint]:
    """Hints among tokens a..b (exclusive), which are the inside of a method body."""
    sig = [k for k in range(a, b) if not toks[k].trivia]
    hints: list[ProofHint] = []

    def close_of(i: int) -> int:
        depth = 0
        for j in range(i, len(sig)):
            t = toks[sig[j]].text
            if t in "([{":
                depth += 1
            elif t in ")]}":
                depth -= 1
                if depth == 0:
                    return j
        return len(sig) - 1

    def opens_block(i: int) -> bool:
        if toks[sig[i]].text != "{" or (i + 1 < len(sig) and toks[sig[i + 1]].text == ":"):
            return False
        prev = toks[sig[i - 1]]
        if prev.kind == Tok.PUNCT:
            return prev.text in (")", "]", "}", ">")
        return not (prev.kind == Tok.IDENT and prev.text in
                    ("in", "invariant", "decreases", "modifies", "then", "else", "return"))

    def record(kind: HintKind, i: int, j: int):
        s, e = _extend(text, toks, sig[i], sig[j])
        clause = text[toks[sig[i]].start : toks[sig[j]].end]
        hints.append(ProofHint(kind, decl, (s, e), text[s:e], clause))

    i = 0
    while i < len(sig):
        t = toks[sig[i]]
        prev = toks[sig[i - 1]].text if i else "{"
        if t.kind == Tok.IDENT and t.text in ("invariant", "decreases"):
            j = i + 1
            while j < len(sig):
                tj = toks[sig[j]]
                if tj.kind == Tok.IDENT and tj.text in _LOOP_SPEC:
                    break
                if tj.text == "{" and opens_block(j):
                    break
                if tj.text in ("(", "[", "{"):
                    j = close_of(j)
                elif tj.text in (")", "]", "}", ";"):
                    break
                j += 1
            kind = HintKind.LOOP_INVARIANT if t.text == "invariant" else HintKind.DECREASES
            record(kind, i, j - 1)
            i = j
            continue
        if t.kind == Tok.IDENT and t.text == "assert" and prev in (";", "{", "}"):
            j = i + 1
            while j < len(sig):
                tj = toks[sig[j]]
                if tj.text == ";":
                    break
                if tj.kind == Tok.IDENT and tj.text == "by" and j + 1 < len(sig) and toks[sig[j + 1]].text == "{":
                    j = close_of(j + 1)
                    break
                if tj.text in ("(", "[", "{"):
                    j = close_of(j)
                j += 1
            record(HintKind.ASSERT, i, min(j, len(sig) - 1))
            i = j + 1
            continue
        if (t.kind == Tok.IDENT and t.text in lemma_names and prev in (";", "{", "}")
                and i + 1 < len(sig) and toks[sig[i + 1]].text == "("):
            j = close_of(i + 1) + 1
            if j < len(sig) and toks[sig[j]].text == ";":
                record(HintKind.LEMMA_CALL, i, j)
                i = j + 1
                continue
        i += 1
    return hints


def find_proof_hints(program: Program) -> list[ProofHint]:
    text = program.text
    toks = tokenize(text)
    index = {t.start: k for k, t in enumerate(toks)}
    lemma_names = {d.name for d in program.declarations if d.kind == DeclKind.LEMMA}
    hints: list[ProofHint] = []
    for d in program.declarations:
        if d.kind == DeclKind.LEMMA:
            first = index[d.span[0]]
            last = _last_token(toks, d.span[1])
            s, e = _extend(text, toks, first, last)
            hints.append(ProofHint(HintKind.AUX_LEMMA, d.name, (s, e), text[s:e], d.source))
        elif d.kind == DeclKind.METHOD and d.body_span is not None:
            a = index[d.body_span[0]] + 1
            b = index[d.body_span[1] - 1]
            hints.extend(_body_hints(text, toks, a, b, d.name, lemma_names))
    hints.sort(key=lambda h: h.span)
    return hints


def _last_token(toks: list[Token], end: int) -> int:
    for k in range(len(toks) - 1, -1, -1):
        if toks[k].end <= end and not toks[k].trivia:
            return k
    raise ValueError("no token before offset")


def remove_hints(text: str, hints: Sequence[ProofHint]) -> str:
    out, pos = [], 0
    for h in sorted(hints, key=lambda h: h.span):
        if h.span[0] < pos:
            raise ValueError(f"overlapping hints at offset {h.span[0]}")
        out.append(text[pos : h.span[0]])
        pos = h.span[1]
    out.append(text[pos:])
    return "".join(out)


def strip_proof_hints(src: SourceText | str) -> tuple[SourceText, list[ProofHint]]:
    text = src.text if isinstance(src, SourceText) else src
    program = parse_program(text)
    hints = find_proof_hints(program)
    stripped = remove_hints(text, hints)
    if not stripped.strip():
        raise ValueError("program consists only of proof hints")
    return SourceText(stripped, Origin.STRIPPED), hints


def reinsert_hints(stripped: SourceText | str, hints: Sequence[ProofHint]) -> str:
    text = stripped.text if isinstance(stripped, SourceText) else stripped
    out, pos, removed = [], 0, 0
    for h in sorted(hints, key=lambda h: h.span):
        at = h.span[0] - removed
        out.append(text[pos:at])
        out.append(h.removed_text)
        pos = at
        removed += len(h.removed_text)
    out.append(text[pos:])
    return "".join(out)
