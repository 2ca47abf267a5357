"""Token-level scanning of Dafny text.

The scanner is lossless: concatenating the text of every token reproduces the
input exactly. Everything above it (declarations, clauses, hints) works on
token indices and character offsets into the original text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache


class Tok(str, Enum):
    WS = "ws"
    COMMENT = "comment"
    IDENT = "ident"
    NUMBER = "number"
    STRING = "string"
    CHAR = "char"
    PUNCT = "punct"


@dataclass(frozen=True)
class Token:
    kind: Tok
    text: str
    start: int

    @property
    def end(self) -> int:
        return self.start + len(self.text)

    @property
    def trivia(self) -> bool:
        return self.kind in (Tok.WS, Tok.COMMENT)


class LexError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


_WS = re.compile(r"\s+")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_'?]*")
_NUMBER = re.compile(r"0x[0-9A-Fa-f_]+|\d[\d_]*(?:\.\d[\d_]*)?")
_CHAR = re.compile(r"'(?:\\u\{?[0-9A-Fa-f]+\}?|\\.|[^'\\\n])'")
_PUNCTS = (
    "<==>", "==>", "<==", "!in", "::", ":=", ":|", "==", "!=", "<=", ">=",
    "&&", "||", "..", "=>", "!!", "<<", ">>",
)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            m = _WS.match(text, i)
            tokens.append(Token(Tok.WS, m.group(), i))
            i = m.end()
        elif text.startswith("//", i):
            j = text.find("\n", i)
            j = n if j < 0 else j
            tokens.append(Token(Tok.COMMENT, text[i:j], i))
            i = j
        elif text.startswith("/*", i):
            j = _block_comment_end(text, i)
            tokens.append(Token(Tok.COMMENT, text[i:j], i))
            i = j
        elif c == '"' or text.startswith('@"', i):
            j = _string_end(text, i)
            tokens.append(Token(Tok.STRING, text[i:j], i))
            i = j
        elif c == "'" and (m := _CHAR.match(text, i)):
            tokens.append(Token(Tok.CHAR, m.group(), i))
            i = m.end()
        elif m := _IDENT.match(text, i):
            tokens.append(Token(Tok.IDENT, m.group(), i))
            i = m.end()
        elif m := _NUMBER.match(text, i):
            tokens.append(Token(Tok.NUMBER, m.group(), i))
            i = m.end()
        else:
            # "!in" only when "in" is a whole word
            for p in _PUNCTS:
                if text.startswith(p, i):
                    if p == "!in" and _IDENT.match(text, i + 1).group() != "in":
                        continue
                    break
            else:
                p = c
            tokens.append(Token(Tok.PUNCT, p, i))
            i += len(p)
    return tokens


def _block_comment_end(text: str, i: int) -> int:
    depth, j = 0, i
    while j < len(text):
        if text.startswith("/*", j):
            depth += 1
            j += 2
        elif text.startswith("*/", j):
            depth -= 1
            j += 2
            if depth == 0:
                return j
        else:
            j += 1
    raise LexError("unterminated block comment", i)


def _string_end(text: str, i: int) -> int:
    if text[i] == "@":
        j = i + 2
        while j < len(text):
            if text[j] == '"':
                if text.startswith('""', j):
                    j += 2
                    continue
                return j + 1
            j += 1
        raise LexError("unterminated verbatim string", i)
    j = i + 1
    while j < len(text):
        if text[j] == "\\":
            j += 2
            continue
        if text[j] == '"':
            return j + 1
        if text[j] == "\n":
            break
        j += 1
    raise LexError("unterminated string literal", i)


def line_col(text: str, offset: int) -> tuple[int, int]:
    """1-based line and column of a character offset."""
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def normalize(text: str) -> str:
    """Drop comments and collapse whitespace outside literals.

    Whitespace between two tokens survives as a single space only where
    dropping it would change how they lex, so ``a+b`` and ``a + b`` normalize
    alike while ``x / /`` does not turn into a comment.
    """
    out: list[str] = []
    prev = ""
    pending_space = False
    for tok in tokenize(text):
        if tok.trivia:
            pending_space = True
            continue
        if out and pending_space and _fuses(prev, tok.text):
            out.append(" ")
        out.append(tok.text)
        prev = tok.text
        pending_space = False
    return "".join(out)


@lru_cache(maxsize=4096)
def _fuses(left: str, right: str) -> bool:
    try:
        toks = tokenize(left + right)
    except LexError:
        return True
    return [t.text for t in toks] != [left, right]


def significant(tokens: list[Token]) -> list[int]:
    """Indices of non-trivia tokens."""
    return [k for k, t in enumerate(tokens) if not t.trivia]
