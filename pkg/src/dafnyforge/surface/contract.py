from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .lexer import Tok, normalize, tokenize
from .program import Clause, DeclKind, Declaration, Program, Signature, parse_program


class UnknownMethod(LookupError):
    pass


class UnresolvedReference(LookupError):
    def __init__(self, name: str, clause: Clause):
        super().__init__(f"'{name}' in {clause.kind.value} {clause.norm_text!r} does not resolve")
        self.name = name
        self.clause = clause


@dataclass(frozen=True)
class Contract:
    main_signature: Signature
    requires: tuple[Clause, ...]
    ensures: tuple[Clause, ...]
    auxiliaries: tuple[Declaration, ...]
    digest: str

    @property
    def declaration_names(self) -> list[str]:
        return [self.main_signature.name] + [a.name for a in self.auxiliaries]

    def auxiliary_text(self) -> str:
        return "\n\n".join(a.source for a in self.auxiliaries)


def contract_digest(sig: Signature, requires, ensures, auxiliaries) -> str:
    h = hashlib.sha256()
    h.update(sig.canonical().encode())
    for tag, clauses in (("R", requires), ("E", ensures)):
        for c in clauses:
            h.update(f"\x00{tag}\x00{c.norm_text}".encode())
    for a in auxiliaries:
        h.update(f"\x00A\x00{a.kind.value}\x00{normalize(a.source)}".encode())
    return h.hexdigest()


# words that never name a program entity
_BUILTINS = {
    "forall", "exists", "true", "false", "null", "old", "fresh", "unchanged",
    "allocated", "in", "if", "then", "else", "var", "match", "case", "this",
    "int", "nat", "bool", "string", "char", "real", "seq", "set", "iset",
    "map", "imap", "multiset", "array", "object", "ORDINAL", "bv8", "bv16",
    "bv32", "bv64", "new", "as", "is", "calc", "assert", "assume", "reveal",
    "by", "decreases", "requires", "ensures", "reads", "modifies", "function",
    "predicate", "return", "returns", "ghost", "label", "print", "expect",
}
_BINDERS = {"forall", "exists", "set", "iset", "map", "imap"}


def referenced_identifiers(expr: str) -> list[str]:
    """Free identifiers of an expression, in first-occurrence order.

    Approximate: quantifier/comprehension binders and ``var x :=`` lets are
    treated as bound for the rest of the expression, member names after ``.``
    are ignored, and ``name: Type`` annotations inside binders are skipped.
    """
    toks = [t for t in tokenize(expr) if not t.trivia]
    bound: set[str] = set()
    seen: list[str] = []
    k = 0
    while k < len(toks):
        t = toks[k]
        if t.kind == Tok.IDENT and t.text in _BINDERS and k + 1 < len(toks) and toks[k + 1].kind == Tok.IDENT:
            # binder list runs to '::' or '|'
            k += 1
            in_type = False
            while k < len(toks) and toks[k].text not in ("::", "|", "•"):
                tt = toks[k]
                if tt.text == ":":
                    in_type = True
                elif tt.text == ",":
                    in_type = False
                elif tt.kind == Tok.IDENT and not in_type:
                    bound.add(tt.text)
                k += 1
            continue
        if t.kind == Tok.IDENT and t.text == "var":
            k += 1
            while k < len(toks) and toks[k].text not in (":=", ":|"):
                if toks[k].kind == Tok.IDENT:
                    bound.add(toks[k].text)
                k += 1
            continue
        if t.kind == Tok.IDENT and k + 1 < len(toks) and toks[k + 1].text == "=>":
            bound.add(t.text)
        elif t.kind == Tok.IDENT and t.text not in _BUILTINS and t.text not in bound:
            prev = toks[k - 1].text if k else ""
            if prev != "." and t.text not in seen:
                seen.append(t.text)
        k += 1
    return seen


def extract_contract(decls: Program | list[Declaration] | str, main_name: str) -> Contract:
    if isinstance(decls, str):
        decls = parse_program(decls)
    other_names: frozenset[str] = frozenset()
    if isinstance(decls, Program):
        other_names = decls.other_names
        decls = list(decls.declarations)
    by_name = {d.name: d for d in decls}
    main = by_name.get(main_name)
    if main is None or main.kind != DeclKind.METHOD:
        raise UnknownMethod(main_name)
    helpers = {d.name: d for d in decls if d.kind in (DeclKind.FUNCTION, DeclKind.PREDICATE)}

    params = set(main.signature.input_names) | set(main.signature.output_names)
    needed: list[str] = []
    for clause in main.requires + main.ensures:
        for ident in referenced_identifiers(clause.expr_text):
            if ident in params or ident in other_names:
                continue
            if ident in helpers:
                if ident not in needed:
                    needed.append(ident)
            elif ident not in by_name:
                raise UnresolvedReference(ident, clause)
    # transitive closure through helper clauses and bodies
    frontier = list(needed)
    while frontier:
        d = helpers[frontier.pop()]
        texts = [c.expr_text for c in d.requires + d.ensures + d.other_clauses]
        if d.body_text:
            texts.append(d.body_text)
        for text in texts:
            for ident in referenced_identifiers(text):
                if ident in helpers and ident not in needed:
                    needed.append(ident)
                    frontier.append(ident)
    auxiliaries = tuple(d for d in decls if d.name in needed)
    return Contract(
        main_signature=main.signature,
        requires=main.requires,
        ensures=main.ensures,
        auxiliaries=auxiliaries,
        digest=contract_digest(main.signature, main.requires, main.ensures, auxiliaries),
    )
