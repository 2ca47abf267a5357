"""Clause-level view of Dafny programs: parsing, contracts, tests, hints."""

from .contract import Contract, UnknownMethod, UnresolvedReference, extract_contract, referenced_identifiers
from .hints import HintKind, ProofHint, find_proof_hints, reinsert_hints, strip_proof_hints
from .lexer import normalize
from .program import (
    Clause,
    ClauseKind,
    Declaration,
    DeclKind,
    Origin,
    ParseError,
    Program,
    Signature,
    SourceText,
    parse_program,
)
from .render import render_lemma
from .testcases import (
    MalformedTestBody,
    TestCase,
    TestOrigin,
    extract_test_cases,
    make_test_case,
    render_test_method,
)

__all__ = [
    "Clause", "ClauseKind", "Contract", "Declaration", "DeclKind", "HintKind",
    "MalformedTestBody", "Origin", "ParseError", "ProofHint", "Program",
    "Signature", "SourceText", "TestCase", "TestOrigin", "UnknownMethod",
    "UnresolvedReference", "extract_contract", "extract_test_cases",
    "find_proof_hints", "make_test_case", "normalize", "parse_program",
    "referenced_identifiers", "reinsert_hints", "render_lemma",
    "render_test_method", "strip_proof_hints",
]
