"""Soundness and completeness lemmas built from a contract and its tests.

For test i with inputs a_i, expected outputs o_i and input bindings G_i, and
contract preconditions R / postconditions E, three body-less lemmas are made:

* ``Soundness<i>``:           R, G_i, in == a_i, out == o_i  |-  E
* ``CompletenessContr<i>``:   R, G_i, in == a_i, out != o_i, E  |-  false
* ``CompletenessPerturb<i>``: R, G_i, in == a_i, out == p_i  |-  E

where p_i is a deliberately wrong output. A failing soundness lemma means the
contract rejects a known-good example; a verifying perturbation lemma means
it accepts a known-bad one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

from .surface.contract import Contract
from .surface.lexer import Tok, normalize, tokenize
from .surface.program import Clause, ClauseKind, Signature
from .surface.render import render_lemma
from .surface.testcases import TestCase
from .verifier import VerdictStatus, VerifierVerdict


class LemmaKind(str, Enum):
    SOUNDNESS = "soundness"
    CONTRADICTION = "completenessContradiction"
    PERTURBATION = "completenessPerturbation"


class PerturbStrategy(str, Enum):
    BOOLEAN_FLIP = "booleanFlip"
    INTEGER_OFFSET = "integerOffset"
    STRING_MUTATION = "stringMutation"
    SEQUENCE_MUTATION = "sequenceMutation"
    LLM = "llmProposed"


class ArityMismatch(ValueError):
    pass


class PerturbationUnavailable(ValueError):
    pass


class UnsupportedLiteral(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class Perturbation:
    original: str
    perturbed: str
    strategy: PerturbStrategy

    def __post_init__(self):
        if normalize(self.original) == normalize(self.perturbed):
            raise ValueError(f"perturbation of {self.original} is not a change")


# where each lemma precondition came from
SOURCES = ("precondition", "binding", "input", "output", "postcondition")


@dataclass(frozen=True)
class VerificationLemma:
    kind: LemmaKind
    test_ordinal: int
    name: str
    signature: Signature
    requires: tuple[Clause, ...]
    ensures: tuple[Clause, ...]
    requires_sources: tuple[str, ...] = ()
    perturbation: Optional[Perturbation] = None

    def render(self) -> str:
        return render_lemma(self).text


FALSE = Clause(ClauseKind.ENSURES, "false")

# --- literals --------------------------------------------------------------

_STRING_TYPES = {"string", "seq<char>"}
_INT_TYPES = {"int", "nat", "int8", "int16", "int32", "int64", "uint8", "uint16", "uint32", "uint64"}


def _elem_type(type_text: str) -> Optional[str]:
    t = normalize(type_text)
    if t.startswith("seq<") and t.endswith(">"):
        return t[4:-1]
    return None


def _split_elements(lit: str) -> list[str]:
    toks = [t for t in tokenize(lit) if not t.trivia]
    if not toks or toks[0].text != "[" or toks[-1].text != "]":
        raise UnsupportedLiteral(f"not a sequence display: {lit}")
    parts, depth, first, last_end = [], 0, None, 0
    for t in toks[1:-1]:
        if t.text in "([{":
            depth += 1
        elif t.text in ")]}":
            depth -= 1
        if t.text == "," and depth == 0:
            parts.append(lit[first:last_end])
            first = None
            continue
        if first is None:
            first = t.start
        last_end = t.end
    if first is not None:
        parts.append(lit[first:last_end])
    return parts


def decode_string(lit: str) -> str:
    toks = tokenize(lit.strip())
    if len(toks) != 1 or toks[0].kind != Tok.STRING or toks[0].text.startswith("@"):
        raise UnsupportedLiteral(f"not a string literal: {lit}")
    body = toks[0].text[1:-1]
    out, i = [], 0
    simple = {"n": "\n", "r": "\r", "t": "\t", "0": "\0", "\\": "\\", '"': '"', "'": "'"}
    while i < len(body):
        c = body[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in simple:
            out.append(simple[nxt])
            i += 2
        elif nxt in "uU" and i + 2 < len(body) and body[i + 2] == "{":
            j = body.index("}", i)
            out.append(chr(int(body[i + 3 : j], 16)))
            i = j + 1
        elif nxt == "u":
            out.append(chr(int(body[i + 2 : i + 6], 16)))
            i += 6
        else:
            raise UnsupportedLiteral(f"unknown escape in {lit}")
    return "".join(out)


def encode_string(value: str) -> str:
    out = []
    for c in value:
        if c in '"\\':
            out.append("\\" + c)
        elif c == "\n":
            out.append("\\n")
        elif c == "\r":
            out.append("\\r")
        elif c == "\t":
            out.append("\\t")
        elif c == "\0":
            out.append("\\0")
        elif ord(c) < 32 or ord(c) > 126:
            out.append(f"\\U{{{ord(c):x}}}" if ord(c) > 0xFFFF else f"\\u{ord(c):04x}")
        else:
            out.append(c)
    return '"' + "".join(out) + '"'


def default_literal(type_text: str) -> str:
    t = normalize(type_text)
    if t in _INT_TYPES:
        return "0"
    if t == "bool":
        return "false"
    if t in _STRING_TYPES:
        return '""'
    if _elem_type(t) is not None:
        return "[]"
    raise UnsupportedLiteral(f"no default literal for type {type_text}")


def perturbation_candidates(literal: str, type_text: str) -> list[Perturbation]:
    """All rule-table perturbations of a literal, preferred first."""
    lit = literal.strip()
    t = normalize(type_text)
    if t == "bool":
        if lit not in ("true", "false"):
            raise UnsupportedLiteral(f"not a bool literal: {literal}")
        return [Perturbation(lit, "false" if lit == "true" else "true", PerturbStrategy.BOOLEAN_FLIP)]
    if t in _INT_TYPES:
        try:
            value = int(lit.replace("_", "").strip("()"))
        except ValueError:
            raise UnsupportedLiteral(f"not an integer literal: {literal}") from None
        out = [Perturbation(lit, str(value + 1), PerturbStrategy.INTEGER_OFFSET)]
        if not (t == "nat" and value == 0):
            out.append(Perturbation(lit, str(value - 1), PerturbStrategy.INTEGER_OFFSET))
        return out
    if t in _STRING_TYPES and lit.startswith('"'):
        s = decode_string(lit)
        swapped = s[1] + s[0] + s[2:] if len(s) >= 2 else s
        if swapped == s:
            swapped = s + "x"
        return [Perturbation(lit, encode_string(swapped), PerturbStrategy.STRING_MUTATION)]
    elem = _elem_type(t)
    if elem is not None or t in _STRING_TYPES:
        elem = elem or "char"
        items = _split_elements(lit)
        if not items:
            return [Perturbation(lit, f"[{default_literal(elem)}]", PerturbStrategy.SEQUENCE_MUTATION)]
        out = []
        for inner in perturbation_candidates(items[0], elem):
            out.append(Perturbation(lit, "[" + ", ".join([inner.perturbed] + items[1:]) + "]",
                                    PerturbStrategy.SEQUENCE_MUTATION))
        return out
    raise UnsupportedLiteral(f"no perturbation rule for {type_text} literal {literal}")


def deterministic_perturb(literal: str, type_text: str) -> Perturbation:
    return perturbation_candidates(literal, type_text)[0]


# (literal, type text, contract) -> perturbation, or None when it has nothing
Perturber = Callable[[str, str, Contract], Optional[Perturbation]]


def rule_perturber(literal: str, type_text: str, contract: Contract) -> Optional[Perturbation]:
    try:
        return deterministic_perturb(literal, type_text)
    except UnsupportedLiteral:
        return None


# --- lemma construction ----------------------------------------------------


def _dedupe(clauses: Sequence[Clause], sources: Sequence[str]) -> tuple[tuple[Clause, ...], tuple[str, ...]]:
    seen, out_c, out_s = set(), [], []
    for c, s in zip(clauses, sources):
        if c.norm_text in seen:
            continue
        seen.add(c.norm_text)
        out_c.append(c)
        out_s.append(s)
    return tuple(out_c), tuple(out_s)


def _req(expr: str, note: Optional[str] = None) -> Clause:
    return Clause(ClauseKind.REQUIRES, expr, note)


def generate_lemmas(contract: Contract, tests: Sequence[TestCase],
                    perturber: Perturber = rule_perturber) -> list[VerificationLemma]:
    sig = contract.main_signature
    lemmas: list[VerificationLemma] = []
    pre = [replace(c, kind=ClauseKind.REQUIRES, note=None) for c in contract.requires]
    post = [replace(c, kind=ClauseKind.ENSURES, note=None) for c in contract.ensures]
    post_as_req = [replace(c, kind=ClauseKind.REQUIRES) for c in post]
    out_names = sig.output_names
    for t in tests:
        if len(t.inputs) != len(sig.inputs) or len(t.expected) != len(sig.outputs):
            raise ArityMismatch(
                f"test {t.ordinal} has {len(t.inputs)}->{len(t.expected)} values, "
                f"{sig.name} takes {len(sig.inputs)}->{len(sig.outputs)}")
        bindings = [_req(f"{n} == {v}", "Test binding") for n, v in t.bindings]
        inputs = [_req(f"{n} == {v}", "Test input") for n, v in zip(sig.input_names, t.inputs)]
        head = pre + bindings + inputs
        head_src = ["precondition"] * len(pre) + ["binding"] * len(bindings) + ["input"] * len(inputs)

        outputs = [_req(f"{n} == {v}", "Test output") for n, v in zip(out_names, t.expected)]
        req, src = _dedupe(head + outputs, head_src + ["output"] * len(outputs))
        lemmas.append(VerificationLemma(LemmaKind.SOUNDNESS, t.ordinal, f"Soundness{t.ordinal}",
                                        sig, req, tuple(post), src))

        negated = " || ".join(f"{n} != {v}" for n, v in zip(out_names, t.expected))
        contra = [_req(negated, "Test output negated")] if out_names else []
        req, src = _dedupe(head + contra + post_as_req,
                           head_src + ["output"] * len(contra) + ["postcondition"] * len(post_as_req))
        lemmas.append(VerificationLemma(LemmaKind.CONTRADICTION, t.ordinal, f"CompletenessContr{t.ordinal}",
                                        sig, req, (FALSE,), src))

        perturbation = None
        perturbed_outputs = list(outputs)
        if out_names:
            perturbation = perturber(t.expected[0], sig.outputs[0][1], contract)
            if perturbation is None:
                raise PerturbationUnavailable(
                    f"no perturbation for output {t.expected[0]} of test {t.ordinal}")
            perturbed_outputs[0] = _req(f"{out_names[0]} == {perturbation.perturbed}", "Test output perturbed")
        req, src = _dedupe(head + perturbed_outputs, head_src + ["output"] * len(perturbed_outputs))
        lemmas.append(VerificationLemma(LemmaKind.PERTURBATION, t.ordinal, f"CompletenessPerturb{t.ordinal}",
                                        sig, req, tuple(post), src, perturbation))
    return lemmas


def lemma_program(contract: Contract, lemma: VerificationLemma) -> str:
    """Standalone program: the contract's auxiliaries followed by one lemma."""
    aux = contract.auxiliary_text()
    return (aux + "\n\n" if aux else "") + lemma.render()


# --- assessment ------------------------------------------------------------


class Overall(str, Enum):
    CONSISTENT = "consistent"
    OVER_RESTRICTIVE = "overRestrictive"
    INCOMPLETE = "incomplete"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class TestAssessment:
    __test__ = False

    soundness_verified: bool
    contradiction_verified: Optional[bool] = None
    perturbation_verified: Optional[bool] = None
    soundness_timed_out: bool = False


@dataclass(frozen=True)
class SpecAssessment:
    per_test: dict[int, TestAssessment] = field(default_factory=dict)
    overall: Overall = Overall.INCONCLUSIVE

    def failed_soundness(self) -> list[int]:
        return [k for k, v in self.per_test.items() if not v.soundness_verified and not v.soundness_timed_out]

    def verified_perturbations(self) -> list[int]:
        return [k for k, v in self.per_test.items() if v.perturbation_verified]

    def summary(self) -> str:
        lines = [f"overall: {self.overall.value}"]
        for k, v in self.per_test.items():
            lines.append(
                f"test {k}: soundness={_tri(v.soundness_verified, v.soundness_timed_out)} "
                f"contradiction={_tri(v.contradiction_verified)} "
                f"perturbation={_tri(v.perturbation_verified)}")
        return "\n".join(lines)


def _tri(value: Optional[bool], timed_out: bool = False) -> str:
    if timed_out or value is None:
        return "inconclusive"
    return "verified" if value else "failed"


def _outcome(v: VerifierVerdict) -> Optional[bool]:
    if v.status == VerdictStatus.VERIFIED:
        return True
    if v.status == VerdictStatus.TIMEOUT:
        return None
    return False


def assess(lemmas: Sequence[VerificationLemma], verdicts: Sequence[VerifierVerdict]) -> SpecAssessment:
    if len(lemmas) != len(verdicts):
        raise AlignmentError(f"{len(lemmas)} lemmas but {len(verdicts)} verdicts")
    rows: dict[int, dict] = {}
    for lemma, verdict in zip(lemmas, verdicts):
        row = rows.setdefault(lemma.test_ordinal, {})
        key = lemma.kind
        if key in row:
            raise AlignmentError(f"two {key.value} lemmas for test {lemma.test_ordinal}")
        row[key] = _outcome(verdict)
    per_test: dict[int, TestAssessment] = {}
    for ordinal, row in rows.items():
        if LemmaKind.SOUNDNESS not in row:
            raise AlignmentError(f"test {ordinal} has no soundness lemma")
        s = row[LemmaKind.SOUNDNESS]
        per_test[ordinal] = TestAssessment(
            soundness_verified=bool(s),
            contradiction_verified=row.get(LemmaKind.CONTRADICTION),
            perturbation_verified=row.get(LemmaKind.PERTURBATION),
            soundness_timed_out=s is None,
        )
    tests = per_test.values()
    if not per_test:
        overall = Overall.INCONCLUSIVE
    elif any(not t.soundness_verified and not t.soundness_timed_out for t in tests):
        overall = Overall.OVER_RESTRICTIVE
    elif any(t.soundness_timed_out for t in tests):
        overall = Overall.INCONCLUSIVE
    elif any(t.perturbation_verified for t in tests):
        overall = Overall.INCOMPLETE
    elif any(t.perturbation_verified is None for t in tests):
        overall = Overall.INCONCLUSIVE
    else:
        overall = Overall.CONSISTENT
    return SpecAssessment(per_test, overall)
