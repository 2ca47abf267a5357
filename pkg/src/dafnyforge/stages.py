"""The three synthesis stages and the loop that drives one problem through them.

signature -> contract (assessed by verification lemmas, then frozen) ->
implementation (checked for contract adherence, verified, then tested).
"""

from __future__ import annotations

import ast
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .lemmas import (
    ArityMismatch, Overall, Perturbation, PerturbationUnavailable, PerturbStrategy, SpecAssessment,
    UnsupportedLiteral, assess, deterministic_perturb, generate_lemmas, lemma_program, rule_perturber,
)
from .llm.gateway import Exchange, Gateway, HttpError, LLMTimeout, ReplayMiss
from .records import (
    AdherenceReport, DeclarationAdherence, HintCheck, PipelineTrace, ProblemRecord, Stage,
    StageAttempt, TraceStatus,
)
from .surface.contract import Contract, UnknownMethod, UnresolvedReference, extract_contract
from .surface.hints import HintKind, strip_proof_hints
from .surface.lexer import LexError
from .surface.program import Clause, DeclKind, ParseError, Program, Signature, parse_program
from .surface.testcases import MalformedTestBody, TestCase, TestOrigin, extract_test_cases
from .verifier import (
    Diagnostic, RunResult, RunStatus, Severity, ToolUnavailable, VerdictStatus, Verifier,
)

log = logging.getLogger(__name__)


class GateMode(str, Enum):
    STRICT = "strict"  # freeze only consistent contracts
    LENIENT = "lenient"  # also freeze inconclusive ones, with a warning
    ADVISORY = "advisory"  # freeze any contract that verifies


@dataclass
class StageConfig:
    signature_budget: int = 3
    contract_budget: int = 4
    implementation_budget: int = 4
    verify_timeout: float = 60.0
    run_timeout: float = 30.0
    gate: GateMode = GateMode.LENIENT
    llm_perturbations: bool = False
    lemma_workers: int = 1
    min_taco_tests: int = 1
    min_generated_tests: int = 1

    def __post_init__(self):
        self.gate = GateMode(self.gate)
        if min(self.signature_budget, self.contract_budget, self.implementation_budget) < 1:
            raise ValueError("attempt budgets must be at least 1")
        if self.verify_timeout <= 0 or self.run_timeout <= 0:
            raise ValueError("timeouts must be positive")


class ToolFailure(RuntimeError):
    pass


class _Exhausted(Exception):
    def __init__(self, status: TraceStatus):
        self.status = status


# --- helpers ---------------------------------------------------------------

_FENCE = re.compile(r"```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```", re.S)


def extract_code(reply: str) -> str:
    """The first fenced block of a reply, or the whole reply when unfenced."""
    m = _FENCE.search(reply)
    body = m.group(1) if m else reply
    body = body.strip("\n")
    return body.rstrip() + "\n"


def reference_arity(solution: str) -> Optional[int]:
    """Parameter count of the reference solution's entry point, if it has one.

    Looks at the first public method of ``class Solution``, then at the first
    top-level function. Scripts that read stdin have no entry point.
    """
    try:
        tree = ast.parse(solution)
    except (SyntaxError, ValueError):
        return None

    def count(fn: ast.FunctionDef | ast.AsyncFunctionDef, method: bool) -> int:
        args = fn.args.posonlyargs + fn.args.args + fn.args.kwonlyargs
        return len(args) - (1 if method and args and args[0].arg == "self" else 0)

    for node in tree.body:
        if isinstance(node, ast.ClassDef) and node.name == "Solution":
            for item in node.body:
                if isinstance(item, (ast.FunctionDef, ast.AsyncFunctionDef)) and not item.name.startswith("_"):
                    return count(item, True)
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name != "main":
            return count(node, False)
    return None


def parse_signature(text: str) -> Signature:
    """Read a method signature from a model reply."""
    code = extract_code(text)
    m = re.search(r"\bmethod\b", code)
    if not m:
        raise ParseError("reply contains no method signature")
    header = code[m.start():]
    cut = header.find("{")
    header = (header[:cut] if cut >= 0 else header).strip()
    if not header:
        raise ParseError("empty signature")
    program = parse_program(header + " {}\n")
    methods = [d for d in program.declarations if d.kind == DeclKind.METHOD]
    if not methods:
        raise ParseError("reply contains no method signature")
    decl = methods[0]
    if decl.requires or decl.ensures:
        raise ParseError("signature must not carry specification clauses")
    if not decl.signature.outputs:
        raise ParseError("signature must name at least one output")
    return decl.signature


def format_examples(io_tests: Sequence[tuple[str, str]], limit: int = 10) -> str:
    if not io_tests:
        return "(none)"
    lines = []
    for i, (inp, out) in enumerate(io_tests[:limit], 1):
        lines.append(f"{i}. input: {inp.strip()}\n   output: {out.strip()}")
    return "\n".join(lines)


def _error(message: str, line: Optional[int] = None, column: Optional[int] = None,
           decl: Optional[str] = None) -> Diagnostic:
    return Diagnostic(line or None, column or None, Severity.ERROR, message, decl)


def _errors(diags: Sequence[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == Severity.ERROR] or list(diags)


# --- adherence -------------------------------------------------------------


def _declaration_clauses(contract: Contract, name: str):
    if name == contract.main_signature.name:
        return contract.main_signature, contract.requires, contract.ensures
    for d in contract.auxiliaries:
        if d.name == name:
            return d.signature, d.requires, d.ensures
    raise KeyError(name)


def compare_clauses(frozen_req: Sequence[Clause], frozen_ens: Sequence[Clause],
                    cand_req: Sequence[Clause], cand_ens: Sequence[Clause]) -> tuple[bool, bool, tuple, tuple]:
    """Requires must match as a multiset; ensures must be a superset."""
    fr, cr = Counter(c.norm_text for c in frozen_req), Counter(c.norm_text for c in cand_req)
    requires_exact = fr == cr
    cand_ens_set = {c.norm_text for c in cand_ens}
    missing = tuple(c for c in frozen_ens if c.norm_text not in cand_ens_set)
    frozen_req_set = set(fr)
    extra = tuple(c for c in cand_req if c.norm_text not in frozen_req_set)
    return requires_exact, not missing, missing, extra


def check_adherence(frozen: Contract, candidate: Program | str,
                    tests: Optional[Sequence[TestCase]] = None) -> AdherenceReport:
    """Compare a candidate program with the frozen contract. Pure.

    Raises ``ParseError`` when the candidate does not parse.
    """
    program = candidate if isinstance(candidate, Program) else parse_program(candidate)
    per: dict[str, DeclarationAdherence] = {}
    for name in frozen.declaration_names:
        sig, req, ens = _declaration_clauses(frozen, name)
        decl = program.get(name)
        if decl is None:
            per[name] = DeclarationAdherence(False, False, tuple(ens), (), False, present=False)
            continue
        r_ok, e_ok, missing, extra = compare_clauses(req, ens, decl.requires, decl.ensures)
        per[name] = DeclarationAdherence(r_ok, e_ok, missing, extra,
                                         decl.signature.canonical() == sig.canonical())
    intact = True
    if tests is not None:
        try:
            intact = extract_test_cases(program) == list(tests)
        except (MalformedTestBody, ParseError):
            intact = False
    return AdherenceReport(per, intact)


def adherence_diagnostics(report: AdherenceReport) -> list[Diagnostic]:
    out = []
    for name, d in report.per_declaration.items():
        if not d.present:
            out.append(_error(f"declaration {name} from the frozen contract is missing", decl=name))
            continue
        if not d.signature_exact:
            out.append(_error(f"signature of {name} differs from the frozen contract", decl=name))
        if not d.requires_exact:
            extra = ", ".join(c.expr_text for c in d.extra_requires) or "clauses removed or duplicated"
            out.append(_error(f"preconditions of {name} differ from the frozen contract ({extra})", decl=name))
        for c in d.missing_ensures:
            out.append(_error(f"postcondition of {name} was dropped or altered: {c.expr_text}", decl=name))
    if not report.tests_intact:
        out.append(_error("the Test() method differs from the frozen test cases", decl="Test"))
    return out


def run_diagnostics(run: RunResult, tests: Sequence[TestCase]) -> list[Diagnostic]:
    if run.status == RunStatus.TIMEOUT:
        return [_error("test execution timed out")]
    if run.status == RunStatus.RUNTIME_ERROR:
        tail = run.raw_output.strip().splitlines()[-3:]
        return [_error("test execution failed: " + (" | ".join(tail) or "non-zero exit"))]
    by_ord = {t.ordinal: t for t in tests}
    out = []
    for n in run.failed_test_ordinals or ():
        t = by_ord.get(n)
        detail = f" (inputs {', '.join(t.inputs)}; expected {', '.join(t.expected)})" if t else ""
        out.append(_error(f"test case {n} failed{detail}", decl="Test"))
    return out or [_error("an expectation in Test() was violated")]


# --- perturbation via the model --------------------------------------------


class ModelPerturber:
    """Asks the model for a wrong-but-close output; falls back to the rule table.

    Exchanges are collected in ``exchanges`` so that the stage can attach them
    to its attempt record.
    """

    def __init__(self, gateway: Gateway):
        self.gateway = gateway
        self.exchanges: list[Exchange] = []

    def __call__(self, literal: str, type_text: str, contract: Contract) -> Optional[Perturbation]:
        ex = self.gateway.exchange("perturb", {
            "postconditions": "\n".join(f"ensures {c.expr_text}" for c in contract.ensures) or "(none)",
            "type": type_text,
            "output": literal,
        })
        self.exchanges.append(ex)
        proposed = extract_code(ex.response).strip()
        try:
            if proposed and "\n" not in proposed:
                return Perturbation(literal, proposed, PerturbStrategy.LLM)
        except ValueError:
            pass
        try:
            return deterministic_perturb(literal, type_text)
        except UnsupportedLiteral:
            return None


# --- the synthesizer -------------------------------------------------------


class Synthesizer:
    def __init__(self, gateway: Gateway, verifier: Verifier, config: Optional[StageConfig] = None):
        self.gateway = gateway
        self.verifier = verifier
        self.config = config or StageConfig()

    # verifier calls, with the tool failure surfaced as an exception
    def _verify(self, text: str):
        verdict = self.verifier.verify(text, self.config.verify_timeout)
        if verdict.status == VerdictStatus.TOOL_UNAVAILABLE:
            raise ToolFailure("; ".join(d.message for d in verdict.diagnostics) or "verifier unavailable")
        return verdict

    def _run(self, text: str) -> RunResult:
        try:
            return self.verifier.run_tests(text, self.config.run_timeout)
        except ToolUnavailable as e:
            raise ToolFailure(str(e)) from None

    # stage 1
    def generate_signature(self, problem: ProblemRecord, trace: PipelineTrace) -> Signature:
        previous, error = None, None
        expected_arity = reference_arity(problem.reference_solution)
        for k in range(1, self.config.signature_budget + 1):
            base = {"problem": problem.statement, "solution": problem.reference_solution,
                    "language": problem.language}
            if previous is None:
                ex = self.gateway.exchange("signature", base)
            else:
                ex = self.gateway.exchange("signature_retry", {**base, "previous": previous, "error": error})
            attempt = StageAttempt(Stage.SIGNATURE, k, ex.response.strip() + "\n", exchanges=[ex],
                                   checks=["parse"])
            trace.attempts.append(attempt)
            try:
                sig = parse_signature(ex.response)
            except (ParseError, LexError, ValueError) as e:
                previous, error = ex.response.strip(), str(e)
                attempt.diagnostics.append(_error(error))
                continue
            attempt.artifact = sig.render() + "\n"
            if expected_arity is not None and expected_arity != len(sig.inputs):
                msg = (f"signature takes {len(sig.inputs)} inputs but the reference solution "
                       f"takes {expected_arity}")
                attempt.warnings.append(msg)
                trace.warnings.append(msg)
            attempt.accepted = True
            return sig
        raise _Exhausted(TraceStatus.CONTRACT_BUDGET_EXHAUSTED)

    # stage 2
    def _assess(self, contract: Contract, tests: Sequence[TestCase], attempt: StageAttempt) -> SpecAssessment:
        perturber = ModelPerturber(self.gateway) if self.config.llm_perturbations else rule_perturber
        lemmas = generate_lemmas(contract, tests, perturber)
        if isinstance(perturber, ModelPerturber):
            attempt.exchanges.extend(perturber.exchanges)
        programs = [lemma_program(contract, lm) for lm in lemmas]
        if self.config.lemma_workers > 1:
            with ThreadPoolExecutor(self.config.lemma_workers) as pool:
                verdicts = list(pool.map(self._verify, programs))
        else:
            verdicts = [self._verify(p) for p in programs]
        attempt.lemma_verdicts = [(lm.name, v.status) for lm, v in zip(lemmas, verdicts)]
        attempt.checks.append("lemmas")
        return assess(lemmas, verdicts)

    def _gate(self, assessment: SpecAssessment, attempt: StageAttempt) -> bool:
        overall = assessment.overall
        if overall == Overall.CONSISTENT:
            return True
        if self.config.gate == GateMode.LENIENT and overall == Overall.INCONCLUSIVE:
            attempt.warnings.append("contract frozen with an inconclusive assessment")
            return True
        if self.config.gate == GateMode.ADVISORY:
            attempt.warnings.append(f"contract frozen despite a {overall.value} assessment")
            return True
        return False

    def _contract_issues(self, text: str, sig: Signature, attempt: StageAttempt):
        """Structural checks on a verified draft; returns (contract, tests) or records problems."""
        try:
            program = parse_program(text)
            contract = extract_contract(program, sig.name)
            tests = extract_test_cases(program)
        except (ParseError, LexError) as e:
            attempt.diagnostics.append(_error(f"cannot read the draft: {e}"))
            return None
        except UnknownMethod:
            attempt.diagnostics.append(_error(f"the draft does not declare method {sig.name}"))
            return None
        except UnresolvedReference as e:
            attempt.diagnostics.append(_error(str(e)))
            return None
        except MalformedTestBody as e:
            attempt.diagnostics.append(_error(f"Test() is not in the expected shape: {e}", decl="Test"))
            return None
        if contract.main_signature.canonical() != sig.canonical():
            attempt.diagnostics.append(_error(
                f"the draft changed the signature to {contract.main_signature.render()}", decl=sig.name))
            return None
        if not tests:
            attempt.diagnostics.append(_error("Test() contains no test cases", decl="Test"))
            return None
        taco = sum(t.origin == TestOrigin.TACO for t in tests)
        generated = len(tests) - taco
        if taco < self.config.min_taco_tests or generated < self.config.min_generated_tests:
            attempt.warnings.append(f"Test() has {taco} dataset and {generated} generated cases")
        return contract, tests

    def refine_contract(self, problem: ProblemRecord, sig: Signature,
                        trace: PipelineTrace) -> tuple[Contract, list[TestCase], str]:
        previous = feedback = None
        budget = self.config.contract_budget
        for k in range(1, budget + 1):
            base = {"problem": problem.statement, "signature": sig.render(),
                    "examples": format_examples(problem.io_tests)}
            if previous is None:
                ex = self.gateway.exchange("contract", {**base, "solution": problem.reference_solution,
                                                        "language": problem.language})
            else:
                ex = self.gateway.exchange("contract_repair", {**base, "previous": previous,
                                                               "feedback": feedback})
            text = extract_code(ex.response)
            attempt = StageAttempt(Stage.CONTRACT, k, text, exchanges=[ex])
            trace.attempts.append(attempt)

            attempt.verdict = self._verify(text)
            attempt.checks.append("verify")
            if not attempt.verdict.ok:
                attempt.diagnostics.extend(_errors(attempt.verdict.diagnostics)
                                           or [_error(f"verifier status {attempt.verdict.status.value}")])
            else:
                found = self._contract_issues(text, sig, attempt)
                if found is not None:
                    contract, tests = found
                    try:
                        attempt.assessment = self._assess(contract, tests, attempt)
                    except (ArityMismatch, PerturbationUnavailable) as e:
                        attempt.diagnostics.append(_error(str(e), decl="Test"))
                    else:
                        if self._gate(attempt.assessment, attempt):
                            attempt.accepted = True
                            trace.warnings.extend(attempt.warnings)
                            return contract, tests, text
                        attempt.diagnostics.extend(_assessment_diagnostics(attempt.assessment))
            if k == budget:
                break
            fb = self.gateway.judge_feedback("contract", text, attempt.diagnostics, attempt.assessment,
                                             problem.statement)
            attempt.exchanges.append(fb)
            attempt.judge_feedback = fb.response
            previous, feedback = text, fb.response
        raise _Exhausted(TraceStatus.CONTRACT_BUDGET_EXHAUSTED)

    # stage 3
    def synthesize_implementation(self, problem: ProblemRecord, contract: Contract,
                                  tests: Sequence[TestCase], contract_source: str,
                                  trace: PipelineTrace) -> str:
        previous = feedback = None
        budget = self.config.implementation_budget
        last_failed_adherence = False
        for k in range(1, budget + 1):
            if previous is None:
                ex = self.gateway.exchange("implementation", {"problem": problem.statement,
                                                              "contract": contract_source})
            else:
                ex = self.gateway.exchange("implementation_repair", {
                    "contract": contract_source, "previous": previous, "feedback": feedback})
            text = extract_code(ex.response)
            attempt = StageAttempt(Stage.IMPLEMENTATION, k, text, exchanges=[ex])
            trace.attempts.append(attempt)

            attempt.checks.append("adherence")
            last_failed_adherence = True
            try:
                attempt.adherence = check_adherence(contract, text, tests)
            except (ParseError, LexError) as e:
                line = getattr(e, "line", None)
                attempt.diagnostics.append(_error(f"cannot read the program: {e}", line,
                                                  getattr(e, "column", None)))
            else:
                if not attempt.adherence.overall:
                    attempt.diagnostics.extend(adherence_diagnostics(attempt.adherence))
                else:
                    last_failed_adherence = False
                    attempt.verdict = self._verify(text)
                    attempt.checks.append("verify")
                    if not attempt.verdict.ok:
                        attempt.diagnostics.extend(_errors(attempt.verdict.diagnostics)
                                                   or [_error(f"verifier status {attempt.verdict.status.value}")])
                    else:
                        attempt.run_result = self._run(text)
                        attempt.checks.append("run")
                        if attempt.run_result.ok:
                            attempt.accepted = True
                            return text
                        attempt.diagnostics.extend(run_diagnostics(attempt.run_result, tests))
            if k == budget:
                break
            fb = self.gateway.judge_feedback("implementation", text, attempt.diagnostics, None,
                                             problem.statement)
            attempt.exchanges.append(fb)
            attempt.judge_feedback = fb.response
            previous, feedback = text, fb.response
        raise _Exhausted(TraceStatus.ADHERENCE_VIOLATION if last_failed_adherence
                         else TraceStatus.IMPLEMENTATION_BUDGET_EXHAUSTED)

    def check_hints(self, program: str, trace: PipelineTrace) -> HintCheck:
        """Strip proof hints from the final program and see whether it still verifies."""
        try:
            stripped, hints = strip_proof_hints(program)
        except (ParseError, LexError, ValueError) as e:
            trace.warnings.append(f"hint stripping failed: {e}")
            return HintCheck(0, 0, None, False)
        decreases = sum(h.kind == HintKind.DECREASES for h in hints)
        if decreases:
            trace.warnings.append(f"{decreases} decreases clause(s) treated as proof hints")
        if not hints:
            return HintCheck(0, 0, None, False)
        verdict = self._verify(str(stripped))
        return HintCheck(len(hints), decreases, verdict.status, not verdict.ok)

    def run(self, problem: ProblemRecord) -> PipelineTrace:
        trace = PipelineTrace(problem)
        trace.prover_limits = {"verifyTimeout": self.config.verify_timeout, "runTimeout": self.config.run_timeout}
        try:
            sig = self.generate_signature(problem, trace)
            contract, tests, source = self.refine_contract(problem, sig, trace)
            trace.frozen_contract, trace.frozen_tests, trace.contract_source = contract, list(tests), source
            final = self.synthesize_implementation(problem, contract, tests, source, trace)
            trace.final_program = final
            trace.hint_check = self.check_hints(final, trace)
            trace.status = TraceStatus.SUCCESS
        except _Exhausted as e:
            trace.status = e.status
        except ToolFailure as e:
            trace.warnings.append(f"toolchain: {e}")
            trace.status = TraceStatus.TOOL_FAILURE
        except (ReplayMiss, HttpError, LLMTimeout) as e:
            trace.warnings.append(f"model backend: {type(e).__name__}: {e}")
            trace.status = TraceStatus.TOOL_FAILURE
        log.info("problem %s: %s after %d attempts", problem.id, trace.status.value, len(trace.attempts))
        return trace


def _assessment_diagnostics(a: SpecAssessment) -> list[Diagnostic]:
    out = []
    for n in a.failed_soundness():
        out.append(_error(f"the specification rejects the correct output of test {n} (too restrictive)"))
    for n in a.verified_perturbations():
        out.append(_error(f"the specification accepts a wrong output for test {n} (too weak)"))
    if not out:
        out.append(_error(f"specification assessment was {a.overall.value}"))
    return out
