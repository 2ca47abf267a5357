"""Pipeline records and their JSON form.

Wall-clock fields (``latency``, ``wall_time``) are left out of the JSON form
unless asked for, so that replayed runs serialize byte-identically.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .lemmas import Overall, SpecAssessment, TestAssessment
from .llm.gateway import Exchange
from .surface.contract import Contract, extract_contract
from .surface.program import Clause, ClauseKind
from .surface.testcases import TestCase, TestOrigin
from .verifier import Diagnostic, RunResult, RunStatus, Severity, VerdictStatus, VerifierVerdict

TIMING_FIELDS = frozenset({"latency", "wall_time"})


class Difficulty(str, Enum):
    EASY = "EASY"
    MEDIUM = "MEDIUM"
    MEDIUM_HARD = "MEDIUM_HARD"
    HARD = "HARD"
    VERY_HARD = "VERY_HARD"
    UNKNOWN = "UNKNOWN"

    @classmethod
    def parse(cls, value: Optional[str]) -> "Difficulty":
        if not value:
            return cls.UNKNOWN
        key = str(value).strip().upper().replace(" ", "_").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            return cls.UNKNOWN

    @property
    def label(self) -> str:
        return self.value.replace("_", " ")


@dataclass(frozen=True)
class ProblemRecord:
    id: str
    statement: str
    reference_solution: str
    io_tests: tuple[tuple[str, str], ...] = ()
    difficulty: Difficulty = Difficulty.UNKNOWN
    skill_tags: tuple[str, ...] = ()
    language: str = "Python"

    def __post_init__(self):
        if not self.statement.strip() or not self.reference_solution.strip():
            raise ValueError(f"problem {self.id}: statement and reference solution are required")


class Stage(str, Enum):
    SIGNATURE = "signature"
    CONTRACT = "contract"
    IMPLEMENTATION = "implementation"


@dataclass(frozen=True)
class DeclarationAdherence:
    requires_exact: bool
    ensures_superset: bool
    missing_ensures: tuple[Clause, ...] = ()
    extra_requires: tuple[Clause, ...] = ()
    signature_exact: bool = True
    present: bool = True

    @property
    def ok(self) -> bool:
        return self.present and self.requires_exact and self.ensures_superset and self.signature_exact


@dataclass(frozen=True)
class AdherenceReport:
    per_declaration: dict[str, DeclarationAdherence]
    tests_intact: bool = True

    @property
    def overall(self) -> bool:
        return self.tests_intact and all(d.ok for d in self.per_declaration.values())


class TraceStatus(str, Enum):
    SUCCESS = "success"
    CONTRACT_BUDGET_EXHAUSTED = "contractBudgetExhausted"
    IMPLEMENTATION_BUDGET_EXHAUSTED = "implementationBudgetExhausted"
    ADHERENCE_VIOLATION = "adherenceViolation"
    TOOL_FAILURE = "toolFailure"


@dataclass
class StageAttempt:
    stage: Stage
    attempt_index: int
    artifact: str
    exchanges: list[Exchange] = field(default_factory=list)
    checks: list[str] = field(default_factory=list)
    verdict: Optional[VerifierVerdict] = None
    run_result: Optional[RunResult] = None
    assessment: Optional[SpecAssessment] = None
    lemma_verdicts: list[tuple[str, VerdictStatus]] = field(default_factory=list)
    adherence: Optional[AdherenceReport] = None
    # everything wrong with this attempt, as shown to the judge
    diagnostics: list[Diagnostic] = field(default_factory=list)
    judge_feedback: Optional[str] = None
    accepted: bool = False
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class HintCheck:
    hint_count: int
    decreases_hints: int
    stripped_status: Optional[VerdictStatus]
    hints_required: bool


@dataclass
class PipelineTrace:
    problem: ProblemRecord
    attempts: list[StageAttempt] = field(default_factory=list)
    frozen_contract: Optional[Contract] = None
    frozen_tests: list[TestCase] = field(default_factory=list)
    # the accepted contract program: auxiliaries, specification, Test()
    contract_source: Optional[str] = None
    final_program: Optional[str] = None
    status: Optional[TraceStatus] = None
    hint_check: Optional[HintCheck] = None
    warnings: list[str] = field(default_factory=list)
    # verifier limits in force for this run, e.g. {"verifyTimeout": 60.0}
    prover_limits: dict = field(default_factory=dict)

    @property
    def problem_id(self) -> str:
        return self.problem.id

    def stage_attempts(self, stage: Stage) -> list[StageAttempt]:
        return [a for a in self.attempts if a.stage == stage]

    def next_index(self, stage: Stage) -> int:
        return len(self.stage_attempts(stage)) + 1

    @property
    def char_length(self) -> int:
        """Characters of the final program, or of the last failed artifact."""
        if self.status == TraceStatus.SUCCESS and self.final_program is not None:
            return len(self.final_program)
        return len(self.attempts[-1].artifact) if self.attempts else 0


class TraceInconsistent(ValueError):
    pass


# --- JSON ------------------------------------------------------------------


def to_jsonable(obj: Any, timing: bool = False) -> Any:
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Clause):
        out = {"kind": obj.kind.value, "expr": obj.expr_text}
        if obj.note:
            out["note"] = obj.note
        return out
    if isinstance(obj, Contract):
        return {"main": obj.main_signature.name, "digest": obj.digest}
    if isinstance(obj, (SpecAssessment,)):
        return {"overall": obj.overall.value,
                "perTest": {str(k): to_jsonable(v, timing) for k, v in obj.per_test.items()}}
    if isinstance(obj, AdherenceReport):
        return {"overall": obj.overall, "testsIntact": obj.tests_intact,
                "perDeclaration": {k: to_jsonable(v, timing) for k, v in obj.per_declaration.items()}}
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            if not timing and f.name in TIMING_FIELDS:
                continue
            out[_camel(f.name)] = to_jsonable(getattr(obj, f.name), timing)
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, timing) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, timing) for v in obj]
    return obj


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(p.title() for p in rest)


def dumps(obj: Any, timing: bool = False) -> str:
    return json.dumps(to_jsonable(obj, timing), indent=2, ensure_ascii=False) + "\n"


def trace_to_dict(trace: PipelineTrace) -> dict:
    data = to_jsonable(trace)
    if trace.frozen_contract is not None:
        data["frozenContract"]["source"] = trace.contract_source
    data["charLength"] = trace.char_length
    return data


def timings_of(trace: PipelineTrace) -> dict:
    rows = []
    for a in trace.attempts:
        rows.append({
            "stage": a.stage.value,
            "attemptIndex": a.attempt_index,
            "verifierSeconds": a.verdict.wall_time if a.verdict else None,
            "runSeconds": a.run_result.wall_time if a.run_result else None,
            "llmSeconds": [e.latency for e in a.exchanges],
        })
    return {"problemId": trace.problem_id, "attempts": rows}


def _diag(d: dict) -> Diagnostic:
    return Diagnostic(d["line"], d["column"], Severity(d["severity"]), d["message"], d.get("relatedDeclaration"))


def _clause(d: dict) -> Clause:
    return Clause(ClauseKind(d["kind"]), d["expr"], d.get("note"))


def problem_from_dict(d: dict) -> ProblemRecord:
    return ProblemRecord(
        id=d["id"], statement=d["statement"], reference_solution=d["referenceSolution"],
        io_tests=tuple(tuple(p) for p in d.get("ioTests", ())),
        difficulty=Difficulty.parse(d.get("difficulty")),
        skill_tags=tuple(d.get("skillTags", ())), language=d.get("language", "Python"),
    )


def _attempt(d: dict) -> StageAttempt:
    verdict = run = assessment = adherence = None
    if d.get("verdict"):
        v = d["verdict"]
        verdict = VerifierVerdict(VerdictStatus(v["status"]), tuple(_diag(x) for x in v["diagnostics"]))
    if d.get("runResult"):
        r = d["runResult"]
        run = RunResult(RunStatus(r["status"]), tuple(r["failedTestOrdinals"]), r["rawOutput"])
    if d.get("assessment"):
        a = d["assessment"]
        assessment = SpecAssessment(
            {int(k): TestAssessment(v["soundnessVerified"], v["contradictionVerified"],
                                    v["perturbationVerified"], v["soundnessTimedOut"])
             for k, v in a["perTest"].items()},
            Overall(a["overall"]))
    if d.get("adherence"):
        a = d["adherence"]
        adherence = AdherenceReport(
            {k: DeclarationAdherence(v["requiresExact"], v["ensuresSuperset"],
                                     tuple(_clause(c) for c in v["missingEnsures"]),
                                     tuple(_clause(c) for c in v["extraRequires"]),
                                     v["signatureExact"], v["present"])
             for k, v in a["perDeclaration"].items()},
            a["testsIntact"])
    return StageAttempt(
        stage=Stage(d["stage"]), attempt_index=d["attemptIndex"], artifact=d["artifact"],
        exchanges=[Exchange(e["templateId"], e["renderedPrompt"], e["response"],
                            tuple(e["tokenCounts"]), 0.0, e["requestDigest"]) for e in d["exchanges"]],
        checks=list(d["checks"]), verdict=verdict, run_result=run, assessment=assessment,
        lemma_verdicts=[(n, VerdictStatus(s)) for n, s in d["lemmaVerdicts"]],
        adherence=adherence, diagnostics=[_diag(x) for x in d["diagnostics"]],
        judge_feedback=d.get("judgeFeedback"), accepted=d["accepted"], warnings=list(d["warnings"]),
    )


def trace_from_dict(d: dict) -> PipelineTrace:
    contract = None
    source = None
    if d.get("frozenContract"):
        fc = d["frozenContract"]
        source = fc["source"]
        contract = extract_contract(source, fc["main"])
        if contract.digest != fc["digest"]:
            raise TraceInconsistent(f"frozen contract digest mismatch for {d['problem']['id']}")
    hint = None
    if d.get("hintCheck"):
        h = d["hintCheck"]
        hint = HintCheck(h["hintCount"], h["decreasesHints"],
                         VerdictStatus(h["strippedStatus"]) if h["strippedStatus"] else None,
                         h["hintsRequired"])
    return PipelineTrace(
        problem=problem_from_dict(d["problem"]),
        attempts=[_attempt(a) for a in d["attempts"]],
        frozen_contract=contract,
        frozen_tests=[TestCase(t["ordinal"], tuple(t["inputs"]), tuple(t["expected"]),
                               tuple(tuple(b) for b in t["bindings"]), TestOrigin(t["origin"]),
                               tuple(t.get("expectLines", ())))
                      for t in d["frozenTests"]],
        contract_source=source,
        final_program=d.get("finalProgram"),
        status=TraceStatus(d["status"]) if d.get("status") else None,
        hint_check=hint,
        warnings=list(d.get("warnings", ())),
        prover_limits=dict(d.get("proverLimits", {})),
    )
