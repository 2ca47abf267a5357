"""Turning pipeline traces into supervised fine-tuning examples."""

from __future__ import annotations

import json
from collections import Counter
import logging
from fractions import Fraction
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .llm.gateway import format_diagnostics
from .llm.templates import render_template
from .records import PipelineTrace, Stage, StageAttempt, TraceInconsistent, TraceStatus
from .surface.hints import strip_proof_hints

log = logging.getLogger(__name__)

RATIO_TARGET = 7.0


class TaskKind(str, Enum):
    NL_TO_CODE = "nlToCode"
    NL_TO_SPEC = "nlToSpec"
    SPEC_TO_CODE = "specToCode"
    SPEC_REPAIR = "specRepair"
    IMPL_REPAIR = "implRepair"
    PROOF_INFILL = "proofInfill"


_TEMPLATES = {
    TaskKind.NL_TO_CODE: "sft_nl_to_code",
    TaskKind.NL_TO_SPEC: "sft_nl_to_spec",
    TaskKind.SPEC_TO_CODE: "sft_spec_to_code",
    TaskKind.SPEC_REPAIR: "sft_spec_repair",
    TaskKind.IMPL_REPAIR: "sft_impl_repair",
    TaskKind.PROOF_INFILL: "sft_proof_infill",
}
_ORDER = {k: i for i, k in enumerate(TaskKind)}


@dataclass(frozen=True)
class Provenance:
    problem_id: str
    stage: str
    attempts: tuple[int, ...] = ()
    contract_digest: Optional[str] = None
    difficulty: str = "UNKNOWN"


@dataclass(frozen=True)
class SftExample:
    task: TaskKind
    prompt: str
    completion: str
    provenance: Provenance

    def __post_init__(self):
        if not self.prompt.strip() or not self.completion.strip():
            raise ValueError(f"{self.task.value} example for {self.provenance.problem_id} is empty")

    @property
    def tokens_estimate(self) -> int:
        # four characters per token is the usual rough figure
        return (len(self.prompt) + len(self.completion)) // 4

    def sort_key(self):
        return (self.provenance.problem_id, _ORDER[self.task], self.provenance.attempts)


@dataclass
class ExtractionConfig:
    # when set, traces that did not end in success yield no repair pairs
    repairs_from_successful_only: bool = False


def _repair_pairs(attempts: Sequence[StageAttempt]):
    """Attempt k paired with attempt k+1 of the same stage, for every failed k."""
    for before, after in zip(attempts, attempts[1:]):
        if before.accepted:
            raise TraceInconsistent(f"{before.stage.value} attempt {before.attempt_index} "
                                    "was accepted but has a successor")
        yield before, after


def _check(trace: PipelineTrace) -> None:
    for stage in Stage:
        idx = [a.attempt_index for a in trace.stage_attempts(stage)]
        if idx != list(range(1, len(idx) + 1)):
            raise TraceInconsistent(f"{trace.problem_id}: {stage.value} attempts are numbered {idx}")
    if trace.status == TraceStatus.SUCCESS:
        if trace.final_program is None or not trace.contract_source:
            raise TraceInconsistent(f"{trace.problem_id}: success without a final program and contract")
        impls = trace.stage_attempts(Stage.IMPLEMENTATION)
        if not impls or not impls[-1].accepted or impls[-1].artifact != trace.final_program:
            raise TraceInconsistent(f"{trace.problem_id}: final program is not the accepted attempt")


def extract_examples(trace: PipelineTrace, config: Optional[ExtractionConfig] = None) -> list[SftExample]:
    """All training examples one trace supports. Pure."""
    cfg = config or ExtractionConfig()
    _check(trace)
    p = trace.problem
    digest = trace.frozen_contract.digest if trace.frozen_contract else None
    diff = p.difficulty.value

    def prov(stage: Stage, *attempts: int) -> Provenance:
        return Provenance(p.id, stage.value, tuple(attempts), digest, diff)

    def make(task: TaskKind, variables: dict, completion: str, provenance: Provenance) -> SftExample:
        return SftExample(task, render_template(_TEMPLATES[task], variables), completion, provenance)

    out: list[SftExample] = []
    success = trace.status == TraceStatus.SUCCESS and trace.final_program is not None
    contracts = trace.stage_attempts(Stage.CONTRACT)
    impls = trace.stage_attempts(Stage.IMPLEMENTATION)
    accepted_contract = next((a for a in contracts if a.accepted), None)
    final_impl = next((a for a in impls if a.accepted), None)

    if success:
        out.append(make(TaskKind.NL_TO_CODE, {"problem": p.statement}, trace.final_program,
                        prov(Stage.IMPLEMENTATION, final_impl.attempt_index if final_impl else 0)))
    if accepted_contract is not None and trace.contract_source:
        out.append(make(TaskKind.NL_TO_SPEC, {"problem": p.statement}, trace.contract_source,
                        prov(Stage.CONTRACT, accepted_contract.attempt_index)))
    if success and trace.contract_source:
        out.append(make(TaskKind.SPEC_TO_CODE, {"contract": trace.contract_source}, trace.final_program,
                        prov(Stage.IMPLEMENTATION, final_impl.attempt_index if final_impl else 0)))

    repairs = success or not cfg.repairs_from_successful_only
    for before, after in (_repair_pairs(contracts) if repairs else ()):
        out.append(make(TaskKind.SPEC_REPAIR, {
            "problem": p.statement, "previous": before.artifact.rstrip("\n"),
            "diagnostics": format_diagnostics(before.diagnostics), "feedback": before.judge_feedback or "(none)",
        }, after.artifact, prov(Stage.CONTRACT, before.attempt_index, after.attempt_index)))
    for before, after in (_repair_pairs(impls) if repairs else ()):
        out.append(make(TaskKind.IMPL_REPAIR, {
            "previous": before.artifact.rstrip("\n"),
            "diagnostics": format_diagnostics(before.diagnostics), "feedback": before.judge_feedback or "(none)",
        }, after.artifact, prov(Stage.IMPLEMENTATION, before.attempt_index, after.attempt_index)))

    if success and trace.hint_check is not None and trace.hint_check.hints_required:
        stripped, _ = strip_proof_hints(trace.final_program)
        out.append(make(TaskKind.PROOF_INFILL, {"program": str(stripped).rstrip("\n")}, trace.final_program,
                        prov(Stage.IMPLEMENTATION, final_impl.attempt_index if final_impl else 0)))
    return sorted(out, key=SftExample.sort_key)


@dataclass
class DatasetManifest:
    counts: dict[str, int]
    total: int
    verified_programs: int
    ratio: Optional[Fraction]
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "countsPerTask": self.counts,
            "totalExamples": self.total,
            "verifiedPrograms": self.verified_programs,
            "examplesPerProgram": None if self.ratio is None else round(float(self.ratio), 4),
            "warnings": self.warnings,
        }

    def table(self) -> str:
        rows = [f"{'Task':<12} {'Examples':>9}"]
        rows += [f"{k:<12} {v:>9}" for k, v in self.counts.items()]
        rows.append(f"{'Total':<12} {self.total:>9}")
        per = "n/a" if self.ratio is None else f"{float(self.ratio):.2f}"
        rows.append(f"verified programs: {self.verified_programs}; examples per program: {per}")
        return "\n".join(rows) + "\n"


def build_manifest(examples: Sequence[SftExample]) -> DatasetManifest:
    return manifest_from_counts(Counter(e.task for e in examples))


def manifest_from_counts(per_task: Mapping[TaskKind | str, int]) -> DatasetManifest:
    # each verified program yields exactly one nlToCode example, so that
    # count is the denominator
    counts = {k.value: 0 for k in TaskKind}
    for k, n in per_task.items():
        if n < 0:
            raise ValueError("negative example count")
        counts[TaskKind(k).value] += n
    verified = counts[TaskKind.NL_TO_CODE.value]
    total = sum(counts.values())
    ratio = Fraction(total, verified) if verified else None
    warnings = []
    if ratio is None:
        warnings.append("no verified programs; ratio undefined")
    elif ratio < RATIO_TARGET:
        warnings.append(f"{float(ratio):.2f} examples per verified program is below {RATIO_TARGET:g}")
    for w in warnings:
        log.warning(w)
    return DatasetManifest(counts, total, verified, ratio, warnings)


def example_to_dict(e: SftExample) -> dict:
    pv = e.provenance
    return {
        "task": e.task.value,
        "prompt": e.prompt,
        "completion": e.completion,
        "provenance": {"problemId": pv.problem_id, "stage": pv.stage, "attempts": list(pv.attempts),
                       "contractDigest": pv.contract_digest, "difficulty": pv.difficulty},
        "tokensEstimate": e.tokens_estimate,
    }


def example_from_dict(d: dict) -> SftExample:
    pv = d["provenance"]
    return SftExample(TaskKind(d["task"]), d["prompt"], d["completion"],
                      Provenance(pv["problemId"], pv["stage"], tuple(pv["attempts"]),
                                 pv.get("contractDigest"), pv.get("difficulty", "UNKNOWN")))


def export_jsonl(examples: Iterable[SftExample], path: Path | str) -> int:
    rows = sorted(examples, key=SftExample.sort_key)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in rows:
            fh.write(json.dumps(example_to_dict(e), ensure_ascii=False, sort_keys=True) + "\n")
    return len(rows)


def import_jsonl(path: Path | str) -> list[SftExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(example_from_dict(json.loads(line)))
    return out
