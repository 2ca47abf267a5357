"""Running the pipeline over a problem corpus, persisting traces, exporting data."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .dataset import DatasetManifest, ExtractionConfig, build_manifest, export_jsonl, extract_examples
from .ledger import LedgerEntry, RunLedger
from .llm.gateway import BackendConfig, Cassette, CassetteMode, Gateway, Transport
from .records import (
    Difficulty, PipelineTrace, ProblemRecord, Stage, dumps, timings_of, trace_from_dict, trace_to_dict,
)
from .stages import StageConfig, Synthesizer
from .verifier import DafnyToolchain, ToolchainConfig, ToolUnavailable, Verifier

log = logging.getLogger(__name__)


class UnreadableFile(OSError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input_path: Path
    output_dir: Path
    stages: StageConfig = field(default_factory=StageConfig)
    toolchain: ToolchainConfig = field(default_factory=ToolchainConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    worker_count: int = 1
    cassette_mode: CassetteMode = CassetteMode.PASSTHROUGH
    cassette_path: Optional[Path] = None
    random_seed: Optional[int] = None
    limit: Optional[int] = None

    def __post_init__(self):
        self.input_path = Path(self.input_path)
        self.output_dir = Path(self.output_dir)
        self.cassette_mode = CassetteMode(self.cassette_mode)
        if self.cassette_path is not None:
            self.cassette_path = Path(self.cassette_path)

    def validate(self) -> None:
        if self.worker_count < 1:
            raise ConfigError("worker count must be at least 1")
        if not self.input_path.is_file():
            raise ConfigError(f"input file {self.input_path} does not exist")
        if self.cassette_mode != CassetteMode.PASSTHROUGH and self.cassette_path is None:
            raise ConfigError(f"{self.cassette_mode.value} mode needs a cassette path")
        if self.cassette_mode == CassetteMode.REPLAY and not self.cassette_path.is_file():
            raise ConfigError(f"replay cassette {self.cassette_path} does not exist")
        if self.output_dir.exists() and not self.output_dir.is_dir():
            raise ConfigError(f"output path {self.output_dir} is not a directory")


# --- ingest ----------------------------------------------------------------


@dataclass
class IngestResult:
    problems: list[ProblemRecord]
    skipped: int = 0
    messages: list[str] = field(default_factory=list)


def _maybe_json(value):
    if isinstance(value, str):
        try:
            return json.loads(value)
        except json.JSONDecodeError:
            return value
    return value


def _as_text(value) -> str:
    return value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)


def _io_pairs(raw) -> tuple[tuple[str, str], ...]:
    data = _maybe_json(raw)
    if data in (None, "", {}):
        return ()
    if not isinstance(data, dict):
        raise ValueError("input_output is not an object")
    ins, outs = data.get("inputs"), data.get("outputs")
    if not isinstance(ins, list) or not isinstance(outs, list) or len(ins) != len(outs):
        raise ValueError("input_output needs equally long inputs and outputs lists")
    return tuple((_as_text(i), _as_text(o)) for i, o in zip(ins, outs))


def problem_from_taco(rec: dict, fallback_id: str) -> ProblemRecord:
    statement = rec.get("question")
    if not isinstance(statement, str) or not statement.strip():
        raise ValueError("missing question")
    solution = rec.get("solution")
    if solution is None:
        sols = _maybe_json(rec.get("solutions"))
        if isinstance(sols, list) and sols:
            solution = sols[0]
        elif isinstance(sols, str):
            solution = sols
    if not isinstance(solution, str) or not solution.strip():
        raise ValueError("missing reference solution")
    skills = _maybe_json(rec.get("skill_types")) or []
    if isinstance(skills, str):
        skills = [skills]
    if not isinstance(skills, list):
        raise ValueError("skill_types is not a list")
    pid = str(rec.get("id", fallback_id))
    return ProblemRecord(
        id=pid, statement=statement, reference_solution=solution,
        io_tests=_io_pairs(rec.get("input_output")),
        difficulty=Difficulty.parse(rec.get("difficulty")),
        skill_tags=tuple(sorted({str(s) for s in skills})),
    )


def ingest(path: Path | str) -> IngestResult:
    """Read a line-delimited corpus; malformed lines are skipped and counted."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise UnreadableFile(f"cannot read {path}: {e}") from None
    result = IngestResult([])
    seen: set[str] = set()
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            problem = problem_from_taco(rec, f"line-{n}")
            if problem.id in seen:
                raise ValueError(f"duplicate id {problem.id}")
        except (ValueError, TypeError) as e:
            result.skipped += 1
            msg = f"{path.name}:{n}: skipped ({e})"
            result.messages.append(msg)
            log.warning(msg)
            continue
        seen.add(problem.id)
        result.problems.append(problem)
    return result


# --- trace persistence -----------------------------------------------------

_SAFE = re.compile(r"[^A-Za-z0-9._-]+")


def trace_dir_name(problem_id: str) -> str:
    name = _SAFE.sub("_", problem_id).strip("._") or "problem"
    if name != problem_id:
        # keep ids that sanitize alike apart
        name += "-" + hashlib.sha1(problem_id.encode("utf-8")).hexdigest()[:8]
    return name


def write_trace(trace: PipelineTrace, traces_root: Path) -> Path:
    d = traces_root / trace_dir_name(trace.problem_id)
    attempts = d / "attempts"
    attempts.mkdir(parents=True, exist_ok=True)
    for a in trace.attempts:
        ext = "txt" if a.stage == Stage.SIGNATURE else "dfy"
        (attempts / f"{a.stage.value}-{a.attempt_index}.{ext}").write_text(a.artifact, encoding="utf-8")
    if trace.contract_source:
        (d / "contract.dfy").write_text(trace.contract_source, encoding="utf-8")
    if trace.final_program:
        (d / "final.dfy").write_text(trace.final_program, encoding="utf-8")
    (d / "timings.json").write_text(json.dumps(timings_of(trace), indent=2) + "\n", encoding="utf-8")
    # trace.json last: its presence marks the directory complete
    (d / "trace.json").write_text(json.dumps(trace_to_dict(trace), indent=2, ensure_ascii=False) + "\n",
                                  encoding="utf-8")
    return d


def read_trace(path: Path | str) -> PipelineTrace:
    path = Path(path)
    if path.is_dir():
        path = path / "trace.json"
    return trace_from_dict(json.loads(path.read_text(encoding="utf-8")))


def load_traces(out_dir: Path | str) -> list[PipelineTrace]:
    root = Path(out_dir) / "traces"
    if not root.is_dir():
        return []
    return [read_trace(p) for p in sorted(root.glob("*/trace.json"))]


# --- running ---------------------------------------------------------------


def build_gateway(config: RunConfig, transport: Optional[Transport] = None) -> Gateway:
    backend = config.backend
    if config.random_seed is not None and backend.seed is None:
        backend = replace(backend, seed=config.random_seed)
    cassette = None
    if config.cassette_mode != CassetteMode.PASSTHROUGH:
        cassette = Cassette(config.cassette_path, config.cassette_mode)
    return Gateway(backend, transport, cassette)


def run(config: RunConfig, verifier: Optional[Verifier] = None,
        transport: Optional[Transport] = None) -> RunLedger:
    """Run every problem not yet in the ledger; returns the full ledger.

    Without an explicit ``verifier`` the configured toolchain is used and must
    be launchable, otherwise ``ToolUnavailable`` is raised before any work.
    """
    config.validate()
    if verifier is None:
        toolchain = DafnyToolchain(config.toolchain)
        if not toolchain.available():
            raise ToolUnavailable(f"verifier {config.toolchain.dafny_path!r} not found")
        verifier = toolchain
    problems = ingest(config.input_path).problems
    if config.limit is not None:
        problems = problems[: config.limit]
    gateway = build_gateway(config, transport)
    synth = Synthesizer(gateway, verifier, config.stages)

    config.output_dir.mkdir(parents=True, exist_ok=True)
    traces_root = config.output_dir / "traces"
    ledger = RunLedger.open(config.output_dir)
    todo = [p for p in problems if not ledger.completed(p.id)]
    if len(todo) < len(problems):
        log.info("resuming: %d of %d problems already done", len(problems) - len(todo), len(problems))

    def work(problem: ProblemRecord) -> PipelineTrace:
        trace = synth.run(problem)
        if config.toolchain.extra_args:
            trace.prover_limits["verifierArgs"] = config.toolchain.extra_args
        write_trace(trace, traces_root)
        return trace

    with ThreadPoolExecutor(max_workers=config.worker_count) as pool:
        futures = [pool.submit(work, p) for p in todo]
        for fut in as_completed(futures):
            ledger.append(LedgerEntry.from_trace(fut.result()))
    ledger.write_snapshot()
    return ledger


def export(out_dir: Path | str, dataset_dir: Optional[Path | str] = None,
           config: Optional[ExtractionConfig] = None) -> DatasetManifest:
    out_dir = Path(out_dir)
    target = Path(dataset_dir) if dataset_dir else out_dir / "dataset"
    examples = []
    for trace in load_traces(out_dir):
        examples.extend(extract_examples(trace, config))
    export_jsonl(examples, target / "sft.jsonl")
    manifest = build_manifest(examples)
    (target / "manifest.json").write_text(dumps(manifest.to_dict()), encoding="utf-8")
    (target / "manifest.txt").write_text(manifest.table(), encoding="utf-8")
    return manifest
