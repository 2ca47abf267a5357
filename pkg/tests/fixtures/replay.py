"""Replay the recorded demo corpus end to end and snapshot the output tree."""

from __future__ import annotations

from pathlib import Path

import demo_corpus as demo
from fake_dafny import FakeToolchain
from dafnyforge.orchestrator import RunConfig, export, run
from dafnyforge.report import report

CASSETTE = demo.DEMO_DIR / "cassette.jsonl"
PROBLEMS = demo.DEMO_DIR / "problems.jsonl"
# wall-clock timings and the completion-ordered journal legitimately vary
VOLATILE = {"timings.json", "ledger.jsonl"}


def replay_config(out_dir: Path, workers: int = 1, **kw) -> RunConfig:
    return RunConfig(PROBLEMS, out_dir, stages=demo.stage_config(), worker_count=workers,
                     cassette_mode="replay", cassette_path=CASSETTE, **kw)


def replay_all(out_dir: Path, workers: int = 1):
    ledger = run(replay_config(out_dir, workers), verifier=FakeToolchain(demo.RULES))
    manifest = export(out_dir)
    report(ledger).write(out_dir / "report")
    return ledger, manifest


def tree(root: Path, skip=VOLATILE) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}
