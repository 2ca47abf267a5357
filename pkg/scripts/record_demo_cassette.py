#!/usr/bin/env python3
"""Record the three-problem demo corpus into tests/fixtures/demo/.

Runs the pipeline with scripted model replies and the rule-driven fake
toolchain, writing problems.jsonl, rules.json and cassette.jsonl. Replaying
the cassette needs no model endpoint.
"""

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests" / "fixtures"))

import demo_corpus  # noqa: E402
from fake_dafny import FakeToolchain  # noqa: E402

from dafnyforge.orchestrator import RunConfig, run  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=demo_corpus.DEMO_DIR)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    problems = demo_corpus.write_problems(args.out / "problems.jsonl")
    demo_corpus.write_rules(args.out / "rules.json")
    cassette = args.out / "cassette.jsonl"
    cassette.unlink(missing_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        cfg = RunConfig(problems, Path(tmp) / "run", stages=demo_corpus.stage_config(),
                        cassette_mode="record", cassette_path=cassette)
        ledger = run(cfg, verifier=FakeToolchain(demo_corpus.RULES),
                     transport=demo_corpus.ScriptedTransport())
        for e in ledger.sorted_entries():
            print(f"{e.problem_id}: {e.status.value}")
        shutil.rmtree(Path(tmp) / "run")
    print(f"wrote {cassette}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
