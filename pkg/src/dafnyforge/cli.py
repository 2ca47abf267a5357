"""``dafnyforge`` command line."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .dataset import ExtractionConfig
from .ledger import RunLedger
from .llm.gateway import BackendConfig, CassetteMode, HttpError, LLMTimeout, ReplayMiss
from .orchestrator import ConfigError, RunConfig, UnreadableFile, export, ingest, run
from .report import report
from .stages import GateMode, StageConfig
from .verifier import ToolchainConfig, ToolUnavailable

log = logging.getLogger("dafnyforge")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, type=Path, help="line-delimited problem corpus")
    p.add_argument("--output", required=True, type=Path, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--limit", type=int, default=None, help="only the first N problems")
    p.add_argument("--seed", type=int, default=None, help="sampling seed forwarded to the model backend")

    g = p.add_argument_group("stages")
    g.add_argument("--signature-budget", type=int, default=3)
    g.add_argument("--contract-budget", type=int, default=4)
    g.add_argument("--implementation-budget", type=int, default=4)
    g.add_argument("--gate", choices=[m.value for m in GateMode], default=GateMode.LENIENT.value)
    g.add_argument("--llm-perturbations", action="store_true",
                   help="ask the model for perturbed outputs instead of using the rule table")
    g.add_argument("--lemma-workers", type=int, default=1)

    g = p.add_argument_group("verifier")
    g.add_argument("--dafny", default=None, help="verifier command (default: $DAFNY_PATH or 'dafny')")
    g.add_argument("--verify-timeout", type=float, default=60.0)
    g.add_argument("--run-timeout", type=float, default=30.0)
    g.add_argument("--verifier-args", default="", help="extra arguments for verification runs")

    g = p.add_argument_group("model backend")
    g.add_argument("--endpoint", default=BackendConfig.endpoint_url)
    g.add_argument("--model", default=BackendConfig.model_name)
    g.add_argument("--temperature", type=float, default=BackendConfig.temperature)
    g.add_argument("--judge-temperature", type=float, default=BackendConfig.judge_temperature)
    g.add_argument("--max-output-tokens", type=int, default=BackendConfig.max_output_tokens)
    g.add_argument("--request-timeout", type=float, default=BackendConfig.request_timeout)
    g.add_argument("--requests-per-minute", type=float, default=BackendConfig.requests_per_minute)
    g.add_argument("--api-key-env", default=BackendConfig.api_key_env_var,
                   help="name of the environment variable holding the API key")
    g.add_argument("--cassette", type=Path, default=None)
    g.add_argument("--cassette-mode", choices=[m.value for m in CassetteMode],
                   default=CassetteMode.PASSTHROUGH.value)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    toolchain = ToolchainConfig(verify_timeout=args.verify_timeout, run_timeout=args.run_timeout,
                                extra_args=args.verifier_args)
    if args.dafny:
        toolchain.dafny_path = args.dafny
    return RunConfig(
        input_path=args.input,
        output_dir=args.output,
        stages=StageConfig(
            signature_budget=args.signature_budget, contract_budget=args.contract_budget,
            implementation_budget=args.implementation_budget, verify_timeout=args.verify_timeout,
            run_timeout=args.run_timeout, gate=GateMode(args.gate),
            llm_perturbations=args.llm_perturbations, lemma_workers=args.lemma_workers,
        ),
        toolchain=toolchain,
        backend=BackendConfig(
            endpoint_url=args.endpoint, model_name=args.model, temperature=args.temperature,
            judge_temperature=args.judge_temperature, max_output_tokens=args.max_output_tokens,
            request_timeout=args.request_timeout, requests_per_minute=args.requests_per_minute,
            api_key_env_var=args.api_key_env,
        ),
        worker_count=args.workers,
        cassette_mode=CassetteMode(args.cassette_mode),
        cassette_path=args.cassette,
        random_seed=args.seed,
        limit=args.limit,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dafnyforge",
                                     description="Synthesize verified Dafny programs and training data.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="validate a problem corpus")
    p.add_argument("input", type=Path)

    p = sub.add_parser("run", help="run the pipeline over a corpus (resumes when output exists)")
    _add_run_args(p)

    p = sub.add_parser("report", help="success tables by difficulty and skill tag")
    p.add_argument("ledger", type=Path, help="output directory, ledger.json or ledger.jsonl")
    p.add_argument("--out", type=Path, default=None, help="directory for report.txt and CSV files")

    p = sub.add_parser("export-dataset", help="extract fine-tuning examples from stored traces")
    p.add_argument("output", type=Path, help="run output directory")
    p.add_argument("--dataset-dir", type=Path, default=None)
    p.add_argument("--successful-only-repairs", action="store_true",
                   help="take repair pairs only from traces that ended in success")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "ingest-check":
            res = ingest(args.input)
            for m in res.messages:
                print(m, file=sys.stderr)
            print(f"{len(res.problems)} problems, {res.skipped} skipped")
            return 0
        if args.command == "run":
            ledger = run(config_from_args(args))
            ok = sum(e.success for e in ledger.entries.values())
            print(f"{ok}/{len(ledger)} problems verified; ledger in {args.output}")
            return 0
        if args.command == "report":
            rep = report(RunLedger.load(args.ledger))
            print(rep.text(), end="")
            if args.out:
                rep.write(args.out)
            elif args.ledger.is_dir():
                rep.write(args.ledger / "report")
            return 0
        if args.command == "export-dataset":
            cfg = ExtractionConfig(repairs_from_successful_only=args.successful_only_repairs)
            manifest = export(args.output, args.dataset_dir, cfg)
            print(manifest.table(), end="")
            for w in manifest.warnings:
                print(f"warning: {w}", file=sys.stderr)
            return 0
    except (ConfigError, UnreadableFile, ToolUnavailable, FileNotFoundError, ValueError,
            ReplayMiss, HttpError, LLMTimeout) as e:
        print(f"dafnyforge: error: {e}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
