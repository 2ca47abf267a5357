#!/usr/bin/env python3
"""Stand-in for the Dafny toolchain, driven by substring rules.

Each rule names a command (``verify``, ``run`` or ``any``), substrings the
program must contain and must not contain, and the outcome to produce. The
first matching rule wins. Without a match, a program that the package parser
reads is treated as verified (``verify``) or as passing its tests (``run``),
and one it cannot read gets a parse error.

Outputs imitate the real toolchain's text, so the package's output parsing is
exercised exactly as it would be against the real binary.

Usable in-process (``FakeToolchain``) or as an executable:
``fake_dafny.py verify|run [flags] FILE`` with rules in ``$FAKE_DAFNY_RULES``.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from dafnyforge.surface.lexer import line_col
from dafnyforge.surface.program import ParseError, parse_program
from dafnyforge.verifier import (
    PROGRAM_NAME, RunResult, attach_declarations, RunStatus, VerdictStatus, VerifierVerdict, classify, interpret_run,
    parse_diagnostics, with_main,
)

RULES_ENV = "FAKE_DAFNY_RULES"


@dataclass
class Rule:
    result: str  # verified | error | parse | timeout | halt | crash
    command: str = "any"
    contains: list[str] = field(default_factory=list)
    absent: list[str] = field(default_factory=list)
    message: str = "a postcondition could not be proved on this return path"
    at: Optional[str] = None
    halt_at: Optional[str] = None
    sleep: float = 0.0

    def matches(self, command: str, text: str) -> bool:
        if self.command not in ("any", command):
            return False
        return all(s in text for s in self.contains) and not any(s in text for s in self.absent)


def load_rules(data) -> list[Rule]:
    return [Rule(**r) for r in data]


def _where(text: str, needle: Optional[str]) -> tuple[int, int]:
    if needle and needle in text:
        return line_col(text, text.index(needle))
    return 1, 1


def _decl_count(text: str) -> int:
    try:
        return max(1, len(parse_program(text).declarations))
    except ParseError:
        return 1


def respond(rules: list[Rule], command: str, text: str) -> tuple[str, int, float]:
    """(output, exit code, seconds to sleep) for one invocation."""
    rule = next((r for r in rules if r.matches(command, text)), None)
    if rule is None:
        try:
            parse_program(text)
        except ParseError as e:
            line, col = max(e.line, 1), max(e.column, 1)
            return (f"{PROGRAM_NAME}({line},{col}): Error: {e.args[0]}\n"
                    f"1 parse errors detected in {PROGRAM_NAME}\n", 2, 0.0)
        rule = Rule("verified")
    n = _decl_count(text)
    if rule.result == "verified":
        if command == "run":
            return "\nDafny program verifier did not attempt verification\n", 0, rule.sleep
        return f"\nDafny program verifier finished with {n} verified, 0 errors\n", 0, rule.sleep
    if rule.result == "error":
        line, col = _where(text, rule.at)
        return (f"{PROGRAM_NAME}({line},{col}): Error: {rule.message}\n\n"
                f"Dafny program verifier finished with {n - 1} verified, 1 error\n", 4, rule.sleep)
    if rule.result == "parse":
        line, col = _where(text, rule.at)
        return (f"{PROGRAM_NAME}({line},{col}): Error: {rule.message}\n"
                f"1 resolution/type errors detected in {PROGRAM_NAME}\n", 2, rule.sleep)
    if rule.result == "timeout":
        return (f"{PROGRAM_NAME}(1,1): Warning: verification timed out\n\n"
                f"Dafny program verifier finished with {n - 1} verified, 0 errors, 1 time out\n", 4, rule.sleep)
    if rule.result == "halt":
        line, col = _where(text, rule.halt_at)
        return (f"\nDafny program verifier did not attempt verification\n"
                f"[Program halted] {PROGRAM_NAME}({line},{col}): expectation violation\n", 3, rule.sleep)
    if rule.result == "crash":
        return f"Unhandled exception: {rule.message}\n", 134, rule.sleep
    raise ValueError(f"unknown rule result {rule.result!r}")


class FakeToolchain:
    """In-process ``Verifier``; records every program it was asked about."""

    def __init__(self, rules: list[Rule] | list[dict] = ()):
        self.rules = [r if isinstance(r, Rule) else Rule(**r) for r in rules]
        self.calls: list[tuple[str, str]] = []

    def verify(self, src, timeout: Optional[float] = None) -> VerifierVerdict:
        text = str(src)
        self.calls.append(("verify", text))
        out, code, delay = respond(self.rules, "verify", text)
        if timeout is not None and delay > timeout:
            return VerifierVerdict(VerdictStatus.TIMEOUT, tuple(parse_diagnostics(out)))
        diags = attach_declarations(text, parse_diagnostics(out))
        return VerifierVerdict(classify(out, code), tuple(diags))

    def run_tests(self, src, timeout: Optional[float] = None) -> RunResult:
        text = str(src)
        self.calls.append(("run", text))
        out, code, delay = respond(self.rules, "run", with_main(text))
        if timeout is not None and delay > timeout:
            return RunResult(RunStatus.TIMEOUT, (), out)
        return interpret_run(text, out, code)


def main(argv: list[str]) -> int:
    if not argv or argv[0] not in ("verify", "run"):
        print("usage: fake_dafny.py verify|run [flags] FILE", file=sys.stderr)
        return 1
    path = Path(argv[-1])
    rules_path = os.environ.get(RULES_ENV)
    rules = load_rules(json.loads(Path(rules_path).read_text())) if rules_path else []
    out, code, delay = respond(rules, argv[0], path.read_text(encoding="utf-8"))
    if delay:
        time.sleep(delay)
    sys.stdout.write(out.replace(PROGRAM_NAME, str(path)))
    return code


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
