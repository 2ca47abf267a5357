"""Running the Dafny toolchain as a child process and classifying its output."""

from __future__ import annotations

import logging
import os
import re
import shlex
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol

from .surface.program import ParseError, SourceText, parse_program
from .surface.testcases import MalformedTestBody, extract_test_cases

log = logging.getLogger(__name__)

DAFNY_PATH_ENV = "DAFNY_PATH"
PROGRAM_NAME = "program.dfy"


class VerdictStatus(str, Enum):
    VERIFIED = "verified"
    VERIFICATION_FAILED = "verificationFailed"
    PARSE_OR_RESOLVE_ERROR = "parseOrResolveError"
    TIMEOUT = "timeout"
    TOOL_UNAVAILABLE = "toolUnavailable"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    line: Optional[int]
    column: Optional[int]
    severity: Severity
    message: str
    related_declaration: Optional[str] = None

    def __post_init__(self):
        if (self.line is not None and self.line < 1) or (self.column is not None and self.column < 1):
            raise ValueError("diagnostic positions are 1-based")

    def format(self) -> str:
        where = f"{self.line}:{self.column}" if self.line else "-"
        decl = f" [in {self.related_declaration}]" if self.related_declaration else ""
        return f"{where} {self.severity.value}: {self.message}{decl}"


@dataclass(frozen=True)
class VerifierVerdict:
    status: VerdictStatus
    diagnostics: tuple[Diagnostic, ...] = ()
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.status == VerdictStatus.VERIFIED and any(
                d.severity == Severity.ERROR for d in self.diagnostics):
            raise ValueError("a verified verdict cannot carry errors")

    @property
    def ok(self) -> bool:
        return self.status == VerdictStatus.VERIFIED


class RunStatus(str, Enum):
    ALL_PASSED = "allPassed"
    EXPECT_VIOLATED = "expectViolated"
    RUNTIME_ERROR = "runtimeError"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class RunResult:
    status: RunStatus
    failed_test_ordinals: tuple[int, ...] = ()
    raw_output: str = ""
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.status == RunStatus.ALL_PASSED and self.failed_test_ordinals:
            raise ValueError("passing runs have no failed tests")

    @property
    def ok(self) -> bool:
        return self.status == RunStatus.ALL_PASSED


class ToolUnavailable(RuntimeError):
    pass


class Verifier(Protocol):
    def verify(self, src: SourceText | str, timeout: Optional[float] = None) -> VerifierVerdict: ...

    def run_tests(self, src: SourceText | str, timeout: Optional[float] = None) -> RunResult: ...


_ANSI = re.compile(r"\x1b\[[0-9;?]*[A-Za-z]")
_DIAG = re.compile(
    r"^(?P<file>.*?)\((?P<line>\d+),(?P<col>\d+)\):\s*(?P<sev>Error|Warning)\s*:?\s*(?P<msg>.*?)\s*$"
)
_SUMMARY = re.compile(
    r"Dafny program verifier finished with (?P<verified>\d+) verified, (?P<errors>\d+) errors?"
    r"(?:, (?P<timeouts>\d+) time outs?)?(?:, (?P<oor>\d+) out of resource)?"
)
_FRONTEND = re.compile(r"(\d+) (parse|resolution/type) errors? detected")
_HALT = re.compile(r"(?:\((?P<line>\d+),(?P<col>\d+)\):\s*)?expectation violation", re.I)


def parse_diagnostics(raw: str) -> list[Diagnostic]:
    """Located ``Error``/``Warning`` lines, in output order; everything else is ignored."""
    out = []
    for line in raw.splitlines():
        m = _DIAG.match(_ANSI.sub("", line).rstrip())
        if not m:
            continue
        out.append(Diagnostic(
            line=int(m["line"]) or None,
            column=int(m["col"]) or None,
            severity=Severity.ERROR if m["sev"] == "Error" else Severity.WARNING,
            message=m["msg"],
        ))
    return out


def classify(raw: str, returncode: int) -> VerdictStatus:
    """Map toolchain output and exit code to a verdict status. Pure."""
    clean = _ANSI.sub("", raw)
    if _FRONTEND.search(clean):
        return VerdictStatus.PARSE_OR_RESOLVE_ERROR
    diags = parse_diagnostics(clean)
    has_error = any(d.severity == Severity.ERROR for d in diags)
    m = _SUMMARY.search(clean)
    if m:
        if int(m["errors"]) > 0:
            return VerdictStatus.VERIFICATION_FAILED
        if int(m["timeouts"] or 0) + int(m["oor"] or 0) > 0:
            return VerdictStatus.TIMEOUT
        if returncode == 0 and not has_error:
            return VerdictStatus.VERIFIED
        return VerdictStatus.VERIFICATION_FAILED
    if has_error:
        # errors without a verifier summary come from the front end
        return VerdictStatus.PARSE_OR_RESOLVE_ERROR
    if returncode == 0:
        return VerdictStatus.VERIFIED
    return VerdictStatus.VERIFICATION_FAILED


@dataclass
class ToolchainConfig:
    dafny_path: str = field(default_factory=lambda: os.environ.get(DAFNY_PATH_ENV, "dafny"))
    verify_template: str = "{dafny} verify --allow-warnings {extra} {file}"
    run_template: str = "{dafny} run --no-verify --allow-warnings {file}"
    # prover resource limits and similar, substituted for {extra}
    extra_args: str = ""
    verify_timeout: float = 60.0
    run_timeout: float = 30.0
    kill_grace: float = 5.0
    max_processes: int = field(default_factory=lambda: os.cpu_count() or 1)


@dataclass
class _Completed:
    output: str
    returncode: int
    timed_out: bool
    wall_time: float


class DafnyToolchain:
    """``Verifier`` backed by the real toolchain (or anything speaking its CLI)."""

    def __init__(self, config: Optional[ToolchainConfig] = None):
        self.config = config or ToolchainConfig()
        self._slots = threading.BoundedSemaphore(max(1, self.config.max_processes))

    def command(self, template: str, file: str) -> list[str]:
        argv = []
        for part in shlex.split(template):
            if part == "{dafny}":
                # commands run in a scratch directory, so pin relative paths now
                argv.extend(os.path.abspath(p) if os.sep in p and not os.path.isabs(p) else p
                            for p in shlex.split(self.config.dafny_path))
            elif part == "{extra}":
                argv.extend(shlex.split(self.config.extra_args))
            else:
                argv.append(part.replace("{file}", file))
        return argv

    def available(self) -> bool:
        try:
            argv = self.command("{dafny}", "")
        except ValueError:
            return False
        return bool(argv) and shutil.which(argv[0]) is not None

    def _execute(self, template: str, text: str, timeout: float) -> _Completed:
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        with self._slots, tempfile.TemporaryDirectory(prefix="dafnyforge-") as tmp:
            path = Path(tmp) / PROGRAM_NAME
            path.write_text(text, encoding="utf-8")
            argv = self.command(template, str(path))
            start = time.monotonic()
            try:
                proc = subprocess.Popen(
                    argv, cwd=tmp, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                    stdin=subprocess.DEVNULL, start_new_session=True,
                )
            except (FileNotFoundError, PermissionError, NotADirectoryError) as e:
                raise ToolUnavailable(f"cannot launch {argv[0]!r}: {e}") from None
            timed_out = False
            try:
                out, _ = proc.communicate(timeout=timeout)
            except subprocess.TimeoutExpired:
                timed_out = True
                _kill_group(proc)
                try:
                    out, _ = proc.communicate(timeout=self.config.kill_grace)
                except subprocess.TimeoutExpired:
                    proc.kill()
                    out, _ = proc.communicate()
            elapsed = time.monotonic() - start
            output = out.decode("utf-8", errors="replace")
            # temp paths differ per call; keep outputs reproducible
            output = output.replace(str(path), PROGRAM_NAME).replace(tmp + os.sep, "")
            return _Completed(output, proc.returncode, timed_out, elapsed)

    def verify(self, src: SourceText | str, timeout: Optional[float] = None) -> VerifierVerdict:
        text = str(src)
        try:
            done = self._execute(self.config.verify_template, text, timeout or self.config.verify_timeout)
        except ToolUnavailable as e:
            log.error("%s", e)
            return VerifierVerdict(VerdictStatus.TOOL_UNAVAILABLE,
                                   (Diagnostic(None, None, Severity.ERROR, str(e)),))
        diags = parse_diagnostics(done.output)
        if done.timed_out:
            return VerifierVerdict(VerdictStatus.TIMEOUT, tuple(diags), done.wall_time)
        status = classify(done.output, done.returncode)
        if status != VerdictStatus.VERIFIED and not any(d.severity == Severity.ERROR for d in diags):
            tail = done.output.strip().splitlines()[-1:] or [f"exit code {done.returncode}"]
            diags.append(Diagnostic(None, None, Severity.ERROR, tail[0]))
        return VerifierVerdict(status, tuple(attach_declarations(text, diags)), done.wall_time)

    def run_tests(self, src: SourceText | str, timeout: Optional[float] = None) -> RunResult:
        text = str(src)
        program = with_main(text)
        done = self._execute(self.config.run_template, program, timeout or self.config.run_timeout)
        if done.timed_out:
            return RunResult(RunStatus.TIMEOUT, (), done.output, done.wall_time)
        return interpret_run(text, done.output, done.returncode, done.wall_time)


def with_main(text: str) -> str:
    """Append an entry point calling ``Test()`` unless the program has one."""
    if re.search(r"\bmethod\s+Main\s*\(", text):
        return text
    sep = "" if text.endswith("\n") else "\n"
    return f"{text}{sep}\nmethod Main() {{\n  Test();\n}}\n"


def interpret_run(text: str, output: str, returncode: int, wall_time: float = 0.0) -> RunResult:
    clean = _ANSI.sub("", output)
    m = _HALT.search(clean)
    if m:
        failed: tuple[int, ...] = ()
        if m["line"]:
            failed = tuple(_ordinals_at_line(text, int(m["line"])))
        return RunResult(RunStatus.EXPECT_VIOLATED, failed, output, wall_time)
    if returncode != 0:
        return RunResult(RunStatus.RUNTIME_ERROR, (), output, wall_time)
    return RunResult(RunStatus.ALL_PASSED, (), output, wall_time)


def _ordinals_at_line(text: str, line: int) -> list[int]:
    try:
        cases = extract_test_cases(text)
    except (ParseError, MalformedTestBody):
        return []
    return [c.ordinal for c in cases if line in c.expect_lines]


def attach_declarations(text: str, diags: list[Diagnostic]) -> list[Diagnostic]:
    try:
        program = parse_program(text)
    except (ParseError, ValueError):
        return diags
    starts = [0]
    for line in text.splitlines(keepends=True):
        starts.append(starts[-1] + len(line))
    out = []
    for d in diags:
        if d.line and d.line <= len(starts) and d.related_declaration is None:
            decl = program.declaration_at(starts[d.line - 1] + (d.column or 1) - 1)
            if decl is not None:
                d = Diagnostic(d.line, d.column, d.severity, d.message, decl.name)
        out.append(d)
    return out


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()

