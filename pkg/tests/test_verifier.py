import json
import sys
import time
from pathlib import Path

import pytest

from dafnyforge.verifier import (
    Diagnostic, DafnyToolchain, RunResult, RunStatus, Severity, ToolchainConfig, VerdictStatus,
    VerifierVerdict, attach_declarations, classify, interpret_run, parse_diagnostics, with_main,
)

FAKE = Path(__file__).parent / "fixtures" / "fake_dafny.py"

VERIFIED = "\nDafny program verifier finished with 3 verified, 0 errors\n"
FAILED = ("program.dfy(7,2): Error: a postcondition could not be proved on this return path\n"
          "program.dfy(3,10): Related location: this is the postcondition that could not be proved\n\n"
          "Dafny program verifier finished with 2 verified, 1 error\n")
RESOLVE = "program.dfy(4,9): Error: unresolved identifier: foo\n1 resolution/type errors detected in program.dfy\n"
PARSE = "program.dfy(2,0): Error: invalid MethodDecl\n1 parse errors detected in program.dfy\n"
TIMED = "\nDafny program verifier finished with 1 verified, 0 errors, 1 time out\n"
OOR = "\nDafny program verifier finished with 1 verified, 0 errors, 2 out of resource\n"
COLOR = "\x1b[31mprogram.dfy(5,3): Error: assertion might not hold\x1b[0m\n" \
        "Dafny program verifier finished with 0 verified, 1 error\n"


@pytest.mark.parametrize("raw,code,status", [
    (VERIFIED, 0, VerdictStatus.VERIFIED),
    (FAILED, 4, VerdictStatus.VERIFICATION_FAILED),
    (RESOLVE, 2, VerdictStatus.PARSE_OR_RESOLVE_ERROR),
    (PARSE, 2, VerdictStatus.PARSE_OR_RESOLVE_ERROR),
    (TIMED, 4, VerdictStatus.TIMEOUT),
    (OOR, 4, VerdictStatus.TIMEOUT),
    (COLOR, 4, VerdictStatus.VERIFICATION_FAILED),
    (VERIFIED, 3, VerdictStatus.VERIFICATION_FAILED),
    ("", 0, VerdictStatus.VERIFIED),
    ("Unhandled exception\n", 134, VerdictStatus.VERIFICATION_FAILED),
    ("program.dfy(1,1): Error: boom\n", 1, VerdictStatus.PARSE_OR_RESOLVE_ERROR),
])
def test_classify(raw, code, status):
    assert classify(raw, code) == status


def test_parse_diagnostics_keeps_order_and_severity():
    diags = parse_diagnostics(FAILED + "program.dfy(9,1): Warning: unused variable\n")
    assert [(d.line, d.column, d.severity) for d in diags] == [
        (7, 2, Severity.ERROR), (9, 1, Severity.WARNING)]
    assert diags[0].message.startswith("a postcondition")


def test_parse_diagnostics_zero_column_becomes_none():
    [d] = parse_diagnostics(PARSE)
    assert (d.line, d.column) == (2, None)


def test_diagnostic_positions_are_one_based():
    with pytest.raises(ValueError):
        Diagnostic(0, 1, Severity.ERROR, "x")


def test_verified_verdict_cannot_hold_errors():
    with pytest.raises(ValueError):
        VerifierVerdict(VerdictStatus.VERIFIED, (Diagnostic(1, 1, Severity.ERROR, "x"),))
    with pytest.raises(ValueError):
        RunResult(RunStatus.ALL_PASSED, (1,))


def test_attach_declarations(palindrome_src):
    line = palindrome_src[: palindrome_src.index("isPalindrome := true")].count("\n") + 1
    [d] = attach_declarations(palindrome_src, [Diagnostic(line, 3, Severity.ERROR, "x")])
    assert d.related_declaration == "IsPalindrome"
    assert d.format().endswith("[in IsPalindrome]")


def test_with_main_is_idempotent():
    text = "method Test() {\n}\n"
    once = with_main(text)
    assert "method Main()" in once and with_main(once) == once


def test_interpret_run_maps_failed_expect_to_ordinal(palindrome_src):
    line = palindrome_src[: palindrome_src.index("expect result2")].count("\n") + 1
    out = f"[Program halted] program.dfy({line},3): expectation violation\n"
    result = interpret_run(palindrome_src, out, 3)
    assert result.status == RunStatus.EXPECT_VIOLATED and result.failed_test_ordinals == (2,)
    assert interpret_run(palindrome_src, "", 0).ok
    assert interpret_run(palindrome_src, "crash", 1).status == RunStatus.RUNTIME_ERROR


# --- subprocess adapter, driven by the fake CLI ------------------------------


@pytest.fixture
def toolchain(tmp_path, monkeypatch):
    def make(rules=(), **kw):
        path = tmp_path / "rules.json"
        path.write_text(json.dumps(list(rules)))
        monkeypatch.setenv("FAKE_DAFNY_RULES", str(path))
        return DafnyToolchain(ToolchainConfig(dafny_path=f"{sys.executable} {FAKE}", **kw))
    return make


def test_subprocess_verified(toolchain, palindrome_src):
    tc = toolchain()
    assert tc.available()
    verdict = tc.verify(palindrome_src)
    assert verdict.status == VerdictStatus.VERIFIED and verdict.wall_time > 0


def test_subprocess_failure_is_attributed(toolchain, palindrome_src):
    tc = toolchain([{"result": "error", "command": "verify", "at": "isPalindrome := true"}])
    verdict = tc.verify(palindrome_src)
    assert verdict.status == VerdictStatus.VERIFICATION_FAILED
    [d] = verdict.diagnostics
    assert d.related_declaration == "IsPalindrome"
    assert "dafnyforge-" not in d.message


def test_subprocess_crash_gets_a_diagnostic(toolchain, palindrome_src):
    verdict = toolchain([{"result": "crash", "message": "stack overflow"}]).verify(palindrome_src)
    assert verdict.status == VerdictStatus.VERIFICATION_FAILED
    assert "stack overflow" in verdict.diagnostics[-1].message


def test_subprocess_timeout_kills_the_process(toolchain, palindrome_src):
    tc = toolchain([{"result": "verified", "sleep": 30}], kill_grace=1.0)
    start = time.monotonic()
    verdict = tc.verify(palindrome_src, timeout=0.5)
    assert verdict.status == VerdictStatus.TIMEOUT
    assert time.monotonic() - start < 10


def test_subprocess_run_tests(toolchain, palindrome_src):
    tc = toolchain([{"result": "halt", "command": "run", "halt_at": "expect result3"}])
    result = tc.run_tests(palindrome_src)
    assert result.status == RunStatus.EXPECT_VIOLATED and result.failed_test_ordinals == (3,)
    assert toolchain().run_tests(palindrome_src).ok


def test_missing_binary_is_tool_unavailable(palindrome_src):
    tc = DafnyToolchain(ToolchainConfig(dafny_path="/nonexistent/dafny-binary"))
    assert not tc.available()
    verdict = tc.verify(palindrome_src)
    assert verdict.status == VerdictStatus.TOOL_UNAVAILABLE and verdict.diagnostics


def test_command_template_expansion():
    tc = DafnyToolchain(ToolchainConfig(dafny_path="dotnet Dafny.dll", extra_args="--cores 2"))
    assert tc.command(tc.config.verify_template, "/t/p.dfy") == [
        "dotnet", "Dafny.dll", "verify", "--allow-warnings", "--cores", "2", "/t/p.dfy"]


def test_non_positive_timeout_rejected(toolchain, palindrome_src):
    with pytest.raises(ValueError):
        toolchain()._execute("{dafny} verify {file}", palindrome_src, 0)


def test_relative_command_paths_are_pinned(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    tc = DafnyToolchain(ToolchainConfig(dafny_path="python3 tools/dafny.py"))
    assert tc.command("{dafny} {file}", "p.dfy") == ["python3", str(tmp_path / "tools" / "dafny.py"), "p.dfy"]
