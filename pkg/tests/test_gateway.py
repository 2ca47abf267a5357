import json
import logging
from pathlib import Path

import httpx
import pytest

from dafnyforge.lemmas import SpecAssessment
from dafnyforge.llm import (
    BackendConfig, Cassette, CassetteMode, Gateway, HttpChatTransport, HttpError, LLMTimeout, RateLimiter,
    ReplayMiss, Reply, TemplateError, render_template, request_digest, template_ids,
)
from dafnyforge.verifier import Diagnostic, Severity

GOLDEN = Path(__file__).parent / "fixtures" / "prompts"

PLACEHOLDERS = {
    "signature": {"problem", "solution", "language"},
    "signature_retry": {"problem", "solution", "language", "previous", "error"},
    "contract": {"problem", "solution", "language", "signature", "examples"},
    "contract_repair": {"problem", "signature", "examples", "previous", "feedback"},
    "implementation": {"problem", "contract"},
    "implementation_repair": {"contract", "previous", "feedback"},
    "judge_contract": {"problem", "artifact", "diagnostics", "assessment"},
    "judge_implementation": {"problem", "artifact", "diagnostics"},
    "perturb": {"output", "type", "postconditions"},
    "sft_nl_to_code": {"problem"},
    "sft_nl_to_spec": {"problem"},
    "sft_spec_to_code": {"contract"},
    "sft_spec_repair": {"problem", "previous", "diagnostics", "feedback"},
    "sft_impl_repair": {"previous", "diagnostics", "feedback"},
    "sft_proof_infill": {"program"},
}


def test_every_template_is_known():
    assert set(template_ids()) == set(PLACEHOLDERS)


@pytest.mark.parametrize("tid", sorted(PLACEHOLDERS))
def test_template_golden(tid):
    text = render_template(tid, {n: f"<{n}>" for n in PLACEHOLDERS[tid]})
    assert text == (GOLDEN / f"{tid}.golden").read_text()
    assert "$" not in text.replace("$$", "")


@pytest.mark.parametrize("tid", sorted(PLACEHOLDERS))
def test_missing_placeholder_is_reported(tid):
    names = sorted(PLACEHOLDERS[tid])
    with pytest.raises(TemplateError) as info:
        render_template(tid, {n: "x" for n in names[1:]})
    assert info.value.placeholder == names[0]


def test_unknown_template():
    with pytest.raises(TemplateError):
        render_template("nope", {})


def test_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(temperature=3.0)
    with pytest.raises(ValueError):
        BackendConfig(max_output_tokens=0)
    with pytest.raises(ValueError):
        BackendConfig(max_attempts=0)


def test_digest_depends_on_every_field():
    base = request_digest("t", "p", "m", 0.2)
    assert len({base, request_digest("u", "p", "m", 0.2), request_digest("t", "q", "m", 0.2),
                request_digest("t", "p", "n", 0.2), request_digest("t", "p", "m", 0.3)}) == 5
    assert request_digest("t", "p", "m", 0) == request_digest("t", "p", "m", 0.0)


def _vars():
    return {"problem": "Sum two numbers.", "solution": "print(a+b)", "language": "Python"}


def test_record_then_replay(tmp_path):
    path = tmp_path / "c.jsonl"
    calls = []

    def fake(tid, prompt, temp):
        calls.append(tid)
        return Reply("method Add(a: int, b: int) returns (s: int)", 10, 5)

    rec = Gateway(BackendConfig(requests_per_minute=6000), fake)
    rec.record_replay_control("record", path)
    first = rec.exchange("signature", _vars())
    assert first.token_counts == (10, 5) and calls == ["signature"]
    assert json.loads(path.read_text())["templateId"] == "signature"

    rep = Gateway(BackendConfig(), transport=lambda *a: pytest.fail("network used in replay"))
    rep.record_replay_control(CassetteMode.REPLAY, path)
    again = rep.exchange("signature", _vars())
    assert again.response == first.response and again.request_digest == first.request_digest
    with pytest.raises(ReplayMiss):
        rep.exchange("signature", {**_vars(), "problem": "different"})


def test_replay_needs_existing_cassette(tmp_path):
    with pytest.raises(FileNotFoundError):
        Cassette(tmp_path / "missing.jsonl", CassetteMode.REPLAY)
    with pytest.raises(ValueError):
        Gateway().record_replay_control("replay")


def test_bad_cassette_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"digest": "a", "response": "x"}\nnot json\n')
    with pytest.raises(ValueError, match=":2:"):
        Cassette(path, CassetteMode.REPLAY)


def test_empty_cassette_still_replays(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("")
    gw = Gateway(BackendConfig())
    gw.record_replay_control("replay", path)
    assert gw.mode == CassetteMode.REPLAY
    with pytest.raises(ReplayMiss):
        gw.complete("signature", _vars())


def test_judge_requires_known_stage_and_evidence():
    gw = Gateway(BackendConfig(requests_per_minute=6000), lambda *a: Reply("fix it"))
    with pytest.raises(ValueError):
        gw.judge_feedback("signature", "x", [Diagnostic(1, 1, Severity.ERROR, "e")])
    with pytest.raises(ValueError):
        gw.judge_feedback("implementation", "x", [])
    ex = gw.judge_feedback("contract", "prog", [], SpecAssessment(), problem="p")
    assert "overall: inconclusive" in ex.rendered_prompt and ex.response == "fix it"
    ex = gw.judge_feedback("implementation", "prog", [Diagnostic(3, 4, Severity.ERROR, "boom")])
    assert "- 3:4 error: boom" in ex.rendered_prompt


def test_judge_uses_judge_temperature():
    seen = []
    gw = Gateway(BackendConfig(temperature=0.7, judge_temperature=0.1, requests_per_minute=6000),
                 lambda t, p, temp: seen.append(temp) or Reply("ok"))
    gw.judge_feedback("implementation", "x", [Diagnostic(1, 1, Severity.ERROR, "e")])
    gw.complete("signature", _vars())
    assert seen == [0.1, 0.7]


# --- HTTP transport ---------------------------------------------------------

OK_BODY = {"choices": [{"message": {"content": "hello"}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}}


def _transport(handler, **cfg):
    sleeps = []
    config = BackendConfig(endpoint_url="http://llm.test/v1/chat/completions", **cfg)
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpChatTransport(config, client, sleep=sleeps.append), sleeps


def test_request_body_and_reply():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json=OK_BODY)

    t, _ = _transport(handler, seed=7, max_output_tokens=99)
    reply = t("signature", "the prompt", 0.3)
    assert reply == Reply("hello", 3, 1)
    assert seen["messages"] == [{"role": "user", "content": "the prompt"}]
    assert (seen["temperature"], seen["max_tokens"], seen["seed"]) == (0.3, 99, 7)


def test_transport_errors_retry_with_backoff():
    n = {"calls": 0}

    def handler(request):
        n["calls"] += 1
        if n["calls"] < 3:
            raise httpx.ConnectError("refused", request=request)
        return httpx.Response(200, json=OK_BODY)

    t, sleeps = _transport(handler, backoff_base=0.5)
    assert t("x", "p", 0.0).text == "hello"
    assert sleeps == [0.5, 1.0]


def test_http_status_is_not_retried():
    n = {"calls": 0}

    def handler(request):
        n["calls"] += 1
        return httpx.Response(500, text="oops")

    t, sleeps = _transport(handler)
    with pytest.raises(HttpError, match="500"):
        t("x", "p", 0.0)
    assert n["calls"] == 1 and sleeps == []


def test_malformed_body():
    t, _ = _transport(lambda r: httpx.Response(200, json={"choices": []}))
    with pytest.raises(HttpError):
        t("x", "p", 0.0)


def test_timeouts_exhaust_into_llm_timeout():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    t, sleeps = _transport(handler, max_attempts=2)
    with pytest.raises(LLMTimeout):
        t("x", "p", 0.0)
    assert len(sleeps) == 1


def test_api_key_is_sent_but_never_logged(monkeypatch, caplog):
    secret = "sk-very-secret-value"
    monkeypatch.setenv("TEST_LLM_KEY", secret)
    seen = []

    def handler(request):
        seen.append(request.headers.get("authorization"))
        if len(seen) == 1:
            raise httpx.ConnectError("refused", request=request)
        return httpx.Response(401, text=f"bad key {secret}")

    t, _ = _transport(handler, api_key_env_var="TEST_LLM_KEY")
    with caplog.at_level(logging.DEBUG):
        with pytest.raises(HttpError) as info:
            t("x", "p", 0.0)
    assert seen == [f"Bearer {secret}"] * 2
    assert secret not in str(info.value)
    assert secret not in caplog.text


def test_no_key_no_header(monkeypatch):
    monkeypatch.delenv("TEST_LLM_KEY", raising=False)
    seen = []
    t, _ = _transport(lambda r: seen.append(r.headers.get("authorization")) or httpx.Response(200, json=OK_BODY),
                      api_key_env_var="TEST_LLM_KEY")
    t("x", "p", 0.0)
    assert seen == [None]


def test_rate_limiter_spaces_requests():
    now = [0.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    rl = RateLimiter(60, clock=lambda: now[0], sleep=sleep)
    rl.acquire()
    rl.acquire()
    rl.acquire()
    assert waits == [pytest.approx(1.0), pytest.approx(1.0)]
    now[0] += 5
    rl.acquire()
    assert len(waits) == 2


def test_rate_limiter_burst():
    now = [0.0]
    waits = []
    rl = RateLimiter(30, burst=3, clock=lambda: now[0], sleep=waits.append)
    for _ in range(3):
        rl.acquire()
    assert waits == []
    rl.acquire()
    assert waits == [pytest.approx(2.0)]
