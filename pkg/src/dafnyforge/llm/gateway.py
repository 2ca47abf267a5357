"""Chat-completion access with prompt templates and record/replay cassettes."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Mapping, Optional, Sequence

import httpx

from .templates import render_template

if TYPE_CHECKING:
    from ..lemmas import SpecAssessment
    from ..verifier import Diagnostic

log = logging.getLogger(__name__)


class ReplayMiss(LookupError):
    pass


class HttpError(RuntimeError):
    pass


class LLMTimeout(TimeoutError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_name: str = "generator"
    temperature: float = 0.2
    judge_temperature: float = 0.0
    max_output_tokens: int = 4096
    request_timeout: float = 120.0
    api_key_env_var: str = "DAFNYFORGE_API_KEY"
    requests_per_minute: float = 60.0
    max_attempts: int = 3
    backoff_base: float = 1.0
    # forwarded to backends that accept a sampling seed
    seed: Optional[int] = None

    def __post_init__(self):
        for t in (self.temperature, self.judge_temperature):
            if not 0.0 <= t <= 2.0:
                raise ValueError(f"temperature {t} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.request_timeout <= 0 or self.requests_per_minute <= 0 or self.max_attempts < 1:
            raise ValueError("timeouts, rate and attempts must be positive")


def request_digest(template_id: str, prompt: str, model_name: str, temperature: float) -> str:
    payload = json.dumps([template_id, prompt, model_name, float(temperature)], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Exchange:
    template_id: str
    rendered_prompt: str
    response: str
    token_counts: tuple[int, int]
    latency: float
    request_digest: str


@dataclass(frozen=True)
class Reply:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


# (template id, rendered prompt, temperature) -> reply
Transport = Callable[[str, str, float], Reply]


class CassetteMode(str, Enum):
    RECORD = "record"
    REPLAY = "replay"
    PASSTHROUGH = "passthrough"


class Cassette:
    """Line-delimited JSON records ``{digest, templateId, response}``."""

    def __init__(self, path: Path | str, mode: CassetteMode):
        self.path = Path(path)
        self.mode = CassetteMode(mode)
        self.entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.mode == CassetteMode.REPLAY:
            if not self.path.is_file():
                raise FileNotFoundError(f"replay cassette {self.path} does not exist")
            self._load()
        elif self.mode == CassetteMode.RECORD:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.is_file():
                self._load()
            # fail now rather than on the first call
            with open(self.path, "a", encoding="utf-8"):
                pass

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self.entries.setdefault(rec["digest"], rec["response"])
                except (json.JSONDecodeError, KeyError) as e:
                    raise ValueError(f"{self.path}:{n}: bad cassette record ({e})") from None

    def lookup(self, digest: str) -> Optional[str]:
        return self.entries.get(digest)

    def append(self, digest: str, template_id: str, response: str) -> None:
        line = json.dumps({"digest": digest, "templateId": template_id, "response": response},
                          ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
            self.entries.setdefault(digest, response)

    def __len__(self) -> int:
        return len(self.entries)


class RateLimiter:
    """Token bucket: ``rate`` requests per minute, bursts up to ``burst``."""

    def __init__(self, per_minute: float, burst: int = 1, clock=time.monotonic, sleep=time.sleep):
        self.interval = 60.0 / per_minute
        self.capacity = float(max(1, burst))
        self.tokens = self.capacity
        self.clock, self.sleep = clock, sleep
        self.stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self.stamp) / self.interval)
            self.stamp = now
            if self.tokens < 1.0:
                wait = (1.0 - self.tokens) * self.interval
                self.sleep(wait)
                self.stamp = self.clock()
                self.tokens = 0.0
            else:
                self.tokens -= 1.0


class HttpChatTransport:
    """POSTs ``{model, messages, temperature, max_tokens}``; reads ``choices[0].message.content``.

    Transport-level failures are retried with exponential backoff; HTTP error
    statuses and malformed bodies are not.
    """

    def __init__(self, config: BackendConfig, client: Optional[httpx.Client] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.client = client or httpx.Client(timeout=config.request_timeout)
        self.sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env_var)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def __call__(self, template_id: str, prompt: str, temperature: float) -> Reply:
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": self.config.max_output_tokens,
        }
        if self.config.seed is not None:
            body["seed"] = self.config.seed
        last: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                self.sleep(self.config.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.config.endpoint_url, json=body, headers=self._headers(),
                                        timeout=self.config.request_timeout)
            except httpx.TimeoutException as e:
                last = e
                log.warning("LLM request timed out (attempt %d/%d)", attempt + 1, self.config.max_attempts)
                continue
            except httpx.TransportError as e:
                last = e
                log.warning("LLM transport error (attempt %d/%d): %s", attempt + 1,
                            self.config.max_attempts, type(e).__name__)
                continue
            if resp.status_code >= 400:
                raise HttpError(f"endpoint returned HTTP {resp.status_code}")
            try:
                data = resp.json()
                text = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise HttpError("endpoint returned an unreadable completion") from None
            usage = data.get("usage") or {}
            return Reply(text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        if isinstance(last, httpx.TimeoutException):
            raise LLMTimeout(f"no response after {self.config.max_attempts} attempts")
        raise HttpError(f"transport failed after {self.config.max_attempts} attempts: {type(last).__name__}")


class Gateway:
    def __init__(self, config: Optional[BackendConfig] = None, transport: Optional[Transport] = None,
                 cassette: Optional[Cassette] = None):
        self.config = config or BackendConfig()
        self._transport = transport
        self.cassette = cassette
        self.limiter = RateLimiter(self.config.requests_per_minute)

    @property
    def mode(self) -> CassetteMode:
        return self.cassette.mode if self.cassette is not None else CassetteMode.PASSTHROUGH

    def record_replay_control(self, mode: CassetteMode | str, cassette_path: Path | str | None = None) -> None:
        mode = CassetteMode(mode)
        if mode == CassetteMode.PASSTHROUGH:
            self.cassette = None
            return
        if cassette_path is None:
            raise ValueError(f"{mode.value} mode needs a cassette path")
        self.cassette = Cassette(cassette_path, mode)

    @property
    def transport(self) -> Transport:
        if self._transport is None:
            self._transport = HttpChatTransport(self.config)
        return self._transport

    def exchange(self, template_id: str, variables: Mapping[str, str],
                 temperature: Optional[float] = None) -> Exchange:
        prompt = render_template(template_id, variables)
        temp = self.config.temperature if temperature is None else temperature
        digest = request_digest(template_id, prompt, self.config.model_name, temp)
        if self.mode == CassetteMode.REPLAY:
            response = self.cassette.lookup(digest)
            if response is None:
                raise ReplayMiss(f"no cassette entry for {template_id} request {digest[:12]}")
            return Exchange(template_id, prompt, response, (0, 0), 0.0, digest)
        self.limiter.acquire()
        start = time.monotonic()
        reply = self.transport(template_id, prompt, temp)
        latency = time.monotonic() - start
        if self.mode == CassetteMode.RECORD:
            self.cassette.append(digest, template_id, reply.text)
        return Exchange(template_id, prompt, reply.text, (reply.prompt_tokens, reply.completion_tokens),
                        latency, digest)

    def complete(self, template_id: str, variables: Mapping[str, str],
                 temperature: Optional[float] = None) -> str:
        return self.exchange(template_id, variables, temperature).response

    def judge_feedback(self, stage: str, artifact: str, diagnostics: Sequence["Diagnostic"],
                       assessment: Optional["SpecAssessment"] = None, problem: str = "") -> Exchange:
        if stage not in ("contract", "implementation"):
            raise ValueError(f"unknown judge stage {stage!r}")
        if not diagnostics and assessment is None:
            raise ValueError("judge needs diagnostics or an assessment")
        variables = {
            "problem": problem,
            "artifact": artifact,
            "diagnostics": format_diagnostics(diagnostics),
        }
        if stage == "contract":
            variables["assessment"] = assessment.summary() if assessment else "(not run)"
        return self.exchange(f"judge_{stage}", variables, self.config.judge_temperature)


def format_diagnostics(diagnostics: Sequence["Diagnostic"]) -> str:
    if not diagnostics:
        return "(none)"
    return "\n".join(f"- {d.format()}" for d in diagnostics)
