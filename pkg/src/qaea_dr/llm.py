"""Uniform chat-completion interface over remote and mock backends.

The remote backend speaks the least-common-denominator HTTP chat shape
({model, messages, temperature} in, first choice's message content out)
so hosted and self-served models plug in via configuration alone.

The mock backends make the whole pipeline runnable offline. The mock
generator parses the artifact's own prompt templates to recover the
input document, then produces structured output from it; routing relies
on fixed phrases in templates/v1 (the two are versioned together).
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .errors import BackendError, EmptyOutputError, TransportError, ValidationError
from .textproc import split_sentences

logger = logging.getLogger(__name__)

TASK_QAG = "qag"
TASK_EE = "ee"
TASKS = (TASK_QAG, TASK_EE)

# content the adversarial mock emits and the content-policy evaluator penalizes
ADVERSARIAL_MARKER = "UNRELATED"

_INPUT_BLOCK = re.compile(r"<<<\n(.*?)\n>>>", re.DOTALL)
_OUTPUT_BLOCK = re.compile(r"\[\[\[\n(.*?)\n\]\]\]", re.DOTALL)
_DEFINITION = re.compile(r"^\s*(.{1,80}?)\s+is\s+(.+)$", re.DOTALL)

CRITERIA = ("Relevance", "Clarity", "Consistency", "Completeness")


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    user_prompt: str
    system_prompt: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 1.0:
            raise ValidationError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValidationError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency: float
    backend_id: str


class ChatBackend(Protocol):
    backend_id: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class HttpChatBackend:
    """Client for an HTTP JSON chat-completion endpoint.

    Transient failures (transport errors, 429, 5xx) are retried with
    exponential backoff; each retry is logged with its delay so tests can
    assert the schedule. Anything else surfaces immediately.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        post_fn: Callable[[dict], tuple[int, object]] | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backend_id = f"http:{model}"
        self._post = post_fn or self._default_post

    def _default_post(self, payload: dict) -> tuple[int, object]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            self.endpoint, json=payload, headers=headers, timeout=self.timeout
        )
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        return resp.status_code, body

    def complete(self, request: ChatRequest) -> ChatResponse:
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": request.user_prompt})
        payload = {
            "model": request.model_name or self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

        started = time.perf_counter()
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_base * (2 ** (attempt - 1))
                logger.warning(
                    "chat retry %d/%d after %.2fs: %s",
                    attempt, self.max_retries, delay, last_error,
                )
                time.sleep(delay)
            try:
                status, body = self._post(payload)
            except Exception as e:
                last_error = e
                continue
            if status == 429 or status >= 500:
                last_error = BackendError(
                    f"chat endpoint returned {status}", status=status, body=str(body)
                )
                continue
            if status != 200:
                raise BackendError(
                    f"chat endpoint returned {status}", status=status, body=str(body)
                )
            text = self._extract_text(body)
            if not text:
                raise EmptyOutputError("chat endpoint returned an empty completion")
            return ChatResponse(
                text=text,
                latency=time.perf_counter() - started,
                backend_id=self.backend_id,
            )
        raise TransportError(
            f"chat request failed after {self.max_retries} retries: {last_error}"
        )

    @staticmethod
    def _extract_text(body: object) -> str:
        try:
            return body["choices"][0]["message"]["content"] or ""  # type: ignore[index]
        except (KeyError, IndexError, TypeError):
            raise BackendError(
                f"chat endpoint response missing choices[0].message.content: "
                f"{str(body)[:200]}"
            ) from None


# ---------------------------------------------------------------------------
# Mock backends
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MockProfile:
    """Behavior of the offline mock generator."""

    name: str
    malformed_probability: float = 0.0
    seed: int = 0
    regen_fixes: bool = True

    @staticmethod
    def echo_oracle() -> "MockProfile":
        return MockProfile(name="echo-oracle")

    @staticmethod
    def noisy(probability: float, seed: int = 0) -> "MockProfile":
        if not 0.0 <= probability <= 1.0:
            raise ValidationError(f"probability must be in [0, 1], got {probability}")
        return MockProfile(name="noisy", malformed_probability=probability, seed=seed)

    @staticmethod
    def adversarial_low_score(regen_fixes: bool = True) -> "MockProfile":
        return MockProfile(name="adversarial-low-score", regen_fixes=regen_fixes)


def _definition_matches(text: str) -> list[tuple[str, str, str]]:
    """(subject, predicate, full sentence) per '<subject> is <rest>' sentence."""
    out = []
    for sentence in split_sentences(text):
        m = _DEFINITION.match(sentence)
        if m:
            predicate = m.group(2).rstrip(".!?。！？").strip()
            out.append((m.group(1).strip(), predicate, sentence))
    return out


def _echo_qag(text: str) -> str:
    sentences = split_sentences(text)
    pairs = [
        [f"What is {subject}?", sentence]
        for subject, _, sentence in _definition_matches(text)
    ]
    if not pairs:
        pairs = [["What does the text describe?", sentences[0] if sentences else text]]
    return json.dumps({"factual inquiry": pairs}, ensure_ascii=False)


def _echo_ee(text: str) -> str:
    sentences = split_sentences(text)
    events = [
        {
            "event type": "Definition",
            "time": None,
            "location": None,
            "event subject": subject,
            "event object": None,
            "event": predicate,
            "impact": None,
        }
        for subject, predicate, _ in _definition_matches(text)
    ]
    if not events:
        events = [
            {
                "event type": "Statement",
                "time": None,
                "location": None,
                "event subject": None,
                "event object": None,
                "event": sentences[0] if sentences else text,
                "impact": None,
            }
        ]
    return json.dumps(events, ensure_ascii=False)


def _adversarial(task: str) -> str:
    if task == TASK_QAG:
        return json.dumps(
            {
                "factual inquiry": [
                    [
                        "What is entirely off-topic here?",
                        f"{ADVERSARIAL_MARKER} filler that ignores the input.",
                    ]
                ]
            }
        )
    return json.dumps(
        [
            {
                "event type": "Digression",
                "time": None,
                "location": None,
                "event subject": None,
                "event object": None,
                "event": f"{ADVERSARIAL_MARKER} filler that ignores the input.",
                "impact": None,
            }
        ]
    )


def mock_generate(
    document_text: str, task: str, profile: MockProfile, regenerating: bool = False
) -> str:
    """Deterministic structured output for one (input, task, profile)."""
    if task not in TASKS:
        raise ValidationError(f"task must be one of {TASKS}, got {task!r}")

    if profile.name == "adversarial-low-score":
        if regenerating and profile.regen_fixes:
            return _echo_qag(document_text) if task == TASK_QAG else _echo_ee(document_text)
        return _adversarial(task)

    well_formed = _echo_qag(document_text) if task == TASK_QAG else _echo_ee(document_text)

    if profile.name == "noisy" and not regenerating:
        digest = hashlib.blake2b(
            f"{profile.seed}|{task}|{document_text}".encode("utf-8"), digest_size=8
        ).digest()
        rng = random.Random(int.from_bytes(digest, "little"))
        if rng.random() < profile.malformed_probability:
            # drop the closing bracket and trail off, like a truncated model reply
            return "Sure, here is the JSON you asked for: " + well_formed[:-1]
    return well_formed


class MockChatBackend:
    """Offline generator: answers canned prompts verbatim, otherwise routes
    the prompt to mock_generate by recognizing which template produced it."""

    def __init__(
        self,
        profile: MockProfile | None = None,
        canned: dict[str, str] | None = None,
        backend_id: str = "mock-generator",
    ) -> None:
        self.profile = profile or MockProfile.echo_oracle()
        self.canned = dict(canned or {})
        self.backend_id = backend_id

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt = request.user_prompt
        if prompt in self.canned:
            return ChatResponse(text=self.canned[prompt], latency=0.0, backend_id=self.backend_id)
        text = self._route(prompt)
        return ChatResponse(text=text, latency=0.0, backend_id=self.backend_id)

    def _route(self, prompt: str) -> str:
        document = _extract_block(_INPUT_BLOCK, prompt)
        if "Deductions to fix:" in prompt:
            if document is None:
                raise ValidationError("regeneration prompt lacks an input block")
            task = TASK_QAG if "question-answer" in prompt else TASK_EE
            return mock_generate(document, task, self.profile, regenerating=True)
        if "question-answer pairs" in prompt:
            if document is None:
                raise ValidationError("generation prompt lacks an input block")
            return mock_generate(document, TASK_QAG, self.profile)
        if "event types" in prompt:
            if document is None:
                raise ValidationError("generation prompt lacks an input block")
            return mock_generate(document, TASK_EE, self.profile)
        raise ValidationError(
            f"mock backend cannot route prompt (no canned entry, no template match): "
            f"{prompt[:120]!r}"
        )


def _extract_block(pattern: re.Pattern, prompt: str) -> str | None:
    m = pattern.search(prompt)
    return m.group(1) if m else None


def _render_score_json(total: int) -> str:
    total = max(0, min(10, total))
    deductions = []
    remaining = 10 - total
    i = 0
    while remaining > 0:
        step = min(3, remaining)
        deductions.append(
            {
                "deduction reason": CRITERIA[i % len(CRITERIA)],
                "deduction score": step,
                "related content": "mock deduction",
            }
        )
        remaining -= step
        i += 1
    return json.dumps({"total score": total, "detail": deductions})


class MockEvaluatorBackend:
    """Offline evaluator producing Score_json verdicts.

    Policies:
      - int: constant total score.
      - sequence of ints: scripted, consumed one per call (thread-safe);
        falls back to 10 when exhausted.
      - callable(generated_output) -> int: content-sensitive scoring.
      - None: default content policy — penalize adversarial marker text.
    """

    def __init__(
        self,
        policy: int | Sequence[int] | Callable[[str], int] | None = None,
        backend_id: str = "mock-evaluator",
    ) -> None:
        self.backend_id = backend_id
        self._lock = threading.Lock()
        self._script: list[int] = []
        self._fn: Callable[[str], int]
        if policy is None:
            self._fn = self._content_policy
        elif isinstance(policy, int):
            self._fn = lambda _raw, _p=policy: _p
        elif callable(policy):
            self._fn = policy
        else:
            self._script = list(policy)
            self._fn = self._pop_script

    @staticmethod
    def _content_policy(raw: str) -> int:
        return 3 if ADVERSARIAL_MARKER in raw else 10

    def _pop_script(self, _raw: str) -> int:
        with self._lock:
            return self._script.pop(0) if self._script else 10

    def complete(self, request: ChatRequest) -> ChatResponse:
        generated = _extract_block(_OUTPUT_BLOCK, request.user_prompt)
        if generated is None:
            raise ValidationError("scoring prompt lacks a generated-output block")
        total = self._fn(generated)
        return ChatResponse(
            text=_render_score_json(total), latency=0.0, backend_id=self.backend_id
        )


@dataclass
class ScriptedBackend:
    """Returns queued texts in order; for transport-free unit tests."""

    responses: list[str] = field(default_factory=list)
    backend_id: str = "scripted"
    calls: list[str] = field(default_factory=list)

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls.append(request.user_prompt)
        if not self.responses:
            raise BackendError("scripted backend exhausted")
        return ChatResponse(
            text=self.responses.pop(0), latency=0.0, backend_id=self.backend_id
        )
