"""LLM transport: request/usage types, the offline stub and a chat-completion adapter."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Protocol

import requests

from sta_agent.llm import prompts

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_NUMERIC = re.compile(r"^[+-]?\d+(?:[.,]\d+)*%?$")
_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$|^\d{1,2}/\d{1,2}/\d{2,4}$")


class LlmTask(str, Enum):
    COLUMN_TOPIC = "ColumnTopic"
    CEA_SELECT = "CeaSelect"
    CTA_SELECT = "CtaSelect"
    CELL_CORRECT = "CellCorrect"


class LlmError(RuntimeError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    task: LlmTask
    prompt: str
    max_output: int = 64

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class LlmReply:
    text: str
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None


def count_tokens(text: str) -> int:
    """Rough token count (words and punctuation marks) for backends that report none."""
    return len(_TOKEN.findall(text))


class LlmBackend(Protocol):
    def complete(self, request: LlmRequest) -> LlmReply: ...


@dataclass
class TaskUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    call_count: int = 0


@dataclass
class LlmUsage:
    per_task: dict[str, TaskUsage] = field(default_factory=lambda: {t.value: TaskUsage() for t in LlmTask})

    @property
    def call_count(self) -> int:
        return sum(u.call_count for u in self.per_task.values())

    @property
    def prompt_tokens(self) -> int:
        return sum(u.prompt_tokens for u in self.per_task.values())

    @property
    def completion_tokens(self) -> int:
        return sum(u.completion_tokens for u in self.per_task.values())

    def calls(self, task: LlmTask) -> int:
        return self.per_task[task.value].call_count

    def as_dict(self) -> dict:
        return {
            "per_task": {name: vars(u).copy() for name, u in sorted(self.per_task.items())},
            "total": {
                "call_count": self.call_count,
                "completion_tokens": self.completion_tokens,
                "prompt_tokens": self.prompt_tokens,
            },
        }


class LlmClient:
    """Counts every round trip (re-asks included) per task."""

    def __init__(self, backend: LlmBackend):
        self.backend = backend
        self._usage = LlmUsage()
        self._lock = threading.Lock()

    def ask(self, request: LlmRequest) -> str:
        try:
            reply = self.backend.complete(request)
        except Exception:
            with self._lock:
                u = self._usage.per_task[request.task.value]
                u.call_count += 1
                u.prompt_tokens += count_tokens(request.prompt)
            raise
        with self._lock:
            u = self._usage.per_task[request.task.value]
            u.call_count += 1
            u.prompt_tokens += reply.prompt_tokens if reply.prompt_tokens is not None else count_tokens(request.prompt)
            u.completion_tokens += (
                reply.completion_tokens if reply.completion_tokens is not None else count_tokens(reply.text)
            )
        return reply.text

    def usage_report(self) -> LlmUsage:
        with self._lock:
            return LlmUsage({k: TaskUsage(**vars(v)) for k, v in self._usage.per_task.items()})


# ---------------------------------------------------------------------------
# Stub


def _camel(text: str) -> str:
    parts = re.split(r"[^0-9A-Za-z]+", text)
    name = "".join(p[:1].upper() + p[1:] for p in parts if p)
    return name if name[:1].isalpha() else "Thing"


class StubLlm:
    """Deterministic offline backend driven by a fixture of scripted answers.

    The answer is a pure function of the request: the prompt is parsed back into
    its fields, the first matching rule of the task wins, and unscripted
    requests fall back to default rules (option 1, echo the input).

    Fixture schema (all keys optional)::

        {
          "ColumnTopic": [{"cells": ["Ronaldo"], "answer": "Athlete"}],
          "CeaSelect":   [{"cell": "Renaldo", "row_contains": "Portugal", "answer": "<uri | label | index>"}],
          "CtaSelect":   [{"column": "Athlete", "answer": "<uri | label | index>"}],
          "CellCorrect": {"spelling": {"Lodnon": "London"}, "abbreviations": {"NYC": "New York City"}}
        }
    """

    def __init__(self, fixture: Optional[dict] = None):
        self.fixture = fixture or {}

    @classmethod
    def from_file(cls, path: str | Path) -> "StubLlm":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, request: LlmRequest) -> LlmReply:
        parsed = prompts.parse_prompt(request.prompt)
        if parsed is None or parsed.task != request.task.value:
            return LlmReply("I cannot parse this request.")
        handler = {
            LlmTask.COLUMN_TOPIC: self._topic,
            LlmTask.CEA_SELECT: self._cea,
            LlmTask.CTA_SELECT: self._cta,
            LlmTask.CELL_CORRECT: self._correct,
        }[request.task]
        return LlmReply(handler(parsed))

    def _rules(self, task: LlmTask) -> list[dict]:
        return list(self.fixture.get(task.value, []))

    @staticmethod
    def _as_option(answer: str, options: list[tuple[str, str]]) -> str:
        answer = str(answer)
        for i, (label, uri) in enumerate(options, start=1):
            if answer in (uri, label):
                return str(i)
        return answer

    def _topic(self, p: prompts.ParsedPrompt) -> str:
        cells = [str(c) for c in p.get("Cells", [])]
        for rule in self._rules(LlmTask.COLUMN_TOPIC):
            if set(rule.get("cells", [])) & set(cells):
                return str(rule["answer"])
        if cells and all(_NUMERIC.match(c) for c in cells):
            return "Number"
        if cells and all(_DATE.match(c) for c in cells):
            return "Date"
        return "Entity"

    def _cea(self, p: prompts.ParsedPrompt) -> str:
        cell = p.get("Cell", "")
        row = " ".join(str(v) for v in p.get("Row", []))
        for rule in self._rules(LlmTask.CEA_SELECT):
            if rule.get("cell") != cell:
                continue
            if "row_contains" in rule and rule["row_contains"] not in row:
                continue
            if "column" in rule and rule["column"] != p.get("Column"):
                continue
            return self._as_option(rule["answer"], p.options)
        if p.options:
            return "1"
        return str(cell).replace(" ", "_") if cell else "NONE"

    def _cta(self, p: prompts.ParsedPrompt) -> str:
        column = p.get("Column", "")
        for rule in self._rules(LlmTask.CTA_SELECT):
            if "column" in rule and rule["column"] != column:
                continue
            if "others_include" in rule and rule["others_include"] not in p.get("Other columns", []):
                continue
            return self._as_option(rule["answer"], p.options)
        if p.options:
            return "1"
        return _camel(str(column))

    def _correct(self, p: prompts.ParsedPrompt) -> str:
        table = self.fixture.get(LlmTask.CELL_CORRECT.value, {})
        spelling = table.get("spelling", {})
        abbreviations = table.get("abbreviations", {})
        out = {}
        for i, text in enumerate(p.to_check, start=1):
            if text in spelling:
                out[str(i)] = {"kind": "spell", "text": spelling[text]}
            elif text in abbreviations:
                out[str(i)] = {"kind": "abbrev", "text": abbreviations[text]}
            else:
                out[str(i)] = {"kind": "none", "text": text}
        return json.dumps(out, sort_keys=True, ensure_ascii=False)


class FailingLlm:
    """Backend whose every call raises; exercises the degradation paths."""

    def __init__(self, error: Exception | None = None):
        self.error = error or LlmError("backend unavailable")

    def complete(self, request: LlmRequest) -> LlmReply:
        raise self.error


# ---------------------------------------------------------------------------
# Live adapter


class TokenBucket:
    """Token-bucket limiter: ``rate_per_minute`` sustained, ``burst`` at once."""

    def __init__(
        self,
        rate_per_minute: float,
        burst: int = 1,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate_per_minute <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_minute / 60.0
        self.capacity = float(max(1, burst))
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
            self._last = now
            if self.tokens >= 1:
                self.tokens -= 1
                return
            wait = (1 - self.tokens) / self.rate
            self._sleep(wait)
            self._last = self._clock()
            self.tokens = 0.0


class ChatCompletionLlm:
    """OpenAI-style ``/chat/completions`` adapter; the model is a config choice."""

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key: Optional[str] = None,
        timeout: float = 60.0,
        requests_per_minute: float = 60.0,
        session: Optional[requests.Session] = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("STA_LLM_API_KEY", "")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.limiter = TokenBucket(requests_per_minute)

    def complete(self, request: LlmRequest) -> LlmReply:
        self.limiter.acquire()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_output,
            "temperature": 0,
        }
        try:
            resp = self.session.post(self.url, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"] or ""
        except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
            raise LlmError(f"chat completion failed: {exc}") from exc
        usage = payload.get("usage") or {}
        return LlmReply(text.strip(), usage.get("prompt_tokens"), usage.get("completion_tokens"))
