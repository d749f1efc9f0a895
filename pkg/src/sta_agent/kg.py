"""Knowledge-graph access: entity lookup by surface text and ontology classes per entity.

Backends return plain ``{"uri": ..., "label": ...}`` dicts. :class:`KgClient`
adds ranking, namespace filtering, an in-run cache, retries and a cap on
in-flight requests. :class:`ReplayBackend` and :class:`RecordingBackend` give
offline, deterministic runs from a JSON fixture.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol
from urllib.parse import unquote

import requests

logger = logging.getLogger(__name__)

DBPEDIA_ONTOLOGY = "http://dbpedia.org/ontology/"
DBPEDIA_RESOURCE = "http://dbpedia.org/resource/"
DEFAULT_LOOKUP_URL = "https://lookup.dbpedia.org/api/search"
DEFAULT_SPARQL_URL = "https://dbpedia.org/sparql"
FIXTURE_FORMAT = "sta-kg-fixture/1"

LOOKUP = "lookup"
CLASSES = "classes"

_WS = re.compile(r"\s+")
_TAG = re.compile(r"<[^>]+>")


class KgError(RuntimeError):
    pass


class KgUnavailable(KgError):
    """The backend kept failing after all retries."""


class KgFixtureMiss(KgError):
    """A replayed query is absent from the fixture."""

    def __init__(self, op: str, query: str, limit: int):
        super().__init__(f"KG fixture miss: op={op!r} query={query!r} limit={limit}")
        self.key = (op, query, limit)


@dataclass(frozen=True)
class CandidateEntity:
    uri: str
    label: str
    rank: int
    source_query: str


@dataclass(frozen=True)
class CandidateClass:
    uri: str
    label: str
    rank: int


def local_name(uri: str) -> str:
    tail = re.split(r"[/#]", uri.rstrip("/"))[-1]
    return unquote(tail)


def normalize_query(text: str) -> str:
    return _WS.sub(" ", text).strip()


class KgBackend(Protocol):
    def lookup(self, text: str, limit: int) -> list[dict]: ...

    def classes(self, entity_uri: str, limit: int) -> list[dict]: ...


# ---------------------------------------------------------------------------
# Live DBpedia


class DBpediaBackend:
    """DBpedia Lookup for entities, SPARQL over ``rdf:type`` for classes."""

    def __init__(
        self,
        lookup_url: Optional[str] = None,
        sparql_url: Optional[str] = None,
        *,
        namespace: str = DBPEDIA_ONTOLOGY,
        timeout: float = 15.0,
        session: Optional[requests.Session] = None,
    ):
        self.lookup_url = lookup_url or os.environ.get("STA_LOOKUP_URL", DEFAULT_LOOKUP_URL)
        self.sparql_url = sparql_url or os.environ.get("STA_SPARQL_URL", DEFAULT_SPARQL_URL)
        self.namespace = namespace
        self.timeout = timeout
        self.session = session or requests.Session()

    def lookup(self, text: str, limit: int) -> list[dict]:
        resp = self.session.get(
            self.lookup_url,
            params={"query": text, "maxResults": limit, "format": "json"},
            headers={"Accept": "application/json"},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        out = []
        for doc in resp.json().get("docs", []):
            uris = doc.get("resource") or []
            if not uris:
                continue
            labels = doc.get("label") or []
            label = _TAG.sub("", labels[0]) if labels else local_name(uris[0]).replace("_", " ")
            out.append({"uri": uris[0], "label": label})
        return out[:limit]

    def classes(self, entity_uri: str, limit: int) -> list[dict]:
        query = (
            "SELECT DISTINCT ?type WHERE { "
            f"<{entity_uri}> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> ?type . "
            f'FILTER(STRSTARTS(STR(?type), "{self.namespace}")) }} LIMIT {int(limit)}'
        )
        resp = self.session.get(
            self.sparql_url,
            params={"query": query, "format": "application/sparql-results+json"},
            headers={"Accept": "application/sparql-results+json"},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        bindings = resp.json().get("results", {}).get("bindings", [])
        return [{"uri": b["type"]["value"], "label": local_name(b["type"]["value"])} for b in bindings][:limit]


# ---------------------------------------------------------------------------
# Fixtures


@dataclass
class KgFixture:
    """Recorded ``(op, query, limit) -> response`` map."""

    calls: dict[tuple[str, str, int], list[dict]] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "KgFixture":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != FIXTURE_FORMAT:
            raise KgError(f"{path}: unsupported fixture format {payload.get('format')!r}")
        fixture = cls()
        for call in payload["calls"]:
            fixture.put(call["op"], call["query"], int(call["limit"]), call["response"])
        return fixture

    def put(self, op: str, query: str, limit: int, response: list[dict]) -> None:
        self.calls[(op, query, limit)] = [{"uri": r["uri"], "label": r.get("label", "")} for r in response]

    def get(self, op: str, query: str, limit: int) -> Optional[list[dict]]:
        exact = self.calls.get((op, query, limit))
        if exact is not None:
            return list(exact)
        # Backends return rank-ordered prefixes, so a recording made with a
        # larger limit, or one that came back short of its limit, answers too.
        for (o, q, recorded_limit), response in sorted(self.calls.items()):
            if o == op and q == query and (recorded_limit >= limit or len(response) < recorded_limit):
                return list(response[:limit])
        return None

    def to_json(self) -> str:
        calls = [
            {"limit": limit, "op": op, "query": query, "response": response}
            for (op, query, limit), response in sorted(self.calls.items())
        ]
        return json.dumps({"calls": calls, "format": FIXTURE_FORMAT}, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path: str | Path) -> None:
        atomic_write_text(Path(path), self.to_json())


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ReplayBackend:
    def __init__(self, fixture: KgFixture):
        self.fixture = fixture

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayBackend":
        return cls(KgFixture.load(path))

    def _get(self, op: str, query: str, limit: int) -> list[dict]:
        response = self.fixture.get(op, query, limit)
        if response is None:
            raise KgFixtureMiss(op, query, limit)
        return response

    def lookup(self, text: str, limit: int) -> list[dict]:
        return self._get(LOOKUP, text, limit)

    def classes(self, entity_uri: str, limit: int) -> list[dict]:
        return self._get(CLASSES, entity_uri, limit)


class RecordingBackend:
    """Wraps a live backend and records every successful response."""

    def __init__(self, inner: KgBackend, fixture: Optional[KgFixture] = None):
        self.inner = inner
        self.fixture = fixture or KgFixture()
        self._lock = threading.Lock()

    def lookup(self, text: str, limit: int) -> list[dict]:
        response = self.inner.lookup(text, limit)
        with self._lock:
            self.fixture.put(LOOKUP, text, limit, response)
        return response

    def classes(self, entity_uri: str, limit: int) -> list[dict]:
        response = self.inner.classes(entity_uri, limit)
        with self._lock:
            self.fixture.put(CLASSES, entity_uri, limit, response)
        return response


# ---------------------------------------------------------------------------
# Client


@dataclass
class KgStats:
    requests: int = 0
    backend_calls: int = 0
    cache_hits: int = 0
    retries: int = 0
    failures: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(vars(self))


class KgClient:
    """Cached, retrying front-end over a :class:`KgBackend`."""

    def __init__(
        self,
        backend: KgBackend,
        *,
        cache: bool = True,
        attempts: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        namespace: str = DBPEDIA_ONTOLOGY,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if attempts < 1:
            raise ValueError("attempts must be >= 1")
        self.backend = backend
        self.cache_enabled = cache
        self.attempts = attempts
        self.backoff = backoff
        self.namespace = namespace
        self.stats = KgStats()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._cache: dict[tuple[str, str, int], list] = {}
        self._key_locks: dict[tuple[str, str, int], threading.Lock] = {}
        self._lock = threading.Lock()

    def _call(self, op: str, query: str, limit: int) -> list[dict]:
        fn = self.backend.lookup if op == LOOKUP else self.backend.classes
        delay = self.backoff
        for attempt in range(1, self.attempts + 1):
            with self._lock:
                self.stats.backend_calls += 1
            try:
                with self._slots:
                    return fn(query, limit)
            except KgFixtureMiss:
                raise
            except Exception as exc:  # network, HTTP status, bad JSON
                if attempt == self.attempts:
                    with self._lock:
                        self.stats.failures += 1
                    raise KgUnavailable(f"{op} {query!r} failed after {attempt} attempts: {exc}") from exc
                logger.warning("KG %s %r attempt %d failed: %s; retrying in %.2fs", op, query, attempt, exc, delay)
                with self._lock:
                    self.stats.retries += 1
                self._sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")

    def _cached(self, op: str, query: str, limit: int, build: Callable[[list[dict]], list]) -> list:
        key = (op, query, limit)
        with self._lock:
            self.stats.requests += 1
            if not self.cache_enabled:
                key_lock = None
            else:
                if key in self._cache:
                    self.stats.cache_hits += 1
                    return list(self._cache[key])
                key_lock = self._key_locks.setdefault(key, threading.Lock())
        if key_lock is None:
            return build(self._call(op, query, limit))
        with key_lock:
            with self._lock:
                if key in self._cache:
                    self.stats.cache_hits += 1
                    return list(self._cache[key])
            result = build(self._call(op, query, limit))
            with self._lock:
                self._cache[key] = result
            return list(result)

    def lookup_entities(self, text: str, limit: int) -> list[CandidateEntity]:
        query = normalize_query(text)
        if not query:
            raise ValueError("lookup text is empty")
        if limit < 1:
            raise ValueError("limit must be >= 1")

        def build(raw: list[dict]) -> list[CandidateEntity]:
            seen: set[str] = set()
            out: list[CandidateEntity] = []
            for item in raw:
                uri = item.get("uri", "")
                if not uri or uri in seen:
                    continue
                seen.add(uri)
                out.append(CandidateEntity(uri, item.get("label") or local_name(uri), len(out) + 1, query))
                if len(out) == limit:
                    break
            return out

        return self._cached(LOOKUP, query, limit, build)

    def entity_classes(self, entity_uri: str, limit: int) -> list[CandidateClass]:
        if not re.match(r"^[a-zA-Z][a-zA-Z0-9+.-]*:\S+$", entity_uri):
            raise ValueError(f"malformed entity URI: {entity_uri!r}")
        if limit < 1:
            raise ValueError("limit must be >= 1")

        def build(raw: list[dict]) -> list[CandidateClass]:
            seen: set[str] = set()
            out: list[CandidateClass] = []
            for item in raw:
                uri = item.get("uri", "")
                if not uri.startswith(self.namespace) or uri in seen:
                    continue
                seen.add(uri)
                out.append(CandidateClass(uri, item.get("label") or local_name(uri), len(out) + 1))
                if len(out) == limit:
                    break
            return out

        return self._cached(CLASSES, entity_uri, limit, build)
