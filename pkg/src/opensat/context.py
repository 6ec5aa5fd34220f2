"""Query context extraction: object of interest plus surrounding objects.

A context provider (LLM-backed or offline fixture) answers with a strict
JSON object ``{"object": str, "surroundings": [str, …]}``. The answer is
sanitized (object removed from surroundings, case-insensitive dedupe,
first n kept); if it still falls short, one repair re-prompt is issued
before giving up. Derived contexts are cached on disk keyed by
(query, n, provider identity) so repeated evaluations never re-bill the
LLM.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import ContextParseError, DeficientContext, ProviderUnavailable

logger = logging.getLogger(__name__)

DEFAULT_SURROUNDING_COUNT = 5

BASE_TEMPLATE = "a satellite photo of a {object}"
COMPOSED_TEMPLATE = "a satellite photo of {object} with a surrounding {surrounding}"
SURROUNDING_TEMPLATE = "a satellite photo of a {surrounding}"

SYSTEM_PROMPT = (
    "You identify what a user wants to find in satellite imagery. "
    "Given a query, name the single object of interest, then list objects "
    "typically visible alongside it from a satellite or aerial viewpoint. "
    'Respond with JSON only, exactly: {"object": string, "surroundings": '
    "[string, ...]}. No prose, no code fences."
)

USER_PROMPT = (
    "Query: {query}\n"
    "Extract the object of interest and exactly {n} distinct surrounding "
    "objects (none of them equal to the object of interest)."
)

REPAIR_PROMPT = (
    "Your previous answer was invalid ({reason}). Answer again for the "
    "query {query!r}: JSON only, one object of interest and exactly {n} "
    "distinct surrounding objects, none equal to the object of interest."
)


@dataclass(frozen=True)
class QueryContext:
    """Object of interest ``x`` and its n surrounding objects ``y_i``."""

    raw_query: str
    object_of_interest: str
    surroundings: tuple[str, ...]
    source: str  # llm | fixture | user_supplied

    def __post_init__(self):
        if not self.object_of_interest:
            raise ValueError("object_of_interest must be non-empty")
        if len(self.surroundings) < 1:
            raise ValueError("at least one surrounding object is required")
        if self.object_of_interest in self.surroundings:
            raise ValueError("object of interest must not appear in surroundings")
        folded = [s.casefold() for s in self.surroundings]
        if len(set(folded)) != len(folded):
            raise ValueError("surroundings must be free of duplicates")

    @property
    def n(self) -> int:
        return len(self.surroundings)


@dataclass(frozen=True)
class PromptTriple:
    base: str
    composed: str
    surrounding: str


def render_prompts(ctx: QueryContext) -> list[PromptTriple]:
    """One (base, composed, surrounding) prompt triple per surrounding object."""
    base = BASE_TEMPLATE.format(object=ctx.object_of_interest)
    return [
        PromptTriple(
            base=base,
            composed=COMPOSED_TEMPLATE.format(
                object=ctx.object_of_interest, surrounding=y
            ),
            surrounding=SURROUNDING_TEMPLATE.format(surrounding=y),
        )
        for y in ctx.surroundings
    ]


class FixtureContextProvider:
    """Offline provider backed by a JSON map of query/object -> answer."""

    source = "fixture"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        with open(self.path, "r", encoding="utf-8") as fh:
            self._entries = json.load(fh)
        if not isinstance(self._entries, dict):
            raise ContextParseError(f"fixture {path} must be a JSON object")
        self._folded = {k.casefold(): v for k, v in self._entries.items()}

    @property
    def identity(self) -> str:
        return f"fixture:{self.path}"

    def generate(self, query: str, n: int, repair_reason: str | None = None) -> dict:
        entry = self._entries.get(query) or self._folded.get(query.casefold())
        if entry is None:
            raise DeficientContext(f"fixture has no entry for query {query!r}")
        return entry


class ChatContextProvider:
    """Chat-completions client (temperature 0) for context extraction."""

    source = "llm"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_inflight: int = 2,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._gate = threading.Semaphore(max_inflight)

    @classmethod
    def from_env(cls, env=os.environ) -> "ChatContextProvider":
        endpoint = env.get("OPENSAT_LLM_ENDPOINT")
        if not endpoint:
            raise ProviderUnavailable(
                "no LLM configured: set OPENSAT_LLM_ENDPOINT or use a fixture"
            )
        return cls(
            endpoint=endpoint,
            model=env.get("OPENSAT_LLM_MODEL", "gpt-4o"),
            api_key=env.get("OPENSAT_LLM_KEY"),
        )

    @property
    def identity(self) -> str:
        return f"{self.endpoint}#{self.model}"

    def generate(self, query: str, n: int, repair_reason: str | None = None) -> dict:
        import requests

        messages = [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": USER_PROMPT.format(query=query, n=n)},
        ]
        if repair_reason:
            messages.append(
                {
                    "role": "user",
                    "content": REPAIR_PROMPT.format(
                        reason=repair_reason, query=query, n=n
                    ),
                }
            )
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            with self._gate:
                resp = requests.post(
                    self.endpoint,
                    json={"model": self.model, "messages": messages, "temperature": 0},
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"]
        except Exception as exc:
            raise ProviderUnavailable(f"LLM endpoint unreachable: {exc}") from exc
        return _parse_answer(content)


def _parse_answer(content: str) -> dict:
    text = content.strip()
    if text.startswith("```"):
        # Tolerate fenced output; the schema itself stays strict.
        text = text.strip("`")
        if text.startswith("json"):
            text = text[4:]
        text = text.strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContextParseError(f"provider answer is not JSON: {exc.msg}") from exc
    if (
        not isinstance(obj, dict)
        or not isinstance(obj.get("object"), str)
        or not isinstance(obj.get("surroundings"), list)
        or not all(isinstance(s, str) for s in obj["surroundings"])
    ):
        raise ContextParseError(
            'provider answer must match {"object": string, "surroundings": [string…]}'
        )
    return obj


def _sanitize(raw: dict, n: int) -> tuple[str, list[str]]:
    obj = str(raw.get("object", "")).strip()
    if not obj:
        raise ContextParseError("provider returned an empty object of interest")
    seen: set[str] = set()
    keep: list[str] = []
    for s in raw.get("surroundings", []):
        name = str(s).strip()
        if not name:
            continue
        folded = name.casefold()
        if folded == obj.casefold() or folded in seen:
            continue
        seen.add(folded)
        keep.append(name)
        if len(keep) == n:
            break
    return obj, keep


class ContextCache:
    """On-disk key-value cache of derived contexts (single writer)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            try:
                with open(self.path, "r", encoding="utf-8") as fh:
                    self._entries = json.load(fh)
            except (json.JSONDecodeError, OSError):
                logger.warning("ignoring unreadable context cache %s", self.path)
                self._entries = {}

    @staticmethod
    def _key(query: str, n: int, identity: str) -> str:
        return json.dumps([query, n, identity])

    def get(self, query: str, n: int, identity: str) -> QueryContext | None:
        entry = self._entries.get(self._key(query, n, identity))
        if entry is None:
            return None
        return QueryContext(
            raw_query=entry["raw_query"],
            object_of_interest=entry["object"],
            surroundings=tuple(entry["surroundings"]),
            source=entry["source"],
        )

    def put(self, query: str, n: int, identity: str, ctx: QueryContext) -> None:
        with self._lock:
            self._entries[self._key(query, n, identity)] = {
                "raw_query": ctx.raw_query,
                "object": ctx.object_of_interest,
                "surroundings": list(ctx.surroundings),
                "source": ctx.source,
            }
            tmp = self.path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(self._entries, fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, self.path)


def derive_context(
    query: str,
    n: int = DEFAULT_SURROUNDING_COUNT,
    provider=None,
    cache: ContextCache | None = None,
) -> QueryContext:
    """Extract the object of interest and n surroundings for a query.

    Sanitizes the provider answer, issues at most one repair re-prompt on
    a short or duplicate-ridden list, and raises DeficientContext if the
    answer still cannot satisfy the invariants.
    """
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    if n < 1:
        raise ValueError("surrounding count must be >= 1")
    if provider is None:
        provider = ChatContextProvider.from_env()

    if cache is not None:
        hit = cache.get(query, n, provider.identity)
        if hit is not None:
            return hit

    reason = None
    obj, surroundings = "", []
    try:
        raw = provider.generate(query, n)
        obj, surroundings = _sanitize(raw, n)
        if len(surroundings) < n:
            reason = f"only {len(surroundings)} valid surroundings, need {n}"
    except ContextParseError as exc:
        reason = str(exc)
    if reason is not None:
        # One repair attempt; a second parse failure propagates.
        logger.info("repair re-prompt for %r: %s", query, reason)
        raw = provider.generate(query, n, repair_reason=reason)
        obj, surroundings = _sanitize(raw, n)
    if len(surroundings) < n:
        raise DeficientContext(
            f"provider produced {len(surroundings)} valid surroundings for "
            f"{query!r}, need {n}"
        )

    ctx = QueryContext(
        raw_query=query,
        object_of_interest=obj,
        surroundings=tuple(surroundings),
        source=provider.source,
    )
    if cache is not None:
        cache.put(query, n, provider.identity, ctx)
    return ctx
