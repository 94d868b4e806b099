"""Completion sources: remote models, caches, replays, and agents.

Every source answers the same call: prompt text plus decoding settings
in, completion text out. Experiments only ever talk to this interface,
so a cached directory, a recorded fixture, a scripted agent, and a live
HTTP endpoint are interchangeable.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

from .errors import MissingFixture, ProviderError, ProviderTimeout, RateLimited, Stuck
from .model import AnyProblem
from . import agents


@dataclass(frozen=True)
class ModelSettings:
    """Decoding parameters; greedy by default, as the probes require."""

    model_name: str
    temperature: float = 0.0
    max_tokens: int = 512
    stop_sequences: tuple[str, ...] = ()
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0


@dataclass(frozen=True)
class RequestMeta:
    """Out-of-band request context.

    Remote sources ignore it; agent sources need the problem identity and
    forced step, which are not recoverable from prompt text alone. It is
    deliberately excluded from cache keys.
    """

    problem_id: str | None = None
    step: int | None = None


@dataclass(frozen=True)
class Completion:
    text: str
    model_name: str
    cached: bool = False
    raw: Mapping | None = None


class CompletionSource(Protocol):
    def complete(
        self, prompt: str, settings: ModelSettings, meta: RequestMeta
    ) -> Completion: ...


def cache_key(prompt: str, settings: ModelSettings) -> str:
    payload = {
        "prompt": prompt,
        "model": settings.model_name,
        "settings": {
            "temperature": settings.temperature,
            "max_tokens": settings.max_tokens,
            "stop_sequences": list(settings.stop_sequences),
            "frequency_penalty": settings.frequency_penalty,
            "presence_penalty": settings.presence_penalty,
        },
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class DirectoryCache:
    """One JSON file per completion, keyed by request hash."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, record: dict) -> None:
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps(record, sort_keys=True, ensure_ascii=False, indent=1),
            encoding="utf-8",
        )
        tmp.replace(path)

    def __contains__(self, key: str) -> bool:
        return self._path(key).exists()


class CachingSource:
    """Serve repeats from a directory cache; dedup concurrent misses."""

    def __init__(self, inner: CompletionSource, cache: DirectoryCache) -> None:
        self.inner = inner
        self.cache = cache
        self._registry_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def complete(
        self, prompt: str, settings: ModelSettings, meta: RequestMeta
    ) -> Completion:
        key = cache_key(prompt, settings)
        record = self.cache.get(key)
        if record is not None:
            return Completion(
                text=record["text"], model_name=record["model"], cached=True
            )
        with self._registry_lock:
            lock = self._key_locks.setdefault(key, threading.Lock())
        with lock:
            record = self.cache.get(key)
            if record is not None:
                return Completion(
                    text=record["text"], model_name=record["model"], cached=True
                )
            completion = self.inner.complete(prompt, settings, meta)
            self.cache.put(
                key,
                {
                    "key": key,
                    "model": completion.model_name,
                    "prompt": prompt,
                    "text": completion.text,
                },
            )
            return completion


class ReplaySource:
    """Answer only from an existing cache; unknown prompts are an error."""

    def __init__(self, cache: DirectoryCache) -> None:
        self.cache = cache

    def complete(
        self, prompt: str, settings: ModelSettings, meta: RequestMeta
    ) -> Completion:
        key = cache_key(prompt, settings)
        record = self.cache.get(key)
        if record is None:
            raise MissingFixture(
                f"no recorded completion for key {key} "
                f"(model {settings.model_name})"
            )
        return Completion(text=record["text"], model_name=record["model"], cached=True)


class AgentSource:
    """Complete prompts by running a scripted policy on the named problem."""

    def __init__(
        self,
        problems: Mapping[str, AnyProblem],
        policy: agents.Policy,
        seed: int = 0,
        label: str | None = None,
    ) -> None:
        self.problems = dict(problems)
        self.policy = policy
        self.seed = seed
        self.label = label or f"agent:{policy.kind}"

    def complete(
        self, prompt: str, settings: ModelSettings, meta: RequestMeta
    ) -> Completion:
        if meta.problem_id is None:
            raise Stuck("agent source needs the problem id in request meta")
        problem = self.problems.get(meta.problem_id)
        if problem is None:
            raise Stuck(f"unknown problem {meta.problem_id!r}")
        text = agents.completion_text(problem, self.policy, self.seed, meta.step)
        return Completion(text=text, model_name=self.label)


# ---------------------------------------------------------------------------
# remote HTTP access

Transport = Callable[[str, dict, dict, float], tuple[int, dict]]

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


def _requests_transport(
    url: str, headers: dict, payload: dict, timeout: float
) -> tuple[int, dict]:
    import requests

    try:
        response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise ProviderTimeout(str(exc)) from exc
    except requests.RequestException as exc:
        raise ProviderError(str(exc)) from exc
    try:
        body = response.json()
    except ValueError:
        body = {"error": response.text[:2000]}
    return response.status_code, body


@dataclass
class HttpSource:
    """OpenAI-style HTTP endpoint with retry and backoff.

    profile "chat" posts to /chat/completions with a single user message;
    profile "completion" posts raw prompt text to /completions. The base
    URL comes from api_base or the PROBE_API_BASE environment variable,
    and the bearer token from the environment variable named by
    key_env (default PROBE_API_KEY).
    """

    profile: str = "chat"
    api_base: str | None = None
    key_env: str = "PROBE_API_KEY"
    timeout: float = 120.0
    max_retries: int = 5
    backoff_base: float = 1.0
    transport: Transport = field(default=_requests_transport, repr=False)
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    def __post_init__(self) -> None:
        if self.profile not in ("chat", "completion"):
            raise ValueError(f"unknown provider profile {self.profile!r}")

    def _endpoint(self) -> str:
        base = self.api_base or os.environ.get("PROBE_API_BASE")
        if not base:
            raise ProviderError(
                "no API base configured; set PROBE_API_BASE or pass api_base"
            )
        path = "chat/completions" if self.profile == "chat" else "completions"
        return base.rstrip("/") + "/" + path

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, prompt: str, settings: ModelSettings) -> dict:
        payload: dict = {
            "model": settings.model_name,
            "temperature": settings.temperature,
            "max_tokens": settings.max_tokens,
            "frequency_penalty": settings.frequency_penalty,
            "presence_penalty": settings.presence_penalty,
        }
        if settings.stop_sequences:
            payload["stop"] = list(settings.stop_sequences)
        if self.profile == "chat":
            payload["messages"] = [{"role": "user", "content": prompt}]
        else:
            payload["prompt"] = prompt
        return payload

    def _extract_text(self, body: dict) -> str:
        try:
            choice = body["choices"][0]
            if self.profile == "chat":
                return choice["message"]["content"]
            return choice["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {body!r:.500}") from exc

    def complete(
        self, prompt: str, settings: ModelSettings, meta: RequestMeta
    ) -> Completion:
        url = self._endpoint()
        headers = self._headers()
        payload = self._payload(prompt, settings)
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                status, body = self.transport(url, headers, payload, self.timeout)
            except ProviderTimeout as exc:
                last_error = exc
                continue
            if status in _RETRYABLE_STATUS:
                last_error = (
                    RateLimited(f"status {status}: {body}", status=status)
                    if status == 429
                    else ProviderError(f"status {status}: {body}", status=status)
                )
                continue
            if status != 200:
                raise ProviderError(f"status {status}: {body}", status=status)
            return Completion(
                text=self._extract_text(body),
                model_name=settings.model_name,
                raw=body,
            )
        assert last_error is not None
        raise last_error
