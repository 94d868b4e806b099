import threading

import pytest

from stepprobe.agents import Policy
from stepprobe.errors import (
    MissingFixture,
    ProviderError,
    ProviderTimeout,
    RateLimited,
    Stuck,
)
from stepprobe.gateway import (
    AgentSource,
    CachingSource,
    Completion,
    DirectoryCache,
    HttpSource,
    ModelSettings,
    ReplaySource,
    RequestMeta,
    cache_key,
)

SETTINGS = ModelSettings(model_name="probe-model")
META = RequestMeta()


class CountingSource:
    def __init__(self, text="reply"):
        self.calls = 0
        self.text = text
        self._lock = threading.Lock()

    def complete(self, prompt, settings, meta):
        with self._lock:
            self.calls += 1
        return Completion(text=self.text, model_name=settings.model_name)


def test_cache_key_depends_on_prompt_and_settings():
    base = cache_key("p", SETTINGS)
    assert base == cache_key("p", ModelSettings(model_name="probe-model"))
    assert base != cache_key("q", SETTINGS)
    assert base != cache_key("p", ModelSettings(model_name="other"))
    assert base != cache_key("p", ModelSettings(model_name="probe-model", temperature=0.7))
    assert base != cache_key(
        "p", ModelSettings(model_name="probe-model", stop_sequences=("\n\n",))
    )
    assert len(base) == 64


def test_directory_cache_round_trip(tmp_path):
    cache = DirectoryCache(tmp_path / "cache")
    assert cache.get("k" * 64) is None
    assert "k" * 64 not in cache
    cache.put("k" * 64, {"text": "hello", "model": "m"})
    assert "k" * 64 in cache
    assert cache.get("k" * 64) == {"text": "hello", "model": "m"}
    # no stray tmp files left behind
    assert list(cache.root.glob("*.tmp")) == []


def test_caching_source_hits_inner_once(tmp_path):
    inner = CountingSource()
    source = CachingSource(inner, DirectoryCache(tmp_path))
    first = source.complete("p", SETTINGS, META)
    second = source.complete("p", SETTINGS, META)
    assert inner.calls == 1
    assert not first.cached and second.cached
    assert first.text == second.text == "reply"
    source.complete("other prompt", SETTINGS, META)
    assert inner.calls == 2


def test_caching_source_dedups_concurrent_misses(tmp_path):
    inner = CountingSource()
    source = CachingSource(inner, DirectoryCache(tmp_path))
    results = []

    def work():
        results.append(source.complete("p", SETTINGS, META).text)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == ["reply"] * 8
    assert inner.calls == 1


def test_replay_source(tmp_path):
    cache = DirectoryCache(tmp_path)
    key = cache_key("p", SETTINGS)
    cache.put(key, {"text": "stored", "model": "m"})
    replay = ReplaySource(cache)
    hit = replay.complete("p", SETTINGS, META)
    assert hit.text == "stored" and hit.cached
    with pytest.raises(MissingFixture):
        replay.complete("unseen", SETTINGS, META)


def test_agent_source(worked_example):
    source = AgentSource(
        {worked_example.problem_id: worked_example},
        Policy(kind="rational"),
        seed=3,
    )
    meta = RequestMeta(problem_id=worked_example.problem_id, step=2)
    completion = source.complete("ignored", SETTINGS, meta)
    assert completion.model_name == "agent:rational"
    assert "The final answer is 11." in completion.text
    with pytest.raises(Stuck):
        source.complete("x", SETTINGS, RequestMeta())
    with pytest.raises(Stuck):
        source.complete("x", SETTINGS, RequestMeta(problem_id="nope"))


def _http(transport, **kwargs):
    sleeps = []
    source = HttpSource(
        api_base="http://probe.test/v1",
        transport=transport,
        sleep=sleeps.append,
        **kwargs,
    )
    return source, sleeps


def test_http_source_chat_success():
    seen = {}

    def transport(url, headers, payload, timeout):
        seen.update(url=url, headers=headers, payload=payload)
        return 200, {"choices": [{"message": {"content": "done"}}]}

    source, sleeps = _http(transport)
    completion = source.complete("hello", SETTINGS, META)
    assert completion.text == "done"
    assert seen["url"] == "http://probe.test/v1/chat/completions"
    assert seen["payload"]["messages"] == [{"role": "user", "content": "hello"}]
    assert seen["payload"]["model"] == "probe-model"
    assert sleeps == []


def test_http_source_completion_profile(monkeypatch):
    monkeypatch.setenv("PROBE_API_KEY", "sekrit")
    seen = {}

    def transport(url, headers, payload, timeout):
        seen.update(url=url, headers=headers, payload=payload)
        return 200, {"choices": [{"text": " out"}]}

    source, _ = _http(transport, profile="completion")
    completion = source.complete(
        "hello", ModelSettings(model_name="m", stop_sequences=("\n\n",)), META
    )
    assert completion.text == " out"
    assert seen["url"].endswith("/completions")
    assert seen["payload"]["prompt"] == "hello"
    assert seen["payload"]["stop"] == ["\n\n"]
    assert seen["headers"]["Authorization"] == "Bearer sekrit"


def test_http_source_retries_then_succeeds():
    statuses = iter([503, 429, 200])

    def transport(url, headers, payload, timeout):
        status = next(statuses)
        if status != 200:
            return status, {"error": "busy"}
        return 200, {"choices": [{"message": {"content": "ok"}}]}

    source, sleeps = _http(transport, backoff_base=0.5)
    completion = source.complete("p", SETTINGS, META)
    assert completion.text == "ok"
    # exponential backoff before every retry
    assert sleeps == [0.5, 1.0]


def test_http_source_exhausts_retries():
    def transport(url, headers, payload, timeout):
        return 429, {"error": "busy"}

    source, sleeps = _http(transport, max_retries=3)
    with pytest.raises(RateLimited):
        source.complete("p", SETTINGS, META)
    assert len(sleeps) == 3


def test_http_source_timeout_retries():
    calls = []

    def transport(url, headers, payload, timeout):
        calls.append(1)
        raise ProviderTimeout("slow")

    source, _ = _http(transport, max_retries=2)
    with pytest.raises(ProviderTimeout):
        source.complete("p", SETTINGS, META)
    assert len(calls) == 3


def test_http_source_client_error_fails_fast():
    calls = []

    def transport(url, headers, payload, timeout):
        calls.append(1)
        return 400, {"error": "bad request"}

    source, sleeps = _http(transport)
    with pytest.raises(ProviderError):
        source.complete("p", SETTINGS, META)
    assert len(calls) == 1 and sleeps == []


def test_http_source_malformed_body():
    def transport(url, headers, payload, timeout):
        return 200, {"surprise": True}

    source, _ = _http(transport)
    with pytest.raises(ProviderError):
        source.complete("p", SETTINGS, META)


def test_http_source_needs_base(monkeypatch):
    monkeypatch.delenv("PROBE_API_BASE", raising=False)
    source = HttpSource()
    with pytest.raises(ProviderError):
        source.complete("p", SETTINGS, META)
    with pytest.raises(ValueError):
        HttpSource(profile="grpc")
