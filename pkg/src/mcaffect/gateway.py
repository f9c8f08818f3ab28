"""Execution of K independent stochastic scoring trials.

Providers turn a :class:`ProviderRequest` into raw response text. The remote
provider speaks the OpenAI-compatible chat-completions protocol; the mock
provider draws scores from configured per-utterance distributions so the
rest of the pipeline can be exercised offline.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx
import numpy as np

from .cache import CacheKey, ResponseCache
from .dialogue import Dialogue
from .errors import AuthError, InsufficientTrials, TransportError, TrialParseError
from .prompt import PromptAssembly, TrialResult, parse_trial

log = logging.getLogger(__name__)

API_KEY_ENV = "MCAFFECT_API_KEY"
FALLBACK_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


@dataclass(frozen=True)
class SamplerConfig:
    provider: str = "mock"
    model_name: str = "mock"
    temperature: float = 0.7
    trials: int = 20
    max_retries_per_trial: int = 3
    min_effective_trials: int = 10
    parallelism: int = 4
    timeout: float = 60.0
    base_url: str = DEFAULT_BASE_URL
    seed: int = 0
    allow_zero_temperature: bool = False
    retry_backoff: float = 0.5

    def __post_init__(self):
        if self.provider not in ("remote", "mock"):
            raise ValueError(f"provider must be 'remote' or 'mock', got {self.provider!r}")
        if not (self.temperature <= 2.0) or self.temperature < 0:
            raise ValueError(f"temperature must lie in (0, 2], got {self.temperature}")
        if self.temperature == 0:
            if not self.allow_zero_temperature:
                raise ValueError("temperature 0 makes every trial identical; pass allow_zero_temperature to force it")
            warnings.warn("sampling at temperature 0: variance estimates will be degenerate", stacklevel=3)
        if self.min_effective_trials < 2:
            raise ValueError("min_effective_trials must be >= 2 (variance needs two samples)")
        if self.trials < self.min_effective_trials:
            raise ValueError(f"trials ({self.trials}) < min_effective_trials ({self.min_effective_trials})")
        if self.max_retries_per_trial < 0:
            raise ValueError("max_retries_per_trial must be >= 0")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


# ---------------------------------------------------------------- mock spec

_Dist = tuple[tuple[float, float], ...]


def _normalize_dist(dist, where: str) -> _Dist:
    items = dist.items() if isinstance(dist, Mapping) else dist
    out = []
    for score, prob in items:
        score, prob = float(score), float(prob)
        if not (0 <= score <= 5) or (score * 2) != int(score * 2):
            raise ValueError(f"{where}: score {score} is not on the 0-5 half-point grid")
        if prob < 0 or not math.isfinite(prob):
            raise ValueError(f"{where}: negative probability {prob}")
        out.append((score, prob))
    if not out or abs(sum(p for _, p in out) - 1.0) > 1e-9:
        raise ValueError(f"{where}: probabilities must sum to 1")
    return tuple(sorted(out))


def two_point(raw_mean: float) -> _Dist:
    """Distribution on the two grid points bracketing ``raw_mean`` with that mean."""
    if not 0 <= raw_mean <= 5:
        raise ValueError(f"raw mean {raw_mean} outside [0, 5]")
    lo = math.floor(raw_mean * 2 + 1e-9) / 2
    p_hi = round((raw_mean - lo) / 0.5, 12)
    if lo >= 5 or p_hi <= 0:
        return ((lo, 1.0),)
    return ((lo, 1.0 - p_hi), (lo + 0.5, p_hi))


@dataclass(frozen=True)
class MockSpec:
    """Per-utterance score distributions for the mock provider.

    ``sampling="iid"`` draws each trial independently. ``sampling="quota"``
    assigns exactly round(p*K) trials to each score (largest remainder),
    in a seeded order, so fixture means are reproduced without sampling noise.
    """

    distributions: Mapping[int, _Dist] = field(default_factory=dict)
    default: _Dist | None = None
    sampling: str = "iid"
    malformed_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self,
            "distributions",
            {int(k): _normalize_dist(v, f"utterance {k}") for k, v in dict(self.distributions).items()},
        )
        if self.default is not None:
            object.__setattr__(self, "default", _normalize_dist(self.default, "default"))
        if self.sampling not in ("iid", "quota"):
            raise ValueError(f"sampling must be 'iid' or 'quota', got {self.sampling!r}")
        if not 0 <= self.malformed_rate < 1:
            raise ValueError("malformed_rate must lie in [0, 1)")

    def for_index(self, index: int) -> _Dist:
        dist = self.distributions.get(index, self.default)
        if dist is None:
            raise KeyError(f"mock spec has no distribution for utterance {index}")
        return dist

    @classmethod
    def from_raw_means(cls, means: Mapping[int, float], **kwargs) -> "MockSpec":
        return cls({i: two_point(m) for i, m in means.items()}, **kwargs)

    @classmethod
    def from_standardized_means(cls, means: Mapping[int, float], **kwargs) -> "MockSpec":
        return cls.from_raw_means({i: 2.5 * (1 - m) for i, m in means.items()}, **kwargs)

    def to_dict(self) -> dict:
        out = {
            "sampling": self.sampling,
            "utterances": {str(i): {str(s): p for s, p in d} for i, d in sorted(self.distributions.items())},
        }
        if self.default is not None:
            out["default"] = {str(s): p for s, p in self.default}
        if self.malformed_rate:
            out["malformed_rate"] = self.malformed_rate
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "MockSpec":
        unknown = set(data) - {"utterances", "default", "sampling", "malformed_rate"}
        if unknown:
            raise ValueError(f"unknown mock spec keys: {sorted(unknown)}")
        return cls(
            {int(k): v for k, v in (data.get("utterances") or {}).items()},
            default=data.get("default"),
            sampling=data.get("sampling", "iid"),
            malformed_rate=float(data.get("malformed_rate", 0.0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "MockSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- providers


@dataclass(frozen=True)
class ProviderRequest:
    system: str
    user: str
    model: str
    temperature: float
    trial_id: int
    attempt: int = 0


class Provider(Protocol):
    def complete(self, request: ProviderRequest) -> str: ...


def _seed_words(*parts: int) -> list[int]:
    return [int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]


def _quota(dist: _Dist, k: int) -> list[float]:
    exact = [p * k for _, p in dist]
    counts = [int(math.floor(x)) for x in exact]
    short = k - sum(counts)
    order = sorted(range(len(dist)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return [s for (s, _), c in zip(dist, counts) for _ in range(c)]


class MockProvider:
    """Deterministic stand-in for a scoring model.

    Trial ``k`` (attempt ``a``) uses a random stream derived from
    ``(seed, k, a)`` only, so the draws do not depend on execution order.
    """

    def __init__(self, spec: MockSpec, dialogue: Dialogue, seed: int = 0, trials: int = 20):
        self.spec = spec
        self.dialogue = dialogue
        self.seed = seed
        self.trials = trials
        self.calls = 0
        self._lock = threading.Lock()
        self._tables = {}
        for u in dialogue.utterances:
            dist = spec.for_index(u.index)
            scores = np.array([s for s, _ in dist])
            cum = np.cumsum([p for _, p in dist])
            cum[-1] = 1.0
            self._tables[u.index] = (scores, cum)
        self._quotas = {}
        if spec.sampling == "quota":
            for u in dialogue.utterances:
                seq = _quota(spec.for_index(u.index), trials)
                perm = np.random.default_rng(_seed_words(seed, u.index, 0x51)).permutation(len(seq))
                self._quotas[u.index] = [seq[i] for i in perm]

    def _score(self, index: int, trial_id: int, rng: np.random.Generator) -> float:
        if self.spec.sampling == "quota":
            seq = self._quotas[index]
            return seq[trial_id % len(seq)]
        scores, cum = self._tables[index]
        return float(scores[int(np.searchsorted(cum, rng.random(), side="right"))])

    def complete(self, request: ProviderRequest) -> str:
        with self._lock:
            self.calls += 1
        rng = np.random.default_rng(_seed_words(self.seed, request.trial_id, request.attempt))
        lines = [
            {"index": u.index, "speaker": u.role.value, "score": self._score(u.index, request.trial_id, rng), "text": u.text}
            for u in self.dialogue.utterances
        ]
        if self.spec.malformed_rate and rng.random() < self.spec.malformed_rate:
            lines[0]["score"] = 2.7
        return json.dumps(lines, ensure_ascii=False)


class RemoteProvider:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.transport = transport
        self.calls = 0
        self._lock = threading.Lock()
        self._client: httpx.Client | None = None

    def _get_client(self) -> httpx.Client:
        with self._lock:
            if self._client is None:
                key = self.api_key or os.getenv(API_KEY_ENV) or os.getenv(FALLBACK_API_KEY_ENV)
                if not key:
                    raise AuthError(f"no API key: set {API_KEY_ENV} (or {FALLBACK_API_KEY_ENV})")
                self._client = httpx.Client(
                    base_url=self.base_url,
                    timeout=self.timeout,
                    transport=self.transport,
                    headers={"Authorization": f"Bearer {key}"},
                )
            return self._client

    def complete(self, request: ProviderRequest) -> str:
        client = self._get_client()
        body = {
            "model": request.model,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        }
        with self._lock:
            self.calls += 1
        try:
            resp = client.post("/chat/completions", json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise TransportError("malformed chat-completions body") from None
        if not isinstance(content, str):
            raise TransportError("completion content is not text")
        return content

    def close(self) -> None:
        if self._client is not None:
            self._client.close()


# ---------------------------------------------------------------- batches


@dataclass(frozen=True)
class Provenance:
    model_name: str
    temperature: float
    content_hash: str
    rubric_hash: str
    provider: str
    seed: int | None
    timestamp: str | None = None

    def to_dict(self, canonical: bool = False) -> dict:
        out = asdict(self)
        if canonical:
            out.pop("timestamp")
        return out


@dataclass(frozen=True)
class TrialBatch:
    trials: tuple[TrialResult, ...]
    requested: int
    dropped: int
    provenance: Provenance
    error_log: tuple[dict, ...] = ()
    cache_hits: int = 0
    network_calls: int = 0

    @property
    def effective_k(self) -> int:
        return len(self.trials)

    def to_dict(self, canonical: bool = False) -> dict:
        out = {
            "provenance": self.provenance.to_dict(canonical),
            "requested": self.requested,
            "effective_k": self.effective_k,
            "dropped": self.dropped,
            "trials": [
                {"trial_id": t.trial_id, "scores": {str(ln.index): ln.score for ln in t.lines}}
                for t in self.trials
            ],
            "error_log": list(self.error_log),
        }
        if not canonical:
            out["cache_hits"] = self.cache_hits
            out["network_calls"] = self.network_calls
        return out

    def to_json(self, canonical: bool = False) -> str:
        return json.dumps(self.to_dict(canonical), sort_keys=True)


def make_provider(
    cfg: SamplerConfig, prompt: PromptAssembly, mock: MockSpec | None = None
) -> Provider:
    if cfg.provider == "mock":
        if mock is None:
            raise ValueError("mock provider needs a MockSpec")
        return MockProvider(mock, prompt.dialogue, seed=cfg.seed, trials=cfg.trials)
    return RemoteProvider(cfg.base_url, timeout=cfg.timeout)


def run_trials(
    prompt: PromptAssembly,
    cfg: SamplerConfig,
    mock: MockSpec | None = None,
    *,
    cache: ResponseCache | None = None,
    provider: Provider | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> TrialBatch:
    """Run ``cfg.trials`` independent scoring trials and collect the valid ones.

    Each trial is retried up to ``cfg.max_retries_per_trial`` times on
    transport or contract failures; a trial that never yields a valid
    response is dropped. Raises :class:`InsufficientTrials` (or
    :class:`TransportError` when every failure was a transport failure) if
    fewer than ``cfg.min_effective_trials`` trials survive, and
    :class:`AuthError` immediately on rejected credentials.
    """
    if provider is None:
        provider = make_provider(cfg, prompt, mock)
    d = prompt.dialogue
    counters = {"hits": 0, "calls": 0}
    lock = threading.Lock()

    def one(trial_id: int) -> tuple[TrialResult | None, list[dict], bool]:
        key = CacheKey(prompt.content_hash, cfg.model_name, cfg.temperature, trial_id)
        events: list[dict] = []
        transport_only = True
        if cache is not None:
            raw = cache.lookup(key)
            if raw is not None:
                with lock:
                    counters["hits"] += 1
                try:
                    return parse_trial(raw, d, trial_id), events, False
                except TrialParseError as exc:
                    # recorded outcome of an exhausted trial; replay it as dropped
                    events.append({"trial_id": trial_id, "attempt": None, "error": exc.code, "detail": str(exc)})
                    return None, events, False
        last_raw = None
        for attempt in range(cfg.max_retries_per_trial + 1):
            request = ProviderRequest(
                prompt.rubric_text, prompt.rendered_dialogue, cfg.model_name, cfg.temperature, trial_id, attempt
            )
            with lock:
                counters["calls"] += 1
            try:
                raw = provider.complete(request)
            except TransportError as exc:
                events.append({"trial_id": trial_id, "attempt": attempt, "error": "transport", "detail": str(exc)})
                if attempt < cfg.max_retries_per_trial and cfg.retry_backoff > 0:
                    sleep(cfg.retry_backoff * 2**attempt)
                continue
            try:
                result = parse_trial(raw, d, trial_id)
            except TrialParseError as exc:
                transport_only = False
                last_raw = raw
                events.append({"trial_id": trial_id, "attempt": attempt, "error": exc.code, "detail": str(exc)})
                continue
            if cache is not None:
                cache.store(key, raw)
            return result, events, False
        if cache is not None and last_raw is not None:
            cache.store(key, last_raw)
        return None, events, transport_only

    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        futures = [pool.submit(one, k) for k in range(cfg.trials)]
        try:
            outcomes = [f.result() for f in futures]
        except AuthError:
            for f in futures:
                f.cancel()
            raise

    trials = tuple(r for r, _, _ in outcomes if r is not None)
    error_log = tuple(e for _, events, _ in outcomes for e in events)
    failures = [t for r, _, t in outcomes if r is None]
    provenance = Provenance(
        model_name=cfg.model_name,
        temperature=cfg.temperature,
        content_hash=prompt.content_hash,
        rubric_hash=prompt.rubric_hash,
        provider=cfg.provider,
        seed=cfg.seed if cfg.provider == "mock" else None,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    if len(trials) < cfg.min_effective_trials:
        exc_type = TransportError if failures and all(failures) else InsufficientTrials
        raise exc_type(
            f"only {len(trials)} of {cfg.trials} trials succeeded (need {cfg.min_effective_trials})",
            list(error_log),
        )
    for e in error_log:
        log.debug("trial %s attempt %s failed: %s", e["trial_id"], e["attempt"], e["detail"])
    return TrialBatch(
        trials=trials,
        requested=cfg.trials,
        dropped=len(failures),
        provenance=provenance,
        error_log=error_log,
        cache_hits=counters["hits"],
        network_calls=counters["calls"],
    )
