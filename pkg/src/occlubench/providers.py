"""HTTP clients for the external semantic and language-model providers.

Both services speak a one-POST JSON protocol:

    POST {base}/cosine   {"a": str, "b": str}                -> {"cosine": float}
    POST {base}/logprob  {"pre": str, "gt": str, "post": str}
        -> {"logp_conditional": float}
        or {"logp_full": float, "logp_context": float}

Any transport failure, bad status, malformed body, or missing field becomes
ProviderUnavailable after the retry budget is spent; callers degrade to the
offline defaults rather than crash.
"""
from __future__ import annotations

import threading
import time
import warnings
from dataclasses import dataclass

import requests

EMBED_URL_ENV = "UCSM_EMBED_URL"
LM_URL_ENV = "UCSM_LM_URL"

DEFAULT_TIMEOUT_MS = 5000
DEFAULT_MAX_RETRIES = 2
DEFAULT_MAX_INFLIGHT = 8
_BACKOFF_BASE_S = 0.05


class ProviderUnavailable(RuntimeError):
    """The provider could not produce a usable answer."""


@dataclass(frozen=True)
class ProviderEndpoint:
    base_url: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries cannot be negative")


class ProviderClient:
    """Caching JSON-over-HTTP client with retries and bounded concurrency.

    Identical requests within one client's lifetime are served from cache.
    Total wall time per call stays under (max_retries + 1) * timeout: every
    attempt's timeout is trimmed to the remaining deadline, and backoff
    sleeps draw from the same budget.
    """

    def __init__(self, endpoint: ProviderEndpoint,
                 session: requests.Session | None = None,
                 max_inflight: int = DEFAULT_MAX_INFLIGHT):
        self.endpoint = endpoint
        self._session = session or requests.Session()
        self._gate = threading.BoundedSemaphore(max_inflight)
        self._cache: dict[tuple, float] = {}
        self._cache_lock = threading.Lock()

    def _post(self, path: str, payload: dict) -> dict:
        timeout_s = self.endpoint.timeout_ms / 1000.0
        deadline = time.monotonic() + (self.endpoint.max_retries + 1) * timeout_s
        url = self.endpoint.base_url.rstrip("/") + path
        last_error = "no attempt made"
        for attempt in range(self.endpoint.max_retries + 1):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            try:
                with self._gate:
                    resp = self._session.post(url, json=payload,
                                              timeout=min(timeout_s, remaining))
                if resp.status_code != 200:
                    last_error = f"HTTP {resp.status_code}"
                else:
                    try:
                        doc = resp.json()
                    except ValueError:
                        last_error = "malformed JSON body"
                    else:
                        if isinstance(doc, dict):
                            return doc
                        last_error = "response is not a JSON object"
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            if attempt < self.endpoint.max_retries:
                pause = min(_BACKOFF_BASE_S * (2 ** attempt),
                            max(deadline - time.monotonic(), 0.0))
                if pause > 0:
                    time.sleep(pause)
        raise ProviderUnavailable(f"{url}: {last_error}")

    @staticmethod
    def _number(doc: dict, key: str) -> float:
        value = doc.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ProviderUnavailable(f"response field {key!r} missing or non-numeric")
        return float(value)

    def _cached(self, key: tuple, compute) -> float:
        with self._cache_lock:
            if key in self._cache:
                return self._cache[key]
        value = compute()
        with self._cache_lock:
            self._cache[key] = value
        return value

    def cosine(self, a: str, b: str) -> float:
        """Embedding cosine similarity of two strings, clipped to [-1, 1]."""
        def compute() -> float:
            doc = self._post("/cosine", {"a": a, "b": b})
            cos = self._number(doc, "cosine")
            if not -1.0 <= cos <= 1.0:
                warnings.warn(f"provider cosine {cos} outside [-1, 1], clipping")
                cos = min(max(cos, -1.0), 1.0)
            return cos
        return self._cached(("cosine", a, b), compute)

    def logprob(self, pre: str, gt: str, post: str) -> float:
        """Log-probability of the ground truth conditioned on its context."""
        def compute() -> float:
            doc = self._post("/logprob", {"pre": pre, "gt": gt, "post": post})
            if "logp_conditional" in doc:
                return self._number(doc, "logp_conditional")
            if "logp_full" in doc and "logp_context" in doc:
                return self._number(doc, "logp_full") - self._number(doc, "logp_context")
            raise ProviderUnavailable(
                "response carries neither logp_conditional nor logp_full/logp_context")
        return self._cached(("logprob", pre, gt, post), compute)


def fetch_cosine(endpoint: ProviderEndpoint, a: str, b: str) -> float:
    """One-shot cosine fetch (no cache reuse across calls)."""
    return ProviderClient(endpoint).cosine(a, b)


def fetch_logprob(endpoint: ProviderEndpoint, pre: str, gt: str, post: str) -> float:
    """One-shot conditional log-probability fetch."""
    return ProviderClient(endpoint).logprob(pre, gt, post)
