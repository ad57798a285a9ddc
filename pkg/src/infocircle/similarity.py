"""Text similarity providers.

``tf_cosine`` is offline and deterministic and is what the test-suite uses.
``embedding_api`` calls an OpenAI-style ``/v1/embeddings`` endpoint and caches
vectors by content hash, in memory and optionally on disk.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from collections import Counter
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import httpx
import numpy as np

from infocircle.core import PROVIDER_NAMES, SimilaritySpec
from infocircle.text import tokenize

logger = logging.getLogger(__name__)


class SimilarityError(RuntimeError):
    """A provider could not produce a similarity (transport or payload problem)."""


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


class SimilarityProvider:
    name = "base"

    def similarity(self, a: str, b: str) -> float:
        raise NotImplementedError

    def is_similar(self, a: str, b: str, threshold: float) -> bool:
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold {threshold} out of [0,1]")
        return self.similarity(a, b) >= threshold

    def prefetch(self, texts: Iterable[str]) -> None:
        """Hint that ``texts`` will be compared soon. No-op unless overridden."""


class TfCosine(SimilarityProvider):
    """Cosine between term-frequency vectors of normalised tokens."""

    name = "tf_cosine"

    def similarity(self, a: str, b: str) -> float:
        ta, tb = Counter(tokenize(a)), Counter(tokenize(b))
        if not ta and not tb:
            return 1.0
        if not ta or not tb:
            return 0.0
        if ta == tb:
            return 1.0
        dot = sum(c * tb[t] for t, c in ta.items() if t in tb)
        na = sum(c * c for c in ta.values())
        nb = sum(c * c for c in tb.values())
        return _clamp(dot / math.sqrt(na * nb))


class EmbeddingAPI(SimilarityProvider):
    """Cosine of embedding vectors fetched from an ``/embeddings`` endpoint."""

    name = "embedding_api"

    def __init__(
        self,
        base_url: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        *,
        cache_dir: str | Path | None = None,
        timeout: float = 30.0,
        batch_size: int = 64,
        min_interval: float = 0.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = (base_url or os.environ.get("EMBEDDING_BASE_URL") or "https://api.openai.com/v1").rstrip("/")
        self.model = model or os.environ.get("EMBEDDING_MODEL") or "text-embedding-ada-002"
        self.api_key = api_key or os.environ.get("EMBEDDING_API_KEY") or os.environ.get("OPENAI_API_KEY")
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.batch_size = batch_size
        self.min_interval = min_interval
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._last_request = 0.0
        self.requests_made = 0

    def _key(self, text: str) -> str:
        return hashlib.sha256(f"{self.model}\0{text}".encode()).hexdigest()

    def _from_disk(self, key: str) -> np.ndarray | None:
        if self.cache_dir is None:
            return None
        path = self.cache_dir / f"{key}.json"
        if not path.exists():
            return None
        return np.asarray(json.loads(path.read_text()), dtype=float)

    def _to_disk(self, key: str, vec: np.ndarray) -> None:
        if self.cache_dir is None:
            return
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        (self.cache_dir / f"{key}.json").write_text(json.dumps(vec.tolist()))

    def _request(self, texts: Sequence[str]) -> list[np.ndarray]:
        wait = self.min_interval - (time.monotonic() - self._last_request)
        if wait > 0:
            time.sleep(wait)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        logger.debug("POST %s/embeddings model=%s n=%d", self.base_url, self.model, len(texts))
        try:
            resp = self._client.post(
                f"{self.base_url}/embeddings",
                headers=headers,
                json={"model": self.model, "input": list(texts)},
            )
            resp.raise_for_status()
            payload = resp.json()
        except httpx.TimeoutException as exc:
            raise SimilarityError(f"embedding request timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise SimilarityError(f"embedding request failed: {exc}") from exc
        except ValueError as exc:
            raise SimilarityError(f"embedding response is not JSON: {exc}") from exc
        finally:
            self._last_request = time.monotonic()
            self.requests_made += 1
        try:
            rows = sorted(payload["data"], key=lambda row: row.get("index", 0))
            vectors = [np.asarray(row["embedding"], dtype=float) for row in rows]
        except (KeyError, TypeError) as exc:
            raise SimilarityError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise SimilarityError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        return vectors

    def prefetch(self, texts: Iterable[str]) -> None:
        with self._lock:
            missing: dict[str, str] = {}
            for text in texts:
                key = self._key(text)
                if key in self._cache or key in missing:
                    continue
                vec = self._from_disk(key)
                if vec is not None:
                    self._cache[key] = vec
                else:
                    missing[key] = text
            pending = list(missing.items())
            for start in range(0, len(pending), self.batch_size):
                chunk = pending[start : start + self.batch_size]
                vectors = self._request([text for _, text in chunk])
                for (key, _), vec in zip(chunk, vectors):
                    self._cache[key] = vec
                    self._to_disk(key, vec)

    def embed(self, text: str) -> np.ndarray:
        key = self._key(text)
        if key not in self._cache:
            self.prefetch([text])
        return self._cache[key]

    def similarity(self, a: str, b: str) -> float:
        if not a.strip() and not b.strip():
            return 1.0
        if not a.strip() or not b.strip():
            return 0.0
        if a == b:
            return 1.0
        self.prefetch([a, b])
        va, vb = self.embed(a), self.embed(b)
        denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
        if denom == 0.0:
            return 0.0
        return _clamp(float(va @ vb) / denom)

    def close(self) -> None:
        self._client.close()


def make_provider(spec: SimilaritySpec | str | None = None, **params: Any) -> SimilarityProvider:
    if spec is None:
        spec = SimilaritySpec()
    elif isinstance(spec, str):
        spec = SimilaritySpec(spec, params)
    merged: Mapping[str, Any] = {**spec.params, **params}
    if spec.name == "tf_cosine":
        return TfCosine()
    if spec.name == "embedding_api":
        return EmbeddingAPI(**merged)
    raise ValueError(f"unknown similarity provider {spec.name!r}; expected one of {PROVIDER_NAMES}")


_default = TfCosine()


def similarity(a: str, b: str, provider: SimilarityProvider | None = None) -> float:
    return (provider or _default).similarity(a, b)


def is_similar(a: str, b: str, threshold: float, provider: SimilarityProvider | None = None) -> bool:
    return (provider or _default).is_similar(a, b, threshold)
