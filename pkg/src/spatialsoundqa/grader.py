"""Optional text-embedding grader over a plain HTTP JSON endpoint.

Request: ``POST {"texts": [...]}``; response: ``{"embeddings": [[...], ...]}``.
The endpoint URL and an optional ``Authorization`` header value come from
:class:`EmbeddingConfig` or the ``SSF_EMBED_ENDPOINT`` / ``SSF_EMBED_AUTH``
environment variables. Nothing else in the package needs the network.
"""

from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .metrics import EvalError, mean_average_precision


class GraderError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    endpoint: str
    auth: str | None = None
    batch_size: int = 32
    max_in_flight: int = 4
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 30.0

    @classmethod
    def from_env(cls, **overrides) -> "EmbeddingConfig":
        endpoint = overrides.pop("endpoint", None) or os.environ.get("SSF_EMBED_ENDPOINT")
        if not endpoint:
            raise GraderError("no embedding endpoint configured (set SSF_EMBED_ENDPOINT)")
        auth = overrides.pop("auth", None) or os.environ.get("SSF_EMBED_AUTH")
        return cls(endpoint, auth, **overrides)


def _post(cfg: EmbeddingConfig, texts: list[str]) -> np.ndarray:
    body = json.dumps({"texts": texts}).encode()
    headers = {"Content-Type": "application/json"}
    if cfg.auth:
        headers["Authorization"] = cfg.auth
    last = None
    for attempt in range(cfg.retries + 1):
        req = urllib.request.Request(cfg.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=cfg.timeout_s) as resp:
                payload = json.loads(resp.read())
            break
        except urllib.error.HTTPError as exc:
            last = exc
            if 400 <= exc.code < 500 and exc.code != 429:
                raise GraderError(f"embedding endpoint rejected request: HTTP {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            last = exc
        except json.JSONDecodeError as exc:
            raise GraderError("embedding endpoint returned invalid JSON") from exc
        if attempt < cfg.retries:
            time.sleep(cfg.backoff_s * 2 ** attempt)
    else:
        raise GraderError(f"embedding endpoint failed after {cfg.retries + 1} attempts: {last}")
    emb = payload.get("embeddings") if isinstance(payload, dict) else None
    try:
        arr = np.asarray(emb, dtype=float)
    except (TypeError, ValueError):
        arr = None
    if arr is None or arr.ndim != 2 or arr.shape[0] != len(texts) or not np.all(np.isfinite(arr)):
        raise GraderError("malformed embedding response")
    return arr


def embed(texts, cfg: EmbeddingConfig) -> np.ndarray:
    """Embed ``texts`` in batches with at most ``max_in_flight`` concurrent requests."""
    texts = list(texts)
    if not texts:
        return np.zeros((0, 0))
    batches = [texts[i:i + cfg.batch_size] for i in range(0, len(texts), cfg.batch_size)]
    with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
        parts = list(pool.map(lambda b: _post(cfg, b), batches))
    return np.vstack(parts)


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise GraderError("zero-length embedding")
    return (a / na) @ (b / nb).T


def embedding_grade(texts_pred, texts_true, cfg: EmbeddingConfig) -> np.ndarray:
    """Cosine similarity of each (prediction, reference) pair."""
    texts_pred, texts_true = list(texts_pred), list(texts_true)
    if len(texts_pred) != len(texts_true):
        raise GraderError("prediction and reference lists differ in length")
    vecs = embed(texts_pred + texts_true, cfg)
    p, t = vecs[:len(texts_pred)], vecs[len(texts_pred):]
    return np.array([float(cosine_rows(p[i:i + 1], t[i:i + 1])[0, 0]) for i in range(len(p))])


def soft_map(pred_sets, true_sets, cfg: EmbeddingConfig) -> float:
    """mAP where a record's score for a category is the best cosine similarity
    between the category name and any predicted item."""
    cats = sorted(set().union(*true_sets)) if true_sets else []
    if not cats:
        raise EvalError("no positives in any category")
    items = sorted(set().union(*pred_sets)) if pred_sets else []
    vecs = embed(cats + items, cfg)
    sim = cosine_rows(vecs[len(cats):], vecs[:len(cats)]) if items else np.zeros((0, len(cats)))
    pos = {c: i for i, c in enumerate(items)}
    scores = np.full((len(true_sets), len(cats)), -1.0)
    for r, ps in enumerate(pred_sets):
        if ps:
            scores[r] = sim[[pos[c] for c in ps]].max(axis=0)
    truth = np.array([[c in ts for c in cats] for ts in true_sets])
    return mean_average_precision(scores, truth)
