"""K-means codebook training with k-means++ seeding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .streams import FeatureStream, StreamError


class CodebookError(ValueError):
    pass


@dataclass
class Codebook:
    centroids: np.ndarray  # K x D, float32
    iters_run: int = 0
    seed: int = 0
    inertia_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise CodebookError("centroids must be a K x D matrix with K >= 1")
        if not np.all(np.isfinite(self.centroids)):
            raise CodebookError("non-finite centroid values")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.centroids.shape[1]

    @property
    def inertia(self) -> float:
        return self.inertia_trace[-1] if self.inertia_trace else float("nan")


def _sq_dists(frames: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Full (N, K) squared-distance matrix, float64."""
    diff = frames[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=2)


def _kmeanspp_seed(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = frames.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    d2 = ((frames - frames[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass on already-chosen points: fall back to unused indices
            unused = [i for i in range(n) if i not in set(chosen)]
            nxt = unused[int(rng.integers(len(unused)))]
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((frames - frames[nxt]) ** 2).sum(axis=1))
    return frames[chosen].copy()


def train_codebook(features: list[FeatureStream], k: int = 500, iters: int = 50,
                   seed: int = 0, tol: float = 1e-6) -> Codebook:
    """Lloyd's k-means over the concatenated frames of all streams.

    Deterministic per seed. Stops early when the relative inertia
    improvement drops below `tol`. Inertia is recorded per iteration and
    is non-increasing.
    """
    if not features:
        raise CodebookError("no feature streams given")
    dims = {s.dim for s in features}
    if len(dims) != 1:
        raise CodebookError(f"streams disagree on feature dim: {sorted(dims)}")
    frames = np.concatenate([s.frames for s in features], axis=0).astype(np.float64)
    n = frames.shape[0]
    if k < 1:
        raise CodebookError("k must be >= 1")
    if n < k:
        raise CodebookError(f"need at least k={k} frames, got {n}")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_seed(frames, k, rng)
    trace: list[float] = []
    iters_run = 0
    for it in range(iters):
        d2 = _sq_dists(frames, centroids)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assign].sum())
        trace.append(inertia)
        iters_run = it + 1
        new_centroids = centroids.copy()
        for j in range(k):
            members = frames[assign == j]
            if members.shape[0] > 0:
                new_centroids[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its assignment
                worst = int(d2[np.arange(n), assign].argmax())
                new_centroids[j] = frames[worst]
        if len(trace) >= 2 and trace[-2] > 0.0:
            if (trace[-2] - trace[-1]) / trace[-2] < tol:
                centroids = new_centroids
                break
        centroids = new_centroids
    return Codebook(centroids=centroids.astype(np.float32), iters_run=iters_run,
                    seed=seed, inertia_trace=trace)
