"""Sample characterization scores.

Two families: learning-based scores read a trained surrogate (prediction
error norm, prediction entropy, forgetting events) and embedding-based
scores measure distances in a feature space (nearest k-means centroid,
own-class prototype). All five produce one scalar per sample where higher
means harder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Canonical method identifiers. Imported score files may carry other tags
# (e.g. "imported") but these five are what the toolkit computes.
LEARNING_METHODS = ("el2n", "uncertainty", "forgetting")
EMBEDDING_METHODS = ("selfsup", "supproto")
KNOWN_METHODS = LEARNING_METHODS + EMBEDDING_METHODS

_PROB_ATOL = 1e-5


@dataclass(frozen=True)
class ScoreVector:
    """One scalar per sample from a characterization method.

    higher_is_harder is True for every method the toolkit computes.
    """

    method: str
    values: np.ndarray
    higher_is_harder: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("score values must be a non-empty 1-D array")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite score at index {bad}")
        if self.method == "forgetting":
            if np.any(values < 0) or np.any(values != np.round(values)):
                raise ValueError("forgetting scores must be nonnegative integers")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n x k matrix of per-sample feature embeddings."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] < 1:
            raise ValueError("embeddings must be a non-empty n x k matrix with k >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("embeddings contain non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _check_prob_matrix(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"probability matrix must be 2-D, got shape {probs.shape}")
    if np.any(probs < -_PROB_ATOL):
        raise ValueError("negative probabilities rejected")
    sums = probs.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=_PROB_ATOL):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"row {bad} is not a probability distribution (sum={sums[bad]:.6g})")
    return probs


def el2n(probs: np.ndarray, labels: np.ndarray) -> ScoreVector:
    """Euclidean norm of (predicted probabilities - one-hot label) per sample."""
    probs = _check_prob_matrix(probs)
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise ValueError(
            f"labels shape {labels.shape} does not match {probs.shape[0]} probability rows"
        )
    n_classes = probs.shape[1]
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    diff = probs.copy()
    diff[np.arange(len(labels)), labels] -= 1.0
    return ScoreVector("el2n", np.linalg.norm(diff, axis=1))


def uncertainty(probs: np.ndarray) -> ScoreVector:
    """Entropy (natural log) of the class prediction probabilities."""
    probs = _check_prob_matrix(probs)
    clipped = np.clip(probs, 0.0, 1.0)
    plogp = np.where(clipped > 0.0, clipped * np.log(np.where(clipped > 0.0, clipped, 1.0)), 0.0)
    return ScoreVector("uncertainty", -plogp.sum(axis=1))


def forgetting(dynamics_log: np.ndarray) -> ScoreVector:
    """Count of learned-then-forgotten transitions per sample.

    dynamics_log is an epochs x n boolean correctness matrix. A sample that
    is never correct in any epoch gets the sentinel value epoch_count,
    placing it at the hard extreme.
    """
    log = np.asarray(dynamics_log, dtype=bool)
    if log.ndim != 2 or log.size == 0:
        raise ValueError("dynamics log must be a non-empty epochs x n matrix")
    if log.shape[0] < 2:
        raise ValueError("forgetting needs at least 2 logged epochs")
    epochs = log.shape[0]
    forgets = np.logical_and(log[:-1], ~log[1:]).sum(axis=0).astype(np.float64)
    never_learned = ~log.any(axis=0)
    forgets[never_learned] = float(epochs)
    return ScoreVector("forgetting", forgets)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    dist2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = dist2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=dist2 / total))
        centroids[j] = points[idx]
        dist2 = np.minimum(dist2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        (points**2).sum(axis=1)[:, None]
        + (centroids**2).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    return np.maximum(d2, 0.0)


def selfsup_score(
    emb: EmbeddingMatrix,
    k: int,
    seed: int,
    max_iter: int = 300,
    shift_tol: float = 1e-6,
) -> ScoreVector:
    """Distance to the nearest centroid of a seeded k-means clustering.

    Lloyd's algorithm with k-means++ initialization; stops when the largest
    centroid shift drops below shift_tol or after max_iter rounds.
    Equidistant centroids resolve to the lower centroid index.
    """
    points = emb.values
    n = points.shape[0]
    if k < 1:
        raise ValueError("cluster count k must be >= 1")
    if k > n:
        raise ValueError(f"cluster count k={k} exceeds sample count n={n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    for _ in range(max_iter):
        # argmin takes the lowest centroid index on ties
        assign = np.argmin(_sq_distances(points, centroids), axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < shift_tol:
            break
    return ScoreVector("selfsup", np.sqrt(_sq_distances(points, centroids).min(axis=1)))


def supproto_score(
    emb: EmbeddingMatrix,
    class_labels: np.ndarray,
    class_count: int | None = None,
) -> ScoreVector:
    """Distance of each sample to the mean embedding of its own class."""
    points = emb.values
    labels = np.asarray(class_labels)
    if labels.shape != (points.shape[0],):
        raise ValueError("class labels must have one entry per embedding row")
    classes = np.unique(labels) if class_count is None else np.arange(class_count)
    values = np.empty(points.shape[0], dtype=np.float64)
    for c in classes:
        members = labels == c
        if not members.any():
            raise ValueError(f"class {c} has no samples; cannot form a prototype")
        center = points[members].mean(axis=0)
        values[members] = np.linalg.norm(points[members] - center, axis=1)
    return ScoreVector("supproto", values)
