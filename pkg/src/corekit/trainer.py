"""Deterministic desk-scale classifier trained by mini-batch SGD.

A softmax-linear model, optionally with one tanh hidden layer, doubles as
the surrogate that produces characterization scores and as the downstream
model trained on selected coresets. Coreset training stretches the epoch
budget to round(base_epochs / rate) so the optimization step count stays
constant across selection rates.

Checkpoint format: 8-byte magic ``CKPT\\0\\0\\0\\0``, u32 version, u32
class_count, u32 hidden_units, u32 feature_dim, u32 array count, then per
array a u32 ndim, ndim u32 dims, and the little-endian 32-bit float data.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .data_model import LabeledDataset

CHECKPOINT_MAGIC = b"CKPT\x00\x00\x00\x00"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}; training aborted")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    """SGD recipe. Defaults follow the reference recipe where it transfers
    to the desk-scale model (momentum 0.9, weight decay 0.01, batch 32);
    the learning rate is tuned for the linear model."""

    base_epochs: int = 20
    selection_rate: float = 1.0
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    weight_decay: float = 0.01
    hidden_units: int = 0
    seed: int = 0
    record_dynamics: bool = False

    def __post_init__(self):
        if self.base_epochs < 1:
            raise ValueError(f"base_epochs must be >= 1, got {self.base_epochs}")
        if not (0.0 < self.selection_rate <= 1.0):
            raise ValueError(f"selection_rate must lie in (0, 1], got {self.selection_rate}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.hidden_units < 0:
            raise ValueError(f"hidden_units must be >= 0, got {self.hidden_units}")


def scaled_epochs(base_epochs: int, rate: float) -> int:
    """Epochs for a coreset at the given selection rate: round(N / rate)."""
    if rate <= 0 or rate > 1:
        raise ValueError(f"selection rate must lie in (0, 1], got {rate}")
    if rate == 1.0:
        return int(base_epochs)
    return int(round(base_epochs / rate))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _init_weights(d: int, n_classes: int, hidden: int, rng: np.random.Generator):
    if hidden == 0:
        return [np.zeros((d, n_classes)), np.zeros(n_classes)]
    w1 = rng.standard_normal((d, hidden)) / np.sqrt(d)
    w2 = rng.standard_normal((hidden, n_classes)) / np.sqrt(hidden)
    return [w1, np.zeros(hidden), w2, np.zeros(n_classes)]


def _forward(weights, features: np.ndarray):
    """Returns (logits, hidden activations or None)."""
    if len(weights) == 2:
        w, b = weights
        return features @ w + b, None
    w1, b1, w2, b2 = weights
    hidden = np.tanh(features @ w1 + b1)
    return hidden @ w2 + b2, hidden


def loss_value(weights, features, labels, weight_decay: float = 0.0) -> float:
    """Mean cross-entropy plus 0.5 * weight_decay * squared parameter norm."""
    logits, _ = _forward(weights, features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    ce = -log_probs[np.arange(len(labels)), labels].mean()
    reg = 0.5 * weight_decay * sum(float((w**2).sum()) for w in weights)
    return float(ce + reg)


def loss_gradients(weights, features, labels, weight_decay: float = 0.0):
    """Analytic gradients of :func:`loss_value` with respect to each array."""
    logits, hidden = _forward(weights, features)
    probs = softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dlogits /= len(labels)
    if len(weights) == 2:
        w, b = weights
        return [features.T @ dlogits + weight_decay * w, dlogits.sum(axis=0) + weight_decay * b]
    w1, b1, w2, b2 = weights
    g_w2 = hidden.T @ dlogits + weight_decay * w2
    g_b2 = dlogits.sum(axis=0) + weight_decay * b2
    dhidden = (dlogits @ w2.T) * (1.0 - hidden**2)
    g_w1 = features.T @ dhidden + weight_decay * w1
    g_b1 = dhidden.sum(axis=0) + weight_decay * b1
    return [g_w1, g_b1, g_w2, g_b2]


@dataclass(frozen=True)
class TrainedModel:
    """Weights plus, when recorded, the per-epoch per-sample correctness log.

    The dynamics log has one row per completed epoch and one column per
    training-subset sample (in subset order); samples outside the subset
    are not logged.
    """

    weights: tuple
    class_count: int
    hidden_units: int
    feature_dim: int
    dynamics_log: np.ndarray | None = None
    subset_indices: np.ndarray | None = None

    def _check_features(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.feature_dim:
            raise ValueError(
                f"feature matrix must be n x {self.feature_dim}, got shape {features.shape}"
            )
        return features

    def predict_logits(self, features) -> np.ndarray:
        logits, _ = _forward(list(self.weights), self._check_features(features))
        return logits

    def predict_proba(self, features) -> np.ndarray:
        return softmax(self.predict_logits(features))

    def predict(self, features) -> np.ndarray:
        return np.argmax(self.predict_logits(features), axis=1)

    def penultimate(self, features) -> np.ndarray:
        """Hidden-layer activations, or the raw features for a linear model."""
        features = self._check_features(features)
        if self.hidden_units == 0:
            return features
        _, hidden = _forward(list(self.weights), features)
        return hidden


def _resolve_subset(ds: LabeledDataset, subset) -> np.ndarray:
    if subset is None:
        return np.arange(ds.n, dtype=np.int64)
    indices = getattr(subset, "indices", subset)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("training subset is empty")
    if idx.min() < 0 or idx.max() >= ds.n:
        raise ValueError("training subset contains out-of-range indices")
    if len(np.unique(idx)) != idx.size:
        raise ValueError("training subset contains duplicate indices")
    return idx


def train(ds: LabeledDataset, subset, cfg: TrainConfig) -> TrainedModel:
    """Mini-batch SGD with momentum and L2 weight decay on cross-entropy.

    Runs scaled_epochs(base_epochs, selection_rate) epochs over the subset
    (or the whole dataset when subset is None) with a seeded shuffle per
    epoch; the last partial batch is kept. Deterministic given
    (ds, subset, cfg).
    """
    idx = _resolve_subset(ds, subset)
    features = ds.features[idx]
    labels = ds.class_labels[idx]
    m = idx.size
    epochs = scaled_epochs(cfg.base_epochs, cfg.selection_rate)
    rng = np.random.default_rng(cfg.seed)
    weights = _init_weights(ds.d, ds.class_count, cfg.hidden_units, rng)
    velocity = [np.zeros_like(w) for w in weights]
    dynamics = np.zeros((epochs, m), dtype=bool) if cfg.record_dynamics else None

    for epoch in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            # overflow in a diverging run is caught by the finiteness check
            with np.errstate(over="ignore", invalid="ignore"):
                grads = loss_gradients(weights, features[batch], labels[batch], cfg.weight_decay)
                if not all(np.all(np.isfinite(g)) for g in grads):
                    raise TrainingDiverged(epoch)
                for w, v, g in zip(weights, velocity, grads):
                    v *= cfg.momentum
                    v += g
                    w -= cfg.learning_rate * v
        if dynamics is not None:
            logits, _ = _forward(weights, features)
            dynamics[epoch] = np.argmax(logits, axis=1) == labels

    final_logits, _ = _forward(weights, features)
    if not np.all(np.isfinite(final_logits)):
        raise TrainingDiverged(epochs - 1)
    return TrainedModel(
        weights=tuple(w.copy() for w in weights),
        class_count=ds.class_count,
        hidden_units=cfg.hidden_units,
        feature_dim=ds.d,
        dynamics_log=dynamics,
        subset_indices=idx,
    )


# -- checkpoint and dynamics files ---------------------------------------


def save_checkpoint(path, model: TrainedModel) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<IIIII",
                CHECKPOINT_VERSION,
                model.class_count,
                model.hidden_units,
                model.feature_dim,
                len(model.weights),
            )
        )
        for w in model.weights:
            arr = np.ascontiguousarray(w, dtype="<f4")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> TrainedModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic; not a corekit checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    version, class_count, hidden, dim, n_arrays = struct.unpack_from("<IIIII", blob, offset)
    offset += 20
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    weights = []
    for _ in range(n_arrays):
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        weights.append(arr.astype(np.float64).reshape(shape))
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    return TrainedModel(
        weights=tuple(weights),
        class_count=class_count,
        hidden_units=hidden,
        feature_dim=dim,
    )


def save_dynamics_csv(path, model: TrainedModel) -> None:
    """Emit the correctness log as rows of ``epoch,sample_id,correct``."""
    if model.dynamics_log is None or model.subset_indices is None:
        raise ValueError("model was trained without record_dynamics")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "sample_id", "correct"])
        for epoch in range(model.dynamics_log.shape[0]):
            row = model.dynamics_log[epoch]
            for col, sample_id in enumerate(model.subset_indices):
                writer.writerow([epoch, int(sample_id), int(row[col])])


def load_dynamics_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dynamics CSV back into (epochs x m correctness, sample ids)."""
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "sample_id", "correct"]:
            raise ValueError(f"{path}: malformed dynamics header {header}")
        records = [(int(e), int(s), int(c)) for e, s, c in reader]
    if not records:
        raise ValueError(f"{path}: dynamics file has no rows")
    epochs = max(r[0] for r in records) + 1
    sample_ids = sorted({r[1] for r in records})
    col = {s: j for j, s in enumerate(sample_ids)}
    log = np.zeros((epochs, len(sample_ids)), dtype=bool)
    seen = np.zeros((epochs, len(sample_ids)), dtype=bool)
    for e, s, c in records:
        log[e, col[s]] = bool(c)
        seen[e, col[s]] = True
    if not seen.all():
        raise ValueError(f"{path}: dynamics log has missing (epoch, sample) entries")
    return log, np.asarray(sample_ids, dtype=np.int64)
