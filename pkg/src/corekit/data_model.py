"""Datasets, group tables, and the synthetic spurious-correlation generator.

Also owns every on-disk format the toolkit reads or writes:

* SSF v1 score file: 8-byte magic ``SSFv1\\0\\0\\0``, unsigned 32-bit
  little-endian sample count n, then n little-endian 32-bit floats.
* EMB v1 embedding file: magic ``EMBv1\\0\\0\\0``, u32 n, u32 dim, then
  n*dim little-endian 32-bit floats in row-major order.
* Dataset CSV: header ``id,class,attr,f0,...,f{d-1}`` with ids contiguous
  from 0 to n-1.

Sample order is canonical (generation/file order); every downstream index
refers to it.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .characterize import EmbeddingMatrix, ScoreVector

SSF_MAGIC = b"SSFv1\x00\x00\x00"
EMB_MAGIC = b"EMBv1\x00\x00\x00"


class GroupKey(NamedTuple):
    """A (class label, spurious-attribute label) pair naming one group."""

    class_label: int
    attr_label: int


def _as_label_array(values, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{what} must be 1-D")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.asarray(arr, dtype=np.int64)
        if not np.all(rounded == arr):
            raise ValueError(f"{what} must be integers")
        arr = rounded
    return arr.astype(np.int64)


@dataclass(frozen=True)
class LabeledDataset:
    """Samples with features, class labels, and spurious-attribute labels.

    Immutable after construction; class_count / attr_count may declare
    labels that never occur (e.g. a test split missing a group), otherwise
    every label value in [0, count) must be present.
    """

    features: np.ndarray
    class_labels: np.ndarray
    attr_labels: np.ndarray
    class_count: int
    attr_count: int
    name: str = "dataset"

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("features must be a non-empty n x d matrix")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        class_labels = _as_label_array(self.class_labels, "class labels")
        attr_labels = _as_label_array(self.attr_labels, "attribute labels")
        n = features.shape[0]
        if class_labels.shape[0] != n or attr_labels.shape[0] != n:
            raise ValueError(
                f"per-sample arrays disagree on length: features {n}, "
                f"class labels {class_labels.shape[0]}, attribute labels {attr_labels.shape[0]}"
            )
        for labels, count, what in (
            (class_labels, self.class_count, "class"),
            (attr_labels, self.attr_count, "attribute"),
        ):
            if count < 1:
                raise ValueError(f"{what} count must be >= 1, got {count}")
            if labels.min() < 0 or labels.max() >= count:
                raise ValueError(f"{what} labels must lie in [0, {count})")
        for arr in (features, class_labels, attr_labels):
            arr.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "class_labels", class_labels)
        object.__setattr__(self, "attr_labels", attr_labels)

    @classmethod
    def build(
        cls,
        features,
        class_labels,
        attr_labels,
        class_count: int | None = None,
        attr_count: int | None = None,
        name: str = "dataset",
    ) -> "LabeledDataset":
        """Construct a dataset, inferring label counts when not declared.

        Inferred counts require every label in [0, max] to be present;
        sparse label spaces must declare their counts explicitly.
        """
        cl = _as_label_array(class_labels, "class labels")
        al = _as_label_array(attr_labels, "attribute labels")
        if class_count is None:
            class_count = int(cl.max()) + 1
            if len(np.unique(cl)) != class_count:
                raise ValueError(
                    "class labels have gaps; declare class_count explicitly"
                )
        if attr_count is None:
            attr_count = int(al.max()) + 1
            if len(np.unique(al)) != attr_count:
                raise ValueError(
                    "attribute labels have gaps; declare attr_count explicitly"
                )
        return cls(features, cl, al, class_count, attr_count, name)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class GroupTable:
    """Per-group sample counts over the full class x attribute label space."""

    counts: Mapping[GroupKey, int]

    def __post_init__(self):
        counts = {}
        for key, value in self.counts.items():
            if len(key) != 2:
                raise ValueError(f"group key {key!r} is not a (class, attr) pair")
            if value < 0:
                raise ValueError(f"group {key} has negative count {value}")
            counts[GroupKey(int(key[0]), int(key[1]))] = int(value)
        if not counts:
            raise ValueError("group table must contain at least one group")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def class_totals(self) -> dict[int, int]:
        totals: dict[int, int] = {}
        for key, count in self.counts.items():
            totals[key.class_label] = totals.get(key.class_label, 0) + count
        return totals

    def attr_totals(self) -> dict[int, int]:
        totals: dict[int, int] = {}
        for key, count in self.counts.items():
            totals[key.attr_label] = totals.get(key.attr_label, 0) + count
        return totals

    def proportions(self) -> dict[GroupKey, float]:
        total = self.total
        if total == 0:
            raise ValueError("group table is empty")
        return {key: count / total for key, count in self.counts.items()}


def group_table(ds: LabeledDataset, indices: Iterable[int] | None = None) -> GroupTable:
    """Count samples per (class, attribute) group, keeping zero-count groups.

    With `indices`, counts only that subset (e.g. a coreset) while still
    covering the dataset's full label space.
    """
    if indices is None:
        cl, al = ds.class_labels, ds.attr_labels
    else:
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= ds.n):
            raise ValueError("subset indices out of range")
        cl, al = ds.class_labels[idx], ds.attr_labels[idx]
    counts = {
        GroupKey(y, a): 0 for y in range(ds.class_count) for a in range(ds.attr_count)
    }
    keys, freq = np.unique(np.stack([cl, al], axis=1), axis=0, return_counts=True)
    for (y, a), c in zip(keys, freq):
        counts[GroupKey(int(y), int(a))] = int(c)
    return GroupTable(counts)


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic spurious-correlation generator settings.

    Every class has one aligned attribute (attribute count equals class
    count). Features carry the class signal along one fixed direction and
    the attribute signal along an orthogonal one; spur_sep > core_sep makes
    the spurious cue the larger-margin, easier feature.
    """

    n: int
    d: int
    class_count: int
    rho: float
    core_sep: float = 1.0
    spur_sep: float = 2.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"sample count must be >= 1, got {self.n}")
        if self.d < 2:
            raise ValueError(f"dimensionality must be >= 2, got {self.d}")
        if self.class_count < 2:
            raise ValueError(f"class count must be >= 2, got {self.class_count}")
        if self.class_count > 2 and self.d < 2 * self.class_count:
            raise ValueError(
                f"dimensionality {self.d} too small for {self.class_count} classes; "
                f"need d >= {2 * self.class_count}"
            )
        lo = 1.0 / self.class_count
        if not (lo <= self.rho <= 1.0):
            raise ValueError(
                f"rho must lie in [1/{self.class_count}, 1] = [{lo:.6g}, 1], got {self.rho}"
            )
        if self.core_sep <= 0:
            raise ValueError(f"core_sep must be > 0, got {self.core_sep}")
        if self.spur_sep <= 0:
            raise ValueError(f"spur_sep must be > 0, got {self.spur_sep}")
        if self.noise_sigma <= 0:
            raise ValueError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if self.spur_sep <= self.core_sep:
            raise ValueError(
                f"spur_sep ({self.spur_sep}) must exceed core_sep ({self.core_sep}) "
                "so the spurious cue is the easier feature"
            )


def generate_synthetic(cfg: SynthConfig, name: str = "synth") -> LabeledDataset:
    """Draw a dataset whose attribute matches the class with probability rho.

    Classes are uniform; a misaligned sample's attribute is uniform over the
    remaining attributes. Class and attribute signals live on orthogonal
    unit directions (signed first two coordinates for the two-class case,
    disjoint basis vectors otherwise); all other coordinates are pure
    Gaussian noise. Deterministic given the seed.
    """
    rng = np.random.default_rng(cfg.seed)
    n, n_classes = cfg.n, cfg.class_count
    y = rng.integers(0, n_classes, size=n)
    aligned = rng.random(n) < cfg.rho
    shift = rng.integers(1, n_classes, size=n)
    a = np.where(aligned, y, (y + shift) % n_classes)
    features = cfg.noise_sigma * rng.standard_normal((n, cfg.d))
    if n_classes == 2:
        features[:, 0] += cfg.core_sep * np.where(y == 0, 1.0, -1.0)
        features[:, 1] += cfg.spur_sep * np.where(a == 0, 1.0, -1.0)
    else:
        features[np.arange(n), y] += cfg.core_sep
        features[np.arange(n), n_classes + a] += cfg.spur_sep
    return LabeledDataset(
        features, y, a, class_count=n_classes, attr_count=n_classes, name=name
    )


# -- SSF v1 score files -------------------------------------------------


def save_scores(path, scores: ScoreVector) -> None:
    values = np.asarray(scores.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(SSF_MAGIC)
        fh.write(struct.pack("<I", values.size))
        fh.write(values.tobytes())


def load_scores(path, method: str = "imported") -> ScoreVector:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(SSF_MAGIC) + 4 or blob[: len(SSF_MAGIC)] != SSF_MAGIC:
        raise ValueError(f"{path}: bad magic; not an SSF v1 score file")
    (n,) = struct.unpack_from("<I", blob, len(SSF_MAGIC))
    payload = blob[len(SSF_MAGIC) + 4 :]
    if len(payload) != 4 * n:
        raise ValueError(
            f"{path}: length mismatch; header declares {n} records "
            f"but file holds {len(payload) // 4}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ValueError(f"{path}: non-finite score at record {int(bad[0])}")
    return ScoreVector(method, values)


# -- EMB v1 embedding files ---------------------------------------------


def save_embeddings(path, emb: EmbeddingMatrix) -> None:
    values = np.ascontiguousarray(emb.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", values.shape[0], values.shape[1]))
        fh.write(values.tobytes())


def load_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(EMB_MAGIC) + 8 or blob[: len(EMB_MAGIC)] != EMB_MAGIC:
        raise ValueError(f"{path}: bad magic; not an EMB v1 embedding file")
    n, dim = struct.unpack_from("<II", blob, len(EMB_MAGIC))
    payload = blob[len(EMB_MAGIC) + 8 :]
    if len(payload) != 4 * n * dim:
        raise ValueError(
            f"{path}: length mismatch; header declares {n}x{dim} "
            f"but file holds {len(payload) // 4} floats"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(n, dim)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise ValueError(f"{path}: non-finite embedding at record {bad}")
    return EmbeddingMatrix(values)


# -- dataset CSV ---------------------------------------------------------


def save_dataset_csv(path, ds: LabeledDataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class", "attr"] + [f"f{j}" for j in range(ds.d)])
        for i in range(ds.n):
            writer.writerow(
                [i, int(ds.class_labels[i]), int(ds.attr_labels[i])]
                + [repr(float(v)) for v in ds.features[i]]
            )


def load_dataset_csv(
    path,
    class_count: int | None = None,
    attr_count: int | None = None,
    name: str | None = None,
) -> LabeledDataset:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty dataset file") from None
        if header[:3] != ["id", "class", "attr"] or any(
            col != f"f{j}" for j, col in enumerate(header[3:])
        ):
            raise ValueError(f"{path}: malformed header {header[:6]}...")
        d = len(header) - 3
        if d < 1:
            raise ValueError(f"{path}: no feature columns")
        ids, classes, attrs, rows = [], [], [], []
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{path}: row {len(ids)} has {len(row)} fields")
            ids.append(int(row[0]))
            classes.append(int(row[1]))
            attrs.append(int(row[2]))
            rows.append([float(v) for v in row[3:]])
    if not ids:
        raise ValueError(f"{path}: dataset file has no samples")
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: ids must be contiguous 0..{len(ids) - 1}")
    features = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        bad = int(np.flatnonzero(~np.isfinite(features).all(axis=1))[0])
        raise ValueError(f"{path}: non-finite feature at sample {bad}")
    return LabeledDataset.build(
        features,
        classes,
        attrs,
        class_count=class_count,
        attr_count=attr_count,
        name=name if name is not None else str(path),
    )
