"""Bias quantification and group-robustness evaluation.

The dependency of an attribute a on a class y is the ratio of the
within-class attribute frequency to its marginal frequency, computed from
raw counts with no smoothing. The dataset bias level is the maximum of
that ratio over all populated (class, attribute) pairs; a pair is
bias-aligning when the ratio exceeds 1 and bias-conflicting when it is
below 1 (exactly 1 is neither, and counts as non-conflicting).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .characterize import ScoreVector
from .data_model import GroupKey, GroupTable, LabeledDataset


@dataclass(frozen=True)
class BiasReport:
    """Per-group dependency ratios plus the aligning/conflicting split."""

    dependency: Mapping[GroupKey, float]
    bias_level: float
    aligning_groups: frozenset
    conflicting_groups: frozenset

    def neutral_groups(self) -> frozenset:
        return frozenset(
            g for g, b in self.dependency.items() if b == 1.0
        )

    def summary(self) -> str:
        lines = [f"bias level              {self.bias_level:.4f}"]
        for key in sorted(self.dependency):
            if key in self.aligning_groups:
                tag = "aligning"
            elif key in self.conflicting_groups:
                tag = "conflicting"
            else:
                tag = "neutral"
            lines.append(
                f"  group (y={key.class_label}, a={key.attr_label})"
                f"  B={self.dependency[key]:.4f}  {tag}"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class EvalReport:
    """Group accuracies with the worst-group and train-weighted summaries."""

    group_accuracy: Mapping[GroupKey, float]
    worst_group_accuracy: float
    weighted_average_accuracy: float
    train_group_weights: Mapping[GroupKey, float]
    warnings: tuple = ()

    def summary(self) -> str:
        lines = [
            f"worst-group accuracy    {self.worst_group_accuracy:.4f}",
            f"weighted avg accuracy   {self.weighted_average_accuracy:.4f}",
        ]
        for key in sorted(self.group_accuracy):
            lines.append(
                f"  group (y={key.class_label}, a={key.attr_label})"
                f"  acc={self.group_accuracy[key]:.4f}"
                f"  train weight={self.train_group_weights.get(key, 0.0):.4f}"
            )
        lines.extend(f"  warning: {w}" for w in self.warnings)
        return "\n".join(lines)


def bias_level(table: GroupTable) -> BiasReport:
    """Dependency ratio per (class, attribute) pair and its maximum.

    Each ratio is computed as count(y,a) * total / (count(y) * count(a)),
    a single division so exact count fixtures stay exact. Classes or
    attributes with zero marginal count contribute no pairs.
    """
    total = table.total
    if total == 0:
        raise ValueError("cannot compute bias level of an empty group table")
    class_totals = table.class_totals()
    attr_totals = table.attr_totals()
    dependency: dict[GroupKey, float] = {}
    for key, count in table.counts.items():
        cy = class_totals[key.class_label]
        ca = attr_totals[key.attr_label]
        if cy == 0 or ca == 0:
            continue
        dependency[key] = (count * total) / (cy * ca)
    if not dependency:
        raise ValueError("group table has no populated class/attribute pair")
    return BiasReport(
        dependency=dependency,
        bias_level=max(dependency.values()),
        aligning_groups=frozenset(g for g, b in dependency.items() if b > 1.0),
        conflicting_groups=frozenset(g for g, b in dependency.items() if b < 1.0),
    )


def label_alignment(report: BiasReport, ds: LabeledDataset) -> np.ndarray:
    """Per-sample bias-conflicting flags (dependency of the sample's group < 1).

    Samples whose group sits exactly at dependency 1 count as
    non-conflicting; use :func:`neutral_mask` to exclude them from an AP
    population instead.
    """
    flags = np.zeros(ds.n, dtype=bool)
    for i in range(ds.n):
        key = GroupKey(int(ds.class_labels[i]), int(ds.attr_labels[i]))
        if key not in report.dependency:
            raise ValueError(f"sample {i} belongs to group {tuple(key)} with no computed dependency")
        flags[i] = key in report.conflicting_groups
    return flags


def neutral_mask(report: BiasReport, ds: LabeledDataset) -> np.ndarray:
    """True for samples whose group has dependency exactly 1 (neither side)."""
    neutral = report.neutral_groups()
    flags = np.zeros(ds.n, dtype=bool)
    for i in range(ds.n):
        key = GroupKey(int(ds.class_labels[i]), int(ds.attr_labels[i]))
        flags[i] = key in neutral
    return flags


def group_eval(model_or_predictions, test_ds: LabeledDataset, train_table: GroupTable) -> EvalReport:
    """Per-group accuracies, their minimum, and the train-weighted average.

    Accepts a trained model (anything with predict_proba) or a vector of
    predicted labels. The weighted average re-weights group accuracies by
    the group proportions of the original train set, restricted and
    renormalized to the groups present in the test set. Train groups that
    are empty in the test set are excluded from both the minimum and the
    weights, with a warning recorded.
    """
    if hasattr(model_or_predictions, "predict_proba"):
        probs = model_or_predictions.predict_proba(test_ds.features)
        predictions = np.argmax(probs, axis=1)
    else:
        predictions = np.asarray(model_or_predictions)
        if predictions.shape != (test_ds.n,):
            raise ValueError(
                f"predictions must have one entry per test sample, got shape {predictions.shape}"
            )
    if train_table.total == 0:
        raise ValueError("train group table is empty")
    correct = predictions == test_ds.class_labels

    accuracy: dict[GroupKey, float] = {}
    present: list[GroupKey] = []
    for key in sorted(set(zip(test_ds.class_labels.tolist(), test_ds.attr_labels.tolist()))):
        gk = GroupKey(int(key[0]), int(key[1]))
        members = (test_ds.class_labels == gk.class_label) & (test_ds.attr_labels == gk.attr_label)
        accuracy[gk] = float(correct[members].mean())
        present.append(gk)

    warnings = []
    for key, count in sorted(train_table.counts.items()):
        if count > 0 and key not in accuracy:
            warnings.append(
                f"group (y={key.class_label}, a={key.attr_label}) has no test samples; "
                "excluded from worst-group and weights"
            )

    train_total = train_table.total
    raw_weights = {key: train_table.counts.get(key, 0) / train_total for key in present}
    weight_sum = sum(raw_weights.values())
    if weight_sum > 0:
        weights = {key: w / weight_sum for key, w in raw_weights.items()}
    else:
        # no overlap between train and test groups: fall back to test proportions
        weights = {
            key: float(
                (
                    (test_ds.class_labels == key.class_label)
                    & (test_ds.attr_labels == key.attr_label)
                ).mean()
            )
            for key in present
        }
        warnings.append("train table shares no group with the test set; using test proportions")
    weighted = sum(weights[key] * accuracy[key] for key in present)
    return EvalReport(
        group_accuracy=accuracy,
        worst_group_accuracy=min(accuracy.values()),
        weighted_average_accuracy=float(weighted),
        train_group_weights=weights,
        warnings=tuple(warnings),
    )


def _ap_from_ranking(ordered_labels: np.ndarray) -> float:
    hits = np.cumsum(ordered_labels)
    positives = int(hits[-1])
    ranks = np.flatnonzero(ordered_labels) + 1
    return float((hits[ranks - 1] / ranks).sum() / positives)


def bias_conflict_ap(scores, conflict_labels) -> float:
    """Average precision of a score at ranking bias-conflicting samples first.

    Stepwise interpolated AP over the descending-score ranking; tied scores
    are ordered by lower sample index before ranking.
    """
    values = scores.values if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64)
    labels = np.asarray(conflict_labels, dtype=bool)
    if labels.shape != values.shape:
        raise ValueError("scores and conflict labels must have matching length")
    if not labels.any():
        raise ValueError("average precision needs at least one conflicting sample")
    order = np.lexsort((np.arange(values.size), -values))
    return _ap_from_ranking(labels[order])


def random_ap_baseline(conflict_labels, trials: int, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo mean and stddev of AP over random orderings.

    The mean approximates the positive rate, which is the chance level a
    score must beat to carry any bias information.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    labels = np.asarray(conflict_labels, dtype=bool)
    if not labels.any():
        raise ValueError("average precision needs at least one conflicting sample")
    rng = np.random.default_rng(seed)
    aps = np.empty(trials, dtype=np.float64)
    for t in range(trials):
        aps[t] = _ap_from_ranking(labels[rng.permutation(labels.size)])
    return float(aps.mean()), float(aps.std(ddof=1)) if trials > 1 else 0.0
