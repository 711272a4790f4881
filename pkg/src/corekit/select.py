"""Selection policies that turn scores plus a budget into a coreset.

Every policy is class balanced: a shared allocation step splits the budget
as evenly as possible across classes (capping at class availability and
iteratively redistributing the shortfall), and the policy then picks that
many samples inside each class. The oracle group-balanced variants repeat
the same allocation inside each class over its (class, attribute) groups.

All tie-breaks are deterministic: equal scores resolve to the lower sample
index, equal allocation remainders to the lower key.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .characterize import ScoreVector
from .data_model import GroupKey, GroupTable

POLICIES = ("Diff", "DiffStar", "Eas", "Med", "Strat", "Rand", "RGbal", "DiffGbal", "EasGbal")
SCORE_FREE_POLICIES = ("Rand", "RGbal")

Allocation = dict


@dataclass(frozen=True)
class Coreset:
    """An ordered set of selected sample indices with provenance."""

    indices: np.ndarray
    rate: float
    policy: str
    score_method: str = "none"
    seed: int | None = None

    def __post_init__(self):
        idx = np.sort(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("coreset must contain at least one index")
        if idx.min() < 0:
            raise ValueError("coreset indices must be nonnegative")
        if len(np.unique(idx)) != idx.size:
            raise ValueError("coreset indices must be unique")
        if not (0.0 < self.rate <= 1.0):
            raise ValueError(f"selection rate must lie in (0, 1], got {self.rate}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)


def allocate_balanced(availability: Mapping, budget: int) -> Allocation:
    """Split a budget over keys as close to uniform as the caps allow.

    Keys whose availability falls below the equal share are capped at their
    availability and the aggregate shortfall is re-divided equally among the
    remaining keys, repeating until no new key caps. The final equal share
    is integerized by largest remainder (ties to lower key), so the result
    sums exactly to the budget.
    """
    if budget < 0:
        raise ValueError(f"budget must be nonnegative, got {budget}")
    total = sum(availability.values())
    if budget > total:
        raise ValueError(f"budget {budget} exceeds total availability {total}")
    for key, avail in availability.items():
        if avail < 0:
            raise ValueError(f"availability of {key!r} is negative")
    alloc = {}
    uncapped = sorted(availability)
    remaining = int(budget)
    while uncapped:
        m = len(uncapped)
        # integer form of availability[k] <= remaining / m
        newly = [k for k in uncapped if availability[k] * m <= remaining]
        if not newly:
            break
        for k in newly:
            alloc[k] = int(availability[k])
            remaining -= int(availability[k])
        newly_set = set(newly)
        uncapped = [k for k in uncapped if k not in newly_set]
    if uncapped:
        base, extra = divmod(remaining, len(uncapped))
        for rank, k in enumerate(uncapped):
            alloc[k] = base + (1 if rank < extra else 0)
    return alloc


def allocate_group_balanced(table: GroupTable, budget: int) -> Allocation:
    """Class-balanced budget, then the most uniform group split inside each class."""
    class_totals = table.class_totals()
    class_alloc = allocate_balanced(class_totals, budget)
    alloc: Allocation = {}
    for class_label in sorted(class_totals):
        group_avail = {
            key: count
            for key, count in table.counts.items()
            if key.class_label == class_label
        }
        alloc.update(allocate_balanced(group_avail, class_alloc[class_label]))
    return alloc


def _score_values(scores) -> np.ndarray:
    if isinstance(scores, ScoreVector):
        return scores.values
    return np.asarray(scores, dtype=np.float64)


def _score_method(scores) -> str:
    return scores.method if isinstance(scores, ScoreVector) else "none"


def _class_members(class_labels: np.ndarray) -> dict[int, np.ndarray]:
    labels = np.asarray(class_labels)
    return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def _check_alloc(alloc: Allocation, members: dict[int, np.ndarray]) -> None:
    for key, want in alloc.items():
        have = members.get(key, np.empty(0)).size
        if want > have:
            raise ValueError(f"allocation asks {want} samples of class {key} but only {have} exist")
        if want < 0:
            raise ValueError(f"allocation for class {key} is negative")


def _rate(alloc: Allocation, n: int) -> float:
    return sum(alloc.values()) / n


def _take_extreme(values: np.ndarray, members: np.ndarray, count: int, hardest: bool) -> np.ndarray:
    """Top (hardest) or bottom scorers within one class, ties to lower index."""
    keys = -values[members] if hardest else values[members]
    order = np.lexsort((members, keys))
    return members[order[:count]]


def select_difficult(scores, class_labels, alloc: Allocation, seed: int | None = None) -> Coreset:
    """Per class, the alloc[class] highest-scoring samples."""
    return _select_by_rank(scores, class_labels, alloc, hardest=True, policy="Diff", seed=seed)


def select_easy(scores, class_labels, alloc: Allocation, seed: int | None = None) -> Coreset:
    """Per class, the alloc[class] lowest-scoring samples."""
    return _select_by_rank(scores, class_labels, alloc, hardest=False, policy="Eas", seed=seed)


def _select_by_rank(scores, class_labels, alloc, hardest: bool, policy: str, seed) -> Coreset:
    values = _score_values(scores)
    members = _class_members(class_labels)
    _check_alloc(alloc, members)
    chosen = [
        _take_extreme(values, members[c], alloc[c], hardest) for c in sorted(alloc) if alloc[c] > 0
    ]
    return Coreset(
        np.concatenate(chosen),
        rate=_rate(alloc, len(values)),
        policy=policy,
        score_method=_score_method(scores),
        seed=seed,
    )


def select_difficult_star(
    scores, class_labels, alloc: Allocation, trim: float = 0.03, seed: int | None = None
) -> Coreset:
    """Difficult selection after dropping each class's top ceil(trim * size) scorers."""
    if not (0.0 <= trim < 0.5):
        raise ValueError(f"trim fraction must lie in [0, 0.5), got {trim}")
    values = _score_values(scores)
    members = _class_members(class_labels)
    _check_alloc(alloc, members)
    chosen = []
    for c in sorted(alloc):
        if alloc[c] == 0:
            continue
        group = members[c]
        drop = math.ceil(trim * group.size)
        if group.size - drop < alloc[c]:
            raise ValueError(
                f"trimming {drop} of {group.size} class-{c} samples leaves fewer "
                f"than the allocated {alloc[c]}"
            )
        keys = -values[group]
        order = np.lexsort((group, keys))
        kept = group[order[drop:]]
        chosen.append(_take_extreme(values, kept, alloc[c], hardest=True))
    return Coreset(
        np.concatenate(chosen),
        rate=_rate(alloc, len(values)),
        policy="DiffStar",
        score_method=_score_method(scores),
        seed=seed,
    )


def select_median(scores, class_labels, alloc: Allocation, seed: int | None = None) -> Coreset:
    """Per class, the samples closest to the class-score median.

    Ranked by absolute distance to the median, ties by lower score, then
    lower index.
    """
    values = _score_values(scores)
    members = _class_members(class_labels)
    _check_alloc(alloc, members)
    chosen = []
    for c in sorted(alloc):
        if alloc[c] == 0:
            continue
        group = members[c]
        med = np.median(values[group])
        dist = np.abs(values[group] - med)
        order = np.lexsort((group, values[group], dist))
        chosen.append(group[order[: alloc[c]]])
    return Coreset(
        np.concatenate(chosen),
        rate=_rate(alloc, len(values)),
        policy="Med",
        score_method=_score_method(scores),
        seed=seed,
    )


def select_stratified(
    scores, class_labels, alloc: Allocation, bins: int = 50, seed: int = 0
) -> Coreset:
    """Per class, spread the budget over rank-based score bins.

    Samples are ranked from lowest to highest score and partitioned into
    `bins` contiguous near-equal-count bins; the class budget is divided
    over the bins with the same capped-uniform allocation used for classes,
    and each bin contributes a seeded uniform draw without replacement.
    """
    if bins < 1:
        raise ValueError(f"bin count must be >= 1, got {bins}")
    values = _score_values(scores)
    members = _class_members(class_labels)
    _check_alloc(alloc, members)
    chosen = []
    for c in sorted(alloc):
        if alloc[c] == 0:
            continue
        group = members[c]
        order = np.lexsort((group, values[group]))
        ranked = group[order]
        parts = np.array_split(ranked, bins)
        bin_alloc = allocate_balanced({i: parts[i].size for i in range(len(parts))}, alloc[c])
        rng = np.random.default_rng([seed, c])
        for i, part in enumerate(parts):
            want = bin_alloc[i]
            if want == 0:
                continue
            picked = rng.choice(part, size=want, replace=False)
            chosen.append(np.asarray(picked, dtype=np.int64))
    return Coreset(
        np.concatenate(chosen),
        rate=_rate(alloc, len(values)),
        policy="Strat",
        score_method=_score_method(scores),
        seed=seed,
    )


def select_random(class_labels, alloc: Allocation, seed: int = 0) -> Coreset:
    """Per class, a seeded uniform draw without replacement."""
    members = _class_members(class_labels)
    _check_alloc(alloc, members)
    chosen = []
    for c in sorted(alloc):
        if alloc[c] == 0:
            continue
        rng = np.random.default_rng([seed, c])
        picked = rng.choice(members[c], size=alloc[c], replace=False)
        chosen.append(np.asarray(picked, dtype=np.int64))
    return Coreset(
        np.concatenate(chosen),
        rate=_rate(alloc, len(np.asarray(class_labels))),
        policy="Rand",
        score_method="none",
        seed=seed,
    )


def select_group_policy(
    scores,
    class_labels,
    attr_labels,
    group_alloc: Allocation,
    variant: str,
    seed: int = 0,
) -> Coreset:
    """Oracle policies that fill a shared per-group allocation.

    RGbal draws uniformly inside each group; DiffGbal / EasGbal take the
    highest / lowest scorers inside each group. All three produce identical
    per-group counts for the same allocation.
    """
    if variant not in ("RGbal", "DiffGbal", "EasGbal"):
        raise ValueError(f"unknown group policy variant {variant!r}")
    if variant != "RGbal" and scores is None:
        raise ValueError(f"{variant} requires scores")
    values = _score_values(scores) if scores is not None else None
    cl = np.asarray(class_labels)
    al = np.asarray(attr_labels)
    chosen = []
    for key in sorted(group_alloc):
        want = group_alloc[key]
        if want < 0:
            raise ValueError(f"allocation for group {key} is negative")
        if want == 0:
            continue
        y, a = key
        group = np.flatnonzero((cl == y) & (al == a))
        if want > group.size:
            raise ValueError(
                f"allocation asks {want} samples of group {tuple(key)} but only {group.size} exist"
            )
        if variant == "RGbal":
            rng = np.random.default_rng([seed, int(y), int(a)])
            picked = np.asarray(rng.choice(group, size=want, replace=False), dtype=np.int64)
        else:
            picked = _take_extreme(values, group, want, hardest=(variant == "DiffGbal"))
        chosen.append(picked)
    if not chosen:
        raise ValueError("group allocation selects no samples")
    return Coreset(
        np.concatenate(chosen),
        rate=_rate(group_alloc, cl.size),
        policy=variant,
        score_method=_score_method(scores) if scores is not None else "none",
        seed=seed,
    )


# -- coreset manifest files ----------------------------------------------


def save_coreset(path, coreset: Coreset, version: str = "0.1.0") -> None:
    """Write the index list as CSV plus a JSON provenance sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"])
        for i in coreset.indices:
            writer.writerow([int(i)])
    sidecar = {
        "policy": coreset.policy,
        "method": coreset.score_method,
        "rate": coreset.rate,
        "seed": coreset.seed,
        "toolkit_version": version,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_coreset(path) -> Coreset:
    path = Path(path)
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id"]:
            raise ValueError(f"{path}: malformed coreset header {header}")
        indices = [int(row[0]) for row in reader]
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise ValueError(f"{path}: missing provenance sidecar {sidecar_path.name}")
    meta = json.loads(sidecar_path.read_text())
    return Coreset(
        np.asarray(indices, dtype=np.int64),
        rate=float(meta["rate"]),
        policy=str(meta["policy"]),
        score_method=str(meta.get("method", "none")),
        seed=meta.get("seed"),
    )
