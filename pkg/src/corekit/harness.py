"""Experiment orchestration for score/policy/rate/seed sweeps.

A single run walks the pipeline: load or generate data, train a surrogate
(when the score method needs one), score every sample, allocate the budget,
select a coreset, train the downstream classifier with a scaled epoch
budget, and evaluate bias and group robustness on the held-out test split.
Sweeps execute the Cartesian product of (method, policy, rate, seed),
cache each finished run keyed by a content hash so interrupted sweeps
resume, and write rows in a canonical order so the results CSV is
byte-identical regardless of scheduling.

The ``COREKIT_WORKERS`` environment variable bounds worker parallelism;
the default is the available hardware parallelism.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .characterize import (
    EMBEDDING_METHODS,
    KNOWN_METHODS,
    EmbeddingMatrix,
    ScoreVector,
    el2n,
    forgetting,
    selfsup_score,
    supproto_score,
    uncertainty,
)
from .data_model import (
    GroupTable,
    LabeledDataset,
    SynthConfig,
    generate_synthetic,
    group_table,
    load_dataset_csv,
    load_scores,
)
from .metrics import bias_conflict_ap, bias_level, group_eval, label_alignment, random_ap_baseline
from .select import (
    POLICIES,
    allocate_balanced,
    allocate_group_balanced,
    select_difficult,
    select_difficult_star,
    select_easy,
    select_group_policy,
    select_median,
    select_random,
    select_stratified,
)
from .trainer import TrainConfig, train

RESULTS_HEADER = (
    "dataset,method,policy,rate,seed,bias_level,wga,avg_acc,conflict_ap,n_selected,group_counts"
)
FAILURES_HEADER = "method,policy,rate,seed,stage,error"


class ConfigError(ValueError):
    """Invalid experiment configuration or config file."""


class ReportError(RuntimeError):
    """Raised when a report cannot be produced (e.g. empty results)."""


class RunFailure(RuntimeError):
    """A pipeline stage failed for one (method, policy, rate, seed) run."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
        self.message = message


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed derived from arbitrary hashable parts."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class TrainerSettings:
    """Shared SGD knobs for surrogate and downstream training."""

    base_epochs: int = 20
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    weight_decay: float = 0.01
    hidden_units: int = 0

    def to_train_config(self, rate: float, seed: int, record_dynamics: bool = False,
                        base_epochs: int | None = None) -> TrainConfig:
        return TrainConfig(
            base_epochs=self.base_epochs if base_epochs is None else base_epochs,
            selection_rate=rate,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            hidden_units=self.hidden_units,
            seed=seed,
            record_dynamics=record_dynamics,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs: data source, methods, policies, budgets."""

    name: str = "experiment"
    synth: SynthConfig | None = None
    test_n: int = 2000
    test_rho: float | None = None
    test_seed: int | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    class_count: int | None = None
    attr_count: int | None = None
    score_files: dict = field(default_factory=dict)
    methods: tuple = ("el2n",)
    policies: tuple = ("Rand",)
    # default grid spans two orders of magnitude of coreset sizes
    rates: tuple = (0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
    seeds: tuple = (0,)
    surrogate: TrainerSettings = field(default_factory=TrainerSettings)
    surrogate_short_epochs: int = 20
    surrogate_long_epochs: int = 200
    downstream: TrainerSettings = field(default_factory=TrainerSettings)
    selfsup_k: int | None = None
    stratified_bins: int = 50
    difficult_star_trim: float = 0.03
    ap_baseline_trials: int = 100

    def __post_init__(self):
        if self.synth is None and self.train_csv is None:
            raise ConfigError("config needs either a synthetic dataset or a train CSV path")
        if self.synth is not None and self.train_csv is not None:
            raise ConfigError("config cannot declare both synthetic and CSV data")
        if self.train_csv is not None and self.test_csv is None:
            raise ConfigError("CSV data needs both train and test paths")
        if not self.methods or not self.policies or not self.rates or not self.seeds:
            raise ConfigError("methods, policies, rates, and seeds must be non-empty")
        for rate in self.rates:
            if not (0.0 < rate <= 1.0):
                raise ConfigError(f"rates must lie in (0, 1], got {rate}")
        for policy in self.policies:
            if policy not in POLICIES:
                raise ConfigError(f"unknown policy {policy!r}; expected one of {POLICIES}")
        for method in self.methods:
            if method != "none" and method not in KNOWN_METHODS:
                raise ConfigError(
                    f"unknown score method {method!r}; expected one of {KNOWN_METHODS} or 'none'"
                )

    def identity(self) -> str:
        """Canonical JSON of every field that affects run results."""
        payload = asdict(self)
        payload["score_files"] = dict(sorted(self.score_files.items()))
        return json.dumps(payload, sort_keys=True, default=str)


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    method: str
    policy: str
    rate: float
    seed: int
    bias_level: float
    wga: float
    avg_acc: float
    conflict_ap: float
    n_selected: int
    group_counts: str

    def to_csv_fields(self) -> list[str]:
        return [
            self.dataset,
            self.method,
            self.policy,
            repr(float(self.rate)),
            str(self.seed),
            f"{self.bias_level:.6f}",
            f"{self.wga:.6f}",
            f"{self.avg_acc:.6f}",
            f"{self.conflict_ap:.6f}",
            str(self.n_selected),
            self.group_counts,
        ]

    def sort_key(self):
        return (self.dataset, self.method, self.policy, self.rate, self.seed)


# -- per-process memo for datasets and scores -----------------------------

_DATA_MEMO: dict = {}
_SCORE_MEMO: dict = {}


@dataclass(frozen=True)
class _Prepared:
    train: LabeledDataset
    test: LabeledDataset
    train_table: GroupTable
    conflict_flags: np.ndarray


def prepare_data(cfg: ExperimentConfig) -> _Prepared:
    """Load or generate the train/test pair plus derived bias fixtures."""
    key = cfg.identity()
    if key in _DATA_MEMO:
        return _DATA_MEMO[key]
    if cfg.synth is not None:
        train_ds = generate_synthetic(cfg.synth, name=cfg.name)
        test_rho = cfg.test_rho if cfg.test_rho is not None else 1.0 / cfg.synth.class_count
        test_seed = cfg.test_seed if cfg.test_seed is not None else cfg.synth.seed + 1
        test_cfg = SynthConfig(
            n=cfg.test_n,
            d=cfg.synth.d,
            class_count=cfg.synth.class_count,
            rho=test_rho,
            core_sep=cfg.synth.core_sep,
            spur_sep=cfg.synth.spur_sep,
            noise_sigma=cfg.synth.noise_sigma,
            seed=test_seed,
        )
        test_ds = generate_synthetic(test_cfg, name=f"{cfg.name}-test")
    else:
        train_ds = load_dataset_csv(
            cfg.train_csv, class_count=cfg.class_count, attr_count=cfg.attr_count, name=cfg.name
        )
        test_ds = load_dataset_csv(
            cfg.test_csv,
            class_count=train_ds.class_count,
            attr_count=train_ds.attr_count,
            name=f"{cfg.name}-test",
        )
        if test_ds.d != train_ds.d:
            raise ConfigError("train and test CSVs disagree on feature dimensionality")
    table = group_table(train_ds)
    conflict = label_alignment(bias_level(table), train_ds)
    prepared = _Prepared(train_ds, test_ds, table, conflict)
    _DATA_MEMO[key] = prepared
    return prepared


def _surrogate_probs(cfg: ExperimentConfig, data: _Prepared, seed: int) -> np.ndarray:
    memo_key = (cfg.identity(), "probs", seed)
    if memo_key not in _SCORE_MEMO:
        tc = cfg.surrogate.to_train_config(
            rate=1.0,
            seed=stable_seed(seed, "surrogate-short"),
            base_epochs=cfg.surrogate_short_epochs,
        )
        model = train(data.train, None, tc)
        _SCORE_MEMO[memo_key] = model.predict_proba(data.train.features)
    return _SCORE_MEMO[memo_key]


def _surrogate_dynamics(cfg: ExperimentConfig, data: _Prepared, seed: int) -> np.ndarray:
    memo_key = (cfg.identity(), "dynamics", seed)
    if memo_key not in _SCORE_MEMO:
        tc = cfg.surrogate.to_train_config(
            rate=1.0,
            seed=stable_seed(seed, "surrogate-long"),
            base_epochs=cfg.surrogate_long_epochs,
            record_dynamics=True,
        )
        model = train(data.train, None, tc)
        _SCORE_MEMO[memo_key] = model.dynamics_log
    return _SCORE_MEMO[memo_key]


def _embeddings(cfg: ExperimentConfig, data: _Prepared, seed: int) -> EmbeddingMatrix:
    """Penultimate surrogate activations, or raw features for a linear surrogate."""
    if cfg.surrogate.hidden_units == 0:
        return EmbeddingMatrix(data.train.features)
    memo_key = (cfg.identity(), "embeddings", seed)
    if memo_key not in _SCORE_MEMO:
        tc = cfg.surrogate.to_train_config(
            rate=1.0,
            seed=stable_seed(seed, "surrogate-short"),
            base_epochs=cfg.surrogate_short_epochs,
        )
        model = train(data.train, None, tc)
        _SCORE_MEMO[memo_key] = EmbeddingMatrix(model.penultimate(data.train.features))
    return _SCORE_MEMO[memo_key]


def compute_scores(
    cfg: ExperimentConfig, data: _Prepared, method: str, seed: int
) -> ScoreVector | None:
    """Scores for one method, preferring imported files over the surrogate."""
    if method == "none":
        return None
    if method in cfg.score_files:
        scores = load_scores(cfg.score_files[method], method=method)
        if len(scores) != data.train.n:
            raise ValueError(
                f"imported {method} scores hold {len(scores)} records "
                f"for {data.train.n} train samples"
            )
        return scores
    if method == "el2n":
        return el2n(_surrogate_probs(cfg, data, seed), data.train.class_labels)
    if method == "uncertainty":
        return uncertainty(_surrogate_probs(cfg, data, seed))
    if method == "forgetting":
        return forgetting(_surrogate_dynamics(cfg, data, seed))
    if method in EMBEDDING_METHODS:
        emb = _embeddings(cfg, data, seed)
        if method == "selfsup":
            k = cfg.selfsup_k if cfg.selfsup_k is not None else data.train.class_count
            return selfsup_score(emb, k, stable_seed(seed, "selfsup"))
        return supproto_score(emb, data.train.class_labels, data.train.class_count)
    raise ValueError(f"unknown score method {method!r}")


def select_coreset(cfg, data: _Prepared, scores, policy: str, rate: float, seed: int):
    budget = int(round(rate * data.train.n))
    if budget < 1:
        raise ValueError(f"rate {rate} rounds to an empty budget for n={data.train.n}")
    sel_seed = stable_seed(seed, "select")
    if policy in ("RGbal", "DiffGbal", "EasGbal"):
        galloc = allocate_group_balanced(data.train_table, budget)
        return select_group_policy(
            scores, data.train.class_labels, data.train.attr_labels, galloc, policy, sel_seed
        )
    alloc = allocate_balanced(data.train_table.class_totals(), budget)
    labels = data.train.class_labels
    if policy == "Rand":
        return select_random(labels, alloc, sel_seed)
    if scores is None:
        raise ValueError(f"policy {policy} needs a score method, got 'none'")
    if policy == "Diff":
        return select_difficult(scores, labels, alloc, seed=sel_seed)
    if policy == "DiffStar":
        return select_difficult_star(scores, labels, alloc, trim=cfg.difficult_star_trim, seed=sel_seed)
    if policy == "Eas":
        return select_easy(scores, labels, alloc, seed=sel_seed)
    if policy == "Med":
        return select_median(scores, labels, alloc, seed=sel_seed)
    if policy == "Strat":
        return select_stratified(scores, labels, alloc, bins=cfg.stratified_bins, seed=sel_seed)
    raise ValueError(f"unknown policy {policy!r}")


def _format_group_counts(table: GroupTable) -> str:
    return "|".join(
        f"{key.class_label}-{key.attr_label}:{table.counts[key]}" for key in sorted(table.counts)
    )


def run_once(cfg: ExperimentConfig, method: str, policy: str, rate: float, seed: int) -> ResultRow:
    """Execute one full pipeline run; any stage error raises RunFailure."""

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RunFailure:
            raise
        except Exception as exc:
            raise RunFailure(name, str(exc)) from exc

    data = stage("data", prepare_data, cfg)
    scores = stage("score", compute_scores, cfg, data, method, seed)
    coreset = stage("select", select_coreset, cfg, data, scores, policy, rate, seed)
    coreset_table = stage("bias", group_table, data.train, coreset.indices)
    coreset_bias = stage("bias", bias_level, coreset_table).bias_level

    def _train_downstream():
        tc = cfg.downstream.to_train_config(rate=rate, seed=stable_seed(seed, "downstream"))
        return train(data.train, coreset, tc)

    model = stage("train", _train_downstream)
    report = stage("eval", group_eval, model, data.test, data.train_table)

    def _conflict_ap():
        if scores is not None:
            return bias_conflict_ap(scores, data.conflict_flags)
        mean, _ = random_ap_baseline(
            data.conflict_flags, trials=cfg.ap_baseline_trials, seed=stable_seed(seed, "ap-baseline")
        )
        return mean

    conflict_ap = stage("conflict-ap", _conflict_ap)
    return ResultRow(
        dataset=cfg.name,
        method=method,
        policy=policy,
        rate=rate,
        seed=seed,
        bias_level=coreset_bias,
        wga=report.worst_group_accuracy,
        avg_acc=report.weighted_average_accuracy,
        conflict_ap=conflict_ap,
        n_selected=len(coreset),
        group_counts=_format_group_counts(coreset_table),
    )


# -- sweep execution with caching -----------------------------------------


def _cache_key(cfg: ExperimentConfig, method: str, policy: str, rate: float, seed: int) -> str:
    payload = json.dumps(
        {
            "config": cfg.identity(),
            "method": method,
            "policy": policy,
            "rate": repr(float(rate)),
            "seed": seed,
            "version": __version__,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _row_to_dict(row: ResultRow) -> dict:
    return asdict(row)


def _row_from_dict(payload: dict) -> ResultRow:
    return ResultRow(**payload)


def _run_task(cfg: ExperimentConfig, method: str, policy: str, rate: float, seed: int):
    try:
        row = run_once(cfg, method, policy, rate, seed)
        return ("ok", _row_to_dict(row))
    except RunFailure as exc:
        return (
            "fail",
            {
                "method": method,
                "policy": policy,
                "rate": repr(float(rate)),
                "seed": str(seed),
                "stage": exc.stage,
                "error": exc.message,
            },
        )


def _worker_count() -> int:
    env = os.environ.get("COREKIT_WORKERS")
    if env is not None:
        try:
            workers = int(env)
        except ValueError:
            raise ConfigError(f"COREKIT_WORKERS must be an integer, got {env!r}") from None
        if workers < 1:
            raise ConfigError(f"COREKIT_WORKERS must be >= 1, got {workers}")
        return workers
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SweepResult:
    results_csv: Path
    summary_csv: Path
    failures_csv: Path
    rows: tuple
    failures: tuple


def sweep(cfg: ExperimentConfig, out_dir, workers: int | None = None) -> SweepResult:
    """Run the full (method, policy, rate, seed) product and write CSVs.

    Completed runs are cached under out_dir/cache keyed by a content hash
    of the run tuple, so re-running or resuming an interrupted sweep
    reproduces the identical results CSV. Failures are logged and skipped.
    """
    out_dir = Path(out_dir)
    cache_dir = out_dir / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    runs = sorted(
        (m, p, r, s)
        for m in cfg.methods
        for p in cfg.policies
        for r in cfg.rates
        for s in cfg.seeds
    )
    rows: dict[tuple, ResultRow] = {}
    failures: list[dict] = []
    pending: list[tuple] = []
    for run in runs:
        cache_file = cache_dir / f"{_cache_key(cfg, *run)}.json"
        if cache_file.exists():
            rows[run] = _row_from_dict(json.loads(cache_file.read_text()))
        else:
            pending.append(run)

    workers = _worker_count() if workers is None else workers
    if pending:
        if workers <= 1 or len(pending) == 1:
            outcomes = [_run_task(cfg, *run) for run in pending]
        else:
            with ProcessPoolExecutor(max_workers=min(workers, len(pending))) as pool:
                outcomes = list(
                    pool.map(_run_task, *zip(*[(cfg, m, p, r, s) for m, p, r, s in pending]))
                )
        for run, (status, payload) in zip(pending, outcomes):
            if status == "ok":
                row = _row_from_dict(payload)
                rows[run] = row
                cache_file = cache_dir / f"{_cache_key(cfg, *run)}.json"
                tmp = cache_file.with_suffix(".tmp")
                tmp.write_text(json.dumps(payload, sort_keys=True))
                os.replace(tmp, cache_file)
            else:
                failures.append(payload)

    ordered = sorted(rows.values(), key=ResultRow.sort_key)
    results_csv = out_dir / "results.csv"
    with open(results_csv, "w", newline="") as fh:
        fh.write(RESULTS_HEADER + "\n")
        writer = csv.writer(fh)
        for row in ordered:
            writer.writerow(row.to_csv_fields())

    failures_csv = out_dir / "failures.csv"
    with open(failures_csv, "w", newline="") as fh:
        fh.write(FAILURES_HEADER + "\n")
        writer = csv.writer(fh)
        for failure in failures:
            writer.writerow(
                [failure[k] for k in ("method", "policy", "rate", "seed", "stage", "error")]
            )

    summary_csv = out_dir / "summary.csv"
    _write_summary(summary_csv, summarize_rows(ordered))
    return SweepResult(
        results_csv=results_csv,
        summary_csv=summary_csv,
        failures_csv=failures_csv,
        rows=tuple(ordered),
        failures=tuple(failures),
    )


_SUMMARY_METRICS = ("bias_level", "wga", "avg_acc", "conflict_ap")


def summarize_rows(rows) -> list[dict]:
    """Mean and sample stddev over seeds per (dataset, method, policy, rate)."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.method, row.policy, row.rate), []).append(row)
    summary = []
    for key in sorted(groups):
        bucket = groups[key]
        entry = {
            "dataset": key[0],
            "method": key[1],
            "policy": key[2],
            "rate": key[3],
            "n_seeds": len(bucket),
        }
        for metric in _SUMMARY_METRICS:
            values = np.array([getattr(row, metric) for row in bucket], dtype=np.float64)
            entry[f"{metric}_mean"] = float(values.mean())
            entry[f"{metric}_std"] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        summary.append(entry)
    return summary


def _write_summary(path, summary: list[dict]) -> None:
    columns = ["dataset", "method", "policy", "rate", "n_seeds"]
    for metric in _SUMMARY_METRICS:
        columns.extend([f"{metric}_mean", f"{metric}_std"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for entry in summary:
            row = []
            for col in columns:
                value = entry[col]
                if isinstance(value, float):
                    row.append(repr(value) if col == "rate" else f"{value:.6f}")
                else:
                    row.append(str(value))
            writer.writerow(row)


# -- reporting -------------------------------------------------------------


@dataclass(frozen=True)
class PanelStats:
    dataset: str
    metric: str
    xlim: tuple
    ylim: tuple
    x_range: tuple
    y_range: tuple


@dataclass(frozen=True)
class ReportSummary:
    plot_paths: tuple
    markdown_path: Path
    panels: tuple


def load_results_csv(path) -> list[ResultRow]:
    with open(path, "r", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER.split(","):
            raise ReportError(f"{path}: results CSV header does not match {RESULTS_HEADER!r}")
        rows = []
        for record in reader:
            try:
                rows.append(
                    ResultRow(
                        dataset=record["dataset"],
                        method=record["method"],
                        policy=record["policy"],
                        rate=float(record["rate"]),
                        seed=int(record["seed"]),
                        bias_level=float(record["bias_level"]),
                        wga=float(record["wga"]),
                        avg_acc=float(record["avg_acc"]),
                        conflict_ap=float(record["conflict_ap"]),
                        n_selected=int(record["n_selected"]),
                        group_counts=record["group_counts"],
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ReportError(f"{path}: malformed results row {record}: {exc}") from exc
    return rows


_PANEL_METRICS = (("bias_level", "coreset bias level"), ("wga", "worst-group accuracy"),
                  ("avg_acc", "weighted average accuracy"))


def report(results_csv, out_dir) -> ReportSummary:
    """Render per-dataset panel plots (SVG) plus a markdown summary grid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = load_results_csv(results_csv)
    if not rows:
        raise ReportError(f"{results_csv}: results CSV has no rows to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize_rows(rows)

    datasets = sorted({row.dataset for row in rows})
    plot_paths = []
    panels = []
    for dataset in datasets:
        entries = [e for e in summary if e["dataset"] == dataset]
        series_keys = sorted({(e["method"], e["policy"]) for e in entries})
        fig, axes = plt.subplots(1, len(_PANEL_METRICS), figsize=(13, 3.6))
        for ax, (metric, title) in zip(axes, _PANEL_METRICS):
            x_all, y_all = [], []
            for method, policy in series_keys:
                pts = sorted(
                    (e["rate"], e[f"{metric}_mean"], e[f"{metric}_std"])
                    for e in entries
                    if e["method"] == method and e["policy"] == policy
                )
                xs = [p[0] for p in pts]
                ys = [p[1] for p in pts]
                errs = [p[2] for p in pts]
                label = policy if method == "none" else f"{policy}({method})"
                ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=2, label=label)
                x_all.extend(xs)
                y_all.extend(ys)
            ax.set_xlabel("selection rate")
            ax.set_title(title)
            ax.grid(True, alpha=0.3)
            panels.append(
                PanelStats(
                    dataset=dataset,
                    metric=metric,
                    xlim=tuple(ax.get_xlim()),
                    ylim=tuple(ax.get_ylim()),
                    x_range=(min(x_all), max(x_all)),
                    y_range=(min(y_all), max(y_all)),
                )
            )
        axes[0].legend(fontsize=7)
        fig.suptitle(dataset)
        fig.tight_layout()
        path = out_dir / f"{dataset}_panels.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        plot_paths.append(path)

    markdown_path = out_dir / "report.md"
    markdown_path.write_text(_markdown_report(summary))
    return ReportSummary(
        plot_paths=tuple(plot_paths), markdown_path=markdown_path, panels=tuple(panels)
    )


def _markdown_report(summary: list[dict]) -> str:
    lines = ["# Sweep report", ""]
    datasets = sorted({e["dataset"] for e in summary})
    for dataset in datasets:
        entries = [e for e in summary if e["dataset"] == dataset]
        rates = sorted({e["rate"] for e in entries})
        methods = sorted({e["method"] for e in entries})
        policies = sorted({e["policy"] for e in entries})
        lines.append(f"## {dataset}")
        lines.append("")
        for rate in rates:
            lines.append(f"### selection rate {rate:g} (worst-group accuracy, mean +/- std)")
            lines.append("")
            lines.append("| method | " + " | ".join(policies) + " |")
            lines.append("|---" * (len(policies) + 1) + "|")
            for method in methods:
                cells = []
                for policy in policies:
                    match = [
                        e
                        for e in entries
                        if e["method"] == method and e["policy"] == policy and e["rate"] == rate
                    ]
                    if match:
                        e = match[0]
                        cells.append(f"{e['wga_mean']:.3f} +/- {e['wga_std']:.3f}")
                    else:
                        cells.append("-")
                lines.append(f"| {method} | " + " | ".join(cells) + " |")
            lines.append("")
    return "\n".join(lines)


# -- plain-text key = value config files -----------------------------------


def parse_kv_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file (comments start with #)."""
    data: dict[str, str] = {}
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in data:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            data[key] = value
    return data


def _get(mapping: dict, key: str, cast, default=None, required: bool = False):
    if key not in mapping:
        if required:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    raw = mapping[key]
    try:
        if cast is bool:
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError("expected a boolean")
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r} has invalid value {raw!r}: {exc}") from exc


def _get_list(mapping: dict, key: str, cast, default=None):
    if key not in mapping:
        return default
    items = [part.strip() for part in mapping[key].split(",") if part.strip()]
    try:
        return tuple(cast(item) for item in items)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r} has invalid list value: {exc}") from exc


def _trainer_settings(mapping: dict, prefix: str) -> TrainerSettings:
    defaults = TrainerSettings()
    return TrainerSettings(
        base_epochs=_get(mapping, f"{prefix}.base_epochs", int, defaults.base_epochs),
        learning_rate=_get(mapping, f"{prefix}.learning_rate", float, defaults.learning_rate),
        momentum=_get(mapping, f"{prefix}.momentum", float, defaults.momentum),
        batch_size=_get(mapping, f"{prefix}.batch_size", int, defaults.batch_size),
        weight_decay=_get(mapping, f"{prefix}.weight_decay", float, defaults.weight_decay),
        hidden_units=_get(mapping, f"{prefix}.hidden_units", int, defaults.hidden_units),
    )


def config_from_mapping(mapping: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed key = value pairs."""
    base_dir = Path(base_dir) if base_dir is not None else Path(".")

    def resolve(p):
        return str((base_dir / p) if not Path(p).is_absolute() else Path(p))

    synth = None
    if "synth.n" in mapping:
        synth = SynthConfig(
            n=_get(mapping, "synth.n", int, required=True),
            d=_get(mapping, "synth.d", int, 10),
            class_count=_get(mapping, "synth.classes", int, 2),
            rho=_get(mapping, "synth.rho", float, 0.95),
            core_sep=_get(mapping, "synth.core_sep", float, 1.0),
            spur_sep=_get(mapping, "synth.spur_sep", float, 2.0),
            noise_sigma=_get(mapping, "synth.noise_sigma", float, 0.5),
            seed=_get(mapping, "synth.seed", int, 0),
        )
    train_csv = _get(mapping, "data.train_csv", str)
    test_csv = _get(mapping, "data.test_csv", str)
    score_files = {
        key.split(".", 1)[1]: resolve(value)
        for key, value in mapping.items()
        if key.startswith("scores.")
    }
    try:
        return ExperimentConfig(
            name=_get(mapping, "name", str, "experiment"),
            synth=synth,
            test_n=_get(mapping, "test.n", int, 2000),
            test_rho=_get(mapping, "test.rho", float),
            test_seed=_get(mapping, "test.seed", int),
            train_csv=resolve(train_csv) if train_csv else None,
            test_csv=resolve(test_csv) if test_csv else None,
            class_count=_get(mapping, "data.class_count", int),
            attr_count=_get(mapping, "data.attr_count", int),
            score_files=score_files,
            methods=_get_list(mapping, "methods", str, ("el2n",)),
            policies=_get_list(mapping, "policies", str, ("Rand",)),
            rates=_get_list(
                mapping, "rates", float, (0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
            ),
            seeds=_get_list(mapping, "seeds", int, (0,)),
            surrogate=_trainer_settings(mapping, "surrogate"),
            surrogate_short_epochs=_get(mapping, "surrogate.short_epochs", int, 20),
            surrogate_long_epochs=_get(mapping, "surrogate.long_epochs", int, 200),
            downstream=_trainer_settings(mapping, "downstream"),
            selfsup_k=_get(mapping, "selfsup.k", int),
            stratified_bins=_get(mapping, "stratified.bins", int, 50),
            difficult_star_trim=_get(mapping, "difficult_star.trim", float, 0.03),
            ap_baseline_trials=_get(mapping, "ap_baseline.trials", int, 100),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_file(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_mapping(parse_kv_file(path), base_dir=path.parent)
