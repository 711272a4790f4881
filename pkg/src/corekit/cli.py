"""Command-line entry points.

Subcommands: gen-data, score, select, train, eval, sweep, report. Each
takes ``--config`` (a plain-text key = value file, schema documented in
the README), an optional ``--seed`` override, and ``--out``. Exit codes:
0 success, 1 usage/config error, 2 run failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .data_model import save_dataset_csv, save_scores
from .harness import (
    ConfigError,
    ReportError,
    RunFailure,
    compute_scores,
    config_from_mapping,
    parse_kv_file,
    prepare_data,
    report,
    run_once,
    select_coreset,
    stable_seed,
    sweep,
)
from .metrics import group_eval
from .select import save_coreset
from .trainer import load_checkpoint, save_checkpoint, save_dynamics_csv, train


class UsageError(ValueError):
    """Bad command-line arguments or config values."""


def _load_config(args, seed_overrides_generator: bool = False):
    if args.config is None:
        raise UsageError("--config is required")
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    mapping = parse_kv_file(path)
    if seed_overrides_generator and args.seed is not None and "synth.n" in mapping:
        mapping["synth.seed"] = str(args.seed)
    return mapping, config_from_mapping(mapping, base_dir=path.parent)


def _require_out(args, what="output path") -> Path:
    if args.out is None:
        raise UsageError(f"--out is required ({what})")
    return Path(args.out)


def _run_seed(args, mapping) -> int:
    if args.seed is not None:
        return args.seed
    seeds = mapping.get("seeds")
    if seeds:
        return int(seeds.split(",")[0])
    return 0


def cmd_gen_data(args) -> int:
    mapping, cfg = _load_config(args, seed_overrides_generator=True)
    if cfg.synth is None:
        raise UsageError("gen-data needs synth.* keys in the config")
    out_dir = _require_out(args, "directory for train.csv/test.csv")
    out_dir.mkdir(parents=True, exist_ok=True)
    data = prepare_data(cfg)
    save_dataset_csv(out_dir / "train.csv", data.train)
    save_dataset_csv(out_dir / "test.csv", data.test)
    print(f"wrote {out_dir / 'train.csv'} ({data.train.n} samples)")
    print(f"wrote {out_dir / 'test.csv'} ({data.test.n} samples)")
    return 0


def cmd_score(args) -> int:
    mapping, cfg = _load_config(args)
    method = mapping.get("method") or (cfg.methods[0] if cfg.methods else None)
    if not method or method == "none":
        raise UsageError("score needs a 'method' config key")
    out = _require_out(args, "SSF score file")
    data = prepare_data(cfg)
    scores = compute_scores(cfg, data, method, _run_seed(args, mapping))
    save_scores(out, scores)
    print(f"wrote {out} ({len(scores)} {method} scores)")
    return 0


def cmd_select(args) -> int:
    mapping, cfg = _load_config(args)
    policy = mapping.get("policy")
    if not policy:
        raise UsageError("select needs a 'policy' config key")
    try:
        rate = float(mapping["rate"])
    except KeyError:
        raise UsageError("select needs a 'rate' config key") from None
    method = mapping.get("method", cfg.methods[0] if cfg.methods else "none")
    out = _require_out(args, "coreset CSV")
    seed = _run_seed(args, mapping)
    data = prepare_data(cfg)
    scores = compute_scores(cfg, data, method, seed)
    coreset = select_coreset(cfg, data, scores, policy, rate, seed)
    save_coreset(out, coreset, version=__version__)
    print(f"wrote {out} ({len(coreset)} samples, policy {policy})")
    return 0


def cmd_train(args) -> int:
    mapping, cfg = _load_config(args)
    out = _require_out(args, "model checkpoint")
    seed = _run_seed(args, mapping)
    data = prepare_data(cfg)
    rate = float(mapping.get("rate", "1.0"))
    policy = mapping.get("policy")
    subset = None
    if policy:
        method = mapping.get("method", cfg.methods[0] if cfg.methods else "none")
        scores = compute_scores(cfg, data, method, seed)
        subset = select_coreset(cfg, data, scores, policy, rate, seed)
    record = mapping.get("record_dynamics", "false").lower() in ("1", "true", "yes")
    tc = cfg.downstream.to_train_config(
        rate=rate, seed=stable_seed(seed, "downstream"), record_dynamics=record
    )
    model = train(data.train, subset, tc)
    save_checkpoint(out, model)
    print(f"wrote {out}")
    if record:
        dyn_path = out.with_suffix(out.suffix + ".dynamics.csv")
        save_dynamics_csv(dyn_path, model)
        print(f"wrote {dyn_path}")
    return 0


def cmd_eval(args) -> int:
    mapping, cfg = _load_config(args)
    checkpoint = mapping.get("checkpoint")
    if not checkpoint:
        raise UsageError("eval needs a 'checkpoint' config key")
    ckpt_path = Path(args.config).parent / checkpoint
    if not ckpt_path.exists():
        ckpt_path = Path(checkpoint)
    model = load_checkpoint(ckpt_path)
    data = prepare_data(cfg)
    result = group_eval(model, data.test, data.train_table)
    text = result.summary() + "\n"
    if args.out is not None:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_sweep(args) -> int:
    _, cfg = _load_config(args)
    out_dir = _require_out(args, "sweep output directory")
    result = sweep(cfg, out_dir)
    print(f"wrote {result.results_csv} ({len(result.rows)} rows)")
    print(f"wrote {result.summary_csv}")
    if result.failures:
        print(f"{len(result.failures)} run(s) failed; see {result.failures_csv}", file=sys.stderr)
        return 2
    return 0


def cmd_report(args) -> int:
    if args.config is None:
        raise UsageError("--config is required")
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    mapping = parse_kv_file(path)
    results_csv = mapping.get("results_csv")
    if not results_csv:
        raise UsageError("report needs a 'results_csv' config key")
    csv_path = path.parent / results_csv
    if not csv_path.exists():
        csv_path = Path(results_csv)
    out_dir = _require_out(args, "report output directory")
    summary = report(csv_path, out_dir)
    for p in summary.plot_paths:
        print(f"wrote {p}")
    print(f"wrote {summary.markdown_path}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corekit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"corekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": (cmd_gen_data, "generate synthetic train/test CSVs"),
        "score": (cmd_score, "compute a characterization score file (SSF v1)"),
        "select": (cmd_select, "select a coreset and write its manifest"),
        "train": (cmd_train, "train the classifier and write a checkpoint"),
        "eval": (cmd_eval, "evaluate a checkpoint's group robustness"),
        "sweep": (cmd_sweep, "run the full method x policy x rate x seed sweep"),
        "report": (cmd_report, "render plots and a markdown summary from results"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="plain-text key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", default=None, help="output file or directory")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return 0 if code in (0, None) else int(code)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RunFailure, ReportError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort failure mapping
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
