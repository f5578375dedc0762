"""Command-line entry points: gen-data, train, eval, sweep, report."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import models
from ..datagen import generate_corpus, save_corpus
from ..errors import CddLabError
from ..metrics import evaluate
from .config import RunConfig, build_genspec, parse_kv_text
from .runs import backbone_seed, build_splits, execute_run, resolve_run_dir, write_metrics_file
from .sweep import run_sweep


def _cmd_gen_data(args) -> int:
    flat = parse_kv_text(Path(args.spec).read_text())
    spec = build_genspec(flat)
    normals, anomalies = generate_corpus(spec)
    manifest = save_corpus(resolve_run_dir(args.out), normals, anomalies)
    print(f"wrote {len(normals)} normals + {len(anomalies)} anomalies; manifest at {manifest}")
    return 0


def _cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    record = execute_run(config, args.out, force=args.force)
    for setting in sorted(record.reports):
        r = record.reports[setting]
        print(f"{setting}: i_auc={r.i_auc:.4f} p_auc={r.p_auc:.4f} pro={r.pro:.4f}"
              + (f" train_i_auc={r.train_i_auc:.4f}" if r.train_i_auc is not None else ""))
    print(f"run dir: {record.run_dir}")
    return 0


def _cmd_eval(args) -> int:
    config = RunConfig.load(args.config)
    params, _ = models.load_checkpoint(args.checkpoint, config.model)
    teacher = models.build_teacher(config.model, backbone_seed(config.model))
    reports = {}
    for setting, split in build_splits(config).items():
        reports[setting] = evaluate(split, teacher, params, config)
        r = reports[setting]
        print(f"{setting}: i_auc={r.i_auc:.4f} p_auc={r.p_auc:.4f} pro={r.pro:.4f}")
    if args.out:
        write_metrics_file(args.out, reports)
        print(f"metrics written to {args.out}")
    return 0


def _parse_axis(spec: str):
    if "=" not in spec:
        raise CddLabError(f"axis must look like name=v1,v2,... got {spec!r}")
    name, values = spec.split("=", 1)
    return name.strip(), [v for v in values.split(",") if v]


def _cmd_sweep(args) -> int:
    config = RunConfig.load(args.config)
    axes = {}
    for spec in args.axis or []:
        name, values = _parse_axis(spec)
        axes[name] = values
    if args.rnoise:
        axes["r_noise"] = [v for v in args.rnoise.split(",") if v]
    if args.algo:
        axes["algorithm"] = [v for v in args.algo.split(",") if v]
    if args.strategy:
        axes["strategy"] = [v for v in args.strategy.split(",") if v]
    rows = run_sweep(config, axes, args.out, replicates=args.replicates)
    out = resolve_run_dir(args.out)
    print(f"{len(rows)} cells -> {out / 'sweep.csv'}")
    for row in rows:
        cell = " ".join(f"{k}={v}" for k, v in row.items() if k in axes)
        print(f"  [{row['status']}] {cell or 'base'}")
    return 0


def _cmd_report(args) -> int:
    from .plots import emit_plots

    run_dirs = [d for d in args.runs.split(",") if d]
    overlay = [s for s in (args.overlay or "").split(",") if s]
    written = emit_plots(run_dirs, args.out, overlay_ids=overlay or None,
                         sweep_csv=args.sweep)
    print(f"wrote {len(written)} files under {resolve_run_dir(args.out)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cddlab",
                                     description="cross-domain distillation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a corpus directory from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train per a run config and evaluate")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="recompute even if finished")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the config's data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("sweep", help="grid sweep over config axes")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", action="append",
                   help="axis spec like schedules.r_normal=0.3,0.5 (repeatable)")
    p.add_argument("--rnoise", default=None, help="shorthand for an r_noise axis")
    p.add_argument("--algo", default=None, help="shorthand for an algorithm axis")
    p.add_argument("--strategy", default=None, help="shorthand for a strategy axis")
    p.add_argument("--out", required=True)
    p.add_argument("--replicates", type=int, default=3)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("report", help="emit plots and their data twins")
    p.add_argument("--runs", required=True, help="comma-separated run directories")
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", default=None, help="comma-separated sample ids")
    p.add_argument("--sweep", default=None, help="sweep.csv for noise curves")
    p.set_defaults(fn=_cmd_report)
    return parser


def cli(argv=None) -> int:
    """Run one command; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except CddLabError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: missing path: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())
