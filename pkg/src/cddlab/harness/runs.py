"""Run execution and on-disk run directories.

Layout per run: `config.cfg`, `telemetry.log`, `checkpoints/`,
`metrics.txt`, score tables, `record.json`. A finished run is recognized
by its stored config digest and is not recomputed.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import models
from ..cdd import run_cdd
from ..datagen import build_fuad_split, generate_corpus
from ..distill import score_dataset, train_rd
from ..errors import ConfigurationError
from ..metrics import MetricsReport, evaluate, save_scores
from .config import RunConfig


@dataclass
class RunRecord:
    run_id: str
    config: RunConfig
    config_digest: str
    run_dir: Path
    telemetry_path: Path
    checkpoint_path: Path
    reports: dict  # setting -> MetricsReport
    duration_s: float

    def to_json(self) -> str:
        return json.dumps({
            "run_id": self.run_id,
            "config_digest": self.config_digest,
            "telemetry": str(self.telemetry_path),
            "checkpoint": str(self.checkpoint_path),
            "metrics": {k: {"i_auc": r.i_auc, "p_auc": r.p_auc, "pro": r.pro,
                            "train_i_auc": r.train_i_auc}
                        for k, r in self.reports.items()},
            "duration_s": self.duration_s,
        }, indent=2, sort_keys=True)


def run_root() -> Path:
    return Path(os.environ.get("CDDLAB_RUN_ROOT", "."))


def backbone_seed(model_config) -> int:
    """One frozen teacher per architecture: the desk-scale stand-in for a
    shared pretrained backbone. Replicate seeds vary the student, the
    injection, and the batch order, never the teacher."""
    from ..serialize import digest_of

    return int(digest_of(model_config), 16) & 0x7FFFFFFF


def resolve_run_dir(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else run_root() / p


def build_splits(config: RunConfig):
    """Splits for every requested setting; they share the same train set."""
    normals, anomalies = generate_corpus(config.gen)
    n_train = config.gen.n_train_normal
    splits = {}
    for setting in config.settings_to_eval():
        splits[setting] = build_fuad_split(normals[:n_train], normals[n_train:], anomalies,
                                           config.r_noise, setting, config.data_seed)
    return splits


def load_metrics_file(path) -> dict:
    """metrics.txt -> {setting: MetricsReport}."""
    reports = {}
    for block in Path(path).read_text().strip().split("\n\n"):
        if block.strip():
            r = MetricsReport.from_text(block)
            reports[r.setting] = r
    return reports


def write_metrics_file(path, reports: dict) -> None:
    blocks = [reports[s].to_text() for s in sorted(reports)]
    Path(path).write_text("\n".join(blocks))


def execute_run(config: RunConfig, run_dir, force: bool = False) -> RunRecord:
    """Train per the config and evaluate under every requested setting.

    Finished directories (matching digest + metrics present) are reused
    unless `force` is set, which makes sweeps restartable cell by cell.
    """
    run_dir = resolve_run_dir(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "checkpoints").mkdir(exist_ok=True)
    cfg_path = run_dir / "config.cfg"
    metrics_path = run_dir / "metrics.txt"
    telemetry_path = run_dir / "telemetry.log"
    ckpt_path = run_dir / "checkpoints" / "final.npz"
    digest = config.digest()

    if not force and metrics_path.exists() and cfg_path.exists():
        if RunConfig.load(cfg_path).digest() == digest:
            reports = load_metrics_file(metrics_path)
            rec_meta = json.loads((run_dir / "record.json").read_text()) \
                if (run_dir / "record.json").exists() else {}
            return RunRecord(run_id=run_dir.name, config=config, config_digest=digest,
                             run_dir=run_dir, telemetry_path=telemetry_path,
                             checkpoint_path=ckpt_path, reports=reports,
                             duration_s=rec_meta.get("duration_s", 0.0))

    t0 = time.time()
    config.save(cfg_path)
    telemetry_path.write_text("")

    splits = build_splits(config)
    first_split = splits[next(iter(splits))]
    teacher = models.build_teacher(config.model, backbone_seed(config.model))

    if config.algorithm == "rd":
        student = models.build_student(config.model, config.model_seed)
        params, history = train_rd(first_split.train_view(), teacher, student, config)
        per_epoch = int(np.ceil(len(first_split.train) / config.batch_size))
        with open(telemetry_path, "a") as f:
            for e in range(config.schedules.E):
                chunk = history[e * per_epoch:(e + 1) * per_epoch]
                f.write(json.dumps({"epoch": e,
                                    "mean_loss": float(np.mean([r.total for r in chunk]))}) + "\n")
    elif config.algorithm == "cdd":
        params, _ = run_cdd(first_split, teacher, config.schedules, config,
                            telemetry_path=telemetry_path,
                            checkpoint_dir=run_dir / "checkpoints")
    else:
        raise ConfigurationError(f"algorithm: unknown value {config.algorithm!r}")

    models.save_checkpoint(ckpt_path, params, config.model, config.model_seed,
                           extra={"run_digest": digest, "algorithm": config.algorithm})

    reports = {}
    for setting, split in splits.items():
        reports[setting] = evaluate(split, teacher, params, config)
        _, test_scores = score_dataset(split.test, teacher, params, config)
        save_scores(run_dir / f"scores_test_{setting}.csv",
                    [s.id for s in split.test], test_scores,
                    [s.label for s in split.test])
    _, train_scores = score_dataset(first_split.train, teacher, params, config)
    save_scores(run_dir / "scores_train.csv",
                [s.id for s in first_split.train], train_scores,
                [s.label for s in first_split.train])
    write_metrics_file(metrics_path, reports)

    record = RunRecord(run_id=run_dir.name, config=config, config_digest=digest,
                       run_dir=run_dir, telemetry_path=telemetry_path,
                       checkpoint_path=ckpt_path, reports=reports,
                       duration_s=time.time() - t0)
    (run_dir / "record.json").write_text(record.to_json())
    return record
