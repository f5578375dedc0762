"""Grid sweeps over config axes with per-cell derived seeds.

Each cell runs `replicates` times with seeds derived from (base config
digest, axis values, replicate index), so results are independent of cell
execution order and a deleted cell regenerates identically.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
from pathlib import Path

import numpy as np

from ..errors import CddLabError
from ..serialize import _value_str
from .config import RunConfig, set_config_field
from .runs import execute_run, resolve_run_dir

logger = logging.getLogger(__name__)

_METRIC_KEYS = ("i_auc", "p_auc", "pro", "train_i_auc")


def _cell_seed(base_digest: str, cell: tuple, replicate: int, stream: str) -> int:
    text = f"{base_digest}|{'|'.join(f'{k}={v}' for k, v in cell)}|{replicate}|{stream}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def _slug(cell: tuple) -> str:
    parts = []
    for k, v in cell:
        vs = _value_str(v).replace(",", "-").replace("/", "-").replace(":", "-")
        parts.append(f"{k.split('.')[-1]}={vs}")
    return "_".join(parts) if parts else "base"


def run_sweep(base_config: RunConfig, axes: dict, out_dir, replicates: int = 3):
    """Cartesian sweep; returns table rows and writes `sweep.csv`.

    A failing cell is recorded with status=failed and the sweep continues.
    """
    out_dir = resolve_run_dir(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_digest = base_config.digest()

    axis_names = list(axes)
    combos = list(itertools.product(*(axes[a] for a in axis_names))) if axis_names else [()]
    rows = []
    for combo in combos:
        cell = tuple(zip(axis_names, combo))
        cell_dir = out_dir / "cells" / _slug(cell)
        reports_by_setting = {}
        n_ok = 0
        failure = None
        for rep in range(replicates):
            cfg = base_config
            for key, value in cell:
                cfg = set_config_field(cfg, key, value)
            cfg = set_config_field(cfg, "data_seed", _cell_seed(base_digest, cell, rep, "data"))
            cfg = set_config_field(cfg, "model_seed", _cell_seed(base_digest, cell, rep, "model"))
            cfg = set_config_field(cfg, "train_seed", _cell_seed(base_digest, cell, rep, "train"))
            try:
                record = execute_run(cfg, cell_dir / f"rep{rep}")
            except CddLabError as err:
                failure = str(err)
                logger.warning("sweep cell %s rep %d failed: %s", _slug(cell), rep, err)
                continue
            n_ok += 1
            for setting, report in record.reports.items():
                reports_by_setting.setdefault(setting, []).append(report)

        row = {name: _value_str(value) for name, value in cell}
        row["status"] = "ok" if n_ok == replicates else ("failed" if n_ok == 0 else "partial")
        if failure:
            row["error"] = failure
        row["n_ok"] = n_ok
        for setting, reports in sorted(reports_by_setting.items()):
            for key in _METRIC_KEYS:
                vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
                if vals:
                    row[f"{setting}.{key}.median"] = float(np.median(vals))
                    row[f"{setting}.{key}.mean"] = float(np.mean(vals))
        rows.append(row)

    _write_table(out_dir / "sweep.csv", rows)
    return rows


def _write_table(path: Path, rows) -> None:
    cols = []
    for row in rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_value_str(row.get(c, "")) for c in cols))
    path.write_text("\n".join(lines) + "\n")


def read_table(path) -> list:
    lines = Path(path).read_text().strip().splitlines()
    cols = lines[0].split(",")
    return [dict(zip(cols, line.split(","))) for line in lines[1:]]
