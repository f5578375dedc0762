"""Figure emission: every plot gets a text twin it can be rebuilt from."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .. import models
from ..distill import score_dataset
from ..errors import ReportError
from .config import RunConfig
from .runs import backbone_seed, build_splits, resolve_run_dir
from .sweep import read_table

HIST_BINS = 30


def _read_scores(path: Path):
    rows = path.read_text().strip().splitlines()[1:]
    ids, scores, labels = [], [], []
    for row in rows:
        sid, score, label = row.split(",")
        ids.append(sid)
        scores.append(float(score))
        labels.append(label)
    return ids, np.array(scores), labels


def _hist_plot(scores, labels, title, png_path: Path, csv_path: Path):
    normal = scores[[l == "normal" for l in labels]]
    anom = scores[[l == "anomalous" for l in labels]]
    lo = float(scores.min())
    hi = float(scores.max()) or 1.0
    edges = np.linspace(lo, hi + 1e-9, HIST_BINS + 1)
    n_counts, _ = np.histogram(normal, bins=edges)
    a_counts, _ = np.histogram(anom, bins=edges)

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(normal, bins=edges, alpha=0.6, label=f"normal (n={len(normal)})", color="tab:green")
    if len(anom):
        ax.hist(anom, bins=edges, alpha=0.6, label=f"anomalous (n={len(anom)})", color="tab:red")
    ax.set_xlabel("anomaly score")
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    plt.close(fig)

    lines = ["bin_left,bin_right,normal,anomalous"]
    for i in range(HIST_BINS):
        lines.append(f"{edges[i]!r},{edges[i + 1]!r},{n_counts[i]},{a_counts[i]}")
    csv_path.write_text("\n".join(lines) + "\n")
    return [png_path, csv_path]


def _schedule_plot(telemetry, run_name, out_dir: Path):
    epochs = [t["epoch"] for t in telemetry]
    written = []
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    if "r" in telemetry[0]:
        axes[0].plot(epochs, [t["r"] for t in telemetry], label="r(e)", marker="o", ms=3)
        axes[0].plot(epochs, [t["lambda"] for t in telemetry], label="lambda(e)", marker="s", ms=3)
        axes[0].plot(epochs, [t["K"] for t in telemetry], label="K(e)", marker="^", ms=3)
        axes[0].set_title("schedules")
        axes[0].set_xlabel("epoch")
        axes[0].legend()
        loss_keys = [("mean_domain_loss", "domain"), ("mean_cross_loss", "cross"),
                     ("mean_hc_loss", "high-conf")]
    else:
        loss_keys = [("mean_loss", "distill")]
    for key, label in loss_keys:
        ys = [t.get(key) for t in telemetry]
        xs = [e for e, y in zip(epochs, ys) if y is not None]
        ys = [y for y in ys if y is not None]
        if ys:
            axes[1].plot(xs, ys, label=label, marker="o", ms=3)
    axes[1].set_title("per-epoch mean loss")
    axes[1].set_xlabel("epoch")
    axes[1].legend()
    fig.tight_layout()
    png = out_dir / f"schedule_{run_name}.png"
    fig.savefig(png, dpi=110)
    plt.close(fig)
    written.append(png)

    csv = out_dir / f"schedule_{run_name}.csv"
    if "r" in telemetry[0]:
        lines = ["epoch,r,lambda,K,mean_domain_loss,mean_cross_loss,mean_hc_loss"]
        for t in telemetry:
            lines.append(f"{t['epoch']},{t['r']!r},{t['lambda']!r},{t['K']},"
                         f"{t['mean_domain_loss']!r},{t['mean_cross_loss']!r},{t['mean_hc_loss']!r}")
    else:
        lines = ["epoch,mean_loss"]
        for t in telemetry:
            lines.append(f"{t['epoch']},{t['mean_loss']!r}")
    csv.write_text("\n".join(lines) + "\n")
    written.append(csv)
    return written


def _overlay_panels(run_dir: Path, config: RunConfig, sample_ids, out_dir: Path):
    """input / ground truth / anomaly map, side by side per sample."""
    splits = build_splits(config)
    by_id = {}
    for split in splits.values():
        for s in split.train + split.test:
            by_id.setdefault(s.id, s)
    missing = [sid for sid in sample_ids if sid not in by_id]
    if missing:
        raise ReportError(f"run {run_dir.name}: unknown sample ids {missing}")
    samples = [by_id[sid] for sid in sample_ids]

    params, _ = models.load_checkpoint(run_dir / "checkpoints" / "final.npz", config.model)
    teacher = models.build_teacher(config.model, backbone_seed(config.model))
    maps, _ = score_dataset(samples, teacher, params, config)

    written = []
    for s, m in zip(samples, maps):
        fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.6))
        axes[0].imshow(np.transpose(s.pixels, (1, 2, 0)))
        axes[0].set_title("input")
        axes[1].imshow(s.mask, cmap="gray", vmin=0, vmax=1)
        axes[1].set_title("ground truth")
        im = axes[2].imshow(m.values, cmap="inferno")
        axes[2].set_title(f"map (score {m.image_score:.2f})")
        fig.colorbar(im, ax=axes[2], fraction=0.046)
        for ax in axes:
            ax.set_xticks([])
            ax.set_yticks([])
        fig.tight_layout()
        safe = s.id.replace("/", "_")
        png = out_dir / f"overlay_{run_dir.name}_{safe}.png"
        fig.savefig(png, dpi=110)
        plt.close(fig)
        np.savetxt(out_dir / f"overlay_{run_dir.name}_{safe}.csv", m.values, delimiter=",")
        written += [png, out_dir / f"overlay_{run_dir.name}_{safe}.csv"]
    return written


def _noise_curves(sweep_csv: Path, out_dir: Path):
    rows = read_table(sweep_csv)
    if not any("r_noise" in r and r.get("r_noise") for r in rows):
        return []
    written = []
    algos = sorted({r.get("algorithm", "?") for r in rows})
    for setting in ("no_overlap", "overlap"):
        for metric in ("i_auc", "p_auc", "pro"):
            col = f"{setting}.{metric}.median"
            if not any(col in r and r[col] for r in rows):
                continue
            fig, ax = plt.subplots(figsize=(4.5, 3.2))
            lines = ["algorithm,r_noise,value"]
            for algo in algos:
                pts = sorted((float(r["r_noise"]), float(r[col])) for r in rows
                             if r.get("algorithm", "?") == algo and r.get(col))
                if pts:
                    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=algo)
                    lines += [f"{algo},{x!r},{y!r}" for x, y in pts]
            ax.set_xlabel("train anomaly ratio")
            ax.set_ylabel(f"{metric} (median)")
            ax.set_title(f"{setting}")
            ax.legend()
            fig.tight_layout()
            png = out_dir / f"noise_{setting}_{metric}.png"
            fig.savefig(png, dpi=110)
            plt.close(fig)
            csv = out_dir / f"noise_{setting}_{metric}.csv"
            csv.write_text("\n".join(lines) + "\n")
            written += [png, csv]
    return written


def emit_plots(run_dirs, out_dir, overlay_ids=None, sweep_csv=None) -> list:
    """Histograms, overlays, noise curves, and schedule/loss curves.

    Returns the list of written files; every figure has a data twin.
    """
    out_dir = resolve_run_dir(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for rd in run_dirs:
        rd = resolve_run_dir(rd)
        name = rd.name
        config = RunConfig.load(rd / "config.cfg")
        telem_path = rd / "telemetry.log"
        if not telem_path.exists():
            raise ReportError(f"run {name}: missing telemetry {telem_path}")
        telemetry = [json.loads(line) for line in telem_path.read_text().splitlines() if line]
        if not telemetry:
            raise ReportError(f"run {name}: telemetry is empty")

        ids, scores, labels = _read_scores(rd / "scores_train.csv")
        written += _hist_plot(scores, labels, f"{config.algorithm} train scores",
                              out_dir / f"hist_{name}_train.png", out_dir / f"hist_{name}_train.csv")
        for setting in config.settings_to_eval():
            ids, scores, labels = _read_scores(rd / f"scores_test_{setting}.csv")
            written += _hist_plot(scores, labels, f"{config.algorithm} test scores ({setting})",
                                  out_dir / f"hist_{name}_test_{setting}.png",
                                  out_dir / f"hist_{name}_test_{setting}.csv")
        written += _schedule_plot(telemetry, name, out_dir)
        if overlay_ids:
            written += _overlay_panels(rd, config, overlay_ids, out_dir)
    if sweep_csv is not None:
        written += _noise_curves(Path(sweep_csv), out_dir)
    return written
