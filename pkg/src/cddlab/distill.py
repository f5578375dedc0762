"""Cosine feature distillation: losses, the baseline trainer, and inference.

The loss compares teacher and student features location by location along
the channel axis; the anomaly map fuses the per-level disagreement fields
at image resolution and takes its maximum as the image score.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import models
from .errors import InputError, TrainingError
from .layers import Adam
from .rng import derive_rng

COS_EPS = 1e-8
SMOOTH_TRUNCATE = 4.0  # kernel radius = 4 sigma


@dataclass
class LossReport:
    """Per-layer cosine-distance terms for one training step."""

    per_layer: tuple
    total: float
    step: int = 0

    def __post_init__(self):
        if not np.isclose(self.total, sum(self.per_layer), atol=1e-9):
            raise InputError("LossReport: total must equal the sum of per-layer terms")


@dataclass
class AnomalyMap:
    """Per-pixel anomaly field plus its max-derived image score."""

    values: np.ndarray
    image_score: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise InputError("anomaly map contains non-finite values")
        if np.any(self.values < 0):
            raise InputError("anomaly map contains negative values")
        if not np.isclose(self.image_score, float(self.values.max()), atol=0):
            raise InputError("image_score must equal max of map values")


# ---------------------------------------------------------------------------
# cosine primitives

def cos_sim(f1, f2, eps: float = COS_EPS) -> float:
    """Cosine of two equal-length vectors; 0 when either norm is < eps."""
    f1 = np.asarray(f1, dtype=np.float64).ravel()
    f2 = np.asarray(f2, dtype=np.float64).ravel()
    if f1.shape != f2.shape:
        raise InputError(f"cos_sim: length mismatch {f1.shape} vs {f2.shape}")
    n1 = np.linalg.norm(f1)
    n2 = np.linalg.norm(f2)
    if n1 < eps or n2 < eps:
        return 0.0
    return float(np.dot(f1, f2) / (n1 * n2))


def cos_field(t, s, eps: float = COS_EPS):
    """Per-location channel-axis cosine for [N,C,H,W] feature maps -> [N,H,W]."""
    dot = np.einsum("nchw,nchw->nhw", t, s)
    nt = np.sqrt(np.einsum("nchw,nchw->nhw", t, t))
    ns = np.sqrt(np.einsum("nchw,nchw->nhw", s, s))
    valid = (nt >= eps) & (ns >= eps)
    denom = np.where(valid, nt * ns, 1.0)
    return np.where(valid, dot / denom, 0.0)


def _cos_loss_batch(t_levels, s_levels, want_grad: bool):
    """Mean (1 - cos) per level; optionally d(total)/d(s_levels)."""
    per_layer = []
    dlevels = [] if want_grad else None
    for t, s in zip(t_levels, s_levels):
        if t.shape != s.shape:
            raise InputError(f"cosine loss: shape mismatch {t.shape} vs {s.shape}")
        dot = np.einsum("nchw,nchw->nhw", t, s)
        nt = np.sqrt(np.einsum("nchw,nchw->nhw", t, t))
        ns = np.sqrt(np.einsum("nchw,nchw->nhw", s, s))
        valid = (nt >= COS_EPS) & (ns >= COS_EPS)
        denom = np.where(valid, nt * ns, 1.0)
        cos = np.where(valid, dot / denom, 0.0)
        per_layer.append(float(np.mean(1.0 - cos)))
        if want_grad:
            scale = 1.0 / cos.size
            inv_denom = np.where(valid, 1.0 / denom, 0.0)
            inv_ns2 = np.where(valid, 1.0 / np.where(valid, ns * ns, 1.0), 0.0)
            # d(1-cos)/ds = -(t/(|t||s|) - cos * s/|s|^2)
            g = -(t * inv_denom[:, None] - s * (cos * inv_ns2)[:, None]) * scale
            dlevels.append(g.astype(s.dtype, copy=False))
    total = float(sum(per_layer))
    return per_layer, total, dlevels


def layer_cos_loss(f_t, f_s) -> LossReport:
    """Summed per-level mean cosine distance between two pyramids."""
    t_levels = [lv[None] for lv in f_t.levels]
    s_levels = [lv[None] for lv in f_s.levels]
    per_layer, total, _ = _cos_loss_batch(t_levels, s_levels, want_grad=False)
    return LossReport(per_layer=tuple(per_layer), total=total)


# ---------------------------------------------------------------------------
# anomaly map

_BILINEAR_CACHE = {}


def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic 1-D interpolation matrix, half-pixel-center convention."""
    key = (n_in, n_out)
    m = _BILINEAR_CACHE.get(key)
    if m is None:
        m = np.zeros((n_out, n_in))
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        w1 = src - i0
        rows = np.arange(n_out)
        np.add.at(m, (rows, i0), 1.0 - w1)
        np.add.at(m, (rows, i1), w1)
        _BILINEAR_CACHE[key] = m
    return m


def bilinear_resize(maps: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinear upsampling of [N,H,W] maps to [N,out,out]."""
    n, h, w = maps.shape
    mr = _bilinear_matrix(h, out_size).astype(maps.dtype)
    mc = _bilinear_matrix(w, out_size).astype(maps.dtype)
    return np.einsum("oh,nhw,pw->nop", mr, maps, mc, optimize=True)


def anomaly_fields(t_levels, s_levels, out_size: int, smooth_sigma: float = 4.0):
    """Batched map computation -> (smoothed [N,out,out], scores [N])."""
    fused = np.zeros((t_levels[0].shape[0], out_size, out_size), dtype=np.float64)
    for t, s in zip(t_levels, s_levels):
        if t.shape != s.shape:
            raise InputError(f"anomaly map: shape mismatch {t.shape} vs {s.shape}")
        dist = 1.0 - cos_field(np.asarray(t, dtype=np.float64), np.asarray(s, dtype=np.float64))
        fused += bilinear_resize(dist, out_size)
    if smooth_sigma > 0:
        fused = gaussian_filter(fused, sigma=(0.0, smooth_sigma, smooth_sigma),
                                mode="reflect", truncate=SMOOTH_TRUNCATE)
    scores = fused.reshape(fused.shape[0], -1).max(axis=1)
    return fused, scores


def anomaly_map(f_t, f_s, out_size: int, smooth_sigma: float = 4.0) -> AnomalyMap:
    """Fused multi-level disagreement map for one sample."""
    t_levels = [lv[None] for lv in f_t.levels]
    s_levels = [lv[None] for lv in f_s.levels]
    fields, scores = anomaly_fields(t_levels, s_levels, out_size, smooth_sigma)
    return AnomalyMap(values=fields[0], image_score=float(scores[0]))


# ---------------------------------------------------------------------------
# training

def epoch_order(n_items: int, rng: np.random.Generator) -> np.ndarray:
    """Canonical-then-shuffled visiting order for one epoch pass."""
    return rng.permutation(n_items)


def batch_slices(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def iter_training_batches(n_items, batch_size, n_steps, rng_for_pass):
    """Yield index batches; reshuffles with a fresh pass generator when the
    step budget outruns one full pass."""
    done = 0
    pass_no = 0
    while done < n_steps:
        order = epoch_order(n_items, rng_for_pass(pass_no))
        for idx in batch_slices(order, batch_size):
            yield idx
            done += 1
            if done >= n_steps:
                return
        pass_no += 1


def _check_finite_loss(total, params, history, context, outs=None):
    # the zero-norm cosine guard can mask non-finite features, so check
    # the raw outputs too
    bad = not np.isfinite(total)
    if not bad and outs is not None:
        bad = any(not np.all(np.isfinite(o)) for o in outs)
    if bad:
        raise TrainingError(f"{context}: loss diverged (total={total})",
                            last_params=params, history=history)


def teacher_feature_stack(teacher, samples):
    """Teacher levels for a list of samples, computed in chunks."""
    pixels = np.stack([np.asarray(s.pixels) for s in samples])
    outs = None
    for start in range(0, len(samples), 64):
        chunk = models.teacher_forward_batch(teacher, pixels[start:start + 64])
        if outs is None:
            outs = [np.empty((len(samples),) + lv.shape[1:], dtype=lv.dtype) for lv in chunk]
        for l, lv in enumerate(chunk):
            outs[l][start:start + lv.shape[0]] = lv
    return outs


def train_rd(train_view, teacher, student, run_config):
    """Baseline trainer: fit the student to the teacher over the whole set.

    Returns (trained params, per-step LossReport history). The student
    passed in is left untouched; training happens on a deep copy of its
    parameters.
    """
    params = models.clone_params(student)
    opt = Adam(params, lr=run_config.learning_rate)
    t_levels = teacher_feature_stack(teacher, train_view)
    n = len(train_view)
    per_pass = int(np.ceil(n / run_config.batch_size))
    history = []
    step = 0
    for e in range(run_config.schedules.E):
        # stream matches a single-domain pass so the cross-domain loop
        # degenerates to this trainer exactly
        rng_for_pass = lambda p: derive_rng(run_config.train_seed, "pass", e, 0, p)
        for idx in iter_training_batches(n, run_config.batch_size, per_pass, rng_for_pass):
            batch_t = [lv[idx] for lv in t_levels]
            outs, caches = models.student_forward_batch(student, batch_t, params=params,
                                                        want_cache=True)
            per_layer, total, dlevels = _cos_loss_batch(batch_t, outs, want_grad=True)
            _check_finite_loss(total, params, history, f"train_rd epoch {e}", outs)
            grads = models.student_backward_batch(student, dlevels, caches, params=params)
            opt.step(params, grads)
            history.append(LossReport(per_layer=tuple(per_layer), total=total, step=step))
            step += 1
    return params, history


# ---------------------------------------------------------------------------
# inference

def score_dataset(samples, teacher, student_params, run_config):
    """Anomaly maps and image scores for every sample, order-preserving."""
    student = models.build_student(teacher.config, seed=0)
    models.load_params(student, student_params)
    out_size = teacher.config.image_size
    sigma = getattr(run_config, "smooth_sigma", 4.0)
    maps = []
    scores = []
    pixels = np.stack([np.asarray(s.pixels) for s in samples])
    for start in range(0, len(samples), 64):
        t_levels = models.teacher_forward_batch(teacher, pixels[start:start + 64])
        s_levels = models.student_forward_batch(student, t_levels)
        fields, sc = anomaly_fields(t_levels, s_levels, out_size, sigma)
        for i in range(fields.shape[0]):
            maps.append(AnomalyMap(values=fields[i], image_score=float(sc[i])))
        scores.extend(float(v) for v in sc)
    return maps, scores


def export_anomaly_maps(path_prefix, maps, sample_ids=None) -> list:
    """Write maps as normalized PNGs plus raw arrays in the container format.

    Returns the list of written paths.
    """
    from PIL import Image

    ids = sample_ids or [f"{i:04d}" for i in range(len(maps))]
    written = []
    arrays = {}
    hi = max((m.values.max() for m in maps), default=1.0) or 1.0
    for sid, m in zip(ids, maps):
        img = np.clip(m.values / hi * 255.0, 0, 255).astype(np.uint8)
        p = f"{path_prefix}{sid}.png"
        Image.fromarray(img, mode="L").save(p)
        written.append(p)
        arrays[f"param/map_{sid}"] = m.values
    meta = {"format_version": models.CHECKPOINT_VERSION, "kind": "anomaly_maps"}
    raw_path = f"{path_prefix}maps.npz"
    np.savez(raw_path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    written.append(raw_path)
    return written
