"""Frozen multi-level teacher encoder and trainable student.

The teacher is a seeded, frozen 3-stage strided convolutional encoder; its
random features are enough to separate texture defects at small image
sizes, and any callable with the same output contract can stand in for it
on real-photo corpora (see `TeacherNet.forward_fn`).

The student is a bottleneck embedding that fuses the teacher pyramid into
one compact code, plus a decoder that expands the code back into a pyramid
with exactly the teacher's level shapes.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from . import layers
from .errors import ConfigurationError, InputError, StateError
from .rng import derive_rng
from .serialize import digest_of

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Shape contract for the teacher/student pair."""

    image_size: int = 32
    in_channels: int = 3
    level_channels: tuple = (16, 32, 64)
    level_strides: tuple = (2, 4, 8)
    nonlinearity: str = "lrelu"
    bottleneck_width: int = 64
    dtype: str = "float32"

    def __post_init__(self):
        self.level_channels = tuple(int(c) for c in self.level_channels)
        self.level_strides = tuple(int(s) for s in self.level_strides)
        if len(self.level_channels) != 3 or len(self.level_strides) != 3:
            raise ConfigurationError("level_channels/level_strides: exactly 3 levels required")
        prev = 1
        for s in self.level_strides:
            if s % prev != 0 or s < prev:
                raise ConfigurationError(f"level_strides: {self.level_strides} must be increasing multiples")
            prev = s
        if self.image_size % self.level_strides[-1] != 0:
            raise ConfigurationError(
                f"level_strides: {self.level_strides[-1]} does not divide image_size {self.image_size}")
        if self.nonlinearity not in ("lrelu", "tanh"):
            raise ConfigurationError(f"nonlinearity: unknown choice {self.nonlinearity!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype: must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def level_shapes(self):
        """[(C_l, H_l, W_l)] for each pyramid level."""
        return [
            (c, self.image_size // s, self.image_size // s)
            for c, s in zip(self.level_channels, self.level_strides)
        ]

    @property
    def stage_strides(self):
        prev = 1
        out = []
        for s in self.level_strides:
            out.append(s // prev)
            prev = s
        return tuple(out)


@dataclass
class FeaturePyramid:
    """L=3 dense feature maps for one sample, coarser level by level."""

    levels: list

    def __post_init__(self):
        if len(self.levels) != 3:
            raise InputError(f"pyramid must have 3 levels, got {len(self.levels)}")
        sizes = [lv.shape[-1] for lv in self.levels]
        if not (sizes[0] > sizes[1] > sizes[2]):
            raise InputError(f"pyramid spatial sizes must strictly decrease, got {sizes}")
        for lv in self.levels:
            if not np.all(np.isfinite(lv)):
                raise InputError("pyramid contains non-finite values")

    def shapes(self):
        return [lv.shape for lv in self.levels]


def stack_pyramids(pyramids):
    """list[FeaturePyramid] -> per-level [N,C,H,W] arrays."""
    return [np.stack([p.levels[l] for p in pyramids]) for l in range(3)]


def unstack_pyramids(levels):
    """Per-level [N,C,H,W] arrays -> list[FeaturePyramid]."""
    n = levels[0].shape[0]
    return [FeaturePyramid([levels[l][i] for l in range(3)]) for i in range(n)]


# ---------------------------------------------------------------------------
# teacher

@dataclass
class TeacherNet:
    config: ModelConfig
    params: dict
    init_seed: int
    forward_fn: object = None  # optional external feature extractor

    def params_hash(self) -> str:
        return _params_hash(self.params)


def build_teacher(config: ModelConfig, seed: int) -> TeacherNet:
    """Frozen encoder with parameters drawn deterministically from `seed`."""
    rng = derive_rng(seed, "teacher")
    dtype = config.np_dtype
    params = {}
    c_in = config.in_channels
    for l, c_out in enumerate(config.level_channels):
        w, b = layers.init_conv_orthogonal(rng, c_out, c_in, 3, dtype)
        params[f"enc{l}.w"] = w
        params[f"enc{l}.b"] = b
        c_in = c_out
    for v in params.values():
        v.flags.writeable = False
    return TeacherNet(config=config, params=params, init_seed=seed)


def teacher_forward_batch(teacher: TeacherNet, images: np.ndarray):
    """Images [N,3,H,W] -> per-level feature arrays [N,C_l,H_l,W_l]."""
    cfg = teacher.config
    if images.ndim != 4 or images.shape[1:] != (cfg.in_channels, cfg.image_size, cfg.image_size):
        raise InputError(
            f"teacher_forward: expected [N,{cfg.in_channels},{cfg.image_size},{cfg.image_size}], "
            f"got {images.shape}")
    if teacher.forward_fn is not None:
        return teacher.forward_fn(images)
    h = images.astype(cfg.np_dtype, copy=False)
    feats = []
    for l, s in enumerate(cfg.stage_strides):
        h, _ = layers.conv2d_forward(h, teacher.params[f"enc{l}.w"], teacher.params[f"enc{l}.b"],
                                     stride=s, pad=1)
        h, _ = layers.act_forward(h, cfg.nonlinearity)
        feats.append(h)
    return feats


def teacher_forward(teacher: TeacherNet, image: np.ndarray) -> FeaturePyramid:
    """Single image [3,H,W] -> FeaturePyramid."""
    levels = teacher_forward_batch(teacher, image[None])
    return FeaturePyramid([lv[0] for lv in levels])


def teacher_forward_many(teacher: TeacherNet, images) -> list:
    """Batch of images -> list of pyramids, order-preserving."""
    levels = teacher_forward_batch(teacher, np.asarray(images))
    return unstack_pyramids(levels)


# ---------------------------------------------------------------------------
# student

@dataclass
class StudentNet:
    """Bottleneck embedding + decoder; `params` are the trainable state."""

    config: ModelConfig
    params: dict
    init_seed: int

    @property
    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def params_hash(self) -> str:
        return _params_hash(self.params)


def build_student(config: ModelConfig, seed: int) -> StudentNet:
    rng = derive_rng(seed, "student")
    dtype = config.np_dtype
    chans = config.level_channels
    fused = sum(chans)
    bw = config.bottleneck_width
    params = {}
    params["ocbe.w"], params["ocbe.b"] = layers.init_conv(rng, bw, fused, 1, dtype)
    # decoder trunk widths mirror the teacher channels, deepest first
    widths = [chans[2], chans[1], chans[0]]
    c_prev = bw
    for i, l in enumerate((2, 1, 0)):
        params[f"dec{l}.w"], params[f"dec{l}.b"] = layers.init_conv(rng, widths[i], c_prev, 3, dtype)
        params[f"head{l}.w"], params[f"head{l}.b"] = layers.init_conv(rng, chans[l], widths[i], 1, dtype)
        c_prev = widths[i]
    return StudentNet(config=config, params=params, init_seed=seed)


def _check_pyramid_levels(config, levels):
    shapes = [lv.shape[1:] for lv in levels]
    want = config.level_shapes()
    if [tuple(s) for s in shapes] != [tuple(w) for w in want]:
        raise InputError(f"student_forward: pyramid shapes {shapes} do not match contract {want}")


def student_forward_batch(student: StudentNet, levels, params=None, want_cache=False):
    """Teacher levels [N,C_l,H_l,W_l] -> reconstructed levels, same shapes."""
    cfg = student.config
    p = student.params if params is None else params
    _check_pyramid_levels(cfg, levels)
    act = cfg.nonlinearity
    strides = cfg.level_strides
    caches = {}

    pooled = []
    for l in range(3):
        f = strides[2] // strides[l]
        if f > 1:
            y, c = layers.avg_pool_forward(levels[l], f)
        else:
            y, c = levels[l], None
        pooled.append(y)
        caches[f"pool{l}"] = c
    fused = np.concatenate(pooled, axis=1)
    z_pre, caches["ocbe"] = layers.conv2d_forward(fused, p["ocbe.w"], p["ocbe.b"], stride=1, pad=0)
    z, caches["ocbe_act"] = layers.act_forward(z_pre, act)

    outs = [None, None, None]
    h = z
    for l in (2, 1, 0):
        if l < 2:
            f = strides[l + 1] // strides[l]
            h, caches[f"up{l}"] = layers.nearest_up_forward(h, f)
        g_pre, caches[f"dec{l}"] = layers.conv2d_forward(h, p[f"dec{l}.w"], p[f"dec{l}.b"], stride=1, pad=1)
        g, caches[f"dec{l}_act"] = layers.act_forward(g_pre, act)
        outs[l], caches[f"head{l}"] = layers.conv2d_forward(g, p[f"head{l}.w"], p[f"head{l}.b"],
                                                            stride=1, pad=0)
        h = g
    if want_cache:
        return outs, caches
    return outs


def student_backward_batch(student: StudentNet, dlevels, caches, params=None):
    """Gradient of a scalar loss w.r.t. student params, given d(loss)/d(output levels)."""
    cfg = student.config
    p = student.params if params is None else params
    act = cfg.nonlinearity
    strides = cfg.level_strides
    grads = {}

    dh = None
    for l in (0, 1, 2):
        dg_head, grads[f"head{l}.w"], grads[f"head{l}.b"] = layers.conv2d_backward(
            dlevels[l], caches[f"head{l}"])
        dg = dg_head if dh is None else dg_head + dh
        dg_pre = layers.act_backward(dg, caches[f"dec{l}_act"], act)
        dup, grads[f"dec{l}.w"], grads[f"dec{l}.b"] = layers.conv2d_backward(dg_pre, caches[f"dec{l}"])
        if l < 2:
            dh = layers.nearest_up_backward(dup, caches[f"up{l}"])
        else:
            dz = dup
    dz_pre = layers.act_backward(dz, caches["ocbe_act"], act)
    _, grads["ocbe.w"], grads["ocbe.b"] = layers.conv2d_backward(dz_pre, caches["ocbe"])
    return grads


def student_forward(student: StudentNet, pyramid: FeaturePyramid, params=None) -> FeaturePyramid:
    """Single-sample forward; pure for fixed params."""
    levels = [lv[None] for lv in pyramid.levels]
    outs = student_forward_batch(student, levels, params=params)
    return FeaturePyramid([o[0] for o in outs])


# ---------------------------------------------------------------------------
# parameter state

def clone_params(student_or_params) -> dict:
    """Deep copy of a parameter set; training a copy never touches the source."""
    params = student_or_params.params if hasattr(student_or_params, "params") else student_or_params
    return {k: np.array(v, copy=True) for k, v in params.items()}


def load_params(student: StudentNet, params: dict) -> None:
    """Install a deep copy of `params` into the student."""
    own = student.params
    if set(params) != set(own):
        missing = set(own) ^ set(params)
        raise StateError(f"load_params: parameter names differ for {sorted(missing)}")
    for k, v in params.items():
        if v.shape != own[k].shape:
            raise StateError(f"load_params: shape mismatch for {k}: {v.shape} vs {own[k].shape}")
    student.params = {k: np.array(v, dtype=own[k].dtype, copy=True) for k, v in params.items()}


def _params_hash(params: dict) -> str:
    import hashlib

    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k]).tobytes())
    return h.hexdigest()[:16]


def params_hash(params: dict) -> str:
    return _params_hash(params)


# ---------------------------------------------------------------------------
# checkpoint container

def save_checkpoint(path, params: dict, config: ModelConfig, seed: int, extra: dict = None) -> None:
    """Versioned container: header + named parameter arrays."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config_digest": digest_of(config),
        "seed": int(seed),
        "dtype": config.dtype,
    }
    if extra:
        meta.update(extra)
    arrays = {f"param/{k}": v for k, v in params.items()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path, config: ModelConfig = None):
    """Load (params, meta); validates format version and, if given, the config digest."""
    with np.load(path) as z:
        if "__meta__" not in z:
            raise StateError(f"checkpoint {path}: missing header")
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise StateError(f"checkpoint {path}: unsupported format version {meta.get('format_version')}")
        if config is not None and meta.get("config_digest") != digest_of(config):
            raise StateError(
                f"checkpoint {path}: config digest {meta.get('config_digest')} does not match "
                f"{digest_of(config)}")
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    return params, meta
