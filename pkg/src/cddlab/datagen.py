"""Synthetic corpora, the noisy-split protocol, and MVTec-style ingestion.

Normal images within a pattern family share one global texture (fixed by
the spec seed) with small per-sample jitter; anomalies are the same
textures with a localized defect whose exact pixels form the ground-truth
mask. Labels and masks ride along on every sample but training code only
ever sees the label-free view.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import CapacityError, ConfigurationError, IngestionError, LabelAccessError
from .rng import derive_rng

PATTERN_FAMILIES = ("stripes", "checker", "blobs")
DEFECT_SHAPES = ("rectangle", "ellipse", "blob")
SETTINGS = ("no_overlap", "overlap")

# mirror of the usual 256 -> 224 resize-then-crop ratio
_CROP_RATIO = 224.0 / 256.0


@dataclass
class ImageSample:
    """One image with its (eval-only) ground truth."""

    id: str
    pixels: np.ndarray  # [C,H,W] float32 in [0,1]
    label: str  # "normal" | "anomalous"
    mask: np.ndarray  # [H,W] uint8, all-zero iff normal
    origin: str = "generated"  # "generated" | "ingested"

    def __post_init__(self):
        if self.label not in ("normal", "anomalous"):
            raise ConfigurationError(f"label: unknown value {self.label!r}")
        if not np.all(np.isfinite(self.pixels)):
            raise ConfigurationError(f"pixels: sample {self.id} has non-finite values")
        if self.pixels.min() < 0 or self.pixels.max() > 1:
            raise ConfigurationError(f"pixels: sample {self.id} outside [0,1]")
        nonzero = int(np.count_nonzero(self.mask))
        if self.label == "normal" and nonzero != 0:
            raise ConfigurationError(f"mask: normal sample {self.id} has a nonzero mask")
        if self.label == "anomalous" and nonzero == 0:
            raise ConfigurationError(f"mask: anomalous sample {self.id} has an empty mask")


class LabelFreeSample:
    """Training-side view of a sample: id and pixels only.

    Reading `label` or `mask` from a training code path is a bug; the view
    makes it one loudly.
    """

    __slots__ = ("id", "pixels")

    def __init__(self, sample: ImageSample):
        object.__setattr__(self, "id", sample.id)
        object.__setattr__(self, "pixels", sample.pixels)

    def __getattr__(self, name):
        if name in ("label", "mask", "origin"):
            raise LabelAccessError(f"sample {self.id}: {name} is eval-only")
        raise AttributeError(name)


@dataclass
class FuadSplit:
    """Train/test lists under one noise ratio and evaluation setting."""

    train: list
    test: list
    r_noise: float
    setting: str
    seed: int

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigurationError(f"setting: unknown value {self.setting!r}")
        train_ids = [s.id for s in self.train]
        test_ids = [s.id for s in self.test]
        if len(set(train_ids)) != len(train_ids):
            raise ConfigurationError("train ids are not unique")
        if len(set(test_ids)) != len(test_ids):
            raise ConfigurationError("test ids are not unique")
        n_anom = sum(1 for s in self.train if s.label == "anomalous")
        if self.train:
            realized = n_anom / len(self.train)
            if abs(realized - self.r_noise) > 1.0 / len(self.train) + 1e-12:
                raise ConfigurationError(
                    f"r_noise: realized ratio {realized:.4f} deviates from {self.r_noise} "
                    f"by more than one sample")
        injected = set(self.injected_ids)
        test_set = set(test_ids)
        if self.setting == "no_overlap" and injected & test_set:
            raise ConfigurationError("no_overlap: injected ids leaked into the test set")
        if self.setting == "overlap" and not injected <= test_set:
            raise ConfigurationError("overlap: injected ids missing from the test set")

    @property
    def injected_ids(self):
        return [s.id for s in self.train if s.label == "anomalous"]

    def train_view(self):
        """Label-free samples for training code paths."""
        return [LabelFreeSample(s) for s in self.train]


@dataclass
class GenSpec:
    """Recipe for one synthetic corpus."""

    image_size: int = 32
    channels: int = 3
    pattern_family: str = "stripes"
    jitter: float = 0.15
    defect_size: tuple = (6, 12)
    defect_contrast: float = 0.5
    defect_shapes: tuple = DEFECT_SHAPES
    n_train_normal: int = 200
    n_test_normal: int = 50
    n_anomalous_pool: int = 60
    seed: int = 0

    def __post_init__(self):
        self.defect_size = tuple(int(v) for v in self.defect_size)
        self.defect_shapes = tuple(self.defect_shapes)
        if self.image_size < 16:
            raise ConfigurationError(f"image_size: {self.image_size} is below the minimum of 16")
        if self.channels != 3:
            raise ConfigurationError(f"channels: must be 3, got {self.channels}")
        if self.pattern_family not in PATTERN_FAMILIES:
            raise ConfigurationError(f"pattern_family: unknown family {self.pattern_family!r}")
        if self.jitter < 0:
            raise ConfigurationError(f"jitter: must be >= 0, got {self.jitter}")
        lo, hi = self.defect_size
        area = self.image_size * self.image_size
        if lo < 1 or hi < lo:
            raise ConfigurationError(f"defect_size: invalid range {self.defect_size}")
        if lo * lo < 0.01 * area:
            raise ConfigurationError(
                f"defect_size: min area {lo * lo} px is below 1% of image area ({0.01 * area:.1f})")
        if hi * hi > 0.25 * area:
            raise ConfigurationError(
                f"defect_size: max area {hi * hi} px exceeds 25% of image area ({0.25 * area:.0f})")
        if not 0 < self.defect_contrast <= 1:
            raise ConfigurationError(f"defect_contrast: must be in (0,1], got {self.defect_contrast}")
        for s in self.defect_shapes:
            if s not in DEFECT_SHAPES:
                raise ConfigurationError(f"defect_shapes: unknown shape {s!r}")
        for name in ("n_train_normal", "n_test_normal", "n_anomalous_pool"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name}: must be >= 0")

    @property
    def area_window(self):
        """Admissible mask pixel counts [lo, hi]."""
        lo, hi = self.defect_size
        area = self.image_size * self.image_size
        return (max(lo * lo, int(np.ceil(0.01 * area))),
                min(hi * hi, int(np.floor(0.25 * area))))


# ---------------------------------------------------------------------------
# texture synthesis

def _quantize(img):
    return (np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def _smooth_noise(rng, size, sigma):
    z = rng.normal(0.0, 1.0, (size, size))
    z = gaussian_filter(z, sigma, mode="wrap")
    z /= max(np.abs(z).max(), 1e-9)
    return z


def _base_texture(spec: GenSpec, family_rng, sample_rng):
    size = spec.image_size
    yy, xx = np.mgrid[:size, :size] / size
    fam = spec.pattern_family
    if fam == "stripes":
        angle = family_rng.uniform(0.0, np.pi)
        freq = family_rng.uniform(3.0, 6.0)
        phase = sample_rng.uniform(0.0, 2.0 * np.pi)
        d_angle = sample_rng.normal(0.0, 0.03)
        u = np.cos(angle + d_angle) * xx + np.sin(angle + d_angle) * yy
        base = 0.5 + 0.3 * np.sin(2.0 * np.pi * freq * u + phase)
    elif fam == "checker":
        cell = int(family_rng.integers(4, max(5, size // 4)))
        shade = family_rng.uniform(0.25, 0.4)
        oy, ox = sample_rng.integers(0, cell, size=2)
        gy = (np.arange(size)[:, None] + oy) // cell
        gx = (np.arange(size)[None, :] + ox) // cell
        base = 0.3 + shade * ((gy + gx) % 2)
        base = base + 0.0 * yy
    else:  # blobs
        base_field = _smooth_noise(family_rng, size, sigma=size / 8.0)
        shift = sample_rng.integers(0, size, size=2)
        base = 0.5 + 0.25 * np.roll(base_field, shift, axis=(0, 1))
    tint = family_rng.uniform(-0.06, 0.06, size=(3, 1, 1))
    img = np.stack([base] * 3) + tint
    # white per-pixel noise: irreducible for any downsampling student, so
    # the normal-score floor saturates early instead of shrinking forever
    img = img + spec.jitter * sample_rng.normal(0.0, 1.0, size=(3, size, size))
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# defect synthesis

def _repair_area(mask, target_lo, target_hi, rng):
    """Add or remove boundary pixels until the area falls in the window."""
    area = int(mask.sum())
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    cy, cx = ys.mean(), xs.mean()
    while area > target_hi:
        ys, xs = np.nonzero(mask)
        d = (ys - cy) ** 2 + (xs - cx) ** 2
        far = np.argmax(d + rng.uniform(0, 0.5, len(d)))
        mask[ys[far], xs[far]] = 0
        area -= 1
    while area < target_lo:
        grown = np.zeros_like(mask)
        grown[:-1] |= mask[1:]
        grown[1:] |= mask[:-1]
        grown[:, :-1] |= mask[:, 1:]
        grown[:, 1:] |= mask[:, :-1]
        ring = np.nonzero(grown & ~mask)
        if len(ring[0]) == 0:
            break
        d = (ring[0] - cy) ** 2 + (ring[1] - cx) ** 2
        near = np.argmin(d + rng.uniform(0, 0.5, len(d)))
        mask[ring[0][near], ring[1][near]] = 1
        area += 1
    return mask


def _defect_mask(spec: GenSpec, shape: str, rng):
    lo, hi = spec.defect_size
    area_lo, area_hi = spec.area_window
    bw = int(rng.integers(lo, hi + 1))
    bh = int(rng.integers(lo, hi + 1))
    box = np.zeros((bh, bw), dtype=bool)
    if shape == "rectangle":
        box[:] = True
    elif shape == "ellipse":
        yy, xx = np.mgrid[:bh, :bw]
        a, b = bh / 2.0, bw / 2.0
        box = ((yy - (bh - 1) / 2.0) / a) ** 2 + ((xx - (bw - 1) / 2.0) / b) ** 2 <= 1.0
        box = _repair_area(box, area_lo, min(area_hi, bh * bw), rng)
    else:  # grown blob
        target = int(rng.integers(max(area_lo, (bh * bw) // 2), bh * bw + 1))
        box[bh // 2, bw // 2] = True
        box = _repair_area(box, target, target, rng)
    size = spec.image_size
    i0 = int(rng.integers(0, size - bh + 1))
    j0 = int(rng.integers(0, size - bw + 1))
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[i0:i0 + bh, j0:j0 + bw] = box
    return mask


N_DEFECT_STYLES = 3


def _defect_styles(spec: GenSpec):
    """Fixed roster of repeating defect appearances for one corpus.

    Anomalies must repeat in type for the noisy-training pathology to be
    reproducible: seen often enough, a style becomes learnable. Each style
    pins a shape family, a base color, a contrast direction, and a
    modulation frequency; instances vary only in position, size, and a
    small amplitude jitter.
    """
    rng = derive_rng(spec.seed, "defect-styles")
    styles = []
    for s in range(N_DEFECT_STYLES):
        shape = spec.defect_shapes[s % len(spec.defect_shapes)]
        # saturated channels only: keeps the stamp visibly distinct from
        # mid-gray textures for every corpus seed
        signs = rng.choice([-1.0, 1.0], size=3)
        color = 0.5 + signs * rng.uniform(0.3, 0.5, size=3)
        direction = 1.0 if s % 2 == 0 else -1.0
        freq = float(rng.uniform(1.5, 3.5))
        angle = float(rng.uniform(0.0, np.pi))
        styles.append({"shape": shape, "color": color, "direction": direction,
                       "freq": freq, "angle": angle})
    return styles


def _apply_defect(img, mask, style, spec: GenSpec, rng):
    """Stamp a style-consistent patch: appearance depends on the style and
    the pixel's offset inside the defect box, not on the underlying image.
    Instances of one style vary in position, size, tint, and modulation
    phase, so a student memorizes seen instances more readily than it
    generalizes to unseen ones."""
    out = img.copy()
    sel = mask.astype(bool)
    ys, xs = np.nonzero(sel)
    y0, x0 = ys.min(), xs.min()
    amp = spec.defect_contrast * rng.uniform(0.85, 1.15)
    # the tint is the instance's identity: low-dimensional, so a student
    # can memorize seen instances yet cannot predict unseen ones
    tint = rng.normal(0.0, 0.18, size=3)
    phase = (np.cos(style["angle"]) * (xs - x0) + np.sin(style["angle"]) * (ys - y0))
    modulation = 0.15 * spec.defect_contrast * np.sin(
        2.0 * np.pi * style["freq"] * phase / max(spec.defect_size[1], 1))
    base = 0.5 + style["direction"] * amp * (style["color"][:, None] + tint[:, None] - 0.5) * 2.0
    out[:, sel] = np.clip(base + modulation[None, :], 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# corpus generation

def generate_corpus(spec: GenSpec):
    """Deterministic corpus -> (normals, anomalies).

    Normals hold n_train_normal train-designated samples followed by
    n_test_normal test-designated ones; anomalies is the injection pool.
    """
    def family_rng():
        # fresh generator per sample: family draws are identical for all samples
        return derive_rng(spec.seed, "family")

    normals = []
    for i in range(spec.n_train_normal + spec.n_test_normal):
        kind = "train-norm" if i < spec.n_train_normal else "test-norm"
        idx = i if i < spec.n_train_normal else i - spec.n_train_normal
        img = _quantize(_base_texture(spec, family_rng(), derive_rng(spec.seed, "normal", i)))
        normals.append(ImageSample(
            id=f"{kind}-{idx:04d}", pixels=img, label="normal",
            mask=np.zeros((spec.image_size, spec.image_size), dtype=np.uint8)))

    styles = _defect_styles(spec)
    anomalies = []
    for i in range(spec.n_anomalous_pool):
        srng = derive_rng(spec.seed, "anomaly", i)
        drng = derive_rng(spec.seed, "defect", i)
        style = styles[i % len(styles)]
        img = _base_texture(spec, family_rng(), srng)
        mask = _defect_mask(spec, style["shape"], drng)
        img = _quantize(_apply_defect(img, mask, style, spec, drng))
        anomalies.append(ImageSample(
            id=f"anom-{i:04d}", pixels=img, label="anomalous", mask=mask))
    return normals, anomalies


def injection_count(n_normal: int, r_noise: float) -> int:
    """Nearest-integer count a with a/(n+a) ~= r_noise; at least 1 when r>0."""
    if r_noise == 0:
        return 0
    a = int(round(r_noise * n_normal / (1.0 - r_noise)))
    return max(a, 1)


def build_fuad_split(normals_train, normals_test, anomaly_pool, r_noise, setting, seed) -> FuadSplit:
    """Inject pool anomalies into the train set at the requested noise ratio."""
    if not 0 <= r_noise < 0.5:
        raise ConfigurationError(f"r_noise: must be in [0, 0.5), got {r_noise}")
    if setting not in SETTINGS:
        raise ConfigurationError(f"setting: unknown value {setting!r}")
    a = injection_count(len(normals_train), r_noise)
    if a > len(anomaly_pool):
        raise CapacityError(
            f"anomaly pool too small: need {a} samples to reach r_noise={r_noise}, "
            f"have {len(anomaly_pool)}")
    rng = derive_rng(seed, "inject")
    picked = sorted(rng.choice(len(anomaly_pool), size=a, replace=False).tolist())
    injected = [anomaly_pool[i] for i in picked]
    injected_ids = {s.id for s in injected}
    train = list(normals_train) + injected
    if setting == "overlap":
        test = list(normals_test) + list(anomaly_pool)
    else:
        test = list(normals_test) + [s for s in anomaly_pool if s.id not in injected_ids]
    return FuadSplit(train=train, test=test, r_noise=r_noise, setting=setting, seed=seed)


# ---------------------------------------------------------------------------
# persistence

def save_corpus(out_dir, normals, anomalies) -> Path:
    """Write lossless PNGs plus a manifest; returns the manifest path."""
    from PIL import Image

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in list(normals) + list(anomalies):
        img_rel = f"images/{s.id}.png"
        arr = np.round(np.asarray(s.pixels) * 255.0).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(arr, mode="RGB").save(out / img_rel)
        mask_rel = "-"
        if s.label == "anomalous":
            mask_rel = f"masks/{s.id}.png"
            Image.fromarray((s.mask * 255).astype(np.uint8), mode="L").save(out / mask_rel)
        lines.append("\t".join((s.id, s.label, img_rel, mask_rel, s.origin)))
    manifest = out / "manifest.tsv"
    manifest.write_text("id\tlabel\timage\tmask\torigin\n" + "\n".join(lines) + "\n")
    return manifest


def load_corpus(corpus_dir):
    """Read a saved corpus back -> (normals, anomalies)."""
    from PIL import Image

    root = Path(corpus_dir)
    manifest = root / "manifest.tsv"
    if not manifest.exists():
        raise IngestionError(f"missing manifest: {manifest}")
    normals, anomalies = [], []
    for line in manifest.read_text().splitlines()[1:]:
        sid, label, img_rel, mask_rel, origin = line.split("\t")
        arr = np.asarray(Image.open(root / img_rel).convert("RGB"), dtype=np.float32) / 255.0
        pixels = arr.transpose(2, 0, 1)
        if mask_rel == "-":
            mask = np.zeros(pixels.shape[1:], dtype=np.uint8)
        else:
            mask = (np.asarray(Image.open(root / mask_rel).convert("L")) > 0).astype(np.uint8)
        sample = ImageSample(id=sid, pixels=pixels, label=label, mask=mask, origin=origin)
        (anomalies if label == "anomalous" else normals).append(sample)
    return normals, anomalies


# ---------------------------------------------------------------------------
# MVTec-style ingestion

def _resize_center_crop(pil_img, size: int, resample):
    from PIL import Image

    inter = max(size, int(round(size / _CROP_RATIO)))
    img = pil_img.resize((inter, inter), resample=resample)
    left = (inter - size) // 2
    return img.crop((left, left, left + size, left + size))


def _find_mask(gt_dir: Path, stem: str):
    if not gt_dir.is_dir():
        return None
    for p in sorted(gt_dir.iterdir()):
        if p.stem == stem or p.stem.startswith(stem + "_") or p.stem == stem + "_mask":
            return p
    return None


def load_mvtec_layout(root_path, image_size: int = 32):
    """Ingest `<category>/train/good`, `<category>/test/<defect>`, ground-truth masks.

    `root_path` may be a category directory or a directory of categories.
    Returns (train, test) sample lists resized and center-cropped.
    """
    from PIL import Image

    root = Path(root_path)
    if not root.is_dir():
        raise IngestionError(f"corpus root does not exist: {root}")
    if (root / "train").is_dir():
        categories = [root]
    else:
        categories = sorted(p for p in root.iterdir() if (p / "train").is_dir())
    if not categories:
        raise IngestionError(f"no MVTec-style category found under {root}")

    def to_sample(path, sid, label, mask_path):
        img = _resize_center_crop(Image.open(path).convert("RGB"), image_size, Image.BILINEAR)
        pixels = (np.asarray(img, dtype=np.float32) / 255.0).transpose(2, 0, 1)
        if mask_path is None:
            mask = np.zeros((image_size, image_size), dtype=np.uint8)
        else:
            m = _resize_center_crop(Image.open(mask_path).convert("L"), image_size, Image.NEAREST)
            mask = (np.asarray(m) > 0).astype(np.uint8)
            if mask.sum() == 0:
                # degenerate after downscaling: keep at least the mask centroid
                big = (np.asarray(Image.open(mask_path).convert("L")) > 0)
                ys, xs = np.nonzero(big)
                cy = min(int(ys.mean() / big.shape[0] * image_size), image_size - 1)
                cx = min(int(xs.mean() / big.shape[1] * image_size), image_size - 1)
                mask[cy, cx] = 1
        return ImageSample(id=sid, pixels=pixels, label=label, mask=mask, origin="ingested")

    train, test = [], []
    for cat in categories:
        prefix = cat.name
        for p in sorted((cat / "train" / "good").glob("*")):
            if p.is_file():
                train.append(to_sample(p, f"{prefix}/train/good/{p.stem}", "normal", None))
        test_dir = cat / "test"
        if not test_dir.is_dir():
            continue
        for defect_dir in sorted(d for d in test_dir.iterdir() if d.is_dir()):
            defect = defect_dir.name
            for p in sorted(defect_dir.glob("*")):
                if not p.is_file():
                    continue
                sid = f"{prefix}/test/{defect}/{p.stem}"
                if defect == "good":
                    test.append(to_sample(p, sid, "normal", None))
                else:
                    mask_path = _find_mask(cat / "ground_truth" / defect, p.stem)
                    if mask_path is None:
                        raise IngestionError(f"missing ground-truth mask for {p}")
                    test.append(to_sample(p, sid, "anomalous", mask_path))
    return train, test
