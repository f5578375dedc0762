"""Cross-domain distillation: the full per-epoch training loop.

Each epoch scores every training sample by how well the current global
student reconstructs its teacher features, carves the set into a shared
high-confidence core plus K random low-confidence shards, trains one
student per domain (warm-started from the global student, regularized
toward it), then aggregates: the global student learns each sample from
the most consensual out-of-domain student's features under input noise,
and from the teacher directly on the high-confidence core.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import models
from .distill import COS_EPS, LossReport, _cos_loss_batch, iter_training_batches
from .errors import ConfigurationError, InputError, TrainingError
from .layers import Adam
from .rng import derive_rng, derive_seed

logger = logging.getLogger(__name__)

STRATEGIES = ("consensual", "next", "all")
LAMBDA_MODES = ("s_shape", "zero", "one", "linear")
DEFAULT_K_SCHEDULE = ((0.25, 2), (0.25, 3), (0.25, 3), (0.25, 2))


# ---------------------------------------------------------------------------
# types

@dataclass
class ConfidenceTable:
    """sample id -> summed per-level mean cosine to the global student."""

    values: dict
    epoch: int = 0

    def __post_init__(self):
        for sid, v in self.values.items():
            if not np.isfinite(v):
                raise InputError(f"confidence for {sid} is not finite")


@dataclass
class DomainPartition:
    """Shared high-confidence core plus K disjoint low-confidence shards."""

    high_conf: list
    low_subsets: list
    K: int

    def __post_init__(self):
        if self.K < 1 or len(self.low_subsets) != self.K:
            raise ConfigurationError(f"K: got {self.K} with {len(self.low_subsets)} subsets")
        hc = set(self.high_conf)
        seen = set(hc)
        sizes = []
        for sub in self.low_subsets:
            s = set(sub)
            if s & hc:
                raise ConfigurationError("low subset overlaps the high-confidence set")
            if s & (seen - hc):
                raise ConfigurationError("low subsets are not disjoint")
            seen |= s
            sizes.append(len(s))
        if sizes and max(sizes) - min(sizes) > 1:
            raise ConfigurationError(f"low subset sizes differ by more than 1: {sizes}")
        self._all_ids = seen

    def domain(self, k: int) -> list:
        """Domain k = high-confidence core plus shard k."""
        return list(self.high_conf) + list(self.low_subsets[k])

    def all_ids(self) -> set:
        return set(self._all_ids)


@dataclass
class CddSchedules:
    """Every schedule the training loop consults."""

    E: int = 20
    r_normal: float = 0.5
    p: float = 4.0
    sigma_noise: float = 0.2
    k_schedule: tuple = DEFAULT_K_SCHEDULE
    lambda_mode: str = "s_shape"

    def __post_init__(self):
        self.k_schedule = tuple((float(f), int(k)) for f, k in self.k_schedule)
        if self.E < 1:
            raise ConfigurationError(f"E: must be >= 1, got {self.E}")
        if not 0 <= self.r_normal <= 1:
            raise ConfigurationError(f"r_normal: must be in [0,1], got {self.r_normal}")
        if self.p <= 0:
            raise ConfigurationError(f"p: must be > 0, got {self.p}")
        if self.sigma_noise < 0:
            raise ConfigurationError(f"sigma_noise: must be >= 0, got {self.sigma_noise}")
        total = sum(f for f, _ in self.k_schedule)
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"k_schedule: phase fractions sum to {total}, expected 1")
        if any(k < 1 for _, k in self.k_schedule):
            raise ConfigurationError("k_schedule: every K must be >= 1")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ConfigurationError(f"lambda_mode: unknown mode {self.lambda_mode!r}")


@dataclass
class PseudoSelection:
    """Choice of supervising student(s) for one sample."""

    strategy: str
    own_domain_index: int
    candidate_indices: list
    affinities: np.ndarray
    selected_index: int = None


# ---------------------------------------------------------------------------
# schedules

def r_schedule(e: int, E: int, r_normal: float = 0.5) -> float:
    """High-confidence fraction: grows linearly with epoch, capped."""
    if not 0 <= e <= E:
        raise InputError(f"r_schedule: epoch {e} outside [0, {E}]")
    return min(e / E, r_normal)


def lambda_schedule(e: int, E: int, p: float = 4.0) -> float:
    """S-shaped regularization weight: 0 at start, 0.5 midway, 1 at the end."""
    if not 0 <= e <= E:
        raise InputError(f"lambda_schedule: epoch {e} outside [0, {E}]")
    x = e / E
    a = x ** p
    b = (1.0 - x) ** p
    return a / (a + b)


def lambda_for_mode(mode: str, e: int, E: int, p: float = 4.0) -> float:
    if mode == "s_shape":
        return lambda_schedule(e, E, p)
    if mode == "zero":
        return 0.0
    if mode == "one":
        return 1.0
    if mode == "linear":
        return e / E
    raise ConfigurationError(f"lambda_mode: unknown mode {mode!r}")


def k_for_epoch(e: int, E: int, k_schedule) -> int:
    """Map contiguous epoch phases onto the K sequence (ceil split)."""
    cum = 0.0
    for frac, k in k_schedule:
        cum += frac
        if e < int(np.ceil(cum * E - 1e-9)):
            return int(k)
    return int(k_schedule[-1][1])


# ---------------------------------------------------------------------------
# feature caches

class _FeatureCache:
    """Per-run teacher features and per-epoch global-student features."""

    def __init__(self, train_view, teacher):
        from .distill import teacher_feature_stack

        self.ids = [s.id for s in train_view]
        self.id_to_idx = {sid: i for i, sid in enumerate(self.ids)}
        self.t_levels = teacher_feature_stack(teacher, train_view)
        self.n = len(self.ids)
        self.student = models.build_student(teacher.config, seed=0)
        self.g_levels = None  # previous-global features, set per epoch

    def forward_all(self, params, chunk: int = 128):
        outs = None
        for start in range(0, self.n, chunk):
            batch = [lv[start:start + chunk] for lv in self.t_levels]
            res = models.student_forward_batch(self.student, batch, params=params)
            if outs is None:
                outs = [np.empty((self.n,) + lv.shape[1:], dtype=lv.dtype) for lv in res]
            for l, lv in enumerate(res):
                outs[l][start:start + lv.shape[0]] = lv
        return outs


def _ensure_cache(train_view, teacher, cache):
    return cache if cache is not None else _FeatureCache(train_view, teacher)


def _mean_cos_per_sample(t_levels, s_levels):
    """Summed per-level spatial-mean cosine -> [N] in [-3, 3]."""
    total = np.zeros(t_levels[0].shape[0], dtype=np.float64)
    for t, s in zip(t_levels, s_levels):
        dot = np.einsum("nchw,nchw->nhw", t, s, dtype=np.float64)
        nt = np.sqrt(np.einsum("nchw,nchw->nhw", t, t, dtype=np.float64))
        ns = np.sqrt(np.einsum("nchw,nchw->nhw", s, s, dtype=np.float64))
        valid = (nt >= COS_EPS) & (ns >= COS_EPS)
        denom = np.where(valid, nt * ns, 1.0)
        cos = np.where(valid, dot / denom, 0.0)
        total += cos.mean(axis=(1, 2))
    return total


def compute_confidence(train_view, teacher, global_params, epoch: int = 0,
                       cache: _FeatureCache = None) -> ConfidenceTable:
    """Normality confidence of every training sample under the global student."""
    cache = _ensure_cache(train_view, teacher, cache)
    g_levels = cache.forward_all(global_params)
    vals = _mean_cos_per_sample(cache.t_levels, g_levels)
    return ConfidenceTable(values={sid: float(v) for sid, v in zip(cache.ids, vals)}, epoch=epoch)


# ---------------------------------------------------------------------------
# domain construction

def construct_domains(conf: ConfidenceTable, r: float, K: int, seed: int) -> DomainPartition:
    """Top-r by confidence become the shared core; the rest are shuffled
    into K near-equal shards."""
    if K < 1:
        raise ConfigurationError(f"K: must be >= 1, got {K}")
    if not 0 <= r <= 1:
        raise ConfigurationError(f"r: must be in [0,1], got {r}")
    ids = sorted(conf.values, key=lambda sid: (-conf.values[sid], sid))
    n_hc = int(np.floor(r * len(ids)))
    high_conf = ids[:n_hc]
    rest = ids[n_hc:]
    rng = np.random.default_rng(seed)
    rest = [rest[i] for i in rng.permutation(len(rest))]
    low_subsets = [list(part) for part in np.array_split(np.array(rest, dtype=object), K)]
    if any(len(s) == 0 for s in low_subsets):
        logger.info("construct_domains: K=%d exceeds %d remaining samples; some shards empty",
                    K, len(rest))
    return DomainPartition(high_conf=high_conf, low_subsets=low_subsets, K=K)


# ---------------------------------------------------------------------------
# training phases

def _steps_for(n_items: int, batch_size: int, budget: int) -> int:
    per_pass = int(np.ceil(n_items / batch_size))
    return per_pass if budget in (0, None) else budget


def train_domain_student(train_view, domain_ids, teacher, prev_global_params, lambda_weight,
                         run_config, epoch: int = 0, domain_index: int = 0,
                         cache: _FeatureCache = None):
    """One domain student: warm-start from the global student, distill from
    the teacher, and (for lambda > 0) stay close to the global student's
    features. Returns (params, per-step LossReport history)."""
    if not domain_ids:
        raise InputError("train_domain_student: empty domain")
    cache = _ensure_cache(train_view, teacher, cache)
    if lambda_weight != 0.0 and cache.g_levels is None:
        cache.g_levels = cache.forward_all(prev_global_params)
    idxs = np.array(sorted(cache.id_to_idx[sid] for sid in domain_ids))

    params = models.clone_params(prev_global_params)
    opt = Adam(params, lr=run_config.learning_rate)
    n_steps = _steps_for(len(idxs), run_config.batch_size, getattr(run_config, "domain_steps", 0))
    rng_for_pass = lambda p: derive_rng(run_config.train_seed, "pass", epoch, domain_index, p)

    history = []
    for step, rel in enumerate(iter_training_batches(len(idxs), run_config.batch_size,
                                                     n_steps, rng_for_pass)):
        sel = idxs[rel]
        batch_t = [lv[sel] for lv in cache.t_levels]
        outs, caches = models.student_forward_batch(cache.student, batch_t, params=params,
                                                    want_cache=True)
        per_layer, total, dlevels = _cos_loss_batch(batch_t, outs, want_grad=True)
        if lambda_weight != 0.0:
            batch_g = [lv[sel] for lv in cache.g_levels]
            g_per_layer, g_total, g_dlevels = _cos_loss_batch(batch_g, outs, want_grad=True)
            per_layer = [a + lambda_weight * b for a, b in zip(per_layer, g_per_layer)]
            total = total + lambda_weight * g_total
            dlevels = [a + lambda_weight * b for a, b in zip(dlevels, g_dlevels)]
        if not np.isfinite(total) or any(not np.all(np.isfinite(o)) for o in outs):
            raise TrainingError(f"domain student {domain_index} epoch {epoch}: loss diverged",
                                last_params=params, history=history)
        grads = models.student_backward_batch(cache.student, dlevels, caches, params=params)
        opt.step(params, grads)
        history.append(LossReport(per_layer=tuple(per_layer), total=total, step=step))
    return params, history


# ---------------------------------------------------------------------------
# pseudo-normal selection

def _levels_of(pyramid):
    return pyramid.levels if hasattr(pyramid, "levels") else list(pyramid)


def affinity_select(sample_features_per_candidate, prev_global_features, strategy,
                    own_domain_index) -> PseudoSelection:
    """Pick the supervising student(s) for one sample.

    Affinity of a candidate is the summed per-level cosine between its
    flattened features and the global student's; `consensual` takes the
    argmax (lowest index on ties), `next` the cyclic successor domain, and
    `all` keeps every candidate with equal weight.
    """
    from .distill import cos_sim

    if strategy not in STRATEGIES:
        raise ConfigurationError(f"strategy: unknown strategy {strategy!r}")
    candidates = sorted(sample_features_per_candidate)
    if own_domain_index in candidates:
        raise InputError("affinity_select: candidates must exclude the sample's own domain")
    k_total = len(candidates) + 1
    if strategy in ("consensual", "next") and k_total < 2:
        raise ConfigurationError(f"strategy {strategy!r} requires K >= 2, got K={k_total}")
    g_levels = _levels_of(prev_global_features)
    affinities = np.array([
        sum(cos_sim(_levels_of(sample_features_per_candidate[h])[l].ravel(),
                    g_levels[l].ravel())
            for l in range(len(g_levels)))
        for h in candidates
    ])
    selected = None
    if strategy == "consensual":
        selected = candidates[int(np.argmax(affinities))]
    elif strategy == "next":
        selected = (own_domain_index + 1) % k_total
        if selected not in candidates:
            raise InputError(f"affinity_select: successor {selected} missing from candidates")
    return PseudoSelection(strategy=strategy, own_domain_index=own_domain_index,
                           candidate_indices=candidates, affinities=affinities,
                           selected_index=selected)


def perturb_teacher_features(pyramid, sigma_noise: float, rng: np.random.Generator):
    """Add i.i.d. zero-mean Gaussian noise to every feature entry."""
    if sigma_noise < 0:
        raise ConfigurationError(f"sigma_noise: must be >= 0, got {sigma_noise}")
    if sigma_noise == 0:
        return pyramid
    levels = _levels_of(pyramid)
    noisy = [lv + rng.normal(0.0, sigma_noise, size=lv.shape).astype(lv.dtype) for lv in levels]
    if hasattr(pyramid, "levels"):
        return models.FeaturePyramid(noisy)
    return noisy


def _rowwise_flat_cos(a, b):
    """Cosine of flattened per-sample features: [N,...] x [N,...] -> [N]."""
    af = a.reshape(a.shape[0], -1).astype(np.float64)
    bf = b.reshape(b.shape[0], -1).astype(np.float64)
    dot = np.einsum("nd,nd->n", af, bf)
    na = np.sqrt(np.einsum("nd,nd->n", af, af))
    nb = np.sqrt(np.einsum("nd,nd->n", bf, bf))
    valid = (na >= COS_EPS) & (nb >= COS_EPS)
    return np.where(valid, dot / np.where(valid, na * nb, 1.0), 0.0)


# ---------------------------------------------------------------------------
# global-student phases

def train_global_cross(train_view, partition, domain_students, teacher, prev_global_params,
                       global_params, schedules, run_config, epoch: int = 0,
                       optimizer: Adam = None, cache: _FeatureCache = None):
    """Aggregate: train the global student toward selected pseudo-normal
    features on noise-perturbed teacher inputs. Returns (params, history)."""
    strategy = getattr(run_config, "strategy", "consensual")
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"strategy: unknown strategy {strategy!r}")
    K = partition.K
    if K < 2:
        if strategy != "all":
            raise ConfigurationError(f"strategy {strategy!r} requires K >= 2, got K={K}")
        return global_params, []  # no out-of-domain candidates to learn from

    cache = _ensure_cache(train_view, teacher, cache)
    if cache.g_levels is None:
        cache.g_levels = cache.forward_all(prev_global_params)

    # per-epoch features of every domain student on every sample
    ds_all = None
    for k in range(K):
        levels = cache.forward_all(domain_students[k])
        if ds_all is None:
            ds_all = [np.empty((K,) + lv.shape, dtype=lv.dtype) for lv in levels]
        for l, lv in enumerate(levels):
            ds_all[l][k] = lv

    items = []
    for k in range(K):
        for sid in partition.domain(k):
            items.append((cache.id_to_idx[sid], k))
    items.sort()
    item_idx = np.array([i for i, _ in items])
    item_own = np.array([k for _, k in items])

    if strategy == "consensual":
        aff = np.empty((K, cache.n))
        for h in range(K):
            aff[h] = sum(_rowwise_flat_cos(ds_all[l][h], cache.g_levels[l]) for l in range(3))
        masked = aff[:, item_idx].copy()
        masked[item_own, np.arange(len(items))] = -np.inf
        item_target = np.argmax(masked, axis=0)  # first max = lowest index on ties
    elif strategy == "next":
        item_target = (item_own + 1) % K

    params = global_params
    opt = optimizer if optimizer is not None else Adam(params, lr=run_config.learning_rate)
    n_steps = _steps_for(len(items), run_config.batch_size, getattr(run_config, "cross_steps", 0))
    rng_for_pass = lambda p: derive_rng(run_config.train_seed, "cross", epoch, p)
    noise_rng = derive_rng(run_config.train_seed, "noise", epoch)

    history = []
    for step, rel in enumerate(iter_training_batches(len(items), run_config.batch_size,
                                                     n_steps, rng_for_pass)):
        sel = item_idx[rel]
        batch_t = [lv[sel] for lv in cache.t_levels]
        batch_in = perturb_teacher_features(batch_t, schedules.sigma_noise, noise_rng)
        outs, caches = models.student_forward_batch(cache.student, batch_in, params=params,
                                                    want_cache=True)
        if strategy == "all":
            per_layer = np.zeros(3)
            total = 0.0
            dlevels = None
            own = item_own[rel]
            for h in range(K):
                active = own != h
                if not np.any(active):
                    continue
                targets = [ds_all[l][h][sel] for l in range(3)]
                # per-sample candidate mask, averaged over the K-1 candidates
                w = active.astype(outs[0].dtype) / (K - 1)
                pl_masked, tot_masked, dl_masked = _masked_cos_loss(targets, outs, w)
                per_layer += np.array(pl_masked)
                total += tot_masked
                dlevels = dl_masked if dlevels is None else [a + b for a, b in
                                                             zip(dlevels, dl_masked)]
            per_layer = list(per_layer)
        else:
            tgt_h = item_target[rel]
            targets = [ds_all[l][tgt_h, sel] for l in range(3)]
            per_layer, total, dlevels = _cos_loss_batch(targets, outs, want_grad=True)
        if not np.isfinite(total) or any(not np.all(np.isfinite(o)) for o in outs):
            raise TrainingError(f"global cross phase epoch {epoch}: loss diverged",
                                last_params=params, history=history)
        grads = models.student_backward_batch(cache.student, dlevels, caches, params=params)
        opt.step(params, grads)
        history.append(LossReport(per_layer=tuple(float(x) for x in per_layer),
                                  total=float(total), step=step))
    return params, history


def _masked_cos_loss(t_levels, s_levels, sample_weights):
    """Cosine loss with per-sample weights (used to average over candidates)."""
    n = s_levels[0].shape[0]
    per_layer = []
    dlevels = []
    for t, s in zip(t_levels, s_levels):
        dot = np.einsum("nchw,nchw->nhw", t, s)
        nt = np.sqrt(np.einsum("nchw,nchw->nhw", t, t))
        ns = np.sqrt(np.einsum("nchw,nchw->nhw", s, s))
        valid = (nt >= COS_EPS) & (ns >= COS_EPS)
        denom = np.where(valid, nt * ns, 1.0)
        cos = np.where(valid, dot / denom, 0.0)
        hw = cos.shape[1] * cos.shape[2]
        w = sample_weights[:, None, None]
        per_layer.append(float(np.sum((1.0 - cos) * w) / (n * hw)))
        inv_denom = np.where(valid, 1.0 / denom, 0.0)
        inv_ns2 = np.where(valid, 1.0 / np.where(valid, ns * ns, 1.0), 0.0)
        g = -(t * inv_denom[:, None] - s * (cos * inv_ns2)[:, None])
        dlevels.append((g * w[:, None]).astype(s.dtype) / (n * hw))
    return per_layer, float(sum(per_layer)), dlevels


def train_global_hc(train_view, high_conf_ids, teacher, global_params, run_config,
                    epoch: int = 0, optimizer: Adam = None, cache: _FeatureCache = None):
    """Direct teacher supervision on the high-confidence core (no input
    noise). Empty core is a no-op. Returns (params, history)."""
    if not high_conf_ids:
        return global_params, []
    cache = _ensure_cache(train_view, teacher, cache)
    idxs = np.array(sorted(cache.id_to_idx[sid] for sid in high_conf_ids))
    params = global_params
    opt = optimizer if optimizer is not None else Adam(params, lr=run_config.learning_rate)
    n_steps = _steps_for(len(idxs), run_config.batch_size, getattr(run_config, "hc_steps", 0))
    rng_for_pass = lambda p: derive_rng(run_config.train_seed, "hc", epoch, p)

    history = []
    for step, rel in enumerate(iter_training_batches(len(idxs), run_config.batch_size,
                                                     n_steps, rng_for_pass)):
        sel = idxs[rel]
        batch_t = [lv[sel] for lv in cache.t_levels]
        outs, caches = models.student_forward_batch(cache.student, batch_t, params=params,
                                                    want_cache=True)
        per_layer, total, dlevels = _cos_loss_batch(batch_t, outs, want_grad=True)
        if not np.isfinite(total) or any(not np.all(np.isfinite(o)) for o in outs):
            raise TrainingError(f"global HC phase epoch {epoch}: loss diverged",
                                last_params=params, history=history)
        grads = models.student_backward_batch(cache.student, dlevels, caches, params=params)
        opt.step(params, grads)
        history.append(LossReport(per_layer=tuple(per_layer), total=total, step=step))
    return params, history


# ---------------------------------------------------------------------------
# orchestration

def run_cdd(fuad_split, teacher, schedules: CddSchedules, run_config, telemetry_path=None,
            checkpoint_dir=None):
    """Full training loop; returns (global params, per-epoch telemetry).

    Telemetry entries carry the epoch's schedule values, domain sizes and
    eval-only anomaly ratios, and per-phase step losses. With a
    `checkpoint_dir` the global student is also snapshotted every epoch.
    """
    train_view = fuad_split.train_view()
    cache = _FeatureCache(train_view, teacher)
    labels_by_id = {s.id: s.label for s in fuad_split.train}  # telemetry only

    student = models.build_student(teacher.config, seed=run_config.model_seed)
    global_params = models.clone_params(student)
    global_opt = Adam(global_params, lr=run_config.learning_rate)

    telemetry = []
    for e in range(schedules.E):
        K = k_for_epoch(e, schedules.E, schedules.k_schedule)
        r = r_schedule(e, schedules.E, schedules.r_normal)
        lam = lambda_for_mode(schedules.lambda_mode, e, schedules.E, schedules.p)

        cache.g_levels = cache.forward_all(global_params)
        conf_vals = _mean_cos_per_sample(cache.t_levels, cache.g_levels)
        conf = ConfidenceTable(values={sid: float(v) for sid, v in zip(cache.ids, conf_vals)},
                               epoch=e)
        partition = construct_domains(conf, r, K, seed=derive_seed(run_config.train_seed,
                                                                   "partition", e))
        prev_global_params = models.clone_params(global_params)

        domain_students = []
        domain_losses = []
        for k in range(K):
            try:
                params_k, hist_k = train_domain_student(
                    train_view, partition.domain(k), teacher, prev_global_params, lam,
                    run_config, epoch=e, domain_index=k, cache=cache)
            except TrainingError as err:
                raise TrainingError(f"epoch {e}, domain {k}: {err}",
                                    last_params=err.last_params, history=telemetry) from err
            domain_students.append(params_k)
            domain_losses.append([h.total for h in hist_k])

        if K == 1:
            # nothing to aggregate across: the single domain student is the
            # epoch's global student
            global_params = models.clone_params(domain_students[0])
            global_opt = Adam(global_params, lr=run_config.learning_rate)
            cross_hist = []
        else:
            try:
                global_params, cross_hist = train_global_cross(
                    train_view, partition, domain_students, teacher, prev_global_params,
                    global_params, schedules, run_config, epoch=e, optimizer=global_opt,
                    cache=cache)
            except TrainingError as err:
                raise TrainingError(f"epoch {e}, cross phase: {err}",
                                    last_params=err.last_params, history=telemetry) from err

        try:
            global_params, hc_hist = train_global_hc(
                train_view, partition.high_conf, teacher, global_params, run_config,
                epoch=e, optimizer=global_opt, cache=cache)
        except TrainingError as err:
            raise TrainingError(f"epoch {e}, high-confidence phase: {err}",
                                last_params=err.last_params, history=telemetry) from err

        domain_ratios = []
        for k in range(K):
            ids = partition.domain(k)
            n_anom = sum(1 for sid in ids if labels_by_id[sid] == "anomalous")
            domain_ratios.append(n_anom / len(ids) if ids else 0.0)

        entry = {
            "epoch": e,
            "K": K,
            "r": r,
            "lambda": lam,
            "hc_size": len(partition.high_conf),
            "domain_sizes": [len(partition.domain(k)) for k in range(K)],
            "domain_anomaly_ratios": domain_ratios,
            "domain_losses": domain_losses,
            "cross_losses": [h.total for h in cross_hist],
            "hc_losses": [h.total for h in hc_hist],
            "mean_domain_loss": float(np.mean([x for hist in domain_losses for x in hist])),
            "mean_cross_loss": float(np.mean([h.total for h in cross_hist])) if cross_hist else None,
            "mean_hc_loss": float(np.mean([h.total for h in hc_hist])) if hc_hist else None,
        }
        telemetry.append(entry)
        if telemetry_path is not None:
            with open(telemetry_path, "a") as f:
                f.write(json.dumps(entry) + "\n")
        if checkpoint_dir is not None:
            from pathlib import Path

            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            models.save_checkpoint(Path(checkpoint_dir) / f"epoch_{e:03d}.npz", global_params,
                                   teacher.config, seed=run_config.model_seed,
                                   extra={"epoch": e})
    return global_params, telemetry
