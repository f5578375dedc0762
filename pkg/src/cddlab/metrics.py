"""Image/pixel ROC-AUC and the region-overlap localization metric.

`roc_auc` is the Mann-Whitney statistic computed from mid-ranks, which is
exactly P(score_pos > score_neg) + 0.5 P(equal); `auc_trapezoid` is the
same quantity obtained by integrating the ROC curve with integer
accumulation, so the two routes agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label as cc_label
from scipy.stats import rankdata

from .errors import MetricError

PRO_FPR_LIMIT = 0.3
PRO_THRESHOLDS = 200


@dataclass
class MetricsReport:
    i_auc: float
    p_auc: float
    pro: float
    setting: str
    n_test: dict
    train_i_auc: float = None

    def to_text(self) -> str:
        lines = [
            f"setting={self.setting}",
            f"i_auc={self.i_auc!r}",
            f"p_auc={self.p_auc!r}",
            f"pro={self.pro!r}",
            f"counts.normal={self.n_test['normal']}",
            f"counts.anomalous={self.n_test['anomalous']}",
            f"train_i_auc={'' if self.train_i_auc is None else repr(self.train_i_auc)}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        return cls(
            i_auc=float(kv["i_auc"]), p_auc=float(kv["p_auc"]), pro=float(kv["pro"]),
            setting=kv["setting"],
            n_test={"normal": int(kv["counts.normal"]), "anomalous": int(kv["counts.anomalous"])},
            train_i_auc=float(kv["train_i_auc"]) if kv.get("train_i_auc") else None)


def _check_two_classes(labels):
    pos = int(np.sum(labels == 1))
    neg = int(np.sum(labels == 0))
    if pos == 0 or neg == 0:
        raise MetricError(f"AUC undefined: need both classes, got {pos} positive / {neg} negative")
    return pos, neg


def roc_auc(scores, labels) -> float:
    """Probability a positive outranks a negative, ties counted half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise MetricError(f"roc_auc: {scores.shape} scores vs {labels.shape} labels")
    pos, neg = _check_two_classes(labels)
    ranks = rankdata(scores, method="average")
    num = ranks[labels == 1].sum() - pos * (pos + 1) / 2.0
    return float(num / (pos * neg))


def roc_curve(scores, labels):
    """(fpr, tpr, thresholds), threshold sweep from +inf downwards."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    pos, neg = _check_two_classes(labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    distinct = np.nonzero(np.diff(s))[0]
    idx = np.r_[distinct, len(s) - 1]
    tp = np.cumsum(y)[idx]
    fp = (idx + 1) - tp
    fpr = np.r_[0, fp] / neg
    tpr = np.r_[0, tp] / pos
    thresholds = np.r_[np.inf, s[idx]]
    return fpr, tpr, thresholds


def auc_trapezoid(scores, labels) -> float:
    """ROC area via trapezoids, accumulated in exact integer arithmetic."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    pos, neg = _check_two_classes(labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    distinct = np.nonzero(np.diff(s))[0]
    idx = np.r_[distinct, len(s) - 1]
    tp = np.r_[0, np.cumsum(y)[idx]].astype(np.int64)
    fp = np.r_[0, (idx + 1)].astype(np.int64) - tp
    num2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    return float(num2 / (2.0 * pos * neg))


def pixel_auc(maps, masks) -> float:
    """roc_auc pooled over every pixel of every test image."""
    values = np.concatenate([np.asarray(_map_values(m), dtype=np.float64).ravel() for m in maps])
    flat_masks = np.concatenate([np.asarray(mk).ravel() for mk in masks]).astype(np.int64)
    if values.shape != flat_masks.shape:
        raise MetricError("pixel_auc: map/mask pixel counts differ")
    return roc_auc(values, flat_masks)


def _map_values(m):
    return m.values if hasattr(m, "values") else m


_EIGHT = np.ones((3, 3), dtype=int)


def pro(maps, masks, fpr_limit: float = PRO_FPR_LIMIT, n_thresholds: int = PRO_THRESHOLDS) -> float:
    """Mean per-region overlap integrated over FPR in [0, fpr_limit].

    Regions are 8-connected components of each ground-truth mask; the
    threshold grid follows score quantiles so granularity adapts to the
    score distribution.
    """
    values = np.stack([np.asarray(_map_values(m), dtype=np.float64) for m in maps])
    gt = np.stack([np.asarray(mk) for mk in masks]).astype(bool)
    if values.shape != gt.shape:
        raise MetricError(f"pro: map shape {values.shape} vs mask shape {gt.shape}")

    regions = []
    for i in range(gt.shape[0]):
        lab, n = cc_label(gt[i], structure=_EIGHT)
        for r in range(1, n + 1):
            coords = np.nonzero(lab == r)
            regions.append((i, coords))
    if not regions:
        raise MetricError("pro: no anomalous regions in the ground truth")

    neg_total = int((~gt).sum())
    if neg_total == 0:
        raise MetricError("pro: no normal pixels in the ground truth")

    qs = np.linspace(0.0, 1.0, n_thresholds)
    thresholds = np.unique(np.quantile(values, qs))
    curve = [(0.0, 0.0)]  # threshold above max: nothing predicted
    for t in thresholds[::-1]:
        pred = values >= t
        fpr = float((pred & ~gt).sum()) / neg_total
        overlaps = [pred[i][coords].mean() for i, coords in regions]
        curve.append((fpr, float(np.mean(overlaps))))
    curve.append((1.0, 1.0))  # threshold below min: everything predicted

    area = 0.0
    prev_f, prev_p = curve[0]
    for f, p in curve[1:]:
        if f >= fpr_limit:
            if f > prev_f:
                p_at = prev_p + (p - prev_p) * (fpr_limit - prev_f) / (f - prev_f)
            else:
                p_at = p
            area += (fpr_limit - prev_f) * (p_at + prev_p) / 2.0
            return float(area / fpr_limit)
        area += (f - prev_f) * (p + prev_p) / 2.0
        prev_f, prev_p = f, p
    return float(area / fpr_limit)


# ---------------------------------------------------------------------------
# end-to-end evaluation

def evaluate(fuad_split, teacher, student_params, run_config) -> MetricsReport:
    """Score the test set and compute I-AUC, P-AUC, PRO; also the train-set
    score AUC against eval-only labels (how well scores isolate the
    injected anomalies)."""
    from .distill import score_dataset

    maps, scores = score_dataset(fuad_split.test, teacher, student_params, run_config)
    labels = np.array([1 if s.label == "anomalous" else 0 for s in fuad_split.test])
    masks = [s.mask for s in fuad_split.test]
    i_auc = roc_auc(scores, labels)
    p_auc = pixel_auc(maps, masks)
    pro_value = pro(maps, masks)

    train_i_auc = None
    train_labels = np.array([1 if s.label == "anomalous" else 0 for s in fuad_split.train])
    if train_labels.min() == 0 and train_labels.max() == 1:
        _, train_scores = score_dataset(fuad_split.train, teacher, student_params, run_config)
        train_i_auc = roc_auc(train_scores, train_labels)

    return MetricsReport(
        i_auc=i_auc, p_auc=p_auc, pro=pro_value, setting=fuad_split.setting,
        n_test={"normal": int((labels == 0).sum()), "anomalous": int((labels == 1).sum())},
        train_i_auc=train_i_auc)


def save_scores(path, ids, scores, labels=None) -> None:
    """Delimiter-separated score table: id, score, label-if-eval."""
    with open(path, "w") as f:
        f.write("id,score,label\n")
        for i, sid in enumerate(ids):
            lab = "" if labels is None else labels[i]
            f.write(f"{sid},{scores[i]!r},{lab}\n")
