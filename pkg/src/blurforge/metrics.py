"""Segmentation and image-level classification metrics, curves, and threshold search.

Everything is confusion-matrix based; degenerate-class conventions are
explicit (precision with zero predicted positives is 1, absent classes are
excluded from mean IoU) so reports on pathological inputs stay defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _safe_div(num: float, den: float, default: float = 1.0) -> float:
    return num / den if den > 0 else default


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


def confusion(pred_prob, gt, tau: float) -> ConfusionCounts:
    """Threshold pred at tau (>= tau is positive) and count against binary gt."""
    p = _arr(pred_prob)
    g = _arr(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    pb = p >= tau
    gb = g >= 0.5
    return ConfusionCounts(tp=int(np.sum(pb & gb)), fp=int(np.sum(pb & ~gb)),
                           fn=int(np.sum(~pb & gb)), tn=int(np.sum(~pb & ~gb)))


@dataclass(frozen=True)
class SegmentationReport:
    pixel_accuracy: float
    mean_iou: float
    weighted_iou: float
    mean_class_accuracy: float
    iou_blur: float
    iou_sharp: float
    precision: float
    recall: float
    f1_score: float
    precision_sharp: float
    recall_sharp: float
    f1_sharp: float
    threshold: float

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}


def segmentation_report(counts: ConfusionCounts, threshold: float = 0.5) -> SegmentationReport:
    """Two-class pixel metrics from pooled confusion counts.

    Blur is the positive class. A class with an empty gt+pred union is
    scored 1 by convention and excluded from the IoU mean; weighted IoU
    weights by gt class frequency.
    """
    n = counts.total
    if n == 0:
        raise ValueError("empty confusion counts")
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    blur_union = tp + fp + fn
    sharp_union = tn + fn + fp
    iou_blur = _safe_div(tp, blur_union)
    iou_sharp = _safe_div(tn, sharp_union)
    present = [iou for union, iou in ((blur_union, iou_blur), (sharp_union, iou_sharp))
               if union > 0]
    mean_iou = float(np.mean(present)) if present else 1.0
    weighted_iou = ((tp + fn) * iou_blur + (tn + fp) * iou_sharp) / n

    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    precision_sharp = _safe_div(tn, tn + fn)
    recall_sharp = _safe_div(tn, tn + fp)
    class_acc = [r for gt_count, r in ((tp + fn, recall), (tn + fp, recall_sharp))
                 if gt_count > 0]
    return SegmentationReport(
        pixel_accuracy=(tp + tn) / n,
        mean_iou=mean_iou,
        weighted_iou=weighted_iou,
        mean_class_accuracy=float(np.mean(class_acc)) if class_acc else 1.0,
        iou_blur=iou_blur,
        iou_sharp=iou_sharp,
        precision=precision,
        recall=recall,
        f1_score=_f1(precision, recall),
        precision_sharp=precision_sharp,
        recall_sharp=recall_sharp,
        f1_sharp=_f1(precision_sharp, recall_sharp),
        threshold=threshold,
    )


def _f1(precision: float, recall: float) -> float:
    return 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    x: float
    y: float


@dataclass(frozen=True)
class Curve:
    points: tuple[CurvePoint, ...]
    auc: float

    def to_dict(self) -> dict:
        return {"auc": float(self.auc),
                "points": [{"threshold": p.threshold, "x": p.x, "y": p.y}
                           for p in self.points]}


def _as_map_list(preds) -> list[np.ndarray]:
    if isinstance(preds, (list, tuple)):
        return [_arr(p) for p in preds]
    return [_arr(preds)]


def pr_curve(pred_probs, gts, thresholds: Sequence[float]) -> Curve:
    """Pooled precision-recall curve; AUC by trapezoid over recall-sorted points.

    Precision at zero predicted positives is 1 by convention; the integration
    always includes the (recall 0, precision 1) anchor — the tau -> +inf limit
    of that convention — so the curve endpoints are well defined and a perfect
    scorer closes at AUC 1. A single threshold cannot define an area and is
    an error.
    """
    thresholds = np.sort(np.asarray(thresholds, dtype=np.float64))
    if thresholds.size < 2:
        raise ValueError("pr_curve needs at least two thresholds")
    preds = _as_map_list(pred_probs)
    targets = _as_map_list(gts)
    if len(preds) != len(targets):
        raise ValueError("pred/gt count mismatch")
    points = []
    for tau in thresholds:
        pooled = ConfusionCounts(0, 0, 0, 0)
        for p, g in zip(preds, targets):
            pooled = pooled + confusion(p, g, float(tau))
        precision = _safe_div(pooled.tp, pooled.tp + pooled.fp)
        recall = _safe_div(pooled.tp, pooled.tp + pooled.fn)
        points.append(CurvePoint(float(tau), recall, precision))
    # Integrate the achievable envelope: best precision per distinct recall,
    # anchored at (0, 1). Duplicate recalls make a raw trapezoid ill-defined.
    best: dict[float, float] = {0.0: 1.0}
    for p in points:
        best[p.x] = max(best.get(p.x, 0.0), p.y)
    xs = np.array(sorted(best))
    ys = np.array([best[x] for x in xs])
    auc = float(np.trapezoid(ys, xs))
    return Curve(tuple(points), auc)


def image_score(pred_prob, tau_pix: float = 0.5, method: str = "fraction") -> float:
    """Aggregate a probability map to one image-level blur score.

    "fraction": share of pixels at/above tau_pix; "mean": mean probability.
    """
    p = _arr(pred_prob)
    if method == "fraction":
        return float(np.mean(p >= tau_pix))
    if method == "mean":
        return float(p.mean())
    raise ValueError(f"unknown aggregation method: {method}")


def roc_auc(scores, labels) -> float:
    """Rank-based (Mann-Whitney) ROC AUC; ties contribute 1/2."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores/labels shape mismatch")
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def grid_search_threshold(preds, targets, objective: str, grid: Sequence[float]) -> float:
    """Exhaustive threshold search; ties break toward the smallest threshold.

    objective "iou": preds/targets are probability maps and binary masks,
    maximizing pooled blur-class IoU. objective "f1": preds/targets are
    image scores and labels, maximizing classification F1.
    """
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size < 1:
        raise ValueError("empty threshold grid")
    best_tau, best_value = None, -np.inf
    for tau in grid:
        value = _objective_value(preds, targets, objective, float(tau))
        if value > best_value:
            best_tau, best_value = float(tau), value
    return best_tau


def _objective_value(preds, targets, objective: str, tau: float) -> float:
    if objective == "iou":
        pooled = ConfusionCounts(0, 0, 0, 0)
        for p, g in zip(_as_map_list(preds), _as_map_list(targets)):
            pooled = pooled + confusion(p, g, tau)
        return _safe_div(pooled.tp, pooled.tp + pooled.fp + pooled.fn)
    if objective == "f1":
        s = np.asarray(preds, dtype=np.float64).ravel()
        y = np.asarray(targets).ravel().astype(bool)
        pb = s >= tau
        precision = _safe_div(int(np.sum(pb & y)), int(pb.sum()))
        recall = _safe_div(int(np.sum(pb & y)), int(y.sum()))
        return _f1(precision, recall)
    raise ValueError(f"unknown objective: {objective}")


def default_threshold_grid() -> np.ndarray:
    """101 thresholds: 0.00, 0.01, ..., 1.00."""
    return np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1_score: float
    roc_auc: float
    sharp_accuracy: float
    blur_accuracy: float
    threshold: float

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}


def classification_report(scores, labels, tau: float) -> ClassificationReport:
    """Image-level binary metrics at threshold tau (score >= tau is blur).

    Per-class accuracies are recall (blur) and specificity (sharp).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores/labels shape mismatch")
    if s.size == 0:
        raise ValueError("empty score list")
    pb = s >= tau
    tp = int(np.sum(pb & y))
    fp = int(np.sum(pb & ~y))
    fn = int(np.sum(~pb & y))
    tn = int(np.sum(~pb & ~y))
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    specificity = _safe_div(tn, tn + fp)
    return ClassificationReport(
        accuracy=(tp + tn) / s.size,
        precision=precision,
        recall=recall,
        specificity=specificity,
        f1_score=_f1(precision, recall),
        roc_auc=roc_auc(s, y) if 0 < y.sum() < y.size else 0.5,
        sharp_accuracy=specificity,
        blur_accuracy=recall,
        threshold=float(tau),
    )
