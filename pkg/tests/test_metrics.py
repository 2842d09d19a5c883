"""Metrics: confusion counting, reports, curves, AUCs, threshold search."""

import numpy as np
import pytest

from blurforge.metrics import (ClassificationReport, ConfusionCounts, classification_report,
                               confusion, default_threshold_grid, grid_search_threshold,
                               image_score, pr_curve, roc_auc, segmentation_report)


def brute_force_counts(pred, gt, tau):
    tp = fp = fn = tn = 0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            p = pred[y, x] >= tau
            g = gt[y, x] >= 0.5
            if p and g:
                tp += 1
            elif p and not g:
                fp += 1
            elif not p and g:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


# ---------------------------------------------------------------------------
# Confusion + segmentation report


def test_confusion_hand_count():
    pred = np.array([[1.0, 0.0], [1.0, 1.0]])
    gt = np.array([[1.0, 0.0], [0.0, 1.0]])
    c = confusion(pred, gt, 0.5)
    assert (c.tp, c.fp, c.fn, c.tn) == (2, 1, 0, 1)


def test_confusion_trivial_cases():
    gt = np.array([[1.0, 0.0], [0.0, 1.0]])
    c = confusion(gt, gt, 0.5)
    assert c.fp == 0 and c.fn == 0
    c = confusion(np.zeros((3, 3)), np.ones((3, 3)), 0.5)
    assert c.fn == 9 and c.tp == 0


def test_confusion_validation():
    with pytest.raises(ValueError, match="mismatch"):
        confusion(np.zeros((2, 2)), np.zeros((2, 3)), 0.5)
    with pytest.raises(ValueError, match="tau"):
        confusion(np.zeros((2, 2)), np.zeros((2, 2)), 1.5)
    with pytest.raises(ValueError):
        ConfusionCounts(-1, 0, 0, 0)


def test_segmentation_report_hand_values():
    rep = segmentation_report(ConfusionCounts(tp=2, fp=1, fn=0, tn=1))
    assert rep.pixel_accuracy == pytest.approx(0.75)
    assert rep.iou_blur == pytest.approx(2.0 / 3.0)
    assert rep.precision == pytest.approx(2.0 / 3.0)
    assert rep.recall == pytest.approx(1.0)
    assert rep.f1_score == pytest.approx(0.8)


def test_segmentation_report_perfect():
    rep = segmentation_report(ConfusionCounts(tp=5, fp=0, fn=0, tn=11))
    for field in ("pixel_accuracy", "mean_iou", "weighted_iou", "mean_class_accuracy",
                  "iou_blur", "iou_sharp", "precision", "recall", "f1_score"):
        assert getattr(rep, field) == 1.0


def test_segmentation_report_degenerate_conventions():
    # empty gt, empty pred: blur-class metrics are 1; mean_iou excludes blur
    rep = segmentation_report(ConfusionCounts(tp=0, fp=0, fn=0, tn=9))
    assert rep.iou_blur == 1.0
    assert rep.precision == 1.0
    assert rep.mean_iou == 1.0  # only the sharp class is present


def test_segmentation_report_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        pred = rng.uniform(0, 1, (16, 16))
        gt = (rng.uniform(size=(16, 16)) < rng.uniform(0.1, 0.9)).astype(float)
        tau = float(rng.uniform(0.2, 0.8))
        c = confusion(pred, gt, tau)
        tp, fp, fn, tn = brute_force_counts(pred, gt, tau)
        assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
        rep = segmentation_report(c, tau)
        n = 256
        assert rep.pixel_accuracy == pytest.approx((tp + tn) / n)
        if tp + fp + fn > 0:
            assert rep.iou_blur == pytest.approx(tp / (tp + fp + fn))


def test_report_values_in_unit_interval():
    rng = np.random.default_rng(1)
    for _ in range(20):
        c = ConfusionCounts(*(int(v) for v in rng.integers(0, 50, 4)))
        if c.total == 0:
            continue
        rep = segmentation_report(c)
        for value in rep.to_dict().values():
            assert 0.0 <= value <= 1.0
        assert c.tp + c.fp + c.fn + c.tn == c.total


def test_f1_identity_against_independent_computation():
    rng = np.random.default_rng(2)
    for _ in range(30):
        c = ConfusionCounts(*(int(v) for v in rng.integers(1, 40, 4)))
        rep = segmentation_report(c)
        p, r = rep.precision, rep.recall
        assert rep.f1_score == pytest.approx(2 * p * r / (p + r) if p + r else 0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Curves


def test_pr_curve_perfect_auc_one():
    gt = np.array([[1.0, 0.0], [0.0, 1.0]])
    curve = pr_curve([gt], [gt], default_threshold_grid())
    assert curve.auc == pytest.approx(1.0, abs=1e-9)


def test_pr_curve_antiperfect_floors_near_prevalence():
    # inverted continuous scores: the curve collapses toward the prevalence
    # floor (far below the perfect scorer's 1.0)
    rng = np.random.default_rng(3)
    gt = (rng.uniform(size=(20, 20)) < 0.5).astype(float)
    pred = np.where(gt > 0.5, rng.uniform(0.0, 0.45, gt.shape), rng.uniform(0.55, 1.0, gt.shape))
    curve = pr_curve([pred], [gt], default_threshold_grid())
    prevalence = gt.mean()
    assert 0.4 * prevalence <= curve.auc <= prevalence + 0.15


def test_pr_curve_matches_bruteforce_sweep_oracle():
    rng = np.random.default_rng(4)
    pred = rng.uniform(0, 1, (12, 12))
    gt = (rng.uniform(size=(12, 12)) < 0.4).astype(float)
    grid = np.linspace(0, 1, 21)
    curve = pr_curve([pred], [gt], grid)

    # oracle: naive loop sweep + anchored max-envelope trapezoid (the
    # documented integration convention), counts recomputed independently
    best = {0.0: 1.0}
    for tau in grid:
        tp, fp, fn, _ = brute_force_counts(pred, gt, tau)
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / (tp + fn) if tp + fn else 1.0
        best[recall] = max(best.get(recall, 0.0), precision)
    xs = np.array(sorted(best))
    ys = np.array([best[x] for x in xs])
    expected = float(np.trapezoid(ys, xs))
    assert curve.auc == pytest.approx(expected, abs=1e-12)
    assert 0.0 <= curve.auc <= 1.0
    assert [p.threshold for p in curve.points] == sorted(p.threshold for p in curve.points)


def test_pr_curve_single_threshold_rejected():
    gt = np.ones((2, 2))
    with pytest.raises(ValueError, match="two thresholds"):
        pr_curve([gt], [gt], [0.5])


# ---------------------------------------------------------------------------
# Image scores + ROC


def test_image_score_fraction():
    assert image_score(np.zeros((4, 4))) == 0.0
    assert image_score(np.ones((4, 4))) == 1.0
    m = np.zeros((4, 4))
    m[0] = 1.0
    assert image_score(m, tau_pix=0.5) == pytest.approx(0.25)
    assert image_score(m, method="mean") == pytest.approx(0.25)
    with pytest.raises(ValueError, match="method"):
        image_score(m, method="median")


def test_roc_auc_values():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    assert roc_auc([0.9, 0.8, 0.4, 0.2], [1, 0, 1, 0]) == pytest.approx(0.75)


def test_roc_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(4, 40))
        scores = rng.uniform(0, 1, n)
        labels = rng.uniform(size=n) < 0.5
        if labels.all() or not labels.any():
            continue
        # oracle: Mann-Whitney pairwise comparison with half credit for ties
        pos = scores[labels]
        neg = scores[~labels]
        wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
        expected = wins / (len(pos) * len(neg))
        assert roc_auc(scores, labels) == pytest.approx(expected, abs=1e-9)


def test_roc_auc_complementarity():
    rng = np.random.default_rng(6)
    scores = rng.uniform(0, 1, 30)  # continuous, ties have measure zero
    labels = rng.uniform(size=30) < 0.4
    assert roc_auc(scores, labels) + roc_auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


def test_roc_auc_single_class_rejected():
    with pytest.raises(ValueError, match="both classes"):
        roc_auc([0.1, 0.2], [1, 1])


# ---------------------------------------------------------------------------
# Threshold search + classification report


def test_grid_search_constant_objective_returns_smallest():
    scores = np.array([1.0, 1.0, 0.0, 0.0])
    labels = np.array([1, 1, 0, 0])
    grid = [0.3, 0.5, 0.7]  # all give F1 = 1
    assert grid_search_threshold(scores, labels, "f1", grid) == 0.3


def test_grid_search_matches_exhaustive_oracle():
    rng = np.random.default_rng(7)
    scores = rng.uniform(0, 1, 50)
    labels = rng.uniform(size=50) < 0.4
    grid = np.linspace(0, 1, 101)

    def f1_at(tau):
        pb = scores >= tau
        tp = np.sum(pb & labels)
        precision = tp / pb.sum() if pb.sum() else 1.0
        recall = tp / labels.sum() if labels.sum() else 1.0
        return 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    values = [f1_at(t) for t in grid]
    best = max(values)
    expected = grid[min(i for i, v in enumerate(values) if v == best)]
    assert grid_search_threshold(scores, labels, "f1", grid) == pytest.approx(expected)


def test_grid_search_invariant_to_grid_permutation():
    rng = np.random.default_rng(8)
    pred = rng.uniform(0, 1, (8, 8))
    gt = (rng.uniform(size=(8, 8)) < 0.5).astype(float)
    grid = np.linspace(0, 1, 21)
    shuffled = rng.permutation(grid)
    assert (grid_search_threshold([pred], [gt], "iou", grid)
            == grid_search_threshold([pred], [gt], "iou", shuffled))


def test_grid_search_single_point():
    assert grid_search_threshold(np.array([0.6]), np.array([1]), "f1", [0.4]) == 0.4


def test_classification_report_values():
    # perfect predictor
    rep = classification_report([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0], 0.5)
    assert rep.accuracy == rep.precision == rep.recall == rep.specificity == 1.0
    # all-negative predictor on a balanced set
    rep = classification_report([0.1, 0.2, 0.3, 0.0], [1, 0, 1, 0], 0.5)
    assert rep.accuracy == pytest.approx(0.5)
    assert rep.recall == 0.0
    assert rep.specificity == 1.0
    assert rep.blur_accuracy == rep.recall
    assert rep.sharp_accuracy == rep.specificity


def test_classification_report_from_confusion():
    # build scores realizing tp=3, fp=1, fn=1, tn=5 at tau=0.5
    scores = [0.9, 0.8, 0.7, 0.2, 0.6, 0.1, 0.2, 0.3, 0.4, 0.45]
    labels = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    rep = classification_report(scores, labels, 0.5)
    assert rep.precision == pytest.approx(0.75)
    assert rep.recall == pytest.approx(0.75)
    assert rep.accuracy == pytest.approx(0.8)
