"""Reference implementation of the composite training objective.

Dense-map losses (BCE, Dice, Focal Tversky, masked Huber, prevalence,
deep-supervision auxiliary) with analytic gradients, a finite-difference
gradient checker, and a raw-tensor fixture exporter for cross-implementation
agreement tests. Everything runs in float64 on plain numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .seeding import stream

# Probability clipping for BCE; log(0) is otherwise unavoidable on hard labels.
EPS_CLIP = 1e-7


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    return p, t


@dataclass(frozen=True)
class LossWeights:
    """All hyperparameters of the composite objective.

    alpha/beta are the Tversky false-negative/false-positive penalties, gamma
    the focal exponent, delta the Huber transition, epsilon the overlap
    smoothing constant, and p_target the expected blur prevalence. The
    seg_* sub-weights of the segmentation sum default to 1.
    """

    lambda_seg: float = 1.0
    lambda_reg: float = 1.0
    lambda_prev: float = 0.1
    lambda_aux: float = 0.4
    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 4.0 / 3.0
    delta: float = 0.1
    epsilon: float = 1e-6
    p_target: float = 0.5
    aux_scales: int = 2
    seg_bce_weight: float = 1.0
    seg_dice_weight: float = 1.0
    seg_ft_weight: float = 1.0

    def __post_init__(self):
        for name in ("lambda_seg", "lambda_reg", "lambda_prev", "lambda_aux", "alpha",
                     "beta", "seg_bce_weight", "seg_dice_weight", "seg_ft_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.p_target <= 1.0:
            raise ValueError("p_target must be in [0, 1]")
        if self.aux_scales < 1:
            raise ValueError("aux_scales must be >= 1")


@dataclass(frozen=True)
class LossInputs:
    """Prediction/target maps entering the composite objective.

    pred_prob is the post-sigmoid blur probability map, reg_map the predicted
    intensity map; aux_preds holds deep-supervision probability maps at
    coarser scales.
    """

    pred_prob: np.ndarray
    target_mask: np.ndarray
    reg_map: np.ndarray
    target_reg: np.ndarray
    aux_preds: tuple[np.ndarray, ...] = ()


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    seg: float
    bce: float
    dice: float
    focal_tversky: float
    reg: float
    prev: float
    aux: float

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("total", "seg", "bce", "dice", "focal_tversky", "reg", "prev", "aux")}


# ---------------------------------------------------------------------------
# Individual losses. Each *_grad variant returns (value, d value / d pred).


def bce_loss(pred_prob, target) -> float:
    return bce_loss_grad(pred_prob, target)[0]


def bce_loss_grad(pred_prob, target) -> tuple[float, np.ndarray]:
    p, t = _pair(pred_prob, target)
    pc = np.clip(p, EPS_CLIP, 1.0 - EPS_CLIP)
    value = float(-np.mean(t * np.log(pc) + (1.0 - t) * np.log1p(-pc)))
    grad = (-t / pc + (1.0 - t) / (1.0 - pc)) / p.size
    grad = np.where((p > EPS_CLIP) & (p < 1.0 - EPS_CLIP), grad, 0.0)
    return value, grad


def dice_loss(pred_prob, target, eps: float = 1e-6) -> float:
    return dice_loss_grad(pred_prob, target, eps)[0]


def dice_loss_grad(pred_prob, target, eps: float = 1e-6) -> tuple[float, np.ndarray]:
    p, t = _pair(pred_prob, target)
    num = 2.0 * float((p * t).sum()) + eps
    den = float(p.sum() + t.sum()) + eps
    value = 1.0 - num / den
    grad = -(2.0 * t * den - num) / den**2
    return float(value), grad


def tversky_index(pred_prob, target, alpha: float, beta: float, eps: float = 1e-6) -> float:
    return tversky_index_grad(pred_prob, target, alpha, beta, eps)[0]


def tversky_index_grad(pred_prob, target, alpha: float, beta: float,
                       eps: float = 1e-6) -> tuple[float, np.ndarray]:
    p, t = _pair(pred_prob, target)
    inter = float((p * t).sum())
    num = inter + eps
    den = inter + alpha * float(((1.0 - p) * t).sum()) + beta * float((p * (1.0 - t)).sum()) + eps
    # d den / d p_i = t_i - alpha t_i + beta (1 - t_i)
    dden = t - alpha * t + beta * (1.0 - t)
    grad = (t * den - num * dden) / den**2
    return num / den, grad


def focal_tversky_loss(pred_prob, target, alpha: float, beta: float, gamma: float,
                       eps: float = 1e-6) -> float:
    return focal_tversky_loss_grad(pred_prob, target, alpha, beta, gamma, eps)[0]


def focal_tversky_loss_grad(pred_prob, target, alpha: float, beta: float, gamma: float,
                            eps: float = 1e-6) -> tuple[float, np.ndarray]:
    ti, dti = tversky_index_grad(pred_prob, target, alpha, beta, eps)
    shortfall = max(1.0 - ti, 0.0)
    value = shortfall**gamma
    grad = -gamma * shortfall ** (gamma - 1.0) * dti if shortfall > 0 else np.zeros_like(dti)
    return float(value), grad


def masked_huber_loss(reg_map, target_reg, target_mask, delta: float) -> float:
    return masked_huber_loss_grad(reg_map, target_reg, target_mask, delta)[0]


def masked_huber_loss_grad(reg_map, target_reg, target_mask,
                           delta: float) -> tuple[float, np.ndarray]:
    p, t = _pair(reg_map, target_reg)
    mask = np.asarray(target_mask, dtype=np.float64)
    if mask.shape != p.shape:
        raise ValueError(f"shape mismatch: mask {mask.shape} vs reg {p.shape}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    inside = mask > 0
    count = int(inside.sum())
    if count == 0:
        # All-sharp sample: regression contributes nothing by definition.
        return 0.0, np.zeros_like(p)
    r = p - t
    quad = np.abs(r) <= delta
    per_pixel = np.where(quad, 0.5 * r**2, delta * (np.abs(r) - 0.5 * delta))
    value = float(per_pixel[inside].sum() / count)
    grad = np.where(quad, r, delta * np.sign(r)) * inside / count
    return value, grad


def prevalence_loss(pred_prob, p_target: float) -> float:
    return prevalence_loss_grad(pred_prob, p_target)[0]


def prevalence_loss_grad(pred_prob, p_target: float) -> tuple[float, np.ndarray]:
    p = np.asarray(pred_prob, dtype=np.float64)
    diff = float(p.mean() - p_target)
    grad = np.full_like(p, 2.0 * diff / p.size)
    return diff * diff, grad


def downsample_target(target: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Area-average a binary target to `shape`, then re-binarize at 0.5."""
    t = np.asarray(target, dtype=np.float64)
    h, w = t.shape
    oh, ow = shape
    if h % oh != 0 or w % ow != 0:
        raise ValueError(f"target {t.shape} not an integer multiple of scale {shape}")
    block = t.reshape(oh, h // oh, ow, w // ow).mean(axis=(1, 3))
    return (block >= 0.5).astype(np.float64)


def aux_loss(aux_preds: Sequence[np.ndarray], target, eps: float = 1e-6) -> float:
    """Deep-supervision term: mean over scales of BCE + Dice vs downsampled targets."""
    if len(aux_preds) < 1:
        raise ValueError("aux_loss needs at least one scale")
    t = np.asarray(target, dtype=np.float64)
    total = 0.0
    for pred in aux_preds:
        p = np.asarray(pred, dtype=np.float64)
        tl = downsample_target(t, p.shape)
        total += bce_loss(p, tl) + dice_loss(p, tl, eps)
    return total / len(aux_preds)


def total_loss(inputs: LossInputs, weights: LossWeights) -> LossBreakdown:
    """Weighted composite objective with the full per-term breakdown."""
    w = weights
    bce = bce_loss(inputs.pred_prob, inputs.target_mask)
    dice = dice_loss(inputs.pred_prob, inputs.target_mask, w.epsilon)
    ft = focal_tversky_loss(inputs.pred_prob, inputs.target_mask, w.alpha, w.beta,
                            w.gamma, w.epsilon)
    seg = w.seg_bce_weight * bce + w.seg_dice_weight * dice + w.seg_ft_weight * ft
    reg = masked_huber_loss(inputs.reg_map, inputs.target_reg, inputs.target_mask, w.delta)
    prev = prevalence_loss(inputs.pred_prob, w.p_target)
    aux = aux_loss(inputs.aux_preds, inputs.target_mask, w.epsilon) if inputs.aux_preds else 0.0
    total = w.lambda_seg * seg + w.lambda_reg * reg + w.lambda_prev * prev + w.lambda_aux * aux
    return LossBreakdown(total=float(total), seg=float(seg), bce=float(bce), dice=float(dice),
                         focal_tversky=float(ft), reg=float(reg), prev=float(prev),
                         aux=float(aux))


# ---------------------------------------------------------------------------
# Gradient verification


def grad_check(value_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
               x: np.ndarray, h: float = 1e-4) -> float:
    """Max relative error of the analytic gradient vs central finite differences."""
    _, grad = value_grad(x)
    fd = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fd[idx] = (value_grad(xp)[0] - value_grad(xm)[0]) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(grad)), 1e-6)
    return float((np.abs(fd - grad) / denom).max())


def gradcheck_report(tolerance: float = 1e-3, seed: int = 2024, size: int = 8,
                     h: float = 1e-4, fault_inject: bool = False) -> dict:
    """Run finite-difference checks for every loss on seeded random maps.

    The Huber check nudges residuals away from the |r| = delta kink, where
    the loss is non-smooth and finite differences are meaningless.
    """
    rng = stream(seed, "gradcheck")
    weights = LossWeights()
    pred = rng.uniform(0.05, 0.95, (size, size))
    target = (rng.uniform(size=(size, size)) < 0.4).astype(np.float64)
    target_reg = rng.uniform(0.0, 1.0, (size, size))
    reg = np.clip(target_reg + rng.uniform(-0.3, 0.3, (size, size)), 0.0, 1.0)
    kink = np.abs(np.abs(reg - target_reg) - weights.delta) < 10.0 * h
    reg = np.where(kink, reg + 20.0 * h, reg)

    checks: dict[str, Callable[[np.ndarray], tuple[float, np.ndarray]]] = {
        "bce": lambda x: bce_loss_grad(x, target),
        "dice": lambda x: dice_loss_grad(x, target, weights.epsilon),
        "focal_tversky": lambda x: focal_tversky_loss_grad(
            x, target, weights.alpha, weights.beta, weights.gamma, weights.epsilon),
        "masked_huber": lambda x: masked_huber_loss_grad(x, target_reg, target, weights.delta),
        "prevalence": lambda x: prevalence_loss_grad(x, weights.p_target),
    }
    report: dict = {"tolerance": tolerance, "step": h, "checks": {}}
    for name, fn in checks.items():
        x0 = reg if name == "masked_huber" else pred
        if fault_inject and name == "bce":
            fn = lambda x: (bce_loss_grad(x, target)[0], bce_loss_grad(x, target)[1] * 1.01)
        err = grad_check(fn, x0, h)
        report["checks"][name] = {"max_rel_error": err, "pass": bool(err < tolerance)}
    report["pass"] = all(c["pass"] for c in report["checks"].values())
    return report


# ---------------------------------------------------------------------------
# Fixture exchange for cross-implementation agreement


def export_loss_fixtures(out_dir: str | Path, count: int = 20, seed: int = 77,
                         size: int = 16) -> list[Path]:
    """Write raw float32 tensors + JSON headers with expected loss values.

    Each fixture gets its own directory holding one .bin per tensor
    (row-major float32) and a header.json naming shapes, hyperparameters,
    and the reference LossBreakdown.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(count):
        rng = stream(seed, "fixture", i)
        weights = LossWeights(p_target=float(rng.uniform(0.2, 0.6)))
        pred = rng.uniform(0.02, 0.98, (size, size)).astype(np.float32)
        target = (rng.uniform(size=(size, size)) < rng.uniform(0.2, 0.6)).astype(np.float32)
        target_reg = (rng.uniform(0.0, 1.0, (size, size)) * target).astype(np.float32)
        reg = np.clip(target_reg + rng.uniform(-0.4, 0.4, (size, size)), 0, 1).astype(np.float32)
        aux = rng.uniform(0.02, 0.98, (size // 2, size // 2)).astype(np.float32)
        inputs = LossInputs(pred, target, reg, target_reg, (aux,))
        breakdown = total_loss(inputs, weights)

        fdir = out_dir / f"fixture_{i:02d}"
        fdir.mkdir(exist_ok=True)
        tensors = {"pred_prob": pred, "target_mask": target, "reg_map": reg,
                   "target_reg": target_reg, "aux_pred_0": aux}
        header = {"dtype": "float32", "order": "row-major",
                  "weights": {k: getattr(weights, k) for k in (
                      "lambda_seg", "lambda_reg", "lambda_prev", "lambda_aux", "alpha",
                      "beta", "gamma", "delta", "epsilon", "p_target",
                      "seg_bce_weight", "seg_dice_weight", "seg_ft_weight")},
                  "tensors": {}, "expected": breakdown.to_dict()}
        for name, arr in tensors.items():
            (fdir / f"{name}.bin").write_bytes(np.ascontiguousarray(arr).tobytes())
            header["tensors"][name] = {"shape": list(arr.shape), "file": f"{name}.bin"}
        path = fdir / "header.json"
        path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written
