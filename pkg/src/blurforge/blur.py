"""Six physically motivated motion-blur generators over premultiplied foregrounds.

Each generator is a pure function of (foreground, BlurSpec): trajectory-based
types average bilinearly warped frames (exposure-style temporal integration),
the shake type convolves with a stochastic PSF, and the edge-ring type blends
a straight blur into a thin contour band. Every generator also emits a
per-pixel motion-extent map in pixel units, the raw signal behind the
ground-truth intensity target.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import (AffineTransform, Kernel2D, RgbaPremultiplied, bilinear_sample,
                      convolve, gaussian_kernel_1d, stack_planes, warp)
from .seeding import stream

N_FRAMES_MIN = 3
N_FRAMES_MAX = 21

# Alpha above this counts as "inside the support" when marking extents.
SUPPORT_EPS = 1e-6

# 1-pixel feather used at band boundaries (sigma 0.5 discrete Gaussian).
_FEATHER_1PX = gaussian_kernel_1d(0.5)


class BlurType(str, enum.Enum):
    STRAIGHT = "straight"
    CURVED = "curved"
    ZOOM_ROTATION = "zoom_rotation"
    RANDOM_WALK = "random_walk"
    EDGE_RING = "edge_ring"
    ROLLING = "rolling"


def default_n_frames(strength: float) -> int:
    """Frame count heuristic: one frame per pixel of motion, clamped to [3, 21]."""
    return int(min(max(round(strength) + 1, N_FRAMES_MIN), N_FRAMES_MAX))


@dataclass(frozen=True)
class BlurSpec:
    """Full parameterization of one blur application.

    strength is the total trajectory path length in pixels. curve_controls
    holds up to two cubic-Bezier control points in chord-relative units
    (x along the motion direction in [-0.5, 0.5], y perpendicular, both in
    units of strength); empty means they are drawn from the seed. The exact
    collinear third-points (-1/6, 0), (1/6, 0) degenerate to a straight
    trajectory.
    """

    blur_type: BlurType
    strength: float = 8.0
    n_frames: int | None = None
    angle: float = 0.0
    curve_controls: tuple[tuple[float, float], ...] = ()
    max_rotation: float = 0.0
    max_scale: float = 1.0
    walk_steps: int = 0
    ring_width: int = 2
    shear_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blur_type", BlurType(self.blur_type))
        if self.strength < 0:
            raise ValueError("strength must be >= 0")
        n = self.n_frames
        if n is None:
            n = default_n_frames(self.strength)
            object.__setattr__(self, "n_frames", n)
        if not (N_FRAMES_MIN <= n <= N_FRAMES_MAX):
            raise ValueError(f"n_frames must be in [{N_FRAMES_MIN}, {N_FRAMES_MAX}], got {n}")
        if len(self.curve_controls) > 2:
            raise ValueError("at most 2 curve control points")
        object.__setattr__(self, "curve_controls",
                           tuple((float(x), float(y)) for x, y in self.curve_controls))
        if self.walk_steps < 0:
            raise ValueError("walk_steps must be >= 0")
        if self.max_scale <= 0:
            raise ValueError("max_scale must be > 0")
        if self.blur_type is BlurType.EDGE_RING and self.ring_width < 1:
            raise ValueError("ring_width must be >= 1 for edge-ring blur")


@dataclass(frozen=True)
class BlurResult:
    """Blurred foreground plus its per-pixel motion extent (pixel units)."""

    blurred: RgbaPremultiplied
    extent_map: np.ndarray

    def __post_init__(self):
        ext = np.array(self.extent_map, dtype=np.float32)
        if ext.shape != self.blurred.alpha.shape:
            raise ValueError(f"extent_map shape {ext.shape} != image {self.blurred.alpha.shape}")
        if not np.all(np.isfinite(ext)) or float(ext.min()) < 0:
            raise ValueError("extent_map must be finite and non-negative")
        ext.flags.writeable = False
        object.__setattr__(self, "extent_map", ext)


def _support(fg: RgbaPremultiplied, blurred: RgbaPremultiplied) -> np.ndarray:
    return (fg.alpha > SUPPORT_EPS) | (blurred.alpha > SUPPORT_EPS)


def _identity_result(fg: RgbaPremultiplied) -> BlurResult:
    return BlurResult(fg, np.zeros_like(fg.alpha))


def _bezier_cubic(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate the cubic Bezier through 4 control rows at parameters t."""
    t = t[:, None]
    u = 1.0 - t
    return (u * u * u) * p[0] + 3.0 * (u * u * t) * p[1] + 3.0 * (u * t * t) * p[2] + (t * t * t) * p[3]


def generate_trajectory(spec: BlurSpec) -> np.ndarray:
    """Per-frame 2D displacement offsets, centered so the subject stays put.

    Straight/Rolling: collinear along `angle`, spanning `strength` pixels of
    path. Curved: cubic Bezier sampled at uniform parameter steps, rescaled
    so the polyline length equals `strength`. ZoomRotation carries its motion
    in per-frame transforms, so its offsets are all zero.
    """
    if spec.blur_type in (BlurType.RANDOM_WALK, BlurType.EDGE_RING):
        raise ValueError(f"{spec.blur_type.value} blur has no frame trajectory")
    n = spec.n_frames
    if spec.blur_type is BlurType.ZOOM_ROTATION:
        return np.zeros((n, 2))
    ts = np.linspace(-0.5, 0.5, n)
    direction = np.array([np.cos(spec.angle), np.sin(spec.angle)])
    if spec.blur_type in (BlurType.STRAIGHT, BlurType.ROLLING):
        return spec.strength * ts[:, None] * direction
    # Curved: control points in the chord frame, rotated into place.
    controls = spec.curve_controls
    if len(controls) == 0:
        rng = stream(spec.seed, "curve")
        wobble = rng.uniform(-0.5, 0.5, size=2)
        controls = ((-1.0 / 6.0, wobble[0]), (1.0 / 6.0, wobble[1]))
    elif len(controls) == 1:
        controls = (controls[0], controls[0])
    rel = np.array([(-0.5, 0.0), controls[0], controls[1], (0.5, 0.0)])
    rot = np.array([[np.cos(spec.angle), -np.sin(spec.angle)],
                    [np.sin(spec.angle), np.cos(spec.angle)]])
    pts = _bezier_cubic(spec.strength * rel @ rot.T, np.linspace(0.0, 1.0, n))
    length = float(np.hypot(*np.diff(pts, axis=0).T).sum())
    if length > 0:
        pts *= spec.strength / length
    return pts - pts.mean(axis=0)


def _temporal_average(fg: RgbaPremultiplied, frames: list[np.ndarray]) -> RgbaPremultiplied:
    acc = np.zeros((fg.height, fg.width, 4), dtype=np.float64)
    for frame in frames:
        acc += frame
    acc /= len(frames)
    return RgbaPremultiplied(np.clip(acc[..., :3], 0.0, 1.0), np.clip(acc[..., 3], 0.0, 1.0))


def _average_translations(fg: RgbaPremultiplied, offsets: np.ndarray) -> RgbaPremultiplied:
    if np.all(offsets == 0.0):
        return fg
    frames = []
    for dx, dy in offsets:
        w = warp(fg, AffineTransform.translation(dx, dy))
        frames.append(stack_planes(w))
    return _temporal_average(fg, frames)


def blur_straight(fg: RgbaPremultiplied, spec: BlurSpec) -> BlurResult:
    """Linear motion streaks: mean of frames translated along a straight path."""
    if spec.blur_type is not BlurType.STRAIGHT:
        raise ValueError(f"blur_straight got {spec.blur_type.value}")
    blurred = _average_translations(fg, generate_trajectory(spec))
    if blurred is fg:
        return _identity_result(fg)
    extent = np.where(_support(fg, blurred), np.float32(spec.strength), np.float32(0.0))
    return BlurResult(blurred, extent)


def blur_curved(fg: RgbaPremultiplied, spec: BlurSpec) -> BlurResult:
    """Curved motion trails: mean of frames translated along a Bezier path."""
    if spec.blur_type is not BlurType.CURVED:
        raise ValueError(f"blur_curved got {spec.blur_type.value}")
    blurred = _average_translations(fg, generate_trajectory(spec))
    if blurred is fg:
        return _identity_result(fg)
    extent = np.where(_support(fg, blurred), np.float32(spec.strength), np.float32(0.0))
    return BlurResult(blurred, extent)


def alpha_centroid(fg: RgbaPremultiplied) -> tuple[float, float]:
    """Center of alpha mass (x, y); raises on a fully transparent foreground."""
    total = float(fg.alpha.sum())
    if total <= 0:
        raise ValueError("alpha centroid undefined for a zero-alpha foreground")
    ys, xs = np.meshgrid(np.arange(fg.height), np.arange(fg.width), indexing="ij")
    return (float((fg.alpha * xs).sum() / total), float((fg.alpha * ys).sum() / total))


def blur_zoom_rotation(fg: RgbaPremultiplied, spec: BlurSpec) -> BlurResult:
    """Rotational drift with mild scale variation about the alpha centroid."""
    if spec.blur_type is not BlurType.ZOOM_ROTATION:
        raise ValueError(f"blur_zoom_rotation got {spec.blur_type.value}")
    cx, cy = alpha_centroid(fg)
    if spec.max_rotation == 0.0 and spec.max_scale == 1.0:
        return _identity_result(fg)
    frames = []
    for t in np.linspace(-0.5, 0.5, spec.n_frames):
        transform = AffineTransform.rotation_scale_about(
            spec.max_rotation * t, 1.0 + (spec.max_scale - 1.0) * t, (cx, cy))
        frames.append(stack_planes(warp(fg, transform)))
    blurred = _temporal_average(fg, frames)
    ys, xs = np.meshgrid(np.arange(fg.height, dtype=np.float64),
                         np.arange(fg.width, dtype=np.float64), indexing="ij")
    radius = np.hypot(xs - cx, ys - cy)
    arc = radius * (abs(spec.max_rotation) + abs(spec.max_scale - 1.0))
    extent = np.where(_support(fg, blurred), arc, 0.0).astype(np.float32)
    return BlurResult(blurred, extent)


def _random_walk_points(walk_steps: int, strength: float, seed: int) -> np.ndarray:
    """Centroid-centered polyline of a seeded heading-increment walk.

    Unit steps whose heading drifts by uniform(-pi/3, pi/3) each step, scaled
    so the bounding extent (largest axis span) equals `strength`.
    """
    if walk_steps == 0:
        return np.zeros((1, 2))
    rng = stream(seed, "walk")
    headings = np.empty(walk_steps)
    headings[0] = rng.uniform(0.0, 2.0 * np.pi)
    if walk_steps > 1:
        headings[1:] = rng.uniform(-np.pi / 3.0, np.pi / 3.0, size=walk_steps - 1)
    headings = np.cumsum(headings)
    steps = np.stack([np.cos(headings), np.sin(headings)], axis=1)
    pts = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    extent = float(max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1])))
    pts *= strength / extent if extent > 0 else 0.0
    return pts - pts.mean(axis=0)


def _splat_bilinear(acc: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    weights: np.ndarray, radius: int) -> None:
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    for oy, wy in ((0, 1.0 - fy), (1, fy)):
        for ox, wx in ((0, 1.0 - fx), (1, fx)):
            w = weights * wx * wy
            keep = w > 0
            np.add.at(acc, (y0[keep] + oy + radius, x0[keep] + ox + radius), w[keep])


def generate_random_walk_kernel(walk_steps: int, strength: float, seed: int) -> Kernel2D:
    """Stochastic shake PSF: a seeded random-walk path splatted bilinearly.

    The path is densified to sub-half-pixel spacing and stamped with
    arc-length weights, then normalized to unit mass. walk_steps = 0 (or
    strength = 0) gives the delta kernel.
    """
    if walk_steps < 0:
        raise ValueError("walk_steps must be >= 0")
    pts, _ = _densified_walk(walk_steps, strength, seed)
    max_abs = float(np.abs(pts).max()) if len(pts) else 0.0
    radius = int(np.ceil(max_abs - 1e-9)) if max_abs > 0 else 0
    acc = np.zeros((2 * radius + 2, 2 * radius + 2))
    weights = np.full(len(pts), 1.0 / len(pts))
    _splat_bilinear(acc, pts[:, 0], pts[:, 1], weights, radius)
    k = 2 * radius + 1
    return Kernel2D(acc[:k, :k] / acc[:k, :k].sum())


def _densified_walk(walk_steps: int, strength: float, seed: int) -> tuple[np.ndarray, float]:
    """Sub-sampled walk points (<= 0.5 px spacing) and the total path length."""
    pts = _random_walk_points(walk_steps, strength, seed)
    if len(pts) < 2:
        return pts, 0.0
    deltas = np.diff(pts, axis=0)
    seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
    path_length = float(seg_len.sum())
    if path_length == 0.0:
        return pts[:1], 0.0
    dense = []
    for i, d in enumerate(seg_len):
        m = max(1, int(np.ceil(d / 0.5)))
        f = (np.arange(m) + 0.5) / m
        dense.append(pts[i] + f[:, None] * deltas[i])
    return np.vstack(dense), path_length


def blur_random_walk(fg: RgbaPremultiplied, spec: BlurSpec) -> BlurResult:
    """Shake blur: convolve every plane with the stochastic PSF."""
    if spec.blur_type is not BlurType.RANDOM_WALK:
        raise ValueError(f"blur_random_walk got {spec.blur_type.value}")
    kernel = generate_random_walk_kernel(spec.walk_steps, spec.strength, spec.seed)
    if kernel.size == 1:
        return _identity_result(fg)
    _, path_length = _densified_walk(spec.walk_steps, spec.strength, spec.seed)
    blurred = convolve(fg, kernel)
    extent = np.where(_support(fg, blurred), np.float32(path_length), np.float32(0.0))
    return BlurResult(blurred, extent)


def edge_band(alpha_binary: np.ndarray, ring_width: int) -> np.ndarray:
    """Contour band: dilation minus erosion with a square element of radius r."""
    size = 2 * int(ring_width) + 1
    grown = ndimage.maximum_filter(alpha_binary, size=size, mode="constant", cval=False)
    shrunk = ndimage.minimum_filter(alpha_binary, size=size, mode="constant", cval=False)
    return grown & ~shrunk


def blur_edge_ring(fg: RgbaPremultiplied, spec: BlurSpec) -> BlurResult:
    """Boundary smear: straight blur confined to a thin contour band."""
    if spec.blur_type is not BlurType.EDGE_RING:
        raise ValueError(f"blur_edge_ring got {spec.blur_type.value}")
    if spec.strength == 0.0:
        return _identity_result(fg)
    band = edge_band(fg.alpha > 0.5, spec.ring_width)
    straight = blur_straight(fg, dataclasses.replace(spec, blur_type=BlurType.STRAIGHT))
    # 1-pixel feather across the band boundary, then a plain lerp per plane.
    w = ndimage.convolve1d(band.astype(np.float64), _FEATHER_1PX, axis=0, mode="constant")
    w = ndimage.convolve1d(w, _FEATHER_1PX, axis=1, mode="constant")
    base = stack_planes(fg)
    out = base + w[..., None] * (stack_planes(straight.blurred) - base)
    blurred = RgbaPremultiplied(np.clip(out[..., :3], 0.0, 1.0), np.clip(out[..., 3], 0.0, 1.0))
    extent = np.where(band, np.float32(spec.strength), np.float32(0.0))
    return BlurResult(blurred, extent)


def blur_rolling(fg: RgbaPremultiplied, spec: BlurSpec) -> BlurResult:
    """Rolling-shutter streaks: straight motion plus a row-dependent shear."""
    if spec.blur_type is not BlurType.ROLLING:
        raise ValueError(f"blur_rolling got {spec.blur_type.value}")
    offsets = generate_trajectory(spec)
    if np.all(offsets == 0.0) and spec.shear_rate == 0.0:
        return _identity_result(fg)
    h, w = fg.height, fg.width
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    row_shift = spec.shear_rate * (np.arange(h, dtype=np.float64) - h / 2.0)
    planes = stack_planes(fg)
    frames = []
    for t, (dx, dy) in zip(np.linspace(-0.5, 0.5, spec.n_frames), offsets):
        sx = xs - (dx + t * row_shift[:, None])
        sy = ys - dy
        frames.append(bilinear_sample(planes, sx, sy))
    blurred = _temporal_average(fg, frames)
    per_row = np.hypot(spec.strength * np.cos(spec.angle) + row_shift,
                       spec.strength * np.sin(spec.angle))
    extent = np.where(_support(fg, blurred), per_row[:, None], 0.0).astype(np.float32)
    return BlurResult(blurred, extent)


_DISPATCH = {
    BlurType.STRAIGHT: blur_straight,
    BlurType.CURVED: blur_curved,
    BlurType.ZOOM_ROTATION: blur_zoom_rotation,
    BlurType.RANDOM_WALK: blur_random_walk,
    BlurType.EDGE_RING: blur_edge_ring,
    BlurType.ROLLING: blur_rolling,
}


def apply_blur(fg: RgbaPremultiplied, spec: BlurSpec) -> BlurResult:
    """Dispatch to the generator for spec.blur_type; deterministic in (fg, spec)."""
    return _DISPATCH[spec.blur_type](fg, spec)
