"""Alpha-aware blending of blurred foregrounds plus ground-truth emission.

The composite blends the blurred-over-background image into the sharp
background through a feathered region weight, so blurred and sharp content
meet without a hard seam and pixels outside the feather support stay
bit-identical to the sharp composite. Ground truth comes out as a binary
blur mask and a normalized [0, 1] intensity map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .blur import BlurResult, BlurSpec, SUPPORT_EPS
from .imaging import GrayMask, RgbImage, gaussian_blur_mask
from .seeding import stream

FEATHER_SIGMA_RATE = 0.25
FEATHER_SIGMA_MIN = 0.5
FEATHER_SIGMA_MAX = 4.0

# Motion below half a pixel is invisible after resampling: such pixels are
# labeled sharp.
GT_MOTION_THRESHOLD = 0.5


def feather_sigma(strength: float) -> float:
    return float(min(max(FEATHER_SIGMA_RATE * strength, FEATHER_SIGMA_MIN), FEATHER_SIGMA_MAX))


def feather_radius(strength: float) -> int:
    return max(1, int(round(feather_sigma(strength))))


def feather_alpha(alpha: GrayMask, strength: float) -> GrayMask:
    """Widen-only edge feather: max of the mask and its Gaussian smoothing.

    Transitions soften outward while opaque interiors stay untouched.
    """
    if strength < 0:
        raise ValueError("feather strength must be >= 0")
    blurred = gaussian_blur_mask(alpha, feather_sigma(strength))
    return GrayMask(np.maximum(alpha.data, blurred.data))


@dataclass(frozen=True)
class CompositeOutput:
    """Composited image plus the binary blur mask and intensity ground truth."""

    image: RgbImage
    gt_mask: GrayMask
    gt_intensity: GrayMask

    def __post_init__(self):
        shape = self.image.data.shape[:2]
        if self.gt_mask.data.shape != shape or self.gt_intensity.data.shape != shape:
            raise ValueError("ground-truth planes must match the image dimensions")
        if np.any((self.gt_intensity.data > 0) & (self.gt_mask.data < 0.5)):
            raise ValueError("gt_intensity positive outside gt_mask")


def partial_region(mask: GrayMask, seed: int) -> GrayMask:
    """Seeded sub-region of an instance mask: 1-3 half-plane cuts, 30-70% area.

    The target fraction is drawn once and split evenly (geometrically) across
    the cuts; each cut keeps the pixels below a projection quantile, so the
    final area lands on the target regardless of mask shape.
    """
    binary = mask.data >= 0.5
    if not binary.any():
        raise ValueError("cannot cut a sub-region from an empty mask")
    rng = stream(seed, "region")
    fraction = rng.uniform(0.3, 0.7)
    n_cuts = int(rng.integers(1, 4))
    per_cut = fraction ** (1.0 / n_cuts)
    ys, xs = np.meshgrid(np.arange(mask.height), np.arange(mask.width), indexing="ij")
    keep = binary.copy()
    for _ in range(n_cuts):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        proj = np.cos(theta) * xs + np.sin(theta) * ys
        cut = np.quantile(proj[keep], per_cut)
        keep &= proj <= cut
    return GrayMask(keep.astype(np.float32))


def composite(bg: RgbImage, blur: BlurResult, region: GrayMask, spec: BlurSpec,
              max_extent: float) -> CompositeOutput:
    """Blend a blurred foreground into its background and emit ground truth.

    image = bg + w * (over(blur, bg) - bg) with w the feathered region weight;
    gt_mask = (region AND extent >= 0.5 px) dilated by the feather radius;
    gt_intensity = clamp(extent / max_extent, 0, 1) * gt_mask.
    """
    if blur.blurred.alpha.shape != bg.data.shape[:2]:
        raise ValueError("blur result does not match background dimensions")
    if region.data.shape != bg.data.shape[:2]:
        raise ValueError("region does not match background dimensions")
    if max_extent <= 0:
        raise ValueError("max_extent must be positive")
    region_binary = region.data >= 0.5
    support = (blur.blurred.alpha > SUPPORT_EPS) | (blur.extent_map > 0)
    support = ndimage.maximum_filter(support, size=3, mode="constant", cval=False)
    if np.any(region_binary & ~support):
        raise ValueError("region exceeds the foreground support")

    weight = feather_alpha(region, spec.strength).data.astype(np.float64)[..., None]
    bg64 = bg.data.astype(np.float64)
    over = blur.blurred.color + bg64 * (1.0 - blur.blurred.alpha)[..., None]
    image = bg64 + weight * (over - bg64)

    radius = feather_radius(spec.strength)
    core = region_binary & (blur.extent_map >= GT_MOTION_THRESHOLD)
    gt = ndimage.maximum_filter(core, size=2 * radius + 1, mode="constant", cval=False)
    gt_mask = (gt.astype(np.float32) >= 0.5).astype(np.float32)
    intensity = np.clip(blur.extent_map / max_extent, 0.0, 1.0).astype(np.float32) * gt_mask
    return CompositeOutput(RgbImage(np.clip(image, 0.0, 1.0)),
                           GrayMask(gt_mask), GrayMask(intensity))
