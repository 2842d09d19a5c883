"""Shared builders for synthetic foregrounds, sources, and configs."""

import json
from pathlib import Path

import numpy as np
import pytest

from blurforge.imaging import GrayMask, RgbaPremultiplied, RgbImage, premultiply, save_mask, save_rgb


def square_foreground(size=96, lo=30, hi=66, seed=0, textured=True):
    """Opaque square instance on a transparent canvas, optionally textured."""
    rng = np.random.default_rng(seed)
    alpha = np.zeros((size, size), dtype=np.float32)
    alpha[lo:hi, lo:hi] = 1.0
    if textured:
        color = rng.uniform(0.1, 0.9, (size, size, 3)).astype(np.float32)
    else:
        color = np.full((size, size, 3), 0.6, dtype=np.float32)
    return RgbaPremultiplied(color * alpha[..., None], alpha)


def random_foreground(size=128, seed=0):
    """Random blob with soft alpha, interior-supported (margin ~ size/4)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    cx, cy = rng.uniform(size * 0.4, size * 0.6, 2)
    r = rng.uniform(size * 0.12, size * 0.2)
    alpha = np.clip(1.5 - np.hypot(xx - cx, yy - cy) / r, 0.0, 1.0).astype(np.float32)
    color = rng.uniform(0.0, 1.0, (size, size, 3)).astype(np.float32)
    return RgbaPremultiplied(color * alpha[..., None], alpha)


def textured_image(height, width, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    data = np.stack([
        0.5 + 0.4 * np.sin(xx / 3.0 + seed) * np.cos(yy / 4.0),
        rng.uniform(0.0, 1.0, (height, width)),
        0.5 + 0.4 * np.cos(xx / 5.0) * np.sin(yy / 7.0 + seed),
    ], axis=2)
    return RgbImage(np.clip(data, 0.0, 1.0).astype(np.float32))


def write_sources(root: Path, n_sources=4, size=96, n_masks=2, seed=11):
    """Write textured source PNGs plus rectangular instance masks; return config sources."""
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    sources = []
    for i in range(n_sources):
        img_path = root / f"img_{i}.png"
        save_rgb(img_path, textured_image(size, size, seed=seed + i))
        masks = []
        for j in range(n_masks):
            m = np.zeros((size, size), dtype=np.float32)
            x0, y0 = rng.integers(8, size // 2, 2)
            w, h = rng.integers(size // 5, size // 3, 2)
            m[y0:y0 + h, x0:x0 + w] = 1.0
            mpath = root / f"img_{i}_m{j}.png"
            save_mask(mpath, GrayMask(m))
            masks.append(str(mpath))
        sources.append({"image": str(img_path), "masks": masks})
    return sources


def write_config(path: Path, sources, **overrides):
    doc = {
        "mask_ratio": 0.5,
        "coverage_probs": [0.25, 0.5, 0.25],
        "curriculum_stage": 3,
        "samples_per_source": 2,
        "strength_range": [2.0, 10.0],
        "global_seed": 7,
        "val_fraction": 0.25,
        "sources": sources,
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc, indent=2))
    return path


@pytest.fixture
def tiny_dataset(tmp_path):
    """Sources + config on disk, ready for generate/build tests."""
    sources = write_sources(tmp_path / "src", n_sources=3, size=80)
    cfg_path = write_config(tmp_path / "config.json", sources)
    return {"config": cfg_path, "sources": sources, "root": tmp_path}
