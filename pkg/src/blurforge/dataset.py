"""Dataset orchestration: sampling plans, curriculum gating, builds, manifests.

Planning is cheap and I/O-free; every random draw derives from a stable hash
of (global_seed, source id, sample index), so plans and builds are identical
across runs and worker counts. Geometry-dependent blur parameters (crop
rectangles, zoom pivots, shear rates) are resolved at build time as pure
functions of the planned record and the loaded masks.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blur import BlurSpec, BlurType, apply_blur, default_n_frames
from .compositing import composite, partial_region
from .imaging import GrayMask, RgbImage, load_gray, load_rgb, premultiply, save_intensity, save_mask, save_rgb
from .seeding import derive_seed, stream

log = logging.getLogger("blurforge")

# Zoom-with-rotation caps: scale variation must stay mild to conserve alpha
# mass (mean area drift is (max_scale-1)^2 / 12), rotation takes the rest.
MAX_SCALE_DELTA = 0.06
MAX_ROTATION = 1.0


class SamplingMode(str, enum.Enum):
    MASK_CENTRIC = "mask_centric"
    IMAGE_CENTRIC = "image_centric"


class Coverage(str, enum.Enum):
    SHARP = "sharp"
    FULL = "full"
    PARTIAL = "partial"


_COVERAGE_ORDER = (Coverage.SHARP, Coverage.FULL, Coverage.PARTIAL)


@dataclass(frozen=True)
class SourceEntry:
    """One source image with its instance masks (face/hair/hands style)."""

    image_path: str
    instance_mask_paths: tuple[str, ...]
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "instance_mask_paths", tuple(self.instance_mask_paths))
        if len(self.instance_mask_paths) < 1:
            raise ValueError(f"source {self.image_path} has no instance masks")


@dataclass(frozen=True)
class BuildConfig:
    """Sampler configuration; see the README for the JSON schema."""

    mask_ratio: float = 0.5
    coverage_probs: tuple[float, float, float] = (0.25, 0.50, 0.25)
    curriculum_stage: int = 3
    samples_per_source: int = 1
    strength_range: tuple[float, float] = (2.0, 16.0)
    crop_scale_range: tuple[float, float] = (0.5, 1.0)
    crop_aspect_range: tuple[float, float] = (0.75, 4.0 / 3.0)
    global_seed: int = 0
    max_extent: float = 32.0

    def __post_init__(self):
        object.__setattr__(self, "coverage_probs", tuple(float(p) for p in self.coverage_probs))
        object.__setattr__(self, "strength_range", tuple(float(v) for v in self.strength_range))
        object.__setattr__(self, "crop_scale_range", tuple(float(v) for v in self.crop_scale_range))
        object.__setattr__(self, "crop_aspect_range", tuple(float(v) for v in self.crop_aspect_range))
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError("mask_ratio must be in [0, 1]")
        if len(self.coverage_probs) != 3 or min(self.coverage_probs) < 0:
            raise ValueError("coverage_probs must be 3 non-negative values")
        if abs(sum(self.coverage_probs) - 1.0) > 1e-9:
            raise ValueError("coverage_probs must sum to 1")
        if self.curriculum_stage not in (1, 2, 3):
            raise ValueError("curriculum_stage must be 1, 2, or 3")
        if self.samples_per_source < 1:
            raise ValueError("samples_per_source must be >= 1")
        lo, hi = self.strength_range
        if lo < 0 or hi < lo:
            raise ValueError("strength_range must be 0 <= lo <= hi")
        if self.max_extent <= 0:
            raise ValueError("max_extent must be positive")


@dataclass(frozen=True)
class CurriculumStage:
    """Blur types a training stage may draw, and whether mixed mode is open."""

    index: int
    allowed: tuple[BlurType, ...]
    mixed_allowed: bool

    @classmethod
    def for_stage(cls, index: int) -> "CurriculumStage":
        stage1 = (BlurType.STRAIGHT, BlurType.RANDOM_WALK)
        stage2 = stage1 + (BlurType.CURVED, BlurType.ROLLING, BlurType.EDGE_RING)
        stage3 = stage2 + (BlurType.ZOOM_ROTATION,)
        table = {1: (stage1, False), 2: (stage2, False), 3: (stage3, True)}
        if index not in table:
            raise ValueError(f"no curriculum stage {index}")
        allowed, mixed = table[index]
        return cls(index, allowed, mixed)


@dataclass(frozen=True)
class PlannedInstance:
    """Per-instance plan; geometry-dependent fields resolve at build time."""

    mask_path: str
    coverage: Coverage
    blur_type: BlurType
    strength: float
    angle: float
    n_frames: int
    walk_steps: int
    ring_width: int
    shear_factor: float
    seed: int


@dataclass(frozen=True)
class CropPlan:
    """Mask-centric crop draw: area scale, aspect, and placement fractions."""

    scale: float
    aspect: float
    u: float
    v: float


@dataclass(frozen=True)
class SampleRecord:
    id: str
    source_image: str
    mode: SamplingMode
    split: str
    stage: int
    seed: int
    crop: CropPlan | None
    instances: tuple[PlannedInstance, ...]

    def __post_init__(self):
        if self.mode is SamplingMode.MASK_CENTRIC and len(self.instances) != 1:
            raise ValueError("mask-centric records carry exactly one instance")


class PartialBuildError(RuntimeError):
    """Some samples failed to build; .failures maps sample id to the error."""

    def __init__(self, failures: dict[str, str], manifest_path: Path):
        super().__init__(f"{len(failures)} sample(s) failed to build")
        self.failures = failures
        self.manifest_path = manifest_path


def split_sources(sources: list[SourceEntry], val_fraction: float,
                  seed: int) -> tuple[list[SourceEntry], list[SourceEntry]]:
    """Deterministic seeded shuffle into disjoint train/val lists.

    n_val = floor(val_fraction * n); the same seed always yields the same split.
    """
    if not sources:
        raise ValueError("empty source list")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must be in (0, 1)")
    order = stream(seed, "split").permutation(len(sources))
    n_val = int(val_fraction * len(sources))
    val_idx = set(order[:n_val].tolist())
    train = [dataclasses.replace(s, split="train") for i, s in enumerate(sources) if i not in val_idx]
    val = [dataclasses.replace(s, split="val") for i, s in enumerate(sources) if i in val_idx]
    return train, val


def plan_sample(source: SourceEntry, cfg: BuildConfig, index: int) -> SampleRecord:
    """Plan one sample: sampling mode, instances, coverage modes, blur draws.

    All randomness comes from hash(global_seed, source image path, index).
    Curriculum gating is absolute: only stage-allowed blur types are drawn,
    and multi-type (mixed) assignments happen only when the stage opens them.
    """
    rng = stream(cfg.global_seed, "plan", source.image_path, index)
    stage = CurriculumStage.for_stage(cfg.curriculum_stage)
    record_seed = derive_seed(cfg.global_seed, "record", source.image_path, index)
    n_inst = len(source.instance_mask_paths)

    mask_centric = rng.random() < cfg.mask_ratio
    if mask_centric:
        chosen = [int(rng.integers(n_inst))]
        crop = CropPlan(scale=float(rng.uniform(*cfg.crop_scale_range)),
                        aspect=float(rng.uniform(*cfg.crop_aspect_range)),
                        u=float(rng.random()), v=float(rng.random()))
    else:
        k = int(rng.integers(1, min(3, n_inst) + 1))
        chosen = sorted(int(i) for i in rng.choice(n_inst, size=k, replace=False))
        crop = None

    shared_type: BlurType | None = None
    if not stage.mixed_allowed:
        shared_type = stage.allowed[int(rng.integers(len(stage.allowed)))]

    instances = []
    for ordinal, mask_idx in enumerate(chosen):
        coverage = _COVERAGE_ORDER[int(rng.choice(3, p=cfg.coverage_probs))]
        blur_type = shared_type or stage.allowed[int(rng.integers(len(stage.allowed)))]
        strength = float(rng.uniform(*cfg.strength_range))
        instances.append(PlannedInstance(
            mask_path=source.instance_mask_paths[mask_idx],
            coverage=coverage,
            blur_type=blur_type,
            strength=strength,
            angle=float(rng.uniform(0.0, 2.0 * np.pi)),
            n_frames=default_n_frames(strength),
            walk_steps=int(rng.integers(6, 25)),
            ring_width=int(np.ceil(strength / 2.0)) + 3,
            shear_factor=float(rng.uniform(0.25, 1.0)),
            seed=derive_seed(record_seed, "instance", ordinal),
        ))
    return SampleRecord(
        id=f"{index:06d}",
        source_image=source.image_path,
        mode=SamplingMode.MASK_CENTRIC if mask_centric else SamplingMode.IMAGE_CENTRIC,
        split=source.split,
        stage=cfg.curriculum_stage,
        seed=record_seed,
        crop=crop,
        instances=tuple(instances),
    )


def resolve_blur_spec(inst: PlannedInstance, alpha: np.ndarray, image_height: int) -> BlurSpec:
    """Resolve a planned instance into a fully parameterized BlurSpec.

    Pure function of (plan, mask geometry): zoom splits the strength budget
    between capped scale variation and rotation around the support radius;
    rolling converts the shear factor into pixels-per-row for this height.
    """
    max_rotation, max_scale, shear_rate = 0.0, 1.0, 0.0
    if inst.blur_type is BlurType.ZOOM_ROTATION:
        support = alpha >= 0.5
        if not support.any():
            raise ValueError(f"instance mask {inst.mask_path} is empty")
        total = float(alpha.sum())
        ys, xs = np.meshgrid(np.arange(alpha.shape[0]), np.arange(alpha.shape[1]), indexing="ij")
        cx = float((alpha * xs).sum() / total)
        cy = float((alpha * ys).sum() / total)
        r_max = max(1.0, float(np.hypot(xs[support] - cx, ys[support] - cy).max()))
        rel = inst.strength / r_max
        scale_delta = min(0.5 * rel, MAX_SCALE_DELTA)
        max_scale = 1.0 + scale_delta
        max_rotation = min(rel - scale_delta, MAX_ROTATION)
    elif inst.blur_type is BlurType.ROLLING:
        shear_rate = inst.shear_factor * 2.0 * inst.strength / image_height
    return BlurSpec(
        blur_type=inst.blur_type,
        strength=inst.strength,
        n_frames=inst.n_frames,
        angle=inst.angle,
        max_rotation=max_rotation,
        max_scale=max_scale,
        walk_steps=inst.walk_steps if inst.blur_type is BlurType.RANDOM_WALK else 0,
        ring_width=inst.ring_width,
        shear_rate=shear_rate,
        seed=inst.seed,
    )


def _crop_rect(plan: CropPlan, width: int, height: int,
               bbox: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    """Crop rectangle (x0, y0, w, h) from a plan, grown to contain the bbox."""
    area = plan.scale * width * height
    cw = int(round(np.sqrt(area * plan.aspect)))
    ch = int(round(np.sqrt(area / plan.aspect)))
    bx0, by0, bx1, by1 = bbox
    cw = min(max(cw, bx1 - bx0 + 1), width)
    ch = min(max(ch, by1 - by0 + 1), height)
    x_lo, x_hi = max(0, bx1 - cw + 1), min(bx0, width - cw)
    y_lo, y_hi = max(0, by1 - ch + 1), min(by0, height - ch)
    x0 = x_lo + int(round(plan.u * (x_hi - x_lo)))
    y0 = y_lo + int(round(plan.v * (y_hi - y_lo)))
    return x0, y0, cw, ch


def _mask_bbox(binary: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(binary)
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def output_paths(out_dir: Path, sample_id: str) -> dict[str, Path]:
    return {"image": out_dir / f"{sample_id}_img.png",
            "mask": out_dir / f"{sample_id}_mask.png",
            "intensity": out_dir / f"{sample_id}_intensity.png"}


def build_sample(record: SampleRecord, cfg: BuildConfig, out_dir: str | Path) -> dict:
    """Synthesize one sample, write its three PNGs, return the manifest entry.

    Instances composite in descending mask-area order (ties by path);
    per-instance masks OR together and intensities max-combine.
    """
    out_dir = Path(out_dir)
    image = load_rgb(record.source_image)
    masks = {}
    for inst in record.instances:
        mask = load_gray(inst.mask_path)
        if mask.data.shape != image.data.shape[:2]:
            raise ValueError(f"mask {inst.mask_path} dimensions {mask.data.shape} "
                             f"do not match image {image.data.shape[:2]}")
        masks[inst.mask_path] = mask

    if record.crop is not None:
        inst_mask = masks[record.instances[0].mask_path]
        binary = inst_mask.data >= 0.5
        if not binary.any():
            raise ValueError(f"instance mask {record.instances[0].mask_path} is empty")
        x0, y0, cw, ch = _crop_rect(record.crop, image.width, image.height, _mask_bbox(binary))
        image = RgbImage(image.data[y0:y0 + ch, x0:x0 + cw])
        masks = {p: GrayMask(m.data[y0:y0 + ch, x0:x0 + cw]) for p, m in masks.items()}
        if not (masks[record.instances[0].mask_path].data >= 0.5).any():
            raise ValueError("instance mask empty after crop")

    order = sorted(record.instances,
                   key=lambda i: (-int(np.sum(masks[i.mask_path].data >= 0.5)), i.mask_path))
    sharp = image
    current = image
    gt_mask = np.zeros(image.data.shape[:2], dtype=bool)
    gt_intensity = np.zeros(image.data.shape[:2], dtype=np.float32)
    resolved: dict[int, dict] = {}
    for inst in order:
        mask = masks[inst.mask_path]
        spec = resolve_blur_spec(inst, mask.data, image.height)
        resolved[inst.seed] = _spec_dict(spec)
        if inst.coverage is Coverage.SHARP:
            continue
        if not (mask.data >= 0.5).any():
            raise ValueError(f"instance mask {inst.mask_path} is empty")
        fg = premultiply(sharp, mask)
        blur = apply_blur(fg, spec)
        region = mask if inst.coverage is Coverage.FULL else partial_region(mask, inst.seed)
        out = composite(current, blur, region, spec, cfg.max_extent)
        current = out.image
        gt_mask |= out.gt_mask.data >= 0.5
        gt_intensity = np.maximum(gt_intensity, out.gt_intensity.data)

    paths = output_paths(out_dir, record.id)
    save_rgb(paths["image"], current)
    save_mask(paths["mask"], GrayMask(gt_mask.astype(np.float32)))
    save_intensity(paths["intensity"], GrayMask(gt_intensity))
    return _manifest_entry(record, resolved, paths)


def _spec_dict(spec: BlurSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["blur_type"] = spec.blur_type.value
    d["curve_controls"] = [list(c) for c in spec.curve_controls]
    return d


def _manifest_entry(record: SampleRecord, resolved: dict[int, dict],
                    paths: dict[str, Path]) -> dict:
    entry = {
        "id": record.id,
        "source_image": record.source_image,
        "mode": record.mode.value,
        "split": record.split,
        "stage": record.stage,
        "seed": record.seed,
        "crop": dataclasses.asdict(record.crop) if record.crop else None,
        "instances": [
            {
                "mask_path": inst.mask_path,
                "coverage": inst.coverage.value,
                "blur": resolved[inst.seed],
            }
            for inst in record.instances
        ],
        "outputs": {k: p.name for k, p in paths.items()},
        "output_sizes": {k: os.path.getsize(p) for k, p in paths.items()},
    }
    return entry


def _build_worker(args: tuple[SampleRecord, BuildConfig, str]) -> tuple[str, dict | None, str | None]:
    record, cfg, out_dir = args
    try:
        return record.id, build_sample(record, cfg, out_dir), None
    except Exception as exc:  # noqa: BLE001 - reported per sample, never silently skipped
        return record.id, None, f"{type(exc).__name__}: {exc}"


def plan_dataset(cfg: BuildConfig, sources: list[SourceEntry]) -> list[SampleRecord]:
    """All sample plans in ascending index order (index = source * per-source + j)."""
    records = []
    for src_i, source in enumerate(sources):
        for j in range(cfg.samples_per_source):
            records.append(plan_sample(source, cfg, src_i * cfg.samples_per_source + j))
    return records


def _reusable_entry(entry: dict, out_dir: Path) -> bool:
    try:
        return all(os.path.getsize(out_dir / entry["outputs"][k]) == entry["output_sizes"][k]
                   for k in ("image", "mask", "intensity"))
    except (OSError, KeyError):
        return False


def build_dataset(cfg: BuildConfig, sources: list[SourceEntry], out_dir: str | Path,
                  workers: int = 1, resume: bool = False,
                  manifest_name: str = "manifest.jsonl") -> Path:
    """Build every planned sample and write the JSONL manifest.

    Manifest lines appear in ascending index order regardless of worker
    scheduling, each a sorted-key JSON object, followed by one summary line
    with per-blur-type and per-coverage-mode counts. With resume=True,
    samples whose three outputs exist at their recorded sizes are skipped
    and the manifest is rewritten in full. Raises PartialBuildError (after
    writing the manifest) if any sample fails.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / manifest_name
    if not sources:
        log.warning("no sources given; writing an empty manifest")
        _write_manifest(manifest_path, [], summary_counts([]))
        return manifest_path

    records = plan_dataset(cfg, sources)
    previous: dict[str, dict] = {}
    if resume and manifest_path.exists():
        entries, _ = read_manifest(manifest_path)
        previous = {e["id"]: e for e in entries}

    todo = []
    results: dict[str, dict] = {}
    for record in records:
        old = previous.get(record.id)
        if resume and old is not None and _reusable_entry(old, out_dir):
            results[record.id] = old
        else:
            todo.append((record, cfg, str(out_dir)))

    failures: dict[str, str] = {}
    if workers <= 1:
        outcomes = map(_build_worker, todo)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        outcomes = pool.map(_build_worker, todo)
    for sample_id, entry, error in outcomes:
        if error is None:
            results[sample_id] = entry
        else:
            failures[sample_id] = error
    if workers > 1:
        pool.shutdown()

    ordered = [results[r.id] for r in records if r.id in results]
    _write_manifest(manifest_path, ordered, summary_counts(ordered))
    if failures:
        raise PartialBuildError(failures, manifest_path)
    return manifest_path


def summary_counts(entries: list[dict]) -> dict:
    """Footer counts over all planned instances: blur types, coverage, splits."""
    blur_types = {bt.value: 0 for bt in BlurType}
    coverage = {c.value: 0 for c in Coverage}
    splits: dict[str, int] = {}
    for entry in entries:
        splits[entry["split"]] = splits.get(entry["split"], 0) + 1
        for inst in entry["instances"]:
            blur_types[inst["blur"]["blur_type"]] += 1
            coverage[inst["coverage"]] += 1
    return {"samples": len(entries), "blur_types": blur_types,
            "coverage_modes": coverage, "splits": splits}


def _write_manifest(path: Path, entries: list[dict], summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        fh.write(json.dumps({"summary": summary}, sort_keys=True) + "\n")


def resolve_output(manifest_path: str | Path, entry: dict, kind: str) -> Path:
    """Absolute path of one output file (manifest paths are manifest-relative)."""
    return Path(manifest_path).parent / entry["outputs"][kind]


def read_manifest(path: str | Path) -> tuple[list[dict], dict | None]:
    """Manifest sample entries plus the summary footer (None if absent)."""
    entries, summary = [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "summary" in obj and "id" not in obj:
                summary = obj["summary"]
            else:
                entries.append(obj)
    return entries, summary


def verify_manifest(path: str | Path) -> list[str]:
    """Integrity scan: files exist, sizes match, PNGs load with equal dims."""
    problems = []
    base = Path(path).parent
    entries, summary = read_manifest(path)
    if summary is None:
        problems.append("manifest has no summary footer")
    for entry in entries:
        sid = entry.get("id", "<missing id>")
        outputs = entry.get("outputs", {})
        dims = {}
        for kind in ("image", "mask", "intensity"):
            rel = outputs.get(kind)
            fpath = None if rel is None else base / rel
            if fpath is None or not os.path.exists(fpath):
                problems.append(f"{sid}: missing {kind} file {rel}")
                continue
            size = os.path.getsize(fpath)
            recorded = entry.get("output_sizes", {}).get(kind)
            if recorded is not None and size != recorded:
                problems.append(f"{sid}: {kind} size {size} != recorded {recorded}")
            try:
                if kind == "image":
                    dims[kind] = load_rgb(fpath).data.shape[:2]
                else:
                    dims[kind] = load_gray(fpath).data.shape
            except Exception as exc:  # noqa: BLE001
                problems.append(f"{sid}: {kind} failed to load: {exc}")
        if len(set(dims.values())) > 1:
            problems.append(f"{sid}: output dimensions disagree: {dims}")
    return problems


# ---------------------------------------------------------------------------
# Config file handling


_CONFIG_KEYS = {f.name for f in dataclasses.fields(BuildConfig)} | {"sources", "val_fraction"}


def parse_config(doc: dict) -> tuple[BuildConfig, list[SourceEntry], float]:
    """Validate a config document; unknown keys are an error (drift protection)."""
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    sources = []
    for i, item in enumerate(doc.get("sources", [])):
        if not isinstance(item, dict) or "image" not in item or "masks" not in item:
            raise ValueError(f"sources[{i}] must be an object with 'image' and 'masks'")
        extra = sorted(set(item) - {"image", "masks"})
        if extra:
            raise ValueError(f"sources[{i}] has unknown keys: {', '.join(extra)}")
        sources.append(SourceEntry(item["image"], tuple(item["masks"])))
    val_fraction = float(doc.get("val_fraction", 0.2))
    cfg_kwargs = {k: v for k, v in doc.items() if k not in ("sources", "val_fraction")}
    for key in ("coverage_probs", "strength_range", "crop_scale_range", "crop_aspect_range"):
        if key in cfg_kwargs:
            cfg_kwargs[key] = tuple(cfg_kwargs[key])
    return BuildConfig(**cfg_kwargs), sources, val_fraction


def load_config(path: str | Path) -> tuple[BuildConfig, list[SourceEntry], float]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(json.load(fh))
