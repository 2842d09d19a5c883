"""Dataset orchestration: splits, planning, curriculum gating, builds, manifests."""

import dataclasses
import hashlib
import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from blurforge.blur import BlurType
from blurforge.dataset import (BuildConfig, Coverage, CurriculumStage, PartialBuildError,
                               SamplingMode, SourceEntry, build_dataset, build_sample,
                               parse_config, plan_dataset, plan_sample, read_manifest,
                               resolve_blur_spec, resolve_output, split_sources,
                               summary_counts, verify_manifest)
from blurforge.imaging import load_gray, load_rgb

from conftest import write_config, write_sources


def make_sources(n=10):
    return [SourceEntry(f"img_{i}.png", (f"img_{i}_m0.png", f"img_{i}_m1.png"))
            for i in range(n)]


# ---------------------------------------------------------------------------
# Splits


def test_split_deterministic_and_disjoint():
    sources = make_sources(10)
    t1, v1 = split_sources(sources, 0.2, seed=5)
    t2, v2 = split_sources(sources, 0.2, seed=5)
    assert [s.image_path for s in t1] == [s.image_path for s in t2]
    assert [s.image_path for s in v1] == [s.image_path for s in v2]
    assert len(v1) == 2 and len(t1) == 8
    assert not {s.image_path for s in t1} & {s.image_path for s in v1}
    assert all(s.split == "train" for s in t1)
    assert all(s.split == "val" for s in v1)


def test_split_floor_rounding():
    t, v = split_sources(make_sources(7), 0.25, seed=0)
    assert len(v) == 1 and len(t) == 6  # floor(1.75)


def test_split_validation():
    with pytest.raises(ValueError, match="empty"):
        split_sources([], 0.2, 0)
    with pytest.raises(ValueError, match="val_fraction"):
        split_sources(make_sources(3), 1.0, 0)


# ---------------------------------------------------------------------------
# Planning


def test_mask_ratio_extremes():
    cfg1 = BuildConfig(mask_ratio=1.0, global_seed=3)
    cfg0 = BuildConfig(mask_ratio=0.0, global_seed=3)
    src = make_sources(5)
    for i in range(50):
        assert plan_sample(src[i % 5], cfg1, i).mode is SamplingMode.MASK_CENTRIC
        assert plan_sample(src[i % 5], cfg0, i).mode is SamplingMode.IMAGE_CENTRIC


def test_plan_deterministic():
    cfg = BuildConfig(global_seed=11)
    src = make_sources(1)[0]
    assert plan_sample(src, cfg, 4) == plan_sample(src, cfg, 4)


def test_mask_centric_single_instance_image_centric_up_to_three():
    cfg = BuildConfig(global_seed=9)
    src = SourceEntry("a.png", tuple(f"m{i}.png" for i in range(5)))
    for i in range(200):
        rec = plan_sample(src, cfg, i)
        if rec.mode is SamplingMode.MASK_CENTRIC:
            assert len(rec.instances) == 1
            assert rec.crop is not None
        else:
            assert 1 <= len(rec.instances) <= 3
            assert rec.crop is None
            # no instance repeats within a record
            paths = [inst.mask_path for inst in rec.instances]
            assert len(paths) == len(set(paths))


def test_curriculum_stage_tables():
    s1 = CurriculumStage.for_stage(1)
    assert set(s1.allowed) == {BlurType.STRAIGHT, BlurType.RANDOM_WALK}
    assert not s1.mixed_allowed
    s2 = CurriculumStage.for_stage(2)
    assert set(s2.allowed) == set(s1.allowed) | {BlurType.CURVED, BlurType.ROLLING,
                                                 BlurType.EDGE_RING}
    assert not s2.mixed_allowed
    s3 = CurriculumStage.for_stage(3)
    assert set(s3.allowed) == set(BlurType)
    assert s3.mixed_allowed
    with pytest.raises(ValueError):
        CurriculumStage.for_stage(4)


def test_curriculum_gating_scan():
    src = SourceEntry("a.png", ("m0.png", "m1.png", "m2.png"))
    for stage in (1, 2, 3):
        cfg = BuildConfig(curriculum_stage=stage, mask_ratio=0.4, global_seed=17)
        allowed = set(CurriculumStage.for_stage(stage).allowed)
        for i in range(1000):
            rec = plan_sample(src, cfg, i)
            types = {inst.blur_type for inst in rec.instances}
            assert types <= allowed, f"stage {stage} leaked {types - allowed}"
            if stage < 3 and len(rec.instances) > 1:
                assert len(types) == 1, "mixed blur types below stage 3"


def test_coverage_frequencies_match_config():
    src = SourceEntry("a.png", ("m0.png",))
    cfg = BuildConfig(coverage_probs=(0.2, 0.5, 0.3), mask_ratio=0.5, global_seed=23)
    counts = Counter()
    n = 4000
    for i in range(n):
        for inst in plan_sample(src, cfg, i).instances:
            counts[inst.coverage] += 1
    total = sum(counts.values())
    assert abs(counts[Coverage.SHARP] / total - 0.2) < 0.02
    assert abs(counts[Coverage.FULL] / total - 0.5) < 0.02
    assert abs(counts[Coverage.PARTIAL] / total - 0.3) < 0.02


def test_resolve_zoom_caps_scale_and_extent():
    inst = dataclasses.replace(
        plan_sample(SourceEntry("a.png", ("m.png",)),
                    BuildConfig(mask_ratio=1.0, global_seed=1), 0).instances[0],
        blur_type=BlurType.ZOOM_ROTATION, strength=24.0)
    alpha = np.zeros((64, 64), dtype=np.float32)
    alpha[22:42, 22:42] = 1.0
    spec = resolve_blur_spec(inst, alpha, 64)
    assert spec.max_scale <= 1.06 + 1e-9
    assert spec.max_rotation <= 1.0
    r_max = np.hypot(10, 10) * np.sqrt(2)  # ~ corner distance from center
    assert r_max * (spec.max_rotation + spec.max_scale - 1.0) <= 24.0 + 1e-6


def test_resolve_rolling_shear_rate():
    inst = dataclasses.replace(
        plan_sample(SourceEntry("a.png", ("m.png",)),
                    BuildConfig(mask_ratio=1.0, global_seed=2), 0).instances[0],
        blur_type=BlurType.ROLLING, strength=8.0)
    spec = resolve_blur_spec(inst, np.ones((100, 100), np.float32), 100)
    assert spec.shear_rate == pytest.approx(inst.shear_factor * 2.0 * 8.0 / 100.0)


# ---------------------------------------------------------------------------
# Builds


def test_build_sample_rebuild_is_byte_identical(tiny_dataset, tmp_path):
    cfg_doc = json.loads(Path(tiny_dataset["config"]).read_text())
    cfg, sources, _ = parse_config(cfg_doc)
    record = plan_sample(sources[0], cfg, 0)
    d1, d2 = tmp_path / "b1", tmp_path / "b2"
    d1.mkdir(), d2.mkdir()
    e1 = build_sample(record, cfg, d1)
    e2 = build_sample(record, cfg, d2)
    for kind in ("image", "mask", "intensity"):
        b1 = (d1 / e1["outputs"][kind]).read_bytes()
        b2 = (d2 / e2["outputs"][kind]).read_bytes()
        assert b1 == b2, kind


def test_build_sample_all_sharp_gt_empty(tmp_path):
    sources = write_sources(tmp_path / "src", n_sources=1, size=64, n_masks=1)
    cfg, parsed, _ = parse_config({"sources": sources,
                                   "coverage_probs": [1.0, 0.0, 0.0],
                                   "mask_ratio": 0.0, "global_seed": 4})
    record = plan_sample(parsed[0], cfg, 0)
    assert all(inst.coverage is Coverage.SHARP for inst in record.instances)
    out = tmp_path / "out"
    out.mkdir()
    entry = build_sample(record, cfg, out)
    mask = load_gray(out / entry["outputs"]["mask"])
    assert np.all(mask.data == 0)
    img = load_rgb(out / entry["outputs"]["image"])
    src_img = load_rgb(parsed[0].image_path)
    assert np.array_equal(img.data, src_img.data)


def test_build_sample_two_instance_union_oracle(tmp_path):
    sources = write_sources(tmp_path / "src", n_sources=1, size=96, n_masks=2, seed=3)
    base = {"sources": sources, "coverage_probs": [0.0, 1.0, 0.0], "mask_ratio": 0.0,
            "global_seed": 21, "strength_range": [4.0, 8.0]}
    cfg, parsed, _ = parse_config(base)
    record = None
    for i in range(60):
        cand = plan_sample(parsed[0], cfg, i)
        if len(cand.instances) == 2:
            record = cand
            break
    assert record is not None
    out = tmp_path / "out"
    out.mkdir()
    entry = build_sample(record, cfg, out)
    combined = load_gray(out / entry["outputs"]["mask"]).data >= 0.5

    union = np.zeros_like(combined)
    for keep in record.instances:
        solo = dataclasses.replace(record, instances=(keep,),
                                   mode=SamplingMode.IMAGE_CENTRIC)
        sdir = tmp_path / f"solo_{keep.mask_path[-6:].replace('/', '_')}"
        sdir.mkdir(exist_ok=True)
        sentry = build_sample(solo, cfg, sdir)
        union |= load_gray(sdir / sentry["outputs"]["mask"]).data >= 0.5
    assert np.array_equal(combined, union)


def test_build_dataset_manifest_determinism_and_footer(tiny_dataset, tmp_path):
    cfg, sources, val_fraction = parse_config(json.loads(Path(tiny_dataset["config"]).read_text()))
    train, val = split_sources(sources, val_fraction, cfg.global_seed)
    ordered = train + val
    m1 = build_dataset(cfg, ordered, tmp_path / "o1", workers=1)
    m2 = build_dataset(cfg, ordered, tmp_path / "o2", workers=2)
    assert hashlib.sha256(m1.read_bytes()).hexdigest() == hashlib.sha256(m2.read_bytes()).hexdigest()

    entries, summary = read_manifest(m1)
    assert summary is not None
    # recount oracle: footer counts equal the sum of per-record plans
    blur_counts = Counter()
    cov_counts = Counter()
    for e in entries:
        for inst in e["instances"]:
            blur_counts[inst["blur"]["blur_type"]] += 1
            cov_counts[inst["coverage"]] += 1
    for bt, n in summary["blur_types"].items():
        assert blur_counts.get(bt, 0) == n
    for cv, n in summary["coverage_modes"].items():
        assert cov_counts.get(cv, 0) == n
    assert summary["samples"] == len(entries)
    # ascending ids, unique
    ids = [e["id"] for e in entries]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)


def test_build_dataset_empty_sources(tmp_path):
    cfg = BuildConfig()
    manifest = build_dataset(cfg, [], tmp_path / "empty")
    entries, summary = read_manifest(manifest)
    assert entries == [] and summary["samples"] == 0


def test_build_dataset_resume_skips_existing(tiny_dataset, tmp_path):
    cfg, sources, val_fraction = parse_config(json.loads(Path(tiny_dataset["config"]).read_text()))
    train, val = split_sources(sources, val_fraction, cfg.global_seed)
    out = tmp_path / "out"
    m = build_dataset(cfg, train + val, out, workers=1)
    entries, _ = read_manifest(m)
    mtimes = {p.name: p.stat().st_mtime_ns for p in out.glob("*.png")}
    # delete one output: only that sample rebuilds
    victim = resolve_output(m, entries[0], "image")
    victim.unlink()
    m2 = build_dataset(cfg, train + val, out, workers=1, resume=True)
    assert victim.exists()
    for p in out.glob("*.png"):
        if p.name == victim.name:
            continue
        if p.name.startswith(entries[0]["id"]):
            continue  # siblings of the rebuilt sample may be rewritten
        assert p.stat().st_mtime_ns == mtimes[p.name], f"{p.name} was rebuilt"
    assert m2.read_bytes() == m.read_bytes()


def test_build_dataset_partial_failure(tmp_path):
    sources = write_sources(tmp_path / "src", n_sources=2, size=64, n_masks=1)
    # break the second source's mask: wrong dimensions
    from blurforge.imaging import GrayMask, save_mask
    save_mask(sources[1]["masks"][0], GrayMask(np.ones((32, 32), dtype=np.float32)))
    cfg, parsed, _ = parse_config({"sources": sources, "global_seed": 5,
                                   "coverage_probs": [0.0, 1.0, 0.0]})
    with pytest.raises(PartialBuildError) as err:
        build_dataset(cfg, parsed, tmp_path / "out", workers=1)
    assert len(err.value.failures) == cfg.samples_per_source
    # manifest still written with the successful samples
    entries, _ = read_manifest(err.value.manifest_path)
    assert len(entries) == cfg.samples_per_source


def test_verify_manifest_clean_and_corrupted(tiny_dataset, tmp_path):
    cfg, sources, val_fraction = parse_config(json.loads(Path(tiny_dataset["config"]).read_text()))
    train, val = split_sources(sources, val_fraction, cfg.global_seed)
    m = build_dataset(cfg, train + val, tmp_path / "out")
    assert verify_manifest(m) == []
    entries, _ = read_manifest(m)
    target = resolve_output(m, entries[0], "mask")
    target.write_bytes(target.read_bytes() + b"x")
    problems = verify_manifest(m)
    assert any("size" in p for p in problems)


def test_parse_config_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        parse_config({"mask_ratio": 0.5, "coverage_prob": [1, 0, 0]})
    with pytest.raises(ValueError, match="unknown keys"):
        parse_config({"sources": [{"image": "a.png", "masks": ["m.png"], "extra": 1}]})


def test_build_config_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        BuildConfig(coverage_probs=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError, match="mask_ratio"):
        BuildConfig(mask_ratio=1.5)
    with pytest.raises(ValueError, match="curriculum_stage"):
        BuildConfig(curriculum_stage=0)
    with pytest.raises(ValueError, match="strength_range"):
        BuildConfig(strength_range=(5.0, 2.0))


def test_plan_dataset_ascending_global_index():
    cfg = BuildConfig(samples_per_source=3, global_seed=2)
    recs = plan_dataset(cfg, make_sources(4))
    assert [r.id for r in recs] == [f"{i:06d}" for i in range(12)]
    assert summary_counts([]) == {"samples": 0,
                                  "blur_types": {bt.value: 0 for bt in BlurType},
                                  "coverage_modes": {c.value: 0 for c in Coverage},
                                  "splits": {}}
