"""Single command-line entry point: generate, preview, evaluate, losscheck, manifest-verify.

Exit codes are stable: 0 success, 1 check/report failure, 2 config error,
3 source/input I/O error, 4 partial build failure. Human-readable text goes
to stdout; machine output goes to the manifest, --report files, and the
losscheck JSON (whose documented contract is JSON on stdout).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import losses, metrics
from .blur import BlurSpec, BlurType, apply_blur, default_n_frames
from .compositing import composite
from .imaging import GrayMask, load_gray, load_rgb, premultiply, save_rgb
from .seeding import derive_seed

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PARTIAL = 4

log = logging.getLogger("blurforge")


def _setup_logging() -> None:
    level = os.environ.get("BLURFORGE_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blurforge",
                                     description="Motion-blur dataset synthesis and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="build a dataset from a JSON config")
    gen.add_argument("--config", required=True, help="JSON config file")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=None, help="override the config global_seed")
    gen.add_argument("--workers", type=int, default=1)
    gen.add_argument("--resume", action="store_true",
                     help="skip samples whose outputs already exist at recorded sizes")

    prev = sub.add_parser("preview", help="blur one image/mask pair and visualize the GT")
    prev.add_argument("--image", required=True)
    prev.add_argument("--mask", required=True)
    prev.add_argument("--blur-type", required=True, choices=[t.value for t in BlurType])
    prev.add_argument("--strength", type=float, default=8.0)
    prev.add_argument("--angle", type=float, default=0.0, help="motion direction in radians")
    prev.add_argument("--seed", type=int, default=0)
    prev.add_argument("--max-extent", type=float, default=32.0)
    prev.add_argument("--out", required=True, help="output composite PNG path")

    ev = sub.add_parser("evaluate", help="score a prediction directory against ground truth")
    ev.add_argument("--pred-dir", required=True)
    ev.add_argument("--gt-dir", required=True)
    ev.add_argument("--task", required=True, choices=["seg", "cls"])
    ev.add_argument("--threshold", type=float, default=None,
                    help="fixed decision threshold; omit to grid-search")
    ev.add_argument("--grid", type=int, default=101,
                    help="number of grid points for the threshold search")
    ev.add_argument("--aggregation", choices=["fraction", "mean"], default="fraction",
                    help="image-level score rule for cls")
    ev.add_argument("--report", default=None, help="write the JSON report here")
    ev.add_argument("--no-figures", action="store_true",
                    help="skip rendering curve figures next to the report")

    lc = sub.add_parser("losscheck", help="finite-difference verification of all loss gradients")
    lc.add_argument("--tolerance", type=float, default=1e-3)
    lc.add_argument("--report", default=None, help="also write the JSON report here")
    lc.add_argument("--export-fixtures", default=None, metavar="DIR",
                    help="export raw-tensor loss fixtures for cross-implementation checks")
    lc.add_argument("--fault-inject", action="store_true", help=argparse.SUPPRESS)

    mv = sub.add_parser("manifest-verify", help="integrity-scan a dataset manifest")
    mv.add_argument("--manifest", required=True)
    return parser


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    try:
        cfg, sources, val_fraction = ds.load_config(args.config)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, global_seed=args.seed)

    missing = [p for s in sources for p in (s.image_path, *s.instance_mask_paths)
               if not os.path.exists(p)]
    if missing:
        print(f"source I/O error: missing files: {', '.join(missing[:5])}", file=sys.stderr)
        return EXIT_IO

    if sources:
        train, val = ds.split_sources(sources, val_fraction, cfg.global_seed)
        ordered = train + val
    else:
        ordered = []
    try:
        manifest = ds.build_dataset(cfg, ordered, args.out, workers=args.workers,
                                    resume=args.resume)
    except ds.PartialBuildError as exc:
        print(f"partial failure: {len(exc.failures)} sample(s) failed:", file=sys.stderr)
        for sid, err in sorted(exc.failures.items()):
            print(f"  {sid}: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    except OSError as exc:
        print(f"source I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    entries, summary = ds.read_manifest(manifest)
    if not entries:
        print("warning: no sources configured; wrote an empty manifest")
    print(f"wrote {len(entries)} samples to {args.out}")
    if summary:
        print(f"blur types: {json.dumps(summary['blur_types'], sort_keys=True)}")
        print(f"coverage modes: {json.dumps(summary['coverage_modes'], sort_keys=True)}")
        print(f"splits: {json.dumps(summary['splits'], sort_keys=True)}")
    print(f"manifest: {manifest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# preview


def preview_spec(blur_type: BlurType, strength: float, angle: float, seed: int,
                 alpha: np.ndarray, image_height: int) -> BlurSpec:
    """Deterministic preview parameterization via the planner's resolution rules."""
    inst = ds.PlannedInstance(
        mask_path="<preview>", coverage=ds.Coverage.FULL, blur_type=blur_type,
        strength=strength, angle=angle, n_frames=default_n_frames(strength),
        walk_steps=max(6, int(round(strength))), ring_width=int(np.ceil(strength / 2.0)) + 3,
        shear_factor=0.5, seed=derive_seed(seed, "preview"))
    return ds.resolve_blur_spec(inst, alpha, image_height)


def cmd_preview(args) -> int:
    try:
        image = load_rgb(args.image)
        mask = load_gray(args.mask)
    except (FileNotFoundError, OSError) as exc:
        print(f"source I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if mask.data.shape != image.data.shape[:2]:
        print("source I/O error: mask dimensions do not match image", file=sys.stderr)
        return EXIT_IO
    spec = preview_spec(BlurType(args.blur_type), args.strength, args.angle, args.seed,
                        mask.data, image.height)
    fg = premultiply(image, mask)
    blur = apply_blur(fg, spec)
    out = composite(image, blur, mask, spec, args.max_extent)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_rgb(out_path, out.image)
    from .viz import render_preview_figure

    viz_path = out_path.with_name(out_path.stem + "_viz.png")
    render_preview_figure(viz_path, image, out.image, out.gt_mask, out.gt_intensity)
    print(f"composite: {out_path}")
    print(f"visualization: {viz_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _paired_maps(pred_dir: str, gt_dir: str) -> list[tuple[str, GrayMask, GrayMask]]:
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
    if not gt_dir.is_dir():
        raise FileNotFoundError(f"ground-truth directory not found: {gt_dir}")
    pairs = []
    for pred_path in sorted(pred_dir.glob("*.png")):
        gt_path = gt_dir / pred_path.name
        if not gt_path.exists():
            raise FileNotFoundError(f"no ground truth for {pred_path.name}")
        pairs.append((pred_path.name, load_gray(pred_path), load_gray(gt_path)))
    if not pairs:
        raise FileNotFoundError(f"no .png predictions in {pred_dir}")
    return pairs


def cmd_evaluate(args) -> int:
    try:
        pairs = _paired_maps(args.pred_dir, args.gt_dir)
    except (FileNotFoundError, OSError) as exc:
        print(f"source I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    grid = np.linspace(0.0, 1.0, args.grid)
    preds = [p.data for _, p, _ in pairs]
    gts = [g.data for _, _, g in pairs]
    report: dict = {"task": args.task, "n_images": len(pairs)}

    if args.task == "seg":
        tau = args.threshold
        if tau is None:
            tau = metrics.grid_search_threshold(preds, gts, "iou", grid)
            report["threshold_source"] = f"grid search (IoU, {args.grid} points)"
        else:
            report["threshold_source"] = "fixed"
        pooled = metrics.ConfusionCounts(0, 0, 0, 0)
        for p, g in zip(preds, gts):
            pooled = pooled + metrics.confusion(p, g, tau)
        seg = metrics.segmentation_report(pooled, tau)
        curve = metrics.pr_curve(preds, gts, grid)
        report.update(seg.to_dict())
        report["pr_auc"] = curve.auc
        figure_render = ("pr", curve)
    else:
        scores = np.array([metrics.image_score(p, method=args.aggregation) for p in preds])
        labels = np.array([bool((g >= 0.5).any()) for g in gts])
        report["aggregation"] = args.aggregation
        tau = args.threshold
        if tau is None:
            tau = metrics.grid_search_threshold(scores, labels, "f1", grid)
            report["threshold_source"] = f"grid search (F1, {args.grid} points)"
        else:
            report["threshold_source"] = "fixed"
        cls = metrics.classification_report(scores, labels, tau)
        report.update(cls.to_dict())
        figure_render = ("roc", (scores, labels, cls.roc_auc))

    if args.report:
        report_path = Path(args.report)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"report: {report_path}")
        if not args.no_figures:
            from .viz import render_pr_curve, render_roc_curve

            kind, payload = figure_render
            fig_path = report_path.with_name(report_path.stem + f"_{kind}_curve.png")
            if kind == "pr":
                render_pr_curve(fig_path, payload)
            else:
                render_roc_curve(fig_path, *payload)
            print(f"figure: {fig_path}")
    for key in sorted(report):
        if isinstance(report[key], float):
            print(f"{key}: {report[key]:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# losscheck / manifest-verify


def cmd_losscheck(args) -> int:
    report = losses.gradcheck_report(tolerance=args.tolerance, fault_inject=args.fault_inject)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n")
    if args.export_fixtures:
        written = losses.export_loss_fixtures(args.export_fixtures)
        print(f"exported {len(written)} fixtures to {args.export_fixtures}", file=sys.stderr)
    return EXIT_OK if report["pass"] else EXIT_CHECK_FAILED


def cmd_manifest_verify(args) -> int:
    if not os.path.exists(args.manifest):
        print(f"source I/O error: manifest not found: {args.manifest}", file=sys.stderr)
        return EXIT_IO
    problems = ds.verify_manifest(args.manifest)
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        return EXIT_CHECK_FAILED
    entries, _ = ds.read_manifest(args.manifest)
    print(f"OK {len(entries)} samples verified")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = {
        "generate": cmd_generate,
        "preview": cmd_preview,
        "evaluate": cmd_evaluate,
        "losscheck": cmd_losscheck,
        "manifest-verify": cmd_manifest_verify,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
