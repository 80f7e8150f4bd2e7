"""Command-line entry point: ``epsmap <command> --manifest M --out DIR ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__, runner
from .ablation import PerturbationKind
from .augment import AugmentSpec
from .imagecore import Palette, PaletteError
from .manifest import DatasetManifest, ManifestError
from .metrics import EvaluationError

log = logging.getLogger("epsmap")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the manifest's base_seed")
    p.add_argument("--jobs", type=int, default=None,
                   help=f"worker processes (default: ${runner.JOBS_ENV} or CPU count)")
    p.add_argument("--palette", default=None, help="palette JSON overriding the manifest's")
    p.add_argument("--tolerance", type=int, default=0,
                   help="max per-channel deviation when decoding colour-coded segmentations")


def _thresholds(p: argparse.ArgumentParser) -> None:
    p.add_argument("--low", type=float, default=0.1, help="hysteresis low threshold (fraction of 255)")
    p.add_argument("--high", type=float, default=0.3, help="hysteresis high threshold (fraction of 255)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epsmap", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compose", help="build EPS maps from edges + segmentation")
    _common(p)
    _thresholds(p)
    p.add_argument("--fallback-edges", action="store_true",
                   help="compute edges from each entry's image with the built-in Sobel detector")
    p.add_argument("--edge-gain", type=float, default=1.0)

    p = sub.add_parser("edges", help="built-in Sobel/hysteresis edge maps")
    _common(p)
    _thresholds(p)

    p = sub.add_parser("smooth", help="Kuwahara smoothing sweep on images")
    _common(p)
    p.add_argument("--smooth-radius", type=int, nargs="+", required=True, metavar="N")

    p = sub.add_parser("carve", help="edge carving sweep on edge maps")
    _common(p)
    p.add_argument("--carve-level", type=int, nargs="+", required=True, metavar="N")

    p = sub.add_parser("warp", help="segmentation warping sweep on label maps")
    _common(p)
    p.add_argument("--warp-level", type=int, nargs="+", required=True, metavar="N")

    p = sub.add_parser("augment", help="rotate/crop/scale augmentation")
    _common(p)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--max-angle", type=float, default=7.0)
    p.add_argument("--min-keep", type=float, default=0.5)
    p.add_argument("--scale-range", type=float, nargs=2, default=(0.8, 1.2), metavar=("LOW", "HIGH"))

    p = sub.add_parser("pyramid", help="128x72 .. 1024x576 resolution pyramid")
    _common(p)

    p = sub.add_parser("eval", help="IoU between reference and candidate segmentations")
    _common(p)
    p.add_argument("--ignore", type=int, default=None, help="reference class id excluded from scoring")
    return parser


def _dispatch(args: argparse.Namespace, manifest: DatasetManifest, palette: Optional[Palette]) -> runner.JobReport:
    common = dict(jobs=args.jobs)
    seg = dict(common, palette=palette, tolerance=args.tolerance)
    cmd = args.command
    if cmd == "compose":
        return runner.run_compose(manifest, args.out, fallback_edges=args.fallback_edges, low=args.low,
                                  high=args.high, edge_gain=args.edge_gain, **seg)
    if cmd == "edges":
        return runner.run_edges(manifest, args.out, low=args.low, high=args.high, **common)
    if cmd == "smooth":
        return runner.run_perturb(manifest, PerturbationKind.SMOOTH, args.smooth_radius, args.out, **seg)
    if cmd == "carve":
        return runner.run_perturb(manifest, PerturbationKind.CARVE, args.carve_level, args.out, **seg)
    if cmd == "warp":
        return runner.run_perturb(manifest, PerturbationKind.WARP, args.warp_level, args.out, **seg)
    if cmd == "augment":
        spec = AugmentSpec(args.max_angle, args.min_keep, tuple(args.scale_range))
        return runner.run_augment(manifest, spec, args.count, args.out, **seg)
    if cmd == "pyramid":
        return runner.run_pyramid(manifest, args.out, **common)
    if cmd == "eval":
        return runner.run_eval(manifest, args.out, ignore=args.ignore, **seg)
    raise AssertionError(cmd)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")

    try:
        manifest = DatasetManifest.load(args.manifest)
        if args.seed is not None:
            manifest = manifest.with_seed(args.seed)
        palette = Palette.load(args.palette) if args.palette else None
        report = _dispatch(args, manifest, palette)
    except (ManifestError, PaletteError, EvaluationError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return runner.EXIT_CONFIG

    report.config["argv"] = {k: v for k, v in vars(args).items() if k != "verbose"}
    path = report.write(args.out)
    for e in report.failed:
        log.error("%s: %s", e.id, e.message)
    ok = len(report.entries) - len(report.failed)
    log.info("%s: %d/%d entries ok, report at %s", report.command, ok, len(report.entries), path)
    if report.command == "eval" and "all" in report.distributions:
        log.info("mean IoU (all): %.3f", report.distributions["all"].mean_iou)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
