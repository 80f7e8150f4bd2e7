"""Manifest-driven batch jobs with per-entry isolation and deterministic outputs."""

from __future__ import annotations

import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import __version__
from .ablation import PerturbationKind, PerturbationSpec, apply_perturbation
from .augment import AugmentSpec, augment, augment_labels, resolution_pyramid
from .eps import compose_eps, detect_edges_fallback
from .imagecore import Palette, load_labels, load_png, save_labels, save_png
from .manifest import DatasetManifest, ManifestEntry, derive_seed
from .metrics import ConfusionMatrix, EvaluationError, confusion, dataset_distribution, distribution_csv

log = logging.getLogger(__name__)

JOBS_ENV = "EPSMAP_JOBS"
REPORT_NAME = "report.json"

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


@dataclass
class EntryResult:
    id: str
    status: str = "ok"
    message: str = ""
    seconds: float = 0.0
    outputs: list[str] = field(default_factory=list)
    value: Any = None  # in-memory payload (e.g. a confusion matrix); not serialised

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        d = {"id": self.id, "status": self.status, "seconds": round(self.seconds, 6), "outputs": self.outputs}
        if self.message:
            d["message"] = self.message
        return d


@dataclass
class JobReport:
    command: str
    entries: list[EntryResult]
    config: dict
    base_seed: int
    aggregate: dict = field(default_factory=dict)
    version: str = __version__
    distributions: dict = field(default_factory=dict, repr=False)

    @property
    def failed(self) -> list[EntryResult]:
        return [e for e in self.entries if not e.ok]

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.failed else EXIT_OK

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "base_seed": self.base_seed,
            "config": self.config,
            "entries": [e.to_dict() for e in self.entries],
            "aggregate": self.aggregate,
        }

    def write(self, out_dir: os.PathLike | str) -> Path:
        path = Path(out_dir) / REPORT_NAME
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def default_jobs() -> int:
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", JOBS_ENV, env)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class _Context:
    palette: Palette
    out_dir: Path
    base_seed: int
    options: dict


def _run_one(task: Callable, entry: ManifestEntry, ctx: _Context) -> EntryResult:
    result = EntryResult(entry.id)
    start = time.perf_counter()
    try:
        outputs, value = task(entry, ctx)
        result.outputs = [str(Path(p).name) for p in outputs]
        result.value = value
    except Exception as exc:  # entry isolation: any failure is recorded, never propagated
        result.status = "error"
        result.message = f"{type(exc).__name__}: {exc}"
        log.debug("entry %s failed:\n%s", entry.id, traceback.format_exc())
    result.seconds = time.perf_counter() - start
    return result


def _execute(task: Callable, manifest: DatasetManifest, ctx: _Context, jobs: int) -> list[EntryResult]:
    entries = list(manifest.entries)
    if jobs <= 1 or len(entries) <= 1:
        results = [_run_one(task, e, ctx) for e in entries]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(entries))) as pool:
            futures = [pool.submit(_run_one, task, e, ctx) for e in entries]
            results = [f.result() for f in futures]
    return sorted(results, key=lambda r: r.id)


def _palette_for(manifest: DatasetManifest, palette: Optional[Palette]) -> Palette:
    if palette is not None:
        return palette
    if manifest.palette is not None:
        return Palette.load(manifest.palette)
    return Palette.default()


def _prepare(manifest, out_dir, palette, required, options, jobs):
    manifest.validate(required)
    pal = _palette_for(manifest, palette)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(pal, out, manifest.base_seed, options)
    return ctx, (default_jobs() if jobs is None else jobs)


def _config(options: dict, manifest: DatasetManifest, out_dir, jobs: int) -> dict:
    cfg = dict(options)
    cfg.update(
        manifest=str(manifest.source) if manifest.source else None,
        out=str(out_dir),
        jobs=jobs,
        palette=str(manifest.palette) if manifest.palette else "default",
    )
    return cfg


def _load_seg(entry: ManifestEntry, ctx: _Context, role: str = "segmentation"):
    return load_labels(entry.path(role), ctx.palette, entry.seg_encoding, ctx.options.get("tolerance", 0))


# -- per-entry tasks (module level so worker processes can unpickle them) --

def _compose_task(entry: ManifestEntry, ctx: _Context):
    opts = ctx.options
    seg = _load_seg(entry, ctx)
    if opts.get("fallback_edges"):
        edges = detect_edges_fallback(load_png(entry.image), opts["low"], opts["high"])
        edge_source = "fallback-sobel"
    else:
        edges = load_png(entry.edges)
        edge_source = str(entry.edges)
    eps = compose_eps(edges, seg, ctx.palette, opts.get("edge_gain", 1.0), edge_source, str(entry.segmentation))
    path = ctx.out_dir / f"{entry.id}_eps.png"
    save_png(eps.raster, path)
    return [path], None


def _edges_task(entry: ManifestEntry, ctx: _Context):
    edges = detect_edges_fallback(load_png(entry.image), ctx.options["low"], ctx.options["high"])
    path = ctx.out_dir / f"{entry.id}_edges.png"
    save_png(edges, path)
    return [path], None


_PERTURB_ROLE = {
    PerturbationKind.SMOOTH: "image",
    PerturbationKind.CARVE: "edges",
    PerturbationKind.WARP: "segmentation",
}


def _perturb_task(entry: ManifestEntry, ctx: _Context):
    kind = PerturbationKind(ctx.options["kind"])
    if kind is PerturbationKind.WARP:
        source = _load_seg(entry, ctx)
    else:
        source = load_png(entry.path(_PERTURB_ROLE[kind]))
    outputs = []
    for level in ctx.options["levels"]:
        spec = PerturbationSpec(kind, level, derive_seed(ctx.base_seed, entry.id, level))
        result = apply_perturbation(source, spec)
        path = ctx.out_dir / f"{entry.id}_{kind.value}_{level}.png"
        if kind is PerturbationKind.WARP:
            save_labels(result, path, ctx.palette, entry.seg_encoding)
        else:
            save_png(result, path)
        outputs.append(path)
    return outputs, None


def _augment_task(entry: ManifestEntry, ctx: _Context):
    opts = ctx.options
    base = AugmentSpec(opts["max_angle"], opts["min_keep"], tuple(opts["scale_range"]))
    image = load_png(entry.image) if entry.image else None
    edges = load_png(entry.edges) if entry.edges else None
    seg = _load_seg(entry, ctx) if entry.segmentation else None
    if image is None and edges is None and seg is None:
        raise ValueError("entry has no image, edges or segmentation to augment")
    outputs = []
    for k in range(opts["count"]):
        spec = base.with_seed(derive_seed(ctx.base_seed, entry.id, 0, k))
        if image is not None:
            outputs.append(ctx.out_dir / f"{entry.id}_aug_{k}.png")
            save_png(augment(image, spec), outputs[-1])
        if edges is not None:
            outputs.append(ctx.out_dir / f"{entry.id}_aug_{k}_edges.png")
            save_png(augment(edges, spec), outputs[-1])
        if seg is not None:
            outputs.append(ctx.out_dir / f"{entry.id}_aug_{k}_seg.png")
            save_labels(augment_labels(seg, spec), outputs[-1], ctx.palette, entry.seg_encoding)
    return outputs, None


def _pyramid_task(entry: ManifestEntry, ctx: _Context):
    outputs = []
    for level in resolution_pyramid(load_png(entry.image)):
        path = ctx.out_dir / f"{entry.id}_{level.width}x{level.height}.png"
        save_png(level, path)
        outputs.append(path)
    return outputs, None


def _eval_task(entry: ManifestEntry, ctx: _Context):
    ref = _load_seg(entry, ctx, "segmentation")
    cand = _load_seg(entry, ctx, "candidate")
    return [], confusion(ref, cand, ctx.options.get("ignore"), num_classes=len(ctx.palette))


# -- public job functions --

def run_compose(
    manifest: DatasetManifest,
    out_dir,
    *,
    fallback_edges: bool = False,
    low: float = 0.1,
    high: float = 0.3,
    edge_gain: float = 1.0,
    tolerance: int = 0,
    palette: Optional[Palette] = None,
    jobs: Optional[int] = None,
) -> JobReport:
    """Write ``{id}_eps.png`` for every entry."""
    options = dict(fallback_edges=fallback_edges, low=low, high=high, edge_gain=edge_gain, tolerance=tolerance)
    required = ("segmentation", "image" if fallback_edges else "edges")
    ctx, jobs = _prepare(manifest, out_dir, palette, required, options, jobs)
    results = _execute(_compose_task, manifest, ctx, jobs)
    return JobReport("compose", results, _config(options, manifest, out_dir, jobs), manifest.base_seed)


def run_edges(manifest, out_dir, *, low: float = 0.1, high: float = 0.3, jobs: Optional[int] = None) -> JobReport:
    if not 0.0 <= low <= high <= 1.0:
        raise ValueError(f"thresholds must satisfy 0 <= low <= high <= 1, got low={low}, high={high}")
    options = dict(low=low, high=high)
    ctx, jobs = _prepare(manifest, out_dir, Palette.default(), ("image",), options, jobs)
    results = _execute(_edges_task, manifest, ctx, jobs)
    return JobReport("edges", results, _config(options, manifest, out_dir, jobs), manifest.base_seed)


def run_perturb(
    manifest: DatasetManifest,
    kind: PerturbationKind | str,
    levels: Sequence[int],
    out_dir,
    *,
    tolerance: int = 0,
    palette: Optional[Palette] = None,
    jobs: Optional[int] = None,
) -> JobReport:
    """Write ``{id}_{kind}_{level}.png`` for every entry and level of the sweep."""
    kind = PerturbationKind(kind)
    levels = [int(v) for v in levels]
    if not levels or any(v < 0 for v in levels):
        raise ValueError("perturbation levels must be a non-empty list of non-negative integers")
    if kind is PerturbationKind.SMOOTH and any(v > 100 for v in levels):
        raise ValueError("smoothing radius must be <= 100")
    options = dict(kind=kind.value, levels=levels, tolerance=tolerance)
    ctx, jobs = _prepare(manifest, out_dir, palette, (_PERTURB_ROLE[kind],), options, jobs)
    results = _execute(_perturb_task, manifest, ctx, jobs)
    return JobReport(kind.value, results, _config(options, manifest, out_dir, jobs), manifest.base_seed)


def run_augment(
    manifest: DatasetManifest,
    spec: AugmentSpec,
    count: int,
    out_dir,
    *,
    tolerance: int = 0,
    palette: Optional[Palette] = None,
    jobs: Optional[int] = None,
) -> JobReport:
    """Write ``count`` variants per entry; paired inputs share each variant's geometry."""
    if count < 1:
        raise ValueError("count must be >= 1")
    options = dict(
        count=count, max_angle=spec.max_angle, min_keep=spec.min_keep,
        scale_range=list(spec.scale_range), tolerance=tolerance,
    )
    ctx, jobs = _prepare(manifest, out_dir, palette, (), options, jobs)
    results = _execute(_augment_task, manifest, ctx, jobs)
    return JobReport("augment", results, _config(options, manifest, out_dir, jobs), manifest.base_seed)


def run_pyramid(manifest: DatasetManifest, out_dir, *, jobs: Optional[int] = None) -> JobReport:
    ctx, jobs = _prepare(manifest, out_dir, Palette.default(), ("image",), {}, jobs)
    results = _execute(_pyramid_task, manifest, ctx, jobs)
    return JobReport("pyramid", results, _config({}, manifest, out_dir, jobs), manifest.base_seed)


def group_matrices(manifest: DatasetManifest, results: Sequence[EntryResult]) -> dict[str, list[ConfusionMatrix]]:
    """Confusion matrices of successful entries, keyed by tag plus ``"all"``."""
    tags_by_id = {e.id: e.tags for e in manifest.entries}
    groups: dict[str, list[ConfusionMatrix]] = {"all": []}
    for r in results:
        if not r.ok:
            continue
        groups["all"].append(r.value)
        for tag in tags_by_id[r.id]:
            groups.setdefault(tag, []).append(r.value)
    return {"all": groups.pop("all"), **dict(sorted(groups.items()))}


def run_eval(
    manifest: DatasetManifest,
    out_dir,
    *,
    ignore: Optional[int] = None,
    tolerance: int = 0,
    palette: Optional[Palette] = None,
    jobs: Optional[int] = None,
) -> JobReport:
    """Compare ``segmentation`` (reference) to ``candidate`` for every entry.

    Writes ``iou.json`` and ``iou.csv`` with per-tag and overall statistics.
    """
    if not manifest.entries:
        raise EvaluationError("no evaluable pixels")
    options = dict(ignore=ignore, tolerance=tolerance)
    ctx, jobs = _prepare(manifest, out_dir, palette, ("segmentation", "candidate"), options, jobs)
    results = _execute(_eval_task, manifest, ctx, jobs)
    report = JobReport("eval", results, _config(options, manifest, out_dir, jobs), manifest.base_seed)

    distributions = {}
    for group, mats in group_matrices(manifest, results).items():
        try:
            distributions[group] = dataset_distribution(mats)
        except EvaluationError as exc:
            report.aggregate.setdefault("errors", {})[group] = str(exc)
    report.aggregate["groups"] = {g: d.to_dict() for g, d in distributions.items()}
    report.distributions.update(distributions)

    out = Path(out_dir)
    with open(out / "iou.json", "w", encoding="utf-8") as fh:
        json.dump(report.aggregate, fh, indent=2, sort_keys=True)
        fh.write("\n")
    names = [e.name for e in ctx.palette.entries]
    (out / "iou.csv").write_text(distribution_csv(distributions, names), encoding="utf-8")
    report.aggregate["files"] = ["iou.json", "iou.csv"]
    if "all" not in distributions:
        # nothing evaluable: surface as a job-level failure
        for r in report.entries:
            if r.ok:
                r.status, r.message = "error", "no evaluable pixels"
    return report
