"""Quality-degradation transforms: Kuwahara smoothing, edge carving, label warping."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .imagecore import LabelMap, RasterImage

# Integer luma weights (x1000) so quadrant variances compare exactly.
_LUMA_INT = np.array([299, 587, 114], dtype=np.int64)

# int64 headroom for n*sum(L^2) with n = (r+1)^2 samples of L <= 255000
MAX_KUWAHARA_RADIUS = 100

# Pixels below 64% of full scale (163.2) are dropped, so 164 is the first kept value.
CARVE_THRESHOLD = math.ceil(0.64 * 255)

FINE_GRID = (7, 5)  # columns, rows
COARSE_GRID = (3, 3)


class PerturbationKind(str, enum.Enum):
    SMOOTH = "smooth"
    CARVE = "carve"
    WARP = "warp"


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    level: int
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PerturbationKind(self.kind))
        if self.level < 0:
            raise ValueError("perturbation level must be >= 0")

    @property
    def is_identity(self) -> bool:
        return self.level == 0


def _box_sums(a: np.ndarray, k: int) -> np.ndarray:
    """Sums over every k x k window of ``a`` (valid positions only), per trailing channel."""
    c = np.zeros((a.shape[0] + 1, a.shape[1] + 1) + a.shape[2:], dtype=np.int64)
    c[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def kuwahara(image: RasterImage, r: int) -> RasterImage:
    """Classic four-quadrant Kuwahara filter with clamp-to-edge borders.

    Each pixel gets the per-channel mean of whichever (r+1)x(r+1) quadrant
    (NW, NE, SW, SE) has the lowest luma variance; earlier quadrants win ties.
    Means are rounded half up.
    """
    if r < 1:
        raise ValueError("kuwahara radius must be >= 1; use level 0 for the identity")
    if r > MAX_KUWAHARA_RADIUS:
        raise ValueError(f"kuwahara radius must be <= {MAX_KUWAHARA_RADIUS}")

    h, w = image.height, image.width
    px = np.pad(image.data.astype(np.int64), ((r, r), (r, r), (0, 0)), mode="edge")
    if image.channels == 3:
        lum = px @ _LUMA_INT
    else:
        lum = px[:, :, 0] * 1000
    k = r + 1
    n = k * k
    s1 = _box_sums(lum, k)
    s2 = _box_sums(lum * lum, k)
    sc = _box_sums(px, k)

    # top-left corners (in padded coordinates) of NW, NE, SW, SE for pixel (y, x)
    offsets = ((0, 0), (0, r), (r, 0), (r, r))
    # n^2 * variance, exact in integers
    scaled_var = np.stack([n * s2[oy:oy + h, ox:ox + w] - s1[oy:oy + h, ox:ox + w] ** 2 for oy, ox in offsets])
    sums = np.stack([sc[oy:oy + h, ox:ox + w] for oy, ox in offsets])

    best = scaled_var.argmin(axis=0)
    chosen = np.take_along_axis(sums, best[None, :, :, None], axis=0)[0]
    out = (2 * chosen + n) // (2 * n)
    return RasterImage(out.astype(np.uint8))


def _threshold(edges: np.ndarray) -> np.ndarray:
    return np.where(edges >= CARVE_THRESHOLD, edges, 0)


def _box_blur3(a: np.ndarray) -> np.ndarray:
    p = np.pad(a.astype(np.int64), 1, mode="edge")
    s = _box_sums(p, 3)
    return (2 * s + 9) // 18


def carve_steps(edges: RasterImage, level: int):
    """Yield ``(thresholded, blurred)`` integer arrays for each carving iteration."""
    current = edges.gray().astype(np.int64)
    for _ in range(level):
        thresholded = _threshold(current)
        current = _box_blur3(thresholded)
        yield thresholded, current


def carve_edges(edges: RasterImage, level: int) -> RasterImage:
    """Iteratively threshold at 64% intensity and blur with a 3x3 box kernel."""
    if not edges.is_gray:
        raise ValueError("carve_edges expects a grayscale edge map")
    if level < 0:
        raise ValueError("carve level must be >= 0")
    if level == 0:
        return edges
    current = None
    for _, current in carve_steps(edges, level):
        pass
    return RasterImage(current.astype(np.uint8))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _hat_weights(size: int, nodes: int) -> np.ndarray:
    """(size, nodes) bilinear weights placing ``nodes`` evenly over ``[0, size-1]``."""
    if size == 1:
        u = np.zeros(1)
    else:
        u = np.arange(size) / (size - 1) * (nodes - 1)
    return np.clip(1.0 - np.abs(u[:, None] - np.arange(nodes)[None, :]), 0.0, None)


def displacement_field(grid_dx: np.ndarray, grid_dy: np.ndarray, height: int, width: int):
    """Bilinearly interpolate control-point offsets (rows x cols) to a dense field."""
    wy = _hat_weights(height, grid_dx.shape[0])
    wx = _hat_weights(width, grid_dx.shape[1])
    return wy @ grid_dx @ wx.T, wy @ grid_dy @ wx.T


def remap_nearest(labels: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Backward-map: out(y, x) = labels(y + dy, x + dx), nearest sample, clamped."""
    h, w = labels.shape
    sy = np.floor(dy + (np.arange(h) + 0.5)[:, None])
    sx = np.floor(dx + (np.arange(w) + 0.5)[None, :])
    np.clip(sy, 0, h - 1, out=sy)
    np.clip(sx, 0, w - 1, out=sx)
    flat = sy.astype(np.intp) * w + sx.astype(np.intp)
    return np.take(labels.ravel(), flat)


def warp_offsets(level: int, rng: np.random.Generator):
    """Draw the control-point offsets for both warp stages.

    Returns ``((fine_dx, fine_dy), (coarse_dx, coarse_dy))`` grids of shape
    (rows, cols); border points are zero.
    """
    cols, rows = FINE_GRID
    fine_dx = np.zeros((rows, cols))
    fine_dy = np.zeros((rows, cols))
    inner = rng.standard_normal((2, rows - 2, cols - 2)) * level
    fine_dx[1:-1, 1:-1] = inner[0]
    fine_dy[1:-1, 1:-1] = inner[1]

    cols, rows = COARSE_GRID
    coarse_dx = np.zeros((rows, cols))
    coarse_dy = np.zeros((rows, cols))
    angle = rng.uniform(0.0, 2.0 * math.pi)
    coarse_dx[rows // 2, cols // 2] = 2.0 * level * math.cos(angle)
    coarse_dy[rows // 2, cols // 2] = 2.0 * level * math.sin(angle)
    return (fine_dx, fine_dy), (coarse_dx, coarse_dy)


def warp_labels(labels: LabelMap, level: int, seed: int) -> LabelMap:
    """Two-stage mesh warp: jittered 7x5 grid, then a displaced 3x3 centre point."""
    if level < 0:
        raise ValueError("warp level must be >= 0")
    if level == 0:
        return labels
    h, w = labels.height, labels.width
    out = labels.labels
    for grid_dx, grid_dy in warp_offsets(level, make_rng(seed)):
        dx, dy = displacement_field(grid_dx, grid_dy, h, w)
        out = remap_nearest(out, dx, dy)
    return LabelMap(out, labels.num_classes)


def apply_perturbation(target, spec: PerturbationSpec):
    """Dispatch ``spec`` to the transform matching its kind."""
    if spec.kind is PerturbationKind.SMOOTH:
        return target if spec.level == 0 else kuwahara(target, spec.level)
    if spec.kind is PerturbationKind.CARVE:
        return carve_edges(target, spec.level)
    return warp_labels(target, spec.level, spec.seed)
