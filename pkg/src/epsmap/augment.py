"""Training-data augmentation (rotate, crop, scale) and the progressive-resolution pyramid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ablation import make_rng
from .imagecore import LabelMap, RasterImage

PYRAMID_SIZES = ((128, 72), (256, 144), (512, 288), (1024, 576))


@dataclass(frozen=True)
class AugmentSpec:
    max_angle: float = 7.0
    min_keep: float = 0.5
    scale_range: tuple[float, float] = (0.8, 1.2)
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.scale_range
        object.__setattr__(self, "scale_range", (float(lo), float(hi)))
        if self.max_angle < 0:
            raise ValueError("max_angle must be >= 0")
        if not 0 < self.min_keep <= 1:
            raise ValueError("min_keep must be in (0, 1]")
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < low <= high")

    def with_seed(self, seed: int) -> "AugmentSpec":
        return AugmentSpec(self.max_angle, self.min_keep, self.scale_range, seed)


@dataclass(frozen=True)
class AugmentParams:
    """Concrete geometry drawn from an :class:`AugmentSpec` for one image size."""

    angle: float  # degrees
    center: tuple[float, float]  # (x, y)
    crop: tuple[int, int, int, int]  # (x0, y0, width, height)
    scale: float
    out_size: tuple[int, int]  # (width, height)


def draw_params(width: int, height: int, spec: AugmentSpec) -> AugmentParams:
    rng = make_rng(spec.seed)
    angle = rng.uniform(-spec.max_angle, spec.max_angle)
    cx = rng.uniform(0.0, width - 1)
    cy = rng.uniform(0.0, height - 1)
    keep_w = rng.uniform(spec.min_keep, 1.0)
    keep_h = rng.uniform(spec.min_keep, 1.0)
    cw = min(width, max(1, int(math.floor(keep_w * width + 0.5))))
    ch = min(height, max(1, int(math.floor(keep_h * height + 0.5))))
    x0 = int(rng.integers(0, width - cw, endpoint=True))
    y0 = int(rng.integers(0, height - ch, endpoint=True))
    scale = rng.uniform(*spec.scale_range)
    # round the shorter side, derive the longer one from the crop aspect so the
    # aspect error stays within half a pixel on both axes
    if cw >= ch:
        oh = max(1, int(math.floor(ch * scale + 0.5)))
        ow = max(1, int(math.floor(oh * cw / ch + 0.5)))
    else:
        ow = max(1, int(math.floor(cw * scale + 0.5)))
        oh = max(1, int(math.floor(ow * ch / cw + 0.5)))
    return AugmentParams(angle, (cx, cy), (x0, y0, cw, ch), scale, (ow, oh))


def _round8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def sample_bilinear(data: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Bilinear lookup of an (H, W, C) array at float coordinates, edge-replicated."""
    h, w = data.shape[:2]
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    d = data.astype(np.float64)
    top = d[y0, x0] * (1 - fx) + d[y0, x1] * fx
    bottom = d[y1, x0] * (1 - fx) + d[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def sample_nearest(data: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = data.shape[:2]
    xi = np.clip(np.floor(sx + 0.5), 0, w - 1).astype(np.intp)
    yi = np.clip(np.floor(sy + 0.5), 0, h - 1).astype(np.intp)
    return data[yi, xi]


def _rotation_sources(width: int, height: int, angle: float, center: tuple[float, float]):
    cx, cy = center
    theta = math.radians(angle)
    c, s = math.cos(theta), math.sin(theta)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    # inverse rotation of each output pixel back into the source
    return c * dx + s * dy + cx, -s * dx + c * dy + cy


def _scale_sources(in_size: tuple[int, int], out_size: tuple[int, int]):
    (iw, ih), (ow, oh) = in_size, out_size
    xs = (np.arange(ow) + 0.5) * (iw / ow) - 0.5
    ys = (np.arange(oh) + 0.5) * (ih / oh) - 0.5
    sy, sx = np.meshgrid(ys, xs, indexing="ij")
    return sx, sy


def apply_params(data: np.ndarray, params: AugmentParams, nearest: bool = False) -> np.ndarray:
    """Rotate, crop and scale an (H, W[, C]) array with the given geometry."""
    sample = sample_nearest if nearest else sample_bilinear
    flat = data.ndim == 2
    arr = data[:, :, None] if flat else data
    h, w = arr.shape[:2]

    if params.angle != 0.0:
        sx, sy = _rotation_sources(w, h, params.angle, params.center)
        arr = sample(arr, sx, sy)
        if not nearest:
            arr = _round8(arr)

    x0, y0, cw, ch = params.crop
    arr = arr[y0:y0 + ch, x0:x0 + cw]

    if params.out_size != (cw, ch):
        sx, sy = _scale_sources((cw, ch), params.out_size)
        arr = sample(arr, sx, sy)
        if not nearest:
            arr = _round8(arr)

    return arr[:, :, 0] if flat else arr


def augment(image: RasterImage, spec: AugmentSpec) -> RasterImage:
    if image.width < 2 or image.height < 2:
        raise ValueError("augment needs an image of at least 2x2 pixels")
    params = draw_params(image.width, image.height, spec)
    return RasterImage(apply_params(image.data, params))


def augment_labels(labels: LabelMap, spec: AugmentSpec) -> LabelMap:
    """Same geometry as :func:`augment` for the same seed, with nearest sampling."""
    if labels.width < 2 or labels.height < 2:
        raise ValueError("augment needs a map of at least 2x2 pixels")
    params = draw_params(labels.width, labels.height, spec)
    return LabelMap(apply_params(labels.labels, params, nearest=True), labels.num_classes)


def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) weights averaging the input cells each output cell covers."""
    step = n_in / n_out
    lo = np.arange(n_out)[:, None] * step
    hi = lo + step
    j = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    return overlap / step


def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    src = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0, n_in - 1)
    return np.clip(1.0 - np.abs(src[:, None] - np.arange(n_in)[None, :]), 0.0, None)


def _axis_matrix(n_in: int, n_out: int) -> np.ndarray | None:
    if n_in == n_out:
        return None
    if n_out < n_in:
        return _area_matrix(n_in, n_out)
    return _bilinear_matrix(n_in, n_out)


def resize(image: RasterImage, width: int, height: int) -> RasterImage:
    """Area-average when shrinking an axis, bilinear when enlarging it."""
    if (width, height) == image.size:
        return image
    my = _axis_matrix(image.height, height)
    mx = _axis_matrix(image.width, width)
    out = image.data.astype(np.float64)
    c = image.channels
    if my is not None:
        out = (my @ out.reshape(image.height, -1)).reshape(height, image.width, c)
    if mx is not None:
        rows = out.transpose(0, 2, 1).reshape(-1, image.width) @ mx.T
        out = rows.reshape(height, c, width).transpose(0, 2, 1)
    return RasterImage(_round8(out))


def resolution_pyramid(image: RasterImage) -> list[RasterImage]:
    """Four images at 128x72, 256x144, 512x288 and 1024x576."""
    top = resize(image, *PYRAMID_SIZES[-1])
    return [resize(top, w, h) for w, h in PYRAMID_SIZES[:-1]] + [top]
