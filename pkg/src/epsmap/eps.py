"""Edge-plus-segmentation (EPS) map composition and a fallback edge detector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagecore import LabelMap, Palette, RasterImage, labels_to_color

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Largest |Sobel| a 0..255 image can produce: neighbours R, B, BR, TR at 255
# give gx = 4*255, gy = 2*255, so |g| = 255 * sqrt(20).
SOBEL_MAX = 255.0 * 2.0 * math.sqrt(5.0)

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class EpsMap:
    raster: RasterImage
    edge_source: str = ""
    segmentation_source: str = ""

    @property
    def size(self) -> tuple[int, int]:
        return self.raster.size


def round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def compose_eps(
    edges: RasterImage,
    segmentation: LabelMap,
    palette: Palette,
    edge_gain: float = 1.0,
    edge_source: str = "",
    segmentation_source: str = "",
) -> EpsMap:
    """Add a grayscale edge map onto the colour-coded segmentation.

    The edge value (times ``edge_gain``) is added to all three channels and the
    sum saturates at 255.
    """
    if not edges.is_gray:
        raise ValueError("edge map must be a single-channel raster")
    if edges.size != segmentation.size:
        raise ValueError(
            f"dimension mismatch: edges are {edges.width}x{edges.height}, "
            f"segmentation is {segmentation.width}x{segmentation.height}"
        )
    if edge_gain < 0:
        raise ValueError("edge_gain must be non-negative")

    color = labels_to_color(segmentation, palette).data.astype(np.int32)
    e = edges.data.astype(np.int32)
    if edge_gain != 1.0:
        e = round_half_up(e * float(edge_gain)).astype(np.int32)
    out = np.clip(color + e, 0, 255).astype(np.uint8)
    return EpsMap(RasterImage(out), edge_source, segmentation_source)


def luma(image: RasterImage) -> np.ndarray:
    if image.is_gray:
        return image.gray().astype(np.float64)
    return image.data.astype(np.float64) @ LUMA_WEIGHTS


def sobel_magnitude(image: RasterImage) -> np.ndarray:
    """Sobel gradient magnitude of the luma, scaled to 0..255 (float)."""
    y = luma(image)
    gx = ndimage.correlate(y, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(y, _SOBEL_Y, mode="nearest")
    return np.hypot(gx, gy) * (255.0 / SOBEL_MAX)


def detect_edges_fallback(image: RasterImage, low: float = 0.1, high: float = 0.3) -> RasterImage:
    """Sobel edge map with double-threshold hysteresis.

    Pixels at or above ``high * 255`` are kept; pixels in ``[low, high) * 255``
    are kept when 8-connected (through other candidates) to a kept pixel.
    Survivors keep their graded magnitude.
    """
    if not 0.0 <= low <= high <= 1.0:
        raise ValueError(f"thresholds must satisfy 0 <= low <= high <= 1, got low={low}, high={high}")

    mag = np.clip(round_half_up(sobel_magnitude(image)), 0, 255).astype(np.uint8)
    strong = mag >= high * 255.0
    candidate = mag >= low * 255.0
    components, n = ndimage.label(candidate, structure=np.ones((3, 3), dtype=bool))
    if n:
        keep_ids = np.zeros(n + 1, dtype=bool)
        keep_ids[np.unique(components[strong])] = True
        keep_ids[0] = False
        keep = keep_ids[components]
    else:
        keep = np.zeros_like(candidate)
    return RasterImage(np.where(keep, mag, 0).astype(np.uint8))
