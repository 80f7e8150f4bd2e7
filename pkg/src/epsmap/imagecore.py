"""Raster and label-map types, palettes and 8-bit PNG I/O."""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from importlib import resources
from typing import Sequence, Union

import numpy as np
from PIL import Image

PathLike = Union[str, os.PathLike]

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# IHDR colour types
_GRAY, _RGB, _INDEXED, _GRAY_ALPHA, _RGBA = 0, 2, 3, 4, 6


class PngFormatError(ValueError):
    """Raised for PNG files outside the supported 8-bit gray/RGB subset."""


class PaletteError(ValueError):
    pass


class LabelError(ValueError):
    """A label or colour that cannot be mapped between encodings."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit image stored as a read-only ``(height, width, channels)`` array.

    ``channels`` is 1 (grayscale) or 3 (RGB). A 2-D array is accepted and
    treated as grayscale.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected HxW, HxWx1 or HxWx3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"raster dimensions must be positive, got {arr.shape[1]}x{arr.shape[0]}")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0 or arr.max() > 255:
                raise ValueError(f"raster samples must be 8-bit, got dtype {arr.dtype}")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", _readonly(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)"""
        return self.width, self.height

    @property
    def is_gray(self) -> bool:
        return self.channels == 1

    def gray(self) -> np.ndarray:
        """2-D view of a grayscale raster."""
        if not self.is_gray:
            raise ValueError("raster is not grayscale")
        return self.data[:, :, 0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self) -> str:
        return f"RasterImage({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel class indices in ``[0, num_classes)``."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"label map must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"labels must be integers, got dtype {arr.dtype}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        bad = (arr < 0) | (arr >= self.num_classes)
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise LabelError(
                f"label {int(arr[y, x])} at (x={x}, y={y}) outside [0, {self.num_classes})"
            )
        object.__setattr__(self, "labels", _readonly(arr.astype(np.int32, copy=False)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def present_classes(self) -> set[int]:
        return set(np.unique(self.labels).tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.labels.shape == other.labels.shape
            and bool(np.array_equal(self.labels, other.labels))
        )

    def __repr__(self) -> str:
        return f"LabelMap({self.width}x{self.height}, K={self.num_classes})"


@dataclass(frozen=True)
class PaletteEntry:
    id: int
    name: str
    color: tuple[int, int, int]


class Palette:
    """Ordered class table mapping ids ``0..K-1`` to distinct RGB colours."""

    def __init__(self, entries: Sequence[PaletteEntry]):
        entries = sorted(entries, key=lambda e: e.id)
        if not entries:
            raise PaletteError("palette is empty")
        ids = [e.id for e in entries]
        if ids != list(range(len(entries))):
            raise PaletteError(f"palette ids must be 0..{len(entries) - 1} without gaps, got {ids}")
        seen: dict[tuple[int, int, int], int] = {}
        for e in entries:
            if len(e.color) != 3 or any(not 0 <= c <= 255 for c in e.color):
                raise PaletteError(f"class {e.id}: color {e.color} is not an 8-bit RGB triple")
            if e.color in seen:
                raise PaletteError(f"classes {seen[e.color]} and {e.id} share color {e.color}")
            seen[e.color] = e.id
        self.entries: tuple[PaletteEntry, ...] = tuple(entries)
        self.colors = _readonly(np.array([e.color for e in entries], dtype=np.uint8))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def num_classes(self) -> int:
        return len(self.entries)

    def name(self, class_id: int) -> str:
        return self.entries[class_id].name

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "Palette":
        try:
            entries = [
                PaletteEntry(int(d["id"]), str(d["name"]), tuple(int(c) for c in d["color"]))
                for d in items
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise PaletteError(f"malformed palette entry: {exc}") from exc
        return cls(entries)

    @classmethod
    def load(cls, path: PathLike) -> "Palette":
        with open(path, "r", encoding="utf-8") as fh:
            items = json.load(fh)
        if not isinstance(items, list):
            raise PaletteError(f"{path}: palette file must hold a JSON array")
        return cls.from_list(items)

    @classmethod
    def default(cls) -> "Palette":
        """The bundled 19-class Cityscapes-convention palette."""
        text = resources.files("epsmap").joinpath("data/cityscapes.json").read_text("utf-8")
        return cls.from_list(json.loads(text))

    def to_list(self) -> list[dict]:
        return [{"id": e.id, "name": e.name, "color": list(e.color)} for e in self.entries]

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_list(), fh, indent=2)

    def __repr__(self) -> str:
        return f"Palette(K={len(self)})"


def _read_ihdr(path: PathLike) -> tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise PngFormatError(f"{path}: not a PNG file")
    bit_depth, color_type = struct.unpack(">BB", head[24:26])
    return bit_depth, color_type


def load_png(path: PathLike) -> RasterImage:
    """Read an 8-bit grayscale or RGB PNG. Alpha channels are dropped."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    bit_depth, color_type = _read_ihdr(path)
    if color_type == _INDEXED:
        raise PngFormatError(f"{path}: unsupported color type (palette-indexed PNG)")
    if bit_depth != 8:
        raise PngFormatError(f"{path}: unsupported bit depth {bit_depth} (only 8-bit PNG is supported)")
    if color_type not in (_GRAY, _RGB, _GRAY_ALPHA, _RGBA):
        raise PngFormatError(f"{path}: unsupported color type {color_type}")

    with Image.open(path) as img:
        img.load()
        arr = np.asarray(img)
    if color_type == _GRAY_ALPHA:
        arr = arr[:, :, 0] if arr.ndim == 3 else arr
    elif color_type == _RGBA:
        arr = arr[:, :, :3]
    return RasterImage(arr)


def save_png(image: RasterImage, path: PathLike) -> None:
    """Write ``image`` as an 8-bit gray or RGB PNG without ancillary chunks."""
    if image.is_gray:
        img = Image.fromarray(image.gray(), mode="L")
    else:
        img = Image.fromarray(image.data, mode="RGB")
    try:
        img.save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc


def labels_to_color(labels: LabelMap, palette: Palette) -> RasterImage:
    if labels.num_classes > len(palette):
        bad = labels.labels >= len(palette)
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise LabelError(
                f"label {int(labels.labels[y, x])} at (x={x}, y={y}) has no palette entry "
                f"(palette has {len(palette)} classes)"
            )
    return RasterImage(palette.colors[labels.labels])


def _pack_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.int32)
    return (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]


def color_to_labels(image: RasterImage, palette: Palette, tolerance: int = 0) -> LabelMap:
    """Decode a colour-coded segmentation.

    Each pixel takes the class whose colour is nearest in L-infinity distance,
    provided that distance is at most ``tolerance``. Ties go to the lower id.
    """
    if image.channels != 3:
        raise ValueError("color_to_labels needs an RGB raster")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")

    packed = _pack_rgb(image.data)
    keys = _pack_rgb(palette.colors)
    order = np.argsort(keys)
    sorted_keys = keys[order]
    pos = np.clip(np.searchsorted(sorted_keys, packed), 0, len(keys) - 1)
    exact = sorted_keys[pos] == packed
    labels = np.where(exact, order[pos], -1).astype(np.int32)

    if tolerance > 0 and not exact.all():
        ys, xs = np.nonzero(~exact)
        px = image.data[ys, xs].astype(np.int16)
        dist = np.abs(px[:, None, :] - palette.colors[None, :, :].astype(np.int16)).max(axis=2)
        best = dist.argmin(axis=1)
        ok = dist[np.arange(len(best)), best] <= tolerance
        labels[ys[ok], xs[ok]] = best[ok]

    missing = labels < 0
    if missing.any():
        y, x = np.argwhere(missing)[0]
        color = tuple(int(c) for c in image.data[y, x])
        raise LabelError(
            f"pixel (x={x}, y={y}) color {color} has no palette color within tolerance {tolerance}"
        )
    return LabelMap(labels, len(palette))


def labels_from_gray(image: RasterImage, num_classes: int) -> LabelMap:
    """Interpret gray values of a single-channel raster as raw class indices."""
    if not image.is_gray:
        raise ValueError("index-encoded label maps must be single-channel PNG")
    return LabelMap(image.gray().astype(np.int32), num_classes)


def labels_to_gray(labels: LabelMap) -> RasterImage:
    if labels.num_classes > 256:
        raise LabelError("index encoding holds at most 256 classes")
    return RasterImage(labels.labels.astype(np.uint8))


def load_labels(path: PathLike, palette: Palette, encoding: str = "color", tolerance: int = 0) -> LabelMap:
    """Load a label map stored either colour-coded or as raw gray indices."""
    raster = load_png(path)
    if encoding == "color":
        if raster.is_gray:
            raise ValueError(f"{path}: color-encoded segmentation must be an RGB PNG")
        try:
            return color_to_labels(raster, palette, tolerance)
        except LabelError as exc:
            raise LabelError(f"{path}: {exc}") from exc
    if encoding == "index":
        try:
            return labels_from_gray(raster, len(palette))
        except (LabelError, ValueError) as exc:
            raise type(exc)(f"{path}: {exc}") from exc
    raise ValueError(f"unknown segmentation encoding {encoding!r}")


def save_labels(labels: LabelMap, path: PathLike, palette: Palette, encoding: str = "color") -> None:
    if encoding == "color":
        save_png(labels_to_color(labels, palette), path)
    elif encoding == "index":
        save_png(labels_to_gray(labels), path)
    else:
        raise ValueError(f"unknown segmentation encoding {encoding!r}")
