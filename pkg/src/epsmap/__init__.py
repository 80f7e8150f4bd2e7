"""Edge-plus-segmentation maps, ablation perturbations, augmentation and IoU evaluation."""

__version__ = "0.1.0"

from .imagecore import (
    LabelMap,
    Palette,
    PaletteEntry,
    RasterImage,
    color_to_labels,
    labels_to_color,
    load_labels,
    load_png,
    save_labels,
    save_png,
)
from .eps import EpsMap, compose_eps, detect_edges_fallback
from .ablation import PerturbationKind, PerturbationSpec, carve_edges, kuwahara, warp_labels
from .augment import AugmentSpec, augment, augment_labels, resolution_pyramid
from .metrics import ConfusionMatrix, IouReport, confusion, dataset_distribution, iou_from_confusion

__all__ = [
    "AugmentSpec",
    "ConfusionMatrix",
    "EpsMap",
    "IouReport",
    "LabelMap",
    "Palette",
    "PaletteEntry",
    "PerturbationKind",
    "PerturbationSpec",
    "RasterImage",
    "augment",
    "augment_labels",
    "carve_edges",
    "color_to_labels",
    "compose_eps",
    "confusion",
    "dataset_distribution",
    "detect_edges_fallback",
    "iou_from_confusion",
    "kuwahara",
    "labels_to_color",
    "load_labels",
    "load_png",
    "resolution_pyramid",
    "save_labels",
    "save_png",
    "warp_labels",
]
