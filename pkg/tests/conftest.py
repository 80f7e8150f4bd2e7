import numpy as np
import pytest
from hypothesis import strategies as st

from epsmap.imagecore import LabelMap, Palette, PaletteEntry, RasterImage


@pytest.fixture(scope="session")
def palette():
    return Palette.default()


@pytest.fixture(scope="session")
def two_color_palette():
    return Palette([PaletteEntry(0, "a", (6, 2, 3)), PaletteEntry(1, "b", (200, 200, 200))])


@st.composite
def rasters(draw, max_side=12, channels=None):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    c = draw(st.sampled_from([1, 3])) if channels is None else channels
    seed = draw(st.integers(0, 2**32 - 1))
    data = np.random.default_rng(seed).integers(0, 256, (h, w, c), dtype=np.uint8)
    return RasterImage(data)


@st.composite
def label_maps(draw, max_side=8, max_classes=5):
    k = draw(st.integers(1, max_classes))
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    seed = draw(st.integers(0, 2**32 - 1))
    return LabelMap(np.random.default_rng(seed).integers(0, k, (h, w)), k)


def structured_labels(width, height, seed, num_classes=19):
    """Piecewise-constant scene-like label map: horizon bands plus random boxes."""
    rng = np.random.default_rng(seed)
    labels = np.zeros((height, width), dtype=np.int32)
    horizon = int(height * rng.uniform(0.35, 0.55))
    labels[:horizon] = 10  # sky
    labels[horizon:] = 0  # road
    side = int(width * rng.uniform(0.1, 0.3))
    labels[horizon:, :side] = 1
    for _ in range(6):
        w = int(rng.integers(width // 12, width // 4))
        h = int(rng.integers(height // 10, height // 3))
        x = int(rng.integers(0, width - w))
        y = int(rng.integers(max(0, horizon - h), height - h))
        labels[y:y + h, x:x + w] = int(rng.choice([2, 8, 13, 11, 5]))
    return LabelMap(labels, num_classes)


SOURCES = ("carla", "cityscapes", "fcav", "kitti")


def write_dataset(root, per_source=2, size=(64, 36), sources=SOURCES, encoding="color"):
    """Synthetic image / segmentation / edges / candidate files plus manifest.json."""
    from epsmap.ablation import warp_labels
    from epsmap.eps import detect_edges_fallback
    from epsmap.imagecore import labels_to_color, save_labels, save_png

    palette = Palette.default()
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    w, h = size
    for si, source in enumerate(sources):
        for i in range(per_source):
            eid = f"{source}_{i:02d}"
            seed = si * 1000 + i
            labels = structured_labels(w, h, seed)
            rng = np.random.default_rng(seed)
            color = labels_to_color(labels, palette).data.astype(int)
            image = RasterImage(np.clip(color + rng.integers(-20, 21, color.shape), 0, 255).astype(np.uint8))
            save_png(image, root / f"{eid}.png")
            save_labels(labels, root / f"{eid}_seg.png", palette, encoding)
            save_png(detect_edges_fallback(image), root / f"{eid}_edges.png")
            save_labels(warp_labels(labels, 3, seed), root / f"{eid}_cand.png", palette, encoding)
            entries.append({
                "id": eid,
                "image": f"{eid}.png",
                "segmentation": f"{eid}_seg.png",
                "seg_encoding": encoding,
                "edges": f"{eid}_edges.png",
                "candidate": f"{eid}_cand.png",
                "tags": [source],
            })
    manifest = {"base_seed": 42, "entries": entries}
    import json

    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root / "manifest.json"


ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int(k.rstrip("ab")), k)):
        ok, text = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {text}")
