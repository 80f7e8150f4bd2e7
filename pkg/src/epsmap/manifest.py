"""Dataset manifests and per-entry seed derivation."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

SEG_ENCODINGS = ("color", "index")
_SAFE_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class ManifestError(ValueError):
    """Structural problem with a manifest; raised before any work starts."""


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image: Optional[Path] = None
    segmentation: Optional[Path] = None
    seg_encoding: str = "color"
    edges: Optional[Path] = None
    candidate: Optional[Path] = None
    tags: tuple[str, ...] = ()

    def path(self, role: str) -> Optional[Path]:
        return getattr(self, role)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    palette: Optional[Path] = None
    base_seed: int = 0
    source: Optional[Path] = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir: os.PathLike | str = ".") -> "DatasetManifest":
        base = Path(base_dir)

        def resolve(p):
            if p is None:
                return None
            if not isinstance(p, str):
                raise ManifestError(f"path must be a string, got {p!r}")
            q = Path(p)
            return q if q.is_absolute() else base / q

        if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
            raise ManifestError("manifest must be an object with an 'entries' list")
        entries = []
        seen = set()
        for i, raw in enumerate(data["entries"]):
            if not isinstance(raw, dict) or "id" not in raw:
                raise ManifestError(f"entry {i}: missing 'id'")
            eid = str(raw["id"])
            if not _SAFE_ID.match(eid):
                raise ManifestError(f"entry {i}: id {eid!r} is not a safe file-name stem")
            if eid in seen:
                raise ManifestError(f"duplicate entry id {eid!r}")
            seen.add(eid)
            enc = raw.get("seg_encoding", "color")
            if enc not in SEG_ENCODINGS:
                raise ManifestError(f"entry {eid!r}: seg_encoding must be one of {SEG_ENCODINGS}, got {enc!r}")
            tags = raw.get("tags", [])
            if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
                raise ManifestError(f"entry {eid!r}: tags must be a list of strings")
            entries.append(
                ManifestEntry(
                    id=eid,
                    image=resolve(raw.get("image")),
                    segmentation=resolve(raw.get("segmentation")),
                    seg_encoding=enc,
                    edges=resolve(raw.get("edges")),
                    candidate=resolve(raw.get("candidate")),
                    tags=tuple(tags),
                )
            )
        seed = data.get("base_seed", 0)
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ManifestError(f"base_seed must be an unsigned 64-bit integer, got {seed!r}")
        return cls(tuple(entries), resolve(data.get("palette")), seed)

    @classmethod
    def load(cls, path: os.PathLike | str) -> "DatasetManifest":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ManifestError(f"manifest not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
        m = cls.from_dict(data, path.parent)
        return DatasetManifest(m.entries, m.palette, m.base_seed, path)

    def to_dict(self) -> dict:
        def s(p):
            return None if p is None else str(p)

        return {
            "palette": s(self.palette),
            "base_seed": self.base_seed,
            "entries": [
                {k: v for k, v in {
                    "id": e.id,
                    "image": s(e.image),
                    "segmentation": s(e.segmentation),
                    "seg_encoding": e.seg_encoding,
                    "edges": s(e.edges),
                    "candidate": s(e.candidate),
                    "tags": list(e.tags),
                }.items() if v is not None}
                for e in self.entries
            ],
        }

    def validate(self, required: Iterable[str]) -> None:
        """Check every entry has an existing file for each required role."""
        required = tuple(required)
        if not self.entries:
            raise ManifestError("manifest has no entries")
        problems = []
        for e in self.entries:
            for role in required:
                p = e.path(role)
                if p is None:
                    problems.append(f"entry {e.id!r}: missing '{role}'")
                elif not p.is_file():
                    problems.append(f"entry {e.id!r}: {role} file not found: {p}")
        if self.palette is not None and not self.palette.is_file():
            problems.append(f"palette file not found: {self.palette}")
        if problems:
            raise ManifestError("; ".join(problems))

    def with_seed(self, seed: int) -> "DatasetManifest":
        return DatasetManifest(self.entries, self.palette, seed, self.source)


def derive_seed(base_seed: int, entry_id: str, level: int = 0, variant: int = 0) -> int:
    """Stable 64-bit seed for one (entry, level, variant) work item."""
    key = f"{base_seed}\x00{entry_id}\x00{level}\x00{variant}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
