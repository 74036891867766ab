"""Dataset inventory: directory scanning, stratified splitting, manifest files."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
SPLITS = ("train", "val", "test")


class DatasetLayoutError(ValueError):
    """The dataset root does not follow ``<root>/<ClassName>/*.{jpg,jpeg,png}``."""


@dataclass
class Entry:
    path: str
    label: str
    split: str | None = None


@dataclass
class DatasetManifest:
    class_names: list[str]
    entries: list[Entry]
    seed: int | None = None
    channel_means: list[float] | None = None
    extra: dict = field(default_factory=dict)

    def split(self, name: str) -> list[Entry]:
        return [e for e in self.entries if e.split == name]

    def label_index(self, entry: Entry) -> int:
        return self.class_names.index(entry.label)

    def counts(self) -> dict[str, dict[str, int]]:
        """Per-class image counts for each split plus ``total``."""
        table = {c: {s: 0 for s in (*SPLITS, "total")} for c in self.class_names}
        for e in self.entries:
            row = table[e.label]
            if e.split is not None:
                row[e.split] += 1
            row["total"] += 1
        return table

    def to_json(self) -> str:
        doc = {
            "class_names": list(self.class_names),
            "seed": self.seed,
            "channel_means": self.channel_means,
            "entries": [{"path": e.path, "label": e.label, "split": e.split} for e in self.entries],
        }
        doc.update(self.extra)
        return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        entries = [Entry(e["path"], e["label"], e.get("split")) for e in doc["entries"]]
        extra = {k: v for k, v in doc.items()
                 if k not in ("class_names", "seed", "channel_means", "entries")}
        manifest = cls(list(doc["class_names"]), entries, doc.get("seed"), doc.get("channel_means"), extra)
        for e in entries:
            if e.label not in manifest.class_names:
                raise ValueError(f"manifest entry {e.path!r} has undeclared label {e.label!r}")
            if e.split is not None and e.split not in SPLITS:
                raise ValueError(f"manifest entry {e.path!r} has unknown split {e.split!r}")
        return manifest

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _decodable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except Exception as exc:  # PIL raises a zoo of exception types on bad files
        logger.warning("skipping undecodable image %s (%s)", path, exc)
        return False


def scan_dataset(root) -> DatasetManifest:
    """Inventory ``<root>/<ClassName>/*.{jpg,jpeg,png}`` in lexicographic order."""
    root = Path(root)
    layout = f"expected layout: {root}/<ClassName>/*.jpg|*.jpeg|*.png"
    if not root.is_dir():
        raise DatasetLayoutError(f"dataset root {root} is not a directory; {layout}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetLayoutError(f"no class directories under {root}; {layout}")
    entries = []
    for d in class_dirs:
        files = sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DatasetLayoutError(f"class directory {d} contains no images; {layout}")
        entries.extend(Entry(p.relative_to(root).as_posix(), d.name) for p in files if _decodable(p))
    return DatasetManifest([d.name for d in class_dirs], entries)


def split_sizes(n: int, ratios) -> tuple[int, int, int]:
    """(train, val, test) for a class of ``n``: val and test are rounded, train takes the rest."""
    n_val = int(round(ratios[1] * n))
    n_test = int(round(ratios[2] * n))
    return n - n_val - n_test, n_val, n_test


def stratified_split(manifest: DatasetManifest, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetManifest:
    """Assign every entry to train/val/test, class by class, with a seeded shuffle.

    Returns a new manifest; entry order is preserved. Rounding uses Python's
    ``round`` (half to even).
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    by_class: dict[str, list[int]] = {c: [] for c in manifest.class_names}
    for i, e in enumerate(manifest.entries):
        if e.label not in by_class:
            raise ValueError(f"entry {e.path!r} has undeclared label {e.label!r}")
        by_class[e.label].append(i)

    assignment: list[str | None] = [None] * len(manifest.entries)
    for ci, (name, idx) in enumerate(by_class.items()):
        sizes = split_sizes(len(idx), ratios)
        if len(idx) < 3 or min(sizes) < 1:
            raise ValueError(
                f"class {name!r} has {len(idx)} images, too few to populate train/val/test "
                f"with ratios {ratios}")
        order = np.random.default_rng([seed, ci]).permutation(len(idx))
        n_train, n_val, _ = sizes
        for rank, j in enumerate(order):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            assignment[idx[j]] = split

    entries = [Entry(e.path, e.label, s) for e, s in zip(manifest.entries, assignment)]
    return DatasetManifest(list(manifest.class_names), entries, seed, manifest.channel_means,
                           dict(manifest.extra))


def format_split_table(manifest: DatasetManifest) -> str:
    """Per-class train/val/test/total counts with a totals row."""
    counts = manifest.counts()
    width = max(12, *(len(c) for c in counts))
    cols = ("Train", "Val", "Test", "Total")
    lines = [f"{'Class':<{width}}" + "".join(f"{c:>8}" for c in cols)]
    totals = [0, 0, 0, 0]
    for name, row in counts.items():
        vals = [row["train"], row["val"], row["test"], row["total"]]
        totals = [a + b for a, b in zip(totals, vals)]
        lines.append(f"{name:<{width}}" + "".join(f"{v:>8,}" for v in vals))
    lines.append(f"{'#Images':<{width}}" + "".join(f"{v:>8,}" for v in totals))
    return "\n".join(lines)
