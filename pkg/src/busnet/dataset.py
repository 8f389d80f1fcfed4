"""Dataset ingestion, merging, k-fold planning and image decoding.

Directory layout is ``<root>/<class>/<file>`` with class one of ``normal``,
``benign``, ``malignant``. Only PNG, BMP and PGM files are read; other files
(and segmentation masks, see ``MASK_PATTERN``) are ignored.
"""

from __future__ import annotations

import csv
import fnmatch
import io
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from busnet.labels import ClassLabel, class_names

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".bmp", ".pgm")
# segmentation masks shipped next to the images in some public ultrasound sets
MASK_PATTERN = "*_mask*"


class DatasetError(Exception):
    """Raised for unusable dataset inputs (layout, labels, decoding, fold planning)."""


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # (H, W, C), values in [0, 1]
    label: ClassLabel
    sample_id: str
    origin: str = ""

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[0] < 1 or p.shape[1] < 1 or p.shape[2] not in (1, 3):
            raise ValueError(f"{self.sample_id}: pixels must be (H, W, 1|3), got {p.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    path: str
    label: ClassLabel
    origin: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    skipped: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dup = sorted(k for k, v in Counter(ids).items() if v > 1)
            raise DatasetError(f"duplicate sample_id(s): {dup[:5]}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def class_counts(self) -> dict[ClassLabel, int]:
        counts = Counter(e.label for e in self.entries)
        return {c: counts.get(c, 0) for c in ClassLabel}

    @property
    def origins(self) -> list[str]:
        return list(dict.fromkeys(e.origin for e in self.entries))

    def counts_by_origin(self) -> dict[str, dict[ClassLabel, int]]:
        out = {}
        for origin in self.origins:
            counts = Counter(e.label for e in self.entries if e.origin == origin)
            out[origin] = {c: counts.get(c, 0) for c in ClassLabel}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "path", "label", "origin"])
        for e in self.entries:
            w.writerow([e.sample_id, e.path, e.label.title, e.origin])
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "DatasetManifest":
        rows = csv.DictReader(io.StringIO(text))
        return cls(tuple(ManifestEntry(r["sample_id"], r["path"], ClassLabel.parse(r["label"]), r["origin"]) for r in rows))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_csv(Path(path).read_text())


def _readable(path: Path) -> Optional[str]:
    try:
        with Image.open(path) as im:
            im.verify()
    except Exception as e:  # PIL raises a zoo of exception types on corrupt files
        return f"{type(e).__name__}: {e}"
    return None


def ingest(root_dir, origin_tag: str, exclude: Sequence[str] = (MASK_PATTERN,), workers: int = 4) -> DatasetManifest:
    """Scan ``root_dir/<class>/`` for images.

    Unreadable files are logged and listed in ``manifest.skipped``. Entries
    are ordered lexicographically by path.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    known = set(class_names())
    candidates: list[tuple[Path, ClassLabel]] = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")):
        if sub.name.lower() not in known:
            raise DatasetError(f"unknown class directory {sub.name!r} in {root}; expected {sorted(known)}")
        label = ClassLabel.parse(sub.name)
        for f in sub.rglob("*"):
            if not f.is_file() or f.suffix.lower() not in IMAGE_SUFFIXES or f.name.startswith("."):
                continue
            if any(fnmatch.fnmatch(f.stem.lower(), pat) for pat in exclude):
                continue
            candidates.append((f, label))
    candidates.sort(key=lambda c: str(c[0]))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        problems = list(pool.map(lambda c: _readable(c[0]), candidates))

    entries, skipped = [], []
    for (path, label), problem in zip(candidates, problems):
        if problem:
            log.warning("skipping unreadable image %s (%s)", path, problem)
            skipped.append(str(path))
            continue
        rel = path.relative_to(root).as_posix()
        entries.append(ManifestEntry(f"{origin_tag}:{rel}", str(path), label, origin_tag))
    if not entries:
        raise DatasetError(f"no samples found under {root}")
    return DatasetManifest(tuple(entries), tuple(skipped))


def merge(a: DatasetManifest, b: DatasetManifest) -> DatasetManifest:
    """Concatenate two manifests; sample_ids already carry their origin tag."""
    ids_a = {e.sample_id for e in a.entries}
    clash = [e.sample_id for e in b.entries if e.sample_id in ids_a]
    if clash:
        raise DatasetError(f"duplicate sample_id(s) after merge: {clash[:5]}")
    return DatasetManifest(a.entries + b.entries, a.skipped + b.skipped)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int
    stratified: bool = True

    def test_ids(self, fold: int) -> list[str]:
        return [sid for sid, f in self.assignment.items() if f == fold]

    def fold_sizes(self) -> list[int]:
        counts = Counter(self.assignment.values())
        return [counts.get(f, 0) for f in range(self.k)]

    def to_json(self) -> str:
        return json.dumps(
            {"k": self.k, "seed": self.seed, "stratified": self.stratified, "assignment": self.assignment},
            indent=1,
        ) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        d = json.loads(text)
        return cls(int(d["k"]), {str(k): int(v) for k, v in d["assignment"].items()}, int(d["seed"]), bool(d["stratified"]))

    @classmethod
    def load(cls, path) -> "FoldPlan":
        return cls.from_json(Path(path).read_text())


def make_folds(m: DatasetManifest, k: int = 5, seed: int = 0, stratified: bool = True) -> FoldPlan:
    """Shuffle, then deal samples round-robin into k folds.

    With stratification each class is shuffled separately and the classes are
    dealt one after another, continuing the round-robin position across
    classes. That keeps per-class fold counts within 1 of each other and the
    fold totals within 1 as well. Classes with no samples are ignored.
    """
    if k < 2:
        raise DatasetError(f"k must be >= 2, got {k}")
    if len(m) < k:
        raise DatasetError(f"cannot split {len(m)} samples into {k} folds")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    ids = [e.sample_id for e in m.entries]
    if stratified:
        order: list[int] = []
        for c in ClassLabel:
            members = [i for i, e in enumerate(m.entries) if e.label == c]
            if not members:
                continue
            if len(members) < k:
                raise DatasetError(f"class {c.title!r} has {len(members)} samples, fewer than k={k}")
            order.extend(members[j] for j in rng.permutation(len(members)))
    else:
        order = rng.permutation(len(ids)).tolist()
    assignment = {ids[i]: pos % k for pos, i in enumerate(order)}
    # keep manifest order in the mapping so the JSON is stable and readable
    assignment = {sid: assignment[sid] for sid in ids}
    return FoldPlan(k, assignment, seed, stratified)


def decode(path, sample_id: str = "", label: ClassLabel = ClassLabel.NORMAL, origin: str = "") -> LabeledImage:
    """Read an image file into a LabeledImage with values in [0, 1]."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode.startswith("I"):
                # 16-bit PGM: PIL keeps the raw counts
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            elif mode == "1":
                arr = np.asarray(im, dtype=np.float64)
            elif mode == "L" or mode == "LA" or (mode == "P" and _is_gray_palette(im)):
                arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as e:
        raise DatasetError(f"failed to decode {path}: {e}") from e
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return LabeledImage(np.clip(arr, 0.0, 1.0), label, sample_id or str(path), origin)


def _is_gray_palette(im: Image.Image) -> bool:
    pal = im.getpalette() or []
    rgb = np.asarray(pal[: 3 * 256]).reshape(-1, 3)
    return bool((rgb[:, 0] == rgb[:, 1]).all() and (rgb[:, 1] == rgb[:, 2]).all())


def load_split(m: DatasetManifest, plan: FoldPlan, fold: int, size: Optional[tuple[int, int]] = None,
               channels: Optional[int] = None) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Decode the train and test images of one fold, optionally resizing them."""
    if not 0 <= fold < plan.k:
        raise DatasetError(f"fold {fold} out of range for k={plan.k}")
    train, test = [], []
    for e in m.entries:
        if e.sample_id not in plan.assignment:
            raise DatasetError(f"sample {e.sample_id} missing from the fold plan")
        img = decode(e.path, e.sample_id, e.label, e.origin)
        if size is not None or channels is not None:
            h, w = size if size is not None else img.shape[:2]
            img = resize(img, h, w, channels if channels is not None else img.shape[2])
        (test if plan.assignment[e.sample_id] == fold else train).append(img)
    return train, test


def split_images(images: Sequence[LabeledImage], plan: FoldPlan, fold: int) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Same partition as load_split but for images already in memory."""
    if not 0 <= fold < plan.k:
        raise DatasetError(f"fold {fold} out of range for k={plan.k}")
    train = [im for im in images if plan.assignment[im.sample_id] != fold]
    test = [im for im in images if plan.assignment[im.sample_id] == fold]
    return train, test


def bilinear_resize(pixels: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    src_h, src_w = pixels.shape[:2]
    if (src_h, src_w) == (h, w):
        return pixels.copy()

    def axis(n_out, n_in):
        x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        x = np.clip(x, 0.0, n_in - 1)
        i0 = np.floor(x).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, x - i0

    y0, y1, fy = axis(h, src_h)
    x0, x1, fx = axis(w, src_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = pixels[y0][:, x0] * (1 - fx) + pixels[y0][:, x1] * fx
    bot = pixels[y1][:, x0] * (1 - fx) + pixels[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def resize(img: LabeledImage, h: int, w: int, channels: Optional[int] = None) -> LabeledImage:
    """Bilinear resize to h x w and convert the channel count.

    Gray to RGB replicates the channel; RGB to gray takes the plain mean of
    the three channels.
    """
    if h < 1 or w < 1:
        raise ValueError(f"target size must be positive, got {h}x{w}")
    channels = img.shape[2] if channels is None else channels
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    px = bilinear_resize(img.pixels, h, w)
    if px.shape[2] == 1 and channels == 3:
        px = np.repeat(px, 3, axis=2)
    elif px.shape[2] == 3 and channels == 1:
        px = px.mean(axis=2, keepdims=True)
    return LabeledImage(np.clip(px, 0.0, 1.0), img.label, img.sample_id, img.origin)


def summary_table(m: DatasetManifest) -> list[list[str]]:
    """Rows shaped like a per-source class distribution table, with a totals row."""
    header = ["Dataset", *(c.title.capitalize() for c in ClassLabel), "Total"]
    rows = [header]
    for origin, counts in m.counts_by_origin().items():
        rows.append([origin, *(str(counts[c]) if counts[c] else "-" for c in ClassLabel), str(sum(counts.values()))])
    total = m.class_counts
    rows.append(["Total", *(str(total[c]) for c in ClassLabel), str(len(m))])
    return rows


def load_all(m: DatasetManifest, size: Optional[tuple[int, int]] = None, channels: Optional[int] = None) -> list[LabeledImage]:
    out = []
    for e in m.entries:
        img = decode(e.path, e.sample_id, e.label, e.origin)
        if size is not None or channels is not None:
            h, w = size if size is not None else img.shape[:2]
            img = resize(img, h, w, channels if channels is not None else img.shape[2])
        out.append(img)
    return out
