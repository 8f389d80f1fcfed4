"""Seeded synthetic three-class image set used for desk-scale end-to-end runs.

All three classes share a speckled background. ``benign`` adds one smooth,
moderately bright elliptical lesion; ``malignant`` adds one brighter patch
with a ragged, spiky outline and a grainy texture inside; ``normal`` has no
lesion. Every cue is rotation invariant, so random 360 degree rotation
during training does not destroy the class signal.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from busnet.dataset import LabeledImage
from busnet.labels import ClassLabel


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    speckle = rng.rayleigh(1.0, (size, size))
    speckle = gaussian_filter(speckle, 0.8)
    return np.minimum(0.16 * speckle / speckle.mean(), 0.35)


def _center(rng, size):
    return rng.uniform(size * 0.4, size * 0.6, 2)


def _benign(rng, size, img):
    """One smooth, moderately bright ellipse."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = _center(rng, size)
    a, b = rng.uniform(size * 0.14, size * 0.22, 2)
    th = rng.uniform(0, np.pi)
    u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
    v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
    r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    mask = 1.0 / (1.0 + np.exp((r - 1.0) * 10.0))
    return img * (1 - mask) + mask * rng.uniform(0.42, 0.5)


def _malignant(rng, size, img):
    """One bright, grainy patch with a spiky outline."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = _center(rng, size)
    base = rng.uniform(size * 0.15, size * 0.2)
    ang = np.arctan2(yy - cy, xx - cx)
    spikes = int(rng.integers(5, 9))
    radius = base * (1.0 + 0.5 * np.abs(np.sin(spikes * ang / 2 + rng.uniform(0, np.pi))) ** 3)
    mask = (np.hypot(yy - cy, xx - cx) < radius).astype(np.float64)
    grain = rng.uniform(-0.1, 0.1, img.shape)
    return img * (1 - mask) + mask * (rng.uniform(0.82, 0.88) + grain)


def generate_image(label: ClassLabel, rng: np.random.Generator, size: int = 64) -> np.ndarray:
    img = _background(rng, size)
    if label == ClassLabel.BENIGN:
        img = _benign(rng, size, img)
    elif label == ClassLabel.MALIGNANT:
        img = _malignant(rng, size, img)
    img = img + rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


def generate(n: int = 600, size: int = 64, seed: int = 0) -> list[LabeledImage]:
    """``n`` images split as evenly as possible over the three classes, in a fixed order."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = ClassLabel(i % 3)
        px = generate_image(label, rng, size)
        out.append(LabeledImage(px[:, :, None], label, f"synthetic:{label.title}/{i:05d}", "synthetic"))
    return out


def write_dataset(root, n: int = 600, size: int = 64, seed: int = 0) -> Path:
    """Write the images as 8-bit PNGs in the ``<root>/<class>/<file>`` layout."""
    root = Path(root)
    for c in ClassLabel:
        (root / c.title).mkdir(parents=True, exist_ok=True)
    for im in generate(n, size, seed):
        name = im.sample_id.split("/")[-1]
        arr = np.round(im.pixels[:, :, 0] * 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(root / im.label.title / f"{name}.png")
    return root
