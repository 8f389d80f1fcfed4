"""Random affine augmentation: scale, rotation, translation and axis reflections.

A transform is a pure function of ``(policy.seed, draw_index)``, so a
training run can be replayed exactly. Coordinates are pixel positions
``(x=column, y=row)`` measured from the image center; the forward map is

    p' = Reflect(Rotate(Scale(p)) + t)

and ``apply`` pulls every output pixel from the inverse-mapped source
position with bilinear sampling, treating everything outside the image as 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from busnet.dataset import LabeledImage


@dataclass(frozen=True)
class AugmentPolicy:
    reflect_x_prob: float = 0.5
    reflect_y_prob: float = 0.5
    rotation_range_deg: tuple[float, float] = (0.0, 360.0)
    translate_range_px: tuple[float, float] = (-30.0, 30.0)
    scale_range: tuple[float, float] = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        for name in ("rotation_range_deg", "translate_range_px", "scale_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for name in ("reflect_x_prob", "reflect_y_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        for name in ("rotation_range_deg", "translate_range_px", "scale_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} lower bound {lo} exceeds upper bound {hi}")
        if self.scale_range[0] <= 0:
            raise ValueError(f"scale bounds must be positive, got {self.scale_range}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        return cls(**d)


def default_policy(seed: int = 0) -> AugmentPolicy:
    return AugmentPolicy(seed=seed)


def no_augmentation(seed: int = 0) -> AugmentPolicy:
    return AugmentPolicy(0.0, 0.0, (0.0, 0.0), (0.0, 0.0), (1.0, 1.0), seed)


@dataclass(frozen=True)
class AffineTransform:
    """Forward map on centered pixel coordinates: ``p' = matrix @ p + offset``."""

    matrix: np.ndarray
    offset: np.ndarray
    params: dict

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, np.eye(2)) and not self.offset.any())


def compose(scale_x=1.0, scale_y=1.0, angle_deg=0.0, tx=0.0, ty=0.0, reflect_x=False, reflect_y=False) -> AffineTransform:
    s = np.diag([scale_x, scale_y])
    if angle_deg % 360.0 == 0.0:
        r = np.eye(2)
    else:
        a = np.deg2rad(angle_deg)
        r = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    f = np.diag([-1.0 if reflect_x else 1.0, -1.0 if reflect_y else 1.0])
    params = dict(scale_x=scale_x, scale_y=scale_y, angle_deg=angle_deg, tx=tx, ty=ty,
                  reflect_x=bool(reflect_x), reflect_y=bool(reflect_y))
    return AffineTransform(f @ r @ s, f @ np.array([tx, ty], dtype=np.float64), params)


def sample_transform(p: AugmentPolicy, draw_index: int) -> AffineTransform:
    """Draw one transform; reflections are independent per axis."""
    rng = np.random.default_rng([p.seed & 0xFFFFFFFFFFFFFFFF, int(draw_index)])
    u = rng.random(8)

    def lerp(lo_hi, t):
        lo, hi = lo_hi
        return lo + (hi - lo) * t

    return compose(
        scale_x=lerp(p.scale_range, u[0]),
        scale_y=lerp(p.scale_range, u[1]),
        angle_deg=lerp(p.rotation_range_deg, u[2]),
        tx=lerp(p.translate_range_px, u[3]),
        ty=lerp(p.translate_range_px, u[4]),
        reflect_x=u[5] < p.reflect_x_prob,
        reflect_y=u[6] < p.reflect_y_prob,
    )


def _source_map(t: AffineTransform, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Output (row, col) -> input (row, col) as ``inv @ q + offset``."""
    # swap between (x, y) and (row, col) order
    inv = np.linalg.inv(t.matrix)[::-1, ::-1]
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - inv @ (center + t.offset[::-1])
    # snap near-integers so reflections stay exact index permutations
    inv = np.where(np.abs(inv - np.rint(inv)) < 1e-12, np.rint(inv), inv)
    offset = np.where(np.abs(offset - np.rint(offset)) < 1e-9, np.rint(offset), offset)
    return inv, offset


def warp_batch(pixels: np.ndarray, transforms) -> np.ndarray:
    """Bilinear resampling of an (N, H, W, C) stack, one transform per image.

    Output pixels whose source position falls outside the image are 0.
    Integer source coordinates (flips, whole-pixel shifts) copy values exactly.
    """
    n, h, w, c = pixels.shape
    out = pixels.copy()
    for i, t in enumerate(transforms):
        if t.is_identity:
            continue
        inv, offset = _source_map(t, h, w)
        for ch in range(c):
            ndimage.affine_transform(pixels[i, :, :, ch], inv, offset=offset, order=1, mode="constant",
                                     cval=0.0, output=out[i, :, :, ch], prefilter=False)
    return np.clip(out, 0.0, 1.0, out=out)


def warp(pixels: np.ndarray, t: AffineTransform) -> np.ndarray:
    """Resample an (H, W, C) array under ``t``; exposed borders are 0."""
    if t.is_identity:
        return pixels.copy()
    return warp_batch(pixels[None], [t])[0]


def apply(img: LabeledImage, t: AffineTransform) -> LabeledImage:
    return LabeledImage(warp(img.pixels, t), img.label, img.sample_id, img.origin)


class AugmentStream:
    """Indexed access to a policy's transforms that counts how many were drawn."""

    def __init__(self, policy: AugmentPolicy):
        self.policy = policy
        self.position = 0

    def draw(self, draw_index: int) -> AffineTransform:
        self.position += 1
        return sample_transform(self.policy, draw_index)
