"""Architecture families, parameter initialization and the forward/backward passes.

Three desk-scale families are supported:

``plain_stack``
    per stage: conv3x3 -> ReLU -> maxpool2
``residual``
    per stage: conv3x3 -> ReLU -> maxpool2, then ``t + conv3x3(ReLU(conv3x3(t)))``;
    a ReLU follows the last stage
``inception_lite``
    per stage: concat(conv1x1, conv3x3, conv5x5) -> ReLU -> maxpool2

All families end in global average pooling and a dense head with
``num_classes`` outputs. The first convolution(s) of stage 0 use
``stem_stride``. Parameter names beginning with ``head.`` belong to the
classifier head; everything else is a feature layer.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from busnet.labels import NUM_CLASSES, ClassLabel
from busnet.neuralnet import layers as L

FAMILIES = ("plain_stack", "residual", "inception_lite")
HEAD_PREFIX = "head."


@dataclass(frozen=True)
class ModelSpec:
    family: str = "plain_stack"
    input_hw: tuple[int, int] = (64, 64)
    input_channels: int = 1
    stage_widths: tuple[int, ...] = (8, 16)
    num_classes: int = NUM_CLASSES
    stem_stride: int = 1
    head: str = "dense-softmax"
    # fixed input standardization applied before the first layer
    input_mean: float = 0.0
    input_std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        object.__setattr__(self, "stage_widths", tuple(int(v) for v in self.stage_widths))
        self.validate()

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.num_classes != NUM_CLASSES:
            raise ValueError(f"num_classes must be {NUM_CLASSES}, got {self.num_classes}")
        if self.input_channels not in (1, 3):
            raise ValueError(f"input_channels must be 1 or 3, got {self.input_channels}")
        if len(self.input_hw) != 2 or min(self.input_hw) < 1:
            raise ValueError(f"bad input_hw {self.input_hw}")
        if not self.stage_widths:
            raise ValueError("stage_widths must not be empty")
        for i, w in enumerate(self.stage_widths):
            if w < 1:
                raise ValueError(f"stage {i} width must be positive, got {w}")
            if self.family == "inception_lite" and w < 3:
                raise ValueError(f"inception_lite stage {i} width must be >= 3 (three branches), got {w}")
        if self.stem_stride < 1:
            raise ValueError(f"stem_stride must be >= 1, got {self.stem_stride}")
        if not self.input_std > 0:
            raise ValueError(f"input_std must be positive, got {self.input_std}")
        if self.head != "dense-softmax":
            raise ValueError(f"unsupported head {self.head!r}")
        h, w = self.feature_hw()
        if h < 1 or w < 1:
            raise ValueError(f"input {self.input_hw} too small for {len(self.stage_widths)} pooling stages")

    def feature_hw(self) -> tuple[int, int]:
        h, w = self.input_hw
        for i in range(len(self.stage_widths)):
            s = self.stem_stride if i == 0 else 1
            h, w = (h - 1) // s + 1, (w - 1) // s + 1
            h, w = h // 2, w // 2
        return h, w

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "input_hw": list(self.input_hw),
            "input_channels": self.input_channels,
            "stage_widths": list(self.stage_widths),
            "num_classes": self.num_classes,
            "stem_stride": self.stem_stride,
            "head": self.head,
            "input_mean": self.input_mean,
            "input_std": self.input_std,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelSpec":
        return cls(**d)


@dataclass
class Parameters:
    """Named weight tensors. ``frozen`` lists names the optimizer must not update."""

    tensors: dict[str, np.ndarray]
    init_seed: int
    frozen: frozenset[str] = field(default_factory=frozenset)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> "Parameters":
        return Parameters({k: v.copy() for k, v in self.tensors.items()}, self.init_seed, self.frozen)

    def astype(self, dtype) -> "Parameters":
        return Parameters({k: v.astype(dtype) for k, v in self.tensors.items()}, self.init_seed, self.frozen)


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    predicted: ClassLabel

    @classmethod
    def from_probabilities(cls, probs) -> "Prediction":
        p = np.asarray(probs, dtype=np.float64)
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return cls(p, ClassLabel(int(np.argmax(p))))


@dataclass
class ForwardCache:
    spec: ModelSpec
    params_id: int
    logits_shape: tuple[int, ...]
    entries: list = field(default_factory=list)
    consumed: bool = False


# (kernel, name suffix) for the three inception branches
_BRANCHES = ((1, "b1"), (3, "b3"), (5, "b5"))


def _branch_widths(width: int) -> list[int]:
    base = width // 3
    widths = [base, base, base]
    widths[1] += width - 3 * base
    return widths


def layer_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Parameter name -> shape, in graph order."""
    shapes: dict[str, tuple[int, ...]] = {}
    cin = spec.input_channels
    for i, w in enumerate(spec.stage_widths):
        p = f"stage{i}."
        if spec.family == "inception_lite":
            for (k, tag), bw in zip(_BRANCHES, _branch_widths(w)):
                shapes[p + tag + ".w"] = (bw, cin, k, k)
                shapes[p + tag + ".b"] = (bw,)
        else:
            shapes[p + "conv.w"] = (w, cin, 3, 3)
            shapes[p + "conv.b"] = (w,)
            if spec.family == "residual":
                shapes[p + "res_a.w"] = (w, w, 3, 3)
                shapes[p + "res_a.b"] = (w,)
                shapes[p + "res_b.w"] = (w, w, 3, 3)
                shapes[p + "res_b.b"] = (w,)
        cin = w
    shapes[HEAD_PREFIX + "w"] = (cin, spec.num_classes)
    shapes[HEAD_PREFIX + "b"] = (spec.num_classes,)
    return shapes


def _init_tensor(name: str, shape: tuple[int, ...], seed: int, spec: ModelSpec) -> np.ndarray:
    if name.endswith(".b"):
        return np.zeros(shape)
    if spec.family == "residual" and ".res_b." in name:
        # zero-initialized residual branch: every block starts as the identity map
        return np.zeros(shape)
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])
    if name.startswith(HEAD_PREFIX):
        fan_in = shape[0]
        limit = np.sqrt(3.0 / fan_in)
    else:
        fan_in = int(np.prod(shape[1:]))
        limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def build(spec: ModelSpec, seed: int) -> Parameters:
    """Fan-in scaled uniform initialization.

    Convolutions draw from U(-sqrt(6/fan_in), sqrt(6/fan_in)), the head from
    U(-sqrt(3/fan_in), sqrt(3/fan_in)); biases and the second convolution of
    each residual branch start at zero. Each tensor has its own stream keyed
    by ``(seed, crc32(name))`` so re-initializing one layer never disturbs
    the others.
    """
    spec.validate()
    tensors = {name: _init_tensor(name, shape, seed, spec) for name, shape in layer_shapes(spec).items()}
    return Parameters(tensors, seed)


def init_head(params: Parameters, spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    return {
        name: _init_tensor(name, shape, seed, spec)
        for name, shape in layer_shapes(spec).items()
        if name.startswith(HEAD_PREFIX)
    }


def check_compatible(params: Parameters, spec: ModelSpec) -> None:
    expected = layer_shapes(spec)
    if list(expected) != list(params.tensors):
        missing = sorted(set(expected) - set(params.tensors))
        extra = sorted(set(params.tensors) - set(expected))
        raise ValueError(f"parameters do not match {spec.family} spec (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if params.tensors[name].shape != shape:
            raise ValueError(f"layer {name}: expected shape {shape}, got {params.tensors[name].shape}")


def forward(params: Parameters, spec: ModelSpec, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Logits of shape (n, num_classes) for a batch of shape (n, C, H, W)."""
    batch = np.asarray(batch)
    expected = (spec.input_channels, *spec.input_hw)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ValueError(f"layer input: expected batch shape (n, {', '.join(map(str, expected))}), got {batch.shape}")
    t = params.tensors
    cache = ForwardCache(spec, id(params), ())
    ent = cache.entries
    x = batch
    if spec.input_mean != 0.0 or spec.input_std != 1.0:
        x = (batch - spec.input_mean) * (1.0 / spec.input_std)
    for i in range(len(spec.stage_widths)):
        p = f"stage{i}."
        stride = spec.stem_stride if i == 0 else 1
        if spec.family == "inception_lite":
            outs, caches = [], []
            for k, tag in _BRANCHES:
                name = p + tag
                try:
                    o, c = L.conv_forward(x, t[name + ".w"], t[name + ".b"], stride, L.pad_amount(k, "same"))
                except ValueError as e:
                    raise ValueError(f"layer {name}: {e}") from None
                outs.append(o)
                caches.append(c)
            x, ccat = L.concat_forward(outs)
            ent.append(("inception", p, caches, ccat))
        else:
            try:
                x, c = L.conv_forward(x, t[p + "conv.w"], t[p + "conv.b"], stride, 1)
            except ValueError as e:
                raise ValueError(f"layer {p}conv: {e}") from None
            ent.append(("conv", p + "conv", c))
        x, c = L.relu_forward(x)
        ent.append(("relu", c))
        try:
            x, c = L.maxpool_forward(x, 2, 2)
        except ValueError as e:
            raise ValueError(f"layer {p}pool: {e}") from None
        ent.append(("pool", c))
        if spec.family == "residual":
            h, ca = L.conv_forward(x, t[p + "res_a.w"], t[p + "res_a.b"], 1, 1)
            h, cr = L.relu_forward(h)
            h, cb = L.conv_forward(h, t[p + "res_b.w"], t[p + "res_b.b"], 1, 1)
            x, _ = L.add_forward(x, h)
            ent.append(("resblock", p, ca, cr, cb))
    if spec.family == "residual":
        x, c = L.relu_forward(x)
        ent.append(("relu", c))
    x, c = L.global_avgpool_forward(x)
    ent.append(("gap", c))
    logits, c = L.dense_forward(x, t[HEAD_PREFIX + "w"], t[HEAD_PREFIX + "b"])
    ent.append(("dense", HEAD_PREFIX, c))
    cache.logits_shape = logits.shape
    return logits, cache


def backward(cache: ForwardCache, loss_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every parameter, given d(loss)/d(logits)."""
    if cache.consumed:
        raise ValueError("stale forward cache: backward was already run on it")
    loss_grad = np.asarray(loss_grad)
    if loss_grad.shape != cache.logits_shape:
        raise ValueError(f"loss gradient shape {loss_grad.shape} does not match logits {cache.logits_shape}")
    cache.consumed = True
    grads: dict[str, np.ndarray] = {}
    d = loss_grad
    for entry in reversed(cache.entries):
        kind = entry[0]
        if kind == "dense":
            d, grads[entry[1] + "w"], grads[entry[1] + "b"] = L.dense_backward(d, entry[2])
        elif kind == "gap":
            d = L.global_avgpool_backward(d, entry[1])
        elif kind == "relu":
            d = L.relu_backward(d, entry[1])
        elif kind == "pool":
            d = L.maxpool_backward(d, entry[1])
        elif kind == "conv":
            d, grads[entry[1] + ".w"], grads[entry[1] + ".b"] = L.conv_backward(d, entry[2])
        elif kind == "resblock":
            _, p, ca, cr, cb = entry
            d_skip, d_branch = L.add_backward(d, None)
            dh, grads[p + "res_b.w"], grads[p + "res_b.b"] = L.conv_backward(d_branch, cb)
            dh = L.relu_backward(dh, cr)
            dh, grads[p + "res_a.w"], grads[p + "res_a.b"] = L.conv_backward(dh, ca)
            d = d_skip + dh
        elif kind == "inception":
            _, p, caches, ccat = entry
            d_in = None
            for (k, tag), part, c in zip(_BRANCHES, L.concat_backward(d, ccat), caches):
                dx, grads[p + tag + ".w"], grads[p + tag + ".b"] = L.conv_backward(part, c)
                d_in = dx if d_in is None else d_in + dx
            d = d_in
        else:
            raise AssertionError(kind)
    return {name: grads[name] for name in layer_shapes(cache.spec)}


def cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    y = np.asarray([int(v) for v in labels], dtype=np.intp)
    n = logits.shape[0]
    if y.shape[0] != n:
        raise ValueError(f"{n} logit rows but {y.shape[0]} labels")
    logp = L.log_softmax(logits)
    loss = -logp[np.arange(n), y].mean()
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    return float(loss), grad / n


def predict_proba(params: Parameters, spec: ModelSpec, batch: np.ndarray) -> np.ndarray:
    logits, _ = forward(params, spec, batch)
    return L.softmax(logits)


def predict(params: Parameters, spec: ModelSpec, img) -> Prediction:
    """Prediction for one image (a LabeledImage or an (H, W, C) array already at the model input size)."""
    pixels = getattr(img, "pixels", img)
    batch = np.asarray(pixels, dtype=np.float64).transpose(2, 0, 1)[None]
    return Prediction.from_probabilities(predict_proba(params, spec, batch)[0])


def images_to_batch(images, dtype=np.float64) -> np.ndarray:
    """Stack (H, W, C) pixel arrays into an (N, C, H, W) batch."""
    return np.stack([getattr(im, "pixels", im) for im in images]).transpose(0, 3, 1, 2).astype(dtype, copy=False)
