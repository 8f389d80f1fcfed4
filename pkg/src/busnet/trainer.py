"""Training one model on one fold, head replacement, and test-set evaluation."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from busnet import optim
from busnet.augment import AugmentPolicy, AugmentStream, no_augmentation, warp_batch
from busnet.dataset import LabeledImage, resize
from busnet.neuralnet import (
    HEAD_PREFIX,
    ModelSpec,
    Parameters,
    Prediction,
    backward,
    build,
    cross_entropy,
    forward,
    predict_proba,
)
from busnet.neuralnet.model import check_compatible, init_head
from busnet.optim import OptimizerConfig

DTYPES = {"float64": np.float64, "float32": np.float32}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    spec: ModelSpec = field(default_factory=ModelSpec)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentPolicy = field(default_factory=no_augmentation)
    epochs: int = 15
    batch_size: int = 8
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "augment": self.augment.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "dtype": self.dtype,
        }


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainRecord:
    epochs: list[EpochStats] = field(default_factory=list)
    steps: int = 0
    wall_time_s: float = 0.0
    checkpoint: Optional[str] = None
    augment_draws: int = 0

    def to_dict(self) -> dict:
        return {
            "epochs": [{"epoch": e.epoch, "loss": e.loss, "accuracy": e.accuracy} for e in self.epochs],
            "steps": self.steps,
            "wall_time_s": self.wall_time_s,
            "checkpoint": self.checkpoint,
            "augment_draws": self.augment_draws,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainRecord":
        return cls(
            [EpochStats(**e) for e in d["epochs"]], d["steps"], d["wall_time_s"], d.get("checkpoint"), d.get("augment_draws", 0)
        )


def fit_to_spec(images: Sequence[LabeledImage], spec: ModelSpec) -> list[LabeledImage]:
    h, w = spec.input_hw
    out = []
    for im in images:
        if im.shape != (h, w, spec.input_channels):
            im = resize(im, h, w, spec.input_channels)
        out.append(im)
    return out


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Shuffled sample order for one epoch; depends only on (seed, epoch)."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED, epoch]).permutation(n)


def draw_index(epoch: int, batch: int, slot: int, n: int, batch_size: int) -> int:
    """Augmentation draw for the ``slot``-th sample of a batch: unique per (epoch, batch, slot)."""
    return epoch * n + batch * batch_size + slot


def train(
    cfg: TrainConfig,
    train_set: Sequence[LabeledImage],
    init_params: Optional[Parameters] = None,
    stream: Optional[AugmentStream] = None,
    on_step: Optional[Callable[[int, int, float], None]] = None,
) -> tuple[Parameters, TrainRecord]:
    """Mini-batch training with a fresh shuffle every epoch.

    Runs ``epochs * ceil(n / batch_size)`` optimizer steps; the last batch of
    an epoch may be short. Every training sample passes through the
    augmentation policy; identity draws skip the resampling.
    """
    if not train_set:
        raise TrainingError("empty training set")
    spec = cfg.spec
    dtype = DTYPES[cfg.dtype]
    images = fit_to_spec(train_set, spec)
    pixels = np.stack([im.pixels for im in images]).astype(dtype)  # (n, H, W, C)
    labels = np.asarray([int(im.label) for im in images], dtype=np.intp)
    n = len(images)

    params = build(spec, cfg.seed) if init_params is None else init_params
    check_compatible(params, spec)
    params = params.astype(dtype)
    state = optim.init_state(params, cfg.optimizer)
    stream = stream or AugmentStream(cfg.augment)
    record = TrainRecord()
    t0 = time.perf_counter()
    n_batches = math.ceil(n / cfg.batch_size)

    for epoch in range(cfg.epochs):
        order = epoch_order(cfg.seed, epoch, n)
        loss_sum, correct = 0.0, 0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            ts = [stream.draw(draw_index(epoch, b, slot, n, cfg.batch_size)) for slot in range(len(idx))]
            x = warp_batch(pixels[idx], ts).transpose(0, 3, 1, 2)
            logits, cache = forward(params, spec, x)
            loss, dlogits = cross_entropy(logits, labels[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {b}")
            grads = backward(cache, dlogits.astype(dtype, copy=False))
            params, state = optim.step(params, grads, state, cfg.optimizer)
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == labels[idx]).sum())
            record.steps += 1
            if on_step is not None:
                on_step(epoch, b, loss)
        record.epochs.append(EpochStats(epoch, loss_sum / n, correct / n))
    record.wall_time_s = time.perf_counter() - t0
    record.augment_draws = stream.position
    return params, record


def replace_head(checkpoint: Parameters, spec: ModelSpec, seed: int, freeze: bool = False) -> Parameters:
    """Keep the feature layers of ``checkpoint`` and re-initialize the classifier head."""
    check_compatible(checkpoint, spec)
    fresh = init_head(checkpoint, spec, seed)
    tensors = {
        name: fresh[name] if name.startswith(HEAD_PREFIX) else t.copy()
        for name, t in checkpoint.tensors.items()
    }
    frozen = frozenset(n for n in tensors if not n.startswith(HEAD_PREFIX)) if freeze else frozenset()
    return Parameters(tensors, seed, frozen)


def evaluate(params: Parameters, spec: ModelSpec, test_set: Sequence[LabeledImage],
             batch_size: int = 64) -> list[tuple[str, Prediction, int]]:
    """One prediction per test image, in input order; never augments."""
    if not test_set:
        raise ValueError("empty test set")
    images = fit_to_spec(test_set, spec)
    dtype = next(iter(params.tensors.values())).dtype
    out = []
    for s in range(0, len(images), batch_size):
        chunk = images[s:s + batch_size]
        x = np.stack([im.pixels for im in chunk]).astype(dtype).transpose(0, 3, 1, 2)
        probs = predict_proba(params, spec, x).astype(np.float64)
        for im, p in zip(chunk, probs):
            out.append((im.sample_id, Prediction.from_probabilities(p / p.sum()), im.label))
    return out
