"""Desk-scale cross-validated experiment on the synthetic image set.

Mirrors ``scripts/configs/synthetic.ini`` without touching the filesystem,
so that several seeds can be swept quickly from tests and scripts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from busnet import synthetic
from busnet.augment import AugmentPolicy
from busnet.dataset import DatasetManifest, LabeledImage, ManifestEntry, make_folds, split_images
from busnet.ensemble import EnsembleSpec, evaluate_ensemble
from busnet.neuralnet import ModelSpec
from busnet.optim import OptimizerConfig
from busnet.trainer import TrainConfig, evaluate, train

WIDTHS = {"plain_stack": (8, 16), "residual": (6, 12), "inception_lite": (6, 12)}
IMAGE_SIZE = 64
N_IMAGES = 600
K = 5
LEARNING_RATE = 5e-4
TRANSLATE_PX = (-4.0, 4.0)


def spec_for(family: str) -> ModelSpec:
    return ModelSpec(family, (IMAGE_SIZE, IMAGE_SIZE), 1, WIDTHS[family],
                     stem_stride=2, input_mean=0.25, input_std=0.25)


def train_config(family: str, optimizer: str, seed: int, fold: int) -> TrainConfig:
    # same seed derivation as the cv command
    s = seed * 1000 + fold
    return TrainConfig(
        spec=spec_for(family),
        optimizer=OptimizerConfig(optimizer, learning_rate=LEARNING_RATE),
        augment=AugmentPolicy(translate_range_px=TRANSLATE_PX, seed=s),
        epochs=15,
        batch_size=8,
        seed=s,
        dtype="float32",
    )


def dataset(seed: int) -> list[LabeledImage]:
    """The synthetic set quantized to 8 bits, exactly as it reads back from PNG."""
    return [LabeledImage(np.round(im.pixels * 255) / 255, im.label, im.sample_id, im.origin)
            for im in synthetic.generate(N_IMAGES, IMAGE_SIZE, seed)]


@dataclass
class SeedResult:
    seed: int
    accuracy: dict[str, float] = field(default_factory=dict)  # "family/optimizer" -> pooled CV accuracy
    fold_accuracy: dict[str, list[float]] = field(default_factory=dict)
    ensemble_members: tuple[str, ...] = ()
    ensemble_accuracy: float = float("nan")
    seconds: float = 0.0

    @property
    def best_member(self) -> float:
        return max(self.accuracy[m] for m in self.ensemble_members)


def run_seed(seed: int, optimizers=("sgdm", "adam"), ensemble_optimizer: str = "adam",
             log: Optional[Callable[[str], None]] = None) -> SeedResult:
    """5-fold CV of every family with each optimizer, then a 3-member vote over one optimizer's models."""
    t0 = time.perf_counter()
    images = dataset(seed)
    manifest = DatasetManifest(tuple(ManifestEntry(im.sample_id, "", im.label, im.origin) for im in images))
    plan = make_folds(manifest, K, seed)
    splits = [split_images(images, plan, f) for f in range(K)]
    res = SeedResult(seed)
    evals: dict[str, list] = {}
    for opt in optimizers:
        for fam in WIDTHS:
            name = f"{fam}/{opt}"
            ev, accs = [], []
            for f, (tr, te) in enumerate(splits):
                params, _ = train(train_config(fam, opt, seed, f), tr)
                fold_ev = evaluate(params, spec_for(fam), te)
                accs.append(float(np.mean([p.predicted == y for _, p, y in fold_ev])))
                ev += fold_ev
            evals[name] = ev
            res.fold_accuracy[name] = accs
            # equal-sized folds, so the pooled accuracy is also the fold mean
            res.accuracy[name] = float(np.mean([p.predicted == y for _, p, y in ev]))
            if log:
                log(f"seed {seed} {name}: {res.accuracy[name]:.4f}")
    res.ensemble_members = tuple(f"{fam}/{ensemble_optimizer}" for fam in WIDTHS)
    _, cm = evaluate_ensemble(EnsembleSpec(res.ensemble_members), evals)
    res.ensemble_accuracy = float(cm.accuracy)
    res.seconds = time.perf_counter() - t0
    if log:
        log(f"seed {seed} ensemble: {res.ensemble_accuracy:.4f} (best member {res.best_member:.4f}, {res.seconds:.0f}s)")
    return res
