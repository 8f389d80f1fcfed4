"""Member selection and majority-vote fusion of per-model predictions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from busnet.labels import NUM_CLASSES, ClassLabel
from busnet.metrics import ConfusionMatrix, accumulate
from busnet.neuralnet import Prediction

TIE_BREAKS = ("summed_probability", "best_member")
BAGGING_MODES = ("shared_folds", "bootstrap")


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleSpec:
    """``member_ids`` is in rank order: the first entry is the best member."""

    member_ids: tuple[str, ...]
    tie_break: str = "summed_probability"
    vote_rule: str = "majority_mode"
    selection_metric: str = "accuracy"

    def __post_init__(self):
        object.__setattr__(self, "member_ids", tuple(self.member_ids))
        if len(self.member_ids) < 2:
            raise EnsembleError(f"an ensemble needs at least 2 members, got {len(self.member_ids)}")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise EnsembleError(f"duplicate member ids in {self.member_ids}")
        if self.tie_break not in TIE_BREAKS:
            raise EnsembleError(f"unknown tie_break {self.tie_break!r}; expected one of {TIE_BREAKS}")
        if self.vote_rule != "majority_mode":
            raise EnsembleError(f"unknown vote_rule {self.vote_rule!r}")
        if self.selection_metric != "accuracy":
            raise EnsembleError(f"unknown selection_metric {self.selection_metric!r}")

    def to_dict(self) -> dict:
        return {
            "member_ids": list(self.member_ids),
            "vote_rule": self.vote_rule,
            "tie_break": self.tie_break,
            "selection_metric": self.selection_metric,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        return cls(tuple(d["member_ids"]), d.get("tie_break", "summed_probability"),
                   d.get("vote_rule", "majority_mode"), d.get("selection_metric", "accuracy"))


@dataclass(frozen=True)
class VoteOutcome:
    sample_id: str
    votes: tuple[ClassLabel, ...]
    probabilities: tuple[tuple[float, ...], ...]
    decided: ClassLabel
    tie_broken: bool
    truth: Optional[ClassLabel] = None

    @property
    def mean_probabilities(self) -> np.ndarray:
        return np.mean(np.asarray(self.probabilities), axis=0)

    def to_dict(self) -> dict:
        d = {
            "sample_id": self.sample_id,
            "votes": [v.title for v in self.votes],
            "probabilities": [list(p) for p in self.probabilities],
            "decided": self.decided.title,
            "tie_broken": self.tie_broken,
        }
        if self.truth is not None:
            d["truth"] = self.truth.title
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VoteOutcome":
        return cls(
            d["sample_id"],
            tuple(ClassLabel.parse(v) for v in d["votes"]),
            tuple(tuple(p) for p in d["probabilities"]),
            ClassLabel.parse(d["decided"]),
            bool(d["tie_broken"]),
            ClassLabel.parse(d["truth"]) if d.get("truth") else None,
        )


def _accuracy_and_auc(report) -> tuple[float, float]:
    acc = report.accuracy if report.accuracy is not None else float("-inf")
    macro = getattr(report, "macro", None) or {}
    auc = macro.get("auc")
    return acc, (auc if auc is not None else float("-inf"))


def select_members(reports: Mapping[str, object], m: int) -> list[str]:
    """The ``m`` models with the highest (cross-validated) accuracy.

    ``reports`` maps model id to anything with an ``accuracy`` attribute and
    a ``macro`` dict holding ``"auc"`` (MetricsReport qualifies). Ties go to
    the higher macro AUC, then to the lexicographically smaller id.
    """
    if m < 2:
        raise EnsembleError(f"need at least 2 members, got m={m}")
    if m > len(reports):
        raise EnsembleError(f"asked for {m} members but only {len(reports)} models are available")

    def key(mid):
        acc, auc = _accuracy_and_auc(reports[mid])
        return (-acc, -auc, mid)

    return sorted(reports, key=key)[:m]


def vote(spec: EnsembleSpec, member_predictions: Sequence[Prediction], sample_id: str = "",
         truth: Optional[ClassLabel] = None) -> VoteOutcome:
    """Mode of the members' predicted labels.

    When several classes share the top vote count:

    * ``summed_probability`` picks the tied class whose probability summed
      over all members is largest (lowest class index if even that ties);
    * ``best_member`` takes the vote of the highest-ranked member among those
      that voted for one of the tied classes.
    """
    if len(member_predictions) != len(spec.member_ids):
        raise EnsembleError(f"{len(member_predictions)} predictions for {len(spec.member_ids)} members")
    labels = np.fromiter((int(p.predicted) for p in member_predictions), dtype=np.intp, count=len(member_predictions))
    probs = np.asarray([p.probabilities for p in member_predictions], dtype=np.float64)
    counts = np.bincount(labels, minlength=NUM_CLASSES)
    top = counts.max()
    tied = np.flatnonzero(counts == top)
    if tied.size == 1:
        decided, broken = int(tied[0]), False
    elif spec.tie_break == "summed_probability":
        # fsum is correctly rounded, so the sums do not depend on member order
        sums = [math.fsum(probs[:, c]) for c in tied]
        decided, broken = int(tied[int(np.argmax(sums))]), True
    else:
        decided = next(int(v) for v in labels if v in tied)
        broken = True
    return VoteOutcome(
        sample_id,
        tuple(ClassLabel(int(v)) for v in labels),
        tuple(tuple(float(x) for x in row) for row in probs),
        ClassLabel(decided),
        broken,
        truth,
    )


def evaluate_ensemble(spec: EnsembleSpec, per_member_eval: Mapping[str, Sequence[tuple[str, Prediction, int]]]
                      ) -> tuple[list[VoteOutcome], ConfusionMatrix]:
    """Vote sample by sample and tally decided-vs-true labels.

    Samples follow the order of the first member's evaluation list.
    """
    missing_members = [mid for mid in spec.member_ids if mid not in per_member_eval]
    if missing_members:
        raise EnsembleError(f"no evaluation for member(s) {missing_members}")
    tables = {mid: {sid: (pred, label) for sid, pred, label in per_member_eval[mid]} for mid in spec.member_ids}
    first = spec.member_ids[0]
    ids = [sid for sid, _, _ in per_member_eval[first]]
    reference = set(ids)
    for mid in spec.member_ids[1:]:
        other = set(tables[mid])
        if other != reference:
            missing = sorted(reference ^ other)
            raise EnsembleError(f"member {mid!r} covers a different sample set; mismatched ids: {missing[:10]}")
    outcomes = []
    for sid in ids:
        preds = [tables[mid][sid][0] for mid in spec.member_ids]
        truths = {int(tables[mid][sid][1]) for mid in spec.member_ids}
        if len(truths) != 1:
            raise EnsembleError(f"members disagree on the true label of {sid}")
        outcomes.append(vote(spec, preds, sid, ClassLabel(truths.pop())))
    cm = accumulate((o.truth, o.decided) for o in outcomes)
    return outcomes, cm


def bootstrap_indices(n: int, seed: int, member_index: int) -> np.ndarray:
    """Sample ``n`` indices with replacement; one independent stream per member."""
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0xB007, member_index])
    return rng.integers(0, n, size=n)


def write_votes(path, outcomes: Sequence[VoteOutcome]) -> None:
    with open(path, "w") as f:
        for o in outcomes:
            f.write(json.dumps(o.to_dict()) + "\n")


def read_votes(path) -> list[VoteOutcome]:
    with open(path) as f:
        return [VoteOutcome.from_dict(json.loads(line)) for line in f if line.strip()]


@dataclass
class FoldVotes:
    """Outcomes of one cross-validation fold."""

    fold: int
    outcomes: list[VoteOutcome] = field(default_factory=list)
