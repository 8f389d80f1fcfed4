"""SVG figures for run directories (ROC curves and confusion matrices)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from busnet.metrics import ConfusionMatrix, RocCurve  # noqa: E402

# fixed metadata keeps reruns byte-identical
_SVG_META = {"Date": None, "Creator": None}


def roc_svg(path, curves: dict[str, RocCurve], title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for name, c in curves.items():
        ax.plot(c.fpr, c.tpr, drawstyle="default", label=f"{name} (AUC {c.auc:.3f})")
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    plt.rcParams["svg.hashsalt"] = "busnet"
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def confusion_svg(path, cm: ConfusionMatrix, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4, 3.6))
    ax.imshow(cm.counts, cmap="Blues")
    k = len(cm.class_names)
    ax.set_xticks(range(k), cm.class_names)
    ax.set_yticks(range(k), cm.class_names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    hi = cm.counts.max() if cm.counts.size else 0
    for i in range(k):
        for j in range(k):
            v = int(cm.counts[i, j])
            ax.text(j, i, str(v), ha="center", va="center", color="white" if v > hi / 2 else "black")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    plt.rcParams["svg.hashsalt"] = "busnet"
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
