"""Equal-frequency trend labels and classification metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.metrics import f1_score, roc_auc_score

from . import _kernels
from .errors import ConfigError, DimensionError

TREND_NAMES = ("low", "medium-low", "medium", "medium-high", "high")


@dataclass(frozen=True)
class DiscretizationState:
    mean_per_skill: np.ndarray
    std_per_skill: np.ndarray
    normalized_target: np.ndarray
    sorted_order: np.ndarray
    class_boundaries: list[tuple[int, int]]  # half-open [start, stop) ranges over sorted positions


@dataclass(frozen=True)
class LabelMatrix:
    view: str
    onehot: np.ndarray  # (n_skills, m) of {0, 1}

    @property
    def classes(self) -> np.ndarray:
        return self.onehot.argmax(axis=1)

    @classmethod
    def from_classes(cls, view: str, classes, m: int) -> "LabelMatrix":
        classes = np.asarray(classes, dtype=np.int64)
        return cls(view, np.eye(m, dtype=np.int64)[classes])


def standardize(history: np.ndarray, target: np.ndarray):
    """Per-skill z-score of ``target`` against ``history`` (population std).

    Skills with a constant history get a standardized value of 0.
    """
    mean = history.mean(axis=1)
    std = history.std(axis=1)
    z = np.zeros_like(mean)
    ok = std > 0
    z[ok] = (target[ok] - mean[ok]) / std[ok]
    return mean, std, z


def class_sizes(n_items: int, n_classes: int) -> np.ndarray:
    base, extra = divmod(n_items, n_classes)
    sizes = np.full(n_classes, base, dtype=np.int64)
    sizes[:extra] += 1
    return sizes


def discretize_shares(history, target, n: int = 5, view: str = "demand"):
    """Label each skill's next-step share by its rank among all skills.

    ``history`` is ``(n_skills, steps)``, ``target`` the ``(n_skills,)`` share
    one step later.  Returns ``(LabelMatrix, DiscretizationState)``.
    """
    history = np.asarray(history, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if history.ndim != 2 or target.shape != (history.shape[0],):
        raise DimensionError(f"history {history.shape} / target {target.shape} mismatch")
    if history.shape[1] < 2:
        raise ConfigError("history needs at least 2 steps")
    if n < 2:
        raise ConfigError("need at least 2 classes")
    if n > history.shape[0]:
        raise ConfigError(f"{n} classes but only {history.shape[0]} skills")
    mean, std, z = standardize(history, target)
    classes = _kernels.equal_frequency_labels(z, n)
    order = np.argsort(z, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(class_sizes(len(z), n))])
    state = DiscretizationState(mean, std, z, order, [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])])
    return LabelMatrix.from_classes(view, classes, n), state


def trend_classes(series: np.ndarray, target_step: int, window: int, n: int = 5) -> np.ndarray:
    """Class indices for ``series[:, target_step]`` using the preceding history window.

    ``window=0`` means the whole history from step 0.
    """
    lo = 0 if window == 0 else target_step - window
    if lo < 0:
        raise ConfigError(f"target step {target_step} has less than {window} steps of history")
    labels, _ = discretize_shares(series[:, lo:target_step], series[:, target_step], n)
    return labels.classes


def labels_to_csv(labels: list[LabelMatrix]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["skill_id", "view", "class"])
    for lab in labels:
        for k, c in enumerate(lab.classes):
            w.writerow([k, lab.view, int(c)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    weighted_f1: float
    auc: float
    joint_accuracy: float

    def as_dict(self) -> dict:
        return asdict(self)


def joint_accuracy(pred_s, pred_d, true_s, true_d) -> float:
    """Fraction of skills whose supply and demand classes are both right."""
    arrs = [np.asarray(a) for a in (pred_s, pred_d, true_s, true_d)]
    if len({a.shape for a in arrs}) != 1:
        raise DimensionError("all four class vectors must have the same length")
    if arrs[0].size == 0:
        return 0.0
    both = (arrs[0] == arrs[2]) & (arrs[1] == arrs[3])
    return float(both.mean())


def predicted_classes(pred_probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.asarray(pred_probs).argmax(axis=1)


def weighted_auc(pred_probs: np.ndarray, true: np.ndarray) -> float:
    """One-vs-rest AUC averaged with class-frequency weights.

    Classes absent from ``true`` (or covering every row) are skipped.
    """
    n = len(true)
    total, weight = 0.0, 0
    for j in range(pred_probs.shape[1]):
        pos = true == j
        npos = int(pos.sum())
        if npos == 0 or npos == n:
            continue
        total += npos * roc_auc_score(pos, pred_probs[:, j])
        weight += npos
    return total / weight if weight else 0.0


def classification_metrics(pred_probs, labels) -> dict:
    """ACC, weighted F1 and weighted one-vs-rest AUC for one view.

    ``labels`` may be a :class:`LabelMatrix` or a vector of class indices.
    """
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    true = labels.classes if isinstance(labels, LabelMatrix) else np.asarray(labels)
    if pred_probs.shape[0] != true.shape[0]:
        raise DimensionError("prediction and label row counts differ")
    if not np.allclose(pred_probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("prediction rows must sum to 1")
    pred = predicted_classes(pred_probs)
    present = np.unique(true)
    return {
        "accuracy": float((pred == true).mean()),
        "weighted_f1": float(f1_score(true, pred, labels=present, average="weighted", zero_division=0)),
        "auc": float(weighted_auc(pred_probs, true)),
    }
