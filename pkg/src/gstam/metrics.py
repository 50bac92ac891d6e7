"""Per-attribute accuracy and macro-F1 at the trajectory level."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError, LabelError
from .inference import infer_trajectories

logger = logging.getLogger(__name__)

SUBSETS = ("all", "occluded", "visible")
REPORT_COLUMNS = ("attribute", "accuracy", "f1", "n")


def attribute_f1(preds, labels, c: int) -> float:
    """Macro F1 over the classes that occur in ``labels`` or ``preds``.

    Per-class F1 is ``2PR / (P + R)``, taken as 0 when ``P + R = 0``.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.size == 0:
        raise EvaluationError("attribute_f1: empty input")
    if preds.shape != labels.shape:
        raise EvaluationError(f"attribute_f1: {preds.shape} predictions vs {labels.shape} labels")
    both = np.concatenate([preds, labels])
    if both.min() < 0 or both.max() >= c:
        raise LabelError(f"attribute_f1: class index outside [0, {c})")
    scores = []
    for k in np.unique(both):
        tp = np.sum((preds == k) & (labels == k))
        fp = np.sum((preds == k) & (labels != k))
        fn = np.sum((preds != k) & (labels == k))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def attribute_accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.size == 0:
        raise EvaluationError("accuracy: empty input")
    return float(np.mean(preds == labels))


@dataclass
class EvalReport:
    names: list
    accuracy: np.ndarray
    f1: np.ndarray
    n: int
    subset: str = "all"
    excluded: list = field(default_factory=list)

    def _kept(self):
        return [i for i, name in enumerate(self.names) if name not in self.excluded]

    @property
    def avg_accuracy(self) -> float:
        return float(np.mean(self.accuracy[self._kept()]))

    @property
    def avg_f1(self) -> float:
        return float(np.mean(self.f1[self._kept()]))

    def rows(self) -> list:
        out = [{"attribute": self.names[i], "accuracy": float(self.accuracy[i]), "f1": float(self.f1[i]), "n": self.n}
               for i in self._kept()]
        out.append({"attribute": "AVG", "accuracy": self.avg_accuracy, "f1": self.avg_f1, "n": self.n})
        return out

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for r in self.rows():
            name = r["attribute"]
            if "," in name or '"' in name:
                name = '"' + name.replace('"', '""') + '"'
            lines.append(f"{name},{r['accuracy']!r},{r['f1']!r},{r['n']}")
        return "\n".join(lines) + "\n"


def subset_filter(videos, subset: str) -> list:
    if subset not in SUBSETS:
        raise EvaluationError(f"unknown subset {subset!r}; expected one of {SUBSETS}")
    if subset == "all":
        out = list(videos)
    elif subset == "occluded":
        out = [v for v in videos if v.is_occluded]
    else:
        out = [v for v in videos if not v.is_occluded]
    if not out:
        raise EvaluationError(f"subset {subset!r} is empty")
    return out


def constant_attribute_guard(videos, names) -> list:
    """Names of attributes whose label is the same for every video given."""
    labels = np.stack([v.labels for v in videos])
    return [name for i, name in enumerate(names) if np.all(labels[:, i] == labels[0, i])]


def argmax_lowest(p) -> np.ndarray:
    """Argmax along the last axis; ties resolve to the lowest class index."""
    return np.argmax(np.asarray(p), axis=-1)


def trajectory_predictions(model, videos, T: int):
    """``(kept_videos, preds (n, B))``; trajectories shorter than ``T`` are dropped."""
    probs = infer_trajectories(model, videos, T)
    kept = [(v, p) for v, p in zip(videos, probs) if p is not None]
    if not kept:
        raise EvaluationError(f"no trajectory has at least T={T} frames")
    preds = np.array([[int(argmax_lowest(pi)) for pi in p] for _, p in kept], dtype=np.int64)
    return [v for v, _ in kept], preds


def score(names, classes, preds, labels, subset="all", exclude=()) -> EvalReport:
    acc = np.array([attribute_accuracy(preds[:, i], labels[:, i]) for i in range(len(names))])
    f1 = np.array([attribute_f1(preds[:, i], labels[:, i], classes[i]) for i in range(len(names))])
    return EvalReport(list(names), acc, f1, int(labels.shape[0]), subset, list(exclude))


def evaluate(model, dataset, subset: str = "all", T: int = 6, exclude_constant=True) -> EvalReport:
    """Trajectory-level metrics of ``model`` on one subset of ``dataset``.

    Attributes with a constant label over the subset are excluded from the
    averages (and from the report rows) unless that would exclude all of them.
    """
    videos = subset_filter(dataset, subset)
    videos, preds = trajectory_predictions(model, videos, T)
    labels = np.stack([v.labels for v in videos])
    names = model.branch_names
    excluded = []
    if exclude_constant:
        excluded = constant_attribute_guard(videos, names)
        if len(excluded) == len(names):
            logger.warning("every attribute is constant on subset %r; averaging over all of them", subset)
            excluded = []
        elif excluded:
            logger.info("excluding constant attributes on subset %r: %s", subset, excluded)
    return score(names, [s.classes for s in model.specs], preds, labels, subset, excluded)
