"""Shared-task scoring: macro F1 (binary task) and averaged weighted F1 (multi-label task).

An F1 whose denominator is zero (no predicted and no gold positives for
that class) is scored as 0.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .dataio import LABEL_NAMES
from .errors import ParameterError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def flipped(self) -> "ConfusionCounts":
        """Counts with the negative class treated as positive."""
        return ConfusionCounts(self.tn, self.fn, self.fp, self.tp)


def _pair(pred, gold) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred).reshape(-1)
    gold = np.asarray(gold).reshape(-1)
    if pred.shape != gold.shape:
        raise ParameterError(f"prediction length {pred.size} differs from gold length {gold.size}")
    if pred.size == 0:
        raise ParameterError("cannot score an empty prediction set")
    return pred.astype(bool), gold.astype(bool)


def confusion(pred, gold) -> ConfusionCounts:
    p, g = _pair(pred, gold)
    return ConfusionCounts(
        int(np.sum(p & g)), int(np.sum(p & ~g)), int(np.sum(~p & g)), int(np.sum(~p & ~g))
    )


def f1_from_counts(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 0.0 if denom == 0 else 2.0 * c.tp / denom


def macro_f1(pred, gold) -> float:
    c = confusion(pred, gold)
    return 0.5 * (f1_from_counts(c) + f1_from_counts(c.flipped()))


def weighted_f1_label(pred, gold) -> float:
    c = confusion(pred, gold)
    support_pos = c.tp + c.fn
    support_neg = c.fp + c.tn
    return (support_pos * f1_from_counts(c) + support_neg * f1_from_counts(c.flipped())) / c.total


def task_b_score(per_label_weighted_f1: Sequence[float]) -> float:
    vals = np.asarray(per_label_weighted_f1, dtype=np.float64)
    if vals.size == 0:
        raise ParameterError("no per-label scores to average")
    return float(vals.mean())


@dataclass(frozen=True)
class LabelScore:
    name: str
    f1_pos: float
    f1_neg: float
    weighted_f1: float
    support_pos: int
    support_neg: int


@dataclass(frozen=True)
class MetricsReport:
    """Per-label breakdown plus both task scores.

    ``task_a_macro_f1`` is computed on the first label column. When
    ``subtypes_only`` was requested, ``task_b_score`` averages the weighted
    F1 of columns 1.. only; otherwise it averages every column.
    """

    per_label: Tuple[LabelScore, ...]
    task_a_macro_f1: float
    task_b_score: float

    def to_tsv(self) -> str:
        lines = ["label\tf1_pos\tf1_neg\tweighted_f1\tsupport_pos\tsupport_neg"]
        for s in self.per_label:
            lines.append(
                f"{s.name}\t{s.f1_pos:.6f}\t{s.f1_neg:.6f}\t{s.weighted_f1:.6f}\t{s.support_pos}\t{s.support_neg}"
            )
        lines.append(f"#task_a_macro_f1\t{self.task_a_macro_f1:.6f}")
        lines.append(f"#task_b_score\t{self.task_b_score:.6f}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        head = f"{'label':<16}{'F1+':>8}{'F1-':>8}{'wF1':>8}{'n+':>7}{'n-':>7}"
        rows = [head, "-" * len(head)]
        for s in self.per_label:
            rows.append(
                f"{s.name:<16}{s.f1_pos:>8.4f}{s.f1_neg:>8.4f}{s.weighted_f1:>8.4f}{s.support_pos:>7d}{s.support_neg:>7d}"
            )
        rows.append(f"Task A macro F1:           {self.task_a_macro_f1:.4f}")
        rows.append(f"Task B averaged weighted F1: {self.task_b_score:.4f}")
        return "\n".join(rows)


def metrics_report(pred, gold, label_names: Sequence[str] = LABEL_NAMES, subtypes_only: bool = False) -> MetricsReport:
    """Score an n x k prediction matrix against gold labels."""
    pred = np.atleast_2d(np.asarray(pred))
    gold = np.atleast_2d(np.asarray(gold))
    if pred.shape != gold.shape:
        raise ParameterError(f"prediction shape {pred.shape} differs from gold shape {gold.shape}")
    scores: List[LabelScore] = []
    for j in range(pred.shape[1]):
        c = confusion(pred[:, j], gold[:, j])
        scores.append(
            LabelScore(
                label_names[j],
                f1_from_counts(c),
                f1_from_counts(c.flipped()),
                weighted_f1_label(pred[:, j], gold[:, j]),
                c.tp + c.fn,
                c.fp + c.tn,
            )
        )
    weighted = [s.weighted_f1 for s in scores]
    if subtypes_only and len(weighted) > 1:
        weighted = weighted[1:]
    return MetricsReport(tuple(scores), macro_f1(pred[:, 0], gold[:, 0]), task_b_score(weighted))
