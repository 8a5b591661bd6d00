"""Image-level metrics over paired score/label vectors.

All four metrics share one classification rule, stated once: a sample whose
score is >= t is classified bad (positive). Equal scores always act as a
single operating point, so a threshold either includes all tied samples or
none of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateScoresError, ValidationError

OK = "ok"
UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class MetricValue:
    """One named metric result in [0, 1], or an explicit unavailability."""

    name: str
    value: Optional[float]
    availability: str = OK
    threshold: Optional[float] = None

    def __post_init__(self) -> None:
        if self.availability not in (OK, UNAVAILABLE):
            raise ValueError(f"bad availability {self.availability!r}")
        if (self.value is not None) != (self.availability == OK):
            raise ValueError("value must be present iff availability is ok")

    @property
    def available(self) -> bool:
        return self.availability == OK


def unavailable(name: str) -> MetricValue:
    return MetricValue(name=name, value=None, availability=UNAVAILABLE)


@dataclass(frozen=True)
class LabeledScores:
    """Image-level anomaly scores paired with binary labels (True = bad)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=bool)
        if scores.ndim != 1 or labels.ndim != 1:
            raise ValidationError("scores and labels must be 1-D vectors")
        if scores.shape != labels.shape:
            raise ValidationError(
                f"scores and labels differ in length ({scores.size} vs {labels.size})"
            )
        if scores.size == 0:
            raise ValidationError("empty score set")
        if not np.isfinite(scores).all():
            raise ValidationError("non-finite score")
        scores.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, str]]) -> "LabeledScores":
        """Build from (score, "good"/"bad") pairs."""
        items = list(pairs)
        scores = np.array([s for s, _ in items], dtype=np.float64)
        labels = np.array([lab == "bad" for _, lab in items], dtype=bool)
        return cls(scores, labels)

    @property
    def n_bad(self) -> int:
        return int(self.labels.sum())

    @property
    def n_good(self) -> int:
        return int(self.labels.size - self.labels.sum())


def _require_both_classes(ls: LabeledScores) -> None:
    if ls.n_bad == 0 or ls.n_good == 0:
        raise DegenerateScoresError(
            f"degenerate class balance: {ls.n_bad} bad / {ls.n_good} good"
        )


@dataclass(frozen=True)
class ThresholdSweep:
    """Exact confusion counts at every unique score, thresholds descending."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray


def sweep(ls: LabeledScores) -> ThresholdSweep:
    """Count tp/fp/tn/fn at each unique score under the score >= t rule."""
    _require_both_classes(ls)
    thresholds = np.unique(ls.scores)[::-1]
    bad_sorted = np.sort(ls.scores[ls.labels])
    good_sorted = np.sort(ls.scores[~ls.labels])
    # #x >= t == n - #x < t
    tp = ls.n_bad - np.searchsorted(bad_sorted, thresholds, side="left")
    fp = ls.n_good - np.searchsorted(good_sorted, thresholds, side="left")
    return ThresholdSweep(
        thresholds=thresholds,
        tp=tp,
        fp=fp,
        tn=ls.n_good - fp,
        fn=ls.n_bad - tp,
    )


def _midrank_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Rank-based AUC with ties counted 1/2 (average-rank convention)."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    n = s.size
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    np.not_equal(s[1:], s[:-1], out=boundary[1:])
    starts = np.flatnonzero(boundary)
    sizes = np.diff(np.append(starts, n))
    midranks = starts + (sizes + 1) / 2.0  # 1-based average rank per tie group
    ranks = midranks[np.cumsum(boundary) - 1]
    n_pos = int(positives.sum())
    n_neg = n - n_pos
    rank_sum = float(ranks[positives[order]].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc(ls: LabeledScores) -> MetricValue:
    """Probability a random bad sample outscores a random good one.

    Ties count one half, which makes the value identical to the trapezoidal
    area under the ROC curve with tied scores merged into one operating point.
    """
    _require_both_classes(ls)
    return MetricValue("im.AUROC", _midrank_auc(ls.scores, ls.labels))


def f1max(ls: LabeledScores) -> MetricValue:
    """Maximum F1 over all operating points, bad class positive.

    F1 is defined as 0 where tp == 0. Ties on the maximum resolve to the
    highest threshold attaining it.
    """
    if ls.n_bad == 0:
        raise DegenerateScoresError("degenerate class balance: no bad samples")
    if ls.n_good == 0:
        # Every threshold that keeps tp == B yields precision 1; the sweep
        # still enumerates them, so fall through with a single-class guard off.
        thresholds = np.unique(ls.scores)[::-1]
        bad_sorted = np.sort(ls.scores)
        tp = ls.n_bad - np.searchsorted(bad_sorted, thresholds, side="left")
        fp = np.zeros_like(tp)
    else:
        sw = sweep(ls)
        thresholds, tp, fp = sw.thresholds, sw.tp, sw.fp
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(tp > 0, 2.0 * tp / (2.0 * tp + fp + (ls.n_bad - tp)), 0.0)
    best = int(np.argmax(f1))  # first max == largest threshold
    return MetricValue("im.F1Max", float(f1[best]), threshold=float(thresholds[best]))


def _budget_count(budget: float, n: int) -> int:
    if not (0.0 <= budget < 1.0):
        raise ValidationError(f"budget must lie in [0, 1), got {budget}")
    return math.floor(budget * n)


def pg_at(ls: LabeledScores, fnr_budget: float = 0.02) -> MetricValue:
    """True negative rate with at most floor(fnr_budget * B) bad parts missed.

    Equivalently: TNR at the largest threshold whose false-negative count
    stays within the budget.
    """
    _require_both_classes(ls)
    allowed = _budget_count(fnr_budget, ls.n_bad)
    bad_sorted = np.sort(ls.scores[ls.labels])
    t_star = float(bad_sorted[allowed])  # largest t with #(bad < t) <= allowed
    tnr = float(np.count_nonzero(ls.scores[~ls.labels] < t_star)) / ls.n_good
    return MetricValue("im.PG2", tnr, threshold=t_star)


def pb_at(ls: LabeledScores, fpr_budget: float = 0.02) -> MetricValue:
    """True positive rate with at most floor(fpr_budget * G) good parts flagged.

    The operating point is the smallest threshold whose false-positive count
    stays within the budget.
    """
    _require_both_classes(ls)
    allowed = _budget_count(fpr_budget, ls.n_good)
    good_desc = np.sort(ls.scores[~ls.labels])[::-1]
    g_star = float(good_desc[allowed])  # any valid t must exceed this score
    bad = ls.scores[ls.labels]
    tpr = float(np.count_nonzero(bad > g_star)) / ls.n_bad
    above = ls.scores[ls.scores > g_star]
    threshold = float(above.min()) if above.size else math.inf
    return MetricValue("im.PB2", tpr, threshold=threshold)


def score_image_metrics(
    ls: LabeledScores,
    pg_budget: float = 0.02,
    pb_budget: float = 0.02,
) -> dict[str, MetricValue]:
    """All four image-level metrics for one category."""
    return {
        "im.AUROC": auroc(ls),
        "im.F1Max": f1max(ls),
        "im.PG2": pg_at(ls, pg_budget),
        "im.PB2": pb_at(ls, pb_budget),
    }


def apply_monotone(ls: LabeledScores, fn) -> LabeledScores:
    """Transform scores elementwise; a test helper for invariance checks."""
    return LabeledScores(np.asarray([fn(x) for x in ls.scores], dtype=np.float64), ls.labels)


def scores_from_sequences(
    good: Sequence[float], bad: Sequence[float]
) -> LabeledScores:
    scores = np.concatenate([np.asarray(good, float), np.asarray(bad, float)])
    labels = np.concatenate([np.zeros(len(good), bool), np.ones(len(bad), bool)])
    return LabeledScores(scores, labels)
