"""AUROC computation and aggregation.

auroc() is the Mann-Whitney statistic computed exactly via sorting, with 0.5
credit per tied positive-negative pair. patient_level_auroc() sweeps a decision
threshold over the pooled scores, classifying a patient positive as soon as any
of their predictions reaches the threshold; by construction this equals the
AUROC of per-admission score maxima.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UndefinedAUROCError(ValueError):
    """Raised when only one class is present, leaving the AUROC undefined."""


@dataclass
class PredictionSet:
    """Scored predictions: (admission_id, t_p, score, label) records."""

    records: list[tuple[str, float, float, int]]

    @classmethod
    def from_arrays(cls, admission_ids, t_ps, scores, labels) -> "PredictionSet":
        return cls(
            [
                (str(a), float(t), float(s), int(y))
                for a, t, s, y in zip(admission_ids, t_ps, scores, labels, strict=True)
            ]
        )


@dataclass
class EvalReport:
    per_repeat_auroc: list[float]
    mean: float
    std: float
    n_repeats: int
    metadata: dict = field(default_factory=dict)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    n = len(s)
    boundaries = np.nonzero(s[1:] != s[:-1])[0] + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    ranks = np.empty(n, dtype=np.float64)
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + 1 + b) / 2.0
    return ranks


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), exactly."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUROCError("AUROC undefined: only one class present")
    ranks = _average_ranks(s)
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def patient_level_auroc(predictions: PredictionSet) -> float:
    """Threshold-sweep AUROC over admissions for variable-horizon tasks.

    Every record of an admission must carry the same label; each admission
    enters the calculation once. A patient is classified positive at threshold
    theta iff any of their prediction scores is >= theta; the ROC traced by
    sweeping theta over all observed scores is integrated by trapezoid.
    """
    if not predictions.records:
        raise UndefinedAUROCError("no predictions")
    label_of: dict[str, int] = {}
    for adm_id, _, _, label in predictions.records:
        if adm_id in label_of and label_of[adm_id] != label:
            raise ValueError(f"admission {adm_id!r} carries conflicting labels")
        label_of[adm_id] = label
    n_pos = sum(1 for v in label_of.values() if v == 1)
    n_neg = len(label_of) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUROCError("AUROC undefined: only one class present")

    recs = sorted(predictions.records, key=lambda r: -r[2])
    flagged: set[str] = set()
    tp = fp = 0
    area = 0.0
    prev_tp = prev_fp = 0
    i = 0
    while i < len(recs):
        theta = recs[i][2]
        while i < len(recs) and recs[i][2] == theta:
            adm_id = recs[i][0]
            if adm_id not in flagged:
                flagged.add(adm_id)
                if label_of[adm_id] == 1:
                    tp += 1
                else:
                    fp += 1
            i += 1
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0
        prev_tp, prev_fp = tp, fp
    return area / (n_pos * n_neg)


def aggregate_repeats(aurocs, metadata: dict | None = None) -> EvalReport:
    """Mean and population std across repeated splits."""
    values = [float(v) for v in aurocs]
    if not values:
        raise ValueError("need at least one repeat")
    arr = np.asarray(values)
    return EvalReport(
        per_repeat_auroc=values,
        mean=float(arr.mean()),
        std=float(arr.std()),
        n_repeats=len(values),
        metadata=dict(metadata or {}),
    )
