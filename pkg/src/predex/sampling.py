"""Admission-level splitting, cross-validation folding, and per-admission
resampling, all reproducible from one master seed.

Child seeds come from a keyed 64-bit hash of (master seed, purpose tag,
index), so adding new draws never perturbs existing ones and generation is
order-independent across admissions and repeats.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Cohort
from .indexing import Dataset


def derive_seed(master: int, *parts) -> int:
    """Deterministic 64-bit child seed from a master seed and a purpose path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master).to_bytes(8, "little", signed=False))
    for part in parts:
        if isinstance(part, int):
            h.update(b"i" + part.to_bytes(8, "little", signed=True))
        else:
            raw = str(part).encode("utf-8")
            h.update(b"s" + len(raw).to_bytes(4, "little") + raw)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    n_repeats: int = 100
    test_fraction: float = 0.25
    n_cv_folds: int = 5

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        if self.n_cv_folds < 2:
            raise ValueError("n_cv_folds must be >= 2")


@dataclass(frozen=True)
class SplitAssignment:
    """One repeat's disjoint train/test admission ids (stored sorted)."""

    repeat_index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def make_splits(admission_ids, plan: SplitPlan) -> list[SplitAssignment]:
    """n_repeats independent test draws of exactly round(test_fraction * N) ids.

    Rounding is half-up. Deterministic given (ids, plan); the input id order
    does not matter.
    """
    ids = sorted(set(admission_ids))
    n = len(ids)
    if n < 4:
        raise ValueError(f"need at least 4 admissions to split, got {n}")
    n_test = int(np.floor(plan.test_fraction * n + 0.5))
    if n_test < 1 or n_test >= n:
        raise ValueError(f"test_fraction {plan.test_fraction} leaves an empty side for N={n}")
    id_arr = np.array(ids, dtype=object)
    out = []
    for r in range(plan.n_repeats):
        rng = np.random.default_rng(derive_seed(plan.seed, "split", r))
        perm = rng.permutation(n)
        test = sorted(id_arr[perm[:n_test]])
        train = sorted(id_arr[perm[n_test:]])
        out.append(SplitAssignment(r, tuple(train), tuple(test)))
    return out


def make_cv_folds(train_ids, n_folds: int, seed: int) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Partition train_ids into n_folds validation sets (sizes differ by <= 1),
    admission-level. Returns (fit_ids, val_ids) per fold."""
    ids = sorted(set(train_ids))
    if len(ids) < n_folds:
        raise ValueError(f"need >= {n_folds} admissions for {n_folds}-fold CV, got {len(ids)}")
    rng = np.random.default_rng(derive_seed(seed, "cv"))
    perm = rng.permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    folds = []
    base, extra = divmod(len(ids), n_folds)
    start = 0
    for f in range(n_folds):
        size = base + (1 if f < extra else 0)
        val = shuffled[start : start + size]
        start += size
        val_set = set(val)
        fit = tuple(sorted(i for i in ids if i not in val_set))
        folds.append((fit, tuple(sorted(val))))
    return folds


def subsample_per_admission(dataset: Dataset, k: int, seed: int) -> Dataset:
    """Draw exactly k examples per admission, i.i.d. with replacement, so every
    admission is equally represented. Deterministic given seed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    by_admission: dict[str, list] = {}
    order: list[str] = []
    for ex in dataset.examples:
        if ex.admission_id not in by_admission:
            by_admission[ex.admission_id] = []
            order.append(ex.admission_id)
        by_admission[ex.admission_id].append(ex)
    chosen = []
    for adm_id in order:
        pool = by_admission[adm_id]
        rng = np.random.default_rng(derive_seed(seed, "subsample", adm_id))
        picks = rng.integers(0, len(pool), size=k)
        chosen.extend(sorted((pool[i] for i in picks), key=lambda e: e.t_p))
    return Dataset(chosen, dataset.feature_dictionary, dataset.task, n_dropped=dataset.n_dropped)


def median_resample_k(cohort: Cohort, first_offset_hours: float = 12.0,
                      interval_hours: float = 24.0) -> int:
    """Per-admission resample count: floor(median(los) / interval), clamped to >= 1.

    Lower-median convention for even counts. The flooring (rather than
    rounding) reflects that a rolling schedule starting first_offset_hours
    into the stay yields one fewer full interval than the raw median suggests.
    """
    if not cohort.admissions:
        raise ValueError("empty cohort")
    if interval_hours <= 0:
        raise ValueError("interval_hours must be positive")
    los = sorted(a.los_hours for a in cohort.admissions)
    med = los[(len(los) - 1) // 2]
    return max(1, int(np.floor(med / interval_hours)))


def write_split_audit(assignments: list[SplitAssignment], path: str | Path) -> None:
    """CSV audit trail: repeat_index,admission_id,role."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("repeat_index,admission_id,role\n")
        for a in assignments:
            for adm in a.train_ids:
                fh.write(f"{a.repeat_index},{adm},train\n")
            for adm in a.test_ids:
                fh.write(f"{a.repeat_index},{adm},test\n")
