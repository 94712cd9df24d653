"""Windowed summary-statistic features and train-only standardization.

Each retained variable contributes four entries (`<var>.min`, `<var>.mean`,
`<var>.max`, `<var>.count`) computed over the lookback window, followed by one
0/1 entry per demographic flag. Variables unobserved in a window carry NaN for
min/mean/max (count 0); the standardizer later imputes those to the training
mean, i.e. standardized 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Admission, AdmissionEventIndex, Cohort, filter_variables_by_prevalence

STD_FLOOR = 1e-8
SUMMARY_SUFFIXES = ("min", "mean", "max", "count")


@dataclass(frozen=True)
class FeatureDictionary:
    variables: tuple[str, ...]
    demographic_flags: tuple[str, ...]

    @property
    def entries(self) -> tuple[str, ...]:
        names = [f"{v}.{s}" for v in self.variables for s in SUMMARY_SUFFIXES]
        names.extend(self.demographic_flags)
        return tuple(names)

    @property
    def d(self) -> int:
        return 4 * len(self.variables) + len(self.demographic_flags)


def build_dictionary(cohort: Cohort, min_prevalence: float) -> FeatureDictionary:
    """Prevalence-filter the cohort's variables, then lay out the fixed entry order."""
    kept = filter_variables_by_prevalence(cohort, min_prevalence)
    return FeatureDictionary(tuple(kept), tuple(cohort.demographic_dictionary))


def write_dictionary_sidecar(dictionary: FeatureDictionary, path: str | Path) -> None:
    """One feature name per line; column order equals line order."""
    Path(path).write_text("\n".join(dictionary.entries) + "\n", encoding="utf-8")


def read_dictionary_sidecar(path: str | Path) -> FeatureDictionary:
    names = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
    variables: list[str] = []
    i = 0
    while i + 4 <= len(names):
        head = names[i]
        if not head.endswith(".min"):
            break
        var = head[: -len(".min")]
        if [names[i + j] for j in range(4)] != [f"{var}.{s}" for s in SUMMARY_SUFFIXES]:
            break
        variables.append(var)
        i += 4
    return FeatureDictionary(tuple(variables), tuple(names[i:]))


def window_summaries(
    index: AdmissionEventIndex,
    t_ps: Sequence[float],
    lookback_hours: float,
    variables: Sequence[str],
    open_at_tp: bool = False,
    bounds: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> np.ndarray:
    """Raw summary block for many prediction times at once.

    Returns shape (len(t_ps), 4 * len(variables)). The window is
    (t_p - lookback, t_p], or (t_p - lookback, t_p) when open_at_tp is set.
    When `bounds` is a dict, the (start, end) event-index ranges actually used
    are recorded per variable, for leakage instrumentation.
    """
    tps = np.asarray(t_ps, dtype=np.float64)
    m = len(tps)
    out = np.empty((m, 4 * len(variables)), dtype=np.float64)
    lo = tps - lookback_hours
    hi_side = "left" if open_at_tp else "right"
    for j, var in enumerate(variables):
        times, values = index.times_values(var)
        starts = np.searchsorted(times, lo, side="right")
        ends = np.searchsorted(times, tps, side=hi_side)
        if bounds is not None:
            bounds[var] = (starts, ends)
        col = 4 * j
        for i in range(m):
            s, e = starts[i], ends[i]
            if e > s:
                window = values[s:e]
                mn = window.min()
                mx = window.max()
                mean = window.mean()
                # Guard against summation round-off on near-constant windows.
                out[i, col] = mn
                out[i, col + 1] = min(max(mean, mn), mx)
                out[i, col + 2] = mx
                out[i, col + 3] = e - s
            else:
                out[i, col] = np.nan
                out[i, col + 1] = np.nan
                out[i, col + 2] = np.nan
                out[i, col + 3] = 0.0
    return out


def demographic_vector(admission: Admission, dictionary: FeatureDictionary) -> np.ndarray:
    return np.array(
        [1.0 if f in admission.demographics else 0.0 for f in dictionary.demographic_flags],
        dtype=np.float64,
    )


def summarize_window(
    admission: Admission,
    t_p: float,
    lookback_hours: float,
    dictionary: FeatureDictionary,
    open_at_tp: bool = False,
) -> np.ndarray:
    """Raw feature vector (length dictionary.d) for one prediction time."""
    if dictionary.d == 0:
        raise ValueError("feature dictionary is empty")
    if lookback_hours <= 0:
        raise ValueError("lookback_hours must be positive")
    index = AdmissionEventIndex(admission)
    block = window_summaries(index, [t_p], lookback_hours, dictionary.variables, open_at_tp)
    return np.concatenate([block[0], demographic_vector(admission, dictionary)])


@dataclass(frozen=True)
class Standardizer:
    """Per-feature mean/std fitted on training examples only. std is floored
    at STD_FLOOR so constant features standardize to exactly 0."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def d(self) -> int:
        return len(self.mean)


def fit_standardizer(feature_matrix: np.ndarray) -> Standardizer:
    """Fit on the raw training matrix (rows = training examples).

    NaN entries mark missing summaries; they are imputed to the feature's
    training mean before the population std is taken. A feature with no
    observed training values gets mean 0.
    """
    x = np.asarray(feature_matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a 2-D matrix with at least one training example")
    missing = np.isnan(x)
    observed = (~missing).sum(axis=0)
    sums = np.where(missing, 0.0, x).sum(axis=0)
    mean = np.divide(sums, observed, out=np.zeros(x.shape[1]), where=observed > 0)
    imputed = np.where(missing, mean, x)
    std = imputed.std(axis=0)
    return Standardizer(mean=mean, std=np.maximum(std, STD_FLOOR))


def apply_standardizer(standardizer: Standardizer, raw: np.ndarray) -> np.ndarray:
    """Impute missing entries to the training mean, then z-score."""
    x = np.asarray(raw, dtype=np.float64)
    if x.shape[-1] != standardizer.d:
        raise ValueError(f"feature length {x.shape[-1]} != standardizer d={standardizer.d}")
    imputed = np.where(np.isnan(x), standardizer.mean, x)
    return (imputed - standardizer.mean) / standardizer.std
