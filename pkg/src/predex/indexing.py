"""Prediction-time generation, horizon labeling, and dataset assembly.

An anchor scheme decides *when* a model is applied; a horizon decides *what*
each prediction is about. Admission-anchored schemes are outcome-independent
and valid for evaluation; event-anchored schemes look backward from the
outcome and are for training experiments only. On-demand tasks predict the
value of a test at the moment it is ordered (degenerate-zero horizon).

Window conventions (shared with the features module):
  lookback = (t_p - lookback, t_p]   closed at t_p
  horizon  = (t_p, t_p + h]          open at t_p
  on-demand lookback is open at t_p, so the predicted measurement never
  enters its own feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .core import Admission, AdmissionEventIndex, Cohort
from .features import FeatureDictionary, demographic_vector, window_summaries

TERMINAL_EVENT = "terminal_event"
THRESHOLD_EVENT = "threshold_event"
OBSERVED_OR_HOLD = "observed_or_hold"
OBSERVED_ONLY = "observed_only"
BELOW = "below"
ABOVE = "above"


@dataclass(frozen=True)
class AdmissionAnchored:
    """Predict at first_offset after admission; with repeat_interval_hours set,
    keep predicting on that cadence until the end of the stay."""

    first_offset_hours: float
    repeat_interval_hours: float | None = None

    def __post_init__(self):
        if self.first_offset_hours < 0:
            raise ValueError("first_offset_hours must be >= 0")
        if self.repeat_interval_hours is not None and self.repeat_interval_hours <= 0:
            raise ValueError("repeat_interval_hours must be positive")


@dataclass(frozen=True)
class EventAnchored:
    """Predict lead_hours before the outcome event (death/discharge for
    terminal tasks, each outcome measurement for threshold tasks). With
    repeat_interval_hours set (terminal tasks only), step backward from the
    end of the stay on that cadence."""

    lead_hours: float
    repeat_interval_hours: float | None = None

    def __post_init__(self):
        if self.lead_hours < 0:
            raise ValueError("lead_hours must be >= 0")
        if self.repeat_interval_hours is not None and self.repeat_interval_hours <= 0:
            raise ValueError("repeat_interval_hours must be positive")


@dataclass(frozen=True)
class OnDemand:
    """Predict at each outcome measurement time; the measurement itself is the
    label and is excluded from features."""


AnchorScheme = Union[AdmissionAnchored, EventAnchored, OnDemand]


@dataclass(frozen=True)
class FixedHorizon:
    h_hours: float

    def __post_init__(self):
        if self.h_hours <= 0:
            raise ValueError("h_hours must be positive")


@dataclass(frozen=True)
class RemainderOfAdmission:
    pass


Horizon = Union[FixedHorizon, RemainderOfAdmission]


@dataclass(frozen=True)
class TaskSpec:
    """Declarative description of a prediction task.

    terminal_event tasks label every prediction with the admission's terminal
    outcome (remainder-of-stay horizon). threshold_event tasks label from the
    outcome variable's measurements inside the horizon window, with optional
    copy-and-hold imputation when the window is empty. On-demand anchoring is
    only meaningful for threshold tasks and carries no horizon.
    """

    task_kind: str
    anchor: AnchorScheme
    lookback_hours: float
    horizon: Horizon | None = None
    outcome_variable: str | None = None
    threshold: float | None = None
    direction: str = BELOW
    label_policy: str = OBSERVED_OR_HOLD

    def __post_init__(self):
        if self.task_kind not in (TERMINAL_EVENT, THRESHOLD_EVENT):
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        if self.label_policy not in (OBSERVED_OR_HOLD, OBSERVED_ONLY):
            raise ValueError(f"unknown label_policy {self.label_policy!r}")
        if self.direction not in (BELOW, ABOVE):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.lookback_hours <= 0:
            raise ValueError("lookback_hours must be positive")
        if isinstance(self.anchor, OnDemand) and self.task_kind != THRESHOLD_EVENT:
            raise ValueError("on-demand anchoring requires a threshold_event task")
        if self.task_kind == TERMINAL_EVENT:
            if not isinstance(self.horizon, RemainderOfAdmission):
                raise ValueError("terminal_event tasks require a remainder-of-admission horizon")
            if self.outcome_variable is not None or self.threshold is not None:
                raise ValueError("terminal_event tasks take no outcome_variable/threshold")
        else:
            if self.outcome_variable is None or self.threshold is None:
                raise ValueError("threshold_event tasks require outcome_variable and threshold")
            if isinstance(self.anchor, OnDemand):
                if self.horizon is not None:
                    raise ValueError("on-demand tasks have a degenerate-zero horizon; omit it")
            elif not isinstance(self.horizon, FixedHorizon):
                raise ValueError("threshold_event tasks require a fixed horizon")
        if (
            isinstance(self.anchor, EventAnchored)
            and self.anchor.repeat_interval_hours is not None
            and self.task_kind != TERMINAL_EVENT
        ):
            raise ValueError("rolling event-anchored extraction is defined for terminal tasks only")

    def satisfies(self, value: float) -> bool:
        if self.threshold is None:
            raise ValueError("task has no threshold")
        return value < self.threshold if self.direction == BELOW else value > self.threshold


@dataclass(frozen=True)
class PredictionPoint:
    admission_id: str
    t_p: float


@dataclass(eq=False)
class Example:
    admission_id: str
    t_p: float
    features: np.ndarray
    label: int


@dataclass(eq=False)
class Dataset:
    examples: list[Example]
    feature_dictionary: FeatureDictionary
    task: TaskSpec
    n_dropped: int = 0
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.examples)

    def feature_matrix(self) -> np.ndarray:
        if self._matrix is None:
            d = self.feature_dictionary.d
            if self.examples:
                self._matrix = np.vstack([ex.features for ex in self.examples])
            else:
                self._matrix = np.empty((0, d), dtype=np.float64)
        return self._matrix

    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def admission_ids(self) -> list[str]:
        return [ex.admission_id for ex in self.examples]

    def subset(self, admission_ids) -> "Dataset":
        wanted = set(admission_ids)
        kept = [ex for ex in self.examples if ex.admission_id in wanted]
        return Dataset(kept, self.feature_dictionary, self.task, n_dropped=self.n_dropped)


def prediction_times(admission: Admission, spec: TaskSpec) -> list[PredictionPoint]:
    """All prediction times for one admission under the spec's anchor scheme,
    sorted ascending and deduplicated. An empty list is a valid result."""
    anchor = spec.anchor
    los = admission.los_hours
    times: list[float] = []
    if isinstance(anchor, AdmissionAnchored):
        if anchor.repeat_interval_hours is None:
            if anchor.first_offset_hours <= los:
                times.append(anchor.first_offset_hours)
        else:
            j = 0
            while True:
                t = anchor.first_offset_hours + j * anchor.repeat_interval_hours
                if t > los:
                    break
                times.append(t)
                j += 1
    elif isinstance(anchor, EventAnchored):
        if spec.task_kind == TERMINAL_EVENT:
            if anchor.repeat_interval_hours is None:
                t = los - anchor.lead_hours
                if t >= 0:
                    times.append(t)
            else:
                j = 0
                while True:
                    t = los - anchor.lead_hours - j * anchor.repeat_interval_hours
                    if t < 0:
                        break
                    times.append(t)
                    j += 1
        else:
            ev_times, _ = AdmissionEventIndex(admission).times_values(spec.outcome_variable)
            for te in ev_times:
                t = float(te) - anchor.lead_hours
                if t >= 0:
                    times.append(t)
    else:  # OnDemand
        ev_times, _ = AdmissionEventIndex(admission).times_values(spec.outcome_variable)
        times.extend(float(t) for t in ev_times)
    uniq = sorted(set(times))
    return [PredictionPoint(admission.id, t) for t in uniq]


def label_at(
    admission: Admission,
    t_p: float,
    spec: TaskSpec,
    _index: AdmissionEventIndex | None = None,
) -> int | None:
    """Label for one prediction time; None means the example is dropped.

    terminal_event: the admission's terminal outcome, for every t_p.
    threshold_event, fixed horizon h: 1 iff any outcome measurement in
    (t_p, t_p + h] satisfies the threshold; with an empty window and the
    observed-or-hold policy, the threshold is applied to the most recent
    measurement at time <= t_p; otherwise the example is dropped.
    on-demand: the threshold applied to the measurement(s) at exactly t_p
    (simultaneous re-runs are combined by disjunction).
    """
    if spec.task_kind == TERMINAL_EVENT:
        return int(admission.died_in_hospital)
    index = _index if _index is not None else AdmissionEventIndex(admission)
    if isinstance(spec.anchor, OnDemand):
        times, values = index.times_values(spec.outcome_variable)
        start = int(np.searchsorted(times, t_p, side="left"))
        end = int(np.searchsorted(times, t_p, side="right"))
        if end == start:
            raise ValueError(f"no {spec.outcome_variable!r} measurement at t_p={t_p}")
        return int(any(spec.satisfies(float(v)) for v in values[start:end]))
    h = spec.horizon.h_hours
    window = index.values_in_window(spec.outcome_variable, t_p, t_p + h, include_hi=True)
    if len(window):
        return int(any(spec.satisfies(float(v)) for v in window))
    if spec.label_policy == OBSERVED_OR_HOLD:
        held = index.last_value_at_or_before(spec.outcome_variable, t_p)
        if held is not None:
            return int(spec.satisfies(held))
    return None


ProbeFn = Callable[[str, float, str, float], None]


def extract_dataset(
    cohort: Cohort,
    spec: TaskSpec,
    dictionary: FeatureDictionary,
    probe: ProbeFn | None = None,
) -> Dataset:
    """Assemble (features, label) examples for every prediction time in the cohort.

    Dropped labels produce no example; per-admission examples come out sorted
    by t_p. `probe`, when given, is called as probe(admission_id, t_p,
    variable_id, event_time) for every event the feature summaries actually
    consumed, for leakage auditing.
    """
    if dictionary.d == 0:
        raise ValueError("feature dictionary is empty")
    missing = [v for v in dictionary.variables if v not in set(cohort.variable_dictionary)]
    if missing:
        raise ValueError(f"dictionary variables not in cohort dictionary: {missing}")
    open_at_tp = isinstance(spec.anchor, OnDemand)
    examples: list[Example] = []
    n_dropped = 0
    for admission in cohort.admissions:
        points = prediction_times(admission, spec)
        if not points:
            continue
        index = AdmissionEventIndex(admission)
        tps = [p.t_p for p in points]
        bounds: dict[str, tuple[np.ndarray, np.ndarray]] | None = {} if probe else None
        block = window_summaries(
            index, tps, spec.lookback_hours, dictionary.variables, open_at_tp, bounds
        )
        demo = demographic_vector(admission, dictionary)
        if probe is not None:
            for var, (starts, ends) in bounds.items():
                times, _ = index.times_values(var)
                for i, t_p in enumerate(tps):
                    for t_ev in times[starts[i] : ends[i]]:
                        probe(admission.id, t_p, var, float(t_ev))
        for i, t_p in enumerate(tps):
            label = label_at(admission, t_p, spec, _index=index)
            if label is None:
                n_dropped += 1
                continue
            examples.append(
                Example(admission.id, t_p, np.concatenate([block[i], demo]), label)
            )
    return Dataset(examples, dictionary, spec, n_dropped=n_dropped)


# ---------------------------------------------------------------------------
# Dataset CSV export / import
# ---------------------------------------------------------------------------


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Columns: admission_id,t_p,label,f_0,...,f_{d-1}. Missing entries are `nan`."""
    d = dataset.feature_dictionary.d
    header = ["admission_id", "t_p", "label"] + [f"f_{i}" for i in range(d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for ex in dataset.examples:
            feats = ",".join(repr(float(v)) for v in ex.features)
            fh.write(f"{ex.admission_id},{ex.t_p!r},{ex.label},{feats}\n")


def read_dataset_csv(path, dictionary: FeatureDictionary, task: TaskSpec | None = None) -> Dataset:
    examples: list[Example] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split(",")
        if len(header) != 3 + dictionary.d or header[:3] != ["admission_id", "t_p", "label"]:
            raise ValueError(f"dataset file does not match dictionary (d={dictionary.d})")
        for raw in fh:
            if not raw.strip():
                continue
            parts = raw.rstrip("\r\n").split(",")
            feats = np.array([float(x) for x in parts[3:]], dtype=np.float64)
            examples.append(Example(parts[0], float(parts[1]), feats, int(parts[2])))
    return Dataset(examples, dictionary, task)


# ---------------------------------------------------------------------------
# Dict codecs for configs, manifests, and model files
# ---------------------------------------------------------------------------


def anchor_to_dict(anchor: AnchorScheme) -> dict:
    if isinstance(anchor, AdmissionAnchored):
        out = {"scheme": "admission", "first_offset_hours": anchor.first_offset_hours}
        if anchor.repeat_interval_hours is not None:
            out["repeat_interval_hours"] = anchor.repeat_interval_hours
        return out
    if isinstance(anchor, EventAnchored):
        out = {"scheme": "event", "lead_hours": anchor.lead_hours}
        if anchor.repeat_interval_hours is not None:
            out["repeat_interval_hours"] = anchor.repeat_interval_hours
        return out
    return {"scheme": "on_demand"}


def anchor_from_dict(obj: dict) -> AnchorScheme:
    scheme = obj.get("scheme")
    if scheme == "admission":
        return AdmissionAnchored(
            float(obj["first_offset_hours"]),
            None if obj.get("repeat_interval_hours") is None else float(obj["repeat_interval_hours"]),
        )
    if scheme == "event":
        return EventAnchored(
            float(obj["lead_hours"]),
            None if obj.get("repeat_interval_hours") is None else float(obj["repeat_interval_hours"]),
        )
    if scheme == "on_demand":
        return OnDemand()
    raise ValueError(f"unknown anchor scheme {scheme!r}")


def task_to_dict(spec: TaskSpec) -> dict:
    out: dict = {
        "kind": spec.task_kind,
        "anchor": anchor_to_dict(spec.anchor),
        "lookback_hours": spec.lookback_hours,
        "label_policy": spec.label_policy,
    }
    if isinstance(spec.horizon, RemainderOfAdmission):
        out["horizon"] = "remainder"
    elif isinstance(spec.horizon, FixedHorizon):
        out["horizon"] = spec.horizon.h_hours
    if spec.outcome_variable is not None:
        out["outcome_variable"] = spec.outcome_variable
        out["threshold"] = spec.threshold
        out["direction"] = spec.direction
    return out


def task_from_dict(obj: dict) -> TaskSpec:
    anchor = anchor_from_dict(obj["anchor"])
    horizon: Horizon | None
    raw_h = obj.get("horizon")
    if isinstance(anchor, OnDemand):
        horizon = None
    elif raw_h == "remainder":
        horizon = RemainderOfAdmission()
    elif raw_h is None:
        horizon = None
    else:
        horizon = FixedHorizon(float(raw_h))
    threshold = obj.get("threshold")
    return TaskSpec(
        task_kind=obj["kind"],
        anchor=anchor,
        lookback_hours=float(obj["lookback_hours"]),
        horizon=horizon,
        outcome_variable=obj.get("outcome_variable"),
        threshold=None if threshold is None else float(threshold),
        direction=obj.get("direction", BELOW),
        label_policy=obj.get("label_policy", OBSERVED_OR_HOLD),
    )


def merge_task_dict(base_obj: dict, overrides: dict) -> TaskSpec:
    """Merge a (possibly anchor-less) base task mapping with per-arm overrides
    and build the TaskSpec. On-demand anchors drop any inherited horizon."""
    obj = dict(base_obj)
    for key, value in overrides.items():
        if key not in ("anchor", "horizon", "lookback_hours", "label_policy",
                       "outcome_variable", "threshold", "direction", "kind"):
            raise ValueError(f"unknown task override {key!r}")
        obj[key] = value
    if "anchor" not in obj:
        raise ValueError("task needs an anchor (from the base task or the arm override)")
    if obj["anchor"].get("scheme") == "on_demand":
        obj.pop("horizon", None)
    return task_from_dict(obj)


def override_task(base: TaskSpec, overrides: dict) -> TaskSpec:
    """Apply an arm's partial task override (anchor and/or scalar fields)."""
    return merge_task_dict(task_to_dict(base), overrides)
