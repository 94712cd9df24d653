"""Domain model for event-stream cohorts: admissions, observation events,
ingestion from CSV/JSONL, validation, and prevalence filtering.

All times are hours since the start of the enclosing admission. A Cohort is
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

ADMISSION_HEADER = ["admission_id", "los_hours", "died_in_hospital", "demo_flags"]
EVENT_HEADER = ["admission_id", "variable_id", "time_hours", "value"]


class IngestError(ValueError):
    """Malformed or inconsistent input data. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None, source: str = ""):
        self.line = line
        self.source = source
        where = f"{source or 'input'}"
        if line is not None:
            where += f", line {line}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True, slots=True)
class ObservationEvent:
    variable_id: str
    time: float
    value: float


@dataclass(frozen=True)
class Admission:
    """One hospital stay: static flags plus a time-sorted observation stream."""

    id: str
    los_hours: float
    demographics: frozenset[str]
    events: tuple[ObservationEvent, ...]
    died_in_hospital: bool


@dataclass(frozen=True)
class Cohort:
    admissions: tuple[Admission, ...]
    variable_dictionary: tuple[str, ...]
    demographic_dictionary: tuple[str, ...]

    def admission_ids(self) -> list[str]:
        return [a.id for a in self.admissions]

    def by_id(self) -> dict[str, Admission]:
        return {a.id: a for a in self.admissions}

    def subset(self, ids: Iterable[str]) -> "Cohort":
        """Admissions restricted to `ids`, preserving cohort order and dictionaries."""
        wanted = set(ids)
        kept = tuple(a for a in self.admissions if a.id in wanted)
        return Cohort(kept, self.variable_dictionary, self.demographic_dictionary)


@dataclass
class ValidationReport:
    n_admissions: int
    n_events: int
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


class AdmissionEventIndex:
    """Per-variable sorted (times, values) arrays for one admission.

    Build once per admission when many windows are evaluated; lookups are
    O(log n) via searchsorted.
    """

    __slots__ = ("admission", "_by_var", "_empty")

    def __init__(self, admission: Admission):
        self.admission = admission
        grouped: dict[str, tuple[list[float], list[float]]] = {}
        for ev in admission.events:
            slot = grouped.get(ev.variable_id)
            if slot is None:
                slot = ([], [])
                grouped[ev.variable_id] = slot
            slot[0].append(ev.time)
            slot[1].append(ev.value)
        self._by_var = {
            var: (np.asarray(t, dtype=np.float64), np.asarray(v, dtype=np.float64))
            for var, (t, v) in grouped.items()
        }
        self._empty = (np.empty(0, dtype=np.float64), np.empty(0, dtype=np.float64))

    def times_values(self, variable_id: str) -> tuple[np.ndarray, np.ndarray]:
        return self._by_var.get(variable_id, self._empty)

    def last_value_at_or_before(self, variable_id: str, t: float) -> float | None:
        times, values = self.times_values(variable_id)
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i < 0:
            return None
        return float(values[i])

    def values_in_window(
        self, variable_id: str, lo: float, hi: float, include_hi: bool = True
    ) -> np.ndarray:
        """Values with time in (lo, hi] (or (lo, hi) when include_hi is False)."""
        times, values = self.times_values(variable_id)
        start = int(np.searchsorted(times, lo, side="right"))
        end = int(np.searchsorted(times, hi, side="right" if include_hi else "left"))
        return values[start:end]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _as_text(stream: IO, source: str) -> IO[str]:
    if isinstance(stream, (str, Path)):
        raise TypeError(f"{source}: expected an open stream, got a path; use the load_* helpers")
    if isinstance(stream, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(stream, "mode", ""):
        return io.TextIOWrapper(stream, encoding="utf-8", newline="")
    return stream


def _parse_finite(raw: str, what: str, source: str, line: int) -> float:
    try:
        x = float(raw)
    except ValueError:
        raise IngestError(f"unparseable {what} {raw!r}", line, source) from None
    if not math.isfinite(x):
        raise IngestError(f"non-finite {what} {raw!r}", line, source)
    return x


def _split_csv_row(raw_line: str, n_cols: int, source: str, line: int) -> list[str]:
    row = raw_line.rstrip("\r\n").split(",")
    if len(row) != n_cols:
        raise IngestError(f"expected {n_cols} columns, found {len(row)}", line, source)
    return row


def ingest_cohort(event_file: IO, admission_file: IO) -> Cohort:
    """Read the two-file CSV cohort format into a validated Cohort.

    Events are sorted per admission (stable); duplicate rows are kept. The
    variable and demographic dictionaries are the sorted sets observed in the
    data. Any malformed row, unknown admission reference, or out-of-range
    event time raises IngestError naming the offending line.
    """
    adm_text = _as_text(admission_file, "admissions")
    header = adm_text.readline()
    if header.rstrip("\r\n").split(",") != ADMISSION_HEADER:
        raise IngestError(f"bad header, expected {','.join(ADMISSION_HEADER)}", 1, "admissions")

    order: list[str] = []
    los: dict[str, float] = {}
    died: dict[str, bool] = {}
    demos: dict[str, frozenset[str]] = {}
    for lineno, raw in enumerate(adm_text, start=2):
        if not raw.strip():
            continue
        adm_id, los_raw, died_raw, flags_raw = _split_csv_row(raw, 4, "admissions", lineno)
        if not adm_id:
            raise IngestError("empty admission_id", lineno, "admissions")
        if adm_id in los:
            raise IngestError(f"duplicate admission_id {adm_id!r}", lineno, "admissions")
        los_val = _parse_finite(los_raw, "los_hours", "admissions", lineno)
        if los_val <= 0:
            raise IngestError(f"los_hours must be positive, got {los_raw}", lineno, "admissions")
        if died_raw not in ("0", "1"):
            raise IngestError(f"died_in_hospital must be 0 or 1, got {died_raw!r}", lineno, "admissions")
        order.append(adm_id)
        los[adm_id] = los_val
        died[adm_id] = died_raw == "1"
        demos[adm_id] = frozenset(f for f in flags_raw.split(";") if f)

    ev_text = _as_text(event_file, "events")
    header = ev_text.readline()
    if header.rstrip("\r\n").split(",") != EVENT_HEADER:
        raise IngestError(f"bad header, expected {','.join(EVENT_HEADER)}", 1, "events")

    events: dict[str, list[ObservationEvent]] = {a: [] for a in order}
    for lineno, raw in enumerate(ev_text, start=2):
        if not raw.strip():
            continue
        adm_id, var_id, time_raw, value_raw = _split_csv_row(raw, 4, "events", lineno)
        if adm_id not in los:
            raise IngestError(f"event references unknown admission {adm_id!r}", lineno, "events")
        if not var_id:
            raise IngestError("empty variable_id", lineno, "events")
        t = _parse_finite(time_raw, "time_hours", "events", lineno)
        if t < 0:
            raise IngestError(f"negative event time {time_raw}", lineno, "events")
        if t > los[adm_id]:
            raise IngestError(
                f"event time {time_raw} exceeds los_hours {los[adm_id]} of admission {adm_id!r}",
                lineno,
                "events",
            )
        v = _parse_finite(value_raw, "value", "events", lineno)
        events[adm_id].append(ObservationEvent(var_id, t, v))

    admissions = tuple(
        Admission(
            id=adm_id,
            los_hours=los[adm_id],
            demographics=demos[adm_id],
            events=tuple(sorted(events[adm_id], key=lambda e: e.time)),
            died_in_hospital=died[adm_id],
        )
        for adm_id in order
    )
    variables = sorted({e.variable_id for a in admissions for e in a.events})
    flags = sorted({f for a in admissions for f in a.demographics})
    return Cohort(admissions, tuple(variables), tuple(flags))


def write_cohort_csv(cohort: Cohort, admission_path: str | Path, event_path: str | Path) -> None:
    with open(admission_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(ADMISSION_HEADER) + "\n")
        for a in cohort.admissions:
            flags = ";".join(sorted(a.demographics))
            fh.write(f"{a.id},{a.los_hours!r},{int(a.died_in_hospital)},{flags}\n")
    with open(event_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(EVENT_HEADER) + "\n")
        for a in cohort.admissions:
            for e in a.events:
                fh.write(f"{a.id},{e.variable_id},{e.time!r},{e.value!r}\n")


def load_cohort_csv(admission_path: str | Path, event_path: str | Path) -> Cohort:
    with open(event_path, "rb") as ev, open(admission_path, "rb") as adm:
        return ingest_cohort(ev, adm)


def write_cohort_jsonl(cohort: Cohort, path: str | Path) -> None:
    """Line-delimited JSON: one admission object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for a in cohort.admissions:
            obj = {
                "admission_id": a.id,
                "los_hours": a.los_hours,
                "died_in_hospital": a.died_in_hospital,
                "demographics": sorted(a.demographics),
                "events": [[e.variable_id, e.time, e.value] for e in a.events],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_cohort_jsonl(path: str | Path) -> Cohort:
    admissions: list[Admission] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid JSON ({exc.msg})", lineno, str(path)) from None
            try:
                adm_id = str(obj["admission_id"])
                los_val = float(obj["los_hours"])
                died_val = bool(obj["died_in_hospital"])
                flags = frozenset(str(f) for f in obj["demographics"])
                raw_events = obj["events"]
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"bad admission object: {exc}", lineno, str(path)) from None
            if adm_id in seen:
                raise IngestError(f"duplicate admission_id {adm_id!r}", lineno, str(path))
            if not (math.isfinite(los_val) and los_val > 0):
                raise IngestError(f"los_hours must be positive, got {los_val}", lineno, str(path))
            events = []
            for item in raw_events:
                var_id, t, v = str(item[0]), float(item[1]), float(item[2])
                if t < 0 or t > los_val:
                    raise IngestError(f"event time {t} outside [0, {los_val}]", lineno, str(path))
                if not math.isfinite(v):
                    raise IngestError(f"non-finite value for {var_id!r}", lineno, str(path))
                events.append(ObservationEvent(var_id, t, v))
            seen.add(adm_id)
            admissions.append(
                Admission(
                    id=adm_id,
                    los_hours=los_val,
                    demographics=flags,
                    events=tuple(sorted(events, key=lambda e: e.time)),
                    died_in_hospital=died_val,
                )
            )
    variables = sorted({e.variable_id for a in admissions for e in a.events})
    all_flags = sorted({f for a in admissions for f in a.demographics})
    return Cohort(tuple(admissions), tuple(variables), tuple(all_flags))


def load_cohort(path: str | Path) -> Cohort:
    """Dispatch on path: a .jsonl file, or a directory holding
    admissions.csv + events.csv."""
    p = Path(path)
    if p.is_dir():
        return load_cohort_csv(p / "admissions.csv", p / "events.csv")
    if p.suffix == ".jsonl":
        return read_cohort_jsonl(p)
    raise ValueError(f"cannot infer cohort format from {p}; pass a .jsonl file or a directory")


# ---------------------------------------------------------------------------
# Validation and prevalence filtering
# ---------------------------------------------------------------------------


def validate(cohort: Cohort) -> ValidationReport:
    """Check every Admission/Cohort invariant; violations are reported, not raised."""
    report = ValidationReport(
        n_admissions=len(cohort.admissions),
        n_events=sum(len(a.events) for a in cohort.admissions),
    )
    known_vars = set(cohort.variable_dictionary)
    known_flags = set(cohort.demographic_dictionary)
    seen_ids: set[str] = set()
    for a in cohort.admissions:
        if a.id in seen_ids:
            report.errors.append((a.id, "duplicate admission id"))
        seen_ids.add(a.id)
        if not (math.isfinite(a.los_hours) and a.los_hours > 0):
            report.errors.append((a.id, f"los_hours must be positive, got {a.los_hours}"))
        prev = -math.inf
        for e in a.events:
            if e.time < prev:
                report.errors.append((a.id, f"events not sorted at t={e.time}"))
                prev = e.time
                continue
            prev = e.time
            if e.time < 0:
                report.errors.append((a.id, f"negative event time {e.time}"))
            if e.time > a.los_hours:
                report.errors.append((a.id, f"event time {e.time} exceeds los_hours {a.los_hours}"))
            if not math.isfinite(e.value):
                report.errors.append((a.id, f"non-finite value for {e.variable_id!r}"))
            if e.variable_id not in known_vars:
                report.errors.append((a.id, f"variable {e.variable_id!r} not in variable_dictionary"))
        if not a.events:
            report.warnings.append(f"admission {a.id!r} has no events")
        unknown = a.demographics - known_flags
        if unknown:
            report.warnings.append(
                f"admission {a.id!r} has flags outside demographic_dictionary: {sorted(unknown)}"
            )
    return report


def filter_variables_by_prevalence(cohort: Cohort, min_fraction: float) -> list[str]:
    """Variables measured at least once in >= ceil(min_fraction * n_admissions)
    admissions, in dictionary order."""
    if not 0.0 <= min_fraction <= 1.0:
        raise ValueError(f"min_fraction must be in [0, 1], got {min_fraction}")
    n = len(cohort.admissions)
    # The small backoff keeps ceil exact when min_fraction * n is an integer
    # up to float rounding (e.g. 0.05 * 100).
    needed = max(0, math.ceil(min_fraction * n - 1e-9))
    counts: dict[str, int] = {v: 0 for v in cohort.variable_dictionary}
    for a in cohort.admissions:
        for v in {e.variable_id for e in a.events}:
            if v in counts:
                counts[v] += 1
    return [v for v in cohort.variable_dictionary if counts[v] >= needed]
