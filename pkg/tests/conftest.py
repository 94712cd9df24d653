import numpy as np
import pytest

from predex.core import Admission, Cohort, ObservationEvent


def make_admission(adm_id="A1", los=48.0, events=(), flags=(), died=False):
    evs = tuple(
        ObservationEvent(var, float(t), float(v))
        for var, t, v in sorted(events, key=lambda e: e[1])
    )
    return Admission(
        id=adm_id,
        los_hours=float(los),
        demographics=frozenset(flags),
        events=evs,
        died_in_hospital=died,
    )


def make_cohort(admissions, variables=None, flags=None):
    if variables is None:
        variables = sorted({e.variable_id for a in admissions for e in a.events})
    if flags is None:
        flags = sorted({f for a in admissions for f in a.demographics})
    return Cohort(tuple(admissions), tuple(variables), tuple(flags))


def random_event_stream(rng, variable="potassium", los=None, max_events=12,
                        value_lo=2.5, value_hi=5.5):
    """A small random admission holding one variable's measurements."""
    if los is None:
        los = float(rng.uniform(4.0, 120.0))
    n = int(rng.integers(0, max_events + 1))
    times = np.sort(rng.uniform(0.0, los, size=n))
    events = [(variable, float(t), float(rng.uniform(value_lo, value_hi))) for t in times]
    return make_admission(adm_id=f"R{rng.integers(1e9)}", los=los, events=events)


@pytest.fixture(scope="session")
def small_cohort():
    a1 = make_admission(
        "A1",
        los=100.0,
        events=[("glucose", 3.0, 3.0), ("glucose", 5.0, 5.0), ("glucose", 9.0, 7.0),
                ("potassium", 10.0, 3.0), ("potassium", 30.0, 4.1)],
        flags=("age_65_plus",),
        died=False,
    )
    a2 = make_admission(
        "A2",
        los=80.0,
        events=[("glucose", 2.0, 4.2), ("potassium", 5.0, 3.4), ("potassium", 40.0, 3.9)],
        flags=("male",),
        died=True,
    )
    return make_cohort([a1, a2], flags=("age_65_plus", "male"))
