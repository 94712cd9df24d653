import numpy as np
import pytest

from predex.metrics import (
    EvalReport,
    PredictionSet,
    UndefinedAUROCError,
    aggregate_repeats,
    auroc,
    patient_level_auroc,
)


def brute_force_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def max_reduction_auroc(predictions):
    best: dict[str, float] = {}
    label: dict[str, int] = {}
    for adm_id, _, score, y in predictions.records:
        best[adm_id] = max(best.get(adm_id, -np.inf), score)
        label[adm_id] = y
    ids = sorted(best)
    return auroc([best[i] for i in ids], [label[i] for i in ids])


def test_perfect_ranking():
    assert auroc([0.9, 0.1], [1, 0]) == 1.0


def test_tie_convention():
    assert auroc([0.5, 0.5], [1, 0]) == 0.5


def test_hand_enumerated_pairs():
    # positives at 0.4, 0.8; negatives at 0.2, 0.6 -> 3 of 4 pairs concordant
    assert auroc([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]) == 0.75


def test_single_class_undefined():
    with pytest.raises(UndefinedAUROCError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedAUROCError):
        auroc([0.1, 0.2], [0, 0])


def test_monotone_transform_invariance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(5, 60))
        scores = rng.normal(size=n)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            continue
        base = auroc(scores, labels)
        assert auroc(np.exp(2.0 * scores) + 3.0, labels) == base


def test_complement_identity():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(4, 40))
        scores = rng.choice([0.1, 0.2, 0.5, 0.9], size=n)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            continue
        assert auroc(scores, labels) + auroc(scores, 1 - labels) == pytest.approx(1.0, abs=1e-14)


def test_matches_brute_force_exactly():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(4, 200))
        # discrete score support makes ties common
        scores = rng.choice(np.linspace(-1, 1, 11), size=n)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            continue
        assert auroc(scores, labels) == brute_force_auroc(scores, labels)


def _pred(records):
    return PredictionSet(records)


def test_patient_level_hand_cases():
    # A: max 0.9 beats B: 0.5
    p = _pred([("A", 1.0, 0.2, 1), ("A", 2.0, 0.9, 1), ("B", 1.0, 0.5, 0)])
    assert patient_level_auroc(p) == 1.0
    # A: 0.2 loses to B: max 0.5
    p = _pred([("A", 1.0, 0.2, 1), ("B", 1.0, 0.5, 0), ("B", 2.0, 0.1, 0)])
    assert patient_level_auroc(p) == 0.0


def test_patient_level_reduces_to_pointwise_for_single_predictions():
    rng = np.random.default_rng(3)
    scores = rng.normal(size=30)
    labels = np.array([1] * 10 + [0] * 20)
    records = [(f"A{i}", 0.0, float(s), int(y)) for i, (s, y) in enumerate(zip(scores, labels))]
    assert patient_level_auroc(_pred(records)) == pytest.approx(auroc(scores, labels), abs=1e-15)


def test_patient_level_conflicting_labels_rejected():
    with pytest.raises(ValueError, match="conflicting"):
        patient_level_auroc(_pred([("A", 0.0, 0.1, 1), ("A", 1.0, 0.2, 0), ("B", 0.0, 0.0, 0)]))


def test_patient_level_single_class_undefined():
    with pytest.raises(UndefinedAUROCError):
        patient_level_auroc(_pred([("A", 0.0, 0.1, 1), ("B", 0.0, 0.2, 1)]))


def test_threshold_sweep_equals_max_reduction():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        n_adm = int(rng.integers(2, 30))
        labels = rng.integers(0, 2, size=n_adm)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        records = []
        for i in range(n_adm):
            for j in range(int(rng.integers(1, 6))):
                score = float(rng.choice([-0.5, 0.0, 0.3, 0.7, 1.2]) + rng.integers(0, 2) * 0.0)
                records.append((f"A{i}", float(j), score, int(labels[i])))
        p = _pred(records)
        assert abs(patient_level_auroc(p) - max_reduction_auroc(p)) <= 1e-12


def test_aggregate_hand_values():
    rep = aggregate_repeats([0.8, 0.9])
    assert rep.mean == pytest.approx(0.85)
    assert rep.std == pytest.approx(0.05)  # population convention
    assert rep.n_repeats == 2
    assert rep.per_repeat_auroc == [0.8, 0.9]


def test_aggregate_degenerate():
    assert aggregate_repeats([0.7]).std == 0.0
    assert aggregate_repeats([0.6, 0.6, 0.6]).std == 0.0
    with pytest.raises(ValueError):
        aggregate_repeats([])


def test_report_recomputable():
    values = [0.71, 0.74, 0.69, 0.8]
    rep = aggregate_repeats(values, metadata={"task": "x"})
    arr = np.asarray(rep.per_repeat_auroc)
    assert rep.mean == pytest.approx(arr.mean())
    assert rep.std == pytest.approx(arr.std())
    assert rep.metadata == {"task": "x"}
