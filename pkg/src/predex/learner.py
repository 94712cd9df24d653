"""L2-regularized logistic classifier trained by damped Newton steps.

The objective over standardized features, with labels mapped to {-1, +1}, is

    f(w, b) = (1/n) sum_i log(1 + exp(-y_i (w.x_i + b))) + ||w||^2 / (2 c n)

so larger c means weaker regularization and the bias is unpenalized. Training
is full-batch and deterministic (w = 0, b = 0 start, backtracking line search,
no data shuffling), which makes every downstream report reproducible bit for
bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import Standardizer, apply_standardizer, fit_standardizer
from .indexing import Dataset, Example
from .metrics import auroc

HESSIAN_RIDGE = 1e-10  # fixed diagonal jitter so Newton solves stay well-posed


@dataclass(frozen=True)
class TrainConfig:
    c_grid: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
    max_iterations: int = 100
    tolerance: float = 1e-6
    step_policy: str = "damped_newton"

    def __post_init__(self):
        if not self.c_grid:
            raise ValueError("c_grid must be non-empty")
        if any(c <= 0 for c in self.c_grid):
            raise ValueError("c_grid values must be positive")
        if list(self.c_grid) != sorted(self.c_grid):
            raise ValueError("c_grid must be ascending")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.step_policy != "damped_newton":
            raise ValueError(f"unsupported step_policy {self.step_policy!r}")


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    standardizer: Standardizer
    c_selected: float
    feature_names: tuple[str, ...]
    converged: bool = True


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def objective_and_gradient(
    x: np.ndarray, y_pm: np.ndarray, w: np.ndarray, b: float, c: float
) -> tuple[float, np.ndarray, float]:
    """Value, weight gradient, and bias gradient of the training objective.

    x is the standardized matrix, y_pm in {-1, +1}.
    """
    n = len(y_pm)
    margins = y_pm * (x @ w + b)
    value = float(np.logaddexp(0.0, -margins).mean()) + float(w @ w) / (2.0 * c * n)
    # d/dm log(1 + e^{-m}) = -sigma(-m)
    sig_neg = _sigmoid(-margins)
    coeff = -y_pm * sig_neg / n
    grad_w = x.T @ coeff + w / (c * n)
    grad_b = float(coeff.sum())
    return value, grad_w, grad_b


def _newton_direction(
    x: np.ndarray, y_pm: np.ndarray, w: np.ndarray, grad: np.ndarray, c: float
) -> np.ndarray:
    n, d = x.shape
    margins = y_pm * (x @ w[:d] + w[d])
    sig = _sigmoid(margins)
    curv = sig * (1.0 - sig) / n  # per-example curvature
    xc = x * curv[:, None]
    h = np.empty((d + 1, d + 1))
    h[:d, :d] = x.T @ xc
    h[:d, :d] += np.eye(d) / (c * n)
    h[:d, d] = xc.sum(axis=0)
    h[d, :d] = h[:d, d]
    h[d, d] = curv.sum()
    h[np.diag_indices(d + 1)] += HESSIAN_RIDGE
    return np.linalg.solve(h, -grad)


def train(dataset: Dataset, c: float, config: TrainConfig | None = None) -> LinearModel:
    """Fit the classifier on a training dataset at regularization c.

    The standardizer is fitted on this dataset's raw features only, then
    features are imputed and z-scored before optimization. Raises on a
    single-class dataset or non-finite features.
    """
    if config is None:
        config = TrainConfig()
    if c <= 0:
        raise ValueError("c must be positive")
    if not dataset.examples:
        raise ValueError("empty training dataset")
    y = dataset.labels()
    if y.min() == y.max():
        raise ValueError("training dataset contains a single class")
    raw = dataset.feature_matrix()
    if np.isinf(raw).any():
        raise ValueError("non-finite feature value (NaN is the only missing marker)")
    standardizer = fit_standardizer(raw)
    x = apply_standardizer(standardizer, raw)
    if not np.isfinite(x).all():
        raise ValueError("non-finite feature after standardization")
    y_pm = np.where(y == 1, 1.0, -1.0)
    n, d = x.shape

    wb = np.zeros(d + 1)
    value, grad_w, grad_b = objective_and_gradient(x, y_pm, wb[:d], wb[d], c)
    grad = np.concatenate([grad_w, [grad_b]])
    converged = False
    for _ in range(config.max_iterations):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= config.tolerance:
            converged = True
            break
        direction = _newton_direction(x, y_pm, wb, grad, c)
        slope = float(grad @ direction)
        if slope >= 0:  # not a descent direction; fall back to steepest descent
            direction = -grad
            slope = -gnorm * gnorm
        step = 1.0
        accepted = False
        for _ in range(60):
            cand = wb + step * direction
            cand_value, cand_gw, cand_gb = objective_and_gradient(x, y_pm, cand[:d], cand[d], c)
            if cand_value <= value + 1e-4 * step * slope:
                wb = cand
                value = cand_value
                grad = np.concatenate([cand_gw, [cand_gb]])
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # objective cannot be decreased further at float precision
    if not converged:
        converged = float(np.linalg.norm(grad)) <= config.tolerance

    return LinearModel(
        weights=wb[:d].copy(),
        bias=float(wb[d]),
        standardizer=standardizer,
        c_selected=c,
        feature_names=dataset.feature_dictionary.entries,
        converged=converged,
    )


def select_c(dataset: Dataset, folds, config: TrainConfig | None = None) -> float:
    """Mean validation AUROC per grid value across admission-level folds;
    returns the argmax, breaking ties toward the smallest c."""
    if config is None:
        config = TrainConfig()
    best_c = None
    best_score = -np.inf
    for c in config.c_grid:
        scores = []
        for fit_ids, val_ids in folds:
            fit_ds = dataset.subset(fit_ids)
            val_ds = dataset.subset(val_ids)
            model = train(fit_ds, c, config)
            scores.append(auroc(decision_scores(model, val_ds), val_ds.labels()))
        mean_score = float(np.mean(scores))
        if mean_score > best_score:
            best_score = mean_score
            best_c = c
    return best_c


def decision_scores(model: LinearModel, examples) -> np.ndarray:
    """w . standardize(x) + b for a Dataset, a list of Examples, or a raw matrix."""
    if isinstance(examples, Dataset):
        raw = examples.feature_matrix()
    elif isinstance(examples, np.ndarray):
        raw = examples
    else:
        raw = np.vstack([ex.features for ex in examples]) if examples else np.empty((0, len(model.weights)))
    if raw.ndim == 1:
        raw = raw[None, :]
    if raw.shape[1] != len(model.weights):
        raise ValueError(f"feature length {raw.shape[1]} != model d={len(model.weights)}")
    x = apply_standardizer(model.standardizer, raw)
    return x @ model.weights + model.bias


def save_model(model: LinearModel, path: str | Path) -> None:
    obj = {
        "feature_names": list(model.feature_names),
        "weights": [float(w) for w in model.weights],
        "bias": model.bias,
        "standardizer_mean": [float(v) for v in model.standardizer.mean],
        "standardizer_std": [float(v) for v in model.standardizer.std],
        "c_selected": model.c_selected,
    }
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> LinearModel:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return LinearModel(
        weights=np.asarray(obj["weights"], dtype=np.float64),
        bias=float(obj["bias"]),
        standardizer=Standardizer(
            mean=np.asarray(obj["standardizer_mean"], dtype=np.float64),
            std=np.asarray(obj["standardizer_std"], dtype=np.float64),
        ),
        c_selected=float(obj["c_selected"]),
        feature_names=tuple(obj["feature_names"]),
    )
