"""Config-driven experiment runner.

An experiment names a cohort source, a base task, and a list of arms (train
scheme, optional per-admission subsampling, test scheme). For every repeat it
splits admissions, rebuilds the feature dictionary from that repeat's training
admissions only, extracts train/test datasets per arm, selects the
regularization strength by cross validation, retrains, scores, and records the
AUROC (patient-level for terminal-outcome tasks, pointwise otherwise).

Evaluation on an event-anchored test scheme does not mirror any clinical use
case; such arms are refused unless the config explicitly acknowledges them,
and they stay flagged in every report.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ._version import __version__
from .core import Cohort, load_cohort
from .features import FeatureDictionary, build_dictionary
from .indexing import (
    TERMINAL_EVENT,
    Dataset,
    EventAnchored,
    Example,
    TaskSpec,
    extract_dataset,
    merge_task_dict,
    task_from_dict,
    task_to_dict,
)
from .learner import TrainConfig, decision_scores, select_c, train
from .metrics import PredictionSet, aggregate_repeats, auroc, patient_level_auroc
from .plotting import render_auroc_bars
from .sampling import (
    SplitPlan,
    derive_seed,
    make_cv_folds,
    make_splits,
    median_resample_k,
    subsample_per_admission,
    write_split_audit,
)
from .synth import generate_cohort, scenario_config

BIASED_EVAL_BANNER = "NOT a clinical use case (event-anchored evaluation)"


class ConfigRefusalError(ValueError):
    """The experiment config violates a runner invariant; nothing was run."""


@dataclass(frozen=True)
class ArmSpec:
    name: str
    train_task: TaskSpec
    test_task: TaskSpec
    subsample: int | str | None = None  # int, or "median"

    def __post_init__(self):
        if isinstance(self.subsample, str) and self.subsample != "median":
            raise ValueError("subsample must be an integer or 'median'")
        if isinstance(self.subsample, int) and self.subsample < 1:
            raise ValueError("subsample count must be >= 1")

    @property
    def biased_eval(self) -> bool:
        return isinstance(self.test_task.anchor, EventAnchored)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    arms: tuple[ArmSpec, ...]
    split: SplitPlan
    train: TrainConfig = field(default_factory=TrainConfig)
    cohort_scenario: str | None = None
    cohort_path: str | None = None
    min_prevalence: float = 0.05
    allow_biased_eval: bool = False
    output_dir: str = "runs"
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.cohort_scenario is None) == (self.cohort_path is None):
            raise ValueError("exactly one of cohort_scenario / cohort_path is required")
        if not self.arms:
            raise ValueError("experiment needs at least one arm")


def validate_config(config: ExperimentConfig) -> None:
    """Refuse configs that evaluate on outcome-dependent test schemes without
    an explicit acknowledgement."""
    for arm in config.arms:
        if arm.biased_eval and not config.allow_biased_eval:
            raise ConfigRefusalError(
                f"arm {arm.name!r} evaluates on an event-anchored test scheme, which "
                "does not mirror any clinical use case; set allow_biased_eval: true "
                "(or pass --allow-biased-eval) to acknowledge this"
            )


# ---------------------------------------------------------------------------
# Config (de)serialization
# ---------------------------------------------------------------------------


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "experiment": {
            "name": config.name,
            "output": config.output_dir,
            "allow_biased_eval": config.allow_biased_eval,
            "notes": list(config.notes),
        },
        "cohort": (
            {"scenario": config.cohort_scenario}
            if config.cohort_scenario
            else {"path": config.cohort_path}
        ),
        "features": {"min_prevalence": config.min_prevalence},
        "split": {
            "seed": config.split.seed,
            "repeats": config.split.n_repeats,
            "test_fraction": config.split.test_fraction,
            "cv_folds": config.split.n_cv_folds,
        },
        "train": {
            "c_grid": list(config.train.c_grid),
            "max_iterations": config.train.max_iterations,
            "tolerance": config.train.tolerance,
        },
        "arms": [
            {
                "name": arm.name,
                **({"subsample": arm.subsample} if arm.subsample is not None else {}),
                "train": {"task": task_to_dict(arm.train_task)},
                "test": {"task": task_to_dict(arm.test_task)},
            }
            for arm in config.arms
        ],
    }


def config_from_dict(obj: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed YAML mapping.

    Arms may give a full `task` or partial overrides of the base `task`
    section. `overrides` (from CLI flags) may replace seed, repeats, workers'
    output dir, and the biased-eval acknowledgement.
    """
    overrides = overrides or {}
    exp = obj.get("experiment", {})
    cohort = obj.get("cohort", {})
    split_obj = obj.get("split", {})
    train_obj = obj.get("train", {})
    base_task = obj.get("task")

    split = SplitPlan(
        seed=int(overrides.get("seed", split_obj.get("seed", 0))),
        n_repeats=int(overrides.get("repeats", split_obj.get("repeats", 100))),
        test_fraction=float(split_obj.get("test_fraction", 0.25)),
        n_cv_folds=int(split_obj.get("cv_folds", 5)),
    )
    train_cfg = TrainConfig(
        c_grid=tuple(float(c) for c in train_obj.get("c_grid", TrainConfig().c_grid)),
        max_iterations=int(train_obj.get("max_iterations", 100)),
        tolerance=float(train_obj.get("tolerance", 1e-6)),
    )

    def side_task(arm_obj: dict, side: str) -> TaskSpec:
        side_obj = arm_obj.get(side, {}) or {}
        if "task" in side_obj:
            return task_from_dict(side_obj["task"])
        if base_task is None:
            raise ValueError(f"arm {arm_obj.get('name')!r} has no task and no base task section")
        return merge_task_dict(base_task, side_obj)

    arms = []
    for arm_obj in obj.get("arms", []):
        arms.append(
            ArmSpec(
                name=str(arm_obj["name"]),
                train_task=side_task(arm_obj, "train"),
                test_task=side_task(arm_obj, "test"),
                subsample=arm_obj.get("subsample"),
            )
        )

    return ExperimentConfig(
        name=str(exp.get("name", "experiment")),
        arms=tuple(arms),
        split=split,
        train=train_cfg,
        cohort_scenario=cohort.get("scenario"),
        cohort_path=cohort.get("path"),
        min_prevalence=float(obj.get("features", {}).get("min_prevalence", 0.05)),
        allow_biased_eval=bool(
            overrides.get("allow_biased_eval", exp.get("allow_biased_eval", False))
        ),
        output_dir=str(overrides.get("output", exp.get("output", "runs"))),
        notes=tuple(exp.get("notes", []) or []),
    )


def load_experiment_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        obj = yaml.safe_load(fh)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: experiment config must be a mapping")
    return config_from_dict(obj, overrides)


def config_from_manifest(manifest_path: str | Path) -> ExperimentConfig:
    """Rebuild the exact config of a completed run for a bit-identical re-run."""
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    return config_from_dict(manifest["experiment_config"])


def shipped_config_dir() -> Path:
    return Path(__file__).parent / "configs"


def list_shipped_configs() -> list[str]:
    return sorted(p.stem for p in shipped_config_dir().glob("*.yaml"))


def shipped_config_path(name: str) -> Path:
    p = shipped_config_dir() / f"{name}.yaml"
    if not p.exists():
        raise FileNotFoundError(
            f"no shipped config {name!r}; available: {', '.join(list_shipped_configs())}"
        )
    return p


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


class _SchemeCache:
    """Full-dictionary extraction per task spec, shared across repeats and arms.

    Summaries are per-variable and labels are dictionary-independent, so each
    repeat's dataset is a row subset (that repeat's admissions) and a column
    projection (that repeat's prevalence-filtered dictionary) of the full
    extraction.
    """

    def __init__(self, cohort: Cohort):
        self.cohort = cohort
        self.full_dictionary = FeatureDictionary(
            cohort.variable_dictionary, cohort.demographic_dictionary
        )
        self._datasets: dict[TaskSpec, Dataset] = {}

    def dataset(self, spec: TaskSpec) -> Dataset:
        if spec not in self._datasets:
            self._datasets[spec] = extract_dataset(self.cohort, spec, self.full_dictionary)
        return self._datasets[spec]

    def project(self, spec: TaskSpec, admission_ids: set[str],
                dictionary: FeatureDictionary) -> Dataset:
        full = self.dataset(spec)
        var_pos = {v: i for i, v in enumerate(self.full_dictionary.variables)}
        cols = []
        for v in dictionary.variables:
            base = 4 * var_pos[v]
            cols.extend((base, base + 1, base + 2, base + 3))
        demo_offset = 4 * len(self.full_dictionary.variables)
        flag_pos = {f: i for i, f in enumerate(self.full_dictionary.demographic_flags)}
        cols.extend(demo_offset + flag_pos[f] for f in dictionary.demographic_flags)
        cols = np.asarray(cols, dtype=np.intp)
        examples = [
            Example(ex.admission_id, ex.t_p, ex.features[cols], ex.label)
            for ex in full.examples
            if ex.admission_id in admission_ids
        ]
        return Dataset(examples, dictionary, spec, n_dropped=full.n_dropped)


def _load_cohort_for(config: ExperimentConfig) -> Cohort:
    if config.cohort_scenario is not None:
        return generate_cohort(scenario_config(config.cohort_scenario))
    return load_cohort(config.cohort_path)


def _run_repeats(config: ExperimentConfig, repeat_indices: list[int],
                 cohort: Cohort | None = None, sink: list | None = None) -> list[dict]:
    """Execute a block of repeats; appends row dicts to `sink` as they finish."""
    rows = sink if sink is not None else []
    if cohort is None:
        cohort = _load_cohort_for(config)
    cache = _SchemeCache(cohort)
    splits = make_splits(cohort.admission_ids(), config.split)
    by_id = cohort.by_id()
    for r in repeat_indices:
        split = splits[r]
        train_ids = set(split.train_ids)
        test_ids = set(split.test_ids)
        train_cohort = cohort.subset(train_ids)
        dictionary = build_dictionary(train_cohort, config.min_prevalence)
        for arm_index, arm in enumerate(config.arms):
            train_ds = cache.project(arm.train_task, train_ids, dictionary)
            k = None
            if arm.subsample is not None:
                k = (
                    median_resample_k(train_cohort)
                    if arm.subsample == "median"
                    else int(arm.subsample)
                )
                train_ds = subsample_per_admission(
                    train_ds, k, derive_seed(config.split.seed, "subsample", arm.name, r)
                )
            present_train = sorted({ex.admission_id for ex in train_ds.examples})
            folds = make_cv_folds(
                present_train, config.split.n_cv_folds,
                derive_seed(config.split.seed, "cv", arm.name, r),
            )
            c = select_c(train_ds, folds, config.train)
            model = train(train_ds, c, config.train)
            test_ds = cache.project(arm.test_task, test_ids, dictionary)
            scores = decision_scores(model, test_ds)
            if arm.test_task.task_kind == TERMINAL_EVENT:
                preds = PredictionSet.from_arrays(
                    test_ds.admission_ids(),
                    [ex.t_p for ex in test_ds.examples],
                    scores,
                    test_ds.labels(),
                )
                value = patient_level_auroc(preds)
            else:
                value = auroc(scores, test_ds.labels())
            present_test = {ex.admission_id for ex in test_ds.examples}
            rows.append(
                {
                    "repeat": r,
                    "arm_index": arm_index,
                    "arm": arm.name,
                    "auroc": float(value),
                    "c_selected": c,
                    "k_subsample": k,
                    "n_train_examples": len(train_ds),
                    "n_test_examples": len(test_ds),
                    "n_train_admissions_without_examples": len(train_ids) - len(set(present_train)),
                    "n_test_admissions_without_examples": len(test_ids) - len(present_test),
                    "n_features": dictionary.d,
                }
            )
    return rows


def run_experiment(config: ExperimentConfig, workers: int = 1) -> Path:
    """Run every (repeat, arm) cell and write the run directory.

    Files: repeats.csv (experiment,arm,repeat,auroc), summary.csv
    (experiment,arm,mean,std,n), splits.csv audit, manifest.json. A failing
    arm aborts the run but preserves the rows already computed.
    """
    validate_config(config)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort = _load_cohort_for(config)
    splits = make_splits(cohort.admission_ids(), config.split)
    write_split_audit(splits, out_dir / "splits.csv")

    rows: list[dict] = []
    failure: Exception | None = None
    if workers <= 1:
        try:
            _run_repeats(config, list(range(config.split.n_repeats)), cohort=cohort, sink=rows)
        except Exception as exc:  # preserve partial results
            failure = exc
    else:
        chunks = [list(block) for block in np.array_split(range(config.split.n_repeats), workers)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [pool.submit(_run_repeats, config, chunk) for chunk in chunks]
            for fut in futures:
                try:
                    rows.extend(fut.result())
                except Exception as exc:
                    failure = failure or exc
    rows.sort(key=lambda row: (row["repeat"], row["arm_index"]))

    _write_run_files(config, rows, out_dir, failed=failure is not None)
    if failure is not None:
        raise RuntimeError(
            f"experiment {config.name!r} aborted; partial results preserved in {out_dir}"
        ) from failure
    return out_dir


def _write_run_files(config: ExperimentConfig, rows: list[dict], out_dir: Path,
                     failed: bool) -> None:
    with open(out_dir / "repeats.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("experiment,arm,repeat,auroc\n")
        for row in rows:
            fh.write(f"{config.name},{row['arm']},{row['repeat']},{row['auroc']!r}\n")

    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("experiment,arm,mean,std,n\n")
        for arm in config.arms:
            values = [row["auroc"] for row in rows if row["arm"] == arm.name]
            if not values:
                continue
            rep = aggregate_repeats(values)
            fh.write(f"{config.name},{arm.name},{rep.mean!r},{rep.std!r},{rep.n_repeats}\n")

    manifest = {
        "library_version": __version__,
        "experiment_config": config_to_dict(config),
        "failed": failed,
        "arms": [
            {
                "name": arm.name,
                "biased_eval": arm.biased_eval,
                "banner": BIASED_EVAL_BANNER if arm.biased_eval else None,
                "subsample": arm.subsample,
                "patient_level_auroc": arm.test_task.task_kind == TERMINAL_EVENT,
            }
            for arm in config.arms
        ],
        "notes": list(config.notes),
        "per_repeat": [
            {key: value for key, value in row.items() if key != "arm_index"} for row in rows
        ],
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


def report(run_dir: str | Path, out_dir: str | Path | None = None) -> str:
    """Render a completed run: mean (std) text table, plot-ready CSV, and a
    bar-chart figure. Returns the table text."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    manifest_path = run_dir / "manifest.json"
    summary_path = run_dir / "summary.csv"
    if not manifest_path.exists() or not summary_path.exists():
        raise FileNotFoundError(f"{run_dir} is not a completed run (missing manifest/summary)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    arm_meta = {a["name"]: a for a in manifest["arms"]}

    rows = []
    with open(summary_path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        assert header == ["experiment", "arm", "mean", "std", "n"]
        for raw in fh:
            experiment, arm, mean, std, n = raw.rstrip("\n").split(",")
            meta = arm_meta.get(arm, {})
            rows.append(
                {
                    "experiment": experiment,
                    "arm": arm,
                    "mean": float(mean),
                    "std": float(std),
                    "n": int(n),
                    "biased_eval": bool(meta.get("biased_eval")),
                }
            )
    if not rows:
        raise ValueError(f"{run_dir}: summary.csv holds no completed arms")

    name = rows[0]["experiment"]
    lines = [
        f"experiment: {name}",
        f"repeats: {rows[0]['n']} (errors are the population std across repeats)",
        "",
        f"{'arm':<34}{'mean (std)':<18}flags",
        f"{'-' * 33} {'-' * 17} {'-' * 5}",
    ]
    for row in rows:
        flag = BIASED_EVAL_BANNER if row["biased_eval"] else ""
        lines.append(f"{row['arm']:<34}{row['mean']:.3f} ({row['std']:.3f})     {flag}")
    if manifest.get("notes"):
        lines.append("")
        lines.append("notes:")
        lines.extend(f"  - {note}" for note in manifest["notes"])
    if manifest.get("failed"):
        lines.append("")
        lines.append("WARNING: run aborted early; results above are partial.")
    text = "\n".join(lines) + "\n"

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    with open(out_dir / "plot_data.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("experiment,arm,mean,std,n,biased_eval\n")
        for row in rows:
            fh.write(
                f"{row['experiment']},{row['arm']},{row['mean']!r},{row['std']!r},"
                f"{row['n']},{int(row['biased_eval'])}\n"
            )
    render_auroc_bars(rows, out_dir / "auroc.png", title=name)
    return text
