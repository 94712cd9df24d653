"""Command-line interface.

Subcommands: synth, ingest, extract, train, evaluate, experiment, report.
Exit codes: 0 on success, 2 when a config is refused, 1 on runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from ._version import __version__
from .core import load_cohort, load_cohort_csv, validate, write_cohort_csv, write_cohort_jsonl
from .features import build_dictionary, read_dictionary_sidecar, write_dictionary_sidecar
from .indexing import (
    TERMINAL_EVENT,
    extract_dataset,
    read_dataset_csv,
    task_from_dict,
    write_dataset_csv,
)
from .learner import decision_scores, load_model, save_model, train
from .metrics import PredictionSet, auroc, patient_level_auroc
from .runner import (
    ConfigRefusalError,
    load_experiment_config,
    report,
    run_experiment,
    shipped_config_path,
)
from .synth import generate_cohort, scenario_config


def _load_cohort_args(args) -> "Cohort":
    if args.cohort:
        return load_cohort(args.cohort)
    if args.admissions and args.events:
        return load_cohort_csv(args.admissions, args.events)
    raise ValueError("pass --cohort, or both --admissions and --events")


def _add_cohort_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cohort", help="cohort .jsonl file or directory with admissions.csv/events.csv")
    p.add_argument("--admissions", help="admissions CSV path")
    p.add_argument("--events", help="events CSV path")


def _cmd_synth(args) -> int:
    config = scenario_config(args.scenario)
    if args.n is not None or args.seed is not None:
        from dataclasses import replace

        config = replace(
            config,
            n_admissions=args.n if args.n is not None else config.n_admissions,
            seed=args.seed if args.seed is not None else config.seed,
        )
    cohort = generate_cohort(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "jsonl":
        write_cohort_jsonl(cohort, out / "cohort.jsonl")
        paths = [out / "cohort.jsonl"]
    else:
        write_cohort_csv(cohort, out / "admissions.csv", out / "events.csv")
        paths = [out / "admissions.csv", out / "events.csv"]
    n_events = sum(len(a.events) for a in cohort.admissions)
    n_died = sum(a.died_in_hospital for a in cohort.admissions)
    print(
        f"scenario {args.scenario!r}: {len(cohort.admissions)} admissions, "
        f"{n_events} events, {n_died} in-hospital deaths"
    )
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_ingest(args) -> int:
    cohort = _load_cohort_args(args)
    rep = validate(cohort)
    print(f"admissions: {rep.n_admissions}")
    print(f"events:     {rep.n_events}")
    print(f"variables:  {len(cohort.variable_dictionary)}")
    print(f"errors:     {len(rep.errors)}")
    for adm_id, msg in rep.errors[:20]:
        print(f"  [{adm_id}] {msg}")
    if len(rep.errors) > 20:
        print(f"  ... and {len(rep.errors) - 20} more")
    print(f"warnings:   {len(rep.warnings)}")
    for msg in rep.warnings[:10]:
        print(f"  {msg}")
    return 0 if rep.ok else 1


def _load_task(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        obj = yaml.safe_load(fh)
    if isinstance(obj, dict) and "task" in obj:
        obj = obj["task"]
    return task_from_dict(obj)


def _cmd_extract(args) -> int:
    cohort = _load_cohort_args(args)
    task = _load_task(args.task)
    dictionary = build_dictionary(cohort, args.min_prevalence)
    dataset = extract_dataset(cohort, task, dictionary)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(dataset, out)
    sidecar = Path(args.dictionary) if args.dictionary else out.with_suffix(".features.txt")
    write_dictionary_sidecar(dictionary, sidecar)
    print(f"{len(dataset)} examples ({dataset.n_dropped} dropped), d={dictionary.d}")
    print(f"wrote {out}")
    print(f"wrote {sidecar}")
    return 0


def _cmd_train(args) -> int:
    dictionary = read_dictionary_sidecar(args.dictionary)
    dataset = read_dataset_csv(args.dataset, dictionary)
    model = train(dataset, args.c)
    save_model(model, args.out)
    status = "converged" if model.converged else "NOT converged (hit max iterations)"
    print(f"trained on {len(dataset)} examples at c={args.c}; {status}")
    print(f"wrote {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    dictionary = read_dictionary_sidecar(args.dictionary)
    dataset = read_dataset_csv(args.dataset, dictionary)
    model = load_model(args.model)
    scores = decision_scores(model, dataset)
    if args.patient_level:
        preds = PredictionSet.from_arrays(
            dataset.admission_ids(), [ex.t_p for ex in dataset.examples], scores, dataset.labels()
        )
        value = patient_level_auroc(preds)
        print(f"patient-level AUROC: {value:.6f}  ({len(dataset)} predictions)")
    else:
        value = auroc(scores, dataset.labels())
        print(f"AUROC: {value:.6f}  ({len(dataset)} predictions)")
    return 0


def _cmd_experiment(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        config_path = shipped_config_path(args.config)
    overrides = {}
    if args.out is not None:
        overrides["output"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    if args.allow_biased_eval:
        overrides["allow_biased_eval"] = True
    config = load_experiment_config(config_path, overrides)
    run_dir = run_experiment(config, workers=args.workers)
    print(f"run complete: {run_dir}")
    print(f"render it with: predex report --run {run_dir}")
    return 0


def _cmd_report(args) -> int:
    text = report(args.run, args.out)
    print(text, end="")
    out_dir = Path(args.out) if args.out else Path(args.run)
    print(f"wrote {out_dir / 'report.txt'}, {out_dir / 'plot_data.csv'}, {out_dir / 'auroc.png'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predex",
        description="Extract, train, and evaluate prediction examples from event-stream cohorts.",
    )
    parser.add_argument("--version", action="version", version=f"predex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, help="override the scenario's admission count")
    p.add_argument("--seed", type=int, help="override the scenario's seed")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("ingest", help="read a cohort and print a validation report")
    _add_cohort_opts(p)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("extract", help="extract a dataset CSV under a task spec")
    _add_cohort_opts(p)
    p.add_argument("--task", required=True, help="YAML file holding the task spec")
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--dictionary", help="feature-name sidecar path (default: <out>.features.txt)")
    p.add_argument("--min-prevalence", type=float, default=0.05)
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("train", help="train a model at a fixed c on a dataset CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("evaluate", help="score a dataset CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--patient-level", action="store_true",
                   help="reduce each admission's predictions by max before AUROC")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run an experiment config end to end")
    p.add_argument("config", help="config path, or the name of a shipped config")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--seed", type=int, help="split seed override")
    p.add_argument("--repeats", type=int, help="repeat-count override")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-biased-eval", action="store_true",
                   help="acknowledge event-anchored test arms (not a clinical use case)")
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("report", help="render tables and figures for a completed run")
    p.add_argument("--run", required=True)
    p.add_argument("--out", help="write report files elsewhere (default: the run dir)")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigRefusalError as exc:
        print(f"config refused: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
