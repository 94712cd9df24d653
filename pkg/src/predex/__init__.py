"""predex: prediction-example extraction, training, and evaluation for
longitudinal event-stream data.

The toolkit turns per-admission event streams into supervised (features,
label) examples under configurable indexing schemes (admission-anchored,
event-anchored, on-demand; single or rolling; fixed or remainder-of-stay
horizons), trains an L2-regularized linear classifier under a repeated-split
protocol, and scores it with pointwise or patient-level AUROC. A deterministic
synthetic cohort generator and a config-driven experiment runner demonstrate
how outcome-dependent test extraction inflates measured performance.
"""

from ._version import __version__
from .core import (
    Admission,
    AdmissionEventIndex,
    Cohort,
    IngestError,
    ObservationEvent,
    ValidationReport,
    filter_variables_by_prevalence,
    ingest_cohort,
    load_cohort,
    load_cohort_csv,
    read_cohort_jsonl,
    validate,
    write_cohort_csv,
    write_cohort_jsonl,
)
from .features import (
    FeatureDictionary,
    Standardizer,
    apply_standardizer,
    build_dictionary,
    fit_standardizer,
    read_dictionary_sidecar,
    summarize_window,
    write_dictionary_sidecar,
)
from .indexing import (
    AdmissionAnchored,
    Dataset,
    EventAnchored,
    Example,
    FixedHorizon,
    OnDemand,
    PredictionPoint,
    RemainderOfAdmission,
    TaskSpec,
    extract_dataset,
    label_at,
    prediction_times,
    read_dataset_csv,
    task_from_dict,
    task_to_dict,
    write_dataset_csv,
)
from .learner import (
    LinearModel,
    TrainConfig,
    decision_scores,
    load_model,
    save_model,
    select_c,
    train,
)
from .metrics import (
    EvalReport,
    PredictionSet,
    UndefinedAUROCError,
    aggregate_repeats,
    auroc,
    patient_level_auroc,
)
from .runner import (
    ArmSpec,
    ConfigRefusalError,
    ExperimentConfig,
    config_from_manifest,
    list_shipped_configs,
    load_experiment_config,
    report,
    run_experiment,
    shipped_config_path,
)
from .sampling import (
    SplitAssignment,
    SplitPlan,
    derive_seed,
    make_cv_folds,
    make_splits,
    median_resample_k,
    subsample_per_admission,
)
from .synth import (
    ScenarioNotFoundError,
    SynthConfig,
    generate_cohort,
    reference_scenarios,
    scenario_config,
)
