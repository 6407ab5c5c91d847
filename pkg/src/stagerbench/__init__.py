"""
stagerbench: evaluation toolkit for ensembles of automatic sleep stagers.

Submodules
----------
edf_io          EDF / raw-float signal readers
sigprep         PSG preprocessing chain and epoching
core            stages, hypnograms, probability sequences, manifests
ensemble        probability averaging and the learned-weight combiner
metrics         staging metrics, uncertainty scores, McNemar, kappa matrices
clinical        TST / WASO / REM latency / sleep efficiency and paired t-test
error_analysis  common-vs-other errors, transition distances and patterns
synth           seeded synthetic cohorts
pipeline        batch orchestration and report bundle
"""
from .core import (
    CohortManifest,
    Hypnogram,
    ProbSeq,
    RecordingEntry,
    SeverityClass,
    SleepStage,
    StagerSet,
    hardened,
    severity_of,
    stage_from_code,
)
from .ensemble import SuperLearnerWeights, average_probs, super_learner_apply, super_learner_train
from .edf_io import SignalTrace, read_edf, write_edf
from .metrics import confusion, evaluate, mcnemar, overall_metrics, pairwise_kappa
from .pipeline import RunConfig, run_pipeline
from .sigprep import preprocess, spectrogram
from .synth import SynthSpec, generate_synthetic_cohort

__all__ = [
    "CohortManifest",
    "Hypnogram",
    "ProbSeq",
    "RecordingEntry",
    "RunConfig",
    "SeverityClass",
    "SignalTrace",
    "SleepStage",
    "StagerSet",
    "SuperLearnerWeights",
    "SynthSpec",
    "average_probs",
    "confusion",
    "evaluate",
    "generate_synthetic_cohort",
    "hardened",
    "mcnemar",
    "overall_metrics",
    "pairwise_kappa",
    "preprocess",
    "read_edf",
    "run_pipeline",
    "severity_of",
    "spectrogram",
    "stage_from_code",
    "super_learner_apply",
    "super_learner_train",
    "write_edf",
]

__version__ = "0.1.0"
