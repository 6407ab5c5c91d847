"""
Batch orchestration: load a cohort, ensemble the stagers, and write the
evaluation report bundle.

A run is described by a JSON config (see :class:`RunConfig`). Relative paths
in the config resolve against the config file's directory, and relative
paths inside the manifest resolve against the manifest's directory. Stager
outputs are looked up as ``<stager_dir>/<recording id>.csv``.

Recordings that fail to load are logged, skipped and counted in the
summary; the run only fails when no recording survives.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any

import numpy as np

from . import clinical, error_analysis, metrics
from .core import CohortManifest, Hypnogram, ProbSeq, RecordingEntry, SleepStage, StagerSet, severity_of
from .edf_io import read_edf
from .ensemble import average_probs, super_learner_apply, super_learner_train
from .exceptions import PipelineFailure
from .sigprep import preprocess

logger = logging.getLogger("stagerbench")

__all__ = [
    "RunConfig",
    "Diagnostic",
    "validate_config",
    "run_pipeline",
    "write_prep_outputs",
    "REPORT_FILES",
    "DEFAULT_AHI_BINS",
]

ENSEMBLE_MODES = ("avg", "learned", "both", "none")
AVERAGE_NAME = "AverageEnsemble"
LEARNED_NAME = "LearnedEnsemble"
DEFAULT_AHI_BINS = (
    {"name": "None", "lo": 0.0, "hi": 1.0},
    {"name": "Mild", "lo": 1.0, "hi": 5.0},
    {"name": "Moderate", "lo": 5.0, "hi": 10.0},
    {"name": "Severe", "lo": 10.0, "hi": None},
)
REPORT_FILES = (
    "summary.json",
    "metrics_overall.csv",
    "metrics_classwise.csv",
    "metrics_strata.csv",
    "kappa_matrix.csv",
    "mcnemar.csv",
    "clinical.csv",
    "errors_histogram.csv",
    "error_patterns.csv",
    "error_stages.csv",
    "errors.ndjson",
)
STAGE_NAMES = [s.name for s in SleepStage]


@dataclass
class RunConfig:
    manifest: Path
    stager_dirs: dict[str, Path]
    out: Path = Path("report")
    ensemble_mode: str = "avg"
    seed: int = 0
    workers: int = 1
    channels: list[str] = field(default_factory=list)
    channel_aliases: dict[str, list[str]] = field(default_factory=dict)
    prep: dict[str, Any] = field(default_factory=dict)
    age_bins: list[float] | None = None
    ahi_bins: list[dict] = field(default_factory=lambda: [dict(b) for b in DEFAULT_AHI_BINS])
    absent: str = "exclude"
    mcnemar_exact: bool | str = False
    include_ensemble_in_errors: bool = True

    @classmethod
    def from_dict(cls, data: dict, base: str | Path = ".") -> "RunConfig":
        base = Path(base)
        data = dict(data)

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        data["manifest"] = resolve(data["manifest"])
        data["stager_dirs"] = {k: resolve(v) for k, v in data.get("stager_dirs", {}).items()}
        data["out"] = resolve(data.get("out", "report"))
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    message: str


def _ahi_interval(b: dict) -> tuple[float, float]:
    hi = b.get("hi")
    return float(b["lo"]), math.inf if hi is None else float(hi)


def validate_config(config: RunConfig) -> list[Diagnostic]:
    """Check paths, modes and strata definitions without side effects."""
    diags: list[Diagnostic] = []

    def error(msg):
        diags.append(Diagnostic("error", msg))

    if config.ensemble_mode not in ENSEMBLE_MODES:
        error(f"unknown ensemble mode {config.ensemble_mode!r}; expected one of {ENSEMBLE_MODES}")
    if not config.stager_dirs:
        error("no stager output directories configured")
    for name, d in config.stager_dirs.items():
        if not Path(d).is_dir():
            error(f"stager {name!r}: directory {d} does not exist")
    if config.workers < 1:
        error("workers must be at least 1")
    if config.absent not in ("exclude", "zero"):
        error(f"absent must be 'exclude' or 'zero', got {config.absent!r}")
    if config.mcnemar_exact not in (True, False, "auto"):
        error(f"mcnemar_exact must be true, false or 'auto', got {config.mcnemar_exact!r}")

    if config.age_bins is not None:
        edges = list(config.age_bins)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            error("age_bins must be at least two strictly increasing edges")
    intervals = []
    for b in config.ahi_bins:
        try:
            lo, hi = _ahi_interval(b)
            name = b["name"]
        except (KeyError, TypeError, ValueError):
            error(f"malformed AHI bin {b!r}")
            continue
        if lo < 0 or hi <= lo:
            error(f"AHI bin {name!r} has an empty or negative range")
        intervals.append((lo, hi, name))
    intervals.sort()
    for (lo1, hi1, n1), (lo2, hi2, n2) in zip(intervals, intervals[1:]):
        if lo2 < hi1:
            error(f"AHI bins {n1!r} and {n2!r} overlap")

    prep = config.prep
    if prep.get("enabled"):
        if not config.channels:
            error("preprocessing enabled but no channels configured")
        low, high = prep.get("low", 0.3), prep.get("high", 40.0)
        rate = prep.get("target_rate", 100.0)
        if not 0 < low < high < rate / 2:
            error(f"invalid band ({low}, {high}) for {rate} Hz")
        if not prep.get("eps", 1e-4) > 0:
            error("prep eps must be positive")

    manifest = Path(config.manifest)
    if not manifest.is_file():
        error(f"manifest {manifest} does not exist")
    else:
        try:
            cohort = CohortManifest.from_json(manifest)
        except (ValueError, KeyError, TypeError) as exc:
            error(f"manifest {manifest} is malformed: {exc}")
        else:
            for entry in cohort:
                for problem in _missing_files(entry, manifest.parent, config):
                    diags.append(Diagnostic("warning", f"recording {entry.id}: {problem}"))
    return diags


def _missing_files(entry: RecordingEntry, root: Path, config: RunConfig) -> list[str]:
    problems = []
    hyp = entry.files.get("hypnogram")
    if hyp is None:
        problems.append("no hypnogram path")
    elif not (root / hyp).is_file():
        problems.append(f"hypnogram {root / hyp} missing")
    for name, d in config.stager_dirs.items():
        if not (Path(d) / f"{entry.id}.csv").is_file():
            problems.append(f"stager {name!r} output missing")
    if config.prep.get("enabled") and "edf" in entry.files and not (root / entry.files["edf"]).is_file():
        problems.append("EDF file missing")
    return problems


@dataclass
class _Loaded:
    entry: RecordingEntry
    stagers: StagerSet
    prep: dict | None = None


def write_prep_outputs(result, out_dir: str | Path, recording_id: str) -> dict:
    """Write an EpochGrid as ``<id>.f32le`` plus JSON sidecar, and the quality report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = result.grid
    (out / f"{recording_id}.f32le").write_bytes(grid.epochs.astype("<f4").tobytes())
    sidecar = {
        "recording_id": recording_id,
        "shape": list(grid.epochs.shape),
        "channels": list(grid.channels),
        "rate": grid.rate,
        "epoch_index": [int(i) for i in grid.epoch_index],
        "history": [list(tr.history) for tr in result.traces],
    }
    (out / f"{recording_id}.json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    quality = result.quality.to_dict()
    (out / f"{recording_id}.quality.json").write_text(json.dumps(quality, sort_keys=True) + "\n")
    return {"n_epochs": len(grid), **quality}


def _load_recording(entry: RecordingEntry, root: Path, config: RunConfig) -> _Loaded:
    problems = _missing_files(entry, root, config)
    if problems:
        raise FileNotFoundError("; ".join(problems))
    truth = Hypnogram.read_csv(root / entry.files["hypnogram"])
    names = tuple(config.stager_dirs)
    outputs = tuple(ProbSeq.read_csv(Path(config.stager_dirs[n]) / f"{entry.id}.csv") for n in names)
    stagers = StagerSet(names, outputs, truth)
    prep = None
    if config.prep.get("enabled") and "edf" in entry.files:
        traces = read_edf(root / entry.files["edf"], config.channels, config.channel_aliases)
        p = config.prep
        result = preprocess(traces, entry.id, target_rate=p.get("target_rate", 100.0),
                            eps=p.get("eps", 1e-4), clip_k=p.get("clip_k", 6.0),
                            low=p.get("low", 0.3), high=p.get("high", 40.0))
        prep = write_prep_outputs(result, Path(config.out) / "prep", entry.id)
    return _Loaded(entry, stagers, prep)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def _mean_sd(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def _ahi_key(bins: list[dict]):
    intervals = [(*_ahi_interval(b), b["name"]) for b in bins]

    def key(r: metrics.RecordingResult):
        if r.ahi is None:
            return severity_of(None).value
        for lo, hi, name in intervals:
            if lo <= r.ahi < hi:
                return name
        return None

    return key


def run_pipeline(config: RunConfig) -> dict[str, Any]:
    """Execute a full evaluation run and write the report bundle.

    Returns
    -------
    dict
        The contents of ``summary.json``.
    """
    diags = validate_config(config)
    errors = [d.message for d in diags if d.severity == "error"]
    if errors:
        raise PipelineFailure("invalid configuration: " + "; ".join(errors))
    for d in diags:
        logger.warning(d.message)

    cohort = CohortManifest.from_json(config.manifest)
    if len(cohort) == 0:
        raise PipelineFailure("manifest lists no recordings")
    root = Path(config.manifest).parent
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    def attempt(entry):
        try:
            return _load_recording(entry, root, config), None
        except Exception as exc:  # noqa: BLE001 - per-recording failures are reported, not fatal
            logger.warning("skipping recording %s: %s", entry.id, exc)
            return None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        outcomes = list(pool.map(attempt, cohort.recordings))
    loaded = [rec for rec, _ in outcomes if rec is not None]
    skipped = {e.id: msg for e, (rec, msg) in zip(cohort.recordings, outcomes) if rec is None}
    if not loaded:
        raise PipelineFailure(f"no recording could be processed ({len(skipped)} skipped)")

    base_names = list(config.stager_dirs)
    weights = None
    evaluated = loaded
    if config.ensemble_mode in ("learned", "both"):
        validation = [r for r in loaded if r.entry.subset_tag == "validation"]
        if not validation:
            raise PipelineFailure("learned ensemble needs recordings tagged 'validation'")
        weights = super_learner_train([r.stagers for r in validation])
        evaluated = [r for r in loaded if r.entry.subset_tag != "validation"]
        if not evaluated:
            raise PipelineFailure("no recordings left for evaluation after holding out validation")

    # per-recording model outputs
    results: list[metrics.RecordingResult] = []
    for rec in evaluated:
        probs = {n: rec.stagers.outputs[k].probs for k, n in enumerate(base_names)}
        if config.ensemble_mode in ("avg", "both"):
            probs[AVERAGE_NAME] = average_probs(rec.stagers).probs
        if weights is not None:
            probs[LEARNED_NAME] = super_learner_apply(weights, rec.stagers).probs
        results.append(metrics.RecordingResult(rec.entry.id, rec.entry.age, rec.entry.ahi,
                                               np.asarray(rec.stagers.truth.stages, dtype=np.int64), probs))
    models = list(results[0].probs)
    ensembles = [m for m in models if m not in base_names]

    truth = np.concatenate([r.truth for r in results])
    pooled = {m: np.concatenate([r.probs[m] for r in results]) for m in models}
    hard = {m: pooled[m].argmax(axis=1) for m in models}
    reports = {m: metrics.evaluate(pooled[m], truth, config.absent) for m in models}

    files: dict[str, str] = {}
    header = ["model", "accuracy", "kappa", "mf1", "sensitivity", "specificity", "nll", "brier", "n_epochs"]
    files["metrics_overall.csv"] = _csv(
        [header] + [[m] + [getattr(reports[m], h) for h in header[1:]] for m in models])
    files["metrics_classwise.csv"] = _csv(
        [["model"] + STAGE_NAMES] + [[m, *reports[m].per_class_f1] for m in models])

    # strata
    strata = {
        "age": metrics.stratified_metrics(results, "age", config.age_bins, config.absent),
        "ahi": metrics.stratified_metrics(results, _ahi_key(config.ahi_bins), absent=config.absent),
    }
    strata_rows = [["stratification", "stratum", "model", "n_epochs", "accuracy", "kappa", "mf1"]]
    for kind, table in strata.items():
        for label, per_model in table.items():
            for m, rep in per_model.items():
                strata_rows.append([kind, label, m, rep.n_epochs, rep.accuracy, rep.kappa, rep.mf1])
    files["metrics_strata.csv"] = _csv(strata_rows)

    # agreement
    kappa = metrics.pairwise_kappa([hard[m] for m in models], truth)
    labels = models + ["truth"]
    files["kappa_matrix.csv"] = _csv([[""] + labels] + [[labels[i], *kappa[i]] for i in range(len(labels))])
    mc_rows = [["model_a", "model_b", "b", "c", "statistic", "p_value", "exact", "significant"]]
    for a, b in combinations(models, 2):
        res = metrics.mcnemar(hard[a], hard[b], truth, exact=config.mcnemar_exact)
        mc_rows.append([a, b, res.b, res.c, res.statistic, res.p_value, res.exact, res.p_value < 0.05])
    files["mcnemar.csv"] = _csv(mc_rows)

    # clinical measures
    clin_rows = [["recording_id", "model"] + list(clinical.MEASURES)
                 + [f"relerr_{k}" for k in clinical.MEASURES]]
    rel: dict[str, dict[str, list]] = {m: {k: [] for k in clinical.MEASURES} for m in models}
    for r in results:
        true_m = clinical.clinical_measures(r.truth)
        clin_rows.append([r.id, "truth", *[getattr(true_m, k) for k in clinical.MEASURES]]
                         + [None] * len(clinical.MEASURES))
        for m in models:
            pm = clinical.clinical_measures(r.probs[m].argmax(axis=1))
            errs = clinical.relative_errors(pm, true_m)
            for k in clinical.MEASURES:
                rel[m][k].append(errs[k])
            clin_rows.append([r.id, m, *[getattr(pm, k) for k in clinical.MEASURES],
                              *[errs[k] for k in clinical.MEASURES]])
    files["clinical.csv"] = _csv(clin_rows)
    clin_summary: dict[str, Any] = {}
    for m in models:
        clin_summary[m] = {}
        for k in clinical.MEASURES:
            mean, sd = _mean_sd([v for v in rel[m][k] if v is not None])
            clin_summary[m][k] = {"mean": mean, "sd": sd}
    t_tests: dict[str, Any] = {}
    for ens in ensembles:
        for m in base_names:
            for k in clinical.MEASURES:
                try:
                    t, p = clinical.paired_t_test(rel[ens][k], rel[m][k])
                except Exception:  # noqa: BLE001 - too few usable pairs for this measure
                    t, p = None, None
                t_tests.setdefault(f"{ens} vs {m}", {})[k] = {
                    "t": t, "p": p, "significant": None if p is None else p < 0.05}

    # error structure
    err_models = models if config.include_ensemble_in_errors else base_names
    analysis = None
    if len(err_models) >= 2:
        for r in results:
            part = error_analysis.classify_errors({m: r.probs[m].argmax(axis=1) for m in err_models},
                                                  r.truth, r.id)
            analysis = part if analysis is None else analysis + part
    hist_rows = [["model", "kind", *error_analysis.HISTOGRAM_BUCKETS]]
    stage_rows = [["model", "kind", *STAGE_NAMES]]
    error_summary: dict[str, Any] = {}
    if analysis is not None:
        for kind in ("common", "other"):
            hist = error_analysis.distance_histogram(analysis.records, err_models, kind)
            dist = error_analysis.error_stage_distribution(analysis.records, err_models, kind)
            for m in err_models:
                hist_rows.append([m, kind, *[hist[m][b] for b in error_analysis.HISTOGRAM_BUCKETS]])
                stage_rows.append([m, kind, *dist[m]])
        patterns = error_analysis.pattern_counts(analysis.records, kind="common")
        pattern_rows = [["prev", "stage", "next", "count"]]
        for pat, count in sorted(patterns.items(), key=lambda kv: (-kv[1], kv[0])):
            pattern_rows.append([*pat, count])
        files["error_patterns.csv"] = _csv(pattern_rows)
        files["errors.ndjson"] = "".join(
            json.dumps(rec.to_dict(), sort_keys=True) + "\n" for rec in analysis.records)
        error_summary = {
            "stagers": list(err_models),
            "n_common": analysis.n_common,
            "n_errors": analysis.n_errors,
            "common_other": {m: list(v) for m, v in analysis.fractions().items()},
        }
    else:
        files["error_patterns.csv"] = _csv([["prev", "stage", "next", "count"]])
        files["errors.ndjson"] = ""
    files["errors_histogram.csv"] = _csv(hist_rows)
    files["error_stages.csv"] = _csv(stage_rows)

    summary = {
        "seed": config.seed,
        "ensemble_mode": config.ensemble_mode,
        "n_recordings": len(cohort),
        "n_loaded": len(loaded),
        "n_evaluated": len(results),
        "n_skipped": len(skipped),
        "skipped": skipped,
        "models": models,
        "metrics": {m: reports[m].to_dict() for m in models},
        "strata": {kind: {lab: {m: rep.to_dict() for m, rep in tab.items()} for lab, tab in table.items()}
                   for kind, table in strata.items()},
        "clinical_relative_error": clin_summary,
        "clinical_t_tests": t_tests,
        "errors": error_summary,
        "prep": {rec.entry.id: rec.prep for rec in loaded if rec.prep is not None},
    }
    if weights is not None:
        summary["learned_weights"] = {"names": list(weights.names), "w": [float(v) for v in weights.w]}
    files["summary.json"] = json.dumps(_clean(summary), indent=1, sort_keys=True, default=_json_default) + "\n"

    for name, text in files.items():
        (out / name).write_text(text)
    return json.loads(files["summary.json"])
