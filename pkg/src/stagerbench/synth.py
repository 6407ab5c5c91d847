"""
Seeded synthetic cohorts for exercising the pipeline without real PSG data.

True hypnograms follow a first-order Markov chain over the five stages. Each
stager draws its hard decision for an epoch from its own confusion row given
the true stage, independently of the other stagers, and then emits a random
probability vector whose argmax is that decision. Randomness is split per
recording from a single seed, so each recording's draws do not depend on how
many others are generated or in which order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import N_STAGES, CohortManifest, Hypnogram, ProbSeq, RecordingEntry, StagerSet
from .exceptions import InvalidStochasticMatrix

__all__ = [
    "SynthSpec",
    "SyntheticCohort",
    "DEFAULT_TRANSITIONS",
    "default_stager_confusions",
    "generate_synthetic_cohort",
    "write_cohort",
]

# rows W, N1, N2, N3, REM; roughly the stickiness of a child's night at 30-s resolution
DEFAULT_TRANSITIONS = np.array([
    [0.90, 0.06, 0.02, 0.00, 0.02],
    [0.05, 0.75, 0.17, 0.00, 0.03],
    [0.01, 0.02, 0.92, 0.04, 0.01],
    [0.01, 0.00, 0.04, 0.95, 0.00],
    [0.02, 0.02, 0.02, 0.00, 0.94],
])
DEFAULT_INITIAL = np.array([0.8, 0.15, 0.05, 0.0, 0.0])


def _confusion_with_accuracy(acc: float) -> np.ndarray:
    off = (1.0 - acc) / (N_STAGES - 1)
    m = np.full((N_STAGES, N_STAGES), off)
    np.fill_diagonal(m, acc)
    return m


def default_stager_confusions(accuracies: Sequence[float] = (0.82, 0.78, 0.74, 0.70)) -> list[np.ndarray]:
    """Symmetric confusion matrices with the given per-stage accuracy."""
    return [_confusion_with_accuracy(a) for a in accuracies]


def _check_stochastic(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (N_STAGES, N_STAGES):
        raise InvalidStochasticMatrix(f"{name}: expected a {N_STAGES}x{N_STAGES} matrix, got {m.shape}")
    if not np.all(np.isfinite(m)) or np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1) > 1e-9):
        raise InvalidStochasticMatrix(f"{name}: rows must be nonnegative and sum to 1")
    return m


@dataclass
class SynthSpec:
    n_recordings: int = 10
    epochs: int = 960
    transitions: np.ndarray = field(default_factory=lambda: DEFAULT_TRANSITIONS.copy())
    confusions: list = field(default_factory=default_stager_confusions)
    stager_names: tuple[str, ...] = ()
    concentration: float = 1.0
    seed: int = 0
    age_range: tuple[float, float] = (5.0, 10.0)
    ahi_scale: float = 4.0
    validation_fraction: float = 0.0

    def __post_init__(self):
        self.transitions = _check_stochastic(self.transitions, "transitions")
        self.confusions = [_check_stochastic(c, f"confusion[{k}]") for k, c in enumerate(self.confusions)]
        if not self.confusions:
            raise InvalidStochasticMatrix("at least one stager confusion matrix is required")
        if not self.stager_names:
            self.stager_names = tuple(f"stager{k + 1}" for k in range(len(self.confusions)))
        self.stager_names = tuple(self.stager_names)
        if len(self.stager_names) != len(self.confusions):
            raise ValueError("one stager name per confusion matrix is required")
        if not self.concentration > 0:
            raise ValueError("concentration must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for key in ("stager_names", "age_range"):
            if key in d:
                d[key] = tuple(d[key])
        if "confusions" in d:
            d["confusions"] = [np.asarray(c) for c in d["confusions"]]
        if "transitions" in d:
            d["transitions"] = np.asarray(d["transitions"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_recordings": self.n_recordings,
            "epochs": self.epochs,
            "transitions": self.transitions.tolist(),
            "confusions": [c.tolist() for c in self.confusions],
            "stager_names": list(self.stager_names),
            "concentration": self.concentration,
            "seed": self.seed,
            "age_range": list(self.age_range),
            "ahi_scale": self.ahi_scale,
            "validation_fraction": self.validation_fraction,
        }


@dataclass
class SyntheticCohort:
    manifest: CohortManifest
    truths: list[Hypnogram]
    stager_sets: list[StagerSet]


def _sample_chain(rng: np.random.Generator, transitions: np.ndarray, n: int) -> np.ndarray:
    cum = np.cumsum(transitions, axis=1)
    u = rng.random(n)
    out = np.empty(n, dtype=np.int8)
    if n == 0:
        return out
    state = int(np.searchsorted(np.cumsum(DEFAULT_INITIAL), u[0], side="right"))
    out[0] = min(state, N_STAGES - 1)
    for k in range(1, n):
        out[k] = min(int(np.searchsorted(cum[out[k - 1]], u[k], side="right")), N_STAGES - 1)
    return out


def _sample_rows(rng: np.random.Generator, truth: np.ndarray, confusion: np.ndarray,
                 concentration: float) -> np.ndarray:
    n = truth.size
    cum = np.cumsum(confusion, axis=1)
    decision = (rng.random(n)[:, None] > cum[truth]).sum(axis=1).clip(0, N_STAGES - 1)
    q = rng.dirichlet(np.ones(N_STAGES), size=n)
    # move the largest draw onto the decided stage, then sharpen monotonically
    top = q.argmax(axis=1)
    rows = np.arange(n)
    q_top, q_dec = q[rows, top].copy(), q[rows, decision].copy()
    q[rows, decision], q[rows, top] = q_top, q_dec
    p = q ** concentration
    return p / p.sum(axis=1, keepdims=True)


def generate_synthetic_cohort(spec: SynthSpec) -> SyntheticCohort:
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_recordings)
    entries, truths, sets = [], [], []
    n_val = int(round(spec.validation_fraction * spec.n_recordings))
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        rec_id = f"rec{k:04d}"
        age = round(float(rng.uniform(*spec.age_range)), 2)
        ahi = round(float(rng.exponential(spec.ahi_scale)), 2)
        truth = _sample_chain(rng, spec.transitions, spec.epochs)
        outputs = [ProbSeq(_sample_rows(rng, truth, c, spec.concentration)) for c in spec.confusions]
        tag = "validation" if k < n_val else "test"
        entries.append(RecordingEntry(rec_id, age, ahi, tag, {"hypnogram": f"truth/{rec_id}.csv"}))
        hyp = Hypnogram(truth)
        truths.append(hyp)
        sets.append(StagerSet(spec.stager_names, tuple(outputs), hyp))
    return SyntheticCohort(CohortManifest(entries), truths, sets)


def write_cohort(cohort: SyntheticCohort, out_dir: str | Path) -> Path:
    """Write the manifest, truth hypnograms and stager CSVs under ``out_dir``.

    Layout: ``manifest.json``, ``truth/<id>.csv``, ``stagers/<name>/<id>.csv``.
    Returns the manifest path.
    """
    out = Path(out_dir)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    for entry, truth, sset in zip(cohort.manifest, cohort.truths, cohort.stager_sets):
        truth.write_csv(out / "truth" / f"{entry.id}.csv")
        for name, probs in zip(sset.names, sset.outputs):
            d = out / "stagers" / name
            d.mkdir(parents=True, exist_ok=True)
            probs.write_csv(d / f"{entry.id}.csv")
    path = out / "manifest.json"
    cohort.manifest.to_json(path)
    return path
