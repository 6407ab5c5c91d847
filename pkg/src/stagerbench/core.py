"""
Shared domain types: sleep stages, hypnograms, probability sequences,
stager sets and cohort manifests.

Hypnograms are stored as integer arrays of canonical stage indices
(W=0, N1=1, N2=2, N3=3, REM=4). Every analytic function in the package also
accepts a plain array-like of such indices wherever a :class:`Hypnogram` is
expected.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .exceptions import (
    EmptyStagerSet,
    InvalidProbabilities,
    LengthMismatch,
    NegativeAhi,
    UnknownStageCode,
)

logger = logging.getLogger("stagerbench")

N_STAGES = 5
EPOCH_SECONDS = 30
PROB_TOLERANCE = 1e-6

__all__ = [
    "N_STAGES",
    "EPOCH_SECONDS",
    "SleepStage",
    "SeverityClass",
    "Hypnogram",
    "ProbSeq",
    "StagerSet",
    "RecordingEntry",
    "CohortManifest",
    "stage_from_code",
    "severity_of",
    "hardened",
    "as_labels",
    "as_probs",
]


class SleepStage(enum.IntEnum):
    W = 0
    N1 = 1
    N2 = 2
    N3 = 3
    REM = 4


_CODE_MAP = {
    "W": SleepStage.W,
    "WAKE": SleepStage.W,
    "N1": SleepStage.N1,
    "N2": SleepStage.N2,
    "N3": SleepStage.N3,
    "R": SleepStage.REM,
    "REM": SleepStage.REM,
}


class SeverityClass(enum.Enum):
    NONE = "None"
    MILD = "Mild"
    MODERATE = "Moderate"
    SEVERE = "Severe"
    UNKNOWN = "Unknown"


def stage_from_code(code: str | int) -> SleepStage:
    """Parse a stage code (``W, N1, N2, N3, R, REM`` or ``0..4``), case-insensitively."""
    if isinstance(code, (bool, np.bool_)):
        raise UnknownStageCode(f"not a stage code: {code!r}")
    if isinstance(code, (int, np.integer)):
        if 0 <= int(code) < N_STAGES:
            return SleepStage(int(code))
        raise UnknownStageCode(f"stage index out of range: {code!r}")
    text = str(code).strip().upper()
    if text in _CODE_MAP:
        return _CODE_MAP[text]
    if text.isdigit() and int(text) < N_STAGES:
        return SleepStage(int(text))
    raise UnknownStageCode(f"unknown stage code: {code!r}")


def severity_of(ahi: float | None) -> SeverityClass:
    """OSA severity bin of an apnea-hypopnea index.

    Bins are left-closed: ``[0, 1)`` None, ``[1, 5)`` Mild, ``[5, 10)`` Moderate
    and ``[10, inf)`` Severe. ``None`` or NaN means the AHI is unknown.
    """
    if ahi is None or (isinstance(ahi, float) and math.isnan(ahi)):
        return SeverityClass.UNKNOWN
    ahi = float(ahi)
    if ahi < 0:
        raise NegativeAhi(f"AHI must be nonnegative, got {ahi}")
    if ahi < 1:
        return SeverityClass.NONE
    if ahi < 5:
        return SeverityClass.MILD
    if ahi < 10:
        return SeverityClass.MODERATE
    return SeverityClass.SEVERE


def as_labels(x: Any) -> np.ndarray:
    """Return the stage indices of a Hypnogram or array-like as an int array."""
    stages = x.stages if isinstance(x, Hypnogram) else x
    return np.asarray(stages, dtype=np.int64).reshape(-1)


def as_probs(x: Any) -> np.ndarray:
    """Return the L x C probability matrix of a ProbSeq or array-like."""
    probs = x.probs if isinstance(x, ProbSeq) else x
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2:
        arr = arr.reshape(-1, N_STAGES)
    return arr


@dataclass(frozen=True)
class Hypnogram:
    """Per-epoch stage sequence (30-s epochs)."""

    stages: np.ndarray
    epoch_seconds: int = EPOCH_SECONDS

    def __post_init__(self):
        arr = np.asarray(self.stages)
        if arr.dtype.kind in "OUS":
            arr = np.array([int(stage_from_code(c)) for c in arr.reshape(-1)], dtype=np.int8)
        arr = arr.astype(np.int8, copy=True).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() >= N_STAGES):
            raise UnknownStageCode("hypnogram contains stage indices outside 0..4")
        arr.flags.writeable = False
        object.__setattr__(self, "stages", arr)

    def __len__(self):
        return len(self.stages)

    @classmethod
    def from_codes(cls, codes: Sequence[str | int]) -> "Hypnogram":
        return cls(np.array([int(stage_from_code(c)) for c in codes], dtype=np.int8))

    @classmethod
    def read_csv(cls, path: str | Path) -> "Hypnogram":
        """Read one stage code per line; blank lines are ignored."""
        lines = Path(path).read_text().splitlines()
        return cls.from_codes([ln.split(",")[0] for ln in lines if ln.strip()])

    def write_csv(self, path: str | Path) -> None:
        names = [SleepStage(int(s)).name for s in self.stages]
        Path(path).write_text("".join(n + "\n" for n in names))


@dataclass(frozen=True)
class ProbSeq:
    """L x C matrix of per-epoch stage probabilities.

    Rows that are nonnegative but miss the sum-to-one tolerance are
    renormalized with a warning; negative, non-finite or all-zero rows raise
    :class:`InvalidProbabilities`.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.probs, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, N_STAGES)
        if arr.ndim != 2 or arr.shape[1] != N_STAGES:
            raise InvalidProbabilities(f"expected an L x {N_STAGES} matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidProbabilities("probabilities must be finite and nonnegative")
        sums = arr.sum(axis=1)
        if np.any(sums == 0):
            raise InvalidProbabilities("probability row sums to zero")
        off = np.abs(sums - 1.0) > PROB_TOLERANCE
        if np.any(off):
            logger.warning("renormalizing %d probability rows that do not sum to 1", int(off.sum()))
            arr[off] /= sums[off, None]
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    def __len__(self):
        return self.probs.shape[0]

    @classmethod
    def read_csv(cls, path: str | Path) -> "ProbSeq":
        text = Path(path).read_text()
        rows = [[float(v) for v in ln.split(",")] for ln in text.splitlines() if ln.strip()]
        return cls(np.array(rows, dtype=np.float64).reshape(-1, N_STAGES))

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text("".join(",".join(repr(float(v)) for v in row) + "\n" for row in self.probs))


@dataclass(frozen=True)
class StagerSet:
    """Aligned probability outputs of M stagers for one recording."""

    names: tuple[str, ...]
    outputs: tuple[ProbSeq, ...]
    truth: Hypnogram | None = None

    def __post_init__(self):
        outputs = tuple(o if isinstance(o, ProbSeq) else ProbSeq(o) for o in self.outputs)
        names = tuple(self.names)
        if not outputs:
            raise EmptyStagerSet("a stager set needs at least one stager")
        if len(names) != len(outputs):
            raise LengthMismatch("one name per stager output is required")
        n = len(outputs[0])
        if any(len(o) != n for o in outputs):
            raise LengthMismatch("stager outputs have different lengths")
        truth = self.truth
        if truth is not None:
            truth = truth if isinstance(truth, Hypnogram) else Hypnogram(truth)
            if len(truth) != n:
                raise LengthMismatch(f"truth has {len(truth)} epochs, stagers have {n}")
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "truth", truth)

    @property
    def n_stagers(self) -> int:
        return len(self.outputs)

    @property
    def n_epochs(self) -> int:
        return len(self.outputs[0])

    def stacked(self) -> np.ndarray:
        """Probabilities as an (M, L, C) array."""
        return np.stack([o.probs for o in self.outputs])


def hardened(probseq: ProbSeq | np.ndarray) -> Hypnogram:
    """Per-epoch argmax; ties go to the lowest stage index."""
    probs = as_probs(probseq)
    return Hypnogram(np.argmax(probs, axis=1) if len(probs) else np.zeros(0, dtype=np.int8))


@dataclass
class RecordingEntry:
    id: str
    age: float
    ahi: float | None = None
    subset_tag: str = ""
    files: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.age > 0:
            raise ValueError(f"recording {self.id}: age must be positive")
        if self.ahi is not None and self.ahi < 0:
            raise NegativeAhi(f"recording {self.id}: AHI must be nonnegative")

    @property
    def severity(self) -> SeverityClass:
        return severity_of(self.ahi)

    def to_dict(self) -> dict:
        return {"id": self.id, "age": self.age, "ahi": self.ahi,
                "subset_tag": self.subset_tag, "files": self.files}


@dataclass
class CohortManifest:
    recordings: list[RecordingEntry]

    def __len__(self):
        return len(self.recordings)

    def __iter__(self):
        return iter(self.recordings)

    @classmethod
    def from_json(cls, path: str | Path) -> "CohortManifest":
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict):
            data = data["recordings"]
        return cls([RecordingEntry(**entry) for entry in data])

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps([r.to_dict() for r in self.recordings], indent=1) + "\n")
