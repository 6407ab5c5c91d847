"""
Structure of staging errors across several stagers.

An epoch is a *common* error when every stager misclassifies it; any other
misclassified epoch is an *other* error for the stagers that got it wrong.
Errors are further described by the true stage, by the signed distance to
the nearest stage transition in the true hypnogram, and by the
(previous, current, next) stage pattern around them.

Transition distance convention: a boundary lies between epochs ``j`` and
``j + 1`` when their true stages differ. An epoch immediately before a
boundary has distance -1, immediately after it +1, and so on. An epoch whose
two nearest boundaries are equally far on both sides gets an
:class:`Equidistant` marker instead of a signed count; :data:`RAPID`, the
marker at distance 1, is an epoch with boundaries on both sides. A
hypnogram without transitions yields :data:`NO_TRANSITION` (``+inf``).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import N_STAGES, SleepStage, as_labels
from .exceptions import IndexOutOfRange, LengthMismatch, SingleStager

__all__ = [
    "Equidistant",
    "RAPID",
    "NO_TRANSITION",
    "ErrorRecord",
    "ErrorAnalysis",
    "classify_errors",
    "error_stage_distribution",
    "transition_distance",
    "transition_pattern",
    "distance_bucket",
    "distance_histogram",
    "pattern_counts",
    "HISTOGRAM_BUCKETS",
]


@dataclass(frozen=True)
class Equidistant:
    """Epoch whose nearest boundaries on both sides are ``distance`` epochs away."""

    distance: int

    def __neg__(self):
        return self

    def __str__(self):
        return "rapid" if self.distance == 1 else f"equidistant{self.distance}"


RAPID = Equidistant(1)
NO_TRANSITION = math.inf
MAX_BUCKET = 4
HISTOGRAM_BUCKETS = (
    ("rapid",)
    + tuple(f"{d}" for d in range(-MAX_BUCKET, 0))
    + tuple(f"+{d}" for d in range(1, MAX_BUCKET + 1))
    + ("equidistant", "beyond")
)


def _check_index(n: int, i: int) -> None:
    if not 0 <= i < n:
        raise IndexOutOfRange(f"epoch index {i} outside 0..{n - 1}")


def transition_distance(truth, i: int):
    """Signed distance from epoch ``i`` to its nearest stage transition.

    Returns
    -------
    int, Equidistant or float
        Negative when the epoch lies before its nearest transition, positive
        after; :data:`RAPID` / :class:`Equidistant` on ties;
        :data:`NO_TRANSITION` when the hypnogram never changes stage.
    """
    t = as_labels(truth)
    _check_index(t.size, i)
    boundaries = np.flatnonzero(t[1:] != t[:-1])  # boundary j sits between j and j+1
    if boundaries.size == 0:
        return NO_TRANSITION
    after = boundaries[boundaries >= i]
    before = boundaries[boundaries < i]
    d_ahead = int(after[0] - i + 1) if after.size else None
    d_behind = int(i - before[-1]) if before.size else None
    if d_ahead is not None and d_behind is not None and d_ahead == d_behind:
        return Equidistant(d_ahead)
    if d_behind is None or (d_ahead is not None and d_ahead < d_behind):
        return -d_ahead
    return d_behind


def transition_pattern(truth, i: int) -> tuple[SleepStage, SleepStage, SleepStage]:
    """(previous, current, next) true stages; edge epochs stand in for missing neighbours."""
    t = as_labels(truth)
    _check_index(t.size, i)
    prev = t[i - 1] if i > 0 else t[i]
    nxt = t[i + 1] if i + 1 < t.size else t[i]
    return SleepStage(int(prev)), SleepStage(int(t[i])), SleepStage(int(nxt))


def distance_bucket(distance) -> str:
    if isinstance(distance, Equidistant):
        if distance.distance == 1:
            return "rapid"
        return "equidistant" if distance.distance <= MAX_BUCKET else "beyond"
    if math.isinf(distance) or abs(distance) > MAX_BUCKET:
        return "beyond"
    return f"{int(distance)}" if distance < 0 else f"+{int(distance)}"


@dataclass(frozen=True)
class ErrorRecord:
    epoch_index: int
    truth_stage: SleepStage
    predicted: dict[str, SleepStage]
    is_common: bool
    transition_distance: int | Equidistant | float
    pattern: tuple[SleepStage, SleepStage, SleepStage]
    recording_id: str = ""

    def wrong_by(self, stager: str) -> bool:
        return self.predicted[stager] != self.truth_stage

    def to_dict(self) -> dict:
        d = self.transition_distance
        if isinstance(d, Equidistant):
            dist = str(d)
        elif math.isinf(d):
            dist = None
        else:
            dist = int(d)
        return {
            "recording_id": self.recording_id,
            "epoch_index": self.epoch_index,
            "truth": self.truth_stage.name,
            "predicted": {k: v.name for k, v in self.predicted.items()},
            "is_common": self.is_common,
            "transition_distance": dist,
            "bucket": distance_bucket(d),
            "pattern": [s.name for s in self.pattern],
        }


@dataclass
class ErrorAnalysis:
    records: list[ErrorRecord]
    stagers: tuple[str, ...]
    n_errors: dict[str, int]
    n_common: int

    def fractions(self) -> dict[str, tuple[float, float]]:
        """Per stager (common share, other share) of its own errors."""
        out = {}
        for name in self.stagers:
            n = self.n_errors[name]
            out[name] = (self.n_common / n, 1.0 - self.n_common / n) if n else (0.0, 0.0)
        return out

    def __add__(self, other: "ErrorAnalysis") -> "ErrorAnalysis":
        if other.stagers != self.stagers:
            raise LengthMismatch("cannot merge analyses over different stagers")
        return ErrorAnalysis(
            self.records + other.records,
            self.stagers,
            {k: self.n_errors[k] + other.n_errors[k] for k in self.stagers},
            self.n_common + other.n_common,
        )


def classify_errors(predictions: Mapping[str, object], truth, recording_id: str = "") -> ErrorAnalysis:
    """Split every misclassified epoch into common and other errors.

    Parameters
    ----------
    predictions : mapping
        Stager name to hardened hypnogram; include ensemble outputs here to
        count them in the intersection.
    truth : hypnogram
    """
    if len(predictions) < 2:
        raise SingleStager("common errors need at least two stagers")
    t = as_labels(truth)
    names = tuple(predictions)
    rows = [as_labels(predictions[n]) for n in names]
    if any(r.size != t.size for r in rows):
        raise LengthMismatch("predictions and truth differ in length")
    preds = np.stack(rows) if t.size else np.empty((len(names), 0), dtype=np.int8)
    wrong = preds != t[None, :]
    common = wrong.all(axis=0)
    records = []
    for i in np.flatnonzero(wrong.any(axis=0)):
        i = int(i)
        records.append(ErrorRecord(
            epoch_index=i,
            truth_stage=SleepStage(int(t[i])),
            predicted={n: SleepStage(int(preds[k, i])) for k, n in enumerate(names)},
            is_common=bool(common[i]),
            transition_distance=transition_distance(t, i),
            pattern=transition_pattern(t, i),
            recording_id=recording_id,
        ))
    n_errors = {n: int(wrong[k].sum()) for k, n in enumerate(names)}
    return ErrorAnalysis(records, names, n_errors, int(common.sum()))


def _select(records: Sequence[ErrorRecord], stager: str, kind: str) -> list[ErrorRecord]:
    if kind not in ("all", "common", "other"):
        raise ValueError(f"kind must be 'all', 'common' or 'other', got {kind!r}")
    mine = [r for r in records if r.wrong_by(stager)]
    if kind == "common":
        return [r for r in mine if r.is_common]
    if kind == "other":
        return [r for r in mine if not r.is_common]
    return mine


def error_stage_distribution(records: Sequence[ErrorRecord], stagers: Sequence[str],
                             kind: str = "all") -> dict[str, np.ndarray]:
    """Fraction of each stager's errors falling on each true stage (zeros when it has none)."""
    out = {}
    for name in stagers:
        counts = np.zeros(N_STAGES)
        for r in _select(records, name, kind):
            counts[r.truth_stage] += 1
        total = counts.sum()
        out[name] = counts / total if total else counts
    return out


def distance_histogram(records: Sequence[ErrorRecord], stagers: Sequence[str],
                       kind: str = "common") -> dict[str, dict[str, int]]:
    """Per stager, counts of its errors in each transition-distance bucket."""
    out = {}
    for name in stagers:
        hist = dict.fromkeys(HISTOGRAM_BUCKETS, 0)
        for r in _select(records, name, kind):
            hist[distance_bucket(r.transition_distance)] += 1
        out[name] = hist
    return out


def pattern_counts(records: Sequence[ErrorRecord], stagers: Sequence[str] | None = None,
                   kind: str = "common") -> Counter:
    """Counts of (previous, current, next) patterns.

    For ``kind="common"`` every common error is counted once; otherwise the
    records are those of the first stager in ``stagers``.
    """
    if kind == "common":
        chosen = [r for r in records if r.is_common]
    else:
        if not stagers:
            raise ValueError("a stager is needed for non-common patterns")
        chosen = _select(records, stagers[0], kind)
    return Counter(tuple(s.name for s in r.pattern) for r in chosen)
