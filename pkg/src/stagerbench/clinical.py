"""
Clinical sleep-architecture measures derived from a hypnogram, their
relative errors against the scored hypnogram, and a paired t-test to
compare two scorers' errors across recordings.

Conventions (30-s epochs, all durations in minutes):

* sleep onset is the first non-wake epoch;
* TST counts every non-wake epoch;
* WASO counts wake epochs strictly between sleep onset and the last sleep
  epoch, so terminal wake is excluded;
* REM latency runs from sleep onset to the first REM epoch;
* sleep efficiency is TST over the whole scored duration.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .core import SleepStage, as_labels
from .exceptions import EmptyHypnogram, TooFewPairs

__all__ = [
    "MEASURES",
    "ClinicalMeasures",
    "clinical_measures",
    "relative_errors",
    "paired_t_test",
]

EPOCH_MINUTES = 0.5
MEASURES = ("tst", "waso", "rem_latency", "sleep_efficiency")


@dataclass(frozen=True)
class ClinicalMeasures:
    tst: float
    waso: float
    rem_latency: float | None
    sleep_efficiency: float

    def to_dict(self) -> dict:
        return asdict(self)


def clinical_measures(hypnogram) -> ClinicalMeasures:
    stages = as_labels(hypnogram)
    if stages.size == 0:
        raise EmptyHypnogram("cannot derive clinical measures from an empty hypnogram")
    sleep = np.flatnonzero(stages != SleepStage.W)
    if sleep.size == 0:
        return ClinicalMeasures(0.0, 0.0, None, 0.0)
    onset, last = sleep[0], sleep[-1]
    tst = EPOCH_MINUTES * sleep.size
    waso = EPOCH_MINUTES * int(np.sum(stages[onset:last + 1] == SleepStage.W))
    rem = np.flatnonzero(stages == SleepStage.REM)
    latency = EPOCH_MINUTES * float(rem[0] - onset) if rem.size else None
    se = 100.0 * tst / (EPOCH_MINUTES * stages.size)
    return ClinicalMeasures(tst, waso, latency, se)


def relative_errors(pred: ClinicalMeasures, true: ClinicalMeasures) -> dict[str, float | None]:
    """Absolute relative error in percent for each measure.

    A measure's error is ``None`` when its true value is 0 or either side
    has no REM latency.
    """
    out = {}
    for name in MEASURES:
        p, t = getattr(pred, name), getattr(true, name)
        if p is None or t is None or t == 0:
            out[name] = None
        else:
            out[name] = 100.0 * abs(p - t) / abs(t)
    return out


def _present(v) -> bool:
    return v is not None and not (isinstance(v, float) and math.isnan(v))


def paired_t_test(errors_a: Sequence[float | None], errors_b: Sequence[float | None]) -> tuple[float, float]:
    """Two-sided paired t-test on ``a - b``.

    Pairs with a missing value on either side are dropped. Zero-variance
    differences give ``t = 0, p = 1`` when all differences are zero and
    ``t = +/-inf, p = 0`` otherwise.

    Returns
    -------
    t : float
    p : float
    """
    if len(errors_a) != len(errors_b):
        raise TooFewPairs("paired samples must have equal length")
    pairs = [(float(a), float(b)) for a, b in zip(errors_a, errors_b) if _present(a) and _present(b)]
    n = len(pairs)
    if n < 2:
        raise TooFewPairs(f"need at least 2 complete pairs, got {n}")
    d = np.array([a - b for a, b in pairs])
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        if mean == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), n - 1)
    return float(t), float(min(p, 1.0))
