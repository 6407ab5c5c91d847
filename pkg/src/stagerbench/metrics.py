"""
Staging performance, predictive-uncertainty and agreement statistics.

Class-averaged scores (MF1, sensitivity, specificity) average one-vs-rest
values over the stages that occur in either the truth or the prediction.
Pass ``absent="zero"`` to average over all five stages instead, scoring
absent stages as 0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .core import N_STAGES, SeverityClass, as_labels, as_probs, severity_of
from .exceptions import DegenerateKappa, LengthMismatch

__all__ = [
    "ConfusionMatrix",
    "MetricReport",
    "McNemarResult",
    "RecordingResult",
    "confusion",
    "cohen_kappa",
    "overall_metrics",
    "evaluate",
    "nll",
    "brier",
    "mcnemar",
    "mcnemar_from_counts",
    "pairwise_kappa",
    "stratified_metrics",
    "age_bins_default",
]

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ConfusionMatrix:
    """C x C counts, rows are truth and columns are prediction."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    kappa: float
    mf1: float
    sensitivity: float
    specificity: float
    per_class_f1: tuple[float, ...]
    nll: float | None = None
    brier: float | None = None
    n_epochs: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class_f1"] = list(self.per_class_f1)
        return d


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p, t = as_labels(pred), as_labels(truth)
    if p.shape != t.shape:
        raise LengthMismatch(f"prediction has {p.size} epochs, truth has {t.size}")
    return p, t


def confusion(pred, truth, n_classes: int = N_STAGES) -> ConfusionMatrix:
    """Count (truth, prediction) pairs."""
    p, t = _pair(pred, truth)
    counts = np.bincount(t * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes).astype(np.int64))


def cohen_kappa(cm: ConfusionMatrix | np.ndarray) -> float:
    """Chance-corrected agreement from a confusion matrix.

    When chance agreement is 1 (both raters use a single identical label)
    kappa is reported as 1 if observed agreement is also 1; otherwise
    :class:`DegenerateKappa` is raised.
    """
    counts = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        raise DegenerateKappa("kappa is undefined for an empty confusion matrix")
    p_o = np.trace(counts) / total
    p_e = float(np.dot(counts.sum(axis=1), counts.sum(axis=0))) / total ** 2
    if p_e >= 1.0:
        if p_o >= 1.0:
            return 1.0
        raise DegenerateKappa("chance agreement is 1 while observed agreement is not")
    return float((p_o - p_e) / (1.0 - p_e))


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0/0 means there was nothing to get wrong: score it as 1
    out = np.ones_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def nll(probs, truth) -> float:
    """Mean negative log-likelihood of the true stage, probabilities floored at 1e-12."""
    P, t = as_probs(probs), as_labels(truth)
    if P.shape[0] != t.size:
        raise LengthMismatch("probabilities and truth differ in length")
    if t.size == 0:
        return float("nan")
    return float(-np.mean(np.log(np.maximum(P[np.arange(t.size), t], PROB_FLOOR))))


def brier(probs, truth) -> float:
    """Mean over epochs of the class-averaged squared error to the one-hot truth."""
    P, t = as_probs(probs), as_labels(truth)
    if P.shape[0] != t.size:
        raise LengthMismatch("probabilities and truth differ in length")
    if t.size == 0:
        return float("nan")
    Y = np.zeros_like(P)
    Y[np.arange(t.size), t] = 1.0
    return float(np.mean(np.mean((Y - P) ** 2, axis=1)))


def overall_metrics(cm: ConfusionMatrix, probseq=None, truth=None, absent: str = "exclude") -> MetricReport:
    """Accuracy, kappa, macro F1, macro sensitivity/specificity, NLL and Brier score.

    Parameters
    ----------
    cm : ConfusionMatrix
        Hard-decision counts.
    probseq, truth : optional
        Probabilities and true stages for the uncertainty scores; both are
        ``None`` in the report when omitted.
    absent : {"exclude", "zero"}
        How stages missing from both truth and prediction enter the macro
        averages.
    """
    if absent not in ("exclude", "zero"):
        raise ValueError(f"absent must be 'exclude' or 'zero', got {absent!r}")
    counts = np.asarray(cm.counts, dtype=np.float64)
    total = counts.sum()
    tp = np.diag(counts)
    fn = counts.sum(axis=1) - tp
    fp = counts.sum(axis=0) - tp
    tn = total - tp - fn - fp
    present = (counts.sum(axis=1) + counts.sum(axis=0)) > 0

    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    f1[~present] = 0.0
    if absent == "exclude":
        mask = present
    else:
        mask = np.ones_like(present)
        sens = np.where(present, sens, 0.0)
        spec = np.where(present, spec, 0.0)

    def macro(v):
        return float(v[mask].mean()) if mask.any() else float("nan")

    accuracy = float(tp.sum() / total) if total else float("nan")
    kappa = cohen_kappa(counts) if total else float("nan")
    report_nll = report_brier = None
    if probseq is not None and truth is not None:
        report_nll, report_brier = nll(probseq, truth), brier(probseq, truth)
    return MetricReport(accuracy, kappa, macro(f1), macro(sens), macro(spec),
                        tuple(float(v) for v in f1), report_nll, report_brier, int(total))


def evaluate(probseq, truth, absent: str = "exclude") -> MetricReport:
    """Convenience wrapper: harden ``probseq`` and compute :func:`overall_metrics`."""
    P = as_probs(probseq)
    pred = np.argmax(P, axis=1) if len(P) else np.zeros(0, np.int64)
    return overall_metrics(confusion(pred, truth), P, truth, absent=absent)


@dataclass(frozen=True)
class McNemarResult:
    statistic: float
    p_value: float
    b: int
    c: int
    exact: bool


def mcnemar_from_counts(b: int, c: int, correction: bool = True,
                        exact: bool | str = False) -> McNemarResult:
    """McNemar's test on the discordant counts ``b`` and ``c``.

    Parameters
    ----------
    b, c : int
        Epochs where only the first (``b``) or only the second (``c``)
        classifier is correct.
    correction : bool
        Apply the continuity correction ``(|b - c| - 1)^2 / (b + c)``.
    exact : bool or "auto"
        Report the exact two-sided binomial p-value instead of the chi-square
        tail. ``"auto"`` switches to it when ``b + c < 25``.
    """
    b, c = int(b), int(c)
    n = b + c
    if n == 0:
        return McNemarResult(0.0, 1.0, b, c, False)
    diff = abs(b - c) - 1 if correction else abs(b - c)
    statistic = diff ** 2 / n
    use_exact = (n < 25) if exact == "auto" else bool(exact)
    if use_exact:
        p = min(1.0, 2.0 * stats.binom.cdf(min(b, c), n, 0.5))
    else:
        p = float(stats.chi2.sf(statistic, 1))
    return McNemarResult(float(statistic), float(p), b, c, use_exact)


def mcnemar(pred_a, pred_b, truth, correction: bool = True, exact: bool | str = False) -> McNemarResult:
    """McNemar's test comparing two classifiers' per-epoch correctness."""
    a, t = _pair(pred_a, truth)
    bb, _ = _pair(pred_b, truth)
    ok_a, ok_b = a == t, bb == t
    return mcnemar_from_counts(int(np.sum(ok_a & ~ok_b)), int(np.sum(~ok_a & ok_b)), correction, exact)


def pairwise_kappa(stagers: Sequence, truth=None) -> np.ndarray:
    """Symmetric kappa matrix between all hypnograms.

    When ``truth`` is given it is appended as the last row/column. The
    diagonal is 1.
    """
    seqs = [as_labels(s) for s in stagers]
    if truth is not None:
        seqs.append(as_labels(truth))
    n = len(seqs)
    if any(s.shape != seqs[0].shape for s in seqs):
        raise LengthMismatch("hypnograms differ in length")
    out = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = cohen_kappa(confusion(seqs[i], seqs[j]))
    return out


@dataclass
class RecordingResult:
    """One recording's truth and stager outputs, with its cohort metadata."""

    id: str
    age: float
    ahi: float | None
    truth: np.ndarray
    probs: dict[str, np.ndarray]

    @property
    def severity(self) -> SeverityClass:
        return severity_of(self.ahi)


def age_bins_default(ages: Iterable[float]) -> list[float]:
    """Integer 1-year bin edges covering the observed ages."""
    ages = list(ages)
    lo, hi = math.floor(min(ages)), math.floor(max(ages)) + 1
    return [float(v) for v in range(lo, hi + 1)]


def _age_label(age: float, edges: Sequence[float]) -> str | None:
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo <= age < hi:
            return f"[{lo:g},{hi:g})"
    return None


def stratified_metrics(results: Sequence[RecordingResult], by: str | Callable = "severity",
                       age_bins: Sequence[float] | None = None,
                       absent: str = "exclude") -> dict[str, dict[str, MetricReport]]:
    """Metrics per stratum and stager, epochs pooled within each stratum.

    Parameters
    ----------
    results : sequence of RecordingResult
    by : "severity", "age" or callable
        Stratification key. A callable maps a RecordingResult to a label
        (or ``None`` to leave the recording out).
    age_bins : sequence of float, optional
        Left-closed bin edges for ``by="age"``; defaults to 1-year bins.

    Returns
    -------
    dict
        ``{stratum: {stager: MetricReport}}``; strata without recordings are
        omitted.
    """
    if by == "severity":
        key = lambda r: r.severity.value  # noqa: E731
    elif by == "age":
        edges = list(age_bins) if age_bins is not None else age_bins_default(r.age for r in results)
        key = lambda r: _age_label(r.age, edges)  # noqa: E731
    elif callable(by):
        key = by
    else:
        raise ValueError(f"unknown stratification {by!r}")

    groups: dict[str, list[RecordingResult]] = {}
    for r in results:
        label = key(r)
        if label is not None:
            groups.setdefault(label, []).append(r)

    if by == "severity":
        order = [s.value for s in SeverityClass]
        labels = sorted(groups, key=order.index)
    elif by == "age":
        labels = sorted(groups, key=lambda lab: float(lab[1:].split(",")[0]))
    else:
        labels = list(groups)
    table = {}
    for label in labels:
        members = groups[label]
        truth = np.concatenate([m.truth for m in members])
        table[label] = {
            name: evaluate(np.concatenate([m.probs[name] for m in members]), truth, absent)
            for name in members[0].probs
        }
    return table
