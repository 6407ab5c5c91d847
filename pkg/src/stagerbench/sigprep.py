"""
PSG signal preprocessing: resampling, outlier clipping, amplitude scaling,
band-pass filtering, z-normalization, flat-line quality gating, 30-s epoch
segmentation and log-magnitude spectrograms.

Every operation takes and returns :class:`~stagerbench.edf_io.SignalTrace`
objects without mutating its input, and tags the output's ``history`` with
its stage name.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import signal as sps

from .core import EPOCH_SECONDS
from .edf_io import SignalTrace
from .exceptions import (
    EmptyTrace,
    InvalidBand,
    MismatchedChannelLengths,
    WrongFrameLength,
    ZeroRate,
    ZeroVariance,
)

__all__ = [
    "TARGET_RATE",
    "EpochGrid",
    "Spectrogram",
    "QualityReport",
    "PrepResult",
    "resample",
    "clip_outliers",
    "scale_to_unit",
    "bandpass",
    "znormalize",
    "quality_gate",
    "segment_epochs",
    "spectrogram",
    "preprocess",
    "PIPELINE_STAGES",
]

TARGET_RATE = 100.0
MIN_GOOD_SECONDS = 5 * 3600
EPOCH_SAMPLES = int(EPOCH_SECONDS * TARGET_RATE)
LOG_FLOOR = 1e-12

PIPELINE_STAGES = ("resample", "clip", "scale", "bandpass", "znorm")


@dataclass(frozen=True)
class QualityReport:
    good_seconds: float
    discarded_spans: list[tuple[float, float]]
    passed: bool
    window_ok: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, bool))

    def to_dict(self) -> dict:
        return {"good_seconds": self.good_seconds,
                "discarded_spans": [list(s) for s in self.discarded_spans],
                "passed": self.passed}


@dataclass(frozen=True)
class EpochGrid:
    """Stack of 30-s frames, shape ``(n_epochs, n_channels, samples_per_epoch)``.

    ``epoch_index[k]`` is the position of frame ``k`` in the original,
    unfiltered 30-s window grid of the recording.
    """

    epochs: np.ndarray
    channels: tuple[str, ...]
    recording_id: str = ""
    epoch_index: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    rate: float = TARGET_RATE

    def __len__(self):
        return self.epochs.shape[0]


@dataclass(frozen=True)
class Spectrogram:
    frames: np.ndarray

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def bin_count(self) -> int:
        return self.frames.shape[1]


def resample(trace: SignalTrace, target_rate: float = TARGET_RATE) -> SignalTrace:
    """Rational-factor polyphase resampling with a Kaiser-windowed sinc filter.

    The rate ratio is approximated by a fraction with denominator at most
    1000; identical rates return a copy of the input.
    """
    if not target_rate > 0 or not trace.rate > 0:
        raise ZeroRate("sampling rates must be positive")
    ratio = Fraction(target_rate / trace.rate).limit_denominator(1000)
    up, down = ratio.numerator, ratio.denominator
    if up == down or len(trace) == 0:
        n_out = int(round(len(trace) * up / down))
        out = trace.samples.copy() if up == down else np.zeros(n_out)
    else:
        out = sps.resample_poly(trace.samples, up, down)
    return trace.derive(out, "resample", rate=float(target_rate))


def clip_outliers(trace: SignalTrace, k: float = 6.0) -> SignalTrace:
    """Clamp samples to ``mean +/- k * std`` of the input trace."""
    if len(trace) == 0:
        raise EmptyTrace("cannot clip an empty trace")
    mu = trace.samples.mean()
    sigma = trace.samples.std()
    return trace.derive(np.clip(trace.samples, mu - k * sigma, mu + k * sigma), "clip")


def scale_to_unit(trace: SignalTrace) -> SignalTrace:
    """Divide by the maximum magnitude so the trace lies in [-1, 1]."""
    if len(trace) == 0:
        raise EmptyTrace("cannot scale an empty trace")
    peak = np.abs(trace.samples).max()
    out = trace.samples / peak if peak > 0 else trace.samples.copy()
    return trace.derive(out, "scale")


def bandpass(trace: SignalTrace, low: float = 0.3, high: float = 40.0, order: int = 4) -> SignalTrace:
    """Zero-phase Butterworth band-pass (forward-backward second-order sections)."""
    nyq = trace.rate / 2
    if not 0 < low < high < nyq:
        raise InvalidBand(f"need 0 < low < high < {nyq} Hz, got ({low}, {high})")
    sos = sps.butter(order, [low, high], btype="bandpass", fs=trace.rate, output="sos")
    x = trace.samples
    if len(x) == 0:
        return trace.derive(x.copy(), "bandpass")
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    return trace.derive(sps.sosfiltfilt(sos, x, padlen=max(padlen, 0)), "bandpass")


def znormalize(trace: SignalTrace) -> SignalTrace:
    """Shift to zero mean and scale to unit (population) standard deviation."""
    if len(trace) == 0:
        raise EmptyTrace("cannot normalize an empty trace")
    mu = trace.samples.mean()
    centered = trace.samples - mu
    sigma = np.sqrt(np.mean(centered ** 2))
    if sigma == 0 or sigma < 1e-15 * max(abs(mu), 1.0):
        raise ZeroVariance(f"trace {trace.label!r} has zero variance")
    out = centered / sigma
    # second pass removes rounding residue in mean and scale
    out -= out.mean()
    out /= np.sqrt(np.mean(out ** 2))
    return trace.derive(out, "znorm")


def _check_aligned(traces: Sequence[SignalTrace]) -> None:
    if not traces:
        raise MismatchedChannelLengths("at least one trace is required")
    rate, n = traces[0].rate, len(traces[0])
    for tr in traces[1:]:
        if tr.rate != rate or len(tr) != n:
            raise MismatchedChannelLengths(
                f"channel {tr.label!r} ({len(tr)} @ {tr.rate} Hz) differs from "
                f"{traces[0].label!r} ({n} @ {rate} Hz)")


def quality_gate(traces: Sequence[SignalTrace], eps: float = 1e-4,
                 window_seconds: float = EPOCH_SECONDS,
                 min_good_seconds: float = MIN_GOOD_SECONDS) -> QualityReport:
    """Flag flat (near-zero) windows and decide whether enough good data remains.

    A window is discarded when its peak magnitude on any channel falls below
    ``eps`` times that channel's whole-recording peak. Only complete windows
    are considered.
    """
    _check_aligned(traces)
    rate = traces[0].rate
    win = int(round(window_seconds * rate))
    n_win = len(traces[0]) // win if win > 0 else 0
    ok = np.ones(n_win, dtype=bool)
    for tr in traces:
        if n_win == 0:
            break
        frames = np.abs(tr.samples[:n_win * win]).reshape(n_win, win)
        peak = np.abs(tr.samples).max()
        ok &= frames.max(axis=1) >= eps * peak if peak > 0 else False

    spans = []
    start = None
    for i, good in enumerate(np.append(ok, True)):
        if not good and start is None:
            start = i
        elif good and start is not None:
            spans.append((start * window_seconds, i * window_seconds))
            start = None
    good_seconds = float(ok.sum() * window_seconds)
    return QualityReport(good_seconds, spans, good_seconds >= min_good_seconds, ok)


def segment_epochs(traces: Sequence[SignalTrace], quality: QualityReport | None = None,
                   recording_id: str = "", epoch_seconds: float = EPOCH_SECONDS) -> EpochGrid:
    """Cut aligned traces into non-overlapping epochs.

    The trailing partial epoch is dropped. Windows flagged in ``quality`` are
    left out; ``EpochGrid.epoch_index`` maps each kept frame back to its
    window position.
    """
    _check_aligned(traces)
    rate = traces[0].rate
    n = int(round(epoch_seconds * rate))
    n_ep = len(traces[0]) // n
    data = np.stack([tr.samples[:n_ep * n].reshape(n_ep, n) for tr in traces], axis=1)
    index = np.arange(n_ep)
    if quality is not None and quality.window_ok.size:
        keep = np.ones(n_ep, dtype=bool)
        m = min(n_ep, quality.window_ok.size)
        keep[:m] = quality.window_ok[:m]
        index = index[keep]
        data = data[keep]
    return EpochGrid(data, tuple(tr.label for tr in traces), recording_id, index, rate)


def spectrogram(frame: np.ndarray, rate: float = TARGET_RATE, window_seconds: float = 2.0,
                hop_seconds: float = 1.0, nfft: int = 256) -> Spectrogram:
    """Log-magnitude short-time spectrum of one 30-s epoch.

    With the defaults a 3000-sample frame gives 29 frames of 129 bins.
    """
    frame = np.asarray(frame, dtype=np.float64).reshape(-1)
    if frame.size != int(round(EPOCH_SECONDS * rate)):
        raise WrongFrameLength(f"expected {int(EPOCH_SECONDS * rate)} samples, got {frame.size}")
    win = int(round(window_seconds * rate))
    hop = int(round(hop_seconds * rate))
    n_frames = (frame.size - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    spec = np.abs(np.fft.rfft(frame[idx] * np.hamming(win), n=nfft, axis=1))
    return Spectrogram(np.log(np.maximum(spec, LOG_FLOOR)))


@dataclass(frozen=True)
class PrepResult:
    grid: EpochGrid
    quality: QualityReport
    traces: tuple[SignalTrace, ...]


def preprocess(traces: Mapping[str, SignalTrace] | Sequence[SignalTrace], recording_id: str = "",
               target_rate: float = TARGET_RATE, eps: float = 1e-4, clip_k: float = 6.0,
               low: float = 0.3, high: float = 40.0) -> PrepResult:
    """Run the full per-recording chain on each channel.

    Order: resample, quality mask, clip, scale to [-1, 1], band-pass,
    z-normalize, segment. Statistics are computed per channel over the whole
    trace; flagged windows are removed only at segmentation.
    """
    if isinstance(traces, Mapping):
        traces = [tr if tr.label else tr.derive(tr.samples, label=name) for name, tr in traces.items()]
    resampled = [resample(tr, target_rate) for tr in traces]
    n = min(len(tr) for tr in resampled)
    resampled = [tr.derive(tr.samples[:n]) for tr in resampled]
    quality = quality_gate(resampled, eps=eps)
    processed = []
    for tr in resampled:
        tr = clip_outliers(tr, clip_k)
        tr = scale_to_unit(tr)
        tr = bandpass(tr, low, high)
        tr = znormalize(tr)
        processed.append(tr)
    grid = segment_epochs(processed, quality, recording_id)
    return PrepResult(grid, quality, tuple(processed))
