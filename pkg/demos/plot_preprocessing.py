"""
From an EDF night to model-ready epochs
=======================================

A synthetic two-channel night is written to EDF, read back by channel
label, then resampled, cleaned, filtered and cut into 30-s epochs.
"""

import tempfile
from pathlib import Path

import numpy as np

from stagerbench import preprocess, read_edf, spectrogram, write_edf
from stagerbench.edf_io import SignalTrace

rng = np.random.default_rng(0)

# six hours at 256 Hz: an alpha-band EEG with noise, and a chin EMG
rate = 256.0
t = np.arange(int(rate * 6 * 3600)) / rate
eeg = 25 * np.sin(2 * np.pi * 10 * t) + rng.normal(0, 8, t.size)
emg = rng.normal(0, 3, t.size)

# flatline the EMG for ten minutes to mimic a detached lead
emg[int(rate * 3600): int(rate * 4200)] = 0.0

tmp = Path(tempfile.mkdtemp())
write_edf(tmp / "night.edf", [SignalTrace(eeg, rate, "C4-M1", "uV"),
                              SignalTrace(emg, rate, "Chin1-Chin2", "uV")], record_duration=30.0)

# labels are matched after trimming and case folding; aliases cover renamed montages
traces = read_edf(tmp / "night.edf", ["c4-a1", "chin1-chin2"], aliases={"c4-a1": ["C4-M1"]})
print({name: (tr.rate, len(tr)) for name, tr in traces.items()})

result = preprocess(traces, "night")
q = result.quality
print(f"good time {q.good_seconds / 3600:.2f} h, passed={q.passed}, dropped spans={q.discarded_spans}")

# every trace records the stages it went through
print(result.traces[0].history)

grid = result.grid
print("epochs:", grid.epochs.shape, "first kept indices:", grid.epoch_index[:3])

# the log-power spectrogram of one epoch peaks near the 10 Hz bin
frames = spectrogram(grid.epochs[0, 0]).frames
print("spectrogram", frames.shape, "peak bin", int(np.bincount(frames.argmax(axis=1)).argmax()))
