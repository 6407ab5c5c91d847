import datetime

import numpy as np
import pytest

from stagerbench.edf_io import EdfHeader, EdfSignalSpec, edf_bytes


def make_header(n_signals=1, n_records=1, duration=1.0, **kw):
    fields = dict(version="0", patient_id="P", recording_id="R",
                  start_date=datetime.date(2012, 3, 4), start_time=datetime.time(22, 5, 7),
                  header_bytes=256 * (1 + n_signals), n_records=n_records,
                  record_duration=duration, n_signals=n_signals)
    fields.update(kw)
    return EdfHeader(**fields)


def make_spec(label="EEG", spr=4, pmin=-250.0, pmax=250.0, dmin=-32768, dmax=32767):
    return EdfSignalSpec(label, "AgAgCl", "uV", pmin, pmax, dmin, dmax, spr, "HP:0.1Hz")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_signal_edf():
    """Two signals, 3 records: EEG at 4 samples/record, EOG at 2."""
    specs = [make_spec("C4-A1", 4), make_spec("ROC-LOC", 2, -100.0, 100.0, -2048, 2047)]
    header = make_header(2, 3)
    eeg = np.arange(12, dtype=np.int16) * 100 - 600
    eog = np.array([-2048, 2047, 0, 1, -1, 5], dtype=np.int16)
    return header, specs, [eeg, eog], edf_bytes(header, specs, [eeg, eog])
