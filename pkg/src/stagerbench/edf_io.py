"""
Reading (and writing) plain EDF files, plus a raw little-endian float32 format.

Only continuous EDF is handled: no EDF+ annotations, no BDF. Physical values
are obtained from the stored 16-bit digital samples by the affine map defined
by each signal's physical/digital extrema.
"""
from __future__ import annotations

import datetime
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    ChannelNotFound,
    InconsistentHeaderBytes,
    InvalidSignalSpec,
    MalformedNumericField,
    OddByteCount,
    TruncatedHeader,
    TruncatedRecord,
    ZeroRate,
)

logger = logging.getLogger("stagerbench")

__all__ = [
    "EdfHeader",
    "EdfSignalSpec",
    "SignalTrace",
    "parse_edf_header",
    "read_signal",
    "read_edf",
    "edf_bytes",
    "write_edf",
    "read_raw_float",
    "write_raw_float",
    "load_raw",
]

# (name, width) of the fixed part and of each per-signal block
_MAIN_FIELDS = (
    ("version", 8),
    ("patient_id", 80),
    ("recording_id", 80),
    ("start_date", 8),
    ("start_time", 8),
    ("header_bytes", 8),
    ("reserved", 44),
    ("n_records", 8),
    ("record_duration", 8),
    ("n_signals", 4),
)
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


@dataclass(frozen=True)
class EdfHeader:
    version: str
    patient_id: str
    recording_id: str
    start_date: datetime.date
    start_time: datetime.time
    header_bytes: int
    n_records: int
    record_duration: float
    n_signals: int


@dataclass(frozen=True)
class EdfSignalSpec:
    label: str
    transducer: str
    physical_dimension: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    samples_per_record: int
    prefiltering: str

    @property
    def quantum(self) -> float:
        """Physical size of one digital step."""
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)


@dataclass(frozen=True)
class SignalTrace:
    """A sampled channel in physical units.

    ``history`` records the processing stages applied so far, and
    ``n_out_of_range`` counts digital samples that fell outside the declared
    digital range while decoding.
    """

    samples: np.ndarray
    rate: float
    label: str = ""
    unit: str = ""
    history: tuple[str, ...] = ()
    n_out_of_range: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not self.rate > 0:
            raise ZeroRate(f"sampling rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"trace {self.label!r} contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    def derive(self, samples: np.ndarray, stage: str | None = None, **changes) -> "SignalTrace":
        """Copy with new samples, optionally tagging a processing stage."""
        history = self.history + ((stage,) if stage else ())
        kwargs = dict(rate=self.rate, label=self.label, unit=self.unit,
                      history=history, n_out_of_range=self.n_out_of_range)
        kwargs.update(changes)
        return SignalTrace(samples, **kwargs)


def _ascii(block: bytes) -> str:
    return block.decode("ascii", errors="replace").strip()


def _number(text: str, name: str, kind=float):
    try:
        value = kind(text) if kind is float else int(text)
    except ValueError:
        raise MalformedNumericField(f"field {name!r} is not numeric: {text!r}") from None
    if kind is float and not math.isfinite(value):
        raise MalformedNumericField(f"field {name!r} is not finite: {text!r}")
    return value


def _parse_date(text: str) -> datetime.date:
    try:
        day, month, year = (int(p) for p in text.split("."))
        # EDF clipping date: years 85..99 are 19xx
        year += 1900 if year >= 85 else 2000
        return datetime.date(year, month, day)
    except ValueError:
        raise MalformedNumericField(f"malformed start date {text!r}") from None


def _parse_time(text: str) -> datetime.time:
    try:
        hour, minute, second = (int(p) for p in text.split("."))
        return datetime.time(hour, minute, second)
    except ValueError:
        raise MalformedNumericField(f"malformed start time {text!r}") from None


def parse_edf_header(data: bytes) -> tuple[EdfHeader, list[EdfSignalSpec]]:
    """Parse the fixed and per-signal header blocks of an EDF file.

    Parameters
    ----------
    data : bytes
        File contents; only the header portion is needed.

    Returns
    -------
    header : EdfHeader
    specs : list of EdfSignalSpec
        One entry per signal, in file order.
    """
    if len(data) < 256:
        raise TruncatedHeader(f"EDF header needs 256 bytes, got {len(data)}")
    raw = {}
    pos = 0
    for name, width in _MAIN_FIELDS:
        raw[name] = _ascii(data[pos:pos + width])
        pos += width

    n_signals = _number(raw["n_signals"], "n_signals", int)
    header_bytes = _number(raw["header_bytes"], "header_bytes", int)
    n_records = _number(raw["n_records"], "n_records", int)
    record_duration = _number(raw["record_duration"], "record_duration")
    if n_signals < 0:
        raise MalformedNumericField(f"negative signal count {n_signals}")
    expected = 256 * (1 + n_signals)
    if len(data) < expected:
        raise TruncatedHeader(f"header declares {n_signals} signals ({expected} bytes), got {len(data)}")
    if header_bytes != expected:
        raise InconsistentHeaderBytes(f"header_bytes={header_bytes} but {n_signals} signals need {expected}")
    if n_records < -1:
        raise MalformedNumericField(f"invalid record count {n_records}")
    if not record_duration > 0:
        raise MalformedNumericField(f"record duration must be positive, got {record_duration}")

    header = EdfHeader(
        version=raw["version"],
        patient_id=raw["patient_id"],
        recording_id=raw["recording_id"],
        start_date=_parse_date(raw["start_date"]),
        start_time=_parse_time(raw["start_time"]),
        header_bytes=header_bytes,
        n_records=n_records,
        record_duration=record_duration,
        n_signals=n_signals,
    )

    # signal-major layout: all labels, then all transducers, ...
    columns = {}
    for name, width in _SIGNAL_FIELDS:
        columns[name] = [_ascii(data[pos + i * width:pos + (i + 1) * width]) for i in range(n_signals)]
        pos += width * n_signals

    specs = []
    for i in range(n_signals):
        spec = EdfSignalSpec(
            label=columns["label"][i],
            transducer=columns["transducer"][i],
            physical_dimension=columns["physical_dimension"][i],
            physical_min=_number(columns["physical_min"][i], "physical_min"),
            physical_max=_number(columns["physical_max"][i], "physical_max"),
            digital_min=_number(columns["digital_min"][i], "digital_min", int),
            digital_max=_number(columns["digital_max"][i], "digital_max", int),
            samples_per_record=_number(columns["samples_per_record"][i], "samples_per_record", int),
            prefiltering=columns["prefiltering"][i],
        )
        if spec.digital_min >= spec.digital_max:
            raise InvalidSignalSpec(f"signal {spec.label!r}: digital_min must be below digital_max")
        if spec.physical_min == spec.physical_max:
            raise InvalidSignalSpec(f"signal {spec.label!r}: physical_min equals physical_max")
        if spec.samples_per_record <= 0:
            raise InvalidSignalSpec(f"signal {spec.label!r}: samples_per_record must be positive")
        specs.append(spec)
    return header, specs


def _record_count(data_len: int, header: EdfHeader, specs: Sequence[EdfSignalSpec]) -> int:
    record_size = 2 * sum(s.samples_per_record for s in specs)
    available = data_len - header.header_bytes
    if header.n_records == -1:
        if record_size == 0:
            return 0
        n, rest = divmod(max(available, 0), record_size)
        if rest:
            raise TruncatedRecord(f"file ends {rest} bytes into a data record")
        return n
    if available < header.n_records * record_size:
        raise TruncatedRecord(
            f"header declares {header.n_records} records of {record_size} bytes, "
            f"only {available} bytes of data present")
    return header.n_records


def _digital_to_physical(digital: np.ndarray, spec: EdfSignalSpec) -> np.ndarray:
    # interpolation form keeps both endpoints exact in floating point
    t = (digital.astype(np.float64) - spec.digital_min) / (spec.digital_max - spec.digital_min)
    return spec.physical_min * (1.0 - t) + spec.physical_max * t


def read_signal(data: bytes, header: EdfHeader, specs: Sequence[EdfSignalSpec],
                signal_index: int) -> SignalTrace:
    """Decode one signal of an EDF file into physical units."""
    if not 0 <= signal_index < len(specs):
        raise IndexError(f"signal index {signal_index} out of range for {len(specs)} signals")
    n_records = _record_count(len(data), header, specs)
    total_spr = sum(s.samples_per_record for s in specs)
    offset = sum(s.samples_per_record for s in specs[:signal_index])
    spec = specs[signal_index]

    body = np.frombuffer(data, dtype="<i2", count=n_records * total_spr, offset=header.header_bytes)
    digital = body.reshape(n_records, total_spr)[:, offset:offset + spec.samples_per_record].reshape(-1)

    n_bad = int(np.count_nonzero((digital < spec.digital_min) | (digital > spec.digital_max)))
    if n_bad:
        logger.warning("signal %r: %d samples outside the digital range", spec.label, n_bad)
    return SignalTrace(
        _digital_to_physical(digital, spec),
        rate=spec.samples_per_record / header.record_duration,
        label=spec.label,
        unit=spec.physical_dimension,
        n_out_of_range=n_bad,
    )


def _normalize_label(label: str) -> str:
    return label.strip().casefold()


def read_edf(path: str | Path, channels: Iterable[str] | None = None,
             aliases: Mapping[str, Sequence[str]] | None = None) -> dict[str, SignalTrace]:
    """Read selected channels of an EDF file.

    Parameters
    ----------
    path : str or Path
    channels : iterable of str, optional
        Channel names to return. All signals are returned when omitted.
    aliases : mapping, optional
        ``{channel: [label, ...]}``; a channel matches the first file label
        equal to the channel name or one of its aliases (whitespace-trimmed,
        case-insensitive).

    Returns
    -------
    dict
        Channel name to :class:`SignalTrace`.
    """
    data = Path(path).read_bytes()
    header, specs = parse_edf_header(data)
    labels = [_normalize_label(s.label) for s in specs]
    if channels is None:
        return {specs[i].label: read_signal(data, header, specs, i) for i in range(len(specs))}
    aliases = aliases or {}
    out = {}
    for channel in channels:
        candidates = [channel, *aliases.get(channel, ())]
        for cand in candidates:
            key = _normalize_label(cand)
            if key in labels:
                out[channel] = read_signal(data, header, specs, labels.index(key))
                break
        else:
            raise ChannelNotFound(f"{path}: no signal labelled {candidates}")
    return out


def _fit(value, width: int, name: str) -> bytes:
    if isinstance(value, float):
        text = repr(value)
        if text.endswith(".0"):
            text = text[:-2]
        if len(text) > width:
            # fall back to fewer significant digits
            for digits in range(width, 0, -1):
                text = f"{value:.{digits}g}"
                if len(text) <= width:
                    break
    else:
        text = str(value)
    encoded = text.encode("ascii")
    if len(encoded) > width:
        raise ValueError(f"value {text!r} for {name!r} does not fit in {width} bytes")
    return encoded.ljust(width, b" ")


def edf_bytes(header: EdfHeader, specs: Sequence[EdfSignalSpec],
              digital: Sequence[np.ndarray]) -> bytes:
    """Serialize a header, signal specs and digital samples to EDF bytes.

    ``digital[i]`` must hold ``header.n_records * specs[i].samples_per_record``
    integer samples. ``header.header_bytes`` and ``header.n_signals`` are
    written as given so that malformed files can be produced for testing.
    """
    out = bytearray()
    main = {
        "version": header.version,
        "patient_id": header.patient_id,
        "recording_id": header.recording_id,
        "start_date": header.start_date.strftime("%d.%m.%y"),
        "start_time": header.start_time.strftime("%H.%M.%S"),
        "header_bytes": header.header_bytes,
        "reserved": "",
        "n_records": header.n_records,
        "record_duration": float(header.record_duration),
        "n_signals": header.n_signals,
    }
    for name, width in _MAIN_FIELDS:
        out += _fit(main[name], width, name)
    for name, width in _SIGNAL_FIELDS:
        for spec in specs:
            value = "" if name == "reserved" else getattr(spec, name)
            if name in ("physical_min", "physical_max"):
                value = float(value)
            out += _fit(value, width, name)

    n_records = max(header.n_records, 0)
    if digital:
        blocks = []
        for spec, samples in zip(specs, digital):
            arr = np.asarray(samples, dtype="<i2")
            blocks.append(arr.reshape(n_records, spec.samples_per_record))
        out += np.concatenate(blocks, axis=1).astype("<i2").tobytes()
    return bytes(out)


def write_edf(path: str | Path, traces: Sequence[SignalTrace], record_duration: float = 1.0,
              patient_id: str = "X", recording_id: str = "X",
              start: datetime.datetime | None = None,
              digital_range: tuple[int, int] = (-32768, 32767)) -> None:
    """Write physical traces to an EDF file.

    Each trace is quantized between its own minimum and maximum. Traces must
    contain a whole number of data records.
    """
    start = start or datetime.datetime(2000, 1, 1)
    dmin, dmax = digital_range
    specs, digital = [], []
    n_records = None
    for tr in traces:
        spr = tr.rate * record_duration
        if abs(spr - round(spr)) > 1e-9:
            raise ValueError(f"rate {tr.rate} gives a fractional samples-per-record")
        spr = int(round(spr))
        n, rest = divmod(len(tr), spr)
        if rest or (n_records is not None and n != n_records):
            raise ValueError("traces must span the same whole number of records")
        n_records = n
        pmin, pmax = float(tr.samples.min(initial=-1.0)), float(tr.samples.max(initial=1.0))
        if pmin == pmax:
            pmin, pmax = pmin - 1.0, pmax + 1.0
        spec = EdfSignalSpec(tr.label, "", tr.unit, pmin, pmax, dmin, dmax, spr, "")
        t = (tr.samples - pmin) / (pmax - pmin)
        digital.append(np.clip(np.round(dmin + t * (dmax - dmin)), dmin, dmax).astype(np.int16))
        specs.append(spec)
    header = EdfHeader("0", patient_id, recording_id, start.date(), start.time().replace(microsecond=0),
                       256 * (1 + len(specs)), n_records or 0, record_duration, len(specs))
    Path(path).write_bytes(edf_bytes(header, specs, digital))


def read_raw_float(path: str | Path, rate: float, label: str = "", unit: str = "") -> SignalTrace:
    """Read a flat stream of little-endian float32 samples."""
    data = Path(path).read_bytes()
    if len(data) % 4:
        raise OddByteCount(f"{path}: {len(data)} bytes is not a multiple of 4")
    return SignalTrace(np.frombuffer(data, dtype="<f4").astype(np.float64), rate=rate, label=label, unit=unit)


def write_raw_float(path: str | Path, trace: SignalTrace) -> None:
    """Write ``path`` (float32 samples) and its ``.json`` sidecar."""
    path = Path(path)
    path.write_bytes(trace.samples.astype("<f4").tobytes())
    sidecar = {"rate": trace.rate, "label": trace.label, "unit": trace.unit}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def load_raw(path: str | Path) -> SignalTrace:
    """Read a ``.f32le`` file using its ``.json`` sidecar for rate, label and unit."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    return read_raw_float(path, float(meta["rate"]), meta.get("label", ""), meta.get("unit", ""))
