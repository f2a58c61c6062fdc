"""Recording and event containers, the channel montage, and minimal preprocessing.

Recordings are stored on disk as a JSON header next to a raw little-endian
float32 sample file in channel-major order (all of channel 0, then channel 1,
and so on). Events travel as a ``trial,onset_s,rt_ms`` CSV where an empty
``rt_ms`` field marks a timeout.

Preprocessing covers the minimal chain applied to already-cleaned signals:
zero-phase FIR band-pass, integer-factor downsampling, and common average
referencing. Bad-channel handling, ICA and interpolation are out of scope.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.signal import oaconvolve

__all__ = [
    "REGION_CODES",
    "CHANNELS_30",
    "DEFAULT_MONTAGE",
    "Recording",
    "Trial",
    "EventLog",
    "Montage",
    "load_recording",
    "save_recording",
    "load_events",
    "save_events",
    "load_montage",
    "common_average_reference",
    "design_bandpass",
    "bandpass_fir",
    "filter_transient_samples",
    "downsample",
]

REGION_CODES = ("F", "LT", "RT", "P", "O")

# 30-channel layout; order follows the acquisition listing.
CHANNELS_30 = (
    "Fp1", "Fp2", "Fz", "F3", "F4", "F7", "F8", "FC1", "FC2", "FC5",
    "FC6", "Cz", "C3", "C4", "T7", "T8", "CP1", "CP2", "CP5", "CP6",
    "Pz", "P3", "P4", "P7", "P8", "PO3", "PO4", "Oz", "O1", "O2",
)

_REGION_OF_CHANNEL = {
    "Fp1": "F", "Fp2": "F", "Fz": "F", "F3": "F", "F4": "F",
    "F7": "F", "F8": "F", "FC1": "F", "FC2": "F",
    "FC5": "LT", "T7": "LT", "CP5": "LT", "P7": "LT",
    "FC6": "RT", "T8": "RT", "CP6": "RT", "P8": "RT",
    "Cz": "P", "C3": "P", "C4": "P", "CP1": "P", "CP2": "P",
    "Pz": "P", "P3": "P", "P4": "P",
    "PO3": "O", "PO4": "O", "Oz": "O", "O1": "O", "O2": "O",
}


@dataclass(frozen=True)
class Recording:
    """Multichannel signal with a sample rate and labeled channels.

    ``samples`` has shape (n_channels, n_samples); values are amplitudes in
    microvolts. Instances are immutable: the sample array is exposed as a
    read-only view and is safe to share across threads.
    """

    participant_id: str
    channel_labels: tuple[str, ...]
    sample_rate_hz: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D (channels x time), got shape {samples.shape}")
        labels = tuple(self.channel_labels)
        if len(labels) != samples.shape[0]:
            raise ValueError(
                f"{len(labels)} channel labels for {samples.shape[0]} sample rows"
            )
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate channel labels")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if samples.shape[1] < 1:
            raise ValueError("recording must contain at least one sample")
        view = samples.view()
        view.flags.writeable = False
        object.__setattr__(self, "samples", view)
        object.__setattr__(self, "channel_labels", labels)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


@dataclass(frozen=True)
class Trial:
    """One stimulus event: 1-based index, onset in seconds, response.

    ``rt_ms`` is the reaction time in milliseconds or None for a timeout.
    """

    index: int
    onset_s: float
    rt_ms: float | None


@dataclass(frozen=True)
class EventLog:
    trials: tuple[Trial, ...]

    def __post_init__(self) -> None:
        trials = tuple(self.trials)
        if trials:
            if trials[0].index != 1:
                raise ValueError(f"trial indices must start at 1, got {trials[0].index}")
            for prev, cur in zip(trials, trials[1:]):
                if cur.index <= prev.index:
                    raise ValueError(
                        f"trial indices must be strictly increasing ({prev.index} -> {cur.index})"
                    )
                if cur.onset_s <= prev.onset_s:
                    raise ValueError(
                        f"onsets must be strictly increasing ({prev.onset_s} -> {cur.onset_s})"
                    )
        for t in trials:
            if t.onset_s < 0:
                raise ValueError(f"trial {t.index}: negative onset {t.onset_s}")
            if t.rt_ms is not None and not (0 < t.rt_ms <= 2000):
                raise ValueError(
                    f"trial {t.index}: rt_ms {t.rt_ms} outside (0, 2000]"
                )
        object.__setattr__(self, "trials", trials)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)


@dataclass(frozen=True)
class Montage:
    """Mapping channel label -> region code in {F, LT, RT, P, O}."""

    regions: Mapping[str, str]

    def __post_init__(self) -> None:
        regions = dict(self.regions)
        for label, code in regions.items():
            if code not in REGION_CODES:
                raise ValueError(f"channel {label}: unknown region code {code!r}")
        object.__setattr__(self, "regions", MappingProxyType(regions))

    def region_of(self, label: str) -> str:
        try:
            return self.regions[label]
        except KeyError:
            raise ValueError(f"channel {label!r} not in montage") from None

    def check_covers(self, channel_labels: tuple[str, ...]) -> None:
        missing = [c for c in channel_labels if c not in self.regions]
        if missing:
            raise ValueError(f"montage does not cover channels: {missing}")


DEFAULT_MONTAGE = Montage(_REGION_OF_CHANNEL)


# ---------------------------------------------------------------------------
# container I/O


def save_recording(rec: Recording, header_path: str | Path) -> None:
    """Write the JSON header and the float32 channel-major sample file."""
    header_path = Path(header_path)
    data_name = header_path.stem + ".f32"
    header = {
        "participant_id": rec.participant_id,
        "channel_labels": list(rec.channel_labels),
        "sample_rate_hz": rec.sample_rate_hz,
        "n_samples": rec.n_samples,
        "data_file": data_name,
    }
    header_path.write_text(json.dumps(header, indent=2) + "\n")
    raw = np.ascontiguousarray(rec.samples, dtype="<f4")
    (header_path.parent / data_name).write_bytes(raw.tobytes())


def load_recording(header_path: str | Path) -> Recording:
    """Load a recording from its JSON header.

    The sample count is cross-checked against the sample file size, which
    must be exactly 4 * n_channels * n_samples bytes.
    """
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"malformed header {header_path}: {e}") from e
    try:
        labels = tuple(header["channel_labels"])
        rate = float(header["sample_rate_hz"])
        n_samples = int(header["n_samples"])
        data_file = header["data_file"]
        participant = str(header["participant_id"])
    except KeyError as e:
        raise ValueError(f"malformed header {header_path}: missing field {e}") from e
    data_path = header_path.parent / data_file
    raw = data_path.read_bytes()
    n_channels = len(labels)
    if n_channels == 0:
        raise ValueError(f"malformed header {header_path}: no channels")
    if len(raw) % (4 * n_channels) != 0:
        raise ValueError(
            f"{data_path}: size {len(raw)} bytes not divisible by 4*{n_channels}"
        )
    n_from_file = len(raw) // (4 * n_channels)
    if n_from_file != n_samples:
        raise ValueError(
            f"{data_path}: file holds {n_from_file} samples/channel, header says {n_samples}"
        )
    samples = np.frombuffer(raw, dtype="<f4").reshape(n_channels, n_samples)
    return Recording(participant, labels, rate, samples)


def save_events(events: EventLog, csv_path: str | Path) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "onset_s", "rt_ms"])
        for t in events:
            writer.writerow(
                [t.index, repr(float(t.onset_s)), "" if t.rt_ms is None else repr(float(t.rt_ms))]
            )


def load_events(csv_path: str | Path) -> EventLog:
    """Parse a trial,onset_s,rt_ms CSV; empty rt_ms marks a timeout."""
    trials = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["trial", "onset_s", "rt_ms"]:
            raise ValueError(f"{csv_path}: expected header trial,onset_s,rt_ms, got {reader.fieldnames}")
        for row in reader:
            rt_field = (row["rt_ms"] or "").strip()
            trials.append(
                Trial(
                    index=int(row["trial"]),
                    onset_s=float(row["onset_s"]),
                    rt_ms=float(rt_field) if rt_field else None,
                )
            )
    return EventLog(tuple(trials))


def load_montage(json_path: str | Path) -> Montage:
    """Load a custom channel -> region mapping from JSON."""
    mapping = json.loads(Path(json_path).read_text())
    if not isinstance(mapping, dict):
        raise ValueError(f"{json_path}: montage JSON must be an object")
    return Montage(mapping)


# ---------------------------------------------------------------------------
# preprocessing


def common_average_reference(rec: Recording) -> Recording:
    """Subtract the across-channel mean at every time index.

    After referencing, the column means are zero to floating tolerance.
    Idempotent. Requires at least two channels.
    """
    if rec.n_channels < 2:
        raise ValueError("common average reference requires >= 2 channels")
    samples = np.asarray(rec.samples, dtype=np.float64)
    referenced = samples - samples.mean(axis=0, keepdims=True)
    return Recording(rec.participant_id, rec.channel_labels, rec.sample_rate_hz, referenced)


def _windowed_sinc_half(cutoff_hz: float, order: int, rate_hz: float) -> tuple[np.ndarray, float]:
    """Positive-lag half and center tap of a unit-DC-gain windowed-sinc low-pass."""
    m = order // 2
    k = np.arange(1, m + 1, dtype=np.float64)
    w = 2.0 * np.pi * cutoff_hz / rate_hz
    half = np.sin(w * k) / (np.pi * k)
    # Hamming window over taps 0..order, evaluated at center+k
    half *= 0.54 - 0.46 * np.cos(2.0 * np.pi * (m + k) / order)
    center = w / np.pi  # window value at the center tap is exactly 1
    # normalize to unit gain at DC so the band-pass difference rejects DC exactly
    total = center + 2.0 * half.sum()
    return half / total, center / total


def design_bandpass(low_hz: float, high_hz: float, order: int, rate_hz: float) -> np.ndarray:
    """Hamming-windowed sinc band-pass kernel of length order + 1.

    Built as the difference of two unit-DC-gain windowed-sinc low-passes, so
    the DC gain is zero up to rounding. The kernel is exactly symmetric by
    construction: h[k] == h[order - k] bit for bit.
    """
    if order < 2 or order % 2 != 0:
        raise ValueError(f"order must be a positive even integer, got {order}")
    nyquist = rate_hz / 2.0
    if not (0.0 < low_hz < high_hz < nyquist):
        raise ValueError(
            f"band [{low_hz}, {high_hz}] Hz invalid for sample rate {rate_hz} Hz"
        )
    half_hi, center_hi = _windowed_sinc_half(high_hz, order, rate_hz)
    half_lo, center_lo = _windowed_sinc_half(low_hz, order, rate_hz)
    half = half_hi - half_lo
    center = center_hi - center_lo
    return np.concatenate([half[::-1], [center], half])


def filter_transient_samples(order: int) -> int:
    """Length of the zero-padded edge transient on each side: order // 2."""
    return order // 2


def bandpass_fir(rec: Recording, low_hz: float, high_hz: float, order: int) -> Recording:
    """Zero-phase band-pass: one pass of a symmetric FIR with delay compensation.

    The output has the same length as the input; edges are implicitly
    zero-padded and the first and last order//2 samples are filter transient.
    A symmetric kernel applied this way has exactly zero net phase shift.
    """
    kernel = design_bandpass(low_hz, high_hz, order, rec.sample_rate_hz)
    samples = np.asarray(rec.samples, dtype=np.float64)
    # 'same' mode centers the kernel: group delay order/2 is compensated,
    # edges see zeros. oaconvolve keeps long recordings tractable.
    filtered = oaconvolve(samples, kernel[None, :], mode="same", axes=1)
    return Recording(rec.participant_id, rec.channel_labels, rec.sample_rate_hz, filtered)


def downsample(rec: Recording, factor: int) -> Recording:
    """Keep sample indices 0, factor, 2*factor, ...; new rate = old / factor.

    The caller is responsible for prior anti-alias filtering; the 47 Hz
    low-pass edge suffices for factor 2 at 1000 Hz. Event onsets are in
    seconds and need no adjustment.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return rec
    return Recording(
        rec.participant_id,
        rec.channel_labels,
        rec.sample_rate_hz / factor,
        rec.samples[:, ::factor],
    )
