"""Mutual-information functional connectivity over lagged 5-second windows.

Each trial's feature row holds one MI value per unordered channel pair, in
canonical row-major upper-triangle order. For 30 channels that is
30*29/2 = 435 features. A window of 5 consecutive non-overlapping 1-second
epochs is placed so that it ends ``lag_s`` seconds before the stimulus
onset; per pair, the five epoch MIs are averaged.

Series are discretized with equal-frequency (quantile) bins per epoch, so
every feature is invariant under strictly increasing per-channel transforms.
MI is reported in nats.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import EventLog, Recording

__all__ = [
    "WindowSpec",
    "JointHistogram",
    "ConnectivityVector",
    "pair_index",
    "unpair",
    "pair_labels",
    "quantile_bins",
    "joint_histogram",
    "mi_from_joint",
    "epoch_mi",
    "window_features",
    "extract_lagged",
    "write_features_csv",
    "read_features_csv",
]

logger = logging.getLogger(__name__)

FIRST_USABLE_TRIAL = 9  # earlier trials are excluded from feature extraction


@dataclass(frozen=True)
class WindowSpec:
    """Lagged analysis window: ``window_len_s`` seconds ending ``lag_s``
    seconds before stimulus onset, split into 1-second epochs."""

    lag_s: int = 0
    window_len_s: int = 5
    epoch_len_s: int = 1
    n_bins: int = 8

    def __post_init__(self) -> None:
        if not (0 <= self.lag_s <= 20):
            raise ValueError(f"lag_s must be in [0, 20], got {self.lag_s}")
        if self.window_len_s % self.epoch_len_s != 0:
            raise ValueError(
                f"window_len_s {self.window_len_s} not divisible by epoch_len_s {self.epoch_len_s}"
            )
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")

    @property
    def n_epochs(self) -> int:
        return self.window_len_s // self.epoch_len_s


@dataclass(frozen=True)
class JointHistogram:
    """B x B joint counts of two discretized series."""

    counts: np.ndarray
    n: int

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"counts must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        if int(counts.sum()) != self.n or self.n < 1:
            raise ValueError(f"counts sum {int(counts.sum())} != n {self.n} (n must be >= 1)")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class ConnectivityVector:
    """One trial's MI features (nats) for one lag, in canonical pair order."""

    values: np.ndarray
    trial_index: int
    lag_s: int
    window_end_s: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)


def pair_index(i: int, j: int, n_channels: int) -> int:
    """Flat index of channel pair (i, j), i < j, in row-major triangle order."""
    if not (0 <= i < j < n_channels):
        raise ValueError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n_channels}")
    return i * (2 * n_channels - i - 1) // 2 + (j - i - 1)

def unpair(k: int, n_channels: int) -> tuple[int, int]:
    """Inverse of pair_index."""
    n_pairs = n_channels * (n_channels - 1) // 2
    if not (0 <= k < n_pairs):
        raise ValueError(f"pair index {k} out of range [0, {n_pairs})")
    i = 0
    # row i holds n-1-i entries
    while k >= n_channels - 1 - i:
        k -= n_channels - 1 - i
        i += 1
    return i, i + 1 + k


def pair_labels(channel_labels: Sequence[str]) -> list[str]:
    """Feature names ``<chanA>-<chanB>`` in canonical pair order."""
    n = len(channel_labels)
    return [
        f"{channel_labels[i]}-{channel_labels[j]}"
        for i in range(n)
        for j in range(i + 1, n)
    ]


def quantile_bins(series: Sequence[float], n_bins: int) -> np.ndarray:
    """Equal-frequency bin labels in [0, n_bins).

    Sample with stable sorted rank r gets label floor(r * B / N); ties keep
    their original order. Counts per label differ by at most one.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be 1-D")
    n = x.shape[0]
    if n < n_bins:
        raise ValueError(f"need at least n_bins={n_bins} samples, got {n}")
    return _quantile_bins_rows(x[None, :], n_bins)[0]


def _quantile_bins_rows(rows: np.ndarray, n_bins: int) -> np.ndarray:
    """Row-wise quantile binning of a 2-D array."""
    n = rows.shape[1]
    order = np.argsort(rows, axis=1, kind="stable")
    label_of_rank = ((np.arange(n, dtype=np.int64) * n_bins) // n).astype(np.int64)
    labels = np.empty(rows.shape, dtype=np.int64)
    np.put_along_axis(labels, order, np.broadcast_to(label_of_rank, rows.shape), axis=1)
    return labels


def joint_histogram(x_labels: Sequence[int], y_labels: Sequence[int], n_bins: int) -> JointHistogram:
    xl = np.asarray(x_labels, dtype=np.int64)
    yl = np.asarray(y_labels, dtype=np.int64)
    if xl.shape != yl.shape:
        raise ValueError(f"label length mismatch: {xl.shape} vs {yl.shape}")
    counts = np.bincount(xl * n_bins + yl, minlength=n_bins * n_bins).reshape(n_bins, n_bins)
    return JointHistogram(counts, int(xl.shape[0]))


def _mi_from_count_tables(counts: np.ndarray) -> np.ndarray:
    """Plug-in MI (nats) for a batch of joint count tables (..., B, B).

    The final reduction uses exact (correctly rounded) summation, so the
    result is independent of cell order: transposing the joint table gives
    a bitwise-identical value, which makes epoch_mi(x, y) == epoch_mi(y, x).
    """
    n = counts.sum(axis=(-2, -1), keepdims=True).astype(np.float64)
    p = counts / n
    px = p.sum(axis=-1, keepdims=True)
    py = p.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * (np.log(p) - np.log(px) - np.log(py))
    terms = np.where(p > 0.0, terms, 0.0)
    flat = terms.reshape(-1, terms.shape[-2] * terms.shape[-1])
    return np.array([math.fsum(row) for row in flat.tolist()]).reshape(terms.shape[:-2])


def mi_from_joint(hist: JointHistogram) -> float:
    """I = sum p(x,y) ln(p(x,y) / (p(x) p(y))), with 0 * ln(.) = 0."""
    return float(_mi_from_count_tables(np.asarray(hist.counts, dtype=np.float64)))


def epoch_mi(x: Sequence[float], y: Sequence[float], n_bins: int = 8) -> float:
    """MI of one epoch: quantile-bin each series, then plug-in MI of the joint."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"epoch length mismatch: {x.shape} vs {y.shape}")
    labels = _quantile_bins_rows(np.stack([x, y]), n_bins)
    hist = joint_histogram(labels[0], labels[1], n_bins)
    return mi_from_joint(hist)


def _epoch_bounds(start_s: float, epoch_len_s: float, rate_hz: float, n_epochs: int) -> list[tuple[int, int]]:
    """Sample index ranges of consecutive epochs; [a, a+len) covers
    floor(a * rate) .. floor((a + len) * rate) - 1."""
    bounds = []
    for e in range(n_epochs):
        a = start_s + e * epoch_len_s
        lo = math.floor(a * rate_hz)
        hi = math.floor((a + epoch_len_s) * rate_hz)
        bounds.append((lo, hi))
    return bounds


def window_features(rec: Recording, window_end_s: float, spec: WindowSpec) -> ConnectivityVector:
    """Per-pair mean of the epoch MIs over the window ending at window_end_s."""
    n_ch = rec.n_channels
    rate = rec.sample_rate_hz
    start_s = window_end_s - spec.window_len_s
    bounds = _epoch_bounds(start_s, spec.epoch_len_s, rate, spec.n_epochs)
    if bounds[0][0] < 0 or bounds[-1][1] > rec.n_samples:
        raise ValueError(
            f"window [{start_s}, {window_end_s}) s out of bounds for "
            f"{rec.n_samples / rate:.3f} s recording"
        )
    b = spec.n_bins
    iu, ju = np.triu_indices(n_ch, 1)
    n_pairs = iu.shape[0]
    pair_offsets = (np.arange(n_pairs, dtype=np.int64) * b * b)[:, None]
    samples = np.asarray(rec.samples)
    mi_per_epoch = np.empty((spec.n_epochs, n_pairs), dtype=np.float64)
    for e, (lo, hi) in enumerate(bounds):
        labels = _quantile_bins_rows(np.asarray(samples[:, lo:hi], dtype=np.float64), b)
        codes = labels[iu] * b + labels[ju] + pair_offsets
        counts = np.bincount(codes.ravel(), minlength=n_pairs * b * b)
        mi_per_epoch[e] = _mi_from_count_tables(
            counts.reshape(n_pairs, b, b).astype(np.float64)
        )
    values = mi_per_epoch.mean(axis=0)  # epoch-order summation
    return ConnectivityVector(values, trial_index=-1, lag_s=spec.lag_s, window_end_s=window_end_s)


def extract_lagged(rec: Recording, events: EventLog, spec: WindowSpec) -> list[ConnectivityVector]:
    """Feature vectors for every usable trial at the spec's lag.

    A trial is usable when its index is >= 9 and the window
    [onset - lag - 5, onset - lag) lies inside the recording; other trials
    are skipped (logged at debug level).
    """
    duration = rec.n_samples / rec.sample_rate_hz
    out: list[ConnectivityVector] = []
    for trial in events:
        if trial.index < FIRST_USABLE_TRIAL:
            continue
        window_end = trial.onset_s - spec.lag_s
        window_start = window_end - spec.window_len_s
        if window_start < 0 or window_end > duration:
            logger.debug(
                "skip trial %d: window [%.3f, %.3f) outside recording of %.3f s",
                trial.index, window_start, window_end, duration,
            )
            continue
        vec = window_features(rec, window_end, spec)
        out.append(
            ConnectivityVector(vec.values, trial.index, spec.lag_s, window_end)
        )
    return out


def write_features_csv(
    path: str | Path, vectors: Iterable[ConnectivityVector], channel_labels: Sequence[str]
) -> None:
    """Feature dump: trial, lag_s, then one column per pair in canonical order."""
    names = pair_labels(channel_labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "lag_s"] + names)
        for vec in vectors:
            writer.writerow(
                [vec.trial_index, vec.lag_s] + [repr(float(v)) for v in vec.values]
            )


def read_features_csv(path: str | Path) -> list[ConnectivityVector]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["trial", "lag_s"]:
            raise ValueError(f"{path}: expected feature CSV header, got {header[:2]}")
        for row in reader:
            values = np.array([float(v) for v in row[2:]], dtype=np.float64)
            out.append(
                ConnectivityVector(values, int(row[0]), int(row[1]), window_end_s=math.nan)
            )
    return out
