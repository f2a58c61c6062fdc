"""Reaction-time targets: trial classification, exclusion, and smoothing.

Trials with RT below 100 ms are false alarms, above 500 ms lapses; both are
excluded together with timeouts. Surviving RTs are smoothed with a trailing
(causal) 5-trial moving average, truncated at the series start, so the
target at trial t never depends on later trials.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ingest import EventLog

__all__ = [
    "VALID",
    "FALSE_ALARM",
    "LAPSE",
    "TIMEOUT",
    "classify_trial",
    "smooth_rt",
    "build_targets",
    "write_targets_csv",
    "read_targets_csv",
]

VALID = "valid"
FALSE_ALARM = "false_alarm"
LAPSE = "lapse"
TIMEOUT = "timeout"

SMOOTHING_WINDOW = 5


def classify_trial(rt_ms: float | None) -> str:
    """Classify a response; boundary values 100 and 500 ms count as valid."""
    if rt_ms is None:
        return TIMEOUT
    if rt_ms < 100.0:
        return FALSE_ALARM
    if rt_ms > 500.0:
        return LAPSE
    return VALID


def smooth_rt(valid_rts: Sequence[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing mean over the current and up to window-1 preceding values."""
    rts = np.asarray(valid_rts, dtype=np.float64)
    if rts.size == 0:
        return rts
    out = np.empty_like(rts)
    csum = np.cumsum(rts)
    for t in range(rts.size):
        lo = max(0, t - window + 1)
        total = csum[t] - (csum[lo - 1] if lo > 0 else 0.0)
        out[t] = total / (t - lo + 1)
    return out


def build_targets(events: EventLog, window: int = SMOOTHING_WINDOW) -> dict[int, float]:
    """Smoothed targets keyed by the surviving trials' original indices.

    Classification and exclusion happen first; smoothing then runs over the
    valid trials only, in trial order.
    """
    indices = [t.index for t in events if classify_trial(t.rt_ms) == VALID]
    rts = [t.rt_ms for t in events if classify_trial(t.rt_ms) == VALID]
    smoothed = smooth_rt(rts, window)
    return dict(zip(indices, smoothed.tolist()))


def write_targets_csv(events: EventLog, targets: Mapping[int, float], path: str | Path) -> None:
    """Targets dump: trial, rt_ms_raw, outcome, rt_ms_smoothed (empty if excluded)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "rt_ms_raw", "outcome", "rt_ms_smoothed"])
        for t in events:
            outcome = classify_trial(t.rt_ms)
            smoothed = targets.get(t.index)
            writer.writerow(
                [
                    t.index,
                    "" if t.rt_ms is None else repr(float(t.rt_ms)),
                    outcome,
                    "" if smoothed is None else repr(float(smoothed)),
                ]
            )


def read_targets_csv(path: str | Path) -> dict[int, float]:
    targets: dict[int, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            field = (row["rt_ms_smoothed"] or "").strip()
            if field:
                targets[int(row["trial"])] = float(field)
    return targets
