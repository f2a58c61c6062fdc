"""Synthetic vigilance-test sessions with controlled coupling and fatigue,
plus the independent oracles used by the verification suite.

Each session mimics the task structure: stimuli after uniform 2-10 s
inter-stimulus intervals, a 2 s response window, 1 s of feedback, 400
trials. A latent arousal trace declines from 1 toward 0 over the session
with mean-reverting noise (60 s correlation time, so lagged windows up to
20 s back still carry signal). Reaction times follow
base + gain * (1 - arousal) + noise. Channels mix region-shared sources,
designated coupled-pair sources whose gain tracks arousal, and independent
noise; by default one occipital-temporal pair gains coupling as arousal
falls while an intra-occipital pair loses it.

The oracles (closed-form Gaussian MI, a pure-Python plug-in MI double sum,
and subset-enumeration Shapley values) deliberately share no code with the
library paths they validate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .forest import Tree
from .ingest import CHANNELS_30, DEFAULT_MONTAGE, EventLog, Recording, Trial

__all__ = [
    "CoupledPair",
    "SynthConfig",
    "TruthTrace",
    "generate_session",
    "write_truth_csv",
    "gaussian_mi_oracle",
    "discrete_mi_oracle",
    "brute_shapley",
]


@dataclass(frozen=True)
class CoupledPair:
    """Shared-source gain for one channel pair as a function of arousal:
    gain(a) = gain_alert + (gain_fatigued - gain_alert) * (1 - a)."""

    chan_a: str
    chan_b: str
    gain_alert: float
    gain_fatigued: float

    def gain(self, arousal: np.ndarray) -> np.ndarray:
        return self.gain_alert + (self.gain_fatigued - self.gain_alert) * (1.0 - arousal)


# Defaults mirror the reported directionality: the O1-P7 coupling (and the
# frontal and parieto-occipital pairs) strengthen with fatigue, while O1-Oz
# and T7-F7 weaken.
DEFAULT_COUPLING = (
    CoupledPair("O1", "P7", gain_alert=0.25, gain_fatigued=1.35),
    CoupledPair("O1", "Oz", gain_alert=1.35, gain_fatigued=0.25),
    CoupledPair("F3", "F4", gain_alert=0.35, gain_fatigued=1.25),
    CoupledPair("PO4", "P8", gain_alert=0.30, gain_fatigued=1.30),
    CoupledPair("T7", "F7", gain_alert=1.25, gain_fatigued=0.30),
)


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters; defaults are the frozen calibrated cohort."""

    n_participants: int = 30
    n_trials: int = 400
    isi_range_s: tuple[float, float] = (2.0, 10.0)
    timeout_s: float = 2.0
    feedback_s: float = 1.0
    lead_in_s: float = 2.0
    sample_rate_hz: float = 500.0
    channels: tuple[str, ...] = CHANNELS_30
    # arousal drift: linear decline to arousal_end plus OU noise
    arousal_end: float = 0.05
    arousal_noise_sd: float = 0.06
    arousal_tau_s: float = 60.0
    # signal mixing
    coupling: tuple[CoupledPair, ...] = DEFAULT_COUPLING
    region_source_gain: float = 0.35
    channel_noise_sd: float = 1.0
    source_ar_phi: float = 0.5
    amplitude_uv: float = 12.0
    # reaction-time model
    rt_base_ms: float = 280.0
    rt_fatigue_gain_ms: float = 120.0
    rt_noise_sd_ms: float = 18.0
    # contamination rates
    false_alarm_rate: float = 0.02
    lapse_rate: float = 0.02
    timeout_rate: float = 0.01
    seed: int = 2024

    def __post_init__(self) -> None:
        lo, hi = self.isi_range_s
        if not (2.0 <= lo < hi <= 10.0):
            raise ValueError(f"ISI range [{lo}, {hi}] outside the 2-10 s task structure")
        for rate in (self.false_alarm_rate, self.lapse_rate, self.timeout_rate):
            if not (0.0 <= rate <= 1.0):
                raise ValueError(f"contamination rate {rate} outside [0, 1]")
        labels = set(self.channels)
        for pair in self.coupling:
            if pair.chan_a not in labels or pair.chan_b not in labels:
                raise ValueError(f"coupled pair {pair.chan_a}-{pair.chan_b} not in channel set")


@dataclass(frozen=True)
class TruthTrace:
    """Latent arousal on a 1 s grid, plus per-trial arousal at onset."""

    time_s: np.ndarray
    arousal: np.ndarray
    trial_arousal: np.ndarray


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Stationary unit-variance AR(1) series (band-limited noise source)."""
    e = rng.standard_normal(n)
    e[1:] *= math.sqrt(1.0 - phi * phi)
    return lfilter([1.0], [1.0, -phi], e)


def _arousal_grid(
    rng: np.random.Generator, grid_span_s: float, decline_span_s: float, cfg: SynthConfig
) -> tuple[np.ndarray, np.ndarray]:
    n = int(math.ceil(grid_span_s)) + 2
    t = np.arange(n, dtype=np.float64)
    decline = 1.0 - (1.0 - cfg.arousal_end) * np.minimum(t / max(decline_span_s, 1.0), 1.0)
    phi = math.exp(-1.0 / cfg.arousal_tau_s)
    noise = _ar1(rng, n, phi) * cfg.arousal_noise_sd
    return t, np.clip(decline + noise, 0.0, 1.0)


def generate_session(
    config: SynthConfig, participant_ordinal: int
) -> tuple[Recording, EventLog, TruthTrace]:
    """One deterministic session for (config.seed, participant_ordinal)."""
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(participant_ordinal,))
    )
    # --- trial timeline ------------------------------------------------
    isis = rng.uniform(config.isi_range_s[0], config.isi_range_s[1], size=config.n_trials)
    outcome_draws = rng.uniform(size=config.n_trials)
    fa_rts = rng.uniform(30.0, 95.0, size=config.n_trials)
    lapse_rts = rng.uniform(505.0, 900.0, size=config.n_trials)
    rt_noise = rng.standard_normal(config.n_trials) * config.rt_noise_sd_ms

    # grid must cover the worst case (every trial times out); the decline is
    # anchored to the expected session length so arousal actually reaches
    # arousal_end by the final trials
    worst = config.lead_in_s + config.n_trials * (
        config.isi_range_s[1] + config.timeout_s + config.feedback_s
    )
    mean_isi = 0.5 * (config.isi_range_s[0] + config.isi_range_s[1])
    mean_response = (config.rt_base_ms + 0.5 * config.rt_fatigue_gain_ms) / 1000.0
    expected = config.lead_in_s + config.n_trials * (
        mean_isi + mean_response + config.feedback_s
    )
    grid_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(participant_ordinal, 1))
    )
    grid_t, grid_a = _arousal_grid(grid_rng, worst, expected, config)

    trials = []
    trial_arousal = np.empty(config.n_trials)
    clock = config.lead_in_s
    fa_cut = config.false_alarm_rate
    lapse_cut = fa_cut + config.lapse_rate
    timeout_cut = lapse_cut + config.timeout_rate
    for k in range(config.n_trials):
        onset = float(clock + isis[k])
        arousal = float(np.interp(onset, grid_t, grid_a))
        trial_arousal[k] = arousal
        draw = outcome_draws[k]
        if draw < fa_cut:
            rt = float(fa_rts[k])
        elif draw < lapse_cut:
            rt = float(lapse_rts[k])
        elif draw < timeout_cut:
            rt = None
        else:
            rt = config.rt_base_ms + config.rt_fatigue_gain_ms * (1.0 - arousal) + float(rt_noise[k])
            rt = min(2000.0, max(1.0, rt))
        trials.append(Trial(index=k + 1, onset_s=onset, rt_ms=rt))
        held = config.timeout_s if rt is None else rt / 1000.0
        clock = onset + held + config.feedback_s
    events = EventLog(tuple(trials))

    # --- signals ---------------------------------------------------------
    duration = clock + config.lead_in_s
    rate = config.sample_rate_hz
    n_samples = int(math.ceil(duration * rate))
    sample_t = np.arange(n_samples, dtype=np.float64) / rate
    arousal_t = np.interp(sample_t, grid_t, grid_a)

    labels = config.channels
    label_index = {c: i for i, c in enumerate(labels)}
    signals = np.zeros((len(labels), n_samples), dtype=np.float32)
    phi = config.source_ar_phi
    for region in ("F", "LT", "RT", "P", "O"):
        members = [i for i, c in enumerate(labels) if DEFAULT_MONTAGE.regions.get(c) == region]
        if not members:
            continue
        source = _ar1(rng, n_samples, phi) * config.region_source_gain
        for i in members:
            signals[i] += source.astype(np.float32)
    for pair in config.coupling:
        source = _ar1(rng, n_samples, phi)
        weighted = (pair.gain(arousal_t) * source).astype(np.float32)
        signals[label_index[pair.chan_a]] += weighted
        signals[label_index[pair.chan_b]] += weighted
    for i in range(len(labels)):
        signals[i] += (_ar1(rng, n_samples, phi) * config.channel_noise_sd).astype(np.float32)
    signals *= config.amplitude_uv

    recording = Recording(
        participant_id=f"synth{participant_ordinal:02d}",
        channel_labels=labels,
        sample_rate_hz=rate,
        samples=signals,
    )
    truth = TruthTrace(time_s=grid_t, arousal=grid_a, trial_arousal=trial_arousal)
    return recording, events, truth


def write_truth_csv(truth: TruthTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "arousal"])
        for t, a in zip(truth.time_s, truth.arousal):
            writer.writerow([repr(float(t)), repr(float(a))])


# ---------------------------------------------------------------------------
# oracles


def gaussian_mi_oracle(rho: float) -> float:
    """MI (nats) of a bivariate Gaussian with correlation rho:
    -0.5 * ln(1 - rho^2)."""
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    return -0.5 * math.log(1.0 - rho * rho)


def discrete_mi_oracle(joint: Sequence[Sequence[float]]) -> float:
    """Plug-in MI (nats) of a normalized joint probability table.

    Pure-Python double sum, independent of the library estimator path.
    """
    rows = [list(map(float, row)) for row in joint]
    total = math.fsum(math.fsum(row) for row in rows)
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"joint table sums to {total}, expected 1")
    if any(v < 0 for row in rows for v in row):
        raise ValueError("joint table entries must be non-negative")
    px = [math.fsum(row) for row in rows]
    py = [math.fsum(row[j] for row in rows) for j in range(len(rows[0]))]
    terms = []
    for i, row in enumerate(rows):
        for j, pxy in enumerate(row):
            if pxy > 0.0:
                terms.append(pxy * math.log(pxy / (px[i] * py[j])))
    return math.fsum(terms)


def _subset_value(tree: Tree, x: np.ndarray, revealed: frozenset[int]) -> float:
    """Cover-conditional expectation: follow x on revealed features,
    branch cover-weighted otherwise."""

    def descend(node: int) -> float:
        f = int(tree.feature[node])
        if f < 0:
            return float(tree.value[node])
        if f in revealed:
            child = tree.left[node] if x[f] <= tree.threshold[node] else tree.right[node]
            return descend(int(child))
        lw = tree.cover[tree.left[node]] / tree.cover[node]
        rw = tree.cover[tree.right[node]] / tree.cover[node]
        return lw * descend(int(tree.left[node])) + rw * descend(int(tree.right[node]))

    return descend(0)


def brute_shapley(tree: Tree, x: np.ndarray, max_players: int = 12) -> np.ndarray:
    """Shapley values by full subset enumeration over the tree's distinct
    split features; oracle for the path-dependent attribution."""
    x = np.asarray(x, dtype=np.float64)
    players = sorted({int(f) for f in tree.feature if f >= 0})
    d = len(players)
    if d > max_players:
        raise ValueError(f"{d} distinct split features exceed the 2^{max_players} guard")
    phi = np.zeros(x.shape[0], dtype=np.float64)
    if d == 0:
        return phi
    values: dict[frozenset[int], float] = {}
    for size in range(d + 1):
        for subset in combinations(players, size):
            key = frozenset(subset)
            values[key] = _subset_value(tree, x, key)
    fact = [math.factorial(i) for i in range(d + 1)]
    for f in players:
        others = [p for p in players if p != f]
        contrib = 0.0
        for size in range(d):
            weight = fact[size] * fact[d - size - 1] / fact[d]
            for subset in combinations(others, size):
                key = frozenset(subset)
                contrib += weight * (values[key | {f}] - values[key])
        phi[f] = contrib
    return phi
