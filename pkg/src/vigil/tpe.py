"""Tree-structured Parzen Estimator search over forest hyperparameters.

The sampler models the densities of good and bad past trials separately and
proposes the candidate with the highest good/bad density ratio. Scores are
maximized (here: out-of-bag R²). The first ``n_startup`` trials draw
uniformly; afterwards the top ceil(gamma * n) trials by score form the good
set.

Dimensions: ``max_features`` is categorical over five choices; integer
dimensions (``min_samples_leaf``, ``max_depth``) use Gaussian Parzen
mixtures on the log scale, with per-component bandwidth floored at one
integer step, samples rounded and clamped to the search range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .forest import MAX_FEATURES_CHOICES, HyperParams, fit_forest

__all__ = [
    "IntRange",
    "SearchSpace",
    "TpeConfig",
    "TpeTrial",
    "tpe_suggest",
    "tune",
]


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not (1 <= self.lo <= self.hi):
            raise ValueError(f"bad integer range [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class SearchSpace:
    max_features: tuple = MAX_FEATURES_CHOICES
    min_samples_leaf: IntRange = IntRange(1, 16)
    max_depth: IntRange = IntRange(8, 64)

    def __post_init__(self) -> None:
        if len(self.max_features) == 0:
            raise ValueError("empty categorical dimension")


@dataclass(frozen=True)
class TpeConfig:
    n_trials: int = 50
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not (0 < self.n_startup < self.n_trials):
            raise ValueError(
                f"need 0 < n_startup < n_trials, got {self.n_startup}, {self.n_trials}"
            )
        if self.n_candidates < 1:
            raise ValueError(f"n_candidates must be >= 1, got {self.n_candidates}")


@dataclass(frozen=True)
class TpeTrial:
    params: HyperParams
    score: float


def _uniform_draw(space: SearchSpace, rng: np.random.Generator, n_estimators: int) -> HyperParams:
    mf = space.max_features[int(rng.integers(0, len(space.max_features)))]
    msl = int(rng.integers(space.min_samples_leaf.lo, space.min_samples_leaf.hi + 1))
    depth = int(rng.integers(space.max_depth.lo, space.max_depth.hi + 1))
    return HyperParams(
        n_estimators=n_estimators, max_features=mf, min_samples_leaf=msl, max_depth=depth
    )


class _IntParzen:
    """Gaussian mixture over observed integer values on the log scale.

    The shared bandwidth term max(observed spread, 0.4 * range span) / sqrt(n)
    shrinks as the set grows but never collapses: with a deterministic
    objective the same suggestion can flood the good set, and a purely
    observed-spread kernel would then lock onto it and stop exploring.
    Each component is additionally floored at one integer step at its value.
    """

    RANGE_FRACTION = 0.4

    def __init__(self, values: Sequence[int], bounds: IntRange):
        vals = np.asarray(values, dtype=np.float64)
        logs = np.log(vals)
        observed = float(logs.max() - logs.min())
        span = math.log(bounds.hi) - math.log(bounds.lo)
        base = max(observed, self.RANGE_FRACTION * span) / math.sqrt(len(logs))
        steps = np.log(vals + 1.0) - logs
        self.bounds = bounds
        self.centers = logs
        self.bandwidths = np.maximum(base, steps)

    def sample(self, rng: np.random.Generator) -> int:
        comp = int(rng.integers(0, self.centers.shape[0]))
        draw = rng.normal(self.centers[comp], self.bandwidths[comp])
        v = int(round(math.exp(draw)))
        return min(self.bounds.hi, max(self.bounds.lo, v))

    def pdf(self, value: int) -> float:
        x = math.log(value)
        z = (x - self.centers) / self.bandwidths
        dens = np.exp(-0.5 * z * z) / (self.bandwidths * math.sqrt(2.0 * math.pi))
        return float(dens.mean())


def _categorical_probs(values: Sequence, choices: tuple) -> np.ndarray:
    counts = np.array([sum(1 for v in values if v == c) for c in choices], dtype=np.float64)
    probs = counts + 1.0
    return probs / probs.sum()


def tpe_suggest(
    history: Sequence[TpeTrial],
    space: SearchSpace,
    config: TpeConfig,
    rng: np.random.Generator,
    n_estimators: int = 200,
) -> HyperParams:
    """Propose the next configuration given past (params, score) trials."""
    if len(history) < config.n_startup:
        return _uniform_draw(space, rng, n_estimators)

    by_score = sorted(history, key=lambda t: t.score, reverse=True)
    n_good = math.ceil(config.gamma * len(by_score))
    good = by_score[:n_good]
    bad = by_score[n_good:]

    mf_good = _categorical_probs([t.params.max_features for t in good], space.max_features)
    mf_bad = _categorical_probs([t.params.max_features for t in bad], space.max_features)
    msl_good = _IntParzen([t.params.min_samples_leaf for t in good], space.min_samples_leaf)
    msl_bad = _IntParzen([t.params.min_samples_leaf for t in bad], space.min_samples_leaf)
    depth_good = _IntParzen([t.params.max_depth for t in good], space.max_depth)
    depth_bad = _IntParzen([t.params.max_depth for t in bad], space.max_depth)

    best: HyperParams | None = None
    best_ratio = -math.inf
    for _ in range(config.n_candidates):
        mf_idx = int(rng.choice(len(space.max_features), p=mf_good))
        mf = space.max_features[mf_idx]
        msl = msl_good.sample(rng)
        depth = depth_good.sample(rng)
        ratio = (
            math.log(mf_good[mf_idx] / mf_bad[mf_idx])
            + math.log(msl_good.pdf(msl) / msl_bad.pdf(msl))
            + math.log(depth_good.pdf(depth) / depth_bad.pdf(depth))
        )
        if ratio > best_ratio:
            best_ratio = ratio
            best = HyperParams(
                n_estimators=n_estimators,
                max_features=mf,
                min_samples_leaf=msl,
                max_depth=depth,
            )
    assert best is not None
    return best


def tune(
    X: np.ndarray,
    y: np.ndarray,
    space: SearchSpace | None = None,
    config: TpeConfig | None = None,
    n_estimators: int = 200,
    objective: Callable[[HyperParams, int], float] | None = None,
) -> tuple[HyperParams, list[TpeTrial]]:
    """Run the sequential TPE loop and return (best params, full history).

    The default objective fits a forest with the proposed configuration and
    scores it by out-of-bag R²; pass ``objective(params, trial_index)`` to
    substitute another score (used by the optimizer benchmarks). Higher is
    better.
    """
    space = space or SearchSpace()
    config = config or TpeConfig()
    rng = np.random.default_rng(config.seed)
    if objective is None:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)

        def objective(params: HyperParams, trial_index: int) -> float:
            forest = fit_forest(
                X, y, params, seed=_trial_seed(config.seed, trial_index), compute_oob=True
            )
            assert forest.oob_r2 is not None
            return forest.oob_r2

    history: list[TpeTrial] = []
    for t in range(config.n_trials):
        params = tpe_suggest(history, space, config, rng, n_estimators)
        score = objective(params, t)
        history.append(TpeTrial(params=params, score=score))
    best = max(history, key=lambda trial: trial.score)
    return best.params, history


def _trial_seed(seed: int, trial_index: int) -> int:
    return int(
        np.random.SeedSequence(entropy=seed, spawn_key=(10_000 + trial_index,)).generate_state(1)[0]
    )
