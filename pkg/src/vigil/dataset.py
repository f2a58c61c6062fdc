"""Pooled dataset assembly, participant-balanced folds, and CV metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .connectivity import ConnectivityVector

__all__ = [
    "Sample",
    "FoldPlan",
    "EvalReport",
    "assemble",
    "make_folds",
    "to_matrices",
    "rmse",
    "pearson_r",
    "evaluate",
    "write_eval_csv",
    "write_folds_json",
]


@dataclass(frozen=True)
class Sample:
    participant_id: str
    trial_index: int
    lag_s: int
    features: np.ndarray
    target: float

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if not np.isfinite(self.target):
            raise ValueError(
                f"{self.participant_id} trial {self.trial_index}: non-finite target"
            )
        object.__setattr__(self, "features", features)


def assemble(
    per_participant: Mapping[str, tuple[Sequence[ConnectivityVector], Mapping[int, float]]],
    lag_s: int,
) -> list[Sample]:
    """Inner-join features with targets on trial index and pool participants.

    Trials lacking either side are dropped. Participants are pooled in
    sorted-id order; all feature rows must have the same length.
    """
    samples: list[Sample] = []
    n_features: int | None = None
    for pid in sorted(per_participant):
        vectors, targets = per_participant[pid]
        for vec in vectors:
            if vec.lag_s != lag_s:
                continue
            if n_features is None:
                n_features = vec.values.shape[0]
            elif vec.values.shape[0] != n_features:
                raise ValueError(
                    f"feature count mismatch: participant {pid} has "
                    f"{vec.values.shape[0]}, expected {n_features}"
                )
            target = targets.get(vec.trial_index)
            if target is None:
                continue
            samples.append(Sample(pid, vec.trial_index, lag_s, vec.values, float(target)))
    return samples


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every sample position to one of k folds."""

    k: int
    seed: int
    fold_of: np.ndarray
    contiguous: bool = False

    def __post_init__(self) -> None:
        fold_of = np.asarray(self.fold_of, dtype=np.int64)
        object.__setattr__(self, "fold_of", fold_of)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)


def make_folds(
    samples: Sequence[Sample], k: int = 10, seed: int = 0, contiguous: bool = False
) -> FoldPlan:
    """Participant-balanced folds: per participant, fold sizes differ by <= 1.

    Default mode shuffles each participant's samples with the seeded
    generator and deals them round-robin starting at fold
    (participant_ordinal mod k). Contiguous mode keeps each participant's
    samples in order and deals trial-order blocks instead, for
    leakage-sensitive studies.
    """
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if not samples:
        raise ValueError("empty dataset")
    by_pid: dict[str, list[int]] = {}
    for pos, s in enumerate(samples):
        by_pid.setdefault(s.participant_id, []).append(pos)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(samples), dtype=np.int64)
    for ordinal, pid in enumerate(sorted(by_pid)):
        positions = np.array(by_pid[pid])
        if not contiguous:
            positions = positions[rng.permutation(positions.size)]
        start = ordinal % k
        fold_of[positions] = (start + np.arange(positions.size)) % k
    return FoldPlan(k=k, seed=seed, fold_of=fold_of, contiguous=contiguous)


def to_matrices(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack features and targets into (n, d) X and (n,) y float64 arrays."""
    X = np.stack([s.features for s in samples]).astype(np.float64)
    y = np.array([s.target for s in samples], dtype=np.float64)
    return X, y


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    return float(np.sqrt(np.mean((y_pred - y_true) ** 2)))


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    """Product-moment correlation; raises on zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError("pearson_r requires at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt((xc * xc).sum())
    sy = np.sqrt((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        raise ValueError("pearson_r undefined for zero-variance input")
    r = float((xc * yc).sum() / (sx * sy))
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class EvalReport:
    """Per-fold RMSE (ms) and Pearson r with mean and population sd."""

    lag_s: int
    fold_rmse: tuple[float, ...]
    fold_r: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.fold_rmse)

    @property
    def rmse_mean(self) -> float:
        return float(np.mean(self.fold_rmse))

    @property
    def rmse_sd(self) -> float:
        return float(np.std(self.fold_rmse))

    @property
    def r_mean(self) -> float:
        return float(np.mean(self.fold_r))

    @property
    def r_sd(self) -> float:
        return float(np.std(self.fold_r))


def evaluate(
    samples: Sequence[Sample],
    plan: FoldPlan,
    train: Callable[[np.ndarray, np.ndarray, int], object],
    lag_s: int | None = None,
) -> EvalReport:
    """k-fold cross-validation: train on k-1 folds, score the held-out fold.

    ``train(X, y, fold)`` must return an object with a ``predict(X)``
    method. Folds with fewer than 2 samples, or where predictions or
    targets have zero variance, raise (Pearson r is undefined there).
    """
    X, y = to_matrices(samples)
    if lag_s is None:
        lag_s = samples[0].lag_s
    fold_rmse = []
    fold_r = []
    for fold in range(plan.k):
        test_idx = plan.test_indices(fold)
        train_idx = plan.train_indices(fold)
        if test_idx.size < 2:
            raise ValueError(f"fold {fold} has {test_idx.size} samples; r undefined")
        model = train(X[train_idx], y[train_idx], fold)
        y_hat = np.asarray(model.predict(X[test_idx]), dtype=np.float64)
        fold_rmse.append(rmse(y[test_idx], y_hat))
        try:
            fold_r.append(pearson_r(y[test_idx], y_hat))
        except ValueError as e:
            raise ValueError(f"fold {fold}: {e}") from e
    return EvalReport(lag_s=lag_s, fold_rmse=tuple(fold_rmse), fold_r=tuple(fold_r))


def write_eval_csv(reports: Iterable[EvalReport], path: str | Path) -> None:
    """Summary table: one row per lag with mean +/- sd of both metrics."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag_s", "rmse_mean", "rmse_sd", "r_mean", "r_sd"])
        for rep in reports:
            writer.writerow(
                [rep.lag_s, repr(rep.rmse_mean), repr(rep.rmse_sd), repr(rep.r_mean), repr(rep.r_sd)]
            )


def write_folds_json(report: EvalReport, path: str | Path) -> None:
    payload = {
        "lag_s": report.lag_s,
        "k": report.k,
        "fold_rmse": list(report.fold_rmse),
        "fold_r": list(report.fold_r),
        "rmse_mean": report.rmse_mean,
        "rmse_sd": report.rmse_sd,
        "r_mean": report.r_mean,
        "r_sd": report.r_sd,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
