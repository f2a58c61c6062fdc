"""Random-forest regression from scratch: variance-reduction CART trees,
bootstrap aggregation, out-of-bag R², and exact JSON serialization.

Trees are stored as flat node arrays (feature, threshold, left, right,
value, cover); leaves carry feature == -1. Every node records its cover
(bootstrap-weighted training-sample count), which downstream TreeSHAP
attribution requires. Fitting is deterministic: (X, y, params, seed) fully
determine the forest.

Bootstrap multisets are fitted as (distinct rows, integer weights); covers,
minimum leaf sizes and leaf means all count multiplicity, so the result is
identical to fitting on the repeated rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "HyperParams",
    "PAPER_TUNED",
    "Tree",
    "Forest",
    "resolve_max_features",
    "fit_tree",
    "fit_forest",
    "predict",
    "oob_score",
    "forest_to_dict",
    "forest_from_dict",
    "save_forest",
    "load_forest",
]

MAX_FEATURES_CHOICES = ("sqrt", "log2", 0.3, 0.5, 0.8)


@dataclass(frozen=True)
class HyperParams:
    """Forest configuration.

    ``max_features`` is "sqrt", "log2", or a fraction in (0, 1]; the
    per-split candidate count resolves to max(1, floor(.)) of the feature
    count.
    """

    n_estimators: int = 200
    max_features: str | float = "sqrt"
    min_samples_leaf: int = 1
    max_depth: int = 48

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise ValueError(f"n_estimators must be >= 1, got {self.n_estimators}")
        mf = self.max_features
        if isinstance(mf, str):
            if mf not in ("sqrt", "log2"):
                raise ValueError(f"max_features string must be 'sqrt' or 'log2', got {mf!r}")
        elif not (0.0 < float(mf) <= 1.0):
            raise ValueError(f"max_features fraction must be in (0, 1], got {mf}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")


# Tuned configuration reported for the detection model, reused across lags.
PAPER_TUNED = HyperParams(n_estimators=200, max_features=0.3, min_samples_leaf=4, max_depth=48)


def resolve_max_features(max_features: str | float, n_features: int) -> int:
    if max_features == "sqrt":
        k = int(math.sqrt(n_features))
    elif max_features == "log2":
        k = int(math.log2(n_features))
    else:
        k = int(float(max_features) * n_features)
    return max(1, min(k, n_features))


@dataclass(frozen=True)
class Tree:
    """Flat regression tree. Arrays share one index space; root is node 0.

    ``feature[i] == -1`` marks a leaf. ``value`` is the node's (weighted)
    mean target for every node, ``cover`` its bootstrap-weighted sample
    count, so cover[parent] == cover[left] + cover[right].
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.flatnonzero(self.feature[idx] >= 0)
        while rows.size:
            cur = idx[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            idx[rows] = np.where(go_left, self.left[cur], self.right[cur])
            rows = rows[self.feature[idx[rows]] >= 0]
        return self.value[idx]


def _fit_tree_weighted(
    Xf: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    params: HyperParams,
    rng: np.random.Generator,
) -> Tree:
    """Grow one tree on rows with positive weight.

    At each node, ``max_features`` candidate features are drawn without
    replacement; candidate thresholds are midpoints between consecutive
    distinct sorted values; the split maximizing weighted MSE reduction
    wins, ties going to the lower feature index, then lower threshold.
    Splits leaving a child below min_samples_leaf (by weight) are
    inadmissible. Stops on max_depth, node weight < 2 * min_samples_leaf,
    zero target variance, or no admissible split.
    """
    n, d = Xf.shape
    mf = resolve_max_features(params.max_features, d)
    msl = float(params.min_samples_leaf)
    max_depth = params.max_depth
    w = weights.astype(np.float64)
    wy = w * y
    col_range = np.arange(mf)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    cover: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        cover.append(0.0)
        return len(feature) - 1

    rows0 = np.flatnonzero(weights).astype(np.int64)
    if rows0.size == 0:
        raise ValueError("empty node set: no rows with positive weight")
    stack: list[tuple[int, np.ndarray, int]] = [(new_node(), rows0, 0)]
    while stack:
        node, rows, depth = stack.pop()
        yn = y[rows]
        wn = w[rows]
        wyn = wy[rows]
        totw = wn.sum()
        toty = wyn.sum()
        value[node] = toty / totw
        cover[node] = totw
        if depth >= max_depth or totw < 2.0 * msl or np.ptp(yn) == 0.0:
            continue
        cand = rng.choice(d, size=mf, replace=False)
        cand.sort()
        Xn = Xf[rows[:, None], cand[None, :]]
        order = np.argsort(Xn, axis=0)
        xs = Xn[order, col_range]
        # weighted split scan: maximizing sum_child (sum wy)^2 / (sum w) is
        # equivalent to maximizing the weighted MSE reduction
        cw = np.cumsum(wn[order], axis=0)[:-1]
        cwy = np.cumsum(wyn[order], axis=0)[:-1]
        gains = cwy * cwy
        gains /= cw
        tmp = toty - cwy
        tmp *= tmp
        np.subtract(totw, cw, out=cw)  # cw now holds the right-side weight
        tmp /= cw
        gains += tmp
        valid = xs[:-1] < xs[1:]
        valid &= cw >= msl                 # right child large enough
        valid &= cw <= totw - msl          # left child large enough
        np.logical_not(valid, out=valid)
        np.copyto(gains, -np.inf, where=valid)
        pos = np.argmax(gains, axis=0)
        gain_best = gains[pos, col_range]
        f_local = int(np.argmax(gain_best))
        if not np.isfinite(gain_best[f_local]):
            continue
        p = int(pos[f_local])
        lo = xs[p, f_local]
        hi = xs[p + 1, f_local]
        thr = 0.5 * (lo + hi)
        if thr == hi:  # midpoint rounded up; keep the left value routing left
            thr = lo
        go_left = Xn[:, f_local] <= thr
        feature[node] = int(cand[f_local])
        threshold[node] = float(thr)
        lid = new_node()
        rid = new_node()
        left[node] = lid
        right[node] = rid
        stack.append((rid, rows[~go_left], depth + 1))
        stack.append((lid, rows[go_left], depth + 1))
    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        cover=np.array(cover, dtype=np.float64),
    )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    row_indices: Sequence[int],
    params: HyperParams,
    rng: np.random.Generator,
) -> Tree:
    """Fit one tree on the multiset of rows given by row_indices."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rows = np.asarray(row_indices, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("empty node set")
    weights = np.bincount(rows, minlength=X.shape[0])
    return _fit_tree_weighted(np.asfortranarray(X), y, weights, params, rng)


@dataclass(frozen=True)
class Forest:
    """Bagged ensemble; prediction is the unweighted mean over trees."""

    trees: tuple[Tree, ...]
    params: HyperParams
    seed: int
    n_features: int
    bootstrap_indices: tuple[np.ndarray, ...]
    oob_r2: float | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:  # fixed tree order
            acc += tree.predict(X)
        return acc / len(self.trees)


def predict(forest: Forest, X: np.ndarray) -> np.ndarray:
    return forest.predict(X)


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,)))


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: HyperParams = PAPER_TUNED,
    seed: int = 0,
    bootstrap: bool = True,
    compute_oob: bool = False,
) -> Forest:
    """Fit ``params.n_estimators`` trees, each on its own bootstrap sample.

    Per-tree generators derive from (seed, tree index), so the result does
    not depend on evaluation order. ``bootstrap=False`` fits every tree on
    the full dataset (then OOB is undefined).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    Xf = np.asfortranarray(X)
    trees = []
    boot = []
    for t in range(params.n_estimators):
        rng = _tree_rng(seed, t)
        if bootstrap:
            idx = rng.integers(0, n, size=n)
            weights = np.bincount(idx, minlength=n)
        else:
            idx = np.arange(n)
            weights = np.ones(n, dtype=np.int64)
        trees.append(_fit_tree_weighted(Xf, y, weights, params, rng))
        boot.append(idx)
    forest = Forest(
        trees=tuple(trees),
        params=params,
        seed=seed,
        n_features=X.shape[1],
        bootstrap_indices=tuple(boot),
    )
    if compute_oob:
        forest = replace(forest, oob_r2=oob_score(forest, X, y))
    return forest


def oob_score(forest: Forest, X: np.ndarray, y: np.ndarray) -> float:
    """R² of out-of-bag predictions: each sample is scored by the trees
    whose bootstrap missed it; samples never out-of-bag are excluded."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    sums = np.zeros(n, dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    for tree, idx in zip(forest.trees, forest.bootstrap_indices):
        in_bag = np.bincount(idx, minlength=n) > 0
        oob = ~in_bag
        if not oob.any():
            continue
        preds = tree.predict(X[oob])
        sums[oob] += preds
        counts[oob] += 1
    included = counts > 0
    if not included.any():
        raise ValueError("OOB score undefined: every sample is in-bag for every tree")
    y_inc = y[included]
    pred_inc = sums[included] / counts[included]
    sse = float(((y_inc - pred_inc) ** 2).sum())
    sst = float(((y_inc - y_inc.mean()) ** 2).sum())
    if sst == 0.0:
        raise ValueError("OOB score undefined: zero target variance")
    return 1.0 - sse / sst


# ---------------------------------------------------------------------------
# serialization


def _params_to_dict(params: HyperParams) -> dict:
    return {
        "n_estimators": params.n_estimators,
        "max_features": params.max_features,
        "min_samples_leaf": params.min_samples_leaf,
        "max_depth": params.max_depth,
    }


def params_from_dict(d: dict) -> HyperParams:
    return HyperParams(
        n_estimators=int(d["n_estimators"]),
        max_features=d["max_features"] if isinstance(d["max_features"], str) else float(d["max_features"]),
        min_samples_leaf=int(d["min_samples_leaf"]),
        max_depth=int(d["max_depth"]),
    )


def forest_to_dict(forest: Forest) -> dict:
    return {
        "params": _params_to_dict(forest.params),
        "seed": forest.seed,
        "n_features": forest.n_features,
        "oob_r2": forest.oob_r2,
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
                "cover": tree.cover.tolist(),
            }
            for tree in forest.trees
        ],
        "bootstrap_indices": [idx.tolist() for idx in forest.bootstrap_indices],
    }


def forest_from_dict(payload: dict) -> Forest:
    trees = tuple(
        Tree(
            feature=np.array(t["feature"], dtype=np.int64),
            threshold=np.array(t["threshold"], dtype=np.float64),
            left=np.array(t["left"], dtype=np.int64),
            right=np.array(t["right"], dtype=np.int64),
            value=np.array(t["value"], dtype=np.float64),
            cover=np.array(t["cover"], dtype=np.float64),
        )
        for t in payload["trees"]
    )
    return Forest(
        trees=trees,
        params=params_from_dict(payload["params"]),
        seed=int(payload["seed"]),
        n_features=int(payload["n_features"]),
        bootstrap_indices=tuple(
            np.array(idx, dtype=np.int64) for idx in payload["bootstrap_indices"]
        ),
        oob_r2=payload.get("oob_r2"),
    )


def save_forest(forest: Forest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(forest_to_dict(forest)) + "\n")


def load_forest(path: str | Path) -> Forest:
    return forest_from_dict(json.loads(Path(path).read_text()))
