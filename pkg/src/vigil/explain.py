"""Exact TreeSHAP attribution for the forest, feature ranking, and regional
aggregation.

The per-tree attribution uses the exact path-dependent recursion: it walks
every root-to-leaf path once while maintaining, for each unique feature on
the path, the fraction of feature orderings that route "hot" (following x)
and "cold" (cover-weighted branching). The result equals brute-force
Shapley values of the cover-conditional expectation game, and satisfies
local accuracy exactly: base + sum(phi) == prediction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .connectivity import unpair
from .dataset import pearson_r
from .forest import Forest, Tree
from .ingest import Montage

__all__ = [
    "ShapMatrix",
    "FeatureReport",
    "RegionalObservation",
    "tree_expected_value",
    "tree_shap",
    "forest_shap",
    "top_k",
    "regional_table",
    "write_shap_csv",
    "write_summary_csv",
    "write_top_k_json",
]


@dataclass(frozen=True)
class ShapMatrix:
    """Per-sample, per-feature attributions plus the shared base value."""

    base_value: float
    phi: np.ndarray  # (n_samples, n_features)


@dataclass(frozen=True)
class FeatureReport:
    feature_index: int
    pair_label: str
    mean_abs_shap: float
    direction_r: float


@dataclass(frozen=True)
class RegionalObservation:
    feature_index: int
    region_pair: str
    chan_a: str
    chan_b: str
    response: float


def tree_expected_value(tree: Tree) -> float:
    """Cover-weighted mean of leaf values."""
    leaves = tree.feature < 0
    total = tree.cover[0]
    return float((tree.value[leaves] * tree.cover[leaves]).sum() / total)


def _extend(d: list, z: list, o: list, w: list, pz: float, po: float, pi: int) -> None:
    depth = len(w)
    d.append(pi)
    z.append(pz)
    o.append(po)
    w.append(1.0 if depth == 0 else 0.0)
    for i in range(depth - 1, -1, -1):
        w[i + 1] += po * w[i] * (i + 1) / (depth + 1)
        w[i] = pz * w[i] * (depth - i) / (depth + 1)


def _unwind(d: list, z: list, o: list, w: list, index: int) -> None:
    depth = len(w) - 1
    oi = o[index]
    zi = z[index]
    carry = w[depth]
    if oi != 0.0:
        for i in range(depth - 1, -1, -1):
            tmp = w[i]
            w[i] = carry * (depth + 1) / ((i + 1) * oi)
            carry = tmp - w[i] * zi * (depth - i) / (depth + 1)
    else:
        for i in range(depth - 1, -1, -1):
            w[i] = w[i] * (depth + 1) / (zi * (depth - i))
    for i in range(index, depth):
        d[i] = d[i + 1]
        z[i] = z[i + 1]
        o[i] = o[i + 1]
    d.pop()
    z.pop()
    o.pop()
    w.pop()


def _unwound_sum(z: list, o: list, w: list, index: int) -> float:
    depth = len(w) - 1
    oi = o[index]
    zi = z[index]
    total = 0.0
    if oi != 0.0:
        carry = w[depth]
        for i in range(depth - 1, -1, -1):
            tmp = carry / ((i + 1) * oi)
            total += tmp
            carry = w[i] - tmp * zi * (depth - i)
    else:
        for i in range(depth - 1, -1, -1):
            total += w[i] / (zi * (depth - i))
    return total * (depth + 1)


def tree_shap(tree: Tree, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact path-dependent SHAP values of one tree at one point.

    Returns (phi, base) with base the cover-weighted mean of leaf values;
    base + sum(phi) equals the tree's prediction at x.
    """
    x = np.asarray(x, dtype=np.float64)
    n_features = int(tree.feature.max()) + 1 if (tree.feature >= 0).any() else 0
    phi = np.zeros(max(n_features, x.shape[0]), dtype=np.float64)
    feature = tree.feature
    threshold = tree.threshold
    left = tree.left
    right = tree.right
    value = tree.value
    cover = tree.cover

    def recurse(node: int, d: list, z: list, o: list, w: list,
                pz: float, po: float, pi: int) -> None:
        d = d.copy()
        z = z.copy()
        o = o.copy()
        w = w.copy()
        _extend(d, z, o, w, pz, po, pi)
        f = feature[node]
        if f < 0:
            leaf_value = value[node]
            for i in range(1, len(w)):
                contrib = _unwound_sum(z, o, w, i) * (o[i] - z[i])
                phi[d[i]] += contrib * leaf_value
            return
        if x[f] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        hot_zero = cover[hot] / cover[node]
        cold_zero = cover[cold] / cover[node]
        inc_zero = 1.0
        inc_one = 1.0
        for k in range(1, len(d)):
            if d[k] == f:
                inc_zero = z[k]
                inc_one = o[k]
                _unwind(d, z, o, w, k)
                break
        recurse(hot, d, z, o, w, hot_zero * inc_zero, inc_one, int(f))
        recurse(cold, d, z, o, w, cold_zero * inc_zero, 0.0, int(f))

    recurse(0, [], [], [], [], 1.0, 1.0, -1)
    base = tree_expected_value(tree)
    return phi[: x.shape[0]], base


def forest_shap(forest: Forest, X: np.ndarray) -> ShapMatrix:
    """Mean per-tree attributions over the ensemble, rows in sample order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} features, got {X.shape[1]}")
    phi = np.zeros((X.shape[0], forest.n_features), dtype=np.float64)
    base = 0.0
    for tree in forest.trees:
        base += tree_expected_value(tree)
        for row in range(X.shape[0]):
            tree_phi, _ = tree_shap(tree, X[row])
            phi[row] += tree_phi
    n_trees = len(forest.trees)
    return ShapMatrix(base_value=base / n_trees, phi=phi / n_trees)


def top_k(
    shap: ShapMatrix,
    X: np.ndarray,
    feature_names: Sequence[str],
    k: int = 5,
) -> list[FeatureReport]:
    """Features ranked by mean |SHAP| (ties to the lower canonical index),
    with the Pearson correlation between feature value and its SHAP value
    attached as the direction of impact."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("direction_r needs at least 2 samples")
    mean_abs = np.abs(shap.phi).mean(axis=0)
    k = min(k, mean_abs.shape[0])
    # stable sort on negated values keeps lower index first among ties
    ranked = np.argsort(-mean_abs, kind="stable")[:k]
    reports = []
    for f in ranked:
        f = int(f)
        try:
            direction = pearson_r(X[:, f], shap.phi[:, f])
        except ValueError:
            direction = float("nan")
        reports.append(
            FeatureReport(
                feature_index=f,
                pair_label=feature_names[f],
                mean_abs_shap=float(mean_abs[f]),
                direction_r=direction,
            )
        )
    return reports


def regional_table(
    shap: ShapMatrix,
    montage: Montage,
    channel_labels: Sequence[str],
    per_sample: bool = False,
) -> list[RegionalObservation]:
    """Observations for the regional mixed model.

    Default: one observation per feature, response = mean |SHAP| across
    samples. With ``per_sample`` each (sample, feature) cell becomes its
    own observation (n_samples * n_pairs rows) with response = |SHAP|.
    """
    n_ch = len(channel_labels)
    montage.check_covers(tuple(channel_labels))
    n_pairs = n_ch * (n_ch - 1) // 2
    if shap.phi.shape[1] != n_pairs:
        raise ValueError(
            f"{shap.phi.shape[1]} features but {n_ch} channels imply {n_pairs} pairs"
        )
    abs_phi = np.abs(shap.phi)
    mean_abs = abs_phi.mean(axis=0)
    out = []
    for f in range(n_pairs):
        i, j = unpair(f, n_ch)
        chan_a, chan_b = channel_labels[i], channel_labels[j]
        pair = "-".join(sorted((montage.region_of(chan_a), montage.region_of(chan_b))))
        if per_sample:
            out.extend(
                RegionalObservation(
                    feature_index=f,
                    region_pair=pair,
                    chan_a=chan_a,
                    chan_b=chan_b,
                    response=float(v),
                )
                for v in abs_phi[:, f]
            )
        else:
            out.append(
                RegionalObservation(
                    feature_index=f,
                    region_pair=pair,
                    chan_a=chan_a,
                    chan_b=chan_b,
                    response=float(mean_abs[f]),
                )
            )
    return out


def write_shap_csv(shap: ShapMatrix, feature_names: Sequence[str], path: str | Path) -> None:
    """Sample-by-feature SHAP dump; first column is the shared base value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["base_value"] + list(feature_names))
        base = repr(shap.base_value)
        for row in shap.phi:
            writer.writerow([base] + [repr(float(v)) for v in row])


def write_summary_csv(
    shap: ShapMatrix,
    X: np.ndarray,
    feature_names: Sequence[str],
    observations: Sequence[RegionalObservation],
    path: str | Path,
) -> None:
    X = np.asarray(X, dtype=np.float64)
    mean_abs = np.abs(shap.phi).mean(axis=0)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "mean_abs_shap", "direction_r", "region_pair"])
        for obs in observations:
            f = obs.feature_index
            try:
                direction = pearson_r(X[:, f], shap.phi[:, f])
            except ValueError:
                direction = float("nan")
            writer.writerow(
                [feature_names[f], repr(float(mean_abs[f])), repr(direction), obs.region_pair]
            )


def write_top_k_json(reports: Sequence[FeatureReport], path: str | Path) -> None:
    payload = [
        {
            "rank": rank + 1,
            "pair": rep.pair_label,
            "mean_abs_shap": rep.mean_abs_shap,
            "direction_r": rep.direction_r,
        }
        for rank, rep in enumerate(reports)
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
