"""Classical statistics and the crossed-random-intercepts mixed model.

Provides paired t-tests with Cohen's d, Pearson correlations with Student-t
p-values, Benjamini-Hochberg FDR adjustment, and a linear mixed model

    response ~ 1 + region_pair + (1 | chan_1) + (1 | chan_2)

fitted by REML: the two relative variance ratios are optimized on the log
scale with a Nelder-Mead simplex, with beta and the residual variance
profiled out at each step. Estimated marginal means per region-pair level
get Wald z-tests with FDR correction across the 15 levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import betainc

__all__ = [
    "TTestResult",
    "CorrResult",
    "LmeFit",
    "EmmRow",
    "student_t_sf2",
    "normal_sf",
    "paired_t",
    "pearson",
    "bh_fdr",
    "fit_lme",
    "emm_table",
    "significance_stars",
]


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= t) for Student's t.

    Uses the exact identity with the regularized incomplete beta function:
    P(|T| >= t) = I_{df/(df+t^2)}(df/2, 1/2).
    """
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def normal_sf(z: float) -> float:
    """Upper tail of the standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    cohen_d: float


def paired_t(pre: Sequence[float], post: Sequence[float]) -> TTestResult:
    """Paired-samples t-test on post - pre differences (two-sided p)."""
    pre = np.asarray(pre, dtype=np.float64)
    post = np.asarray(post, dtype=np.float64)
    if pre.shape != post.shape:
        raise ValueError(f"length mismatch: {pre.shape} vs {post.shape}")
    n = pre.shape[0]
    if n < 2:
        raise ValueError("paired_t needs at least 2 pairs")
    d = post - pre
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ValueError("zero-variance differences: t undefined")
    mean = float(d.mean())
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, df=n - 1, p=student_t_sf2(t, n - 1), cohen_d=mean / sd)


@dataclass(frozen=True)
class CorrResult:
    r: float
    n: int
    p: float


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrResult:
    """Pearson correlation with the Student-t transform for the p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n < 3:
        raise ValueError("pearson needs at least 3 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float((xc * xc).sum()))
    sy = math.sqrt(float((yc * yc).sum()))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero-variance input: r undefined")
    r = float((xc * yc).sum()) / (sx * sy)
    r = min(1.0, max(-1.0, r))
    if abs(r) == 1.0:
        return CorrResult(r=r, n=n, p=0.0)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrResult(r=r, n=n, p=student_t_sf2(t, n - 2))


def bh_fdr(pvals: Sequence[float], alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Benjamini-Hochberg step-up adjustment.

    Returns (adjusted p-values, significance flags) in the input order.
    Adjusted p_(i) = min over j >= i of m * p_(j) / j, clamped to 1;
    significant iff adjusted p <= alpha.
    """
    p = np.asarray(pvals, dtype=np.float64)
    if ((p < 0) | (p > 1)).any():
        raise ValueError("p-values must lie in [0, 1]")
    m = p.shape[0]
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted_sorted = np.minimum(adjusted_sorted, 1.0)
    adjusted = np.empty(m, dtype=np.float64)
    adjusted[order] = adjusted_sorted
    return adjusted, adjusted <= alpha


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


# ---------------------------------------------------------------------------
# linear mixed model


@dataclass(frozen=True)
class LmeFit:
    """REML fit of response ~ 1 + region_pair + (1|chan_1) + (1|chan_2).

    ``beta`` uses reference-cell coding: intercept for the first level in
    ``levels`` plus one offset per remaining level.
    """

    levels: tuple[str, ...]
    beta: np.ndarray
    cov_beta: np.ndarray
    var_chan1: float
    var_chan2: float
    sigma2_resid: float
    reml_deviance: float
    converged: bool
    n_obs: int
    deviance_path: tuple[float, ...]


@dataclass(frozen=True)
class EmmRow:
    region_pair: str
    emm: float
    se: float
    z: float
    p: float
    p_fdr: float
    significant: bool


class _RemlProblem:
    """Profiled REML deviance via the q x q Woodbury reduction.

    With W = I + Z diag(lam) Z', all n x n solves reduce to a Cholesky of
    K = I_q + A Z'Z A where A = diag(sqrt(lam)); beta and sigma² are
    profiled out analytically.
    """

    def __init__(self, X: np.ndarray, Z: np.ndarray, y: np.ndarray, block_sizes: tuple[int, int]):
        self.n, self.p = X.shape
        self.q = Z.shape[1]
        self.block_sizes = block_sizes
        self.XtX = X.T @ X
        self.ZtX = Z.T @ X
        self.ZtZ = Z.T @ Z
        self.Xty = X.T @ y
        self.Zty = Z.T @ y
        self.yty = float(y @ y)

    def _lam_vector(self, lam1: float, lam2: float) -> np.ndarray:
        q1, q2 = self.block_sizes
        return np.concatenate([np.full(q1, lam1), np.full(q2, lam2)])

    def profiled(self, lam1: float, lam2: float):
        """Return (deviance, beta, cov_beta_unit, sigma2) at the ratios."""
        lam = self._lam_vector(lam1, lam2)
        a = np.sqrt(lam)
        K = np.eye(self.q) + (a[:, None] * self.ZtZ) * a[None, :]
        cK, low = cho_factor(K, lower=True)
        logdet_w = 2.0 * float(np.log(np.diag(cK)).sum())

        aZtX = a[:, None] * self.ZtX
        aZty = a * self.Zty
        KiZtX = cho_solve((cK, low), aZtX)
        KiZty = cho_solve((cK, low), aZty)

        XtWiX = self.XtX - aZtX.T @ KiZtX
        XtWiy = self.Xty - aZtX.T @ KiZty
        ytWiy = self.yty - float(aZty @ KiZty)

        cX, lowX = cho_factor(XtWiX, lower=True)
        beta = cho_solve((cX, lowX), XtWiy)
        logdet_xwx = 2.0 * float(np.log(np.diag(cX)).sum())

        rss = ytWiy - float(beta @ XtWiy)
        dof = self.n - self.p
        sigma2 = rss / dof
        deviance = (
            dof * math.log(2.0 * math.pi * sigma2) + dof + logdet_w + logdet_xwx
        )
        cov_unit = cho_solve((cX, lowX), np.eye(self.p))
        return deviance, beta, cov_unit, sigma2

    def deviance(self, log_lam: np.ndarray) -> float:
        lam1, lam2 = np.exp(np.clip(log_lam, -30.0, 30.0))
        return self.profiled(lam1, lam2)[0]


def _build_design(observations: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[str, ...], tuple[int, int]]:
    response = np.array([float(o.response) for o in observations], dtype=np.float64)
    levels = tuple(sorted({o.region_pair for o in observations}))
    level_of = {lv: i for i, lv in enumerate(levels)}
    n = len(observations)
    p = len(levels)
    X = np.zeros((n, p), dtype=np.float64)
    X[:, 0] = 1.0
    for row, obs in enumerate(observations):
        j = level_of[obs.region_pair]
        if j > 0:
            X[row, j] = 1.0
    chan1_levels = sorted({o.chan_a for o in observations})
    chan2_levels = sorted({o.chan_b for o in observations})
    c1 = {c: i for i, c in enumerate(chan1_levels)}
    c2 = {c: i for i, c in enumerate(chan2_levels)}
    q1, q2 = len(chan1_levels), len(chan2_levels)
    Z = np.zeros((n, q1 + q2), dtype=np.float64)
    for row, obs in enumerate(observations):
        Z[row, c1[obs.chan_a]] = 1.0
        Z[row, q1 + c2[obs.chan_b]] = 1.0
    return X, Z, response, levels, (q1, q2)


def _build_design_merged(observations: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[str, ...], tuple[int, int]]:
    X, _, response, levels, _ = _build_design(observations)
    chans = sorted({o.chan_a for o in observations} | {o.chan_b for o in observations})
    cid = {c: i for i, c in enumerate(chans)}
    Z = np.zeros((len(observations), len(chans)), dtype=np.float64)
    for row, obs in enumerate(observations):
        Z[row, cid[obs.chan_a]] += 1.0
        Z[row, cid[obs.chan_b]] += 1.0
    return X, Z, response, levels, (len(chans), 0)


def fit_lme(
    observations: Sequence,
    merge_slots: bool = False,
    var_ratios: tuple[float, float] | None = None,
    max_iter: int = 400,
) -> LmeFit:
    """REML fit on observations with region_pair, chan_a, chan_b, response.

    Grouping slot 1 is the lower-canonical-index channel of each pair,
    slot 2 the higher; ``merge_slots`` collapses both into one 30-level
    factor as a sensitivity check. ``var_ratios`` pins the two relative
    variances (sigma_g²/sigma_e²) instead of optimizing them — with (0, 0)
    the fit reduces exactly to ordinary least squares.
    """
    if merge_slots:
        X, Z, y, levels, blocks = _build_design_merged(observations)
    else:
        X, Z, y, levels, blocks = _build_design(observations)
    for slot, size in enumerate(blocks):
        if size == 1:
            raise ValueError(f"grouping factor {slot + 1} has a single level")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("fixed-effects design is rank deficient")
    problem = _RemlProblem(X, Z, y, blocks)

    if var_ratios is not None:
        lam1, lam2 = float(var_ratios[0]), float(var_ratios[1])
        deviance, beta, cov_unit, sigma2 = problem.profiled(lam1, lam2)
        return LmeFit(
            levels=levels,
            beta=beta,
            cov_beta=cov_unit * sigma2,
            var_chan1=lam1 * sigma2,
            var_chan2=lam2 * sigma2,
            sigma2_resid=sigma2,
            reml_deviance=deviance,
            converged=True,
            n_obs=problem.n,
            deviance_path=(deviance,),
        )

    path: list[float] = []

    def record(xk: np.ndarray) -> None:
        path.append(problem.deviance(xk))

    result = minimize(
        problem.deviance,
        x0=np.zeros(2),
        method="Nelder-Mead",
        callback=record,
        options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-10},
    )
    lam1, lam2 = np.exp(np.clip(result.x, -30.0, 30.0))
    # ratios this small are numerically zero variance
    lam1 = 0.0 if lam1 < 1e-12 else float(lam1)
    lam2 = 0.0 if lam2 < 1e-12 else float(lam2)
    deviance, beta, cov_unit, sigma2 = problem.profiled(lam1, lam2)
    return LmeFit(
        levels=levels,
        beta=beta,
        cov_beta=cov_unit * sigma2,
        var_chan1=lam1 * sigma2,
        var_chan2=lam2 * sigma2,
        sigma2_resid=sigma2,
        reml_deviance=deviance,
        converged=bool(result.success),
        n_obs=problem.n,
        deviance_path=tuple(path),
    )


def emm_table(fit: LmeFit, alpha: float = 0.05) -> list[EmmRow]:
    """Estimated marginal means per region-pair level with Wald z-tests
    and BH-FDR across the levels.

    With a single categorical fixed factor in reference-cell coding,
    EMM(level) = intercept + level effect (reference effect = 0).
    """
    if not fit.converged:
        raise ValueError("cannot build EMM table from an unconverged fit")
    p = len(fit.levels)
    rows = []
    pvals = []
    for j, level in enumerate(fit.levels):
        contrast = np.zeros(p)
        contrast[0] = 1.0
        if j > 0:
            contrast[j] = 1.0
        emm = float(contrast @ fit.beta)
        se = math.sqrt(float(contrast @ fit.cov_beta @ contrast))
        z = emm / se
        pv = 2.0 * normal_sf(abs(z))
        pvals.append(pv)
        rows.append((level, emm, se, z, pv))
    adjusted, significant = bh_fdr(pvals, alpha)
    return [
        EmmRow(
            region_pair=level,
            emm=emm,
            se=se,
            z=z,
            p=pv,
            p_fdr=float(adj),
            significant=bool(sig),
        )
        for (level, emm, se, z, pv), adj, sig in zip(rows, adjusted, significant)
    ]
