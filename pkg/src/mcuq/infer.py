"""Variance formulas, studentized statistics, and confidence intervals for
matrix entries and low-rank factor functionals.

The de-biased entry M^d_{ij} is approximately Gaussian around M*_{ij} with
variance

    v*_{ij} = (sigma^2 / p) (||U*_{i,.}||^2 + ||V*_{j,.}||^2),

estimated empirically by plugging de-shrunken factor leverages into the
same expression. Factor inner products e_i^T X X^T e_j (i != j) carry the
analogous variance rho_{ij} built from the X-side leverages alone. Normal
quantiles come from scipy's machine-precision implementations.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .linalg import procrustes_align

LOW_LEVERAGE_FLAG = "low-leverage: Gaussian approximation unreliable"
_LOW_LEVERAGE_FACTOR = 1e-3


@dataclass(frozen=True)
class VarianceEstimate:
    """A nonnegative variance value tagged by its formula.

    ``kind`` is "true" for v*_{ij} (truth factors), "empirical" for v_{ij}
    (de-shrunken factor plug-in), or "factor" for rho_{ij}. ``flag`` marks
    degenerate leverage regimes.
    """

    value: float
    kind: str
    flag: str | None = None

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError("variance must be finite and nonnegative")
        if self.kind not in ("true", "empirical", "factor"):
            raise ValueError("unknown variance kind %r" % (self.kind,))


@dataclass(frozen=True)
class ConfidenceInterval:
    """Two-sided interval [center - half_width, center + half_width]."""

    center: float
    half_width: float
    level: float
    flag: str | None = None

    def contains(self, x):
        return abs(x - self.center) <= self.half_width


def normal_quantile(q):
    """Inverse standard normal CDF."""
    return float(ndtri(q))


def _check_index(i, n, name):
    if not 0 <= i < n:
        raise ValueError("%s index %d out of range [0, %d)" % (name, i, n))


def true_entry_variance(gt, sigma, p, i, j):
    """Oracle entry variance v*_{ij} from the truth factors."""
    _check_index(i, gt.n, "row")
    _check_index(j, gt.n, "col")
    lev_u = float((gt.Ustar[i] * gt.Ustar[i]).sum())
    lev_v = float((gt.Vstar[j] * gt.Vstar[j]).sum())
    return VarianceEstimate(value=(sigma**2 / p) * (lev_u + lev_v), kind="true")


def _leverages(F):
    # Row leverages F_{i,.} (F^T F)^{-1} F_{i,.}^T for all rows at once.
    G = F.T @ F
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > 1e14:
        raise ValueError("factor Gram matrix is numerically singular")
    B = np.linalg.solve(G, F.T).T
    return np.einsum("ij,ij->i", B, F)


def _low_leverage_threshold(est, sigma, p):
    n = max(est.Xd.shape[0], est.Yd.shape[0])
    return _LOW_LEVERAGE_FACTOR * sigma**2 * est.r / (n * p)


def entry_variances(est, sigma, p, rows, cols):
    """Vectorized empirical entry variances v_{ij} for index arrays."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    lev_x = _leverages(est.Xd)
    lev_y = _leverages(est.Yd)
    return (sigma**2 / p) * (lev_x[rows] + lev_y[cols])


def empirical_entry_variance(est, sigma, p, i, j):
    """Empirical entry variance v_{ij} from the de-shrunken factors.

    Values below 1e-3 * sigma^2 r / (n p) are flagged as degenerate: the
    Gaussian approximation is unreliable when both leverages nearly vanish.
    """
    _check_index(i, est.Xd.shape[0], "row")
    _check_index(j, est.Yd.shape[0], "col")
    v = float(entry_variances(est, sigma, p, np.array([i]), np.array([j]))[0])
    flag = LOW_LEVERAGE_FLAG if v < _low_leverage_threshold(est, sigma, p) else None
    return VarianceEstimate(value=v, kind="empirical", flag=flag)


def entry_ci(md_ij, v, alpha):
    """Two-sided CI [md_ij +/- z_{1-alpha/2} sqrt(v)].

    ``v`` may be a :class:`VarianceEstimate` (its flag is propagated) or a
    bare nonnegative float.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if isinstance(v, VarianceEstimate):
        value, flag = v.value, v.flag
    else:
        value, flag = float(v), None
        if value < 0:
            raise ValueError("variance must be nonnegative")
    z = normal_quantile(1 - alpha / 2)
    return ConfidenceInterval(
        center=float(md_ij), half_width=z * np.sqrt(value), level=1 - alpha, flag=flag
    )


def factor_variances(est, sigma, p, rows, cols):
    """Vectorized factor-functional variances rho_{ij} (X-side leverages)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    lev_x = _leverages(est.Xd)
    return (sigma**2 / p) * (lev_x[rows] + lev_x[cols])


def factor_inner_stat(est, gt, sigma, p, i, j):
    """Studentized statistic for the factor inner product at (i, j), i != j.

    Returns (T_ij, rho_ij) where T_ij = (e_i^T Xd Xd^T e_j -
    e_i^T X* X*^T e_j) / sqrt(rho_ij).
    """
    if i == j:
        raise ValueError("factor inner product statistic requires i != j")
    n = est.Xd.shape[0]
    _check_index(i, n, "row")
    _check_index(j, n, "row")
    rho = float(factor_variances(est, sigma, p, np.array([i]), np.array([j]))[0])
    if rho <= 0:
        raise ValueError("variance rho_ij is zero; statistic undefined")
    estimate = float(est.Xd[i] @ est.Xd[j])
    target = float(gt.Xstar[i] @ gt.Xstar[j])
    t = (estimate - target) / np.sqrt(rho)
    return t, VarianceEstimate(value=rho, kind="factor")


def entry_stat(est, gt, sigma, p, i, j):
    """Studentized entry statistic S_ij = (Md_ij - M*_ij) / sqrt(v_ij)."""
    v = empirical_entry_variance(est, sigma, p, i, j)
    if v.value <= 0:
        raise ValueError("variance v_ij is zero; statistic undefined")
    target = float(gt.Xstar[i] @ gt.Ystar[j])
    return (float(est.Md[i, j]) - target) / np.sqrt(v.value)


def factor_row_whitened_residual(est, gt, sigma, p, j):
    """Whitened row residual sqrt(p)/sigma * Sigma*^{1/2} (Xd H - X*)^T e_j.

    H is the orthonormal alignment of the stacked de-shrunken factors to
    the stacked truth factors; under the Gaussian approximation the result
    is close to a standard normal r-vector.
    """
    _check_index(j, est.Xd.shape[0], "row")
    if sigma <= 0:
        raise ValueError("sigma must be positive for whitening")
    H = procrustes_align(np.vstack([est.Xd, est.Yd]), np.vstack([gt.Xstar, gt.Ystar]))
    row = est.Xd[j] @ H - gt.Xstar[j]
    return (np.sqrt(p) / sigma) * (np.sqrt(gt.Sigma) * row)
