"""Oracle-aided ideal estimators and Cramer-Rao lower bounds.

The ideal row estimator sees the true opposite factor and solves a least
squares problem on the observed entries of one row; its covariance equals
the conditional Cramer-Rao bound sigma^2 (sum_k Y*_k^T Y*_k)^{-1}. The
entry-level bound excludes the target indices from each design, matching
an oracle that knows everything except the row and column being estimated.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .linalg import as_matrix

_COND_WARN = 1e10


@dataclass(frozen=True)
class CrlbRow:
    """Covariance lower bound (r x r SPD) for one row of X*."""

    matrix: np.ndarray
    row_index: int


def _row_entries(obs, i):
    lo, hi = np.searchsorted(obs.rows, [i, i + 1])
    return obs.cols[lo:hi], obs.values[lo:hi]


def _col_entries(obs, j):
    sel = obs.cols == j
    return obs.rows[sel], obs.values[sel]


def _design_gram(D, what):
    G = D.T @ D
    w = np.linalg.eigvalsh(G)
    if w[0] <= 0:
        raise ValueError("%s design is rank-deficient" % what)
    if w[-1] / w[0] > _COND_WARN:
        warnings.warn("%s design condition number %.3g exceeds %.0e" % (what, w[-1] / w[0], _COND_WARN))
    return G


def ideal_row_estimator(obs, Ystar, i):
    """Least squares estimate of X*_{i,.} given the true Y* factor.

    Solves min_u sum_{k: (i,k) in Omega} (M_ik - u Y*_{k,.}^T)^2 through
    the normal equations with a symmetric positive-definite solve.
    """
    Ystar = as_matrix(Ystar, name="Ystar")
    ks, vals = _row_entries(obs, int(i))
    D = Ystar[ks]
    G = _design_gram(D, "row")
    return sla.solve(G, D.T @ vals, assume_a="pos")


def crlb_row(obs, Ystar, sigma, i):
    """Cramer-Rao bound sigma^2 (sum_{k: (i,k) in Omega} Y*_k^T Y*_k)^{-1}."""
    Ystar = as_matrix(Ystar, name="Ystar")
    ks, _ = _row_entries(obs, int(i))
    G = _design_gram(Ystar[ks], "row")
    C = sigma**2 * sla.solve(G, np.eye(G.shape[0]), assume_a="pos")
    return CrlbRow(matrix=(C + C.T) / 2.0, row_index=int(i))


def crlb_entry(obs, Xstar, Ystar, sigma, p, i, j):
    """Oracle Cramer-Rao bound for the single entry M*_{ij}.

    Evaluates

        (sigma^2/p) [ Y*_j ((1/p) sum_{k != j, (i,k) in Omega} Y*_k^T Y*_k)^{-1} Y*_j^T
                    + X*_i ((1/p) sum_{k != i, (k,j) in Omega} X*_k^T X*_k)^{-1} X*_i^T ]

    with the target indices excluded from each design.
    """
    Xstar = as_matrix(Xstar, name="Xstar")
    Ystar = as_matrix(Ystar, name="Ystar")
    i, j = int(i), int(j)
    ks, _ = _row_entries(obs, i)
    Dy = Ystar[ks[ks != j]]
    ls, _ = _col_entries(obs, j)
    Dx = Xstar[ls[ls != i]]
    Gy = _design_gram(Dy, "row") / p
    Gx = _design_gram(Dx, "column") / p
    term_y = float(Ystar[j] @ sla.solve(Gy, Ystar[j], assume_a="pos"))
    term_x = float(Xstar[i] @ sla.solve(Gx, Xstar[i], assume_a="pos"))
    return (sigma**2 / p) * (term_y + term_x)


def oracle_l2_lower(n, r, sigma, p):
    """Oracle squared-Frobenius lower bound 2 n r sigma^2 / p."""
    if n <= 0 or r <= 0 or sigma < 0 or not 0 < p <= 1:
        raise ValueError("need n, r > 0, sigma >= 0, 0 < p <= 1")
    return 2.0 * n * r * sigma**2 / p
