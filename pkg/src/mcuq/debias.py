"""De-biased matrix estimates and de-shrunken factors.

The base estimators shrink toward zero because of the nuclear-norm
penalty. ``debias_matrix`` removes the bias with one projected correction
step, ``deshrink_factors`` inflates the factor spectra so the Gram
matrices shift by (lambda/p) I, and ``debias_linearized`` applies the
tangent-space form of the same correction. ``equivalence_report``
quantifies how close the convex and factored routes end up.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, procrustes_align, rank_r_project, spd_principal_sqrt, truncated_svd
from .observe import p_omega
from .solvers import balanced_factors


@dataclass(frozen=True)
class DebiasedEstimate:
    """De-biased matrix Md (rank <= r) with de-shrunken factors Xd, Yd.

    ``source`` records which base estimator produced it ("convex" or
    "nonconvex"). The factors satisfy Xd.T @ Xd = X.T @ X + (lambda/p) I
    relative to the source factors.
    """

    Md: np.ndarray
    Xd: np.ndarray
    Yd: np.ndarray
    source: str
    r: int


@dataclass(frozen=True)
class EquivalenceReport:
    """Frobenius gaps between the de-biased estimator variants.

    ``reference_error`` is ||Md - M*||_F for the convex route when the
    truth is known, else None.
    """

    matrix_gap_cvx_vs_factored: float
    matrix_gap_ncvx_vs_factored: float
    factor_procrustes_gap: float
    linearized_gap: float
    reference_error: float | None


def debias_matrix(Z, obs, r, p):
    """One-step de-biased estimate P_rank-r[Z - (1/p) P_Omega(Z - M)]."""
    Z = as_matrix(Z, name="Z")
    if Z.shape != (obs.n1, obs.n2):
        raise ValueError("Z has shape %s, expected (%d, %d)" % (Z.shape, obs.n1, obs.n2))
    if not p > 0:
        raise ValueError("p must be positive")
    corrected = Z - (p_omega(Z, obs) - obs.dense_values()) / p
    return rank_r_project(corrected, r)


def deshrink_factors(X, Y, lam, p):
    """De-shrunken factors X (I + (lambda/p)(X^T X)^{-1})^{1/2}, same for Y.

    Shifts each Gram matrix by exactly (lambda/p) I.
    """
    X = as_matrix(X, name="X")
    Y = as_matrix(Y, name="Y")
    if not p > 0:
        raise ValueError("p must be positive")
    out = []
    for F in (X, Y):
        G = F.T @ F
        r = G.shape[0]
        cond = np.linalg.cond(G)
        if not np.isfinite(cond) or cond > 1e14:
            raise ValueError("factor Gram matrix is numerically singular")
        shift = np.eye(r) + (lam / p) * np.linalg.solve(G, np.eye(r))
        out.append(F @ spd_principal_sqrt((shift + shift.T) / 2.0))
    return out[0], out[1]


def tangent_project(U, V, A):
    """Projection of A onto the tangent space at U diag(s) V^T:
    U U^T A + A V V^T - U U^T A V V^T."""
    U = as_matrix(U, name="U")
    V = as_matrix(V, name="V")
    A = as_matrix(A, name="A")
    if U.shape[0] != A.shape[0] or V.shape[0] != A.shape[1]:
        raise ValueError("basis shapes %s, %s do not match A %s" % (U.shape, V.shape, A.shape))
    AV = A @ V
    UA = U.T @ A
    UAV = U.T @ AV
    return U @ UA + (AV - U @ UAV) @ V.T


def debias_linearized(Z, obs, r, p):
    """Tangent-space variant Z - (1/p) P_T(P_Omega(Z - M)) with T taken at
    the rank-r truncation of Z."""
    Z = as_matrix(Z, name="Z")
    if Z.shape != (obs.n1, obs.n2):
        raise ValueError("Z has shape %s, expected (%d, %d)" % (Z.shape, obs.n1, obs.n2))
    if not p > 0:
        raise ValueError("p must be positive")
    f = truncated_svd(Z, r)
    resid = p_omega(Z, obs) - obs.dense_values()
    return Z - tangent_project(f.U, f.V, resid) / p


def debias_estimate(est, obs, r, p):
    """Build a :class:`DebiasedEstimate` from a solver output.

    Factored outputs de-shrink their own factors; convex outputs take the
    balanced factorization of the rank-r truncation first.
    """
    if est.factors is not None:
        X, Y = est.factors
        source = "nonconvex"
    else:
        X, Y = balanced_factors(est.Z, r)
        source = "convex"
    Xd, Yd = deshrink_factors(X, Y, est.lam, p)
    Md = debias_matrix(est.Z, obs, r, p)
    return DebiasedEstimate(Md=Md, Xd=Xd, Yd=Yd, source=source, r=int(r))


def equivalence_report(cvx, ncvx, obs, r, lam, gt=None):
    """Frobenius gaps between the convex and factored de-biased variants.

    Computes the matrix gaps ||Md_cvx - Xd Yd^T||_F and
    ||Md_ncvx - Xd Yd^T||_F (factored route de-shrunken), the aligned
    factor distance min_R ||[Xd_cvx; Yd_cvx] R - [Xd; Yd]||_F, and the gap
    between the full and linearized corrections of the convex estimate.
    """
    if not (cvx.converged and ncvx.converged):
        warnings.warn("equivalence report computed from unconverged solver output")
    if ncvx.factors is None:
        raise ValueError("ncvx must carry factors")
    p = obs.p_nominal
    Xn, Yn = ncvx.factors
    Xnd, Ynd = deshrink_factors(Xn, Yn, lam, p)
    factored = Xnd @ Ynd.T

    Md_cvx = debias_matrix(cvx.Z, obs, r, p)
    Md_ncvx = debias_matrix(Xn @ Yn.T, obs, r, p)

    Xc, Yc = balanced_factors(cvx.Z, r)
    Xcd, Ycd = deshrink_factors(Xc, Yc, lam, p)
    F = np.vstack([Xcd, Ycd])
    Ft = np.vstack([Xnd, Ynd])
    R = procrustes_align(F, Ft)

    reference = float(np.linalg.norm(Md_cvx - gt.matrix())) if gt is not None else None
    return EquivalenceReport(
        matrix_gap_cvx_vs_factored=float(np.linalg.norm(Md_cvx - factored)),
        matrix_gap_ncvx_vs_factored=float(np.linalg.norm(Md_ncvx - factored)),
        factor_procrustes_gap=float(np.linalg.norm(F @ R - Ft)),
        linearized_gap=float(np.linalg.norm(debias_linearized(cvx.Z, obs, r, p) - Md_cvx)),
        reference_error=reference,
    )
