"""Dense real-matrix primitives: truncated SVD, rank-r projection, SPD
principal square root, and orthogonal Procrustes alignment.

All routines operate on plain 2-D float64 numpy arrays and are pure
functions of their inputs. The truncated SVD applies a deterministic sign
convention (the largest-magnitude entry of each left singular vector is
made nonnegative, right vectors follow) so that repeated calls on the same
input are bitwise identical and every downstream computation is
reproducible.
"""

from dataclasses import dataclass

import numpy as np


def as_matrix(A, name="matrix"):
    """Validate and return ``A`` as a 2-D float64 array with finite entries."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("%s must be 2-D, got ndim=%d" % (name, A.ndim))
    if not np.all(np.isfinite(A)):
        raise ValueError("%s contains non-finite entries" % name)
    return A


@dataclass(frozen=True)
class TruncatedSVD:
    """Rank-r factorization A ~= U @ diag(S) @ V.T.

    Attributes
    ----------
    U : (m, r) ndarray
        Column-orthonormal left singular vectors.
    S : (r,) ndarray
        Singular values, nonincreasing and nonnegative.
    V : (n, r) ndarray
        Column-orthonormal right singular vectors.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def compose(self):
        """Return U @ diag(S) @ V.T as a dense matrix."""
        return (self.U * self.S) @ self.V.T


def _fix_signs(U, V):
    # Largest-magnitude entry of each column of U made nonnegative; V follows
    # so the composed product is unchanged.
    lead = np.argmax(np.abs(U), axis=0)
    flip = np.sign(U[lead, np.arange(U.shape[1])])
    flip[flip == 0] = 1.0
    return U * flip, V * flip


def truncated_svd(A, r):
    """Best rank-``r`` factorization of ``A`` in Frobenius norm.

    Computes the full dense SVD and keeps the ``r`` leading triplets. The
    sign convention makes the output deterministic: two calls on the same
    input return bitwise-identical factors.

    Parameters
    ----------
    A : (m, n) array_like
    r : int
        Target rank, 1 <= r <= min(m, n).

    Returns
    -------
    TruncatedSVD
    """
    A = as_matrix(A)
    r = int(r)
    if not 1 <= r <= min(A.shape):
        raise ValueError("rank r=%d out of range for shape %s" % (r, A.shape))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    U, V = _fix_signs(np.ascontiguousarray(U[:, :r]), np.ascontiguousarray(Vt[:r].T))
    return TruncatedSVD(U, s[:r].copy(), V)


def rank_r_project(A, r):
    """Project ``A`` onto the set of matrices of rank at most ``r``.

    Returns the best rank-r approximation in Frobenius norm; the residual
    is orthogonal (in the trace inner product) to the kept triplets.
    """
    return truncated_svd(A, r).compose()


def spd_principal_sqrt(S):
    """Principal square root of a symmetric positive-definite matrix.

    Parameters
    ----------
    S : (r, r) array_like
        Symmetric to 1e-10 relative, smallest eigenvalue strictly positive.

    Returns
    -------
    (r, r) ndarray
        Symmetric R with R @ R = S to 1e-10 relative Frobenius error.
    """
    S = as_matrix(S, name="S")
    if S.shape[0] != S.shape[1]:
        raise ValueError("S must be square, got shape %s" % (S.shape,))
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise ValueError("S is not symmetric to tolerance 1e-10")
    w, Q = np.linalg.eigh(S)
    if w[0] <= 0:
        raise ValueError("S is not positive definite: smallest eigenvalue %g" % w[0])
    R = (Q * np.sqrt(w)) @ Q.T
    return (R + R.T) / 2.0


def procrustes_align(F, Ftarget):
    """Orthonormal R minimizing ||F @ R - Ftarget||_F.

    Closed form from the SVD of F.T @ Ftarget: with F.T @ Ftarget =
    W diag(s) Q.T, the minimizer is R = W @ Q.T.

    Parameters
    ----------
    F, Ftarget : (m, r) array_like
        The cross-Gram F.T @ Ftarget must have full rank r.

    Returns
    -------
    (r, r) ndarray
        Orthonormal to 1e-10.
    """
    F = as_matrix(F, name="F")
    Ftarget = as_matrix(Ftarget, name="Ftarget")
    if F.shape != Ftarget.shape:
        raise ValueError("shape mismatch: %s vs %s" % (F.shape, Ftarget.shape))
    G = F.T @ Ftarget
    W, s, Qt = np.linalg.svd(G)
    if s[0] == 0 or s[-1] <= 1e-12 * s[0]:
        raise ValueError("cross-Gram is rank-deficient; alignment is not unique")
    return W @ Qt
