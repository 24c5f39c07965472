"""Planted low-rank ground truth with controllable spectrum.

The generator draws two independent Gaussian matrices, orthonormalizes
them, and assembles M* = U* diag(Sigma) V*^T together with the balanced
factors X* = U* Sigma^{1/2} and Y* = V* Sigma^{1/2}. Incoherence and
condition number are reported alongside.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix


def incoherence(U):
    """Smallest incoherence constant of a single orthonormal basis.

    Returns (n/r) * max_i ||U_{i,.}||_2^2, the tightest mu such that every
    row norm of U is at most sqrt(mu r / n). Equals 1 for a perfectly flat
    basis and n/r for a maximally concentrated one.
    """
    U = as_matrix(U, name="U")
    n, r = U.shape
    if np.abs(U.T @ U - np.eye(r)).max() > 1e-8:
        raise ValueError("U is not column-orthonormal to 1e-8")
    return (n / r) * float((U * U).sum(axis=1).max())


@dataclass(frozen=True)
class GroundTruth:
    """Planted rank-r matrix with its factors and conditioning summary.

    Xstar and Ystar are balanced: Xstar.T @ Xstar = Ystar.T @ Ystar =
    diag(Sigma).
    """

    n: int
    r: int
    Ustar: np.ndarray
    Vstar: np.ndarray
    Sigma: np.ndarray
    Xstar: np.ndarray
    Ystar: np.ndarray
    mu: float
    kappa: float

    def matrix(self):
        """Dense M* = Xstar @ Ystar.T."""
        return self.Xstar @ self.Ystar.T


def _orthonormal(G):
    # QR with the sign of diag(R) fixed so the basis is unique per input.
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def generate_ground_truth(n, r, spectrum=None, seed=0):
    """Draw a seeded rank-r ground truth.

    Parameters
    ----------
    n : int
        Dimension (square n x n truth).
    r : int
        Rank, 1 <= r <= n.
    spectrum : sequence of r positive reals, nonincreasing, optional
        Singular values of M*. Defaults to all ones.
    seed : int
        Seed for the Gaussian draws; identical seeds give bitwise-identical
        output.

    Returns
    -------
    GroundTruth
    """
    n = int(n)
    r = int(r)
    if not 1 <= r <= n:
        raise ValueError("rank r=%d out of range for n=%d" % (r, n))
    if spectrum is None:
        spectrum = np.ones(r)
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape != (r,):
        raise ValueError("spectrum must have length r=%d" % r)
    if np.any(spectrum <= 0) or np.any(np.diff(spectrum) > 0):
        raise ValueError("spectrum must be positive and nonincreasing")

    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    Ustar = _orthonormal(rng.standard_normal((n, r)))
    Vstar = _orthonormal(rng.standard_normal((n, r)))
    root = np.sqrt(spectrum)
    return GroundTruth(
        n=n,
        r=r,
        Ustar=Ustar,
        Vstar=Vstar,
        Sigma=spectrum,
        Xstar=Ustar * root,
        Ystar=Vstar * root,
        mu=max(incoherence(Ustar), incoherence(Vstar)),
        kappa=float(spectrum[0] / spectrum[-1]),
    )
