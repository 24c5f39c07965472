"""Base estimators for noisy matrix completion.

Two routes are provided. ``solve_convex`` runs proximal gradient descent on
the nuclear-norm penalized least squares objective

    0.5 * ||P_Omega(Z - M)||_F^2 + lambda * ||Z||_*

with unit step (the smooth part has unit Lipschitz constant because P_Omega
is a coordinate projection). ``solve_nonconvex`` runs gradient descent on
the factored objective

    f(X, Y) = (1/2p) ||P_Omega(X Y^T - M)||_F^2
              + (lambda/2p) (||X||_F^2 + ||Y||_F^2)

from a spectral initialization, with a fixed step sized by the top singular
value of the initialization. Both report convergence diagnostics in an
:class:`EstimatorOutput`.
"""

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import NumericalError
from .linalg import as_matrix, truncated_svd

_STEP_SAFETY = 0.5  # fraction of the inverse local smoothness 1/sigma_1^2
_GROWTH_LIMIT = 20  # consecutive objective increases treated as divergence


@dataclass(frozen=True)
class SolverOptions:
    """Iteration limits and tolerances for the two solvers.

    ``grad_tol`` is a relative gradient norm (factored solver stopping
    rule); ``objective_tol`` is a relative objective-change tolerance
    (convex solver stopping rule). ``step_size`` of None means automatic.
    """

    max_iters: int = 20000
    grad_tol: float = 1e-8
    step_size: float | None = None
    objective_tol: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol <= 0 or self.objective_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")


NONCONVEX_DEFAULTS = SolverOptions(max_iters=20000)
CONVEX_DEFAULTS = SolverOptions(max_iters=5000)


@dataclass(frozen=True)
class EstimatorOutput:
    """A completed matrix plus solver diagnostics.

    ``factors`` is the (X, Y) pair for the factored solver and None for the
    convex solver; when present, ``Z = X @ Y.T``. ``final_grad_norm`` is the
    solver's first-order stationarity measure: the relative gradient norm
    ||grad f||_F / ||(X, Y)||_F for the factored solver, and the
    tangent-space residual ||P_T(P_Omega(Z - M) + lambda U V^T)||_F at the
    final rank estimate for the convex solver.
    """

    Z: np.ndarray
    factors: tuple | None
    lam: float
    iterations: int
    final_grad_norm: float
    objective: float
    converged: bool


def default_lambda(sigma, n, p):
    """Regularization rule lambda = 2.5 * sigma * sqrt(n * p)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if n <= 0 or not 0 < p <= 1:
        raise ValueError("need n > 0 and 0 < p <= 1")
    return 2.5 * sigma * np.sqrt(n * p)


class _OmegaKernel:
    """Products with a sparse residual supported on a fixed index set.

    The sparsity structure is built once; per-iteration work is
    O(|Omega| * r) for the residual and the two products.
    """

    def __init__(self, obs):
        self.rows = obs.rows
        self.cols = obs.cols
        self.values = obs.values
        counts = np.bincount(obs.rows, minlength=obs.n1)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        self._csr = sparse.csr_matrix(
            (np.zeros(obs.count), obs.cols, indptr), shape=(obs.n1, obs.n2)
        )
        self._csrT = self._csr.T  # csc view sharing the data buffer

    def residual(self, X, Y):
        """(X Y^T - M) restricted to Omega, as a flat vector."""
        return np.einsum("ij,ij->i", X[self.rows], Y[self.cols]) - self.values

    def products(self, res, X, Y):
        """R @ Y and R^T @ X where R is `res` scattered onto Omega."""
        self._csr.data[:] = res
        return self._csr @ Y, self._csrT @ X


def _spectral(obs, r):
    if obs.count == 0:
        raise ValueError("observation set is empty")
    A = obs.dense_values() / obs.p_hat
    f = truncated_svd(A, r)
    root = np.sqrt(f.S)
    return f.U * root, f.V * root, f.S


def spectral_init(obs, r):
    """Balanced factors of the rank-r approximation of P_Omega(M) / p_hat.

    Returns (X0, Y0) with X0 = U sqrt(S), Y0 = V sqrt(S), so that
    X0.T @ X0 = Y0.T @ Y0 = diag(S).
    """
    X0, Y0, _ = _spectral(obs, r)
    return X0, Y0


def nonconvex_loss(X, Y, obs, lam):
    """Factored objective value at (X, Y); see the module docstring."""
    p = obs.p_nominal
    kernel = _OmegaKernel(obs)
    res = kernel.residual(X, Y)
    return (0.5 / p) * float(res @ res) + (0.5 * lam / p) * (
        float((X * X).sum()) + float((Y * Y).sum())
    )


def nonconvex_gradient(X, Y, obs, lam):
    """Gradient pair of the factored objective.

    grad_X = (1/p) P_Omega(X Y^T - M) Y + (lambda/p) X and symmetrically
    for Y, with p the nominal sampling rate.
    """
    X = as_matrix(X, name="X")
    Y = as_matrix(Y, name="Y")
    if X.shape[0] != obs.n1 or Y.shape[0] != obs.n2 or X.shape[1] != Y.shape[1]:
        raise ValueError(
            "factor shapes %s, %s do not match observations (%d, %d)"
            % (X.shape, Y.shape, obs.n1, obs.n2)
        )
    p = obs.p_nominal
    kernel = _OmegaKernel(obs)
    res = kernel.residual(X, Y)
    RY, RtX = kernel.products(res, X, Y)
    return RY / p + (lam / p) * X, RtX / p + (lam / p) * Y


def _rebalance(X, Y):
    # Balanced representation of the same product: X' Y'^T = X Y^T with
    # X'^T X' = Y'^T Y'. Among all factorizations of a fixed product the
    # balanced one minimizes ||X||_F^2 + ||Y||_F^2, so this never increases
    # the penalized objective.
    Qx, Rx = np.linalg.qr(X)
    Qy, Ry = np.linalg.qr(Y)
    U, s, Vt = np.linalg.svd(Rx @ Ry.T)
    root = np.sqrt(s)
    return (Qx @ U) * root, (Qy @ Vt.T) * root


def solve_nonconvex(obs, r, lam, opts=None):
    """Factored gradient descent from the spectral initialization.

    Stops when the relative gradient norm ||grad f||_F / ||(X, Y)||_F drops
    below ``opts.grad_tol`` or after ``opts.max_iters`` updates. Each update
    is followed by a rebalancing pass that rewrites (X, Y) as the balanced
    factorization of the same product, so the two Gram matrices stay equal
    throughout; without it the imbalance mode decays only at a rate
    proportional to lambda, which stalls the gradient criterion when the
    noise level is tiny. The objective is monitored every iteration: on the
    first increase the step is halved, on repeated increase a warning is
    emitted, and 20 consecutive increases raise :class:`NumericalError`
    with the recent trace.
    """
    opts = opts or NONCONVEX_DEFAULTS
    if not 1 <= r <= min(obs.n1, obs.n2):
        raise ValueError("rank r=%d out of range" % r)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X, Y, S = _spectral(obs, r)
    kernel = _OmegaKernel(obs)
    p = obs.p_nominal
    step = opts.step_size if opts.step_size is not None else _STEP_SAFETY / S[0] ** 2

    halved = False
    warned = False
    growth = 0
    prev_loss = np.inf
    trace = deque(maxlen=25)
    iterations = 0
    converged = False
    while True:
        with np.errstate(over="ignore", invalid="ignore"):
            res = kernel.residual(X, Y)
            loss = (0.5 / p) * float(res @ res) + (0.5 * lam / p) * (
                float((X * X).sum()) + float((Y * Y).sum())
            )
        trace.append(loss)
        if not np.isfinite(loss):
            raise NumericalError(
                "factored solver diverged: non-finite objective at iteration "
                "%d; recent objective trace: %s" % (iterations, list(trace))
            )
        if loss > prev_loss + 1e-12 * max(1.0, abs(prev_loss)):
            growth += 1
            if not halved:
                step *= 0.5
                halved = True
            elif not warned:
                warnings.warn("factored objective increased after step halving")
                warned = True
            if growth >= _GROWTH_LIMIT:
                raise NumericalError(
                    "factored solver diverged: objective grew for %d consecutive "
                    "iterations; recent objective trace: %s" % (growth, list(trace))
                )
        else:
            growth = 0
        prev_loss = loss

        with np.errstate(over="ignore", invalid="ignore"):
            RY, RtX = kernel.products(res, X, Y)
            GX = RY / p + (lam / p) * X
            GY = RtX / p + (lam / p) * Y
            gnorm = np.sqrt(float((GX * GX).sum()) + float((GY * GY).sum()))
            scale = np.sqrt(float((X * X).sum()) + float((Y * Y).sum()))
            rel = gnorm / max(scale, np.finfo(float).tiny)
            if rel <= opts.grad_tol:
                converged = True
                break
            if iterations >= opts.max_iters:
                break
            X = X - step * GX
            Y = Y - step * GY
            if np.isfinite(X).all() and np.isfinite(Y).all():
                X, Y = _rebalance(X, Y)
        iterations += 1

    return EstimatorOutput(
        Z=X @ Y.T,
        factors=(X, Y),
        lam=float(lam),
        iterations=iterations,
        final_grad_norm=float(rel),
        objective=float(loss),
        converged=converged,
    )


def svt(A, tau):
    """Singular value soft-thresholding, the proximal map of tau * ||.||_*."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    A = as_matrix(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    s2 = np.clip(s - tau, 0.0, None)
    return (U * s2) @ Vt


def _tangent_residual(U, V, A):
    # ||P_T(A)||_F with T the tangent space at U diag(s) V^T.
    AV = A @ V
    UA = U.T @ A
    UAV = U.T @ AV
    # P_T(A) = U UA + AV V^T - U UAV V^T; assemble without the n x n sum.
    part = U @ UA
    part += (AV - U @ UAV) @ V.T
    return float(np.linalg.norm(part))


def solve_convex(obs, lam, opts=None, r_init=None, warm_start=None):
    """Proximal gradient descent on the nuclear-norm penalized objective.

    Iterates Z <- svt(Z - P_Omega(Z - M), lambda) from a spectral warm
    start (rank ``r_init`` when given, otherwise one thresholding pass over
    P_Omega(M) / p_hat), stopping when the relative objective change drops
    below ``opts.objective_tol``. The returned ``final_grad_norm`` is the
    first-order residual ||P_T(P_Omega(Z - M) + lambda U V^T)||_F at the
    final rank estimate.
    """
    opts = opts or CONVEX_DEFAULTS
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rows, cols, vals = obs.rows, obs.cols, obs.values

    if warm_start is not None:
        Z = as_matrix(warm_start).copy()
        if Z.shape != (obs.n1, obs.n2):
            raise ValueError("warm start has shape %s" % (Z.shape,))
        nuc = float(np.linalg.svd(Z, compute_uv=False).sum())
    else:
        if r_init is not None:
            X0, Y0, S0 = _spectral(obs, r_init)
            Z = X0 @ Y0.T
            nuc = float(S0.sum())
        else:
            Z = svt(obs.dense_values() / obs.p_hat, lam)
            nuc = float(np.linalg.svd(Z, compute_uv=False).sum())

    prev_obj = np.inf
    iterations = 0
    converged = False
    U = s2 = Vt = None
    while True:
        res = Z[rows, cols] - vals
        obj = 0.5 * float(res @ res) + lam * nuc
        if obj > prev_obj + 1e-12 * max(1.0, abs(prev_obj)):
            raise NumericalError(
                "convex objective increased from %.17g to %.17g at iteration %d"
                % (prev_obj, obj, iterations)
            )
        if abs(prev_obj - obj) <= opts.objective_tol * max(1.0, abs(obj)):
            converged = True
            break
        if iterations >= opts.max_iters:
            break
        prev_obj = obj
        W = Z.copy()
        W[rows, cols] -= res
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
        s2 = np.clip(s - lam, 0.0, None)
        Z = (U * s2) @ Vt
        nuc = float(s2.sum())
        iterations += 1

    if U is None:
        # No update was performed; factor the warm start itself.
        U, s2, Vt = np.linalg.svd(Z, full_matrices=False)
    rhat = int(np.count_nonzero(s2 > 0))
    if rhat == 0:
        residual = 0.0
    else:
        G = np.zeros_like(Z)
        G[rows, cols] = Z[rows, cols] - vals
        A = G + lam * (U[:, :rhat] @ Vt[:rhat])
        residual = _tangent_residual(U[:, :rhat], Vt[:rhat].T, A)

    return EstimatorOutput(
        Z=Z,
        factors=None,
        lam=float(lam),
        iterations=iterations,
        final_grad_norm=residual,
        objective=float(obj),
        converged=converged,
    )


def balanced_factors(Z, r):
    """Balanced factorization (U sqrt(S), V sqrt(S)) of the rank-r
    truncation of ``Z``."""
    f = truncated_svd(Z, r)
    root = np.sqrt(f.S)
    return f.U * root, f.V * root
