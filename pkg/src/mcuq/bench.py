"""Monte Carlo experiment harness.

Coverage studies, estimation-error sweeps, equivalence studies, Q-Q
exports, and real-data runs. Trials are independent tasks seeded from the
master seed and the trial index, dispatched to a bounded thread pool and
aggregated in trial order, so report contents are a pure function of the
configuration and input files regardless of thread count.
"""

import csv
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import infer
from .debias import debias_estimate, deshrink_factors, equivalence_report
from .errors import NumericalError
from .linalg import procrustes_align
from .model import generate_ground_truth
from .observe import ObservationSet, observe, read_dense_csv, read_triplets, sample_mask
from .oracle import oracle_l2_lower
from .solvers import SolverOptions, default_lambda, solve_convex, solve_nonconvex

GRID_LIMIT = 10_000
THREADS_ENV = "MCUQ_THREADS"

# Seed stream tags: 0 ground truth, 1 per-trial observations, 2 index grid,
# 3 real-data subsampling.
_GT_STREAM, _TRIAL_STREAM, _GRID_STREAM, _REAL_STREAM = 0, 1, 2, 3


def _seed_int(*parts):
    seq = np.random.SeedSequence(tuple(int(x) for x in parts))
    return int(seq.generate_state(1, np.uint64)[0])


def default_threads():
    """Thread count from the MCUQ_THREADS variable, else the CPU count."""
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ValueError("%s must be an integer, got %r" % (THREADS_ENV, env))
        if value < 1:
            raise ValueError("%s must be positive" % THREADS_ENV)
        return value
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of one experiment run.

    ``sigma`` is a single noise level or a tuple for sweep commands.
    ``lambda_rule`` of None selects the default 2.5 sigma sqrt(np) rule;
    a float fixes lambda explicitly. ``threads`` of None defers to
    :func:`default_threads`. ``solver_opts`` of None uses each solver's
    default iteration limits and tolerances.
    """

    n: int
    r: int
    p: float
    sigma: object
    trials: int = 200
    alpha: float = 0.05
    lambda_rule: float | None = None
    seed: int = 0
    estimator: str = "convex"
    threads: int | None = None
    solver_opts: SolverOptions | None = None

    def __post_init__(self):
        if self.n < 1 or not 1 <= self.r <= self.n:
            raise ValueError("need n >= 1 and 1 <= r <= n")
        if not 0 < self.p <= 1:
            raise ValueError("p must be in (0, 1]")
        for s in self.sigmas:
            if s < 0:
                raise ValueError("sigma must be nonnegative")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.lambda_rule is not None and self.lambda_rule <= 0:
            raise ValueError("explicit lambda must be positive")
        if self.estimator not in ("convex", "nonconvex"):
            raise ValueError("estimator must be 'convex' or 'nonconvex'")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be positive")
        if self.solver_opts is not None and not isinstance(self.solver_opts, SolverOptions):
            raise ValueError("solver_opts must be a SolverOptions instance or None")

    @property
    def sigmas(self):
        if np.iterable(self.sigma):
            return tuple(float(s) for s in self.sigma)
        return (float(self.sigma),)

    @property
    def sigma_scalar(self):
        values = self.sigmas
        if len(values) != 1:
            raise ValueError("this command needs a single sigma, got %d" % len(values))
        return values[0]

    def lam(self, sigma):
        if self.lambda_rule is not None:
            return float(self.lambda_rule)
        return default_lambda(sigma, self.n, self.p)

    def resolve_threads(self):
        return self.threads if self.threads is not None else default_threads()


@dataclass(frozen=True)
class CoverageReport:
    """Aggregated coverage of one configuration.

    Coverage is the per-trial fraction of evaluation indices whose CI
    contains the true target; mean and std are taken across trials.
    ``failures`` counts non-converged trials, which are excluded from the
    aggregates and reported, never dropped silently.
    """

    config: ExperimentConfig
    target: str
    mean_coverage: float
    std_coverage: float
    mean_ci_length: float
    per_trial_coverage: tuple
    per_trial_error: tuple
    failures: int
    wall_time: float


@dataclass(frozen=True)
class EstimationRow:
    """Average errors at one noise level of a sweep."""

    sigma: float
    err_fro_estimate: float
    err_fro_debiased: float
    err_inf_estimate: float
    err_inf_debiased: float
    oracle_fro: float
    per_trial_fro_estimate: tuple
    per_trial_fro_debiased: tuple


@dataclass(frozen=True)
class EquivalenceRow:
    """Mean equivalence gaps at one noise level, raw and normalized.

    Matrix and linearized gaps are normalized by the matrix estimation
    error ||Md - M*||_F; the factor gap by the aligned factor estimation
    error. ``max_norm_gap`` is the largest normalized gap over trials and
    gap kinds.
    """

    sigma: float
    gap_matrix_cvx_rel: float
    gap_matrix_ncvx_rel: float
    gap_factor_rel: float
    gap_linearized_rel: float
    ref_error_matrix: float
    ref_error_factor: float
    max_norm_gap: float


@dataclass(frozen=True)
class RealDataRow:
    """Held-out evaluation at one sampling rate.

    Coverage counts held-out observed values inside prediction intervals
    (variance v_ij + sigma^2, since held-out values carry their own
    noise); relative errors are Frobenius, against the available entries.
    """

    p: float
    coverage: float
    mean_ci_length: float
    rel_err_estimate: float
    rel_err_debiased: float


def _map_trials(worker, trials, threads):
    if threads <= 1:
        return [worker(k) for k in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(worker, range(trials)))


def _ensure_finite(values, context):
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise NumericalError("non-finite value in %s" % context)


def _solve_and_debias(gt, config, sigma, trial):
    trial_seed = _seed_int(config.seed, _TRIAL_STREAM, trial)
    mask = sample_mask(gt.n, gt.n, config.p, seed=trial_seed)
    obs = observe(gt, mask, sigma, seed=trial_seed)
    lam = config.lam(sigma)
    if sigma == 0 and config.lambda_rule is None:
        # Noiseless regime: the penalty vanishes, which the convex solver
        # rejects; the factored solver handles lambda = 0 directly.
        est = solve_nonconvex(obs, gt.r, 0.0, opts=config.solver_opts)
    elif config.estimator == "nonconvex":
        est = solve_nonconvex(obs, gt.r, lam, opts=config.solver_opts)
    else:
        est = solve_convex(obs, lam, opts=config.solver_opts, r_init=gt.r)
    return est, debias_estimate(est, obs, gt.r, config.p), obs


def _ground_truth(config):
    return generate_ground_truth(config.n, config.r, seed=_seed_int(config.seed, _GT_STREAM))


def _entry_grid(n1, n2, master):
    total = n1 * n2
    if total <= GRID_LIMIT:
        ii, jj = np.divmod(np.arange(total), n2)
        return ii, jj
    rng = np.random.default_rng(np.random.SeedSequence((int(master), _GRID_STREAM)))
    flat = np.sort(rng.choice(total, size=GRID_LIMIT, replace=False))
    return flat // n2, flat % n2


def _factor_grid(n, master):
    iu, ju = np.triu_indices(n, k=1)
    if len(iu) <= GRID_LIMIT:
        return iu, ju
    rng = np.random.default_rng(np.random.SeedSequence((int(master), _GRID_STREAM)))
    pos = np.sort(rng.choice(len(iu), size=GRID_LIMIT, replace=False))
    return iu[pos], ju[pos]


def run_coverage(config, target="entry"):
    """Empirical CI coverage over a seeded evaluation index grid.

    ``target`` selects the estimand: "entry" covers matrix entries M*_{ij}
    with the empirical variance v_{ij}; "factor" covers inner products
    e_i^T X* X*^T e_j over pairs i < j with the variance rho_{ij}. The
    grid is subsampled to at most 10^4 pairs, seeded by the master seed.
    """
    if target not in ("entry", "factor"):
        raise ValueError("target must be 'entry' or 'factor'")
    sigma = config.sigma_scalar
    t0 = time.perf_counter()
    gt = _ground_truth(config)
    if target == "entry":
        ii, jj = _entry_grid(gt.n, gt.n, config.seed)
        truth = np.einsum("ij,ij->i", gt.Xstar[ii], gt.Ystar[jj])
    else:
        ii, jj = _factor_grid(gt.n, config.seed)
        truth = np.einsum("ij,ij->i", gt.Xstar[ii], gt.Xstar[jj])
    z = infer.normal_quantile(1 - config.alpha / 2)

    def worker(k):
        est, de, _ = _solve_and_debias(gt, config, sigma, k)
        if target == "entry":
            v = infer.entry_variances(de, sigma, config.p, ii, jj)
            center = de.Md[ii, jj]
        else:
            v = infer.factor_variances(de, sigma, config.p, ii, jj)
            center = np.einsum("ij,ij->i", de.Xd[ii], de.Xd[jj])
        half = z * np.sqrt(v)
        cov = float(np.mean(np.abs(center - truth) <= half))
        err = float(np.linalg.norm(de.Md - gt.matrix()))
        return cov, float(np.mean(2 * half)), err, est.converged

    results = _map_trials(worker, config.trials, config.resolve_threads())
    kept = [(c, l, e) for c, l, e, ok in results if ok]
    failures = config.trials - len(kept)
    if failures:
        warnings.warn("%d of %d trials did not converge and were excluded" % (failures, config.trials))
    if not kept:
        raise NumericalError("all trials failed to converge")
    covs = np.array([c for c, _, _ in kept])
    lens = np.array([l for _, l, _ in kept])
    errs = np.array([e for _, _, e in kept])
    report = CoverageReport(
        config=config,
        target=target,
        mean_coverage=float(covs.mean()),
        std_coverage=float(covs.std(ddof=1)) if len(covs) > 1 else 0.0,
        mean_ci_length=float(lens.mean()),
        per_trial_coverage=tuple(covs),
        per_trial_error=tuple(errs),
        failures=failures,
        wall_time=time.perf_counter() - t0,
    )
    _ensure_finite(
        [report.mean_coverage, report.std_coverage, report.mean_ci_length], "coverage report"
    )
    return report


def run_estimation(config):
    """Average estimation errors across a sigma sweep.

    For each sigma: mean Frobenius and entrywise-max errors of the base
    estimate and the de-biased estimate, plus the oracle Frobenius floor
    sqrt(2 n r sigma^2 / p).
    """
    gt = _ground_truth(config)
    Mstar = gt.matrix()
    rows = []
    for sigma in config.sigmas:
        def worker(k, sigma=sigma):
            est, de, _ = _solve_and_debias(gt, config, sigma, k)
            if not est.converged:
                return None
            dz = est.Z - Mstar
            dm = de.Md - Mstar
            return (
                float(np.linalg.norm(dz)),
                float(np.linalg.norm(dm)),
                float(np.abs(dz).max()),
                float(np.abs(dm).max()),
            )

        results = _map_trials(worker, config.trials, config.resolve_threads())
        kept = [r for r in results if r is not None]
        if len(kept) < len(results):
            warnings.warn(
                "%d of %d trials did not converge and were excluded"
                % (len(results) - len(kept), len(results))
            )
        if not kept:
            raise NumericalError("all trials failed to converge at sigma=%g" % sigma)
        arr = np.array(kept)
        row = EstimationRow(
            sigma=float(sigma),
            err_fro_estimate=float(arr[:, 0].mean()),
            err_fro_debiased=float(arr[:, 1].mean()),
            err_inf_estimate=float(arr[:, 2].mean()),
            err_inf_debiased=float(arr[:, 3].mean()),
            oracle_fro=float(np.sqrt(oracle_l2_lower(config.n, config.r, sigma, config.p))),
            per_trial_fro_estimate=tuple(arr[:, 0]),
            per_trial_fro_debiased=tuple(arr[:, 1]),
        )
        _ensure_finite(
            [row.err_fro_estimate, row.err_fro_debiased, row.err_inf_estimate,
             row.err_inf_debiased, row.oracle_fro],
            "estimation row",
        )
        rows.append(row)
    return rows


def run_equivalence(config):
    """Gaps between the de-biased estimator variants across a sigma sweep.

    Each trial solves both programs at tight tolerances and normalizes the
    matrix/linearized gaps by ||Md - M*||_F and the factor gap by the
    aligned factor estimation error.
    """
    gt = _ground_truth(config)
    Mstar = gt.matrix()
    Ftruth = np.vstack([gt.Xstar, gt.Ystar])
    rows = []
    for sigma in config.sigmas:
        lam = config.lam(sigma)

        def worker(k, sigma=sigma, lam=lam):
            trial_seed = _seed_int(config.seed, _TRIAL_STREAM, k)
            mask = sample_mask(gt.n, gt.n, config.p, seed=trial_seed)
            obs = observe(gt, mask, sigma, seed=trial_seed)
            cvx = solve_convex(obs, lam, opts=config.solver_opts, r_init=gt.r)
            ncvx = solve_nonconvex(obs, gt.r, lam, opts=config.solver_opts)
            rep = equivalence_report(cvx, ncvx, obs, gt.r, lam, gt=gt)
            Xnd, Ynd = deshrink_factors(*ncvx.factors, lam, config.p)
            F = np.vstack([Xnd, Ynd])
            R = procrustes_align(F, Ftruth)
            ref_factor = float(np.linalg.norm(F @ R - Ftruth))
            return rep, ref_factor, cvx.converged and ncvx.converged

        results = _map_trials(worker, config.trials, config.resolve_threads())
        kept = [(rep, rf) for rep, rf, ok in results if ok]
        if len(kept) < len(results):
            warnings.warn(
                "%d of %d trials did not converge and were excluded"
                % (len(results) - len(kept), len(results))
            )
        if not kept:
            raise NumericalError("all trials failed to converge at sigma=%g" % sigma)
        norm_rows = []
        for rep, ref_factor in kept:
            ref = rep.reference_error
            norm_rows.append(
                (
                    rep.matrix_gap_cvx_vs_factored / ref,
                    rep.matrix_gap_ncvx_vs_factored / ref,
                    rep.factor_procrustes_gap / ref_factor,
                    rep.linearized_gap / ref,
                    ref,
                    ref_factor,
                )
            )
        arr = np.array(norm_rows)
        row = EquivalenceRow(
            sigma=float(sigma),
            gap_matrix_cvx_rel=float(arr[:, 0].mean()),
            gap_matrix_ncvx_rel=float(arr[:, 1].mean()),
            gap_factor_rel=float(arr[:, 2].mean()),
            gap_linearized_rel=float(arr[:, 3].mean()),
            ref_error_matrix=float(arr[:, 4].mean()),
            ref_error_factor=float(arr[:, 5].mean()),
            max_norm_gap=float(arr[:, :4].max()),
        )
        _ensure_finite(
            [row.gap_matrix_cvx_rel, row.gap_matrix_ncvx_rel, row.gap_factor_rel,
             row.gap_linearized_rel, row.max_norm_gap],
            "equivalence row",
        )
        rows.append(row)
    return rows


def run_statistic_samples(config, kind, i, j):
    """Per-trial studentized statistics for Q-Q inspection.

    ``kind`` "entry" collects S_{ij}; "factor" collects T_{ij} (i != j).
    Returns the sample array; non-converged trials are excluded with a
    warning.
    """
    if kind not in ("entry", "factor"):
        raise ValueError("kind must be 'entry' or 'factor'")
    sigma = config.sigma_scalar
    gt = _ground_truth(config)
    if kind == "factor" and i == j:
        raise ValueError("factor statistic requires i != j")

    def worker(k):
        est, de, _ = _solve_and_debias(gt, config, sigma, k)
        if not est.converged:
            return None
        if kind == "entry":
            return infer.entry_stat(de, gt, sigma, config.p, i, j)
        return infer.factor_inner_stat(de, gt, sigma, config.p, i, j)[0]

    results = _map_trials(worker, config.trials, config.resolve_threads())
    kept = [r for r in results if r is not None]
    if len(kept) < len(results):
        warnings.warn(
            "%d of %d trials did not converge and were excluded"
            % (len(results) - len(kept), len(results))
        )
    if not kept:
        raise NumericalError("all trials failed to converge")
    samples = np.array(kept)
    _ensure_finite(samples, "statistic samples")
    return samples


def export_qq(samples, path):
    """Write sorted samples against normal quantiles, with a trailing KS
    comment row. Returns the KS statistic against the standard normal."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no samples to export")
    _ensure_finite(samples, "qq samples")
    ordered = np.sort(samples)
    n = len(ordered)
    quantiles = np.array([infer.normal_quantile((k - 0.5) / n) for k in range(1, n + 1)])
    ks = float(stats.kstest(ordered, "norm").statistic)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "normal_quantile"])
        for s, q in zip(ordered, quantiles):
            writer.writerow([repr(float(s)), repr(float(q))])
        fh.write("# ks=%r\n" % ks)
    return ks


def _load_matrix(path, fmt):
    if fmt == "dense":
        M = read_dense_csv(path)
        return M, np.ones(M.shape, dtype=bool)
    if fmt == "triplets":
        obs = read_triplets(path)
        M = np.zeros((obs.n1, obs.n2))
        avail = np.zeros((obs.n1, obs.n2), dtype=bool)
        M[obs.rows, obs.cols] = obs.values
        avail[obs.rows, obs.cols] = True
        return M, avail
    raise ValueError("format must be 'dense' or 'triplets'")


def run_real_data(path, p_grid, sigma, config, fmt="dense"):
    """Held-out coverage and errors of the pipeline on a matrix file.

    For each p: each available entry is kept for training with probability
    p / density (error if p exceeds the available density), the pipeline
    runs at rank ``config.r`` with the realized sampling rate, and the
    held-out available entries are scored. Coverage uses prediction
    intervals (variance v_ij + sigma^2) because held-out values carry
    their own observation noise. Relative errors are against the available
    entries. Rows are averaged over ``config.trials`` subsampling seeds.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive for real-data intervals")
    M, avail = _load_matrix(path, fmt)
    n1, n2 = M.shape
    if not 1 <= config.r <= min(n1, n2):
        raise ValueError("rank r=%d out of range for shape %s" % (config.r, (n1, n2)))
    density = float(avail.mean())
    avail_flat = np.flatnonzero(avail.ravel())
    norm_avail = float(np.linalg.norm(M[avail]))
    z = infer.normal_quantile(1 - config.alpha / 2)
    p_grid = [float(p) for p in p_grid]
    for p in p_grid:
        if not 0 < p <= density + 1e-12:
            raise ValueError("p=%g exceeds the available data density %g" % (p, density))

    rows = []
    for pi, p in enumerate(p_grid):
        q = min(p / density, 1.0)

        def worker(t, pi=pi, q=q):
            rng = np.random.default_rng(
                np.random.SeedSequence((int(config.seed), _REAL_STREAM, pi, t))
            )
            keep = rng.random(len(avail_flat)) < q
            train = avail_flat[keep]
            held = avail_flat[~keep]
            if len(train) == 0 or len(held) == 0:
                raise NumericalError("degenerate train/held-out split at p=%g" % q)
            p_hat = len(train) / (n1 * n2)
            obs = ObservationSet(
                n1=n1,
                n2=n2,
                rows=train // n2,
                cols=train % n2,
                values=M.ravel()[train],
                p_nominal=p_hat,
            )
            lam = config.lambda_rule or default_lambda(sigma, max(n1, n2), p_hat)
            if config.estimator == "nonconvex":
                est = solve_nonconvex(obs, config.r, lam, opts=config.solver_opts)
            else:
                est = solve_convex(obs, lam, opts=config.solver_opts, r_init=config.r)
            de = debias_estimate(est, obs, config.r, p_hat)
            hii, hjj = held // n2, held % n2
            v = infer.entry_variances(de, sigma, p_hat, hii, hjj)
            half = z * np.sqrt(v + sigma**2)
            y = M.ravel()[held]
            covered = np.abs(y - de.Md[hii, hjj]) <= half
            rel_est = float(np.linalg.norm((est.Z - M)[avail])) / norm_avail
            rel_deb = float(np.linalg.norm((de.Md - M)[avail])) / norm_avail
            return (
                float(covered.mean()),
                float((2 * half).mean()),
                rel_est,
                rel_deb,
                est.converged,
            )

        results = _map_trials(worker, config.trials, config.resolve_threads())
        kept = [r[:4] for r in results if r[4]]
        if len(kept) < len(results):
            warnings.warn(
                "%d of %d trials did not converge and were excluded"
                % (len(results) - len(kept), len(results))
            )
        if not kept:
            raise NumericalError("all trials failed to converge at p=%g" % p)
        arr = np.array(kept)
        row = RealDataRow(
            p=p,
            coverage=float(arr[:, 0].mean()),
            mean_ci_length=float(arr[:, 1].mean()),
            rel_err_estimate=float(arr[:, 2].mean()),
            rel_err_debiased=float(arr[:, 3].mean()),
        )
        _ensure_finite(
            [row.coverage, row.mean_ci_length, row.rel_err_estimate, row.rel_err_debiased],
            "real-data row",
        )
        rows.append(row)
    return rows


def write_coverage_csv(report, path):
    """Per-trial rows: trial, coverage, error_fro."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "coverage", "error_fro"])
        for k, (cov, err) in enumerate(zip(report.per_trial_coverage, report.per_trial_error)):
            writer.writerow([k, repr(float(cov)), repr(float(err))])


def write_estimation_csv(rows, path):
    header = [
        "sigma",
        "err_fro_estimate",
        "err_fro_debiased",
        "err_inf_estimate",
        "err_inf_debiased",
        "oracle_fro",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    repr(row.sigma),
                    repr(row.err_fro_estimate),
                    repr(row.err_fro_debiased),
                    repr(row.err_inf_estimate),
                    repr(row.err_inf_debiased),
                    repr(row.oracle_fro),
                ]
            )


def write_equivalence_csv(rows, path):
    header = [
        "sigma",
        "gap_matrix_cvx_rel",
        "gap_matrix_ncvx_rel",
        "gap_factor_rel",
        "gap_linearized_rel",
        "ref_error_matrix",
        "ref_error_factor",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    repr(row.sigma),
                    repr(row.gap_matrix_cvx_rel),
                    repr(row.gap_matrix_ncvx_rel),
                    repr(row.gap_factor_rel),
                    repr(row.gap_linearized_rel),
                    repr(row.ref_error_matrix),
                    repr(row.ref_error_factor),
                ]
            )


def write_realdata_csv(rows, path):
    header = ["p", "coverage", "ci_length", "rel_err_estimate", "rel_err_debiased"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    repr(row.p),
                    repr(row.coverage),
                    repr(row.mean_ci_length),
                    repr(row.rel_err_estimate),
                    repr(row.rel_err_debiased),
                ]
            )
