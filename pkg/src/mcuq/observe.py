"""Observation model: Bernoulli sampling masks, Gaussian noise, and the
coordinate projection P_Omega, plus the triplet and dense-CSV file formats.

Masks and observations are seeded through decorrelated sub-streams (tag 0
for sampling, tag 1 for noise), so the same seed can be reused across noise
levels without changing the mask, and the noise realization is a fixed
standard-normal draw scaled by sigma.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .linalg import as_matrix

_MASK_STREAM = 0
_NOISE_STREAM = 1


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(stream))))


@dataclass(frozen=True)
class Mask:
    """A sorted set of observed coordinates with its nominal sampling rate."""

    n1: int
    n2: int
    rows: np.ndarray
    cols: np.ndarray
    p_nominal: float


@dataclass(frozen=True)
class ObservationSet:
    """Observed coordinates and noisy values of a partially seen matrix.

    Coordinates are strictly sorted in row-major order with no duplicates.
    ``p_nominal`` is the nominal sampling probability; ``p_hat`` is the
    realized fraction of observed entries.
    """

    n1: int
    n2: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    p_nominal: float

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError("rows, cols, values must have equal length")
        if len(rows) and (
            rows.min() < 0 or rows.max() >= self.n1 or cols.min() < 0 or cols.max() >= self.n2
        ):
            raise ValueError("observed indices out of bounds")
        flat = rows * self.n2 + cols
        if len(flat) > 1 and np.any(np.diff(flat) <= 0):
            raise ValueError("indices must be strictly sorted with no duplicates")
        if not np.all(np.isfinite(values)):
            raise NumericalError("observed values contain non-finite entries")
        if not 0 < self.p_nominal <= 1:
            raise ValueError("p_nominal must be in (0, 1]")

    @property
    def count(self):
        return len(self.values)

    @property
    def p_hat(self):
        return self.count / (self.n1 * self.n2)

    def dense_values(self):
        """Dense matrix carrying the observed values, zero off Omega."""
        M = np.zeros((self.n1, self.n2))
        M[self.rows, self.cols] = self.values
        return M

    def empty_rows(self):
        """Row indices with no observations (invalid-regime diagnostic)."""
        seen = np.zeros(self.n1, dtype=bool)
        seen[self.rows] = True
        return np.flatnonzero(~seen)

    def empty_cols(self):
        """Column indices with no observations (invalid-regime diagnostic)."""
        seen = np.zeros(self.n2, dtype=bool)
        seen[self.cols] = True
        return np.flatnonzero(~seen)


def sample_mask(n1, n2, p, seed=0):
    """Bernoulli(p) coordinate mask, each entry included independently.

    Deterministic per seed; the sampling stream is decorrelated from the
    noise stream used by :func:`observe` for the same seed.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must be in [0, 1]")
    n1, n2 = int(n1), int(n2)
    keep = _rng(seed, _MASK_STREAM).random(n1 * n2) < p
    flat = np.flatnonzero(keep)
    return Mask(n1=n1, n2=n2, rows=flat // n2, cols=flat % n2, p_nominal=float(p))


def observe(gt, mask, sigma, seed=0):
    """Noisy observations of a ground truth on a mask.

    Values are M*_{ij} + E_{ij} with E iid Gaussian(0, sigma^2), drawn from
    a noise stream independent of the mask stream.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    vals = np.einsum("ij,ij->i", gt.Xstar[mask.rows], gt.Ystar[mask.cols])
    if sigma > 0:
        vals = vals + sigma * _rng(seed, _NOISE_STREAM).standard_normal(len(vals))
    return ObservationSet(
        n1=mask.n1,
        n2=mask.n2,
        rows=mask.rows,
        cols=mask.cols,
        values=vals,
        p_nominal=mask.p_nominal,
    )


def p_omega(A, mask):
    """Orthogonal projection onto the observed coordinates: entries on
    Omega copied, everything else zero."""
    A = as_matrix(A)
    if A.shape != (mask.n1, mask.n2):
        raise ValueError("shape mismatch: %s vs (%d, %d)" % (A.shape, mask.n1, mask.n2))
    B = np.zeros_like(A)
    B[mask.rows, mask.cols] = A[mask.rows, mask.cols]
    return B


def _looks_like_header(fields):
    for tok in fields:
        try:
            float(tok)
        except ValueError:
            return True
    return False


def read_triplets(path, n1=None, n2=None, p_nominal=None):
    """Read a triplet text file with lines ``i,j,value`` (0-based).

    A single header line is skipped if present. Dimensions default to
    max index + 1; ``p_nominal`` defaults to the realized density.
    """
    rows, cols, vals = [], [], []
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh)):
            if not fields:
                continue
            if lineno == 0 and _looks_like_header(fields):
                continue
            if len(fields) != 3:
                raise ValueError("line %d: expected i,j,value" % (lineno + 1))
            try:
                rows.append(int(fields[0]))
                cols.append(int(fields[1]))
                vals.append(float(fields[2]))
            except ValueError as exc:
                raise ValueError("line %d: %s" % (lineno + 1, exc)) from exc
    if not rows:
        raise ValueError("no triplets in %s" % path)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    n1 = int(n1) if n1 is not None else int(rows.max()) + 1
    n2 = int(n2) if n2 is not None else int(cols.max()) + 1
    order = np.argsort(rows * n2 + cols, kind="stable")
    rows, cols, vals = rows[order], cols[order], vals[order]
    if p_nominal is None:
        p_nominal = len(rows) / (n1 * n2)
    return ObservationSet(n1=n1, n2=n2, rows=rows, cols=cols, values=vals, p_nominal=p_nominal)


def write_triplets(obs, path, header=True):
    """Write an observation set in the triplet text format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["i", "j", "value"])
        for i, j, v in zip(obs.rows, obs.cols, obs.values):
            writer.writerow([int(i), int(j), repr(float(v))])


def read_dense_csv(path):
    """Read a dense matrix from CSV (one row per line, optional header)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        data = []
        for lineno, fields in enumerate(reader):
            if not fields:
                continue
            if lineno == 0 and _looks_like_header(fields):
                continue
            try:
                data.append([float(tok) for tok in fields])
            except ValueError as exc:
                raise ValueError("line %d: %s" % (lineno + 1, exc)) from exc
    if not data:
        raise ValueError("no rows in %s" % path)
    widths = {len(row) for row in data}
    if len(widths) != 1:
        raise ValueError("ragged rows in %s" % path)
    A = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NumericalError("%s contains non-finite values" % path)
    return A


def write_dense_csv(A, path):
    """Write a dense matrix as CSV without a header."""
    A = as_matrix(A)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in A:
            writer.writerow([repr(float(v)) for v in row])
