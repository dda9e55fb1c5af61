"""Dense linear algebra, polynomial fitting and summary statistics.

Matrices are plain 2-D ``float64`` numpy arrays.  Cholesky factorization and
triangular solves delegate to LAPACK; the contract checks (symmetry,
definiteness, shapes) live here.
"""

from math import comb

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DegenerateDesign,
    DimensionMismatch,
    EmptyInput,
    InsufficientPoints,
    NotPositiveDefinite,
)


def as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def cholesky(a, symmetry_tol=1e-9):
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises NotPositiveDefinite when a pivot is <= 0; callers that can tolerate
    a perturbed matrix should add jitter to the diagonal and retry.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {a.shape}")
    if n == 0:
        return a.copy()
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > symmetry_tol * max(scale, 1e-300):
        raise DimensionMismatch("matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def solve_lower(l, b):
    """Solve ``L y = b`` for lower-triangular ``L``."""
    l = as_matrix(l)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != l.shape[0]:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, factor has {l.shape[0]}")
    return solve_triangular(l, b, lower=True, check_finite=False)


def solve_spd(l, b):
    """Solve ``(L L^T) x = b`` given the Cholesky factor ``L``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    l = as_matrix(l)
    if l.shape[0] != l.shape[1]:
        raise DimensionMismatch("factor must be square")
    y = solve_lower(l, b)
    return solve_triangular(l.T, y, lower=False, check_finite=False)


def _shift_scale_to_monomial(coeffs_t, center, half_width):
    """Re-express sum a_k ((x - c)/h)^k as ascending coefficients in x."""
    degree = len(coeffs_t) - 1
    out = np.zeros(degree + 1)
    for k, a in enumerate(coeffs_t):
        scaled = a / half_width**k
        for j in range(k + 1):
            out[j] += scaled * comb(k, j) * (-center) ** (k - j)
    return out


def polyfit(xs, ys, degree):
    """Least-squares polynomial fit; coefficients in ascending degree.

    xs are mapped onto [-1, 1] and the normal equations are solved there, so
    degree-6 fits on day indices stay well conditioned.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DimensionMismatch("xs and ys must be vectors of equal length")
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if len(xs) < degree + 1:
        raise InsufficientPoints(f"{len(xs)} points cannot determine a degree-{degree} polynomial")
    lo, hi = xs.min(), xs.max()
    if lo == hi and degree > 0:
        raise DegenerateDesign("all xs are equal")
    center = (hi + lo) / 2.0
    half_width = (hi - lo) / 2.0 if hi > lo else 1.0
    t = (xs - center) / half_width
    vander = np.vander(t, degree + 1, increasing=True)
    gram = vander.T @ vander
    try:
        l = cholesky(gram)
    except NotPositiveDefinite:
        raise DegenerateDesign(f"fewer than {degree + 1} distinct xs") from None
    coeffs_t = solve_spd(l, vander.T @ ys)
    return _shift_scale_to_monomial(coeffs_t, center, half_width)


def polyval(coeffs, xs):
    """Evaluate ascending-degree coefficients at xs (Horner)."""
    xs = np.asarray(xs, dtype=np.float64)
    out = np.zeros_like(xs)
    for c in reversed(np.asarray(coeffs, dtype=np.float64)):
        out = out * xs + c
    return out


def percentile(values, q):
    """Linear-interpolated percentile; q in [0, 100]."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise EmptyInput("percentile of an empty sequence")
    if not 0.0 <= q <= 100.0:
        raise ValueError("q must lie in [0, 100]")
    pos = q / 100.0 * (v.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, v.size - 1)
    frac = pos - lo
    return float(v[lo] + (v[hi] - v[lo]) * frac)


def mean(values):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("mean of an empty sequence")
    return float(v.mean())


def variance(values, ddof=0):
    """Variance with divisor ``n - ddof`` (population variance by default)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("variance of an empty sequence")
    if v.size - ddof <= 0:
        raise InsufficientPoints(f"need more than {ddof} values for ddof={ddof}")
    dev = v - v.mean()
    return float(np.dot(dev, dev) / (v.size - ddof))


def summary(values):
    """(mean, std, min, max) with population std."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("summary of an empty sequence")
    return float(v.mean()), float(np.sqrt(variance(v))), float(v.min()), float(v.max())
