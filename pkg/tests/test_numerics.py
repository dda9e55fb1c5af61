import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftbench import numerics
from driftbench.errors import (
    DegenerateDesign,
    DimensionMismatch,
    EmptyInput,
    InsufficientPoints,
    NotPositiveDefinite,
)


def gauss_solve(a, b):
    """Gaussian elimination with partial pivoting, kept independent of LAPACK."""
    a = [list(map(float, row)) for row in a]
    b = [float(v) for v in b]
    n = len(a)
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        a[col], a[piv] = a[piv], a[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for c in range(col, n):
                a[r][c] -= f * a[col][c]
            b[r] -= f * b[col]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        x[r] = (b[r] - sum(a[r][c] * x[c] for c in range(r + 1, n))) / a[r][r]
    return np.array(x)


def random_spd(rng, n):
    b = rng.normal(size=(n, n))
    return b.T @ b + n * np.eye(n)


# cholesky

def test_cholesky_identity():
    np.testing.assert_array_equal(numerics.cholesky(np.eye(3)), np.eye(3))


def test_cholesky_hand_expanded_2x2():
    l = numerics.cholesky([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(l, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)


def test_cholesky_indefinite():
    with pytest.raises(NotPositiveDefinite):
        numerics.cholesky([[1.0, 2.0], [2.0, 1.0]])


def test_cholesky_rejects_nonsquare_and_asymmetric():
    with pytest.raises(DimensionMismatch):
        numerics.cholesky(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        numerics.cholesky([[2.0, 1.0], [0.0, 2.0]])


@pytest.mark.parametrize("n", [1, 2, 5, 17, 64])
def test_cholesky_reconstructs(rng, n):
    a = random_spd(rng, n)
    l = numerics.cholesky(a)
    assert np.allclose(l, np.tril(l), atol=0)
    assert np.max(np.abs(l @ l.T - a)) <= 1e-9 * np.max(np.abs(a))


# solves

def test_solve_spd_identity():
    np.testing.assert_array_equal(numerics.solve_spd(np.eye(2), [1.0, 2.0]), [1.0, 2.0])


def test_solve_spd_2x2():
    l = numerics.cholesky([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(numerics.solve_spd(l, [8.0, 7.0]), [1.25, 1.5], atol=1e-14)


def test_solve_spd_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        numerics.solve_spd(np.eye(2), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("n", [1, 3, 8, 32])
def test_solve_spd_matches_elimination_oracle(rng, n):
    a = random_spd(rng, n)
    b = rng.normal(size=n) * 10
    x = numerics.solve_spd(numerics.cholesky(a), b)
    np.testing.assert_allclose(x, gauss_solve(a, b), atol=1e-8 * (1 + np.max(np.abs(b))))
    assert np.max(np.abs(a @ x - b)) <= 1e-8 * (1 + np.max(np.abs(b)))


def test_solve_spd_multiple_rhs(rng):
    a = random_spd(rng, 6)
    b = rng.normal(size=(6, 2))
    x = numerics.solve_spd(numerics.cholesky(a), b)
    np.testing.assert_allclose(a @ x, b, atol=1e-10)


# polyfit

def test_polyfit_exact_line():
    np.testing.assert_allclose(numerics.polyfit([0, 1, 2], [3, 5, 7], 1), [3.0, 2.0], atol=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 3, 6])
def test_polyfit_constant(degree):
    xs = np.arange(1, 21)
    c = numerics.polyfit(xs, np.full(20, 4.0), degree)
    assert len(c) == degree + 1
    np.testing.assert_allclose(c, [4.0] + [0.0] * degree, atol=1e-9)


def test_polyfit_sextic_oracle():
    xs = np.linspace(0, 20, 21)
    ys = xs**6 - xs**3 + 2
    c = numerics.polyfit(xs, ys, 6)
    resid = np.max(np.abs(numerics.polyval(c, xs) - ys))
    assert resid <= 1e-6 * np.max(np.abs(ys))
    np.testing.assert_allclose(c, [2, 0, 0, -1, 0, 0, 1], atol=1e-4)


def test_polyfit_least_squares_matches_lstsq(rng):
    xs = np.arange(25, 45, dtype=float)
    ys = rng.normal(size=20)
    c = numerics.polyfit(xs, ys, 3)
    t = (xs - 34.5) / 9.5
    ref = np.linalg.lstsq(np.vander(t, 4, increasing=True), ys, rcond=None)[0]
    np.testing.assert_allclose(numerics.polyval(c, xs), np.vander(t, 4, increasing=True) @ ref, atol=1e-9)


def test_polyfit_errors():
    with pytest.raises(InsufficientPoints):
        numerics.polyfit([1, 2, 3], [1, 2, 3], 3)
    with pytest.raises(DegenerateDesign):
        numerics.polyfit([2, 2, 2], [1, 2, 3], 1)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 6),
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=7, max_size=7),
    st.floats(-100, 60),
    st.floats(5, 40),
)
def test_polyfit_recovers_exact_polynomials(d, coeffs, start, span):
    xs = np.linspace(start, start + span, 30)
    xs = xs[np.abs(xs) <= 100]
    true = np.array(coeffs[: d + 1])
    ys = numerics.polyval(true, xs)
    for degree in (d, 6):
        fit = numerics.polyfit(xs, ys, degree)
        scale = max(np.max(np.abs(ys)), 1.0)
        assert np.max(np.abs(numerics.polyval(fit, xs) - ys)) <= 1e-6 * scale


# percentile, mean, variance

def test_percentile_examples():
    assert numerics.percentile(range(1, 11), 10) == pytest.approx(1.9, abs=1e-12)
    assert numerics.percentile([5], 37) == 5
    assert numerics.percentile([3, 1, 2], 50) == 2


def test_percentile_matches_numpy_linear(rng):
    v = rng.normal(size=57)
    for q in (0, 3.3, 10, 50, 99.9, 100):
        assert numerics.percentile(v, q) == pytest.approx(np.percentile(v, q), abs=1e-12)


def test_percentile_errors():
    with pytest.raises(EmptyInput):
        numerics.percentile([], 50)
    with pytest.raises(ValueError):
        numerics.percentile([1.0], 101)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=50))
def test_percentile_extremes(values):
    assert numerics.percentile(values, 0) == min(values)
    assert numerics.percentile(values, 100) == max(values)


def test_variance_examples():
    assert numerics.variance([7.0] * 5) == 0
    assert numerics.variance([-110, -25]) == pytest.approx(1806.25, abs=1e-12)
    assert numerics.variance([1, 2, 3, 4]) == pytest.approx(1.25, abs=1e-12)
    assert numerics.variance([1, 2, 3, 4], ddof=1) == pytest.approx(5 / 3, abs=1e-12)


def test_variance_errors():
    with pytest.raises(EmptyInput):
        numerics.variance([])
    with pytest.raises(InsufficientPoints):
        numerics.variance([1.0], ddof=1)


@given(
    st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=40),
    st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3),
    st.floats(-1e3, 1e3),
)
def test_variance_affine(values, a, b):
    base = numerics.variance(values)
    moved = numerics.variance([a * v + b for v in values])
    assert moved == pytest.approx(a * a * base, rel=1e-9, abs=1e-9)


def test_summary_and_mean():
    m, sd, lo, hi = numerics.summary([1.0, 2.0, 6.0])
    assert (m, lo, hi) == (3.0, 1.0, 6.0)
    assert sd == pytest.approx(np.sqrt(14 / 3), abs=1e-12)
    with pytest.raises(EmptyInput):
        numerics.mean([])
