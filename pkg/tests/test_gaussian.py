from math import sqrt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssvcert.gaussian import (gaussian_hermite_moment, gaussian_norm_moment,
                              hermite_eval, hermite_expand_monomial, hermite_table,
                              shifted_gaussian_moment, wick_moment)


def test_hermite_values():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(1, 0.5) == 0.5
    assert hermite_eval(3, 2.0) == pytest.approx(2 / sqrt(6), abs=1e-14)


def test_hermite_orthonormal_by_quadrature():
    nodes, weights = np.polynomial.hermite_e.hermegauss(60)
    weights = weights / weights.sum()
    H = hermite_table(20, nodes)
    gram = (H * weights) @ H.T
    assert np.max(np.abs(gram - np.eye(21))) < 1e-8


@pytest.mark.parametrize("ell", range(13))
def test_monomial_round_trip(ell):
    xs = np.linspace(-3, 3, 41)
    coefs = hermite_expand_monomial(ell)
    recon = sum(c * hermite_eval(j, xs) for j, c in coefs.items())
    assert np.max(np.abs(recon - xs ** ell)) <= 1e-9 * max(1.0, np.max(np.abs(xs ** ell)))


def test_monomial_square_coefficients():
    # x^2 = sqrt(2) h_2 + h_0: the coefficient carries sqrt((l - 2m)!)
    c = hermite_expand_monomial(2)
    assert c[2] == pytest.approx(sqrt(2))
    assert c[0] == pytest.approx(1.0)


@pytest.mark.parametrize("k", range(7))
@pytest.mark.parametrize("d", range(1, 11))
def test_norm_moment_rising_product(k, d):
    expected = 1
    for i in range(k):
        expected *= d + 2 * i
    assert gaussian_norm_moment(d, k) == expected


def test_norm_moment_chi_square():
    # E||g||^4 = d(d+2), E||g||^6 = d(d+2)(d+4) from chi-square moments
    for d in range(1, 9):
        assert gaussian_norm_moment(d, 2) == d * (d + 2)
        assert gaussian_norm_moment(d, 3) == d * (d + 2) * (d + 4)


def test_wick_examples():
    e1 = np.array([1.0, 0, 0])
    assert wick_moment(np.array([e1]), 0) == 0.0
    assert wick_moment(np.array([e1, e1]), 0) == 1.0
    assert wick_moment(np.zeros((0, 3)), 2, d=3) == 3.0
    # E <g,u>^2 ||g||^2 = (d + 2) |u|^2
    u = np.array([0.3, -1.2, 0.5])
    assert wick_moment(np.array([u, u]), 2) == pytest.approx((3 + 2) * u @ u)


def test_wick_matches_monte_carlo():
    rng = np.random.default_rng(11)
    for q in range(20):
        d = int(rng.integers(1, 6))
        k = int(rng.choice([2, 4]))
        s = int(rng.integers(0, 2))
        u = rng.standard_normal((k, d))
        g = rng.standard_normal((1_000_000, d))
        samples = np.prod(g @ u.T, axis=1) * np.sum(g * g, axis=1) ** s
        mean, se = samples.mean(), samples.std() / np.sqrt(samples.size)
        exact = wick_moment(u, 2 * s)
        assert abs(mean - exact) <= 3 * se + 1e-12, (q, mean, exact, se)


def test_hermite_decay_envelope():
    # h_i(x)^2 sqrt(i) stays under one constant on [-1, 1] for 4 <= i <= 40.
    # Calibrated constant 1.5 (observed max 1.31); the envelope must not drift up.
    xs = np.linspace(-1, 1, 2001)
    H = hermite_table(40, xs)
    env = np.array([np.max(H[i] ** 2) * sqrt(i) for i in range(4, 41)])
    assert env.max() <= 1.5
    assert env[-10:].max() <= 1.1 * env[:10].max()


def test_gaussian_hermite_moment_quadrature():
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    weights = weights / weights.sum()
    for mu, var in [(0.0, 0.3), (0.7, 1.0), (-1.2, 2.5)]:
        xs = mu + np.sqrt(var) * nodes
        for j in range(12):
            quad = float(weights @ hermite_eval(j, xs))
            assert gaussian_hermite_moment(j, mu, var) == pytest.approx(quad, abs=1e-9)


def test_shifted_moment():
    assert shifted_gaussian_moment(4, 2.0) == pytest.approx(16 + 6 * 4 + 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 12), st.floats(-2, 2))
def test_expansion_reproduces_monomial(ell, x):
    coefs = hermite_expand_monomial(ell)
    recon = sum(c * hermite_eval(j, x) for j, c in coefs.items())
    assert recon == pytest.approx(x ** ell, rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_wick_rotation_invariant(d, half, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((2 * half, d))
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    a = wick_moment(u, 2, d=d)
    b = wick_moment(u @ Q.T, 2, d=d)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)
