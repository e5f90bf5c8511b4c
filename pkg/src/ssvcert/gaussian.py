"""Exact Gaussian moment and Hermite routines.

Everything here is closed form. The random-data modules call into this file
whenever an expectation over a standard Gaussian vector is needed, so the
formulas are kept small and checked against quadrature in the tests.
"""
from functools import lru_cache
from math import factorial, lgamma, exp, sqrt

import numpy as np

from .errors import UnsupportedOrderError

MAX_ORDER = 64


def gaussian_norm_moment(d, s):
    """E ||g||^{2s} for g ~ N(0, I_d), as the product d (d+2) ... (d+2s-2)."""
    out = 1
    for i in range(s):
        out *= d + 2 * i
    return out


def wick_ratio(k, norm_power, d):
    """E||g||^{k+norm_power} / E||g||^k for even k and even norm_power."""
    if k % 2 or norm_power % 2:
        raise ValueError("k and norm_power must be even")
    out = 1
    for i in range(k // 2, (k + norm_power) // 2):
        out *= d + 2 * i
    return out


def perfect_matchings(items):
    """All perfect matchings of a list, as lists of index pairs into it."""
    items = list(items)
    if not items:
        yield []
        return
    first = items[0]
    for j in range(1, len(items)):
        rest = items[1:j] + items[j + 1:]
        for m in perfect_matchings(rest):
            yield [(first, items[j])] + m


@lru_cache(maxsize=None)
def matchings_of(k):
    return tuple(tuple(m) for m in perfect_matchings(list(range(k))))


def matching_sum(gram):
    """Sum over perfect matchings of prod gram[i, j] (a hafnian)."""
    k = gram.shape[0]
    if k % 2:
        return 0.0
    total = 0.0
    for m in matchings_of(k):
        t = 1.0
        for i, j in m:
            t *= gram[i, j]
        total += t
    return total


def wick_moment(vectors, norm_power, d=None):
    """E[ ||g||^norm_power prod_i <g, u_i> ] for g ~ N(0, I_d).

    vectors: array (k, d). norm_power must be even. The value is zero for odd
    k; otherwise it is a ratio of norm moments times the hafnian of the Gram
    matrix of the u_i (rotation invariance of g).
    """
    u = np.atleast_2d(np.asarray(vectors, dtype=float))
    k = u.shape[0] if np.asarray(vectors).size else 0
    if d is None:
        d = u.shape[1]
    if norm_power % 2:
        raise ValueError("norm_power must be even")
    if k > 12:
        raise ValueError("at most 12 vectors are supported")
    if k % 2:
        return 0.0
    if k == 0:
        return float(gaussian_norm_moment(d, norm_power // 2))
    return wick_ratio(k, norm_power, d) * matching_sum(u @ u.T)


def wick_diagonal_bound(k, norm_power, d):
    # crude magnitude used in diagnostics: (d + k + norm_power)^{(k + norm_power)/2}
    return float(d + k + norm_power) ** ((k + norm_power) / 2)


def hermite_eval(order, x):
    """Normalized probabilists' Hermite polynomial h_order at x."""
    if order > MAX_ORDER or order < 0:
        raise UnsupportedOrderError(f"Hermite order {order} outside [0, {MAX_ORDER}]")
    x = np.asarray(x, dtype=float)
    h_prev = np.zeros_like(x)
    h = np.ones_like(x)
    for k in range(order):
        h_prev, h = h, (x * h - sqrt(k) * h_prev) / sqrt(k + 1)
    return h if h.ndim else float(h)


def hermite_table(max_order, x):
    """Rows h_0..h_max_order evaluated at x, shape (max_order + 1, len(x))."""
    x = np.asarray(x, dtype=float).ravel()
    out = np.empty((max_order + 1, x.size))
    out[0] = 1.0
    if max_order >= 1:
        out[1] = x
    for k in range(1, max_order):
        out[k + 1] = (x * out[k] - sqrt(k) * out[k - 1]) / sqrt(k + 1)
    return out


def _log_fact(k):
    return lgamma(k + 1)


def hermite_expand_monomial(ell):
    """Coefficients c_j with x^ell = sum_j c_j h_j(x); returned as {j: c_j}.

    c_{ell - 2m} = ell! / (2^m m! sqrt((ell - 2m)!)).
    """
    if ell > MAX_ORDER or ell < 0:
        raise UnsupportedOrderError(f"monomial degree {ell} outside [0, {MAX_ORDER}]")
    out = {}
    for m in range(ell // 2 + 1):
        j = ell - 2 * m
        if ell <= 20:
            c = factorial(ell) / (2 ** m * factorial(m) * sqrt(factorial(j)))
        else:
            c = exp(_log_fact(ell) - m * np.log(2) - _log_fact(m) - 0.5 * _log_fact(j))
        out[j] = c
    return out


def gaussian_hermite_moment(j, mu, var):
    """E_{x ~ N(mu, var)} h_j(x), closed form.

    Writing rho = sqrt(1 - var) (possibly imaginary), the value is
    rho^j h_j(mu / rho). We expand it as a polynomial so var > 1 works too:
    sum_m j!/(m!(j-2m)! 2^m) mu^{j-2m} (var - 1)^m / sqrt(j!).
    """
    total = 0.0
    for m in range(j // 2 + 1):
        if j <= 20:
            c = factorial(j) / (factorial(m) * factorial(j - 2 * m) * 2 ** m)
        else:
            c = exp(_log_fact(j) - _log_fact(m) - _log_fact(j - 2 * m) - m * np.log(2))
        total += c * mu ** (j - 2 * m) * (var - 1.0) ** m
    if j <= 20:
        return total / sqrt(factorial(j))
    return total * exp(-0.5 * _log_fact(j))


def gaussian_moment(k):
    """E G^k for G ~ N(0, 1)."""
    if k % 2:
        return 0.0
    out = 1.0
    for i in range(1, k, 2):
        out *= i
    return out


def shifted_gaussian_moment(k, shift):
    """E (shift + G)^k for G ~ N(0, 1)."""
    total = 0.0
    for i in range(0, k + 1, 2):
        c = factorial(k) // (factorial(i) * factorial(k - i))
        total += c * gaussian_moment(i) * shift ** (k - i)
    return total


# ---------------------------------------------------------------- moment matching

def _moment_matrices(x1, x2, x3, B):
    a, b, c = x1 / B, x2 / B ** 2, x3 / B ** 3
    plus = np.array([[1 + a, a + b], [a + b, b + c]])
    minus = np.array([[1 - a, a - b], [a - b, b - c]])
    return plus, minus


def moment_match(x1, x2, x3, B, tol=1e-10):
    """Is there a law on [-B, B] with first three moments x1, x2, x3?

    Feasible iff both 2x2 matrices in `_moment_matrices` are PSD. A witness is
    the upper principal representation: atoms -B, t, B with
    t = (B^2 x1 - x3) / (B^2 - x2), the root of E[(B^2 - X^2)(X - t)] = 0,
    and weights from the 3x3 Vandermonde system. Returns a dict with
    `feasible`, `min_eig` and, when feasible, `atoms` and `weights`.
    """
    if B <= 0:
        raise ValueError("B must be positive")
    plus, minus = _moment_matrices(x1, x2, x3, B)
    min_eig = float(min(np.linalg.eigvalsh(plus)[0], np.linalg.eigvalsh(minus)[0]))
    out = {"feasible": min_eig >= -tol, "min_eig": min_eig}
    if not out["feasible"]:
        return out
    gap = B * B - x2
    if gap <= 1e-12 * B * B:
        # all mass on the endpoints
        wp = min(max(0.5 * (1 + x1 / B), 0.0), 1.0)
        atoms, weights = np.array([-B, B], dtype=float), np.array([1 - wp, wp])
    else:
        t = min(max((B * B * x1 - x3) / gap, -B), B)
        atoms = np.array([-B, t, B])
        V = np.vander(atoms, 3, increasing=True).T
        weights = np.linalg.lstsq(V, np.array([1.0, x1, x2]), rcond=None)[0]
        weights = np.clip(weights, 0.0, None)
        weights /= weights.sum()
    keep = weights > 1e-15
    atoms, weights = atoms[keep], weights[keep]
    got = [float(weights @ atoms ** k) for k in (1, 2, 3)]
    err = max(abs(g - x) for g, x in zip(got, (x1, x2, x3)))
    if err > 1e-8 * max(1.0, B ** 3):
        raise ArithmeticError(f"moment recovery failed (error {err:.2e})")
    out.update(atoms=atoms, weights=weights, error=err)
    return out
