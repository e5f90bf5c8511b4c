import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssvcert.certify import (SchattenCertifier, brute_force_ssv, budget, certify, certify_best,
                             certify_fourth_moment, certify_pairwise, certify_schatten_p,
                             certify_trivial, fourth_moment_fluctuation, recombine, theoretical_rate)
from ssvcert.errors import SizeError

METHODS = [("trivial", 4), ("pairwise", 4), ("m4", 4), ("schatten", 2), ("schatten", 4)]


def test_budget_is_floor():
    assert budget(0.25, 10) == 2
    assert budget(0.3, 10) == 3        # float noise in 0.3 * 10
    assert budget(0.0, 10) == 0


def test_brute_force_single_point():
    X = np.array([[3.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    assert brute_force_ssv(X, 0.25) == pytest.approx(9 / 4)


def test_brute_force_cap():
    with pytest.raises(SizeError):
        brute_force_ssv(np.zeros((200, 2)), 0.2)


def test_trivial_is_full_top_eigenvalue():
    X = np.random.default_rng(0).standard_normal((30, 3))
    c = certify_trivial(X, 0.1)
    assert c.value == pytest.approx(np.linalg.eigvalsh(X.T @ X / 30)[-1])


def test_pairwise_audit_recomputes():
    X = np.random.default_rng(1).standard_normal((12, 3))
    c = certify_pairwise(X, 0.25)
    a = c.audit
    assert c.value == pytest.approx((a["max_sq_norm"] + 2 * a["max_cross"]) / 12)


def test_fourth_moment_gaussian_fluctuation_small():
    X = np.random.default_rng(2).standard_normal((20000, 3))
    lam, V = fourth_moment_fluctuation(X)
    assert abs(lam) < 0.5 and np.allclose(V, V.T)
    c = certify_fourth_moment(X, 0.1)
    assert c.value == pytest.approx(np.sqrt(0.1) * np.sqrt(3 + lam))


def test_schatten_recombine_matches_value():
    X = np.random.default_rng(3).standard_normal((40, 3))
    c = certify_schatten_p(X, 0.2, p=4)
    assert recombine(c.audit) == pytest.approx(c.value, rel=1e-12)


def test_schatten_budget_scan_monotone():
    X = np.random.default_rng(4).standard_normal((30, 2))
    sc = SchattenCertifier(X, 4)
    vals = [sc.certificate(e).value for e in (0.1, 0.2, 0.4)]
    assert vals == sorted(vals)


def test_schatten_rejects_odd_p():
    with pytest.raises(ValueError):
        SchattenCertifier(np.zeros((5, 2)), 3)


def test_certificate_json():
    X = np.random.default_rng(5).standard_normal((10, 2))
    c = certify(X, 0.2, "m4")
    obj = json.loads(c.to_json())
    assert obj["method"] == "m4" and obj["ssv"] == pytest.approx(np.sqrt(c.value))


def test_best_is_minimum():
    X = np.random.default_rng(6).standard_normal((14, 3))
    best, certs = certify_best(X, 0.2)
    assert best.value == min(c.value for c in certs)


def test_zero_budget():
    X = np.ones((5, 2))
    for m, p in METHODS:
        assert certify(X, 0.1, m, p=p).value == 0.0


def test_theoretical_rate_decreases_in_n():
    assert theoretical_rate(1000, 8, 0.1, 4) < theoretical_rate(100, 8, 0.1, 4)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(6, 11), d=st.integers(1, 4), j=st.integers(1, 5), seed=st.integers(0, 2 ** 31),
       heavy=st.booleans())
def test_every_certificate_is_sound(n, d, j, seed, heavy):
    j = min(j, n // 2)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    if heavy:
        X[:j] *= 4
    eta = j / n
    truth = brute_force_ssv(X, eta)
    for m, p in METHODS:
        assert certify(X, eta, m, p=p).value >= truth - 1e-9 * max(1.0, truth)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), scale=st.floats(0.1, 10))
def test_scale_covariance(seed, scale):
    # resilience is quadratic in the data scale; so are the simple certificates
    X = np.random.default_rng(seed).standard_normal((12, 3))
    for m in ("trivial", "pairwise"):
        a = certify(X, 0.25, m).value
        b = certify(scale * X, 0.25, m).value
        assert b == pytest.approx(scale ** 2 * a, rel=1e-9)
    assert brute_force_ssv(scale * X, 0.25) == pytest.approx(scale ** 2 * brute_force_ssv(X, 0.25), rel=1e-9)
