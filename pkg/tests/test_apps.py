from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssvcert.apps import (ResilienceCurve, certify_distortion, certify_two_to_p, sampled_distortion,
                          sampled_two_to_p, sparse_pca_certify)
from ssvcert.certify import brute_force_ssv


def test_curve_is_min_of_methods_and_sound():
    X = np.random.default_rng(0).standard_normal((12, 3))
    curve = ResilienceCurve(X, ("pairwise", "m4"))
    for k in range(1, 7):
        assert curve(k) >= brute_force_ssv(X, k / 12) - 1e-12
    assert curve(0) == 0.0
    assert curve.quartic_bound() is not None


def test_curve_rejects_unknown_method():
    with pytest.raises(ValueError):
        ResilienceCurve(np.zeros((4, 2)), ("bogus",))


def test_distortion_sound_and_below_sqrt_n():
    X = np.random.default_rng(1).standard_normal((1024, 4))
    c = certify_distortion(X, methods=("pairwise", "m4"))
    assert c.stage != "isometry_failed"
    assert sampled_distortion(X, 2000) <= c.tau < np.sqrt(1024)


def test_distortion_gives_up_on_bad_isometry():
    X = np.random.default_rng(2).standard_normal((100, 3))
    X[:, 0] *= 3
    c = certify_distortion(X, methods=("pairwise",))
    assert c.stage == "isometry_failed" and c.tau == pytest.approx(10.0)


def test_distortion_needs_tall_matrix():
    with pytest.raises(ValueError):
        certify_distortion(np.zeros((3, 5)))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 6), p=st.sampled_from([2.0, 2.5, 3.0, 4.0]), d=st.integers(2, 5))
def test_two_to_p_sound(seed, p, d):
    A = np.random.default_rng(seed).standard_normal((20 * d * d, d))
    c = certify_two_to_p(A, p, grid=800)
    assert c.value >= sampled_two_to_p(A, p, trials=300, seed=seed) - 1e-12


def test_two_to_two_is_top_singular_value():
    A = np.random.default_rng(3).standard_normal((200, 3))
    c = certify_two_to_p(A, 2)
    assert c.value == pytest.approx(np.sqrt(np.linalg.eigvalsh(A.T @ A / 200)[-1]))


def test_two_to_p_range():
    with pytest.raises(ValueError):
        certify_two_to_p(np.zeros((5, 2)), 5)


def test_sparse_pca_matches_brute_force_bound():
    rng = np.random.default_rng(4)
    N, dim = 40, 10
    X = rng.standard_normal((N, dim))
    r = sparse_pca_certify(X, 0.3, 10.0)
    k = r["k"]
    exact = max(np.linalg.eigvalsh(X[:, list(S)].T @ X[:, list(S)] / N)[-1]
                for S in combinations(range(dim), k))
    assert r["certificate"] >= exact - 1e-12
    assert r["absent"]


def test_sparse_pca_never_claims_absent_under_spike():
    rng = np.random.default_rng(5)
    N, dim = 200, 20
    v = np.zeros(dim)
    v[:4] = 0.5
    X = rng.standard_normal((N, dim)) + rng.standard_normal((N, 1)) * 3 * v
    r = sparse_pca_certify(X, 0.2, 3.0)
    spike = (X @ v) @ (X @ v) / N
    assert spike >= 3.0 and not r["absent"]
