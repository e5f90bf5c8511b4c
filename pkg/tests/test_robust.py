import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssvcert.errors import SizeError
from ssvcert.robust import (Truth, check_niceness, covariance_aware_mean, effective_alpha,
                            generate_and_corrupt, n_corrupt, robust_covariance, robust_mean_filter,
                            sandwich, second_moment, sos_full, symmetrize)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(10, 400), eta=st.floats(0.01, 0.45), seed=st.integers(0, 10 ** 6),
       adv=st.sampled_from(["mean_shift", "cov_spike"]))
def test_exactly_ceil_eta_n_corrupted(n, eta, seed, adv):
    ds = generate_and_corrupt(n, 3, eta=eta, adversary=adv, seed=seed)
    assert int((~ds.inlier_mask).sum()) == n_corrupt(eta, n)
    assert ds.points.shape == (n, 3)


def test_generation_is_seeded():
    a = generate_and_corrupt(50, 2, eta=0.1, adversary="cov_spike", seed=7)
    b = generate_and_corrupt(50, 2, eta=0.1, adversary="cov_spike", seed=7)
    assert np.array_equal(a.points, b.points)


def test_bad_arguments():
    with pytest.raises(ValueError):
        generate_and_corrupt(10, 2, eta=0.6)
    with pytest.raises(ValueError):
        generate_and_corrupt(10, 2, eta=0.1, adversary="bogus")


def test_mean_shift_places_points():
    u = np.array([1.0, 0.0])
    ds = generate_and_corrupt(100, 2, eta=0.05, adversary="mean_shift", seed=0, direction=u)
    assert np.allclose(ds.points[~ds.inlier_mask], [10.0, 0.0])


def test_ngca_plant_flags_outlier_components():
    from ssvcert.lowdeg import cov_instance
    inst = cov_instance(0.1, 0.4)
    ds = generate_and_corrupt(4000, 3, adversary="ngca_plant", seed=1, instance=inst)
    assert abs((~ds.inlier_mask).mean() - 0.1) < 0.03
    assert ds.eta == pytest.approx(0.1)


def test_symmetrize_pairs():
    X = np.arange(8.0).reshape(4, 2)
    Y, m = symmetrize(X, mask=np.array([True, False, True, True]))
    assert np.allclose(Y, -np.sqrt(2) * np.ones((2, 2)))
    assert m.tolist() == [False, True]
    with pytest.warns(UserWarning):
        symmetrize(np.zeros((3, 2)))


def test_sandwich_identity():
    assert sandwich(np.eye(3), np.eye(3)) == pytest.approx((1.0, 1.0))
    lo, hi = sandwich(np.diag([2.0, 0.5]), np.eye(2))
    assert (lo, hi) == pytest.approx((0.5, 2.0))


def test_effective_alpha_clamp():
    assert effective_alpha(0.04, 0.1) == pytest.approx(1.6)
    assert effective_alpha(0.0001, 0.5) == 0.5


def test_metrics_recomputable():
    truth = Truth(np.zeros(3), np.diag([1.0, 2.0, 0.5]))
    ds = generate_and_corrupt(2000, 3, truth, 0.05, "cov_spike", seed=3)
    r = robust_covariance(ds.points, 0.05, truth_cov=truth.cov)
    lo, hi = sandwich(r.estimate, truth.cov)
    assert abs(lo - r.metrics["eig_min"]) < 1e-10 and abs(hi - r.metrics["eig_max"]) < 1e-10
    m = covariance_aware_mean(ds.points, 0.05, truth=truth)
    err = m.estimate - truth.mean
    assert abs(np.linalg.norm(err) - m.metrics["euclidean"]) < 1e-10


def test_cert_filter_beats_naive_under_spike():
    ds = generate_and_corrupt(4000, 4, eta=0.05, adversary="cov_spike", seed=0)
    r = robust_covariance(ds.points, 0.05, truth_cov=np.eye(4))
    assert 0.7 <= r.metrics["eig_min"] and r.metrics["eig_max"] <= 1.3
    assert sandwich(second_moment(ds.points), np.eye(4))[1] > 1.3


def test_zero_eta_is_empirical():
    X = np.random.default_rng(0).standard_normal((100, 2))
    r = robust_covariance(X, 0.0)
    assert np.allclose(r.estimate, second_moment(X))
    mu, info = robust_mean_filter(X, 0.0)
    assert np.allclose(mu, X.mean(axis=0)) and info["removed"] == 0


def test_mean_filter_removes_shift():
    ds = generate_and_corrupt(4000, 4, eta=0.05, adversary="mean_shift", seed=2)
    mu, info = robust_mean_filter(ds.points, 0.05)
    assert np.linalg.norm(mu) < 5 * np.sqrt(0.05)
    assert np.linalg.norm(mu) < 0.5 * np.linalg.norm(ds.points.mean(axis=0))


def test_niceness():
    X = np.random.default_rng(4).standard_normal((800, 4))
    rep = check_niceness(X, np.eye(4), 0.02, 0.8, method="m4")
    assert rep["nice"]
    assert not check_niceness(X, np.eye(4), 0.02, 0.3, method="m4")["nice"]
    with pytest.raises(ValueError):
        check_niceness(X, np.zeros((4, 4)), 0.02, 0.8)


def test_sos_full_size_cap():
    with pytest.raises(SizeError):
        sos_full(np.zeros((30, 2)), 0.1)


def test_sos_full_fixture():
    ds = generate_and_corrupt(12, 2, eta=1 / 12, adversary="mean_shift", seed=21, strength=30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = robust_covariance(ds.points, 1 / 12, mode="sos_full", truth_cov=ds.truth.cov)
    assert 0.5 <= r.metrics["eig_min"] and r.metrics["eig_max"] <= 1.5
    # the outlier gets nearly all the removal weight
    w = r.metrics["pE_w"]
    assert int(np.argmax(w)) == int(np.flatnonzero(~ds.inlier_mask)[0])
