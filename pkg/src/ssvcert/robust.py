"""Contaminated data and robust covariance / covariance-aware mean pipelines."""
import logging
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from math import ceil, log, sqrt

import numpy as np

from .certify import budget, certify_fourth_moment, certify_schatten_p, fourth_moment_fluctuation

log_ = logging.getLogger(__name__)

ADVERSARIES = ("none", "mean_shift", "cov_spike", "ngca_plant")


def n_corrupt(eta, n):
    """ceil(eta n), robust to float noise in eta n."""
    return int(ceil(eta * n - 1e-9))


@dataclass
class Truth:
    mean: np.ndarray
    cov: np.ndarray
    s: float = 1.0          # sub-Gaussian parameter of the inlier law


@dataclass
class ContaminatedDataset:
    points: np.ndarray
    inlier_mask: np.ndarray
    truth: Truth
    eta: float
    adversary: str = "none"
    meta: dict = field(default_factory=dict)


def _sqrtm(S, inverse=False):
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    if np.min(vals) <= 0:
        raise ValueError("matrix must be positive definite")
    return (vecs * (vals ** (-0.5 if inverse else 0.5))) @ vecs.T


def random_unit(d, rng):
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def generate_and_corrupt(n, d, truth=None, eta=0.0, adversary="none", seed=0,
                         strength=None, direction=None, instance=None):
    """i.i.d. inliers from N(mean, cov), then ceil(eta n) of them replaced.

    mean_shift: replaced points sit at mean + c u (c = strength, default 10).
    cov_spike: replaced points are mean + cov^{1/2} (g + (+-delta - <g,v>) v) with
        delta = sqrt(a (1 - eta) / eta), a = strength (default 3); these are the
        outlier components of the hard covariance-testing mixture.
    ngca_plant: the whole sample is drawn from P_{A,v} for a univariate
        instance A (lowdeg.NGCAInstance, default N(0,1)); points drawn from the
        outlier components of A are flagged.
    """
    if not 0 <= eta < 0.5:
        raise ValueError("eta must lie in [0, 1/2)")
    if adversary not in ADVERSARIES:
        raise ValueError(f"unknown adversary {adversary!r}")
    rng = np.random.default_rng(seed)
    if truth is None:
        truth = Truth(np.zeros(d), np.eye(d))
    mean, cov = np.asarray(truth.mean, float), np.asarray(truth.cov, float)
    root = _sqrtm(cov)
    u = random_unit(d, rng) if direction is None else np.asarray(direction, float) / np.linalg.norm(direction)
    meta = {"direction": u.tolist()}
    if adversary == "ngca_plant":
        from .lowdeg import null_instance
        inst = instance if instance is not None else null_instance()
        vals, is_out = inst.sample(n, rng)
        G = rng.standard_normal((n, d))
        G = G - np.outer(G @ u, u) + np.outer(vals, u)
        pts = mean + G @ root.T
        meta["instance_eta"] = inst.eta
        return ContaminatedDataset(pts, ~is_out, truth, inst.eta, adversary, meta)
    X = mean + rng.standard_normal((n, d)) @ root.T
    k = n_corrupt(eta, n) if adversary != "none" else 0
    mask = np.ones(n, dtype=bool)
    if k:
        # the adversary sees the inliers; it replaces the k points farthest along u
        idx = np.argsort(-(X - mean) @ u, kind="stable")[:k]
        mask[idx] = False
        if adversary == "mean_shift":
            c = 10.0 if strength is None else float(strength)
            X[idx] = mean + c * u
            meta["c"] = c
        else:
            a = 3.0 if strength is None else float(strength)
            delta = sqrt(a * (1 - eta) / eta)
            G = rng.standard_normal((k, d))
            signs = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
            G = G - np.outer(G @ u, u) + np.outer(signs * delta + rng.standard_normal(k), u)
            X[idx] = mean + G @ root.T
            meta.update(strength=a, delta=delta)
    return ContaminatedDataset(X, mask, truth, eta, adversary, meta)


def symmetrize(data, mask=None, shuffle_seed=None):
    """(x_1 - x_2)/sqrt2, (x_3 - x_4)/sqrt2, ...; a pair is corrupted if either point is."""
    X = np.asarray(data, dtype=float)
    n = X.shape[0]
    order = np.arange(n)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    if n % 2:
        warnings.warn("odd number of points; dropping the last one")
        order = order[:-1]
    a, b = order[0::2], order[1::2]
    Y = (X[a] - X[b]) / sqrt(2)
    if mask is None:
        return Y
    mask = np.asarray(mask, dtype=bool)
    return Y, mask[a] & mask[b]


def second_moment(X):
    X = np.asarray(X, dtype=float)
    return X.T @ X / X.shape[0]


def sandwich(est, cov):
    """Extreme eigenvalues of cov^{-1/2} est cov^{-1/2}."""
    W = _sqrtm(cov, inverse=True)
    vals = np.linalg.eigvalsh(W @ est @ W)
    return float(vals[0]), float(vals[-1])


# ---------------------------------------------------------------- niceness

def check_niceness(x, Sigma, eta, alpha, p=4, method="schatten"):
    """The two niceness conditions of a sample with respect to Sigma.

    (1) the whitened resilience certificate at budget 2 eta n is <= alpha/2;
    (2) (1 - alpha) Sigma~ <= Sigma <= (1 + alpha) Sigma~ for the sample
        second moment Sigma~, i.e. every eigenvalue of
        Sigma^{-1/2} Sigma~ Sigma^{-1/2} lies in [1/(1+alpha), 1/(1-alpha)].
    """
    Sigma = np.asarray(Sigma, dtype=float)
    if np.linalg.matrix_rank(Sigma) < Sigma.shape[0]:
        raise ValueError("Sigma must be invertible")
    W = _sqrtm(Sigma, inverse=True)
    Y = np.asarray(x, dtype=float) @ W
    n = Y.shape[0]
    eff = min(budget(2 * eta, n) / n, 1.0) if n else 0.0
    if method == "schatten":
        cert = certify_schatten_p(Y, eff, p=p)
    else:
        cert = certify_fourth_moment(Y, eff)
    lo, hi = sandwich(second_moment(x), Sigma)
    cond2 = (lo >= 1 / (1 + alpha) - 1e-12) and (hi <= (1 / (1 - alpha) if alpha < 1 else np.inf) + 1e-12)
    return {"certificate": cert.value, "cond1": bool(cert.value <= alpha / 2),
            "eig_min": lo, "eig_max": hi, "cond2": bool(cond2),
            "nice": bool(cert.value <= alpha / 2 and cond2), "method": cert.method}


# ---------------------------------------------------------------- covariance

@dataclass
class EstimationReport:
    estimate: np.ndarray
    metrics: dict
    mode: str
    params: dict

    def to_dict(self):
        return {"estimate": np.asarray(self.estimate).tolist(), "metrics": self.metrics,
                "mode": self.mode, "params": self.params}


def effective_alpha(eta, alpha):
    a = max(8 * sqrt(eta), alpha)
    if a != alpha:
        log_.info("alpha clamped from %g to %g", alpha, a)
    return a


def cert_filter(X, eta, alpha, max_rounds=None):
    """Remove ceil(eta n) top-scoring points per round until the certificate passes.

    Each round whitens the survivors by their own second moment and computes
    the fourth-moment resilience certificate at budget 2 eta n. While it
    exceeds alpha/2, the points with the largest scores (y^T V y)^2 are removed,
    V being the top eigenvector of the empirical-minus-Gaussian fourth-moment
    operator. Returns (survivor mask, certificate trace).
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    k = n_corrupt(eta, n)
    kk = budget(2 * eta, n)
    alive = np.ones(n, dtype=bool)
    trace = []
    max_rounds = max_rounds if max_rounds is not None else 8
    for _ in range(max_rounds + 1):
        idx = np.flatnonzero(alive)
        Y = X[idx] @ _sqrtm(second_moment(X[idx]), inverse=True)
        cert = certify_fourth_moment(Y, kk / len(idx)).value
        trace.append(cert)
        if cert <= alpha / 2 or k == 0:
            return alive, trace
        if len(trace) > max_rounds or len(idx) - k < max(d + 1, n // 2):
            break
        _, V = fourth_moment_fluctuation(Y)
        # each point's share of <V, Mhat V>; sign-free in V
        score = np.einsum("ni,ij,nj->n", Y, V, Y) ** 2
        # ties broken by index so the result is deterministic
        drop = idx[np.argsort(-score, kind="stable")[:k]]
        alive[drop] = False
    warnings.warn("certificate filter stopped before the certificate dropped below alpha/2")
    return alive, trace


def robust_covariance(data, eta, alpha=0.0, p=2, mode="cert_filter", truth_cov=None, **kw):
    X = np.asarray(data, dtype=float)
    n, d = X.shape
    params = {"eta": eta, "alpha": alpha, "p": p, "n": n, "d": d}
    if eta == 0:
        est, extra = second_moment(X), {}
    elif mode == "cert_filter":
        a = effective_alpha(eta, alpha)
        params["alpha_eff"] = a
        alive, trace = cert_filter(X, eta, a)
        est, extra = second_moment(X[alive]), {"removed": int((~alive).sum()), "certificate_trace": trace}
    elif mode == "sos_full":
        try:
            est, extra = sos_full(X, eta, alpha, **kw)
        except Exception as exc:   # engine failure: log and fall back
            log_.warning("sos_full failed (%s); falling back to cert_filter", exc)
            return robust_covariance(X, eta, alpha, p, "cert_filter", truth_cov)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    metrics = dict(extra)
    if truth_cov is not None:
        lo, hi = sandwich(est, truth_cov)
        metrics.update(eig_min=lo, eig_max=hi, sandwich=max(1 - lo, hi - 1))
    return EstimationReport(est, metrics, mode, params)


def sos_full(X, eta, alpha=None, degree=2):
    """Moment relaxation (default degree 2) of the robust-covariance constraint system.

    Removed points are repaired to zero, x'_i = (1 - w_i) x_i, which satisfies
    (1 - w_i) x'_i = (1 - w_i) x_i and leaves only the selector w. Constraints:
    w_i^2 = w_i, sum w_i <= eta n, and for every S of size ceil(2 eta n) the
    matrix alpha Sigma' - (1/n) sum_{i in S} x'_i x'_i^T is PSD, localized at
    the relaxation degree. Unless given, alpha is 1.25 times the smallest
    feasible value found by bisection; at the exact threshold the solution
    is pinned to the boundary and outlier weight leaks. Among feasible
    pseudo-expectations we take the one with the smallest pE tr Sigma', and
    output pE Sigma' rescaled by n / (n - pE sum w).
    """
    from .errors import InfeasibleError, SizeError
    from .sos import Poly, PolynomialSystem, PseudoExpectation, solve_pseudo_expectation
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n > 20 or d > 3:
        raise SizeError("sos_full is limited to n <= 20, d <= 3")
    W = [Poly.var(n, i) for i in range(n)]
    zero = Poly.const(n, 0.0)
    eqs = [w * w - w for w in W]
    total = sum(W, zero)
    ges = [eta * n - total]
    k = n_corrupt(2 * eta, n)
    keep = [(1 - W[i]) / n for i in range(n)]
    sigma = [[sum((keep[i] * float(X[i, a] * X[i, b]) for i in range(n)), zero)
              for b in range(d)] for a in range(d)]
    subsets = list(combinations(range(n), k))
    objective = sum((sigma[a][a] for a in range(d)), zero)

    def build(al):
        psd = [[[al * sigma[a][b] - sum((keep[i] * float(X[i, a] * X[i, b]) for i in S), zero)
                 for b in range(d)] for a in range(d)] for S in subsets]
        return PolynomialSystem([f"w{i}" for i in range(n)], eqs, ges, degree, objective, "min", psd)

    def feasible(al):
        return isinstance(solve_pseudo_expectation(build(al)), PseudoExpectation)

    if alpha is None or alpha <= 0:
        lo, hi = 0.0, 1.0
        while not feasible(hi):
            lo, hi = hi, 2 * hi
        for _ in range(7):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if feasible(mid) else (mid, hi)
        alpha = 1.25 * hi
    pe = solve_pseudo_expectation(build(alpha))
    if not isinstance(pe, PseudoExpectation):
        raise InfeasibleError(f"relaxation infeasible at alpha={alpha}")
    removed = pe(total)
    est = np.array([[pe(sigma[a][b]) for b in range(d)] for a in range(d)]) * n / (n - removed)
    weights = [pe(w) for w in W]
    return est, {"alpha_used": alpha, "pE_w": weights, "residuals": pe.residuals}


# ---------------------------------------------------------------- means

def robust_mean_filter(data, eta, seed=0, C=9.0):
    """Spectral filter assuming roughly identity covariance.

    While the top eigenvalue of the weighted covariance exceeds
    1 + C delta^2/eta, with delta = eta sqrt(log 1/eta) + sqrt(d/n), each
    surviving point is removed with probability tau_i / max tau, tau_i its
    squared projection on the top eigenvector.
    """
    X = np.asarray(data, dtype=float)
    n, d = X.shape
    if eta == 0:
        return X.mean(axis=0), {"rounds": 0, "removed": 0}
    if eta >= 0.25:
        raise ValueError("eta must be below 1/4")
    delta = eta * sqrt(log(1 / eta)) + sqrt(d / n)
    thresh = 1 + C * delta ** 2 / eta
    rng = np.random.default_rng(seed)
    alive = np.ones(n, dtype=bool)
    best = None
    for r in range(int(ceil(10 / eta))):
        Y = X[alive]
        mu = Y.mean(axis=0)
        S = np.cov(Y, rowvar=False, bias=True).reshape(d, d)
        vals, vecs = np.linalg.eigh(S)
        if best is None or vals[-1] < best[0]:
            best = (vals[-1], mu)
        if vals[-1] <= thresh:
            return mu, {"rounds": r, "removed": int((~alive).sum()), "threshold": thresh}
        tau = ((Y - mu) @ vecs[:, -1]) ** 2
        kill = rng.random(len(Y)) < tau / tau.max()
        idx = np.flatnonzero(alive)
        alive[idx[kill]] = False
    warnings.warn("mean filter did not converge; returning the best iterate")
    return best[1], {"rounds": r + 1, "removed": int((~alive).sum()), "threshold": thresh}


def covariance_aware_mean(data, eta, alpha=0.0, p=2, truth=None, cov_mode="cert_filter", seed=0):
    """symmetrize -> robust covariance -> whiten -> mean filter -> unwhiten."""
    X = np.asarray(data, dtype=float)
    n, d = X.shape
    Y = symmetrize(X)
    cov = robust_covariance(Y, min(2 * eta, 0.49), alpha, p, cov_mode).estimate
    Wi = _sqrtm(cov, inverse=True)
    mu_w, info = robust_mean_filter(X @ Wi, eta, seed=seed)
    mu = _sqrtm(cov) @ mu_w
    metrics = {"filter": info}
    if truth is not None:
        err = mu - np.asarray(truth.mean, float)
        metrics["euclidean"] = float(np.linalg.norm(err))
        metrics["mahalanobis"] = float(np.linalg.norm(_sqrtm(np.asarray(truth.cov, float), inverse=True) @ err))
    return EstimationReport(mu, metrics, "covariance_aware_mean",
                            {"eta": eta, "alpha": alpha, "p": p, "n": n, "d": d, "cov": cov.tolist()})
