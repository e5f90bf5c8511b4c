"""Low-degree advantage bounds for hidden-direction (NGCA) testing problems.

A univariate law A is a finite Gaussian mixture, optionally with a polynomial
bump p(x) 1[-1,1] attached to one component. Its Hermite profile
a_j = E_A h_j feeds the advantage bound

    sum_{even i <= D} (i/d)^{i/2} T_i,   T_i = [z^i] (1 + sum_{j>=1} a_j^2 z^j)^n.

The bound is an upper bound on the degree-D advantage, not the advantage.
"""
import json
from dataclasses import dataclass, field
from itertools import product
from math import log, sqrt

import numpy as np
from scipy.stats import ortho_group

from .errors import UnsupportedOrderError
from .gaussian import (gaussian_hermite_moment, gaussian_moment, hermite_table,
                       moment_match, shifted_gaussian_moment)

MAX_D = 40
_LEG_X, _LEG_W = np.polynomial.legendre.leggauss(64)   # exact for degree <= 127 on [-1, 1]


class InstanceError(ValueError):
    pass


@dataclass
class NGCAInstance:
    """components: (weight, mean, variance, is_outlier). The bump p (monomial
    coefficients, lowest first) is added to the density of component `bump_on`
    with that component's weight: w (phi_{m,v} + p 1[-1,1])."""
    components: list
    bump: np.ndarray = None
    bump_on: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def eta(self):
        return float(sum(w for w, _, _, out in self.components if out))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, m, v, _ in self.components:
            out += w * np.exp(-(x - m) ** 2 / (2 * v)) / sqrt(2 * np.pi * v)
        if self.bump is not None:
            w = self.components[self.bump_on][0]
            out += w * np.where(np.abs(x) <= 1, np.polynomial.polynomial.polyval(x, self.bump), 0.0)
        return out

    def total_mass(self):
        mass = sum(w for w, _, _, _ in self.components)
        if self.bump is not None:
            mass += self.components[self.bump_on][0] * float(_LEG_W @ np.polynomial.polynomial.polyval(_LEG_X, self.bump))
        return float(mass)

    def check(self, tol=1e-9):
        ws = np.array([c[0] for c in self.components])
        grid = np.linspace(-10, 10, 10_000)
        dens = self.pdf(grid)
        report = {"weights_ok": bool(np.all(ws >= 0) and abs(ws.sum() - 1) <= tol),
                  "min_density": float(dens.min()), "mass": self.total_mass()}
        report["ok"] = (report["weights_ok"] and report["min_density"] >= -tol
                        and abs(report["mass"] - 1) <= tol)
        return report

    def sample(self, n, rng):
        """n draws; returns (values, came-from-an-outlier-component flags)."""
        ws = np.array([c[0] for c in self.components])
        comp = rng.choice(len(ws), size=n, p=ws / ws.sum())
        vals = np.empty(n)
        for c, (w, m, v, _) in enumerate(self.components):
            idx = np.flatnonzero(comp == c)
            if self.bump is not None and c == self.bump_on:
                vals[idx] = self._sample_bumped(len(idx), m, v, rng)
            else:
                vals[idx] = m + sqrt(v) * rng.standard_normal(len(idx))
        is_out = np.array([self.components[c][3] for c in comp], dtype=bool)
        return vals, is_out

    def _sample_bumped(self, k, m, v, rng):
        # rejection from phi + M 1[-1,1], M >= max p
        M = max(0.0, float(np.max(np.polynomial.polynomial.polyval(np.linspace(-1, 1, 2001), self.bump))) * 1.01)
        out = []
        while len(out) < k:
            size = 2 * (k - len(out)) + 16
            unif = rng.random(size) < 2 * M / (1 + 2 * M)
            x = np.where(unif, rng.uniform(-1, 1, size), m + sqrt(v) * rng.standard_normal(size))
            phi = np.exp(-(x - m) ** 2 / (2 * v)) / sqrt(2 * np.pi * v)
            inside = np.abs(x) <= 1
            p = np.where(inside, np.polynomial.polynomial.polyval(x, self.bump), 0.0)
            ratio = (phi + p) / (phi + M * inside)
            out.extend(x[rng.random(size) < ratio])
        return np.array(out[:k])

    def to_dict(self):
        return {"components": [[float(w), float(m), float(v), bool(o)] for w, m, v, o in self.components],
                "bump": None if self.bump is None else np.asarray(self.bump).tolist(),
                "bump_on": self.bump_on, "meta": self.meta}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj):
        bump = obj.get("bump")
        return cls([tuple(c) for c in obj["components"]],
                   None if bump is None else np.array(bump, float), obj.get("bump_on", 0), obj.get("meta", {}))


def null_instance():
    return NGCAInstance([(1.0, 0.0, 1.0, False)], meta={"kind": "null"})


# ---------------------------------------------------------------- profiles

def hermite_profile(inst, D):
    """a_0..a_D with a_j = E_A h_j(X)."""
    if D > MAX_D:
        raise UnsupportedOrderError(f"D = {D} above {MAX_D}")
    a = np.zeros(D + 1)
    for w, m, v, _ in inst.components:
        if v > 1:
            raise UnsupportedOrderError("component variance above 1")
        a += w * np.array([gaussian_hermite_moment(j, m, v) for j in range(D + 1)])
    if inst.bump is not None:
        w = inst.components[inst.bump_on][0]
        H = hermite_table(D, _LEG_X)
        a += w * (H @ (_LEG_W * np.polynomial.polynomial.polyval(_LEG_X, inst.bump)))
    return a


# ---------------------------------------------------------------- advantage

@dataclass
class AdvantageReport:
    value: float
    terms: dict            # even i -> (i/d)^{i/2} T_i
    T: list                # T_0..T_D
    profile: list
    n: float
    d: int
    D: int
    overflow: bool = False

    def to_dict(self):
        return {"value": self.value, "terms": {str(k): v for k, v in self.terms.items()},
                "T": self.T, "profile": self.profile, "n": self.n, "d": self.d, "D": self.D,
                "overflow": self.overflow, "kind": "upper bound on the degree-D advantage"}


def _series_log(s, D):
    """log(1 + s(z)) to degree D; s has s_0 = 0."""
    # L' (1 + s) = s'
    L = np.zeros(D + 1)
    for k in range(1, D + 1):
        acc = k * s[k]
        for j in range(1, k):
            acc -= j * L[j] * s[k - j]
        L[k] = acc / k
    return L


def _series_exp(F, D):
    E = np.zeros(D + 1)
    E[0] = 1.0
    for k in range(1, D + 1):
        E[k] = sum(j * F[j] * E[k - j] for j in range(1, k + 1)) / k
    return E


def inner_sums(profile, n, D, method="exp"):
    """T_i for i <= D: exp(n log(1 + sum a_j^2 z^j)), or by repeated squaring."""
    a = np.asarray(profile, dtype=float)
    s = np.zeros(D + 1)
    m = min(D, len(a) - 1)
    s[1:m + 1] = a[1:m + 1] ** 2
    if method == "exp":
        with np.errstate(over="ignore", invalid="ignore"):
            return _series_exp(n * _series_log(s, D), D)
    if method == "power":
        if int(n) != n:
            raise ValueError("power method needs integer n")
        base = s.copy()
        base[0] = 1.0
        out = np.zeros(D + 1)
        out[0] = 1.0
        k = int(n)
        while k:
            if k & 1:
                out = np.convolve(out, base)[:D + 1]
            base = np.convolve(base, base)[:D + 1]
            k >>= 1
        return out
    raise ValueError(method)


def brute_force_inner_sums(profile, n, D):
    """T_i by enumerating every multi-index in {0..D}^n."""
    a = np.asarray(profile, dtype=float)
    a2 = np.zeros(D + 1)
    m = min(D, len(a) - 1)
    a2[:m + 1] = a[:m + 1] ** 2
    a2[0] = 1.0
    T = np.zeros(D + 1)
    for I in product(range(D + 1), repeat=n):
        i = sum(I)
        if i <= D:
            T[i] += np.prod([a2[j] for j in I])
    return T


def advantage_bound(profile, n, d, D, method="exp"):
    if D > MAX_D:
        raise UnsupportedOrderError(f"D = {D} above {MAX_D}")
    T = inner_sums(profile, n, D, method)
    terms = {}
    for i in range(0, D + 1, 2):
        terms[i] = 1.0 if i == 0 else float((i / d) ** (i / 2) * T[i])
    vals = np.array(list(terms.values()))
    overflow = not np.all(np.isfinite(vals))
    value = float("inf") if overflow else float(vals.sum())
    return AdvantageReport(value, terms, [float(t) for t in T], [float(x) for x in profile], n, d, D, overflow)


# ---------------------------------------------------------------- instances

def cov_instance(eta, alpha):
    """(1-eta) N(0, 1-alpha) + eta/2 N(+-delta, 1), delta^2 = alpha (1-eta)/eta (unit variance)."""
    if not (0 < eta < 0.5 and 0 < alpha < 1):
        raise InstanceError("need 0 < eta < 1/2 and 0 < alpha < 1")
    delta = sqrt(alpha * (1 - eta) / eta)
    comps = [(1 - eta, 0.0, 1 - alpha, False), (eta / 2, delta, 1.0, True), (eta / 2, -delta, 1.0, True)]
    return NGCAInstance(comps, meta={"kind": "cov", "eta": eta, "alpha": alpha, "delta": delta, "j_star": 4})


def mean_instance(eta, sigma):
    """(1-eta) N(delta, sigma^2) + eta Q, delta = 0.001 sqrt(eta), Q a mixture of
    unit-variance Gaussians at the atoms of a law F on [-B, B], B = 10/sqrt(eta),
    chosen so that A matches three moments of N(0,1)."""
    if not (0 < eta < 0.5 and 0 < sigma < 0.5):
        raise InstanceError("need 0 < eta < 1/2 and 0 < sigma < 1/2")
    delta = 0.001 * sqrt(eta)
    s2 = sigma ** 2
    B = 10 / sqrt(eta)
    x1 = -(1 - eta) * delta / eta
    x2 = (1 - (1 - eta) * (delta ** 2 + s2) - eta) / eta
    x3 = -(1 - eta) * delta * (delta ** 2 + 3 * s2) / eta + 3 * (1 - eta) * delta / eta
    mm = moment_match(x1, x2, x3, B)
    if not mm["feasible"]:
        raise InstanceError(f"no law on [-B, B] with the required moments (min eigenvalue {mm['min_eig']:.3e})")
    comps = [(1 - eta, delta, s2, False)]
    comps += [(eta * float(w), float(t), 1.0, True) for t, w in zip(mm["atoms"], mm["weights"])]
    return NGCAInstance(comps, meta={"kind": "mean", "eta": eta, "sigma": sigma, "delta": delta,
                                     "B": B, "alpha": delta / sigma, "j_star": 4})


def _bump_targets(eta, alpha, dprime, i_star):
    targets = np.zeros(i_star + 1)
    for i in range(2, i_star + 1, 2):
        g = gaussian_moment(i)
        targets[i] = g / (1 - eta) - (1 - alpha) ** (i / 2) * g - eta / (1 - eta) * shifted_gaussian_moment(i, dprime)
    return targets


def subg_instance(eta, alpha, i_star=4, ridge=1e-10):
    """(1-eta)(phi_{0,1-alpha} + p 1[-1,1]) + eta/2 N(+-delta', 1).

    p is the even polynomial of degree i_star with int x^i p = the values
    that make A match moments 0..i_star of N(0,1); odd moments vanish by
    symmetry, so moments up to i_star + 1 match.
    """
    if i_star % 2:
        raise InstanceError("i_star must be even")
    if not (0 < eta < 0.5 and 0 < alpha < 1):
        raise InstanceError("need 0 < eta < 1/2 and 0 < alpha < 1")
    dprime = sqrt(alpha * (1 - eta) / eta)
    targets = _bump_targets(eta, alpha, dprime, i_star)
    evens = list(range(0, i_star + 1, 2))
    G = np.array([[2.0 / (i + k + 1) for k in evens] for i in evens])
    rhs = targets[evens]
    try:
        c = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        c = np.linalg.solve(G.T @ G + ridge * np.eye(len(evens)), G.T @ rhs)
    coeffs = np.zeros(i_star + 1)
    coeffs[evens] = c
    comps = [(1 - eta, 0.0, 1 - alpha, False), (eta / 2, dprime, 1.0, True), (eta / 2, -dprime, 1.0, True)]
    inst = NGCAInstance(comps, coeffs, 0, meta={"kind": "subg", "eta": eta, "alpha": alpha,
                                                  "delta_prime": dprime, "i_star": i_star, "j_star": i_star + 2})
    rep = inst.check()
    if not rep["ok"]:
        raise InstanceError(f"bump makes the density invalid: {rep}")
    return inst


def make_instance(kind, **params):
    if kind == "cov":
        return cov_instance(params.get("eta", 0.1), params.get("alpha", 0.4))
    if kind == "mean":
        return mean_instance(params.get("eta", 0.01), params.get("sigma", 0.2))
    if kind == "subg":
        return subg_instance(params.get("eta", 1e-8), params.get("alpha", 8e-6), params.get("i_star", 4))
    if kind == "null":
        return null_instance()
    raise ValueError(f"unknown instance kind {kind!r}")


def threshold(d, j_star, kappa, tau):
    """d^{j*/2} tau / kappa: where the growth-condition argument stops working."""
    return d ** (j_star / 2) * tau / kappa


# ---------------------------------------------------------------- growth condition

def growth_condition_check(profile, j_star, kappa, tau, tol=1e-9):
    """a_j = 0 below j_star, and a_j^2 <= j^j kappa tau^{-j/j_star} up to the end of the profile."""
    a = np.asarray(profile, dtype=float)
    low = [abs(x) for x in a[1:j_star]]
    vanish = all(x <= tol for x in low)
    need = 0.0
    # ratio in log space: log(a_j^2) + (j/j*) log tau - j log j
    for j in range(j_star, len(a)):
        if a[j] == 0:
            continue
        r = 2 * log(abs(a[j])) + (j / j_star) * log(tau) - j * log(j)
        need = max(need, float(np.exp(r)))
    return {"vanishing": vanish, "max_low": max(low, default=0.0), "kappa_needed": need,
            "envelope": bool(need <= kappa * (1 + 1e-12)), "passes": bool(vanish and need <= kappa * (1 + 1e-12))}


# ---------------------------------------------------------------- testing from estimation

def oracle_estimator(data, truth=None, rng=None, slack=0.1):
    """Returns the true mean plus an error of Mahalanobis norm at most slack*alpha
    in a uniformly random direction; `truth` = (mean, cov, alpha)."""
    mu, cov, alpha = truth
    d = len(mu)
    z = rng.standard_normal(d)
    z *= slack * alpha * rng.random() / np.linalg.norm(z)
    vals, vecs = np.linalg.eigh(cov)
    return mu + (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T @ z


def rotation_statistic(estimator, source, alpha, eta, d, n, k, rng):
    """The clipped top eigenvalue r of (1/k) sum y_i y_i^T over k rotated runs."""
    if k < 8:
        raise ValueError("k must be at least 8")
    clip = 10 * alpha + sqrt(eta)
    S = np.zeros((d, d))
    for _ in range(k):
        X, truth = source(n, rng)
        U = ortho_group.rvs(d, random_state=rng)
        rot_truth = None if truth is None else (U @ truth[0], U @ truth[1] @ U.T, truth[2])
        y = U.T @ np.asarray(estimator(X @ U.T, truth=rot_truth, rng=rng), float)
        if np.linalg.norm(y) <= clip:
            S += np.outer(y, y)
    return float(np.linalg.eigvalsh(S / k)[-1])


def calibrate_threshold(estimator, null_source, alpha, eta, d, n, k, trials=200, seed=0, level=0.05):
    """c such that r >= c eta happens in at most `level` of null runs (empirical quantile)."""
    rng = np.random.default_rng(seed)
    rs = np.array([rotation_statistic(estimator, null_source, alpha, eta, d, n, k, rng) for _ in range(trials)])
    return float(np.quantile(rs, 1 - level, method="higher") / eta)


def estimation_to_testing(estimator, source, alpha, eta, d, n, k, c, rng=None):
    """Decide H1 iff r >= c eta. Returns (decision, r)."""
    rng = np.random.default_rng(rng)
    r = rotation_statistic(estimator, source, alpha, eta, d, n, k, rng)
    return bool(r >= c * eta), r


def planted_mean_source(inst, d):
    """Sampler for the hard mean-testing instance along a fresh random direction;
    returns data and (mean, cov, alpha) of the inlier law."""
    delta, sigma, alpha = inst.meta["delta"], inst.meta["sigma"], inst.meta["alpha"]

    def source(n, rng):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        vals, _ = inst.sample(n, rng)
        G = rng.standard_normal((n, d))
        X = G - np.outer(G @ v, v) + np.outer(vals, v)
        cov = np.eye(d) - (1 - sigma ** 2) * np.outer(v, v)
        return X, (delta * v, cov, alpha)
    return source


def null_source(d, alpha):
    def source(n, rng):
        return rng.standard_normal((n, d)), (np.zeros(d), np.eye(d), alpha)
    return source
