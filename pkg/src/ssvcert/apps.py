"""Downstream certifiers built on resilience certificates.

distortion of the column span of X, 2->p norms of a matrix with rows A_i, and
the certification variant of sparse PCA.
"""
import logging
import warnings
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .certify import (budget, certify_fourth_moment, certify_pairwise,
                      certify_schatten_p, certify_trivial, fourth_moment_fluctuation,
                      SchattenCertifier)
from .errors import SizeError

log = logging.getLogger(__name__)

M4_MAX_DIM = 64


class ResilienceCurve:
    """Best available resilience certificate as a function of the budget k.

    Each method is computed once; Schatten-p reuses its matrix norms across
    budgets and is skipped (with a note) when it exceeds the size caps.
    """

    def __init__(self, X, methods=("pairwise", "m4", "schatten"), p=4):
        self.X = np.asarray(X, dtype=float)
        self.n, self.d = self.X.shape
        self.methods, self.skipped = [], {}
        self._schatten = None
        self._m4 = None
        self._pair = None
        for m in methods:
            try:
                if m == "schatten":
                    self._schatten = SchattenCertifier(self.X, p)
                elif m == "m4":
                    if self.d > M4_MAX_DIM:
                        raise SizeError(f"d = {self.d} above {M4_MAX_DIM} for the fourth-moment operator")
                    self._m4 = max(3.0 + fourth_moment_fluctuation(self.X)[0], 0.0)
                elif m == "pairwise":
                    self._pair = certify_pairwise(self.X, 1.0).audit
                elif m == "trivial":
                    pass
                else:
                    raise ValueError(f"unknown method {m!r}")
                self.methods.append(m)
            except SizeError as exc:
                self.skipped[m] = str(exc)
                log.info("resilience curve: skipping %s (%s)", m, exc)
        self._top = float(np.linalg.eigvalsh(self.X.T @ self.X / self.n)[-1]) if self.n else 0.0
        self._cache = {}

    def __call__(self, k):
        """Certified bound on max_{|S|=k} lambda_max((1/n) sum_S x_i x_i^T)."""
        if k <= 0:
            return 0.0
        if k in self._cache:
            return self._cache[k]
        n = self.n
        vals = {"trivial": self._top}
        if self._pair is not None:
            vals["pairwise"] = (self._pair["max_sq_norm"] + (k - 1) * self._pair["max_cross"]) / n
        if self._m4 is not None:
            vals["m4"] = sqrt(k / n) * sqrt(self._m4)
        if self._schatten is not None:
            vals["schatten"] = self._schatten.certificate(k / n).value
        best = min(vals.values())
        self._cache[k] = best
        return best

    def quartic_bound(self):
        """max over unit v of (1/n) sum <x_i, v>^4, if the fourth-moment route ran."""
        return self._m4


# ---------------------------------------------------------------- distortion

@dataclass
class DistortionCertificate:
    tau: float
    eta_star: float
    stage: str
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"tau": self.tau, "eta_star": self.eta_star, "stage": self.stage, "details": self.details}


def certify_distortion(X, p=4, methods=("pairwise", "m4", "schatten")):
    """Upper bound on max over x in colspan(X) of sqrt(n) ||x||_2 / ||x||_1.

    Step 1: if ||X^T X - n I|| > n/5, give up with sqrt(n).
    Step 2: largest k with certified max_{|S|=k} sum_S <X_i, v>^2 <= n/2 over unit v.
    Step 3: tau = 4 / sqrt(k/n).
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < d:
        raise ValueError("need n >= d")
    dev = float(np.max(np.abs(np.linalg.eigvalsh(X.T @ X - n * np.eye(d)))))
    if dev > n / 5:
        return DistortionCertificate(sqrt(n), 1.0, "isometry_failed", {"deviation": dev})
    curve = ResilienceCurve(X, methods, p)

    def ok(k):
        # curve is in (1/n) sum_S units; n/2 in sum units is 1/2 here
        return curve(k) <= 0.5

    evaluated = {}

    def pred(k):
        if k not in evaluated:
            evaluated[k] = ok(k)
        return evaluated[k]

    lo, hi = 0, n          # pred(lo) true by convention (k = 0), find last true
    if pred(n):
        lo = n
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pred(mid):
                lo = mid
            else:
                hi = mid
    ks = sorted(evaluated)
    monotone = all(not (evaluated[a] is False and evaluated[b] is True) for i, a in enumerate(ks) for b in ks[i + 1:])
    stage = "binary_search"
    if not monotone:
        warnings.warn("non-monotone predicate on the eta grid; scanning every k")
        lo = max((k for k in range(1, n + 1) if ok(k)), default=0)
        stage = "full_scan"
    if lo == 0:
        return DistortionCertificate(sqrt(n), 0.0, "no_spread_budget",
                                     {"deviation": dev, "methods": curve.methods, "skipped": curve.skipped})
    eta_star = lo / n
    tau = min(4 / sqrt(eta_star), sqrt(n))
    return DistortionCertificate(tau, eta_star, "spread",
                                 {"deviation": dev, "k_star": lo, "resilience_at_k": curve(lo),
                                  "methods": curve.methods, "skipped": curve.skipped, "search": stage})


def sampled_distortion(X, trials=10_000, seed=0):
    """Largest sqrt(n) ||Xv||_2 / ||Xv||_1 over random v (a lower bound on the distortion)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    V = np.random.default_rng(seed).standard_normal((X.shape[1], trials))
    Y = X @ V
    return float(np.max(sqrt(n) * np.linalg.norm(Y, axis=0) / np.abs(Y).sum(axis=0)))


# ---------------------------------------------------------------- 2 -> p

@dataclass
class TwoToPCertificate:
    p: float
    value: float
    ingredients: dict
    pieces: dict

    def to_dict(self):
        return {"p": self.p, "value": self.value, "ingredients": self.ingredients, "pieces": self.pieces}


def _tail_bound(u, lam, quartic, dhat, chat, curve, n):
    """Upper bound on Pr_i(<A_i, v>^2 >= u), uniform over unit v, and which bound won."""
    if u > dhat:
        return 0.0, "row_norm"
    cands = {"one": 1.0}
    if u > 0:
        cands["markov2"] = lam / u
        if quartic is not None:
            cands["markov4"] = quartic / (u * u)
    if u > chat:
        # k u <= dhat + (k - 1) chat for any k-subset with all <A_i,v>^2 >= u
        cands["gershgorin"] = np.floor((dhat - chat) / (u - chat)) / n
    if u > 0:
        cands["resilience"] = curve.max_k_above(u) / n
    best = min(cands, key=cands.get)
    return float(cands[best]), best


class _CurveInverse:
    """K(u) = largest k with k u <= n R(k), R the certified resilience; R is
    evaluated on a geometric grid and used as a step function from above."""

    def __init__(self, curve, n, grid_size=64):
        self.n = n
        ks = np.unique(np.round(np.geomspace(1, n, grid_size)).astype(int))
        self.ks = ks
        self.R = np.array([curve(int(k)) for k in ks])

    def max_k_above(self, u):
        # for k in (ks[j-1], ks[j]], R(k) <= R(ks[j]); feasible k satisfy k <= n R(ks[j]) / u
        best = 0
        prev = 0
        for kj, Rj in zip(self.ks, self.R):
            cap = min(int(kj), int(np.floor(self.n * Rj / u)))
            if cap > prev:
                best = cap
            prev = int(kj)
        return best


def certify_two_to_p(A, p, methods=("pairwise", "m4"), grid=4000):
    """Sound upper bound on max_{|v|=1} (E_i |<A_i, v>|^p)^{1/p}, rows A_i.

    E_i |<A_i,v>|^p = int_0^inf Pr(<A_i,v>^2 >= t^{2/p}) dt. The integrand is
    bounded by the smallest of: 1, Markov via the top eigenvalue, Markov via
    the certified fourth moment, the Gershgorin count from row norms and pair
    products, and the resilience curve. The bound is non-increasing, so a
    left Riemann sum over-estimates the integral. The result is also capped
    by L^2-L^4 interpolation, (lam^{(4-p)/2} quartic^{(p-2)/2})^{1/p}.
    """
    if not 2 <= p <= 4:
        raise ValueError("p must lie in [2, 4]")
    A = np.asarray(A, dtype=float)
    n, d = A.shape
    gram = A @ A.T
    dhat = float(np.max(np.diag(gram)))
    off = gram - np.diag(np.diag(gram))
    chat = float(np.max(np.abs(off))) if n > 1 else 0.0
    lam = float(np.linalg.eigvalsh(A.T @ A / n)[-1])
    curve = ResilienceCurve(A, methods)
    quartic = curve.quartic_bound()
    inv = _CurveInverse(curve, n)
    tmax = dhat ** (p / 2)
    # left endpoints: 0, then a geometric grid up to tmax
    ts = np.concatenate([[0.0], np.geomspace(min(1e-6, tmax), tmax, grid)])
    total = 0.0
    winners = {}
    pieces = {"below_1": 0.0, "above_1": 0.0}
    for a, b in zip(ts[:-1], ts[1:]):
        val, who = _tail_bound(a ** (2 / p), lam, quartic, dhat, chat, inv, n)
        contrib = val * (b - a)
        total += contrib
        winners[who] = winners.get(who, 0.0) + contrib
        pieces["below_1" if b <= 1 else "above_1"] += contrib
    integral_value = total ** (1 / p)
    interp = None
    if quartic is not None:
        # Hoelder: E|f|^p <= (E f^2)^{(4-p)/2} (E f^4)^{(p-2)/2}
        interp = (lam ** ((4 - p) / 2) * quartic ** ((p - 2) / 2)) ** (1 / p)
    value = integral_value if interp is None else min(integral_value, interp)
    ingredients = {"max_pair_inner_product": chat, "max_row_norm_sq": dhat, "two_to_two_sq": lam,
                   "quartic_bound": quartic,
                   "resilience_curve": {int(k): float(r) for k, r in zip(inv.ks, inv.R)},
                   "methods": curve.methods, "skipped": curve.skipped}
    pieces.update(integral=integral_value, interpolation=interp, by_bound=winners)
    return TwoToPCertificate(p, float(value), ingredients, pieces)


def sampled_two_to_p(A, p, trials=1000, seed=0):
    """Largest (E_i |<A_i, v>|^p)^{1/p} over random unit v."""
    A = np.asarray(A, dtype=float)
    V = np.random.default_rng(seed).standard_normal((A.shape[1], trials))
    V /= np.linalg.norm(V, axis=0)
    return float(np.max(np.mean(np.abs(A @ V) ** p, axis=0) ** (1 / p)))


# ---------------------------------------------------------------- sparse PCA

def sparse_pca_certify(X, eta, beta, methods=("trivial", "pairwise", "m4")):
    """Certify that no unit v with at most eta*dim nonzeros has (1/N) sum <X_i, v>^2 >= beta.

    Sparsity lives on the coordinates, so the certificate runs on the
    transposed data Y = X^T (one row per coordinate) and is rescaled:
    max over sparse v of (1/N)|Xv|^2 = (dim/N) * resilience(Y, eta).
    """
    X = np.asarray(X, dtype=float)
    N, dim = X.shape
    Y = X.T
    certs = {}
    for m in methods:
        try:
            if m == "trivial":
                c = certify_trivial(Y, eta)
            elif m == "pairwise":
                c = certify_pairwise(Y, eta)
            elif m == "m4":
                if N > M4_MAX_DIM:
                    raise SizeError(f"N = {N} above {M4_MAX_DIM} for the fourth-moment operator")
                c = certify_fourth_moment(Y, eta)
            elif m == "schatten":
                c = certify_schatten_p(Y, eta, 4)
            else:
                raise ValueError(f"unknown method {m!r}")
            certs[m] = c.value * dim / N
        except SizeError as exc:
            log.info("sparse PCA: skipping %s (%s)", m, exc)
    best = min(certs, key=certs.get)
    value = certs[best]
    return {"absent": bool(value < beta), "certificate": value, "method": best, "all": certs,
            "k": budget(eta, dim), "beta": beta}
