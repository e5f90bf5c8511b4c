"""Moment-matrix pseudo-expectations and SoS proof checking for small systems.

A degree-D pseudo-expectation is a vector of moments y_m, one per monomial of
degree at most D. We ask for pE 1 = 1, a PSD moment matrix, PSD localizing
matrices for every inequality, and pE[m q] = 0 for every equality q and every
monomial m with deg(m q) <= D. The SDP itself is handed to cvxpy/Clarabel.
"""
import ast
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleError, SizeError

MAX_SIDE = 400
PSD_TOL = 1e-7
EQ_TOL = 1e-7
PROOF_TOL = 1e-6
BIG_BALL = 1e6


# ---------------------------------------------------------------- polynomials

class Poly:
    """Sparse polynomial: {exponent tuple: coefficient} over nvars variables."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = nvars
        self.terms = {}
        for e, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(e)] = self.terms.get(tuple(e), 0.0) + float(c)

    @classmethod
    def const(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, nvars, i):
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    @property
    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def _lift(self, other):
        if isinstance(other, Poly):
            return other
        return Poly.const(self.nvars, float(other))

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.nvars, {e: c for e, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Poly(self.nvars, {e: c for e, c in out.items() if c != 0})

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __pow__(self, k):
        out = Poly.const(self.nvars, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def __call__(self, point):
        point = np.asarray(point, dtype=float)
        return float(sum(c * np.prod(point ** np.array(e)) for e, c in self.terms.items()))

    def __repr__(self):
        return f"Poly({self.nvars}, {self.terms})"


def parse_poly(text, names):
    """Parse +, -, *, ** and numbers over the given variable names."""
    nv = len(names)
    index = {n: i for i, n in enumerate(names)}

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return Poly.const(nv, node.value)
        if isinstance(node, ast.Name):
            if node.id not in index:
                raise ValueError(f"unknown variable {node.id!r}")
            return Poly.var(nv, index[node.id])
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a = walk(node.left)
            if isinstance(node.op, ast.Pow):
                if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)
                        and node.right.value >= 0):
                    raise ValueError("exponents must be non-negative integers")
                return a ** node.right.value
            b = walk(node.right)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div) and not b.degree:
                return a / b.terms.get((0,) * nv, 0.0)
        raise ValueError(f"unsupported expression: {ast.dump(node)}")

    return walk(ast.parse(text.strip(), mode="eval"))


# ---------------------------------------------------------------- systems

@dataclass
class PolynomialSystem:
    variables: list
    equalities: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)
    degree: int = 2
    objective: Poly = None
    sense: str = "max"
    psd: list = field(default_factory=list)   # square matrices of Poly, pE[m m' G] >= 0

    @property
    def nvars(self):
        return len(self.variables)

    def validate(self):
        for q in self.equalities + self.inequalities:
            if q.degree > self.degree:
                raise ValueError(f"constraint of degree {q.degree} above relaxation degree {self.degree}")
            if not all(np.isfinite(c) for c in q.terms.values()):
                raise ValueError("non-finite coefficient")
        for G in self.psd:
            if max(g.degree for row in G for g in row) > self.degree:
                raise ValueError("matrix constraint degree above relaxation degree")


def parse_system(text):
    """Parse `var a b; eq ...; ge ...; deg 4; obj ...` (obj is maximized; `min` minimizes)."""
    names, eqs, ges, deg, obj, sense = None, [], [], 2, None, "max"
    for stmt in text.replace("\n", ";").split(";"):
        stmt = stmt.strip()
        if not stmt:
            continue
        head, _, rest = stmt.partition(" ")
        rest = rest.strip()
        if head == "var":
            names = rest.split()
            continue
        if names is None and head != "deg":
            raise ValueError("`var` must come first")
        if head == "eq":
            eqs.append(parse_poly(rest, names))
        elif head == "ge":
            ges.append(parse_poly(rest, names))
        elif head == "le":
            ges.append(-parse_poly(rest, names))
        elif head == "deg":
            deg = int(rest)
        elif head in ("obj", "max", "min"):
            obj, sense = parse_poly(rest, names), ("min" if head == "min" else "max")
        else:
            raise ValueError(f"unknown statement {head!r}")
    sys_ = PolynomialSystem(names or [], eqs, ges, deg, obj, sense)
    sys_.validate()
    return sys_


def monomials(nvars, deg):
    """Exponent tuples of total degree <= deg, graded lexicographic."""
    out = []
    for t in range(deg + 1):
        for combo in combinations_with_replacement(range(nvars), t):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


# ---------------------------------------------------------------- pseudo-expectations

class PseudoExpectation:
    """Linear functional given by its moments up to some degree."""

    def __init__(self, nvars, degree, moments, residuals=None, names=None):
        self.nvars, self.degree = nvars, degree
        self.moments = {tuple(k): float(v) for k, v in moments.items()}
        self.residuals = residuals or {}
        self.names = names

    def __call__(self, poly):
        total = 0.0
        for e, c in poly.terms.items():
            if e not in self.moments:
                raise ValueError(f"monomial {e} beyond degree {self.degree}")
            total += c * self.moments[e]
        return total

    def moment_matrix(self, half=None):
        half = self.degree // 2 if half is None else half
        B = monomials(self.nvars, half)
        return np.array([[self.moments[_add(a, b)] for b in B] for a in B])

    def localizing_matrix(self, g):
        half = (self.degree - g.degree) // 2
        B = monomials(self.nvars, half)
        return np.array([[self(Poly(self.nvars, {_add(_add(a, b), e): c for e, c in g.terms.items()}))
                          for b in B] for a in B])

    def to_dict(self):
        names = self.names or [f"x{i}" for i in range(self.nvars)]

        def label(e):
            parts = [n if k == 1 else f"{n}^{k}" for n, k in zip(names, e) if k]
            return "*".join(parts) or "1"

        return {"degree": self.degree, "moments": {label(e): v for e, v in self.moments.items()},
                "residuals": self.residuals}


@dataclass
class InfeasibleReport:
    status: str
    violation: float            # best achievable min-eigenvalue, negative when infeasible
    witness: dict               # dual Gram matrices / multipliers of the phase-one problem

    def __bool__(self):
        return False


class _Builder:
    """Linear maps from the moment vector to every constrained matrix."""

    def __init__(self, system, degree=None):
        system.validate()
        self.sys = system
        self.D = system.degree if degree is None else degree
        nv = system.nvars
        self.mons = monomials(nv, self.D)
        self.idx = {m: i for i, m in enumerate(self.mons)}
        half = monomials(nv, self.D // 2)
        if len(half) > MAX_SIDE:
            raise SizeError(f"moment matrix side {len(half)} exceeds {MAX_SIDE}")
        self.blocks = [("moment", self._loc_map(Poly.const(nv, 1.0), half), len(half))]
        for j, g in enumerate(system.inequalities):
            B = monomials(nv, (self.D - g.degree) // 2)
            self.blocks.append((f"ge{j}", self._loc_map(g, B), len(B)))
        for j, G in enumerate(system.psd):
            k = len(G)
            gdeg = max(e.degree for row in G for e in row)
            B = monomials(nv, (self.D - gdeg) // 2)
            self.blocks.append((f"psd{j}", self._matrix_loc_map(G, B), k * len(B)))
        rows = []
        for q in system.equalities:
            for m in monomials(nv, self.D - q.degree):
                rows.append(self._row(q, m))
        self.eq = sp.vstack(rows).tocsr() if rows else None

    def _row(self, g, shift):
        r = sp.lil_matrix((1, len(self.mons)))
        for e, c in g.terms.items():
            r[0, self.idx[_add(e, shift)]] += c
        return r

    def _loc_map(self, g, B):
        s = len(B)
        data, ri, ci = [], [], []
        for a in range(s):
            for b in range(s):
                ab = _add(B[a], B[b])
                for e, c in g.terms.items():
                    data.append(c)
                    ri.append(a * s + b)
                    ci.append(self.idx[_add(ab, e)])
        return sp.csr_matrix((data, (ri, ci)), shape=(s * s, len(self.mons)))

    def _matrix_loc_map(self, G, B):
        k, s = len(G), len(B)
        side = k * s
        data, ri, ci = [], [], []
        for i in range(k):
            for j in range(k):
                for a in range(s):
                    for b in range(s):
                        ab = _add(B[a], B[b])
                        for e, c in G[i][j].terms.items():
                            data.append(c)
                            ri.append((i * s + a) * side + (j * s + b))
                            ci.append(self.idx[_add(ab, e)])
        return sp.csr_matrix((data, (ri, ci)), shape=(side * side, len(self.mons)))

    def linear(self, poly):
        v = np.zeros(len(self.mons))
        for e, c in poly.terms.items():
            if e not in self.idx:
                raise ValueError(f"monomial {e} beyond degree {self.D}")
            v[self.idx[e]] += c
        return v

    def problem(self, objective=None, sense="max", phase_one=False, extra=()):
        import cvxpy as cp
        y = cp.Variable(len(self.mons))
        cons = [y[self.idx[(0,) * self.sys.nvars]] == 1]
        if self.eq is not None:
            cons.append(self.eq @ y == 0)
        s = cp.Variable() if phase_one else None
        psd_cons = []
        for name, A, side in self.blocks:
            M = cp.reshape(A @ y, (side, side), order="C")
            M = (M + M.T) / 2
            if phase_one:
                M = M - s * np.eye(side)
            c = M >> 0
            psd_cons.append((name, c))
            cons.append(c)
        for vec, bound in extra:
            cons.append(vec @ y <= bound)
        if phase_one:
            cons.append(s <= 1)
            obj = cp.Maximize(s)
        elif objective is None:
            obj = cp.Minimize(0)
        else:
            f = self.linear(objective) @ y
            obj = cp.Maximize(f) if sense == "max" else cp.Minimize(f)
        return cp.Problem(obj, cons), y, s, psd_cons, cons

    def residuals(self, yv):
        out = {"pE1": abs(yv[0] - 1.0)}
        if self.eq is not None:
            out["equality"] = float(np.max(np.abs(self.eq @ yv))) if self.eq.shape[0] else 0.0
        for name, A, side in self.blocks:
            M = (A @ yv).reshape(side, side)
            out[f"min_eig_{name}"] = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        return out


def _solve(prob):
    import cvxpy as cp
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10,
                   tol_ktratio=1e-8, max_iter=400)
    return prob.status


def _infeasible_report(builder, status):
    prob, y, s, psd_cons, cons = builder.problem(phase_one=True)
    _solve(prob)
    witness = {name: np.asarray(c.dual_value) for name, c in psd_cons if c.dual_value is not None}
    if builder.eq is not None and cons[1].dual_value is not None:
        witness["equality_multipliers"] = np.asarray(cons[1].dual_value)
    viol = float(s.value) if s.value is not None else -np.inf
    return InfeasibleReport(status, viol, witness)


def _ball_poly(nvars, degree):
    """sum_k (|x|^2)^k for k = 1..degree//2, the moment-ball polynomial."""
    sq = sum((Poly.var(nvars, i) ** 2 for i in range(nvars)), Poly.const(nvars, 0.0))
    out, pw = Poly.const(nvars, 0.0), Poly.const(nvars, 1.0)
    for _ in range(max(degree // 2, 1)):
        pw = pw * sq
        out = out + pw
    return out


def solve_pseudo_expectation(system, objective=None, sense=None, degree=None, ball=None):
    """Find a pseudo-expectation for the system, optionally optimizing a polynomial.

    Returns a PseudoExpectation, or an InfeasibleReport carrying the phase-one
    dual (a separating certificate) when no tolerance-feasible point exists.
    `ball` adds pE[sum_k |x|^{2k}] <= ball.
    """
    b = _Builder(system, degree)
    objective = system.objective if objective is None else objective
    sense = sense or system.sense
    extra = []
    if ball is not None:
        extra.append((b.linear(_ball_poly(system.nvars, b.D)), ball))
    prob, y, _, _, _ = b.problem(objective, sense, extra=extra)
    status = _solve(prob)
    if status in ("infeasible", "infeasible_inaccurate"):
        return _infeasible_report(b, status)
    if status in ("unbounded", "unbounded_inaccurate"):
        return InfeasibleReport(status, np.nan, {})
    yv = np.asarray(y.value)
    res = b.residuals(yv)
    worst = min(v for k, v in res.items() if k.startswith("min_eig"))
    if worst < -PSD_TOL or res.get("equality", 0.0) > EQ_TOL or res["pE1"] > EQ_TOL:
        rep = _infeasible_report(b, "infeasible_within_tolerance")
        if rep.violation < -PSD_TOL:
            return rep
    return PseudoExpectation(system.nvars, b.D, dict(zip(b.mons, yv)), res, system.variables)


@dataclass
class ProofCheck:
    holds: bool
    value: float                # min pE[target] (or the ball-restricted min)
    witness: object             # minimizing pE when false, dual multipliers when true
    note: str = ""

    def __bool__(self):
        return self.holds


def check_sos_proof(system, target, degree=None, ball=BIG_BALL):
    """Decide system |-_degree target >= 0 through the moment SDP.

    The statement holds iff no degree-t pseudo-expectation satisfying the
    system has pE[target] < -1e-6. The minimization runs inside a large moment
    ball (pE[sum_k |x|^{2k}] <= 1e6) so that an unbounded minimum shows up as
    a finite negative value; a refutation is then re-solved inside the ball of
    radius nvars to give a readable witness.
    """
    b = _Builder(system, degree)
    extra = [(b.linear(_ball_poly(system.nvars, b.D)), ball)] if ball is not None else []
    prob, y, _, psd_cons, cons = b.problem(target, "min", extra=extra)
    status = _solve(prob)
    if status in ("infeasible", "infeasible_inaccurate"):
        return ProofCheck(True, np.inf, _infeasible_report(b, status), "system infeasible")
    if status in ("unbounded", "unbounded_inaccurate"):
        val = -np.inf
    else:
        yv = np.asarray(y.value)
        val = float(b.linear(target) @ yv)
    if val >= -PROOF_TOL:
        duals = {name: np.asarray(c.dual_value) for name, c in psd_cons}
        return ProofCheck(True, val, duals)
    pe = solve_pseudo_expectation(system, target, "min", degree, ball=float(max(system.nvars, 1)))
    if isinstance(pe, PseudoExpectation) and pe(target) < -PROOF_TOL:
        return ProofCheck(False, pe(target), pe, "witness from the small ball")
    pe = PseudoExpectation(system.nvars, b.D, dict(zip(b.mons, yv)), b.residuals(yv), system.variables)
    return ProofCheck(False, val, pe)


def pe_inequalities_check(pe, system=None, trials=50, seed=0, tol=1e-7):
    """Cauchy-Schwarz battery for a pseudo-expectation.

    Checks (pE p)^2 <= pE p^2 on random p of half degree, and the localized
    form pE sum a_i b_i r <= sqrt(pE sum a_i^2 r) sqrt(pE sum b_i^2 r) for every
    inequality r of the system. Reports worst slacks and min eigenvalues.
    """
    rng = np.random.default_rng(seed)
    nv = pe.nvars
    M = pe.moment_matrix()
    B = monomials(nv, pe.degree // 2)
    worst_cs = np.inf
    for _ in range(trials):
        a = rng.standard_normal(len(B))
        p = Poly(nv, dict(zip(B, a)))
        worst_cs = min(worst_cs, pe(p * p) - pe(p) ** 2)
    report = {"min_eig_moment": float(np.linalg.eigvalsh(M)[0]), "cs_worst_slack": float(worst_cs),
              "localized": []}
    for r in (system.inequalities if system is not None else []):
        Bl = monomials(nv, (pe.degree - r.degree) // 2)
        worst = np.inf
        for _ in range(trials):
            k = 3
            A = [Poly(nv, dict(zip(Bl, rng.standard_normal(len(Bl))))) for _ in range(k)]
            Bp = [Poly(nv, dict(zip(Bl, rng.standard_normal(len(Bl))))) for _ in range(k)]
            lhs = sum(pe(a * b * r) for a, b in zip(A, Bp))
            qa = sum(pe(a * a * r) for a in A)
            qb = sum(pe(b * b * r) for b in Bp)
            rhs = np.sqrt(max(qa, 0.0) * max(qb, 0.0))
            if qa < -tol or qb < -tol:
                worst = min(worst, min(qa, qb))
            else:
                worst = min(worst, rhs - lhs)
        L = pe.localizing_matrix(r)
        report["localized"].append({"worst_slack": float(worst),
                                    "min_eig": float(np.linalg.eigvalsh(0.5 * (L + L.T))[0])})
    slacks = [report["cs_worst_slack"]] + [x["worst_slack"] for x in report["localized"]]
    eigs = [report["min_eig_moment"]] + [x["min_eig"] for x in report["localized"]]
    report["worst_slack"] = float(min(slacks))
    report["ok"] = bool(min(slacks) >= -tol and min(eigs) >= -PSD_TOL)
    return report


def require_feasible(result):
    if isinstance(result, InfeasibleReport):
        raise InfeasibleError(f"pseudo-expectation infeasible ({result.status}, violation {result.violation:.3g})")
    return result
