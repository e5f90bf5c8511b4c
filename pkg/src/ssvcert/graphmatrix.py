"""Graph matrices in the Hermite basis, admissible circle/diamond merges and flows.

A shape has circle vertices (sample labels, split into L and R) and diamond
vertices (coordinate labels). An entry of its graph matrix is

    sum over injective g: diamonds -> [d] of
        prod over edges (c, t, l) of h_l(x_{label(c)}[g(t)]),

and zero unless all circle labels are distinct. Norms of such matrices are
governed by the maximum vertex-capacitated flow from L to R when circles
weigh 1 and diamonds weigh log_n d.
"""
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from math import factorial, log

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .errors import InvalidShapeError, SizeError
from .gaussian import hermite_expand_monomial, hermite_table
from .graphpoly import set_partitions
from .matrep import distinct_mask

DENSE_CAP = 20_000_000


@dataclass(frozen=True)
class BipartiteShape:
    circles: tuple            # ((id, 'L' or 'R'), ...)
    diamonds: tuple           # (id, ...)
    edges: tuple              # ((circle id, diamond id, order), ...), repeats allowed
    meta: tuple = ()          # extra (key, value) pairs, e.g. merge sizes

    def __post_init__(self):
        cids = {c for c, _ in self.circles}
        dids = set(self.diamonds)
        for c, t, l in self.edges:
            if c not in cids or t not in dids:
                raise InvalidShapeError(f"edge ({c}, {t}) must join a circle and a diamond")
            if l < 1:
                raise InvalidShapeError("edge orders must be positive")
        p = dict(self.meta).get("p")
        if p is not None and sum(l for _, _, l in self.edges) > 4 * p:
            raise InvalidShapeError("total edge order exceeds the 4p cap")

    @property
    def L(self):
        return tuple(c for c, s in self.circles if s == "L")

    @property
    def R(self):
        return tuple(c for c, s in self.circles if s == "R")

    @property
    def info(self):
        return dict(self.meta)

    def neighbors(self, v):
        out = set()
        for c, t, _ in self.edges:
            if c == v:
                out.add(("d", t))
            if t == v:
                out.add(("c", c))
        return out

    def isolated_diamonds(self):
        used = {t for _, t, _ in self.edges}
        return tuple(t for t in self.diamonds if t not in used)

    def isolated_circles(self):
        used = {c for c, _, _ in self.edges}
        return tuple(c for c, _ in self.circles if c not in used)

    def total_order(self):
        return sum(l for _, _, l in self.edges)

    def key(self):
        return (tuple(sorted(self.circles)), tuple(sorted(self.diamonds)),
                tuple(sorted(Counter(self.edges).items())), self.meta)


def diamond_weight(n, d):
    return log(d) / log(n)


# ------------------------------------------------------------- serialization

def serialize_shape(shape):
    """graphpoly-style line format with circle/diamond markers."""
    lines = ["shape"]
    lines.append("circles " + " ".join(f"{c}:{s}" for c, s in shape.circles))
    lines.append("diamonds " + " ".join(str(t) for t in shape.diamonds))
    lines.append("edges " + " ".join(f"{c}-{t}:{l}" for c, t, l in shape.edges))
    if shape.meta:
        lines.append("meta " + " ".join(f"{k}={v}" for k, v in shape.meta))
    return "\n".join(lines)


def parse_shape(text):
    circles, diamonds, edges, meta = [], [], [], []
    for line in text.strip().splitlines():
        head, _, rest = line.strip().partition(" ")
        toks = rest.split()
        if head == "circles":
            circles = [(int(a), b) for a, b in (t.split(":") for t in toks)]
        elif head == "diamonds":
            diamonds = [int(t) for t in toks]
        elif head == "edges":
            for t in toks:
                ct, l = t.split(":")
                c, dd = ct.split("-")
                edges.append((int(c), int(dd), int(l)))
        elif head == "meta":
            meta = [(k, int(v)) for k, v in (t.split("=") for t in toks)]
    return BipartiteShape(tuple(circles), tuple(diamonds), tuple(edges), tuple(meta))


# ------------------------------------------------------------ graph matrices

def _mobius(blocks):
    out = 1
    for b in blocks:
        out *= (-1) ** (len(b) - 1) * factorial(len(b) - 1)
    return out


def graph_matrix_tensor(shape, X, method="auto"):
    """Dense tensor over circle labels (in shape.circles order) before masking.

    method 'mobius' sums over diamond coincidence patterns with Mobius
    weights; 'direct' enumerates injective diamond labelings.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    circles = [c for c, _ in shape.circles]
    k = len(shape.diamonds)
    if k > 4:
        raise SizeError("at most 4 diamonds are supported")
    if n ** len(circles) > DENSE_CAP:
        raise SizeError(f"dense graph matrix with {n ** len(circles)} entries exceeds {DENSE_CAP}")
    if method == "auto":
        method = "mobius" if k <= 3 else "direct"
    maxl = max([l for _, _, l in shape.edges], default=0)
    H = hermite_table(maxl, X.ravel()).reshape(maxl + 1, n, d)
    cpos = {c: i for i, c in enumerate(circles)}
    dpos = {t: i for i, t in enumerate(shape.diamonds)}
    out_sub = list(range(len(circles)))
    base = len(circles)

    def network(diamond_index):
        args = []
        for c, t, l in shape.edges:
            args += [H[l], [cpos[c], diamond_index[dpos[t]]]]
        # circles without edges still index the output
        for c in circles:
            if not any(e[0] == c for e in shape.edges):
                args += [np.ones(n), [cpos[c]]]
        # diamonds without edges contribute a free coordinate sum
        used = {diamond_index[dpos[t]] for _, t, _ in shape.edges}
        free = sorted(set(diamond_index) - used)
        scale = float(d) ** len(free)
        if not args:
            return scale * np.ones(())
        return scale * np.einsum(*args, out_sub, optimize="greedy")

    shape_out = (n,) * len(circles)
    if method == "mobius":
        total = np.zeros(shape_out)
        for blocks in set_partitions(range(k)):
            idx = [0] * k
            for b, block in enumerate(blocks):
                for i in block:
                    idx[i] = base + b
            total = total + _mobius(blocks) * network(idx)
        return total
    total = np.zeros(shape_out)
    labels = [t for t in range(d)]
    for g in _injective(labels, k):
        val = np.ones(shape_out)
        for c, t, l in shape.edges:
            vec = H[l][:, g[dpos[t]]]
            val = val * vec.reshape([n if i == cpos[c] else 1 for i in range(len(circles))])
        total += val
    return total


def _injective(labels, k):
    from itertools import permutations
    return permutations(labels, k)


def build_graph_matrix(shape, X, method="auto"):
    """Dense graph matrix, rows = L labels, columns = R labels."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    T = graph_matrix_tensor(shape, X, method)
    circles = [c for c, _ in shape.circles]
    mask = distinct_mask(n, len(circles))
    if mask is not None:
        T = T * mask
    order = [circles.index(c) for c in shape.L + shape.R]
    T = np.transpose(T, order) if order else T
    return T.reshape(n ** len(shape.L), n ** len(shape.R))


def hermite_decomposition(g, L, R):
    """Shapes and coefficients with M_G(raw) = sum coef * graph matrix.

    Each edge of G becomes a diamond joined to its endpoints. Diamonds are
    grouped by coordinate coincidence; within a group a circle meeting the
    group k times carries x^k, which is expanded in normalized Hermite
    polynomials (order 0 drops the edge).
    """
    edges = g.edges()
    p = len(edges)
    side = {v: "L" for v in L}
    side.update({v: "R" for v in R})
    circles = tuple((v, side[v]) for v in g.vertices)
    out = []
    for blocks in set_partitions(range(p)):
        mult = {}
        for b, block in enumerate(blocks):
            for e in block:
                a, c = edges[e]
                mult[(a, b)] = mult.get((a, b), 0) + 1
                mult[(c, b)] = mult.get((c, b), 0) + 1
        keys = sorted(mult)
        expansions = [sorted(hermite_expand_monomial(mult[k]).items()) for k in keys]
        for choice in product(*expansions):
            coef = 1.0
            shape_edges = []
            for (v, b), (j, c) in zip(keys, choice):
                coef *= c
                if j > 0:
                    shape_edges.append((v, b, j))
            shape = BipartiteShape(circles, tuple(range(len(blocks))), tuple(shape_edges),
                                   (("p", p),))
            out.append((coef, shape))
    return out


# ------------------------------------------------------ base graph and merges

def base_graph(cycle_lengths):
    """The alternating circle/diamond graph G_0 for the given cycles."""
    circles, edges = [], []
    cid = did = 0
    extra_l = 0
    for l in cycle_lengths:
        ids = list(range(cid, cid + l))
        if l % 2 == 0:
            sides = ["L" if i % 2 == 0 else "R" for i in range(l)]
        else:
            major = "L" if extra_l <= 0 else "R"
            minor = "R" if major == "L" else "L"
            sides = [minor if i % 2 == 0 else major for i in range(l)]
            sides[-1] = major
            extra_l += 1 if major == "L" else -1
        circles += list(zip(ids, sides))
        if l == 1:
            # the two parallel edges of a 1-cycle are identified
            edges.append((ids[0], did, 1))
            did += 1
        else:
            for i in range(l):
                edges.append((ids[i], did, 1))
                edges.append((ids[(i + 1) % l], did, 1))
                did += 1
        cid += l
    return BipartiteShape(tuple(circles), tuple(range(did)), tuple(edges),
                          (("p", cid), ("S", cid), ("T", did), ("iso", 0)))


def _mergeable_circle_partitions(shape):
    nbrs = {c: {t for cc, t, _ in shape.edges if cc == c} for c, _ in shape.circles}
    circles = [c for c, _ in shape.circles]
    for blocks in set_partitions(circles):
        ok = all(not (nbrs[a] & nbrs[b]) for block in blocks for a, b in combinations(block, 2))
        if ok:
            yield blocks


def admissible_merges(cycle_lengths, max_removal_subsets=64):
    """Yield (shape, |S|, |T|) for every admissible merge G(S, T).

    Removal sets: all valid subsets when there are at most
    log2(max_removal_subsets) removable edges, otherwise only the maximal
    ones (removing edges only lowers the flow and raises the isolated count,
    so maximal sets dominate the flow inequality).
    """
    g0 = base_graph(cycle_lengths)
    p = sum(cycle_lengths)
    side = dict(g0.circles)
    seen = set()
    for cblocks in _mergeable_circle_partitions(g0):
        cmap = {}
        sc = []
        for i, block in enumerate(cblocks):
            for c in block:
                cmap[c] = i
            sc.append((i, "L" if any(side[c] == "L" for c in block) else "R"))
        # circle merging never creates parallel edges (no shared diamonds)
        e1 = sorted(set((cmap[c], t) for c, t, _ in g0.edges))
        for dblocks in set_partitions(list(g0.diamonds)):
            dmap = {}
            for j, block in enumerate(dblocks):
                for t in block:
                    dmap[t] = j
            cnt = Counter((c, dmap[t]) for c, t in e1)
            edges = sorted(cnt)
            removable = [e for e in edges if cnt[e] >= 2]
            for removed in _removal_sets(edges, removable, len(sc), max_removal_subsets):
                kept = tuple((c, t, 1) for c, t in edges if (c, t) not in removed)
                used = {t for _, t, _ in kept}
                iso = sum(1 for j in range(len(dblocks)) if j not in used)
                meta = (("p", p), ("S", len(sc)), ("T", len(dblocks)), ("iso", iso))
                shape = BipartiteShape(tuple(sc), tuple(range(len(dblocks))), kept, meta)
                k = shape.key()
                if k in seen:
                    continue
                seen.add(k)
                yield shape


def _removal_sets(edges, removable, n_circles, cap):
    deg = Counter(c for c, _ in edges)

    def valid(rem):
        lost = Counter(c for c, _ in rem)
        return all(deg[c] - lost[c] >= 1 for c in deg)

    if 2 ** len(removable) <= cap:
        for k in range(len(removable) + 1):
            for rem in combinations(removable, k):
                if valid(rem):
                    yield set(rem)
        return
    # maximal valid sets: circles whose edges are all removable keep exactly one
    fixed = [e for e in edges if e not in set(removable)]
    safe = {c for c, _ in fixed}
    at_risk = sorted({c for c, _ in removable if c not in safe})
    options = [[e for e in removable if e[0] == c] for c in at_risk]
    for keep in product(*options):
        yield set(removable) - set(keep)
    yield set()


def enumerate_admissible(p, r=None, cycle_lengths=None):
    """All admissible shapes for the given cycle profile, deduplicated."""
    if cycle_lengths is None:
        if r is None or r != 1:
            raise ValueError("give cycle_lengths when r > 1")
        cycle_lengths = (p,)
    if sum(cycle_lengths) != p or (r is not None and len(cycle_lengths) != r):
        raise ValueError("cycle lengths must sum to p and number r")
    if p > 6:
        raise SizeError("exhaustive enumeration is limited to p <= 6")
    return list(admissible_merges(tuple(cycle_lengths)))


# -------------------------------------------------------------------- flows

@dataclass
class FlowResult:
    value: float
    witness: dict = field(default_factory=dict)     # vertex -> throughput
    separator: tuple = ()                           # vertices of a min separator
    separator_weight: float = 0.0


def _rational_weight(n, d):
    w = diamond_weight(n, d)
    f = Fraction(w).limit_denominator(1000)
    if abs(float(f) - w) < 1e-12:
        return f
    return None


def max_flow_separator(shape, n, d, weight=None):
    """Maximum L-to-R flow with vertex capacities (circle 1, diamond log_n d).

    Node splitting turns vertex capacities into arc capacities; rational
    weights are scaled to integers so the flow is exact. The separator is
    read off the residual graph of the maximum flow.
    """
    w = _rational_weight(n, d) if weight is None else Fraction(weight).limit_denominator(10 ** 6)
    if w is None:
        w = Fraction(diamond_weight(n, d)).limit_denominator(10 ** 9)
    scale = w.denominator
    cap_c, cap_d = scale, w.numerator
    verts = [("c", c) for c, _ in shape.circles] + [("d", t) for t in shape.diamonds]
    idx = {v: i for i, v in enumerate(verts)}
    N = len(verts)
    src, snk = 2 * N, 2 * N + 1
    big = (cap_c + cap_d) * (N + 1) * 4
    rows, cols, caps = [], [], []

    def arc(a, b, c):
        rows.append(a)
        cols.append(b)
        caps.append(c)

    for v in verts:
        i = idx[v]
        arc(2 * i, 2 * i + 1, cap_c if v[0] == "c" else cap_d)
    for c, t, _ in shape.edges:
        a, b = idx[("c", c)], idx[("d", t)]
        arc(2 * a + 1, 2 * b, big)
        arc(2 * b + 1, 2 * a, big)
    for c in shape.L:
        arc(src, 2 * idx[("c", c)], big)
    for c in shape.R:
        arc(2 * idx[("c", c)] + 1, snk, big)
    size = 2 * N + 2
    # merge duplicate arcs
    agg = Counter()
    for a, b, c in zip(rows, cols, caps):
        agg[(a, b)] += c
    keys = list(agg)
    mat = csr_array((np.array([agg[k] for k in keys], dtype=np.int64),
                     (np.array([k[0] for k in keys]), np.array([k[1] for k in keys]))),
                    shape=(size, size))
    res = maximum_flow(mat, src, snk)
    flow = res.flow.toarray() if hasattr(res.flow, "toarray") else np.asarray(res.flow)
    value = Fraction(int(res.flow_value), scale)
    # residual reachability from the source
    cap = mat.toarray()
    resid = cap - flow
    reach = set(breadth_first_order(csr_array((resid > 0).astype(np.int8)), src,
                                    return_predecessors=False).tolist())
    sep = tuple(v for v in verts if 2 * idx[v] in reach and 2 * idx[v] + 1 not in reach)
    sep_w = sum(Fraction(1) if v[0] == "c" else w for v in sep)
    witness = {v: float(Fraction(int(flow[2 * idx[v], 2 * idx[v] + 1]), scale)) for v in verts}
    return FlowResult(float(value), witness, sep, float(sep_w))


def flow_lemma_rhs(shape, n, d, cycle_lengths):
    info = shape.info
    w = diamond_weight(n, d)
    p = sum(cycle_lengths)
    return (sum(l // 2 for l in cycle_lengths) + w * info["iso"]
            - w * (p - info["T"]) - 1.5 * (p - info["S"]))


def predicted_norm_bound(shape, n, d):
    """n^{(w(V) - w(S_min) + w(V_iso))/2} and the polylog prefactor separately."""
    w = diamond_weight(n, d)
    wV = len(shape.circles) + w * len(shape.diamonds)
    fr = max_flow_separator(shape, n, d)
    w_iso = len(shape.isolated_circles()) + w * len(shape.isolated_diamonds())
    exponent = (wV - fr.value + w_iso) / 2
    prefactor = (max(wV, 1.0) * log(n)) ** shape.total_order()
    return {"value": float(n) ** exponent, "exponent": exponent,
            "prefactor": prefactor, "flow": fr.value,
            "isolated_diamond_factor_formula": float(n) ** w,
            "isolated_diamond_factor_prose": float(d)}
