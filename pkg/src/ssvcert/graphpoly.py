"""Graph polynomials of merged cycles and their Efron-Stein pieces.

A graph is stored with provenance: a list of cycles over edge "slots" and a
map from slots to vertex ids. Slot s of a cycle (s_0, ..., s_{l-1}) is joined
to the next slot, so a cycle of length l contributes l edges and a 1-cycle is
a self-loop. Merging vertices never changes the cycles, only the slot map.

For data x_1..x_n and a 0/1 selector w, the graph polynomial is

    P_G(w, x) = sum over injective f: V -> [n] of
                prod_v w_f(v) * prod_{edges ab} <x_f(a), x_f(b)>.
"""
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations, product
from math import prod

import numpy as np

from .errors import SizeError
from .gaussian import gaussian_moment, wick_ratio

MAX_LABELINGS = 10_000_000


@dataclass(frozen=True)
class MergedCycleGraph:
    cycles: tuple          # tuple of tuples of slot ids
    vertex_of: tuple       # sorted tuple of (slot, vertex) pairs

    @property
    def slot_map(self):
        return dict(self.vertex_of)

    @property
    def p(self):
        return sum(len(c) for c in self.cycles)

    @property
    def r(self):
        return len(self.cycles)

    @property
    def cycle_lengths(self):
        return tuple(len(c) for c in self.cycles)

    @property
    def vertices(self):
        return tuple(sorted(set(v for _, v in self.vertex_of)))

    @property
    def merge_partition(self):
        blocks = {}
        for s, v in self.vertex_of:
            blocks.setdefault(v, []).append(s)
        return tuple(tuple(sorted(blocks[v])) for v in sorted(blocks))

    def edges(self):
        """Edge list (a, b) with a <= b; parallel edges repeat."""
        vm = self.slot_map
        out = []
        for c in self.cycles:
            for i, s in enumerate(c):
                a, b = vm[s], vm[c[(i + 1) % len(c)]]
                out.append((min(a, b), max(a, b)))
        return out

    def degree(self, v):
        return 2 * sum(1 for _, u in self.vertex_of if u == v)

    def loops(self, v):
        return sum(1 for a, b in self.edges() if a == b == v)

    def reduced_degree(self, v):
        return self.degree(v) - 2 * self.loops(v)

    def adjacency(self, order=None):
        order = list(self.vertices) if order is None else list(order)
        idx = {v: i for i, v in enumerate(order)}
        A = np.zeros((len(order), len(order)), dtype=int)
        for a, b in self.edges():
            if a == b:
                A[idx[a], idx[a]] += 1
            else:
                A[idx[a], idx[b]] += 1
                A[idx[b], idx[a]] += 1
        return A

    def edge_key(self):
        return tuple(sorted(Counter(self.edges()).items()))

    def relabeled(self):
        """Same graph with vertices renamed 0..k-1 in sorted order."""
        ren = {v: i for i, v in enumerate(self.vertices)}
        return make_graph(self.cycles, {s: ren[v] for s, v in self.vertex_of})


def make_graph(cycles, vertex_of):
    cycles = tuple(tuple(c) for c in cycles if len(c))
    return MergedCycleGraph(cycles, tuple(sorted(dict(vertex_of).items())))


def cycle_graph(lengths, blocks=None):
    """Disjoint cycles of the given lengths, optionally merged by slot blocks."""
    cycles, s = [], 0
    for l in lengths:
        cycles.append(tuple(range(s, s + l)))
        s += l
    if blocks is None:
        blocks = [(i,) for i in range(s)]
    vm = {}
    for b, block in enumerate(blocks):
        for slot in block:
            vm[slot] = b
    return make_graph(cycles, vm)


def set_partitions(items):
    """All set partitions of a list (restricted growth strings)."""
    items = list(items)
    n = len(items)
    if n == 0:
        yield []
        return
    rgs = [0] * n

    def rec(i, m):
        if i == n:
            blocks = [[] for _ in range(m + 1)]
            for it, b in zip(items, rgs):
                blocks[b].append(it)
            yield [tuple(b) for b in blocks]
            return
        for b in range(m + 2):
            rgs[i] = b
            yield from rec(i + 1, max(m, b))

    rgs[0] = 0
    yield from rec(1, 0)


def integer_partitions(p, r, maxpart=None):
    if maxpart is None:
        maxpart = p
    if r == 0:
        if p == 0:
            yield ()
        return
    for first in range(min(p, maxpart), 0, -1):
        if first * r < p:
            break
        for rest in integer_partitions(p - first, r - 1, first):
            yield (first,) + rest


def graphs_from_partitions(p, r=1):
    """All vertex merges of r disjoint cycles with total length p.

    For r = 1 one graph per set partition of the p slots is returned (no
    deduplication, so p = 4 gives 15 graphs). For r > 1 the union over all
    cycle-length profiles is deduplicated up to multigraph isomorphism.
    """
    if p < 1 or r < 1 or r > p:
        raise ValueError("need 1 <= r <= p")
    if r == 1:
        return [cycle_graph([p], blocks) for blocks in set_partitions(range(p))]
    out, seen = [], set()
    for lengths in integer_partitions(p, r):
        for blocks in set_partitions(range(p)):
            g = cycle_graph(lengths, blocks)
            key = canonical_key(g)
            if key not in seen:
                seen.add(key)
                out.append(g)
    return out


# ---------------------------------------------------------------- isomorphism

def _refine(A, colors):
    n = len(colors)
    while True:
        sigs = [(colors[v], tuple(sorted((colors[u], A[v][u]) for u in range(n) if A[v][u])))
                for v in range(n)]
        ranks = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [ranks[s] for s in sigs]
        if len(set(new)) == len(set(colors)):
            return new
        colors = new


def _canon(A, colors, init):
    colors = _refine(A, colors)
    n = len(colors)
    if len(set(colors)) == n:
        order = sorted(range(n), key=lambda v: colors[v])
        return (tuple(init[v] for v in order),
                tuple(A[a][b] for a in order for b in order))
    cells = Counter(colors)
    target = min(c for c in cells if cells[c] > 1)
    best = None
    for v in range(n):
        if colors[v] != target:
            continue
        # individualize v: it sorts just before the rest of its cell
        c2 = [2 * c + (0 if (u == v or c != target) else 1) for u, c in enumerate(colors)]
        cert = _canon(A, c2, init)
        if best is None or cert < best:
            best = cert
    return best


def canonical_form(A, marks=None):
    """Canonical certificate of a small multigraph with optional vertex marks.

    A is a symmetric integer matrix (diagonal = number of loops). Two inputs
    get the same certificate iff they are isomorphic as marked multigraphs.
    """
    A = [list(map(int, row)) for row in np.asarray(A)]
    n = len(A)
    if marks is None:
        marks = [0] * n
    init = [(marks[v], A[v][v], sum(A[v])) for v in range(n)]
    ranks = {s: i for i, s in enumerate(sorted(set(init)))}
    colors = [ranks[s] for s in init]
    return (n,) + _canon(A, colors, init)


def canonical_key(g, marked=()):
    order = g.vertices
    marks = [1 if v in marked else 0 for v in order]
    return canonical_form(g.adjacency(order), marks)


def is_isomorphic(g, h):
    return canonical_key(g) == canonical_key(h)


# ------------------------------------------------------------ serialization

def serialize_graph(g):
    """Line format: 'p r', cycles as slot lists, then 'slot:vertex' pairs."""
    lines = [f"{g.p} {g.r}"]
    lines.append(" | ".join(" ".join(map(str, c)) for c in g.cycles))
    lines.append(" ".join(f"{s}:{v}" for s, v in g.vertex_of))
    return "\n".join(lines)


def parse_graph(text):
    lines = [l.strip() for l in text.strip().splitlines()]
    p, r = map(int, lines[0].split())
    cycles = [tuple(map(int, part.split())) for part in lines[1].split("|")]
    vm = {}
    for tok in lines[2].split():
        s, v = tok.split(":")
        vm[int(s)] = int(v)
    g = make_graph(cycles, vm)
    if g.p != p or g.r != r:
        raise ValueError("header does not match body")
    return g


# -------------------------------------------------------------- contraction

@dataclass(frozen=True)
class ContractionTerm:
    wick: float
    graph: MergedCycleGraph
    removed: int = 1

    def factor(self, m):
        # Wick constant times the number of free selected labels for the
        # removed vertex: m minus the labels already used by the survivors
        return self.wick * (m - len(self.graph.vertices))


def _arcs(cycle, is_u):
    """Split a cycle into maximal runs of non-u slots and count u-u edges."""
    l = len(cycle)
    loops = sum(1 for i in range(l) if is_u(cycle[i]) and is_u(cycle[(i + 1) % l]))
    if not any(is_u(s) for s in cycle):
        return None, 0
    start = next(i for i in range(l) if is_u(cycle[i]))
    arcs, cur = [], []
    for k in range(1, l + 1):
        s = cycle[(start + k) % l]
        if is_u(s):
            if cur:
                arcs.append(tuple(cur))
                cur = []
        else:
            cur.append(s)
    return arcs, loops


def _glue(arcs, matching):
    partner = {}
    for a, b in matching:
        partner[a] = b
        partner[b] = a
    used = set()
    cycles = []
    for i in range(len(arcs)):
        if i in used:
            continue
        seq = []
        arc, forward = i, True
        while arc not in used:
            used.add(arc)
            seq.extend(arcs[arc] if forward else arcs[arc][::-1])
            exit_end = (arc, 1) if forward else (arc, 0)
            nxt_arc, nxt_end = partner[exit_end]
            arc, forward = nxt_arc, nxt_end == 0
        cycles.append(tuple(seq))
    return cycles


def contract_vertex(g, u, d):
    """Integrate out the Gaussian vector at vertex u.

    Returns ContractionTerm objects whose Wick constants times graph
    polynomials on V minus u reproduce E_{x_u} of the edge product. Each
    non-loop incidence of u is an arc end; a perfect matching of the arc ends
    glues arcs into new cycles and the loops at u give the norm factor.
    """
    vm = g.slot_map
    is_u = lambda s: vm[s] == u
    kept, arcs, loops = [], [], 0
    for c in g.cycles:
        a, lp = _arcs(c, is_u)
        loops += lp
        if a is None:
            kept.append(c)
        else:
            arcs.extend(a)
    ends = [(i, e) for i in range(len(arcs)) for e in (0, 1)]
    k = len(ends)
    wick = wick_ratio(k, 2 * loops, d)
    new_vm = {s: v for s, v in vm.items() if v != u}
    if not new_vm:
        return [ContractionTerm(float(wick), make_graph((), {}))]
    terms = {}
    from .gaussian import perfect_matchings
    for m in perfect_matchings(ends):
        h = make_graph(kept + _glue(arcs, m), new_vm)
        key = h.edge_key()
        if key in terms:
            terms[key] = (terms[key][0] + wick, terms[key][1])
        else:
            terms[key] = (wick, h)
    return [ContractionTerm(float(c), h) for c, h in terms.values()]


def contract_all(g, keep, d):
    """Integrate out every vertex outside keep.

    Returns a list of (coefficient, graph on keep) with vertex ids kept.
    """
    keep = tuple(sorted(keep))
    return _contract_all(g, keep, d)


def _contract_all(g, keep, d):
    rest = [v for v in g.vertices if v not in keep]
    if not rest:
        return [(1.0, g)]
    u = rest[0]
    acc = {}
    for t in contract_vertex(g, u, d):
        for c, h in _contract_all(t.graph, keep, d):
            key = h.edge_key()
            if key in acc:
                acc[key] = (acc[key][0] + t.wick * c, acc[key][1])
            else:
                acc[key] = (t.wick * c, h)
    return [(c, h) for c, h in acc.values() if c != 0]


def falling_factorial(m, k):
    out = 1
    for i in range(k):
        out *= m - i
    return out


# --------------------------------------------------------------- evaluation

def _labelings(labels, k):
    count = falling_factorial(len(labels), k)
    if count > MAX_LABELINGS:
        raise SizeError(f"{count} injective labelings exceed the cap {MAX_LABELINGS}")
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    arr = np.fromiter((x for t in permutations(labels, k) for x in t),
                      dtype=np.int64, count=count * k)
    return arr.reshape(count, k)


def _edge_product(g, order, lab, gram):
    col = {v: i for i, v in enumerate(order)}
    val = np.ones(lab.shape[0])
    for a, b in g.edges():
        val = val * gram[lab[:, col[a]], lab[:, col[b]]]
    return val


def eval_graph_poly(g, w, X):
    """Brute-force graph polynomial over injective labelings of the support of w."""
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    gram = X @ X.T
    labels = np.flatnonzero(w)
    order = g.vertices
    lab = _labelings(labels, len(order))
    return float(np.sum(np.prod(w[lab], axis=1) * _edge_product(g, order, lab, gram)))


def _subset_piece_wick(g, S, w, X, d):
    w = np.asarray(w, dtype=float)
    if not np.all((w == 0) | (w == 1)):
        raise ValueError("the closed form needs a 0/1 selector")
    m = int(w.sum())
    S = tuple(sorted(S))
    free = len(g.vertices) - len(S)
    ff = falling_factorial(m - len(S), free)
    if ff == 0:
        return 0.0
    total = 0.0
    for c, h in contract_all(g, S, d):
        if not S:
            total += c
        else:
            total += c * eval_graph_poly(h, w, X)
    return ff * total


@lru_cache(maxsize=None)
def _isserlis_table(edges, S, k, d):
    """Coordinate assignments with nonzero Gaussian weight for the free vertices.

    edges is a tuple of (a, b) over vertex positions 0..k-1; S are the
    positions kept fixed. Returns (assignments, weights).
    """
    assigns, weights = [], []
    for coords in product(range(d), repeat=len(edges)):
        cnt = Counter()
        for (a, b), c in zip(edges, coords):
            if a not in S:
                cnt[(a, c)] += 1
            if b not in S:
                cnt[(b, c)] += 1
        wt = 1.0
        for e in cnt.values():
            wt *= gaussian_moment(e)
            if wt == 0:
                break
        if wt:
            assigns.append(coords)
            weights.append(wt)
    return np.array(assigns, dtype=np.int64).reshape(-1, len(edges)), np.array(weights)


def _subset_piece_isserlis(g, S, w, X, d):
    """Same quantity by coordinate-wise Isserlis sums, independent of contraction."""
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    order = g.vertices
    pos = {v: i for i, v in enumerate(order)}
    edges = tuple((pos[a], pos[b]) for a, b in g.edges())
    Spos = frozenset(pos[v] for v in S)
    assigns, weights = _isserlis_table(edges, Spos, len(order), d)
    labels = np.flatnonzero(w)
    lab = _labelings(labels, len(order))
    wprod = np.prod(w[lab], axis=1)
    total = np.zeros(lab.shape[0])
    for coords, wt in zip(assigns, weights):
        val = np.full(lab.shape[0], wt)
        for (a, b), c in zip(edges, coords):
            if a in Spos:
                val = val * X[lab[:, a], c]
            if b in Spos:
                val = val * X[lab[:, b], c]
        total += val
    return float(np.sum(wprod * total))


def efron_stein_piece(g, S, w, X, mode="exact", method="wick"):
    """Efron-Stein piece of the graph polynomial for vertex subset S.

    mode 'subset' gives the conditional expectation keeping the vertices of S
    (averaging the Gaussian vectors on the other vertices); mode 'exact' is
    the Mobius inversion sum_{T in S} (-1)^{|S - T|} of subset pieces.
    method 'wick' contracts vertices symbolically; method 'isserlis' sums
    coordinate assignments by brute force.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    S = tuple(sorted(S))
    if any(v not in g.vertices for v in S):
        raise ValueError("S must be a subset of the vertices")
    fn = _subset_piece_wick if method == "wick" else _subset_piece_isserlis
    if mode == "subset":
        return fn(g, S, w, X, d)
    total = 0.0
    for k in range(len(S) + 1):
        for T in _subsets_of_size(S, k):
            total += (-1) ** (len(S) - k) * fn(g, T, w, X, d)
    return total


def _subsets_of_size(S, k):
    from itertools import combinations
    return combinations(S, k)


def all_pieces(g, w, X, method="wick"):
    """Exact pieces for every vertex subset, by Mobius inversion of subset pieces."""
    from itertools import combinations
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    V = g.vertices
    fn = _subset_piece_wick if method == "wick" else _subset_piece_isserlis
    sub = {}
    for k in range(len(V) + 1):
        for T in combinations(V, k):
            sub[T] = fn(g, T, w, X, d)
    out = {}
    for S in sub:
        total = 0.0
        for k in range(len(S) + 1):
            for T in combinations(S, k):
                total += (-1) ** (len(S) - k) * sub[T]
        out[S] = total
    return out
