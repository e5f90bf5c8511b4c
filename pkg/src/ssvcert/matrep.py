"""Matrix representations of graph polynomials.

Rows are indexed by sample labels of the L vertices and columns by labels of
the R vertices; entries vanish unless all labels are distinct. Each vertex v
carries the tensor

    psi_v[i] = |x_i|^{2 s_v} x_i^{(x) k_v}            (raw)
    psi_v[i] = |x_i|^{2 s_v} x_i^{(x) k_v} - E[...]   (equal_V, centered)

where s_v counts self-loops and k_v the other incidences. Every non-loop edge
contracts one slot of each endpoint. Because the graph polynomial is
multilinear in the per-vertex tensors, centering every tensor is exactly the
inclusion-exclusion that defines the top Efron-Stein piece.

Large matrices are never formed: products with a vector are einsum networks
whose label distinctness across the two sides is restored by
inclusion-exclusion over partial matchings of L and R positions.
"""
from itertools import combinations, permutations

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import SizeError
from .gaussian import matchings_of, wick_ratio

DENSE_ENTRIES = 4_000_000
MAX_SIDE = 20_000_000
MAX_TENSOR = 60_000_000
NORM_INFLATION = 1.01


def expected_vertex_tensor(k, s, d):
    """E[|g|^{2s} g^{(x) k}] as a dense (d,)*k array."""
    if k % 2:
        return np.zeros((d,) * k)
    if k == 0:
        return np.array(float(wick_ratio(0, 2 * s, d)))
    out = np.zeros((d,) * k)
    eye = np.eye(d)
    for m in matchings_of(k):
        subs = []
        for a, b in m:
            subs += [eye, [a, b]]
        out += np.einsum(*subs, list(range(k)))
    return wick_ratio(k, 2 * s, d) * out


def distinct_mask(n, k):
    """Boolean (n,)*k array, True where all k labels differ."""
    if k <= 1:
        return None
    idx = np.indices((n,) * k)
    mask = np.ones((n,) * k, dtype=bool)
    for a, b in combinations(range(k), 2):
        mask &= idx[a] != idx[b]
    return mask


def cross_matchings(nl, nr):
    """Partial matchings between range(nl) and range(nr), as tuples of pairs."""
    out = []
    for size in range(min(nl, nr) + 1):
        for ls in combinations(range(nl), size):
            for rs in permutations(range(nr), size):
                out.append(tuple(zip(ls, rs)))
    return out


def swap_pairing(g, L, R):
    """A pairing L[i] <-> R[j] whose swap is a multigraph automorphism, or None."""
    if len(L) != len(R):
        return None
    edges = sorted(g.edges())
    for perm in permutations(R):
        sw = dict(zip(L, perm))
        sw.update({b: a for a, b in zip(L, perm)})
        mapped = sorted(tuple(sorted((sw[a], sw[b]))) for a, b in edges)
        if mapped == edges:
            return perm
    return None


class MatrixRep:
    """Handle for the matrix representation of a graph polynomial.

    mode 'raw' gives P_G entries and 'equal_V' the top Efron-Stein piece.
    """

    def __init__(self, g, L, R, X, mode="raw"):
        L, R = tuple(L), tuple(R)
        if not L or not R:
            raise ValueError("both sides of the bipartition must be non-empty")
        if sorted(L + R) != list(g.vertices):
            raise ValueError("L and R must partition the vertex set")
        X = np.asarray(X, dtype=float)
        self.g, self.mode = g, mode
        self.n, self.d = X.shape
        n, d = self.n, self.d
        if n ** max(len(L), len(R)) > MAX_SIDE:
            raise SizeError(f"matrix side n^{max(len(L), len(R))} exceeds {MAX_SIDE}")
        pair = swap_pairing(g, L, R)
        if pair is not None:
            R = tuple(pair)
        self.L, self.R, self.symmetric = L, R, pair is not None
        t = np.einsum("ij,ij->i", X, X)
        verts = g.vertices
        # index ids: samples first, then one id per non-loop edge
        sample_id = {v: i for i, v in enumerate(verts)}
        slots = {v: [] for v in verts}
        eid = len(verts)
        for a, b in g.edges():
            if a == b:
                continue
            slots[a].append(eid)
            slots[b].append(eid)
            eid += 1
        self.sample_id = sample_id
        self.tensors, self.subs = [], []
        for v in verts:
            k = len(slots[v])
            s = g.loops(v)
            if n * d ** k > MAX_TENSOR:
                raise SizeError(f"vertex tensor of size {n * d ** k} exceeds {MAX_TENSOR}")
            T = t ** s
            for _ in range(k):
                T = T[..., None] * X.reshape((n,) + (1,) * (T.ndim - 1) + (d,))
            if mode == "equal_V":
                T = T - expected_vertex_tensor(k, s, d)[None]
            elif mode != "raw":
                raise ValueError(f"unknown mode {mode}")
            self.tensors.append(T)
            self.subs.append([sample_id[v]] + slots[v])
        self.shape = (n ** len(L), n ** len(R))
        self._mask_l = distinct_mask(n, len(L))
        self._mask_r = distinct_mask(n, len(R))
        self._paths = {}

    # -- contraction helpers

    def _network(self, out_side, in_side, match):
        """einsum arguments mapping a tensor over in_side labels to out_side."""
        rename = {self.sample_id[in_side[j]]: self.sample_id[out_side[i]] for i, j in match}
        args = []
        for T, sub in zip(self.tensors, self.subs):
            args += [T, [rename.get(x, x) for x in sub]]
        in_sub = [rename.get(self.sample_id[v], self.sample_id[v]) for v in in_side]
        out_sub = [self.sample_id[v] for v in out_side]
        return args, in_sub, out_sub

    def _apply(self, vec, out_side, in_side, mask_in, mask_out):
        n = self.n
        V = vec.reshape((n,) * len(in_side))
        if mask_in is not None:
            V = V * mask_in
        total = np.zeros((n,) * len(out_side))
        for match in cross_matchings(len(out_side), len(in_side)):
            args, in_sub, out_sub = self._network(out_side, in_side, match)
            args = args + [V, in_sub, out_sub]
            key = (out_side, match)
            if key not in self._paths:
                nops = len(args) // 2
                self._paths[key] = np.einsum_path(
                    *args, optimize="optimal" if nops <= 6 else "greedy")[0]
            total += (-1) ** len(match) * np.einsum(*args, optimize=self._paths[key])
        if mask_out is not None:
            total = total * mask_out
        return total.ravel()

    def matvec(self, v):
        return self._apply(np.asarray(v, dtype=float), self.L, self.R, self._mask_r, self._mask_l)

    def rmatvec(self, u):
        return self._apply(np.asarray(u, dtype=float), self.R, self.L, self._mask_l, self._mask_r)

    def dense(self):
        rows, cols = self.shape
        if rows * cols > DENSE_ENTRIES:
            raise SizeError(f"dense matrix with {rows * cols} entries exceeds {DENSE_ENTRIES}")
        n = self.n
        args = []
        for T, sub in zip(self.tensors, self.subs):
            args += [T, sub]
        out = [self.sample_id[v] for v in self.L + self.R]
        full = np.einsum(*args, out, optimize="greedy")
        mask = distinct_mask(n, len(out))
        if mask is not None:
            full = full * mask
        return full.reshape(rows, cols)

    def quadratic_form(self, wl, wr=None):
        wr = wl if wr is None else wr
        n = self.n
        a = _tensor_power(wl, len(self.L))
        b = _tensor_power(wr, len(self.R))
        return float(a @ self.matvec(b))

    def norm(self, tol=1e-6):
        """Operator norm; exact when dense, Lanczos times 1.01 otherwise."""
        rows, cols = self.shape
        if rows * cols <= DENSE_ENTRIES and max(rows, cols) <= 4096:
            M = self.dense()
            if not M.any():
                return 0.0
            if self.symmetric:
                return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (M + M.T)))))
            return float(np.linalg.norm(M, 2))
        v0 = np.random.default_rng(0).standard_normal(min(rows, cols) if not self.symmetric else rows)
        if self.symmetric:
            op = LinearOperator((rows, rows), matvec=self.matvec, dtype=float)
            val = abs(eigsh(op, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False)[0])
        elif rows <= cols:
            op = LinearOperator((rows, rows), matvec=lambda u: self.matvec(self.rmatvec(u)), dtype=float)
            val = np.sqrt(max(eigsh(op, k=1, which="LA", tol=tol, v0=v0, return_eigenvectors=False)[0], 0.0))
        else:
            op = LinearOperator((cols, cols), matvec=lambda u: self.rmatvec(self.matvec(u)), dtype=float)
            val = np.sqrt(max(eigsh(op, k=1, which="LA", tol=tol, v0=v0, return_eigenvectors=False)[0], 0.0))
        return float(val) * NORM_INFLATION


def _tensor_power(w, k):
    out = np.ones(1)
    for _ in range(k):
        out = np.multiply.outer(out, w).ravel()
    return out


def build_matrix_representation(g, L, R, X, es_mode="raw"):
    return MatrixRep(g, L, R, X, mode=es_mode)


# ----------------------------------------------------------------- L/R split

def provenance_bipartition(g):
    """L/R split from the cycle provenance.

    Each cycle alternates its slots between the two sides; an odd cycle puts
    its last two slots on the same side, and odd cycles alternate which side
    receives the extra slot so the sides stay balanced (ties toward L). A
    merged vertex sits in L if any of its slots does. If a side ends up empty
    one vertex is moved across, which keeps the split valid.
    """
    side = {}
    extra_l = 0
    for c in g.cycles:
        l = len(c)
        if l % 2 == 0:
            for i, s in enumerate(c):
                side[s] = "L" if i % 2 == 0 else "R"
            continue
        # the majority side of an odd cycle is the one of its last two slots
        major = "L" if extra_l <= 0 else "R"
        minor = "R" if major == "L" else "L"
        for i, s in enumerate(c):
            side[s] = minor if i % 2 == 0 else major
        if l == 1:
            side[c[0]] = major
        else:
            side[c[-1]] = major
        extra_l += 1 if major == "L" else -1
    L, R = [], []
    for v, block in zip(g.vertices, g.merge_partition):
        (L if any(side[s] == "L" for s in block) else R).append(v)
    return _repair(g, L, R)


def balanced_bipartition(g):
    """Balanced split maximizing the number of edges across (ties toward L)."""
    V = list(g.vertices)
    k = len(V)
    A = g.adjacency(V)
    best, best_val = None, None
    for Lset in combinations(range(k), (k + 1) // 2):
        inside = set(Lset)
        cut = sum(A[a, b] for a in range(k) for b in range(k) if (a in inside) != (b in inside))
        if best_val is None or cut > best_val:
            best, best_val = Lset, cut
    L = [V[i] for i in best]
    R = [v for v in V if v not in L]
    return _repair(g, L, R)


def _repair(g, L, R):
    if len(g.vertices) >= 2:
        if not R:
            R = [L.pop()]
        elif not L:
            L = [R.pop(0)]
    return tuple(L), tuple(R)
