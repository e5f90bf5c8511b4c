import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssvcert.errors import SizeError
from ssvcert.graphpoly import (all_pieces, canonical_key, contract_all, cycle_graph, efron_stein_piece,
                               eval_graph_poly, falling_factorial, graphs_from_partitions,
                               integer_partitions, is_isomorphic, parse_graph, serialize_graph,
                               set_partitions, _labelings)


def bell(n):
    return sum(1 for _ in set_partitions(range(n)))


def test_bell_numbers():
    assert [bell(n) for n in range(7)] == [1, 1, 2, 5, 15, 52, 203]


def test_four_cycle_merges():
    gs = graphs_from_partitions(4, 1)
    assert len(gs) == 15
    assert len({canonical_key(g) for g in gs}) < 15


def test_integer_partitions():
    assert sorted(integer_partitions(6, 2)) == [(3, 3), (4, 2), (5, 1)]


def test_cycle_graph_structure():
    g = cycle_graph([3])
    assert g.p == 3 and g.r == 1 and len(g.vertices) == 3
    assert all(g.degree(v) == 2 for v in g.vertices)
    loop = cycle_graph([1])
    assert loop.loops(0) == 1 and loop.reduced_degree(0) == 0


def test_serialization_round_trip():
    for g in graphs_from_partitions(4, 2):
        h = parse_graph(serialize_graph(g))
        assert h == g


def test_isomorphism_relabeling():
    g = cycle_graph([4], [(0, 2), (1,), (3,)])
    h = cycle_graph([4], [(1, 3), (0,), (2,)])
    assert is_isomorphic(g, h)
    assert not is_isomorphic(g, cycle_graph([4]))


def test_trace_identity_two_cycle():
    # P over all merges of a 2-cycle = tr(M^2) with M = sum_i w_i x_i x_i^T
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 3))
    w = np.array([1, 1, 0, 1, 0, 1.0])
    M = (X.T * w) @ X
    total = sum(eval_graph_poly(g, w, X) for g in graphs_from_partitions(2, 1))
    assert abs(total - np.trace(M @ M)) < 1e-9 * np.trace(M @ M)


def test_contract_single_loop():
    # E ||x||^2 = d
    g = cycle_graph([1])
    terms = contract_all(g, (), 5)
    assert len(terms) == 1 and terms[0][0] == 5


def test_subset_piece_of_empty_set_is_expectation():
    # E over all vertices of P_G for the 2-cycle on two vertices: m(m-1) d
    g = cycle_graph([2])
    rng = np.random.default_rng(1)
    X = rng.standard_normal((5, 3))
    w = np.ones(5)
    val = efron_stein_piece(g, (), w, X, mode="subset")
    assert abs(val - 5 * 4 * 3) < 1e-9


def test_labeling_cap():
    with pytest.raises(SizeError):
        _labelings(list(range(200)), 5)


def test_falling_factorial():
    assert falling_factorial(5, 2) == 20 and falling_factorial(3, 4) == 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(2, 1), (3, 1), (3, 2), (4, 2)]))
def test_pieces_sum_to_polynomial(seed, pr):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((6, 2))
    w = (rng.random(6) < 0.7).astype(float)
    for g in graphs_from_partitions(*pr)[:6]:
        pieces = all_pieces(g, w, X)
        P = eval_graph_poly(g, w, X)
        assert abs(sum(pieces.values()) - P) <= 1e-8 * max(1.0, abs(P))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_wick_and_isserlis_routes_agree(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 2))
    w = (rng.random(5) < 0.8).astype(float)
    for g in graphs_from_partitions(3, 1):
        for S in [(), g.vertices[:1], g.vertices]:
            a = efron_stein_piece(g, S, w, X, method="wick")
            b = efron_stein_piece(g, S, w, X, method="isserlis")
            assert abs(a - b) <= 1e-8 * max(1.0, abs(a))
