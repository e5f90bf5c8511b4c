import numpy as np
import pytest

from ssvcert.errors import InvalidShapeError, SizeError
from ssvcert.graphmatrix import (BipartiteShape, admissible_merges, base_graph, build_graph_matrix,
                                 diamond_weight, enumerate_admissible, flow_lemma_rhs,
                                 graph_matrix_tensor, hermite_decomposition, max_flow_separator,
                                 parse_shape, predicted_norm_bound, serialize_shape)
from ssvcert.graphpoly import cycle_graph, graphs_from_partitions
from ssvcert.matrep import build_matrix_representation


def single_diamond():
    return BipartiteShape(((0, "L"), (1, "R")), (0,), ((0, 0, 1), (1, 0, 1)))


def test_shape_validation():
    with pytest.raises(InvalidShapeError):
        BipartiteShape(((0, "L"),), (0,), ((0, 1, 1),))
    with pytest.raises(InvalidShapeError):
        BipartiteShape(((0, "L"),), (0,), ((0, 0, 0),))


def test_shape_round_trip():
    for sh in list(admissible_merges((3,)))[:20]:
        assert parse_shape(serialize_shape(sh)).key() == sh.key()


def test_single_diamond_matrix_is_gram_off_diagonal():
    X = np.random.default_rng(0).standard_normal((6, 3))
    M = build_graph_matrix(single_diamond(), X)
    G = X @ X.T
    np.fill_diagonal(G, 0)
    assert np.allclose(M, G)


def test_mobius_and_direct_agree():
    X = np.random.default_rng(1).standard_normal((5, 4))
    sh = BipartiteShape(((0, "L"), (1, "R")), (0, 1), ((0, 0, 1), (1, 0, 1), (0, 1, 2), (1, 1, 1)))
    a = graph_matrix_tensor(sh, X, "mobius")
    b = graph_matrix_tensor(sh, X, "direct")
    assert np.allclose(a, b)


def test_hermite_decomposition_reproduces_raw_matrix():
    X = np.random.default_rng(2).standard_normal((5, 2))
    g = cycle_graph([2])
    L, R = (0,), (1,)
    total = sum(c * build_graph_matrix(sh, X) for c, sh in hermite_decomposition(g, L, R))
    raw = build_matrix_representation(g, L, R, X).dense()
    assert np.allclose(total, raw)


def test_base_graph_flow_equals_half_lengths():
    for cl in [(2,), (3,), (4,), (2, 2), (3, 1), (5,), (3, 3), (2, 2, 2)]:
        for n, d in [(8, 4), (16, 4), (64, 8)]:
            assert max_flow_separator(base_graph(cl), n, d).value == sum(l // 2 for l in cl)


def test_single_diamond_flow_is_weight():
    fr = max_flow_separator(single_diamond(), 16, 4)
    assert fr.value == pytest.approx(0.5)
    assert fr.separator_weight == pytest.approx(0.5)


def test_flow_equals_separator_weight():
    for sh in enumerate_admissible(4, 1)[:40]:
        fr = max_flow_separator(sh, 8, 4)
        assert fr.value == pytest.approx(fr.separator_weight)


def test_flow_lemma_small_sweep():
    for cl in [(3,), (4,), (2, 2)]:
        for sh in admissible_merges(cl):
            for n, d in [(8, 4), (64, 8)]:
                assert max_flow_separator(sh, n, d).value >= flow_lemma_rhs(sh, n, d, cl) - 1e-9


def test_enumeration_caps():
    assert len(enumerate_admissible(4, 1)) == 82
    with pytest.raises(SizeError):
        enumerate_admissible(7, 1)


def test_predicted_bound_fields():
    out = predicted_norm_bound(single_diamond(), 16, 4)
    assert out["flow"] == pytest.approx(0.5)
    assert out["value"] == pytest.approx(16 ** out["exponent"])
    assert diamond_weight(16, 4) == pytest.approx(0.5)


def test_dense_cap():
    sh = BipartiteShape(tuple((i, "L") for i in range(5)), (0,), tuple((i, 0, 1) for i in range(5)))
    with pytest.raises(SizeError):
        graph_matrix_tensor(sh, np.zeros((40, 2)))
