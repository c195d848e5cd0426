import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import incidence, random_graph
from ohmgrad.errors import (
    ConnectivityError,
    InvalidGraphError,
    SelectorDuplicateError,
    SelectorOverlapError,
    SelectorRangeError,
)
from ohmgrad.graph import (
    CircuitGraph,
    bfs_spanning_tree,
    fundamental_cycle_matrix,
    make_selectors,
    read_graph,
    write_graph,
)


def test_triangle_cycle_matrix(triangle):
    cm = fundamental_cycle_matrix(triangle)
    np.testing.assert_array_equal(cm.A, [[1, 1, 1]])
    assert cm.n_cycles == 1 == triangle.n_cycles


def test_path_has_no_cycles():
    cm = fundamental_cycle_matrix(CircuitGraph(3, ((0, 1), (1, 2))))
    assert cm.A.shape == (0, 2)


def test_grid_cycle_matrix(grid3):
    cm = fundamental_cycle_matrix(grid3)
    assert cm.A.shape == (4, 12)
    assert np.abs(incidence(grid3) @ cm.A.T).max() == 0


def test_incidence_matches_oracle(grid3):
    np.testing.assert_array_equal(grid3.incidence_matrix(), incidence(grid3))


@pytest.mark.parametrize("n, edges, err", [
    (2, ((0, 0), (0, 1)), InvalidGraphError),
    (2, ((0, 1), (1, 0)), InvalidGraphError),
    (2, ((0, 1), (0, 1)), InvalidGraphError),
    (3, ((0, 3),), InvalidGraphError),
    (3, ((0, 1),), ConnectivityError),
])
def test_invalid_graphs(n, edges, err):
    with pytest.raises(err):
        CircuitGraph(n, edges)


def test_bfs_tree_is_deterministic(grid3):
    t = bfs_spanning_tree(grid3)
    assert len(t.tree_edges) == 8 and len(t.chords) == 4
    assert sorted(t.tree_edges + t.chords) == list(range(12))
    assert t == bfs_spanning_tree(grid3)


def test_graph_json_roundtrip(tmp_path, grid3):
    p = tmp_path / "g.json"
    write_graph(grid3, p)
    doc = json.loads(p.read_text())
    assert doc["nodes"] == 9 and doc["edges"][0] == [0, 1]
    assert read_graph(p) == grid3


def test_selectors_triangle(triangle):
    sel = make_selectors(triangle, [0], [2])
    np.testing.assert_array_equal(sel.P_i[:, 0], [1, 0, 0])
    np.testing.assert_array_equal(sel.P_o[:, 0], [0, 0, 1])
    assert sel.to_dict() == {"input": [0], "output": [2]}


@pytest.mark.parametrize("inp, out, err", [
    ([0], [0], SelectorOverlapError),
    ([5], [1], SelectorRangeError),
    ([-1], [1], SelectorRangeError),
    ([0, 0], [1], SelectorDuplicateError),
    ([0], [1, 1], SelectorDuplicateError),
])
def test_selector_errors(triangle, inp, out, err):
    with pytest.raises(err):
        make_selectors(triangle, inp, out)


@given(st.integers(0, 10_000))
def test_cycle_matrix_properties(seed):
    g, _ = random_graph(seed)
    cm = fundamental_cycle_matrix(g)
    C = g.n_edges - g.n_nodes + 1
    assert cm.A.shape == (C, g.n_edges)
    assert set(np.unique(cm.A)) <= {-1, 0, 1}
    if C:
        assert np.linalg.matrix_rank(cm.A) == C
        assert np.abs(incidence(g) @ cm.A.T).max() == 0
        chord_block = cm.A[:, list(cm.chords)]
        np.testing.assert_array_equal(chord_block, np.eye(C))


@given(st.integers(0, 10_000), st.data())
def test_selector_identity(seed, data):
    g, rng = random_graph(seed, max_chords=5)
    E = g.n_edges
    if E < 2:
        return
    perm = [int(i) for i in rng.permutation(E)]
    k = data.draw(st.integers(1, E - 1))
    sel = make_selectors(g, perm[:k], perm[k:])
    v = rng.standard_normal(E)
    np.testing.assert_array_equal(sel.P_o.T @ v, v[perm[k:]])
    np.testing.assert_array_equal(sel.P_i.T @ sel.P_i, np.eye(k))
