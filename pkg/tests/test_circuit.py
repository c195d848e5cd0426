import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import laplacian_solve, random_graph
from ohmgrad.circuit import (
    Circuit,
    apply_adjoint,
    assemble_projector,
    dissipation_energy,
    dissipation_energy_grad_r,
    io_map,
    lagrangian_solve,
    output_norm_bound,
    rank_report,
    read_circuit,
    solve_voltage_mode,
    write_circuit,
)
from ohmgrad.errors import ConditioningWarning, NumericalError
from ohmgrad.graph import CircuitGraph, fundamental_cycle_matrix, make_selectors
from ohmgrad.topology import grid_graph


def log_uniform(rng, n):
    return np.exp(rng.uniform(np.log(0.1), np.log(10.0), n))


def test_triangle_uniform_projector(triangle):
    np.testing.assert_allclose(Circuit(triangle).omega, np.full((3, 3), 1 / 3), atol=1e-15)


def test_triangle_series_loop(triangle):
    c = Circuit(triangle, [1, 2, 3])
    expected = np.array([1, 2, 3])[:, None] / 6 * np.ones((1, 3))
    np.testing.assert_allclose(c.omega, expected, atol=1e-15)
    np.testing.assert_allclose(c.omega @ c.omega, c.omega, atol=1e-15)
    st_ = solve_voltage_mode(c, [6, 0, 0])
    np.testing.assert_allclose(st_.v, [-1, -2, -3], atol=1e-14)
    np.testing.assert_allclose(st_.i, [-1, -1, -1], atol=1e-14)


def test_unit_source(triangle):
    st_ = Circuit(triangle).solve([1, 0, 0])
    np.testing.assert_allclose(st_.v, -np.ones(3) / 3)
    np.testing.assert_allclose(st_.i, -np.ones(3) / 3)


def test_path_graph_projector_is_zero():
    g = CircuitGraph(3, ((0, 1), (1, 2)))
    assert not Circuit(g).omega.any()
    np.testing.assert_array_equal(assemble_projector(fundamental_cycle_matrix(g).A, [1, 2]),
                                  np.zeros((2, 2)))


def test_zero_source(grid3, rng):
    c = Circuit(grid3, log_uniform(rng, 12))
    s = c.solve(np.zeros(12))
    assert not s.v.any() and not s.i.any()


@pytest.mark.parametrize("bad", [[1, 2], [1, np.nan, 1], [1, np.inf, 1]])
def test_solve_validates(triangle, bad):
    with pytest.raises(ValueError):
        Circuit(triangle).solve(bad)


@pytest.mark.parametrize("r", [[1, 0, 1], [1, -1, 1], [1, 20, 1], [1, 1]])
def test_resistance_validation(triangle, r):
    with pytest.raises(ValueError):
        Circuit(triangle, r)


def test_adjoint_modes(grid3, rng):
    c = Circuit(grid3, log_uniform(rng, 12))
    u = rng.standard_normal(12)
    np.testing.assert_allclose(apply_adjoint(c, u, "direct"), -c.omega.T @ u, rtol=1e-12)
    np.testing.assert_allclose(apply_adjoint(c, u, "voltage"), apply_adjoint(c, u), rtol=1e-9)
    assert not apply_adjoint(c, np.zeros(12)).any()
    with pytest.raises(ValueError):
        apply_adjoint(c, u, "bogus")


def test_adjoint_triangle(triangle):
    np.testing.assert_allclose(apply_adjoint(Circuit(triangle), [1, 0, 0]), -np.ones(3) / 3)


def test_dissipation_minimum_triangle(triangle):
    c = Circuit(triangle)
    s = np.array([1.0, 0, 0])
    v, _ = lagrangian_solve(c, s)
    np.testing.assert_allclose(v, -np.ones(3) / 3, atol=1e-14)
    assert v @ (v / c.r) == pytest.approx(1 / 3)
    assert dissipation_energy(c, np.zeros(3), np.zeros(3)) == 0


def test_dissipation_argmin(grid3, rng):
    c = Circuit(grid3, log_uniform(rng, 12))
    s = rng.standard_normal(12)
    v = c.solve(s).v
    best = dissipation_energy(c, v, s)
    # KVL-feasible perturbations live in the cut space (null space of A)
    _, _, vt = np.linalg.svd(c.A)
    cut = vt[c.A.shape[0]:]
    for _ in range(100):
        dv = cut.T @ rng.standard_normal(cut.shape[0])
        assert best <= dissipation_energy(c, v + dv, s) + 1e-12


def test_dissipation_grad_r_matches_fd(grid3, rng):
    r = log_uniform(rng, 12)
    c = Circuit(grid3, r)
    s, v = rng.standard_normal(12), rng.standard_normal(12)
    g = dissipation_energy_grad_r(c, v, s)
    fd = np.empty(12)
    for e in range(12):
        h = 1e-6 * r[e]
        rp, rm = r.copy(), r.copy()
        rp[e] += h
        rm[e] -= h
        fd[e] = (dissipation_energy(Circuit(grid3, rp, 1e-3, 1e3), v, s)
                 - dissipation_energy(Circuit(grid3, rm, 1e-3, 1e3), v, s)) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_io_map_examples(triangle, grid3):
    W = io_map(Circuit(triangle), make_selectors(triangle, [0], [2]))
    np.testing.assert_allclose(W, [[-1 / 3]])
    tree = CircuitGraph(4, ((0, 1), (1, 2), (1, 3)))
    assert not io_map(Circuit(tree), make_selectors(tree, [0], [2])).any()
    sel = make_selectors(grid3, [0, 1, 2, 3, 4], [5, 6, 7, 8, 9])
    rep = rank_report(Circuit(grid3), sel)
    assert rep.rank <= 4 and rep.holds
    io_map(Circuit(grid3), sel, check=True)


def test_io_map_selector_mismatch(triangle, grid3):
    with pytest.raises(ValueError):
        io_map(Circuit(grid3), make_selectors(triangle, [0], [1]))


def test_circuit_json_roundtrip(tmp_path, grid3, rng):
    c = Circuit(grid3, log_uniform(rng, 12))
    write_circuit(c, tmp_path / "c.json")
    c2 = read_circuit(tmp_path / "c.json")
    np.testing.assert_array_equal(c2.r, c.r)
    assert c2.graph == grid3 and (c2.r_min, c2.r_max) == (c.r_min, c.r_max)


def test_conditioning_warning(grid3):
    # two triangles joined by a bridge; loop resistances differ by 1e14
    g = CircuitGraph(6, ((0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)))
    r = [1e-7] * 3 + [1.0] + [1e7] * 3
    with pytest.warns(ConditioningWarning):
        c = Circuit(g, r, 1e-8, 1e8)
    assert c.conditioning_warning
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Circuit(grid3)


def test_verify_mode_checks(grid3, rng):
    c = Circuit(grid3, log_uniform(rng, 12), verify=True)
    c.solve(rng.standard_normal(12))


def test_basis_invariance(rng):
    g = grid_graph(3, 4)
    r = log_uniform(rng, g.n_edges)
    om = [Circuit(g, r, cycles=fundamental_cycle_matrix(g, root)).omega for root in (0, 5, 11)]
    np.testing.assert_allclose(om[0], om[1], atol=1e-9)
    np.testing.assert_allclose(om[0], om[2], atol=1e-9)


@given(st.integers(0, 10_000))
def test_projector_invariants(seed):
    g, rng = random_graph(seed)
    r = log_uniform(rng, g.n_edges)
    c = Circuit(g, r)
    O = c.omega
    scale = max(1.0, np.linalg.norm(O))
    A = c.A
    if A.shape[0]:
        direct = np.diag(r) @ A.T @ np.linalg.inv(A @ np.diag(r) @ A.T) @ A
        assert np.linalg.norm(O - direct) <= 1e-10 * max(np.linalg.norm(O), 1e-300) + 1e-12
    assert np.linalg.norm(O @ O - O) <= 1e-9 * scale
    assert np.linalg.norm(O.T - np.diag(1 / r) @ O @ np.diag(r)) <= 1e-9 * scale
    s = rng.standard_normal(g.n_edges)
    st_ = c.solve(s)
    np.testing.assert_allclose(st_.v, st_.i * r, rtol=1e-12, atol=1e-15)
    if A.shape[0]:
        assert np.linalg.norm(A @ (s + st_.v)) <= 1e-9 * max(1.0, np.linalg.norm(s))
    np.testing.assert_allclose(st_.v, laplacian_solve(g, r, s), atol=1e-9)
    np.testing.assert_allclose(st_.v, lagrangian_solve(c, s)[0], atol=1e-9)


@given(st.integers(0, 10_000))
def test_output_norm_bound(seed):
    g, rng = random_graph(seed)
    if g.n_edges < 2:
        return
    c = Circuit(g, log_uniform(rng, g.n_edges), verify=True)
    perm = rng.permutation(g.n_edges)
    k = int(rng.integers(1, g.n_edges))
    s = np.zeros(g.n_edges)
    s[perm[:k]] = rng.standard_normal(k)
    v = c.solve(s).v
    assert np.linalg.norm(v[perm[k:]]) <= output_norm_bound(c, s) * (1 + 1e-12)
