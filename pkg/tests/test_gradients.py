import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph
from ohmgrad.circuit import Circuit
from ohmgrad.errors import NumericalError
from ohmgrad.experiments import (
    bias_experiment,
    fd_gradient_hinge,
    fd_gradient_ls,
    log_uniform_r,
    random_selectors,
    two_phase_convergence,
)
from ohmgrad.graph import make_selectors
from ohmgrad.gradients import (
    GradientEstimate,
    NoiseModel,
    analytical_gradient_ls,
    bias_prediction,
    hinge_subgradient,
    hinge_two_phase_gradient,
    mask_gradient,
    two_phase_gradient,
    two_phase_limit,
)
from ohmgrad.topology import grid_graph


def series_loop_grad(r):
    # L = 0.5 (r2 / S)^2 for a unit source on edge 0 read out on edge 2
    r0, r1, r2 = r
    S = r0 + r1 + r2
    common = -(r2**2) / S**3
    return np.array([common, common, r2 / S**2 + common])


@pytest.fixture
def tri(triangle):
    return Circuit(triangle), make_selectors(triangle, [0], [2])


def test_analytical_triangle(tri):
    c, sel = tri
    g = analytical_gradient_ls(c, sel, [1.0], [0.0]).g
    np.testing.assert_allclose(g, np.array([-1, -1, 2]) / 27, atol=1e-15)
    np.testing.assert_allclose(g, series_loop_grad(c.r), atol=1e-15)


def test_analytical_triangle_nonuniform(triangle):
    r = np.array([0.7, 2.5, 1.3])
    c = Circuit(triangle, r)
    g = analytical_gradient_ls(c, make_selectors(triangle, [0], [2]), [1.0], [0.0]).g
    np.testing.assert_allclose(g, series_loop_grad(r), rtol=1e-12)


@pytest.mark.parametrize("fn", [analytical_gradient_ls, two_phase_limit])
def test_exact_target_gives_zero(tri, fn):
    c, sel = tri
    np.testing.assert_allclose(fn(c, sel, [1.0], [-1 / 3]).g, 0.0, atol=1e-16)


def test_two_phase_exact_target_is_exactly_zero(grid3, rng):
    c = Circuit(grid3, log_uniform_r(rng, grid3.n_edges))
    sel = make_selectors(grid3, [1, 4], [6])
    s = np.zeros(grid3.n_edges)
    s[[1, 4]] = [0.3, -0.8]
    from ohmgrad.circuit import solve_voltage_mode

    y_hat = solve_voltage_mode(c, s).v[[6]]
    assert np.all(two_phase_gradient(c, sel, [0.3, -0.8], y_hat, beta=0.1).g == 0)


def test_two_phase_limit_triangle(tri):
    c, sel = tri
    lim = two_phase_limit(c, sel, [1.0], [0.0]).g
    np.testing.assert_allclose(lim, -np.ones(3) / 27, atol=1e-15)
    g = two_phase_gradient(c, sel, [1.0], [0.0], beta=1e-3).g
    assert np.max(np.abs(g - lim)) < 1e-3


def test_limit_differs_from_analytical(tri):
    c, sel = tri
    lim = two_phase_limit(c, sel, [1.0], [0.0]).g
    an = analytical_gradient_ls(c, sel, [1.0], [0.0]).g
    assert np.max(np.abs(lim - an)) > 0.1


def test_limit_forms_agree(grid3, rng):
    c = Circuit(grid3, log_uniform_r(rng, grid3.n_edges))
    sel = make_selectors(grid3, [0, 5], [3, 9])
    a = two_phase_limit(c, sel, [1.0, -2.0], [0.2, 0.1], gamma=2.0).g
    b = two_phase_limit(c, sel, [1.0, -2.0], [0.2, 0.1], gamma=2.0, form="omega").g
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_two_phase_beta_zero_rejected(tri):
    c, sel = tri
    with pytest.raises(ZeroDivisionError, match="two_phase_limit"):
        two_phase_gradient(c, sel, [1.0], [0.0], beta=0.0)


def test_two_phase_slope(grid3, rng):
    c = Circuit(grid3, log_uniform_r(rng, grid3.n_edges))
    sel = make_selectors(grid3, [0, 5], [3, 9])
    conv = two_phase_convergence(c, sel, [1.0, 0.5], [0.0, 0.3])
    assert abs(conv.slope - 1.0) <= 0.1
    lim = two_phase_limit(c, sel, [1.0, 0.5], [0.0, 0.3]).g
    close = two_phase_gradient(c, sel, [1.0, 0.5], [0.0, 0.3], beta=1e-5).g
    assert np.linalg.norm(close - lim) <= 1e-3 * np.linalg.norm(lim)


def test_analytical_matches_fd_on_grid(grid3, rng):
    c = Circuit(grid3, log_uniform_r(rng, grid3.n_edges))
    sel = make_selectors(grid3, [0, 5], [3, 9])
    x, y = rng.standard_normal(2), rng.standard_normal(2)
    g = analytical_gradient_ls(c, sel, x, y).g
    fd = fd_gradient_ls(c, sel, x, y)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_analytical_fd_property(seed):
    g0, rng = random_graph(seed, max_nodes=12, max_chords=8)
    if g0.n_edges - g0.n_nodes + 1 == 0:
        return
    c = Circuit(g0, log_uniform_r(rng, g0.n_edges))
    sel = random_selectors(rng, g0.n_edges)
    x = rng.standard_normal(len(sel.inputs))
    y = rng.standard_normal(len(sel.outputs))
    g = analytical_gradient_ls(c, sel, x, y).g
    fd = fd_gradient_ls(c, sel, x, y)
    scale = max(np.linalg.norm(fd), 1e-12)
    assert np.linalg.norm(g - fd) <= 1e-5 * scale


def test_adjoint_modes_agree(grid3, rng):
    c = Circuit(grid3, log_uniform_r(rng, grid3.n_edges))
    sel = make_selectors(grid3, [2], [7, 10])
    a = analytical_gradient_ls(c, sel, [0.4], [1.0, -1.0]).g
    b = analytical_gradient_ls(c, sel, [0.4], [1.0, -1.0], adjoint_mode="voltage").g
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_dimension_mismatch(tri):
    c, sel = tri
    with pytest.raises(ValueError, match="input"):
        analytical_gradient_ls(c, sel, [1.0, 2.0], [0.0])
    with pytest.raises(ValueError, match="target"):
        two_phase_limit(c, sel, [1.0], [0.0, 1.0])


@pytest.mark.parametrize("label, expected", [(-1, [1, 1, -2]), (1, [-1, -1, 2])])
def test_hinge_triangle(tri, label, expected):
    c, sel = tri
    est = hinge_subgradient(c, sel, [1.0], label)
    np.testing.assert_allclose(est.g, np.array(expected) / 9, atol=1e-15)
    np.testing.assert_allclose(est.g, fd_gradient_hinge(c, sel, [1.0], label), atol=1e-9)


def test_hinge_margin_satisfied(tri):
    c, sel = tri
    # f = -3 with gamma = 9, so label -1 has margin 1 - 3 < 0
    est = hinge_subgradient(c, sel, [1.0], -1, gamma=9.0)
    assert np.all(est.g == 0)
    assert np.all(hinge_two_phase_gradient(c, sel, [1.0], -1, gamma=9.0, beta=0.1).g == 0)


def test_hinge_rejects_multiple_outputs(grid3):
    c = Circuit(grid3)
    sel = make_selectors(grid3, [0], [3, 9])
    with pytest.raises(ValueError, match="exactly one"):
        hinge_subgradient(c, sel, [1.0], 1)


def test_hinge_fd_random(rng):
    g = grid_graph(3, 4)
    for _ in range(5):
        c = Circuit(g, log_uniform_r(rng, g.n_edges))
        sel = make_selectors(g, [0, 4], [9])
        x = rng.standard_normal(2)
        label = int(rng.choice([-1, 1]))
        est = hinge_subgradient(c, sel, x, label)
        fd = fd_gradient_hinge(c, sel, x, label)
        if est.loss > 1e-6:
            np.testing.assert_allclose(est.g, fd, atol=1e-7 * max(1, np.abs(fd).max()))


def test_hinge_two_phase_limit(tri):
    c, sel = tri
    # nudge -beta*label on the output: i_F = -1/3, unit-source response -1/3 on every edge
    expected = (-1 / 3) * (-1 / 3) * (-1) * np.ones(3)
    b = hinge_two_phase_gradient(c, sel, [1.0], 1, beta=1e-6).g
    np.testing.assert_allclose(b, expected, atol=1e-6)


def test_mask_gradient():
    est = GradientEstimate(np.array([1.5, -2.0, 3.0]), "analytical", 0.0, np.zeros(3))
    np.testing.assert_array_equal(mask_gradient(est, [1, 1, 1]).g, est.g)
    np.testing.assert_array_equal(mask_gradient(est, [0, 0, 0]).g, np.zeros(3))
    np.testing.assert_array_equal(mask_gradient(est, [1, 0, 1]).g, [1.5, 0.0, 3.0])
    with pytest.raises(ValueError):
        mask_gradient(est, [1, 0])


def test_non_finite_gradient_rejected():
    with pytest.raises(NumericalError):
        GradientEstimate(np.array([np.nan]), "analytical", 0.0, np.zeros(1))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        NoiseModel(np.array([[1.0, 0.5], [0.0, 1.0]]))
    assert NoiseModel.isotropic(2.0, 3).cov[1, 1] == 4.0


def test_bias_zero_beta(tri):
    c, sel = tri
    assert np.all(bias_prediction(c, sel, 0.0, NoiseModel.isotropic(3.0, 1)) == 0)


def test_bias_scalar_reduction(tri):
    c, sel = tri
    beta, sigma = 0.3, 3.0
    q = -np.ones(3) / 3  # current on every edge per unit source on the output edge
    np.testing.assert_allclose(bias_prediction(c, sel, beta, NoiseModel.isotropic(sigma, 1)),
                               0.5 * beta * q**2 * sigma**2, atol=1e-15)


@pytest.mark.slow
def test_bias_monte_carlo(grid3):
    c = Circuit(grid3)
    sel = make_selectors(grid3, [0, 5], [3, 9])
    rep = bias_experiment(c, sel, [1.0, 0.5], [0.1, -0.2], beta=0.3, sigma=3.0, draws=10_000)
    assert np.all(np.abs(rep.z) <= 3)
    assert np.all(np.abs(rep.analytical_z) <= 3)
    # the predicted shift is visible above Monte-Carlo noise
    assert np.max(np.abs(rep.predicted) / rep.std_error) > 10
