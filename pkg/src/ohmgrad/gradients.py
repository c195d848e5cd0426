"""Gradient estimators for resistance updates.

All estimators return the gradient of a loss with respect to the resistance
vector (loss per ohm); learning rates are applied by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, apply_adjoint, solve_voltage_mode
from .errors import NumericalError
from .graph import Selectors


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    estimator: str
    beta: float
    i_free: np.ndarray
    loss: float = float("nan")

    def __post_init__(self):
        if not np.all(np.isfinite(self.g)):
            raise NumericalError(f"{self.estimator} gradient has non-finite entries")


@dataclass(frozen=True)
class NoiseModel:
    """Additive target noise with covariance ``cov`` (volts^2)."""

    cov: np.ndarray
    samples: int = 10_000

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "cov", cov)
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
            raise ValueError("noise covariance must be a symmetric square matrix")
        if np.linalg.eigvalsh(cov).min() < -1e-12 * max(1.0, np.abs(cov).max()):
            raise ValueError("noise covariance must be positive semidefinite")

    @classmethod
    def isotropic(cls, sigma: float, dim: int, samples: int = 10_000) -> "NoiseModel":
        return cls(sigma**2 * np.eye(dim), samples)


def _free_phase(circuit, sel, x, gamma):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != len(sel.inputs):
        raise ValueError(f"input has {x.size} entries, selectors expect {len(sel.inputs)}")
    if sel.n_edges != circuit.n_edges:
        raise ValueError("selectors do not match the circuit")
    s = np.zeros(circuit.n_edges)
    s[list(sel.inputs)] = gamma * x
    return solve_voltage_mode(circuit, s)


def _target(sel, y):
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != len(sel.outputs):
        raise ValueError(f"target has {y.size} entries, selectors expect {len(sel.outputs)}")
    return y


def _embed(circuit, idx, values):
    out = np.zeros(circuit.n_edges)
    out[list(idx)] = values
    return out


def analytical_gradient_ls(circuit: Circuit, sel: Selectors, x, y, gamma: float = 1.0,
                           adjoint_mode: str = "direct") -> GradientEstimate:
    """Exact gradient of ``0.5 * ||y_hat - y||^2`` with respect to ``r``.

    One free voltage-mode solve gives ``i`` and ``y_hat``; one adjoint probe on
    the embedded error ``e`` gives ``Delta = e - Omega^T e`` and ``g = i * Delta``.
    """
    y = _target(sel, y)
    free = _free_phase(circuit, sel, x, gamma)
    err = free.v[list(sel.outputs)] - y
    e = _embed(circuit, sel.outputs, err)
    delta = e + apply_adjoint(circuit, e, adjoint_mode)
    return GradientEstimate(free.i * delta, "analytical", 0.0, free.i, 0.5 * float(err @ err))


def two_phase_gradient(circuit: Circuit, sel: Selectors, x, y, gamma: float = 1.0,
                       beta: float = 1e-3) -> GradientEstimate:
    """Contrastive estimate ``(i_C**2 - i_F**2) / (2 beta)``.

    The clamped phase adds ``beta * (y_hat - y)`` to the output-edge sources.
    """
    if beta == 0:
        raise ZeroDivisionError("beta = 0 has no finite difference; use two_phase_limit")
    y = _target(sel, y)
    free = _free_phase(circuit, sel, x, gamma)
    err = free.v[list(sel.outputs)] - y
    s_c = free.s + _embed(circuit, sel.outputs, beta * err)
    i_c = solve_voltage_mode(circuit, s_c).i
    g = (i_c**2 - free.i**2) / (2.0 * beta)
    return GradientEstimate(g, "two-phase", float(beta), free.i, 0.5 * float(err @ err))


def two_phase_limit(circuit: Circuit, sel: Selectors, x, y, gamma: float = 1.0,
                    form: str = "M") -> GradientEstimate:
    """Zero-nudge limit ``diag(i_F) M P_o (y_hat - y)`` of the contrastive update.

    ``form="omega"`` evaluates the same quantity as ``diag(i_F) R^{-1} Omega P_o (y - y_hat)``.
    """
    y = _target(sel, y)
    free = _free_phase(circuit, sel, x, gamma)
    err = free.v[list(sel.outputs)] - y
    if form == "M":
        q = circuit.current_response[:, list(sel.outputs)] @ err
    elif form == "omega":
        q = (circuit.omega[:, list(sel.outputs)] @ -err) / circuit.r
    else:
        raise ValueError(f"unknown form {form!r}")
    return GradientEstimate(free.i * q, "two-phase-limit", 0.0, free.i, 0.5 * float(err @ err))


def _single_output(sel):
    if len(sel.outputs) != 1:
        raise ValueError(f"hinge loss needs exactly one output edge, got {len(sel.outputs)}")
    return sel.outputs[0]


def hinge_subgradient(circuit: Circuit, sel: Selectors, x, label, gamma: float = 1.0,
                      adjoint_mode: str = "direct") -> GradientEstimate:
    """Subgradient of ``max(0, 1 - label * v[o])`` with respect to ``r``."""
    out = _single_output(sel)
    if label not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {label!r}")
    free = _free_phase(circuit, sel, x, gamma)
    margin = 1.0 - label * free.v[out]
    if margin <= 0:
        return GradientEstimate(np.zeros(circuit.n_edges), "hinge", 0.0, free.i, 0.0)
    v_t = _embed(circuit, [out], [float(label)])
    g = -free.i * (v_t + apply_adjoint(circuit, v_t, adjoint_mode))
    return GradientEstimate(g, "hinge", 0.0, free.i, float(margin))


def hinge_two_phase_gradient(circuit: Circuit, sel: Selectors, x, label, gamma: float = 1.0,
                             beta: float = 1e-3) -> GradientEstimate:
    """Contrastive hinge update with the margin-gated nudge ``-beta * label`` on the output."""
    out = _single_output(sel)
    if beta == 0:
        raise ZeroDivisionError("beta must be nonzero for a contrastive estimate")
    free = _free_phase(circuit, sel, x, gamma)
    margin = 1.0 - label * free.v[out]
    if margin <= 0:
        return GradientEstimate(np.zeros(circuit.n_edges), "hinge-two-phase", float(beta), free.i, 0.0)
    s_c = free.s + _embed(circuit, [out], [-beta * label])
    i_c = solve_voltage_mode(circuit, s_c).i
    g = (i_c**2 - free.i**2) / (2.0 * beta)
    return GradientEstimate(g, "hinge-two-phase", float(beta), free.i, float(margin))


def mask_gradient(grad: GradientEstimate, mask) -> GradientEstimate:
    mask = np.asarray(mask)
    if mask.shape != grad.g.shape:
        raise ValueError(f"mask shape {mask.shape} does not match gradient {grad.g.shape}")
    g = np.where(mask.astype(bool), grad.g, 0.0)
    return GradientEstimate(g, grad.estimator, grad.beta, grad.i_free, grad.loss)


def nudge_response(circuit: Circuit, sel: Selectors) -> np.ndarray:
    """Current response ``Q = M P_o`` to a unit source on each output edge."""
    return circuit.current_response[:, list(sel.outputs)]


def bias_prediction(circuit: Circuit, sel: Selectors, beta: float, noise: NoiseModel) -> np.ndarray:
    """Expected shift of the contrastive estimate caused by zero-mean target noise.

    With ``i_C = i_F + beta Q (y_hat - y)`` and ``y = f + eps`` the squared
    clamped current picks up ``beta**2 (Q eps)**2``, so
    ``E[g_noisy] - g_clean = +(beta / 2) diag(Q Sigma Q^T)``.
    """
    Q = nudge_response(circuit, sel)
    if noise.cov.shape != (Q.shape[1], Q.shape[1]):
        raise ValueError(f"noise covariance must be {Q.shape[1]}x{Q.shape[1]}")
    return 0.5 * beta * np.einsum("ij,jk,ik->i", Q, noise.cov, Q)
