"""Energy-system laboratory for two-phase (generalized equilibrium propagation) estimates.

Equilibria are always located by explicit-Euler relaxation of
``dy/dt = -Gamma grad_y F(beta, theta, y)``; closed forms are only used as
test oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DegenerateFitError, InstabilityError


@dataclass(frozen=True)
class EnergySystem:
    """Energy ``E_theta(y)`` with a nudge ``n(beta, theta, y)`` of declared order.

    ``objective(theta, y)`` is the leading nudge coefficient
    ``(1/k!) d^k n / d beta^k`` at ``beta = 0``; it defines the cost whose
    parameter gradient the two-phase estimate recovers.
    """

    dim: int
    energy: Callable
    energy_grad_y: Callable
    energy_grad_theta: Callable
    nudge: Callable
    nudge_grad_y: Callable
    nudge_grad_theta: Callable
    objective: Callable
    order: int = 1
    mobility: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("nudge order must be >= 1")
        if self.mobility is not None:
            G = np.asarray(self.mobility, dtype=float)
            if G.shape != (self.dim, self.dim) or not np.allclose(G, G.T):
                raise ValueError("mobility must be a symmetric dim x dim matrix")
            if np.linalg.eigvalsh(G).min() <= 0:
                raise ValueError("mobility must be positive definite")
            object.__setattr__(self, "mobility", G)

    def total(self, beta, theta, y) -> float:
        return float(self.energy(theta, y) + (self.nudge(beta, theta, y) if beta else 0.0))

    def total_grad_y(self, beta, theta, y) -> np.ndarray:
        g = np.asarray(self.energy_grad_y(theta, y), dtype=float)
        return g + self.nudge_grad_y(beta, theta, y) if beta else g

    def total_grad_theta(self, beta, theta, y) -> np.ndarray:
        g = np.asarray(self.energy_grad_theta(theta, y), dtype=float)
        return g + self.nudge_grad_theta(beta, theta, y) if beta else g

    def with_mobility(self, mobility) -> "EnergySystem":
        return EnergySystem(self.dim, self.energy, self.energy_grad_y, self.energy_grad_theta,
                            self.nudge, self.nudge_grad_y, self.nudge_grad_theta,
                            self.objective, self.order, mobility)

    def check(self, theta, y, rtol=1e-5, h=1e-6) -> None:
        """Evaluate the structural invariants at one point; raise ``ValueError`` on failure."""
        y = np.asarray(y, dtype=float)
        if abs(self.nudge(0.0, theta, y)) != 0.0:
            raise ValueError("nudge must vanish at beta = 0")
        g = self.energy_grad_y(theta, y)
        fd = np.array([
            (self.energy(theta, y + h * e) - self.energy(theta, y - h * e)) / (2 * h)
            for e in np.eye(self.dim)
        ])
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        if err > rtol:
            raise ValueError(f"energy gradient disagrees with finite differences (rel err {err:.2e})")


@dataclass(frozen=True)
class Equilibrium:
    y: np.ndarray
    residual: float
    iterations: int
    beta: float
    max_energy_increase: float = 0.0
    energies: np.ndarray | None = field(default=None, repr=False)


def _mobility(system):
    return np.eye(system.dim) if system.mobility is None else system.mobility


def hessian_scale(system: EnergySystem, beta, theta, y, iters: int = 50, h: float = 1e-5) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``Gamma H`` at ``y``."""
    y = np.asarray(y, dtype=float)
    G = _mobility(system)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(system.dim)
    u /= np.linalg.norm(u)
    lam = 1.0
    for _ in range(iters):
        hv = (system.total_grad_y(beta, theta, y + h * u)
              - system.total_grad_y(beta, theta, y - h * u)) / (2 * h)
        w = G @ hv
        norm = np.linalg.norm(w)
        if norm == 0:
            return 1.0
        lam = float(u @ w) if abs(u @ w) > 0 else norm
        u = w / norm
    return max(abs(lam), 1e-300)


def relax(system: EnergySystem, theta, beta: float = 0.0, y_init=None, step: float | None = None,
          tol: float = 1e-10, max_iter: int = 1_000_000, record: bool = False,
          patience: int = 1000) -> Equilibrium:
    """Explicit-Euler relaxation ``y <- y - step * Gamma grad_y F`` until ``||grad_y F|| <= tol``.

    Raises :class:`InstabilityError` when ``F`` rises for ten consecutive steps
    or the residual stops improving for ``patience`` steps, and
    :class:`ConvergenceError` after ``max_iter`` steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.zeros(system.dim) if y_init is None else np.array(y_init, dtype=float)
    if step is None:
        step = 0.1 / hessian_scale(system, beta, theta, y)
    if step <= 0:
        raise ValueError("step must be positive")
    G = _mobility(system)
    F = system.total(beta, theta, y)
    grad = system.total_grad_y(beta, theta, y)
    res = float(np.linalg.norm(grad))
    best, since_best, rising, worst_rise = res, 0, 0, 0.0
    energies = [F] if record else None
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(f"relaxation did not converge in {max_iter} steps (residual {res:.3g})")
        y = y - step * (G @ grad)
        F_new = system.total(beta, theta, y)
        if not math.isfinite(F_new):
            raise InstabilityError(f"energy diverged at step {it + 1}; try a smaller step than {step:.3g}")
        rise = F_new - F
        if rise > 1e-12 * max(1.0, abs(F)):
            rising += 1
            worst_rise = max(worst_rise, rise)
        else:
            rising = 0
        if rising >= 10:
            raise InstabilityError(
                f"energy increased for 10 consecutive steps at step {it + 1}; "
                f"try a smaller step than {step:.3g}"
            )
        F = F_new
        grad = system.total_grad_y(beta, theta, y)
        res = float(np.linalg.norm(grad))
        if res < best:
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best >= patience:
                raise InstabilityError(
                    f"residual stalled at {res:.3g} for {patience} steps; "
                    f"try a smaller step than {step:.3g}"
                )
        if record:
            energies.append(F)
        it += 1
    return Equilibrium(y, res, it, float(beta), worst_rise,
                       None if energies is None else np.array(energies))


def gep_estimate(system: EnergySystem, theta, beta: float, y_init=None, **relax_kw) -> np.ndarray:
    """Two-phase estimate ``(dF/dtheta at y^beta - dF/dtheta at y^0) / beta**k``."""
    if beta == 0:
        raise ZeroDivisionError("beta must be nonzero")
    theta = np.asarray(theta, dtype=float)
    free = relax(system, theta, 0.0, y_init, **relax_kw)
    nudged = relax(system, theta, beta, free.y, **relax_kw)
    diff = (system.total_grad_theta(beta, theta, nudged.y)
            - system.total_grad_theta(0.0, theta, free.y))
    return np.asarray(diff, dtype=float) / beta**system.order


def objective_gradient_oracle(system: EnergySystem, theta, delta: float = 1e-4,
                              y_init=None, **relax_kw) -> np.ndarray:
    """Central differences of ``J(theta) = objective(theta, y0(theta))`` with re-relaxation."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros(theta.size)
    for k in range(theta.size):
        e = np.zeros(theta.size)
        e[k] = delta
        vals = []
        for t in (theta + e, theta - e):
            y0 = relax(system, t, 0.0, y_init, **relax_kw).y
            vals.append(system.objective(t, y0))
        grad[k] = (vals[0] - vals[1]) / (2 * delta)
    return grad


def nudge_order_fit(system: EnergySystem, theta, betas, y_init=None, **relax_kw) -> float:
    """Slope of ``log|n(beta, theta, y0)|`` against ``log beta``."""
    betas = np.asarray(betas, dtype=float)
    if betas.size < 2 or np.log10(betas.max() / betas.min()) < 3 - 1e-9:
        raise ValueError("betas must span at least three decades")
    y0 = relax(system, theta, 0.0, y_init, **relax_kw).y
    n = np.array([abs(system.nudge(b, theta, y0)) for b in betas])
    if np.any(n == 0):
        raise DegenerateFitError("nudge vanishes at the free equilibrium for some beta")
    slope, _ = np.polyfit(np.log(betas), np.log(n), 1)
    return float(slope)


def richardson_extrapolate(betas, values) -> np.ndarray:
    """Extrapolate ``values(beta)`` to ``beta = 0`` assuming a power series in ``beta``.

    Neville's scheme on the polynomial through all points.
    """
    betas = np.asarray(betas, dtype=float)
    table = [np.asarray(v, dtype=float) for v in values]
    n = len(betas)
    for level in range(1, n):
        table = [
            (betas[j] * table[j + 1] - betas[j + level] * table[j]) / (betas[j] - betas[j + level])
            for j in range(n - level)
        ]
    return table[0]


# ---------------------------------------------------------------------------
# Ready-made systems

def quadratic_system(H, B, P, target, nudge: str = "ep", mobility=None) -> EnergySystem:
    """Quadratic energy ``0.5 y^T H y - (B theta)^T y`` with a readout ``P y``.

    ``nudge`` selects the perturbation:

    * ``"ep"``: ``beta * C`` with ``C = 0.5 ||P y - target||^2`` (order 1)
    * ``"power2"``: ``beta**2 * C`` (order 2)
    * ``"cl"``: output clamping ``E(y + beta P^T (target - P y)) - E(y)`` (order 2)
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    t = np.atleast_1d(np.asarray(target, dtype=float))
    n = H.shape[0]

    def energy(theta, y):
        return float(0.5 * y @ H @ y - (B @ theta) @ y)

    def energy_grad_y(theta, y):
        return H @ y - B @ theta

    def energy_grad_theta(theta, y):
        return -(B.T @ y)

    def cost(theta, y):
        d = P @ y - t
        return float(0.5 * d @ d)

    def cost_grad_y(theta, y):
        return P.T @ (P @ y - t)

    zeros_theta = lambda theta: np.zeros(np.size(theta))  # noqa: E731

    if nudge in ("ep", "power2"):
        p = 1 if nudge == "ep" else 2
        return EnergySystem(
            n, energy, energy_grad_y, energy_grad_theta,
            nudge=lambda b, th, y: b**p * cost(th, y),
            nudge_grad_y=lambda b, th, y: b**p * cost_grad_y(th, y),
            nudge_grad_theta=lambda b, th, y: zeros_theta(th),
            objective=cost, order=p, mobility=mobility,
        )
    if nudge == "cl":
        PtP = P.T @ P

        def shifted(b, y):
            return y + b * P.T @ (t - P @ y)

        def cl_nudge(b, th, y):
            return energy(th, shifted(b, y)) - energy(th, y)

        def cl_grad_y(b, th, y):
            J = np.eye(n) - b * PtP
            return J.T @ energy_grad_y(th, shifted(b, y)) - energy_grad_y(th, y)

        def cl_grad_theta(b, th, y):
            return energy_grad_theta(th, shifted(b, y)) - energy_grad_theta(th, y)

        def cl_objective(th, y):
            d = P.T @ (t - P @ y)
            return float(0.5 * d @ H @ d)

        return EnergySystem(n, energy, energy_grad_y, energy_grad_theta, cl_nudge,
                            cl_grad_y, cl_grad_theta, cl_objective, order=2, mobility=mobility)
    raise ValueError(f"unknown nudge {nudge!r}")


def circuit_energy_system(circuit_factory, s, readout, target) -> EnergySystem:
    """Dissipation energy of a resistor network with state ``v`` and parameters ``r``.

    ``circuit_factory(r)`` builds a :class:`~ohmgrad.circuit.Circuit`; the
    nudge is ``beta * 0.5 ||v[readout] - target||^2``.
    """
    from .circuit import dissipation_energy, dissipation_energy_grad_r

    s = np.asarray(s, dtype=float)
    idx = list(readout)
    t = np.asarray(target, dtype=float)
    cache = {}

    def circ(r):
        key = np.asarray(r, dtype=float).tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = circuit_factory(np.asarray(r, dtype=float))
        return cache[key]

    def cost(r, v):
        d = v[idx] - t
        return float(0.5 * d @ d)

    def cost_grad_y(r, v):
        g = np.zeros_like(v)
        g[idx] = v[idx] - t
        return g

    def energy_grad_y(r, v):
        c = circ(r)
        return 2.0 * v / c.r - 2.0 * c.current_response @ s

    return EnergySystem(
        dim=s.size,
        energy=lambda r, v: dissipation_energy(circ(r), v, s),
        energy_grad_y=energy_grad_y,
        energy_grad_theta=lambda r, v: dissipation_energy_grad_r(circ(r), v, s),
        nudge=lambda b, r, v: b * cost(r, v),
        nudge_grad_y=lambda b, r, v: b * cost_grad_y(r, v),
        nudge_grad_theta=lambda b, r, v: np.zeros(np.size(r)),
        objective=cost,
        order=1,
    )
