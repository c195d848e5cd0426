"""Weighted cycle-space projector and steady-state solves for resistor networks.

A circuit places an ideal voltage source in series with a resistor on every
edge. For sources ``s`` the Ohmic drops are ``v = -Omega s`` with
``Omega = R A^T (A R A^T)^{-1} A`` and the currents are ``i = v / r``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import ConditioningWarning, NumericalError
from .graph import CircuitGraph, CycleMatrix, Selectors, fundamental_cycle_matrix

DEFAULT_R_MIN = 0.1
DEFAULT_R_MAX = 10.0
COND_LIMIT = 1e12


def _as_cycles(A):
    return A.A if isinstance(A, CycleMatrix) else np.asarray(A, dtype=float)


def _factor(A, r):
    K = (A * r) @ A.T
    try:
        chol = linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            f"A R A^T is not positive definite (cond ~ {np.linalg.cond(K):.3g})"
        ) from exc
    return K, chol


def assemble_projector(A, r) -> np.ndarray:
    """Return ``R A^T (A R A^T)^{-1} A`` for cycle matrix ``A`` and resistances ``r``."""
    A = _as_cycles(A)
    r = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("resistances must be finite and strictly positive")
    if A.shape[0] == 0:
        return np.zeros((r.size, r.size))
    _, chol = _factor(A, r)
    return r[:, None] * (A.T @ linalg.cho_solve(chol, A, check_finite=False))


@dataclass(frozen=True)
class SteadyState:
    s: np.ndarray
    v: np.ndarray
    i: np.ndarray


class Circuit:
    """Resistor network with cached projector.

    A snapshot with fixed resistances is safe to share between readers;
    :meth:`set_resistances` rebuilds every cache and must not run concurrently
    with solves.

    Parameters
    ----------
    graph : CircuitGraph
    r : array-like, optional
        Edge resistances in ohms; defaults to 1 everywhere.
    r_min, r_max : float
        Hardware bounds enforced on every assignment of ``r``.
    verify : bool
        When true every solve asserts KVL and the output-norm bound.
    """

    def __init__(self, graph: CircuitGraph, r=None, r_min=DEFAULT_R_MIN,
                 r_max=DEFAULT_R_MAX, verify=False, cycles: CycleMatrix | None = None):
        if not 0 < r_min <= r_max:
            raise ValueError(f"need 0 < r_min <= r_max, got {r_min}, {r_max}")
        self.graph = graph
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        self.verify = verify
        self.cycles = cycles if cycles is not None else fundamental_cycle_matrix(graph)
        self.conditioning_warning = None
        self.set_resistances(np.ones(graph.n_edges) if r is None else r)

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges

    @property
    def A(self) -> np.ndarray:
        return self.cycles.A

    @property
    def r(self) -> np.ndarray:
        return self._r

    @property
    def omega(self) -> np.ndarray:
        return self._omega

    @property
    def current_response(self) -> np.ndarray:
        """``M = -A^T (A R A^T)^{-1} A``, so that currents are ``i = M s``."""
        return -self._kernel

    def set_resistances(self, r) -> None:
        r = np.array(r, dtype=float)
        if r.shape != (self.n_edges,):
            raise ValueError(f"expected {self.n_edges} resistances, got shape {r.shape}")
        if np.any(~np.isfinite(r)):
            raise ValueError("resistances must be finite")
        if np.any(r < self.r_min) or np.any(r > self.r_max):
            raise ValueError(
                f"resistances must lie in [{self.r_min}, {self.r_max}], "
                f"got range [{r.min()}, {r.max()}]"
            )
        r.setflags(write=False)
        A = self.A
        self.conditioning_warning = None
        if A.shape[0] == 0:
            kernel = np.zeros((self.n_edges, self.n_edges))
        else:
            K, chol = _factor(A, r)
            cond = np.linalg.cond(K)
            if cond > COND_LIMIT:
                self.conditioning_warning = f"cond(A R A^T) = {cond:.3g} exceeds {COND_LIMIT:.0e}"
                warnings.warn(self.conditioning_warning, ConditioningWarning, stacklevel=2)
            kernel = A.T @ linalg.cho_solve(chol, A, check_finite=False)
        self._r = r
        self._kernel = kernel
        self._omega = r[:, None] * kernel

    def with_resistances(self, r) -> "Circuit":
        return Circuit(self.graph, r, self.r_min, self.r_max, self.verify, self.cycles)

    def clip(self, r) -> np.ndarray:
        return np.clip(r, self.r_min, self.r_max)

    # convenience wrappers around the module-level operations
    def solve(self, s) -> SteadyState:
        return solve_voltage_mode(self, s)

    def adjoint(self, u, mode="direct") -> np.ndarray:
        return apply_adjoint(self, u, mode)

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "r": self._r.tolist(),
            "r_min": self.r_min,
            "r_max": self.r_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        graph = CircuitGraph.from_dict(data["graph"])
        return cls(graph, data["r"], data.get("r_min", DEFAULT_R_MIN),
                   data.get("r_max", DEFAULT_R_MAX))


def read_circuit(path) -> Circuit:
    with open(path) as fh:
        return Circuit.from_dict(json.load(fh))


def write_circuit(circuit: Circuit, path) -> None:
    Path(path).write_text(json.dumps(circuit.to_dict()) + "\n")


def _edge_vector(circuit, x, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (circuit.n_edges,):
        raise ValueError(f"{name} must have length {circuit.n_edges}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def solve_voltage_mode(circuit: Circuit, s) -> SteadyState:
    """Steady state under edge sources ``s``: ``v = -Omega s``, ``i = v / r``."""
    s = _edge_vector(circuit, s, "source vector")
    v = -circuit.omega @ s
    i = v / circuit.r
    if circuit.verify:
        scale = max(1.0, float(np.linalg.norm(s)))
        kvl = float(np.linalg.norm(circuit.A @ (s + v))) if circuit.A.size else 0.0
        if kvl > 1e-9 * scale:
            raise NumericalError(f"KVL residual {kvl:.3g} exceeds {1e-9 * scale:.3g}")
        bound = np.linalg.norm(s) * np.sqrt(circuit.r.max() / circuit.r.min())
        if np.linalg.norm(v) > bound * (1 + 1e-12) + 1e-15:
            raise NumericalError(f"output norm {np.linalg.norm(v):.6g} exceeds bound {bound:.6g}")
    return SteadyState(s, v, i)


def apply_adjoint(circuit: Circuit, u, mode: str = "direct") -> np.ndarray:
    """Return ``-Omega^T u``.

    ``mode="direct"`` uses the transpose; ``mode="voltage"`` goes through a
    second voltage-mode experiment via ``Omega^T = R^{-1} Omega R``.
    """
    u = _edge_vector(circuit, u, "probe vector")
    if mode == "direct":
        return -circuit.omega.T @ u
    if mode in ("voltage", "voltage-mode"):
        return -(circuit.omega @ (circuit.r * u)) / circuit.r
    raise ValueError(f"unknown adjoint mode {mode!r}; use 'direct' or 'voltage'")


def dissipation_energy(circuit: Circuit, v, s) -> float:
    """Energy ``v^T R^{-1} v - 2 s^T M (s + v)``; minimised at ``v = -Omega s``."""
    v = _edge_vector(circuit, v, "v")
    s = _edge_vector(circuit, s, "s")
    M = circuit.current_response
    return float(v @ (v / circuit.r) - 2.0 * s @ (M @ (s + v)))


def dissipation_energy_grad_r(circuit: Circuit, v, s) -> np.ndarray:
    """Partial derivative of :func:`dissipation_energy` in ``r`` at fixed ``v``, ``s``."""
    v = _edge_vector(circuit, v, "v")
    s = _edge_vector(circuit, s, "s")
    A = circuit.A
    grad = -(v / circuit.r) ** 2
    if A.shape[0]:
        K = (A * circuit.r) @ A.T
        chol = linalg.cho_factor(K, lower=True)
        p = A.T @ linalg.cho_solve(chol, A @ s)
        q = A.T @ linalg.cho_solve(chol, A @ (s + v))
        grad = grad - 2.0 * p * q
    return grad


def lagrangian_solve(circuit: Circuit, s) -> tuple[np.ndarray, np.ndarray]:
    """Minimise ``v^T R^{-1} v`` subject to ``A (s + v) = 0`` via the dense KKT system.

    Independent of the projector path; returns ``(v, multipliers)``.
    """
    s = _edge_vector(circuit, s, "source vector")
    A = circuit.A
    E, C = circuit.n_edges, A.shape[0]
    kkt = np.zeros((E + C, E + C))
    kkt[:E, :E] = np.diag(2.0 / circuit.r)
    kkt[:E, E:] = A.T
    kkt[E:, :E] = A
    rhs = np.concatenate([np.zeros(E), -A @ s])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:E], sol[E:]


@dataclass(frozen=True)
class RankReport:
    rank: int
    dim_bound: int
    cycle_bound: int

    @property
    def holds(self) -> bool:
        return self.rank <= self.dim_bound and self.rank <= self.cycle_bound


def _check_selectors(circuit, sel):
    if sel.n_edges != circuit.n_edges:
        raise ValueError(
            f"selectors built for {sel.n_edges} edges, circuit has {circuit.n_edges}"
        )


def io_map(circuit: Circuit, sel: Selectors, gamma: float = 1.0, check: bool = False) -> np.ndarray:
    """Input-output block ``W = -gamma P_o^T Omega P_i`` of shape ``(E_o, E_i)``.

    With ``check=True`` both rank bounds are evaluated and a violation raises
    :class:`NumericalError`.
    """
    _check_selectors(circuit, sel)
    W = -gamma * circuit.omega[np.ix_(sel.outputs, sel.inputs)]
    if check:
        rep = rank_report(circuit, sel, gamma, W)
        if not rep.holds:
            raise NumericalError(f"rank bound violated: {rep}")
    return W


def _rank(M):
    return int(np.linalg.matrix_rank(M)) if M.size else 0


def rank_report(circuit: Circuit, sel: Selectors, gamma: float = 1.0, W=None) -> RankReport:
    if W is None:
        W = io_map(circuit, sel, gamma)
    C = circuit.A.shape[0]
    A = circuit.A
    dim_bound = min(len(sel.inputs), len(sel.outputs), C)
    cycle_bound = min(_rank(A[:, list(sel.inputs)]), _rank(A[:, list(sel.outputs)]))
    return RankReport(_rank(W), dim_bound, cycle_bound)


def output_norm_bound(circuit: Circuit, s_in) -> float:
    """Upper bound ``||s_in|| sqrt(r_max / r_min)`` on any output-voltage norm."""
    return float(np.linalg.norm(s_in) * np.sqrt(circuit.r.max() / circuit.r.min()))
