"""Reproducible experiment drivers shared by the CLI and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    Circuit,
    io_map,
    lagrangian_solve,
    output_norm_bound,
    rank_report,
    solve_voltage_mode,
)
from .datasets import Dataset, StandardizedPCA, gen_regression, stratified_split
from .errors import InsufficientChordsError, SparseDepositionError
from .gep import (
    gep_estimate,
    nudge_order_fit,
    objective_gradient_oracle,
    quadratic_system,
    relax,
    richardson_extrapolate,
)
from .gradients import (
    NoiseModel,
    analytical_gradient_ls,
    bias_prediction,
    two_phase_gradient,
    two_phase_limit,
)
from .graph import CircuitGraph, Selectors, make_selectors
from .topology import choose_io_edges, generate_nanowire_network, grid_graph, random_connected_graph
from .training import TrainConfig, accuracy, full_batch_loss, train


@dataclass(frozen=True)
class Check:
    invariant: str
    max_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)

    def row(self):
        return self.invariant, self.max_residual, self.tolerance, self.passed


def log_uniform_r(rng, size, lo=0.1, hi=10.0) -> np.ndarray:
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def random_instance(rng, max_nodes: int = 20, max_chords: int = 15):
    """Random connected graph with log-uniform resistances in [0.1, 10]."""
    n = int(rng.integers(2, max_nodes + 1))
    g = random_connected_graph(n, int(rng.integers(0, max_chords + 1)), rng)
    return Circuit(g, log_uniform_r(rng, g.n_edges))


def random_selectors(rng, n_edges: int, max_in: int = 3, max_out: int = 3) -> Selectors:
    n_in = int(rng.integers(1, min(max_in, n_edges - 1) + 1))
    n_out = int(rng.integers(1, min(max_out, n_edges - n_in) + 1))
    perm = rng.permutation(n_edges)
    return Selectors(n_edges, tuple(int(e) for e in perm[:n_in]),
                     tuple(int(e) for e in perm[n_in:n_in + n_out]))


# ---------------------------------------------------------------------------
# projector / gradient invariants

def verify_suite(n_graphs: int = 100, seed: int = 0, max_nodes: int = 20,
                 n_grid: int = 20) -> list[Check]:
    """Projector algebra, KVL, Lagrangian agreement, rank and norm bounds, gradient checks."""
    rng = np.random.default_rng(seed)
    res = {k: 0.0 for k in ("idempotence", "adjoint_identity", "rank_defect", "kvl",
                            "lagrangian_agreement", "io_rank_bound", "output_norm_bound")}
    for _ in range(n_graphs):
        c = random_instance(rng, max_nodes)
        E, N = c.n_edges, c.graph.n_nodes
        O = c.omega
        res["idempotence"] = max(res["idempotence"], np.linalg.norm(O @ O - O))
        adj = O.T - (O * c.r[None, :]) / c.r[:, None]
        res["adjoint_identity"] = max(res["adjoint_identity"], np.linalg.norm(adj))
        rank = np.linalg.matrix_rank(O) if E - N + 1 > 0 else 0
        res["rank_defect"] = max(res["rank_defect"], abs(rank - (E - N + 1)))
        s = rng.standard_normal(E)
        st = solve_voltage_mode(c, s)
        kvl = np.linalg.norm(c.A @ (s + st.v)) / max(1.0, np.linalg.norm(s)) if c.A.size else 0.0
        res["kvl"] = max(res["kvl"], kvl)
        v_l, _ = lagrangian_solve(c, s)
        res["lagrangian_agreement"] = max(res["lagrangian_agreement"], np.max(np.abs(v_l - st.v)))
        if E >= 2:
            sel = random_selectors(rng, E)
            rep = rank_report(c, sel)
            res["io_rank_bound"] = max(res["io_rank_bound"],
                                       rep.rank - min(rep.dim_bound, rep.cycle_bound), 0)
            s_in = np.zeros(E)
            s_in[list(sel.inputs)] = rng.standard_normal(len(sel.inputs))
            v = solve_voltage_mode(c, s_in).v
            res["output_norm_bound"] = max(res["output_norm_bound"],
                                           np.linalg.norm(v[list(sel.outputs)])
                                           - output_norm_bound(c, s_in), 0)
    checks = [
        Check("idempotence", res["idempotence"], 1e-9),
        Check("adjoint_identity", res["adjoint_identity"], 1e-9),
        Check("rank_equals_cycle_count", res["rank_defect"], 0.0),
        Check("kvl_residual", res["kvl"], 1e-9),
        Check("lagrangian_agreement", res["lagrangian_agreement"], 1e-9),
        Check("io_rank_bound", res["io_rank_bound"], 0.0),
        Check("output_norm_bound", res["output_norm_bound"], 1e-12),
    ]
    grid = grid_graph(3, 3)
    worst = 0.0
    for _ in range(n_grid):
        c = Circuit(grid, log_uniform_r(rng, grid.n_edges))
        sel = random_selectors(rng, grid.n_edges)
        x = rng.standard_normal(len(sel.inputs))
        y = rng.standard_normal(len(sel.outputs))
        g = analytical_gradient_ls(c, sel, x, y).g
        fd = fd_gradient_ls(c, sel, x, y)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300))
    checks.append(Check("analytical_vs_finite_difference", worst, 1e-5))
    slopes = []
    for _ in range(10):
        c = Circuit(grid, log_uniform_r(rng, grid.n_edges))
        sel = random_selectors(rng, grid.n_edges)
        conv = two_phase_convergence(c, sel, rng.standard_normal(len(sel.inputs)),
                                     rng.standard_normal(len(sel.outputs)))
        slopes.append(abs(conv.slope - 1.0))
    checks.append(Check("two_phase_slope_minus_one", max(slopes), 0.1))
    return checks


def _unbounded(circuit, r):
    # finite-difference probes may step just outside the hardware bounds
    return Circuit(circuit.graph, r, 1e-300, np.inf, cycles=circuit.cycles)


def loss_ls(circuit: Circuit, sel: Selectors, x, y, gamma: float = 1.0) -> float:
    out = io_map(circuit, sel, gamma) @ np.asarray(x, dtype=float)
    d = out - np.asarray(y, dtype=float)
    return float(0.5 * d @ d)


def fd_gradient_ls(circuit: Circuit, sel: Selectors, x, y, gamma: float = 1.0,
                   rel_step: float = 1e-6) -> np.ndarray:
    """Central differences of the least-squares loss, step ``rel_step * r_e``."""
    r = circuit.r
    g = np.empty_like(r)
    for e in range(r.size):
        h = rel_step * r[e]
        rp, rm = r.copy(), r.copy()
        rp[e] += h
        rm[e] -= h
        cp = _unbounded(circuit, rp)
        cm = _unbounded(circuit, rm)
        g[e] = (loss_ls(cp, sel, x, y, gamma) - loss_ls(cm, sel, x, y, gamma)) / (2 * h)
    return g


def fd_gradient_hinge(circuit: Circuit, sel: Selectors, x, label, gamma: float = 1.0,
                      rel_step: float = 1e-6) -> np.ndarray:
    r = circuit.r
    o = sel.outputs[0]

    def loss(rr):
        c = _unbounded(circuit, rr)
        s = np.zeros(rr.size)
        s[list(sel.inputs)] = gamma * np.asarray(x, dtype=float)
        return max(0.0, 1.0 - label * solve_voltage_mode(c, s).v[o])

    g = np.empty_like(r)
    for e in range(r.size):
        h = rel_step * r[e]
        rp, rm = r.copy(), r.copy()
        rp[e] += h
        rm[e] -= h
        g[e] = (loss(rp) - loss(rm)) / (2 * h)
    return g


@dataclass(frozen=True)
class Convergence:
    betas: np.ndarray
    deviations: np.ndarray
    slope: float


def two_phase_convergence(circuit: Circuit, sel: Selectors, x, y, gamma: float = 1.0,
                          betas=(1e-1, 1e-2, 1e-3, 1e-4)) -> Convergence:
    """Distance of the contrastive estimate from its zero-nudge limit, and its log-log slope."""
    lim = two_phase_limit(circuit, sel, x, y, gamma).g
    betas = np.asarray(betas, dtype=float)
    dev = np.array([np.linalg.norm(two_phase_gradient(circuit, sel, x, y, gamma, b).g - lim)
                    for b in betas])
    slope = np.polyfit(np.log(betas), np.log(dev), 1)[0] if np.all(dev > 0) else float("nan")
    return Convergence(betas, dev, float(slope))


# ---------------------------------------------------------------------------
# noise bias

@dataclass
class BiasReport:
    predicted: np.ndarray
    empirical: np.ndarray
    std_error: np.ndarray
    analytical_shift: np.ndarray
    analytical_std_error: np.ndarray
    draws: int

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.empirical - self.predicted) / self.std_error
        return np.where(self.std_error > 0, z, np.where(self.empirical == self.predicted, 0.0, np.inf))

    @property
    def analytical_z(self) -> np.ndarray:
        se = self.analytical_std_error
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.analytical_shift / se
        return np.where(se > 0, z, np.where(self.analytical_shift == 0, 0.0, np.inf))

    def rows(self):
        z = self.z
        for e in range(self.predicted.size):
            yield (e, float(self.predicted[e]), float(self.empirical[e]), float(self.std_error[e]),
                   float(z[e]), float(self.analytical_shift[e]), float(self.analytical_std_error[e]))


def bias_experiment(circuit: Circuit, sel: Selectors, x, y_clean, beta: float = 0.3,
                    sigma: float = 3.0, draws: int = 10_000, gamma: float = 1.0,
                    seed=0) -> BiasReport:
    """Monte-Carlo mean shift of both estimators under isotropic target noise."""
    rng = np.random.default_rng(seed)
    y_clean = np.asarray(y_clean, dtype=float)
    clean_tp = two_phase_gradient(circuit, sel, x, y_clean, gamma, beta).g
    clean_an = analytical_gradient_ls(circuit, sel, x, y_clean, gamma).g
    eps = sigma * rng.standard_normal((draws, y_clean.size))
    tp = np.array([two_phase_gradient(circuit, sel, x, y_clean + e, gamma, beta).g for e in eps])
    an = np.array([analytical_gradient_ls(circuit, sel, x, y_clean + e, gamma).g for e in eps])
    pred = bias_prediction(circuit, sel, beta, NoiseModel.isotropic(sigma, y_clean.size, draws))
    se = lambda a: a.std(axis=0, ddof=1) / np.sqrt(draws)  # noqa: E731
    return BiasReport(pred, tp.mean(axis=0) - clean_tp, se(tp), an.mean(axis=0) - clean_an,
                      se(an), draws)


# ---------------------------------------------------------------------------
# GEP suite

def scalar_quadratic(a: float = 2.0, target: float = 0.0, nudge: str = "ep", mobility=None):
    """``E = 0.5 y^2 - theta y``; with ``theta = a`` the free equilibrium is ``y = a``."""
    return quadratic_system([[1.0]], [[1.0]], [[1.0]], [target], nudge, mobility)


def gep_sweep(system, theta, betas, delta: float = 1e-4):
    """Rows ``(beta, estimate, oracle, abs_error)`` for the first parameter component."""
    oracle = objective_gradient_oracle(system, theta, delta)
    rows = []
    for b in betas:
        est = gep_estimate(system, theta, b)
        rows.append((float(b), float(est[0]), float(oracle[0]),
                     float(np.max(np.abs(est - oracle)))))
    return rows


def random_quadratic_parts(rng, n: int = 4, p: int = 3, m: int = 2):
    """``(H, B, P, target)`` for a random SPD quadratic with ``p`` parameters."""
    G = rng.standard_normal((n, n))
    H = G @ G.T + n * np.eye(n)
    B = rng.standard_normal((n, p))
    P = np.eye(n)[rng.choice(n, m, replace=False)]
    return H, B, P, rng.standard_normal(m)


def random_spd(rng, n: int) -> np.ndarray:
    G = rng.standard_normal((n, n))
    return G @ G.T + 0.5 * np.eye(n)


def gep_suite(seed: int = 0):
    """Returns ``(checks, sweep_rows)`` for the GEP verification command."""
    rng = np.random.default_rng(seed)
    theta = np.array([2.0])
    sys_ep = scalar_quadratic(2.0, 0.0, "ep")
    betas = [0.1, 0.05, 0.025]
    sweep = gep_sweep(sys_ep, theta, betas)
    extrap = richardson_extrapolate(betas, [[r[1]] for r in sweep])[0]
    checks = [
        Check("scalar_ep_beta_0.1", abs(sweep[0][1] - 2 / 1.1), 1e-8),
        Check("richardson_vs_oracle", abs(extrap - sweep[0][2]), 1e-3),
    ]
    ep_orders, cl_orders, err_slopes, mob = [], [], [], []
    fit_betas = np.logspace(-4, -1, 7)
    for _ in range(5):
        th = rng.standard_normal(3)
        parts = random_quadratic_parts(rng)
        ep = quadratic_system(*parts, "ep")
        cl = quadratic_system(*parts, "cl")
        ep_orders.append(abs(nudge_order_fit(ep, th, fit_betas) - 1.0))
        cl_orders.append(abs(nudge_order_fit(cl, th, fit_betas) - 2.0))
        oracle = objective_gradient_oracle(ep, th)
        eb = np.array([1e-1, 3e-2, 1e-2])
        errs = [np.linalg.norm(gep_estimate(ep, th, b) - oracle) for b in eb]
        err_slopes.append(abs(np.polyfit(np.log(eb), np.log(errs), 1)[0] - 1.0))
        gam = random_spd(rng, ep.dim)
        y_id = relax(ep, th, 0.3).y
        y_g = relax(ep.with_mobility(gam), th, 0.3).y
        mob.append(np.max(np.abs(y_id - y_g)))
    checks += [
        Check("ep_nudge_order_minus_one", max(ep_orders), 0.05),
        Check("cl_nudge_order_minus_two", max(cl_orders), 0.05),
        Check("gep_error_slope_minus_one", max(err_slopes), 0.1),
        Check("mobility_invariance", max(mob), 1e-8),
    ]
    return checks, sweep


# ---------------------------------------------------------------------------
# regression on nanowire networks

REGRESSION_GAMMA = 10.0


@dataclass(frozen=True)
class RegressionRun:
    network: int
    sigma: float
    estimator: str
    final_loss: float
    frobenius_error: float
    losses: tuple = field(repr=False, default=())

    def row(self):
        return self.network, self.sigma, self.estimator, self.final_loss, self.frobenius_error


def nanowire_instances(n_networks: int, n_wires: int = 60, length: float = 0.3, seed: int = 0,
                       n_inputs: int = 2, n_outputs: int = 2, max_tries: int = 1000):
    """First ``n_networks`` seeds (from ``seed`` upward) whose chord component fits the I/O."""
    out = []
    s = seed
    while len(out) < n_networks:
        if s - seed >= max_tries:
            raise InsufficientChordsError(f"only {len(out)} usable networks in {max_tries} seeds")
        try:
            net = generate_nanowire_network(n_wires, length, s)
            sel = choose_io_edges(net.graph, n_inputs, n_outputs, net.rng)
        except (SparseDepositionError, InsufficientChordsError):
            s += 1
            continue
        out.append((s, net, sel))
        s += 1
    return out


def regression_protocol(n_networks: int = 10, n_wires: int = 60, length: float = 0.3,
                        sigmas=(0.0, 3.0), estimators=("analytical", "two-phase"),
                        steps: int = 1000, count: int = 200, gamma: float = REGRESSION_GAMMA,
                        beta: float = 0.3, seed: int = 0, screen: bool = False,
                        screen_step: int = 20) -> list[RegressionRun]:
    """Train every estimator on every network and noise level; report loss and ``||W - M||_F``.

    With ``screen=True`` four times as many networks are generated and the
    quarter with the lowest mean loss at ``screen_step`` (noiseless data,
    averaged over estimators) is kept.
    """
    pool = nanowire_instances(n_networks * (4 if screen else 1), n_wires, length, seed)
    if screen:
        scores = []
        for s, net, sel in pool:
            data = gen_regression(2, 2, 0.0, count, s)
            vals = []
            for est in estimators:
                c = Circuit(net.graph)
                t = train(c, sel, data, TrainConfig(estimator=est, beta=beta, gamma=gamma,
                                                    steps=screen_step, seed=s))
                vals.append(t.losses[-1])
            scores.append(np.mean(vals))
        keep = np.argsort(scores, kind="stable")[:n_networks]
        pool = [pool[k] for k in sorted(keep)]
    runs = []
    for s, net, sel in pool:
        for sigma in sigmas:
            data = gen_regression(len(sel.inputs), len(sel.outputs), sigma, count, s)
            for est in estimators:
                c = Circuit(net.graph)
                t = train(c, sel, data, TrainConfig(estimator=est, beta=beta, gamma=gamma,
                                                    steps=steps, seed=s))
                W = io_map(c, sel, gamma)
                runs.append(RegressionRun(s, float(sigma), est, t.losses[-1],
                                          float(np.linalg.norm(W - data.true_map)),
                                          tuple(t.losses)))
    return runs


def summarize_regression(runs):
    """Mean final loss and Frobenius error per ``(sigma, estimator)``."""
    out = {}
    for key in sorted({(r.sigma, r.estimator) for r in runs}):
        sub = [r for r in runs if (r.sigma, r.estimator) == key]
        out[key] = (float(np.mean([r.final_loss for r in sub])),
                    float(np.mean([r.frobenius_error for r in sub])))
    return out


# ---------------------------------------------------------------------------
# WDBC classification

WDBC_GRID = (5, 5)
WDBC_IO_SEED = 3
WDBC_GAMMA = 10.0
WDBC_ETA = 0.1
WDBC_BETA = 0.01


@dataclass
class ClassificationResult:
    estimator: str
    train_accuracy: float
    test_accuracy: float
    untrained_test_accuracy: float
    circuit: Circuit
    selectors: Selectors
    trajectory: object
    train_data: Dataset
    test_data: Dataset


def wdbc_features(dataset: Dataset, split_seed: int = 0, dims: int = 3):
    """Stratified 80/20 split, then PCA fitted on the training part only."""
    tr, te = stratified_split(dataset, 0.2, split_seed)
    pca = StandardizedPCA(dims).fit(tr.X)
    return tr.with_inputs(pca.transform(tr.X)), te.with_inputs(pca.transform(te.X))


def wdbc_setup(graph: CircuitGraph | None = None, io_seed: int = WDBC_IO_SEED,
               sel: Selectors | None = None):
    graph = grid_graph(*WDBC_GRID) if graph is None else graph
    sel = choose_io_edges(graph, 3, 1, io_seed) if sel is None else sel
    return graph, sel


def wdbc_classification(dataset: Dataset, estimator: str = "hinge-analytical",
                        split_seed: int = 0, steps: int = 1000, gamma: float = WDBC_GAMMA,
                        eta: float = WDBC_ETA, beta: float = WDBC_BETA, seed: int = 0,
                        graph: CircuitGraph | None = None, sel: Selectors | None = None,
                        p_freeze: float = 0.0) -> ClassificationResult:
    graph, sel = wdbc_setup(graph, sel=sel)
    tr, te = wdbc_features(dataset, split_seed)
    c = Circuit(graph)
    base = accuracy(c, sel, te, gamma)
    cfg = TrainConfig(estimator=estimator, eta=eta, beta=beta, gamma=gamma, steps=steps,
                      seed=seed, p_freeze=p_freeze)
    traj = train(c, sel, tr, cfg)
    return ClassificationResult(estimator, accuracy(c, sel, tr, gamma), accuracy(c, sel, te, gamma),
                                base, c, sel, traj, tr, te)


__all__ = [
    "Check", "verify_suite", "fd_gradient_ls", "fd_gradient_hinge", "two_phase_convergence",
    "bias_experiment", "BiasReport", "gep_suite", "gep_sweep", "scalar_quadratic",
    "random_quadratic_parts", "random_spd", "regression_protocol", "summarize_regression",
    "nanowire_instances", "wdbc_classification", "wdbc_features", "wdbc_setup",
    "full_batch_loss", "make_selectors", "random_instance", "random_selectors", "log_uniform_r",
]
