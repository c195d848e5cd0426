"""Training loops, the freeze-probability sweep and loss-landscape sampling."""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import Circuit, io_map
from .datasets import Dataset
from .errors import DegenerateFitError, DivergenceError, OhmgradError
from .gradients import (
    analytical_gradient_ls,
    hinge_subgradient,
    hinge_two_phase_gradient,
    two_phase_gradient,
)
from .graph import Selectors

ESTIMATORS = ("analytical", "two-phase", "hinge-analytical", "hinge-two-phase")
TWO_PHASE = ("two-phase", "hinge-two-phase")
# learning rates used with beta = 0.3 for noisy regression
DEFAULT_ETA = {"analytical": 0.3, "two-phase": 1.0, "hinge-analytical": 0.3, "hinge-two-phase": 1.0}


@dataclass(frozen=True)
class TrainConfig:
    estimator: str = "analytical"
    eta: float | None = None
    beta: float = 0.3
    gamma: float = 1.0
    steps: int = 1000
    r_min: float = 0.1
    r_max: float = 10.0
    r_init: float | None = 1.0
    p_freeze: float = 0.0
    seed: int = 0
    snapshot_every: int = 10

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.eta is None:
            object.__setattr__(self, "eta", DEFAULT_ETA[self.estimator])
        if self.eta < 0:
            raise ValueError("learning rate must be >= 0")
        if self.estimator in TWO_PHASE and not self.beta > 0:
            raise ValueError("two-phase estimators need beta > 0")
        if not 0.0 <= self.p_freeze <= 1.0:
            raise ValueError("p_freeze must lie in [0, 1]")
        if self.steps < 0 or self.snapshot_every < 1:
            raise ValueError("steps must be >= 0 and snapshot_every >= 1")
        if not 0 < self.r_min <= self.r_max:
            raise ValueError("need 0 < r_min <= r_max")

    @property
    def is_hinge(self) -> bool:
        return self.estimator.startswith("hinge")


@dataclass
class Trajectory:
    """Per-step training record; ``snapshots`` maps step -> resistance vector."""

    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    accuracies: list[float | None] = field(default_factory=list)
    snapshot_steps: list[int] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    mask: np.ndarray | None = None
    r_initial: np.ndarray | None = None
    r_final: np.ndarray | None = None
    wall_time: float = 0.0

    def rows(self):
        for s, l, a in zip(self.steps, self.losses, self.accuracies):
            yield s, l, a


def predict(circuit: Circuit, sel: Selectors, X, gamma: float = 1.0) -> np.ndarray:
    """Readout voltages for every row of ``X`` (shape ``(n, E_o)``)."""
    return np.asarray(X, dtype=float) @ io_map(circuit, sel, gamma).T


def full_batch_loss(circuit: Circuit, sel: Selectors, data: Dataset, gamma: float = 1.0) -> float:
    """Mean per-sample loss: ``0.5 ||y_hat - y||^2`` or hinge ``max(0, 1 - y f)``."""
    with np.errstate(over="ignore", invalid="ignore"):  # non-finite losses are caught by train()
        out = predict(circuit, sel, data.X, gamma)
        if data.kind == "regression":
            return float(0.5 * np.mean(np.sum((out - data.y) ** 2, axis=1)))
        return float(np.mean(np.maximum(0.0, 1.0 - data.y * out[:, 0])))


def accuracy(circuit: Circuit, sel: Selectors, data: Dataset, gamma: float = 1.0,
             readout: str = "single") -> float:
    """Fraction of correct signs; ``readout="argmax"`` compares two output voltmeters."""
    out = predict(circuit, sel, data.X, gamma)
    if readout == "argmax":
        if out.shape[1] != 2:
            raise ValueError("argmax readout needs exactly two output edges")
        pred = np.where(out[:, 0] >= out[:, 1], 1, -1)
    else:
        pred = np.where(out[:, 0] >= 0, 1, -1)
    return float(np.mean(pred == data.y))


def _estimate(circuit, sel, x, y, cfg):
    if cfg.estimator == "analytical":
        return analytical_gradient_ls(circuit, sel, x, y, cfg.gamma)
    if cfg.estimator == "two-phase":
        return two_phase_gradient(circuit, sel, x, y, cfg.gamma, cfg.beta)
    if cfg.estimator == "hinge-analytical":
        return hinge_subgradient(circuit, sel, x, int(y), cfg.gamma)
    return hinge_two_phase_gradient(circuit, sel, x, int(y), cfg.gamma, cfg.beta)


def train(circuit: Circuit, sel: Selectors, dataset: Dataset, cfg: TrainConfig) -> Trajectory:
    """Single-sample training with clipping and a frozen-edge mask.

    The circuit is reset to ``cfg.r_init`` (if given), then for each step one
    example is drawn from a per-epoch shuffled order, the configured estimate
    is masked and ``r <- clip(r - eta * g, r_min, r_max)``. The full-batch loss
    (and accuracy, for classification) is recorded after every step, with the
    initial state recorded as step 0. ``circuit`` is modified in place.
    """
    if cfg.is_hinge and len(sel.outputs) != 1:
        raise ValueError(f"{cfg.estimator} needs exactly one output edge")
    if cfg.is_hinge != (dataset.kind == "classification"):
        raise ValueError(f"estimator {cfg.estimator} does not match a {dataset.kind} dataset")
    if dataset.X.shape[1] != len(sel.inputs):
        raise ValueError("dataset input width does not match the input edges")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    E = circuit.n_edges
    mask = rng.random(E) >= cfg.p_freeze
    if cfg.r_init is not None:
        circuit.set_resistances(np.full(E, float(cfg.r_init)))
    traj = Trajectory(mask=mask, r_initial=circuit.r.copy())
    lo, hi = max(cfg.r_min, circuit.r_min), min(cfg.r_max, circuit.r_max)

    def record(step):
        loss = full_batch_loss(circuit, sel, dataset, cfg.gamma)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became non-finite at step {step}", step)
        traj.steps.append(step)
        traj.losses.append(loss)
        traj.accuracies.append(
            accuracy(circuit, sel, dataset, cfg.gamma) if dataset.kind == "classification" else None
        )
        if step % cfg.snapshot_every == 0 or step == cfg.steps:
            traj.snapshot_steps.append(step)
            traj.snapshots.append(circuit.r.copy())

    record(0)
    order = np.empty(0, dtype=int)
    for step in range(1, cfg.steps + 1):
        if order.size == 0:
            order = rng.permutation(len(dataset))
        k, order = order[0], order[1:]
        est = _estimate(circuit, sel, dataset.X[k], dataset.y[k], cfg)
        g = np.where(mask, est.g, 0.0)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient at step {step}", step)
        r_new = circuit.r - cfg.eta * g
        circuit.set_resistances(np.clip(r_new, lo, hi))
        record(step)
    traj.r_final = circuit.r.copy()
    traj.wall_time = time.perf_counter() - t0
    return traj


@dataclass(frozen=True)
class TrialResult:
    estimator: str
    p_freeze: float
    trial: int
    seed: int
    accuracy: float | None
    trajectory: Trajectory | None = field(default=None, repr=False)
    error: str | None = None


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    p_freeze: float
    mean_acc: float
    std_acc: float
    trials: int
    failures: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    trials: list[TrialResult]


def freeze_sweep(circuit_factory, sel: Selectors, dataset: Dataset, cfg: TrainConfig,
                 p_list, trials: int, eval_dataset: Dataset | None = None,
                 estimators=None, threads: int = 1, keep_trajectories: bool = True) -> SweepReport:
    """Train ``trials`` seeded runs per freeze probability (and estimator).

    Trial ``t`` uses seed ``cfg.seed + t``; a fresh circuit comes from
    ``circuit_factory()`` for every trial. Accuracy is measured on
    ``eval_dataset`` (defaults to the training data). Failed trials are
    recorded and excluded from the statistics.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    estimators = [cfg.estimator] if estimators is None else list(estimators)
    evald = dataset if eval_dataset is None else eval_dataset
    jobs = [(est, float(p), t) for est in estimators for p in p_list for t in range(trials)]

    def run(job):
        est, p, t = job
        tcfg = replace(cfg, estimator=est, p_freeze=p, seed=cfg.seed + t,
                       eta=cfg.eta if est == cfg.estimator else None)
        circuit = circuit_factory()
        try:
            traj = train(circuit, sel, dataset, tcfg)
        except (OhmgradError, ValueError, ArithmeticError) as exc:
            return TrialResult(est, p, t, tcfg.seed, None, None, f"{type(exc).__name__}: {exc}")
        acc = accuracy(circuit, sel, evald, tcfg.gamma)
        return TrialResult(est, p, t, tcfg.seed, acc, traj if keep_trajectories else None)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
        # ordering of results follows jobs, independent of scheduling
    else:
        results = [run(j) for j in jobs]

    rows = []
    for est in estimators:
        for p in p_list:
            accs = [r.accuracy for r in results
                    if r.estimator == est and r.p_freeze == float(p) and r.error is None]
            fails = sum(1 for r in results
                        if r.estimator == est and r.p_freeze == float(p) and r.error is not None)
            # statistics rounds exactly, so identical accuracies keep their value
            mean = float(statistics.mean(accs)) if accs else float("nan")
            std = float(statistics.pstdev(accs)) if accs else float("nan")
            rows.append(SweepRow(est, float(p), mean, std, len(accs), fails))
    return SweepReport(rows, results)


@dataclass(frozen=True)
class Landscape:
    """Loss samples on a ``q1 x q2`` grid around ``r0`` plus trajectory coordinates."""

    r0: np.ndarray
    directions: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    loss: np.ndarray
    trajectory_steps: np.ndarray
    trajectory_coords: np.ndarray

    def rows(self):
        for a, b, l in zip(self.q1, self.q2, self.loss):
            yield float(a), float(b), float(l)


def principal_directions(offsets) -> np.ndarray:
    """Top-two principal directions (unit rows) of resistance offsets.

    Each direction is signed so that its largest-magnitude entry is positive.
    """
    D = np.asarray(offsets, dtype=float)
    if D.shape[0] < 2 or np.allclose(D, D[0], rtol=0, atol=0):
        raise DegenerateFitError("trajectory snapshots are all identical; no direction of variation")
    centered = D - D.mean(axis=0)
    if not np.any(centered):
        raise DegenerateFitError("trajectory snapshots are all identical; no direction of variation")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    dirs = vt[:2]
    if dirs.shape[0] < 2:
        raise DegenerateFitError("need at least two edges for a two-dimensional landscape")
    idx = np.argmax(np.abs(dirs), axis=1)
    return dirs * np.sign(dirs[np.arange(2), idx])[:, None]


def landscape_sample(trajectory: Trajectory, circuit_factory, sel: Selectors, dataset: Dataset,
                     grid_range=(-1.5, 1.5), resolution: int = 21, gamma: float = 1.0) -> Landscape:
    """Full-batch loss at ``r0 + q1 d1 + q2 d2`` over a ``resolution x resolution`` grid.

    ``circuit_factory(r)`` must build a circuit with resistances ``r``; points
    are clipped into the circuit's resistance bounds before evaluation.
    """
    snaps = np.asarray(trajectory.snapshots, dtype=float)
    if len(snaps) < 3:
        raise ValueError("landscape needs at least three resistance snapshots")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    r0 = snaps[0]
    dirs = principal_directions(snaps - r0)
    lo, hi = grid_range
    axis = np.linspace(lo, hi, resolution)
    Q1, Q2 = np.meshgrid(axis, axis, indexing="ij")
    template = circuit_factory(r0)
    losses = np.empty(Q1.size)
    for k, (a, b) in enumerate(zip(Q1.ravel(), Q2.ravel())):
        r = template.clip(r0 + a * dirs[0] + b * dirs[1])
        losses[k] = full_batch_loss(circuit_factory(r), sel, dataset, gamma)
    coords = (snaps - r0) @ dirs.T
    return Landscape(r0, dirs, Q1.ravel(), Q2.ravel(), losses,
                     np.asarray(trajectory.snapshot_steps), coords)


def landscape_loss(landscape_r0, directions, q1, q2, circuit_factory, sel, dataset, gamma=1.0):
    """Single landscape value ``S(q1, q2)``."""
    template = circuit_factory(landscape_r0)
    r = template.clip(landscape_r0 + q1 * directions[0] + q2 * directions[1])
    return full_batch_loss(circuit_factory(r), sel, dataset, gamma)
