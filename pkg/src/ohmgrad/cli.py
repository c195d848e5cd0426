"""Command-line interface: ``ohmgrad <command> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import csv_io
from .circuit import Circuit, io_map, solve_voltage_mode, write_circuit
from .datasets import StandardizedPCA, bundled_wdbc, gen_regression, load_wdbc, stratified_split
from .errors import (
    ConfigError,
    ConvergenceError,
    DatasetParseError,
    DivergenceError,
    GraphError,
    InsufficientChordsError,
    NumericalError,
    SelectorError,
    SparseDepositionError,
)
from .experiments import bias_experiment, gep_suite, verify_suite
from .gradients import analytical_gradient_ls, two_phase_gradient, two_phase_limit
from .graph import CircuitGraph, make_selectors, read_graph
from .topology import choose_io_edges, generate_nanowire_network, grid_graph
from .training import ESTIMATORS, TrainConfig, accuracy, freeze_sweep, landscape_sample, train

COMMANDS = ("gen", "train", "freeze-sweep", "bias-exp", "gep-verify", "verify", "landscape")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_TOPOLOGY = 4
EXIT_NUMERICAL = 5
EXIT_CHECK_FAILED = 6
EXIT_OUTPUT = 7

EXIT_HELP = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_UNEXPECTED}  unexpected internal error
  {EXIT_USAGE}  invalid arguments or configuration
  {EXIT_INPUT}  unreadable or malformed input file (graph, dataset)
  {EXIT_TOPOLOGY}  topology or selector problem (sparse deposition, too few chords, bad graph)
  {EXIT_NUMERICAL}  numerical failure (divergence, non-convergence, non-finite values)
  {EXIT_CHECK_FAILED}  a verification command found a violated invariant
  {EXIT_OUTPUT}  output directory could not be written

environment:
  OHMGRAD_THREADS  worker threads when --threads is not given (default 1)
"""


@dataclass
class RunConfig:
    command: str
    grid: tuple | None = None
    nanowire: dict | None = None
    graph: str | None = None
    inputs: tuple | None = None
    outputs: tuple | None = None
    n_inputs: int = 2
    n_outputs: int = 2
    io_seed: int | None = None
    estimator: str = "analytical"
    eta: float | None = None
    beta: float = 0.3
    gamma: float = 1.0
    steps: int = 1000
    r_min: float = 0.1
    r_max: float = 10.0
    r_init: float = 1.0
    p_freeze: float = 0.0
    seed: int = 0
    snapshot_every: int = 10
    dataset: str = "regression"
    wdbc_path: str | None = None
    samples: int = 200
    sigma: float = 0.0
    split_seed: int = 0
    p_list: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    trials: int = 10
    estimators: tuple | None = None
    draws: int = 10_000
    n_graphs: int = 100
    resolution: int = 21
    grid_range: tuple = (-1.5, 1.5)
    out: str = "ohmgrad-out"
    threads: int = 1
    extra: dict = field(default_factory=dict, repr=False)

    def train_config(self, estimator: str | None = None) -> TrainConfig:
        est = estimator or self.estimator
        return TrainConfig(estimator=est, eta=self.eta if estimator in (None, self.estimator) else None,
                           beta=self.beta, gamma=self.gamma, steps=self.steps, r_min=self.r_min,
                           r_max=self.r_max, r_init=self.r_init, p_freeze=self.p_freeze,
                           seed=self.seed, snapshot_every=self.snapshot_every)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"extra"}
TOPOLOGY_KEYS = ("grid", "nanowire", "graph")


def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _parse_float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _parse_nanowire(text) -> dict:
    if isinstance(text, dict):
        params = dict(text)
    else:
        params = {}
        for part in str(text).split(","):
            if "=" not in part:
                raise ConfigError(f"--nanowire must look like n=200,l=0.3,seed=1; got {text!r}")
            k, v = part.split("=", 1)
            params[k.strip()] = v.strip()
    unknown = set(params) - {"n", "l", "seed"}
    if unknown:
        raise ConfigError(f"unknown nanowire key {sorted(unknown)[0]!r} (valid: n, l, seed)")
    if "n" not in params:
        raise ConfigError("--nanowire needs n")
    try:
        return {"n": int(params["n"]), "l": float(params.get("l", 0.3)),
                "seed": int(params.get("seed", 0))}
    except ValueError as exc:
        raise ConfigError(f"bad nanowire value: {exc}") from exc


def _coerce(cfg: dict) -> dict:
    out = dict(cfg)
    if out.get("grid") is not None:
        g = out["grid"]
        g = _parse_int_list(g) if isinstance(g, str) else tuple(int(v) for v in g)
        if len(g) != 2:
            raise ConfigError(f"grid must have two dimensions, got {list(g)}")
        out["grid"] = g
    if out.get("nanowire") is not None:
        out["nanowire"] = _parse_nanowire(out["nanowire"])
    for key in ("inputs", "outputs"):
        if out.get(key) is not None:
            v = out[key]
            out[key] = _parse_int_list(v) if isinstance(v, str) else tuple(int(x) for x in v)
    for key in ("p_list", "grid_range"):
        if key in out and out[key] is not None:
            v = out[key]
            out[key] = _parse_float_list(v) if isinstance(v, str) else tuple(float(x) for x in v)
    if out.get("estimators") is not None:
        v = out["estimators"]
        out["estimators"] = tuple(v.split(",")) if isinstance(v, str) else tuple(v)
    return out


def _check_range(name, value, lo=None, hi=None, lo_open=False, integer=False):
    if integer and (isinstance(value, bool) or int(value) != value):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    ok = True
    if lo is not None:
        ok = value > lo if lo_open else value >= lo
    if hi is not None:
        ok = ok and value <= hi
    if not ok:
        left = "(" if lo_open else "["
        raise ConfigError(f"{name} = {value!r} outside valid range {left}{lo}, {hi if hi is not None else 'inf'}]")


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}; valid: {', '.join(COMMANDS)}")
    sources = [k for k in TOPOLOGY_KEYS if getattr(cfg, k) is not None]
    if len(sources) > 1:
        raise ConfigError(f"conflicting topology sources: {' and '.join(sources)}; give exactly one")
    if cfg.estimator not in ESTIMATORS:
        raise ConfigError(f"estimator {cfg.estimator!r} invalid; valid: {', '.join(ESTIMATORS)}")
    for est in cfg.estimators or ():
        if est not in ESTIMATORS:
            raise ConfigError(f"estimator {est!r} invalid; valid: {', '.join(ESTIMATORS)}")
    two_phase = [e for e in (cfg.estimator, *(cfg.estimators or ())) if "two-phase" in e]
    if two_phase and cfg.beta == 0:
        raise ConfigError("beta = 0 is invalid with a two-phase estimator; valid range: beta > 0")
    if cfg.eta is not None:
        _check_range("eta", cfg.eta, 0)
    _check_range("gamma", cfg.gamma, 0, lo_open=True)
    _check_range("steps", cfg.steps, 0, integer=True)
    _check_range("r_min", cfg.r_min, 0, lo_open=True)
    _check_range("r_max", cfg.r_max, cfg.r_min)
    _check_range("r_init", cfg.r_init, cfg.r_min, cfg.r_max)
    _check_range("p_freeze", cfg.p_freeze, 0, 1)
    for p in cfg.p_list:
        _check_range("p_list entry", p, 0, 1)
    _check_range("trials", cfg.trials, 1, integer=True)
    _check_range("samples", cfg.samples, 1, integer=True)
    _check_range("sigma", cfg.sigma, 0)
    _check_range("draws", cfg.draws, 2, integer=True)
    _check_range("n_graphs", cfg.n_graphs, 1, integer=True)
    _check_range("resolution", cfg.resolution, 1, integer=True)
    _check_range("snapshot_every", cfg.snapshot_every, 1, integer=True)
    _check_range("threads", cfg.threads, 1, integer=True)
    _check_range("n_inputs", cfg.n_inputs, 0, integer=True)
    _check_range("n_outputs", cfg.n_outputs, 0, integer=True)
    if len(cfg.grid_range) != 2 or cfg.grid_range[0] >= cfg.grid_range[1]:
        raise ConfigError(f"grid_range must be [low, high] with low < high, got {list(cfg.grid_range)}")
    if cfg.dataset not in ("regression", "wdbc"):
        raise ConfigError(f"dataset {cfg.dataset!r} invalid; valid: regression, wdbc")
    if (cfg.inputs is None) != (cfg.outputs is None):
        raise ConfigError("give both inputs and outputs, or neither")
    if cfg.grid is not None and min(cfg.grid) < 1:
        raise ConfigError(f"grid dimensions must be >= 1, got {list(cfg.grid)}")
    if cfg.nanowire is not None:
        _check_range("nanowire n", cfg.nanowire["n"], 2, integer=True)
        _check_range("nanowire l", cfg.nanowire["l"], 0, lo_open=True)
    for path_key in ("graph", "wdbc_path"):
        p = getattr(cfg, path_key)
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"{path_key} file not found: {p}")
    out = Path(cfg.out)
    parent = out if out.exists() else out.parent
    while not parent.exists() and parent != parent.parent:
        parent = parent.parent
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if not os.access(parent, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="JSON config file")
    g.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads (fallback: OHMGRAD_THREADS)")
    t = common.add_argument_group("topology and selectors")
    t.add_argument("--grid", metavar="R,C", default=argparse.SUPPRESS)
    t.add_argument("--nanowire", metavar="n=N,l=L,seed=S", default=argparse.SUPPRESS)
    t.add_argument("--graph", metavar="PATH", default=argparse.SUPPRESS, help="graph JSON file")
    t.add_argument("--inputs", metavar="I,J", default=argparse.SUPPRESS)
    t.add_argument("--outputs", metavar="I,J", default=argparse.SUPPRESS)
    t.add_argument("--n-inputs", dest="n_inputs", type=int, default=argparse.SUPPRESS)
    t.add_argument("--n-outputs", dest="n_outputs", type=int, default=argparse.SUPPRESS)
    t.add_argument("--io-seed", dest="io_seed", type=int, default=argparse.SUPPRESS)
    tr = common.add_argument_group("training")
    tr.add_argument("--estimator", choices=ESTIMATORS, default=argparse.SUPPRESS)
    tr.add_argument("--estimators", metavar="A,B", default=argparse.SUPPRESS)
    for name, typ in (("eta", float), ("beta", float), ("gamma", float), ("steps", int),
                      ("r-min", float), ("r-max", float), ("r-init", float),
                      ("p-freeze", float), ("snapshot-every", int)):
        tr.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ, default=argparse.SUPPRESS)
    d = common.add_argument_group("data and experiments")
    d.add_argument("--dataset", choices=("regression", "wdbc"), default=argparse.SUPPRESS)
    d.add_argument("--wdbc", dest="wdbc_path", metavar="PATH", default=argparse.SUPPRESS,
                   help="UCI wdbc.data file (default: copy bundled with scikit-learn)")
    for name, typ in (("samples", int), ("sigma", float), ("split-seed", int), ("trials", int),
                      ("draws", int), ("n-graphs", int), ("resolution", int)):
        d.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ, default=argparse.SUPPRESS)
    d.add_argument("--p-list", dest="p_list", metavar="P,Q", default=argparse.SUPPRESS)
    d.add_argument("--grid-range", dest="grid_range", metavar="LO,HI", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="ohmgrad", parents=[common],
        description="Simulate and train passive resistor networks.",
        epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    helps = {
        "gen": "build a topology (and selectors) and write it as JSON",
        "train": "train one circuit and write the per-step CSV",
        "freeze-sweep": "accuracy versus freeze probability",
        "bias-exp": "Monte-Carlo check of the noise-induced estimator bias",
        "gep-verify": "equilibrium-propagation identity and nudge-order checks",
        "verify": "projector, solver and gradient invariants on random graphs",
        "landscape": "train, then sample the loss on the top-2 trajectory directions",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], epilog=EXIT_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def parse_config(argv=None, env=None) -> RunConfig:
    """Merge a JSON config file (``--config``) with command-line flags; flags win."""
    env = os.environ if env is None else env
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    merged: dict = {}
    path = ns.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        for key in data:
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
        merged.update(data)
    cmd = ns.pop("command", None)
    merged.update({k: v for k, v in ns.items() if v is not None})
    if cmd is not None:
        merged["command"] = cmd
    if "command" not in merged:
        raise ConfigError(f"no command given; choose one of {', '.join(COMMANDS)}")
    if "threads" not in merged:
        raw = env.get("OHMGRAD_THREADS")
        if raw:
            try:
                merged["threads"] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"OHMGRAD_THREADS must be an integer, got {raw!r}") from exc
    # flags override file values for the topology too: a flag replaces every file source
    flag_topo = [k for k in TOPOLOGY_KEYS if k in ns]
    if path is not None and len(flag_topo) == 1:
        for k in TOPOLOGY_KEYS:
            if k != flag_topo[0] and k not in ns:
                merged.pop(k, None)
    try:
        cfg = RunConfig(**_coerce(merged))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.extra["explicit"] = tuple(sorted(merged))
    return validate(cfg)


# ---------------------------------------------------------------------------
# command implementations; each writes into ``out`` (a scratch directory)

def _graph(cfg: RunConfig):
    if cfg.graph is not None:
        return read_graph(cfg.graph), None
    if cfg.nanowire is not None:
        nw = cfg.nanowire
        net = generate_nanowire_network(nw["n"], nw["l"], nw["seed"])
        return net.graph, net
    dims = cfg.grid if cfg.grid is not None else (5, 5)
    return grid_graph(*dims), None


def _selectors(cfg: RunConfig, graph: CircuitGraph, net=None, required=True):
    if cfg.inputs is not None:
        return make_selectors(graph, cfg.inputs, cfg.outputs)
    if not required and cfg.n_inputs + cfg.n_outputs == 0:
        return None
    if cfg.io_seed is not None:
        seed = cfg.io_seed
    elif net is not None:
        seed = net.rng
    else:
        seed = cfg.seed
    return choose_io_edges(graph, cfg.n_inputs, cfg.n_outputs, seed)


def _dataset(cfg: RunConfig, sel):
    """Training set and optional held-out set for the configured dataset."""
    if cfg.dataset == "regression":
        return gen_regression(len(sel.inputs), len(sel.outputs), cfg.sigma, cfg.samples, cfg.seed), None
    data = load_wdbc(cfg.wdbc_path) if cfg.wdbc_path else bundled_wdbc()
    tr, te = stratified_split(data, 0.2, cfg.split_seed)
    pca = StandardizedPCA(len(sel.inputs)).fit(tr.X)
    return tr.with_inputs(pca.transform(tr.X)), te.with_inputs(pca.transform(te.X))


def _check_estimator_matches(cfg, estimator):
    hinge = estimator.startswith("hinge")
    if hinge != (cfg.dataset == "wdbc"):
        raise ConfigError(f"estimator {estimator} does not fit the {cfg.dataset} dataset")


def cmd_gen(cfg: RunConfig, out: Path) -> dict:
    graph, net = _graph(cfg)
    explicit = cfg.extra.get("explicit", ())
    wanted = cfg.inputs is not None or "n_inputs" in explicit or "n_outputs" in explicit
    sel = _selectors(cfg, graph, net, required=False) if wanted else None
    sel_json = sel.to_dict() if sel is not None else {"input": [], "output": []}
    if net is not None:
        doc = net.to_dict(sel)
        doc["selectors"] = sel_json
    else:
        doc = {"graph": graph.to_dict(), "selectors": sel_json}
    csv_io.write_json(out / "network.json", doc)
    return {"nodes": graph.n_nodes, "edges": graph.n_edges}


def _train_one(cfg: RunConfig, out: Path):
    graph, net = _graph(cfg)
    sel = _selectors(cfg, graph, net)
    _check_estimator_matches(cfg, cfg.estimator)
    train_set, test_set = _dataset(cfg, sel)
    circuit = Circuit(graph, r_min=cfg.r_min, r_max=cfg.r_max)
    traj = train(circuit, sel, train_set, cfg.train_config())
    csv_io.write_csv(out / "run.csv", "run", traj.rows())
    write_circuit(circuit, out / "circuit.json")
    s = np.zeros(circuit.n_edges)
    s[list(sel.inputs)] = cfg.gamma * train_set.X[0]
    csv_io.write_csv(out / "steady_state.csv", "steady_state",
                     csv_io.steady_state_rows(solve_voltage_mode(circuit, s)))
    if cfg.dataset == "regression":
        x, y = train_set.X[0], train_set.y[0]
        beta = cfg.beta if cfg.beta > 0 else 1e-3
        csv_io.write_csv(out / "gradients.csv", "gradients", csv_io.gradient_rows(
            analytical_gradient_ls(circuit, sel, x, y, cfg.gamma).g,
            two_phase_gradient(circuit, sel, x, y, cfg.gamma, beta).g,
            two_phase_limit(circuit, sel, x, y, cfg.gamma).g, beta))
    summary = {"final_loss": traj.losses[-1], "selectors": sel.to_dict()}
    if test_set is not None:
        summary["test_accuracy"] = accuracy(circuit, sel, test_set, cfg.gamma)
        summary["train_accuracy"] = accuracy(circuit, sel, train_set, cfg.gamma)
    if train_set.true_map is not None:
        summary["frobenius_error"] = float(np.linalg.norm(io_map(circuit, sel, cfg.gamma)
                                                          - train_set.true_map))
    csv_io.write_json(out / "summary.json", summary)
    return circuit, sel, train_set, traj, summary


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    return _train_one(cfg, out)[4]


def cmd_freeze_sweep(cfg: RunConfig, out: Path) -> dict:
    graph, net = _graph(cfg)
    sel = _selectors(cfg, graph, net)
    ests = cfg.estimators or (cfg.estimator,)
    for e in ests:
        _check_estimator_matches(cfg, e)
    train_set, test_set = _dataset(cfg, sel)
    rep = freeze_sweep(lambda: Circuit(graph, r_min=cfg.r_min, r_max=cfg.r_max), sel, train_set,
                       cfg.train_config(ests[0]), cfg.p_list, cfg.trials, test_set, ests,
                       threads=cfg.threads, keep_trajectories=False)
    csv_io.write_csv(out / "sweep_summary.csv", "sweep_summary",
                     [(r.estimator, r.p_freeze, r.mean_acc, r.std_acc, r.trials) for r in rep.rows])
    failures = [t.error for t in rep.trials if t.error]
    return {"failed_trials": len(failures), "errors": failures[:10]}


def cmd_bias_exp(cfg: RunConfig, out: Path) -> dict:
    graph, net = _graph(cfg)
    sel = _selectors(cfg, graph, net)
    circuit = Circuit(graph, r_min=cfg.r_min, r_max=cfg.r_max)
    data = gen_regression(len(sel.inputs), len(sel.outputs), 0.0, 1, cfg.seed)
    sigma = cfg.sigma if cfg.sigma > 0 else 3.0
    if cfg.beta == 0:
        raise ConfigError("bias-exp needs beta > 0")
    rep = bias_experiment(circuit, sel, data.X[0], data.y[0], cfg.beta, sigma, cfg.draws,
                          cfg.gamma, cfg.seed)
    csv_io.write_csv(out / "bias.csv", "bias", rep.rows())
    return {"max_abs_z_two_phase": float(np.max(np.abs(rep.z))),
            "max_abs_z_analytical": float(np.max(np.abs(rep.analytical_z))), "sigma": sigma}


def cmd_gep_verify(cfg: RunConfig, out: Path) -> dict:
    checks, sweep = gep_suite(cfg.seed)
    csv_io.write_csv(out / "gep_sweep.csv", "gep_sweep", sweep)
    csv_io.write_csv(out / "gep_report.csv", "verify", [c.row() for c in checks])
    return {"failed": [c.invariant for c in checks if not c.passed]}


def cmd_verify(cfg: RunConfig, out: Path) -> dict:
    checks = verify_suite(cfg.n_graphs, cfg.seed)
    csv_io.write_csv(out / "verify_report.csv", "verify", [c.row() for c in checks])
    return {"failed": [c.invariant for c in checks if not c.passed]}


def cmd_landscape(cfg: RunConfig, out: Path) -> dict:
    circuit, sel, train_set, traj, summary = _train_one(cfg, out)
    graph = circuit.graph
    land = landscape_sample(traj, lambda r: Circuit(graph, r, cfg.r_min, cfg.r_max), sel,
                            train_set, tuple(cfg.grid_range), cfg.resolution, cfg.gamma)
    csv_io.write_csv(out / "landscape.csv", "landscape", land.rows())
    csv_io.write_csv(out / "trajectory_coords.csv", "trajectory_coords",
                     ((int(s), float(a), float(b)) for s, (a, b) in
                      zip(land.trajectory_steps, land.trajectory_coords)))
    summary["directions"] = land.directions.tolist()
    return summary


HANDLERS = {
    "gen": cmd_gen, "train": cmd_train, "freeze-sweep": cmd_freeze_sweep,
    "bias-exp": cmd_bias_exp, "gep-verify": cmd_gep_verify, "verify": cmd_verify,
    "landscape": cmd_landscape,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, (DatasetParseError, FileNotFoundError, json.JSONDecodeError)):
        return EXIT_INPUT
    if isinstance(exc, (SparseDepositionError, InsufficientChordsError, GraphError, SelectorError)):
        return EXIT_TOPOLOGY
    if isinstance(exc, (DivergenceError, ConvergenceError, NumericalError, ArithmeticError)):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_OUTPUT
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    return EXIT_UNEXPECTED


def run_command(cfg: RunConfig, stderr=None) -> int:
    """Run ``cfg.command``; artifacts appear in ``cfg.out`` only if it succeeds."""
    stderr = sys.stderr if stderr is None else stderr
    out = Path(cfg.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        scratch = Path(tempfile.mkdtemp(prefix=".ohmgrad-", dir=out.parent))
    except OSError as exc:
        print(f"ohmgrad: cannot prepare output directory {out}: {exc}", file=stderr)
        return EXIT_OUTPUT
    started = time.time()
    try:
        result = HANDLERS[cfg.command](cfg, scratch)
        csv_io.write_json(scratch / "metadata.json", {
            "command": cfg.command,
            "config": cfg.to_json(),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
            "wall_time_s": time.time() - started,
            "result": result,
        })
        failed = result.get("failed") if isinstance(result, dict) else None
        out.mkdir(parents=True, exist_ok=True)
        for item in sorted(scratch.iterdir()):
            os.replace(item, out / item.name)
        shutil.rmtree(scratch, ignore_errors=True)
        if failed:
            print(f"ohmgrad {cfg.command}: failed checks: {', '.join(failed)}", file=stderr)
            return EXIT_CHECK_FAILED
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        shutil.rmtree(scratch, ignore_errors=True)
        print(f"ohmgrad {cfg.command}: error: {type(exc).__name__}: {exc}", file=stderr)
        return _exit_code(exc)


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"ohmgrad: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    return run_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
