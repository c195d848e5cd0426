"""Circuit topologies: rectangular grids, random graphs and nanowire deposition.

Random draws use numpy's PCG64 generator (``numpy.random.default_rng``). The
stream order for a nanowire network is center-x, center-y, angle for each wire
in turn, followed by the input/output selection draws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientChordsError, SparseDepositionError
from .graph import CircuitGraph, Selectors, _components, bfs_spanning_tree, make_selectors


def grid_graph(rows: int, cols: int) -> CircuitGraph:
    """``rows x cols`` lattice; node ``(r, c)`` has id ``r * cols + c``.

    All horizontal edges (oriented +x) come first in row-major order, then all
    vertical edges (oriented +y).
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols - 1):
            edges.append((r * cols + c, r * cols + c + 1))
    for r in range(rows - 1):
        for c in range(cols):
            edges.append((r * cols + c, (r + 1) * cols + c))
    return CircuitGraph(rows * cols, tuple(edges))


def random_connected_graph(n_nodes: int, n_chords: int, rng) -> CircuitGraph:
    """Random tree on ``n_nodes`` plus up to ``n_chords`` uniformly chosen extra edges.

    Orientations and the final edge order are randomised too.
    """
    rng = np.random.default_rng(rng)
    pairs = set()
    for k in range(1, n_nodes):
        pairs.add((int(rng.integers(k)), k))
    free = [(a, b) for a in range(n_nodes) for b in range(a + 1, n_nodes) if (a, b) not in pairs]
    take = min(n_chords, len(free))
    for j in rng.choice(len(free), size=take, replace=False) if take else []:
        pairs.add(free[j])
    edges = [(a, b) if rng.random() < 0.5 else (b, a) for a, b in sorted(pairs)]
    order = rng.permutation(len(edges))
    return CircuitGraph(n_nodes, tuple(edges[k] for k in order))


@dataclass(frozen=True)
class WireSegment:
    x1: float
    y1: float
    x2: float
    y2: float

    @classmethod
    def from_center(cls, cx, cy, angle, length):
        dx = 0.5 * length * np.cos(angle)
        dy = 0.5 * length * np.sin(angle)
        return cls(float(cx - dx), float(cy - dy), float(cx + dx), float(cy + dy))

    @property
    def length(self) -> float:
        return float(np.hypot(self.x2 - self.x1, self.y2 - self.y1))

    @property
    def orientation(self) -> float:
        return float(np.arctan2(self.y2 - self.y1, self.x2 - self.x1) % (2 * np.pi))

    def as_list(self):
        return [self.x1, self.y1, self.x2, self.y2]


# relative threshold below which two direction vectors count as parallel
_PARALLEL_TOL = 1e-12


def segments_intersect(a: WireSegment, b: WireSegment):
    """Intersection point of two segments, or ``None``.

    Solves ``a1 + t_a d_a = b1 + t_b d_b`` for ``(t_a, t_b)`` in ``[0, 1]^2``.
    Touching endpoints count; parallel and collinear segments never intersect.
    """
    dax, day = a.x2 - a.x1, a.y2 - a.y1
    dbx, dby = b.x2 - b.x1, b.y2 - b.y1
    cross = dax * dby - day * dbx
    if abs(cross) <= _PARALLEL_TOL * np.hypot(dax, day) * np.hypot(dbx, dby):
        return None
    wx, wy = b.x1 - a.x1, b.y1 - a.y1
    ta = (wx * dby - wy * dbx) / cross
    tb = (wx * day - wy * dax) / cross
    if 0.0 <= ta <= 1.0 and 0.0 <= tb <= 1.0:
        return (a.x1 + ta * dax, a.y1 + ta * day)
    return None


def _pairwise_crossings(seg: np.ndarray):
    """Vectorised form of :func:`segments_intersect` over all pairs ``i < j``."""
    n = len(seg)
    x1, y1, x2, y2 = seg.T
    dx, dy = x2 - x1, y2 - y1
    norm = np.hypot(dx, dy)
    pairs, points = [], []
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        cross = dx[i] * dy[j] - dy[i] * dx[j]
        ok = np.abs(cross) > _PARALLEL_TOL * norm[i] * norm[j]
        wx, wy = x1[j] - x1[i], y1[j] - y1[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (wx * dy[j] - wy * dx[j]) / cross
            tb = (wx * dy[i] - wy * dx[i]) / cross
        hit = ok & (ta >= 0.0) & (ta <= 1.0) & (tb >= 0.0) & (tb <= 1.0)
        for k in np.flatnonzero(hit):
            pairs.append((i, int(j[k])))
            points.append((x1[i] + ta[k] * dx[i], y1[i] + ta[k] * dy[i]))
    return pairs, points


@dataclass(frozen=True)
class NanowireNetwork:
    """Deposited wires, their crossing graph and the largest connected piece.

    ``crossings`` lists every intersecting wire pair ``(i, j)`` with ``i < j``;
    ``graph`` relabels the wires of the largest component (``wire_ids``, in
    ascending order) as nodes, one edge per crossing, oriented low to high.
    """

    segments: tuple[WireSegment, ...]
    crossings: tuple[tuple[int, int], ...]
    points: tuple[tuple[float, float], ...]
    wire_ids: tuple[int, ...]
    graph: CircuitGraph
    seed: object = None
    rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def to_dict(self, selectors: Selectors | None = None) -> dict:
        out = {
            "segments": [s.as_list() for s in self.segments],
            "graph": self.graph.to_dict(),
            "selectors": None if selectors is None else selectors.to_dict(),
            "seed": self.seed,
        }
        return out


def generate_nanowire_network(n: int, length: float = 0.3, seed=None) -> NanowireNetwork:
    """Deposit ``n`` wires of ``length`` with uniform centers in the unit square.

    The returned network keeps its generator in ``rng`` so that later
    selection draws continue the same stream.
    """
    if n < 2:
        raise ValueError("need at least two wires")
    if length <= 0:
        raise ValueError("wire length must be positive")
    rng = np.random.default_rng(seed)
    draws = rng.random((n, 3))
    segs = tuple(
        WireSegment.from_center(cx, cy, 2 * np.pi * u, length) for cx, cy, u in draws
    )
    arr = np.array([s.as_list() for s in segs])
    pairs, points = _pairwise_crossings(arr)
    comps = _components(n, pairs)
    best = max(comps, key=lambda c: (len(c), -c[0]))
    if len(best) < 2:
        raise SparseDepositionError(
            f"largest cluster of {n} wires with length {length} has a single wire; "
            "increase the wire count or length"
        )
    relabel = {w: k for k, w in enumerate(best)}
    edges = tuple((relabel[i], relabel[j]) for i, j in pairs if i in relabel)
    graph = CircuitGraph(len(best), edges)
    return NanowireNetwork(segs, tuple(pairs), tuple(points), tuple(best), graph,
                           seed if isinstance(seed, (int, type(None))) else None, rng)


def brute_force_crossings(segments) -> list[tuple[int, int]]:
    """All intersecting pairs by orientation tests; O(n^2) reference."""

    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    out = []
    for i in range(len(segments)):
        a = segments[i]
        for j in range(i + 1, len(segments)):
            b = segments[j]
            o1 = orient(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1)
            o2 = orient(a.x1, a.y1, a.x2, a.y2, b.x2, b.y2)
            o3 = orient(b.x1, b.y1, b.x2, b.y2, a.x1, a.y1)
            o4 = orient(b.x1, b.y1, b.x2, b.y2, a.x2, a.y2)
            if o1 == 0 and o2 == 0:
                continue  # collinear
            if o1 * o2 <= 0 and o3 * o4 <= 0:
                out.append((i, j))
    return out


def chord_component(graph: CircuitGraph) -> list[int]:
    """Edges of the largest connected piece of the spanning-tree complement.

    Components are ranked by node count, then edge count, then lowest edge id.
    """
    chords = bfs_spanning_tree(graph).chords
    if not chords:
        return []
    nodes = sorted({v for e in chords for v in graph.edges[e]})
    local = {v: k for k, v in enumerate(nodes)}
    comps = _components(len(nodes), [(local[graph.edges[e][0]], local[graph.edges[e][1]]) for e in chords])
    groups = []
    for comp in comps:
        members = {nodes[k] for k in comp}
        es = [e for e in chords if graph.edges[e][0] in members]
        groups.append((len(comp), len(es), -min(es), es))
    return max(groups)[3]


def choose_io_edges(graph: CircuitGraph, n_inputs: int, n_outputs: int, seed=None) -> Selectors:
    """Sample disjoint input/output edges from :func:`chord_component`.

    ``seed`` may be an int or a live ``numpy.random.Generator``.
    """
    need = n_inputs + n_outputs
    if n_inputs < 0 or n_outputs < 0 or need < 1:
        raise ValueError("need at least one input or output edge")
    pool = chord_component(graph)
    if len(pool) < need:
        raise InsufficientChordsError(
            f"largest spanning-tree complement component has {len(pool)} edges, need {need}"
        )
    rng = np.random.default_rng(seed)
    picked = [pool[k] for k in rng.choice(len(pool), size=need, replace=False)]
    return make_selectors(graph, picked[:n_inputs], picked[n_inputs:])


def write_network(network: NanowireNetwork, selectors: Selectors | None, path) -> None:
    Path(path).write_text(json.dumps(network.to_dict(selectors)) + "\n")
