"""Oriented circuit graphs, fundamental cycle matrices and edge selectors."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConnectivityError,
    InvalidGraphError,
    SelectorDuplicateError,
    SelectorOverlapError,
    SelectorRangeError,
)


@dataclass(frozen=True)
class CircuitGraph:
    """Connected directed graph with a fixed edge order and orientation.

    Edge ``e`` is the pair ``(tail, head)``; a positive current on ``e`` flows
    from tail to head.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple((int(t), int(h)) for t, h in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n_nodes < 1:
            raise InvalidGraphError("graph needs at least one node")
        seen = set()
        for e, (t, h) in enumerate(edges):
            if not (0 <= t < self.n_nodes and 0 <= h < self.n_nodes):
                raise InvalidGraphError(f"edge {e} = ({t}, {h}) references a missing node")
            if t == h:
                raise InvalidGraphError(f"edge {e} is a self-loop on node {t}")
            key = (min(t, h), max(t, h))
            if key in seen:
                raise InvalidGraphError(f"edge {e} duplicates the node pair {key}")
            seen.add(key)
        if len(_components(self.n_nodes, edges)) != 1:
            raise ConnectivityError(
                f"graph with {self.n_nodes} nodes and {len(edges)} edges is not connected"
            )

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cycles(self) -> int:
        return self.n_edges - self.n_nodes + 1

    def incidence_matrix(self) -> np.ndarray:
        """Node-edge incidence B with +1 at the tail and -1 at the head."""
        B = np.zeros((self.n_nodes, self.n_edges))
        for e, (t, h) in enumerate(self.edges):
            B[t, e] = 1.0
            B[h, e] = -1.0
        return B

    def to_dict(self) -> dict:
        return {"nodes": self.n_nodes, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data: dict) -> "CircuitGraph":
        try:
            return cls(int(data["nodes"]), tuple(tuple(e) for e in data["edges"]))
        except (KeyError, TypeError) as exc:
            raise InvalidGraphError(f"malformed graph object: {exc}") from exc


def _components(n_nodes, edges):
    adj = [[] for _ in range(n_nodes)]
    for t, h in edges:
        adj[t].append(h)
        adj[h].append(t)
    seen = [False] * n_nodes
    comps = []
    for start in range(n_nodes):
        if seen[start]:
            continue
        seen[start] = True
        comp, stack = [start], [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def read_graph(path) -> CircuitGraph:
    with open(path) as fh:
        return CircuitGraph.from_dict(json.load(fh))


def write_graph(graph: CircuitGraph, path) -> None:
    Path(path).write_text(json.dumps(graph.to_dict()) + "\n")


@dataclass(frozen=True)
class SpanningTree:
    """BFS tree rooted at ``root``; ``parent_edge[root] == -1``."""

    root: int
    parent: tuple[int, ...]
    parent_edge: tuple[int, ...]
    depth: tuple[int, ...]
    tree_edges: tuple[int, ...]
    chords: tuple[int, ...]


def bfs_spanning_tree(graph: CircuitGraph, root: int = 0) -> SpanningTree:
    """Breadth-first spanning tree, exploring incident edges by ascending index."""
    incident = [[] for _ in range(graph.n_nodes)]
    for e, (t, h) in enumerate(graph.edges):
        incident[t].append(e)
        incident[h].append(e)
    parent = [-1] * graph.n_nodes
    parent_edge = [-1] * graph.n_nodes
    depth = [0] * graph.n_nodes
    visited = [False] * graph.n_nodes
    visited[root] = True
    in_tree = [False] * graph.n_edges
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for e in incident[u]:
            t, h = graph.edges[e]
            w = h if t == u else t
            if not visited[w]:
                visited[w] = True
                parent[w], parent_edge[w], depth[w] = u, e, depth[u] + 1
                in_tree[e] = True
                queue.append(w)
    tree = tuple(e for e in range(graph.n_edges) if in_tree[e])
    chords = tuple(e for e in range(graph.n_edges) if not in_tree[e])
    return SpanningTree(root, tuple(parent), tuple(parent_edge), tuple(depth), tree, chords)


@dataclass(frozen=True)
class CycleMatrix:
    """Fundamental cycle matrix: one row per chord, +1 on that chord."""

    A: np.ndarray = field(repr=False)
    tree_edges: tuple[int, ...]
    chords: tuple[int, ...]

    @property
    def n_cycles(self) -> int:
        return self.A.shape[0]

    @property
    def n_edges(self) -> int:
        return self.A.shape[1]


def _signed_step(graph, edge, frm):
    return 1.0 if graph.edges[edge][0] == frm else -1.0


def fundamental_cycle_matrix(graph: CircuitGraph, root: int = 0) -> CycleMatrix:
    """Build the C x E fundamental cycle matrix of ``graph``.

    Each row walks its chord along the chord's orientation and closes the loop
    through the unique tree path from the chord head back to the chord tail.
    Entries are +1 where the walk follows an edge's orientation, -1 against it.

    Parameters
    ----------
    graph : CircuitGraph
    root : int
        Root of the BFS spanning tree. Different roots give different bases
        of the same cycle space.

    Returns
    -------
    CycleMatrix
    """
    tree = bfs_spanning_tree(graph, root)
    A = np.zeros((len(tree.chords), graph.n_edges))
    for row, chord in enumerate(tree.chords):
        tail, head = graph.edges[chord]
        A[row, chord] = 1.0
        # climb from head and tail to their lowest common ancestor
        up, down = head, tail
        down_path = []
        while up != down:
            if tree.depth[up] >= tree.depth[down]:
                e = tree.parent_edge[up]
                A[row, e] += _signed_step(graph, e, up)
                up = tree.parent[up]
            else:
                down_path.append(down)
                down = tree.parent[down]
        for node in down_path:
            e = tree.parent_edge[node]
            A[row, e] += _signed_step(graph, e, tree.parent[node])
    return CycleMatrix(A, tree.tree_edges, tree.chords)


@dataclass(frozen=True)
class Selectors:
    """Input and output edge index sets for a graph with ``n_edges`` edges."""

    n_edges: int
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    @property
    def P_i(self) -> np.ndarray:
        return _column_selector(self.n_edges, self.inputs)

    @property
    def P_o(self) -> np.ndarray:
        return _column_selector(self.n_edges, self.outputs)

    def to_dict(self) -> dict:
        return {"input": list(self.inputs), "output": list(self.outputs)}


def _column_selector(n_edges, idx):
    P = np.zeros((n_edges, len(idx)))
    P[list(idx), np.arange(len(idx))] = 1.0
    return P


def make_selectors(graph: CircuitGraph, input_idx, output_idx) -> Selectors:
    n_edges = graph.n_edges if isinstance(graph, CircuitGraph) else int(graph)
    ins = tuple(int(i) for i in input_idx)
    outs = tuple(int(i) for i in output_idx)
    for name, idx in (("input", ins), ("output", outs)):
        bad = [i for i in idx if not 0 <= i < n_edges]
        if bad:
            raise SelectorRangeError(f"{name} edge indices {bad} outside [0, {n_edges})")
        if len(set(idx)) != len(idx):
            dup = sorted({i for i in idx if idx.count(i) > 1})
            raise SelectorDuplicateError(f"duplicate {name} edge indices {dup}")
    overlap = sorted(set(ins) & set(outs))
    if overlap:
        raise SelectorOverlapError(f"edges {overlap} are both input and output")
    return Selectors(n_edges, ins, outs)
