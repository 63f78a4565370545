"""Shortest simple paths on a grid with missing edges.

Variable layout for an ``R x C`` grid with ``V`` nodes and ``E`` edges: node
indicators ``0..V-1``, then for each edge ``e`` the pair ``x_e = V + 2e``
(edge present in the input graph) and ``y_e = V + 2e + 1`` (edge on the
path).  The vtree is right-linear over that order, which keeps each
``y_e => x_e`` implication local.  Features are the node block followed by
the ``x`` block; labels are the ``y`` block.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np

from ..compiler import TRUE, ConstraintCircuit, SddManager, from_models
from ..errors import ExhaustedSampling, GridTooLarge
from ..vtree import build_vtree
from .data import Dataset, Task

MAX_GRID_NODES = 16
MIN_COMPONENT = 5


@dataclass(frozen=True)
class Grid:
    rows: int = 4
    cols: int = 4

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def num_nodes(self) -> int:
        return self.rows * self.cols

    @cached_property
    def edges(self) -> list[tuple[int, int]]:
        """Row-major, per node the right neighbour before the lower one."""
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                u = r * self.cols + c
                if c + 1 < self.cols:
                    out.append((u, u + 1))
                if r + 1 < self.rows:
                    out.append((u, u + self.cols))
        return out

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> dict[frozenset, int]:
        return {frozenset(e): i for i, e in enumerate(self.edges)}

    def x_var(self, e: int) -> int:
        return self.num_nodes + 2 * e

    def y_var(self, e: int) -> int:
        return self.num_nodes + 2 * e + 1

    @property
    def num_vars(self) -> int:
        return self.num_nodes + 2 * self.num_edges

    @property
    def num_x(self) -> int:
        return self.num_nodes + self.num_edges

    def graph(self, present=None) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.num_nodes))
        for i, (a, b) in enumerate(self.edges):
            if present is None or present[i]:
                g.add_edge(a, b)
        return g

    def path_edges(self, nodes) -> list[int]:
        return [self.edge_index[frozenset(p)] for p in zip(nodes, nodes[1:])]


def simple_paths(grid: Grid, s: int, t: int) -> list[frozenset]:
    """Edge-id sets of every simple ``s``-``t`` path in the full grid."""
    g = grid.graph()
    return [
        frozenset(grid.edge_index[frozenset(e)] for e in path)
        for path in nx.all_simple_edge_paths(g, s, t)
    ]


def build_path_constraint(grid: Grid = Grid()) -> ConstraintCircuit:
    """Exactly two marked nodes, a simple path between them, inside the input graph.

    Built as a disjunction over node pairs of (node-block term AND the
    path set compiled from its models), conjoined with ``y_e => x_e``.
    """
    if grid.num_nodes > MAX_GRID_NODES:
        raise GridTooLarge(f"{grid.rows}x{grid.cols} exceeds {MAX_GRID_NODES} nodes")
    n, m = grid.num_nodes, grid.num_edges
    ys = [grid.y_var(e) for e in range(m)]
    order = list(range(n)) + [v for e in range(m) for v in (grid.x_var(e), grid.y_var(e))]
    mgr = SddManager(build_vtree(order))
    acc = mgr.negate(TRUE)
    for s, t in itertools.combinations(range(n), 2):
        paths = simple_paths(grid, s, t)
        if not paths:
            continue
        marked = mgr.term([(v, v in (s, t)) for v in range(n)])
        models = [tuple(int(e in p) for e in range(m)) for p in paths]
        pc = from_models(models, mgr, variables=ys)
        acc = mgr.disjoin(acc, mgr.conjoin(marked, pc.node))
    for e in range(m):
        acc = mgr.conjoin(acc, mgr.clause([(grid.y_var(e), False), (grid.x_var(e), True)]))
    return ConstraintCircuit(mgr, acc, grid.num_vars)


def is_simple_path(grid: Grid, s: int, t: int, present, y) -> bool:
    """Brute-force check that edge set ``y`` is one simple ``s``-``t`` path within ``present``."""
    chosen = [i for i, v in enumerate(y) if v]
    if s == t or not chosen or any(not present[i] for i in chosen):
        return False
    g = nx.Graph([grid.edges[i] for i in chosen])
    if s not in g or t not in g or not nx.is_connected(g):
        return False
    deg = dict(g.degree())
    return deg[s] == 1 and deg[t] == 1 and all(d == 2 for v, d in deg.items() if v not in (s, t))


def _sample_example(grid: Grid, rng: np.random.Generator, drop_fraction: float):
    m = grid.num_edges
    present = np.ones(m, dtype=np.int8)
    present[rng.choice(m, size=int(round(drop_fraction * m)), replace=False)] = 0
    g = grid.graph(present)
    comps = [c for c in nx.connected_components(g) if len(c) >= MIN_COMPONENT]
    keep = set().union(*comps) if comps else set()
    for i, (a, b) in enumerate(grid.edges):
        if a not in keep:
            present[i] = 0
    if not comps:
        return None
    nodes = sorted(keep)
    s, t = (int(v) for v in rng.choice(nodes, size=2, replace=False))
    if not nx.has_path(g, s, t):
        return None
    paths = list(itertools.islice(nx.all_shortest_paths(g, s, t), 2))
    if len(paths) != 1:
        return None
    x = np.zeros(grid.num_x, dtype=np.int8)
    x[[s, t]] = 1
    x[grid.num_nodes :] = present
    y = np.zeros(m, dtype=np.int8)
    y[grid.path_edges(paths[0])] = 1
    return x, y


def generate_path_dataset(
    grid: Grid = Grid(),
    count: int = 1600,
    drop_fraction: float = 1 / 3,
    seed: int = 0,
    max_attempts: int | None = None,
) -> Dataset:
    """Random subgraphs with a marked pair and its unique shortest path.

    A third of the edges are dropped uniformly, components under five nodes
    are discarded, and two nodes of one surviving component are marked.
    Draws where the pair is disconnected or the shortest path is not unique
    are resampled.
    """
    rng = np.random.default_rng(seed)
    max_attempts = 200 * count if max_attempts is None else max_attempts
    xs, ys = [], []
    attempts = 0
    while len(xs) < count:
        attempts += 1
        if attempts > max_attempts:
            raise ExhaustedSampling(f"only {len(xs)} of {count} examples after {max_attempts} draws")
        ex = _sample_example(grid, rng, drop_fraction)
        if ex is not None:
            xs.append(ex[0])
            ys.append(ex[1])
    return Dataset(np.array(xs).reshape(count, grid.num_x), np.array(ys).reshape(count, grid.num_edges))


def path_task(grid: Grid = Grid(), dataset: Dataset | None = None, constraint: ConstraintCircuit | None = None) -> Task:
    c = build_path_constraint(grid) if constraint is None else constraint
    labels = tuple(grid.y_var(e) for e in range(grid.num_edges))
    cond = tuple(range(grid.num_nodes)) + tuple(grid.x_var(e) for e in range(grid.num_edges))
    return Task(
        "simple-path",
        c,
        labels,
        cond_vars=cond,
        cond_cols=tuple(range(grid.num_x)),
        dataset=dataset,
        info={"rows": grid.rows, "cols": grid.cols},
    )
