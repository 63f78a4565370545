"""Class hierarchies: implication constraints, synthetic data and ARFF input."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..compiler import CnfFormula, ConstraintCircuit, compile_cnf
from ..errors import CyclicHierarchy, ParseError
from .data import Dataset, Task


def _check_acyclic(num_labels: int, edges) -> None:
    parents = {i: set() for i in range(num_labels)}
    for child, parent in edges:
        parents[child].add(parent)
    state = [0] * num_labels  # 0 new, 1 on stack, 2 done
    for start in range(num_labels):
        if state[start]:
            continue
        stack = [(start, iter(parents[start]))]
        state[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                raise CyclicHierarchy(f"label {nxt} is its own ancestor")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(parents[nxt])))


def build_hierarchy_constraint(edges: Sequence[tuple[int, int]], num_labels: int | None = None) -> ConstraintCircuit:
    """Conjunction of ``child => parent`` over ``(child, parent)`` edges."""
    edges = [(int(c), int(p)) for c, p in edges]
    if num_labels is None:
        num_labels = 1 + max((max(e) for e in edges), default=-1)
    if num_labels < 1:
        raise ValueError("need at least one label")
    if any(not (0 <= v < num_labels) for e in edges for v in e):
        raise ValueError("edge endpoint outside the label range")
    if any(c == p for c, p in edges):
        raise CyclicHierarchy("self loop in hierarchy")
    _check_acyclic(num_labels, edges)
    clauses = [((c, False), (p, True)) for c, p in edges]
    return compile_cnf(CnfFormula(num_labels, clauses))


def chain_edges(length: int) -> list[tuple[int, int]]:
    """``0 -> 1 -> ... -> length-1``, each label implying the next."""
    return [(i, i + 1) for i in range(length - 1)]


def random_tree_edges(num_labels: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """A random forest with a single root ``0``: each label picks an earlier parent."""
    return [(i, int(rng.integers(i))) for i in range(1, num_labels)]


def ancestors_closure(num_labels: int, edges) -> np.ndarray:
    """Boolean matrix ``A[i, j]``: ``j`` is ``i`` or one of its ancestors."""
    a = np.eye(num_labels, dtype=bool)
    for c, p in edges:
        a[c, p] = True
    for k in range(num_labels):
        a |= a[:, [k]] & a[[k], :]
    return a


def generate_hierarchy_dataset(
    edges,
    num_labels: int,
    count: int = 1000,
    num_features: int = 32,
    noise: float = 0.5,
    seed: int = 0,
) -> Dataset:
    """Synthetic HMLC: one or two leaves per example, closed upwards.

    Features are a random linear image of the label vector plus Gaussian
    noise, so labels are learnable but not trivially.
    """
    rng = np.random.default_rng(seed)
    closure = ancestors_closure(num_labels, edges)
    proj = rng.normal(size=(num_labels, num_features))
    y = np.zeros((count, num_labels), dtype=np.int8)
    for i in range(count):
        picks = rng.choice(num_labels, size=rng.integers(1, 3), replace=False)
        y[i] = closure[picks].any(axis=0)
    x = y @ proj + rng.normal(0.0, noise, size=(count, num_features))
    return Dataset(x, y)


def hierarchy_task(edges, num_labels: int, dataset: Dataset | None = None) -> Task:
    c = build_hierarchy_constraint(edges, num_labels)
    return Task("hmlc", c, tuple(range(num_labels)), dataset=dataset, info={"edges": list(edges)})


def parse_hmc_arff(text: str):
    """Features, labels and hierarchy from an HMC-style ARFF file.

    Numeric attributes become features (``?`` is imputed with the column
    mean), nominal ones are one-hot encoded, and the final
    ``hierarchical`` class attribute supplies ``parent/child`` edges and
    ``@``-separated label paths per row.  Returns ``(dataset, names, edges)``
    with edges as ``(child, parent)`` index pairs.
    """
    attrs: list[tuple[str, object]] = []
    hierarchy: list[tuple[str, str]] = []
    rows: list[list[str]] = []
    in_data = False
    for raw in text.splitlines():
        ln = raw.strip()
        if not ln or ln.startswith("%"):
            continue
        low = ln.lower()
        if in_data:
            rows.append([t.strip() for t in ln.split(",")])
        elif low.startswith("@attribute"):
            parts = ln.split(None, 2)
            if len(parts) < 3:
                raise ParseError(f"bad attribute line {ln!r}")
            name, kind = parts[1], parts[2].strip()
            if kind.lower().startswith("hierarchical"):
                for pair in kind.split(None, 1)[1].split(","):
                    parent, _, child = pair.strip().rpartition("/")
                    hierarchy.append((parent or "root", child))
                attrs.append((name, "class"))
            elif kind.startswith("{"):
                attrs.append((name, [v.strip() for v in kind.strip("{}").split(",")]))
            else:
                attrs.append((name, "numeric"))
        elif low.startswith("@data"):
            in_data = True
    if not attrs or attrs[-1][1] != "class":
        raise ParseError("last attribute must be the hierarchical class")
    names = sorted({c for _, c in hierarchy} | {p for p, _ in hierarchy if p != "root"})
    index = {n: i for i, n in enumerate(names)}
    edges = [(index[c], index[p]) for p, c in hierarchy if p != "root"]
    closure = ancestors_closure(len(names), edges)
    feats, labels = [], []
    for r in rows:
        if len(r) != len(attrs):
            raise ParseError(f"data row with {len(r)} fields, expected {len(attrs)}")
        f: list[float] = []
        for (name, kind), tok in zip(attrs[:-1], r[:-1]):
            if kind == "numeric":
                f.append(np.nan if tok == "?" else float(tok))
            else:
                f.extend(float(tok == v) for v in kind)
        y = np.zeros(len(names), dtype=bool)
        for path in r[-1].split("@"):
            leaf = path.strip().split("/")[-1]
            if leaf in index:
                y |= closure[index[leaf]]
        feats.append(f)
        labels.append(y)
    x = np.array(feats, dtype=np.float64)
    if x.size:
        means = np.nanmean(np.where(np.isnan(x).all(0), 0.0, x), axis=0)
        x = np.where(np.isnan(x), means, x)
    return Dataset(x, np.array(labels, dtype=np.int8)), names, edges
