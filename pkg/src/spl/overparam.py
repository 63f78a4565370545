"""Capacity increase for single-circuit layers without touching the support.

Two transformations are provided.  Replication mixes ``m`` independently
parameterized copies of a circuit under a new root sum.  Mixture
multiplication replaces every sum unit by ``k`` versions that share children
and fork weights, where each product under a sum is rewired to the cross
product of the versions of its inputs.  Both relax determinism.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

from .circuit import Circuit, CircuitBuilder, Kind, smooth_decomposable
from .compiler import ConstraintCircuit
from .errors import NotDeterministicInput, StructureError


@dataclass(frozen=True)
class OverparamConfig:
    k: int = 1
    m: int = 1

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be positive integers")


def _circuit(c) -> Circuit:
    return c.circuit if isinstance(c, ConstraintCircuit) else c


def replicate(c, m: int) -> Circuit:
    """Root sum over ``m`` structural copies of ``c`` with forked parameters."""
    c = _circuit(c)
    if m < 1:
        raise ValueError("m must be >= 1")
    smooth, decomposable = smooth_decomposable(c)
    if not (smooth and decomposable):
        raise StructureError("replication needs a smooth and decomposable circuit")
    b = CircuitBuilder(c.num_vars)
    roots = [b.add_subcircuit(c) for _ in range(m)]
    return b.build(b.sum(roots), vtree=c.vtree)


def mixture_multiply(c, k: int) -> Circuit:
    """Overparameterize every sum unit ``k``-fold, memoized per unit.

    A product whose parent is not a sum (a product below a product, or the
    root) is handled as if wrapped in a unary sum, so the recursion only ever
    sees alternating sum and product layers.  The top-level call mixes the
    ``k`` versions of the root under one extra sum.
    """
    c = _circuit(c)
    if k < 1:
        raise ValueError("k must be >= 1")
    report = c.validate()
    if not (report.smooth and report.decomposable):
        raise StructureError("mixture multiplication needs a smooth and decomposable circuit")
    if not report.deterministic:
        raise NotDeterministicInput("mixture multiplication expects a deterministic circuit")
    b = CircuitBuilder(c.num_vars)
    cache: dict[int, list[int]] = {}
    inputs: dict[int, int] = {}

    def copy_input(u: int) -> int:
        if u not in inputs:
            if c.kind[u] == Kind.BERNOULLI:
                inputs[u] = b.bernoulli(int(c.var[u]))
            else:
                inputs[u] = b.indicator(int(c.var[u]), int(c.polarity[u]), bool(c.weighted[u]))
        return inputs[u]

    def elements(u: int) -> list[int]:
        # what replaces child u under a sum
        if c.kind[u] == Kind.PRODUCT:
            left, right = c.children[u]
            return [b.product(l, r) for l in versions(left) for r in versions(right)]
        return versions(u)

    def versions(u: int) -> list[int]:
        if u in cache:
            return cache[u]
        kind = c.kind[u]
        if kind in (Kind.INDICATOR, Kind.BERNOULLI):
            nodes = [copy_input(u)]
        else:
            if kind == Kind.SUM:
                elems = [e for ch in c.children[u] for e in elements(ch)]
            else:
                elems = elements(u)
            nodes = [b.sum(elems) for _ in range(k)]
        cache[u] = nodes
        return nodes

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * len(c) + 1000))
    try:
        top = b.sum(versions(c.root))
    finally:
        sys.setrecursionlimit(limit)
    return b.build(top, vtree=c.vtree)


def overparameterize(c, config: OverparamConfig) -> Circuit:
    """Mixture multiplication first, then replication; ``k = m = 1`` is a no-op."""
    circuit = _circuit(c)
    if config.k > 1:
        circuit = mixture_multiply(circuit, config.k)
    if config.m > 1:
        circuit = replicate(circuit, config.m)
    return circuit
