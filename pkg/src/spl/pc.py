"""Constructors for probabilistic circuits used as the distribution module."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .circuit import Circuit, CircuitBuilder
from .vtree import Vtree


def factorized_mixture(label_vars: Sequence[int], num_components: int = 1, num_vars: int | None = None) -> Circuit:
    """Mixture of fully factorized Bernoulli models over ``label_vars``.

    With one component there is no mixing sum: the circuit is a plain product
    of Bernoullis.  Such circuits are compatible with every smooth and
    decomposable constraint circuit.
    """
    label_vars = [int(v) for v in label_vars]
    if not label_vars:
        raise ValueError("need at least one label variable")
    if num_components < 1:
        raise ValueError("num_components must be >= 1")
    n = max(label_vars) + 1 if num_vars is None else num_vars
    b = CircuitBuilder(n)
    comps = []
    for _ in range(num_components):
        leaves = [b.bernoulli(v) for v in label_vars]
        comps.append(b.product(*leaves))
    root = comps[0] if num_components == 1 else b.sum(comps)
    return b.build(root)


def structured_pc(vtree: Vtree, width: int = 2, num_vars: int | None = None) -> Circuit:
    """A smooth PC whose products follow the splits of ``vtree``.

    Every vtree leaf gets ``width`` Bernoulli units; every internal node gets
    ``width`` sum units, each mixing all ``width**2`` products of the
    children's units.  The root keeps a single sum.
    """
    n = max(vtree.variables) + 1 if num_vars is None else num_vars
    b = CircuitBuilder(n)
    units: dict[int, list[int]] = {}
    for node in vtree.postorder():
        k = 1 if node == vtree.root else width
        if vtree.is_leaf(node):
            if node == vtree.root:
                units[node] = [b.bernoulli(vtree.var[node])]
            else:
                units[node] = [b.bernoulli(vtree.var[node]) for _ in range(k)]
        else:
            prods = [
                b.product(l, r)
                for l in units[vtree.left[node]]
                for r in units[vtree.right[node]]
            ]
            units[node] = [b.sum(prods) for _ in range(k)]
    return b.build(units[vtree.root][0], vtree=vtree)


def random_params(circuit: Circuit, rng: np.random.Generator, normalized: bool = True) -> np.ndarray:
    """Random parameters: Bernoullis in (0.05, 0.95), sum weights on the simplex."""
    theta = np.ones(circuit.num_params)
    ber = circuit.bernoulli_slots()
    theta[ber] = rng.uniform(0.05, 0.95, size=len(ber))
    ind = circuit.indicator_slots()
    theta[ind] = rng.uniform(0.1, 1.0, size=len(ind))
    for start, size in circuit.sum_groups():
        w = rng.uniform(0.1, 1.0, size=size)
        theta[start : start + size] = w / w.sum() if normalized else w
    return theta
