"""Circuit DAGs over Boolean variables.

A circuit is an immutable, topologically ordered array of units.  Input units
are indicators ``[Y_v = polarity]`` (optionally scaled by a parameter slot) and
Bernoulli distributions; internal units are weighted sums and binary products.
Parameters never live in the units: every Bernoulli, weighted indicator and sum
edge owns an index into a flat parameter vector, so the same structure can be
re-parameterized per example.

Evaluation runs layer by layer in log-space over a batch.  ``-inf`` is the
explicit representation of an exact zero, which is what constraint circuits
produce on violating assignments.

Assignments are integer arrays over ``num_vars`` holding 0, 1, or ``-1``.  A
``-1`` marginalizes the variable out: indicators emit 1 for both polarities and
Bernoullis emit their total mass 1.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CyclicGraph,
    DanglingChild,
    MissingVariable,
    ParamShapeMismatch,
    ParseError,
    ScopeTooLarge,
)

MARGINALIZED = -1
EXACT_DETERMINISM_MAX_VARS = 20
SUPPORT_MAX_VARS = 25
_CHUNK = 1 << 12


class Kind(enum.IntEnum):
    INDICATOR = 0
    BERNOULLI = 1
    SUM = 2
    PRODUCT = 3


@dataclass(frozen=True)
class StructureReport:
    smooth: bool
    decomposable: bool
    deterministic: bool

    def as_dict(self) -> dict:
        return {
            "smooth": self.smooth,
            "decomposable": self.decomposable,
            "deterministic": self.deterministic,
        }


class CircuitBuilder:
    """Incrementally assembles a circuit; children must exist before parents.

    Parameter-free units (plain indicators, products) are hash-consed, so
    asking twice for the same product returns the same unit id.
    """

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.kind: list[int] = []
        self.var: list[int] = []
        self.polarity: list[int] = []
        self.weighted: list[bool] = []
        self.children: list[tuple[int, ...]] = []
        self._shared: dict[tuple, int] = {}

    def __len__(self) -> int:
        return len(self.kind)

    def _add(self, kind, var=-1, polarity=-1, weighted=False, children=()):
        self.kind.append(int(kind))
        self.var.append(var)
        self.polarity.append(polarity)
        self.weighted.append(weighted)
        self.children.append(tuple(children))
        return len(self.kind) - 1

    def _check_var(self, var):
        if not 0 <= var < self.num_vars:
            raise MissingVariable(f"variable {var} outside [0, {self.num_vars})")

    def indicator(self, var: int, polarity: int, weighted: bool = False) -> int:
        self._check_var(var)
        polarity = int(bool(polarity))
        if weighted:
            return self._add(Kind.INDICATOR, var, polarity, True)
        key = ("I", var, polarity)
        if key not in self._shared:
            self._shared[key] = self._add(Kind.INDICATOR, var, polarity)
        return self._shared[key]

    def bernoulli(self, var: int) -> int:
        self._check_var(var)
        return self._add(Kind.BERNOULLI, var)

    def sum(self, children: Iterable[int]) -> int:
        children = tuple(children)
        self._check_children(children)
        return self._add(Kind.SUM, children=children)

    def product(self, *children: int) -> int:
        """Binary product; more than two children are left-folded into a chain."""
        if len(children) == 1 and not isinstance(children[0], int):
            children = tuple(children[0])
        if not children:
            raise ValueError("product needs at least one child")
        self._check_children(children)
        acc = children[0]
        for nxt in children[1:]:
            key = ("P", acc, nxt)
            if key not in self._shared:
                self._shared[key] = self._add(Kind.PRODUCT, children=(acc, nxt))
            acc = self._shared[key]
        return acc

    def _check_children(self, children):
        n = len(self.kind)
        for c in children:
            if not 0 <= c < n:
                raise DanglingChild(f"child {c} does not exist yet")

    def add_subcircuit(self, circuit: "Circuit", var_map: Sequence[int] | None = None) -> int:
        """Copy ``circuit`` into this builder and return the id of its root."""
        ids = [0] * len(circuit)
        for u in range(len(circuit)):
            k = circuit.kind[u]
            if k == Kind.INDICATOR:
                v = circuit.var[u] if var_map is None else var_map[circuit.var[u]]
                ids[u] = self.indicator(v, circuit.polarity[u], circuit.weighted[u])
            elif k == Kind.BERNOULLI:
                v = circuit.var[u] if var_map is None else var_map[circuit.var[u]]
                ids[u] = self.bernoulli(v)
            elif k == Kind.SUM:
                ids[u] = self.sum(ids[c] for c in circuit.children[u])
            else:
                ids[u] = self.product(*(ids[c] for c in circuit.children[u]))
        return ids[circuit.root]

    def build(self, root: int, vtree=None) -> "Circuit":
        """Freeze the sub-DAG reachable from ``root``."""
        reach = np.zeros(len(self.kind), dtype=bool)
        reach[root] = True
        for u in range(root, -1, -1):
            if reach[u]:
                for c in self.children[u]:
                    reach[c] = True
        keep = np.flatnonzero(reach)
        remap = {int(u): i for i, u in enumerate(keep)}
        self.index_map = np.full(len(self.kind), -1, dtype=np.int64)
        self.index_map[keep] = np.arange(len(keep))
        return Circuit(
            self.num_vars,
            [self.kind[u] for u in keep],
            [self.var[u] for u in keep],
            [self.polarity[u] for u in keep],
            [self.weighted[u] for u in keep],
            [tuple(remap[c] for c in self.children[u]) for u in keep],
            vtree=vtree,
        )


class Circuit:
    """Immutable circuit; see the module docstring for conventions."""

    def __init__(self, num_vars, kind, var, polarity, weighted, children, vtree=None):
        self.num_vars = int(num_vars)
        self.kind = np.asarray(kind, dtype=np.int8)
        self.var = np.asarray(var, dtype=np.int64)
        self.polarity = np.asarray(polarity, dtype=np.int64)
        self.weighted = np.asarray(weighted, dtype=bool)
        self.children = tuple(tuple(c) for c in children)
        self.vtree = vtree
        n = len(self.kind)
        if n == 0:
            raise ValueError("empty circuit")
        for u, ch in enumerate(self.children):
            for c in ch:
                if c >= u:
                    raise CyclicGraph(f"unit {u} references {c}, not topologically earlier")
            if self.kind[u] == Kind.PRODUCT and len(ch) != 2:
                raise ValueError(f"product unit {u} must have exactly two children")
            if self.kind[u] in (Kind.INDICATOR, Kind.BERNOULLI):
                if ch:
                    raise ValueError(f"input unit {u} cannot have children")
                if not 0 <= self.var[u] < self.num_vars:
                    raise MissingVariable(f"unit {u} uses variable {self.var[u]}")
        sizes = np.zeros(n, dtype=np.int64)
        for u in range(n):
            k = self.kind[u]
            if k == Kind.SUM:
                sizes[u] = len(self.children[u])
            elif k == Kind.BERNOULLI or (k == Kind.INDICATOR and self.weighted[u]):
                sizes[u] = 1
        self.slot_start = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.slot_count = sizes
        self.num_params = int(sizes.sum())
        self._scopes = None
        self._plan = None
        self._report = None

    # -- structure ---------------------------------------------------------

    @property
    def root(self) -> int:
        return len(self.kind) - 1

    def __len__(self) -> int:
        return len(self.kind)

    @property
    def num_edges(self) -> int:
        return sum(len(c) for c in self.children)

    @property
    def scopes(self) -> list[int]:
        """Per-unit scopes as integer bitmasks over variable ids."""
        if self._scopes is None:
            scopes = [0] * len(self)
            for u in range(len(self)):
                if self.kind[u] in (Kind.INDICATOR, Kind.BERNOULLI):
                    scopes[u] = 1 << int(self.var[u])
                else:
                    s = 0
                    for c in self.children[u]:
                        s |= scopes[c]
                    scopes[u] = s
            self._scopes = scopes
        return self._scopes

    def scope_vars(self, unit: int | None = None) -> list[int]:
        mask = self.scopes[self.root if unit is None else unit]
        return [v for v in range(self.num_vars) if mask >> v & 1]

    @property
    def depth(self) -> int:
        return int(self.plan.height[self.root])

    def sum_units(self) -> np.ndarray:
        return np.flatnonzero(self.kind == Kind.SUM)

    def sum_groups(self) -> list[tuple[int, int]]:
        """``(first_slot, size)`` for every sum unit with at least one child."""
        return [
            (int(self.slot_start[u]), int(self.slot_count[u]))
            for u in self.sum_units()
            if self.slot_count[u] > 0
        ]

    def bernoulli_slots(self) -> np.ndarray:
        return self.slot_start[self.kind == Kind.BERNOULLI]

    def indicator_slots(self) -> np.ndarray:
        return self.slot_start[(self.kind == Kind.INDICATOR) & self.weighted]

    def edge_slot(self, unit: int, child_pos: int) -> int:
        return int(self.slot_start[unit]) + child_pos

    def default_params(self) -> np.ndarray:
        """All sum weights 1, Bernoullis 0.5, weighted indicators 1."""
        theta = np.ones(self.num_params)
        theta[self.bernoulli_slots()] = 0.5
        return theta

    def uniform_params(self) -> np.ndarray:
        """Sum weights normalized per unit, Bernoullis 0.5."""
        theta = self.default_params()
        for start, size in self.sum_groups():
            theta[start : start + size] = 1.0 / size
        return theta

    def validate(self) -> StructureReport:
        if self._report is None:
            self._report = validate_structure(self)
        return self._report

    @property
    def flags(self) -> StructureReport | None:
        return self._report

    def stats(self) -> dict:
        return {
            "units": len(self),
            "edges": self.num_edges,
            "depth": self.depth,
            "params": self.num_params,
            "vars": bin(self.scopes[self.root]).count("1"),
        }

    # -- numeric -----------------------------------------------------------

    @property
    def plan(self) -> "_Plan":
        if self._plan is None:
            self._plan = _Plan(self)
        return self._plan

    def _prepare(self, params, assignment):
        params = np.asarray(params, dtype=np.float64)
        assignment = np.asarray(assignment)
        single = params.ndim == 1 and assignment.ndim == 1
        if params.shape[-1] != self.num_params:
            raise ParamShapeMismatch(
                f"expected {self.num_params} parameters, got {params.shape[-1]}"
            )
        if assignment.shape[-1] != self.num_vars:
            raise MissingVariable(
                f"assignment has {assignment.shape[-1]} entries, circuit has {self.num_vars} variables"
            )
        params2 = np.atleast_2d(params)
        assign2 = np.atleast_2d(assignment).astype(np.int64)
        batch = max(params2.shape[0], assign2.shape[0])
        if params2.shape[0] not in (1, batch) or assign2.shape[0] not in (1, batch):
            raise ParamShapeMismatch("batch sizes of params and assignment disagree")
        return params2, assign2, batch, single

    def log_values(self, params, assignment) -> np.ndarray:
        """Log-values of every unit, shape ``(num_units, batch)``."""
        params2, assign2, batch, _ = self._prepare(params, assignment)
        return self.plan.forward(params2, assign2, batch)


class _Plan:
    """Layered, vectorized execution plan derived once per circuit."""

    def __init__(self, circuit: Circuit):
        c = circuit
        n = len(c)
        self.n = n
        self.root = c.root
        height = np.zeros(n, dtype=np.int64)
        for u in range(n):
            if c.children[u]:
                height[u] = 1 + max(height[ch] for ch in c.children[u])
        self.height = height

        ind = np.flatnonzero(c.kind == Kind.INDICATOR)
        self.ind_units = ind
        self.ind_var = c.var[ind]
        self.ind_pol = c.polarity[ind]
        w = c.weighted[ind]
        self.wind_units = ind[w]
        self.wind_var = c.var[ind[w]]
        self.wind_pol = c.polarity[ind[w]]
        self.wind_slot = c.slot_start[ind[w]]
        ber = np.flatnonzero(c.kind == Kind.BERNOULLI)
        self.ber_units = ber
        self.ber_var = c.var[ber]
        self.ber_slot = c.slot_start[ber]
        self.empty_sums = np.flatnonzero((c.kind == Kind.SUM) & (c.slot_count == 0))

        self.layers = []
        max_h = int(height.max()) if n else 0
        by_height = [[] for _ in range(max_h + 1)]
        for u in range(n):
            if c.children[u]:
                by_height[height[u]].append(u)
        for h in range(1, max_h + 1):
            units = by_height[h]
            prods = [u for u in units if c.kind[u] == Kind.PRODUCT]
            sums = [u for u in units if c.kind[u] == Kind.SUM]
            layer = _Layer()
            layer.prod_out = np.array(prods, dtype=np.int64)
            layer.prod_left = np.array([c.children[u][0] for u in prods], dtype=np.int64)
            layer.prod_right = np.array([c.children[u][1] for u in prods], dtype=np.int64)
            layer.sum_out = np.array(sums, dtype=np.int64)
            edge_child, edge_slot, edge_owner, starts = [], [], [], []
            for u in sums:
                starts.append(len(edge_child))
                ch = c.children[u]
                edge_child.extend(ch)
                s0 = int(c.slot_start[u])
                edge_slot.extend(range(s0, s0 + len(ch)))
                edge_owner.extend([u] * len(ch))
            layer.edge_child = np.array(edge_child, dtype=np.int64)
            layer.edge_slot = np.array(edge_slot, dtype=np.int64)
            layer.edge_owner = np.array(edge_owner, dtype=np.int64)
            layer.sum_starts = np.array(starts, dtype=np.int64)
            # scatter targets for the backward pass, grouped by child id
            targets = np.concatenate([layer.prod_left, layer.prod_right, layer.edge_child])
            order = np.argsort(targets, kind="stable")
            sorted_t = targets[order]
            if len(sorted_t):
                seg = np.flatnonzero(np.r_[True, sorted_t[1:] != sorted_t[:-1]])
            else:
                seg = np.zeros(0, dtype=np.int64)
            layer.bw_order = order
            layer.bw_starts = seg
            layer.bw_targets = sorted_t[seg]
            self.layers.append(layer)

    # inputs --------------------------------------------------------------

    def _inputs(self, L, theta_t, A, batch, mode="sum"):
        with np.errstate(divide="ignore"):
            if len(self.ind_units):
                av = A[self.ind_var]
                ok = (av == self.ind_pol[:, None]) | (av < 0)
                L[self.ind_units] = np.where(ok, 0.0, -np.inf)
            if len(self.wind_units):
                L[self.wind_units] += np.log(theta_t[self.wind_slot])
            if len(self.ber_units):
                av = A[self.ber_var]
                lam = np.broadcast_to(theta_t[self.ber_slot], av.shape)
                free = np.maximum(lam, 1.0 - lam) if mode == "max" else 1.0
                val = np.where(av == 1, lam, np.where(av == 0, 1.0 - lam, free))
                L[self.ber_units] = np.log(val)
        if len(self.empty_sums):
            L[self.empty_sums] = -np.inf

    def forward(self, params2, assign2, batch, mode="sum"):
        """Log-values of all units; ``mode="max"`` runs the max-product pass."""
        A = np.broadcast_to(assign2.T, (assign2.shape[1], batch))
        theta_t = params2.T
        with np.errstate(divide="ignore"):
            logw = np.log(theta_t)
        L = np.zeros((self.n, batch))
        self._inputs(L, theta_t, A, batch, mode)
        reduce = np.logaddexp.reduceat if mode == "sum" else np.maximum.reduceat
        for layer in self.layers:
            if len(layer.prod_out):
                L[layer.prod_out] = L[layer.prod_left] + L[layer.prod_right]
            if len(layer.sum_out):
                vals = L[layer.edge_child] + np.broadcast_to(
                    logw[layer.edge_slot], (len(layer.edge_slot), batch)
                )
                L[layer.sum_out] = reduce(vals, layer.sum_starts, axis=0)
        return L

    def backward(self, params2, assign2, batch, L):
        """Log of d(root)/d(unit) for every unit, and d(root)/d(theta)."""
        A = np.broadcast_to(assign2.T, (assign2.shape[1], batch))
        theta_t = params2.T
        with np.errstate(divide="ignore"):
            logw = np.log(theta_t)
        P = theta_t.shape[0]
        D = np.full((self.n, batch), -np.inf)
        D[self.root] = 0.0
        grad = np.zeros((P, batch))
        with np.errstate(invalid="ignore"):
            for layer in reversed(self.layers):
                parts = []
                if len(layer.prod_out):
                    d = D[layer.prod_out]
                    parts.append(d + L[layer.prod_right])
                    parts.append(d + L[layer.prod_left])
                if len(layer.sum_out):
                    d_owner = D[layer.edge_owner]
                    lw = np.broadcast_to(logw[layer.edge_slot], d_owner.shape)
                    parts.append(d_owner + lw)
                    grad[layer.edge_slot] = np.exp(d_owner + L[layer.edge_child])
                if not parts:
                    continue
                contrib = np.concatenate(parts, axis=0)[layer.bw_order]
                contrib = np.where(np.isnan(contrib), -np.inf, contrib)
                red = np.logaddexp.reduceat(contrib, layer.bw_starts, axis=0)
                D[layer.bw_targets] = np.logaddexp(D[layer.bw_targets], red)
        if len(self.wind_units):
            av = A[self.wind_var]
            ok = (av == self.wind_pol[:, None]) | (av < 0)
            grad[self.wind_slot] = np.where(ok, np.exp(D[self.wind_units]), 0.0)
        if len(self.ber_units):
            av = A[self.ber_var]
            sign = np.where(av == 1, 1.0, np.where(av == 0, -1.0, 0.0))
            grad[self.ber_slot] = sign * np.exp(D[self.ber_units])
        return D, grad


class _Layer:
    __slots__ = (
        "prod_out", "prod_left", "prod_right", "sum_out", "edge_child", "edge_slot",
        "edge_owner", "sum_starts", "bw_order", "bw_starts", "bw_targets",
    )


# -- public numeric API --------------------------------------------------------


def log_evaluate(circuit: Circuit, params, assignment, allow_marginal: bool = False):
    """Log of the circuit output; scalar for a single assignment, else ``(batch,)``.

    ``allow_marginal`` permits ``-1`` entries inside the scope, which sums those
    variables out (exact only for smooth and decomposable circuits).
    """
    params2, assign2, batch, single = circuit._prepare(params, assignment)
    _check_covered(circuit, assign2, allow_marginal)
    out = circuit.plan.forward(params2, assign2, batch)[circuit.root]
    return float(out[0]) if single else out


def evaluate(circuit: Circuit, params, assignment, allow_marginal: bool = False):
    """Feedforward value of the circuit at ``assignment``."""
    out = log_evaluate(circuit, params, assignment, allow_marginal)
    return float(np.exp(out)) if np.ndim(out) == 0 else np.exp(out)


def backward(circuit: Circuit, params, assignment, log: bool = False, allow_marginal: bool = False):
    """Gradient of the output w.r.t. every parameter slot.

    With ``log=True`` returns the gradient of the log-output instead, which is
    what likelihood training needs; it is undefined (NaN) where the output is 0.
    """
    params2, assign2, batch, single = circuit._prepare(params, assignment)
    _check_covered(circuit, assign2, allow_marginal)
    plan = circuit.plan
    L = plan.forward(params2, assign2, batch)
    _, grad = plan.backward(params2, assign2, batch, L)
    grad = grad.T
    if log:
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = grad / np.exp(L[plan.root])[:, None]
    return grad[0] if single else grad


def _check_covered(circuit, assign2, allow_marginal):
    if ((assign2 < MARGINALIZED) | (assign2 > 1)).any():
        raise MissingVariable("assignment values must be 0, 1, or -1 (marginalized)")
    if not allow_marginal:
        scope = circuit.scope_vars()
        if scope and (assign2[:, scope] == MARGINALIZED).any():
            missing = [v for v in scope if (assign2[:, v] == MARGINALIZED).any()]
            raise MissingVariable(f"assignment leaves variables {missing} unset")


def full_assignment(circuit_or_num_vars, values: dict | None = None) -> np.ndarray:
    """An assignment vector with every variable marginalized except ``values``."""
    n = circuit_or_num_vars if isinstance(circuit_or_num_vars, int) else circuit_or_num_vars.num_vars
    a = np.full(n, MARGINALIZED, dtype=np.int64)
    for v, b in (values or {}).items():
        a[v] = b
    return a


def enumerate_assignments(num_vars: int, variables: Sequence[int], chunk: int = _CHUNK):
    """Yield blocks of assignments over ``variables`` in lexicographic order.

    Variable ``variables[0]`` is the most significant; other entries are 0.
    """
    k = len(variables)
    total = 1 << k
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(total, lo + chunk), dtype=np.int64)
        block = np.zeros((len(idx), num_vars), dtype=np.int64)
        if k:
            block[:, list(variables)] = (idx[:, None] >> shifts) & 1
        yield block


def support_count(circuit: Circuit, params=None) -> int:
    """Number of assignments over the circuit's scope with nonzero output."""
    variables = circuit.scope_vars()
    if len(variables) > SUPPORT_MAX_VARS:
        raise ScopeTooLarge(f"{len(variables)} variables exceeds {SUPPORT_MAX_VARS}")
    params = circuit.default_params() if params is None else params
    count = 0
    for block in enumerate_assignments(circuit.num_vars, variables):
        count += int(np.count_nonzero(log_evaluate(circuit, params, block) > -np.inf))
    return count


def support_set(circuit: Circuit, params=None) -> set[tuple[int, ...]]:
    """Support as tuples over ``circuit.scope_vars()``."""
    variables = circuit.scope_vars()
    if len(variables) > SUPPORT_MAX_VARS:
        raise ScopeTooLarge(f"{len(variables)} variables exceeds {SUPPORT_MAX_VARS}")
    params = circuit.default_params() if params is None else params
    out = set()
    for block in enumerate_assignments(circuit.num_vars, variables):
        keep = log_evaluate(circuit, params, block) > -np.inf
        out.update(tuple(int(x) for x in row) for row in block[keep][:, variables])
    return out


# -- structural validation -------------------------------------------------------


def validate_structure(circuit: Circuit) -> StructureReport:
    """Check smoothness, decomposability and determinism.

    Determinism is decided exactly (by enumerating the support of every sum
    child) when the scope has at most 20 variables; above that a sufficient
    syntactic test is used, so ``False`` there means "not certified".
    """
    smooth, decomposable = smooth_decomposable(circuit)
    scopes = circuit.scopes
    nvars = bin(scopes[circuit.root]).count("1")
    if nvars <= EXACT_DETERMINISM_MAX_VARS:
        deterministic = deterministic_exact(circuit)
    else:
        deterministic = deterministic_syntactic(circuit)
    report = StructureReport(smooth, decomposable, deterministic)
    circuit._report = report
    return report


def smooth_decomposable(circuit: Circuit) -> tuple[bool, bool]:
    scopes = circuit.scopes
    smooth = decomposable = True
    for u in range(len(circuit)):
        ch = circuit.children[u]
        if circuit.kind[u] == Kind.SUM:
            if any(scopes[c] != scopes[ch[0]] for c in ch[1:]):
                smooth = False
        elif circuit.kind[u] == Kind.PRODUCT:
            if scopes[ch[0]] & scopes[ch[1]]:
                decomposable = False
    return smooth, decomposable


def _structural_params(circuit: Circuit) -> np.ndarray:
    # generic positive parameters, so supports reflect structure only
    return circuit.default_params()


def deterministic_exact(circuit: Circuit) -> bool:
    """Exact support-overlap test over every assignment of the root scope."""
    sums = [u for u in circuit.sum_units() if len(circuit.children[u]) > 1]
    if not sums:
        return True
    variables = circuit.scope_vars()
    if len(variables) > SUPPORT_MAX_VARS:
        raise ScopeTooLarge(f"{len(variables)} variables exceeds {SUPPORT_MAX_VARS}")
    edge_child = np.concatenate([circuit.children[u] for u in sums])
    starts = np.cumsum([0] + [len(circuit.children[u]) for u in sums[:-1]])
    params = _structural_params(circuit)
    for block in enumerate_assignments(circuit.num_vars, variables):
        L = circuit.log_values(params, block)
        nz = (L[edge_child] > -np.inf).astype(np.int64)
        counts = np.add.reduceat(nz, starts, axis=0)
        if (counts > 1).any():
            return False
    return True


def _forced_literals(circuit: Circuit):
    """Per unit, the (positive, negative) literal bitmasks every model must satisfy."""
    pos = [0] * len(circuit)
    neg = [0] * len(circuit)
    for u in range(len(circuit)):
        k = circuit.kind[u]
        if k == Kind.INDICATOR:
            bit = 1 << int(circuit.var[u])
            if circuit.polarity[u]:
                pos[u] = bit
            else:
                neg[u] = bit
        elif k == Kind.PRODUCT:
            a, b = circuit.children[u]
            pos[u] = pos[a] | pos[b]
            neg[u] = neg[a] | neg[b]
        elif k == Kind.SUM and circuit.children[u]:
            ch = circuit.children[u]
            p, q = pos[ch[0]], neg[ch[0]]
            for c in ch[1:]:
                p &= pos[c]
                q &= neg[c]
            pos[u], neg[u] = p, q
        elif k == Kind.SUM:
            # constant-0 implies everything
            pos[u] = neg[u] = -1
    return pos, neg


def deterministic_syntactic(circuit: Circuit) -> bool:
    """Sufficient test: every pair of sum children is provably disjoint.

    Two units are disjoint if they force some variable to opposite values, or
    if both are products splitting the scope the same way and one side of the
    split is disjoint.
    """
    pos, neg = _forced_literals(circuit)
    scopes = circuit.scopes
    memo: dict[tuple[int, int], bool] = {}

    def disjoint(a: int, b: int) -> bool:
        if a == b:
            return False
        key = (a, b) if a < b else (b, a)
        if key in memo:
            return memo[key]
        res = bool((pos[a] & neg[b]) | (neg[a] & pos[b]))
        if not res and circuit.kind[a] == Kind.PRODUCT and circuit.kind[b] == Kind.PRODUCT:
            a1, a2 = circuit.children[a]
            b1, b2 = circuit.children[b]
            if scopes[a1] != scopes[b1] and scopes[a1] == scopes[b2]:
                b1, b2 = b2, b1
            if scopes[a1] == scopes[b1]:
                res = disjoint(a1, b1) or disjoint(a2, b2)
        if not res and circuit.kind[a] == Kind.SUM and circuit.children[a]:
            res = all(disjoint(c, b) for c in circuit.children[a])
        elif not res and circuit.kind[b] == Kind.SUM and circuit.children[b]:
            res = all(disjoint(a, c) for c in circuit.children[b])
        memo[key] = res
        return res

    for u in circuit.sum_units():
        ch = circuit.children[u]
        for a, b in itertools.combinations(ch, 2):
            if not disjoint(a, b):
                return False
    return True


# -- text serialization -----------------------------------------------------------


def dumps(circuit: Circuit) -> str:
    """Serialize to the ``spl-circuit v1`` text format.

    Weighted indicators, which only arise in product circuits, use an extra
    ``W <id> <var> <polarity>`` line.
    """
    lines = [f"spl-circuit v1 {circuit.num_vars} {len(circuit)}"]
    for u in range(len(circuit)):
        k = circuit.kind[u]
        if k == Kind.INDICATOR:
            tag = "W" if circuit.weighted[u] else "I"
            lines.append(f"{tag} {u} {circuit.var[u]} {circuit.polarity[u]}")
        elif k == Kind.BERNOULLI:
            lines.append(f"B {u} {circuit.var[u]}")
        elif k == Kind.SUM:
            ch = circuit.children[u]
            lines.append(" ".join(["S", str(u), str(len(ch)), *map(str, ch)]))
        else:
            a, b = circuit.children[u]
            lines.append(f"P {u} {a} {b}")
    lines.append(f"R {circuit.root}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Circuit:
    """Parse the ``spl-circuit v1`` format; unit ids may appear in any order."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][:2] != ["spl-circuit", "v1"] or len(rows[0]) != 4:
        raise ParseError("missing 'spl-circuit v1 <numVars> <numUnits>' header")
    try:
        num_vars, num_units = int(rows[0][2]), int(rows[0][3])
        units: dict[int, tuple] = {}
        root = None
        for row in rows[1:]:
            tag = row[0]
            if tag == "R":
                root = int(row[1])
                continue
            uid = int(row[1])
            if uid in units:
                raise ParseError(f"unit {uid} defined twice")
            if tag in ("I", "W"):
                units[uid] = (Kind.INDICATOR, int(row[2]), int(row[3]), tag == "W", ())
            elif tag == "B":
                units[uid] = (Kind.BERNOULLI, int(row[2]), -1, False, ())
            elif tag == "S":
                k = int(row[2])
                ch = tuple(int(x) for x in row[3:])
                if len(ch) != k:
                    raise ParseError(f"sum {uid} declares {k} children, lists {len(ch)}")
                units[uid] = (Kind.SUM, -1, -1, False, ch)
            elif tag == "P":
                if len(row) != 4:
                    raise ParseError(f"product {uid} must list exactly two children")
                units[uid] = (Kind.PRODUCT, -1, -1, False, (int(row[2]), int(row[3])))
            else:
                raise ParseError(f"unknown line tag {tag!r}")
    except (ValueError, IndexError) as exc:
        raise ParseError(str(exc)) from exc
    if root is None:
        raise ParseError("missing 'R <rootId>' line")
    if len(units) != num_units:
        raise ParseError(f"header declares {num_units} units, found {len(units)}")
    for uid, spec in units.items():
        for c in spec[4]:
            if c not in units:
                raise DanglingChild(f"unit {uid} references undefined unit {c}")
    if root not in units:
        raise DanglingChild(f"root {root} is undefined")
    order = _topological(units, root)
    if all(c < uid for uid in order for c in units[uid][4]):
        # ids already topological: keep them, so parameter slots keep their order
        order = sorted(order)
    index = {uid: i for i, uid in enumerate(order)}
    specs = [units[uid] for uid in order]
    return Circuit(
        num_vars,
        [s[0] for s in specs],
        [s[1] for s in specs],
        [max(s[2], -1) for s in specs],
        [s[3] for s in specs],
        [tuple(index[c] for c in s[4]) for s in specs],
    )


def _topological(units: dict, root: int) -> list[int]:
    state: dict[int, int] = {}
    order: list[int] = []
    stack = [(root, 0)]
    while stack:
        uid, i = stack.pop()
        if i == 0:
            if state.get(uid) == 2:
                continue
            if state.get(uid) == 1:
                raise CyclicGraph(f"cycle through unit {uid}")
            state[uid] = 1
        ch = units[uid][4]
        if i < len(ch):
            stack.append((uid, i + 1))
            c = ch[i]
            if state.get(c) == 1:
                raise CyclicGraph(f"cycle through unit {c}")
            if state.get(c) != 2:
                stack.append((c, 0))
        else:
            state[uid] = 2
            order.append(uid)
    return order
