"""Products of compatible circuits and the queries a semantic layer needs.

``r(x, y) = q(y) * c(x, y)`` is built unit-pairwise from a distribution circuit
``q`` over the label variables and a constraint circuit ``c``.  Because the
product's parameters are products of parameters of ``q`` and ``c`` (or
complements ``1 - lambda`` where a Bernoulli meets a negative indicator),
:class:`ProductCircuit` keeps a per-slot derivation so gradients can be pulled
back onto the parameters of ``q``.
"""

from __future__ import annotations

import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import (
    MARGINALIZED,
    Circuit,
    CircuitBuilder,
    Kind,
    backward,
    enumerate_assignments,
    log_evaluate,
)
from .compiler import ConstraintCircuit
from .errors import (
    IncompatibleCircuits,
    InconsistentLabel,
    ProbOutOfRange,
    UnboundXVariable,
    ZeroPartition,
)
from .pc import factorized_mixture

TIE_TOLERANCE = 1e-9


@contextmanager
def _recursion_limit(n):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, n))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


@dataclass
class CompatibilityCertificate:
    """Outcome of :func:`check_compatibility`.

    ``pairs`` lists the matched ``(q_unit, c_unit)`` pairs on success;
    ``witness`` holds the first pair that cannot be matched otherwise.
    """

    compatible: bool
    pairs: list[tuple[int, int]] = field(default_factory=list)
    witness: tuple[int, int] | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.compatible


class _Incompatible(Exception):
    def __init__(self, pair, reason):
        super().__init__(reason)
        self.pair = pair
        self.reason = reason


def _as_circuit(c) -> Circuit:
    return c.circuit if isinstance(c, (ConstraintCircuit, ProductCircuit)) else c


def _factorized_flags(q: Circuit) -> list[bool]:
    flags = [True] * len(q)
    for u in range(len(q)):
        if q.kind[u] == Kind.SUM:
            flags[u] = False
        elif q.kind[u] == Kind.PRODUCT:
            flags[u] = all(flags[c] for c in q.children[u])
    return flags


def _leaves_by_var(q: Circuit, u: int, cache: dict) -> dict[int, int]:
    if u in cache:
        return cache[u]
    if q.kind[u] in (Kind.INDICATOR, Kind.BERNOULLI):
        res = {int(q.var[u]): u}
    else:
        res = {}
        for c in q.children[u]:
            res.update(_leaves_by_var(q, c, cache))
    cache[u] = res
    return res


class _ProductWalk:
    """Pairwise recursion shared by the compatibility check and the product.

    With ``builder=None`` it only records matched pairs (dry run).
    """

    def __init__(self, q: Circuit, c: Circuit, build: bool):
        self.q, self.c = q, c
        self.qs, self.cs = q.scopes, c.scopes
        self.Y = self.qs[q.root]
        self.fact = _factorized_flags(q)
        self.leaf_cache: dict = {}
        self.memo: dict[tuple[int, int], int] = {}
        self.copy_memo: dict[int, int] = {}
        self.pairs: list[tuple[int, int]] = []
        self.builder = CircuitBuilder(max(q.num_vars, c.num_vars)) if build else None
        # builder unit -> per-slot factors (q_slot, q_comp, c_slot, c_comp)
        self.factors: dict[int, list[tuple[int, bool, int, bool]]] = {}

    # builder helpers; in dry-run mode they return placeholders
    def _sum(self, children, factors):
        if self.builder is None:
            return -1
        u = self.builder.sum(children)
        self.factors[u] = factors
        return u

    def _product(self, a, b):
        return -1 if self.builder is None else self.builder.product(a, b)

    def _indicator(self, var, pol, factor):
        if self.builder is None:
            return -1
        if factor is None:
            return self.builder.indicator(var, pol)
        u = self.builder.indicator(var, pol, weighted=True)
        self.factors[u] = [factor]
        return u

    def copy_c(self, m: int) -> int:
        """Copy a constraint sub-circuit that has no label variables."""
        if self.builder is None:
            return -1
        if m in self.copy_memo:
            return self.copy_memo[m]
        c, b = self.c, self.builder
        k = c.kind[m]
        if k == Kind.INDICATOR:
            f = (-1, False, int(c.slot_start[m]), False) if c.weighted[m] else None
            u = self._indicator(int(c.var[m]), int(c.polarity[m]), f)
        elif k == Kind.BERNOULLI:
            u = b.bernoulli(int(c.var[m]))
            self.factors[u] = [(-1, False, int(c.slot_start[m]), False)]
        elif k == Kind.SUM:
            kids = [self.copy_c(ch) for ch in c.children[m]]
            s0 = int(c.slot_start[m])
            u = self._sum(kids, [(-1, False, s0 + i, False) for i in range(len(kids))])
        else:
            a, bb = c.children[m]
            u = self._product(self.copy_c(a), self.copy_c(bb))
        self.copy_memo[m] = u
        return u

    def leaf(self, n: int, m: int) -> int:
        q, c = self.q, self.c
        var = int(c.var[m])
        qk, ck = q.kind[n], c.kind[m]
        qslot = int(q.slot_start[n]) if (qk == Kind.BERNOULLI or q.weighted[n]) else -1
        cslot = int(c.slot_start[m]) if (ck == Kind.BERNOULLI or c.weighted[m]) else -1
        if ck == Kind.INDICATOR:
            pol = int(c.polarity[m])
            if qk == Kind.INDICATOR and int(q.polarity[n]) != pol:
                return self._sum([], [])
            # a Bernoulli meeting [y = 0] contributes 1 - lambda
            f = (qslot, qk == Kind.BERNOULLI and pol == 0, cslot, False)
            return self._indicator(var, pol, None if qslot < 0 and cslot < 0 else f)
        if qk == Kind.INDICATOR:
            pol = int(q.polarity[n])
            return self._indicator(var, pol, (qslot, False, cslot, pol == 0))
        # Bernoulli x Bernoulli: lambda*mu [y=1] + (1-lambda)(1-mu) [y=0]
        one = self._indicator(var, 1, (qslot, False, cslot, False))
        zero = self._indicator(var, 0, (qslot, True, cslot, True))
        return self._sum([one, zero], [(-1, False, -1, False)] * 2)

    def rec(self, n: int, m: int) -> int:
        key = (n, m)
        if key in self.memo:
            return self.memo[key]
        q, c, Y = self.q, self.c, self.Y
        qs, cs = self.qs, self.cs
        ym = cs[m] & Y
        if self.fact[n]:
            if ym & ~qs[n]:
                raise _Incompatible(key, "constraint unit covers labels outside the q unit")
        elif ym != qs[n]:
            raise _Incompatible(key, "label scopes differ")
        self.pairs.append(key)
        ck, qk = c.kind[m], q.kind[n]
        if ck == Kind.PRODUCT:
            m1, m2 = c.children[m]
            if not cs[m1] & Y:
                res = self._product(self.copy_c(m1), self.rec(n, m2))
            elif not cs[m2] & Y:
                res = self._product(self.rec(n, m1), self.copy_c(m2))
            elif self.fact[n]:
                res = self._product(self.rec(n, m1), self.rec(n, m2))
            elif qk == Kind.SUM:
                res = self._distribute_q(n, m)
            elif qk == Kind.PRODUCT:
                n1, n2 = q.children[n]
                if qs[n1] != cs[m1] & Y:
                    n1, n2 = n2, n1
                if qs[n1] != cs[m1] & Y or qs[n2] != cs[m2] & Y:
                    raise _Incompatible(key, "products split the label scope differently")
                res = self._product(self.rec(n1, m1), self.rec(n2, m2))
            else:
                raise _Incompatible(key, "input unit against a multi-variable product")
        elif ck == Kind.SUM:
            mk = c.children[m]
            s0 = int(c.slot_start[m])
            if qk == Kind.SUM:
                nk = q.children[n]
                q0 = int(q.slot_start[n])
                kids, fac = [], []
                for i, ni in enumerate(nk):
                    for j, mj in enumerate(mk):
                        kids.append(self.rec(ni, mj))
                        fac.append((q0 + i, False, s0 + j, False))
                res = self._sum(kids, fac)
            else:
                kids = [self.rec(n, mj) for mj in mk]
                res = self._sum(kids, [(-1, False, s0 + j, False) for j in range(len(mk))])
        else:
            var = int(c.var[m])
            if qk == Kind.SUM:
                res = self._distribute_q(n, m)
            elif qk == Kind.PRODUCT:
                leaf = _leaves_by_var(q, n, self.leaf_cache).get(var)
                if leaf is None:
                    raise _Incompatible(key, "no q input for the constraint variable")
                res = self.leaf(leaf, m)
            else:
                if int(q.var[n]) != var:
                    raise _Incompatible(key, "input units over different variables")
                res = self.leaf(n, m)
        self.memo[key] = res
        return res

    def _distribute_q(self, n, m):
        q0 = int(self.q.slot_start[n])
        kids = [self.rec(ni, m) for ni in self.q.children[n]]
        return self._sum(kids, [(q0 + i, False, -1, False) for i in range(len(kids))])

    def run(self):
        q, c = self.q, self.c
        if c.kind[c.root] == Kind.SUM and not c.children[c.root]:
            # constant-0 constraint
            root = self._sum([], [])
        else:
            if self.cs[c.root] & self.Y != self.Y:
                raise _Incompatible((q.root, c.root), "constraint does not cover all label variables")
            with _recursion_limit(10 * (len(q) + len(c)) + 1000):
                root = self.rec(q.root, c.root)
        return root


def check_compatibility(q, c) -> CompatibilityCertificate:
    """Whether ``q`` and ``c`` admit the pairwise product; never raises.

    Rearrangement is limited to swapping the two children of a product.
    Sub-circuits of ``q`` without sum units are fully factorized and match any
    decomposition of ``c``.
    """
    q, c = _as_circuit(q), _as_circuit(c)
    walk = _ProductWalk(q, c, build=False)
    try:
        walk.run()
    except _Incompatible as exc:
        return CompatibilityCertificate(False, [], exc.pair, exc.reason)
    return CompatibilityCertificate(True, walk.pairs)


class ProductCircuit:
    """``r = q * c`` with the bookkeeping needed to derive its parameters."""

    def __init__(self, circuit, q, c, factors, pairs, label_vars):
        self.circuit: Circuit = circuit
        self.q: Circuit = q
        self.c: Circuit = c
        self.pairs = pairs
        self.label_vars = tuple(label_vars)
        f = np.asarray(factors, dtype=np.int64).reshape(-1, 4)
        self.q_slot, self.q_comp = f[:, 0], f[:, 1].astype(bool)
        self.c_slot, self.c_comp = f[:, 2], f[:, 3].astype(bool)
        self._deterministic = None

    def __len__(self) -> int:
        return len(self.circuit)

    @property
    def num_vars(self) -> int:
        return self.circuit.num_vars

    @property
    def deterministic(self) -> bool:
        """Deterministic when both factors are (checked with their validators)."""
        if self._deterministic is None:
            self._deterministic = self.q.validate().deterministic and self.c.validate().deterministic
        return self._deterministic

    def _factor(self, theta, slot, comp):
        theta = np.atleast_2d(theta)
        out = np.ones((theta.shape[0], len(slot)))
        has = slot >= 0
        vals = theta[:, slot[has]]
        out[:, has] = np.where(comp[has], 1.0 - vals, vals)
        return out

    def derive(self, q_params, c_params=None) -> np.ndarray:
        """Parameters of ``r`` from those of ``q`` (and ``c``, default all ones)."""
        q_params = np.asarray(q_params, dtype=np.float64)
        c_params = np.ones(self.c.num_params) if c_params is None else np.asarray(c_params, dtype=np.float64)
        out = self._factor(q_params, self.q_slot, self.q_comp) * self._factor(
            c_params, self.c_slot, self.c_comp
        )
        return out[0] if q_params.ndim == 1 and c_params.ndim == 1 else out

    def pullback(self, grad_r, q_params, c_params=None) -> np.ndarray:
        """Chain rule from d/d(r params) to d/d(q params)."""
        grad_r = np.atleast_2d(grad_r)
        c_params = np.ones(self.c.num_params) if c_params is None else c_params
        cf = self._factor(c_params, self.c_slot, self.c_comp)
        has = self.q_slot >= 0
        sign = np.where(self.q_comp[has], -1.0, 1.0)
        contrib = grad_r[:, has] * cf[:, has] * sign
        out = np.zeros((grad_r.shape[0], self.q.num_params))
        np.add.at(out.T, self.q_slot[has], contrib.T)
        return out[0] if np.ndim(q_params) == 1 and grad_r.shape[0] == 1 else out


def product(q, c) -> ProductCircuit:
    """Pairwise product of compatible circuits, memoized on ``(q_unit, c_unit)``."""
    constraint = c
    q, c = _as_circuit(q), _as_circuit(c)
    walk = _ProductWalk(q, c, build=True)
    try:
        root = walk.run()
    except _Incompatible as exc:
        raise IncompatibleCircuits(f"{exc.reason} at pair {exc.pair}") from None
    b = walk.builder
    vtree = constraint.vtree if isinstance(constraint, ConstraintCircuit) else c.vtree
    circuit = b.build(root, vtree=vtree)
    factors = [(-1, False, -1, False)] * circuit.num_params
    for old, fac in walk.factors.items():
        new = b.index_map[old]
        if new < 0:
            continue
        s0 = int(circuit.slot_start[new])
        for i, f in enumerate(fac):
            factors[s0 + i] = f
    label_vars = q.scope_vars()
    return ProductCircuit(circuit, q, c, factors, walk.pairs, label_vars)


# -- queries ------------------------------------------------------------------------


def _unpack(r, label_vars):
    if isinstance(r, ProductCircuit):
        return r.circuit, r.label_vars if label_vars is None else tuple(label_vars)
    if isinstance(r, ConstraintCircuit):
        r = r.circuit
    return r, None if label_vars is None else tuple(label_vars)


def _x_assignment(circuit: Circuit, x, label_vars) -> np.ndarray:
    """Assignment array(s) with label variables marginalized."""
    if isinstance(x, dict):
        a = np.full(circuit.num_vars, MARGINALIZED, dtype=np.int64)
        for v, b in x.items():
            a[v] = b
    elif x is None:
        a = np.full(circuit.num_vars, MARGINALIZED, dtype=np.int64)
    else:
        a = np.array(x, dtype=np.int64, copy=True)
    if label_vars is not None:
        a[..., list(label_vars)] = MARGINALIZED
        others = [v for v in circuit.scope_vars() if v not in set(label_vars)]
        if others and (np.atleast_2d(a)[:, others] == MARGINALIZED).any():
            raise UnboundXVariable("input variables of the constraint must all be fixed")
    return a


def log_partition(r, params, x=None, label_vars=None):
    """``log Z(x)``: one feedforward pass with label variables summed out."""
    circuit, label_vars = _unpack(r, label_vars)
    a = _x_assignment(circuit, x, label_vars)
    return log_evaluate(circuit, params, a, allow_marginal=True)


def partition(r, params, x=None, label_vars=None):
    """``Z(x) = sum_y q(y) c(x, y)``, exact for smooth and decomposable ``r``."""
    out = log_partition(r, params, x, label_vars)
    return float(np.exp(out)) if np.ndim(out) == 0 else np.exp(out)


def _full(circuit, x, y, label_vars):
    a = _x_assignment(circuit, x, None)
    y = np.asarray(y, dtype=np.int64)
    if label_vars is None:
        return np.where(y >= 0, y, a) if y.shape == a.shape else a
    a[..., list(label_vars)] = y
    return a


def log_likelihood(r, params, x, y, label_vars=None) -> float:
    """``log r(x, y) - log Z(x)``; ``y`` lists label values in ``label_vars`` order."""
    circuit, label_vars = _unpack(r, label_vars)
    a = _full(circuit, x, y, label_vars)
    if isinstance(r, ProductCircuit):
        if log_evaluate(r.c, np.ones(r.c.num_params), a[: r.c.num_vars]) == -np.inf:
            raise InconsistentLabel("label violates the constraint")
    num = log_evaluate(circuit, params, a)
    if num == -np.inf:
        raise InconsistentLabel("label has zero mass under the circuit")
    return float(num - log_partition(r, params, a, label_vars))


def nll_and_grad(r, params, assignments, label_vars=None):
    """Batched negative log-likelihood and its gradient w.r.t. ``r``'s parameters.

    ``assignments`` holds full ``(x, y)`` rows, shape ``(batch, num_vars)``.
    """
    circuit, label_vars = _unpack(r, label_vars)
    a = np.atleast_2d(np.asarray(assignments, dtype=np.int64))
    ax = a.copy()
    ax[:, list(label_vars)] = MARGINALIZED
    params = np.atleast_2d(params)
    plan = circuit.plan
    batch = a.shape[0]
    p2 = np.broadcast_to(params, (batch, params.shape[1]))
    Ly = plan.forward(p2, a, batch)
    Lz = plan.forward(p2, ax, batch)
    log_num, log_z = Ly[plan.root], Lz[plan.root]
    if np.isneginf(log_num).any():
        bad = int(np.flatnonzero(np.isneginf(log_num))[0])
        raise InconsistentLabel(f"example {bad} has zero likelihood")
    _, gy = plan.backward(p2, a, batch, Ly)
    _, gz = plan.backward(p2, ax, batch, Lz)
    grad = -(gy / np.exp(log_num) - gz / np.exp(log_z)).T
    return -(log_num - log_z), grad


@dataclass
class MapResult:
    labels: tuple[int, ...]
    assignment: np.ndarray
    log_probability: float
    approximate: bool

    @property
    def probability(self) -> float:
        return float(np.exp(self.log_probability))


def _max_trace(circuit: Circuit, L, logw, col, assign, label_set):
    """Lexicographically smallest maximizing completion below the root."""
    memo: dict[int, dict[int, int]] = {}
    ch, kind = circuit.children, circuit.kind

    def best(u: int) -> dict[int, int]:
        if u in memo:
            return memo[u]
        k = kind[u]
        if k == Kind.PRODUCT:
            res = dict(best(ch[u][0]))
            res.update(best(ch[u][1]))
        elif k == Kind.SUM:
            s0 = int(circuit.slot_start[u])
            scores = [L[c, col] + logw[s0 + i, col] for i, c in enumerate(ch[u])]
            top = max(scores)
            cands = [c for c, s in zip(ch[u], scores) if s >= top - TIE_TOLERANCE * max(1.0, abs(top))]
            if len(cands) == 1:
                res = best(cands[0])
            else:
                options = [best(c) for c in cands]
                res = min(options, key=lambda d: tuple(d[v] for v in sorted(d)))
        else:
            var = int(circuit.var[u])
            val = int(assign[var])
            if val == MARGINALIZED:
                if k == Kind.INDICATOR:
                    val = int(circuit.polarity[u])
                else:
                    lam = np.exp(logw[int(circuit.slot_start[u]), col])
                    val = 1 if lam > 0.5 else 0
            res = {var: val}
        memo[u] = res
        return res

    return best(circuit.root)


def map_state(r, params, x=None, label_vars=None, deterministic: bool | None = None) -> MapResult:
    """Most probable label assignment given ``x``.

    Exact for deterministic circuits; otherwise sum units act as max units and
    the result is flagged approximate.  Ties go to the lexicographically
    smallest assignment in variable-id order.  The reported probability is
    always the exact normalized value of the returned state.
    """
    circuit, label_vars = _unpack(r, label_vars)
    if label_vars is None:
        label_vars = tuple(circuit.scope_vars())
    a = _x_assignment(circuit, x, label_vars)
    params2 = np.atleast_2d(np.asarray(params, dtype=np.float64))
    L = circuit.plan.forward(params2, a[None, :], 1, mode="max")
    if L[circuit.root, 0] == -np.inf:
        raise ZeroPartition("no label assignment is consistent with the input")
    with np.errstate(divide="ignore"):
        logw = np.log(params2.T)
    with _recursion_limit(10 * len(circuit) + 1000):
        chosen = _max_trace(circuit, L, logw, 0, a, set(label_vars))
    full = a.copy()
    for v in label_vars:
        full[v] = chosen.get(v, 0)
    if deterministic is None:
        deterministic = r.deterministic if isinstance(r, ProductCircuit) else circuit.validate().deterministic
    logp = log_evaluate(circuit, params, full) - log_partition(circuit, params, a, label_vars)
    return MapResult(tuple(int(full[v]) for v in label_vars), full, float(logp), not deterministic)


def map_batch(r, params, xs, label_vars=None, deterministic: bool | None = None) -> list[MapResult]:
    """:func:`map_state` over a batch, sharing the upward passes."""
    circuit, label_vars = _unpack(r, label_vars)
    a = _x_assignment(circuit, np.atleast_2d(xs), label_vars)
    batch = a.shape[0]
    params2 = np.broadcast_to(np.atleast_2d(np.asarray(params, dtype=np.float64)), (batch, circuit.num_params))
    plan = circuit.plan
    L = plan.forward(params2, a, batch, mode="max")
    Lz = plan.forward(params2, a, batch)
    with np.errstate(divide="ignore"):
        logw = np.log(params2.T)
    if deterministic is None:
        deterministic = r.deterministic if isinstance(r, ProductCircuit) else circuit.validate().deterministic
    full = a.copy()
    out = []
    with _recursion_limit(10 * len(circuit) + 1000):
        for i in range(batch):
            if L[circuit.root, i] == -np.inf:
                raise ZeroPartition(f"example {i}: no consistent label assignment")
            chosen = _max_trace(circuit, L, logw, i, a[i], set(label_vars))
            for v in label_vars:
                full[i, v] = chosen.get(v, 0)
    Ly = plan.forward(params2, full, batch)
    logp = Ly[plan.root] - Lz[plan.root]
    for i in range(batch):
        out.append(
            MapResult(tuple(int(full[i, v]) for v in label_vars), full[i], float(logp[i]), not deterministic)
        )
    return out


def brute_force_map(r, params, x=None, label_vars=None):
    """Exhaustive argmax with the same tie-breaking as :func:`map_state`."""
    circuit, label_vars = _unpack(r, label_vars)
    if label_vars is None:
        label_vars = tuple(circuit.scope_vars())
    base = _x_assignment(circuit, x, label_vars)
    label_set = set(label_vars)
    others = [v for v in range(circuit.num_vars) if v not in label_set]
    best_val, best_y = -np.inf, None
    for block in enumerate_assignments(circuit.num_vars, list(label_vars)):
        block[:, others] = base[others]
        vals = log_evaluate(circuit, params, block, allow_marginal=True)
        for row, val in zip(block, vals):
            margin = 0.0 if best_val == -np.inf else TIE_TOLERANCE * max(1.0, abs(best_val))
            if best_y is None or val > best_val + margin:
                best_val, best_y = val, row
    return tuple(int(best_y[v]) for v in label_vars), best_val


def brute_force_partition(q, q_params, c, c_params=None, x=None, label_vars=None) -> float:
    """``sum_y q(y) c(x, y)`` by enumeration, evaluating ``q`` and ``c`` separately."""
    q, c = _as_circuit(q), _as_circuit(c)
    c_params = np.ones(c.num_params) if c_params is None else c_params
    label_vars = tuple(q.scope_vars()) if label_vars is None else tuple(label_vars)
    n = max(q.num_vars, c.num_vars)
    xa = np.full(n, MARGINALIZED, dtype=np.int64) if x is None else np.asarray(x, dtype=np.int64)
    total = 0.0
    for block in enumerate_assignments(n, list(label_vars)):
        a = np.broadcast_to(xa, block.shape).copy()
        a[:, list(label_vars)] = block[:, list(label_vars)]
        qv = np.exp(log_evaluate(q, q_params, a[:, : q.num_vars], allow_marginal=True))
        cv = np.exp(log_evaluate(c, c_params, a[:, : c.num_vars], allow_marginal=True))
        total += float(np.sum(qv * cv))
    return total


class SemanticLoss:
    """``-log sum_{y |= K} prod_i p_i^{y_i} (1 - p_i)^{1 - y_i}``.

    Computed as ``-log Z`` of the product of a fully factorized circuit with
    the constraint circuit; the product is built once and reused.
    """

    def __init__(self, constraint, label_vars: Sequence[int] | None = None):
        c = _as_circuit(constraint)
        self.label_vars = tuple(c.scope_vars() if label_vars is None else label_vars)
        self.q = factorized_mixture(self.label_vars, 1, num_vars=c.num_vars)
        self.r = product(self.q, constraint)
        # label position -> Bernoulli slot of q
        leaf_var = {int(self.q.var[u]): int(self.q.slot_start[u]) for u in np.flatnonzero(self.q.kind == Kind.BERNOULLI)}
        self.slots = np.array([leaf_var[v] for v in self.label_vars])

    def q_params(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if ((probs < 0) | (probs > 1) | np.isnan(probs)).any():
            raise ProbOutOfRange("label probabilities must lie in [0, 1]")
        theta = np.ones(probs.shape[:-1] + (self.q.num_params,))
        theta[..., self.slots] = probs
        return theta

    def __call__(self, probs, x=None, return_grad: bool = False):
        theta_q = self.q_params(probs)
        theta_r = self.r.derive(theta_q)
        circuit = self.r.circuit
        a = _x_assignment(circuit, x, self.label_vars)
        if theta_r.ndim == 2 and a.ndim == 1:
            a = np.broadcast_to(a, (theta_r.shape[0], a.shape[0]))
        logz = log_evaluate(circuit, theta_r, a, allow_marginal=True)
        loss = -logz
        if not return_grad:
            return loss
        g = backward(circuit, theta_r, a, log=True, allow_marginal=True)
        gq = self.r.pullback(g, theta_q)
        grad = -np.asarray(gq)[..., self.slots]
        return loss, grad


def semantic_loss(label_probs, constraint, label_vars=None, x=None, return_grad: bool = False):
    """One-shot :class:`SemanticLoss`; build the class directly to reuse the product."""
    return SemanticLoss(constraint, label_vars)(label_probs, x, return_grad)
