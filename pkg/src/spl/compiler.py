"""Bottom-up compilation of propositional formulas into constraint circuits.

Formulas are compiled into sentential decision diagrams (compressed, trimmed,
canonical for a fixed vtree) with the usual apply algorithm, then lowered into
smooth, structured-decomposable, deterministic circuits whose sum weights are
all 1 and whose inputs are indicators.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .circuit import Circuit, CircuitBuilder
from .errors import (
    DuplicateModel,
    InconsistentScope,
    LiteralOutOfRange,
    MalformedHeader,
    UnterminatedClause,
    VtreeMismatch,
)
from .vtree import RIGHT_LINEAR, Vtree, build_vtree

FALSE = 0
TRUE = 1
AND = 0
OR = 1

Literal = tuple[int, bool]


@dataclass
class CnfFormula:
    """Clauses over 0-based variables; a literal is ``(var, polarity)``."""

    num_vars: int
    clauses: list[tuple[Literal, ...]] = field(default_factory=list)

    def __post_init__(self):
        for clause in self.clauses:
            for var, _ in clause:
                if not 0 <= var < self.num_vars:
                    raise LiteralOutOfRange(f"variable {var} outside [0, {self.num_vars})")

    def satisfied_by(self, assignment: Sequence[int]) -> bool:
        return all(
            any(bool(assignment[v]) == pol for v, pol in clause) for clause in self.clauses
        )

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {len(self.clauses)}"]
        for clause in self.clauses:
            lits = [str(v + 1) if pol else str(-(v + 1)) for v, pol in clause]
            lines.append(" ".join(lits + ["0"]))
        return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> CnfFormula:
    """Parse DIMACS CNF; variable ids are shifted to 0-based."""
    header = None
    clauses: list[tuple[Literal, ...]] = []
    current: list[Literal] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            m = re.fullmatch(r"p\s+cnf\s+(\d+)\s+(\d+)", line)
            if header is not None or m is None:
                raise MalformedHeader(f"line {lineno}: bad problem line {line!r}")
            header = (int(m.group(1)), int(m.group(2)))
            continue
        if header is None:
            raise MalformedHeader("clauses before the 'p cnf' header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise MalformedHeader(f"line {lineno}: bad token {tok!r}") from None
            if lit == 0:
                clauses.append(tuple(current))
                current = []
                continue
            if abs(lit) > header[0]:
                raise LiteralOutOfRange(f"line {lineno}: literal {lit} exceeds {header[0]} variables")
            current.append((abs(lit) - 1, lit > 0))
    if header is None:
        raise MalformedHeader("missing 'p cnf' header")
    if current:
        raise UnterminatedClause("last clause is not terminated by 0")
    if len(clauses) != header[1]:
        raise MalformedHeader(f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula(header[0], clauses)


class SddManager:
    """Unique table, apply cache and node store for one vtree."""

    def __init__(self, vtree: Vtree, use_cache: bool = True):
        self.vtree = vtree
        self.use_cache = use_cache
        # node id -> vtree node (-1 for constants)
        self.node_vtree: list[int] = [-1, -1]
        self.elements: list[tuple | None] = [None, None]
        self.literals: list[Literal | None] = [None, None]
        self._unique: dict = {}
        self._apply_cache: dict = {}
        self._neg_cache: dict = {FALSE: TRUE, TRUE: FALSE}
        self.apply_calls = 0

    def __len__(self) -> int:
        return len(self.node_vtree)

    # -- node construction -------------------------------------------------------

    def literal(self, var: int, polarity: bool) -> int:
        key = ("L", var, bool(polarity))
        node = self._unique.get(key)
        if node is None:
            if var not in self.vtree.leaf_of:
                raise InconsistentScope(f"variable {var} is not a vtree leaf")
            node = self._new(self.vtree.leaf_of[var], None, (var, bool(polarity)))
            self._unique[key] = node
        return node

    def _new(self, vnode, elements, literal):
        self.node_vtree.append(vnode)
        self.elements.append(elements)
        self.literals.append(literal)
        return len(self.node_vtree) - 1

    def _decision(self, vnode: int, elements: list[tuple[int, int]]) -> int:
        """Compress, trim and intern a decision node; primes must partition."""
        by_sub: dict[int, int] = {}
        for p, s in elements:
            if p == FALSE:
                continue
            by_sub[s] = self.apply(by_sub[s], p, OR) if s in by_sub else p
        if not by_sub:
            return FALSE
        if len(by_sub) == 1:
            return next(iter(by_sub))
        if len(by_sub) == 2 and set(by_sub) == {TRUE, FALSE}:
            return by_sub[TRUE]
        elems = tuple(sorted((p, s) for s, p in by_sub.items()))
        key = (vnode, elems)
        node = self._unique.get(key)
        if node is None:
            node = self._new(vnode, elems, None)
            self._unique[key] = node
        return node

    def is_constant(self, node: int) -> bool:
        return node in (FALSE, TRUE)

    # -- apply -------------------------------------------------------------------

    def negate(self, node: int) -> int:
        if node in self._neg_cache:
            return self._neg_cache[node]
        lit = self.literals[node]
        if lit is not None:
            res = self.literal(lit[0], not lit[1])
        else:
            res = self._decision(
                self.node_vtree[node], [(p, self.negate(s)) for p, s in self.elements[node]]
            )
        self._neg_cache[node] = res
        self._neg_cache[res] = node
        return res

    def conjoin(self, a: int, b: int) -> int:
        return self.apply(a, b, AND)

    def disjoin(self, a: int, b: int) -> int:
        return self.apply(a, b, OR)

    def _normalized(self, node: int, vnode: int):
        nv = self.node_vtree[node]
        if nv == vnode:
            return self.elements[node]
        if self.vtree.in_left(vnode, nv):
            return ((node, TRUE), (self.negate(node), FALSE))
        return ((TRUE, node),)

    def apply(self, a: int, b: int, op: int) -> int:
        if op == AND:
            if a == FALSE or b == FALSE:
                return FALSE
            if a == TRUE:
                return b
            if b == TRUE or a == b:
                return a
        else:
            if a == TRUE or b == TRUE:
                return TRUE
            if a == FALSE:
                return b
            if b == FALSE or a == b:
                return a
        if a > b:
            a, b = b, a
        key = (op, a, b)
        if self.use_cache:
            hit = self._apply_cache.get(key)
            if hit is not None:
                return hit
        self.apply_calls += 1
        la, lb = self.literals[a], self.literals[b]
        if la is not None and lb is not None and la[0] == lb[0]:
            # same variable, different polarity
            return FALSE if op == AND else TRUE
        vt = self.vtree
        va, vb = self.node_vtree[a], self.node_vtree[b]
        if va == vb:
            v = va
            ea, eb = self.elements[a], self.elements[b]
        elif vt.contains(va, vb):
            v = va
            ea, eb = self.elements[a], self._normalized(b, v)
        elif vt.contains(vb, va):
            v = vb
            ea, eb = self._normalized(a, v), self.elements[b]
        else:
            v = vt.lca(va, vb)
            ea, eb = self._normalized(a, v), self._normalized(b, v)
        out = []
        for p, s in ea:
            for q, r in eb:
                pq = self.apply(p, q, AND)
                if pq != FALSE:
                    out.append((pq, self.apply(s, r, op)))
        res = self._decision(v, out)
        if self.use_cache:
            self._apply_cache[key] = res
        return res

    def clause(self, literals: Iterable[Literal]) -> int:
        node = FALSE
        for var, pol in literals:
            node = self.disjoin(node, self.literal(var, pol))
        return node

    def term(self, literals: Iterable[Literal]) -> int:
        node = TRUE
        for var, pol in literals:
            node = self.conjoin(node, self.literal(var, pol))
        return node

    # -- queries -----------------------------------------------------------------

    def model_count(self, node: int, vnode: int | None = None) -> int:
        """Exact number of models over the variables of ``vnode`` (default: root)."""
        vt = self.vtree
        vnode = vt.root if vnode is None else vnode
        memo: dict[int, int] = {}
        nvars = [len(vt.node_vars(i)) for i in range(len(vt))]

        def count(n: int) -> int:
            # models over vars of the node's own vtree
            if n in memo:
                return memo[n]
            if self.literals[n] is not None:
                res = 1
            else:
                nv = self.node_vtree[n]
                res = 0
                for p, s in self.elements[n]:
                    res += lifted(p, vt.left[nv]) * lifted(s, vt.right[nv])
            memo[n] = res
            return res

        def lifted(n: int, target: int) -> int:
            if n == FALSE:
                return 0
            if n == TRUE:
                return 1 << nvars[target]
            return count(n) << (nvars[target] - nvars[self.node_vtree[n]])

        return lifted(node, vnode)

    def size(self, node: int) -> int:
        """Number of decision elements reachable from ``node``."""
        seen, stack, total = set(), [node], 0
        while stack:
            n = stack.pop()
            if n in seen or self.elements[n] is None:
                continue
            seen.add(n)
            for p, s in self.elements[n]:
                total += 1
                stack.extend((p, s))
        return total

    def import_node(self, other: "SddManager", node: int) -> int:
        """Copy a node from a manager over an identical vtree."""
        memo = {FALSE: FALSE, TRUE: TRUE}

        def rec(n):
            if n in memo:
                return memo[n]
            lit = other.literals[n]
            if lit is not None:
                res = self.literal(*lit)
            else:
                res = self._decision(
                    other.node_vtree[n], [(rec(p), rec(s)) for p, s in other.elements[n]]
                )
            memo[n] = res
            return res

        return rec(node)

    # -- lowering ----------------------------------------------------------------

    def to_circuit(self, node: int, num_vars: int) -> Circuit:
        """Lower to a smooth circuit whose products follow the vtree splits."""
        vt = self.vtree
        b = CircuitBuilder(num_vars)
        taut: dict[int, int] = {}

        def tautology(v: int) -> int:
            if v not in taut:
                if vt.is_leaf(v):
                    var = vt.var[v]
                    taut[v] = b.sum([b.indicator(var, 1), b.indicator(var, 0)])
                else:
                    taut[v] = b.product(tautology(vt.left[v]), tautology(vt.right[v]))
            return taut[v]

        memo: dict[tuple[int, int], int] = {}
        # explicit stack keeps deep right-linear vtrees clear of the recursion limit
        for n, v in self._lowering_order(node, vt.root):
            if n == TRUE:
                memo[(n, v)] = tautology(v)
                continue
            nv = self.node_vtree[n]
            if nv == v:
                lit = self.literals[n]
                if lit is not None:
                    memo[(n, v)] = b.indicator(lit[0], int(lit[1]))
                else:
                    kids = [
                        b.product(memo[(p, vt.left[v])], memo[(s, vt.right[v])])
                        for p, s in self.elements[n]
                        if s != FALSE
                    ]
                    memo[(n, v)] = b.sum(kids)
            elif vt.in_left(v, nv):
                memo[(n, v)] = b.product(memo[(n, vt.left[v])], tautology(vt.right[v]))
            else:
                memo[(n, v)] = b.product(tautology(vt.left[v]), memo[(n, vt.right[v])])
        if node == FALSE:
            root = b.sum([])
        else:
            root = memo[(node, vt.root)]
        return b.build(root, vtree=vt)

    def _lowering_order(self, node: int, vroot: int):
        """(sdd node, vtree node) pairs in dependency order for :meth:`to_circuit`."""
        if node == FALSE:
            return []
        vt = self.vtree
        order, done = [], set()
        stack = [((node, vroot), False)]
        while stack:
            key, expanded = stack.pop()
            if key in done:
                continue
            n, v = key
            if expanded or n == TRUE:
                done.add(key)
                order.append(key)
                continue
            deps = []
            nv = self.node_vtree[n]
            if nv == v:
                if self.literals[n] is None:
                    for p, s in self.elements[n]:
                        if s != FALSE:
                            deps.append((p, vt.left[v]))
                            deps.append((s, vt.right[v]))
            elif vt.in_left(v, nv):
                deps.append((n, vt.left[v]))
            else:
                deps.append((n, vt.right[v]))
            stack.append((key, True))
            for d in deps:
                if d not in done:
                    stack.append((d, False))
        return order


class ConstraintCircuit:
    """A compiled constraint: an SDD node plus its lowered circuit.

    The circuit computes ``1[a |= K]``; all sum weights are 1 and every input is
    an indicator.  Logical operations stay symbolic until :attr:`circuit` is
    requested.
    """

    def __init__(self, manager: SddManager, node: int, num_vars: int | None = None):
        self.manager = manager
        self.node = node
        self.num_vars = (
            max(manager.vtree.variables) + 1 if num_vars is None else int(num_vars)
        )
        self._circuit = None

    @property
    def vtree(self) -> Vtree:
        return self.manager.vtree

    @property
    def circuit(self) -> Circuit:
        if self._circuit is None:
            self._circuit = self.manager.to_circuit(self.node, self.num_vars)
        return self._circuit

    def params(self) -> np.ndarray:
        return np.ones(self.circuit.num_params)

    @property
    def is_false(self) -> bool:
        return self.node == FALSE

    @property
    def is_true(self) -> bool:
        return self.node == TRUE

    def model_count(self) -> int:
        """Exact model count over all vtree variables."""
        return self.manager.model_count(self.node)

    def _other(self, other: "ConstraintCircuit") -> int:
        if other.manager is self.manager:
            return other.node
        if other.vtree != self.vtree:
            raise VtreeMismatch("constraint circuits were compiled over different vtrees")
        return self.manager.import_node(other.manager, other.node)

    def _wrap(self, node: int, other: "ConstraintCircuit | None" = None):
        n = self.num_vars if other is None else max(self.num_vars, other.num_vars)
        return ConstraintCircuit(self.manager, node, n)

    def conjoin(self, other: "ConstraintCircuit") -> "ConstraintCircuit":
        return self._wrap(self.manager.conjoin(self.node, self._other(other)), other)

    def disjoin(self, other: "ConstraintCircuit") -> "ConstraintCircuit":
        return self._wrap(self.manager.disjoin(self.node, self._other(other)), other)

    def negate(self) -> "ConstraintCircuit":
        return self._wrap(self.manager.negate(self.node))

    __and__ = conjoin
    __or__ = disjoin
    __invert__ = negate

    def __repr__(self) -> str:
        return f"ConstraintCircuit(node={self.node}, vtree={self.vtree.dumps()})"


def conjoin(a: ConstraintCircuit, b: ConstraintCircuit) -> ConstraintCircuit:
    return a.conjoin(b)


def disjoin(a: ConstraintCircuit, b: ConstraintCircuit) -> ConstraintCircuit:
    return a.disjoin(b)


def _manager_for(vtree: Vtree | SddManager, use_cache: bool = True) -> SddManager:
    if isinstance(vtree, SddManager):
        return vtree
    return SddManager(vtree, use_cache=use_cache)


def constant(vtree: Vtree | SddManager, value: bool, num_vars: int | None = None) -> ConstraintCircuit:
    mgr = _manager_for(vtree)
    return ConstraintCircuit(mgr, TRUE if value else FALSE, num_vars)


def compile_cnf(
    formula: CnfFormula,
    vtree: Vtree | SddManager | None = None,
    use_cache: bool = True,
    num_vars: int | None = None,
) -> ConstraintCircuit:
    """Compile clause by clause, folding with conjoin.

    Without an explicit vtree a right-linear one over ``0..num_vars-1`` is used.
    """
    if vtree is None:
        vtree = build_vtree(range(formula.num_vars), RIGHT_LINEAR)
    mgr = _manager_for(vtree, use_cache)
    missing = {v for clause in formula.clauses for v, _ in clause} - set(mgr.vtree.variables)
    if missing:
        raise InconsistentScope(f"variables {sorted(missing)} are not vtree leaves")
    node = TRUE
    for clause in formula.clauses:
        node = mgr.conjoin(node, mgr.clause(clause))
        if node == FALSE:
            break
    n = max(formula.num_vars, max(mgr.vtree.variables) + 1) if num_vars is None else num_vars
    return ConstraintCircuit(mgr, node, n)


def from_models(
    models: Iterable[Sequence[int]],
    vtree: Vtree | SddManager,
    variables: Sequence[int] | None = None,
    num_vars: int | None = None,
) -> ConstraintCircuit:
    """Constraint circuit whose support is exactly ``models``.

    ``models`` are 0/1 tuples aligned with ``variables`` (default: the vtree's
    variables in ascending order).  Vtree variables outside ``variables`` are
    left unconstrained.  The decision structure is built along the vtree,
    grouping assignments of the left variables by their set of right
    completions, so isomorphic sub-diagrams are shared.
    """
    mgr = _manager_for(vtree)
    vt = mgr.vtree
    variables = sorted(vt.variables) if variables is None else [int(v) for v in variables]
    if len(set(variables)) != len(variables):
        raise InconsistentScope("variables listed twice")
    outside = set(variables) - set(vt.variables)
    if outside:
        raise InconsistentScope(f"variables {sorted(outside)} are not vtree leaves")
    column = {v: i for i, v in enumerate(variables)}
    rows = []
    for m in models:
        m = tuple(int(x) for x in m)
        if len(m) != len(variables) or any(x not in (0, 1) for x in m):
            raise InconsistentScope(f"model {m} is not a 0/1 vector over {len(variables)} variables")
        rows.append(m)
    if len(set(rows)) != len(rows):
        raise DuplicateModel("model set contains duplicates")

    # constrained columns below each vtree node, in model-tuple order
    cols = [[column[v] for v in vt.node_vars(i) if v in column] for i in range(len(vt))]
    memo: dict[tuple[int, frozenset], int] = {}

    def build(v: int, projs: frozenset) -> int:
        # projs: tuples over cols[v]
        if not projs:
            return FALSE
        if not cols[v]:
            return TRUE
        key = (v, projs)
        if key in memo:
            return memo[key]
        if vt.is_leaf(v):
            vals = {p[0] for p in projs}
            var = vt.var[v]
            res = TRUE if len(vals) == 2 else mgr.literal(var, vals.pop() == 1)
        else:
            lcols, rcols = cols[vt.left[v]], cols[vt.right[v]]
            pos = {c: i for i, c in enumerate(cols[v])}
            li = [pos[c] for c in lcols]
            ri = [pos[c] for c in rcols]
            completions: dict[tuple, set] = {}
            for p in projs:
                completions.setdefault(tuple(p[i] for i in li), set()).add(
                    tuple(p[i] for i in ri)
                )
            groups: dict[frozenset, list] = {}
            for lp, rset in completions.items():
                groups.setdefault(frozenset(rset), []).append(lp)
            elements = []
            for rset, lps in groups.items():
                elements.append((build(vt.left[v], frozenset(lps)), build(vt.right[v], rset)))
            rest = mgr.negate(build(vt.left[v], frozenset(completions)))
            if rest != FALSE:
                elements.append((rest, FALSE))
            res = mgr._decision(v, elements)
        memo[key] = res
        return res

    root_cols = cols[vt.root]
    node = build(vt.root, frozenset(tuple(r[c] for c in root_cols) for r in rows))
    return ConstraintCircuit(mgr, node, num_vars)


def clauses_to_models(formula: CnfFormula, variables: Sequence[int]) -> list[tuple[int, ...]]:
    """Brute-force model enumeration; an independent oracle for small formulas."""
    out = []
    for bits in itertools.product((0, 1), repeat=len(variables)):
        a = [0] * formula.num_vars
        for v, x in zip(variables, bits):
            a[v] = x
        if formula.satisfied_by(a):
            out.append(bits)
    return out
