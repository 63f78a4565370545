"""Vtrees: binary trees over variables that fix a hierarchical scope partition."""

from __future__ import annotations

from typing import Sequence

from .errors import EmptyVariableSet, ParseError

RIGHT_LINEAR = "right-linear"
BALANCED = "balanced"
_ALIASES = {
    "rightlinear": RIGHT_LINEAR,
    "right-linear": RIGHT_LINEAR,
    "right_linear": RIGHT_LINEAR,
    "balanced": BALANCED,
}


class Vtree:
    """A vtree with nodes stored in in-order.

    Every node has an integer id equal to its in-order position, so "``u`` lies
    in the subtree of ``v``" is an interval test.
    """

    def __init__(self, shape):
        # shape: nested 2-tuples with int leaves
        self.left: list[int] = []
        self.right: list[int] = []
        self.var: list[int] = []
        self.parent: list[int] = []
        self.lo: list[int] = []
        self.hi: list[int] = []
        self.root = self._build(shape)
        self.parent[self.root] = -1
        leaves = [v for v in self.var if v >= 0]
        if len(set(leaves)) != len(leaves):
            raise ValueError("vtree leaves must be distinct variables")
        self.variables = tuple(leaves)
        self.leaf_of = {v: i for i, v in enumerate(self.var) if v >= 0}
        self.masks = [0] * len(self.var)
        for node in self.postorder():
            if self.is_leaf(node):
                self.masks[node] = 1 << self.var[node]
            else:
                self.masks[node] = self.masks[self.left[node]] | self.masks[self.right[node]]
        self.depth_of = [0] * len(self.var)
        for node in reversed(self.postorder()):
            p = self.parent[node]
            self.depth_of[node] = 0 if p < 0 else self.depth_of[p] + 1

    def _new(self):
        for lst in (self.left, self.right, self.var, self.parent, self.lo, self.hi):
            lst.append(-1)
        return len(self.var) - 1

    def _build(self, shape):
        if isinstance(shape, int):
            i = self._new()
            self.var[i] = shape
            self.lo[i] = self.hi[i] = i
            return i
        a, b = shape
        lo = len(self.var)
        left = self._build(a)
        me = self._new()
        right = self._build(b)
        self.left[me], self.right[me] = left, right
        self.parent[left] = self.parent[right] = me
        self.lo[me], self.hi[me] = lo, len(self.var) - 1
        return me

    def __len__(self) -> int:
        return len(self.var)

    def is_leaf(self, node: int) -> bool:
        return self.var[node] >= 0

    def postorder(self) -> list[int]:
        out, stack = [], [(self.root, False)]
        while stack:
            node, done = stack.pop()
            if done or self.is_leaf(node):
                out.append(node)
            else:
                stack.append((node, True))
                stack.append((self.right[node], False))
                stack.append((self.left[node], False))
        return out

    def contains(self, ancestor: int, node: int) -> bool:
        return self.lo[ancestor] <= node <= self.hi[ancestor]

    def in_left(self, ancestor: int, node: int) -> bool:
        l = self.left[ancestor]
        return self.lo[l] <= node <= self.hi[l]

    def lca(self, a: int, b: int) -> int:
        while not self.contains(a, b):
            a = self.parent[a]
        return a

    def node_vars(self, node: int) -> list[int]:
        return [self.var[i] for i in range(self.lo[node], self.hi[node] + 1) if self.var[i] >= 0]

    def height(self) -> int:
        return max(self.depth_of)

    def shape(self, node: int | None = None):
        node = self.root if node is None else node
        if self.is_leaf(node):
            return self.var[node]
        return (self.shape(self.left[node]), self.shape(self.right[node]))

    def dumps(self) -> str:
        """Nested parentheses of variable ids, e.g. ``(0 (1 2))``."""

        def fmt(s):
            return str(s) if isinstance(s, int) else f"({fmt(s[0])} {fmt(s[1])})"

        return fmt(self.shape())

    def __eq__(self, other) -> bool:
        return isinstance(other, Vtree) and self.shape() == other.shape()

    def __hash__(self) -> int:
        return hash(self.shape())

    def __repr__(self) -> str:
        return f"Vtree({self.dumps()})"


def build_vtree(variables: Sequence[int], strategy: str = RIGHT_LINEAR) -> Vtree:
    """Right-linear (OBDD order) or balanced (minimal depth) vtree over ``variables``."""
    variables = [int(v) for v in variables]
    if not variables:
        raise EmptyVariableSet("a vtree needs at least one variable")
    try:
        strategy = _ALIASES[strategy.lower()]
    except KeyError:
        raise ValueError(f"unknown vtree strategy {strategy!r}") from None
    if strategy == RIGHT_LINEAR:
        shape = variables[-1]
        for v in reversed(variables[:-1]):
            shape = (v, shape)
        return Vtree(shape)

    def balanced(vs):
        if len(vs) == 1:
            return vs[0]
        mid = (len(vs) + 1) // 2
        return (balanced(vs[:mid]), balanced(vs[mid:]))

    return Vtree(balanced(variables))


def parse_vtree(text: str) -> Vtree:
    """Inverse of :meth:`Vtree.dumps`."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of vtree text")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            a = parse()
            b = parse()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise ParseError("vtree internal nodes need exactly two children")
            pos += 1
            return (a, b)
        if tok == ")":
            raise ParseError("unexpected ')'")
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"bad vtree token {tok!r}") from None

    shape = parse()
    if pos != len(tokens):
        raise ParseError("trailing tokens after vtree")
    return Vtree(shape)
