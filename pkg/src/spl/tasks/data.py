"""Datasets, task bundles and the ``spl-data v1`` text format."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..circuit import MARGINALIZED, log_evaluate
from ..compiler import ConstraintCircuit
from ..errors import DimensionMismatch, MalformedHeader, ParseError

HEADER = "spl-data"
VERSION = "v1"
SPLIT = (0.6, 0.2, 0.2)


@dataclass
class Dataset:
    """Paired feature rows ``x`` and 0/1 label rows ``y``.

    The split is positional: the first 60% of rows train, the next 20%
    validate, the rest test, so a file round-trip keeps it.
    """

    x: np.ndarray
    y: np.ndarray
    fractions: tuple[float, float, float] = SPLIT

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.int8))
        if self.x.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(f"{self.x.shape[0]} feature rows but {self.y.shape[0]} label rows")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def num_x(self) -> int:
        return self.x.shape[1]

    @property
    def num_y(self) -> int:
        return self.y.shape[1]

    def bounds(self) -> tuple[int, int]:
        n = len(self)
        a = int(round(self.fractions[0] * n))
        b = int(round((self.fractions[0] + self.fractions[1]) * n))
        return a, b

    def split(self, name: str) -> "Dataset":
        a, b = self.bounds()
        sl = {"train": slice(0, a), "val": slice(a, b), "test": slice(b, len(self))}[name]
        return Dataset(self.x[sl], self.y[sl], self.fractions)

    @property
    def train(self) -> "Dataset":
        return self.split("train")

    @property
    def val(self) -> "Dataset":
        return self.split("val")

    @property
    def test(self) -> "Dataset":
        return self.split("test")


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def dumps_dataset(ds: Dataset) -> str:
    lines = [f"{HEADER} {VERSION} {ds.num_x} {ds.num_y} {len(ds)}"]
    for xr, yr in zip(ds.x, ds.y):
        lines.append(" ".join(map(_fmt, xr)) + " | " + " ".join(str(int(v)) for v in yr))
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> Dataset:
    """Parse ``spl-data v1``; x entries may be any real (binary in the benchmarks)."""
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise MalformedHeader("empty dataset file")
    head = rows[0].split()
    if len(head) != 5 or head[0] != HEADER or head[1] != VERSION:
        raise MalformedHeader(f"bad dataset header {rows[0]!r}")
    try:
        nx, ny, count = (int(t) for t in head[2:])
    except ValueError:
        raise MalformedHeader(f"bad dataset header {rows[0]!r}") from None
    if len(rows) - 1 != count:
        raise MalformedHeader(f"header announces {count} examples, found {len(rows) - 1}")
    x = np.zeros((count, nx))
    y = np.zeros((count, ny), dtype=np.int8)
    for i, ln in enumerate(rows[1:]):
        left, sep, right = ln.partition("|")
        xs, ys = left.split(), right.split()
        if not sep or len(xs) != nx or len(ys) != ny:
            raise ParseError(f"line {i + 2}: expected {nx} features | {ny} labels")
        try:
            x[i] = [float(t) for t in xs]
            yi = [int(t) for t in ys]
        except ValueError:
            raise ParseError(f"line {i + 2}: non-numeric entry") from None
        if any(v not in (0, 1) for v in yi):
            raise ParseError(f"line {i + 2}: labels must be 0/1")
        y[i] = yi
    return Dataset(x, y)


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_dataset(ds))


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return loads_dataset(fh.read())


@dataclass
class Task:
    """A constraint over circuit variables plus the wiring to a dataset.

    ``label_vars[j]`` is the circuit variable of label column ``j``;
    ``cond_vars[i]`` is a constraint variable fixed from feature column
    ``cond_cols[i]`` (the grid task conditions on its input block).
    """

    name: str
    constraint: ConstraintCircuit
    label_vars: tuple[int, ...]
    cond_vars: tuple[int, ...] = ()
    cond_cols: tuple[int, ...] = ()
    dataset: Dataset | None = None
    info: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return self.constraint.circuit.num_vars

    def assignment(self, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        """Circuit assignments with inputs fixed and labels set or marginalized."""
        x = np.atleast_2d(x)
        a = np.full((x.shape[0], self.num_vars), MARGINALIZED, dtype=np.int64)
        if self.cond_vars:
            a[:, list(self.cond_vars)] = x[:, list(self.cond_cols)].astype(np.int64)
        if y is not None:
            a[:, list(self.label_vars)] = np.atleast_2d(y)
        return a

    def satisfies(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Boolean mask: does each ``(x, y)`` satisfy the constraint?"""
        c = self.constraint.circuit
        vals = log_evaluate(c, self.constraint.params(), self.assignment(x, y), allow_marginal=True)
        return np.atleast_1d(vals) > -np.inf


def check_labels(ds: Dataset, label_vars: Sequence[int]) -> None:
    if ds.num_y != len(label_vars):
        raise DimensionMismatch(f"dataset has {ds.num_y} labels, task expects {len(label_vars)}")
