"""Permutation-matrix constraints and the preference-ranking task."""

from __future__ import annotations

import re
from itertools import combinations

import numpy as np

from ..compiler import CnfFormula, ConstraintCircuit, compile_cnf
from ..errors import ParseError
from .data import Dataset, Task

SUSHI_ITEMS = 10
SUSHI_SEEN = 6


def exactly_one(variables) -> list[tuple]:
    clauses = [tuple((v, True) for v in variables)]
    clauses += [((a, False), (b, False)) for a, b in combinations(variables, 2)]
    return clauses


def build_permutation_constraint(n: int) -> ConstraintCircuit:
    """Exactly one 1 per row and per column of an ``n x n`` matrix.

    Variable ``i * n + j`` means item ``i`` takes position ``j``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    clauses = []
    for i in range(n):
        clauses += exactly_one([i * n + j for j in range(n)])
    for j in range(n):
        clauses += exactly_one([i * n + j for i in range(n)])
    return compile_cnf(CnfFormula(n * n, clauses))


def ranking_to_matrix(ranking) -> np.ndarray:
    """``ranking[j]`` is the item placed at position ``j``; returns flat ``Y_ij``."""
    n = len(ranking)
    m = np.zeros((n, n), dtype=np.int8)
    m[np.asarray(ranking), np.arange(n)] = 1
    return m.reshape(-1)


def matrix_to_ranking(y) -> list[int] | None:
    """Inverse of :func:`ranking_to_matrix`; ``None`` if ``y`` is not a permutation."""
    n = int(round(np.sqrt(len(y))))
    m = np.asarray(y).reshape(n, n)
    if not ((m.sum(0) == 1).all() and (m.sum(1) == 1).all()):
        return None
    return [int(i) for i in np.argmax(m, axis=0)]


def plackett_luce(scores: np.ndarray, rng: np.random.Generator) -> list[int]:
    """Sample a ranking, best first, with choice probabilities proportional to ``scores``."""
    # equivalently, sort by score-scaled Gumbel noise
    keys = np.log(scores) + rng.gumbel(size=len(scores))
    return [int(i) for i in np.argsort(-keys, kind="stable")]


def split_ranking(full, seen: int = SUSHI_SEEN):
    """Features: relative order of items ``0..seen-1``; labels: of the others."""
    a = [i for i in full if i < seen]
    b = [i - seen for i in full if i >= seen]
    return ranking_to_matrix(a), ranking_to_matrix(b)


def generate_preference_dataset(
    count: int = 5000, seed: int = 0, num_clusters: int = 4, spread: float = 0.5
) -> Dataset:
    """Synthetic sushi-like rankings from a mixture of Plackett-Luce users.

    Each user belongs to a taste cluster with its own log-utilities, perturbed
    per user, so the order of the seen items is informative about the rest.
    """
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, 1.5, size=(num_clusters, SUSHI_ITEMS))
    xs, ys = [], []
    for _ in range(count):
        u = centres[rng.integers(num_clusters)] + rng.normal(0.0, spread, SUSHI_ITEMS)
        x, y = split_ranking(plackett_luce(np.exp(u), rng))
        xs.append(x)
        ys.append(y)
    return Dataset(np.array(xs), np.array(ys))


def parse_soc(text: str) -> list[list[int]]:
    """Rankings (0-based item ids, best first) from a PrefLib ``.soc`` file.

    Both the commented-header layout (``count: a,b,c``) and the older
    numeric-header layout are accepted; counts expand into repeated rows.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    body = [ln for ln in lines if not ln.startswith("#")]
    out: list[list[int]] = []
    if any(":" in ln for ln in body):
        for ln in body:
            m = re.fullmatch(r"(\d+)\s*:\s*([\d,\s]+)", ln)
            if not m:
                raise ParseError(f"bad .soc line {ln!r}")
            ranking = [int(t) - 1 for t in m.group(2).split(",")]
            out += [ranking] * int(m.group(1))
        return out
    try:
        n = int(body[0])
        for ln in body[n + 2 :]:
            fields = [int(t) for t in ln.split(",")]
            out += [[v - 1 for v in fields[1:]]] * fields[0]
    except (ValueError, IndexError):
        raise ParseError("malformed .soc file") from None
    return out


def preference_dataset_from_soc(text: str, seed: int = 0) -> Dataset:
    """Sushi-style dataset from complete rankings over 10 items, shuffled per seed."""
    rankings = [r for r in parse_soc(text) if sorted(r) == list(range(SUSHI_ITEMS))]
    if not rankings:
        raise ParseError("no complete rankings over 10 items")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(rankings))
    pairs = [split_ranking(rankings[i]) for i in order]
    return Dataset(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))


def preference_task(n: int = 4, dataset: Dataset | None = None) -> Task:
    c = build_permutation_constraint(n)
    return Task("preference", c, tuple(range(n * n)), dataset=dataset, info={"n": n})
