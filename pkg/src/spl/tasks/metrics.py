"""Exact match, Hamming score and constraint consistency."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..circuit import MARGINALIZED, log_evaluate
from ..errors import LengthMismatch


@dataclass(frozen=True)
class Metrics:
    exact: float
    hamming: float
    consistent: float

    def as_dict(self) -> dict:
        return asdict(self)

    def as_percent(self) -> dict:
        return {k: 100.0 * v for k, v in asdict(self).items()}


def evaluate_metrics(
    predictions,
    ground_truth,
    constraint=None,
    label_vars: Sequence[int] | None = None,
    context: np.ndarray | None = None,
) -> Metrics:
    """Compare predicted and true label rows.

    ``constraint`` (a circuit or constraint circuit) decides consistency; the
    label columns map to ``label_vars`` (default ``0..L-1``), and ``context``
    supplies full assignment rows for any input variables the constraint
    reads.  Without a constraint, consistency is reported as NaN.
    """
    pred = np.atleast_2d(np.asarray(predictions, dtype=np.int64))
    true = np.atleast_2d(np.asarray(ground_truth, dtype=np.int64))
    if pred.shape != true.shape:
        raise LengthMismatch(f"predictions {pred.shape} vs ground truth {true.shape}")
    if pred.shape[0] == 0:
        raise LengthMismatch("no predictions to score")
    eq = pred == true
    exact = float(eq.all(axis=1).mean())
    hamming = float(eq.mean())
    if constraint is None:
        return Metrics(exact, hamming, float("nan"))
    circuit = getattr(constraint, "circuit", constraint)
    label_vars = list(range(pred.shape[1])) if label_vars is None else list(label_vars)
    if context is None:
        a = np.full((pred.shape[0], circuit.num_vars), MARGINALIZED, dtype=np.int64)
    else:
        a = np.array(np.atleast_2d(context), dtype=np.int64, copy=True)
    a[:, label_vars] = pred
    vals = log_evaluate(circuit, np.ones(circuit.num_params), a, allow_marginal=True)
    consistent = float((np.atleast_1d(vals) > -np.inf).mean())
    return Metrics(exact, hamming, consistent)
