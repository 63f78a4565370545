"""Feature extractors, gating networks and the FIL head.

Every module keeps its weights in a flat ``{name: array}`` dict so training
and checkpointing treat all models alike.  ``forward`` takes the same dict
with each array wrapped in an autodiff :class:`Var`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .circuit import Circuit
from .errors import DimensionMismatch

LOGIT_CLIP = 30.0


class MLP:
    """Dense layers with ReLU between them (and after the last if ``final_relu``)."""

    def __init__(self, prefix: str, sizes: Sequence[int], final_relu: bool = False, last_scale: float | None = None):
        self.prefix = prefix
        self.sizes = [int(s) for s in sizes]
        self.final_relu = final_relu
        self.last_scale = last_scale

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def names(self) -> list[tuple[str, str]]:
        return [(f"{self.prefix}.W{i}", f"{self.prefix}.b{i}") for i in range(len(self.sizes) - 1)]

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        out = {}
        layers = self.names()
        for i, (w, b) in enumerate(layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            scale = np.sqrt(2.0 / fan_in)
            if i == len(layers) - 1 and self.last_scale is not None:
                scale = self.last_scale
            out[w] = rng.normal(0.0, scale, size=(fan_in, fan_out))
            out[b] = np.zeros(fan_out)
        return out

    def forward(self, p: dict[str, ad.Var], x: ad.Var) -> ad.Var:
        layers = self.names()
        h = x
        for i, (w, b) in enumerate(layers):
            h = ad.add(ad.matmul(h, p[w]), p[b])
            if i < len(layers) - 1 or self.final_relu:
                h = ad.relu(h)
        return h


class FeatureExtractor:
    """``z = f(x)``: the identity, or an MLP with ReLU hidden layers."""

    def __init__(self, in_dim: int, hidden: Sequence[int] = ()):
        self.in_dim = int(in_dim)
        self.hidden = [int(h) for h in hidden]
        self.mlp = MLP("feat", [self.in_dim, *self.hidden], final_relu=True) if self.hidden else None

    @property
    def out_dim(self) -> int:
        return self.hidden[-1] if self.hidden else self.in_dim

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return self.mlp.init(rng) if self.mlp else {}

    def forward(self, p, x: ad.Var) -> ad.Var:
        if x.shape[-1] != self.in_dim:
            raise DimensionMismatch(f"expected {self.in_dim} input features, got {x.shape[-1]}")
        return self.mlp.forward(p, x) if self.mlp else x


class GatingNetwork:
    """``g``: embedding to circuit parameters.

    An MLP (``depth`` hidden layers of width ``width``) produces one logit per
    parameter slot.  Bernoulli and weighted-indicator slots pass through a
    sigmoid, sum-weight slots through a softmax over their owning sum unit.
    Logits are clipped to ``[-30, 30]`` so no parameter is exactly 0 or 1.
    """

    def __init__(self, in_dim: int, circuit: Circuit, depth: int = 0, width: int = 64, init_scale: float = 0.01):
        self.in_dim = int(in_dim)
        self.out_dim = circuit.num_params
        self.depth = int(depth)
        self.width = int(width)
        self.mlp = MLP("gate", [self.in_dim] + [self.width] * self.depth + [self.out_dim], last_scale=init_scale)
        groups = circuit.sum_groups()
        cols = np.concatenate([np.arange(s, s + n) for s, n in groups]) if groups else np.zeros(0, np.int64)
        self.softmax = ad.SegmentSoftmax(cols, [n for _, n in groups])
        self.sig_cols = np.concatenate([circuit.bernoulli_slots(), circuit.indicator_slots()]).astype(np.int64)

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return self.mlp.init(rng)

    def head(self, logits: ad.Var) -> ad.Var:
        z = logits.value
        clipped = np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)
        inside = clipped == z
        out = np.ones_like(z)
        sig = ad.sigmoid_array(clipped[:, self.sig_cols])
        out[:, self.sig_cols] = sig
        soft = self.softmax.apply(clipped)
        out[:, self.softmax.columns] = soft

        def vjp(g):
            gz = np.zeros_like(g)
            gz[:, self.sig_cols] = g[:, self.sig_cols] * sig * (1.0 - sig)
            gz[:, self.softmax.columns] = self.softmax.vjp(soft, g[:, self.softmax.columns])
            return (gz * inside,)

        return ad.custom([logits], out, vjp)

    def forward(self, p, z: ad.Var) -> ad.Var:
        if z.shape[-1] != self.in_dim:
            raise DimensionMismatch(f"gating expects {self.in_dim} inputs, got {z.shape[-1]}")
        return self.head(self.mlp.forward(p, z))


class FilHead:
    """Fully independent layer: one logistic regression per label on ``z``."""

    def __init__(self, in_dim: int, num_labels: int):
        self.in_dim = int(in_dim)
        self.num_labels = int(num_labels)
        self.mlp = MLP("fil", [self.in_dim, self.num_labels], last_scale=0.01)

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return self.mlp.init(rng)

    def logits(self, p, z: ad.Var) -> ad.Var:
        return self.mlp.forward(p, z)


def wrap(weights: dict[str, np.ndarray], trainable: bool = True) -> dict[str, ad.Var]:
    return {k: (ad.parameter(v) if trainable else ad.constant(v)) for k, v in weights.items()}


def forward_params(gating: GatingNetwork, feature: FeatureExtractor, x, weights: dict[str, np.ndarray]) -> np.ndarray:
    """``Theta = g(f(x))`` as a plain array, one row per input row."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    p = wrap(weights, trainable=False)
    return gating.forward(p, feature.forward(p, ad.constant(x))).value
