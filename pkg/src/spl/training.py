"""Models, maximum-likelihood training, prediction and checkpoints.

Four model kinds share a feature extractor ``f``:

* ``spl-two-circuit``: a gated mixture of fully factorized Bernoulli models
  ``q`` multiplied with the constraint circuit ``c``;
* ``spl-single``: the compiled constraint circuit itself, with gated sum
  weights (optionally overparameterized);
* ``fil``: independent sigmoids trained with binary cross-entropy;
* ``fil+sl``: the same plus a weighted semantic-loss term.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .circuit import Circuit, dumps
from .errors import DivergedLoss, InconsistentLabel, InconsistentTrainingLabel, InvariantViolation, ParseError
from .gating import FeatureExtractor, FilHead, GatingNetwork, wrap
from .inference import ProductCircuit, SemanticLoss, map_batch, nll_and_grad, product
from .overparam import OverparamConfig, overparameterize
from .pc import factorized_mixture
from .tasks.data import Dataset, Task, check_labels
from .tasks.metrics import Metrics, evaluate_metrics

log = logging.getLogger(__name__)

SPL_TWO = "spl-two-circuit"
SPL_SINGLE = "spl-single"
FIL = "fil"
FIL_SL = "fil+sl"
MODEL_KINDS = (SPL_TWO, SPL_SINGLE, FIL, FIL_SL)
_ALIASES = {"spl": SPL_TWO, "spl-two": SPL_TWO, "two-circuit": SPL_TWO, "single": SPL_SINGLE, "fil-sl": FIL_SL}
FIL_THRESHOLD = 0.5
LOG_COLUMNS = ("epoch", "train_loss", "val_exact", "val_hamming", "val_consistent")


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    return kind


@dataclass
class TrainConfig:
    lr: float = 5e-3
    batch_size: int = 64
    epochs: int = 40
    patience: int = 10
    seed: int = 0
    optimizer: str = "adam"
    hidden: tuple[int, ...] = (128,)
    gating_depth: int = 0
    gating_width: int = 64
    mixtures: int = 1
    sl_weight: float = 1.0
    clamp_eps: float = 0.0
    overparam_k: int = 1
    mixtures_m: int = 1

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("lr", "batch_size", "epochs", "patience", "mixtures", "overparam_k", "mixtures_m", "gating_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gating_depth < 0 or self.sl_weight < 0 or not (0 <= self.clamp_eps < 1):
            raise ValueError("gating_depth, sl_weight must be >= 0 and clamp_eps in [0, 1)")
        if any(h <= 0 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class Model:
    """A predictor for one task; weights live outside in a ``{name: array}`` dict."""

    def __init__(self, kind: str, task: Task, num_x: int, config: TrainConfig):
        self.kind = canonical_kind(kind)
        self.task = task
        self.config = config
        self.feature = FeatureExtractor(num_x, config.hidden)
        self.label_vars = tuple(task.label_vars)
        self.r: ProductCircuit | Circuit | None = None
        self.sl: SemanticLoss | None = None
        zdim = self.feature.out_dim
        if self.kind == SPL_TWO:
            q = factorized_mixture(self.label_vars, config.mixtures, num_vars=task.num_vars)
            self.r = product(q, task.constraint)
            self.gating = GatingNetwork(zdim, q, config.gating_depth, config.gating_width)
        elif self.kind == SPL_SINGLE:
            op = OverparamConfig(config.overparam_k, config.mixtures_m)
            self.r = overparameterize(task.constraint, op)
            self.gating = GatingNetwork(zdim, self.r, config.gating_depth, config.gating_width)
        else:
            self.head = FilHead(zdim, len(self.label_vars))
            if self.kind == FIL_SL:
                self.sl = SemanticLoss(task.constraint, self.label_vars)

    @property
    def is_spl(self) -> bool:
        return self.kind in (SPL_TWO, SPL_SINGLE)

    @property
    def circuit(self) -> Circuit | None:
        if self.r is None:
            return None
        return self.r.circuit if isinstance(self.r, ProductCircuit) else self.r

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        w = self.feature.init(rng)
        w.update(self.gating.init(rng) if self.is_spl else self.head.init(rng))
        return w

    # -- forward ------------------------------------------------------------------

    def _theta(self, p, x) -> ad.Var:
        """Gated circuit parameters (of ``q`` in two-circuit mode)."""
        return self.gating.forward(p, self.feature.forward(p, ad.constant(x)))

    def circuit_params(self, weights, x) -> np.ndarray:
        theta = self._theta(wrap(weights, trainable=False), np.atleast_2d(x)).value
        return self.r.derive(theta) if isinstance(self.r, ProductCircuit) else theta

    def _spl_nll(self, theta: ad.Var, a: np.ndarray, ok: np.ndarray) -> ad.Var:
        eps = self.config.clamp_eps
        tq = theta.value
        tr = self.r.derive(tq) if isinstance(self.r, ProductCircuit) else tq
        nll = np.full(a.shape[0], -np.log(eps) if eps > 0 else np.inf)
        grad_r = np.zeros_like(tr)
        if ok.any():
            try:
                vals, g = nll_and_grad(self.circuit, tr[ok], a[ok], self.label_vars)
            except InconsistentLabel as exc:
                raise InconsistentTrainingLabel(str(exc)) from None
            nll[ok], grad_r[ok] = vals, g
            if eps > 0:
                # clamp p(y|x) at eps: constant loss, no gradient
                low = np.flatnonzero(ok)[vals > -np.log(eps)]
                nll[low] = -np.log(eps)
                grad_r[low] = 0.0
        grad = self.r.pullback(grad_r, tq) if isinstance(self.r, ProductCircuit) else grad_r
        grad = np.atleast_2d(grad)
        return ad.custom([theta], nll, lambda g: (g[:, None] * grad,))

    def loss(self, p, x, y) -> ad.Var:
        """Mean per-example loss on a batch, as an autodiff node."""
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        if self.is_spl:
            a = self.task.assignment(x, y)
            if self.config.clamp_eps > 0:
                ok = self.task.satisfies(x, y)
            else:
                ok = np.ones(len(x), dtype=bool)
            return ad.mean(self._spl_nll(self._theta(p, x), a, ok))
        logits = self.head.logits(p, self.feature.forward(p, ad.constant(x)))
        per = ad.bce_with_logits(logits, y)
        if self.kind == FIL_SL and self.config.sl_weight > 0:
            probs = ad.sigmoid(logits)
            ctx = self.task.assignment(x)
            val, g = self.sl(np.clip(probs.value, 0.0, 1.0), x=ctx, return_grad=True)
            g = np.atleast_2d(g)
            sl = ad.custom([probs], np.atleast_1d(val), lambda gg: (gg[:, None] * g,))
            per = ad.add(per, ad.mul(sl, self.config.sl_weight))
        return ad.mean(per)

    # -- prediction ----------------------------------------------------------------

    def predict(self, weights, x, chunk: int = 256):
        """Labels ``(N, L)`` and the model probability of each predicted row."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        labels = np.zeros((x.shape[0], len(self.label_vars)), dtype=np.int8)
        probs = np.zeros(x.shape[0])
        approximate = False
        for s in range(0, x.shape[0], chunk):
            xb = x[s : s + chunk]
            if self.is_spl:
                theta = self.circuit_params(weights, xb)
                res = map_batch(self.r, theta, self.task.assignment(xb), self.label_vars)
                labels[s : s + len(res)] = [r.labels for r in res]
                probs[s : s + len(res)] = [r.probability for r in res]
                approximate = approximate or any(r.approximate for r in res)
            else:
                pv = wrap(weights, trainable=False)
                pr = ad.sigmoid_array(self.head.logits(pv, self.feature.forward(pv, ad.constant(xb))).value)
                yb = (pr > FIL_THRESHOLD).astype(np.int8)
                labels[s : s + len(xb)] = yb
                probs[s : s + len(xb)] = np.prod(np.where(yb == 1, pr, 1.0 - pr), axis=1)
        self.last_approximate = approximate
        return labels, probs

    def evaluate(self, weights, ds: Dataset) -> Metrics:
        pred, _ = self.predict(weights, ds.x)
        m = evaluate_metrics(pred, ds.y, self.task.constraint, self.label_vars, self.task.assignment(ds.x))
        if self.is_spl and m.consistent < 1.0:
            raise InvariantViolation("an SPL prediction violates the constraint")
        return m


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, weights, grads) -> None:
        self.t += 1
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            weights[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, weights, grads) -> None:
        for k, g in grads.items():
            weights[k] -= self.lr * g


def loss_and_grad(model: Model, weights, x, y):
    p = wrap(weights)
    loss = model.loss(p, x, y)
    ad.backward(loss)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in p.items()}
    return float(loss.value), grads


@dataclass
class TrainResult:
    model: Model
    weights: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def train(kind: str, task: Task, dataset: Dataset | None = None, config: TrainConfig | None = None) -> TrainResult:
    """Fit a model on the training split with early stopping on validation exact match.

    The weights of the best validation epoch are returned.
    """
    config = TrainConfig() if config is None else config
    ds = task.dataset if dataset is None else dataset
    if ds is None:
        raise ValueError("no dataset given")
    check_labels(ds, task.label_vars)
    model = Model(kind, task, ds.num_x, config)
    tr, va = ds.train, ds.val
    if model.is_spl and config.clamp_eps <= 0:
        bad = ~task.satisfies(tr.x, tr.y)
        if bad.any():
            raise InconsistentTrainingLabel(
                f"{int(bad.sum())} training labels violate the constraint (first: row {int(np.flatnonzero(bad)[0])})"
            )
    rng = np.random.default_rng(config.seed)
    weights = model.init(rng)
    opt = Adam(config.lr) if config.optimizer == "adam" else SGD(config.lr)
    best = (-1.0, copy.deepcopy(weights), 0)
    history: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(tr))
        total, seen = 0.0, 0
        for s in range(0, len(tr), config.batch_size):
            idx = order[s : s + config.batch_size]
            value, grads = loss_and_grad(model, weights, tr.x[idx], tr.y[idx])
            if not np.isfinite(value) or not all(np.isfinite(g).all() for g in grads.values()):
                raise DivergedLoss(f"non-finite loss or gradient at epoch {epoch}")
            opt.step(weights, grads)
            total += value * len(idx)
            seen += len(idx)
        row = {"epoch": epoch, "train_loss": total / max(seen, 1)}
        if len(va):
            m = model.evaluate(weights, va)
            row.update(val_exact=m.exact, val_hamming=m.hamming, val_consistent=m.consistent)
        else:
            row.update(val_exact=float("nan"), val_hamming=float("nan"), val_consistent=float("nan"))
        history.append(row)
        log.info("epoch %d loss %.5f val exact %.4f consistent %.4f", epoch, row["train_loss"], row["val_exact"], row["val_consistent"])
        score = row["val_exact"] if len(va) else -row["train_loss"]
        if score > best[0] or epoch == 1:
            best = (score, copy.deepcopy(weights), epoch)
        elif epoch - best[2] >= config.patience:
            break
    return TrainResult(model, best[1], history, best[2])


def predict(result: TrainResult, x):
    return result.model.predict(result.weights, x)


def write_log(history: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in history:
            w.writerow([row["epoch"]] + [f"{row[c]:.10g}" for c in LOG_COLUMNS[1:]])


# -- checkpoints ---------------------------------------------------------------------

MAGIC = b"SPLCKPT1"


def circuit_hash(circuit: Circuit | None) -> str | None:
    if circuit is None:
        return None
    return hashlib.sha256(dumps(circuit).encode()).hexdigest()


def save_checkpoint(path, model: Model, weights: dict[str, np.ndarray], extra: dict | None = None) -> dict:
    """Magic, manifest length (uint32 LE), JSON manifest, then float64 LE arrays."""
    arrays, offset = [], 0
    for name in sorted(weights):
        a = np.ascontiguousarray(weights[name], dtype="<f8")
        arrays.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": a.nbytes})
        offset += a.nbytes
    manifest = {
        "format": "spl-checkpoint v1",
        "kind": model.kind,
        "task": model.task.name,
        "task_info": model.task.info,
        "num_x": model.feature.in_dim,
        "config": model.config.as_dict(),
        "circuit_sha256": circuit_hash(model.circuit),
        "arrays": arrays,
        **(extra or {}),
    }
    head = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for name in sorted(weights):
            fh.write(np.ascontiguousarray(weights[name], dtype="<f8").tobytes())
    return manifest


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ParseError("not an spl checkpoint")
    (n,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    manifest = json.loads(blob[start : start + n].decode())
    data = blob[start + n :]
    weights = {}
    for a in manifest["arrays"]:
        buf = data[a["offset"] : a["offset"] + a["nbytes"]]
        if len(buf) != a["nbytes"]:
            raise ParseError(f"checkpoint truncated in array {a['name']}")
        weights[a["name"]] = np.frombuffer(buf, dtype="<f8").reshape(a["shape"]).copy()
    return manifest, weights


def config_from_manifest(manifest: dict) -> TrainConfig:
    return TrainConfig(**manifest["config"])


__all__ = [
    "MODEL_KINDS",
    "Model",
    "TrainConfig",
    "TrainResult",
    "train",
    "predict",
    "loss_and_grad",
    "write_log",
    "save_checkpoint",
    "load_checkpoint",
    "config_from_manifest",
]
