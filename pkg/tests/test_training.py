import numpy as np
import pytest
from conftest import gate_weights_from_fil, small_hmlc, tautology_task

from spl import autodiff as ad
from spl.errors import InconsistentTrainingLabel
from spl.gating import wrap
from spl.tasks import Dataset, make_task
from spl.training import (
    Model,
    TrainConfig,
    config_from_manifest,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
    train,
    write_log,
)

KINDS = ("spl-two-circuit", "spl-single", "fil", "fil+sl")


def _random_weights(model, rng, scale=0.5):
    w = model.init(rng)
    return {k: rng.normal(0.0, scale, size=v.shape) for k, v in w.items()}


@pytest.mark.parametrize("kind", KINDS)
def test_end_to_end_gradient(kind):
    task = small_hmlc()
    cfg = TrainConfig(hidden=(6,), gating_depth=1, gating_width=5, mixtures=2, overparam_k=2, mixtures_m=2)
    model = Model(kind, task, task.dataset.num_x, cfg)
    rng = np.random.default_rng(1)
    w = _random_weights(model, rng)
    x, y = task.dataset.x[:8], task.dataset.y[:8]
    _, grads = loss_and_grad(model, w, x, y)
    h = 1e-6
    for name, arr in w.items():
        for idx in list(np.ndindex(arr.shape))[:6]:
            plus = {**w, name: arr.copy()}
            minus = {**w, name: arr.copy()}
            plus[name][idx] += h
            minus[name][idx] -= h
            fd = (model.loss(wrap(plus, False), x, y).value - model.loss(wrap(minus, False), x, y).value) / (2 * h)
            assert grads[name][idx] == pytest.approx(fd, rel=1e-4, abs=1e-8), (name, idx)


def test_spl_matches_fil_under_a_tautology():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.normal(size=(12, 4)), rng.integers(0, 2, size=(12, 5)))
    task = tautology_task(ds)
    cfg = TrainConfig(hidden=(3,))
    fil = Model("fil", task, 4, cfg)
    spl = Model("spl", task, 4, cfg)
    wf = _random_weights(fil, rng, scale=1.0)
    ws = gate_weights_from_fil(spl, wf)
    for i in range(len(ds)):
        a = fil.loss(wrap(wf, False), ds.x[i], ds.y[i]).value
        b = spl.loss(wrap(ws, False), ds.x[i], ds.y[i]).value
        assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_fil_recovers_label_marginals():
    rng = np.random.default_rng(3)
    marg = np.array([0.2, 0.5, 0.9])
    y = (rng.random((2000, 3)) < marg).astype(np.int8)
    ds = Dataset(np.ones((2000, 1)), y, fractions=(1.0, 0.0, 0.0))
    task = tautology_task(ds)
    res = train("fil", task, config=TrainConfig(hidden=(), lr=0.05, epochs=30, batch_size=200))
    p = wrap(res.weights, False)
    probs = ad.sigmoid_array(res.model.head.logits(p, ad.constant(np.ones((1, 1)))).value)[0]
    assert probs == pytest.approx(y.mean(axis=0), abs=0.05)


def test_spl_memorizes_a_tiny_dataset():
    task = small_hmlc(count=10, features=8, seed=4)
    ds = Dataset(task.dataset.x, task.dataset.y, fractions=(1.0, 0.0, 0.0))
    res = train("spl", task, ds, TrainConfig(hidden=(32,), lr=0.02, epochs=150, batch_size=10))
    m = res.model.evaluate(res.weights, ds)
    assert m.exact == 1.0 and m.consistent == 1.0


def test_loss_decreases_with_small_steps():
    task = small_hmlc()
    res = train("spl", task, config=TrainConfig(hidden=(8,), lr=1e-3, epochs=5, batch_size=len(task.dataset)))
    losses = [r["train_loss"] for r in res.history]
    assert all(b < a for a, b in zip(losses, losses[1:]))


@pytest.mark.parametrize("kind", ["spl-two-circuit", "spl-single"])
def test_spl_predictions_are_always_consistent(kind):
    task = small_hmlc(count=40)
    model = Model(kind, task, task.dataset.num_x, TrainConfig(hidden=(4,)))
    rng = np.random.default_rng(5)
    for _ in range(3):
        w = _random_weights(model, rng, scale=3.0)
        assert model.evaluate(w, task.dataset).consistent == 1.0


def test_training_is_deterministic(tmp_path):
    task = make_task("preference", seed=0, count=60)
    cfg = TrainConfig(hidden=(8,), epochs=3, seed=7)
    a, b = train("spl", task, config=cfg), train("spl", task, config=cfg)
    write_log(a.history, tmp_path / "a.csv")
    write_log(b.history, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_inconsistent_training_labels():
    task = small_hmlc(count=20)
    y = task.dataset.y.copy()
    y[0] = 0
    y[0, -1] = 1  # leaf without its parent
    bad = Dataset(task.dataset.x, y)
    with pytest.raises(InconsistentTrainingLabel):
        train("spl", task, bad, TrainConfig(hidden=(4,), epochs=1))
    res = train("spl", task, bad, TrainConfig(hidden=(4,), epochs=2, clamp_eps=1e-3))
    assert np.isfinite(res.history[-1]["train_loss"])
    # FIL does not care about the constraint
    train("fil", task, bad, TrainConfig(hidden=(4,), epochs=1))


def test_checkpoint_round_trip(tmp_path):
    task = small_hmlc(count=30)
    res = train("spl-single", task, config=TrainConfig(hidden=(4,), epochs=2, overparam_k=2))
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, res.model, res.weights)
    manifest, weights = load_checkpoint(path)
    assert manifest["kind"] == "spl-single"
    assert set(weights) == set(res.weights)
    for k in weights:
        assert np.array_equal(weights[k], res.weights[k])
    model = Model(manifest["kind"], task, manifest["num_x"], config_from_manifest(manifest))
    a, _ = model.predict(weights, task.dataset.x)
    b, _ = res.model.predict(res.weights, task.dataset.x)
    assert np.array_equal(a, b)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        Model("crf", small_hmlc(count=10), 5, TrainConfig())
