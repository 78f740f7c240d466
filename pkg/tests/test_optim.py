import numpy as np
import pytest

from tempshift import model as mdl
from tempshift import optim
from tempshift.dataset import from_arrays, fit_standardizer, apply
from tempshift.embedding import TemporalEncoder
from tempshift.splitting import preset_split


def test_adamw_first_step_closed_form():
    p = {"w": np.array([1.0])}
    state = optim.AdamWState.zeros_like(p)
    optim.adamw_step(p, {"w": np.array([2.0])}, state, lr=0.1, wd=0.0)
    # m_hat = g, v_hat = g^2 -> step lr * g / (|g| + eps)
    assert p["w"][0] == pytest.approx(1 - 0.1 * 2 / (2 + 1e-8), abs=1e-12)
    assert state.step == 1


def test_adamw_pure_decay():
    p = {"w": np.array([1.0, -2.0])}
    state = optim.AdamWState.zeros_like(p)
    optim.adamw_step(p, {"w": np.zeros(2)}, state, lr=0.01, wd=0.1)
    np.testing.assert_allclose(p["w"], [0.999, -1.998], rtol=1e-12)


def test_adamw_matches_reference_loop():
    rng = np.random.default_rng(0)
    theta = rng.standard_normal(3)
    p = {"w": theta.copy()}
    state = optim.AdamWState.zeros_like(p)
    m = v = np.zeros(3)
    lr, wd = 0.05, 0.01
    for t in range(1, 6):
        g = rng.standard_normal(3)
        optim.adamw_step(p, {"w": g}, state, lr, wd)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g**2
        mh, vh = m / (1 - 0.9**t), v / (1 - 0.999**t)
        theta = theta - lr * (mh / (np.sqrt(vh) + 1e-8) + wd * theta)
    np.testing.assert_allclose(p["w"], theta, rtol=1e-12)


def test_adamw_shape_mismatch():
    p = {"w": np.zeros(2)}
    with pytest.raises(ValueError):
        optim.adamw_step(p, {"w": np.zeros(3)}, optim.AdamWState.zeros_like(p), 0.1, 0.0)


def test_early_stopper_plateau():
    stop = optim.EarlyStopper("classification", patience=16)
    values = [0.5, 0.6, 0.7, 0.8] + [0.8] * 100
    for epoch, v in enumerate(values):
        stop.update(epoch, v)
        if stop.should_stop:
            break
    assert stop.best_epoch == 3
    assert epoch == 19


def test_early_stopper_regression_direction():
    stop = optim.EarlyStopper("regression", patience=2)
    assert stop.update(0, 1.0)
    assert stop.update(1, 0.5)
    assert not stop.update(2, 0.7)
    assert stop.best == 0.5


def test_train_config_validation():
    with pytest.raises(ValueError):
        optim.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        optim.TrainConfig(max_epochs=0)


def _toy(n=600, task="regression", seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3))
    t = np.arange(n) * 3600 + 1_600_000_000
    y = X @ np.array([1.0, -0.5, 0.25]) + 0.05 * rng.standard_normal(n)
    if task == "classification":
        y = (y > 0).astype(float)
    ds = from_arrays(X, t, y, task=task)
    plan = preset_split("original", ds)
    st = fit_standardizer(ds, plan.train_idx)
    return apply(ds, st), plan, st


def test_training_reduces_loss_and_is_deterministic():
    ds, plan, st = _toy()
    cfg = optim.TrainConfig(learning_rate=1e-2, batch_size=64, max_epochs=30, seed=3)
    s0 = mdl.init("mlp", [3, 16, 1], seed=0, dropout=0.1)
    enc = TemporalEncoder.identity()
    r1 = optim.train(s0, enc, ds, plan, cfg, st)
    r2 = optim.train(s0, enc, ds, plan, cfg, st)
    assert r1.train_loss[-1] < r1.train_loss[0]
    assert r1.train_loss == r2.train_loss and r1.val_metric == r2.val_metric
    assert r1.best_val == min(r1.val_metric)
    assert r1.best_val == pytest.approx(optim.evaluate(r1.model, r1.encoder, ds, plan.val_idx, st))


def test_max_epochs_one():
    ds, plan, st = _toy()
    r = optim.train(mdl.init("linear", [3, 1]), TemporalEncoder.identity(), ds, plan, optim.TrainConfig(max_epochs=1), st)
    assert r.epochs_run == 1 and r.best_epoch == 0 and r.stop_reason == "max_epochs"


def test_zero_learning_rate_stops_on_patience():
    ds, plan, st = _toy()
    cfg = optim.TrainConfig(learning_rate=0.0, weight_decay=0.0, patience=3, max_epochs=50)
    r = optim.train(mdl.init("linear", [3, 1]), TemporalEncoder.identity(), ds, plan, cfg, st)
    assert r.best_epoch == 0 and r.epochs_run == 4 and r.stop_reason == "patience"


def test_train_does_not_mutate_inputs():
    ds, plan, st = _toy()
    s0 = mdl.init("mlp", [3, 4, 1], seed=1)
    before = [W.copy() for W in s0.weights]
    optim.train(s0, TemporalEncoder.identity(), ds, plan, optim.TrainConfig(max_epochs=2), st)
    for a, b in zip(before, s0.weights):
        np.testing.assert_array_equal(a, b)


def test_predict_classification_probabilities():
    ds, plan, st = _toy(task="classification")
    s = mdl.PredictorState("linear", (3, 1), [np.zeros((1, 3))], [np.array([0.0])])
    p = optim.predict(s, TemporalEncoder.identity(), ds, plan.test_idx, st)
    np.testing.assert_allclose(p, 0.5)


def test_predict_regression_in_label_units():
    ds, plan, st = _toy()
    s = mdl.PredictorState("linear", (3, 1), [np.zeros((1, 3))], [np.array([0.0])])
    p = optim.predict(s, TemporalEncoder.identity(), ds, plan.test_idx, st)
    np.testing.assert_allclose(p, st.label_mean)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_raises():
    ds, plan, st = _toy()
    s = mdl.PredictorState("linear", (3, 1), [np.full((1, 3), np.inf)], [np.array([0.0])])
    with pytest.raises(optim.TrainingError):
        optim.train(s, TemporalEncoder.identity(), ds, plan, optim.TrainConfig(max_epochs=1), st)
