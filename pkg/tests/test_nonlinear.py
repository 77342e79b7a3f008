import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from extraplab.nonlinear import (
    GatedCell,
    cell_bptt,
    cell_forward,
    cell_loss,
    init_cell,
    sigmoid,
    train_cell,
)
from extraplab.objective import MemorylessTeacher
from extraplab import datagen


def zero_cell(kind, d=3, n=2, m=1):
    cell = init_cell(kind, d, n, m)
    for key in cell.params:
        cell.params[key] = np.zeros_like(cell.params[key])
    return cell


def fd_cell_grads(cell, xs, ys, eps=1e-5):
    """Central-difference gradients over every parameter entry."""
    grads = {}
    for key, val in cell.params.items():
        g = np.zeros_like(val)
        flat = val.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = cell_loss(cell, xs, ys)
            flat[i] = orig - eps
            down = cell_loss(cell, xs, ys)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads[key] = g
    return grads


# ------------------------------------------------------------------ plumbing


def test_sigmoid_matches_reference_and_saturates():
    xs = np.linspace(-30.0, 30.0, 101)
    assert_allclose(sigmoid(xs), 1.0 / (1.0 + np.exp(-xs)), rtol=1e-15)
    assert sigmoid(np.array([-1e4]))[0] == 0.0
    assert sigmoid(np.array([1e4]))[0] == 1.0


def test_cell_param_key_validation():
    cell = init_cell("gru", 2, 1)
    bad = dict(cell.params)
    bad.pop("Wz")
    with pytest.raises(ValueError):
        GatedCell(kind="gru", d=2, n=1, params=bad)
    with pytest.raises(ValueError):
        init_cell("rnn", 2, 1)
    with pytest.raises(ValueError):
        init_cell("gru", 0, 1)


def test_init_cell_deterministic_and_zero_bias():
    a = init_cell("lstm", 3, 2, seed=7)
    b = init_cell("lstm", 3, 2, seed=7)
    for key in a.params:
        assert np.array_equal(a.params[key], b.params[key])
    for g in ("i", "f", "o", "g"):
        assert np.all(a.params[f"b{g}"] == 0.0)
    c = init_cell("lstm", 3, 2, seed=8)
    assert not np.array_equal(a.params["Wi"], c.params["Wi"])


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_zero_weights_predict_zero(kind):
    cell = zero_cell(kind)
    xs = np.random.default_rng(0).standard_normal((4, 6, 2))
    assert np.all(cell.predict(xs) == 0.0)


# ------------------------------------------------------- scalar-loop oracles


def gru_forward_scalar(p, seq):
    """Plain-python GRU rollout for d=1, n=1; returns the readout scalar."""
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    h = 0.0
    for x in seq:
        z = sig(p["Wz"][0, 0] * x + p["Uz"][0, 0] * h + p["bz"][0])
        r = sig(p["Wr"][0, 0] * x + p["Ur"][0, 0] * h + p["br"][0])
        hc = math.tanh(p["Wh"][0, 0] * x + p["Uh"][0, 0] * r * h + p["bh"][0])
        h = z * h + (1.0 - z) * hc
    return p["w_out"][0, 0] * h


def lstm_forward_scalar(p, seq):
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    h = c = 0.0
    for x in seq:
        i = sig(p["Wi"][0, 0] * x + p["Ui"][0, 0] * h + p["bi"][0])
        f = sig(p["Wf"][0, 0] * x + p["Uf"][0, 0] * h + p["bf"][0])
        o = sig(p["Wo"][0, 0] * x + p["Uo"][0, 0] * h + p["bo"][0])
        g = math.tanh(p["Wg"][0, 0] * x + p["Ug"][0, 0] * h + p["bg"][0])
        c = f * c + i * g
        h = o * math.tanh(c)
    return p["w_out"][0, 0] * h


@pytest.mark.parametrize(
    "kind,oracle", [("gru", gru_forward_scalar), ("lstm", lstm_forward_scalar)]
)
def test_forward_matches_scalar_loop(kind, oracle):
    rng = np.random.default_rng(11)
    for trial in range(5):
        cell = init_cell(kind, 1, 1, seed=trial)
        for g in [k for k in cell.params if k.startswith("b")]:
            cell.params[g] = rng.standard_normal(1)
        seq = rng.standard_normal(7)
        got = cell.predict(seq.reshape(1, 7, 1))[0, 0]
        assert got == pytest.approx(oracle(cell.params, seq), rel=1e-12, abs=1e-14)


# --------------------------------------------------------------- gradients


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_bptt_matches_finite_differences(kind):
    rng = np.random.default_rng(3)
    cell = init_cell(kind, 3, 2, m=2, seed=5)
    xs = rng.standard_normal((5, 4, 2))
    ys = rng.standard_normal((5, 2))
    loss, grads = cell_bptt(cell, xs, ys)
    assert loss == pytest.approx(cell_loss(cell, xs, ys), rel=1e-14)
    fd = fd_cell_grads(cell, xs, ys)
    for key in grads:
        scale = 1.0 + np.max(np.abs(fd[key]))
        assert np.max(np.abs(grads[key] - fd[key])) <= 1e-6 * scale, key


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_readout_gradient_closed_form(kind):
    rng = np.random.default_rng(4)
    cell = init_cell(kind, 3, 1, seed=2)
    xs = rng.standard_normal((8, 5, 1))
    ys = rng.standard_normal(8)
    yhat, cache = cell_forward(cell, xs)
    expected = (yhat - ys[:, None]).T @ cache[-1] / 8.0
    _, grads = cell_bptt(cell, xs, ys)
    assert_allclose(grads["w_out"], expected, rtol=1e-13)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_self_labeled_batch_has_zero_gradients(kind):
    rng = np.random.default_rng(5)
    cell = init_cell(kind, 2, 2, seed=9)
    xs = rng.standard_normal((6, 4, 2))
    ys = cell.predict(xs)
    loss, grads = cell_bptt(cell, xs, ys)
    assert loss == 0.0
    for key, g in grads.items():
        assert np.all(g == 0.0), key


def test_label_width_mismatch_rejected():
    cell = init_cell("gru", 2, 1, m=2)
    xs = np.zeros((3, 4, 1))
    with pytest.raises(ValueError):
        cell_loss(cell, xs, np.zeros((3, 1)))


# ---------------------------------------------------------------- training


def test_train_cell_reduces_streaming_loss():
    teacher = MemorylessTeacher([[1.0]])
    cell = init_cell("gru", 8, 1, seed=1)
    trained, losses = train_cell(cell, teacher, k=3, steps=300, batch=64, lr=1e-2, seed=3)
    head = float(np.mean(losses[:20]))
    tail = float(np.mean(losses[-20:]))
    assert tail < 0.2 * head
    # the input object is left untouched
    assert trained is not cell
    rng = datagen.generator(99, datagen.STREAM_EVAL)
    xs = rng.standard_normal((512, 3, 1))
    resid = trained.predict(xs)[:, 0] - datagen.label(teacher, xs)[:, 0]
    assert float(np.mean(resid**2)) < 0.5 * float(np.mean(datagen.label(teacher, xs) ** 2))


def test_train_cell_dataset_mode_runs_and_is_deterministic():
    teacher = MemorylessTeacher([[1.0]])
    data = datagen.make_dataset(teacher, n_seq=256, length=3, seed=6)
    cell = init_cell("lstm", 4, 1, seed=2)
    t1, l1 = train_cell(cell, teacher, k=3, steps=40, batch=32, lr=1e-2, seed=0, dataset=data)
    t2, l2 = train_cell(cell, teacher, k=3, steps=40, batch=32, lr=1e-2, seed=0, dataset=data)
    assert l1 == l2
    for key in t1.params:
        assert np.array_equal(t1.params[key], t2.params[key])
    assert l1[-1] < l1[0]
