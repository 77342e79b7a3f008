"""Gated recurrent cells with a linear readout of the final hidden state.

Two cell kinds, fixed conventions:
  gru:  z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
        hc = tanh(Wh x + Uh (r * h) + bh), h' = z * h + (1 - z) * hc
  lstm: i, f, o = sig(W. x + U. h + b.), g = tanh(Wg x + Ug h + bg),
        c' = f * c + i * g, h' = o * tanh(c')
Biases start at zero, matrices Xavier. Parameters live in a plain dict so the
same Adam update and the same finite-difference harness drive both kinds.
Gradients come from a hand-written backward pass over the cached rollout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import datagen
from .model import as_batch
from .training import AdamState, adam_update

CELL_KINDS = ("gru", "lstm")

_GRU_GATES = ("z", "r", "h")
_LSTM_GATES = ("i", "f", "o", "g")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class GatedCell:
    """kind, hidden width d, input width n, and the parameter dict.

    Keys are W<gate> (d x n), U<gate> (d x d), b<gate> (d,) for each gate,
    plus the readout row w_out (m x d).
    """

    kind: str
    d: int
    n: int
    params: dict[str, np.ndarray]

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        gates = _GRU_GATES if self.kind == "gru" else _LSTM_GATES
        expected = {f"{p}{g}" for g in gates for p in ("W", "U", "b")} | {"w_out"}
        if set(self.params) != expected:
            raise ValueError(f"parameter keys {sorted(self.params)} != {sorted(expected)}")

    @property
    def m(self) -> int:
        return self.params["w_out"].shape[0]

    def predict(self, xs) -> np.ndarray:
        return cell_forward(self, xs)[0]


def init_cell(kind: str, d: int, n: int, m: int = 1, seed: int = 0) -> GatedCell:
    """Xavier-initialized cell; draw order is W then U per gate, gates in
    convention order, readout last, all on the init stream of seed."""
    if kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    if d < 1 or n < 1 or m < 1:
        raise ValueError("cell dimensions must be positive")
    rng = datagen.generator(seed, datagen.STREAM_INIT)
    gates = _GRU_GATES if kind == "gru" else _LSTM_GATES
    params: dict[str, np.ndarray] = {}
    for g in gates:
        params[f"W{g}"] = np.sqrt(2.0 / (d + n)) * rng.standard_normal((d, n))
        params[f"U{g}"] = np.sqrt(2.0 / (d + d)) * rng.standard_normal((d, d))
        params[f"b{g}"] = np.zeros(d)
    params["w_out"] = np.sqrt(2.0 / (d + m)) * rng.standard_normal((m, d))
    return GatedCell(kind=kind, d=d, n=n, params=params)


def cell_forward(cell: GatedCell, xs) -> tuple[np.ndarray, list]:
    """Readout of the final hidden state for a batch, plus the rollout cache.

    Returns (yhat (N, m), cache); the cache holds per-step activations in the
    exact layout cell_bptt consumes.
    """
    xs = as_batch(xs, cell.n)
    n_seq, k, _ = xs.shape
    p = cell.params
    h = np.zeros((n_seq, cell.d))
    cache = []
    if cell.kind == "gru":
        for t in range(k):
            x = xs[:, t, :]
            z = sigmoid(x @ p["Wz"].T + h @ p["Uz"].T + p["bz"])
            r = sigmoid(x @ p["Wr"].T + h @ p["Ur"].T + p["br"])
            hc = np.tanh(x @ p["Wh"].T + (r * h) @ p["Uh"].T + p["bh"])
            h_new = z * h + (1.0 - z) * hc
            cache.append((x, h, z, r, hc))
            h = h_new
    else:
        c = np.zeros((n_seq, cell.d))
        for t in range(k):
            x = xs[:, t, :]
            i = sigmoid(x @ p["Wi"].T + h @ p["Ui"].T + p["bi"])
            f = sigmoid(x @ p["Wf"].T + h @ p["Uf"].T + p["bf"])
            o = sigmoid(x @ p["Wo"].T + h @ p["Uo"].T + p["bo"])
            g = np.tanh(x @ p["Wg"].T + h @ p["Ug"].T + p["bg"])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            cache.append((x, h, c, i, f, o, g, tc))
            h = o * tc
            c = c_new
    cache.append(h)
    return h @ p["w_out"].T, cache


def cell_loss(cell: GatedCell, xs, ys) -> float:
    """Half mean squared final-step error."""
    yhat, _ = cell_forward(cell, xs)
    ys = _as_labels(ys, cell.m)
    r = yhat - ys
    return 0.5 * float(np.mean(np.sum(r * r, axis=1)))


def _as_labels(ys, m: int) -> np.ndarray:
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim == 1:
        ys = ys[:, None]
    if ys.shape[1] != m:
        raise ValueError(f"labels have width {ys.shape[1]}, cell emits {m}")
    return ys


def cell_bptt(cell: GatedCell, xs, ys) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact parameter gradients by backpropagation through time."""
    xs = as_batch(xs, cell.n)
    ys = _as_labels(ys, cell.m)
    n_seq, k, _ = xs.shape
    p = cell.params
    yhat, cache = cell_forward(cell, xs)
    h_last = cache[-1]
    resid = (yhat - ys) / n_seq
    loss = 0.5 * float(np.sum((yhat - ys) ** 2)) / n_seq
    grads = {key: np.zeros_like(val) for key, val in p.items()}
    grads["w_out"] = resid.T @ h_last
    dh = resid @ p["w_out"]
    if cell.kind == "gru":
        for t in range(k - 1, -1, -1):
            x, h_prev, z, r, hc = cache[t]
            dz = dh * (h_prev - hc)
            dhc = dh * (1.0 - z)
            dh_prev = dh * z
            dah = dhc * (1.0 - hc * hc)
            grads["Wh"] += dah.T @ x
            grads["Uh"] += dah.T @ (r * h_prev)
            grads["bh"] += dah.sum(axis=0)
            drh = dah @ p["Uh"]
            dh_prev += drh * r
            dr = drh * h_prev
            dar = dr * r * (1.0 - r)
            grads["Wr"] += dar.T @ x
            grads["Ur"] += dar.T @ h_prev
            grads["br"] += dar.sum(axis=0)
            dh_prev += dar @ p["Ur"]
            daz = dz * z * (1.0 - z)
            grads["Wz"] += daz.T @ x
            grads["Uz"] += daz.T @ h_prev
            grads["bz"] += daz.sum(axis=0)
            dh_prev += daz @ p["Uz"]
            dh = dh_prev
    else:
        dc = np.zeros((n_seq, cell.d))
        for t in range(k - 1, -1, -1):
            x, h_prev, c_prev, i, f, o, g, tc = cache[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_prev = dc * f
            dh_prev = np.zeros_like(dh)
            for name, dgate, act in (
                ("i", di, i), ("f", df, f), ("o", do, o),
            ):
                da = dgate * act * (1.0 - act)
                grads[f"W{name}"] += da.T @ x
                grads[f"U{name}"] += da.T @ h_prev
                grads[f"b{name}"] += da.sum(axis=0)
                dh_prev += da @ p[f"U{name}"]
            dag = dg * (1.0 - g * g)
            grads["Wg"] += dag.T @ x
            grads["Ug"] += dag.T @ h_prev
            grads["bg"] += dag.sum(axis=0)
            dh_prev += dag @ p["Ug"]
            dh = dh_prev
            dc = dc_prev
    return loss, grads


def train_cell(
    cell: GatedCell,
    teacher,
    k: int,
    steps: int,
    batch: int = 128,
    lr: float = 1e-3,
    seed: int = 0,
    dataset=None,
) -> tuple[GatedCell, list[float]]:
    """Adam on streamed teacher batches (or minibatches of a fixed dataset).

    With a dataset, each step draws one group (probability proportional to
    size) and batch rows from it, mirroring the linear minibatch policy.
    Returns the trained cell and the per-step loss trace.
    """
    params = dict(cell.params)
    state = AdamState.zeros_like(params)
    losses = []
    weights = None
    if dataset is not None:
        sizes = np.array([g.n_seq for g in dataset.groups], dtype=np.float64)
        weights = sizes / sizes.sum()
    for step in range(steps):
        rng = datagen.generator(seed, datagen.STREAM_BATCH, step)
        if dataset is None:
            xs = rng.standard_normal((batch, k, cell.n))
            ys = datagen.label(teacher, xs)
        else:
            gi = int(rng.choice(len(dataset.groups), p=weights))
            g = dataset.groups[gi]
            idx = rng.integers(0, g.n_seq, size=batch)
            xs, ys = g.inputs[idx], g.labels[idx]
        work = GatedCell(kind=cell.kind, d=cell.d, n=cell.n, params=params)
        loss, grads = cell_bptt(work, xs, ys)
        losses.append(loss)
        if not np.isfinite(loss):
            raise RuntimeError(f"cell training diverged at step {step}")
        params, state = adam_update(params, grads, state, lr)
    return GatedCell(kind=cell.kind, d=cell.d, n=cell.n, params=params), losses
