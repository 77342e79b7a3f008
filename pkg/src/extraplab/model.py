"""Linear recurrent models and their unrolled input-output maps.

A model is the triple (A, B, C). Run on a length-k input sequence it evolves
s_t = A s_{t-1} + B x_t from s_0 = 0 and emits y_t = C s_t, so the final
output is the convolution sum_{j=0}^{k-1} (C A^j B) x_{k-j}. The lag-j
coefficient C A^j B is the model's impulse response and is the object every
diagnostic in this package inspects.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, as_matrix, require_square


@dataclass
class LinearRNN:
    """State-space triple: A is d x d, B is d x n, C is m x d."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A = require_square(self.A, "A")
        self.B = as_matrix(self.B, "B")
        self.C = as_matrix(self.C, "C")
        d = self.A.shape[0]
        if self.B.shape[0] != d:
            raise DimensionError(f"B has {self.B.shape[0]} rows, expected {d}")
        if self.C.shape[1] != d:
            raise DimensionError(f"C has {self.C.shape[1]} columns, expected {d}")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def is_siso(self) -> bool:
        return self.n == 1 and self.m == 1

    def weights(self) -> dict[str, np.ndarray]:
        return {"A": self.A, "B": self.B, "C": self.C}


def as_sequence(x, n: int | None = None) -> np.ndarray:
    """Coerce one input sequence to shape (k, n); scalars per step allowed as 1-d."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise DimensionError(f"sequence must be (k, n) with k >= 1, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sequence entries must be finite")
    if n is not None and arr.shape[1] != n:
        raise DimensionError(f"sequence has input width {arr.shape[1]}, model expects {n}")
    return arr


def as_batch(xs, n: int | None = None) -> np.ndarray:
    """Coerce a batch of same-length sequences to shape (N, k, n)."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"batch must be (N, k, n), got shape {np.shape(xs)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("batch entries must be finite")
    if n is not None and arr.shape[2] != n:
        raise DimensionError(f"batch has input width {arr.shape[2]}, model expects {n}")
    return arr


def rollout(model: LinearRNN, x) -> tuple[np.ndarray, np.ndarray]:
    """Run the recurrence on one sequence; returns (states, outputs).

    states[t] is s_{t+1} (the state after consuming input t+1) and
    outputs[t] = C states[t], shapes (k, d) and (k, m).
    """
    x = as_sequence(x, model.n)
    k = x.shape[0]
    states = np.zeros((k, model.d))
    s = np.zeros(model.d)
    for t in range(k):
        s = model.A @ s + model.B @ x[t]
        states[t] = s
    outputs = states @ model.C.T
    return states, outputs


def rollout_batch(model: LinearRNN, xs) -> np.ndarray:
    """States for a batch of sequences, shape (N, k, d)."""
    xs = as_batch(xs, model.n)
    n_seq, k, _ = xs.shape
    states = np.zeros((n_seq, k, model.d))
    s = np.zeros((n_seq, model.d))
    at = model.A.T
    bt = model.B.T
    for t in range(k):
        s = s @ at + xs[:, t, :] @ bt
        states[:, t, :] = s
    return states


def impulse_kernel(model: LinearRNN, length: int) -> np.ndarray:
    """Stacked impulse-response coefficients, shape (length, m, n).

    Entry j is C A^j B, built with a running product C A^j so the cost is one
    d x d multiply per lag rather than a fresh matrix power.
    """
    if length < 1:
        raise ValueError(f"kernel length must be >= 1, got {length}")
    out = np.zeros((length, model.m, model.n))
    ca = model.C
    for j in range(length):
        out[j] = ca @ model.B
        if j + 1 < length:
            ca = ca @ model.A
    return out


def impulse_response(model: LinearRNN, horizon: int) -> np.ndarray:
    """Impulse response C A^j B for j = 0..horizon, shape (horizon+1, m, n)."""
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    return impulse_kernel(model, horizon + 1)


def forward(model: LinearRNN, x) -> np.ndarray:
    """Final-step output on one sequence, shape (m,).

    Evaluated through the unrolled convolution, which keeps it an independent
    path from rollout's recurrence.
    """
    x = as_sequence(x, model.n)
    g = impulse_kernel(model, x.shape[0])
    return np.einsum("jmn,jn->m", g, x[::-1])


def forward_batch(model: LinearRNN, xs) -> np.ndarray:
    """Final-step outputs for a batch of same-length sequences, shape (N, m)."""
    xs = as_batch(xs, model.n)
    g = impulse_kernel(model, xs.shape[1])
    return np.einsum("jmn,Njn->Nm", g, xs[:, ::-1, :])
