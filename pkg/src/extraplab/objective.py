"""Losses and analytic gradients for linear recurrent models.

The population objective targets a memoryless teacher y = W* x_k under
isotropic Gaussian inputs. Averaging the squared error in closed form leaves

    L(A, B, C) = 1/2 * sum_{j=1}^{k-1} ||C A^j B||_F^2 + 1/2 * ||C B - W*||_F^2,

so the loss splits into a lag-0 fit term and an energy penalty on every lag
the model can reach within the training length. population_grad differentiates
this expression exactly; bptt_grad backpropagates the empirical half-MSE
through the recurrence and is its finite-sample counterpart.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, as_matrix
from .model import LinearRNN, as_batch, forward_batch, rollout_batch


@dataclass
class MemorylessTeacher:
    """Target map y = W* x_k; w_star is m x n (scalars become 1 x 1)."""

    w_star: np.ndarray

    def __post_init__(self):
        self.w_star = as_matrix(self.w_star, "w_star")
        if not np.any(self.w_star):
            raise ValueError("w_star must be nonzero")

    @property
    def n(self) -> int:
        return self.w_star.shape[1]

    @property
    def m(self) -> int:
        return self.w_star.shape[0]

    @property
    def scalar(self) -> float:
        if self.w_star.shape != (1, 1):
            raise DimensionError("scalar teacher value requires a 1 x 1 w_star")
        return float(self.w_star[0, 0])


@dataclass
class GradTriple:
    """Gradient blocks matching a model's (A, B, C) shapes."""

    dA: np.ndarray
    dB: np.ndarray
    dC: np.ndarray

    def norm_sq(self) -> float:
        return float(np.sum(self.dA**2) + np.sum(self.dB**2) + np.sum(self.dC**2))

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"A": self.dA, "B": self.dB, "C": self.dC}


def _check_teacher(model: LinearRNN, teacher: MemorylessTeacher):
    if teacher.m != model.m or teacher.n != model.n:
        raise DimensionError(
            f"teacher is {teacher.m} x {teacher.n}, model maps {model.n} -> {model.m}"
        )


def population_loss(model: LinearRNN, teacher: MemorylessTeacher, k: int) -> float:
    """Closed-form expected half-MSE at training length k (k >= 2)."""
    if k < 2:
        raise ValueError(f"training length k must be >= 2, got {k}")
    _check_teacher(model, teacher)
    fit = model.C @ model.B - teacher.w_star
    total = np.sum(fit * fit)
    ca = model.C @ model.A
    for _ in range(1, k - 1):
        g = ca @ model.B
        total += np.sum(g * g)
        ca = ca @ model.A
    g = ca @ model.B
    total += np.sum(g * g)
    return 0.5 * float(total)


def population_grad(model: LinearRNN, teacher: MemorylessTeacher, k: int) -> GradTriple:
    """Exact gradient of population_loss in all three blocks.

    Shares one table of powers A^0..A^{k-1} across the three blocks; the dA
    term needs every split A^r (C^T C A^i B B^T) A^{i-1-r} of each lag.
    """
    if k < 2:
        raise ValueError(f"training length k must be >= 2, got {k}")
    _check_teacher(model, teacher)
    a, b, c = model.A, model.B, model.C
    d = model.d
    powers = [np.eye(d)]
    for _ in range(1, k):
        powers.append(powers[-1] @ a)
    fit = c @ b - teacher.w_star
    db = c.T @ fit
    dc = fit @ b.T
    da = np.zeros((d, d))
    for i in range(1, k):
        gi = c @ powers[i] @ b
        db = db + powers[i].T @ (c.T @ gi)
        dc = dc + (gi @ b.T) @ powers[i].T
        mi = c.T @ gi @ b.T
        for r in range(i):
            da = da + powers[r].T @ mi @ powers[i - 1 - r].T
    return GradTriple(dA=da, dB=db, dC=dc)


def _as_groups(data) -> list[tuple[np.ndarray, np.ndarray]]:
    """Normalize a dataset-like object to [(inputs, labels), ...].

    Accepts an object with .groups (each group exposing .inputs/.labels), a
    single such group, a bare (inputs, labels) pair, or a list of pairs.
    """
    if hasattr(data, "groups"):
        data = data.groups
    if hasattr(data, "inputs") and hasattr(data, "labels"):
        data = [data]
    if isinstance(data, tuple) and len(data) == 2 and not hasattr(data[0], "inputs"):
        data = [data]
    groups = []
    for item in data:
        if hasattr(item, "inputs"):
            xs, ys = item.inputs, item.labels
        else:
            xs, ys = item
        xs = as_batch(xs)
        ys = np.asarray(ys, dtype=np.float64)
        if ys.ndim == 1:
            ys = ys[:, None]
        if ys.shape[0] != xs.shape[0]:
            raise DimensionError(
                f"group has {xs.shape[0]} sequences but {ys.shape[0]} labels"
            )
        groups.append((xs, ys))
    if not groups or sum(x.shape[0] for x, _ in groups) == 0:
        raise ValueError("dataset is empty")
    return groups


def empirical_loss(model: LinearRNN, data) -> float:
    """Half mean squared final-step error over every sequence in the dataset.

    Groups may have different lengths; sequences within a group must share one.
    """
    groups = _as_groups(data)
    total = 0.0
    count = 0
    for xs, ys in groups:
        if ys.shape[1] != model.m:
            raise DimensionError(f"labels have width {ys.shape[1]}, model emits {model.m}")
        r = forward_batch(model, xs) - ys
        total += float(np.sum(r * r))
        count += xs.shape[0]
    return 0.5 * total / count


def bptt_grad(model: LinearRNN, data) -> tuple[float, GradTriple]:
    """Empirical loss and its exact gradient by backpropagation through time.

    The adjoint of the final state is C^T r for residual r; pushing it back
    one step per lag gives dA = sum_t lam_t s_{t-1}^T, dB = sum_t lam_t x_t^T,
    dC = r s_k^T, averaged over all sequences.
    """
    groups = _as_groups(data)
    da = np.zeros((model.d, model.d))
    db = np.zeros((model.d, model.n))
    dc = np.zeros((model.m, model.d))
    total = 0.0
    count = sum(xs.shape[0] for xs, _ in groups)
    for xs, ys in groups:
        if ys.shape[1] != model.m:
            raise DimensionError(f"labels have width {ys.shape[1]}, model emits {model.m}")
        states = rollout_batch(model, xs)
        k = xs.shape[1]
        r = states[:, -1, :] @ model.C.T - ys
        total += float(np.sum(r * r))
        dc = dc + r.T @ states[:, -1, :]
        lam = r @ model.C
        for t in range(k - 1, -1, -1):
            if t > 0:
                da = da + lam.T @ states[:, t - 1, :]
            db = db + lam.T @ xs[:, t, :]
            lam = lam @ model.A
    scale = 1.0 / count
    return 0.5 * total * scale, GradTriple(dA=da * scale, dB=db * scale, dC=dc * scale)
