"""Initialization schemes, optimizers, and the training loop.

Three objective flavors share one loop: the closed-form population objective,
a fixed labeled dataset (optionally minibatched), and a stream of fresh
teacher-labeled batches. Objectives answer loss(model, step) and
grad(model, step) deterministically in (seed, step), so any run is replayable
bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .linalg import frobenius
from .model import LinearRNN
from .objective import GradTriple, MemorylessTeacher, bptt_grad, empirical_loss
from .objective import population_grad, population_loss

INIT_SCHEMES = ("symmetric", "xavier", "identity-scaled", "explicit")
OPTIMIZER_KINDS = ("gd", "gd-backtracking", "adam")

ARMIJO_C = 1e-4
ARMIJO_FACTOR = 0.5
ARMIJO_MAX_HALVINGS = 60
DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    """Loss or weights left the finite range; carries the partial record."""

    def __init__(self, message: str, record: "TrainRecord"):
        super().__init__(message)
        self.record = record


@dataclass
class InitSpec:
    """How to draw the starting triple.

    symmetric: A = sigma * (G + G^T)/2 (or alpha * I when alpha is set),
        C Gaussian(0, sigma2), B = sign * C^T. Requires n == m.
    xavier: every block Gaussian with variance 2 / (fan_in + fan_out).
    identity-scaled: A = alpha * I, B and C Gaussian(0, sigma2); alpha required.
    explicit: use the weights tuple (A, B, C) as given.
    Gaussian draws happen in block order A, B, C on the init stream of seed.
    """

    scheme: str = "xavier"
    alpha: float | None = None
    sigma2: float = 1e-2
    sign: int = 1
    seed: int = 0
    weights: tuple | None = None

    def __post_init__(self):
        if self.scheme not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.scheme!r}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.alpha is not None and not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


def init(d: int, n: int, m: int, spec: InitSpec) -> LinearRNN:
    """Draw a model of the requested dimensions per the init spec."""
    if d < 1 or n < 1 or m < 1:
        raise ValueError("model dimensions must be positive")
    rng = datagen.generator(spec.seed, datagen.STREAM_INIT)
    sigma = float(np.sqrt(spec.sigma2))
    if spec.scheme == "symmetric":
        if n != m:
            raise ValueError("symmetric init ties B = C^T and needs n == m")
        if spec.alpha is not None:
            a = spec.alpha * np.eye(d)
        else:
            g = rng.standard_normal((d, d))
            a = sigma * (g + g.T) / 2.0
        c = sigma * rng.standard_normal((m, d))
        b = spec.sign * c.T.copy()
        return LinearRNN(a, b, c)
    if spec.scheme == "xavier":
        a = np.sqrt(2.0 / (d + d)) * rng.standard_normal((d, d))
        b = np.sqrt(2.0 / (d + n)) * rng.standard_normal((d, n))
        c = np.sqrt(2.0 / (d + m)) * rng.standard_normal((m, d))
        return LinearRNN(a, b, c)
    if spec.scheme == "identity-scaled":
        if spec.alpha is None:
            raise ValueError("identity-scaled init requires alpha")
        a = spec.alpha * np.eye(d)
        b = sigma * rng.standard_normal((d, n))
        c = sigma * rng.standard_normal((m, d))
        return LinearRNN(a, b, c)
    if spec.weights is None:
        raise ValueError("explicit init requires weights=(A, B, C)")
    a, b, c = spec.weights
    model = LinearRNN(np.array(a, dtype=np.float64), np.array(b, dtype=np.float64),
                      np.array(c, dtype=np.float64))
    if (model.d, model.n, model.m) != (d, n, m):
        raise ValueError("explicit weights disagree with the requested dimensions")
    return model


@dataclass
class OptimizerSpec:
    kind: str = "gd"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 10000
    stop_tol: float = 0.0

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")


def gd_step(model: LinearRNN, grads: GradTriple, lr: float) -> LinearRNN:
    """One plain gradient step on all three blocks."""
    return LinearRNN(
        model.A - lr * grads.dA,
        model.B - lr * grads.dB,
        model.C - lr * grads.dC,
    )


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam on a parameter dict; returns fresh params and state."""
    t = state.t + 1
    new_m, new_v, new_p = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        mk = beta1 * state.m[key] + (1.0 - beta1) * g
        vk = beta2 * state.v[key] + (1.0 - beta2) * g * g
        m_hat = mk / (1.0 - beta1**t)
        v_hat = vk / (1.0 - beta2**t)
        new_p[key] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[key] = mk
        new_v[key] = vk
    return new_p, AdamState(m=new_m, v=new_v, t=t)


def adam_step(
    model: LinearRNN, grads: GradTriple, state: AdamState | None, spec: OptimizerSpec
) -> tuple[LinearRNN, AdamState]:
    """Adam on the (A, B, C) triple; pass state=None to start from zeros."""
    params = {"A": model.A, "B": model.B, "C": model.C}
    if state is None:
        state = AdamState.zeros_like(params)
    new_p, state = adam_update(
        params, grads.as_dict(), state, spec.lr, spec.beta1, spec.beta2, spec.eps
    )
    return LinearRNN(new_p["A"], new_p["B"], new_p["C"]), state


class PopulationObjective:
    """Closed-form objective against a memoryless teacher at length k."""

    def __init__(self, teacher: MemorylessTeacher, k: int):
        if k < 2:
            raise ValueError("training length k must be >= 2")
        self.teacher = teacher
        self.k = k

    def loss(self, model: LinearRNN, step: int) -> float:
        return population_loss(model, self.teacher, self.k)

    def grad(self, model: LinearRNN, step: int) -> GradTriple:
        return population_grad(model, self.teacher, self.k)


class DatasetObjective:
    """Empirical objective on a fixed dataset, full-batch or minibatched.

    With batch set, each step draws one group (probability proportional to its
    size) and then batch rows from it, keyed by (seed, step); the estimator is
    unbiased for the full-dataset gradient.
    """

    def __init__(self, dataset, batch: int | None = None, seed: int = 0):
        self.dataset = dataset
        self.batch = batch
        self.seed = seed
        sizes = np.array([g.n_seq for g in dataset.groups], dtype=np.float64)
        self._weights = sizes / sizes.sum()
        self._cache_step: int | None = None
        self._cache: tuple[np.ndarray, np.ndarray] | None = None

    def _batch_at(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        if self._cache_step != step:
            rng = datagen.generator(self.seed, datagen.STREAM_BATCH, step)
            gi = int(rng.choice(len(self.dataset.groups), p=self._weights))
            g = self.dataset.groups[gi]
            idx = rng.integers(0, g.n_seq, size=self.batch)
            self._cache = (g.inputs[idx], g.labels[idx])
            self._cache_step = step
        return self._cache

    def loss(self, model: LinearRNN, step: int) -> float:
        if self.batch is None:
            return empirical_loss(model, self.dataset)
        return empirical_loss(model, self._batch_at(step))

    def grad(self, model: LinearRNN, step: int) -> GradTriple:
        if self.batch is None:
            return bptt_grad(model, self.dataset)[1]
        return bptt_grad(model, self._batch_at(step))[1]


class StreamObjective:
    """Fresh teacher-labeled Gaussian batch per step, keyed by (seed, step)."""

    def __init__(self, teacher, k: int, batch: int, seed: int = 0):
        if k < 1:
            raise ValueError("sequence length must be positive")
        if batch < 1:
            raise ValueError("batch size must be positive")
        self.teacher = teacher
        self.k = k
        self.batch = batch
        self.seed = seed
        self._cache_step: int | None = None
        self._cache: tuple[np.ndarray, np.ndarray] | None = None

    def _batch_at(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        if self._cache_step != step:
            rng = datagen.generator(self.seed, datagen.STREAM_BATCH, step)
            xs = rng.standard_normal((self.batch, self.k, self.teacher.n))
            self._cache = (xs, datagen.label(self.teacher, xs))
            self._cache_step = step
        return self._cache

    def loss(self, model: LinearRNN, step: int) -> float:
        return empirical_loss(model, self._batch_at(step))

    def grad(self, model: LinearRNN, step: int) -> GradTriple:
        return bptt_grad(model, self._batch_at(step))[1]


@dataclass
class TrainRecord:
    """Columnar trajectory plus the final model and why training stopped.

    asym_a is ||A - A^T||_F; asym_bc is ||B - C^T||_F (nan when n != m).
    max_asym_* track every step, not just recorded ones.
    """

    steps: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    norm_a: list[float] = field(default_factory=list)
    norm_b: list[float] = field(default_factory=list)
    norm_c: list[float] = field(default_factory=list)
    asym_a: list[float] = field(default_factory=list)
    asym_bc: list[float] = field(default_factory=list)
    final_model: LinearRNN | None = None
    steps_taken: int = 0
    stop_reason: str = ""
    max_asym_a: float = 0.0
    max_asym_bc: float = 0.0

    def row(self, step: int, loss: float, model: LinearRNN):
        self.steps.append(step)
        self.loss.append(loss)
        self.norm_a.append(frobenius(model.A))
        self.norm_b.append(frobenius(model.B))
        self.norm_c.append(frobenius(model.C))
        a_drift = frobenius(model.A - model.A.T)
        bc_drift = frobenius(model.B - model.C.T) if model.n == model.m else float("nan")
        self.asym_a.append(a_drift)
        self.asym_bc.append(bc_drift)


def _drifts(model: LinearRNN) -> tuple[float, float]:
    a_drift = frobenius(model.A - model.A.T)
    bc_drift = frobenius(model.B - model.C.T) if model.n == model.m else float("nan")
    return a_drift, bc_drift


def train(
    model: LinearRNN,
    objective,
    opt: OptimizerSpec,
    record_every: int = 1,
) -> TrainRecord:
    """Run the optimizer until loss <= stop_tol or max_steps updates.

    The loss is evaluated before each update, so a model already at stop_tol
    stops at step 0 untouched. Backtracking halves the step (factor 0.5,
    sufficient-decrease constant 1e-4) from the base lr each iteration and
    stops with reason "stalled" if 60 halvings never decrease the loss. A
    non-finite loss, or one beyond 1e12, raises DivergenceError carrying the
    partial record.
    """
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    record = TrainRecord()
    adam_state: AdamState | None = None
    step = 0
    recorded_at = -1
    while True:
        loss = objective.loss(model, step)
        a_drift, bc_drift = _drifts(model)
        record.max_asym_a = max(record.max_asym_a, a_drift)
        if not np.isnan(bc_drift):
            record.max_asym_bc = max(record.max_asym_bc, bc_drift)
        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            record.final_model = model
            record.steps_taken = step
            record.stop_reason = "diverged"
            raise DivergenceError(f"loss diverged at step {step}: {loss}", record)
        if step % record_every == 0:
            record.row(step, loss, model)
            recorded_at = step
        if loss <= opt.stop_tol:
            record.stop_reason = "converged"
            break
        if step >= opt.max_steps:
            record.stop_reason = "max-steps"
            break
        grads = objective.grad(model, step)
        if opt.kind == "gd":
            model = gd_step(model, grads, opt.lr)
        elif opt.kind == "adam":
            model, adam_state = adam_step(model, grads, adam_state, opt)
        else:
            model, ok = _backtracking_step(model, grads, loss, objective, step, opt)
            if not ok:
                record.stop_reason = "stalled"
                break
        if not all(np.all(np.isfinite(w)) for w in model.weights().values()):
            record.final_model = model
            record.steps_taken = step + 1
            record.stop_reason = "diverged"
            raise DivergenceError(f"weights diverged at step {step + 1}", record)
        step += 1
    if recorded_at != step:
        record.row(step, loss, model)
    record.final_model = model
    record.steps_taken = step
    return record


def _backtracking_step(
    model: LinearRNN,
    grads: GradTriple,
    loss: float,
    objective,
    step: int,
    opt: OptimizerSpec,
) -> tuple[LinearRNN, bool]:
    gnorm_sq = grads.norm_sq()
    lr = opt.lr
    for _ in range(ARMIJO_MAX_HALVINGS):
        candidate = gd_step(model, grads, lr)
        if all(np.all(np.isfinite(w)) for w in candidate.weights().values()):
            cand_loss = objective.loss(candidate, step)
            if np.isfinite(cand_loss) and cand_loss <= loss - ARMIJO_C * lr * gnorm_sq:
                return candidate, True
        lr *= ARMIJO_FACTOR
    return model, False


def make_cyclic_bad(d: int, k: int, w_star) -> LinearRNN:
    """Zero-loss model at length k whose memory resurfaces at lag d.

    A is the cyclic shift on d states; B injects each input channel at a
    stride-k slot and C reads the columns of W* back from the same slots, so
    the impulse response is W* at lag 0, zero at lags 1..k-1 (in fact through
    lag d-1), and W* again at lag d. Requires d >= k, and d >= n*k when the
    teacher has more than one input channel.
    """
    w = np.atleast_2d(np.asarray(w_star, dtype=np.float64))
    m, n = w.shape
    if k < 2:
        raise ValueError("k must be >= 2")
    if d < k:
        raise ValueError(f"need d >= k, got d={d}, k={k}")
    if n > 1 and d < n * k:
        raise ValueError(f"multi-input embedding needs d >= n*k, got d={d}, n*k={n * k}")
    a = np.zeros((d, d))
    a[0, d - 1] = 1.0
    for i in range(1, d):
        a[i, i - 1] = 1.0
    b = np.zeros((d, n))
    c = np.zeros((m, d))
    for ch in range(n):
        slot = ch * k
        b[slot, ch] = 1.0
        c[:, slot] = w[:, ch]
    return LinearRNN(a, b, c)


def make_diag_bad(k: int, d: int, w_star: float, delta: float) -> LinearRNN:
    """Near-zero-loss diagonal model whose tail eigenvalue 2 explodes later.

    B = C^T = (sqrt(w*), 0, ..., 0, sqrt(delta)), A = diag(0, ..., 0, 2). The
    population loss at length k is delta^2 (4^k - 1) / 6 and the lag-j impulse
    entry is w* + delta at j = 0 and delta * 2^j beyond, so predictions blow
    up as soon as the horizon grows.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if d < 2:
        raise ValueError("need d >= 2 for the two live slots")
    if w_star <= 0 or delta <= 0:
        raise ValueError("w_star and delta must be positive")
    vec = np.zeros(d)
    vec[0] = np.sqrt(w_star)
    vec[-1] = np.sqrt(delta)
    a = np.zeros((d, d))
    a[-1, -1] = 2.0
    return LinearRNN(a, vec[:, None], vec[None, :])
