"""Input sampling, teachers, and labeled datasets.

All randomness flows through Philox (counter-based, so any draw is
reproducible from its key alone). Keys are (seed, stream * 2^48 + index):
the named stream separates independent uses of one experiment seed, the index
separates repeated uses within a stream (evaluation lengths, training steps).
Gaussian batches are filled in C order, so a batch is sequence-major and each
sequence is time-major.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .linalg import as_matrix, frobenius
from .model import LinearRNN, as_batch, impulse_kernel, rollout_batch
from .objective import MemorylessTeacher

STREAM_INIT = 1
STREAM_DATA = 2
STREAM_TEACHER = 3
STREAM_BATCH = 4
STREAM_EVAL = 5

_INDEX_SPAN = 2**48


def generator(seed: int, stream: int = 0, index: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, index)."""
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit nonnegative integer, got {seed}")
    if not 0 <= index < _INDEX_SPAN:
        raise ValueError(f"index out of range: {index}")
    if not 0 <= stream < 2**16:
        raise ValueError(f"stream out of range: {stream}")
    key = [np.uint64(seed), np.uint64(stream * _INDEX_SPAN + index)]
    return np.random.Generator(np.random.Philox(key=key))


def sample_sequences(n_seq: int, length: int, n_dim: int, seed: int, index: int = 0) -> np.ndarray:
    """Standard normal input batch of shape (n_seq, length, n_dim)."""
    if n_seq < 1 or length < 1 or n_dim < 1:
        raise ValueError("batch dimensions must be positive")
    rng = generator(seed, STREAM_DATA, index)
    return rng.standard_normal((n_seq, length, n_dim))


@dataclass
class LDSTeacher:
    """Ground-truth linear dynamical system (A*, B*, C*) with state width d*."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        # Reuse the model validation; the teacher is itself a linear RNN.
        self._model = LinearRNN(self.A, self.B, self.C)
        self.A, self.B, self.C = self._model.A, self._model.B, self._model.C

    @property
    def d_star(self) -> int:
        return self._model.d

    @property
    def n(self) -> int:
        return self._model.n

    @property
    def m(self) -> int:
        return self._model.m

    def model(self) -> LinearRNN:
        return self._model


Teacher = Union[MemorylessTeacher, LDSTeacher]


def teacher_kernel(teacher: Teacher, length: int) -> np.ndarray:
    """Teacher impulse coefficients at lags 0..length-1, shape (length, m, n)."""
    if isinstance(teacher, MemorylessTeacher):
        out = np.zeros((length, teacher.m, teacher.n))
        out[0] = teacher.w_star
        return out
    return impulse_kernel(teacher.model(), length)


def label(teacher: Teacher, xs) -> np.ndarray:
    """Final-step teacher outputs for a batch, shape (N, m).

    LDS teachers are run through the state recurrence, which keeps labeling an
    independent path from the convolution the losses evaluate.
    """
    if isinstance(teacher, MemorylessTeacher):
        xs = as_batch(xs, teacher.n)
        return xs[:, -1, :] @ teacher.w_star.T
    states = rollout_batch(teacher.model(), xs)
    return states[:, -1, :] @ teacher.C.T


def sample_lds_teacher(
    d_star: int,
    n: int = 1,
    m: int = 1,
    k: int = 5,
    seed: int = 0,
    spectral_radius: float = 0.7,
    index: int = 0,
) -> LDSTeacher:
    """Draw a well-conditioned random LDS teacher.

    A* is Ginibre(1/d*) rescaled to the requested spectral radius; B*, C* are
    standard normal jointly rescaled so the teacher's output variance at
    length k (i.e. the squared Frobenius mass of its first k impulse
    coefficients) equals 1. Draw order: A*, then B*, then C*. Distinct
    ``index`` values give independent draws under one seed (the width sweep
    passes index=d_star so teachers differ across sweep points).
    """
    if d_star < 1 or n < 1 or m < 1 or k < 1:
        raise ValueError("teacher dimensions and length must be positive")
    if not 0.0 < spectral_radius < 1.0:
        raise ValueError(f"spectral radius must lie in (0, 1), got {spectral_radius}")
    rng = generator(seed, STREAM_TEACHER, index)
    a = rng.standard_normal((d_star, d_star)) / np.sqrt(d_star)
    b = rng.standard_normal((d_star, n))
    c = rng.standard_normal((m, d_star))
    radius = float(np.max(np.abs(np.linalg.eigvals(a)))) if d_star > 0 else 0.0
    if radius > 0.0:
        a = a * (spectral_radius / radius)
    kern = impulse_kernel(LinearRNN(a, b, c), k)
    var = float(np.sum(kern * kern))
    if var <= 0.0:
        raise ValueError("degenerate teacher draw: zero output variance")
    s = var**-0.25
    return LDSTeacher(A=a, B=b * s, C=c * s)


def spectral_radius_estimate(a, squarings: int = 10) -> float:
    """Upper estimate of the spectral radius from ||A^(2^squarings)||^(1/2^squarings).

    Repeatedly squares a normalized copy, tracking scale in log space. Monotone
    in truth (never below the spectral radius up to roundoff) and convergent,
    unlike power iteration on a vector, which stalls on complex conjugate
    dominant pairs.
    """
    a = as_matrix(a, "spectral_radius_estimate input")
    m = a.copy()
    log_scale = 0.0
    power = 1
    for _ in range(squarings):
        nm = frobenius(m)
        if nm == 0.0:
            return 0.0
        log_scale = 2.0 * (log_scale + np.log(nm))
        u = m / nm
        m = u @ u
        power *= 2
    nm = frobenius(m)
    if nm == 0.0:
        return 0.0
    return float(np.exp((log_scale + np.log(nm)) / power))


@dataclass
class SequenceGroup:
    """Same-length slab of the dataset: inputs (N, length, n), labels (N, m)."""

    length: int
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = as_batch(self.inputs)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labels.ndim == 1:
            self.labels = self.labels[:, None]
        if self.inputs.shape[1] != self.length:
            raise ValueError(
                f"group declares length {self.length} but inputs have {self.inputs.shape[1]}"
            )
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise ValueError("labels and inputs disagree on batch size")

    @property
    def n_seq(self) -> int:
        return self.inputs.shape[0]


@dataclass
class LabeledDataset:
    """One or more sequence groups plus the provenance needed to regenerate them."""

    groups: list[SequenceGroup]
    seed: int = 0
    adversarial: bool = False
    note: str = ""

    def __post_init__(self):
        if not self.groups:
            raise ValueError("dataset must contain at least one group")

    @property
    def n_total(self) -> int:
        return sum(g.n_seq for g in self.groups)

    @property
    def n(self) -> int:
        return self.groups[0].inputs.shape[2]

    @property
    def m(self) -> int:
        return self.groups[0].labels.shape[1]


def make_dataset(teacher: Teacher, n_seq: int, length: int, seed: int = 0) -> LabeledDataset:
    """Honestly labeled dataset: Gaussian inputs, labels from the teacher."""
    xs = sample_sequences(n_seq, length, teacher.n, seed, index=length)
    ys = label(teacher, xs)
    return LabeledDataset(
        groups=[SequenceGroup(length=length, inputs=xs, labels=ys)],
        seed=seed,
        note=f"honest length={length}",
    )


def make_adversarial(
    teacher: Teacher,
    k: int,
    l_adv: int,
    n_per_length: int,
    seed: int = 0,
) -> LabeledDataset:
    """Mixture that punishes extrapolating solutions beyond length k.

    The length-k group is honestly labeled. Each longer group at length l in
    (k, l_adv] carries a shifted-memory corruption: the label is the teacher's
    output on the prefix of length l - k, which for a memoryless teacher is
    y = W* x_{l-k}. A model keeping the honest rule at every length therefore
    fails on every corrupted group.
    """
    if not isinstance(teacher, (MemorylessTeacher, LDSTeacher)):
        raise TypeError(f"unsupported teacher type {type(teacher).__name__}")
    if l_adv <= k:
        raise ValueError(f"l_adv must exceed k, got l_adv={l_adv}, k={k}")
    if n_per_length < 1:
        raise ValueError("n_per_length must be positive")
    groups = []
    for length in range(k, l_adv + 1):
        xs = sample_sequences(n_per_length, length, teacher.n, seed, index=length)
        if length == k:
            ys = label(teacher, xs)
        else:
            ys = label(teacher, xs[:, : length - k, :])
        groups.append(SequenceGroup(length=length, inputs=xs, labels=ys))
    return LabeledDataset(
        groups=groups,
        seed=seed,
        adversarial=True,
        note=f"adversarial k={k} l_adv={l_adv}",
    )


def save_dataset_csv(dataset: LabeledDataset, path: str):
    """Write a dataset to CSV: a provenance comment, then per group a header

    row `group,<length>,<N>,<n>,<m>` followed by N rows of length*n inputs
    (time-major, channel within step) and m labels. Floats use %.17g, so a
    round trip is bit-exact.
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(
            f"# extraplab dataset seed={dataset.seed} "
            f"adversarial={int(dataset.adversarial)} note={dataset.note}\n"
        )
        writer = csv.writer(f, lineterminator="\n")
        for g in dataset.groups:
            n_seq, length, n_dim = g.inputs.shape
            m_dim = g.labels.shape[1]
            writer.writerow(["group", length, n_seq, n_dim, m_dim])
            flat = g.inputs.reshape(n_seq, length * n_dim)
            for i in range(n_seq):
                row = [f"{v:.17g}" for v in flat[i]] + [f"{v:.17g}" for v in g.labels[i]]
                writer.writerow(row)


def load_dataset_csv(path: str) -> LabeledDataset:
    """Inverse of save_dataset_csv."""
    groups: list[SequenceGroup] = []
    seed = 0
    adversarial = False
    note = ""
    with open(path, "r", encoding="utf-8", newline="") as f:
        first = f.readline()
        if first.startswith("#"):
            for token in first[1:].split():
                if token.startswith("seed="):
                    seed = int(token[5:])
                elif token.startswith("adversarial="):
                    adversarial = bool(int(token[12:]))
                elif token.startswith("note="):
                    note = first[1:].split("note=", 1)[1].strip()
        else:
            f.seek(0)
        reader = csv.reader(f)
        pending: list[list[str]] = []
        header: tuple[int, int, int, int] | None = None

        def flush():
            if header is None:
                return
            length, n_seq, n_dim, m_dim = header
            if len(pending) != n_seq:
                raise ValueError(f"group announced {n_seq} rows, found {len(pending)}")
            data = np.array([[float(v) for v in row] for row in pending])
            xs = data[:, : length * n_dim].reshape(n_seq, length, n_dim)
            ys = data[:, length * n_dim :]
            groups.append(SequenceGroup(length=length, inputs=xs, labels=ys))

        for row in reader:
            if not row:
                continue
            if row[0] == "group":
                flush()
                header = (int(row[1]), int(row[2]), int(row[3]), int(row[4]))
                pending = []
            else:
                pending.append(row)
        flush()
    return LabeledDataset(groups=groups, seed=seed, adversarial=adversarial, note=note)
