"""Post-training inspection: does a trained model keep predicting correctly
when sequences grow past the training length?

For linear models the question reduces to comparing impulse responses, so
every check here is a statement about the lag coefficients C A^j B: how far
they sit from the teacher's, whether they vanish where they must, and (for
symmetric models) how the eigenstructure of A enforces that vanishing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .linalg import SizeLimitError, char_poly, frobenius, sym_eig
from .model import LinearRNN, forward_batch, impulse_kernel
from .objective import MemorylessTeacher


class AsymmetryError(ValueError):
    """A is not symmetric enough for an eigenvalue-based diagnostic."""

    def __init__(self, message: str, asymmetry: float):
        super().__init__(message)
        self.asymmetry = asymmetry


def symmetry_drift(model: LinearRNN) -> tuple[float, float]:
    """(||A - A^T||_F, ||B - C^T||_F); the second is nan when n != m."""
    a_drift = frobenius(model.A - model.A.T)
    bc_drift = frobenius(model.B - model.C.T) if model.n == model.m else float("nan")
    return a_drift, bc_drift


@dataclass
class ExtrapolationCurve:
    """Mean squared final-step error at each evaluation length."""

    mse: dict[int, float]
    stderr: dict[int, float] | None = None
    mode: str = "closed"


def extrapolation_mse(
    student,
    teacher,
    lengths,
    mode: str = "closed",
    n_mc: int = 10000,
    seed: int = 0,
) -> ExtrapolationCurve:
    """Expected squared error between student and teacher at each length.

    closed mode expands the expectation over isotropic Gaussian inputs into
    the cumulative impulse-response gap sum_{j<l} ||g_j - g*_j||_F^2 and needs
    a linear student. mc mode estimates the same quantity from n_mc sampled
    sequences per length (index = length on the eval stream) and accepts any
    student exposing predictions via a predict(xs) callable or forward_batch.
    """
    lengths = [int(l) for l in lengths]
    if not lengths or min(lengths) < 1:
        raise ValueError("lengths must be positive")
    if mode == "closed":
        if not isinstance(student, LinearRNN):
            raise TypeError("closed-form extrapolation needs a linear model")
        horizon = max(lengths)
        gs = impulse_kernel(student, horizon)
        gt = datagen.teacher_kernel(teacher, horizon)
        gaps = np.sum((gs - gt) ** 2, axis=(1, 2))
        cumulative = np.cumsum(gaps)
        return ExtrapolationCurve(mse={l: float(cumulative[l - 1]) for l in lengths})
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    mse: dict[int, float] = {}
    stderr: dict[int, float] = {}
    n_in = teacher.n
    for l in sorted(set(lengths)):
        xs = datagen.sample_sequences(n_mc, l, n_in, seed, index=l)
        ys = datagen.label(teacher, xs)
        if isinstance(student, LinearRNN):
            pred = forward_batch(student, xs)
        elif hasattr(student, "predict"):
            pred = np.asarray(student.predict(xs), dtype=np.float64)
            if pred.ndim == 1:
                pred = pred[:, None]
        else:
            raise TypeError("mc extrapolation needs a LinearRNN or an object with predict()")
        per_seq = np.sum((pred - ys) ** 2, axis=1)
        mse[l] = float(np.mean(per_seq))
        stderr[l] = float(np.std(per_seq, ddof=1) / np.sqrt(n_mc))
    return ExtrapolationCurve(mse=mse, stderr=stderr, mode="mc")


@dataclass
class ExtrapolationCheck:
    """Impulse-gap verdict: lag-0 fit plus the largest lag-j leak up to J."""

    ok: bool
    cb_gap: float
    max_lag_gap: float
    worst_lag: int
    horizon: int
    tol: float


def check_extrapolation(
    model: LinearRNN,
    teacher: MemorylessTeacher,
    horizon: int | None = None,
    tol: float = 1e-5,
) -> ExtrapolationCheck:
    """Pass iff ||CB - W*||_F <= tol and ||C A^j B||_F <= tol for j = 1..horizon.

    horizon defaults to 20 * d, comfortably past where any d-state memory
    pattern must have revealed itself.
    """
    if horizon is None:
        horizon = 20 * model.d
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = impulse_kernel(model, horizon + 1)
    cb_gap = frobenius(g[0] - teacher.w_star)
    lag_norms = np.sqrt(np.sum(g[1:] ** 2, axis=(1, 2)))
    worst = int(np.argmax(lag_norms))
    max_gap = float(lag_norms[worst])
    return ExtrapolationCheck(
        ok=bool(cb_gap <= tol and max_gap <= tol),
        cb_gap=float(cb_gap),
        max_lag_gap=max_gap,
        worst_lag=worst + 1,
        horizon=horizon,
        tol=tol,
    )


@dataclass
class CertificateRecord:
    """Finite certificate that the impulse response stays small forever.

    If ||C A^j B|| <= tol for j = 1..d, the Cayley-Hamilton recurrence
    C A^{d+r} B = -sum_i rho_i C A^{i+r} B bounds every later lag by the
    observed ones times powers of sum_i |rho_i|; coeff_abs_sum and the
    recurrence residual quantify how tight that propagation is.
    """

    gaps: np.ndarray
    max_gap: float
    coeff_abs_sum: float
    char_residual: float
    clean: bool
    tol: float


def ch_certificate(model: LinearRNN, tol: float = 1e-6) -> CertificateRecord:
    """Evaluate the lag-1..d impulse norms and A's characteristic data."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = model.d
    g = impulse_kernel(model, d + 1)
    gaps = np.sqrt(np.sum(g[1:] ** 2, axis=(1, 2)))
    rho, residual = char_poly(model.A)
    return CertificateRecord(
        gaps=gaps,
        max_gap=float(np.max(gaps)),
        coeff_abs_sum=float(np.sum(np.abs(rho))),
        char_residual=residual,
        clean=bool(np.max(gaps) <= tol),
        tol=tol,
    )


@dataclass
class SlacknessProfile:
    """Eigen-aligned view of a symmetric model.

    For A = V diag(lambda) V^T and U = V^T B, the lag-j impulse response is
    sum_s lambda_s^j u_s c_s^T; at any population minimum each eigendirection
    must shut down, so every |lambda_s * U_{s i}| product vanishes.
    """

    eigenvalues: np.ndarray
    u: np.ndarray
    products: np.ndarray
    max_product: float

    def triples(self) -> list[tuple[float, float, float]]:
        out = []
        for s in range(self.u.shape[0]):
            for i in range(self.u.shape[1]):
                out.append(
                    (float(self.eigenvalues[s]), float(self.u[s, i]), float(self.products[s, i]))
                )
        return out


def slackness_profile(model: LinearRNN, asym_tol: float = 1e-6) -> SlacknessProfile:
    """Eigenvalues of A, eigenbasis coordinates of B, and their products.

    Requires ||A - A^T||_F <= asym_tol * (1 + ||A||_F); raises AsymmetryError
    carrying the measured asymmetry otherwise.
    """
    asym = frobenius(model.A - model.A.T)
    if asym > asym_tol * (1.0 + frobenius(model.A)):
        raise AsymmetryError(f"A is asymmetric (||A - A^T||_F = {asym:.3e})", asymmetry=asym)
    eig = sym_eig(model.A)
    u = eig.eigenvectors.T @ model.B
    products = np.abs(eig.eigenvalues[:, None] * u)
    return SlacknessProfile(
        eigenvalues=eig.eigenvalues,
        u=u,
        products=products,
        max_product=float(np.max(products)),
    )


@dataclass
class DiagnosticsReport:
    """Everything the package can say about one trained model at once."""

    check: ExtrapolationCheck
    curve: ExtrapolationCurve
    certificate: CertificateRecord | None
    slackness: SlacknessProfile | None
    asym_a: float
    asym_bc: float
    extrapolates: bool
    notes: list[str] = field(default_factory=list)


def diagnostics_report(
    model: LinearRNN,
    teacher: MemorylessTeacher,
    lengths=None,
    horizon: int | None = None,
    tol: float = 1e-5,
) -> DiagnosticsReport:
    """Bundle the impulse check, an MSE curve, and whichever certificates apply.

    The characteristic-polynomial certificate is skipped (with a note) past
    its d <= 32 guard; the slackness profile is skipped unless A is close to
    symmetric.
    """
    if lengths is None:
        lengths = list(range(1, 2 * max(2, model.d) + 1))
    check = check_extrapolation(model, teacher, horizon=horizon, tol=tol)
    curve = extrapolation_mse(model, teacher, lengths, mode="closed")
    notes = []
    try:
        certificate = ch_certificate(model, tol=tol)
    except SizeLimitError as e:
        certificate = None
        notes.append(str(e))
    try:
        slackness = slackness_profile(model)
    except AsymmetryError as e:
        slackness = None
        notes.append(str(e))
    asym_a, asym_bc = symmetry_drift(model)
    return DiagnosticsReport(
        check=check,
        curve=curve,
        certificate=certificate,
        slackness=slackness,
        asym_a=asym_a,
        asym_bc=asym_bc,
        extrapolates=check.ok,
        notes=notes,
    )
