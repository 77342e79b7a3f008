"""Dense float64 matrix kernels.

Everything downstream manipulates plain 2-d numpy arrays. This module owns
validation plus the two numerically delicate kernels the rest of the package
relies on: a cyclic Jacobi eigensolver for symmetric matrices and a
Faddeev-LeVerrier characteristic polynomial with an exactness guard.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHAR_POLY_MAX_DIM = 32
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class DimensionError(ValueError):
    """Operands do not conform (wrong rank, empty axis, or shape mismatch)."""


class SizeLimitError(ValueError):
    """Matrix exceeds the guard for a numerically fragile kernel."""


class ConvergenceError(RuntimeError):
    """Iteration exhausted its budget; carries the leftover off-diagonal norm."""

    def __init__(self, message: str, off_norm: float):
        super().__init__(message)
        self.off_norm = off_norm


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-d float64 array with both axes nonempty."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"{name}: expected a nonempty 2-d array, got shape {np.shape(a)}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name}: entries must be finite")
    return m


def require_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name}: expected square, got {a.shape}")
    return a


def frobenius(a) -> float:
    """Frobenius norm, sqrt of the plain sum of squared entries."""
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def mat_power(a, j: int) -> np.ndarray:
    """A**j for integer j >= 0 by binary exponentiation. A**0 is the identity."""
    a = require_square(a)
    if not isinstance(j, (int, np.integer)) or j < 0:
        raise ValueError(f"exponent must be a nonnegative integer, got {j!r}")
    result = np.eye(a.shape[0])
    base = a.copy()
    j = int(j)
    while j:
        if j & 1:
            result = result @ base
        j >>= 1
        if j:
            base = base @ base
    if not np.all(np.isfinite(result)):
        raise ValueError("matrix power overflowed to non-finite entries")
    return result


@dataclass
class SymEig:
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are sorted by descending magnitude; eigenvectors holds the
    matching unit eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _off_norm(w: np.ndarray) -> float:
    off = w - np.diag(np.diag(w))
    return frobenius(off)


def sym_eig(a, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SymEig:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps row-cyclically over the upper triangle, annihilating each pivot with
    a two-sided rotation, until the off-diagonal Frobenius norm falls below
    tol * ||A||_F. The input must be symmetric to 1e-8 * (1 + ||A||_F); it is
    symmetrized exactly once before iterating.
    """
    a = require_square(a, "sym_eig input")
    norm = frobenius(a)
    if frobenius(a - a.T) > 1e-8 * (1.0 + norm):
        raise ValueError("sym_eig input is not symmetric")
    d = a.shape[0]
    w = (a + a.T) / 2.0
    v = np.eye(d)
    threshold = tol * frobenius(w)
    # Pivots below skip_tol cannot keep the total off-norm above threshold.
    skip_tol = threshold / max(d, 1)
    converged = _off_norm(w) <= threshold
    for _ in range(max_sweeps):
        if converged:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = w[p, q]
                if abs(apq) <= skip_tol:
                    continue
                theta = (w[q, q] - w[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = 1.0 / (theta - np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # W <- J^T W J with the rotation in the (p, q) plane.
                wp = w[:, p].copy()
                wq = w[:, q].copy()
                w[:, p] = c * wp - s * wq
                w[:, q] = s * wp + c * wq
                rp = w[p, :].copy()
                rq = w[q, :].copy()
                w[p, :] = c * rp - s * rq
                w[q, :] = s * rp + c * rq
                w[p, q] = 0.0
                w[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        converged = _off_norm(w) <= threshold
    if not converged:
        leftover = _off_norm(w)
        raise ConvergenceError(
            f"Jacobi sweep budget ({max_sweeps}) exhausted, off-norm {leftover:.3e}",
            off_norm=leftover,
        )
    lam = np.diag(w).copy()
    order = np.argsort(-np.abs(lam), kind="stable")
    return SymEig(eigenvalues=lam[order], eigenvectors=v[:, order])


def char_poly(a) -> tuple[np.ndarray, float]:
    """Monic characteristic polynomial coefficients by Faddeev-LeVerrier.

    Returns (rho, residual) where p(z) = z^d + rho[d-1] z^(d-1) + ... + rho[0]
    and residual = ||A^d + sum_i rho[i] A^i||_F, a direct check of the
    Cayley-Hamilton identity for the computed coefficients. Guarded to d <= 32;
    the recurrence loses too much precision beyond that.
    """
    a = require_square(a, "char_poly input")
    d = a.shape[0]
    if d > CHAR_POLY_MAX_DIM:
        raise SizeLimitError(f"char_poly supports d <= {CHAR_POLY_MAX_DIM}, got {d}")
    rho = np.zeros(d)
    mk = np.eye(d)
    eye = np.eye(d)
    for k in range(1, d + 1):
        am = a @ mk
        c = -np.trace(am) / k
        rho[d - k] = c
        mk = am + c * eye
    acc = rho[0] * eye
    pw = eye
    for i in range(1, d):
        pw = pw @ a
        acc = acc + rho[i] * pw
    acc = acc + pw @ a
    residual = frobenius(acc)
    return rho, residual
