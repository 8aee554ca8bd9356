"""Dense complex-matrix kernel used by the optimizers and the conic solver.

Matrices are plain ``numpy.ndarray`` objects with ``complex128`` entries and
logical (row, col) indexing; :func:`as_cmatrix` is the validating
constructor.  Every matrix inverse in the algorithm layer goes through
:func:`solve_hpd` (Cholesky) or :func:`pseudo_solve` (EVD with relative
clipping) -- nothing calls a generic ``inv``.

All functions are pure: inputs are never mutated and results are freshly
allocated, so values can be shared freely between threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class NotHermitianError(ValueError):
    """Input violates the Hermitian precondition of a factorization."""


class NotPsdError(ValueError):
    """Input has an eigenvalue too negative to be treated as PSD."""


class NotHpdError(ValueError):
    """Cholesky pivot breakdown: the matrix is not positive definite."""


def as_cmatrix(a, *, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a 2-D complex128 array.

    Raises ``ValueError`` on non-2-D shapes or non-finite entries.
    """
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class HermitianEVD:
    """Eigendecomposition A = U diag(w) U^H with ``w`` sorted descending."""

    eigenvalues: np.ndarray  # (n,) float64, descending
    eigenvectors: np.ndarray  # (n, n) complex128, unitary


def kron(a, b) -> np.ndarray:
    """Kronecker product (satisfies vec(AXB) = (B^T kron A) vec(X))."""
    return np.kron(as_cmatrix(a, name="a"), as_cmatrix(b, name="b"))


def vec(a) -> np.ndarray:
    """Stack the columns of ``a`` into a single column vector."""
    m = as_cmatrix(a)
    return m.reshape(-1, 1, order="F").copy()


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a stacked column back to rows x cols."""
    arr = np.asarray(v, dtype=np.complex128).reshape(-1)
    if arr.size != rows * cols:
        raise ValueError(f"cannot unvec length {arr.size} into {rows}x{cols}")
    return arr.reshape(rows, cols, order="F").copy()


def block_diag(blocks) -> np.ndarray:
    """Block-diagonal concatenation of a nonempty list of matrices."""
    mats = [as_cmatrix(b, name=f"block {i}") for i, b in enumerate(blocks)]
    if not mats:
        raise ValueError("block_diag requires a nonempty list of blocks")
    return scipy.linalg.block_diag(*mats).astype(np.complex128)


def herm(a) -> np.ndarray:
    """Explicit Hermitian symmetrization (A + A^H)/2."""
    m = as_cmatrix(a)
    return 0.5 * (m + m.conj().T)


def hermitian_evd(a) -> HermitianEVD:
    """EVD of a (nearly) Hermitian matrix, eigenvalues sorted descending.

    The input is symmetrized before factorization, so the factorization
    input is exactly Hermitian; callers relying on an exactly-Hermitian
    interpretation get it regardless of round-off in ``a``.
    """
    m = as_cmatrix(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"hermitian_evd requires a square matrix, got {m.shape}")
    sym = 0.5 * (m + m.conj().T)
    try:
        w, u = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NotHermitianError(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(w)[::-1]
    return HermitianEVD(eigenvalues=w[order].copy(), eigenvectors=u[:, order].copy())


def psd_sqrt(a) -> np.ndarray:
    """Hermitian PSD square root via EVD with negative-eigenvalue clipping.

    Eigenvalues below -1e-8 * ||a||_2 raise :class:`NotPsdError`; small
    negatives (round-off) are clipped to zero.
    """
    e = hermitian_evd(a)
    scale = max(abs(float(e.eigenvalues[0])), abs(float(e.eigenvalues[-1])))
    if e.eigenvalues[-1] < -1e-8 * max(scale, 1e-300):
        raise NotPsdError(
            f"matrix has eigenvalue {e.eigenvalues[-1]:.3e} below the PSD "
            f"tolerance (-1e-8 * {scale:.3e})"
        )
    w = np.clip(e.eigenvalues, 0.0, None)
    u = e.eigenvectors
    s = (u * np.sqrt(w)) @ u.conj().T
    return 0.5 * (s + s.conj().T)


def solve_hpd(a, rhs) -> np.ndarray:
    """Solve A X = RHS for Hermitian positive definite A via Cholesky.

    Raises :class:`NotHpdError` when a Cholesky pivot falls at or below
    1e-12 * trace(A)/n (near-singular or indefinite input).
    """
    m = herm(a)
    b = np.asarray(rhs, dtype=np.complex128)
    n = m.shape[0]
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"solve_hpd requires a square matrix, got {m.shape}")
    pivot_floor = 1e-12 * max(float(np.trace(m).real), 0.0) / max(n, 1)
    try:
        low = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotHpdError(f"Cholesky failed: matrix is not HPD ({exc})") from exc
    if float(np.min(np.abs(np.diag(low))) ** 2) <= pivot_floor:
        raise NotHpdError(
            f"Cholesky pivot {np.min(np.abs(np.diag(low)))**2:.3e} at or below "
            f"floor {pivot_floor:.3e}"
        )
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    y = scipy.linalg.solve_triangular(low, b, lower=True)
    x = scipy.linalg.solve_triangular(low.conj().T, y, lower=False)
    return x[:, 0] if squeeze else x


def pseudo_solve(a, rhs, rel_clip: float = 1e-10) -> np.ndarray:
    """EVD-based pseudo-solve of a Hermitian PSD system.

    Eigenvalues at or below ``rel_clip`` times the largest are treated as
    exact zeros (their directions are annihilated), which is what the
    zero-noise covariance limits need.
    """
    e = hermitian_evd(a)
    b = np.asarray(rhs, dtype=np.complex128)
    top = float(e.eigenvalues[0]) if e.eigenvalues.size else 0.0
    cut = rel_clip * max(top, 0.0)
    inv_w = np.where(e.eigenvalues > cut, 1.0 / np.where(e.eigenvalues > cut, e.eigenvalues, 1.0), 0.0)
    u = e.eigenvectors
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    x = u @ (inv_w[:, None] * (u.conj().T @ b))
    return x[:, 0] if squeeze else x


def hpd_inverse(a) -> np.ndarray:
    """Explicit inverse of an HPD matrix, realized as an HPD solve."""
    m = as_cmatrix(a)
    return herm(solve_hpd(m, np.eye(m.shape[0], dtype=np.complex128)))
