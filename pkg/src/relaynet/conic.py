"""Embedded small-scale conic solver (SDP/SOCP) over real symmetric cones.

Programs are stated in the inequality form

    minimize    c^T x
    subject to  S_j(x) = C_j0 + sum_i x_i C_ji  is PSD        (psd blocks)
                ||v_k(x)||_2 <= t_k(x)                        (soc constraints)
                a_l^T x = b_l                                 (eq constraints)

over a real variable vector x.  Hermitian LMIs are supported through the
real embedding [[Re, -Im], [Im, Re]] (:func:`embed_hermitian`), which maps
complex PSD-ness onto real PSD-ness exactly.

The solver is a primal-dual path-following method with Nesterov-Todd
scaling, a Mehrotra predictor-corrector step, dense KKT factorizations and
the homogeneous self-dual embedding, so primal/dual infeasibility is
detected by certificate rather than by divergence.  It is deterministic:
the same program solves to bit-identical output every time.

Nonnegativity rows (one-dimensional second-order cones) are stored with the
SOC constraints in the program type but are handled on the nonnegative
orthant internally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


# --------------------------------------------------------------------------
# status values
# --------------------------------------------------------------------------

class ConicStatus:
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


class SolverError(RuntimeError):
    """Raised for malformed programs (not for solvable-but-infeasible ones)."""


# --------------------------------------------------------------------------
# complex-to-real embedding
# --------------------------------------------------------------------------

def embed_hermitian(x) -> np.ndarray:
    """Real embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix.

    The embedding doubles every eigenvalue's multiplicity and preserves
    PSD-ness in both directions.  Raises ``ValueError`` when the input is
    not Hermitian to 1e-10 relative tolerance.
    """
    m = np.asarray(x, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"embed_hermitian requires a square matrix, got {m.shape}")
    dev = np.linalg.norm(m - m.conj().T)
    if dev > 1e-10 * max(1.0, np.linalg.norm(m)):
        raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
    re, im = m.real, m.imag
    top = np.hstack([re, -im])
    bot = np.hstack([im, re])
    out = np.vstack([top, bot])
    return 0.5 * (out + out.T)


def _embed_stack(stack: np.ndarray) -> np.ndarray:
    """Vectorized :func:`embed_hermitian` over a (k, p, p) complex stack."""
    k, p, _ = stack.shape
    out = np.empty((k, 2 * p, 2 * p))
    out[:, :p, :p] = stack.real
    out[:, p:, p:] = stack.real
    out[:, :p, p:] = -stack.imag
    out[:, p:, :p] = stack.imag
    return 0.5 * (out + out.transpose(0, 2, 1))


# --------------------------------------------------------------------------
# affine Hermitian matrix expressions (builder layer)
# --------------------------------------------------------------------------

class HermitianLMI:
    """A dim x dim complex Hermitian matrix expression, affine in real vars.

    Content is accumulated with :meth:`add_const` / :meth:`add_terms`; an
    off-diagonal placement is mirrored automatically so the expression stays
    Hermitian for every real variable assignment.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("LMI dimension must be >= 1")
        self.dim = dim
        self.const = np.zeros((dim, dim), dtype=np.complex128)
        self.term_indices: list[np.ndarray] = []
        self.term_stacks: list[np.ndarray] = []

    def add_const(self, r0: int, c0: int, mat, mirror: bool = False) -> None:
        m = np.asarray(mat, dtype=np.complex128)
        p, q = m.shape
        self.const[r0:r0 + p, c0:c0 + q] += m
        if mirror:
            self.const[c0:c0 + q, r0:r0 + p] += m.conj().T

    def add_terms(self, r0: int, c0: int, indices, stack, mirror: bool = False) -> None:
        """Add per-variable coefficients ``stack[i]`` at block (r0, c0)."""
        idx = np.asarray(indices, dtype=np.intp)
        st = np.asarray(stack, dtype=np.complex128)
        if st.ndim != 3 or st.shape[0] != idx.size:
            raise ValueError("stack must be (len(indices), p, q)")
        k, p, q = st.shape
        full = np.zeros((k, self.dim, self.dim), dtype=np.complex128)
        full[:, r0:r0 + p, c0:c0 + q] = st
        if mirror:
            full[:, c0:c0 + q, r0:r0 + p] += st.conj().transpose(0, 2, 1)
        self.term_indices.append(idx)
        self.term_stacks.append(full)

    def embedded(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (const_real, indices, real symmetric coefficient stack)."""
        cr = embed_hermitian(self.const)
        if self.term_indices:
            idx = np.concatenate(self.term_indices)
            stack = np.concatenate(self.term_stacks, axis=0)
            dev = np.abs(stack - stack.conj().transpose(0, 2, 1)).max(initial=0.0)
            scale = np.abs(stack).max(initial=0.0)
            if dev > 1e-10 * max(1.0, scale):
                raise ValueError(
                    f"LMI coefficient is not Hermitian (deviation {dev:.3e})"
                )
            return cr, idx, _embed_stack(stack)
        return cr, np.zeros(0, dtype=np.intp), np.zeros((0, 2 * self.dim, 2 * self.dim))


# --------------------------------------------------------------------------
# variable handles
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexMatrixVar:
    """A complex m x n matrix variable: real parts first (vec order), then imag."""

    offset: int
    m: int
    n: int

    @property
    def size(self) -> int:
        return 2 * self.m * self.n

    def indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.size, dtype=np.intp)

    def value(self, x: np.ndarray) -> np.ndarray:
        mn = self.m * self.n
        re = np.asarray(x[self.offset:self.offset + mn])
        im = np.asarray(x[self.offset + mn:self.offset + 2 * mn])
        return (re + 1j * im).reshape(self.m, self.n, order="F")

    def sandwich(self, a, b) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients of the affine map X -> A @ X @ B.

        Returns (indices, stack) where stack[i] is the (pa, qb) complex
        coefficient of real variable indices[i].
        """
        a = np.asarray(a, dtype=np.complex128)
        b = np.asarray(b, dtype=np.complex128)
        if a.shape[1] != self.m or b.shape[0] != self.n:
            raise ValueError("sandwich dimensions do not match the variable")
        # coefficient of X_{ij} is outer(A[:, i], B[j, :]); vec order is
        # (i + j*m), i.e. j slowest -> einsum output (j, i, p, q)
        base = np.einsum("pi,jq->jipq", a, b).reshape(self.m * self.n, a.shape[0], b.shape[1])
        stack = np.concatenate([base, 1j * base], axis=0)
        return self.indices(), stack


@dataclass(frozen=True)
class HermitianMatrixVar:
    """A complex Hermitian p x p matrix variable over p^2 real parameters.

    Parameter order: p diagonal entries, then (re, im) pairs for each
    upper-triangle position in row-major order.
    """

    offset: int
    p: int

    @property
    def size(self) -> int:
        return self.p * self.p

    def indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.size, dtype=np.intp)

    def basis(self) -> np.ndarray:
        """Hermitian coefficient stack matching the parameter order."""
        p = self.p
        mats = np.zeros((p * p, p, p), dtype=np.complex128)
        for i in range(p):
            mats[i, i, i] = 1.0
        k = p
        for i in range(p):
            for j in range(i + 1, p):
                mats[k, i, j] = 1.0
                mats[k, j, i] = 1.0
                mats[k + 1, i, j] = 1j
                mats[k + 1, j, i] = -1j
                k += 2
        return mats

    def diag_indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.p, dtype=np.intp)

    def value(self, x: np.ndarray) -> np.ndarray:
        p = self.p
        out = np.zeros((p, p), dtype=np.complex128)
        vals = np.asarray(x[self.offset:self.offset + self.size])
        out[np.arange(p), np.arange(p)] = vals[:p]
        k = p
        for i in range(p):
            for j in range(i + 1, p):
                out[i, j] = vals[k] + 1j * vals[k + 1]
                out[j, i] = vals[k] - 1j * vals[k + 1]
                k += 2
        return out


# --------------------------------------------------------------------------
# the program
# --------------------------------------------------------------------------

@dataclass
class _SocConstraint:
    indices: np.ndarray      # active variable indices
    coef: np.ndarray         # (dim, n_active); row 0 is the cone head t
    const: np.ndarray        # (dim,)


@dataclass
class _PsdBlock:
    dim: int
    const: np.ndarray        # (dim, dim) real symmetric
    indices: np.ndarray      # (k,) possibly repeated
    stack: np.ndarray        # (k, dim, dim) real symmetric coefficients


@dataclass
class _EqRow:
    indices: np.ndarray
    coef: np.ndarray
    rhs: float


class ConicProgram:
    """Builder + container for one conic program (see module docstring)."""

    def __init__(self):
        self.var_count = 0
        self.obj_indices: np.ndarray = np.zeros(0, dtype=np.intp)
        self.obj_coef: np.ndarray = np.zeros(0)
        self.obj_offset: float = 0.0
        self.psd_blocks: list[_PsdBlock] = []
        self.soc_constraints: list[_SocConstraint] = []
        self.eq_constraints: list[_EqRow] = []

    # -- variable allocation ------------------------------------------------

    def new_vars(self, k: int) -> int:
        off = self.var_count
        self.var_count += int(k)
        return off

    def new_scalar(self) -> int:
        return self.new_vars(1)

    def new_complex_matrix(self, m: int, n: int) -> ComplexMatrixVar:
        return ComplexMatrixVar(self.new_vars(2 * m * n), m, n)

    def new_hermitian(self, p: int) -> HermitianMatrixVar:
        return HermitianMatrixVar(self.new_vars(p * p), p)

    # -- objective and constraints -------------------------------------------

    def _check_indices(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.var_count):
            raise SolverError("affine expression references undeclared variables")
        return idx

    def minimize(self, indices, coef, offset: float = 0.0) -> None:
        self.obj_indices = self._check_indices(indices)
        self.obj_coef = np.asarray(coef, dtype=float).reshape(-1)
        self.obj_offset = float(offset)

    def add_eq(self, indices, coef, rhs: float) -> None:
        idx = self._check_indices(indices)
        self.eq_constraints.append(
            _EqRow(idx, np.asarray(coef, dtype=float).reshape(-1), float(rhs))
        )

    def add_nonneg(self, indices, coef, const: float) -> None:
        """Require const + sum(coef * x) >= 0 (a one-dimensional cone)."""
        idx = self._check_indices(indices)
        self.soc_constraints.append(_SocConstraint(
            idx,
            np.asarray(coef, dtype=float).reshape(1, -1),
            np.array([float(const)]),
        ))

    def add_soc(self, head_indices, head_coef, head_const,
                tail_indices, tail_coef, tail_const) -> None:
        """Require ||tail(x)|| <= head(x) for affine head/tail expressions."""
        hi = self._check_indices(head_indices)
        ti = self._check_indices(tail_indices)
        tc = np.atleast_2d(np.asarray(tail_coef, dtype=float))
        tconst = np.asarray(tail_const, dtype=float).reshape(-1)
        if tc.shape[0] != tconst.size:
            raise SolverError("tail coefficient/constant dimensions disagree")
        dim = 1 + tconst.size
        idx = np.concatenate([hi, ti])
        coef = np.zeros((dim, idx.size))
        coef[0, :hi.size] = np.asarray(head_coef, dtype=float).reshape(-1)
        coef[1:, hi.size:] = tc
        const = np.concatenate([[float(head_const)], tconst])
        self.soc_constraints.append(_SocConstraint(idx, coef, const))

    def add_soc_complex(self, head_indices, head_coef, head_const,
                        var, tail_coef, tail_const) -> None:
        """SOC whose tail is a complex affine map of complex matrix variables.

        ``var`` is a ComplexMatrixVar or a sequence of them; ``tail_coef``
        is the matching complex (q, m*n) coefficient matrix (or sequence)
        acting on vec(var).  The real program stacks the real parts of the
        tail over the imaginary parts, which leaves the Euclidean norm
        unchanged.
        """
        if isinstance(var, ComplexMatrixVar):
            var, tail_coef = [var], [tail_coef]
        tcs = [np.atleast_2d(np.asarray(t, dtype=np.complex128)) for t in tail_coef]
        if len(tcs) != len(var):
            raise SolverError("one tail coefficient block per complex variable")
        tconst = np.asarray(tail_const, dtype=np.complex128).reshape(-1)
        for v, tc in zip(var, tcs):
            if tc.shape[1] != v.m * v.n:
                raise SolverError("tail coefficient width must equal vec(var) size")
            if tc.shape[0] != tconst.size:
                raise SolverError("tail coefficient/constant dimensions disagree")
        coef = np.hstack([np.vstack([np.hstack([tc.real, -tc.imag]),
                                     np.hstack([tc.imag, tc.real])])
                          for tc in tcs])
        self.add_soc(
            head_indices, head_coef, head_const,
            np.concatenate([v.indices() for v in var]), coef,
            np.concatenate([tconst.real, tconst.imag]),
        )

    def add_psd(self, const, indices, stack) -> None:
        """Add a real symmetric PSD block const + sum_i x_{idx[i]} stack[i]."""
        c = np.asarray(const, dtype=float)
        idx = self._check_indices(indices)
        st = np.asarray(stack, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise SolverError("PSD block constant must be square with dim >= 1")
        if st.shape[0] != idx.size:
            raise SolverError("PSD coefficient stack/index length mismatch")
        self.psd_blocks.append(_PsdBlock(c.shape[0], 0.5 * (c + c.T), idx, st))

    def add_psd_hermitian(self, lmi: HermitianLMI) -> None:
        const, idx, stack = lmi.embedded()
        self.add_psd(const, idx, stack)

    # -- plumbing -------------------------------------------------------------

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.var_count)
        np.add.at(c, self.obj_indices, self.obj_coef)
        return c

    def solve(self, rtol: float = 1e-7, max_iter: int = 200,
              target_rtol: float | None = None, trace: bool = False) -> "ConicSolution":
        """Solve the program.

        ``rtol`` is the acceptance tolerance tied to the Optimal status;
        ``target_rtol`` (default ``rtol``) lets a caller push iterations
        further than the acceptance level when extra accuracy is cheap.
        """
        return _HsdSolver(self, rtol=rtol, max_iter=max_iter,
                          target_rtol=target_rtol, keep_trace=trace).run()

    def dump_text(self) -> str:
        """Plain-text standard-form listing with 17-significant-digit data."""
        f = lambda v: format(float(v), ".17g")
        out = [f"variables {self.var_count}"]
        out.append("objective " + f(self.obj_offset))
        for i, v in zip(self.obj_indices, self.obj_coef):
            out.append(f"  c {int(i)} {f(v)}")
        for r, row in enumerate(self.eq_constraints):
            out.append(f"eq {r} rhs {f(row.rhs)}")
            for i, v in zip(row.indices, row.coef):
                out.append(f"  a {int(i)} {f(v)}")
        for s, soc in enumerate(self.soc_constraints):
            out.append(f"soc {s} dim {soc.const.size}")
            for r in range(soc.const.size):
                out.append(f"  const {r} {f(soc.const[r])}")
                for i, v in zip(soc.indices, soc.coef[r]):
                    if v != 0.0:
                        out.append(f"  g {r} {int(i)} {f(v)}")
        for b, blk in enumerate(self.psd_blocks):
            out.append(f"psd {b} dim {blk.dim}")
            rows, cols = np.nonzero(np.triu(blk.const != 0.0))
            for r, cc in zip(rows, cols):
                out.append(f"  const {int(r)} {int(cc)} {f(blk.const[r, cc])}")
            for i, mat in zip(blk.indices, blk.stack):
                rows, cols = np.nonzero(np.triu(mat != 0.0))
                for r, cc in zip(rows, cols):
                    out.append(f"  m {int(i)} {int(r)} {int(cc)} {f(mat[r, cc])}")
        return "\n".join(out) + "\n"


@dataclass
class ConicSolution:
    primal_values: np.ndarray
    objective_value: float
    duality_gap: float
    kkt_residual: float
    status: str
    iterations: int
    detail: str = ""
    trace: list = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.primal_values


# --------------------------------------------------------------------------
# svec helpers
# --------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)


def _svec_meta(p: int):
    iu = np.triu_indices(p)
    w = np.where(iu[0] == iu[1], 1.0, _SQRT2)
    diag = np.arange(p)
    diag_pos = np.where(iu[0] == iu[1])[0]
    return iu, w, diag, diag_pos


def svec(mat: np.ndarray, meta) -> np.ndarray:
    iu, w = meta[0], meta[1]
    return mat[..., iu[0], iu[1]] * w


def smat(v: np.ndarray, p: int, meta) -> np.ndarray:
    iu, w, diag, diag_pos = meta
    lead = v.shape[:-1]
    out = np.zeros(lead + (p, p))
    half = v / w
    out[..., iu[0], iu[1]] = half
    out[..., iu[1], iu[0]] = half
    out[..., diag, diag] = v[..., diag_pos]
    return out


# --------------------------------------------------------------------------
# cone workspaces
# --------------------------------------------------------------------------

class _LpCone:
    """Nonnegative orthant collecting every one-dimensional constraint."""

    def __init__(self, G: np.ndarray, h: np.ndarray):
        self.G, self.h = G, h
        self.dim = h.size
        self.degree = h.size

    def identity(self):
        return np.ones(self.dim)

    def update_scaling(self, s, z):
        self.w = np.sqrt(s / z)
        self.lmbda = np.sqrt(s * z)

    def scale_rows(self, mat):       # W^{-1} applied to rows of G / vectors
        return mat / self.w[:, None] if mat.ndim == 2 else mat / self.w

    def apply_w(self, v):            # W v
        return self.w * v

    def apply_winv_t(self, v):       # W^{-T} v  (= W^{-1}, diagonal)
        return v / self.w

    def apply_winv(self, v):         # W^{-1} v
        return v / self.w

    def apply_wt(self, v):           # W^T v
        return self.w * v

    def apply_wtw(self, v):          # W^T W v
        return self.w * self.w * v

    def apply_wtw_inv(self, v):      # (W^T W)^{-1} v
        return v / (self.w * self.w)

    def jordan_solve(self, d):       # solve lambda o g = d
        return d / self.lmbda

    def jordan_prod(self, u, v):
        return u * v

    def max_step(self, dir_scaled):
        neg = dir_scaled < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-self.lmbda[neg] / dir_scaled[neg]))


class _SocCone:
    def __init__(self, G: np.ndarray, h: np.ndarray):
        self.G, self.h = G, h
        self.dim = h.size
        self.degree = 1

    def identity(self):
        e = np.zeros(self.dim)
        e[0] = 1.0
        return e

    @staticmethod
    def _jnorm2(v):
        # (v0 - |v1|)(v0 + |v1|) avoids the catastrophic cancellation of
        # v0^2 - |v1|^2 for near-boundary points
        t = float(np.linalg.norm(v[1:]))
        return (v[0] - t) * (v[0] + t)

    def update_scaling(self, s, z):
        rho2, zeta2 = self._jnorm2(s), self._jnorm2(z)
        if rho2 <= 0 or zeta2 <= 0 or s[0] <= 0 or z[0] <= 0:
            raise FloatingPointError("SOC iterate left the cone interior")
        rho, zeta = math.sqrt(rho2), math.sqrt(zeta2)
        sn, zn = s / rho, z / zeta
        gamma = math.sqrt((1.0 + float(sn @ zn)) / 2.0)
        wbar = np.empty(self.dim)
        wbar[0] = (sn[0] + zn[0]) / (2 * gamma)
        wbar[1:] = (sn[1:] - zn[1:]) / (2 * gamma)
        self.eta = math.sqrt(rho / zeta)
        self.wbar = wbar
        self.lmbda = self.apply_w(z)

    def _h_apply(self, v):
        w0, wr = self.wbar[0], self.wbar[1:]
        if v.ndim == 1:
            head = w0 * v[0] + wr @ v[1:]
            tail = v[0] * wr + v[1:] + wr * ((wr @ v[1:]) / (1 + w0))
            return np.concatenate([[head], tail])
        head = w0 * v[0] + wr @ v[1:]
        tail = np.outer(wr, v[0]) + v[1:] + np.outer(wr, (wr @ v[1:]) / (1 + w0))
        return np.vstack([head, tail])

    def _hinv_apply(self, v):
        j = v.copy()
        j[1:] = -j[1:]
        out = self._h_apply(j)
        out[1:] = -out[1:]
        return out

    def scale_rows(self, mat):
        return self._hinv_apply(mat) / self.eta

    def apply_w(self, v):
        return self.eta * self._h_apply(v)

    def apply_winv_t(self, v):
        return self._hinv_apply(v) / self.eta

    def apply_winv(self, v):
        return self._hinv_apply(v) / self.eta

    def apply_wt(self, v):
        return self.eta * self._h_apply(v)

    def apply_wtw(self, v):
        return self.eta ** 2 * self._h_apply(self._h_apply(v))

    def apply_wtw_inv(self, v):
        return self._hinv_apply(self._hinv_apply(v)) / self.eta ** 2

    def jordan_solve(self, d):
        a, b = self.lmbda[0], self.lmbda[1:]
        det = a * a - float(b @ b)
        g0 = (a * d[0] - b @ d[1:]) / det
        gr = (d[1:] - g0 * b) / a
        return np.concatenate([[g0], gr])

    def jordan_prod(self, u, v):
        return np.concatenate([[u @ v], u[0] * v[1:] + v[0] * u[1:]])

    def max_step(self, dir_scaled):
        lm = self.lmbda
        a = self._jnorm2(dir_scaled)
        b = 2.0 * (lm[0] * dir_scaled[0] - lm[1:] @ dir_scaled[1:])
        c = self._jnorm2(lm)
        roots = []
        if abs(a) < 1e-300:
            if b < 0:
                roots.append(-c / b)
        else:
            disc = b * b - 4 * a * c
            if disc >= 0:
                sq = math.sqrt(disc)
                for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
                    if r > 0:
                        roots.append(r)
        head_cross = -lm[0] / dir_scaled[0] if dir_scaled[0] < 0 else np.inf
        candidates = [r for r in roots if r > 0] + [head_cross]
        return float(min(candidates)) if candidates else np.inf


class _PsdCone:
    def __init__(self, p: int, G_cols: np.ndarray, h: np.ndarray,
                 active: np.ndarray, mats: np.ndarray):
        self.p = p
        self.meta = _svec_meta(p)
        self.G = G_cols              # (svec_dim, n_active)
        self.h = h                   # (svec_dim,)
        self.active = active         # active variable indices (unique)
        self.mats = mats             # (n_active, p, p) = smat of G columns
        self.dim = p * (p + 1) // 2
        self.degree = p

    def identity(self):
        return svec(np.eye(self.p), self.meta)

    def _chol(self, m):
        try:
            return np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            w, u = np.linalg.eigh(0.5 * (m + m.T))
            floor = 1e-14 * max(abs(w[-1]), 1e-300)
            if w[0] < -1e-10 * max(abs(w[-1]), 1.0):
                raise FloatingPointError("PSD iterate left the cone interior")
            w = np.clip(w, floor, None)
            return np.linalg.cholesky((u * w) @ u.T)

    def update_scaling(self, s, z):
        S = smat(s, self.p, self.meta)
        Z = smat(z, self.p, self.meta)
        Ls = self._chol(S)
        Lz = self._chol(Z)
        prod = Lz.T @ Ls
        try:
            u, sig, vt = np.linalg.svd(prod)
        except np.linalg.LinAlgError:
            # the divide-and-conquer driver gives up on badly scaled
            # matrices where the QR-based one still succeeds
            try:
                u, sig, vt = scipy.linalg.svd(prod, lapack_driver="gesvd")
            except (scipy.linalg.LinAlgError, ValueError) as exc:
                raise FloatingPointError(f"PSD scaling SVD failed: {exc}") from exc
        sq = np.sqrt(sig)
        self.R = Ls @ (vt.T / sq)
        self.Rinv = (vt.T * sq).T @ scipy.linalg.solve_triangular(
            Ls, np.eye(self.p), lower=True)
        self._rrt = self.R @ self.R.T
        self._rri = self.Rinv.T @ self.Rinv
        self.lmbda_diag = sig
        self.lmbda = svec(np.diag(sig), self.meta)
        lsum = sig[:, None] + sig[None, :]
        self._jordan_denom = lsum

    def scale_rows(self, v):
        """W^{-1} congruence: svec(Rinv @ smat(col) @ Rinv^T) column-wise."""
        if v.ndim == 1:
            m = smat(v, self.p, self.meta)
            return svec(self.Rinv @ m @ self.Rinv.T, self.meta)
        # v is the full (svec_dim, k) column block: use the cached mats when
        # the caller passes None (solver fast path handles G separately)
        ms = smat(v.T, self.p, self.meta)
        out = np.matmul(self.Rinv, np.matmul(ms, self.Rinv.T))
        return svec(out, self.meta).T

    def scaled_G(self):
        # one flat GEMM per side beats a loop of tiny batched matmuls; the
        # second product lands already transposed, which is free because a
        # congruence of a symmetric matrix is symmetric
        p = self.p
        na = self.mats.shape[0]
        t1 = (self.mats.reshape(-1, p) @ self.Rinv.T).reshape(na, p, p)
        t2 = (t1.transpose(0, 2, 1).reshape(-1, p) @ self.Rinv.T).reshape(na, p, p)
        return svec(t2, self.meta).T     # (svec_dim, n_active)

    def _cong(self, v, m_left, m_right):
        m = smat(v, self.p, self.meta)
        return svec(m_left @ m @ m_right, self.meta)

    def apply_w(self, v):                 # R^T Z R
        return self._cong(v, self.R.T, self.R)

    def apply_winv_t(self, v):            # Rinv S Rinv^T
        return self._cong(v, self.Rinv, self.Rinv.T)

    def apply_winv(self, v):              # Rinv^T Z Rinv
        return self._cong(v, self.Rinv.T, self.Rinv)

    def apply_wt(self, v):                # R S R^T
        return self._cong(v, self.R, self.R.T)

    def apply_wtw(self, v):               # R R^T Z R R^T
        m = smat(v, self.p, self.meta)
        return svec(self._rrt @ m @ self._rrt, self.meta)

    def apply_wtw_inv(self, v):           # (W^T W)^{-1} v
        m = smat(v, self.p, self.meta)
        return svec(self._rri @ m @ self._rri, self.meta)

    def jordan_solve(self, d):
        m = smat(d, self.p, self.meta)
        return svec(2.0 * m / self._jordan_denom, self.meta)

    def jordan_prod(self, u, v):
        mu = smat(u, self.p, self.meta)
        mv = smat(v, self.p, self.meta)
        return svec(0.5 * (mu @ mv + mv @ mu), self.meta)

    def max_step(self, dir_scaled):
        m = smat(dir_scaled, self.p, self.meta)
        inv_sqrt = 1.0 / np.sqrt(self.lmbda_diag)
        scaled = m * inv_sqrt[:, None] * inv_sqrt[None, :]
        w = np.linalg.eigvalsh(0.5 * (scaled + scaled.T))
        wmin = float(w[0])
        return np.inf if wmin >= 0 else -1.0 / wmin


# --------------------------------------------------------------------------
# the homogeneous self-dual interior-point solver
# --------------------------------------------------------------------------

class _HsdSolver:
    def __init__(self, prog: ConicProgram, rtol: float, max_iter: int,
                 target_rtol: float | None, keep_trace: bool):
        if prog.var_count < 1:
            raise SolverError("program has no variables")
        self.prog = prog
        self.rtol = float(rtol)
        self.target = float(target_rtol) if target_rtol is not None else float(rtol)
        self.target = min(self.target, self.rtol)
        self.max_iter = int(max_iter)
        self.keep_trace = keep_trace
        self._build()

    # -- data assembly -------------------------------------------------------

    def _build(self):
        p = self.prog
        n = p.var_count
        self.n = n
        self.c = p.objective_vector()

        lp_rows_G, lp_rows_h = [], []
        soc_list = []
        for soc in p.soc_constraints:
            if soc.const.size == 1:
                row = np.zeros(n)
                np.add.at(row, soc.indices, soc.coef[0])
                lp_rows_G.append(-row)
                lp_rows_h.append(soc.const[0])
            else:
                G = np.zeros((soc.const.size, n))
                for r in range(soc.const.size):
                    np.add.at(G[r], soc.indices, -soc.coef[r])
                soc_list.append((G, soc.const.copy()))

        self.cones: list = []
        if lp_rows_G:
            self.cones.append(_LpCone(np.vstack(lp_rows_G), np.array(lp_rows_h)))
        for G, h in soc_list:
            self.cones.append(_SocCone(G, h))

        for blk in p.psd_blocks:
            meta = _svec_meta(blk.dim)
            active = np.unique(blk.indices)
            pos = {int(v): i for i, v in enumerate(active)}
            mats = np.zeros((active.size, blk.dim, blk.dim))
            for i, m in zip(blk.indices, blk.stack):
                mats[pos[int(i)]] -= 0.5 * (m + m.T)   # G = -coeffs
            G_cols = svec(mats, meta).T
            h = svec(0.5 * (blk.const + blk.const.T), meta)
            self.cones.append(_PsdCone(blk.dim, G_cols, h, active, mats))

        if not self.cones:
            raise SolverError("program has no conic constraints")

        self.m = sum(c_.dim for c_ in self.cones)
        self.degree = sum(c_.degree for c_ in self.cones)

        offs = []
        off = 0
        for c_ in self.cones:
            offs.append((off, off + c_.dim))
            off += c_.dim
        self.offs = offs

        self.h = np.concatenate([c_.h for c_ in self.cones])

        meq = len(p.eq_constraints)
        self.meq = meq
        A = np.zeros((meq, n))
        b = np.zeros(meq)
        for r, row in enumerate(p.eq_constraints):
            np.add.at(A[r], row.indices, row.coef)
            b[r] = row.rhs
        self.A, self.b = A, b

        # dense G for residual computations (rows grouped by cone)
        Gd = np.zeros((self.m, n))
        for c_, (lo, hi) in zip(self.cones, self.offs):
            if isinstance(c_, _PsdCone):
                Gd[lo:hi, c_.active] = c_.G
            else:
                Gd[lo:hi] = c_.G
        self.Gdense = Gd

        self.norm_b = max(1.0, float(np.linalg.norm(b))) if meq else 1.0
        self.norm_h = max(1.0, float(np.linalg.norm(self.h)))
        self.norm_c = max(1.0, float(np.linalg.norm(self.c)))

    # -- cone-wise helpers ----------------------------------------------------

    def _percone(self, v):
        return [v[lo:hi] for lo, hi in self.offs]

    def _apply(self, name, v):
        out = np.empty_like(v)
        for c_, (lo, hi) in zip(self.cones, self.offs):
            out[lo:hi] = getattr(c_, name)(v[lo:hi])
        return out

    def _jordan_solve(self, d):
        out = np.empty_like(d)
        for c_, (lo, hi) in zip(self.cones, self.offs):
            out[lo:hi] = c_.jordan_solve(d[lo:hi])
        return out

    def _jordan_prod(self, u, v):
        out = np.empty_like(u)
        for c_, (lo, hi) in zip(self.cones, self.offs):
            out[lo:hi] = c_.jordan_prod(u[lo:hi], v[lo:hi])
        return out

    def _identity_vec(self):
        return np.concatenate([c_.identity() for c_ in self.cones])

    def _max_step(self, *dirs_scaled):
        amax = np.inf
        for d in dirs_scaled:
            for c_, (lo, hi) in zip(self.cones, self.offs):
                amax = min(amax, c_.max_step(d[lo:hi]))
        return amax

    # -- main loop -------------------------------------------------------------

    def run(self) -> ConicSolution:
        n, m, meq = self.n, self.m, self.meq
        c, h, b, A, G = self.c, self.h, self.b, self.A, self.Gdense

        x = np.zeros(n)
        y = np.zeros(meq)
        s = self._identity_vec()
        z = self._identity_vec()
        tau, kappa = 1.0, 1.0
        e_vec = self._identity_vec()

        best = None
        best_any = None     # best-quality iterate regardless of tolerance
        stalled = 0
        trace = []
        status, detail, iters = ConicStatus.MAX_ITER, "", 0
        tiny_steps = 0

        for it in range(self.max_iter + 1):
            iters = it
            # residuals of the homogeneous model
            r_dual = A.T @ y + G.T @ z + c * tau if meq else G.T @ z + c * tau
            r_pri = (-A @ x + b * tau) if meq else np.zeros(0)
            r_slack = -G @ x + h * tau - s
            r_gap = -float(c @ x) - (float(b @ y) if meq else 0.0) - float(h @ z) - kappa

            # convergence metrics at the normalized point
            xt, yt = x / tau, y / tau
            pobj = float(c @ xt) + self.prog.obj_offset
            dobj = -(float(b @ yt) if meq else 0.0) - float(h @ z) / tau + self.prog.obj_offset
            pres = float(np.linalg.norm(r_slack / tau)) / self.norm_h
            if meq:
                pres = max(pres, float(np.linalg.norm(r_pri / tau)) / self.norm_b)
            dres = float(np.linalg.norm(r_dual / tau)) / self.norm_c
            gap_abs = abs(pobj - dobj)
            kkt = max(pres, dres)
            rel_sc = 1.0 + abs(pobj)

            if self.keep_trace:
                trace.append((pobj, dobj, pres, dres))

            ok_accept = kkt <= self.rtol and gap_abs <= self.rtol * rel_sc
            ok_target = kkt <= self.target and gap_abs <= self.target * rel_sc
            # condensation-induced error matters once the NT scaling is
            # stretched, which tracks complementarity rather than
            # feasibility: a corrupted endgame step can throw kkt out while
            # mu stays tiny, and recovery needs refined directions
            mu_now = (float(s @ z) + tau * kappa) / (self.degree + 1)
            refine = kkt <= 1e-3 or mu_now <= 1e-5
            quality = max(kkt, gap_abs / rel_sc)
            if best_any is None or quality < best_any[0]:
                best_any = (quality, x.copy(), tau, pobj, gap_abs, kkt)
            if ok_accept and (best is None or gap_abs + kkt < best[0]):
                best = (gap_abs + kkt, x.copy(), tau, pobj, gap_abs, kkt)
                stalled = 0
            elif best is not None:
                stalled += 1
            if ok_target:
                status, detail = ConicStatus.OPTIMAL, "converged to target tolerance"
                break
            if stalled >= 12:
                # acceptable but the push toward the tighter target has
                # flatlined; stop burning iterations
                break

            # infeasibility certificates
            by_hz = (float(b @ y) if meq else 0.0) + float(h @ z)
            if by_hz < -1e-10:
                cert = np.linalg.norm(A.T @ y + G.T @ z) if meq else np.linalg.norm(G.T @ z)
                if cert / (-by_hz) <= 1e-7 * self.norm_c and tau <= 1e-6 * max(1.0, kappa):
                    status = ConicStatus.INFEASIBLE
                    detail = "primal infeasibility certificate found"
                    break
            ctx = float(c @ x)
            if ctx < -1e-10:
                cert = np.linalg.norm(G @ x + s)
                cert_eq = np.linalg.norm(A @ x) if meq else 0.0
                if max(cert, cert_eq) / (-ctx) <= 1e-7 * self.norm_h and tau <= 1e-6 * max(1.0, kappa):
                    status = ConicStatus.INFEASIBLE
                    detail = "dual infeasibility certificate found (primal unbounded)"
                    break

            if it == self.max_iter:
                break

            # Nesterov-Todd scalings
            try:
                for c_, (lo, hi) in zip(self.cones, self.offs):
                    c_.update_scaling(s[lo:hi], z[lo:hi])
            except FloatingPointError as exc:
                status, detail = ConicStatus.NUMERICAL_FAILURE, str(exc)
                break

            lmbda = np.concatenate([c_.lmbda for c_ in self.cones])
            mu = (float(s @ z) + tau * kappa) / (self.degree + 1)

            # scaled G and Schur complement
            with np.errstate(over="ignore", invalid="ignore"):
                Y = np.zeros((m, n))
                for c_, (lo, hi) in zip(self.cones, self.offs):
                    if isinstance(c_, _PsdCone):
                        Y[lo:hi, c_.active] = c_.scaled_G()
                    else:
                        Y[lo:hi] = c_.scale_rows(c_.G)
                schur = Y.T @ Y

            if meq:
                kkt_mat = np.zeros((n + meq, n + meq))
                kkt_mat[:n, :n] = schur
                kkt_mat[:n, n:] = A.T
                kkt_mat[n:, :n] = A
                reg_sign = np.concatenate([np.ones(n), -np.ones(meq)])
            else:
                kkt_mat = schur
                reg_sign = np.ones(n)
            diag_scale = max(1.0, float(np.abs(np.diag(kkt_mat)).max(initial=0.0)))

            fac = None
            fac_kind = ""
            if not np.all(np.isfinite(kkt_mat)):
                status, detail = ConicStatus.NUMERICAL_FAILURE, "KKT matrix overflowed"
                break
            if not meq:
                try:
                    fac, fac_kind = scipy.linalg.cho_factor(kkt_mat), "cho"
                except (scipy.linalg.LinAlgError, ValueError):
                    fac = None
            if fac is None:
                # static regularization rescues degenerate-face instances;
                # one refinement pass below repairs the directions
                for delta in (0.0, 1e-12 * diag_scale, 1e-8 * diag_scale):
                    km = kkt_mat + np.diag(reg_sign * delta) if delta else kkt_mat
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore")
                            cand = scipy.linalg.lu_factor(km)
                    except (scipy.linalg.LinAlgError, ValueError):
                        continue
                    dpiv = np.abs(np.diag(cand[0]))
                    if dpiv.size and np.all(np.isfinite(dpiv)) and \
                            dpiv.min() > 1e-16 * max(dpiv.max(), 1e-300):
                        fac, fac_kind = cand, "lu"
                        break
            if fac is None:
                status, detail = ConicStatus.NUMERICAL_FAILURE, "KKT pivot breakdown"
                break

            def kkt_solve_raw(rhs):
                if fac_kind == "cho":
                    return scipy.linalg.cho_solve(fac, rhs)
                return scipy.linalg.lu_solve(fac, rhs)

            def solve_kkt(rx, ry):
                rhs = np.concatenate([rx, ry]) if meq else rx
                sol = kkt_solve_raw(rhs)
                # iterative refinement until the residual stops improving;
                # the endgame Schur complement is near-singular and a single
                # pass is not always enough (and a regularized LU factor
                # always needs at least one repair pass)
                if refine or fac_kind == "lu":
                    res = rhs - kkt_mat @ sol
                    res_norm = float(np.linalg.norm(res))
                    floor = 1e-14 * max(float(np.linalg.norm(rhs)), 1.0)
                    for _ in range(4):
                        if res_norm <= floor or not np.isfinite(res_norm):
                            break
                        cand = sol + kkt_solve_raw(res)
                        cres = rhs - kkt_mat @ cand
                        cnorm = float(np.linalg.norm(cres))
                        if cnorm >= res_norm:
                            break
                        sol, res, res_norm = cand, cres, cnorm
                if not np.all(np.isfinite(sol)):
                    raise FloatingPointError("KKT solve produced non-finite values")
                return np.split(sol, [n]) if meq else (sol, np.zeros(0))

            def newton_raw(e1, e2, e3):
                t3 = self._apply("scale_rows", e3)       # W^{-T} e3
                rhs_x = e1 - Y.T @ t3
                dx, dy = solve_kkt(rhs_x, -e2)
                dz = self._apply("apply_wtw_inv", e3 + G @ dx)
                return dx, dy, dz

            def block_residuals(e1, e2, e3, dx, dy, dz):
                # rows of the uncondensed system:
                #   G'dz (+ A'dy) = e1 ; A dx = -e2 ; G dx - W'W dz = -e3
                rA = e1 - G.T @ dz
                if meq:
                    rA = rA - A.T @ dy
                rB = -e3 - G @ dx + self._apply("apply_wtw", dz)
                rE = (-e2 - A @ dx) if meq else np.zeros(0)
                return rA, rE, rB

            esc_cache: dict = {}

            def escalated_solve(e1, e2, e3):
                # the Schur condensation squares the NT conditioning; the
                # scaled quasidefinite system [[0 A' Y'],[A 0 0],[Y 0 -I]]
                # only pays it once, at the price of an (n+meq+m) LU
                if "fac" not in esc_cache:
                    nn = n + meq + m
                    full = np.zeros((nn, nn))
                    if meq:
                        full[:n, n:n + meq] = A.T
                        full[n:n + meq, :n] = A
                    full[:n, n + meq:] = Y.T
                    full[n + meq:, :n] = Y
                    ii = np.arange(n + meq, nn)
                    full[ii, ii] = -1.0
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore")
                            esc_cache["fac"] = scipy.linalg.lu_factor(full)
                    except (scipy.linalg.LinAlgError, ValueError):
                        esc_cache["fac"] = None
                if esc_cache["fac"] is None:
                    return None
                t3 = self._apply("scale_rows", e3)
                rhs = np.concatenate([e1, -e2, -t3]) if meq else \
                    np.concatenate([e1, -t3])
                sol = scipy.linalg.lu_solve(esc_cache["fac"], rhs)
                if not np.all(np.isfinite(sol)):
                    return None
                dx, dzt = sol[:n], sol[n + meq:]
                dy = sol[n:n + meq] if meq else np.zeros(0)
                return dx, dy, self._apply("apply_winv", dzt)

            def newton(e1, e2, e3):
                """Solve the 3x3 block system with refinement at the
                uncondensed level; the Schur condensation squares the NT
                conditioning and leaves the recovered dz too inaccurate in
                the endgame without it."""
                dx, dy, dz = newton_raw(e1, e2, e3)
                if not refine:
                    return dx, dy, dz
                scale = max(float(np.linalg.norm(e1)),
                            float(np.linalg.norm(e3)), 1.0)

                def residual_norm(px, py, pz):
                    rA, rE, rB = block_residuals(e1, e2, e3, px, py, pz)
                    rnorm = max(float(np.linalg.norm(rA)),
                                float(np.linalg.norm(rB)),
                                float(np.linalg.norm(rE)) if meq else 0.0)
                    return rA, rE, rB, rnorm

                def refine_loop(raw, dx, dy, dz):
                    rA, rE, rB, rnorm = residual_norm(dx, dy, dz)
                    for _ in range(3):
                        if not np.isfinite(rnorm) or rnorm <= 1e-13 * scale:
                            break
                        step = raw(rA, -rE, -rB)
                        if step is None:
                            break
                        ddx, ddy, ddz = step
                        nx = dx + ddx
                        ny = dy + ddy if meq else dy
                        nz = dz + ddz
                        rA2, rE2, rB2, rnorm2 = residual_norm(nx, ny, nz)
                        if rnorm2 >= rnorm:
                            break
                        dx, dy, dz = nx, ny, nz
                        rA, rE, rB, rnorm = rA2, rE2, rB2, rnorm2
                    return dx, dy, dz, rnorm

                dx, dy, dz, rnorm = refine_loop(newton_raw, dx, dy, dz)
                # escalate only where a sloppy direction can actually corrupt
                # the iterate (deep complementarity, residual large against
                # the current feasibility level) and where the full-system
                # LU stays affordable; large instances keep the best-iterate
                # safety net instead
                if rnorm > max(1e-9, 0.03 * kkt) * scale and mu_now <= 1e-5 \
                        and n + meq + m <= 1200:
                    cand = escalated_solve(e1, e2, e3)
                    if cand is not None:
                        cx, cy, cz, cnorm = refine_loop(escalated_solve, *cand)
                        if cnorm < rnorm:
                            dx, dy, dz = cx, cy, cz
                return dx, dy, dz

            # direction for the tau column (constant within the iteration)
            try:
                vx, vy, vz = newton(-c, -b if meq else np.zeros(0), -h)
            except FloatingPointError as exc:
                status, detail = ConicStatus.NUMERICAL_FAILURE, str(exc)
                break
            xi1 = float(c @ vx) + (float(b @ vy) if meq else 0.0) + float(h @ vz)
            denom = kappa / tau - xi1
            if not np.isfinite(denom) or abs(denom) < 1e-300:
                status, detail = ConicStatus.NUMERICAL_FAILURE, "singular tau pivot"
                break

            def full_step(f, ds_scaled_rhs, dkappa_rhs):
                g = self._jordan_solve(ds_scaled_rhs)
                wtg = self._apply("apply_wt", g)
                d1 = -f * r_dual
                d2 = -f * r_pri
                d3p = -f * r_slack + wtg
                d4 = -f * r_gap
                ux, uy, uz = newton(d1, d2, d3p)
                xi0 = float(c @ ux) + (float(b @ uy) if meq else 0.0) + float(h @ uz)
                dtau = (d4 + xi0 + dkappa_rhs / tau) / denom
                dx = ux + dtau * vx
                dy = uy + dtau * vy
                dz = uz + dtau * vz
                ds = wtg - self._apply("apply_wtw", dz)
                dkappa = (dkappa_rhs - kappa * dtau) / tau
                return dx, dy, dz, ds, dtau, dkappa

            try:
                # predictor
                ds_rhs_aff = -self._jordan_prod(lmbda, lmbda)
                dx_a, dy_a, dz_a, ds_a, dtau_a, dkap_a = full_step(1.0, ds_rhs_aff, -tau * kappa)
                eta_a = self._apply("apply_winv_t", ds_a)
                gam_a = self._apply("apply_w", dz_a)
                a_tau = np.inf
                if dtau_a < 0:
                    a_tau = -tau / dtau_a
                if dkap_a < 0:
                    a_tau = min(a_tau, -kappa / dkap_a)
                alpha_aff = min(1.0, self._max_step(eta_a, gam_a), a_tau)

                la = lmbda + alpha_aff * eta_a
                lb = lmbda + alpha_aff * gam_a
                mu_aff = (float(la @ lb) + (tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkap_a)) / (self.degree + 1)
                sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

                # corrector
                ds_rhs = (ds_rhs_aff - self._jordan_prod(eta_a, gam_a)
                          + sigma * mu * e_vec)
                dk_rhs = -tau * kappa - dtau_a * dkap_a + sigma * mu
                dx_c, dy_c, dz_c, ds_c, dtau_c, dkap_c = full_step(1.0 - sigma, ds_rhs, dk_rhs)
            except FloatingPointError as exc:
                status, detail = ConicStatus.NUMERICAL_FAILURE, str(exc)
                break

            eta_c = self._apply("apply_winv_t", ds_c)
            gam_c = self._apply("apply_w", dz_c)
            a_tau = np.inf
            if dtau_c < 0:
                a_tau = -tau / dtau_c
            if dkap_c < 0:
                a_tau = min(a_tau, -kappa / dkap_c)
            alpha = min(1.0, 0.99 * min(self._max_step(eta_c, gam_c), a_tau))

            if not np.isfinite(alpha) or alpha <= 1e-13:
                tiny_steps += 1
                if tiny_steps >= 3:
                    status, detail = ConicStatus.NUMERICAL_FAILURE, "step length collapsed"
                    break
            else:
                tiny_steps = 0

            x = x + alpha * dx_c
            if meq:
                y = y + alpha * dy_c
            z = z + alpha * dz_c
            s = s + alpha * ds_c
            tau = tau + alpha * dtau_c
            kappa = kappa + alpha * dkap_c

            if not (np.all(np.isfinite(x)) and np.isfinite(tau) and tau > 0):
                status, detail = ConicStatus.NUMERICAL_FAILURE, "iterate diverged"
                break

        if status == ConicStatus.OPTIMAL:
            xt = x / tau
            pobj = float(c @ xt) + self.prog.obj_offset
            return ConicSolution(xt, pobj, gap_abs, kkt, status, iters, detail, trace)
        if best is not None and status in (ConicStatus.MAX_ITER, ConicStatus.NUMERICAL_FAILURE):
            # an acceptable iterate was seen even though the push to the
            # tighter target stalled
            _, xb, taub, pobj, gapb, kktb = best
            return ConicSolution(xb / taub, pobj, gapb, kktb,
                                 ConicStatus.OPTIMAL,
                                 iters, "accepted best earlier iterate", trace)
        if status == ConicStatus.MAX_ITER:
            detail = detail or f"no convergence within {self.max_iter} iterations"
        if best_any is not None and status in (ConicStatus.MAX_ITER,
                                               ConicStatus.NUMERICAL_FAILURE):
            # report the best iterate seen with its true quality numbers so
            # callers can judge whether a near-miss is usable
            _, xb, taub, pobj, gapb, kktb = best_any
            return ConicSolution(xb / taub, pobj, gapb, kktb, status, iters,
                                 detail + " (best iterate returned)", trace)
        xt = x / max(tau, 1e-300)
        pobj = float(self.c @ xt) + self.prog.obj_offset
        return ConicSolution(xt, pobj, float("nan") if status == ConicStatus.INFEASIBLE else gap_abs,
                             float("nan") if status == ConicStatus.INFEASIBLE else kkt,
                             status, iters, detail, trace)
