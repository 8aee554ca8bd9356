"""One-way link designs: alternating min-max optimization and a
decomposition-based shortcut.

Two pipelines produce a full :class:`~relaynet.model.TransceiverDesign`:

* :func:`iterate_minmax` cycles receiver, relay, and source updates.  The
  receiver update is the closed-form linear MMSE filter; the relay and
  source updates are semidefinite programs solved with the embedded conic
  solver.  Every stage is the exact minimizer of the worst-pair MSE over
  its own block, so the objective trace is non-increasing.
* :func:`simplified_design` splits the end-to-end error into a first-hop
  estimation stage (filters + precoders, refined by a small SOCP loop)
  and a second-hop beam-shaping stage built from per-pair transmit beams:
  each pair's beams are aimed where its own downlink is strong relative
  to the other pairs' (leakage whitening), pair power shares are
  rebalanced against the measured worst pair, and a short weighted-MMSE
  descent coordinates the blocks.  The relay weight matrix applies the
  stacked first-hop filter bank followed by those beams, rescaled into
  the power budget.  The covariance-shaping SDP over the relay output
  (:func:`relay_q_sdp`) is exported alongside with its certified solver
  route; it prices the downlink gain a covariance buys each pair without
  modelling cross-pair leakage, so the assembled design relies on the
  leakage-aware beams instead.

The bottom of the module holds the structural computations that back the
property tests: the two-term error split under a template relay matrix,
and the matched-filter gain spectrum that flattens to one as the
first-hop noise vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, ConicStatus, HermitianLMI
from .linalg import herm, hermitian_evd, hpd_inverse, psd_sqrt, pseudo_solve, solve_hpd
from .model import (
    ChannelRealization,
    SystemConfig,
    TransceiverDesign,
    design_is_feasible,
    downlink_channel,
    excluded_covariance,
    fill_mmse_receivers,
    mse_oneway,
    received_covariance,
    relay_power,
    uplink_channel,
)

# Conic tolerances: Optimal is certified at _RTOL, but iterations push on
# toward _TARGET_RTOL while progress is cheap so that power-constraint
# slack stays orders of magnitude below the 1e-6 feasibility budget.
_RTOL = 1e-7
_TARGET_RTOL = 1e-9
_MAX_ITER = 100

# A stage result is only adopted if it does not raise the incumbent
# objective by more than this (guards against stray solver slack).
_ACCEPT_SLACK = 1e-9

# The min-max optimum equalizes several pairs at once and the resulting
# degenerate faces occasionally stop the interior-point endgame just short
# of the certified tolerance; a near-miss iterate this tight is still far
# finer than any stage post-condition needs, so stages salvage it.
_STAGE_FALLBACK_RTOL = 5e-6


def _stage_solution(prog: ConicProgram, stage: str):
    sol = prog.solve(rtol=_RTOL, max_iter=_MAX_ITER, target_rtol=_TARGET_RTOL)
    if sol.status != ConicStatus.OPTIMAL:
        quality = max(sol.kkt_residual,
                      sol.duality_gap / (1.0 + abs(sol.objective_value)))
        if not (np.isfinite(quality) and quality <= _STAGE_FALLBACK_RTOL):
            raise SubproblemError(
                f"{stage} stage: {sol.status} ({sol.detail})", status=sol.status)
    return sol


@dataclass(frozen=True)
class SubproblemStat:
    """Solver outcome of one convex stage."""

    stage: str
    status: str
    iterations: int
    objective: float


@dataclass
class IterationTrace:
    """Progress record of the alternating design loop."""

    objective_per_iter: list = field(default_factory=list)
    subproblem_stats: list = field(default_factory=list)
    converged: bool = False
    iters: int = 0


@dataclass(frozen=True)
class SimplifiedDesignOutput:
    """Design plus diagnostics from the decomposition shortcut."""

    design: TransceiverDesign
    d_filters: tuple
    t_tilde: np.ndarray
    q: np.ndarray
    first_hop_mse: tuple
    second_hop_mse: tuple


class SubproblemError(RuntimeError):
    """A convex stage did not reach a certified optimum.

    Carries the solver status plus, when raised from inside the
    alternating loop, the partial trace and the incumbent design.
    """

    def __init__(self, message: str, status: str = "",
                 trace: IterationTrace | None = None,
                 design: TransceiverDesign | None = None):
        super().__init__(message)
        self.status = status
        self.trace = trace
        self.design = design


class InfeasiblePowerError(SubproblemError):
    """Forwarded noise alone already exhausts the relay power budget."""


# --------------------------------------------------------------------------
# receivers and starting points
# --------------------------------------------------------------------------

def mmse_receivers(cfg: SystemConfig, ch: ChannelRealization, bs, f) -> tuple:
    """Closed-form linear receivers; each minimizes its own pair's MSE."""
    return fill_mmse_receivers(cfg, ch, bs, f)


def default_precoders(cfg: SystemConfig, seed: int | None = None) -> tuple:
    """Feasible precoders: equal power over orthonormal columns.

    With no seed the columns are the leading canonical basis vectors;
    with a seed they are rotated by a random unitary so repeated runs can
    start from distinct feasible points.
    """
    rng = np.random.default_rng(seed) if seed is not None else None
    out = []
    for node in range(cfg.node_count):
        ant, nb = cfg.node_antennas(node), cfg.node_streams(node)
        b = np.zeros((ant, nb), dtype=np.complex128)
        b[:nb, :nb] = np.eye(nb)
        if rng is not None:
            z = rng.standard_normal((ant, ant)) + 1j * rng.standard_normal((ant, ant))
            qmat, _ = np.linalg.qr(z)
            b = qmat @ b
        out.append(math.sqrt(cfg.node_power(node) / nb) * b)
    return tuple(out)


def initial_design(cfg: SystemConfig, ch: ChannelRealization,
                   seed: int | None = None) -> TransceiverDesign:
    """Deterministic feasible starting point (optionally seed-jittered)."""
    bs = default_precoders(cfg, seed)
    psi = received_covariance(cfg, ch, bs)
    f = math.sqrt(cfg.p_r / float(np.real(np.trace(psi)))) * np.eye(
        cfg.n_r, dtype=np.complex128)
    return TransceiverDesign(b=bs, f=f, w=fill_mmse_receivers(cfg, ch, bs, f))


def worst_pair_mse(cfg: SystemConfig, ch: ChannelRealization,
                   design: TransceiverDesign) -> float:
    """The objective of the min-max design: the largest per-pair MSE."""
    return max(mse_oneway(cfg, ch, design, k)[0] for k in range(cfg.node_count))


# --------------------------------------------------------------------------
# alternating stages
# --------------------------------------------------------------------------

def relay_subproblem(cfg: SystemConfig, ch: ChannelRealization, bs, ws):
    """Relay update for fixed precoders/receivers: an SDP over F.

    Each pair's MSE is bounded by the trace of a Hermitian slack tied to
    F through a Schur-complement block; a second slack bounds the relay
    transmit covariance so its trace can cap the power.  The Schur blocks
    are congruence-scaled so their constant corner is the identity (the
    raw form carries the inverse relay-input covariance there, which
    conditions the solve badly at high transmit power).  Returns the new
    relay matrix and the stage statistics.
    """
    n_r = cfg.n_r
    psi = received_covariance(cfg, ch, bs)
    psi_half = psd_sqrt(psi)
    eye_r = np.eye(n_r)

    prog = ConicProgram()
    tau = prog.new_scalar()
    fvar = prog.new_complex_matrix(n_r, n_r)
    slack = [prog.new_hermitian(cfg.node_streams(k)) for k in range(cfg.node_count)]
    power = prog.new_hermitian(n_r)
    prog.minimize([tau], [1.0])

    for k in range(cfg.node_count):
        nb = cfg.node_streams(k)
        left = ws[k].conj().T @ downlink_channel(cfg, ch, k)   # receiver into relay output
        path = uplink_channel(cfg, ch, k) @ bs[k]              # relay input from pair k
        lmi = HermitianLMI(nb + n_r)
        lmi.add_const(nb, nb, eye_r)
        lmi.add_terms(0, 0, slack[k].indices(), slack[k].basis())
        idx, stk = fvar.sandwich(left, path)
        lmi.add_terms(0, 0, idx, stk, mirror=True)
        idx, stk = fvar.sandwich(left, psi_half)
        lmi.add_terms(0, nb, idx, stk, mirror=True)
        prog.add_psd_hermitian(lmi)
        fixed = cfg.sigma2_d * float(np.real(np.sum(ws[k].conj() * ws[k]))) + nb
        prog.add_nonneg(
            np.concatenate([[tau], slack[k].diag_indices()]),
            np.concatenate([[1.0], -np.ones(nb)]),
            -fixed)

    lmi = HermitianLMI(2 * n_r)
    lmi.add_const(n_r, n_r, eye_r)
    lmi.add_terms(0, 0, power.indices(), power.basis())
    idx, stk = fvar.sandwich(eye_r, psi_half)
    lmi.add_terms(0, n_r, idx, stk, mirror=True)
    prog.add_psd_hermitian(lmi)
    prog.add_nonneg(power.diag_indices(), -np.ones(n_r), cfg.p_r)

    sol = _stage_solution(prog, "relay")
    f = fvar.value(sol.x)
    used = relay_power(f, psi)
    if used > cfg.p_r:
        f = f * math.sqrt(cfg.p_r / used)
    return f, SubproblemStat("relay", sol.status, sol.iterations,
                             sol.objective_value)


def _weighted_vec_stack(var, weight):
    """Coefficients placing weight @ vec(var) as a complex column block.

    Entry i of vec(var) multiplies column i of the weight, so the slab
    for that entry's real part is the column itself (and i times it for
    the imaginary part).
    """
    w = np.asarray(weight, dtype=np.complex128)
    cols = w.T[:, :, None]
    return var.indices(), np.concatenate([cols, 1j * cols], axis=0)


def _real_inner_stack(var, cmat):
    """Coefficients of the scalar 2*Re<vec(cmat), vec(var)>."""
    c = np.asarray(cmat, dtype=np.complex128).reshape(-1, order="F")
    stack = np.concatenate([2.0 * c.real, 2.0 * c.imag]).reshape(-1, 1, 1)
    return var.indices(), stack.astype(np.complex128)


# Trace-relative ridge keeping the Schur corners invertible when the
# quadratic form is singular.
_RIDGE = 1e-9


def _quad_roots(blocks):
    """Per-block square roots of a block-diagonal quadratic form.

    The ridge is scaled by the whole form's mean diagonal; a form with no
    mass at all yields None (the constraint degenerates to its affine
    part).
    """
    dim = sum(b.shape[0] for b in blocks)
    tr = float(np.real(sum(np.trace(b) for b in blocks)))
    if not (tr > 0.0) or not np.isfinite(tr):
        return None
    eps = _RIDGE * tr / dim
    return [psd_sqrt(herm(b) + eps * np.eye(b.shape[0])) for b in blocks]


def source_subproblem(cfg: SystemConfig, ch: ChannelRealization, f, ws):
    """Source update for fixed relay/receivers: an SDP over all precoders.

    The per-pair MSE is quadratic in the stacked precoder entries; each
    quadratic is bounded through a Schur-complement block whose corner is
    the inverse of the (ridge-regularized) coefficient matrix.  The block
    enters congruence-scaled by the matrix square root — identity corner,
    weighted precoder column — which is the same constraint with far
    better conditioning.  The relay power cap, quadratic in the precoders
    once the forwarded noise is subtracted, gets the same treatment.
    Per-node transmit powers are plain norm cones.
    """
    nodes = range(cfg.node_count)
    sizes = [cfg.node_antennas(j) * cfg.node_streams(j) for j in nodes]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    p_total = int(offsets[-1])

    front = [ws[k].conj().T @ downlink_channel(cfg, ch, k) @ f for k in nodes]
    theta = [cfg.sigma2_r * float(np.sum(np.abs(front[k]) ** 2))
             + cfg.sigma2_d * float(np.sum(np.abs(ws[k]) ** 2))
             + cfg.node_streams(k) for k in nodes]
    p_bar = cfg.p_r - cfg.sigma2_r * float(np.sum(np.abs(f) ** 2))
    if p_bar <= 0.0:
        raise InfeasiblePowerError(
            "forwarded relay noise alone reaches the relay power cap "
            f"(residual budget {p_bar:.3e})")

    prog = ConicProgram()
    tau = prog.new_scalar()
    bvars = [prog.new_complex_matrix(cfg.node_antennas(j), cfg.node_streams(j))
             for j in nodes]
    prog.minimize([tau], [1.0])

    def quad_lmi(scalar_const, roots, tau_weight, lin_var=None, lin_mat=None):
        lmi = HermitianLMI(1 + p_total)
        lmi.add_const(0, 0, [[scalar_const]])
        if tau_weight:
            lmi.add_terms(0, 0, [tau], np.ones((1, 1, 1)))
        if lin_var is not None:
            idx, stk = _real_inner_stack(lin_var, lin_mat)
            lmi.add_terms(0, 0, idx, stk)
        for j in nodes:
            idx, stk = _weighted_vec_stack(bvars[j], roots[j])
            lmi.add_terms(1 + int(offsets[j]), 0, idx, stk, mirror=True)
        lmi.add_const(1, 1, np.eye(p_total))
        prog.add_psd_hermitian(lmi)

    for k in nodes:
        blocks = []
        for j in nodes:
            eff = front[k] @ uplink_channel(cfg, ch, j)
            blocks.append(np.kron(np.eye(cfg.node_streams(j)), herm(eff.conj().T @ eff)))
        roots = _quad_roots(blocks)
        if roots is None:
            # severed signal path: the error is the fixed floor
            prog.add_nonneg([tau], [1.0], -theta[k])
            continue
        target = (front[k] @ uplink_channel(cfg, ch, k)).conj().T  # per-entry linear part
        quad_lmi(-theta[k], roots, True, lin_var=bvars[k], lin_mat=target)

    fwd = [f @ uplink_channel(cfg, ch, j) for j in nodes]
    pow_roots = _quad_roots([np.kron(np.eye(cfg.node_streams(j)),
                                     herm(fwd[j].conj().T @ fwd[j])) for j in nodes])
    if pow_roots is not None:
        quad_lmi(p_bar, pow_roots, False)

    for j in nodes:
        prog.add_soc_complex([], [], math.sqrt(cfg.node_power(j)), bvars[j],
                             np.eye(sizes[j]), np.zeros(sizes[j]))

    sol = _stage_solution(prog, "source")
    bs = []
    for j in nodes:
        b = bvars[j].value(sol.x)
        used = float(np.sum(np.abs(b) ** 2))
        cap = cfg.node_power(j)
        if used > cap:
            b = b * math.sqrt(cap / used)
        bs.append(b)
    return tuple(bs), SubproblemStat("source", sol.status, sol.iterations,
                                     sol.objective_value)


def _block_diag(blocks):
    dims = [b.shape[0] for b in blocks]
    out = np.zeros((sum(dims), sum(dims)), dtype=np.complex128)
    pos = 0
    for b, d in zip(blocks, dims):
        out[pos:pos + d, pos:pos + d] = b
        pos += d
    return out


def iterate_minmax(cfg: SystemConfig, ch: ChannelRealization,
                   init: TransceiverDesign | None = None,
                   tol: float = 1e-3, max_iters: int = 30):
    """Alternate receiver, relay, and source stages until the worst-pair
    MSE settles.

    Every stage minimizes the shared objective over its own block, so the
    per-pass objective is non-increasing; a stage output that would raise
    it (solver slack) is discarded in favor of the incumbent.  Raises
    :class:`SubproblemError` with the partial trace attached if a stage
    fails.
    """
    if init is None:
        design = initial_design(cfg, ch)
    else:
        psi = received_covariance(cfg, ch, init.b)
        if not design_is_feasible(cfg, init, psi):
            raise ValueError("initial design violates a power constraint")
        design = init
    best = worst_pair_mse(cfg, ch, design)
    trace = IterationTrace()

    def adopt(candidate):
        nonlocal design, best
        value = worst_pair_mse(cfg, ch, candidate)
        if value <= best + _ACCEPT_SLACK:
            design, best = candidate, value

    for passno in range(max_iters):
        prev = best
        stats = []
        try:
            ws = fill_mmse_receivers(cfg, ch, design.b, design.f)
            adopt(TransceiverDesign(b=design.b, f=design.f, w=ws))
            f_new, st = relay_subproblem(cfg, ch, design.b, design.w)
            stats.append(st)
            adopt(TransceiverDesign(b=design.b, f=f_new, w=design.w))
            bs_new, st = source_subproblem(cfg, ch, design.f, design.w)
            stats.append(st)
            adopt(TransceiverDesign(b=bs_new, f=design.f, w=design.w))
        except SubproblemError as err:
            err.trace = trace
            err.design = design
            raise
        trace.objective_per_iter.append(best)
        trace.subproblem_stats.append(stats)
        trace.iters = passno + 1
        if abs(prev - best) < tol:
            trace.converged = True
            break
    return design, trace


# --------------------------------------------------------------------------
# decomposition shortcut: first hop
# --------------------------------------------------------------------------

def first_hop_filters(cfg: SystemConfig, ch: ChannelRealization, bs) -> tuple:
    """Per-pair MMSE estimators of the transmitted streams at the relay."""
    psi = received_covariance(cfg, ch, bs)
    return tuple(solve_hpd(psi, uplink_channel(cfg, ch, k) @ bs[k])
                 for k in range(cfg.node_count))


def first_hop_mse(cfg: SystemConfig, ch: ChannelRealization, bs, ds, k: int) -> float:
    """Residual error of pair k's streams at the relay under filters ds."""
    psi = received_covariance(cfg, ch, bs)
    path = uplink_channel(cfg, ch, k) @ bs[k]
    cross = ds[k].conj().T @ path
    e_mat = (ds[k].conj().T @ psi @ ds[k]) - cross - cross.conj().T \
        + np.eye(cfg.node_streams(k))
    return float(np.real(np.trace(e_mat)))


def source_socp(cfg: SystemConfig, ch: ChannelRealization, ds):
    """Precoder update for fixed relay-side filters: a min-max SOCP.

    Each pair's relay-side error is an exact Euclidean norm of an affine
    function of the stacked precoders (residual toward the identity
    target, cross-pair leakage, and a constant filter-noise row), so the
    worst pair is minimized through a shared cone head.
    """
    nodes = range(cfg.node_count)
    prog = ConicProgram()
    t = prog.new_scalar()
    bvars = [prog.new_complex_matrix(cfg.node_antennas(j), cfg.node_streams(j))
             for j in nodes]
    prog.minimize([t], [1.0])

    for k in nodes:
        nb_k = cfg.node_streams(k)
        rows = [nb_k * cfg.node_streams(j) for j in nodes]
        total = sum(rows) + 1
        tail_const = np.zeros(total, dtype=np.complex128)
        tail_const[-1] = math.sqrt(cfg.sigma2_r) * float(np.linalg.norm(ds[k]))
        coefs = []
        r0 = 0
        for j in nodes:
            block = np.zeros((total, cfg.node_antennas(j) * cfg.node_streams(j)),
                             dtype=np.complex128)
            eff = ds[k].conj().T @ uplink_channel(cfg, ch, j)
            block[r0:r0 + rows[j]] = np.kron(np.eye(cfg.node_streams(j)), eff)
            coefs.append(block)
            if j == k:
                tail_const[r0:r0 + rows[j]] -= np.eye(nb_k).reshape(-1, order="F")
            r0 += rows[j]
        prog.add_soc_complex([t], [1.0], 0.0, bvars, coefs, tail_const)

    for j in nodes:
        mn = cfg.node_antennas(j) * cfg.node_streams(j)
        prog.add_soc_complex([], [], math.sqrt(cfg.node_power(j)), bvars[j],
                             np.eye(mn), np.zeros(mn))

    sol = _stage_solution(prog, "first_hop_source")
    bs = []
    for j in nodes:
        b = bvars[j].value(sol.x)
        used = float(np.sum(np.abs(b) ** 2))
        cap = cfg.node_power(j)
        if used > cap:
            b = b * math.sqrt(cap / used)
        bs.append(b)
    return tuple(bs), SubproblemStat("first_hop_source", sol.status,
                                     sol.iterations, sol.objective_value)


# --------------------------------------------------------------------------
# decomposition shortcut: second hop
# --------------------------------------------------------------------------

def relay_q_sdp(cfg: SystemConfig, ch: ChannelRealization):
    """Relay output covariance shaping: worst-pair SDP over Q.

    Minimizes the largest per-pair downlink error bound tr(Y_k) subject
    to the Schur coupling of Y_k with the downlink gain of Q, a trace cap
    on Q, and Q itself being PSD.  Returns (Q, per-pair Y, stats).
    """
    g_list = [downlink_channel(cfg, ch, k) for k in range(cfg.node_count)]
    return _downlink_q_sdp(g_list, cfg.n_r, cfg.p_r)


def _downlink_q_sdp(g_list, n_r: int, p_r: float):
    prog = ConicProgram()
    t = prog.new_scalar()
    qvar = prog.new_hermitian(n_r)
    yvars = [prog.new_hermitian(g.shape[0]) for g in g_list]
    prog.minimize([t], [1.0])
    qbasis = qvar.basis()

    for g, yv in zip(g_list, yvars):
        nd = g.shape[0]
        lmi = HermitianLMI(2 * nd)
        lmi.add_const(0, nd, np.eye(nd), mirror=True)
        lmi.add_const(nd, nd, np.eye(nd))
        lmi.add_terms(0, 0, yv.indices(), yv.basis())
        lmi.add_terms(nd, nd, qvar.indices(),
                      np.einsum("ab,nbc,dc->nad", g, qbasis, g.conj()))
        prog.add_psd_hermitian(lmi)
        prog.add_nonneg(
            np.concatenate([[t], yv.diag_indices()]),
            np.concatenate([[1.0], -np.ones(nd)]), 0.0)

    prog.add_nonneg(qvar.diag_indices(), -np.ones(n_r), p_r)
    prog.add_nonneg([t], [1.0], 0.0)
    cone = HermitianLMI(n_r)
    cone.add_terms(0, 0, qvar.indices(), qbasis)
    prog.add_psd_hermitian(cone)

    sol = _stage_solution(prog, "relay_shaping")
    q = herm(qvar.value(sol.x))
    ys = tuple(herm(yv.value(sol.x)) for yv in yvars)
    return q, ys, SubproblemStat("relay_q", sol.status, sol.iterations,
                                 sol.objective_value)


def _low_rank_root(q: np.ndarray, width: int) -> np.ndarray:
    """Rank-limited square root: top eigenpairs, negatives clipped to zero."""
    evd = hermitian_evd(q)
    vals = np.clip(evd.eigenvalues[:width], 0.0, None)
    return evd.eigenvectors[:, :width] * np.sqrt(vals)


def assemble_relay_matrix(cfg: SystemConfig, ch: ChannelRealization,
                          bs, ds, q: np.ndarray) -> np.ndarray:
    """Relay weights from the two-hop factorization.

    The shaped covariance is reduced to a beam matrix holding one column
    per forwarded stream; the relay applies the stacked first-hop filter
    bank followed by those beams.  A final scalar rescale keeps the
    transmit power at or below the cap.
    """
    width = min(cfg.n_r, sum(cfg.node_streams(k) for k in range(cfg.node_count)))
    t_tilde = _low_rank_root(q, width)
    d = np.hstack(ds)
    f = t_tilde @ d.conj().T
    psi = received_covariance(cfg, ch, bs)
    used = relay_power(f, psi)
    if used > cfg.p_r:
        f = f * math.sqrt(cfg.p_r / used)
    return f


def _waterfill_powers(gain2, budget: float) -> np.ndarray:
    """Split `budget` over parallel gains minimizing sum_i 1/(1 + g_i p_i)."""
    gain2 = np.asarray(gain2, dtype=float)
    powers = np.zeros_like(gain2)
    live = gain2 > 0.0
    if budget <= 0.0 or not np.any(live):
        return powers
    g = gain2[live]
    s = np.sqrt(g)
    lo, hi = 0.0, (budget + float(np.sum(1.0 / g))) * float(np.max(s))
    for _ in range(80):
        level = 0.5 * (lo + hi)
        if np.maximum(0.0, level / s - 1.0 / g).sum() > budget:
            hi = level
        else:
            lo = level
    p = np.maximum(0.0, 0.5 * (lo + hi) / s - 1.0 / g)
    total = p.sum()
    if total > 0.0:
        p *= budget / total
    powers[live] = p
    return powers


def _dedicated_beam_blocks(g_list, widths, shares, n_r: int, ridge: float):
    """Per-pair relay transmit beams against leakage-whitened downlinks.

    Pair k's beams sit where its own downlink is strong relative to every
    other pair's (whitening by the regularized leakage Gram); powers are
    water-filled within the pair's share.  Zero columns pad any width the
    channel rank cannot fill so block alignment with the stacked first-hop
    filter bank is kept.
    """
    grams = [g.conj().T @ g for g in g_list]
    total = sum(grams)
    blocks = []
    for g, gram, width, share in zip(g_list, grams, widths, shares):
        leak = herm(total - gram) + ridge * np.eye(n_r)
        evd = hermitian_evd(leak)
        white = (evd.eigenvectors * evd.eigenvalues ** -0.5) \
            @ evd.eigenvectors.conj().T
        _u, sing, vh = np.linalg.svd(g @ white, full_matrices=False)
        take = min(width, sing.size)
        raw = white @ vh.conj().T[:, :take]
        norms = np.linalg.norm(raw, axis=0)
        norms = np.where(norms > 0.0, norms, 1.0)
        unit = raw / norms
        powers = _waterfill_powers((sing[:take] / norms) ** 2, share)
        block = np.zeros((n_r, width), dtype=np.complex128)
        block[:, :take] = unit * np.sqrt(powers)
        blocks.append(block)
    return blocks


def _second_hop_beam_blocks(g_list, widths, p_r: float, sigma2_d: float,
                            n_r: int, evaluate, rebalance_passes: int = 4,
                            descent_passes: int = 10):
    """Shape per-pair second-hop beams and keep the best evaluated set.

    Three phases, all judged by the caller-supplied `evaluate` (worst-pair
    error of the fully assembled design): leakage-whitened beams at equal
    power shares, share rebalancing toward the measured worst pair, and a
    weighted-MMSE coordinated descent whose pair weights drift toward the
    worst pair so its sum-error steps chase the min-max objective.
    """
    pairs = len(g_list)
    ridge = n_r * sigma2_d / p_r
    shares = np.full(pairs, p_r / pairs)
    blocks = _dedicated_beam_blocks(g_list, widths, shares, n_r, ridge)
    worst, mses = evaluate(blocks)
    best = (worst, blocks)

    for _ in range(rebalance_passes):
        m = np.asarray(mses)
        shares = shares * (m / m.mean()) ** 0.7
        shares *= p_r / shares.sum()
        blocks = _dedicated_beam_blocks(g_list, widths, shares, n_r, ridge)
        worst, mses = evaluate(blocks)
        if worst < best[0]:
            best = (worst, blocks)

    blocks = best[1]
    _worst, mses = evaluate(blocks)
    weights = np.ones(pairs)
    eye_r = np.eye(n_r)
    for _ in range(descent_passes):
        receivers, error_weights = [], []
        for k, g in enumerate(g_list):
            cov = sigma2_d * np.eye(g.shape[0], dtype=np.complex128)
            for blk in blocks:
                gb = g @ blk
                cov = cov + gb @ gb.conj().T
            gbk = g @ blocks[k]
            rec = np.linalg.solve(herm(cov), gbk)
            ew = np.linalg.inv(np.eye(widths[k], dtype=np.complex128)
                               - gbk.conj().T @ rec)
            receivers.append(rec)
            error_weights.append(herm(ew))
        lhs = herm(sum(
            weights[k] * (g.conj().T @ receivers[k] @ error_weights[k]
                          @ receivers[k].conj().T @ g)
            for k, g in enumerate(g_list)))
        rhs = [weights[k] * (g.conj().T @ receivers[k] @ error_weights[k])
               for k, g in enumerate(g_list)]

        def beams_at(level):
            mat = lhs + level * eye_r
            return [np.linalg.solve(mat, r) for r in rhs]

        def used(cand):
            return sum(np.linalg.norm(b) ** 2 for b in cand)

        lo, hi = 1e-12, 1.0
        while used(beams_at(hi)) > p_r:
            hi *= 4.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if used(beams_at(mid)) > p_r:
                lo = mid
            else:
                hi = mid
        blocks = beams_at(hi)
        worst, mses = evaluate(blocks)
        if worst < best[0]:
            best = (worst, blocks)
        m = np.asarray(mses)
        weights = weights * (m / m.mean()) ** 1.5
        weights *= pairs / weights.sum()
    return best[1]


def simplified_design(cfg: SystemConfig, ch: ChannelRealization,
                      inner_tol: float = 1e-4,
                      inner_max: int = 40) -> SimplifiedDesignOutput:
    """Decomposition shortcut: refine the first hop by alternating filter
    and precoder updates, shape per-pair second-hop beams, assemble the
    relay matrix from the stacked filter bank and those beams, and close
    with MMSE receivers.
    """
    bs = default_precoders(cfg)
    ds = first_hop_filters(cfg, ch, bs)
    prev = max(first_hop_mse(cfg, ch, bs, ds, k) for k in range(cfg.node_count))
    for _ in range(inner_max):
        bs, _stat = source_socp(cfg, ch, ds)
        ds = first_hop_filters(cfg, ch, bs)
        cur = max(first_hop_mse(cfg, ch, bs, ds, k) for k in range(cfg.node_count))
        done = abs(prev - cur) < inner_tol
        prev = cur
        if done:
            break

    psi = received_covariance(cfg, ch, bs)
    d = np.hstack(ds)
    g_list = [downlink_channel(cfg, ch, k) for k in range(cfg.node_count)]
    widths = [cfg.node_streams(k) for k in range(cfg.node_count)]

    def assemble(blocks):
        f = np.hstack(blocks) @ d.conj().T
        used = relay_power(f, psi)
        scale = math.sqrt(cfg.p_r / used) if used > cfg.p_r else 1.0
        return f * scale, scale

    def evaluate(blocks):
        f, _scale = assemble(blocks)
        ws = fill_mmse_receivers(cfg, ch, bs, f)
        design = TransceiverDesign(b=bs, f=f, w=ws)
        mses = [mse_oneway(cfg, ch, design, k)[0]
                for k in range(cfg.node_count)]
        return max(mses), mses

    blocks = _second_hop_beam_blocks(g_list, widths, cfg.p_r, cfg.sigma2_d,
                                     cfg.n_r, evaluate)
    f, scale = assemble(blocks)
    t_tilde = scale * np.hstack(blocks)
    q = t_tilde @ t_tilde.conj().T
    ws = fill_mmse_receivers(cfg, ch, bs, f)
    design = TransceiverDesign(b=bs, f=f, w=ws)

    fh = tuple(first_hop_mse(cfg, ch, bs, ds, k) for k in range(cfg.node_count))
    sh = []
    offset = 0
    for k in range(cfg.node_count):
        width = widths[k]
        block = t_tilde[:, offset:offset + width]
        offset += width
        gain = np.eye(width) + block.conj().T @ g_list[k].conj().T \
            @ g_list[k] @ block
        sh.append(float(np.real(np.trace(hpd_inverse(herm(gain))))))
    return SimplifiedDesignOutput(design=design, d_filters=ds, t_tilde=t_tilde,
                                  q=herm(q), first_hop_mse=fh,
                                  second_hop_mse=tuple(sh))


# --------------------------------------------------------------------------
# structural computations backing the property tests
# --------------------------------------------------------------------------

def template_relay_matrix(cfg: SystemConfig, ch: ChannelRealization,
                          bs, t_tilde: np.ndarray, k: int) -> np.ndarray:
    """Relay matrix built from one pair's matched first-hop filter and a
    beam matrix: beams applied to that pair's stream estimate."""
    psi = received_covariance(cfg, ch, bs)
    dk = solve_hpd(psi, uplink_channel(cfg, ch, k) @ bs[k])
    return t_tilde @ dk.conj().T


def decomposed_mse(cfg: SystemConfig, ch: ChannelRealization,
                   bs, t_tilde: np.ndarray, k: int):
    """Two-term split of pair k's end-to-end MMSE under the template relay.

    Returns (relay_side, destination_side): the estimation error of the
    pair's streams at the relay input, and the residual added by carrying
    the estimate over the noise-normalized downlink through the beams.
    Their sum equals the end-to-end MSE at the closed-form receiver.
    """
    path = uplink_channel(cfg, ch, k) @ bs[k]
    nb = cfg.node_streams(k)
    bar = excluded_covariance(cfg, ch, bs, k)
    relay_side = float(np.real(np.trace(np.linalg.inv(
        np.eye(nb) + herm(path.conj().T @ solve_hpd(bar, path))))))
    psi = received_covariance(cfg, ch, bs)
    gain = herm(path.conj().T @ solve_hpd(psi, path))
    scaled = downlink_channel(cfg, ch, k) @ t_tilde / math.sqrt(cfg.sigma2_d)
    dest_side = float(np.real(np.trace(np.linalg.inv(
        hpd_inverse(gain) + herm(scaled.conj().T @ scaled)))))
    return relay_side, dest_side


def first_hop_gain_eigenvalues(cfg: SystemConfig, ch: ChannelRealization,
                               bs, k: int,
                               sigma2_r: float | None = None) -> np.ndarray:
    """Spectrum of the pair's matched-filter gain through the relay-input
    covariance (ascending).  The eigenvalues run to one as the relay-side
    noise vanishes; at zero noise the singular directions are annihilated
    exactly via the pseudo-solve."""
    s2 = cfg.sigma2_r if sigma2_r is None else float(sigma2_r)
    signal = np.zeros((cfg.n_r, cfg.n_r), dtype=np.complex128)
    for j in range(cfg.node_count):
        pj = uplink_channel(cfg, ch, j) @ bs[j]
        signal += pj @ pj.conj().T
    path = uplink_channel(cfg, ch, k) @ bs[k]
    if s2 == 0.0:
        gram = path.conj().T @ pseudo_solve(herm(signal), path)
    else:
        gram = path.conj().T @ solve_hpd(herm(signal) + s2 * np.eye(cfg.n_r), path)
    return np.linalg.eigvalsh(herm(gram))
