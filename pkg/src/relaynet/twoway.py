"""Two-way link designs: both ends of every pair transmit in a shared
uplink phase, the relay broadcasts one combined signal, and each node
estimates its partner's streams after cancelling the echo of its own
transmission (it knows its symbols and the channels, so that term is
subtracted exactly).

The algebra per node matches the one-way case with two substitutions:
the desired path is the partner's uplink, and the node's own signal is
absent from every error covariance (while still counting against the
relay power budget — the relay amplifies it regardless).  The stages
below mirror :mod:`relaynet.oneway` with exactly those substitutions;
the first-hop machinery (relay-side filters and precoder SOCP) is shared
outright because nothing is cancelled at the relay.
"""

from __future__ import annotations

import math

import numpy as np

from .conic import ConicProgram, HermitianLMI
from .linalg import herm, hpd_inverse, psd_sqrt, solve_hpd
from .model import (
    TWO_WAY,
    ChannelRealization,
    SystemConfig,
    TransceiverDesign,
    design_is_feasible,
    downlink_channel,
    excluded_covariance,
    fill_mmse_receivers,
    mse_twoway,
    received_covariance,
    relay_power,
    uplink_channel,
)
from .oneway import (
    InfeasiblePowerError,
    IterationTrace,
    SimplifiedDesignOutput,
    SubproblemError,
    SubproblemStat,
    _ACCEPT_SLACK,
    _quad_roots,
    _real_inner_stack,
    _second_hop_beam_blocks,
    _stage_solution,
    _weighted_vec_stack,
    default_precoders,
    first_hop_filters,
    first_hop_mse,
    initial_design,
    source_socp,
)

__all__ = [
    "twoway_decomposed_mse",
    "twoway_mmse_receivers",
    "twoway_relay_sdp",
    "twoway_source_sdp",
    "twoway_iterate",
    "twoway_simplified",
    "twoway_template_relay_matrix",
    "worst_user_mse",
]


def _require_twoway(cfg: SystemConfig) -> None:
    if cfg.mode != TWO_WAY:
        raise ValueError("two-way design requested in one-way mode")


def worst_user_mse(cfg: SystemConfig, ch: ChannelRealization,
                   design: TransceiverDesign) -> float:
    """The min-max objective: the largest per-node MSE over all 2K nodes."""
    return max(mse_twoway(cfg, ch, design, k) for k in range(cfg.node_count))


def twoway_mmse_receivers(cfg: SystemConfig, ch: ChannelRealization,
                          bs, f) -> tuple:
    """Closed-form linear receivers after self-interference cancellation.

    Node k's filter whitens everything it cannot cancel (all uplinks but
    its own, plus forwarded and local noise) against its partner's
    effective channel.
    """
    _require_twoway(cfg)
    return fill_mmse_receivers(cfg, ch, bs, f)


def twoway_relay_sdp(cfg: SystemConfig, ch: ChannelRealization, bs, ws):
    """Relay update for fixed precoders/receivers: an SDP over F.

    Same Schur-slack construction as the one-way relay stage, with each
    node's error block built on its self-cancelled input covariance and
    its partner's uplink as the desired path.  The power block keeps the
    full covariance: the relay amplifies every node's signal, including
    the components the receivers later cancel.
    """
    _require_twoway(cfg)
    n_r = cfg.n_r
    psi = received_covariance(cfg, ch, bs)
    eye_r = np.eye(n_r)

    prog = ConicProgram()
    tau = prog.new_scalar()
    fvar = prog.new_complex_matrix(n_r, n_r)
    slack = [prog.new_hermitian(cfg.node_streams(k)) for k in range(cfg.node_count)]
    power = prog.new_hermitian(n_r)
    prog.minimize([tau], [1.0])

    for k in range(cfg.node_count):
        mate = cfg.partner(k)
        nb = cfg.node_streams(k)
        left = ws[k].conj().T @ downlink_channel(cfg, ch, k)
        path = uplink_channel(cfg, ch, mate) @ bs[mate]
        bar_half = psd_sqrt(excluded_covariance(cfg, ch, bs, k))
        lmi = HermitianLMI(nb + n_r)
        lmi.add_const(nb, nb, eye_r)
        lmi.add_terms(0, 0, slack[k].indices(), slack[k].basis())
        idx, stk = fvar.sandwich(left, path)
        lmi.add_terms(0, 0, idx, stk, mirror=True)
        idx, stk = fvar.sandwich(left, bar_half)
        lmi.add_terms(0, nb, idx, stk, mirror=True)
        prog.add_psd_hermitian(lmi)
        fixed = cfg.sigma2_d * float(np.real(np.sum(ws[k].conj() * ws[k]))) + nb
        prog.add_nonneg(
            np.concatenate([[tau], slack[k].diag_indices()]),
            np.concatenate([[1.0], -np.ones(nb)]),
            -fixed)

    psi_half = psd_sqrt(psi)
    lmi = HermitianLMI(2 * n_r)
    lmi.add_const(n_r, n_r, eye_r)
    lmi.add_terms(0, 0, power.indices(), power.basis())
    idx, stk = fvar.sandwich(eye_r, psi_half)
    lmi.add_terms(0, n_r, idx, stk, mirror=True)
    prog.add_psd_hermitian(lmi)
    prog.add_nonneg(power.diag_indices(), -np.ones(n_r), cfg.p_r)

    sol = _stage_solution(prog, "twoway_relay")
    f = fvar.value(sol.x)
    used = relay_power(f, psi)
    if used > cfg.p_r:
        f = f * math.sqrt(cfg.p_r / used)
    return f, SubproblemStat("twoway_relay", sol.status, sol.iterations,
                             sol.objective_value)


def twoway_source_sdp(cfg: SystemConfig, ch: ChannelRealization, f, ws):
    """Source update for fixed relay/receivers: an SDP over all precoders.

    One-way construction with the two-way index bookkeeping: node k's
    quadratic skips its own (cancelled) precoder block and its linear
    alignment term sits on the partner's precoder.  The relay power cap
    covers every node, self-cancelled or not.
    """
    _require_twoway(cfg)
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
        mate = cfg.partner(k)
        blocks = []
        for j in nodes:
            if j == k:
                blocks.append(np.zeros((sizes[j], sizes[j])))
                continue
            eff = front[k] @ uplink_channel(cfg, ch, j)
            blocks.append(np.kron(np.eye(cfg.node_streams(j)),
                                  herm(eff.conj().T @ eff)))
        roots = _quad_roots(blocks)
        if roots is None:
            # severed signal path: the error is the fixed floor
            prog.add_nonneg([tau], [1.0], -theta[k])
            continue
        target = (front[k] @ uplink_channel(cfg, ch, mate)).conj().T
        quad_lmi(-theta[k], roots, True, lin_var=bvars[mate], lin_mat=target)

    fwd = [f @ uplink_channel(cfg, ch, j) for j in nodes]
    pow_roots = _quad_roots([np.kron(np.eye(cfg.node_streams(j)),
                                     herm(fwd[j].conj().T @ fwd[j])) for j in nodes])
    if pow_roots is not None:
        quad_lmi(p_bar, pow_roots, False)

    for j in nodes:
        prog.add_soc_complex([], [], math.sqrt(cfg.node_power(j)), bvars[j],
                             np.eye(sizes[j]), np.zeros(sizes[j]))

    sol = _stage_solution(prog, "twoway_source")
    bs = []
    for j in nodes:
        b = bvars[j].value(sol.x)
        used = float(np.sum(np.abs(b) ** 2))
        cap = cfg.node_power(j)
        if used > cap:
            b = b * math.sqrt(cap / used)
        bs.append(b)
    return tuple(bs), SubproblemStat("twoway_source", sol.status,
                                     sol.iterations, sol.objective_value)


def twoway_iterate(cfg: SystemConfig, ch: ChannelRealization,
                   init: TransceiverDesign | None = None,
                   tol: float = 1e-3, max_iters: int = 30):
    """Alternate receiver, relay, and source stages on the worst-node MSE.

    Same acceptance discipline as the one-way loop: every stage minimizes
    the shared objective over its own block and a stage output that would
    raise it is discarded, so the per-pass trace is non-increasing.
    """
    _require_twoway(cfg)
    if init is None:
        design = initial_design(cfg, ch)
    else:
        psi = received_covariance(cfg, ch, init.b)
        if not design_is_feasible(cfg, init, psi):
            raise ValueError("initial design violates a power constraint")
        design = init
    best = worst_user_mse(cfg, ch, design)
    trace = IterationTrace()

    def adopt(candidate):
        nonlocal design, best
        value = worst_user_mse(cfg, ch, candidate)
        if value <= best + _ACCEPT_SLACK:
            design, best = candidate, value

    for passno in range(max_iters):
        prev = best
        stats = []
        try:
            ws = fill_mmse_receivers(cfg, ch, design.b, design.f)
            adopt(TransceiverDesign(b=design.b, f=design.f, w=ws))
            f_new, st = twoway_relay_sdp(cfg, ch, design.b, design.w)
            stats.append(st)
            adopt(TransceiverDesign(b=design.b, f=f_new, w=design.w))
            bs_new, st = twoway_source_sdp(cfg, ch, design.f, design.w)
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


def twoway_simplified(cfg: SystemConfig, ch: ChannelRealization,
                      inner_tol: float = 1e-4,
                      inner_max: int = 40) -> SimplifiedDesignOutput:
    """Decomposition shortcut for the two-way link.

    The first hop is the shared relay-side estimation problem over all 2K
    uplinks (no cancellation happens at the relay, so the one-way filter
    and precoder stages apply verbatim).  The second hop shapes one beam
    block per node's stream group, judged end to end against the
    self-cancelled per-node MSE; the block for node k's streams is aimed
    at its partner's receive channel.
    """
    _require_twoway(cfg)
    nodes = range(cfg.node_count)
    bs = default_precoders(cfg)
    ds = first_hop_filters(cfg, ch, bs)
    prev = max(first_hop_mse(cfg, ch, bs, ds, k) for k in nodes)
    for _ in range(inner_max):
        bs, _stat = source_socp(cfg, ch, ds)
        ds = first_hop_filters(cfg, ch, bs)
        cur = max(first_hop_mse(cfg, ch, bs, ds, k) for k in nodes)
        done = abs(prev - cur) < inner_tol
        prev = cur
        if done:
            break

    psi = received_covariance(cfg, ch, bs)
    d = np.hstack(ds)
    g_list = [downlink_channel(cfg, ch, cfg.partner(k)) for k in nodes]
    widths = [cfg.node_streams(k) for k in nodes]

    def assemble(blocks):
        f = np.hstack(blocks) @ d.conj().T
        used = relay_power(f, psi)
        scale = math.sqrt(cfg.p_r / used) if used > cfg.p_r else 1.0
        return f * scale, scale

    def evaluate(blocks):
        f, _scale = assemble(blocks)
        ws = fill_mmse_receivers(cfg, ch, bs, f)
        design = TransceiverDesign(b=bs, f=f, w=ws)
        # group k carries node k's streams, measured at its partner
        mses = [mse_twoway(cfg, ch, design, cfg.partner(k)) for k in nodes]
        return max(mses), mses

    blocks = _second_hop_beam_blocks(g_list, widths, cfg.p_r, cfg.sigma2_d,
                                     cfg.n_r, evaluate)
    f, scale = assemble(blocks)
    t_tilde = scale * np.hstack(blocks)
    q = t_tilde @ t_tilde.conj().T
    ws = fill_mmse_receivers(cfg, ch, bs, f)
    design = TransceiverDesign(b=bs, f=f, w=ws)

    fh = tuple(first_hop_mse(cfg, ch, bs, ds, k) for k in nodes)
    sh = []
    offset = 0
    for k in nodes:
        width = widths[k]
        block = t_tilde[:, offset:offset + width]
        offset += width
        gain = np.eye(width) + block.conj().T @ g_list[k].conj().T \
            @ g_list[k] @ block
        sh.append(float(np.real(np.trace(hpd_inverse(herm(gain))))))
    return SimplifiedDesignOutput(design=design, d_filters=ds, t_tilde=t_tilde,
                                  q=herm(q), first_hop_mse=fh,
                                  second_hop_mse=tuple(sh))


def twoway_template_relay_matrix(cfg: SystemConfig, ch: ChannelRealization,
                                 bs, t_tilde: np.ndarray,
                                 node: int) -> np.ndarray:
    """Relay matrix forwarding one node's partner estimate through the beams.

    The estimate whitens against everything the node cannot cancel, so
    the node's own uplink is left out of the covariance before inverting.
    """
    _require_twoway(cfg)
    mate = cfg.partner(node)
    path = uplink_channel(cfg, ch, mate) @ bs[mate]
    bar = excluded_covariance(cfg, ch, bs, node)
    return t_tilde @ solve_hpd(bar, path).conj().T


def twoway_decomposed_mse(cfg: SystemConfig, ch: ChannelRealization,
                          bs, t_tilde: np.ndarray, node: int):
    """Two-term split of a node's end-to-end MSE under its template relay.

    Returns (relay_side, destination_side).  Once the node's own echo is
    cancelled, the link is a one-way hop from its partner, so the same
    split applies with the node's uplink removed from every covariance.
    """
    _require_twoway(cfg)
    mate = cfg.partner(node)
    path = uplink_channel(cfg, ch, mate) @ bs[mate]
    nb = cfg.node_streams(mate)
    bar = excluded_covariance(cfg, ch, bs, node)
    both = herm(bar - path @ path.conj().T)
    relay_side = float(np.real(np.trace(np.linalg.inv(
        np.eye(nb) + herm(path.conj().T @ solve_hpd(both, path))))))
    gain = herm(path.conj().T @ solve_hpd(bar, path))
    scaled = downlink_channel(cfg, ch, node) @ t_tilde / math.sqrt(cfg.sigma2_d)
    dest_side = float(np.real(np.trace(np.linalg.inv(
        hpd_inverse(gain) + herm(scaled.conj().T @ scaled)))))
    return relay_side, dest_side
