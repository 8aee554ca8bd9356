"""System configuration, channel generation, and closed-form link quantities.

The network has K source-destination pairs communicating through one
amplify-and-forward relay.  In one-way mode the K sources transmit to the
relay in slot one and the relay forwards to the K destinations in slot two.
In two-way mode each pair exchanges data through the relay: the 2K effective
transmitters are the K sources (nodes 0..K-1) followed by the K destination
ends (nodes K..2K-1), where node K+k reaches the relay through the transpose
of the k-th downlink channel.  Every quantity here is a pure function of its
arguments, so values can be shared freely across threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

import numpy as np

from .linalg import herm, solve_hpd

ONE_WAY = "oneway"
TWO_WAY = "twoway"


class ConfigError(ValueError):
    """Raised when a system configuration violates its invariants."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (float(db) / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(float(value))


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemConfig:
    """Static description of the relay network.

    Antenna/stream counts are per pair; power budgets are linear scale.
    In two-way mode node K+k inherits pair k's stream count and source
    power budget (symmetric exchange).
    """

    k_pairs: int
    n_s: tuple
    n_r: int
    n_d: tuple
    n_b: tuple
    p_s: tuple
    p_r: float
    sigma2_r: float = 1.0
    sigma2_d: float = 1.0
    mode: str = ONE_WAY

    def __post_init__(self):
        k = self.k_pairs
        if k < 1:
            raise ConfigError("need at least one pair")
        for name in ("n_s", "n_d", "n_b", "p_s"):
            vals = getattr(self, name)
            if len(vals) != k:
                raise ConfigError(f"{name} must have K={k} entries, got {len(vals)}")
        if self.mode not in (ONE_WAY, TWO_WAY):
            raise ConfigError(f"unknown mode {self.mode!r}")
        for ns, nd, nb in zip(self.n_s, self.n_d, self.n_b):
            if not (1 <= nb <= ns):
                raise ConfigError(f"stream count {nb} outside [1, {ns}]")
            if self.mode == TWO_WAY and nb > nd:
                raise ConfigError(
                    f"two-way mode transmits {nb} streams from a {nd}-antenna node")
        total_streams = sum(self.n_b) * (2 if self.mode == TWO_WAY else 1)
        if self.n_r < total_streams:
            raise ConfigError(
                f"relay needs at least {total_streams} antennas, has {self.n_r}")
        if min(self.p_s) <= 0 or self.p_r <= 0 or self.sigma2_r <= 0 or self.sigma2_d <= 0:
            raise ConfigError("powers and noise variances must be strictly positive")

    # -- effective-node helpers (identity maps in one-way mode) --------------

    @property
    def node_count(self) -> int:
        return 2 * self.k_pairs if self.mode == TWO_WAY else self.k_pairs

    def pair_of(self, node: int) -> int:
        return node % self.k_pairs

    def partner(self, node: int) -> int:
        if self.mode != TWO_WAY:
            raise ConfigError("partner index is a two-way concept")
        return (node + self.k_pairs) % (2 * self.k_pairs)

    def node_antennas(self, node: int) -> int:
        if node < self.k_pairs:
            return self.n_s[node]
        return self.n_d[node - self.k_pairs]

    def node_streams(self, node: int) -> int:
        return self.n_b[self.pair_of(node)]

    def node_power(self, node: int) -> float:
        return self.p_s[self.pair_of(node)]

    def receive_antennas(self, node: int) -> int:
        """Antennas at the receiver of stream `node`.

        One-way: destination k.  Two-way: the receiving end is the node
        itself (it hears the broadcast phase).
        """
        if self.mode == TWO_WAY:
            return self.node_antennas(node)
        return self.n_d[node]

    def with_source_power_db(self, p_s_db: float) -> "SystemConfig":
        lin = db_to_linear(p_s_db)
        return replace(self, p_s=tuple(lin for _ in range(self.k_pairs)))


def _parse_int_list(raw: str, k: int, key: str) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) == 1:
        return tuple(int(parts[0]) for _ in range(k))
    if len(parts) != k:
        raise ConfigError(f"{key} needs 1 or K={k} comma-separated values")
    return tuple(int(p) for p in parts)


def config_from_dict(entries: dict) -> SystemConfig:
    """Build a SystemConfig from string key-value pairs (see load_config)."""
    required = ("K", "n_s", "n_r", "n_d", "n_b", "p_s_db", "p_r_db")
    for key in required:
        if key not in entries:
            raise ConfigError(f"missing config key {key!r}")
    known = set(required) | {"sigma2_r", "sigma2_d", "mode"}
    for key in entries:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    k = int(entries["K"])
    if k < 1:
        raise ConfigError("K must be >= 1")
    p_s_raw = [p.strip() for p in str(entries["p_s_db"]).split(",")]
    if len(p_s_raw) == 1:
        p_s = tuple(db_to_linear(float(p_s_raw[0])) for _ in range(k))
    elif len(p_s_raw) == k:
        p_s = tuple(db_to_linear(float(p)) for p in p_s_raw)
    else:
        raise ConfigError(f"p_s_db needs 1 or K={k} values")
    return SystemConfig(
        k_pairs=k,
        n_s=_parse_int_list(str(entries["n_s"]), k, "n_s"),
        n_r=int(entries["n_r"]),
        n_d=_parse_int_list(str(entries["n_d"]), k, "n_d"),
        n_b=_parse_int_list(str(entries["n_b"]), k, "n_b"),
        p_s=p_s,
        p_r=db_to_linear(float(entries["p_r_db"])),
        sigma2_r=float(entries.get("sigma2_r", 1.0)),
        sigma2_d=float(entries.get("sigma2_d", 1.0)),
        mode=str(entries.get("mode", ONE_WAY)).strip().lower(),
    )


def load_config(path) -> SystemConfig:
    """Parse a plain-text `key = value` config file.

    Recognized keys: K, n_s, n_r, n_d, n_b, p_s_db, p_r_db, sigma2_r,
    sigma2_d, mode.  Per-user integer keys accept a single value (applied to
    all pairs) or K comma-separated values.  Powers are given in dB.  Lines
    starting with `#` and blank lines are ignored.
    """
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            m = re.match(r"^([A-Za-z0-9_]+)\s*=\s*(.+)$", stripped)
            if not m:
                raise ConfigError(f"{path}:{lineno}: cannot parse {stripped!r}")
            entries[m.group(1)] = m.group(2).strip()
    return config_from_dict(entries)


# --------------------------------------------------------------------------
# channels
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelRealization:
    """One flat-fading draw: h[k] is N_r x n_s[k] (source to relay), g[k] is
    n_d[k] x N_r (relay to destination)."""

    h: tuple
    g: tuple
    seed: int


def generate_channels(cfg: SystemConfig, seed: int) -> ChannelRealization:
    """Draw i.i.d. circularly-symmetric complex Gaussian channels.

    Entries of h[k] have variance 1/n_s[k]; entries of g[k] have variance
    1/n_r.  The draw order is fixed (h first, then g), so results are
    reproducible from the integer seed alone.
    """
    rng = np.random.default_rng(seed)

    def draw(rows, cols, variance):
        scale = math.sqrt(variance / 2.0)
        return scale * (rng.standard_normal((rows, cols))
                        + 1j * rng.standard_normal((rows, cols)))

    h = tuple(draw(cfg.n_r, cfg.n_s[k], 1.0 / cfg.n_s[k]) for k in range(cfg.k_pairs))
    g = tuple(draw(cfg.n_d[k], cfg.n_r, 1.0 / cfg.n_r) for k in range(cfg.k_pairs))
    return ChannelRealization(h=h, g=g, seed=int(seed))


def uplink_channel(cfg: SystemConfig, ch: ChannelRealization, node: int) -> np.ndarray:
    """Channel from effective node `node` to the relay (N_r x antennas)."""
    if node < cfg.k_pairs:
        return ch.h[node]
    return ch.g[node - cfg.k_pairs].T


def downlink_channel(cfg: SystemConfig, ch: ChannelRealization, node: int) -> np.ndarray:
    """Channel from the relay to the receiver of stream `node`."""
    if cfg.mode == TWO_WAY:
        return uplink_channel(cfg, ch, node).T
    return ch.g[node]


# --------------------------------------------------------------------------
# designs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransceiverDesign:
    """Precoders b[j], relay matrix f, receivers w[j].

    Lists run over effective nodes: K entries in one-way mode, 2K in
    two-way mode (node K+k is pair k's opposite end).
    """

    b: tuple
    f: np.ndarray
    w: tuple

    def source_powers(self) -> list:
        return [float(np.real(np.trace(bk @ bk.conj().T))) for bk in self.b]


POWER_TOL = 1e-6


def design_is_feasible(cfg: SystemConfig, design: TransceiverDesign,
                       psi: np.ndarray) -> bool:
    for node, p in enumerate(design.source_powers()):
        if p > cfg.node_power(node) + POWER_TOL:
            return False
    return relay_power(design.f, psi) <= cfg.p_r + POWER_TOL


# --------------------------------------------------------------------------
# closed-form link quantities
# --------------------------------------------------------------------------

def received_covariance(cfg: SystemConfig, ch: ChannelRealization,
                        bs) -> np.ndarray:
    """Covariance of the relay's received signal for the given precoders.

    Sums over as many effective transmitters as `bs` provides (K one-way,
    2K two-way) and adds the relay noise floor.
    """
    if len(bs) != cfg.node_count:
        raise ValueError(f"expected {cfg.node_count} precoders, got {len(bs)}")
    psi = cfg.sigma2_r * np.eye(cfg.n_r, dtype=np.complex128)
    for node, bk in enumerate(bs):
        hb = uplink_channel(cfg, ch, node) @ bk
        psi = psi + hb @ hb.conj().T
    return herm(psi)


def excluded_covariance(cfg: SystemConfig, ch: ChannelRealization,
                        bs, node: int) -> np.ndarray:
    """Received covariance with node `node`'s own contribution removed."""
    psi = received_covariance(cfg, ch, bs)
    hb = uplink_channel(cfg, ch, node) @ bs[node]
    return herm(psi - hb @ hb.conj().T)


def relay_power(f: np.ndarray, psi: np.ndarray) -> float:
    """Average power the relay transmits: tr(F Psi F^H)."""
    fp = f @ psi @ f.conj().T
    return float(np.real(np.trace(fp)))


def _mse_terms(desired, interferers, w, f, downlink, sigma2_r, sigma2_d):
    """Shared MSE evaluation: desired/interferer effective links at one receiver."""
    n_b = desired.shape[1]
    lf = downlink @ f
    cross = w.conj().T @ lf @ desired
    cov = sigma2_d * (w.conj().T @ w)
    for path in interferers:
        t = w.conj().T @ lf @ path
        cov = cov + t @ t.conj().T
    noise_amp = w.conj().T @ lf
    cov = cov + sigma2_r * (noise_amp @ noise_amp.conj().T)
    e_mat = np.eye(n_b, dtype=np.complex128) - cross - cross.conj().T + cov
    return herm(e_mat)


def mse_oneway(cfg: SystemConfig, ch: ChannelRealization,
               design: TransceiverDesign, k: int):
    """Per-user MSE of stream k under the full one-way signal model.

    Returns (scalar trace, n_b x n_b error matrix).
    """
    if cfg.mode != ONE_WAY:
        raise ValueError("one-way MSE requested in two-way mode")
    _check_design_dims(cfg, design)
    paths = [uplink_channel(cfg, ch, j) @ design.b[j] for j in range(cfg.node_count)]
    e_mat = _mse_terms(paths[k], paths, design.w[k], design.f,
                       downlink_channel(cfg, ch, k), cfg.sigma2_r, cfg.sigma2_d)
    return float(np.real(np.trace(e_mat))), e_mat


def mse_twoway(cfg: SystemConfig, ch: ChannelRealization,
               design: TransceiverDesign, node: int) -> float:
    """Residual MSE at node `node` estimating its partner's streams.

    Self-interference (the node's own transmitted signal echoed by the
    relay) is cancelled before estimation, so the j = node term never
    appears; the partner's signal is the desired component.
    """
    if cfg.mode != TWO_WAY:
        raise ValueError("two-way MSE requested in one-way mode")
    return float(np.real(np.trace(mse_twoway_matrix(cfg, ch, design, node))))


def mse_twoway_matrix(cfg: SystemConfig, ch: ChannelRealization,
                      design: TransceiverDesign, node: int) -> np.ndarray:
    _check_design_dims(cfg, design)
    mate = cfg.partner(node)
    paths = {j: uplink_channel(cfg, ch, j) @ design.b[j]
             for j in range(cfg.node_count) if j != node}
    return _mse_terms(paths[mate], list(paths.values()), design.w[node],
                      design.f, downlink_channel(cfg, ch, node),
                      cfg.sigma2_r, cfg.sigma2_d)


def _check_design_dims(cfg: SystemConfig, design: TransceiverDesign) -> None:
    if len(design.b) != cfg.node_count or len(design.w) != cfg.node_count:
        raise ValueError(
            f"design must carry {cfg.node_count} precoder/receiver entries")
    for node, (bk, wk) in enumerate(zip(design.b, design.w)):
        ant, nb = cfg.node_antennas(node), cfg.node_streams(node)
        if bk.shape != (ant, nb):
            raise ValueError(f"precoder {node} has shape {bk.shape}, "
                             f"expected {(ant, nb)}")
        rx = cfg.receive_antennas(node)
        want = (rx, cfg.node_streams(cfg.partner(node)) if cfg.mode == TWO_WAY else nb)
        if wk.shape != want:
            raise ValueError(f"receiver {node} has shape {wk.shape}, expected {want}")
    if design.f.shape != (cfg.n_r, cfg.n_r):
        raise ValueError(f"relay matrix has shape {design.f.shape}, "
                         f"expected {(cfg.n_r, cfg.n_r)}")


# --------------------------------------------------------------------------
# MMSE receivers (closed forms shared by both optimizers and NAF)
# --------------------------------------------------------------------------

def mmse_receiver_for_node(cfg: SystemConfig, ch: ChannelRealization,
                           bs, f: np.ndarray, node: int) -> np.ndarray:
    """MMSE receive filter at the receiver of stream `node` for fixed B, F."""
    downlink = downlink_channel(cfg, ch, node)
    lf = downlink @ f
    if cfg.mode == TWO_WAY:
        desired_node = cfg.partner(node)
        active = [j for j in range(cfg.node_count) if j != node]
    else:
        desired_node = node
        active = list(range(cfg.node_count))
    rx = downlink.shape[0]
    cov = cfg.sigma2_d * np.eye(rx, dtype=np.complex128)
    for j in active:
        t = lf @ (uplink_channel(cfg, ch, j) @ bs[j])
        cov = cov + t @ t.conj().T
    cov = cov + cfg.sigma2_r * (lf @ lf.conj().T)
    rhs = lf @ (uplink_channel(cfg, ch, desired_node) @ bs[desired_node])
    return solve_hpd(herm(cov), rhs)


def fill_mmse_receivers(cfg: SystemConfig, ch: ChannelRealization,
                        bs, f: np.ndarray) -> tuple:
    return tuple(mmse_receiver_for_node(cfg, ch, bs, f, node)
                 for node in range(cfg.node_count))


# --------------------------------------------------------------------------
# naive amplify-and-forward baseline
# --------------------------------------------------------------------------

def naf_design(cfg: SystemConfig, ch: ChannelRealization) -> TransceiverDesign:
    """Equal-power baseline: unshaped precoders, scaled-identity relay.

    Each transmitter splits its budget evenly over its first n_b antennas
    (the whole array when n_b matches the antenna count — the classical
    no-precoding case).  Receivers are the MMSE filters for this (B, F).
    """
    bs = []
    for node in range(cfg.node_count):
        ant, nb = cfg.node_antennas(node), cfg.node_streams(node)
        b = np.zeros((ant, nb), dtype=np.complex128)
        b[:nb, :nb] = math.sqrt(cfg.node_power(node) / nb) * np.eye(nb)
        bs.append(b)
    bs = tuple(bs)
    psi = received_covariance(cfg, ch, bs)
    f = math.sqrt(cfg.p_r / float(np.real(np.trace(psi)))) \
        * np.eye(cfg.n_r, dtype=np.complex128)
    ws = fill_mmse_receivers(cfg, ch, bs, f)
    return TransceiverDesign(b=bs, f=f, w=ws)
