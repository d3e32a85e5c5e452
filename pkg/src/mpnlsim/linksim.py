"""End-to-end uplink slot simulation.

One frame = one slot: each of the N single-antenna vehicles encodes one
transport block (one LDPC codeword, rate-matched to its resource
allocation), modulates it over rb_per_vehicle resource blocks x 12 data
symbols, and all N streams superpose at the M-antenna receiver through
the channel grid.  Two DMRS symbols carry per-stream disjoint comb pilots
for least-squares channel estimation; in genie mode the true per-RE
channel is used instead.  Detection runs per resource element; LLRs are
concatenated per vehicle and LDPC-decoded.

Per-frame randomness is drawn from streams keyed by
(seed, channel index, frame index), so results are independent of
worker scheduling and batch partitioning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import detect as det
from . import fec
from .channel import ChannelGrid
from .core import DEFAULT_NUMEROLOGY, McsEntry, Numerology, modulate

DMRS_COMBS = 6   # disjoint subcarrier combs; 6 combs x 2 symbols = 12 ports


@dataclass(frozen=True)
class LinkConfig:
    n_streams: int
    m_antennas: int
    mcs: McsEntry
    detector: str = "mpnl"
    n_paths: int = 32
    rb_per_vehicle: int | None = None
    csi: str = "genie"
    numerology: Numerology = DEFAULT_NUMEROLOGY
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_streams <= 12:
            raise ValueError("n_streams must be in [1, 12]")
        if not 1 <= self.m_antennas <= 32:
            raise ValueError("m_antennas must be in [1, 32]")
        if self.detector not in det.DETECTOR_NAMES:
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.csi not in ("genie", "ls_dmrs"):
            raise ValueError("csi must be 'genie' or 'ls_dmrs'")
        if self.rb_per_vehicle is None:
            object.__setattr__(self, "rb_per_vehicle",
                               default_rb_allocation(self.mcs, self.numerology))
        if not 1 <= self.rb_per_vehicle <= self.numerology.n_rb:
            raise ValueError("rb_per_vehicle out of range")

    @property
    def n_subcarriers(self) -> int:
        return self.rb_per_vehicle * self.numerology.sc_per_rb

    @property
    def bits_per_block(self) -> int:
        re = self.n_subcarriers * self.numerology.data_symbols
        return re * self.mcs.constellation.bits_per_symbol


def default_rb_allocation(mcs: McsEntry, num: Numerology = DEFAULT_NUMEROLOGY,
                          code: fec.LdpcCode | None = None) -> int:
    """Largest RB count whose coded-bit load fits one mother codeword.

    The allocation is capped so the rate match stays realizable: the
    transport block needs at most k info bits and at most n - k parity
    bits from the mother code.
    """
    code = code or fec.default_code()
    bits_per_rb = num.sc_per_rb * num.data_symbols * \
        mcs.constellation.bits_per_symbol
    r = float(mcs.code_rate)
    cap = min(code.n, int(code.k / r), int((code.n - code.k) / (1 - r)))
    return max(1, cap // bits_per_rb)


@dataclass(frozen=True)
class PerResult:
    frames: int
    errors: int

    @property
    def per(self) -> float:
        return self.errors / self.frames

    @property
    def ci95_halfwidth(self) -> float:
        p = self.per
        return 1.96 * np.sqrt(max(p * (1 - p), 1e-12) / self.frames)


def _frame_rng(seed: int, chan_idx: int, frame_idx: int):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(seed, chan_idx, frame_idx)))


def _dmrs_pattern(num: Numerology, n_streams: int, n_sc: int):
    """(symbol, comb) assignment per stream; DMRS symbols are 3 and 12."""
    if n_streams > DMRS_COMBS * num.dmrs_symbols:
        raise ValueError("too many streams for the pilot book")
    dmrs_syms = (3, 12)[:num.dmrs_symbols]
    ports = []
    for v in range(n_streams):
        sym = dmrs_syms[v // DMRS_COMBS]
        comb = v % DMRS_COMBS
        ports.append((sym, np.arange(comb, n_sc, DMRS_COMBS)))
    return dmrs_syms, ports


def estimate_channel_ls(grid_obs: np.ndarray, pilots: np.ndarray,
                        cfg: LinkConfig) -> np.ndarray:
    """LS channel estimate from DMRS observations.

    grid_obs: (symbols, subcarriers, M) received samples of the whole slot;
    pilots: (n_streams, n_pilot_sc) transmitted pilot values per stream.
    Returns an (symbols, subcarriers, M, N) estimate via nearest-neighbour
    interpolation from each stream's pilot positions.
    """
    num = cfg.numerology
    n_sc = cfg.n_subcarriers
    m, n = cfg.m_antennas, cfg.n_streams
    _, ports = _dmrs_pattern(num, n, n_sc)
    h_est = np.empty((num.symbols_per_slot, n_sc, m, n), dtype=complex)
    for v, (sym, sc_idx) in enumerate(ports):
        obs = grid_obs[sym, sc_idx, :]                   # (n_pilot, M)
        h_pilot = obs / pilots[v][:, None]
        # nearest pilot subcarrier, constant across symbols
        nearest = np.abs(np.arange(n_sc)[:, None] - sc_idx[None, :]).argmin(axis=1)
        h_est[:, :, :, v] = h_pilot[nearest][None, :, :]
    return h_est


def _detect_llrs(cfg: LinkConfig, h_re: np.ndarray, y_re: np.ndarray,
                 noise_var: float, plan=None):
    """Per-RE detection over a flat batch; returns LLRs (B, N, bps)."""
    c = cfg.mcs.constellation
    name = cfg.detector
    if name in ("zf", "mmse"):
        _, llrs = det.linear_detect_batch(h_re, y_re, noise_var, c, name)
        return llrs
    if name == "ml":
        labels, metrics, _ = det.ml_detect_batch(h_re, y_re, noise_var, c)
        return det._candidate_llrs_batch(labels, metrics, noise_var, c)
    if name == "mpnl":
        if plan is None:
            plan = det.mpnl_plan_batch(h_re, noise_var, cfg.n_paths, c)
        labels, metrics, _ = det.mpnl_detect_batch(plan, h_re, y_re, c)
        return det._candidate_llrs_batch(labels, metrics, noise_var, c)
    raise ValueError(f"detector {name!r} has no link-level soft output")


def simulate_frames(cfg: LinkConfig, grid: ChannelGrid, noise_var: float,
                    chan_idx: int, frame_indices) -> np.ndarray:
    """Simulate a batch of frames on one channel realization.

    Returns a boolean array (n_frames, n_streams): True = transport block
    decoded correctly (converged and bit-exact).
    """
    num = cfg.numerology
    n_sc = cfg.n_subcarriers
    n, m = cfg.n_streams, cfg.m_antennas
    if grid.m_antennas < m or grid.n_streams < n or grid.n_subcarriers < n_sc:
        raise ValueError("channel grid is smaller than the configuration")
    h = grid.h[:, :n_sc, :m, :n]
    c = cfg.mcs.constellation
    bps = c.bits_per_symbol
    code = fec.default_code()
    rm = fec.design_rate_match(code, cfg.mcs.code_rate, cfg.bits_per_block)
    data_syms = [s for s in range(num.symbols_per_slot)
                 if s not in _dmrs_pattern(num, n, n_sc)[0]]
    n_re = len(data_syms) * n_sc
    frame_indices = list(frame_indices)
    f = len(frame_indices)

    # per-frame payloads and noise, drawn from per-frame streams
    info = np.empty((f, n, rm.k_tb), dtype=np.uint8)
    noise = np.empty((f, num.symbols_per_slot, n_sc, m), dtype=complex)
    for i, fi in enumerate(frame_indices):
        rng = _frame_rng(cfg.seed, chan_idx, fi)
        info[i] = rng.integers(0, 2, (n, rm.k_tb))
        noise[i] = np.sqrt(noise_var / 2) * (
            rng.standard_normal((num.symbols_per_slot, n_sc, m))
            + 1j * rng.standard_normal((num.symbols_per_slot, n_sc, m)))

    tx_bits = fec.encode_rate_matched(code, rm, info.reshape(f * n, rm.k_tb))
    symbols = modulate(tx_bits.reshape(-1), c).reshape(f, n, len(data_syms), n_sc)

    # transmit grid: (F, symbols, subcarriers, N)
    x = np.zeros((f, num.symbols_per_slot, n_sc, n), dtype=complex)
    for si, s in enumerate(data_syms):
        x[:, s, :, :] = symbols[:, :, si, :].transpose(0, 2, 1)
    dmrs_syms, ports = _dmrs_pattern(num, n, n_sc)
    pilots = []
    for v, (sym, sc_idx) in enumerate(ports):
        p = np.ones(sc_idx.size, dtype=complex)
        x[:, sym, sc_idx, v] = p
        pilots.append(p)
    pilots = np.array(pilots)

    y = np.einsum("tfmn,btfn->btfm", h, x) + noise    # (F, sym, sc, M)

    if cfg.csi == "genie":
        h_re = h[data_syms]                            # (12, sc, M, N)
        h_flat = h_re.reshape(n_re, m, n)
        plan = None
        if cfg.detector == "mpnl":
            plan = det.mpnl_plan_batch(h_flat, noise_var, cfg.n_paths, c)
        # same channel for all frames: tile observations
        y_flat = y[:, data_syms].reshape(f, n_re, m)
        llrs = np.empty((f, n_re, n, bps))
        for i in range(f):
            llrs[i] = _detect_llrs(cfg, h_flat, y_flat[i], noise_var, plan)
    else:
        llrs = np.empty((f, n_re, n, bps))
        for i in range(f):
            h_est = estimate_channel_ls(y[i], pilots, cfg)
            h_flat = h_est[data_syms].reshape(n_re, m, n)
            llrs[i] = _detect_llrs(cfg, h_flat,
                                   y[i, data_syms].reshape(n_re, m), noise_var)

    # per-vehicle LLR concatenation in RE order -> decode
    llrs_v = llrs.transpose(0, 2, 1, 3).reshape(f * n, n_re * bps)
    dec, conv = fec.decode_rate_matched(code, rm, llrs_v)
    ok = conv & ~np.any(dec != info.reshape(f * n, rm.k_tb), axis=1)
    return ok.reshape(f, n)


def simulate_slot(cfg: LinkConfig, grid: ChannelGrid, noise_var: float,
                  seed_frame: int = 0, chan_idx: int = 0) -> np.ndarray:
    """Single-frame outcome vector (n_streams,), True = decoded."""
    return simulate_frames(cfg, grid, noise_var, chan_idx, [seed_frame])[0]


def measure_per(cfg: LinkConfig, channels, noise_vars,
                frames_per_channel: int = 200,
                stop_threshold: float | None = None,
                min_frames: int = 400) -> PerResult:
    """Average transport-block error rate over a channel fixture set.

    channels: sequence of ChannelGrid; noise_vars: matching per-channel
    noise variances.  When stop_threshold is given, measurement stops
    early once the 95% CI excludes it (adaptive budget for sweeps).
    """
    if frames_per_channel < 1:
        raise ValueError("need at least one frame per channel")
    frames = 0
    errors = 0
    batch = 25
    for chan_idx, (grid, nv) in enumerate(zip(channels, noise_vars)):
        done = 0
        while done < frames_per_channel:
            take = min(batch, frames_per_channel - done)
            ok = simulate_frames(cfg, grid, nv, chan_idx,
                                 range(done, done + take))
            errors += int((~ok).sum())
            frames += ok.size
            done += take
            if stop_threshold is not None and frames >= min_frames:
                res = PerResult(frames=frames, errors=errors)
                lo = res.per - res.ci95_halfwidth
                hi = res.per + res.ci95_halfwidth
                if lo > stop_threshold or hi < stop_threshold:
                    return res
    return PerResult(frames=frames, errors=errors)
