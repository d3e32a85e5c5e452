"""Constellations, MCS table, numerology constants and bit/symbol mapping.

Mapping convention (normative): square QAM with independent per-axis Gray
coding. A log2(Q)-bit group is split in half; the first half indexes the
in-phase (real) level, the second half the quadrature level, MSB first.
Per-axis labels follow the binary-reflected Gray code over the amplitude
levels listed in *descending* order, so the all-zero label lands on the
most positive level (QPSK bits 00 -> (+1+1j)/sqrt(2)).

LLR sign convention (normative): positive LLR means bit 0 is more likely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

# Default max-log LLR clipping magnitude.
LLR_CLIP = 20.0


def _gray(i: int) -> int:
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    """Gray-labelled square QAM constellation with unit average energy."""

    order: int
    points: np.ndarray = field(repr=False)       # indexed by integer label
    bits_per_symbol: int = field(init=False)

    def __post_init__(self):
        if self.order not in (4, 16, 64):
            raise ValueError(f"unsupported constellation order {self.order}")
        object.__setattr__(self, "bits_per_symbol", int(np.log2(self.order)))

    @property
    def labels(self) -> np.ndarray:
        """Bit labels, shape (Q, bits_per_symbol); row i labels points[i]."""
        q = self.order
        b = self.bits_per_symbol
        idx = np.arange(q)
        return (idx[:, None] >> np.arange(b - 1, -1, -1)) & 1

    def nearest(self, y: np.ndarray) -> np.ndarray:
        """Integer labels of the nearest constellation points to y."""
        y = np.asarray(y)
        d = np.abs(y[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)


def _axis_levels(bits: int) -> np.ndarray:
    """Per-axis amplitude levels indexed by the Gray bit label."""
    n = 1 << bits
    desc = np.arange(n - 1, -n, -2, dtype=float)   # L-1, L-3, ..., -(L-1)
    levels = np.empty(n)
    for pos in range(n):
        levels[_gray(pos)] = desc[pos]
    return levels


def make_constellation(order: int) -> Constellation:
    """Build the unit-energy Gray-mapped constellation of the given order."""
    if order not in (4, 16, 64):
        raise ValueError(f"unsupported constellation order {order}")
    bits = int(np.log2(order))
    half = bits // 2
    lv = _axis_levels(half)
    norm = np.sqrt(2.0 * (4 ** half - 1) / 3.0)
    labels = np.arange(order)
    i_label = labels >> half
    q_label = labels & ((1 << half) - 1)
    points = (lv[i_label] + 1j * lv[q_label]) / norm
    return Constellation(order=order, points=points)


QPSK = make_constellation(4)
QAM16 = make_constellation(16)
QAM64 = make_constellation(64)

_BY_ORDER = {4: QPSK, 16: QAM16, 64: QAM64}


def constellation_for(order: int) -> Constellation:
    try:
        return _BY_ORDER[order]
    except KeyError:
        raise ValueError(f"unsupported constellation order {order}") from None


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation_order: int
    code_rate: Fraction

    @property
    def spectral_efficiency(self) -> float:
        return float(np.log2(self.modulation_order) * self.code_rate)

    @property
    def constellation(self) -> Constellation:
        return constellation_for(self.modulation_order)


# 28-entry table patterned on the 5G-NR 64QAM MCS table: indices 0-9 QPSK,
# 10-16 16-QAM, 17-27 64-QAM.  Index 16 uses 650/1024 (instead of NR's 658)
# so spectral efficiency is strictly increasing across the table.
_MCS_RATES = [
    (4, 120), (4, 157), (4, 193), (4, 251), (4, 308),
    (4, 379), (4, 449), (4, 526), (4, 602), (4, 679),
    (16, 340), (16, 378), (16, 434), (16, 490), (16, 553),
    (16, 616), (16, 650),
    (64, 438), (64, 466), (64, 517), (64, 567), (64, 616),
    (64, 666), (64, 719), (64, 772), (64, 822), (64, 873),
]

MCS_TABLE = tuple(
    McsEntry(i, q, Fraction(r, 1024)) for i, (q, r) in enumerate(_MCS_RATES)
) + (McsEntry(27, 64, Fraction(910, 1024)),)


def mcs_entry(index: int) -> McsEntry:
    if not 0 <= index <= 27:
        raise ValueError(f"MCS index {index} out of range [0, 27]")
    return MCS_TABLE[index]


@dataclass(frozen=True)
class Numerology:
    scs_hz: int = 30_000
    bandwidth_hz: int = 30_000_000
    n_rb: int = 78
    sc_per_rb: int = 12
    symbols_per_slot: int = 14
    data_symbols: int = 12
    dmrs_symbols: int = 2
    slot_duration_s: float = 0.0005

    def __post_init__(self):
        if self.data_symbols + self.dmrs_symbols != self.symbols_per_slot:
            raise ValueError("data + DMRS symbols must fill the slot")
        if self.n_rb * self.sc_per_rb * self.scs_hz > self.bandwidth_hz:
            raise ValueError("resource grid exceeds the bandwidth")

    @property
    def symbol_duration_s(self) -> float:
        return self.slot_duration_s / self.symbols_per_slot


DEFAULT_NUMEROLOGY = Numerology()


@dataclass(frozen=True)
class UseCase:
    name: str
    rate_bps: float

    def __post_init__(self):
        if self.rate_bps <= 0:
            raise ValueError("use-case rate must be positive")


# V2I/V2N uplink rate requirements (Mbps): teleoperated driving 50,
# basic safety 30, cooperative sensing 25, cooperative manoeuvring 5,
# traffic efficiency 2.
DEFAULT_USE_CASES = (
    UseCase("Teleoperated Driving", 50e6),
    UseCase("Basic Safety", 30e6),
    UseCase("Cooperative Sensing", 25e6),
    UseCase("Cooperative Manouvering", 5e6),
    UseCase("Traffic Efficiency", 2e6),
)


def modulate(bits, c: Constellation) -> np.ndarray:
    """Map a bit sequence onto constellation symbols, MSB-first per group."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    bps = c.bits_per_symbol
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} not divisible by {bps}")
    groups = bits.reshape(-1, bps)
    weights = 1 << np.arange(bps - 1, -1, -1)
    return c.points[groups @ weights]


def demap_llr(y_eq, noise_var: float, c: Constellation,
              clip: float = LLR_CLIP) -> np.ndarray:
    """Max-log per-bit LLRs; positive means bit 0 more likely.

    y_eq may be scalar or an array; output gains a trailing
    bits_per_symbol axis.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    y = np.asarray(y_eq, dtype=complex)
    d = np.abs(y[..., None] - c.points) ** 2      # (..., Q)
    bits = c.labels.astype(bool)                   # (Q, bps)
    d1 = np.where(bits.T, d[..., None, :], np.inf).min(axis=-1)
    d0 = np.where(~bits.T, d[..., None, :], np.inf).min(axis=-1)
    llr = (d1 - d0) / noise_var
    return np.clip(llr, -clip, clip)


def bits_from_labels(labels: np.ndarray, c: Constellation) -> np.ndarray:
    """Expand integer point labels to bit arrays (trailing bps axis)."""
    labels = np.asarray(labels, dtype=np.int64)
    shifts = np.arange(c.bits_per_symbol - 1, -1, -1)
    return (labels[..., None] >> shifts) & 1
