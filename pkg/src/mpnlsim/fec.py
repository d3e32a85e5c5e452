"""LDPC coding: quasi-cyclic rate-1/2 mother code, normalized min-sum
decoding (max 10 iterations), and shortening/puncturing rate matching to
hit MCS code rates.

The shipped code lifts a 12x24 base matrix with circulant size 54
(n = 1296, k = 648).  The base matrix was searched offline for girth >= 6
and full rank; the parity part is dual-diagonal.  Alternative codes can
be loaded from alist files, so the mother code is config-swappable.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

MIN_SUM_NORMALIZATION = 0.8125
DEFAULT_MAX_ITER = 10

# LLR magnitude assigned to shortened (known-zero) bits at the decoder.
SHORTENED_LLR = 1e7

LIFT = 54
# -1 marks an all-zero block; other entries are circulant right-shifts.
BASE_MATRIX = (
    (-1, -1, -1, -1, -1, -1, 47, -1, -1, 16, -1, 45, 1, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1),
    (-1, -1, -1, -1, -1, -1, 24, -1, 29, -1, 8, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1),
    (-1, -1, 20, 46, -1, -1, -1, 0, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1),
    (-1, -1, -1, 0, 13, -1, -1, 53, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1),
    (-1, -1, -1, -1, 4, -1, -1, 9, -1, -1, 23, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1),
    (14, -1, -1, -1, -1, 52, -1, -1, -1, -1, -1, 11, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1),
    (-1, -1, -1, -1, -1, 13, -1, -1, 37, -1, 24, -1, 0, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1),
    (-1, -1, -1, -1, 7, 4, -1, -1, -1, 26, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1),
    (-1, 34, -1, -1, -1, -1, -1, -1, 39, -1, -1, 29, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1),
    (22, 43, 28, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1),
    (35, -1, -1, 26, -1, -1, -1, -1, -1, 50, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0),
    (-1, 48, 10, -1, -1, -1, 31, -1, -1, -1, -1, -1, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0),
)


def expand_base_matrix(base=BASE_MATRIX, lift: int = LIFT) -> np.ndarray:
    """Lift a base matrix of circulant shifts to a dense binary H."""
    base = np.asarray(base)
    mb, nb = base.shape
    h = np.zeros((mb * lift, nb * lift), dtype=np.uint8)
    eye = np.eye(lift, dtype=np.uint8)
    for i in range(mb):
        for j in range(nb):
            s = base[i, j]
            if s >= 0:
                h[i * lift:(i + 1) * lift, j * lift:(j + 1) * lift] = \
                    np.roll(eye, -int(s), axis=1)
    return h


def _gf2_parity_solver(h: np.ndarray) -> np.ndarray:
    """E such that parity = E @ info (mod 2) for systematic encoding.

    Info bits occupy the first k columns, parity the last n - k; raises
    if the parity submatrix is singular.
    """
    m, n = h.shape
    k = n - m
    work = h.astype(np.uint8).copy()
    # eliminate on the parity columns
    for r, c in enumerate(range(k, n)):
        piv = np.nonzero(work[r:, c])[0]
        if piv.size == 0:
            raise ValueError("parity submatrix is singular")
        p = piv[0] + r
        if p != r:
            work[[r, p]] = work[[p, r]]
        mask = work[:, c].astype(bool)
        mask[r] = False
        work[mask] ^= work[r]
    return work[:, :k].copy()


@dataclass
class LdpcCode:
    """Binary LDPC code defined by its parity-check matrix."""

    parity_check: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.parity_check, dtype=np.uint8)
        if h.ndim != 2 or h.shape[0] >= h.shape[1]:
            raise ValueError("parity-check matrix must be m x n with m < n")
        self.parity_check = h

    @property
    def n(self) -> int:
        return self.parity_check.shape[1]

    @property
    def k(self) -> int:
        return self.n - self.parity_check.shape[0]

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    @cached_property
    def _encoder(self) -> np.ndarray:
        return _gf2_parity_solver(self.parity_check)

    @cached_property
    def _graph(self):
        """Padded edge structures for vectorized min-sum."""
        h = self.parity_check
        m, n = h.shape
        rows, cols = np.nonzero(h)
        dc = np.bincount(rows, minlength=m)
        dv = np.bincount(cols, minlength=n)
        max_dc, max_dv = int(dc.max()), int(dv.max())
        check_vars = np.zeros((m, max_dc), dtype=np.int64)
        check_mask = np.zeros((m, max_dc), dtype=bool)
        slot = np.zeros(m, dtype=np.int64)
        edge_flat = np.empty(rows.size, dtype=np.int64)
        for e, (r, c) in enumerate(zip(rows, cols)):
            s = slot[r]
            check_vars[r, s] = c
            check_mask[r, s] = True
            edge_flat[e] = r * max_dc + s
            slot[r] = s + 1
        # var-centric view: flat edge indices, padded with a dummy slot
        pad = m * max_dc
        var_edges = np.full((n, max_dv), pad, dtype=np.int64)
        slot = np.zeros(n, dtype=np.int64)
        for e, c in enumerate(cols):
            var_edges[c, slot[c]] = edge_flat[e]
            slot[c] += 1
        return check_vars, check_mask, var_edges


def ldpc_encode(code: LdpcCode, info: np.ndarray) -> np.ndarray:
    """Systematic encoding; accepts (k,) or (B, k) bit arrays."""
    info = np.asarray(info, dtype=np.uint8)
    single = info.ndim == 1
    if single:
        info = info[None]
    if info.shape[-1] != code.k:
        raise ValueError(f"info length {info.shape[-1]} != k = {code.k}")
    parity = (info @ code._encoder.T) % 2
    cw = np.concatenate([info, parity.astype(np.uint8)], axis=-1)
    return cw[0] if single else cw


def ldpc_syndrome(code: LdpcCode, bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return (bits @ code.parity_check.T) % 2


def ldpc_decode(code: LdpcCode, llrs: np.ndarray,
                max_iter: int = DEFAULT_MAX_ITER,
                alpha: float = MIN_SUM_NORMALIZATION):
    """Normalized min-sum decoding.

    llrs: (n,) or (B, n), positive = bit 0 more likely.  Returns
    (info bits, converged) with matching leading shape.  Convergence is a
    zero syndrome on the running hard decision; non-convergence yields the
    final-iteration hard decision.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    single = llrs.ndim == 1
    if single:
        llrs = llrs[None]
    if not np.all(np.isfinite(llrs)):
        raise ValueError("LLRs must be finite")
    b, n = llrs.shape
    if n != code.n:
        raise ValueError(f"LLR length {n} != codeword length {code.n}")
    check_vars, check_mask, var_edges = code._graph
    m, max_dc = check_vars.shape

    out_bits = (llrs < 0).astype(np.uint8)
    done = ~np.any(ldpc_syndrome(code, out_bits), axis=1)

    m_vc = llrs[:, check_vars].copy()                 # (B, m, dc)
    m_vc[:, ~check_mask] = np.inf
    m_cv_flat = np.zeros((b, m * max_dc + 1))

    for _ in range(max_iter):
        if np.all(done):
            break
        # check-node update
        neg = m_vc < 0
        par = np.logical_xor.reduce(neg, axis=2)       # (B, m)
        sgn = np.where(np.logical_xor(par[:, :, None], neg), -1.0, 1.0)
        mag = np.abs(m_vc)
        amin = np.argmin(mag, axis=2)
        min1 = np.take_along_axis(mag, amin[:, :, None], axis=2)[:, :, 0]
        tmp = mag.copy()
        np.put_along_axis(tmp, amin[:, :, None], np.inf, axis=2)
        min2 = tmp.min(axis=2)
        ext = np.where(np.arange(max_dc) == amin[:, :, None],
                       min2[:, :, None], min1[:, :, None])
        m_cv = alpha * sgn * ext
        m_cv[:, ~check_mask] = 0.0
        m_cv_flat[:, :-1] = m_cv.reshape(b, -1)
        # variable-node update
        total = llrs + m_cv_flat[:, var_edges].sum(axis=2)
        bits = (total < 0).astype(np.uint8)
        newly = ~done & ~np.any(ldpc_syndrome(code, bits), axis=1)
        out_bits[newly] = bits[newly]
        done |= newly
        m_vc = total[:, check_vars] - m_cv
        m_vc[:, ~check_mask] = np.inf

    if not np.all(done):
        # final-iteration hard decision for unconverged words
        total = llrs + m_cv_flat[:, var_edges].sum(axis=2)
        bits = (total < 0).astype(np.uint8)
        out_bits[~done] = bits[~done]
    info = out_bits[:, :code.k]
    if single:
        return info[0], bool(done[0])
    return info, done


_DEFAULT_CODE = None


def default_code() -> LdpcCode:
    global _DEFAULT_CODE
    if _DEFAULT_CODE is None:
        _DEFAULT_CODE = LdpcCode(expand_base_matrix())
    return _DEFAULT_CODE


# ---------------------------------------------------------------------------
# rate matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateMatch:
    """Shortening/puncturing pattern fitting the mother code to a target
    rate and transmitted block length."""

    target_rate: Fraction
    n_tx: int
    k_tb: int
    n_shortened: int
    n_punctured: int

    @property
    def method(self) -> str:
        parts = []
        if self.n_shortened:
            parts.append("shorten")
        if self.n_punctured:
            parts.append("puncture")
        return "+".join(parts) or "none"

    @property
    def effective_rate(self) -> float:
        return self.k_tb / self.n_tx


def design_rate_match(code: LdpcCode, target_rate, n_tx: int) -> RateMatch:
    """Fit the mother code to n_tx transmitted bits at target_rate.

    Shortens trailing info bits (known zeros) and punctures trailing
    parity bits.  The effective rate must land within 2% of the target.
    """
    target = Fraction(target_rate)
    if not 0 < target < 1:
        raise ValueError("target rate must be in (0, 1)")
    k_tb = max(1, round(n_tx * target))
    p = n_tx - k_tb
    if k_tb > code.k:
        raise ValueError(f"needs {k_tb} info bits; mother code has {code.k}")
    if p > code.n - code.k:
        raise ValueError(f"needs {p} parity bits; mother code has "
                         f"{code.n - code.k}")
    if p < 1:
        raise ValueError("allocation leaves no parity bits")
    rm = RateMatch(target_rate=target, n_tx=n_tx, k_tb=k_tb,
                   n_shortened=code.k - k_tb,
                   n_punctured=(code.n - code.k) - p)
    if abs(rm.effective_rate - float(target)) > 0.02 * float(target):
        raise ValueError(
            f"effective rate {rm.effective_rate:.4f} misses target "
            f"{float(target):.4f} by more than 2%")
    return rm


def encode_rate_matched(code: LdpcCode, rm: RateMatch,
                        info: np.ndarray) -> np.ndarray:
    """Encode k_tb info bits into n_tx transmitted bits."""
    info = np.asarray(info, dtype=np.uint8)
    single = info.ndim == 1
    if single:
        info = info[None]
    if info.shape[-1] != rm.k_tb:
        raise ValueError(f"info length {info.shape[-1]} != k_tb = {rm.k_tb}")
    full = np.zeros((info.shape[0], code.k), dtype=np.uint8)
    full[:, :rm.k_tb] = info
    cw = ldpc_encode(code, full)
    p = rm.n_tx - rm.k_tb
    tx = np.concatenate([cw[:, :rm.k_tb], cw[:, code.k:code.k + p]], axis=-1)
    return tx[0] if single else tx


def decode_rate_matched(code: LdpcCode, rm: RateMatch, llrs_tx: np.ndarray,
                        max_iter: int = DEFAULT_MAX_ITER):
    """Decode transmitted-bit LLRs back to k_tb info bits."""
    llrs_tx = np.asarray(llrs_tx, dtype=np.float64)
    single = llrs_tx.ndim == 1
    if single:
        llrs_tx = llrs_tx[None]
    if llrs_tx.shape[-1] != rm.n_tx:
        raise ValueError(f"LLR length {llrs_tx.shape[-1]} != n_tx = {rm.n_tx}")
    b = llrs_tx.shape[0]
    p = rm.n_tx - rm.k_tb
    full = np.zeros((b, code.n))
    full[:, :rm.k_tb] = llrs_tx[:, :rm.k_tb]
    full[:, rm.k_tb:code.k] = SHORTENED_LLR          # known zeros
    full[:, code.k:code.k + p] = llrs_tx[:, rm.k_tb:]
    info, conv = ldpc_decode(code, full, max_iter=max_iter)
    info = info[:, :rm.k_tb]
    if single:
        return info[0], bool(conv[0])
    return info, conv


# ---------------------------------------------------------------------------
# alist I/O
# ---------------------------------------------------------------------------

def load_alist(path) -> LdpcCode:
    """Read a parity-check matrix in the common alist text format."""
    with open(path) as f:
        tokens = f.read().split()
    it = iter(tokens)
    n, m = int(next(it)), int(next(it))
    max_dv = int(next(it))
    int(next(it))                                    # max check degree
    [int(next(it)) for _ in range(n)]                # per-column degrees
    [int(next(it)) for _ in range(m)]                # per-row degrees
    h = np.zeros((m, n), dtype=np.uint8)
    for col in range(n):
        for _ in range(max_dv):                      # zero-padded entries
            row = int(next(it))
            if row > 0:
                h[row - 1, col] = 1
    return LdpcCode(h)


def save_alist(code: LdpcCode, path) -> None:
    h = code.parity_check
    m, n = h.shape
    dv = h.sum(axis=0)
    dc = h.sum(axis=1)
    lines = [f"{n} {m}", f"{dv.max()} {dc.max()}",
             " ".join(map(str, dv)), " ".join(map(str, dc))]
    for col in range(n):
        rows = np.nonzero(h[:, col])[0] + 1
        pad = [0] * (dv.max() - rows.size)
        lines.append(" ".join(map(str, list(rows) + pad)))
    for row in range(m):
        cols = np.nonzero(h[row])[0] + 1
        pad = [0] * (dc.max() - cols.size)
        lines.append(" ".join(map(str, list(cols) + pad)))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
