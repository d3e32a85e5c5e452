"""MIMO detectors.

Linear ZF/MMSE, exact maximum-likelihood oracles (exhaustive search and a
Schnorr-Euchner sphere decoder), and the fixed-complexity parallel-path
detector ("mpnl"): a channel-time preprocessing step plans a sorted-QR
candidate tree whose per-layer expansion counts multiply to exactly
n_paths, and at transmission time the n_paths candidate vectors are
completed independently of each other, so they can be evaluated on any
number of workers with bit-identical results.

All detectors break metric ties lexicographically over candidate bit
labels.  Batched variants (trailing `_batch`) operate on stacks of
instances and are the kernels used by the link simulator and the
throughput benchmark.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import LLR_CLIP, Constellation, bits_from_labels, demap_llr

ML_ENUM_GUARD = 1 << 16


class SingularChannelError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorInput:
    h: np.ndarray
    y: np.ndarray
    noise_var: float
    constellation: Constellation

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        y = np.asarray(self.y, dtype=complex).ravel()
        if h.ndim != 2 or y.size != h.shape[0]:
            raise ValueError("inconsistent channel/observation dimensions")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def n(self) -> int:
        return self.h.shape[1]


@dataclass(frozen=True)
class CandidateList:
    candidates: np.ndarray = field(repr=False)   # (P, N) complex
    labels: np.ndarray = field(repr=False)       # (P, N) int point labels
    metrics: np.ndarray = field(repr=False)      # (P,) true ||y - Hx||^2

    @property
    def n_paths(self) -> int:
        return self.candidates.shape[0]


@dataclass(frozen=True)
class DetectionOutput:
    hard: np.ndarray = field(repr=False)          # (N,) constellation points
    hard_labels: np.ndarray = field(repr=False)   # (N,) int
    llrs: np.ndarray = field(repr=False)          # (N, bits_per_symbol)
    min_metric: float
    soft: np.ndarray | None = field(default=None, repr=False)


def _residual_metric(h, y, x):
    r = y - h @ x
    return float(np.real(np.vdot(r, r)))


def _enumerate_labels(n: int, q: int) -> np.ndarray:
    """All q^n label vectors in lexicographic order (stream 0 most significant)."""
    count = q ** n
    idx = np.arange(count)
    out = np.empty((count, n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        out[:, j] = idx % q
        idx //= q
    return out


# ---------------------------------------------------------------------------
# linear detectors
# ---------------------------------------------------------------------------

def zf_detect(inp: DetectorInput) -> DetectionOutput:
    """Zero-forcing: pseudo-inverse equalization + per-stream slicing."""
    h, y, c = inp.h, inp.y, inp.constellation
    if inp.m < inp.n:
        raise SingularChannelError("ZF requires M >= N")
    gram = h.conj().T @ h
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise SingularChannelError("rank-deficient channel") from None
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularChannelError("rank-deficient channel")
    soft = gram_inv @ (h.conj().T @ y)
    nv_eff = inp.noise_var * np.real(np.diag(gram_inv))
    labels = c.nearest(soft)
    llrs = np.stack([demap_llr(soft[i], nv_eff[i], c) for i in range(inp.n)])
    hard = c.points[labels]
    return DetectionOutput(hard=hard, hard_labels=labels, llrs=llrs,
                           min_metric=_residual_metric(h, y, hard), soft=soft)


def mmse_detect(inp: DetectorInput) -> DetectionOutput:
    """MMSE equalization with unbiased per-stream noise scaling.

    The reported soft estimate is the raw (biased) MMSE output
    (H^H H + nv I)^-1 H^H y; slicing and LLRs use the unbiased estimate
    soft_i / beta_i with effective noise variance (1 - beta_i) / beta_i,
    beta_i = 1 - nv * [(H^H H + nv I)^-1]_ii.
    """
    h, y, c = inp.h, inp.y, inp.constellation
    n = inp.n
    a = h.conj().T @ h + inp.noise_var * np.eye(n)
    # Cholesky route; the acceptance oracle uses a direct solve instead
    from scipy.linalg import cho_factor, cho_solve
    cf = cho_factor(a)
    soft = cho_solve(cf, h.conj().T @ y)
    a_inv_diag = np.real(np.diag(cho_solve(cf, np.eye(n))))
    beta = np.clip(1.0 - inp.noise_var * a_inv_diag, 1e-12, None)
    unbiased = soft / beta
    nv_eff = np.clip((1.0 - beta) / beta, 1e-15, None)
    labels = c.nearest(unbiased)
    llrs = np.stack([demap_llr(unbiased[i], nv_eff[i], c) for i in range(n)])
    hard = c.points[labels]
    return DetectionOutput(hard=hard, hard_labels=labels, llrs=llrs,
                           min_metric=_residual_metric(h, y, hard), soft=soft)


# ---------------------------------------------------------------------------
# exact non-linear oracles
# ---------------------------------------------------------------------------

def ml_detect(inp: DetectorInput) -> DetectionOutput:
    """Exhaustive maximum-likelihood search over all Q^N candidates."""
    c = inp.constellation
    q, n = c.order, inp.n
    if q ** n > ML_ENUM_GUARD:
        raise ValueError(f"enumeration {q}^{n} exceeds guard {ML_ENUM_GUARD}")
    labels = _enumerate_labels(n, q)
    cands = c.points[labels]
    resid = inp.y[None, :] - cands @ inp.h.T
    metrics = np.sum(np.abs(resid) ** 2, axis=1)
    best = int(np.argmin(metrics))       # first hit = lexicographic tie-break
    hard = cands[best]
    clist = CandidateList(candidates=cands, labels=labels, metrics=metrics)
    llrs = llr_from_candidates(clist, inp.noise_var, c)
    return DetectionOutput(hard=hard, hard_labels=labels[best], llrs=llrs,
                           min_metric=_residual_metric(inp.h, inp.y, hard))


def sphere_detect(inp: DetectorInput) -> DetectionOutput:
    """Depth-first Schnorr-Euchner sphere decoder; exact ML hard output."""
    h, y, c = inp.h, inp.y, inp.constellation
    m, n = inp.m, inp.n
    if m < n:
        raise SingularChannelError("sphere decoder requires M >= N")
    qm, r = np.linalg.qr(h)
    diag = np.diag(r)
    if np.min(np.abs(diag)) < 1e-10 * np.max(np.abs(diag)):
        raise SingularChannelError("rank-deficient channel")
    # make the diagonal real positive
    phase = diag / np.abs(diag)
    r = (r.T * phase.conj()).T
    qm = qm * phase
    z = qm.conj().T @ y
    pts = c.points

    best_labels = None
    best_metric = np.inf

    stack = [(n - 1, 0.0, np.zeros(n, dtype=np.int64), z.copy())]
    while stack:
        layer, metric, labels, resid = stack.pop()
        center = resid[layer] / r[layer, layer]
        d = np.abs(center - pts) ** 2 * np.abs(r[layer, layer]) ** 2
        order = np.argsort(d, kind="stable")
        children = []
        for k in order:
            pm = metric + d[k]
            if pm >= best_metric:
                break                    # SE order: the rest are worse
            lab = labels.copy()
            lab[layer] = k
            if layer == 0:
                best_metric = pm
                best_labels = lab
            else:
                res = resid - r[:, layer] * pts[k]
                children.append((layer - 1, pm, lab, res))
        stack.extend(reversed(children))  # visit best child first

    hard = pts[best_labels]
    llrs = np.stack([demap_llr(hard[i], inp.noise_var, c) for i in range(n)])
    return DetectionOutput(hard=hard, hard_labels=best_labels, llrs=llrs,
                           min_metric=_residual_metric(h, y, hard))


# ---------------------------------------------------------------------------
# fixed-complexity parallel-path detector
# ---------------------------------------------------------------------------

def allocate_expansions(n_layers: int, q: int, n_paths: int,
                        n_forced: int = 0) -> tuple[np.ndarray, int]:
    """Per-layer expansion counts, non-increasing from the top layer down.

    Returns (expansions indexed by tree position, realized path count).
    Position n_layers-1 is the top (first-detected) layer.  The top
    `n_forced` layers are fully expanded when the budget allows (the
    rank-deficient layers of an overloaded channel).  If n_paths is not
    exactly representable as a product of factors <= q, the largest
    representable value below it is used.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n_paths = min(n_paths, q ** n_layers)
    if n_forced > 0 and n_paths < q ** n_forced:
        warnings.warn(
            f"n_paths={n_paths} < {q}^{n_forced}: cannot fully expand all "
            "rank-deficient layers", stacklevel=2)

    def factorize(budget: int, slots: int, cap: int):
        if budget == 1:
            return []
        if slots == 0:
            return None
        for d in range(min(cap, budget), 1, -1):
            if budget % d:
                continue
            rest = factorize(budget // d, slots - 1, d)
            if rest is not None:
                return [d] + rest
        return None

    for target in range(n_paths, 0, -1):
        forced = min(n_forced, n_layers)
        factors = []
        budget = target
        ok = True
        for _ in range(forced):
            if budget >= q and budget % q == 0:
                factors.append(q)
                budget //= q
            elif budget >= q:
                ok = False
                break
            else:
                # degraded forcing: put the whole remaining budget here
                factors.append(budget)
                budget = 1
        if not ok:
            continue
        rest = factorize(budget, n_layers - forced, min(q, factors[-1] if factors else q))
        if rest is None:
            continue
        factors += rest
        factors += [1] * (n_layers - len(factors))
        e = np.array(sorted(factors, reverse=True), dtype=np.int64)
        out = np.empty(n_layers, dtype=np.int64)
        out[::-1] = e                    # largest at the top position
        return out, target
    raise AssertionError("unreachable: n_paths=1 is always representable")


@dataclass(frozen=True)
class BatchPathPlan:
    """Candidate-tree plans for a stack of channel matrices."""

    perm: np.ndarray = field(repr=False)        # (B, N) column order by position
    qh: np.ndarray = field(repr=False)          # (B, N, M) top rows of Q^H
    r: np.ndarray = field(repr=False)           # (B, N, N) upper triangular
    expansions: np.ndarray = field(repr=False)  # (N,) shared across the batch
    n_paths: int = 0
    augmented: bool = False
    noise_var: float = 0.0
    fingerprint: bytes = b""

    @property
    def batch(self) -> int:
        return self.perm.shape[0]

    @property
    def n(self) -> int:
        return self.perm.shape[1]


@dataclass(frozen=True)
class PathPlan:
    """Single-channel view of a BatchPathPlan, per the planner contract."""

    ordering: np.ndarray
    q_factor: np.ndarray = field(repr=False)
    r_factor: np.ndarray = field(repr=False)
    expansions: np.ndarray
    n_paths: int
    requested_paths: int
    channel: np.ndarray = field(repr=False)
    noise_var: float = 0.0
    fingerprint: bytes = b""
    _batch: BatchPathPlan = field(default=None, repr=False)


def _sorted_qr_batch(a: np.ndarray):
    """Column-pivoted QR over a batch: strongest residual column first.

    a: (B, Ma, N).  Returns perm (B, N), q (B, Ma, N), r (B, N, N) with
    real non-negative diagonal.  Position 0 holds the strongest column,
    so |r_ii| decreases toward the top (first-detected) layer.
    """
    a = a.astype(complex).copy()
    b, ma, n = a.shape
    bi = np.arange(b)
    perm = np.tile(np.arange(n), (b, 1))
    r = np.zeros((b, n, n), dtype=complex)
    norms = np.sum(np.abs(a) ** 2, axis=1)       # (B, N)
    for k in range(n):
        piv = k + np.argmax(norms[:, k:], axis=1)
        # swap column k <-> pivot in a, norms, perm, and computed r rows
        ak = a[bi, :, k].copy()
        a[bi, :, k] = a[bi, :, piv]
        a[bi, :, piv] = ak
        for arr in (norms, perm):
            tmp = arr[bi, k].copy()
            arr[bi, k] = arr[bi, piv]
            arr[bi, piv] = tmp
        if k:
            tmp = r[bi, :k, k].copy()
            r[bi, :k, k] = r[bi, :k, piv]
            r[bi, :k, piv] = tmp
        rkk = np.sqrt(np.sum(np.abs(a[:, :, k]) ** 2, axis=1))
        rkk = np.maximum(rkk, 1e-300)
        r[:, k, k] = rkk
        qk = a[:, :, k] / rkk[:, None]
        a[:, :, k] = qk
        if k + 1 < n:
            proj = np.einsum("bm,bmj->bj", qk.conj(), a[:, :, k + 1:])
            r[:, k, k + 1:] = proj
            a[:, :, k + 1:] -= qk[:, :, None] * proj[:, None, :]
            norms[:, k + 1:] = np.maximum(norms[:, k + 1:] - np.abs(proj) ** 2, 0.0)
    return perm, a, r


def mpnl_plan_batch(h: np.ndarray, noise_var: float, n_paths: int,
                    c: Constellation) -> BatchPathPlan:
    """Plan candidate trees for a (B, M, N) channel stack.

    Overloaded channels (N > M) are planned on the noise-augmented matrix
    [H; sqrt(nv) I] so every layer has a positive diagonal; the N - M top
    layers are then fully expanded.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim == 2:
        h = h[None]
    b, m, n = h.shape
    augmented = n > m
    expansions, realized = allocate_expansions(
        n, c.order, n_paths, n_forced=max(0, n - m))
    if augmented:
        a = np.concatenate(
            [h, np.sqrt(noise_var) * np.broadcast_to(np.eye(n), (b, n, n))],
            axis=1)
    else:
        a = h
    perm, q, r = _sorted_qr_batch(a)
    qh = q[:, :m, :].conj().transpose(0, 2, 1)   # (B, N, M)
    fp = hashlib.sha1(h.tobytes()).digest()
    return BatchPathPlan(perm=perm, qh=np.ascontiguousarray(qh), r=r,
                         expansions=expansions, n_paths=realized,
                         augmented=augmented, noise_var=noise_var,
                         fingerprint=fp)


def mpnl_preprocess(h: np.ndarray, noise_var: float, n_paths: int,
                    c: Constellation) -> PathPlan:
    """Channel-time planning for a single matrix."""
    h = np.asarray(h, dtype=complex)
    bp = mpnl_plan_batch(h[None], noise_var, n_paths, c)
    return PathPlan(ordering=bp.perm[0], q_factor=bp.qh[0].conj().T,
                    r_factor=bp.r[0], expansions=bp.expansions,
                    n_paths=bp.n_paths, requested_paths=n_paths,
                    channel=h, noise_var=noise_var,
                    fingerprint=bp.fingerprint, _batch=bp)


def _tree_labels(z: np.ndarray, r: np.ndarray, expansions: np.ndarray,
                 points: np.ndarray) -> np.ndarray:
    """Expand the planned tree; returns point labels (B, n_paths, N) in
    tree-position order (column 0 = bottom layer).

    Each partial path expands to its expansions[pos] best children in
    Schnorr-Euchner (closest-first) order; paths never interact, so the
    result is independent of evaluation order and worker partitioning.
    """
    b, n = z.shape
    acc = np.zeros((b, 1, n), dtype=complex)
    labels = np.zeros((b, 1, n), dtype=np.int64)
    for pos in range(n - 1, -1, -1):
        e = int(expansions[pos])
        center = (z[:, None, pos] - acc[:, :, pos]) / r[:, None, pos, pos].real
        d = np.abs(center[:, :, None] - points) ** 2
        idx = np.argsort(d, axis=-1, kind="stable")[..., :e]   # (B, P, e)
        p = labels.shape[1]
        labels = np.repeat(labels[:, :, None, :], e, axis=2).reshape(b, p * e, n)
        labels[:, :, pos] = idx.reshape(b, p * e)
        if pos:
            sym = points[idx]                                   # (B, P, e)
            acc = (acc[:, :, None, :]
                   + r[:, None, None, :, pos] * sym[..., None]).reshape(
                       b, p * e, n)
    return labels


def _order_by_position(labels_pos: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Scatter tree-position labels back to original stream order."""
    b, p, n = labels_pos.shape
    out = np.empty_like(labels_pos)
    bi = np.arange(b)[:, None, None]
    out[bi, np.arange(p)[None, :, None], perm[:, None, :]] = labels_pos
    return out


def _candidate_llrs_batch(labels: np.ndarray, metrics: np.ndarray,
                          noise_var, c: Constellation,
                          clip: float = LLR_CLIP) -> np.ndarray:
    """Max-log LLRs over candidate lists: labels (B, P, N), metrics (B, P)."""
    bits = bits_from_labels(labels, c).astype(bool)      # (B, P, N, bps)
    mm = metrics[:, :, None, None]
    min1 = np.where(bits, mm, np.inf).min(axis=1)        # (B, N, bps)
    min0 = np.where(~bits, mm, np.inf).min(axis=1)
    nv = np.asarray(noise_var)
    if nv.ndim:
        nv = nv.reshape((-1,) + (1,) * (min0.ndim - 1))
    with np.errstate(invalid="ignore"):
        llr = (min1 - min0) / nv
    return np.clip(llr, -clip, clip)


def llr_from_candidates(clist: CandidateList, noise_var: float,
                        c: Constellation, clip: float = LLR_CLIP) -> np.ndarray:
    """List-based max-log LLRs; bits with no counter-hypothesis saturate."""
    if clist.n_paths < 1:
        raise ValueError("empty candidate list")
    return _candidate_llrs_batch(clist.labels[None], clist.metrics[None],
                                 noise_var, c, clip)[0]


def _select_best(labels: np.ndarray, metrics: np.ndarray):
    """Total-order (metric, label) argmin per batch row."""
    b, p, n = labels.shape
    keys = [labels[:, :, j] for j in range(n - 1, -1, -1)] + [metrics]
    order = np.lexsort(tuple(keys), axis=1)
    return order[:, 0]


def mpnl_detect_batch(plan: BatchPathPlan, h: np.ndarray, y: np.ndarray,
                      c: Constellation):
    """Run the planned parallel-path search on observations y (B, M).

    Returns (labels (B, P, N), metrics (B, P), best index (B,)).  Metrics
    are the true residuals ||y - H x||^2 regardless of any augmentation
    used during planning.
    """
    z = np.einsum("bnm,bm->bn", plan.qh, y)
    labels_pos = _tree_labels(z, plan.r, plan.expansions, c.points)
    labels = _order_by_position(labels_pos, plan.perm)
    cands = c.points[labels]                             # (B, P, N)
    resid = y[:, None, :] - np.einsum("bmn,bpn->bpm", h, cands)
    metrics = np.sum(np.abs(resid) ** 2, axis=2)
    best = _select_best(labels, metrics)
    return labels, metrics, best


def mpnl_detect(plan: PathPlan, inp: DetectorInput):
    """Evaluate the planned candidate paths for one observation."""
    fp = hashlib.sha1(np.asarray(inp.h, dtype=complex).tobytes()).digest()
    if fp != plan.fingerprint:
        raise ValueError("plan/channel fingerprint mismatch")
    c = inp.constellation
    labels, metrics, best = mpnl_detect_batch(
        plan._batch, inp.h[None], inp.y[None], c)
    labels, metrics, b = labels[0], metrics[0], int(best[0])
    cands = c.points[labels]
    clist = CandidateList(candidates=cands, labels=labels, metrics=metrics)
    llrs = llr_from_candidates(clist, inp.noise_var, c)
    hard = cands[b]
    out = DetectionOutput(hard=hard, hard_labels=labels[b], llrs=llrs,
                          min_metric=_residual_metric(inp.h, inp.y, hard))
    return clist, out


# ---------------------------------------------------------------------------
# batched kernels for the link simulator / benchmark
# ---------------------------------------------------------------------------

def ml_detect_batch(h: np.ndarray, y: np.ndarray, noise_var,
                    c: Constellation):
    """Exhaustive search over a (B, M, N) / (B, M) stack."""
    b, m, n = h.shape
    q = c.order
    if q ** n > ML_ENUM_GUARD:
        raise ValueError("enumeration guard exceeded")
    labels = _enumerate_labels(n, q)
    cands = c.points[labels]                             # (C, N)
    resid = y[:, None, :] - np.einsum("bmn,cn->bcm", h, cands)
    metrics = np.sum(np.abs(resid) ** 2, axis=2)         # (B, C)
    best = np.argmin(metrics, axis=1)
    return (np.broadcast_to(labels, (b,) + labels.shape), metrics, best)


def linear_detect_batch(h: np.ndarray, y: np.ndarray, noise_var,
                        c: Constellation, mode: str):
    """Batched ZF/MMSE.  Returns (hard labels (B, N), llrs (B, N, bps))."""
    b, m, n = h.shape
    hh = h.conj().transpose(0, 2, 1)
    gram = hh @ h
    hy = np.einsum("bnm,bm->bn", hh, y)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), (b,))
    if mode == "zf":
        a = gram
    elif mode == "mmse":
        a = gram + nv[:, None, None] * np.eye(n)
    else:
        raise ValueError(f"unknown linear mode {mode!r}")
    a_inv = np.linalg.inv(a)
    soft = np.einsum("bij,bj->bi", a_inv, hy)
    diag = np.real(np.einsum("bii->bi", a_inv))
    if mode == "zf":
        est = soft
        nv_eff = nv[:, None] * diag
    else:
        beta = np.clip(1.0 - nv[:, None] * diag, 1e-12, None)
        est = soft / beta
        nv_eff = np.clip((1.0 - beta) / beta, 1e-15, None)
    labels = c.nearest(est)
    llrs = np.empty((b, n, c.bits_per_symbol))
    for i in range(n):
        raw = demap_llr(est[:, i], 1.0, c, clip=np.inf)
        llrs[:, i] = raw / nv_eff[:, i, None]
    return labels, np.clip(llrs, -LLR_CLIP, LLR_CLIP)


DETECTOR_NAMES = ("zf", "mmse", "ml", "sphere", "mpnl")


def detect(name: str, inp: DetectorInput, n_paths: int = 32) -> DetectionOutput:
    """Name-based detector dispatch."""
    if name == "zf":
        return zf_detect(inp)
    if name == "mmse":
        return mmse_detect(inp)
    if name == "ml":
        return ml_detect(inp)
    if name == "sphere":
        return sphere_detect(inp)
    if name == "mpnl":
        plan = mpnl_preprocess(inp.h, inp.noise_var, n_paths, inp.constellation)
        return mpnl_detect(plan, inp)[1]
    raise ValueError(f"unknown detector {name!r}")
