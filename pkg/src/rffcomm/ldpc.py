"""Quasi-cyclic LDPC codes (IEEE 802.11n family) and sum-product decoding.

The lifted parity-check matrix replaces each base entry ``s >= 0`` by the
Z x Z identity cyclically shifted by ``s`` columns (row r has its one in column
(r + s) mod Z) and each ``-1`` by the zero block.  Encoding exploits the
dual-diagonal parity part and runs in linear time.

Decoder hard decisions follow the package convention: posterior LLR < 0 means
bit 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import _bp
from .errors import NumericError, ParameterError, SingularityError, UnsupportedCodeError
from .features import FourierFeatureMap, ddrff_transform, rff_transform

log = logging.getLogger(__name__)

__all__ = [
    "BASE_648_R12",
    "DecodeResult",
    "RkhsDecodeResult",
    "RkhsDetector",
    "ParityCheckSystem",
    "build_code",
    "encode",
    "fit_detector",
    "from_parity_matrix",
    "gf2_rank",
    "load_base_matrix",
    "rkhs_mp_decode",
    "rkhs_mp_decode_batch",
    "syndrome",
    "sum_product_decode",
]

# IEEE 802.11n, rate 1/2, n = 648, Z = 27
BASE_648_R12 = np.array(
    [
        [0, -1, -1, -1, 0, 0, -1, -1, 0, -1, -1, 0, 1, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1],
        [22, 0, -1, -1, 17, -1, 0, 0, 12, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1, -1],
        [6, -1, 0, -1, 10, -1, -1, -1, 24, -1, 0, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1, -1],
        [2, -1, -1, 0, 20, -1, -1, -1, 25, 0, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1, -1],
        [23, -1, -1, -1, 3, -1, -1, -1, 0, -1, 9, 11, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1, -1],
        [24, -1, 23, 1, 17, -1, 3, -1, 10, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1, -1],
        [25, -1, -1, -1, 8, -1, -1, -1, 7, 18, -1, -1, 0, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1, -1],
        [13, 24, -1, -1, 0, -1, 8, -1, 6, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1, -1],
        [7, 20, -1, 16, 22, 10, -1, -1, 23, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1, -1],
        [11, -1, -1, -1, 19, -1, -1, -1, 13, -1, 3, 17, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0, -1],
        [25, -1, 8, -1, 23, 18, -1, 14, 9, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0, 0],
        [3, -1, -1, -1, 16, -1, -1, 2, 25, 5, -1, -1, 1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, 0],
    ],
    dtype=np.int64,
)
BASE_648_R12.setflags(write=False)

_CODES = {(648, Fraction(1, 2)): (BASE_648_R12, 27)}


@dataclass(frozen=True, eq=False)
class ParityCheckSystem:
    """Sparse H plus the Tanner-graph index arrays used by the decoders.

    Edges are numbered in check-major order.  ``check_slots`` (checks x max
    check degree) and ``bit_slots`` (bits x max bit degree) list edge ids per
    node, padded with -1.
    """

    H: sp.csr_matrix
    edge_check: np.ndarray
    edge_bit: np.ndarray
    check_ptr: np.ndarray
    bit_ptr: np.ndarray
    bit_edges: np.ndarray
    check_slots: np.ndarray
    bit_slots: np.ndarray
    base: np.ndarray | None = None
    lift: int = 1
    rank: int = 0  # GF(2) rank of H; redundant rows are allowed

    @property
    def n_checks(self) -> int:
        return self.H.shape[0]

    @property
    def n_bits(self) -> int:
        return self.H.shape[1]

    @property
    def n_info(self) -> int:
        return self.n_bits - self.rank

    def check_neighbors(self, c: int) -> np.ndarray:
        return self.edge_bit[self.check_ptr[c]:self.check_ptr[c + 1]]

    def bit_neighbors(self, b: int) -> np.ndarray:
        return self.edge_check[self.bit_edges[self.bit_ptr[b]:self.bit_ptr[b + 1]]]


def _padded_slots(ptr: np.ndarray, order: np.ndarray) -> np.ndarray:
    deg = np.diff(ptr)
    slots = np.full((deg.size, int(deg.max())), -1, dtype=np.int64)
    for node in range(deg.size):
        slots[node, : deg[node]] = order[ptr[node]:ptr[node + 1]]
    return slots


def gf2_rank(H) -> int:
    """Rank over GF(2) by row reduction."""
    rows = np.array(H.todense() if sp.issparse(H) else H, dtype=np.uint8) % 2
    rank = 0
    for col in range(rows.shape[1]):
        pivots = np.flatnonzero(rows[rank:, col]) + rank
        if pivots.size == 0:
            continue
        p = pivots[0]
        rows[[rank, p]] = rows[[p, rank]]
        others = np.flatnonzero(rows[:, col])
        others = others[others != rank]
        rows[others] ^= rows[rank]
        rank += 1
        if rank == rows.shape[0]:
            break
    return rank


def from_parity_matrix(H, base=None, lift: int = 1) -> ParityCheckSystem:
    """Build the Tanner-graph structure for an arbitrary binary parity-check matrix.

    Rows need not be independent (redundant checks often help belief
    propagation on short codes); the code dimension comes from the GF(2) rank.
    """
    H = sp.csr_matrix(np.asarray(H.todense() if sp.issparse(H) else H) % 2, dtype=np.int8)
    H.eliminate_zeros()
    H.sort_indices()
    m, n = H.shape
    rank = gf2_rank(H)
    if rank >= n:
        raise ParameterError(f"parity-check matrix of rank {rank} leaves no information bits")
    edge_bit = H.indices.astype(np.int64)
    check_ptr = H.indptr.astype(np.int64)
    edge_check = np.repeat(np.arange(m, dtype=np.int64), np.diff(check_ptr))
    bit_edges = np.argsort(edge_bit, kind="stable").astype(np.int64)
    bit_ptr = np.zeros(n + 1, dtype=np.int64)
    bit_ptr[1:] = np.cumsum(np.bincount(edge_bit, minlength=n))
    if np.any(np.diff(bit_ptr) == 0) or np.any(np.diff(check_ptr) == 0):
        raise ParameterError("every bit and every check must touch at least one edge")
    return ParityCheckSystem(
        H=H,
        edge_check=edge_check,
        edge_bit=edge_bit,
        check_ptr=check_ptr,
        bit_ptr=bit_ptr,
        bit_edges=bit_edges,
        check_slots=_padded_slots(check_ptr, np.arange(edge_bit.size, dtype=np.int64)),
        bit_slots=_padded_slots(bit_ptr, bit_edges),
        base=None if base is None else np.array(base, dtype=np.int64),
        lift=lift,
        rank=rank,
    )


def lift_base_matrix(base, Z: int) -> sp.csr_matrix:
    base = np.asarray(base, dtype=np.int64)
    mb, nb = base.shape
    rows, cols = [], []
    r = np.arange(Z)
    for i in range(mb):
        for j in range(nb):
            s = base[i, j]
            if s < 0:
                continue
            if s >= Z:
                raise ParameterError(f"shift {s} at base ({i}, {j}) exceeds lifting size {Z}")
            rows.append(i * Z + r)
            cols.append(j * Z + (r + s) % Z)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.ones(rows.size, dtype=np.int8)
    return sp.csr_matrix((data, (rows, cols)), shape=(mb * Z, nb * Z))


def _check_dual_diagonal(base: np.ndarray) -> None:
    mb, nb = base.shape
    kb = nb - mb
    hb = base[:, kb]
    if np.sum(hb >= 0) < 2:
        raise UnsupportedCodeError("first parity column needs at least two nonzero blocks")
    for j in range(mb - 1):
        col = base[:, kb + 1 + j]
        expect = np.full(mb, -1)
        expect[j] = expect[j + 1] = 0
        if not np.array_equal(col, expect):
            raise UnsupportedCodeError("parity part is not dual-diagonal; linear-time encoding unavailable")
    shifts, counts = np.unique(hb[hb >= 0], return_counts=True)
    if np.sum(counts % 2 == 1) != 1:
        raise UnsupportedCodeError("first parity column does not sum to a single circulant")


def build_code(n: int = 648, rate=Fraction(1, 2), base=None, lift: int | None = None) -> ParityCheckSystem:
    """Return the (n, rate) 802.11n code, or lift a caller-supplied base matrix."""
    if base is None:
        key = (int(n), Fraction(rate).limit_denominator(100))
        if key not in _CODES:
            raise UnsupportedCodeError(f"unsupported code (n={n}, rate={rate}); available: (648, 1/2)")
        base, lift = _CODES[key]
    base = np.asarray(base, dtype=np.int64)
    if lift is None:
        raise ParameterError("a custom base matrix needs an explicit lifting size")
    _check_dual_diagonal(base)
    return from_parity_matrix(lift_base_matrix(base, lift), base=base, lift=lift)


def load_base_matrix(path) -> np.ndarray:
    """Read a base shift matrix: one row per line, whitespace-separated, -1 for zero blocks."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([int(tok) for tok in line.split()])
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: {exc}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParameterError(f"{path}: base matrix rows are empty or ragged")
    return np.array(rows, dtype=np.int64)


def _cshift(block: np.ndarray, s: int) -> np.ndarray:
    # (P^s u)[r] = u[(r + s) mod Z]
    return np.roll(block, -s, axis=-1)


def encode(system: ParityCheckSystem, info_bits) -> np.ndarray:
    """Systematic encoding; accepts one word (k,) or a batch (B, k)."""
    if system.base is None:
        raise UnsupportedCodeError("encoder needs the QC base matrix")
    u = np.asarray(info_bits)
    single = u.ndim == 1
    u = np.atleast_2d(u).astype(np.uint8)
    base, Z = system.base, system.lift
    mb, nb = base.shape
    kb = nb - mb
    if u.shape[1] != kb * Z:
        raise ParameterError(f"info length {u.shape[1]} != {kb * Z}")
    if np.any(u > 1):
        raise ParameterError("info bits must be 0 or 1")
    ub = u.reshape(u.shape[0], kb, Z)
    lam = np.zeros((u.shape[0], mb, Z), dtype=np.uint8)
    for i in range(mb):
        for j in range(kb):
            if base[i, j] >= 0:
                lam[:, i] ^= _cshift(ub[:, j], base[i, j])
    hb = base[:, kb]
    shifts, counts = np.unique(hb[hb >= 0], return_counts=True)
    t = int(shifts[counts % 2 == 1][0])
    # sum of all block rows leaves P^t p0 = sum(lam)
    p0 = _cshift(np.bitwise_xor.reduce(lam, axis=1), -t)
    parity = [p0]
    prev = None
    for i in range(mb - 1):
        q = lam[:, i].copy()
        if hb[i] >= 0:
            q ^= _cshift(p0, hb[i])
        if prev is not None:
            q ^= prev
        parity.append(q)
        prev = q
    code = np.concatenate([u] + parity, axis=1)
    return code[0] if single else code


def syndrome(system: ParityCheckSystem, hard_bits) -> np.ndarray:
    b = np.asarray(hard_bits)
    single = b.ndim == 1
    b = np.atleast_2d(b).astype(np.int64)
    if b.shape[1] != system.n_bits:
        raise ParameterError(f"word length {b.shape[1]} != {system.n_bits}")
    s = np.asarray(system.H @ b.T).T % 2
    s = s.astype(np.uint8)
    return s[0] if single else s


class DecodeResult(NamedTuple):
    hard_bits: np.ndarray
    posterior_llrs: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def sum_product_decode(system: ParityCheckSystem, channel_llrs, max_inner: int = 50) -> DecodeResult:
    """Flooding sum-product with extrinsic exclusion and per-word syndrome stop.

    Accepts one word (C,) or a batch (B, C); scalar ``converged`` and
    ``iterations`` come back for a single word.
    """
    llr = np.asarray(channel_llrs, dtype=np.float64)
    single = llr.ndim == 1
    llr = np.atleast_2d(llr)
    if llr.shape[1] != system.n_bits:
        raise ParameterError(f"LLR length {llr.shape[1]} != {system.n_bits}")
    if not np.all(np.isfinite(llr)):
        raise ParameterError("channel LLRs must be finite")
    if int(max_inner) < 1:
        raise ParameterError("max_inner must be >= 1")
    llr = np.ascontiguousarray(np.clip(llr, -_bp.LLR_CLIP, _bp.LLR_CLIP))
    post, conv, iters = _bp.decode(system, llr, int(max_inner))
    hard = (post < 0).astype(np.uint8)
    if single:
        return DecodeResult(hard[0], post[0], bool(conv[0]), int(iters[0]))
    return DecodeResult(hard, post, conv.astype(bool), iters)


# ---------------------------------------------------------------------------
# RKHS-domain detector and the outer refinement loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RkhsDetector:
    """Ridge map ``omega`` (n_G x C) from word features to per-bit soft outputs.

    ``lam`` selects the damped (distribution-dependent) features; ``None``
    means classical features.
    """

    omega: np.ndarray
    fmap: FourierFeatureMap
    ridge: float
    sigma_hat_sq: float
    lam: float | None = None

    def features(self, words) -> np.ndarray:
        if self.lam is None:
            return rff_transform(self.fmap, words)
        return ddrff_transform(self.fmap, self.lam, words)

    def predict(self, words) -> np.ndarray:
        return self.features(words) @ self.omega


def fit_detector(received_words, fmap: FourierFeatureMap, ridge: float = 1e-3,
                 lam: float | None = None) -> RkhsDetector:
    """Least-squares fit of features(y) @ omega to sign(y) over a batch of words.

    Solved in whichever of the primal (n_G x n_G) or dual (words x words)
    form is smaller.  ``sigma_hat_sq`` is the variance of the fitted outputs
    pooled over every bit of every word.
    """
    Y = np.atleast_2d(np.asarray(received_words, dtype=np.float64))
    if Y.shape[0] < 1 or Y.shape[1] != fmap.n_input:
        raise ParameterError(f"received words shape {Y.shape} incompatible with map input {fmap.n_input}")
    if ridge < 0:
        raise ParameterError(f"ridge must be nonnegative, got {ridge}")
    target = np.where(Y >= 0, 1.0, -1.0)
    det = RkhsDetector(np.zeros((fmap.n_features, Y.shape[1])), fmap, ridge, 1.0, lam)
    phi = det.features(Y)
    if not np.all(np.isfinite(phi)):
        raise NumericError("non-finite detector features")
    n_words, n_feat = phi.shape
    try:
        if n_words < n_feat:
            gram = phi @ phi.T + ridge * np.eye(n_words)
            _check_conditioning(gram, ridge)
            omega = phi.T @ np.linalg.solve(gram, target)
        else:
            gram = phi.T @ phi + ridge * np.eye(n_feat)
            _check_conditioning(gram, ridge)
            omega = np.linalg.solve(gram, phi.T @ target)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"detector normal equations are singular: {exc}") from None
    out = phi @ omega
    return RkhsDetector(omega, fmap, ridge, float(np.var(out)), lam)


def _check_conditioning(gram: np.ndarray, ridge: float) -> None:
    if ridge == 0 and np.linalg.cond(gram) > 1e12:
        raise SingularityError("detector normal equations are singular; use ridge > 0")


class RkhsDecodeResult(NamedTuple):
    hard_bits: np.ndarray
    outer_iterations: np.ndarray
    converged: np.ndarray
    aborted: bool


def rkhs_mp_decode_batch(Y, system: ParityCheckSystem, sigma_n_sq: float, fmap: FourierFeatureMap,
                         max_outer: int = 5, max_inner: int = 50, ridge: float = 1e-3,
                         lam: float | None = None, trace=None) -> RkhsDecodeResult:
    """Message passing with RKHS refinement over a batch of received words.

    Each outer pass runs sum-product on every still-undecoded word.  Words
    whose syndrome clears keep that codeword.  For the rest, a detector is
    refit over the whole batch's current regressors, its variance-normalised
    output is added to the channel LLRs, and the regressors are replaced by
    the detector outputs.  ``trace`` may be a list that collects
    ``(outer_iter, inner_iters, syndrome_weight)`` rows per word and pass.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if Y.shape[1] != system.n_bits:
        raise ParameterError(f"word length {Y.shape[1]} != {system.n_bits}")
    if fmap.n_input != system.n_bits:
        raise ParameterError("detector map input dimension must equal the codeword length")
    if int(max_outer) < 1:
        raise ParameterError("max_outer must be >= 1")
    n_words = Y.shape[0]
    m_c = np.clip(-2.0 * Y / sigma_n_sq, -_bp.LLR_CLIP, _bp.LLR_CLIP)
    regressors = Y.copy()
    hard = np.zeros(Y.shape, dtype=np.uint8)
    converged = np.zeros(n_words, dtype=bool)
    outer_used = np.zeros(n_words, dtype=np.int64)
    active = np.arange(n_words)
    aborted = False

    for outer in range(1, int(max_outer) + 1):
        res = sum_product_decode(system, m_c[active], max_inner)
        hard[active] = res.hard_bits
        outer_used[active] = outer
        converged[active] = res.converged
        if trace is not None:
            weights = syndrome(system, res.hard_bits).sum(axis=1)
            trace.extend((outer, int(i), int(w)) for i, w in zip(res.iterations, weights))
        active = active[~res.converged]
        if active.size == 0 or outer == max_outer:
            break
        try:
            det = fit_detector(regressors, fmap, ridge, lam)
        except (NumericError, SingularityError) as exc:
            log.warning("outer loop aborted at pass %d: %s", outer, exc)
            aborted = True
            break
        refined = det.predict(regressors)
        if not (det.sigma_hat_sq > 0 and np.all(np.isfinite(refined))):
            log.warning("outer loop aborted at pass %d: degenerate detector variance", outer)
            aborted = True
            break
        m_c[active] = np.clip(m_c[active] - 2.0 * refined[active] / det.sigma_hat_sq,
                              -_bp.LLR_CLIP, _bp.LLR_CLIP)
        regressors = refined
    return RkhsDecodeResult(hard, outer_used, converged, aborted)


def rkhs_mp_decode(y, system: ParityCheckSystem, sigma_n_sq: float, fmap: FourierFeatureMap,
                   max_outer: int = 5, max_inner: int = 50, batch_context=None, ridge: float = 1e-3,
                   lam: float | None = None):
    """Decode one word; the detector is fitted on ``batch_context`` (which must contain ``y``).

    Returns ``(hard_bits, outer_iterations_used, converged)``.
    """
    y = np.asarray(y, dtype=np.float64)
    if batch_context is None:
        batch = y[None, :]
        idx = 0
    else:
        batch = np.atleast_2d(np.asarray(batch_context, dtype=np.float64))
        matches = np.flatnonzero(np.all(batch == y, axis=1))
        if matches.size == 0:
            raise ParameterError("batch_context must include the word being decoded")
        idx = int(matches[0])
    res = rkhs_mp_decode_batch(batch, system, sigma_n_sq, fmap, max_outer, max_inner, ridge, lam)
    return res.hard_bits[idx], int(res.outer_iterations[idx]), bool(res.converged[idx])
