"""Integer-slice emulation of FP64 matrix multiplication.

Each row of A (column of B) is scaled by a power of two into (-1, 1) and cut
into ``s`` signed integer slices of ``w`` bits.  Slice products are exact in
a 64-bit integer accumulator and are recombined in float64 in a fixed order.
With ``w=7`` every slice fits in an int8.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np

__all__ = [
    "SliceDecomposition",
    "EmulationConfig",
    "OverflowGuardError",
    "GemmErrorReport",
    "split",
    "reconstruct",
    "integer_gemm",
    "emulated_gemm",
    "oracle_gemm_exact",
    "required_slices_for_exact",
    "gemm_error_report",
    "slice_pairs",
]

Orientation = Literal["by_row", "by_col"]
PairPolicy = Literal["triangular", "full"]

DEFAULT_TILE = (16, 16, 8)


class OverflowGuardError(OverflowError):
    """The integer accumulator could overflow for this k and slice width."""


def _check_finite(M: np.ndarray) -> None:
    bad = ~np.isfinite(M)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"non-finite entry {M[i, j]!r} at position ({i}, {j})")


def _as_matrix(M) -> np.ndarray:
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    return M


def _slice_dtype(w: int):
    if w <= 7:
        return np.int8
    if w <= 15:
        return np.int16
    if w <= 31:
        return np.int32
    return np.int64


@dataclass
class SliceDecomposition:
    orientation: Orientation
    scale_exponents: np.ndarray  # one per row (by_row) or column (by_col)
    slices: list[np.ndarray]
    slice_width: int

    @property
    def slice_count(self) -> int:
        return len(self.slices)

    @property
    def shape(self) -> tuple[int, int]:
        return self.slices[0].shape


@dataclass(frozen=True)
class EmulationConfig:
    s: int = 7
    w: int = 7
    pair_policy: PairPolicy = "triangular"
    accumulator_bits: int = 64
    tile: tuple[int, int, int] | None = DEFAULT_TILE

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("slice count s must be >= 1")
        if self.w < 1:
            raise ValueError("slice width w must be >= 1")
        if self.pair_policy not in ("triangular", "full"):
            raise ValueError(f"unknown pair policy {self.pair_policy!r}")
        if not 2 <= self.accumulator_bits <= 64:
            raise ValueError("accumulator_bits must be in [2, 64]")


def split(M, orientation: Orientation = "by_row", s: int = 7, w: int = 7) -> SliceDecomposition:
    """Cut ``M`` into ``s`` integer slices of ``w`` bits with truncation.

    Every row (or column) gets the smallest exponent ``e`` with
    ``max |m| < 2**e``; slice ``p`` holds the next ``w`` bits below
    ``2**(e - w*p)``, truncated toward zero.
    """
    M = _as_matrix(M)
    _check_finite(M)
    if s < 1 or w < 1:
        raise ValueError("need s >= 1 and w >= 1")
    if orientation not in ("by_row", "by_col"):
        raise ValueError(f"unknown orientation {orientation!r}")
    axis = 1 if orientation == "by_row" else 0
    peak = np.max(np.abs(M), axis=axis) if M.size else np.zeros(M.shape[1 - axis])
    _, exps = np.frexp(peak)  # peak = f * 2**e with f in [0.5, 1), or e = 0 for zero
    exps = exps.astype(np.int64)
    e = exps[:, None] if orientation == "by_row" else exps[None, :]

    rest = M.copy()
    dtype = _slice_dtype(w)
    slices = []
    for p in range(s):
        shift = w * (p + 1)
        t = np.trunc(np.ldexp(rest, shift - e))
        rest = rest - np.ldexp(t, e - shift)  # exact: t holds the top bits of rest
        slices.append(t.astype(dtype))
    return SliceDecomposition(orientation, exps, slices, w)


def reconstruct(d: SliceDecomposition) -> np.ndarray:
    e = d.scale_exponents
    e = e[:, None] if d.orientation == "by_row" else e[None, :]
    out = np.zeros(d.shape)
    for p, sl in enumerate(d.slices):
        out = out + np.ldexp(sl.astype(np.float64), e - d.slice_width * (p + 1))
    return out


def _guard(k: int, w: int, accumulator_bits: int) -> None:
    if k * (1 << (2 * w)) > 1 << (accumulator_bits - 1):
        raise OverflowGuardError(
            f"k={k} with {w}-bit slices can overflow a {accumulator_bits}-bit accumulator "
            f"(k * 2**{2 * w} > 2**{accumulator_bits - 1})"
        )


def integer_gemm(
    Ap,
    Bq,
    *,
    w: int | None = None,
    accumulator_bits: int = 64,
    tile: tuple[int, int, int] | None = DEFAULT_TILE,
) -> np.ndarray:
    """Exact integer product of two slice matrices, accumulated in int64.

    ``w`` bounds the slice magnitudes for the overflow guard; when omitted it
    is taken from the largest entry present.  ``tile`` is the (m, n, k) block
    shape; the result does not depend on it.
    """
    A = np.asarray(Ap)
    B = np.asarray(Bq)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"cannot multiply shapes {A.shape} and {B.shape}")
    m, k = A.shape
    n = B.shape[1]
    if w is None:
        peak = max(int(np.max(np.abs(A), initial=0)), int(np.max(np.abs(B), initial=0)))
        w = max(peak.bit_length(), 1)
    _guard(k, w, accumulator_bits)

    A = A.astype(np.int64)
    B = B.astype(np.int64)
    if tile is None:
        return A @ B
    tm, tn, tk = tile
    C = np.zeros((m, n), dtype=np.int64)
    for i0 in range(0, m, tm):
        for j0 in range(0, n, tn):
            acc = C[i0 : i0 + tm, j0 : j0 + tn]
            for k0 in range(0, k, tk):
                acc += A[i0 : i0 + tm, k0 : k0 + tk] @ B[k0 : k0 + tk, j0 : j0 + tn]
    return C


def slice_pairs(s: int, policy: PairPolicy = "triangular") -> list[tuple[int, int]]:
    """Slice index pairs in recombination order: ascending p+q, then ascending p."""
    pairs = [(p, q) for p in range(s) for q in range(s)]
    if policy == "triangular":
        pairs = [(p, q) for p, q in pairs if p + q < s]
    return sorted(pairs, key=lambda pq: (pq[0] + pq[1], pq[0]))


def emulated_gemm(A, B, cfg: EmulationConfig = EmulationConfig(), *, counter: list | None = None) -> np.ndarray:
    """FP64 GEMM emulated with integer slice products.

    ``counter``, when given, receives one ``(p, q)`` entry per integer GEMM.
    """
    A = _as_matrix(A)
    B = _as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, B is {B.shape}")
    _check_finite(A)
    _check_finite(B)
    _guard(A.shape[1], cfg.w, cfg.accumulator_bits)

    da = split(A, "by_row", cfg.s, cfg.w)
    db = split(B, "by_col", cfg.s, cfg.w)
    base = da.scale_exponents[:, None] + db.scale_exponents[None, :]
    out = np.zeros((A.shape[0], B.shape[1]))
    for p, q in slice_pairs(cfg.s, cfg.pair_policy):
        C = integer_gemm(
            da.slices[p], db.slices[q], w=cfg.w, accumulator_bits=cfg.accumulator_bits, tile=cfg.tile
        )
        if counter is not None:
            counter.append((p, q))
        out = out + np.ldexp(C.astype(np.float64), base - cfg.w * (p + q + 2))
    return out


# ── verification ─────────────────────────────────────────────────────


def _to_scaled_ints(M: np.ndarray) -> tuple[np.ndarray, int]:
    """Write M as an object array of Python ints times a single 2**exp."""
    ratios = [float(x).as_integer_ratio() for x in M.flat]
    exp = min((-(d.bit_length() - 1) for n, d in ratios if n), default=0)
    ints = [(n << (-(d.bit_length() - 1) - exp)) for n, d in ratios]
    return np.array(ints, dtype=object).reshape(M.shape), exp


def oracle_gemm_exact(A, B) -> np.ndarray:
    """Exact product in arbitrary-precision integers, rounded once to FP64."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, B is {B.shape}")
    _check_finite(A)
    _check_finite(B)
    IA, ea = _to_scaled_ints(A)
    IB, eb = _to_scaled_ints(B)
    exact = IA.dot(IB) if A.shape[1] else np.zeros((A.shape[0], B.shape[1]), dtype=object)
    e = ea + eb
    scale = Fraction(2) ** e
    out = np.empty(exact.shape)
    for idx, c in np.ndenumerate(exact):
        out[idx] = float(int(c) * scale)
    return out


def required_slices_for_exact(M, w: int = 7, orientation: Orientation = "by_row") -> int:
    """Smallest slice count whose reconstruction reproduces ``M`` exactly."""
    M = _as_matrix(M)
    _check_finite(M)
    d = split(M, orientation, 1, w)
    need = 1
    for (i, j), x in np.ndenumerate(M):
        if x == 0.0:
            continue
        e = int(d.scale_exponents[i if orientation == "by_row" else j])
        num, den = abs(float(x)).as_integer_ratio()
        lowest = (num & -num).bit_length() - den.bit_length()  # exponent of the last set bit
        need = max(need, -(-(e - lowest) // w))
    return need


@dataclass
class GemmErrorReport:
    max_rel_error: float
    median_rel_error: float
    slice_multiplies: int
    integer_ops: int  # 2*m*n*k per slice multiply
    fp64_flops: int  # 2*m*n*k, the credited FP64 work
    config: EmulationConfig = field(repr=False)

    def lines(self) -> list[str]:
        return [
            f"max_rel_error    {self.max_rel_error:.3e}",
            f"median_rel_error {self.median_rel_error:.3e}",
            f"slice_multiplies {self.slice_multiplies}",
            f"integer_ops      {self.integer_ops}",
            f"fp64_flops       {self.fp64_flops}",
        ]


def relative_errors(C: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Elementwise |C - ref| / |ref|; entries with ref == 0 give |C|, or 0 when exact."""
    diff = np.abs(C - ref)
    denom = np.abs(ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(denom > 0, diff / np.where(denom > 0, denom, 1.0), diff)
    return rel


def gemm_error_report(A, B, cfg: EmulationConfig = EmulationConfig()) -> GemmErrorReport:
    A = _as_matrix(A)
    B = _as_matrix(B)
    calls: list = []
    C = emulated_gemm(A, B, cfg, counter=calls)
    rel = relative_errors(C, oracle_gemm_exact(A, B))
    m, k = A.shape
    n = B.shape[1]
    flops = 2 * m * n * k
    return GemmErrorReport(
        max_rel_error=float(np.max(rel, initial=0.0)),
        median_rel_error=float(statistics.median(rel.flat)) if rel.size else 0.0,
        slice_multiplies=len(calls),
        integer_ops=flops * len(calls),
        fp64_flops=flops,
        config=cfg,
    )
