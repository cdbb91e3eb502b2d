"""Independent reference implementations used only by the tests.

None of these share code with the package: they work bit-field by bit-field
on Python ints and Fractions, or lean on numpy's own float16/float32 casts.
"""

from __future__ import annotations

import bisect
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

LAYOUTS = {
    # name: (exponent bits, mantissa bits, e4m3-style specials)
    "e4m3": (4, 3, True),
    "e5m2": (5, 2, False),
    "fp16": (5, 10, False),
    "bf16": (8, 7, False),
}


def ref_decode(bits: int, name: str) -> float:
    eb, mb, ext = LAYOUTS[name]
    bias = 2 ** (eb - 1) - 1
    sign = -1.0 if bits >> (eb + mb) & 1 else 1.0
    expo = (bits >> mb) & (2**eb - 1)
    frac = bits & (2**mb - 1)
    if expo == 2**eb - 1:
        if ext:
            if frac == 2**mb - 1:
                return math.nan
        else:
            return sign * math.inf if frac == 0 else math.nan
    if expo == 0:
        return sign * frac * 2.0 ** (1 - bias - mb)
    return sign * (2**mb + frac) * 2.0 ** (expo - bias - mb)


@lru_cache(maxsize=None)
def finite_table(name: str) -> tuple[list[Fraction], list[int]]:
    """All finite values of a format (one zero), ascending, with their encodings."""
    eb, mb, _ = LAYOUTS[name]
    pairs = {}
    for bits in range(2 ** (1 + eb + mb)):
        v = ref_decode(bits, name)
        if math.isfinite(v) and not (v == 0 and math.copysign(1, v) < 0):
            pairs[Fraction(v)] = bits
    values = sorted(pairs)
    return values, [pairs[v] for v in values]


def enumerate_max_finite(name: str) -> float:
    values, _ = finite_table(name)
    return float(values[-1])


def ref_round(exact: Fraction, name: str, mode: str = "nearest_even") -> float:
    """Round an exact rational into ``name`` by searching the value table.

    Overflow is not handled; callers keep ``exact`` within range.
    """
    values, bits = finite_table(name)
    i = bisect.bisect_left(values, exact)
    if i < len(values) and values[i] == exact:
        return float(exact)
    lo, hi = i - 1, i
    if mode == "toward_zero":
        pick = hi if exact < 0 else lo
    else:
        dlo, dhi = exact - values[lo], values[hi] - exact
        if dlo != dhi:
            pick = lo if dlo < dhi else hi
        else:
            pick = lo if bits[lo] % 2 == 0 else hi
    v = float(values[pick])
    if v == 0 and exact < 0:
        return -0.0
    return v


def fp16_nearest_bits(x: np.ndarray) -> np.ndarray:
    """FP16 encodings nearest to float64 ``x`` by exhaustive table search.

    The table comes from numpy's own float16 view of all 65536 patterns.
    Ties go to the even encoding; 65536 stands in for infinity so the
    overflow threshold falls out of the same search.
    """
    pats = np.arange(65536, dtype=np.uint32).astype(np.uint16)
    vals = pats.view(np.float16).astype(np.float64)
    keep = np.isfinite(vals) & (vals >= 0) & ~((vals == 0) & (pats != 0))
    table = np.append(vals[keep], 65536.0)
    codes = np.append(pats[keep].astype(np.uint64), np.uint64(0x7C00))
    order = np.argsort(table)
    table, codes = table[order], codes[order]

    mag = np.abs(x)
    i = np.clip(np.searchsorted(table, mag), 1, len(table) - 1)
    lo, hi = table[i - 1], table[i]
    dlo, dhi = mag - lo, hi - mag
    pick_hi = (dhi < dlo) | ((dhi == dlo) & (codes[i] % 2 == 0)) | (mag >= table[-1])
    out = np.where(pick_hi, codes[i], codes[i - 1])
    out = out | (np.signbit(x).astype(np.uint64) << np.uint64(15))
    return np.where(np.isnan(x), np.uint64(0x7E00), out)


# ── linear algebra ───────────────────────────────────────────────────


def _f16(x: float) -> float:
    return float(np.float16(x))


def naive_lu_fp16(A, pivoting: str = "partial"):
    """Textbook right-looking LU on Python floats, each op rounded by numpy's float16 cast."""
    n = len(A)
    a = [[_f16(float(v)) for v in row] for row in A]
    perm = list(range(n))
    for k in range(n):
        if pivoting == "partial":
            piv = k
            for i in range(k + 1, n):
                if abs(a[i][k]) > abs(a[piv][k]):
                    piv = i
            a[k], a[piv] = a[piv], a[k]
            perm[k], perm[piv] = perm[piv], perm[k]
        for i in range(k + 1, n):
            a[i][k] = _f16(a[i][k] / a[k][k])
            for j in range(k + 1, n):
                a[i][j] = _f16(a[i][j] - _f16(a[i][k] * a[k][j]))
    return np.array(a), np.array(perm)


def naive_solve_fp16(lu, perm, b):
    n = len(b)
    y = [_f16(float(b[p])) for p in perm]
    for i in range(n):
        for j in range(i):
            y[i] = _f16(y[i] - _f16(lu[i][j] * y[j]))
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for j in range(n - 1, i, -1):
            acc = _f16(acc - _f16(lu[i][j] * x[j]))
        x[i] = _f16(acc / lu[i][i])
    return np.array(x)


def naive_residual(A, x, b):
    n, m = len(A), len(x)
    out = []
    for i in range(n):
        r = float(b[i])
        for j in range(m):
            r = r - float(A[i][j]) * float(x[j])
        out.append(r)
    return np.array(out)


def naive_int_matmul(A, B):
    A = [[int(v) for v in row] for row in A]
    B = [[int(v) for v in row] for row in B]
    n, k, m = len(A), len(B), len(B[0])
    return [[sum(A[i][t] * B[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def splitmix64_reference(seed: int, count: int) -> list[int]:
    """splitmix64 written straight from the published algorithm."""
    mask = 2**64 - 1
    out = []
    x = seed & mask
    for _ in range(count):
        x = (x + 0x9E3779B97F4A7C15) & mask
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out
