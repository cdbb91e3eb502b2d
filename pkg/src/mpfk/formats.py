"""Bit-exact software floating-point formats.

Covers FP8 (E4M3, E5M2), FP16, BF16, TF32, FP32 and FP64, plus FP128 as
metadata only.  Values are carried in float64; every format of 32 bits or
less embeds exactly into float64, so decode is always exact.

Array functions (``round_to_format``, ``encode_bits``, ``decode_bits``) are
vectorised with numpy and are what the solvers use.  The scalar functions
(``encode``, ``decode``, ``classify``) wrap them for single values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

__all__ = [
    "FormatSpec",
    "PackedScalar",
    "RoundingMode",
    "NEAREST_EVEN",
    "TOWARD_ZERO",
    "UnsupportedFormatError",
    "builtin_format",
    "BUILTIN_FORMATS",
    "round_to_format",
    "encode_bits",
    "decode_bits",
    "encode",
    "decode",
    "classify",
    "max_finite",
    "min_positive_subnormal",
    "min_positive_normal",
    "unit_roundoff",
    "ulp",
    "rounded_op",
    "stochastic_round",
]

Semantics = Literal["ieee_like", "e4m3_extended"]
Overflow = Literal["saturate", "nan"]


class UnsupportedFormatError(NotImplementedError):
    """Raised for arithmetic on metadata-only formats such as FP128."""


@dataclass(frozen=True)
class FormatSpec:
    """Bit layout of a binary floating-point format.

    ``mantissa_bits`` counts explicit fraction bits.  ``storage_bits`` may
    exceed ``1 + exponent_bits + mantissa_bits`` for container formats
    like TF32, where the unused low fraction bits are zero.
    """

    name: str
    exponent_bits: int
    mantissa_bits: int
    bias: int | None = None
    storage_bits: int | None = None
    special_semantics: Semantics = "ieee_like"

    def __post_init__(self):
        if self.exponent_bits < 2:
            raise ValueError(f"{self.name}: exponent_bits must be >= 2")
        if self.mantissa_bits < 0:
            raise ValueError(f"{self.name}: mantissa_bits must be >= 0")
        if self.bias is None:
            object.__setattr__(self, "bias", (1 << (self.exponent_bits - 1)) - 1)
        packed = 1 + self.exponent_bits + self.mantissa_bits
        if self.storage_bits is None:
            object.__setattr__(self, "storage_bits", packed)
        if self.storage_bits < packed:
            raise ValueError(
                f"{self.name}: storage_bits={self.storage_bits} cannot hold "
                f"{packed} bits of layout"
            )
        if self.storage_bits > 64 and self.storage_bits != 128:
            raise ValueError(f"{self.name}: storage_bits must be <= 64")
        if self.special_semantics not in ("ieee_like", "e4m3_extended"):
            raise ValueError(f"unknown special_semantics {self.special_semantics!r}")

    # -- derived layout ---------------------------------------------------

    @property
    def arithmetic(self) -> bool:
        """Whether values of this format fit exactly in float64."""
        return self.storage_bits <= 64

    @property
    def precision(self) -> int:
        """Significand bits including the hidden bit."""
        return self.mantissa_bits + 1

    @property
    def pad_bits(self) -> int:
        return self.storage_bits - 1 - self.exponent_bits - self.mantissa_bits

    @property
    def exp_all_ones(self) -> int:
        return (1 << self.exponent_bits) - 1

    @property
    def emin(self) -> int:
        return 1 - self.bias

    @property
    def emax(self) -> int:
        if self.special_semantics == "e4m3_extended":
            return self.exp_all_ones - self.bias
        return self.exp_all_ones - 1 - self.bias

    @property
    def canonical_nan_bits(self) -> int:
        if self.special_semantics == "e4m3_extended":
            field = (self.exp_all_ones << self.mantissa_bits) | ((1 << self.mantissa_bits) - 1)
        else:
            quiet = 1 << (self.mantissa_bits - 1) if self.mantissa_bits else 0
            field = (self.exp_all_ones << self.mantissa_bits) | quiet
        return field << self.pad_bits


BUILTIN_FORMATS: dict[str, FormatSpec] = {
    "e4m3": FormatSpec("e4m3", 4, 3, special_semantics="e4m3_extended"),
    "e5m2": FormatSpec("e5m2", 5, 2),
    "fp16": FormatSpec("fp16", 5, 10),
    "bf16": FormatSpec("bf16", 8, 7),
    "tf32": FormatSpec("tf32", 8, 10, storage_bits=32),
    "fp32": FormatSpec("fp32", 8, 23),
    "fp64": FormatSpec("fp64", 11, 52),
    "fp128": FormatSpec("fp128", 15, 112),
}


def builtin_format(name: str) -> FormatSpec:
    """Look up one of the built-in formats by (case-insensitive) name."""
    try:
        return BUILTIN_FORMATS[name.lower()]
    except KeyError:
        known = ", ".join(BUILTIN_FORMATS)
        raise ValueError(f"unknown format {name!r}; expected one of: {known}") from None


def _require_arithmetic(spec: FormatSpec) -> None:
    if not spec.arithmetic:
        raise UnsupportedFormatError(f"{spec.name} is metadata-only; no arithmetic support")


@dataclass(frozen=True)
class RoundingMode:
    kind: Literal["nearest_even", "toward_zero", "stochastic"] = "nearest_even"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("nearest_even", "toward_zero", "stochastic"):
            raise ValueError(f"unknown rounding mode {self.kind!r}")
        if self.kind == "stochastic":
            if self.seed is None or not 0 <= self.seed < 2**64:
                raise ValueError("stochastic rounding needs a 64-bit unsigned seed")

    @classmethod
    def stochastic(cls, seed: int) -> RoundingMode:
        return cls("stochastic", seed)

    @classmethod
    def parse(cls, mode: RoundingMode | str) -> RoundingMode:
        """Accept a RoundingMode or one of 'nearest_even', 'toward_zero', 'stochastic:<seed>'."""
        if isinstance(mode, RoundingMode):
            return mode
        if mode.startswith("stochastic"):
            _, _, seed = mode.partition(":")
            return cls.stochastic(int(seed, 0) if seed else 0)
        return cls(mode)

    def generator(self) -> np.random.Generator | None:
        if self.kind != "stochastic":
            return None
        return np.random.default_rng(self.seed)


NEAREST_EVEN = RoundingMode("nearest_even")
TOWARD_ZERO = RoundingMode("toward_zero")


@dataclass(frozen=True)
class PackedScalar:
    bits: int
    spec: FormatSpec

    def __post_init__(self):
        if not 0 <= self.bits < (1 << self.spec.storage_bits):
            raise ValueError(f"bits 0x{self.bits:x} out of range for {self.spec.name}")

    def __float__(self) -> float:
        return decode(self)

    def __repr__(self) -> str:
        width = (self.spec.storage_bits + 3) // 4
        return f"PackedScalar(0x{self.bits:0{width}X}, {self.spec.name})"


# ── derived constants ────────────────────────────────────────────────


def max_finite(spec: FormatSpec) -> float:
    _require_arithmetic(spec)
    top = (1 << spec.precision) - 1
    if spec.special_semantics == "e4m3_extended":
        top -= 1  # all-ones mantissa at the top exponent is NaN
    return math.ldexp(top, spec.emax - spec.mantissa_bits)


def min_positive_normal(spec: FormatSpec) -> float:
    _require_arithmetic(spec)
    return math.ldexp(1.0, spec.emin)


def min_positive_subnormal(spec: FormatSpec) -> float:
    _require_arithmetic(spec)
    return math.ldexp(1.0, spec.emin - spec.mantissa_bits)


def unit_roundoff(spec: FormatSpec) -> float:
    return math.ldexp(1.0, -spec.mantissa_bits - 1)


def ulp(value: float, spec: FormatSpec) -> float:
    """Spacing of ``spec`` values at the binade of ``value``."""
    _require_arithmetic(spec)
    if not math.isfinite(value):
        return math.nan
    _, e = math.frexp(abs(value))
    return math.ldexp(1.0, max(e - 1, spec.emin) - spec.mantissa_bits)


# ── rounding ─────────────────────────────────────────────────────────


def round_to_format(
    values,
    spec: FormatSpec,
    mode: RoundingMode | str = NEAREST_EVEN,
    *,
    rng: np.random.Generator | None = None,
    overflow: Overflow = "saturate",
) -> np.ndarray:
    """Round float64 values to the nearest ``spec`` values under ``mode``.

    Returns float64 carriers.  ``overflow`` only affects e4m3_extended, which
    has no infinities: out-of-range results (including +-inf inputs) become
    +-max_finite or NaN.  For stochastic mode the draws come from ``rng``,
    or from a fresh generator seeded by the mode when ``rng`` is None.
    """
    _require_arithmetic(spec)
    mode = RoundingMode.parse(mode)
    v = np.asarray(values, dtype=np.float64)
    if spec.exponent_bits == 11 and spec.mantissa_bits == 52:
        return v.copy()

    p = spec.mantissa_bits
    mag = np.abs(v)
    finite = np.isfinite(v)
    safe = np.where(finite, mag, 0.0)
    _, e = np.frexp(safe)
    qexp = np.maximum(e - 1, spec.emin) - p
    scaled = np.ldexp(safe, -qexp)
    if mode.kind == "nearest_even":
        r = np.rint(scaled)
    elif mode.kind == "toward_zero":
        r = np.floor(scaled)
    else:
        if rng is None:
            rng = mode.generator()
        low = np.floor(scaled)
        u = rng.random(size=np.shape(scaled))
        r = low + (u < scaled - low)
    with np.errstate(over="ignore"):
        res = np.ldexp(r, qexp)

    top = max_finite(spec)
    over = res > top
    if spec.special_semantics == "e4m3_extended":
        fill = top if overflow == "saturate" else np.nan
        res = np.where(over | np.isinf(v), fill, res)
    elif mode.kind == "toward_zero":
        res = np.where(over, top, res)
        res = np.where(np.isinf(v), np.inf, res)
    else:
        res = np.where(over | np.isinf(v), np.inf, res)
    res = np.where(np.isnan(v), np.nan, res)
    return np.copysign(res, v)


# ── bit encoding ─────────────────────────────────────────────────────


def encode_bits(
    values,
    spec: FormatSpec,
    mode: RoundingMode | str = NEAREST_EVEN,
    *,
    rng: np.random.Generator | None = None,
    overflow: Overflow = "saturate",
) -> np.ndarray:
    """Round ``values`` to ``spec`` and return the raw encodings as uint64."""
    r = round_to_format(values, spec, mode, rng=rng, overflow=overflow)
    if spec.storage_bits == 64:
        bits = r.view(np.uint64).copy()
        return np.where(np.isnan(r), np.uint64(spec.canonical_nan_bits), bits)

    p = spec.mantissa_bits
    sign = np.signbit(r).astype(np.uint64) << np.uint64(spec.storage_bits - 1)
    mag = np.abs(r)
    finite_nz = np.isfinite(mag) & (mag > 0)
    safe = np.where(finite_nz, mag, 1.0)
    _, e = np.frexp(safe)
    unbiased = e - 1
    sub = unbiased < spec.emin
    biased = np.where(sub, 0, unbiased + spec.bias)
    frac = np.where(
        sub,
        np.ldexp(safe, p - spec.emin),
        np.ldexp(safe, p - unbiased) - float(1 << p),
    )
    field = (biased.astype(np.uint64) << np.uint64(p)) | frac.astype(np.uint64)
    field = np.where(finite_nz, field, np.uint64(0))
    field = np.where(np.isinf(mag), np.uint64(spec.exp_all_ones << p), field)
    bits = sign | (field << np.uint64(spec.pad_bits))
    return np.where(np.isnan(r), np.uint64(spec.canonical_nan_bits), bits)


def decode_bits(bits, spec: FormatSpec) -> np.ndarray:
    """Decode raw encodings to exact float64 values."""
    _require_arithmetic(spec)
    b = np.asarray(bits, dtype=np.uint64)
    if spec.storage_bits == 64:
        return b.view(np.float64).copy()
    p = spec.mantissa_bits
    negative = ((b >> np.uint64(spec.storage_bits - 1)) & np.uint64(1)).astype(bool)
    field = b >> np.uint64(spec.pad_bits)
    frac = (field & np.uint64((1 << p) - 1)).astype(np.float64)
    expo = ((field >> np.uint64(p)) & np.uint64(spec.exp_all_ones)).astype(np.int64)

    normal = np.ldexp(frac + float(1 << p), expo - spec.bias - p)
    subnormal = np.ldexp(frac, spec.emin - p)
    val = np.where(expo == 0, subnormal, normal)
    top = expo == spec.exp_all_ones
    if spec.special_semantics == "e4m3_extended":
        val = np.where(top & (frac == (1 << p) - 1), np.nan, val)
    else:
        val = np.where(top, np.where(frac == 0, np.inf, np.nan), val)
    return np.where(negative, -val, val)


def encode(
    v: float,
    spec: FormatSpec,
    mode: RoundingMode | str = NEAREST_EVEN,
    *,
    rng: np.random.Generator | None = None,
    overflow: Overflow = "saturate",
) -> PackedScalar:
    bits = encode_bits(float(v), spec, mode, rng=rng, overflow=overflow)
    return PackedScalar(int(bits), spec)


def decode(x: PackedScalar) -> float:
    return float(decode_bits(x.bits, x.spec))


def classify(x: PackedScalar) -> str:
    """One of 'zero', 'subnormal', 'normal', 'inf', 'nan'."""
    spec = x.spec
    field = x.bits >> spec.pad_bits
    frac = field & ((1 << spec.mantissa_bits) - 1)
    expo = (field >> spec.mantissa_bits) & spec.exp_all_ones
    if expo == spec.exp_all_ones:
        if spec.special_semantics == "e4m3_extended":
            return "nan" if frac == (1 << spec.mantissa_bits) - 1 else "normal"
        return "inf" if frac == 0 else "nan"
    if expo == 0:
        return "zero" if frac == 0 else "subnormal"
    return "normal"


def stochastic_round(v: float, spec: FormatSpec, rng_state) -> PackedScalar:
    """Round ``v`` up with probability equal to its distance above the lower neighbour.

    ``rng_state`` is a numpy Generator (advanced in place) or an integer seed.
    """
    rng = rng_state
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return encode(v, spec, RoundingMode.stochastic(0), rng=rng)


# ── rounded arithmetic ───────────────────────────────────────────────
# Each helper returns the float64 result rounded to odd: either exact, or the
# neighbour whose last bit is 1.  Rounding that value to any format with at
# most 51 significant bits gives the correctly rounded result in every mode.


def _to_odd(r: np.ndarray, err: np.ndarray) -> np.ndarray:
    even = (r.view(np.int64) & 1) == 0
    fix = (err != 0) & even & np.isfinite(r)
    if not np.any(fix):
        return r
    return np.where(fix, np.nextafter(r, np.copysign(np.inf, err)), r)


def _odd_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return _to_odd(s, err)


def _split(x: np.ndarray):
    c = 134217729.0 * x  # 2**27 + 1
    hi = c - (c - x)
    return hi, x - hi


def _odd_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    q = a / b
    prod = q * b
    qh, ql = _split(q)
    bh, bl = _split(b)
    prod_err = ((qh * bh - prod) + qh * bl + ql * bh) + ql * bl
    rem = (a - prod) - prod_err  # sign of a - q*b, exact
    with np.errstate(invalid="ignore"):
        direction = np.where(np.isfinite(q), np.sign(rem) * np.sign(b), 0.0)
    return _to_odd(q, direction)


def _odd_fma(a: float, b: float, c: float) -> float:
    if not all(math.isfinite(t) for t in (a, b, c)):
        return a * b + c
    exact = Fraction(a) * Fraction(b) + Fraction(c)
    r = float(exact)
    if Fraction(r) != exact and (np.float64(r).view(np.int64) & 1) == 0:
        r = math.nextafter(r, math.inf if exact > r else -math.inf)
    return r


def _odd_op(kind: str, a, b, c=None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        if kind == "mul":
            return a * b  # exact for formats of 32 bits or less
        if kind == "add":
            return _odd_sum(a, b)
        if kind == "sub":
            return _odd_sum(a, -b)
        if kind == "div":
            return _odd_div(a, b)
    if kind == "fma":
        c = np.asarray(c, dtype=np.float64)
        a, b, c = np.broadcast_arrays(a, b, c)
        out = np.empty(a.shape)
        for idx in np.ndindex(a.shape):
            out[idx] = _odd_fma(float(a[idx]), float(b[idx]), float(c[idx]))
        return out
    raise ValueError(f"unknown operation {kind!r}")


def rounded_op(
    kind: str,
    a,
    b,
    c=None,
    *,
    spec: FormatSpec,
    mode: RoundingMode | str = NEAREST_EVEN,
    rng: np.random.Generator | None = None,
    check: bool = True,
):
    """Correctly rounded ``kind`` in ``spec`` precision on float64 carriers.

    ``kind`` is one of 'add', 'sub', 'mul', 'div', 'fma'.  fma rounds once
    after the exact ``a*b + c``.  Operands must already be representable in
    ``spec`` and the format must be at most 32 bits wide.  Scalars in give a
    float back; arrays give arrays.
    """
    if spec.storage_bits > 32:
        raise ValueError(f"rounded_op supports formats up to 32 bits, got {spec.name}")
    if kind == "fma" and c is None:
        raise ValueError("fma needs three operands")
    operands = [a, b] + ([c] if kind == "fma" else [])
    if check:
        for name, x in zip("abc", operands):
            x = np.asarray(x, dtype=np.float64)
            ok = (round_to_format(x, spec) == x) | np.isnan(x)
            if not np.all(ok):
                raise ValueError(f"operand {name} is not representable in {spec.name}")
    inter = _odd_op(kind, a, b, c)
    out = round_to_format(inter, spec, mode, rng=rng)
    if np.ndim(out) == 0:
        return float(out)
    return out
