"""Mixed-precision iterative refinement for dense linear systems.

The LU factorization and the triangular solves run in a reduced format, with
every multiply, subtract and divide rounded separately (no fused
multiply-add).  Residuals and solution updates stay in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formats import (
    FormatSpec,
    NEAREST_EVEN,
    RoundingMode,
    _odd_op,
    builtin_format,
    round_to_format,
)

__all__ = [
    "IRConfig",
    "LowPrecisionLU",
    "IRReport",
    "SingularMatrixError",
    "HPL_THRESHOLD",
    "lu_factor_lowprec",
    "lu_solve_lowprec",
    "ir_solve",
    "residual",
    "hpl_backward_error",
    "fp64_lu_factor",
    "fp64_lu_solve",
]

HPL_THRESHOLD = 16.0
EPS64 = 2.0**-53


class SingularMatrixError(ArithmeticError):
    pass


@dataclass(frozen=True)
class IRConfig:
    factor_format: FormatSpec = field(default_factory=lambda: builtin_format("fp16"))
    rounding: RoundingMode = NEAREST_EVEN
    pivoting: str = "partial"
    tol: float = HPL_THRESHOLD  # stop once hpl_backward_error <= tol
    max_iters: int = 50

    def __post_init__(self):
        if isinstance(self.factor_format, str):
            object.__setattr__(self, "factor_format", builtin_format(self.factor_format))
        object.__setattr__(self, "rounding", RoundingMode.parse(self.rounding))
        if self.pivoting not in ("partial", "none"):
            raise ValueError(f"unknown pivoting {self.pivoting!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.factor_format.storage_bits > 32 and self.factor_format.name != "fp64":
            raise ValueError(f"cannot factor in {self.factor_format.name}")


class _Rounder:
    """Rounds every scalar operation to one format and counts them."""

    def __init__(self, spec: FormatSpec, mode: RoundingMode, rng: np.random.Generator | None = None):
        self.spec = spec
        self.mode = mode
        self.native = spec.name == "fp64" or (spec.exponent_bits, spec.mantissa_bits) == (11, 52)
        self.rng = rng if rng is not None else mode.generator()
        self.ops = 0

    def round(self, x):
        if self.native:
            return np.asarray(x, dtype=np.float64)
        return round_to_format(x, self.spec, self.mode, rng=self.rng)

    def __call__(self, kind: str, a, b):
        self.ops += int(np.broadcast(a, b).size)
        if self.native:
            a = np.asarray(a, dtype=np.float64)
            return {"mul": np.multiply, "sub": np.subtract, "div": np.divide}[kind](a, b)
        return self.round(_odd_op(kind, a, b))


@dataclass
class LowPrecisionLU:
    lu: np.ndarray  # unit-lower L below the diagonal, U on and above
    perm: np.ndarray  # row i of P@A is row perm[i] of A
    spec: FormatSpec
    rounding: RoundingMode = NEAREST_EVEN
    flops: int = 0

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    def L(self) -> np.ndarray:
        return np.tril(self.lu, -1) + np.eye(self.n)

    def U(self) -> np.ndarray:
        return np.triu(self.lu)


def _square(A) -> np.ndarray:
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _factor(A: np.ndarray, op: _Rounder, pivoting: str) -> tuple[np.ndarray, np.ndarray]:
    n = A.shape[0]
    lu = op.round(A)
    perm = np.arange(n)
    for k in range(n):
        if pivoting == "partial":
            piv = k + int(np.argmax(np.abs(lu[k:, k])))
            if piv != k:
                lu[[k, piv]] = lu[[piv, k]]
                perm[[k, piv]] = perm[[piv, k]]
        pivot = lu[k, k]
        if pivot == 0.0:
            raise SingularMatrixError(
                f"pivot {k} is zero in {op.spec.name}; matrix is singular to working precision"
            )
        if k + 1 == n:
            break
        lu[k + 1 :, k] = op("div", lu[k + 1 :, k], pivot)
        prod = op("mul", lu[k + 1 :, k, None], lu[None, k, k + 1 :])
        lu[k + 1 :, k + 1 :] = op("sub", lu[k + 1 :, k + 1 :], prod)
    return lu, perm


def lu_factor_lowprec(A, cfg: IRConfig = IRConfig(), *, rng: np.random.Generator | None = None) -> LowPrecisionLU:
    """Right-looking LU of ``A`` with all arithmetic in ``cfg.factor_format``.

    ``A`` is rounded to the format on entry.  Raises SingularMatrixError when a
    pivot is exactly zero after rounding.
    """
    A = _square(A)
    op = _Rounder(cfg.factor_format, cfg.rounding, rng)
    lu, perm = _factor(A, op, cfg.pivoting)
    return LowPrecisionLU(lu, perm, cfg.factor_format, cfg.rounding, op.ops)


def _substitute(lu: np.ndarray, perm: np.ndarray, rhs: np.ndarray, op: _Rounder) -> np.ndarray:
    n = lu.shape[0]
    y = op.round(rhs[perm])
    for j in range(n - 1):
        y[j + 1 :] = op("sub", y[j + 1 :], op("mul", lu[j + 1 :, j], y[j]))
    # back substitution subtracts u_ij * x_j for j = n-1 down to i+1
    for j in range(n - 1, -1, -1):
        y[j] = op("div", y[j], lu[j, j])
        if j:
            y[:j] = op("sub", y[:j], op("mul", lu[:j, j], y[j]))
    return y


def lu_solve_lowprec(lu: LowPrecisionLU, rhs, *, rng: np.random.Generator | None = None) -> np.ndarray:
    """Solve with the low-precision factors; every scalar op is rounded."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (lu.n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({lu.n},)")
    op = _Rounder(lu.spec, lu.rounding, rng)
    x = _substitute(lu.lu, lu.perm, rhs, op)
    lu.flops += op.ops
    return np.asarray(x, dtype=np.float64)


# ── FP64 kernels ─────────────────────────────────────────────────────


def residual(A, x, b) -> np.ndarray:
    """b - A @ x in float64, subtracting a_ij * x_j for ascending j."""
    A = np.asarray(A, dtype=np.float64)
    r = np.array(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    for j in range(A.shape[1]):
        r -= A[:, j] * x[j]
    return r


def hpl_backward_error(A, x, b) -> float:
    """||Ax - b||_inf / (eps * (||A||_inf ||x||_inf + ||b||_inf) * n), eps = 2**-53."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    r = residual(A, x, b)
    num = float(np.max(np.abs(r), initial=0.0))
    a_norm = float(np.max(np.sum(np.abs(A), axis=1), initial=0.0))
    denom = EPS64 * (a_norm * float(np.max(np.abs(x), initial=0.0)) + float(np.max(np.abs(b), initial=0.0))) * n
    if num == 0.0:
        return 0.0
    if not math.isfinite(num):
        return math.inf
    return num / denom if denom > 0 else math.inf


def fp64_lu_factor(A) -> tuple[np.ndarray, np.ndarray]:
    """Native partial-pivot LU; returns (combined factors, permutation)."""
    A = _square(A)
    return _factor(A, _Rounder(builtin_format("fp64"), NEAREST_EVEN), "partial")


def fp64_lu_solve(A, b) -> np.ndarray:
    lu, perm = fp64_lu_factor(A)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (lu.shape[0],):
        raise ValueError(f"rhs has shape {b.shape}, expected ({lu.shape[0]},)")
    return _substitute(lu, perm, b, _Rounder(builtin_format("fp64"), NEAREST_EVEN))


# ── refinement ───────────────────────────────────────────────────────


def _scaled_solve(lu: LowPrecisionLU, rhs: np.ndarray, rng) -> np.ndarray:
    # Power-of-two scaling keeps tiny residuals out of the format's underflow range.
    peak = float(np.max(np.abs(rhs), initial=0.0))
    if peak == 0.0 or not math.isfinite(peak):
        return lu_solve_lowprec(lu, rhs, rng=rng)
    _, e = math.frexp(peak)
    return np.ldexp(lu_solve_lowprec(lu, np.ldexp(rhs, -e), rng=rng), e)


@dataclass
class IRReport:
    iterations: int
    residual_history: list[float]
    converged: bool
    backward_error: float
    flops_low: int
    flops_high: int
    stagnated: bool = False
    threshold: float = HPL_THRESHOLD

    def lines(self) -> list[str]:
        out = [
            f"converged      {str(self.converged).lower()}",
            f"iterations     {self.iterations}",
            f"backward_error {self.backward_error:.6e}",
            f"flops_low      {self.flops_low}",
            f"flops_high     {self.flops_high}",
        ]
        if self.stagnated:
            out.append("stagnated      true")
        out += [f"  iter {i:3d}  {r:.6e}" for i, r in enumerate(self.residual_history)]
        return out


def ir_solve(A, b, cfg: IRConfig = IRConfig()) -> tuple[np.ndarray, IRReport]:
    """Solve Ax = b by low-precision LU plus FP64 iterative refinement.

    Each correction solve sees the residual scaled by a power of two so its
    largest entry lies in [0.5, 1).  Stops once the HPL backward error is at most ``cfg.tol`` or after
    ``cfg.max_iters`` refinement steps.  Failing to converge is reported, not
    raised; a pivot that rounds to zero raises SingularMatrixError.
    """
    A = _square(A)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    if b.shape != (n,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({n},)")
    rng = cfg.rounding.generator()
    lu = lu_factor_lowprec(A, cfg, rng=rng)
    x = lu_solve_lowprec(lu, b, rng=rng)
    history = [hpl_backward_error(A, x, b)]
    flops_high = 0
    stagnated = False
    iters = 0
    while history[-1] > cfg.tol and iters < cfg.max_iters and math.isfinite(history[-1]):
        r = residual(A, x, b)
        d = _scaled_solve(lu, r, rng)
        x = x + d
        flops_high += 2 * n * n + n
        iters += 1
        history.append(hpl_backward_error(A, x, b))
        if not history[-1] < history[-2]:
            stagnated = True
    report = IRReport(
        iterations=iters,
        residual_history=history,
        converged=history[-1] <= cfg.tol,
        backward_error=history[-1],
        flops_low=lu.flops,
        flops_high=flops_high,
        stagnated=stagnated,
        threshold=cfg.tol,
    )
    return x, report
