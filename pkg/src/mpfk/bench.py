"""Desk-scale HPL and HPL-MxP drivers with energy accounting.

Matrices come from a splitmix64 stream so they are identical on every
platform.  Both modes are credited with the same FP64 operation count,
(2/3)n^3 + 2n^2, so their rates compare directly.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .refinement import (
    HPL_THRESHOLD,
    IRConfig,
    SingularMatrixError,
    fp64_lu_solve,
    hpl_backward_error,
    ir_solve,
)

__all__ = [
    "SplitMix64",
    "splitmix64_block",
    "uniform_block",
    "prng_stream",
    "generate_hpl_matrix",
    "generate_dd_matrix",
    "flop_model",
    "ConstantPower",
    "PowerTrace",
    "load_power_trace",
    "BenchConfig",
    "BenchResult",
    "run_hpl",
    "run_hplmxp",
    "run",
    "energy_metrics",
    "emit_report",
    "REPORT_COLUMNS",
]

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


class SplitMix64:
    """Reference scalar splitmix64 generator."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def next_uniform(self) -> float:
        """Uniform float64 in [-0.5, 0.5) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53 - 0.5


def splitmix64_block(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the splitmix64 stream, vectorised."""
    with np.errstate(over="ignore"):
        idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(seed & _MASK) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def uniform_block(seed: int, count: int, start: int = 0) -> np.ndarray:
    raw = splitmix64_block(seed, count, start)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 - 0.5


def prng_stream(seed: int):
    """Endless iterator of uniforms in [-0.5, 0.5)."""
    gen = SplitMix64(seed)
    while True:
        yield gen.next_uniform()


def generate_hpl_matrix(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """A filled row-major from the stream, then b from the following draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    draws = uniform_block(seed, n * n + n)
    return draws[: n * n].reshape(n, n), draws[n * n :].copy()


def generate_dd_matrix(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Same draws as ``generate_hpl_matrix``, with a_ii = sum_{j != i} |a_ij| + 1."""
    A, b = generate_hpl_matrix(n, seed)
    for i in range(n):
        off = np.abs(np.concatenate([A[i, :i], A[i, i + 1 :]]))
        A[i, i] = math.fsum(off) + 1.0
    return A, b


def flop_model(n: int) -> float:
    return 2.0 / 3.0 * n**3 + 2.0 * n**2


# ── power ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ConstantPower:
    watts: float

    def __post_init__(self):
        if not self.watts > 0:
            raise ValueError("watts must be positive")


@dataclass(frozen=True)
class PowerTrace:
    times: tuple[float, ...]
    watts: tuple[float, ...]

    def __post_init__(self):
        if not self.times:
            raise ValueError("power trace is empty")
        if len(self.times) != len(self.watts):
            raise ValueError("times and watts differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trace timestamps must be strictly increasing")
        if any(not w > 0 for w in self.watts):
            raise ValueError("trace watts must be positive")


def load_power_trace(path) -> PowerTrace:
    """Read a CSV with header ``time_s,watts``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time_s", "watts"]:
            raise ValueError(f"{path}: expected header 'time_s,watts', got {header}")
        times, watts = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, w = (float(x) for x in row)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {row}") from None
            times.append(t)
            watts.append(w)
    return PowerTrace(tuple(times), tuple(watts))


def _trace_energy(trace: PowerTrace, elapsed: float) -> tuple[float, float]:
    """Trapezoidal energy over [0, elapsed] clipped to the trace span; returns (joules, seconds)."""
    t = np.asarray(trace.times)
    w = np.asarray(trace.watts)
    lo = max(0.0, t[0])
    hi = min(elapsed, t[-1])
    if len(t) == 1:
        if not lo <= t[0] <= elapsed:
            raise ValueError("single-sample trace lies outside the run")
        return w[0] * elapsed, elapsed
    if hi <= lo:
        raise ValueError("power trace does not overlap the run")
    inside = (t > lo) & (t < hi)
    ts = np.concatenate([[lo], t[inside], [hi]])
    ws = np.interp(ts, t, w)
    joules = float(np.sum((ts[1:] - ts[:-1]) * (ws[1:] + ws[:-1]) / 2.0))
    return joules, hi - lo


# ── runs ─────────────────────────────────────────────────────────────


@dataclass
class BenchConfig:
    n: int
    seed: int = 0
    mode: Literal["hpl", "hplmxp"] = "hpl"
    ir: IRConfig = field(default_factory=IRConfig)
    power: ConstantPower | PowerTrace | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.mode not in ("hpl", "hplmxp"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class BenchResult:
    mode: str
    n: int
    seed: int
    elapsed_s: float
    gflops: float
    backward_error: float
    passed: bool
    iterations: int | None = None
    energy_j: float | None = None
    gflops_per_watt: float | None = None
    note: str = ""


def energy_metrics(result: BenchResult, power: ConstantPower | PowerTrace) -> tuple[float, float]:
    """(energy in joules, GFLOP/s per watt) for a finished run."""
    if not result.elapsed_s > 0:
        raise ValueError("elapsed_s must be positive")
    if isinstance(power, ConstantPower):
        energy, mean = power.watts * result.elapsed_s, power.watts
    else:
        energy, span = _trace_energy(power, result.elapsed_s)
        mean = energy / span
    return energy, result.gflops / mean


def _finish(cfg: BenchConfig, elapsed: float, x, A, b, iterations=None, note="") -> BenchResult:
    elapsed = max(elapsed, 1e-9)
    be = hpl_backward_error(A, x, b) if x is not None else math.inf
    result = BenchResult(
        mode=cfg.mode,
        n=cfg.n,
        seed=cfg.seed,
        elapsed_s=elapsed,
        gflops=flop_model(cfg.n) / elapsed / 1e9,
        backward_error=be,
        passed=be <= HPL_THRESHOLD,
        iterations=iterations,
        note=note,
    )
    if cfg.power is not None:
        result.energy_j, result.gflops_per_watt = energy_metrics(result, cfg.power)
    return result


def run_hpl(cfg: BenchConfig) -> BenchResult:
    if cfg.mode != "hpl":
        raise ValueError("run_hpl needs mode='hpl'")
    A, b = generate_hpl_matrix(cfg.n, cfg.seed)
    t0 = time.perf_counter()
    try:
        x = fp64_lu_solve(A, b)
        note = ""
    except SingularMatrixError as exc:
        x, note = None, str(exc)
    return _finish(cfg, time.perf_counter() - t0, x, A, b, note=note)


def run_hplmxp(cfg: BenchConfig) -> BenchResult:
    """Low-precision factorization plus FP64 refinement; passing needs FP64-grade accuracy."""
    if cfg.mode != "hplmxp":
        raise ValueError("run_hplmxp needs mode='hplmxp'")
    A, b = generate_dd_matrix(cfg.n, cfg.seed)
    t0 = time.perf_counter()
    x, report = ir_solve(A, b, cfg.ir)
    result = _finish(cfg, time.perf_counter() - t0, x, A, b, iterations=report.iterations)
    result.passed = result.passed and report.converged
    if not report.converged:
        result.note = f"not converged after {report.iterations} iterations"
    return result


def run(cfg: BenchConfig) -> BenchResult:
    return run_hpl(cfg) if cfg.mode == "hpl" else run_hplmxp(cfg)


# ── reports ──────────────────────────────────────────────────────────

REPORT_COLUMNS = [
    "mode",
    "n",
    "seed",
    "elapsed_s",
    "gflops",
    "backward_error",
    "passed",
    "iterations",
    "energy_j",
    "gflops_per_watt",
]
TIMING_COLUMNS = {"elapsed_s", "gflops", "energy_j", "gflops_per_watt"}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _rows(results, timing: bool) -> list[list[str]]:
    rows = []
    for r in results:
        row = []
        for col in REPORT_COLUMNS:
            value = getattr(r, col)
            row.append("" if (not timing and col in TIMING_COLUMNS) else _cell(value))
        rows.append(row)
    return rows


def emit_report(results, format: Literal["csv", "markdown"] = "csv", *, timing: bool = True) -> str:
    """Render results with a stable column order; ``timing=False`` blanks time-derived cells."""
    rows = _rows(results, timing)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerows(rows)
        return buf.getvalue()
    if format == "markdown":
        lines = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def write_report(results, path, format: Literal["csv", "markdown"] = "csv", *, timing: bool = True) -> None:
    Path(path).write_text(emit_report(results, format, timing=timing))
