"""Accelerator figures of merit, Bytes/FLOP and roofline bounds.

Throughputs are TFLOP/s and bandwidth TB/s, so Bytes/FLOP is simply
bandwidth / throughput and the memory roof is bandwidth * intensity.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "HardwareSpec",
    "BenchmarkRecord",
    "RooflineResult",
    "Discrepancy",
    "SpecFileError",
    "FLAG_THRESHOLD",
    "bytes_per_flop",
    "ridge_intensity",
    "attainable",
    "speedup",
    "efficiency_gain",
    "builtin_specs",
    "builtin_spec",
    "published_benchmarks",
    "consistency_report",
    "figure4_series",
    "load_spec",
    "loads_spec",
    "dumps_spec",
    "save_spec",
    "spec_table_csv",
    "series_csv",
]

FLAG_THRESHOLD = 0.15
PATHS = ("fma", "tensor", "emulated")


class SpecFileError(ValueError):
    """A hardware spec document is malformed."""


Key = tuple[str, str]  # (precision, path)


@dataclass
class HardwareSpec:
    name: str
    throughput: dict[Key, float]  # TFLOP/s
    memory_bw: float  # TB/s
    power_w: float | None = None
    published_bytes_per_flop: dict[Key, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.memory_bw > 0:
            raise ValueError(f"{self.name}: memory_bw must be positive")
        for (prec, path), value in self.throughput.items():
            if path not in PATHS:
                raise ValueError(f"{self.name}: unknown path {path!r} for {prec}")
            if not value > 0:
                raise ValueError(f"{self.name}: throughput {prec}.{path} must be positive")

    def peak(self, precision: str, path: str) -> float:
        try:
            return self.throughput[(precision, path)]
        except KeyError:
            raise KeyError(f"{self.name} has no {precision}.{path} throughput") from None


@dataclass(frozen=True)
class BenchmarkRecord:
    system: str
    mode: str
    perf_tflops: float
    efficiency_gflops_per_watt: float | None = None
    setting: str = ""

    def __post_init__(self):
        if not self.perf_tflops > 0:
            raise ValueError("perf_tflops must be positive")


@dataclass(frozen=True)
class RooflineResult:
    intensity: float  # FLOP per byte
    attainable_tflops: float
    bound: str  # "memory_bound" or "compute_bound"


def bytes_per_flop(spec: HardwareSpec, precision: str, path: str) -> float:
    return spec.memory_bw / spec.peak(precision, path)


def ridge_intensity(spec: HardwareSpec, precision: str, path: str) -> float:
    """Intensity at which the memory and compute roofs meet."""
    return spec.peak(precision, path) / spec.memory_bw


def attainable(spec: HardwareSpec, intensity: float, precision: str, path: str) -> RooflineResult:
    if intensity < 0 or math.isnan(intensity):
        raise ValueError("intensity must be >= 0")
    peak = spec.peak(precision, path)
    memory_roof = spec.memory_bw * intensity
    if memory_roof >= peak:
        return RooflineResult(intensity, peak, "compute_bound")
    return RooflineResult(intensity, memory_roof, "memory_bound")


def speedup(a: BenchmarkRecord, b: BenchmarkRecord) -> float:
    """Performance of ``b`` relative to ``a`` on the same system."""
    _same_system(a, b)
    return b.perf_tflops / a.perf_tflops


def efficiency_gain(a: BenchmarkRecord, b: BenchmarkRecord) -> float:
    _same_system(a, b)
    if a.efficiency_gflops_per_watt is None or b.efficiency_gflops_per_watt is None:
        raise ValueError("both records need an efficiency figure")
    return b.efficiency_gflops_per_watt / a.efficiency_gflops_per_watt


def _same_system(a: BenchmarkRecord, b: BenchmarkRecord) -> None:
    if a.system != b.system:
        raise ValueError(f"records are for different systems: {a.system!r} vs {b.system!r}")


# ── published data ───────────────────────────────────────────────────


def _gpu(name, fp64_fma, fp64_tc, fp16_fma, fp16_tc, bw, printed):
    thr = {("fp64", "fma"): float(fp64_fma)}
    if fp64_tc is not None:
        thr[("fp64", "tensor")] = float(fp64_tc)
    thr[("fp16", "fma")] = float(fp16_fma)
    thr[("fp16", "tensor")] = float(fp16_tc)
    keys = [("fp64", "fma"), ("fp64", "tensor"), ("fp16", "fma"), ("fp16", "tensor")]
    pub = {k: v for k, v in zip(keys, printed) if v is not None}
    return HardwareSpec(name, thr, bw, None, pub)


def builtin_specs() -> list[HardwareSpec]:
    """V100, A100, H200 and B200 as printed in the GPU generations table."""
    return [
        _gpu("V100", 7.8, None, 31.4, 125, 0.9, (0.124, None, 0.031, 0.008)),
        _gpu("A100", 9.75, 19.5, 78, 312, 2.0, (0.225, 0.112, 0.028, 0.007)),
        _gpu("H200", 33.5, 67, 134, 989, 4.8, (0.158, 0.079, 0.039, 0.005)),
        _gpu("B200", 40, 40, 80, 2250, 8.0, (0.220, 0.220, 0.110, 0.004)),
    ]


def builtin_spec(name: str) -> HardwareSpec:
    for spec in builtin_specs():
        if spec.name.lower() == name.lower():
            return spec
    names = ", ".join(s.name for s in builtin_specs())
    raise KeyError(f"no built-in spec {name!r}; available: {names}")


def published_benchmarks() -> list[BenchmarkRecord]:
    """Dense-solver results: FP64 vs FP16+FP64 mixed precision, and FP64 vs s=7 emulation on B200."""
    out = []
    for system, perf, mxp, eff, mxp_eff in [
        ("V100", 6.6, 34.6, 28, 173),
        ("A100", 16.9, 74.6, 45, 262),
        ("H200", 42.6, 124.2, 78, 529),
    ]:
        out.append(BenchmarkRecord(system, "fp64", perf, eff))
        out.append(BenchmarkRecord(system, "fp16+fp64 mxp", mxp, mxp_eff))
    for setting, perf, emu, eff, emu_eff in [
        ("max performance", 34.5, 68.4, 41.7, 71.3),
        ("max efficiency", 23.1, 53.4, 51.4, 82.1),
    ]:
        out.append(BenchmarkRecord("B200", "fp64", perf, eff, setting))
        out.append(BenchmarkRecord("B200", "emulation s=7", emu, emu_eff, setting))
    return out


# ── analysis ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Discrepancy:
    system: str
    precision: str
    path: str
    computed: float
    published: float
    rel_diff: float  # |computed - published| / published
    flagged: bool


def consistency_report(spec: HardwareSpec, threshold: float = FLAG_THRESHOLD) -> list[Discrepancy]:
    """Compare printed Bytes/FLOP against bandwidth / throughput.

    Entries that agree exactly are omitted; the rest are listed and flagged
    when the relative difference exceeds ``threshold``.
    """
    out = []
    for (prec, path), printed in spec.published_bytes_per_flop.items():
        computed = bytes_per_flop(spec, prec, path)
        if computed == printed:
            continue
        rel = abs(computed - printed) / printed
        out.append(Discrepancy(spec.name, prec, path, computed, printed, rel, rel > threshold))
    return out


GENERATION_SERIES = [("fp64", "fma"), ("fp64", "tensor"), ("fp16", "fma"), ("fp16", "tensor")]


def figure4_series(specs: list[HardwareSpec], emulated_throughputs: dict[str, float] | None = None) -> list[dict]:
    """Bytes/FLOP per generation for the FMA and tensor paths, plus emulated DGEMM.

    Rows with a throughput the HardwareSpec lacks (for example V100 FP64 tensor)
    carry ``None``.  The emulated series is bandwidth / supplied TFLOP/s.
    """
    emulated_throughputs = dict(emulated_throughputs or {})
    by_name = {s.name.lower(): s for s in specs}
    unknown = [k for k in emulated_throughputs if k.lower() not in by_name]
    if unknown:
        raise KeyError(f"emulated throughput given for unknown systems: {unknown}")
    rows = []
    for spec in specs:
        for prec, path in GENERATION_SERIES:
            value = bytes_per_flop(spec, prec, path) if (prec, path) in spec.throughput else None
            rows.append(
                {
                    "system": spec.name,
                    "series": f"{prec}.{path}",
                    "bytes_per_flop": value,
                    "published": spec.published_bytes_per_flop.get((prec, path)),
                }
            )
        for name, tflops in emulated_throughputs.items():
            if name.lower() == spec.name.lower():
                if not tflops > 0:
                    raise ValueError(f"emulated throughput for {name} must be positive")
                rows.append(
                    {
                        "system": spec.name,
                        "series": "fp64.emulated",
                        "bytes_per_flop": spec.memory_bw / tflops,
                        "published": None,
                    }
                )
    return rows


# ── serialization ────────────────────────────────────────────────────


def _keyed(mapping: dict[Key, float]) -> dict[str, float]:
    return {f"{p}.{q}": v for (p, q), v in mapping.items()}


def _unkeyed(mapping: dict, what: str) -> dict[Key, float]:
    out = {}
    for key, value in mapping.items():
        prec, dot, path = key.partition(".")
        if not dot or not prec or not path:
            raise SpecFileError(f"{what} key {key!r} is not '<precision>.<path>'")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SpecFileError(f"{what} value for {key!r} is not a number")
        out[(prec, path)] = float(value)
    return out


def dumps_spec(spec: HardwareSpec) -> str:
    doc = {"name": spec.name, "memory_bw_tbps": spec.memory_bw}
    if spec.power_w is not None:
        doc["power_w"] = spec.power_w
    doc["throughput_tflops"] = _keyed(spec.throughput)
    if spec.published_bytes_per_flop:
        doc["published_bytes_per_flop"] = _keyed(spec.published_bytes_per_flop)
    return json.dumps(doc, indent=2) + "\n"


def loads_spec(text: str) -> HardwareSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SpecFileError("spec document must be a JSON object")
    for key in ("name", "memory_bw_tbps", "throughput_tflops"):
        if key not in doc:
            raise SpecFileError(f"missing required field {key!r}")
    known = {"name", "memory_bw_tbps", "power_w", "throughput_tflops", "published_bytes_per_flop"}
    extra = set(doc) - known
    if extra:
        raise SpecFileError(f"unknown fields: {sorted(extra)}")
    try:
        return HardwareSpec(
            name=str(doc["name"]),
            throughput=_unkeyed(doc["throughput_tflops"], "throughput_tflops"),
            memory_bw=float(doc["memory_bw_tbps"]),
            power_w=None if doc.get("power_w") is None else float(doc["power_w"]),
            published_bytes_per_flop=_unkeyed(doc.get("published_bytes_per_flop", {}), "published_bytes_per_flop"),
        )
    except (TypeError, AttributeError) as exc:
        raise SpecFileError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, SpecFileError):
            raise
        raise SpecFileError(str(exc)) from None


def load_spec(path) -> HardwareSpec:
    return loads_spec(Path(path).read_text())


def save_spec(spec: HardwareSpec, path) -> None:
    Path(path).write_text(dumps_spec(spec))


def _cell(x) -> str:
    return "" if x is None else repr(x) if isinstance(x, float) else str(x)


def spec_table_csv(specs: list[HardwareSpec]) -> str:
    """One line per (system, precision, path)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["system", "precision", "path", "throughput_tflops", "memory_bw_tbps", "bytes_per_flop", "published_bytes_per_flop"])
    for spec in specs:
        for (prec, path), tflops in spec.throughput.items():
            w.writerow(
                [
                    spec.name,
                    prec,
                    path,
                    _cell(float(tflops)),
                    _cell(float(spec.memory_bw)),
                    _cell(bytes_per_flop(spec, prec, path)),
                    _cell(spec.published_bytes_per_flop.get((prec, path))),
                ]
            )
    return buf.getvalue()


def series_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["system", "series", "bytes_per_flop", "published"])
    for r in rows:
        w.writerow([r["system"], r["series"], _cell(r["bytes_per_flop"]), _cell(r["published"])])
    return buf.getvalue()
