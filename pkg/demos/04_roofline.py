"""
Bytes per FLOP across GPU generations
=====================================

Compare memory bandwidth with compute throughput for four GPU
generations, and see where a kernel of a given intensity lands.
"""

# %%
from mpfk import hardware as H

specs = H.builtin_specs()
for row in H.figure4_series(specs, {"B200": 68.4}):
    value = "n/a" if row["bytes_per_flop"] is None else f"{row['bytes_per_flop']:.4f}"
    print(f"{row['system']:5s} {row['series']:14s} {value}")

# %%
# The printed FP64 FMA column does not quite match bandwidth / throughput.
# The report lists each gap; none crosses the 15% flag.

for spec in specs:
    for d in H.consistency_report(spec):
        print(f"{d.system:5s} {d.precision}.{d.path:7s} computed {d.computed:.4f} printed {d.published:.3f}"
              f" diff {d.rel_diff:5.1%}{'  FLAG' if d.flagged else ''}")

# %%
# A GEMM-like kernel at 50 FLOP/byte versus a stream-like one at 0.25.

h200 = H.builtin_spec("H200")
for intensity in (0.25, 50.0):
    r = H.attainable(h200, intensity, "fp64", "tensor")
    print(f"I={intensity:6.2f}  {r.attainable_tflops:6.2f} TFLOP/s  {r.bound}")

# %%
# Published dense-solver speedups, recomputed from the raw table entries.

recs = {(r.system, r.mode, r.setting): r for r in H.published_benchmarks()}
a, b = recs[("A100", "fp64", "")], recs[("A100", "fp16+fp64 mxp", "")]
print(f"A100 mixed precision: {H.speedup(a, b):.2f}x faster, {H.efficiency_gain(a, b):.2f}x per watt")
