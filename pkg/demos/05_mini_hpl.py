"""
A desk-sized HPL and HPL-MxP
============================

Run both benchmark modes on the same seeds, attach a power model, and
emit the report that the command-line tool writes.
"""

# %%
from mpfk.bench import BenchConfig, ConstantPower, PowerTrace, emit_report, energy_metrics, run
from mpfk.refinement import IRConfig

results = [
    run(BenchConfig(n=128, seed=7, power=ConstantPower(300.0))),
    run(BenchConfig(n=128, seed=7, mode="hplmxp", power=ConstantPower(300.0))),
    run(BenchConfig(n=128, seed=7, mode="hplmxp", ir=IRConfig(factor_format="bf16"))),
]
print(emit_report(results, "markdown"))

# %%
# Without timing columns the report is byte-for-byte reproducible.

print(emit_report(results, timing=False))

# %%
# A ramp from 100 W to 200 W averages to 150 W over the run.

r = results[0]
ramp = PowerTrace((0.0, r.elapsed_s), (100.0, 200.0))
energy, per_watt = energy_metrics(r, ramp)
print(f"energy {energy:.4f} J over {r.elapsed_s:.4f} s -> {energy / r.elapsed_s:.1f} W mean, {per_watt:.3g} GFLOP/s/W")
