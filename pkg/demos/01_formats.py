"""
Reduced-precision formats, bit by bit
=====================================

Walk through the small floating-point formats: their ranges, how a value
lands on the grid, and what happens at the edges.
"""

# %%
# Every built-in format carries its field widths and derived constants.

import numpy as np

from mpfk import formats as F

for name in ("e4m3", "e5m2", "fp16", "bf16", "tf32", "fp32"):
    spec = F.builtin_format(name)
    print(f"{name:5s} max {F.max_finite(spec):<14.6g} min normal {F.min_positive_normal(spec):<10.3g}"
          f" u {F.unit_roundoff(spec):.3g}")

# %%
# Same number, four formats.  BF16 keeps FP32's range but only 8 bits of
# precision, so 1/3 comes back rougher than in FP16.

third = 1 / 3
for name in ("e4m3", "e5m2", "fp16", "bf16"):
    x = F.encode(third, F.builtin_format(name))
    print(f"{name:5s} bits {x.bits:#06x}  value {F.decode(x)!r}")

# %%
# E4M3 has no infinity.  Out-of-range values saturate by default, or turn
# into the single NaN pattern on request.

e4m3 = F.builtin_format("e4m3")
print(F.decode(F.encode(500.0, e4m3)), F.decode(F.encode(500.0, e4m3, overflow="nan")))

# %%
# Stochastic rounding picks the upper neighbour with probability equal to
# the fractional distance, so the rounded values average back to the input.

v = 1.0 + 2.0**-12          # a quarter of the way between two FP16 neighbours
rng = np.random.default_rng(0)
draws = F.round_to_format(np.full(100_000, v), F.builtin_format("fp16"), F.RoundingMode.stochastic(0), rng=rng)
print("mean of stochastic draws:", draws.mean(), "target:", v)
print("nearest-even instead   :", F.round_to_format(v, F.builtin_format("fp16")))
