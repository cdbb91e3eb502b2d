"""
FP64 matrix products from int8 slices
=====================================

Split each row of A and column of B into 7-bit integer slices, multiply
the slices with exact integer GEMMs, and add the pieces back up.
"""

# %%
import numpy as np

from mpfk.emulation import EmulationConfig, emulated_gemm, gemm_error_report, reconstruct, split

rng = np.random.default_rng(1)
A = rng.uniform(-1, 1, (64, 64))
B = rng.uniform(-1, 1, (64, 64))

# %%
# A split is a per-row power-of-two scale plus s int8 slices.

d = split(A[:2, :4], "by_row", s=3, w=7)
print("scales:", d.scale_exponents)
for p, sl in enumerate(d.slices):
    print(f"slice {p}:", sl.tolist())
print("three slices recover A to", np.max(np.abs(reconstruct(d) - A[:2, :4])))

# %%
# More slices, smaller error.  Seven slices sit close to native FP64.

for s in (1, 3, 5, 7):
    rep = gemm_error_report(A, B, EmulationConfig(s=s))
    print(f"s={s}  pairs {rep.slice_multiplies:2d}  max rel error {rep.max_rel_error:.2e}")

# %%
# The triangular policy keeps only slice pairs with p + q < s, which is
# where the 28 integer products for s=7 come from.

calls = []
emulated_gemm(A, B, EmulationConfig(s=7), counter=calls)
print(len(calls), "integer GEMMs:", calls[:6], "...")
