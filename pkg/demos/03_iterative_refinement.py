"""
Solving in FP16, answering in FP64
==================================

Factor a diagonally dominant system in a small format, then polish the
answer with FP64 residuals until it passes the HPL backward-error check.
"""

# %%
from mpfk.bench import generate_dd_matrix
from mpfk.refinement import IRConfig, hpl_backward_error, ir_solve, lu_factor_lowprec, lu_solve_lowprec

A, b = generate_dd_matrix(128, seed=1)

# %%
# The raw low-precision solve is nowhere near FP64 quality.

lu = lu_factor_lowprec(A, IRConfig(factor_format="fp16"))
x0 = lu_solve_lowprec(lu, b)
print(f"FP16 solve alone: backward error {hpl_backward_error(A, x0, b):.3e}")

# %%
# A few refinement steps reuse the same factors.

for fmt in ("fp16", "bf16", "e4m3", "fp32"):
    _, rep = ir_solve(A, b, IRConfig(factor_format=fmt))
    trail = " -> ".join(f"{r:.1e}" for r in rep.residual_history)
    print(f"{fmt:5s} {rep.iterations:2d} steps  {trail}")

# %%
# The low-precision side does the O(n^3) work; FP64 only pays O(n^2) per step.

_, rep = ir_solve(A, b)
print("low-precision ops :", rep.flops_low)
print("FP64 ops          :", rep.flops_high)
