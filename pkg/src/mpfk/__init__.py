"""Mixed-precision floating-point toolkit.

Submodules:

- ``formats``: bit-exact FP8/FP16/BF16/TF32/FP32/FP64 encode, decode and rounding
- ``emulation``: FP64 GEMM emulated with integer slices
- ``refinement``: low-precision LU with FP64 iterative refinement
- ``hardware``: Bytes/FLOP, roofline and published accelerator figures
- ``bench``: mini HPL / HPL-MxP drivers and reports
"""

from . import bench, emulation, formats, hardware, refinement
from .emulation import EmulationConfig, emulated_gemm, oracle_gemm_exact
from .formats import FormatSpec, RoundingMode, builtin_format, decode, encode
from .refinement import IRConfig, fp64_lu_solve, hpl_backward_error, ir_solve

__version__ = "0.1.0"
