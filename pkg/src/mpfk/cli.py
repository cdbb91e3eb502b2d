"""Command-line front end: ``mpfk <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure (non-convergence, failed gate,
overflow guard), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, emulation, formats, hardware
from .refinement import IRConfig, SingularMatrixError, ir_solve

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("MPFK_SEED")
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"MPFK_SEED={raw!r} is not an integer") from None


def _int(text: str) -> int:
    return int(text, 0)


# ── format ───────────────────────────────────────────────────────────


def _spec(name: str) -> formats.FormatSpec:
    try:
        return formats.builtin_format(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_format(args, out) -> int:
    spec = _spec(args.type)
    if not spec.arithmetic:
        raise UsageError(f"{spec.name} is metadata-only")
    width = (spec.storage_bits + 3) // 4
    if args.action == "inspect":
        if args.bits is None:
            raise UsageError("format inspect needs --bits")
        try:
            x = formats.PackedScalar(_int(args.bits), spec)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        value = formats.decode(x)
        print(f"format  {spec.name} (1+{spec.exponent_bits}+{spec.mantissa_bits}, bias {spec.bias})", file=out)
        print(f"bits    0x{x.bits:0{width}X}", file=out)
        print(f"value   {value!r}", file=out)
        print(f"class   {formats.classify(x)}", file=out)
        print(f"ulp     {formats.ulp(value, spec)!r}", file=out)
        return EXIT_OK

    if args.value is None:
        raise UsageError("format convert needs --value")
    try:
        v = float(args.value)
        mode = formats.RoundingMode.parse(args.round)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    x = formats.encode(v, spec, mode, overflow=args.overflow)
    rounded = formats.decode(x)
    print(f"format  {spec.name}", file=out)
    print(f"input   {v!r}", file=out)
    print(f"bits    0x{x.bits:0{width}X}", file=out)
    print(f"value   {rounded!r}", file=out)
    print(f"class   {formats.classify(x)}", file=out)
    if np.isfinite(rounded) and np.isfinite(v):
        print(f"error   {rounded - v!r}", file=out)
    if np.isfinite(v) and abs(v) > formats.max_finite(spec):
        what = "saturated to max finite" if np.isfinite(rounded) else f"overflowed to {rounded!r}"
        print(f"note    {v!r} exceeds max finite {formats.max_finite(spec)!r}; {what}", file=out)
    return EXIT_OK


# ── gemm ─────────────────────────────────────────────────────────────


def _load_matrix(path: str) -> np.ndarray:
    try:
        if path.endswith(".npy"):
            M = np.load(path)
        else:
            M = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read matrix {path}: {exc}") from None
    return np.atleast_2d(np.asarray(M, dtype=np.float64))


def cmd_gemm(args, out) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.a or args.b:
        if not (args.a and args.b):
            raise UsageError("--a and --b must be given together")
        A, B = _load_matrix(args.a), _load_matrix(args.b)
    else:
        k = args.k if args.k is not None else args.n
        m = args.m if args.m is not None else args.n
        if min(args.n, k, m) < 1:
            raise UsageError("matrix dimensions must be >= 1")
        draws = bench.uniform_block(seed, args.n * k + k * m) * 2.0  # uniform in [-1, 1)
        A = draws[: args.n * k].reshape(args.n, k)
        B = draws[args.n * k :].reshape(k, m)
    if A.shape[1] != B.shape[0]:
        raise UsageError(f"dimension mismatch: A is {A.shape}, B is {B.shape}")
    try:
        cfg = emulation.EmulationConfig(s=args.s, w=args.w, pair_policy=args.pair_policy)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    print(f"shape            {A.shape[0]}x{A.shape[1]} @ {B.shape[0]}x{B.shape[1]}", file=out)
    print(f"config           s={cfg.s} w={cfg.w} pairs={cfg.pair_policy}", file=out)
    try:
        if args.verify:
            report = emulation.gemm_error_report(A, B, cfg)
            for line in report.lines():
                print(line, file=out)
            if args.compare:
                for s in sorted(set(args.compare)):
                    other = emulation.gemm_error_report(A, B, emulation.EmulationConfig(s=s, w=cfg.w, pair_policy=cfg.pair_policy))
                    print(f"compare s={s:<3d}    max_rel_error {other.max_rel_error:.3e}", file=out)
        else:
            calls: list = []
            C = emulation.emulated_gemm(A, B, cfg, counter=calls)
            print(f"slice_multiplies {len(calls)}", file=out)
            print(f"checksum         {float(np.sum(C))!r}", file=out)
    except emulation.OverflowGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ── solve-ir ─────────────────────────────────────────────────────────


def cmd_solve_ir(args, out) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        cfg = IRConfig(
            factor_format=_spec(args.factor_format),
            rounding=formats.RoundingMode.parse(args.round),
            pivoting=args.pivoting,
            tol=args.tol,
            max_iters=args.max_iters,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    A, b = bench.generate_dd_matrix(args.n, seed)
    try:
        _, report = ir_solve(A, b, cfg)
    except SingularMatrixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"n              {args.n}", file=out)
    print(f"factor_format  {cfg.factor_format.name}", file=out)
    for line in report.lines():
        print(line, file=out)
    return EXIT_OK if report.converged else EXIT_NUMERIC


# ── bench ────────────────────────────────────────────────────────────


def cmd_bench(args, out) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    seed = args.seed if args.seed is not None else _default_seed()
    power = None
    if args.power_constant is not None and args.power_trace is not None:
        raise UsageError("give at most one of --power-constant and --power-trace")
    try:
        if args.power_constant is not None:
            power = bench.ConstantPower(args.power_constant)
        elif args.power_trace is not None:
            power = bench.load_power_trace(args.power_trace)
        ir = IRConfig(factor_format=_spec(args.factor_format))
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    cfg = bench.BenchConfig(n=args.n, seed=seed, mode=args.mode, ir=ir, power=power)
    try:
        result = bench.run(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = bench.emit_report([result], args.format, timing=not args.no_timing)
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    if result.note:
        print(f"note: {result.note}", file=sys.stderr)
    return EXIT_OK if result.passed else EXIT_NUMERIC


# ── roofline ─────────────────────────────────────────────────────────


def _parse_emulated(items) -> dict[str, float]:
    table = {}
    for item in items or []:
        name, eq, value = item.partition("=")
        try:
            table[name] = float(value)
        except ValueError:
            raise UsageError(f"--emulated-tflops expects SYSTEM=TFLOPS, got {item!r}") from None
        if not eq:
            raise UsageError(f"--emulated-tflops expects SYSTEM=TFLOPS, got {item!r}")
    return table


def cmd_roofline(args, out) -> int:
    try:
        if args.spec:
            specs = [hardware.load_spec(args.spec)]
        elif args.builtin:
            specs = [hardware.builtin_spec(args.builtin)]
        else:
            specs = hardware.builtin_specs()
    except hardware.SpecFileError as exc:
        raise UsageError(f"{args.spec}: {exc}") from None
    except (OSError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    emulated = _parse_emulated(args.emulated_tflops)

    try:
        if args.series == "fig4":
            text = hardware.series_csv(hardware.figure4_series(specs, emulated))
        elif args.precision or args.path:
            if not (args.precision and args.path):
                raise UsageError("--precision and --path go together")
            spec = specs[0]
            lines = [f"system          {spec.name}", f"bytes_per_flop  {hardware.bytes_per_flop(spec, args.precision, args.path)!r}"]
            if args.intensity is not None:
                r = hardware.attainable(spec, args.intensity, args.precision, args.path)
                lines += [f"attainable      {r.attainable_tflops!r} TFLOP/s", f"bound           {r.bound}"]
            text = "\n".join(lines) + "\n"
        else:
            text = hardware.spec_table_csv(specs)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    if args.consistency:
        rows = [d for s in specs for d in hardware.consistency_report(s)]
        text += "\nsystem,precision,path,computed,published,rel_diff,flagged\n"
        for d in rows:
            text += f"{d.system},{d.precision},{d.path},{d.computed!r},{d.published!r},{d.rel_diff:.4f},{str(d.flagged).lower()}\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


# ── parser ───────────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpfk", description="Mixed-precision floating-point toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("format", help="inspect or convert reduced-precision values")
    p.add_argument("action", choices=["inspect", "convert"])
    p.add_argument("--type", required=True, help="format name: e4m3, e5m2, fp16, bf16, tf32, fp32, fp64")
    p.add_argument("--bits", help="raw encoding for inspect, e.g. 0x3C00")
    p.add_argument("--value", help="decimal value for convert")
    p.add_argument("--round", default="nearest_even", help="nearest_even, toward_zero or stochastic:<seed>")
    p.add_argument("--overflow", choices=["saturate", "nan"], default="saturate", help="e4m3 overflow policy")
    p.set_defaults(func=cmd_format)

    p = sub.add_parser("gemm", help="emulated FP64 GEMM with integer slices")
    p.add_argument("--n", type=int, default=32, help="rows of A")
    p.add_argument("--k", type=int, help="inner dimension (default n)")
    p.add_argument("--m", type=int, help="columns of B (default n)")
    p.add_argument("--s", type=int, default=7, help="slice count")
    p.add_argument("--w", type=int, default=7, help="bits per slice")
    p.add_argument("--pair-policy", choices=["triangular", "full"], default="triangular")
    p.add_argument("--seed", type=_int, help="operand seed (default $MPFK_SEED or 0)")
    p.add_argument("--a", help="CSV or .npy file for A instead of random operands")
    p.add_argument("--b", help="CSV or .npy file for B")
    p.add_argument("--verify", action="store_true", help="compare against the exact oracle")
    p.add_argument("--compare", type=int, nargs="*", help="extra slice counts to compare under --verify")
    p.set_defaults(func=cmd_gemm)

    p = sub.add_parser("solve-ir", help="mixed-precision iterative refinement on a diagonally dominant system")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--seed", type=_int, help="matrix seed (default $MPFK_SEED or 0)")
    p.add_argument("--factor-format", default="fp16")
    p.add_argument("--round", default="nearest_even", help="nearest_even, toward_zero or stochastic:<seed>")
    p.add_argument("--pivoting", choices=["partial", "none"], default="partial")
    p.add_argument("--tol", type=float, default=16.0, help="HPL backward-error target")
    p.add_argument("--max-iters", type=int, default=50)
    p.set_defaults(func=cmd_solve_ir)

    p = sub.add_parser("bench", help="mini HPL / HPL-MxP run")
    p.add_argument("mode", choices=["hpl", "hplmxp"])
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--seed", type=_int, help="matrix seed (default $MPFK_SEED or 0)")
    p.add_argument("--factor-format", default="fp16", help="hplmxp factorization format")
    p.add_argument("--power-constant", type=float, help="constant power draw in watts")
    p.add_argument("--power-trace", help="CSV power trace with header time_s,watts")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.add_argument("--no-timing", action="store_true", help="blank timing-derived columns")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("roofline", help="Bytes/FLOP, roofline and figure series")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spec", help="hardware spec JSON file")
    src.add_argument("--builtin", help="built-in system: v100, a100, h200, b200")
    p.add_argument("--precision", help="e.g. fp16")
    p.add_argument("--path", choices=list(hardware.PATHS))
    p.add_argument("--intensity", type=float, help="arithmetic intensity in FLOP/byte")
    p.add_argument("--series", choices=["fig4"], help="emit the Bytes/FLOP generation series")
    p.add_argument("--emulated-tflops", action="append", metavar="SYSTEM=TFLOPS", help="effective emulated DGEMM rate")
    p.add_argument("--consistency", action="store_true", help="append the printed-vs-computed report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_roofline)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"mpfk {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
