from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpfk.emulation import (
    EmulationConfig,
    OverflowGuardError,
    emulated_gemm,
    gemm_error_report,
    integer_gemm,
    oracle_gemm_exact,
    reconstruct,
    required_slices_for_exact,
    slice_pairs,
    split,
)

import oracles


def exact_operands(rng, rows, cols, bits, axis):
    """Entries n * 2**(e - bits) with |n| < 2**bits and one power-of-two scale per row/column."""
    ints = rng.integers(-(2**bits) + 1, 2**bits, size=(rows, cols))
    scales = rng.integers(-20, 20, size=rows if axis == 0 else cols)
    shift = scales[:, None] if axis == 0 else scales[None, :]
    return np.ldexp(ints.astype(np.float64), shift - bits)


# ── split / reconstruct ──────────────────────────────────────────────


@pytest.mark.parametrize("s, w", [(1, 7), (3, 5), (7, 7)])
def test_split_zero_matrix(s, w):
    d = split(np.zeros((4, 3)), "by_row", s, w)
    assert np.all(d.scale_exponents == 0)
    assert all(np.all(sl == 0) for sl in d.slices)
    assert d.slice_count == s


def test_split_single_slice_of_three_quarters():
    d = split(np.array([[0.75]]), "by_row", 1, 7)
    assert d.scale_exponents.tolist() == [0]
    assert d.slices[0].tolist() == [[96]]


def test_half_and_unit_entries_fit_one_slice():
    M = np.array([[1.0, -0.5, 0.5], [-1.0, 1.0, -0.5]])
    for orientation in ("by_row", "by_col"):
        assert np.array_equal(reconstruct(split(M, orientation, 1, 7)), M)


@pytest.mark.parametrize("s", [1, 2, 7])
@pytest.mark.parametrize("w", [1, 3, 7])
def test_identity_round_trips(s, w):
    eye = np.eye(5)
    assert np.array_equal(reconstruct(split(eye, "by_row", s, w)), eye)


def test_slices_fit_int8_and_bound_holds():
    rng = np.random.default_rng(11)
    M = rng.uniform(-1, 1, (16, 16)) * np.exp2(rng.integers(-10, 10, (16, 1)))
    d = split(M, "by_row", 7, 7)
    assert all(sl.dtype == np.int8 for sl in d.slices)
    assert all(np.max(np.abs(sl)) <= 127 for sl in d.slices)
    for i in range(16):
        bound = Fraction(2) ** (int(d.scale_exponents[i]) - 49)
        for j in range(16):
            approx = sum(Fraction(int(d.slices[p][i, j])) * Fraction(2) ** (int(d.scale_exponents[i]) - 7 * (p + 1)) for p in range(7))
            assert abs(Fraction(M[i, j]) - approx) < bound
    assert np.max(np.abs(reconstruct(d) - M) / np.exp2(d.scale_exponents)[:, None]) < 2.0**-49


def test_scale_exponent_is_smallest_bound():
    M = np.array([[1.0, 0.25], [0.0, 0.0], [-3.0, 0.1], [2.0**-30, 0.0]])
    d = split(M, "by_row", 2, 7)
    assert d.scale_exponents.tolist() == [1, 0, 2, -29]


def test_exactly_representable_entries_reconstruct_exactly():
    rng = np.random.default_rng(5)
    for s, w in [(1, 7), (3, 7), (4, 5), (8, 7)]:
        M = exact_operands(rng, 8, 8, min(s * w, 53), axis=0)
        assert np.array_equal(reconstruct(split(M, "by_row", s, w)), M)


def test_split_rejects_non_finite():
    M = np.ones((3, 3))
    M[1, 2] = np.nan
    with pytest.raises(ValueError, match=r"\(1, 2\)"):
        split(M)


def test_truncation_error_is_one_sided():
    M = np.random.default_rng(2).uniform(0, 1, (8, 8))
    approx = reconstruct(split(M, "by_row", 2, 7))
    assert np.all(approx <= M)


# ── integer GEMM ─────────────────────────────────────────────────────


def test_integer_gemm_small_cases():
    eye = np.eye(7, dtype=np.int8)
    assert np.array_equal(integer_gemm(eye, eye), np.eye(7, dtype=np.int64))
    assert integer_gemm(np.array([[-5]]), np.array([[7]])).tolist() == [[-35]]


@pytest.mark.parametrize("tile", [None, (16, 16, 8), (3, 5, 2), (64, 64, 64)])
def test_integer_gemm_matches_naive_loop(tile):
    rng = np.random.default_rng(9)
    A = rng.integers(-127, 128, (20, 64)).astype(np.int8)
    B = rng.integers(-127, 128, (64, 24)).astype(np.int8)
    assert integer_gemm(A, B, w=7, tile=tile).tolist() == oracles.naive_int_matmul(A, B)


def test_overflow_guard_trips_before_computing():
    A = np.ones((2, 9), dtype=np.int64)
    with pytest.raises(OverflowGuardError):
        integer_gemm(A, A.T, w=30)
    integer_gemm(A[:, :8], A[:, :8].T, w=30)  # 8 * 2**60 == 2**63 is allowed
    with pytest.raises(OverflowGuardError):
        emulated_gemm(np.ones((2, 9)), np.ones((9, 2)), EmulationConfig(w=30))


# ── emulated GEMM ────────────────────────────────────────────────────


def test_slice_pair_counts_and_order():
    assert len(slice_pairs(7)) == 28
    assert len(slice_pairs(7, "full")) == 49
    pairs = slice_pairs(4)
    assert pairs[:4] == [(0, 0), (0, 1), (1, 0), (0, 2)]
    assert [p + q for p, q in pairs] == sorted(p + q for p, q in pairs)


def test_identity_product_is_exact():
    eye = np.eye(16)
    assert np.array_equal(emulated_gemm(eye, eye), eye)


@pytest.mark.parametrize("s, expected", [(1, 1), (3, 6), (7, 28)])
def test_triangular_policy_multiply_count(s, expected):
    calls = []
    emulated_gemm(np.ones((4, 4)), np.ones((4, 4)), EmulationConfig(s=s), counter=calls)
    assert len(calls) == expected == s * (s + 1) // 2
    full = []
    emulated_gemm(np.ones((4, 4)), np.ones((4, 4)), EmulationConfig(s=s, pair_policy="full"), counter=full)
    assert len(full) == s * s


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        emulated_gemm(np.ones((3, 4)), np.ones((3, 4)))


def test_error_shrinks_with_slice_count():
    rng = np.random.default_rng(32)
    A = rng.uniform(-1, 1, (32, 32))
    B = rng.uniform(-1, 1, (32, 32))
    errs = [gemm_error_report(A, B, EmulationConfig(s=s)).max_rel_error for s in (1, 3, 7)]
    assert errs[0] > errs[1] > errs[2]
    exact = oracle_gemm_exact(A, B)
    C7 = emulated_gemm(A, B)
    ea = split(A, "by_row").scale_exponents
    eb = split(B, "by_col").scale_exponents
    # each of k products loses under 2**-49 per operand plus the dropped pairs
    bound = 32 * np.exp2(ea[:, None] + eb[None, :]) * 2.0**-46
    assert np.all(np.abs(C7 - exact) <= bound)


def test_exact_when_operands_fit():
    rng = np.random.default_rng(77)
    A = exact_operands(rng, 16, 16, 14, axis=0)
    B = exact_operands(rng, 16, 16, 14, axis=1)
    cfg = EmulationConfig(s=2, w=7, pair_policy="full")
    assert np.array_equal(emulated_gemm(A, B, cfg), oracle_gemm_exact(A, B))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-40, 40))
def test_power_of_two_equivariance(seed, t):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, (8, 12))
    B = rng.uniform(-1, 1, (12, 6))
    base = emulated_gemm(A, B)
    assert np.array_equal(emulated_gemm(np.ldexp(A, t), B), np.ldexp(base, t))
    assert np.array_equal(emulated_gemm(A, np.ldexp(B, t)), np.ldexp(base, t))


def test_determinism_and_tile_independence():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((40, 33))
    B = rng.standard_normal((33, 21))
    first = emulated_gemm(A, B)
    assert np.array_equal(first, emulated_gemm(A, B))
    assert np.array_equal(first, emulated_gemm(A, B, EmulationConfig(tile=None)))
    assert np.array_equal(first, emulated_gemm(A, B, EmulationConfig(tile=(5, 7, 3))))


# ── oracle ───────────────────────────────────────────────────────────


def test_oracle_examples():
    assert np.array_equal(oracle_gemm_exact(np.eye(4), np.eye(4)), np.eye(4))
    got = oracle_gemm_exact(np.array([[0.1]]), np.array([[0.3]]))[0, 0]
    assert got == float(Fraction(0.1) * Fraction(0.3))


def test_oracle_matches_naive_when_sums_are_exact():
    rng = np.random.default_rng(8)
    A = np.ldexp(1.0, rng.integers(-5, 5, (6, 7))) * rng.choice([-1, 1], (6, 7))
    B = np.ldexp(1.0, rng.integers(-5, 5, (7, 5))) * rng.choice([-1, 1], (7, 5))
    assert np.array_equal(oracle_gemm_exact(A, B), A @ B)


def test_oracle_handles_wide_exponent_range():
    A = np.array([[1e300, 1e-300]])
    B = np.array([[1e-300], [1e300]])
    assert oracle_gemm_exact(A, B)[0, 0] == 2.0


# ── slice requirements and reporting ─────────────────────────────────


def test_required_slices_examples():
    assert required_slices_for_exact(np.eye(6), 7) == 1
    assert required_slices_for_exact(np.zeros((3, 3)), 7) == 1
    full = np.array([[1.0 + 2.0**-52, 0.5]])
    assert required_slices_for_exact(full, 7) == 8


@pytest.mark.parametrize("w", [3, 7, 11])
def test_required_slices_is_minimal_by_reconstruction(w):
    rng = np.random.default_rng(w)
    M = rng.standard_normal((6, 6))
    s = required_slices_for_exact(M, w)
    assert np.array_equal(reconstruct(split(M, "by_row", s, w)), M)
    if s > 1:
        assert not np.array_equal(reconstruct(split(M, "by_row", s - 1, w)), M)


def test_error_report_fields():
    rng = np.random.default_rng(1)
    A = rng.uniform(-1, 1, (8, 4))
    B = rng.uniform(-1, 1, (4, 5))
    rep = gemm_error_report(A, B)
    assert rep.slice_multiplies == 28
    assert rep.fp64_flops == 2 * 8 * 5 * 4
    assert rep.integer_ops == 28 * rep.fp64_flops
    assert 0 <= rep.median_rel_error <= rep.max_rel_error
    assert gemm_error_report(A, B) == rep
