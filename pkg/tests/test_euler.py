import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import euler_oracle, paper_functional, two_param_brute
from sfde_euler.coefficient import (
    ConstantCoefficient,
    IntegralFunctional,
    Measure,
    OuterFunction,
    PointDelay,
    paper_coefficient,
)
from sfde_euler.errors import AlignmentError, DivergenceError, DomainError
from sfde_euler.euler import (
    MATERIALIZE_LIMIT,
    _chain_defect,
    chaining_identity_check,
    chaining_scale,
    default_lambda,
    euler_solve,
    reference_solve,
    remainder_norm,
    scheme_remainder,
    solution_remainder,
    write_solution_csv,
)
from sfde_euler.fbm import FbmPath, mix_seed, sample_fbm_circulant, subsample
from sfde_euler.holder import holder_seminorm, sewing_check, two_param_norm
from sfde_euler.path import InitialCondition, build_grid, segment_at

EPS = np.finfo(float).eps
TAU, H = 0.1, 0.75
XI = InitialCondition.polynomial(2.0, 0.0, 1.0)
PAPER = paper_coefficient(TAU)


def solve(coeff=PAPER, xi=XI, n=20, T=1.0, seed=0, H=H):
    spec = build_grid(TAU, n, T)
    driver = sample_fbm_circulant(spec.n_forward, H, T, seed)
    return euler_solve(coeff, xi, driver, spec)


# -- lambda ----------------------------------------------------------------


@given(st.floats(0.5001, 0.9999))
def test_default_lambda_in_range(h):
    lam = default_lambda(h)
    assert 0.5 < lam < h


def test_default_lambda_values():
    assert default_lambda(0.75) == pytest.approx(0.7)
    assert default_lambda(0.52) == pytest.approx(0.51)
    with pytest.raises(DomainError):
        default_lambda(0.5)


# -- scheme ----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("n,T", [(10, 0.5), (7, 0.7), (1, 0.3)])
def test_scheme_matches_oracle(seed, n, T):
    res = solve(n=n, T=T, seed=seed)
    expect = euler_oracle(paper_functional, XI, res.driver.values, TAU, n, res.spec.n_forward)
    assert np.allclose(res.path.values, expect, rtol=1e-12, atol=0)


@pytest.mark.parametrize("seed", range(3))
def test_point_delay_matches_oracle(seed):
    g = OuterFunction("tanh")
    res = solve(coeff=PointDelay(g, TAU), n=8, T=0.6, seed=seed)
    expect = euler_oracle(lambda seg, step: math.tanh(seg[0]), XI, res.driver.values, TAU, 8, 48)
    assert np.allclose(res.path.values, expect, rtol=1e-13, atol=0)


def test_trace_is_coefficient_on_segments():
    res = solve(n=10, T=0.4, seed=2)
    for k in range(res.spec.n_forward + 1):
        assert res.trace[k] == PAPER(segment_at(res.path, k))
    assert len(res.trace) == len(res.X) == res.spec.n_forward + 1


def test_zero_coefficient_freezes():
    res = solve(coeff=ConstantCoefficient(0.0), seed=1)
    assert np.all(res.X == 2.0)
    assert np.all(res.path.values[: res.spec.n + 1] == XI.sample(res.spec))


@given(st.floats(-5, 5), st.integers(0, 10**6), st.integers(1, 40))
def test_constant_coefficient_telescopes(c, seed, n):
    res = solve(coeff=ConstantCoefficient(c), n=n, seed=seed)
    B = res.B
    err = np.abs(res.X - (2.0 + c * B))
    # four roundings per accumulated step
    k = np.arange(len(B))
    bound = 4 * EPS * (k + 1) * (2.0 + abs(c) * 2 * np.max(np.abs(B)))
    assert np.all(err <= bound)


@given(
    st.sampled_from([0.25, 0.5, 2.0, 8.0]),
    st.one_of(st.just(0.0), st.floats(1e-3, 3), st.floats(-3, -1e-3)),
    st.integers(0, 10**6),
)
def test_driver_scaling_scales_increments(a, c, seed):
    spec = build_grid(TAU, 10, 1.0)
    B = sample_fbm_circulant(spec.n_forward, H, 1.0, seed)
    aB = FbmPath(B.hurst, B.horizon, B.step, a * B.values, B.seed)
    zero = InitialCondition.constant(0.0)
    X1 = euler_solve(ConstantCoefficient(c), zero, B, spec).X
    X2 = euler_solve(ConstantCoefficient(c), zero, aB, spec).X
    # power-of-two scalings commute with every rounding away from subnormals
    assert np.array_equal(X2, a * X1)


def test_pure_delay_first_interval():
    spec = build_grid(TAU, 25, TAU)
    for seed in range(20):
        driver = sample_fbm_circulant(25, H, TAU, seed)
        res = euler_solve(PointDelay(OuterFunction("identity"), TAU), InitialCondition.constant(1.0), driver, spec)
        assert np.all(res.trace[:-1] == 1.0)
        assert np.allclose(res.X, 1.0 + driver.values, rtol=1e-12, atol=0)


def test_deterministic():
    a, b = solve(seed=9), solve(seed=9)
    assert np.array_equal(a.path.values, b.path.values)
    assert np.array_equal(a.trace, b.trace)


def test_inner_range_recorded():
    res = solve(seed=3)
    lo, hi = res.inner_range
    inners = [PAPER.inner(segment_at(res.path, k)) for k in range(res.spec.n_forward + 1)]
    assert lo == pytest.approx(min(inners), rel=1e-12) and hi == pytest.approx(max(inners), rel=1e-12)
    assert solve(coeff=ConstantCoefficient(1.0)).inner_range is None


def test_driver_mismatch():
    spec = build_grid(TAU, 10, 1.0)
    with pytest.raises(AlignmentError):
        euler_solve(PAPER, XI, sample_fbm_circulant(50, H, 1.0, 0), spec)
    with pytest.raises(AlignmentError):
        euler_solve(PAPER, XI, sample_fbm_circulant(50, H, 0.5, 0), spec)


def test_rejects_rough_driver_and_bad_lambda():
    spec = build_grid(TAU, 10, 1.0)
    with pytest.raises(DomainError):
        euler_solve(PAPER, XI, sample_fbm_circulant(100, 0.4, 1.0, 0), spec)
    with pytest.raises(DomainError):
        euler_solve(PAPER, XI, sample_fbm_circulant(100, H, 1.0, 0), spec, lam=0.8)


def test_divergence_guard():
    spec = build_grid(TAU, 10, 1.0)
    driver = sample_fbm_circulant(100, H, 1.0, 0)
    with pytest.raises(DivergenceError) as info:
        euler_solve(ConstantCoefficient(1e15), XI, driver, spec)
    assert info.value.step == 1
    with pytest.raises(DivergenceError):
        euler_solve(ConstantCoefficient(float("nan")), XI, driver, spec)
    explosive = IntegralFunctional(OuterFunction("affine", (1e5, 0.0)), Measure.dirac(TAU, 0.0))
    with pytest.raises(DivergenceError) as info:
        euler_solve(explosive, XI, driver, spec)
    assert info.value.step > 1


def test_solution_csv(tmp_path):
    res = solve(n=5, T=0.2, seed=1)
    write_solution_csv(res, tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["t", "X", "f_trace"]
    assert len(rows) == 1 + 5 + 10 + 1
    assert float(rows[1][1]) == pytest.approx(2.01)
    assert [float(r[1]) for r in rows[1:]] == res.path.values.tolist()
    assert [float(r[2]) for r in rows[6:]] == res.trace.tolist()


# -- reference solves ------------------------------------------------------


def test_reference_m1_is_plain_solve():
    spec = build_grid(TAU, 10, 1.0)
    driver = sample_fbm_circulant(100, H, 1.0, 4)
    a = euler_solve(PAPER, XI, driver, spec)
    b = reference_solve(PAPER, XI, driver, spec, 1)
    assert np.array_equal(a.path.values, b.path.values) and b.stride == 1


def test_reference_constant_coefficient_agrees():
    spec = build_grid(TAU, 10, 1.0)
    fine = sample_fbm_circulant(1600, H, 1.0, 4)
    coarse = euler_solve(ConstantCoefficient(1.3), XI, subsample(fine, 16), spec)
    ref = reference_solve(ConstantCoefficient(1.3), XI, fine, spec, 16)
    assert np.allclose(ref.X[ref.coarse_index], coarse.X, rtol=0, atol=1e-13)
    with pytest.raises(ValueError):
        reference_solve(PAPER, XI, fine, spec, 0)


def test_refinement_reduces_error_per_seed():
    from sfde_euler.convergence import sup_error

    for seed in range(10):
        fine = sample_fbm_circulant(1600, H, 1.0, mix_seed(7, seed))
        ref = reference_solve(PAPER, XI, fine, build_grid(TAU, 10, 1.0), 16)
        e10 = sup_error(euler_solve(PAPER, XI, subsample(fine, 16), build_grid(TAU, 10, 1.0)), ref)
        e5 = sup_error(euler_solve(PAPER, XI, subsample(fine, 32), build_grid(TAU, 5, 1.0)), ref)
        assert 0 < e10 < e5


# -- remainder fields ------------------------------------------------------


def test_scheme_remainder_definition():
    res = solve(n=10, T=0.5, seed=5)
    R = scheme_remainder(res)
    X, B, f = res.X, res.B, res.trace
    for i in range(0, 51, 7):
        for j in range(i, 51, 5):
            assert R.values[i, j] == pytest.approx((X[j] - X[i]) - f[i] * (B[j] - B[i]), abs=1e-15)
    scale = np.max(np.abs(X)) + np.max(np.abs(f)) * np.max(np.abs(B))
    i = np.arange(50)
    assert np.max(np.abs(R.values[i, i + 1])) <= 1e-14 * scale
    assert np.all(np.diag(R.values) == 0)
    assert R.exponent == pytest.approx(1.4)


def test_constant_coefficient_remainders_vanish():
    res = solve(coeff=ConstantCoefficient(0.8), n=10, seed=1)
    scale = np.max(np.abs(res.X)) + 0.8 * np.max(np.abs(res.B))
    assert np.max(np.abs(scheme_remainder(res).values)) <= 64 * EPS * scale
    assert np.max(np.abs(solution_remainder(res).values)) <= 64 * EPS * scale
    assert chaining_identity_check(res) <= 64 * EPS * scale


def test_remainder_norm_streaming_matches_dense():
    res = solve(n=20, seed=6)
    mu = 2 * res.lam
    R = scheme_remainder(res)
    assert remainder_norm(res, mu) == pytest.approx(two_param_norm(R, mu), rel=1e-14)
    assert two_param_norm(R, mu) == pytest.approx(two_param_brute(R.values, R.times, mu), rel=1e-12)


def test_solution_remainder_on_reference_nodes():
    spec = build_grid(TAU, 10, 1.0)
    fine = sample_fbm_circulant(800, H, 1.0, 2)
    ref = reference_solve(PAPER, XI, fine, spec, 8)
    RX = solution_remainder(ref)
    assert RX.size == 101
    assert np.allclose(RX.times, spec.forward_times)
    assert np.all(np.diag(RX.values) == 0)
    assert remainder_norm(ref, 1.4, stride=8) == pytest.approx(two_param_norm(RX, 1.4), rel=1e-14)


def test_materialization_limit():
    spec = build_grid(TAU, MATERIALIZE_LIMIT // 10 + 1, 1.0)
    res = euler_solve(ConstantCoefficient(1.0), XI, sample_fbm_circulant(spec.n_forward, H, 1.0, 0), spec)
    with pytest.raises(ValueError):
        scheme_remainder(res)
    assert solution_remainder(res, stride=2).size == spec.n_forward // 2 + 1


@pytest.mark.parametrize("seed", range(10))
def test_sewing_on_scheme_remainder(seed):
    res = solve(n=40, seed=seed)
    assert sewing_check(scheme_remainder(res), 2 * res.lam).passed


# -- chaining --------------------------------------------------------------


def test_chaining_all_triples():
    res = solve(n=10, seed=8)
    assert chaining_identity_check(res) <= 1e-12 * chaining_scale(res)


def test_chaining_degenerate_triples():
    res = solve(n=10, seed=8)
    idx = np.arange(0, 90, 3)
    later = idx + 7
    d = _chain_defect(res.X, res.B, res.trace, idx, idx.copy(), later)
    assert d == 0.0


def test_chaining_random_triples_paper_example():
    res = solve(n=200, seed=11)
    defect = chaining_identity_check(res, n_triples=10_000, seed=3)
    assert defect <= 1e-12 * np.max(np.abs(res.X))
    assert defect <= 1e-12 * chaining_scale(res)


# -- Hölder stability ------------------------------------------------------


def test_holder_seminorm_stable_across_resolutions():
    ratios = []
    for seed in range(20):
        fine = sample_fbm_circulant(2000, H, 1.0, mix_seed(3, seed))
        norms = []
        for n in (50, 100, 200):
            spec = build_grid(TAU, n, 1.0)
            res = euler_solve(PAPER, XI, subsample(fine, 200 // n), spec)
            norms.append(holder_seminorm(res.X, res.lam, spec.forward_times))
        assert all(np.isfinite(norms))
        ratios.append(max(norms) / min(norms))
    assert np.median(ratios) <= 2.0
