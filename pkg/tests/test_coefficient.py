import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from oracles import paper_functional
from sfde_euler.coefficient import (
    ConstantCoefficient,
    IntegralFunctional,
    Measure,
    OuterFunction,
    PointDelay,
    declared_constants,
    eval_coefficient,
    four_point_probe,
    lipschitz_probe,
    paper_coefficient,
)
from sfde_euler.errors import AlignmentError
from sfde_euler.fbm import mix_seed, sample_fbm_circulant
from sfde_euler.path import GridPath, InitialCondition, build_grid, segment_at

TAU, N = 0.1, 50


def make_segment(values, tau=TAU):
    values = np.asarray(values, dtype=float)
    n = len(values) - 1
    spec = build_grid(tau, n, tau)
    return segment_at(GridPath(spec, np.concatenate([values, np.zeros(n)])), 0)


def holder_segment(seed, n=N, tau=TAU):
    """A random Hölder segment: affine trend plus a scaled fBm path."""
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(0, 3, size=3)
    theta = np.arange(-n, 1) * (tau / n)
    noise = sample_fbm_circulant(n, 0.75, tau, mix_seed(seed, 0)).values
    return make_segment(a + b * theta / tau + c * noise / tau**0.75, tau)


def closed_form_paper_value(tau=TAU):
    inner = tau**3 / 3 + 2 * tau
    return inner + math.sin(inner)


# -- evaluation ------------------------------------------------------------


def test_paper_coefficient_zero_segment():
    assert eval_coefficient(paper_coefficient(TAU), make_segment(np.zeros(N + 1))) == 0.0


def test_paper_coefficient_on_initial_condition():
    spec = build_grid(TAU, N, 1.0)
    xi = InitialCondition.polynomial(2.0, 0.0, 1.0)
    seg = segment_at(GridPath.from_initial(spec, xi), 0)
    val = eval_coefficient(paper_coefficient(TAU), seg)
    assert abs(val - closed_form_paper_value()) <= 1e-5
    # the quoted figure 0.399327 is a rounding of 0.3993293...
    assert closed_form_paper_value() == pytest.approx(0.39932934194444, abs=1e-13)
    assert abs(val - 0.399327) <= 1e-5
    assert val == pytest.approx(paper_functional(seg.values, TAU / N), rel=1e-13)


def test_point_delay_constant_segment():
    f = PointDelay(OuterFunction("identity"), TAU)
    assert eval_coefficient(f, make_segment(np.ones(N + 1))) == 1.0


def test_point_delay_reads_oldest_value():
    f = PointDelay(OuterFunction("affine", (2.0, 1.0)), TAU)
    vals = np.linspace(5.0, -1.0, N + 1)
    assert eval_coefficient(f, make_segment(vals)) == 11.0


def test_constant_coefficient():
    assert ConstantCoefficient(-1.5)(holder_segment(1)) == -1.5


@given(st.integers(0, 10**6), st.integers(1, 80))
def test_integral_matches_trapezoid_oracle(seed, n):
    seg = holder_segment(seed, n=n)
    f = paper_coefficient(TAU)
    assert f(seg) == pytest.approx(paper_functional(seg.values, TAU / n), rel=1e-12, abs=1e-12)
    assert f.inner(seg) == pytest.approx(trapezoid(seg.values, dx=TAU / n), rel=1e-12, abs=1e-12)


def test_tabulated_density_matches_trapezoid():
    dens = (1.0, -2.0, 0.5)
    f = IntegralFunctional(OuterFunction("identity"), Measure(TAU, dens))
    seg = holder_segment(3, n=40)
    theta = seg.offsets
    d = np.interp(theta, np.linspace(-TAU, 0, 3), dens)
    assert f(seg) == pytest.approx(trapezoid(d * seg.values, dx=TAU / 40), rel=1e-12)


def test_atoms_add_point_masses():
    m = Measure(TAU, None, ((-0.05, 2.0), (0.0, -1.0)))
    f = IntegralFunctional(OuterFunction("identity"), m)
    vals = np.arange(11.0)
    assert f(make_segment(vals)) == pytest.approx(2.0 * 5 - 1.0 * 10)


def test_tau_mismatch():
    with pytest.raises(AlignmentError):
        paper_coefficient(0.2)(make_segment(np.zeros(5)))
    with pytest.raises(AlignmentError):
        PointDelay(OuterFunction("identity"), 0.2)(make_segment(np.zeros(5)))


# -- measures --------------------------------------------------------------


def test_lebesgue_weights():
    w = Measure.lebesgue(TAU).weights(N)
    assert len(w) == N + 1
    assert w[0] == w[-1] == pytest.approx(0.5 * TAU / N)
    assert w.sum() == pytest.approx(TAU, rel=1e-14)
    assert Measure.lebesgue(TAU).total_variation() == TAU
    assert Measure.lebesgue(TAU).total_variation(N) == pytest.approx(TAU, rel=1e-14)


def test_signed_measure_total_variation():
    m = Measure(TAU, -2.0, ((-0.1, 0.5), (-0.04, -0.25)))
    assert m.total_variation() == pytest.approx(0.2 + 0.75)
    # on the grid the endpoint atom partly cancels the half-weight density:
    # |0.5 - 0.002| + 48 * 0.004 + |-0.004 - 0.25| + 0.002
    assert m.total_variation(50) == pytest.approx(0.946, rel=1e-12)


def test_off_grid_atom():
    with pytest.raises(AlignmentError):
        Measure(TAU, None, ((-0.033, 1.0),)).weights(10)


def test_atom_outside_window():
    with pytest.raises(ValueError):
        Measure(TAU, None, ((0.05, 1.0),))


def test_measure_lists_normalized():
    m = Measure(TAU, [1.0, 2.0], [[-0.1, 1.0]])
    assert m.density == (1.0, 2.0) and m.atoms == ((-0.1, 1.0),)
    assert hash(m) == hash(Measure(TAU, (1.0, 2.0), ((-0.1, 1.0),)))


# -- outer functions -------------------------------------------------------

outers = st.sampled_from(
    [
        OuterFunction("identity"),
        OuterFunction("affine", (-2.5, 0.3)),
        OuterFunction("sin_shift"),
        OuterFunction("tanh"),
    ]
)


@given(outers, st.floats(-20, 20))
def test_outer_derivative_and_bounds(sigma, x):
    h = 1e-6
    fd = (sigma(x + h) - sigma(x - h)) / (2 * h)
    assert sigma.derivative(x) == pytest.approx(fd, abs=1e-6)
    assert abs(sigma.derivative(x)) <= sigma.lipschitz + 1e-15
    d2 = (sigma.derivative(x + h) - sigma.derivative(x - h)) / (2 * h)
    assert abs(d2) <= sigma.curvature + 1e-6


def test_tanh_curvature_is_tight():
    x = np.linspace(-3, 3, 200_001)
    t = np.tanh(x)
    assert np.max(np.abs(-2 * t * (1 - t**2))) == pytest.approx(OuterFunction("tanh").curvature, rel=1e-9)


def test_declared_lipschitz_values():
    assert OuterFunction("sin_shift").lipschitz == 2.0
    assert OuterFunction("identity").lipschitz == 1.0
    assert OuterFunction("sin_shift").lipschitz_on(0.19, 0.22) == pytest.approx(1 + math.cos(0.19))


def test_custom_table():
    sigma = OuterFunction.table([0.0, 1.0, 3.0], [0.0, 2.0, 1.0])
    assert sigma(0.5) == 1.0 and sigma(5.0) == 1.0
    assert sigma.lipschitz == 2.0
    assert sigma.derivative(2.0) == -0.5
    assert sigma.curvature is None
    with pytest.raises(ValueError):
        OuterFunction.table([0.0, 0.0], [1.0, 2.0])


def test_unknown_outer():
    with pytest.raises(ValueError):
        OuterFunction("relu")
    with pytest.raises(ValueError):
        OuterFunction("affine", (1.0,))


# -- declared constants ----------------------------------------------------


def test_declared_constants_examples():
    assert declared_constants(ConstantCoefficient(-3.0)) == (0.0, 3.0, 0.0)
    c = declared_constants(paper_coefficient(0.1))
    assert c.M1 == pytest.approx(0.2) and c.M2 == pytest.approx(0.2) and c.C == pytest.approx(0.01)
    c = declared_constants(PointDelay(OuterFunction("identity"), 0.1))
    assert (c.M1, c.M2, c.C) == (1.0, 1.0, 0.0)


def test_declared_constants_unknown_curvature():
    f = IntegralFunctional(OuterFunction.table([0, 1], [0, 1]), Measure.lebesgue(TAU))
    assert declared_constants(f).C is None
    seg = holder_segment(0)
    assert four_point_probe(f, seg, seg, seg, seg)[1] is None


# -- probes ----------------------------------------------------------------


def test_lipschitz_probe_constant_and_identical():
    a, b = holder_segment(1), holder_segment(2)
    assert lipschitz_probe(ConstantCoefficient(4.0), a, b) == 0.0
    assert lipschitz_probe(paper_coefficient(TAU), a, a) == 0.0


def test_lipschitz_probe_random_pairs():
    ident = IntegralFunctional(OuterFunction("identity"), Measure.lebesgue(TAU))
    paper = paper_coefficient(TAU)
    m1 = declared_constants(paper, N).M1
    for r in range(1000):
        a, b = holder_segment(2 * r), holder_segment(2 * r + 1)
        assert lipschitz_probe(ident, a, b) <= TAU * (1 + 1e-12)
        assert lipschitz_probe(paper, a, b) <= m1 * (1 + 1e-12)


def test_four_point_cancellation():
    a, b = holder_segment(5), holder_segment(6)
    lhs, rhs = four_point_probe(paper_coefficient(TAU), a, b, a, b)
    assert lhs == 0.0 and rhs >= 0.0


def test_four_point_linear_case():
    f = IntegralFunctional(OuterFunction("identity"), Measure.lebesgue(TAU))
    assert declared_constants(f).C == 0.0
    for r in range(200):
        s = [holder_segment(4 * r + i) for i in range(4)]
        lhs, rhs = four_point_probe(f, *s)
        d = s[0].values - s[1].values - s[2].values + s[3].values
        assert lhs == pytest.approx(abs(trapezoid(d, dx=TAU / N)), rel=1e-9, abs=1e-13)
        assert rhs == pytest.approx(TAU * np.max(np.abs(d)), rel=1e-12)
        assert lhs <= rhs * (1 + 1e-12)


def test_four_point_paper_quadruples():
    f = paper_coefficient(TAU)
    for r in range(1000):
        s = [holder_segment(4 * r + i) for i in range(4)]
        lhs, rhs = four_point_probe(f, *s)
        assert lhs <= rhs * (1 + 1e-12) + 1e-15


# -- invariants ------------------------------------------------------------

coefficients = st.sampled_from(
    [
        paper_coefficient(TAU),
        IntegralFunctional(OuterFunction("tanh"), Measure(TAU, -3.0, ((-0.05, 0.4),))),
        IntegralFunctional(OuterFunction("affine", (1.5, -2.0)), Measure.lebesgue(TAU)),
        PointDelay(OuterFunction("sin_shift"), TAU),
        ConstantCoefficient(0.7),
    ]
)


@given(coefficients, st.integers(0, 10**6))
def test_linear_growth_bound(f, seed):
    seg = holder_segment(seed, n=20)
    m2 = declared_constants(f, 20).M2
    assert abs(f(seg)) <= m2 * (1 + np.max(np.abs(seg.values))) * (1 + 1e-12)


@given(st.integers(0, 10**6), st.floats(-5, 5), st.floats(-5, 5))
def test_identity_functional_is_linear(seed, a, b):
    f = IntegralFunctional(OuterFunction("identity"), Measure.lebesgue(TAU))
    s1, s2 = holder_segment(seed), holder_segment(seed + 1)
    mixed = make_segment(a * s1.values + b * s2.values)
    expect = a * f(s1) + b * f(s2)
    scale = abs(a * f(s1)) + abs(b * f(s2)) + 1e-300
    assert abs(f(mixed) - expect) <= 1e-12 * scale


@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(1, 200))
def test_trapezoid_exact_for_affine_segments(c0, c1, n):
    f = IntegralFunctional(OuterFunction("identity"), Measure.lebesgue(TAU))
    theta = np.arange(-n, 1) * (TAU / n)
    exact = c0 * TAU - c1 * TAU**2 / 2
    assert f(make_segment(c0 + c1 * theta)) == pytest.approx(exact, abs=1e-13 * (abs(c0) + abs(c1) + 1))


@given(st.integers(0, 10**6), st.floats(-100, 100))
def test_shift_changes_value_by_c_tau(seed, c):
    f = IntegralFunctional(OuterFunction("identity"), Measure.lebesgue(TAU))
    seg = holder_segment(seed)
    shifted = make_segment(seg.values + c)
    scale = abs(c) * TAU + abs(f(seg)) + np.max(np.abs(seg.values)) * TAU
    assert abs(f(shifted) - f(seg) - c * TAU) <= 1e-13 * scale


def test_to_dict_shapes():
    assert paper_coefficient(0.1).to_dict() == {
        "kind": "integral_functional",
        "outer": {"name": "sin_shift", "params": []},
        "measure": {"tau": 0.1, "density": 1.0, "atoms": []},
    }
    assert PointDelay(OuterFunction("identity"), 0.1).to_dict()["kind"] == "point_delay"
    assert ConstantCoefficient(2).to_dict() == {"kind": "constant", "c": 2.0}
