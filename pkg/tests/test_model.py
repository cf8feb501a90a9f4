import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagoon_orbits.errors import DomainError, ParameterError
from lagoon_orbits.guards import g_curve
from lagoon_orbits.model import (
    PRESETS,
    ModelParams,
    PerturbedField,
    forcing_value,
    frozen_field,
    interior_equilibrium,
    load_params,
    params_from_mapping,
    rhs,
)

times = st.floats(-100, 100, allow_nan=False)
x1s = st.floats(0, 5000, allow_nan=False)
x2s = st.floats(0, 500, allow_nan=False)


def test_preset_values(corollary):
    assert (corollary.lambda1, corollary.lambda2, corollary.lambda3) == (1.29, 0.0002, 0.93)
    assert (corollary.lambda4, corollary.lambda5, corollary.k) == (6.9, 5.8, 100.0)


@pytest.mark.parametrize("override", [
    dict(lambda1=0.0), dict(lambda3=-1.0), dict(k=0.0), dict(M=0.0), dict(N=-0.1),
    dict(lambda4=5.8), dict(lambda4=5.0), dict(N=0.4), dict(lambda2=math.nan), dict(M=math.inf),
])
def test_invalid_params_rejected(override):
    with pytest.raises(ParameterError):
        ModelParams.preset(**override)


def test_unknown_preset():
    with pytest.raises(ParameterError):
        ModelParams.preset("nope")


def test_load_params_from_file(tmp_path):
    path = tmp_path / "p.ini"
    path.write_text("[params]\npreset = corollary\nM = 0.25\nN = 0.05\n")
    p = load_params(path)
    assert (p.M, p.N, p.lambda1) == (0.25, 0.05, 1.29)
    full = tmp_path / "full.ini"
    full.write_text("[params]\n" + "\n".join(f"{k} = {v}" for k, v in PRESETS["corollary"].items()))
    assert load_params(full) == ModelParams.preset()


@pytest.mark.parametrize("raw", [
    {"preset": "corollary", "M": "abc"},
    {"preset": "corollary", "bogus": "1"},
    {"lambda1": "1.0"},
    {"preset": "missing"},
])
def test_bad_mappings(raw):
    with pytest.raises(ParameterError):
        params_from_mapping(raw)


def test_load_params_missing_file(tmp_path):
    with pytest.raises(ParameterError):
        load_params(tmp_path / "absent.ini")


@given(times)
def test_forcing_constant_without_amplitude(t):
    assert forcing_value(t, ModelParams.preset(N=0.0)) == 0.3


@given(times)
def test_forcing_periodic_and_in_range(t):
    p = ModelParams.preset()
    s = forcing_value(t, p)
    assert abs(s - forcing_value(t + 12.0, p)) < 1e-15
    assert p.M - p.N - 1e-15 <= s <= p.M + p.N + 1e-15


def test_forcing_extremes():
    p = ModelParams.preset()
    s = forcing_value(np.linspace(0, 12, 120001), p)
    assert s.max() == pytest.approx(p.M + p.N, abs=1e-10)
    assert s.min() == pytest.approx(p.M - p.N, abs=1e-10)


@given(times, x2s)
def test_unperturbed_axes_invariant(t, x2):
    f = PerturbedField(ModelParams.preset(), 0.0)
    assert f.P(t, 0.0, x2) == 0.0
    assert rhs(t, np.array([x2, 0.0]), f)[1] == 0.0


@given(times, x2s, st.floats(1e-6, 2.0))
def test_perturbed_inflow_on_x2_axis(t, x2, eps):
    assert PerturbedField(ModelParams.preset(), eps).rhs(t, np.array([0.0, x2]))[0] == pytest.approx(eps, abs=0)


@settings(max_examples=50)
@given(times, x1s, x2s, st.floats(0, 1))
def test_rhs_periodic_and_q_autonomous(t, x1, x2, eps):
    f = PerturbedField(ModelParams.preset(), eps)
    x = np.array([x1, x2])
    np.testing.assert_array_equal(f.rhs(t, x)[1], f.rhs(t + 7.3, x)[1])
    np.testing.assert_allclose(f.rhs(t, x), f.rhs(t + 12.0, x), rtol=1e-13, atol=1e-9)


def test_rhs_formula_point():
    p = ModelParams.preset()
    f = PerturbedField(p, 0.3)
    t, x1, x2 = 2.0, 700.0, 3.0
    s = 0.3 + 0.1 * math.sin(2 * math.pi * t / 12 + 1)
    P = 1.29 * s * x1 - 0.0002 * x1 ** 2 - 0.93 * x2 * x1 / (100 + x1) + 0.3
    Q = 6.9 * x2 * x1 / (100 + x1) - 5.8 * x2 * x2 ** 0.3
    np.testing.assert_allclose(f.rhs(t, [x1, x2]), [P, Q], rtol=1e-14)


def test_zero_power_conventions():
    p = ModelParams.preset()
    # eps = 0: x2^0 = 1 even at x2 = 0; eps > 0: 0^eps = 0
    assert PerturbedField(p, 0.0).Q(10.0, 0.0) == 0.0
    assert PerturbedField(p, 0.2).Q(10.0, 0.0) == 0.0
    assert PerturbedField(p, 0.0).jacobian(0.0, [10.0, 0.0])[1, 1] == pytest.approx(6.9 * 10 / 110 - 5.8)


def test_domain_errors():
    f = PerturbedField(ModelParams.preset(), 0.1)
    with pytest.raises(DomainError):
        f.rhs(0.0, [-1.0, 1.0])
    with pytest.raises(DomainError):
        f.rhs(0.0, [1.0, -1e-3])
    with pytest.raises(ParameterError):
        PerturbedField(ModelParams.preset(), -0.1)


def test_frozen_is_rhs_at_zero():
    f = PerturbedField(ModelParams.preset(), 0.3)
    x = np.array([[100.0, 2.0], [1500.0, 0.5]])
    np.testing.assert_array_equal(frozen_field(x, f), rhs(0.0, x, f))


@pytest.mark.parametrize("x1", [600.0, 1000.0, 2000.0])
def test_q_vanishes_on_g_curve(x1):
    p = ModelParams.preset()
    eps = 0.3
    x2 = g_curve(x1, eps, p)
    # Q = 0 iff x2^eps = (lam4/lam5) x1/(k+x1)
    assert abs(PerturbedField(p, eps).Q(x1, x2)) < 1e-12 * x2 * 6.9


def test_jacobian_matches_finite_differences():
    f = PerturbedField(ModelParams.preset(), 0.3)
    x = np.array([800.0, 2.5])
    J = f.jacobian(1.7, x)
    h = 1e-6 * np.abs(x)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h[j]
        col = (f.rhs(1.7, x + e) - f.rhs(1.7, x - e)) / (2 * h[j])
        np.testing.assert_allclose(J[:, j], col, rtol=1e-6, atol=1e-9)


def test_log_chart_consistency():
    field = PerturbedField(ModelParams.preset(), 0.05)
    chart = field.log_chart()
    x = np.array([900.0, 4.0])
    z = chart.to_chart(x)
    v, w = field.rhs(3.0, x), chart.rhs(3.0, z)
    np.testing.assert_allclose(w, [v[0], v[1] / x[1]], rtol=1e-13)
    np.testing.assert_allclose(chart.from_chart(z), x, rtol=1e-15)
    # chart Jacobian = diag(1, 1/x2) J diag(1, x2) + d(1/x2)/dy term
    J = field.jacobian(3.0, x)
    Jc = chart.jacobian(3.0, z)
    expect = np.array([[J[0, 0], J[0, 1] * x[1]], [J[1, 0] / x[1], J[1, 1] - v[1] / x[1]]])
    np.testing.assert_allclose(Jc, expect, rtol=1e-12, atol=1e-14)


def test_interior_equilibrium_matches_independent_oracle():
    # oracle: scipy fsolve on the full two-dimensional system P = Q = 0
    eq = interior_equilibrium(ModelParams.preset(N=0.0))
    np.testing.assert_allclose(eq, [527.2727272727273, 189.8986936816849], rtol=1e-12)
    f = PerturbedField(ModelParams.preset(N=0.0), 0.0)
    assert np.abs(f.rhs(0.0, eq)).max() < 1e-10


def test_interior_equilibrium_needs_autonomous():
    with pytest.raises(ParameterError):
        interior_equilibrium(ModelParams.preset())
