import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from lagoon_orbits.errors import LeftDomainError, ParameterError, StepUnderflowError
from lagoon_orbits.model import ModelParams, PerturbedField, interior_equilibrium
from lagoon_orbits.ode import (
    IntegratorOptions,
    LinearSystem,
    integrate,
    poincare,
    poincare_jacobian,
    poincare_with_jacobian,
    return_map_chart,
)


def rk4_error(h):
    opts = IntegratorOptions(method="fixed-RK4", max_step=h)
    return abs(integrate(lambda t, x: x, [1.0], 0.0, 1.0, opts).final[0] - math.e)


def observed_rk4_orders():
    hs = 0.1 * 0.5 ** np.arange(5)
    errs = np.array([rk4_error(h) for h in hs])
    return np.log2(errs[:-1] / errs[1:])


def test_rk4_order():
    orders = observed_rk4_orders()
    assert np.all(np.abs(orders - 4.0) < 0.2), orders


def test_adaptive_growth():
    rtol = 1e-9
    x = integrate(lambda t, x: x, [1.0], 0.0, 1.0, IntegratorOptions(rtol=rtol)).final[0]
    assert abs(x - math.e) < 10 * rtol * math.e


def test_adaptive_decay_over_period():
    rtol = 1e-9
    traj = integrate(lambda t, x: -x, [1.0, 2.0], 0.0, 12.0, IntegratorOptions(rtol=rtol))
    np.testing.assert_allclose(traj.final, np.array([1.0, 2.0]) * math.exp(-12), rtol=0, atol=10 * rtol)


def test_trajectory_shape_and_dense_output():
    traj = integrate(lambda t, x: np.array([x[1], -x[0]]), [0.0, 1.0], 0.0, 6.0)
    assert traj.t[0] == 0.0 and traj.t[-1] == 6.0 and np.all(np.diff(traj.t) > 0)
    tt = np.linspace(0, 6, 1001)
    np.testing.assert_allclose(traj(tt)[:, 0], np.sin(tt), atol=1e-6)
    with pytest.raises(ValueError):
        traj(7.0)
    assert traj.quad(lambda t, x: x[:, 0], 0.0, math.pi) == pytest.approx(2.0, rel=1e-7)


def test_trajectory_csv(tmp_path):
    traj = integrate(PerturbedField(ModelParams.preset(), 0.0), [300.0, 50.0], 0.0, 12.0)
    traj.to_csv(tmp_path / "t.csv", n=13)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "t,x1,x2" and len(rows) == 14
    assert float(rows[-1].split(",")[0]) == 12.0


def test_options_validation():
    with pytest.raises(ParameterError):
        IntegratorOptions(rtol=0.0)
    with pytest.raises(ParameterError):
        IntegratorOptions(method="euler")
    with pytest.raises(ParameterError):
        integrate(lambda t, x: x, [1.0], 1.0, 1.0)


def test_axis_invariance_at_zero_eps():
    traj = integrate(PerturbedField(ModelParams.preset(), 0.0), [400.0, 0.0], 0.0, 12.0)
    assert np.all(traj.x[:, 1] == 0.0) and np.all(traj.x[:, 0] > 0)
    traj = integrate(PerturbedField(ModelParams.preset(), 0.0), [0.0, 40.0], 0.0, 12.0)
    assert np.all(traj.x[:, 0] == 0.0)


def test_left_domain_and_underflow():
    f = PerturbedField(ModelParams.preset(), 0.1)
    with pytest.raises(LeftDomainError):
        integrate(f, [-1.0, 1.0], 0.0, 1.0)
    with pytest.raises(LeftDomainError):
        integrate(PerturbedField(ModelParams.preset(), 0.0), [1.0, -1.0], 0.0, 1.0)
    # finite-time blow-up drives the step size to zero
    with pytest.raises(StepUnderflowError):
        integrate(lambda t, x: x * x, [1.0], 0.0, 2.0)


def test_matches_reference_solver():
    # oracle: scipy DOP853 at rtol 1e-13 in natural coordinates
    p = ModelParams.preset()
    f = PerturbedField(p, 0.05)
    x12 = poincare(np.array([1000.0, 50.0]), f)
    np.testing.assert_allclose(x12, [1892.149364350083, 10.230669054532793], rtol=1e-7)


def test_default_tolerance_against_tight_run():
    f = PerturbedField(ModelParams.preset(), 0.0)
    x0 = np.array([298.27748541078984, 55.74690550217609])
    loose = integrate(f, x0, 0.0, 12.0)
    tight = integrate(f, x0, 0.0, 12.0, IntegratorOptions(rtol=1e-12, atol=1e-12))
    # accepted steps carry the solver accuracy; in between, cubic Hermite adds O(h^4)
    assert np.max(np.abs(loose.x - tight(loose.t)) / np.abs(loose.x)) < 1e-7
    ref = solve_ivp(lambda t, x: f.rhs(t, x), (0, 12), x0, method="DOP853", rtol=1e-13, atol=1e-13,
                    t_eval=tight.t).y.T
    assert np.max(np.abs(tight.x - ref) / np.abs(ref)) < 1e-10
    tt = np.linspace(0, 12, 241)
    assert np.max(np.abs(loose(tt) - tight(tt)) / np.abs(tight(tt))) < 1e-6


def test_equilibrium_is_fixed_point():
    p = ModelParams.preset(N=0.0)
    eq = interior_equilibrium(p)
    rtol = 1e-9
    np.testing.assert_allclose(poincare(eq, PerturbedField(p, 0.0), IntegratorOptions(rtol=rtol)), eq,
                               rtol=100 * rtol)


def test_poincare_batch_matches_single():
    f = PerturbedField(ModelParams.preset(), 0.3)
    X = np.array([[1900.0, 1.5], [1000.0, 3.0], [50.0, 0.1]])
    batch = poincare(X, f)
    for row, out in zip(X, batch):
        np.testing.assert_allclose(poincare(row, f), out, rtol=1e-8)


def test_two_periods_compose():
    f = PerturbedField(ModelParams.preset(), 0.05)
    x0 = np.array([900.0, 20.0])
    tight = IntegratorOptions(rtol=1e-11, atol=1e-12)
    twice = poincare(poincare(x0, f, tight), f, tight)
    direct = integrate(f, x0, 0.0, 24.0, tight).final
    np.testing.assert_allclose(twice, direct, rtol=1e-7)
    np.testing.assert_allclose(poincare(x0, f, tight, period=24.0), direct, rtol=1e-7)


def test_poincare_continuity():
    f = PerturbedField(ModelParams.preset(), 0.05)
    x0 = np.array([900.0, 20.0])
    base = poincare(x0, f)
    d = [np.linalg.norm(poincare(x0 * (1 + h), f) - base) for h in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert np.all(np.diff(d) < 0) and d[-1] < 1e-2


def test_linear_jacobian_is_exponential():
    A = np.diag([-0.1, 0.05])
    rtol = 1e-10
    D = poincare_jacobian(np.array([1.0, 1.0]), LinearSystem(A), IntegratorOptions(rtol=rtol))
    np.testing.assert_allclose(D, np.diag(np.exp(12 * np.diag(A))), rtol=100 * rtol)


def central_difference_jacobian(x0, field, opts, rel=1e-5):
    D = np.empty((2, 2))
    for j in range(2):
        h = rel * x0[j]
        e = np.zeros(2)
        e[j] = h
        D[:, j] = (poincare(x0 + e, field, opts) - poincare(x0 - e, field, opts)) / (2 * h)
    return D


@pytest.mark.parametrize("eps,x0", [
    (0.3, [1939.8350872516937, 1.495508308375548]),
    (0.05, [1000.0, 50.0]),
    (0.0, [298.27748541078984, 55.74690550217609]),
])
def test_variational_matches_finite_differences(eps, x0):
    f = PerturbedField(ModelParams.preset(), eps)
    x0 = np.array(x0)
    D = poincare_jacobian(x0, f)
    fd = central_difference_jacobian(x0, f, IntegratorOptions(rtol=1e-13, atol=1e-13))
    assert np.linalg.norm(D - fd) / np.linalg.norm(fd) < 1e-5


@pytest.mark.parametrize("eps", [0.3, 0.05, 0.0])
def test_liouville_identity(eps):
    f = PerturbedField(ModelParams.preset(), eps)
    x0 = np.array([1500.0, 5.0])
    _, D, traj = poincare_with_jacobian(x0, f, record=True)
    trace_integral = traj.quad(lambda t, x: f.divergence(t, x), 0.0, 12.0)
    assert abs(np.linalg.det(D) / math.exp(trace_integral) - 1) < 1e-6


def test_chart_map_handles_subnormal_x2():
    # the lower rectangle edge at eps = 0.01 sits near x2 = exp(-1870)
    f = PerturbedField(ModelParams.preset(), 0.01)
    Z = return_map_chart(np.array([[1000.0, -1870.0]]), f)
    assert np.all(np.isfinite(Z)) and Z[0, 1] > -1870.0
