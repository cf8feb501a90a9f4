import math

import numpy as np
import pytest

from lagoon_orbits.errors import (
    ContinuationStallError,
    LeftRegionError,
    NoConvergenceError,
    NumericalError,
    SingularJacobianError,
)
from lagoon_orbits.guards import GuardConstants, build_rect
from lagoon_orbits.model import ModelParams, PerturbedField, interior_equilibrium
from lagoon_orbits.ode import IntegratorOptions, integrate, poincare_with_jacobian
from lagoon_orbits.periodic import (
    ShootingOptions,
    comparison_check,
    comparison_solution,
    continuation_path,
    corollary_exponent,
    default_schedule,
    eta_margins,
    shoot,
    verify_bounds,
)

# oracle: scipy DOP853 (rtol 1e-13) return map + fsolve in natural coordinates
ORBIT_03 = np.array([1939.8350872516937, 1.495508308375548])
ORBIT_0 = np.array([298.27748541078984, 55.74690550217609])


def test_shoot_headline_orbit(orbit_03, corollary):
    rect = build_rect(0.3, corollary)
    assert rect.contains(orbit_03.x0)
    assert orbit_03.residual < 1e-10
    np.testing.assert_allclose(orbit_03.x0, ORBIT_03, rtol=1e-9)
    assert np.all(orbit_03.min_components > 0)


def test_shoot_idempotent(orbit_03, corollary):
    again = shoot(orbit_03.x0, 0.3, corollary)
    assert again.iterations == 0
    np.testing.assert_allclose(again.x0, orbit_03.x0, rtol=1e-12)


def test_shoot_finds_equilibrium_when_unforced():
    p = ModelParams.preset(N=0.0)
    eq = interior_equilibrium(p)
    orbit = shoot(eq * np.array([1.05, 0.97]), 0.0, p)
    np.testing.assert_allclose(orbit.x0, eq, rtol=1e-9)
    # constant orbit
    assert np.ptp(orbit.trajectory.x, axis=0).max() < 1e-6 * eq.max()


def test_monodromy_and_multipliers(orbit_03, corollary):
    M = orbit_03.monodromy
    np.testing.assert_allclose(np.sort_complex(orbit_03.multipliers), np.sort_complex(np.linalg.eigvals(M)))
    assert np.prod(orbit_03.multipliers).real == pytest.approx(np.linalg.det(M), rel=1e-10)
    # Liouville along a tightly integrated copy of the orbit
    f = PerturbedField(corollary, 0.3)
    _, D, traj = poincare_with_jacobian(orbit_03.x0, f, IntegratorOptions(rtol=1e-12, atol=1e-12), record=True)
    trace = traj.quad(lambda t, x: f.divergence(t, x), 0.0, 12.0)
    assert abs(np.linalg.det(D) / math.exp(trace) - 1) < 1e-6
    np.testing.assert_allclose(D, M, rtol=1e-5, atol=1e-12)


def test_shoot_errors(corollary):
    with pytest.raises(LeftRegionError):
        shoot([-1.0, 2.0], 0.3, corollary)
    with pytest.raises(NoConvergenceError):
        shoot([1000.0, 1.0], 0.3, corollary, ShootingOptions(max_iter=1))
    with pytest.raises(SingularJacobianError):
        shoot([1000.0, 1.0], 0.3, corollary, ShootingOptions(cond_max=1.0))


def test_default_schedule():
    s = default_schedule()
    assert s[0] == 0.3 and s[-1] == 0.0
    assert s[-2] >= 1e-6 * (1 - 1e-12) and s[-2] / 2 < 1e-6
    assert all(b == pytest.approx(a / 2) for a, b in zip(s[:-2], s[1:-1]))


def test_continuation_reaches_original_system(orbit_path):
    final = orbit_path[-1]
    assert final.eps == 0.0
    assert final.residual < 1e-9
    np.testing.assert_allclose(final.x0, ORBIT_0, rtol=1e-9)
    assert final.periodicity_error() < 1e-8
    for stage in orbit_path:
        assert np.all(stage.min_components > 0)
    eps = [s.eps for s in orbit_path]
    assert all(b < a for a, b in zip(eps, eps[1:]))
    assert set(default_schedule()) <= set(eps)


def test_continuation_x1_margin(orbit_path):
    # hypothesis u_N1 > r1 keeps x1 away from the axis; the margin exceeds eta = 1e-3
    assert orbit_path[-1].min_components[0] > 100.0


def test_continuation_unforced_stays_at_equilibria():
    p = ModelParams.preset(N=0.0)
    start = shoot(build_rect(0.3, p).center, 0.3, p)
    stages = continuation_path(start, [0.3, 0.1, 0.03, 0.01, 0.003, 0.0], p)
    for stage in stages:
        x = stage.trajectory.x
        assert np.ptp(x, axis=0).max() < 1e-6 * x.max()
    np.testing.assert_allclose(stages[-1].x0, interior_equilibrium(p), rtol=1e-8)


def test_continuation_stall_identifies_eps(orbit_03, corollary):
    with pytest.raises(ContinuationStallError) as info:
        continuation_path(orbit_03, [0.3, 0.0], corollary, ShootingOptions(max_iter=5), max_subdivisions=0)
    assert info.value.eps == 0.0 and info.value.last_eps == 0.3


def test_newton_step_trust_radius(orbit_03, corollary):
    # without the cap the second trial lands at x2 ~ 1e10, where x1 decays at
    # rate ~1e8 and the explicit integrator exhausts its step budget
    opts = ShootingOptions(max_iter=3, integrator=IntegratorOptions(max_steps=20000))
    with pytest.raises(NoConvergenceError):
        shoot(orbit_03.x0, 0.0, corollary, opts)


def test_schedule_validation(orbit_03, corollary):
    with pytest.raises(ValueError):
        continuation_path(orbit_03, [0.3, 0.2, 0.25], corollary)
    with pytest.raises(ValueError):
        continuation_path(orbit_03, [0.5, 0.1], corollary)


def test_corollary_exponent_value(corollary):
    assert corollary_exponent(corollary) == pytest.approx(534060 * 0.4 / (100 + 2580) + 69.6, rel=1e-15)


def test_bounds_at_zero(orbit_path, corollary):
    report = verify_bounds(orbit_path[-1], corollary, eta=1e-3)
    assert report.satisfied
    assert report.upper_bound_x1 == pytest.approx(2580.001, rel=1e-15)
    assert report.x1_range[1] <= 2580.001
    c = GuardConstants.from_params(corollary)
    printed = max(1.0, c.r_N2) * math.exp(12 * 6.9 * 2580 / 2680 + 12 * 5.8) + 1e-3
    assert report.upper_bound_x2 == pytest.approx(printed, rel=1e-12)
    assert report.corollary_upper_bound_x2 == pytest.approx(printed, rel=1e-12)
    assert report.exponent == pytest.approx(report.corollary_exponent, rel=1e-14)
    assert report.tight_upper_bound_x2 < report.upper_bound_x2
    assert report.x2_range[1] <= report.tight_upper_bound_x2


def test_bounds_for_equilibrium_with_zero_eta():
    p = ModelParams.preset(N=0.0)
    orbit = shoot(interior_equilibrium(p), 0.0, p)
    report = verify_bounds(orbit, p, eta=0.0)
    assert report.satisfied


def test_bounds_detect_violation(orbit_path, corollary):
    # eta above the orbit's minimum breaks the lower bound
    report = verify_bounds(orbit_path[-1], corollary, eta=1e3)
    assert not report.satisfied


def constant_trajectory(c, x2=1.0):
    return integrate(lambda t, x: np.zeros(2), [c, x2], 0.0, 12.0)


@pytest.mark.parametrize("tau", [-12.0, -7.5, -0.3, 0.0])
def test_comparison_closed_form(tau, corollary):
    c = 800.0
    traj = constant_trajectory(c)
    rate = 6.9 * c / (100 + c) - 5.8
    assert comparison_solution(traj, tau, 2.0, corollary) == pytest.approx(2.0 * math.exp(-rate * tau), rel=1e-12)


def test_comparison_monotone_in_initial_value(orbit_03, corollary):
    vals = [comparison_solution(orbit_03.trajectory, -6.0, y, corollary) for y in (0.5, 1.0, 2.0, 4.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_comparison_errors(corollary):
    short = integrate(lambda t, x: np.zeros(2), [500.0, 1.0], 0.0, 6.0)
    with pytest.raises(NumericalError):
        comparison_solution(short, -3.0, 1.0, corollary)
    with pytest.raises(ValueError):
        comparison_solution(constant_trajectory(500.0), -13.0, 1.0, corollary)


def test_comparison_dominates_orbit(orbit_03, orbit_path, corollary):
    for orbit in (orbit_03, orbit_path[-1]):
        check = comparison_check(orbit, corollary)
        assert check.dominated
        assert check.x2_0 <= check.y_0 * (1 + 1e-6)


def test_orbit_serialization(orbit_03):
    d = orbit_03.as_dict()
    assert d["eps"] == 0.3 and len(d["multipliers"]) == 2
    assert d["min_components"][0] > 0


def test_tighter_recheck(orbit_03):
    assert orbit_03.periodicity_error(IntegratorOptions(rtol=1e-12, atol=1e-12)) < 1e-8


def test_eta_margins_over_forcing_grid(config_orbits):
    from conftest import CONFIG_N

    orbits = {N: config_orbits[N, 0.01] for N in CONFIG_N}
    m = eta_margins(orbits)
    assert list(m["per_N"]) == list(CONFIG_N)
    assert m["min"] == min(m["per_N"].values()) > 1e-3
    with pytest.raises(ValueError):
        eta_margins({})
