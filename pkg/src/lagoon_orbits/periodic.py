"""Periodic orbits by Newton shooting, epsilon continuation and bound checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ContinuationStallError,
    LeftDomainError,
    LeftRegionError,
    NoConvergenceError,
    NumericalError,
    SingularJacobianError,
)
from .guards import GuardConstants, find_p, find_q
from .model import PERIOD, PRESETS, LogChartField, ModelParams, PerturbedField
from .ode import IntegratorOptions, Trajectory, poincare_with_jacobian, return_map_chart_with_jacobian

DEFAULT_ETA = 1e-3


@dataclass(frozen=True)
class ShootingOptions:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30
    cond_max: float = 1e12
    # trust radius for the log x2 part of a Newton step; large jumps in x2
    # make the prey equation stiff and stall the explicit integrator
    max_log_step: float = 8.0
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)


@dataclass
class PeriodicOrbit:
    eps: float
    x0: np.ndarray
    residual: float
    trajectory: Trajectory
    monodromy: np.ndarray
    multipliers: np.ndarray
    params: ModelParams
    iterations: int = 0

    @property
    def min_components(self) -> np.ndarray:
        return self.trajectory.x.min(axis=0)

    def periodicity_error(self, opts: IntegratorOptions | None = None) -> float:
        """``|x(12) - x(0)|`` (max norm) from a fresh integration."""
        from .ode import poincare

        opts = opts or IntegratorOptions(rtol=1e-13, atol=1e-13)
        x12 = poincare(self.x0, PerturbedField(self.params, self.eps), opts)
        return float(np.max(np.abs(x12 - self.x0)))

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "x0": self.x0.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "monodromy": self.monodromy.tolist(),
            "multipliers": [[float(m.real), float(m.imag)] for m in self.multipliers],
            "min_components": self.min_components.tolist(),
            "max_components": self.trajectory.x.max(axis=0).tolist(),
            "trajectory_steps": self.trajectory.steps,
        }


def _residual(x, x_next) -> float:
    return float(np.max(np.abs(x - x_next)))


def shoot(x_guess, eps: float, params: ModelParams, opts: ShootingOptions | None = None) -> PeriodicOrbit:
    """Damped Newton iteration on ``x - Omega(x) = 0``.

    Iterates live in the log chart, where ``x2 > 0`` is automatic; the
    convergence test uses the natural-coordinate residual.
    """
    opts = opts or ShootingOptions()
    x_guess = np.asarray(x_guess, dtype=float)
    if not (x_guess[0] > 0 and x_guess[1] > 0):
        raise LeftRegionError("initial guess must lie in the open positive quadrant")
    field_ = PerturbedField(params, eps)
    integ = opts.integrator

    def evaluate(z):
        z1, D = return_map_chart_with_jacobian(z, field_, integ)
        return z1, D, z - z1

    z = LogChartField.to_chart(x_guess)
    z1, D, F = evaluate(z)
    for it in range(opts.max_iter + 1):
        x, x1 = LogChartField.from_chart(z), LogChartField.from_chart(z1)
        if _residual(x, x1) < opts.tol:
            break
        if it == opts.max_iter:
            raise NoConvergenceError(
                f"no convergence after {opts.max_iter} Newton steps at eps={eps:g}; "
                f"residual {_residual(x, x1):.3g}"
            )
        A = np.eye(2) - D
        if np.linalg.cond(A) > opts.cond_max:
            raise SingularJacobianError(f"I - DOmega is singular at eps={eps:g}, x={x.tolist()}")
        dz = np.linalg.solve(A, -F)
        if abs(dz[1]) > opts.max_log_step:
            dz *= opts.max_log_step / abs(dz[1])
        norm0 = np.linalg.norm(F)
        lam = 1.0
        left_region = 0
        for _ in range(opts.max_halvings + 1):
            trial = z + lam * dz
            if trial[0] > 0 and abs(trial[1]) < 700:
                try:
                    t1, tD, tF = evaluate(trial)
                except LeftDomainError:
                    left_region += 1
                else:
                    if np.linalg.norm(tF) < norm0:
                        break
            else:
                left_region += 1
            lam *= 0.5
        else:
            if left_region > opts.max_halvings // 2:
                raise LeftRegionError(f"Newton iterates leave the positive quadrant at eps={eps:g}")
            raise NoConvergenceError(
                f"damped Newton stalled at eps={eps:g}, x={x.tolist()}, residual {_residual(x, x1):.3g}"
            )
        z, z1, D, F = trial, t1, tD, tF

    x0 = LogChartField.from_chart(z)
    x_end, M, traj = poincare_with_jacobian(x0, field_, integ, record=True)
    return PeriodicOrbit(
        eps=eps,
        x0=x0,
        residual=_residual(x0, x_end),
        trajectory=traj,
        monodromy=M,
        multipliers=np.linalg.eigvals(M),
        params=params,
        iterations=it,
    )


def default_schedule(start: float = 0.3, stop: float = 1e-6, ratio: float = 0.5) -> list[float]:
    """Geometric schedule from ``start`` down to ``stop`` followed by 0."""
    out = []
    eps = start
    while eps >= stop * (1 - 1e-12):
        out.append(eps)
        eps *= ratio
    return out + [0.0]


def _intermediate(a: float, b: float) -> float:
    """Point between two schedule entries, geometric when both are positive."""
    if b == 0.0:
        return 0.5 * a
    return math.sqrt(a * b)


def continuation_path(orbit: PeriodicOrbit, schedule, params: ModelParams | None = None,
                      opts: ShootingOptions | None = None, final_opts: ShootingOptions | None = None,
                      max_subdivisions: int = 16, max_jump: tuple[float, float] = (0.5, 1.0)) -> list[PeriodicOrbit]:
    """Follow ``orbit`` along decreasing eps; returns every accepted stage.

    A stage whose Newton solve fails, or whose fixed point moves more than
    ``max_jump`` (relative in x1, absolute in ``log x2``), is split by
    inserting an intermediate eps.  ``final_opts`` is used for the last entry
    of the schedule, typically with tighter tolerances.
    """
    params = params or orbit.params
    opts = opts or ShootingOptions()
    schedule = [float(e) for e in schedule]
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")
    if schedule and math.isclose(schedule[0], orbit.eps, rel_tol=1e-12, abs_tol=0.0):
        schedule = schedule[1:]
    if schedule and schedule[0] > orbit.eps:
        raise ValueError("schedule must start at or below the orbit's eps")
    stages = [orbit]
    for n, target in enumerate(schedule):
        stage_opts = final_opts if (final_opts is not None and n == len(schedule) - 1) else opts
        pending = [target]
        depth = 0
        while pending:
            eps = pending[-1]
            prev = stages[-1]
            guess = prev.x0
            if len(stages) >= 2 and stages[-2].eps > prev.eps > 0 and eps > 0:
                # secant predictor in log eps
                a, b = stages[-2], prev
                w = math.log(eps / b.eps) / math.log(b.eps / a.eps)
                za, zb = LogChartField.to_chart(a.x0), LogChartField.to_chart(b.x0)
                zg = zb + w * (zb - za)
                if zg[0] > 0:
                    guess = LogChartField.from_chart(zg)
            try:
                cand = shoot(guess, eps, params, stage_opts)
                zp, zc = LogChartField.to_chart(prev.x0), LogChartField.to_chart(cand.x0)
                if abs(zc[0] - zp[0]) > max_jump[0] * zp[0] or abs(zc[1] - zp[1]) > max_jump[1]:
                    raise NoConvergenceError("stage jumped too far; refining")
                if np.any(cand.min_components <= 0):
                    raise LeftRegionError(f"orbit at eps={eps:g} touches the boundary of the quadrant")
            except NumericalError as exc:
                depth += 1
                if depth > max_subdivisions:
                    raise ContinuationStallError(
                        f"continuation toward eps={target:g} stalled at eps={eps:.10g} "
                        f"(last converged eps={prev.eps:.10g}): {exc}",
                        eps=eps, last_eps=prev.eps,
                    ) from exc
                pending.append(_intermediate(prev.eps, eps))
                continue
            stages.append(cand)
            pending.pop()
            depth = max(depth - 1, 0)
    return stages


def continue_to_zero(orbit: PeriodicOrbit, schedule=None, params: ModelParams | None = None,
                     opts: ShootingOptions | None = None, final_opts: ShootingOptions | None = None) -> PeriodicOrbit:
    """Continue ``orbit`` to eps = 0 and return the orbit of the original system."""
    schedule = default_schedule(start=orbit.eps) if schedule is None else list(schedule)
    if schedule[-1] != 0.0:
        raise ValueError("schedule must end at eps = 0")
    if final_opts is None:
        base = opts or ShootingOptions()
        final_opts = replace(base, integrator=IntegratorOptions(rtol=1e-12, atol=1e-12,
                                                                max_step=base.integrator.max_step))
    return continuation_path(orbit, schedule, params, opts, final_opts)[-1]


# ---------------------------------------------------------------------------
# a-priori bounds

def _is_corollary(params: ModelParams) -> bool:
    ref = PRESETS["corollary"]
    return all(getattr(params, k) == ref[k] for k in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "k"))


def corollary_exponent(params: ModelParams) -> float:
    """``534060 (M+N) / (100 + 6450 (M+N)) + 69.6``."""
    s = params.M + params.N
    return 534060 * s / (100 + 6450 * s) + 69.6


def corollary_x2_bound(params: ModelParams, eta: float = DEFAULT_ETA) -> float:
    s = params.M + params.N
    return max(1.0, (100 + 580 / 1.1) * (1.29 * s - 0.116 / 1.1)) * math.exp(corollary_exponent(params)) + eta


@dataclass
class BoundReport:
    eta: float
    eps: float
    x1_range: tuple[float, float]
    x2_range: tuple[float, float]
    upper_bound_x1: float
    upper_bound_x2: float
    exponent: float
    x2_factor: float
    tight_upper_bound_x2: float
    x2_factor_lambda3: float
    corollary_exponent: float | None
    corollary_upper_bound_x2: float | None

    @property
    def satisfied(self) -> bool:
        return (
            self.eta <= min(self.x1_range[0], self.x2_range[0])
            and self.x1_range[1] <= self.upper_bound_x1
            and self.x2_range[1] <= self.upper_bound_x2
        )

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "eps": self.eps,
            "x1_range": list(self.x1_range),
            "x2_range": list(self.x2_range),
            "upper_bound_x1": self.upper_bound_x1,
            "upper_bound_x2": self.upper_bound_x2,
            "exponent": self.exponent,
            "x2_factor": self.x2_factor,
            "x2_factor_with_lambda3": self.x2_factor_lambda3,
            "tight_upper_bound_x2 (derived, exponent with -12*lambda5)": self.tight_upper_bound_x2,
            "corollary_exponent": self.corollary_exponent,
            "corollary_upper_bound_x2": self.corollary_upper_bound_x2,
            "satisfied": self.satisfied,
        }


def verify_bounds(orbit: PeriodicOrbit, params: ModelParams | None = None, eta: float = DEFAULT_ETA,
                  samples: int = 4001) -> BoundReport:
    """Compare the orbit's extrema with the explicit a-priori bounds.

    At eps = 0 the bounds use ``p_N1`` and ``r_N2``; for eps > 0 the
    eps-dependent root ``p`` and crossing height ``q2`` replace them.
    """
    params = params or orbit.params
    p = params
    c = GuardConstants.from_params(p)
    if orbit.eps > 0:
        p_root = find_p(orbit.eps, p)
        factor_base = find_q(orbit.eps, p)[1]
        factor_l3 = factor_base
    else:
        p_root = c.p_N1
        factor_base = c.r_N2
        factor_l3 = c.r_N2 / p.lambda3
    sat = p_root / (p.k + p_root)
    exponent = 12 * p.lambda4 * sat + 12 * p.lambda5
    factor = max(1.0, factor_base)
    _, xs = orbit.trajectory.sample(samples)
    xs = np.vstack([xs, orbit.trajectory.x])
    cor_exp = corollary_exponent(p) if _is_corollary(p) else None
    cor_bound = corollary_x2_bound(p, eta) if _is_corollary(p) else None
    return BoundReport(
        eta=eta,
        eps=orbit.eps,
        x1_range=(float(xs[:, 0].min()), float(xs[:, 0].max())),
        x2_range=(float(xs[:, 1].min()), float(xs[:, 1].max())),
        upper_bound_x1=p_root + eta,
        upper_bound_x2=factor * math.exp(exponent) + eta,
        exponent=exponent,
        x2_factor=factor,
        tight_upper_bound_x2=factor * math.exp(12 * p.lambda4 * sat - 12 * p.lambda5) + eta,
        x2_factor_lambda3=max(1.0, factor_l3),
        corollary_exponent=cor_exp,
        corollary_upper_bound_x2=cor_bound,
    )


def eta_margins(orbits) -> dict:
    """Largest admissible eta per forcing amplitude and over the whole grid.

    ``orbits`` maps N to an orbit.  The margin of one orbit is its smallest
    state component over the period; a single eta valid for every N on the
    grid is the minimum of these.  Nothing is claimed off the grid.
    """
    per_n = {float(n): float(o.min_components.min()) for n, o in sorted(orbits.items())}
    if not per_n:
        raise ValueError("eta_margins needs at least one orbit")
    return {"per_N": per_n, "min": min(per_n.values())}


# ---------------------------------------------------------------------------
# comparison problem

def comparison_solution(trajectory: Trajectory, tau: float, y_tau: float, params: ModelParams) -> float:
    """``y(0)`` for ``y' = (lam4 x1/(k+x1) - lam5) y``, ``y(tau) = y_tau``.

    ``tau`` lies in ``[-12, 0]``; ``x1`` on ``[tau, 0]`` is read from the
    stored period ``[0, 12]`` by periodic extension.
    """
    if not -PERIOD <= tau <= 0:
        raise ValueError("tau must lie in [-12, 0]")
    if trajectory.t0 > 1e-12 or trajectory.t1 < PERIOD - 1e-9:
        raise NumericalError("trajectory does not cover one full period [0, 12]")
    p = params

    def rate(t, x):
        return p.lambda4 * x[:, 0] / (p.k + x[:, 0]) - p.lambda5

    integral = trajectory.quad(rate, PERIOD + tau, PERIOD)
    return y_tau * math.exp(integral)


@dataclass
class ComparisonCheck:
    tau: float
    threshold: float
    x2_tau: float
    x2_0: float
    y_0: float
    dominated: bool

    def as_dict(self) -> dict:
        return dict(tau=self.tau, threshold=self.threshold, x2_tau=self.x2_tau, x2_0=self.x2_0,
                    y_0=self.y_0, dominated=self.dominated)


def comparison_check(orbit: PeriodicOrbit, params: ModelParams | None = None, threshold: float = 1.0,
                     rtol: float = 1e-6, samples: int = 12001) -> ComparisonCheck:
    """Check ``x2(0) <= y(0)`` with ``y(tau) = x2(tau)``.

    ``tau`` starts the longest window ending at 0 on which ``x2 >= threshold``
    (there ``x2^eps >= 1``, which is what makes y a majorant); when
    ``x2(0) < threshold`` the window is empty and ``tau = 0``.
    """
    params = params or orbit.params
    traj = orbit.trajectory
    tt, xx = traj.sample(samples)
    above = xx[:, 1] >= threshold
    if not above[-1]:
        tau = 0.0
    elif above.all():
        tau = -PERIOD
    else:
        last_below = np.flatnonzero(~above)[-1]
        tau = float(tt[last_below + 1] - PERIOD)
    x2_tau = float(traj(PERIOD + tau)[1])
    x2_0 = float(traj(PERIOD)[1])
    y0 = comparison_solution(traj, tau, x2_tau, params)
    return ComparisonCheck(tau, threshold, x2_tau, x2_0, y0, x2_0 <= y0 * (1 + rtol))
