"""Explicit Runge-Kutta integration, the period return map and its Jacobian.

The adaptive solver is the Dormand-Prince 5(4) pair with local extrapolation
and FSAL.  It advances a *batch* of initial conditions at once, each row with
its own time and step size, so that a few hundred boundary points of a
rectangle cost about as many Python-level steps as a single trajectory.

Model fields are integrated in the chart ``(x1, log x2)`` (see
:mod:`lagoon_orbits.model`); results are mapped back to natural coordinates
unless a ``*_chart`` function is used explicitly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import LeftDomainError, ParameterError, StepUnderflowError
from .model import PERIOD, LogChartField, PerturbedField

METHODS = ("adaptive-RK45", "fixed-RK4")

# Dormand-Prince coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = 0.1
    method: str = "adaptive-RK45"
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.max_step > 0):
            raise ParameterError("rtol, atol and max_step must be positive")
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")

    def tighter(self, factor: float = 1e-3) -> "IntegratorOptions":
        return IntegratorOptions(
            rtol=max(self.rtol * factor, 1e-14),
            atol=max(self.atol * factor, 1e-300),
            max_step=self.max_step,
            method=self.method,
            max_steps=self.max_steps,
        )


@dataclass
class Trajectory:
    """Accepted steps of one solution with cubic Hermite dense output."""

    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    steps: int = 0
    rejections: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def __call__(self, tt):
        tt = np.asarray(tt, dtype=float)
        if np.any(tt < self.t[0] - 1e-12 * max(1.0, abs(self.t[0]))) or np.any(
            tt > self.t[-1] + 1e-12 * max(1.0, abs(self.t[-1]))
        ):
            raise ValueError("dense output requested outside the integration interval")
        i = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 2)
        h = (self.t[i + 1] - self.t[i])[..., None]
        s = ((tt - self.t[i]) / (self.t[i + 1] - self.t[i]))[..., None]
        y0, y1 = self.x[i], self.x[i + 1]
        f0, f1 = self.dx[i], self.dx[i + 1]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        tt = np.linspace(self.t[0], self.t[-1], n)
        return tt, self(tt)

    def quad(self, func: Callable, a: float, b: float, nodes: int = 5) -> float:
        """Integrate ``func(t, x(t))`` over ``[a, b]`` with Gauss-Legendre per step.

        The panels follow the accepted steps so that the interpolant is smooth
        inside each panel.
        """
        if a == b:
            return 0.0
        sign = 1.0
        if a > b:
            a, b, sign = b, a, -1.0
        knots = self.t[(self.t > a) & (self.t < b)]
        edges = np.concatenate([[a], knots, [b]])
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        lo, hi = edges[:-1, None], edges[1:, None]
        tt = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        vals = np.asarray(func(tt.ravel(), self(tt.ravel())), dtype=float).reshape(tt.shape)
        return sign * float(np.sum(0.5 * (hi - lo) * wg * vals))

    def to_csv(self, path: str | Path, n: int | None = None) -> None:
        """Write ``t, x1, x2`` columns; ``n`` resamples uniformly via dense output."""
        if n is None:
            tt, xx = self.t, self.x
        else:
            tt, xx = self.sample(n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(xx.shape[1])])
            for ti, xi in zip(tt, xx):
                w.writerow([f"{ti:.17g}"] + [f"{v:.17g}" for v in xi])


def _initial_step(fun, t0, y0, f0, t1, opts):
    """Hairer-Norsett-Wanner starting step, per row."""
    scale = opts.atol + opts.rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale, axis=1)
    d1 = np.max(np.abs(f0) / scale, axis=1)
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, np.minimum(opts.max_step, t1 - t0))
    y1 = y0 + h0[:, None] * f0
    f1 = fun(t0 + h0, y1)
    d2 = np.max(np.abs(f1 - f0) / scale, axis=1) / h0
    dmax = np.maximum(d1, d2)
    h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(dmax, 1e-300)) ** 0.2)
    return np.minimum(np.minimum(100 * h0, h1), np.minimum(opts.max_step, t1 - t0))


def _dopri(fun, t0: float, t1: float, y0: np.ndarray, opts: IntegratorOptions,
           record: bool = False, domain: Callable | None = None):
    """Integrate rows of ``y0`` (shape ``(n, d)``) from ``t0`` to ``t1``.

    ``domain(y)`` returns a boolean mask of rows with a component below
    ``-atol``; such rows abort with :class:`LeftDomainError`.  Components in
    ``[-atol, 0)`` are left alone (the field decides what to do with them).
    """
    n, d = y0.shape
    t = np.full(n, float(t0))
    y = y0.astype(float).copy()
    f = fun(t, y)
    h = _initial_step(fun, t, y, f, t1, opts)
    steps = np.zeros(n, dtype=int)
    rejections = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    rec_t, rec_y, rec_f = ([t0], [y[0].copy()], [f[0].copy()]) if record else (None, None, None)
    total = 0
    while active.any():
        total += 1
        if total > opts.max_steps:
            raise StepUnderflowError(f"step budget of {opts.max_steps} exhausted before t1={t1}")
        idx = np.flatnonzero(active)
        ti, yi, fi = t[idx], y[idx], f[idx]
        remaining = t1 - ti
        hi = np.minimum(np.minimum(h[idx], opts.max_step), remaining)
        # land on t1 exactly instead of leaving a sliver
        last = hi >= remaining * (1 - 1e-12)
        hi = np.where(last, remaining, hi)
        tiny = 16 * np.finfo(float).eps * np.maximum(np.abs(ti), 1.0)
        if np.any(hi < tiny):
            bad = idx[hi < tiny][0]
            raise StepUnderflowError(f"step size underflow at t={t[bad]:.17g} (row {bad})")
        K = [fi]
        for s in range(1, 7):
            ys = yi + hi[:, None] * sum(a * k for a, k in zip(_A[s], K) if a != 0.0)
            K.append(fun(ti + _C[s] * hi, ys))
        y_new = ys  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err = hi[:, None] * sum(e * k for e, k in zip(_E, K) if e != 0.0)
        scale = opts.atol + opts.rtol * np.maximum(np.abs(yi), np.abs(y_new))
        with np.errstate(invalid="ignore"):
            err_norm = np.max(np.abs(err) / scale, axis=1)
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(err_norm)
        err_norm = np.where(finite, err_norm, np.inf)
        accept = err_norm <= 1.0
        with np.errstate(divide="ignore"):
            factor = np.where(
                err_norm == 0, _MAX_FACTOR,
                np.clip(_SAFETY * err_norm ** -0.2, _MIN_FACTOR, _MAX_FACTOR),
            )
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h[idx] = hi * factor
        rejections[idx[~accept]] += 1
        if accept.any():
            acc = idx[accept]
            if domain is not None:
                out = domain(y_new[accept], opts.atol)
                if np.any(out):
                    bad = acc[out][0]
                    raise LeftDomainError(
                        f"solution left the positive quadrant near t={t[bad] + hi[accept][out][0]:.17g}"
                    )
            t[acc] = np.where(last[accept], t1, ti[accept] + hi[accept])
            y[acc] = y_new[accept]
            f[acc] = K[6][accept]
            steps[acc] += 1
            active[acc] = ~last[accept]
            if record and acc[0] == 0:
                rec_t.append(float(t[0]))
                rec_y.append(y[0].copy())
                rec_f.append(f[0].copy())
    traj = None
    if record:
        traj = Trajectory(np.array(rec_t), np.array(rec_y), np.array(rec_f),
                          steps=int(steps[0]), rejections=int(rejections[0]))
    return y, traj, steps, rejections


def _rk4(fun, t0: float, t1: float, y0: np.ndarray, opts: IntegratorOptions, record: bool = False,
         domain: Callable | None = None):
    n_steps = max(1, math.ceil((t1 - t0) / opts.max_step - 1e-9))
    h = (t1 - t0) / n_steps
    y = y0.astype(float).copy()
    n = y.shape[0]
    ts = t0 + h * np.arange(n_steps + 1)
    ts[-1] = t1
    rec_y, rec_f = [], []
    for i in range(n_steps):
        t = np.full(n, ts[i])
        k1 = fun(t, y)
        if record:
            rec_y.append(y[0].copy())
            rec_f.append(k1[0].copy())
        k2 = fun(t + h / 2, y + h / 2 * k1)
        k3 = fun(t + h / 2, y + h / 2 * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if domain is not None and np.any(domain(y, opts.atol)):
            raise LeftDomainError(f"solution left the positive quadrant near t={ts[i + 1]:.17g}")
    traj = None
    if record:
        rec_y.append(y[0].copy())
        rec_f.append(fun(np.full(n, t1), y)[0].copy())
        traj = Trajectory(ts, np.array(rec_y), np.array(rec_f), steps=n_steps, rejections=0)
    steps = np.full(y.shape[0], n_steps)
    return y, traj, steps, np.zeros_like(steps)


def _solve(fun, t0, t1, y0, opts, record=False, domain=None):
    if not t1 > t0:
        raise ParameterError(f"need t1 > t0, got t0={t0}, t1={t1}")
    solver = _dopri if opts.method == "adaptive-RK45" else _rk4
    return solver(fun, float(t0), float(t1), y0, opts, record=record, domain=domain)


def _below(columns):
    def check(y, atol):
        return np.any(y[:, columns] < -atol, axis=1)
    return check


def _rowwise(fun):
    """Adapt ``fun(t, x)`` written for a single state to batched rows."""
    def wrapped(t, y):
        t = np.broadcast_to(np.asarray(t, dtype=float), y.shape[:1])
        return np.array([np.asarray(fun(ti, yi), dtype=float).reshape(y.shape[1]) for ti, yi in zip(t, y)])
    return wrapped


# ---------------------------------------------------------------------------
# public integration API

def integrate(field, x0, t0: float, t1: float, opts: IntegratorOptions | None = None,
              chart: str = "auto") -> Trajectory:
    """Integrate one solution and return it with dense output.

    ``field`` is a :class:`PerturbedField`, an object with an ``rhs(t, x)``
    method, or a plain callable ``f(t, x)``.  For model fields ``chart``
    selects the coordinates used internally: ``"log"`` integrates in
    ``(x1, log x2)``, ``"natural"`` in ``(x1, x2)``, and ``"auto"`` picks the
    log chart whenever ``x2 > 0``.  The returned trajectory is always in
    natural coordinates.
    """
    opts = opts or IntegratorOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(field, PerturbedField):
        if x0[0] < 0 or x0[1] < 0:
            raise LeftDomainError("initial state outside the closed positive quadrant")
        use_log = chart == "log" or (chart == "auto" and x0[1] > 0)
        if use_log:
            logf = field.log_chart()
            _, traj, _, _ = _solve(logf.rhs, t0, t1, LogChartField.to_chart(x0)[None, :], opts,
                                   record=True, domain=_below([0]))
            x = LogChartField.from_chart(traj.x)
            dx = traj.dx.copy()
            dx[:, 1] *= x[:, 1]
            return Trajectory(traj.t, x, dx, traj.steps, traj.rejections, {"chart": "log"})
        fun = lambda t, y: field.rhs(t, np.maximum(y, 0.0))  # noqa: E731 - stage states may dip below 0 by roundoff
        _, traj, _, _ = _solve(fun, t0, t1, x0[None, :], opts, record=True, domain=_below([0, 1]))
        traj.meta["chart"] = "natural"
        return traj
    fun = field.rhs if hasattr(field, "rhs") else field
    _, traj, _, _ = _solve(_rowwise(fun), t0, t1, x0[None, :], opts, record=True)
    return traj


def return_map_chart(Z0, field: PerturbedField, opts: IntegratorOptions | None = None,
                     t0: float = 0.0, period: float = PERIOD) -> np.ndarray:
    """Batch return map in the log chart: rows of ``Z0`` are ``(x1, log x2)``."""
    opts = opts or IntegratorOptions()
    Z0 = np.atleast_2d(np.asarray(Z0, dtype=float))
    logf = field.log_chart()
    Z1, _, _, _ = _solve(logf.rhs, t0, t0 + period, Z0, opts, domain=_below([0]))
    return Z1


def poincare(x0, field, opts: IntegratorOptions | None = None, period: float = PERIOD) -> np.ndarray:
    """State at ``t = 12`` of the solution starting from ``x0`` at ``t = 0``.

    Accepts a single state ``(2,)`` or a batch ``(n, 2)``.
    """
    opts = opts or IntegratorOptions()
    x0 = np.asarray(x0, dtype=float)
    X0 = np.atleast_2d(x0)
    if isinstance(field, PerturbedField):
        if np.any(X0[:, 0] < 0) or np.any(X0[:, 1] <= 0):
            raise LeftDomainError("poincare needs initial states in the open positive quadrant")
        X1 = LogChartField.from_chart(return_map_chart(LogChartField.to_chart(X0), field, opts, 0.0, period))
    else:
        fun = field.rhs if hasattr(field, "rhs") else field
        X1, _, _, _ = _solve(_rowwise(fun), 0.0, period, X0, opts)
    return X1.reshape(x0.shape)


def _variational(rhs, jac, d):
    def fun(t, W):
        n = W.shape[0]
        z = W[:, :d]
        Phi = W[:, d:].reshape(n, d, d)
        dz = rhs(t, z)
        J = np.broadcast_to(jac(t, z), (n, d, d))
        return np.concatenate([dz, (J @ Phi).reshape(n, d * d)], axis=1)
    return fun


def _flow_with_jacobian(rhs, jac, z0, opts, period, domain=None, record=False):
    d = z0.shape[-1]
    Z0 = np.atleast_2d(z0)
    n = Z0.shape[0]
    W0 = np.concatenate([Z0, np.tile(np.eye(d).ravel(), (n, 1))], axis=1)
    W1, traj, _, _ = _solve(_variational(rhs, jac, d), 0.0, period, W0, opts, record=record, domain=domain)
    return W1[:, :d], W1[:, d:].reshape(n, d, d), traj


def poincare_with_jacobian(x0, field, opts: IntegratorOptions | None = None, period: float = PERIOD,
                           record: bool = False):
    """Return ``(Omega(x0), DOmega(x0))`` and, with ``record``, the trajectory.

    For model fields the variational equations are integrated in the log
    chart and the Jacobian is mapped back with the chain rule
    ``DOmega = diag(1, x2(T)) DOmega_chart diag(1, 1/x2(0))``.
    """
    opts = opts or IntegratorOptions()
    x0 = np.asarray(x0, dtype=float)
    if isinstance(field, PerturbedField):
        if x0[0] < 0 or x0[1] <= 0:
            raise LeftDomainError("poincare needs an initial state in the open positive quadrant")
        logf = field.log_chart()
        z1, Dz, traj = _flow_with_jacobian(logf.rhs, logf.jacobian, LogChartField.to_chart(x0),
                                           opts, period, domain=_below([0]), record=record)
        x1 = LogChartField.from_chart(z1[0])
        D = Dz[0] * np.array([[1.0, 1.0 / x0[1]], [x1[1], x1[1] / x0[1]]])
        if record:
            x = LogChartField.from_chart(traj.x[:, :2])
            dx = traj.dx[:, :2].copy()
            dx[:, 1] *= x[:, 1]
            traj = Trajectory(traj.t, x, dx, traj.steps, traj.rejections, {"chart": "log"})
        return (x1, D, traj) if record else (x1, D)
    z1, D, traj = _flow_with_jacobian(field.rhs, field.jacobian, x0, opts, period, record=record)
    if record:
        d = x0.shape[-1]
        traj = Trajectory(traj.t, traj.x[:, :d], traj.dx[:, :d], traj.steps, traj.rejections)
        return z1[0], D[0], traj
    return z1[0], D[0]


def poincare_jacobian(x0, field, opts: IntegratorOptions | None = None, period: float = PERIOD) -> np.ndarray:
    return poincare_with_jacobian(x0, field, opts, period)[1]


def return_map_chart_with_jacobian(z0, field: PerturbedField, opts: IntegratorOptions | None = None,
                                   period: float = PERIOD):
    """Return map and its Jacobian, both in the log chart."""
    opts = opts or IntegratorOptions()
    logf = field.log_chart()
    z1, Dz, _ = _flow_with_jacobian(logf.rhs, logf.jacobian, np.asarray(z0, dtype=float), opts, period,
                                    domain=_below([0]))
    return z1[0], Dz[0]


@dataclass(frozen=True)
class LinearSystem:
    """``x' = A x`` with its constant Jacobian; a test hook for the variational code."""

    A: np.ndarray

    def rhs(self, t, x):
        return np.asarray(x) @ np.asarray(self.A).T

    def jacobian(self, t, x):
        return np.asarray(self.A, dtype=float)
