"""Seasonally forced lagoon plankton model and its epsilon-regularization.

The unforced-in-x2 predator-prey system is

    x1' = lam1 s(t) x1 - lam2 x1^2 - lam3 x2 x1 / (k + x1) + eps
    x2' = lam4 x2 x1 / (k + x1) - lam5 x2 x2^eps

with s(t) = M + N sin(2 pi t / 12 + 1).  At ``eps = 0`` the additive term
vanishes and ``x2^0`` is taken as 1, which recovers the original model with
both coordinate axes invariant.

Besides the field in the natural coordinates, :class:`LogChartField` gives the
same flow in the chart ``(x1, log x2)``.  The chart is an orientation
preserving diffeomorphism of the open quadrant, so return maps conjugate and
fixed-point indices coincide; it is what the integrators use, because the
lower edge of a non-return rectangle sits at x2 values far below the float64
range once eps is small.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DomainError, ParameterError

PERIOD = 12.0
PHASE = 1.0
OMEGA = 2.0 * math.pi / PERIOD

PARAM_NAMES = ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "k", "M", "N")

# Rates and half-saturation from the lagoon identification tables; M and N are
# free in the corollary, the defaults are the values used throughout the tests.
PRESETS: dict[str, dict[str, float]] = {
    "corollary": dict(
        lambda1=1.29, lambda2=0.0002, lambda3=0.93, lambda4=6.9, lambda5=5.8,
        k=100.0, M=0.3, N=0.1,
    ),
}


@dataclass(frozen=True)
class ModelParams:
    """Model constants.  Validated on construction."""

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    lambda5: float
    k: float
    M: float
    N: float = 0.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"{name} must be a finite real, got {value!r}")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "k", "M"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.N < 0:
            raise ParameterError(f"N must be nonnegative, got {self.N}")
        if self.lambda4 <= self.lambda5:
            raise ParameterError(
                f"lambda4 > lambda5 is required (got {self.lambda4} <= {self.lambda5})"
            )
        if self.N > self.M:
            raise ParameterError(f"N <= M is required so that s(t) >= 0 (got N={self.N}, M={self.M})")

    @classmethod
    def preset(cls, name: str = "corollary", **overrides: float) -> "ModelParams":
        try:
            values = dict(PRESETS[name])
        except KeyError:
            raise ParameterError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
        values.update(overrides)
        return cls(**values)

    def with_forcing(self, M: float | None = None, N: float | None = None) -> "ModelParams":
        return replace(self, M=self.M if M is None else M, N=self.N if N is None else N)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def load_params(path: str | Path, section: str = "params") -> ModelParams:
    """Read parameters from a ``key = value`` config file.

    The section may name a ``preset`` and override any subset of the keys::

        [params]
        preset = corollary
        M = 0.25
        N = 0.05
    """
    parser = configparser.ConfigParser()
    # keep "M" and "N" distinct from "m"/"n"
    parser.optionxform = str
    if not parser.read(path):
        raise ParameterError(f"cannot read config file {path}")
    if not parser.has_section(section):
        raise ParameterError(f"config file {path} has no [{section}] section")
    return params_from_mapping(dict(parser.items(section)))


def params_from_mapping(raw: dict[str, str | float]) -> ModelParams:
    raw = dict(raw)
    preset = raw.pop("preset", None)
    if preset and str(preset) not in PRESETS:
        raise ParameterError(f"unknown preset {preset!r}")
    values: dict[str, float] = dict(PRESETS[str(preset)]) if preset else {}
    for key, value in raw.items():
        if key not in PARAM_NAMES:
            raise ParameterError(f"unknown parameter {key!r}")
        try:
            values[key] = float(value)
        except (TypeError, ValueError):
            raise ParameterError(f"parameter {key} is not a decimal real: {value!r}") from None
    missing = [name for name in PARAM_NAMES if name not in values]
    if missing:
        raise ParameterError(f"missing parameters: {', '.join(missing)}")
    return ModelParams(**values)


def forcing_value(t, params: ModelParams):
    """Seasonal forcing ``M + N sin(2 pi t / 12 + 1)``."""
    return params.M + params.N * np.sin(OMEGA * np.asarray(t, dtype=float) + PHASE)


def _split_state(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise DomainError(f"state must have two components, got shape {x.shape}")
    return x, x[..., 0], x[..., 1]


def _check_quadrant(x1, x2):
    if np.any(x1 < 0) or np.any(x2 < 0):
        raise DomainError("state outside the closed positive quadrant")


@dataclass(frozen=True)
class PerturbedField:
    """Right-hand side of the regularized system in natural coordinates.

    All evaluators broadcast over leading axes: ``x`` may be a single state of
    shape ``(2,)`` or a batch of shape ``(n, 2)``.
    """

    params: ModelParams
    epsilon: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ParameterError(f"epsilon must be a nonnegative real, got {self.epsilon}")

    def __call__(self, t, x):
        return self.rhs(t, x)

    def P(self, t, x1, x2):
        p = self.params
        x1 = np.asarray(x1, dtype=float)
        return (
            p.lambda1 * forcing_value(t, p) * x1
            - p.lambda2 * x1 * x1
            - p.lambda3 * x2 * x1 / (p.k + x1)
            + self.epsilon
        )

    def Q(self, x1, x2):
        p = self.params
        x2 = np.asarray(x2, dtype=float)
        # numpy gives 0**0 == 1 and 0**eps == 0, matching the eps = 0 convention
        return p.lambda4 * x2 * x1 / (p.k + x1) - p.lambda5 * x2 * np.power(x2, self.epsilon)

    def rhs(self, t, x):
        x, x1, x2 = _split_state(x)
        _check_quadrant(x1, x2)
        return np.stack([self.P(t, x1, x2), self.Q(x1, x2)], axis=-1)

    def frozen(self, x):
        """The autonomous field ``(P(0, .), Q)`` used for the non-return degree."""
        return self.rhs(0.0, x)

    def jacobian(self, t, x):
        """d(rhs)/dx, shape ``(..., 2, 2)``."""
        x, x1, x2 = _split_state(x)
        _check_quadrant(x1, x2)
        p = self.params
        eps = self.epsilon
        kx = p.k + x1
        sat = x1 / kx
        dsat = p.k / (kx * kx)
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = p.lambda1 * forcing_value(t, p) - 2.0 * p.lambda2 * x1 - p.lambda3 * x2 * dsat
        J[..., 0, 1] = -p.lambda3 * sat
        J[..., 1, 0] = p.lambda4 * x2 * dsat
        J[..., 1, 1] = p.lambda4 * sat - p.lambda5 * (1.0 + eps) * np.power(x2, eps)
        return J

    def divergence(self, t, x):
        J = self.jacobian(t, x)
        return J[..., 0, 0] + J[..., 1, 1]

    def log_chart(self) -> "LogChartField":
        return LogChartField(self)


@dataclass(frozen=True)
class LogChartField:
    """The same flow written in the chart ``z = (x1, log x2)``.

    ``x1' = P(t, x1, e^y)`` and ``y' = Q(x1, e^y) / e^y``; the second
    component never needs ``x2`` itself except inside P, where it is
    multiplied by a bounded factor, so states with ``log x2`` around -2000
    stay representable.
    """

    field: PerturbedField

    @property
    def params(self) -> ModelParams:
        return self.field.params

    @property
    def epsilon(self) -> float:
        return self.field.epsilon

    def per_capita_q(self, x1, y):
        """``Q / x2`` evaluated from ``log x2``."""
        p = self.params
        return p.lambda4 * x1 / (p.k + x1) - p.lambda5 * np.exp(self.epsilon * y)

    def rhs(self, t, z):
        z = np.asarray(z, dtype=float)
        x1, y = z[..., 0], z[..., 1]
        return np.stack([self.field.P(t, x1, np.exp(y)), self.per_capita_q(x1, y)], axis=-1)

    __call__ = rhs

    def jacobian(self, t, z):
        z = np.asarray(z, dtype=float)
        x1, y = z[..., 0], z[..., 1]
        p = self.params
        x2 = np.exp(y)
        kx = p.k + x1
        dsat = p.k / (kx * kx)
        J = np.empty(z.shape[:-1] + (2, 2))
        J[..., 0, 0] = p.lambda1 * forcing_value(t, p) - 2.0 * p.lambda2 * x1 - p.lambda3 * x2 * dsat
        J[..., 0, 1] = -p.lambda3 * x2 * x1 / kx
        J[..., 1, 0] = p.lambda4 * dsat
        J[..., 1, 1] = -p.lambda5 * self.epsilon * np.exp(self.epsilon * y)
        return J

    @staticmethod
    def to_chart(x):
        x = np.asarray(x, dtype=float)
        if np.any(x[..., 0] < 0) or np.any(x[..., 1] <= 0):
            raise DomainError("log chart needs x1 >= 0 and x2 > 0")
        return np.stack([x[..., 0], np.log(x[..., 1])], axis=-1)

    @staticmethod
    def from_chart(z):
        z = np.asarray(z, dtype=float)
        return np.stack([z[..., 0], np.exp(z[..., 1])], axis=-1)


def frozen_field(x, field: PerturbedField):
    return field.frozen(x)


def rhs(t, x, field: PerturbedField):
    return field.rhs(t, x)


def interior_equilibrium(params: ModelParams, epsilon: float = 0.0) -> np.ndarray:
    """Equilibrium of the autonomous system (N = 0) in the open quadrant.

    Solved by bisection on the reduced scalar equation rather than
    closed form, so it doubles as an independent oracle for the integrator.
    """
    from scipy.optimize import brentq

    if params.N != 0:
        raise ParameterError("equilibria only exist for the autonomous system (N = 0)")
    p = params

    def x2_on_p_nullcline(x1):
        # P = 0 solved for x2
        return ((p.lambda1 * p.M - p.lambda2 * x1) * x1 + epsilon) * (p.k + x1) / (p.lambda3 * x1)

    def q_per_capita(x1):
        x2 = x2_on_p_nullcline(x1)
        return p.lambda4 * x1 / (p.k + x1) - p.lambda5 * x2 ** epsilon

    hi = p.lambda1 * p.M / p.lambda2
    # Q/x2 along the P-nullcline changes sign between r1-ish and the carrying capacity
    xs = np.geomspace(hi * 1e-9, hi * (1 - 1e-12), 4001)
    vals = np.array([q_per_capita(v) if x2_on_p_nullcline(v) > 0 else np.nan for v in xs])
    idx = np.flatnonzero(np.isfinite(vals[:-1]) & np.isfinite(vals[1:]) & (np.sign(vals[:-1]) != np.sign(vals[1:])))
    if idx.size == 0:
        raise ParameterError("no interior equilibrium for these parameters")
    i = idx[0]
    x1 = brentq(q_per_capita, xs[i], xs[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return np.array([x1, x2_on_p_nullcline(x1)])
