"""Guard curves, derived constants and the non-return rectangle.

Sign structure of the regularized field, uniformly in t:

* ``P <= 0`` above ``f_upper`` (worst case forcing ``M + N``),
* ``P >= 0`` below ``f_lower`` (worst case forcing ``M - N``),
* ``Q <= 0`` above ``g`` and ``Q >= 0`` below it, ``g`` being the
  Q-nullcline ``x2 = g(x1)``.

Both f-curves carry the factor ``1/lambda3`` that solving ``P = 0`` for x2
produces.  ``g`` grows like ``base**(1/eps)``, so it is handled through
:func:`log_g_curve` wherever it can overflow or underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NoIntersectionError, ParameterError, RectConstructionError, RootBracketError
from .model import PERIOD, LogChartField, ModelParams, PerturbedField

ROOT_RTOL = 1e-13
DEFAULT_SAFETY = 1.1

F_LOWER_FORMULA = "((lambda1*(M-N) - lambda2*x1)*(k+x1) + eps + eps*k/x1) / lambda3"
F_UPPER_FORMULA = "((lambda1*(M+N) - lambda2*x1)*(k+x1) + eps + eps*k/x1) / lambda3"


@dataclass(frozen=True)
class GuardConstants:
    u_N1: float
    p_N1: float
    r1: float
    r_N2: float

    @classmethod
    def from_params(cls, params: ModelParams) -> "GuardConstants":
        p = params
        r1 = p.lambda5 * p.k / (p.lambda4 - p.lambda5)
        return cls(
            u_N1=p.lambda1 / p.lambda2 * (p.M - p.N),
            p_N1=p.lambda1 / p.lambda2 * (p.M + p.N),
            r1=r1,
            r_N2=(p.k + r1) * (p.lambda1 * (p.M + p.N) - p.lambda2 * r1),
        )

    @property
    def hypothesis_holds(self) -> bool:
        """Admissibility condition ``u_N1 > r1``."""
        return self.u_N1 > self.r1


def hypothesis_threshold(params: ModelParams) -> float:
    """Smallest admissible ``M - N``: ``r1 * lambda2 / lambda1``."""
    return GuardConstants.from_params(params).r1 * params.lambda2 / params.lambda1


def _check_x1(x1):
    x1 = np.asarray(x1, dtype=float)
    if np.any(x1 <= 0):
        raise ParameterError("guard curves are defined for x1 > 0 only")
    return x1


def _f(x1, eps, params: ModelParams, forcing: float):
    p = params
    x1 = _check_x1(x1)
    return ((p.lambda1 * forcing - p.lambda2 * x1) * (p.k + x1) + eps + eps * p.k / x1) / p.lambda3


def f_lower(x1, eps: float, params: ModelParams):
    """Below this curve ``P >= 0`` for every t."""
    return _f(x1, eps, params, params.M - params.N)


def f_upper(x1, eps: float, params: ModelParams):
    """Above this curve ``P <= 0`` for every t."""
    return _f(x1, eps, params, params.M + params.N)


def _log_g_base_m1(x1, params: ModelParams):
    # (lam4/lam5) x1/(k+x1) - 1, written so that it is exactly 0 at x1 = r1 up to one rounding
    p = params
    return ((p.lambda4 - p.lambda5) * x1 - p.lambda5 * p.k) / (p.lambda5 * (p.k + x1))


def log_g_curve(x1, eps: float, params: ModelParams):
    """``log g(x1) = log((lam4/lam5) x1/(k+x1)) / eps``."""
    if not eps > 0:
        raise ParameterError("g is defined for eps > 0 only")
    x1 = _check_x1(x1)
    p = params
    m1 = _log_g_base_m1(x1, p)
    # log1p keeps g(r1) == 1 exactly; far from r1 the direct form keeps tiny x1 accurate
    direct = np.log(p.lambda4 / p.lambda5) + np.log(x1) - np.log(p.k + x1)
    with np.errstate(divide="ignore"):
        return np.where(np.abs(m1) < 0.5, np.log1p(m1), direct) / eps


def g_curve(x1, eps: float, params: ModelParams):
    """Q-nullcline ``x2 = g(x1)``; may return ``inf``/0 outside float range."""
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(log_g_curve(x1, eps, params))


def _root(fun, lo, hi, what):
    flo, fhi = fun(lo), fun(hi)
    if not (np.sign(flo) * np.sign(fhi) < 0):
        raise RootBracketError(f"{what}: no sign change on [{lo:.6g}, {hi:.6g}] ({flo:.3g}, {fhi:.3g})")
    return brentq(fun, lo, hi, xtol=1e-300, rtol=ROOT_RTOL, maxiter=500)


def find_p(eps: float, params: ModelParams) -> float:
    """Unique positive root of ``f_upper(., eps)``.

    Multiplying by ``x1`` turns ``f_upper = 0`` into a cubic with one sign
    change in its coefficients, hence exactly one positive root; for
    ``eps > 0`` it lies right of ``p_N1``.
    """
    if eps < 0:
        raise ParameterError("eps must be nonnegative")
    p_N1 = GuardConstants.from_params(params).p_N1
    if eps == 0:
        return p_N1
    fun = lambda x: float(f_upper(x, eps, params))  # noqa: E731
    hi = 2.0 * p_N1
    for _ in range(200):
        if fun(hi) < 0:
            break
        hi *= 2.0
    return _root(fun, p_N1, hi, "find_p")


def _gap(x1, eps, params):
    """``log f_upper - log g``; ``+inf``/``-inf`` where f_upper is not positive."""
    f = f_upper(x1, eps, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = np.where(f > 0, np.log(np.where(f > 0, f, 1.0)), -np.inf)
    return logf - log_g_curve(x1, eps, params)


def find_q(eps: float, params: ModelParams, lo: float | None = None, samples: int = 4096) -> tuple[float, float]:
    """Crossing of ``f_upper`` with ``g``: returns ``(q1, q2 = f_upper(q1))``.

    The difference of logarithms is scanned on a geometric grid over
    ``[lo, p)`` where ``p = find_p(eps)``; exactly one sign change is
    required.  ``lo`` defaults to ``1e-9 * p``.
    """
    if not eps > 0:
        raise ParameterError("find_q needs eps > 0")
    p_root = find_p(eps, params)
    lo = 1e-9 * p_root if lo is None else lo
    # geometric from lo, plus geometric approach to the root of f_upper from below
    near = p_root - np.geomspace(0.5 * p_root, 1e-13 * p_root, samples // 4)
    xs = np.union1d(np.geomspace(lo, 0.5 * p_root, samples), near)
    gap = _gap(xs, eps, params)
    sign = np.sign(gap)
    changes = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    if changes.size != 1:
        kind = "no crossing" if changes.size == 0 else f"{changes.size} crossings"
        raise NoIntersectionError(
            f"f_upper and g: {kind} on [{lo:.3g}, {p_root:.6g}) at eps={eps:g}; "
            f"intersection is not unique (eps too large?)",
            gap_samples=(xs, gap),
        )
    i = changes[0]
    q1 = _root(lambda x: float(_gap(x, eps, params)), xs[i], xs[i + 1], "find_q")
    return q1, float(f_upper(q1, eps, params))


@dataclass(frozen=True)
class Rect:
    """Open box ``(e1, p1) x (e2, p2)`` in the positive quadrant.

    The x2 bounds are stored as logarithms: for small eps the lower edge
    ``e2`` lies below the smallest positive double.
    """

    e1: float
    p1: float
    log_e2: float
    log_p2: float

    def __post_init__(self):
        vals = (self.e1, self.p1, self.log_e2, self.log_p2)
        if not all(math.isfinite(v) for v in vals):
            raise ParameterError(f"rectangle bounds must be finite, got {vals}")
        if not (0 < self.e1 < self.p1):
            raise ParameterError(f"need 0 < e1 < p1, got e1={self.e1}, p1={self.p1}")
        if not self.log_e2 < self.log_p2:
            raise ParameterError("need e2 < p2")

    @classmethod
    def from_corners(cls, e1: float, e2: float, p1: float, p2: float) -> "Rect":
        if not (e2 > 0 and p2 > 0):
            raise ParameterError("x2 bounds must be positive")
        return cls(float(e1), float(p1), math.log(e2), math.log(p2))

    @property
    def e2(self) -> float:
        return math.exp(self.log_e2)

    @property
    def p2(self) -> float:
        return math.exp(self.log_p2)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """``(x1_lo, x1_hi, x2_lo, x2_hi)`` in natural coordinates."""
        return self.e1, self.p1, self.e2, self.p2

    @property
    def chart_bounds(self) -> tuple[float, float, float, float]:
        """``(x1_lo, x1_hi, log x2_lo, log x2_hi)``."""
        return self.e1, self.p1, self.log_e2, self.log_p2

    @property
    def center(self) -> np.ndarray:
        """Center in the log chart, mapped back to natural coordinates."""
        return np.array([0.5 * (self.e1 + self.p1), math.exp(0.5 * (self.log_e2 + self.log_p2))])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(self.e1 < x[0] < self.p1 and x[1] > 0 and self.log_e2 < math.log(x[1]) < self.log_p2)

    def as_dict(self) -> dict:
        return {"e1": self.e1, "p1": self.p1, "e2": self.e2, "p2": self.p2,
                "log_e2": self.log_e2, "log_p2": self.log_p2}


def _last_positive_f_lower(lo, hi, eps, params):
    xs = np.geomspace(lo, hi, 200)
    ok = xs[f_lower(xs, eps, params) > 0]
    return float(ok[-1])


def build_rect(eps: float, params: ModelParams, safety: float = DEFAULT_SAFETY,
               require_hypothesis: bool = True) -> Rect:
    """Non-return rectangle for the regularized field.

    ``p1`` is the root of ``f_upper``, ``p2 = safety * max(g(p1), q2)``,
    ``e1 < eps`` is taken small enough that ``f_lower(e1) >= 2 p2`` and
    ``e2 = min(g(e1), e1) / 2``.  With ``require_hypothesis=False`` the
    admissibility check u_N1 > r1 is skipped; the sign checks still decide
    whether the result is a valid rectangle.
    """
    if not eps > 0:
        raise ParameterError("the rectangle needs eps > 0")
    if safety <= 1:
        raise ParameterError("safety factor must exceed 1")
    if require_hypothesis and not GuardConstants.from_params(params).hypothesis_holds:
        raise ParameterError("admissibility condition u_N1 > r1 fails; no rectangle is constructed")
    p1 = find_p(eps, params)
    _, q2 = find_q(eps, params)
    log_p2 = math.log(safety) + max(float(log_g_curve(p1, eps, params)), math.log(q2))
    if not math.isfinite(log_p2) or log_p2 > 700:
        raise RectConstructionError(f"upper edge exp({log_p2:.4g}) is beyond float range at eps={eps:g}")

    # f_lower ~ eps*k/(lam3*x1) near 0, so a crossing with 2*p2 exists below eps/2;
    # solved in log form because p2 can be ~1e60
    def target(x):
        f = float(f_lower(x, eps, params))
        return (math.log(f) if f > 0 else -math.inf) - (math.log(2.0) + log_p2)

    e1 = 0.5 * eps
    if target(e1) < 0:
        lo = e1
        while target(lo) < 0:
            lo *= 0.5
            if lo < 1e-300:
                raise RectConstructionError(f"no e1 in (0, eps) with f_lower(e1) > p2 at eps={eps:g}")
        if math.isfinite(target(e1)):
            e1 = _root(target, lo, e1, "e1")
        else:
            e1 = _root(target, lo, _last_positive_f_lower(lo, e1, eps, params), "e1")
        # land strictly on the admissible side
        while target(e1) < 0:
            e1 = float(np.nextafter(e1, 0.0))
    log_e2 = math.log(0.5) + min(float(log_g_curve(e1, eps, params)), math.log(e1))
    if not math.isfinite(log_e2):
        raise RectConstructionError(f"lower edge underflows even in log form at eps={eps:g}")
    return Rect(e1=e1, p1=p1, log_e2=log_e2, log_p2=log_p2)


# ---------------------------------------------------------------------------
# sign verification

EDGE_CONDITIONS = {
    "right": "P <= 0 on x1 = p1",
    "left": "P >= 0 on x1 = e1",
    "top": "Q <= 0 on x2 = p2",
    "bottom": "Q >= 0 on x2 = e2",
}


@dataclass
class EdgeCheck:
    edge: str
    condition: str
    worst_margin: float
    argmin: tuple[float, float, float]
    tolerance: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "worst_margin": self.worst_margin,
            "argmin": {"t": self.argmin[0], "x1": self.argmin[1], "log_x2": self.argmin[2]},
            "tolerance": self.tolerance,
            "violations": self.violations,
            "passed": self.passed,
        }


@dataclass
class SignReport:
    eps: float
    rect: Rect
    edges: dict[str, EdgeCheck]
    t_samples: int
    edge_samples: int

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.edges.values())

    @property
    def violations(self) -> int:
        return sum(e.violations for e in self.edges.values())

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "rect": self.rect.as_dict(),
            "t_samples": self.t_samples,
            "edge_samples": self.edge_samples,
            "passed": self.passed,
            "violations": self.violations,
            "edges": {k: v.as_dict() for k, v in self.edges.items()},
            "formulas": {"f_lower": F_LOWER_FORMULA, "f_upper": F_UPPER_FORMULA},
            "margin_units": {"left/right": "P", "top/bottom": "Q/x2 (per-capita rate, sign of Q)"},
        }


def _edge_check(name, margin, tt, x1, y, tol_rel):
    # margin >= 0 means the condition holds
    scale = float(np.max(np.abs(margin))) or 1.0
    tol = tol_rel * scale
    i = int(np.argmin(margin))
    return EdgeCheck(
        edge=name,
        condition=EDGE_CONDITIONS[name],
        worst_margin=float(margin.flat[i]),
        argmin=(float(tt.flat[i]), float(x1.flat[i]), float(y.flat[i])),
        tolerance=tol,
        violations=int(np.count_nonzero(margin < -tol)),
    )


def verify_signs(rect: Rect, eps: float, params: ModelParams, t_samples: int = 256,
                 edge_samples: int = 2500, tol_rel: float = 1e-12) -> SignReport:
    """Sample the four edges over one period and report worst-case margins.

    The vertical edges are sampled uniformly in ``log x2``; Q conditions are
    evaluated as the per-capita rate ``Q/x2``, which has the sign of Q and
    stays finite where ``x2`` itself underflows.
    """
    if not eps > 0:
        raise ParameterError("sign conditions are checked for eps > 0")
    field = PerturbedField(params, eps)
    chart = LogChartField(field)
    e1, p1, ly0, ly1 = rect.chart_bounds
    ts = np.linspace(0.0, PERIOD, t_samples, endpoint=False) if t_samples > 1 else np.zeros(1)
    ys = np.linspace(ly0, ly1, edge_samples)
    xs = np.linspace(e1, p1, edge_samples)

    edges = {}
    for name, x1_val, sign in (("right", p1, -1.0), ("left", e1, 1.0)):
        T, Y = np.meshgrid(ts, ys, indexing="ij")
        X1 = np.full_like(T, x1_val)
        margin = sign * field.P(T, X1, np.exp(Y))
        edges[name] = _edge_check(name, margin, T, X1, Y, tol_rel)
    # Q does not depend on t; the t axis is still swept so margins line up
    for name, y_val, sign in (("top", ly1, -1.0), ("bottom", ly0, 1.0)):
        T, X1 = np.meshgrid(ts, xs, indexing="ij")
        Y = np.full_like(T, y_val)
        margin = sign * chart.per_capita_q(X1, Y)
        edges[name] = _edge_check(name, margin, T, X1, Y, tol_rel)
    return SignReport(eps=eps, rect=rect, edges=edges, t_samples=t_samples, edge_samples=edge_samples)


def guard_curve_samples(eps: float, params: ModelParams, x1_max: float | None = None, n: int = 400):
    """Samples of ``f_lower``, ``f_upper`` and ``log g`` for plotting."""
    x1_max = x1_max or 1.1 * find_p(eps, params)
    xs = np.geomspace(x1_max * 1e-4, x1_max, n)
    cols = {"x1": xs, "f_lower": f_lower(xs, eps, params), "f_upper": f_upper(xs, eps, params)}
    if eps > 0:
        cols["log_g"] = log_g_curve(xs, eps, params)
    return cols
