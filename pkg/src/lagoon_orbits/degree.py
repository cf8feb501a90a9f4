"""Brouwer degree of planar fields on rectangles via boundary winding numbers.

For the lagoon model both degrees are computed in the log chart
``z = (x1, log x2)``:

* the frozen field ``(P(0, .), Q)`` is replaced by ``(P(0, .), Q/x2)``, a
  positive diagonal rescaling, which is homotopic to it through nonvanishing
  fields on the boundary;
* the displacement ``x - Omega(x)`` becomes ``z - Omega_chart(z)``, the
  displacement of the conjugated return map, which has the same fixed points
  with the same indices.

Since the chart is orientation preserving, neither change alters the degree.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NearZeroOnBoundaryError, RefinementExhaustedError
from .guards import Rect
from .model import LogChartField, ModelParams, PerturbedField
from .ode import IntegratorOptions, return_map_chart

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DegreeOptions:
    initial_per_edge: int = 32
    budget: int = 2 ** 16
    max_increment: float = math.pi / 2
    norm_floor: float = 1e-10
    residual_tol: float = 0.01


@dataclass
class DegreeResult:
    degree: int
    total_angle: float
    min_norm: float
    samples_used: int
    max_norm: float = float("nan")
    rounds: int = 0
    boundary: dict = field(default_factory=dict, repr=False)

    @property
    def residual(self) -> float:
        return abs(self.total_angle / TWO_PI - self.degree)

    def as_dict(self) -> dict:
        return {
            "degree": self.degree,
            "total_angle": self.total_angle,
            "winding_residual": self.residual,
            "min_norm": self.min_norm,
            "max_norm": self.max_norm,
            "samples_used": self.samples_used,
            "refinement_rounds": self.rounds,
        }

    def to_csv(self, path: str | Path) -> None:
        """Boundary samples in traversal order: ``s, u, w, vu, vw, dtheta``."""
        b = self.boundary
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "u", "w", "vu", "vw", "dtheta"])
            for row in zip(b["s"], b["points"][:, 0], b["points"][:, 1], b["values"][:, 0],
                           b["values"][:, 1], b["dtheta"]):
                w.writerow([f"{v:.17g}" for v in row])


def _box(rect) -> tuple[float, float, float, float]:
    if isinstance(rect, Rect):
        return rect.bounds
    x0, x1, y0, y1 = map(float, rect)
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate box {rect}")
    return x0, x1, y0, y1


def _boundary_points(s: np.ndarray, box) -> np.ndarray:
    """Counterclockwise parametrization, one unit of ``s`` per edge."""
    x0, x1, y0, y1 = box
    edge = np.minimum(np.floor(s).astype(int), 3)
    u = s - edge
    pts = np.empty((s.size, 2))
    # bottom: left to right
    m = edge == 0
    pts[m] = np.column_stack([x0 + u[m] * (x1 - x0), np.full(m.sum(), y0)])
    # right: bottom to top
    m = edge == 1
    pts[m] = np.column_stack([np.full(m.sum(), x1), y0 + u[m] * (y1 - y0)])
    # top: right to left
    m = edge == 2
    pts[m] = np.column_stack([x1 - u[m] * (x1 - x0), np.full(m.sum(), y1)])
    # left: top to bottom
    m = edge == 3
    pts[m] = np.column_stack([np.full(m.sum(), x0), y1 - u[m] * (y1 - y0)])
    return pts


def _increments(V: np.ndarray) -> np.ndarray:
    """Signed angle from each vector to the next, closing the loop."""
    W = np.roll(V, -1, axis=0)
    cross = V[:, 0] * W[:, 1] - V[:, 1] * W[:, 0]
    dot = V[:, 0] * W[:, 0] + V[:, 1] * W[:, 1]
    return np.arctan2(cross, dot)


def winding_degree(field: Callable[[np.ndarray], np.ndarray], rect, opts: DegreeOptions | None = None) -> DegreeResult:
    """Degree of ``field`` on a box from the winding of its boundary values.

    ``field`` maps an ``(n, 2)`` array of points to an ``(n, 2)`` array of
    vectors.  ``rect`` is a :class:`Rect` (natural coordinates) or a tuple
    ``(x_lo, x_hi, y_lo, y_hi)``.  Intervals whose angle increment reaches
    ``opts.max_increment`` are bisected until none is left.
    """
    opts = opts or DegreeOptions()
    box = _box(rect)
    n0 = opts.initial_per_edge
    s = np.arange(4 * n0) / n0
    V = np.asarray(field(_boundary_points(s, box)), dtype=float)
    rounds = 0
    while True:
        norms = np.hypot(V[:, 0], V[:, 1])
        if not np.all(np.isfinite(norms)):
            raise NearZeroOnBoundaryError("field is not finite on the boundary")
        scale = float(norms.max())
        floor = opts.norm_floor * scale
        if scale == 0.0 or norms.min() <= floor:
            i = int(np.argmin(norms))
            raise NearZeroOnBoundaryError(
                f"|field| = {norms[i]:.3g} <= floor {floor:.3g} at boundary point "
                f"{tuple(_boundary_points(s[i:i + 1], box)[0])}; degree undefined"
            )
        dtheta = _increments(V)
        bad = np.flatnonzero(np.abs(dtheta) >= opts.max_increment)
        if bad.size == 0:
            break
        s_next = np.append(s[1:], 4.0)
        mid = 0.5 * (s[bad] + s_next[bad])
        if s.size + mid.size > opts.budget:
            raise RefinementExhaustedError(
                f"need {s.size + mid.size} boundary samples, budget is {opts.budget}"
            )
        V_mid = np.asarray(field(_boundary_points(mid, box)), dtype=float)
        order = np.argsort(np.concatenate([s, mid]), kind="stable")
        s = np.concatenate([s, mid])[order]
        V = np.concatenate([V, V_mid])[order]
        rounds += 1
    total = float(np.sum(dtheta))
    degree = int(round(total / TWO_PI))
    if abs(total / TWO_PI - degree) >= opts.residual_tol:
        raise NearZeroOnBoundaryError(f"winding {total / TWO_PI:.6f} is not close to an integer")
    return DegreeResult(
        degree=degree,
        total_angle=total,
        min_norm=float(norms.min()),
        samples_used=int(s.size),
        max_norm=scale,
        rounds=rounds,
        boundary={"s": s, "points": _boundary_points(s, box), "values": V, "dtheta": dtheta},
    )


def scaled_frozen_field(eps: float, params: ModelParams, negate: bool = False):
    """Frozen field in the log chart, second component divided by x2."""
    chart = LogChartField(PerturbedField(params, eps))
    sign = -1.0 if negate else 1.0

    def fun(Z):
        x1, y = Z[:, 0], Z[:, 1]
        return sign * np.column_stack([chart.field.P(0.0, x1, np.exp(y)), chart.per_capita_q(x1, y)])

    return fun


def displacement_field(eps: float, params: ModelParams, integrator: IntegratorOptions | None = None):
    """``z - Omega_chart(z)`` on batches of chart points."""
    field = PerturbedField(params, eps)

    def fun(Z):
        return Z - return_map_chart(Z, field, integrator)

    return fun


def frozen_field_degree(eps: float, params: ModelParams, rect: Rect, opts: DegreeOptions | None = None,
                        negate: bool = False) -> DegreeResult:
    return winding_degree(scaled_frozen_field(eps, params, negate), rect.chart_bounds, opts)


def displacement_degree(eps: float, params: ModelParams, rect: Rect,
                        integrator: IntegratorOptions | None = None,
                        opts: DegreeOptions | None = None) -> DegreeResult:
    return winding_degree(displacement_field(eps, params, integrator), rect.chart_bounds, opts)
