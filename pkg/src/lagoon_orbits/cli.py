"""Command-line front end: ``lagoon-orbits <command> [--config FILE] [overrides]``.

Every command reads one declarative config file (optional) plus flag
overrides, prints a short human summary and, with ``--output-dir``, writes a
structured report that embeds the fully resolved configuration.

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .degree import DegreeOptions, displacement_degree, frozen_field_degree
from .errors import NumericalError, ParameterError
from .guards import (
    DEFAULT_SAFETY,
    GuardConstants,
    build_rect,
    f_lower,
    f_upper,
    guard_curve_samples,
    hypothesis_threshold,
    log_g_curve,
    verify_signs,
)
from .model import PARAM_NAMES, ModelParams, PerturbedField, params_from_mapping
from .ode import IntegratorOptions
from .periodic import (
    DEFAULT_ETA,
    ShootingOptions,
    comparison_check,
    continuation_path,
    default_schedule,
    shoot,
    verify_bounds,
)
from .report import SvgPlot, dumps, fmt6, write_csv, write_report

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    eps: float = 0.3
    schedule: tuple[float, ...] = ()
    safety: float = DEFAULT_SAFETY
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = 0.1
    final_rtol: float = 1e-12
    shoot_tol: float = 1e-10
    t_samples: int = 256
    edge_samples: int = 10_000
    degree_budget: int = 2 ** 16
    eta: float = DEFAULT_ETA
    grid_nx: int = 25
    grid_ny: int = 25
    grid_bounds: tuple[float, ...] = ()
    log_x2: bool = True
    overlay_times: tuple[float, ...] = ()
    curve_samples: int = 400
    output_dir: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.eps) or self.eps < 0:
            raise ParameterError(f"eps must be a nonnegative real, got {self.eps}")
        for name in ("safety", "rtol", "atol", "max_step", "final_rtol", "shoot_tol", "eta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive, got {value}")
        if self.safety <= 1:
            raise ParameterError("safety must exceed 1")
        for name in ("t_samples", "edge_samples", "degree_budget", "grid_nx", "grid_ny", "curve_samples"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if self.schedule:
            s = self.schedule
            if any(b >= a for a, b in zip(s, s[1:])) or s[-1] != 0.0 or min(s) < 0:
                raise ParameterError("schedule must be strictly decreasing and end at 0")
        if self.grid_bounds and len(self.grid_bounds) != 4:
            raise ParameterError("grid_bounds needs four numbers: x1_min x1_max x2_min x2_max")
        if self.output_dir is not None:
            out = Path(self.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            if not out.is_dir():
                raise ParameterError(f"output directory {out} is not writable")

    @property
    def integrator(self) -> IntegratorOptions:
        return IntegratorOptions(rtol=self.rtol, atol=self.atol, max_step=self.max_step)

    @property
    def shooting(self) -> ShootingOptions:
        return ShootingOptions(tol=self.shoot_tol, integrator=self.integrator)

    @property
    def final_shooting(self) -> ShootingOptions:
        return replace(self.shooting, integrator=replace(self.integrator, rtol=self.final_rtol,
                                                         atol=min(self.atol, self.final_rtol)))

    def resolved(self) -> dict:
        d = asdict(self)
        d["params"] = self.params.as_dict()
        d["schedule"] = list(self.schedule or default_schedule(self.eps))
        for key in ("grid_bounds", "overlay_times"):
            d[key] = list(d[key])
        return d


_FLOAT_KEYS = ("eps", "safety", "rtol", "atol", "max_step", "final_rtol", "shoot_tol", "eta")
_INT_KEYS = ("t_samples", "edge_samples", "degree_budget", "grid_nx", "grid_ny", "curve_samples")
_LIST_KEYS = ("schedule", "grid_bounds", "overlay_times")


def _float_list(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ParameterError(f"{key} must be a list of decimal reals, got {text!r}") from None


def _run_options(raw: dict[str, str]) -> dict:
    out: dict = {}
    for key, value in raw.items():
        try:
            if key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key in _LIST_KEYS:
                out[key] = _float_list(value, key)
            elif key == "log_x2":
                out[key] = str(value).strip().lower() in ("1", "true", "yes", "on")
            elif key == "output_dir":
                out[key] = str(value)
            else:
                raise ParameterError(f"unknown run option {key!r}")
        except ValueError:
            raise ParameterError(f"run option {key} has an invalid value {value!r}") from None
    return out


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file, preset and command-line overrides into a RunConfig."""
    param_raw: dict[str, str] = {}
    run_raw: dict[str, str] = {}
    if args.config:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        if not parser.read(args.config):
            raise ParameterError(f"cannot read config file {args.config}")
        for section in parser.sections():
            if section not in ("params", "run"):
                raise ParameterError(f"unknown config section [{section}]")
        if parser.has_section("params"):
            param_raw.update(parser.items("params"))
        if parser.has_section("run"):
            run_raw.update(parser.items("run"))
    if args.preset or not param_raw:
        param_raw.setdefault("preset", args.preset or "corollary")
        if args.preset:
            param_raw["preset"] = args.preset
    for name in PARAM_NAMES:
        value = getattr(args, f"p_{name}", None)
        if value is not None:
            param_raw[name] = value
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        key = key.strip()
        (param_raw if key in PARAM_NAMES or key == "preset" else run_raw)[key] = value.strip()
    for key in ("eps", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            run_raw[key] = value
    params = params_from_mapping(param_raw)
    return RunConfig(params=params, **_run_options(run_raw))


# ---------------------------------------------------------------------------
# commands; each returns (exit code, report dict, summary lines)

def cmd_constants(cfg: RunConfig):
    c = GuardConstants.from_params(cfg.params)
    threshold = hypothesis_threshold(cfg.params)
    report = {
        "u_N1": c.u_N1,
        "p_N1": c.p_N1,
        "r1": c.r1,
        "r_N2": c.r_N2,
        "r_N2_over_lambda3": c.r_N2 / cfg.params.lambda3,
        "hypothesis_threshold": threshold,
        "hypothesis_lhs (M - N)": cfg.params.M - cfg.params.N,
        "hypothesis_holds": c.hypothesis_holds,
    }
    lines = [f"{k} = {fmt6(v)}" for k, v in report.items()]
    if not c.hypothesis_holds:
        lines.append("warning: M - N does not exceed the threshold; the existence hypothesis fails")
    return EXIT_OK, report, lines


def cmd_region(cfg: RunConfig):
    eps = _need_positive_eps(cfg)
    rect = build_rect(eps, cfg.params, cfg.safety)
    signs = verify_signs(rect, eps, cfg.params, t_samples=cfg.t_samples, edge_samples=cfg.edge_samples)
    report = {"rect": rect.as_dict(), "signs": signs.as_dict()}
    if cfg.output_dir:
        curves = guard_curve_samples(eps, cfg.params, n=cfg.curve_samples)
        write_csv(Path(cfg.output_dir) / "guard_curves.csv", list(curves), list(curves.values()))
    lines = [
        f"rectangle: x1 in [{fmt6(rect.e1)}, {fmt6(rect.p1)}], "
        f"log x2 in [{fmt6(rect.log_e2)}, {fmt6(rect.log_p2)}]",
        f"sign conditions: {'all pass' if signs.passed else f'{signs.violations} violations'}",
    ]
    for name, edge in signs.edges.items():
        lines.append(f"  {name:6s} {edge.condition:24s} worst margin {fmt6(edge.worst_margin)}")
    return (EXIT_OK if signs.passed else EXIT_NUMERICAL), report, lines


def cmd_degree(cfg: RunConfig):
    eps = _need_positive_eps(cfg)
    rect = build_rect(eps, cfg.params, cfg.safety)
    opts = DegreeOptions(budget=cfg.degree_budget)
    frozen = frozen_field_degree(eps, cfg.params, rect, opts)
    disp = displacement_degree(eps, cfg.params, rect, cfg.integrator, opts)
    agree = frozen.degree == disp.degree
    report = {
        "rect": rect.as_dict(),
        "frozen_field_degree": frozen.as_dict(),
        "displacement_degree": disp.as_dict(),
        "agree": agree,
    }
    if cfg.output_dir:
        frozen.to_csv(Path(cfg.output_dir) / "degree_frozen_boundary.csv")
        disp.to_csv(Path(cfg.output_dir) / "degree_displacement_boundary.csv")
    lines = [
        f"frozen field degree: {frozen.degree} (winding residual {fmt6(frozen.residual)}, "
        f"{frozen.samples_used} samples)",
        f"displacement degree: {disp.degree} (winding residual {fmt6(disp.residual)}, "
        f"{disp.samples_used} samples)",
    ]
    # nonzero and equal degrees are what certify a fixed point in the rectangle
    ok = agree and frozen.degree != 0
    return (EXIT_OK if ok else EXIT_NUMERICAL), report, lines


def cmd_find_periodic(cfg: RunConfig):
    eps0 = _need_positive_eps(cfg)
    p = cfg.params
    consts = GuardConstants.from_params(p)
    lines = []
    if not consts.hypothesis_holds:
        lines.append("warning: existence hypothesis fails for these parameters; results are flagged")
        print(lines[-1], file=sys.stderr)
    rect = build_rect(eps0, p, cfg.safety, require_hypothesis=False)
    try:
        start = shoot(rect.center, eps0, p, cfg.shooting)
    except NumericalError as exc:
        raise type(exc)(f"stage eps={eps0:g} (initial shot): {exc}") from exc
    schedule = list(cfg.schedule) or default_schedule(eps0)
    stages = continuation_path(start, schedule, p, cfg.shooting, cfg.final_shooting)
    orbit = stages[-1]
    bounds = verify_bounds(orbit, p, cfg.eta)
    comparison = comparison_check(orbit, p)
    periodicity = orbit.periodicity_error()
    report = {
        "hypothesis_holds": consts.hypothesis_holds,
        "start_rect": rect.as_dict(),
        "stages": [{"eps": s.eps, "x0": s.x0, "residual": s.residual, "iterations": s.iterations}
                   for s in stages],
        "orbit": orbit.as_dict(),
        "periodicity_error": periodicity,
        "bounds": bounds.as_dict(),
        "comparison": comparison.as_dict(),
    }
    if cfg.output_dir:
        orbit.trajectory.to_csv(Path(cfg.output_dir) / "orbit.csv", n=1201)
    lines += [
        f"continuation: {len(stages)} stages from eps={fmt6(eps0)} to eps={fmt6(orbit.eps)}",
        f"x(0) = ({fmt6(orbit.x0[0])}, {fmt6(orbit.x0[1])}), |x(12) - x(0)| = {fmt6(periodicity)}",
        f"x1 range [{fmt6(bounds.x1_range[0])}, {fmt6(bounds.x1_range[1])}] <= {fmt6(bounds.upper_bound_x1)}",
        f"x2 range [{fmt6(bounds.x2_range[0])}, {fmt6(bounds.x2_range[1])}] <= {fmt6(bounds.upper_bound_x2)}",
        f"multipliers: {fmt6(complex(orbit.multipliers[0]))}, {fmt6(complex(orbit.multipliers[1]))}",
        f"bounds satisfied: {bounds.satisfied}; comparison dominated: {comparison.dominated}",
    ]
    ok = bounds.satisfied and comparison.dominated and periodicity < 1e-8
    return (EXIT_OK if ok else EXIT_NUMERICAL), report, lines


def cmd_field_plot(cfg: RunConfig):
    p, eps = cfg.params, cfg.eps
    field = PerturbedField(p, eps)
    rect = build_rect(eps, p, cfg.safety) if eps > 0 else None
    x1_lo, x1_hi, x2_lo, x2_hi = _grid_bounds(cfg, rect)
    x1 = np.linspace(x1_lo, x1_hi, cfg.grid_nx)
    x2 = np.geomspace(x2_lo, x2_hi, cfg.grid_ny) if cfg.log_x2 else np.linspace(x2_lo, x2_hi, cfg.grid_ny)
    X1, X2 = (a.ravel() for a in np.meshgrid(x1, x2))
    times = cfg.overlay_times or (0.0,)
    report = {"eps": eps, "grid": {"x1": [x1_lo, x1_hi, cfg.grid_nx], "x2": [x2_lo, x2_hi, cfg.grid_ny],
                                   "log_x2": cfg.log_x2}, "times": list(times), "files": []}
    if rect is not None:
        report["rect"] = rect.as_dict()
    lines = [f"field grid {cfg.grid_nx} x {cfg.grid_ny} at t in {[fmt6(t) for t in times]}"]
    if not cfg.output_dir:
        return EXIT_OK, report, lines + ["no --output-dir given; nothing written"]
    out = Path(cfg.output_dir)
    ylabel = "log x2" if cfg.log_x2 else "x2"
    yfun = np.log if cfg.log_x2 else (lambda v: v)
    plot = SvgPlot((x1_lo, x1_hi), (yfun(x2_lo), yfun(x2_hi)), xlabel="x1", ylabel=ylabel,
                   title=f"eps = {fmt6(eps)}")
    palette = ["#1f4e9a", "#b5651d", "#2e8b57", "#8b008b", "#555555"]
    for i, t in enumerate(times):
        V = field.rhs(t, np.column_stack([X1, X2]))
        norm = np.hypot(V[:, 0], V[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            U = np.where(norm[:, None] > 0, V / norm[:, None], 0.0)
        name = "field.csv" if len(times) == 1 else f"field_t{fmt6(t)}.csv"
        write_csv(out / name, ["x1", "x2", "vx", "vy"], [X1, X2, U[:, 0], U[:, 1]])
        report["files"].append(name)
        # direction in plot coordinates: d(log x2) = dx2 / x2
        vy = V[:, 1] / X2 if cfg.log_x2 else V[:, 1]
        plot.arrows(X1, yfun(X2), V[:, 0], vy, color=palette[i % len(palette)])
    xs = np.linspace(max(x1_lo, 1e-9 * x1_hi), x1_hi, cfg.curve_samples)
    xs = xs[xs > 0]
    curves = [("f_lower", f_lower(xs, eps, p), "#c0392b"), ("f_upper", f_upper(xs, eps, p), "#e67e22")]
    for _, vals, color in curves:
        with np.errstate(invalid="ignore", divide="ignore"):
            plot.polyline(xs, np.log(np.where(vals > 0, vals, np.nan)) if cfg.log_x2 else vals, color=color)
    legend = [(n, c) for n, _, c in curves]
    if eps > 0:
        lg = log_g_curve(xs, eps, p)
        plot.polyline(xs, lg if cfg.log_x2 else np.exp(lg), color="#16a085", dash="5,3")
        legend.append(("g", "#16a085"))
    if rect is not None:
        if cfg.log_x2:
            plot.rect(rect.e1, rect.p1, rect.log_e2, rect.log_p2, color="red")
        else:
            plot.rect(rect.e1, rect.p1, rect.e2, rect.p2, color="red")
        legend.append(("rectangle", "red"))
    plot.legend(legend)
    plot.save(out / "field.svg")
    report["files"].append("field.svg")
    lines.append(f"wrote {', '.join(report['files'])} to {out}")
    return EXIT_OK, report, lines


def cmd_verify(cfg: RunConfig):
    """region, degree, find-periodic and bounds in sequence."""
    code = EXIT_OK
    report, lines = {}, []
    for name, fn in (("region", cmd_region), ("degree", cmd_degree), ("find_periodic", cmd_find_periodic)):
        c, r, ls = fn(cfg)
        report[name] = r
        lines.append(f"[{name}] {'ok' if c == EXIT_OK else 'FAILED'}")
        lines += [f"  {s}" for s in ls]
        code = max(code, c)
    return code, report, lines


COMMANDS = {
    "constants": cmd_constants,
    "region": cmd_region,
    "degree": cmd_degree,
    "find-periodic": cmd_find_periodic,
    "field-plot": cmd_field_plot,
    "verify": cmd_verify,
}


def _need_positive_eps(cfg: RunConfig) -> float:
    if cfg.eps <= 0:
        raise ParameterError("this command needs eps > 0 (the rectangle degenerates at eps = 0)")
    return cfg.eps


def _grid_bounds(cfg: RunConfig, rect):
    if cfg.grid_bounds:
        x1_lo, x1_hi, x2_lo, x2_hi = cfg.grid_bounds
    elif rect is not None:
        x1_lo, x1_hi = 0.0, 1.05 * rect.p1
        x2_lo, x2_hi = max(rect.e2, 1e-300), 1.2 * rect.p2
        x2_lo = x2_lo if x2_lo > 0 else 1e-300
    else:
        c = GuardConstants.from_params(cfg.params)
        x1_lo, x1_hi = 0.0, 1.05 * c.p_N1
        x2_lo, x2_hi = 1e-3, 2.0 * max(1.0, c.r_N2)
    if not (x1_hi >= x1_lo >= 0 and x2_hi >= x2_lo):
        raise ParameterError("grid bounds must be ordered and x1 nonnegative")
    if cfg.log_x2 and x2_lo <= 0:
        raise ParameterError("log_x2 grids need x2_min > 0")
    return float(x1_lo), float(x1_hi), float(x2_lo), float(x2_hi)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagoon-orbits", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name.replace("-", " ")).strip().split("\n")[0])
        p.add_argument("-c", "--config", help="config file with [params] and [run] sections")
        p.add_argument("--preset", help="built-in parameter preset (default: corollary)")
        p.add_argument("--eps", help="regularization parameter eps")
        for pname in PARAM_NAMES:
            p.add_argument(f"--{pname}", dest=f"p_{pname}", metavar="X", help=argparse.SUPPRESS
                           if pname.startswith("lambda") or pname == "k" else f"override {pname}")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any parameter or run option")
        p.add_argument("-o", "--output-dir", dest="output_dir", help="directory for reports and CSV/SVG files")
        p.add_argument("--json", action="store_true", help="print the structured report instead of the summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        code, report, lines = COMMANDS[args.command](cfg)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    full = {"command": args.command, "config": cfg.resolved(), "exit_code": code, "result": report}
    if cfg.output_dir:
        write_report(Path(cfg.output_dir) / f"{args.command}.json", full)
    if args.json:
        sys.stdout.write(dumps(full))
    else:
        print("\n".join(lines))
    return code


if __name__ == "__main__":
    sys.exit(main())
