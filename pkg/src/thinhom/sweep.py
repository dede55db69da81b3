"""Run configurations, epsilon sweeps and their output files."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .correctors import corrector, error_metrics
from .geometry import BoundaryProfile, PLaplaceExponent, ThinDomainSpec, regime_of
from .homogenization import (LimitProblem, closed_form_q, effective_coefficient, limit_forcing,
                             q_resonant, solve_limit)
from .mesh import mesh_interval, mesh_thin_domain
from .plaplace import IntervalFunction, SolverSettings, solve_neumann

CSV_COLUMNS = ("epsilon", "dofs", "q", "q_energy_form", "lp_error", "corrector_error",
               "v_avg_error", "grad_rminus_error", "grad_rplus_norm", "newton_iters", "wall_time_s")


class ConfigParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigValidationError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ForcingSpec:
    """Named x-only forcing: constant c, A cos(k pi x), or a polynomial sum c_i x^i."""
    kind: str = "cosine"
    value: float = 1.0
    amplitude: float = 1.0
    frequency: float = 1.0
    coefficients: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        if self.kind == "cosine":
            return self.amplitude * np.cos(self.frequency * np.pi * x)
        return np.polynomial.polynomial.polyval(x, np.asarray(self.coefficients, dtype=float))

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self.value:.12g})"
        if self.kind == "cosine":
            return f"{self.amplitude:.12g}*cos({self.frequency:.12g}*pi*x)"
        return "poly(" + ",".join(f"{c:.12g}" for c in self.coefficients) + ")"


@dataclass(frozen=True)
class RunConfig:
    profile: BoundaryProfile
    p: float
    alpha: float
    epsilon_list: tuple
    forcing: ForcingSpec = ForcingSpec()
    mesh_c: float = 1.0            # h = c * eps^alpha * L / 8
    limit_elements: int = 4096     # elements of the 1D limit mesh
    cell_h: Optional[float] = None  # cell mesh size for q in the resonant regime
    settings: SolverSettings = field(default_factory=SolverSettings)
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    record_wall_time: bool = False

    @property
    def exponent(self) -> PLaplaceExponent:
        return PLaplaceExponent(self.p)

    @property
    def regime(self) -> str:
        return regime_of(self.alpha)

    def spec(self, epsilon: float) -> ThinDomainSpec:
        return ThinDomainSpec(epsilon, self.alpha, self.profile)

    def mesh_h(self, epsilon: float) -> float:
        return self.mesh_c * epsilon ** self.alpha * self.profile.period / 8

    def resonant_cell_h(self) -> float:
        # the thin mesh tiles cell meshes of size h / eps = c L / 8; using the same
        # cell mesh for q makes the discrete problems homogenize to the discrete q
        return self.cell_h if self.cell_h is not None else self.mesh_c * self.profile.period / 8


_KEYS = {
    "profile.kind", "profile.period", "profile.breakpoints", "profile.values",
    "problem.p", "problem.alpha",
    "sweep.epsilon_list",
    "forcing.kind", "forcing.value", "forcing.amplitude", "forcing.frequency", "forcing.coefficients",
    "mesh.c", "mesh.limit_elements", "mesh.cell_h",
    "solver.delta_schedule", "solver.newton_rtol", "solver.newton_atol", "solver.max_newton",
    "solver.stage_rtol", "solver.backtrack", "solver.armijo",
    "output.dir", "output.wall_time",
    "run.seed", "run.threads",
}


def parse_config_text(text: str) -> RunConfig:
    raw = {}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigParseError(lineno, "expected 'section.key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key.count(".") != 1 or not all(key.split(".")):
            raise ConfigParseError(lineno, f"malformed key {key!r}")
        if key not in _KEYS:
            raise ConfigParseError(lineno, f"unknown key {key!r}")
        if key in raw:
            raise ConfigParseError(lineno, f"duplicate key {key!r}")
        if not value:
            raise ConfigParseError(lineno, f"missing value for {key!r}")
        raw[key] = value
        lines[key] = lineno
    return _build_config(raw, lines)


def parse_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())


def _num(raw, key, lines, conv=float, default=None):
    if key not in raw:
        if default is None:
            raise ConfigValidationError(key, "required")
        return default
    try:
        return conv(raw[key])
    except ValueError:
        raise ConfigParseError(lines[key], f"{key}: cannot read {raw[key]!r} as a number") from None


def _list(raw, key, lines, default=None):
    if key not in raw:
        if default is None:
            raise ConfigValidationError(key, "required")
        return default
    try:
        return tuple(float(v) for v in raw[key].split(",") if v.strip())
    except ValueError:
        raise ConfigParseError(lines[key], f"{key}: cannot read {raw[key]!r} as a number list") from None


def _build_config(raw: dict, lines: dict) -> RunConfig:
    kind = raw.get("profile.kind", "constant")
    period = _num(raw, "profile.period", lines, default=1.0)
    values = _list(raw, "profile.values", lines, default=(1.0,))
    bps = _list(raw, "profile.breakpoints", lines, default=())
    try:
        if kind == "constant":
            profile = BoundaryProfile.constant(values[0], period)
        elif kind == "cosine":
            profile = BoundaryProfile.cosine(*values, period=period)
        else:
            profile = BoundaryProfile(kind, period, bps, values)
    except (ValueError, TypeError) as exc:
        raise ConfigValidationError("profile", str(exc)) from None

    p = _num(raw, "problem.p", lines)
    try:
        PLaplaceExponent(p)
    except ValueError as exc:
        raise ConfigValidationError("p", str(exc)) from None
    alpha = _num(raw, "problem.alpha", lines)
    if not alpha > 0:
        raise ConfigValidationError("alpha", "alpha must be positive")

    eps = _list(raw, "sweep.epsilon_list", lines)
    if not eps:
        raise ConfigValidationError("epsilon_list", "at least one value required")
    if any(not 0 < e < 1 for e in eps):
        raise ConfigValidationError("epsilon_list", "values must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigValidationError("epsilon_list", "values must be strictly decreasing")

    fk = raw.get("forcing.kind", "cosine")
    if fk not in ("constant", "cosine", "polynomial"):
        raise ConfigValidationError("forcing.kind", f"unknown forcing {fk!r}")
    forcing = ForcingSpec(
        fk,
        value=_num(raw, "forcing.value", lines, default=1.0),
        amplitude=_num(raw, "forcing.amplitude", lines, default=1.0),
        frequency=_num(raw, "forcing.frequency", lines, default=1.0),
        coefficients=_list(raw, "forcing.coefficients", lines, default=()),
    )
    if fk == "polynomial" and not forcing.coefficients:
        raise ConfigValidationError("forcing.coefficients", "required for polynomial forcing")

    base = SolverSettings()
    try:
        settings = SolverSettings(
            delta_schedule=_list(raw, "solver.delta_schedule", lines, default=base.delta_schedule),
            newton_rtol=_num(raw, "solver.newton_rtol", lines, default=base.newton_rtol),
            newton_atol=_num(raw, "solver.newton_atol", lines, default=base.newton_atol),
            max_newton=_num(raw, "solver.max_newton", lines, int, default=base.max_newton),
            stage_rtol=_num(raw, "solver.stage_rtol", lines, default=base.stage_rtol),
            backtrack=_num(raw, "solver.backtrack", lines, default=base.backtrack),
            armijo=_num(raw, "solver.armijo", lines, default=base.armijo),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigParseError):
            raise
        raise ConfigValidationError("delta_schedule", str(exc)) from None

    mesh_c = _num(raw, "mesh.c", lines, default=1.0)
    if not 0 < mesh_c <= 2:
        raise ConfigValidationError("mesh.c", "must lie in (0, 2]")
    n1 = _num(raw, "mesh.limit_elements", lines, int, default=4096)
    if n1 < 2:
        raise ConfigValidationError("mesh.limit_elements", "must be at least 2")
    cell_h = _num(raw, "mesh.cell_h", lines, default=-1.0)
    threads = _num(raw, "run.threads", lines, int, default=1)
    if threads < 1:
        raise ConfigValidationError("threads", "must be at least 1")
    wall = raw.get("output.wall_time", "false").lower()
    if wall not in ("true", "false"):
        raise ConfigValidationError("output.wall_time", "must be true or false")
    return RunConfig(profile, p, alpha, eps, forcing, mesh_c, n1,
                     None if cell_h < 0 else cell_h, settings,
                     raw.get("output.dir", "out"), _num(raw, "run.seed", lines, int, default=0),
                     threads, wall == "true")


def format_config(cfg: RunConfig) -> str:
    """Config text that parses back to ``cfg``."""
    fl = lambda xs: ", ".join(repr(float(x)) for x in xs)
    pr = cfg.profile
    out = [f"profile.kind = {pr.kind}", f"profile.period = {pr.period!r}",
           f"profile.values = {fl(pr.values)}"]
    if pr.kind not in ("constant", "cosine"):
        out.append(f"profile.breakpoints = {fl(pr.breakpoints)}")
    out += [f"problem.p = {cfg.p!r}", f"problem.alpha = {cfg.alpha!r}",
            f"sweep.epsilon_list = {fl(cfg.epsilon_list)}",
            f"forcing.kind = {cfg.forcing.kind}", f"forcing.value = {cfg.forcing.value!r}",
            f"forcing.amplitude = {cfg.forcing.amplitude!r}",
            f"forcing.frequency = {cfg.forcing.frequency!r}"]
    if cfg.forcing.coefficients:
        out.append(f"forcing.coefficients = {fl(cfg.forcing.coefficients)}")
    s = cfg.settings
    out += [f"mesh.c = {cfg.mesh_c!r}", f"mesh.limit_elements = {cfg.limit_elements}"]
    if cfg.cell_h is not None:
        out.append(f"mesh.cell_h = {cfg.cell_h!r}")
    out += [f"solver.delta_schedule = {fl(s.delta_schedule)}",
            f"solver.newton_rtol = {s.newton_rtol!r}", f"solver.newton_atol = {s.newton_atol!r}",
            f"solver.max_newton = {s.max_newton}", f"solver.stage_rtol = {s.stage_rtol!r}",
            f"solver.backtrack = {s.backtrack!r}", f"solver.armijo = {s.armijo!r}",
            f"output.dir = {cfg.out_dir}", f"output.wall_time = {str(cfg.record_wall_time).lower()}",
            f"run.seed = {cfg.seed}", f"run.threads = {cfg.threads}"]
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# sweep

@dataclass
class SweepRow:
    epsilon: float
    dofs: Optional[int] = None
    q: Optional[float] = None
    q_energy_form: Optional[float] = None
    lp_error: Optional[float] = None
    corrector_error: Optional[float] = None
    v_avg_error: Optional[float] = None
    grad_rminus_error: Optional[float] = None
    grad_rplus_norm: Optional[float] = None
    newton_iters: Optional[int] = None
    wall_time_s: Optional[float] = None
    converged: bool = False
    w1p_norm: Optional[float] = None
    error: str = ""


@dataclass
class SweepReport:
    regime: str
    p: float
    profile_digest: str
    forcing: str
    q: float
    q_energy_form: Optional[float]
    q_closed_form: Optional[float]
    rows: list
    seed: int = 0

    @property
    def ok(self) -> bool:
        return all(r.converged and not r.error for r in self.rows)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


@dataclass
class _Shared:
    """Epsilon-independent data computed once per sweep."""
    q: float
    q_energy_form: Optional[float]
    cell: object
    u_values: np.ndarray
    limit_converged: bool


def _limit_data(cfg: RunConfig) -> _Shared:
    E = cfg.exponent
    if cfg.regime == "resonant":
        cell = q_resonant(cfg.profile, E, cfg.resonant_cell_h(), cfg.settings)
        q, qe = cell.q, cell.q_energy_form
        ok = cell.report.converged
    else:
        q, cell = effective_coefficient(cfg.profile, E, cfg.alpha)
        qe, ok = None, True
    fbar = limit_forcing(cfg.forcing, cfg.profile, cfg.alpha)
    u, rep = solve_limit(LimitProblem(q, fbar, E, cfg.regime), cfg.limit_elements, cfg.settings)
    return _Shared(q, qe, cell, u.values, ok and rep.converged)


def _limit_function(cfg: RunConfig, shared: _Shared):
    return IntervalFunction(mesh_interval(cfg.limit_elements), shared.u_values)


def run_row(cfg: RunConfig, epsilon: float, shared: _Shared) -> SweepRow:
    row = SweepRow(epsilon, q=shared.q, q_energy_form=shared.q_energy_form)
    t0 = time.perf_counter()
    try:
        spec = cfg.spec(epsilon)
        mesh = mesh_thin_domain(spec, cfg.mesh_h(epsilon))
        row.dofs = mesh.n_nodes
        u_eps, rep = solve_neumann(mesh, cfg.exponent, cfg.forcing, cfg.settings)
        row.newton_iters = rep.total_iterations
        u = _limit_function(cfg, shared)
        W = corrector(cfg.regime, u, shared.cell, spec, cfg.exponent)
        m = error_metrics(spec, u_eps, u, W, cfg.p)
        row.lp_error, row.corrector_error, row.v_avg_error = m.lp_error, m.corrector_error, m.v_average_error
        row.grad_rminus_error, row.grad_rplus_norm = m.grad_rminus_error, m.grad_rplus_norm
        row.w1p_norm = m.w1p_norm
        row.converged = rep.converged and shared.limit_converged
        if not row.converged:
            row.error = "nonlinear solver did not converge"
    except Exception as exc:  # recorded in the row; the sweep continues
        row.error = f"{type(exc).__name__}: {exc}"
    if cfg.record_wall_time:
        row.wall_time_s = time.perf_counter() - t0
    return row


def run_sweep(cfg: RunConfig, threads: Optional[int] = None) -> SweepReport:
    threads = cfg.threads if threads is None else threads
    shared = _limit_data(cfg)
    eps = list(cfg.epsilon_list)
    if threads > 1 and len(eps) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(eps))) as pool:
            rows = list(pool.map(run_row, [cfg] * len(eps), eps, [shared] * len(eps)))
    else:
        rows = [run_row(cfg, e, shared) for e in eps]
    rows.sort(key=lambda r: -r.epsilon)
    return SweepReport(cfg.regime, cfg.p, cfg.profile.digest(), cfg.forcing.describe(),
                       shared.q, shared.q_energy_form,
                       closed_form_q(cfg.profile, cfg.exponent, cfg.alpha), rows, cfg.seed)


# --------------------------------------------------------------------------
# output files

def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12e}"


def sweep_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        vals = [f"{r.epsilon:.12g}"] + [_fmt(getattr(r, c)) for c in CSV_COLUMNS[1:]]
        w.writerow(vals)
    return buf.getvalue()


def summary_text(report: SweepReport) -> str:
    out = [f"regime: {report.regime}", f"p: {report.p:.12g}", f"profile: {report.profile_digest}",
           f"forcing: {report.forcing}", f"q: {report.q:.15g}"]
    if report.q_energy_form is not None:
        out.append(f"q_energy_form: {report.q_energy_form:.15g}")
    if report.q_closed_form is not None:
        out.append(f"q_closed_form: {report.q_closed_form:.15g}")
    out.append(f"seed: {report.seed}")
    out.append(f"all_converged: {str(report.ok).lower()}")
    out.append("first/last ratios:")
    for c in ("lp_error", "corrector_error", "v_avg_error", "grad_rminus_error", "grad_rplus_norm"):
        vals = report.column(c)
        if vals and vals[0] is not None and vals[-1] is not None and vals[-1] != 0:
            out.append(f"  {c}: {vals[0] / vals[-1]:.6g}")
    out.append("rows:")
    for r in report.rows:
        status = "ok" if r.converged and not r.error else f"FAILED ({r.error})"
        w1p = "" if r.w1p_norm is None else f" w1p_norm={r.w1p_norm:.6e}"
        out.append(f"  eps={r.epsilon:.12g} {status}{w1p}")
    return "\n".join(out) + "\n"


def plot_script(report: SweepReport) -> str:
    cols = [(5, "lp\\_error"), (6, "corrector\\_error"), (7, "v\\_avg\\_error")]
    if report.regime == "strong":
        cols += [(8, "grad\\_rminus\\_error"), (9, "grad\\_rplus\\_norm")]
    plots = ", \\\n     ".join(f"'sweep.csv' using 1:{c} with linespoints title '{t}'" for c, t in cols)
    return ("set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "set logscale xy\n"
            "set xlabel 'epsilon'\n"
            "set ylabel 'rescaled error'\n"
            f"set title 'regime {report.regime}, p = {report.p:g}'\n"
            "set terminal pngcairo size 800,600\n"
            "set output 'sweep.png'\n"
            f"plot {plots}\n")


def emit_outputs(report: SweepReport, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"sweep.csv": sweep_csv(report), "summary.txt": summary_text(report),
             "plot.gp": plot_script(report)}
    for name, text in files.items():
        (out / name).write_text(text)
    return [out / n for n in files]
