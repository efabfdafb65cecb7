"""Declarative scenarios: TOML configs, validation, execution and artifacts.

A config names a pipeline ``kind`` (flow, stationary_solve, foliation,
schwarzschild_expansion, verify) plus the sections it needs.  Every section
has a fixed key set with defaults; unknown keys are rejected with the line
they appear on.  ``run_scenario`` writes ``<name>.series.csv``,
``<name>.summary.json`` and optional ``<name>.state.<k>.json`` snapshots.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import tomli

from . import diagnostics as _diag
from . import flow as _flow
from . import foliation as _fol
from . import geometry as _geo
from . import spacetimes as _st
from .errors import ParseError, PmcfError, ValidationError
from .grids import GraphState, SpatialGrid

log = logging.getLogger(__name__)

KINDS = ("flow", "stationary_solve", "foliation", "schwarzschild_expansion", "verify")
CHARTS = ("minkowski", "hyperboloid-gaussian", "de-sitter", "schwarzschild")
_REQUIRED = object()

# section -> key -> default; None means "optional, no default"
SCHEMA: Dict[str, Dict[str, Any]] = {
    "": dict(name=None, kind="flow", seed=0, description=""),
    "chart": dict(type="minkowski", n=1, tau0=1.0, m=1.0),
    "grid": dict(topology="radial", nodes=257, r_max=8.0, lo=-1.0, hi=1.0),
    "initial": dict(
        type="hyperboloid",
        tau0=1.0,
        height=0.0,
        bump_amplitude=0.0,
        bump_width=1.0,
        bump_center=0.0,
        r=None,
        w=None,
        min_H=None,
    ),
    "prescribed": dict(type="constant", value=0.0, t=None, r=None, values=None),
    "flow": dict(
        integrator="rk4",
        cfl=0.2,
        s_end=1.0,
        record_every=10,
        delta_floor=_geo.DELTA_FLOOR,
        delta_warn=_geo.DELTA_WARN,
        boundary="pin-initial",
        profile="self-similar",
        orientation="future",
        dt=None,
        dt_max=None,
        rkc_max_stages=2000,
    ),
    "diagnostics": dict(
        frame=None,
        lam=1.0,
        mu=1.0,
        barrier_lower=None,
        barrier_upper=None,
        barrier_fatal=False,
        barrier_tolerance=0.0,
        residuals=True,
        snapshot_every=0,
        escape_lower=None,
        escape_upper=None,
    ),
    "checks": {},
    "foliation": dict(case="hyperboloid", n=2, tau0=0.5, nodes=8, dt=1e-3, t_end=None, override_window=False),
    "schwarzschild": dict(m=1.0, tau=1.0, f="constant", f_value=0.0, f_amplitude=0.1, x=[0.02, 0.01, 0.005],
                          theta0=0.5 * math.pi),
    "verify": dict(filter=""),
    "output": dict(dir=".", snapshots=False),
}

CHECKS: Dict[str, Dict[str, Any]] = {
    "completed": {},
    "decay": dict(window=[0.2, 1.0], max_fit_residual=0.1),
    "barrier": {},
    "height_range": dict(lower=_REQUIRED, upper=_REQUIRED),
    "s_inverse": dict(s_min=0.05, factor=1.05),
    "drift": dict(tol=_REQUIRED),
    "gradient_identity": dict(tol=_REQUIRED),
    "sign_preservation": dict(tol=_REQUIRED),
    "newton": dict(tol=1e-8, max_iter=8),
    "foliation_closed_form": dict(tol=1e-8),
    "foliation_bounds": {},
    "schwarzschild_h0": dict(oracle=_REQUIRED, tol=1e-3),
    "richardson": dict(lower=3.2, upper=4.8),
    "verify": {},
}


@dataclass
class ScenarioConfig:
    """Validated scenario: one dict of settings per section, defaults filled."""

    name: str
    kind: str
    seed: int
    description: str
    sections: Dict[str, Dict[str, Any]]
    checks: Dict[str, Dict[str, Any]]
    source: Optional[str] = None

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.sections[section]


@dataclass
class RunSummary:
    name: str
    kind: str
    termination: str
    s_final: Optional[float]
    sup_h_minus_h_final: Optional[float]
    decay_rate: Optional[float]
    checks: Dict[str, Dict[str, Any]]
    wall_time: float
    message: str = ""
    extras: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.termination in ("completed", "converged") and all(c["pass"] for c in self.checks.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_json(self) -> dict:
        return dict(
            name=self.name,
            kind=self.kind,
            termination=self.termination,
            message=self.message,
            s_final=self.s_final,
            sup_h_minus_h_final=self.sup_h_minus_h_final,
            decay_rate=self.decay_rate,
            checks=self.checks,
            wall_time=self.wall_time,
            extras=self.extras,
        )


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _line_of(text: str, key: str, section: str = "") -> Optional[int]:
    """First line defining ``key`` (inside ``section`` when given)."""
    cur = ""
    pat = re.compile(r"^\s*\[+\s*([^\]]+?)\s*\]+")
    for i, line in enumerate(text.splitlines(), 1):
        m = pat.match(line)
        if m:
            cur = m.group(1)
            continue
        if cur == section and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return i
    return None


def _unknown(text, key, section):
    line = _line_of(text, key, section)
    where = f"[{section}] " if section else ""
    at = f" (line {line})" if line else ""
    return ParseError(f"unknown key {where}{key!r}{at}")


def parse_config_text(text: str, source: Optional[str] = None) -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"invalid TOML: {exc}") from exc
    sections: Dict[str, Dict[str, Any]] = {}
    top = dict(SCHEMA[""])
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in SCHEMA:
                raise _unknown(text, key, "")
            continue
        if key not in top:
            raise _unknown(text, key, "")
        top[key] = val
    for sec, defaults in SCHEMA.items():
        if sec in ("", "checks"):
            continue
        vals = dict(defaults)
        for key, val in raw.get(sec, {}).items():
            if key not in defaults:
                raise _unknown(text, key, sec)
            vals[key] = val
        sections[sec] = vals
    checks: Dict[str, Dict[str, Any]] = {}
    for cname, params in raw.get("checks", {}).items():
        if cname not in CHECKS:
            raise _unknown(text, cname, "checks")
        if params is True:
            params = {}
        if not isinstance(params, dict):
            raise ValidationError(f"checks.{cname} must be a table or true")
        vals = dict(CHECKS[cname])
        for key, val in params.items():
            if key not in vals:
                raise ParseError(f"unknown key {key!r} in checks.{cname}")
            vals[key] = val
        for key, val in vals.items():
            if val is _REQUIRED:
                raise ValidationError(f"checks.{cname}.{key} is required")
        checks[cname] = vals
    name = top["name"] or (Path(source).stem if source else "scenario")
    cfg = ScenarioConfig(str(name), top["kind"], int(top["seed"]), str(top["description"]), sections, checks, source)
    validate(cfg)
    return cfg


def parse_config(path) -> ScenarioConfig:
    """Read and validate a TOML scenario file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}") from exc
    return parse_config_text(text, source=str(p))


def _positive(value, name):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
        raise ValidationError(f"{name} must be positive")


def validate(cfg: ScenarioConfig) -> None:
    """Range and consistency checks; raises ValidationError naming the field."""
    if cfg.kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}")
    ch = cfg["chart"]
    if ch["type"] not in CHARTS:
        raise ValidationError(f"chart.type must be one of {CHARTS}")
    if ch["type"] != "schwarzschild" and (not isinstance(ch["n"], int) or ch["n"] < 1):
        raise ValidationError("n must be a positive integer")
    if ch["type"] == "hyperboloid-gaussian":
        _positive(ch["tau0"], "tau0")
    if ch["type"] == "schwarzschild" and ch["m"] < 0:
        raise ValidationError("m must be non-negative")
    if cfg.kind in ("flow", "stationary_solve"):
        if ch["type"] == "schwarzschild":
            raise ValidationError("chart.type schwarzschild is not synchronous; use kind = schwarzschild_expansion")
        gr = cfg["grid"]
        if gr["topology"] not in ("radial", "box-periodic", "box-dirichlet"):
            raise ValidationError("grid.topology must be radial, box-periodic or box-dirichlet")
        if not isinstance(gr["nodes"], int) or gr["nodes"] < 9:
            raise ValidationError("nodes must be an integer >= 9")
        if gr["topology"] == "radial":
            _positive(gr["r_max"], "r_max")
        elif not gr["lo"] < gr["hi"]:
            raise ValidationError("grid.lo must be below grid.hi")
        ini = cfg["initial"]
        if ini["type"] not in ("hyperboloid", "slice", "table"):
            raise ValidationError("initial.type must be hyperboloid, slice or table")
        if ini["type"] == "hyperboloid":
            _positive(ini["tau0"], "tau0")
            if ch["type"] != "minkowski":
                raise ValidationError("initial.type hyperboloid needs the minkowski chart")
        if ini["type"] == "table":
            if ini["r"] is None or ini["w"] is None or len(ini["r"]) != len(ini["w"]) or len(ini["r"]) < 4:
                raise ValidationError("initial table needs matching r and w lists of length >= 4")
        if ini["bump_amplitude"] != 0.0:
            _positive(ini["bump_width"], "bump_width")
            if gr["topology"] == "radial" and not gr["r_max"] > 3 * ini["bump_width"]:
                raise ValidationError("r_max must exceed 3 * bump_width")
        pr = cfg["prescribed"]
        if pr["type"] not in ("constant", "example", "oracle", "table"):
            raise ValidationError("prescribed.type must be constant, example, oracle or table")
        if pr["type"] == "example" and ch["type"] != "minkowski":
            raise ValidationError("prescribed.type example lives on the minkowski chart")
        if pr["type"] == "oracle" and ini["type"] != "hyperboloid":
            raise ValidationError("prescribed.type oracle needs hyperboloid initial data")
        if pr["type"] == "table" and (pr["t"] is None or pr["values"] is None):
            raise ValidationError("prescribed table needs t and values")
        fl = cfg["flow"]
        _positive(fl["cfl"], "cfl")
        if fl["s_end"] < 0:
            raise ValidationError("s_end must be non-negative")
        if fl["profile"] not in ("self-similar", "hyperboloid"):
            raise ValidationError("flow.profile must be self-similar or hyperboloid")
        try:
            _flow_config(cfg, None)
        except ValidationError:
            raise
        dg = cfg["diagnostics"]
        if dg["frame"] not in (None, "hyperboloid", "reversed-hyperboloid", "chart", "dt"):
            raise ValidationError("diagnostics.frame must be hyperboloid, reversed-hyperboloid, chart or dt")
        lo, hi = dg["barrier_lower"], dg["barrier_upper"]
        if lo is not None and hi is not None and not lo < hi:
            raise ValidationError("barrier_lower must be below barrier_upper")
    if cfg.kind == "foliation":
        fo = cfg["foliation"]
        if fo["case"] not in ("hyperboloid", "tanh"):
            raise ValidationError("foliation.case must be hyperboloid or tanh")
        _positive(fo["tau0"], "tau0")
        _positive(fo["dt"], "dt")
    if cfg.kind == "schwarzschild_expansion":
        sw = cfg["schwarzschild"]
        _positive(sw["tau"], "tau")
        if sw["m"] < 0:
            raise ValidationError("m must be non-negative")
        if sw["f"] not in ("constant", "cos"):
            raise ValidationError("schwarzschild.f must be constant or cos")
        xs = sw["x"]
        if len(xs) < 2 or any(x <= 0 for x in xs):
            raise ValidationError("schwarzschild.x needs at least two positive values")
    allowed = {
        "flow": {"completed", "decay", "barrier", "height_range", "s_inverse", "drift", "gradient_identity",
                 "sign_preservation"},
        "stationary_solve": {"newton", "gradient_identity"},
        "foliation": {"foliation_closed_form", "foliation_bounds"},
        "schwarzschild_expansion": {"schwarzschild_h0", "richardson"},
        "verify": {"verify"},
    }[cfg.kind]
    for cname in cfg.checks:
        if cname not in allowed:
            raise ValidationError(f"check {cname!r} does not apply to kind {cfg.kind!r}")
    if "barrier" in cfg.checks and cfg["diagnostics"]["barrier_lower"] is None and \
            cfg["diagnostics"]["barrier_upper"] is None:
        raise ValidationError("check barrier needs diagnostics.barrier_lower or barrier_upper")


# --------------------------------------------------------------------------
# wiring
# --------------------------------------------------------------------------


def _chart(cfg):
    ch = cfg["chart"]
    kind = ch["type"]
    if kind == "minkowski":
        return _st.make_minkowski_chart(ch["n"])
    if kind == "hyperboloid-gaussian":
        return _st.make_hyperboloid_gaussian_chart(ch["n"], ch["tau0"])
    if kind == "de-sitter":
        return _st.make_de_sitter_chart(ch["n"])
    return _st.make_schwarzschild_chart(ch["m"])


def _grid(cfg):
    g, n = cfg["grid"], cfg["chart"]["n"]
    if g["topology"] == "radial":
        return SpatialGrid.radial(n, g["nodes"], g["r_max"])
    return SpatialGrid.box(n, g["nodes"], g["lo"], g["hi"], periodic=g["topology"] == "box-periodic")


def bump(r, amplitude, width, center=0.0):
    """a exp(-(r - c)^2 / sigma^2), cut off beyond 6 sigma."""
    r = np.asarray(r, dtype=float)
    out = amplitude * np.exp(-((r - center) ** 2) / width**2)
    out[np.abs(r - center) > 6.0 * width] = 0.0
    return out


def initial_state(cfg, grid: SpatialGrid) -> GraphState:
    from scipy.interpolate import CubicSpline

    ini = cfg["initial"]
    r = grid.radius()
    if ini["type"] == "hyperboloid":
        w = _st.hyperboloid_profile(ini["tau0"], grid).w
    elif ini["type"] == "slice":
        w = np.full(grid.shape, float(ini["height"]))
    else:
        w = CubicSpline(np.asarray(ini["r"], float), np.asarray(ini["w"], float))(r)
    if ini["bump_amplitude"]:
        w = w + bump(r, ini["bump_amplitude"], ini["bump_width"], ini["bump_center"])
    return GraphState(grid, w, 0.0)


def prescribed_field(cfg) -> _flow.PrescribedCurvatureField:
    pr = cfg["prescribed"]
    if pr["type"] == "constant":
        return _flow.PrescribedCurvatureField.constant(pr["value"])
    if pr["type"] == "example":
        return _st.example_prescribed_field()
    if pr["type"] == "oracle":
        # umbilic value n / tau0 in the convention of the chosen orientation
        sgn = 1.0 if cfg["flow"]["orientation"] == "future" else -1.0
        return _flow.PrescribedCurvatureField.constant(sgn * cfg["chart"]["n"] / cfg["initial"]["tau0"])
    return _flow.PrescribedCurvatureField.from_table(pr["t"], pr["values"], pr["r"])


def _profile(cfg):
    fl, n = cfg["flow"], cfg["chart"]["n"]
    tau0 = cfg["initial"]["tau0"]
    if fl["profile"] == "self-similar":
        return lambda grid, s: _st.self_similar_height(tau0, n, s, grid.radius())
    return lambda grid, s: _st.hyperboloid_profile(tau0, grid).w


def _flow_config(cfg, grid) -> _flow.FlowConfig:
    fl = cfg["flow"]
    return _flow.FlowConfig(
        cfl=fl["cfl"],
        integrator=fl["integrator"],
        s_end=fl["s_end"],
        record_every=fl["record_every"],
        delta_floor=fl["delta_floor"],
        delta_warn=fl["delta_warn"],
        boundary=fl["boundary"],
        orientation=fl["orientation"],
        dt=fl["dt"],
        dt_max=fl["dt_max"],
        rkc_max_stages=fl["rkc_max_stages"],
        profile=_profile(cfg) if fl["boundary"] == "pin-profile" else None,
    )


def _frame(cfg, chart):
    name = cfg["diagnostics"]["frame"]
    if name is None:
        if cfg["chart"]["type"] == "minkowski":
            name = "hyperboloid" if cfg["flow"]["orientation"] == "future" else "reversed-hyperboloid"
        else:
            name = "chart"
    if name == "hyperboloid":
        return _st.make_hyperboloid_frame()
    if name == "reversed-hyperboloid":
        return _st.make_hyperboloid_frame(reversed=True)
    if name == "chart":
        return chart.time_function
    return None


def _diag_config(cfg, chart) -> _diag.DiagnosticsConfig:
    dg = cfg["diagnostics"]
    barrier = None
    if dg["barrier_lower"] is not None or dg["barrier_upper"] is not None:
        barrier = _diag.BarrierSpec(dg["barrier_lower"], dg["barrier_upper"], dg["barrier_fatal"],
                                    dg["barrier_tolerance"])
    escape = None
    if dg["escape_lower"] is not None or dg["escape_upper"] is not None:
        escape = (dg["escape_lower"] if dg["escape_lower"] is not None else -math.inf,
                  dg["escape_upper"] if dg["escape_upper"] is not None else math.inf)
    return _diag.DiagnosticsConfig(
        frame=_frame(cfg, chart),
        lam=dg["lam"],
        mu=dg["mu"],
        barrier=barrier,
        residuals=dg["residuals"],
        escape_window=escape,
        snapshot_every=dg["snapshot_every"] or None,
    )


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------


def _verdict(ok, margin, **detail):
    out = {"pass": bool(ok), "margin": float(margin)}
    out.update(detail)
    return out


def _flow_checks(cfg, result: _flow.FlowResult, initial: GraphState, decay):
    recs = result.records
    out = {}
    for name, p in cfg.checks.items():
        if name == "completed":
            out[name] = _verdict(result.ok, 0.0 if result.ok else -1.0)
        elif name == "decay":
            if isinstance(decay, Exception):
                out[name] = _verdict(False, -math.inf, error=str(decay))
            else:
                rate, _, resid = decay
                out[name] = _verdict(rate > 0 and resid < p["max_fit_residual"],
                                     min(rate, p["max_fit_residual"] - resid), rate=rate, fit_residual=resid)
        elif name == "barrier":
            total = sum(r.barrier_violations for r in recs)
            worst = min((r.extras.get("barrier_margin", math.inf) for r in recs), default=math.inf)
            out[name] = _verdict(total == 0 and result.ok, worst if total == 0 else -float(total),
                                 violations=total, worst_margin=worst)
        elif name == "height_range":
            lo = min(r.u_min for r in recs)
            hi = max(r.u_max for r in recs)
            out[name] = _verdict(lo >= p["lower"] and hi <= p["upper"], min(lo - p["lower"], p["upper"] - hi),
                                 u_min=lo, u_max=hi)
        elif name == "s_inverse":
            worst = math.inf
            for r in recs:
                if r.s >= p["s_min"]:
                    worst = min(worst, p["factor"] / r.s - r.sup_H_minus_h**2)
            out[name] = _verdict(worst >= 0, worst)
        elif name == "drift":
            d = float(np.max(np.abs(result.final.w - initial.w)))
            out[name] = _verdict(d <= p["tol"], p["tol"] - d, drift=d)
        elif name == "gradient_identity":
            worst = max(r.extras["grad_identity"] for r in recs)
            out[name] = _verdict(worst <= p["tol"], p["tol"] - worst, residual=worst)
        elif name == "sign_preservation":
            worst = min(r.extras["min_H_minus_h"] for r in recs)
            out[name] = _verdict(worst >= -p["tol"], worst + p["tol"], min_H_minus_h=worst)
    return out


# --------------------------------------------------------------------------
# pipelines
# --------------------------------------------------------------------------


def _state_json(state: GraphState) -> dict:
    g = state.grid
    return dict(
        s=state.s,
        grid=dict(n=g.n, topology=g.topology, nodes_per_axis=g.nodes_per_axis, extent=list(g.extent)),
        w=state.w.reshape(-1).tolist(),
    )


def flow_problem(cfg: ScenarioConfig):
    """(chart, initial state, prescribed field, FlowConfig, DiagnosticsConfig) for a flow scenario."""
    chart = _chart(cfg)
    grid = _grid(cfg)
    return chart, initial_state(cfg, grid), prescribed_field(cfg), _flow_config(cfg, grid), _diag_config(cfg, chart)


def _run_flow(cfg, out: Path, summary: RunSummary):
    chart, init, H, fcfg, dcfg = flow_problem(cfg)
    grid = init.grid
    min_H = cfg["initial"]["min_H"]
    if min_H is not None:
        geom = _geo.graph_geometry(chart, grid, init, orientation=fcfg.orientation, delta_floor=fcfg.delta_floor)
        if float(np.min(geom.H)) < min_H:
            raise ValidationError(f"initial mean curvature {np.min(geom.H):.4g} is below min_H = {min_H}")
    result = _flow.run_flow(chart, init, H, fcfg, diagnostics=dcfg)
    csv_path = out / f"{cfg.name}.series.csv"
    _diag.write_csv(result.records, csv_path)
    summary.artifacts.append(str(csv_path))
    if cfg["output"]["snapshots"] or dcfg.snapshot_every:
        for k, st in enumerate(result.snapshots):
            p = out / f"{cfg.name}.state.{k}.json"
            p.write_text(json.dumps(_state_json(st)))
            summary.artifacts.append(str(p))
    recs = result.records
    window = cfg.checks.get("decay", {}).get("window")
    if window is None and recs:
        window = [0.2 * recs[-1].s, recs[-1].s]
    try:
        decay = _diag.decay_fit([(r.s, r.sup_H_minus_h) for r in recs], window)
        summary.decay_rate = decay[0]
    except PmcfError as exc:
        decay = exc
    summary.termination = result.termination
    summary.message = result.message
    summary.s_final = result.final.s
    summary.sup_h_minus_h_final = recs[-1].sup_H_minus_h if recs else None
    summary.extras.update(steps=result.steps, rhs_evaluations=result.evaluations, records=len(recs),
                          max_grad_identity=max((r.extras["grad_identity"] for r in recs), default=None))
    summary.checks = _flow_checks(cfg, result, init, decay)


def _run_stationary(cfg, out: Path, summary: RunSummary):
    chart = _chart(cfg)
    grid = _grid(cfg)
    init = initial_state(cfg, grid)
    H = prescribed_field(cfg)
    fl = cfg["flow"]
    p = cfg.checks.get("newton", CHECKS["newton"])
    hist: list = []
    dcfg = _diag_config(cfg, chart)
    rec0 = _diag.make_record(chart, init, H, dcfg, fl["orientation"])
    try:
        final = _flow.stationary_solve(chart, init, H, tol=p["tol"], max_iter=p["max_iter"],
                                       orientation=fl["orientation"], delta_floor=fl["delta_floor"], history=hist)
        summary.termination = "converged"
    except PmcfError as exc:
        summary.termination, summary.message = exc.reason, str(exc)
        final = None
    records = [rec0]
    if final is not None:
        records.append(_diag.make_record(chart, final, H, dcfg, fl["orientation"]))
    csv_path = out / f"{cfg.name}.series.csv"
    _diag.write_csv(records, csv_path)
    summary.artifacts.append(str(csv_path))
    summary.s_final = 0.0
    summary.sup_h_minus_h_final = hist[-1] if hist else None
    summary.extras.update(newton_history=hist, iterations=len(hist) - 1)
    checks = {}
    if "newton" in cfg.checks:
        ok = final is not None and hist[-1] <= p["tol"] and len(hist) - 1 <= p["max_iter"]
        checks["newton"] = _verdict(ok, p["max_iter"] - (len(hist) - 1), iterations=len(hist) - 1)
    if "gradient_identity" in cfg.checks:
        worst = max(r.extras["grad_identity"] for r in records)
        tol = cfg.checks["gradient_identity"]["tol"]
        checks["gradient_identity"] = _verdict(worst <= tol, tol - worst, residual=worst)
    summary.checks = checks


def _run_foliation(cfg, out: Path, summary: RunSummary):
    fo = cfg["foliation"]
    rng = np.random.default_rng(cfg.seed)
    n, tau0 = fo["n"], fo["tau0"]
    M = rng.normal(size=(fo["nodes"], n, n))
    g0 = M @ np.swapaxes(M, 1, 2) + n * np.eye(n)
    if fo["case"] == "hyperboloid":
        init = _fol.FoliationState.initial(g0, g0 / tau0)
    else:
        init = _fol.FoliationState.initial(g0, np.zeros_like(g0), curvature=lambda t, g: g)
    t_end = fo["t_end"] if fo["t_end"] is not None else tau0 / 2
    try:
        series = _fol.integrate_foliation(init, t_end, fo["dt"], override_window=fo["override_window"])
    except PmcfError as exc:
        summary.termination, summary.message = exc.reason, str(exc)
        summary.checks = {k: _verdict(False, -math.inf) for k in cfg.checks}
        return
    path = out / f"{cfg.name}.foliation.json"
    _fol.export_series_json(series, path)
    summary.artifacts.append(str(path))
    errs = []
    for st in series:
        if fo["case"] == "hyperboloid":
            c = (tau0 + st.t) / tau0
            e = max(np.max(np.abs(st.g - c**2 * g0)) / np.max(np.abs(c**2 * g0)),
                    np.max(np.abs(st.A - c / tau0 * g0)) / np.max(np.abs(c / tau0 * g0)))
        else:
            lam = np.linalg.solve(st.g, st.A)
            e = np.max(np.abs(lam - math.tanh(st.t) * np.eye(n)))
        errs.append(float(e))
    report = _fol.foliation_bounds_check(series)
    summary.termination = "completed"
    summary.s_final = float(series[-1].t)
    summary.extras.update(max_error=max(errs), b0=init.b0,
                          window=_fol.guaranteed_window(init.a0, init.c0, init.v0))
    checks = {}
    if "foliation_closed_form" in cfg.checks:
        tol = cfg.checks["foliation_closed_form"]["tol"]
        checks["foliation_closed_form"] = _verdict(max(errs) <= tol, tol - max(errs), error=max(errs))
    if "foliation_bounds" in cfg.checks:
        checks["foliation_bounds"] = _verdict(report.ok, min(report.worst_envelope_margin, report.worst_A_margin))
    summary.checks = checks


def _run_schwarzschild(cfg, out: Path, summary: RunSummary):
    from .verify import schwarzschild_expansion

    sw = cfg["schwarzschild"]
    f = _st.ConstantF(sw["f_value"]) if sw["f"] == "constant" else _st.CosThetaF(sw["f_amplitude"])
    xs = sorted(sw["x"], reverse=True)
    H, H0, C, ratios = schwarzschild_expansion(sw["m"], sw["tau"], xs, f)
    path = out / f"{cfg.name}.expansion.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "H", "H_minus_H0"])
        for x, h in zip(xs, H):
            wr.writerow([repr(float(x)), repr(float(h)), repr(float(h - H0))])
    summary.artifacts.append(str(path))
    summary.termination = "completed"
    summary.extras.update(H0=H0, C=C, ratios=ratios.tolist(), H=H.tolist(), x=list(xs))
    checks = {}
    if "schwarzschild_h0" in cfg.checks:
        p = cfg.checks["schwarzschild_h0"]
        d = abs(H0 - p["oracle"])
        checks["schwarzschild_h0"] = _verdict(d <= p["tol"], p["tol"] - d, H0=H0)
    if "richardson" in cfg.checks:
        p = cfg.checks["richardson"]
        m = min(float(np.min(ratios - p["lower"])), float(np.min(p["upper"] - ratios)))
        checks["richardson"] = _verdict(m >= 0, m, ratios=ratios.tolist())
    summary.checks = checks


def _run_verify(cfg, out: Path, summary: RunSummary):
    from .verify import verify_suite

    rep = verify_suite(cfg["verify"]["filter"] or None)
    summary.termination = "completed"
    summary.checks = {r.name: _verdict(r.passed, r.margin, detail=r.detail) for r in rep.results}


_PIPELINES = dict(
    flow=_run_flow,
    stationary_solve=_run_stationary,
    foliation=_run_foliation,
    schwarzschild_expansion=_run_schwarzschild,
    verify=_run_verify,
)


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> RunSummary:
    """Execute the configured pipeline and write its artifacts into ``out_dir``."""
    out = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    summary = RunSummary(cfg.name, cfg.kind, "completed", None, None, None, {}, 0.0)
    t0 = time.perf_counter()
    try:
        _PIPELINES[cfg.kind](cfg, out, summary)
    except PmcfError as exc:
        summary.termination, summary.message = exc.reason, str(exc)
        summary.checks = {k: _verdict(False, -math.inf) for k in cfg.checks}
    summary.wall_time = time.perf_counter() - t0
    path = out / f"{cfg.name}.summary.json"
    path.write_text(json.dumps(summary.to_json(), indent=2, default=float))
    summary.artifacts.append(str(path))
    return summary


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------


def _preset_dir():
    return resources.files("pmcflow") / "presets"


def list_presets() -> List[str]:
    return sorted(p.name[:-5] for p in _preset_dir().iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    p = _preset_dir() / f"{name}.toml"
    if not p.is_file():
        raise ValidationError(f"unknown preset {name!r}")
    return p.read_text()


def load_preset(name: str, **overrides) -> ScenarioConfig:
    """Parse a bundled preset; ``overrides`` maps "section.key" to replacement values."""
    cfg = parse_config_text(preset_text(name), source=f"{name}.toml")
    for dotted, val in overrides.items():
        sec, _, key = dotted.rpartition(".")
        if sec == "checks":
            cfg.checks[key] = val
            continue
        if sec not in cfg.sections or key not in cfg.sections[sec]:
            raise ParseError(f"unknown key {dotted!r}")
        cfg.sections[sec][key] = val
    validate(cfg)
    return cfg
