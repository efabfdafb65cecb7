"""Graphical prescribed mean curvature flow over synchronous charts.

The unknown is the height w(x, s) of the graph t = w(x) and the flow reads

    d_s w = q^(1/2) (H - Hpres(w(x), x)),   q = 1 - g^ij(w, x) w_i w_j,

which is the normal flow (H - Hpres) nu written up to a tangential
reparametrisation.  Spatial derivatives are the sparse operators of
``grids``; time stepping is explicit (Euler, RK2, RK4 or a strongly damped second-order
Runge-Kutta-Chebyshev scheme for stiff, nearly null surfaces).  Stationary
surfaces are found directly by Newton's method on the same discretisation.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as _geo
from .charts import ChartSpec
from .errors import (
    BarrierViolation,
    HeightEscape,
    NoConvergence,
    PmcfError,
    SpacelikeViolation,
    StepTooSmall,
    ValidationError,
)
from .grids import GraphState, SpatialGrid, operators

log = logging.getLogger(__name__)

INTEGRATORS = ("euler", "rk2", "rk4", "rkc")
BOUNDARIES = ("pin-initial", "pin-profile")
ORIENTATIONS = ("future", "past")


# --------------------------------------------------------------------------
# prescribed curvature
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PrescribedCurvatureField:
    """Scalar field Hpres on spacetime with an optional analytic differential.

    ``gradient(points)`` returns the covector d Hpres, shape (..., dim); when it
    is missing a central difference with relative step ``fd_step`` is used.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    monotone_declared: bool = False
    name: str = "custom"
    fd_step: float = 1e-5
    constant_value: Optional[float] = None

    @classmethod
    def constant(cls, c: float) -> "PrescribedCurvatureField":
        c = float(c)
        return cls(
            value=lambda p: np.full(np.asarray(p).shape[:-1], c),
            gradient=lambda p: np.zeros(np.asarray(p).shape),
            monotone_declared=True,
            name=f"constant({c:g})",
            constant_value=c,
        )

    @classmethod
    def from_table(cls, t_nodes, values, r_nodes=None) -> "PrescribedCurvatureField":
        """Cubic interpolation of a sampled table Hpres(t) or Hpres(t, r)."""
        from scipy.interpolate import CubicSpline, RegularGridInterpolator

        t_nodes = np.asarray(t_nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if r_nodes is None:
            spline = CubicSpline(t_nodes, values)

            def value(p):
                return spline(np.asarray(p)[..., 0])

            def gradient(p):
                p = np.asarray(p, dtype=float)
                d = np.zeros_like(p)
                d[..., 0] = spline(p[..., 0], 1)
                return d

            return cls(value=value, gradient=gradient, name="table(t)")
        interp = RegularGridInterpolator(
            (t_nodes, np.asarray(r_nodes, dtype=float)), values, method="cubic", bounds_error=False, fill_value=None
        )

        def value2(p):
            p = np.asarray(p, dtype=float)
            r = np.linalg.norm(p[..., 1:], axis=-1)
            return interp(np.stack([p[..., 0], r], axis=-1))

        return cls(value=value2, name="table(t,r)")

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.broadcast_to(np.asarray(self.value(p), dtype=float), p.shape[:-1]).copy()

    def grad(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(p), dtype=float)
        out = np.empty_like(p)
        steps = self.fd_step * (np.abs(p) + 1.0)
        for a in range(p.shape[-1]):
            dp = np.zeros_like(p)
            dp[..., a] = steps[..., a]
            out[..., a] = (self(p + dp) - self(p - dp)) / (2.0 * steps[..., a])
        return out

    def dt(self, points) -> np.ndarray:
        return self.grad(points)[..., 0]


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowConfig:
    """Time-stepping controls.

    ``dt`` fixes the step; otherwise it follows the parabolic stability
    estimate scaled by ``cfl`` (capped by ``dt_max`` when given).  The ``rkc``
    integrator picks its stage count from the same estimate so any step is
    stable, and defaults to ``dt_max`` (or s_end / 100).
    """

    cfl: float = 0.2
    integrator: str = "rk4"
    s_end: float = 1.0
    record_every: int = 10
    delta_floor: float = _geo.DELTA_FLOOR
    delta_warn: float = _geo.DELTA_WARN
    boundary: str = "pin-initial"
    orientation: str = "future"
    dt: Optional[float] = None
    dt_max: Optional[float] = None
    rkc_max_stages: int = 2000
    rkc_damping: float = 4.0
    max_steps: int = 10_000_000
    profile: Optional[Callable[[SpatialGrid, float], np.ndarray]] = None

    def __post_init__(self):
        if not (0 < self.cfl <= 1):
            raise ValidationError("cfl must lie in (0, 1]")
        if self.integrator not in INTEGRATORS:
            raise ValidationError(f"integrator must be one of {INTEGRATORS}")
        if not (0 < self.delta_floor < self.delta_warn < 1):
            raise ValidationError("need 0 < delta_floor < delta_warn < 1")
        if self.boundary not in BOUNDARIES:
            raise ValidationError(f"boundary must be one of {BOUNDARIES}")
        if self.orientation not in ORIENTATIONS:
            raise ValidationError(f"orientation must be one of {ORIENTATIONS}")
        if self.boundary == "pin-profile" and self.profile is None:
            raise ValidationError("pin-profile boundary needs a profile callable")
        if self.s_end < 0:
            raise ValidationError("s_end must be non-negative")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")
        if self.dt is not None and self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.rkc_damping <= 0:
            raise ValidationError("rkc_damping must be positive")


@dataclass(frozen=True)
class LinearizedCoefficients:
    """Coefficients of D F_v(phi) = phi_s - a^ij phi_ij + b^k phi_k + c phi."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


# --------------------------------------------------------------------------
# velocity and linearisation
# --------------------------------------------------------------------------


def _orientation_sign(orientation):
    if orientation not in ORIENTATIONS:
        raise ValueError(f"unknown orientation {orientation!r}")
    return 1.0 if orientation == "future" else -1.0


def _velocity_parts(chart, grid, w, H_field, orientation="future", delta_floor=_geo.DELTA_FLOOR, state=None):
    f = _geo.graph_fields(chart, grid, w, delta_floor=delta_floor, state=state)
    H = _geo.mean_curvature_from_fields(f)
    hval = H_field(f["P"])
    sgn = _orientation_sign(orientation)
    # past orientation: d_s F = (H_past - Hpres) nu_past with H_past = -H, nu_past = -nu
    v = sgn * np.sqrt(f["q"]) * (sgn * H - hval)
    return v, f, sgn * H, hval


def flow_velocity(chart: ChartSpec, grid: SpatialGrid, state, H_field, orientation="future",
                  delta_floor=_geo.DELTA_FLOOR) -> np.ndarray:
    """q^(1/2) (H - Hpres) at every node (sign-flipped for the past orientation)."""
    w = state.w if isinstance(state, GraphState) else np.asarray(state, dtype=float)
    v, *_ = _velocity_parts(chart, grid, w, H_field, orientation, delta_floor,
                            state if isinstance(state, GraphState) else None)
    return v


def principal_coefficients(f) -> np.ndarray:
    """a^ij = g^ij + v^i v^j / q."""
    wup, q = f["wup"], f["q"]
    return f["ginv"] + np.einsum("...i,...j->...ij", wup, wup) / q[..., None, None]


def linearized_coefficients(chart, grid, state, H_field, orientation="future",
                            delta_floor=_geo.DELTA_FLOOR) -> LinearizedCoefficients:
    """(a, b, c) of the linearised flow operator at v = state.w."""
    w = state.w if isinstance(state, GraphState) else np.asarray(state, dtype=float)
    f = _geo.graph_fields(chart, grid, w, second=True, delta_floor=delta_floor)
    sgn = _orientation_sign(orientation)
    ginv, gdot, gddot = f["ginv"], f["gdot"], f["gddot"]
    Gam, Gamdot = f["Gam"], f["Gamdot"]
    dw, vup, q, sigma = f["dw"], f["wup"], f["q"], f["sigma"]
    hval = sgn * H_field(f["P"])
    hdot = sgn * H_field.dt(f["P"])
    sq = np.sqrt(q)

    a = principal_coefficients(f)
    # K = d_t g^ij, L = d_t^2 g^ij
    K = -np.einsum("...ik,...kl,...lj->...ij", ginv, gdot, ginv)
    L = 2.0 * np.einsum("...ik,...kl,...lm,...mn,...nj->...ij", ginv, gdot, ginv, gdot, ginv) - np.einsum(
        "...ik,...kl,...lj->...ij", ginv, gddot, ginv
    )
    Kvv = np.einsum("...ij,...i,...j->...", K, dw, dw)
    Lvv = np.einsum("...ij,...i,...j->...", L, dw, dw)
    theta_dot = np.einsum("...ij,...ij->...", K, gdot) + np.einsum("...ij,...ij->...", ginv, gddot)
    sig_v = np.einsum("...ij,...j->...i", sigma, vup)
    sig_vv = np.einsum("...i,...i->...", sig_v, vup)
    Kv = np.einsum("...ik,...i->...k", K, dw)

    b = (
        -(2.0 * np.einsum("...ki,...i->...k", ginv, sig_v) * q[..., None] + 2.0 * sig_vv[..., None] * vup)
        / (q**2)[..., None]
        + np.einsum("...ij,...kij->...k", a, Gam)
        - Kv / q[..., None]
        - (Kvv / q**2)[..., None] * vup
        - (hval / sq)[..., None] * vup
    )
    Kv_up = np.einsum("...ik,...k->...i", K, dw)
    dadt = K + 2.0 * np.einsum("...i,...j->...ij", Kv_up, vup) / q[..., None, None] + np.einsum(
        "...i,...j->...ij", vup, vup
    ) * (Kvv / q**2)[..., None, None]
    c = (
        -np.einsum("...ij,...ij->...", dadt, sigma)
        + np.einsum("...ij,...kij,...k->...", a, Gamdot, dw)
        - 0.5 * Lvv / q
        - 0.5 * Kvv**2 / q**2
        - 0.5 * theta_dot
        - 0.5 * hval * Kvv / sq
        + sq * hdot
    )
    return LinearizedCoefficients(a=a, b=b, c=c)


def apply_linearized(grid: SpatialGrid, coeffs: LinearizedCoefficients, phi) -> np.ndarray:
    """-a^ij phi_ij + b^k phi_k + c phi (the spatial part of the linearised operator)."""
    return (linearized_matrix(grid, coeffs) @ np.asarray(phi, dtype=float).reshape(-1)).reshape(grid.shape)


def linearized_matrix(grid: SpatialGrid, coeffs: LinearizedCoefficients) -> sp.csr_matrix:
    ops = operators(grid)
    n = grid.n
    a = coeffs.a.reshape(-1, n, n)
    b = coeffs.b.reshape(-1, n)
    M = sp.diags(coeffs.c.reshape(-1))
    for i in range(n):
        if b[:, i].any():
            M = M + sp.diags(b[:, i]) @ ops.grad[i]
        for j in range(n):
            if ops.hess[i][j].nnz and a[:, i, j].any():
                M = M - sp.diags(a[:, i, j]) @ ops.hess[i][j]
    return M.tocsr()


def flow_operator(chart, grid, w_now, w_prev, ds, H_field, orientation="future", delta_floor=_geo.DELTA_FLOOR):
    """Backward-difference evaluation of F(w) = d_s w - q^(1/2)(H - Hpres)."""
    v = flow_velocity(chart, grid, w_now, H_field, orientation, delta_floor)
    return (np.asarray(w_now) - np.asarray(w_prev)) / ds - v


# --------------------------------------------------------------------------
# time stepping
# --------------------------------------------------------------------------


def spectral_radius_bound(grid: SpatialGrid, a: np.ndarray) -> np.ndarray:
    """Per-node Gershgorin bound of the discrete operator a^ij d_i d_j."""
    h = grid.h
    n = grid.n
    if grid.topology == "radial":
        diag = a[..., 0, 0] + (n - 1) * (a[..., 1, 1] if n > 1 else 0.0)
        return 4.0 * diag / h**2
    diag = np.einsum("...ii->...", a)
    off = np.abs(a).sum(axis=(-1, -2)) - np.abs(np.einsum("...ii->...i", a)).sum(axis=-1)
    return 4.0 * diag / h**2 + 2.0 * off / h**2


def stable_dt(chart, grid, state, H_field=None, config: FlowConfig = FlowConfig()) -> float:
    """Explicit-stability step 4 cfl / rho with rho the largest Gershgorin bound."""
    f = _geo.graph_fields(chart, grid, state.w, delta_floor=0.0)
    rho = spectral_radius_bound(grid, principal_coefficients(f))
    rho_max = float(np.max(rho[grid.interior_mask()]))
    return 4.0 * config.cfl / rho_max


def _rho_max(chart, grid, w):
    f = _geo.graph_fields(chart, grid, w, delta_floor=0.0)
    rho = spectral_radius_bound(grid, principal_coefficients(f))
    return float(np.max(rho[grid.interior_mask()]))


@lru_cache(maxsize=256)
def rkc_coefficients(s: int, eps: float = 2.0 / 13.0):
    """Stage coefficients of the damped second-order Chebyshev scheme with s stages."""
    if s < 2:
        raise ValueError("RKC needs at least two stages")
    w0 = 1.0 + eps / s**2
    T = np.zeros(s + 1)
    dT = np.zeros(s + 1)
    d2T = np.zeros(s + 1)
    T[0], T[1] = 1.0, w0
    dT[1] = 1.0
    for j in range(2, s + 1):
        T[j] = 2.0 * w0 * T[j - 1] - T[j - 2]
        dT[j] = 2.0 * T[j - 1] + 2.0 * w0 * dT[j - 1] - dT[j - 2]
        d2T[j] = 4.0 * dT[j - 1] + 2.0 * w0 * d2T[j - 1] - d2T[j - 2]
    w1 = dT[s] / d2T[s]
    b = np.zeros(s + 1)
    b[2:] = d2T[2:] / dT[2:] ** 2
    b[0] = b[1] = b[2]
    a = 1.0 - b * T
    mu = np.zeros(s + 1)
    nu = np.zeros(s + 1)
    mut = np.zeros(s + 1)
    gt = np.zeros(s + 1)
    mut[1] = b[1] * w1
    for j in range(2, s + 1):
        mu[j] = 2.0 * b[j] * w0 / b[j - 1]
        nu[j] = -b[j] / b[j - 2]
        mut[j] = 2.0 * b[j] * w1 / b[j - 1]
        gt[j] = -a[j - 1] * mut[j]
    c = np.zeros(s + 1)
    c[1] = mut[1]
    for j in range(2, s + 1):
        c[j] = mu[j] * c[j - 1] + nu[j] * c[j - 2] + mut[j] + gt[j]
    beta = (w0 + 1.0) * d2T[s] / dT[s]
    return dict(mu=mu, nu=nu, mut=mut, gt=gt, c=c, beta=beta)


def rkc_stages_for(dt_rho: float, safety: float = 1.2, eps: float = 2.0 / 13.0) -> int:
    """Smallest stage count whose real stability interval covers safety * dt * rho."""
    target = safety * dt_rho
    lo, hi = 2, 4
    while rkc_coefficients(hi, eps)["beta"] < target:
        lo, hi = hi, 2 * hi
    if rkc_coefficients(lo, eps)["beta"] >= target:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rkc_coefficients(mid, eps)["beta"] >= target:
            hi = mid
        else:
            lo = mid
    return hi


class _Stepper:
    """Bundles the right-hand side with its boundary treatment."""

    def __init__(self, chart, grid, H_field, config: FlowConfig, w_initial):
        self.chart, self.grid, self.H_field, self.config = chart, grid, H_field, config
        self.bmask = grid.boundary_mask()
        self.w_boundary = np.asarray(w_initial, dtype=float)[self.bmask].copy()
        self.evaluations = 0
        self.fast = grid.topology == "radial" and _geo._is_standard_flat(chart)
        self.X = grid.points()

    def profile_rate(self, s):
        prof = self.config.profile
        ds = 1e-6 * max(1.0, abs(s))
        return (prof(self.grid, s + ds)[self.bmask] - prof(self.grid, s - ds)[self.bmask]) / (2 * ds)

    def rhs(self, w, s):
        self.evaluations += 1
        if self.fast:
            sgn = _orientation_sign(self.config.orientation)
            H, q = _geo.flat_radial_mean_curvature(self.grid, w, delta_floor=0.0)
            hc = self.H_field.constant_value
            if hc is None:
                hc = self.H_field(np.concatenate([w[:, None], self.X], axis=-1))
            v = sgn * np.sqrt(q) * (sgn * H - hc)
        else:
            v, *_ = _velocity_parts(self.chart, self.grid, w, self.H_field, self.config.orientation, delta_floor=0.0)
        if self.bmask.any():
            if self.config.boundary == "pin-profile":
                v[self.bmask] = self.profile_rate(s)
            else:
                v[self.bmask] = 0.0
        return v

    def fix_boundary(self, w, s):
        if self.bmask.any():
            if self.config.boundary == "pin-profile":
                w[self.bmask] = self.config.profile(self.grid, s)[self.bmask]
            else:
                w[self.bmask] = self.w_boundary
        return w

    def choose_dt(self, w, s):
        cfg = self.config
        if cfg.dt is not None:
            dt = cfg.dt
        elif cfg.integrator == "rkc":
            dt = cfg.dt_max if cfg.dt_max is not None else max(cfg.s_end, 1e-12) / 100.0
            beta_max = rkc_coefficients(cfg.rkc_max_stages, cfg.rkc_damping)["beta"]
            dt = min(dt, beta_max / (1.2 * _rho_max(self.chart, self.grid, w)))
        else:
            dt = 4.0 * cfg.cfl / _rho_max(self.chart, self.grid, w)
            if cfg.dt_max is not None:
                dt = min(dt, cfg.dt_max)
        return dt

    def advance(self, w, s, dt):
        cfg = self.config
        F = self.rhs
        if cfg.integrator == "euler":
            out = w + dt * F(w, s)
        elif cfg.integrator == "rk2":
            k1 = F(w, s)
            k2 = F(w + dt * k1, s + dt)
            out = w + 0.5 * dt * (k1 + k2)
        elif cfg.integrator == "rk4":
            k1 = F(w, s)
            k2 = F(w + 0.5 * dt * k1, s + 0.5 * dt)
            k3 = F(w + 0.5 * dt * k2, s + 0.5 * dt)
            k4 = F(w + dt * k3, s + dt)
            out = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            out = self._rkc(w, s, dt)
        return self.fix_boundary(out, s + dt)

    def _rkc(self, w, s, dt):
        rho = _rho_max(self.chart, self.grid, w)
        eps = self.config.rkc_damping
        st = min(rkc_stages_for(dt * rho, eps=eps), self.config.rkc_max_stages)
        co = rkc_coefficients(st, eps)
        F0 = self.rhs(w, s)
        y_prev2 = w
        y_prev = w + co["mut"][1] * dt * F0
        for j in range(2, st + 1):
            Fj = self.rhs(y_prev, s + co["c"][j - 1] * dt)
            y = (
                (1.0 - co["mu"][j] - co["nu"][j]) * w
                + co["mu"][j] * y_prev
                + co["nu"][j] * y_prev2
                + co["mut"][j] * dt * Fj
                + co["gt"][j] * dt * F0
            )
            y_prev2, y_prev = y_prev, y
        return y_prev


def step(chart, state: GraphState, H_field, config: FlowConfig, dt: Optional[float] = None,
         _stepper: Optional[_Stepper] = None) -> GraphState:
    """Advance one explicit step; the output is revalidated against the spacelike floor."""
    stepper = _stepper or _Stepper(chart, state.grid, H_field, config, state.w)
    if dt is None:
        dt = stepper.choose_dt(state.w, state.s)
    if not np.isfinite(dt) or dt < 1e-14:
        raise StepTooSmall(f"time step {dt:.3e} underflows")
    try:
        w_new = stepper.advance(state.w.copy(), state.s, dt)
    except SpacelikeViolation as exc:
        raise SpacelikeViolation(str(exc), q_min=exc.q_min, state=state) from exc
    if not np.all(np.isfinite(w_new)):
        raise SpacelikeViolation("non-finite heights produced", state=state)
    f = _geo.graph_fields(chart, state.grid, w_new, delta_floor=0.0)
    try:
        _geo.check_margin(state.grid, f["q"], config.delta_floor, state=state)
    except SpacelikeViolation as exc:
        raise SpacelikeViolation(str(exc), q_min=exc.q_min, state=state) from exc
    return GraphState(state.grid, w_new, state.s + dt)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


@dataclass
class FlowResult:
    records: list
    final: GraphState
    termination: str = "completed"
    message: str = ""
    steps: int = 0
    evaluations: int = 0
    snapshots: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.termination == "completed"


def run_flow(chart, initial: GraphState, H_field, config: FlowConfig, diagnostics=None,
             frame=None, on_record=None) -> FlowResult:
    """Integrate to ``config.s_end`` recording diagnostics every ``record_every`` steps.

    Step sizes are frozen in blocks of ``record_every`` steps so that every
    record sits in the middle of an equally spaced window of three states,
    which is what the evolution-identity residuals need.
    """
    from . import diagnostics as _diag

    dcfg = diagnostics if diagnostics is not None else _diag.DiagnosticsConfig(frame=frame)
    grid = initial.grid
    f0 = _geo.graph_fields(chart, grid, initial.w, delta_floor=0.0)
    _geo.check_margin(grid, f0["q"], config.delta_floor, state=initial)
    stepper = _Stepper(chart, grid, H_field, config, initial.w)
    R = config.record_every
    records: List = []
    snapshots = []
    warned = False

    def emit(rec, st):
        nonlocal warned
        records.append(rec)
        if on_record is not None:
            on_record(rec, st)
        if dcfg.snapshot_every and (len(records) - 1) % dcfg.snapshot_every == 0:
            snapshots.append(st)
        if not warned and rec.q_min < config.delta_warn:
            log.warning("spacelike margin %.3g below warning level %.3g at s=%.4g", rec.q_min, config.delta_warn, rec.s)
            warned = True
        if rec.barrier_violations and dcfg.barrier is not None and dcfg.barrier.fatal:
            raise BarrierViolation(f"{rec.barrier_violations} barrier violations at s={rec.s:.4g}")
        if dcfg.escape_window is not None:
            lo, hi = dcfg.escape_window
            if rec.u_min <= lo or rec.u_max >= hi:
                raise HeightEscape(f"height left ({lo}, {hi}) at s={rec.s:.4g}")

    def record(st, window=None):
        return _diag.make_record(chart, st, H_field, dcfg, config.orientation, window=window)

    history = [initial]
    cur = initial
    k = 0
    dt = None
    termination, message = "completed", ""
    recorded_last = -1
    try:
        emit(record(initial), initial)
        recorded_last = 0
        while cur.s < config.s_end * (1 - 1e-12) and k < config.max_steps:
            if k % R == 0 or dt is None:
                dt = stepper.choose_dt(cur.w, cur.s)
            dt_eff = min(dt, config.s_end - cur.s)
            nxt = step(chart, cur, H_field, config, dt=dt_eff, _stepper=stepper)
            k += 1
            history = (history + [nxt])[-3:]
            cur = nxt
            # the state at index k-1 is recorded once its successor exists
            j = k - 1
            if j >= 1 and j % R == 1 % R and j != recorded_last and len(history) == 3:
                emit(record(history[1], window=tuple(history)), history[1])
                recorded_last = j
        if k != recorded_last:
            emit(record(cur), cur)
    except PmcfError as exc:
        termination, message = exc.reason, str(exc)
        if isinstance(exc, SpacelikeViolation) and exc.state is not None:
            cur = exc.state
    return FlowResult(records, cur, termination, message, k, stepper.evaluations, snapshots)


# --------------------------------------------------------------------------
# Newton solver for stationary surfaces
# --------------------------------------------------------------------------


def stationary_residual(chart, grid, w, H_field, orientation="future", delta_floor=_geo.DELTA_FLOOR):
    """(H - Hpres) at every node, in the convention of ``orientation``."""
    _, f, H, hval = _velocity_parts(chart, grid, w, H_field, orientation, delta_floor)
    return H - hval


def stationary_solve(chart, initial: GraphState, H_field, tol: float = 1e-8, max_iter: int = 50,
                     orientation: str = "future", delta_floor: float = _geo.DELTA_FLOOR,
                     history: Optional[list] = None) -> GraphState:
    """Newton iteration on q^(1/2)(H - Hpres) = 0 with Dirichlet data from ``initial``.

    The Jacobian is assembled from the linearised coefficients and the same
    sparse stencils as the residual.  ``history`` (if given) receives
    sup|H - Hpres| over interior nodes before each iteration and at the end.
    """
    grid = initial.grid
    interior = grid.interior_mask().reshape(-1)
    w = initial.w.copy()
    hist = history if history is not None else []
    for it in range(max_iter + 1):
        v, f, H, hval = _velocity_parts(chart, grid, w, H_field, orientation, delta_floor,
                                        state=GraphState(grid, w, initial.s))
        err = float(np.max(np.abs((H - hval).reshape(-1)[interior])))
        hist.append(err)
        if err <= tol:
            return GraphState(grid, w, initial.s)
        if it == max_iter:
            break
        coeffs = linearized_coefficients(chart, grid, w, H_field, orientation, delta_floor=0.0)
        J = linearized_matrix(grid, coeffs).tolil()
        rhs = v.reshape(-1).copy()
        bidx = np.flatnonzero(~interior)
        for i in bidx:
            J.rows[i] = [i]
            J.data[i] = [1.0]
        rhs[bidx] = 0.0
        J = J.tocsc()
        phi = spla.spsolve(J, rhs)
        res = J @ phi - rhs
        if np.linalg.norm(res) > 1e-12 * max(np.linalg.norm(rhs), 1e-300):
            phi = phi + spla.spsolve(J, rhs - J @ phi)
        w = w + phi.reshape(grid.shape)
    raise NoConvergence(f"Newton did not reach {tol:g} in {max_iter} iterations", history=hist)
