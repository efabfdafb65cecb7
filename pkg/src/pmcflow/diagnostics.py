"""Monitored quantities along a flow: Ecker's quantity, evolution-identity
residuals, barrier checks, decay fits and CSV export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import geometry as _geo
from .charts import ricci_from_riemann, riemann
from .errors import InsufficientData, NonPositiveValue, WindowError
from .grids import GraphState, derivatives

CSV_COLUMNS = (
    "s",
    "sup_H_minus_h",
    "sup_kappa",
    "sup_A",
    "sup_phi",
    "u_min",
    "u_max",
    "q_min",
    "r1",
    "r6",
    "r7",
    "barrier_violations",
)


@dataclass
class DiagnosticsRecord:
    s: float
    sup_H_minus_h: float
    sup_kappa: float
    sup_A: float
    sup_phi: float
    u_min: float
    u_max: float
    q_min: float
    r1: float = math.nan
    r6: float = math.nan
    r7: float = math.nan
    barrier_violations: int = 0
    extras: dict = field(default_factory=dict)

    def row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


Profile = Union[float, Callable[[np.ndarray], np.ndarray], None]


@dataclass(frozen=True)
class BarrierSpec:
    """Lower/upper height bounds: constants (tau levels) or callables of node points.

    ``tolerance`` absorbs discretisation error; a node violates the barrier
    when u < lower - tolerance or u > upper + tolerance.
    """

    lower: Profile = None
    upper: Profile = None
    fatal: bool = False
    tolerance: float = 0.0

    def __post_init__(self):
        if isinstance(self.lower, (int, float)) and isinstance(self.upper, (int, float)):
            if not self.lower < self.upper:
                raise ValueError("barrier lower level must be below the upper level")


@dataclass(frozen=True)
class BarrierReport:
    violations: int
    worst_margin: float


@dataclass(frozen=True)
class DiagnosticsConfig:
    """What to monitor.  ``frame`` is the time function used for kappa and u."""

    frame: object = None
    lam: float = 1.0
    mu: float = 1.0
    barrier: Optional[BarrierSpec] = None
    residuals: bool = True
    escape_window: Optional[tuple] = None
    snapshot_every: Optional[int] = None
    residual_margin: int = 3


def ecker_quantity(geom: _geo.SurfaceGeometry, H_field, lam: float = 1.0, mu: float = 1.0) -> np.ndarray:
    """Phi = exp(lam u) kappa^2 + mu (H - Hpres)^2 per node."""
    diff = geom.H - H_field(geom.points) if callable(H_field) else geom.H - H_field
    return np.exp(lam * geom.u) * geom.kappa**2 + mu * diff**2


def _evaluate(profile, points, like):
    if profile is None:
        return None
    if callable(profile):
        return np.asarray(profile(points), dtype=float)
    return np.full(like.shape, float(profile))


def barrier_check(u, spec: BarrierSpec, points=None) -> BarrierReport:
    """Count nodes outside the barrier band and report the smallest signed margin."""
    u = np.asarray(u, dtype=float)
    margins = []
    bad = np.zeros(u.shape, dtype=bool)
    lo = _evaluate(spec.lower, points, u)
    hi = _evaluate(spec.upper, points, u)
    if lo is not None:
        margins.append(u - lo)
        bad |= u < lo - spec.tolerance
    if hi is not None:
        margins.append(hi - u)
        bad |= u > hi + spec.tolerance
    worst = float(np.min([m.min() for m in margins])) if margins else math.inf
    return BarrierReport(violations=int(bad.sum()), worst_margin=worst)


def decay_fit(series, window=None):
    """Least-squares fit log(value) = log(amplitude) - rate * s over a window.

    Returns ``(rate, amplitude, fit_residual)`` with the RMS log-residual.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a sequence of (s, value) pairs")
    s, val = arr[:, 0], arr[:, 1]
    if window is not None:
        sel = (s >= window[0] - 1e-12) & (s <= window[1] + 1e-12)
        s, val = s[sel], val[sel]
    if s.size < 8:
        raise InsufficientData(f"need at least 8 samples in the window, got {s.size}")
    if np.any(val <= 0):
        raise NonPositiveValue("decay fit needs strictly positive values")
    y = np.log(val)
    slope, intercept = np.polyfit(s, y, 1)
    resid = y - (slope * s + intercept)
    return float(-slope), float(math.exp(intercept)), float(np.sqrt(np.mean(resid**2)))


def gradient_identity_residual(geom: _geo.SurfaceGeometry, mask=None) -> float:
    """max | |grad u|^2_gamma - alpha^-2 (kappa^2 - 1) | with grad u by finite differences."""
    lhs = _geo.surface_gradient_sq(geom, geom.u)
    rhs = (geom.kappa**2 - 1.0) / geom.alpha**2
    diff = np.abs(lhs - rhs)
    if mask is None and geom.grid is not None:
        mask = geom.grid.interior_mask()
    return float(np.max(diff[mask] if mask is not None else diff))


def residual_mask(grid, margin: int = 3) -> np.ndarray:
    """Nodes at least ``margin`` cells away from any Dirichlet boundary."""
    if grid.topology == "box-periodic":
        return np.ones(grid.shape, dtype=bool)
    mask = np.ones(grid.shape, dtype=bool)
    if grid.topology == "radial":
        mask[grid.nodes_per_axis - margin:] = False
        return mask
    for ax in range(grid.n):
        idx = [slice(None)] * grid.n
        idx[ax] = slice(0, margin)
        mask[tuple(idx)] = False
        idx[ax] = slice(grid.nodes_per_axis - margin, None)
        mask[tuple(idx)] = False
    return mask


def _lie_derivative_metric(grid, V, gamma):
    """(L_V gamma)_ij for a tangential field V^i on the graph grid."""
    n = grid.n
    if grid.topology == "radial":
        h = grid.h
        r = grid.axis_coords()
        Vr = V[:, 0]
        dV, _ = derivatives(grid, Vr)
        dVr = dV[:, 0]
        # V is odd in r: V'(0) from a fourth-order one-sided formula
        dVr[0] = (8.0 * Vr[1] - Vr[2]) / (6.0 * h)
        V_over_r = np.empty_like(Vr)
        V_over_r[1:] = Vr[1:] / r[1:]
        V_over_r[0] = dVr[0]
        out = np.zeros_like(gamma)
        d_gr, _ = derivatives(grid, gamma[:, 0, 0])
        out[:, 0, 0] = Vr * d_gr[:, 0] + 2.0 * gamma[:, 0, 0] * dVr
        if n > 1:
            d_gt, _ = derivatives(grid, gamma[:, 1, 1])
            val = Vr * d_gt[:, 0] + 2.0 * gamma[:, 1, 1] * V_over_r
            for k in range(1, n):
                out[:, k, k] = val
        return out
    dgam = np.empty(gamma.shape + (n,))
    for i in range(n):
        for j in range(n):
            dgam[..., i, j, :] = derivatives(grid, gamma[..., i, j])[0]
    dV = np.empty(V.shape + (n,))
    for k in range(n):
        dV[..., k, :] = derivatives(grid, V[..., k])[0]
    # V^k d_k gamma_ij + gamma_kj d_i V^k + gamma_ik d_j V^k
    out = np.einsum("...k,...ijk->...ij", V, dgam)
    term = np.einsum("...kj,...ki->...ij", gamma, dV)
    return out + term + np.swapaxes(term, -1, -2)


def _ricci_nu_nu(chart, geom):
    if chart.flat:
        return np.zeros(geom.H.shape)
    P = geom.points
    G = chart.metric(P)
    Ric = ricci_from_riemann(G, riemann(chart, P))
    return np.einsum("...a,...ab,...b->...", geom.nu, Ric, geom.nu)


def evolution_residuals(window: Sequence[GraphState], chart, H_field, frame=None, orientation="future",
                        delta_floor: float = 0.0, margin: int = 3, geoms=None):
    """Residuals (r1, r6, r7) of the metric, speed and height evolution identities.

    The graph moves at fixed x, which differs from the normal flow by the
    tangential field V^i = -d_s w lam^2 w^i; each identity is corrected by the
    corresponding Lie-derivative term before the residual is taken.
    """
    if len(window) != 3:
        raise WindowError("need exactly three states")
    s0, s1, s2 = (st.s for st in window)
    ds = s1 - s0
    if ds <= 0 or not math.isclose(s2 - s1, ds, rel_tol=1e-9, abs_tol=1e-15):
        raise WindowError(f"states are not equally spaced in s ({s0}, {s1}, {s2})")
    grid = window[0].grid
    if geoms is None:
        geoms = [
            _geo.graph_geometry(chart, grid, st, diag_frame=frame, orientation=orientation, delta_floor=delta_floor)
            for st in window
        ]
    gm, gc, gp = geoms
    E = [g.H - H_field(g.points) for g in geoms]
    Ec = E[1]
    mask = residual_mask(grid, margin)

    w_s = (window[2].w - window[0].w) / (2 * ds)
    lam2 = gc.extras["lam"] ** 2
    wup = gc.extras["chart_fields"]["wup"]
    V = -(w_s * lam2)[..., None] * wup
    dgam = (gp.gamma - gm.gamma) / (2 * ds)
    r1_field = dgam - _lie_derivative_metric(grid, V, gc.gamma) - 2.0 * Ec[..., None, None] * gc.A
    r1 = float(np.max(np.abs(r1_field[mask])))

    du, _ = derivatives(grid, gc.u)
    u_s = (gp.u - gm.u) / (2 * ds)
    r7_field = u_s - np.einsum("...i,...i->...", V, du) - gc.kappa / gc.alpha * Ec
    r7 = float(np.max(np.abs(r7_field[mask])))

    dE, _ = derivatives(grid, Ec)
    E_s = (E[2] - E[0]) / (2 * ds)
    lap = _geo.surface_laplacian(gc, Ec)
    A2 = gc.A_norm**2
    dh_nu = np.einsum("...a,...a->...", H_field.grad(gc.points), gc.nu)
    r6_field = E_s - np.einsum("...i,...i->...", V, dE) - lap + (A2 + _ricci_nu_nu(chart, gc) + dh_nu) * Ec
    r6 = float(np.max(np.abs(r6_field[mask])))
    return r1, r6, r7


def make_record(chart, state: GraphState, H_field, dcfg: DiagnosticsConfig, orientation="future",
                window=None) -> DiagnosticsRecord:
    """Assemble one diagnostics row for ``state`` (residuals when a window is given)."""
    grid = state.grid
    geom = _geo.graph_geometry(chart, grid, state, diag_frame=dcfg.frame, orientation=orientation, delta_floor=0.0)
    interior = grid.interior_mask()
    diff = geom.H - H_field(geom.points)
    phi = ecker_quantity(geom, H_field, dcfg.lam, dcfg.mu)
    r1 = r6 = r7 = math.nan
    if window is not None and dcfg.residuals:
        try:
            geoms = [
                _geo.graph_geometry(chart, grid, st, diag_frame=dcfg.frame, orientation=orientation, delta_floor=0.0)
                for st in (window[0], window[2])
            ]
            r1, r6, r7 = evolution_residuals(window, chart, H_field, dcfg.frame, orientation,
                                             margin=dcfg.residual_margin, geoms=[geoms[0], geom, geoms[1]])
        except WindowError:
            pass
    violations = 0
    extras = dict(
        grad_identity=gradient_identity_residual(geom),
        min_H_minus_h=float(np.min(diff[interior])),
        h=grid.h,
    )
    if dcfg.barrier is not None:
        rep = barrier_check(geom.u, dcfg.barrier, grid.points())
        violations = rep.violations
        extras["barrier_margin"] = rep.worst_margin
    return DiagnosticsRecord(
        s=float(state.s),
        sup_H_minus_h=float(np.max(np.abs(diff[interior]))),
        sup_kappa=float(np.max(geom.kappa)),
        sup_A=float(np.max(geom.A_norm)),
        sup_phi=float(np.max(phi)),
        u_min=float(np.min(geom.u)),
        u_max=float(np.max(geom.u)),
        q_min=float(np.min(geom.q)),
        r1=r1,
        r6=r6,
        r7=r7,
        barrier_violations=violations,
        extras=extras,
    )


def write_csv(records, path) -> None:
    """One row per record, columns in the fixed order of ``CSV_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CSV_COLUMNS)
        for rec in records:
            wr.writerow([repr(float(x)) if isinstance(x, float) else x for x in rec.row()])
