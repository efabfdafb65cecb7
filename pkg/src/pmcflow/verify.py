"""Self-checks of the runnable invariants, executed concurrently.

Each check returns a pass flag and a signed margin (positive when passing).
``verify_suite`` filters checks by substring of their name or tags and runs
them on a thread pool whose size is capped by ``PMCFLOW_THREADS``.
"""

from __future__ import annotations

import fnmatch
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import flow as _flow
from . import foliation as _fol
from . import geometry as _geo
from . import spacetimes as _st
from .charts import ReferenceFrame, reference_norm, tilt_factor
from .grids import GraphState, SpatialGrid


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""
    seconds: float = 0.0


@dataclass
class VerifyReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {r.name: {"pass": r.passed, "margin": r.margin, "detail": r.detail} for r in self.results}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class _Check:
    name: str
    fn: Callable[[], tuple]
    tags: tuple = ()


_REGISTRY: Dict[str, _Check] = {}


def register(name: str, *tags: str):
    def deco(fn):
        _REGISTRY[name] = _Check(name, fn, tags)
        return fn

    return deco


def available_checks() -> List[str]:
    return sorted(_REGISTRY)


def thread_count() -> int:
    env = os.environ.get("PMCFLOW_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            pass
    return cap


# --------------------------------------------------------------------------
# reference-metric and tilt properties
# --------------------------------------------------------------------------


def _random_boost(rng, n, rapidity):
    """Boost of the given rapidity along a random spatial direction."""
    d = rng.normal(size=n)
    d /= np.linalg.norm(d)
    B = np.eye(n + 1)
    ch, sh = math.cosh(rapidity), math.sinh(rapidity)
    B[0, 0] = ch
    B[0, 1:] = B[1:, 0] = sh * d
    B[1:, 1:] += (ch - 1.0) * np.outer(d, d)
    return B


def tilt_equivalence_samples(samples: int = 10_000, n: int = 3, seed: int = 0, max_rapidity: float = 3.0):
    """Worst value of |||w|||'^2 / (4 v^2 |||w|||^2) over random frame pairs and vectors.

    T = L e0 and T' = L B e0 with L a random boost and B a boost of random
    rapidity, so (T, T') is a random pair of unit future timelike vectors.
    """
    rng = np.random.default_rng(seed)
    G = np.diag([-1.0] + [1.0] * n)
    e0 = np.eye(n + 1)[0]
    worst = 0.0
    violations = 0
    for _ in range(samples):
        L = _random_boost(rng, n, rng.uniform(0, max_rapidity))
        B = _random_boost(rng, n, rng.uniform(0, max_rapidity))
        T = L @ e0
        Tp = L @ B @ e0
        v = tilt_factor(G, T, Tp)
        fr = ReferenceFrame.from_vector(G, T)
        frp = ReferenceFrame.from_vector(G, Tp)
        w = rng.normal(size=n + 1)
        a = reference_norm(frp, w, "u") ** 2
        b = reference_norm(fr, w, "u") ** 2
        ratio = a / (4.0 * v**2 * b)
        worst = max(worst, ratio)
        violations += ratio > 1.0
    return worst, violations


@register("tilt-equivalence", "tilt", "charts")
def _check_tilt_equivalence():
    worst, viol = tilt_equivalence_samples()
    return viol == 0, 1.0 - worst, f"{viol} violations in 10000 samples, worst ratio {worst:.4f}"


@register("tilt-boost-norm", "tilt", "charts")
def _check_tilt_boost_norm():
    rng = np.random.default_rng(1)
    G = np.diag([-1.0, 1.0, 1.0, 1.0])
    e0 = np.eye(4)[0]
    fr = ReferenceFrame.from_vector(G, e0)
    err = 0.0
    for _ in range(1000):
        Tp = _random_boost(rng, 3, rng.uniform(0, 3)) @ e0
        v = tilt_factor(G, e0, Tp)
        err = max(err, abs(reference_norm(fr, Tp, "u") ** 2 - (2 * v**2 - 1)) / v**2)
    return err < 1e-10, 1e-10 - err, f"max relative error {err:.2e}"


# --------------------------------------------------------------------------
# surface geometry
# --------------------------------------------------------------------------


def _hyperboloid_geometry(n, tau0, nodes, r_max):
    grid = SpatialGrid.radial(n, nodes, r_max)
    state = _st.hyperboloid_profile(tau0, grid)
    frame = _st.make_hyperboloid_frame()
    geom = _geo.graph_geometry(_st.make_minkowski_chart(n), grid, state, diag_frame=frame, delta_floor=1e-3)
    return grid, state, geom


def umbilicity_error(n=3, tau0=2.0, nodes=257, r_max=4.0):
    _, _, geom = _hyperboloid_geometry(n, tau0, nodes, r_max)
    return float(np.max(np.abs(geom.A - geom.gamma / tau0)))


@register("umbilicity", "geometry")
def _check_umbilicity():
    e1 = umbilicity_error(nodes=129)
    e2 = umbilicity_error(nodes=257)
    ratio = e1 / e2 if e2 > 0 else math.inf
    ok = e2 < 1e-3 and 3.0 <= ratio <= 5.0
    return ok, 1e-3 - e2, f"max|A - gamma/tau0| = {e2:.3e}, refinement ratio {ratio:.2f}"


@register("frame-identity", "geometry")
def _check_frame_identity():
    # S_tau0 is the slice t = 0 of its Gaussian chart; its normal is exactly d_t
    n, tau0 = 3, 1.5
    grid = SpatialGrid.box(n, 9, -1.0, 1.0)
    chart = _st.make_hyperboloid_gaussian_chart(n, tau0)
    geom = _geo.graph_geometry(chart, grid, GraphState(grid, np.zeros(grid.shape), 0.0), diag_frame=chart)
    err = float(np.max(np.abs(geom.kappa - 1.0)))
    return err < 1e-10, 1e-10 - err, f"max|kappa - 1| = {err:.2e}"


def gradient_identity_error(nodes, amplitude=0.05):
    n = 2
    grid = SpatialGrid.radial(n, nodes, 4.0)
    r = grid.radius()
    w = np.sqrt(1.0 + r**2) + amplitude * np.exp(-((r - 1.0) ** 2))
    state = GraphState(grid, w, 0.0)
    geom = _geo.graph_geometry(_st.make_minkowski_chart(n), grid, state,
                               diag_frame=_st.make_hyperboloid_frame(), delta_floor=1e-3)
    from .diagnostics import gradient_identity_residual

    return gradient_identity_residual(geom)


@register("gradient-identity", "geometry", "diagnostics")
def _check_gradient_identity():
    e1, e2 = gradient_identity_error(65), gradient_identity_error(129)
    ratio = e1 / e2
    return 3.0 <= ratio <= 5.0, min(ratio - 3.0, 5.0 - ratio), f"residual {e2:.3e}, ratio {ratio:.2f}"


def graph_embedding_discrepancy(chart, height, n: int, nodes: int, lo=-1.0, hi=1.0, warp=0.05):
    """max|H_graph - H_embedding| on a box, the embedding being reparametrised.

    The embedding is sampled at x = y + warp sin(4 pi (y - lo) / (hi - lo)) on a
    uniform y grid.  The warp fixes the quarter points of each axis, where both
    evaluations are compared, and keeps the two finite-difference stencils
    genuinely different.
    """
    grid = SpatialGrid.box(n, nodes, lo, hi)
    x = grid.points()
    g1 = _geo.graph_geometry(chart, grid, GraphState(grid, height(x), 0.0), delta_floor=1e-3)
    L = hi - lo
    xw = x + warp * np.sin(4 * np.pi * (x - lo) / L)
    X = np.concatenate([height(xw)[..., None], xw], axis=-1)
    g2 = _geo.embedding_geometry(chart, X, (grid.h,) * n)
    ax = grid.axis_coords()
    k = np.arange(1, 4)
    idx = np.array([int(np.argmin(np.abs(ax - (lo + j * L / 4)))) for j in k])
    if not np.allclose(ax[idx], lo + k * L / 4, atol=1e-12):
        raise ValueError("nodes_per_axis must be 1 mod 4 so the quarter points are nodes")
    sel = np.ix_(*([idx] * n))
    return float(np.max(np.abs(g1.H[sel] - g2.H[sel])))


def radial_embedding_discrepancy(chart, profile, n: int, nodes: int, r_max: float):
    """max|H_graph - H_embedding| along a ray: radial graph stencils vs a Cartesian patch.

    The embedding is the Cartesian slab x1 in [-h, r_max], |x_k| <= h for k > 1,
    compared on its middle transverse line away from the outer end.
    """
    grid = SpatialGrid.radial(n, nodes, r_max)
    r = grid.axis_coords()
    g1 = _geo.graph_geometry(chart, grid, GraphState(grid, profile(r), 0.0), delta_floor=1e-3)
    h = grid.h
    x1 = np.concatenate([[-h], r])
    axes = [x1] + [np.array([-h, 0.0, h])] * (n - 1)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    rad = np.linalg.norm(mesh, axis=-1)
    X = np.concatenate([profile(rad)[..., None], mesh], axis=-1)
    g2 = _geo.embedding_geometry(chart, X, (h,) * n)
    mid = (slice(None),) + (1,) * (n - 1)
    H2 = g2.H[mid][1:]
    sel = slice(0, nodes - 4)
    return float(np.max(np.abs(g1.H[sel] - H2[sel])))


@register("graph-vs-embedding", "geometry", "oracle")
def _check_graph_vs_embedding():
    chart = _st.make_minkowski_chart(2)

    def height(x):
        return np.sqrt(1.0 + np.sum(x**2, axis=-1)) + 0.05 * np.exp(-np.sum((x - 0.2) ** 2, axis=-1))

    errs = [graph_embedding_discrepancy(chart, height, 2, N) for N in (33, 65)]
    ratio = errs[0] / errs[1]
    return 3.5 <= ratio <= 4.5, min(ratio - 3.5, 4.5 - ratio), f"discrepancy {errs[1]:.3e}, ratio {ratio:.2f}"


# --------------------------------------------------------------------------
# flow operator
# --------------------------------------------------------------------------


@register("stationary-velocity", "flow")
def _check_stationary_velocity():
    vals = []
    for N in (129, 257):
        grid = SpatialGrid.radial(3, N, 4.0)
        st = _st.hyperboloid_profile(2.0, grid)
        v = _flow.flow_velocity(_st.make_minkowski_chart(3), grid, st, _flow.PrescribedCurvatureField.constant(1.5),
                                delta_floor=1e-3)
        vals.append(float(np.max(np.abs(v))))
    ratio = vals[0] / vals[1]
    return 3.0 <= ratio <= 5.0, min(ratio - 3.0, 5.0 - ratio), f"max velocity {vals[1]:.3e}, ratio {ratio:.2f}"


def linearization_mismatch(eps_values=(2.5e-4, 1.25e-4), samples=100, seed=0, nodes=65):
    """Worst FD mismatch |F(v + eps phi) - F(v) - eps DF phi| per eps over random phi."""
    rng = np.random.default_rng(seed)
    n = 1
    grid = SpatialGrid.radial(n, nodes, 3.0)
    chart = _st.make_minkowski_chart(n)
    H = _st.example_prescribed_field()
    r = grid.radius()
    base = np.sqrt(1.0 + r**2) + 0.05 * np.exp(-((r - 1.0) ** 2))
    coeffs = _flow.linearized_coefficients(chart, grid, base, H, delta_floor=1e-3)
    M = _flow.linearized_matrix(grid, coeffs)
    v0 = _flow.flow_velocity(chart, grid, base, H, delta_floor=1e-3)
    interior = grid.interior_mask()
    out = np.zeros(len(eps_values))
    for _ in range(samples):
        phi = rng.normal(size=grid.shape)
        phi = np.convolve(phi, np.ones(5) / 5, mode="same")
        phi[~interior] = 0.0
        lin = -(M @ phi)
        for k, eps in enumerate(eps_values):
            v1 = _flow.flow_velocity(chart, grid, base + eps * phi, H, delta_floor=1e-3)
            err = np.max(np.abs((v1 - v0 - eps * lin)[interior]))
            out[k] = max(out[k], err / eps)
    return out


@register("linearization", "flow", "newton")
def _check_linearization():
    m = linearization_mismatch()
    ratio = m[0] / m[1]
    return 1.7 <= ratio <= 2.3, min(ratio - 1.7, 2.3 - ratio), f"mismatch/eps {m[1]:.3e}, ratio {ratio:.2f}"


def newton_history(nodes=257, amplitude=0.05):
    grid = SpatialGrid.radial(1, nodes, 8.0)
    r = grid.radius()
    bump = amplitude * np.exp(-(r**2))
    bump[r > 6.0] = 0.0
    st = GraphState(grid, np.sqrt(1.0 + r**2) + bump, 0.0)
    hist: list = []
    _flow.stationary_solve(_st.make_minkowski_chart(1), st, _flow.PrescribedCurvatureField.constant(1.0),
                           tol=1e-8, max_iter=8, delta_floor=1e-3, history=hist)
    return hist


@register("newton", "flow", "newton")
def _check_newton():
    try:
        hist = newton_history()
    except Exception as exc:  # noqa: BLE001 - report entries, not raises
        return False, -1.0, repr(exc)
    iters = len(hist) - 1
    tail = hist[-1] / hist[-2] ** 2 if len(hist) >= 2 and hist[-2] > 0 else math.inf
    ok = hist[-1] <= 1e-8 and iters <= 8
    return ok, 8 - iters, f"{iters} iterations, residuals {', '.join(f'{h:.1e}' for h in hist)}, tail {tail:.2g}"


# --------------------------------------------------------------------------
# foliation
# --------------------------------------------------------------------------


def foliation_hyperboloid_error(n=1, tau0=1.0, nodes=33):
    """Relative error of the integrated foliation against ((tau0+t)/tau0)^2 g0 at t = tau0/2.

    A0 comes from the graph geometry of the hyperboloid, so a flipped extrinsic
    sign makes the surfaces contract and the check fails.
    """
    _, _, geom = _hyperboloid_geometry(n, tau0, nodes, 2.0 * tau0)
    g0 = geom.gamma
    init = _fol.FoliationState.initial(g0, geom.A)
    series = _fol.integrate_foliation(init, tau0 / 2, 1e-3, override_window=True)
    last = series[-1]
    c = (tau0 + last.t) / tau0
    err = float(np.max(np.abs(last.g - c**2 * g0)) / np.max(np.abs(c**2 * g0)))
    return err, _fol.foliation_bounds_check(series).ok


@register("foliation", "foliation")
def _check_foliation():
    # the graph-derived A0 carries O(h^2) error; 1e-3 separates it from a sign flip
    err, bounds = foliation_hyperboloid_error()
    return err < 1e-3 and bounds, 1e-3 - err, f"relative error {err:.2e}, bounds {'pass' if bounds else 'fail'}"


def foliation_closed_forms(n=2, tau0=0.5, seed=0):
    """(hyperboloid error, tanh error, bounds ok) for random positive definite g0."""
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(8, n, n))
    g0 = M @ np.swapaxes(M, 1, 2) + n * np.eye(n)
    init = _fol.FoliationState.initial(g0, g0 / tau0)
    ser = _fol.integrate_foliation(init, tau0 / 2, 1e-3, override_window=n > 1)
    last = ser[-1]
    c = (tau0 + last.t) / tau0
    e1 = max(
        np.max(np.abs(last.g - c**2 * g0)) / np.max(np.abs(c**2 * g0)),
        np.max(np.abs(last.A - (tau0 + last.t) / tau0**2 * g0)) / np.max(np.abs((tau0 + last.t) / tau0**2 * g0)),
    )
    init2 = _fol.FoliationState.initial(g0, np.zeros_like(g0), curvature=lambda t, g: g)
    t_end = min(tau0 / 2, _fol.guaranteed_window(init2.a0, init2.c0, init2.v0))
    ser2 = _fol.integrate_foliation(init2, t_end, 1e-3)
    lam = np.linalg.solve(ser2[-1].g, ser2[-1].A)
    e2 = float(np.max(np.abs(lam - math.tanh(ser2[-1].t) * np.eye(n))))
    ok = _fol.foliation_bounds_check(ser).ok and _fol.foliation_bounds_check(ser2).ok
    return float(e1), e2, ok


@register("foliation-closed-forms", "foliation")
def _check_foliation_closed_forms():
    e1, e2, ok = foliation_closed_forms()
    worst = max(e1, e2)
    return worst <= 1e-8 and ok, 1e-8 - worst, f"hyperboloid {e1:.1e}, tanh {e2:.1e}, bounds {'pass' if ok else 'fail'}"


# --------------------------------------------------------------------------
# spacetime library
# --------------------------------------------------------------------------


def example_field_monotonicity(samples=100_000, seed=0):
    """min <grad Hpres, w> over random future cone points and future timelike w (n = 3)."""
    rng = np.random.default_rng(seed)
    n = 3
    x = rng.normal(size=(samples, n)) * rng.uniform(0, 5, size=(samples, 1))
    r = np.linalg.norm(x, axis=1)
    t = r + rng.uniform(1e-3, 5, size=samples)
    P = np.column_stack([t, x])
    d = rng.normal(size=(samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    speed = rng.uniform(0, 1, size=samples)
    W = np.column_stack([np.ones(samples), speed[:, None] * d]) * rng.uniform(0.1, 10, size=(samples, 1))
    dH = _st.example_prescribed_field().grad(P)
    vals = np.einsum("ia,ia->i", dH, W)
    return float(vals.min()), int(np.sum(vals < 0))


def example_field_bound(nodes=2049, r_max=50.0):
    grid = SpatialGrid.radial(3, nodes, r_max)
    st = _st.hyperboloid_profile(0.5, grid)
    P = np.concatenate([st.w[:, None], grid.points()], axis=-1)
    return float(np.max(np.abs(_st.example_prescribed_field()(P) - 2.0)))


@register("example-field", "spacetimes", "monotone")
def _check_example_field():
    mn, neg = example_field_monotonicity()
    sup = example_field_bound()
    bound = math.exp(-0.5)
    return neg == 0 and sup <= bound, bound - sup, f"{neg} negative samples, sup|H-2| on S_1/2 = {sup:.4f}"


def schwarzschild_expansion(m=1.0, tau=1.0, xs=(0.04, 0.02, 0.01, 0.005), f=None):
    """(H values, fitted H0, fitted C, error ratios) of H(x) = H0 + C x^2."""
    chart = _st.make_schwarzschild_chart(m)
    surf = _st.LstSurface(f if f is not None else _st.ConstantF(0.0), tau)
    xs = np.asarray(xs, dtype=float)
    H = _st.schwarzschild_mean_curvature(chart, surf, xs)
    A = np.column_stack([np.ones_like(xs), xs**2])
    H0, C = np.linalg.lstsq(A, H, rcond=None)[0]
    err = np.abs(H - H0)
    ratios = err[:-1] / err[1:]
    return H, float(H0), float(C), ratios


@register("schwarzschild-expansion", "spacetimes", "schwarzschild")
def _check_schwarzschild():
    H, H0, _, ratios = schwarzschild_expansion()
    oracle = 3.0  # m = 0 limit: umbilic hyperboloid, n / tau
    d = abs(H0 - oracle)
    r = ratios[1:3]
    ok = d <= 1e-3 and np.all((r >= 3.2) & (r <= 4.8))
    return bool(ok), 1e-3 - d, f"H0 = {H0:.8f}, ratios {np.round(r, 3).tolist()}"


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def _matches(check: _Check, pattern: Optional[str]) -> bool:
    if not pattern:
        return True
    pat = pattern.lower()
    keys = (check.name,) + check.tags
    if any(ch in pat for ch in "*?["):
        return any(fnmatch.fnmatch(k, pat) for k in keys)
    return any(pat in k for k in keys)


def _run(check: _Check) -> CheckResult:
    t0 = time.perf_counter()
    try:
        passed, margin, detail = check.fn()
    except Exception as exc:  # noqa: BLE001 - failures become report entries
        passed, margin, detail = False, -math.inf, f"{type(exc).__name__}: {exc}"
    return CheckResult(check.name, bool(passed), float(margin), detail, time.perf_counter() - t0)


def verify_suite(filter: Optional[str] = None, threads: Optional[int] = None) -> VerifyReport:
    """Run every registered check whose name or tag matches ``filter``."""
    checks = [c for name, c in sorted(_REGISTRY.items()) if _matches(c, filter)]
    workers = threads or thread_count()
    if workers <= 1 or len(checks) <= 1:
        results = [_run(c) for c in checks]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(checks))) as pool:
            results = list(pool.map(_run, checks))
    return VerifyReport(results)


__all__ = ["CheckResult", "VerifyReport", "available_checks", "verify_suite", "thread_count"]
