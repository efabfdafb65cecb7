"""Extrinsic geometry of spacelike hypersurfaces.

Two independent evaluators are provided.  ``graph_geometry`` handles graphs
t = w(x) over a synchronous chart -dt^2 + g(t, x) through closed-form
expressions in w, g and d_t g.  ``embedding_geometry`` handles an arbitrary
parametrised surface in any chart by finite-difference tangents and the
ambient connection.  The two agree to O(h^2) on synchronous charts, which is
how each one checks the other.

Sign convention: A_ij = G(nabla_{e_i} nu, e_j) for the future unit normal nu
and H = gamma^ij A_ij, so expanding hyperboloids in Minkowski space have
H = n / tau > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import grids as _grids
from .charts import (
    ChartSpec,
    TimeFunction,
    check_domain,
    christoffel,
    christoffel_from_derivatives,
    frame_vector,
    lapse,
    metric_derivatives,
)
from .errors import NotSpacelike, OrientationError, SpacelikeViolation

# Flipping this to -1 reverses the extrinsic sign convention everywhere.  The
# verification suite uses it as a deliberately broken fixture.
EXTRINSIC_SIGN = 1.0

DELTA_FLOOR = 0.05
DELTA_WARN = 0.5


@dataclass(frozen=True)
class SurfaceGeometry:
    """Per-node geometry of a spacelike surface.

    Tensor components are taken in the surface parameters (graph: the spatial
    chart coordinates).  ``nu`` is contravariant in the ambient chart.
    """

    points: np.ndarray
    gamma: np.ndarray
    gamma_inv: np.ndarray
    nu: np.ndarray
    A: np.ndarray
    H: np.ndarray
    kappa: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    q: np.ndarray
    grid: Optional[_grids.SpatialGrid] = None
    spacings: Optional[tuple] = None
    extras: dict = field(default_factory=dict)

    @property
    def A_norm(self) -> np.ndarray:
        """|A|_gamma per node."""
        Gi = self.gamma_inv
        return np.sqrt(np.maximum(np.einsum("...ik,...jl,...ij,...kl->...", Gi, Gi, self.A, self.A), 0.0))

    @property
    def sqrt_det_gamma(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.gamma))


# --------------------------------------------------------------------------
# synchronous-chart fields
# --------------------------------------------------------------------------


def synchronous_fields(chart: ChartSpec, P: np.ndarray, second: bool = False) -> dict:
    """g, g^-1, d_t g and spatial Gamma at points P; optionally d_t^2 g and d_t Gamma.

    Second time derivatives are central differences in t of the first-order
    fields (analytic first derivatives make these accurate to O(step^2)).
    """
    n = chart.dim - 1
    shape = P.shape[:-1]
    if chart.flat:
        # constant metric: one inversion, broadcast views, no derivative work
        g1 = np.asarray(chart.metric(P.reshape(-1, chart.dim)[:1]))[0, 1:, 1:]
        out = dict(
            g=np.broadcast_to(g1, shape + (n, n)),
            ginv=np.broadcast_to(np.linalg.inv(g1), shape + (n, n)),
            gdot=np.zeros(shape + (n, n)),
            Gam=np.zeros(shape + (n,) * 3),
            flat=True,
        )
        if second:
            out.update(gddot=np.zeros(shape + (n, n)), Gamdot=np.zeros(shape + (n,) * 3))
        return out

    def first(points):
        G = chart.metric(points)
        dG = metric_derivatives(chart, points)
        Gam = christoffel_from_derivatives(G, dG)
        return G[..., 1:, 1:], dG[..., 0, 1:, 1:], Gam[..., 1:, 1:, 1:]

    g, gdot, Gam = first(P)
    out = dict(g=g, ginv=np.linalg.inv(g), gdot=gdot, Gam=Gam)
    if second:
        dt = chart.fd_step * (np.abs(P[..., 0]) + 1.0)
        shift = np.zeros_like(P)
        shift[..., 0] = dt
        check_domain(chart, P + shift)
        check_domain(chart, P - shift)
        _, gp, Gp = first(P + shift)
        _, gm, Gm = first(P - shift)
        out["gddot"] = (gp - gm) / (2.0 * dt[..., None, None])
        out["Gamdot"] = (Gp - Gm) / (2.0 * dt[..., None, None, None])
    return out


def surface_points(grid: _grids.SpatialGrid, w: np.ndarray) -> np.ndarray:
    """Spacetime points (w(x), x) for every node."""
    X = grid.points()
    return np.concatenate([np.asarray(w, float)[..., None], X], axis=-1)


def spacelike_margin(grid, w, ginv, dw) -> np.ndarray:
    return 1.0 - np.einsum("...i,...ij,...j->...", dw, ginv, dw)


def check_margin(grid, q, delta_floor, state=None):
    interior = q[grid.interior_mask()]
    qmin = float(np.min(q)) if interior.size == 0 else float(np.min(interior))
    if not np.all(q > 0) or qmin < delta_floor:
        raise SpacelikeViolation(
            f"spacelike margin {min(qmin, float(np.min(q))):.3e} below floor {delta_floor}",
            q_min=min(qmin, float(np.min(q))),
            state=state,
        )
    return qmin


def graph_fields(chart: ChartSpec, grid, w, second: bool = False, delta_floor: float = DELTA_FLOOR, state=None):
    """Everything the flow needs at once: chart fields, derivatives of w, q, sigma.

    Returns a dict with keys g, ginv, gdot, Gam (+ gddot, Gamdot), dw, d2w,
    wup (raised gradient), q, sigma (covariant Hessian of w), P (points).
    """
    if not chart.synchronous:
        raise ValueError(f"{chart.name}: graph geometry needs a synchronous chart")
    P = surface_points(grid, w)
    check_domain(chart, P)
    f = synchronous_fields(chart, P, second=second)
    dw, d2w = _grids.derivatives(grid, w)
    wup = np.einsum("...ij,...j->...i", f["ginv"], dw)
    q = 1.0 - np.einsum("...i,...i->...", dw, wup)
    check_margin(grid, q, delta_floor, state=state)
    sigma = d2w if f.get("flat") else d2w - np.einsum("...kij,...k->...ij", f["Gam"], dw)
    f.update(P=P, dw=dw, d2w=d2w, wup=wup, q=q, sigma=sigma)
    return f


def mean_curvature_from_fields(f) -> np.ndarray:
    """H = lam (g^ij + lam^2 w^i w^j) sigma_ij - lam^3/2 gdot(w^, w^) + lam/2 g^ij gdot_ij."""
    lam = 1.0 / np.sqrt(f["q"])
    wup = f["wup"]
    ginv = f["ginv"]
    gammainv = ginv + (lam**2)[..., None, None] * np.einsum("...i,...j->...ij", wup, wup)
    tr_sigma = np.einsum("...ij,...ij->...", gammainv, f["sigma"])
    if f.get("flat"):
        return EXTRINSIC_SIGN * lam * tr_sigma
    gww = np.einsum("...ij,...i,...j->...", f["gdot"], wup, wup)
    theta = np.einsum("...ij,...ij->...", ginv, f["gdot"])
    return EXTRINSIC_SIGN * (lam * tr_sigma - 0.5 * lam**3 * gww + 0.5 * lam * theta)


def _is_standard_flat(chart) -> bool:
    if not (chart.flat and chart.synchronous):
        return False
    G = np.asarray(chart.metric(np.zeros((1, chart.dim))))[0]
    return bool(np.array_equal(G, np.diag([-1.0] + [1.0] * (chart.dim - 1))))


def flat_radial_mean_curvature(grid, w, delta_floor=DELTA_FLOOR):
    """(H, q) for a radial graph in standard Minkowski coordinates.

    Same discretisation as the general path, specialised to
    H = lam (w''/q + (n - 1) w'/r).
    """
    ops = _grids.operators(grid)
    w = np.asarray(w, dtype=float)
    w1 = ops.grad[0] @ w
    q = 1.0 - w1 * w1
    check_margin(grid, q, delta_floor)
    tr = (ops.hess[0][0] @ w) / q
    if grid.n > 1:
        tr = tr + (grid.n - 1) * (ops.hess[1][1] @ w)
    return EXTRINSIC_SIGN * tr / np.sqrt(q), q


def graph_mean_curvature(chart, grid, w, orientation="future", delta_floor=DELTA_FLOOR):
    """Fast path returning (H, q) without assembling the full geometry."""
    f = graph_fields(chart, grid, w, delta_floor=delta_floor)
    H = mean_curvature_from_fields(f)
    if orientation == "past":
        H = -H
    return H, f["q"]


def _frame_data(chart, P, diag_frame, nu, G, orientation):
    """kappa, u, alpha against a time function, or against +-d_t."""
    if diag_frame is None:
        sgn = 1.0 if orientation == "future" else -1.0
        T = np.zeros_like(P)
        T[..., 0] = sgn
        u = sgn * P[..., 0]
        alpha = np.ones(P.shape[:-1])
    else:
        tf = getattr(diag_frame, "time_function", diag_frame)
        T = frame_vector(chart, tf, P)
        u = np.asarray(tf.value(P), dtype=float)
        alpha = lapse(chart, tf, P)
    kappa = -np.einsum("...a,...ab,...b->...", nu, G, T)
    return kappa, u, alpha


def graph_geometry(
    chart: ChartSpec,
    grid: _grids.SpatialGrid,
    state,
    diag_frame: Optional[TimeFunction] = None,
    orientation: str = "future",
    delta_floor: float = DELTA_FLOOR,
) -> SurfaceGeometry:
    """Full geometry of the graph t = w(x) over a synchronous chart."""
    w = state.w if hasattr(state, "w") else np.asarray(state, dtype=float)
    f = graph_fields(chart, grid, w, delta_floor=delta_floor, state=state if hasattr(state, "w") else None)
    q, dw, wup, g, ginv, gdot = f["q"], f["dw"], f["wup"], f["g"], f["ginv"], f["gdot"]
    lam = 1.0 / np.sqrt(q)
    outer = np.einsum("...i,...j->...ij", dw, dw)
    gamma = g - outer
    gamma_inv = ginv + (lam**2)[..., None, None] * np.einsum("...i,...j->...ij", wup, wup)
    gw = np.einsum("...ij,...j->...i", gdot, wup)
    mixed = np.einsum("...i,...j->...ij", dw, gw)
    A = lam[..., None, None] * (f["sigma"] + 0.5 * gdot - 0.5 * (mixed + np.swapaxes(mixed, -1, -2)))
    A = EXTRINSIC_SIGN * A
    H = mean_curvature_from_fields(f)
    nu = np.concatenate([lam[..., None], lam[..., None] * wup], axis=-1)
    if orientation == "past":
        nu, A, H = -nu, -A, -H
    elif orientation != "future":
        raise ValueError(f"unknown orientation {orientation!r}")
    P = f["P"]
    G = np.zeros(P.shape[:-1] + (chart.dim, chart.dim))
    G[..., 0, 0] = -1.0
    G[..., 1:, 1:] = g
    kappa, u, alpha = _frame_data(chart, P, diag_frame, nu, G, orientation)
    return SurfaceGeometry(
        points=P,
        gamma=gamma,
        gamma_inv=gamma_inv,
        nu=nu,
        A=A,
        H=H,
        kappa=kappa,
        u=u,
        alpha=alpha,
        q=q,
        grid=grid,
        extras=dict(w=w, dw=dw, lam=lam, chart_fields=f, orientation=orientation),
    )


# --------------------------------------------------------------------------
# general embeddings
# --------------------------------------------------------------------------


def _second_derivatives(X, spacings, tangents):
    """d_i d_j X: compact 3-point stencil on the diagonal, nested gradients off it."""
    n = len(spacings)
    out = np.empty(X.shape[:-1] + (n, n, X.shape[-1]))
    for i in range(n):
        for j in range(n):
            out[..., i, j, :] = np.gradient(tangents[..., j, :], spacings[i], axis=i, edge_order=2)
        h = spacings[i]
        core = [slice(None)] * n
        lo, mid, hi = list(core), list(core), list(core)
        lo[i], mid[i], hi[i] = slice(0, -2), slice(1, -1), slice(2, None)
        out[tuple(mid) + (i, i)] = (X[tuple(hi)] - 2.0 * X[tuple(mid)] + X[tuple(lo)]) / h**2
    for i in range(n):
        for j in range(i + 1, n):
            sym = 0.5 * (out[..., i, j, :] + out[..., j, i, :])
            out[..., i, j, :] = sym
            out[..., j, i, :] = sym
    return out


def _normal_covector(E):
    """Generalised cross product: ell_a with ell_a E_i^a = 0 for the n lowered-free rows."""
    D = E.shape[-1]
    ell = np.empty(E.shape[:-2] + (D,))
    for a in range(D):
        cols = [c for c in range(D) if c != a]
        ell[..., a] = (-1) ** a * np.linalg.det(E[..., cols])
    return ell


def embedding_geometry(
    chart: ChartSpec,
    X: np.ndarray,
    spacings,
    frame: Optional[TimeFunction] = None,
) -> SurfaceGeometry:
    """Geometry of a parametrised surface X(y) sampled on a structured grid.

    ``X`` has shape ``(N_1, ..., N_n, dim)`` and ``spacings`` gives the
    parameter step along each of the n axes.  The future normal is fixed by a
    negative product with ``chart.future`` (or d_0 if the chart declares none).
    """
    X = np.asarray(X, dtype=float)
    spacings = tuple(float(h) for h in np.atleast_1d(spacings))
    n = X.ndim - 1
    D = X.shape[-1]
    if D != chart.dim or len(spacings) != n or n != D - 1:
        raise ValueError("embedding must map an n-dimensional parameter grid into the chart")
    check_domain(chart, X)
    G = chart.metric(X)
    tangents = np.stack([np.gradient(X, spacings[i], axis=i, edge_order=2) for i in range(n)], axis=-2)
    gamma = np.einsum("...ia,...ab,...jb->...ij", tangents, G, tangents)
    ev = np.linalg.eigvalsh(gamma)
    if np.any(ev <= 0):
        raise NotSpacelike("induced metric is not positive definite", q_min=float(ev.min()))
    gamma_inv = np.linalg.inv(gamma)
    # the kernel of v -> G(v, e_i) is spanned by G^-1 applied to the cross product
    # of the raw tangents, since ell_a e_i^a = 0 for the cofactor covector ell
    ell = _normal_covector(tangents)
    Ginv = np.linalg.inv(G)
    nu = np.einsum("...ab,...b->...a", Ginv, ell)
    norm = np.einsum("...a,...ab,...b->...", nu, G, nu)
    if np.any(norm >= 0):
        raise NotSpacelike("normal is not timelike", q_min=None)
    nu = nu / np.sqrt(-norm)[..., None]
    if chart.future is not None:
        fut = np.asarray(chart.future(X), dtype=float)
    else:
        fut = np.zeros_like(X)
        fut[..., 0] = 1.0
    pair = np.einsum("...a,...ab,...b->...", nu, G, fut)
    scale = np.sqrt(np.abs(np.einsum("...a,...ab,...b->...", fut, G, fut))) + 1e-300
    if np.any(np.abs(pair) <= 1e-12 * scale):
        raise OrientationError("cannot decide the future normal")
    nu = np.where((pair > 0)[..., None], -nu, nu)
    nu_low = np.einsum("...ab,...b->...a", G, nu)
    d2X = _second_derivatives(X, spacings, tangents)
    Gam = christoffel(chart, X)
    conn = np.einsum("...abc,...ib,...jc->...ija", Gam, tangents, tangents)
    A = -np.einsum("...a,...ija->...ij", nu_low, d2X + conn)
    A = EXTRINSIC_SIGN * 0.5 * (A + np.swapaxes(A, -1, -2))
    H = np.einsum("...ij,...ij->...", gamma_inv, A)
    tf = frame if frame is not None else chart.time_function
    tf = getattr(tf, "time_function", tf)
    if tf is not None:
        T = frame_vector(chart, tf, X)
        kappa = -np.einsum("...a,...ab,...b->...", nu, G, T)
        u = np.asarray(tf.value(X), dtype=float)
        alpha = lapse(chart, tf, X)
    elif chart.synchronous:
        kappa = nu[..., 0]
        u = X[..., 0].copy()
        alpha = np.ones(X.shape[:-1])
    else:
        kappa = np.full(X.shape[:-1], np.nan)
        u = np.full(X.shape[:-1], np.nan)
        alpha = np.full(X.shape[:-1], np.nan)
    q = 1.0 / kappa**2 if chart.synchronous else np.full(X.shape[:-1], np.nan)
    return SurfaceGeometry(
        points=X,
        gamma=gamma,
        gamma_inv=gamma_inv,
        nu=nu,
        A=A,
        H=H,
        kappa=kappa,
        u=u,
        alpha=alpha,
        q=q,
        spacings=spacings,
        extras=dict(tangents=tangents),
    )


# --------------------------------------------------------------------------
# intrinsic operators
# --------------------------------------------------------------------------


def surface_gradient_sq(geom: SurfaceGeometry, field) -> np.ndarray:
    """gamma^ij d_i f d_j f with grid finite differences."""
    f = np.asarray(field, dtype=float)
    if geom.grid is not None:
        df, _ = _grids.derivatives(geom.grid, f)
    else:
        df = np.stack([np.gradient(f, h, axis=i, edge_order=2) for i, h in enumerate(geom.spacings)], axis=-1)
    return np.einsum("...i,...ij,...j->...", df, geom.gamma_inv, df)


def _radial_laplacian(geom: SurfaceGeometry, f: np.ndarray) -> np.ndarray:
    grid = geom.grid
    n, h = grid.n, grid.h
    r = grid.axis_coords()
    g_r = geom.gamma[:, 0, 0]
    g_t = geom.gamma[:, 1, 1] if n > 1 else np.ones_like(g_r)
    # polar volume density sqrt(gamma_r) (gamma_T r^2)^((n-1)/2), angular factor dropped;
    # r^(n-1) is taken exactly at faces and integrated over each shell so the
    # scheme stays exact on quadratics next to the origin
    m = np.sqrt(g_r) * g_t ** (0.5 * (n - 1))
    r_half = 0.5 * (r[1:] + r[:-1])
    S_half = 0.5 * (m[1:] + m[:-1]) * r_half ** (n - 1)
    gr_half = 0.5 * (g_r[1:] + g_r[:-1])
    flux = S_half / gr_half * np.diff(f) / h
    shell = (r_half[1:] ** n - r_half[:-1] ** n) / (n * h)
    out = np.empty_like(f)
    out[1:-1] = (flux[1:] - flux[:-1]) / (h * m[1:-1] * shell)
    # removable singularity at the origin: Delta f -> n f''(0) / gamma_r(0)
    out[0] = n * 2.0 * (f[1] - f[0]) / (h**2 * g_r[0])
    out[-1] = 2.0 * out[-2] - out[-3]
    return out


def _box_laplacian(geom: SurfaceGeometry, f: np.ndarray) -> np.ndarray:
    ops = _grids.operators(geom.grid)
    n = geom.grid.n
    flat = f.reshape(-1)
    sq = geom.sqrt_det_gamma.reshape(-1)
    Gi = geom.gamma_inv.reshape(-1, n, n)
    df = np.stack([ops.grad[j] @ flat for j in range(n)], axis=-1)
    flux = sq[:, None] * np.einsum("kij,kj->ki", Gi, df)
    div = sum(ops.grad[i] @ flux[:, i] for i in range(n))
    return (div / sq).reshape(f.shape)


def surface_laplacian(geom: SurfaceGeometry, field) -> np.ndarray:
    """Laplace-Beltrami operator (1/sqrt det gamma) d_i (sqrt det gamma gamma^ij d_j f)."""
    f = np.asarray(field, dtype=float)
    if geom.grid is not None:
        if f.shape != geom.grid.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {geom.grid.shape}")
        if geom.grid.topology == "radial":
            return _radial_laplacian(geom, f)
        return _box_laplacian(geom, f)
    if f.shape != geom.H.shape:
        raise ValueError("field shape does not match the embedding grid")
    sq = geom.sqrt_det_gamma
    n = len(geom.spacings)
    df = np.stack([np.gradient(f, h, axis=i, edge_order=2) for i, h in enumerate(geom.spacings)], axis=-1)
    flux = sq[..., None] * np.einsum("...ij,...j->...i", geom.gamma_inv, df)
    div = sum(np.gradient(flux[..., i], geom.spacings[i], axis=i, edge_order=2) for i in range(n))
    return div / sq
