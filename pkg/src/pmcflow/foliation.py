"""Gaussian normal foliation of an initial spacelike slice.

Along the unit-speed normal geodesics from the slice the induced metric and
second fundamental form of the parallel surfaces obey the matrix Riccati system

    d_t g_ij = 2 A_ij,    d_t A_ij = R_0i0j + A_ik g^kl A_lj,

integrated here node by node with classical RK4.  The ambient curvature block
enters through a callback ``curvature(t, g) -> R_0i0j``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import eigh

from .charts import ChartSpec
from .errors import DegenerateMetric, DomainError, WindowError

Curvature = Callable[[float, np.ndarray], np.ndarray]


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def tensor_norm(g, A) -> np.ndarray:
    """|A|_g = sqrt(g^ik g^jl A_ij A_kl) per node."""
    gi = np.linalg.inv(g)
    return np.sqrt(np.maximum(np.einsum("...ik,...jl,...ij,...kl->...", gi, gi, A, A), 0.0))


@dataclass(frozen=True)
class FoliationState:
    """Metric and second fundamental form of the slice at normal distance t.

    ``a0``, ``c0``, ``v0`` are the initial sup |A|, the curvature bound and the
    tilt bound; ``b0 = 2 sqrt(a0^2 + c0 v0^2)`` sets the comparison envelope.
    """

    t: float
    g: np.ndarray
    A: np.ndarray
    curvature: Optional[Curvature] = None
    a0: float = 0.0
    c0: float = 0.0
    v0: float = 1.0
    g0: Optional[np.ndarray] = None

    @property
    def b0(self) -> float:
        return 2.0 * math.sqrt(self.a0**2 + self.c0 * self.v0**2)

    @classmethod
    def initial(cls, g0, A0, curvature: Optional[Curvature] = None, c0: Optional[float] = None, v0: float = 1.0):
        """Start a foliation; a0 is measured from A0 and c0 from the curvature block if omitted."""
        g0 = np.asarray(g0, dtype=float)
        A0 = np.asarray(A0, dtype=float)
        if g0.ndim == 2:
            g0, A0 = g0[None], A0[None]
        a0 = float(np.max(tensor_norm(g0, A0)))
        if c0 is None:
            c0 = 0.0 if curvature is None else float(np.max(tensor_norm(g0, curvature(0.0, g0))))
        return cls(0.0, g0, A0, curvature, a0, float(c0), float(v0), g0.copy())

    def rhs(self, t, g, A):
        gi = np.linalg.inv(g)
        R = 0.0 if self.curvature is None else self.curvature(t, g)
        dA = R + np.einsum("...ik,...kl,...lj->...ij", A, gi, A)
        return 2.0 * A, _sym(dA)


def guaranteed_window(a0: float, c0: float, v0: float = 1.0, a: float = math.inf, C_n: float = 1.0) -> float:
    """min{a, C(n)/2 (a0^2 + c0 v0^2)^-1/2}; C(n) is not explicit, 1 by default."""
    k = a0**2 + c0 * v0**2
    return min(a, math.inf if k == 0 else 0.5 * C_n / math.sqrt(k))


def integrate_foliation(
    init: FoliationState,
    t_end: float,
    dt: float = 1e-3,
    integrator: str = "rk4",
    sample_times=None,
    override_window: bool = False,
    C_n: float = 1.0,
    a: float = math.inf,
) -> List[FoliationState]:
    """RK4 integration from ``init.t`` to ``t_end`` (either sign) sampling every step or at ``sample_times``."""
    if integrator != "rk4":
        raise ValueError("only rk4 is provided")
    window = guaranteed_window(init.a0, init.c0, init.v0, a=a, C_n=C_n)
    if not override_window and abs(t_end - init.t) > window * (1 + 1e-12):
        raise WindowError(f"|t_end| = {abs(t_end - init.t):.4g} exceeds the guaranteed window {window:.4g}")
    span = t_end - init.t
    nsteps = max(1, int(math.ceil(abs(span) / dt - 1e-9)))
    h = span / nsteps
    if sample_times is None:
        targets = None
    else:
        targets = sorted(set(int(round((ts - init.t) / h)) for ts in sample_times))
    det0 = np.linalg.det(init.g0 if init.g0 is not None else init.g)
    g, A, t = init.g.copy(), init.A.copy(), init.t
    series = [init]
    f = init.rhs
    for k in range(1, nsteps + 1):
        k1g, k1A = f(t, g, A)
        k2g, k2A = f(t + h / 2, g + h / 2 * k1g, A + h / 2 * k1A)
        k3g, k3A = f(t + h / 2, g + h / 2 * k2g, A + h / 2 * k2A)
        k4g, k4A = f(t + h, g + h * k3g, A + h * k3A)
        g = g + h / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)
        A = A + h / 6 * (k1A + 2 * k2A + 2 * k3A + k4A)
        t = init.t + k * h
        det = np.linalg.det(g)
        if np.any(~np.isfinite(det)) or np.any(det < 1e-12 * det0):
            raise DegenerateMetric(f"metric degenerates near t = {t:.6g} (focal point)")
        # a step that straddles a focal point can land on a finite but bogus metric
        if np.max(tensor_norm(g, A)) * abs(h) > 0.25:
            raise DegenerateMetric(f"second fundamental form blows up near t = {t:.6g} (focal point)")
        if targets is None or k in targets:
            series.append(replace(init, t=t, g=g.copy(), A=A.copy()))
    return series


@dataclass(frozen=True)
class FoliationReport:
    passes: list
    worst_envelope_margin: float
    worst_A_margin: float

    @property
    def ok(self) -> bool:
        return all(self.passes)


def foliation_bounds_check(series: List[FoliationState]) -> FoliationReport:
    """Check exp(-2 b0 |t|) g0 <= g(t) <= exp(2 b0 |t|) g0 and |A(t)|_g <= b0 for every sample."""
    init = series[0]
    g0 = init.g0 if init.g0 is not None else init.g
    b0 = init.b0
    passes = []
    worst_env = math.inf
    worst_A = math.inf
    for st in series:
        lo = math.exp(-2 * b0 * abs(st.t - init.t))
        hi = math.exp(2 * b0 * abs(st.t - init.t))
        env = math.inf
        for gt, g0n in zip(st.g, g0):
            mu = eigh(gt, g0n, eigvals_only=True)
            env = min(env, (mu.min() - lo) / lo, (hi - mu.max()) / hi)
        am = float(b0 - np.max(tensor_norm(st.g, st.A)))
        tol = 1e-12
        passes.append(bool(env >= -tol and am >= -tol * max(1.0, b0)))
        worst_env = min(worst_env, env)
        worst_A = min(worst_A, am)
    return FoliationReport(passes, worst_env, worst_A)


def foliation_chart(series: List[FoliationState], node_points, name: str = "gaussian-foliation") -> ChartSpec:
    """Synchronous chart -dt^2 + g(t, x) from an integrated series.

    ``node_points`` are the spatial coordinates of the foliation nodes; the
    metric is available at those nodes only, with cubic Hermite interpolation
    in t using d_t g = 2A.
    """
    nodes = np.asarray(node_points, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    ts = np.array([s.t for s in series])
    order = np.argsort(ts)
    ts = ts[order]
    G = np.stack([series[i].g for i in order])
    D = np.stack([2.0 * series[i].A for i in order])
    n = nodes.shape[1]
    dim = n + 1

    def locate(x):
        d = np.linalg.norm(nodes[None, :, :] - x.reshape(-1, 1, n), axis=-1)
        idx = np.argmin(d, axis=1)
        if np.any(d[np.arange(len(idx)), idx] > 1e-9 * (1 + np.abs(x).max())):
            raise DomainError("foliation chart is only defined at its nodes")
        return idx

    def metric(p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, dim)
        t = flat[:, 0]
        if np.any(t < ts[0] - 1e-12) or np.any(t > ts[-1] + 1e-12):
            raise DomainError("time outside the integrated range")
        idx = locate(flat[:, 1:])
        k = np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2)
        h = ts[k + 1] - ts[k]
        u = ((t - ts[k]) / h)[:, None, None]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        g = (
            h00 * G[k, idx]
            + h10 * h[:, None, None] * D[k, idx]
            + h01 * G[k + 1, idx]
            + h11 * h[:, None, None] * D[k + 1, idx]
        )
        out = np.zeros((flat.shape[0], dim, dim))
        out[:, 0, 0] = -1.0
        out[:, 1:, 1:] = g
        return out.reshape(p.shape[:-1] + (dim, dim))

    return ChartSpec(dim=dim, metric=metric, synchronous=True, name=name)


def series_to_json(series: List[FoliationState]) -> str:
    """Snapshots as JSON: one entry per sample with per-node flattened g and A."""
    out = [
        dict(t=float(s.t), g=[gi.reshape(-1).tolist() for gi in s.g], A=[Ai.reshape(-1).tolist() for Ai in s.A])
        for s in series
    ]
    return json.dumps(dict(b0=series[0].b0, samples=out))


def export_series_json(series: List[FoliationState], path) -> None:
    with open(path, "w") as fh:
        fh.write(series_to_json(series))
