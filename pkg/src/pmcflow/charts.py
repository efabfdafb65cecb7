"""Lorentzian background charts: metric, connection, curvature and reference norms.

Conventions
-----------
* Index 0 is the chart time coordinate; points are arrays whose last axis has
  length ``dim``.  Every evaluator is vectorised over leading axes.
* ``christoffel(...)[..., a, b, c]`` is Gamma^a_{bc}.
* ``riemann(...)[..., a, b, c, d]`` is Rm(e_a, e_b, e_c, e_d) = <R(e_a, e_b) e_c, e_d>
  with R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y].  With this choice the
  normal-curvature block Rm[0, i, 0, j] is exactly the source term of the
  Gaussian-foliation Riccati equation d/dt A_ij = Rm_0i0j + A_ik g^kl A_lj, and a
  de Sitter slicing gives Rm_0i0j = +g_ij (checked in the test-suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, OrientationError, SignatureError

SIGNATURE_RTOL = 1e-10


@dataclass(frozen=True)
class TimeFunction:
    """A scalar time function tau with its differential.

    ``value(points)`` returns tau, ``differential(points)`` returns the covector
    d tau with shape (..., dim).  The lapse and unit frame follow from the metric.
    """

    value: Callable[[np.ndarray], np.ndarray]
    differential: Callable[[np.ndarray], np.ndarray]
    name: str = "tau"
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True, eq=False)
class ChartSpec:
    """Coordinate description of a Lorentz background.

    Optional analytic callables override the finite-difference fallbacks:
    ``metric_derivatives(points)[..., c, a, b] = d_c G_ab`` and
    ``christoffel_fn(points)`` for Gamma directly.  ``flat`` marks a constant
    metric so hot loops can skip derivative evaluation entirely.
    """

    dim: int
    metric: Callable[[np.ndarray], np.ndarray]
    synchronous: bool = False
    name: str = "chart"
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    time_function: Optional[TimeFunction] = None
    proper_function: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-4
    metric_derivatives: Optional[Callable[[np.ndarray], np.ndarray]] = None
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    future: Optional[Callable[[np.ndarray], np.ndarray]] = None
    flat: bool = False
    static: bool = False
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.dim - 1


@dataclass(frozen=True)
class ReferenceFrame:
    """Future unit timelike T at a point together with G_E = G + 2 omega x omega."""

    base_point: np.ndarray
    T: np.ndarray
    G: np.ndarray
    G_E: np.ndarray

    @classmethod
    def from_vector(cls, G, T, base_point=None):
        G = np.asarray(G, dtype=float)
        T = np.asarray(T, dtype=float)
        norm = T @ G @ T
        if not np.isclose(norm, -1.0, rtol=0, atol=1e-9):
            raise OrientationError(f"frame vector must be unit timelike, <T,T> = {norm}")
        omega = G @ T
        G_E = G + 2.0 * np.outer(omega, omega)
        bp = np.zeros(len(T)) if base_point is None else np.asarray(base_point, float)
        return cls(base_point=bp, T=T, G=G, G_E=G_E)

    @property
    def omega(self) -> np.ndarray:
        return self.G @ self.T


def _as_points(chart: ChartSpec, points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != chart.dim:
        raise ValueError(f"points must have trailing axis {chart.dim}, got {p.shape}")
    return p


def check_domain(chart: ChartSpec, points) -> None:
    if chart.domain is None:
        return
    ok = np.asarray(chart.domain(points))
    if not np.all(ok):
        bad = np.asarray(points)[~ok] if ok.shape else np.asarray(points)
        raise DomainError(f"{chart.name}: point outside validity region, e.g. {np.atleast_2d(bad)[0]}")


def check_signature(G: np.ndarray) -> None:
    """Raise SignatureError unless every matrix has one negative, n positive eigenvalues."""
    G = np.asarray(G)
    if not np.allclose(G, np.swapaxes(G, -1, -2), rtol=1e-12, atol=1e-12 * np.abs(G).max()):
        raise SignatureError("metric is not symmetric")
    ev = np.linalg.eigvalsh(G)
    scale = np.abs(ev).max(axis=-1, keepdims=True)
    tol = SIGNATURE_RTOL * scale
    n_neg = np.sum(ev < -tol, axis=-1)
    n_pos = np.sum(ev > tol, axis=-1)
    dim = G.shape[-1]
    if np.any(n_neg != 1) or np.any(n_pos != dim - 1):
        raise SignatureError(f"metric signature is not Lorentzian: eigenvalues {ev.reshape(-1, dim)[0]}")


def metric_at(chart: ChartSpec, point, check: bool = True) -> np.ndarray:
    """Metric G_ab at a single point (or a stack of points) with validation."""
    p = _as_points(chart, point)
    check_domain(chart, p)
    G = np.asarray(chart.metric(p), dtype=float)
    if check:
        check_signature(G)
    return G


def _fd_steps(chart: ChartSpec, p: np.ndarray) -> np.ndarray:
    return chart.fd_step * (np.abs(p) + 1.0)


def metric_derivatives(chart: ChartSpec, points) -> np.ndarray:
    """dG[..., c, a, b] = d_c G_ab, analytic when the chart provides it."""
    p = _as_points(chart, points)
    if chart.flat:
        return np.zeros(p.shape[:-1] + (chart.dim,) * 3)
    if chart.metric_derivatives is not None:
        return np.asarray(chart.metric_derivatives(p), dtype=float)
    steps = _fd_steps(chart, p)
    out = np.empty(p.shape[:-1] + (chart.dim,) * 3)
    for c in range(chart.dim):
        dp = np.zeros_like(p)
        dp[..., c] = steps[..., c]
        check_domain(chart, p + dp)
        check_domain(chart, p - dp)
        out[..., c, :, :] = (chart.metric(p + dp) - chart.metric(p - dp)) / (2.0 * steps[..., c, None, None])
    return out


def christoffel_from_derivatives(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """Gamma^a_bc = 1/2 G^ad (d_b G_dc + d_c G_db - d_d G_bc)."""
    Ginv = np.linalg.inv(G)
    lowered = 0.5 * (
        np.einsum("...bdc->...dbc", dG) + np.einsum("...cdb->...dbc", dG) - dG
    )
    return np.einsum("...ad,...dbc->...abc", Ginv, lowered)


def christoffel(chart: ChartSpec, points) -> np.ndarray:
    """Vectorised Christoffel symbols Gamma^a_bc."""
    p = _as_points(chart, points)
    if chart.flat:
        return np.zeros(p.shape[:-1] + (chart.dim,) * 3)
    if chart.christoffel_fn is not None:
        return np.asarray(chart.christoffel_fn(p), dtype=float)
    G = chart.metric(p)
    return christoffel_from_derivatives(G, metric_derivatives(chart, p))


def christoffel_at(chart: ChartSpec, point) -> np.ndarray:
    p = _as_points(chart, point)
    check_domain(chart, p)
    return christoffel(chart, p)


def riemann(chart: ChartSpec, points) -> np.ndarray:
    """Lowered Riemann tensor Rm[..., a, b, c, d] = <R(e_a, e_b) e_c, e_d>.

    d Gamma is taken by central differences of ``christoffel`` (one extra
    stencil layer on top of the metric derivatives when those are FD too).
    """
    p = _as_points(chart, points)
    D = chart.dim
    if chart.flat:
        return np.zeros(p.shape[:-1] + (D,) * 4)
    G = chart.metric(p)
    Gam = christoffel(chart, p)
    steps = _fd_steps(chart, p)
    # dGam[..., e, a, b, c] = d_e Gamma^a_bc
    dGam = np.empty(p.shape[:-1] + (D,) * 4)
    for e in range(D):
        dp = np.zeros_like(p)
        dp[..., e] = steps[..., e]
        check_domain(chart, p + dp)
        check_domain(chart, p - dp)
        dGam[..., e, :, :, :] = (christoffel(chart, p + dp) - christoffel(chart, p - dp)) / (
            2.0 * steps[..., e, None, None, None]
        )
    # R^a_{bcd} = d_c Gam^a_db - d_d Gam^a_cb + Gam^a_ce Gam^e_db - Gam^a_de Gam^e_cb
    Rup = (
        np.einsum("...cadb->...abcd", dGam)
        - np.einsum("...dacb->...abcd", dGam)
        + np.einsum("...ace,...edb->...abcd", Gam, Gam)
        - np.einsum("...ade,...ecb->...abcd", Gam, Gam)
    )
    # Rm(x, y, z, w) = <R(x, y) z, w> = G_wa R^a_{z x y}
    Rm = np.einsum("...wa,...azxy->...xyzw", G, Rup)
    # enforce the pair antisymmetries that hold exactly in the continuum
    Rm = 0.5 * (Rm - np.swapaxes(Rm, -4, -3))
    Rm = 0.5 * (Rm - np.swapaxes(Rm, -2, -1))
    return Rm


def riemann_at(chart: ChartSpec, point) -> np.ndarray:
    p = _as_points(chart, point)
    check_domain(chart, p)
    return riemann(chart, p)


def ricci_from_riemann(G: np.ndarray, Rm: np.ndarray) -> np.ndarray:
    """Ric(Y, Z) = trace of X -> R(X, Y) Z, i.e. G^{xw} Rm[x, y, z, w]."""
    Ginv = np.linalg.inv(G)
    return np.einsum("...xw,...xyzw->...yz", Ginv, Rm)


def normal_curvature_block(Rm: np.ndarray) -> np.ndarray:
    """The symmetric spatial block Rm[0, i, 0, j] feeding the foliation ODE."""
    return Rm[..., 0, 1:, 0, 1:]


def lapse(chart: ChartSpec, tf: TimeFunction, points) -> np.ndarray:
    """alpha with alpha^-2 = -<grad tau, grad tau>."""
    p = _as_points(chart, points)
    Ginv = np.linalg.inv(chart.metric(p))
    dtau = tf.differential(p)
    nrm = np.einsum("...a,...ab,...b->...", dtau, Ginv, dtau)
    if np.any(nrm >= 0):
        raise OrientationError(f"{tf.name}: gradient is not timelike")
    return 1.0 / np.sqrt(-nrm)


def frame_vector(chart: ChartSpec, tf: TimeFunction, points) -> np.ndarray:
    """Unit frame T = -alpha grad tau."""
    p = _as_points(chart, points)
    Ginv = np.linalg.inv(chart.metric(p))
    dtau = tf.differential(p)
    alpha = lapse(chart, tf, p)
    return -alpha[..., None] * np.einsum("...ab,...b->...a", Ginv, dtau)


def reference_frame(chart: ChartSpec, tf: TimeFunction, point) -> ReferenceFrame:
    p = _as_points(chart, point)
    return ReferenceFrame.from_vector(metric_at(chart, p), frame_vector(chart, tf, p), base_point=p)


def reference_norm(frame: ReferenceFrame, tensor, index_types: Optional[str] = None) -> float:
    """|||B|||_{G_E}: full self-contraction of a tensor under the reference metric.

    ``index_types`` is a string of 'u' (contravariant) / 'l' (covariant), one
    per index; defaults to all covariant.
    """
    B = np.asarray(tensor, dtype=float)
    k = B.ndim
    if k < 1:
        raise ValueError("tensor must carry at least one index")
    if index_types is None:
        index_types = "l" * k
    if len(index_types) != k:
        raise ValueError("index_types length must match the tensor rank")
    dim = frame.G_E.shape[0]
    if any(s != dim for s in B.shape):
        raise ValueError(f"tensor shape {B.shape} does not match dimension {dim}")
    GE_inv = np.linalg.inv(frame.G_E)
    C = B
    for axis, kind in enumerate(index_types):
        M = frame.G_E if kind == "u" else GE_inv
        C = np.moveaxis(np.tensordot(M, C, axes=([1], [axis])), 0, axis)
    return float(np.sqrt(max(np.sum(B * C), 0.0)))


def tilt_factor(G, T, Tprime) -> float:
    """-G(T, T'); equals 1 iff T = T' for future unit timelike vectors."""
    G = np.asarray(G, dtype=float)
    v = -float(np.asarray(T) @ G @ np.asarray(Tprime))
    if v < 0:
        raise OrientationError("vectors lie in opposite time cones")
    return v
