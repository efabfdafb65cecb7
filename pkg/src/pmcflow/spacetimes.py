"""Concrete backgrounds, frames, surfaces and prescribed-curvature fields.

Minkowski space with the hyperboloidal time function, the monotone example
field on it, two synchronous test charts (Gaussian coordinates around a
hyperboloid and the flat de Sitter slicing), and the Schwarzschild exterior in
retarded null coordinates with its family of asymptotically hyperboloidal
slices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .charts import ChartSpec, ReferenceFrame, TimeFunction, metric_at
from .errors import DomainError, ValidationError
from .flow import PrescribedCurvatureField
from .grids import GraphState, SpatialGrid

# --------------------------------------------------------------------------
# Minkowski
# --------------------------------------------------------------------------


def _minkowski_metric(dim):
    eta = np.diag([-1.0] + [1.0] * (dim - 1))

    def metric(p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(eta, p.shape[:-1] + (dim, dim)).copy()

    return metric


def _future_dt(p):
    out = np.zeros_like(np.asarray(p, dtype=float))
    out[..., 0] = 1.0
    return out


def make_minkowski_chart(n: int) -> ChartSpec:
    """Standard chart of R^{1,n}: synchronous, flat, valid everywhere."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    return ChartSpec(
        dim=n + 1,
        metric=_minkowski_metric(n + 1),
        synchronous=True,
        name=f"minkowski{n}",
        flat=True,
        static=True,
        future=_future_dt,
        params=dict(n=n),
    )


def _spatial_radius(p):
    return np.linalg.norm(np.asarray(p)[..., 1:], axis=-1)


@dataclass(frozen=True)
class HyperboloidFrame:
    """tau = sqrt(t^2 - r^2) on the future cone, lapse 1, T = (t d_t + x.d_x)/tau.

    ``reversed`` gives the time-reversed pair (-tau, -T) used with the past
    orientation.
    """

    reversed: bool = False

    def _check(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p[..., 0] <= _spatial_radius(p)):
            raise DomainError("hyperboloid frame is only defined for t > r")
        return p

    def tau(self, p):
        p = self._check(p)
        val = np.sqrt(p[..., 0] ** 2 - _spatial_radius(p) ** 2)
        return -val if self.reversed else val

    def dtau(self, p):
        p = self._check(p)
        tau = np.sqrt(p[..., 0] ** 2 - _spatial_radius(p) ** 2)
        d = np.concatenate([p[..., :1], -p[..., 1:]], axis=-1) / tau[..., None]
        return -d if self.reversed else d

    def alpha(self, p):
        self._check(p)
        return np.ones(np.asarray(p).shape[:-1])

    def T(self, p):
        p = self._check(p)
        tau = np.sqrt(p[..., 0] ** 2 - _spatial_radius(p) ** 2)
        T = p / tau[..., None]
        return -T if self.reversed else T

    @staticmethod
    def rho(p):
        return np.log(_spatial_radius(p) + 2.0)

    @staticmethod
    def drho(p):
        p = np.asarray(p, dtype=float)
        r = _spatial_radius(p)
        d = np.zeros_like(p)
        safe = np.where(r > 0, r, 1.0)
        d[..., 1:] = p[..., 1:] / (safe * (r + 2.0))[..., None]
        return d

    @property
    def time_function(self) -> TimeFunction:
        return TimeFunction(
            value=self.tau,
            differential=self.dtau,
            name="hyperboloid-reversed" if self.reversed else "hyperboloid",
            domain=lambda p: np.asarray(p)[..., 0] > _spatial_radius(p),
        )

    def reference_frame(self, point) -> ReferenceFrame:
        p = np.asarray(point, dtype=float)
        G = np.diag([-1.0] + [1.0] * (p.shape[-1] - 1))
        return ReferenceFrame.from_vector(G, self.T(p), base_point=p)


def make_hyperboloid_frame(reversed: bool = False) -> HyperboloidFrame:
    return HyperboloidFrame(reversed=reversed)


def hyperboloid_profile(tau0: float, grid: SpatialGrid, s: float = 0.0) -> GraphState:
    """Graph of the hyperboloid t = sqrt(tau0^2 + r^2)."""
    if tau0 <= 0:
        raise ValidationError("tau0 must be positive")
    r = grid.radius()
    return GraphState(grid, np.sqrt(tau0**2 + r**2), s)


def self_similar_height(tau0: float, n: int, s, r):
    """Exact mean curvature flow (zero prescribed field) from S_tau0."""
    return np.sqrt(tau0**2 + 2.0 * n * np.asarray(s) + np.asarray(r) ** 2)


def example_prescribed_field() -> PrescribedCurvatureField:
    """Monotone field 2 - exp(-4t + sqrt(r^2 + 1)) on the Minkowski future cone."""

    def f(p):
        p = np.asarray(p, dtype=float)
        return np.exp(-4.0 * p[..., 0] + np.sqrt(_spatial_radius(p) ** 2 + 1.0))

    def value(p):
        return 2.0 - f(p)

    def gradient(p):
        # covector d(2 - f) = f (4 dt - x.dx / sqrt(r^2 + 1))
        p = np.asarray(p, dtype=float)
        fv = f(p)
        root = np.sqrt(_spatial_radius(p) ** 2 + 1.0)
        d = np.empty_like(p)
        d[..., 0] = 4.0 * fv
        d[..., 1:] = -fv[..., None] * p[..., 1:] / root[..., None]
        return d

    return PrescribedCurvatureField(value=value, gradient=gradient, monotone_declared=True, name="example")


make_example_prescribed_h = example_prescribed_field


# --------------------------------------------------------------------------
# synchronous test charts
# --------------------------------------------------------------------------


def make_hyperboloid_gaussian_chart(n: int, tau0: float) -> ChartSpec:
    """Gaussian normal coordinates around S_tau0 in R^{1,n}.

    G = -dt^2 + ((tau0 + t)/tau0)^2 g0(x) with g0 the induced metric of S_tau0
    written over the Cartesian coordinates x of its projection, valid for
    t > -tau0.  The slice t = 0 is S_tau0 and t = c is S_{tau0 + c}.
    """
    if tau0 <= 0:
        raise ValidationError("tau0 must be positive")
    dim = n + 1

    def g0(x):
        rr = tau0**2 + np.sum(x**2, axis=-1)
        return np.eye(n) - np.einsum("...i,...j->...ij", x, x) / rr[..., None, None]

    def metric(p):
        p = np.asarray(p, dtype=float)
        s = (tau0 + p[..., 0]) / tau0
        G = np.zeros(p.shape[:-1] + (dim, dim))
        G[..., 0, 0] = -1.0
        G[..., 1:, 1:] = (s**2)[..., None, None] * g0(p[..., 1:])
        return G

    def derivs(p):
        p = np.asarray(p, dtype=float)
        x = p[..., 1:]
        s = (tau0 + p[..., 0]) / tau0
        rr = tau0**2 + np.sum(x**2, axis=-1)
        dG = np.zeros(p.shape[:-1] + (dim, dim, dim))
        dG[..., 0, 1:, 1:] = (2.0 * s / tau0)[..., None, None] * g0(x)
        eye = np.eye(n)
        # d_k g0_ij = -(delta_ik x_j + delta_jk x_i)/rr + 2 x_i x_j x_k / rr^2
        d0 = -(np.einsum("ik,...j->...kij", eye, x) + np.einsum("jk,...i->...kij", eye, x)) / rr[
            ..., None, None, None
        ] + 2.0 * np.einsum("...i,...j,...k->...kij", x, x, x) / (rr**2)[..., None, None, None]
        dG[..., 1:, 1:, 1:] = (s**2)[..., None, None, None] * d0
        return dG

    tf = TimeFunction(
        value=lambda p: tau0 + np.asarray(p)[..., 0],
        differential=_unit_dt,
        name="gaussian-time",
    )
    return ChartSpec(
        dim=dim,
        metric=metric,
        synchronous=True,
        name=f"hyperboloid-gaussian{n}",
        domain=lambda p: np.asarray(p)[..., 0] > -tau0,
        time_function=tf,
        metric_derivatives=derivs,
        future=_future_dt,
        params=dict(n=n, tau0=tau0),
    )


def _unit_dt(p):
    # d(t + const) as a covector
    out = np.zeros_like(np.asarray(p, dtype=float))
    out[..., 0] = 1.0
    return out


def make_de_sitter_chart(n: int) -> ChartSpec:
    """Flat slicing -dt^2 + exp(2t) delta of de Sitter space (unit Hubble rate)."""
    dim = n + 1

    def metric(p):
        p = np.asarray(p, dtype=float)
        G = np.zeros(p.shape[:-1] + (dim, dim))
        G[..., 0, 0] = -1.0
        G[..., 1:, 1:] = np.exp(2.0 * p[..., 0])[..., None, None] * np.eye(n)
        return G

    def derivs(p):
        p = np.asarray(p, dtype=float)
        dG = np.zeros(p.shape[:-1] + (dim, dim, dim))
        dG[..., 0, 1:, 1:] = 2.0 * np.exp(2.0 * p[..., 0])[..., None, None] * np.eye(n)
        return dG

    return ChartSpec(
        dim=dim,
        metric=metric,
        synchronous=True,
        name=f"desitter{n}",
        metric_derivatives=derivs,
        future=_future_dt,
        time_function=TimeFunction(value=lambda p: np.asarray(p)[..., 0], differential=_unit_dt, name="t"),
        params=dict(n=n),
    )


# --------------------------------------------------------------------------
# Schwarzschild in retarded null coordinates (v, x = 1/r, theta, phi)
# --------------------------------------------------------------------------


def make_schwarzschild_chart(m: float, fd_step: float = 1e-6) -> ChartSpec:
    """-(1 - 2mx) dv^2 + 2 x^-2 dv dx + x^-2 (dtheta^2 + sin^2 theta dphi^2).

    Valid for 0 < x < 1/(2m) and 0 < theta < pi.  Metric derivatives are
    analytic; curvature uses finite differences of the analytic connection,
    hence the small default step (components grow like x^-2 towards x = 0).
    """
    if m < 0:
        raise ValidationError("m must be non-negative")
    m = float(m)
    x_max = np.inf if m == 0 else 1.0 / (2.0 * m)

    def domain(p):
        p = np.asarray(p)
        return (p[..., 1] > 0) & (p[..., 1] < x_max) & (p[..., 2] > 0) & (p[..., 2] < np.pi)

    def metric(p):
        p = np.asarray(p, dtype=float)
        x, th = p[..., 1], p[..., 2]
        G = np.zeros(p.shape[:-1] + (4, 4))
        G[..., 0, 0] = -(1.0 - 2.0 * m * x)
        G[..., 0, 1] = G[..., 1, 0] = x**-2
        G[..., 2, 2] = x**-2
        G[..., 3, 3] = x**-2 * np.sin(th) ** 2
        return G

    def derivs(p):
        p = np.asarray(p, dtype=float)
        x, th = p[..., 1], p[..., 2]
        dG = np.zeros(p.shape[:-1] + (4, 4, 4))
        dG[..., 1, 0, 0] = 2.0 * m
        dG[..., 1, 0, 1] = dG[..., 1, 1, 0] = -2.0 * x**-3
        dG[..., 1, 2, 2] = -2.0 * x**-3
        dG[..., 1, 3, 3] = -2.0 * x**-3 * np.sin(th) ** 2
        dG[..., 2, 3, 3] = 2.0 * x**-2 * np.sin(th) * np.cos(th)
        return dG

    return ChartSpec(
        dim=4,
        metric=metric,
        synchronous=False,
        name=f"schwarzschild-null(m={m:g})",
        domain=domain,
        fd_step=fd_step,
        metric_derivatives=derivs,
        future=_future_dt,
        static=True,
        params=dict(m=m),
    )


def schwarzschild_h(m, x):
    return 1.0 - 2.0 * m * np.asarray(x)


def unphysical_metric(m: float):
    """Conformally rescaled metric x^2 G; bounded as x -> 0."""
    chart = make_schwarzschild_chart(m)

    def metric(p):
        p = np.asarray(p, dtype=float)
        return (p[..., 1] ** 2)[..., None, None] * chart.metric(p)

    return metric


def r_star(r, m):
    """Tortoise coordinate r + 2m log(r/(2m) - 1)."""
    r = np.asarray(r, dtype=float)
    if m == 0:
        return r
    return r + 2.0 * m * np.log(r / (2.0 * m) - 1.0)


def static_frame(chart: ChartSpec, point) -> ReferenceFrame:
    """Reference frame of the static observer h^-1/2 d_v."""
    p = np.asarray(point, dtype=float)
    G = metric_at(chart, p)
    T = np.zeros(4)
    T[0] = 1.0 / np.sqrt(-G[0, 0])
    return ReferenceFrame.from_vector(G, T, base_point=p)


# --------------------------------------------------------------------------
# asymptotically hyperboloidal slices v = -P(x, y)
# --------------------------------------------------------------------------


class SphereFunction:
    """Axisymmetric function f(theta) on the unit sphere with the pieces the slices need."""

    def value(self, theta, phi):
        raise NotImplementedError

    def grad_sq(self, theta, phi):
        """|grad f|^2 on the round sphere."""
        raise NotImplementedError

    def laplacian(self, theta, phi):
        raise NotImplementedError

    def grad_gradsq_dot_grad(self, theta, phi):
        """<grad |grad f|^2, grad f>."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantF(SphereFunction):
    c: float = 0.0

    def value(self, theta, phi):
        return np.full(np.broadcast(theta, phi).shape, self.c)

    def grad_sq(self, theta, phi):
        return np.zeros(np.broadcast(theta, phi).shape)

    laplacian = grad_sq
    grad_gradsq_dot_grad = grad_sq


@dataclass(frozen=True)
class CosThetaF(SphereFunction):
    """f = a cos(theta)."""

    a: float = 1.0

    def value(self, theta, phi):
        return self.a * np.cos(theta) + 0.0 * phi

    def grad_sq(self, theta, phi):
        return (self.a * np.sin(theta)) ** 2 + 0.0 * phi

    def laplacian(self, theta, phi):
        return -2.0 * self.a * np.cos(theta) + 0.0 * phi

    def grad_gradsq_dot_grad(self, theta, phi):
        # d_theta (a^2 sin^2) * d_theta (a cos) = 2 a^2 sin cos * (-a sin)
        return -2.0 * self.a**3 * np.sin(theta) ** 2 * np.cos(theta) + 0.0 * phi


@dataclass(frozen=True)
class LstSurface:
    """Slice v = -P with P = f + x phi + x^2 psi / 2."""

    f: SphereFunction
    tau: float

    def __post_init__(self):
        if self.tau <= 0:
            raise ValidationError("tau must be positive")

    def phi(self, theta, phi):
        return -0.5 * (self.tau**2 + self.f.grad_sq(theta, phi))

    def psi(self, theta, phi):
        return 0.5 * (self.tau**2 * self.f.laplacian(theta, phi) + self.f.grad_gradsq_dot_grad(theta, phi))

    def P(self, x, theta, phi):
        return self.f.value(theta, phi) + x * self.phi(theta, phi) + 0.5 * x**2 * self.psi(theta, phi)


def lst_embedding(surface: LstSurface, x, theta, phi):
    """Sample the slice on the tensor grid x * theta * phi (each 1-D and uniform).

    Returns ``(X, spacings)`` with X[..., :] = (v, x, theta, phi) ready for
    ``embedding_geometry``.
    """
    axes = [np.asarray(a, dtype=float) for a in (x, theta, phi)]
    spacings = []
    for a in axes:
        if a.ndim != 1 or a.size < 3:
            raise ValueError("each parameter axis needs at least three samples")
        d = np.diff(a)
        if not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise ValueError("parameter axes must be uniform")
        spacings.append(float(d[0]))
    Xg, Tg, Pg = np.meshgrid(*axes, indexing="ij")
    v = -surface.P(Xg, Tg, Pg)
    return np.stack([v, Xg, Tg, Pg], axis=-1), tuple(spacings)


def schwarzschild_mean_curvature(
    chart: ChartSpec,
    surface: LstSurface,
    x_values,
    theta0: float = 0.5 * np.pi,
    rel_step: float = 0.05,
    angle_step: float = 1e-2,
) -> np.ndarray:
    """Mean curvature of the slice at (x, theta0) for each requested x.

    A 5x5x5 parameter patch is centred on each sample; P is quadratic in x so
    the x-differences are exact and the only discretisation error is angular.
    """
    from .geometry import embedding_geometry

    out = []
    offs = np.arange(-2, 3)
    for x0 in np.atleast_1d(x_values):
        xs = x0 + rel_step * x0 * offs
        ths = theta0 + angle_step * offs
        phs = angle_step * offs
        X, sp = lst_embedding(surface, xs, ths, phs)
        geom = embedding_geometry(chart, X, sp)
        out.append(geom.H[2, 2, 2])
    return np.asarray(out)


def lst_spacelike_threshold(chart: ChartSpec, surface: LstSurface, x_hi: float, samples: int = 200,
                            theta0: float = 0.5 * np.pi) -> Optional[float]:
    """Smallest sampled x in (0, x_hi] where the slice stops being spacelike, or None."""
    from .errors import NotSpacelike
    from .geometry import embedding_geometry

    xs = np.linspace(x_hi / samples, x_hi, samples)
    offs = np.arange(-1, 2)
    for x0 in xs:
        X, sp = lst_embedding(surface, x0 + 1e-3 * x0 * offs, theta0 + 1e-2 * offs, 1e-2 * offs)
        try:
            embedding_geometry(chart, X, sp)
        except (NotSpacelike, DomainError):
            return float(x0)
    return None
