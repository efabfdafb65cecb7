"""Structured spatial grids, graph states and their finite-difference operators.

Every derivative used by the flow is a sparse matrix acting on the flattened
node vector, so the Newton solver can assemble the exact Jacobian of the
discrete residual from the same stencils.

Radial grids carry spherically symmetric data on r in [0, R_max].  Gradients
and Hessians are reported in Cartesian components at the point (r, 0, ..., 0):
grad = (f', 0, ..., 0) and Hess = diag(f'', f'/r, ..., f'/r), with the
removable singularity at r = 0 replaced by its limit f''(0).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.sparse as sp

TOPOLOGIES = ("radial", "box-periodic", "box-dirichlet")


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid in n spatial dimensions.

    For ``radial`` the single axis is r in [0, extent]; box grids use
    ``extent = (lo, hi)`` on every axis.  Periodic boxes exclude the end point.
    """

    n: int
    topology: str
    nodes_per_axis: int
    extent: Tuple[float, ...]

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.nodes_per_axis < 9:
            raise ValueError("nodes_per_axis must be at least 9")
        if self.n < 1:
            raise ValueError("spatial dimension must be >= 1")
        ext = tuple(float(e) for e in np.atleast_1d(self.extent))
        object.__setattr__(self, "extent", ext)
        if self.topology == "radial":
            if len(ext) != 1 or ext[0] <= 0:
                raise ValueError("radial grids need a positive R_max")
        elif len(ext) != 2 or ext[1] <= ext[0]:
            raise ValueError("box grids need extent = (lo, hi) with hi > lo")

    @classmethod
    def radial(cls, n, nodes, r_max):
        return cls(n, "radial", int(nodes), (float(r_max),))

    @classmethod
    def box(cls, n, nodes, lo, hi, periodic=False):
        return cls(n, "box-periodic" if periodic else "box-dirichlet", int(nodes), (float(lo), float(hi)))

    @property
    def axes(self) -> int:
        return 1 if self.topology == "radial" else self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nodes_per_axis,) * self.axes

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> float:
        N = self.nodes_per_axis
        if self.topology == "radial":
            return self.extent[0] / (N - 1)
        lo, hi = self.extent
        return (hi - lo) / (N if self.topology == "box-periodic" else N - 1)

    def axis_coords(self) -> np.ndarray:
        N = self.nodes_per_axis
        if self.topology == "radial":
            return np.arange(N) * self.h
        return self.extent[0] + np.arange(N) * self.h

    def points(self) -> np.ndarray:
        """Cartesian node coordinates, shape ``grid.shape + (n,)``."""
        c = self.axis_coords()
        if self.topology == "radial":
            X = np.zeros((self.nodes_per_axis, self.n))
            X[:, 0] = c
            return X
        mesh = np.meshgrid(*([c] * self.n), indexing="ij")
        return np.stack(mesh, axis=-1)

    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.points(), axis=-1)

    def boundary_mask(self) -> np.ndarray:
        """Nodes carrying Dirichlet data (outer radius / box faces)."""
        mask = np.zeros(self.shape, dtype=bool)
        if self.topology == "box-periodic":
            return mask
        if self.topology == "radial":
            mask[-1] = True
            return mask
        for ax in range(self.n):
            idx = [slice(None)] * self.n
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()


@dataclass(frozen=True)
class GraphState:
    """Height function w (chart time units) on a grid at flow time s."""

    grid: SpatialGrid
    w: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != self.grid.shape:
            raise ValueError(f"w has shape {w.shape}, grid expects {self.grid.shape}")
        object.__setattr__(self, "w", w)

    def with_w(self, w, s=None) -> "GraphState":
        return GraphState(self.grid, w, self.s if s is None else s)


# --------------------------------------------------------------------------
# 1-D stencils
# --------------------------------------------------------------------------


def _d1_matrix(N, h, kind):
    """First derivative.  kind: 'periodic' | 'dirichlet' | 'radial'."""
    if kind == "periodic":
        D = sp.diags([-0.5, 0.5], [-1, 1], shape=(N, N), format="lil")
        D[0, N - 1] = -0.5
        D[N - 1, 0] = 0.5
        return (D / h).tocsr()
    D = sp.diags([-0.5, 0.5], [-1, 1], shape=(N, N), format="lil")
    if kind == "radial":
        D[0, :] = 0.0  # even symmetry: f'(0) = 0
    else:
        D[0, 0:3] = [-1.5, 2.0, -0.5]
    D[N - 1, :] = 0.0
    D[N - 1, N - 3 : N] = [0.5, -2.0, 1.5]
    return (D / h).tocsr()


def _d2_matrix(N, h, kind):
    D = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(N, N), format="lil")
    if kind == "periodic":
        D[0, N - 1] = 1.0
        D[N - 1, 0] = 1.0
        return (D / h**2).tocsr()
    if kind == "radial":
        D[0, :] = 0.0
        D[0, 0:2] = [-2.0, 2.0]  # ghost node f(-h) = f(h)
    else:
        D[0, :] = 0.0
        D[0, 0:4] = [2.0, -5.0, 4.0, -1.0]
    D[N - 1, :] = 0.0
    D[N - 1, N - 4 : N] = [-1.0, 4.0, -5.0, 2.0]
    return (D / h**2).tocsr()


@dataclass(frozen=True)
class Operators:
    """Sparse derivative operators on the flattened node vector.

    ``grad[i]`` gives d_i; ``hess[i][j]`` gives d_i d_j in the Cartesian
    component convention of the module docstring.
    """

    grad: tuple
    hess: tuple


@lru_cache(maxsize=64)
def operators(grid: SpatialGrid) -> Operators:
    N, h, n = grid.nodes_per_axis, grid.h, grid.n
    if grid.topology == "radial":
        D1 = _d1_matrix(N, h, "radial")
        D2 = _d2_matrix(N, h, "radial")
        r = grid.axis_coords()
        inv_r = np.zeros(N)
        inv_r[1:] = 1.0 / r[1:]
        Dang = (sp.diags(inv_r) @ D1).tolil()
        # f'/r -> f''(0) at the origin; this row also matches the r -> 0 limit
        # h^2 f''''(0)/6 of the interior truncation error, keeping it smooth
        Dang[0, :] = 0.0
        Dang[0, 0:3] = np.array([-9.0, 8.0, 1.0]) / (6.0 * h**2)
        Dang = Dang.tocsr()
        Z = sp.csr_matrix((N, N))
        grad = tuple([D1] + [Z] * (n - 1))
        hess = tuple(
            tuple(D2 if (i == j == 0) else (Dang if i == j else Z) for j in range(n)) for i in range(n)
        )
        return Operators(grad, hess)
    kind = "periodic" if grid.topology == "box-periodic" else "dirichlet"
    D1 = _d1_matrix(N, h, kind)
    D2 = _d2_matrix(N, h, kind)
    eye = sp.identity(N, format="csr")

    def along(M, axis):
        out = None
        for ax in range(n):
            factor = M if ax == axis else eye
            out = factor if out is None else sp.kron(out, factor, format="csr")
        return out

    grad = tuple(along(D1, i) for i in range(n))
    hess = tuple(
        tuple(along(D2, i) if i == j else (grad[i] @ grad[j]).tocsr() for j in range(n)) for i in range(n)
    )
    return Operators(grad, hess)


def derivatives(grid: SpatialGrid, f) -> Tuple[np.ndarray, np.ndarray]:
    """(grad, hess) of a node field, shapes ``grid.shape + (n,)`` and ``+ (n, n)``."""
    ops = operators(grid)
    flat = np.asarray(f, dtype=float).reshape(-1)
    n = grid.n
    if grid.topology == "radial":
        g = np.zeros((flat.size, n))
        H = np.zeros((flat.size, n, n))
        g[:, 0] = ops.grad[0] @ flat
        H[:, 0, 0] = ops.hess[0][0] @ flat
        if n > 1:
            tang = ops.hess[1][1] @ flat
            for k in range(1, n):
                H[:, k, k] = tang
        return g, H
    g = np.empty((flat.size, n))
    H = np.empty((flat.size, n, n))
    for i in range(n):
        g[:, i] = ops.grad[i] @ flat
        for j in range(i, n):
            H[:, i, j] = ops.hess[i][j] @ flat
            H[:, j, i] = H[:, i, j]
    return g.reshape(grid.shape + (n,)), H.reshape(grid.shape + (n, n))
