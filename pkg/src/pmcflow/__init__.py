"""Prescribed mean curvature flow of spacelike graphs in Lorentzian backgrounds."""

from .charts import (
    ChartSpec,
    ReferenceFrame,
    TimeFunction,
    christoffel_at,
    metric_at,
    reference_norm,
    riemann_at,
    tilt_factor,
)
from .errors import PmcfError
from .flow import FlowConfig, PrescribedCurvatureField, flow_velocity, linearized_coefficients, run_flow, stationary_solve, step
from .foliation import FoliationState, foliation_bounds_check, integrate_foliation
from .geometry import SurfaceGeometry, embedding_geometry, graph_geometry, surface_laplacian
from .grids import GraphState, SpatialGrid

__version__ = "0.1.0"

__all__ = [
    "ChartSpec",
    "FlowConfig",
    "FoliationState",
    "GraphState",
    "PmcfError",
    "PrescribedCurvatureField",
    "ReferenceFrame",
    "SpatialGrid",
    "SurfaceGeometry",
    "TimeFunction",
    "christoffel_at",
    "embedding_geometry",
    "flow_velocity",
    "foliation_bounds_check",
    "graph_geometry",
    "integrate_foliation",
    "linearized_coefficients",
    "metric_at",
    "reference_norm",
    "riemann_at",
    "run_flow",
    "stationary_solve",
    "step",
    "surface_laplacian",
    "tilt_factor",
]
