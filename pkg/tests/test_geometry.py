import numpy as np
import pytest

from pmcflow import geometry as geo
from pmcflow import spacetimes as st
from pmcflow.errors import NotSpacelike, SpacelikeViolation
from pmcflow.grids import GraphState, SpatialGrid
from pmcflow.verify import graph_embedding_discrepancy, radial_embedding_discrepancy


@pytest.mark.parametrize("n", [1, 2, 3])
def test_hyperboloid_mean_curvature_trace_convention(n):
    tau0 = 1.5
    errs = []
    for N in (65, 129):
        g = SpatialGrid.radial(n, N, 3.0)
        geom = geo.graph_geometry(st.make_minkowski_chart(n), g, st.hyperboloid_profile(tau0, g), delta_floor=1e-3)
        errs.append(np.max(np.abs(geom.H - n / tau0)[:-1]))
        assert np.allclose(np.trace(np.einsum("...ij,...jk->...ik", geom.gamma_inv, geom.A), axis1=-2, axis2=-1),
                           geom.H, atol=1e-10)
    assert errs[1] < 1e-3
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_umbilic_and_frame_quantities():
    n, tau0 = 2, 1.0
    g = SpatialGrid.radial(n, 257, 2.0)
    geom = geo.graph_geometry(st.make_minkowski_chart(n), g, st.hyperboloid_profile(tau0, g),
                              diag_frame=st.make_hyperboloid_frame(), delta_floor=1e-3)
    assert np.max(np.abs(geom.A - geom.gamma / tau0)) < 1e-3
    assert np.allclose(geom.u, tau0)
    assert np.max(np.abs(geom.kappa - 1.0)) < 1e-3
    assert np.allclose(geom.A_norm, np.sqrt(n) / tau0, atol=1e-3)


def test_past_orientation_flips_signs():
    g = SpatialGrid.radial(1, 65, 2.0)
    ch = st.make_minkowski_chart(1)
    s = st.hyperboloid_profile(1.0, g)
    fut = geo.graph_geometry(ch, g, s, delta_floor=1e-3)
    past = geo.graph_geometry(ch, g, s, orientation="past", delta_floor=1e-3)
    assert np.allclose(past.H, -fut.H) and np.allclose(past.nu, -fut.nu)
    with pytest.raises(ValueError):
        geo.graph_geometry(ch, g, s, orientation="sideways")


def test_spacelike_floor():
    g = SpatialGrid.radial(1, 33, 2.0)
    ch = st.make_minkowski_chart(1)
    steep = GraphState(g, 1.2 * g.radius())
    with pytest.raises(SpacelikeViolation) as exc:
        geo.graph_geometry(ch, g, steep)
    assert exc.value.reason in ("spacelike_violation", "not_spacelike")


def test_flat_radial_agrees_with_general():
    g = SpatialGrid.radial(3, 65, 2.0)
    s = st.hyperboloid_profile(0.7, g)
    a = geo.flat_radial_mean_curvature(g, s.w, delta_floor=1e-3)
    b = geo.graph_mean_curvature(st.make_minkowski_chart(3), g, s.w, delta_floor=1e-3)
    assert np.allclose(a, b, atol=1e-12)


def test_graph_vs_embedding_warped_box():
    ch = st.make_de_sitter_chart(2)
    height = lambda X: 0.1 * np.sin(X[..., 0]) * np.cos(X[..., 1])  # noqa: E731
    d = [graph_embedding_discrepancy(ch, height, 2, N) for N in (33, 65)]
    assert d[1] < 1e-3
    assert 3.5 <= d[0] / d[1] <= 4.5


def test_graph_vs_embedding_radial():
    ch = st.make_minkowski_chart(2)
    prof = lambda r: np.sqrt(1 + r**2) + 0.05 * np.exp(-(r**2))  # noqa: E731
    d = [radial_embedding_discrepancy(ch, prof, 2, N, 2.0) for N in (33, 65)]
    assert 3.5 <= d[0] / d[1] <= 4.5


def test_embedding_rejects_timelike():
    ch = st.make_minkowski_chart(1)
    y = np.linspace(0, 1, 9)
    X = np.stack([2.0 * y, y], axis=-1)
    with pytest.raises(NotSpacelike):
        geo.embedding_geometry(ch, X, (y[1] - y[0],))


def test_surface_laplacian_on_flat_slice_converges():
    ch = st.make_de_sitter_chart(2)
    errs = []
    for N in (32, 64):
        g = SpatialGrid.box(2, N, -np.pi, np.pi, periodic=True)
        geom = geo.graph_geometry(ch, g, GraphState(g, np.zeros(g.shape)))
        f = np.sin(g.points()[..., 0])
        # the induced metric of t = 0 is flat, so Delta sin x = -sin x
        errs.append(np.max(np.abs(geo.surface_laplacian(geom, f) + f)))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert np.allclose(geo.surface_gradient_sq(geom, np.zeros(g.shape)), 0.0)


def test_radial_surface_laplacian_converges():
    n = 3
    ch = st.make_minkowski_chart(n)
    errs = []
    for N in (65, 129):
        g = SpatialGrid.radial(n, N, 3.0)
        geom = geo.graph_geometry(ch, g, GraphState(g, np.zeros(g.shape)))
        r = g.axis_coords()
        f = np.exp(-(r**2))
        exact = (4 * r**2 - 2 * n) * f
        errs.append(np.max(np.abs(geo.surface_laplacian(geom, f) - exact)[:-1]))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_extrinsic_sign_constant():
    # future-convex hyperboloids carry positive mean curvature
    assert geo.EXTRINSIC_SIGN == 1.0
