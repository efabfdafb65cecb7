import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from pmcflow import charts
from pmcflow import geometry as geo
from pmcflow import spacetimes as st
from pmcflow.errors import DomainError, ValidationError
from pmcflow.flow import PrescribedCurvatureField, flow_velocity
from pmcflow.grids import GraphState, SpatialGrid
from pmcflow.verify import schwarzschild_expansion


def test_minkowski_rejects_bad_dimension():
    with pytest.raises(ValidationError):
        st.make_minkowski_chart(0)


def test_hyperboloid_profile_validation():
    with pytest.raises(ValidationError):
        st.hyperboloid_profile(-1.0, SpatialGrid.radial(1, 17, 1.0))


def test_self_similar_solution_solves_mcf():
    # d_s w = q^(1/2) H for the exact solution, up to O(h^2)
    n, s = 2, 0.3
    errs = []
    for N in (65, 129):
        g = SpatialGrid.radial(n, N, 3.0)
        r = g.radius()
        w = st.self_similar_height(1.0, n, s, r)
        ds = 1e-5
        ws = (st.self_similar_height(1.0, n, s + ds, r) - st.self_similar_height(1.0, n, s - ds, r)) / (2 * ds)
        v = flow_velocity(st.make_minkowski_chart(n), g, GraphState(g, w, s), PrescribedCurvatureField.constant(0.0),
                          delta_floor=1e-3)
        errs.append(np.max(np.abs(v - ws)[:-1]))
    assert 3.5 < errs[0] / errs[1] < 4.5


@settings(max_examples=200, deadline=None)
@given(hs.floats(0.0, 5.0), hs.floats(0.0, 2 * np.pi), hs.floats(1e-3, 5.0), hs.floats(0.0, 0.999),
       hs.floats(0.0, 2 * np.pi))
def test_example_field_monotone(r, ang, lift, speed, dang):
    x = r * np.array([np.cos(ang), np.sin(ang)])
    P = np.array([r + lift, *x])
    W = np.array([1.0, speed * np.cos(dang), speed * np.sin(dang)])
    ex = st.example_prescribed_field()
    assert ex.grad(P) @ W >= 0.0
    assert ex(P) <= 2.0


def test_example_field_on_unit_half_hyperboloid():
    ex = st.example_prescribed_field()
    r = np.linspace(0, 40, 2001)
    P = np.column_stack([np.sqrt(0.25 + r**2), r, np.zeros_like(r)])
    assert np.max(np.abs(ex(P) - 2.0)) <= np.exp(-0.5)


def test_hyperboloid_frame_reversed():
    f = st.make_hyperboloid_frame(reversed=True)
    p = np.array([2.0, 1.0, 0.0])
    assert f.tau(p) == pytest.approx(-np.sqrt(3.0))
    assert np.allclose(f.T(p), -st.make_hyperboloid_frame().T(p))
    fr = st.make_hyperboloid_frame().reference_frame(p)
    assert fr.T @ fr.G @ fr.T == pytest.approx(-1.0)


def test_gaussian_chart_slices_are_hyperboloids():
    n, tau0 = 2, 1.0
    ch = st.make_hyperboloid_gaussian_chart(n, tau0)
    g = SpatialGrid.box(n, 33, -1.0, 1.0)
    for c in (0.0, 0.5):
        geom = geo.graph_geometry(ch, g, GraphState(g, np.full(g.shape, c)), diag_frame=ch.time_function)
        assert np.allclose(geom.H, n / (tau0 + c), atol=1e-12)
        assert np.allclose(geom.u, tau0 + c)
    with pytest.raises(DomainError):
        charts.metric_at(ch, np.array([-1.5, 0.0, 0.0]))


def test_schwarzschild_helpers():
    assert st.schwarzschild_h(1.0, 0.25) == pytest.approx(0.5)
    assert st.r_star(10.0, 0.0) == 10.0
    assert st.r_star(4.0, 1.0) == pytest.approx(4.0 + 2.0 * np.log(1.0))
    um = st.unphysical_metric(1.0)
    G = um(np.array([[0.0, 1e-4, 1.0, 0.0], [0.0, 1e-8, 1.0, 0.0]]))
    assert np.all(np.isfinite(G)) and np.max(np.abs(G)) < 10
    ch = st.make_schwarzschild_chart(1.0)
    fr = st.static_frame(ch, np.array([0.0, 0.2, 1.0, 0.0]))
    assert fr.T @ fr.G @ fr.T == pytest.approx(-1.0)
    with pytest.raises(ValidationError):
        st.make_schwarzschild_chart(-1.0)
    with pytest.raises(ValidationError):
        st.LstSurface(st.ConstantF(0.0), 0.0)


def test_cos_theta_sphere_function():
    f = st.CosThetaF(0.3)
    th = np.linspace(0.2, 2.9, 7)
    h = 1e-5
    num = (f.value(th + h, 0) - f.value(th - h, 0)) / (2 * h)
    assert np.allclose(f.grad_sq(th, 0), num**2, atol=1e-9)
    # round-sphere Laplacian of an axisymmetric function
    lap = (np.sin(th + h) * -0.3 * np.sin(th + h) - np.sin(th - h) * -0.3 * np.sin(th - h)) / (2 * h * np.sin(th))
    assert np.allclose(f.laplacian(th, 0), lap, atol=1e-8)


def test_lst_embedding_validation():
    s = st.LstSurface(st.ConstantF(0.0), 1.0)
    with pytest.raises(ValueError):
        st.lst_embedding(s, [0.1, 0.2], [1.0, 1.1, 1.2], [0.0, 0.1, 0.2])
    with pytest.raises(ValueError):
        st.lst_embedding(s, [0.1, 0.2, 0.4], [1.0, 1.1, 1.2], [0.0, 0.1, 0.2])
    X, sp = st.lst_embedding(s, [0.1, 0.2, 0.3], [1.0, 1.1, 1.2], [0.0, 0.1, 0.2])
    assert X.shape == (3, 3, 3, 4) and sp == pytest.approx((0.1, 0.1, 0.1))


def test_minkowski_limit_is_umbilic_hyperboloid():
    # m = 0: the quadratic truncation of the hyperboloid u = sqrt(tau^2 + r^2) - r
    H, H0, C, ratios = schwarzschild_expansion(m=0.0, tau=2.0, xs=(0.04, 0.02, 0.01))
    assert H0 == pytest.approx(1.5, abs=1e-6)
    assert np.all(np.abs(ratios - 4.0) < 0.1)


def test_schwarzschild_expansion_with_angular_data():
    H, H0, C, ratios = schwarzschild_expansion(m=1.0, tau=1.0, f=st.CosThetaF(0.1))
    assert abs(H0 - 3.0) < 1e-3
    assert np.all((ratios[1:3] > 3.2) & (ratios[1:3] < 4.8))


def test_spacelike_threshold_found_for_large_x():
    ch = st.make_schwarzschild_chart(1.0)
    thr = st.lst_spacelike_threshold(ch, st.LstSurface(st.ConstantF(0.0), 1.0), 0.49)
    assert thr is None or 0 < thr <= 0.49
    assert st.lst_spacelike_threshold(ch, st.LstSurface(st.ConstantF(0.0), 1.0), 0.01) is None
