import numpy as np
import pytest
import sympy as sym
from hypothesis import given, settings
from hypothesis import strategies as hs

from pmcflow import charts
from pmcflow import spacetimes as st
from pmcflow.charts import ChartSpec, ReferenceFrame
from pmcflow.errors import DomainError, OrientationError, SignatureError


def _schwarzschild_christoffel_sympy(m):
    v, x, th, ph = sym.symbols("v x theta phi")
    X = [v, x, th, ph]
    G = sym.zeros(4, 4)
    G[0, 0] = -(1 - 2 * m * x)
    G[0, 1] = G[1, 0] = x**-2
    G[2, 2] = x**-2
    G[3, 3] = x**-2 * sym.sin(th) ** 2
    Gi = G.inv()
    gam = [[[sym.simplify(sum(Gi[a, d] * (sym.diff(G[d, b], X[c]) + sym.diff(G[d, c], X[b]) - sym.diff(G[b, c], X[d]))
                              for d in range(4)) / 2)
             for c in range(4)] for b in range(4)] for a in range(4)]
    return sym.lambdify((x, th), gam, "numpy")


def test_minkowski_metric_and_flatness(mink2):
    p = np.array([1.0, 0.3, -0.2])
    assert np.array_equal(charts.metric_at(mink2, p), np.diag([-1.0, 1.0, 1.0]))
    assert np.all(charts.christoffel_at(mink2, p) == 0)
    assert np.all(charts.riemann_at(mink2, p) == 0)


def test_signature_rejected():
    riem = ChartSpec(dim=3, metric=lambda p: np.broadcast_to(np.eye(3), np.shape(p)[:-1] + (3, 3)).copy())
    with pytest.raises(SignatureError):
        charts.metric_at(riem, np.zeros(3))
    two_neg = ChartSpec(dim=3, metric=lambda p: np.diag([-1.0, -1.0, 1.0]))
    with pytest.raises(SignatureError):
        charts.metric_at(two_neg, np.zeros(3))


def test_schwarzschild_domain():
    ch = st.make_schwarzschild_chart(1.0)
    charts.metric_at(ch, np.array([0.0, 0.1, 1.0, 0.0]))
    with pytest.raises(DomainError):
        charts.metric_at(ch, np.array([0.0, 0.6, 1.0, 0.0]))
    with pytest.raises(DomainError):
        charts.metric_at(ch, np.array([0.0, 0.1, 0.0, 0.0]))


def test_schwarzschild_christoffel_matches_symbolic():
    m = 1.0
    oracle = _schwarzschild_christoffel_sympy(m)
    ch = st.make_schwarzschild_chart(m)
    for x, th in [(0.1, 1.0), (0.3, 0.4), (0.05, 2.5)]:
        p = np.array([0.7, x, th, 0.2])
        got = charts.christoffel_at(ch, p)
        want = np.array(oracle(x, th), dtype=float)
        assert np.allclose(got, want, rtol=1e-10, atol=1e-10)


def test_schwarzschild_vacuum_and_kretschmann():
    m = 1.0
    ch = st.make_schwarzschild_chart(m)
    x = 0.2
    p = np.array([0.0, x, 1.1, 0.0])
    G = charts.metric_at(ch, p)
    Rm = charts.riemann_at(ch, p)
    Ric = charts.ricci_from_riemann(G, Rm)
    assert np.max(np.abs(Ric)) < 1e-5
    Gi = np.linalg.inv(G)
    up = np.einsum("ae,bf,cg,dh,efgh->abcd", Gi, Gi, Gi, Gi, Rm)
    K = float(np.sum(up * Rm))
    assert K == pytest.approx(48 * m**2 * x**6, rel=1e-5)


def test_de_sitter_curvature_block():
    n = 3
    ch = st.make_de_sitter_chart(n)
    p = np.array([0.3, 0.1, -0.4, 0.2])
    G = charts.metric_at(ch, p)
    Rm = charts.riemann_at(ch, p)
    assert np.allclose(charts.normal_curvature_block(Rm), G[1:, 1:], atol=1e-6)
    assert np.allclose(charts.ricci_from_riemann(G, Rm), n * G, atol=1e-6)
    # constant curvature: Rm_abcd = G_ad G_bc - G_ac G_bd in this sign convention
    want = np.einsum("ad,bc->abcd", G, G) - np.einsum("ac,bd->abcd", G, G)
    assert np.allclose(Rm, want, atol=1e-6)


def test_hyperboloid_gaussian_chart_is_flat():
    ch = st.make_hyperboloid_gaussian_chart(2, 1.5)
    p = np.array([0.2, 0.4, -0.3])
    assert np.max(np.abs(charts.riemann_at(ch, p))) < 1e-6


def test_metric_compatibility(rng):
    ch = st.make_schwarzschild_chart(0.5)
    P = np.column_stack([rng.uniform(-1, 1, 6), rng.uniform(0.05, 0.9, 6), rng.uniform(0.3, 2.8, 6), rng.uniform(0, 6, 6)])
    G = ch.metric(P)
    dG = ch.metric_derivatives(P)
    Gam = charts.christoffel(ch, P)
    assert np.allclose(Gam, np.swapaxes(Gam, -1, -2))
    # d_c G_ab = G_ad Gam^d_cb + G_bd Gam^d_ca
    rhs = np.einsum("...ad,...dcb->...cab", G, Gam) + np.einsum("...bd,...dca->...cab", G, Gam)
    assert np.allclose(dG, rhs, rtol=1e-9, atol=1e-9 * np.abs(dG).max())


def test_finite_difference_fallback_is_second_order():
    exact = st.make_de_sitter_chart(2)
    p = np.array([0.4, 0.1, 0.2])
    want = charts.christoffel_at(exact, p)
    errs = []
    for h in (1e-2, 5e-3):
        fd = ChartSpec(dim=3, metric=exact.metric, synchronous=True, fd_step=h)
        errs.append(np.max(np.abs(charts.christoffel_at(fd, p) - want)))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_lapse_and_frame_vector():
    hf = st.make_hyperboloid_frame()
    ch = st.make_minkowski_chart(2)
    p = np.array([[2.0, 0.5, 1.0], [3.0, 0.0, 0.0]])
    assert np.allclose(charts.lapse(ch, hf.time_function, p), 1.0)
    T = charts.frame_vector(ch, hf.time_function, p)
    assert np.allclose(T, hf.T(p))
    with pytest.raises(DomainError):
        hf.tau(np.array([1.0, 2.0, 0.0]))


def test_reference_frame_rejects_non_unit():
    with pytest.raises(OrientationError):
        ReferenceFrame.from_vector(np.diag([-1.0, 1.0]), np.array([2.0, 0.0]))


def test_tilt_factor_orientation():
    G = np.diag([-1.0, 1.0, 1.0])
    T = np.array([1.0, 0.0, 0.0])
    assert charts.tilt_factor(G, T, T) == pytest.approx(1.0)
    with pytest.raises(OrientationError):
        charts.tilt_factor(G, T, -T)


def test_reference_norm_index_types():
    fr = ReferenceFrame.from_vector(np.diag([-1.0, 1.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    v = np.array([3.0, 4.0, 0.0])
    assert charts.reference_norm(fr, v, "u") == pytest.approx(5.0)
    assert charts.reference_norm(fr, v, "l") == pytest.approx(5.0)
    B = np.outer(v, v)
    assert charts.reference_norm(fr, B, "ul") == pytest.approx(25.0)
    with pytest.raises(ValueError):
        charts.reference_norm(fr, v, "ul")


@settings(max_examples=60, deadline=None)
@given(hs.floats(0.0, 4.0), hs.floats(0.0, 2 * np.pi), hs.floats(-3.0, 3.0))
def test_tilt_at_least_one_and_reference_metric_positive(rap, ang, rap2):
    G = np.diag([-1.0, 1.0, 1.0])

    def unit(r, a):
        return np.array([np.cosh(r), np.sinh(r) * np.cos(a), np.sinh(r) * np.sin(a)])

    T, Tp = unit(rap, ang), unit(abs(rap2), ang + 1.0)
    assert charts.tilt_factor(G, T, Tp) >= 1.0 - 1e-12
    fr = ReferenceFrame.from_vector(G, T)
    assert np.all(np.linalg.eigvalsh(fr.G_E) > 0)
    assert np.allclose(fr.G_E @ np.linalg.solve(fr.G_E, np.eye(3)), np.eye(3))
