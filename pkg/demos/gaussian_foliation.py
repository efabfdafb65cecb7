"""Normal foliation of a slice: closed forms, comparison envelope and window.

Three slices are pushed along their normal geodesics:

* a hyperboloid in flat space, where g(t) = ((tau0 + t)/tau0)^2 g0,
* a totally geodesic slice in de Sitter space, where g^-1 A = tanh(t) Id,
* a contracting slice that reaches a focal point, which the integrator reports.

Run:  python demos/gaussian_foliation.py
"""

import numpy as np

from pmcflow import foliation as fol
from pmcflow.errors import DegenerateMetric, WindowError


def random_metrics(rng, count, n):
    M = rng.normal(size=(count, n, n))
    return M @ np.swapaxes(M, 1, 2) + n * np.eye(n)


def main():
    rng = np.random.default_rng(7)
    n, tau0 = 2, 0.5
    g0 = random_metrics(rng, 6, n)

    init = fol.FoliationState.initial(g0, g0 / tau0)
    window = fol.guaranteed_window(init.a0, init.c0, init.v0)
    print(f"hyperboloid: a0 = {init.a0:.3f}, b0 = {init.b0:.3f}, guaranteed window {window:.4f}")
    try:
        fol.integrate_foliation(init, tau0 / 2)
    except WindowError as exc:
        print(f"  refused without override: {exc}")
    series = fol.integrate_foliation(init, tau0 / 2, 1e-3, override_window=True)
    last = series[-1]
    c = (tau0 + last.t) / tau0
    print(f"  relative error at t = {last.t:.3f}: {np.max(np.abs(last.g - c**2 * g0)) / np.max(c**2 * g0):.2e}")
    rep = fol.foliation_bounds_check(series)
    print(f"  envelope check {'passes' if rep.ok else 'fails'}; worst margins {rep.worst_envelope_margin:.3f}, "
          f"{rep.worst_A_margin:.3f}")

    ds = fol.FoliationState.initial(g0, np.zeros_like(g0), curvature=lambda t, g: g)
    t_end = fol.guaranteed_window(ds.a0, ds.c0, ds.v0)
    series = fol.integrate_foliation(ds, t_end, 1e-3)
    lam = np.linalg.solve(series[-1].g, series[-1].A)
    print(f"\nde Sitter slice: window {t_end:.4f}, max|g^-1 A - tanh(t) Id| = "
          f"{np.max(np.abs(lam - np.tanh(series[-1].t) * np.eye(n))):.2e}")

    shrink = fol.FoliationState.initial(g0, -g0 / tau0)
    try:
        fol.integrate_foliation(shrink, 2 * tau0, 1e-3, override_window=True)
    except DegenerateMetric as exc:
        print(f"\ncontracting slice: {exc}")


if __name__ == "__main__":
    main()
