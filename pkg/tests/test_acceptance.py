"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import logging
import time

import numpy as np

from cproj.curvature import classify, k_tensor, weyl
from cproj.expr import diff, evaluate, parse
from cproj.geodesics import integrate_geodesic, wedge_residual
from cproj.metrisability import (
    default_loops,
    flat_metric_field,
    h_from_metric,
    metrise,
    obstruction_solution_space,
    solve_flat,
    verify_compatibility,
    weyl_obstruction_residual,
)
from cproj.prolongation import ChartPath, holonomy_defect, transport
from cproj.structure import (
    HermitianMetricField,
    ProjectiveStructure,
    default_grid,
    fubini_study,
    levi_civita,
    project,
)

from _factories import random_hermitian3, random_points, random_polynomial, random_potential, random_structure

log = logging.getLogger("cproj.acceptance")

ZERO = ProjectiveStructure.zero()
GRID = default_grid()


def sup(a):
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def test_1_fubini_study_flatness(acceptance):
    t0 = time.perf_counter()
    pi = project(levi_civita(fubini_study()))
    norm = sup(pi.values(GRID))
    label = classify(pi, GRID).label
    elapsed = time.perf_counter() - t0
    ok = norm < 1e-9 and label == "flat" and elapsed < 5
    assert acceptance(1, "Fubini-Study flatness", ok, f"sup|Pi| = {norm:.2e}, label {label}, {elapsed:.2f} s")


def test_2_flat_closed_form_metrics_are_compatible(acceptance):
    # Reconstruction is defined where det hmat != 0; points closer than 1e-2
    # to the degeneracy locus of h are left out rather than rejecting C.
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, worst_kahler, used, dropped = 0.0, 0.0, 0, 0
    for _ in range(20):
        C = random_hermitian3(rng, max_cond=1e3, min_rank=2)
        dets = np.array([solve_flat(C, p).det for p in GRID])
        keep = np.abs(dets) >= 1e-2
        dropped += int((~keep).sum())
        rep = verify_compatibility(ZERO, flat_metric_field(C), GRID[keep])
        worst = max(worst, rep.residual)
        worst_kahler = max(worst_kahler, rep.kahler_residual)
        used += rep.n_samples
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-7 and worst_kahler < 1e-8 and elapsed < 30
    detail = (
        f"compatibility {worst:.2e}, kahler {worst_kahler:.2e} over {used} samples "
        f"({dropped} near det h = 0 left out), {elapsed:.2f} s"
    )
    assert acceptance(2, "flat closed form is compatible", ok, detail)


def test_3_closed_form_versus_transport(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        C = random_hermitian3(rng)
        n = int(rng.integers(2, 5))
        pts = rng.uniform(-0.4, 0.4, (n, 2)) + 1j * rng.uniform(-0.4, 0.4, (n, 2))
        moved = transport(ZERO, solve_flat(C, pts[0]), ChartPath.polyline(pts), 1000)
        worst = max(worst, sup(moved.to_real() - solve_flat(C, pts[-1]).to_real()))

    # On straight segments of the flat structure the RK4 update is exact (the
    # system is nilpotent), so the convergence order is measured on curves.
    steps = np.array([125, 250, 500, 1000])
    orders = []
    for k in range(3):
        C = random_hermitian3(rng)
        a, b = map(float, rng.uniform(0.4, 0.8, 2))
        path = ChartPath.parametric(f"{a!r}*z1^2/(1+z1^2)", f"i*{b!r}*z1*(1-z1)/(1+{k}*z1^2)")
        target = solve_flat(C, path.end).to_real()
        errs = [sup(transport(ZERO, solve_flat(C, path.start), path, int(s)).to_real() - target) for s in steps]
        orders.append(-np.polyfit(np.log(steps), np.log(errs), 1)[0])
    ok = worst < 1e-8 and min(orders) >= 3.5
    detail = f"polyline error {worst:.2e}, fitted orders {', '.join(f'{o:.2f}' for o in orders)}"
    assert acceptance(3, "closed form vs transport", ok, detail)


def test_4_liouville_obstruction(acceptance):
    pi = ProjectiveStructure({"Pi1_22": "z1^2"})
    L = pi.gauge_data(GRID).liouville
    l_err = sup(L - np.array([0, -2]))
    pts = default_grid(3)
    rep = metrise(pi, pts, (0, 0))
    defects = [holonomy_defect(pi, lp) for lp in default_loops((0, 0))]
    ok = l_err < 1e-9 and rep.stage == "liouville" and not rep.metrisable and min(defects) > 1e-6
    detail = f"|L - (0,-2)| = {l_err:.1e}, stage {rep.stage}, min holonomy defect {min(defects):.3f}"
    assert acceptance(4, "Liouville obstruction", ok, detail)


def test_5_obstruction_necessity(acceptance):
    rng = np.random.default_rng(5)
    corpus = [fubini_study(), HermitianMetricField.identity()]
    corpus += [random_potential(rng)[0] for _ in range(5)]
    worst = 0.0
    for g in corpus:
        W = project(levi_civita(g)).gauge_data(GRID).weyl
        for n, p in enumerate(GRID):
            worst = max(worst, weyl_obstruction_residual(W[n], h_from_metric(g, p)))
    conj = ProjectiveStructure({"Pi1_22": "conj(z1)"})
    Wc = conj.gauge_data(GRID).weyl
    bad = max(abs(weyl_obstruction_residual(w, np.eye(2)) - 2) for w in Wc)
    ok = worst < 1e-8 and bad < 1e-9
    assert acceptance(5, "algebraic obstruction necessity", ok, f"compatible {worst:.2e}, |conj z1 - 2| {bad:.1e}")


def test_6_bianchi_suite(acceptance):
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    w_sym = w_tr = k_sym = 0.0
    for _ in range(50):
        pi, _ = random_structure(rng, degree=2)
        for p in random_points(rng, 10):
            w = weyl(pi, p)
            w_sym = max(w_sym, w.symmetry_residual())
            w_tr = max(w_tr, w.trace_residual())
            k_sym = max(k_sym, k_tensor(pi, p).symmetry_residual())
    elapsed = time.perf_counter() - t0
    ok = w_sym < 1e-12 and w_tr < 1e-12 and k_sym < 1e-10 and elapsed < 60
    detail = f"W symmetry {w_sym:.1e}, W trace {w_tr:.1e}, K symmetry {k_sym:.1e}, {elapsed:.2f} s"
    assert acceptance(6, "Bianchi identities", ok, detail)


def _random_expression(rng, n):
    text, _ = random_polynomial(rng, degree=3)
    if n % 2:
        q, _ = random_polynomial(rng, degree=1)
        text = f"({text})/(3+({q})*conj({q}))"
    return parse(text)


def test_7_wirtinger_derivatives(acceptance):
    # relative error, with an absolute floor of 1e-6 where the derivative is below 1
    rng = np.random.default_rng(7)
    h = 1e-5
    worst = 0.0
    for n in range(200):
        e = _random_expression(rng, n)
        p = rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2)
        for index in (0, 1):
            unit = np.zeros(2, dtype=complex)
            unit[index] = 1
            dx = (evaluate(e, p + h * unit) - evaluate(e, p - h * unit)) / (2 * h)
            dy = (evaluate(e, p + 1j * h * unit) - evaluate(e, p - 1j * h * unit)) / (2 * h)
            for barred, approx in ((False, 0.5 * (dx - 1j * dy)), (True, 0.5 * (dx + 1j * dy))):
                exact = evaluate(diff(e, index + 1, barred), p)
                worst = max(worst, abs(exact - approx) / max(1.0, abs(exact)))
    ok = worst < 1e-6
    assert acceptance(7, "Wirtinger derivatives", ok, f"max error {worst:.2e} over 200 pairs x 4 derivatives")


def test_8_geodesics(acceptance):
    rng = np.random.default_rng(8)
    residuals = []
    straight = 0.0
    for _ in range(5):
        z0 = rng.uniform(-0.5, 0.5, 2) + 1j * rng.uniform(-0.5, 0.5, 2)
        v0 = rng.normal(size=2) + 1j * rng.normal(size=2)
        traj = integrate_geodesic(ZERO, z0, v0, 1.0, 200)
        straight = max(straight, sup(traj.z - (z0 + np.outer(traj.t, v0))))
        residuals.append(wedge_residual(ZERO, traj))

    c_family = ProjectiveStructure({"Pi1_11": "1", "Pi2_12": "-1"})
    traj = integrate_geodesic(c_family, (0, 0), (1, 0), 1.0, 1000)
    idx = [np.argmin(np.abs(traj.t - t)) for t in (0.25, 0.5, 1.0)]
    log_err = sup(traj.z[idx, 0] - np.log1p(traj.t[idx])) + sup(traj.z[idx, 1])
    residuals.append(wedge_residual(c_family, traj))

    fs = project(levi_civita(fubini_study()))
    for pi in [fs] + [random_structure(rng)[0] for _ in range(3)]:
        v0 = rng.normal(size=2) + 1j * rng.normal(size=2)
        traj = integrate_geodesic(pi, (0.1, -0.1j), 0.5 * v0 / np.linalg.norm(v0), 1.0, 1000)
        residuals.append(wedge_residual(pi, traj))
    ok = straight < 1e-10 and log_err < 1e-8 and max(residuals) < 1e-6
    detail = f"straightness {straight:.1e}, log(1+t) error {log_err:.1e}, max wedge residual {max(residuals):.1e}"
    assert acceptance(8, "geodesics", ok, detail)


def test_9_generic_non_metrisability(acceptance):
    rng = np.random.default_rng(9)
    dims, failures = [], 0
    for n in range(10):
        pi, _ = random_structure(rng, degree=2)
        try:
            W = pi.gauge_data(random_points(rng, 5)).weyl
            dims.append(len(obstruction_solution_space(list(W))))
        except Exception:
            failures += 1
            log.exception("structure %d raised: %s", n, pi)
    ok = failures <= 2 and all(d == 0 for d in dims)
    assert acceptance(9, "generic non-metrisability", ok, f"dimensions {dims}, {failures} exceptions")
