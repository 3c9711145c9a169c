"""Acceptance criteria, one test per criterion, each printing PASS/FAIL.

Every tolerance here is pinned; run with ``pytest -s tests/test_acceptance.py``
to see the per-criterion lines.
"""

import os
import subprocess
import sys
import time
from math import erf, pi

import numpy as np
from scipy.integrate import quad

import levolve as lv
from levolve import diffusion as df
from levolve import geodesics as gd
from levolve import monitors as mn
from levolve import transport as tp

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "configs", "acceptance.ini")


def report(num, ok, detail=""):
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    assert ok, line


def test_criterion_01_flat_circle_distance_oracle():
    geom = lv.build_geometry(lv.flat_circle(), 512, (0.05, 6.0))
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        x, y = rng.uniform(0, 2 * pi, 2)
        t1 = rng.uniform(0.1, 2.0)
        t2 = t1 + rng.uniform(0.5, 3.5)
        r = gd.l_distance(geom, x, t1, y, t2, m=64)
        d = min(abs(y - x), 2 * pi - abs(y - x))
        ref = d ** 2 / (2 * (np.sqrt(t2) - np.sqrt(t1)))
        if ref > 0:
            worst = max(worst, abs(r.length - ref) / ref)
    elapsed = time.perf_counter() - t0
    report(1, worst < 1e-6 and elapsed < 30.0,
           f"rel_err={worst:.2e} time={elapsed:.1f}s")


def test_criterion_02_bianchi_cancellation():
    sphere = lv.build_geometry(lv.round_sphere(1.0), 64, (0.5, 9.0))
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        node = int(rng.integers(0, 64))
        tau = float(rng.uniform(0.6, 8.0))
        x = rng.normal(size=2)
        worst = max(worst, abs(sphere.positivity_form(node, tau, x)))
    mins = []
    for model in (lv.flat_circle(), lv.round_sphere(1.0),
                  lv.dilaton_circle(10.0, 1.0, 1.0)):
        geom = lv.build_geometry(model, 64, (0.5, 4.5))
        rep = geom.verify_positivity_form([0.6, 1.0, 2.0, 4.0])
        mins.append(rep.min_value)
    report(2, worst < 1e-8 and min(mins) >= -1e-8,
           f"|D_ricci|max={worst:.2e} min_over_models={min(mins):.2e}")


def test_criterion_03_distance_identity_and_first_variation():
    ok = True
    details = []
    for model, dom in ((lv.flat_circle(), (0.5, 4.5)),
                       (lv.round_sphere(1.0), (0.5, 4.5)),
                       (lv.dilaton_circle(10.0, 1.0, 1.0), (0.5, 4.8))):
        geom = lv.build_geometry(model, 64, dom)
        ser = mn.distance_identity_check(geom, 20, 1.0, 4.0, seed=5)
        ok &= ser.passed()
        details.append(f"{model.kind}:{ser.values.max():.1e}")
        # first-variation spot check at the same tolerance discipline
        r = gd.l_distance(geom, 0.4, 1.0, 2.0, 4.0, m=1025)
        p = gd.l_distance_partials(geom, r)
        delta = 1e-3
        hi = gd.l_distance(geom, 0.4, 1.0 + delta, 2.0, 4.0, m=1025).length
        lo = gd.l_distance(geom, 0.4, 1.0 - delta, 2.0, 4.0, m=1025).length
        ok &= abs((hi - lo) / (2 * delta) - p.dtau1) < 1e-4
    report(3, ok, " ".join(details))


def test_criterion_04_harnack_integral_oracle():
    sphere = lv.build_geometry(lv.round_sphere(1.0), 64, (0.5, 9.0))
    oracle = quad(lambda t: t ** 1.5 * (4 / (1 + 2 * t) ** 2 - 2 / (t * (1 + 2 * t))),
                  1, 4, epsabs=1e-12)[0]
    r = gd.l_distance(sphere, 0.7, 1.0, 0.7, 4.0, m=64)
    val = gd.harnack_integral(sphere, r)
    report(4, abs(val - oracle) < 1e-4, f"value={val:.6f} oracle={oracle:.6f}")


def test_criterion_05_diffusion_mass_and_closed_form():
    drifts = []
    for model, dom in ((lv.flat_circle(), (0.5, 4.5)),
                       (lv.round_sphere(1.0), (0.5, 4.5)),
                       (lv.dilaton_circle(10.0, 1.0, 1.0), (0.5, 4.8))):
        geom = lv.build_geometry(model, 64, dom)
        st = df.initial_state(geom, df.bump_profile(geom, 0.0, 0.6), 1.0)
        out = df.evolve_density(geom, st, 4.0)
        drifts.append(abs(out.mass(geom) - 1.0))
    sphere = lv.build_geometry(lv.round_sphere(1.0), 64, (0.5, 4.5))
    uni = df.initial_state(sphere, np.ones(64), 1.0)
    out = df.evolve_density(sphere, uni, 4.0)
    rel = abs(out.u[0] * 4 * pi * 9 - 1.0)
    report(5, max(drifts) < 1e-8 and rel < 1e-4,
           f"worst_drift={max(drifts):.2e} sphere_rel={rel:.2e}")


def test_criterion_06_renormalized_cost_series():
    s_grid = np.array([-0.2, -0.1, 0.0, 0.1, 0.2])
    ok = True
    details = []
    for model, dom in ((lv.flat_circle(), (0.5, 9.0)),
                       (lv.round_sphere(1.0), (0.5, 9.0)),
                       (lv.dilaton_circle(12.0, 1.0, 1.0), (0.5, 5.5))):
        geom = lv.build_geometry(model, 64, dom)
        b1 = df.initial_state(geom, df.bump_profile(geom, 0.0, 0.5), 0.8)
        tab1 = df.tabulate_diffusion(geom, b1, 1.3)
        b2 = df.initial_state(geom, df.bump_profile(geom, pi, 0.8), 3.2)
        tab2 = df.tabulate_diffusion(geom, b2, 4.0 * np.exp(0.2) + 1e-9)
        ser = mn.renormalized_cost_series(geom, tab1, tab2, 1.0, 4.0, s_grid,
                                          slack=1e-3, m_sigma=48)
        ok &= ser.passed()
        details.append(f"{model.kind}:{ser.worst_violation():.1e}")
    # closed form on the static flat circle with uniform diffusions
    flat = lv.build_geometry(lv.flat_circle(), 64, (0.5, 9.0))
    u = df.initial_state(flat, np.ones(64), 0.7)
    tab = df.tabulate_diffusion(flat, u, 8.2)
    vals = np.array([tp.renormalized_cost(flat, tab, tab, 1.0, 4.0, float(s))
                     for s in s_grid])
    ref = -2.0 * (np.sqrt(4.0) - 1.0) ** 2 * np.exp(s_grid)
    closed = np.max(np.abs(vals - ref))
    report(6, ok and closed < 1e-9, " ".join(details) + f" closed={closed:.1e}")


def test_criterion_07_w_entropy():
    grid = [1.0, 1.5, 2.0, 3.0, 4.0]
    ok = True
    details = []
    for model, dom in ((lv.flat_circle(), (0.5, 4.5)),
                       (lv.round_sphere(1.0), (0.5, 4.5)),
                       (lv.dilaton_circle(10.0, 1.0, 1.0), (0.5, 4.8))):
        geom = lv.build_geometry(model, 64, dom)
        st0 = df.initial_state(geom, df.bump_profile(geom, 0.0, 0.6), 1.0)
        ser = mn.w_entropy_series(geom, st0, grid, slack=1e-3)
        ok &= ser.passed()
        details.append(f"{model.kind}:{ser.worst_violation():.1e}")
    flat = lv.build_geometry(lv.flat_circle(), 64, (0.5, 4.5))
    w1 = mn.w_entropy(flat, df.DiffusionState(u=np.full(64, 1 / (2 * pi)), tau=1.0))
    ok &= abs(w1 - (-0.4276)) < 1e-4
    report(7, ok, " ".join(details) + f" w_flat(1)={w1:.5f}")


def test_criterion_08_gap_and_reduced_volume():
    ok = True
    details = []
    for model, dom, eps, taus in (
            (lv.flat_circle(), (1e-3, 6.0), 1e-3, [0.5, 1.0, 2.0, 4.0]),
            (lv.round_sphere(1.0), (0.5, 6.0), 0.6, [1.0, 2.0, 4.0]),
            (lv.dilaton_circle(10.0, 1.0, 1.0), (0.5, 4.8), 0.6, [1.0, 2.0, 4.0])):
        geom = lv.build_geometry(model, 64, dom)
        fld = gd.l_distance_field(geom, 0.0, eps, np.asarray(taus))
        ser = mn.scaled_distance_gap(geom, fld, slack=1e-3)
        ok &= ser.passed()
        details.append(f"{model.kind}:{ser.worst_violation():.1e}")
    flat = lv.build_geometry(lv.flat_circle(), 64, (1e-3, 6.0))
    fld = gd.l_distance_field(flat, 0.0, 1e-3, np.array([0.5, 1.0, 2.0, 4.0]))
    v1 = mn.reduced_volume(flat, fld, 1.0)
    rv = mn.reduced_volume_series(flat, fld, slack=1e-3)
    ok &= abs(v1 - erf(pi / 2)) < 2e-3 and rv.passed()
    report(8, ok, " ".join(details) + f" rv(1)={v1:.4f} vs erf(pi/2)={erf(pi/2):.4f}")


def test_criterion_09_convexity_profile():
    ok = True
    details = []
    for model, dens in ((lv.flat_circle(), 1 / (2 * pi)),
                        (lv.round_sphere(1.0), 1 / (12 * pi))):
        geom = lv.build_geometry(model, 64, (0.5, 6.0))
        nu1 = tp.measure_from_density(geom, np.full(64, dens), 1.0)
        for amp in (0.0, 0.1):
            ser = mn.convexity_profile(geom, nu1, amp * np.cos(geom.nodes),
                                       1.0, 4.0, grid_points=9, slack=1e-3)
            ok &= ser.passed()
            details.append(f"{model.kind}@{amp}:{ser.worst_violation():.1e}")
    # the zero-potential flat profile is analytically -n log w plus a constant
    flat = lv.build_geometry(lv.flat_circle(), 64, (0.5, 6.0))
    nu1 = tp.measure_from_density(flat, np.full(64, 1 / (2 * pi)), 1.0)
    ser = mn.convexity_profile(flat, nu1, np.zeros(64), 1.0, 4.0)
    shape = ser.values - ser.values[-1] + np.log(ser.abscissa) - np.log(ser.abscissa[-1])
    ok &= np.max(np.abs(shape)) < 1e-9
    report(9, ok, " ".join(details))


def test_criterion_10_product_inequality():
    flat = lv.build_geometry(lv.flat_circle(), 64, (0.5, 4.5))
    rep = mn.prekopa_leindler_check(flat, np.ones(64), np.ones(64), 0.5, 1.0, 4.0,
                                    m_sigma=34)
    ok = abs(rep.margin - np.sqrt(9 / 8)) < 1e-3 and rep.passed
    rng = np.random.default_rng(31)
    for model, dom in ((lv.flat_circle(), (0.5, 4.5)),
                       (lv.round_sphere(1.0), (0.5, 4.5)),
                       (lv.dilaton_circle(10.0, 1.0, 1.0), (0.5, 4.8))):
        geom = lv.build_geometry(model, 64, dom)
        for _ in range(5):
            u1 = rng.uniform(0.1, 1.0) + rng.uniform(0, 1) * df.bump_profile(
                geom, rng.uniform(0, 2 * pi), rng.uniform(0.4, 1.0))
            u2 = rng.uniform(0.1, 1.0) + rng.uniform(0, 1) * df.bump_profile(
                geom, rng.uniform(0, 2 * pi), rng.uniform(0.4, 1.0))
            r = mn.prekopa_leindler_check(geom, u1, u2, float(rng.uniform(0.25, 0.75)),
                                          1.0, 4.0, m_sigma=34)
            ok &= r.passed
    report(10, ok, f"closed_margin={rep.margin:.6f} (sqrt(9/8)={np.sqrt(9/8):.6f})")


def test_criterion_11_transport_certificates():
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(10):
        m, n = int(rng.integers(2, 13)), int(rng.integers(2, 13))
        a = rng.random(m)
        a /= a.sum()
        b = rng.random(n)
        b /= b.sum()
        cost = rng.normal(size=(m, n))
        mu = tp.DiscreteMeasure(points=np.arange(m, dtype=float), weights=a, tau=1.0)
        nu = tp.DiscreteMeasure(points=np.arange(n, dtype=float), weights=b, tau=4.0)
        plan = tp.solve_transport(mu, nu, cost)
        cert = tp.verify_dual_certificate(plan, cost, tol=1e-9)
        ok &= cert["passed"] and cert["gap"] < 1e-9
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3):
            ent = tp.solve_transport(mu, nu, cost, mode="entropic", epsilon=eps)
            gaps.append(abs(ent.cost - plan.cost))
        ok &= gaps[0] >= gaps[1] - 1e-10 and gaps[1] >= gaps[2] - 1e-10
        ok &= gaps[2] < 5e-3
    report(11, ok, "10 instances, duals + sinkhorn ladder")


def test_criterion_12_end_to_end_determinism(tmp_path):
    t0 = time.perf_counter()
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        rc = subprocess.run(
            [sys.executable, "-m", "levolve.cli", "run", CONFIG,
             "--out-dir", str(out), "--seed", "7"],
            capture_output=True, text=True, cwd=os.path.dirname(CONFIG))
        assert rc.returncode == 0, rc.stderr
        outs.append(out)
    csvs = sorted(p.name for p in outs[0].glob("*.csv"))
    ok = len(csvs) > 0
    for name in csvs:
        ok &= (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    elapsed = time.perf_counter() - t0
    report(12, ok and elapsed < 600, f"{len(csvs)} csvs byte-identical, {elapsed:.0f}s")
