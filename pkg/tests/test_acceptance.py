"""End-to-end acceptance criteria; each test prints one PASS/FAIL line (collected in the terminal summary)."""
import time

import numpy as np
import pytest

from evosurf_ch import cli
from evosurf_ch.config import parse_text
from evosurf_ch.diagnostics import (ADMISSIBLE, BREAKDOWN, ROW_COLUMNS, admissibility_profile,
                                    fit_excess_decay, gronwall_bound, hminus1_distance)
from evosurf_ch.fem import inverse_laplacian, l2_norm, mean_value
from evosurf_ch.geometry import RadialScaling, TangentialRotation, make_surface
from evosurf_ch.potentials import LogPotential, ObstaclePenalty, SmoothPotential, beta_eval, check_assumptions
from evosurf_ch.solver import SchemeConfig, run_simulation

pytestmark = pytest.mark.acceptance


def _bumpy(x):
    return 0.1 + 0.3 * np.sin(2 * x[:, 0]) * np.cos(x[:, 1] + x[:, 2])


def test_c01_mass_conservation_rotating_sphere(acceptance_report):
    surf = make_surface("unit-sphere", 4, TangentialRotation(omega=1.0), t_final=0.2)
    t0 = time.perf_counter()
    res = run_simulation(surf, SmoothPotential.quartic(), SchemeConfig(1e-3, 0.2), _bumpy, keep_states=False)
    wall = time.perf_counter() - t0
    mass = res.column("mass")
    drift = np.abs(mass - mass[0]).max() / abs(mass[0])
    ok = len(mass) == 201 and drift <= 1e-9 and wall <= 60
    assert acceptance_report(1, "mass conservation", ok,
                             f"rel drift {drift:.2e} over {len(mass) - 1} steps, {wall:.1f} s")


def test_c02_weighted_mass_shrinking_sphere(acceptance_report):
    surf = make_surface("unit-sphere", 4, RadialScaling.linear(1.0, 0.6, 0.5), t_final=0.5)
    t0 = time.perf_counter()
    res = run_simulation(surf, LogPotential(0.3, 1e-3), SchemeConfig(5e-3, 0.5, model="CHrho"),
                         lambda x: 0.2 + 0.3 * x[:, 0] * x[:, 1], keep_states=False)
    wall = time.perf_counter() - t0
    wm = res.column("weighted_mass")
    drift = np.abs(wm - wm[0]).max() / abs(wm[0])
    r_end = np.sqrt(res.column("area")[-1] / res.column("area")[0])
    ok = res.completed and drift <= 1e-9 and wall <= 60 and abs(r_end - 0.6) < 1e-6
    assert acceptance_report(2, "weighted mass conservation", ok,
                             f"rel drift {drift:.2e}, radius ratio {r_end:.6f}, {wall:.1f} s")


def test_c03_admissibility_dichotomy(acceptance_report):
    shrink = make_surface("unit-sphere", 3, RadialScaling.linear(1.0, 0.5, 1.0), t_final=1.0)
    grow = make_surface("unit-sphere", 3, RadialScaling.linear(1.0, 1.5, 1.0), t_final=1.0)
    a = admissibility_profile(shrink, 0.5)
    b = admissibility_profile(grow, 0.5)
    ok = abs(a.max_m - 2.0) <= 1e-6 and a.verdict == BREAKDOWN and b.verdict == ADMISSIBLE
    assert acceptance_report(3, "admissibility dichotomy", ok,
                             f"shrinking: {a.summary()}; growing: {b.summary()}")


def test_c04_models_agree_on_rotation(acceptance_report):
    surf = make_surface("unit-sphere", 3, TangentialRotation(axis=(1.0, 1.0, 0.0), omega=2.0), t_final=1.0)
    cols = {}
    for model in ("CH1", "CHrho"):
        res = run_simulation(surf, SmoothPotential.quartic(), SchemeConfig(1e-2, 1.0, model=model), _bumpy,
                             keep_states=False)
        cols[model] = np.array([[row[c] for c in ROW_COLUMNS] for row in res.rows], dtype=float)
    gap = np.abs(cols["CH1"] - cols["CHrho"]).max()
    ok = cols["CH1"].shape[0] == 101 and gap <= 1e-9
    assert acceptance_report(4, "CH1 / CHrho agreement", ok, f"max column discrepancy {gap:.2e} over 100 steps")


def test_c05_energy_stability(sphere, acceptance_report):
    rng = np.random.default_rng(5)
    u0 = rng.uniform(-0.8, 0.8, sphere(3).reference_mesh.n_vertices)
    res = run_simulation(sphere(3), SmoothPotential.quartic(), SchemeConfig(1e-3, 0.5), u0, keep_states=False)
    e = res.column("energy")
    inc = np.diff(e) - 1e-12 * np.maximum(1.0, np.abs(e[:-1]))
    bad = int(np.sum(inc > 0))
    ok = len(e) == 501 and bad == 0
    assert acceptance_report(5, "energy stability", ok,
                             f"{bad} increasing steps of 500, E {e[0]:.6g} -> {e[-1]:.6g}, "
                             f"max increment {np.diff(e).max():.2e}")


def test_c06_inverse_laplacian_eigenpair(sphere, forms, acceptance_report):
    errs = []
    for level in (3, 4, 5):
        f = forms(level)
        x3 = sphere(level).reference_mesh.vertices[:, 2]
        g, _ = inverse_laplacian(f, x3 - mean_value(f, x3))
        errs.append(l2_norm(f, g - x3 / 2) / l2_norm(f, x3 / 2))
    ok = errs[0] > errs[1] > errs[2] and errs[1] <= 0.05
    assert acceptance_report(6, "inverse Laplacian eigen check", ok,
                             "relative errors " + ", ".join(f"{e:.3%}" for e in errs))


SWEEP_DELTA = """
surface.level = 3
surface.velocity = radial-linear
surface.end_radius = 0.8
surface.ramp_time = 0.2
model = CH1_obstacle
potential.kind = obstacle
potential.delta = 0.1
initial.kind = expression
initial.expression = 0.5 + 0.35 * z
scheme.dt = 5e-3
scheme.t_end = 0.4
"""


def test_c07_excess_decay(tmp_path, acceptance_report):
    cfg = parse_text(SWEEP_DELTA, str(tmp_path))
    deltas = [1e-1, 1e-2, 1e-3, 1e-4]
    rows = cli.run_sweep(cfg, "penalty_delta", deltas, str(tmp_path / "sweep"), workers=1)
    excess = np.array([r["max_excess"] for r in rows])
    c1, c2, resid = fit_excess_decay(deltas, excess)
    ok = (all(r["status"] == "ok" for r in rows) and np.all(np.diff(excess) < 0)
          and c1 >= 0 and c2 >= 0 and resid <= 0.2)
    assert acceptance_report(7, "excess decay", ok,
                             "max excess " + ", ".join(f"{e:.3g}" for e in excess)
                             + f"; fit c1 = {c1:.3g}, c2 = {c2:.3g}, residual {resid:.1%}")


SWEEP_THETA = """
surface.level = 3
potential.kind = log
potential.theta = 0.5
potential.reference_delta = 1e-3
initial.kind = expression
initial.expression = 0.2 + 0.6 * sin(2 * x) * cos(y + z)
scheme.dt = 1e-2
scheme.t_end = 1.0
"""


def test_c08_deep_quench(tmp_path, acceptance_report):
    cfg = parse_text(SWEEP_THETA, str(tmp_path))
    thetas = [0.5, 0.2, 0.1, 0.05]
    rows = cli.run_sweep(cfg, "theta", thetas, str(tmp_path / "sweep"), workers=1)
    dist = np.array([r["distance_to_reference"] for r in rows[:len(thetas)]])
    ok = all(r["status"] == "ok" for r in rows) and np.all(np.diff(dist) <= 0)
    assert acceptance_report(8, "deep quench", ok, "distances " + ", ".join(f"{d:.4g}" for d in dist))


def test_c09_gronwall_dominates_rk4(rk4_gronwall, acceptance_report):
    rng = np.random.default_rng(9)
    violations, checked = 0, 0
    for _ in range(20):
        a0, C, C0 = rng.uniform(0, 2), rng.uniform(0.1, 2), rng.uniform(0, 1)
        q, T = int(rng.integers(1, 5)), rng.uniform(0.1, 1.0)
        # eps placed strictly inside the smallness condition
        eps = rng.uniform(0.05, 0.9) / (np.exp(T * C * q) * (a0 + C0) ** q)
        times, a = rk4_gronwall(a0, C, C0, eps, q, T, n=20000)
        for k in np.linspace(0, len(times) - 1, 100).astype(int):
            bound = gronwall_bound(a0, C, C0, eps, q, times[k])
            checked += 1
            if bound is None or bound < a[k] - 1e-10 * max(1.0, abs(a[k])):
                violations += 1
    assert acceptance_report(9, "Gronwall bound", violations == 0,
                             f"{violations} violations in {checked} samples over 20 parameter sets")


def _seam_ok(p, s, h=1e-9):
    # jumps of F and F' across s must be O(h) relative to the local slope and curvature
    curv = max(1.0, abs(float(p.d2F(s - h))), abs(float(p.d2F(s + h))))
    return (abs(p.F(s + h) - p.F(s - h)) <= 10 * h * max(1.0, abs(float(p.dF(s))))
            and abs(p.dF(s + h) - p.dF(s - h)) <= 10 * h * curv)


def test_c10_potential_suite(acceptance_report):
    failures = []
    r = np.linspace(-3, 3, 6001)
    for d in (1e-1, 1e-2, 1e-3, 1e-4):
        log_p, obs_p = LogPotential(0.3, d), ObstaclePenalty(d)
        for s in (1 - d, -(1 - d)):
            if not _seam_ok(log_p, s):
                failures.append(f"log seam delta={d:g}")
        for s in (1.0, -1.0, 1 + d, -1 - d):
            if not _seam_ok(obs_p, s):
                failures.append(f"obstacle seam delta={d:g}")
        for p in (log_p, obs_p):
            if np.abs(p.F(-r) - p.F(r)).max() > 1e-13 or np.abs(p.dF(-r) + p.dF(r)).max() > 1e-13:
                failures.append(f"{p.name} symmetry delta={d:g}")
        bd, b = beta_eval(obs_p, r)
        if np.abs(b - bd).max() > d / 2 + 1e-15 * np.abs(r).max() or not (0 <= obs_p.dbeta_delta(r)).all() \
                or obs_p.dbeta_delta(r).max() > 1 + 1e-12:
            failures.append(f"beta_delta bounds delta={d:g}")
    # the quartic with the constants as published
    rep = check_assumptions(SmoothPotential.quartic())
    failures += [f"quartic {name}" for name in rep.failures()]
    assert acceptance_report(10, "potential regularity suite", not failures,
                             "all checks pass" if not failures else "failed: " + ", ".join(failures))


def test_c11_hminus1_stability(sphere, forms, acceptance_report):
    rng = np.random.default_rng(11)
    f = forms(3)
    n = f.n
    u1 = _bumpy(sphere(3).reference_mesh.vertices)
    pert = rng.normal(size=n)
    pert -= mean_value(f, pert)
    pert *= 1e-3 / np.abs(pert).max()
    cfg = SchemeConfig(1e-2, 1.0)
    runs = [run_simulation(sphere(3), SmoothPotential.quartic(), cfg, u) for u in (u1, u1 + pert)]
    d0 = hminus1_distance(runs[0].states[0], runs[1].states[0], f) ** 2
    times = runs[0].column("t")
    ratio = np.array([hminus1_distance(a, b, f) ** 2 / d0 for a, b in zip(runs[0].states, runs[1].states)])
    window = times >= 0.1 - 1e-12
    logr = np.log(ratio[window])
    finite = bool(np.all(np.isfinite(logr)))
    inc = float(np.max(np.abs(np.diff(logr)))) if finite else float("inf")
    rate = float(np.max(logr / times[window]))
    ok = finite and inc < 50
    assert acceptance_report(11, "H^-1 stability", ok,
                             f"max per-step log increment {inc:.3g}, max log-ratio / t {rate:.3g}")
