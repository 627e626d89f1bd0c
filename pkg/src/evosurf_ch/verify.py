"""Self-check suite bundling the invariants of geometry, fem, potentials and diagnostics.

Every check is deterministic and runs on small meshes, so the whole suite
takes a few seconds.  :func:`run_checks` returns a list of
:class:`CheckResult`; :func:`format_table` renders the pass/fail table.
"""
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from . import diagnostics
from .fem import assemble_forms, inverse_laplacian, l2_norm
from .geometry import (MovingMesh, RadialScaling, Stationary, TangentialRotation, advect_mesh,
                       check_topology, icosphere, make_surface)
from .potentials import LogPotential, ObstaclePenalty, SmoothPotential, check_assumptions

# growth constants that the quartic actually satisfies (see README)
QUARTIC_VERIFIED_ALPHA = (1.0, 3.0, 4.0, 1.0)
QUARTIC_VERIFIED_BETA = (0.0, 1.0, 0.25, 0.0, 0.0)
QUARTIC_VERIFIED_Q = 4.0


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    detail: str


class _ShiftedSeamLog(LogPotential):
    """Log potential whose outer branch is offset: a deliberately broken seam for harness tests."""

    def flog(self, r):
        r = np.asarray(r, dtype=float)
        return super().flog(r) + np.where(np.abs(r) > 1.0 - self.delta, 1e-3, 0.0)


def _seam_jump(f, df, s, h=1e-9):
    """Value and slope jumps of ``f`` across ``s`` (one-sided samples at distance ``h``)."""
    lo, hi = np.array([s - h]), np.array([s + h])
    jump_f = abs(float(f(hi)[0] - f(lo)[0]))
    jump_df = abs(float(df(hi)[0] - df(lo)[0]))
    return jump_f, jump_df


def _c1_seams(f, df, d2f, seams, h=1e-9):
    worst = 0.0
    for s in seams:
        jf, jd = _seam_jump(f, df, s, h)
        curv = max(abs(float(d2f(np.array([s - h]))[0])), abs(float(d2f(np.array([s + h]))[0])), 1.0)
        slope = max(abs(float(df(np.array([s]))[0])), 1.0)
        worst = max(worst, jf / (10 * h * slope), jd / (10 * h * curv))
    return worst <= 1.0, f"max scaled seam jump {worst:.3g}"


def _checks(corrupt_seam=False) -> List[tuple]:
    log_cls = _ShiftedSeamLog if corrupt_seam else LogPotential
    log_p = log_cls(0.3, 1e-2)
    obs = ObstaclePenalty(1e-2)
    sphere3 = make_surface("unit-sphere", 3)
    sphere4 = make_surface("unit-sphere", 4)

    def icosphere_area():
        area = sphere4.reference_mesh.area
        rel = abs(area - 4 * np.pi) / (4 * np.pi)
        return rel <= 5e-3, f"level-4 area error {rel:.3e}"

    def icosphere_topology():
        rep = check_topology(*icosphere(3))
        return rep.closed_surface and rep.euler_characteristic == 2, f"chi = {rep.euler_characteristic}"

    def rotation_area():
        surf = make_surface("unit-sphere", 2, TangentialRotation(omega=1.0), t_final=np.pi)
        mesh = advect_mesh(surf, 0.0, np.pi, surf.reference_mesh)
        drift = abs(mesh.area - surf.reference_mesh.area) / surf.reference_mesh.area
        norms = np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1.0).max()
        return drift <= 1e-12 and norms <= 1e-10, f"area drift {drift:.2e}, radius drift {norms:.2e}"

    def radial_flow():
        surf = make_surface("unit-sphere", 2, RadialScaling.exponential(1.0), t_final=1.0)
        mesh = advect_mesh(surf, 0.0, 1.0, surf.reference_mesh)
        err = np.abs(mesh.vertices - np.exp(-1.0) * surf.reference_mesh.vertices).max()
        jerr = np.abs(mesh.jacobian - np.exp(-2.0)).max()
        return err <= 1e-8 and jerr <= 1e-8, f"position error {err:.2e}, jacobian error {jerr:.2e}"

    def density_scaling():
        ref = sphere3.reference_mesh
        mesh = ref.moved(0.5 * ref.vertices, 1.0)
        err = np.abs(mesh.rho - 4.0).max()
        return err <= 1e-12, f"max |rho - 4| = {err:.2e}"

    def mass_stiffness():
        f = assemble_forms(sphere3.reference_mesh)
        asym = abs(f.M - f.M.T).max()
        rows = np.abs(f.A_S @ np.ones(f.n)).max()
        scale = abs(f.A_S).max()
        ok = asym <= 1e-15 and rows <= 1e-12 * scale and f.G.nnz == 0 and f.B.nnz == 0
        return ok, f"M asymmetry {asym:.1e}, A_S row sums {rows:.1e}"

    def advection_kills_constants():
        vel = TangentialRotation(omega=1.0, advective=lambda t, x: np.zeros_like(x))
        f = assemble_forms(sphere3.reference_mesh, vel, 0.0)
        err = np.abs(f.A_N.T @ np.ones(f.n)).max()
        return err <= 1e-12, f"|A_N^T 1| = {err:.1e}"

    def inverse_laplacian_eigen():
        f = assemble_forms(sphere4.reference_mesh)
        x3 = sphere4.reference_mesh.vertices[:, 2]
        z = x3 - f.lumped @ x3 / f.area
        g, _ = inverse_laplacian(f, z)
        rel = l2_norm(f, g - z / 2) / l2_norm(f, z / 2)
        return rel <= 0.05, f"level-4 relative error {rel:.3e}"

    def log_seams():
        d = log_p.delta
        seams = (1.0 - d, -1.0 + d)
        ok1, det1 = _c1_seams(log_p.flog, log_p.phi, log_p.dphi, seams)
        ok2, det2 = _c1_seams(log_p.phi, log_p.dphi, lambda r: np.full_like(r, 1.0 / d**2), seams)
        return ok1 and ok2, f"{det1}; derivative: {det2}"

    def obstacle_seams():
        d = obs.delta
        seams = (1.0, 1.0 + d, -1.0, -1.0 - d)
        return _c1_seams(obs.fobs, obs.phi, obs.dphi, seams)

    def symmetry():
        r = np.linspace(-1.5, 1.5, 301)
        worst = 0.0
        for p in (log_p, obs, SmoothPotential.quartic()):
            worst = max(worst, np.abs(p.F(r) - p.F(-r)).max(), np.abs(p.dF(r) + p.dF(-r)).max())
        return worst <= 1e-12, f"max asymmetry {worst:.1e}"

    def beta_bounds():
        r = np.linspace(-3, 3, 6001)
        worst = 0.0
        ok = True
        for d in (1e-1, 1e-2, 1e-3):
            p = ObstaclePenalty(d)
            gap = np.abs(p.beta(r) - p.beta_delta(r)).max()
            db = p.dbeta_delta(r)
            ok &= gap <= d / 2 + 1e-15 * np.abs(r).max() and db.min() >= 0 and db.max() <= 1 + 1e-12
            worst = max(worst, gap / d)
        return bool(ok), f"max |beta - beta_delta| / delta = {worst:.3f}"

    def quartic_assumptions():
        p = SmoothPotential.quartic(QUARTIC_VERIFIED_ALPHA, QUARTIC_VERIFIED_BETA, QUARTIC_VERIFIED_Q)
        rep = check_assumptions(p)
        bad = ", ".join(rep.failures()) or "none"
        return rep.passed, f"failures: {bad}"

    def breakdown_example():
        surf = make_surface("unit-sphere", 2, RadialScaling.linear(1.0, 0.5, 1.0), t_final=1.0)
        rep = diagnostics.admissibility_profile(surf, np.full(surf.reference_mesh.n_vertices, 0.5), 11)
        ok = abs(rep.max_m - 2.0) <= 1e-6 and rep.verdict == diagnostics.BREAKDOWN
        return ok, rep.summary()

    def gronwall_condition():
        none = diagnostics.gronwall_bound(1.0, 1.0, 0.5, 1.0, 2, 1.0) is None
        classical = diagnostics.gronwall_bound(1.0, 1.0, 0.0, 1e-14, 2, 1.0)
        ok = none and abs(classical - np.e) <= 1e-10
        return ok, f"classical limit {classical:.12f}"

    return [
        ("geometry", "icosphere area", icosphere_area),
        ("geometry", "closed manifold", icosphere_topology),
        ("geometry", "rotation isometry", rotation_area),
        ("geometry", "radial flow map", radial_flow),
        ("geometry", "density scaling", density_scaling),
        ("fem", "mass/stiffness structure", mass_stiffness),
        ("fem", "advection annihilates constants", advection_kills_constants),
        ("fem", "inverse Laplacian eigenpair", inverse_laplacian_eigen),
        ("potentials", "log seam C1", log_seams),
        ("potentials", "obstacle seam C1", obstacle_seams),
        ("potentials", "symmetry", symmetry),
        ("potentials", "beta_delta bounds", beta_bounds),
        ("potentials", "quartic growth constants", quartic_assumptions),
        ("diagnostics", "breakdown admissibility", breakdown_example),
        ("diagnostics", "gronwall condition", gronwall_condition),
    ]


def run_checks(corrupt_seam=False) -> List[CheckResult]:
    out = []
    for module, name, fn in _checks(corrupt_seam):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(module, name, bool(ok), detail))
    return out


def format_table(results: List[CheckResult]) -> str:
    w_mod = max(len(r.module) for r in results)
    w_name = max(len(r.name) for r in results)
    lines = [f"{'module':{w_mod}s}  {'invariant':{w_name}s}  status  detail"]
    for r in results:
        lines.append(f"{r.module:{w_mod}s}  {r.name:{w_name}s}  {'PASS' if r.passed else 'FAIL':6s}  {r.detail}")
    failed = [r for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
    for r in failed:
        lines.append(f"FAILED: {r.module}: {r.name}")
    return "\n".join(lines)
