"""Fully discrete Cahn-Hilliard time stepping on a moving mesh.

Implicit Euler with transported basis functions: testing the first equation
with ``chi_i`` turns ``m_*(d_t u, .) + g(u, .)`` into the difference of
mass-matrix products, so one step reads (``k = dt``)::

    M^{n+1} u^{n+1} - M^n u^n + k (A_N^{n+1} u^{n+1} + A_S^{n+1} w^{n+1}) = 0
    M^{n+1} w^{n+1} - A_S^{n+1} u^{n+1} - L^{n+1} [F1'(u^{n+1}) + F2'(u^n)] = 0

``L`` is the lumped mass (vertex quadrature of the nonlinear term).  The
weighted model replaces the mass and the mobility stiffness by their
``rho``-weighted versions.  The coupled system is solved by damped Newton.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import diagnostics
from .errors import DomainError, NewtonError, SimulationError
from .fem import AssembledForms, assemble_forms, l2_project
from .geometry import EvolvingSurface, MovingMesh, advect_mesh
from .potentials import LogPotential, ObstaclePenalty, Potential

MODELS = ("CH1", "CH1_obstacle", "CHrho")
SPLITTINGS = ("convex-concave", "fully-implicit")
LOG_SAFEGUARD = 1e-12
FRACTION_TO_BOUNDARY = 0.9


@dataclass
class SchemeConfig:
    dt: float
    t_end: float
    model: str = "CH1"
    splitting: str = "convex-concave"
    newton_tol: float = 1e-12
    newton_max: int = 50
    flow_step: float = 1e-3
    output_every: int = 1

    def __post_init__(self):
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        if not self.newton_tol > 0 or self.newton_max < 1:
            raise ValueError("Newton tolerance and iteration cap must be positive")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.splitting not in SPLITTINGS:
            raise ValueError(f"unknown splitting {self.splitting!r}; expected one of {SPLITTINGS}")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")

    @property
    def n_steps(self):
        n = int(round(self.t_end / self.dt))
        return max(n, 1)


@dataclass
class SimState:
    t: float
    u: np.ndarray
    w: np.ndarray
    mesh: MovingMesh
    newton_iters: int = 0
    residuals: List[float] = field(default_factory=list)
    excess: Optional[float] = None

    def __post_init__(self):
        if len(self.u) != self.mesh.n_vertices or len(self.w) != self.mesh.n_vertices:
            raise ValueError("u and w need one value per mesh vertex")


def _operators(forms_now, forms_next, weighted):
    if weighted:
        return (forms_now.M_rho, forms_next.M_rho, None, forms_next.A_S_rho,
                forms_next.M_rho, forms_next.lumped_rho)
    A_N = forms_next.A_N if forms_next.A_N.nnz else None
    return forms_now.M, forms_next.M, A_N, forms_next.A_S, forms_next.M, forms_next.lumped


def _fraction_to_boundary(u, du, eps=LOG_SAFEGUARD):
    """Largest step in (0, 1] keeping ``|u + a du| <= 1 - eps``, times 0.9 if below 1."""
    lim = 1.0 - eps
    amax = 1.0
    pos, neg = du > 0, du < 0
    if np.any(pos):
        amax = min(amax, float(np.min((lim - u[pos]) / du[pos])))
    if np.any(neg):
        amax = min(amax, float(np.min((-lim - u[neg]) / du[neg])))
    return 1.0 if amax >= 1.0 else FRACTION_TO_BOUNDARY * max(amax, 0.0)


def initial_chemical_potential(forms: AssembledForms, u, p: Potential, weighted=False):
    """``w`` with ``M w = A_S u + L F'(u)`` (weighted mass for the weighted model)."""
    Mw = forms.M_rho if weighted else forms.M
    L = forms.lumped_rho if weighted else forms.lumped
    rhs = forms.A_S @ u + L * p.dF(u)
    return splu(sp.csc_matrix(Mw)).solve(rhs)


def _newton(state, forms_now, forms_next, p, cfg, weighted):
    """Damped Newton on the coupled system.

    The first equation is linear, so an iterate that satisfies it keeps doing
    so along any Newton direction.  Starting from such an iterate
    (``u = M1^-1 M0 u_n``, ``w`` constant) the step minimises the merit
    ``k/2 w^T A_mob w + 1/2 u^T A_S u + sum_i L_i (F1(u_i) + F2'(u_n,i) u_i)``
    over that affine set; it is convex under convex-concave splitting, so
    Armijo backtracking on it converges globally.  With an advective form or
    an infeasible start the line search falls back to halving on the residual.
    """
    dt = cfg.dt
    M_now, M_next, A_N, A_mob, Mw, L = _operators(forms_now, forms_next, weighted)
    A = forms_next.A_S
    u_n = np.asarray(state.u, dtype=float)
    if cfg.splitting == "convex-concave":
        F_imp, f_imp, df_imp = p.F1, p.dF1, p.d2F1
        f_exp = p.dF2(u_n)
    else:
        F_imp, f_imp, df_imp = p.F, p.dF, p.d2F
        f_exp = np.zeros_like(u_n)
    K11 = M_next + dt * A_N if A_N is not None else M_next
    K12 = dt * A_mob
    rhs1 = M_now @ u_n
    exact_log = isinstance(p, LogPotential) and p.delta == 0.0

    def residual(u, w):
        r1 = K11 @ u + K12 @ w - rhs1
        r2 = Mw @ w - A @ u - L * (f_imp(u) + f_exp)
        return np.concatenate([r1, r2])

    def merit(u, w):
        return 0.5 * dt * w @ (A_mob @ w) + 0.5 * u @ (A @ u) + L @ (F_imp(u) + f_exp * u)

    n = len(u_n)
    w = np.asarray(state.w, dtype=float).copy()
    scale = float(L.max()) * max(1.0, np.abs(u_n).max(), np.abs(w).max())
    use_merit = A_N is None
    if use_merit:
        u = u_n.copy() if M_now is M_next else splu(sp.csc_matrix(M_next)).solve(rhs1)
        if exact_log and np.abs(u).max() >= 1.0 - LOG_SAFEGUARD:
            use_merit = False
            u = u_n.copy()
        else:
            w = np.full(n, float(L @ w) / float(L.sum()))
    else:
        u = u_n.copy()
    res = residual(u, w)
    rnorm = np.abs(res).max()
    energy = merit(u, w) if use_merit else None
    history = [rnorm / scale]
    for it in range(1, cfg.newton_max + 1):
        if history[-1] <= cfg.newton_tol:
            return u, w, it - 1, history
        J = sp.bmat([[K11, K12], [-(A + sp.diags(L * df_imp(u))), Mw]], format="csc")
        step = splu(J).solve(-res)
        if not np.all(np.isfinite(step)):
            raise NewtonError(f"singular Newton system at iteration {it}", history)
        du, dw = step[:n], step[n:]
        alpha = _fraction_to_boundary(u, du) if exact_log else 1.0
        slope = None
        if use_merit:
            slope = dt * dw @ (A_mob @ w) + du @ (A @ u) + du @ (L * (f_imp(u) + f_exp))
            if not slope < 0:
                slope = None
        accepted = False
        for _ in range(40):
            u_try, w_try = u + alpha * du, w + alpha * dw
            try:
                res_try = residual(u_try, w_try)
                r_try = np.abs(res_try).max()
                e_try = merit(u_try, w_try) if slope is not None else None
            except DomainError:
                r_try, e_try = np.inf, np.inf
            if slope is not None:
                ok = e_try <= energy + 1e-4 * alpha * slope or r_try <= 0.5 * rnorm
            else:
                ok = r_try <= rnorm
            if ok and np.isfinite(r_try):
                accepted = True
                break
            if alpha < 1e-10:
                break
            alpha *= 0.5
        if not accepted:
            if not np.isfinite(r_try):
                raise NewtonError(f"Newton iterate left the potential's domain at iteration {it}", history)
            # no admissible decrease: accept the tiny step and let the iteration cap decide
        u, w, res, rnorm = u_try, w_try, res_try, r_try
        if use_merit:
            energy = merit(u, w)
        history.append(rnorm / scale)
    if history[-1] <= cfg.newton_tol:
        return u, w, cfg.newton_max, history
    raise NewtonError(
        f"Newton did not converge in {cfg.newton_max} iterations (scaled residual {history[-1]:.3e})", history)


def _advance(state, forms_now, forms_next, p, cfg, weighted):
    u, w, iters, history = _newton(state, forms_now, forms_next, p, cfg, weighted)
    if isinstance(p, LogPotential) and np.abs(u).max() >= 1.0:
        raise DomainError(
            f"order parameter left (-1, 1) (max |u| = {np.abs(u).max():.6g}); "
            "reduce dt or increase log_delta")
    mesh = forms_next.mesh if forms_next.mesh is not None else state.mesh
    return SimState(state.t + cfg.dt, u, w, mesh, iters, history)


def step_ch1(state, forms_next, forms_now, p: Potential, cfg: SchemeConfig) -> SimState:
    """One step of the conserving model with a smooth or logarithmic potential."""
    return _advance(state, forms_now, forms_next, p, cfg, weighted=False)


def step_ch1_obstacle(state, forms_next, forms_now, p: ObstaclePenalty, cfg: SchemeConfig) -> SimState:
    """One step of the penalised double obstacle model; records ``int [|u| - 1]_+``."""
    if not isinstance(p, ObstaclePenalty):
        raise TypeError("step_ch1_obstacle needs an ObstaclePenalty potential")
    new = _advance(state, forms_now, forms_next, p, cfg, weighted=False)
    new.excess = diagnostics.phase_excess(forms_next, new.u)
    return new


def step_ch_rho(state, forms_next, forms_now, p: Potential, cfg: SchemeConfig) -> SimState:
    """One step of the density-weighted model (conserves ``int rho c``)."""
    return _advance(state, forms_now, forms_next, p, cfg, weighted=True)


STEPPERS = {"CH1": step_ch1, "CH1_obstacle": step_ch1_obstacle, "CHrho": step_ch_rho}


def forms_at(mesh, surface, t):
    return assemble_forms(mesh, surface.velocity, t)


@dataclass
class SimulationResult:
    states: List[SimState]
    rows: List[dict]
    admissibility: Optional[diagnostics.AdmissibilityReport] = None
    breakdown_time: Optional[float] = None
    completed: bool = False

    def column(self, name):
        return np.array([row[name] for row in self.rows])


def run_simulation(surface: EvolvingSurface, potential: Potential, cfg: SchemeConfig, u0,
                   callbacks: Sequence[Callable] = (), keep_states=True, admissibility_samples=101,
                   on_admissibility: Optional[Callable] = None):
    """Advance mesh and phase field together from ``t = 0`` to ``cfg.t_end``.

    ``u0`` is a scalar, vertex samples or a callable of the vertex positions;
    it is L2-projected on the initial mesh.  Rows are emitted at ``t = 0`` and
    every ``cfg.output_every`` steps; each callback receives ``(state, row)``.
    For singular potentials the admissibility profile is computed first and a
    predicted breakdown time is recorded without stopping the run;
    ``on_admissibility`` receives that report before the first step.  A failing
    step raises :class:`SimulationError` carrying the partial result.
    """
    if cfg.model == "CH1_obstacle" and not isinstance(potential, ObstaclePenalty):
        raise ValueError("model CH1_obstacle needs an ObstaclePenalty potential")
    surface = replace(surface, t_final=max(surface.t_final, cfg.n_steps * cfg.dt))
    weighted = cfg.model == "CHrho"
    step = STEPPERS[cfg.model]
    mesh = surface.reference_mesh
    forms = forms_at(mesh, surface, 0.0)
    if callable(u0):
        samples = np.asarray(u0(mesh.vertices), dtype=float)
    else:
        samples = np.broadcast_to(np.asarray(u0, dtype=float), (mesh.n_vertices,)).copy()
    u = l2_project(forms, samples)
    w = initial_chemical_potential(forms, u, potential, weighted)
    state = SimState(0.0, u, w, mesh)
    initial_integral = float(forms.lumped @ u)

    result = SimulationResult([], [])
    if isinstance(potential, (LogPotential, ObstaclePenalty)):
        report = diagnostics.admissibility_profile(surface, u, admissibility_samples, cfg.flow_step)
        result.admissibility = report
        result.breakdown_time = report.predicted_breakdown_time
        if on_admissibility is not None:
            on_admissibility(report)

    def emit(state, forms):
        row = diagnostics.observables(state, forms, potential, weighted, strict=False)
        row["newton_iters"] = state.newton_iters
        row["m_eta"] = abs(initial_integral) / forms.area
        result.rows.append(row)
        if keep_states:
            result.states.append(state)
        for cb in callbacks:
            cb(state, row)

    emit(state, forms)
    for n in range(1, cfg.n_steps + 1):
        t_next = n * cfg.dt
        try:
            mesh_next = advect_mesh(surface, state.t, t_next, state.mesh, cfg.flow_step)
            forms_next = forms_at(mesh_next, surface, t_next)
            state = step(state, forms_next, forms, potential, cfg)
        except (NewtonError, DomainError, np.linalg.LinAlgError, ArithmeticError) as exc:
            raise SimulationError(str(exc), n, t_next, exc, result) from exc
        state.t = t_next
        forms = forms_next
        if n % cfg.output_every == 0:
            emit(state, forms)
    result.completed = True
    return result
