"""Observables, admissibility analysis, H^-1 distances and the generalised Gronwall bound."""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError, MeanValueError
from .fem import AssembledForms, inverse_laplacian
from .geometry import EvolvingSurface, advect_mesh
from .potentials import Potential

ROW_COLUMNS = ("t", "mass", "weighted_mass", "area", "energy", "energy_reg", "min_u", "max_u",
               "phase_excess", "newton_iters", "m_eta")

ADMISSIBLE, BREAKDOWN, MARGINAL = "Admissible", "Breakdown", "Marginal"
MARGINAL_BAND = 1e-9


def phase_excess(forms: AssembledForms, u):
    """``int [|u| - 1]_+`` with vertex (lumped) quadrature."""
    return float(forms.lumped @ np.maximum(np.abs(u) - 1.0, 0.0))


def energy(forms: AssembledForms, u, p: Potential, weighted=False, exact=False):
    """Discrete Cahn-Hilliard energy ``1/2 u^T A_S u + sum_i m_i F(u_i)``.

    ``weighted`` uses the density weights ``rho`` in the potential term;
    ``exact`` evaluates the limiting potential (may be ``inf`` for the obstacle,
    raises :class:`DomainError` for the logarithmic one outside ``[-1, 1]``).
    """
    w = forms.lumped_rho if weighted else forms.lumped
    dens = p.F_exact(u) if exact else p.F(u)
    return float(0.5 * u @ (forms.A_S @ u) + w @ dens)


def observables(state, forms: AssembledForms, p: Potential, weighted=False, strict=True):
    """One diagnostics row (without ``newton_iters``/``m_eta``, added by the driver).

    ``energy`` uses the limiting potential and ``energy_reg`` the regularised
    one actually time-stepped.  With ``strict=False`` a domain violation of the
    exact energy is reported as ``nan`` instead of raising.
    """
    u = np.asarray(state.u)
    try:
        e_exact = energy(forms, u, p, weighted, exact=True)
    except DomainError:
        if strict:
            raise
        e_exact = float("nan")
    return {
        "t": float(state.t),
        "mass": float(forms.lumped @ u),
        "weighted_mass": float(forms.lumped_rho @ u),
        "area": forms.area,
        "energy": e_exact,
        "energy_reg": energy(forms, u, p, weighted),
        "min_u": float(u.min()),
        "max_u": float(u.max()),
        "phase_excess": phase_excess(forms, u),
    }


@dataclass
class AdmissibilityReport:
    times: np.ndarray
    m: np.ndarray
    max_m: float
    verdict: str
    predicted_breakdown_time: Optional[float] = None

    @property
    def samples(self) -> List[Tuple[float, float]]:
        return list(zip(self.times.tolist(), self.m.tolist()))

    def summary(self):
        s = f"verdict: {self.verdict}, m_max = {_short(self.max_m)}"
        if self.predicted_breakdown_time is not None:
            s += f", predicted breakdown at t = {self.predicted_breakdown_time:.6g}"
        return s


def _short(x):
    s = f"{x:.6g}"
    return s if any(c in s for c in ".einf") else s + ".0"


def admissibility_from_areas(initial_integral, times, areas, band=MARGINAL_BAND):
    """Build the report from ``|int_{Gamma_0} u_0|`` and sampled areas ``|Gamma(t)|``."""
    times = np.asarray(times, dtype=float)
    m = abs(initial_integral) / np.asarray(areas, dtype=float)
    max_m = float(m.max())
    if max_m > 1.0 + band:
        verdict = BREAKDOWN
    elif max_m >= 1.0 - band:
        verdict = MARGINAL
    else:
        verdict = ADMISSIBLE
    t_break = None
    if verdict == BREAKDOWN:
        k = int(np.argmax(m > 1.0 + band))
        if k == 0:
            t_break = float(times[0])
        else:
            t0, t1, m0, m1 = times[k - 1], times[k], m[k - 1], m[k]
            t_break = float(t0 + (1.0 - m0) / (m1 - m0) * (t1 - t0)) if m1 != m0 else float(t1)
    return AdmissibilityReport(times, m, max_m, verdict, t_break)


def admissibility_profile(surface: EvolvingSurface, u0, sample_count=101, max_step=1e-3):
    """Sample ``m_{u0}(t) = |int_{Gamma_0} u0| / |Gamma(t)|`` on ``[0, t_final]``.

    ``u0`` holds vertex values on the reference mesh; the integral uses the
    mass matrix (exact for the P1 interpolant).
    """
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    mesh = surface.reference_mesh
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim == 0:
        u0 = np.full(mesh.n_vertices, float(u0))
    integral = _p1_integral(mesh, u0)
    times = np.linspace(0.0, surface.t_final, sample_count)
    areas = np.empty(sample_count)
    for k, t in enumerate(times):
        if k:
            mesh = advect_mesh(surface, times[k - 1], t, mesh, max_step)
        areas[k] = mesh.area
    return admissibility_from_areas(integral, times, areas)


def _p1_integral(mesh, u):
    return float(np.sum(mesh.current_areas / 3.0 * u[mesh.triangles].sum(axis=1)))


def hminus1_distance(u_a, u_b, forms: AssembledForms, tol=1e-8):
    """``||u_a - u_b||_{-1}`` on the mesh of ``forms``; the masses must agree."""
    u_a = getattr(u_a, "u", u_a)
    u_b = getattr(u_b, "u", u_b)
    z = np.asarray(u_a, dtype=float) - np.asarray(u_b, dtype=float)
    try:
        _, norm = inverse_laplacian(forms, z, tol)
    except MeanValueError as exc:
        raise MeanValueError(f"states have different masses: {exc}") from exc
    return norm


def l2_distance(u_a, u_b, forms: AssembledForms):
    z = np.asarray(u_a) - np.asarray(u_b)
    return float(np.sqrt(max(z @ (forms.M @ z), 0.0)))


def gronwall_bound(alpha0, C, C0, eps, q, T):
    """Closed-form bound for ``a' <= C (C0 + a + eps a^(q+1))``, ``a(0) = alpha0``.

    Returns ``(alpha0 + C0) e^(TC) / (1 - eps e^(TCq) (alpha0 + C0)^q)^(1/q) - C0``
    or ``None`` when the smallness condition ``eps e^(TCq) (alpha0 + C0)^q < 1``
    fails.
    """
    s = alpha0 + C0
    cond = eps * np.exp(T * C * q) * s**q
    if not cond < 1.0:
        return None
    return float(s * np.exp(T * C) / (1.0 - cond) ** (1.0 / q) - C0)


def fit_excess_decay(deltas, excess):
    """Least-squares fit ``excess ~ c1/|log delta| + c2 delta``.

    Returns ``(c1, c2, relative_residual)`` with the residual measured as
    ``||fit - data|| / ||data||``.
    """
    d = np.asarray(deltas, dtype=float)
    y = np.asarray(excess, dtype=float)
    A = np.column_stack([1.0 / np.abs(np.log(d)), d])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = np.linalg.norm(A @ coef - y) / np.linalg.norm(y)
    return float(coef[0]), float(coef[1]), float(resid)

