"""Piecewise-linear surface finite elements on a :class:`~evosurf_ch.geometry.MovingMesh`.

Basis functions are nodal hat functions transported with the vertices, so
their material derivative vanishes.  The mesh velocity is the P1
interpolant of ``V`` at the vertices; with this choice
``d/dt M = G`` and ``d/dt A_S = B`` hold exactly for the discrete surface.

Matrix conventions: ``X[i, j] = form(chi_j, chi_i)`` (row = test function).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, eigsh

from .errors import GeometryError, MeanValueError

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass
class ElementGeometry:
    areas: np.ndarray        # (m,)
    normals: np.ndarray      # (m, 3)
    grads: np.ndarray        # (m, 3, 3): grads[e, k] = surface gradient of hat k


def element_geometry(vertices, triangles) -> ElementGeometry:
    x = vertices[triangles]                       # (m, 3 vertices, 3 coords)
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    twice = np.linalg.norm(n, axis=1)
    if np.any(twice <= 1e-300):
        raise GeometryError(f"degenerate element {int(np.argmin(twice))}")
    nhat = n / twice[:, None]
    # grad(lambda_k) = nhat x (opposite edge) / (2 |e|), edges taken cyclically
    opp = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.cross(nhat[:, None, :], opp) / twice[:, None, None]
    return ElementGeometry(0.5 * twice, nhat, grads)


def _scatter(triangles, local, n):
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def mass_local(areas):
    return areas[:, None, None] * _MASS_REF


def stiffness_local(geo: ElementGeometry, weight=None):
    loc = geo.areas[:, None, None] * np.einsum("eid,ejd->eij", geo.grads, geo.grads)
    if weight is not None:
        loc = loc * weight[:, None, None]
    return loc


def velocity_gradient(geo: ElementGeometry, vertex_velocity, triangles):
    """Per-element tangential gradient ``sum_k V_k (x) grad(lambda_k)`` of the P1 velocity."""
    vk = vertex_velocity[triangles]                # (m, 3 nodes, 3 comps)
    return np.einsum("eka,ekb->eab", vk, geo.grads)


@dataclass
class AssembledForms:
    """Sparse matrices of the bilinear forms on one mesh.

    ``M`` mass, ``G`` divergence-weighted mass, ``A_S`` stiffness, ``A_N``
    tangential advection, ``B`` deformation form, ``M_rho``/``A_S_rho``
    density-weighted mass and stiffness.  ``lumped`` and ``lumped_rho`` are
    the row sums of ``M`` and ``M_rho`` (vertex quadrature weights).
    """

    M: sp.csr_matrix
    G: sp.csr_matrix
    A_S: sp.csr_matrix
    A_N: sp.csr_matrix
    B: sp.csr_matrix
    M_rho: sp.csr_matrix
    A_S_rho: sp.csr_matrix
    lumped: np.ndarray
    lumped_rho: np.ndarray
    t: float
    area: float
    rho_element: np.ndarray
    divergence: np.ndarray       # per-element discrete tangential divergence of V
    mesh: Optional[object] = None

    @property
    def n(self):
        return self.M.shape[0]


def assemble_forms(mesh, velocity=None, t=None, rho_element=None) -> AssembledForms:
    """Assemble all forms on ``mesh`` at time ``t`` (defaults to ``mesh.t``).

    ``rho_element`` overrides the element density ``1/J``.
    """
    t = mesh.t if t is None else t
    n = mesh.n_vertices
    tri = mesh.triangles
    geo = element_geometry(mesh.vertices, tri)
    mloc = mass_local(geo.areas)
    kloc = stiffness_local(geo)
    M = _scatter(tri, mloc, n)
    A_S = _scatter(tri, kloc, n)
    rho_e = mesh.rho_element if rho_element is None else np.asarray(rho_element, dtype=float)
    M_rho = _scatter(tri, mloc * rho_e[:, None, None], n)
    A_S_rho = _scatter(tri, kloc * rho_e[:, None, None], n)

    zero = sp.csr_matrix((n, n))
    div = np.zeros(len(tri))
    G, B, A_N = zero, zero, zero
    if velocity is not None and velocity.kind != "stationary":
        vv = velocity(t, mesh.vertices)
        grad_v = velocity_gradient(geo, vv, tri)
        div = np.trace(grad_v, axis1=1, axis2=2)
        G = _scatter(tri, mloc * div[:, None, None], n)
        Bmat = div[:, None, None] * np.eye(3) - (grad_v + np.transpose(grad_v, (0, 2, 1)))
        bloc = geo.areas[:, None, None] * np.einsum("eid,edf,ejf->eij", geo.grads, Bmat, geo.grads)
        B = _scatter(tri, bloc, n)
        if velocity.advective is not None:
            cent = mesh.vertices[tri].mean(axis=1)
            v_c = vv[tri].mean(axis=1)
            va = np.asarray(velocity.advective(t, cent), dtype=float)
            w = v_c - va
            w = w - np.einsum("ed,ed->e", w, geo.normals)[:, None] * geo.normals
            # A_N[i, j] = int chi_j (w . grad chi_i) = |e|/3 * w . grad(lambda_i)
            row_term = geo.areas[:, None] / 3.0 * np.einsum("ed,eid->ei", w, geo.grads)
            aloc = np.repeat(row_term[:, :, None], 3, axis=2)
            A_N = _scatter(tri, aloc, n)
    lumped = np.asarray(M.sum(axis=1)).ravel()
    lumped_rho = np.asarray(M_rho.sum(axis=1)).ravel()
    return AssembledForms(M, G, A_S, A_N, B, M_rho, A_S_rho, lumped, lumped_rho, t,
                          float(geo.areas.sum()), rho_e, div, mesh)


def load_vector(mesh, target):
    """Load vector ``b_i = int f chi_i`` using the edge-midpoint rule (exact for quadratics).

    ``target`` is a callable ``f(points) -> values`` or an array of shape
    ``(n_triangles, 3)`` with values at the midpoints of edges (0,1), (1,2), (2,0).
    """
    tri = mesh.triangles
    x = mesh.vertices[tri]
    if callable(target):
        mids = np.stack([0.5 * (x[:, 0] + x[:, 1]), 0.5 * (x[:, 1] + x[:, 2]), 0.5 * (x[:, 2] + x[:, 0])], axis=1)
        fq = np.asarray(target(mids.reshape(-1, 3)), dtype=float).reshape(-1, 3)
    else:
        fq = np.asarray(target, dtype=float)
    w = mesh.current_areas[:, None] / 3.0
    # hat k equals 1/2 on the two edges touching node k
    node = 0.5 * np.stack([fq[:, 0] + fq[:, 2], fq[:, 0] + fq[:, 1], fq[:, 1] + fq[:, 2]], axis=1) * w
    b = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(b, tri[:, k], node[:, k])
    return b


def quadrature_l2_norm(mesh, target):
    """``||f||_{L^2}`` with the same edge-midpoint rule as :func:`load_vector`."""
    tri = mesh.triangles
    x = mesh.vertices[tri]
    if callable(target):
        mids = np.stack([0.5 * (x[:, 0] + x[:, 1]), 0.5 * (x[:, 1] + x[:, 2]), 0.5 * (x[:, 2] + x[:, 0])], axis=1)
        fq = np.asarray(target(mids.reshape(-1, 3)), dtype=float).reshape(-1, 3)
    else:
        fq = np.asarray(target, dtype=float)
    return float(np.sqrt(np.sum(mesh.current_areas[:, None] / 3.0 * fq**2)))


def l2_project(forms: AssembledForms, samples, mesh=None):
    """L2 projection onto the P1 space.

    ``samples`` of length ``n_vertices`` are read as a P1 function (the
    projection then returns them unchanged up to solver roundoff).  A
    callable or per-element edge-midpoint values need ``mesh`` and are
    projected with :func:`load_vector`.
    """
    if callable(samples) or np.ndim(samples) == 2:
        if mesh is None:
            raise ValueError("projecting a general target requires the mesh")
        rhs = load_vector(mesh, samples)
    else:
        samples = np.asarray(samples, dtype=float)
        if samples.shape != (forms.n,):
            raise ValueError(f"expected {forms.n} vertex samples, got shape {samples.shape}")
        rhs = forms.M @ samples
    c = splu(sp.csc_matrix(forms.M)).solve(rhs)
    if not np.all(np.isfinite(c)):
        raise np.linalg.LinAlgError("mass matrix solve failed")
    return c


def l2_norm(forms: AssembledForms, u, weighted=False):
    M = forms.M_rho if weighted else forms.M
    return float(np.sqrt(max(u @ (M @ u), 0.0)))


def mean_value(forms: AssembledForms, u):
    return float(forms.lumped @ u) / forms.area


def inverse_laplacian(forms: AssembledForms, z, tol=1e-8):
    """Solve ``A_S g = M z`` with ``1^T M g = 0``; return ``(g, ||z||_{-1})``.

    The mean-zero constraint enters through one Lagrange multiplier.  ``z``
    must satisfy ``|1^T M z| <= tol * sqrt(|Gamma|) * ||z||_{L2}``.
    """
    z = np.asarray(z, dtype=float)
    mz = forms.M @ z
    norm_z = l2_norm(forms, z)
    if abs(mz.sum()) > tol * np.sqrt(forms.area) * norm_z + 1e-300:
        raise MeanValueError(f"inverse Laplacian input has mean {mz.sum() / forms.area:.3e}; center it first")
    if norm_z == 0.0:
        return np.zeros_like(z), 0.0
    n = forms.n
    col = sp.csr_matrix(forms.lumped.reshape(-1, 1))
    K = sp.bmat([[forms.A_S, col], [col.T, None]], format="csc")
    sol = splu(K).solve(np.concatenate([mz, [0.0]]))
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("singular inverse Laplacian system")
    g = sol[:n]
    return g, float(np.sqrt(max(g @ mz, 0.0)))


def poincare_constant(forms: AssembledForms):
    """Discrete Poincare constant ``1/lambda_2`` of the pencil ``(A_S, M)``."""
    n = forms.n
    if n <= 200:
        from scipy.linalg import eigh
        lam = eigh(forms.A_S.toarray(), forms.M.toarray(), eigvals_only=True)
    else:
        lam = eigsh(forms.A_S.tocsc(), k=3, M=forms.M.tocsc(), sigma=-1e-3, which="LM",
                    return_eigenvectors=False)
    lam = np.sort(lam)
    return 1.0 / lam[1]
