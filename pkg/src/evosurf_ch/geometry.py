"""Evolving surfaces: reference meshes, velocity fields and flow-map advection.

A :class:`MovingMesh` is the triangulated surface at one instant.  Vertices
are advected by integrating ``dx/dt = V(t, x)`` with the classical RK4
method, so the element area ratio ``J = |e(t)| / |e(0)|`` is the discrete
flow-map Jacobian and ``rho = 1/J`` the density of the weighted model.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GeometryError

_DEGENERATE_AREA = 1e-300


# ---------------------------------------------------------------- meshes

def triangle_areas(vertices, triangles):
    x0, x1, x2 = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(x1 - x0, x2 - x0), axis=1)


def triangle_normals(vertices, triangles):
    """Unit normals following the triangle orientation."""
    x0, x1, x2 = (vertices[triangles[:, k]] for k in range(3))
    n = np.cross(x1 - x0, x2 - x0)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MovingMesh:
    """Triangulated surface at time ``t``.

    ``reference_areas`` are the element areas on the initial surface; all
    derived quantities (current areas, Jacobian, density) are computed on
    first access and cached.  Instances are immutable.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    reference_areas: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(self.vertices, float))
        object.__setattr__(self, "triangles", _readonly(self.triangles, np.int64))
        object.__setattr__(self, "reference_areas", _readonly(self.reference_areas, float))
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise GeometryError("vertices must have shape (n, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise GeometryError("triangles must have shape (m, 3)")
        if self.reference_areas.shape != (len(self.triangles),):
            raise GeometryError("one reference area per triangle required")

    @classmethod
    def from_arrays(cls, vertices, triangles, t=0.0):
        """Mesh whose reference configuration is the given one."""
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        return cls(vertices, triangles, triangle_areas(vertices, triangles), t)

    def moved(self, vertices, t):
        return MovingMesh(vertices, self.triangles, self.reference_areas, t)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def current_areas(self):
        return _readonly(triangle_areas(self.vertices, self.triangles), float)

    @cached_property
    def normals(self):
        return _readonly(triangle_normals(self.vertices, self.triangles), float)

    @property
    def area(self):
        return float(self.current_areas.sum())

    @property
    def reference_area(self):
        return float(self.reference_areas.sum())

    @cached_property
    def jacobian(self):
        return element_jacobian(self)

    @cached_property
    def rho_element(self):
        return _readonly(1.0 / self.jacobian, float)

    @cached_property
    def rho(self):
        return density_rho(self)

    def vertex_normals(self):
        """Area-weighted average of incident element normals."""
        n = np.zeros_like(self.vertices)
        weighted = self.normals * self.current_areas[:, None]
        for k in range(3):
            np.add.at(n, self.triangles[:, k], weighted)
        return n / np.linalg.norm(n, axis=1, keepdims=True)


def element_jacobian(mesh: MovingMesh):
    """Per-element area ratio ``J_e = |e(t)| / |e(0)|``."""
    cur = mesh.current_areas
    bad = np.flatnonzero((cur <= _DEGENERATE_AREA) | (mesh.reference_areas <= _DEGENERATE_AREA))
    if bad.size:
        raise GeometryError(f"degenerate element {int(bad[0])} at t = {mesh.t:.6g}")
    return _readonly(cur / mesh.reference_areas, float)


def density_rho(mesh: MovingMesh):
    """Per-vertex density: current-area weighted mean of ``1/J_e`` over the star.

    Equals (reference star area) / (current star area).
    """
    ref = np.zeros(mesh.n_vertices)
    cur = np.zeros(mesh.n_vertices)
    element_jacobian(mesh)
    for k in range(3):
        np.add.at(ref, mesh.triangles[:, k], mesh.reference_areas)
        np.add.at(cur, mesh.triangles[:, k], mesh.current_areas)
    return _readonly(ref / cur, float)


@dataclass
class TopologyReport:
    n_vertices: int
    n_edges: int
    n_faces: int
    euler_characteristic: int
    manifold: bool
    oriented: bool
    connected: bool

    @property
    def closed_surface(self):
        return self.manifold and self.oriented and self.connected and self.euler_characteristic % 2 == 0

    @property
    def genus(self):
        return (2 - self.euler_characteristic) // 2


def check_topology(vertices, triangles) -> TopologyReport:
    """Edge-manifold, orientation, connectivity checks and Euler characteristic."""
    triangles = np.asarray(triangles, dtype=np.int64)
    nv = len(vertices)
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    edges, counts = np.unique(undirected, axis=0, return_counts=True)
    manifold = bool(np.all(counts == 2))
    # consistently oriented iff each directed edge occurs exactly once
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    oriented = manifold and bool(np.all(dcounts == 1))
    adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(nv, nv))
    ncomp, _ = connected_components(adj, directed=False)
    used = np.unique(triangles)
    connected = ncomp - (nv - len(used)) == 1
    chi = nv - len(edges) + len(triangles)
    return TopologyReport(nv, len(edges), len(triangles), int(chi), manifold, oriented, connected)


def icosphere(level=0, radius=1.0):
    """Subdivided icosahedron with vertices projected to the sphere.

    Returns ``(vertices, triangles)`` with outward orientation; level ``k``
    has ``10 * 4**k + 2`` vertices.
    """
    if level < 0:
        raise ValueError("subdivision level must be >= 0")
    g = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
        [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
        [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(level):
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = len(f)
        a, b, c = (inv[k * m:(k + 1) * m] + len(v) for k in range(3))
        v = np.vstack([v, mid])
        f = np.concatenate([
            np.stack([f[:, 0], a, c], axis=1),
            np.stack([f[:, 1], b, a], axis=1),
            np.stack([f[:, 2], c, b], axis=1),
            np.stack([a, b, c], axis=1),
        ])
    return radius * v, f


def read_off(path):
    """Read an ASCII OFF triangle mesh; returns ``(vertices, triangles)``."""
    with open(path) as fh:
        tokens_by_line = []
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                tokens_by_line.append((lineno, line.split()))
    if not tokens_by_line or tokens_by_line[0][1][0] != "OFF":
        raise GeometryError(f"{path}: missing OFF header")
    head = tokens_by_line[0][1][1:]
    rest = tokens_by_line[1:]
    if not head:
        head, rest = rest[0][1], rest[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
        verts = np.array([[float(x) for x in tok[:3]] for _, tok in rest[:nv]])
        faces = []
        for lineno, tok in rest[nv:nv + nf]:
            if int(tok[0]) != 3:
                raise GeometryError(f"{path}:{lineno}: only triangular faces are supported")
            faces.append([int(x) for x in tok[1:4]])
    except (ValueError, IndexError) as exc:
        raise GeometryError(f"{path}: malformed OFF file ({exc})") from exc
    if len(verts) != nv or len(faces) != nf:
        raise GeometryError(f"{path}: expected {nv} vertices and {nf} faces")
    return verts, np.array(faces, dtype=np.int64)


def write_off(path, vertices, triangles):
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(vertices)} {len(triangles)} 0\n")
        for x in vertices:
            fh.write(f"{x[0]:.17g} {x[1]:.17g} {x[2]:.17g}\n")
        for t in triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


# ---------------------------------------------------------- velocity fields

class VelocityField:
    """Ambient velocity ``V(t, x)`` driving the surface.

    ``advective`` is the tangential advection velocity ``V_a``; ``None`` means
    ``V_a`` equals the tangential part of ``V`` so the advective form vanishes.
    """

    kind = "custom"
    advective: Optional[Callable] = None
    breakpoints: Tuple[float, ...] = ()     # times where V may jump (e.g. end of a ramp)

    def __call__(self, t, x):
        raise NotImplementedError

    def div_gamma(self, t, x, normal):
        """Tangential divergence ``tr((I - n n^T) DV)`` at points ``x``."""
        raise NotImplementedError

    def flow(self, t, x0):
        """Closed-form flow map from time 0, or ``None`` if unavailable."""
        return None


class Stationary(VelocityField):
    kind = "stationary"

    def __call__(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def div_gamma(self, t, x, normal):
        return np.zeros(len(x))

    def flow(self, t, x0):
        return np.array(x0, dtype=float)


class RadialScaling(VelocityField):
    """``V = R'(t)/R(t) x``: a sphere of radius ``R(0)`` stays a sphere of radius ``R(t)``."""

    kind = "radial"

    def __init__(self, radius, dradius, advective=None):
        self.radius = radius
        self.dradius = dradius
        self.advective = advective

    @classmethod
    def linear(cls, r0, r1, t1):
        """Radius linear from ``r0`` at t=0 to ``r1`` at ``t1``, constant afterwards."""
        slope = (r1 - r0) / t1
        field = cls(lambda t: r0 + slope * min(max(t, 0.0), t1),
                    lambda t: slope if 0.0 <= t < t1 else 0.0)
        field.breakpoints = (float(t1),)
        return field

    @classmethod
    def exponential(cls, rate, r0=1.0):
        """``R(t) = r0 exp(-rate t)``."""
        return cls(lambda t: r0 * np.exp(-rate * t), lambda t: -rate * r0 * np.exp(-rate * t))

    def rate(self, t):
        return self.dradius(t) / self.radius(t)

    def __call__(self, t, x):
        return self.rate(t) * np.asarray(x, dtype=float)

    def div_gamma(self, t, x, normal):
        return np.full(len(x), 2.0 * self.rate(t))

    def flow(self, t, x0):
        return self.radius(t) / self.radius(0.0) * np.asarray(x0, dtype=float)


class AnisotropicScaling(VelocityField):
    """``V_i = a_i'(t)/a_i(t) x_i`` for axis scales ``a(t) = (a, b, c)``."""

    kind = "anisotropic"

    def __init__(self, scales, dscales, advective=None):
        self.scales = scales
        self.dscales = dscales
        self.advective = advective

    @classmethod
    def linear(cls, end_scales, t1):
        end = np.asarray(end_scales, dtype=float)
        slope = (end - 1.0) / t1
        field = cls(lambda t: 1.0 + slope * min(max(t, 0.0), t1),
                    lambda t: slope if 0.0 <= t < t1 else np.zeros(3))
        field.breakpoints = (float(t1),)
        return field

    def rates(self, t):
        return np.asarray(self.dscales(t), dtype=float) / np.asarray(self.scales(t), dtype=float)

    def __call__(self, t, x):
        return np.asarray(x, dtype=float) * self.rates(t)

    def div_gamma(self, t, x, normal):
        lam = self.rates(t)
        return lam.sum() - np.einsum("ij,j,ij->i", normal, lam, normal)

    def flow(self, t, x0):
        s = np.asarray(self.scales(t), dtype=float) / np.asarray(self.scales(0.0), dtype=float)
        return np.asarray(x0, dtype=float) * s


class TangentialRotation(VelocityField):
    """Rigid rotation ``V = omega * axis x x`` (tangential on spheres about the origin)."""

    kind = "rotation"

    def __init__(self, axis=(0.0, 0.0, 1.0), omega=1.0, advective=None):
        axis = np.asarray(axis, dtype=float)
        self.axis = axis / np.linalg.norm(axis)
        self.omega = float(omega)
        self.advective = advective

    def __call__(self, t, x):
        return self.omega * np.cross(self.axis, np.asarray(x, dtype=float))

    def div_gamma(self, t, x, normal):
        # the rotation gradient is skew, so every tangential trace vanishes
        return np.zeros(len(x))

    def flow(self, t, x0):
        k = self.axis
        th = self.omega * t
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        R = np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * (K @ K)
        return np.asarray(x0, dtype=float) @ R.T


class CustomVelocity(VelocityField):
    """User velocity ``V(t, x)`` with optional tangential divergence ``div(t, x, normal)``."""

    kind = "custom"

    def __init__(self, V, div=None, advective=None):
        self._V = V
        self._div = div
        self.advective = advective

    def __call__(self, t, x):
        return np.asarray(self._V(t, np.asarray(x, dtype=float)), dtype=float)

    def div_gamma(self, t, x, normal):
        if self._div is not None:
            return np.asarray(self._div(t, x, normal), dtype=float)
        # central differences of the ambient Jacobian, projected on the tangent plane
        h = 1e-6
        x = np.asarray(x, dtype=float)
        jac = np.empty((len(x), 3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            jac[:, :, j] = (self(t, x + e) - self(t, x - e)) / (2 * h)
        return np.trace(jac, axis1=1, axis2=2) - np.einsum("ni,nij,nj->n", normal, jac, normal)


# --------------------------------------------------------------- surfaces

@dataclass
class EvolvingSurface:
    reference_mesh: MovingMesh
    velocity: VelocityField = field(default_factory=Stationary)
    t_final: float = 1.0


SURFACE_KINDS = ("unit-sphere", "sphere", "off")


def make_surface(kind="unit-sphere", level=3, velocity=None, t_final=1.0, radius=1.0,
                 mesh_path=None) -> EvolvingSurface:
    """Build a catalog surface.

    ``kind`` is ``"unit-sphere"``, ``"sphere"`` (radius ``radius``) or
    ``"off"`` (external mesh at ``mesh_path``).  The mesh must be a closed,
    oriented, connected manifold.
    """
    if kind == "unit-sphere":
        v, f = icosphere(level, 1.0)
    elif kind == "sphere":
        v, f = icosphere(level, radius)
    elif kind == "off":
        if mesh_path is None:
            raise GeometryError("surface kind 'off' needs mesh_path")
        v, f = read_off(mesh_path)
    else:
        raise GeometryError(f"unknown surface kind {kind!r}; expected one of {SURFACE_KINDS}")
    topo = check_topology(v, f)
    if not topo.closed_surface:
        raise GeometryError(f"mesh is not a closed oriented connected manifold: {topo}")
    mesh = MovingMesh.from_arrays(v, f, 0.0)
    element_jacobian(mesh)
    return EvolvingSurface(mesh, velocity if velocity is not None else Stationary(), t_final)


def advect_mesh(surface: EvolvingSurface, t0, t1, mesh: MovingMesh, max_step=1e-3) -> MovingMesh:
    """Advance vertices from ``t0`` to ``t1`` with fixed-step RK4.

    The interval is split at the velocity's breakpoints; each piece takes
    ``ceil(length / max_step)`` equal steps and samples ``V`` strictly inside
    the piece, so a velocity that jumps in time is integrated piecewise.
    """
    if t1 < t0:
        raise ValueError("advect_mesh needs t0 <= t1")
    if t1 > surface.t_final * (1 + 1e-12) + 1e-14:
        raise ValueError(f"t1 = {t1} beyond t_final = {surface.t_final}")
    V = surface.velocity
    if t1 == t0 or isinstance(V, Stationary):
        return mesh.moved(mesh.vertices, t1)
    cuts = [b for b in getattr(V, "breakpoints", ()) if t0 < b < t1]
    x = np.array(mesh.vertices)
    for a, b in zip([t0] + cuts, cuts + [t1]):
        x = _rk4(V, a, b, x, max_step)
    return mesh.moved(x, t1)


def _rk4(V, a, b, x, max_step):
    nsteps = max(1, int(np.ceil((b - a) / max_step - 1e-9)))
    h = (b - a) / nsteps
    pad = 1e-12 * max(1.0, abs(b))
    lo, hi = a + pad, b - pad

    def at(s):
        return min(max(s, lo), hi) if hi > lo else 0.5 * (a + b)

    t = a
    for _ in range(nsteps):
        k1 = V(at(t), x)
        k2 = V(at(t + h / 2), x + h / 2 * k1)
        k3 = V(at(t + h / 2), x + h / 2 * k2)
        k4 = V(at(t + h), x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        bad = np.flatnonzero(~np.isfinite(x).all(axis=1))
        if bad.size:
            raise GeometryError(f"flow integration failed at t = {t:.6g}, vertex {int(bad[0])}")
    return x


def area_bound_constant(surface: EvolvingSurface, n_samples=50, max_step=1e-3):
    """Measured surrogate for ``C_A``: ``exp(T * max |div_Gamma V|)`` over sampled times.

    Returns ``(C_A, times, areas)``.
    """
    times = np.linspace(0.0, surface.t_final, n_samples)
    mesh = surface.reference_mesh
    areas, sup = [], 0.0
    for k, t in enumerate(times):
        if k:
            mesh = advect_mesh(surface, times[k - 1], t, mesh, max_step)
        areas.append(mesh.area)
        cent = mesh.vertices[mesh.triangles].mean(axis=1)
        div = surface.velocity.div_gamma(t, cent, mesh.normals)
        sup = max(sup, float(np.max(np.abs(div))) if len(div) else 0.0)
    return float(np.exp(surface.t_final * sup)), times, np.array(areas)
