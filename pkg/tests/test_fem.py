import numpy as np
import pytest
import scipy.sparse as sp

from evosurf_ch.errors import GeometryError, MeanValueError
from evosurf_ch.fem import (assemble_forms, inverse_laplacian, l2_norm, l2_project, load_vector, mean_value,
                            poincare_constant, quadrature_l2_norm)
from evosurf_ch.geometry import (AnisotropicScaling, MovingMesh, RadialScaling, TangentialRotation,
                                 advect_mesh, make_surface)


def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a)


def test_mass_spd_and_stiffness_kernel(forms):
    f = forms(3)
    M, A = _dense(f.M), _dense(f.A_S)
    np.testing.assert_allclose(M, M.T, atol=1e-16)
    np.testing.assert_allclose(A, A.T, atol=1e-14)
    assert np.linalg.eigvalsh(M).min() > 0
    assert np.linalg.eigvalsh(A).min() > -1e-12
    assert np.abs(A @ np.ones(f.n)).max() <= 1e-12 * np.abs(A).max()


def test_mass_integrates_constants(forms, sphere):
    f = forms(3)
    assert np.isclose(np.ones(f.n) @ f.M @ np.ones(f.n), sphere(3).reference_mesh.area, rtol=1e-14)
    np.testing.assert_allclose(f.lumped, np.asarray(f.M.sum(axis=1)).ravel())


def test_stationary_forms_vanish(forms):
    f = forms(2)
    assert f.G.nnz == 0 and f.B.nnz == 0 and f.A_N.nnz == 0


def test_rho_forms_equal_plain_on_reference(forms):
    f = forms(2)
    assert abs(f.M_rho - f.M).max() == 0 and abs(f.A_S_rho - f.A_S).max() == 0


def test_advection_annihilates_constants():
    vel = TangentialRotation(omega=2.0, advective=lambda t, x: np.zeros_like(x))
    surf = make_surface("unit-sphere", 3, vel)
    f = assemble_forms(surf.reference_mesh, vel, 0.0)
    assert f.A_N.nnz > 0
    np.testing.assert_allclose(f.A_N.T @ np.ones(f.n), 0.0, atol=1e-13)


def test_radial_divergence_form_is_exact():
    # the P1 interpolant of V = -x has tangential divergence exactly -2 on flat triangles
    vel = RadialScaling.exponential(1.0)
    surf = make_surface("unit-sphere", 2, vel)
    f = assemble_forms(surf.reference_mesh, vel, 0.0)
    np.testing.assert_allclose(f.divergence, -2.0, atol=1e-13)
    assert abs(f.G + 2.0 * f.M).max() <= 1e-14


def _central_difference(surf, t, h, attr):
    def at(s):
        return assemble_forms(advect_mesh(surf, 0.0, s, surf.reference_mesh), surf.velocity)

    return (getattr(at(t + h), attr) - getattr(at(t - h), attr)) / (2 * h), at(t)


@pytest.mark.parametrize("attr, deriv", [("M", "G"), ("A_S", "B")])
def test_time_derivative_of_forms(attr, deriv):
    vel = AnisotropicScaling.linear((1.4, 0.8, 1.1), 1.0)
    surf = make_surface("unit-sphere", 2, vel, t_final=1.0)
    errs = []
    for h in (1e-2, 5e-3):
        fd, f0 = _central_difference(surf, 0.4, h, attr)
        exact = getattr(f0, deriv)
        errs.append(abs(fd - exact).max() / abs(exact).max())
    # O(h^2) finite-difference error only: the identities hold exactly in space
    assert errs[0] < 1e-4
    assert errs[1] < errs[0] / 3


def test_transport_theorem_for_transported_function():
    # d/dt int u = int u div V for a function with constant nodal values
    vel = AnisotropicScaling.linear((1.3, 0.9, 1.2), 1.0)
    surf = make_surface("unit-sphere", 3, vel, t_final=1.0)
    c = np.cos(surf.reference_mesh.vertices[:, 0] * 2.0)
    t, h = 0.3, 1e-3
    mp = advect_mesh(surf, 0.0, t + h, surf.reference_mesh)
    mm = advect_mesh(surf, 0.0, t - h, surf.reference_mesh)
    m0 = advect_mesh(surf, 0.0, t, surf.reference_mesh)
    lhs = (assemble_forms(mp).lumped @ c - assemble_forms(mm).lumped @ c) / (2 * h)
    rhs = np.ones(len(c)) @ (assemble_forms(m0, vel).G @ c)
    assert abs(lhs - rhs) <= 1e-6 * abs(rhs)


def test_transport_theorem_with_material_derivative():
    # manufactured u(t, x) = t * x_1 + x_2^2 sampled at moving vertices; error shrinks with h and tau
    vel = AnisotropicScaling.linear((1.3, 0.9, 1.2), 1.0)

    def u_and_dot(mesh, t):
        x = mesh.vertices
        u = t * x[:, 0] + x[:, 1] ** 2
        V = vel(t, x)
        return u, x[:, 0] + t * V[:, 0] + 2 * x[:, 1] * V[:, 1]

    errs = []
    for level, tau in ((2, 2e-2), (3, 1e-2), (4, 5e-3)):
        surf = make_surface("unit-sphere", level, vel, t_final=1.0)
        t = 0.5
        total = []
        for s in (t - tau, t + tau):
            mesh = advect_mesh(surf, 0.0, s, surf.reference_mesh)
            total.append(load_vector(mesh, lambda p, s=s: s * p[:, 0] + p[:, 1] ** 2).sum())
        fd = (total[1] - total[0]) / (2 * tau)
        mesh = advect_mesh(surf, 0.0, t, surf.reference_mesh)
        f = assemble_forms(mesh, vel)
        u, udot = u_and_dot(mesh, t)
        assembled = np.ones(f.n) @ (f.M @ udot + f.G @ u)
        errs.append(abs(fd - assembled))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


def test_load_vector_exact_for_linear(sphere, forms):
    mesh = sphere(2).reference_mesh
    f = forms(2)
    b = load_vector(mesh, lambda p: 3.0 * p[:, 0] - p[:, 2])
    np.testing.assert_allclose(b, f.M @ (3.0 * mesh.vertices[:, 0] - mesh.vertices[:, 2]), atol=1e-15)


def test_l2_project_keeps_p1_functions(sphere, forms, rng):
    f = forms(2)
    u = rng.uniform(-1, 1, f.n)
    np.testing.assert_allclose(l2_project(f, u), u, atol=1e-12)
    x = sphere(2).reference_mesh.vertices[:, 0]
    np.testing.assert_allclose(l2_project(f, lambda p: p[:, 0], sphere(2).reference_mesh), x, atol=1e-12)


def test_l2_project_needs_mesh_for_callables(forms):
    with pytest.raises(ValueError, match="mesh"):
        l2_project(forms(1), lambda p: p[:, 0])
    with pytest.raises(ValueError, match="vertex samples"):
        l2_project(forms(1), np.zeros(3))


def test_quadrature_norm_matches_mass_norm_for_linear(sphere, forms):
    mesh = sphere(2).reference_mesh
    f = forms(2)
    x = mesh.vertices[:, 0]
    assert np.isclose(quadrature_l2_norm(mesh, lambda p: p[:, 0]), l2_norm(f, x), rtol=1e-13)
    assert np.isclose(mean_value(f, np.full(f.n, 0.25)), 0.25)


@pytest.mark.parametrize("level", [3, 4])
def test_inverse_laplacian_eigenfunction(sphere, forms, level):
    f = forms(level)
    x3 = sphere(level).reference_mesh.vertices[:, 2]
    z = x3 - mean_value(f, x3)
    g, norm = inverse_laplacian(f, z)
    # x3 is a first spherical harmonic: -Lap x3 = 2 x3
    rel = l2_norm(f, g - z / 2) / l2_norm(f, z / 2)
    assert rel <= (0.05 if level == 4 else 0.1)
    assert abs(f.lumped @ g) <= 1e-10
    assert norm**2 == pytest.approx((4 * np.pi / 3) / 2, rel=0.02 if level == 4 else 0.05)


def test_inverse_laplacian_error_shrinks(sphere, forms):
    errs = []
    for level in (3, 4, 5):
        f = forms(level)
        x3 = sphere(level).reference_mesh.vertices[:, 2]
        g, _ = inverse_laplacian(f, x3 - mean_value(f, x3))
        errs.append(l2_norm(f, g - x3 / 2) / l2_norm(f, x3 / 2))
    assert errs[0] > errs[1] > errs[2]


def test_inverse_laplacian_solves_poisson(forms, rng):
    f = forms(3)
    z = rng.normal(size=f.n)
    z -= mean_value(f, z)
    g, _ = inverse_laplacian(f, z)
    np.testing.assert_allclose(f.A_S @ g, f.M @ z, atol=1e-10)


def test_inverse_laplacian_rejects_nonzero_mean(forms):
    f = forms(2)
    with pytest.raises(MeanValueError, match="mean"):
        inverse_laplacian(f, np.ones(f.n))
    g, norm = inverse_laplacian(f, np.zeros(f.n))
    assert norm == 0.0 and not g.any()


def test_poincare_constant_unit_sphere(forms):
    # lambda_2 of the unit sphere is 2
    assert poincare_constant(forms(2)) == pytest.approx(0.5, rel=0.05)
    assert poincare_constant(forms(4)) == pytest.approx(0.5, rel=0.01)


def test_degenerate_element_rejected():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 0, 1]])
    f = np.array([[0, 1, 2], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    mesh = MovingMesh(v, f, np.ones(4), 0.0)
    with pytest.raises(GeometryError, match="degenerate"):
        assemble_forms(mesh)
