import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evosurf_ch.errors import DomainError
from evosurf_ch.potentials import (ASSUMPTION_NAMES, LogPotential, ObstaclePenalty, SmoothPotential,
                                   beta_eval, check_assumptions, eval_potential)

reals = st.floats(-5.0, 5.0, allow_nan=False)
interior = st.floats(-0.999, 0.999, allow_nan=False)
deltas = st.sampled_from([1e-1, 1e-2, 1e-3, 1e-4])
thetas = st.floats(0.05, 0.95)


def _all_potentials():
    return [SmoothPotential.quartic(), LogPotential(0.5, 0.1), LogPotential(0.2, 1e-3),
            ObstaclePenalty(0.1), ObstaclePenalty(1e-3)]


# ---------------------------------------------------------------- quartic

def test_quartic_minimum():
    F, dF, _ = eval_potential(SmoothPotential.quartic(), np.array([1.0, -1.0]))
    np.testing.assert_array_equal(F, 0.0)
    np.testing.assert_array_equal(dF, 0.0)


@given(reals)
def test_quartic_split_matches_closed_form(r):
    p = SmoothPotential.quartic()
    assert p.F(r) == pytest.approx((r * r - 1) ** 2 / 4, abs=1e-12, rel=1e-12)
    assert p.dF(r) == pytest.approx(r**3 - r, abs=1e-12, rel=1e-12)


# --------------------------------------------------------------------- log

def test_exact_log_symmetric_at_zero():
    _, dF, _ = eval_potential(LogPotential(0.5), 0.0)
    assert dF == 0.0


def test_exact_log_domain_errors():
    p = LogPotential(0.5)
    with pytest.raises(DomainError):
        eval_potential(p, np.array([0.2, 1.0]))
    with pytest.raises(DomainError):
        p.F(1.2)
    with pytest.raises(DomainError):
        p.F_exact(np.array([-1.0001]))
    assert p.F(1.0) == pytest.approx(0.5 * 0.5 * 2 * np.log(2.0))


def test_log_seam_branches_agree():
    # evaluate the middle and the outer closed forms directly at r = 1 - delta
    theta, d = 0.5, 0.1
    r = 1 - d
    mid = (1 + r) * np.log(1 + r) + (1 - r) * np.log(1 - r)
    outer = ((1 - r) * np.log(d) + (1 + r) * np.log(2 - d) + (1 - r) ** 2 / (2 * d)
             + (1 + r) ** 2 / (2 * (2 - d)) - 1.0)
    assert abs(mid - outer) <= 1e-12
    p = LogPotential(theta, d)
    assert abs(p.flog(r) - mid) <= 1e-12
    dmid = np.log((1 + r) / (1 - r))
    douter = -np.log(d) + np.log(2 - d) - (1 - r) / d + (1 + r) / (2 - d)
    assert abs(dmid - douter) <= 1e-12


@pytest.mark.parametrize("d", [0.3, 0.1, 1e-2, 1e-3])
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_log_seam_c1_one_sided(d, sign):
    p = LogPotential(0.4, d)
    s = sign * (1 - d)
    h = 1e-8
    for f, df in ((p.flog, p.phi), (p.phi, p.dphi)):
        lo, hi = f(s - h), f(s + h)
        assert abs(hi - lo) <= 4 * h * max(1.0, abs(df(s)))


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=50), deltas)
def test_log_phi_nondecreasing(rs, d):
    p = LogPotential(0.5, d)
    r = np.sort(np.array(rs))
    assert np.all(np.diff(p.phi(r)) >= -1e-12)


@pytest.mark.parametrize("d", [0.3, 1e-1, 1e-2, 1e-3, 1e-4])
def test_regularised_log_below_exact(d):
    r = np.linspace(-1, 1, 4001)
    assert np.all(LogPotential(0.5, d).flog(r) <= LogPotential(0.5).flog(r) + 1e-12)


@given(st.floats(-4, 4), deltas)
def test_phi_growth_inequality(r, d):
    # |phi_delta(r)| <= r phi_delta(r) + 1
    phi = float(LogPotential(0.5, d).phi(r))
    assert abs(phi) <= r * phi + 1 + 1e-12


def test_regularised_log_converges_on_compacts():
    r = np.linspace(-0.9, 0.9, 1001)
    gap = np.abs(LogPotential(0.5, 1e-4).F(r) - LogPotential(0.5).F(r)).max()
    assert gap <= 1e-12


def test_log_delta_validation():
    with pytest.raises(ValueError):
        LogPotential(0.5, 1.0)
    with pytest.raises(ValueError):
        LogPotential(0.0)


# ----------------------------------------------------------------- obstacle

@pytest.mark.parametrize("d", [0.5, 0.1, 1e-2, 1e-3])
def test_obstacle_seam_values(d):
    p = ObstaclePenalty(d)
    s = 1 + d
    cubic = (s - 1) ** 3 / (6 * d**2)
    quad = (s - 1 - d / 2) ** 2 / (2 * d) + d / 24
    assert cubic == pytest.approx(d / 6, rel=1e-12)
    assert quad == pytest.approx(d / 6, rel=1e-12)
    assert p.fobs(s) == pytest.approx(d / 6, rel=1e-12)
    assert p.phi(s) == pytest.approx(0.5, rel=1e-12)
    assert p.phi(-s) == pytest.approx(-0.5, rel=1e-12)


@pytest.mark.parametrize("d", [0.1, 1e-2, 1e-3])
def test_obstacle_c1(d):
    p = ObstaclePenalty(d)
    h = 1e-9
    for s in (1.0, 1.0 + d, -1.0, -1.0 - d):
        assert abs(p.fobs(s + h) - p.fobs(s - h)) <= 4 * h * max(1.0, abs(p.phi(s)))
        assert abs(p.phi(s + h) - p.phi(s - h)) <= 4 * h * max(1.0, 1.0 / d)


@given(st.floats(-1.0, 1.0), deltas)
def test_obstacle_zero_inside(r, d):
    p = ObstaclePenalty(d)
    assert p.fobs(r) == 0.0 and p.phi(r) == 0.0


@given(st.floats(-5, 5), deltas)
def test_beta_delta_bounds(r, d):
    p = ObstaclePenalty(d)
    bd, b = beta_eval(p, r)
    assert abs(b - bd) <= d / 2 + 1e-15
    assert 0.0 <= p.dbeta_delta(r) <= 1.0 + 1e-15
    assert float(p.phi(-r)) == -float(p.phi(r))


@pytest.mark.parametrize("d", [0.1, 0.3, 0.5])
def test_beta_sharp_limit(d):
    bd, b = beta_eval(ObstaclePenalty(d), 1.5)
    assert b == 0.5
    assert beta_eval(ObstaclePenalty(d), 0.0) == (0.0, 0.0)


def test_beta_gap_outer_branch():
    bd, b = beta_eval(ObstaclePenalty(0.2), 2.0)
    assert b - bd == pytest.approx(0.1, abs=1e-15)


def test_obstacle_exact_energy():
    p = ObstaclePenalty(0.1)
    e = p.F_exact(np.array([0.0, 1.0, 1.01]))
    assert e[0] == 0.5 and e[1] == 0.0 and np.isinf(e[2])


# -------------------------------------------------------- shared properties

@pytest.mark.parametrize("p", _all_potentials(), ids=lambda p: f"{p.name}")
def test_even_and_odd_symmetry(p):
    r = np.linspace(0, 2.5, 1001)
    np.testing.assert_allclose(p.F(-r), p.F(r), atol=1e-13)
    np.testing.assert_allclose(p.dF(-r), -p.dF(r), atol=1e-13)


@pytest.mark.parametrize("p", _all_potentials(), ids=lambda p: f"{p.name}")
def test_derivatives_match_finite_differences(p):
    seams = [1.0, -1.0]
    d = getattr(p, "delta", 0.0)
    seams += [1 - d, -1 + d, 1 + d, -1 - d]
    r = np.linspace(-2.0, 2.0, 801)
    r = r[np.min(np.abs(r[:, None] - np.array(seams)[None, :]), axis=1) > 1e-3]
    h = 1e-6
    for f, df in ((p.F, p.dF), (p.dF, p.d2F)):
        fd = (f(r + h) - f(r - h)) / (2 * h)
        exact = df(r)
        assert np.all(np.abs(fd - exact) <= 1e-6 * np.maximum(1.0, np.abs(exact)))


@settings(max_examples=50)
@given(interior, thetas)
def test_exact_log_fd_interior(r, theta):
    p = LogPotential(theta)
    h = 1e-7 * (1 - abs(r))
    fd = (p.F(r + h) - p.F(r - h)) / (2 * h)
    assert abs(fd - p.dF(r)) <= 1e-5 * max(1.0, abs(p.dF(r)))


# ------------------------------------------------------------- assumptions

def test_quartic_corrected_constants_pass():
    p = SmoothPotential.quartic(alpha=(1.0, 3.0, 4.0, 1.0), beta=(0.0, 1.0, 0.25, 0.0, 0.0), q=4.0)
    rep = check_assumptions(p)
    assert rep.passed, str(rep)
    assert set(rep.results) == set(ASSUMPTION_NAMES)


def test_quartic_published_constants_report_witness():
    # |F1'(1)| = 1 while 1/4 |1|^4 + 0 = 1/4
    rep = check_assumptions(SmoothPotential.quartic())
    assert set(rep.failures()) == {"A2.2c", "A2.3b"}
    assert rep.results["A2.2c"].witness is not None


def test_superlinear_concave_part_fails_a24():
    r4 = SmoothPotential(lambda r: r**4 / 4, lambda r: r**3, lambda r: 3 * r**2,
                         lambda r: r**4, lambda r: 4 * r**3, lambda r: 12 * r**2,
                         alpha=(1.0, 3.0, 4.0, 1.0), beta=(0.0, 1.0, 0.25, 0.0, 0.0), q=4.0)
    rep = check_assumptions(r4)
    assert not rep.results["A2.4"].passed
    assert abs(rep.results["A2.4"].witness) > 0.5


def test_zero_potential_passes():
    assert check_assumptions(SmoothPotential.zero()).passed


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        check_assumptions(SmoothPotential.zero(), count=0)
