import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from blowup_forge.bubble_core import dilation_radial
from blowup_forge.errors import ConditioningError, DomainError
from blowup_forge.inner_solver import (InnerGrid, InnerProblem, WeightedNormSpec, c3_scan,
                                       envelope_check, interior_bump, mode_kernels,
                                       project_orthogonal, projection_residual, solve_inner_mode,
                                       unstable_growth, weighted_norm)
from blowup_forge.quad import OMEGA4

R = 10.0
ONE = lambda t: 1.0
EXTREMAL = lambda r: 1.0 / (1.0 + np.asarray(r, dtype=float) ** 2.5)


def _solve(h, l=0, span=2.0, n=200, steps=200):
    prob = InnerProblem(l, lambda r, t: h(r), ONE, 0.0, span, R)
    return solve_inner_mode(prob, grid=InnerGrid(R, n), steps=steps)


# ---------------------------------------------------------------------------
# norms


def test_norm_gauge_calibration():
    lam = lambda t: 1.0 - t
    times = np.linspace(0.0, 0.9, 10)
    rho = np.linspace(0.0, 20.0, 201)
    f = np.array([lam(t) ** 1.75 / (1.0 + rho ** 3) for t in times])
    spec = WeightedNormSpec(0.5, 1.75, R, lam)
    assert math.isclose(weighted_norm(f, times, rho, "source", spec, decay=3.0).value, 1.0,
                        rel_tol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_norm_homogeneity(c):
    rho = np.linspace(0.0, 20.0, 101)
    f = np.sin(rho)[None, :]
    spec = WeightedNormSpec(0.5, 1.0, R, ONE)
    for kind in ("source", "solution"):
        a = weighted_norm(f, [0.0], rho, kind, spec).value
        b = weighted_norm(c * f, [0.0], rho, kind, spec).value
        assert math.isclose(b, c * a, rel_tol=1e-14)


def test_norm_errors():
    spec = WeightedNormSpec(0.5, 1.0, R, ONE)
    with pytest.raises(DomainError):
        weighted_norm(np.zeros((0, 0)), [], [], "source", spec)
    with pytest.raises(DomainError):
        weighted_norm(np.ones((1, 2)), [0.0], [0.0, 1.0], "other", spec)
    with pytest.raises(DomainError):
        WeightedNormSpec(1.0, 1.0, R, ONE)


# ---------------------------------------------------------------------------
# projection


def test_projection_keeps_orthogonal_source():
    # a function supported beyond 2R is orthogonal to every kernel on the ball
    h = lambda r: np.where(np.asarray(r) > 2 * R, 1.0, 0.0)
    p = project_orthogonal(h, 0, R)
    assert p.coeffs == (0.0,)
    r = np.linspace(0, 30, 50)
    assert np.array_equal(p(r), h(r))


def test_projection_of_kernel_direction():
    chi = interior_bump(R)
    h = lambda r: dilation_radial(r) * chi(r)
    p = project_orthogonal(h, 0, R)
    assert math.isclose(p.coeffs[0], 1.0, rel_tol=1e-12)
    assert np.max(np.abs(p(np.linspace(0, 2 * R, 100)))) <= 1e-14


@pytest.mark.parametrize("l", [0, 1])
def test_projection_against_dense_quadrature(l):
    h = lambda r: np.exp(-np.asarray(r) / 3.0) * (1 + np.cos(np.asarray(r)))
    p = project_orthogonal(h, l, R)
    for W in mode_kernels(l):
        f = lambda r: float(p(np.array([r]))[0] * W(np.array([r]))[0]) * OMEGA4 * r ** 4
        g = lambda r: float(W(np.array([r]))[0] ** 2) * OMEGA4 * r ** 4
        hh = lambda r: float(p(np.array([r]))[0] ** 2) * OMEGA4 * r ** 4
        pts = [R, 2 * R]
        ip = sum(quad(f, a, b, epsabs=0, epsrel=1e-13, limit=400)[0] for a, b in ((0, 1), (1, R), (R, 2 * R)))
        nw = math.sqrt(sum(quad(g, a, b, epsabs=0, epsrel=1e-13, limit=400)[0] for a, b in ((0, 1), (1, R), (R, 2 * R))))
        nh = math.sqrt(sum(quad(hh, a, b, epsabs=0, epsrel=1e-13, limit=400)[0] for a, b in ((0, 1), (1, R), (R, 2 * R))))
        assert abs(ip) <= 1e-10 * nw * nh
    assert np.all(projection_residual(p, l, R) <= 1e-10)


def test_projection_rejects_tiny_ball():
    with pytest.raises(ConditioningError):
        project_orthogonal(EXTREMAL, 0, 1e-100)


# ---------------------------------------------------------------------------
# solver


@pytest.mark.parametrize("l", [0, 1])
def test_zero_source(l):
    s = _solve(lambda r: np.zeros_like(r), l)
    assert s.l_coef == 0.0
    assert np.all(s.phi == 0.0)


def test_linearity():
    h1 = project_orthogonal(EXTREMAL, 0, R)
    h2 = project_orthogonal(lambda r: np.exp(-np.asarray(r) / 2.0), 0, R)
    s1, s2 = _solve(h1), _solve(h2)
    s12 = _solve(lambda r: h1(r) + h2(r))
    scale = np.max(np.abs(s12.phi))
    assert np.max(np.abs(s12.phi - s1.phi - s2.phi)) <= 1e-8 * scale
    assert math.isclose(s12.l_coef, s1.l_coef + s2.l_coef, rel_tol=1e-8)


def test_shooting_removes_growth():
    s = _solve(project_orthogonal(EXTREMAL, 0, R), span=40.0, steps=400)
    assert abs(s.final_residual) <= 1e-12 * max(abs(s.l_coef), 1.0)
    assert np.all(np.isfinite(s.phi))


def test_shooting_errors():
    with pytest.raises(DomainError):
        solve_inner_mode(InnerProblem(0, lambda r, t: r, ONE, 0.0, -1.0, R))
    with pytest.raises(DomainError):
        solve_inner_mode(InnerProblem(0, lambda r, t: r, ONE, 0.0, 1.0, R), grid=InnerGrid(2 * R))


def test_unstable_growth():
    measured, predicted = unstable_growth()
    assert abs(measured / predicted - 1) <= 0.1


def test_unstable_growth_with_scale_law():
    lam = lambda t: 1.0 / (1.0 + t)
    measured, predicted = unstable_growth(lam=lam, span=2.0)
    assert abs(measured / predicted - 1) <= 0.1


@pytest.mark.xfail(strict=True, reason="the projected source is orthogonal to W6 but the evolution does "
                   "not keep the solution orthogonal to it")
def test_kernel_components_stay_small():
    s = _solve(project_orthogonal(EXTREMAL, 0, R), span=4 * R * R, n=400, steps=400)
    assert np.max(s.kernel_components()[1:]) <= 1e-6


# ---------------------------------------------------------------------------
# estimates


@pytest.fixture(scope="module")
def c3():
    return c3_scan()


def test_c3_coefficient_stable(c3):
    assert c3.coefficient_spread <= 0.2


def test_c3_finite(c3):
    assert np.all(np.isfinite(c3.solution)) and np.all(c3.solution > 0)


@pytest.mark.slow
def test_envelope_stable(traj, fields):
    rep = envelope_check(traj, fields)
    assert np.all(np.isfinite(rep.constants))
    assert rep.max_change <= 0.2
