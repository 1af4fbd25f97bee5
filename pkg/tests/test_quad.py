import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_forge.errors import PrecisionError
from blowup_forge.quad import (
    GAUSS_MASS, QuadratureSpec, ball_complement_integral, hermite_rule, mass_constants,
    radial_integral, rho_inner, rho_norm,
)
from blowup_forge.bubble_core import bubble_radial

mp.mp.dps = 30


def _beta_oracle():
    # ω4 α^{7/3} (1/2) B(5/2, 1) with ω4 = 8π²/3
    alpha = mp.mpf(15) ** mp.mpf("0.75")
    return 8 * mp.pi ** 2 / 3 * alpha ** (mp.mpf(7) / 3) * mp.beta(mp.mpf(5) / 2, 1) / 2


def _quad_oracle():
    alpha = mp.mpf(15) ** mp.mpf("0.75")
    f = lambda r: r ** 4 * (alpha * (1 + r * r) ** mp.mpf(-1.5)) ** (mp.mpf(7) / 3)
    return 8 * mp.pi ** 2 / 3 * mp.quad(f, [0, 1, 10, mp.inf])


def test_mass_of_Up_against_two_oracles():
    beta, quad = _beta_oracle(), _quad_oracle()
    assert abs(beta / quad - 1) < mp.mpf("1e-20")
    closed = 8 * mp.pi ** 2 * mp.mpf(15) ** mp.mpf("0.75")
    assert abs(beta / closed - 1) < mp.mpf("1e-25")
    I_p = mass_constants().I_p
    assert abs(I_p / float(beta) - 1.0) <= 1e-8
    assert abs(I_p - 601.81) < 0.01


def test_gaussian_normalisation():
    v = radial_integral(lambda r: np.exp(-r * r / 4.0)).value
    assert abs(v / GAUSS_MASS - 1.0) <= 1e-10
    assert math.isclose(GAUSS_MASS, (2.0 * math.sqrt(math.pi)) ** 5, rel_tol=1e-15)


def test_odd_integrand_vanishes():
    assert abs(rho_inner(lambda p: p[:, 0], lambda p: np.ones(len(p)))) < 1e-10


def test_integration_by_parts_identity():
    assert mass_constants().identity_defect <= 1e-8


def test_positive_constants_stable_under_depth():
    coarse = mass_constants()
    fine = mass_constants(QuadratureSpec(tol=1e-12, max_depth=16))
    for name in ("I_6", "I_d"):
        a, b = getattr(coarse, name), getattr(fine, name)
        assert a > 0
        assert abs(a / b - 1.0) <= 1e-8


def test_rho_inner_examples():
    one = lambda p: np.ones(len(p))
    e1 = lambda p: 1.0 - np.sum(p * p, axis=-1) / 10.0
    assert abs(rho_inner(one, one) / GAUSS_MASS - 1.0) <= 1e-12
    assert abs(rho_inner(e1, lambda p: p[:, 0])) <= 1e-10
    assert abs(rho_inner(e1, e1) / (0.4 * GAUSS_MASS) - 1.0) <= 1e-12


def test_radial_rho_inner_matches_tensor():
    f = lambda r: 1.0 - r * r / 10.0
    fp = lambda p: 1.0 - np.sum(p * p, axis=-1) / 10.0
    assert math.isclose(rho_inner(f, f, radial=True), rho_inner(fp, fp), rel_tol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(0, 5))
def test_hermite_rule_exactness(m, seed):
    # ∫ s^{2k} e^{-s²/4} ds = 2^{2k} Γ(k + 1/2) · 2
    s, w = hermite_rule(m)
    for k in range(m):
        exact = 2.0 * 4.0 ** k * math.gamma(k + 0.5)
        assert abs(np.dot(w, s ** (2 * k)) / exact - 1.0) <= 10 * np.finfo(float).eps * (k + 1) * 10
        assert abs(np.dot(w, s ** (2 * k + 1))) <= 1e-9 * exact


def test_degree_capacity_guard():
    with pytest.raises(PrecisionError):
        rho_inner(lambda p: p[:, 0], lambda p: p[:, 0], m=2, degree=8)


def test_quadrature_deterministic():
    f = lambda r: bubble_radial(r) ** 2
    assert radial_integral(f).value == radial_integral(f).value


def test_exterior_integral_closed_form():
    # ∫_{|x|>R} |x|^{-8} dx = ω4 / (3 R³)
    R = 3.0
    v = ball_complement_integral(lambda r: r ** -8.0, R)
    assert math.isclose(v, 8 * math.pi ** 2 / 3 / (3 * R ** 3), rel_tol=1e-10)


def test_rho_norm_of_constant():
    assert math.isclose(rho_norm(lambda p: np.ones(len(p))) ** 2, GAUSS_MASS, rel_tol=1e-12)


def test_nonconvergence_reports_estimates():
    with pytest.raises(PrecisionError) as info:
        radial_integral(lambda r: np.sin(40 * r) * np.exp(-r), QuadratureSpec(tol=1e-15, max_depth=3))
    assert len(info.value.estimates) == 2
