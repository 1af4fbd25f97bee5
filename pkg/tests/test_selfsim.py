import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_forge.errors import ConditioningError, DomainError, PreconditionError
from blowup_forge.quad import _tensor_rule
from blowup_forge.selfsim import (
    PolynomialField, RadialBumpField, SelfSimilarFrame, SpectralField, eigen_residual,
    evolve_complement, hermite_mode, lemma22_ratio, lemma23_ratio, mode_coefficient_b,
    multi_indices, semigroup, solve_d, test_grid as sample_grid,
)

Z = sample_grid()
R2 = lambda p: np.sum(p * p, axis=-1)


def test_ground_mode():
    e = hermite_mode((0,) * 5)
    assert e.eigenvalue == 0.0
    assert np.all(e(Z) == 1.0)


def test_quadratic_mode_by_hand():
    # A_z |z|² = 2n - |z|², so -A_z (|z|² - 10) = |z|² - 10
    total = sum(hermite_mode(a)(Z) for a in multi_indices(2, 2) if max(a) == 2)
    assert np.max(np.abs(total - (R2(Z) - 10.0))) <= 1e-12
    assert hermite_mode((2, 0, 0, 0, 0)).eigenvalue == 1.0


def test_first_profile_solves_heat_equation():
    # (T - t)(1 - |z|²/10) = (T - t) - |x|²/10 and Δ(|x|²/10) = 1 = -∂_t (T - t)
    frame = SelfSimilarFrame(1.0)
    x = np.array([[0.3, -0.2, 0.1, 0.5, 0.0]])
    f = lambda x, t: (1.0 - t) * (1.0 - R2(frame.to_selfsimilar(x, t)[0]) / 10.0)
    h = 1e-3
    t = 0.2
    dt = (f(x, t + h) - f(x, t - h)) / (2 * h)
    lap = sum((f(x + h * e, t) - 2 * f(x, t) + f(x - h * e, t)) / h ** 2 for e in np.eye(5))
    assert abs(dt - lap)[0] <= 1e-8


def test_eigen_relations():
    assert max(eigen_residual(a, Z) for a in multi_indices(6)) <= 1e-8


def test_mode_orthogonality():
    modes = multi_indices(6)
    pts, w = _tensor_rule(8)
    V = np.array([hermite_mode(a)(pts) / math.sqrt(hermite_mode(a).norm_sq) for a in modes])
    G = (V * w) @ V.T
    assert np.max(np.abs(G - np.eye(len(modes)))) <= 1e-10


@pytest.mark.parametrize("alpha", [(1, 0, 0, 0, 0), (2, 1, 0, 0, 3), (0, 0, 6, 0, 0), (1, 1, 1, 1, 0)])
@pytest.mark.parametrize("dtau", [0.3, 1.0, 3.0])
def test_eigen_decay(alpha, dtau):
    e = hermite_mode(alpha)
    g = semigroup(PolynomialField(e, e.degree), dtau)
    z = Z[:30]
    err = np.max(np.abs(g(z) - math.exp(-0.5 * sum(alpha) * dtau) * e(z)))
    assert err <= 1e-6 * np.max(np.abs(e(z)))


@pytest.mark.parametrize("dtau", [0.3, 1.0, 3.0])
def test_moment_flow(dtau):
    g = semigroup(PolynomialField(R2, 2), dtau)
    z = Z[:50]
    assert np.max(np.abs(g(z) - (10.0 + math.exp(-dtau) * (R2(z) - 10.0)))) <= 1e-6


@pytest.mark.parametrize("l, moment", [(1, 10.0), (2, 140.0)])
def test_polynomial_growth_bound(l, moment):
    # the bound is uniform in Δτ: at z = 0 the flow relaxes to the Gaussian moment E|z|^{2l}
    ratios = [lemma23_ratio(l, dt, Z) for dt in (0.1, 1.0, 5.0, 20.0)]
    assert all(0 < r <= 1.01 * moment for r in ratios)
    assert abs(lemma23_ratio(l, 30.0, Z) / ratios[-1] - 1.0) < 1e-6


def test_bump_envelope_finite_and_resolved():
    bump = RadialBumpField(lambda r: (1 - (r / 2) ** 2) ** 3, 2.0)
    ratios = [lemma22_ratio(bump, dt, Z) for dt in (0.1, 1.0, 3.0)]
    assert all(0 < r <= (4 * math.pi) ** -1.25 * 1.0000001 for r in ratios)
    fine = sample_grid(n=9, count=600)
    assert abs(lemma22_ratio(bump, 1.0, fine) / ratios[1] - 1.0) < 0.2


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(st.sampled_from(multi_indices(4)), st.floats(-2, 2), min_size=1, max_size=6),
       st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_semigroup_property(coeffs, a, b):
    f = SpectralField(coeffs)
    lhs = semigroup(semigroup(f, a), b)(Z[:20])
    rhs = semigroup(f, a + b)(Z[:20])
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * (1 + np.max(np.abs(rhs)))


@pytest.mark.parametrize("alpha", [(0, 0, 0, 0, 0), (1, 1, 0, 0, 0), (2, 0, 0, 0, 2)])
def test_physical_heat_solution(alpha):
    e = hermite_mode(alpha)
    lam = 0.5 * sum(alpha)
    T = 1.0
    f = lambda x, t: (T - t) ** lam * e(x / math.sqrt(T - t))
    x = np.array([[0.2, -0.1, 0.3, 0.0, 0.1]])
    t, h, k = 0.3, 1e-2, 1e-3
    dt = (-f(x, t + 2 * k) + 8 * f(x, t + k) - 8 * f(x, t - k) + f(x, t - 2 * k)) / (12 * k)
    lap = 0.0
    for d in np.eye(5):
        lap = lap + (-f(x + 2 * h * d, t) + 16 * f(x + h * d, t) - 30 * f(x, t)
                     + 16 * f(x - h * d, t) - f(x - 2 * h * d, t)) / (12 * h * h)
    assert abs(dt - lap)[0] <= 1e-6


def test_zero_projection_gives_zero_coefficient():
    taus = np.linspace(6, 16, 21)
    mc = mode_coefficient_b((1, 0, 0, 0, 0), taus, np.zeros_like(taus))
    assert np.all(mc.values == 0.0)


@pytest.mark.parametrize("alpha", [(0,) * 5, (1, 0, 0, 0, 0), (2, 2, 0, 0, 0)])
def test_coefficient_closed_form(alpha):
    taus = np.linspace(6, 16, 81)
    lam = 0.5 * sum(alpha)
    mc = mode_coefficient_b(alpha, taus, np.exp(-7 * taus / 6))
    # the Duhamel weight contributes e^{-τ}, so b_α ~ e^{-13τ/6}
    exact = -np.exp(-13 * taus / 6) / (13.0 / 6.0 - lam)
    assert np.max(np.abs(mc.values / exact - 1.0)) <= 1e-8


def test_coefficient_rejects_slow_decay():
    taus = np.linspace(6, 16, 21)
    with pytest.raises(DomainError):
        mode_coefficient_b((0,) * 5, taus, np.exp(-0.5 * taus))


def test_cutoff_free_degenerate_case():
    b = np.linspace(1.0, 2.0, 126)
    sd = solve_d(b, 6.0, cutoff=lambda r: np.ones_like(r))
    assert sd.D_norm == 0.0
    assert np.array_equal(sd.d, b)


def test_cutoff_localisation():
    norms = [solve_d(np.ones(126), t0).D_norm for t0 in (6, 8, 10)]
    assert norms[0] > norms[1] > norms[2]


def test_small_tau0_is_rejected():
    with pytest.raises(ConditioningError):
        solve_d(np.ones(126), 2.0)


def test_initial_data_size():
    consts = []
    for t0 in (6.0, 8.0, 10.0):
        taus = np.linspace(t0, t0 + 10, 41)
        b = np.array([mode_coefficient_b(a, taus, np.exp(-7 * taus / 6)).values[0]
                      for a in multi_indices(4)])
        sd = solve_d(b, t0)
        consts.append(np.max(np.abs(sd.d)) / math.exp(-13 * t0 / 6))
    assert max(consts) / min(consts) < 1.5


def test_sharp_gap():
    log = evolve_complement(SpectralField({(5, 0, 0, 0, 0): 1.0}), np.linspace(0, 4, 9))
    assert abs(log.exponent - 2.5) <= 1e-8


def test_random_complement_decay():
    rng = np.random.default_rng(1)
    f0 = SpectralField({a: rng.normal() for a in multi_indices(8, 5)})
    assert evolve_complement(f0, np.linspace(0, 4, 9)).exponent >= 2.5 - 0.05


def test_complement_gate():
    with pytest.raises(PreconditionError):
        evolve_complement(SpectralField({(0,) * 5: 1.0}), np.linspace(0, 4, 9))


def test_frame_roundtrip():
    frame = SelfSimilarFrame(0.01)
    x = np.array([0.1, 0.2, -0.3, 0.0, 0.05])
    z, tau = frame.to_selfsimilar(x, 0.004)
    back, t = frame.to_physical(z, tau)
    assert np.allclose(back, x, rtol=1e-14) and abs(t - 0.004) < 1e-15
    with pytest.raises(DomainError):
        frame.to_selfsimilar(x, 0.02)
