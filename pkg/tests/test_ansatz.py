import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import blowup_forge.ansatz as A
from blowup_forge.bubble_core import P_EXP, bubble_radial, eval_kernel, potential
from blowup_forge.errors import ConfigurationError, DegenerateInputError, DomainError, PreconditionError
from blowup_forge.modulation import ball_integrals, kappa1, leading_lambda, leading_lambda_dot

T = 1e-2
U0 = 15.0 ** 0.75


class LeadingOrder:
    """First bubble on its leading-order law, second bubble frozen."""

    def __init__(self, fields):
        self.fields, self.T, self.k = fields, fields.T, kappa1(fields.M)

    def lam_at(self, i, t=None, sigma=None):
        return np.array([leading_lambda(1, self.T - sigma, self.k, self.T) if i == 1 else 1e-3])

    def lam_dot_at(self, i, t=None, sigma=None):
        return np.array([leading_lambda_dot(1, self.T - sigma, self.k, self.T) if i == 1 else 0.0])

    def xi_at(self, i, t=None, sigma=None):
        return np.zeros((1, 5)) if i == 1 else self.fields.q[None]

    def xi_dot_at(self, i, t=None, sigma=None):
        return np.zeros((1, 5))


# ---------------------------------------------------------------------------
# Z2


def test_Z2_vanishes_at_origin():
    for t in np.linspace(0.0, T, 7):
        assert A.eval_Z2(np.zeros((1, 5)), t)[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5), st.floats(0.0, T))
def test_Z2_odd(x, t):
    x = np.array([x])
    assert abs(A.eval_Z2(x, t)[0] + A.eval_Z2(-x, t)[0]) <= 1e-12 * 1e-2


def test_Z2_standing_assumption(fields):
    vals = [A.eval_Z2(fields.q[None], t)[0] for t in np.linspace(0.0, T, 12)]
    assert min(vals) > fields.z2_sup / 2


def test_Z2_maximum_principle(fields):
    s = np.linspace(0.0, 2.0, 801)
    line = np.outer(s, fields.q)
    maxima = [np.max(np.abs(A.eval_Z2(line, t))) for t in np.linspace(0.0, T, 12)]
    assert np.all(np.diff(maxima) <= 1e-15)


def test_even_seed_rejected():
    seed = A.BumpSeed(centers=((1.0, 0, 0, 0, 0), (-1.0, 0, 0, 0, 0)), signs=(1.0, 1.0))
    with pytest.raises(PreconditionError):
        A.eval_Z2(np.zeros((1, 5)), 0.0, seed)


def test_cutoff_profile():
    s = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    assert np.array_equal(A.eta(s), [1.0, 1.0, 1.0, 0.0, 0.0])
    assert 0 < A.eta(1.5) < 1


# ---------------------------------------------------------------------------
# approximate solution


@pytest.mark.parametrize("frac", [0.5, 1e-4])
def test_far_field(traj, fields, frac):
    x = np.array([[0.0, 10.0, 0.0, 0.0, 0.0]])
    parts = A.assemble_u_app(x, None, traj, fields, sigma=frac * T, components=True)
    total = sum(parts.values())[0]
    assert abs(total) <= fields.z2_sup
    assert abs(parts["bubble1"][0]) + abs(parts["bubble2"][0]) <= 1e-3 * fields.z2_sup


@pytest.mark.parametrize("frac", [1e-2, 1e-4, 1e-6])
def test_first_bubble_core(traj, fields, frac):
    sig = frac * T
    xi = traj.xi_at(1, sigma=sig)
    parts = A.assemble_u_app(xi, None, traj, fields, sigma=sig, components=True)
    lam = traj.lam_at(1, sigma=sig)[0]
    assert math.isclose(parts["bubble1"][0], lam ** -1.5 * U0, rel_tol=1e-12)
    rest = sum(abs(v[0]) for k, v in parts.items() if k != "bubble1")
    assert parts["bubble1"][0] >= 10 * rest


def test_headline_rate(traj, fields):
    sig = np.geomspace(1e-9, 1e-8, 8) * T
    sup = [A.assemble_u_app(traj.xi_at(1, sigma=s), None, traj, fields, sigma=s)[0] for s in sig]
    slope = np.polyfit(np.log(sig), np.log(sup), 1)[0]
    assert abs(slope + 6) <= 0.1


# ---------------------------------------------------------------------------
# inner errors and sources


def test_frozen_parameters_have_no_motion_error():
    fp = A.FrozenParameters(T, (1e-3, 2e-3), ((0,) * 5, (1, 0, 0, 0, 0)))
    y = np.random.default_rng(0).normal(size=(50, 5))
    assert np.all(A.error_E(1, y, 0.0, fp) == 0.0)


def test_motion_error_at_centre(traj):
    s = 1e-3 * T
    lam, ld = traj.lam_at(1, sigma=s)[0], traj.lam_dot_at(1, sigma=s)[0]
    assert math.isclose(A.error_E(1, np.zeros((1, 5)), None, traj, sigma=s)[0], 1.5 * lam * ld * U0,
                        rel_tol=1e-13)


def test_motion_error_gauge_slope(traj):
    y = np.outer(np.geomspace(1e-2, 200, 400), [1, 0, 0, 0, 0])
    r = np.linalg.norm(y, axis=1)
    sig = np.geomspace(1e-8, 1e-6, 8) * T
    norms = [np.max((1 + r ** 2.5) * np.abs(A.error_E(1, y, None, traj, sigma=s))) for s in sig]
    assert abs(np.polyfit(np.log(sig), np.log(norms), 1)[0] - 7) <= 0.1


def test_source_vanishes_without_fields():
    f = A.AnsatzFields(M=1e-300, include_z2=False)
    fp = A.FrozenParameters(T, (1e-3, 1e-3), ((0,) * 5, tuple(f.q)), f)
    y = np.random.default_rng(1).normal(size=(100, 5))
    for i in (1, 2):
        assert np.max(np.abs(A.source_H(i, y, None, fp, f, sigma=T / 2))) <= 1e-290


@pytest.mark.parametrize("i, nu", [(1, 1.75), (2, 1.5)])
def test_source_envelopes(traj, fields, i, nu):
    y = np.outer(np.geomspace(1e-2, 200, 400), [1, 0, 0, 0, 0])
    r = np.linalg.norm(y, axis=1)
    ratios = [np.max((1 + r ** 3) * np.abs(A.source_H(i, y, None, traj, fields, sigma=s)))
              / traj.lam_at(i, sigma=s)[0] ** nu for s in np.geomspace(1e-8, 1e-1, 8) * T]
    assert max(ratios) / min(ratios) < 1.1


def test_dilation_orthogonality_defined_by_kappa():
    # on all of R^5 the leading law cancels ∫ H1 W6 exactly; on the ball B_2R the
    # defect is the exterior part of the two integrals
    f = A.AnsatzFields(include_z2=False, drop_quadratic=True, R=100.0)
    tr = LeadingOrder(f)
    bi = ball_integrals(f.R)
    for frac in (0.5, 1e-4):
        sig = frac * T
        lam = tr.lam_at(1, sigma=sig)[0]
        _, raw = A.orthogonality_matrix(None, tr, f, sigma=sig)
        predicted = -sig * lam ** 1.5 * (tr.k * bi.I6_ball + f.M * bi.Imix_ball)
        assert abs(raw[0, 5] / predicted - 1.0) <= 1e-8
        full_space = -sig * lam ** 1.5 * (tr.k * bi.I6 + f.M * bi.Imix)
        assert abs(full_space) <= 1e-12 * sig * lam ** 1.5 * f.M * abs(bi.Imix)


def test_translation_orthogonality(traj, fields):
    for s in (T / 2, 1e-3 * T, 1e-7 * T):
        ratio, _ = A.orthogonality_matrix(None, traj, fields, sigma=s)
        assert np.max(np.abs(ratio[0, :5])) <= 1e-6


def test_oddness_cancellation():
    pts, w = A.ball_rule(200.0)
    r = np.linalg.norm(pts, axis=1)
    vals = P_EXP * bubble_radial(r) ** (P_EXP - 1) * eval_kernel(6, pts) * A.eval_Z2(0.5 * pts, T / 2)
    assert abs(math.fsum(vals * w)) <= 1e-12 * math.fsum(np.abs(vals) * w)


def test_provenance_checked(traj):
    with pytest.raises(ConfigurationError):
        A.orthogonality_matrix(None, traj, A.AnsatzFields(M=2e-2), sigma=T / 2)


# ---------------------------------------------------------------------------
# outer source


def test_outer_source_without_fields():
    f = A.AnsatzFields(M=1e-300, include_z2=False)
    fp = A.FrozenParameters(T, (1e-3, 1e-3), ((0,) * 5, tuple(f.q)), f)
    x = np.random.default_rng(0).normal(size=(200, 5))
    G = A.outer_G(x, None, fp, f, (A.PhiZero(), A.PhiZero()), sigma=T / 2)
    for k, v in G.items():
        if k != "N_nonlinear":
            assert np.max(np.abs(v)) <= 1e-290, k
    # what remains is the interaction of the two frozen bubbles
    U1 = 1e-3 ** -1.5 * bubble_radial(np.linalg.norm(x / 1e-3, axis=1))
    U2 = 1e-3 ** -1.5 * bubble_radial(np.linalg.norm((x - f.q) / 1e-3, axis=1))
    direct = (U1 + U2) ** P_EXP - U1 ** P_EXP - U2 ** P_EXP
    assert np.allclose(G["N_nonlinear"], direct, rtol=1e-10, atol=1e-300)


def test_cutoff_collision_support(fields):
    fp = A.FrozenParameters(T, (1e-3, 1e-3), ((0,) * 5, tuple(fields.q)), fields)
    sig = 1e-3 * T
    L = sig ** 0.125
    rr = np.linspace(0.01, 3.0, 3000) * L
    G = A.outer_G(np.outer(rr, [0, 1, 0, 0, 0]), None, fp, fields, (A.PhiZero(), A.PhiZero()),
                  sigma=sig)["N_cutoff"]
    support = rr[np.abs(G) > 0] / L
    assert support.min() >= 1.0 and support.max() <= 2.0


def test_decay_calibration(fields):
    cal = lambda z, tau: (math.exp(-7 * tau / 6) * np.sum(z * z, axis=-1) ** 2
                          * (np.linalg.norm(z, axis=-1) <= 2 * math.exp(tau / 2)))
    assert abs(A.rho_norm_G(None, fields, G=cal).exponent - 7 / 6) <= 1e-3


def test_decay_rejects_zero(fields):
    with pytest.raises(DegenerateInputError):
        A.rho_norm_G(None, fields, G=lambda z, tau: np.zeros(z.shape[:-1]))


def test_decay_needs_span():
    with pytest.raises(DomainError):
        A.fit_decay([1.0, 2.0], [1.0, 0.5])


@pytest.mark.slow
def test_outer_decay(traj, fields):
    assert A.rho_norm_G(traj, fields).exponent >= 7 / 6 - 0.05


@pytest.mark.slow
def test_majorants_finite_and_stable(traj, fields):
    rep = A.majorant_check(traj, fields)
    assert rep.finite and rep.stable


@pytest.mark.slow
def test_reassembly(traj, fields):
    assert A.reassembly_check(traj, fields, n=1000).passed
