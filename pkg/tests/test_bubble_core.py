import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_forge.bubble_core import (
    ALPHA, P_EXP, BubbleState, RadialGrid, RadialProfile, apply_L0, bubble_radial, eval_bubble,
    eval_kernel, kernel_profile, kernel_residual, solve_negative_mode,
)
from blowup_forge.errors import DomainError

# independent arithmetic: (n(n-2))^{(n-2)/4} at n = 5
U0 = (5.0 * 3.0) ** 0.75


@pytest.fixture(scope="module")
def negative_mode():
    return solve_negative_mode()


def test_centre_value():
    assert abs(eval_bubble(np.zeros(5), BubbleState(1.0, np.zeros(5))) - 7.621991) < 1e-6
    assert abs(eval_bubble(np.zeros(5), BubbleState(1.0, np.zeros(5))) - U0) < 1e-13


@given(st.floats(0.01, 100.0))
def test_scaling_at_centre(lam):
    xi = np.array([0.3, -1.0, 0.0, 2.0, 0.5])
    v = eval_bubble(xi, BubbleState(lam, xi))
    assert math.isclose(v, lam ** -1.5 * U0, rel_tol=1e-13)


def test_tail_law():
    x = np.array([1e3, 0, 0, 0, 0])
    v = eval_bubble(x, BubbleState(1.0, np.zeros(5)))
    assert abs(1e9 * v / U0 - 1.0) < 1e-5


@settings(max_examples=50)
@given(st.floats(0.05, 20.0), st.floats(0.05, 20.0),
       st.lists(st.floats(-3, 3), min_size=5, max_size=5),
       st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_rescaling_covariance(lam, mu, x, xi):
    x, xi = np.array(x), np.array(xi)
    lhs = eval_bubble(lam * x, BubbleState(lam * mu, lam * xi))
    rhs = lam ** -1.5 * eval_bubble(x, BubbleState(mu, xi))
    assert math.isclose(lhs, rhs, rel_tol=1e-12)


def test_dilation_kernel_centre():
    assert math.isclose(eval_kernel(6, np.zeros(5)), 1.5 * U0, rel_tol=1e-14)


def test_translation_kernel_parity():
    y = np.array([1.0, 2.0, 0, 0, 0])
    assert eval_kernel(1, -y) == -eval_kernel(1, y)


@pytest.mark.parametrize("j", range(1, 7))
def test_kernel_annihilation(j):
    rep = kernel_residual(j)
    assert rep.sup_residual <= 1e-6
    assert rep.richardson_estimate <= 1e-6


def test_apply_L0_translation_mode():
    prof, mode = kernel_profile(1, RadialGrid())
    assert mode == 1
    res = apply_L0(prof, 1)
    r = res.r
    assert np.max(np.abs(res.values[r <= 50])) <= 1e-6


def test_steady_state_identity():
    grid = RadialGrid()
    prof = RadialProfile.from_function(bubble_radial, grid)
    res = apply_L0(prof, 0)
    r = res.r
    m = r <= 50
    target = (P_EXP - 1.0) * bubble_radial(r[m]) ** P_EXP
    assert np.max(np.abs(res.values[m] - target)) <= 1e-6


def test_negative_mode_sign_and_normalisation(negative_mode):
    assert negative_mode.eigenvalue < 0
    assert negative_mode.profile(0.0) == pytest.approx(1.0, abs=1e-12)


def test_negative_mode_tail(negative_mode):
    r = np.linspace(15.0, 30.0, 61)
    slope = np.polyfit(r, np.log(r ** 2 * np.abs(negative_mode.profile(r))), 1)[0]
    assert abs(slope / -math.sqrt(-negative_mode.eigenvalue) - 1.0) <= 0.02


def test_negative_mode_deterministic(negative_mode):
    assert solve_negative_mode().eigenvalue == negative_mode.eigenvalue


def test_negative_mode_rejects_short_domain():
    with pytest.raises(DomainError):
        solve_negative_mode(r_max=10.0)


def test_alpha_constant():
    assert ALPHA == 15.0 ** 0.75


def test_profile_csv_roundtrip():
    prof = RadialProfile.from_function(bubble_radial, RadialGrid(20.0, 200))
    back = RadialProfile.from_csv(prof.to_csv())
    assert np.array_equal(back.r, prof.r) and np.array_equal(back.values, prof.values)


def test_profile_rejects_bad_nodes():
    with pytest.raises(DomainError):
        RadialProfile(np.array([0.0, 2.0, 1.0]), np.zeros(3))


def test_kernel_index_checked():
    with pytest.raises(DomainError):
        eval_kernel(7, np.zeros(5))
