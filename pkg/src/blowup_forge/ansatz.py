"""Approximate two-bubble solution and its residual terms.

The ansatz is

    u_app = U_{λ1,ξ1} + U_{λ2,ξ2} - Z1 η1 - Z2,

with ``Z1 = M (T-t)(1 - |z|²/10)`` (z = x/√(T-t)) cut off by
``η1 = η(|x| / (T-t)^{1/8})`` and ``Z2`` the heat evolution of an odd,
compactly supported seed.  This module evaluates these fields with their
first and second derivatives, the error terms produced by moving bubbles,
the inner sources ``H_i``, the orthogonality residuals against the kernels,
the outer source ``G`` split into its groups, and the empirical majorant
ratios of those groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .bubble_core import (
    ALPHA, N_DIM, P_EXP, bubble_dr, bubble_drr, bubble_radial, dilation_radial, eval_kernel,
    potential,
)
from .errors import DomainError, PreconditionError, PrecisionError, ForgeError

# ---------------------------------------------------------------------------
# cutoff


def smoothstep(x):
    """Integrated smoothstep of order 3, ``35x⁴ - 84x⁵ + 70x⁶ - 20x⁷`` on [0, 1]."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x ** 4 * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)))


def _smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 140.0 * xc ** 3 * (1.0 - xc) ** 3, 0.0)


def _smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xc = np.clip(x, 0.0, 1.0)
    return np.where(inside, 420.0 * xc ** 2 * (1.0 - xc) ** 2 * (1.0 - 2.0 * xc), 0.0)


def eta(s):
    """Cutoff equal to 1 for s ≤ 1, 0 for s ≥ 2, C³ in between."""
    return 1.0 - smoothstep(np.asarray(s, dtype=float) - 1.0)


def eta_d1(s):
    return -_smoothstep_d1(np.asarray(s, dtype=float) - 1.0)


def eta_d2(s):
    return -_smoothstep_d2(np.asarray(s, dtype=float) - 1.0)


def _radial_field_derivs(f, f1, f2, x, r):
    """Value, gradient and Laplacian of ``f(|x|)`` from radial derivatives."""
    safe = np.where(r > 0, r, 1.0)
    grad = (f1 / safe)[..., None] * x
    lap = np.where(r > 0, f2 + 4.0 * f1 / safe, 5.0 * f2)
    return f, grad, lap


# ---------------------------------------------------------------------------
# heat evolution of radial bumps


def _scaled_bessel(a):
    """Return g_n(a) = exp(-a) i_n(a) / a^n for n = 1, 2, 3.

    ``i_n`` are the modified spherical Bessel functions of the first kind.
    """
    a = np.asarray(a, dtype=float)
    g = np.empty((3,) + a.shape)
    small = a < 8.0
    if np.any(small):
        s = a[small]
        q = 0.5 * s * s
        e = np.exp(-s)
        for n in (1, 2, 3):
            term = np.full_like(s, 1.0 / float(np.prod(np.arange(1, 2 * n + 2, 2))))
            total = term.copy()
            for k in range(1, 60):
                term = term * q / (k * (2 * n + 2 * k + 1))
                total += term
            g[n - 1][small] = e * total
    big = ~small
    if np.any(big):
        s = a[big]
        e2 = np.exp(-2.0 * s)
        i0 = (1.0 - e2) / (2.0 * s)
        i1 = (s * (1.0 + e2) - (1.0 - e2)) / (2.0 * s * s)
        i2 = i0 - 3.0 * i1 / s
        i3 = i1 - 5.0 * i2 / s
        g[0][big] = i1 / s
        g[1][big] = i2 / s ** 2
        g[2][big] = i3 / s ** 3
    return g


_GL_X, _GL_W = leggauss(96)
_T_SEED = 1e-18


def heat_radial_bump(profile: Callable, radius: float, r, t: float):
    """Heat evolution in R^5 of a radial function supported in a ball.

    Parameters
    ----------
    profile : callable
        Radial seed ``b(s)``, supported in ``s ≤ radius``.
    radius : float
        Support radius.
    r : array_like
        Distances from the bump centre.
    t : float
        Time, ``t ≥ 0``.

    Returns
    -------
    (B, B_r, B_rr) : tuple of ndarray
        Value and first two radial derivatives of ``e^{tΔ} b`` at ``r``.
    """
    r = np.asarray(r, dtype=float)
    if t < 0:
        raise DomainError("time must be non-negative")
    if t == 0:
        raise DomainError("use the seed directly at t = 0")
    shape = r.shape
    r = r.ravel()
    width = 12.0 * math.sqrt(t)
    lo = np.clip(r - width, 0.0, radius)
    hi = np.clip(r + width, 0.0, radius)
    half = 0.5 * (hi - lo)
    s = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_X[None, :]
    w = half[:, None] * _GL_W[None, :]
    rr = r[:, None]
    four_t = 4.0 * t
    a = rr * s / (2.0 * t)
    g1, g2, g3 = _scaled_bessel(a)
    E = np.exp(-(rr - s) ** 2 / four_t)
    c = 8.0 * math.pi ** 2 * (math.pi * four_t) ** -2.5
    base = profile(s) * s ** 4 * E * w * c
    B = np.sum(base * g1, axis=1)
    B_r_over_r = np.sum(base * (-g1 / (2.0 * t) + (s * s / four_t ** 2 * 4.0) * g2), axis=1)
    B_rr = np.sum(base * ((rr ** 2 / (4.0 * t * t) - 1.0 / (2.0 * t)) * g1
                          - 2.0 * (rr / (2.0 * t)) * (s / (2.0 * t)) * a * g2
                          + (s / (2.0 * t)) ** 2 * (g2 + a * a * g3)), axis=1)
    return B.reshape(shape), (B_r_over_r * r).reshape(shape), B_rr.reshape(shape), B_r_over_r.reshape(shape)


# ---------------------------------------------------------------------------
# seed and fields


@dataclass(frozen=True)
class BumpSeed:
    """Signed sum of C² bumps ``A (1 - |x-c|²/ρ²)³`` of common radius.

    The default places a positive bump at ``q`` and a negative one at
    ``-q``, which makes the seed odd.
    """

    q: Tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 0.0)
    radius: float = 0.9
    amplitude: float = 1e-2
    centers: Optional[Tuple[Tuple[float, ...], ...]] = None
    signs: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        object.__setattr__(self, "q", q)
        if self.centers is None:
            object.__setattr__(self, "centers", (q, tuple(-v for v in q)))
            object.__setattr__(self, "signs", (1.0, -1.0))
        if self.radius <= 0 or self.amplitude < 0:
            raise DomainError("bump radius must be positive and amplitude non-negative")
        c = np.asarray(self.centers, dtype=float)
        if c.shape[1:] != (N_DIM,) or len(self.signs) != len(c):
            raise DomainError("centres must be points of R^5 with one sign each")

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        return self.amplitude * np.clip(1.0 - (s / self.radius) ** 2, 0.0, None) ** 3

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, sg in zip(self.centers, self.signs):
            out = out + sg * self.profile(np.linalg.norm(x - np.asarray(c), axis=-1))
        return out

    def sup_norm(self, n: int = 4001) -> float:
        """Sup of |seed| sampled on a dense grid through each bump centre."""
        s = np.linspace(0.0, self.radius, n)
        best = 0.0
        centers = np.asarray(self.centers)
        for c in centers:
            for d in np.eye(N_DIM):
                pts = c[None, :] + s[:, None] * d[None, :]
                best = max(best, float(np.max(np.abs(self(pts)))))
        return best

    def check_odd(self, n_samples: int = 2000, seed: int = 0, tol: float = 1e-12):
        rng = np.random.default_rng(seed)
        scale = float(np.max(np.linalg.norm(np.asarray(self.centers), axis=1))) + self.radius
        x = rng.uniform(-scale, scale, size=(n_samples, N_DIM))
        defect = float(np.max(np.abs(self(x) + self(-x))))
        if defect > tol * max(self.amplitude, 1e-300):
            raise PreconditionError(f"seed is not odd (defect {defect:.3e})")
        return defect


@lru_cache(maxsize=32)
def _odd_checked(seed: BumpSeed) -> float:
    return seed.check_odd()


def eval_Z2(x, t: float, seed: BumpSeed = BumpSeed(), derivatives: bool = False):
    """Heat evolution of the seed, evaluated at points ``x`` (shape (..., 5)).

    With ``derivatives`` the gradient (shape (..., 5)) and Laplacian are
    returned as well.  The evaluation is exact up to the Gauss-Legendre
    quadrature of the radial convolution.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != N_DIM:
        raise DomainError("points must lie in R^5")
    if t < 0:
        raise DomainError("time must be non-negative")
    _odd_checked(seed)
    val = np.zeros(x.shape[:-1])
    grad = np.zeros(x.shape)
    lap = np.zeros(x.shape[:-1])
    for c, sg in zip(seed.centers, seed.signs):
        d = x - np.asarray(c)
        r = np.linalg.norm(d, axis=-1)
        if t <= _T_SEED * seed.radius ** 2:
            # the heat flow moves the seed by O(t) here, below rounding
            rho = seed.radius
            u = np.clip(1.0 - (r / rho) ** 2, 0.0, None)
            B = seed.amplitude * u ** 3
            B_r_over_r = -6.0 * seed.amplitude * u ** 2 / rho ** 2
            B_rr = seed.amplitude * (-6.0 * u ** 2 / rho ** 2 + 24.0 * r ** 2 * u / rho ** 4)
        else:
            B, _, B_rr, B_r_over_r = heat_radial_bump(seed.profile, seed.radius, r, t)
        val = val + sg * B
        grad = grad + sg * B_r_over_r[..., None] * d
        lap = lap + sg * (B_rr + 4.0 * B_r_over_r)
    if derivatives:
        return val, grad, lap
    return val


@dataclass(frozen=True)
class PsiModel:
    """Outer remainder model: the admissible envelope times a sign field.

    Attributes
    ----------
    delta0 : float
        Envelope amplitude.
    T : float
        Blow-up time.
    sign : float or callable
        Constant multiplier in [-1, 1] or a callable ``sign(x, t)``.
    mode : {"bound", "field"}
        ``"bound"``: the envelope only enters error bookkeeping and the
        actual field is zero.  ``"field"``: ``sign * envelope`` is used as
        the actual remainder.
    """

    delta0: float
    T: float
    sign: object = 1.0
    mode: str = "bound"

    def __post_init__(self):
        if self.mode not in ("bound", "field"):
            raise DomainError("psi mode must be 'bound' or 'field'")

    def envelope(self, x, t, sigma=None):
        x = np.asarray(x, dtype=float)
        sig = self.T - t if sigma is None else sigma
        r2 = np.sum(x * x, axis=-1)
        z4 = (r2 / sig) ** 2
        inner = np.sqrt(r2 / sig) <= sig ** -0.25
        return np.where(inner, self.delta0 * sig * (1.0 + z4), self.delta0 / (1.0 + r2))

    def _sign(self, x, t):
        if callable(self.sign):
            return np.asarray(self.sign(x, t), dtype=float)
        return float(self.sign)

    def field(self, x, t, derivatives=False, sigma=None):
        """The remainder used as an actual field (zero in ``bound`` mode)."""
        x = np.asarray(x, dtype=float)
        if self.mode == "bound":
            z = np.zeros(x.shape[:-1])
            return (z, np.zeros(x.shape), z) if derivatives else z
        val = self._sign(x, t) * self.envelope(x, t, sigma)
        if not derivatives:
            return val
        if callable(self.sign):
            raise DomainError("derivatives need a constant sign")
        s = float(self.sign)
        sig = self.T - t if sigma is None else sigma
        r2 = np.sum(x * x, axis=-1)
        inner = np.sqrt(r2 / sig) <= sig ** -0.25
        # inner: δ0 σ + δ0 |x|⁴/σ ; outer: δ0 /(1+|x|²)
        g_in = (4.0 * self.delta0 * r2 / sig)[..., None] * x
        l_in = 4.0 * (N_DIM + 2) * self.delta0 * r2 / sig
        q = 1.0 + r2
        g_out = (-2.0 * self.delta0 / q ** 2)[..., None] * x
        l_out = self.delta0 * (-2.0 * N_DIM / q ** 2 + 8.0 * r2 / q ** 3)
        grad = s * np.where(inner[..., None], g_in, g_out)
        lap = s * np.where(inner, l_in, l_out)
        return val, grad, lap


@dataclass(frozen=True)
class AnsatzFields:
    """Given fields of the ansatz.

    Attributes
    ----------
    M, T : float
        Amplitude of Z1 and blow-up time.
    seed : BumpSeed
        Initial datum of Z2 (its centre ``q`` is the second blow-up point).
    R : float
        Inner radius; kernels are integrated over the ball of radius 2R.
    psi_sign : float
        Sign field of the remainder model.
    psi_mode : str
        See :class:`PsiModel`.
    include_z2 : bool
        Switch Z2 off (for degenerate checks).
    drop_quadratic : bool
        Drop the ``-M|x|²/10`` part of Z1.
    """

    M: float = 1e-2
    T: float = 1e-2
    seed: BumpSeed = field(default_factory=BumpSeed)
    R: float = 100.0
    psi_sign: float = 1.0
    psi_mode: str = "bound"
    include_z2: bool = True
    drop_quadratic: bool = False

    def __post_init__(self):
        if self.M <= 0 or self.T <= 0:
            raise DomainError("M and T must be positive")
        if not self.R >= 10:
            raise DomainError("R must be at least 10")

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.seed.q)

    @cached_property
    def z2_sup(self) -> float:
        """‖Z2‖∞ over all times; the heat flow attains it at t = 0."""
        return self.seed.sup_norm() if self.include_z2 else 0.0

    @property
    def delta0(self) -> float:
        return self.z2_sup / 10.0

    @cached_property
    def psi(self) -> PsiModel:
        return PsiModel(self.delta0, self.T, self.psi_sign, self.psi_mode)

    def _sigma(self, t, sigma):
        return self.T - t if sigma is None else sigma

    def _check_t(self, t):
        if not (0.0 <= t < self.T):
            raise DomainError(f"time {t} outside [0, T)")

    def Z1(self, x, t, derivatives=False, sigma=None):
        """M (T-t) - M|x|²/10 (value, gradient, Laplacian)."""
        x = np.asarray(x, dtype=float)
        c = 0.0 if self.drop_quadratic else self.M / 10.0
        r2 = np.sum(x * x, axis=-1)
        val = self.M * self._sigma(t, sigma) - c * r2
        if not derivatives:
            return val
        return val, -2.0 * c * x, np.full(val.shape, -2.0 * c * N_DIM)

    def eta1(self, x, t, derivatives=False, sigma=None):
        x = np.asarray(x, dtype=float)
        L = self._sigma(t, sigma) ** 0.125
        r = np.linalg.norm(x, axis=-1)
        val = eta(r / L)
        if not derivatives:
            return val
        return _radial_field_derivs(val, eta_d1(r / L) / L, eta_d2(r / L) / L ** 2, x, r)

    def eta1_t(self, x, t, sigma=None):
        """Time derivative of η1."""
        x = np.asarray(x, dtype=float)
        sig = self._sigma(t, sigma)
        L = sig ** 0.125
        r = np.linalg.norm(x, axis=-1)
        # d/dt (r / L) = r / (8 σ L)
        return eta_d1(r / L) * r / (8.0 * sig * L)

    def Z1_eta(self, x, t, derivatives=False, sigma=None):
        if not derivatives:
            return self.Z1(x, t, sigma=sigma) * self.eta1(x, t, sigma=sigma)
        z, gz, lz = self.Z1(x, t, True, sigma)
        e, ge, le = self.eta1(x, t, True, sigma)
        grad = gz * e[..., None] + z[..., None] * ge
        lap = lz * e + 2.0 * np.sum(gz * ge, axis=-1) + z * le
        return z * e, grad, lap

    def Z2(self, x, t, derivatives=False):
        x = np.asarray(x, dtype=float)
        if not self.include_z2:
            z = np.zeros(x.shape[:-1])
            return (z, np.zeros(x.shape), z) if derivatives else z
        return eval_Z2(x, t, self.seed, derivatives)

    def forcing(self, x, t, derivatives=False, sigma=None):
        """F = -Z1 η1 - Z2 + ψ, the field seen by both bubbles.

        ``sigma`` overrides ``T - t`` where the distance to the blow-up time
        is needed below the resolution of ``t``.
        """
        if not derivatives:
            return (-self.Z1_eta(x, t, sigma=sigma) - self.Z2(x, t)
                    + self.psi.field(x, t, sigma=sigma))
        a = self.Z1_eta(x, t, True, sigma)
        b = self.Z2(x, t, True)
        c = self.psi.field(x, t, True, sigma)
        return tuple(-ai - bi + ci for ai, bi, ci in zip(a, b, c))

    def components(self, x, t, sigma=None):
        """Separate values of the three forcing components."""
        return {"Z1": -self.Z1_eta(x, t, sigma=sigma), "Z2": -self.Z2(x, t),
                "psi": self.psi.field(x, t, sigma=sigma)}


# ---------------------------------------------------------------------------
# parameters and the approximate solution


@dataclass(frozen=True)
class FrozenParameters:
    """Constant scales and centres with zero derivatives.

    Offers the accessor interface of a modulation trajectory, which is
    enough for pointwise residual evaluations with frozen parameters.
    """

    T: float
    lams: Tuple[float, float]
    xis: Tuple[Tuple[float, ...], Tuple[float, ...]]
    fields: Optional["AnsatzFields"] = None

    def lam_at(self, i, t=None, sigma=None):
        return np.array([float(self.lams[i - 1])])

    def lam_dot_at(self, i, t=None, sigma=None):
        return np.array([0.0])

    def xi_at(self, i, t=None, sigma=None):
        return np.asarray(self.xis[i - 1], dtype=float)[None, :]

    def xi_dot_at(self, i, t=None, sigma=None):
        return np.zeros((1, N_DIM))


def _time(T, t, sigma):
    """Validated (t, σ) pair; σ wins when both are given."""
    if sigma is None:
        if t is None or not (0.0 <= t < T):
            raise DomainError(f"time {t} outside [0, T)")
        return float(t), float(T - t)
    if not (0.0 < sigma <= T):
        raise DomainError(f"distance to blow-up {sigma} outside (0, T]")
    return float(T - sigma), float(sigma)


def _params(traj, i, t, sigma):
    t, sig = _time(traj.T, t, sigma)
    lam = float(traj.lam_at(i, sigma=sig)[0])
    lam_dot = float(traj.lam_dot_at(i, sigma=sig)[0])
    xi = np.asarray(traj.xi_at(i, sigma=sig))[0]
    xi_dot = np.asarray(traj.xi_dot_at(i, sigma=sig))[0]
    if not lam > 0:
        raise DomainError("scale must be positive")
    return lam, lam_dot, xi, xi_dot, t, sig


def _bubble(x, lam, xi, derivatives=False):
    y = (x - xi) / lam
    r = np.linalg.norm(y, axis=-1)
    u = bubble_radial(r)
    val = lam ** -1.5 * u
    if not derivatives:
        return val
    safe = np.where(r > 0, r, 1.0)
    grad = lam ** -2.5 * (bubble_dr(r) / safe)[..., None] * y
    lap = -lam ** -3.5 * u ** P_EXP
    return val, grad, lap


def assemble_u_app(x, t, traj, fields: AnsatzFields, derivatives: bool = False, sigma=None,
                   components: bool = False):
    """``U_{λ1,ξ1} + U_{λ2,ξ2} - Z1 η1 - Z2`` at points ``x``.

    With ``derivatives`` returns (value, gradient, Laplacian); with
    ``components`` returns a dict of the four summands instead.
    """
    x = np.asarray(x, dtype=float)
    parts = {}
    for i in (1, 2):
        lam, _, xi, _, t_, sig = _params(traj, i, t, sigma)
        parts[f"bubble{i}"] = _bubble(x, lam, xi, derivatives)
    parts["Z1_eta"] = tuple(-v for v in fields.Z1_eta(x, t_, True, sig)) if derivatives \
        else -fields.Z1_eta(x, t_, sigma=sig)
    parts["Z2"] = tuple(-v for v in fields.Z2(x, t_, True)) if derivatives else -fields.Z2(x, t_)
    if components:
        return parts
    if not derivatives:
        return sum(parts.values())
    return tuple(sum(p[k] for p in parts.values()) for k in range(3))


def error_E(i: int, y, t, traj, sigma=None):
    """``λ λ' W6(y) + λ ξ'·∇U(y)`` in the frame of bubble ``i``."""
    lam, lam_dot, _, xi_dot, _, _ = _params(traj, i, t, sigma)
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(y, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    grad_u = (bubble_dr(r) / safe)[..., None] * y
    return lam * lam_dot * dilation_radial(r) + lam * (grad_u @ xi_dot)


def source_H(i: int, y, t, traj, fields: AnsatzFields, sigma=None):
    """Inner source ``λ^{3/2} pU^{p-1}(y) F(ξ + λy) + E_i(y)``.

    ``F = -Z1 η1 - Z2 + ψ`` is the field felt by the bubble (ψ vanishes
    unless the remainder model runs in ``field`` mode).
    """
    lam, _, xi, _, t_, sig = _params(traj, i, t, sigma)
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(y, axis=-1)
    F = fields.forcing(xi + lam * y, t_, sigma=sig)
    return lam ** 1.5 * potential(r) * F + error_E(i, y, t, traj, sigma=sig)


# ---------------------------------------------------------------------------
# orthogonality


@lru_cache(maxsize=8)
def ball_rule(radius: float, panels: int = 12, order: int = 16, angular=(3, 3, 3, 6)):
    """Product rule on the ball of R^5 in hyperspherical coordinates.

    Radial panels are uniform in ``log(1 + r)``; polar angles use
    Gauss-Jacobi rules matched to the sin-power weights and the azimuth a
    uniform rule.  Returns points (N, 5) and weights (N,).
    """
    from scipy.special import roots_jacobi

    x, w = leggauss(order)
    edges = np.linspace(0.0, math.log1p(radius), panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    r = np.expm1(s)
    wr = ws * np.exp(s) * r ** 4
    n1, n2, n3, n4 = angular
    c1, w1 = roots_jacobi(n1, 1.0, 1.0)
    c2, w2 = roots_jacobi(n2, 0.5, 0.5)
    c3, w3 = leggauss(n3)
    ph = 2.0 * math.pi * np.arange(n4) / n4
    w4 = np.full(n4, 2.0 * math.pi / n4)
    A = np.meshgrid(c1, c2, c3, ph, indexing="ij")
    W = np.meshgrid(w1, w2, w3, w4, indexing="ij")
    a1, a2, a3, a4 = (g.ravel() for g in A)
    wang = np.prod(np.stack([g.ravel() for g in W]), axis=0)
    s1, s2, s3 = np.sqrt(1 - a1 ** 2), np.sqrt(1 - a2 ** 2), np.sqrt(1 - a3 ** 2)
    dirs = np.stack([a1, s1 * a2, s1 * s2 * a3, s1 * s2 * s3 * np.cos(a4),
                     s1 * s2 * s3 * np.sin(a4)], axis=1)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, N_DIM)
    wts = (wr[:, None] * wang[None, :]).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def _check_provenance(traj, fields):
    own = getattr(traj, "fields", None)
    if own is None or own != fields:
        from .errors import ConfigurationError
        raise ConfigurationError("trajectory was not produced with these fields")


def orthogonality_matrix(t, traj, fields: AnsatzFields, sigma=None, rule=None):
    """Normalized residuals ``∫_{B2R} H_i W_j / ∫_{B2R} |H_i||W_j|``.

    Returns
    -------
    ratio : ndarray, shape (2, 6)
        Signed normalized residuals.
    raw : ndarray, shape (2, 6)
        The integrals themselves.
    """
    _check_provenance(traj, fields)
    if not math.isfinite(fields.R):
        raise DomainError("orthogonality is checked on a bounded ball")
    pts, wts = ball_rule(2.0 * fields.R) if rule is None else rule
    ratio = np.zeros((2, 6))
    raw = np.zeros((2, 6))
    for i in (1, 2):
        H = source_H(i, pts, t, traj, fields, sigma=sigma)
        for j in range(1, 7):
            W = eval_kernel(j, pts)
            num = math.fsum(H * W * wts)
            mass = math.fsum(np.abs(H * W) * wts)
            raw[i - 1, j - 1] = num
            ratio[i - 1, j - 1] = num / mass if mass > 0 else 0.0
    return ratio, raw


def orthogonality_residual(i: int, j: int, t, traj, fields: AnsatzFields, sigma=None) -> float:
    """Normalized residual of the orthogonality of ``H_i`` against ``W_j``."""
    if i not in (1, 2) or j not in range(1, 7):
        raise DomainError("i must be 1 or 2 and j in 1..6")
    return float(orthogonality_matrix(t, traj, fields, sigma)[0][i - 1, j - 1])


# ---------------------------------------------------------------------------
# inner corrections used by the outer source


@dataclass(frozen=True)
class PhiEnvelope:
    """Radial inner correction ``C λ^ν R^{6-a} / (1 + |y|⁶)``."""

    nu: float
    R: float
    a: float = 0.5
    C: float = 1.0

    def evaluate(self, y, lam, lam_dot):
        """Value, y-gradient, y-Laplacian and time derivative at fixed y."""
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        K = self.C * lam ** self.nu * self.R ** (6.0 - self.a)
        with np.errstate(over="ignore", divide="ignore"):
            inv = np.where(r > 1.0, 1.0 / r, 1.0)
            w = np.where(r > 1.0, inv ** 6 / (1.0 + inv ** 6), 1.0 / (1.0 + r ** 6))
            # r⁴ w and r⁵ w without overflow
            r4w = np.where(r > 1.0, inv ** 2 / (1.0 + inv ** 6), r ** 4 * w)
            r5w = np.where(r > 1.0, inv / (1.0 + inv ** 6), r ** 5 * w)
        f = K * w
        f1 = -6.0 * K * r5w * w
        f2 = K * w * (-30.0 * r4w + 72.0 * r5w * r5w)
        val, grad, lap = _radial_field_derivs(f, f1, f2, y, r)
        return val, grad, lap, self.nu * lam_dot / lam * val


@dataclass(frozen=True)
class PhiZero:
    """Vanishing inner correction."""

    def evaluate(self, y, lam, lam_dot):
        y = np.asarray(y, dtype=float)
        z = np.zeros(y.shape[:-1])
        return z, np.zeros(y.shape), z, z


def default_phis(fields: AnsatzFields, a: float = 0.5):
    R = fields.R if math.isfinite(fields.R) else 100.0
    return (PhiEnvelope(1.75, R, a), PhiEnvelope(1.5, R, a))


def _eta_R(y, R):
    r = np.linalg.norm(y, axis=-1)
    return _radial_field_derivs(eta(r / R), eta_d1(r / R) / R, eta_d2(r / R) / R ** 2, y, r)


def _pow_p(v):
    return np.sign(v) * np.abs(v) ** P_EXP


def _rel_power_minus_one(s, k):
    """``|1+s|^{k-1}(1+s) - 1`` without cancellation for small ``s``."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s > -1.0
    out[pos] = np.expm1(k * np.log1p(s[pos]))
    neg = ~pos
    out[neg] = np.sign(1.0 + s[neg]) * np.abs(1.0 + s[neg]) ** k - 1.0
    return out


def _taylor_rest(s, k):
    """``|1+s|^{k-1}(1+s) - 1 - k s`` accurate for all ``s``."""
    s = np.asarray(s, dtype=float)
    out = _rel_power_minus_one(s, k) - k * s
    small = np.abs(s) < 1e-3
    if np.any(small):
        ss = s[small]
        acc = np.zeros_like(ss)
        coef = k * (k - 1.0) / 2.0
        term = ss * ss
        for m in range(2, 9):
            acc += coef * term
            coef *= (k - m) / (m + 1.0)
            term = term * ss
        out[small] = acc
    return out


def nonlinear_remainder(U1, U2, rest):
    """``f(U1+U2+r) - f(U1) - f(U2) - f'(U1) r - f'(U2) r`` with ``f(u) = |u|^{p-1}u``.

    Evaluated relative to the dominant bubble so that the large parts
    cancel analytically rather than in floating point.
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    rest = np.asarray(rest, dtype=float)
    big = np.maximum(U1, U2)
    small = np.minimum(U1, U2)
    a = big + small
    safe_a = np.where(a > 0, a, 1.0)
    # f(a + r) - f(a) - f'(a) r
    part1 = np.where(a > 0, safe_a ** P_EXP * _taylor_rest(rest / safe_a, P_EXP), _pow_p(rest))
    safe_b = np.where(big > 0, big, 1.0)
    s = small / safe_b
    # f(a) - f(big) - f(small)
    part2 = np.where(big > 0, safe_b ** P_EXP * _rel_power_minus_one(s, P_EXP) - small ** P_EXP, 0.0)
    # (f'(a) - f'(big) - f'(small)) r
    part3 = np.where(big > 0, P_EXP * (safe_b ** (P_EXP - 1) * _rel_power_minus_one(s, P_EXP - 1)
                                       - small ** (P_EXP - 1)), 0.0) * rest
    return part1 + part2 + part3


# ---------------------------------------------------------------------------
# outer source


def _eta1_derivs(fields, x, sig):
    """η1 with its gradient, Laplacian and time derivative."""
    e, ge, le = fields.eta1(x, fields.T - sig, True, sig)
    return e, ge, le, fields.eta1_t(x, fields.T - sig, sig)


def outer_G(x, t, traj, fields: AnsatzFields, phis=None, sigma=None) -> Dict[str, np.ndarray]:
    """Outer source split into its groups at points ``x``.

    Keys: ``coupling_i`` (potential tail acting on the given fields),
    ``A_i`` and ``B_i`` (cutoff and motion terms of the inner
    corrections), ``E_tail_i`` (bubble motion error outside the inner
    region), ``N_nonlinear`` (superlinear remainder), ``N_cross``
    (potential of one bubble acting on the other's correction) and
    ``N_cutoff`` (collision of η1 with Z1).
    """
    x = np.asarray(x, dtype=float)
    phis = default_phis(fields) if phis is None else phis
    t_, sig = _time(fields.T, t, sigma)
    R = fields.R if math.isfinite(fields.R) else 100.0
    F = fields.forcing(x, t_, sigma=sig)
    out = {}
    bub = []
    theta = []
    for i in (1, 2):
        lam, ld, xi, xd, _, _ = _params(traj, i, t_, sig)
        y = (x - xi) / lam
        r = np.linalg.norm(y, axis=-1)
        e, ge, le = _eta_R(y, R)
        ph, gph, lph, _ = phis[i - 1].evaluate(y, lam, ld)
        out[f"coupling_{i}"] = lam ** -2 * (1.0 - e) * potential(r) * F
        out[f"A_{i}"] = lam ** -3.5 * (le * ph + 2.0 * np.sum(ge * gph, axis=-1))
        y_grad_phi = np.sum(y * gph, axis=-1)
        out[f"B_{i}"] = lam ** -2.5 * (ld * (y_grad_phi + 1.5 * ph) * e + (gph @ xd) * e
                                       + (ld * np.sum(y * ge, axis=-1) + ge @ xd) * ph)
        out[f"E_tail_{i}"] = lam ** -3.5 * error_E(i, y, t_, traj, sigma=sig) * (1.0 - e)
        bub.append(lam ** -1.5 * bubble_radial(r))
        theta.append(lam ** -1.5 * ph * e)
    psi = fields.psi.field(x, t_, sigma=sig)
    rest = theta[0] + theta[1] + F
    out["N_nonlinear"] = nonlinear_remainder(bub[0], bub[1], rest)
    out["N_cross"] = P_EXP * (bub[0] ** (P_EXP - 1) * theta[1] + bub[1] ** (P_EXP - 1) * theta[0])
    z, gz, lz = fields.Z1(x, t_, True, sig)
    e1, ge1, le1, et1 = _eta1_derivs(fields, x, sig)
    z_t = -fields.M
    out["N_cutoff"] = e1 * (z_t - lz) + z * et1 - 2.0 * np.sum(gz * ge1, axis=-1) - z * le1
    return out


def _inner_residuals(x, t, traj, fields, phis, sig):
    """``Σ η_{R,i} λ_i^{-7/2} (-λ²∂tφ + Δφ + pU^{p-1}φ + H_i)`` at ``x``."""
    R = fields.R if math.isfinite(fields.R) else 100.0
    total = np.zeros(x.shape[:-1])
    for i in (1, 2):
        lam, ld, xi, xd, t_, _ = _params(traj, i, None, sig)
        y = (x - xi) / lam
        r = np.linalg.norm(y, axis=-1)
        e, _, _ = _eta_R(y, R)
        ph, _, lph, dph = phis[i - 1].evaluate(y, lam, ld)
        H = source_H(i, y, None, traj, fields, sigma=sig)
        total += e * lam ** -3.5 * (-lam ** 2 * dph + lph + potential(r) * ph + H)
    return total


def _u_full(x, traj, fields, phis, sig):
    R = fields.R if math.isfinite(fields.R) else 100.0
    u = assemble_u_app(x, None, traj, fields, sigma=sig)
    for i in (1, 2):
        lam, ld, xi, _, _, _ = _params(traj, i, None, sig)
        y = (x - xi) / lam
        e = eta(np.linalg.norm(y, axis=-1) / R)
        u = u + lam ** -1.5 * phis[i - 1].evaluate(y, lam, ld)[0] * e
    return u + fields.psi.field(x, fields.T - sig, sigma=sig)


@dataclass
class ReassemblyReport:
    """Comparison of the directly computed ``S(u)`` with its grouped form."""

    n: int
    max_ratio: float
    max_abs: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0


def reassembly_sample(x0, sig, traj, fields: AnsatzFields, phis=None):
    """Direct and grouped ``S(u)`` at (a lattice point next to) ``x0``.

    Returns
    -------
    (direct, grouped, budget) : tuple of float
    """
    phis = default_phis(fields) if phis is None else phis
    x0 = np.asarray(x0, dtype=float)
    eps = np.finfo(float).eps
    scales = [sig ** 0.125 * 0.5, 0.1]
    for i in (1, 2):
        lam = float(traj.lam_at(i, sigma=sig)[0])
        xi = np.asarray(traj.xi_at(i, sigma=sig))[0]
        scales.append(lam * (1.0 + np.linalg.norm(x0 - xi) / lam))
    # power-of-two steps on a lattice containing x0 and σ keep every stencil offset exact
    h = 2.0 ** math.floor(math.log2(0.02 * min(scales)))
    ht = 2.0 ** math.floor(math.log2(1e-3 * sig))
    x0 = np.round(x0 / h) * h
    sig = round(sig / ht) * ht

    def S_fd(hx, hs):
        pts = [x0]
        for a in range(N_DIM):
            for m in (-2, -1, 1, 2):
                p = x0.copy()
                p[a] += m * hx
                pts.append(p)
        u = _u_full(np.array(pts), traj, fields, phis, sig)
        u0 = u[0]
        lap = 0.0
        for a in range(N_DIM):
            um2, um1, up1, up2 = u[1 + 4 * a:5 + 4 * a]
            lap += (-up2 + 16 * up1 - 30 * u0 + 16 * um1 - um2) / (12 * hx * hx)
        us = [_u_full(x0[None, :], traj, fields, phis, sig + m * hs)[0] for m in (-2, -1, 1, 2)]
        # d/dt = -d/dσ
        u_t = -(-us[3] + 8 * us[2] - 8 * us[1] + us[0]) / (12 * hs)
        noise = eps * (30 * N_DIM * abs(u0) / hx ** 2 + 18 * max(abs(v) for v in us) / hs)
        mag = abs(lap) + abs(u_t) + abs(u0) ** P_EXP
        return -u_t + lap + _pow_p(u0), mag, noise

    s1, mag, noise = S_fd(h, ht)
    s2, _, _ = S_fd(2 * h, 2 * ht)
    G = outer_G(x0[None, :], None, traj, fields, phis, sigma=sig)
    grouped = _inner_residuals(x0[None, :], None, traj, fields, phis, sig)[0]
    grouped += sum(float(v[0]) for v in G.values())
    grouped += _psi_linear(fields, x0, sig)
    # heat-evolved fields are accurate relative to their sup norm, not pointwise
    floor = 100.0 * eps * (fields.z2_sup / fields.seed.radius ** 2 + fields.M)
    budget = 2.0 * abs(s1 - s2) + 1e-12 * mag + 10.0 * noise + floor
    return float(s1), float(grouped), float(budget)


def reassembly_check(traj, fields: AnsatzFields, n: int = 1000, seed: int = 0,
                     phis=None) -> ReassemblyReport:
    """Check ``S(u) = Σ η_R λ^{-7/2}(inner) + (-ψ_t + Δψ) + G`` on random samples.

    ``S(u) = -u_t + Δu + |u|^{p-1}u`` is computed with fourth-order
    central differences of the assembled field; the tolerance for each
    sample is the difference between step ``h`` and ``2h`` estimates
    plus a round-off allowance.  Samples are drawn around both blow-up
    points on all scales from the bubble core to the far field.
    """
    rng = np.random.default_rng(seed)
    T = fields.T
    worst = 0.0
    worst_abs = 0.0
    for _ in range(n):
        x0, sig = _reassembly_point(rng, traj, T)
        direct, grouped, budget = reassembly_sample(x0, sig, traj, fields, phis)
        diff = abs(direct - grouped)
        worst = max(worst, diff / budget if budget > 0 else (0.0 if diff == 0 else math.inf))
        worst_abs = max(worst_abs, diff)
    return ReassemblyReport(n, worst, worst_abs)


def _reassembly_point(rng, traj, T, sigma_range=(0.25, 0.75)):
    sig = T * rng.uniform(*sigma_range)
    centre_idx = int(rng.integers(0, 3))
    d = rng.normal(size=N_DIM)
    d /= np.linalg.norm(d)
    if centre_idx < 2:
        lam = float(traj.lam_at(centre_idx + 1, sigma=sig)[0])
        c = np.asarray(traj.xi_at(centre_idx + 1, sigma=sig))[0]
        rad = lam * 10.0 ** rng.uniform(-1, math.log10(0.5 / lam))
    else:
        c = np.zeros(N_DIM)
        rad = 10.0 ** rng.uniform(-1.5, 1.0)
    return c + rad * d, sig


def _psi_linear(fields, x0, sig):
    """``-ψ_t + Δψ`` for the remainder model (zero in ``bound`` mode)."""
    psi = fields.psi
    if psi.mode == "bound":
        return 0.0
    _, _, lap = psi.field(x0[None, :], fields.T - sig, True, sig)
    hs = 1e-4 * sig
    vals = [float(psi.field(x0[None, :], fields.T - sig - m * hs, sigma=sig + m * hs)[0]) for m in (-1, 1)]
    psi_t = -(vals[1] - vals[0]) / (2 * hs)
    return -psi_t + float(lap[0])


# ---------------------------------------------------------------------------
# majorants of the outer source


MAJORANT_NAMES = (
    "inner1", "inner2", "cutoff_band", "z4_half", "z10_quarter", "z6_eighth", "core",
    "psi_far", "z2_far", "far_cubic",
)


def majorant_terms(x, sig, traj, fields: AnsatzFields, a: float = 0.5):
    """The ten majorant terms (shape (10, N)) and their indicator masks."""
    x = np.asarray(x, dtype=float)
    tau = -math.log(sig)
    R = fields.R if math.isfinite(fields.R) else 100.0
    rx = np.linalg.norm(x, axis=-1)
    rq = np.linalg.norm(x - fields.q, axis=-1)
    rz = rx / math.sqrt(sig)
    lam1 = float(traj.lam_at(1, sigma=sig)[0])
    lam2 = float(traj.lam_at(2, sigma=sig)[0])
    y1 = np.linalg.norm(x - np.asarray(traj.xi_at(1, sigma=sig))[0], axis=-1) / lam1
    y2 = np.linalg.norm(x - np.asarray(traj.xi_at(2, sigma=sig))[0], axis=-1) / lam2
    p = P_EXP
    masks = np.array([
        rx <= 1.0,
        rq <= 1.0,
        (rz >= math.exp(0.375 * tau)) & (rz <= 2.0 * math.exp(0.375 * tau)),
        rz <= 2.0 * math.exp(0.5 * tau),
        rz <= 2.0 * math.exp(0.25 * tau),
        rz <= 2.0 * math.exp(0.375 * tau),
        rz <= 1.0,
        rz >= math.exp(0.25 * tau),
        rz >= math.exp(0.5 * tau),
        rx >= 1.0,
    ])
    with np.errstate(over="ignore"):
        vals = np.array([
            lam1 ** -2 / (1.0 + y1 ** (2 + a)) * math.exp(-tau) * R ** -0.5,
            lam2 ** -2 / (1.0 + y2 ** (2 + a)) * R ** -0.5,
            math.exp(-0.75 * tau) * rz ** 4,
            math.exp(-7 * tau / 6) * rz ** 4,
            math.exp(-7 * tau / 3) * rz ** 10,
            math.exp(-7 * tau / 3) * rz ** 6,
            np.full_like(rx, math.exp(-7 * tau / 3)),
            fields.delta0 ** (7.0 / 3.0) / (1.0 + rx ** 4),
            fields.z2_sup ** p / (1.0 + rx ** 4),
            math.exp(-2 * tau) / (1.0 + rx ** 3),
        ])
    return vals * masks, masks


@dataclass(frozen=True)
class MajorantSchedule:
    """Sampling schedule for the majorant check.

    Attributes
    ----------
    sigmas : tuple of float
        Distances to the blow-up time (fractions of T).
    n_radial : int
        Radial samples per region and direction.
    n_dir : int
        Number of directions.
    a : float
        Decay exponent of the inner weights.
    """

    sigmas: Tuple[float, ...] = (0.5, 0.1, 0.02)
    n_radial: int = 48
    n_dir: int = 6
    a: float = 0.5

    def refined(self) -> "MajorantSchedule":
        return MajorantSchedule(self.sigmas, 2 * self.n_radial, self.n_dir, self.a)

    def directions(self, axis):
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        perp = np.eye(N_DIM)[np.argmin(np.abs(axis))]
        perp = perp - (perp @ axis) * axis
        perp /= np.linalg.norm(perp)
        angles = np.linspace(0.0, math.pi, self.n_dir)
        return np.cos(angles)[:, None] * axis + np.sin(angles)[:, None] * perp

    def points(self, traj, fields, sig):
        """Sample points covering every majorant region at distance ``sig``."""
        tau = -math.log(sig)
        q = fields.q
        axis = q if np.linalg.norm(q) > 0 else np.eye(N_DIM)[0]
        dirs = self.directions(axis)
        n = self.n_radial
        rs = math.sqrt(sig)
        R = fields.R if math.isfinite(fields.R) else 100.0
        blocks = []
        for i in (1, 2):
            lam = float(traj.lam_at(i, sigma=sig)[0])
            xi = np.asarray(traj.xi_at(i, sigma=sig))[0]
            rad = lam * np.geomspace(1e-2, 0.99 / lam, n)
            blocks.append(xi[None, None, :] + rad[None, :, None] * dirs[:, None, :])
            # the inner cutoff band carries the cutoff terms of the corrections
            band = lam * R * np.linspace(0.95, 2.05, n)
            blocks.append(xi[None, None, :] + band[None, :, None] * dirs[:, None, :])
        radial_sets = [
            rs * np.linspace(math.exp(0.375 * tau), 2.0 * math.exp(0.375 * tau), n),
            rs * np.geomspace(1e-2, 2.0 * math.exp(0.5 * tau), n),
            rs * np.geomspace(1e-2, 2.0 * math.exp(0.25 * tau), n),
            rs * np.geomspace(1e-2, 1.0, n),
            np.geomspace(rs * math.exp(0.25 * tau), 50.0, n),
            np.geomspace(1.0, 50.0, n),
        ]
        for rad in radial_sets:
            blocks.append(rad[None, :, None] * dirs[:, None, :])
        return np.concatenate([b.reshape(-1, N_DIM) for b in blocks])


@dataclass
class MajorantReport:
    """Empirical sup-ratios of each outer-source term over each region.

    ``ratios[term][region]`` is the sup over sampled points of the region
    of ``|term| / Σ majorants``; ``None`` marks a region the term never
    reaches with a non-zero value.
    """

    ratios: Dict[str, Dict[str, float]]
    counts: Dict[str, int]
    refined: Optional[Dict[str, Dict[str, float]]] = None
    max_change: float = float("nan")

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for row in self.ratios.values() for v in row.values())

    @property
    def stable(self) -> bool:
        return self.max_change <= 0.2

    def term_sup(self) -> Dict[str, float]:
        return {k: max(row.values()) for k, row in self.ratios.items()}

    def to_dict(self):
        return {"ratios": self.ratios, "refined": self.refined, "counts": self.counts,
                "max_change": self.max_change, "finite": self.finite, "stable": self.stable}


def _majorant_pass(traj, fields, schedule, phis):
    ratios: Dict[str, Dict[str, float]] = {}
    counts = {name: 0 for name in MAJORANT_NAMES}
    for frac in schedule.sigmas:
        sig = frac * fields.T
        x = schedule.points(traj, fields, sig)
        vals, masks = majorant_terms(x, sig, traj, fields, schedule.a)
        total = np.sum(vals, axis=0)
        G = outer_G(x, None, traj, fields, phis, sigma=sig)
        for k, name in enumerate(MAJORANT_NAMES):
            counts[name] += int(np.sum(masks[k]))
        for term, g in G.items():
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(total > 0, np.abs(g) / total, np.where(g == 0, 0.0, np.inf))
            row = ratios.setdefault(term, {name: 0.0 for name in MAJORANT_NAMES})
            for k, name in enumerate(MAJORANT_NAMES):
                if np.any(masks[k]):
                    row[name] = max(row[name], float(np.max(ratio[masks[k]])))
    return ratios, counts


def majorant_check(traj, fields: AnsatzFields, schedule: MajorantSchedule = MajorantSchedule(),
                   phis=None, refine: bool = True) -> MajorantReport:
    """Per-term sup-ratios against the outer-source majorants.

    With ``refine`` the schedule is rerun at doubled density and the
    largest relative change among non-negligible ratios is recorded.
    """
    from .errors import ScheduleError

    phis = default_phis(fields, schedule.a) if phis is None else phis
    ratios, counts = _majorant_pass(traj, fields, schedule, phis)
    empty = [k for k, v in counts.items() if v == 0]
    if empty:
        raise ScheduleError(f"schedule leaves regions empty: {', '.join(empty)}")
    report = MajorantReport(ratios, counts)
    if refine:
        fine, _ = _majorant_pass(traj, fields, schedule.refined(), phis)
        change = 0.0
        for term, row in ratios.items():
            for name, v in row.items():
                w = fine[term][name]
                top = max(abs(v), abs(w))
                # ratios at round-off level carry no information
                if top > 1e-12:
                    change = max(change, abs(w - v) / top)
        report.refined = fine
        report.max_change = change
    return report


# ---------------------------------------------------------------------------
# weighted norm of the outer source


@lru_cache(maxsize=8)
def _axial_rule(r_lo: float, r_hi: float, per_panel: int = 8, n_cos: int = 16, ratio: float = 2.0):
    """Radial log panels times Gauss-Jacobi in the polar angle about an axis.

    For functions symmetric about an axis the integral over R^5 reduces to
    ``2π² ∫∫ f(r, c) r⁴ (1 - c²) dc dr``.
    """
    from scipy.special import roots_jacobi

    n_pan = max(1, int(math.ceil(math.log(r_hi / r_lo) / math.log(ratio))))
    edges = np.geomspace(r_lo, r_hi, n_pan + 1)
    x, w = leggauss(per_panel)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel() * r ** 4
    c, wc = roots_jacobi(n_cos, 1.0, 1.0)
    # the ball r < r_lo is added as a single radial panel
    r0 = 0.5 * r_lo * (x + 1.0)
    w0 = 0.5 * r_lo * w * r0 ** 4
    r = np.concatenate([r0, r])
    wr = np.concatenate([w0, wr])
    return r, wr, c, wc * 2.0 * math.pi ** 2


def _axial_points(centre, axis, perp, r, c):
    s = np.sqrt(1.0 - c * c)
    dirs = c[:, None] * axis + s[:, None] * perp
    return centre + (r[:, None, None] * dirs[None, :, :]).reshape(-1, N_DIM)


def _axis_frame(fields):
    q = fields.q
    axis = q / np.linalg.norm(q) if np.linalg.norm(q) > 0 else np.eye(N_DIM)[0]
    perp = np.eye(N_DIM)[np.argmin(np.abs(axis))]
    perp = perp - (perp @ axis) * axis
    return axis, perp / np.linalg.norm(perp)


def rho_norm_field(g: Callable, tau: float, fields: AnsatzFields, z_inner: float = 1e-3,
                   centres=()) -> float:
    """``‖g(·, τ)‖ρ`` for fields symmetric about the axis through 0 and ``q``.

    ``g(z)`` takes self-similar points.  ``centres`` lists triples
    ``(point, radius, inner)`` of self-similar points on the axis (e.g. the
    image of ``q``) around which the field has structure down to scale
    ``inner``; each gets its own rule through a partition of unity.
    """
    axis, perp = _axis_frame(fields)
    r, wr, c, wc = _axial_rule(z_inner, 40.0)
    pts = _axial_points(np.zeros(N_DIM), axis, perp, r, c)
    wts = (wr[:, None] * wc[None, :]).ravel()
    chis = [(np.asarray(zc), rad, inner) for zc, rad, inner in centres]

    def weight(p):
        chi_tot = np.zeros(len(p))
        for zc, rad, _ in chis:
            chi_tot += eta(np.linalg.norm(p - zc, axis=-1) / rad)
        return chi_tot

    vals = np.asarray(g(pts), dtype=float)
    rho = np.exp(-np.sum(pts * pts, axis=-1) / 4.0)
    total = math.fsum(vals ** 2 * rho * (1.0 - weight(pts)) * wts)
    for zc, rad, inner in chis:
        rl, wl, cl, wcl = _axial_rule(inner, 2.0 * rad)
        p = _axial_points(zc, axis, perp, rl, cl)
        wl_ = (wl[:, None] * wcl[None, :]).ravel()
        v = np.asarray(g(p), dtype=float)
        rho_l = np.exp(-np.sum(p * p, axis=-1) / 4.0)
        total += math.fsum(v ** 2 * rho_l * eta(np.linalg.norm(p - zc, axis=-1) / rad) * wl_)
    return math.sqrt(total)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    taus: Tuple[float, ...]
    norms: Tuple[float, ...]
    residual: float


def fit_decay(taus, norms) -> DecayFit:
    """Least-squares exponent ``β`` in ``norm ≈ C e^{-β τ}``."""
    from .errors import DegenerateInputError

    taus = np.asarray(taus, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if np.all(norms == 0):
        raise DegenerateInputError("identically zero series cannot be fitted")
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError("norms must be positive and finite")
    if taus.max() - taus.min() < 3.0:
        raise DomainError("τ-schedule must span at least 3 units")
    A = np.stack([taus, np.ones_like(taus)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(norms), rcond=None)
    res = float(np.max(np.abs(A @ coef - np.log(norms))))
    return DecayFit(float(-coef[0]), tuple(taus), tuple(norms), res)


def rho_norm_G(traj, fields: AnsatzFields, taus: Sequence[float] = None, G: Callable = None,
               phis=None) -> DecayFit:
    """Decay exponent of ``‖G(·, τ)‖ρ`` over a τ-schedule.

    ``G(z, τ)``, if given, replaces the assembled outer source (used for
    calibration).  The default schedule is ``τ0 + {0, 0.5, ..., 5}`` with
    ``τ0 = -log T``.
    """
    tau0 = -math.log(fields.T)
    taus = tau0 + np.arange(0.0, 5.01, 0.5) if taus is None else np.asarray(taus, dtype=float)
    if G is None:
        _check_provenance(traj, fields)
        phis = default_phis(fields) if phis is None else phis
    norms = []
    for tau in taus:
        sig = min(math.exp(-tau), fields.T)
        rs = math.sqrt(sig)
        if G is not None:
            norms.append(rho_norm_field(lambda z: G(z, tau), tau, fields))
            continue
        lam1 = float(traj.lam_at(1, sigma=sig)[0])
        lam2 = float(traj.lam_at(2, sigma=sig)[0])

        def g(z, sig=sig, rs=rs):
            vals = outer_G(z * rs, None, traj, fields, phis, sigma=sig)
            return sum(vals.values())

        zq = fields.q / rs
        centres = [(zq, 0.25 * np.linalg.norm(zq), 1e-3 * lam2 / rs)] if np.linalg.norm(zq) > 0 else []
        norms.append(rho_norm_field(g, tau, fields, z_inner=min(1e-3, 1e-3 * lam1 / rs), centres=centres))
    return fit_decay(taus, norms)
