"""Self-similar frame, Hermite eigenmodes of the drift operator and the heat
semigroup in self-similar variables.

With ``z = x / √(T-t)`` and ``T - t = e^{-τ}`` the heat equation becomes
``w_τ = A_z w`` where ``A_z = Δ - (z/2)·∇``.  The eigenfunctions of
``-A_z`` in ``L²(ρ)``, ``ρ = exp(-|z|²/4)``, are products of monic Hermite
polynomials ``H_k`` orthogonal for ``exp(-s²/4)``, with eigenvalues
``|α|/2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from .ansatz import eta, heat_radial_bump
from .bubble_core import N_DIM
from .errors import ConditioningError, DomainError, PreconditionError
from .quad import OMEGA4, _tensor_rule, hermite_rule

N_MAX = 12
# Gauss-Hermite nodes per axis available to the convolution quadrature
M_MAX = 16


# ---------------------------------------------------------------------------
# frame


@dataclass(frozen=True)
class SelfSimilarFrame:
    """Map between ``(x, t)`` and ``(z, τ)`` for blow-up time ``T``."""

    T: float
    tau0: Optional[float] = None

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("blow-up time must be positive")

    @property
    def base_time(self) -> float:
        return -math.log(self.T) if self.tau0 is None else self.tau0

    def to_selfsimilar(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(t >= self.T):
            raise DomainError("time must precede the blow-up time")
        sig = self.T - t
        return x / np.sqrt(sig)[..., None] if np.ndim(sig) else x / math.sqrt(sig), -np.log(sig)

    def to_physical(self, z, tau):
        z = np.asarray(z, dtype=float)
        tau = np.asarray(tau, dtype=float)
        sig = np.exp(-tau)
        x = z * np.sqrt(sig)[..., None] if np.ndim(sig) else z * math.sqrt(float(sig))
        return x, self.T - sig


# ---------------------------------------------------------------------------
# Hermite modes


@lru_cache(maxsize=None)
def hermite_coeffs(k: int) -> np.ndarray:
    """Ascending coefficients of the monic ``H_k`` for the weight ``exp(-s²/4)``.

    Generated by ``H_{k+1} = s H_k - 2k H_{k-1}``.
    """
    if k < 0 or k > N_MAX:
        raise DomainError(f"Hermite degree {k} outside 0..{N_MAX}")
    prev = np.array([1.0])
    if k == 0:
        return prev
    cur = np.array([0.0, 1.0])
    for j in range(1, k):
        nxt = np.zeros(j + 2)
        nxt[1:] += cur
        nxt[:j] -= 2.0 * j * prev
        prev, cur = cur, nxt
    return cur


def hermite_norm_sq(k: int) -> float:
    """``∫ H_k(s)² exp(-s²/4) ds = 2^k k! √(4π)``."""
    return 2.0 ** k * math.factorial(k) * math.sqrt(4.0 * math.pi)


@dataclass(frozen=True)
class HermiteMode:
    """Eigenfunction ``e_α = ∏ H_{α_i}(z_i)`` of ``-A_z`` with eigenvalue ``|α|/2``."""

    alpha: Tuple[int, ...]

    @property
    def degree(self) -> int:
        return sum(self.alpha)

    @property
    def eigenvalue(self) -> float:
        return 0.5 * self.degree

    @property
    def norm_sq(self) -> float:
        return math.prod(hermite_norm_sq(k) for k in self.alpha)

    @property
    def coeffs(self) -> Tuple[np.ndarray, ...]:
        return tuple(hermite_coeffs(k) for k in self.alpha)

    def _axis(self, z, order):
        vals = []
        for a, c in enumerate(self.coeffs):
            for _ in range(order):
                c = P.polyder(c) if len(c) > 1 else np.array([0.0])
            vals.append(P.polyval(z[..., a], c))
        return vals

    def __call__(self, z):
        z = _points(z)
        return np.prod(np.stack(self._axis(z, 0)), axis=0)

    def derivatives(self, z):
        """Value, gradient and Laplacian at ``z``."""
        z = _points(z)
        v0 = np.stack(self._axis(z, 0))
        v1 = np.stack(self._axis(z, 1))
        v2 = np.stack(self._axis(z, 2))
        val = np.prod(v0, axis=0)
        grad = np.empty(z.shape)
        lap = np.zeros(z.shape[:-1])
        for a in range(N_DIM):
            others = np.prod(np.delete(v0, a, axis=0), axis=0)
            grad[..., a] = v1[a] * others
            lap += v2[a] * others
        return val, grad, lap


def _points(z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != N_DIM:
        raise DomainError("points must lie in R^5")
    return z


def hermite_mode(alpha: Sequence[int]) -> HermiteMode:
    """The mode for multi-index ``alpha`` (|α| ≤ N_MAX)."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != N_DIM or any(a < 0 for a in alpha):
        raise DomainError("multi-index must have five non-negative entries")
    if sum(alpha) > N_MAX:
        raise DomainError(f"|α| = {sum(alpha)} exceeds {N_MAX}")
    return HermiteMode(alpha)


def apply_Az(f_derivs, z):
    """``A_z f = Δf - (z/2)·∇f`` from (value, gradient, Laplacian)."""
    _, grad, lap = f_derivs
    return lap - 0.5 * np.sum(np.asarray(z) * grad, axis=-1)


@lru_cache(maxsize=None)
def multi_indices(max_degree: int, min_degree: int = 0) -> Tuple[Tuple[int, ...], ...]:
    """All α with ``min_degree ≤ |α| ≤ max_degree``, by degree then lexicographically."""
    out = []
    for d in range(min_degree, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(N_DIM), d):
            alpha = [0] * N_DIM
            for c in combo:
                alpha[c] += 1
            out.append(tuple(alpha))
    out = sorted(set(out), key=lambda a: (sum(a), tuple(-x for x in a)))
    return tuple(out)


def eigen_residual(alpha, z) -> float:
    """``max |A_z e_α + λ_α e_α| / (1 + max |e_α|)`` on the points ``z``."""
    mode = hermite_mode(alpha)
    d = mode.derivatives(z)
    res = apply_Az(d, z) + mode.eigenvalue * d[0]
    return float(np.max(np.abs(res)) / (1.0 + np.max(np.abs(d[0]))))


def test_grid(n: int = 7, extent: float = 4.0, seed: int = 0, count: int = 400):
    """Deterministic scattered points in ``[-extent, extent]^5``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-extent, extent, size=(count, N_DIM))


# ---------------------------------------------------------------------------
# fields


@dataclass
class SpectralField:
    """Finite Hermite expansion ``Σ c_α e_α`` with an optional remainder.

    Attributes
    ----------
    coeffs : dict
        Multi-index to coefficient.
    remainder : callable, optional
        Grid remainder added on evaluation.
    remainder_norm : float
        ``‖remainder‖ρ`` when a remainder is present.
    """

    coeffs: Dict[Tuple[int, ...], float]
    remainder: Optional[Callable] = None
    remainder_norm: float = 0.0

    @property
    def N(self) -> int:
        return max((sum(a) for a in self.coeffs), default=0)

    def __call__(self, z):
        z = _points(z)
        out = np.zeros(z.shape[:-1])
        for a, c in self.coeffs.items():
            if c != 0.0:
                out = out + c * hermite_mode(a)(z)
        if self.remainder is not None:
            out = out + self.remainder(z)
        return out

    def norm_rho(self) -> float:
        """Parseval norm ``(Σ c_α² ‖e_α‖² + ‖remainder‖²)^{1/2}``."""
        s = math.fsum(c * c * hermite_mode(a).norm_sq for a, c in self.coeffs.items())
        return math.sqrt(s + self.remainder_norm ** 2)

    def projection(self, max_degree: int) -> "SpectralField":
        return SpectralField({a: c for a, c in self.coeffs.items() if sum(a) <= max_degree})

    @classmethod
    def from_function(cls, f: Callable, N: int, m: int = None) -> "SpectralField":
        """Project a field on the modes with ``|α| ≤ N`` by Gauss-Hermite quadrature."""
        m = N + 1 if m is None else m
        pts, wts = _tensor_rule(m)
        vals = np.asarray(f(pts), dtype=float) * wts
        coeffs = {}
        for a in multi_indices(N):
            mode = hermite_mode(a)
            coeffs[a] = math.fsum(vals * mode(pts)) / mode.norm_sq
        return cls(coeffs)


@dataclass(frozen=True)
class PolynomialField:
    """Field of polynomial growth; ``degree`` bounds the per-axis degree."""

    func: Callable
    degree: int

    def __call__(self, z):
        return self.func(_points(z))


@dataclass(frozen=True)
class RadialBumpField:
    """Compactly supported radial field ``profile(|z|)`` on ``|z| ≤ radius``."""

    profile: Callable
    radius: float

    def __call__(self, z):
        r = np.linalg.norm(_points(z), axis=-1)
        return np.where(r <= self.radius, self.profile(np.minimum(r, self.radius)), 0.0)

    def norm_rho(self) -> float:
        x, w = leggauss(48)
        r = 0.5 * self.radius * (x + 1.0)
        vals = self.profile(r) ** 2 * np.exp(-r * r / 4.0) * r ** 4 * 0.5 * self.radius * w
        return math.sqrt(OMEGA4 * math.fsum(vals))


# ---------------------------------------------------------------------------
# semigroup


def semigroup(f, dtau: float):
    """``e^{A_z Δτ} f``.

    Pulling back to physical variables with ``T - t0 = 1``, the heat flow
    runs for time ``s = 1 - e^{-Δτ}`` and is pushed forward with
    ``x = z e^{-Δτ/2}``:

        (e^{A_z Δτ} f)(z) = E[f(z e^{-Δτ/2} + √(2s) N)],  N standard normal.

    Spectral fields are advanced diagonally, polynomial fields by a
    Gauss-Hermite rule exact for their degree and radial bumps by the
    radial heat kernel.
    """
    if not dtau > 0:
        raise DomainError("Δτ must be positive")
    if isinstance(f, SpectralField):
        if f.remainder is not None:
            raise DomainError("remainders are not propagated")
        return SpectralField({a: c * math.exp(-0.5 * sum(a) * dtau) for a, c in f.coeffs.items()})
    shrink = math.exp(-0.5 * dtau)
    s = -math.expm1(-dtau)
    if isinstance(f, PolynomialField):
        m = f.degree // 2 + 1
        if m > M_MAX:
            raise DomainError(f"degree {f.degree} exceeds the convolution rule capacity")
        nodes, wts = _tensor_rule(m)
        # heat kernel at time s after v = √s w: (4π)^{-5/2} exp(-|w|²/4) dw
        spread = math.sqrt(s)
        norm = (4.0 * math.pi) ** (-N_DIM / 2.0)

        def out(z):
            z = _points(z)
            flat = z.reshape(-1, N_DIM)
            res = np.empty(len(flat))
            for k, p in enumerate(flat):
                res[k] = math.fsum(f(p * shrink + spread * nodes) * wts) * norm
            return res.reshape(z.shape[:-1])

        return PolynomialField(out, f.degree)
    if isinstance(f, RadialBumpField):

        def bump(z):
            r = np.linalg.norm(_points(z), axis=-1) * shrink
            return heat_radial_bump(f.profile, f.radius, r, s)[0]

        return bump
    raise DomainError("unknown growth class; wrap the field as PolynomialField or RadialBumpField")


def lemma22_envelope(z, dtau: float):
    """``exp(e^{-Δτ}|z|² / (4(1 + e^{-Δτ}))) / (1 - e^{-Δτ})^{5/4}``.

    By Cauchy-Schwarz against ``ρ``, ``|e^{A_zΔτ} f| ≤ (4π)^{-5/4}
    (1 + e^{-Δτ})^{-5/4} · envelope · ‖f‖ρ``.
    """
    r2 = np.sum(_points(z) ** 2, axis=-1)
    q = math.exp(-dtau)
    return np.exp(q * r2 / (4.0 * (1.0 + q))) / (-math.expm1(-dtau)) ** (N_DIM / 4.0)


def lemma22_ratio(f0: RadialBumpField, dtau: float, z) -> float:
    """``sup |e^{A_zΔτ} f0| / (envelope ‖f0‖ρ)`` over ``z``."""
    vals = np.abs(semigroup(f0, dtau)(z))
    return float(np.max(vals / lemma22_envelope(z, dtau)) / f0.norm_rho())


def lemma23_ratio(l: int, dtau: float, z) -> float:
    """``sup |e^{A_zΔτ}|z|^{2l}| / (1 + e^{-lΔτ}|z|^{2l})`` over ``z``."""
    f = PolynomialField(lambda p: np.sum(p * p, axis=-1) ** l, 2 * l)
    vals = np.abs(semigroup(f, dtau)(z))
    r2l = np.sum(_points(z) ** 2, axis=-1) ** l
    return float(np.max(vals / (1.0 + math.exp(-l * dtau) * r2l)))


# ---------------------------------------------------------------------------
# mode coefficients


@dataclass(frozen=True)
class ModeCoefficient:
    """Samples of ``b_α(τ)`` with the fitted decay of the input projection.

    ``evaluate`` gives ``b_α`` at any τ inside the sampled range from the
    same spline-quadrature representation used for the samples.
    """

    alpha: Tuple[int, ...]
    taus: np.ndarray
    values: np.ndarray
    input_decay: float
    spline: Optional[CubicSpline] = None
    kappa: float = 0.0

    @property
    def eigenvalue(self) -> float:
        return 0.5 * sum(self.alpha)

    def evaluate(self, tau: float) -> float:
        if self.spline is None:
            return 0.0
        taus = self.taus
        if not taus[0] <= tau <= taus[-1]:
            raise DomainError("τ outside the sampled range")
        k = min(int(np.searchsorted(taus, tau, side="right")) - 1, len(taus) - 2)
        first = _exp_spline_integral(self.spline, self.kappa, tau, taus[k + 1], taus[-1])
        rest = math.fsum(_exp_spline_integral(self.spline, self.kappa, taus[j], taus[j + 1], taus[-1])
                         for j in range(k + 1, len(taus) - 1))
        tail = float(self.spline(taus[-1])) / (-self.kappa)
        return -math.exp(-self.eigenvalue * tau + self.kappa * taus[-1]) * (first + rest + tail)

    def derivative_residual(self, g_at: Callable, taus=None, step: float = 1e-3) -> float:
        """Max of ``|b' + λ b - e^{-τ}(G, e)ρ|`` relative to ``|λ b| + |b'|``.

        ``b'`` is a fourth-order central difference of :meth:`evaluate`;
        ``g_at`` gives the projection at arbitrary τ.
        """
        taus = self.taus[2:-2] if taus is None else np.asarray(taus)
        worst = 0.0
        for tau in taus:
            v = [self.evaluate(tau + m * step) for m in (-2, -1, 1, 2)]
            db = (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * step)
            b = self.evaluate(tau)
            res = db + self.eigenvalue * b - math.exp(-tau) * g_at(tau)
            scale = abs(db) + abs(self.eigenvalue * b) + 1e-300
            worst = max(worst, abs(res) / scale)
        return worst


def _exp_spline_integral(spline, kappa, a, b, ref):
    """``∫_a^b e^{κ(τ - ref)} spline(τ) dτ`` with 12-point Gauss-Legendre."""
    if b <= a:
        return 0.0
    x, w = leggauss(12)
    tt = 0.5 * (a + b) + 0.5 * (b - a) * x
    return 0.5 * (b - a) * math.fsum(w * np.exp(kappa * (tt - ref)) * spline(tt))


def _decay_rate(taus, g):
    """Exponent β of ``|g| ≈ A e^{-βτ}`` from the last samples."""
    k = max(4, len(taus) // 4)
    tt = taus[-k:]
    gg = np.abs(g[-k:])
    if np.any(gg == 0):
        return math.inf
    A = np.stack([tt, np.ones_like(tt)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(gg), rcond=None)
    return float(-coef[0])


def mode_coefficient_b(alpha, taus, g_values, min_decay: float = 7.0 / 6.0 - 0.05) -> ModeCoefficient:
    """``b_α(τ) = -e^{-λ_α τ} ∫_τ^∞ e^{(λ_α - 1)τ'} (G, e_α)ρ(τ') dτ'``.

    The samples ``g_values`` of ``(G, e_α)ρ`` on the increasing grid
    ``taus`` are detrended by their fitted decay ``e^{-βτ}``, interpolated
    by a cubic spline and integrated against the exponential weight with
    Gauss-Legendre rules per interval; beyond the last sample the fitted
    exponential is used.

    Raises
    ------
    DomainError
        If the samples decay slower than ``e^{-min_decay τ}``.
    """
    taus = np.asarray(taus, dtype=float)
    g = np.asarray(g_values, dtype=float)
    if taus.ndim != 1 or len(taus) < 4 or np.any(np.diff(taus) <= 0):
        raise DomainError("need at least four increasing τ samples")
    if g.shape != taus.shape:
        raise DomainError("one projection sample per τ")
    lam = hermite_mode(alpha).eigenvalue
    if np.all(g == 0):
        return ModeCoefficient(tuple(alpha), taus, np.zeros_like(taus), math.inf)
    beta = _decay_rate(taus, g)
    if not beta >= min_decay:
        raise DomainError(f"projection decays like e^(-{beta:.3f} τ), slower than required")
    beta_use = beta if math.isfinite(beta) else min_decay
    kappa = lam - 1.0 - beta_use
    if kappa >= 0:
        raise DomainError("integral does not converge for this mode")
    spline = CubicSpline(taus, g * np.exp(beta_use * taus))
    pieces = [_exp_spline_integral(spline, kappa, taus[k], taus[k + 1], taus[-1])
              for k in range(len(taus) - 1)] + [0.0]
    tail = float(spline(taus[-1])) / (-kappa)
    # integrals from each sample to infinity, in units of e^{κ τ_end}
    cum = np.array([math.fsum(pieces[k:]) for k in range(len(taus))]) + tail
    values = -np.exp(-lam * taus + kappa * taus[-1]) * cum
    return ModeCoefficient(tuple(alpha), taus, values, beta, spline, kappa)


# ---------------------------------------------------------------------------
# initial-data system


def mode_set(max_degree: int = 4) -> Tuple[HermiteMode, ...]:
    """Modes with eigenvalue at most ``max_degree / 2``."""
    return tuple(hermite_mode(a) for a in multi_indices(max_degree))


@lru_cache(maxsize=None)
def sphere_rule(n: int):
    """Directions and weights on S^4, exact for polynomials of degree ``2n - 1``."""
    from scipy.special import roots_jacobi

    c1, w1 = roots_jacobi(n, 1.0, 1.0)
    c2, w2 = roots_jacobi(n, 0.5, 0.5)
    c3, w3 = leggauss(n)
    n4 = 2 * n
    ph = 2.0 * math.pi * np.arange(n4) / n4
    w4 = np.full(n4, 2.0 * math.pi / n4)
    A = [g.ravel() for g in np.meshgrid(c1, c2, c3, ph, indexing="ij")]
    W = np.prod(np.stack([g.ravel() for g in np.meshgrid(w1, w2, w3, w4, indexing="ij")]), axis=0)
    s1, s2, s3 = (np.sqrt(1.0 - a * a) for a in A[:3])
    dirs = np.stack([A[0], s1 * A[1], s1 * s2 * A[2], s1 * s2 * s3 * np.cos(A[3]),
                     s1 * s2 * s3 * np.sin(A[3])], axis=1)
    return dirs, W


def _cutoff_gram(modes, cutoff: Callable, L: float, r_hi: float = 60.0):
    """``(ê_i, (1 - cutoff(|z|)) ê_j)ρ`` for ρ-normalized modes.

    Radial panels resolve the transition band ``[L, 2L]`` and the
    Gaussian tail separately; the angular rule is exact for the products.
    """
    deg = 2 * max(m.degree for m in modes)
    dirs, wd = sphere_rule(deg // 2 + 1)
    x, w = leggauss(16)
    inner = np.linspace(0.0, L, 9)
    band = np.linspace(L, 2.0 * L, 9)
    outer = np.linspace(2.0 * L, max(r_hi, 2.0 * L + 1.0), 17)
    edges = np.unique(np.concatenate([inner, band, outer]))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel() * r ** 4 * np.exp(-r * r / 4.0) * (1.0 - cutoff(r))
    keep = wr != 0
    r, wr = r[keep], wr[keep]
    n = len(modes)
    if len(r) == 0:
        return np.zeros((n, n))
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, N_DIM)
    wts = (wr[:, None] * wd[None, :]).ravel()
    V = np.array([m(pts) / math.sqrt(m.norm_sq) for m in modes])
    D = (V * wts) @ V.T
    return 0.5 * (D + D.T)


@dataclass(frozen=True)
class InitialDataSolve:
    """Solution of ``(I + D) d = b`` in the ρ-normalized mode basis."""

    d: np.ndarray
    D: np.ndarray
    D_norm: float
    residual: float
    modes: Tuple[Tuple[int, ...], ...]


def solve_d(b_at_tau0, tau0: float, cutoff: Callable = None, max_degree: int = 4) -> InitialDataSolve:
    """Solve ``(I + D) d = b(τ0)`` with ``D_ij = (ê_i, (1 - η(|z| e^{-3τ0/8})) ê_j)ρ``.

    Raises
    ------
    ConditioningError
        If ``‖D‖∞ ≥ 1/2`` (``τ0`` too small for the cutoff).
    """
    modes = mode_set(max_degree)
    b = np.asarray(b_at_tau0, dtype=float)
    if b.shape != (len(modes),):
        raise DomainError(f"b must have {len(modes)} entries")
    L = math.exp(0.375 * tau0)
    if cutoff is None:

        def cutoff(r):
            return eta(r / L)

    D = _cutoff_gram(modes, cutoff, L)
    D_norm = float(np.max(np.sum(np.abs(D), axis=1)))
    if D_norm >= 0.5:
        raise ConditioningError(f"‖D‖∞ = {D_norm:.3g} ≥ 1/2; increase τ0")
    A = np.eye(len(modes)) + D
    d = np.linalg.solve(A, b)
    res = float(np.max(np.abs(A @ d - b)))
    return InitialDataSolve(d, D, D_norm, res, tuple(m.alpha for m in modes))


# ---------------------------------------------------------------------------
# complement decay


@dataclass
class DecayLog:
    """Norms of an evolving complement field and the fitted decay."""

    taus: np.ndarray
    norms: np.ndarray
    envelope: np.ndarray
    exponent: float


def evolve_complement(f0: SpectralField, dtaus: Sequence[float], min_degree: int = 5,
                      envelope_points=None, tol: float = 1e-10) -> DecayLog:
    """Evolve a field orthogonal to the low modes and fit its ρ-norm decay.

    Raises
    ------
    PreconditionError
        If the projection on modes with ``|α| < min_degree`` exceeds
        ``tol`` relative to the norm.
    """
    total = f0.norm_rho()
    low = f0.projection(min_degree - 1).norm_rho()
    if total == 0:
        raise PreconditionError("zero field")
    if low > tol * total:
        raise PreconditionError(f"projection on low modes is {low / total:.3g} of the norm")
    dtaus = np.asarray(dtaus, dtype=float)
    z = test_grid(count=200, extent=3.0) if envelope_points is None else envelope_points
    norms = []
    env = []
    for dt in dtaus:
        f = semigroup(f0, dt) if dt > 0 else f0
        norms.append(f.norm_rho())
        r2 = np.sum(z * z, axis=-1)
        env.append(float(np.max(np.abs(f(z)) / (math.exp(-2.0 * dt) * (1.0 + r2 ** 2)))))
    norms = np.array(norms)
    A = np.stack([dtaus, np.ones_like(dtaus)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(norms), rcond=None)
    return DecayLog(dtaus, norms, np.array(env), float(-coef[0]))
