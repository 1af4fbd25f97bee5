"""Scaling and translation parameters of the two bubbles.

The parameters are fixed by requiring the inner sources to be orthogonal
to the kernels over the ball of radius 2R.  In the variable ``σ = T - t``
the two scales behave to leading order like

    λ1,0 = κ1² σ⁴ / 16,        λ2,0 = κ2² σ² / 4,

and the corrections ``λi,1 = λi - λi,0`` solve singular linear equations

    dλ/dt + ε λ / σ = σ³ h,    λ(T) = 0,

whose solution is ``λ = -σ^ε ∫_0^σ s^{3-ε} h(T - s) ds``.  The correction is
obtained by Picard iteration on that representation.  The centres are then
integrated backward from their terminal values with classical RK4.

Everything lives on a grid of octave panels in ``u = log σ``: panel edges
are ``t_m = T (1 - 2^{-m})`` and each panel carries Gauss-Legendre nodes, so
integrals, derivatives and interpolation are spectrally accurate within a
panel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import legendre as L

from .ansatz import AnsatzFields
from .bubble_core import bubble_dr, dilation_radial, potential
from .errors import DivergenceError, DomainError, PrecisionError
from .quad import QuadratureSpec, ball_complement_integral, mass_constants, radial_integral

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# leading order


def kappa1(M: float) -> float:
    """Coefficient of the first scale, (3M/2) ∫U^p / ∫W6²."""
    mc = mass_constants()
    return 1.5 * M * mc.I_p / mc.I_6


def kappa2(z2_at_q: float) -> float:
    """Coefficient of the second scale, ``-Z2,0(q) ∫pU^{p-1}W6 / ∫W6² = 1.5 Z2,0(q) ∫U^p / ∫W6²``."""
    mc = mass_constants()
    return 1.5 * z2_at_q * mc.I_p / mc.I_6


_POWERS = {1: 4, 2: 2}
_DENOMS = {1: 16.0, 2: 4.0}


def leading_lambda(i: int, t, kappa: float, T: float):
    """Leading-order scale of bubble ``i`` (1 or 2) at time ``t``."""
    if i not in _POWERS:
        raise DomainError("bubble index must be 1 or 2")
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t >= T) or np.any(t < 0):
        raise DomainError("leading order is defined for 0 <= t < T")
    return kappa ** 2 * (T - t) ** _POWERS[i] / _DENOMS[i]


def leading_lambda_dot(i: int, t, kappa: float, T: float):
    """Time derivative of :func:`leading_lambda`."""
    lam = leading_lambda(i, t, kappa, T)
    return -_POWERS[i] * lam / (T - np.asarray(t, dtype=float))


def leading_residual(i: int, t, kappa: float, T: float):
    """Relative residual of dλ/dt + κ σ^{k} λ^{1/2} = 0 (k = 1 or 0)."""
    sig = T - np.asarray(t, dtype=float)
    lam = leading_lambda(i, t, kappa, T)
    dot = leading_lambda_dot(i, t, kappa, T)
    drive = kappa * (sig if i == 1 else 1.0) * np.sqrt(lam)
    return np.abs(dot + drive) / np.abs(dot)


# ---------------------------------------------------------------------------
# octave-panel grid


@lru_cache(maxsize=8)
def _panel_basis(n: int):
    x, w = L.leggauss(n)
    V = L.legvander(x, n - 1)
    return x, w, np.linalg.inv(V)


@dataclass(frozen=True)
class PanelGrid:
    """Gauss-Legendre nodes on octave panels of ``u = log(T - t)``.

    Attributes
    ----------
    T : float
        Blow-up time.
    octaves : int
        Number of panels; the smallest ``T - t`` is ``T 2^{-octaves}``.
    n : int
        Nodes per panel.
    """

    T: float
    octaves: int = 52
    n: int = 16

    def __post_init__(self):
        if self.T <= 0 or self.octaves < 1 or self.n < 2:
            raise DomainError("invalid panel grid")

    @property
    def edges(self) -> np.ndarray:
        # increasing u; the last edge is log T
        return math.log(self.T) - math.log(2.0) * np.arange(self.octaves, -1, -1)

    @property
    def u(self) -> np.ndarray:
        x, _, _ = _panel_basis(self.n)
        e = self.edges
        mid = 0.5 * (e[1:] + e[:-1])
        half = 0.5 * (e[1:] - e[:-1])
        return (mid[:, None] + half[:, None] * x[None, :]).ravel()

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.u)

    @property
    def t(self) -> np.ndarray:
        return self.T - self.sigma

    @property
    def half(self) -> float:
        return 0.5 * math.log(2.0)

    def refined(self) -> "PanelGrid":
        return PanelGrid(self.T, self.octaves, 2 * self.n)

    def _coeffs(self, values):
        _, _, Vinv = _panel_basis(self.n)
        v = np.asarray(values, dtype=float).reshape(self.octaves, self.n, -1)
        return np.einsum("ij,pjk->pik", Vinv, v)

    def cumulative(self, g) -> np.ndarray:
        """``∫_{u_min}^{u} g du`` at every node."""
        g = np.asarray(g, dtype=float)
        shape = g.shape
        c = self._coeffs(g)
        x, _, _ = _panel_basis(self.n)
        ci = L.legint(c, lbnd=-1, axis=1)
        inside = np.einsum("jm,pmk->pjk", L.legvander(x, self.n), ci) * self.half
        totals = np.einsum("m,pmk->pk", L.legvander(np.array([1.0]), self.n)[0], ci) * self.half
        offset = np.concatenate([np.zeros((1, totals.shape[1])), np.cumsum(totals, axis=0)[:-1]])
        return (inside + offset[:, None, :]).reshape(shape)

    def derivative(self, values) -> np.ndarray:
        """d/du of a sampled function, panel by panel."""
        v = np.asarray(values, dtype=float)
        c = self._coeffs(v)
        cd = L.legder(c, axis=1)
        x, _, _ = _panel_basis(self.n)
        out = np.einsum("jm,pmk->pjk", L.legvander(x, self.n - 2), cd) / self.half
        return out.reshape(v.shape)

    def locate(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        e = self.edges
        if np.any(u > e[-1] + 1e-12) or np.any(u < e[0] - 1e-12):
            raise DomainError("query outside the grid")
        p = np.clip(np.searchsorted(e, u, side="right") - 1, 0, self.octaves - 1)
        x = (u - 0.5 * (e[p] + e[p + 1])) / self.half
        return p, np.clip(x, -1.0, 1.0)

    def interpolate(self, values, u):
        """Polynomial interpolation of node values at arbitrary ``u``."""
        v = np.asarray(values, dtype=float)
        c = self._coeffs(v)
        p, x = self.locate(u)
        V = L.legvander(x, self.n - 1)
        out = np.einsum("qm,qmk->qk", V, c[p])
        return out.reshape((len(p),) + v.shape[1:])

    def cumulative_at(self, g, u):
        """``∫_{u_min}^{u} g du`` at arbitrary ``u``."""
        g = np.asarray(g, dtype=float)
        c = self._coeffs(g)
        ci = L.legint(c, lbnd=-1, axis=1)
        totals = np.einsum("m,pmk->pk", L.legvander(np.array([1.0]), self.n)[0], ci) * self.half
        offset = np.concatenate([np.zeros((1, totals.shape[1])), np.cumsum(totals, axis=0)])
        p, x = self.locate(u)
        V = L.legvander(x, self.n)
        out = np.einsum("qm,qmk->qk", V, ci[p]) * self.half + offset[p]
        return out.reshape((len(p),) + g.shape[1:])


# ---------------------------------------------------------------------------
# Hölder samples and the singular linear equation


@dataclass(frozen=True)
class HolderSample:
    """Samples of a function of time with optional derivative samples."""

    t: np.ndarray
    values: np.ndarray
    alpha: float = 0.25
    derivative: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("Hölder exponent must lie in (0, 1)")

    def seminorm(self, f=None) -> float:
        f = self.values if f is None else f
        # distances to T resolve time differences near T exactly
        t = np.asarray(self.t if self.sigma is None else self.sigma)
        best = 0.0
        for k in range(1, t.size):
            dt = np.abs(t[k:] - t[:-k])
            df = np.abs(f[k:] - f[:-k])
            ok = dt > 0
            if np.any(ok):
                best = max(best, float(np.max(df[ok] / dt[ok] ** self.alpha)))
        return best

    def norm0(self) -> float:
        """C^{0,α} norm."""
        return float(np.max(np.abs(self.values))) + self.seminorm()

    def norm1(self) -> float:
        """C^{1,α} norm (needs derivative samples)."""
        if self.derivative is None:
            raise DomainError("derivative samples required")
        return (float(np.max(np.abs(self.values))) + float(np.max(np.abs(self.derivative)))
                + self.seminorm(self.derivative))


def _singular_solution(grid: PanelGrid, h: np.ndarray, eps: float):
    """λ and dλ/dt at the grid nodes for 0 < ε < 4 (no range check)."""
    sig = grid.sigma
    g = sig ** (4.0 - eps) * h
    # below the first panel edge h is taken constant
    tail = h[0] * math.exp((4.0 - eps) * grid.edges[0]) / (4.0 - eps)
    integral = tail + grid.cumulative(g)
    lam = -sig ** eps * integral
    lam_dot = -eps * lam / sig + sig ** 3 * h
    return lam, lam_dot


def solve_singular_ode(h: Union[Callable, HolderSample], eps: float, T: float,
                       grid: Optional[PanelGrid] = None, alpha: float = 0.25) -> HolderSample:
    """Solve dλ/dt + ε λ/(T-t) = (T-t)³ h with λ(T) = 0.

    Parameters
    ----------
    h : callable or HolderSample
        Source as a function of time, or samples on ``grid``'s nodes.
    eps : float
        Coefficient, strictly between 0 and 1/2.
    T : float
        Terminal time.
    grid : PanelGrid, optional
        Time grid (default: 52 octaves, 16 nodes each).

    Returns
    -------
    HolderSample
        λ on the grid nodes (ascending time) with its derivative.
    """
    if not 0.0 < eps < 0.5:
        raise DomainError(f"eps must lie in (0, 1/2), got {eps}")
    grid = PanelGrid(T) if grid is None else grid
    if isinstance(h, HolderSample):
        hv = np.asarray(h.values, dtype=float)[::-1]
    else:
        hv = np.asarray(h(grid.t), dtype=float) * np.ones(grid.t.shape)
    if not np.all(np.isfinite(hv)):
        raise PrecisionError("source is not finite on the grid")
    lam, lam_dot = _singular_solution(grid, hv, eps)
    # report in ascending time
    return HolderSample(grid.t[::-1], lam[::-1], alpha, lam_dot[::-1], grid.sigma[::-1])


def singular_ode_residual(sol: HolderSample, h_values, eps: float, T: float, grid: PanelGrid) -> float:
    """Max over nodes of |dλ/dt + ελ/σ - σ³h| using spectral differentiation of λ."""
    lam = np.asarray(sol.values)[::-1]
    hv = np.asarray(h_values)[::-1]
    sig = grid.sigma
    dlam_dt = -grid.derivative(lam) / sig
    return float(np.max(np.abs(dlam_dt + eps * lam / sig - sig ** 3 * hv)))


# ---------------------------------------------------------------------------
# truncated kernel integrals


@dataclass(frozen=True)
class BallIntegrals:
    """Kernel integrals over the ball of radius 2R and its complement."""

    R: float
    I6: float
    I6_ext: float
    Imix: float
    Imix_ext: float
    J2: float
    Id: float
    Id_ext: float
    K1: float

    @property
    def I6_ball(self):
        return self.I6 - self.I6_ext

    @property
    def Imix_ball(self):
        return self.Imix - self.Imix_ext

    @property
    def Id_ball(self):
        return self.Id - self.Id_ext


@lru_cache(maxsize=16)
def ball_integrals(R: float) -> BallIntegrals:
    mc = mass_constants()
    spec = QuadratureSpec(tol=1e-11)
    k1_f = lambda r: potential(r) * bubble_dr(r) * r / 5.0
    k1_full = radial_integral(k1_f, spec).value
    if math.isinf(R):
        return BallIntegrals(R, mc.I_6, 0.0, mc.I_mix, 0.0, math.inf, mc.I_d, 0.0, k1_full)
    D = 2.0 * R
    e6 = ball_complement_integral(lambda r: dilation_radial(r) ** 2, D, spec)
    emix = ball_complement_integral(lambda r: potential(r) * dilation_radial(r), D, spec)
    ed = ball_complement_integral(lambda r: bubble_dr(r) ** 2 / 5.0, D, spec)
    ek1 = ball_complement_integral(k1_f, D, spec)
    j2 = radial_integral(lambda r: r * r * potential(r) * dilation_radial(r),
                         QuadratureSpec(tol=1e-11, tail=False), r_max=D).value
    return BallIntegrals(R, mc.I_6, e6, mc.I_mix, emix, j2, mc.I_d, ed, k1_full - ek1)


# ---------------------------------------------------------------------------
# trajectory


@dataclass
class PicardLog:
    """Record of one Picard solve."""

    bubble: int
    eps: float
    factors: List[float] = field(default_factory=list)
    increments: List[float] = field(default_factory=list)
    contributions: Dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    @property
    def contraction(self) -> float:
        """Largest contraction factor after the warm-up iterate."""
        f = self.factors[1:] if len(self.factors) > 1 else self.factors
        return max(f) if f else 0.0


@dataclass
class ModulationTrajectory:
    """Scales and centres of the two bubbles on a :class:`PanelGrid`.

    Node arrays are stored in increasing ``σ = T - t`` order.
    """

    fields: AnsatzFields
    grid: PanelGrid
    kappa1: float
    kappa2: float
    lam0: np.ndarray
    lam1: np.ndarray
    lam_dot: np.ndarray
    xi_dev: np.ndarray
    xi_dot: np.ndarray
    eps: Tuple[float, float]
    logs: List[PicardLog] = field(default_factory=list)
    xi_cut: Optional[float] = None

    @property
    def T(self) -> float:
        return self.fields.T

    @property
    def lam(self) -> np.ndarray:
        return self.lam0 + self.lam1

    @property
    def xi_terminal(self) -> np.ndarray:
        return np.stack([np.zeros(5), self.fields.q])

    @property
    def xi(self) -> np.ndarray:
        return self.xi_terminal[:, None, :] + self.xi_dev

    def kappa(self, i: int) -> float:
        return self.kappa1 if i == 1 else self.kappa2

    def _u(self, t=None, sigma=None):
        if sigma is None:
            t = np.atleast_1d(np.asarray(t, dtype=float))
            if np.any(t >= self.T) or np.any(t < 0):
                raise DomainError("time outside [0, T)")
            sigma = self.T - t
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if np.any(sigma <= 0) or np.any(sigma > self.T):
            raise DomainError("time outside [0, T)")
        return np.log(sigma), sigma

    def lam_at(self, i: int, t=None, sigma=None):
        """Scale of bubble ``i`` at arbitrary times (or distances ``σ = T - t``)."""
        u, s = self._u(t, sigma)
        ratio = self.grid.interpolate(self.lam[i - 1] / self.lam0[i - 1], u)
        return ratio * self.kappa(i) ** 2 * s ** _POWERS[i] / _DENOMS[i]

    def lam_dot_at(self, i: int, t=None, sigma=None):
        u, s = self._u(t, sigma)
        lead = -_POWERS[i] * self.lam0[i - 1] / self.grid.sigma
        ratio = self.grid.interpolate(self.lam_dot[i - 1] / lead, u)
        return -ratio * _POWERS[i] * self.kappa(i) ** 2 * s ** (_POWERS[i] - 1) / _DENOMS[i]

    def xi_at(self, i: int, t=None, sigma=None):
        u, _ = self._u(t, sigma)
        return self.xi_terminal[i - 1] + self.grid.interpolate(self.xi_dev[i - 1], u)

    def xi_dot_at(self, i: int, t=None, sigma=None):
        u, _ = self._u(t, sigma)
        return self.grid.interpolate(self.xi_dot[i - 1], u)

    def to_rows(self):
        """Rows (t, λ1, λ2, ξ1, ξ2, dλ1/dt, dλ2/dt, dξ1/dt, dξ2/dt) in ascending time."""
        t = self.T - self.grid.sigma
        order = np.argsort(t)
        rows = []
        for k in order:
            rows.append([t[k], self.lam[0, k], self.lam[1, k], *self.xi[0, k], *self.xi[1, k],
                         self.lam_dot[0, k], self.lam_dot[1, k], *self.xi_dot[0, k], *self.xi_dot[1, k]])
        return rows

    @staticmethod
    def header():
        cols = ["t", "lambda1", "lambda2"]
        cols += [f"xi1_{k}" for k in range(1, 6)] + [f"xi2_{k}" for k in range(1, 6)]
        cols += ["dlambda1", "dlambda2"]
        cols += [f"dxi1_{k}" for k in range(1, 6)] + [f"dxi2_{k}" for k in range(1, 6)]
        return cols


def _forcing_parts(fields: AnsatzFields, points: np.ndarray, sig: np.ndarray):
    """Per-component forcing values and Laplacians (Z1 part, Z2 part, ψ part)."""
    t = fields.T - sig
    a = fields.Z1_eta(points, t, True, sig)
    c = fields.psi.field(points, t, True, sig)
    z2 = np.empty(len(sig))
    z2_lap = np.empty(len(sig))
    for k, tk in enumerate(t):
        b = fields.Z2(points[k:k + 1], float(tk), True)
        z2[k], z2_lap[k] = b[0][0], b[2][0]
    return {"Z1": (-a[0], -a[2]), "Z2": (-z2, -z2_lap), "psi": (c[0], c[2])}


def _picard(i: int, fields: AnsatzFields, grid: PanelGrid, kappa: float, xi: np.ndarray,
            bi: BallIntegrals, eps_split: Optional[float], tol: float, max_iter: int,
            warmup: int = 2) -> Tuple[np.ndarray, np.ndarray, PicardLog]:
    sig = grid.sigma
    t = fields.T - sig
    power = _POWERS[i]
    lam0 = kappa ** 2 * sig ** power / _DENOMS[i]
    lam0_dot = -power * lam0 / sig
    eps_exact = 2.0 if i == 1 else 1.0
    eps = eps_exact if eps_split is None else eps_split
    # value of the leading forcing model: F ≈ -Mσ or F ≈ -Z2,0(q)
    if i == 1:
        model = -fields.M * sig
    else:
        model = -np.full_like(sig, float(fields.seed(fields.q[None, :])[0]))
    parts = _forcing_parts(fields, xi, sig)
    lam1 = np.zeros_like(sig)
    lam1_dot = np.zeros_like(sig)
    plog = PicardLog(i, eps)
    prev_inc = None
    for it in range(1, max_iter + 1):
        lam = lam0 + lam1
        if np.any(lam <= 0):
            raise DivergenceError("scale iterate lost positivity", factor=float("inf"))
        root = np.sqrt(lam)
        root0 = np.sqrt(lam0)
        lam_dot = lam0_dot + lam1_dot
        terms = {}
        terms["truncation_W6"] = bi.I6_ext * lam_dot / bi.I6
        # P6 - κ I6 σ^{k} = Σ F_c Jball + Σ λ²/10 ΔF_c J2 - model Imix
        terms["truncation_mix"] = -root * (model * (bi.Imix_ball - bi.Imix)) / bi.I6
        for name, (val, lap) in parts.items():
            vv = val - (model if name == ("Z1" if i == 1 else "Z2") else 0.0)
            terms[f"{name}_value"] = -root * vv * bi.Imix_ball / bi.I6
            quad2 = np.where(lap == 0, 0.0, lam ** 2 / 10.0 * lap * (bi.J2 if np.isfinite(bi.J2) else 0.0))
            terms[f"{name}_quadratic"] = -root * quad2 / bi.I6
        terms["quadratic"] = kappa * (sig if i == 1 else 1.0) * lam1 ** 2 / (2.0 * root0 * (root + root0) ** 2)
        rhs = sum(terms.values())
        source = rhs + (eps - eps_exact) * lam1 / sig
        h = source / sig ** 3
        new1, new1_dot = _singular_solution(grid, h, eps)
        inc = float(np.max(np.abs(new1 - lam1) / lam0))
        plog.increments.append(inc)
        if prev_inc is not None and prev_inc > 0:
            plog.factors.append(inc / prev_inc)
            if it > warmup and inc / prev_inc >= 1.0 and inc > tol:
                raise DivergenceError(f"Picard contraction factor {inc / prev_inc:.3f} >= 1 "
                                      f"(bubble {i}); reduce M or T", factor=inc / prev_inc)
        lam1, lam1_dot = new1, new1_dot
        prev_inc = inc
        plog.iterations = it
        log.debug("bubble %d iterate %d increment %.3e", i, it, inc)
        if inc <= tol:
            break
    scale = np.abs(lam0_dot)
    plog.contributions = {k: float(np.max(np.abs(v) / scale)) for k, v in terms.items()}
    psi_bound = _psi_bound(fields, xi, sig, lam0 + lam1, bi)
    plog.contributions["psi_envelope_bound"] = float(np.max(psi_bound / scale))
    return lam1, lam1_dot, plog


@lru_cache(maxsize=1)
def _abs_mix() -> float:
    return radial_integral(lambda r: np.abs(potential(r) * dilation_radial(r)),
                           QuadratureSpec(tol=1e-9)).value


def _psi_bound(fields, xi, sig, lam, bi):
    """Worst-case size of the ψ contribution to the scale equation."""
    env = fields.psi.envelope(xi, fields.T - sig, sig)
    return np.sqrt(lam) * env * _abs_mix() / bi.I6


def solve_lambda1_correction(fields: AnsatzFields = AnsatzFields(), grid: Optional[PanelGrid] = None,
                             xi: Optional[np.ndarray] = None, eps_split: Optional[float] = None,
                             tol: float = 1e-14, max_iter: int = 60, bubbles=(1, 2)):
    """Picard iteration for the scale corrections of both bubbles.

    Parameters
    ----------
    fields : AnsatzFields
        Given fields (M, T, Z2 seed, ψ model, R).
    grid : PanelGrid, optional
    xi : ndarray, shape (2, N, 5), optional
        Centres at the grid nodes; defaults to the terminal values.
    eps_split : float, optional
        Coefficient kept in the singular solve; the remainder of the exact
        linear coefficient (2 for bubble 1, 1 for bubble 2) is iterated
        explicitly.  ``None`` keeps the exact coefficient.

    Returns
    -------
    lam0, lam1, lam_dot : ndarray, shape (2, N)
    logs : list of PicardLog
    """
    grid = PanelGrid(fields.T) if grid is None else grid
    sig = grid.sigma
    k1 = kappa1(fields.M)
    z2q = float(fields.seed(fields.q[None, :])[0]) if fields.include_z2 else 0.0
    k2 = kappa2(z2q) if z2q > 0 else 0.0
    if xi is None:
        xi = np.stack([np.zeros((sig.size, 5)), np.tile(fields.q, (sig.size, 1))])
    bi = ball_integrals(fields.R)
    lam0 = np.zeros((2, sig.size))
    lam1 = np.zeros((2, sig.size))
    lam_dot = np.zeros((2, sig.size))
    logs = []
    for i in bubbles:
        kap = k1 if i == 1 else k2
        if kap <= 0:
            raise DomainError(f"bubble {i} has no driving term")
        l1, l1d, plog = _picard(i, fields, grid, kap, xi[i - 1], bi, eps_split, tol, max_iter)
        lam0[i - 1] = kap ** 2 * sig ** _POWERS[i] / _DENOMS[i]
        lam1[i - 1] = l1
        lam_dot[i - 1] = -_POWERS[i] * lam0[i - 1] / sig + l1d
        logs.append(plog)
    return lam0, lam1, lam_dot, logs, (k1, k2)


def _xi_rhs(i, fields, bi, lam, xi, sig):
    """dξ/dt = -λ^{3/2} K1 ∇F(ξ) / ∫_{B2R}(∂1U)²."""
    _, grad, _ = fields.forcing(xi[None, :], fields.T - sig, True, sigma=sig)
    return -lam ** 1.5 * bi.K1 * grad[0] / bi.Id_ball


def solve_xi(fields: AnsatzFields, grid: PanelGrid, lam: np.ndarray, kappas: Tuple[float, float],
             underflow: float = 1e-290):
    """Integrate both centres backward from ξ1(T) = 0, ξ2(T) = q.

    Classical RK4 in ``u = log σ`` between consecutive nodes; scales at the
    stage points come from spectral interpolation of λ/λ_{i,0}.

    Returns
    -------
    xi_dev : ndarray, shape (2, N, 5)
        ξ_i - ξ_i(T) at the nodes.
    xi_dot : ndarray, shape (2, N, 5)
    cut : float or None
        Smallest σ kept if the terminal layer had to be truncated.
    """
    bi = ball_integrals(fields.R)
    u = grid.u
    sig = grid.sigma
    terminal = [np.zeros(5), fields.q.astype(float)]
    xi_dev = np.zeros((2, u.size, 5))
    xi_dot = np.zeros((2, u.size, 5))
    cut = None
    for i in (1, 2):
        kap = kappas[i - 1]
        power = _POWERS[i]
        ratio = lam[i - 1] / (kap ** 2 * sig ** power / _DENOMS[i])
        coeffs = grid._coeffs(ratio)[:, :, 0]

        def lam_u(uu):
            p, x = grid.locate(uu)
            r = L.legval(x[0], coeffs[p[0]])
            return r * kap ** 2 * math.exp(power * uu) / _DENOMS[i]

        def f(uu, dev):
            s = math.exp(uu)
            # dξ/du = -σ dξ/dt
            return -s * _xi_rhs(i, fields, bi, lam_u(uu), terminal[i - 1] + dev, s)

        start = 0
        while start < u.size and lam[i - 1, start] < underflow:
            start += 1
        if start >= u.size:
            raise PrecisionError("scale underflows on the whole grid")
        if start > 0:
            cut = float(sig[start]) if cut is None else max(cut, float(sig[start]))
            log.warning("terminal layer below sigma=%.3e truncated for bubble %d", sig[start], i)
        # below the first kept node dξ/dt ~ σ^{3k/2}
        d0 = _xi_rhs(i, fields, bi, lam[i - 1, start], terminal[i - 1], sig[start])
        dev = -d0 * sig[start] / (1.5 * power + 1.0)
        xi_dev[i - 1, start] = dev
        for k in range(start, u.size - 1):
            h = u[k + 1] - u[k]
            a = u[k]
            k1 = f(a, dev)
            k2 = f(a + 0.5 * h, dev + 0.5 * h * k1)
            k3 = f(a + 0.5 * h, dev + 0.5 * h * k2)
            k4 = f(a + h, dev + h * k3)
            dev = dev + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            xi_dev[i - 1, k + 1] = dev
        for k in range(start, u.size):
            xi_dot[i - 1, k] = _xi_rhs(i, fields, bi, lam[i - 1, k], terminal[i - 1] + xi_dev[i - 1, k], sig[k])
    return xi_dev, xi_dot, cut


def solve_trajectory(fields: AnsatzFields = AnsatzFields(), grid: Optional[PanelGrid] = None,
                     eps_split: Optional[float] = None, passes: int = 2, tol: float = 1e-14,
                     max_iter: int = 60) -> ModulationTrajectory:
    """Scales by Picard iteration, then centres, alternated ``passes`` times."""
    grid = PanelGrid(fields.T) if grid is None else grid
    xi = None
    for _ in range(passes):
        lam0, lam1, lam_dot, logs, kap = solve_lambda1_correction(fields, grid, xi, eps_split, tol, max_iter)
        xi_dev, xi_dot, cut = solve_xi(fields, grid, lam0 + lam1, kap)
        xi = np.stack([xi_dev[0], fields.q + xi_dev[1]])
    return ModulationTrajectory(fields, grid, kap[0], kap[1], lam0, lam1, lam_dot, xi_dev, xi_dot,
                                tuple(l.eps for l in logs), logs, cut)


# ---------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    n: int


def fit_rate(sigma, values) -> RateFit:
    """Least-squares line through (log σ, log value).

    Requires at least 10 samples spanning two decades of σ.
    """
    s = np.asarray(sigma, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0) or np.any(s <= 0):
        raise DomainError("rate fits need positive samples")
    if s.size < 10:
        raise DomainError("at least 10 samples are needed")
    if math.log10(s.max() / s.min()) < 2.0:
        raise DomainError("samples must span two decades")
    x = np.log(s)
    y = np.log(v)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.max(np.abs(A @ coef - y)))
    return RateFit(float(coef[0]), float(coef[1]), res, int(s.size))
