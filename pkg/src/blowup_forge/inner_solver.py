"""Linearized inner problem on the ball of radius 2R, one angular mode at a time.

In the stretched time ``s = ∫ λ(t)^{-2} dt`` the problem

    λ² ∂_t φ = Δ_y φ + pU^{p-1} φ + h,   φ = 0 on |y| = 2R,   φ(·, 0) = l W0

becomes ``φ_s = L φ + h``.  For the radial mode ``l = 0`` and the first
harmonic ``l = 1`` (``φ = f(ρ) y_j/ρ``) the operator is

    f'' + (4/ρ) f' - l(l+3)/ρ² f + pU^{p-1} f,

discretized by finite volumes on a stretched cell-centred grid (the flux
form ``ρ^{-4}(ρ⁴ f')'`` is symmetric in the discrete ρ⁴-weighted inner
product) and advanced by backward Euler with Richardson extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq
from scipy.linalg import eigh_tridiagonal, solve_banded

from .ansatz import eta
from .bubble_core import bubble_dr, dilation_radial, potential, solve_negative_mode
from .errors import ConditioningError, DomainError, InstabilityError
from .quad import OMEGA4


# ---------------------------------------------------------------------------
# norms


@dataclass(frozen=True)
class WeightedNormSpec:
    """Weights of the inner norms.

    Attributes
    ----------
    a : float
        Decay exponent in (0, 1).
    nu : float
        Rate exponent.
    R : float
        Inner radius.
    lam_ref : callable
        Reference scale ``λ_{i,0}(t)`` used as the gauge ``λ_{i,0}^{-ν}``.
    """

    a: float
    nu: float
    R: float
    lam_ref: Callable

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise DomainError("a must lie strictly between 0 and 1")
        if not self.nu > 0 or not self.R > 0:
            raise DomainError("ν and R must be positive")


@dataclass(frozen=True)
class NormValue:
    value: float
    t: float
    rho: float


def weighted_norm(samples, times, rho, kind: str, norms: WeightedNormSpec, decay: float = None) -> NormValue:
    """Sup-norm with the inner weights and the location of the sup.

    ``kind = "source"``: ``sup λ_{i,0}^{-ν} (1 + ρ^decay) |h|`` with
    ``decay = 2 + a`` by default.  ``kind = "solution"``:
    ``sup λ_{i,0}^{-ν} (1 + ρ⁶) R^{-(6-a)} |φ|``.

    Parameters
    ----------
    samples : array_like, shape (n_times, n_rho)
    times, rho : array_like
    """
    f = np.asarray(samples, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    rho = np.asarray(rho, dtype=float)
    if f.size == 0:
        raise DomainError("empty sample set")
    f = f.reshape(len(times), len(rho))
    gauge = np.array([norms.lam_ref(t) for t in times]) ** -norms.nu
    if kind == "source":
        d = 2.0 + norms.a if decay is None else decay
        w = 1.0 + rho ** d
    elif kind == "solution":
        w = (1.0 + rho ** 6) * norms.R ** -(6.0 - norms.a)
    else:
        raise DomainError("kind must be 'source' or 'solution'")
    weighted = gauge[:, None] * w[None, :] * np.abs(f)
    k = np.unravel_index(int(np.argmax(weighted)), weighted.shape)
    return NormValue(float(weighted[k]), float(times[k[0]]), float(rho[k[1]]))


# ---------------------------------------------------------------------------
# grid and operator


@dataclass(frozen=True)
class InnerGrid:
    """Cell-centred grid on [0, 2R] with cells refined near the origin.

    Faces are ``2R sinh(β x)/sinh(β)`` for uniform ``x`` in [0, 1].  By
    default ``β`` is chosen so that the innermost cell has width
    ``core / n`` whatever the radius.
    """

    R: float
    n: int = 400
    stretch: Optional[float] = None
    core: float = 3.0

    def __post_init__(self):
        if not self.R > 0 or self.n < 8:
            raise DomainError("need R > 0 and at least 8 cells")

    @cached_property
    def beta(self) -> float:
        if self.stretch is not None:
            return float(self.stretch)
        target = self.core / (2.0 * self.R)
        if target >= 1.0:
            return 1e-6
        return brentq(lambda b: b / math.sinh(b) - target, 1e-6, 200.0)

    @cached_property
    def faces(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n + 1)
        b = self.beta
        return 2.0 * self.R * np.sinh(b * x) / math.sinh(b)

    @cached_property
    def centres(self) -> np.ndarray:
        f = self.faces
        # centre of ρ⁴ mass keeps the quadrature second order
        return 0.5 * (f[1:] + f[:-1])

    @cached_property
    def volumes(self) -> np.ndarray:
        f = self.faces
        return OMEGA4 * (f[1:] ** 5 - f[:-1] ** 5) / 5.0

    def refined(self) -> "InnerGrid":
        return InnerGrid(self.R, 2 * self.n, self.stretch, self.core)

    def inner(self, f, g) -> float:
        return math.fsum(np.asarray(f) * np.asarray(g) * self.volumes)


def _operator_bands(grid: InnerGrid, l: int):
    """Tridiagonal bands (lower, diag, upper) of the discrete mode operator."""
    if l not in (0, 1):
        raise DomainError("only the modes l = 0 and l = 1 are supported")
    f = grid.faces
    c = grid.centres
    flux = OMEGA4 * f ** 4
    lower = np.zeros(grid.n)
    upper = np.zeros(grid.n)
    diag = np.zeros(grid.n)
    # interior faces
    k = flux[1:-1] / (c[1:] - c[:-1])
    upper[:-1] = k
    lower[1:] = k
    diag[:-1] -= k
    diag[1:] -= k
    # Dirichlet value at the outer face
    diag[-1] -= flux[-1] / (f[-1] - c[-1])
    diag /= grid.volumes
    upper /= grid.volumes
    lower /= grid.volumes
    diag += potential(c) - l * (l + 3) / c ** 2
    return lower, diag, upper


def apply_operator(grid: InnerGrid, l: int, values):
    lo, di, up = _operator_bands(grid, l)
    v = np.asarray(values, dtype=float)
    out = di * v
    out[1:] += lo[1:] * v[:-1]
    out[:-1] += up[:-1] * v[1:]
    return out


# ---------------------------------------------------------------------------
# kernels and projection


def mode_kernels(l: int) -> Tuple[Callable, ...]:
    """Radial profiles of the kernels of L0 in mode ``l``."""
    if l == 0:
        return (dilation_radial,)
    if l == 1:
        return (bubble_dr,)
    raise DomainError("only the modes l = 0 and l = 1 are supported")


@lru_cache(maxsize=16)
def _ball_radial_rule(R: float, panels: int = 96, order: int = 16):
    x, w = leggauss(order)
    edges = np.concatenate([[0.0], np.geomspace(min(1e-3, 1e-3 * R), 2.0 * R, panels)])
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel() * r ** 4 * OMEGA4
    return r, wr


def interior_bump(R: float) -> Callable:
    """``χ_R(ρ) = η(ρ/R)``: 1 below R and 0 above 2R."""
    return lambda r: eta(np.asarray(r) / R)


@dataclass(frozen=True)
class ProjectedSource:
    """``h - Σ c_j W_j χ_R`` for the kernels of the given mode."""

    base: Callable
    l: int
    R: float
    coeffs: Tuple[float, ...]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        chi = interior_bump(self.R)(r)
        out = np.asarray(self.base(r), dtype=float)
        for c, W in zip(self.coeffs, mode_kernels(self.l)):
            out = out - c * W(r) * chi
        return out


def project_orthogonal(h: Callable, l: int, R: float) -> ProjectedSource:
    """Remove the kernel components of a radial-mode source on the ball ``B_{2R}``.

    Inner products are ``∫_0^{2R} f g ω4 ρ⁴ dρ`` (the angular factor of
    the mode is common to both sides and drops out).

    Raises
    ------
    ConditioningError
        If the Gram matrix of the kernels against ``W_j χ_R`` is singular.
    """
    r, w = _ball_radial_rule(R)
    chi = interior_bump(R)(r)
    kernels = [W(r) for W in mode_kernels(l)]
    G = np.array([[math.fsum(Wi * Wj * chi * w) for Wj in kernels] for Wi in kernels])
    scale = max(math.fsum(W * W * w) for W in kernels)
    det = np.linalg.det(G)
    if not np.isfinite(det) or abs(det) <= 1e-12 * scale ** len(kernels) or scale == 0.0:
        raise ConditioningError("kernel Gram matrix is singular; increase R")
    hv = np.asarray(h(r), dtype=float)
    rhs = np.array([math.fsum(hv * W * w) for W in kernels])
    c = np.linalg.solve(G, rhs)
    return ProjectedSource(h, l, R, tuple(float(v) for v in c))


def projection_residual(h: Callable, l: int, R: float) -> np.ndarray:
    """``|∫ h W_j| / (‖h‖ ‖W_j‖)`` on the ball for the kernels of mode ``l``."""
    r, w = _ball_radial_rule(R)
    hv = np.asarray(h(r), dtype=float)
    hn = math.sqrt(math.fsum(hv * hv * w))
    out = []
    for W in mode_kernels(l):
        Wv = W(r)
        wn = math.sqrt(math.fsum(Wv * Wv * w))
        out.append(abs(math.fsum(hv * Wv * w)) / (hn * wn) if hn > 0 else 0.0)
    return np.array(out)


# ---------------------------------------------------------------------------
# time stepping


@dataclass
class InnerProblem:
    """Radial-mode inner problem.

    Attributes
    ----------
    l : int
        Angular mode (0 or 1).
    source : callable
        ``h(ρ, t)`` evaluated on arrays of radii.
    lam : callable
        Scale law ``λ(t)``.
    t0 : float
        Initial time.
    span : float
        Length of the run in ``s = ∫ λ^{-2} dt``.
    R : float
        Inner radius (Dirichlet data at ``2R``).
    l_coef : float, optional
        Coefficient of ``W0`` in the initial data; ``None`` means it is
        determined by shooting (mode 0 only).
    """

    l: int
    source: Callable
    lam: Callable
    t0: float
    span: float
    R: float
    l_coef: Optional[float] = None


@dataclass
class InnerSolution:
    """Snapshots of the inner solution.

    Attributes
    ----------
    s, t : ndarray
        Stretched and physical times of the snapshots.
    rho : ndarray
        Cell centres.
    phi : ndarray, shape (n_snap, n_rho)
    l_coef : float
    final_residual : float
        ``e^{-μS}`` times the final ``W0`` coefficient after shooting.
    """

    s: np.ndarray
    t: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    l_coef: float
    final_residual: float
    grid: InnerGrid
    mode: int = 0

    def kernel_components(self) -> np.ndarray:
        """Largest ``|⟨φ, W_j⟩| / (‖φ‖ ‖W_j‖)`` per snapshot for the mode kernels."""
        g = self.grid
        out = np.zeros(len(self.s))
        for W in mode_kernels(self.mode):
            wv = W(g.centres)
            wn = math.sqrt(g.inner(wv, wv))
            for k, p in enumerate(self.phi):
                pn = math.sqrt(g.inner(p, p))
                if pn > 0:
                    out[k] = max(out[k], abs(g.inner(p, wv)) / (pn * wn))
        return out


@lru_cache(maxsize=1)
def _negative_mode():
    return solve_negative_mode()


def negative_eigenvalue() -> float:
    """``|λ0|`` from the shooting solver."""
    return abs(_negative_mode().eigenvalue)


def sampled_negative_mode(grid: InnerGrid) -> np.ndarray:
    """``W0`` (with ``W0(0) = 1``) at the cell centres; zero beyond its table."""
    nm = _negative_mode()
    r = grid.centres
    top = nm.profile.r[-1]
    v = np.asarray(nm.profile(np.minimum(r, top)), dtype=float)
    return np.where(r <= top, v, 0.0)


@lru_cache(maxsize=32)
def _discrete_negative_mode(grid: InnerGrid):
    """Top eigenpair of the discrete mode-0 operator, scaled like ``W0``."""
    lo, di, up = _operator_bands(grid, 0)
    sv = np.sqrt(grid.volumes)
    # symmetric form V^{1/2} A V^{-1/2}
    off = up[:-1] * sv[:-1] / sv[1:]
    mu, vec = eigh_tridiagonal(di, off, select="i", select_range=(grid.n - 1, grid.n - 1))
    e = vec[:, 0] / sv
    e = e / math.sqrt(grid.inner(e, e))
    w0 = sampled_negative_mode(grid)
    e = e * grid.inner(w0, e)
    return float(mu[0]), e


def _stretched_times(lam: Callable, t0: float, s_nodes: np.ndarray) -> np.ndarray:
    if s_nodes[-1] == 0:
        return np.full_like(s_nodes, t0)
    sol = solve_ivp(lambda s, t: [lam(t[0]) ** 2], (0.0, s_nodes[-1]), [t0], t_eval=s_nodes,
                    rtol=1e-12, atol=1e-14 * max(abs(t0), lam(t0) ** 2 * s_nodes[-1]), method="DOP853")
    if not sol.success:
        raise DomainError("scale law could not be integrated: " + sol.message)
    return sol.y[0]


def _s_nodes(span: float, steps: int) -> np.ndarray:
    """Uniform steps up to ``s = 1`` then geometric growth."""
    if span <= 1.0:
        return np.linspace(0.0, span, steps + 1)
    n1 = steps // 2
    head = np.linspace(0.0, 1.0, n1 + 1)
    tail = np.geomspace(1.0, span, steps - n1 + 1)[1:]
    return np.concatenate([head, tail])


def _be_march(grid, l, src, s_nodes, psi0, keep, project=None):
    """Backward Euler on ``ψ_s = Aψ + src`` over ``s_nodes``; returns states at ``keep``."""
    lo, di, up = _operator_bands(grid, l)
    psi = np.array(psi0, dtype=float)
    out = {0: psi.copy()} if 0 in keep else {}
    ab = np.zeros((3, grid.n))
    last = None
    for k in range(1, len(s_nodes)):
        ds = s_nodes[k] - s_nodes[k - 1]
        if last is None or ds != last:
            ab[0, 1:] = -ds * up[:-1]
            ab[1] = 1.0 - ds * di
            ab[2, :-1] = -ds * lo[1:]
            last = ds
        psi = solve_banded((1, 1), ab, psi + ds * src[k], check_finite=False)
        if project is not None:
            psi = project(psi)
        if k in keep:
            out[k] = psi.copy()
    return np.array([out[k] for k in sorted(keep)])


def _exp_weights(mu: float, ds: np.ndarray):
    """Weights of ``∫_0^ds e^{-μ s} f`` for ``f`` linear between its end values."""
    x = mu * ds
    em = -np.expm1(-x)  # 1 - e^{-x}
    # ∫_0^1 e^{-x u}(1-u) du and ∫_0^1 e^{-x u} u du, written to stay accurate for small x
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    w_left = np.where(small, 0.5 - x / 6 + x * x / 24, (x - em) / (xs * xs))
    w_right = np.where(small, 0.5 - x / 3 + x * x / 8, (em - x * np.exp(-x)) / (xs * xs))
    return ds * w_left, ds * w_right


def _scalar_path(mu, s_nodes, h0, terminal):
    """Backward-stable solution of ``a' = μ a + h0`` with ``a(S) = terminal``."""
    ds = np.diff(s_nodes)
    wl, wr = _exp_weights(mu, ds)
    a = np.empty_like(s_nodes)
    a[-1] = terminal
    # a(s_k) = e^{-μ ds} a(s_{k+1}) - ∫_0^ds e^{-μ u} h0(s_k + u) du
    for k in range(len(ds) - 1, -1, -1):
        a[k] = math.exp(-mu * ds[k]) * a[k + 1] - (wl[k] * h0[k] + wr[k] * h0[k + 1])
    return a


def solve_inner_mode(prob: InnerProblem, norms: WeightedNormSpec = None, grid: InnerGrid = None,
                     steps: int = 800, n_snap: int = 40, tol: float = 1e-13,
                     max_doublings: int = 60) -> InnerSolution:
    """Solve the inner problem for one angular mode.

    In mode 0 the state is split along the discrete negative eigenvector
    ``e0 ≈ W0``.  The complement is advanced by backward Euler with
    Richardson extrapolation; the ``W0`` coordinate obeys
    ``a' = μ a + ⟨h, e0⟩`` and is integrated exactly for piecewise linear
    forcing.  Its final value is affine in ``l``; ``l`` is bracketed by
    doubling and refined by bisection until the growth-normalized final
    coefficient ``e^{-μS} a(S)`` is below ``tol`` relative.  The tuned
    path is then rebuilt backward from ``a(S) = 0``, the only stable
    direction in which it can be evaluated.

    Raises
    ------
    InstabilityError
        If no bracket is found; carries the measured growth rate ``μ``.
    """
    if prob.R <= 0 or prob.span <= 0:
        raise DomainError("R and the run length must be positive")
    if not prob.lam(prob.t0) > 0:
        raise DomainError("scale must be positive")
    grid = InnerGrid(prob.R) if grid is None else grid
    if grid.R != prob.R:
        raise DomainError("grid radius differs from the problem radius")
    if norms is not None and norms.R != prob.R:
        raise DomainError("norm radius differs from the problem radius")

    coarse = _s_nodes(prob.span, steps)
    fine = np.empty(2 * len(coarse) - 1)
    fine[0::2] = coarse
    fine[1::2] = 0.5 * (coarse[1:] + coarse[:-1])
    t_fine = _stretched_times(prob.lam, prob.t0, fine)
    src_fine = np.array([np.asarray(prob.source(grid.centres, t), dtype=float) * np.ones(grid.n)
                         for t in t_fine])
    stride = max(1, steps // n_snap)
    keep = sorted(set(list(range(0, steps + 1, stride)) + [steps]))

    if prob.l != 0:
        zero = np.zeros(grid.n)
        pc = _be_march(grid, prob.l, src_fine[0::2], coarse, zero, set(keep))
        pf = _be_march(grid, prob.l, src_fine, fine, zero, {2 * k for k in keep})
        return InnerSolution(coarse[keep], t_fine[0::2][keep], grid.centres, 2.0 * pf - pc, 0.0, 0.0,
                             grid, prob.l)

    mu, e0 = _discrete_negative_mode(grid)
    e0_sq = grid.inner(e0, e0)

    def project(v):
        return v - (grid.inner(v, e0) / e0_sq) * e0

    h0 = np.array([grid.inner(h, e0) / e0_sq for h in src_fine])
    src_perp = np.array([project(h) for h in src_fine])
    zero = np.zeros(grid.n)
    pc = _be_march(grid, 0, src_perp[0::2], coarse, zero, set(keep), project)
    pf = _be_march(grid, 0, src_perp, fine, zero, {2 * k for k in keep}, project)
    psi = 2.0 * pf - pc

    # normalized final coefficient F(l) = e^{-μS} a(S) = l + ∫_0^S e^{-μ s} h0(s) ds
    ds = np.diff(fine)
    wl, wr = _exp_weights(mu, ds)
    disc = np.exp(-mu * fine[:-1])
    forcing = math.fsum(disc * (wl * h0[:-1] + wr * h0[1:]))

    def final(l):
        return l + forcing

    if prob.l_coef is not None:
        l_coef = float(prob.l_coef)
    elif forcing == 0.0:
        l_coef = 0.0
    else:
        lo, hi = -1.0, 1.0
        for _ in range(max_doublings):
            if final(lo) * final(hi) <= 0:
                break
            lo, hi = 2.0 * lo, 2.0 * hi
        else:
            raise InstabilityError("bisection bracket exhausted", growth_rate=mu)
        scale = abs(forcing)
        mid = 0.5 * (lo + hi)
        while True:
            mid = 0.5 * (lo + hi)
            fm = final(mid)
            if abs(fm) <= tol * scale or not lo < mid < hi:
                break
            if final(lo) * fm <= 0:
                hi = mid
            else:
                lo = mid
        l_coef = mid
    residual = final(l_coef)
    if prob.l_coef is None:
        a = _scalar_path(mu, fine, h0, 0.0)
    else:
        # forward evolution of the untuned coordinate; grows like e^{μ s}
        a = np.exp(mu * fine) * (l_coef + np.concatenate(
            [[0.0], np.cumsum(disc * (wl * h0[:-1] + wr * h0[1:]))]))
    phi = psi + a[0::2][keep][:, None] * e0[None, :]
    return InnerSolution(coarse[keep], t_fine[0::2][keep], grid.centres, phi, l_coef, residual, grid)


def unstable_growth(R: float = 20.0, lam: Callable = None, t0: float = 0.0, span: float = 2.0,
                    grid: InnerGrid = None, steps: int = 4000) -> Tuple[float, float]:
    """Growth of the ``W0`` coefficient of generic data without shooting.

    The full (unsplit) operator is advanced by backward Euler with
    Richardson extrapolation.  Returns the measured factor ``a(S)/a(0)``
    and the prediction ``exp(|λ0| ∫ λ^{-2} dt)`` over the same run.
    """
    lam = (lambda t: 1.0) if lam is None else lam
    grid = InnerGrid(R) if grid is None else grid
    w0 = sampled_negative_mode(grid)
    r = grid.centres
    data = np.exp(-r * r / 8.0) / (1.0 + r)
    coarse = np.linspace(0.0, span, steps + 1)
    fine = np.linspace(0.0, span, 2 * steps + 1)
    zc = np.zeros((len(coarse), grid.n))
    zf = np.zeros((len(fine), grid.n))
    pc = _be_march(grid, 0, zc, coarse, data, {0, steps})
    pf = _be_march(grid, 0, zf, fine, data, {0, 2 * steps})
    phi = 2.0 * pf - pc
    t_end = _stretched_times(lam, t0, np.array([0.0, span]))[-1]
    s_pred = quad(lambda t: lam(t) ** -2, t0, t_end, epsabs=0, epsrel=1e-12)[0] if t_end > t0 else span
    return grid.inner(phi[1], w0) / grid.inner(phi[0], w0), math.exp(negative_eigenvalue() * s_pred)


def envelope_constant(sol: InnerSolution, nu: float, a: float, R: float, lam: Callable) -> float:
    """``sup |φ| (1 + ρ⁶) / (λ^ν R^{6-a})`` over the run."""
    lam_t = np.array([lam(t) for t in sol.t])
    w = (1.0 + sol.rho ** 6) * R ** -(6.0 - a)
    return float(np.max(np.abs(sol.phi) * w[None, :] / lam_t[:, None] ** nu))


def radial_mode(f: Callable, rho, l: int = 0, n: int = 4) -> np.ndarray:
    """Angular mode ``l`` of a field on R^5 at radii ``rho``.

    ``l = 0`` is the spherical mean; ``l = 1`` the coefficient of ``y_1/ρ``.
    """
    from .selfsim import sphere_rule

    dirs, w = sphere_rule(n)
    rho = np.asarray(rho, dtype=float)
    pts = rho[:, None, None] * dirs[None, :, :]
    vals = np.asarray(f(pts.reshape(-1, 5)), dtype=float).reshape(len(rho), len(w))
    if l == 0:
        return vals @ w / w.sum()
    if l == 1:
        return 5.0 * (vals * dirs[None, :, 0]) @ w / w.sum()
    raise DomainError("only the modes l = 0 and l = 1 are supported")


# ---------------------------------------------------------------------------
# inner sources from the ansatz


@dataclass
class NodeSource:
    """Source interpolated linearly in time between projected node profiles."""

    times: np.ndarray
    profiles: Tuple[ProjectedSource, ...]

    def __call__(self, r, t):
        ts = self.times
        if len(ts) == 1 or t <= ts[0]:
            return self.profiles[0](r)
        if t >= ts[-1]:
            return self.profiles[-1](r)
        k = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1.0 - w) * self.profiles[k](r) + w * self.profiles[k + 1](r)


def inner_source_modes(traj, fields, i: int, R: float, t_nodes: Sequence[float], n_rho: int = 32,
                       sphere: int = 3):
    """Projected ``l = 0`` and ``l = 1`` modes of the inner source of bubble ``i``.

    The source is ``λ^{3/2} pU^{p-1} F(ξ + λy) + λλ' W6 + λ ξ'·∇U``.  The
    spherical means of ``F`` are sampled at ``n_rho`` radii and splined
    in ``ρ``.  The ``l = 1`` mode is taken along ``ξ'`` (or the first
    axis when ``ξ' = 0``).

    Returns
    -------
    dict
        ``{0: NodeSource, 1: NodeSource}``.
    """
    from scipy.interpolate import CubicSpline

    from .selfsim import sphere_rule

    dirs, wd = sphere_rule(sphere)
    wd = wd / wd.sum()
    nodes = np.concatenate([[0.0], np.geomspace(1e-2, 2.0 * R, n_rho - 1)])
    t_nodes = np.asarray(t_nodes, dtype=float)
    out = {0: [], 1: []}
    for t in t_nodes:
        lam = float(traj.lam_at(i, t=t))
        lam_dot = float(traj.lam_dot_at(i, t=t))
        xi = np.asarray(traj.xi_at(i, t=t), dtype=float).reshape(5)
        xi_dot = np.asarray(traj.xi_dot_at(i, t=t), dtype=float).reshape(5)
        speed = float(np.linalg.norm(xi_dot))
        e = xi_dot / speed if speed > 0 else np.eye(5)[0]
        # rotate the rule so that its first axis is e
        q, _ = np.linalg.qr(np.column_stack([e, np.eye(5)[:, :4]]))
        q = q * np.sign(q[:, 0] @ e)
        rd = dirs @ q.T
        pts = xi + lam * nodes[:, None, None] * rd[None, :, :]
        F = np.asarray(fields.forcing(pts.reshape(-1, 5), t), dtype=float).reshape(len(nodes), -1)
        f0 = CubicSpline(nodes, F @ wd)
        f1 = CubicSpline(nodes, 5.0 * (F * (rd @ e)[None, :]) @ wd)
        amp = lam ** 1.5

        def h0(r, f0=f0, amp=amp, lam=lam, lam_dot=lam_dot):
            return amp * potential(r) * f0(r) + lam * lam_dot * dilation_radial(r)

        def h1(r, f1=f1, amp=amp, lam=lam, speed=speed):
            return amp * potential(r) * f1(r) + lam * speed * bubble_dr(r)

        out[0].append(project_orthogonal(h0, 0, R))
        out[1].append(project_orthogonal(h1, 1, R))
    return {l: NodeSource(t_nodes, tuple(v)) for l, v in out.items()}


@dataclass(frozen=True)
class EnvelopeReport:
    """Envelope constants ``sup |φ| (1 + ρ⁶) / (λ^ν R^{6-a})`` per window and mode."""

    t0: Tuple[float, ...]
    constants: np.ndarray
    refined: np.ndarray

    @property
    def constant(self) -> float:
        return float(np.max(self.constants))

    @property
    def max_change(self) -> float:
        return float(np.max(np.abs(self.refined / self.constants - 1.0)))


def envelope_check(traj, fields, i: int = 1, nu: float = 1.75, a: float = 0.5, R: float = None,
                   sigmas: Sequence[float] = (0.5, 0.1, 0.02), span_factor: float = 4.0,
                   n: int = 800, steps: int = 400) -> EnvelopeReport:
    """Solve the inner problem of bubble ``i`` on windows starting at ``T - σ``.

    Each window runs for ``span_factor R²`` in stretched time.  The
    constants are recomputed on a grid with twice as many cells.
    """
    R = fields.R if R is None else R
    T = traj.T
    lam_fn = lambda t: float(traj.lam_at(i, t=min(t, T * (1 - 1e-15))))
    consts = np.zeros((len(sigmas), 2))
    refined = np.zeros_like(consts)
    starts = []
    for k, sf in enumerate(sigmas):
        t0 = T - sf * T
        starts.append(t0)
        span = span_factor * R * R
        t_end = _stretched_times(lam_fn, t0, np.array([0.0, span]))[-1]
        srcs = inner_source_modes(traj, fields, i, R, np.linspace(t0, t_end, 3))
        for l in (0, 1):
            for tgt, grid in ((consts, InnerGrid(R, n)), (refined, InnerGrid(R, 2 * n))):
                prob = InnerProblem(l, srcs[l], lam_fn, t0, span, R)
                sol = solve_inner_mode(prob, grid=grid, steps=steps)
                tgt[k, l] = envelope_constant(sol, nu, a, R, lam_fn)
    return EnvelopeReport(tuple(starts), consts, refined)


@dataclass(frozen=True)
class C3Report:
    """Empirical constants of the inner estimate per radius.

    Attributes
    ----------
    radii : tuple
    solution : ndarray
        ``max ‖φ‖_* / ‖h‖`` over the sampled sources, per radius.
    coefficient : ndarray
        ``max |l| / ‖h‖`` over the sampled sources, per radius.
    """

    radii: Tuple[float, ...]
    solution: np.ndarray
    coefficient: np.ndarray

    @staticmethod
    def _spread(v):
        return float(np.max(v) / np.min(v) - 1.0)

    @property
    def solution_spread(self) -> float:
        return self._spread(self.solution)

    @property
    def coefficient_spread(self) -> float:
        return self._spread(self.coefficient)


def random_source(a: float, rng: np.random.Generator) -> Callable:
    """Radial source with ``(1 + ρ^{2+a})^{-1}`` decay and a random smooth modulation."""
    c = rng.normal(size=3)

    def h(r):
        r = np.asarray(r, dtype=float)
        mod = 1.0 + 0.3 * (c[0] * np.exp(-r / 2.0) + c[1] * np.exp(-r / 8.0) + c[2] * r / (1.0 + r))
        return mod / (1.0 + r ** (2.0 + a))

    return h


def c3_scan(radii: Sequence[float] = (10.0, 20.0, 40.0), a: float = 0.5, nu: float = 1.0,
            n_sources: int = 5, seed: int = 0, span_factor: float = 4.0, n: int = 800,
            steps: int = 400) -> C3Report:
    """Empirical ``C3`` across radii for time-independent projected sources.

    The scale is frozen (``λ ≡ 1``) so the gauge is trivial; the first
    source is the extremal profile ``(1 + ρ^{2+a})^{-1}`` and the others
    are random modulations of it.  The same sources are used at every
    radius.
    """
    sol = np.zeros(len(radii))
    coef = np.zeros(len(radii))
    one = lambda t: 1.0
    for k, R in enumerate(radii):
        rng = np.random.default_rng(seed)
        bases = [lambda r: 1.0 / (1.0 + np.asarray(r, dtype=float) ** (2.0 + a))]
        bases += [random_source(a, rng) for _ in range(n_sources - 1)]
        norms = WeightedNormSpec(a, nu, R, one)
        grid = InnerGrid(R, n)
        for base in bases:
            h = project_orthogonal(base, 0, R)
            prob = InnerProblem(0, lambda r, t, h=h: h(r), one, 0.0, span_factor * R * R, R)
            s = solve_inner_mode(prob, norms, grid=grid, steps=steps)
            hn = weighted_norm(h(s.rho)[None, :], [0.0], s.rho, "source", norms).value
            pn = weighted_norm(s.phi, s.t, s.rho, "solution", norms).value
            sol[k] = max(sol[k], pn / hn)
            coef[k] = max(coef[k], abs(s.l_coef) / hn)
    return C3Report(tuple(radii), sol, coef)
