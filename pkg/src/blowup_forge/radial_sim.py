"""Radial semilinear heat flow ``u_t = Δu + |u|^{p-1}u`` in R^5.

Method of lines on a uniform radial grid with a fourth-order Laplacian
(even reflection at the origin), Strang splitting between the exactly
solved reaction and an L-stable two-stage SDIRK diffusion step, and
step-doubling error control.  In rescaled mode the solution is carried
as ``v(ξ, τ)`` with ``u(r, t) = Λ^{-3/2} v(r/Λ, τ)``, ``dt = Λ² dτ``; the
equation is invariant under this scaling, and each time ``sup v``
reaches ``2^{3/2}`` the profile is zoomed by a factor two (``Λ → Λ/2``),
which resets ``sup v`` to one.  The logged gauge is ``g = Λ²``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import least_squares, minimize_scalar

from .bubble_core import P_EXP
from .errors import ConfigurationError, DomainError

BETA_ODE = 1.0 / (P_EXP - 1.0)
KAPPA_ODE = (P_EXP - 1.0) ** -BETA_ODE
_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_MID6 = np.array([3.0, -25.0, 150.0, 150.0, -25.0, 3.0]) / 256.0


# ---------------------------------------------------------------------------
# spatial operator


class RadialLaplacian:
    """Fourth-order ``u'' + (4/r) u'`` on ``r_j = j h``, ``j = 0..n``.

    Values are even in ``r``.  With ``boundary = "dirichlet"`` the last two
    nodes are held fixed; with ``"neumann"`` they are reflected evenly
    about ``r_n``.
    """

    def __init__(self, L: float, n: int, boundary: str = "dirichlet"):
        if boundary not in ("dirichlet", "neumann"):
            raise ConfigurationError("boundary must be 'dirichlet' or 'neumann'")
        if n < 8 or not L > 0:
            raise ConfigurationError("need L > 0 and at least 8 intervals")
        self.L, self.n, self.boundary = float(L), int(n), boundary
        self.h = self.L / self.n
        self.r = self.h * np.arange(n + 1)
        self.m = n - 1 if boundary == "dirichlet" else n + 1  # unknowns
        self._build()

    def _build(self):
        n, h, m = self.n, self.h, self.m
        d2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
        d1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
        full = np.zeros((n + 1, n + 5))  # columns for j-2 .. n+2 shifted by 2
        for j in range(n + 1):
            if j == 0:
                coef = 5.0 * d2
            else:
                coef = d2 + (4.0 / self.r[j]) * d1
            full[j, j:j + 5] += coef
        # fold ghosts: u_{-k} = u_k
        for k in (1, 2):
            full[:, 2 + k] += full[:, 2 - k]
            full[:, 2 - k] = 0.0
        if self.boundary == "neumann":
            # u_{n+k} = u_{n-k}; the first derivative vanishes at r = n h
            for k in (1, 2):
                full[:, 2 + n - k] += full[:, 2 + n + k]
                full[:, 2 + n + k] = 0.0
        cols = full[:, 2:n + 3]
        self.A = cols[:m, :m].copy()
        self.B = cols[:m, m:].copy()  # coupling to held nodes
        ab = np.zeros((5, m))
        for off in range(-2, 3):
            d = np.diagonal(self.A, offset=off)
            if off >= 0:
                ab[2 - off, off:] = d
            else:
                ab[2 - off, :off] = d
        self._bands = ab

    def apply(self, u) -> np.ndarray:
        """Discrete Laplacian of the unknowns, given the full nodal vector."""
        u = np.asarray(u, dtype=float)
        out = self.A @ u[:self.m]
        if self.B.shape[1]:
            out = out + self.B @ u[self.m:]
        return out

    def solve_shifted(self, c: float, rhs, held) -> np.ndarray:
        """Solve ``(I - c A) x = rhs + c B held``."""
        ab = -c * self._bands
        ab[2] += 1.0
        b = np.asarray(rhs, dtype=float)
        if self.B.shape[1]:
            b = b + c * (self.B @ held)
        return solve_banded((2, 2), ab, b, check_finite=False)


def laplacian_convergence_order(L: float = 8.0, n: int = 200) -> float:
    """Observed order of the discrete Laplacian on ``e^{-r²}`` (interior nodes)."""
    errs = []
    for k in (n, 2 * n):
        op = RadialLaplacian(L, k)
        u = np.exp(-op.r ** 2)
        exact = (4.0 * op.r ** 2 - 10.0) * np.exp(-op.r ** 2)
        errs.append(np.max(np.abs(op.apply(u) - exact[:op.m])))
    return math.log2(errs[0] / errs[1])


# ---------------------------------------------------------------------------
# time stepping


def _reaction(u, dt):
    """Exact flow of ``u' = |u|^{p-1} u``; ``nan`` where it blows up within ``dt``."""
    a = np.abs(u)
    q = P_EXP - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        base = a ** -q - q * dt
        out = np.where(a > 0, np.sign(u) * np.where(base > 0, base, np.nan) ** (-1.0 / q), 0.0)
    return out


def _diffusion(op: RadialLaplacian, u, dt):
    """Two-stage L-stable SDIRK step of ``u_t = Δu``."""
    held = u[op.m:]
    y1 = op.solve_shifted(_GAMMA * dt, u[:op.m], held)
    full1 = np.concatenate([y1, held])
    y2 = op.solve_shifted(_GAMMA * dt, u[:op.m] + (1.0 - _GAMMA) * dt * op.apply(full1), held)
    return np.concatenate([y2, held])


def _react_free(op, u, dt):
    out = u.copy()
    out[:op.m] = _reaction(u[:op.m], dt)
    return out


def _strang(op, u, dt):
    v = _react_free(op, u, 0.5 * dt)
    v = _diffusion(op, v, dt)
    return _react_free(op, v, 0.5 * dt)


def _zoom(u, op: RadialLaplacian):
    """``v(ξ) = 2^{-3/2} u(ξ/2)`` on the same nodes (sixth-order midpoint values)."""
    n = op.n
    half = n // 2
    ext = np.concatenate([u[3:0:-1], u])  # even reflection, index shift 3
    out = np.empty_like(u)
    out[0::2] = u[:half + 1]
    mids = np.array([_MID6 @ ext[k + 3 - 2:k + 3 + 4] for k in range(half)])
    out[1::2] = mids[:len(out[1::2])]
    return out * 2.0 ** -1.5


@dataclass(frozen=True)
class SimControls:
    """Run controls.

    Attributes
    ----------
    mode : str
        ``"fixed"`` or ``"rescaled"``.
    L, n : float, int
        Domain ``[0, L]`` (in the running variable) and number of intervals.
    boundary : str
        ``"dirichlet"`` (held values) or ``"neumann"``.
    t_end : float
        Physical stopping time.
    threshold : float
        Sup-norm at which blow-up is suspected.
    halvings : int
        Blow-up is declared once the physical step has shrunk by
        ``2^halvings`` after the threshold was crossed.
    rtol, atol : float
        Step-doubling tolerances.
    cfl : float
        Bound on ``dt p |u|^{p-1}``.
    dt_max, dt_min : float
        Step bounds in the running time (``τ`` in rescaled mode).
    max_steps : int
    """

    mode: str = "fixed"
    L: float = 16.0
    n: int = 400
    boundary: str = "dirichlet"
    t_end: float = math.inf
    threshold: float = 1e8
    halvings: int = 3
    rtol: float = 1e-7
    atol: float = 1e-12
    cfl: float = 0.2
    dt_max: float = 1e-2
    dt_min: float = 1e-16
    max_steps: int = 200000

    def __post_init__(self):
        bad = []
        if self.mode not in ("fixed", "rescaled"):
            bad.append("mode")
        if self.boundary not in ("dirichlet", "neumann"):
            bad.append("boundary")
        if self.n < 8 or self.n % 2:
            bad.append("n")
        for name in ("L", "threshold", "rtol", "cfl", "dt_max"):
            if not getattr(self, name) > 0:
                bad.append(name)
        if bad:
            raise ConfigurationError("invalid controls: " + ", ".join(bad))


@dataclass
class SimHistory:
    """Accepted-step telemetry of a run.

    Attributes
    ----------
    t, sup, gauge : ndarray
        Physical time, physical sup-norm and gauge ``g = Λ²``.
    n : int
        Grid size.
    status : str
        ``"blowup"``, ``"completed"`` or ``"inconclusive"``.
    r, u : ndarray
        Final physical grid and profile.
    min_value : float
        Smallest value seen (nonnegativity monitor).
    rejected : int
        Rejected steps.
    """

    t: np.ndarray
    sup: np.ndarray
    gauge: np.ndarray
    n: int
    status: str
    r: np.ndarray
    u: np.ndarray
    min_value: float
    rejected: int

    def rows(self):
        for t, s, g in zip(self.t, self.sup, self.gauge):
            yield (float(t), float(s), float(g), self.n)

    def sup_at(self, times) -> np.ndarray:
        """Sup-norm at the given times (linear in ``log sup``)."""
        return np.exp(np.interp(times, self.t, np.log(self.sup)))


def integrate(initial: Callable, controls: SimControls = SimControls()) -> SimHistory:
    """Integrate radial data until blow-up, ``t_end`` or step underflow."""
    op = RadialLaplacian(controls.L, controls.n, controls.boundary)
    u = np.asarray(initial(op.r), dtype=float) * np.ones(op.n + 1)
    if not np.all(np.isfinite(u)):
        raise DomainError("initial data must be finite")
    rescaled = controls.mode == "rescaled"
    zooms = 0  # Λ = 2^{-zooms}
    t = 0.0
    dt = controls.dt_max
    ts, sups, gauges = [0.0], [float(np.max(np.abs(u)))], [1.0]
    min_value = float(np.min(u))
    rejected = 0
    crossed_dt = None
    status = "completed"

    for _ in range(controls.max_steps):
        lam2 = 4.0 ** -zooms
        amp = 2.0 ** (1.5 * zooms)
        if t >= controls.t_end:
            break
        vmax = float(np.max(np.abs(u)))
        dt = min(dt, controls.dt_max, controls.cfl / (P_EXP * max(vmax, 1e-300) ** (P_EXP - 1.0)))
        if math.isfinite(controls.t_end):
            dt = min(dt, (controls.t_end - t) / lam2)
        if dt * lam2 < controls.dt_min * max(1.0, t):
            status = "inconclusive"
            break
        full = _strang(op, u, dt)
        half = _strang(op, _strang(op, u, 0.5 * dt), 0.5 * dt)
        if not (np.all(np.isfinite(full)) and np.all(np.isfinite(half))):
            dt *= 0.5
            rejected += 1
            continue
        err = np.max(np.abs(half - full)) / (controls.atol + controls.rtol * np.max(np.abs(half)))
        if err > 1.0:
            dt *= max(0.2, 0.9 * err ** (-1.0 / 3.0))
            rejected += 1
            continue
        u = half
        t += dt * lam2
        min_value = min(min_value, float(np.min(u)) * amp)
        if rescaled and np.max(np.abs(u)) >= 2.0 ** 1.5:
            u = _zoom(u, op)
            zooms += 1
            lam2 = 4.0 ** -zooms
            amp = 2.0 ** (1.5 * zooms)
            dt *= 4.0
        sup = float(np.max(np.abs(u))) * amp
        ts.append(t)
        sups.append(sup)
        gauges.append(lam2)
        if sup >= controls.threshold:
            step = dt * lam2
            if crossed_dt is None:
                crossed_dt = step
            elif step <= crossed_dt * 2.0 ** -controls.halvings:
                status = "blowup"
                break
        dt = dt * min(2.0, 0.9 * max(err, 1e-12) ** (-1.0 / 3.0))
    else:
        status = "inconclusive"
    lam = 2.0 ** -zooms
    return SimHistory(np.array(ts), np.array(sups), np.array(gauges), op.n + 1, status,
                      op.r * lam, u * lam ** -1.5, min_value, rejected)


# ---------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class BlowupFit:
    """Joint fit ``sup u ≈ c (T - t)^{-β}``.

    Attributes
    ----------
    T, beta, c : float
    errors : tuple
        Bootstrap standard deviations of ``(T, β, c)``.
    c_tail : float
        ``sup u (T - t)^{β_ref}`` at the last sample, with the fitted ``T``
        and the reference exponent fixed.
    accepted : bool
        False when the tail was not monotone.
    reason : str
    """

    T: float
    beta: float
    c: float
    errors: Tuple[float, float, float]
    c_tail: float = math.nan
    accepted: bool = True
    reason: str = ""


def _fit_once(t, y, t_last, span):
    """Least squares in ``(log(T - t_last), log c, β)``."""

    d = t_last - t

    def lin(theta):
        x = np.log(math.exp(theta) + d)
        A = np.stack([np.ones_like(x), -x], axis=1)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coef, float(np.sum((A @ coef - y) ** 2))

    lo = math.log(span * 1e-14)
    hi = math.log(span * 10.0)
    grid = np.linspace(lo, hi, 121)
    vals = [lin(g)[1] for g in grid]
    k = int(np.argmin(vals))
    res = minimize_scalar(lambda th: lin(th)[1], bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 120)]),
                          method="bounded", options={"xatol": 1e-12})
    th = float(res.x)
    coef, _ = lin(th)

    def resid(p):
        return p[1] - p[2] * np.log(math.exp(p[0]) + d) - y

    sol = least_squares(resid, [th, coef[0], coef[1]], xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        method="lm")
    th, logc, beta = sol.x
    return t_last + math.exp(th), float(beta), math.exp(logc)


def detect_blowup_rate(t, sup=None, decades: float = 3.0, n_boot: int = 200, seed: int = 0,
                       beta_ref: float = BETA_ODE) -> BlowupFit:
    """Fit ``(T, β, c)`` to the tail of a sup-norm history.

    Parameters
    ----------
    t : array_like or SimHistory
    sup : array_like, optional
    decades : float
        Width of the fitted tail in decades of sup-norm growth.
    """
    if isinstance(t, SimHistory):
        t, sup = t.t, t.sup
    t = np.asarray(t, dtype=float)
    sup = np.asarray(sup, dtype=float)
    if t.size != sup.size or t.size < 5:
        raise DomainError("need at least five samples")
    if np.any(sup <= 0):
        raise DomainError("sup-norms must be positive")
    top = float(sup.max())
    if math.log10(top / sup.min()) < 2.0:
        raise DomainError("need at least two decades of growth")
    keep = sup >= top * 10.0 ** -decades
    first = int(np.argmax(keep))
    tt, ss = t[first:], sup[first:]
    if np.any(np.diff(ss) < 0) or np.any(np.diff(tt) <= 0):
        return BlowupFit(math.nan, math.nan, math.nan, (math.nan,) * 3, math.nan, False, "non-monotone tail")
    y = np.log(ss)
    span = tt[-1] - tt[0]
    T, beta, c = _fit_once(tt, y, tt[-1], span)
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        idx = np.sort(rng.choice(len(tt), size=len(tt), replace=True))
        idx = np.unique(np.append(idx, len(tt) - 1))
        if len(idx) < 4:
            continue
        boots.append(_fit_once(tt[idx], y[idx], tt[-1], span))
    errs = tuple(float(v) for v in np.std(np.array(boots), axis=0)) if boots else (math.nan,) * 3
    c_tail = float(ss[-1] * (T - tt[-1]) ** beta_ref) if T > tt[-1] else math.nan
    return BlowupFit(T, beta, c, errs, c_tail)


def ode_solution(c: float, t):
    """Spatially constant solution ``((p-1)(T - t))^{-1/(p-1)}``, ``T = c^{1-p}/(p-1)``."""
    q = P_EXP - 1.0
    T = c ** -q / q
    return (q * (T - np.asarray(t, dtype=float))) ** (-1.0 / q), T


# ---------------------------------------------------------------------------
# nonhomogeneous heat bound


@dataclass(frozen=True)
class HeatBoundReport:
    """Sup ratios ``|Φ| / (T^γ + (1 + |y|^a)^{-1})`` per ``γ``.

    Attributes
    ----------
    gammas : tuple
    ratios : ndarray
    refined : ndarray or None
        Same ratios on the doubled grid.
    sup_phi : float
    """

    gammas: Tuple[float, ...]
    ratios: np.ndarray
    refined: Optional[np.ndarray]
    sup_phi: float

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)))

    @property
    def max_change(self) -> float:
        if self.refined is None:
            return math.nan
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.nanmax(np.abs(self.refined / self.ratios - 1.0)))


def _fv_geometric(r_min: float, L: float, per_decade: int):
    k = max(8, int(math.ceil(per_decade * math.log10(L / r_min))))
    faces = np.concatenate([[0.0], np.geomspace(r_min, L, k)])
    centres = np.concatenate([[0.5 * r_min], np.sqrt(faces[2:] * faces[1:-1])])
    return faces, centres


def _heat_bands(faces, centres):
    flux = faces ** 4
    vol = (faces[1:] ** 5 - faces[:-1] ** 5) / 5.0
    n = len(centres)
    k = flux[1:-1] / (centres[1:] - centres[:-1])
    lower = np.zeros(n)
    upper = np.zeros(n)
    diag = np.zeros(n)
    upper[:-1] = k
    lower[1:] = k
    diag[:-1] -= k
    diag[1:] -= k
    diag[-1] -= flux[-1] / (faces[-1] - centres[-1])
    return lower / vol, diag / vol, upper / vol


def _heat_run(a, lam, T, amplitude, L, r_min, per_decade, times, gammas):
    faces, c = _fv_geometric(r_min, L, per_decade)
    lo, di, up = _heat_bands(faces, c)
    phi = np.zeros(len(c))
    ratios = np.zeros(len(gammas))
    sup_phi = 0.0
    ab = np.zeros((3, len(c)))
    for k in range(1, len(times)):
        dt = times[k] - times[k - 1]
        ab[0, 1:] = -dt * up[:-1]
        ab[1] = 1.0 - dt * di
        ab[2, :-1] = -dt * lo[1:]
        l = lam(times[k])
        g = amplitude * l ** -2 / (1.0 + (c / l) ** (2.0 + a))
        phi = solve_banded((1, 1), ab, phi + dt * g, check_finite=False)
        y = c / l
        base = 1.0 / (1.0 + y ** a)
        sup_phi = max(sup_phi, float(np.max(np.abs(phi))))
        for j, gm in enumerate(gammas):
            ratios[j] = max(ratios[j], float(np.max(np.abs(phi) / (T ** gm + base))))
    return ratios, sup_phi


def lemma24_check(a: float, lam: Callable, T: float, gammas: Sequence[float] = (0.125, 0.25, 0.5),
                  depth: float = 1e-4, per_decade: int = 24, steps_per_decade: int = 40,
                  amplitude: float = 1.0, refine: bool = True) -> HeatBoundReport:
    """Heat flow with the extremal source ``λ^{-2} (1 + |x/λ|^{2+a})^{-1}``.

    The radial problem ``Φ_t = ΔΦ + g``, ``Φ(·, 0) = 0`` is solved by
    backward Euler on a geometric finite-volume grid reaching below
    ``10^{-3} min λ``, with time nodes geometric in ``T - t`` down to
    ``depth T``.  The domain is ``[0, L]`` with ``L = max(1, 20 √T)``
    and zero data at ``L``.
    """
    if not 0.0 < a < 1.0:
        raise DomainError("a must lie strictly between 0 and 1")
    if not T > 0 or not 0 < depth < 1:
        raise DomainError("need T > 0 and depth in (0, 1)")
    L = max(1.0, 20.0 * math.sqrt(T))
    t_last = T * (1.0 - depth)
    lam_min = min(lam(0.0), lam(t_last))
    if not lam_min > 0:
        raise DomainError("scale must be positive")

    def run(factor):
        n_t = int(math.ceil(factor * steps_per_decade * math.log10(1.0 / depth)))
        times = T - np.geomspace(T, T * depth, n_t + 1)
        times[0] = 0.0
        return _heat_run(a, lam, T, amplitude, L, 1e-3 * lam_min, factor * per_decade, times, tuple(gammas))

    ratios, sup_phi = run(1)
    refined = run(2)[0] if refine else None
    return HeatBoundReport(tuple(gammas), ratios, refined, sup_phi)
