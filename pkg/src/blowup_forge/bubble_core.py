"""Bubble profile, its kernels and the radial linearized operator.

The steady state of ``u_t = Δu + |u|^{4/3} u`` in five dimensions is

    U(y) = α (1 + |y|²)^{-3/2},   α = 15^{3/4},

and the linearization ``L0 = Δ + p U^{p-1}`` (p = 7/3) annihilates the
translation kernels ``W_j = ∂_j U`` (j = 1..5) and the dilation kernel
``W_6 = (3/2) U + y·∇U``.  It also has exactly one negative eigenvalue,
whose radial eigenfunction ``W_0`` is obtained here by shooting.

Radial functions are carried by :class:`RadialProfile`, sampled on a
:class:`RadialGrid` that is uniform in ``s = log(1 + r)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import DomainError, PrecisionError, SearchError

N_DIM = 5
P_EXP = 7.0 / 3.0
ALPHA = 15.0 ** 0.75


@dataclass(frozen=True)
class BubbleShape:
    """Fixed shape constants of the five dimensional bubble."""

    n: int = N_DIM
    p: float = P_EXP
    alpha: float = ALPHA

    def __post_init__(self):
        if self.n != 5:
            raise DomainError("only n = 5 is supported")


@dataclass(frozen=True)
class BubbleState:
    """Scale and centre of a rescaled bubble."""

    scale: float
    center: Tuple[float, ...] = (0.0,) * N_DIM

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise DomainError(f"bubble scale must be positive, got {self.scale}")
        c = np.asarray(self.center, dtype=float)
        if c.shape != (N_DIM,) or not np.all(np.isfinite(c)):
            raise DomainError("bubble centre must be a finite point of R^5")
        object.__setattr__(self, "center", tuple(float(v) for v in c))


# ---------------------------------------------------------------------------
# closed forms


def bubble_radial(r):
    """U as a function of radius."""
    r = np.asarray(r, dtype=float)
    return ALPHA * (1.0 + r * r) ** -1.5


def bubble_dr(r):
    """First radial derivative U'(r)."""
    r = np.asarray(r, dtype=float)
    return -3.0 * ALPHA * r * (1.0 + r * r) ** -2.5


def bubble_drr(r):
    """Second radial derivative U''(r)."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return -3.0 * ALPHA * (1.0 + r2) ** -3.5 * (1.0 - 4.0 * r2)


def dilation_radial(r):
    """Radial form of the dilation kernel, (3/2)U + r U'."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return 1.5 * ALPHA * (1.0 - r2) * (1.0 + r2) ** -2.5


def potential(r):
    """The potential p U^{p-1} = 35 (1 + r²)^{-2}."""
    r = np.asarray(r, dtype=float)
    return P_EXP * ALPHA ** (P_EXP - 1.0) * (1.0 + r * r) ** -2.0


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != N_DIM:
        raise DomainError(f"points must have trailing dimension {N_DIM}")
    return x


def eval_bubble(x, state: BubbleState):
    """Evaluate the rescaled bubble λ^{-3/2} U((x - ξ)/λ).

    Parameters
    ----------
    x : array_like, shape (..., 5)
        Evaluation points.
    state : BubbleState
        Scale λ and centre ξ.

    Returns
    -------
    ndarray
        Values with shape ``x.shape[:-1]``.
    """
    if state.scale <= 0:
        raise DomainError("bubble scale must be positive")
    x = _as_points(x)
    y = (x - np.asarray(state.center)) / state.scale
    return state.scale ** -1.5 * bubble_radial(np.linalg.norm(y, axis=-1))


def eval_kernel(j: int, y):
    """Evaluate the kernel W_j of L0 at points ``y`` (shape (..., 5)).

    ``j`` in 1..5 gives the translation kernel ∂_j U, ``j = 6`` the dilation
    kernel.  All values come from closed-form derivatives.
    """
    if j not in range(1, 7):
        raise DomainError(f"kernel index must lie in 1..6, got {j}")
    y = _as_points(y)
    r2 = np.sum(y * y, axis=-1)
    if j == 6:
        return 1.5 * ALPHA * (1.0 - r2) * (1.0 + r2) ** -2.5
    # U'(r)/r is regular at the origin
    return -3.0 * ALPHA * y[..., j - 1] * (1.0 + r2) ** -2.5


# ---------------------------------------------------------------------------
# grids and profiles


@dataclass(frozen=True)
class RadialGrid:
    """Nodes ``r_k = exp(s_k) - 1`` with ``s_k`` uniform on [0, log(1+r_max)].

    The node density is proportional to 1/(1+r).
    """

    r_max: float = 100.0
    n_nodes: int = 4000

    def __post_init__(self):
        if self.r_max <= 0:
            raise DomainError("r_max must be positive")
        if self.n_nodes < 2:
            raise DomainError("a grid needs at least two nodes")

    @property
    def ds(self) -> float:
        return np.log1p(self.r_max) / (self.n_nodes - 1)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, np.log1p(self.r_max), self.n_nodes)

    @property
    def nodes(self) -> np.ndarray:
        r = np.expm1(self.s)
        r[0] = 0.0
        r[-1] = self.r_max
        return r

    def refined(self) -> "RadialGrid":
        """Grid with half the step in ``s`` (old nodes are kept)."""
        return RadialGrid(self.r_max, 2 * self.n_nodes - 1)


@dataclass(frozen=True)
class RadialProfile:
    """Samples of a radial function with cubic interpolation.

    Attributes
    ----------
    r : ndarray
        Strictly increasing nodes starting at 0.
    values : ndarray
        Samples at the nodes.
    grid : RadialGrid, optional
        Generating grid; needed by the finite-difference operators.
    """

    r: np.ndarray
    values: np.ndarray
    grid: Optional[RadialGrid] = None
    _spline: Optional[CubicSpline] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        v = np.array(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape:
            raise DomainError("nodes and values must be 1-D arrays of equal length")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise DomainError("nodes must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise DomainError("profile values must be finite")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_spline", CubicSpline(r, v))

    @classmethod
    def from_function(cls, f: Callable, grid: RadialGrid) -> "RadialProfile":
        r = grid.nodes
        return cls(r, f(r), grid)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, r):
        return self._spline(r)

    def to_csv(self) -> str:
        """Serialize to CSV with columns ``r,value`` and 17 significant digits."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "value"])
        for a, b in zip(self.r, self.values):
            w.writerow([f"{a:.17g}", f"{b:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RadialProfile":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(data[:, 0], data[:, 1])


# ---------------------------------------------------------------------------
# finite differences


def _stencil_weights(off: np.ndarray, order: int) -> np.ndarray:
    """Batched finite-difference weights for stencil offsets ``off`` (rows)."""
    m = off.shape[1]
    A = off[:, None, :] ** np.arange(m)[None, :, None]
    rhs = np.zeros((off.shape[0], m))
    rhs[:, order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs[..., None])[..., 0]


@lru_cache(maxsize=32)
def _radial_stencils(grid: RadialGrid, parity: int, skip_origin: bool = False):
    r = grid.nodes
    n = r.size
    # extended node list: mirror nodes -r_k (k = 1..4) followed by the grid
    first = 1 if skip_origin else 0
    src = np.concatenate([np.arange(4, 0, -1), np.arange(first, n)])
    x = np.concatenate([-r[4:0:-1], r[first:]])
    sign = np.concatenate([np.full(4, float(parity)), np.ones(n - first)])
    pos = np.searchsorted(x, r)
    start = np.clip(pos - 2, 0, x.size - 5)
    win = start[:, None] + np.arange(5)[None, :]
    h = np.diff(r)[np.minimum(np.arange(n), n - 2)]
    off = (x[win] - r[:, None]) / h[:, None]
    w1 = _stencil_weights(off, 1) * sign[win] / h[:, None]
    w2 = _stencil_weights(off, 2) * sign[win] / h[:, None] ** 2
    return src[win], w1, w2


def radial_derivatives(profile: RadialProfile, parity: int = 1,
                       skip_origin: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """First and second radial derivatives of a profile on a :class:`RadialGrid`.

    Five-point fourth-order stencils on the graded nodes.  Near the origin
    the stencils are centred with mirror nodes ``-r_k`` carrying
    ``parity * u_k`` (+1 for even, -1 for odd profiles); the last two nodes
    use one-sided stencils.  With ``skip_origin`` the sample at ``r = 0`` is
    never used.
    """
    grid = profile.grid
    if grid is None:
        raise PrecisionError("profile carries no radial grid for finite differences")
    if grid.n_nodes < 7:
        raise PrecisionError("grid too coarse for fourth-order stencils")
    idx, w1, w2 = _radial_stencils(grid, int(parity), bool(skip_origin))
    u = profile.values[idx]
    return np.sum(w1 * u, axis=1), np.sum(w2 * u, axis=1)


def apply_L0(profile: RadialProfile, harmonic_mode: int = 0) -> RadialProfile:
    """Apply ``∂rr + (4/r)∂r - l(l+3)/r² + pU^{p-1}`` to a radial profile.

    Parameters
    ----------
    profile : RadialProfile
        Samples on a :class:`RadialGrid`.  For ``l = 1`` the profile should
        vanish at the origin.
    harmonic_mode : {0, 1}
        Spherical harmonic degree ``l``.

    Returns
    -------
    RadialProfile
        The action of the mode-``l`` operator on the same nodes.  At ``r = 0``
        the ``l = 0`` Laplacian is replaced by its limit ``5 u''(0)``; for
        ``l = 1`` the limit of the Laplacian part is zero, and away from
        the origin the operator is applied to ``v = u/r`` in the form
        ``r v'' + 6 v'`` so that no stencil divides an odd error by ``r``.
    """
    if harmonic_mode not in (0, 1):
        raise DomainError("harmonic mode must be 0 or 1")
    r = profile.r
    u = profile.values
    out = np.empty_like(u)
    if harmonic_mode == 0:
        ur, urr = radial_derivatives(profile, 1)
        out[0] = 5.0 * urr[0]
        out[1:] = urr[1:] + 4.0 * ur[1:] / r[1:]
    else:
        # with u = r v and v even: u'' + 4u'/r - 4u/r² = r v'' + 6 v'
        v = np.zeros_like(u)
        v[1:] = u[1:] / r[1:]
        vr, vrr = radial_derivatives(RadialProfile(r, v, profile.grid), 1, skip_origin=True)
        out[0] = 0.0
        out[1:] = r[1:] * vrr[1:] + 6.0 * vr[1:]
    out += potential(r) * u
    return RadialProfile(r, out, profile.grid)


def kernel_profile(j: int, grid: RadialGrid) -> Tuple[RadialProfile, int]:
    """Radial part of W_j on ``grid`` and its harmonic degree.

    For j in 1..5 the radial part is U'(r) (the angular factor is y_j/r);
    for j = 6 it is the dilation profile.
    """
    if j not in range(1, 7):
        raise DomainError(f"kernel index must lie in 1..6, got {j}")
    if j == 6:
        return RadialProfile.from_function(dilation_radial, grid), 0
    return RadialProfile.from_function(bubble_dr, grid), 1


@dataclass(frozen=True)
class ResidualReport:
    """Sup of |L0 W| on a window at two resolutions."""

    sup_residual: float
    sup_residual_half_step: float
    richardson_estimate: float


def kernel_residual(j: int, grid: RadialGrid = RadialGrid(), window: float = 50.0) -> ResidualReport:
    """Finite-difference residual of L0 on W_j over [0, window].

    The computation is repeated on the half-step grid; the Richardson
    estimate extrapolates the fourth-order error to zero step.
    """
    sups = []
    for g in (grid, grid.refined()):
        prof, l = kernel_profile(j, g)
        res = apply_L0(prof, l)
        mask = prof.r <= window
        sups.append(float(np.max(np.abs(res.values[mask]))))
    coarse, fine = sups
    rich = abs(fine - (coarse - fine) / 15.0)
    return ResidualReport(coarse, fine, rich)


# ---------------------------------------------------------------------------
# negative eigenmode


@dataclass(frozen=True)
class NegativeMode:
    """Negative eigenvalue of L0 and its radial eigenfunction (W_0(0) = 1)."""

    eigenvalue: float
    profile: RadialProfile
    bisection_steps: int


def _free_tail(r, k):
    # decaying radial solution of w'' + (4/r) w' = k² w, up to a constant
    e = np.exp(-k * r)
    w = r ** -2 * e * (1.0 + 1.0 / (k * r))
    dw = e * (-k * r ** -2 - 3.0 * r ** -3 - 3.0 / k * r ** -4)
    return w, dw


_V0 = P_EXP * ALPHA ** (P_EXP - 1.0)


def _rhs(r, y, mu):
    w, dw = y
    q = 1.0 + r * r
    return [dw, -4.0 * dw / r - (_V0 / (q * q) - mu) * w]


_R0 = 1e-4
_RTOL = 1e-12
_ATOL = 1e-14


def _shoot_out(mu, r_match):
    a = (mu - potential(0.0)) / 10.0
    y0 = [1.0 + a * _R0 ** 2, 2.0 * a * _R0]
    return solve_ivp(_rhs, (_R0, r_match), y0, args=(mu,), method="DOP853",
                     rtol=_RTOL, atol=_ATOL, dense_output=True)


def _riccati_rhs(r, y, mu):
    # y = (W'/W, log W); the decaying branch is attracting when integrated inward
    z = y[0]
    q = 1.0 + r * r
    return [-z * z - 4.0 * z / r - (_V0 / (q * q) - mu), z]


def _shoot_in(mu, r_match, r_max):
    w, dw = _free_tail(r_max, np.sqrt(mu))
    return solve_ivp(_riccati_rhs, (r_max, r_match), [dw / w, 0.0], args=(mu,),
                     method="DOP853", rtol=_RTOL, atol=_ATOL, dense_output=True)


def _mismatch(mu, r_match, r_max):
    w, dw = _shoot_out(mu, r_match).y[:, -1]
    z_in = _shoot_in(mu, r_match, r_max).y[0, -1]
    # sign of the Wronskian of the two branches (inner branch taken positive)
    return w * z_in - dw


def solve_negative_mode(r_max: float = 40.0, tol: float = 1e-13, n_nodes: int = 4000,
                        r_match: float = 2.0, window=(1e-3, None)) -> NegativeMode:
    """Locate the negative eigenvalue of L0 on radial functions by shooting.

    An outward solution from ``W(0) = 1, W'(0) = 0`` is matched at ``r_match``
    with an inward solution started from the decaying free tail at
    ``r_max``.  The eigenvalue is found by bisection on the sign of the
    Wronskian of the two branches.

    Parameters
    ----------
    r_max : float
        Outer radius, at least 30.
    tol : float
        Relative bisection tolerance on |λ0|.
    n_nodes : int
        Nodes of the returned profile's grid.
    window : (float, float or None)
        Search interval for |λ0|; the upper end defaults to max pU^{p-1}.

    Returns
    -------
    NegativeMode
    """
    if r_max < 30.0:
        raise DomainError("r_max must be at least 30")
    if not tol >= np.finfo(float).eps:
        raise DomainError("tolerance below machine precision")
    lo, hi = window
    hi = float(potential(0.0)) if hi is None else hi
    f_lo = _mismatch(lo, r_match, r_max)
    f_hi = _mismatch(hi, r_match, r_max)
    if np.sign(f_lo) == np.sign(f_hi):
        raise SearchError(f"no sign change for |λ0| in [{lo}, {hi}]")
    steps = 0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        f_mid = _mismatch(mid, r_match, r_max)
        steps += 1
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if steps > 200:
            break
    mu = 0.5 * (lo + hi)

    grid = RadialGrid(r_max, n_nodes)
    r = grid.nodes
    out = _shoot_out(mu, r_match)
    inn = _shoot_in(mu, r_match, r_max)
    w = np.empty_like(r)
    inner = r <= r_match
    a = (mu - potential(0.0)) / 10.0
    small = r < _R0
    w[small] = 1.0 + a * r[small] ** 2
    mid_mask = inner & ~small
    w[mid_mask] = out.sol(r[mid_mask])[0]
    log_w = inn.sol(r[~inner])[1] - inn.y[1, -1]
    w[~inner] = out.y[0, -1] * np.exp(log_w)
    return NegativeMode(-mu, RadialProfile(r, w, grid), steps)
