"""Quadrature in R^5: radial integrals, Gaussian-weighted inner products and
the mass constants of the bubble.

Radial integrals use composite Gauss-Legendre panels on ``s in [0, 1)``
with ``r = s / (1 - s)``, doubling the panel count until two successive
estimates agree.  Weighted inner products against ``ρ(z) = exp(-|z|²/4)``
use a tensor Gauss-Hermite rule with nodes ``z = 2u``.  Every reduction
goes through :func:`math.fsum`, so results do not depend on evaluation
order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .bubble_core import (
    N_DIM, P_EXP, RadialProfile, bubble_dr, bubble_radial, dilation_radial, potential,
)
from .errors import DomainError, PrecisionError

# surface area of the unit sphere S^4
OMEGA4 = 8.0 * math.pi ** 2 / 3.0
GAUSS_MASS = (4.0 * math.pi) ** 2.5


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for :func:`radial_integral`.

    Attributes
    ----------
    tol : float
        Absolute tolerance on the difference of successive estimates.
    max_depth : int
        Maximum number of panel doublings.
    order : int
        Gauss-Legendre nodes per panel.
    tail : bool
        Map [0, inf) to [0, 1); otherwise integrate over [0, r_max].
    """

    tol: float = 1e-10
    max_depth: int = 14
    order: int = 20
    tail: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tolerance must be positive")
        if self.max_depth < 1:
            raise DomainError("max_depth must be at least 1")


@dataclass(frozen=True)
class RadialIntegral:
    value: float
    error: float
    depth: int


@lru_cache(maxsize=None)
def _panel_rule(order: int, depth: int, lo: float, hi: float):
    x, w = leggauss(order)
    edges = np.linspace(lo, hi, 2 ** depth + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _radial_estimate(f, spec, depth, r_hi):
    if spec.tail:
        s, w = _panel_rule(spec.order, depth, 0.0, 1.0)
        r = s / (1.0 - s)
        jac = 1.0 / (1.0 - s) ** 2
    else:
        r, w = _panel_rule(spec.order, depth, 0.0, r_hi)
        jac = 1.0
    vals = np.asarray(f(r), dtype=float) * r ** 4 * jac * w
    if not np.all(np.isfinite(vals)):
        raise PrecisionError("non-finite integrand value")
    return OMEGA4 * math.fsum(vals)


def radial_integral(f: Union[Callable, RadialProfile], spec: QuadratureSpec = QuadratureSpec(),
                    r_max: float = None, start_depth: int = 2) -> RadialIntegral:
    """Integral over R^5 of a radial function, ``ω4 ∫ f(r) r^4 dr``.

    Parameters
    ----------
    f : callable or RadialProfile
        Radial integrand.  A profile is integrated over its own support
        (the tail substitution is switched off).
    spec : QuadratureSpec
    r_max : float, optional
        Upper limit when ``spec.tail`` is False.

    Returns
    -------
    RadialIntegral
        Value, last difference between doublings, and depth reached.

    Raises
    ------
    PrecisionError
        If the estimates do not settle within ``spec.max_depth`` doublings;
        the exception carries the last two estimates.
    """
    if isinstance(f, RadialProfile):
        r_max = f.r_max if r_max is None else min(r_max, f.r_max)
        spec = QuadratureSpec(spec.tol, spec.max_depth, spec.order, tail=False)
    if not spec.tail and r_max is None:
        raise DomainError("finite-range integration needs r_max")
    prev = _radial_estimate(f, spec, start_depth, r_max)
    for depth in range(start_depth + 1, spec.max_depth + 1):
        cur = _radial_estimate(f, spec, depth, r_max)
        err = abs(cur - prev)
        if err <= spec.tol:
            return RadialIntegral(cur, err, depth)
        prev_prev, prev = prev, cur
    raise PrecisionError(f"radial quadrature did not converge to {spec.tol}",
                         estimates=(prev_prev, prev))


def ball_complement_integral(f: Callable, radius: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Integral of a radial function over ``{|x| > radius}``.

    Uses ``r = radius + s/(1-s)`` so the whole exterior maps to [0, 1).
    """
    if radius < 0:
        raise DomainError("radius must be non-negative")
    prev = prev_prev = None
    for depth in range(2, spec.max_depth + 1):
        s, w = _panel_rule(spec.order, depth, 0.0, 1.0)
        r = radius + s / (1.0 - s)
        cur = OMEGA4 * math.fsum(np.asarray(f(r), dtype=float) * r ** 4 / (1.0 - s) ** 2 * w)
        if prev is not None and abs(cur - prev) <= spec.tol:
            return cur
        prev_prev, prev = prev, cur
    raise PrecisionError("exterior quadrature did not converge", estimates=(prev_prev, prev))


# ---------------------------------------------------------------------------
# mass constants


def _up(r):
    return bubble_radial(r) ** P_EXP


def _w6_sq(r):
    return dilation_radial(r) ** 2


def _d1u_sq(r):
    # angular average of (y_1/r)^2 over S^4 is 1/5
    return bubble_dr(r) ** 2 / N_DIM


def _mix(r):
    return potential(r) * dilation_radial(r)


@dataclass(frozen=True)
class MassConstants:
    """Integrals over R^5 built from the bubble.

    Attributes
    ----------
    I_p : float
        ∫ U^p.
    I_6 : float
        ∫ W_6².
    I_d : float
        ∫ (∂_1 U)².
    I_mix : float
        ∫ p U^{p-1} W_6.
    identity_defect : float
        |I_mix + 1.5 I_p| / I_p.
    """

    I_p: float
    I_6: float
    I_d: float
    I_mix: float
    identity_defect: float

    def to_dict(self):
        return asdict(self)


@lru_cache(maxsize=8)
def mass_constants(spec: QuadratureSpec = QuadratureSpec()) -> MassConstants:
    """Compute the four bubble integrals and the defect of ``I_mix = -1.5 I_p``."""
    ip = radial_integral(_up, spec).value
    i6 = radial_integral(_w6_sq, spec).value
    idd = radial_integral(_d1u_sq, spec).value
    imix = radial_integral(_mix, spec).value
    return MassConstants(ip, i6, idd, imix, abs(imix + 1.5 * ip) / ip)


# ---------------------------------------------------------------------------
# Gaussian-weighted inner products


@lru_cache(maxsize=None)
def hermite_rule(m: int):
    """Nodes and weights for ``∫ g(s) exp(-s²/4) ds`` (exact to degree 2m-1)."""
    u, w = hermgauss(m)
    return 2.0 * u, 2.0 * w


@lru_cache(maxsize=4)
def _tensor_rule(m: int):
    s, w = hermite_rule(m)
    grids = np.meshgrid(*([s] * N_DIM), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wg = np.meshgrid(*([w] * N_DIM), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wg], axis=-1), axis=-1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def rho_inner(f: Callable, g: Callable, m: int = 12, degree: int = None,
              radial: bool = False, spec: QuadratureSpec = QuadratureSpec(tol=1e-12)) -> float:
    """Weighted inner product ``∫ f g exp(-|z|²/4) dz`` over R^5.

    Parameters
    ----------
    f, g : callable
        Fields evaluated on points of shape (N, 5), or on radii when
        ``radial`` is True.
    m : int
        Gauss-Hermite nodes per axis.
    degree : int, optional
        Per-axis polynomial degree of ``f g``; checked against the
        capacity ``2m - 1`` of the rule.
    radial : bool
        Reduce to a one dimensional radial integral.
    """
    if radial:
        return radial_integral(lambda r: f(r) * g(r) * np.exp(-r * r / 4.0), spec).value
    if degree is not None and degree > 2 * m - 1:
        raise PrecisionError(f"degree {degree} exceeds rule capacity {2 * m - 1}")
    pts, wts = _tensor_rule(m)
    vals = np.asarray(f(pts), dtype=float) * np.asarray(g(pts), dtype=float) * wts
    return math.fsum(vals)


def rho_norm(f: Callable, m: int = 12) -> float:
    return math.sqrt(max(rho_inner(f, f, m), 0.0))
