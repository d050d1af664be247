"""Quadrature over ball-domain intersections, contour integrals, and the
collar coefficient.

Regions of the form B(x, delta) minus the domain (and their complements
in the ball) are integrated in a boundary-aligned frame as the area
between the boundary graph and a ball arc.  The abscissa is substituted
t = delta*sin(phi), which turns the arc into delta*cos(phi) and keeps the
integrand analytic up to the intersection points; tensor Gauss-Legendre
then converges spectrally.  Square domains use the same machinery per
exterior half-plane with inclusion-exclusion at corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import geometry
from .geometry import DomainSpec, Projection, Shape
from .kernels import KernelSet


class Side(Enum):
    INSIDE_OMEGA = "inside"
    OUTSIDE_OMEGA = "outside"


class RegionDecompositionFailure(Exception):
    """The ball-boundary overlap cannot be written between two curves."""


@dataclass(frozen=True)
class QuadratureConfig:
    gauss_order: int = 24
    rel_tol: float = 1e-10
    contour_gauss_order: int = 32

    def __post_init__(self):
        if self.gauss_order < 8 or self.contour_gauss_order < 16:
            raise ValueError("gauss orders below the supported minimum")
        if not (0.0 < self.rel_tol <= 1e-6):
            raise ValueError("rel_tol must lie in (0, 1e-6]")


DEFAULT_CONFIG = QuadratureConfig()


@lru_cache(maxsize=64)
def _leggauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _gauss(order: int, a: float, b: float):
    x, w = _leggauss(order)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _eval(f, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals


# ---------------------------------------------------------------------------
# full ball


def full_ball_integral(x, delta: float, f, order: int) -> np.ndarray:
    """Integral of f over B(x, delta) by a polar tensor rule.

    Exact to rounding for polynomial integrands: Gauss in the radius,
    equispaced trapezoid in the angle (spectrally exact for the
    trigonometric polynomials a polynomial integrand produces).
    """
    x = np.asarray(x, dtype=float)
    n_theta = max(32, 4 * order)
    theta = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    rq, rw = _gauss(order, 0.0, delta)
    ct, st = np.cos(theta), np.sin(theta)
    pts = np.empty((n_theta * order, 2))
    pts[:, 0] = (x[0] + np.outer(ct, rq)).ravel()
    pts[:, 1] = (x[1] + np.outer(st, rq)).ravel()
    wts = np.tile(rw * rq, n_theta) * (2.0 * math.pi / n_theta)
    return wts @ _eval(f, pts)


# ---------------------------------------------------------------------------
# ball cut by half-planes (square domains)


def _halfplane_cut(x, delta, a, m, f, order) -> np.ndarray:
    """Integral of f over B(x, delta) cut to {(y-x).m > a}, 0 <= a < delta."""
    mp = np.array([m[1], -m[0]])
    phi0 = math.asin(min(a / delta, 1.0))
    phiq, phiw = _gauss(order, phi0, 0.5 * math.pi)
    u = delta * np.sin(phiq)
    half = delta * np.cos(phiq)
    sq, sw = _leggauss(order)
    v = half[:, None] * sq[None, :]
    uu = np.repeat(u, order)
    vv = v.ravel()
    pts = x[None, :] + uu[:, None] * m[None, :] + vv[:, None] * mp[None, :]
    wts = (np.repeat(phiw * half * half, order) * np.tile(sw, len(u)))
    return wts @ _eval(f, pts)


def _corner_cut(x, delta, a1, m1, a2, m2, f, order) -> np.ndarray:
    """Integral over B(x, delta) cut to two orthogonal half-planes."""
    if abs(float(m1 @ m2)) > 1e-12:
        raise RegionDecompositionFailure("corner cut requires orthogonal edges")
    if a1 * a1 + a2 * a2 >= delta * delta:
        return None
    u_max = math.sqrt(delta * delta - a2 * a2)
    phi0, phi1 = math.asin(a1 / delta), math.asin(u_max / delta)
    phiq, phiw = _gauss(order, phi0, phi1)
    u = delta * np.sin(phiq)
    upper = delta * np.cos(phiq)
    sq, sw = _leggauss(order)
    mid = 0.5 * (upper + a2)
    hw = 0.5 * (upper - a2)
    v = mid[:, None] + hw[:, None] * sq[None, :]
    uu = np.repeat(u, order)
    vv = v.ravel()
    pts = x[None, :] + uu[:, None] * m1[None, :] + vv[:, None] * m2[None, :]
    wts = np.repeat(phiw * delta * np.cos(phiq) * hw, order) * np.tile(sw, len(u))
    return wts @ _eval(f, pts)


def _exterior_square(domain, x, delta, f, order) -> np.ndarray | None:
    cuts = geometry.exterior_cut_halfplanes(domain, x, delta)
    if not cuts:
        return None
    total = _halfplane_cut(x, delta, cuts[0][0], cuts[0][1], f, order)
    for a, m in cuts[1:]:
        total = total + _halfplane_cut(x, delta, a, m, f, order)
    if len(cuts) == 2:
        overlap = _corner_cut(
            x, delta, cuts[0][0], cuts[0][1], cuts[1][0], cuts[1][1], f, order
        )
        if overlap is not None:
            total = total - overlap
    if len(cuts) > 2:
        raise RegionDecompositionFailure("more than two edges cut one ball")
    return total


# ---------------------------------------------------------------------------
# ball cut by a smooth boundary graph (disk, ellipse)


def _graph_cut_roots(domain, proj: Projection, delta: float) -> tuple[float, float]:
    """Abscissae where the boundary graph crosses the ball circle."""
    s_x = proj.dist

    def g(t):
        b = float(geometry.boundary_graph(domain, proj, np.array([t]))[0])
        return t * t + (b + s_x) ** 2 - delta * delta

    roots = []
    for sign in (-1.0, 1.0):
        lo, hi = 0.0, sign * delta
        glo, ghi = g(lo), g(hi)
        if glo >= 0.0 or ghi < 0.0:
            raise RegionDecompositionFailure(
                "ball-boundary intersection not bracketed"
            )
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if g(mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if abs(hi - lo) < 1e-13 * delta:
                break
        roots.append(0.5 * (lo + hi))
    return roots[0], roots[1]


def _exterior_graph(domain, x, proj: Projection, delta, f, order) -> np.ndarray:
    """Integral of f over B(x, delta) minus the domain, boundary as graph."""
    s_x = proj.dist
    t_lo, t_hi = _graph_cut_roots(domain, proj, delta)
    phiq, phiw = _gauss(order, math.asin(t_lo / delta), math.asin(t_hi / delta))
    t = delta * np.sin(phiq)
    s_arc = -s_x + delta * np.cos(phiq)
    s_bnd = geometry.boundary_graph(domain, proj, t)
    sq, sw = _leggauss(order)
    mid = 0.5 * (s_arc + s_bnd)
    hw = np.maximum(0.5 * (s_arc - s_bnd), 0.0)
    s = mid[:, None] + hw[:, None] * sq[None, :]
    tt = np.repeat(t, order)
    ss = s.ravel()
    p, n, xb = proj.tangent, proj.normal, proj.xbar
    pts = xb[None, :] + tt[:, None] * p[None, :] + ss[:, None] * n[None, :]
    wts = np.repeat(phiw * delta * np.cos(phiq) * hw, order) * np.tile(sw, len(t))
    return wts @ _eval(f, pts)


# ---------------------------------------------------------------------------
# public entry points


def exterior_integral(domain: DomainSpec, x, delta: float, f,
                      config: QuadratureConfig = DEFAULT_CONFIG,
                      proj: Projection | None = None) -> np.ndarray:
    """Integral of f over B(x, delta) \\ domain; zero for interior balls."""
    x = np.asarray(x, dtype=float)
    if domain.is_square:
        out = _exterior_square(domain, x, delta, f, config.gauss_order)
    else:
        if proj is None:
            if geometry.boundary_distance(domain, x) >= delta:
                out = None
            else:
                proj = geometry.project(domain, x)
        if proj is not None and proj.dist < delta:
            out = _exterior_graph(domain, x, proj, delta, f, config.gauss_order)
        else:
            out = None
    if out is None:
        probe = _eval(f, x[None, :])
        return np.zeros(probe.shape[1])
    return out


def integrate_ball_region(x, delta: float, domain: DomainSpec, side: Side, f,
                          config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Integral of a scalar integrand over the ball-domain intersection
    (side INSIDE_OMEGA) or the exterior ball segment (OUTSIDE_OMEGA)."""
    x = np.asarray(x, dtype=float)
    ext = exterior_integral(domain, x, delta, f, config)
    if side is Side.OUTSIDE_OMEGA:
        return float(ext[0])
    full = full_ball_integral(x, delta, f, config.gauss_order)
    return float(full[0] - ext[0])


def m_delta(x, delta: float, domain: DomainSpec,
            config: QuadratureConfig = DEFAULT_CONFIG,
            proj: Projection | None = None,
            kernels: KernelSet | None = None) -> float:
    """Collar coefficient weighting the contour correction.

    Exterior kernel moment of |(y-x).p|^2 - |(y-xbar).n|^2 + s^2; equals
    8 s (delta^2 - s^2)^{3/2} / (3 pi delta^4) on a flat boundary and is
    nonnegative on the shipped convex domains.
    """
    x = np.asarray(x, dtype=float)
    if proj is None:
        proj = geometry.project(domain, x)
    if kernels is None:
        kernels = KernelSet(delta)
    amp = kernels.j_amplitude
    p, n, xb, s = proj.tangent, proj.normal, proj.xbar, proj.dist

    def integrand(pts):
        dp = (pts - x[None, :]) @ p
        dn = (pts - xb[None, :]) @ n
        return amp * (dp * dp - dn * dn + s * s)

    return float(exterior_integral(domain, x, delta, integrand, config, proj)[0])


def contour_rule(domain: DomainSpec, x, delta: float,
                 config: QuadratureConfig = DEFAULT_CONFIG,
                 kernels: KernelSet | None = None):
    """Contour quadrature nodes and kernel-weighted weights on [-delta, delta].

    Returns (points, weights) with the 1D kernel folded into the weights,
    so that sum(weights * f(points)) approximates the kernel-weighted
    contour integral of f along the boundary-parallel contour through x.
    """
    if kernels is None:
        kernels = KernelSet(delta)
    lq, lw = _gauss(config.contour_gauss_order, -delta, delta)
    pts = geometry.contour_points(domain, x, lq)
    return pts, lw * kernels.h_amplitude


def contour_integral(x, delta: float, domain: DomainSpec, f,
                     config: QuadratureConfig = DEFAULT_CONFIG,
                     kernels: KernelSet | None = None) -> float:
    """Kernel-weighted integral of f along the contour through x."""
    pts, hw = contour_rule(domain, x, delta, config, kernels)
    return float(hw @ np.asarray(f(pts), dtype=float))


def flat_m_delta_closed_form(s: float, delta: float) -> float:
    """Collar coefficient on a flat boundary, 8 s (d^2-s^2)^{3/2}/(3 pi d^4)."""
    return 8.0 * s * (delta * delta - s * s) ** 1.5 / (3.0 * math.pi * delta**4)


def flat_flux_coefficient_closed_form(s: float, delta: float) -> float:
    """Exterior kernel moment of (y-x).n on a flat boundary."""
    return 8.0 * (delta * delta - s * s) ** 1.5 / (3.0 * math.pi * delta**4)
