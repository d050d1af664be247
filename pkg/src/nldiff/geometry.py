"""Analytic domain geometry for the nonlocal diffusion solver.

Supplies the four shipped domains (unit square with one flux edge, unit
disk, ellipse, unit square with two flux edges meeting at a corner),
inside tests, closest-point projections with boundary frames and
curvature, boundary-parallel contour points, and the per-node region
classification used to pick the discrete operator row.

Conventions: the boundary normal ``n`` points out of the domain and the
tangent is ``p = (n2, -n1)``, i.e. the normal rotated clockwise.  The
distance ``s`` of a collar point to the boundary satisfies
``xbar - x = s * n(xbar)``.  Curvature is positive for the convex
domains shipped here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class GeometryError(Exception):
    """Base class for geometry failures."""


class NonUniqueProjection(GeometryError):
    """The closest boundary point is not unique (point on a ridge)."""


class ContourLeavesNeumannRegion(GeometryError):
    """A boundary-parallel contour point exits the flux region."""


class OutsideComputationalDomain(GeometryError):
    """Point lies neither in the domain nor in a constrained layer."""


class Shape(Enum):
    UNIT_SQUARE = "unit_square"
    UNIT_DISK = "unit_disk"
    ELLIPSE = "ellipse"
    UNIT_SQUARE_CORNER = "unit_square_corner"


class RegionTag(Enum):
    INTERIOR = 0
    NEUMANN_COLLAR = 1
    CORNER_DISK = 2
    DIRICHLET_LAYER = 3


# unit-square edge table: name -> (outward normal, line offset c with the
# edge line {y : y.normal == c}, coordinate axis that runs along the edge)
_SQUARE_EDGES = {
    "left": (np.array([-1.0, 0.0]), 0.0),
    "right": (np.array([1.0, 0.0]), 1.0),
    "bottom": (np.array([0.0, -1.0]), 0.0),
    "top": (np.array([0.0, 1.0]), 1.0),
}
_EDGE_ORDER = ("right", "top", "left", "bottom")


@dataclass(frozen=True)
class DomainSpec:
    """Analytic description of the domain and its boundary partition.

    ``neumann_edges``/``dirichlet_edges`` name unit-square edges; for the
    smooth shapes the whole boundary carries the flux condition and both
    tuples are ``("all",)`` / ``()``.  ``corner`` and ``corner_angle`` are
    set only for the two-flux-edge square.
    """

    shape: Shape
    a: float = 1.0
    b: float = 1.0
    neumann_edges: tuple[str, ...] = ()
    dirichlet_edges: tuple[str, ...] = ()
    corner: tuple[float, float] | None = None
    corner_angle: float | None = None

    def __post_init__(self):
        if self.shape is Shape.ELLIPSE:
            if not (self.a >= self.b > 0.0):
                raise ValueError("ellipse requires a >= b > 0")
        if self.shape in (Shape.UNIT_SQUARE, Shape.UNIT_SQUARE_CORNER):
            names = set(self.neumann_edges) | set(self.dirichlet_edges)
            if names != set(_SQUARE_EDGES) or (
                set(self.neumann_edges) & set(self.dirichlet_edges)
            ):
                raise ValueError("edges must partition the square boundary")
        if self.shape is Shape.UNIT_SQUARE_CORNER:
            if self.corner != (1.0, 1.0) or self.corner_angle != math.pi / 2:
                raise ValueError("corner domain is fixed at c=(1,1), theta=pi/2")

    @staticmethod
    def unit_square() -> "DomainSpec":
        """Square [0,1]^2 with the flux condition on the edge x=1."""
        return DomainSpec(
            Shape.UNIT_SQUARE,
            neumann_edges=("right",),
            dirichlet_edges=("left", "bottom", "top"),
        )

    @staticmethod
    def unit_disk() -> "DomainSpec":
        return DomainSpec(Shape.UNIT_DISK, neumann_edges=("all",))

    @staticmethod
    def ellipse(a: float, b: float) -> "DomainSpec":
        return DomainSpec(Shape.ELLIPSE, a=a, b=b, neumann_edges=("all",))

    @staticmethod
    def unit_square_corner() -> "DomainSpec":
        """Square with flux edges x=1 and y=1 meeting at the corner (1,1)."""
        return DomainSpec(
            Shape.UNIT_SQUARE_CORNER,
            neumann_edges=("right", "top"),
            dirichlet_edges=("left", "bottom"),
            corner=(1.0, 1.0),
            corner_angle=math.pi / 2,
        )

    @property
    def is_square(self) -> bool:
        return self.shape in (Shape.UNIT_SQUARE, Shape.UNIT_SQUARE_CORNER)

    @property
    def pure_neumann(self) -> bool:
        return not self.dirichlet_edges and not self.is_square

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_square:
            return np.array([0.0, 0.0]), np.array([1.0, 1.0])
        if self.shape is Shape.UNIT_DISK:
            return np.array([-1.0, -1.0]), np.array([1.0, 1.0])
        return np.array([-self.a, -self.b]), np.array([self.a, self.b])


@dataclass(frozen=True)
class Projection:
    """Closest boundary point of a collar point with its frame.

    ``xbar - x == dist * normal`` for points inside the domain.
    """

    xbar: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    dist: float
    curvature: float


def _tangent_of(n: np.ndarray) -> np.ndarray:
    return np.array([n[1], -n[0]])


# ---------------------------------------------------------------------------
# inside tests


def inside(domain: DomainSpec, x) -> bool:
    """True iff x lies in the open domain; boundary points return False."""
    x = np.asarray(x, dtype=float)
    return bool(inside_mask(domain, x[None, :])[0])


def inside_mask(domain: DomainSpec, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if domain.is_square:
        return (
            (pts[:, 0] > 0.0)
            & (pts[:, 0] < 1.0)
            & (pts[:, 1] > 0.0)
            & (pts[:, 1] < 1.0)
        )
    if domain.shape is Shape.UNIT_DISK:
        return pts[:, 0] ** 2 + pts[:, 1] ** 2 < 1.0
    return (pts[:, 0] / domain.a) ** 2 + (pts[:, 1] / domain.b) ** 2 < 1.0


# ---------------------------------------------------------------------------
# square edge helpers


def _square_edge_distances(pts: np.ndarray) -> np.ndarray:
    """Distances of interior points to the four edge lines, in _EDGE_ORDER."""
    return np.stack(
        [
            1.0 - pts[:, 0],  # right
            1.0 - pts[:, 1],  # top
            pts[:, 0],        # left
            pts[:, 1],        # bottom
        ],
        axis=1,
    )


def _nearest_edge(domain: DomainSpec, x: np.ndarray, tie_eps: float = 1e-12) -> str:
    d = _square_edge_distances(x[None, :])[0]
    dmin = d.min()
    tied = [name for name, di in zip(_EDGE_ORDER, d) if di - dmin <= tie_eps]
    if len(tied) == 1:
        return tied[0]
    neumann_tied = [name for name in tied if name in domain.neumann_edges]
    if neumann_tied:
        return neumann_tied[0]
    raise NonUniqueProjection(f"point {x} equidistant from edges {tied}")


def exterior_cut_halfplanes(
    domain: DomainSpec, x: np.ndarray, delta: float
) -> list[tuple[float, np.ndarray]]:
    """Half-planes of the square complement cut by the ball B(x, delta).

    Returns (a, m) pairs where the exterior half-plane is
    {y : (y - x).m > a} with outward unit normal m and 0 <= a < delta.
    At most two (orthogonal) half-planes occur for delta < 1/2.
    """
    if not domain.is_square:
        raise GeometryError("half-plane cuts only defined for square domains")
    x = np.asarray(x, dtype=float)
    cuts = []
    for name in _EDGE_ORDER:
        n, c = _SQUARE_EDGES[name]
        a = c - float(x @ n)  # signed distance to the edge line along n
        if 0.0 <= a < delta:
            cuts.append((a, n))
        elif -delta < a < 0.0:
            raise GeometryError(f"point {x} lies outside edge {name}")
    return cuts


# ---------------------------------------------------------------------------
# ellipse closest point (vectorized Newton with multi-start)

_ELLIPSE_STARTS = np.array([0.0, 0.45, -0.45, 0.9, -0.9])


def _ellipse_newton(a: float, b: float, pts: np.ndarray, t0: np.ndarray,
                    maxit: int = 50, tol: float = 1e-13) -> np.ndarray:
    """Newton on the stationarity condition (x - c(t)).c'(t) = 0."""
    t = t0.copy()
    scale = a * a
    for _ in range(maxit):
        ct, st = np.cos(t), np.sin(t)
        rx = pts[:, 0] - a * ct
        ry = pts[:, 1] - b * st
        phi = rx * a * st - ry * b * ct  # -(x-c).c' up to sign convention
        dphi = a * a * st * st + b * b * ct * ct + rx * a * ct + ry * b * st
        step = phi / np.where(np.abs(dphi) > 1e-300, dphi, 1.0)
        step = np.clip(step, -0.5, 0.5)
        t = t - step
        if np.all(np.abs(phi) <= tol * scale):
            break
    return t


def _ellipse_project_many(domain: DomainSpec, pts: np.ndarray):
    """Best boundary parameter, distance and runner-up distance per point.

    Multi-start Newton guards against the medial-axis region near the
    evolute where the default start can land on the wrong sheet; the
    runner-up distance among distinct roots feeds the uniqueness check.
    """
    a, b = domain.a, domain.b
    pts = np.asarray(pts, dtype=float)
    base = np.arctan2(a * pts[:, 1], b * pts[:, 0])
    roots_t = []
    roots_d = []
    for off in _ELLIPSE_STARTS:
        t = _ellipse_newton(a, b, pts, base + off)
        d = np.hypot(pts[:, 0] - a * np.cos(t), pts[:, 1] - b * np.sin(t))
        roots_t.append(t)
        roots_d.append(d)
    roots_t = np.stack(roots_t)
    roots_d = np.stack(roots_d)
    ibest = np.argmin(roots_d, axis=0)
    cols = np.arange(len(pts))
    best_t = roots_t[ibest, cols]
    best_d = roots_d[ibest, cols]
    ang = np.mod(roots_t - best_t[None, :] + np.pi, 2 * np.pi) - np.pi
    distinct = np.abs(ang) > 1e-8
    second_d = np.where(distinct, roots_d, np.inf).min(axis=0)
    return best_t, best_d, second_d


def _ellipse_frame(domain: DomainSpec, t):
    a, b = domain.a, domain.b
    ct, st = np.cos(t), np.sin(t)
    norm = np.hypot(b * ct, a * st)
    n = np.stack([b * ct / norm, a * st / norm], axis=-1)
    kappa = a * b / norm**3
    return n, kappa


def ellipse_curvature(domain: DomainSpec, t):
    """Curvature of the ellipse boundary at parameter t."""
    _, kappa = _ellipse_frame(domain, t)
    return kappa


# ---------------------------------------------------------------------------
# projections


def project(domain: DomainSpec, x) -> Projection:
    """Closest-point projection onto the boundary with frame and curvature.

    Valid for points within the reach of the boundary (unique foot point).
    Raises NonUniqueProjection on equidistant configurations such as the
    square diagonal ridge or the disk center.
    """
    x = np.asarray(x, dtype=float)
    if domain.is_square:
        edge = _nearest_edge(domain, x)
        n, c = _SQUARE_EDGES[edge]
        d = c - float(x @ n)
        xbar = x + d * n
        return Projection(xbar, n.copy(), _tangent_of(n), abs(d), 0.0)
    if domain.shape is Shape.UNIT_DISK:
        r = float(np.hypot(x[0], x[1]))
        if r < 1e-14:
            raise NonUniqueProjection("disk center has no unique projection")
        n = x / r
        return Projection(n.copy(), n.copy(), _tangent_of(n), abs(1.0 - r), 1.0)
    t, d, d2 = _ellipse_project_many(domain, x[None, :])
    if d2[0] - d[0] < 1e-12:
        raise NonUniqueProjection(f"point {x} near the ellipse medial axis")
    n, kappa = _ellipse_frame(domain, t[0])
    xbar = np.array([domain.a * np.cos(t[0]), domain.b * np.sin(t[0])])
    return Projection(xbar, n, _tangent_of(n), float(d[0]), float(kappa))


def boundary_distance(domain: DomainSpec, x) -> float:
    """Distance of an interior point to the boundary."""
    x = np.asarray(x, dtype=float)
    if domain.is_square:
        return float(_square_edge_distances(x[None, :])[0].min())
    if domain.shape is Shape.UNIT_DISK:
        return abs(1.0 - float(np.hypot(x[0], x[1])))
    _, d, _ = _ellipse_project_many(domain, x[None, :])
    return float(d[0])


# ---------------------------------------------------------------------------
# boundary-parallel contours


def _ellipse_contour_arclength(domain: DomainSpec, s: float, t0: float,
                               t: np.ndarray, order: int = 30) -> np.ndarray:
    """Arc length along the inner parallel curve from t0 to each t."""
    a, b = domain.a, domain.b
    gl_x, gl_w = np.polynomial.legendre.leggauss(order)
    # map [t0, t_i] for all i at once
    mid = 0.5 * (t + t0)
    half = 0.5 * (t - t0)
    sig = mid[:, None] + half[:, None] * gl_x[None, :]
    ct, st = np.cos(sig), np.sin(sig)
    norm = np.hypot(a * st, b * ct)
    kappa = a * b / np.hypot(b * ct, a * st) ** 3
    speed = norm * (1.0 - s * kappa)
    return half * (speed @ gl_w)


def _ellipse_contour_params(domain: DomainSpec, proj: Projection, t0: float,
                            ls: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Parameters t with parallel-curve arc length from t0 equal to -ls.

    The tangent p = (n2, -n1) runs against the parameter direction, so a
    positive contour offset corresponds to decreasing t.
    """
    a, b = domain.a, domain.b
    s = proj.dist
    target = -np.asarray(ls, dtype=float)
    ct0, st0 = math.cos(t0), math.sin(t0)
    speed0 = math.hypot(a * st0, b * ct0) * (
        1.0 - s * a * b / math.hypot(b * ct0, a * st0) ** 3
    )
    t = t0 + target / speed0
    for _ in range(60):
        arc = _ellipse_contour_arclength(domain, s, t0, t)
        err = arc - target
        if np.all(np.abs(err) <= tol):
            break
        ct, st = np.cos(t), np.sin(t)
        norm = np.hypot(a * st, b * ct)
        kappa = a * b / np.hypot(b * ct, a * st) ** 3
        speed = norm * (1.0 - s * kappa)
        t = t - err / speed
    return t


def contour_points(domain: DomainSpec, x, ls) -> np.ndarray:
    """Points on the boundary-parallel contour through x at offsets ls.

    The contour is the level set of the boundary distance through x and
    offsets are arc lengths along it, positive in the tangent direction
    p(xbar).  No region checks are applied; quadrature callers evaluate
    polynomial reconstructions that extend smoothly past the collar.
    """
    x = np.asarray(x, dtype=float)
    ls = np.atleast_1d(np.asarray(ls, dtype=float))
    if domain.is_square:
        proj = project(domain, x)
        return x[None, :] + ls[:, None] * proj.tangent[None, :]
    if domain.shape is Shape.UNIT_DISK:
        rho = float(np.hypot(x[0], x[1]))
        if rho < 1e-14:
            raise NonUniqueProjection("no contour through the disk center")
        phi = ls / rho
        c, sn = np.cos(phi), np.sin(phi)
        # clockwise rotation moves along p = (n2, -n1)
        return np.stack([c * x[0] + sn * x[1], -sn * x[0] + c * x[1]], axis=1)
    proj = project(domain, x)
    t0 = math.atan2(proj.xbar[1] / domain.b, proj.xbar[0] / domain.a)
    t = _ellipse_contour_params(domain, proj, t0, ls)
    n, _ = _ellipse_frame(domain, t)
    bound = np.stack([domain.a * np.cos(t), domain.b * np.sin(t)], axis=1)
    return bound - proj.dist * n


def contour_point(domain: DomainSpec, x, l: float, check: bool = True) -> np.ndarray:
    """Point at arc length l along the boundary-parallel contour through x.

    With check=True the result must stay inside the domain and project
    onto a flux edge, else ContourLeavesNeumannRegion is raised; the
    corner treatment and quadrature use check=False and truncate or
    extend by reconstruction instead.
    """
    pt = contour_points(domain, x, np.array([l]))[0]
    if check and l != 0.0:
        if not inside(domain, pt):
            raise ContourLeavesNeumannRegion(f"contour point {pt} exits the domain")
        if domain.is_square:
            edge = _nearest_edge(domain, pt)
            if edge not in domain.neumann_edges:
                raise ContourLeavesNeumannRegion(
                    f"contour point {pt} projects onto Dirichlet edge {edge}"
                )
    return pt


# ---------------------------------------------------------------------------
# region classification


def _dirichlet_collar_rects(domain: DomainSpec, delta: float) -> list[np.ndarray]:
    """Axis-aligned collar rectangles of the Dirichlet edges, as (lo, hi)."""
    rects = []
    for name in domain.dirichlet_edges:
        if name == "left":
            rects.append(np.array([[0.0, 0.0], [delta, 1.0]]))
        elif name == "right":
            rects.append(np.array([[1.0 - delta, 0.0], [1.0, 1.0]]))
        elif name == "bottom":
            rects.append(np.array([[0.0, 0.0], [1.0, delta]]))
        elif name == "top":
            rects.append(np.array([[0.0, 1.0 - delta], [1.0, 1.0]]))
    return rects


def _dist_to_rect(pts: np.ndarray, rect: np.ndarray) -> np.ndarray:
    lo, hi = rect
    dx = np.maximum(np.maximum(lo[0] - pts[:, 0], pts[:, 0] - hi[0]), 0.0)
    dy = np.maximum(np.maximum(lo[1] - pts[:, 1], pts[:, 1] - hi[1]), 0.0)
    return np.hypot(dx, dy)


def dirichlet_layer_mask(domain: DomainSpec, pts: np.ndarray, delta: float) -> np.ndarray:
    """Exterior points carrying prescribed values: within delta of the
    Dirichlet collar, and not inside the domain."""
    pts = np.asarray(pts, dtype=float)
    if not domain.dirichlet_edges:
        return np.zeros(len(pts), dtype=bool)
    dist = np.full(len(pts), np.inf)
    for rect in _dirichlet_collar_rects(domain, delta):
        dist = np.minimum(dist, _dist_to_rect(pts, rect))
    return (~inside_mask(domain, pts)) & (dist <= delta)


def classify(domain: DomainSpec, x, delta: float) -> RegionTag:
    """Region tag of a node: corner disk, flux collar, interior, or
    Dirichlet layer.  Raises OutsideComputationalDomain otherwise."""
    x = np.asarray(x, dtype=float)
    is_in = inside(domain, x)
    if domain.corner is not None and is_in:
        if float(np.hypot(x[0] - domain.corner[0], x[1] - domain.corner[1])) < delta:
            return RegionTag.CORNER_DISK
    if is_in:
        if boundary_distance(domain, x) < delta:
            if domain.is_square:
                d = _square_edge_distances(x[None, :])[0]
                dmin = d.min()
                tied = [n for n, di in zip(_EDGE_ORDER, d) if di - dmin <= 1e-12]
                if any(n in domain.neumann_edges for n in tied):
                    return RegionTag.NEUMANN_COLLAR
            else:
                return RegionTag.NEUMANN_COLLAR
        return RegionTag.INTERIOR
    if dirichlet_layer_mask(domain, x[None, :], delta)[0]:
        return RegionTag.DIRICHLET_LAYER
    raise OutsideComputationalDomain(f"{x} is outside the computational domain")


# ---------------------------------------------------------------------------
# boundary graph in a projection frame (used by the curved-cut quadrature)


def boundary_graph(domain: DomainSpec, proj: Projection, t: np.ndarray) -> np.ndarray:
    """Boundary height s = b(t) in the frame (tangent, normal) at proj.xbar.

    Points are xbar + t*p + s*n; the domain lies on the side s < b(t).
    Only defined for the smooth shapes.
    """
    t = np.asarray(t, dtype=float)
    if domain.shape is Shape.UNIT_DISK:
        return np.sqrt(np.maximum(1.0 - t * t, 0.0)) - 1.0
    if domain.shape is Shape.ELLIPSE:
        a, b = domain.a, domain.b
        p, n, xb = proj.tangent, proj.normal, proj.xbar
        # solve F(xb + t p + s n) = 0 by Newton in s from the osculating guess
        s = -0.5 * proj.curvature * t * t
        for _ in range(60):
            u = xb[0] + t * p[0] + s * n[0]
            v = xb[1] + t * p[1] + s * n[1]
            F = (u / a) ** 2 + (v / b) ** 2 - 1.0
            dF = 2.0 * (u * n[0] / a**2 + v * n[1] / b**2)
            step = F / np.where(np.abs(dF) > 1e-300, dF, 1.0)
            s = s - step
            if np.all(np.abs(F) < 1e-14):
                break
        return s
    raise GeometryError("boundary graph is only defined for smooth domains")
