"""Generalized moving least squares reconstruction on quasi-uniform clouds.

Each node carries a neighbor set (strict ball of radius delta), a local
orthonormal frame (boundary-aligned in the flux collar, Cartesian
elsewhere), and a shifted quadratic basis.  Applying a target functional
to the basis and solving the weighted normal equations yields stencil
weights that reproduce the functional exactly on quadratics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import geometry
from .geometry import DomainSpec, RegionTag
from .kernels import gmls_weight

#: dimension of the quadratic basis in 2D
Q_BASIS = 6


class GMLSError(Exception):
    pass


class InsufficientNeighbors(GMLSError):
    """Fewer neighbors than basis functions at a node."""


class SingularNormalEquations(GMLSError):
    """Degenerate point configuration in the weighted normal equations."""


@dataclass
class PointCloud:
    """Scattered nodes with tags, frames, and cached collar projections.

    ``frames[i]`` holds the basis pair rows (e1, e2): the outward normal
    and tangent at the projected boundary point for collar nodes, the
    Cartesian axes otherwise.  Projection data (xbar, normal, tangent,
    dist, curvature) is cached for collar nodes and NaN elsewhere.
    """

    points: np.ndarray
    h: float
    tags: np.ndarray
    frames: np.ndarray
    xbar: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    sdist: np.ndarray
    kappa: np.ndarray
    _grids: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.points)

    def tag(self, i: int) -> RegionTag:
        return RegionTag(int(self.tags[i]))

    def counts(self) -> dict:
        return {t.name: int(np.sum(self.tags == t.value)) for t in RegionTag}

    def neighbor_grid(self, delta: float) -> "_CellGrid":
        key = round(delta, 15)
        if key not in self._grids:
            self._grids[key] = _CellGrid(self.points, delta)
        return self._grids[key]


class _CellGrid:
    """Uniform background grid of cell size delta for O(1) ball queries."""

    def __init__(self, points: np.ndarray, delta: float):
        self.points = points
        self.delta = delta
        self.cells: dict[tuple[int, int], list[int]] = {}
        ij = np.floor(points / delta).astype(np.int64)
        for idx, (i, j) in enumerate(map(tuple, ij)):
            self.cells.setdefault((i, j), []).append(idx)

    def query(self, x: np.ndarray) -> np.ndarray:
        ci = math.floor(x[0] / self.delta)
        cj = math.floor(x[1] / self.delta)
        cand: list[int] = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                cand.extend(self.cells.get((ci + di, cj + dj), ()))
        cand = np.asarray(cand, dtype=np.int64)
        d2 = np.sum((self.points[cand] - x[None, :]) ** 2, axis=1)
        hit = cand[d2 < self.delta * self.delta]
        hit.sort()
        return hit


def build_neighbors(cloud: PointCloud, i: int, delta: float) -> np.ndarray:
    """Indices j with |x_i - x_j| < delta, including i itself."""
    nbrs = cloud.neighbor_grid(delta).query(cloud.points[i])
    if len(nbrs) < Q_BASIS:
        raise InsufficientNeighbors(
            f"node {i} has {len(nbrs)} neighbors, need {Q_BASIS}"
        )
    return nbrs


def basis_eval(center: np.ndarray, frame: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Shifted quadratic basis [1, d.e1, d.e2, (d.e1)^2, (d.e2)^2, (d.e1)(d.e2)]."""
    d = np.atleast_2d(pts) - np.asarray(center)[None, :]
    u = d @ frame[0]
    v = d @ frame[1]
    out = np.empty((len(u), Q_BASIS))
    out[:, 0] = 1.0
    out[:, 1] = u
    out[:, 2] = v
    out[:, 3] = u * u
    out[:, 4] = v * v
    out[:, 5] = u * v
    return out


@dataclass(frozen=True)
class Stencil:
    center: int
    neighbors: np.ndarray
    row_weights: np.ndarray
    cond_estimate: float


def functional_row(cloud: PointCloud, i: int, delta: float,
                   tau_on_basis: np.ndarray,
                   neighbors: np.ndarray | None = None) -> Stencil:
    """Stencil weights realizing a linear functional through the local
    reconstruction.

    Solves the weighted normal equations by column-pivoted QR on the
    square-root-weighted, horizon-scaled basis matrix; the weights
    reproduce tau_on_basis exactly on the six basis polynomials.
    """
    if neighbors is None:
        neighbors = build_neighbors(cloud, i, delta)
    x = cloud.points[i]
    P = basis_eval(x, cloud.frames[i], cloud.points[neighbors])
    r = np.linalg.norm(cloud.points[neighbors] - x[None, :], axis=1)
    sqw = np.sqrt(gmls_weight(delta, r))
    scale = np.array([1.0, delta, delta, delta**2, delta**2, delta**2])
    B = sqw[:, None] * (P / scale[None, :])
    Qm, Rm, perm = scipy.linalg.qr(B, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rm))
    if diag.min() == 0.0 or diag.max() / diag.min() > 1e12:
        raise SingularNormalEquations(
            f"node {i}: condition estimate {diag.max() / max(diag.min(), 1e-300):.2e}"
        )
    tau_scaled = np.asarray(tau_on_basis, dtype=float) / scale
    z = scipy.linalg.solve_triangular(Rm.T, tau_scaled[perm], lower=True)
    w = sqw * (Qm @ z)
    return Stencil(i, neighbors, w, float(diag.max() / diag.min()))


# ---------------------------------------------------------------------------
# cloud generation


def build_grid_cloud(domain: DomainSpec, h: float, delta: float) -> PointCloud:
    """Quasi-uniform cloud from the lattice (i*h, j*h) clipped to the
    computational region (domain plus the Dirichlet layer), with tags,
    frames and cached collar projections."""
    lo, hi = domain.bounding_box()
    pad = delta + h
    i0 = math.floor((lo[0] - pad) / h)
    i1 = math.ceil((hi[0] + pad) / h)
    j0 = math.floor((lo[1] - pad) / h)
    j1 = math.ceil((hi[1] + pad) / h)
    ii = np.arange(i0, i1 + 1)
    jj = np.arange(j0, j1 + 1)
    X, Y = np.meshgrid(ii * h, jj * h, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])

    is_in = geometry.inside_mask(domain, pts)
    layer = geometry.dirichlet_layer_mask(domain, pts, delta)
    keep = is_in | layer
    pts = pts[keep]
    is_in = is_in[keep]

    n = len(pts)
    tags = np.full(n, RegionTag.DIRICHLET_LAYER.value, dtype=np.int8)
    frames = np.tile(np.eye(2), (n, 1, 1))
    xbar = np.full((n, 2), np.nan)
    normal = np.full((n, 2), np.nan)
    tangent = np.full((n, 2), np.nan)
    sdist = np.full(n, np.nan)
    kappa = np.full(n, np.nan)

    inner = np.where(is_in)[0]
    tags[inner] = RegionTag.INTERIOR.value
    dist, near_neumann = _distance_and_flux_flag(domain, pts[inner])
    collar_local = (dist < delta) & near_neumann
    if domain.corner is not None:
        c = np.asarray(domain.corner)
        corner_local = np.hypot(pts[inner, 0] - c[0], pts[inner, 1] - c[1]) < delta
        tags[inner[corner_local]] = RegionTag.CORNER_DISK.value
        collar_local &= ~corner_local
    collar = inner[collar_local]
    tags[collar] = RegionTag.NEUMANN_COLLAR.value

    for i in collar:
        proj = geometry.project(domain, pts[i])
        frames[i, 0] = proj.normal
        frames[i, 1] = proj.tangent
        xbar[i] = proj.xbar
        normal[i] = proj.normal
        tangent[i] = proj.tangent
        sdist[i] = proj.dist
        kappa[i] = proj.curvature

    return PointCloud(pts, h, tags, frames, xbar, normal, tangent, sdist, kappa)


def _distance_and_flux_flag(domain: DomainSpec, pts: np.ndarray):
    """Boundary distance and nearest-edge-carries-flux flag, vectorized."""
    if domain.is_square:
        d = geometry._square_edge_distances(pts)
        dmin = d.min(axis=1)
        near = np.zeros(len(pts), dtype=bool)
        for k, name in enumerate(geometry._EDGE_ORDER):
            if name in domain.neumann_edges:
                near |= d[:, k] - dmin <= 1e-12
        return dmin, near
    if domain.shape is geometry.Shape.UNIT_DISK:
        return np.abs(1.0 - np.hypot(pts[:, 0], pts[:, 1])), np.ones(len(pts), bool)
    _, d, _ = geometry._ellipse_project_many(domain, pts)
    return d, np.ones(len(pts), dtype=bool)
