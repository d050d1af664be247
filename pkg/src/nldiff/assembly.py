"""Row-by-row assembly of the nonlocal collocation system.

Interior rows apply the full-ball operator moments to the local
reconstruction.  Flux-collar rows add the exterior correction moments,
the kernel-weighted contour term scaled by the collar coefficient, and
the flux data on the right-hand side.  Corner-disk rows use the
two-edge expansion with a truncated contour.  Dirichlet-layer rows and
the optional pin are identity rows carrying data.

The curvature factor in the collar right-hand side is realized through
the same contour quadrature as the operator term (the kernel-weighted
normal displacement along the contour); this keeps the linear patch
solution exact on constant-curvature boundaries and agrees with the
boundary curvature to first order in the horizon.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse

from . import geometry, gmls, quadrature
from .geometry import DomainSpec, RegionTag
from .gmls import PointCloud, Stencil, basis_eval, build_neighbors, functional_row
from .kernels import KernelSet, truncated_h_amplitude
from .quadrature import QuadratureConfig, DEFAULT_CONFIG


class AssemblyError(Exception):
    """One or more rows failed to assemble; carries (node, error) pairs."""

    def __init__(self, failures):
        self.failures = failures
        preview = "; ".join(f"node {i}: {e}" for i, e in failures[:5])
        more = "" if len(failures) <= 5 else f" (+{len(failures) - 5} more)"
        super().__init__(f"{len(failures)} row(s) failed: {preview}{more}")


class DegenerateCornerFrame(Exception):
    """Corner opening angle outside (0, pi)."""


class RowKind(Enum):
    INTERIOR = 0
    NEUMANN = 1
    CORNER = 2
    DIRICHLET = 3
    PINNED = 4


@dataclass(frozen=True)
class ProblemData:
    """Data of one boundary value problem.

    ``f`` is the source on the domain, ``g`` the flux datum on flux
    boundary points, ``dirichlet_value`` the prescribed value on the
    exterior layer.  Corner problems additionally supply the tangential
    derivative of the flux datum along each edge's tangent direction.
    ``pin`` fixes the solution at the node nearest a point (pure flux
    problems).
    """

    f: object
    g: object = None
    g_tangential_derivative: object = None
    dirichlet_value: object = None
    pin: tuple | None = None


@dataclass
class NonlocalSystem:
    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray
    row_kind: np.ndarray
    pinned_node: int | None = None

    @property
    def n(self) -> int:
        return len(self.rhs)


#: full-ball moments of the shifted basis against the operator kernel
_FULL_BALL = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 0.0])
_E0 = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def _point(problem_fn, x):
    return float(problem_fn(x))


def interior_row(domain: DomainSpec, cloud: PointCloud, kernels: KernelSet,
                 problem: ProblemData, i: int,
                 config: QuadratureConfig = DEFAULT_CONFIG) -> tuple[Stencil, float]:
    """Bulk operator row: -2 * full-ball kernel moments of the basis."""
    tau = -2.0 * kernels.j_scale * _FULL_BALL
    stencil = functional_row(cloud, i, kernels.delta, tau)
    return stencil, _point(problem.f, cloud.points[i])


def neumann_row(domain: DomainSpec, cloud: PointCloud, kernels: KernelSet,
                problem: ProblemData, i: int,
                config: QuadratureConfig = DEFAULT_CONFIG) -> tuple[Stencil, float]:
    """Flux-collar row with exterior moment and contour corrections."""
    delta = kernels.delta
    x = cloud.points[i]
    frame = cloud.frames[i]
    proj = geometry.Projection(
        cloud.xbar[i], cloud.normal[i], cloud.tangent[i],
        float(cloud.sdist[i]), float(cloud.kappa[i]),
    )
    s = proj.dist
    amp = kernels.j_amplitude

    def basis_diffs(pts):
        return amp * (basis_eval(x, frame, pts) - _E0[None, :])

    E = quadrature.exterior_integral(domain, x, delta, basis_diffs, config, proj)
    C = E[1]                      # exterior moment of (y-x).n
    W = E[3] - 2.0 * s * C        # exterior moment of ((y-xbar).n)^2 - s^2
    M = E[4] - E[3] + 2.0 * s * C

    pts_l, hw = quadrature.contour_rule(domain, x, delta, config, kernels)
    ct = hw @ (basis_eval(x, frame, pts_l) - _E0[None, :])
    V = ct[1]                     # contour moment of (x_l - x).n

    tau = -2.0 * (kernels.j_scale * _FULL_BALL - E) - 2.0 * M * ct
    stencil = functional_row(cloud, i, delta, tau)

    fval = _point(problem.f, x)
    gval = _point(problem.g, proj.xbar)
    rhs = fval + (2.0 * C - 2.0 * M * V) * gval - W * fval
    return stencil, rhs


def corner_row(domain: DomainSpec, cloud: PointCloud, kernels: KernelSet,
               problem: ProblemData, i: int,
               config: QuadratureConfig = DEFAULT_CONFIG) -> tuple[Stencil, float]:
    """Corner-disk row from the two-edge Taylor expansion.

    Projects onto both straight flux edges, eliminates the cross second
    derivative, and keeps the tangential second derivative of the edge
    with the larger exterior moment, approximated on a contour truncated
    at the opposite edge with a renormalized kernel.
    """
    theta = domain.corner_angle
    if theta is None or not (0.0 < theta < math.pi):
        raise DegenerateCornerFrame(f"corner angle {theta} outside (0, pi)")
    delta = kernels.delta
    x = cloud.points[i]
    frame = cloud.frames[i]
    c = np.asarray(domain.corner)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    n1 = np.array([0.0, 1.0])
    n2 = np.array([sin_t, -cos_t])
    p1 = np.array([1.0, 0.0])
    p2 = np.array([-cos_t, -sin_t])
    s1 = float((c - x) @ n1)
    s2 = float((c - x) @ n2)
    xbar1 = x + s1 * n1
    xbar2 = x + s2 * n2
    amp = kernels.j_amplitude

    def moments(pts):
        d1 = (cos_t / sin_t) * (pts[:, 0] - x[0]) + (pts[:, 1] - x[1])
        d2 = (pts[:, 0] - x[0]) / sin_t
        return amp * np.stack(
            [0.5 * d1 * d1 - s1 * d1, 0.5 * d2 * d2 - s2 * d2, d1, d2, d1 * d2],
            axis=1,
        )

    I = quadrature.exterior_integral(domain, x, delta, moments, config)
    D1, D2 = 2.0 * I[0], 2.0 * I[1]
    fval = _point(problem.f, x)
    g1 = _point(problem.g, xbar1)
    g2 = _point(problem.g, xbar2)
    dg = (_point(problem.g_tangential_derivative, xbar1)
          - _point(problem.g_tangential_derivative, xbar2))
    g_terms = 2.0 * (I[2] * g1 + I[3] * g2
                     + I[4] * (dg + fval * sin_t * cos_t) / (2.0 * sin_t))

    if D1 >= D2:
        p_dir, big, small = p1, D1, D2
        half = min(delta, s2 / sin_t)
    else:
        p_dir, big, small = p2, D2, D1
        half = min(delta, s1 / sin_t)
    lq, lw = np.polynomial.legendre.leggauss(config.contour_gauss_order)
    lq = half * lq
    lw = half * lw * truncated_h_amplitude(half)
    pts_l = x[None, :] + lq[:, None] * p_dir[None, :]
    ct = lw @ (basis_eval(x, frame, pts_l) - _E0[None, :])

    def ball_diffs(pts):
        return amp * (basis_eval(x, frame, pts) - _E0[None, :])

    E = quadrature.exterior_integral(domain, x, delta, ball_diffs, config)
    tau = -2.0 * (kernels.j_scale * _FULL_BALL - E) + 2.0 * (big - small) * ct
    stencil = functional_row(cloud, i, delta, tau)
    rhs = fval - big * fval - small * (cos_t / sin_t) * dg + g_terms
    return stencil, rhs


def dirichlet_row(cloud: PointCloud, problem: ProblemData, i: int):
    """Identity row carrying the prescribed layer value."""
    return i, _point(problem.dirichlet_value, cloud.points[i])


def assemble(domain: DomainSpec, cloud: PointCloud, kernels: KernelSet,
             problem: ProblemData, config: QuadratureConfig = DEFAULT_CONFIG,
             threads: int | None = None) -> NonlocalSystem:
    """Build the sparse system: one row per node, kind per region tag,
    pin override applied last.  Row failures are collected and raised
    together with their node indices."""
    n = len(cloud)
    if np.any(cloud.tags == RegionTag.CORNER_DISK.value):
        warnings.warn(
            "corner rows present: no discrete coercivity guarantee, "
            "solver residual check is the safety net",
            RuntimeWarning,
            stacklevel=2,
        )

    pinned = None
    if problem.pin is not None:
        target = np.asarray(problem.pin[0], dtype=float)
        d2 = np.sum((cloud.points - target[None, :]) ** 2, axis=1)
        pinned = int(np.argmin(d2))

    builders = {
        RegionTag.INTERIOR.value: interior_row,
        RegionTag.NEUMANN_COLLAR.value: neumann_row,
        RegionTag.CORNER_DISK.value: corner_row,
    }
    kind_of = {
        RegionTag.INTERIOR.value: RowKind.INTERIOR,
        RegionTag.NEUMANN_COLLAR.value: RowKind.NEUMANN,
        RegionTag.CORNER_DISK.value: RowKind.CORNER,
    }

    rhs = np.zeros(n)
    row_kind = np.zeros(n, dtype=np.int8)
    cols_per_row: list[np.ndarray | None] = [None] * n
    vals_per_row: list[np.ndarray | None] = [None] * n
    failures = []

    def build(i: int):
        tag = int(cloud.tags[i])
        if i == pinned:
            return np.array([i]), np.array([1.0]), float(problem.pin[1]), RowKind.PINNED
        if tag == RegionTag.DIRICHLET_LAYER.value:
            _, val = dirichlet_row(cloud, problem, i)
            return np.array([i]), np.array([1.0]), val, RowKind.DIRICHLET
        stencil, r = builders[tag](domain, cloud, kernels, problem, i, config)
        return stencil.neighbors, stencil.row_weights, r, kind_of[tag]

    def run(i: int):
        try:
            cols_per_row[i], vals_per_row[i], rhs[i], kind = build(i)
            row_kind[i] = kind.value
        except Exception as exc:  # aggregated below
            failures.append((i, exc))

    if threads is None:
        threads = int(os.environ.get("NLN_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n)))
    else:
        for i in range(n):
            run(i)
    if failures:
        raise AssemblyError(sorted(failures, key=lambda t: t[0]))

    counts = np.array([len(c) for c in cols_per_row])
    indptr = np.concatenate([[0], np.cumsum(counts)])
    indices = np.concatenate(cols_per_row)
    data = np.concatenate(vals_per_row)
    matrix = scipy.sparse.csr_matrix((data, indices, indptr), shape=(n, n))
    return NonlocalSystem(matrix, rhs, row_kind, pinned)
