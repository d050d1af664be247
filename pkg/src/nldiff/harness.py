"""Manufactured solutions, error norms, convergence sweeps, and the
verification suite.

The shipped cases mirror the published study: a square with one flux
edge, a disk and an ellipse with the flux condition on the whole
boundary (pinned at one point), a square with two flux edges meeting at
a corner, and linear patch problems on each geometry.  The discrete L2
norm weights every node by h^2, the natural uniform-grid cell measure;
this convention is recorded in the report metadata.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import solver as solver_mod
from .assembly import ProblemData, RowKind, assemble
from .geometry import DomainSpec, Projection, RegionTag
from .gmls import PointCloud, basis_eval, build_grid_cloud, functional_row
from .kernels import KernelSet
from .quadrature import (
    DEFAULT_CONFIG,
    QuadratureConfig,
    flat_m_delta_closed_form,
    m_delta,
)

_PI = math.pi


def _u_trig(pt):
    pt = np.asarray(pt, dtype=float)
    return np.sin(_PI * pt[..., 0]) * np.cos(_PI * pt[..., 1])


def _f_trig(pt):
    pt = np.asarray(pt, dtype=float)
    return 2.0 * _PI**2 * np.sin(_PI * pt[..., 0]) * np.cos(_PI * pt[..., 1])


def _grad_u_trig(pt):
    pt = np.asarray(pt, dtype=float)
    gx = _PI * np.cos(_PI * pt[..., 0]) * np.cos(_PI * pt[..., 1])
    gy = -_PI * np.sin(_PI * pt[..., 0]) * np.sin(_PI * pt[..., 1])
    return np.stack([gx, gy], axis=-1)


def _ellipse_normal(pt, a=2.0, b=1.0):
    pt = np.asarray(pt, dtype=float)
    raw = np.stack([pt[..., 0] / a**2, pt[..., 1] / b**2], axis=-1)
    return raw / np.linalg.norm(raw, axis=-1, keepdims=True)


def _u_lin(pt):
    pt = np.asarray(pt, dtype=float)
    return pt[..., 0] + pt[..., 1]


def _u_corner(pt):
    pt = np.asarray(pt, dtype=float)
    return pt[..., 0] ** 2 * pt[..., 1] ** 2


def _f_corner(pt):
    pt = np.asarray(pt, dtype=float)
    return -2.0 * (pt[..., 0] ** 2 + pt[..., 1] ** 2)


def _g_corner(pt):
    # right edge (x=1): 2 y^2; top edge (y=1): 2 x^2
    pt = np.asarray(pt, dtype=float)
    if abs(pt[1] - 1.0) <= abs(pt[0] - 1.0):
        return 2.0 * pt[0] ** 2
    return 2.0 * pt[1] ** 2


def _g_tan_corner(pt):
    # along p1=(1,0) on the top edge, along p2=(0,-1) on the right edge
    pt = np.asarray(pt, dtype=float)
    if abs(pt[1] - 1.0) <= abs(pt[0] - 1.0):
        return 4.0 * pt[0]
    return -4.0 * pt[1]


@dataclass(frozen=True)
class ManufacturedCase:
    """A boundary value problem with known local limit solution."""

    name: str
    domain: DomainSpec
    u0: object
    f: object
    g: object
    g_tangential_derivative: object = None
    pin: tuple | None = None

    @property
    def uses_dirichlet(self) -> bool:
        return bool(self.domain.dirichlet_edges)

    def problem(self) -> ProblemData:
        return ProblemData(
            f=self.f,
            g=self.g,
            g_tangential_derivative=self.g_tangential_derivative,
            dirichlet_value=self.u0 if self.uses_dirichlet else None,
            pin=self.pin,
        )


def _trig_flux(normal_fn):
    def g(pt):
        return float(_grad_u_trig(pt) @ normal_fn(pt))

    return g


def _lin_flux(normal_fn):
    def g(pt):
        n = normal_fn(pt)
        return float(n[0] + n[1])

    return g


def _square_right_normal(pt):
    return np.array([1.0, 0.0])


def _disk_normal(pt):
    pt = np.asarray(pt, dtype=float)
    return pt / np.linalg.norm(pt)


CASES: dict[str, ManufacturedCase] = {}


def _register(case: ManufacturedCase):
    CASES[case.name] = case
    return case


_register(ManufacturedCase(
    "T1_Square", DomainSpec.unit_square(), _u_trig, _f_trig,
    _trig_flux(_square_right_normal),
))
_register(ManufacturedCase(
    "T2_Disk", DomainSpec.unit_disk(), _u_trig, _f_trig,
    _trig_flux(_disk_normal),
    pin=((0.0, -1.0), 0.0),
))
_register(ManufacturedCase(
    "T3_Ellipse", DomainSpec.ellipse(2.0, 1.0), _u_trig, _f_trig,
    _trig_flux(_ellipse_normal),
    pin=((0.0, -1.0), 0.0),
))
_register(ManufacturedCase(
    "CornerSquare", DomainSpec.unit_square_corner(), _u_corner, _f_corner,
    _g_corner, g_tangential_derivative=_g_tan_corner,
))
_register(ManufacturedCase(
    "PatchLinear", DomainSpec.unit_square(), _u_lin,
    lambda pt: 0.0, _lin_flux(_square_right_normal),
))
_register(ManufacturedCase(
    "PatchLinear_Disk", DomainSpec.unit_disk(), _u_lin,
    lambda pt: 0.0, _lin_flux(_disk_normal),
    pin=((0.0, -1.0), -1.0),
))
_register(ManufacturedCase(
    "PatchLinear_Ellipse", DomainSpec.ellipse(2.0, 1.0), _u_lin,
    lambda pt: 0.0, _lin_flux(_ellipse_normal),
    pin=((0.0, -1.0), -1.0),
))


#: published maximum-norm errors, by case, delta/h ratio, and 1/h.
#: Two table entries with inconsistent mantissa/exponent against their
#: own order columns are corrected here (disk 1/128, corner 1/64).
PAPER_LINF = {
    ("T1_Square", 4.0): {8: 1.45e-1, 16: 2.34e-2, 32: 4.25e-3, 64: 1.00e-3, 128: 2.48e-4},
    ("T1_Square", 3.5): {8: 9.04e-2, 16: 1.37e-2, 32: 2.50e-3, 64: 5.65e-4, 128: 1.34e-4},
    ("T2_Disk", 4.0): {8: 3.74e-1, 16: 1.10e-1, 32: 2.68e-2, 64: 6.30e-3, 128: 1.50e-3},
    ("T2_Disk", 3.5): {8: 2.98e-1, 16: 8.21e-2, 32: 1.98e-2, 64: 4.70e-3, 128: 1.10e-3},
    ("T3_Ellipse", 4.0): {8: 2.13e-1, 16: 6.00e-2, 32: 1.43e-2, 64: 3.40e-3, 128: 8.22e-4},
    ("T3_Ellipse", 3.5): {8: 1.73e-1, 16: 4.59e-2, 32: 1.08e-2, 64: 2.60e-3, 128: 6.25e-4},
    ("CornerSquare", 4.0): {8: 7.43e-2, 16: 1.52e-2, 32: 3.30e-3, 64: 7.42e-4, 128: 1.74e-4},
    ("CornerSquare", 3.5): {8: 5.45e-2, 16: 1.13e-2, 32: 2.40e-3, 64: 5.60e-4, 128: 1.31e-4},
}

ORDER_BAND = (1.7, 2.5)
ERROR_FACTOR = 3.0
PATCH_TOL = 1e-10


def error_norms(solution: np.ndarray, u0, cloud: PointCloud) -> tuple[float, float]:
    """Maximum and h-weighted discrete L2 error over the domain nodes
    (Dirichlet-layer nodes excluded)."""
    mask = cloud.tags != RegionTag.DIRICHLET_LAYER.value
    err = np.abs(solution[mask] - np.asarray(u0(cloud.points[mask]), dtype=float))
    linf = float(err.max()) if len(err) else 0.0
    l2 = float(cloud.h * math.sqrt(float(np.sum(err * err))))
    return linf, l2


@dataclass
class ConvergenceReport:
    case: str
    ratio: float
    rows: list = field(default_factory=list)  # (h, delta, linf, o_inf, l2, o_2)
    metadata: dict = field(default_factory=dict)

    CSV_HEADER = "h,delta,linf,order_linf,l2,order_l2"

    def to_csv_text(self) -> str:
        lines = [self.CSV_HEADER]
        for h, delta, linf, o_inf, l2, o_2 in self.rows:
            oi = "" if o_inf is None else f"{o_inf:.3f}"
            o2 = "" if o_2 is None else f"{o_2:.3f}"
            lines.append(f"{h!r},{delta!r},{linf:.6e},{oi},{l2:.6e},{o2}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        ok, notes = check_acceptance_band(self)
        return {
            "case": self.case,
            "ratio": self.ratio,
            "rows": [
                {"h": h, "delta": d, "linf": li, "order_linf": oi,
                 "l2": l2, "order_l2": o2}
                for h, d, li, oi, l2, o2 in self.rows
            ],
            "pass": ok,
            "notes": notes,
            "metadata": self.metadata,
        }


def run_convergence(case_name: str, ratio: float, h_list,
                    config: QuadratureConfig = DEFAULT_CONFIG,
                    solver_tol: float = 1e-11,
                    method: solver_mod.Method | None = None,
                    threads: int | None = None) -> ConvergenceReport:
    """Assemble, solve, and evaluate norms for a decreasing dyadic h list."""
    case = CASES[case_name]
    h_list = list(h_list)
    for prev, cur in zip(h_list, h_list[1:]):
        if not math.isclose(prev, 2.0 * cur, rel_tol=1e-12):
            raise ValueError("h_list must decrease by factors of two")
    report = ConvergenceReport(case_name, ratio)
    report.metadata = {
        "ratio": ratio,
        "l2_weight": "h^2 per node",
        "timings_s": [],
        "n_nodes": [],
    }
    prev = None
    for h in h_list:
        t0 = time.perf_counter()
        delta = ratio * h
        cloud = build_grid_cloud(case.domain, h, delta)
        kernels = KernelSet(delta)
        system = assemble(case.domain, cloud, kernels, case.problem(),
                          config, threads=threads)
        rep = solver_mod.solve(system, tol=solver_tol, method=method)
        linf, l2 = error_norms(rep.solution, case.u0, cloud)
        if prev is None:
            o_inf = o_2 = None
        else:
            o_inf = math.log2(prev[0] / linf) if linf > 0 else math.inf
            o_2 = math.log2(prev[1] / l2) if l2 > 0 else math.inf
        report.rows.append((h, delta, linf, o_inf, l2, o_2))
        report.metadata["timings_s"].append(round(time.perf_counter() - t0, 3))
        report.metadata["n_nodes"].append(len(cloud))
        prev = (linf, l2)
    return report


def check_acceptance_band(report: ConvergenceReport) -> tuple[bool, list[str]]:
    """Order band over the two finest transitions plus the published-error
    factor band; patch cases check machine precision or second order."""
    notes = []
    ok = True
    if report.case.startswith("PatchLinear"):
        if report.case == "PatchLinear_Ellipse":
            orders = [r[3] for r in report.rows[1:]]
            bad = [o for o in orders[-2:] if o is not None and o < 2.0]
            if len(report.rows) >= 3 and bad:
                ok = False
                notes.append(f"ellipse patch orders {orders} below 2")
        else:
            worst = max(r[2] for r in report.rows)
            if worst > PATCH_TOL:
                ok = False
                notes.append(f"patch error {worst:.3e} above {PATCH_TOL:.0e}")
        return ok, notes
    orders = [r[3] for r in report.rows if r[3] is not None]
    for o in orders[-2:]:
        if not (ORDER_BAND[0] <= o <= ORDER_BAND[1]):
            ok = False
            notes.append(f"order {o:.3f} outside {ORDER_BAND}")
    anchors = PAPER_LINF.get((report.case, report.ratio), {})
    for h, _, linf, _, _, _ in report.rows:
        key = round(1.0 / h)
        if key in anchors:
            ref = anchors[key]
            if not (ref / ERROR_FACTOR <= linf <= ref * ERROR_FACTOR):
                ok = False
                notes.append(
                    f"linf {linf:.3e} at h=1/{key} outside factor "
                    f"{ERROR_FACTOR} of {ref:.3e}"
                )
    return ok, notes


# ---------------------------------------------------------------------------
# verification suite


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_kernel_moments() -> CheckResult:
    from .quadrature import _gauss

    delta = 0.37
    k = KernelSet(delta)
    rq, rw = _gauss(64, 0.0, delta)
    j_moment = float(np.sum(rw * k.j_amplitude * rq**3) * 2.0 * math.pi)
    lq, lw = _gauss(64, -delta, delta)
    h_moment = float(np.sum(lw * k.h_amplitude * lq**2))
    ok = abs(j_moment - 2.0) <= 1e-10 and abs(h_moment - 1.0) <= 1e-12
    return CheckResult(
        "kernel_moments", ok,
        f"J second moment {j_moment:.14f}, contour second moment {h_moment:.15f}",
    )


def _check_flat_m_delta() -> CheckResult:
    domain = DomainSpec.unit_square()
    delta = 0.05
    worst = 0.0
    for frac in np.arange(0.1, 0.95, 0.1):
        s = frac * delta
        x = np.array([1.0 - s, 0.5])
        ref = flat_m_delta_closed_form(s, delta)
        val = m_delta(x, delta, domain)
        worst = max(worst, abs(val - ref) / ref)
    return CheckResult("flat_m_closed_form", worst <= 1e-9,
                       f"worst relative deviation {worst:.3e}")


def _check_m_nonnegative(h: float) -> CheckResult:
    worst = np.inf
    for case_name in ("T1_Square", "T2_Disk", "T3_Ellipse", "CornerSquare"):
        case = CASES[case_name]
        delta = 4.0 * h
        cloud = build_grid_cloud(case.domain, h, delta)
        collar = np.where(cloud.tags == RegionTag.NEUMANN_COLLAR.value)[0]
        for i in collar:
            proj = Projection(cloud.xbar[i], cloud.normal[i], cloud.tangent[i],
                              float(cloud.sdist[i]), float(cloud.kappa[i]))
            worst = min(worst, m_delta(cloud.points[i], delta, case.domain,
                                       proj=proj))
    return CheckResult("m_delta_nonnegative", worst >= -1e-12,
                       f"smallest collar coefficient {worst:.3e}")


def _check_gmls_reproduction(h: float, n_sample: int = 100) -> CheckResult:
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for case_name in ("T1_Square", "T2_Disk", "T3_Ellipse"):
        case = CASES[case_name]
        delta = 4.0 * h
        cloud = build_grid_cloud(case.domain, h, delta)
        idx = rng.choice(len(cloud), size=min(n_sample, len(cloud)), replace=False)
        for i in idx:
            tau = rng.standard_normal(6)
            st = functional_row(cloud, int(i), delta, tau)
            P = basis_eval(cloud.points[i], cloud.frames[i],
                           cloud.points[st.neighbors])
            got = st.row_weights @ P
            worst = max(worst, float(np.max(np.abs(got - tau)))
                        / max(1.0, float(np.max(np.abs(tau)))))
    return CheckResult("gmls_quadratic_reproduction", worst <= 1e-9,
                       f"worst relative functional error {worst:.3e}")


def _check_constant_annihilation(h: float, kernels_factory=KernelSet) -> CheckResult:
    worst = 0.0
    for case_name in ("T1_Square", "T2_Disk"):
        case = CASES[case_name]
        delta = 4.0 * h
        cloud = build_grid_cloud(case.domain, h, delta)
        system = assemble(case.domain, cloud, kernels_factory(delta), case.problem())
        ones = np.ones(system.n)
        resid = np.abs(system.matrix @ ones)
        scale = np.asarray(np.abs(system.matrix).sum(axis=1)).ravel()
        live = np.isin(system.row_kind,
                       [RowKind.INTERIOR.value, RowKind.NEUMANN.value,
                        RowKind.CORNER.value])
        rel = resid[live] / np.maximum(scale[live], 1e-300)
        worst = max(worst, float(rel.max()))
    return CheckResult("constant_annihilation", worst <= 1e-9,
                       f"worst scaled row sum {worst:.3e}")


def _check_max_principle() -> CheckResult:
    domain = DomainSpec.unit_square()
    worst = -np.inf
    for h in (2.0**-4, 2.0**-5):
        delta = 4.0 * h
        cloud = build_grid_cloud(domain, h, delta)
        problem = ProblemData(
            f=lambda pt: -2.0,
            g=lambda pt: 0.0,
            dirichlet_value=lambda pt: 0.5 * math.cos(2.0 * pt[0] + 3.0 * pt[1]),
        )
        system = assemble(domain, cloud, KernelSet(delta), problem)
        rep = solver_mod.solve(system)
        mask = cloud.tags != RegionTag.DIRICHLET_LAYER.value
        excess = float(rep.solution[mask].max() - rep.solution[~mask].max())
        worst = max(worst, excess)
    return CheckResult("max_principle_surrogate", worst <= 1e-9,
                       f"interior max exceeds layer max by {worst:.3e}")


def _check_patch_tests() -> CheckResult:
    worst = 0.0
    for name in ("PatchLinear", "PatchLinear_Disk"):
        rep = run_convergence(name, 4.0, [2.0**-4])
        worst = max(worst, rep.rows[0][2])
    return CheckResult("linear_patch", worst <= PATCH_TOL,
                       f"worst patch error {worst:.3e}")


def interior_truncation_errors(deltas=(0.1, 0.05, 0.025), ratio: float = 4.0,
                               kernels_factory=KernelSet):
    """Max interior-row residual on the trigonometric solution per delta."""
    case = CASES["T1_Square"]
    errs = []
    for delta in deltas:
        h = delta / ratio
        cloud = build_grid_cloud(case.domain, h, delta)
        system = assemble(case.domain, cloud, kernels_factory(delta),
                          case.problem())
        u_samples = np.asarray(case.u0(cloud.points), dtype=float)
        resid = system.matrix @ u_samples - system.rhs
        live = system.row_kind == RowKind.INTERIOR.value
        errs.append(float(np.max(np.abs(resid[live]))))
    return np.asarray(errs)


def _fit_slope(deltas, errs) -> float:
    logs = np.log(np.asarray(deltas))
    loge = np.log(np.asarray(errs))
    return float(np.polyfit(logs, loge, 1)[0])


def _check_interior_truncation(kernels_factory=KernelSet) -> CheckResult:
    deltas = (0.1, 0.05, 0.025)
    errs = interior_truncation_errors(deltas, kernels_factory=kernels_factory)
    slope = _fit_slope(deltas, errs)
    detail = f"errors {[f'{e:.3e}' for e in errs]}, fitted slope {slope:.3f}"
    return CheckResult("interior_truncation_order", slope >= 1.8, detail)


def run_verification_suite(h: float = 2.0**-4,
                           seeded_fault: bool = False) -> list[CheckResult]:
    """Kernel, collar-coefficient, reconstruction, annihilation, maximum
    principle, patch and truncation checks; failures are reported, not
    raised.  ``seeded_fault`` doubles the operator kernel to prove the
    interior-consistency check can detect a broken moment."""
    factory = KernelSet
    if seeded_fault:
        def factory(delta):
            return KernelSet(delta, j_scale=2.0)

    checks = [
        _check_kernel_moments(),
        _check_flat_m_delta(),
        _check_m_nonnegative(h),
        _check_gmls_reproduction(h),
        _check_constant_annihilation(h, factory),
        _check_max_principle(),
        _check_patch_tests(),
        _check_interior_truncation(factory),
    ]
    return checks


def suite_to_json(checks: list[CheckResult]) -> str:
    return json.dumps(
        [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
        indent=2,
    )
