"""Sparse solves for the assembled nonsymmetric collocation system."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse
import scipy.sparse.linalg as spla

from .assembly import NonlocalSystem

#: largest system handed to the direct factorization by default
DIRECT_LIMIT = 20000


class Method(Enum):
    SPARSE_DIRECT = "sparse_direct"
    ITERATIVE_KRYLOV = "iterative_krylov"


class SolverError(Exception):
    pass


class SingularMatrix(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations, residual {residual:.3e}"
        )


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    relative_residual: float
    iterations: int
    method: Method


def _residual(A, u, b) -> float:
    scale = float(np.linalg.norm(b))
    return float(np.linalg.norm(A @ u - b)) / max(scale, 1.0)


def solve(system: NonlocalSystem, tol: float = 1e-11,
          method: Method | None = None) -> SolveReport:
    """Solve the system and verify the residual (always, post-solve).

    Defaults to a direct factorization up to DIRECT_LIMIT unknowns and
    ILU-preconditioned GMRES beyond.
    """
    A = system.matrix.tocsc()
    b = system.rhs
    n = system.n
    if A.shape != (n, n):
        raise SolverError("system must be square with one row per node")
    if method is None:
        method = Method.SPARSE_DIRECT if n <= DIRECT_LIMIT else Method.ITERATIVE_KRYLOV

    if method is Method.SPARSE_DIRECT:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                u = spla.spsolve(A, b)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise SingularMatrix(str(exc)) from exc
        if not np.all(np.isfinite(u)):
            raise SingularMatrix("factorization produced non-finite values")
        res = _residual(A, u, b)
        if res > tol:
            raise NoConvergence(0, res)
        return SolveReport(u, res, 0, method)

    try:
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=30)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    precond = spla.LinearOperator(A.shape, ilu.solve)
    iters = [0]

    def count(_):
        iters[0] += 1

    u, info = spla.gmres(A, b, M=precond, rtol=0.02 * tol, atol=0.0,
                         restart=200, maxiter=400, callback=count,
                         callback_type="pr_norm")
    if not np.all(np.isfinite(u)):
        raise SingularMatrix("iteration produced non-finite values")
    res = _residual(A, u, b)
    if info != 0 or res > tol:
        raise NoConvergence(iters[0], res)
    return SolveReport(u, res, iters[0], method)
