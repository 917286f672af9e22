"""Sparse storage and iterative solvers.

Matrices are scipy CSR (row offsets / column indices / values); builders
here guarantee sorted indices and no explicit zeros.  The Krylov solvers
are written out so that iterates are bitwise reproducible: all
reductions go through numpy's fixed-order pairwise sums, never a
threaded BLAS path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class SolverError(RuntimeError):
    pass


def build_csr(shape, rows, cols, vals) -> sp.csr_matrix:
    """COO triplets -> canonical CSR (duplicates summed, zeros dropped)."""
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def finalize_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.eliminate_zeros()
    A.sort_indices()
    return A


def spmv(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    if A.shape[1] != x.shape[0]:
        raise SolverError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def _dot(x: np.ndarray, y: np.ndarray) -> float:
    # np.sum is single-threaded pairwise summation -> deterministic
    return float(np.sum(x * y))


def _norm(x: np.ndarray) -> float:
    return np.sqrt(_dot(x, x))


def jacobi(A: sp.csr_matrix) -> np.ndarray:
    d = A.diagonal().copy()
    d[d == 0.0] = 1.0
    return 1.0 / d


def _prec_apply(A, precond):
    """Preconditioner -> callable z = M^{-1} r.

    Accepts 'none', 'jacobi', or any callable; callables must be linear
    and deterministic.
    """
    if precond == "none" or precond is None:
        return lambda r: r
    if precond == "jacobi":
        d = jacobi(A)
        return lambda r: d * r
    if callable(precond):
        return precond
    raise SolverError(f"unknown preconditioner {precond!r}")


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = False
    breakdown: str | None = None

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else np.inf


def pcg_solve(A, b, precond="jacobi", tol=1e-10, maxit=1000,
              x0=None) -> SolveResult:
    """Preconditioned CG for SPD systems; relative-residual stopping.

    A nonpositive curvature direction is reported as a breakdown (the
    caller violated the SPD contract) rather than silently continuing.
    """
    n = b.shape[0]
    apply_m = _prec_apply(A, precond)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = _norm(b)
    ref = bnorm if bnorm > 0 else 1.0
    res = [_norm(r) / ref]
    if res[0] <= tol:
        return SolveResult(x, 0, res, converged=True)
    z = apply_m(r)
    p = z.copy()
    rz = _dot(r, z)
    for k in range(1, maxit + 1):
        Ap = A @ p
        curv = _dot(p, Ap)
        if curv <= 0.0:
            return SolveResult(x, k, res, converged=False,
                               breakdown="nonpositive curvature (A not SPD?)")
        alpha = rz / curv
        x = x + alpha * p
        r = r - alpha * Ap
        res.append(_norm(r) / ref)
        if res[-1] <= tol:
            # guard against recurrence drift before reporting success
            rtrue = _norm(b - A @ x) / ref
            res[-1] = rtrue
            if rtrue <= 10.0 * tol:
                return SolveResult(x, k, res, converged=True)
            r = b - A @ x
        z = apply_m(r)
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return SolveResult(x, maxit, res, converged=False)


def bicgstab_solve(A, b, precond="jacobi", tol=1e-10, maxit=2000,
                   x0=None) -> SolveResult:
    """Right-preconditioned BiCGStab for nonsingular systems.

    Residual history is not monotone for this method; only the final
    (true, recomputed) relative residual is contractual.  The recurrence
    restarts whenever it claims convergence the true residual does not
    confirm, or when the stabilization parameters break down.
    """
    n = b.shape[0]
    apply_m = _prec_apply(A, precond)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = _norm(b)
    ref = bnorm if bnorm > 0 else 1.0
    r = b - A @ x
    res = [_norm(r) / ref]
    if res[0] <= tol:
        return SolveResult(x, 0, res, converged=True)

    k = 0
    breakdown = None
    restarts = 0
    while k < maxit:
        rhat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        first = True
        restart = False
        while k < maxit:
            k += 1
            rho_new = _dot(rhat, r)
            if rho_new == 0.0:
                breakdown, restart = "rho breakdown", True
                break
            if first:
                p = r.copy()
                first = False
            else:
                beta = (rho_new / rho) * (alpha / omega)
                p = r + beta * (p - omega * v)
            rho = rho_new
            ph = apply_m(p)
            v = A @ ph
            denom = _dot(rhat, v)
            if denom == 0.0:
                breakdown, restart = "alpha breakdown", True
                break
            alpha = rho / denom
            s = r - alpha * v
            if _norm(s) / ref <= tol:
                x = x + alpha * ph
                rtrue = _norm(b - A @ x) / ref
                res.append(rtrue)
                if rtrue <= 10.0 * tol:
                    return SolveResult(x, k, res, converged=True)
                r = b - A @ x
                restart = True
                break
            sh = apply_m(s)
            t = A @ sh
            tt = _dot(t, t)
            if tt == 0.0:
                breakdown, restart = "omega breakdown", True
                break
            omega = _dot(t, s) / tt
            x = x + alpha * ph + omega * sh
            r = s - omega * t
            res.append(_norm(r) / ref)
            if res[-1] <= tol:
                rtrue = _norm(b - A @ x) / ref
                res[-1] = rtrue
                if rtrue <= 10.0 * tol:
                    return SolveResult(x, k, res, converged=True)
                r = b - A @ x
                restart = True
                break
            if omega == 0.0:
                breakdown, restart = "omega breakdown", True
                break
        if not restart:
            break
        restarts += 1
        if restarts > 8:
            break
        r = b - A @ x
        breakdown = None
    return SolveResult(x, k, res, converged=False, breakdown=breakdown)
