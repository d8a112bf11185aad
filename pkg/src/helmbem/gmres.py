"""Unrestarted GMRES for complex operators given as callables.

Modified Gram-Schmidt Arnoldi with Givens rotations on the Hessenberg
column, so the residual norm is available every iteration without forming
the iterate.  The convergence test uses the relative residual of the
system actually passed in; with a preconditioned operator and right-hand
side this is the preconditioned residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

__all__ = ["SolveReport", "gmres"]

BREAKDOWN_TOL = 1e-14


@dataclass
class SolveReport:
    """Outcome of one GMRES run."""

    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    breakdown: bool = False
    solve_seconds: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else np.inf


def _new_rotation(a: complex, b: float):
    """Real-cosine Givens rotation [c, s; -conj(s), c] zeroing ``b``."""
    rho = np.hypot(abs(a), b)
    if rho == 0.0:
        return 1.0, 0.0 + 0.0j
    if a == 0.0:
        return 0.0, 1.0 + 0.0j
    c = abs(a) / rho
    s = (a / abs(a)) * (b / rho)
    return c, s


def gmres(apply_op, b, tol: float = 1e-5, maxiter: int = 1000):
    """Solve apply_op(x) = b.

    Parameters
    ----------
    apply_op : callable(ndarray) -> ndarray
        Action of the (preconditioned) system matrix.
    b : ndarray
        Right-hand side.
    tol : float
        Relative residual target.
    maxiter : int
        Maximum Krylov dimension; no restarts.

    Returns
    -------
    (x, report) : solution vector and :class:`SolveReport`.  On breakdown
    of the Arnoldi recurrence the best available iterate is returned with
    ``report.breakdown`` set.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    n = len(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n, dtype=complex), SolveReport(
            converged=True, iterations=0, residuals=[0.0],
            solve_seconds=time.perf_counter() - t0,
        )
    maxiter = min(maxiter, n)

    basis = [b / bnorm]
    h_cols = []           # rotated upper-triangular Hessenberg columns
    cs, sn = [], []
    g = np.zeros(maxiter + 1, dtype=complex)
    g[0] = bnorm
    residuals = []
    converged = False
    breakdown = False
    steps = 0

    for k in range(maxiter):
        w = apply_op(basis[k])
        h = np.zeros(k + 2, dtype=complex)
        for i in range(k + 1):
            h[i] = np.vdot(basis[i], w)
            w = w - h[i] * basis[i]
        wnorm = float(np.linalg.norm(w))
        h[k + 1] = wnorm

        for i in range(k):
            hi = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -np.conj(sn[i]) * h[i] + cs[i] * h[i + 1]
            h[i] = hi

        # rotations for i < k touch rows 0..k only, so h[k+1] is still the
        # real norm of w
        c, s = _new_rotation(h[k], wnorm)
        cs.append(c)
        sn.append(s)
        h[k] = c * h[k] + s * h[k + 1]
        h[k + 1] = 0.0
        g[k + 1] = -np.conj(s) * g[k]
        g[k] = c * g[k]
        h_cols.append(h[: k + 1].copy())

        steps = k + 1
        res = abs(g[k + 1]) / bnorm
        residuals.append(float(res))
        if res < tol:
            converged = True
            break
        if wnorm < BREAKDOWN_TOL * bnorm:
            breakdown = True
            break
        basis.append(w / wnorm)

    m = steps
    if m == 0:
        x = np.zeros(n, dtype=complex)
    else:
        r_mat = np.zeros((m, m), dtype=complex)
        for j, col in enumerate(h_cols):
            r_mat[: j + 1, j] = col
        # drop trailing zero diagonal entries (total breakdown guard)
        keep = m
        while keep > 0 and r_mat[keep - 1, keep - 1] == 0.0:
            keep -= 1
        y = np.zeros(m, dtype=complex)
        if keep:
            y[:keep] = solve_triangular(r_mat[:keep, :keep], g[:keep])
        x = np.zeros(n, dtype=complex)
        for i in range(min(m, len(basis))):
            x += y[i] * basis[i]

    report = SolveReport(
        converged=converged,
        iterations=steps,
        residuals=residuals,
        breakdown=breakdown,
        solve_seconds=time.perf_counter() - t0,
    )
    return x, report
