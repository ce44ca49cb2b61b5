"""Dense two-phase tableau simplex with Bland's rule.

Solves ``max c @ x  s.t.  A_ub @ x <= b_ub,  A_eq @ x = b_eq,  x >= 0``.
The problems solved here are tiny (tens of variables), so a dense tableau is
the right tool; the kernels are compiled with numba because the learners call
them once per environment step.
"""
from __future__ import annotations

import numpy as np
from numba import njit

PIVOT_EPS = 1e-12
RETRY_EPS = 1e-9     # fallback pivot tolerance for numerically degenerate tableaus
FEAS_TOL = 1e-9
MAX_ITER = 10_000

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3

_STATUS_TEXT = {
    OPTIMAL: "optimal",
    INFEASIBLE: "infeasible",
    UNBOUNDED: "unbounded",
    ITERATION_LIMIT: "iteration limit reached",
}


class LPError(RuntimeError):
    """Raised when an LP that must be solvable is reported otherwise."""


@njit(cache=True)
def _pivot(T, basis, row, col):
    T[row, :] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row:
            f = T[i, col]
            if f != 0.0:
                T[i, :] -= f * T[row, :]
    basis[row] = col


@njit(cache=True)
def _iterate(T, basis, n_allowed, eps, max_iter):
    """Run Bland's-rule pivots on tableau ``T``; the last row is the objective."""
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    for _ in range(max_iter):
        col = -1
        for j in range(n_allowed):
            if T[m, j] < -eps:
                col = j
                break
        if col < 0:
            return OPTIMAL
        row = -1
        best = np.inf
        for i in range(m):
            if T[i, col] > eps:
                ratio = T[i, rhs] / T[i, col]
                if row < 0 or ratio < best - eps:
                    best = ratio
                    row = i
                elif ratio <= best + eps and basis[i] < basis[row]:
                    # Bland: among tied rows leave on the lowest basic index
                    row = i
        if row < 0:
            return UNBOUNDED
        _pivot(T, basis, row, col)
    return ITERATION_LIMIT


@njit(cache=True)
def simplex_kernel(c, A_ub, b_ub, A_eq, b_eq, eps, feas_tol, max_iter):
    """Return ``(status, x, objective)``; see module docstring for the form."""
    n = c.shape[0]
    m1 = b_ub.shape[0]
    m2 = b_eq.shape[0]
    m = m1 + m2
    # artificial variables are needed for equality rows and negative-rhs rows
    need_art = np.zeros(m, dtype=np.bool_)
    for i in range(m1):
        need_art[i] = b_ub[i] < 0.0
    for i in range(m2):
        need_art[m1 + i] = True
    n_art = 0
    for i in range(m):
        if need_art[i]:
            n_art += 1
    art0 = n + m1
    ncol = art0 + n_art
    T = np.zeros((m + 1, ncol + 1))
    basis = np.empty(m, dtype=np.int64)
    k = 0
    for i in range(m):
        if i < m1:
            sign = -1.0 if b_ub[i] < 0.0 else 1.0
            for j in range(n):
                T[i, j] = sign * A_ub[i, j]
            T[i, n + i] = sign
            T[i, ncol] = sign * b_ub[i]
        else:
            r = i - m1
            sign = -1.0 if b_eq[r] < 0.0 else 1.0
            for j in range(n):
                T[i, j] = sign * A_eq[r, j]
            T[i, ncol] = sign * b_eq[r]
        if need_art[i]:
            T[i, art0 + k] = 1.0
            basis[i] = art0 + k
            k += 1
        else:
            basis[i] = n + i

    x = np.zeros(n)
    if n_art > 0:
        # phase 1: maximise -(sum of artificials)
        for j in range(art0, ncol):
            T[m, j] = 1.0
        for i in range(m):
            if need_art[i]:
                T[m, :] -= T[i, :]
        status = _iterate(T, basis, ncol, eps, max_iter)
        if status == ITERATION_LIMIT:
            return ITERATION_LIMIT, x, np.nan
        if T[m, ncol] < -feas_tol:
            return INFEASIBLE, x, np.nan
        # drive zero-level artificials out of the basis
        for i in range(m):
            if basis[i] >= art0:
                for j in range(art0):
                    if abs(T[i, j]) > eps:
                        _pivot(T, basis, i, j)
                        break
    # phase 2
    T[m, :] = 0.0
    for j in range(n):
        T[m, j] = -c[j]
    for i in range(m):
        if basis[i] < n:
            cb = c[basis[i]]
            if cb != 0.0:
                T[m, :] += cb * T[i, :]
    status = _iterate(T, basis, art0, eps, max_iter)
    if status != OPTIMAL:
        return status, x, np.nan
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, ncol]
    return OPTIMAL, x, T[m, ncol]


@njit(cache=True)
def robust_simplex(c, A_ub, b_ub, A_eq, b_eq):
    """Solve at the fine pivot tolerance; retry once with a coarser one on failure."""
    status, x, obj = simplex_kernel(c, A_ub, b_ub, A_eq, b_eq, PIVOT_EPS, FEAS_TOL, MAX_ITER)
    if status != OPTIMAL:
        status, x, obj = simplex_kernel(c, A_ub, b_ub, A_eq, b_eq, RETRY_EPS, FEAS_TOL, MAX_ITER)
    return status, x, obj


def linprog_max(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
                eps: float = PIVOT_EPS, feas_tol: float = FEAS_TOL,
                max_iter: int = MAX_ITER) -> tuple[int, np.ndarray, float]:
    """Python front end of :func:`simplex_kernel`; returns (status, x, objective)."""
    c = np.ascontiguousarray(c, dtype=float)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else np.ascontiguousarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.ascontiguousarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.ascontiguousarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.ascontiguousarray(b_eq, dtype=float).ravel()
    status, x, obj = simplex_kernel(c, A_ub, b_ub, A_eq, b_eq, eps, feas_tol, max_iter)
    return int(status), x, float(obj)


def status_text(status: int) -> str:
    return _STATUS_TEXT[status]
