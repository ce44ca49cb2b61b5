"""One-shot matrix games: zero-sum Nash by LP and the two-matrix CCE."""
from __future__ import annotations

import numpy as np
from numba import njit

from .simplex import OPTIMAL, LPError, robust_simplex, status_text

DIST_TOL = 1e-9


@njit(cache=True)
def _normalise(M):
    lo = M.min()
    span = M.max() - lo
    if span <= 0.0:
        return np.zeros_like(M)
    return (M - lo) / span


@njit(cache=True)
def _column_player_lp(M):
    """max sum(y) s.t. M y <= 1, y >= 0 for a strictly positive matrix M."""
    n_rows, n_cols = M.shape
    c = np.ones(n_cols)
    b_ub = np.ones(n_rows)
    A_eq = np.zeros((0, n_cols))
    b_eq = np.zeros(0)
    return robust_simplex(c, M, b_ub, A_eq, b_eq)


@njit(cache=True)
def _zero_sum_kernel(Q):
    Qn = _normalise(Q)
    # shift to [1, 2] so the reciprocal LP is bounded and feasible at the origin
    st_nu, y, _ = _column_player_lp(Qn + 1.0)
    st_mu, x, _ = _column_player_lp((2.0 - Qn).T + 1.0)
    return st_mu, x, st_nu, y


@njit(cache=True)
def _cce_kernel(Qup, Qlow):
    """Max-min deviation slack, solved as a zero-sum game.

    The row player picks a joint action (a, b); the column player picks one of
    the A + B pure deviations and pays its slack.  A maximin row strategy is a
    CCE whose smallest slack is as large as possible.
    """
    A, B = Qup.shape
    P = _normalise(Qup)
    L = _normalise(Qlow)
    G = np.empty((A * B, A + B))
    for a in range(A):
        for b in range(B):
            for dev in range(A):
                G[a * B + b, dev] = P[a, b] - P[dev, b]
            for dev in range(B):
                G[a * B + b, A + dev] = L[a, dev] - L[a, b]
    Gn = _normalise(G)
    status, x, _ = _column_player_lp((2.0 - Gn).T + 1.0)
    pi = np.maximum(x, 0.0)
    pi /= pi.sum()
    return status, pi.reshape(A, B)


def _checked_matrix(Q) -> np.ndarray:
    Q = np.ascontiguousarray(Q, dtype=float)
    if Q.ndim != 2 or Q.size == 0:
        raise ValueError(f"expected a non-empty matrix, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValueError("matrix has non-finite entries")
    return Q


def solve_zero_sum(Q) -> tuple[np.ndarray, np.ndarray, float]:
    """Maximin strategy ``mu`` (rows), minimax strategy ``nu`` (columns) and value."""
    Q = _checked_matrix(Q)
    st_mu, x, st_nu, y = _zero_sum_kernel(Q)
    if st_mu != OPTIMAL or st_nu != OPTIMAL:
        # the reciprocal game LP is always feasible and bounded
        raise LPError(f"zero-sum LP failed: {status_text(st_mu)}/{status_text(st_nu)}")
    mu = np.maximum(x, 0.0) / np.maximum(x, 0.0).sum()
    nu = np.maximum(y, 0.0) / np.maximum(y, 0.0).sum()
    value = float((mu @ Q).min())
    return mu, nu, value


def compute_cce(Qup, Qlow) -> np.ndarray:
    """Joint distribution ``pi[a, b]`` meeting both CCE deviation families.

    Among feasible points the LP maximises the smallest deviation slack, which
    makes the returned point a deterministic function of the input.  Both
    constraint families are invariant to shifting and positive scaling of
    their own matrix, so each matrix is normalised to [0, 1] first.
    """
    Qup = _checked_matrix(Qup)
    Qlow = _checked_matrix(Qlow)
    if Qup.shape != Qlow.shape:
        raise ValueError(f"shape mismatch: {Qup.shape} vs {Qlow.shape}")
    status, pi = _cce_kernel(Qup, Qlow)
    if status != OPTIMAL:
        raise LPError(f"CCE LP failed: {status_text(status)}")
    return pi


def cce_marginals(pi) -> tuple[np.ndarray, np.ndarray]:
    pi = np.asarray(pi, dtype=float)
    return pi.sum(axis=1), pi.sum(axis=0)


def cce_violation(pi, Qup, Qlow) -> float:
    """Largest violation over all pure deviations of either player (<= 0 means feasible)."""
    pi, Qup, Qlow = (np.asarray(x, dtype=float) for x in (pi, Qup, Qlow))
    mu, nu = cce_marginals(pi)
    up = float((pi * Qup).sum())
    low = float((pi * Qlow).sum())
    max_dev = float((Qup @ nu).max()) - up
    min_dev = low - float((mu @ Qlow).min())
    return max(max_dev, min_dev)


def exploitability(Q, mu, nu) -> float:
    """max_a (Q nu)_a - min_b (mu^T Q)_b for the zero-sum game Q."""
    Q = np.asarray(Q, dtype=float)
    return float((Q @ nu).max() - (np.asarray(mu) @ Q).min())


def is_distribution(p, tol: float = DIST_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)
