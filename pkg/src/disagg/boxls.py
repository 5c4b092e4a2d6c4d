"""Exact box-constrained least squares for a handful of variables.

Solves  min_x ||r - A x||^2  subject to  lo <= x <= hi  by enumerating
active-set patterns (each coordinate free, at its lower bound, or at its
upper bound).  A tiny ridge term makes the objective strictly convex, so
the unique minimizer is recovered by taking the best feasible pattern
solution; in the degenerate (rank-deficient) case the ridge also selects
the minimum-norm minimizer.  Exponential in the variable count by design:
segment estimates involve at most a few devices.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ValidationError

__all__ = ["box_lstsq", "kkt_violation"]

_RIDGE_REL = 1e-12


def _candidate(G, c, lo, hi, pattern):
    """Solve the pattern-restricted problem; return x or None if infeasible."""
    n = len(c)
    x = np.empty(n)
    free = []
    for i, p in enumerate(pattern):
        if p == 0:
            free.append(i)
        else:
            x[i] = lo[i] if p < 0 else hi[i]
    if free:
        f = np.asarray(free)
        b = np.asarray([i for i in range(n) if pattern[i] != 0], dtype=int)
        rhs = c[f]
        if b.size:
            rhs = rhs - G[np.ix_(f, b)] @ x[b]
        x[f] = np.linalg.solve(G[np.ix_(f, f)], rhs)
        if np.any(x[f] < lo[f]) or np.any(x[f] > hi[f]):
            return None
    return x


def box_lstsq(A: np.ndarray, r: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Minimize ||r - A x||^2 over the box [lo, hi].

    Parameters
    ----------
    A : (m, n) design matrix
    r : (m,) target vector
    lo, hi : (n,) bounds, lo <= hi elementwise

    Returns
    -------
    x : (n,) the box-constrained minimizer.  When the minimizer is not
        unique, the one of (essentially) smallest Euclidean norm.
    """
    A = np.asarray(A, dtype=float)
    r = np.asarray(r, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = A.shape[1] if A.ndim == 2 else 0
    if lo.shape != (n,) or hi.shape != (n,):
        raise ValidationError("bounds must match the number of columns")
    if np.any(lo > hi):
        raise ValidationError("infeasible bounds: lo > hi")
    if n == 0:
        return np.zeros(0)

    G = A.T @ A
    c = A.T @ r
    scale = float(np.trace(G)) / n
    if scale <= 0.0:
        # zero design matrix: every feasible x ties; 0 is in the box
        return np.zeros(n)
    Greg = G + (_RIDGE_REL * scale) * np.eye(n)

    x = np.linalg.solve(Greg, c)
    if np.all(x >= lo) and np.all(x <= hi):
        return x

    best = None
    best_key = None
    for pattern in itertools.product((0, -1, 1), repeat=n):
        x = _candidate(Greg, c, lo, hi, pattern)
        if x is None:
            continue
        obj = float(x @ Greg @ x - 2.0 * (c @ x))
        key = (obj, float(x @ x), tuple(x))
        if best_key is None or key < best_key:
            best, best_key = x, key
    return best


def kkt_violation(A, r, lo, hi, x, bound_tol_rel: float = 1e-9) -> float:
    """Largest per-coordinate violation of first-order optimality at x.

    Gradient of ||r - A x||^2 is g = 2 A^T (A x - r).  Free coordinates
    need |g_i| ~ 0; coordinates on a bound need g pointing outward.
    """
    A = np.asarray(A, dtype=float)
    g = 2.0 * (A.T @ (A @ x - np.asarray(r, dtype=float)))
    worst = 0.0
    for i in range(len(x)):
        span = max(hi[i] - lo[i], 1.0)
        at_lo = abs(x[i] - lo[i]) <= bound_tol_rel * span
        at_hi = abs(x[i] - hi[i]) <= bound_tol_rel * span
        if at_lo and at_hi:
            v = 0.0
        elif at_lo:
            v = max(0.0, -g[i])
        elif at_hi:
            v = max(0.0, g[i])
        else:
            v = abs(g[i])
        worst = max(worst, v)
    return worst
