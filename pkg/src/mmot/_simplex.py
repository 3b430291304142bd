"""Dense two-phase revised simplex with Bland's rule.

Solves ``min c^T x  s.t.  A x = b, x >= 0`` for ``b >= 0`` and returns a
basic optimal solution. Bland's smallest-index rule makes the pivot path
deterministic and rules out cycling on degenerate problems. The basis is
refactorized from scratch every iteration; that is cheap at the sizes this
package targets (a few dozen rows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SimplexError(RuntimeError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    basis: np.ndarray
    y: np.ndarray
    objective: float
    iterations: int


def _iterate(A, b, cost, basis, allowed, tol, max_iter):
    """Run Bland pivots from a feasible ``basis``; returns (basis, iterations)."""
    n_cols = A.shape[1]
    scale = max(1.0, float(np.abs(cost[allowed]).max(initial=0.0)))
    dtol = tol * scale
    candidates = np.flatnonzero(allowed)
    for it in range(max_iter):
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        xB[np.abs(xB) < 1e-15] = 0.0
        y = np.linalg.solve(B.T, cost[basis])
        d = cost[candidates] - A[:, candidates].T @ y
        in_basis = np.zeros(n_cols, dtype=bool)
        in_basis[basis] = True
        eligible = candidates[(d < -dtol) & ~in_basis[candidates]]
        if eligible.size == 0:
            return basis, it
        j = int(eligible[0])
        u = np.linalg.solve(B, A[:, j])
        pos = u > 1e-12
        if not pos.any():
            raise SimplexError("problem is unbounded")
        ratios = np.full(u.shape, np.inf)
        ratios[pos] = np.maximum(xB[pos], 0.0) / u[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12 * (1.0 + theta))
        leave = ties[np.argmin(basis[ties])]
        basis = basis.copy()
        basis[leave] = j
    raise SimplexError(f"no convergence within {max_iter} pivots")


def simplex(A, b, c, tol: float = 1e-11, max_iter: int = 100_000) -> SimplexResult:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    rows, cols = A.shape
    if np.any(b < 0):
        raise SimplexError("right-hand side must be nonnegative")

    # phase I: artificial identity basis
    A1 = np.hstack([A, np.eye(rows)])
    c1 = np.concatenate([np.zeros(cols), np.ones(rows)])
    basis = np.arange(cols, cols + rows)
    allowed = np.ones(cols + rows, dtype=bool)
    basis, it1 = _iterate(A1, b, c1, basis, allowed, tol, max_iter)
    xB = np.linalg.solve(A1[:, basis], b)
    infeas = float(c1[basis] @ xB)
    if infeas > 1e-9 * max(1.0, float(b.sum())):
        raise SimplexError(f"problem is infeasible (phase I residual {infeas:.3e})")

    # pivot zero-level artificials out of the basis
    for pos in range(rows):
        if basis[pos] < cols:
            continue
        B = A1[:, basis]
        row = np.linalg.solve(B, np.eye(rows)[:, pos]) @ A  # row `pos` of B^-1 A
        in_basis = np.zeros(cols, dtype=bool)
        in_basis[basis[basis < cols]] = True
        cand = np.flatnonzero((np.abs(row) > 1e-9) & ~in_basis)
        if cand.size == 0:
            raise SimplexError("constraint rows are linearly dependent")
        basis = basis.copy()
        basis[pos] = cand[0]

    # phase II on the original columns
    allowed = np.concatenate([np.ones(cols, dtype=bool), np.zeros(rows, dtype=bool)])
    c2 = np.concatenate([c, np.zeros(rows)])
    basis, it2 = _iterate(A1, b, c2, basis, allowed, tol, max_iter)
    B = A[:, basis]
    xB = np.linalg.solve(B, b)
    xB[xB < 0] = 0.0
    x = np.zeros(cols)
    x[basis] = xB
    y = np.linalg.solve(B.T, c[basis])
    return SimplexResult(x, basis, y, float(c @ x), it1 + it2)
