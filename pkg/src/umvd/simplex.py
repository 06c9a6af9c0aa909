"""Dense revised simplex for LPs with unit box bounds.

The problems solved here have the shape

    minimize    c @ y
    subject to  A_ub @ y <= b_ub,   0 <= y <= 1,   b_ub >= 0

with many more rows than columns.  Rather than pivoting on the tall primal we
run a primal simplex on its dual, which has one row per primal variable:

    minimize    b_ub @ lam + 1 @ s
    subject to  A_ub.T @ lam + s - t = -c,   lam, s, t >= 0.

A feasible starting basis is read off the signs of ``c`` (``s_e`` when
``c_e <= 0``, ``t_e`` otherwise), so no phase one is needed.  The optimal
primal ``y`` is the simplex multiplier vector of the dual at termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

__all__ = ["SimplexError", "SimplexResult", "solve_box_lp"]


class SimplexError(RuntimeError):
    """Raised when the simplex cannot reach an optimal basis."""

    def __init__(self, message: str, objective: float | None = None, gap: float | None = None):
        super().__init__(message)
        self.objective = objective
        self.gap = gap


@dataclass(frozen=True)
class SimplexResult:
    y: np.ndarray
    objective: float  # c @ y, without any constant offset
    iterations: int
    degenerate_pivots: int


def _refactor(A_csc: sp.csc_matrix, basis: np.ndarray) -> np.ndarray:
    B = A_csc[:, basis].toarray()
    try:
        return np.asfortranarray(np.linalg.inv(B))
    except np.linalg.LinAlgError as exc:
        raise SimplexError("singular basis during refactorization") from exc


def solve_box_lp(
    c: np.ndarray,
    A_ub: sp.spmatrix,
    b_ub: np.ndarray,
    *,
    tol_opt: float = 1e-7,
    tol_pivot: float = 1e-9,
    max_iter: int = 200_000,
    refactor_every: int = 64,
    pricing: str = "dantzig",
    stall_limit: int = 40,
) -> SimplexResult:
    """Solve ``min c@y  s.t.  A_ub@y <= b_ub, 0 <= y <= 1`` through its dual.

    ``pricing="bland"`` enters the lowest-index improving column every step.
    ``pricing="dantzig"`` enters the most negative reduced cost but falls back
    to Bland's rule after ``stall_limit`` consecutive degenerate pivots, until
    the objective moves again, so cycling is impossible either way.  Ratio-test
    ties always leave by the lowest basic column index.  The run is fully
    deterministic for a given input.
    """
    c = np.asarray(c, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    n = c.shape[0]
    m_ub = A_ub.shape[0]
    if A_ub.shape[1] != n or b_ub.shape[0] != m_ub:
        raise ValueError("shape mismatch between c, A_ub and b_ub")
    if np.any(b_ub < 0):
        raise ValueError("b_ub must be non-negative (y = 0 has to be feasible)")
    if pricing not in ("bland", "dantzig"):
        raise ValueError(f"unknown pricing rule {pricing!r}")

    eye = sp.identity(n, format="csc")
    # columns: lam (m_ub) | s (n) | t (n)
    A = sp.hstack([sp.csc_matrix(A_ub).T, eye, -eye], format="csc")
    AT = A.T.tocsr()
    f = np.concatenate([b_ub, np.ones(n), np.zeros(n)])
    rhs = -c
    N = A.shape[1]

    basis = np.where(rhs >= 0, m_ub + np.arange(n), m_ub + n + np.arange(n))
    Binv = np.asfortranarray(_refactor(A, basis))
    xB = Binv @ rhs
    in_basis = np.zeros(N, dtype=bool)
    in_basis[basis] = True

    indptr, indices, data = A.indptr, A.indices, A.data
    it = 0
    degenerate = 0
    stall = 0
    since_refactor = 0
    pi = f[basis] @ Binv
    while True:
        if since_refactor >= refactor_every:
            Binv = _refactor(A, basis)
            xB = Binv @ rhs
            np.maximum(xB, 0.0, out=xB)
            pi = f[basis] @ Binv
            since_refactor = 0
        d = f - AT @ pi
        d[in_basis] = 0.0
        improving = d < -tol_opt
        if not improving.any():
            break
        if it >= max_iter:
            obj = float(f[basis] @ xB)
            raise SimplexError(
                f"iteration limit {max_iter} exceeded",
                objective=-obj,
                gap=float(-d.min()),
            )
        if pricing == "bland" or stall >= stall_limit:
            q = int(np.flatnonzero(improving)[0])
        else:
            q = int(np.argmin(d))
        lo, hi = indptr[q], indptr[q + 1]
        w = Binv[:, indices[lo:hi]] @ data[lo:hi]
        pos = w > tol_pivot
        if not pos.any():
            raise SimplexError("dual unbounded: primal infeasible")
        ratios = np.full(n, np.inf)
        ratios[pos] = xB[pos] / w[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12 * max(1.0, theta))
        r = int(ties[np.argmin(basis[ties])])
        theta = max(float(ratios[r]), 0.0)

        if theta <= 1e-12:
            degenerate += 1
            stall += 1
        else:
            stall = 0
        xB -= theta * w
        xB[r] = theta
        np.maximum(xB, 0.0, out=xB)
        pivot_row = Binv[r] / w[r]
        pi = pi + d[q] * pivot_row
        w_r = w.copy()
        w_r[r] = 0.0
        Binv = dger(-1.0, w_r, pivot_row, a=Binv, overwrite_a=True)
        Binv[r] = pivot_row
        in_basis[basis[r]] = False
        basis[r] = q
        in_basis[q] = True
        it += 1
        since_refactor += 1

    Binv = _refactor(A, basis)
    y = f[basis] @ Binv
    return SimplexResult(y=y, objective=float(c @ y), iterations=it, degenerate_pivots=degenerate)
