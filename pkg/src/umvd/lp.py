"""LP relaxation over level indicator variables.

For every pair ``(i, j)`` and level ``l = 1..L`` the variable ``y_l(i, j)``
relaxes the indicator "fitted distance is at least ``d_l``".  The constraints
are a triangle inequality on every level, monotonicity in ``l`` and the unit
box.  ``y`` read per edge is a CCDF over levels, so ``y_l - y_{l-1}`` is the
mass the relaxation puts on level ``l``.

Solutions are snapped to nearby small-denominator rationals and stored as
:class:`fractions.Fraction`, so every later threshold and tie comparison is
exact rather than subject to round-off.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .instance import Instance, LevelLadder, build_ladder, pairs_of, pair_index
from .simplex import SimplexError, solve_box_lp

__all__ = [
    "EPS_FEAS",
    "EPS_OPT",
    "LPBudgetError",
    "LinearProgram",
    "LevelSolution",
    "EdgeClass",
    "EdgeCosts",
    "as_fraction",
    "build_lp",
    "solve_lp",
    "solve_instance",
    "normalize_top_level",
    "edge_costs",
    "dominant_level",
    "write_lp_file",
]

EPS_FEAS = 1e-7
EPS_OPT = 1e-7
SNAP_DENOMINATOR = 1000
SNAP_TOL = 1e-9
DEFAULT_MAX_VARIABLES = 20_000


class LPBudgetError(ValueError):
    pass


def as_fraction(x, max_denominator: int = 10_000, tol: float = 1e-13) -> Fraction:
    """Nearest small-denominator rational if within ``tol``, else the exact float value."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    f = Fraction(float(x))
    g = f.limit_denominator(max_denominator)
    return g if abs(float(g) - float(x)) <= tol else f


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``min constant + c @ y  s.t.  A_ub @ y <= b_ub, 0 <= y <= 1``.

    Variable ``(l, p)`` (level ``l`` in ``1..L``, pair index ``p``) sits at
    column ``(l - 1) * P + p``.  Rows are all triangle rows first, then the
    monotonicity rows.
    """

    n: int
    L: int
    c: np.ndarray
    constant: float
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    n_triangle: int
    n_monotone: int
    weights: np.ndarray  # per pair, zero off E
    input_level: np.ndarray  # per pair, 0 off E

    @property
    def P(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def n_variables(self) -> int:
        return self.L * self.P

    def var(self, level: int, p: int) -> int:
        return (level - 1) * self.P + p

    def var_name(self, col: int) -> str:
        level, p = divmod(col, self.P)
        i, j = pairs_of(self.n)[p]
        return f"y_{level + 1}_{i + 1}_{j + 1}"


def build_lp(
    inst: Instance,
    ladder: LevelLadder | None = None,
    max_variables: int = DEFAULT_MAX_VARIABLES,
) -> LinearProgram:
    ladder = ladder or build_ladder(inst)
    n, L = inst.n, ladder.L
    pairs = pairs_of(n)
    P = len(pairs)
    if L * P > max_variables:
        raise LPBudgetError(
            f"LP needs {L * P} variables, over the budget of {max_variables}"
        )
    idx = pair_index(n)
    weights = np.array([inst.weights[i, j] if inst.specified[i, j] else 0.0 for i, j in pairs])
    levels = np.array([ladder.level_of[i, j] for i, j in pairs], dtype=np.int64)

    c = np.zeros(L * P)
    for p in range(P):
        if levels[p] == 0 or weights[p] == 0:
            continue
        c[(levels[p] - 1) * P + p] -= weights[p]
        if levels[p] > 1:
            c[(levels[p] - 2) * P + p] += weights[p]
    constant = float(weights.sum())

    rows, cols, vals = [], [], []
    r = 0
    triples = list(itertools.combinations(range(n), 3))
    for level in range(1, L + 1):
        base = (level - 1) * P
        for i, j, k in triples:
            e = (idx[i, j], idx[i, k], idx[j, k])
            for a in range(3):
                rows += [r, r, r]
                cols += [base + e[a], base + e[(a + 1) % 3], base + e[(a + 2) % 3]]
                vals += [1.0, -1.0, -1.0]
                r += 1
    n_tri = r
    for level in range(1, L + 1):
        for p in range(P):
            if level > 1:
                rows.append(r)
                cols.append((level - 2) * P + p)
                vals.append(1.0)
            rows.append(r)
            cols.append((level - 1) * P + p)
            vals.append(-1.0)
            r += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, L * P))
    return LinearProgram(
        n=n,
        L=L,
        c=c,
        constant=constant,
        A_ub=A,
        b_ub=np.zeros(r),
        n_triangle=n_tri,
        n_monotone=r - n_tri,
        weights=weights,
        input_level=levels,
    )


@dataclass(frozen=True, eq=False)
class LevelSolution:
    """Level table ``y[l, p]`` for ``l = 0..L`` with row 0 identically zero.

    ``exact`` is an object array of :class:`Fraction`; :attr:`y` is its float
    image.  ``weights`` and ``input_level`` carry the objective data so the
    solution can price itself.
    """

    n: int
    L: int
    exact: np.ndarray
    weights: np.ndarray
    input_level: np.ndarray
    iterations: int = 0
    backend: str = "given"

    @cached_property
    def y(self) -> np.ndarray:
        return self.exact.astype(float)

    @property
    def P(self) -> int:
        return self.exact.shape[1]

    @cached_property
    def objective_exact(self) -> Fraction:
        total = Fraction(0)
        for p in range(self.P):
            w = self.weights[p]
            lvl = self.input_level[p]
            if lvl == 0 or w == 0:
                continue
            dy = self.exact[lvl, p] - self.exact[lvl - 1, p]
            total += as_fraction(w) * (1 - dy)
        return total

    @property
    def objective(self) -> float:
        return float(self.objective_exact)

    def delta(self, p: int) -> list[Fraction]:
        """``[dy_1, ..., dy_L]`` for pair index ``p``."""
        col = self.exact[:, p]
        return [col[l] - col[l - 1] for l in range(1, self.L + 1)]

    def level_matrix(self, level: int) -> np.ndarray:
        iu = np.triu_indices(self.n, 1)
        M = np.zeros((self.n, self.n))
        M[iu] = self.y[level]
        return M + M.T

    def max_violation(self) -> float:
        """Largest violation of triangle, monotonicity and box constraints."""
        y = self.y
        worst = max(0.0, float(-y.min(initial=0.0)), float(y.max(initial=1.0) - 1.0))
        if self.L >= 1:
            worst = max(worst, float(np.max(y[:-1] - y[1:], initial=0.0)))
        for level in range(1, self.L + 1):
            M = self.level_matrix(level)
            # M[i,j] - M[i,k] - M[k,j] over all i, j, k
            viol = M[:, :, None] - M[:, None, :] - M.T[None, :, :]
            if viol.size:
                worst = max(worst, float(viol.max()))
        return worst

    @classmethod
    def from_values(
        cls, n: int, values, weights=None, input_level=None, backend: str = "given"
    ) -> "LevelSolution":
        """Wrap a ``(L, P)`` table holding levels ``1..L``; row 0 is added."""
        P = n * (n - 1) // 2
        rows = [list(r) for r in values]
        L = len(rows)
        exact = np.empty((L + 1, P), dtype=object)
        exact[0, :] = Fraction(0)
        for l, row in enumerate(rows, 1):
            if len(row) != P:
                raise ValueError(f"level {l} has {len(row)} entries, expected {P}")
            for p, v in enumerate(row):
                exact[l, p] = as_fraction(v)
        w = np.zeros(P) if weights is None else np.asarray(weights, dtype=float)
        lv = np.zeros(P, dtype=np.int64) if input_level is None else np.asarray(input_level)
        return cls(n, L, exact, w, lv, backend=backend)


def _snap(v: float) -> Fraction:
    v = min(1.0, max(0.0, float(v)))
    f = Fraction(v)
    g = f.limit_denominator(SNAP_DENOMINATOR)
    return g if abs(float(g) - v) <= SNAP_TOL else f


def _clean(lp: LinearProgram, y: np.ndarray, backend: str, iterations: int) -> LevelSolution:
    P, L = lp.P, lp.L
    exact = np.empty((L + 1, P), dtype=object)
    exact[0, :] = Fraction(0)
    for level in range(1, L + 1):
        for p in range(P):
            v = _snap(y[(level - 1) * P + p])
            prev = exact[level - 1, p]
            exact[level, p] = v if v >= prev else prev
    return LevelSolution(lp.n, L, exact, lp.weights, lp.input_level, iterations, backend)


def solve_lp(lp: LinearProgram, backend: str = "simplex", **options) -> LevelSolution:
    """Optimal level table for ``lp``.

    ``backend="simplex"`` (default) is the embedded revised simplex;
    ``backend="highs"`` routes through :func:`scipy.optimize.linprog` for
    cross-checks.  Raises :class:`SimplexError` on failure.
    """
    if lp.n_variables == 0:
        return _clean(lp, np.zeros(0), backend, 0)
    if backend == "simplex":
        res = solve_box_lp(lp.c, lp.A_ub, lp.b_ub, tol_opt=EPS_OPT, **options)
        y, iterations = res.y, res.iterations
    elif backend == "highs":
        from scipy.optimize import linprog

        res = linprog(lp.c, A_ub=lp.A_ub, b_ub=lp.b_ub, bounds=(0, 1), method="highs")
        if res.status != 0:
            raise SimplexError(f"HiGHS failed: {res.message}")
        y, iterations = res.x, int(res.nit)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    sol = _clean(lp, y, backend, iterations)
    viol = sol.max_violation()
    if viol > EPS_FEAS:
        raise SimplexError(f"LP solution infeasible by {viol:.3g} after cleaning")
    return sol


def normalize_top_level(sol: LevelSolution) -> LevelSolution:
    """Set ``y_L = 1`` on every pair; everything else is kept."""
    if sol.L == 0 or all(v == 1 for v in sol.exact[sol.L]):
        return sol
    exact = sol.exact.copy()
    exact[sol.L, :] = Fraction(1)
    return LevelSolution(
        sol.n, sol.L, exact, sol.weights, sol.input_level, sol.iterations, sol.backend
    )


def solve_instance(inst: Instance, backend: str = "simplex", **options) -> LevelSolution:
    """Build, solve and normalize the relaxation of ``inst``."""
    return normalize_top_level(solve_lp(build_lp(inst), backend=backend, **options))


class EdgeClass(str, Enum):
    LOW_COST = "low"
    HIGH_DETERMINISTIC = "high_det"
    HIGH_RANDOM = "high_rand"


def dominant_level(delta: Sequence[Fraction]) -> int:
    """1-based argmax of ``delta``; ties go to the smallest level (largest distance)."""
    best = 0
    for l in range(1, len(delta)):
        if delta[l] > delta[best]:
            best = l
    return best + 1


@dataclass(frozen=True, eq=False)
class EdgeCosts:
    """Per-pair LP cost ``1 - dy*`` at the input level and its cost class (``E`` only)."""

    alpha: Fraction
    c_star: dict[tuple[int, int], Fraction]
    classes: dict[tuple[int, int], EdgeClass]
    weights: dict[tuple[int, int], float]

    @property
    def lp_lower_bound(self) -> float:
        return float(sum(as_fraction(self.weights[e]) * c for e, c in self.c_star.items()))

    def of_class(self, cls: EdgeClass) -> list[tuple[int, int]]:
        return [e for e, k in self.classes.items() if k is cls]


def check_alpha(alpha) -> Fraction:
    a = as_fraction(alpha)
    if not (0 < a <= Fraction(1, 2)):
        raise ValueError(f"alpha must lie in (0, 1/2], got {float(a)}")
    return a


def edge_costs(inst: Instance, sol: LevelSolution, alpha) -> EdgeCosts:
    a = check_alpha(alpha)
    ladder = build_ladder(inst)
    idx = pair_index(inst.n)
    c_star, classes, weights = {}, {}, {}
    for i, j in inst.edges:
        p = idx[i, j]
        delta = sol.delta(p)
        c = 1 - delta[ladder.level_of[i, j] - 1]
        dom = delta[dominant_level(delta) - 1]
        if c < a:
            k = EdgeClass.LOW_COST
        elif dom > 1 - a:
            k = EdgeClass.HIGH_DETERMINISTIC
        else:
            k = EdgeClass.HIGH_RANDOM
        c_star[(i, j)] = c
        classes[(i, j)] = k
        weights[(i, j)] = float(inst.weights[i, j])
    return EdgeCosts(a, c_star, classes, weights)


def write_lp_file(lp: LinearProgram, path) -> None:
    """Write ``lp`` in CPLEX LP text format (the constant term goes in a comment)."""
    A = lp.A_ub.tocsr()

    def terms(cols, coefs):
        out = []
        for col, v in zip(cols, coefs):
            sign = "-" if v < 0 else "+"
            mag = abs(v)
            coef = "" if mag == 1 else f"{mag:.17g} "
            out.append(f"{sign} {coef}{lp.var_name(col)}")
        text = " ".join(out) or "0 " + lp.var_name(0)
        return text[2:] if text.startswith("+ ") else text

    nz = np.flatnonzero(lp.c)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\ ultrametric violation distance LP relaxation\n")
        fh.write(f"\\ objective constant: {lp.constant:.17g}\n")
        fh.write("Minimize\n")
        fh.write(f" obj: {terms(nz, lp.c[nz]) if len(nz) else '0 ' + lp.var_name(0)}\n")
        fh.write("Subject To\n")
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            kind = "tri" if r < lp.n_triangle else "mono"
            fh.write(f" {kind}{r}: {terms(A.indices[lo:hi], A.data[lo:hi])} <= {lp.b_ub[r]:g}\n")
        fh.write("Bounds\n")
        for col in range(lp.n_variables):
            fh.write(f" 0 <= {lp.var_name(col)} <= 1\n")
        fh.write("End\n")
