"""Exact optimum by exhaustive search, for small instances only.

Restricting the fitted values to the input ladder ``d_1 > ... > d_L`` loses
nothing.  Take any ultrametric ``x`` and map each value ``v`` to the smallest
ladder value that is ``>= v`` (or to ``d_1`` when ``v > d_1``).  That map is
monotone, and a monotone map preserves "the two largest sides of every
triangle are equal", so the image is again an ultrametric.  It fixes every
ladder value, so no correctly fitted specified pair becomes wrong.  Hence an
optimal ultrametric over ladder values exists, and enumerating the
``L ** (n(n-1)/2)`` level assignments is exact.

:func:`exact_opt` enumerates pairs in lexicographic order with levels
ascending and rejects a partial assignment as soon as a triangle is complete
and violated, or its cost reaches the incumbent.  :func:`exact_opt_bruteforce`
checks every assignment with no pruning at all and is kept as an independent
second route.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .instance import Instance, Ultrametric, build_ladder, check_ultrametric, disagreement_cost, pairs_of

__all__ = [
    "DEFAULT_BUDGET",
    "OracleBudgetError",
    "ExactResult",
    "exact_opt",
    "exact_opt_bruteforce",
    "verify_solution",
]

DEFAULT_BUDGET = 20_000_000


class OracleBudgetError(ValueError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"exhaustive search needs {required} assignments, budget is {budget}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class ExactResult:
    opt_cost: float
    witness: Ultrametric
    enumerated_count: int


def _required(inst: Instance, L: int) -> int:
    return L ** (inst.n * (inst.n - 1) // 2)


def exact_opt(inst: Instance, budget: int = DEFAULT_BUDGET) -> ExactResult:
    ladder = build_ladder(inst)
    L, n = ladder.L, inst.n
    need = _required(inst, L)
    if need > budget:
        raise OracleBudgetError(need, budget)
    pairs = pairs_of(n)
    P = len(pairs)
    pos = {e: p for p, e in enumerate(pairs)}
    target = [int(ladder.level_of[i, j]) for i, j in pairs]
    weight = [float(inst.weights[i, j]) if inst.specified[i, j] else 0.0 for i, j in pairs]
    # triangles completed when pair (j, k) is assigned: (i, j, k) for i < j
    closing = [[(pos[(i, j)], pos[(i, k)]) for i in range(j)] for j, k in pairs]

    # incumbent: best constant assignment (always an ultrametric)
    best_cost = float("inf")
    best = None
    for level in range(1, L + 1):
        c = sum(w for w, t in zip(weight, target) if t != level)
        if c < best_cost:
            best_cost, best = c, [level] * P
    assign = [0] * P
    count = 0

    def ok(p: int, a: int) -> bool:
        for q, r in closing[p]:
            b, c = assign[q], assign[r]
            m = min(a, b, c)
            if (a == m) + (b == m) + (c == m) < 2:
                return False
        return True

    def search(p: int, cost: float) -> None:
        nonlocal best_cost, best, count
        if p == P:
            count += 1
            if cost < best_cost:
                best_cost, best = cost, list(assign)
            return
        w, t = weight[p], target[p]
        for a in range(1, L + 1):
            c = cost + (w if t != a else 0.0)
            if c >= best_cost:
                continue
            if not ok(p, a):
                continue
            assign[p] = a
            search(p + 1, c)
        assign[p] = 0

    if P:
        search(0, 0.0)
    level = np.zeros((n, n), dtype=np.int64)
    for (i, j), a in zip(pairs, best or []):
        level[i, j] = level[j, i] = a
    um = Ultrametric(level, ladder)
    return ExactResult(disagreement_cost(inst, um), um, max(count, 1))


def exact_opt_bruteforce(inst: Instance, budget: int = 2_000_000) -> ExactResult:
    """Evaluate every level assignment at once with numpy (no pruning)."""
    ladder = build_ladder(inst)
    L, n = ladder.L, inst.n
    need = _required(inst, L)
    if need > budget:
        raise OracleBudgetError(need, budget)
    pairs = pairs_of(n)
    P = len(pairs)
    pos = {e: p for p, e in enumerate(pairs)}
    grid = np.array(list(itertools.product(range(1, L + 1), repeat=P)), dtype=np.int64).reshape(-1, P)
    valid = np.ones(len(grid), dtype=bool)
    for i, j, k in itertools.combinations(range(n), 3):
        a, b, c = grid[:, pos[(i, j)]], grid[:, pos[(i, k)]], grid[:, pos[(j, k)]]
        m = np.minimum(np.minimum(a, b), c)
        valid &= (a == m).astype(int) + (b == m) + (c == m) >= 2
    target = np.array([ladder.level_of[i, j] for i, j in pairs])
    weight = np.array([inst.weights[i, j] if inst.specified[i, j] else 0.0 for i, j in pairs])
    cost = ((grid != target) * weight).sum(axis=1) if P else np.zeros(len(grid))
    cost = np.where(valid, cost, np.inf)
    best = int(np.argmin(cost))
    level = np.zeros((n, n), dtype=np.int64)
    for (i, j), a in zip(pairs, grid[best]):
        level[i, j] = level[j, i] = a
    return ExactResult(float(cost[best]), Ultrametric(level, ladder), len(grid))


def verify_solution(inst: Instance, u: Ultrametric) -> tuple[bool, float]:
    """``(is_ultrametric, disagreement cost)`` for a candidate fit."""
    ok = check_ultrametric(u)[0] if u.n >= 3 else True
    return ok, disagreement_cost(inst, u)
