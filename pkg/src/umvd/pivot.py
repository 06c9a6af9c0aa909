"""Recursive pivot rounding of an optimal level table into an ultrametric.

Each call works on a vertex set ``V`` with an upper level ``u`` (every distance
inside ``V`` is at most ``d_u``).  It picks a uniform pivot, rounds the pivot
edges from the truncated table (levels below ``u`` zeroed), minimally repairs
every other pair so each triangle through the pivot is ultrametric, then
recurses into the classes of equal pivot distance.

A pivot edge whose dominant mass exceeds its threshold (``1 - alpha`` on
specified pairs, ``1 - alpha*beta`` on unspecified ones) is fixed to its
dominant level; otherwise its level is drawn from a CCDF built from the table.
Inside the engine distances are level indices (larger index = smaller
distance), so the repair rule's equality tests are exact.

Randomness: one :class:`numpy.random.Generator` over ``PCG64(seed)``, consumed
as one pivot draw per non-base call followed by one uniform per random pivot
edge in ascending vertex order.  Calls are processed depth-first with children
in ascending level, which is the order of the recursive formulation.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .instance import Instance, Ultrametric, build_ladder, check_ultrametric, disagreement_cost, pair_index
from .lp import EPS_FEAS, LevelSolution, as_fraction, check_alpha, dominant_level

__all__ = [
    "RoundingTag",
    "RoundingClass",
    "TruncatedSolution",
    "PivotEdge",
    "Repair",
    "Frame",
    "PivotTrace",
    "RunResult",
    "PivotError",
    "Rounder",
    "truncate",
    "classify_pivot_edge",
    "sample_pivot_distance",
    "repair_non_pivot",
    "partition_children",
    "run",
]


class PivotError(RuntimeError):
    """Bad rounding input, or an internal invariant failing (an implementation bug)."""


class RoundingTag(str, Enum):
    DETERMINISTIC_E = "det_E"
    RANDOM_E = "rand_E"
    DETERMINISTIC_EMPTY = "det_empty"
    RANDOM_EMPTY = "rand_empty"

    @property
    def deterministic(self) -> bool:
        return self in (RoundingTag.DETERMINISTIC_E, RoundingTag.DETERMINISTIC_EMPTY)


@dataclass(frozen=True)
class RoundingClass:
    tag: RoundingTag
    dominant_level: int
    mass: Fraction  # truncated dy at the dominant level

    @property
    def deterministic(self) -> bool:
        return self.tag.deterministic


@dataclass(frozen=True)
class TruncatedSolution:
    """View of ``y_star`` with every level below ``u`` read as zero."""

    y_star: LevelSolution
    u: int

    @property
    def L(self) -> int:
        return self.y_star.L

    def value(self, level: int, p: int) -> Fraction:
        if level < self.u or level == 0:
            return Fraction(0)
        return self.y_star.exact[level, p]

    def ccdf(self, p: int) -> list[Fraction]:
        return [self.value(l, p) for l in range(1, self.L + 1)]

    def delta(self, p: int) -> list[Fraction]:
        col = [Fraction(0)] + self.ccdf(p)
        return [col[l] - col[l - 1] for l in range(1, self.L + 1)]

    def dominant(self, p: int) -> tuple[int, Fraction]:
        d = self.delta(p)
        level = dominant_level(d)
        return level, d[level - 1]


def truncate(y_star: LevelSolution, u: int) -> TruncatedSolution:
    if not 1 <= u <= max(1, y_star.L):
        raise ValueError(f"upper level {u} outside [1, {y_star.L}]")
    return TruncatedSolution(y_star, u)


def classify_pivot_edge(
    trunc: TruncatedSolution, p: int, in_E: bool, alpha, beta
) -> RoundingClass:
    a, b = as_fraction(alpha), as_fraction(beta)
    level, mass = trunc.dominant(p)
    if in_E:
        tag = RoundingTag.DETERMINISTIC_E if mass > 1 - a else RoundingTag.RANDOM_E
    else:
        tag = RoundingTag.DETERMINISTIC_EMPTY if mass > 1 - a * b else RoundingTag.RANDOM_EMPTY
    return RoundingClass(tag, level, mass)


def _level_cdf(trunc: TruncatedSolution, p: int, tag: RoundingTag, alpha, beta, pure: bool) -> list[Fraction]:
    """``Pr[level <= l]`` for ``l = 1..L`` (the CCDF of the distance)."""
    y = trunc.ccdf(p)
    if tag is RoundingTag.RANDOM_EMPTY or pure:
        F = list(y)
    else:
        ab = as_fraction(alpha) * as_fraction(beta)
        F = [max(v - ab, Fraction(0)) / (1 - ab) for v in y]
    if F and F[-1] != 1:
        raise PivotError(f"level probabilities for pair {p} sum to {float(F[-1])}, not 1")
    return F


def sample_pivot_distance(
    trunc: TruncatedSolution,
    p: int,
    cls: RoundingClass,
    alpha,
    beta,
    rng: np.random.Generator,
    pure: bool = False,
) -> int:
    """Level for a pivot edge; deterministic classes do not touch ``rng``.

    Random specified edges satisfy ``Pr[level <= l] = (y_l - ab)^+ / (1 - ab)``
    with ``ab = alpha*beta``; random unspecified edges (and every edge when
    ``pure``) use ``Pr[level <= l] = y_l``.  One uniform is drawn and inverted.
    """
    if cls.deterministic and not pure:
        return cls.dominant_level
    F = [float(v) for v in _level_cdf(trunc, p, cls.tag, alpha, beta, pure)]
    return bisect.bisect_right(F, rng.random()) + 1


def repair_non_pivot(x_jk: int, level_ij: int, level_ik: int) -> int:
    """Level of ``(j, k)`` after the pivot ``i`` has been rounded.

    Equal pivot levels cap the pair at that distance (keep the smaller of the
    two distances, i.e. the larger level); unequal ones force the larger of
    the two pivot distances (the smaller level).
    """
    if level_ij == level_ik:
        return max(x_jk, level_ij)
    return min(level_ij, level_ik)


def partition_children(
    vertices, pivot: int, pivot_levels: dict[int, int], u: int, L: int
) -> list[tuple[int, tuple[int, ...]]]:
    """Non-empty classes ``(level, members)`` of equal pivot level, ascending in level."""
    groups: dict[int, list[int]] = {}
    for j in vertices:
        if j == pivot:
            continue
        level = pivot_levels[j]
        if not u <= level <= L:
            raise PivotError(f"pivot level {level} outside [{u}, {L}] for vertex {j}")
        groups.setdefault(level, []).append(j)
    return [(level, tuple(groups[level])) for level in sorted(groups)]


@dataclass(frozen=True)
class PivotEdge:
    vertex: int
    in_E: bool
    tag: RoundingTag
    dominant_level: int
    old_level: int
    level: int


@dataclass(frozen=True)
class Repair:
    j: int
    k: int
    old_level: int
    level: int
    rule: str  # "min" when pivot levels agree, "max" otherwise


@dataclass
class Frame:
    index: int
    parent: int | None
    depth: int
    vertices: tuple[int, ...]
    upper_level: int
    x: np.ndarray  # levels on V x V at call entry (row/col order of ``vertices``)
    pivot: int | None = None
    pivot_edges: list[PivotEdge] = field(default_factory=list)
    repairs: list[Repair] = field(default_factory=list)
    children: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)
    child_frames: list[int] = field(default_factory=list)

    def level_at_entry(self, a: int, b: int) -> int:
        pos = {v: r for r, v in enumerate(self.vertices)}
        return int(self.x[pos[a], pos[b]])

    def to_record(self) -> dict:
        return {
            "frame": self.index,
            "parent": self.parent,
            "depth": self.depth,
            "vertices": list(self.vertices),
            "upper_level": self.upper_level,
            "pivot": self.pivot,
            "pivot_edges": [
                {
                    "j": e.vertex,
                    "in_E": e.in_E,
                    "class": e.tag.value,
                    "dominant_level": e.dominant_level,
                    "old_level": e.old_level,
                    "level": e.level,
                }
                for e in self.pivot_edges
            ],
            "repairs": [[r.j, r.k, r.old_level, r.level, r.rule] for r in self.repairs],
            "children": [[lvl, list(vs)] for lvl, vs in self.children],
        }


@dataclass
class PivotTrace:
    frames: list[Frame] = field(default_factory=list)

    def __iter__(self):
        return iter(self.frames)

    def __len__(self) -> int:
        return len(self.frames)

    def records(self) -> list[dict]:
        return [f.to_record() for f in self.frames]

    def write_jsonl(self, fh, labels=None) -> None:
        for rec in self.records():
            if labels is not None:
                rec["labels"] = [labels[v] for v in rec["vertices"]]
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


@dataclass
class RunResult:
    ultrametric: Ultrametric
    trace: PivotTrace | None
    cost: float
    seed: int


class Rounder:
    """Rounding engine for a fixed ``(instance, y_star, alpha, beta)``.

    Classification and CDFs depend only on ``(pair, u)``, so they are cached
    here and shared by every seed.
    """

    def __init__(
        self,
        inst: Instance,
        y_star: LevelSolution,
        alpha,
        beta=0,
        force_random: bool = False,
        check_feasibility: bool = True,
    ):
        self.inst = inst
        self.ladder = build_ladder(inst)
        self.alpha = check_alpha(alpha)
        self.beta = as_fraction(beta)
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {float(self.beta)}")
        self.force_random = force_random
        if y_star.n != inst.n:
            raise PivotError("LP solution and instance sizes differ")
        if inst.n >= 2 and y_star.L != self.ladder.L:
            raise PivotError(f"LP solution has {y_star.L} levels, instance ladder has {self.ladder.L}")
        if y_star.P and any(v != 1 for v in y_star.exact[y_star.L]):
            raise PivotError("LP solution is not normalized (y_L must be 1 on every pair)")
        if check_feasibility and y_star.P:
            viol = y_star.max_violation()
            if viol > EPS_FEAS:
                raise PivotError(f"LP solution infeasible by {viol:.3g}")
        self.y_star = y_star
        self.idx = pair_index(inst.n).tolist()
        self._rules: dict[tuple[int, int], tuple[RoundingClass, list[float] | None]] = {}

    @property
    def L(self) -> int:
        return self.ladder.L

    def classify(self, p: int, u: int, in_E: bool) -> RoundingClass:
        return classify_pivot_edge(truncate(self.y_star, u), p, in_E, self.alpha, self.beta)

    def rule(self, p: int, u: int, in_E: bool) -> tuple[RoundingClass, list[float] | None]:
        key = (p, u)
        hit = self._rules.get(key)
        if hit is None:
            trunc = truncate(self.y_star, u)
            cls = classify_pivot_edge(trunc, p, in_E, self.alpha, self.beta)
            cdf = None
            if self.force_random or not cls.deterministic:
                cdf = [float(v) for v in _level_cdf(trunc, p, cls.tag, self.alpha, self.beta, self.force_random)]
            hit = self._rules[key] = (cls, cdf)
        return hit

    def run(self, seed: int, trace: bool = True) -> RunResult:
        inst, L, idx = self.inst, self.L, self.idx
        n = inst.n
        spec = inst.specified.tolist()
        x = self.ladder.level_of.tolist()
        for a in range(n):
            for b in range(n):
                if a != b and not spec[a][b]:
                    # unspecified pairs start at the top level; the repair rule caps them
                    x[a][b] = 1
        rng = np.random.Generator(np.random.PCG64(seed))
        frames: list[Frame] = []
        stack = [(tuple(range(n)), 1, None, 0)]
        while stack:
            V, u, parent, depth = stack.pop()
            frame = None
            if trace:
                frame = Frame(
                    index=len(frames),
                    parent=parent,
                    depth=depth,
                    vertices=V,
                    upper_level=u,
                    x=np.array([[x[a][b] if a != b else 0 for b in V] for a in V], dtype=np.int64),
                )
                if parent is not None:
                    frames[parent].child_frames.append(frame.index)
                frames.append(frame)
            if len(V) <= 2 or u == L:
                continue
            i = V[int(rng.integers(len(V)))]
            xi = x[i]
            levels: dict[int, int] = {}
            for j in V:
                if j == i:
                    continue
                cls, cdf = self.rule(idx[i][j], u, spec[i][j])
                if cdf is None:
                    level = cls.dominant_level
                else:
                    level = bisect.bisect_right(cdf, rng.random()) + 1
                levels[j] = level
                if frame is not None:
                    frame.pivot_edges.append(
                        PivotEdge(j, spec[i][j], cls.tag, cls.dominant_level, xi[j], level)
                    )
            others = [j for j in V if j != i]
            for a_pos, j in enumerate(others):
                lj = levels[j]
                xj = x[j]
                for k in others[a_pos + 1 :]:
                    lk = levels[k]
                    old = xj[k]
                    new = repair_non_pivot(old, lj, lk)
                    xj[k] = new
                    x[k][j] = new
                    if frame is not None:
                        frame.repairs.append(Repair(j, k, old, new, "min" if lj == lk else "max"))
            for j, level in levels.items():
                xi[j] = level
                x[j][i] = level
            children = partition_children(V, i, levels, u, L)
            if frame is not None:
                frame.pivot = i
                frame.children = children
                parent_index = frame.index
            else:
                parent_index = None
            for level, members in reversed(children):
                stack.append((members, level, parent_index, depth + 1))

        level = np.array(x, dtype=np.int64)
        np.fill_diagonal(level, 0)
        um = Ultrametric(level, self.ladder)
        if n >= 3:
            ok, bad = check_ultrametric(um)
            if not ok:
                raise PivotError(f"output violates the ultrametric inequality at {bad}")
        return RunResult(um, PivotTrace(frames) if trace else None, disagreement_cost(inst, um), seed)


def run(
    inst: Instance,
    y_star: LevelSolution,
    alpha,
    beta=0,
    rng_seed: int = 0,
    force_random: bool = False,
    trace: bool = True,
) -> RunResult:
    """One rounding pass; see :class:`Rounder` to reuse the cached rules across seeds."""
    return Rounder(inst, y_star, alpha, beta, force_random).run(rng_seed, trace=trace)
