"""Trace audits: structural invariants, triangle census, partition frequencies.

Everything here is recomputed from the frozen LP table and the instance, not
read back from the engine's own classification, so a bookkeeping bug in the
engine shows up as a disagreement instead of being trusted.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import combinations

import numpy as np

from ..instance import Instance, build_ladder, pair_index
from ..lp import EPS_FEAS, LevelSolution, as_fraction
from ..pivot import PivotTrace

__all__ = [
    "INVARIANTS",
    "AuditTables",
    "InvariantTally",
    "audit_trace",
    "TriangleClass",
    "TriangleCensus",
    "classify_triangles",
    "Bucket",
    "PartitionTally",
    "BucketResult",
    "partition_events",
    "partition_probability_audit",
]

INVARIANTS = (
    "truncated_feasible",  # truncated table stays LP-feasible with y_L = 1
    "dominant_mass_monotone",  # dominant dy never decreases from a call to its child
    "cheap_or_hd_deterministic",  # low-cost and high-deterministic edges are rounded deterministically
    "low_cost_unmodified",  # low-cost edges sit at the truncated dominant level; as pivot edges they never change
    "dominant_in_u_or_root",  # dominant level is u or the untruncated dominant level
    "hd_cost_above",  # a high-deterministic edge has c* > 1 - alpha
    "class_matches_trace",  # engine's recorded rounding class agrees with the recomputation
)


class AuditTables:
    """Per ``(u, pair)`` dominant level and mass, and per-edge cost classes.

    Built once per ``(instance, y_star, alpha, beta)``; shared by all traces.
    """

    def __init__(self, inst: Instance, y_star: LevelSolution, alpha, beta=0):
        self.inst = inst
        self.y_star = y_star
        self.alpha = as_fraction(alpha)
        self.beta = as_fraction(beta)
        self.L = L = y_star.L
        self.idx = pair_index(inst.n)
        P = y_star.P
        ex = y_star.exact
        # dom[u][p], mass[u][p] for u = 1..L, truncation computed from scratch
        self.dom = [[0] * P for _ in range(L + 1)]
        self.mass = [[Fraction(0)] * P for _ in range(L + 1)]
        for u in range(1, L + 1):
            for p in range(P):
                best_l, best = u, ex[u, p]  # everything below u collapses onto u
                for l in range(u + 1, L + 1):
                    d = ex[l, p] - ex[l - 1, p]
                    if d > best:
                        best_l, best = l, d
                self.dom[u][p] = best_l
                self.mass[u][p] = best
        lad = build_ladder(inst)
        self.input_level = lad.level_of
        a = self.alpha
        self.c_star: dict[int, Fraction] = {}
        self.low: set[int] = set()
        self.hd: set[int] = set()
        for i, j in inst.edges:
            p = int(self.idx[i, j])
            lvl = int(lad.level_of[i, j])
            c = 1 - (ex[lvl, p] - ex[lvl - 1, p])
            self.c_star[p] = c
            if c < a:
                self.low.add(p)
            elif self.mass[1][p] > 1 - a:
                self.hd.add(p)

    def deterministic(self, p: int, u: int, in_E: bool) -> bool:
        thr = 1 - self.alpha if in_E else 1 - self.alpha * self.beta
        return self.mass[u][p] > thr


@dataclass
class InvariantTally:
    checks: Counter = field(default_factory=Counter)
    violations: Counter = field(default_factory=Counter)
    examples: list[str] = field(default_factory=list)

    def check(self, name: str, ok: bool, detail=None) -> None:
        self.checks[name] += 1
        if not ok:
            self.violations[name] += 1
            if len(self.examples) < 20:
                self.examples.append(f"{name}: {detail() if callable(detail) else detail}")

    def merge(self, other: "InvariantTally") -> "InvariantTally":
        self.checks.update(other.checks)
        self.violations.update(other.violations)
        self.examples.extend(other.examples[: max(0, 20 - len(self.examples))])
        return self

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


def _truncated_feasible(y: np.ndarray, n: int, V: tuple[int, ...], u: int, L: int) -> float:
    """Worst violation of the truncated table restricted to ``V``."""
    iu = np.triu_indices(n, 1)
    Vi = np.array(V)
    worst = 0.0
    for level in range(1, L + 1):
        M = np.zeros((n, n))
        if level >= u:
            M[iu] = y[level]
            M = M + M.T
        S = M[np.ix_(Vi, Vi)]
        if level == L:
            off = S[~np.eye(len(V), dtype=bool)]
            if off.size:
                worst = max(worst, float(np.abs(off - 1.0).max()))
        viol = S[:, :, None] - S[:, None, :] - S.T[None, :, :]
        worst = max(worst, float(viol.max(initial=0.0)))
    return worst


def audit_trace(
    tables: AuditTables, trace: PivotTrace, force_random: bool = False, tally: InvariantTally | None = None
) -> InvariantTally:
    """Check every structural invariant on one run's trace.

    With ``force_random`` the low-cost invariants do not apply (the rounding
    ignores the deterministic classes by construction) and are skipped.
    """
    t = InvariantTally() if tally is None else tally
    inst, idx, L = tables.inst, tables.idx, tables.L
    spec = inst.specified
    y = tables.y_star.y
    frames = trace.frames
    for fr in frames:
        V, u = fr.vertices, fr.upper_level
        viol = _truncated_feasible(y, inst.n, V, u, L) if len(V) >= 2 else 0.0
        t.check("truncated_feasible", viol <= EPS_FEAS, lambda: f"frame {fr.index} violation {viol:.3g}")
        pos = {v: r for r, v in enumerate(V)}
        for a, b in combinations(V, 2):
            p = int(idx[a, b])
            if fr.parent is not None:
                pu = frames[fr.parent].upper_level
                t.check(
                    "dominant_mass_monotone",
                    tables.mass[u][p] >= tables.mass[pu][p],
                    lambda: f"frame {fr.index} pair {(a, b)}",
                )
            t.check(
                "dominant_in_u_or_root",
                tables.dom[u][p] in (u, tables.dom[1][p]),
                lambda: f"frame {fr.index} pair {(a, b)} dominant {tables.dom[u][p]}",
            )
            if p in tables.low and not force_random:
                t.check(
                    "low_cost_unmodified",
                    int(fr.x[pos[a], pos[b]]) == tables.dom[u][p],
                    lambda: f"frame {fr.index} pair {(a, b)} level {int(fr.x[pos[a], pos[b]])}",
                )
        if fr.pivot is None:
            continue
        i = fr.pivot
        for e in fr.pivot_edges:
            j = e.vertex
            p = int(idx[i, j])
            in_E = bool(spec[i, j])
            det = tables.deterministic(p, u, in_E)
            t.check(
                "class_matches_trace",
                det == e.tag.deterministic and e.dominant_level == tables.dom[u][p] and e.in_E == in_E,
                lambda: f"frame {fr.index} edge {(i, j)} trace {e.tag.value}",
            )
            if p in tables.low or p in tables.hd:
                t.check("cheap_or_hd_deterministic", det, lambda: f"frame {fr.index} edge {(i, j)}")
                if not force_random:
                    t.check(
                        "cheap_or_hd_deterministic",
                        e.level == tables.dom[u][p],
                        lambda: f"frame {fr.index} edge {(i, j)} rounded to {e.level}",
                    )
            if p in tables.low and not force_random:
                t.check(
                    "low_cost_unmodified",
                    e.level == e.old_level,
                    lambda: f"frame {fr.index} pivot edge {(i, j)} {e.old_level}->{e.level}",
                )
    for p in tables.hd:
        t.check("hd_cost_above", tables.c_star[p] > 1 - tables.alpha, lambda: f"pair {p}")
    return t


class TriangleClass(str, Enum):
    DDD = "DDD"
    DDR_SAME = "DDR_same"
    DDR_DIFF = "DDR_diff"
    DRR = "DRR"
    RRR = "RRR"


@dataclass
class TriangleCensus:
    """Per-frame triangle counts through the pivot and forbidden modifications."""

    per_frame: list[Counter] = field(default_factory=list)
    frame_sizes: list[int] = field(default_factory=list)
    flagged: list[tuple[int, tuple[int, int, int]]] = field(default_factory=list)

    @property
    def totals(self) -> Counter:
        out = Counter()
        for c in self.per_frame:
            out.update(c)
        return out


def classify_triangles(tables: AuditTables, trace: PivotTrace) -> TriangleCensus:
    """Census of ``(pivot, j, k)`` triangles in every frame with a pivot.

    Each edge is classed deterministic/random under the frame's truncation,
    as if it were a pivot edge.  A triangle of three deterministic low-cost
    edges at ``alpha <= 1/3`` with any edge changed is flagged.
    """
    census = TriangleCensus()
    idx, spec = tables.idx, tables.inst.specified
    check_ddd = tables.alpha <= Fraction(1, 3)
    for fr in trace:
        if fr.pivot is None:
            continue
        i, u = fr.pivot, fr.upper_level
        edge = {e.vertex: e for e in fr.pivot_edges}
        repaired = {(r.j, r.k): r for r in fr.repairs}
        counts = Counter()
        others = [v for v in fr.vertices if v != i]
        for j, k in combinations(others, 2):
            ps = [int(idx[i, j]), int(idx[i, k]), int(idx[j, k])]
            ends = [(i, j), (i, k), (j, k)]
            det = [tables.deterministic(p, u, bool(spec[a, b])) for p, (a, b) in zip(ps, ends)]
            nd = sum(det)
            if nd == 3:
                cls = TriangleClass.DDD
            elif nd == 2:
                dl = [tables.dom[u][p] for p, d in zip(ps, det) if d]
                cls = TriangleClass.DDR_SAME if dl[0] == dl[1] else TriangleClass.DDR_DIFF
            elif nd == 1:
                cls = TriangleClass.DRR
            else:
                cls = TriangleClass.RRR
            counts[cls] += 1
            if check_ddd and cls is TriangleClass.DDD and all(p in tables.low for p in ps):
                r = repaired[(j, k) if (j, k) in repaired else (k, j)]
                changed = (
                    edge[j].level != edge[j].old_level
                    or edge[k].level != edge[k].old_level
                    or r.level != r.old_level
                )
                if changed:
                    census.flagged.append((fr.index, (i, j, k)))
        census.per_frame.append(counts)
        census.frame_sizes.append(len(fr.vertices))
    return census


class Bucket(str, Enum):
    DET_DIFF = "det_diff"  # both pivot edges deterministic with different dominant levels
    RANDOM_E = "random_E"  # some pivot edge random on a specified pair (and none random off E)
    RANDOM_EMPTY = "random_empty"  # some pivot edge random on an unspecified pair


@dataclass
class PartitionTally:
    events: Counter = field(default_factory=Counter)
    splits: Counter = field(default_factory=Counter)

    def merge(self, other: "PartitionTally") -> "PartitionTally":
        self.events.update(other.events)
        self.splits.update(other.splits)
        return self


def partition_events(tables: AuditTables, trace: PivotTrace, tally: PartitionTally | None = None) -> PartitionTally:
    """Count, per bucket, non-pivot pairs and how many the pivot separated."""
    t = PartitionTally() if tally is None else tally
    idx, spec = tables.idx, tables.inst.specified
    for fr in trace:
        if fr.pivot is None:
            continue
        i, u = fr.pivot, fr.upper_level
        info = []
        for e in fr.pivot_edges:
            p = int(idx[i, e.vertex])
            in_E = bool(spec[i, e.vertex])
            info.append((tables.deterministic(p, u, in_E), in_E, tables.dom[u][p], e.level))
        for (dj, ej, lj, xj), (dk, ek, lk, xk) in combinations(info, 2):
            if (not dj and not ej) or (not dk and not ek):
                b = Bucket.RANDOM_EMPTY
            elif not dj or not dk:
                b = Bucket.RANDOM_E
            elif lj != lk:
                b = Bucket.DET_DIFF
            else:
                continue
            t.events[b] += 1
            t.splits[b] += xj != xk
    return t


@dataclass(frozen=True)
class BucketResult:
    bucket: Bucket
    events: int
    splits: int
    bound: float
    frequency: float
    stderr: float
    status: str  # "pass", "fail" or "inconclusive"


def bucket_bounds(alpha, beta) -> dict[Bucket, float]:
    a, b = float(alpha), float(beta)
    return {
        Bucket.DET_DIFF: 1.0,
        Bucket.RANDOM_E: a * (1 - b) / (1 - a * b),
        Bucket.RANDOM_EMPTY: a * b,
    }


def partition_probability_audit(
    tally: PartitionTally, alpha, beta=0, min_events: int = 10_000, z: float = 3.0
) -> list[BucketResult]:
    """Empirical split frequency per bucket against its lower bound minus ``z`` SE."""
    out = []
    for b, bound in bucket_bounds(alpha, beta).items():
        n = tally.events[b]
        s = tally.splits[b]
        freq = s / n if n else float("nan")
        se = math.sqrt(freq * (1 - freq) / n) if n else float("nan")
        if n < min_events:
            status = "inconclusive"
        else:
            status = "pass" if freq >= bound - z * se - 1e-12 else "fail"
        out.append(BucketResult(b, n, s, bound, freq, se, status))
    return out
