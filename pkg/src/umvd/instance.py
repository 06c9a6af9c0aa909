"""Input data model for ultrametric violation distance problems.

Vertices are held internally as dense 0-based indices; the original text
labels are kept on the instance and used for every output.  Distance levels
are 1-based: level ``l`` means the ``l``-th largest distinct input distance,
so a larger level index is a smaller distance and level 0 is reserved for the
``y_0 = 0`` convention of the LP.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "InstanceError",
    "Mode",
    "Instance",
    "LevelLadder",
    "Ultrametric",
    "build_ladder",
    "check_ultrametric",
    "is_ultrametric",
    "disagreement_cost",
    "parse_instance",
    "serialize_instance",
    "read_instance",
    "pair_index",
    "pairs_of",
]

WEIGHT_TOL = 1e-9


class InstanceError(ValueError):
    """Invalid input data; the message names the offending pair or triple."""


class Mode(str, Enum):
    COMPLETE = "complete"
    WEIGHTED = "weighted"
    KPARTITE = "kpartite"


def pairs_of(n: int) -> list[tuple[int, int]]:
    """All pairs ``(i, j)`` with ``i < j`` in lexicographic order."""
    return list(itertools.combinations(range(n), 2))


def pair_index(n: int) -> np.ndarray:
    """``n x n`` matrix mapping ``(i, j)`` to its lexicographic pair index (-1 on diagonal)."""
    idx = -np.ones((n, n), dtype=np.int64)
    for p, (i, j) in enumerate(pairs_of(n)):
        idx[i, j] = idx[j, i] = p
    return idx


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """Pairwise distances on a specified edge set ``E`` plus non-negative weights.

    ``distances`` holds ``nan`` off ``E`` and on the diagonal; ``specified`` is
    the boolean mask of ``E``.  Construct through :meth:`from_arrays` (or the
    parser) so that the mode invariants are checked.
    """

    n: int
    distances: np.ndarray
    specified: np.ndarray
    weights: np.ndarray
    mode: Mode
    labels: tuple[str, ...] = field(default=())

    @classmethod
    def from_arrays(
        cls,
        distances,
        mode: Mode | str = Mode.COMPLETE,
        weights=None,
        specified=None,
        labels: Sequence[str] | None = None,
    ) -> "Instance":
        mode = Mode(mode)
        D = np.array(distances, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise InstanceError("distance matrix must be square")
        n = D.shape[0]
        if specified is None:
            spec = ~np.isnan(D)
        else:
            spec = np.array(specified, dtype=bool)
        np.fill_diagonal(spec, False)
        if not np.array_equal(spec, spec.T):
            raise InstanceError("specified-edge mask must be symmetric")
        D = np.where(spec, D, np.nan)
        if weights is None:
            W = spec.astype(float)
        else:
            W = np.array(weights, dtype=float)
            np.fill_diagonal(W, 0.0)
        if labels is None:
            labels = tuple(str(v + 1) for v in range(n))
        inst = cls(n, _frozen(D), _frozen(spec), _frozen(W), mode, tuple(labels))
        inst.validate()
        return inst

    def validate(self) -> None:
        n, D, spec, W = self.n, self.distances, self.specified, self.weights
        if n < 1:
            raise InstanceError("instance needs at least one vertex")
        if len(self.labels) != n:
            raise InstanceError("label count does not match vertex count")
        lab = self.labels
        for i, j in pairs_of(n):
            if spec[i, j]:
                if D[i, j] != D[j, i]:
                    raise InstanceError(f"asymmetric distance at ({lab[i]},{lab[j]})")
                if not D[i, j] > 0 or not np.isfinite(D[i, j]):
                    raise InstanceError(f"non-positive distance at ({lab[i]},{lab[j]})")
            if W[i, j] != W[j, i]:
                raise InstanceError(f"asymmetric weight at ({lab[i]},{lab[j]})")
            if W[i, j] < 0 or not np.isfinite(W[i, j]):
                raise InstanceError(f"negative weight at ({lab[i]},{lab[j]})")
        if self.mode in (Mode.COMPLETE, Mode.WEIGHTED):
            for i, j in pairs_of(n):
                if not spec[i, j]:
                    raise InstanceError(
                        f"missing pair ({lab[i]},{lab[j]}) in {self.mode.value} mode"
                    )
        if self.mode in (Mode.COMPLETE, Mode.KPARTITE):
            for i, j in pairs_of(n):
                expected = 1.0 if spec[i, j] else 0.0
                if W[i, j] != expected:
                    raise InstanceError(
                        f"weight {W[i, j]:g} at ({lab[i]},{lab[j]}) not allowed in "
                        f"{self.mode.value} mode (unweighted)"
                    )
        if self.mode is Mode.KPARTITE:
            for i, j, k in itertools.permutations(range(n), 3):
                if not spec[i, j] and not spec[j, k] and spec[i, k]:
                    raise InstanceError(
                        "unspecified pairs are not an equivalence (not complete "
                        f"multipartite) at ({lab[i]},{lab[j]},{lab[k]})"
                    )
        if self.mode is Mode.WEIGHTED:
            for i, j, k in itertools.combinations(range(n), 3):
                for a, b, c in ((i, j, k), (i, k, j), (j, k, i)):
                    # side (a,b) against the path through c
                    if W[a, b] > W[a, c] + W[c, b] + WEIGHT_TOL * max(1.0, W[a, b]):
                        raise InstanceError(
                            f"weight triangle inequality violated at ({lab[i]},{lab[j]},{lab[k]})"
                        )

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return pairs_of(self.n)

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Specified pairs ``E`` in lexicographic order."""
        return [(i, j) for i, j in pairs_of(self.n) if self.specified[i, j]]

    @property
    def unspecified(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in pairs_of(self.n) if not self.specified[i, j]]

    def parts(self) -> list[list[int]]:
        """Vertex classes of the relation "equal or unspecified pair"."""
        seen = [False] * self.n
        out = []
        for v in range(self.n):
            if seen[v]:
                continue
            block = [u for u in range(self.n) if u == v or not self.specified[u, v]]
            for u in block:
                seen[u] = True
            out.append(block)
        return out

    def ladder(self) -> "LevelLadder":
        return build_ladder(self)


@dataclass(frozen=True, eq=False)
class LevelLadder:
    """Distinct input distances ``values[0] > values[1] > ...`` and levels of ``E``.

    ``level_of[i, j]`` is the 1-based level of a specified pair and 0 elsewhere.
    ``values`` is exposed 0-based, so distance of level ``l`` is ``values[l-1]``.
    """

    values: tuple[float, ...]
    level_of: np.ndarray

    @property
    def L(self) -> int:
        return len(self.values)

    def distance(self, level: int) -> float:
        if not 1 <= level <= self.L:
            raise InstanceError(f"level {level} outside ladder [1, {self.L}]")
        return self.values[level - 1]


def build_ladder(inst: Instance) -> LevelLadder:
    """Sort the distinct specified distances decreasingly and index each edge."""
    vals = sorted({float(inst.distances[i, j]) for i, j in inst.edges}, reverse=True)
    if not vals:
        # no specified pair at all: a single nominal level keeps L >= 1
        vals = [1.0]
    pos = {v: l + 1 for l, v in enumerate(vals)}
    level_of = np.zeros((inst.n, inst.n), dtype=np.int64)
    for i, j in inst.edges:
        level_of[i, j] = level_of[j, i] = pos[float(inst.distances[i, j])]
    return LevelLadder(tuple(vals), _frozen(level_of))


@dataclass(frozen=True, eq=False)
class Ultrametric:
    """Level assignment to every pair; ``level[i, j]`` in ``1..L`` (diagonal 0)."""

    level: np.ndarray
    ladder: LevelLadder

    @property
    def n(self) -> int:
        return self.level.shape[0]

    def distance_matrix(self) -> np.ndarray:
        vals = np.array((0.0,) + self.ladder.values)
        return vals[self.level]


_TRIPLE_CACHE: dict[int, np.ndarray] = {}


def _triples(n: int) -> np.ndarray:
    t = _TRIPLE_CACHE.get(n)
    if t is None:
        t = np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64).reshape(-1, 3)
        _TRIPLE_CACHE[n] = t
    return t


def check_ultrametric(candidate) -> tuple[bool, tuple[int, int, int] | None]:
    """Test the ultrametric inequality on every triple.

    ``candidate`` is an :class:`Ultrametric` (levels) or a full symmetric
    distance matrix of reals.  Returns ``(ok, triple)`` where ``triple`` is the
    lexicographically smallest violating 0-based triple ``i < j < k``.
    """
    if isinstance(candidate, Ultrametric):
        # larger level = smaller distance; negate to compare as distances
        M = -np.asarray(candidate.level, dtype=float)
        if np.any(candidate.level[~np.eye(candidate.n, dtype=bool)] < 1) or np.any(
            candidate.level > candidate.ladder.L
        ):
            raise InstanceError("ultrametric references levels outside the ladder")
    else:
        M = np.asarray(candidate, dtype=float)
    n = M.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.isnan(M[off]).any():
        raise InstanceError("distance map is incomplete")
    T = _triples(n)
    if len(T) == 0:
        return True, None
    a = M[T[:, 0], T[:, 1]]
    b = M[T[:, 0], T[:, 2]]
    c = M[T[:, 1], T[:, 2]]
    top = np.maximum(np.maximum(a, b), c)
    ok = (a == top).astype(int) + (b == top) + (c == top) >= 2
    if ok.all():
        return True, None
    bad = int(np.flatnonzero(~ok)[0])
    return False, tuple(int(v) for v in T[bad])


def is_ultrametric(candidate) -> bool:
    return check_ultrametric(candidate)[0]


def disagreement_cost(inst: Instance, u: Ultrametric) -> float:
    """Total weight of specified pairs whose fitted level differs from the input level."""
    lad = u.ladder
    if u.n != inst.n:
        raise InstanceError("ultrametric and instance sizes differ")
    if np.any(u.level > lad.L):
        raise InstanceError("ultrametric references levels outside the ladder")
    ref = build_ladder(inst)
    if ref.values != lad.values:
        raise InstanceError("ultrametric ladder does not match the instance ladder")
    iu = np.triu_indices(inst.n, 1)
    changed = inst.specified[iu] & (u.level[iu] != ref.level_of[iu])
    return float(np.sum(inst.weights[iu][changed]))


# --------------------------------------------------------------------------- I/O


def _labels_order(labels: Iterable[str]) -> list[str]:
    uniq = list(dict.fromkeys(labels))
    try:
        return sorted(uniq, key=int)
    except ValueError:
        return uniq


def _parse_edges(text: str, mode: Mode) -> Instance:
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (3, 4):
            raise InstanceError(f"line {lineno}: expected u,v,distance[,weight]")
        u, v = fields[0], fields[1]
        if u == v:
            raise InstanceError(f"line {lineno}: self-loop at {u}")
        try:
            dist = float(fields[2])
            weight = float(fields[3]) if len(fields) == 4 else None
        except ValueError as exc:
            raise InstanceError(f"line {lineno}: {exc}") from None
        records.append((lineno, u, v, dist, weight))
    labels = _labels_order(x for r in records for x in (r[1], r[2]))
    index = {lab: k for k, lab in enumerate(labels)}
    n = len(labels)
    D = np.full((n, n), np.nan)
    W = np.zeros((n, n))
    spec = np.zeros((n, n), dtype=bool)
    for lineno, u, v, dist, weight in records:
        i, j = index[u], index[v]
        if spec[i, j]:
            raise InstanceError(f"line {lineno}: duplicate edge ({u},{v})")
        if not dist > 0:
            raise InstanceError(f"line {lineno}: non-positive distance at ({u},{v})")
        if weight is not None and weight < 0:
            raise InstanceError(f"line {lineno}: negative weight at ({u},{v})")
        spec[i, j] = spec[j, i] = True
        D[i, j] = D[j, i] = dist
        W[i, j] = W[j, i] = 1.0 if weight is None else weight
    return Instance.from_arrays(D, mode, weights=W, specified=spec, labels=labels)


def _parse_matrix(text: str, mode: Mode) -> Instance:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise InstanceError("empty matrix input")
    try:
        n = int(lines[0])
    except ValueError:
        raise InstanceError("matrix input must start with the vertex count") from None
    if len(lines) != n + 1:
        raise InstanceError(f"expected {n} matrix rows, found {len(lines) - 1}")
    D = np.full((n, n), np.nan)
    for r, ln in enumerate(lines[1:]):
        cells = [c.strip() for c in ln.split(",")]
        if len(cells) != n:
            raise InstanceError(f"matrix row {r + 1} has {len(cells)} entries, expected {n}")
        for c, cell in enumerate(cells):
            if r == c or cell == "*":
                continue
            try:
                D[r, c] = float(cell)
            except ValueError:
                raise InstanceError(f"matrix entry ({r + 1},{c + 1}) is not a number") from None
    for i, j in pairs_of(n):
        if np.isnan(D[i, j]) != np.isnan(D[j, i]) or (
            not np.isnan(D[i, j]) and D[i, j] != D[j, i]
        ):
            raise InstanceError(f"asymmetric matrix at ({i + 1},{j + 1})")
        if np.isnan(D[i, j]) and mode is not Mode.KPARTITE:
            raise InstanceError(f"missing pair ({i + 1},{j + 1}) in {mode.value} mode")
        if not np.isnan(D[i, j]) and not D[i, j] > 0:
            raise InstanceError(f"non-positive distance at ({i + 1},{j + 1})")
    return Instance.from_arrays(D, mode)


def parse_instance(source: str, mode: Mode | str = Mode.COMPLETE, fmt: str = "edges") -> Instance:
    """Parse edge-list (``u,v,distance[,weight]``) or matrix text into an :class:`Instance`."""
    mode = Mode(mode)
    if fmt == "edges":
        return _parse_edges(source, mode)
    if fmt == "matrix":
        return _parse_matrix(source, mode)
    raise ValueError(f"unknown format {fmt!r}")


def read_instance(path, mode: Mode | str = Mode.COMPLETE, fmt: str = "edges") -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read(), mode, fmt)


def _num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def serialize_instance(inst: Instance, fmt: str = "edges") -> str:
    """Canonical text form; parsing it back reproduces ``inst``."""
    lab = inst.labels
    if fmt == "edges":
        rows = []
        for i, j in inst.edges:
            row = f"{lab[i]},{lab[j]},{_num(inst.distances[i, j])}"
            if inst.mode is Mode.WEIGHTED:
                row += f",{_num(inst.weights[i, j])}"
            rows.append(row)
        return "\n".join(rows) + "\n"
    if fmt == "matrix":
        out = [str(inst.n)]
        for i in range(inst.n):
            cells = []
            for j in range(inst.n):
                if i == j:
                    cells.append("0")
                elif inst.specified[i, j]:
                    cells.append(_num(inst.distances[i, j]))
                else:
                    cells.append("*")
            out.append(",".join(cells))
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def instance_from_levels(
    levels: np.ndarray,
    values: Sequence[float] | None = None,
    mode: Mode | str = Mode.COMPLETE,
    weights=None,
    specified=None,
    labels: Sequence[str] | None = None,
) -> Instance:
    """Build an instance from a 1-based level matrix (0 entries are unspecified)."""
    levels = np.asarray(levels, dtype=np.int64)
    n = levels.shape[0]
    L = int(levels.max()) if levels.size else 1
    if values is None:
        values = [float(L - l + 1) for l in range(1, L + 1)]
    vals = np.array((np.nan,) + tuple(float(v) for v in values))
    D = vals[levels]
    spec = levels > 0 if specified is None else np.asarray(specified, dtype=bool)
    np.fill_diagonal(spec, False)
    return Instance.from_arrays(D, mode, weights=weights, specified=spec, labels=labels)


def ultrametric_from_matrix(inst: Instance, matrix: Mapping | np.ndarray) -> Ultrametric:
    """Express a full distance matrix over the instance's ladder as levels."""
    lad = build_ladder(inst)
    pos = {v: l + 1 for l, v in enumerate(lad.values)}
    M = np.asarray(matrix, dtype=float)
    level = np.zeros((inst.n, inst.n), dtype=np.int64)
    for i, j in pairs_of(inst.n):
        v = float(M[i, j])
        if v not in pos:
            raise InstanceError(f"distance {v:g} at ({i + 1},{j + 1}) is not on the ladder")
        level[i, j] = level[j, i] = pos[v]
    return Ultrametric(level, lad)


__all__ += ["instance_from_levels", "ultrametric_from_matrix"]
