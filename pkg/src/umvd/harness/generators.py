"""Seeded random instance generators.

Planted ultrametrics come from recursive uniform partitioning: a block at
level ``l < L`` is split into a uniformly random set partition (one part is
allowed), pairs across parts get level ``l``, and each part recurses at
``l + 1``; a block reaching level ``L`` puts ``L`` on all its pairs.  Levels
map to distances ``d_l = L - l + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path

from ..instance import Instance, InstanceError, Mode, instance_from_levels, pairs_of

__all__ = ["KINDS", "Generated", "random_set_partition", "random_ultrametric_levels", "generate", "generate_planted"]

KINDS = ("perturbed_ultrametric", "random_levels", "cc_random", "kpartite_perturbed")
_LEVEL_ATTEMPTS = 100


@dataclass(frozen=True)
class Generated:
    instance: Instance
    planted: np.ndarray | None  # level matrix of the planted ultrametric, if any
    certificate: float | None  # weight of corrupted pairs, an upper bound on OPT


def random_set_partition(items: list[int], rng: np.random.Generator) -> list[list[int]]:
    """Uniform random set partition of ``items`` (Stam's urn method)."""
    n = len(items)
    if n == 0:
        return []
    # Pr[K = k] is proportional to k^n / k!  (Dobinski's formula)
    kmax = 4 * n + 10
    k = np.arange(1, kmax + 1)
    logw = n * np.log(k) - np.array([math.lgamma(v + 1) for v in k])
    w = np.exp(logw - logw.max())
    K = int(rng.choice(k, p=w / w.sum()))
    urn = rng.integers(K, size=n)
    blocks: dict[int, list[int]] = {}
    for v, b in zip(items, urn.tolist()):
        blocks.setdefault(b, []).append(v)
    return list(blocks.values())


def _planted_once(n: int, L: int, rng: np.random.Generator) -> np.ndarray:
    level = np.zeros((n, n), dtype=np.int64)
    stack = [(list(range(n)), 1)]
    while stack:
        block, l = stack.pop()
        if len(block) < 2:
            continue
        if l == L:
            for a in block:
                for b in block:
                    if a != b:
                        level[a, b] = L
            continue
        parts = random_set_partition(block, rng)
        for x in range(len(parts)):
            for y in range(x + 1, len(parts)):
                for a in parts[x]:
                    for b in parts[y]:
                        level[a, b] = level[b, a] = l
        stack.extend((part, l + 1) for part in parts)
    return level


def random_ultrametric_levels(n: int, L: int, rng: np.random.Generator) -> np.ndarray:
    """Planted level matrix; resampled (up to 100 times) until every level occurs.

    Small ``n`` cannot always realize ``L`` levels (a hierarchy on ``n``
    points has at most ``n - 1`` distinct distances); the last draw is then
    kept and the instance simply has a shorter ladder.
    """
    level = _planted_once(n, L, rng)
    for _ in range(_LEVEL_ATTEMPTS - 1):
        if n < 2 or len(np.unique(level[np.triu_indices(n, 1)])) == L:
            break
        level = _planted_once(n, L, rng)
    return level


def _balanced_parts(n: int, parts: int, rng: np.random.Generator) -> np.ndarray:
    perm = rng.permutation(n)
    part = np.empty(n, dtype=np.int64)
    part[perm] = np.arange(n) % parts
    return part


def _metric_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.uniform(1.0, 10.0, size=(n, n))
    raw = np.triu(raw, 1)
    raw = raw + raw.T
    W = shortest_path(raw, method="FW", directed=False)
    np.fill_diagonal(W, 0.0)
    return W


def _corrupt(level, candidates, k, L, rng) -> list[tuple[int, int]]:
    if k > len(candidates):
        raise ValueError(f"cannot corrupt {k} pairs, only {len(candidates)} available")
    chosen = rng.choice(len(candidates), size=k, replace=False) if k else []
    hit = []
    for c in sorted(int(v) for v in chosen):
        i, j = candidates[c]
        new = int(rng.integers(1, L))  # uniform over the L - 1 other levels
        if new >= level[i, j]:
            new += 1
        level[i, j] = level[j, i] = new
        hit.append((i, j))
    return hit


def generate_planted(
    kind: str,
    n: int,
    L: int = 3,
    k: int = 0,
    p: float = 0.5,
    seed=0,
    parts: int = 3,
    weighted: bool = False,
) -> Generated:
    """Like :func:`generate` but also returns the planted ultrametric and OPT certificate."""
    if kind not in KINDS:
        raise ValueError(f"unknown generator {kind!r}; choose from {', '.join(KINDS)}")
    if n < 1:
        raise ValueError("n must be positive")
    if L < 1 and kind != "cc_random":
        raise ValueError("L must be at least 1")
    if not 0 <= p <= 1:
        raise ValueError("density p must lie in [0, 1]")
    if k < 0:
        raise ValueError("corruption count k must be non-negative")
    if L < 2 and k > 0:
        raise ValueError("corruption needs at least two levels")
    rng = np.random.default_rng(seed)
    mode = Mode.WEIGHTED if weighted else Mode.COMPLETE
    all_pairs = pairs_of(n)
    if kind == "random_levels":
        level = np.zeros((n, n), dtype=np.int64)
        for i, j in all_pairs:
            level[i, j] = level[j, i] = int(rng.integers(1, L + 1))
        W = _metric_weights(n, rng) if weighted else None
        return Generated(instance_from_levels(level, mode=mode, weights=W), None, None)
    if kind == "cc_random":
        level = np.ones((n, n), dtype=np.int64)
        for i, j in all_pairs:
            if rng.random() < p:
                level[i, j] = level[j, i] = 2
        np.fill_diagonal(level, 0)
        W = _metric_weights(n, rng) if weighted else None
        return Generated(instance_from_levels(level, values=[2.0, 1.0], mode=mode, weights=W), None, None)

    if k > len(all_pairs):
        raise ValueError(f"k={k} exceeds the {len(all_pairs)} pairs")
    planted = random_ultrametric_levels(n, L, rng)
    level = planted.copy()
    values = [float(L - l + 1) for l in range(1, L + 1)]
    if kind == "perturbed_ultrametric":
        W = _metric_weights(n, rng) if weighted else None
        hit = _corrupt(level, all_pairs, k, L, rng)
        inst = instance_from_levels(level, values=values, mode=mode, weights=W)
        cert = float(sum(inst.weights[i, j] for i, j in hit))
        return Generated(inst, planted, cert)

    # kpartite_perturbed
    if weighted:
        raise ValueError("k-partite instances are unweighted")
    if parts < 2:
        raise ValueError("k-partite instances need at least two parts")
    part = _balanced_parts(n, parts, rng)
    cross = [(i, j) for i, j in all_pairs if part[i] != part[j]]
    if k > len(cross):
        raise ValueError(f"k={k} exceeds the {len(cross)} cross-part pairs")
    hit = _corrupt(level, cross, k, L, rng)
    spec = part[:, None] != part[None, :]
    level = np.where(spec, level, 0)
    try:
        inst = instance_from_levels(level, values=values, mode=Mode.KPARTITE, specified=spec)
    except InstanceError as exc:  # pragma: no cover - construction guarantees validity
        raise ValueError(str(exc)) from exc
    return Generated(inst, planted, float(len(hit)))


def generate(kind: str, n: int, L: int = 3, k: int = 0, p: float = 0.5, seed=0, parts: int = 3, weighted: bool = False) -> Instance:
    """Random instance of the named kind; see :func:`generate_planted`."""
    return generate_planted(kind, n, L, k, p, seed, parts, weighted).instance
