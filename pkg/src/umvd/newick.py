"""Newick export of an ultrametric as a rooted dendrogram, plus a small reader.

Within any cluster whose smallest level (largest distance) is ``m``, the
relation "at level > m" is an equivalence, and its classes are the children.
Each internal node sits at height ``d_m / 2``, and leaves sit at height 0, so
the path length between two leaves is exactly twice the height of their
lowest common ancestor, which is their distance.
"""

from __future__ import annotations

import re
from collections.abc import Sequence

import numpy as np

from .instance import Ultrametric, check_ultrametric

__all__ = ["NewickError", "to_newick", "parse_newick", "newick_distances"]

_SPECIAL = re.compile(r"[\s(),:;'\[\]]")


class NewickError(ValueError):
    pass


def _quote(label: str) -> str:
    if _SPECIAL.search(label):
        return "'" + label.replace("'", "''") + "'"
    return label


def _length(h: float) -> str:
    if float(h).is_integer():
        return str(int(h))
    return repr(float(h))


def to_newick(u: Ultrametric, labels: Sequence[str] | None = None) -> str:
    """Newick text for ``u``; raises :class:`NewickError` if it is not an ultrametric."""
    n = u.n
    if labels is None:
        labels = [str(v + 1) for v in range(n)]
    if len(labels) != n:
        raise NewickError(f"{len(labels)} labels for {n} points")
    if n >= 3:
        ok, bad = check_ultrametric(u)
        if not ok:
            raise NewickError(f"not an ultrametric: triple {tuple(v + 1 for v in bad)} has a unique largest side")
    if n == 0:
        return ";"
    if n == 1:
        return _quote(labels[0]) + ";"
    level = u.level
    dist = u.ladder.distance

    def build(members: list[int], parent_height: float) -> str:
        if len(members) == 1:
            return f"{_quote(labels[members[0]])}:{_length(parent_height)}"
        m = min(int(level[a, b]) for a in members for b in members if a != b)
        height = dist(m) / 2
        groups: list[list[int]] = []
        for v in members:
            for g in groups:
                if level[g[0], v] > m:
                    g.append(v)
                    break
            else:
                groups.append([v])
        inner = ",".join(build(g, height) for g in groups)
        if parent_height is None:
            return f"({inner})"
        return f"({inner}):{_length(parent_height - height)}"

    return build(list(range(n)), None) + ";"


class _Reader:
    def __init__(self, text: str):
        self.s = text.strip()
        self.i = 0

    def peek(self) -> str:
        return self.s[self.i] if self.i < len(self.s) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise NewickError(f"expected {ch!r} at offset {self.i}")
        self.i += 1

    def label(self) -> str:
        if self.peek() == "'":
            self.i += 1
            out = []
            while True:
                j = self.s.find("'", self.i)
                if j < 0:
                    raise NewickError("unterminated quoted label")
                out.append(self.s[self.i : j])
                self.i = j + 1
                if self.peek() == "'":
                    out.append("'")
                    self.i += 1
                else:
                    return "".join(out)
        start = self.i
        while self.peek() and not _SPECIAL.match(self.peek()):
            self.i += 1
        return self.s[start : self.i]

    def length(self) -> float:
        if self.peek() != ":":
            return 0.0
        self.i += 1
        m = re.compile(r"[-+0-9.eE]+").match(self.s, self.i)
        if not m:
            raise NewickError(f"bad branch length at offset {self.i}")
        self.i = m.end()
        return float(m.group())

    def node(self):
        """Returns ``(name, length, children)``."""
        children = []
        if self.peek() == "(":
            self.i += 1
            children.append(self.node())
            while self.peek() == ",":
                self.i += 1
                children.append(self.node())
            self.expect(")")
        name = self.label()
        return name, self.length(), children


def parse_newick(text: str):
    """Parse into nested ``(name, branch_length, children)`` tuples."""
    r = _Reader(text)
    tree = r.node()
    r.expect(";")
    if r.i != len(r.s):
        raise NewickError("trailing text after ';'")
    return tree


def newick_distances(text: str) -> tuple[list[str], np.ndarray]:
    """Leaf labels (in order of appearance) and their path-length distance matrix."""
    leaves: list[str] = []
    depth: list[float] = []
    anc: list[list[int]] = []  # node ids on the root path of each leaf
    node_depth: list[float] = []

    def walk(node, d: float, path: list[int]) -> None:
        name, length, children = node
        d += length
        nid = len(node_depth)
        node_depth.append(d)
        path = path + [nid]
        if not children:
            leaves.append(name)
            depth.append(d)
            anc.append(path)
        for c in children:
            walk(c, d, path)

    root = parse_newick(text)
    walk((root[0], 0.0, root[2]), 0.0, [])
    n = len(leaves)
    D = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            common = 0
            for x, y in zip(anc[a], anc[b]):
                if x != y:
                    break
                common = x
            D[a, b] = D[b, a] = depth[a] + depth[b] - 2 * node_depth[common]
    return leaves, D
