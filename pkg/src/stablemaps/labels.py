"""Uniform bridges with no jump below -1, and labellings of plane trees."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .trees import LatticePath, PlaneTree

__all__ = [
    "Bridge",
    "LabelledTree",
    "InvalidLabelling",
    "sample_bridge",
    "all_bridges",
    "bridge_count",
    "bridge_marginal_variance",
    "label_tree",
    "label_process",
    "enumerate_labellings",
]


class InvalidLabelling(ValueError):
    pass


@dataclass(frozen=True)
class Bridge:
    """Values ``x_1..x_k`` with increments at least ``-1`` (from ``x_0 = 0``) and ``x_k = 0``."""

    values: tuple[int, ...]

    def __post_init__(self):
        v = tuple(int(x) for x in self.values)
        if not v or v[-1] != 0:
            raise InvalidLabelling("a bridge ends at 0")
        prev = 0
        for x in v:
            if x - prev < -1:
                raise InvalidLabelling("bridge increment below -1")
            prev = x
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def increments(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip((0,) + self.values[:-1], self.values))


def bridge_count(k: int) -> int:
    """``|B_k^+| = C(2k-1, k-1)``."""
    return comb(2 * k - 1, k - 1)


def _bars_to_values(bars) -> list[int]:
    # bar i (1-based) at slot b_i gives x_i = b_i - 2i + 1; the last value is pinned to 0
    return [b - 2 * i - 1 for i, b in enumerate(bars)] + [0]


def sample_bridge(k: int, rng: np.random.Generator) -> Bridge:
    """Uniform element of ``B_k^+`` via a uniform ``(k-1)``-subset of ``2k-1`` slots.

    The subset is the prefix of a partial Fisher-Yates shuffle.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    slots = list(range(2 * k - 1))
    for i in range(k - 1):
        j = i + int(rng.integers(len(slots) - i))
        slots[i], slots[j] = slots[j], slots[i]
    return Bridge(tuple(_bars_to_values(sorted(slots[: k - 1]))))


def all_bridges(k: int):
    """Every element of ``B_k^+``, in lexicographic order of the bar positions."""
    for bars in itertools.combinations(range(2 * k - 1), k - 1):
        yield Bridge(tuple(_bars_to_values(bars)))


def bridge_marginal_variance(k: int, j: int) -> Fraction:
    """Variance of ``x_j`` for a uniform bridge of length ``k``: ``2j(k-j)/(k+1)``."""
    if not 1 <= j <= k:
        raise ValueError("need 1 <= j <= k")
    return Fraction(2 * j * (k - j), k + 1)


@dataclass(frozen=True, eq=False)
class LabelledTree:
    tree: PlaneTree
    labels: np.ndarray

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int64)
        if lab.shape != self.tree.k.shape:
            raise InvalidLabelling("one label per vertex is required")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        self.check()

    def check(self) -> None:
        lab = self.labels
        if lab[0] != 0:
            raise InvalidLabelling("root label must be 0")
        if lab.size == 1:
            return
        par = self.tree.parent
        sib = self._previous_sibling()
        ref = np.where(sib >= 0, sib, par)[1:]
        if np.any(lab[1:] - lab[ref] < -1):
            raise InvalidLabelling("bridge increment below -1")
        last = self.tree.last_leaf
        internal = self.tree.k > 0
        if np.any(lab[internal] != lab[last[internal]]):
            raise InvalidLabelling("last child must carry its parent's label")

    def _previous_sibling(self) -> np.ndarray:
        par = self.tree.parent
        out = np.full(par.size, -1, dtype=np.int64)
        last_child: dict[int, int] = {}
        for j, p in enumerate(par.tolist()):
            if p >= 0:
                out[j] = last_child.get(p, -1)
                last_child[p] = j
        return out

    def __eq__(self, other):
        return (isinstance(other, LabelledTree) and self.tree == other.tree
                and np.array_equal(self.labels, other.labels))

    def __hash__(self):
        return hash((self.tree, self.labels.tobytes()))

    def __repr__(self):
        if self.labels.size <= 20:
            return f"LabelledTree(k={self.tree.k.tolist()}, labels={self.labels.tolist()})"
        return f"LabelledTree(<{self.labels.size} vertices>)"


def _children_by_parent(tree: PlaneTree) -> np.ndarray:
    """Non-root vertices grouped by parent, parents in lexicographic order."""
    par = tree.parent[1:]
    return np.argsort(par, kind="stable") + 1


def label_tree(tree: PlaneTree, rng: np.random.Generator) -> LabelledTree:
    """Attach independent uniform bridges to the children of every internal vertex.

    Uniform subsets are drawn in bulk: every internal vertex gets ``2k-1``
    uniform keys and its bars are the ``k-1`` smallest.
    """
    k = tree.k
    n = k.size
    if n == 1:
        return LabelledTree(tree, np.zeros(1, dtype=np.int64))
    internal = np.flatnonzero(k > 0)
    kk = k[internal]
    nslots = 2 * kk - 1
    group = np.repeat(np.arange(internal.size), nslots)
    slot = np.arange(group.size) - np.repeat(np.cumsum(nslots) - nslots, nslots)
    keys = rng.random(group.size)
    order = np.lexsort((keys, group))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size) - np.repeat(np.cumsum(nslots) - nslots, nslots)
    is_bar = rank < np.repeat(kk - 1, nslots)
    # bar i (1-based) of a group sits at slot b_i; child i gets b_i - 2i + 1
    bar_slots = slot[is_bar]
    bar_group = group[is_bar]
    starts = np.cumsum(kk - 1) - (kk - 1)
    bar_order = np.lexsort((bar_slots, bar_group))
    bar_slots = bar_slots[bar_order]
    i_in_group = np.arange(bar_slots.size) - np.repeat(starts, kk - 1)
    x_bars = bar_slots - 2 * i_in_group - 1
    # interleave: each group contributes k-1 bar values then a 0
    x = np.zeros(int(kk.sum()), dtype=np.int64)
    child_starts = np.cumsum(kk) - kk
    pos = np.repeat(child_starts, kk - 1) + i_in_group
    x[pos] = x_bars
    children = _children_by_parent(tree)
    d = np.zeros(n, dtype=np.int64)
    d[children] = x
    # the bridge gives offsets from the parent, so labels are sums along ancestry
    par = tree.parent.tolist()
    dl = d.tolist()
    lab = [0] * n
    for j in range(1, n):
        lab[j] = lab[par[j]] + dl[j]
    return LabelledTree(tree, np.array(lab, dtype=np.int64))


def label_process(lt: LabelledTree) -> LatticePath:
    """``L(j) = l(u_j)`` in lexicographic order."""
    return LatticePath(lt.labels, "label")


def enumerate_labellings(tree: PlaneTree):
    """Every admissible labelling of ``tree``."""
    internal = np.flatnonzero(tree.k > 0).tolist()
    kids = [tree.children(u) for u in internal]
    par = tree.parent.tolist()
    choices = [list(all_bridges(int(tree.k[u]))) for u in internal]
    for combo in itertools.product(*choices):
        d = [0] * tree.n_vertices
        for ch, br in zip(kids, combo):
            for c, x in zip(ch, br.values):
                d[c] = x
        lab = [0] * tree.n_vertices
        for j in range(1, tree.n_vertices):
            lab[j] = lab[par[j]] + d[j]
        yield LabelledTree(tree, lab)
