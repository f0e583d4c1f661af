"""Plane trees stored as children counts in lexicographic order.

The same array, shifted by one, is the sequence of Łukasiewicz increments,
so every encoding used elsewhere reads straight off ``PlaneTree.k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .weights import OffspringLaw

__all__ = [
    "PlaneTree",
    "LatticePath",
    "ConditioningSpec",
    "InvalidEncoding",
    "SamplingError",
    "LatticeInfeasible",
    "lukasiewicz",
    "tree_from_lukasiewicz",
    "height_process",
    "sample_bgw",
    "sample_conditioned",
    "leaf_index_map",
    "lattice_feasible",
    "enumerate_trees",
]

Which = Literal["all", "leaves", "internal"]
DEFAULT_SIZE_CAP = 10**8


class InvalidEncoding(ValueError):
    pass


class SamplingError(RuntimeError):
    """The sampler exhausted its attempt budget."""

    def __init__(self, message: str, attempts: int, accepted: int = 0):
        super().__init__(message)
        self.attempts = attempts
        self.accepted = accepted

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


class LatticeInfeasible(SamplingError):
    """No tree with the requested count exists under the offspring support."""

    def __init__(self, message: str):
        super().__init__(message, attempts=0)


def _check_lukasiewicz_steps(k: np.ndarray) -> None:
    if k.ndim != 1 or k.size == 0:
        raise InvalidEncoding("children counts must be a non-empty 1-d array")
    if np.any(k < 0):
        raise InvalidEncoding("negative children count")
    w = np.cumsum(k - 1)
    if w[-1] != -1:
        raise InvalidEncoding(f"path ends at {int(w[-1])}, not -1")
    if w.size > 1 and np.any(w[:-1] < 0):
        raise InvalidEncoding("path hits -1 before the last step")


@dataclass(frozen=True, eq=False)
class PlaneTree:
    """Ordered rooted tree given by ``k[j]`` = number of children of ``u_j``."""

    k: np.ndarray

    def __post_init__(self):
        k = np.array(self.k, dtype=np.int64)
        _check_lukasiewicz_steps(k)
        k.setflags(write=False)
        object.__setattr__(self, "k", k)

    def __eq__(self, other):
        return isinstance(other, PlaneTree) and np.array_equal(self.k, other.k)

    def __hash__(self):
        return hash(self.k.tobytes())

    def __len__(self):
        return int(self.k.size)

    def __repr__(self):
        if self.k.size <= 20:
            return f"PlaneTree(k={self.k.tolist()})"
        return f"PlaneTree(<{self.k.size} vertices>)"

    @property
    def n_vertices(self) -> int:
        return int(self.k.size)

    @property
    def n_edges(self) -> int:
        """``zeta(T)``: the number of edges."""
        return int(self.k.size) - 1

    @cached_property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.k == 0))

    @property
    def n_internal(self) -> int:
        return self.n_vertices - self.n_leaves

    def count(self, which: Which) -> int:
        if which == "all":
            return self.n_vertices
        if which == "leaves":
            return self.n_leaves
        if which == "internal":
            return self.n_internal
        raise ValueError(f"unknown set {which!r}")

    @cached_property
    def parent(self) -> np.ndarray:
        """Parent index of each vertex; ``-1`` for the root."""
        k = self.k.tolist()
        par = [-1] * len(k)
        stack: list[int] = []  # vertices with children still to place
        left: list[int] = []
        for j, kj in enumerate(k):
            if stack:
                p = stack[-1]
                par[j] = p
                left[-1] -= 1
                if left[-1] == 0:
                    stack.pop()
                    left.pop()
            if kj:
                stack.append(j)
                left.append(kj)
        out = np.array(par, dtype=np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def subtree_size(self) -> np.ndarray:
        size = np.ones(self.k.size, dtype=np.int64)
        par = self.parent
        # children come after parents, so one backward sweep suffices
        s = size.tolist()
        p = par.tolist()
        for j in range(len(s) - 1, 0, -1):
            s[p[j]] += s[j]
        out = np.array(s, dtype=np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def first_child(self) -> np.ndarray:
        """Index of the first child, ``-1`` for leaves (always ``j + 1`` otherwise)."""
        idx = np.arange(self.k.size, dtype=np.int64) + 1
        out = np.where(self.k > 0, idx, -1)
        out.setflags(write=False)
        return out

    def children(self, j: int) -> list[int]:
        out = []
        c = j + 1
        sizes = self.subtree_size
        for _ in range(int(self.k[j])):
            out.append(c)
            c += int(sizes[c])
        return out

    @cached_property
    def last_leaf(self) -> np.ndarray:
        """Index of the leaf ending the rightmost descending path from each vertex.

        The subtree of ``u_j`` occupies a contiguous block in lexicographic
        order whose final entry is exactly that leaf.
        """
        out = np.arange(self.k.size, dtype=np.int64) + self.subtree_size - 1
        out.setflags(write=False)
        return out


@dataclass(frozen=True, eq=False)
class LatticePath:
    values: np.ndarray
    kind: Literal["lukasiewicz", "height", "label"]

    def __post_init__(self):
        v = np.array(self.values, dtype=np.int64)
        if self.kind == "lukasiewicz" and v.size > 1 and np.any(np.diff(v) < -1):
            raise InvalidEncoding("Łukasiewicz increments must be at least -1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return (isinstance(other, LatticePath) and self.kind == other.kind
                and np.array_equal(self.values, other.values))

    def __len__(self):
        return int(self.values.size)

    def __getitem__(self, i):
        return self.values[i]

    def at(self, t):
        """Evaluate at real times: step interpolation for Łukasiewicz, linear otherwise."""
        t = np.asarray(t, dtype=float)
        if self.kind == "lukasiewicz":
            idx = np.clip(np.floor(t).astype(np.int64), 0, self.values.size - 1)
            return self.values[idx].astype(float)
        return np.interp(t, np.arange(self.values.size), self.values.astype(float))


def lukasiewicz(tree: PlaneTree) -> LatticePath:
    """``W(0) = 0`` and ``W(j+1) = W(j) + k_j - 1``; length ``N + 2``."""
    w = np.concatenate([[0], np.cumsum(tree.k - 1)])
    return LatticePath(w, "lukasiewicz")


def tree_from_lukasiewicz(path) -> PlaneTree:
    values = path.values if isinstance(path, LatticePath) else np.asarray(path, dtype=np.int64)
    if values.size < 2 or values[0] != 0:
        raise InvalidEncoding("a Łukasiewicz path starts at 0 and has at least one step")
    steps = np.diff(values)
    if np.any(steps < -1):
        raise InvalidEncoding("increments below -1")
    return PlaneTree(steps + 1)


def height_process(tree: PlaneTree) -> LatticePath:
    par = tree.parent.tolist()
    h = [0] * len(par)
    for j in range(1, len(par)):
        h[j] = h[par[j]] + 1
    return LatticePath(np.array(h, dtype=np.int64), "height")


def leaf_index_map(tree: PlaneTree) -> tuple[np.ndarray, np.ndarray]:
    """Positions of leaves and the cumulative leaf count.

    Returns ``(g, Lam)`` where ``g[i-1]`` is the lexicographic index of the
    ``i``-th leaf and ``Lam[j]`` counts leaves among ``u_0, ..., u_j`` for
    ``j <= N``, with ``Lam[N+1] = lambda(T)``.  Hence ``Lam[g[i-1]] == i``.
    """
    is_leaf = tree.k == 0
    g = np.flatnonzero(is_leaf).astype(np.int64)
    lam = np.cumsum(is_leaf, dtype=np.int64)
    lam = np.concatenate([lam, lam[-1:]])
    return g, lam


# ---------------------------------------------------------------------------
# lattice feasibility


def _coin_representable(target: int, coins: list[int]) -> bool:
    """Is ``target`` a non-negative integer combination of the positive ``coins``?"""
    if target < 0:
        return False
    if target == 0:
        return True
    coins = sorted({c for c in coins if 0 < c <= target})
    if not coins:
        return False
    g = 0
    for c in coins:
        g = math.gcd(g, c)
    if target % g:
        return False
    if coins[0] == g:
        return True
    mask = (1 << (target + 1)) - 1
    reach = 1
    for c in coins:
        shift = c
        while shift <= target:
            reach |= (reach << shift) & mask
            shift *= 2
    return bool((reach >> target) & 1)


def _positive_support(law: OffspringLaw) -> tuple[list[int], int | None]:
    head = [int(v) for v in np.flatnonzero(law.head) if v > 0]
    return head, (law.tail.start if law.tail is not None else None)


def lattice_feasible(law: OffspringLaw, which: Which, n: int) -> bool:
    """Whether some tree with ``n`` vertices of type ``which`` has positive probability."""
    if n < 1:
        return False
    p0 = float(law.head[0])
    head, j0 = _positive_support(law)
    if which == "all":
        # need n - 1 = sum of n support values, i.e. a coin sum of positives
        t = n - 1
        if j0 is not None and t >= j0:
            return True
        return p0 > 0 and _coin_representable(t, head) if t > 0 else p0 > 0
    if which == "leaves":
        if p0 <= 0:
            return False
        t = n - 1
        if t == 0:
            return True
        coins = [v - 1 for v in head]
        if j0 is not None and t >= j0 - 1:
            return True
        return _coin_representable(t, coins)
    if which == "internal":
        return p0 > 0 and (bool(head) or j0 is not None)
    raise ValueError(f"unknown set {which!r}")


# ---------------------------------------------------------------------------
# sampling


def _is_A(values: np.ndarray, which: Which) -> np.ndarray:
    if which == "all":
        return np.ones(values.shape, dtype=bool)
    if which == "leaves":
        return values == 0
    return values > 0


def sample_bgw(law: OffspringLaw, rng: np.random.Generator, size_cap: int = DEFAULT_SIZE_CAP,
               *, which: Which = "all", stop_above: int | None = None):
    """Unconditioned Galton-Watson tree, generated depth-first.

    Returns a ``PlaneTree`` or ``None`` on overflow: more than ``size_cap``
    vertices, or (when ``stop_above`` is given) more than ``stop_above``
    vertices of type ``which``.
    """
    height = 0
    count_a = 0
    pieces = []
    total = 0
    chunk = 64
    while True:
        vals = law.sample(rng, chunk)
        path = height + np.cumsum(vals - 1)
        hit = np.flatnonzero(path < 0)
        end = int(hit[0]) + 1 if hit.size else chunk
        vals = vals[:end]
        total += end
        if total > size_cap:
            return None
        if stop_above is not None:
            count_a += int(np.count_nonzero(_is_A(vals, which)))
            if count_a > stop_above:
                return None
        pieces.append(vals)
        if hit.size:
            return PlaneTree(np.concatenate(pieces))
        height = int(path[-1])
        chunk = min(chunk * 2, 1 << 20)


@dataclass(frozen=True)
class ConditioningSpec:
    """Condition on ``n`` vertices with offspring count in ``which``.

    ``method='vervaat'`` draws exact conditioned step sequences and rotates
    them into an excursion; ``'rejection'`` resamples whole trees.
    """

    which: Which
    n: int
    method: Literal["vervaat", "rejection"] = "vervaat"
    max_attempts: int = 10**7
    size_cap: int = DEFAULT_SIZE_CAP

    def __post_init__(self):
        if self.which not in ("all", "leaves", "internal"):
            raise ValueError(f"unknown set {self.which!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.method not in ("vervaat", "rejection"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")


def cyclic_shift_to_excursion(values: np.ndarray) -> np.ndarray:
    """Rotate a step sequence with total ``-1`` so it starts right after its first minimum."""
    s = np.cumsum(values - 1)
    cut = int(np.argmin(s)) + 1
    return np.concatenate([values[cut:], values[:cut]])


def _draw_conditioned_steps(law: OffspringLaw, which: Which, n: int,
                            rng: np.random.Generator, max_attempts: int):
    """Exchangeable draw of a step multiset with ``n`` A-steps and total ``-1``."""
    other = {"all": None, "leaves": "internal", "internal": "leaves"}[which]
    p_a = law.mass_of(which)
    values_idx = np.arange(law.head.size, dtype=np.int64)
    for attempt in range(1, max_attempts + 1):
        m = int(rng.negative_binomial(n, p_a)) if other is not None else 0
        length = n + m
        need = length - 1  # sum of children counts in a tree with `length` vertices
        counts, tail_vals = law.sample_counts(rng, n, which)
        head_sum = int(np.dot(counts, values_idx))
        if other is not None and m:
            c2, t2 = law.sample_counts(rng, m, other)
            counts = counts + c2
            head_sum += int(np.dot(c2, values_idx))
            tail_vals = np.concatenate([tail_vals, t2])
        if head_sum > need:
            continue
        if tail_vals.size:
            if int(tail_vals.max()) > need:
                continue
            if head_sum + int(tail_vals.sum()) != need:
                continue
        elif head_sum != need:
            continue
        vals = np.concatenate([np.repeat(values_idx, counts), tail_vals])
        rng.shuffle(vals)
        return vals, attempt
    raise SamplingError(f"no conditioned step sequence after {max_attempts} attempts",
                        attempts=max_attempts)


def sample_conditioned(law: OffspringLaw, spec: ConditioningSpec, rng: np.random.Generator,
                       *, return_attempts: bool = False):
    """Galton-Watson tree conditioned on exactly ``spec.n`` vertices of type ``spec.which``."""
    if not lattice_feasible(law, spec.which, spec.n):
        raise LatticeInfeasible(
            f"no tree has exactly {spec.n} vertices of type {spec.which!r} under this support")
    if spec.method == "vervaat":
        vals, attempts = _draw_conditioned_steps(law, spec.which, spec.n, rng, spec.max_attempts)
        tree = PlaneTree(cyclic_shift_to_excursion(vals))
    else:
        cap = spec.n if spec.which == "all" else spec.size_cap
        tree = None
        for attempts in range(1, spec.max_attempts + 1):
            t = sample_bgw(law, rng, cap, which=spec.which, stop_above=spec.n)
            if t is not None and t.count(spec.which) == spec.n:
                tree = t
                break
        if tree is None:
            raise SamplingError(
                f"rejection failed after {spec.max_attempts} attempts (acceptance rate 0)",
                attempts=spec.max_attempts)
    return (tree, attempts) if return_attempts else tree


# ---------------------------------------------------------------------------
# enumeration (small exhaustive suites)


def enumerate_trees(n_edges: int):
    """Yield every plane tree with ``n_edges`` edges, in lexicographic order of ``k``."""
    n = n_edges + 1
    k = [0] * n

    def rec(j: int, height: int):
        remaining = n - j
        if remaining == 0:
            if height == -1:
                yield PlaneTree(k)
            return
        # we must still be able to drop from height to -1 with the remaining steps
        for kj in range(0, n):
            h = height + kj - 1
            if h < -1 or (h == -1 and remaining > 1):
                continue
            if h + 1 > remaining - 1:
                break
            k[j] = kj
            yield from rec(j + 1, h)

    yield from rec(0, 0)
