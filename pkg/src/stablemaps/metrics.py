"""Distances in sampled maps and their rescaled counterparts."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .bijection import PointedMap, tree_to_map
from .labels import LabelledTree, label_tree
from .seeds import rng_for
from .trees import ConditioningSpec, height_process, lukasiewicz, sample_conditioned
from .weights import OffspringLaw, normalizer

__all__ = [
    "ProfileMeasure",
    "RescaledProcesses",
    "BoundReport",
    "SweepResult",
    "bfs",
    "radius_delta_profile",
    "profile_functional",
    "label_distance",
    "dl_bound_check",
    "rescaled_processes",
    "pointed_bias",
    "scaling_sweep",
    "summarise_sweep",
    "sweep_cell",
    "fit_slope",
]

_BFS_CHUNK = 256


def bfs(m: PointedMap, source) -> np.ndarray:
    """Graph distances from ``source``; a sequence of sources gives one row each."""
    src = np.atleast_1d(np.asarray(source, dtype=np.int64))
    rows = []
    for a in range(0, src.size, _BFS_CHUNK):
        d = shortest_path(m.adjacency, unweighted=True, directed=False, indices=src[a:a + _BFS_CHUNK])
        if np.any(np.isinf(d)):
            raise ValueError("map is not connected")
        rows.append(d.astype(np.int64))
    out = np.vstack(rows)
    return out[0] if np.ndim(source) == 0 else out


@dataclass(frozen=True)
class ProfileMeasure:
    """``counts[k]`` = number of vertices at distance ``k`` from the star."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def radius(self) -> int:
        return int(self.counts.size) - 1


def radius_delta_profile(m: PointedMap) -> tuple[int, int, ProfileMeasure]:
    d = m.dist_to_star
    rho = np.bincount(d)
    return int(d.max()), int(d[m.e_plus]), ProfileMeasure(rho)


def profile_functional(rho: ProfileMeasure | np.ndarray, phi: Callable | np.ndarray, b: float) -> float:
    """``(1/V) sum_k phi(k / sqrt(b)) rho(k)``; ``phi`` is a callable or a table indexed by ``k``."""
    if b <= 0:
        raise ValueError("B must be positive")
    counts = rho.counts if isinstance(rho, ProfileMeasure) else np.asarray(rho)
    ks = np.arange(counts.size)
    if callable(phi):
        vals = np.asarray(phi(ks / math.sqrt(b)), dtype=float) * np.ones(ks.size)
    else:
        vals = np.asarray(phi, dtype=float)[: counts.size]
    return float(np.dot(vals, counts) / counts.sum())


class _RangeMin:
    """Sparse table for O(1) range minima."""

    def __init__(self, values: np.ndarray):
        self.levels = [np.asarray(values)]
        j = 1
        while 2 * j <= values.size:
            prev = self.levels[-1]
            self.levels.append(np.minimum(prev[:-j], prev[j:]))
            j *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Minimum over the closed ranges ``[lo, hi]``."""
        length = hi - lo + 1
        lev = np.floor(np.log2(length)).astype(np.int64)
        out = np.empty(lo.shape, dtype=self.levels[0].dtype)
        for L in np.unique(lev):
            sel = lev == L
            tab = self.levels[L]
            out[sel] = np.minimum(tab[lo[sel]], tab[hi[sel] - (1 << L) + 1])
        return out


def label_distance(labels: np.ndarray, i, j) -> np.ndarray:
    """``D_L(i, j) = L(i) + L(j) - 2 max(min over [i, j], min over the rest)``.

    Here "the rest" is the cyclic complement ``[0, i] u [j, N]``.
    """
    labels = np.asarray(labels)
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    rm = _RangeMin(labels)
    inside = rm.query(lo, hi)
    pre = np.minimum.accumulate(labels)
    suf = np.minimum.accumulate(labels[::-1])[::-1]
    outside = np.minimum(pre[lo], suf[hi])
    return labels[i] + labels[j] - 2 * np.maximum(inside, outside)


@dataclass
class BoundReport:
    pairs: np.ndarray
    d: np.ndarray
    dl: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.d > self.dl + 2))

    @property
    def ok(self) -> bool:
        return self.violations == 0

    @property
    def max_slack(self) -> int:
        """Largest ``d - D_L``; the bound says it never exceeds 2."""
        return int((self.d - self.dl).max()) if self.d.size else 0


def dl_bound_check(lt: LabelledTree, m: PointedMap, pairs) -> BoundReport:
    """Check ``d(phi(u_i), phi(u_j)) <= D_L(i, j) + 2`` with integer arithmetic.

    ``phi`` sends an internal vertex to the leaf class it was merged into.
    """
    if m.tree_class is None:
        raise ValueError("map lacks the tree-vertex correspondence")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    vi = m.tree_class[pairs[:, 0]]
    vj = m.tree_class[pairs[:, 1]]
    srcs, inv = np.unique(vi, return_inverse=True)
    dist_rows = bfs(m, srcs)
    d = dist_rows[inv, vj]
    dl = label_distance(lt.labels, pairs[:, 0], pairs[:, 1])
    return BoundReport(pairs, d, dl)


@dataclass(frozen=True)
class RescaledProcesses:
    t: np.ndarray
    H: np.ndarray
    L: np.ndarray
    W: np.ndarray
    B: float
    d: np.ndarray | None = None
    d_pairs: np.ndarray | None = None


def rescaled_processes(lt: LabelledTree, B: float, grid: int | np.ndarray = 1000,
                       m: PointedMap | None = None, pairs=None) -> RescaledProcesses:
    """``H(zeta t) B / zeta``, ``L(zeta t) / sqrt(B)`` and ``W(zeta t) / B`` on ``[0, 1]``.

    ``H`` and ``L`` interpolate linearly, ``W`` is a step function.  With a
    map and integer time pairs, also returns the rescaled distances
    ``d(phi(u_i), phi(u_j)) / sqrt(B)``.
    """
    if B <= 0:
        raise ValueError("B must be positive")
    tree = lt.tree
    zeta = tree.n_edges
    t = np.linspace(0.0, 1.0, grid + 1) if np.ndim(grid) == 0 else np.asarray(grid, dtype=float)
    s = t * zeta
    h = height_process(tree).at(s)
    lab = np.interp(s, np.arange(tree.n_vertices), lt.labels.astype(float))
    w = lukasiewicz(tree).at(s)
    d = dp = None
    if m is not None and pairs is not None:
        dp = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        vi = m.tree_class[dp[:, 0]]
        vj = m.tree_class[dp[:, 1]]
        srcs, inv = np.unique(vi, return_inverse=True)
        d = bfs(m, srcs)[inv, vj] / math.sqrt(B)
    return RescaledProcesses(t, h * B / zeta, lab / math.sqrt(B), w / B, float(B), d, dp)


def _bias_statistic(leaf_counts: np.ndarray) -> float:
    x = 1.0 / np.asarray(leaf_counts, dtype=float)
    if x.size < 2 or np.all(x == x[0]):
        return 0.0
    return float(np.mean(np.abs(x / x.mean() - 1.0)))


def pointed_bias(law: OffspringLaw, spec: ConditioningSpec, samples: int, seed: int = 0,
                 *, return_counts: bool = False):
    """Monte Carlo ``E| (1/lambda) / E[1/lambda] - 1 |`` over conditioned trees."""
    if samples < 1:
        raise ValueError("need at least one sample")
    counts = np.empty(samples, dtype=np.int64)
    for r in range(samples):
        tree = sample_conditioned(law, spec, rng_for(seed, spec.n, r, "tree"))
        counts[r] = tree.n_leaves
    stat = _bias_statistic(counts)
    return (stat, counts) if return_counts else stat


def fit_slope(ns: np.ndarray, means: np.ndarray) -> tuple[float, float]:
    """OLS of ``log mean`` on ``log n``: ``(slope, intercept)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


@dataclass
class SweepResult:
    rows: list[dict] = field(default_factory=list)
    slope: float = math.nan
    slope_se: float = math.nan
    predicted: float = math.nan
    flagged: bool = False

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def means(self, name: str = "R") -> tuple[np.ndarray, np.ndarray]:
        ns = np.array(sorted({r["n"] for r in self.rows}))
        vals = self.column(name)
        col_n = self.column("n")
        return ns, np.array([vals[col_n == n].mean() for n in ns])

    def within(self, k_se: float = 2.0) -> bool:
        return abs(self.slope - self.predicted) <= k_se * self.slope_se


def sweep_cell(law: OffspringLaw, which: str, n: int, rep: int, seed: int,
               build_map: bool = False) -> dict:
    """One replicate: sample, label, and read off radius statistics."""
    t0 = time.perf_counter()
    tree = sample_conditioned(law, ConditioningSpec(which, n), rng_for(seed, n, rep, "tree"))
    lt = label_tree(tree, rng_for(seed, n, rep, "labels"))
    lab = lt.labels
    lo = int(lab.min())
    R = int(lab.max()) - lo + 1
    delta = 1 - lo
    if build_map:
        m = tree_to_map(lt)
        R2, delta2, _ = radius_delta_profile(m)
        if (R2, delta2) != (R, delta):
            raise AssertionError("label and map radius disagree")
    return {
        "seed": seed, "n": n, "rep": rep, "zeta": tree.n_edges, "R": R, "Delta": delta,
        "lambda": tree.n_leaves, "runtime": time.perf_counter() - t0,
    }


def summarise_sweep(law: OffspringLaw, rows: list[dict], ns: Sequence[int], seed: int = 0,
                    *, reps: int | None = None, n_boot: int = 1000) -> SweepResult:
    """Regress ``log mean R`` on ``log n`` with replicate-bootstrap standard errors.

    The predicted slope is ``1 / (2 alpha)``.  Fewer than 100 replicates per
    point sets ``flagged``.
    """
    ns_arr = np.array(sorted(set(int(n) for n in ns)))
    res = SweepResult(rows=list(rows), predicted=1.0 / (2.0 * law.alpha))
    R = res.column("R").astype(float)
    col_n = res.column("n")
    groups = [R[col_n == n] for n in ns_arr]
    res.flagged = (min(g.size for g in groups) if reps is None else reps) < 100
    res.slope, _ = fit_slope(ns_arr, [g.mean() for g in groups])
    brng = rng_for(seed, 0, 0, "bootstrap")
    boots = np.empty(n_boot)
    for b in range(n_boot):
        means = [g[brng.integers(0, g.size, g.size)].mean() for g in groups]
        boots[b] = fit_slope(ns_arr, means)[0]
    res.slope_se = float(boots.std(ddof=1))
    return res


def scaling_sweep(law: OffspringLaw, which: str, ns: Sequence[int], reps: int, seed: int = 0,
                  *, n_boot: int = 1000, build_maps: bool = False, on_row=None) -> SweepResult:
    """Sample ``reps`` replicates per ``n`` and summarise with :func:`summarise_sweep`."""
    rows = []
    for n in ns:
        for r in range(reps):
            row = sweep_cell(law, which, int(n), r, seed, build_maps)
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return summarise_sweep(law, rows, ns, seed, reps=reps, n_boot=n_boot)
