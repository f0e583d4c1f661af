"""Grid samplers for the continuum excursion, height and label processes.

For ``alpha = 2`` the excursion and height are both ``sqrt(2)`` times a
standard Brownian excursion and the label field is the Brownian snake head.
For ``alpha < 2`` a conditioned random walk stands in for the stable
excursion and labels come from the jump series with Brownian bridges.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .trees import ConditioningSpec, height_process, lukasiewicz, sample_conditioned
from .weights import OffspringLaw, normalizer

__all__ = [
    "ContinuumPath",
    "NumericError",
    "brownian_excursion",
    "snake_covariance",
    "snake_head",
    "stable_proxy_excursion",
    "stable_label_field",
    "LabelField",
]

MAX_SNAKE_GRID = 4096


class NumericError(ArithmeticError):
    pass


@dataclass
class ContinuumPath:
    t: np.ndarray
    X: np.ndarray
    H: np.ndarray
    L: np.ndarray | None
    alpha: float
    provenance: Literal["exact-gaussian", "walk-proxy"]
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.t.size - 1


def _vervaat(bridge: np.ndarray) -> np.ndarray:
    """Cyclic shift of a bridge (first and last values equal) at its minimum."""
    core = bridge[:-1]
    tau = int(np.argmin(core))
    shifted = np.concatenate([core[tau:], core[:tau]]) - core[tau]
    return np.append(shifted, 0.0)


def brownian_excursion(m: int, rng: np.random.Generator) -> ContinuumPath:
    """``sqrt(2)`` times a standard Brownian excursion on ``m + 1`` grid points."""
    if m < 2:
        raise ValueError("m must be at least 2")
    t = np.linspace(0.0, 1.0, m + 1)
    walk = np.concatenate([[0.0], np.cumsum(rng.standard_normal(m) * math.sqrt(1.0 / m))])
    bridge = walk - t * walk[-1]
    e = math.sqrt(2.0) * _vervaat(bridge)
    e[0] = e[-1] = 0.0
    return ContinuumPath(t, e, e.copy(), None, 2.0, "exact-gaussian")


def snake_covariance(H: np.ndarray) -> np.ndarray:
    """``(2/3) min_{[s ^ t, s v t]} H`` on the grid."""
    H = np.asarray(H, dtype=float)
    n = H.size
    K = np.empty((n, n))
    for i in range(n):
        K[i, i:] = np.minimum.accumulate(H[i:])
        K[i, :i] = K[:i, i]
    return (2.0 / 3.0) * K


def snake_head(H: np.ndarray, rng: np.random.Generator, *, method: str = "cholesky",
               max_jitter_tries: int = 6) -> np.ndarray:
    """Centred Gaussian field with covariance :func:`snake_covariance`.

    ``method='cholesky'`` factorises the covariance restricted to points with
    positive height (others are pinned to 0), adding jitter
    ``1e-12 * trace / m`` and growing it tenfold on failure.
    ``method='sequential'`` walks the tree coded by ``H`` and is exact too.
    """
    H = np.asarray(H, dtype=float)
    if H.size and H[0] != 0:
        raise ValueError("H must start at 0")
    if np.any(H < 0):
        raise ValueError("H must be non-negative")
    if method == "sequential":
        return _snake_sequential(H, rng)
    if method != "cholesky":
        raise ValueError(f"unknown method {method!r}")
    if H.size > MAX_SNAKE_GRID + 1:
        raise ValueError(f"dense factorisation is capped at {MAX_SNAKE_GRID} grid steps")
    L = np.zeros(H.size)
    live = np.flatnonzero(H > 0)
    if live.size == 0:
        return L
    K = snake_covariance(H[live[0]: live[-1] + 1])[np.ix_(live - live[0], live - live[0])]
    jitter = 1e-12 * np.trace(K) / live.size
    for _ in range(max_jitter_tries):
        try:
            chol = np.linalg.cholesky(K + jitter * np.eye(live.size))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    else:
        w = np.linalg.eigvalsh(K)
        raise NumericError(
            f"factorisation failed; smallest eigenvalue {w[0]:.3e}, condition {w[-1] / max(abs(w[0]), 1e-300):.3e}")
    L[live] = chol @ rng.standard_normal(live.size)
    return L


def _snake_sequential(H: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    var = 2.0 / 3.0
    out = np.zeros(H.size)
    stack_h = [0.0]
    stack_v = [0.0]
    z = rng.standard_normal(2 * H.size)
    zi = 0
    h = H.tolist()
    for i in range(1, len(h)):
        low = min(h[i - 1], h[i])
        last_h = last_v = None
        while stack_h[-1] > low:
            last_h = stack_h.pop()
            last_v = stack_v.pop()
        if stack_h[-1] < low:
            # branch point strictly inside a segment: interpolate by a Brownian bridge
            ha, va = stack_h[-1], stack_v[-1]
            frac = (low - ha) / (last_h - ha)
            sd = math.sqrt(var * (low - ha) * (last_h - low) / (last_h - ha))
            stack_h.append(low)
            stack_v.append(va + frac * (last_v - va) + sd * z[zi])
            zi += 1
        if h[i] > low:
            stack_h.append(h[i])
            stack_v.append(stack_v[-1] + math.sqrt(var * (h[i] - low)) * z[zi])
            zi += 1
        out[i] = stack_v[-1]
    return out


def stable_proxy_excursion(law: OffspringLaw, m: int, rng: np.random.Generator) -> ContinuumPath:
    """Rescaled Łukasiewicz path and height process of a conditioned tree with ``m`` vertices."""
    if not law.alpha < 2:
        raise ValueError("the walk proxy is meant for alpha < 2")
    tree = sample_conditioned(law, ConditioningSpec("all", m), rng)
    w = lukasiewicz(tree).values  # length m + 1, ends at -1
    h = np.append(height_process(tree).values, 0)
    B = float(normalizer(law)(m))
    t = np.linspace(0.0, 1.0, m + 1)
    return ContinuumPath(t, w / B, h * B / m, None, law.alpha, "walk-proxy",
                         {"B": B, "W": w, "tree": tree})


@dataclass
class LabelField:
    L: np.ndarray
    jump_steps: np.ndarray
    jump_sizes: np.ndarray
    tail_bound: float


def stable_label_field(path: ContinuumPath, K: int, rng: np.random.Generator,
                       eps: float = 0.01) -> LabelField:
    """Truncated jump series ``sqrt(2) sum_i dX_i^(1/2) b_i((I - X_{t_i-}) / dX_i)``.

    Jumps are grid increments larger than ``eps``; the ``K`` largest are used
    and the sum of the others is reported as ``tail_bound``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    X = np.asarray(path.X, dtype=float)
    inc = np.diff(X)
    cand = np.flatnonzero(inc > eps)
    L = np.zeros(X.size)
    if cand.size == 0:
        warnings.warn("no jumps above the threshold; returning a zero field", RuntimeWarning)
        return LabelField(L, cand, np.zeros(0), 0.0)
    order = cand[np.argsort(-inc[cand], kind="stable")]
    used = order[:K]
    positive = inc[inc > 0]
    tail = float(positive.sum() - inc[used].sum())
    for j in used.tolist():
        dx = inc[j]
        before = X[j]
        seg = X[j + 1:]
        runmin = np.minimum.accumulate(seg)
        inside = runmin >= before
        stop = int(np.argmin(inside)) if not inside.all() else seg.size
        if stop == 0:
            continue
        u = np.clip((runmin[:stop] - before) / dx, 0.0, 1.0)
        uniq, inv = np.unique(u, return_inverse=True)
        pts = np.append(uniq, 1.0) if uniq[-1] < 1.0 else uniq
        gaps = np.diff(np.concatenate([[0.0], pts]))
        bm = np.cumsum(rng.standard_normal(pts.size) * np.sqrt(gaps))
        bridge = bm - pts * bm[-1]
        L[j + 1: j + 1 + stop] += math.sqrt(2.0 * dx) * bridge[: uniq.size][inv]
    return LabelField(L, used, inc[used], max(tail, 0.0))
