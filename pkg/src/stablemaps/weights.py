"""Boltzmann weight sequences, criticality and the induced offspring law.

A weight sequence ``q = (q_k)_{k>=1}`` is turned into the power series

    g(x) = sum_{k>=0} x^k C(2k-1, k-1) q_k,      q_0 = 1,

and ``q`` is admissible and critical when the graph of ``g`` is tangent to
the diagonal.  At the tangency point ``Z`` the numbers
``mu(k) = Z^(k-1) C(2k-1, k-1) q_k`` form a mean-one offspring law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.special import gammaln, zeta

__all__ = [
    "PowerTail",
    "WeightSeq",
    "CriticalityReport",
    "OffspringLaw",
    "Normalizer",
    "WeightsError",
    "eval_g",
    "eval_dg",
    "classify",
    "offspring_law",
    "weights_from_offspring",
    "make_stable_offspring",
    "normalizer",
    "log_binom_faces",
]

DEFAULT_K_MAX = 1_000_000
_EXACT_BINOM_UP_TO = 30


class WeightsError(ValueError):
    """Raised for inconsistent, divergent or non-critical weight data."""


def log_binom_faces(k):
    """``log C(2k-1, k-1)`` for integer ``k >= 1`` (vectorised)."""
    k = np.asarray(k, dtype=float)
    return gammaln(2 * k) - gammaln(k) - gammaln(k + 1)


def _binom_faces(k: int) -> float:
    if k <= _EXACT_BINOM_UP_TO:
        return float(math.comb(2 * k - 1, k - 1))
    return math.exp(float(log_binom_faces(k)))


@dataclass(frozen=True)
class PowerTail:
    """Exact power tail ``P(xi >= j) = constant * j**(-alpha)`` for ``j >= start``."""

    alpha: float
    constant: float
    start: int

    def mass(self, k):
        k = np.asarray(k, dtype=float)
        return self.constant * (k ** -self.alpha - (k + 1) ** -self.alpha)

    def sf(self, j):
        return self.constant * np.asarray(j, dtype=float) ** -self.alpha

    def first_moment(self) -> float:
        # sum_{k>=j0} k P(xi=k) = j0 P(xi>=j0) + sum_{j>j0} P(xi>=j)
        j0, a = self.start, self.alpha
        return self.constant * (j0 ** (1 - a) + float(zeta(a, j0 + 1)))


@dataclass(frozen=True)
class WeightSeq:
    """Non-negative Boltzmann weights ``q_k``, ``k >= 1``.

    ``entries`` holds finitely many explicit weights.  An optional ``tail``
    rule generates ``q_k`` for ``k >= tail.start`` as

        q_k = c (k^-a - (k+1)^-a) r^(1-k) / C(2k-1, k-1)

    with ``r = radius``; the series ``g`` then has radius of convergence ``r``.
    ``k_max`` bounds the explicit part of any series evaluation.
    """

    entries: dict[int, float] = field(default_factory=dict)
    tail: PowerTail | None = None
    radius: float | None = None
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        clean = {}
        for k, v in self.entries.items():
            k = int(k)
            v = float(v)
            if k < 1:
                raise WeightsError(f"weights are indexed by k >= 1, got k={k}")
            if v < 0 or not math.isfinite(v):
                raise WeightsError(f"q_{k} must be finite and non-negative, got {v}")
            if v > 0:
                clean[k] = v
        object.__setattr__(self, "entries", dict(sorted(clean.items())))
        if self.tail is not None:
            if self.radius is None or self.radius <= 0:
                raise WeightsError("a tail rule needs a positive radius")
            if any(k >= self.tail.start for k in self.entries):
                raise WeightsError("explicit entries overlap the tail rule")
        if not self.entries and self.tail is None:
            raise WeightsError("need at least one positive weight")

    @property
    def is_finite(self) -> bool:
        return self.tail is None

    @property
    def is_nontrivial(self) -> bool:
        """True when some face of degree at least 6 carries weight.

        Quadrangulation-only sequences are accepted but flagged here.
        """
        return self.tail is not None or any(k >= 3 for k in self.entries)

    def q(self, k: int) -> float:
        if k == 0:
            return 1.0
        if k in self.entries:
            return self.entries[k]
        if self.tail is not None and k >= self.tail.start:
            lq = (math.log(float(self.tail.mass(k))) + (1 - k) * math.log(self.radius)
                  - float(log_binom_faces(k)))
            return math.exp(lq)
        return 0.0


def _explicit_terms(q: WeightSeq, x: float, order: int) -> float:
    total = 1.0 if order == 0 else 0.0
    for k, qk in q.entries.items():
        if order == 1 and k == 0:
            continue
        if x == 0.0:
            if k - order == 0:
                total += k * _binom_faces(k) * qk if order else 0.0
            continue
        if k <= _EXACT_BINOM_UP_TO:
            term = _binom_faces(k) * qk * x ** (k - order)
        else:
            term = math.exp((k - order) * math.log(x) + float(log_binom_faces(k)) + math.log(qk))
        total += term * (k if order else 1)
    return total


def _tail_terms(q: WeightSeq, x: float, order: int) -> tuple[float, float]:
    """Tail contribution and an upper bound on what truncation left out."""
    tail, r = q.tail, q.radius
    s = x / r
    if s > 1.0 + 1e-15:
        raise WeightsError(f"x={x} is beyond the radius of convergence {r}")
    s = min(s, 1.0)
    j0, K = tail.start, max(q.k_max, tail.start)
    if s == 1.0:
        # closed forms at the radius
        if order == 0:
            return r * float(tail.sf(j0)), 0.0
        return tail.first_moment(), 0.0
    if s == 0.0:
        return 0.0, 0.0
    ks = np.arange(j0, K + 1, dtype=float)
    masses = tail.mass(ks)
    logs = math.log(s)
    if order == 0:
        body = float(np.sum(r * masses * np.exp(ks * logs)))
        bound = r * s ** (K + 1) * float(tail.sf(K + 1))
    else:
        body = float(np.sum(ks * masses * np.exp((ks - 1) * logs)))
        bound = s ** K * tail.constant * ((K + 1) ** (1 - tail.alpha) + float(zeta(tail.alpha, K + 2)))
    return body, bound


def _series(q: WeightSeq, x: float, order: int) -> tuple[float, float]:
    if x < 0:
        raise WeightsError("g is only evaluated at x >= 0")
    value = _explicit_terms(q, x, order)
    if not math.isfinite(value):
        raise WeightsError(f"series diverges at x={x}: beyond radius of convergence")
    bound = 0.0
    if q.tail is not None:
        extra, bound = _tail_terms(q, x, order)
        value += extra
    return value, bound


def eval_g(q: WeightSeq, x: float, *, with_bound: bool = False):
    """Evaluate ``g_q(x)``; ``g_q(0) == 1`` exactly.

    With ``with_bound=True`` returns ``(value, truncation_error_bound)``.
    """
    value, bound = _series(q, float(x), 0)
    return (value, bound) if with_bound else value


def eval_dg(q: WeightSeq, x: float, *, with_bound: bool = False):
    """Evaluate the derivative ``g_q'(x)``."""
    value, bound = _series(q, float(x), 1)
    return (value, bound) if with_bound else value


Classification = Literal["critical", "subcritical-admissible", "non-admissible"]


@dataclass(frozen=True)
class CriticalityReport:
    classification: Classification
    z: float | None
    residual_g: float
    residual_dg: float

    @property
    def is_critical(self) -> bool:
        return self.classification == "critical"

    def as_dict(self) -> dict:
        return {
            "classification": self.classification,
            "Z_q": self.z,
            "residual_g": self.residual_g,
            "residual_dg": self.residual_dg,
        }


def _bisect(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-12) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= xtol * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _second_derivative(q: WeightSeq, x: float) -> float:
    total = 0.0
    for k, qk in q.entries.items():
        if k >= 2:
            total += k * (k - 1) * _binom_faces(k) * qk * x ** (k - 2)
    return total


def classify(q: WeightSeq, tol: float = 1e-10) -> CriticalityReport:
    """Locate the fixed points of ``g_q`` and decide admissibility/criticality.

    ``g_q`` is convex, so ``g_q' - 1`` is increasing: we first locate the point
    where ``g_q' = 1`` (bisection, then Newton), and the sign of ``g_q - x``
    there decides between two crossings, a tangency or no fixed point.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    h = lambda x: eval_g(q, x) - x
    dh = lambda x: eval_dg(q, x) - 1.0

    if q.radius is not None:
        r = q.radius
        if dh(r) <= 0:
            # g' stays below 1 on [0, r]: the minimum of g - x sits at r
            hr = h(r)
            if abs(hr) <= tol and abs(dh(r)) <= tol:
                return CriticalityReport("critical", r, abs(hr), abs(dh(r)))
            if hr < 0:
                z = _bisect(h, 0.0, r)
                return CriticalityReport("subcritical-admissible", z, abs(h(z)), abs(dh(z)))
            return CriticalityReport("non-admissible", None, hr, abs(dh(r)))
        hi = r
    else:
        hi = 1.0
        while dh(hi) < 0:
            hi *= 2.0
            if hi > 1e12:
                raise WeightsError("derivative never reaches 1")
    x_star = _bisect(dh, 0.0, hi)
    if q.tail is None:
        for _ in range(5):
            d2 = _second_derivative(q, x_star)
            if d2 <= 0:
                break
            step = dh(x_star) / d2
            x_star -= step
            if abs(step) < 1e-16 * max(1.0, x_star):
                break
    h_star = h(x_star)
    if abs(h_star) <= tol and abs(dh(x_star)) <= tol:
        return CriticalityReport("critical", x_star, abs(h_star), abs(dh(x_star)))
    if h_star < 0:
        z = _bisect(h, 0.0, x_star)
        return CriticalityReport("subcritical-admissible", z, abs(h(z)), abs(dh(z)))
    return CriticalityReport("non-admissible", None, h_star, abs(dh(x_star)))


@dataclass(frozen=True)
class OffspringLaw:
    """Law of ``xi`` on ``{0, 1, 2, ...}``.

    ``head[k]`` is ``P(xi = k)`` for ``k < len(head)``; when ``tail`` is set
    its ``start`` equals ``len(head)`` and it carries the remaining mass.
    """

    head: np.ndarray
    tail: PowerTail | None = None

    def __post_init__(self):
        head = np.asarray(self.head, dtype=float)
        if head.ndim != 1 or head.size == 0:
            raise WeightsError("head must be a non-empty 1-d table")
        if np.any(head < 0):
            raise WeightsError("negative probability")
        if self.tail is not None and self.tail.start != head.size:
            raise WeightsError("tail must start right after the head table")
        if self.tail is None:
            nz = np.flatnonzero(head)
            head = head[: nz[-1] + 1] if nz.size else head[:1]
        head.setflags(write=False)
        object.__setattr__(self, "head", head)

    # -- basic quantities -------------------------------------------------
    @property
    def support_max(self) -> float:
        return math.inf if self.tail is not None else self.head.size - 1

    @property
    def alpha(self) -> float:
        return self.tail.alpha if self.tail is not None else 2.0

    def pmf(self, k):
        k = np.asarray(k)
        out = np.zeros(k.shape, dtype=float)
        inside = (k >= 0) & (k < self.head.size)
        out[inside] = self.head[k[inside]]
        if self.tail is not None:
            t = k >= self.tail.start
            out[t] = self.tail.mass(k[t])
        return out if out.ndim else float(out)

    def sf(self, j):
        """``P(xi >= j)``."""
        j = np.asarray(j)
        csum = np.concatenate([[0.0], np.cumsum(self.head)])
        tail_mass = float(self.tail.sf(self.tail.start)) if self.tail is not None else 0.0
        total = csum[-1] + tail_mass
        out = np.empty(j.shape, dtype=float)
        low = j <= 0
        out[low] = total
        mid = (j > 0) & (j < self.head.size)
        out[mid] = total - csum[j[mid]]
        hi = j >= self.head.size
        if self.tail is not None:
            out[hi] = self.tail.sf(np.maximum(j[hi], self.tail.start))
        else:
            out[hi] = 0.0
        return out if out.ndim else float(out)

    @property
    def total_mass(self) -> float:
        return float(self.sf(0))

    @property
    def mean(self) -> float:
        m = float(np.dot(np.arange(self.head.size), self.head))
        if self.tail is not None:
            m += self.tail.first_moment()
        return m

    @property
    def variance(self) -> float:
        if self.tail is not None and self.tail.alpha <= 2:
            return math.inf
        if self.tail is not None:
            raise WeightsError("only tails with alpha <= 2 are supported")
        k = np.arange(self.head.size)
        m = float(np.dot(k, self.head))
        return float(np.dot(k * k, self.head)) - m * m

    def truncated_variance(self, x: float) -> float:
        """``Var(xi * 1{xi <= x})``."""
        top = int(math.floor(x))
        if top < 0:
            return 0.0
        ks = np.arange(0, top + 1)
        p = self.pmf(ks)
        m1 = float(np.dot(ks, p))
        m2 = float(np.dot(ks.astype(float) ** 2, p))
        return m2 - m1 * m1

    def mass_of(self, which: str) -> float:
        """``mu(A)`` for ``which`` in ``{'all', 'leaves', 'internal'}``."""
        if which == "all":
            return self.total_mass
        if which == "leaves":
            return float(self.head[0])
        if which == "internal":
            return self.total_mass - float(self.head[0])
        raise ValueError(f"unknown set {which!r}")

    # -- sampling ---------------------------------------------------------
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """I.i.d. draws (inverse transform, exact for the power tail)."""
        counts, tail_values = self.sample_counts(rng, size, "all")
        values = np.concatenate([np.repeat(np.arange(self.head.size), counts), tail_values])
        rng.shuffle(values)
        return values

    def sample_counts(self, rng: np.random.Generator, size: int, which: str = "all"):
        """Draw ``size`` values from ``mu`` restricted to ``which``.

        Returns ``(counts, tail_values)``: multiplicities of each head value and
        the explicit list of tail values.  Order is not sampled.
        """
        head = self.head.copy()
        tail_mass = float(self.tail.sf(self.tail.start)) if self.tail is not None else 0.0
        if which == "leaves":
            head[1:] = 0.0
            tail_mass = 0.0
        elif which == "internal":
            head[0] = 0.0
        elif which != "all":
            raise ValueError(f"unknown set {which!r}")
        total = float(head.sum()) + tail_mass
        if total <= 0:
            raise WeightsError(f"mu({which}) = 0")
        n_tail = int(rng.binomial(size, tail_mass / total)) if tail_mass > 0 else 0
        hs = float(head.sum())
        if hs > 0:
            counts = rng.multinomial(size - n_tail, head / hs)
        else:
            counts = np.zeros(head.size, dtype=np.int64)
        if n_tail:
            j0 = self.tail.start
            u = 1.0 - rng.random(n_tail)
            tail_values = np.floor(j0 * u ** (-1.0 / self.tail.alpha))
            tail_values = np.minimum(tail_values, 2.0 ** 62).astype(np.int64)
        else:
            tail_values = np.zeros(0, dtype=np.int64)
        return counts, tail_values

    # -- misc -------------------------------------------------------------
    def lattice(self) -> tuple[int, int]:
        """``(offset, span)`` with support contained in ``offset + span * Z``."""
        support = list(np.flatnonzero(self.head))
        if self.tail is not None:
            support += [self.tail.start, self.tail.start + 1]
        span = 0
        for s in support[1:]:
            span = math.gcd(span, int(s - support[0]))
        return int(support[0]), span

    def check_critical(self, tol: float = 1e-9) -> None:
        if abs(self.total_mass - 1.0) > tol:
            raise WeightsError(f"total mass {self.total_mass!r} differs from 1")
        if abs(self.mean - 1.0) > tol:
            raise WeightsError(f"mean {self.mean!r} differs from 1")


def offspring_law(q: WeightSeq, report: CriticalityReport | None = None, tol: float = 1e-9) -> OffspringLaw:
    """The critical offspring law ``mu_q(k) = Z^(k-1) C(2k-1, k-1) q_k``."""
    if report is None:
        report = classify(q)
    if not report.is_critical:
        raise WeightsError(f"weights are {report.classification}, not critical")
    z = report.z
    tail = None
    if q.tail is not None and abs(z - q.radius) <= 1e-12 * q.radius:
        top = q.tail.start - 1
        tail = PowerTail(q.tail.alpha, q.tail.constant * q.radius / z, q.tail.start)
    elif q.tail is not None:
        top = q.k_max
    else:
        top = max(q.entries)
    head = np.zeros(top + 1)
    head[0] = 1.0 / z
    for k, qk in q.entries.items():
        if k <= top:
            head[k] = math.exp((k - 1) * math.log(z) + float(log_binom_faces(k)) + math.log(qk))
    if q.tail is not None and tail is None:
        ks = np.arange(q.tail.start, top + 1)
        head[ks] = q.tail.mass(ks) * np.exp((ks - 1) * math.log(z / q.radius))
    law = OffspringLaw(head, tail)
    try:
        law.check_critical(tol)
    except WeightsError as exc:
        raise WeightsError(f"inconsistent weights: {exc}") from None
    return law


def weights_from_offspring(mu: OffspringLaw, z: float | None = None, tol: float = 1e-9) -> WeightSeq:
    """Invert the weight-to-law map.

    Because ``q_0 = 1`` the fixed point is forced to ``Z = 1 / mu(0)``; an
    explicit ``z`` is accepted only if it agrees.
    """
    if abs(mu.mean - 1.0) > tol or abs(mu.total_mass - 1.0) > tol:
        raise WeightsError("offspring law must be a probability law with mean 1")
    p0 = float(mu.head[0])
    if p0 <= 0:
        raise WeightsError("mu(0) must be positive")
    z_forced = 1.0 / p0
    if z is None:
        z = z_forced
    elif abs(z - z_forced) > 1e-9 * z_forced:
        raise WeightsError(f"Z must equal 1/mu(0) = {z_forced}, got {z}")
    if z <= 1:
        raise WeightsError("Z must exceed 1")
    entries = {}
    logz = math.log(z)
    for k in range(1, mu.head.size):
        if mu.head[k] > 0:
            entries[k] = math.exp(math.log(mu.head[k]) + (1 - k) * logz - float(log_binom_faces(k)))
    if mu.tail is not None:
        return WeightSeq(entries, tail=mu.tail, radius=z)
    return WeightSeq(entries)


def make_stable_offspring(alpha: float, cutoff: int = 2) -> OffspringLaw:
    """A mean-one law in the domain of attraction of an ``alpha``-stable law.

    For ``alpha < 2`` the tail is exactly ``P(xi >= j) = c j^-alpha`` for
    ``j >= cutoff`` and the remaining mass sits at 0.  For ``alpha == 2`` the
    law has finite support ``{0} U [2, cutoff]`` with ``P(xi = j)`` proportional
    to ``j^-3`` there.
    """
    if not 1 < alpha <= 2:
        raise WeightsError("alpha must lie in (1, 2]")
    cutoff = int(cutoff)
    if alpha < 2:
        if cutoff < 1:
            raise WeightsError("cutoff must be at least 1")
        c = 1.0 / (cutoff ** (1 - alpha) + float(zeta(alpha, cutoff + 1)))
        tail = PowerTail(alpha, c, cutoff)
        head = np.zeros(cutoff)
        head[0] = 1.0 - float(tail.sf(cutoff))
        if head[0] <= 0:
            raise WeightsError("cannot tune the mean to 1 with this cutoff")
        return OffspringLaw(head, tail)
    if cutoff < 2:
        raise WeightsError("cutoff must be at least 2 for alpha = 2")
    ks = np.arange(2, cutoff + 1, dtype=float)
    w = ks ** -3.0
    c = 1.0 / float(np.dot(ks, w))
    head = np.zeros(cutoff + 1)
    head[2:] = c * w
    head[0] = 1.0 - float(head.sum())
    if head[0] <= 0:
        raise WeightsError("cannot tune the mean to 1 with this cutoff")
    return OffspringLaw(head)


@dataclass(frozen=True)
class Normalizer:
    """The scaling sequence ``B_n``.

    Finite variance: ``B_n = (n sigma^2 / 2)^(1/2)``.  Otherwise the tail
    quantile ``B_n = inf{x : P(xi > x) <= 1/n}``; it has the right order
    ``n^(1/alpha)`` but not the constant of the stable limit.
    """

    alpha: float
    sigma2: float | None
    law: OffspringLaw = field(repr=False)

    @property
    def rule(self) -> str:
        return "variance" if self.sigma2 is not None else "tail-quantile"

    def __call__(self, n):
        n_arr = np.asarray(n, dtype=float)
        if np.any(n_arr < 0):
            raise ValueError("n must be non-negative")
        if self.sigma2 is not None:
            out = np.sqrt(n_arr * self.sigma2 / 2.0)
        else:
            out = np.vectorize(self._quantile, otypes=[float])(n_arr)
        return out if out.ndim else float(out)

    def _quantile(self, n: float) -> float:
        if n == 0:
            return 0.0
        level = 1.0 / n
        # smallest integer x with P(xi >= x + 1) <= level
        head_sf = self.law.sf(np.arange(1, self.law.head.size + 1))
        hit = np.flatnonzero(head_sf <= level)
        if hit.size:
            return float(hit[0])
        tail = self.law.tail
        x = math.ceil((tail.constant / level) ** (1.0 / tail.alpha)) - 1
        while x > 0 and float(tail.sf(x)) <= level:
            x -= 1
        while float(tail.sf(x + 1)) > level:
            x += 1
        return float(max(x, self.law.head.size - 1))


def normalizer(mu: OffspringLaw) -> Normalizer:
    var = mu.variance
    if math.isfinite(var):
        return Normalizer(2.0, var, mu)
    return Normalizer(mu.alpha, None, mu)
