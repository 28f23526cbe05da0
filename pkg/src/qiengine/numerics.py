"""Numerical kernels: adaptive Gauss-Kronrod quadrature, the standard normal
CDF and log-space two-outcome normalization."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class NonConvergence(RuntimeError):
    """Adaptive quadrature ran out of subdivisions before meeting tolerance."""


class InvalidInput(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200
    # truncation of (-inf, inf) integrals, in meter standard deviations
    window_sigmas: float = 10.0

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise InvalidInput(f"abs_tol must be > 0, got {self.abs_tol}")
        if not self.rel_tol > 0:
            raise InvalidInput(f"rel_tol must be > 0, got {self.rel_tol}")
        if int(self.max_subdivisions) != self.max_subdivisions or self.max_subdivisions < 1:
            raise InvalidInput(f"max_subdivisions must be an integer >= 1, got {self.max_subdivisions}")
        if not self.window_sigmas >= 5:
            raise InvalidInput(f"window_sigmas must be >= 5, got {self.window_sigmas}")


# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15 values).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod abscissae (0.949.., 0.741.., 0.405.., 0)
_GAUSS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(f, lo, hi):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    y = np.asarray(f(mid + half * _NODES), dtype=float)
    if y.shape != _NODES.shape:
        y = np.broadcast_to(y, _NODES.shape)
    if not np.all(np.isfinite(y)):
        raise InvalidInput(f"integrand not finite on [{lo}, {hi}]")
    k = half * float(_KRONROD @ y)
    g = half * float(_GAUSS @ y)
    return k, abs(k - g)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    cfg: QuadratureConfig = QuadratureConfig(),
    points: Iterable[float] = (),
) -> float:
    """Integrate ``f`` over ``[lo, hi]`` by globally adaptive G7-K15.

    ``f`` is called with a numpy array of 15 abscissae and must return an
    array of the same shape. ``points`` are interior breakpoints (kinks,
    peaks) used to seed the subdivision; points outside ``(lo, hi)`` are
    ignored. The per-interval error estimate is |K15 - G7|.
    """
    if not lo < hi:
        raise InvalidInput(f"need lo < hi, got [{lo}, {hi}]")
    edges = sorted({lo, hi, *(float(p) for p in points if lo < p < hi)})

    heap = []  # (-err, lo, hi, value)
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = _gk15(f, a, b)
        heapq.heappush(heap, (-e, a, b, v))
        total += v
        err += e

    n = len(heap)
    while err > max(cfg.abs_tol, cfg.rel_tol * abs(total)):
        if n >= cfg.max_subdivisions:
            raise NonConvergence(
                f"error estimate {err:.3e} above tolerance after {n} subintervals on [{lo}, {hi}]"
            )
        e_old, a, b, v_old = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not a < m < b:
            raise NonConvergence(f"interval [{a}, {b}] cannot be bisected further")
        v1, e1 = _gk15(f, a, m)
        v2, e2 = _gk15(f, m, b)
        heapq.heappush(heap, (-e1, a, m, v1))
        heapq.heappush(heap, (-e2, m, b, v2))
        n += 1
        # re-sum instead of updating incrementally to keep roundoff out of the stopping test
        total = math.fsum(item[3] for item in heap)
        err = math.fsum(-item[0] for item in heap)
    return total


def std_normal_cdf(x):
    """Phi(x) via erfc, accurate in both tails. Accepts scalars or arrays."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))
    from scipy.special import ndtr

    return ndtr(np.asarray(x, dtype=float))


def log_conditionals(log_w0, log_w1):
    """Log of the normalized pair (w0, w1)/(w0 + w1), computed without leaving log space."""
    # work with the difference so large common offsets cancel exactly
    with np.errstate(invalid="ignore"):
        d = np.subtract(log_w1, log_w0)
    d = np.where(np.isnan(d), 0.0, d)  # both -inf or both +inf: equal weights
    return -np.logaddexp(0.0, d), -np.logaddexp(0.0, -d)


def stable_conditional(log_w0: float, log_w1: float) -> tuple[float, float]:
    """Normalize two log-weights into probabilities summing to exactly 1.0."""
    if log_w0 == -math.inf and log_w1 == -math.inf:
        raise InvalidInput("both log-weights are -inf")
    if math.isnan(log_w0) or math.isnan(log_w1):
        raise InvalidInput("log-weight is NaN")
    lp0, lp1 = log_conditionals(log_w0, log_w1)
    # exponentiate the smaller one only; 1 - s is then exact enough that (1 - s) + s == 1.0
    if lp0 <= lp1:
        p0 = math.exp(lp0)
        return p0, 1.0 - p0
    p1 = math.exp(lp1)
    return 1.0 - p1, p1


def binary_entropy(a: float, b: float) -> float:
    """-(a ln a + b ln b) in nats, with 0 ln 0 = 0."""
    return -sum(w * math.log(w) for w in (a, b) if w > 0)


def grid(start: float, stop: float, count: int, spacing: str = "linear") -> np.ndarray:
    if count < 2 or not start < stop:
        raise InvalidInput(f"bad grid: start={start}, stop={stop}, count={count}")
    if spacing == "linear":
        return np.linspace(start, stop, count)
    if spacing == "log":
        if start <= 0:
            raise InvalidInput("log grid needs start > 0")
        return np.geomspace(start, stop, count)
    raise InvalidInput(f"unknown spacing {spacing!r}")


def is_nondecreasing(values: Sequence[float], slack: float = 0.0) -> bool:
    return all(b >= a - slack for a, b in zip(values[:-1], values[1:]))
