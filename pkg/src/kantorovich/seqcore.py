"""Negative-binomial weight sequences of the generalized Kantorovich operator.

For a parameter ``i >= 1`` and ``x`` in [0, 1) the operator uses two
sequences indexed by ``j = 0, 1, ...``:

* ``alpha_j(x) = (i+1) C(i+j+1, j) (1-x)^i x^j``, the density of the image
  of a point mass on the cell ``[j/(i+j), (j+1)/(i+j+1))``;
* ``beta_j(x) = C(i+j-1, j) (1-x)^i x^j``, the mass of that cell, i.e. the
  negative binomial pmf with shape ``i``.

Everything is evaluated in log space as ``shape*log1p(-x) + j*log(x)`` plus a
short product of ``log1p(j/k)`` terms, which stays accurate for j in the
millions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import betaln

from ._validation import (
    DomainError,
    check_half_open_unit,
    check_nonnegative_int,
    check_open_unit,
    check_positive_int,
    check_positive_real,
)

__all__ = [
    "KantorovichWeights",
    "log_binomial",
    "alpha_weights",
    "beta_weights",
    "negative_binomial_weights",
    "tail_bound",
    "truncation_index",
    "pivot_index",
    "argmax_indices",
    "window_mass",
    "cell_edges",
    "cell_widths",
    "kantorovich_weights",
]


def log_binomial(n: int, k: int) -> float:
    """Natural log of C(n, k), relative error around 1e-15."""
    n = check_nonnegative_int(n, "n")
    k = check_nonnegative_int(k, "k")
    if k > n:
        raise DomainError(f"k={k} exceeds n={n}")
    k = min(k, n - k)
    if k == 0:
        return 0.0
    if k <= 64:
        # short product, every term positive so no cancellation
        return math.fsum(math.log1p((n - k) / m) for m in range(1, k + 1))
    if n <= 5000:
        return math.log(math.comb(n, k))
    return -math.log(n + 1) - float(betaln(n - k + 1, k + 1))


def cell_edges(i: int, J: int) -> np.ndarray:
    """Left endpoints ``j/(i+j)`` for ``j = 0..J`` (J+1 values)."""
    j = np.arange(J + 1, dtype=float)
    return j / (i + j)


def cell_widths(i: int, J: int, start: int = 0) -> np.ndarray:
    """Cell lengths ``i/((i+j)(i+j+1))`` for ``j = start..start+J-1``."""
    j = np.arange(start, start + J, dtype=float)
    return i / ((i + j) * (i + j + 1.0))


def _log_products(shape_terms: int, j: np.ndarray) -> np.ndarray:
    # log prod_{k=1}^{m} (j+k)/k
    out = np.zeros_like(j, dtype=float)
    for k in range(1, shape_terms + 1):
        out += np.log1p(j / k)
    return out


def negative_binomial_weights(shape: int, x: float, J: int, start: int = 0) -> np.ndarray:
    """``C(shape+j-1, j)(1-x)^shape x^j`` for ``j = start..start+J-1``.

    ``shape=i`` gives the beta sequence; ``shape=i+1`` gives the
    Meyer-Koenig-Zeller weights.
    """
    j = np.arange(start, start + J, dtype=float)
    if x == 0.0:
        return (j == 0).astype(float)
    logw = shape * math.log1p(-x) + j * math.log(x) + _log_products(shape - 1, j)
    return np.exp(logw)


def alpha_weights(i: int, x: float, J: int, start: int = 0) -> np.ndarray:
    """Cell densities ``alpha_j(x)`` for ``j = start..start+J-1``."""
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    J = check_positive_int(J, "J")
    j = np.arange(start, start + J, dtype=float)
    if x == 0.0:
        return np.where(j == 0, float(i + 1), 0.0)
    loga = math.log(i + 1) + i * math.log1p(-x) + j * math.log(x) + _log_products(i + 1, j)
    return np.exp(loga)


def beta_weights(i: int, x: float, J: int, start: int = 0) -> np.ndarray:
    """Cell masses ``beta_j(x)`` for ``j = start..start+J-1``."""
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    J = check_positive_int(J, "J")
    return negative_binomial_weights(i, x, J, start)


def _single_weight(shape: int, x: float, J: int) -> float:
    if x == 0.0:
        return 1.0 if J == 0 else 0.0
    logw = shape * math.log1p(-x) + J * math.log(x)
    logw += math.fsum(math.log1p(J / k) for k in range(1, shape))
    if logw < -700.0:
        return math.exp(logw)
    # plain products are exact in easy cases such as x = 1/2
    w = (1.0 - x) ** shape * x**J
    for k in range(1, shape):
        w *= (J + k) / k
    return w


def _tail_bound(shape: int, x: float, J: int) -> float:
    if x == 0.0:
        return 0.0 if J >= 1 else 1.0
    ratio = (1.0 + (shape - 1) / (J + 1)) * x
    if ratio >= 1.0:
        return 1.0
    # ratios decrease in j, so the tail is dominated by a geometric series
    return min(1.0, _single_weight(shape, x, J) / (1.0 - ratio))


def tail_bound(i: int, x: float, J: int, shape: int | None = None) -> float:
    """Certified upper bound on ``sum_{j >= J} beta_j(x)``.

    Valid because the ratio ``beta_{j+1}/beta_j`` is nonincreasing in j: once
    it drops below one the tail is dominated by a geometric series started
    at ``beta_J``.  ``shape`` overrides the negative binomial shape (``i+1``
    gives the MKZ weights).
    """
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    J = check_nonnegative_int(J, "J")
    return _tail_bound(i if shape is None else shape, x, J)


def truncation_index(i: int, x: float, eps: float, shape: int | None = None) -> int:
    """Smallest J >= 1 whose certified tail bound is at most ``eps``."""
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    eps = check_positive_real(eps, "eps")
    s = i if shape is None else shape
    if _tail_bound(s, x, 1) <= eps:
        return 1
    lo, hi = 1, 2
    while _tail_bound(s, x, hi) > eps:
        lo, hi = hi, hi * 2
    # the bound is monotone in J, so bisect on (lo, hi]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _tail_bound(s, x, mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


def pivot_index(i: int, x: float) -> int:
    """The cell index j with ``j/(i+j) <= x < (j+1)/(i+j+1)``."""
    i = check_positive_int(i, "i")
    if isinstance(x, (int, float)) and not isinstance(x, bool) and x >= 1.0:
        raise DomainError("x = 1 is not in any cell of the partition")
    x = check_half_open_unit(x)
    j = max(0, math.floor(i * x / (1.0 - x)))
    xf = Fraction(x)
    # exact rational check of the membership interval
    while j > 0 and j > (i + j) * xf:
        j -= 1
    while j + 1 <= (i + j + 1) * xf:
        j += 1
    return j


def _floor_ratio(c: int, x: float) -> int:
    xf = Fraction(x)
    return math.floor(c * xf / (1 - xf))


def argmax_indices(i: int, x: float) -> tuple[int, int]:
    """Closed-form peak indices ``(floor((i+1)x/(1-x)), floor((i-1)x/(1-x)))``.

    At rational x two neighbouring weights can tie; the returned index is
    always one where the maximum is attained.
    """
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    if not x > 1.0 / (i + 2):
        raise DomainError(f"argmax_indices needs x > 1/(i+2) = {1.0 / (i + 2):.6g}, got {x!r}")
    return _floor_ratio(i + 1, x), _floor_ratio(i - 1, x)


def window_mass(i: int, x: float, r: float) -> float:
    """Total beta mass over the index window ``floor((1-r) j_x) .. j_x``."""
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    r = check_open_unit(r, "r")
    jx = pivot_index(i, x)
    lo = math.floor((1.0 - r) * jx)
    w = negative_binomial_weights(i, x, jx - lo + 1, start=lo)
    return float(math.fsum(w))


@dataclass(frozen=True)
class KantorovichWeights:
    """Both weight sequences for one ``(i, x)`` plus their landmarks."""

    i: int
    x: float
    J: int
    alphas: np.ndarray
    betas: np.ndarray
    pivot: int
    alpha_peak: int
    beta_peak: int
    tail_bound: float

    def __post_init__(self):
        self.alphas.setflags(write=False)
        self.betas.setflags(write=False)


def kantorovich_weights(i: int, x: float, eps: float = 1e-12, J: int | None = None) -> KantorovichWeights:
    """Build :class:`KantorovichWeights`, truncated at tail mass ``eps``
    unless an explicit ``J`` is given."""
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    if J is None:
        J = truncation_index(i, x, eps)
    J = check_positive_int(J, "J")
    return KantorovichWeights(
        i=i,
        x=x,
        J=J,
        alphas=alpha_weights(i, x, J),
        betas=beta_weights(i, x, J),
        pivot=pivot_index(i, x),
        alpha_peak=_floor_ratio(i + 1, x),
        beta_peak=_floor_ratio(i - 1, x),
        tail_bound=_tail_bound(i, x, J),
    )
