"""Primal evaluation and grid iteration for the four Markov operators.

* the affine projection ``f(0)(1-x) + f(1)x``;
* Bernstein operators ``B_k``, iterated exactly through the node matrix;
* Meyer-Koenig-Zeller operators ``T_i``, sampling f at ``j/(i+j)``;
* generalized Kantorovich operators, averaging f over the cells
  ``[j/(i+j), (j+1)/(i+j+1))``.

Iterates of the last two leave every finite-dimensional space, so they are
iterated on a fixed grid.  The current iterate is represented by its grid
values and read between grid points by linear interpolation, which keeps
the scheme positive.  One step is then multiplication by a row-stochastic
grid-to-grid matrix; each row is assembled once by summing the series for
that grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import seqcore
from ._validation import (
    AccuracyError,
    DomainError,
    check_closed_unit,
    check_eps,
    check_positive_int,
    check_positive_real,
)
from .observables import evaluate

__all__ = [
    "GridFunction",
    "OperatorSpec",
    "standard_grid",
    "apply_projection",
    "bernstein_node_matrix",
    "apply_bernstein",
    "apply_mkz",
    "subinterval_integrals",
    "apply_kantorovich",
    "transition_matrix",
    "iterate_on_grid",
    "cesaro_on_grid",
    "MarkovOperator",
    "ProjectionOperator",
    "BernsteinOperator",
    "MKZOperator",
    "KantorovichOperator",
    "make_operator",
]

_CHUNK = 1 << 20


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of an observable on a grid of [0, 1] that ends exactly at 1."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise DomainError("grid and values must be 1-d arrays of equal length")
        if len(grid) < 2 or np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing with at least two points")
        if grid[0] < 0 or grid[-1] != 1.0:
            raise DomainError("grid must lie in [0, 1] and end exactly at 1")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)

    def sup_distance(self, other) -> float:
        """Max over the grid of the distance to a constant or another function."""
        if callable(other):
            other = evaluate(other, self.grid)
        return float(np.max(np.abs(self.values - other)))


_KINDS = ("projection", "bernstein", "mkz", "kantorovich")


@dataclass(frozen=True)
class OperatorSpec:
    """Which operator to apply: ``kind`` with its integer ``param`` (k or i)."""

    kind: str
    param: int | None = None
    eps: float = 1e-10

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in _KINDS:
            raise DomainError(f"unknown operator kind {self.kind!r}; expected one of {_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "projection":
            object.__setattr__(self, "param", None)
        else:
            check_positive_int(self.param, "k" if kind == "bernstein" else "i")
        object.__setattr__(self, "eps", check_eps(self.eps))

    @classmethod
    def projection(cls) -> "OperatorSpec":
        return cls("projection")

    @classmethod
    def bernstein(cls, k: int) -> "OperatorSpec":
        return cls("bernstein", k)

    @classmethod
    def mkz(cls, i: int, eps: float = 1e-10) -> "OperatorSpec":
        return cls("mkz", i, eps)

    @classmethod
    def kantorovich(cls, i: int, eps: float = 1e-10) -> "OperatorSpec":
        return cls("kantorovich", i, eps)

    def label(self) -> str:
        return self.kind if self.param is None else f"{self.kind}({self.param})"


def standard_grid(spec: OperatorSpec | None = None, step: int = 256, depth: int = 20, n_endpoints: int = 64) -> np.ndarray:
    """Uniform points ``m/step``, points ``1 - 2**-p`` for ``p <= depth``,
    and the operator's own nodes: ``j/k`` for Bernstein, ``j/(i+j)`` for
    ``j <= n_endpoints`` for MKZ and Kantorovich."""
    pts = [np.arange(step + 1) / step, 1.0 - 2.0 ** -np.arange(1, depth + 1)]
    if spec is not None and spec.kind == "bernstein":
        pts.append(np.arange(spec.param + 1) / spec.param)
    elif spec is not None and spec.kind in ("mkz", "kantorovich"):
        pts.append(seqcore.cell_edges(spec.param, n_endpoints))
    grid = np.unique(np.concatenate(pts))
    grid = grid[(grid >= 0) & (grid <= 1)]
    grid[-1] = 1.0
    return grid


# ---------------------------------------------------------------------------
# pointwise evaluation


def apply_projection(f, x: float) -> float:
    x = check_closed_unit(x)
    f0, f1 = evaluate(f, np.array([0.0, 1.0]))
    return float(f0 * (1 - x) + f1 * x)


def bernstein_node_matrix(k: int) -> np.ndarray:
    """Row m holds the binomial(k, m/k) pmf: ``B_k`` restricted to its nodes."""
    k = check_positive_int(k, "k")
    nodes = np.arange(k + 1) / k
    return _bernstein_basis(k, nodes)


def _bernstein_basis(k: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)[:, None]
    j = np.arange(k + 1)[None, :]
    coef = np.array([math.comb(k, jj) for jj in range(k + 1)], dtype=float)[None, :]
    with np.errstate(invalid="ignore"):
        out = coef * x**j * (1.0 - x) ** (k - j)
    return out


def apply_bernstein(k: int, f, x: float) -> float:
    k = check_positive_int(k, "k")
    x = check_closed_unit(x)
    values = evaluate(f, np.arange(k + 1) / k)
    return float(_bernstein_basis(k, np.array([x]))[0] @ values)


def apply_mkz(i: int, f, x: float, eps: float = 1e-10) -> float:
    """Meyer-Koenig-Zeller operator at one point, truncated at tail ``eps``."""
    i = check_positive_int(i, "i")
    x = check_closed_unit(x)
    eps = check_eps(eps)
    if x == 1.0:
        return float(evaluate(f, np.array([1.0]))[0])
    J = seqcore.truncation_index(i, x, eps, shape=i + 1)
    total = 0.0
    for j0 in range(0, J, _CHUNK):
        n = min(_CHUNK, J - j0)
        w = seqcore.negative_binomial_weights(i + 1, x, n, start=j0)
        j = np.arange(j0, j0 + n, dtype=float)
        total += float(w @ evaluate(f, j / (i + j)))
    return total


_GAUSS: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(order: int):
    if order not in _GAUSS:
        _GAUSS[order] = leggauss(order)
    return _GAUSS[order]


def subinterval_integrals(f, i: int, J: int, quad_order: int = 4, start: int = 0) -> np.ndarray:
    """Gauss-Legendre integrals of f over the cells ``start..start+J-1``."""
    i = check_positive_int(i, "i")
    J = check_positive_int(J, "J")
    quad_order = check_positive_int(quad_order, "quad_order")
    if quad_order < 2:
        raise DomainError("quad_order must be at least 2")
    nodes, weights = _gauss(quad_order)
    j = np.arange(start, start + J, dtype=float)
    left = j / (i + j)
    half = 0.5 * seqcore.cell_widths(i, J, start)
    mid = left + half
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    vals = evaluate(f, pts.ravel()).reshape(pts.shape)
    return half * (vals @ weights)


def apply_kantorovich(i: int, f, x: float, eps: float = 1e-10, quad_order: int = 4) -> float:
    """Generalized Kantorovich operator at one point, truncated at tail ``eps``."""
    i = check_positive_int(i, "i")
    x = check_closed_unit(x)
    eps = check_eps(eps)
    if x == 1.0:
        return float(evaluate(f, np.array([1.0]))[0])
    J = seqcore.truncation_index(i, x, eps)
    total = 0.0
    for j0 in range(0, J, _CHUNK):
        n = min(_CHUNK, J - j0)
        total += float(seqcore.alpha_weights(i, x, n, start=j0) @ subinterval_integrals(f, i, n, quad_order, start=j0))
    return total


# ---------------------------------------------------------------------------
# grid transition matrices


def _hat_split(grid_u: np.ndarray, seg: np.ndarray, u: np.ndarray):
    """Weights on the left and right node of segment ``seg`` for points
    given by ``u = 1 - y``.  Working with ``1 - y`` keeps resolution near 1."""
    ua, ub = grid_u[seg], grid_u[seg + 1]
    right = np.clip((ua - u) / (ua - ub), 0.0, 1.0)
    return 1.0 - right, right


def _kantorovich_row(i: int, x: float, grid: np.ndarray, eps: float) -> np.ndarray:
    G = len(grid)
    row = np.zeros(G)
    if x == 1.0:
        row[-1] = 1.0
        return row
    grid_u = 1.0 - grid
    last = G - 2  # the segment [grid[-2], 1]; mass there is read at grid[-2]
    J = seqcore.truncation_index(i, x, eps)
    for j0 in range(0, J, _CHUNK):
        n = min(_CHUNK, J - j0)
        beta = seqcore.beta_weights(i, x, n, start=j0)
        j = np.arange(j0, j0 + n, dtype=float)
        uL = i / (i + j)
        uR = i / (i + j + 1.0)
        left = 1.0 - uL
        seg = np.clip(np.searchsorted(grid, left, side="right") - 1, 0, G - 2)
        straddle = (1.0 - uR > grid[seg + 1]) & (seg < last)
        plain = ~straddle
        s, b = seg[plain], beta[plain]
        inner = s < last
        wl, wr = _hat_split(grid_u, s[inner], 0.5 * (uL[plain][inner] + uR[plain][inner]))
        row += np.bincount(s[inner], b[inner] * wl, minlength=G)
        row += np.bincount(s[inner] + 1, b[inner] * wr, minlength=G)
        row[last] += b[~inner].sum()
        for jj in np.nonzero(straddle)[0]:
            _split_cell(row, grid, grid_u, left[jj], 1.0 - uR[jj], uL[jj], uR[jj], beta[jj], last)
    # put the truncated tail where the series stops so that the row sums to 1
    stop = seqcore.cell_edges(i, J)[-1]
    s_stop = min(int(np.searchsorted(grid, stop, side="right")) - 1, last)
    row[max(s_stop, 0)] += max(0.0, 1.0 - row.sum())
    return row


def _split_cell(row, grid, grid_u, a, b, ua, ub, mass, last):
    """Spread a uniform mass on [a, b) over the hat functions of the grid."""
    inside = np.nonzero((grid > a) & (grid < b))[0]
    cuts_u = np.concatenate([[ua], 1.0 - grid[inside], [ub]])
    total = ua - ub
    s0 = int(np.searchsorted(grid, a, side="right")) - 1
    for p in range(len(cuts_u) - 1):
        s = min(s0 + p, len(grid) - 2)
        piece = mass * (cuts_u[p] - cuts_u[p + 1]) / total
        if s >= last:
            row[last] += piece
            continue
        mid = 0.5 * (cuts_u[p] + cuts_u[p + 1])
        right = (grid_u[s] - mid) / (grid_u[s] - grid_u[s + 1])
        row[s] += piece * (1.0 - right)
        row[s + 1] += piece * right


def _mkz_row(i: int, x: float, grid: np.ndarray, eps: float) -> np.ndarray:
    G = len(grid)
    row = np.zeros(G)
    if x == 1.0:
        row[-1] = 1.0
        return row
    grid_u = 1.0 - grid
    J = seqcore.truncation_index(i, x, eps, shape=i + 1)
    for j0 in range(0, J, _CHUNK):
        n = min(_CHUNK, J - j0)
        w = seqcore.negative_binomial_weights(i + 1, x, n, start=j0)
        j = np.arange(j0, j0 + n, dtype=float)
        u = i / (i + j)
        seg = np.clip(np.searchsorted(grid, 1.0 - u, side="right") - 1, 0, G - 2)
        wl, wr = _hat_split(grid_u, seg, u)
        row += np.bincount(seg, w * wl, minlength=G)
        row += np.bincount(seg + 1, w * wr, minlength=G)
    # nodes beyond the truncation sit close to 1
    row[-1] += max(0.0, 1.0 - row.sum())
    return row


@lru_cache(maxsize=16)
def _cached_matrix(kind: str, param: int, eps: float, grid_bytes: bytes) -> np.ndarray:
    grid = np.frombuffer(grid_bytes, dtype=float)
    make_row = _kantorovich_row if kind == "kantorovich" else _mkz_row
    M = np.vstack([make_row(param, float(x), grid, eps) for x in grid])
    M.setflags(write=False)
    return M


def transition_matrix(spec: OperatorSpec, grid: np.ndarray) -> np.ndarray:
    """Row-stochastic matrix of one step on the grid.

    Bernstein and projection steps are exact on their nodes and are
    represented the same way so that all kinds share one code path.
    """
    grid = np.ascontiguousarray(grid, dtype=float)
    if spec.kind in ("mkz", "kantorovich"):
        return _cached_matrix(spec.kind, spec.param, spec.eps, grid.tobytes())
    if spec.kind == "projection":
        M = np.zeros((len(grid), len(grid)))
        M[:, 0] = 1.0 - grid
        M[:, -1] += grid
        return M
    raise DomainError("Bernstein iterates use bernstein_node_matrix; no grid matrix is formed")


# ---------------------------------------------------------------------------
# iteration


def _sample(f, grid: np.ndarray, check_resolution: float | None) -> np.ndarray:
    if isinstance(f, GridFunction):
        return f(grid)
    values = evaluate(f, grid)
    if check_resolution is not None:
        mid = 0.5 * (grid[1:] + grid[:-1])
        gap = np.max(np.abs(evaluate(f, mid) - 0.5 * (values[1:] + values[:-1])))
        if gap > check_resolution:
            raise AccuracyError(
                f"grid does not resolve the observable: interpolation error {gap:.3g} exceeds {check_resolution:.3g}",
                achieved=float(gap),
            )
    return values


class MarkovOperator(TransformerMixin, BaseEstimator):
    """Common estimator interface.

    ``fit`` builds the evaluation grid and the one-step map; ``transform``
    maps rows of grid samples to their ``n_iter``-th iterates.
    """

    def __init__(self, n_iter: int = 1, grid=None, resolution_tol: float = 1e-4):
        self.n_iter = n_iter
        self.grid = grid
        self.resolution_tol = resolution_tol

    def _spec(self) -> OperatorSpec:  # pragma: no cover - abstract
        raise NotImplementedError

    def fit(self, X=None, y=None):
        spec = self._spec()
        if self.grid is None:
            grid = standard_grid(spec)
        else:
            grid = GridFunction(np.asarray(self.grid, dtype=float), np.zeros(len(self.grid))).grid
        self.spec_ = spec
        self.grid_ = grid
        self._build()
        self.n_features_in_ = len(grid)
        if X is not None and check_array(X).shape[1] != len(grid):
            raise DomainError(f"X must hold one value per grid point ({len(grid)} columns)")
        return self

    def _build(self):
        self.matrix_ = transition_matrix(self.spec_, self.grid_)

    def _step(self, V: np.ndarray) -> np.ndarray:
        # V has one observable per row
        return V @ self.matrix_.T

    def transform(self, X):
        check_is_fitted(self, "grid_")
        V = check_array(X, dtype=float)
        if V.shape[1] != len(self.grid_):
            raise DomainError(f"expected {len(self.grid_)} grid values per row, got {V.shape[1]}")
        for _ in range(check_positive_int(self.n_iter, "n_iter")):
            V = self._step(V)
        return V

    def sample(self, f) -> np.ndarray:
        check_is_fitted(self, "grid_")
        tol = self.resolution_tol if self.spec_.kind in ("mkz", "kantorovich") else None
        return _sample(f, self.grid_, tol)

    def iterates(self, f, m_max: int):
        """Yield ``T^m f`` on the grid for ``m = 0..m_max``."""
        check_is_fitted(self, "grid_")
        v = self.sample(f)[None, :]
        yield v[0]
        for _ in range(m_max):
            v = self._step(v)
            yield v[0]

    def iterate(self, f, m: int) -> GridFunction:
        m = check_positive_int(m, "m")
        for v in self.iterates(f, m):
            pass
        return GridFunction(self.grid_, v)

    def cesaro(self, f, m: int) -> GridFunction:
        m = check_positive_int(m, "m")
        total = np.zeros(len(self.grid_))
        for k, v in enumerate(self.iterates(f, m - 1)):
            total += v
        return GridFunction(self.grid_, total / m)


class ProjectionOperator(MarkovOperator):
    """``Tf(x) = f(0)(1-x) + f(1)x``; idempotent."""

    def _spec(self):
        return OperatorSpec.projection()


class BernsteinOperator(MarkovOperator):
    """Bernstein operator ``B_k``; iterates are exact via the node matrix."""

    def __init__(self, k: int = 1, n_iter: int = 1, grid=None, resolution_tol: float = 1e-4):
        super().__init__(n_iter=n_iter, grid=grid, resolution_tol=resolution_tol)
        self.k = k

    def _spec(self):
        return OperatorSpec.bernstein(self.k)

    def _build(self):
        k = self.spec_.param
        self.node_matrix_ = bernstein_node_matrix(k)
        self.basis_ = _bernstein_basis(k, self.grid_)
        nodes = np.arange(k + 1) / k
        # node values are read off the grid by interpolation (exact when nodes are grid points)
        self.reader_ = np.array([np.interp(nodes, self.grid_, e) for e in np.eye(len(self.grid_))]).T

    def _step(self, V):
        return (V @ self.reader_.T) @ self.basis_.T

    def iterates(self, f, m_max: int):
        check_is_fitted(self, "grid_")
        k = self.spec_.param
        if isinstance(f, GridFunction):
            nodes_v = f(np.arange(k + 1) / k)
            yield f(self.grid_)
        else:
            nodes_v = evaluate(f, np.arange(k + 1) / k)
            yield evaluate(f, self.grid_)
        for _ in range(m_max):
            yield self.basis_ @ nodes_v
            nodes_v = self.node_matrix_ @ nodes_v


class MKZOperator(MarkovOperator):
    """Meyer-Koenig-Zeller operator ``T_i`` iterated on a grid."""

    def __init__(self, i: int = 1, eps: float = 1e-10, n_iter: int = 1, grid=None, resolution_tol: float = 1e-4):
        super().__init__(n_iter=n_iter, grid=grid, resolution_tol=resolution_tol)
        self.i = i
        self.eps = eps

    def _spec(self):
        return OperatorSpec.mkz(self.i, self.eps)


class KantorovichOperator(MarkovOperator):
    """Generalized Kantorovich operator iterated on a grid.

    Between grid points the iterate is read by linear interpolation, except
    on the last segment ``[grid[-2], 1)`` where it is held constant at
    ``grid[-2]``.  The dual chain never charges the point 1 from inside
    [0, 1), so interpolating towards the value at 1 would invent a leak
    into the fixed point.
    """

    def __init__(self, i: int = 1, eps: float = 1e-10, n_iter: int = 1, grid=None, resolution_tol: float = 1e-4):
        super().__init__(n_iter=n_iter, grid=grid, resolution_tol=resolution_tol)
        self.i = i
        self.eps = eps

    def _spec(self):
        return OperatorSpec.kantorovich(self.i, self.eps)


def make_operator(spec: OperatorSpec, grid=None, n_iter: int = 1) -> MarkovOperator:
    if spec.kind == "projection":
        op = ProjectionOperator(n_iter=n_iter, grid=grid)
    elif spec.kind == "bernstein":
        op = BernsteinOperator(spec.param, n_iter=n_iter, grid=grid)
    elif spec.kind == "mkz":
        op = MKZOperator(spec.param, spec.eps, n_iter=n_iter, grid=grid)
    else:
        op = KantorovichOperator(spec.param, spec.eps, n_iter=n_iter, grid=grid)
    return op.fit()


def iterate_on_grid(spec: OperatorSpec, f, m: int, grid=None) -> GridFunction:
    """``T^m f`` sampled on ``grid`` (the standard grid by default)."""
    return make_operator(spec, grid).iterate(f, m)


def cesaro_on_grid(spec: OperatorSpec, f, m: int, grid=None) -> GridFunction:
    """``(f + Tf + ... + T^{m-1} f) / m`` on the grid."""
    return make_operator(spec, grid).cesaro(f, m)
