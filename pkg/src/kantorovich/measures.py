"""Measures on [0, 1] that are a point mass at 1 plus a density constant on
each cell ``I_l = [l/(i+l), (l+1)/(i+l+1))`` of the i-partition.

This family is closed under the dual Kantorovich operator ``T'``.  Pushing a
cellwise density ``c`` forward gives again a cellwise density, and summing
by parts over the cell endpoints ``y_e = e/(i+e)`` gives

    out_l = c_0 + sum_{e >= 1} (c_e - c_{e-1}) * F(l; y_e)

where ``F(l; y)`` is the cdf at ``l`` of the negative binomial law with shape
``i+1`` and parameter ``y``.  Only the jumps of ``c`` enter, so a uniform
density (one jump) costs a single cdf row, and the invariance of Lebesgue
measure holds exactly in this form.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from . import seqcore
from ._validation import (
    AccuracyError,
    DomainError,
    WorkLimitError,
    check_half_open_unit,
    check_nonnegative_int,
    check_positive_int,
    check_positive_real,
)

__all__ = [
    "CertifiedValue",
    "PartitionMeasure",
    "delta_image",
    "dirac_one",
    "lebesgue_measure",
    "lebesgue_cells_for_tail",
    "mixture",
    "moments",
    "dual_apply",
    "gamma_weights",
    "tv_distance",
    "lattice_min_mass",
    "gap02",
    "wedge_lower_bound",
    "DualChainWithUniformFar",
    "measure_to_csv",
    "measure_from_csv",
]

# exp/cumsum work is done in blocks of roughly this many matrix entries
_BLOCK_ENTRIES = 1 << 21
# cap on the output length of a single push
_MAX_CELLS = 1 << 26
# relative rounding allowance folded into mass accounting
_ROUNDING = 1e-14


class CertifiedValue(float):
    """A float that also carries a certified enclosure ``[lower, upper]``."""

    lower: float
    upper: float

    def __new__(cls, value: float, lower: float, upper: float):
        obj = super().__new__(cls, value)
        obj.lower = float(lower)
        obj.upper = float(upper)
        return obj

    @property
    def slack(self) -> float:
        return self.upper - self.lower

    def __repr__(self) -> str:
        return f"CertifiedValue({float(self)!r}, lower={self.lower!r}, upper={self.upper!r})"


@dataclass(frozen=True)
class PartitionMeasure:
    """``atom1 * delta_1`` plus density ``coeffs[l]`` on cell ``l``.

    ``tail_mass_bound`` bounds the mass of the measure that is not
    represented (it would sit on cells with index >= ``len(coeffs)``).
    """

    i: int
    atom1: float
    coeffs: np.ndarray
    tail_mass_bound: float = 0.0
    probability: bool = True

    def __post_init__(self):
        check_positive_int(self.i, "i")
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 1:
            raise DomainError("coeffs must be one-dimensional")
        if np.any(coeffs < 0) or not np.all(np.isfinite(coeffs)):
            raise DomainError("coeffs must be finite and nonnegative")
        if not self.atom1 >= 0 or not self.tail_mass_bound >= 0:
            raise DomainError("atom1 and tail_mass_bound must be nonnegative")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "atom1", float(self.atom1))
        object.__setattr__(self, "tail_mass_bound", float(self.tail_mass_bound))

    @property
    def J(self) -> int:
        return len(self.coeffs)

    def widths(self) -> np.ndarray:
        return seqcore.cell_widths(self.i, self.J)

    def masses(self) -> np.ndarray:
        """Mass of each represented cell."""
        return self.coeffs * self.widths()

    def represented_mass(self) -> float:
        return self.atom1 + math.fsum(self.masses())

    def padded(self, J: int) -> np.ndarray:
        out = np.zeros(J)
        out[: self.J] = self.coeffs
        return out


def _check_probability(mu: PartitionMeasure, what: str = "mu") -> None:
    mass = mu.represented_mass()
    if mass > 1 + 1e-10 or mass < 1 - mu.tail_mass_bound - 1e-10:
        raise DomainError(
            f"{what} is not a probability measure: represented mass {mass!r}, tail bound {mu.tail_mass_bound!r}"
        )


def delta_image(i: int, x: float, eps: float = 1e-12) -> PartitionMeasure:
    """The image of the point mass at ``x`` under the dual operator."""
    i = check_positive_int(i, "i")
    if isinstance(x, (int, float)) and not isinstance(x, bool) and x == 1:
        raise DomainError("the point mass at 1 is fixed; use dirac_one()")
    x = check_half_open_unit(x)
    eps = check_positive_real(eps, "eps")
    J = seqcore.truncation_index(i, x, eps)
    return PartitionMeasure(i, 0.0, seqcore.alpha_weights(i, x, J), seqcore.tail_bound(i, x, J))


def dirac_one(i: int) -> PartitionMeasure:
    return PartitionMeasure(check_positive_int(i, "i"), 1.0, np.zeros(0), 0.0)


def lebesgue_measure(i: int, J: int) -> PartitionMeasure:
    """Lebesgue measure on the first J cells; the rest of [0, 1) is tail."""
    i = check_positive_int(i, "i")
    J = check_positive_int(J, "J")
    return PartitionMeasure(i, 0.0, np.ones(J), i / (i + J))


def lebesgue_cells_for_tail(i: int, eps: float) -> int:
    """Smallest J with uncovered Lebesgue mass ``i/(i+J) <= eps``."""
    i = check_positive_int(i, "i")
    eps = check_positive_real(eps, "eps")
    J = max(1, math.ceil(i / eps - i))
    while J > 1 and i / (i + J - 1) <= eps:
        J -= 1
    while i / (i + J) > eps:
        J += 1
    return J


def mixture(mu: PartitionMeasure, nu: PartitionMeasure, weight: float) -> PartitionMeasure:
    """``weight * mu + (1 - weight) * nu``."""
    if mu.i != nu.i:
        raise DomainError("measures live on different partitions")
    if not 0 <= weight <= 1:
        raise DomainError("weight must lie in [0, 1]")
    J = max(mu.J, nu.J)
    return PartitionMeasure(
        mu.i,
        weight * mu.atom1 + (1 - weight) * nu.atom1,
        weight * mu.padded(J) + (1 - weight) * nu.padded(J),
        weight * mu.tail_mass_bound + (1 - weight) * nu.tail_mass_bound,
        mu.probability and nu.probability,
    )


# ---------------------------------------------------------------------------
# pushing densities forward


_BLOCK = 256


class _PmfBlocks:
    """Negative binomial pmfs (shape i+1) at the endpoints ``y_e = e/(i+e)``.

    Inside a block of ``_BLOCK`` consecutive l the pmf factors as
    ``s_e * y_e**t * C(i+l, l)`` with ``t = l - l0``, so the matrix
    ``y_e**t`` is built once and each block reduces to matrix-vector
    products instead of elementwise exponentials.
    """

    def __init__(self, i: int, e: np.ndarray):
        e = np.asarray(e, dtype=float)
        self.i = i
        u = i / (i + e)  # 1 - y_e, accurate even near 1
        self.log_u = np.log(u)
        self.log_y = np.log1p(-u)
        t = np.arange(_BLOCK, dtype=float)
        self.powers = np.exp(np.outer(self.log_y, t))

    def scale(self, l0: int) -> np.ndarray:
        return np.exp((self.i + 1) * self.log_u + l0 * self.log_y)

    def binom(self, l0: int) -> np.ndarray:
        ls = np.arange(l0, l0 + _BLOCK, dtype=float)
        logc = np.zeros(_BLOCK)
        for k in range(1, self.i + 1):
            logc += np.log1p(ls / k)
        return np.exp(logc)


def _cdf_table(i: int, e: np.ndarray, n_out: int) -> np.ndarray:
    """``F[k, l] = F(l; y_{e_k})`` for ``l < n_out``."""
    pm = _PmfBlocks(i, e)
    table = np.empty((len(e), n_out))
    carry = np.zeros(len(e))
    for l0 in range(0, n_out, _BLOCK):
        pmf = pm.scale(l0)[:, None] * pm.powers * pm.binom(l0)[None, :]
        F = np.cumsum(pmf, axis=1)
        F += carry[:, None]
        np.minimum(F, 1.0, out=F)
        carry = F[:, -1].copy()
        n = min(_BLOCK, n_out - l0)
        table[:, l0 : l0 + n] = F[:, :n]
    return table


def _jumps(coeffs: np.ndarray, far: float) -> tuple[np.ndarray, np.ndarray]:
    c = np.append(np.asarray(coeffs, dtype=float), far)
    d = np.diff(c)
    e = np.nonzero(d)[0] + 1
    return e, d[e - 1]


def _push(i: int, coeffs: np.ndarray, n_out: int | None, budget: float | None, far: float = 0.0):
    """Push a cellwise density forward.

    Either ``n_out`` cells are produced, or cells are produced until the
    unrepresented output mass drops to ``budget``.  Returns the output
    densities and the mass that fell beyond the last produced cell.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    J = len(coeffs)
    c0 = coeffs[0] if J else far
    e, d = _jumps(coeffs, far) if J else (np.zeros(0, dtype=int), np.zeros(0))
    if far != 0.0:
        raise NotImplementedError("a uniform far density has infinite support; use DualChainWithUniformFar")
    mass_in = math.fsum(coeffs * seqcore.cell_widths(i, J)) if J else 0.0
    slack = _ROUNDING * max(1.0, mass_in) * max(1, J) ** 0.5
    pieces = []
    produced = 0.0
    if len(e) == 0:
        # constant density c0 on every cell of [0, 1)
        n = n_out if n_out is not None else 1
        return np.full(n, c0), 0.0
    pm = _PmfBlocks(i, e)
    level = c0  # c0 + sum_e d_e F(l0 - 1; y_e)
    for l0 in range(0, _MAX_CELLS, _BLOCK):
        scale = pm.scale(l0)
        binom = pm.binom(l0)
        block = level + np.cumsum(((d * scale) @ pm.powers) * binom)
        level = block[-1]
        np.maximum(block, 0.0, out=block)
        widths = seqcore.cell_widths(i, len(block), start=l0)
        if n_out is not None:
            take = min(len(block), n_out - l0)
            pieces.append(block[:take])
            produced += math.fsum(block[:take] * widths[:take])
            if l0 + take >= n_out:
                break
            continue
        cm = produced + np.cumsum(block * widths)
        hit = np.nonzero(mass_in - cm <= budget - slack)[0]
        if len(hit):
            take = hit[0] + 1
            pieces.append(block[:take])
            produced += math.fsum(block[:take] * widths[:take])
            break
        pieces.append(block)
        produced += math.fsum(block * widths)
    else:
        raise AccuracyError(
            "output tail could not be brought below the requested bound",
            achieved=max(0.0, mass_in - produced),
        )
    out = np.concatenate(pieces)
    return out, max(0.0, mass_in - produced) + slack


def moments(mu: PartitionMeasure, l_max: int) -> np.ndarray:
    """``m_l = integral of (1-y)^i y^l dmu`` for ``l = 0..l_max``.

    Uses ``(i+1) C(i+l+1, l) m_l = sum_j c_j [F(l; y_j) - F(l; y_{j+1})]``
    which avoids the alternating sums of a binomial expansion.
    """
    l_max = check_nonnegative_int(l_max, "l_max")
    i = mu.i
    if mu.J == 0:
        return np.zeros(l_max + 1)
    dens, _ = _push(i, mu.coeffs, l_max + 1, None)
    l = np.arange(l_max + 1, dtype=float)
    # 1 / ((i+1) C(i+l+1, l)) = B(l+1, i+1)
    log_norm = math.log(i + 1)
    for k in range(1, i + 2):
        log_norm = log_norm + np.log1p(l / k)
    return dens * np.exp(-log_norm)


def dual_apply(i: int, mu: PartitionMeasure, eps: float = 1e-10) -> PartitionMeasure:
    """One step of the dual operator on a probability PartitionMeasure.

    The output is extended cell by cell until its unrepresented mass is at
    most ``eps``; the atom at 1 is carried over unchanged.
    """
    i = check_positive_int(i, "i")
    eps = check_positive_real(eps, "eps")
    if mu.i != i:
        raise DomainError(f"measure is on the {mu.i}-partition, operator has i={i}")
    if mu.probability:
        _check_probability(mu)
    if mu.tail_mass_bound > eps:
        raise AccuracyError(
            f"input tail {mu.tail_mass_bound:.3g} already exceeds eps={eps:.3g}",
            achieved=mu.tail_mass_bound,
        )
    if mu.J == 0:
        return PartitionMeasure(i, mu.atom1, np.zeros(0), mu.tail_mass_bound, mu.probability)
    budget = eps - mu.tail_mass_bound
    coeffs, lost = _push(i, mu.coeffs, None, budget)
    tail = mu.tail_mass_bound + lost
    if tail > eps:
        raise AccuracyError(f"output tail {tail:.3g} exceeds eps={eps:.3g}", achieved=tail)
    return PartitionMeasure(i, mu.atom1, coeffs, tail, mu.probability)


def gamma_weights(i: int, x: float, J: int | None = None, eps: float = 1e-10) -> np.ndarray:
    """Cell masses of the two-step image of the point mass at ``x``."""
    mu = delta_image(i, x, eps / 2)
    two = dual_apply(i, mu, eps)
    masses = two.masses()
    if J is None:
        return masses
    J = check_positive_int(J, "J")
    out = np.zeros(J)
    n = min(J, len(masses))
    out[:n] = masses[:n]
    return out


# ---------------------------------------------------------------------------
# total variation


def _aligned(mu: PartitionMeasure, nu: PartitionMeasure):
    if mu.i != nu.i:
        raise DomainError(f"measures live on different partitions (i={mu.i} vs i={nu.i})")
    J = max(mu.J, nu.J)
    return mu.padded(J), nu.padded(J), seqcore.cell_widths(mu.i, J)


def tv_distance(mu: PartitionMeasure, nu: PartitionMeasure) -> CertifiedValue:
    """Total variation ``|mu - nu|([0, 1])`` of the represented parts.

    The enclosure accounts for the unrepresented tails of both measures.
    """
    a, b, w = _aligned(mu, nu)
    value = math.fsum(np.abs(a - b) * w) + abs(mu.atom1 - nu.atom1)
    slack = mu.tail_mass_bound + nu.tail_mass_bound
    return CertifiedValue(value, max(0.0, value - slack), value + slack)


def lattice_min_mass(mu: PartitionMeasure, nu: PartitionMeasure) -> CertifiedValue:
    """Mass of the lattice minimum ``mu ^ nu``."""
    a, b, w = _aligned(mu, nu)
    value = math.fsum(np.minimum(a, b) * w) + min(mu.atom1, nu.atom1)
    slack = min(mu.tail_mass_bound, nu.tail_mass_bound)
    return CertifiedValue(value, value, value + slack)


_GAP_WORK = 4e9  # cells_in * cells_out above which gap02 refuses exact work


def gap02(i: int, x: float, eps: float = 1e-10) -> CertifiedValue:
    """TV distance between the one-step and two-step images of ``delta_x``."""
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    eps = check_positive_real(eps, "eps")
    one = delta_image(i, x, eps / 2)
    if one.J * one.J * 2.0 > _GAP_WORK:
        raise WorkLimitError(
            f"exact gap at x={x!r} needs about {one.J}^2 cell pairs; use wedge_lower_bound",
            achieved=math.nan,
        )
    two = dual_apply(i, one, eps)
    tv = tv_distance(two, one)
    return CertifiedValue(float(tv), tv.lower, min(2.0, tv.upper))


def _log_alpha_at(i: int, l: np.ndarray, u: np.ndarray) -> np.ndarray:
    """log alpha_l(y) with ``u = 1 - y``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(l == 0, 0.0, l * np.log1p(-u))
    out = math.log(i + 1) + i * np.log(u) + power
    for k in range(1, i + 2):
        out = out + np.log1p(l / k)
    return out


def _geometric_blocks(i: int, J: int, ratio: float) -> np.ndarray:
    """Cell-index breakpoints where ``1 - y`` shrinks by at most ``ratio``."""
    edges = [0]
    while edges[-1] < J:
        a = edges[-1]
        b = max(a + 1, int(math.floor(ratio * (i + a) - i)))
        edges.append(min(b, J))
    return np.asarray(edges)


def wedge_lower_bound(i: int, x: float, eps: float = 1e-12, ratio: float = 1.02) -> float:
    """Certified lower bound on the mass of ``T'^2 delta_x ^ T' delta_x``.

    Cells are grouped into blocks on which ``1 - y`` varies by at most
    ``ratio``.  Each target block receives at least the block mass of the
    source times the smallest transition density between the two blocks,
    which is attained at a corner because ``alpha_l(y)`` is unimodal in
    both ``l`` and ``y``.  Cost is quadratic in the number of blocks, not
    cells, so this works arbitrarily close to 1.
    """
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    J = seqcore.truncation_index(i, x, eps)
    edges = _geometric_blocks(i, J, ratio)
    betas = seqcore.beta_weights(i, x, J)
    src_mass = np.add.reduceat(betas, edges[:-1])
    a, b = edges[:-1].astype(float), edges[1:].astype(float)
    # source block spans y in [y_a, y_b]
    u_lo, u_hi = i / (i + b), i / (i + a)
    # target block cells a..b-1
    la, lb = a, b - 1.0
    L = la[:, None]
    Lb = lb[:, None]
    corners = np.minimum.reduce([
        _log_alpha_at(i, L, u_lo[None, :]),
        _log_alpha_at(i, L, u_hi[None, :]),
        _log_alpha_at(i, Lb, u_lo[None, :]),
        _log_alpha_at(i, Lb, u_hi[None, :]),
    ])
    two_step = np.exp(corners) @ src_mass
    if x == 0.0:
        one_step = np.where(la == 0, float(i + 1), 0.0)
    else:
        ux = np.full_like(la, 1.0 - x)
        one_step = np.exp(np.minimum(_log_alpha_at(i, la, ux), _log_alpha_at(i, lb, ux)))
    lam = b / (i + b) - a / (i + a)
    return float(math.fsum(np.minimum(two_step, one_step) * lam))


# ---------------------------------------------------------------------------
# iteration toward Lebesgue measure with a uniform far region


@dataclass
class DualChainWithUniformFar:
    """Dual iteration on ``n_cells`` cells with one uniform far block.

    The state is a density ``c`` on cells ``0..L-1`` plus a constant density
    ``far`` on ``[y_L, 1)``; the atom at 1 is carried separately.  One step
    pushes this state forward exactly on the near cells and replaces the
    far part of the image by its average.  The replacement costs at most

        lam_far * |far_new - far| + sum_j |c_j - far| * |I_j| * P_j(far)

    in total variation, where ``P_j(far)`` bounds the probability of jumping
    from cell j into the far block.  These local errors are summed into
    ``error``, so ``|| true iterate - represented state ||_TV <= error``
    at every step.
    """

    i: int
    n_cells: int
    _cdf: np.ndarray = field(init=False, repr=False)
    _widths: np.ndarray = field(init=False, repr=False)
    _escape: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        i, L = check_positive_int(self.i, "i"), check_positive_int(self.n_cells, "n_cells")
        e = np.arange(1, L + 1)
        table = _cdf_table(i, e, L)
        self._cdf = table
        self._widths = seqcore.cell_widths(i, L)
        # probability of landing in cells >= L, from the right end of cell j
        y_right = e / (i + e)
        self._escape = np.minimum(1.0, betainc(L, i, y_right) * (1 + 1e-12) + 1e-300)
        self.far_mass = i / (i + L)

    def start(self, mu: PartitionMeasure):
        """Initial state and its certified distance from ``mu``."""
        if mu.i != self.i:
            raise DomainError("partition mismatch")
        c = mu.padded(max(self.n_cells, mu.J))
        error = mu.tail_mass_bound + math.fsum(c[self.n_cells :] * seqcore.cell_widths(self.i, len(c) - self.n_cells, start=self.n_cells))
        return c[: self.n_cells].copy(), 0.0, mu.atom1, error

    def step(self, c: np.ndarray, far: float):
        """Return the next ``(c, far)`` and the local error bound."""
        jumps = np.diff(np.append(c, far))
        new_c = c[0] + jumps @ self._cdf
        np.maximum(new_c, 0.0, out=new_c)
        near_in = math.fsum(c * self._widths) + far * self.far_mass
        near_out = math.fsum(new_c * self._widths)
        new_far = max(0.0, near_in - near_out) / self.far_mass
        local = self.far_mass * abs(new_far - far) + math.fsum(
            np.abs(c - far) * self._widths * self._escape
        )
        return new_c, new_far, local

    def distance_to_lebesgue(self, c: np.ndarray, far: float, atom: float) -> float:
        return math.fsum(np.abs(c - 1.0) * self._widths) + abs(far - 1.0) * self.far_mass + atom


# ---------------------------------------------------------------------------
# CSV serialization


def measure_to_csv(mu: PartitionMeasure, header: str | None = None) -> str:
    """Serialize as ``l,left,right,coeff`` rows plus metadata rows."""
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["l", "left", "right", "coeff"])
    edges = seqcore.cell_edges(mu.i, mu.J)
    for l in range(mu.J):
        w.writerow([l, repr(float(edges[l])), repr(float(edges[l + 1])), repr(float(mu.coeffs[l]))])
    w.writerow(["atom1", "", "", repr(mu.atom1)])
    w.writerow(["tail_mass_bound", "", "", repr(mu.tail_mass_bound)])
    w.writerow(["i", "", "", mu.i])
    return buf.getvalue()


def measure_from_csv(text: str) -> PartitionMeasure:
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
    if not rows or rows[0] != ["l", "left", "right", "coeff"]:
        raise DomainError("not a PartitionMeasure CSV")
    coeffs, meta = [], {}
    for row in rows[1:]:
        if not row:
            continue
        if row[0] in ("atom1", "tail_mass_bound", "i"):
            meta[row[0]] = row[3]
        else:
            if int(row[0]) != len(coeffs):
                raise DomainError("cell rows must be consecutive from 0")
            coeffs.append(float(row[3]))
    try:
        return PartitionMeasure(int(meta["i"]), float(meta["atom1"]), np.asarray(coeffs), float(meta["tail_mass_bound"]))
    except KeyError as missing:
        raise DomainError(f"missing metadata row {missing}") from None
