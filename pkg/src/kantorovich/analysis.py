"""Convergence experiments and their verdicts.

The verdicts rest on two exact facts about the Kantorovich operator: the
value at 1 is never changed, and the iterates of an observable can only
converge uniformly to its integral.  A persistent gap ``|f(1) - int f|`` is
therefore a certificate of divergence, not a heuristic.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate
from scipy.special import betaln

from . import measures, seqcore
from ._validation import (
    AccuracyError,
    DomainError,
    WorkLimitError,
    check_half_open_unit,
    check_open_unit,
    check_positive_int,
    check_positive_real,
)
from .observables import evaluate, exact_integral
from .operators import OperatorSpec, make_operator

__all__ = [
    "AcuRasaVerdict",
    "ConvergenceReport",
    "DualConvergence",
    "GapSurvey",
    "acu_rasa_verdict",
    "uniform_convergence_probe",
    "affine_limit_probe",
    "rate_estimate",
    "dual_convergence_probe",
    "gap02_survey",
    "ratio_bound_check",
    "kernel_stochasticity_check",
    "zero_two_echo",
    "cesaro_check",
    "NEAR_ONE",
]

NEAR_ONE = (0.9, 0.99, 0.999, 0.9999)


class AcuRasaVerdict(NamedTuple):
    admissible: bool
    f_at_1: float
    integral: float

    @property
    def floor(self) -> float:
        """Distance that ``T^m f`` keeps from every constant at x = 1."""
        return abs(self.f_at_1 - self.integral)


def acu_rasa_verdict(f, tol: float = 1e-9) -> AcuRasaVerdict:
    """Is ``f(1)`` equal to the integral of f over [0, 1], within ``tol``?

    Polynomials are integrated exactly; other observables by adaptive
    quadrature, which must reach ``tol/10``.
    """
    tol = check_positive_real(tol, "tol")
    f_at_1 = float(evaluate(f, np.array([1.0]))[0])
    if isinstance(f, Polynomial):
        value = exact_integral(f)
    else:
        with warnings.catch_warnings():
            # the error estimate is checked below
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            value, err = integrate.quad(lambda t: float(evaluate(f, np.array([t]))[0]), 0.0, 1.0, epsabs=tol / 10, limit=200)
        if not err <= tol / 10:
            raise AccuracyError(f"quadrature error estimate {err:.3g} exceeds {tol / 10:.3g}", achieved=err)
    return AcuRasaVerdict(abs(f_at_1 - value) <= tol, f_at_1, float(value))


def rate_estimate(sup_errors, m_values=None, max_residual: float = 0.05) -> float | None:
    """Geometric rate from a least-squares fit of ``log(error)`` against m.

    Returns None when the decay is not geometric: the rms residual of the
    fit exceeds ``max_residual`` or the fitted rate is not below 1.
    """
    err = np.asarray(sup_errors, dtype=float)
    if err.ndim != 1 or len(err) < 5:
        raise DomainError("rate_estimate needs at least 5 errors")
    if np.any(~(err > 0)):
        raise DomainError("errors must be positive")
    m = np.arange(len(err), dtype=float) if m_values is None else np.asarray(m_values, dtype=float)
    slope, intercept = np.polyfit(m, np.log(err), 1)
    resid = np.log(err) - (slope * m + intercept)
    rate = math.exp(slope)
    # a flat series fits with slope of rounding size; that is not decay
    if math.sqrt(np.mean(resid**2)) > max_residual or rate >= 1 - 1e-9:
        return None
    return float(rate)


@dataclass
class ConvergenceReport:
    operator: OperatorSpec
    observable_id: str
    m_values: np.ndarray
    sup_errors: np.ndarray
    rate_estimate: float | None
    verdict: str
    target_constant: float
    floor: float = 0.0
    tol: float = 1e-2

    def to_csv(self, header: str | None = None) -> str:
        """Columns ``m, sup_error, lower_interval, upper_interval``.

        The grid maximum is a lower bound for the true sup norm; the
        certified floor is the other lower bound.
        """
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "sup_error", "lower_interval", "upper_interval"])
        for m, e in zip(self.m_values, self.sup_errors):
            w.writerow([int(m), repr(float(e)), repr(max(float(e), self.floor)), ""])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "operator": self.operator.label(),
            "observable": self.observable_id,
            "verdict": self.verdict,
            "rate": self.rate_estimate,
            "target": None if math.isnan(self.target_constant) else self.target_constant,
            "floor": self.floor,
            "tol": self.tol,
            "m_last": int(self.m_values[-1]),
            "final_sup_error": float(self.sup_errors[-1]),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _geometric_tail_rate(errors: np.ndarray) -> float | None:
    # fit only the late part of the run, where the slowest mode dominates
    pos = errors[errors > 0]
    if len(pos) < 10:
        return None
    tail = pos[len(pos) // 2 :]
    try:
        return rate_estimate(tail, max_residual=0.25)
    except DomainError:
        return None


def uniform_convergence_probe(
    i: int,
    f,
    m_max: int = 2000,
    tol: float = 1e-2,
    observable_id: str | None = None,
    operator: OperatorSpec | None = None,
    grid=None,
) -> ConvergenceReport:
    """Iterate the Kantorovich operator (or ``operator``) on f and judge
    uniform convergence to the integral of f.

    Stops at the first m with grid sup error below ``tol`` (verdict
    "converges").  Otherwise the verdict is "diverges" when f violates the
    boundary condition by at least ``tol``, and "inconclusive" if not.
    """
    i = check_positive_int(i, "i")
    m_max = check_positive_int(m_max, "m_max")
    if m_max > 10_000:
        raise DomainError("m_max is capped at 10000")
    tol = check_positive_real(tol, "tol")
    spec = operator if operator is not None else OperatorSpec.kantorovich(i)
    verdict_info = acu_rasa_verdict(f, tol=min(tol, 1e-9))
    target = verdict_info.integral
    op = make_operator(spec, grid)
    errors = []
    verdict = None
    for m, v in enumerate(op.iterates(f, m_max)):
        errors.append(float(np.max(np.abs(v - target))))
        if errors[-1] < tol:
            verdict = "converges"
            break
    if verdict is None:
        verdict = "diverges" if verdict_info.floor >= tol else "inconclusive"
    errors = np.asarray(errors)
    return ConvergenceReport(
        operator=spec,
        observable_id=observable_id or getattr(f, "__name__", "f"),
        m_values=np.arange(len(errors)),
        sup_errors=errors,
        rate_estimate=_geometric_tail_rate(errors) if verdict == "converges" else None,
        verdict=verdict,
        target_constant=target,
        floor=verdict_info.floor,
        tol=tol,
    )


def affine_limit_probe(spec: OperatorSpec, f, m_max: int = 2000, tol: float = 1e-2, observable_id: str | None = None, grid=None) -> ConvergenceReport:
    """Iterate an operator whose limit is ``f(0)(1-x) + f(1)x`` (projection,
    Bernstein, MKZ) and record the grid distance to that limit."""
    m_max = check_positive_int(m_max, "m_max")
    if m_max > 10_000:
        raise DomainError("m_max is capped at 10000")
    tol = check_positive_real(tol, "tol")
    if spec.kind == "kantorovich":
        raise DomainError("the Kantorovich iterates converge to a constant; use uniform_convergence_probe")
    op = make_operator(spec, grid)
    f0, f1 = evaluate(f, np.array([0.0, 1.0]))
    limit = f0 * (1 - op.grid_) + f1 * op.grid_
    errors = []
    for v in op.iterates(f, m_max):
        errors.append(float(np.max(np.abs(v - limit))))
        if errors[-1] < tol:
            break
    errors = np.asarray(errors)
    converged = errors[-1] < tol
    return ConvergenceReport(
        operator=spec,
        observable_id=observable_id or getattr(f, "__name__", "f"),
        m_values=np.arange(len(errors)),
        sup_errors=errors,
        rate_estimate=_geometric_tail_rate(errors) if converged else None,
        verdict="converges" if converged else "inconclusive",
        target_constant=math.nan,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# dual side


@dataclass
class DualConvergence:
    """TV distances to Lebesgue measure along the dual orbit of ``delta_x``.

    ``distances[m]`` belongs to ``T'^(m+1) delta_x``, so entry 0 is the
    one-step image.  The true distance lies in ``[lower[m], upper[m]]``.
    """

    i: int
    x: float
    distances: np.ndarray
    certified_error: np.ndarray
    n_cells: int

    @property
    def lower(self) -> np.ndarray:
        return np.maximum(0.0, self.distances - self.certified_error)

    @property
    def upper(self) -> np.ndarray:
        return np.minimum(2.0, self.distances + self.certified_error)

    def first_below(self, level: float) -> int | None:
        hit = np.nonzero(self.distances < level)[0]
        return int(hit[0]) if len(hit) else None

    def max_increase(self) -> float:
        if len(self.distances) < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(self.distances))))

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "tv_distance", "lower_interval", "upper_interval"])
        for m, (d, lo, hi) in enumerate(zip(self.distances, self.lower, self.upper)):
            w.writerow([m, repr(float(d)), repr(float(lo)), repr(float(hi))])
        return buf.getvalue()


@lru_cache(maxsize=1)
def _dual_chain(i: int, n_cells: int) -> measures.DualChainWithUniformFar:
    return measures.DualChainWithUniformFar(i, n_cells)


def dual_convergence_probe(
    i: int,
    x: float,
    m_max: int = 500,
    eps: float = 1e-12,
    n_cells: int = 8192,
    stop_below: float | None = None,
) -> DualConvergence:
    """Iterate the dual operator from ``T' delta_x`` and record the TV
    distance to Lebesgue measure after each step.

    Cells beyond ``n_cells`` are merged into one uniform block; the error
    this causes is accumulated into ``certified_error``.  With
    ``stop_below`` the run ends at the first distance under that level.
    """
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    m_max = check_positive_int(m_max, "m_max")
    if m_max > 1000:
        raise DomainError("m_max is capped at 1000")
    chain = _dual_chain(i, check_positive_int(n_cells, "n_cells"))
    c, far, atom, err = chain.start(measures.delta_image(i, x, eps))
    dist = [chain.distance_to_lebesgue(c, far, atom)]
    errs = [err]
    for _ in range(m_max):
        if stop_below is not None and dist[-1] < stop_below:
            break
        c, far, local = chain.step(c, far)
        err += local
        dist.append(chain.distance_to_lebesgue(c, far, atom))
        errs.append(err)
    return DualConvergence(i, x, np.asarray(dist), np.asarray(errs), n_cells)


class GapRow(NamedTuple):
    x: float
    gap: float
    gap_upper: float
    wedge_lower: float
    method: str


@dataclass
class GapSurvey:
    i: int
    rows: list = field(default_factory=list)

    @property
    def max_gap(self) -> float:
        return max(r.gap_upper for r in self.rows)

    @property
    def min_wedge(self) -> float:
        return min(r.wedge_lower for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.max_gap <= 2 - 1e-3 and self.min_wedge >= 1e-3

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "gap", "gap_upper", "wedge_lower", "method"])
        for r in self.rows:
            w.writerow([repr(r.x), repr(r.gap), repr(r.gap_upper), repr(r.wedge_lower), r.method])
        return buf.getvalue()


def gap02_survey(i: int, x_list=NEAR_ONE, eps: float = 1e-10) -> GapSurvey:
    """``||T'^2 delta_x - T' delta_x||_TV`` and the wedge mass over ``x_list``.

    Each entry is exact when the cell count is within the work limit.
    Otherwise it falls back to the certified wedge lower bound, from which the gap is bounded
    by ``2 (1 - wedge)``; ``gap`` is then reported as NaN.
    """
    i = check_positive_int(i, "i")
    xs = [check_half_open_unit(x) for x in x_list]
    if not xs:
        raise DomainError("x_list must not be empty")
    survey = GapSurvey(i)
    for x in xs:
        try:
            g = measures.gap02(i, x, eps)
        except WorkLimitError:
            w = measures.wedge_lower_bound(i, x)
            survey.rows.append(GapRow(x, math.nan, 2.0 * (1.0 - w), w, "bound"))
            continue
        survey.rows.append(GapRow(x, float(g), g.upper, max(0.0, 1.0 - g.upper / 2.0), "exact"))
    return survey


class RatioCheck(NamedTuple):
    window_mass: float
    min_ratio: float


def ratio_bound_check(i: int, x: float, r: float, eps: float = 1e-10) -> RatioCheck:
    """Window mass ``C_x`` and the least ``gamma_l / beta_l`` over the window
    ``floor((1-r) j_x) <= l <= j_x``."""
    i = check_positive_int(i, "i")
    x = check_half_open_unit(x)
    r = check_open_unit(r, "r")
    if not x > 1.0 / (i + 2):
        raise DomainError(f"x must exceed 1/(i+2) = {1.0 / (i + 2):.6g}")
    jx = seqcore.pivot_index(i, x)
    lo = math.floor((1.0 - r) * jx)
    gammas = measures.gamma_weights(i, x, J=jx + 1, eps=eps)[lo : jx + 1]
    betas = seqcore.beta_weights(i, x, jx - lo + 1, start=lo)
    return RatioCheck(seqcore.window_mass(i, x, r), float(np.min(gammas / betas)))


class StochasticityCheck(NamedTuple):
    max_row_err: float
    max_col_err: float


def kernel_stochasticity_check(i: int, J: int = 200, quad_points: int = 64) -> StochasticityCheck:
    """Both marginals of the transition density equal 1.

    Rows: mass of ``T' delta_x`` at ``quad_points`` midpoints x.  Columns:
    ``(i+1) C(i+l+1, l) B(i+1, l+1) - 1`` for the first J cells, with the
    Beta integral in closed form.
    """
    i = check_positive_int(i, "i")
    J = check_positive_int(J, "J")
    quad_points = check_positive_int(quad_points, "quad_points")
    xs = (np.arange(quad_points) + 0.5) / quad_points
    row = 0.0
    for x in xs:
        mu = measures.delta_image(i, float(x), 1e-14)
        row = max(row, abs(mu.represented_mass() + mu.tail_mass_bound - 1.0), mu.tail_mass_bound)
    col = 0.0
    for l in range(J):
        log_val = math.log(i + 1) + seqcore.log_binomial(i + l + 1, l) + float(betaln(i + 1, l + 1))
        col = max(col, abs(math.expm1(log_val)))
    return StochasticityCheck(float(row), float(col))


class EchoResult(NamedTuple):
    first_below: int | None
    differences: np.ndarray


def zero_two_echo(i: int, f, m_max: int = 2000, tol: float = 1e-3, grid=None) -> EchoResult:
    """Grid sup norm of ``T^m (T - I) f``; stops once it falls below ``tol``."""
    op = make_operator(OperatorSpec.kantorovich(i), grid)
    diffs = []
    prev = None
    for m, v in enumerate(op.iterates(f, m_max + 1)):
        if prev is not None:
            diffs.append(float(np.max(np.abs(v - prev))))
            if diffs[-1] < tol:
                return EchoResult(m - 1, np.asarray(diffs))
        prev = v
    return EchoResult(None, np.asarray(diffs))


class CesaroCheck(NamedTuple):
    interior_error: float
    value_at_1: float
    integral: float


def cesaro_check(i: int, f, m: int = 2000, interior: float = 0.9, grid=None) -> CesaroCheck:
    """Cesaro average after m steps: distance to the integral on grid points
    ``<= interior``, and the value kept at 1."""
    op = make_operator(OperatorSpec.kantorovich(i), grid)
    avg = op.cesaro(f, m)
    target = acu_rasa_verdict(f).integral
    inside = avg.grid <= interior
    return CesaroCheck(float(np.max(np.abs(avg.values[inside] - target))), float(avg.values[-1]), target)
