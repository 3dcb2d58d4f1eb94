"""The invariant suite run by ``kantorovich verify``.

Each check returns a :class:`CheckResult` whose details hold only
deterministic numbers, so two runs with the same seed give identical
reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis, discsim, measures, seqcore
from .observables import OBSERVABLE_BANK, bank_polynomial, parse_polynomial
from .operators import BernsteinOperator, OperatorSpec, bernstein_node_matrix, make_operator

__all__ = [
    "CheckResult",
    "WEIGHT_LATTICE_X",
    "DUAL_START_POINTS",
    "DISC_STARTS",
    "check_dichotomy",
    "check_kernel_stochasticity",
    "check_lebesgue_invariance",
    "check_dual_stability",
    "check_gap_survey",
    "check_weight_laws",
    "check_wedge_identity",
    "check_bernstein_rate",
    "check_mkz_limit",
    "check_zero_two_echo",
    "check_disc_simulation",
    "run_suite",
]

WEIGHT_LATTICE_X = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 0.999)
DUAL_START_POINTS = (0.0, 0.5, 0.9, 0.99)
DISC_STARTS = (0j, 0.4 + 0.3j)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}"


def check_dichotomy(i: int, m_max: int = 2000, tol: float = 1e-2) -> CheckResult:
    """Converges exactly for the admissible bank entries, diverges otherwise."""
    rows = {}
    ok = True
    for name in OBSERVABLE_BANK:
        f = bank_polynomial(name)
        admissible = analysis.acu_rasa_verdict(f).admissible
        rep = analysis.uniform_convergence_probe(i, f, m_max, tol, observable_id=name)
        expected = "converges" if admissible else "diverges"
        ok &= rep.verdict == expected and (admissible or rep.sup_errors[-1] >= rep.floor - 1e-12)
        rows[name] = {"verdict": rep.verdict, "m": int(rep.m_values[-1]), "floor": rep.floor}
    return CheckResult(f"dichotomy i={i}", bool(ok), rows)


def check_kernel_stochasticity(i_values=range(1, 6), J: int = 200, tol: float = 1e-10) -> CheckResult:
    rows = {}
    ok = True
    for i in i_values:
        res = analysis.kernel_stochasticity_check(i, J)
        ok &= res.max_row_err < tol and res.max_col_err < tol
        rows[str(i)] = {"row": res.max_row_err, "col": res.max_col_err}
    return CheckResult("kernel double stochasticity", bool(ok), rows)


def check_lebesgue_invariance(i: int, tail: float = 1e-6, tol: float = 2e-6) -> CheckResult:
    J = measures.lebesgue_cells_for_tail(i, tail)
    lam = measures.lebesgue_measure(i, J)
    image = measures.dual_apply(i, lam, eps=2 * tail)
    tv = measures.tv_distance(image, lam)
    return CheckResult(
        f"lebesgue invariance i={i}",
        float(tv) <= tol,
        {"J": J, "tv": float(tv), "tv_upper": tv.upper},
    )


def check_dual_stability(i: int, xs=DUAL_START_POINTS, level: float = 1e-3, m_max: int = 500) -> CheckResult:
    """TV distance to Lebesgue measure drops below ``level`` and never rises.

    The certified enclosure of the truncated iteration is reported next to
    the point value.
    """
    rows = {}
    ok = True
    for x in xs:
        run = analysis.dual_convergence_probe(i, x, m_max, stop_below=level)
        m_hit = run.first_below(level)
        rise = run.max_increase()
        ok &= m_hit is not None and rise <= 1e-9
        rows[repr(x)] = {
            "m": m_hit,
            "tv": float(run.distances[-1]),
            "certified_upper": float(run.upper[-1]),
            "max_increase": rise,
        }
    return CheckResult(f"dual stability i={i}", bool(ok), rows)


def check_gap_survey(i_values=range(1, 6), xs=analysis.NEAR_ONE) -> CheckResult:
    rows = {}
    ok = True
    for i in i_values:
        s = analysis.gap02_survey(i, xs)
        ok &= s.passed
        rows[str(i)] = {"max_gap": s.max_gap, "min_wedge": s.min_wedge}
    return CheckResult("gap survey", bool(ok), rows)


def _weight_law_failures(i: int, x: float, tol: float) -> list[str]:
    bad = []
    J = seqcore.truncation_index(i, x, 1e-12)
    w = seqcore.kantorovich_weights(i, x, J=J)
    total = math.fsum(w.betas) + w.tail_bound
    if not abs(total - 1.0) <= tol:
        bad.append("normalization")
    a, b = w.alphas, w.betas
    j = np.arange(J - 1, dtype=float)
    keep = (a[:-1] > 1e-300) & (a[1:] > 1e-300)
    if x > 0 and np.any(np.abs(a[1:][keep] / a[:-1][keep] / ((1 + (i + 1) / (j[keep] + 1)) * x) - 1) > tol):
        bad.append("alpha ratio")
    keep = (b[:-1] > 1e-300) & (b[1:] > 1e-300)
    if x > 0 and np.any(np.abs(b[1:][keep] / b[:-1][keep] / ((1 + (i - 1) / (j[keep] + 1)) * x) - 1) > tol):
        bad.append("beta ratio")
    p = w.pivot
    bound = i * x / (1 - x)
    if not (bound - 1 < p <= bound + 1e-12):
        bad.append("pivot bound")
    if x > 1.0 / (i + 2):
        n = 10 * p + 10
        aa = seqcore.alpha_weights(i, x, n)
        bb = seqcore.beta_weights(i, x, n)
        if abs(aa[w.alpha_peak] / aa.max() - 1) > tol or abs(bb[w.beta_peak] / bb.max() - 1) > tol:
            bad.append("peak value")
    return bad


def check_weight_laws(i_values=range(1, 6), xs=WEIGHT_LATTICE_X, tol: float = 1e-10) -> CheckResult:
    failures = {}
    for i in i_values:
        for x in xs:
            bad = _weight_law_failures(i, x, tol)
            if bad:
                failures[f"{i},{x!r}"] = bad
    n = len(list(i_values)) * len(xs)
    return CheckResult("weight laws", not failures, {"points": n, "failures": failures})


def random_probability_measure(rng: np.random.Generator, i: int, J: int) -> measures.PartitionMeasure:
    atom = float(rng.uniform(0, 0.3)) if rng.random() < 0.5 else 0.0
    c = rng.exponential(size=J)
    c *= (1.0 - atom) / math.fsum(c * seqcore.cell_widths(i, J))
    return measures.PartitionMeasure(i, atom, c, 0.0)


def check_wedge_identity(seed: int = 0, pairs: int = 100, tol: float = 1e-9) -> CheckResult:
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for _ in range(pairs):
        i = int(rng.integers(1, 6))
        mu = random_probability_measure(rng, i, int(rng.integers(1, 80)))
        nu = random_probability_measure(rng, i, int(rng.integers(1, 80)))
        tv = measures.tv_distance(mu, nu)
        wedge = measures.lattice_min_mass(mu, nu)
        worst = max(worst, abs(float(tv) - 2 * (1 - float(wedge))) - tv.slack)
    return CheckResult("wedge identity", worst <= tol, {"pairs": pairs, "worst_excess": max(worst, 0.0)})


def bernstein_errors(k: int, m_max: int = 60, floor: float = 1e-11) -> np.ndarray:
    """Sup errors of ``B_k^m t^2`` against its limit ``x`` for m = 1, 2, ...,
    stopping before they reach rounding level."""
    op = BernsteinOperator(k).fit()
    errors = []
    for v in list(op.iterates(parse_polynomial("t^2"), m_max))[1:]:
        e = float(np.max(np.abs(v - op.grid_)))
        if e < floor:
            break
        errors.append(e)
    return np.array(errors)


def third_eigenvalue(k: int) -> float:
    ev = np.sort(np.abs(np.linalg.eigvals(bernstein_node_matrix(k))))[::-1]
    return float(ev[2])


def check_bernstein_rate(k_values=range(2, 7), tol: float = 0.05) -> CheckResult:
    rows = {}
    ok = True
    for k in k_values:
        rate = analysis.rate_estimate(bernstein_errors(k))
        lam = third_eigenvalue(k)
        good = rate is not None and abs(rate / lam - 1) <= tol
        ok &= good
        rows[str(k)] = {"rate": rate, "eigenvalue": lam}
    return CheckResult("bernstein rate", bool(ok), rows)


def check_mkz_limit(i: int, m_max: int = 5000, level: float = 1e-3) -> CheckResult:
    op = make_operator(OperatorSpec.mkz(i))
    f = parse_polynomial("t^2")
    hit = None
    err = math.inf
    for m, v in enumerate(op.iterates(f, m_max)):
        err = float(np.max(np.abs(v - op.grid_)))
        if err < level:
            hit = m
            break
    return CheckResult(f"mkz limit i={i}", hit is not None, {"m": hit, "sup_error": err})


def check_zero_two_echo(i: int, m_max: int = 2000, level: float = 1e-3) -> CheckResult:
    rows = {}
    ok = True
    for name in OBSERVABLE_BANK:
        res = analysis.zero_two_echo(i, bank_polynomial(name), m_max, level)
        ok &= res.first_below is not None
        rows[name] = res.first_below
    return CheckResult(f"zero-two echo i={i}", bool(ok), rows)


def check_disc_simulation(seed: int = 0, n: int = 10**6) -> CheckResult:
    means, errors = [], []
    for tid, z0 in enumerate(DISC_STARTS):
        path = discsim.disc_trajectory(z0, n, seed, tid)
        values = np.abs(path) ** 2
        means.append(float(values.mean()))
        errors.append(discsim.batch_means_error(values))
    combined = math.hypot(*errors)
    agree = abs(means[0] - means[1]) <= 3 * combined
    fixed = all(
        np.all(discsim.disc_trajectory(z, 1000, seed, 9) == z) for z in (1 + 0j, -0.6 + 0.8j, 1j)
    )
    return CheckResult(
        "disc simulation",
        bool(agree and fixed),
        {"means": means, "std_errors": errors, "z_score": abs(means[0] - means[1]) / combined, "boundary_fixed": bool(fixed)},
    )


def run_suite(i: int, seed: int = 0, progress=None) -> list[CheckResult]:
    """All checks at the parameter ``i`` plus the parameter-free ones."""
    steps = [
        lambda: check_dichotomy(i),
        lambda: check_kernel_stochasticity(),
        lambda: check_lebesgue_invariance(i),
        lambda: check_dual_stability(i),
        lambda: check_gap_survey(),
        lambda: check_weight_laws(),
        lambda: check_wedge_identity(seed),
        lambda: check_bernstein_rate(),
        lambda: check_mkz_limit(i),
        lambda: check_zero_two_echo(i),
        lambda: check_disc_simulation(seed),
    ]
    results = []
    for step in steps:
        res = step()
        results.append(res)
        if progress is not None:
            progress(res)
    return results
