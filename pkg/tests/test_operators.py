import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kantorovich import operators as ops
from kantorovich._validation import AccuracyError, DomainError
from kantorovich.observables import parse_polynomial

one = parse_polynomial("1")
e1 = parse_polynomial("t")
sq = parse_polynomial("t^2")
admissible_quad = parse_polynomial("3*t^2-4*t")


# pointwise operators


def test_projection_examples():
    assert ops.apply_projection(one, 0.3) == 1.0
    assert ops.apply_projection(e1, 0.3) == pytest.approx(0.3)
    assert ops.apply_projection(sq, 0.5) == 0.5


def test_bernstein_node_matrix_examples():
    assert np.array_equal(ops.bernstein_node_matrix(1), np.eye(2))
    M = ops.bernstein_node_matrix(2)
    assert M[1] == pytest.approx([0.25, 0.5, 0.25])
    assert np.array_equal(M[0], [1.0, 0.0, 0.0])


@pytest.mark.parametrize("k", range(1, 15))
def test_bernstein_rows_are_binomial_pmfs(k):
    M = ops.bernstein_node_matrix(k)
    assert np.abs(M.sum(axis=1) - 1).max() <= 1e-14
    for m in range(k + 1):
        for j in range(k + 1):
            exact = math.comb(k, j) * Fraction(m, k) ** j * (1 - Fraction(m, k)) ** (k - j)
            assert M[m, j] == pytest.approx(float(exact), rel=1e-13, abs=1e-300)


def test_apply_bernstein_examples():
    assert ops.apply_bernstein(5, one, 0.37) == pytest.approx(1.0, abs=1e-15)
    assert ops.apply_bernstein(5, e1, 0.37) == pytest.approx(0.37, abs=1e-15)
    assert ops.apply_bernstein(2, sq, 0.5) == 0.375


def direct_mkz(i, f, x, n=10**5):
    """Series summed term by term with the ratio recurrence."""
    w = (1 - x) ** (i + 1)
    total = 0.0
    for j in range(n):
        total += w * f(j / (i + j))
        w *= (i + j + 1) / (j + 1) * x
    return total


def test_mkz_examples():
    g = parse_polynomial("t^3-2*t+7")
    assert ops.apply_mkz(2, g, 1.0) == g(1.0)
    assert ops.apply_mkz(2, one, 0.6) == pytest.approx(1.0, abs=1e-10)
    assert ops.apply_mkz(1, e1, 0.5, eps=1e-10) == pytest.approx(direct_mkz(1, e1, 0.5), abs=1e-10)
    assert ops.apply_mkz(1, e1, 0.5) == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("i,x", [(1, 0.3), (2, 0.7), (3, 0.95)])
def test_mkz_matches_direct_series(i, x):
    assert ops.apply_mkz(i, sq, x) == pytest.approx(direct_mkz(i, sq, x), abs=1e-10)


def test_subinterval_integrals_examples():
    assert ops.subinterval_integrals(one, 1, 2) == pytest.approx([0.5, 1 / 6], rel=1e-15)
    assert ops.subinterval_integrals(e1, 1, 2) == pytest.approx([1 / 8, 7 / 72], rel=1e-14)
    assert ops.subinterval_integrals(parse_polynomial("t^3"), 2, 1, quad_order=2) == pytest.approx([1 / 324], rel=1e-14)


@given(st.integers(1, 5), st.integers(0, 200), st.integers(2, 6))
@settings(max_examples=40)
def test_gauss_rule_exact_up_to_its_degree(i, start, order):
    degree = 2 * order - 1
    p = parse_polynomial("+".join(f"{(-1) ** d * (d + 1)}*t^{d}" for d in range(degree + 1)))
    got = ops.subinterval_integrals(p, i, 3, quad_order=order, start=start)
    anti = p.integ()
    j = np.arange(start, start + 3)
    exact = anti((j + 1) / (i + j + 1)) - anti(j / (i + j))
    assert got == pytest.approx(exact, rel=1e-10, abs=1e-15)


def test_kantorovich_examples():
    g = parse_polynomial("5*t^4-t")
    assert ops.apply_kantorovich(3, g, 1.0) == g(1.0)
    assert ops.apply_kantorovich(1, one, 0.7) == pytest.approx(1.0, abs=1e-10)
    assert ops.apply_kantorovich(1, e1, 0.0) == pytest.approx(0.25, rel=1e-15)


def direct_kantorovich(i, x, n=20000):
    """Sum alpha_j times exact cell integrals of t^2, in rational arithmetic."""
    xf = Fraction(x)
    total = Fraction(0)
    w = (i + 1) * (1 - xf) ** i
    for j in range(n):
        a, b = Fraction(j, i + j), Fraction(j + 1, i + j + 1)
        total += w * (b**3 - a**3) / 3
        w *= Fraction(i + j + 2, j + 1) * xf
        if w < Fraction(1, 10**30):
            break
    return float(total)


@pytest.mark.parametrize("i,x", [(1, 0.25), (2, 0.5), (3, 0.75)])
def test_kantorovich_matches_rational_series(i, x):
    assert ops.apply_kantorovich(i, sq, x) == pytest.approx(direct_kantorovich(i, x), abs=1e-10)


@pytest.mark.parametrize("bad", [0.0, 0.5, -1e-3])
def test_eps_out_of_range(bad):
    with pytest.raises(DomainError):
        ops.apply_mkz(1, e1, 0.5, eps=bad)
    with pytest.raises(DomainError):
        ops.apply_kantorovich(1, e1, 0.5, eps=bad)
    with pytest.raises(DomainError):
        ops.OperatorSpec.kantorovich(1, eps=bad)


# types


def test_operator_spec_validation():
    assert ops.OperatorSpec("Kantorovich", 2).kind == "kantorovich"
    assert ops.OperatorSpec.projection().param is None
    with pytest.raises(DomainError):
        ops.OperatorSpec("kantorovich", 0)
    with pytest.raises(DomainError):
        ops.OperatorSpec("szasz", 1)
    with pytest.raises(DomainError):
        ops.OperatorSpec.bernstein(1.5)


def test_grid_function_validation():
    gf = ops.GridFunction([0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
    assert gf(0.25) == 1.5
    with pytest.raises(DomainError):
        ops.GridFunction([0.0, 0.5], [1.0, 2.0])
    with pytest.raises(DomainError):
        ops.GridFunction([0.0, 0.5, 0.4, 1.0], [0, 0, 0, 0])
    with pytest.raises(DomainError):
        ops.GridFunction([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        gf.values[0] = 5.0


def test_standard_grid_contents():
    spec = ops.OperatorSpec.kantorovich(2)
    g = ops.standard_grid(spec)
    assert g[0] == 0.0 and g[-1] == 1.0 and np.all(np.diff(g) > 0)
    for p in range(1, 21):
        assert np.any(g == 1 - 2.0**-p)
    for j in range(65):
        assert np.any(np.isclose(g, j / (2 + j), rtol=0, atol=1e-15))
    assert np.any(g == 0.5 + 1 / 256)


# grid iteration


@pytest.fixture(scope="module")
def kantorovich1():
    return ops.make_operator(ops.OperatorSpec.kantorovich(1))


@pytest.fixture(scope="module")
def mkz1():
    return ops.make_operator(ops.OperatorSpec.mkz(1))


def test_transition_matrices_are_stochastic(kantorovich1, mkz1):
    for op in (kantorovich1, mkz1):
        M = op.matrix_
        assert M.min() >= 0
        assert np.abs(M.sum(axis=1) - 1).max() <= 1e-13
        assert np.array_equal(M[-1], np.eye(len(M))[-1])


def test_kantorovich_never_feeds_the_fixed_point(kantorovich1):
    assert np.all(kantorovich1.matrix_[:-1, -1] == 0)


def test_mkz_grid_step_preserves_affine_functions(mkz1):
    v = mkz1.matrix_ @ mkz1.grid_
    assert np.abs(v - mkz1.grid_).max() <= 1e-9


def test_one_grid_step_matches_pointwise_operator(kantorovich1):
    v = kantorovich1.iterate(sq, 1)
    xs = kantorovich1.grid_[::17]
    exact = [ops.apply_kantorovich(1, sq, float(x)) for x in xs]
    assert v(xs) == pytest.approx(exact, abs=2e-5)


def test_projection_is_idempotent():
    f = parse_polynomial("t^3-2*t+1")
    a = ops.iterate_on_grid(ops.OperatorSpec.projection(), f, 1)
    b = ops.iterate_on_grid(ops.OperatorSpec.projection(), f, 7)
    assert np.array_equal(a.values, b.values)


def test_kantorovich_keeps_constants(kantorovich1):
    v = kantorovich1.iterate(one, 20)
    assert np.abs(v.values - 1).max() <= 1e-10


def test_bernstein_iterates_tend_to_affine_limit():
    v = ops.iterate_on_grid(ops.OperatorSpec.bernstein(2), sq, 60)
    assert np.abs(v.values - v.grid).max() <= 1e-15


@pytest.mark.parametrize("k", [2, 5, 10])
def test_bernstein_node_powers_match_repeated_application(k):
    f = parse_polynomial("t^3-t^2+0.3")
    op = ops.BernsteinOperator(k).fit()
    nodes = np.arange(k + 1) / k
    values = f(nodes)
    its = list(op.iterates(f, 50))
    for m in range(1, 51):
        values = np.array([ops.apply_bernstein(k, lambda t, v=values: np.interp(t, nodes, v), x) for x in nodes])
        assert its[m][np.searchsorted(op.grid_, nodes)] == pytest.approx(values, abs=1e-12)


def test_boundary_value_is_bit_identical(kantorovich1, mkz1):
    f = parse_polynomial("t^4-1.6*t+2")
    for op in (kantorovich1, mkz1):
        for v in op.iterates(f, 300):
            assert v[-1] == f(1.0)


@pytest.mark.parametrize("fixture", ["kantorovich1", "mkz1"])
def test_positivity_and_contraction(fixture, request):
    op = request.getfixturevalue(fixture)
    rng = np.random.default_rng(4)
    for _ in range(5):
        f = ops.GridFunction(op.grid_, rng.normal(size=len(op.grid_)))
        v = op.iterate(f, 1).values
        assert v.min() >= f.values.min() - 1e-10
        assert v.max() <= f.values.max() + 1e-10


def test_mkz_limit_is_affine(mkz1):
    errs = [np.abs(v - mkz1.grid_).max() for v in mkz1.iterates(sq, 200)]
    assert min(errs) < 1e-3
    assert np.all(np.diff(errs) <= 1e-12)


def test_cesaro_examples(kantorovich1):
    f = parse_polynomial("t^3")
    assert np.array_equal(kantorovich1.cesaro(f, 1).values, f(kantorovich1.grid_))
    proj = ops.make_operator(ops.OperatorSpec.projection())
    m = 9
    avg = proj.cesaro(f, m)
    tf = proj.iterate(f, 1)
    assert avg.values == pytest.approx((f(proj.grid_) + (m - 1) * tf.values) / m, abs=1e-15)


def test_cesaro_of_admissible_quadratic(kantorovich1):
    avg = kantorovich1.cesaro(admissible_quad, 200)
    assert avg.values[-1] == -1.0
    inside = avg.grid <= 0.5
    assert np.abs(avg.values[inside] + 1).max() < 0.05


def test_coarse_grid_is_rejected():
    coarse = np.linspace(0, 1, 5)
    op = ops.KantorovichOperator(1, grid=coarse).fit()
    with pytest.raises(AccuracyError):
        op.sample(parse_polynomial("t^4"))
