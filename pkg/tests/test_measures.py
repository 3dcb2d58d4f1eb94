import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import beta as beta_fn

from kantorovich import measures as ms
from kantorovich import seqcore
from kantorovich._validation import AccuracyError, DomainError, WorkLimitError


def exact_two_step_from_zero(n_cells):
    """Cell densities of the two-step image of delta_0 for i = 1, exactly.

    The one-step image has density 2 on [0, 1/2); pushing it again gives
    c_l = (l+1)(l+2) * 2 * int_0^{1/2} (1-y) y^l dy.
    """
    h = Fraction(1, 2)
    out = []
    for l in range(n_cells):
        moment = h ** (l + 1) / (l + 1) - h ** (l + 2) / (l + 2)
        out.append((l + 1) * (l + 2) * 2 * moment)
    return out


def quad_gamma(i, x, l, n_source):
    """T'^2 delta_x (I_l) = sum_j alpha_j(x) int_{I_j} beta_l(y) dy by quadrature."""
    alphas = seqcore.alpha_weights(i, x, n_source)
    edges = seqcore.cell_edges(i, n_source)
    total = 0.0
    for j in range(n_source):
        part, _ = integrate.quad(
            lambda y: math.comb(i + l - 1, l) * (1 - y) ** i * y**l, edges[j], edges[j + 1], epsabs=1e-15
        )
        total += alphas[j] * part
    return total


# construction


def test_delta_image_examples():
    mu = ms.delta_image(1, 0.0, 1e-12)
    assert np.array_equal(mu.coeffs, [2.0]) and mu.atom1 == 0.0
    assert mu.represented_mass() == 1.0
    assert ms.delta_image(1, 0.5).coeffs[:3] == pytest.approx([1.0, 1.5, 1.5])
    assert ms.delta_image(2, 0.3).represented_mass() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(DomainError):
        ms.delta_image(1, 1.0)


@given(st.integers(1, 5), st.floats(0, 0.999))
@settings(max_examples=50)
def test_delta_images_are_probabilities(i, x):
    mu = ms.delta_image(i, x, 1e-10)
    assert mu.tail_mass_bound <= 1e-10
    assert 1 - 1e-10 - mu.tail_mass_bound <= mu.represented_mass() <= 1 + 1e-10
    assert np.array_equal(mu.coeffs, seqcore.alpha_weights(i, x, mu.J))


def test_lebesgue_measure_examples():
    lam = ms.lebesgue_measure(1, 1)
    assert np.array_equal(lam.coeffs, [1.0]) and lam.tail_mass_bound == 0.5
    assert ms.lebesgue_measure(1, 999).tail_mass_bound == pytest.approx(1 / 1000, rel=1e-12)
    lam3 = ms.lebesgue_measure(3, 2)
    assert seqcore.cell_edges(3, 2) == pytest.approx([0, 0.25, 0.4])
    assert lam3.represented_mass() == pytest.approx(0.4, rel=1e-15)


def test_dirac_one_and_mixture():
    d = ms.dirac_one(2)
    assert d.atom1 == 1.0 and d.J == 0
    mix = ms.mixture(ms.lebesgue_measure(2, 10), d, 0.25)
    assert mix.atom1 == 0.75
    assert mix.coeffs == pytest.approx(np.full(10, 0.25))


# moments and dual step


def test_moments_of_lebesgue_measure():
    lam = ms.lebesgue_measure(1, 10**6)
    m = ms.moments(lam, 3)
    exact = [beta_fn(2, l + 1) for l in range(4)]
    assert m == pytest.approx(exact, abs=2e-6)
    assert m[:2] == pytest.approx([0.5, 1 / 6], abs=2e-6)


def test_moments_of_dirac_one_vanish():
    assert np.array_equal(ms.moments(ms.dirac_one(3), 5), np.zeros(6))


@pytest.mark.parametrize("i", [1, 2, 4])
def test_moments_against_quadrature(i):
    mu = ms.delta_image(i, 0.6, 1e-12)
    m = ms.moments(mu, 6)
    edges = seqcore.cell_edges(i, mu.J)
    for l in range(7):
        exact = math.fsum(
            c * integrate.quad(lambda y: (1 - y) ** i * y**l, edges[j], edges[j + 1], epsabs=1e-16)[0]
            for j, c in enumerate(mu.coeffs)
        )
        assert m[l] == pytest.approx(exact, rel=1e-9, abs=1e-14)


def test_two_step_from_zero_matches_rational_oracle():
    two = ms.dual_apply(1, ms.delta_image(1, 0.0), 1e-12)
    exact = exact_two_step_from_zero(len(two.coeffs))
    assert two.coeffs[:4] == pytest.approx([1.5, 1.0, 0.625, 0.375], rel=1e-14)
    assert two.coeffs == pytest.approx([float(c) for c in exact], rel=1e-12, abs=1e-15)


def test_dual_step_preserves_lebesgue_measure():
    for i in (1, 2):
        J = ms.lebesgue_cells_for_tail(i, 1e-6)
        lam = ms.lebesgue_measure(i, J)
        image = ms.dual_apply(i, lam, eps=2e-6)
        assert float(ms.tv_distance(image, lam)) <= 2e-6
        # the missing input tail only thins the low cells slightly
        assert np.abs(image.coeffs[:1000] - 1).max() <= 2e-6


def test_dual_step_fixes_dirac_one():
    out = ms.dual_apply(1, ms.dirac_one(1))
    assert out.atom1 == 1.0 and out.J == 0


def test_dual_step_of_delta_image_is_gamma_density():
    mu = ms.delta_image(1, 0.5, 1e-12)
    two = ms.dual_apply(1, mu, 1e-10)
    gam = ms.gamma_weights(1, 0.5)
    n = min(len(gam), two.J)
    assert two.coeffs[:n] * seqcore.cell_widths(1, n) == pytest.approx(gam[:n], rel=1e-13)


def test_dual_step_rejects_large_input_tail():
    with pytest.raises(AccuracyError) as info:
        ms.dual_apply(1, ms.lebesgue_measure(1, 10), eps=1e-3)
    assert info.value.achieved == pytest.approx(1 / 11)


def test_dual_step_rejects_partition_mismatch():
    with pytest.raises(DomainError):
        ms.dual_apply(2, ms.delta_image(1, 0.5))


@pytest.mark.parametrize("i,x", [(1, 0.3), (2, 0.3), (2, 0.7)])
def test_gamma_against_quadrature_oracle(i, x):
    gam = ms.gamma_weights(i, x, J=6)
    n_source = seqcore.truncation_index(i, x, 1e-14)
    for l in range(6):
        assert gam[l] == pytest.approx(quad_gamma(i, x, l, n_source), rel=1e-8, abs=1e-14)


def test_gamma_examples():
    assert ms.gamma_weights(1, 0.0)[0] == pytest.approx(0.75, rel=1e-14)
    assert math.fsum(ms.gamma_weights(2, 0.7, eps=1e-10)) == pytest.approx(1.0, abs=1e-10)


# total variation


def test_tv_examples():
    lam = ms.lebesgue_measure(1, 10**6)
    one_step = ms.delta_image(1, 0.0)
    assert float(ms.tv_distance(one_step, one_step)) == 0.0
    tv = ms.tv_distance(ms.dirac_one(1), lam)
    assert tv.lower <= 2.0 <= tv.upper
    tv = ms.tv_distance(one_step, lam)
    assert tv.lower <= 1.0 <= tv.upper and tv.slack <= 2e-6
    w = ms.lattice_min_mass(one_step, lam)
    assert float(w) == pytest.approx(0.5, rel=1e-15)
    assert float(ms.lattice_min_mass(one_step, one_step)) == pytest.approx(1.0, rel=1e-15)
    assert float(ms.lattice_min_mass(ms.dirac_one(1), lam)) == 0.0


def test_tv_rejects_different_partitions():
    with pytest.raises(DomainError):
        ms.tv_distance(ms.delta_image(1, 0.5), ms.delta_image(2, 0.5))
    with pytest.raises(DomainError):
        ms.lattice_min_mass(ms.delta_image(1, 0.5), ms.delta_image(2, 0.5))


@st.composite
def probability_pairs(draw):
    i = draw(st.integers(1, 5))

    def one():
        J = draw(st.integers(1, 60))
        c = np.array(draw(st.lists(st.floats(0, 10), min_size=J, max_size=J)))
        atom = draw(st.sampled_from([0.0, 0.1, 0.5]))
        mass = math.fsum(c * seqcore.cell_widths(i, J))
        if mass == 0:
            c = np.ones(J)
            mass = math.fsum(c * seqcore.cell_widths(i, J))
        return ms.PartitionMeasure(i, atom, c * (1 - atom) / mass, 0.0)

    return one(), one()


@given(probability_pairs())
@settings(max_examples=100)
def test_wedge_identity(pair):
    mu, nu = pair
    tv = ms.tv_distance(mu, nu)
    w = ms.lattice_min_mass(mu, nu)
    assert abs(float(tv) - 2 * (1 - float(w))) <= 1e-9 + tv.slack
    assert 0 <= float(tv) <= 2 + 1e-12


# the 0-2 gap


def test_gap_from_zero_matches_closed_form():
    # |1.5 - 2| * 1/2 on the first cell plus the remaining two-step mass 1/4
    g = ms.gap02(1, 0.0)
    assert g.lower <= 0.5 <= g.upper
    assert float(g) == pytest.approx(0.5, abs=1e-9)


@given(st.integers(1, 3), st.floats(0, 0.95))
@settings(max_examples=20, deadline=None)
def test_gap_is_at_most_two(i, x):
    g = ms.gap02(i, x)
    assert 0 <= float(g) <= 2
    assert g.upper - g.lower <= 1e-9


def test_gap_close_to_one_stays_away_from_two():
    g = ms.gap02(1, 0.999)
    assert g.upper < 2 - 0.01


def test_gap_refuses_huge_exact_work():
    with pytest.raises(WorkLimitError):
        ms.gap02(1, 0.99999)


@pytest.mark.parametrize("i", [1, 3])
@pytest.mark.parametrize("x", [0.0, 0.5, 0.9, 0.99])
def test_wedge_lower_bound_is_below_exact_wedge(i, x):
    one = ms.delta_image(i, x, 5e-11)
    two = ms.dual_apply(i, one, 1e-10)
    exact = float(ms.lattice_min_mass(two, one))
    bound = ms.wedge_lower_bound(i, x)
    assert 0.4 < bound <= exact + 1e-12


def test_wedge_lower_bound_close_to_one():
    assert ms.wedge_lower_bound(1, 0.9999) > 0.7
    assert ms.wedge_lower_bound(5, 1 - 1e-6) > 0.7


# truncated dual chain


def test_chain_with_far_block_tracks_exact_iteration():
    i, x = 1, 0.5
    chain = ms.DualChainWithUniformFar(i, 3000)
    mu = ms.delta_image(i, x, 1e-12)
    c, far, atom, err = chain.start(mu)
    exact = mu
    for k in range(3):
        c, far, local = chain.step(c, far)
        err += local
        # each step's tail budget must also cover the incoming tail
        exact = ms.dual_apply(i, exact, 1e-8 * (k + 1))
    n = min(exact.J, len(c))
    diff = math.fsum(np.abs(exact.coeffs[:n] - c[:n]) * seqcore.cell_widths(i, n))
    assert diff <= err + exact.tail_mass_bound + 1e-12
    assert err < 1e-6


def test_chain_distance_is_nonincreasing():
    chain = ms.DualChainWithUniformFar(2, 2048)
    c, far, atom, err = chain.start(ms.delta_image(2, 0.9))
    last = chain.distance_to_lebesgue(c, far, atom)
    for _ in range(40):
        c, far, _ = chain.step(c, far)
        d = chain.distance_to_lebesgue(c, far, atom)
        assert d <= last + 1e-12
        last = d


# csv


def test_csv_round_trip():
    mu = ms.mixture(ms.delta_image(2, 0.37), ms.dirac_one(2), 0.8)
    text = ms.measure_to_csv(mu, header="config: test")
    assert text.startswith("# config: test\nl,left,right,coeff\n")
    back = ms.measure_from_csv(text)
    assert back.i == 2 and back.atom1 == mu.atom1 and back.tail_mass_bound == mu.tail_mass_bound
    assert np.array_equal(back.coeffs, mu.coeffs)
