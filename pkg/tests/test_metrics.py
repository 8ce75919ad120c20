import itertools
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from cmlab import (
    DiscreteTarget,
    NumericError,
    kl_grid,
    tv_discrete_1d,
    tv_grid,
    w2_empirical_1d,
    w2_stderr_proxy,
    w2_vs_target_1d,
)

TWO_ATOM = DiscreteTarget([0.0, 100.0], [0.5, 0.5])


def gauss_pdf(mean, sd):
    return lambda x: scipy.stats.norm.pdf(x, loc=mean, scale=sd)


# ---------------------------------------------------------------------------
# Wasserstein-2


def test_w2_empirical_examples():
    assert w2_empirical_1d([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert w2_empirical_1d([1.0, 0.0], [0.0, 1.0]) == 0.0  # order irrelevant
    assert w2_empirical_1d([0.0], [3.0]) == 3.0
    assert w2_empirical_1d([0, 0, 0, 0], [1, 1, 1, 1]) == 1.0
    # column vectors are accepted
    assert w2_empirical_1d(np.zeros((3, 1)), np.ones((3, 1))) == 1.0


def test_w2_empirical_errors():
    with pytest.raises(NumericError):
        w2_empirical_1d([1.0, 2.0], [1.0])
    with pytest.raises(NumericError):
        w2_empirical_1d([], [])
    with pytest.raises(NumericError):
        w2_empirical_1d(np.zeros((2, 2)), np.zeros((2, 2)))


def _w2_bruteforce(a, b):
    # minimize the assignment cost over all permutations
    best = math.inf
    for perm in itertools.permutations(range(len(b))):
        cost = sum((x - b[j]) ** 2 for x, j in zip(a, perm))
        best = min(best, cost)
    return math.sqrt(best / len(a))


def test_w2_sorted_coupling_is_optimal():
    """The sorted coupling must beat every permutation, instance by instance."""
    rng = np.random.default_rng(2718)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        a = rng.normal(0, 3, n)
        b = rng.normal(1, 2, n)
        assert w2_empirical_1d(a, b) == pytest.approx(
            _w2_bruteforce(list(a), list(b)), rel=1e-12, abs=1e-12
        )


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=12),
    st.data(),
)
def test_w2_triangle_inequality(a, data):
    n = len(a)
    elt = st.floats(min_value=-50, max_value=50)
    b = data.draw(st.lists(elt, min_size=n, max_size=n))
    c = data.draw(st.lists(elt, min_size=n, max_size=n))
    ab = w2_empirical_1d(a, b)
    bc = w2_empirical_1d(b, c)
    ac = w2_empirical_1d(a, c)
    assert ac <= ab + bc + 1e-9


def test_w2_vs_target_point_mass_at_zero():
    # All mass at 0 against the equal two-atom law: W2^2 = 0.5 * 100^2.
    samples = np.zeros(10_000)
    assert w2_vs_target_1d(samples, TWO_ATOM) == pytest.approx(
        70.71067811865476, rel=1e-12
    )


def test_w2_vs_target_on_exact_quantiles():
    # Samples placed exactly at the coupling quantiles give W2 = 0.
    from cmlab import target_quantiles_1d

    n = 4001
    u = (np.arange(1, n + 1) - 0.5) / n
    samples = target_quantiles_1d(TWO_ATOM, u)
    assert w2_vs_target_1d(samples, TWO_ATOM) == 0.0


def test_w2_stderr_proxy_behaviour():
    rng = np.random.default_rng(7)
    small = rng.choice([0.0, 100.0], size=1000)
    big = rng.choice([0.0, 100.0], size=100_000)
    se_small = w2_stderr_proxy(small, TWO_ATOM)
    se_big = w2_stderr_proxy(big, TWO_ATOM)
    assert se_small > 0 and se_big > 0
    assert se_big < se_small  # shrinks with sample size
    # an exactly balanced two-valued sample still reports a positive proxy
    exact = np.repeat([0.0, 100.0], 500)
    assert w2_stderr_proxy(exact, TWO_ATOM) > 0


# ---------------------------------------------------------------------------
# grid TV / KL


def test_tv_gaussian_shift():
    # TV(N(0,1), N(1,1)) = 2 Phi(1/2) - 1
    got = tv_grid(gauss_pdf(0, 1), gauss_pdf(1, 1), -12, 13)
    assert got.value == pytest.approx(0.38292492254802624, abs=1e-5)
    assert abs(got.truncation_a) < 1e-6 and abs(got.truncation_b) < 1e-6


def test_tv_identical_and_disjoint():
    same = tv_grid(gauss_pdf(0, 1), gauss_pdf(0, 1), -10, 10)
    assert same.value == pytest.approx(0.0, abs=1e-12)
    far = tv_grid(gauss_pdf(0, 0.5), gauss_pdf(60, 0.5), -10, 70, n_grid=40001)
    assert far.value == pytest.approx(1.0, abs=1e-6)


def test_tv_grid_refinement_is_converged():
    coarse = tv_grid(gauss_pdf(0, 1), gauss_pdf(0.7, 1.3), -14, 14).value
    fine = tv_grid(gauss_pdf(0, 1), gauss_pdf(0.7, 1.3), -14, 14, n_grid=40001).value
    assert abs(coarse - fine) < 1e-6


def test_kl_gaussian_closed_forms():
    # KL(N(mu,1) || N(0,1)) = mu^2 / 2
    for mu in (0.3, 1.0, 2.0):
        got = kl_grid(gauss_pdf(mu, 1), gauss_pdf(0, 1), -14, 16).value
        assert got == pytest.approx(mu * mu / 2.0, abs=1e-6)
    # KL(N(0,1) || N(0,4)) = ln 2 - 3/8
    got = kl_grid(gauss_pdf(0, 1), gauss_pdf(0, 2), -13, 13).value
    assert got == pytest.approx(0.3181471805599453, abs=1e-9)


def test_pinsker():
    rng = np.random.default_rng(41)
    for _ in range(100):
        m1, m2 = rng.normal(0, 1, 2)
        s1, s2 = np.exp(rng.normal(0, 0.3, 2))
        lo = min(m1 - 12 * s1, m2 - 12 * s2)
        hi = max(m1 + 12 * s1, m2 + 12 * s2)
        tv = tv_grid(gauss_pdf(m1, s1), gauss_pdf(m2, s2), lo, hi).value
        kl = kl_grid(gauss_pdf(m1, s1), gauss_pdf(m2, s2), lo, hi).value
        assert tv <= math.sqrt(0.5 * kl) + 1e-9


def test_grid_validation_errors():
    with pytest.raises(NumericError):
        tv_grid(gauss_pdf(0, 1), gauss_pdf(0, 1), 5, -5)  # empty range
    with pytest.raises(NumericError):
        tv_grid(gauss_pdf(0, 1), gauss_pdf(0, 1), -10, 10, n_grid=100)
    with pytest.raises(NumericError, match="density a"):
        tv_grid(gauss_pdf(0, 1), gauss_pdf(0, 0.1), -1, 1)  # a truncated
    with pytest.raises(NumericError, match="density b"):
        tv_grid(gauss_pdf(0, 0.05), gauss_pdf(0, 1), -1, 1)  # b truncated


def test_kl_support_violation():
    with pytest.raises(NumericError, match="support"):
        kl_grid(gauss_pdf(0, 1), gauss_pdf(300, 0.01), -12, 312, n_grid=200001)


def test_tv_discrete():
    samples = np.array([0.0, 0.0, 100.0, 100.0])
    assert tv_discrete_1d(samples, TWO_ATOM) == 0.0
    samples = np.array([0.0, 0.0, 0.0, 100.0])
    assert tv_discrete_1d(samples, TWO_ATOM) == pytest.approx(0.25, rel=1e-12)
    # nearest-atom classification: 49 belongs to the 0 atom
    assert tv_discrete_1d(np.array([49.0, 51.0]), TWO_ATOM) == 0.0
