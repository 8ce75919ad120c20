import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmlab import (
    ConsistencyFn,
    DiscreteTarget,
    GaussianMixtureTarget,
    MarginalView,
    NumericError,
    PfOdeSolverConfig,
    TrainingPartition,
    consistency_loss,
    evaluation_error,
    exact_single_gaussian,
    exact_two_point,
    gaussian_affine_map,
    make_ou,
    make_ve,
    pf_ode_consistency,
    pf_ode_transport,
    quantile_perturbed,
    wrap_fn,
)

OU = make_ou()
TWO_ATOM = DiscreteTarget([0.0, 100.0], [0.5, 0.5])
GAP2 = 100.0**2


def test_solver_config_validation():
    with pytest.raises(ValueError):
        PfOdeSolverConfig(step=0.0)
    with pytest.raises(ValueError):
        PfOdeSolverConfig(min_time_floor=-1e-6)
    with pytest.raises(ValueError):
        ConsistencyFn(fn=lambda x, t: x, output_radius=-1.0, kind="Bad")


# ---------------------------------------------------------------------------
# threshold oracle


def test_exact_two_point_values():
    f = exact_two_point(TWO_ATOM, OU)
    # boundary at t=1 is 50/e ~ 18.39
    assert float(f(np.array([30.0]), 1.0)[0]) == 100.0
    assert float(f(np.array([10.0]), 1.0)[0]) == 0.0
    assert float(f(np.array([77.0]), 0.0)[0]) == 77.0
    assert f.boundary(1.0) == pytest.approx(50.0 * math.exp(-1.0), rel=1e-15)


def test_exact_two_point_requires_two_equal_atoms():
    with pytest.raises(NumericError):
        exact_two_point(DiscreteTarget([0.0, 100.0], [0.3, 0.7]), OU)
    with pytest.raises(NumericError):
        exact_two_point(DiscreteTarget([0.0, 1.0, 2.0], [1 / 3] * 3), OU)
    with pytest.raises(NumericError):
        exact_two_point(GaussianMixtureTarget([[0.0]], [1.0], [1.0]), OU)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False))
def test_identity_at_time_zero_is_bit_exact(x):
    for f in (
        exact_two_point(TWO_ATOM, OU),
        quantile_perturbed(TWO_ATOM, OU),
        pf_ode_consistency(TWO_ATOM, OU),
        wrap_fn(lambda pts, t: pts * 0.0),
    ):
        assert float(f(np.array([x]), 0.0)[0]) == x


@settings(max_examples=60, deadline=None)
@given(
    x=st.floats(min_value=-1e6, max_value=1e6),
    t=st.floats(min_value=0.1, max_value=10.0),
)
def test_output_stays_in_support_radius(x, t):
    f = exact_two_point(TWO_ATOM, OU)
    assert abs(float(f(np.array([x]), t)[0])) <= 100.0


def test_wrap_fn_clamps_output_norm():
    f = wrap_fn(lambda pts, t: pts * 100.0, output_radius=5.0)
    out = f(np.array([[3.0, 4.0]]), 1.0)
    assert np.linalg.norm(out[0]) == pytest.approx(5.0, rel=1e-12)
    # identity at t = 0 is applied before the wrapped map and is not clamped
    np.testing.assert_array_equal(f(np.array([[30.0, 40.0]]), 0.0), [[30.0, 40.0]])


def test_one_dim_input_squeezes():
    f = exact_two_point(TWO_ATOM, OU)
    out = f(np.array([10.0, 30.0]), 1.0)
    assert out.shape == (2,)
    np.testing.assert_array_equal(out, [0.0, 100.0])


# ---------------------------------------------------------------------------
# single-Gaussian affine oracle


def test_exact_single_gaussian_is_identity_for_stationary_law():
    f = exact_single_gaussian(GaussianMixtureTarget([[0.0]], [1.0], [1.0]), OU)
    x = np.array([[-1.3], [0.0], [2.2]])
    np.testing.assert_allclose(f(x, 2.0), x, rtol=1e-12)


def test_gaussian_affine_map_values():
    target = GaussianMixtureTarget([[2.0]], [0.25], [1.0])
    slope, intercept = gaussian_affine_map(target, OU, 1.0)
    a = math.exp(-1.0)
    big_v = a * a * 0.25 + (1.0 - math.exp(-2.0))
    assert slope == pytest.approx(math.sqrt(0.25 / big_v), rel=1e-14)
    assert intercept == pytest.approx(2.0 * (1.0 - a * slope), rel=1e-14)
    f = exact_single_gaussian(target, OU)
    x = np.array([[0.7]])
    assert float(f(x, 1.0)[0, 0]) == pytest.approx(slope * 0.7 + intercept, rel=1e-12)


def test_single_gaussian_oracle_rejects_mixtures():
    mix = GaussianMixtureTarget([[0.0], [5.0]], [1.0, 1.0], [0.5, 0.5])
    with pytest.raises(NumericError):
        exact_single_gaussian(mix, OU)
    with pytest.raises(NumericError):
        gaussian_affine_map(mix, OU, 1.0)


# ---------------------------------------------------------------------------
# probability-flow ODE


def test_pf_ode_matches_affine_oracle():
    """RK4 denoising of a Gaussian marginal reproduces the closed-form map.

    For N(0, 0.25) under OU the consistency function is linear with slope
    sqrt(v / V_t); the solver integrates to its time floor instead of zero,
    so agreement is at the floor's slope (the gap to t=0 is ~1e-6).
    """
    target = GaussianMixtureTarget([[0.0]], [0.25], [1.0])
    f = pf_ode_consistency(target, OU)
    x = np.array([[-2.0], [-0.5], [0.4], [1.0], [3.0]])
    got = f(x, 1.0)
    slope, _ = gaussian_affine_map(target, OU, 1.0)
    assert slope == pytest.approx(0.5274864609725978, rel=1e-12)
    np.testing.assert_allclose(got, slope * x, rtol=1e-3)
    assert float(np.max(np.abs(got - slope * x))) < 1e-3


def test_pf_ode_discrete_agrees_with_threshold():
    f_ode = pf_ode_consistency(TWO_ATOM, OU)
    f_ref = exact_two_point(TWO_ATOM, OU)
    rng = np.random.default_rng(5)
    t = 2.0
    x = rng.normal(
        50.0 * math.exp(-t), 1.0, size=(200, 1)
    ) + rng.choice([-50.0 * math.exp(-t), 50.0 * math.exp(-t)], size=(200, 1))
    np.testing.assert_array_equal(f_ode(x, t), f_ref(x, t))


def test_pf_ode_transport_is_monotone():
    # 1-D probability-flow trajectories cannot cross.
    grid = np.linspace(-10.0, 50.0, 121)
    out = pf_ode_transport(TWO_ATOM, OU, grid, 2.0, 0.5)
    assert np.all(np.diff(out) >= -1e-9)
    gauss = GaussianMixtureTarget([[0.0]], [1.0], [1.0])
    out = pf_ode_transport(gauss, OU, np.linspace(-4, 4, 81), 1.0, 1e-6)
    assert np.all(np.diff(out) >= -1e-9)


def test_pf_ode_forward_from_zero_follows_mean_path():
    out = pf_ode_transport(TWO_ATOM, OU, np.array([0.0, 100.0]), 0.0, 1.0)
    np.testing.assert_allclose(out, [0.0, 100.0 * math.exp(-1.0)], atol=1e-2)


def test_pf_ode_transport_rejects_zero_endpoint_for_atoms():
    with pytest.raises(NumericError):
        pf_ode_transport(TWO_ATOM, OU, np.array([1.0]), 1.0, 0.0)


def test_pf_ode_transport_noop():
    x = np.array([[1.5], [-2.0]])
    np.testing.assert_array_equal(pf_ode_transport(TWO_ATOM, OU, x, 1.0, 1.0), x)


def test_pf_ode_step_cap():
    cfg = PfOdeSolverConfig(step=1e-12)
    with pytest.raises(NumericError):
        pf_ode_transport(TWO_ATOM, OU, np.array([1.0]), 2.0, 1.0, cfg)


def test_snap_to_atom_requires_atoms():
    gauss = GaussianMixtureTarget([[0.0]], [1.0], [1.0])
    with pytest.raises(NumericError):
        pf_ode_consistency(gauss, OU, snap_to_atom=True)


# ---------------------------------------------------------------------------
# perturbed estimator


def test_quantile_perturbed_boundary():
    fhat = quantile_perturbed(TWO_ATOM, OU, kappa=1e-4)
    exact_boundary = 50.0 * math.exp(-2.0)
    a_t = fhat.boundary(2.0)
    assert a_t > exact_boundary  # shifted toward the upper atom
    assert fhat.boundary(2.0) == a_t  # cache returns the identical value
    # boundary is the stated quantile of the true marginal
    from cmlab import marginal_cdf_1d

    view = MarginalView(TWO_ATOM, OU, 2.0)
    assert float(marginal_cdf_1d(view, a_t)) == pytest.approx(
        0.5 + 1e-4 * 4.0, abs=1e-9
    )


def test_quantile_perturbed_time_zero_and_range():
    fhat = quantile_perturbed(TWO_ATOM, OU)
    assert float(fhat(np.array([33.0]), 0.0)[0]) == 33.0
    with pytest.raises(NumericError):
        fhat(np.array([0.0]), 200.0)  # 0.5 + 1e-4 * 200^2 = 4.5, out of range
    with pytest.raises(NumericError):
        quantile_perturbed(TWO_ATOM, OU, kappa=0.0)


def test_mean_squared_evaluation_error_is_kappa_scaled():
    """The perturbed boundary misassigns kappa*t^2 mass, each error costing
    gap^2 — so the mean squared evaluation error is exactly gap^2*kappa*t^2
    (= t^2 at the defaults)."""
    fhat = quantile_perturbed(TWO_ATOM, OU)
    f = exact_two_point(TWO_ATOM, OU)
    for t, seed in ((2.0, 11), (5.0, 12), (10.0, 13)):
        view = MarginalView(TWO_ATOM, OU, t)
        est = evaluation_error(fhat, f, view, 200_000, seed)
        assert abs(est.value - t * t) <= 4.0 * est.stderr


def test_evaluation_error_of_identical_fns_is_zero():
    f = exact_two_point(TWO_ATOM, OU)
    est = evaluation_error(f, f, MarginalView(TWO_ATOM, OU, 1.0), 2000, 0)
    assert est.value == 0.0
    assert est.n == 2000


# ---------------------------------------------------------------------------
# self-consistency loss


def test_exact_oracle_has_zero_self_consistency_loss():
    part = TrainingPartition(1.0, 5)
    f = exact_two_point(TWO_ATOM, OU)
    loss = consistency_loss(f, TWO_ATOM, OU, part, i=2, n=2000, seed=0)
    assert loss.value <= 1e-3 * GAP2
    assert loss.value == 0.0


def test_consistency_loss_determinism_and_range():
    part = TrainingPartition(0.5, 4)
    fhat = quantile_perturbed(TWO_ATOM, OU, kappa=1e-2)
    a = consistency_loss(fhat, TWO_ATOM, OU, part, i=1, n=500, seed=9)
    b = consistency_loss(fhat, TWO_ATOM, OU, part, i=1, n=500, seed=9)
    assert a.value == b.value and a.stderr == b.stderr
    assert a.value >= 0.0
    with pytest.raises(NumericError):
        consistency_loss(fhat, TWO_ATOM, OU, part, i=4, n=10, seed=0)
