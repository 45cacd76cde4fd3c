import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from transport_approx.basis import BasisSpec, ExpansionFunction, zero_expansion
from transport_approx.distributions import Gumbel, StdGaussian, UniformSym, pushforward_power, rng_stream
from transport_approx.divergences import (
    KLPullbackObjective,
    WpQuantileObjective,
    empirical_wasserstein_1d,
    kl_estimate,
    l2_map_error,
    lp_map_distance,
    mmd_gaussian,
    mmd_gaussian_pushforward,
    v_norm_distance,
    w2_closed_form,
    wp_monotone_pushforward,
)
from transport_approx.errors import (
    InvalidArgumentError,
    MonotonicityViolationError,
    NumericDomainError,
)
from transport_approx.maps import MonotoneComponent, Rectifier, TriangularMap
from transport_approx.stability import AffineMap


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), n=st.integers(1, 300))
def test_empirical_w1_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.gumbel(size=n)
    assert empirical_wasserstein_1d(a, b, 1) == pytest.approx(stats.wasserstein_distance(a, b), rel=1e-12)


def test_empirical_w2_sorted_coupling():
    a = np.array([3.0, 1.0, 2.0])
    b = np.array([0.0, 5.0, 1.0])
    assert empirical_wasserstein_1d(a, b, 2) == pytest.approx(math.sqrt((1 + 1 + 4) / 3))


def test_empirical_wasserstein_errors():
    with pytest.raises(InvalidArgumentError):
        empirical_wasserstein_1d([1.0, 2.0], [1.0], 1)


def test_mmd_matches_brute_force():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=120), rng.normal(0.5, 1.0, size=90)
    g2 = 0.8**2

    def km(u, v):
        return np.exp(-g2 * (u[:, None] - v[None, :]) ** 2).mean()

    expected = math.sqrt(km(a, a) + km(b, b) - 2 * km(a, b))
    assert mmd_gaussian(a, b, 0.8) == pytest.approx(expected, rel=1e-10)
    assert mmd_gaussian(a, a, 0.8) == pytest.approx(0.0, abs=1e-6)


def _translation_mmd_oracle(delta, gamma):
    """MMD between U[-1,1] and U[-1,1] + delta via the triangular law of X - X'."""
    def expect(shift):
        f = lambda d: (2 - abs(d)) / 4 * math.exp(-gamma**2 * (d + shift) ** 2)
        return quad(f, -2, 2, points=[0.0], epsabs=1e-15, epsrel=1e-13)[0]

    return math.sqrt(2 * expect(0.0) - expect(delta) - expect(-delta))


@pytest.mark.parametrize("delta, gamma", [(0.01, 1.0), (0.3, 0.5), (1.0, 2.0)])
def test_deterministic_mmd_translation_oracle(delta, gamma):
    lhs = mmd_gaussian_pushforward(AffineMap(1, 0), AffineMap(1, delta), UniformSym(), gamma)
    assert lhs == pytest.approx(_translation_mmd_oracle(delta, gamma), rel=1e-8)
    point_mass = math.sqrt(2 * (1 - math.exp(-(gamma * delta) ** 2)))
    assert lhs <= point_mass


def test_deterministic_mmd_matches_samples():
    F, G = AffineMap(1.0, 0.0), AffineMap(1.5, 0.2)
    x = UniformSym().sample(rng_stream(0, "mmd"), 4000)
    y = UniformSym().sample(rng_stream(1, "mmd"), 4000)
    det = mmd_gaussian_pushforward(F, G, UniformSym(), 1.0)
    assert mmd_gaussian(F(x), G(y), 1.0) == pytest.approx(det, abs=0.02)


def test_lp_map_distance_against_quad():
    F = lambda x: np.sin(3 * np.asarray(x))
    G = lambda x: np.asarray(x) ** 2 - 0.2
    for q in (1.0, 2.0, 3.0):
        ref = quad(lambda x: 0.5 * abs(math.sin(3 * x) - x * x + 0.2) ** q, -1, 1, limit=200, epsabs=1e-14)[0]
        assert lp_map_distance(F, G, UniformSym(), q) == pytest.approx(ref ** (1 / q), rel=1e-10)


def test_monotone_pushforward_equals_map_distance_at_matching_exponent():
    F, G = AffineMap(2.0, 0.1), AffineMap(0.5, -0.3)
    for p in (1.0, 2.0):
        assert wp_monotone_pushforward(F, G, StdGaussian(), p) == pytest.approx(
            lp_map_distance(F, G, StdGaussian(), p), rel=1e-9)


def test_w2_objective_of_exact_map_is_zero(cc_unit):
    obj = WpQuantileObjective.build(UniformSym(), pushforward_power(1), cc_unit, 2)
    fn = lambda x: np.sign(x) * np.asarray(x) ** 2
    assert obj.distance(fn) == pytest.approx(0.0, abs=1e-14)


def test_w1_distance_is_unsmoothed(cc_unit):
    obj = WpQuantileObjective.build(StdGaussian(), Gumbel(1, 2), cc_unit, 1, smoothing_eps=0.1)
    ident = lambda x: np.asarray(x)
    assert obj(ident) > obj.distance(ident)


def test_objective_gradient_matches_finite_differences(cc_small):
    spec = BasisSpec("hermite_function", 5)
    template = zero_expansion(spec)
    alpha = np.random.default_rng(0).uniform(-1, 1, 6)
    for p in (1.0, 2.0, 3.0):
        obj = WpQuantileObjective.build(StdGaussian(), Gumbel(1, 2), cc_small, p)
        fun, grad = obj.coefficient_problem(template)
        h = 1e-6
        fd = np.array([(fun(alpha + h * e) - fun(alpha - h * e)) / (2 * h) for e in np.eye(6)])
        np.testing.assert_allclose(grad(alpha), fd, rtol=1e-5, atol=1e-8)


def test_non_finite_map_values_name_the_node(cc_small):
    obj = WpQuantileObjective.build(StdGaussian(), Gumbel(), cc_small, 2)
    with pytest.raises(NumericDomainError) as info:
        obj(lambda x: np.where(np.asarray(x) > 2, np.nan, x))
    assert info.value.location > 2


def test_closed_form_compact_values(cc_unit):
    S = w2_closed_form(BasisSpec("legendre", 10), UniformSym(), pushforward_power(1), cc_unit)
    obj = WpQuantileObjective.build(UniformSym(), pushforward_power(1), cc_unit, 2)
    assert obj.distance(S) == pytest.approx(2.04e-3, rel=0.01)
    # odd target: even coefficients vanish
    assert np.max(np.abs(S.coefficients[::2])) < 1e-12


def _kl_setup(r, n=4):
    x = Gumbel().sample(rng_stream(0, "kl-grad"), 500)
    template = MonotoneComponent(zero_expansion(BasisSpec("hermite_function", n)), r)
    return KLPullbackObjective(x), template


@pytest.mark.parametrize("r", [Rectifier.SOFTPLUS, Rectifier.SHIFTED_ELU])
def test_kl_gradient_matches_finite_differences(r):
    obj, template = _kl_setup(r)
    fun, grad = obj.coefficient_problem(template)
    alpha = np.random.default_rng(1).uniform(-0.5, 0.5, 5)
    h = 1e-6
    fd = np.array([(fun(alpha + h * e) - fun(alpha - h * e)) / (2 * h) for e in np.eye(5)])
    np.testing.assert_allclose(grad(alpha), fd, rtol=1e-5, atol=1e-8)
    frozen = MonotoneComponent(template.f.with_coefficients(alpha), r, adaptive=False)
    assert obj(frozen) == pytest.approx(fun(alpha), rel=1e-12)


def test_kl_objective_triangular_gradient():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(300, 2)) ** 3 * 0.3
    c1 = MonotoneComponent(zero_expansion(BasisSpec("hermite_function", 2)))
    c2 = MonotoneComponent(zero_expansion(BasisSpec("hermite_function", 2), dim=2))
    obj = KLPullbackObjective(x)
    fun, grad = obj.coefficient_problem(TriangularMap([c1, c2]))
    alpha = rng.uniform(-0.5, 0.5, 3 + 6)
    h = 1e-6
    fd = np.array([(fun(alpha + h * e) - fun(alpha - h * e)) / (2 * h) for e in np.eye(alpha.size)])
    np.testing.assert_allclose(grad(alpha), fd, rtol=1e-5, atol=1e-8)


def test_kl_objective_rejects_non_monotone_maps():
    f = ExpansionFunction(BasisSpec("hermite_function", 1), [0.0, 1.0])
    obj = KLPullbackObjective(np.array([0.0, 1.0]))
    with pytest.raises(MonotonicityViolationError):
        obj(TriangularMap([f]))


def test_kl_estimate_of_exact_affine_pullback_is_zero():
    # nu = N(1, 2^2) is pulled back exactly by T(x) = (x - 1) / 2
    from transport_approx.distributions import Gaussian

    f = ExpansionFunction(BasisSpec("hermite_polynomial", 1), [0.0, 0.0])
    comp = MonotoneComponent(f)
    nu = Gaussian(1.0, 2.0 * math.log(2.0))
    x = nu.sample(rng_stream(0, "kl-zero"), 2000)
    # comp(x) = log(2) * x - 0 ; the pullback of N(0,1) is N(0, 1/log2^2)
    est, se = kl_estimate(Gaussian(0.0, 1 / math.log(2.0)), comp, x / (2 * math.log(2.0)) - 0.5 / math.log(2.0),
                          return_stderr=True)
    assert abs(est) < 1e-12 and se < 1e-12


def test_v_norm_of_constant_shift_is_one():
    F = AffineMap(1.0, 0.0)
    G = AffineMap(1.0, 1.0)
    assert v_norm_distance(F, G) == pytest.approx(1.0, rel=1e-14)
    F2 = AffineMap(2.0, 0.0)
    assert v_norm_distance(F2, F) == pytest.approx(math.sqrt(2.0), rel=1e-14)


def test_l2_map_error_modes(cc_small):
    F, G = AffineMap(1.0, 0.0), AffineMap(1.0, 0.5)
    assert l2_map_error(F, G, StdGaussian(), cc_small) == pytest.approx(0.5)
    assert l2_map_error(F, G, points=np.linspace(-1, 1, 5)) == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        l2_map_error(F, G)


def test_negative_mmd_square_beyond_roundoff_is_an_error():
    from transport_approx.divergences import _mmd_from_terms

    assert _mmd_from_terms(1.0, 1.0, 1.0 + 1e-14) == 0.0
    with pytest.raises(NumericDomainError):
        _mmd_from_terms(1.0, 1.0, 1.1)
