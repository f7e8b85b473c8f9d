import math

import numpy as np
import pytest

from chains import Ar1Chain, build_finite_chain, random_reversible_chain, simulate_path, two_state_chain
from dependence import (
    INCONCLUSIVE,
    NOT_SUMMABLE,
    SUMMABLE,
    DependenceProfile,
    SlowlyVaryingSpec,
    alpha_bar_coefficient,
    alpha_coefficient_bruteforce,
    check_alpha_summability,
    check_eta_decay_condition,
    check_slowly_varying,
    dependence_profile,
    empirical_dependence_profile,
    eta_coefficient,
    eta_quadrature,
    get_slowly_varying,
    h_k_function,
    hoeffding_covariance_identity,
    lehmann_gap,
    marginal_covariance,
    marginal_moment_norm,
    rio_bounded_bound,
    rio_moment_bound,
    slowly_varying_ratios,
)
from numerics import DomainError, RngStream

LOG = get_slowly_varying("log")


def synthetic_profile(lags, eta=None, alpha=None):
    lags = list(lags)
    eta = np.zeros(len(lags)) if eta is None else eta
    alpha = np.full(len(lags), math.nan) if alpha is None else alpha
    return DependenceProfile(lags=lags, eta=eta, alpha_bar=np.zeros(len(lags)), alpha=alpha,
                             provenance=["exact"] * len(lags))


class TestHFunction:
    def test_indicator_chain_cell(self, indicator_two_state):
        assert h_k_function(indicator_two_state, 1)(0.5, 0.5) == pytest.approx(0.1, abs=1e-15)

    def test_vanishes_outside_state_range(self, indicator_two_state):
        h = h_k_function(indicator_two_state, 1)
        assert h(-0.5, 0.5) == pytest.approx(0.0, abs=1e-15)
        assert h(0.5, 1.5) == pytest.approx(0.0, abs=1e-15)

    def test_gaussian_orthant(self):
        assert h_k_function(Ar1Chain(0.6), 1)(0.0, 0.0) == pytest.approx(math.asin(0.6) / (2 * math.pi), abs=1e-12)

    def test_independent_chain(self, independent_chain):
        h = h_k_function(independent_chain, 3)
        u, v = np.meshgrid(np.linspace(-2, 3, 21), np.linspace(-2, 3, 21))
        assert np.max(np.abs(h(u, v))) < 1e-15

    @pytest.mark.parametrize("u", [-8.0, 8.0])
    def test_gaussian_tails(self, u):
        h = h_k_function(Ar1Chain(0.9), 1)
        v = np.linspace(-5, 5, 41)
        assert np.max(np.abs(h(np.full_like(v, u), v))) < 1e-13
        assert np.max(np.abs(h(v, np.full_like(v, u)))) < 1e-13

    def test_lag_must_be_positive(self, ar1_half):
        with pytest.raises(DomainError):
            h_k_function(ar1_half, 0)


class TestCoefficients:
    def test_eta_indicator_chain(self, indicator_two_state):
        assert eta_coefficient(indicator_two_state, 1) == pytest.approx(0.1, abs=1e-15)

    def test_eta_matches_covariance_under_positive_dependence(self):
        result = eta_quadrature(Ar1Chain(0.6), 2)
        assert result.value == pytest.approx(0.36, abs=2e-4)
        assert result.abs_error_estimate > 0

    def test_eta_independent(self, independent_chain):
        assert eta_coefficient(independent_chain, 4) == pytest.approx(0.0, abs=1e-15)
        assert eta_coefficient(Ar1Chain(0.0), 1) == 0.0

    def test_alpha_bar_indicator_chain(self, indicator_two_state):
        assert alpha_bar_coefficient(indicator_two_state, 1) == pytest.approx(0.2, abs=1e-15)

    def test_alpha_bar_gaussian(self):
        assert alpha_bar_coefficient(Ar1Chain(0.6), 1) == pytest.approx(math.asin(0.6) / math.pi, abs=1e-3)

    def test_alpha_bar_independent(self, independent_chain):
        assert alpha_bar_coefficient(independent_chain, 2) == pytest.approx(0.0, abs=1e-15)

    def test_bruteforce_alpha(self, indicator_two_state):
        assert alpha_coefficient_bruteforce(indicator_two_state, 1) == pytest.approx(0.1, abs=1e-15)

    def test_bruteforce_state_cap(self):
        chain = random_reversible_chain(7, RngStream(0))
        with pytest.raises(DomainError):
            alpha_coefficient_bruteforce(chain, 1)

    def test_coefficient_orderings_on_random_chains(self):
        for stream_id in range(10):
            chain = random_reversible_chain(2 + stream_id % 5, RngStream(13, stream_id))
            bounded = build_finite_chain(chain.values / 3.0, chain.transition, stationary=chain.stationary)
            for lag in range(1, 31):
                eta = eta_coefficient(bounded, lag)
                alpha_bar = alpha_bar_coefficient(bounded, lag)
                assert eta >= 0.0
                assert alpha_bar <= 2.0 * alpha_coefficient_bruteforce(bounded, lag) + 1e-12
                assert eta <= rio_bounded_bound(alpha_bar) + 1e-12


class TestHoeffdingIdentity:
    def test_gaussian_identity(self, ar1_half):
        check = hoeffding_covariance_identity(lambda x: x, lambda x: x, ar1_half, 2,
                                              f_prime=np.ones_like, g_prime=np.ones_like)
        assert check.lhs == pytest.approx(0.25, abs=1e-10)
        assert check.rhs == pytest.approx(0.25, abs=1e-4)

    @pytest.mark.parametrize("lag", [1, 2, 3, 4, 5])
    def test_identity_functions_across_lags(self, lag):
        check = hoeffding_covariance_identity(lambda x: x, lambda x: x, Ar1Chain(0.6), lag,
                                              f_prime=np.ones_like, g_prime=np.ones_like)
        assert check.lhs == pytest.approx(0.6 ** lag, abs=1e-10)
        assert check.rhs == pytest.approx(0.6 ** lag, abs=1e-4)
        assert check.difference < 1e-4

    def test_constant_function(self, ar1_half):
        check = hoeffding_covariance_identity(lambda x: 2.0 + 0.0 * x, np.tanh, ar1_half, 1)
        assert check.lhs == pytest.approx(0.0, abs=1e-12)
        assert check.rhs == pytest.approx(0.0, abs=1e-12)

    def test_finite_chain_is_exact(self, symmetric_two_state):
        check = hoeffding_covariance_identity(np.tanh, np.tanh, symmetric_two_state, 1)
        assert check.difference < 1e-8
        assert check.lhs == pytest.approx(0.4 * math.tanh(1.0) ** 2, abs=1e-12)

    def test_random_smooth_functions_on_finite_chains(self):
        rng = np.random.default_rng(17)
        for stream_id in range(50):
            chain = random_reversible_chain(2 + stream_id % 8, RngStream(23, stream_id))
            a, b = rng.normal(size=2)
            check = hoeffding_covariance_identity(lambda x: np.sin(a * x), lambda x: np.tanh(b * x), chain,
                                                  1 + stream_id % 4)
            assert check.difference < 1e-8

    @pytest.mark.slow
    def test_random_smooth_functions_on_gaussian_chain(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            a, b = rng.uniform(0.3, 1.5, size=2)
            check = hoeffding_covariance_identity(lambda x: np.sin(a * x), lambda x: np.tanh(b * x),
                                                  Ar1Chain(float(rng.uniform(-0.8, 0.8))), 1)
            assert check.difference < 1e-4


class TestSlowlyVarying:
    @pytest.mark.parametrize("name", ["log", "iterated_log", "ramp"])
    def test_menu_passes(self, name):
        assert check_slowly_varying(get_slowly_varying(name))

    def test_square_root_is_not_slowly_varying(self):
        assert not check_slowly_varying(SlowlyVaryingSpec("sqrt", np.sqrt))

    def test_log_ratios(self):
        ratios = slowly_varying_ratios(LOG)
        assert ratios[2.0][1e9] == pytest.approx(1.0, abs=0.05)
        assert ratios[10.0][1e3] > ratios[10.0][1e6] > ratios[10.0][1e9]

    def test_unknown_name(self):
        with pytest.raises(DomainError, match="cosine"):
            get_slowly_varying("cosine")


class TestDecayCondition:
    def test_zero_profile_passes(self):
        verdict = check_eta_decay_condition(synthetic_profile(range(1, 31)), LOG)
        assert verdict.passed and verdict.first_violation is None and verdict.passes_from_lag == 1

    def test_fast_geometric_passes(self):
        lags = np.arange(1, 31)
        verdict = check_eta_decay_condition(synthetic_profile(lags, eta=0.05 ** lags), LOG)
        assert verdict.passed

    def test_moderate_geometric_passes_eventually(self):
        lags = np.arange(1, 31)
        verdict = check_eta_decay_condition(synthetic_profile(lags, eta=0.4 ** lags), LOG)
        assert not verdict.passed
        assert verdict.first_violation == 2
        assert verdict.passes_from_lag == 12

    def test_inverse_square_fails_at_first_lag(self):
        lags = np.arange(1, 31)
        verdict = check_eta_decay_condition(synthetic_profile(lags, eta=1.0 / lags ** 2.0), LOG)
        assert verdict.first_violation == 1
        assert verdict.passes_from_lag is None

    def test_bound_at_first_lag(self):
        verdict = check_eta_decay_condition(synthetic_profile([1]), LOG)
        assert verdict.bounds[0] == pytest.approx(1.0 / math.log(1.0 + math.e), abs=1e-12)

    def test_empty_profile(self):
        with pytest.raises(DomainError):
            check_eta_decay_condition(synthetic_profile([]), LOG)


class TestSummability:
    def test_zero_alpha(self):
        verdict = check_alpha_summability(synthetic_profile(range(1, 11), alpha=np.zeros(10)))
        assert verdict.verdict == SUMMABLE
        assert verdict.partial_sum == 0.0

    def test_geometric_alpha(self):
        lags = np.arange(1, 31)
        verdict = check_alpha_summability(synthetic_profile(lags, alpha=0.4 ** lags))
        assert verdict.partial_sum == pytest.approx(0.4 / 0.36, abs=1e-4)
        assert verdict.verdict == SUMMABLE
        assert verdict.model == "geometric"
        assert verdict.geometric_rate == pytest.approx(0.4, abs=1e-10)

    def test_inverse_square_alpha(self):
        lags = np.arange(1, 31)
        verdict = check_alpha_summability(synthetic_profile(lags, alpha=1.0 / lags ** 2.0))
        assert verdict.verdict == NOT_SUMMABLE
        assert verdict.polynomial_exponent == pytest.approx(2.0, abs=1e-9)

    def test_too_few_points(self):
        verdict = check_alpha_summability(synthetic_profile([1, 2], alpha=np.array([0.1, 0.01])))
        assert verdict.verdict == INCONCLUSIVE

    def test_requires_alpha(self):
        with pytest.raises(DomainError):
            check_alpha_summability(synthetic_profile([1, 2, 3]))

    def test_unknown_tail_model(self):
        with pytest.raises(DomainError):
            check_alpha_summability(synthetic_profile([1], alpha=np.zeros(1)), tail_model="spline")


class TestProfiles:
    def test_exact_profile(self, indicator_two_state):
        profile = dependence_profile(indicator_two_state, [1, 2, 3])
        np.testing.assert_allclose(profile.eta, 0.25 * 0.4 ** np.arange(1, 4), atol=1e-15)
        np.testing.assert_allclose(profile.alpha_bar, 2.0 * profile.alpha, atol=1e-15)
        frame = profile.to_frame()
        assert list(frame.columns) == ["lag", "eta", "alpha_bar", "alpha", "provenance"]
        assert set(frame["provenance"]) == {"exact"}

    def test_gaussian_profile_has_no_alpha(self):
        profile = dependence_profile(Ar1Chain(0.3), [3])
        assert not profile.has_alpha

    def test_lags_must_increase(self):
        with pytest.raises(DomainError):
            synthetic_profile([2, 1])

    def test_empirical_profile_is_flagged(self, ar1_half):
        path = simulate_path(ar1_half, 20_000, RngStream(31))
        profile = empirical_dependence_profile(path, [1, 2])
        assert profile.provenance == ["empirical", "empirical"]
        assert "diagnostic" in profile.warning
        assert not profile.has_alpha
        assert profile.eta[0] == pytest.approx(0.5, abs=0.1)
        assert profile.eta[1] < profile.eta[0]

    def test_empirical_lag_too_long(self):
        with pytest.raises(DomainError):
            empirical_dependence_profile([0.0, 1.0, 2.0], [3])


class TestBounds:
    def test_gaussian_moment_norms(self):
        assert marginal_moment_norm(Ar1Chain(0.2), 2.0) == pytest.approx(1.0, abs=1e-12)
        assert marginal_moment_norm(Ar1Chain(0.2), 4.0) == pytest.approx(3.0 ** 0.25, abs=1e-12)

    def test_finite_moment_norm(self, symmetric_two_state):
        assert marginal_moment_norm(symmetric_two_state, 3.0) == pytest.approx(1.0)

    def test_rio_bounds(self):
        assert rio_moment_bound(0.25, 2.0, 1.0) == pytest.approx(1.0)
        assert rio_bounded_bound(0.1) == pytest.approx(0.2)
        with pytest.raises(DomainError):
            rio_moment_bound(0.25, 0.0, 1.0)

    def test_rio_moment_bound_dominates_eta(self):
        chain = Ar1Chain(0.6)
        delta = 2.0
        bound = rio_moment_bound(alpha_bar_coefficient(chain, 2), delta, marginal_moment_norm(chain, 2.0 + delta))
        assert eta_coefficient(chain, 2) <= bound

    def test_marginal_covariance(self, symmetric_two_state):
        assert marginal_covariance(symmetric_two_state, 2) == pytest.approx(0.16, abs=1e-14)

    def test_lehmann_on_indicator_chain(self, indicator_two_state):
        for lag in range(1, 11):
            assert lehmann_gap(indicator_two_state, lag) < 1e-14

    def test_lehmann_fails_under_negative_dependence(self):
        chain = two_state_chain(0.75, 0.75, values=(0.0, 1.0))
        assert eta_coefficient(chain, 1) == pytest.approx(-marginal_covariance(chain, 1), abs=1e-15)
        assert lehmann_gap(chain, 1) > 0.1

    @pytest.mark.slow
    @pytest.mark.parametrize("rho", [0.0, 0.3, 0.6, 0.9])
    def test_lehmann_on_gaussian_chain(self, rho):
        for lag in (1, 2, 5):
            assert lehmann_gap(Ar1Chain(rho), lag) < 5e-4
