import math

import numpy as np
import pytest

from chains import (
    Ar1Chain,
    MetropolisChain,
    NotCenteredError,
    NotReversibleError,
    ReducibleChainError,
    InvalidTransitionError,
    TargetSupportError,
    build_finite_chain,
    chain_from_spec,
    conditional_expectation,
    describe_chain,
    direct_lag_covariance,
    exact_lag_covariance,
    joint_law,
    lag2_joint_density,
    local_joint_density_bound,
    metropolis_chain,
    metropolis_run,
    random_reversible_chain,
    simulate_path,
    spectral_decompose,
    spectral_measure,
    two_state_chain,
)
from numerics import DomainError, RngStream

CYCLE = [[0.1, 0.9, 0.0], [0.0, 0.1, 0.9], [0.9, 0.0, 0.1]]


class TestBuildFiniteChain:
    def test_symmetric_two_state(self):
        chain = build_finite_chain([-1.0, 1.0], [[0.7, 0.3], [0.3, 0.7]])
        np.testing.assert_allclose(chain.stationary, [0.5, 0.5], atol=1e-14)

    def test_symmetric_matrix_has_uniform_law(self):
        p = np.array([[0.2, 0.5, 0.3], [0.5, 0.1, 0.4], [0.3, 0.4, 0.3]])
        chain = build_finite_chain([0.0, 1.0, 2.0], p)
        np.testing.assert_allclose(chain.stationary, np.full(3, 1.0 / 3.0), atol=1e-12)

    def test_cycle_is_not_reversible(self):
        with pytest.raises(NotReversibleError, match="not reversible") as info:
            build_finite_chain([0.0, 1.0, 2.0], CYCLE)
        assert info.value.max_violation == pytest.approx(0.3, abs=1e-12)

    def test_reducible_chain(self):
        with pytest.raises(ReducibleChainError):
            build_finite_chain([0.0, 1.0], np.eye(2))

    def test_identity_with_supplied_law(self):
        chain = build_finite_chain([0.0, 1.0, 2.0], np.eye(3), stationary=[0.2, 0.3, 0.5])
        np.testing.assert_allclose(spectral_decompose(chain).eigenvalues, np.ones(3), atol=1e-12)

    @pytest.mark.parametrize("transition", [
        [[0.5, 0.6], [0.3, 0.7]],
        [[1.2, -0.2], [0.3, 0.7]],
        [[1.0]],
    ])
    def test_invalid_transition(self, transition):
        with pytest.raises(InvalidTransitionError):
            build_finite_chain([0.0, 1.0], transition)

    def test_values_must_increase(self):
        with pytest.raises(DomainError):
            build_finite_chain([1.0, 0.0], [[0.7, 0.3], [0.3, 0.7]])


class TestRandomChains:
    def test_two_state_draw_is_balanced(self):
        chain = random_reversible_chain(2, RngStream(11, 3))
        flow = chain.stationary[:, None] * chain.transition
        assert np.max(np.abs(flow - flow.T)) < 1e-12

    def test_five_states_revalidate(self):
        chain = random_reversible_chain(5, RngStream(42))
        rebuilt = build_finite_chain(chain.values, chain.transition)
        np.testing.assert_allclose(rebuilt.stationary, chain.stationary, atol=1e-12)

    def test_bulk_draws(self):
        for i in range(200):
            rng = RngStream(0, 2 * i).generator()
            size = int(rng.integers(2, 13))
            random_reversible_chain(size, RngStream(0, 2 * i + 1))

    def test_same_stream_same_chain(self):
        a = random_reversible_chain(4, RngStream(5, 1))
        b = random_reversible_chain(4, RngStream(5, 1))
        np.testing.assert_array_equal(a.transition, b.transition)

    def test_size_limits(self):
        with pytest.raises(DomainError):
            random_reversible_chain(1, RngStream(0))


class TestSpectral:
    def test_two_state_eigenvalues(self, symmetric_two_state):
        np.testing.assert_allclose(spectral_decompose(symmetric_two_state).eigenvalues, [1.0, 0.4], atol=1e-14)

    def test_reconstructs_transition(self):
        chain = random_reversible_chain(7, RngStream(8))
        np.testing.assert_allclose(spectral_decompose(chain).reconstruct(), chain.transition, atol=1e-12)

    def test_parseval(self):
        for stream_id in range(20):
            chain = random_reversible_chain(6, RngStream(3, stream_id))
            g = np.random.default_rng(stream_id).normal(size=6)
            g -= chain.expectation(g)
            variance = chain.expectation(g * g)
            assert spectral_measure(chain, g).total_mass == pytest.approx(variance, abs=1e-10)

    def test_ar1_hermite_measure(self):
        # x² - 1 is the second Hermite polynomial: one atom ρ² with mass 2
        measure = spectral_measure(Ar1Chain(0.5), lambda x: x ** 2 - 1.0)
        assert measure.total_mass == pytest.approx(2.0, abs=1e-10)
        assert measure.moment(1) == pytest.approx(0.5, abs=1e-10)


class TestCovariances:
    def test_two_state_lag_two(self, symmetric_two_state):
        assert exact_lag_covariance(symmetric_two_state, None, 2) == pytest.approx(0.16, abs=1e-14)

    def test_ar1_identity(self, ar1_half):
        assert exact_lag_covariance(ar1_half, None, 3) == pytest.approx(0.125)

    def test_ar1_smooth_function(self, ar1_half):
        assert exact_lag_covariance(ar1_half, lambda x: x ** 2 - 1.0, 2) == pytest.approx(2 * 0.5 ** 4, abs=1e-10)

    def test_lag_zero_is_variance(self):
        chain = random_reversible_chain(5, RngStream(1))
        g = chain.values - chain.expectation(chain.values)
        assert exact_lag_covariance(chain, g, 0) == pytest.approx(chain.expectation(g * g), abs=1e-12)

    def test_spectral_equals_matrix_power(self):
        chain = random_reversible_chain(9, RngStream(21))
        g = np.sin(chain.values)
        g -= chain.expectation(g)
        for lag in range(0, 31):
            assert exact_lag_covariance(chain, g, lag) == pytest.approx(
                direct_lag_covariance(chain, g, lag), abs=1e-10)

    def test_not_centered(self, indicator_two_state):
        with pytest.raises(NotCenteredError) as info:
            exact_lag_covariance(indicator_two_state, None, 1)
        assert info.value.mean == pytest.approx(0.5)

    def test_negative_lag(self, symmetric_two_state):
        with pytest.raises(DomainError):
            exact_lag_covariance(symmetric_two_state, None, -1)

    def test_joint_law_marginals(self, symmetric_two_state):
        joint = joint_law(symmetric_two_state, 3)
        np.testing.assert_allclose(joint.sum(axis=1), symmetric_two_state.stationary, atol=1e-14)
        np.testing.assert_allclose(joint, joint.T, atol=1e-14)


class TestConditionalExpectation:
    def test_one_step_identity(self, symmetric_two_state):
        np.testing.assert_allclose(conditional_expectation(symmetric_two_state, None, 1), [-0.4, 0.4], atol=1e-15)

    def test_constants_are_fixed(self):
        chain = random_reversible_chain(6, RngStream(2))
        for steps in (0, 1, 5, 40):
            np.testing.assert_allclose(conditional_expectation(chain, np.full(6, 2.5), steps), 2.5, atol=1e-12)

    def test_product_matches_spectral_covariance(self):
        chain = random_reversible_chain(5, RngStream(4))
        g = chain.values - chain.expectation(chain.values)
        lhs = chain.expectation(conditional_expectation(chain, g, 2) * conditional_expectation(chain, g, 3))
        assert lhs == pytest.approx(exact_lag_covariance(chain, g, 5), abs=1e-10)


class TestGaussianDensities:
    def test_independent_lag_two(self):
        assert lag2_joint_density(Ar1Chain(0.0), 0.0, 0.0) == pytest.approx(0.1591549, abs=1e-7)

    def test_correlated_lag_two(self, ar1_half):
        expected = 1.0 / (2.0 * math.pi * math.sqrt(1.0 - 0.25 ** 2))
        assert lag2_joint_density(ar1_half, 0.0, 0.0) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.1643745, abs=1e-7)

    def test_local_bound_on_diagonal(self, ar1_half):
        assert local_joint_density_bound(ar1_half, 0.0, 0.0, 1.0) == pytest.approx(0.1643745, abs=1e-7)

    def test_local_bound_dominates_grid(self, ar1_half):
        bound = local_joint_density_bound(ar1_half, 0.7, -0.2, 0.5)
        shifts = np.linspace(-0.5, 0.5, 1001)
        assert bound >= np.max(lag2_joint_density(ar1_half, 0.7 + shifts, -0.2 + shifts)) - 1e-15

    @pytest.mark.parametrize("x_i,x_j,m", [(0.0, 0.0, 1.0), (1.5, -2.0, 0.3), (3.0, 3.0, 10.0)])
    def test_independent_bound(self, x_i, x_j, m):
        assert local_joint_density_bound(Ar1Chain(0.0), x_i, x_j, m) <= 1.0 / (2.0 * math.pi) + 1e-15


class TestSimulation:
    def test_occupancy_matches_stationary(self, symmetric_two_state):
        n = 1_000_000
        path = simulate_path(symmetric_two_state, n, RngStream(7))
        for value, pi in zip(symmetric_two_state.values, symmetric_two_state.stationary):
            frequency = float(np.mean(path == value))
            assert abs(frequency - pi) <= 5 * 3 * math.sqrt(pi * (1 - pi) / n)

    def test_ar1_independent(self):
        path = simulate_path(Ar1Chain(0.0), 100_000, RngStream(1))
        assert abs(np.corrcoef(path[:-1], path[1:])[0, 1]) < 0.02

    def test_ar1_lag_one_autocorrelation(self, ar1_half):
        path = simulate_path(ar1_half, 1_000_000, RngStream(2))
        assert np.corrcoef(path[:-1], path[1:])[0, 1] == pytest.approx(0.5, abs=0.01)

    def test_replays(self, ar1_half):
        np.testing.assert_array_equal(simulate_path(ar1_half, 500, RngStream(3, 4)),
                                      simulate_path(ar1_half, 500, RngStream(3, 4)))

    def test_length_one(self, ar1_half):
        assert simulate_path(ar1_half, 1, RngStream(0)).shape == (1,)

    def test_empty_path(self, ar1_half):
        with pytest.raises(DomainError):
            simulate_path(ar1_half, 0, RngStream(0))

    def test_metropolis_targets_standard_normal(self):
        chain = metropolis_chain("std_normal", proposal_sd=2.4, burn_in=1000)
        path, rate = metropolis_run(chain, 20_000, RngStream(5))
        assert path.shape == (20_000,)
        assert 0.2 < rate < 0.7
        assert abs(path.mean()) < 0.1
        assert 0.8 < path.var() < 1.2

    @pytest.mark.slow
    def test_metropolis_long_run_moments(self):
        chain = metropolis_chain("std_normal", proposal_sd=2.4, burn_in=1000)
        path, _ = metropolis_run(chain, 1_000_000, RngStream(6))
        assert abs(path.mean()) < 0.02
        assert abs(path.var() - 1.0) < 0.05

    def test_metropolis_without_burn_in_starts_at_initial_state(self):
        chain = metropolis_chain("std_normal", burn_in=0, initial_state=0.25)
        assert simulate_path(chain, 10, RngStream(0))[0] == 0.25

    def test_metropolis_zero_density_start(self):
        chain = MetropolisChain(log_density=lambda x: -math.inf if x <= 0 else -x, proposal_sd=1.0,
                                initial_state=0.0)
        with pytest.raises(TargetSupportError):
            simulate_path(chain, 10, RngStream(0))

    def test_unknown_metropolis_target(self):
        with pytest.raises(DomainError):
            metropolis_chain("cauchy")


class TestChainSpecs:
    def test_round_trip_kinds(self):
        assert isinstance(chain_from_spec({"kind": "ar1", "rho": 0.3}), Ar1Chain)
        finite = chain_from_spec({"kind": "finite", "values": [0, 1], "transition": [[0.7, 0.3], [0.3, 0.7]]})
        assert describe_chain(finite)["stationary"] == pytest.approx([0.5, 0.5])
        assert describe_chain(chain_from_spec({"kind": "metropolis"}))["target"] == "std_normal"

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            chain_from_spec({"kind": "garch"})

    def test_ar1_domain(self):
        with pytest.raises(DomainError):
            Ar1Chain(1.0)

    def test_two_state_second_eigenvalue(self):
        chain = two_state_chain(0.75, 0.75)
        assert spectral_decompose(chain).eigenvalues[1] == pytest.approx(-0.5, abs=1e-14)
