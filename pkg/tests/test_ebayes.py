import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fash.ebayes import PenaltyConfig, default_grid, em_update, fit_weights
from fash.errors import InvalidArgumentError
from fash.lgp import LgpSpec, psd, sample_prior_paths
from fash.likelihood import LikelihoodMatrix, MixturePrior, ObservationUnit, likelihood_matrix


def random_matrix(rng, n_units, n_comp):
    loglik = rng.normal(scale=3.0, size=(n_units, n_comp))
    offsets = loglik.max(axis=1)
    return LikelihoodMatrix(loglik - offsets[:, None], offsets)


class TestDefaultGrid:
    def test_order_one_endpoints_and_spacing(self):
        grid = default_grid(1, 51, 10.0)
        assert grid.size == 52
        assert grid[0] == 0.0
        assert grid[1] == pytest.approx(np.exp(-5.0), rel=1e-12)
        assert grid[-1] == pytest.approx(1.0, rel=1e-12)
        log_steps = np.diff(np.log(grid[1:]))
        np.testing.assert_allclose(log_steps, 0.1, rtol=1e-10)

    def test_order_one_raw_equals_one_unit_psd(self):
        grid = default_grid(1, 31, 10.0)
        for sigma in grid[1:]:
            assert psd(1, sigma, 1.0) == pytest.approx(sigma, rel=1e-12)

    def test_order_two_top_scale(self):
        grid = default_grid(2, 51, 10.0)
        assert grid[-1] == pytest.approx(np.sqrt(3.0), rel=1e-12)
        # one-unit predictive SD ladder is shared across orders
        np.testing.assert_allclose(
            [psd(2, s, 1.0) for s in grid[1:]],
            [psd(1, s, 1.0) for s in default_grid(1, 51, 10.0)[1:]],
            rtol=1e-12,
        )

    def test_bad_arguments(self):
        with pytest.raises(InvalidArgumentError):
            default_grid(1, 1)
        with pytest.raises(InvalidArgumentError):
            default_grid(1, 10, 0.0)


class TestPenaltyConfig:
    def test_validation(self):
        PenaltyConfig([1.0, 1.0])
        with pytest.raises(InvalidArgumentError):
            PenaltyConfig([0.5, 1.0])

    def test_constructors(self):
        flat = PenaltyConfig.flat(3)
        np.testing.assert_array_equal(flat.lam, [1.0, 1.0, 1.0])
        biased = PenaltyConfig.null_biased(3, 10.0)
        np.testing.assert_array_equal(biased.lam, [10.0, 1.0, 1.0])


class TestEmUpdate:
    def test_symmetric_rows_are_fixed_point(self):
        matrix = LikelihoodMatrix(np.zeros((4, 3)), np.zeros(4))
        start = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(em_update(start, matrix, PenaltyConfig.flat(3)), start, atol=1e-15)

    def test_two_point_problem_stays_at_optimum(self):
        matrix = LikelihoodMatrix(np.log([[1.0, 1e-300], [1e-300, 1.0]]), np.zeros(2))
        start = np.array([0.5, 0.5])
        out = em_update(start, matrix, PenaltyConfig.flat(2))
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)
        # and it is reached from anywhere in one step for this problem
        out = em_update(np.array([0.9, 0.1]), matrix, PenaltyConfig.flat(2))
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)

    def test_degenerate_single_row(self):
        matrix = LikelihoodMatrix(np.log([[1.0, 1e-300]]), np.zeros(1))
        result = fit_weights(matrix)
        np.testing.assert_allclose(result.weights, [1.0, 0.0], atol=1e-6)


class TestFitWeights:
    def test_two_point_analytic_optimum(self):
        matrix = LikelihoodMatrix(np.log([[1.0, 1e-300], [1e-300, 1.0]]), np.zeros(2))
        result = fit_weights(matrix)
        assert result.converged
        np.testing.assert_allclose(result.weights, [0.5, 0.5], atol=1e-6)

    def test_null_penalty_pulls_above_uniform(self):
        # flat likelihood: the data are silent and the penalty mode takes over
        matrix = LikelihoodMatrix(np.zeros((30, 5)), np.zeros(30))
        result = fit_weights(matrix, PenaltyConfig.null_biased(5, 10.0))
        assert result.weights[0] > 1.0 / 5.0
        assert np.all(np.diff(result.objective_trace) >= -1e-10)

    def test_monotone_objective_and_simplex(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            matrix = random_matrix(rng, int(rng.integers(3, 40)), int(rng.integers(2, 8)))
            result = fit_weights(matrix, max_iter=300)
            trace = result.objective_trace
            assert np.all(np.diff(trace) >= -1e-10 * np.maximum(1.0, np.abs(trace[1:])))
            assert np.all(result.weights >= 0)
            assert result.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_row_shift_invariance(self):
        rng = np.random.default_rng(1)
        matrix = random_matrix(rng, 25, 5)
        shifted = LikelihoodMatrix(
            matrix.loglik + rng.uniform(-30, 30, size=(25, 1)), matrix.row_offset
        )
        a = fit_weights(matrix)
        b = fit_weights(shifted)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-10)

    def test_max_iter_reports_not_converged(self):
        rng = np.random.default_rng(2)
        matrix = random_matrix(rng, 50, 6)
        result = fit_weights(matrix, tol=0.0, max_iter=5)
        assert not result.converged
        assert result.iterations == 5

    def test_component_recovery_sanity(self):
        # data purely from the alternative: its weight estimate approaches one
        times = np.arange(8.0)
        se = np.full(8, 0.1)
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            paths = sample_prior_paths(LgpSpec(1, 0.5), times, 1000, rng)
            units = [
                ObservationUnit(
                    f"u{j}",
                    times,
                    rng.standard_normal() + paths[j] + se * rng.standard_normal(8),
                    se,
                )
                for j in range(1000)
            ]
            prior = MixturePrior.uniform(1, [0.0, 0.5])
            matrix = likelihood_matrix(units, prior)
            result = fit_weights(matrix)
            hits += result.weights[1] > 0.95
        assert hits >= 19

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_simplex_preserved_everywhere(self, seed):
        rng = np.random.default_rng(seed)
        matrix = random_matrix(rng, int(rng.integers(2, 20)), int(rng.integers(2, 6)))
        result = fit_weights(matrix, max_iter=50)
        assert np.all(result.weights >= 0)
        assert abs(result.weights.sum() - 1.0) < 1e-12

    def test_penalty_length_mismatch(self):
        matrix = LikelihoodMatrix(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(InvalidArgumentError):
            fit_weights(matrix, PenaltyConfig.flat(2))
