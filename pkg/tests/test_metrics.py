import math

import numpy as np
import pytest

from stimulus_moo.metrics import (
    InsufficientDataError,
    distance_to_optimum,
    fit_rate,
    fit_rate_series,
    running_average,
    stationarity_measure,
)
from stimulus_moo.optimizers import OptimizerConfig, run
from stimulus_moo.problems import make_builtin

from oracles import grid_search_min_norm


class TestStationarityMeasure:
    def test_sc_toy_conflict_point_is_stationary(self):
        toy = make_builtin("sc_toy")
        report = stationarity_measure(toy, [1.0])
        assert report.value <= 1e-9
        lam_expected = math.exp(-1) / (2.0 + math.exp(-1))
        assert report.lambda_star[0] == pytest.approx(lam_expected, abs=1e-9)

    def test_sc_toy_descent_point_matches_grid(self):
        toy = make_builtin("sc_toy")
        report = stationarity_measure(toy, [-1.0])
        grads = toy.full_gradients([-1.0])
        oracle_value, _ = grid_search_min_norm(grads)
        assert report.value == pytest.approx(4.0, abs=1e-12)
        assert abs(report.value - oracle_value) <= 1e-6

    def test_single_objective_critical_point(self):
        problem = make_builtin("mean_quadratic", 0, {"anchors": [[[0.0], [2.0]]]})
        assert stationarity_measure(problem, [1.0]).value <= 1e-30

    def test_vertex_bound_and_nonnegativity(self):
        rng = np.random.default_rng(0)
        problem = make_builtin("quadratic_tasks", 1, {"n": 16, "S": 3, "d": 2})
        for _ in range(20):
            x = rng.normal(size=2)
            report = stationarity_measure(problem, x)
            assert report.value >= 0.0
            assert report.value <= np.min(report.per_task_grad_norms) ** 2 + 1e-12

    def test_pareto_set_recovery_on_sc_toy(self):
        toy = make_builtin("sc_toy")
        probes = np.linspace(0.05, 3.0, 20)
        for x in probes:
            assert stationarity_measure(toy, [x]).value <= 1e-9
        for x in -probes:
            assert stationarity_measure(toy, [x]).value > 1e-9


class TestDistance:
    def test_zero(self):
        assert distance_to_optimum([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_unit(self):
        assert distance_to_optimum([1.0, 0.0], [0.0, 0.0]) == 1.0

    def test_arithmetic(self):
        assert distance_to_optimum([1.0, 1.0], [-1.0, -1.0]) == 8.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            distance_to_optimum([1.0], [1.0, 2.0])


class TestRateFits:
    def test_recovers_inverse_t(self):
        t = np.arange(1, 201, dtype=float)
        fit = fit_rate_series(t, 5.0 / t, "inverse_t", tail_fraction=0.5)
        assert fit.fitted_coefficient == pytest.approx(-1.0, abs=1e-6)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-9)

    def test_recovers_exponential(self):
        t = np.arange(0, 200, dtype=float)
        fit = fit_rate_series(t, np.exp(-0.3 * t), "exponential", tail_fraction=0.5)
        assert fit.fitted_coefficient == pytest.approx(0.3, abs=1e-6)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-9)

    def test_fit_rate_reads_record_stationarity(self):
        toy = make_builtin("sc_toy")
        record = run(toy, "stimulus", OptimizerConfig(T=400, eta=0.005))
        fit = fit_rate(record, "exponential", tail_fraction=0.5)
        # x decays geometrically at (1 - 2*eta), so the measure 4x^2 is
        # exactly exponential with b = -2*ln(1 - 2*eta)
        expected_b = -2.0 * math.log(1.0 - 2.0 * 0.005)
        assert fit.fitted_coefficient == pytest.approx(expected_b, rel=1e-6)
        assert fit.r_squared >= 0.999

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            fit_rate_series(np.arange(1, 10.0), 1.0 / np.arange(1, 10.0), "inverse_t")

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            fit_rate_series(np.arange(1, 100.0), np.ones(99), "linear")

    def test_nan_values_are_skipped(self):
        t = np.arange(1, 101, dtype=float)
        v = 2.0 / t
        v[::3] = np.nan
        fit = fit_rate_series(t, v, "inverse_t", tail_fraction=1.0)
        assert fit.fitted_coefficient == pytest.approx(-1.0, abs=1e-9)


class TestRunningAverage:
    def test_matches_direct_formula(self):
        values = np.array([4.0, 0.0, 2.0, 6.0])
        np.testing.assert_allclose(running_average(values), [4.0, 2.0, 2.0, 3.0])

    def test_constant_series(self):
        np.testing.assert_allclose(running_average(np.full(5, 7.0)), np.full(5, 7.0))
