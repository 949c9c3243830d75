import math

import numpy as np
import pytest

from stimulus_moo.optimizers import (
    OptimizerConfig,
    OutputWeighting,
    initial_state,
    resolve_run,
    run,
    select_output_weighted,
    step,
)
from stimulus_moo.problems import make_builtin
from stimulus_moo.simplex import QPError

MQ_PARAMS = {"anchors": [[[0.0], [2.0]]]}


def drive(problem, variant, cfg, iters):
    """Run the step loop manually, returning the list of visited states."""
    res = resolve_run(problem, variant, cfg)
    state = initial_state(problem, res)
    states = [state]
    for _ in range(iters):
        state = step(state, res, problem)
        states.append(state)
    return res, states


class TestStep:
    def test_single_objective_weights_are_trivial(self):
        problem = make_builtin("mean_quadratic", 0, MQ_PARAMS)
        _, states = drive(problem, "stimulus", OptimizerConfig(T=5, eta=0.1), 3)
        for state in states[1:]:
            np.testing.assert_array_equal(state.last_lambda, [1.0])
            np.testing.assert_array_equal(state.last_d, state.estimate[0])

    def test_stimulus_q1_single_task_is_gradient_descent(self):
        problem = make_builtin("mean_quadratic", 0, MQ_PARAMS)
        cfg = OptimizerConfig(T=5, eta=0.25, q=1, batch_size=2)
        res, states = drive(problem, "stimulus", cfg, 4)
        x = res.x0.copy()
        for state in states[1:]:
            x = x - 0.25 * (x - 1.0)  # full gradient of the mean quadratic
            np.testing.assert_allclose(state.x_curr, x, atol=1e-15)

    def test_mgd_moves_toward_stationary_set_on_sc_toy(self):
        toy = make_builtin("sc_toy")
        _, states = drive(toy, "mgd", OptimizerConfig(T=1, eta=0.005), 1)
        assert states[0].x_curr[0] == -1.0
        assert states[1].x_curr[0] > states[0].x_curr[0]
        assert states[1].last_d[0] < 0  # both gradients negative at x < 0

    @pytest.mark.parametrize("variant", ["stimulus", "stimulus_m"])
    def test_full_refresh_schedule_exact(self, variant):
        problem = make_builtin("synthetic_two_task", 3, {"n": 64, "d_in": 4})
        cfg = OptimizerConfig(T=40, eta=0.1, q=8, batch_size=8, seed=5, alpha=0.3)
        _, states = drive(problem, variant, cfg, 40)
        for state in states[1:]:
            formed_at_t = state.t - 1
            if formed_at_t % 8 == 0:
                recomputed = problem.full_gradients(state.x_prev)
                np.testing.assert_array_equal(state.estimate, recomputed)

    def test_momentum_recursion_identity(self):
        problem = make_builtin("synthetic_two_task", 1, {"n": 32, "d_in": 3})
        cfg = OptimizerConfig(T=30, eta=0.1, alpha=0.4, seed=2)
        _, states = drive(problem, "stimulus_m", cfg, 30)
        for prev, curr in zip(states, states[1:]):
            expected = prev.x_curr + 0.4 * (prev.x_curr - prev.x_prev) - 0.1 * curr.last_d
            np.testing.assert_array_equal(curr.x_curr, expected)

    def test_descent_inequality_mgd_sc_toy(self):
        # exact gradients: f_s(x_{t+1}) <= f_s(x_t) - (eta/4)*||d_t||^2
        toy = make_builtin("sc_toy")
        cfg = OptimizerConfig(T=200, eta=0.005)
        _, states = drive(toy, "mgd", cfg, 200)
        for prev, curr in zip(states, states[1:]):
            for s in range(2):
                before = toy.objective_value(s, prev.x_curr)
                after = toy.objective_value(s, curr.x_curr)
                assert after <= before - 0.005 / 4.0 * curr.last_d_norm_sq + 1e-12

    def test_max_loss_never_increases_under_mgd_descent_regime(self):
        toy = make_builtin("sc_toy")
        _, states = drive(toy, "mgd", OptimizerConfig(T=300, eta=0.005), 300)
        worst = [max(toy.objective_value(s, st.x_curr) for s in range(2)) for st in states]
        assert all(b <= a + 1e-15 for a, b in zip(worst, worst[1:]))


class TestVariantIdentities:
    def test_momentum_alpha_zero_matches_plain(self):
        problem = make_builtin("synthetic_two_task", 0, {"n": 64, "d_in": 4})
        cfg_m = OptimizerConfig(T=100, eta=0.2, alpha=0.0, seed=3, keep_trajectory=True)
        cfg_p = OptimizerConfig(T=100, eta=0.2, seed=3, keep_trajectory=True)
        rec_m = run(problem, "stimulus_m", cfg_m)
        rec_p = run(problem, "stimulus", cfg_p)
        np.testing.assert_array_equal(rec_m.trajectory, rec_p.trajectory)
        np.testing.assert_array_equal(rec_m.losses, rec_p.losses)
        np.testing.assert_array_equal(rec_m.ifo, rec_p.ifo)

    def test_stimulus_q1_full_batch_matches_mgd(self):
        problem = make_builtin("quadratic_tasks", 2, {"n": 16, "S": 2, "d": 2})
        cfg_s = OptimizerConfig(T=100, eta=0.05, q=1, batch_size=16, seed=1, keep_trajectory=True)
        cfg_g = OptimizerConfig(T=100, eta=0.05, seed=1, keep_trajectory=True)
        rec_s = run(problem, "stimulus", cfg_s)
        rec_g = run(problem, "mgd", cfg_g)
        np.testing.assert_array_equal(rec_s.trajectory, rec_g.trajectory)
        np.testing.assert_array_equal(rec_s.ifo, rec_g.ifo)

    def test_shared_seed_shares_initial_point_across_variants(self):
        problem = make_builtin("synthetic_two_task", 0, {"n": 64, "d_in": 4})
        recs = [
            run(problem, variant, OptimizerConfig(T=1, eta=0.1, seed=9, alpha=0.5))
            for variant in ("mgd", "smgd", "stimulus", "stimulus_m")
        ]
        for rec in recs[1:]:
            np.testing.assert_array_equal(rec.losses[0], recs[0].losses[0])


class TestRun:
    def test_t_zero_records_initial_evaluation_only(self):
        toy = make_builtin("sc_toy")
        rec = run(toy, "mgd", OptimizerConfig(T=0, eta=0.1))
        assert rec.t.tolist() == [0]
        assert rec.total_ifo == 0
        assert np.isnan(rec.d_norm_sq[0])
        assert np.isfinite(rec.stationarity[0])

    def test_byte_identical_reruns(self):
        problem = make_builtin("synthetic_two_task", 1, {"n": 64, "d_in": 4})
        cfg = OptimizerConfig(T=60, eta=0.2, seed=4, keep_trajectory=True)
        a = run(problem, "stimulus", cfg)
        b = run(problem, "stimulus", cfg)
        np.testing.assert_array_equal(a.trajectory, b.trajectory)
        np.testing.assert_array_equal(a.losses, b.losses)
        np.testing.assert_array_equal(a.stationarity, b.stationarity)
        np.testing.assert_array_equal(a.ifo, b.ifo)

    def test_hand_simulated_two_iterations(self):
        problem = make_builtin("mean_quadratic", 0, MQ_PARAMS)
        cfg = OptimizerConfig(T=2, eta=0.25, q=1, batch_size=1, seed=7, keep_trajectory=True)
        res = resolve_run(problem, "stimulus", cfg)
        x0 = float(res.x0[0])
        x1 = x0 - 0.25 * (x0 - 1.0)
        x2 = x1 - 0.25 * (x1 - 1.0)
        rec = run(problem, "stimulus", cfg)
        np.testing.assert_allclose(rec.trajectory.ravel(), [x0, x1, x2], atol=1e-15)

    def test_mgd_and_smgd_ifo_totals(self):
        problem = make_builtin("synthetic_two_task", 0, {"n": 64, "d_in": 3})
        rec = run(problem, "mgd", OptimizerConfig(T=10, eta=0.1))
        assert rec.total_ifo == 10 * 64
        rec = run(problem, "smgd", OptimizerConfig(T=10, eta=0.1, batch_size=8))
        assert rec.total_ifo == 10 * 8

    def test_adaptive_ifo_with_forced_variance(self):
        problem = make_builtin("synthetic_two_task", 0, {"n": 64, "d_in": 3})
        T, q, batch = 32, 8, 8
        # sigma2 huge: every adaptive refresh caps at the full dataset
        cfg = OptimizerConfig(T=T, eta=0.1, q=q, batch_size=batch, sigma2=1e12)
        rec = run(problem, "stimulus_plus", cfg)
        refreshes = math.ceil(T / q)
        assert rec.total_ifo == refreshes * 64 + (T - refreshes) * batch
        # sigma2 zero: refresh batches clamp to a single sample
        cfg = OptimizerConfig(T=T, eta=0.1, q=q, batch_size=batch, sigma2=0.0)
        rec = run(problem, "stimulus_plus", cfg)
        assert rec.total_ifo == refreshes * 1 + (T - refreshes) * batch

    def test_distance_column_tracks_known_optimum(self):
        toy = make_builtin("sc_toy")
        rec = run(toy, "mgd", OptimizerConfig(T=5, eta=0.005, keep_trajectory=True))
        assert rec.dist_sq is not None
        np.testing.assert_allclose(
            rec.dist_sq, (rec.trajectory.ravel() - 0.0) ** 2, atol=1e-15
        )

    def test_metric_cadence_skips_rows(self):
        problem = make_builtin("synthetic_two_task", 0, {"n": 64, "d_in": 3})
        rec = run(problem, "mgd", OptimizerConfig(T=10, eta=0.1, metric_cadence=4))
        finite = np.isfinite(rec.stationarity)
        assert finite.tolist() == [t % 4 == 0 for t in range(10)] + [True]

    def test_early_stop(self):
        toy = make_builtin("sc_toy")
        cfg = OptimizerConfig(T=5000, eta=0.005, epsilon=1e-4, early_stop=True)
        rec = run(toy, "stimulus", cfg)
        assert rec.t[-1] < 5000
        assert rec.stationarity[-2] <= 1e-4

    def test_grad_noise_deterministic_and_stochastic(self):
        toy = make_builtin("sc_toy")
        cfg = OptimizerConfig(T=50, eta=0.005, grad_noise=0.3, seed=1, keep_trajectory=True)
        a = run(toy, "smgd", cfg)
        b = run(toy, "smgd", cfg)
        np.testing.assert_array_equal(a.trajectory, b.trajectory)
        clean = run(toy, "smgd", OptimizerConfig(T=50, eta=0.005, seed=1, keep_trajectory=True))
        assert not np.array_equal(a.trajectory, clean.trajectory)
        other = run(toy, "smgd", OptimizerConfig(T=50, eta=0.005, grad_noise=0.3, seed=2, keep_trajectory=True))
        assert not np.array_equal(a.trajectory, other.trajectory)

    def test_qp_failure_carries_iteration_context_and_partial_record(self):
        problem = make_builtin("quadratic_tasks", 1, {"n": 16, "S": 3, "d": 2})
        cfg = OptimizerConfig(T=10, eta=0.05, qp_max_iters=0)
        with pytest.raises(QPError, match="iteration 0") as info:
            run(problem, "mgd", cfg)
        partial = info.value.partial_record
        assert partial.t.tolist() == [0]


class TestAdaptiveVariants:
    @pytest.mark.parametrize(
        "variant,alpha,discount",
        [("stimulus_plus", None, 1.0), ("stimulus_m_plus", 0.6, 0.6**2)],
    )
    def test_gamma_tracker_matches_direct_epoch_sum(self, variant, alpha, discount):
        problem = make_builtin("synthetic_two_task", 2, {"n": 64, "d_in": 3})
        q = 8
        cfg = OptimizerConfig(T=3 * q, eta=0.1, q=q, batch_size=8, alpha=alpha, seed=4, sigma2=1.0)
        _, states = drive(problem, variant, cfg, 3 * q)
        d_history = [s.last_d_norm_sq for s in states[1:]]
        # after the last step of each epoch the tracker holds the full
        # discounted epoch sum that the next refresh will consume
        for epoch_end in (q, 2 * q, 3 * q):
            tracker = states[epoch_end].gamma
            start = epoch_end - q
            expected = sum(
                discount ** (epoch_end - 1 - i) * d_history[i] / q
                for i in range(start, epoch_end)
            )
            assert tracker.value == pytest.approx(expected, rel=1e-12)
            assert tracker.count == q

    def test_refresh_batch_sizes_follow_the_rule(self):
        from stimulus_moo.estimators import adaptive_batch_size

        problem = make_builtin("synthetic_two_task", 2, {"n": 64, "d_in": 3})
        q, sigma2, eps = 8, 0.05, 1e-3
        cfg = OptimizerConfig(
            T=3 * q + 1, eta=0.1, q=q, batch_size=8, seed=4, sigma2=sigma2, epsilon=eps
        )
        res = resolve_run(problem, "stimulus_plus", cfg)
        state = initial_state(problem, res)
        # the counter object is shared across states, so charges must be
        # captured as the loop runs
        charges, gammas_before = [], []
        for _ in range(3 * q + 1):
            before = state.counter.total_calls
            gammas_before.append(state.gamma.value)
            state = step(state, res, problem)
            charges.append(state.counter.total_calls - before)
        for refresh_t in (0, q, 2 * q, 3 * q):
            expected = adaptive_batch_size(
                res.c_gamma, res.c_eps, sigma2, gammas_before[refresh_t], eps, 64
            )
            assert charges[refresh_t] == expected
        assert charges[0] == 64  # first refresh: sentinel caps at n
        assert all(charges[t] == 8 for t in range(3 * q) if t % q != 0)


class TestConfigValidation:
    def test_defaults_follow_square_root_rule(self):
        problem = make_builtin("synthetic_two_task", 0, {"n": 1024, "d_in": 3})
        res = resolve_run(problem, "stimulus", OptimizerConfig(T=1, eta=0.1))
        assert res.q == 32 and res.batch_size == 32

    def test_momentum_requires_alpha(self):
        toy = make_builtin("sc_toy")
        with pytest.raises(ValueError, match="alpha"):
            resolve_run(toy, "stimulus_m", OptimizerConfig(T=1, eta=0.1))

    def test_alpha_range(self):
        toy = make_builtin("sc_toy")
        with pytest.raises(ValueError):
            resolve_run(toy, "stimulus_m", OptimizerConfig(T=1, eta=0.1, alpha=1.0))

    def test_eta_warning_when_l_known(self):
        toy = make_builtin("sc_toy")
        with pytest.warns(UserWarning, match="exceeds"):
            resolve_run(toy, "mgd", OptimizerConfig(T=1, eta=0.5))

    def test_unknown_variant(self):
        toy = make_builtin("sc_toy")
        with pytest.raises(ValueError, match="unknown variant"):
            resolve_run(toy, "sgd", OptimizerConfig(T=1, eta=0.1))

    def test_batch_size_bounds(self):
        toy = make_builtin("sc_toy")
        with pytest.raises(ValueError):
            resolve_run(toy, "smgd", OptimizerConfig(T=1, eta=0.1, batch_size=2))


class TestOutputWeighting:
    def test_weight_formula(self):
        weighting = OutputWeighting(mu=1.0, eta=0.5)
        np.testing.assert_allclose(weighting.weights(2), [1.0, 1.6], atol=1e-15)

    def test_invalid_regime_rejected(self):
        with pytest.raises(ValueError):
            OutputWeighting(mu=2.0, eta=1.0)

    def test_constant_trajectory(self):
        point = np.array([1.0, 2.0])
        trajectory = np.tile(point, (6, 1))
        out = select_output_weighted(trajectory, OutputWeighting(mu=1.0, eta=0.5), np.random.default_rng(0))
        np.testing.assert_array_equal(out, point)

    def test_selection_frequencies(self):
        weighting = OutputWeighting(mu=1.0, eta=0.5)
        trajectory = np.arange(3.0)[:, None]
        probs = weighting.normalized_weights(3)
        rng = np.random.default_rng(123)
        draws = 10_000
        counts = np.zeros(3)
        for _ in range(draws):
            counts[int(select_output_weighted(trajectory, weighting, rng)[0])] += 1
        sigma = np.sqrt(draws * probs * (1 - probs))
        assert np.all(np.abs(counts - draws * probs) <= 3.0 * sigma)

    def test_normalized_matches_raw_for_small_t(self):
        weighting = OutputWeighting(mu=0.5, eta=0.5)
        raw = weighting.weights(10)
        np.testing.assert_allclose(weighting.normalized_weights(10), raw / raw.sum(), atol=1e-12)
