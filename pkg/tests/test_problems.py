import numpy as np
import pytest

from stimulus_moo.problems import (
    ProblemMetadata,
    estimate_smoothness,
    make_builtin,
)

from oracles import central_difference_gradient

MQ_PARAMS = {"anchors": [[[0.0], [2.0]]]}  # the canonical 1-D pair a = [0, 2]


def builtin_suite():
    return [
        make_builtin("sc_toy"),
        make_builtin("mean_quadratic", 0, MQ_PARAMS),
        make_builtin("mean_quadratic", 3, {"n": 16, "S": 2, "d": 3}),
        make_builtin("quadratic_tasks", 1, {"n": 32, "S": 3, "d": 2}),
        make_builtin("synthetic_two_task", 2, {"n": 64, "d_in": 4}),
        make_builtin("synthetic_two_task", 2, {"n": 64, "d_in": 4, "hidden": 3, "trunk": "tanh"}),
    ]


class TestObjectiveValues:
    def test_sc_toy_values(self):
        toy = make_builtin("sc_toy")
        assert toy.objective_value(0, [2.0]) == 4.0
        assert toy.objective_value(1, [0.0]) == 1.0

    def test_mean_quadratic_hand_value(self):
        mq = make_builtin("mean_quadratic", 0, MQ_PARAMS)
        # ((0 - 0)^2/2 + (0 - 2)^2/2) / 2 = 1
        assert mq.objective_value(0, [0.0]) == pytest.approx(1.0, abs=1e-15)

    def test_dimension_mismatch_rejected(self):
        toy = make_builtin("sc_toy")
        with pytest.raises(ValueError):
            toy.objective_value(0, [1.0, 2.0])

    def test_objective_is_mean_of_samples(self):
        rng = np.random.default_rng(0)
        for problem in builtin_suite():
            meta = problem.metadata
            for _ in range(10):
                x = rng.normal(size=meta.d)
                for s in range(meta.S):
                    f = problem.objective_value(s, x)
                    mean = np.mean(
                        [problem.sample_value(s, j, x) for j in range(meta.n)]
                    )
                    assert abs(f - mean) <= 1e-12 * (1.0 + abs(f))


class TestSampleGradients:
    def test_mean_quadratic_sample_gradient(self):
        mq = make_builtin("mean_quadratic", 0, MQ_PARAMS)
        assert mq.sample_gradient(0, 1, [0.5])[0] == pytest.approx(-1.5, abs=1e-15)

    def test_sc_toy_sample_gradient(self):
        toy = make_builtin("sc_toy")
        assert toy.sample_gradient(0, 0, [3.0])[0] == pytest.approx(6.0, abs=1e-15)

    def test_synthetic_two_task_matches_finite_differences(self):
        problem = make_builtin("synthetic_two_task", 5, {"n": 32, "d_in": 4})
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = 0.5 * rng.normal(size=problem.metadata.d)
            s = int(rng.integers(0, 2))
            j = int(rng.integers(0, 32))
            grad = problem.sample_gradient(s, j, x)
            fd = central_difference_gradient(
                lambda z: problem.sample_value(s, j, z), x, step=1e-6
            )
            assert np.linalg.norm(fd - grad) <= 1e-6 * (1.0 + np.linalg.norm(grad))

    def test_all_builtins_match_finite_differences(self):
        rng = np.random.default_rng(2)
        for problem in builtin_suite():
            meta = problem.metadata
            for _ in range(10):
                x = rng.normal(size=meta.d)
                s = int(rng.integers(0, meta.S))
                j = int(rng.integers(0, meta.n))
                grad = problem.sample_gradient(s, j, x)
                fd = central_difference_gradient(
                    lambda z: problem.sample_value(s, j, z), x, step=1e-6
                )
                assert np.linalg.norm(fd - grad) <= 1e-5 * (1.0 + np.linalg.norm(grad))

    def test_index_out_of_range(self):
        mq = make_builtin("mean_quadratic", 0, MQ_PARAMS)
        with pytest.raises(ValueError):
            mq.sample_gradient(0, 2, [0.0])
        with pytest.raises(ValueError):
            mq.sample_gradient(1, 0, [0.0])


class TestFullGradient:
    def test_mean_quadratic_full_gradient(self):
        mq = make_builtin("mean_quadratic", 0, MQ_PARAMS)
        assert mq.full_gradient(0, [0.0])[0] == pytest.approx(-1.0, abs=1e-15)

    def test_single_sample_problem(self):
        toy = make_builtin("sc_toy")
        x = [0.7]
        np.testing.assert_array_equal(toy.full_gradient(1, x), toy.sample_gradient(1, 0, x))

    def test_symmetric_anchors_cancel_at_origin(self):
        base = np.array([[1.0, -0.5], [2.0, 0.25], [0.3, 1.0]])
        anchors = np.concatenate([base, -base])[None, :, :]
        curv = np.tile(np.array([[1.3, 0.7], [0.9, 1.1], [1.0, 2.0]]), (2, 1))[None, :, :]
        problem = make_builtin(
            "quadratic_tasks", 0, {"anchors": anchors, "curvatures": curv}
        )
        np.testing.assert_allclose(problem.full_gradient(0, [0.0, 0.0]), 0.0, atol=1e-15)

    def test_full_gradient_is_mean_of_sample_gradients(self):
        rng = np.random.default_rng(4)
        for problem in builtin_suite():
            meta = problem.metadata
            x = rng.normal(size=meta.d)
            for s in range(meta.S):
                full = problem.full_gradient(s, x)
                mean = np.mean(
                    [problem.sample_gradient(s, j, x) for j in range(meta.n)], axis=0
                )
                np.testing.assert_allclose(full, mean, atol=1e-12, rtol=1e-12)


class TestScToyConflictStructure:
    def test_conflict_for_positive_x(self):
        toy = make_builtin("sc_toy")
        for x in (0.1, 0.5, 1.0, 3.0):
            g0 = toy.full_gradient(0, [x])[0]
            g1 = toy.full_gradient(1, [x])[0]
            assert g0 > 0 and g1 < 0

    def test_agreement_for_negative_x(self):
        toy = make_builtin("sc_toy")
        for x in (-0.1, -0.5, -1.0, -3.0):
            assert toy.full_gradient(0, [x])[0] < 0
            assert toy.full_gradient(1, [x])[0] < 0


class TestFactory:
    def test_sc_toy_shape(self):
        toy = make_builtin("sc_toy")
        assert (toy.metadata.S, toy.metadata.d, toy.metadata.n) == (2, 1, 1)

    def test_determinism(self):
        a = make_builtin("quadratic_tasks", 7, {"S": 2, "d": 2, "n": 64})
        b = make_builtin("quadratic_tasks", 7, {"S": 2, "d": 2, "n": 64})
        np.testing.assert_array_equal(a.anchors, b.anchors)
        np.testing.assert_array_equal(a.curvatures, b.curvatures)
        c = make_builtin("synthetic_two_task", 9, {"n": 128})
        d = make_builtin("synthetic_two_task", 9, {"n": 128})
        np.testing.assert_array_equal(c.features, d.features)
        np.testing.assert_array_equal(c.labels, d.labels)

    def test_different_seeds_differ(self):
        a = make_builtin("synthetic_two_task", 0, {"n": 128})
        b = make_builtin("synthetic_two_task", 1, {"n": 128})
        assert not np.array_equal(a.features, b.features)

    def test_size_passthrough(self):
        problem = make_builtin("synthetic_two_task", 0, {"n": 1024})
        assert problem.metadata.n == 1024

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown problem name"):
            make_builtin("nope")

    def test_unknown_size_param(self):
        with pytest.raises(ValueError, match="unknown size parameter"):
            make_builtin("sc_toy", 0, {"n": 4})

    def test_metadata_constraint(self):
        with pytest.raises(ValueError):
            ProblemMetadata(n=1, S=1, d=1, strong_convexity_mu=1.0)
        with pytest.raises(ValueError):
            ProblemMetadata(n=1, S=1, d=1, smoothness_L=1.0, strong_convexity_mu=2.0)


class TestSmoothnessEstimate:
    def test_recovers_unit_curvature(self):
        mq = make_builtin("mean_quadratic", 3, {"n": 16, "S": 2, "d": 3})
        assert estimate_smoothness(mq, iters=20) == pytest.approx(1.0, rel=1e-6)

    def test_matches_analytic_quadratic_l(self):
        problem = make_builtin("quadratic_tasks", 1, {"n": 32, "S": 3, "d": 2})
        est = estimate_smoothness(problem, iters=60)
        assert est == pytest.approx(problem.metadata.smoothness_L, rel=1e-4)
