import numpy as np
import pytest

from core import (
    Ball,
    Box,
    ContractViolation,
    InvalidSlaterError,
    Oracle,
    OracleError,
    ProblemConstants,
    ProblemInstance,
    RegimeError,
    RngStream,
    StochasticOracle,
    Whole,
    check_projection,
    check_subgradient_bound,
    check_subgradients,
    check_weak_convexity,
    eval_constraint,
    eval_objective,
    project,
)
from problems import l1_oracle, squared_norm_oracle


def _problem(projection, dimension=2, x_feas=None):
    constants = ProblemConstants(M=1.0, x_feas=x_feas)
    return ProblemInstance(dimension, l1_oracle(np.zeros(dimension)), squared_norm_oracle(1.0), projection,
                           constants)


class TestProject:
    def test_ball_scales_radially(self):
        np.testing.assert_allclose(project(_problem(Ball(1.0)), [3.0, 4.0]), [0.6, 0.8])

    def test_box_interior_unchanged(self):
        x = np.array([1.5, -0.3, 2.0])
        np.testing.assert_array_equal(project(_problem(Box(-2.0, 2.0), 3), x), x)

    def test_ball_center_fixed(self):
        np.testing.assert_array_equal(project(_problem(Ball(2.0)), [0.0, 0.0]), [0.0, 0.0])

    def test_whole_space_is_identity(self):
        np.testing.assert_array_equal(project(_problem(Whole()), [7.0, -9.0]), [7.0, -9.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            project(_problem(Ball(1.0)), [1.0, 2.0, 3.0])

    def test_non_finite_point(self):
        with pytest.raises(ContractViolation):
            project(_problem(Ball(1.0)), [np.nan, 0.0])


class TestOracles:
    def test_l1_value_and_sign(self):
        result = eval_objective(_problem(Ball(5.0)), [1.0, -2.0])
        assert result.value == 3.0
        np.testing.assert_array_equal(result.subgradient, [1.0, -1.0])

    def test_l1_kink_returns_zero(self):
        result = eval_objective(_problem(Ball(5.0)), [0.0, 1.0])
        np.testing.assert_array_equal(result.subgradient, [0.0, 1.0])

    def test_squared_norm_gradient(self):
        result = eval_constraint(_problem(Ball(5.0)), [1.0, 0.0])
        assert result.value == 0.0
        np.testing.assert_array_equal(result.subgradient, [2.0, 0.0])

    def test_deterministic_repeat(self):
        problem = _problem(Ball(5.0))
        a = eval_constraint(problem, [0.3, 0.4])
        b = eval_constraint(problem, [0.3, 0.4])
        assert a.value == b.value
        np.testing.assert_array_equal(a.subgradient, b.subgradient)

    def test_non_finite_output_raises_with_location(self):
        broken = Oracle(lambda x: (np.inf, x), name="broken")
        with pytest.raises(OracleError) as info:
            broken.evaluate(np.array([1.0, 2.0]))
        assert info.value.oracle == "broken"
        np.testing.assert_array_equal(info.value.location, [1.0, 2.0])


class TestProblemInstance:
    def test_infeasible_slater_point(self):
        with pytest.raises(InvalidSlaterError):
            _problem(Ball(5.0), x_feas=np.array([2.0, 0.0]))

    def test_valid_slater_point(self):
        assert _problem(Ball(5.0), x_feas=np.zeros(2)).constants.x_feas is not None

    def test_negative_rho(self):
        with pytest.raises(RegimeError):
            ProblemInstance(1, l1_oracle(np.zeros(1)), squared_norm_oracle(), Whole(),
                            ProblemConstants(M=1.0, rho=-0.1))

    def test_nonpositive_M(self):
        with pytest.raises(RegimeError):
            ProblemInstance(1, l1_oracle(np.zeros(1)), squared_norm_oracle(), Whole(), ProblemConstants(M=0.0))


class TestRngStream:
    def test_same_seed_same_draws(self):
        np.testing.assert_array_equal(RngStream(9).standard_normal(50), RngStream(9).standard_normal(50))

    def test_children_are_reproducible_and_distinct(self):
        parent = RngStream(9)
        np.testing.assert_array_equal(parent.child(3).uniform(size=10), RngStream(9).child(3).uniform(size=10))
        assert not np.array_equal(parent.child(3).uniform(size=10), parent.child(4).uniform(size=10))

    def test_record(self):
        assert RngStream(5).child(2).child(7).record() == {"seed": 5, "key": [2, 7]}

    def test_seed_range(self):
        with pytest.raises(ContractViolation):
            RngStream(-1)


class TestStochasticOracle:
    def test_without_samplers_matches_base(self, rng):
        base = squared_norm_oracle()
        sampled = StochasticOracle(base)
        x = np.array([0.5, -1.0])
        assert sampled.sample_value(x, rng) == base.value(x)
        np.testing.assert_array_equal(sampled.sample_subgradient(x, rng), base.evaluate(x).subgradient)

    def test_gaussian_samples_are_unbiased(self, rng):
        base = squared_norm_oracle()
        noisy = StochasticOracle.gaussian(base, value_sigma=1.0, subgradient_sigma=1.0)
        x = np.array([0.5, -1.0])
        values = [noisy.sample_value(x, rng) for _ in range(100_000)]
        grads = np.array([noisy.sample_subgradient(x, rng) for _ in range(100_000)])
        assert np.mean(values) == pytest.approx(base.value(x), abs=0.02)
        np.testing.assert_allclose(grads.mean(axis=0), base.evaluate(x).subgradient, atol=0.02)

    def test_negative_sigma(self):
        with pytest.raises(ContractViolation):
            StochasticOracle.gaussian(squared_norm_oracle(), value_sigma=-1.0)


class TestPropertyChecks:
    def test_projection_suites(self, rng):
        ball = check_projection(Ball(1.0), lambda r: 3.0 * r.standard_normal(4), rng, pairs=10_000)
        box = check_projection(Box(-2.0, 2.0), lambda r: r.uniform(-5.0, 5.0, 4), rng.child(1), pairs=10_000)
        assert ball.passed and box.passed

    def test_subgradient_check_catches_wrong_gradient(self, rng):
        wrong = Oracle(lambda x: (float(x @ x), x), name="half_gradient", M=None)
        check = check_subgradients(wrong, lambda r: r.standard_normal(3), rng, points=50)
        assert not check.passed

    def test_subgradient_check_accepts_exact_gradient(self, rng):
        check = check_subgradients(squared_norm_oracle(), lambda r: r.standard_normal(3), rng, points=200)
        assert check.passed and check.samples == 200

    def test_weak_convexity_detects_concavity(self, rng):
        def concave(z):
            return -float(z @ z)

        sampler = lambda r: r.uniform(-2.0, 2.0, 3)  # noqa: E731
        assert not check_weak_convexity(concave, 1.0, sampler, rng, pairs=500).passed
        assert check_weak_convexity(concave, 2.0, sampler, rng.child(1), pairs=500).passed

    def test_subgradient_bound_needs_declared_M(self, rng):
        check = check_subgradient_bound(squared_norm_oracle(), lambda r: r.standard_normal(2), rng, points=10)
        assert not check.passed
