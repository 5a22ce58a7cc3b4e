import math

import numpy as np
import pytest
from scipy import sparse

from core import (
    Ball,
    ContractViolation,
    InvalidSlaterError,
    RegimeError,
    RngStream,
    check_subgradients,
    check_weak_convexity,
)
from problems import (
    LinearClassifierData,
    ThetaGrid,
    calibrate_nu,
    dp_oracle,
    dp_problem,
    equality_reduction,
    erm_pretrain,
    hinge_erm_oracle,
    l1_ball_problem,
    linear_oracle,
    lipschitz_constants,
    max_constraint,
    pinv_norm,
    roc_fairness_oracle,
    roc_problem,
    scad,
    scad_constraint_problem,
    scad_eps_bar_sq,
    scad_oracle,
    scad_slater_theta,
    shifted_oracle,
    sigmoid_gaps,
    squared_norm_oracle,
    sum_oracle,
    theta_grid,
    two_ball_boundary,
)
from schedules import TheoryWarning


class TestHinge:
    def test_single_example(self):
        data = LinearClassifierData(np.array([[1.0]]), np.array([1.0]))
        result = hinge_erm_oracle(data).evaluate(np.zeros(1))
        assert result.value == 1.0
        np.testing.assert_array_equal(result.subgradient, [-1.0])

    def test_margin_one_is_inactive(self):
        data = LinearClassifierData(np.array([[1.0]]), np.array([1.0]))
        result = hinge_erm_oracle(data).evaluate(np.ones(1))
        assert result.value == 0.0
        np.testing.assert_array_equal(result.subgradient, [0.0])

    def test_labels_must_be_signed(self):
        with pytest.raises(ContractViolation):
            LinearClassifierData(np.eye(2), np.array([0.0, 1.0]))

    def test_pretraining_lowers_the_loss(self, classifier_data):
        oracle = hinge_erm_oracle(classifier_data)
        L_star, x_erm = erm_pretrain(classifier_data, iters=500, eta=1.0, rng=RngStream(0))
        assert L_star < 1.0
        assert oracle.value(x_erm) == pytest.approx(L_star)

    def test_minibatch_pretraining(self, classifier_data):
        L_star, _ = erm_pretrain(classifier_data, iters=300, eta=1.0, rng=RngStream(0), batch_size=32)
        assert L_star < 1.0


class TestFairness:
    def test_lipschitz_constants(self):
        data = LinearClassifierData(np.array([[1.0, 0.0]]), np.array([1.0]),
                                    group_p=np.array([[2.0, 0.0]]), group_u=np.array([[2.0, 0.0]]))
        alpha, beta = lipschitz_constants(data)
        assert (alpha, beta) == (pytest.approx(1.0), pytest.approx(2.0))

    def test_single_threshold_roc_is_dp(self, classifier_data, rng):
        roc = roc_fairness_oracle(classifier_data, ThetaGrid(np.zeros(1)))
        dp = dp_oracle(classifier_data)
        for _ in range(200):
            x = rng.standard_normal(classifier_data.dimension)
            assert roc.value(x) == dp.value(x)

    def test_roc_gap_is_a_rate_difference(self, classifier_data, rng):
        grid = theta_grid(classifier_data, np.full(classifier_data.dimension, 0.5), size=40)
        oracle = roc_fairness_oracle(classifier_data, grid)
        for _ in range(200):
            x = rng.standard_normal(classifier_data.dimension)
            value = oracle.value(x)
            assert 0.0 <= value <= 1.0
            assert value == pytest.approx(np.abs(sigmoid_gaps(classifier_data, grid.thresholds, x)).max())

    def test_dp_is_weakly_convex_with_beta(self, classifier_data, rng):
        _, beta = lipschitz_constants(classifier_data)
        oracle = dp_oracle(classifier_data)
        check = check_weak_convexity(oracle.value, beta, lambda r: r.uniform(-2.0, 2.0, classifier_data.dimension),
                                     rng, pairs=2000)
        assert check.passed

    def test_dp_gradient_is_beta_lipschitz(self, classifier_data, rng):
        _, beta = lipschitz_constants(classifier_data)
        oracle = dp_oracle(classifier_data)

        def gradient(x):
            return np.sign(sigmoid_gaps(classifier_data, np.zeros(1), x)[0]) * oracle.evaluate(x).subgradient

        for _ in range(200):
            x = rng.standard_normal(classifier_data.dimension)
            y = rng.standard_normal(classifier_data.dimension)
            assert np.linalg.norm(gradient(x) - gradient(y)) <= beta * np.linalg.norm(x - y) + 1e-12

    def test_theta_grid_spans_widened_score_range(self):
        data = LinearClassifierData(np.array([[0.0], [1.0]]), np.array([1.0, -1.0]))
        grid = theta_grid(data, np.ones(1))
        assert len(grid) == 400
        assert grid.thresholds[0] == pytest.approx(-0.5)
        assert grid.thresholds[-1] == pytest.approx(1.5)
        np.testing.assert_allclose(np.diff(grid.thresholds), 2.0 / 399)

    def test_theta_grid_with_constant_scores(self):
        data = LinearClassifierData(np.array([[1.0], [1.0]]), np.array([1.0, -1.0]))
        with pytest.warns(TheoryWarning, match="single threshold"):
            grid = theta_grid(data, np.ones(1))
        assert len(grid) == 1

    def test_theta_grid_must_increase(self):
        with pytest.raises(ContractViolation):
            ThetaGrid(np.array([0.0, 0.0]))

    def test_fairness_subgradients(self, classifier_data, rng):
        oracle = dp_oracle(classifier_data)

        def kink_distance(x):
            return abs(sigmoid_gaps(classifier_data, np.zeros(1), x)[0])

        check = check_subgradients(oracle, lambda r: r.standard_normal(classifier_data.dimension), rng,
                                   points=200, kink_distance=kink_distance)
        assert check.passed


class TestSCAD:
    @pytest.mark.parametrize("z, value, slope", [
        (0.5, 1.0, 2.0),
        (1.5, 2.75, 1.0),
        (3.0, 3.0, 0.0),
        (-0.5, 1.0, -2.0),
        (0.0, 0.0, 0.0),
    ])
    def test_values(self, z, value, slope):
        result = scad([z])
        assert result.value == pytest.approx(value)
        assert result.subgradient[0] == pytest.approx(slope)

    def test_continuity_at_breakpoints(self):
        for z in (1.0, 2.0):
            assert scad([z - 1e-12]).value == pytest.approx(scad([z + 1e-12]).value, abs=1e-9)

    def test_bounded_by_three_per_coordinate(self, rng):
        x = rng.uniform(-10.0, 10.0, 50)
        assert scad(x).value <= 3.0 * x.size

    def test_two_weakly_convex(self, rng):
        oracle = scad_oracle(4)
        check = check_weak_convexity(oracle.value, 2.0, lambda r: r.uniform(-3.0, 3.0, 4), rng, pairs=5000)
        assert check.passed
        assert not check_weak_convexity(oracle.value, 1.0, lambda r: r.uniform(-3.0, 3.0, 4), rng,
                                        pairs=5000).passed

    def test_slater_constants(self):
        assert scad_slater_theta(4.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0)
        assert scad_eps_bar_sq(4.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0)
        assert scad_slater_theta(1.0, 2.0, 0.0) == pytest.approx(0.5)

    def test_multiple_of_three_rejected(self):
        with pytest.raises(RegimeError):
            scad_slater_theta(3.0, 1.0, 1.0)

    def test_constraint_problem(self):
        problem = scad_constraint_problem(linear_oracle([1.0, 0.0]), 2, kappa=1.0, projection=Ball(2.0))
        assert problem.constants.rho == 2.0
        assert problem.constants.D == 4.0
        assert problem.constraint.value(np.zeros(2)) == -1.0
        with pytest.raises(InvalidSlaterError):
            scad_constraint_problem(linear_oracle([1.0, 0.0]), 2, kappa=0.0)


class TestComposition:
    def test_max_breaks_ties_by_first(self):
        oracle = max_constraint([shifted_oracle(linear_oracle([1.0]), 1.0),
                                 shifted_oracle(linear_oracle([-1.0]), 1.0)])
        result = oracle.evaluate(np.zeros(1))
        assert result.value == -1.0
        np.testing.assert_array_equal(result.subgradient, [1.0])

    def test_equality_residual(self):
        h = shifted_oracle(linear_oracle([0.0, 0.0]), 10.0)
        oracle = equality_reduction(h, np.eye(2), np.zeros(2))
        result = oracle.evaluate(np.array([1.0, -2.0]))
        assert result.value == 2.0
        np.testing.assert_array_equal(result.subgradient, [0.0, -1.0])

    def test_equality_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            equality_reduction(squared_norm_oracle(), np.eye(2), np.zeros(3))

    def test_pinv_norm(self):
        assert pinv_norm(np.eye(3)) == pytest.approx(1.0)
        assert pinv_norm(2.0 * np.eye(2)) == pytest.approx(0.5)
        with pytest.raises(RegimeError):
            pinv_norm(np.array([[1.0, 1.0], [2.0, 2.0]]))

    def test_sum_oracle(self):
        oracle = sum_oracle(linear_oracle([1.0, 1.0]), squared_norm_oracle(0.0, M=2.0), weight=0.5)
        result = oracle.evaluate(np.array([1.0, 2.0]))
        assert result.value == pytest.approx(3.0 + 2.5)
        np.testing.assert_allclose(result.subgradient, [2.0, 3.0])
        assert oracle.M == pytest.approx(math.sqrt(2.0) + 1.0)


class TestAssembledProblems:
    def test_dp_problem(self, classifier_data):
        problem = dp_problem(classifier_data, lam=0.2, kappa=0.02)
        _, beta = lipschitz_constants(classifier_data)
        assert problem.constraint.value(np.zeros(problem.dimension)) == pytest.approx(-0.02)
        assert problem.constants.rho == pytest.approx(max(0.4, beta))
        assert problem.constants.constraint_rho == pytest.approx(beta)

    def test_dp_problem_needs_positive_kappa(self, classifier_data):
        with pytest.raises(InvalidSlaterError):
            dp_problem(classifier_data, kappa=0.0)

    def test_roc_problem_slater_point(self, classifier_data):
        L_star, x_erm = erm_pretrain(classifier_data, iters=200, eta=1.0, rng=RngStream(0))
        problem = roc_problem(classifier_data, L_star, kappa_frac=0.001, radius_mult=5.0, x_erm=x_erm)
        assert problem.constraint.value(x_erm) == pytest.approx(-0.001 * L_star)
        assert problem.projection.radius == pytest.approx(5.0 * np.linalg.norm(x_erm))

    def test_group_rows_required(self):
        data = LinearClassifierData(sparse.eye(2), np.array([1.0, -1.0]))
        with pytest.raises(ContractViolation):
            dp_oracle(data)


class TestSyntheticInstances:
    def test_two_ball_slater_and_nu(self, two_ball):
        assert two_ball.constraint.value(np.array([-2.0, 0.0])) == pytest.approx(-1.0)
        assert two_ball.constants.nu == pytest.approx(2.0)

    def test_two_ball_error_bound(self, two_ball, rng):
        nu = two_ball.constants.nu
        for _ in range(500):
            direction = rng.standard_normal(2)
            direction[0] = -abs(direction[0])
            direction /= np.linalg.norm(direction)
            x = np.array([-2.0, 0.0]) + (1.0 + rng.uniform(0.0, nu / 2.0)) * direction
            g_plus = max(two_ball.constraint.value(x), 0.0)
            assert 0.5 * nu * two_ball.distance_to_feasible(x) <= g_plus + 1e-12

    def test_two_ball_weakly_convex_on_one_side(self, two_ball, rng):
        check = check_weak_convexity(two_ball.constraint.value, 2.0,
                                     lambda r: np.array([r.uniform(-4.0, -0.5), r.uniform(-4.0, 4.0)]),
                                     rng, pairs=2000)
        assert check.passed

    def test_boundary_points_lie_on_a_sphere(self):
        points = two_ball_boundary([-2.0, 0.0], [2.0, 0.0], 1.0, samples=256)
        distances = np.minimum(np.linalg.norm(points - [-2.0, 0.0], axis=1),
                               np.linalg.norm(points - [2.0, 0.0], axis=1))
        np.testing.assert_allclose(distances, 1.0)

    def test_calibrate_nu_needs_points(self):
        with pytest.raises(ContractViolation):
            calibrate_nu(squared_norm_oracle(), np.zeros((0, 2)))

    def test_l1_ball_constants(self, l1_problem):
        c = l1_problem.constants
        assert (c.M, c.D, c.g_feas_value) == (6.0, 6.0, -1.0)
        assert l1_problem.distance_to_feasible(np.array([2.0, 0.0])) == pytest.approx(1.0)

    def test_l1_ball_noise_is_optional(self):
        assert not l1_ball_problem([2.0, 0.0]).is_stochastic
        assert l1_ball_problem([2.0, 0.0], value_sigma=0.1).is_stochastic
