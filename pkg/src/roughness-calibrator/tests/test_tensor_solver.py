"""Unit tests for the quadratic model, its Jacobian and the tensor iteration."""

import pytest
import numpy as np
from pathlib import Path

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from calibration import perturb
from forward_sim import generate_measurements, reference_state
from models import InnerSolverConfig, SolverConfig, TerminationReason
from network_model import random_network
from newton_solver import newton_direction
from system_assembly import CalibrationProblem
from tensor_solver import (
    damped_least_squares,
    explicit_tensor_model,
    solve_tensor,
    solve_tensor_direction,
    tensor_jacobian,
    tensor_residual,
)


def random_problem(rng, n_j, n_l, n_p, n_m):
    topo, pipes = random_network(rng, n_j, n_l, n_p=n_p)
    demands = [rng.uniform(0.5, 2.5, n_j) / 1000.0 for _ in range(n_m)]
    sets, _ = generate_measurements(
        pipes.reference_roughness, demands, [topo.default_source_heads] * n_m, topo, pipes
    )
    return CalibrationProblem(topo, pipes, sets)


def perturbed_states(problem, rng, count):
    """States around the starting point with the roughness redrawn."""
    x0 = problem.initial_state().x
    for _ in range(count):
        x = x0.copy()
        x[: problem.n_l] = rng.uniform(0.002, 0.04, problem.n_l) * problem.pipes.diameter
        x[problem.n_l:] += rng.normal(0.0, 0.05, x.size - problem.n_l)
        yield x


class TestModelAtZero:
    """At d = 0 the model and its Jacobian reproduce f and J."""

    def test_residual_and_jacobian(self, benchmark_problem):
        rng = np.random.default_rng(11)
        zero = np.zeros(benchmark_problem.size)
        for x in perturbed_states(benchmark_problem, rng, 100):
            report = benchmark_problem.residual(x)
            bundles = benchmark_problem.bundles(x)

            model = tensor_residual(zero, benchmark_problem, bundles, report.per_set).stacked
            np.testing.assert_allclose(model, report.f, rtol=1e-10, atol=1e-16)
            np.testing.assert_allclose(
                tensor_jacobian(zero, benchmark_problem, bundles),
                benchmark_problem.jacobian(x, bundles),
                rtol=1e-12,
                atol=1e-15,
            )

    def test_kernel_coordinates_leave_model_unchanged(self, loop_problem):
        x = loop_problem.initial_state().x
        report = loop_problem.residual(x)
        bundles = loop_problem.bundles(x)
        d = np.random.default_rng(1).normal(size=loop_problem.size) * 1e-4
        alpha = [np.array([2e-4]), np.array([-1e-4])]

        plain = tensor_residual(d, loop_problem, bundles, report.per_set).stacked
        shifted = tensor_residual(d, loop_problem, bundles, report.per_set, alpha).stacked
        np.testing.assert_allclose(shifted, plain, atol=1e-15)

    def test_vanishes_at_the_root(self, loop_problem):
        x_star = reference_state(loop_problem, loop_problem.pipes.reference_roughness)
        report = loop_problem.residual(x_star)
        bundles = loop_problem.bundles(x_star)
        model = tensor_residual(np.zeros(loop_problem.size), loop_problem, bundles, report.per_set)

        assert np.sum(np.abs(model.stacked)) < 1e-9


class TestTensorJacobian:
    """Analytic model Jacobian against central differences."""

    def test_finite_differences(self, loop_problem):
        rng = np.random.default_rng(5)
        x = loop_problem.initial_state().x
        report = loop_problem.residual(x)
        bundles = loop_problem.bundles(x)
        scale = np.maximum(np.abs(x), 1e-3)
        d = rng.normal(size=x.size) * 0.05 * scale

        def model(dd):
            return tensor_residual(dd, loop_problem, bundles, report.per_set).stacked

        J = tensor_jacobian(d, loop_problem, bundles)
        fd = np.zeros_like(J)
        for c in range(x.size):
            e = np.zeros_like(d)
            e[c] = 1e-6 * scale[c]
            fd[:, c] = (model(d + e) - model(d - e)) / (2 * e[c])

        assert np.max(np.abs(J - fd)) / np.max(np.abs(fd)) < 1e-5


class TestExplicitSecondOrderModel:
    """The Hadamard form matches the second-order Taylor model with explicit Hessians."""

    def test_random_small_networks(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            problem = random_problem(rng, n_j=3, n_l=4, n_p=2, n_m=2)
            x = problem.initial_state().x
            report = problem.residual(x)
            J = problem.jacobian(x)
            scale = np.ones_like(x)
            scale[: problem.n_l] = problem.pipes.diameter * 0.01
            d = rng.normal(size=x.size) * 0.1 * scale

            hadamard = tensor_residual(d, problem, problem.bundles(x), report.per_set).stacked
            taylor = explicit_tensor_model(problem, x, d)
            quad_hadamard = hadamard - report.f - J @ d
            quad_taylor = taylor - report.f - J @ d

            rel = np.linalg.norm(quad_hadamard - quad_taylor) / np.linalg.norm(quad_taylor)
            assert rel < 1e-4


class TestDampedLeastSquares:
    """Tests for the inner Marquardt iteration."""

    def test_rosenbrock(self):
        def fun(d):
            return np.array([10.0 * (d[1] - d[0] ** 2), 1.0 - d[0]])

        def jac(d):
            return np.array([[-20.0 * d[0], 10.0], [-1.0, 0.0]])

        cfg = InnerSolverConfig(max_iter=200, gtol=1e-14)
        d, report = damped_least_squares(fun, jac, np.array([-1.2, 1.0]), cfg)

        np.testing.assert_allclose(d, [1.0, 1.0], atol=1e-6)
        assert report.final_norm < report.initial_norm
        assert all(b <= a for a, b in zip(report.history, report.history[1:]))

    def test_zero_start_at_solution(self):
        d, report = damped_least_squares(
            lambda d: d - 1.0, lambda d: np.eye(2), np.ones(2), InnerSolverConfig()
        )

        np.testing.assert_array_equal(d, [1.0, 1.0])
        assert report.converged
        assert report.iterations == 0


class TestSolveTensorDirection:
    """Tests for the tensor search direction."""

    def test_zero_direction_at_the_root(self, loop_problem):
        x_star = reference_state(loop_problem, loop_problem.pipes.reference_roughness)
        direction = solve_tensor_direction(x_star, loop_problem)

        assert np.linalg.norm(direction.d) <= 1e-6 * (1.0 + np.linalg.norm(x_star))
        assert not direction.fallback

    def test_never_worse_than_start(self, benchmark_problem):
        x = benchmark_problem.initial_state().x
        report = benchmark_problem.residual(x)
        bundles = benchmark_problem.bundles(x)
        cfg = InnerSolverConfig()
        direction = solve_tensor_direction(x, benchmark_problem, cfg, report)

        d0 = cfg.initial_fraction * newton_direction(benchmark_problem.jacobian(x, bundles), report.f)

        def norm(d):
            return np.linalg.norm(tensor_residual(d, benchmark_problem, bundles, report.per_set).stacked)

        assert norm(direction.d) <= norm(d0)

    def test_partition(self, benchmark_problem):
        direction = solve_tensor_direction(benchmark_problem.initial_state().x, benchmark_problem)

        assert direction.d_eps.shape == (8,)
        assert [h.shape for h in direction.d_hN] == [(2,), (2,), (2,)]


class TestSolveTensor:
    """Tests for the tensor calibration loop."""

    def test_recovers_series_roughness(self, series_problem):
        cfg = SolverConfig(eps_f=1e-13, eps_x=1e-18, max_iter=100)
        result = solve_tensor(series_problem.initial_state(), cfg, series_problem)

        assert result.converged
        np.testing.assert_allclose(result.x, [0.001, 0.0008], rtol=1e-6)

    def test_recovers_random_trees(self):
        rng = np.random.default_rng(2024)
        cfg = SolverConfig(eps_f=1e-13, eps_x=1e-18, max_iter=200)
        for _ in range(20):
            n_j = int(rng.integers(2, 6))
            problem = random_problem(rng, n_j=n_j, n_l=n_j, n_p=n_j, n_m=1)
            result = solve_tensor(problem.initial_state(), cfg, problem)

            assert result.converged
            np.testing.assert_allclose(result.x, problem.pipes.reference_roughness, rtol=1e-6)

    def test_fixed_point_at_the_root(self, loop_problem):
        x_star = reference_state(loop_problem, loop_problem.pipes.reference_roughness)
        state = loop_problem.initial_state().with_x(x_star)
        result = solve_tensor(state, SolverConfig(eps_f=1e-9), loop_problem)

        assert result.iterations <= 1
        assert result.reason == TerminationReason.RESIDUAL

    def test_benchmark_decreases_residual(self, benchmark_problem):
        state = benchmark_problem.initial_state()
        result = solve_tensor(state, SolverConfig(max_iter=25), benchmark_problem)

        assert result.v < benchmark_problem.residual(state.x).v
        assert np.all(np.diff(result.history) < 0)

    @pytest.mark.benchmark
    def test_benchmark_reaches_small_residual(self, benchmark_problem):
        rng = np.random.default_rng(0)
        state = benchmark_problem.initial_state()
        cfg = SolverConfig(max_iter=25, eps_f=1e-6)
        best = min(
            solve_tensor(perturb(state, benchmark_problem.pipes, rng), cfg, benchmark_problem).v
            for _ in range(50)
        )

        assert best < 1e-6
