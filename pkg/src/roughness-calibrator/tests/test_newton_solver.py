"""Unit tests for the outer iteration and the Newton direction."""

import pytest
import numpy as np
from pathlib import Path

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import FlowDomainError, SingularSystemError
from forward_sim import reference_state
from models import SolverConfig, TerminationReason
from newton_solver import NewtonSolver, newton_direction, solve_newton


class TestNewtonDirection:
    """Tests for the least-squares step."""

    def test_square_system(self):
        J = np.array([[2.0, 1.0], [1.0, 3.0]])
        f = np.array([1.0, -1.0])

        np.testing.assert_allclose(newton_direction(J, f), np.linalg.solve(J, -f))

    def test_overdetermined_system(self):
        rng = np.random.default_rng(0)
        J = rng.normal(size=(6, 3))
        f = rng.normal(size=6)
        dx = newton_direction(J, f)

        # normal equations JᵀJ Δx = -Jᵀf
        np.testing.assert_allclose(J.T @ J @ dx, -J.T @ f, atol=1e-12)

    def test_rank_deficient(self):
        J = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])

        with pytest.raises(SingularSystemError):
            newton_direction(J, np.ones(3))

    def test_more_unknowns_than_equations(self):
        with pytest.raises(SingularSystemError) as exc:
            newton_direction(np.ones((1, 2)), np.ones(1))

        assert exc.value.condition == float("inf")


class TestSolveNewton:
    """Tests for the Newton calibration loop."""

    def test_recovers_planted_roughness(self, series_problem):
        cfg = SolverConfig(eps_f=1e-13, eps_x=1e-16, max_iter=100)
        result = solve_newton(series_problem.initial_state(), cfg, series_problem)

        assert result.converged
        assert result.reason == TerminationReason.RESIDUAL
        np.testing.assert_allclose(result.x, [0.001, 0.0008], rtol=1e-6)

    def test_history_strictly_decreasing(self, benchmark_problem):
        state = benchmark_problem.initial_state()
        result = solve_newton(state, SolverConfig(max_iter=20), benchmark_problem)

        assert result.history[0] == pytest.approx(benchmark_problem.residual(state.x).v)
        assert np.all(np.diff(result.history) < 0)
        assert len(result.history) == result.iterations + 1

    def test_iterates_stay_within_bounds(self, benchmark_problem):
        state = benchmark_problem.initial_state()
        result = solve_newton(state, SolverConfig(max_iter=20), benchmark_problem)

        assert np.all(result.x >= state.lower)
        assert np.all(result.x <= state.upper)

    def test_max_iter(self, benchmark_problem):
        cfg = SolverConfig(eps_f=1e-30, eps_x=1e-30, max_iter=1)
        result = solve_newton(benchmark_problem.initial_state(), cfg, benchmark_problem)

        assert result.reason in (TerminationReason.MAX_ITER, TerminationReason.LINE_SEARCH)
        assert result.iterations <= 1
        assert not result.converged

    def test_starting_at_the_root(self, simulate, network_docs):
        problem, _ = simulate(network_docs["loop"], [[0.5, 1.5, 1.0], [1.0, 0.8, 2.0]])
        x_star = reference_state(problem, problem.pipes.reference_roughness)
        result = solve_newton(problem.initial_state().with_x(x_star), SolverConfig(eps_f=1e-9), problem)

        assert result.iterations == 0
        assert result.reason == TerminationReason.RESIDUAL
        np.testing.assert_array_equal(result.x, x_star)

    def test_zero_head_loss_at_start_propagates(self, benchmark_problem):
        state = benchmark_problem.initial_state()
        x = state.x.copy()
        x[8 + 2] = 100.0

        with pytest.raises(FlowDomainError):
            solve_newton(state.with_x(x), SolverConfig(), benchmark_problem)

    def test_zero_head_loss_trial_is_rejected(self, series_problem, monkeypatch):
        residual = series_problem.residual
        calls = []

        def residual_failing_once(x):
            calls.append(x.copy())
            # the full step of the first iteration lands on a zero head loss
            if len(calls) == 2:
                raise FlowDomainError([0], measurement_set=1)
            return residual(x)

        monkeypatch.setattr(series_problem, "residual", residual_failing_once)
        state = series_problem.initial_state()
        result = solve_newton(state, SolverConfig(max_iter=5), series_problem)

        assert result.iterations >= 1
        assert result.history[1] < result.history[0]
        # the rejected full step was retried with a shorter one
        assert np.linalg.norm(calls[2] - calls[0]) < np.linalg.norm(calls[1] - calls[0])


class TestScaling:
    """Column scaling changes the conditioning, not the Newton step."""

    def test_scaled_step_matches_plain_step(self, series_problem):
        state = series_problem.initial_state()
        report = series_problem.residual(state.x)

        scaled = NewtonSolver(series_problem, SolverConfig(scaling_enabled=True))
        scaled.prepare(state)
        plain = NewtonSolver(series_problem, SolverConfig(scaling_enabled=False))
        plain.prepare(state)

        assert scaled.scale is not None
        assert plain.scale is None
        np.testing.assert_allclose(
            scaled.search_direction(state.x, report),
            plain.search_direction(state.x, report),
            rtol=1e-8,
        )
