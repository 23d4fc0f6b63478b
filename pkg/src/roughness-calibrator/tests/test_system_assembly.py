"""Unit tests for the stacked residual, block Jacobian and kernel quantities."""

import pytest
import numpy as np
from pathlib import Path

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from errors import FlowDomainError
from system_assembly import CalibrationState, numerical_rank


def fd_jacobian(problem, x, rel=1e-7):
    J = np.zeros((problem.n_m * problem.n_j, x.size))
    for c in range(x.size):
        h = rel * max(abs(x[c]), 1e-3)
        e = np.zeros_like(x)
        e[c] = h
        J[:, c] = (problem.residual(x + e).f - problem.residual(x - e).f) / (2 * h)
    return J


class TestInitialState:
    """Starting point and bounds on the bundled benchmark."""

    def test_matches_table(self, benchmark_problem, benchmark_tables):
        state = benchmark_problem.initial_state()
        eps, heads = benchmark_problem.split(state.x)

        np.testing.assert_allclose(eps, 0.0004)
        np.testing.assert_allclose(np.concatenate(heads), benchmark_tables["x0_heads"], atol=1e-4)

    def test_bounds(self, benchmark_problem):
        state = benchmark_problem.initial_state()
        lower, _ = benchmark_problem.split(state.lower)
        upper, upper_heads = benchmark_problem.split(state.upper)
        _, lower_heads = benchmark_problem.split(state.lower)

        np.testing.assert_allclose(lower, 0.0)
        np.testing.assert_allclose(upper, 0.004)
        # node 1 of set 1 neighbours the reservoir and nodes 2 and 3
        assert upper_heads[0][0] == pytest.approx(100.0)
        assert lower_heads[0][0] == pytest.approx(90.8720)
        assert state.feasible()

    def test_sizes(self, benchmark_problem):
        assert benchmark_problem.n_m == 3
        assert benchmark_problem.size == 8 + 3 * 2


class TestResidualAndJacobian:
    """Residual map and its analytic Jacobian."""

    def test_jacobian_matches_finite_differences(self, benchmark_problem):
        x = benchmark_problem.initial_state().x
        J = benchmark_problem.jacobian(x)

        np.testing.assert_allclose(J, fd_jacobian(benchmark_problem, x), rtol=1e-5, atol=1e-12)

    def test_jacobian_with_cycles_and_unmeasured_node(self, loop_problem):
        x = loop_problem.initial_state().x
        J = loop_problem.jacobian(x)

        assert J.shape == (2 * 3, 4 + 2 * 1)
        np.testing.assert_allclose(J, fd_jacobian(loop_problem, x), rtol=1e-5, atol=1e-12)

    def test_jacobian_without_unmeasured_nodes(self, series_problem):
        x = series_problem.initial_state().x
        J = series_problem.jacobian(x)

        assert J.shape == (2, 2)
        np.testing.assert_allclose(J, fd_jacobian(series_problem, x), rtol=1e-5, atol=1e-12)

    def test_full_column_rank(self, benchmark_problem):
        x = benchmark_problem.initial_state().x
        J = benchmark_problem.jacobian(x)

        assert numerical_rank(J) == benchmark_problem.size

    def test_residual_norm_is_l1(self, benchmark_problem):
        report = benchmark_problem.residual(benchmark_problem.initial_state().x)

        assert report.v == pytest.approx(np.sum(np.abs(report.f)))
        assert report.v_lps == pytest.approx(1000.0 * report.v)
        assert len(report.per_set) == 3

    def test_zero_head_loss_names_the_set(self, benchmark_problem):
        x = benchmark_problem.initial_state().x.copy()
        # node 1 at reservoir level: no head loss along p1 in set 2
        x[8 + 2] = 100.0

        with pytest.raises(FlowDomainError) as exc:
            benchmark_problem.bundles(x)

        assert exc.value.measurement_set == 2
        assert exc.value.pipes == [0]

    def test_residual_rejects_zero_head_loss(self, benchmark_problem):
        x = benchmark_problem.initial_state().x.copy()
        x[8 + 2] = 100.0

        with pytest.raises(FlowDomainError) as exc:
            benchmark_problem.residual(x)

        assert exc.value.measurement_set == 2
        assert exc.value.pipes == [0]
        assert "measurement set 2" in str(exc.value)

    def test_split_rejects_wrong_length(self, benchmark_problem):
        with pytest.raises(ValueError):
            benchmark_problem.split(np.zeros(5))

    def test_split_join(self, benchmark_problem):
        x = np.arange(benchmark_problem.size, dtype=float)
        eps, heads = benchmark_problem.split(x)

        np.testing.assert_array_equal(benchmark_problem.join(eps, heads), x)


class TestKernel:
    """Laplacian projection and cycle-space identities."""

    def test_incidence_annihilates_cycles(self, benchmark_problem):
        assert np.array_equal(
            benchmark_problem.topo.incidence @ benchmark_problem.topo.cycle.T,
            np.zeros((5, 3), dtype=int),
        )

    def test_projection_reproduces_residual(self, benchmark_problem):
        report = benchmark_problem.residual(benchmark_problem.initial_state().x)
        fbar0, r_f = benchmark_problem.kernel_rhs(report.per_set)

        for f_i, f0 in zip(report.per_set, fbar0):
            np.testing.assert_allclose(benchmark_problem.A @ f0, f_i, rtol=1e-10, atol=1e-15)
        assert r_f.shape == (3 * 8,)

    def test_kernel_coordinates_do_not_change_the_image(self, benchmark_problem):
        report = benchmark_problem.residual(benchmark_problem.initial_state().x)
        alpha = [np.array([0.3, -1.0, 2.0]) * 1e-4 for _ in range(3)]
        plain, _ = benchmark_problem.kernel_rhs(report.per_set)
        shifted, _ = benchmark_problem.kernel_rhs(report.per_set, alpha)

        for p, s in zip(plain, shifted):
            assert not np.allclose(p, s)
            np.testing.assert_allclose(benchmark_problem.A @ p, benchmark_problem.A @ s, atol=1e-15)


class TestCalibrationState:
    """Bounds handling."""

    def setup_method(self):
        self.state = CalibrationState(
            x=np.array([0.5, 2.0]),
            lower=np.array([0.0, 0.0]),
            upper=np.array([1.0, 1.0]),
        )

    def test_projection(self):
        np.testing.assert_array_equal(self.state.project(np.array([-1.0, 0.5])), [0.0, 0.5])

    def test_with_x_projects(self):
        moved = self.state.with_x(np.array([3.0, -3.0]))

        np.testing.assert_array_equal(moved.x, [1.0, 0.0])
        assert moved.feasible()

    def test_infeasible(self):
        assert not self.state.feasible()

    def test_inverted_bounds(self):
        with pytest.raises(ValueError):
            CalibrationState(x=np.zeros(1), lower=np.ones(1), upper=np.zeros(1))

    def test_unbounded_state(self, series_problem):
        state = series_problem.unbounded_state(np.array([1e-3, 2e-3]))

        np.testing.assert_array_equal(state.lower, [0.0, 0.0])
        assert np.all(np.isinf(state.upper))
