"""Tensor search direction: second-order model in Hadamard form and its solution.

Per measurement set, with t = AᵀC̄_hᵀ d_hN, the model reads

    m^(i) = A·[½p_ε²⊙d_ε² - d_ε⊙p_εΔh⊙t + ½p_Δh²⊙t² + p_ε⊙d_ε - p_Δh⊙t + f̄_0^(i)]

and equals f^(i) at d = 0.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from models import InnerSolverConfig, SolverConfig
from newton_solver import IterativeSolver, SolveResult, newton_direction
from system_assembly import CalibrationProblem, CalibrationState, ResidualReport
from turbulent_flow import FlowDerivativeBundle


logger = get_logger("tensor-solver")

LAMBDA_MAX = 1e16


@dataclass
class SearchDirection:
    """Direction d = [d_ε; d_hN^(1); …] in the CalibrationState layout."""

    d: np.ndarray
    n_l: int
    n_u: int
    fallback: bool = False

    @property
    def d_eps(self) -> np.ndarray:
        return self.d[: self.n_l]

    @property
    def d_hN(self) -> List[np.ndarray]:
        n_m = (self.d.size - self.n_l) // self.n_u if self.n_u else 0
        return [self.d[self.n_l + i * self.n_u: self.n_l + (i + 1) * self.n_u] for i in range(n_m)]


@dataclass
class TensorResidual:
    """Per-set model values m^(i) = A·m̄^(i)."""

    per_set: List[np.ndarray]

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate(self.per_set)


@dataclass
class InnerReport:
    iterations: int = 0
    initial_norm: float = 0.0
    final_norm: float = 0.0
    converged: bool = False
    history: List[float] = field(default_factory=list)


def _direction_parts(problem: CalibrationProblem, d: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    d_eps, d_hN = problem.split(np.asarray(d, dtype=float))
    return d_eps, [problem.AtCbar @ dh for dh in d_hN]


def tensor_residual(
    d: np.ndarray,
    problem: CalibrationProblem,
    bundles: Sequence[FlowDerivativeBundle],
    f_slices: Sequence[np.ndarray],
    alpha: Optional[Sequence[np.ndarray]] = None,
) -> TensorResidual:
    """
    Evaluate the quadratic model at direction d.

    Args:
        d: Stacked direction
        problem: Calibration problem
        bundles: Derivative bundles at the current iterate, one per set
        f_slices: Residual f^(i) at the current iterate
        alpha: Optional kernel coordinates (the A-image does not depend on them)

    Returns:
        TensorResidual with A·m̄^(i) per set
    """
    fbar0, _ = problem.kernel_rhs(f_slices, alpha)
    d_eps, ts = _direction_parts(problem, d)
    per_set = []
    for b, t, f0 in zip(bundles, ts, fbar0):
        m_bar = (
            0.5 * b.p_eps2 * d_eps**2
            - d_eps * b.p_epsdh * t
            + 0.5 * b.p_dh2 * t**2
            + b.p_eps * d_eps
            - b.p_dh * t
            + f0
        )
        per_set.append(problem.A @ m_bar)
    return TensorResidual(per_set)


def tensor_jacobian(
    d: np.ndarray,
    problem: CalibrationProblem,
    bundles: Sequence[FlowDerivativeBundle],
) -> np.ndarray:
    """Jacobian of tensor_residual in d; equals the system Jacobian at d = 0."""
    d_eps, ts = _direction_parts(problem, d)
    n_m = len(bundles)
    J = np.zeros((n_m * problem.n_j, problem.size))
    for i, (b, t) in enumerate(zip(bundles, ts)):
        rows = slice(i * problem.n_j, (i + 1) * problem.n_j)
        J[rows, : problem.n_l] = problem.A * (b.p_eps2 * d_eps + b.p_eps - b.p_epsdh * t)
        if problem.n_u:
            cols = slice(problem.n_l + i * problem.n_u, problem.n_l + (i + 1) * problem.n_u)
            J[rows, cols] = (problem.A * (b.p_dh2 * t - b.p_dh - b.p_epsdh * d_eps)) @ problem.AtCbar
    return J


def damped_least_squares(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    d0: np.ndarray,
    cfg: InnerSolverConfig,
) -> Tuple[np.ndarray, InnerReport]:
    """
    Marquardt-damped Gauss-Newton minimization of ½‖fun(d)‖².

    Steps solve (JᵀJ + λ diag(JᵀJ)) p = -Jᵀr; λ shrinks on acceptance and
    grows on rejection. Only strictly decreasing steps are accepted.

    Args:
        fun: Residual map
        jac: Its Jacobian
        d0: Starting point
        cfg: Inner solver settings

    Returns:
        Best point found and an InnerReport
    """
    d = np.array(d0, dtype=float)
    r = fun(d)
    cost = 0.5 * float(r @ r)
    report = InnerReport(initial_norm=float(np.sqrt(2 * cost)))
    report.history.append(report.initial_norm)
    lam = cfg.lambda0

    for it in range(1, cfg.max_iter + 1):
        J = jac(d)
        g = J.T @ r
        if np.linalg.norm(g) <= cfg.gtol or cost == 0.0:
            report.converged = True
            break
        H = J.T @ J
        scale = np.diag(H).copy()
        scale[scale <= 0.0] = max(float(scale.max(initial=0.0)), 1.0) * 1e-12

        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = linalg.solve(H + lam * np.diag(scale), -g, assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                lam *= cfg.lambda_factor
                continue
            d_new = d + step
            r_new = fun(d_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                d, r, cost = d_new, r_new, cost_new
                lam = max(lam / cfg.lambda_factor, 1e-15)
                accepted = True
                break
            lam *= cfg.lambda_factor

        report.iterations = it
        report.history.append(float(np.sqrt(2 * cost)))
        if not accepted:
            break

    report.final_norm = float(np.sqrt(2 * cost))
    return d, report


def solve_tensor_direction(
    x: np.ndarray,
    problem: CalibrationProblem,
    inner_cfg: Optional[InnerSolverConfig] = None,
    report: Optional[ResidualReport] = None,
) -> SearchDirection:
    """
    Approximately solve the tensor model for a search direction at x.

    The inner iteration starts from a fraction of the Newton step and returns
    the best direction found; if it produces non-finite values the full
    Newton step is returned instead.

    Args:
        x: Current iterate
        problem: Calibration problem
        inner_cfg: Inner solver settings
        report: Residual at x if already computed

    Returns:
        SearchDirection
    """
    inner_cfg = inner_cfg or InnerSolverConfig()
    report = report or problem.residual(x)
    bundles = problem.bundles(x)
    J = problem.jacobian(x, bundles)
    d_newton = newton_direction(J, report.f)
    d0 = inner_cfg.initial_fraction * d_newton

    # kernel distribution of f is fixed for the whole inner solve
    f_slices = report.per_set

    def fun(d: np.ndarray) -> np.ndarray:
        return tensor_residual(d, problem, bundles, f_slices).stacked

    def jac(d: np.ndarray) -> np.ndarray:
        return tensor_jacobian(d, problem, bundles)

    try:
        with np.errstate(over="raise", invalid="raise"):
            d, inner = damped_least_squares(fun, jac, d0, inner_cfg)
    except FloatingPointError as e:
        logger.warning("Tensor subproblem diverged, using Newton direction", error=str(e))
        return SearchDirection(d_newton, problem.n_l, problem.n_u, fallback=True)

    if not np.all(np.isfinite(d)):
        logger.warning("Tensor subproblem returned non-finite direction, using Newton direction")
        return SearchDirection(d_newton, problem.n_l, problem.n_u, fallback=True)

    logger.debug(
        "Tensor direction",
        inner_iterations=inner.iterations,
        model_norm_start=inner.initial_norm,
        model_norm_end=inner.final_norm,
    )
    return SearchDirection(d, problem.n_l, problem.n_u)


class TensorSolver(IterativeSolver):
    """Outer iteration driven by tensor directions, without variable scaling."""

    def __init__(
        self,
        problem: CalibrationProblem,
        cfg: Optional[SolverConfig] = None,
        inner_cfg: Optional[InnerSolverConfig] = None,
    ):
        super().__init__("tensor", problem, cfg)
        self.inner_cfg = inner_cfg or InnerSolverConfig()

    def search_direction(self, x: np.ndarray, report: ResidualReport) -> np.ndarray:
        return solve_tensor_direction(x, self.problem, self.inner_cfg, report).d


def solve_tensor(
    state: CalibrationState,
    cfg: SolverConfig,
    problem: CalibrationProblem,
    inner_cfg: Optional[InnerSolverConfig] = None,
) -> SolveResult:
    """Tensor-method calibration from state."""
    return TensorSolver(problem, cfg, inner_cfg).solve(state)


def explicit_tensor_model(
    problem: CalibrationProblem,
    x: np.ndarray,
    d: np.ndarray,
    rel_step: float = 1e-6,
) -> np.ndarray:
    """
    f + J d + ½[dᵀ ℋ(f_r) d]_r with component Hessians from central
    differences of the analytic Jacobian.
    """
    f = problem.residual(x).f
    J = problem.jacobian(x)
    steps = rel_step * np.maximum(np.abs(x), 1e-3)
    quad = np.zeros_like(f)
    for c in range(x.size):
        if d[c] == 0.0:
            continue
        e = np.zeros_like(x)
        e[c] = steps[c]
        dJ = (problem.jacobian(x + e) - problem.jacobian(x - e)) / (2.0 * steps[c])
        quad += d[c] * (dJ @ d)
    return f + J @ d + 0.5 * quad
