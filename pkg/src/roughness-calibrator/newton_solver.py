"""Outer iteration with backtracking on the L1 residual, and the Newton direction."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy import linalg

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from config import settings
from errors import FlowDomainError, SingularSystemError, SolverError
from models import SolverConfig, TerminationReason
from system_assembly import CalibrationProblem, CalibrationState, ResidualReport


@dataclass
class SolveResult:
    """Final iterate of an outer iteration."""

    x: np.ndarray
    f: np.ndarray
    v: float
    iterations: int
    reason: TerminationReason
    converged: bool
    history: List[float] = field(default_factory=list)


def newton_direction(
    J: np.ndarray,
    f: np.ndarray,
    rtol: float = settings.rank_rtol,
) -> np.ndarray:
    """
    Least-squares Newton step Δx = -(JᵀJ)⁻¹Jᵀf.

    Args:
        J: Jacobian with full column rank
        f: Residual
        rtol: Relative singular value threshold for the rank test

    Returns:
        Newton step

    Raises:
        SingularSystemError: if J is rank deficient
    """
    sv = linalg.svdvals(J)
    n = J.shape[1]
    if sv.size < n or sv[0] == 0.0 or sv[-1] <= rtol * sv[0]:
        cond = float("inf") if sv.size < n or sv[-1] == 0.0 else float(sv[0] / sv[-1])
        raise SingularSystemError(f"Jacobian is rank deficient ({J.shape[0]}x{n})", condition=cond)
    dx, *_ = linalg.lstsq(J, -f)
    return dx


class IterativeSolver(ABC):
    """Shared outer loop: x_k = P(x_{k-1} + μ_k Δx_k) with backtracking on v."""

    def __init__(self, name: str, problem: CalibrationProblem, cfg: Optional[SolverConfig] = None):
        self.name = name
        self.problem = problem
        self.cfg = cfg or SolverConfig()
        self.logger = get_logger(f"solver.{name}")

    @abstractmethod
    def search_direction(self, x: np.ndarray, report: ResidualReport) -> np.ndarray:
        """Direction Δx at x for the current residual."""
        pass

    def prepare(self, state: CalibrationState) -> None:
        """Hook run once before the first iteration."""

    def solve(self, state: CalibrationState) -> SolveResult:
        """
        Iterate from state.x until the residual or step tolerance is met.

        Args:
            state: Starting point with bounds

        Returns:
            SolveResult at the last accepted iterate
        """
        cfg = self.cfg
        x = state.project(state.x)
        report = self.problem.residual(x)
        if not np.isfinite(report.v):
            raise SolverError(f"{self.name}: residual is not finite at the starting point", last_x=x)
        self.prepare(state)

        history = [report.v]
        reason = TerminationReason.MAX_ITER
        iterations = 0
        for k in range(1, cfg.max_iter + 1):
            if report.v < cfg.eps_f:
                reason = TerminationReason.RESIDUAL
                break
            try:
                dx = self.search_direction(x, report)
            except FlowDomainError:
                if k == 1:
                    raise
                self.logger.warning("Zero head loss at iterate, stopping", iteration=k)
                reason = TerminationReason.NON_FINITE
                break

            mu = 1.0
            accepted = None
            while mu >= cfg.mu_min:
                x_try = state.project(x + mu * dx)
                try:
                    trial = self.problem.residual(x_try)
                except FlowDomainError:
                    mu *= cfg.backtrack_factor
                    continue
                if np.isfinite(trial.v) and trial.v < report.v:
                    accepted = (x_try, trial)
                    break
                mu *= cfg.backtrack_factor
            if accepted is None:
                reason = TerminationReason.LINE_SEARCH
                break

            step = float(np.linalg.norm(accepted[0] - x))
            x, report = accepted
            iterations = k
            history.append(report.v)
            self.logger.debug("Step accepted", iteration=k, mu=mu, v=report.v, step=step)
            if step < cfg.eps_x:
                reason = TerminationReason.STEP
                break
        else:
            if report.v < cfg.eps_f:
                reason = TerminationReason.RESIDUAL

        converged = report.v < cfg.eps_f
        self.logger.debug(
            "Solve finished",
            iterations=iterations,
            v=report.v,
            reason=TerminationReason(reason).value,
        )
        return SolveResult(
            x=x,
            f=report.f,
            v=report.v,
            iterations=iterations,
            reason=reason,
            converged=converged,
            history=history,
        )


class NewtonSolver(IterativeSolver):
    """Newton direction with optional diagonal column scaling by max(|x0|, floor)."""

    def __init__(self, problem: CalibrationProblem, cfg: Optional[SolverConfig] = None):
        super().__init__("newton", problem, cfg)
        self.scale: Optional[np.ndarray] = None

    def prepare(self, state: CalibrationState) -> None:
        if self.cfg.scaling_enabled:
            self.scale = np.maximum(np.abs(state.x), self.cfg.scaling_floor)
        else:
            self.scale = None

    def search_direction(self, x: np.ndarray, report: ResidualReport) -> np.ndarray:
        J = self.problem.jacobian(x)
        if self.scale is None:
            return newton_direction(J, report.f)
        return self.scale * newton_direction(J * self.scale, report.f)


def solve_newton(
    state: CalibrationState,
    cfg: SolverConfig,
    problem: CalibrationProblem,
) -> SolveResult:
    """Newton-Raphson calibration from state."""
    return NewtonSolver(problem, cfg).solve(state)
