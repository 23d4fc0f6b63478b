"""Multi-start calibration campaigns with roughness perturbation."""

from concurrent.futures import ProcessPoolExecutor
from itertools import repeat
from pathlib import Path
from typing import List, Optional

import numpy as np
import structlog

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from errors import CalibrationError, CampaignError
from models import CampaignConfig, CampaignResult, LaunchResult, SolverConfig, SolverMethod
from network_model import LPS_PER_M3S, PipeCatalog
from newton_solver import SolveResult, solve_newton
from system_assembly import CalibrationProblem, CalibrationState
from tensor_solver import solve_tensor


logger = get_logger("calibration")


def perturb(
    state: CalibrationState,
    pipes: PipeCatalog,
    rng: np.random.Generator,
    cfg: Optional[CampaignConfig] = None,
) -> CalibrationState:
    """
    Next starting point from the best state so far.

    Roughnesses above threshold_frac·d are redrawn uniformly in
    [0, threshold_frac·d]; the others get Gaussian noise with standard
    deviation perturb_small_sigma_frac·d. Heads are carried over unchanged.

    Args:
        state: Best state x⁺ with bounds
        pipes: Pipe catalog
        rng: Random generator (consumed identically on every call)
        cfg: Campaign settings

    Returns:
        Perturbed state, projected onto the bounds
    """
    cfg = cfg or CampaignConfig()
    n_l = pipes.n_l
    d = pipes.diameter
    eps = state.x[:n_l]

    limit = cfg.threshold_frac * d
    redraw = rng.uniform(0.0, 1.0, size=n_l) * limit
    jitter = rng.normal(0.0, 1.0, size=n_l) * cfg.perturb_small_sigma_frac * d

    large = eps > limit
    new_eps = np.where(large, redraw, eps + jitter)

    x = state.x.copy()
    x[:n_l] = new_eps
    logger.debug("Roughness perturbed", redrawn=int(large.sum()), jittered=int(n_l - large.sum()))
    return state.with_x(x)


def _solve(
    problem: CalibrationProblem,
    state: CalibrationState,
    cfg: CampaignConfig,
    solver_cfg: SolverConfig,
) -> SolveResult:
    if SolverMethod(cfg.method) == SolverMethod.NEWTON:
        return solve_newton(state, solver_cfg, problem)
    return solve_tensor(state, solver_cfg, problem, cfg.inner)


def _launch_result(
    problem: CalibrationProblem,
    launch: int,
    best: Optional[SolveResult],
    best_run: Optional[int],
    iterations: List[int],
    failed: int,
    solver_cfg: SolverConfig,
    threshold_frac: float,
) -> LaunchResult:
    if best is None:
        return LaunchResult(launch=launch, succeeded=False, total_runs=failed, failed_runs=failed)

    eps, heads = problem.split(best.x)
    return LaunchResult(
        launch=launch,
        x=best.x.tolist(),
        roughness_mm=(eps * 1e3).tolist(),
        unmeasured_heads_m=[h.tolist() for h in heads],
        residual_m3s=best.v,
        residual_lps=best.v * LPS_PER_M3S,
        best_run=best_run,
        mean_iterations_to_best=float(np.mean(iterations[:best_run])),
        total_runs=len(iterations),
        failed_runs=failed,
        eps_f_final=solver_cfg.eps_f,
        eps_x_final=solver_cfg.eps_x,
        out_of_range_pipes=np.flatnonzero(eps > threshold_frac * problem.pipes.diameter).tolist(),
    )


def run_launch(
    problem: CalibrationProblem,
    x0: CalibrationState,
    cfg: CampaignConfig,
    launch: int,
) -> LaunchResult:
    """
    One launch: inner_runs sequential solves, each started from the perturbed best.

    Args:
        problem: Calibration problem
        x0: Starting state of the first run
        cfg: Campaign settings
        launch: 1-based launch index; selects the random substream

    Returns:
        LaunchResult for the best run
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(launch)[launch - 1])
    solver_cfg = cfg.solver.model_copy()
    structlog.contextvars.bind_contextvars(launch=launch, method=SolverMethod(cfg.method).value)

    best: Optional[SolveResult] = None
    best_state = x0
    best_run: Optional[int] = None
    # per inner run, zero for failed runs
    iterations: List[int] = []
    failed = 0
    try:
        for run in range(1, cfg.inner_runs + 1):
            start = x0 if best is None else perturb(best_state, problem.pipes, rng, cfg)
            try:
                result = _solve(problem, start, cfg, solver_cfg)
            except CalibrationError as e:
                failed += 1
                iterations.append(0)
                logger.warning("Inner run failed", run=run, error=str(e))
                continue

            iterations.append(result.iterations)
            if best is None or result.v < best.v:
                best = result
                best_state = start.with_x(result.x)
                best_run = run
                solver_cfg = solver_cfg.model_copy(update={
                    "eps_f": max(solver_cfg.eps_f * cfg.tighten_factor, cfg.eps_f_floor),
                    "eps_x": max(solver_cfg.eps_x * cfg.tighten_factor, cfg.eps_x_floor),
                })
                logger.debug("Launch improved", run=run, v=result.v, iterations=result.iterations)
    finally:
        structlog.contextvars.unbind_contextvars("launch", "method")

    outcome = _launch_result(
        problem, launch, best, best_run, iterations, failed, solver_cfg, cfg.threshold_frac
    )
    logger.info(
        "Launch finished",
        launch=launch,
        residual_m3s=outcome.residual_m3s,
        best_run=outcome.best_run,
        failed_runs=failed,
    )
    return outcome


def run_campaign(
    problem: CalibrationProblem,
    x0: CalibrationState,
    cfg: CampaignConfig,
) -> CampaignResult:
    """
    Run every launch of a multi-start campaign and keep the best.

    Args:
        problem: Calibration problem (shared read-only by the launches)
        x0: Feasible starting state
        cfg: Campaign settings

    Returns:
        CampaignResult ordered by launch index

    Raises:
        CampaignError: if no launch produced a result
    """
    if not x0.feasible():
        raise ValueError("starting state violates its bounds")

    logger.info(
        "Campaign started",
        method=SolverMethod(cfg.method).value,
        launches=cfg.launches,
        inner_runs=cfg.inner_runs,
        seed=cfg.seed,
        parallel=cfg.parallel,
    )
    indices = list(range(1, cfg.launches + 1))
    if cfg.parallel > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as pool:
            launches = list(pool.map(run_launch, repeat(problem), repeat(x0), repeat(cfg), indices))
    else:
        launches = [run_launch(problem, x0, cfg, i) for i in indices]

    ok = [lr for lr in launches if lr.succeeded]
    if not ok:
        raise CampaignError(cfg.launches)
    best = min(ok, key=lambda lr: lr.residual_m3s)

    logger.info("Campaign finished", best_launch=best.launch, residual_m3s=best.residual_m3s)
    return CampaignResult(method=cfg.method, seed=cfg.seed, launches=launches, best_launch=best.launch)


