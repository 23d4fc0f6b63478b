"""Steady-state forward solver: heads and flows for known roughness and demands."""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
from scipy import linalg, optimize

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from config import settings
from errors import FlowDomainError, ForwardSimulationError
from network_model import MeasurementSet, NetworkTopology, PipeCatalog
from system_assembly import CalibrationProblem
from turbulent_flow import derivatives, flow, reynolds_ok


logger = get_logger("forward-sim")


@dataclass
class SteadyState:
    """Solution of the nodal mass balance for one demand snapshot."""

    heads: np.ndarray
    flows: np.ndarray
    node_residual: np.ndarray
    iterations: int
    turbulent: np.ndarray


def _initial_heads(
    eps: np.ndarray,
    base: np.ndarray,
    q: np.ndarray,
    A: np.ndarray,
    pipes: PipeCatalog,
) -> np.ndarray:
    """Linear network solve with conductances taken at a unit head loss."""
    w = flow(eps, np.ones_like(base), pipes)
    factor = linalg.cho_factor((A * w) @ A.T)
    return linalg.cho_solve(factor, (A * w) @ base - q)


def solve_steady(
    eps: np.ndarray,
    q: np.ndarray,
    h_s: np.ndarray,
    topo: NetworkTopology,
    pipes: PipeCatalog,
    h_guess: Optional[np.ndarray] = None,
    tol: float = settings.forward_tol,
    max_iter: int = settings.forward_max_iter,
) -> SteadyState:
    """
    Solve A·Q(ε, Δh(h)) = q̄ for all inner pressure heads h.

    Args:
        eps: Roughness per pipe (m)
        q: Nodal consumption (m^3/s)
        h_s: Source heads (m)
        topo: Network topology
        pipes: Pipe catalog
        h_guess: Optional starting heads, defaults to a linearized network solve
        tol: Target infinity norm of the node imbalance
        max_iter: Newton iteration budget

    Returns:
        SteadyState with heads, flows and the final node imbalance

    Raises:
        ForwardSimulationError: if the imbalance stays above settings.forward_accept
    """
    A = topo.incidence.astype(float)
    base = topo.source_incidence.T @ h_s - A.T @ topo.elevations
    h = _initial_heads(eps, base, q, A, pipes) if h_guess is None else np.array(h_guess, dtype=float)

    def imbalance(heads: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        flows = flow(eps, base - A.T @ heads, pipes)
        return A @ flows - q, flows

    F, flows = imbalance(h)
    iterations = 0
    for k in range(1, max_iter + 1):
        if np.max(np.abs(F)) <= tol:
            break
        try:
            p_dh = derivatives(eps, base - A.T @ h, pipes).p_dh
        except FlowDomainError as e:
            raise ForwardSimulationError(
                f"Zero head loss on pipes {e.pipes} during forward solve", heads=h, node_residuals=F
            ) from e
        try:
            step = linalg.cho_solve(linalg.cho_factor((A * p_dh) @ A.T), F)
        except linalg.LinAlgError as e:
            raise ForwardSimulationError("Nodal Jacobian is singular", heads=h, node_residuals=F) from e

        mu = 1.0
        current = np.sum(np.abs(F))
        while mu >= settings.mu_min:
            h_try = h + mu * step
            F_try, flows_try = imbalance(h_try)
            if np.all(np.isfinite(F_try)) and np.sum(np.abs(F_try)) < current:
                break
            mu *= settings.backtrack_factor
        else:
            break
        h, F, flows = h_try, F_try, flows_try
        iterations = k

    worst = float(np.max(np.abs(F))) if F.size else 0.0
    if worst > settings.forward_accept:
        raise ForwardSimulationError(
            f"Forward solve did not balance the nodes (max imbalance {worst:.3e} m^3/s)",
            heads=h,
            node_residuals=F,
        )

    turbulent = reynolds_ok(flows, pipes)
    if not np.all(turbulent):
        logger.warning(
            "Flows below the turbulent regime",
            pipes=[topo.pipe_ids[j] for j in np.flatnonzero(~turbulent)],
        )
    logger.debug("Forward solve converged", iterations=iterations, imbalance=worst)
    return SteadyState(heads=h, flows=flows, node_residual=F, iterations=iterations, turbulent=turbulent)


def generate_measurements(
    eps: np.ndarray,
    demand_list: Sequence[np.ndarray],
    h_s_list: Sequence[np.ndarray],
    topo: NetworkTopology,
    pipes: PipeCatalog,
) -> Tuple[List[MeasurementSet], List[SteadyState]]:
    """
    Synthetic measurement sets from a planted roughness.

    Args:
        eps: Planted roughness (m)
        demand_list: Nodal consumption per set (m^3/s)
        h_s_list: Source heads per set (m)
        topo: Network topology
        pipes: Pipe catalog

    Returns:
        Measurement sets (sensed heads C_h h) and the full steady states as ground truth
    """
    if len(demand_list) != len(h_s_list):
        raise ValueError("one source-head vector is needed per demand vector")

    sets, truth = [], []
    for i, (q, h_s) in enumerate(zip(demand_list, h_s_list), start=1):
        q = np.asarray(q, dtype=float)
        h_s = np.asarray(h_s, dtype=float)
        try:
            state = solve_steady(eps, q, h_s, topo, pipes)
        except ForwardSimulationError as e:
            raise ForwardSimulationError(
                str(e), heads=e.heads, node_residuals=e.node_residuals, measurement_set=i
            ) from e
        sets.append(MeasurementSet(id=i, y_h=topo.sensor_select @ state.heads, q=q, h_s=h_s))
        truth.append(state)

    logger.info("Measurements generated", sets=len(sets))
    return sets, truth


def reference_state(problem: CalibrationProblem, eps: np.ndarray, refine: bool = True) -> np.ndarray:
    """
    Stacked x* = [ε; C̄_h h^(1); …] for a given roughness.

    Every set starts from its forward solve. With refine, the unmeasured heads
    are then fitted to the recorded sensed heads by least squares with ε held
    fixed; the fit is kept only when it lowers v. On forward-generated sets
    the forward heads already are the root.

    Args:
        problem: Calibration problem holding the recorded sets
        eps: Roughness per pipe (m)
        refine: Fit the unmeasured heads to the recorded sensed heads

    Returns:
        Stacked state of length n_l + n_m·n_u
    """
    eps = np.asarray(eps, dtype=float)
    heads = []
    for ms in problem.sets:
        state = solve_steady(eps, ms.q, ms.h_s, problem.topo, problem.pipes)
        heads.append(problem.topo.sensor_complement @ state.heads)
    x = problem.join(eps, heads)
    if not refine or problem.n_u == 0:
        return x

    n_l = problem.n_l

    def stacked(h_N: np.ndarray) -> np.ndarray:
        return np.concatenate([eps, h_N])

    fit = optimize.least_squares(
        lambda h_N: problem.residual(stacked(h_N)).f,
        x[n_l:],
        jac=lambda h_N: problem.jacobian(stacked(h_N))[:, n_l:],
        xtol=settings.reference_fit_xtol,
        ftol=settings.reference_fit_xtol,
        gtol=settings.reference_fit_xtol,
    )
    v_forward = problem.residual(x).v
    x_fit = stacked(fit.x)
    v_fit = problem.residual(x_fit).v
    logger.debug("Reference heads fitted", v_forward=v_forward, v_fitted=v_fit, evaluations=fit.nfev)
    return x_fit if v_fit < v_forward else x


def write_ground_truth(
    path: Union[str, Path],
    eps: np.ndarray,
    sets: Sequence[MeasurementSet],
    truth: Sequence[SteadyState],
    topo: NetworkTopology,
) -> None:
    """Sidecar JSON with the planted roughness and full heads/flows per set."""
    doc = {
        "roughness_m": np.asarray(eps),
        "node_ids": list(topo.node_ids),
        "pipe_ids": list(topo.pipe_ids),
        "sets": [
            {"set": ms.id, "heads_m": st.heads, "flows_m3s": st.flows}
            for ms, st in zip(sets, truth)
        ],
    }
    Path(path).write_bytes(orjson.dumps(doc, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))
    logger.info("Ground truth written", path=str(path))
