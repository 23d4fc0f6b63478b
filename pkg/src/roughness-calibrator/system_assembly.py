"""Stacked residual, block Jacobian and kernel quantities over all measurement sets.

The unknown vector is x = [ε; h_N^(1); …; h_N^(n_m)]; residual block i is
f^(i) = A·Q(ε, Δh^(i)) - q̄^(i) with Δh^(i) affine in h_N^(i).
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from config import settings
from errors import FlowDomainError
from network_model import (
    LPS_PER_M3S,
    MeasurementSet,
    NetworkTopology,
    PipeCatalog,
    head_loss,
    laplacian,
)
from turbulent_flow import FlowDerivativeBundle, derivatives, flow


logger = get_logger("system-assembly")


@dataclass
class CalibrationState:
    """Stacked unknowns with componentwise bounds."""

    x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if not (self.x.shape == self.lower.shape == self.upper.shape):
            raise ValueError("state and bounds differ in shape")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def with_x(self, x: np.ndarray) -> "CalibrationState":
        return CalibrationState(self.project(np.asarray(x, dtype=float)), self.lower, self.upper)

    def feasible(self) -> bool:
        return bool(np.all(self.x >= self.lower) and np.all(self.x <= self.upper))


@dataclass
class ResidualReport:
    """Stacked residual f (m^3/s), its L1 norm v and the per-set slices."""

    f: np.ndarray
    v: float
    per_set: List[np.ndarray] = field(default_factory=list)

    @property
    def v_lps(self) -> float:
        return self.v * LPS_PER_M3S


def numerical_rank(matrix: np.ndarray, rtol: float = settings.rank_rtol) -> int:
    """Count of singular values above rtol·σ_max."""
    if matrix.size == 0:
        return 0
    sv = linalg.svdvals(matrix)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


class CalibrationProblem:
    """Network, pipes and measurement sets with the x-independent parts cached."""

    def __init__(
        self,
        topo: NetworkTopology,
        pipes: PipeCatalog,
        sets: Sequence[MeasurementSet],
    ):
        if pipes.n_l != topo.n_l:
            raise ValueError(f"pipe catalog has {pipes.n_l} pipes, topology has {topo.n_l}")
        if not sets:
            raise ValueError("at least one measurement set is required")
        for ms in sets:
            ms.check(topo)

        self.topo = topo
        self.pipes = pipes
        self.sets = list(sets)

        self.A = topo.incidence.astype(float)
        self.S = topo.cycle.astype(float)
        # ∂Δh/∂h_N = -Aᵀ C̄_hᵀ, constant
        self.AtCbar = self.A.T @ topo.sensor_complement.T.astype(float)
        self._dh_const = [
            head_loss(topo, topo.elevations, ms.h_s, ms.y_h, np.zeros(topo.n_u)) for ms in self.sets
        ]
        self.L = laplacian(topo, pipes)
        self._L_factor = linalg.cho_factor(self.L)

    @property
    def n_l(self) -> int:
        return self.topo.n_l

    @property
    def n_j(self) -> int:
        return self.topo.n_j

    @property
    def n_u(self) -> int:
        return self.topo.n_u

    @property
    def n_m(self) -> int:
        return len(self.sets)

    @property
    def size(self) -> int:
        return self.n_l + self.n_m * self.n_u

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Partition x into ε and the per-set unmeasured heads."""
        if x.shape != (self.size,):
            raise ValueError(f"expected state of length {self.size}, got {x.shape}")
        eps = x[: self.n_l]
        heads = [x[self.n_l + i * self.n_u: self.n_l + (i + 1) * self.n_u] for i in range(self.n_m)]
        return eps, heads

    def join(self, eps: np.ndarray, heads: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(eps, dtype=float)] + [np.asarray(h, dtype=float) for h in heads])

    def head_losses(self, x: np.ndarray) -> List[np.ndarray]:
        _, heads = self.split(x)
        return [base - self.AtCbar @ h_N for base, h_N in zip(self._dh_const, heads)]

    def residual(self, x: np.ndarray) -> ResidualReport:
        """
        Stacked residual over all measurement sets.

        Args:
            x: Stacked unknowns

        Returns:
            ResidualReport with f^(i) = A·Q - q̄^(i) and v = ‖f‖₁

        Raises:
            FlowDomainError: if a head loss is exactly zero, naming the set and pipes
        """
        eps, _ = self.split(x)
        per_set = []
        for ms, dh in zip(self.sets, self.head_losses(x)):
            zero = np.flatnonzero(dh == 0.0)
            if zero.size:
                raise FlowDomainError(zero.tolist(), measurement_set=ms.id)
            per_set.append(self.A @ flow(eps, dh, self.pipes) - ms.q)
        f = np.concatenate(per_set)
        return ResidualReport(f=f, v=float(np.sum(np.abs(f))), per_set=per_set)

    def bundles(self, x: np.ndarray) -> List[FlowDerivativeBundle]:
        """Derivative bundle per measurement set at x."""
        eps, _ = self.split(x)
        result = []
        for ms, dh in zip(self.sets, self.head_losses(x)):
            try:
                result.append(derivatives(eps, dh, self.pipes))
            except FlowDomainError as e:
                raise FlowDomainError(e.pipes, measurement_set=ms.id) from e
        return result

    def jacobian(
        self,
        x: np.ndarray,
        bundles: Optional[Sequence[FlowDerivativeBundle]] = None,
    ) -> np.ndarray:
        """Block Jacobian; row block i = A·[diag(p_ε) | … | -diag(p_Δh)·AᵀC̄_hᵀ | …]."""
        bundles = self.bundles(x) if bundles is None else bundles
        A = sparse.csr_matrix(self.A)
        eps_cols = [A @ sparse.diags(b.p_eps) for b in bundles]
        if self.n_u == 0:
            return sparse.vstack(eps_cols).toarray()

        AtCbar = sparse.csr_matrix(self.AtCbar)
        blocks: List[List[Optional[sparse.spmatrix]]] = [[None] * (1 + self.n_m) for _ in range(self.n_m)]
        for i, b in enumerate(bundles):
            blocks[i][0] = eps_cols[i]
            blocks[i][1 + i] = -(A @ sparse.diags(b.p_dh)) @ AtCbar
        return sparse.bmat(blocks, format="csr").toarray()

    def solve_laplacian(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self._L_factor, rhs)

    def kernel_rhs(
        self,
        f_slices: Sequence[np.ndarray],
        alpha: Optional[Sequence[np.ndarray]] = None,
    ) -> Tuple[List[np.ndarray], np.ndarray]:
        """
        Distribute each nodal residual onto the pipes.

        Args:
            f_slices: Residual f^(i) per set
            alpha: Kernel coordinates α^(i) (length n_l - n_j) per set, zero by default

        Returns:
            f̄_0^(i) = diag(c_l)AᵀL⁻¹f^(i) - Sᵀα^(i) per set, and the stacked
            r_f = [diag(c_l)AᵀL⁻¹f^(i)]_i
        """
        projected = [self.pipes.c_l * (self.A.T @ self.solve_laplacian(f_i)) for f_i in f_slices]
        if alpha is None:
            fbar0 = [p.copy() for p in projected]
        else:
            fbar0 = [p - self.S.T @ np.asarray(a, dtype=float) for p, a in zip(projected, alpha)]
        return fbar0, np.concatenate(projected)

    def initial_state(
        self,
        roughness_fraction: float = settings.initial_roughness_fraction,
        upper_fraction: float = settings.roughness_upper_fraction,
    ) -> CalibrationState:
        """
        Starting point and bounds from the known heads around each unmeasured node.

        ε₀ is a fraction of the diameter with bounds [0, upper_fraction·d]. The
        unmeasured head of a node starts at the mean of the known total heads
        adjacent to it (sensed nodes and sources) and is bounded by their
        min/max; nodes without a known neighbour use all known heads of the set.
        """
        topo = self.topo
        d = self.pipes.diameter
        A = topo.incidence
        Cs = topo.source_incidence
        z = topo.elevations
        sensor_of = {int(node): p for p, node in enumerate(topo.sensor_nodes)}

        starts, lows, highs = [], [], []
        for ms in self.sets:
            known_all = np.concatenate([ms.y_h + z[topo.sensor_nodes], ms.h_s])
            h0 = np.empty(topo.n_u)
            lo = np.empty(topo.n_u)
            hi = np.empty(topo.n_u)
            for u, node in enumerate(topo.unmeasured_nodes):
                known = []
                for j in np.flatnonzero(A[node]):
                    others = np.flatnonzero(A[:, j])
                    for other in others[others != node]:
                        if int(other) in sensor_of:
                            known.append(ms.y_h[sensor_of[int(other)]] + z[other])
                    for s in np.flatnonzero(Cs[:, j]):
                        known.append(ms.h_s[s])
                pool = np.asarray(known) if known else known_all
                h0[u] = pool.mean() - z[node]
                lo[u] = pool.min() - z[node]
                hi[u] = pool.max() - z[node]
            starts.append(h0)
            lows.append(lo)
            highs.append(hi)

        state = CalibrationState(
            x=self.join(roughness_fraction * d, starts),
            lower=self.join(np.zeros_like(d), lows),
            upper=self.join(upper_fraction * d, highs),
        )
        logger.debug("Initial state built", size=self.size, n_m=self.n_m)
        return state

    def unbounded_state(self, x: np.ndarray) -> CalibrationState:
        """State at x with ε ≥ 0 as the only bound."""
        lower = np.full(self.size, -np.inf)
        lower[: self.n_l] = 0.0
        return CalibrationState(np.asarray(x, dtype=float), lower, np.full(self.size, np.inf))
