"""Exception hierarchy for the Roughness Calibrator."""

from typing import Optional, Sequence

import numpy as np


class CalibrationError(Exception):
    """Base class for every error raised by the calibrator."""


class NetworkFileError(CalibrationError, ValueError):
    """A network or measurement file cannot be parsed or is inconsistent."""

    def __init__(self, path: str, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class TopologyError(CalibrationError, ValueError):
    """The network graph violates a structural requirement."""


class FlowDomainError(CalibrationError, ValueError):
    """The turbulent flow derivatives are undefined (zero head loss)."""

    def __init__(self, pipes: Sequence[int], measurement_set: Optional[int] = None):
        self.pipes = [int(p) for p in pipes]
        self.measurement_set = measurement_set
        where = f" in measurement set {measurement_set}" if measurement_set is not None else ""
        super().__init__(f"Zero head loss on pipe(s) {self.pipes}{where}")


class SingularSystemError(CalibrationError, ValueError):
    """A linear system is rank deficient."""

    def __init__(self, message: str, condition: float = float("inf")):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class NotFactorizableError(CalibrationError, ValueError):
    """A conic section is not degenerate and has no linear factors."""

    def __init__(self, delta: complex):
        self.delta = delta
        super().__init__(f"Conic is non-degenerate, determinant {delta:.6g}")


class SolverError(CalibrationError, RuntimeError):
    """An iterative solve could not continue."""

    def __init__(self, message: str, last_x: Optional[np.ndarray] = None):
        self.last_x = last_x
        super().__init__(message)


class ForwardSimulationError(CalibrationError, RuntimeError):
    """The steady-state forward solve did not balance the nodes."""

    def __init__(
        self,
        message: str,
        heads: Optional[np.ndarray] = None,
        node_residuals: Optional[np.ndarray] = None,
        measurement_set: Optional[int] = None,
    ):
        self.heads = heads
        self.node_residuals = node_residuals
        self.measurement_set = measurement_set
        where = f" (measurement set {measurement_set})" if measurement_set is not None else ""
        super().__init__(f"{message}{where}")


class CampaignError(CalibrationError, RuntimeError):
    """Every launch of a multi-start campaign failed."""

    def __init__(self, launches: int):
        self.launches = launches
        super().__init__(f"All {launches} launches failed")
