"""Inverted Colebrook-White turbulent pipe flow and its derivatives.

All functions are vectorized over pipes. With κ = 1/ln 10, a = |Δh|,
s = sign(Δh), D = 3.7 d and c = ηA/(ρd):

    ℓ = ε/D + 2.51 c √(k/a)
    Q = -s 2κ √(a/k) ln ℓ
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from shared.utils import get_logger
from config import settings
from errors import FlowDomainError
from network_model import PipeCatalog


logger = get_logger("turbulent-flow")

KAPPA = 1.0 / np.log(10.0)
ROUGHNESS_SCALE = 3.7
VISCOUS_SCALE = 2.51

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class FlowDerivativeBundle:
    """First and second partial derivatives of the flow, one entry per pipe.

    A single p_epsdh field serves both mixed orders.
    """

    p_eps: np.ndarray
    p_dh: np.ndarray
    p_eps2: np.ndarray
    p_epsdh: np.ndarray
    p_dh2: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "FlowDerivativeBundle":
        return cls(*(np.zeros(n) for _ in range(5)))

    def pipe(self, j: int) -> "FlowDerivativeBundle":
        return FlowDerivativeBundle(
            self.p_eps[j], self.p_dh[j], self.p_eps2[j], self.p_epsdh[j], self.p_dh2[j]
        )


def ell(eps: ArrayLike, dh: ArrayLike, pipe: PipeCatalog) -> np.ndarray:
    """Argument ℓ of the logarithm; undefined for zero head loss."""
    dh = np.asarray(dh, dtype=float)
    a = np.abs(dh)
    zero = np.flatnonzero(np.atleast_1d(a) == 0.0)
    if zero.size:
        raise FlowDomainError(zero.tolist())
    return (
        np.asarray(eps, dtype=float) / (ROUGHNESS_SCALE * pipe.diameter)
        + VISCOUS_SCALE * pipe.viscous * np.sqrt(pipe.k / a)
    )


def _warn_out_of_regime(lg: np.ndarray) -> None:
    bad = np.flatnonzero(np.atleast_1d(lg) >= 1.0)
    if bad.size:
        logger.warning("Flow out of turbulent regime, direction inverts", pipes=bad.tolist())


def flow(eps: ArrayLike, dh: ArrayLike, pipe: PipeCatalog) -> np.ndarray:
    """Turbulent flow in m^3/s; zero where the head loss is zero."""
    dh = np.asarray(dh, dtype=float)
    a = np.abs(dh)
    moving = a > 0.0
    safe = np.where(moving, a, 1.0)
    lg = (
        np.asarray(eps, dtype=float) / (ROUGHNESS_SCALE * pipe.diameter)
        + VISCOUS_SCALE * pipe.viscous * np.sqrt(pipe.k / safe)
    )
    _warn_out_of_regime(np.where(moving, lg, 0.0))
    q = -np.sign(dh) * 2.0 * KAPPA * np.sqrt(safe / pipe.k) * np.log(lg)
    return np.where(moving, q, 0.0)


def derivatives(eps: np.ndarray, dh: np.ndarray, pipes: PipeCatalog) -> FlowDerivativeBundle:
    """
    Closed-form partial derivatives of the flow with respect to ε and Δh.

    The derivative of sign(Δh) is taken as zero.

    Args:
        eps: Roughness per pipe (m)
        dh: Head loss per pipe (m), nonzero
        pipes: Pipe catalog

    Returns:
        FlowDerivativeBundle evaluated at (eps, dh)
    """
    lg = ell(eps, dh, pipes)
    _warn_out_of_regime(lg)

    dh = np.asarray(dh, dtype=float)
    s = np.sign(dh)
    a = np.abs(dh)
    k = pipes.k
    D = ROUGHNESS_SCALE * pipes.diameter
    vc = VISCOUS_SCALE * pipes.viscous
    ln_l = np.log(lg)
    root_ak = np.sqrt(a * k)
    root_a_over_k = np.sqrt(a / k)

    p_eps = -s * 2.0 * KAPPA * root_a_over_k / (D * lg)
    p_dh = -KAPPA * (ln_l / root_ak - vc / (a * lg))
    p_eps2 = s * 2.0 * KAPPA * root_a_over_k / (D**2 * lg**2)
    p_epsdh = -KAPPA * (1.0 / (D * root_ak * lg) + vc / (D * a * lg**2))
    p_dh2 = 0.5 * KAPPA * s * (
        ln_l / (a**1.5 * np.sqrt(k))
        - vc / (a**2 * lg)
        + vc**2 * np.sqrt(k) / (a**2.5 * lg**2)
    )
    return FlowDerivativeBundle(p_eps, p_dh, p_eps2, p_epsdh, p_dh2)


def reynolds(q: np.ndarray, pipes: PipeCatalog) -> np.ndarray:
    """Reynolds number |Q| d ρ / (A η) per pipe."""
    return np.abs(q) * pipes.diameter * pipes.density / (pipes.area * pipes.viscosity)


def reynolds_ok(q: np.ndarray, pipes: PipeCatalog) -> np.ndarray:
    """True where the flow is turbulent (Re ≥ 4000, relative slack 1e-12)."""
    return reynolds(q, pipes) >= settings.reynolds_min * (1.0 - 1e-12)
