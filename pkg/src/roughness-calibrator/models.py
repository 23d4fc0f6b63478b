"""Data models for the Roughness Calibrator."""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from config import settings


class SolverMethod(str, Enum):
    """Search direction used by the outer iteration."""
    NEWTON = "newton"  # Least-squares Newton step, scaled
    TENSOR = "tensor"  # Second-order model solved by damped least squares


class ConicClass(str, Enum):
    """Classification of a conic section by its determinants."""
    TWO_INTERSECTING_LINES = "two_intersecting_lines"
    PARALLEL_LINES_OR_SINGLE = "parallel_lines_or_single"
    SINGLE_POINT = "single_point"
    NON_DEGENERATE = "non_degenerate"


class TerminationReason(str, Enum):
    """Why an outer iteration stopped."""
    RESIDUAL = "residual"          # v(x) < eps_f
    STEP = "step"                  # ||mu * dx|| < eps_x
    LINE_SEARCH = "line_search"    # no decrease down to mu_min
    MAX_ITER = "max_iter"
    NON_FINITE = "non_finite"      # residual blew up, last finite iterate kept


class SolverConfig(BaseModel):
    """Tolerances and globalization knobs of the outer iteration."""

    eps_f: float = Field(default=settings.eps_f, gt=0, description="Residual tolerance (m^3/s)")
    eps_x: float = Field(default=settings.eps_x, gt=0, description="Step tolerance")
    max_iter: int = Field(default=settings.max_iter, ge=1)
    mu_min: float = Field(default=settings.mu_min, gt=0, le=1, description="Minimal step length")
    scaling_enabled: bool = Field(default=settings.newton_scaling)
    backtrack_factor: float = Field(default=settings.backtrack_factor, gt=0, lt=1)
    scaling_floor: float = Field(default=settings.scaling_floor, gt=0)


class InnerSolverConfig(BaseModel):
    """Damped least-squares settings for the tensor-direction subproblem."""

    max_iter: int = Field(default=settings.inner_max_iter, ge=1)
    lambda0: float = Field(default=settings.inner_lambda0, gt=0)
    lambda_factor: float = Field(default=settings.inner_lambda_factor, gt=1)
    gtol: float = Field(default=settings.inner_gtol, gt=0, description="Gradient-norm stop")
    initial_fraction: float = Field(
        default=settings.initial_direction_fraction,
        gt=0,
        le=1,
        description="Fraction of the Newton step used as the starting direction",
    )


class CampaignConfig(BaseModel):
    """Multi-start campaign settings."""

    launches: int = Field(default=settings.launches, ge=1)
    inner_runs: int = Field(default=settings.inner_runs, ge=1)
    method: SolverMethod = Field(default=SolverMethod.TENSOR)
    seed: int = Field(default=settings.seed, ge=0)
    perturb_small_sigma_frac: float = Field(default=settings.jitter_fraction, gt=0, lt=1)
    threshold_frac: float = Field(default=settings.threshold_fraction, gt=0, lt=1)
    tighten_factor: float = Field(default=settings.tighten_factor, gt=0, lt=1)
    eps_f_floor: float = Field(default=settings.eps_f_floor, gt=0)
    eps_x_floor: float = Field(default=settings.eps_x_floor, gt=0)
    parallel: int = Field(default=1, ge=1, description="Worker processes for launches")
    solver: SolverConfig = Field(default_factory=SolverConfig)
    inner: InnerSolverConfig = Field(default_factory=InnerSolverConfig)

    class Config:
        use_enum_values = True


class LaunchResult(BaseModel):
    """Best result of one launch of the multi-start campaign."""

    launch: int = Field(..., ge=1, description="1-based launch index")
    succeeded: bool = Field(default=True)
    x: List[float] = Field(default_factory=list, description="Best stacked state x+")
    roughness_mm: List[float] = Field(default_factory=list)
    unmeasured_heads_m: List[List[float]] = Field(default_factory=list, description="Per set")
    residual_m3s: Optional[float] = None
    residual_lps: Optional[float] = None
    best_run: Optional[int] = Field(None, description="Inner run that produced x+ (1-based)")
    mean_iterations_to_best: Optional[float] = None
    total_runs: int = 0
    failed_runs: int = 0
    eps_f_final: Optional[float] = None
    eps_x_final: Optional[float] = None
    out_of_range_pipes: List[int] = Field(
        default_factory=list, description="Pipes with roughness above 5% of the diameter"
    )


class CampaignResult(BaseModel):
    """Outcome of a multi-start campaign."""

    method: SolverMethod
    seed: int
    launches: List[LaunchResult] = Field(default_factory=list)
    best_launch: Optional[int] = None

    class Config:
        use_enum_values = True

    @model_validator(mode="after")
    def _check_best(self) -> "CampaignResult":
        ok = [lr for lr in self.launches if lr.succeeded]
        if self.best_launch is not None and ok:
            best = min(lr.residual_m3s for lr in ok)
            chosen = self.launches[self.best_launch - 1]
            if chosen.residual_m3s != best:
                raise ValueError(f"best_launch {self.best_launch} is not the minimal residual launch")
        return self

    @property
    def best(self) -> Optional[LaunchResult]:
        if self.best_launch is None:
            return None
        return self.launches[self.best_launch - 1]
