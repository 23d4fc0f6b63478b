"""Configuration for the Roughness Calibrator."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Roughness Calibrator settings (environment prefix NETCAL_)."""

    # Component identification
    component_name: str = "roughness-calibrator"
    component_version: str = "1.0.0"

    # Fluid constants (water at 20 °C), overridable per network file
    fluid_density: float = Field(998.2, gt=0, description="rho in kg/m^3")
    fluid_viscosity: float = Field(1.002e-3, gt=0, description="eta in Pa*s")
    gravity: float = Field(9.81, gt=0, description="g in m/s^2")

    # Outer solver (Newton and Tensor share the loop)
    eps_f: float = Field(1e-7, gt=0, description="Residual tolerance in m^3/s")
    eps_x: float = Field(1e-9, gt=0, description="Step tolerance")
    max_iter: int = Field(300, ge=1)
    mu_min: float = Field(1e-8, gt=0)
    backtrack_factor: float = Field(0.5, gt=0, lt=1)
    newton_scaling: bool = True
    scaling_floor: float = Field(1e-4, gt=0)

    # Inner tensor-direction solver
    inner_max_iter: int = Field(100, ge=1)
    inner_lambda0: float = Field(1e-3, gt=0)
    inner_lambda_factor: float = Field(10.0, gt=1)
    inner_gtol: float = Field(1e-12, gt=0)
    initial_direction_fraction: float = Field(0.1, gt=0, le=1)

    # Multi-start campaign
    launches: int = Field(13, ge=1)
    inner_runs: int = Field(50, ge=1)
    seed: int = 0
    threshold_fraction: float = Field(0.05, gt=0, lt=1)
    jitter_fraction: float = Field(0.0005, gt=0, lt=1)
    tighten_factor: float = Field(0.7, gt=0, lt=1)
    eps_f_floor: float = Field(1e-9, gt=0)
    eps_x_floor: float = Field(1e-12, gt=0)
    initial_roughness_fraction: float = Field(0.01, gt=0, lt=1)
    roughness_upper_fraction: float = Field(0.1, gt=0, lt=1)

    # Numerical tolerances
    rank_rtol: float = 1e-10
    pinv_rtol: float = 1e-12
    separator_tol: float = 1e-8
    conic_tol: float = 1e-9
    determinant_tol: float = Field(1e-10, gt=0, description="Relative tolerance of the factorization determinants")
    reference_fit_xtol: float = Field(1e-12, gt=0)
    fd_relative_step: float = 1e-7

    # Forward steady-state solver
    forward_tol: float = Field(1e-12, gt=0, description="Target node imbalance in m^3/s")
    forward_accept: float = Field(1e-10, gt=0, description="Accepted node imbalance in m^3/s")
    forward_max_iter: int = Field(100, ge=1)
    reynolds_min: float = 4000.0

    # Files
    data_dir: Path = Path(__file__).parent / "data"
    report_path: Path = Path("calibration_report.json")

    # Logging
    log_level: str = "INFO"
    log_json: bool = False

    class Config:
        env_prefix = "NETCAL_"
        env_file = ".env"
        env_file_encoding = "utf-8"


# Global settings instance
settings = Settings()
