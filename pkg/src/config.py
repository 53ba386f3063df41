"""
Configuration management for the CoMDP solver toolkit.

Provides centralized configuration with validation. Values come from
defaults, an optional JSON file and command-line overrides.
"""

import pathlib
from typing import List, Optional, Union

from pydantic import BaseModel, Field, validator


class Config(BaseModel):
    """Configuration settings with validation."""

    # Logging Configuration
    log_level: str = Field(default="INFO", description="Logging level")
    log_path: Optional[str] = Field(
        default=None,
        description="Directory for log files; console only when unset"
    )
    log_json: bool = Field(default=False, description="Render log events as JSON")

    # LP Configuration
    lp_pivot_tol: float = Field(default=1e-10, description="Simplex pivot tolerance", gt=0)
    lp_feasibility_tol: float = Field(default=1e-7, description="Feasibility tolerance", gt=0)
    lp_phase_one_tol: float = Field(
        default=1e-8,
        description="Phase-one optimum above which the LP is infeasible",
        gt=0
    )
    lp_bland_factor: int = Field(
        default=3,
        description="Stalled pivots, per row and column, before Bland's rule",
        ge=1
    )

    # Solver Configuration
    dpi_max_iters: int = Field(
        default=100,
        description="Outer iteration cap of the infinite-horizon DPI solver",
        ge=1
    )
    dpi_stage_max_iters: int = Field(
        default=50,
        description="Inner iteration cap per stage of the finite-horizon DPI solver",
        ge=1
    )
    dpi_stop_eps: float = Field(default=1e-9, description="DPI stopping tolerance", ge=0)
    agent_order: str = Field(default="fixed", description="Agent sweep order: fixed or random")
    vi_tol: float = Field(default=1e-10, description="Value iteration tolerance", gt=0)
    pi_max_iters: int = Field(default=1000, description="Joint policy iteration cap", ge=1)
    default_basis: str = Field(default="grid-distance", description="Basis used when none is given")

    # Grid World Configuration
    collision_penalty: float = Field(default=2.0, description="Cost of co-located spiders", ge=0)
    wall_penalty: float = Field(default=1.0, description="Cost of bumping into a wall", ge=0)
    stage_cost: float = Field(default=1.0, description="Cost per stage before capture", gt=0)
    slip_p: float = Field(default=0.7, description="Probability of the intended move", gt=0, le=1)

    # Benchmark and Verification Configuration
    bench_trials: int = Field(default=5, description="Timed trials per benchmark row", ge=1)
    verify_seeds: int = Field(default=100, description="Seeds per bound suite", ge=1)

    @validator('log_level')
    def validate_log_level(cls, v):
        """Validate log level is valid."""
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'Log level must be one of: {", ".join(valid_levels)}')
        return v.upper()

    @validator('agent_order')
    def validate_agent_order(cls, v):
        if v not in ('fixed', 'random'):
            raise ValueError('Agent order must be fixed or random')
        return v

    class Config:
        extra = 'forbid'
        validate_assignment = True


class BenchRow(BaseModel):
    """One (model, method, basis) row of a benchmark configuration."""

    model: str = Field(..., description="Path to a JSON model file")
    method: str = Field(..., description="dpi-alp, pi-joint, vi or dp-fh")
    basis: Optional[str] = Field(default=None, description="Basis spec for dpi-alp")
    verify: bool = Field(default=False, description="Report exact costs for dpi-alp")
    seed: int = Field(default=0, description="Seed for randomized options")

    @validator('method')
    def validate_method(cls, v):
        if v not in ('dpi-alp', 'pi-joint', 'vi', 'dp-fh'):
            raise ValueError(f'Unknown method: {v}')
        return v


class BenchConfig(BaseModel):
    """Benchmark configuration file."""

    rows: List[BenchRow] = Field(..., description="Benchmark rows", min_items=1)
    trials: Optional[int] = Field(default=None, description="Overrides bench_trials", ge=1)
    output: Optional[str] = Field(default=None, description="CSV output path")


def load_config(path: Optional[Union[str, pathlib.Path]] = None) -> Config:
    """Load and validate configuration from an optional JSON file."""
    if path is None:
        return Config()
    try:
        return Config.parse_file(path)
    except Exception as e:
        print(f"Configuration error: {e}")
        print(f"Please check the configuration file {path}")
        raise


def load_bench_config(path: Union[str, pathlib.Path]) -> BenchConfig:
    return BenchConfig.parse_file(path)


def create_directories(config: Config, *paths: Union[str, pathlib.Path]) -> None:
    """Create the log directory and any output directories."""
    if config.log_path:
        pathlib.Path(config.log_path).mkdir(parents=True, exist_ok=True)
    for path in paths:
        pathlib.Path(path).mkdir(parents=True, exist_ok=True)
