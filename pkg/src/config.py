#!/usr/bin/env python3
"""
Configuration management for the grasp contact refiner.

Two layers live here:

* RuntimeConfig: process-level settings (logging, worker count, number
  formatting) read from environment variables after loading a `.env` file.
* RunConfig: the numerical experiment settings (capsule geometry, loss
  weights, optimizer, perturbation noise, metric thresholds) read from a
  JSON or TOML run file and validated with pydantic.
"""

import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from errors import ConfigError, FileFormatError

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"


@dataclass
class RuntimeConfig:
    """Process-level settings taken from the environment."""

    log_level: str = "INFO"
    log_file: str = "grasp_refiner.log"
    debug_mode: bool = False
    max_workers: int = 1
    float_format: str = "%.6f"


class ConfigValidator:
    """Fills defaults for optional environment variables and rejects malformed ones."""

    REQUIRED_VARS: list = []

    OPTIONAL_VARS = {
        "GRASP_LOG_LEVEL": "INFO",
        "GRASP_LOG_FILE": "grasp_refiner.log",
        "GRASP_DEBUG_MODE": "false",
        "GRASP_MAX_WORKERS": "1",
        "GRASP_FLOAT_FORMAT": "%.6f",
    }

    LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

    def validate_environment(self) -> None:
        """Validate required environment variables and set defaults."""
        missing_vars = [var for var in self.REQUIRED_VARS if not os.getenv(var)]
        if missing_vars:
            error_msg = f"Missing required environment variables: {missing_vars}"
            logger.error(error_msg)
            raise ConfigError(error_msg)

        self._set_default_values()
        self._check_values()
        logger.debug("Environment validation completed successfully")

    def _set_default_values(self) -> None:
        for var, default_value in self.OPTIONAL_VARS.items():
            if not os.getenv(var):
                os.environ[var] = default_value
                logger.debug(f"Set default value for {var}: {default_value}")

    def _check_values(self) -> None:
        level = os.environ["GRASP_LOG_LEVEL"].upper()
        if level not in self.LOG_LEVELS:
            raise ConfigError(f"GRASP_LOG_LEVEL must be one of {self.LOG_LEVELS}, got {level}")
        try:
            workers = int(os.environ["GRASP_MAX_WORKERS"])
        except ValueError as e:
            raise ConfigError(f"GRASP_MAX_WORKERS must be an integer: {e}") from e
        if workers < 1:
            raise ConfigError(f"GRASP_MAX_WORKERS must be >= 1, got {workers}")
        float_format = os.environ["GRASP_FLOAT_FORMAT"]
        try:
            float_format % 1.0
        except (TypeError, ValueError) as e:
            raise ConfigError(f"GRASP_FLOAT_FORMAT is not a printf float format: {float_format}") from e


class Config:
    """Builds RuntimeConfig from the environment."""

    def __init__(self, validator: Optional[ConfigValidator] = None):
        self._validator = validator or ConfigValidator()

    @classmethod
    def from_environment(cls, validator: Optional[ConfigValidator] = None) -> RuntimeConfig:
        """Create RuntimeConfig from environment variables (and `.env`)."""
        load_dotenv()

        config = cls(validator)
        config._validator.validate_environment()

        return RuntimeConfig(
            log_level=os.getenv("GRASP_LOG_LEVEL", "INFO").upper(),
            log_file=os.getenv("GRASP_LOG_FILE", "grasp_refiner.log"),
            debug_mode=os.getenv("GRASP_DEBUG_MODE", "false").lower() == "true",
            max_workers=int(os.getenv("GRASP_MAX_WORKERS", "1")),
            float_format=os.getenv("GRASP_FLOAT_FORMAT", "%.6f"),
        )


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CapsuleConfig(_Section):
    """Virtual capsule placed along a vertex normal (mm)."""

    c_top: float = Field(0.5, gt=0)
    c_bot: float = Field(1.0, gt=0)
    c_rad: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check_asymmetry(self) -> "CapsuleConfig":
        if self.c_bot < self.c_top:
            raise ValueError(f"c_bot ({self.c_bot}) must be >= c_top ({self.c_top})")
        if self.c_bot == self.c_top:
            logger.warning(f"Symmetric capsule (c_bot == c_top == {self.c_top}); inward tolerance is lost")
        return self

    @property
    def reach(self) -> float:
        """Largest distance from the anchor to a point of the segment."""
        return max(self.c_top, self.c_bot)


class LossConfig(_Section):
    lambda_miss: float = Field(3.0, ge=1)
    lambda_O: float = Field(1.0, ge=0)
    lambda_pen: float = Field(3.0, ge=0)
    c_pen: float = Field(2.0, ge=0)


class ComponentScale(_Section):
    """One multiplier per parameter block (pose, shape, translation, rotation)."""

    theta: float = Field(1.0, ge=0)
    beta: float = Field(1.0, ge=0)
    translation: float = Field(1.0, ge=0)
    rotation: float = Field(1.0, ge=0)


class OptimConfig(_Section):
    learning_rate: float = Field(0.01, gt=0)
    iterations: int = Field(250, ge=1)
    # ADAM normalizes each coordinate, so a grad_scale only matters as zero
    # (block frozen) or non-zero; step sizes come from lr_scale
    grad_scale: ComponentScale = ComponentScale(theta=1.0, beta=0.0, translation=1.0, rotation=1.0)
    # ADAM steps are ~learning_rate per coordinate whatever the gradient size,
    # so translation (mm) needs its own step multiplier
    lr_scale: ComponentScale = ComponentScale(theta=1.0, beta=1.0, translation=50.0, rotation=1.0)
    n_restart: int = Field(1, ge=1)
    restart_translation_sigma: float = Field(10.0, ge=0)
    restart_rotation_sigma: float = Field(5.0, ge=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    seed: int = 0
    optimize_shape: bool = False
    # each restart returns its final iterate unless keep_best is set
    keep_best: bool = False
    snapshot_every: int = Field(50, ge=0)
    workers: int = Field(1, ge=1)


class PerturbConfig(_Section):
    sigma_theta: float = Field(0.5, ge=0)
    sigma_translation: float = Field(50.0, ge=0)
    sigma_rotation: float = Field(15.0, ge=0)
    n_perturbations_per_grasp: int = Field(1, ge=1)
    seed: int = 0


class MetricsConfig(_Section):
    contact_band: float = Field(2.0, gt=0)
    contact_threshold: float = Field(0.4, gt=0)
    voxel_size: float = Field(1.0, gt=0)
    histogram_range: float = Field(10.0, gt=0)
    histogram_bin: float = Field(1.0, gt=0)


class RunConfig(_Section):
    """Everything a run needs besides its input files."""

    capsule: CapsuleConfig = CapsuleConfig()
    loss: LossConfig = LossConfig()
    optim: OptimConfig = OptimConfig()
    perturb: PerturbConfig = PerturbConfig()
    metrics: MetricsConfig = MetricsConfig()

    def snapshot(self) -> Dict[str, Any]:
        """Plain-JSON view stored in run manifests."""
        return self.model_dump(mode="json")

    def with_overrides(
        self, seed: Optional[int] = None, n_restart: Optional[int] = None, keep_best: Optional[bool] = None
    ) -> "RunConfig":
        """Apply CLI overrides; --seed drives every random stream."""
        optim = self.optim
        perturb = self.perturb
        if seed is not None:
            optim = optim.model_copy(update={"seed": seed})
            perturb = perturb.model_copy(update={"seed": seed})
        if n_restart is not None:
            if n_restart < 1:
                raise ConfigError(f"n_restart must be >= 1, got {n_restart}")
            optim = optim.model_copy(update={"n_restart": n_restart})
        if keep_best is not None:
            optim = optim.model_copy(update={"keep_best": keep_best})
        return self.model_copy(update={"optim": optim, "perturb": perturb})


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load and validate a run config file.

    Args:
        path: `.json` or `.toml` file; None gives the defaults

    Raises:
        FileFormatError: missing or unparsable file
        ConfigError: unknown keys or values violating an invariant
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise FileFormatError(f"Config file not found: {path}", path=str(path))
    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as f:
                data = tomllib.load(f)
        elif path.suffix.lower() == ".json":
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        else:
            raise FileFormatError(f"Unsupported config format '{path.suffix}'", path=str(path))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        logger.error(f"Error parsing config {path}: {e}")
        raise FileFormatError(f"Cannot parse config: {e}", path=str(path)) from e

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        logger.error(f"Invalid run config {path}: {e}")
        raise ConfigError(f"Invalid run config: {e}", path=str(path)) from e
    logger.info(f"Run config loaded from {path}")
    return config
