"""
Moreau-W2 - Configuration
Description: Global numerical tolerances and the experiment configuration model
"""

import os
import logging
from contextlib import contextmanager
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

logger = logging.getLogger(__name__)

THREADS_ENV = "MOREAU_W2_THREADS"

COMMANDS = (
    "w2",
    "grad",
    "envelope",
    "bounds-check",
    "equality-sweep",
    "grad-converge",
    "functionals",
)


@dataclass(frozen=True)
class NumericConfig:
    """Tolerances shared by every module"""
    atol: float = 1e-9
    weight_sum_tol: float = 1e-12
    symmetry_tol: float = 1e-12
    spd_floor: float = 1e-12
    tie_tol: float = 1e-12
    marginal_tol: float = 1e-9
    certificate_tol: float = 1e-7
    monotone_tol: float = 1e-10
    bruteforce_max_n: int = 8
    delta_band: float = 1e-6
    network_simplex_max_iter: int = 100000

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


_active = NumericConfig()


def get_config() -> NumericConfig:
    """Return the active global tolerances"""
    return _active


def configure(**overrides) -> NumericConfig:
    """
    Replace fields of the global configuration.

    Args:
        **overrides: NumericConfig field names and their new values

    Returns:
        The new active configuration
    """
    global _active
    _active = replace(_active, **overrides)
    logger.debug(f"Numeric configuration updated: {overrides}")
    return _active


@contextmanager
def numeric_config(**overrides) -> Iterator[NumericConfig]:
    """Temporarily override tolerances, restoring the previous values on exit"""
    global _active
    previous = _active
    try:
        yield configure(**overrides)
    finally:
        _active = previous


def worker_count() -> int:
    """Worker cap for sweeps, read from the environment (or a .env file)"""
    load_dotenv()
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return 1


class ExperimentConfig(BaseModel):
    """Everything a CLI run needs; validated before any computation"""

    command: Literal[COMMANDS]
    a: Optional[Path] = None
    b: Optional[Path] = None
    gauss_a: Optional[str] = None
    gauss_b: Optional[str] = None
    delta: Optional[float] = None
    deltas: List[float] = Field(default_factory=lambda: [0.5, 0.25, 0.1, 0.05, 0.01])
    n: int = 500
    seed: int = 0
    seeds: List[int] = Field(default_factory=list)
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    radius_power: float = 2.0
    out: Path = Path("results")
    emit_svg: bool = False
    verbose: bool = False

    @field_validator("delta")
    @classmethod
    def validate_delta(cls, v):
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        return v

    @field_validator("deltas")
    @classmethod
    def validate_deltas(cls, v):
        if not v:
            raise ValueError("at least one delta is required")
        for d in v:
            if not 0.0 < d < 1.0:
                raise ValueError(f"delta {d} outside (0, 1)")
        return v

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v):
        if v < 0:
            raise ValueError("seed must be a nonnegative integer")
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v):
        if any(s < 0 for s in v):
            raise ValueError("seeds must be nonnegative integers")
        return v

    @field_validator("n")
    @classmethod
    def validate_n(cls, v):
        if v < 1:
            raise ValueError("n must be at least 1")
        return v

    @field_validator("tol")
    @classmethod
    def validate_tol(cls, v):
        if v is not None and v <= 0:
            raise ValueError("tol must be positive")
        return v

    @field_validator("max_iter")
    @classmethod
    def validate_max_iter(cls, v):
        if v is not None and v < 1:
            raise ValueError("max_iter must be at least 1")
        return v

    @property
    def seed_list(self) -> List[int]:
        return list(self.seeds) if self.seeds else [self.seed]

    @classmethod
    def from_yaml(cls, path: Path, **overrides) -> "ExperimentConfig":
        """Load a configuration file; explicit overrides win over file values"""
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)
