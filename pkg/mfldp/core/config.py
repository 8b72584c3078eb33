from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import field_validator
from typing import Literal, Optional, Any
import logging
import os

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    # Model config
    model_config = SettingsConfigDict(env_file='.env', env_file_encoding='utf-8', extra='ignore')

    # Parallelism (the CLI --threads flag wins over this)
    LDP_THREADS: Optional[int] = None

    # Logging
    LOG_DIR: str = "logs"
    LOG_LEVEL: str = "INFO"
    LOG_TO_FILE: bool = True

    # Lattice handling
    LATTICE_SNAP_TOL: float = 1e-9

    # Lagrangian (Glauber dual) Newton solver
    NEWTON_MAX_ITER: int = 200
    NEWTON_GRAD_TOL: float = 1e-12

    # Hamilton-Jacobi resolvent solver
    P_MAX: float = 8.0
    HJB_SCHEME: Literal["upwind", "lax_friedrichs"] = "upwind"
    RESOLVENT_TOL: float = 1e-10
    RESOLVENT_MAX_ITER: int = 100000
    RESOLVENT_DAMPING: float = 0.5

    @field_validator('LDP_THREADS', mode='before')
    @classmethod
    def empty_threads_is_none(cls, v: Any) -> Any:
        if isinstance(v, str) and v.strip() == "":
            return None
        return v

    @field_validator('RESOLVENT_DAMPING')
    @classmethod
    def damping_in_unit_interval(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("RESOLVENT_DAMPING must lie in (0, 1]")
        return v

    @field_validator('P_MAX')
    @classmethod
    def positive_momentum_cap(cls, v: float) -> float:
        if v <= 0.0:
            raise ValueError("P_MAX must be positive")
        return v


# Load settings from the environment / .env file once at import time.
settings = Settings()


def resolve_threads(threads: Optional[int] = None) -> int:
    """
    Number of worker threads: explicit argument, then LDP_THREADS, then the core count.
    """
    if threads is None:
        threads = settings.LDP_THREADS
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        logger.warning(f"Thread count {threads} is not positive; using 1.")
        threads = 1
    return threads
