"""
Exception hierarchy shared by the services and the command line.

Invalid input (parameters, states, configs) raises ModelError, which the CLI
maps to exit code 1. Numerical failures raise a NumericalError subclass, which
the CLI maps to exit code 2.
"""
from typing import Optional

import numpy as np


class MFLDPError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(MFLDPError, ValueError):
    """Invalid model parameters, off-domain or off-lattice states, dimension mismatches."""


class NumericalError(MFLDPError, ArithmeticError):
    """A computation did not produce a trustworthy number."""


class ConvergenceError(NumericalError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class FlowDivergenceError(NumericalError):
    """An ODE step produced NaN or Inf."""

    def __init__(self, message: str, time: float, state: Optional[np.ndarray] = None):
        super().__init__(f"{message} at t={time:.6g}, state={None if state is None else state.tolist()}")
        self.time = time
        self.state = state


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
