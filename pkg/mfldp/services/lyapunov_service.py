"""
Lyapunov property of the stationary rate function along McKean-Vlasov flows:
I_0(x(t)) is checked to be non-increasing in t.
"""
import logging
from typing import Callable, Optional

import numpy as np

from mfldp.api.models import FlowConfig, LyapunovReport
from mfldp.core.errors import ModelError
from mfldp.services.action_service import gibbs_initial_rate
from mfldp.services.flow_service import integrate_mkv
from mfldp.services.hamiltonian_service import vector_field_F
from mfldp.services.model_service import ModelSpec, StateLike, as_state

logger = logging.getLogger(__name__)

TOLERANCE_FLOOR = 1e-12


def _default_rate(model: ModelSpec) -> Callable[[np.ndarray], float]:
    if model.domain != "simplex":
        raise ModelError("Ehrenfest models have no built-in stationary rate function; pass I0 explicitly")
    return gibbs_initial_rate(model)


def lyapunov_check(
    model: ModelSpec,
    start: StateLike,
    cfg: FlowConfig,
    tolerance: Optional[float] = None,
    I0: Optional[Callable[[np.ndarray], float]] = None,
) -> LyapunovReport:
    """
    Integrate the flow from `start`, evaluate I_0 at every step and report the largest
    forward increase. Without an explicit tolerance, the tolerance is ten times the
    step-doubling discrepancy of I_0 along the flow.
    """
    rate = I0 if I0 is not None else _default_rate(model)
    as_state(model, start)
    traj = integrate_mkv(model, start, cfg)
    values = np.array([float(rate(x)) for x in traj.states])
    if not np.all(np.isfinite(values)):
        raise ModelError("I_0 is not finite along the flow")
    max_increase = max(0.0, float(np.max(np.diff(values)))) if values.size > 1 else 0.0

    if tolerance is None:
        # halve the realized step so every coarse time is also a fine time
        steps = traj.times.size - 1
        fine_cfg = cfg.model_copy(update={"dt": cfg.horizon / (2 * steps)})
        fine = integrate_mkv(model, start, fine_cfg)
        fine_values = np.array([float(rate(x)) for x in fine.states[::2]])
        if fine_values.size != values.size:
            raise ModelError(f"Step-doubling grid has {fine.times.size} points for {traj.times.size} coarse points")
        discrepancy = float(np.max(np.abs(values - fine_values)))
        tolerance = max(10.0 * discrepancy, TOLERANCE_FLOOR)

    report = LyapunovReport(
        times=traj.times.tolist(),
        values=values.tolist(),
        max_increase=max_increase,
        tolerance=tolerance,
        monotone=max_increase <= tolerance,
    )
    if not report.monotone:
        logger.warning(f"I_0 increased by {max_increase:.3e} along the flow (tolerance {tolerance:.3e})")
    return report


def stationary_derivative(model: ModelSpec, state: StateLike, I0: Optional[Callable[[np.ndarray], float]] = None, step: float = 1e-6) -> float:
    """Central-difference derivative of I_0 at `state` along F(state)."""
    rate = I0 if I0 is not None else _default_rate(model)
    x = as_state(model, state)
    F = vector_field_F(model, x)
    return (float(rate(x + step * F)) - float(rate(x - step * F))) / (2.0 * step)
