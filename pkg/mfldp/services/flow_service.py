"""
Fixed-step integrators for the McKean-Vlasov equation x' = H_p(x, 0) and for the
characteristics x' = H_p(x, grad g(x)), plus the closed-form branch family of the
non-uniqueness example.
"""
import logging
import math
from typing import Callable

import numpy as np

from mfldp.api.models import FlowConfig
from mfldp.core.errors import FlowDivergenceError, ModelError
from mfldp.services.hamiltonian_service import ehrenfest_gradient, glauber_gradient
from mfldp.services.model_service import ModelSpec, StateLike, Trajectory, as_state

logger = logging.getLogger(__name__)


def step_grid(cfg: FlowConfig) -> np.ndarray:
    steps = max(1, int(math.ceil(cfg.horizon / cfg.dt - 1e-9)))
    return np.linspace(0.0, cfg.horizon, steps + 1)


def project(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Nearest-ish point of E: clip on the cube, clamp and renormalize on the simplex."""
    if model.domain == "cube":
        return np.clip(x, -1.0, 1.0)
    y = np.clip(x, 0.0, None)
    total = y.sum()
    if total <= 0:
        raise ModelError(f"Cannot project {x.tolist()} onto the simplex")
    return y / total


def momentum_drift(model: ModelSpec, grad: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """x -> H_p(x, grad(x)), evaluated straight from the rates (stage points are not validated)."""
    if model.domain == "cube":
        return lambda x: ehrenfest_gradient(*model.rates(x), np.asarray(grad(x), dtype=float))
    return lambda x: glauber_gradient(model.rates(x), np.asarray(grad(x), dtype=float))


def _integrate(model: ModelSpec, drift: Callable[[np.ndarray], np.ndarray], start: StateLike, cfg: FlowConfig) -> Trajectory:
    x = np.array(as_state(model, start), dtype=float)
    times = step_grid(cfg)
    states = np.empty((times.size, model.d))
    states[0] = x
    max_projection = 0.0
    total_projection = 0.0
    keep_inside = (lambda y: project(model, y)) if cfg.boundary_projection else (lambda y: y)

    for k in range(times.size - 1):
        h = times[k + 1] - times[k]
        if cfg.method == "euler":
            x_new = x + h * drift(x)
        else:
            k1 = drift(x)
            k2 = drift(keep_inside(x + 0.5 * h * k1))
            k3 = drift(keep_inside(x + 0.5 * h * k2))
            k4 = drift(keep_inside(x + h * k3))
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_new)):
            raise FlowDivergenceError("Flow step produced a non-finite state", float(times[k + 1]), x)
        if cfg.boundary_projection:
            projected = project(model, x_new)
            distance = float(np.max(np.abs(projected - x_new)))
            max_projection = max(max_projection, distance)
            total_projection += distance
            x_new = projected
        x = x_new
        states[k + 1] = x

    metadata = {
        "method": cfg.method,
        "dt": cfg.dt,
        "max_projection_distance": max_projection,
        "total_projection_distance": total_projection,
    }
    if max_projection > 1e-9:
        logger.warning(f"Flow needed projection of size {max_projection:.3e}", extra={'extra_data': metadata})
    return Trajectory(times, states, kind="piecewise-linear", metadata=metadata)


def integrate_mkv(model: ModelSpec, start: StateLike, cfg: FlowConfig) -> Trajectory:
    """Integrate x' = F(x) on the fixed step grid."""
    zero = np.zeros(model.d)
    return _integrate(model, momentum_drift(model, lambda x: zero), start, cfg)


def integrate_characteristics(model: ModelSpec, grad_g: Callable[[np.ndarray], np.ndarray], start: StateLike, cfg: FlowConfig) -> Trajectory:
    """Integrate x' = H_p(x, grad g(x)) for a smooth g given through its gradient."""
    return _integrate(model, momentum_drift(model, grad_g), start, cfg)


def mkv_branch_solution(model: ModelSpec, a: float, cfg: FlowConfig) -> Trajectory:
    """gamma_a(t) = 0 for t <= a and (t - a)^2 afterwards, sampled on the step grid."""
    if model.name != "nonunique":
        raise ModelError(f"Branch solutions exist for the non-uniqueness example only, got '{model.name}'")
    if a < 0:
        raise ModelError(f"Branch time must be non-negative, got a={a}")
    times = step_grid(cfg)
    states = np.where(times <= a, 0.0, (times - a) ** 2)
    if states.max() > 1.0:
        raise ModelError(f"Branch a={a} leaves [-1, 1] before t={cfg.horizon}")
    return Trajectory(times, states.reshape(-1, 1), kind="piecewise-linear", metadata={"branch": a})
