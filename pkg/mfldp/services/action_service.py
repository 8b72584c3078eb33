"""
Path-space rate functional I(gamma) = I_0(gamma(0)) + int L(gamma, gamma') dt on
sampled trajectories.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Literal, Optional

import numpy as np
from scipy.special import xlogy

from mfldp.core.errors import ModelError
from mfldp.services.hamiltonian_service import legendre
from mfldp.services.model_service import GlauberModel, ModelSpec, StateLike, Trajectory, as_state

logger = logging.getLogger(__name__)

POINT_MASS_TOL = 1e-9


@dataclass(frozen=True)
class InitialRate:
    """I_0: a point mass (0 at `point`, +inf elsewhere), the Gibbs rate of a Potts model, or any evaluator."""
    kind: Literal["point-mass", "gibbs", "custom"]
    point: Optional[np.ndarray] = None
    evaluator: Optional[Callable[[np.ndarray], float]] = None

    def __call__(self, state) -> float:
        state = np.asarray(state, dtype=float)
        if self.kind == "point-mass":
            return 0.0 if np.max(np.abs(state - self.point)) <= POINT_MASS_TOL else math.inf
        return float(self.evaluator(state))


def point_mass(point: StateLike) -> InitialRate:
    values = point.values if hasattr(point, "values") else np.asarray(point, dtype=float)
    return InitialRate("point-mass", point=np.array(values, dtype=float))


def custom_initial_rate(evaluator: Callable[[np.ndarray], float]) -> InitialRate:
    return InitialRate("custom", evaluator=evaluator)


def relative_entropy(mu: np.ndarray) -> float:
    """S(mu | uniform) = sum_a mu(a) log(d mu(a)) with 0 log 0 = 0."""
    mu = np.asarray(mu, dtype=float)
    return float(np.sum(xlogy(mu, mu.size * mu)))


def gibbs_initial_rate(model: GlauberModel) -> InitialRate:
    """I_0(mu) = S(mu | uniform) + V(mu)."""
    if model.domain != "simplex":
        raise ModelError("The Gibbs initial rate is defined for Glauber models only")
    if model.potential is None:
        raise ModelError(f"Model '{model.name}' carries no potential")
    V = model.potential.value
    return InitialRate("gibbs", evaluator=lambda mu: relative_entropy(mu) + float(V(mu)))


@dataclass
class ActionResult:
    total: float
    initial_part: float
    running_part: List[float] = field(default_factory=list)
    infinite_interval: Optional[int] = None
    infinite_velocity: Optional[List[float]] = None

    @property
    def infinite(self) -> bool:
        return math.isinf(self.total)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "initial_part": self.initial_part,
            "infinite_interval": self.infinite_interval,
            "infinite_velocity": self.infinite_velocity,
            "intervals": self.running_part,
        }


def evaluate_action(model: ModelSpec, traj: Trajectory, I0: InitialRate) -> ActionResult:
    """
    Chord velocity per interval, Lagrangian at the interval midpoint, midpoint quadrature.
    The first interval with infinite cost makes the total infinite.
    """
    if traj.times.size < 2:
        raise ModelError("The action needs a trajectory with at least two samples")
    traj.validate_in(model)
    initial_part = I0(as_state(model, traj.start))
    running: List[float] = []
    for k in range(traj.times.size - 1):
        dt = traj.times[k + 1] - traj.times[k]
        velocity = (traj.states[k + 1] - traj.states[k]) / dt
        midpoint = 0.5 * (traj.states[k] + traj.states[k + 1])
        cost = legendre(model, midpoint, velocity)
        if cost.infinite:
            logger.info(f"Infinite action on interval {k} (t={traj.times[k]:.6g})", extra={'extra_data': {'velocity': velocity.tolist()}})
            return ActionResult(math.inf, initial_part, running, k, velocity.tolist())
        running.append(cost.value * dt)
    total = initial_part + math.fsum(running)
    return ActionResult(total, initial_part, running)
