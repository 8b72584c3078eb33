"""
Hamiltonians, their momentum gradients, the finite-n generators H_n and the
Legendre-Fenchel Lagrangians of both model families.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from mfldp.core.config import settings
from mfldp.core.errors import ConvergenceError, ModelError
from mfldp.services.model_service import ModelSpec, StateLike, as_state, counts_to_state, snap_to_lattice

logger = logging.getLogger(__name__)

# Gauge-fixed momenta beyond this sup-norm mean the dual supremum is not attained.
UNBOUNDED_MOMENTUM = 60.0
HESSIAN_REGULARIZATION = 1e-10
ARMIJO_SLOPE = 1e-4


@dataclass(frozen=True)
class LagrangianValue:
    """Value of the Lagrangian; +inf is stored as math.inf, never as a large float."""
    value: float
    maximizer: Optional[np.ndarray] = None

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    @classmethod
    def unbounded(cls) -> 'LagrangianValue':
        return cls(math.inf, None)


def as_momentum(model: ModelSpec, p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape[0] != model.d:
        raise ModelError(f"Momentum has dimension {p.shape[0]}, model '{model.name}' has d={model.d}")
    if not np.all(np.isfinite(p)):
        raise ModelError(f"Momentum must be finite, got {p.tolist()}")
    return p


# =====================================================================
# Rate-level kernels (shared with the grid schemes)
# =====================================================================

def ehrenfest_hamiltonian(vp: np.ndarray, vm: np.ndarray, p: np.ndarray) -> float:
    return float(np.sum(vp * np.expm1(2.0 * p) + vm * np.expm1(-2.0 * p)))


def ehrenfest_gradient(vp: np.ndarray, vm: np.ndarray, p: np.ndarray) -> np.ndarray:
    return 2.0 * vp * np.exp(2.0 * p) - 2.0 * vm * np.exp(-2.0 * p)


def _tilted_rates(v: np.ndarray, p: np.ndarray) -> np.ndarray:
    # W[a, b] = v(a, b) exp(p_b - p_a)
    return v * np.exp(p[None, :] - p[:, None])


def glauber_hamiltonian(v: np.ndarray, p: np.ndarray) -> float:
    return float(np.sum(v * np.expm1(p[None, :] - p[:, None])))


def glauber_gradient(v: np.ndarray, p: np.ndarray) -> np.ndarray:
    W = _tilted_rates(v, p)
    return W.sum(axis=0) - W.sum(axis=1)


def glauber_hessian(v: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Graph Laplacian of the symmetrized tilted rates; singular along the all-ones direction."""
    W = _tilted_rates(v, p)
    S = W + W.T
    return np.diag(S.sum(axis=1)) - S


# =====================================================================
# Hamiltonian and vector field
# =====================================================================

def eval_H(model: ModelSpec, state: StateLike, p) -> float:
    """H(x, p) for the Ehrenfest cube or the Glauber simplex."""
    x = as_state(model, state)
    p = as_momentum(model, p)
    if model.domain == "cube":
        vp, vm = model.rates(x)
        return ehrenfest_hamiltonian(vp, vm, p)
    return glauber_hamiltonian(model.rates(x), p)


def grad_H_p(model: ModelSpec, state: StateLike, p) -> np.ndarray:
    x = as_state(model, state)
    p = as_momentum(model, p)
    if model.domain == "cube":
        vp, vm = model.rates(x)
        return ehrenfest_gradient(vp, vm, p)
    return glauber_gradient(model.rates(x), p)


def vector_field_F(model: ModelSpec, state: StateLike) -> np.ndarray:
    """McKean-Vlasov drift F(x) = H_p(x, 0)."""
    return grad_H_p(model, state, np.zeros(model.d))


# =====================================================================
# Lagrangian
# =====================================================================

def ehrenfest_dual(a, b, v) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorized sup_p [p v - a(e^{2p} - 1) - b(e^{-2p} - 1)] with its maximizer.

    Returns (values, maximizers); a maximizer is NaN where the supremum is infinite or
    approached only as p -> +-inf.
    """
    a, b, v = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(v, dtype=float))
    if np.any(a < 0) or np.any(b < 0):
        raise ModelError("Jump rates in the Legendre transform must be non-negative")
    if np.any(np.isnan(v)) or np.any(np.isnan(a)) or np.any(np.isnan(b)):
        raise ModelError("NaN passed to the Legendre transform")
    value = np.full(a.shape, np.inf)
    p = np.full(a.shape, np.nan)
    finite_v = np.isfinite(v)

    both = (a > 0) & (b > 0) & finite_v
    if np.any(both):
        ab, bb, vb = a[both], b[both], v[both]
        s = np.sqrt(vb * vb + 16.0 * ab * bb)
        # the second form avoids cancellation for negative velocities
        u = np.where(vb >= 0, (vb + s) / (4.0 * ab), 4.0 * bb / np.where(vb >= 0, 1.0, s - vb))
        pb = 0.5 * np.log(u)
        value[both] = pb * vb - ab * (u - 1.0) - bb * (1.0 / u - 1.0)
        p[both] = pb

    down_only = (a == 0) & (b > 0) & finite_v
    zero = down_only & (v == 0)
    value[zero] = b[zero]
    neg = down_only & (v < 0)
    if np.any(neg):
        vn, bn = v[neg], b[neg]
        pn = -0.5 * np.log(-vn / (2.0 * bn))
        value[neg] = pn * vn + vn / 2.0 + bn
        p[neg] = pn

    up_only = (a > 0) & (b == 0) & finite_v
    zero = up_only & (v == 0)
    value[zero] = a[zero]
    pos = up_only & (v > 0)
    if np.any(pos):
        vq, aq = v[pos], a[pos]
        pq = 0.5 * np.log(vq / (2.0 * aq))
        value[pos] = pq * vq - vq / 2.0 + aq
        p[pos] = pq

    frozen = (a == 0) & (b == 0) & (v == 0)
    value[frozen] = 0.0
    p[frozen] = 0.0

    finite = np.isfinite(value)
    value[finite] = np.maximum(value[finite], 0.0)
    return value, p


def legendre_ehrenfest_1coord(a: float, b: float, v: float) -> LagrangianValue:
    """One-coordinate Lagrangian with up rate a and down rate b."""
    value, p = ehrenfest_dual(a, b, v)
    value, p = float(value), float(p)
    if math.isinf(value):
        return LagrangianValue.unbounded()
    return LagrangianValue(value, None if math.isnan(p) else np.array([p]))


def legendre(model: ModelSpec, state: StateLike, velocity) -> LagrangianValue:
    """L(x, v) = sup_p <p, v> - H(x, p)."""
    x = as_state(model, state)
    w = np.asarray(velocity, dtype=float).reshape(-1)
    if w.shape[0] != model.d:
        raise ModelError(f"Velocity has dimension {w.shape[0]}, model '{model.name}' has d={model.d}")
    if model.domain == "cube":
        vp, vm = model.rates(x)
        values, p = ehrenfest_dual(vp, vm, w)
        if np.any(np.isinf(values)):
            return LagrangianValue.unbounded()
        return LagrangianValue(float(values.sum()), None if np.any(np.isnan(p)) else p)
    return glauber_dual(model.rates(x), w)


def glauber_dual(v: np.ndarray, w: np.ndarray) -> LagrangianValue:
    """
    Gauge-fixed concave maximization of <p, w> - H(mu, p) by damped Newton with Armijo
    backtracking. Velocities off the tangent plane sum(w) = 0 cost +inf.
    """
    d = w.shape[0]
    if not np.all(np.isfinite(w)):
        return LagrangianValue.unbounded()
    scale = max(1.0, float(np.max(np.abs(w))), float(np.max(v.sum(axis=1))))
    if abs(w.sum()) > 1e-10 * scale:
        return LagrangianValue.unbounded()
    w = w - w.mean()
    if d == 1:
        return LagrangianValue(0.0, np.zeros(1))

    def objective(q):
        return float(q @ w) - glauber_hamiltonian(v, q)

    p = np.zeros(d)
    J = objective(p)
    grad_tol = settings.NEWTON_GRAD_TOL * scale
    eye = np.eye(d)
    centering = np.ones((d, d)) / d
    g = w - glauber_gradient(v, p)
    gnorm = float(np.max(np.abs(g - g.mean())))
    for iteration in range(1, settings.NEWTON_MAX_ITER + 1):
        g = g - g.mean()
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= grad_tol:
            return LagrangianValue(max(J, 0.0), p)
        system = glauber_hessian(v, p) + centering + HESSIAN_REGULARIZATION * eye
        step = np.linalg.solve(system, g)
        step -= step.mean()
        slope = float(g @ step)
        t = 1.0
        accepted = False
        while t > 1e-16:
            candidate = p + t * step
            with np.errstate(over='ignore', invalid='ignore'):
                J_new = objective(candidate)
            if np.isfinite(J_new) and J_new >= J + ARMIJO_SLOPE * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if gnorm <= math.sqrt(settings.NEWTON_GRAD_TOL) * scale:
                # float precision reached
                return LagrangianValue(max(J, 0.0), p)
            if np.max(np.abs(p)) > 0.5 * UNBOUNDED_MOMENTUM:
                return LagrangianValue.unbounded()
            raise ConvergenceError("Line search failed in the Glauber dual", iteration, gnorm)
        increasing = J_new > J
        p, J = candidate, J_new
        if not increasing and gnorm <= math.sqrt(settings.NEWTON_GRAD_TOL) * scale:
            # objective flat to float precision
            return LagrangianValue(max(J, 0.0), p)
        if increasing and np.max(np.abs(p)) > UNBOUNDED_MOMENTUM and gnorm > math.sqrt(settings.NEWTON_GRAD_TOL) * scale:
            logger.debug(f"Glauber dual unbounded after {iteration} iterations", extra={'extra_data': {'velocity': w.tolist()}})
            return LagrangianValue.unbounded()
        g = w - glauber_gradient(v, p)
    raise ConvergenceError("Glauber dual did not converge", settings.NEWTON_MAX_ITER, gnorm)


# =====================================================================
# Finite-n generators
# =====================================================================

def eval_Hn(model: ModelSpec, n: int, f: Callable[[np.ndarray], float], state: StateLike) -> float:
    """
    H_n f(x) = n^{-1} e^{-n f} A_n e^{n f} at a lattice state. f is any callable on E,
    for instance a GridFunction.
    """
    x = counts_to_state(model, n, snap_to_lattice(model, n, state))
    f0 = float(f(x))
    total = 0.0
    if model.domain == "cube":
        rp, rm = model.finite_rates(n, x)
        for i in range(model.d):
            shift = np.zeros(model.d)
            shift[i] = 2.0 / n
            up_weight, down_weight = 0.5 * (1.0 - x[i]), 0.5 * (1.0 + x[i])
            if up_weight > 0 and rp[i] > 0:
                total += up_weight * rp[i] * math.expm1(n * (float(f(x + shift)) - f0))
            if down_weight > 0 and rm[i] > 0:
                total += down_weight * rm[i] * math.expm1(n * (float(f(x - shift)) - f0))
        return total
    kernel = model.finite_rates(n, x)
    for a in range(model.d):
        if x[a] <= 0:
            continue
        for b in range(model.d):
            if a == b or kernel[a, b] == 0:
                continue
            target = x.copy()
            target[a] -= 1.0 / n
            target[b] += 1.0 / n
            total += x[a] * kernel[a, b] * math.expm1(n * (float(f(target)) - f0))
    return total
