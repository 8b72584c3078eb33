"""
State spaces, rate fields and model constructors.

Two families are supported: the generalized Ehrenfest model, whose empirical
magnetization lives in the cube [-1, 1]^d, and Glauber-type mean-field jump
processes, whose empirical measure lives in the probability simplex over d
states. A model is an immutable bundle of rate evaluators: the limiting rates
(v_+^i, v_-^i or v(a, b, .)) and the finite-n rates used by the simulator and by
the discrete generators H_n.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Dict, Iterator, Literal, Optional, Union

import numpy as np

from mfldp.api.models import ModelAudit, ModelConfig, PotentialConfig
from mfldp.core.config import settings
from mfldp.core.errors import ModelError

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], float]
VectorEvaluator = Callable[[np.ndarray], np.ndarray]
FiniteRate = Callable[[int, np.ndarray], np.ndarray]

CUBE_TOL = 1e-9
SIMPLEX_SUM_TOL = 1e-12


# =====================================================================
# State points
# =====================================================================

@dataclass(frozen=True)
class CubePoint:
    """Empirical magnetization x in [-1, 1]^d."""
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise ModelError(f"Cube point must be a non-empty finite vector, got {x.tolist()}")
        if np.any(np.abs(x) > 1.0 + CUBE_TOL):
            raise ModelError(f"Cube point {x.tolist()} lies outside [-1, 1]^d")
        x = np.clip(x, -1.0, 1.0)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def values(self) -> np.ndarray:
        return self.x


@dataclass(frozen=True)
class SimplexPoint:
    """Probability vector mu over {1, ..., d}."""
    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        if mu.size == 0 or not np.all(np.isfinite(mu)):
            raise ModelError(f"Simplex point must be a non-empty finite vector, got {mu.tolist()}")
        if np.any(mu < -CUBE_TOL):
            raise ModelError(f"Simplex point {mu.tolist()} has negative mass")
        if abs(mu.sum() - 1.0) > SIMPLEX_SUM_TOL:
            raise ModelError(f"Simplex point {mu.tolist()} sums to {mu.sum()!r}, not 1")
        mu = np.clip(mu, 0.0, None)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def values(self) -> np.ndarray:
        return self.mu


StateLike = Union[CubePoint, SimplexPoint, np.ndarray, list, tuple]


@dataclass(frozen=True)
class Trajectory:
    """
    Sampled path t -> state. Simulator output is piecewise-constant (one jump per
    step); flows and closed-form paths are piecewise-linear between samples.
    """
    times: np.ndarray
    states: np.ndarray
    kind: Literal["piecewise-constant", "piecewise-linear"] = "piecewise-linear"
    absorbed: bool = False
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        if times.size == 0 or states.shape[0] != times.size:
            raise ModelError(f"Trajectory has {times.size} times and {states.shape[0]} states")
        if np.any(np.diff(times) <= 0):
            raise ModelError("Trajectory times must be strictly increasing")
        if self.kind not in ("piecewise-constant", "piecewise-linear"):
            raise ModelError(f"Unknown trajectory kind '{self.kind}'")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def at(self, t) -> np.ndarray:
        """State(s) at time(s) t, clamped to the sampled window."""
        t = np.asarray(t, dtype=float)
        if self.kind == "piecewise-linear":
            out = np.stack([np.interp(t, self.times, self.states[:, i]) for i in range(self.d)], axis=-1)
        else:
            idx = np.clip(np.searchsorted(self.times, t, side='right') - 1, 0, self.times.size - 1)
            out = self.states[idx]
        return out

    def validate_in(self, model: 'ModelSpec') -> None:
        """Reject trajectories that leave the model's state space."""
        for k, state in enumerate(self.states):
            try:
                as_state(model, state)
            except ModelError as e:
                raise ModelError(f"Trajectory leaves the state space at t={self.times[k]:.6g}: {e}") from e


# =====================================================================
# Potentials
# =====================================================================

@dataclass(frozen=True)
class Potential:
    """A mean-field potential V with its gradient, defined on a neighbourhood of E."""
    kind: str
    value: Evaluator
    gradient: VectorEvaluator
    beta: float = 0.0


def zero_potential() -> Potential:
    return Potential("zero", lambda x: 0.0, lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.0)


def cube_quadratic_potential(beta: float) -> Potential:
    """V(x) = beta |x|^2 / 2 (beta < 0 gives the Curie-Weiss interaction)."""
    return Potential(
        "quadratic",
        lambda x: 0.5 * beta * float(np.dot(x, x)),
        lambda x: beta * np.asarray(x, dtype=float),
        beta,
    )


def simplex_quadratic_potential(beta: float, d: int) -> Potential:
    """V(mu) = beta sum_a (mu(a) - 1/d)^2; for d = 2 and beta < 0 this is -|beta| (mu(1) - mu(2))^2 / 2."""
    center = 1.0 / d

    def value(mu):
        dev = np.asarray(mu, dtype=float) - center
        return beta * float(np.dot(dev, dev))

    def gradient(mu):
        return 2.0 * beta * (np.asarray(mu, dtype=float) - center)

    return Potential("quadratic", value, gradient, beta)


def make_potential(config: PotentialConfig, domain: str, d: int) -> Potential:
    """Build the potential named in a model config."""
    if config.kind == "zero":
        return zero_potential()
    sign = 1.0 if config.kind == "quadratic" else -1.0
    if domain == "cube":
        potential = cube_quadratic_potential(sign * config.beta)
    else:
        potential = simplex_quadratic_potential(sign * config.beta, d)
    return Potential(config.kind, potential.value, potential.gradient, config.beta)


# =====================================================================
# Models
# =====================================================================

def _capped_ratio(v: np.ndarray, weight: np.ndarray, n: int) -> np.ndarray:
    """v / weight truncated at n; a vanishing weight gives the cap."""
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(weight > 0, v / np.where(weight > 0, weight, 1.0), np.inf)
    return np.minimum(ratio, float(n))


@dataclass(frozen=True)
class EhrenfestModel:
    """
    d-dimensional Ehrenfest model on the cube.

    v_plus / v_minus map a state x to the vectors (v_+^i(x))_i and (v_-^i(x))_i;
    rn_plus / rn_minus map (n, x) to the finite-n rates (r_{n,+}^i(x))_i and
    (r_{n,-}^i(x))_i of a single spin.
    """
    d: int
    v_plus: VectorEvaluator
    v_minus: VectorEvaluator
    rn_plus: FiniteRate
    rn_minus: FiniteRate
    name: str = "ehrenfest"
    potential: Optional[Potential] = None
    epsilon: Optional[float] = None

    domain: ClassVar[str] = "cube"

    def rates(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.v_plus(x), dtype=float), np.asarray(self.v_minus(x), dtype=float)

    def finite_rates(self, n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.rn_plus(n, x), dtype=float), np.asarray(self.rn_minus(n, x), dtype=float)

    def point(self, values) -> CubePoint:
        return CubePoint(values)


@dataclass(frozen=True)
class GlauberModel:
    """
    Mean-field jump process of Glauber type on the simplex.

    v maps mu to the d x d matrix v(a, b, mu) with zero diagonal; rn maps (n, mu)
    to the finite-n kernel r_n(a, b, mu).
    """
    d: int
    v: VectorEvaluator
    rn: FiniteRate
    name: str = "glauber"
    potential: Optional[Potential] = None
    base_rates: Optional[np.ndarray] = None

    domain: ClassVar[str] = "simplex"

    def rates(self, mu: np.ndarray) -> np.ndarray:
        rates = np.array(self.v(mu), dtype=float)
        np.fill_diagonal(rates, 0.0)
        return rates

    def finite_rates(self, n: int, mu: np.ndarray) -> np.ndarray:
        kernel = np.array(self.rn(n, mu), dtype=float)
        np.fill_diagonal(kernel, 0.0)
        return kernel

    def point(self, values) -> SimplexPoint:
        return SimplexPoint(values)


ModelSpec = Union[EhrenfestModel, GlauberModel]


def as_state(model: ModelSpec, state: StateLike) -> np.ndarray:
    """Validate a state against the model's space and dimension; returns a read-only array."""
    if isinstance(state, (CubePoint, SimplexPoint)):
        values = state.values
        if (model.domain == "cube") != isinstance(state, CubePoint):
            raise ModelError(f"{type(state).__name__} given to a {model.domain} model")
    else:
        values = model.point(state).values
    if values.shape[0] != model.d:
        raise ModelError(f"State has dimension {values.shape[0]}, model '{model.name}' has d={model.d}")
    return values


# =====================================================================
# Constructors
# =====================================================================

def ehrenfest_model(
    d: int,
    v_plus: VectorEvaluator,
    v_minus: VectorEvaluator,
    rn_plus: Optional[FiniteRate] = None,
    rn_minus: Optional[FiniteRate] = None,
    name: str = "ehrenfest",
) -> EhrenfestModel:
    """
    Generic Ehrenfest model. Without explicit finite-n rates, r_{n,+} = v_+ / ((1-x)/2)
    and r_{n,-} = v_- / ((1+x)/2), each truncated at n.
    """
    if d <= 0:
        raise ModelError(f"Dimension must be positive, got d={d}")
    if rn_plus is None:
        rn_plus = lambda n, x: _capped_ratio(np.asarray(v_plus(x), dtype=float), 0.5 * (1.0 - x), n)
    if rn_minus is None:
        rn_minus = lambda n, x: _capped_ratio(np.asarray(v_minus(x), dtype=float), 0.5 * (1.0 + x), n)
    return EhrenfestModel(d=d, v_plus=v_plus, v_minus=v_minus, rn_plus=rn_plus, rn_minus=rn_minus, name=name)


def ehrenfest_from_potential(V: Evaluator, gradV: VectorEvaluator, d: int, kind: str = "custom", beta: float = 0.0) -> EhrenfestModel:
    """
    Spins flipping under a mean-field potential:
    v_+^i(x) = (1-x_i)/2 exp(-dV/dx_i), v_-^i(x) = (1+x_i)/2 exp(dV/dx_i), with finite-n rates
    r_{n,+-}^i(x) = exp(-n/2 (V(x +- 2e_i/n) - V(x))).
    """
    if d <= 0:
        raise ModelError(f"Dimension must be positive, got d={d}")
    eye = np.eye(d)

    def v_plus(x):
        return 0.5 * (1.0 - x) * np.exp(-np.asarray(gradV(x), dtype=float))

    def v_minus(x):
        return 0.5 * (1.0 + x) * np.exp(np.asarray(gradV(x), dtype=float))

    def tilted(n, x, sign):
        base = V(x)
        shifted = np.array([V(x + sign * (2.0 / n) * eye[i]) for i in range(d)])
        return np.exp(-0.5 * n * (shifted - base))

    return EhrenfestModel(
        d=d,
        v_plus=v_plus,
        v_minus=v_minus,
        rn_plus=lambda n, x: tilted(n, x, 1.0),
        rn_minus=lambda n, x: tilted(n, x, -1.0),
        name="ehrenfest",
        potential=Potential(kind, V, gradV, beta),
    )


def ehrenfest_sqrt_example() -> EhrenfestModel:
    """One-dimensional model with v_+(x) = sqrt(1-x), v_-(x) = sqrt(1+x) and single-spin rates (2/sqrt(1-+x)) ^ n."""

    def v_plus(x):
        return np.sqrt(np.clip(1.0 - x, 0.0, None))

    def v_minus(x):
        return np.sqrt(np.clip(1.0 + x, 0.0, None))

    def truncated(n, gap):
        with np.errstate(divide='ignore'):
            return np.minimum(2.0 / np.sqrt(np.clip(gap, 0.0, None)), float(n))

    return EhrenfestModel(
        d=1,
        v_plus=v_plus,
        v_minus=v_minus,
        rn_plus=lambda n, x: truncated(n, 1.0 - x),
        rn_minus=lambda n, x: truncated(n, 1.0 + x),
        name="sqrt",
    )


def ehrenfest_nonunique_example(epsilon: float = 0.5) -> EhrenfestModel:
    """
    One-dimensional model whose McKean-Vlasov equation reads x' = 2 sqrt(x) near 0.

    On [-epsilon, epsilon]: v_+(x) = 1 + sqrt(max(x, 0)), v_-(x) = 1. Outside, both rates
    are multiplied by a C^1 smoothstep cutoff falling from 1 at +-epsilon to 0 at the
    outward face, so v_+(1) = v_-(-1) = 0 and the rates have no kink at +-epsilon.
    """
    if not 0.0 < epsilon < 1.0:
        raise ModelError(f"epsilon must lie in (0, 1), got {epsilon}")
    width = 1.0 - epsilon

    def cutoff(distance):
        s = np.clip(distance / width, 0.0, 1.0)
        return s * s * (3.0 - 2.0 * s)

    def v_plus(x):
        return (1.0 + np.sqrt(np.maximum(x, 0.0))) * cutoff(1.0 - x)

    def v_minus(x):
        return cutoff(1.0 + x) * np.ones_like(x)

    model = ehrenfest_model(1, v_plus, v_minus, name="nonunique")
    return EhrenfestModel(
        d=1,
        v_plus=model.v_plus,
        v_minus=model.v_minus,
        rn_plus=model.rn_plus,
        rn_minus=model.rn_minus,
        name="nonunique",
        epsilon=epsilon,
    )


def glauber_model(d: int, v: VectorEvaluator, rn: Optional[FiniteRate] = None, name: str = "glauber") -> GlauberModel:
    """Generic Glauber model. Without an explicit kernel, r_n(a, b, mu) = v(a, b, mu) / mu(a), truncated at n."""
    if d <= 0:
        raise ModelError(f"Dimension must be positive, got d={d}")
    if rn is None:
        rn = lambda n, mu: _capped_ratio(np.asarray(v(mu), dtype=float), np.asarray(mu, dtype=float)[:, None], n)
    return GlauberModel(d=d, v=v, rn=rn, name=name)


def glauber_from_potential(r, V: Evaluator, gradV: VectorEvaluator, kind: str = "custom", beta: float = 0.0) -> GlauberModel:
    """
    Glauber dynamics for a Potts-type model:
    v(a, b, mu) = mu(a) r(a, b) exp(dV/dmu_a / 2 - dV/dmu_b / 2), with finite-n kernel
    r_n(a, b, mu) = r(a, b) exp(-n/2 (V(mu - delta_a/n + delta_b/n) - V(mu))).
    """
    base = np.array(r, dtype=float)
    if base.ndim != 2 or base.shape[0] != base.shape[1] or base.shape[0] == 0:
        raise ModelError(f"Base rates must be a non-empty square table, got shape {base.shape}")
    if np.any(base < 0) or not np.all(np.isfinite(base)):
        raise ModelError("Base rates must be finite and non-negative")
    d = base.shape[0]
    np.fill_diagonal(base, 0.0)
    base.setflags(write=False)
    eye = np.eye(d)
    # shifts[a, b] = (delta_b - delta_a)
    shifts = eye[None, :, :] - eye[:, None, :]

    def v(mu):
        mu = np.asarray(mu, dtype=float)
        g = np.asarray(gradV(mu), dtype=float)
        return mu[:, None] * base * np.exp(0.5 * (g[:, None] - g[None, :]))

    def rn(n, mu):
        mu = np.asarray(mu, dtype=float)
        v0 = V(mu)
        shifted = np.array([[V(mu + shifts[a, b] / n) for b in range(d)] for a in range(d)])
        return base * np.exp(-0.5 * n * (shifted - v0))

    return GlauberModel(d=d, v=v, rn=rn, name="potts", potential=Potential(kind, V, gradV, beta), base_rates=base)


def build_model(config: ModelConfig) -> ModelSpec:
    """Turn a validated JSON model config into a model."""
    logger.info(f"Building {config.model} model (preset={config.preset}, d={config.d}, potential={config.potential.kind})")
    if config.preset == "sqrt":
        return ehrenfest_sqrt_example()
    if config.preset == "nonunique":
        return ehrenfest_nonunique_example(0.5 if config.epsilon is None else config.epsilon)
    if config.model == "ehrenfest":
        potential = make_potential(config.potential, "cube", config.d)
        return ehrenfest_from_potential(potential.value, potential.gradient, config.d, potential.kind, potential.beta)
    potential = make_potential(config.potential, "simplex", config.d)
    base_rates = np.ones((config.d, config.d)) if config.base_rates is None else config.base_rates
    return glauber_from_potential(base_rates, potential.value, potential.gradient, potential.kind, potential.beta)


# =====================================================================
# Lattices E_{1,n} and E_{2,n}
# =====================================================================

def snap_to_lattice(model: ModelSpec, n: int, state: StateLike) -> np.ndarray:
    """
    Integer particle counts of a lattice state: the number of +1 spins per coordinate
    (cube) or the occupation numbers (simplex). States further than LATTICE_SNAP_TOL
    from the n-lattice are rejected.
    """
    if n < 1:
        raise ModelError(f"Particle number must be positive, got n={n}")
    values = as_state(model, state)
    raw = n * (values + 1.0) / 2.0 if model.domain == "cube" else n * values
    counts = np.rint(raw).astype(np.int64)
    if np.max(np.abs(counts_to_state(model, n, counts) - values)) > settings.LATTICE_SNAP_TOL:
        raise ModelError(f"State {values.tolist()} is not on the n={n} lattice")
    if model.domain == "simplex" and counts.sum() != n:
        raise ModelError(f"State {values.tolist()} does not carry {n} particles")
    return counts


def on_lattice(model: ModelSpec, n: int, state: StateLike) -> bool:
    try:
        snap_to_lattice(model, n, state)
    except ModelError:
        return False
    return True


def counts_to_state(model: ModelSpec, n: int, counts: np.ndarray) -> np.ndarray:
    if model.domain == "cube":
        return 2.0 * counts / n - 1.0
    return counts / n


def nearest_lattice_state(model: ModelSpec, n: int, state: StateLike) -> np.ndarray:
    """Closest n-lattice state (largest-remainder rounding on the simplex)."""
    values = as_state(model, state)
    if model.domain == "cube":
        return counts_to_state(model, n, np.rint(n * (values + 1.0) / 2.0))
    raw = n * values
    counts = np.floor(raw).astype(np.int64)
    remainder = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts_to_state(model, n, counts)


def lattice_points(model: ModelSpec, n: int) -> Iterator[np.ndarray]:
    """Enumerate E_{1,n} or E_{2,n}."""
    if model.domain == "cube":
        axis = 2.0 * np.arange(n + 1) / n - 1.0
        for combo in itertools.product(axis, repeat=model.d):
            yield np.array(combo)
        return
    for counts in compositions(n, model.d):
        yield np.array(counts, dtype=float) / n


def compositions(n: int, d: int) -> Iterator[tuple]:
    """All d-tuples of non-negative integers summing to n (stars and bars)."""
    for bars in itertools.combinations(range(n + d - 1), d - 1):
        edges = (-1,) + bars + (n + d - 1,)
        yield tuple(edges[k + 1] - edges[k] - 1 for k in range(d))


# =====================================================================
# Diagnostics
# =====================================================================

def rate_convergence_gap(model: ModelSpec, n: int) -> float:
    """
    Sup over the n-lattice of the distance between rescaled finite-n rates and limiting
    rates; the LDP needs this to vanish as n grows.
    """
    gap = 0.0
    for state in lattice_points(model, n):
        if model.domain == "cube":
            vp, vm = model.rates(state)
            rp, rm = model.finite_rates(n, state)
            value = np.sum(np.abs(0.5 * (1 - state) * rp - vp) + np.abs(0.5 * (1 + state) * rm - vm))
        else:
            value = np.max(np.abs(state[:, None] * model.finite_rates(n, state) - model.rates(state)))
        gap = max(gap, float(value))
    return gap


def random_state(model: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    if model.domain == "cube":
        return rng.uniform(-1.0, 1.0, size=model.d)
    return rng.dirichlet(np.ones(model.d))


def random_face_state(model: ModelSpec, rng: np.random.Generator) -> tuple[np.ndarray, int, int]:
    """
    A random point on a face of E, with the face label: (state, coordinate, sign) where
    sign = +1 / -1 marks x_i = +1 / -1 on the cube; on the simplex sign is 0 and mu(coordinate) = 0.
    """
    i = int(rng.integers(model.d))
    if model.domain == "cube":
        state = rng.uniform(-1.0, 1.0, size=model.d)
        sign = 1 if rng.random() < 0.5 else -1
        state[i] = float(sign)
        return state, i, sign
    state = np.zeros(model.d)
    if model.d > 1:
        others = [a for a in range(model.d) if a != i]
        state[others] = rng.dirichlet(np.ones(model.d - 1))
    return state, i, 0


def audit_model(model: ModelSpec, samples: int = 100, seed: int = 0) -> ModelAudit:
    """
    Check the rate conditions of the LDP theorems at random states: finite non-negative
    rates, tangency at faces, positivity in the interior and, when a potential is
    attached, the gradient evaluator against central differences.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    failures = []

    def record(check, ok, detail):
        if not ok:
            failures.append(f"{check}: {detail}")
        return ok

    finite_ok, face_ok, interior_ok, gradient_ok = True, True, True, True
    for _ in range(samples):
        state = random_state(model, rng)
        rates = np.concatenate(model.rates(state)) if model.domain == "cube" else model.rates(state).ravel()
        finite_ok &= record("finite_nonnegative", bool(np.all(np.isfinite(rates)) and np.all(rates >= 0)), f"state={state.tolist()}")

        face, i, sign = random_face_state(model, rng)
        if model.domain == "cube":
            vp, vm = model.rates(face)
            outward = vp[i] if sign > 0 else vm[i]
        else:
            outward = np.max(model.rates(face)[i])
        face_ok &= record("face_tangency", bool(outward == 0.0), f"state={face.tolist()} outward rate={outward!r}")

        if model.domain == "cube":
            vp, vm = model.rates(state)
            inner = np.concatenate([vp[state < 1], vm[state > -1]])
        else:
            v = model.rates(state)
            inner = v[~np.eye(model.d, dtype=bool)]
            if model.base_rates is not None:
                inner = inner[model.base_rates[~np.eye(model.d, dtype=bool)] > 0]
        interior_ok &= record("interior_positivity", bool(np.all(inner > 0)), f"state={state.tolist()}")

        if model.potential is not None:
            step = 1e-6
            eye = np.eye(model.d)
            fd = np.array([(model.potential.value(state + step * eye[k]) - model.potential.value(state - step * eye[k])) / (2 * step) for k in range(model.d)])
            analytic = np.asarray(model.potential.gradient(state), dtype=float)
            gradient_ok &= record("gradient_consistency", bool(np.allclose(fd, analytic, rtol=1e-5, atol=1e-6)), f"state={state.tolist()}")

    checks = {
        "finite_nonnegative": finite_ok,
        "face_tangency": face_ok,
        "interior_positivity": interior_ok,
    }
    if model.potential is not None:
        checks["gradient_consistency"] = gradient_ok
    audit = ModelAudit(model=model.name, samples=samples, checks=checks, failures=failures[:20])
    if failures:
        logger.warning(f"Model audit for '{model.name}' found {len(failures)} failures", extra={'extra_data': {'checks': checks}})
    return audit
