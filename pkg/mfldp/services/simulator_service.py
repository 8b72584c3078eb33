"""
Exact (Gillespie) simulation of the n-particle empirical processes and plain
Monte-Carlo estimators built on it.

Internally states are integer particle counts: the number of +1 spins per
coordinate on the cube, the occupation numbers on the simplex. Real-valued
states are derived from the counts only when a path is recorded.
"""
import concurrent.futures
import logging
import math
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from mfldp.api.models import RateReport
from mfldp.core.config import resolve_threads
from mfldp.core.errors import ModelError
from mfldp.services.action_service import InitialRate, evaluate_action
from mfldp.services.model_service import (
    ModelSpec,
    StateLike,
    Trajectory,
    counts_to_state,
    nearest_lattice_state,
    snap_to_lattice,
)

logger = logging.getLogger(__name__)

RNG_NAME = "numpy.Philox; SeedSequence(seed, spawn_key=(n, replica))"


def make_rng(seed: int, n: int, replica: int) -> np.random.Generator:
    """Independent counter-based stream for replica `replica` of an n-particle run."""
    if seed < 0:
        raise ModelError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(n, replica))))


class SimulatorService:
    """Gillespie sampler for A_n with replica-parallel estimators."""

    def __init__(self, threads: Optional[int] = None):
        self.threads = threads

    # -----------------------------------------------------------------
    # Transition tables
    # -----------------------------------------------------------------

    def _transition_rates(self, model: ModelSpec, n: int, counts: np.ndarray) -> np.ndarray:
        """
        Rates of all transitions out of `counts`. Cube: [up_1..up_d, down_1..down_d];
        simplex: the d x d table a -> b flattened row-major.
        """
        x = counts_to_state(model, n, counts)
        if model.domain == "cube":
            rp, rm = model.finite_rates(n, x)
            up = (n - counts) * rp
            down = counts * rm
            return np.concatenate([up, down])
        return (counts[:, None] * model.finite_rates(n, x)).ravel()

    def _apply(self, model: ModelSpec, counts: np.ndarray, k: int) -> None:
        if model.domain == "cube":
            if k < model.d:
                counts[k] += 1
            else:
                counts[k - model.d] -= 1
            return
        a, b = divmod(k, model.d)
        counts[a] -= 1
        counts[b] += 1

    def _next_jump(self, model: ModelSpec, n: int, counts: np.ndarray, rng: np.random.Generator):
        """(waiting time, transition index), or (inf, -1) when every rate vanishes."""
        rates = self._transition_rates(model, n, counts)
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ModelError(f"Finite-n rates must be finite and non-negative, got {rates.tolist()}")
        cumulative = np.cumsum(rates)
        total = float(cumulative[-1])
        if total <= 0.0:
            return math.inf, -1
        wait = rng.exponential(1.0 / total)
        k = int(np.searchsorted(cumulative, rng.random() * total, side='right'))
        if k >= rates.size:
            k = int(np.flatnonzero(rates > 0)[-1])
        return wait, k

    # -----------------------------------------------------------------
    # Paths
    # -----------------------------------------------------------------

    def simulate_path(self, model: ModelSpec, n: int, start: StateLike, horizon: float, seed: int, replica: int = 0) -> Trajectory:
        """One realization of the empirical process on [0, horizon]; piecewise-constant."""
        if horizon <= 0:
            raise ModelError(f"horizon must be positive, got {horizon}")
        counts = snap_to_lattice(model, n, start).copy()
        rng = make_rng(seed, n, replica)
        times: List[float] = [0.0]
        history: List[np.ndarray] = [counts.copy()]
        t = 0.0
        absorbed = False
        jumps = 0
        while True:
            wait, k = self._next_jump(model, n, counts, rng)
            if k < 0:
                absorbed = True
                break
            t += wait
            if t >= horizon:
                break
            self._apply(model, counts, k)
            jumps += 1
            times.append(t)
            history.append(counts.copy())
        if times[-1] < horizon:
            times.append(horizon)
            history.append(counts.copy())
        states = np.array([counts_to_state(model, n, c) for c in history])
        metadata = {"n": n, "seed": seed, "replica": replica, "rng": RNG_NAME, "jumps": jumps}
        if absorbed:
            metadata["absorbed_at"] = times[-2] if len(times) > 1 else 0.0
            logger.debug(f"Path absorbed at t={metadata['absorbed_at']:.6g} (n={n}, replica={replica})")
        return Trajectory(times, states, kind="piecewise-constant", absorbed=absorbed, metadata=metadata)

    def simulate_endpoint(self, model: ModelSpec, n: int, start: StateLike, horizon: float, seed: int, replica: int = 0) -> np.ndarray:
        """Terminal state only, without recording the path."""
        counts = snap_to_lattice(model, n, start).copy()
        rng = make_rng(seed, n, replica)
        t = 0.0
        while True:
            wait, k = self._next_jump(model, n, counts, rng)
            if k < 0 or t + wait >= horizon:
                return counts_to_state(model, n, counts)
            t += wait
            self._apply(model, counts, k)

    # -----------------------------------------------------------------
    # Tube probabilities
    # -----------------------------------------------------------------

    def _stays_in_tube(self, model: ModelSpec, n: int, counts: np.ndarray, reference: Trajectory, delta: float, rng: np.random.Generator) -> bool:
        """
        Simulate until the reference horizon, aborting as soon as the sup-distance to the
        reference reaches delta. The constant path piece on [s, t] is compared with the
        reference at s, t and every reference breakpoint in between.
        """
        horizon = reference.horizon
        breakpoints = reference.times
        t = 0.0
        while True:
            wait, k = self._next_jump(model, n, counts, rng)
            t_next = min(t + wait, horizon)
            inner = breakpoints[(breakpoints > t) & (breakpoints < t_next)]
            check_times = np.concatenate([[t], inner, [t_next]])
            state = counts_to_state(model, n, counts)
            if np.max(np.abs(reference.at(check_times) - state)) >= delta:
                return False
            if t + wait >= horizon:
                return True
            t += wait
            self._apply(model, counts, k)

    def _replica_hits(self, model: ModelSpec, n: int, start_counts: np.ndarray, reference: Trajectory, delta: float, seed: int, indices: Sequence[int]) -> List[bool]:
        return [self._stays_in_tube(model, n, start_counts.copy(), reference, delta, make_rng(seed, n, r)) for r in indices]

    def estimate_tube_probability(
        self,
        model: ModelSpec,
        n: int,
        reference: Trajectory,
        delta: float,
        replicas: int,
        seed: int,
        threads: Optional[int] = None,
    ) -> float:
        """Fraction of paths started at reference(0), snapped to the lattice, that stay delta-close in sup-norm."""
        if replicas < 1:
            raise ModelError(f"replicas must be at least 1, got {replicas}")
        if delta <= 0:
            raise ModelError(f"delta must be positive, got {delta}")
        if reference.kind != "piecewise-linear":
            raise ModelError("The tube reference must be a piecewise-linear trajectory")
        reference.validate_in(model)
        start_counts = snap_to_lattice(model, n, nearest_lattice_state(model, n, reference.start))
        workers = min(resolve_threads(threads if threads is not None else self.threads), replicas)
        chunks = [list(range(replicas))[w::workers] for w in range(workers)]

        hits = np.zeros(replicas, dtype=bool)
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(self._replica_hits, model, n, start_counts, reference, delta, seed, chunk) for chunk in chunks]
            for chunk, future in zip(chunks, futures):
                hits[chunk] = future.result()
        probability = float(np.count_nonzero(hits)) / replicas
        logger.info(
            f"Tube probability at n={n}: {probability:.6g}",
            extra={'extra_data': {'n': n, 'replicas': replicas, 'delta': delta, 'hits': int(hits.sum()), 'threads': workers}},
        )
        return probability

    def ldp_rate_estimate(
        self,
        model: ModelSpec,
        reference: Trajectory,
        delta: float,
        n_values: Sequence[int],
        replicas: int,
        seed: int,
        I0: InitialRate,
        threads: Optional[int] = None,
    ) -> RateReport:
        """Decay estimates -(1/n) log p_hat against the action of the reference path."""
        n_values = [int(n) for n in n_values]
        if not n_values or any(b <= a for a, b in zip(n_values, n_values[1:])):
            raise ModelError(f"n_values must be non-empty and increasing, got {n_values}")
        reference_action = evaluate_action(model, reference, I0).total
        probabilities, decays, absent = [], [], []
        for n in n_values:
            p_hat = self.estimate_tube_probability(model, n, reference, delta, replicas, seed, threads)
            probabilities.append(p_hat)
            if p_hat > 0:
                decays.append(-math.log(p_hat) / n)
            else:
                decays.append(None)
                absent.append(n)
                logger.warning(f"No replica stayed in the tube at n={n}; decay estimate is absent")
        return RateReport(
            n_values=n_values,
            tube_probabilities=probabilities,
            decay_estimates=decays,
            reference_action=reference_action,
            delta=delta,
            replicas=replicas,
            seed=seed,
            rng=RNG_NAME,
            absent=absent,
        )

    # -----------------------------------------------------------------
    # Finite-n nonlinear semigroup
    # -----------------------------------------------------------------

    def exponential_semigroup_estimate(
        self,
        model: ModelSpec,
        n: int,
        f: Callable[[np.ndarray], float],
        start: StateLike,
        t: float,
        replicas: int,
        seed: int,
        threads: Optional[int] = None,
    ) -> float:
        """Monte-Carlo estimate of V_n(t)f(y) = (1/n) log E[exp(n f(X_n(t))) | X_n(0) = y]."""
        if replicas < 1:
            raise ModelError(f"replicas must be at least 1, got {replicas}")
        if t <= 0:
            raise ModelError(f"t must be positive, got {t}")
        snap_to_lattice(model, n, start)
        workers = min(resolve_threads(threads if threads is not None else self.threads), replicas)

        def endpoint_values(indices):
            return [float(f(self.simulate_endpoint(model, n, start, t, seed, r))) for r in indices]

        chunks = [list(range(replicas))[w::workers] for w in range(workers)]
        values = np.zeros(replicas)
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(endpoint_values, chunk) for chunk in chunks]
            for chunk, future in zip(chunks, futures):
                values[chunk] = future.result()
        return float((logsumexp(n * values) - math.log(replicas)) / n)


simulator_service = SimulatorService()
