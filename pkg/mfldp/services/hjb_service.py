"""
Grid solvers for the Hamilton-Jacobi resolvent equation f - lambda H(x, grad f) = h.

Two monotone schemes are available. `upwind` (default) replaces every rate term of H
by the exponential of the one-sided difference along its own jump direction, which is
the grid analogue of the finite-n generator H_n. `lax_friedrichs` evaluates H at a
central (least-squares on the simplex) gradient and adds dissipation sized from the
momentum box |p| <= P_MAX.

Built on top: the empirical comparison experiment, the resolvent-iteration
semigroup and a dynamic-programming approximation of the variational semigroup.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator, RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from mfldp.api.models import ComparisonReport, ResolventReport
from mfldp.core.config import settings
from mfldp.core.errors import ConvergenceError, ModelError
from mfldp.services.hamiltonian_service import ehrenfest_dual, glauber_dual
from mfldp.services.model_service import ModelSpec, compositions

logger = logging.getLogger(__name__)


# =====================================================================
# Grids and grid functions
# =====================================================================

@dataclass(frozen=True)
class Grid:
    """
    Nodes of E with their jump neighbours.

    Cube: m points per axis, spacing h = 2/(m-1); neighbors[j, i] = (minus, plus) node
    indices along axis i, -1 when absent. Simplex: the lattice {k/m : sum k = m};
    neighbors[j, a, b] is the node reached by moving mass 1/m from a to b, -1 when absent.
    """
    domain: str
    d: int
    resolution: int
    nodes: np.ndarray
    neighbors: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def spacing(self) -> float:
        return 2.0 / (self.resolution - 1) if self.domain == "cube" else 1.0 / self.resolution

    @property
    def scale(self) -> float:
        """Exponent scale of a unit-momentum jump: 2/h on the cube, m on the simplex."""
        return 2.0 / self.spacing if self.domain == "cube" else float(self.resolution)

    @property
    def axes(self) -> Tuple[np.ndarray, ...]:
        axis = np.linspace(-1.0, 1.0, self.resolution)
        return tuple(axis for _ in range(self.d))

    def edges(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, i, k) for every jump; k is the sign slot (0 down, 1 up) on the cube, the target state on the simplex."""
        src, i, k = np.nonzero(self.neighbors >= 0)
        return src, self.neighbors[src, i, k], i, k


def cube_grid(d: int, m: int) -> Grid:
    if d < 1 or m < 2:
        raise ModelError(f"Cube grid needs d >= 1 and m >= 2, got d={d}, m={m}")
    axis = np.linspace(-1.0, 1.0, m)
    nodes = np.array(list(itertools.product(axis, repeat=d)))
    shape = (m,) * d
    multi = np.array(np.unravel_index(np.arange(nodes.shape[0]), shape)).T
    neighbors = -np.ones((nodes.shape[0], d, 2), dtype=np.int64)
    for i in range(d):
        for slot, step in ((0, -1), (1, 1)):
            moved = multi.copy()
            moved[:, i] += step
            valid = (moved[:, i] >= 0) & (moved[:, i] < m)
            neighbors[valid, i, slot] = np.ravel_multi_index(tuple(moved[valid].T), shape)
    return Grid("cube", d, m, nodes, neighbors)


def simplex_grid(d: int, m: int) -> Grid:
    if d < 1 or m < 1:
        raise ModelError(f"Simplex grid needs d >= 1 and m >= 1, got d={d}, m={m}")
    counts = list(compositions(m, d))
    index = {c: j for j, c in enumerate(counts)}
    neighbors = -np.ones((len(counts), d, d), dtype=np.int64)
    for j, c in enumerate(counts):
        for a in range(d):
            if c[a] == 0:
                continue
            for b in range(d):
                if a == b:
                    continue
                moved = list(c)
                moved[a] -= 1
                moved[b] += 1
                neighbors[j, a, b] = index[tuple(moved)]
    nodes = np.array(counts, dtype=float) / m
    return Grid("simplex", d, m, nodes, neighbors)


def make_grid(model: ModelSpec, m: int) -> Grid:
    return cube_grid(model.d, m) if model.domain == "cube" else simplex_grid(model.d, m)


class _Interpolant:
    """Multilinear interpolation on the cube, barycentric on the simplex."""

    def __init__(self, grid: Grid, values: np.ndarray):
        self.grid = grid
        if grid.domain == "cube":
            self._f = RegularGridInterpolator(grid.axes, values.reshape((grid.resolution,) * grid.d), bounds_error=False, fill_value=None)
        elif grid.d == 1:
            self._f = None
            self._constant = float(values[0])
        elif grid.d == 2:
            order = np.argsort(grid.nodes[:, 0])
            self._x, self._y = grid.nodes[order, 0], values[order]
            self._f = None
        else:
            reduced = grid.nodes[:, :-1]
            self._f = LinearNDInterpolator(reduced, values)
            self._nearest = NearestNDInterpolator(reduced, values)
        self._values = values

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grid = self.grid
        if grid.domain == "cube":
            return self._f(np.clip(points, -1.0, 1.0))
        if grid.d == 1:
            return np.full(points.shape[0], self._constant)
        if grid.d == 2:
            return np.interp(points[:, 0], self._x, self._y)
        reduced = points[:, :-1]
        out = self._f(reduced)
        missing = np.isnan(out)
        if np.any(missing):
            out[missing] = self._nearest(reduced[missing])
        return out


@dataclass(frozen=True)
class GridFunction:
    """Values on the nodes of a grid; callable through interpolation."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.size:
            raise ModelError(f"Grid function has {values.size} values for {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise ModelError("Grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], float]) -> 'GridFunction':
        return cls(grid, np.array([float(fn(x)) for x in grid.nodes]))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> 'GridFunction':
        return cls(grid, np.full(grid.size, float(c)))

    @cached_property
    def _interpolant(self) -> _Interpolant:
        return _Interpolant(self.grid, np.array(self.values))

    def interpolant(self) -> _Interpolant:
        """Built once per instance; values are read-only."""
        return self._interpolant

    def __call__(self, state) -> float:
        return float(self._interpolant(np.asarray(state, dtype=float))[0])

    def sup_distance(self, other: 'GridFunction') -> float:
        return float(np.max(np.abs(self.values - other.values)))


# =====================================================================
# Rates on nodes and discrete Hamiltonians
# =====================================================================

def node_rates(model: ModelSpec, grid: Grid):
    """(v_+, v_-) as (N, d) arrays on the cube, v as an (N, d, d) array on the simplex."""
    if model.d != grid.d or model.domain != grid.domain:
        raise ModelError(f"Grid ({grid.domain}, d={grid.d}) does not match model '{model.name}'")
    if model.domain == "cube":
        pairs = [model.rates(x) for x in grid.nodes]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
    return np.array([model.rates(mu) for mu in grid.nodes])


def _nodal_hamiltonian(domain: str, rates, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """H(x_j, p_j) and H_p(x_j, p_j) for all nodes at once."""
    if domain == "cube":
        vp, vm = rates
        up, down = np.exp(2.0 * p), np.exp(-2.0 * p)
        return np.sum(vp * (up - 1.0) + vm * (down - 1.0), axis=1), 2.0 * vp * up - 2.0 * vm * down
    diff = p[:, None, :] - p[:, :, None]
    W = rates * np.exp(diff)
    return np.sum(rates * np.expm1(diff), axis=(1, 2)), W.sum(axis=1) - W.sum(axis=2)


class UpwindScheme:
    """H^(f)(x) = sum over jumps x -> y of rate * (exp(s (f(y) - f(x))) - 1)."""
    name = "upwind"

    def __init__(self, model: ModelSpec, grid: Grid):
        rates = node_rates(model, grid)
        src, dst, i, k = grid.edges()
        if grid.domain == "cube":
            vp, vm = rates
            weights = np.where(k == 1, vp[src, i], vm[src, i])
        else:
            weights = rates[src, i, k]
        keep = weights > 0
        self.src, self.dst, self.weights = src[keep], dst[keep], weights[keep]
        self.scale = grid.scale
        self.size = grid.size

    def apply(self, f: np.ndarray) -> np.ndarray:
        terms = self.weights * np.expm1(self.scale * (f[self.dst] - f[self.src]))
        return np.bincount(self.src, weights=terms, minlength=self.size)

    def jacobian(self, f: np.ndarray) -> sparse.csr_matrix:
        slope = self.weights * self.scale * np.exp(self.scale * (f[self.dst] - f[self.src]))
        off = sparse.coo_matrix((slope, (self.src, self.dst)), shape=(self.size, self.size))
        diagonal = sparse.diags(-np.bincount(self.src, weights=slope, minlength=self.size))
        return (off.tocsr() + diagonal).tocsr()


class LaxFriedrichsScheme:
    """
    H(x, D f) + sigma(x) * sum over directions of (D+ f - D- f)/2, with D the central
    difference (one-sided where a neighbour is missing, which removes the dissipation
    along that direction). On the simplex the gradient is the gauge-fixed least-squares
    fit to the directional differences along delta_b - delta_a.
    """
    name = "lax_friedrichs"

    def __init__(self, model: ModelSpec, grid: Grid, p_max: float):
        self.domain = grid.domain
        self.rates = node_rates(model, grid)
        self.size = grid.size
        N, d = grid.size, grid.d
        inv = grid.scale / 2.0 if grid.domain == "cube" else float(grid.resolution)
        # inv is 1/h along one grid direction

        def difference_maps(plus_idx, minus_idx):
            """Sparse central-or-one-sided derivative and second-difference rows for one direction."""
            has_plus, has_minus = plus_idx >= 0, minus_idx >= 0
            both = has_plus & has_minus
            data_r, data_c, data_v = [], [], []
            diss_r, diss_c, diss_v = [], [], []
            for j in range(N):
                if both[j]:
                    data_r += [j, j]
                    data_c += [plus_idx[j], minus_idx[j]]
                    data_v += [inv / 2.0, -inv / 2.0]
                    diss_r += [j, j, j]
                    diss_c += [plus_idx[j], j, minus_idx[j]]
                    diss_v += [inv / 2.0, -inv, inv / 2.0]
                elif has_plus[j]:
                    data_r += [j, j]
                    data_c += [plus_idx[j], j]
                    data_v += [inv, -inv]
                elif has_minus[j]:
                    data_r += [j, j]
                    data_c += [j, minus_idx[j]]
                    data_v += [inv, -inv]
            D = sparse.csr_matrix((data_v, (data_r, data_c)), shape=(N, N))
            C = sparse.csr_matrix((diss_v, (diss_r, diss_c)), shape=(N, N))
            return D, C

        dissipation = sparse.csr_matrix((N, N))
        if grid.domain == "cube":
            vp, vm = self.rates
            self.gradient_maps = []
            for i in range(d):
                D, C = difference_maps(grid.neighbors[:, i, 1], grid.neighbors[:, i, 0])
                self.gradient_maps.append(D)
                dissipation = dissipation + C
            self.sigma = 2.0 * math.exp(2.0 * p_max) * np.max(vp + vm, axis=1)
        else:
            zero = sparse.csr_matrix((N, N))
            maps = [zero.copy() for _ in range(d)]
            for a in range(d):
                for b in range(a + 1, d):
                    D, C = difference_maps(grid.neighbors[:, a, b], grid.neighbors[:, b, a])
                    maps[b] = maps[b] + D / d
                    maps[a] = maps[a] - D / d
                    dissipation = dissipation + C
            self.gradient_maps = maps
            v = self.rates
            flux = v.sum(axis=1) + v.sum(axis=2)
            self.sigma = (2.0 / d) * math.exp(2.0 * p_max) * np.max(flux, axis=1)
        self.dissipation = dissipation.tocsr()

    def _momenta(self, f: np.ndarray) -> np.ndarray:
        return np.stack([D @ f for D in self.gradient_maps], axis=1)

    def apply(self, f: np.ndarray) -> np.ndarray:
        H, _ = _nodal_hamiltonian(self.domain, self.rates, self._momenta(f))
        return H + self.sigma * (self.dissipation @ f)

    def jacobian(self, f: np.ndarray) -> sparse.csr_matrix:
        _, grad = _nodal_hamiltonian(self.domain, self.rates, self._momenta(f))
        J = sparse.diags(self.sigma) @ self.dissipation
        for c, D in enumerate(self.gradient_maps):
            J = J + sparse.diags(grad[:, c]) @ D
        return J.tocsr()


# =====================================================================
# Service
# =====================================================================

@dataclass
class ResolventSolution:
    f: GridFunction
    report: ResolventReport


class HJBService:
    """Resolvent solver and semigroup approximations on grids."""

    def scheme(self, model: ModelSpec, grid: Grid, scheme: Optional[str] = None):
        scheme = scheme or settings.HJB_SCHEME
        if scheme == "upwind":
            return UpwindScheme(model, grid)
        if scheme == "lax_friedrichs":
            return LaxFriedrichsScheme(model, grid, settings.P_MAX)
        raise ModelError(f"Unknown scheme '{scheme}'")

    def numerical_hamiltonian(self, model: ModelSpec, grid: Grid, f: GridFunction, node: int, scheme: Optional[str] = None) -> float:
        """Discrete H(x, grad f(x)) at one node."""
        if not 0 <= node < grid.size:
            raise ModelError(f"Node {node} outside grid of {grid.size} nodes")
        return float(self.scheme(model, grid, scheme).apply(np.array(f.values))[node])

    def solve_resolvent(
        self,
        model: ModelSpec,
        grid: Grid,
        lam: float,
        h: GridFunction,
        init: Optional[GridFunction] = None,
        scheme: Optional[str] = None,
        method: str = "newton",
        damping: Optional[float] = None,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
        operator=None,
    ) -> ResolventSolution:
        """
        Solve f - lam H^(f) = h. Newton: the update is the solution of the linearised
        system (I - lam H^'(f)) delta = -(f - lam H^(f) - h); picard: delta = h + lam H^(f) - f.
        Steps are scaled by a damping factor that halves whenever the residual grows;
        Newton doubles it back toward 1 after accepted steps.
        """
        if lam <= 0:
            raise ModelError(f"lambda must be positive, got {lam}")
        if method not in ("newton", "picard"):
            raise ModelError(f"Unknown resolvent method '{method}'")
        op = operator if operator is not None else self.scheme(model, grid, scheme)
        tol = settings.RESOLVENT_TOL if tol is None else tol
        max_iter = settings.RESOLVENT_MAX_ITER if max_iter is None else max_iter
        omega = settings.RESOLVENT_DAMPING if damping is None else damping
        if not 0.0 < omega <= 1.0:
            raise ModelError(f"damping must lie in (0, 1], got {omega}")
        target = np.array(h.values)
        f = np.array(init.values if init is not None else h.values, dtype=float)
        identity = sparse.identity(grid.size, format='csr')

        def residual_of(values):
            with np.errstate(over='ignore', invalid='ignore'):
                r = values - lam * op.apply(values) - target
            norm = float(np.max(np.abs(r)))
            return r, (norm if np.isfinite(norm) else math.inf)

        r, rnorm = residual_of(f)
        update = math.inf
        for iteration in range(1, max_iter + 1):
            if method == "newton":
                with np.errstate(over='ignore', invalid='ignore'):
                    system = identity - lam * op.jacobian(f)
                delta = -spsolve(system.tocsc(), r)
            else:
                delta = -r
            if not np.all(np.isfinite(delta)):
                raise ConvergenceError("Resolvent update is not finite", iteration, rnorm)
            candidate = f + omega * delta
            r_new, rnorm_new = residual_of(candidate)
            if rnorm_new > rnorm and rnorm_new > 0.1 * tol:
                omega *= 0.5
                if omega < 1e-12:
                    raise ConvergenceError("Resolvent damping collapsed", iteration, rnorm)
                continue
            update = float(np.max(np.abs(omega * delta)))
            f, r, rnorm = candidate, r_new, rnorm_new
            if method == "newton":
                omega = min(1.0, 2.0 * omega)
            if update < tol:
                report = ResolventReport(
                    scheme=getattr(op, "name", "custom"),
                    method=method,
                    iterations=iteration,
                    final_update=update,
                    residual=rnorm,
                    damping=omega,
                    converged=True,
                )
                logger.debug(f"Resolvent converged in {iteration} iterations", extra={'extra_data': report.model_dump()})
                return ResolventSolution(GridFunction(grid, f), report)
        raise ConvergenceError("Resolvent iteration did not converge", max_iter, rnorm)

    def comparison_experiment(
        self,
        model: ModelSpec,
        lam: float,
        h: Callable[[np.ndarray], float],
        resolutions: Sequence[int],
        inits: Sequence[Callable[[np.ndarray], float]],
        scheme: Optional[str] = None,
        method: str = "newton",
    ) -> ComparisonReport:
        """
        Solve the resolvent equation from every initialization at every resolution. h and
        the initializations are evaluators on E, sampled on each grid.
        """
        if len(inits) < 2:
            raise ModelError("The comparison experiment needs at least two initializations")
        pairwise: List[float] = []
        gaps: List[Optional[float]] = []
        iterations: List[List[int]] = []
        previous: Optional[GridFunction] = None
        for m in resolutions:
            grid = make_grid(model, m)
            op = self.scheme(model, grid, scheme)
            h_grid = GridFunction.from_callable(grid, h)
            solutions = []
            for init in inits:
                sol = self.solve_resolvent(model, grid, lam, h_grid, GridFunction.from_callable(grid, init), method=method, operator=op)
                solutions.append(sol)
            iterations.append([s.report.iterations for s in solutions])
            diffs = [a.f.sup_distance(b.f) for a, b in itertools.combinations(solutions, 2)]
            pairwise.append(max(diffs))
            if previous is None:
                gaps.append(None)
            else:
                coarse_nodes = previous.grid.nodes
                fine_at_coarse = solutions[0].f.interpolant()(coarse_nodes)
                gaps.append(float(np.max(np.abs(fine_at_coarse - previous.values))))
            previous = solutions[0].f
            logger.info(f"Comparison at m={m}: max pairwise difference {pairwise[-1]:.3e}", extra={'extra_data': {'m': m, 'iterations': iterations[-1]}})
        return ComparisonReport(
            lam=lam,
            scheme=scheme or settings.HJB_SCHEME,
            resolutions=list(resolutions),
            max_pairwise_differences=pairwise,
            refinement_gaps=gaps,
            iterations=iterations,
        )

    def semigroup_via_resolvent(self, model: ModelSpec, grid: Grid, f0: GridFunction, t: float, steps: int, scheme: Optional[str] = None) -> GridFunction:
        """(R(t/steps))^steps f0."""
        if t <= 0 or steps < 1:
            raise ModelError(f"Need t > 0 and steps >= 1, got t={t}, steps={steps}")
        op = self.scheme(model, grid, scheme)
        current = f0
        for _ in range(steps):
            current = self.solve_resolvent(model, grid, t / steps, current, operator=op).f
        return current

    # -----------------------------------------------------------------
    # Variational semigroup by dynamic programming
    # -----------------------------------------------------------------

    def momentum_box(self, grid: Grid, f0: GridFunction, p_box: Optional[float] = None) -> float:
        """min(P_MAX, 2 Lip(f0) + 1) with Lip estimated from neighbour differences."""
        if p_box is not None:
            return float(p_box)
        src, dst, _, _ = grid.edges()
        if src.size == 0:
            lip = 0.0
        else:
            step = np.max(np.abs(grid.nodes[dst] - grid.nodes[src]), axis=1)
            lip = float(np.max(np.abs(f0.values[dst] - f0.values[src]) / step))
        return min(settings.P_MAX, 2.0 * lip + 1.0)

    def _controls(self, model: ModelSpec, grid: Grid, velocity_samples: int, p_box: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Velocities v = H_p(x, p) over a momentum grid and their costs p.v - H(x, p) (the
        Fenchel equality), plus the zero velocity with cost L(x, 0). Shapes (N, J, d) and (N, J).
        """
        axis = np.linspace(-p_box, p_box, 2 * velocity_samples + 1)
        free = grid.d if grid.domain == "cube" else grid.d - 1
        momenta = np.array(list(itertools.product(axis, repeat=free))) if free > 0 else np.zeros((1, 0))
        if grid.domain == "simplex":
            momenta = np.hstack([momenta, np.zeros((momenta.shape[0], 1))])
        rates = node_rates(model, grid)
        N, J = grid.size, momenta.shape[0]
        velocities = np.empty((N, J + 1, grid.d))
        costs = np.empty((N, J + 1))
        for j in range(J):
            p = np.broadcast_to(momenta[j], (N, grid.d))
            H, grad = _nodal_hamiltonian(grid.domain, rates, p)
            velocities[:, j] = grad
            costs[:, j] = np.maximum(grad @ momenta[j] - H, 0.0)
        velocities[:, J] = 0.0
        if grid.domain == "cube":
            vp, vm = rates
            still, _ = ehrenfest_dual(vp, vm, np.zeros_like(vp))
            costs[:, J] = still.sum(axis=1)
        else:
            costs[:, J] = [glauber_dual(rates[j], np.zeros(grid.d)).value for j in range(N)]
        return velocities, costs

    def nisio_value_dp(
        self,
        model: ModelSpec,
        grid: Grid,
        f0: GridFunction,
        t: float,
        time_steps: int,
        velocity_samples: int,
        p_box: Optional[float] = None,
    ) -> GridFunction:
        """
        Backward dynamic programming for sup over paths of f0(gamma(t)) - int L dt:
        value(x) <- max over controls of value(x + dt v) - dt L(x, v).
        """
        if t <= 0 or time_steps < 1 or velocity_samples < 1:
            raise ModelError(f"Need t > 0, time_steps >= 1, velocity_samples >= 1; got {t}, {time_steps}, {velocity_samples}")
        dt = t / time_steps
        box = self.momentum_box(grid, f0, p_box)
        velocities, costs = self._controls(model, grid, velocity_samples, box)
        finite = np.isfinite(costs)
        targets = grid.nodes[:, None, :] + dt * velocities
        if grid.domain == "cube":
            targets = np.clip(targets, -1.0, 1.0)
        else:
            targets = np.clip(targets, 0.0, None)
            targets /= targets.sum(axis=2, keepdims=True)
        flat_targets = targets.reshape(-1, grid.d)
        running = np.where(finite, dt * np.where(finite, costs, 0.0), np.inf)

        values = np.array(f0.values)
        for _ in range(time_steps):
            ahead = _Interpolant(grid, values)(flat_targets).reshape(costs.shape)
            values = np.max(ahead - running, axis=1)
        logger.info(
            f"Nisio DP finished: t={t}, {time_steps} steps, {costs.shape[1]} controls per node",
            extra={'extra_data': {'p_box': box, 'nodes': grid.size}},
        )
        return GridFunction(grid, values)


hjb_service = HJBService()
