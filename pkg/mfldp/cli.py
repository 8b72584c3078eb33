"""
Command-line entry point.

Every subcommand validates its inputs before computing, writes its outputs
atomically and prints a JSON run manifest on stdout. Exit codes: 0 on success,
1 for invalid input (usage, config, state or file errors), 2 for numerical
failures.
"""
import argparse
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from mfldp import __version__
from mfldp.api.models import FlowConfig, ModelConfig, RunConfig, RunManifest
from mfldp.core.config import resolve_threads
from mfldp.core.errors import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, MFLDPError, ModelError, NumericalError
from mfldp.core.logging_config import setup_logging
from mfldp.services.action_service import evaluate_action, gibbs_initial_rate, point_mass
from mfldp.services.flow_service import integrate_mkv, mkv_branch_solution
from mfldp.services.hamiltonian_service import eval_H, grad_H_p, legendre
from mfldp.services.hjb_service import GridFunction, hjb_service, make_grid
from mfldp.services.lyapunov_service import lyapunov_check
from mfldp.services.model_service import build_model
from mfldp.services.simulator_service import simulator_service
from mfldp.storage import repository

logger = logging.getLogger(__name__)


class UsageError(MFLDPError):
    """Malformed command line."""


class _Parser(argparse.ArgumentParser):
    """argparse parser whose errors exit with the validation code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# =====================================================================
# Input helpers
# =====================================================================

def parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ModelError(f"Expected comma-separated numbers, got '{text}'") from e


def parse_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ModelError(f"Expected comma-separated integers, got '{text}'") from e


def parse_function(spec: str, d: int) -> Callable[[np.ndarray], float]:
    """
    Smooth test functions on E: const:c, linear:q_1,...,q_d, quadratic:a (a |x|^2),
    sin:k (sum_i sin(k x_i)).
    """
    kind, _, arg = spec.partition(":")
    if kind == "const":
        c = float(arg or 0.0)
        return lambda x: c
    if kind == "linear":
        q = np.array(parse_floats(arg))
        if q.size != d:
            raise ModelError(f"linear:{arg} needs {d} coefficients")
        return lambda x: float(np.dot(q, x))
    if kind == "quadratic":
        a = float(arg or 1.0)
        return lambda x: a * float(np.dot(x, x))
    if kind == "sin":
        k = float(arg or 1.0)
        return lambda x: float(np.sum(np.sin(k * np.asarray(x, dtype=float))))
    raise ModelError(f"Unknown function '{spec}'; use const:, linear:, quadratic: or sin:")


def load_model_config(path: str) -> ModelConfig:
    """Read and validate a JSON model config; syntax errors are reported with line and column."""
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as e:
        raise ModelError(f"Cannot read config {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    return ModelConfig.model_validate(data)


def _embedded(run_config: RunConfig) -> Dict[str, Any]:
    """The resolved config embedded in outputs; independent of where outputs are written."""
    return run_config.model_dump(mode="json", exclude={"output_path"})


def _sibling(path: str, suffix: str) -> str:
    return str(Path(path).with_suffix(suffix))


def _model_from_trajectory(args, embedded: Optional[Dict[str, Any]]) -> ModelConfig:
    if args.config:
        return load_model_config(args.config)
    if not embedded or not embedded.get("model"):
        raise ModelError(f"{args.trajectory} embeds no model config; pass --config")
    return ModelConfig.model_validate(embedded["model"])


# =====================================================================
# Subcommands
# =====================================================================

def cmd_simulate(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    run_config = RunConfig(
        command="simulate",
        model=model_cfg,
        params={"n": args.n, "start": parse_floats(args.start), "horizon": args.horizon},
        seed=args.seed,
        output_path=args.output,
    )
    model = build_model(model_cfg)
    traj = simulator_service.simulate_path(model, args.n, run_config.params["start"], args.horizon, args.seed)
    repository.write_trajectory_csv(args.output, traj, _embedded(run_config))
    return run_config, [args.output]


def cmd_flow(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    cfg = FlowConfig(dt=args.dt, horizon=args.horizon, method=args.method, boundary_projection=not args.no_projection)
    params: Dict[str, Any] = {"flow": cfg.model_dump()}
    if args.branch is not None:
        params["branch"] = args.branch
    else:
        if args.start is None:
            raise UsageError("flow: --start is required unless --branch is given")
        params["start"] = parse_floats(args.start)
    run_config = RunConfig(command="flow", model=model_cfg, params=params, seed=None, output_path=args.output)
    model = build_model(model_cfg)
    if args.branch is not None:
        traj = mkv_branch_solution(model, args.branch, cfg)
    else:
        traj = integrate_mkv(model, params["start"], cfg)
    repository.write_trajectory_csv(args.output, traj, _embedded(run_config))
    return run_config, [args.output]


def cmd_action(args) -> Tuple[RunConfig, List[str]]:
    traj, embedded = repository.read_trajectory_csv(args.trajectory)
    model_cfg = _model_from_trajectory(args, embedded)
    run_config = RunConfig(command="action", model=model_cfg, params={"trajectory": args.trajectory, "i0": args.i0}, output_path=args.output)
    model = build_model(model_cfg)
    I0 = gibbs_initial_rate(model) if args.i0 == "gibbs" else point_mass(traj.start)
    result = evaluate_action(model, traj, I0)
    payload = result.to_dict()
    payload["config"] = _embedded(run_config)
    repository.write_json(args.output, payload)
    return run_config, [args.output]


def cmd_rate_estimate(args) -> Tuple[RunConfig, List[str]]:
    reference, embedded = repository.read_trajectory_csv(args.trajectory)
    model_cfg = _model_from_trajectory(args, embedded)
    params = {
        "trajectory": args.trajectory,
        "delta": args.delta,
        "n_values": parse_ints(args.n_values),
        "replicas": args.replicas,
    }
    run_config = RunConfig(command="rate-estimate", model=model_cfg, params=params, seed=args.seed, output_path=args.output)
    model = build_model(model_cfg)
    report = simulator_service.ldp_rate_estimate(
        model, reference, args.delta, params["n_values"], args.replicas, args.seed, point_mass(reference.start), threads=args.threads
    )
    json_path = _sibling(args.output, ".json")
    repository.write_json(json_path, {"report": report.model_dump(mode="json"), "config": _embedded(run_config)})
    repository.write_rate_summary_csv(args.output, report, _embedded(run_config))
    return run_config, [args.output, json_path]


def cmd_resolvent(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    params = {"m": args.m, "lam": args.lam, "h": args.h, "scheme": args.scheme, "method": args.method}
    run_config = RunConfig(command="resolvent", model=model_cfg, params=params, output_path=args.output)
    model = build_model(model_cfg)
    grid = make_grid(model, args.m)
    h = GridFunction.from_callable(grid, parse_function(args.h, model.d))
    solution = hjb_service.solve_resolvent(model, grid, args.lam, h, scheme=args.scheme, method=args.method)
    json_path = _sibling(args.output, ".json")
    repository.write_grid_function_csv(args.output, grid.nodes, solution.f.values, _embedded(run_config))
    repository.write_json(json_path, {"report": solution.report.model_dump(mode="json"), "config": _embedded(run_config)})
    return run_config, [args.output, json_path]


def cmd_comparison(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    inits = [s for s in args.inits.split(";") if s.strip()]
    params = {"lam": args.lam, "h": args.h, "resolutions": parse_ints(args.resolutions), "inits": inits, "scheme": args.scheme}
    run_config = RunConfig(command="comparison", model=model_cfg, params=params, output_path=args.output)
    model = build_model(model_cfg)
    h = parse_function(args.h, model.d)
    init_fns = [h if s == "h" else parse_function(s, model.d) for s in inits]
    report = hjb_service.comparison_experiment(model, args.lam, h, params["resolutions"], init_fns, scheme=args.scheme)
    repository.write_json(args.output, {"report": report.model_dump(mode="json"), "config": _embedded(run_config)})
    return run_config, [args.output]


def cmd_nisio(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    params = {
        "m": args.m,
        "t": args.t,
        "f0": args.f0,
        "time_steps": args.time_steps,
        "velocity_samples": args.velocity_samples,
        "p_box": args.p_box,
    }
    run_config = RunConfig(command="nisio", model=model_cfg, params=params, output_path=args.output)
    model = build_model(model_cfg)
    grid = make_grid(model, args.m)
    f0 = GridFunction.from_callable(grid, parse_function(args.f0, model.d))
    value = hjb_service.nisio_value_dp(model, grid, f0, args.t, args.time_steps, args.velocity_samples, args.p_box)
    repository.write_grid_function_csv(args.output, grid.nodes, value.values, _embedded(run_config))
    return run_config, [args.output]


def cmd_lyapunov(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    cfg = FlowConfig(dt=args.dt, horizon=args.horizon, method=args.method)
    params = {"start": parse_floats(args.start), "flow": cfg.model_dump(), "tolerance": args.tolerance}
    run_config = RunConfig(command="lyapunov", model=model_cfg, params=params, output_path=args.output)
    model = build_model(model_cfg)
    report = lyapunov_check(model, params["start"], cfg, args.tolerance)
    json_path = _sibling(args.output, ".json")
    repository.write_series_csv(args.output, "lyapunov.v1", {"t": report.times, "I0": report.values}, _embedded(run_config))
    verdict = report.model_dump(mode="json", exclude={"times", "values"})
    repository.write_json(json_path, {"verdict": verdict, "config": _embedded(run_config)})
    return run_config, [args.output, json_path]


def cmd_hamiltonian(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    state, p = parse_floats(args.state), parse_floats(args.p)
    run_config = RunConfig(command="hamiltonian", model=model_cfg, params={"state": state, "p": p}, output_path=args.output)
    model = build_model(model_cfg)
    value = eval_H(model, state, p)
    gradient = grad_H_p(model, state, p)
    d = model.d
    columns = {f"x_{i + 1}": [state[i]] for i in range(d)}
    columns.update({f"p_{i + 1}": [p[i]] for i in range(d)})
    columns["H"] = [value]
    columns.update({f"Hp_{i + 1}": [gradient[i]] for i in range(d)})
    repository.write_series_csv(args.output, "hamiltonian.v1", columns, _embedded(run_config))
    return run_config, [args.output]


def cmd_lagrangian(args) -> Tuple[RunConfig, List[str]]:
    model_cfg = load_model_config(args.config)
    state, velocity = parse_floats(args.state), parse_floats(args.velocity)
    run_config = RunConfig(command="lagrangian", model=model_cfg, params={"state": state, "velocity": velocity}, output_path=args.output)
    model = build_model(model_cfg)
    result = legendre(model, state, velocity)
    d = model.d
    columns = {f"x_{i + 1}": [state[i]] for i in range(d)}
    columns.update({f"v_{i + 1}": [velocity[i]] for i in range(d)})
    columns["L"] = [result.value]
    repository.write_series_csv(args.output, "lagrangian.v1", columns, _embedded(run_config))
    return run_config, [args.output]


COMMANDS: Dict[str, Callable] = {
    "simulate": cmd_simulate,
    "flow": cmd_flow,
    "action": cmd_action,
    "rate-estimate": cmd_rate_estimate,
    "resolvent": cmd_resolvent,
    "comparison": cmd_comparison,
    "nisio": cmd_nisio,
    "lyapunov": cmd_lyapunov,
    "hamiltonian": cmd_hamiltonian,
    "lagrangian": cmd_lagrangian,
}


# =====================================================================
# Parser
# =====================================================================

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--output", required=True, help="Output file (written atomically)")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (default: LDP_THREADS or all cores)")
    common.add_argument("--log-level", default=None, help="Logging level (default: LOG_LEVEL setting)")

    parser = _Parser(prog="mfldp", description="Path-space large deviations of mean-field jump processes")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", parents=[common], help="Gillespie path of the n-particle process")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--start", required=True, help="Comma-separated lattice state")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("flow", parents=[common], help="McKean-Vlasov flow (or a closed-form branch)")
    p.add_argument("--config", required=True)
    p.add_argument("--start")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--method", choices=["rk4", "euler"], default="rk4")
    p.add_argument("--no-projection", action="store_true")
    p.add_argument("--branch", type=float, default=None, help="Branch time a of the non-uniqueness example")

    p = sub.add_parser("action", parents=[common], help="Rate functional of a trajectory CSV")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--config", default=None, help="Model config (default: the one embedded in the trajectory)")
    p.add_argument("--i0", choices=["point", "gibbs"], default="point")

    p = sub.add_parser("rate-estimate", parents=[common], help="Monte-Carlo tube probabilities against the action")
    p.add_argument("--trajectory", required=True, help="Piecewise-linear reference path")
    p.add_argument("--config", default=None)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--n-values", required=True, help="Comma-separated increasing particle numbers")
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("resolvent", parents=[common], help="Solve f - lam H(x, grad f) = h on a grid")
    p.add_argument("--config", required=True)
    p.add_argument("--m", type=int, required=True, help="Grid resolution")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--h", default="const:0")
    p.add_argument("--scheme", choices=["upwind", "lax_friedrichs"], default=None)
    p.add_argument("--method", choices=["newton", "picard"], default="newton")

    p = sub.add_parser("comparison", parents=[common], help="Empirical uniqueness study across resolutions")
    p.add_argument("--config", required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--h", default="sin:1")
    p.add_argument("--resolutions", default="33,65,129")
    p.add_argument("--inits", default="const:-1;const:1;h", help="';'-separated initializations ('h' for h itself)")
    p.add_argument("--scheme", choices=["upwind", "lax_friedrichs"], default=None)

    p = sub.add_parser("nisio", parents=[common], help="Dynamic-programming variational semigroup")
    p.add_argument("--config", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--f0", default="sin:1")
    p.add_argument("--time-steps", type=int, default=50)
    p.add_argument("--velocity-samples", type=int, default=20)
    p.add_argument("--p-box", type=float, default=None)

    p = sub.add_parser("lyapunov", parents=[common], help="I_0 along a McKean-Vlasov flow")
    p.add_argument("--config", required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--method", choices=["rk4", "euler"], default="rk4")
    p.add_argument("--tolerance", type=float, default=None)

    p = sub.add_parser("hamiltonian", parents=[common], help="H and H_p at one (state, p)")
    p.add_argument("action", choices=["eval"])
    p.add_argument("--config", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--p", required=True)

    p = sub.add_parser("lagrangian", parents=[common], help="L at one (state, velocity)")
    p.add_argument("action", choices=["eval"])
    p.add_argument("--config", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--velocity", required=True)

    return parser


# =====================================================================
# Entry point
# =====================================================================

def _versions() -> Dict[str, str]:
    versions = {"python": platform.python_version(), "mfldp": __version__}
    for package in ("numpy", "scipy", "pydantic"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one subcommand, print the manifest; returns the exit code."""
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        # --help
        return EXIT_OK if e.code in (None, 0) else EXIT_VALIDATION

    setup_logging(args.log_level)
    threads = resolve_threads(args.threads)
    args.threads = threads
    try:
        run_config, outputs = COMMANDS[args.command](args)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_VALIDATION
    except ValidationError as e:
        logger.error(f"Invalid configuration for '{args.command}': {e}")
        return EXIT_VALIDATION
    except ModelError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_VALIDATION
    except NumericalError as e:
        logger.error(f"{args.command}: numerical failure: {e}")
        return EXIT_NUMERICAL

    embedded = _embedded(run_config)
    manifest = RunManifest(
        command=args.command,
        config_hash=repository.config_hash(embedded),
        seed=run_config.seed,
        threads=threads,
        versions=_versions(),
        wall_time_s=time.perf_counter() - started,
        outputs=outputs,
    )
    print(manifest.model_dump_json())
    logger.info(f"{args.command} finished in {manifest.wall_time_s:.3f}s", extra={'extra_data': {'outputs': outputs}})
    return EXIT_OK
