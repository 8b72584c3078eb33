"""
File persistence for trajectories, grid functions, series and reports.

Every CSV starts with versioned comment lines (`# schema=<name>.v1`, then
`# config=<canonical JSON>`) followed by one header row. Floats are written with
%.17g so files are deterministic and round-trip exactly. All writes go to a
temporary file in the destination directory and are moved into place.
"""
import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from mfldp.core.errors import ModelError
from mfldp.services.model_service import Trajectory

TRAJECTORY_SCHEMA = "trajectory.v1"
GRID_FUNCTION_SCHEMA = "grid_function.v1"
RATE_SUMMARY_SCHEMA = "rate_summary.v1"


def canonical_json(obj: Any) -> str:
    """Key-sorted compact JSON; the basis of config hashes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def config_hash(config: Mapping[str, Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write text to a temp file next to `path`, then rename it over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def _header(schema: str, config: Optional[Mapping[str, Any]], extra: Sequence[str] = ()) -> list:
    lines = [f"# schema={schema}", f"# config={canonical_json(config or {})}"]
    lines += [f"# {line}" for line in extra]
    return lines


def write_trajectory_csv(path: str | Path, traj: Trajectory, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Columns t, x_1..x_d."""
    lines = _header(TRAJECTORY_SCHEMA, config, [f"kind={traj.kind}"])
    lines.append(",".join(["t"] + [f"x_{i + 1}" for i in range(traj.d)]))
    for t, state in zip(traj.times, traj.states):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in state]))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_trajectory_csv(path: str | Path) -> Tuple[Trajectory, Optional[Dict[str, Any]]]:
    """Parse a trajectory file; returns the trajectory and its embedded config (None when absent)."""
    path = Path(path)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ModelError(f"Cannot read trajectory file {path}: {e}") from e
    config: Optional[Dict[str, Any]] = None
    kind = "piecewise-linear"
    header: Optional[list] = None
    rows = []
    for lineno, line in enumerate(raw_lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, _, value = stripped[1:].strip().partition("=")
            if key == "schema" and value != TRAJECTORY_SCHEMA:
                raise ModelError(f"{path}:{lineno}: unsupported schema '{value}', expected '{TRAJECTORY_SCHEMA}'")
            if key == "config":
                try:
                    config = json.loads(value) or None
                except json.JSONDecodeError as e:
                    raise ModelError(f"{path}:{lineno}: malformed embedded config: {e.msg}") from e
            if key == "kind":
                kind = value
            continue
        cells = [c.strip() for c in stripped.split(",")]
        if header is None:
            if not cells or cells[0] != "t" or cells[1:] != [f"x_{i + 1}" for i in range(len(cells) - 1)]:
                raise ModelError(f"{path}:{lineno}: expected header 't,x_1,...,x_d', got '{stripped}'")
            header = cells
            continue
        if len(cells) != len(header):
            raise ModelError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as e:
            raise ModelError(f"{path}:{lineno}: {e}") from e
    if header is None or len(rows) < 1:
        raise ModelError(f"{path}: no trajectory data found")
    data = np.array(rows)
    return Trajectory(data[:, 0], data[:, 1:], kind=kind), config


def write_grid_function_csv(path: str | Path, nodes: np.ndarray, values: np.ndarray, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Columns x_1..x_d, value."""
    nodes = np.atleast_2d(nodes)
    lines = _header(GRID_FUNCTION_SCHEMA, config)
    lines.append(",".join([f"x_{i + 1}" for i in range(nodes.shape[1])] + ["value"]))
    for node, value in zip(nodes, values):
        lines.append(",".join([_fmt(v) for v in node] + [_fmt(value)]))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_series_csv(path: str | Path, schema: str, columns: Mapping[str, Sequence[float]], config: Optional[Mapping[str, Any]] = None) -> Path:
    """Named equal-length numeric columns, in the given order."""
    names = list(columns)
    lengths = {len(columns[name]) for name in names}
    if len(lengths) > 1:
        raise ModelError(f"Series columns have different lengths: {sorted(lengths)}")
    lines = _header(schema, config)
    lines.append(",".join(names))
    for row in zip(*(columns[name] for name in names)):
        lines.append(",".join(_fmt(v) for v in row))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_rate_summary_csv(path: str | Path, report, config: Optional[Mapping[str, Any]] = None) -> Path:
    """Columns n, p_hat, decay_estimate, reference_action; an absent decay estimate is left empty."""
    lines = _header(RATE_SUMMARY_SCHEMA, config)
    lines.append("n,p_hat,decay_estimate,reference_action")
    for n, p, rate in zip(report.n_values, report.tube_probabilities, report.decay_estimates):
        lines.append(",".join([str(n), _fmt(p), "" if rate is None else _fmt(rate), _fmt(report.reference_action)]))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str | Path, payload: Any) -> Path:
    """Key-sorted, indented JSON (Infinity for infinite values)."""
    return atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + "\n")
