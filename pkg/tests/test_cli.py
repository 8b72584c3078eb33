import json
import math

import pytest

from mfldp import cli
from mfldp.core.config import resolve_threads, settings
from mfldp.core.errors import ConvergenceError, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION
from mfldp.storage import repository


@pytest.fixture
def free_config(tmp_path):
    path = tmp_path / "free.json"
    path.write_text(json.dumps({"model": "ehrenfest", "d": 1}))
    return str(path)


def manifest_from(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])

# =====================================================================
# Successful runs
# =====================================================================

def test_simulate_is_reproducible_and_prints_a_manifest(tmp_path, free_config, capsys):
    """
    Verify that rerunning simulate gives identical bytes and a JSON manifest.
    """
    # --- Arrange ---
    first, second = tmp_path / "a" / "path.csv", tmp_path / "b" / "path.csv"
    argv = ["simulate", "--config", free_config, "--n", "10", "--start", "0.2", "--horizon", "1.0", "--seed", "7"]

    # --- Act ---
    code_a = cli.run(argv + ["--output", str(first)])
    manifest = manifest_from(capsys)
    code_b = cli.run(argv + ["--output", str(second)])

    # --- Assert ---
    assert code_a == code_b == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 7
    assert manifest["outputs"] == [str(first)]
    assert "numpy" in manifest["versions"]


def test_flow_then_action_uses_the_embedded_model(tmp_path, free_config, capsys):
    """
    Verify that action rebuilds the model from the config embedded in a flow file.
    """
    flow_path, action_path = tmp_path / "flow.csv", tmp_path / "action.json"

    assert cli.run(["flow", "--config", free_config, "--start", "0.8", "--horizon", "1.0", "--dt", "1e-3", "--output", str(flow_path)]) == EXIT_OK
    assert cli.run(["action", "--trajectory", str(flow_path), "--output", str(action_path)]) == EXIT_OK

    payload = json.loads(action_path.read_text())
    assert 0.0 <= payload["total"] <= 1e-6
    assert payload["config"]["model"]["model"] == "ehrenfest"
    assert "output_path" not in payload["config"]


def test_rate_estimate_does_not_depend_on_the_thread_count(tmp_path, free_config):
    reference = tmp_path / "ref.csv"
    assert cli.run(["flow", "--config", free_config, "--start", "0.2", "--horizon", "0.5", "--dt", "0.01", "--output", str(reference)]) == EXIT_OK
    common = ["rate-estimate", "--trajectory", str(reference), "--delta", "0.3", "--n-values", "10,20", "--replicas", "60", "--seed", "3"]

    assert cli.run(common + ["--threads", "1", "--output", str(tmp_path / "one" / "rate.csv")]) == EXIT_OK
    assert cli.run(common + ["--threads", "3", "--output", str(tmp_path / "three" / "rate.csv")]) == EXIT_OK

    assert (tmp_path / "one" / "rate.csv").read_bytes() == (tmp_path / "three" / "rate.csv").read_bytes()
    assert (tmp_path / "one" / "rate.json").exists()


def test_hamiltonian_eval(tmp_path, free_config):
    out = tmp_path / "h.csv"

    code = cli.run(["hamiltonian", "eval", "--config", free_config, "--state", "0", "--p", repr(math.log(2.0) / 2.0), "--output", str(out)])

    lines = out.read_text().splitlines()
    assert code == EXIT_OK
    assert lines[0] == "# schema=hamiltonian.v1"
    assert lines[2] == "x_1,p_1,H,Hp_1"
    assert float(lines[3].split(",")[2]) == pytest.approx(0.25, abs=1e-15)


def test_lagrangian_eval_is_zero_along_the_flow(tmp_path, free_config):
    out = tmp_path / "l.csv"

    # free drift at x = 0.5 is -1
    code = cli.run(["lagrangian", "eval", "--config", free_config, "--state", "0.5", "--velocity", "-1", "--output", str(out)])

    assert code == EXIT_OK
    assert float(out.read_text().splitlines()[3].split(",")[-1]) == pytest.approx(0.0, abs=1e-9)


def test_lyapunov_writes_series_and_verdict(tmp_path):
    config = tmp_path / "potts.json"
    config.write_text(json.dumps({"model": "glauber", "d": 3, "preset": "potts"}))
    out = tmp_path / "lyap.csv"

    code = cli.run(["lyapunov", "--config", str(config), "--start", "0.7,0.2,0.1", "--horizon", "2", "--dt", "0.01", "--output", str(out)])

    verdict = json.loads((tmp_path / "lyap.json").read_text())["verdict"]
    assert code == EXIT_OK
    assert out.read_text().splitlines()[2] == "t,I0"
    assert verdict["monotone"] is True


def test_help_exits_cleanly():
    assert cli.run(["--help"]) == EXIT_OK

# =====================================================================
# Failures and exit codes
# =====================================================================

def test_unknown_subcommand_is_a_usage_error(tmp_path, capsys):
    code = cli.run(["teleport", "--output", str(tmp_path / "x")])

    assert code == EXIT_VALIDATION
    assert "error" in capsys.readouterr().err


def test_malformed_config_names_line_and_column(tmp_path, capsys):
    """
    Verify that a JSON syntax error is reported as path:line:column with exit code 1.
    """
    config = tmp_path / "cfg.json"
    config.write_text('{"model": "ehrenfest",\n "d": }')

    code = cli.run(["flow", "--config", str(config), "--start", "0.1", "--output", str(tmp_path / "f.csv")])

    assert code == EXIT_VALIDATION
    assert "cfg.json:2:" in capsys.readouterr().err
    assert not (tmp_path / "f.csv").exists()


def test_inconsistent_preset_is_rejected(tmp_path):
    config = tmp_path / "sqrt.json"
    config.write_text(json.dumps({"model": "ehrenfest", "d": 2, "preset": "sqrt"}))

    code = cli.run(["flow", "--config", str(config), "--start", "0.1,0.1", "--output", str(tmp_path / "f.csv")])

    assert code == EXIT_VALIDATION


def test_state_off_the_lattice_is_rejected(tmp_path, free_config):
    code = cli.run(["simulate", "--config", free_config, "--n", "10", "--start", "1.5", "--output", str(tmp_path / "s.csv")])

    assert code == EXIT_VALIDATION


def test_solver_failure_exits_with_the_numerical_code(tmp_path, free_config, mocker):
    """
    Verify that a non-converging resolvent exits with code 2 and writes nothing.
    """
    solve = mocker.patch.object(cli.hjb_service, "solve_resolvent", side_effect=ConvergenceError("no convergence", 5, 1.0))

    code = cli.run(["resolvent", "--config", free_config, "--m", "9", "--lam", "0.5", "--output", str(tmp_path / "r.csv")])

    assert code == EXIT_NUMERICAL
    solve.assert_called_once()
    assert not (tmp_path / "r.csv").exists()

# =====================================================================
# Threads
# =====================================================================

def test_thread_count_falls_back_to_the_environment_setting(monkeypatch):
    monkeypatch.setattr(settings, "LDP_THREADS", 2)

    assert resolve_threads() == 2
    assert resolve_threads(5) == 5
    assert resolve_threads(0) == 1


def test_manifest_hash_matches_the_embedded_config(tmp_path, free_config, capsys):
    out = tmp_path / "flow.csv"
    cli.run(["flow", "--config", free_config, "--start", "0.5", "--horizon", "0.1", "--dt", "0.01", "--output", str(out)])
    manifest = manifest_from(capsys)

    _, embedded = repository.read_trajectory_csv(out)

    assert manifest["config_hash"] == repository.config_hash(embedded)
