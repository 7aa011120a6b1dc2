"""Command line interface: subcommands, exit codes, output contracts."""

import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from oracle_locc.cli import main

IDENTITY2 = '{"M": 2, "N": 2, "table": [0, 1]}'
CONSTANT22 = '{"M": 2, "N": 2, "table": [0, 0]}'
THREE_CYCLE = '{"M": 3, "N": 3, "table": [1, 2, 0]}'
NON_PERM = '{"M": 3, "N": 3, "table": [0, 0, 1]}'

SCRIPT = shutil.which("oracle-locc")

CHECK_NAMES = {
    "oracle_matrix_is_permutation_unitary",
    "schmidt_rank_and_reconstruction",
    "entangle_ebits_equal_log2_n_f",
    "forward_protocol_decodes_exactly",
    "backward_protocol_decodes_exactly",
    "bidirectional_protocol_decodes_exactly",
    "locc_branches_match_direct_oracle",
    "resource_ledger_accounting",
    "phase_exponential_shifts_basis",
    "minimal_oracle_dressing_matches",
}


def cli(*argv):
    """Invoke the CLI in-process; argparse SystemExits become return codes."""
    try:
        return main(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)


def run_script(*argv, env_extra=None, check=False):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    proc = subprocess.run(
        [SCRIPT, *argv], capture_output=True, text=True, env=env, timeout=120
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"exit {proc.returncode}: {proc.stderr}")
    return proc


class TestVerify:
    def test_small_sweep_passes(self, capsys):
        assert cli("verify", "--max-m", "2", "--max-n", "2", "--trials", "2") == 0
        report = json.loads(capsys.readouterr().out)
        assert list(report) == ["max_m", "max_n", "seed", "tables", "checks", "passed"]
        assert report["passed"] is True
        assert report["tables"] == 8  # every f: Z_m -> Z_n with m, n <= 2
        assert {c["name"] for c in report["checks"]} == CHECK_NAMES
        for check in report["checks"]:
            assert list(check) == ["name", "cases", "max_deviation", "passed"]
            assert check["passed"] is True
            assert check["cases"] > 0

    def test_single_table_restriction(self, capsys):
        assert cli("verify", "--f", THREE_CYCLE) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["tables"] == 1

    def test_corrupt_inline_table_is_a_usage_error(self, capsys):
        assert cli("verify", "--f", '{"M": 2, "N": 2}') == 2
        assert cli("verify", "--f", '{"M": 2, "N": 2, "table": [0, 5]}') == 2
        err = capsys.readouterr().err
        assert "error" in err

    def test_missing_table_file_is_a_usage_error(self, capsys, tmp_path):
        assert cli("verify", "--f", str(tmp_path / "absent.json")) == 2

    def test_nonpositive_bounds_are_a_usage_error(self):
        assert cli("verify", "--max-m", "0") == 2

    def test_out_flag_writes_the_report_file(self, tmp_path, capsys):
        target = tmp_path / "report.json"
        assert (
            cli("verify", "--max-m", "2", "--max-n", "2", "--trials", "1",
                "--out", str(target)) == 0
        )
        assert capsys.readouterr().out == ""
        assert json.loads(target.read_text())["passed"] is True


class TestCapacities:
    def test_identity_two(self, capsys):
        assert cli("capacities", "--f", IDENTITY2) == 0
        report = json.loads(capsys.readouterr().out)
        assert list(report) == [
            "n_f", "log2_n_f", "schmidt_rank", "ebits_measured",
            "bidirectional_bits_if_permutation",
        ]
        assert report["n_f"] == 2
        assert report["log2_n_f"] == 1.0
        assert report["schmidt_rank"] == 2
        assert abs(report["ebits_measured"] - 1.0) <= 1e-10
        assert report["bidirectional_bits_if_permutation"] == 2.0

    def test_constant_function_has_no_bidirectional_entry(self, capsys):
        assert cli("capacities", "--f", CONSTANT22) == 0
        report = json.loads(capsys.readouterr().out)
        assert "bidirectional_bits_if_permutation" not in report
        assert report["n_f"] == 1
        assert report["schmidt_rank"] == 1
        assert abs(report["ebits_measured"]) <= 1e-10

    def test_non_square_table(self, capsys):
        assert cli("capacities", "--f", '{"M": 4, "N": 3, "table": [0, 1, 2, 0]}') == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_f"] == report["schmidt_rank"] == 3
        assert abs(report["log2_n_f"] - np.log2(3)) <= 1e-12

    def test_table_from_file(self, tmp_path, capsys):
        path = tmp_path / "f.json"
        path.write_text(THREE_CYCLE)
        assert cli("capacities", "--f", str(path)) == 0
        assert json.loads(capsys.readouterr().out)["n_f"] == 3


class TestRun:
    def test_locc_emits_a_transcript(self, capsys):
        assert cli("run", "--f", THREE_CYCLE, "--seed", "3") == 0
        transcript = json.loads(capsys.readouterr().out)
        assert list(transcript) == ["f", "seed", "r", "s", "steps", "ledger"]
        assert transcript["seed"] == 3
        assert transcript["f"] == {"M": 3, "N": 3, "table": [1, 2, 0]}
        assert [s["step"] for s in transcript["steps"]] == [1, 2, 3, 4, 5, 6, 7]
        assert 0 <= transcript["r"] < 3 and 0 <= transcript["s"] < 3
        assert transcript["ledger"]["bits_forward_wire"] == 2

    def test_entangle_reports_ebits(self, capsys):
        assert cli("run", "--protocol", "entangle", "--f", IDENTITY2) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["protocol"] == "entangle"
        assert abs(report["ebits"] - 1.0) <= 1e-10

    def test_forward_backward_succeed(self, capsys):
        for protocol in ("forward", "backward"):
            assert cli("run", "--protocol", protocol, "--f", NON_PERM, "--seed", "9") == 0
            report = json.loads(capsys.readouterr().out)
            assert report["protocol"] == protocol
            assert report["success"] is True
            assert report["decoded"] == report["r" if protocol == "forward" else "s"]

    def test_bidirectional_on_a_permutation(self, capsys):
        assert cli("run", "--protocol", "bidirectional", "--f", THREE_CYCLE, "--seed", "1") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["success"] is True
        assert report["decoded"] == [report["r"], report["s"]]

    def test_bidirectional_rejects_non_permutation(self, capsys):
        assert cli("run", "--protocol", "bidirectional", "--f", NON_PERM) == 2
        assert "permutation" in capsys.readouterr().err

    def test_socket_transport_is_not_a_run_mode(self, capsys):
        assert cli("run", "--transport", "socket", "--f", IDENTITY2) == 2
        assert "serve/connect" in capsys.readouterr().err

    def test_unknown_protocol_is_an_argparse_error(self, capsys):
        assert cli("run", "--protocol", "telepathy", "--f", IDENTITY2) == 2

    def test_missing_subcommand(self):
        assert cli() == 2


class TestScriptProcess:
    """End-to-end through the installed console script."""

    def test_script_is_installed(self):
        assert SCRIPT is not None

    def test_run_output_is_deterministic(self):
        first = run_script("run", "--f", THREE_CYCLE, "--seed", "11", check=True)
        second = run_script("run", "--f", THREE_CYCLE, "--seed", "11", check=True)
        assert first.stdout == second.stdout
        assert json.loads(first.stdout)["seed"] == 11

    def test_log_env_var_enables_stderr_logging(self):
        quiet = run_script("verify", "--f", IDENTITY2, check=True)
        loud = run_script(
            "verify", "--f", IDENTITY2, env_extra={"ORACLE_LOCC_LOG": "INFO"}, check=True
        )
        assert quiet.stderr == ""
        assert "INFO" in loud.stderr
        assert quiet.stdout == loud.stdout

    def test_serve_connect_matches_run(self):
        server = subprocess.Popen(
            [SCRIPT, "serve", "--f", THREE_CYCLE, "--seed", "11", "--port", "0",
             "--timeout", "20"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            announcement = server.stderr.readline()
            assert announcement.startswith("listening on ")
            port = int(announcement.strip().rsplit(":", 1)[1])
            clients = [
                subprocess.Popen(
                    [SCRIPT, "connect", "--role", role, "--f", THREE_CYCLE,
                     "--port", str(port), "--timeout", "20"],
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                )
                for role in ("alice", "bob")
            ]
            for client in clients:
                client.communicate(timeout=60)
                assert client.returncode == 0
            out, _err = server.communicate(timeout=60)
            assert server.returncode == 0
        finally:
            server.kill()
            server.wait()
        direct = run_script("run", "--f", THREE_CYCLE, "--seed", "11", check=True)
        assert out == direct.stdout  # byte-identical transcripts across transports

    def test_connect_to_dead_port_is_a_transport_error(self):
        import socket as socketlib

        probe = socketlib.socket()
        probe.bind(("127.0.0.1", 0))
        dead_port = probe.getsockname()[1]
        probe.close()
        proc = run_script(
            "connect", "--role", "alice", "--f", IDENTITY2,
            "--port", str(dead_port), "--timeout", "1",
        )
        assert proc.returncode == 3
        assert "transport error" in proc.stderr
