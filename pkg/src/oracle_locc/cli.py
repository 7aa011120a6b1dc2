"""Command-line interface: verification sweeps, capacity reports, runs.

Subcommands:
  verify      run the invariant suite over exhaustive small function tables
              (plus randomized larger ones) and emit a JSON report
  capacities  per-function capacity report
  run         one seeded protocol run (in-process), transcript/result JSON
  serve       referee side of a two-process socket run
  connect     one party endpoint of a two-process socket run

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 transport error.  Set ORACLE_LOCC_LOG=DEBUG (or any logging level name)
for progress on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .locc import run_locc_all_branches, run_locc, ab_substate
from .netsim import DEFAULT_TIMEOUT, TransportError, connect_socket, run_in_process, serve_socket
from .oracle import (
    FunctionTable,
    all_function_tables,
    all_permutations,
    apply_oracle,
    build_partition,
    check_local_equivalence,
    oracle_matrix,
    phase_exponential,
    schmidt_decompose_oracle,
)
from .protocols import (
    backward_decode_states,
    entangle_protocol,
    send_backward,
    send_bidirectional,
    send_forward,
)
from .quantum import fidelity, operator_schmidt_rank, random_state

log = logging.getLogger("oracle_locc")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3

EXHAUSTIVE_BOUND = 3  # up to here every function table is enumerated
DEVIATION_TOL = 1e-10


class CliError(Exception):
    """Configuration or usage problem; maps to exit code 2."""


def load_function_table(source: str) -> FunctionTable:
    """Parse --f: inline JSON if it looks like an object, else a file path."""
    text = source.strip()
    if not text.startswith("{"):
        path = Path(source)
        if not path.is_file():
            raise CliError(f"function table file not found: {source}")
        text = path.read_text(encoding="utf-8")
    try:
        return FunctionTable.from_json(text)
    except (json.JSONDecodeError, ValueError) as exc:
        raise CliError(f"invalid function table: {exc}") from exc


def emit(document: dict | str, out: str | None) -> None:
    text = document if isinstance(document, str) else json.dumps(document, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


# --- verify ---------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    cases: int
    max_deviation: float
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "cases": self.cases,
            "max_deviation": self.max_deviation,
            "passed": self.passed,
        }


class _Check:
    """Accumulates worst-case deviations for one named invariant."""

    def __init__(self, name: str, tolerance: float = DEVIATION_TOL):
        self.name = name
        self.tolerance = tolerance
        self.cases = 0
        self.max_deviation = 0.0

    def record(self, deviation: float, count: int = 1) -> None:
        self.cases += count
        self.max_deviation = max(self.max_deviation, float(deviation))

    def result(self) -> CheckResult:
        return CheckResult(self.name, self.cases, self.max_deviation,
                           self.max_deviation <= self.tolerance)


def _sweep_tables(max_m: int, max_n: int, trials: int, rng: np.random.Generator):
    """Exhaustive tables within the small bound, then random larger ones."""
    tables = list(all_function_tables(min(max_m, EXHAUSTIVE_BOUND), min(max_n, EXHAUSTIVE_BOUND)))
    if max_m > EXHAUSTIVE_BOUND or max_n > EXHAUSTIVE_BOUND:
        for _ in range(trials):
            M = int(rng.integers(1, max_m + 1))
            N = int(rng.integers(1, max_n + 1))
            tables.append(FunctionTable(M, N, tuple(int(v) for v in rng.integers(0, N, size=M))))
    return tables


def _check_oracle_structure(tables) -> CheckResult:
    check = _Check("oracle_matrix_is_permutation_unitary")
    for f in tables:
        U = oracle_matrix(f)
        dim = f.M * f.N
        unitary_dev = np.max(np.abs(U.conj().T @ U - np.eye(dim)))
        entry_dev = np.max(np.abs(U * (1 - U)))  # entries are 0 or 1
        sum_dev = max(np.max(np.abs(U.sum(axis=0) - 1)), np.max(np.abs(U.sum(axis=1) - 1)))
        check.record(max(unitary_dev, entry_dev, sum_dev))
    return check.result()


def _check_schmidt(tables) -> CheckResult:
    check = _Check("schmidt_rank_and_reconstruction")
    for f in tables:
        U = oracle_matrix(f)
        form = schmidt_decompose_oracle(f)
        rank_dev = abs(operator_schmidt_rank(U, f.M, f.N) - form.partition.n_values)
        rebuild_dev = np.max(np.abs(form.reconstruct() - U))
        expected = np.sqrt([f.N * k for k in form.partition.sizes])
        coeff_dev = np.max(np.abs(form.coefficients - expected))
        check.record(max(rank_dev, rebuild_dev, coeff_dev))
    return check.result()


def _check_entangle(tables) -> CheckResult:
    check = _Check("entangle_ebits_equal_log2_n_f")
    for f in tables:
        _, ebits = entangle_protocol(f)
        check.record(abs(ebits - np.log2(build_partition(f).n_values)))
    return check.result()


def _check_forward(tables) -> CheckResult:
    check = _Check("forward_protocol_decodes_exactly")
    for f in tables:
        for r in range(build_partition(f).n_values):
            result = send_forward(f, r)
            dev = abs(result.outcome_probabilities[r] - 1.0)
            if result.decoded != r:
                dev = max(dev, 1.0)
            check.record(dev)
    return check.result()


def _check_backward(tables) -> CheckResult:
    check = _Check("backward_protocol_decodes_exactly")
    for f in tables:
        decode = backward_decode_states(f)
        gram_dev = np.max(np.abs(decode @ decode.conj().T - np.eye(decode.shape[0])))
        check.record(gram_dev)
        for s in range(build_partition(f).n_values):
            result = send_backward(f, s)
            dev = max(abs(result.outcome_probabilities[s] - 1.0), result.outcome_probabilities[-1])
            if result.decoded != s:
                dev = max(dev, 1.0)
            check.record(dev)
    return check.result()


def _check_bidirectional(max_degree: int) -> CheckResult:
    check = _Check("bidirectional_protocol_decodes_exactly")
    for f in all_permutations(max_degree):
        for r in range(f.M):
            for s in range(f.M):
                result = send_bidirectional(f, r, s)
                dev = abs(result.outcome_probabilities[r, s] - 1.0)
                if result.decoded != (r, s):
                    dev = max(dev, 1.0)
                check.record(dev)
    return check.result()


def _check_locc(tables, inputs_per_table: int, rng: np.random.Generator) -> CheckResult:
    check = _Check("locc_branches_match_direct_oracle")
    for f in tables:
        n = build_partition(f).n_values
        for _ in range(inputs_per_table):
            state = random_state((f.M, f.N), ("A", "B"), rng)
            expected = apply_oracle(f, state)
            for branch in run_locc_all_branches(f, state):
                fid_dev = 1.0 - fidelity(ab_substate(branch.final_state), expected)
                prob_dev = abs(branch.probability - 1.0 / n**2)
                check.record(max(fid_dev, prob_dev))
    return check.result()


def _check_ledger(tables, rng: np.random.Generator) -> CheckResult:
    check = _Check("resource_ledger_accounting")
    for f in tables:
        n = build_partition(f).n_values
        state = random_state((f.M, f.N), ("A", "B"), rng)
        _, _, ledger = run_locc(f, state, int(rng.integers(1 << 31)))
        dev = abs(ledger.ebits_consumed - np.log2(n))
        dev = max(dev, abs(ledger.bits_forward_info - np.log2(n)))
        dev = max(dev, abs(ledger.bits_backward_info - np.log2(n)))
        dev = max(dev, abs(ledger.bits_forward_wire - (n - 1).bit_length()))
        dev = max(dev, abs(ledger.bits_backward_wire - (n - 1).bit_length()))
        check.record(dev)
    return check.result()


def _check_phase_identity(max_n: int = 8) -> CheckResult:
    check = _Check("phase_exponential_shifts_basis", tolerance=1e-12)
    for N in range(1, max_n + 1):
        shift = phase_exponential(N, 1)
        for y in range(N):
            target = np.zeros(N, dtype=np.complex128)
            target[(y + 1) % N] = 1.0
            check.record(np.max(np.abs(shift[:, y] - target)))
    return check.result()


def _check_minimal_oracle(max_degree: int = 4) -> CheckResult:
    check = _Check("minimal_oracle_dressing_matches")
    for f in all_permutations(max_degree):
        check.record(check_local_equivalence(f))
    return check.result()


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.f is not None:
        tables = [load_function_table(args.f)]
    else:
        if args.max_m < 1 or args.max_n < 1:
            raise CliError("--max-m and --max-n must be at least 1")
        tables = _sweep_tables(args.max_m, args.max_n, args.trials, rng)
    log.info("verifying %d function tables", len(tables))
    checks = [
        _check_oracle_structure(tables),
        _check_schmidt(tables),
        _check_entangle(tables),
        _check_forward(tables),
        _check_backward(tables),
        _check_bidirectional(min(args.max_m, 4) if args.f is None else 3),
        _check_locc(tables, inputs_per_table=2, rng=rng),
        _check_ledger(tables, rng),
        _check_phase_identity(),
        _check_minimal_oracle(),
    ]
    passed = all(c.passed for c in checks)
    report = {
        "max_m": args.max_m,
        "max_n": args.max_n,
        "seed": args.seed,
        "tables": len(tables),
        "checks": [c.to_json_dict() for c in checks],
        "passed": passed,
    }
    emit(report, args.out)
    for c in checks:
        log.info("%s %s (cases=%d, max_deviation=%.3e)",
                 "PASS" if c.passed else "FAIL", c.name, c.cases, c.max_deviation)
    if not passed:
        first = next(c for c in checks if not c.passed)
        print(f"verification failed: {first.name} "
              f"(max deviation {first.max_deviation:.3e})", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


# --- capacities -----------------------------------------------------------

def cmd_capacities(args) -> int:
    f = load_function_table(args.f)
    partition = build_partition(f)
    _, ebits = entangle_protocol(f)
    report = {
        "n_f": partition.n_values,
        "log2_n_f": float(np.log2(partition.n_values)),
        "schmidt_rank": operator_schmidt_rank(oracle_matrix(f), f.M, f.N),
        "ebits_measured": ebits,
    }
    if f.is_permutation():
        for r in range(f.M):
            for s in range(f.M):
                if not send_bidirectional(f, r, s).success:
                    raise CliError(f"bidirectional decode failed at (r={r}, s={s})")
        report["bidirectional_bits_if_permutation"] = float(2.0 * np.log2(f.M))
    emit(report, args.out)
    return EXIT_OK


# --- run / serve / connect ------------------------------------------------

def _seeded_input(f: FunctionTable, seed: int):
    """The run input state: seeded Gaussian amplitudes on A, B."""
    return random_state((f.M, f.N), ("A", "B"), np.random.default_rng(seed))


def cmd_run(args) -> int:
    f = load_function_table(args.f)
    if args.transport == "socket":
        raise CliError("socket transport uses the serve/connect subcommands")
    if args.protocol == "locc":
        state = _seeded_input(f, args.seed)
        _, transcript = run_in_process(f, state, args.seed)
        emit(transcript.to_json(), args.out)
        return EXIT_OK

    partition = build_partition(f)
    rng = np.random.default_rng(args.seed)
    result = {"protocol": args.protocol, "f": f.to_json_dict(), "seed": args.seed}
    if args.protocol == "entangle":
        _, ebits = entangle_protocol(f)
        result["ebits"] = ebits
    elif args.protocol == "forward":
        r = int(rng.integers(partition.n_values))
        outcome = send_forward(f, r)
        result.update(r=r, decoded=outcome.decoded, success=outcome.success,
                      probabilities=[float(p) for p in outcome.outcome_probabilities])
    elif args.protocol == "backward":
        s = int(rng.integers(partition.n_values))
        outcome = send_backward(f, s)
        result.update(s=s, decoded=outcome.decoded, success=outcome.success,
                      probabilities=[float(p) for p in outcome.outcome_probabilities])
    elif args.protocol == "bidirectional":
        if not f.is_permutation():
            raise CliError("bidirectional protocol requires a permutation (M = N, all values distinct)")
        r = int(rng.integers(f.M))
        s = int(rng.integers(f.M))
        outcome = send_bidirectional(f, r, s)
        result.update(r=r, s=s, decoded=list(outcome.decoded), success=outcome.success,
                      probabilities=[[float(p) for p in row] for row in outcome.outcome_probabilities])
    else:
        raise CliError(f"unknown protocol {args.protocol!r}")
    if not result.get("success", True):
        emit(result, args.out)
        return EXIT_VERIFY_FAILED
    emit(result, args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    f = load_function_table(args.f)
    state = _seeded_input(f, args.seed)

    def announce(host: str, port: int) -> None:
        print(f"listening on {host}:{port}", file=sys.stderr, flush=True)

    _, transcript = serve_socket(
        f, state, args.seed, host=args.host, port=args.port,
        timeout=args.timeout, on_listening=announce,
    )
    emit(transcript.to_json(), args.out)
    return EXIT_OK


def cmd_connect(args) -> int:
    f = load_function_table(args.f)
    learned = connect_socket(args.role, f, args.host, args.port, timeout=args.timeout)
    log.info("%s finished; learned %s", args.role, learned)
    return EXIT_OK


# --- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oracle-locc",
        description="Simulate, verify, and account for distributed oracle implementations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="run the invariant suite, emit a JSON report")
    verify.add_argument("--f", help="restrict to one function table (path or inline JSON)")
    verify.add_argument("--max-m", type=int, default=3)
    verify.add_argument("--max-n", type=int, default=3)
    verify.add_argument("--trials", type=int, default=25,
                        help="random tables when bounds exceed the exhaustive range")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out")
    verify.set_defaults(handler=cmd_verify)

    capacities = sub.add_parser("capacities", help="capacity report for one function table")
    capacities.add_argument("--f", required=True)
    capacities.add_argument("--out")
    capacities.set_defaults(handler=cmd_capacities)

    run = sub.add_parser("run", help="one seeded protocol run")
    run.add_argument("--f", required=True)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--protocol", default="locc",
                     choices=["locc", "entangle", "forward", "backward", "bidirectional"])
    run.add_argument("--transport", default="in-process", choices=["in-process", "socket"])
    run.add_argument("--out")
    run.set_defaults(handler=cmd_run)

    serve = sub.add_parser("serve", help="referee side of a socket run")
    serve.add_argument("--f", required=True)
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=0, help="0 picks a free port")
    serve.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    serve.add_argument("--out")
    serve.set_defaults(handler=cmd_serve)

    connect = sub.add_parser("connect", help="party endpoint of a socket run")
    connect.add_argument("--role", required=True, choices=["alice", "bob"])
    connect.add_argument("--f", required=True)
    connect.add_argument("--host", default="127.0.0.1")
    connect.add_argument("--port", type=int, required=True)
    connect.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    connect.set_defaults(handler=cmd_connect)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("ORACLE_LOCC_LOG")
    if level:
        logging.basicConfig(
            level=getattr(logging, level.upper(), logging.INFO),
            stream=sys.stderr,
            format="%(levelname)s %(name)s: %(message)s",
        )
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
