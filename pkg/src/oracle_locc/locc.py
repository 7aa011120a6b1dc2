"""Distributed oracle execution with local operations and classical messages.

The oracle on registers A (Alice, dimension M) and B (Bob, dimension N) is
realized without any joint quantum operation.  The parties pre-share a
maximally entangled ancilla pair a, b of dimension n_f (the number of
distinct function values) and then run seven strictly ordered steps:

  1. Alice entangles A with her ancilla: the level-set index of A's value
     is added onto a.
  2. Alice measures a, getting r, and sends r to Bob.
  3. Bob relabels his ancilla j -> (r - j) mod n_f, so b now carries the
     level-set index of Alice's input directly.
  4. Bob runs a local oracle from b to B: B is shifted by the function
     value of the level set indexed by b.
  5. Bob Fourier-transforms b.
  6. Bob measures b, getting s, and sends s to Alice.
  7. Alice removes the leftover level-set-dependent phase from A.

The final A, B state equals the direct oracle action for every (r, s)
branch; the outcomes themselves are uniform noise.  Ancilla basis state
|j> stands for the representative input of the j-th level set (smallest
element, function values sorted ascending); the correspondence is spelled
out in the transcript step descriptions.

Resource accounting: the ancilla pair carries log2(n_f) ebits which are
fully consumed, and each direction sends one classical value of
ceil(log2 n_f) wire bits carrying log2(n_f) bits of information.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .oracle import (
    FunctionTable,
    Partition,
    apply_oracle,
    build_partition,
    class_projectors,
    phase_states,
    shift_matrix,
)
from .quantum import (
    LocalOperator,
    MeasurementRecord,
    StateVector,
    apply_local,
    collapse,
    entanglement_entropy,
    from_amps,
    measure_computational,
    measurement_probabilities,
    reorder,
    tensor,
)

SUBSYSTEM_ORDER = ("A", "a", "B", "b")
OWNERS = {"A": "alice", "a": "alice", "B": "bob", "b": "bob"}
BASIS_STATE_TOL = 1e-10


def wire_bits(n_values: int) -> int:
    """Classical bits needed on the wire for one outcome: ceil(log2 n_f)."""
    return (n_values - 1).bit_length()


@dataclass(frozen=True)
class ScriptStep:
    """One entry of the ordered protocol script.

    step is the protocol step number for quantum actions and None for the
    two classical sends; operation names the operator builder so remote
    endpoints can rebuild the matrix once outcome-dependent values are
    known (depends_on marks which received value is needed).
    """

    step: int | None
    party: str
    action: str  # "apply" | "measure" | "send"
    operation: str
    targets: tuple[str, ...]
    description: str
    depends_on: str | None = None  # "r" | "s" for outcome-dependent operators


@dataclass(frozen=True)
class TranscriptStep:
    step: int
    party: str
    description: str


@dataclass(frozen=True)
class WireRecord:
    """Classical message as it appeared on the channel."""

    sender: str
    receiver: str
    value: int
    bits: int


@dataclass(frozen=True, eq=False)
class ResourceLedger:
    """Resources consumed by one distributed run."""

    ebits_consumed: float
    bits_forward_info: float
    bits_backward_info: float
    bits_forward_wire: int
    bits_backward_wire: int

    def to_json_dict(self) -> dict:
        return {
            "ebits_consumed": self.ebits_consumed,
            "bits_forward_info": self.bits_forward_info,
            "bits_backward_info": self.bits_backward_info,
            "bits_forward_wire": self.bits_forward_wire,
            "bits_backward_wire": self.bits_backward_wire,
        }


@dataclass(frozen=True, eq=False)
class Transcript:
    """Record of one run: what was done, what was measured, what was sent.

    The serialized form carries {f, seed, r, s, steps, ledger} in that
    fixed key order; the wire messages are kept on the object for
    inspection but are fully determined by (r, s) and the ledger widths.
    """

    f: FunctionTable
    seed: int
    r: int
    s: int
    steps: tuple[TranscriptStep, ...]
    messages: tuple[WireRecord, ...]
    ledger: ResourceLedger

    def to_json_dict(self) -> dict:
        return {
            "f": self.f.to_json_dict(),
            "seed": self.seed,
            "r": self.r,
            "s": self.s,
            "steps": [
                {"step": st.step, "party": st.party, "description": st.description}
                for st in self.steps
            ],
            "ledger": self.ledger.to_json_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


@dataclass(frozen=True, eq=False)
class BranchResult:
    """One (r, s) measurement branch of the deterministic enumeration."""

    r: int
    s: int
    probability: float
    final_state: StateVector


def _check_input(input_state: StateVector, f: FunctionTable) -> StateVector:
    if set(input_state.labels) != {"A", "B"}:
        raise ValueError(f"input must live on labels A and B, got {input_state.labels}")
    state = reorder(input_state, ("A", "B"))
    if state.dims != (f.M, f.N):
        raise ValueError(f"input dims {state.dims} do not match (M, N) = {(f.M, f.N)}")
    return state


def ancilla_pair(partition: Partition) -> StateVector:
    """Maximally entangled ancilla pair on labels a (Alice) and b (Bob)."""
    n = partition.n_values
    amps = np.zeros((n, n), dtype=np.complex128)
    amps[np.arange(n), np.arange(n)] = 1.0 / np.sqrt(n)
    return from_amps((n, n), ("a", "b"), amps.reshape(-1))


def initial_state(f: FunctionTable, input_state: StateVector) -> StateVector:
    """Input on A, B joined with the fresh ancilla pair, ordered A, a, B, b."""
    partition = build_partition(f)
    joined = tensor([_check_input(input_state, f), ancilla_pair(partition)])
    return reorder(joined, SUBSYSTEM_ORDER)


# --- step operators ------------------------------------------------------

def step1_operator(f: FunctionTable) -> LocalOperator:
    """Alice's joint unitary on (A, a): project A onto level set k, shift a by k."""
    partition = build_partition(f)
    n = partition.n_values
    mat = np.zeros((f.M * n, f.M * n), dtype=np.complex128)
    for k, projector in enumerate(class_projectors(f, partition)):
        mat += np.kron(projector, shift_matrix(n, k))
    return LocalOperator(("A", "a"), mat, description="level-set index added onto a")


def step3_operator(f: FunctionTable, r: int) -> LocalOperator:
    """Bob's relabelling j -> (r - j) mod n_f on b (its own inverse)."""
    n = build_partition(f).n_values
    mat = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        mat[(r - j) % n, j] = 1.0
    return LocalOperator("b", mat, description=f"relabel j -> ({r} - j) mod {n} on b")


def step4_operator(f: FunctionTable) -> LocalOperator:
    """Bob's local oracle on (B, b): shift B by the value of the set indexed by b."""
    partition = build_partition(f)
    n = partition.n_values
    mat = np.zeros((f.N * n, f.N * n), dtype=np.complex128)
    for k, value in enumerate(partition.values):
        selector = np.zeros((n, n), dtype=np.complex128)
        selector[k, k] = 1.0
        mat += np.kron(shift_matrix(f.N, value), selector)
    return LocalOperator(("B", "b"), mat, description="local oracle from b onto B")


def step5_operator(f: FunctionTable) -> LocalOperator:
    """Discrete Fourier transform on b (same matrix as the phase basis)."""
    n = build_partition(f).n_values
    return LocalOperator("b", phase_states(n), description="Fourier transform on b")


def step7_operator(f: FunctionTable, s: int) -> LocalOperator:
    """Alice's phase correction on A: exp(-2 pi i k s / n_f) on level set k."""
    partition = build_partition(f)
    n = partition.n_values
    diag = np.zeros(f.M, dtype=np.complex128)
    for k, cls in enumerate(partition.classes):
        diag[list(cls)] = np.exp(-2j * np.pi * k * s / n)
    return LocalOperator("A", np.diag(diag), description=f"phase correction for s={s} on A")


OPERATOR_BUILDERS: dict[str, Callable[..., LocalOperator]] = {
    "step1_controlled_shift": step1_operator,
    "step3_bob_shift": step3_operator,
    "step4_local_oracle": step4_operator,
    "step5_dft": step5_operator,
    "step7_phase_fix": step7_operator,
}


def build_step_operator(f: FunctionTable, operation: str, value: int | None = None) -> LocalOperator:
    """Materialize a script operator, passing the received r or s if required."""
    builder = OPERATOR_BUILDERS.get(operation)
    if builder is None:
        raise KeyError(f"unknown protocol operation {operation!r}")
    if operation in ("step3_bob_shift", "step7_phase_fix"):
        if value is None:
            raise ValueError(f"{operation} needs the received classical value")
        return builder(f, int(value))
    return builder(f)


# --- step functions over full states -------------------------------------

def step1_controlled_shift(f: FunctionTable, state: StateVector) -> StateVector:
    return apply_local(state, step1_operator(f))


def step2_measure(state: StateVector, rng: np.random.Generator | int) -> MeasurementRecord:
    return measure_computational(state, "a", rng)


def step3_bob_shift(f: FunctionTable, state: StateVector, r: int) -> StateVector:
    return apply_local(state, step3_operator(f, r))


def step4_local_oracle(f: FunctionTable, state: StateVector) -> StateVector:
    return apply_local(state, step4_operator(f))


def step5_dft(f: FunctionTable, state: StateVector) -> StateVector:
    return apply_local(state, step5_operator(f))


def step6_measure(state: StateVector, rng: np.random.Generator | int) -> MeasurementRecord:
    return measure_computational(state, "b", rng)


def step7_phase_fix(f: FunctionTable, state: StateVector, s: int) -> StateVector:
    return apply_local(state, step7_operator(f, s))


# --- script and transcript -----------------------------------------------

def build_locc_script(f: FunctionTable) -> tuple[ScriptStep, ...]:
    """The full ordered script, including the two classical sends."""
    partition = build_partition(f)
    reps = ", ".join(str(x) for x in partition.reps)
    return (
        ScriptStep(
            1, "alice", "apply", "step1_controlled_shift", ("A", "a"),
            f"add the level-set index of A onto a (ancilla basis j stands for input {reps})",
        ),
        ScriptStep(2, "alice", "measure", "step2_measure", ("a",),
                   "computational measurement of a, outcome r"),
        ScriptStep(None, "alice", "send", "send_r", (),
                   "Alice sends r to Bob"),
        ScriptStep(3, "bob", "apply", "step3_bob_shift", ("b",),
                   "relabel j -> (r - j) mod n_f on b", depends_on="r"),
        ScriptStep(4, "bob", "apply", "step4_local_oracle", ("B", "b"),
                   "shift B by the function value of the level set indexed by b"),
        ScriptStep(5, "bob", "apply", "step5_dft", ("b",),
                   "discrete Fourier transform on b"),
        ScriptStep(6, "bob", "measure", "step6_measure", ("b",),
                   "computational measurement of b, outcome s"),
        ScriptStep(None, "bob", "send", "send_s", (),
                   "Bob sends s to Alice"),
        ScriptStep(7, "alice", "apply", "step7_phase_fix", ("A",),
                   "remove the level-set phase exp(-2 pi i k s / n_f) from A",
                   depends_on="s"),
    )


def authorized(party: str, targets: tuple[str, ...]) -> bool:
    """True when every target subsystem is owned by the acting party."""
    return all(OWNERS.get(label) == party for label in targets)


def make_ledger(n_values: int, initial_entropy: float, final_entropy: float) -> ResourceLedger:
    info = float(np.log2(n_values))
    wires = wire_bits(n_values)
    return ResourceLedger(
        ebits_consumed=initial_entropy - final_entropy,
        bits_forward_info=info,
        bits_backward_info=info,
        bits_forward_wire=wires,
        bits_backward_wire=wires,
    )


def make_transcript(
    f: FunctionTable, seed: int, r: int, s: int, ledger: ResourceLedger
) -> Transcript:
    """Assemble the transcript; shared by the direct and networked runners."""
    steps = tuple(
        TranscriptStep(st.step, st.party, st.description)
        for st in build_locc_script(f)
        if st.step is not None
    )
    width = wire_bits(build_partition(f).n_values)
    messages = (
        WireRecord("alice", "bob", r, width),
        WireRecord("bob", "alice", s, width),
    )
    return Transcript(f, seed, r, s, steps, messages, ledger)


# --- runners --------------------------------------------------------------

def run_locc(
    f: FunctionTable, input_state: StateVector, rng_seed: int
) -> tuple[StateVector, Transcript, ResourceLedger]:
    """Execute one seeded run of the distributed protocol.

    Returns the final four-subsystem state (A, a, B, b with the ancillas
    left in |r> and |s>), the transcript, and the resource ledger.  The
    A, B part equals apply_oracle(f, input) for every seed.
    """
    rng = np.random.default_rng(int(rng_seed))
    state = initial_state(f, input_state)
    initial_entropy = entanglement_entropy(state, {"a"})

    state = step1_controlled_shift(f, state)
    record_r = step2_measure(state, rng)
    r, state = record_r.outcome, record_r.post_state
    state = step3_bob_shift(f, state, r)
    state = step4_local_oracle(f, state)
    state = step5_dft(f, state)
    record_s = step6_measure(state, rng)
    s, state = record_s.outcome, record_s.post_state
    state = step7_phase_fix(f, state, s)

    final_entropy = entanglement_entropy(state, {"a"})
    ledger = make_ledger(build_partition(f).n_values, initial_entropy, final_entropy)
    transcript = make_transcript(f, int(rng_seed), r, s, ledger)
    return state, transcript, ledger


def run_locc_all_branches(f: FunctionTable, input_state: StateVector) -> list[BranchResult]:
    """Deterministically enumerate every (r, s) measurement branch.

    Each of the n_f^2 branches carries probability 1/n_f^2 regardless of
    the input, and each final A, B state equals the direct oracle action.
    """
    n = build_partition(f).n_values
    state = step1_controlled_shift(f, initial_state(f, input_state))
    branches = []
    probs_r = measurement_probabilities(state, "a")
    for r in range(n):
        prob_r, state_r = collapse(state, "a", r)
        if state_r is None:
            raise RuntimeError(f"branch r={r} has zero probability {probs_r[r]}")
        state_r = step5_dft(f, step4_local_oracle(f, step3_bob_shift(f, state_r, r)))
        for s in range(n):
            prob_s, state_s = collapse(state_r, "b", s)
            if state_s is None:
                raise RuntimeError(f"branch (r={r}, s={s}) has zero probability")
            final = step7_phase_fix(f, state_s, s)
            branches.append(BranchResult(r, s, prob_r * prob_s, final))
    return branches


def ab_substate(state: StateVector) -> StateVector:
    """Extract the A, B state once both ancillas sit in basis states.

    Raises if either ancilla is not (within tolerance) in a computational
    basis state, since then the A, B part is not a pure state on its own.
    """
    state = reorder(state, SUBSYSTEM_ORDER)
    outcomes = []
    for label in ("a", "b"):
        probs = measurement_probabilities(state, label)
        index = int(np.argmax(probs))
        if abs(probs[index] - 1.0) > BASIS_STATE_TOL:
            raise ValueError(f"ancilla {label} is not in a basis state (probs {probs})")
        outcomes.append(index)
    sliced = state.tensor_view()[:, outcomes[0], :, outcomes[1]]
    return from_amps(
        (state.dims[0], state.dims[2]), ("A", "B"), sliced.reshape(-1), normalize=True
    )


def reference_final_state(
    f: FunctionTable, input_state: StateVector, r: int, s: int
) -> StateVector:
    """Final state predicted without running the protocol: oracle result with ancillas |r>, |s>."""
    n = build_partition(f).n_values
    oracle_out = apply_oracle(f, _check_input(input_state, f))
    anc_a = np.zeros(n, dtype=np.complex128)
    anc_a[r] = 1.0
    anc_b = np.zeros(n, dtype=np.complex128)
    anc_b[s] = 1.0
    joined = tensor(
        [
            oracle_out,
            from_amps((n,), ("a",), anc_a),
            from_amps((n,), ("b",), anc_b),
        ]
    )
    return reorder(joined, SUBSYSTEM_ORDER)
