"""Distributed protocol: step operators, state evolution, transcripts, ledger."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracle_locc.locc import (
    BASIS_STATE_TOL,
    OWNERS,
    SUBSYSTEM_ORDER,
    ab_substate,
    ancilla_pair,
    authorized,
    build_locc_script,
    build_step_operator,
    initial_state,
    make_ledger,
    reference_final_state,
    run_locc,
    run_locc_all_branches,
    step1_controlled_shift,
    step1_operator,
    step3_bob_shift,
    step3_operator,
    step4_local_oracle,
    step4_operator,
    step5_dft,
    step5_operator,
    step7_operator,
    step7_phase_fix,
    wire_bits,
)
from oracle_locc.oracle import (
    FunctionTable,
    apply_oracle,
    build_partition,
    constant_table,
    identity_table,
)
from oracle_locc.quantum import (
    collapse,
    fidelity,
    from_amps,
    measurement_probabilities,
    random_state,
)

from conftest import exhaustive_tables, random_table, ref_dft, ref_partition

WALK_CASES = [
    identity_table(2),
    constant_table(2, 3),
    FunctionTable(3, 3, (1, 2, 0)),
    FunctionTable(4, 3, (2, 0, 2, 1)),
    FunctionTable(3, 2, (1, 1, 0)),
]


def class_index_map(f):
    _, classes = ref_partition(f)
    return {x: k for k, cls in enumerate(classes) for x in cls}


def build_stage(f, c, stage, r=None, s=None):
    """Expected amplitudes (A, a, B, b flat) at a named point of the run.

    Derived from the protocol algebra by explicit loops over basis states,
    independent of the package's operator machinery.  c is the M x N input
    amplitude table.
    """
    n = len(set(f.table))
    k_of = class_index_map(f)
    out = np.zeros((f.M, n, f.N, n), dtype=np.complex128)
    for x in range(f.M):
        k = k_of[x]
        shifted = lambda y: (y + f.table[x]) % f.N
        for y in range(f.N):
            amp = c[x, y]
            if stage == "initial":
                for j in range(n):
                    out[x, j, y, j] += amp / np.sqrt(n)
            elif stage == "after1":
                for j in range(n):
                    out[x, (j + k) % n, y, j] += amp / np.sqrt(n)
            elif stage == "after2":
                out[x, r, y, (r - k) % n] += amp
            elif stage == "after3":
                out[x, r, y, k] += amp
            elif stage == "after4":
                out[x, r, shifted(y), k] += amp
            elif stage == "after5":
                for t in range(n):
                    out[x, r, shifted(y), t] += amp * np.exp(2j * np.pi * k * t / n) / np.sqrt(n)
            elif stage == "after6":
                out[x, r, shifted(y), s] += amp * np.exp(2j * np.pi * k * s / n)
            elif stage == "after7":
                out[x, r, shifted(y), s] += amp
            else:
                raise AssertionError(f"unknown stage {stage}")
    return out.reshape(-1)


class TestStepOperators:
    def test_step1_permutes_ancilla_by_class_index(self):
        f = FunctionTable(4, 3, (2, 0, 2, 1))
        n = 3
        mat = step1_operator(f).matrix
        k_of = class_index_map(f)
        expected = np.zeros((4 * n, 4 * n), dtype=np.complex128)
        for x in range(4):
            for j in range(n):
                expected[x * n + (j + k_of[x]) % n, x * n + j] = 1.0
        assert_allclose(mat, expected, atol=0)

    def test_step3_is_an_involution(self):
        f = FunctionTable(4, 4, (0, 1, 2, 3))
        for r in range(4):
            W = step3_operator(f, r).matrix
            assert_allclose(W @ W, np.eye(4), atol=0)
            for j in range(4):
                assert W[(r - j) % 4, j] == 1.0

    def test_step4_shifts_target_by_class_value(self):
        f = FunctionTable(3, 4, (3, 1, 3))
        values, _ = ref_partition(f)
        n = len(values)
        mat = step4_operator(f).matrix
        expected = np.zeros((4 * n, 4 * n), dtype=np.complex128)
        for k, v in enumerate(values):
            for y in range(4):
                expected[((y + v) % 4) * n + k, y * n + k] = 1.0
        assert_allclose(mat, expected, atol=0)

    def test_step5_is_the_fourier_matrix(self):
        f = FunctionTable(4, 4, (0, 1, 2, 3))
        assert_allclose(step5_operator(f).matrix, ref_dft(4), atol=1e-12)

    def test_step7_phases_follow_class_index(self):
        f = FunctionTable(4, 3, (1, 0, 1, 2))
        n = 3
        k_of = class_index_map(f)
        for s in range(n):
            mat = step7_operator(f, s).matrix
            expected = np.diag(
                [np.exp(-2j * np.pi * k_of[x] * s / n) for x in range(4)]
            )
            assert_allclose(mat, expected, atol=1e-12)

    def test_builder_registry_round_trip(self):
        f = FunctionTable(3, 2, (0, 1, 0))
        assert_allclose(
            build_step_operator(f, "step1_controlled_shift").matrix,
            step1_operator(f).matrix, atol=0,
        )
        assert_allclose(
            build_step_operator(f, "step3_bob_shift", 1).matrix,
            step3_operator(f, 1).matrix, atol=0,
        )
        assert_allclose(
            build_step_operator(f, "step7_phase_fix", 0).matrix,
            step7_operator(f, 0).matrix, atol=0,
        )
        with pytest.raises(KeyError):
            build_step_operator(f, "step9_nonsense")
        with pytest.raises(ValueError, match="classical value"):
            build_step_operator(f, "step3_bob_shift")


class TestIntermediateStates:
    @pytest.mark.parametrize("f", WALK_CASES, ids=lambda f: f"M{f.M}N{f.N}-" + "".join(map(str, f.table)))
    def test_every_stage_matches_independent_algebra(self, f):
        rng = np.random.default_rng(1000 + f.M * 10 + f.N)
        inp = random_state((f.M, f.N), ("A", "B"), rng)
        c = inp.tensor_view()
        n = build_partition(f).n_values

        state0 = initial_state(f, inp)
        assert_allclose(state0.amps, build_stage(f, c, "initial"), atol=1e-12)
        state1 = step1_controlled_shift(f, state0)
        assert_allclose(state1.amps, build_stage(f, c, "after1"), atol=1e-12)

        for r in range(n):
            prob_r, state2 = collapse(state1, "a", r)
            assert abs(prob_r - 1.0 / n) <= 1e-12
            assert_allclose(state2.amps, build_stage(f, c, "after2", r=r), atol=1e-12)
            state3 = step3_bob_shift(f, state2, r)
            assert_allclose(state3.amps, build_stage(f, c, "after3", r=r), atol=1e-12)
            state4 = step4_local_oracle(f, state3)
            assert_allclose(state4.amps, build_stage(f, c, "after4", r=r), atol=1e-12)
            state5 = step5_dft(f, state4)
            assert_allclose(state5.amps, build_stage(f, c, "after5", r=r), atol=1e-12)

            for s in range(n):
                prob_s, state6 = collapse(state5, "b", s)
                assert abs(prob_s - 1.0 / n) <= 1e-12
                assert_allclose(
                    state6.amps, build_stage(f, c, "after6", r=r, s=s), atol=1e-12
                )
                state7 = step7_phase_fix(f, state6, s)
                assert_allclose(
                    state7.amps, build_stage(f, c, "after7", r=r, s=s), atol=1e-12
                )
                assert_allclose(
                    state7.amps, reference_final_state(f, inp, r, s).amps, atol=1e-12
                )

    def test_initial_state_layout(self):
        f = identity_table(2)
        inp = random_state((2, 2), ("A", "B"), np.random.default_rng(7))
        state = initial_state(f, inp)
        assert state.labels == SUBSYSTEM_ORDER
        assert state.dims == (2, 2, 2, 2)
        pair = ancilla_pair(build_partition(f))
        assert_allclose(pair.amps, [1 / np.sqrt(2), 0, 0, 1 / np.sqrt(2)], atol=1e-12)


class TestRunLocc:
    def test_constant_function_is_deterministic(self):
        f = constant_table(2, 2, value=1)
        inp = random_state((2, 2), ("A", "B"), np.random.default_rng(5))
        final, transcript, ledger = run_locc(f, inp, rng_seed=0)
        assert (transcript.r, transcript.s) == (0, 0)
        assert abs(ledger.ebits_consumed) <= 1e-10
        assert_allclose(final.amps, reference_final_state(f, inp, 0, 0).amps, atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_runs_implement_the_oracle(self, seed):
        rng = np.random.default_rng(9000 + seed)
        f = random_table(rng)
        inp = random_state((f.M, f.N), ("A", "B"), rng)
        final, transcript, _ = run_locc(f, inp, rng_seed=seed)
        expected = apply_oracle(f, inp)
        assert fidelity(ab_substate(final), expected) >= 1.0 - 1e-10
        # ancillas hold exactly the reported outcomes
        assert abs(measurement_probabilities(final, "a")[transcript.r] - 1.0) <= 1e-10
        assert abs(measurement_probabilities(final, "b")[transcript.s] - 1.0) <= 1e-10

    def test_bell_input_stays_exact(self):
        f = identity_table(2)
        bell = from_amps((2, 2), ("A", "B"), [1, 0, 0, 1], normalize=True)
        final, transcript, _ = run_locc(f, bell, rng_seed=42)
        assert_allclose(
            final.amps,
            reference_final_state(f, bell, transcript.r, transcript.s).amps,
            atol=1e-12,
        )

    def test_same_seed_reproduces_everything(self):
        f = FunctionTable(3, 3, (1, 2, 0))
        inp = random_state((3, 3), ("A", "B"), np.random.default_rng(11))
        out1 = run_locc(f, inp, rng_seed=123)
        out2 = run_locc(f, inp, rng_seed=123)
        assert_allclose(out1[0].amps, out2[0].amps, atol=0)
        assert out1[1].to_json() == out2[1].to_json()

    def test_accepts_swapped_label_order(self):
        f = FunctionTable(2, 3, (2, 0))
        inp = random_state((3, 2), ("B", "A"), np.random.default_rng(3))
        final, _, _ = run_locc(f, inp, rng_seed=1)
        from oracle_locc.quantum import reorder

        expected = apply_oracle(f, reorder(inp, ("A", "B")))
        assert fidelity(ab_substate(final), expected) >= 1.0 - 1e-10

    def test_rejects_wrong_labels_and_dims(self):
        f = identity_table(2)
        with pytest.raises(ValueError, match="labels"):
            run_locc(f, random_state((2, 2), ("X", "Y"), np.random.default_rng(0)), 0)
        with pytest.raises(ValueError, match="dims"):
            run_locc(f, random_state((3, 2), ("A", "B"), np.random.default_rng(0)), 0)


class TestAllBranches:
    def test_branch_counts_and_probabilities(self):
        cases = [
            (constant_table(2, 2), 1),
            (identity_table(2), 2),
            (FunctionTable(3, 3, (0, 1, 2)), 3),
        ]
        for f, n in cases:
            inp = random_state((f.M, f.N), ("A", "B"), np.random.default_rng(0))
            branches = run_locc_all_branches(f, inp)
            assert len(branches) == n * n
            assert [(b.r, b.s) for b in branches] == [
                (r, s) for r in range(n) for s in range(n)
            ]
            for b in branches:
                assert abs(b.probability - 1.0 / n**2) <= 1e-10

    def test_every_branch_implements_the_oracle(self):
        f = FunctionTable(4, 3, (2, 0, 2, 1))
        inp = random_state((4, 3), ("A", "B"), np.random.default_rng(17))
        expected = apply_oracle(f, inp)
        for b in run_locc_all_branches(f, inp):
            assert fidelity(ab_substate(b.final_state), expected) >= 1.0 - 1e-10
            assert_allclose(
                b.final_state.amps,
                reference_final_state(f, inp, b.r, b.s).amps,
                atol=1e-10,
            )

    def test_outcome_distribution_ignores_the_input(self):
        f = FunctionTable(3, 2, (0, 1, 1))
        rng = np.random.default_rng(23)
        probs = []
        for _ in range(3):
            inp = random_state((3, 2), ("A", "B"), rng)
            probs.append([b.probability for b in run_locc_all_branches(f, inp)])
        for vec in probs[1:]:
            assert_allclose(vec, probs[0], atol=1e-10)

    def test_outcome_distribution_depends_only_on_level_set_count(self):
        # two different functions with the same number of level sets
        pair = (FunctionTable(2, 2, (0, 1)), FunctionTable(4, 3, (1, 1, 0, 0)))
        dists = []
        for f in pair:
            inp = random_state((f.M, f.N), ("A", "B"), np.random.default_rng(2))
            dists.append([b.probability for b in run_locc_all_branches(f, inp)])
        assert_allclose(dists[0], dists[1], atol=1e-10)
        assert_allclose(dists[0], [0.25] * 4, atol=1e-10)


class TestScriptAndAuthorization:
    def test_script_shape(self):
        script = build_locc_script(identity_table(2))
        assert len(script) == 9
        numbered = [st for st in script if st.step is not None]
        assert [st.step for st in numbered] == [1, 2, 3, 4, 5, 6, 7]
        assert [st.party for st in numbered] == [
            "alice", "alice", "bob", "bob", "bob", "bob", "alice",
        ]
        sends = [st for st in script if st.action == "send"]
        assert [st.operation for st in sends] == ["send_r", "send_s"]
        # r goes out right after Alice's measurement, s right after Bob's
        assert script[2].operation == "send_r" and script[7].operation == "send_s"

    def test_script_dependencies_and_targets(self):
        script = build_locc_script(FunctionTable(3, 2, (0, 1, 0)))
        by_op = {st.operation: st for st in script}
        assert by_op["step3_bob_shift"].depends_on == "r"
        assert by_op["step7_phase_fix"].depends_on == "s"
        assert by_op["step1_controlled_shift"].targets == ("A", "a")
        assert by_op["step4_local_oracle"].targets == ("B", "b")
        for st in script:
            if st.action in ("apply", "measure"):
                assert authorized(st.party, st.targets)

    def test_script_step_one_names_the_representatives(self):
        script = build_locc_script(FunctionTable(4, 2, (1, 0, 1, 0)))
        assert "1, 0" in script[0].description

    def test_authorization_table(self):
        assert authorized("alice", ("A", "a"))
        assert authorized("bob", ("B", "b"))
        assert not authorized("alice", ("B",))
        assert not authorized("bob", ("a", "b"))
        assert not authorized("alice", ("A", "nope"))
        assert OWNERS == {"A": "alice", "a": "alice", "B": "bob", "b": "bob"}


class TestTranscriptAndLedger:
    def run_one(self, f, seed=0):
        inp = random_state((f.M, f.N), ("A", "B"), np.random.default_rng(40))
        return run_locc(f, inp, rng_seed=seed)

    def test_serialized_key_order(self):
        _, transcript, _ = self.run_one(FunctionTable(3, 3, (1, 2, 0)), seed=6)
        data = json.loads(transcript.to_json())
        assert list(data.keys()) == ["f", "seed", "r", "s", "steps", "ledger"]
        assert data["f"] == {"M": 3, "N": 3, "table": [1, 2, 0]}
        assert data["seed"] == 6
        assert [step["step"] for step in data["steps"]] == [1, 2, 3, 4, 5, 6, 7]
        assert set(data["ledger"]) == {
            "ebits_consumed",
            "bits_forward_info",
            "bits_backward_info",
            "bits_forward_wire",
            "bits_backward_wire",
        }

    def test_wire_messages_have_sender_receiver_and_width(self):
        _, transcript, _ = self.run_one(FunctionTable(3, 3, (1, 2, 0)))
        first, second = transcript.messages
        assert (first.sender, first.receiver) == ("alice", "bob")
        assert (second.sender, second.receiver) == ("bob", "alice")
        assert first.value == transcript.r and second.value == transcript.s
        assert first.bits == second.bits == 2

    def test_wire_bits_edge_cases(self):
        assert [wire_bits(n) for n in (1, 2, 3, 4, 5, 8, 9)] == [0, 1, 2, 2, 3, 3, 4]

    def test_make_ledger_arithmetic(self):
        ledger = make_ledger(3, np.log2(3), 0.0)
        assert abs(ledger.ebits_consumed - np.log2(3)) <= 1e-12
        assert ledger.bits_forward_info == ledger.bits_backward_info == np.log2(3)
        assert ledger.bits_forward_wire == ledger.bits_backward_wire == 2
        zero = make_ledger(1, 0.0, 0.0)
        assert zero.ebits_consumed == 0.0 and zero.bits_forward_wire == 0

    def test_ledger_over_exhaustive_small_tables(self):
        for f in exhaustive_tables(2, 2):
            n = build_partition(f).n_values
            inp = random_state((f.M, f.N), ("A", "B"), np.random.default_rng(1))
            _, _, ledger = run_locc(f, inp, rng_seed=3)
            assert abs(ledger.ebits_consumed - np.log2(n)) <= 1e-10
            assert abs(ledger.bits_forward_info - np.log2(n)) <= 1e-12
            assert ledger.bits_forward_wire == wire_bits(n)

    def test_five_level_sets_need_three_wire_bits(self):
        f = FunctionTable(5, 5, (1, 2, 3, 4, 0))
        _, _, ledger = self.run_one(f)
        assert ledger.bits_forward_wire == 3
        assert abs(ledger.bits_forward_info - np.log2(5)) <= 1e-12
        assert abs(ledger.ebits_consumed - np.log2(5)) <= 1e-10


class TestAbSubstate:
    def test_rejects_entangled_ancilla(self):
        f = identity_table(2)
        inp = random_state((2, 2), ("A", "B"), np.random.default_rng(0))
        with pytest.raises(ValueError, match="basis state"):
            ab_substate(initial_state(f, inp))

    def test_tolerance_is_tight(self):
        assert BASIS_STATE_TOL == 1e-10
