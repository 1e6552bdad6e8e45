import random

import pytest
from hypothesis import given, settings, strategies as st

from prego.anticipation import (
    ContextSet,
    PatternMachineBackend,
    TransitionMatrixBackend,
    build_context,
    fit_transition_matrix,
    one_step_verdicts,
    pattern_machine_predict,
)
from prego.core import Procedure, StepRecord
from prego.errors import EmptyContext, IdOutOfRange


def ctx(*seqs):
    return ContextSet(sequences=tuple(
        (f"p{i}", tuple(seq)) for i, seq in enumerate(seqs)))


class TestTransitionMatrix:
    def test_fit_counts_adjacent_pairs(self):
        m = fit_transition_matrix([[0, 1, 2], [0, 1, 3]], 4)
        assert m.counts[0][1] == 2
        assert m.counts[1][2] == 1
        assert m.counts[1][3] == 1
        assert m.counts.sum() == 4

    def test_fit_single_step_sequence(self):
        m = fit_transition_matrix([[5]], 6)
        assert m.counts.sum() == 0

    def test_fit_self_transition(self):
        m = fit_transition_matrix([[0, 0]], 1)
        assert m.counts[0][0] == 1

    def test_fit_rejects_out_of_range(self):
        with pytest.raises(IdOutOfRange):
            fit_transition_matrix([[0, 9]], 5)

    def test_verdicts_examples(self):
        m = fit_transition_matrix([[0, 1, 2]], 3)
        assert one_step_verdicts(m, [0, 1, 2]) == [False, False, False]
        assert one_step_verdicts(m, [0, 2]) == [False, True]

    def test_verdicts_empty_train(self):
        m = fit_transition_matrix([], 3)
        assert one_step_verdicts(m, [0, 1]) == [False, True]

    def test_verdicts_match_bruteforce_pair_set(self):
        rng = random.Random(1)
        for _ in range(100):
            C = rng.randint(2, 20)
            train = [[rng.randrange(C) for _ in range(rng.randint(1, 12))]
                     for _ in range(rng.randint(1, 8))]
            seq = [rng.randrange(C) for _ in range(rng.randint(1, 15))]
            m = fit_transition_matrix(train, C)
            pairs = {(s[i], s[i + 1]) for s in train for i in range(len(s) - 1)}
            expected = [False] + [
                (seq[i - 1], seq[i]) not in pairs for i in range(1, len(seq))]
            assert one_step_verdicts(m, seq) == expected


def bruteforce_suffix_predict(seqs, history, k):
    """Independent oracle for the pattern machine: literal re-statement of
    the rule with explicit, quadratic scanning. Ties break on the
    continuation's first occurrence (sequence order, then offset)."""
    for length in range(len(history), 0, -1):
        suffix = list(history[-length:])
        found = {}
        for seq_pos, seq in enumerate(seqs):
            seq = list(seq)
            for start in range(len(seq)):
                if seq[start:start + length] == suffix and start + length < len(seq):
                    cont = seq[start + length]
                    if cont not in found:
                        found[cont] = [0, seq_pos, start]
                    found[cont][0] += 1
        if found:
            order = sorted(found, key=lambda a: (
                -found[a][0], found[a][1], found[a][2], a))
            return list(order[:k])
    counts = {}
    for seq_pos, seq in enumerate(seqs):
        for pos, a in enumerate(seq):
            if a not in counts:
                counts[a] = [0, seq_pos, pos]
            counts[a][0] += 1
    order = sorted(counts, key=lambda a: (
        -counts[a][0], counts[a][1], counts[a][2], a))
    return list(order[:k])


class TestPatternMachine:
    def test_tie_broken_by_earlier_sequence(self):
        result = pattern_machine_predict(ctx([0, 1, 2], [0, 1, 3]), [0, 1], k=1)
        assert result.predictions == (2,)

    def test_unique_continuation(self):
        assert pattern_machine_predict(ctx([4, 5]), [4], k=1).predictions == (5,)

    def test_global_frequency_fallback(self):
        assert pattern_machine_predict(ctx([0, 1]), [9], k=1).predictions == (0,)

    def test_empty_context(self):
        with pytest.raises(EmptyContext):
            pattern_machine_predict(ContextSet(sequences=()), [0], k=1)

    def test_prefix_of_unique_sequence_predicts_next(self):
        context = ctx([3, 1, 4, 1, 5])
        for t in range(1, 4):
            history = [3, 1, 4, 1, 5][:t]
            got = pattern_machine_predict(context, history, k=1).predictions[0]
            assert got == [3, 1, 4, 1, 5][t]

    def test_top_k_distinct(self):
        result = pattern_machine_predict(
            ctx([0, 1, 2], [0, 1, 3], [0, 1, 3]), [0, 1], k=3)
        assert result.predictions == (3, 2)

    @settings(max_examples=300, deadline=None)
    @given(
        seqs=st.lists(
            st.lists(st.integers(0, 6), min_size=1, max_size=8),
            min_size=1, max_size=5),
        history=st.lists(st.integers(0, 6), min_size=1, max_size=8),
        k=st.integers(1, 3),
    )
    def test_matches_bruteforce_oracle(self, seqs, history, k):
        result = pattern_machine_predict(ctx(*seqs), history, k)
        assert list(result.predictions) == bruteforce_suffix_predict(seqs, history, k)


class TestRelabelingInvariance:
    def test_symbolic_backends_see_structure_not_names(self):
        rng = random.Random(7)
        for _ in range(30):
            C = rng.randint(3, 12)
            train = [[rng.randrange(C) for _ in range(rng.randint(2, 10))]
                     for _ in range(rng.randint(1, 5))]
            seq = [rng.randrange(C) for _ in range(rng.randint(2, 10))]
            perm = list(range(C))
            rng.shuffle(perm)
            inv = {v: i for i, v in enumerate(perm)}

            m = fit_transition_matrix(train, C)
            m2 = fit_transition_matrix([[perm[a] for a in s] for s in train], C)
            assert one_step_verdicts(m, seq) == one_step_verdicts(
                m2, [perm[a] for a in seq])

            context = ctx(*train)
            context2 = ctx(*[[perm[a] for a in s] for s in train])
            for t in range(1, len(seq)):
                r1 = pattern_machine_predict(context, seq[:t], k=2)
                r2 = pattern_machine_predict(
                    context2, [perm[a] for a in seq[:t]], k=2)
                assert [inv[a] for a in r2.predictions] == list(r1.predictions)


class TestBuildContext:
    def make_proc(self, pid, task, actions):
        return Procedure(
            procedure_id=pid, toy_or_task_id=task, actor_id="x",
            steps=tuple(StepRecord(i, a) for i, a in enumerate(actions)))

    def test_policies(self):
        train = [
            self.make_proc("p1", "car/red", [0, 1]),
            self.make_proc("p2", "car/blue", [0, 2]),
            self.make_proc("p3", "plane/grey", [3, 4]),
        ]
        target = self.make_proc("t", "car/red", [0, 1])
        same = build_context(train, target, "same_task")
        assert [pid for pid, _ in same.sequences] == ["p1"]
        by_name = build_context(train, target, "same_task_name")
        assert [pid for pid, _ in by_name.sequences] == ["p1", "p2"]
        everything = build_context(train, target, "all_train")
        assert len(everything.sequences) == 3


class TestBackends:
    def test_transition_backend_equivalent_to_one_step_rule(self):
        train = [[0, 1, 2], [0, 2, 2]]
        m = fit_transition_matrix(train, 3)
        backend = TransitionMatrixBackend(m)
        seq = [0, 2, 1]
        flagged = [False] + [
            seq[t] not in backend.predict(seq[:t]).predictions
            for t in range(1, len(seq))]
        assert flagged == one_step_verdicts(m, seq)

    def test_pattern_backend_delegates(self):
        backend = PatternMachineBackend(ctx([0, 1, 2]))
        assert backend.predict([0, 1], k=1).predictions == (2,)
