"""Next-step anticipation backends.

Three interchangeable predictors over integer action sequences:

  * a one-step transition matrix fitted on correct training sequences,
  * a deterministic longest-suffix pattern machine over a context set,
  * a remote LLM queried through rendered prompts (see llm.py).

All backends answer the same question: given the recognized history so
far, which action comes next?
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Procedure, SymbolAlphabet
from .errors import EmptyContext, IdOutOfRange, UnencodableAction

CONTEXT_POLICIES = ("same_task", "same_task_name", "all_train")

PROMPT_STYLES = ("referenced_context", "unreferenced_context", "elaborate")

MAX_PREDICTIONS = 5


@dataclass(frozen=True)
class ContextSet:
    """Correct training sequences shown to the anticipator as examples."""

    sequences: tuple[tuple[str, tuple[int, ...]], ...]
    selection_policy: str = "same_task"

    def action_sequences(self) -> list[tuple[int, ...]]:
        return [seq for _, seq in self.sequences]


def _task_name(toy_or_task_id: str) -> str:
    # Grouping key convention: "name/variant"; the name part identifies
    # toys sharing subparts. Ids without a slash are their own name.
    return toy_or_task_id.split("/", 1)[0]


def build_context(
    train: Sequence[Procedure],
    target: Procedure,
    policy: str = "same_task",
) -> ContextSet:
    """Select context sequences from the training split for one procedure."""
    if policy not in CONTEXT_POLICIES:
        raise ValueError(f"policy must be one of {CONTEXT_POLICIES}")
    if policy == "same_task":
        chosen = [p for p in train if p.toy_or_task_id == target.toy_or_task_id]
    elif policy == "same_task_name":
        want = _task_name(target.toy_or_task_id)
        chosen = [p for p in train if _task_name(p.toy_or_task_id) == want]
    else:
        chosen = list(train)
    return ContextSet(
        sequences=tuple((p.procedure_id, tuple(p.action_sequence())) for p in chosen),
        selection_policy=policy,
    )


@dataclass(frozen=True)
class AnticipationResult:
    """Top-k next-action prediction; raw_emission kept for LLM audits."""

    predictions: tuple[int, ...]
    raw_emission: Optional[str] = None


# --- one-step memory -------------------------------------------------------

@dataclass(frozen=True)
class TransitionMatrix:
    """counts[l, m] = times action m immediately followed action l in training."""

    counts: np.ndarray

    @property
    def num_actions(self) -> int:
        return self.counts.shape[0]

    def successors(self, action_id: int) -> list[int]:
        """Recorded followers of an action, most frequent first, id breaking ties."""
        if not 0 <= action_id < self.num_actions:
            raise IdOutOfRange(f"action id {action_id} not in [0, {self.num_actions})")
        row = self.counts[action_id]
        ids = np.nonzero(row)[0]
        return sorted(ids.tolist(), key=lambda m: (-int(row[m]), m))


def fit_transition_matrix(
    train: Sequence[Sequence[int]], num_actions: int
) -> TransitionMatrix:
    counts = np.zeros((num_actions, num_actions), dtype=np.int64)
    for seq in train:
        for l, m in zip(seq, seq[1:]):
            if not (0 <= l < num_actions and 0 <= m < num_actions):
                raise IdOutOfRange(
                    f"pair ({l}, {m}) outside [0, {num_actions})")
            counts[l, m] += 1
    return TransitionMatrix(counts=counts)


def one_step_verdicts(matrix: TransitionMatrix, sequence: Sequence[int]) -> list[bool]:
    """Flag each step whose incoming transition was never seen in training.

    Position 0 has no incoming transition and is never flagged.
    """
    if not sequence:
        raise ValueError("sequence must be non-empty")
    C = matrix.num_actions
    for a in sequence:
        if not 0 <= a < C:
            raise IdOutOfRange(f"action id {a} not in [0, {C})")
    verdicts = [False]
    for prev, cur in zip(sequence, sequence[1:]):
        verdicts.append(int(matrix.counts[prev, cur]) == 0)
    return verdicts


# --- suffix pattern machine ------------------------------------------------

def pattern_machine_predict(
    context: ContextSet,
    history: Sequence[int],
    k: int = 1,
    alphabet: Optional[SymbolAlphabet] = None,
) -> AnticipationResult:
    """Deterministic sequence completion by longest-suffix matching.

    The longest suffix of the history that occurs contiguously inside any
    context sequence (with at least one element after it) selects the
    candidate continuations; the k most frequent win, ties broken by the
    continuation's first occurrence (earlier context sequence, then
    earlier position within it). Histories matching no suffix at all fall
    back to the most frequent context actions under the same tie rule.
    The tie-break is purely structural, so predictions commute with any
    bijective relabeling of the action ids.
    """
    if not context.sequences:
        raise EmptyContext("context has no sequences")
    if not history:
        raise ValueError("history must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    if alphabet is not None:
        for a in history:
            if a not in alphabet.forward:
                raise UnencodableAction(f"action id {a} has no symbol")

    sequences = context.action_sequences()
    for length in range(len(history), 0, -1):
        suffix = tuple(history[-length:])
        # continuation -> [count, (first sequence, first position) seen]
        stats: dict[int, list] = {}
        for seq_pos, seq in enumerate(sequences):
            for start in range(len(seq) - length):
                if tuple(seq[start:start + length]) == suffix:
                    cont = seq[start + length]
                    entry = stats.setdefault(cont, [0, (seq_pos, start)])
                    entry[0] += 1
        if stats:
            ranked = sorted(
                stats, key=lambda a: (-stats[a][0], stats[a][1], a))
            return AnticipationResult(predictions=tuple(ranked[:k]))

    freq: dict[int, list] = {}
    for seq_pos, seq in enumerate(sequences):
        for pos, a in enumerate(seq):
            entry = freq.setdefault(a, [0, (seq_pos, pos)])
            entry[0] += 1
    ranked = sorted(freq, key=lambda a: (-freq[a][0], freq[a][1], a))
    return AnticipationResult(predictions=tuple(ranked[:k]))


# --- backend objects for the detection engine ------------------------------

class PatternMachineBackend:
    """Suffix pattern machine wrapped as a detection backend."""

    def __init__(self, context: ContextSet, alphabet: Optional[SymbolAlphabet] = None):
        self.context = context
        self.alphabet = alphabet

    def predict(self, history: Sequence[int], k: int = 1) -> AnticipationResult:
        return pattern_machine_predict(self.context, history, k, self.alphabet)


class TransitionMatrixBackend:
    """One-step memory as a detection backend.

    Anticipates every recorded follower of the latest action, so the
    misalignment rule reduces exactly to "transition never seen in
    training" regardless of k.
    """

    def __init__(self, matrix: TransitionMatrix):
        self.matrix = matrix

    def predict(self, history: Sequence[int], k: int = 1) -> AnticipationResult:
        if not history:
            raise ValueError("history must be non-empty")
        return AnticipationResult(
            predictions=tuple(self.matrix.successors(history[-1])))
