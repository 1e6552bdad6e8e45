"""Action vocabularies, symbolic alphabets and the invertible relabeling.

The detection pipeline works over integer action ids. Symbolic backends
(and the LLM prompt) see the actions through an invertible map onto text
symbols; three symbol styles are supported: the decimal index, the action
name itself, or semantics-free random tokens.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import (
    DuplicateName,
    EmptyName,
    InvalidName,
    NonContiguousSteps,
    PoolExhausted,
    UnknownAction,
    UnknownMistakeType,
    UnknownSymbol,
)

ALPHABET_MODES = ("numerical", "semantic", "random")

MISTAKE_TYPES = ("order", "omit", "repeat", "correction", "wrong_action")

# Fixed, ordered pool for random-mode symbols: 512 ASCII tokens "#S000".."#S1FF".
# Multi-character and platform-safe; permuted by seed when an alphabet is built.
RANDOM_SYMBOL_POOL = tuple(f"#S{i:03X}" for i in range(512))

# Symbols are separated by commas (within a sequence) and newlines (between
# sequences) in prompts, so neither may appear inside a symbol or action name.
_FORBIDDEN_IN_NAME = (",", "\n")


@dataclass(frozen=True)
class ActionVocabulary:
    """The ordered action set; ids form the contiguous range [0, size)."""

    actions: tuple[tuple[int, str], ...]

    @property
    def size(self) -> int:
        return len(self.actions)

    def name_of(self, action_id: int) -> str:
        if not 0 <= action_id < self.size:
            raise UnknownAction(f"action id {action_id} not in [0, {self.size})")
        return self.actions[action_id][1]

    def id_of(self, name: str) -> int:
        for aid, aname in self.actions:
            if aname == name:
                return aid
        raise UnknownAction(f"unknown action name {name!r}")

    def names(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.actions)


def build_vocabulary(names: Iterable[str]) -> ActionVocabulary:
    """Assign contiguous ids in first-occurrence order; duplicates rejected."""
    actions: list[tuple[int, str]] = []
    seen: set[str] = set()
    for raw in names:
        name = raw.strip()
        if not name:
            raise EmptyName(f"empty action name {raw!r}")
        for ch in _FORBIDDEN_IN_NAME:
            if ch in name:
                raise InvalidName(f"action name {name!r} contains {ch!r}")
        if name in seen:
            raise DuplicateName(f"duplicate action name {name!r}")
        seen.add(name)
        actions.append((len(actions), name))
    if not actions:
        raise EmptyName("vocabulary needs at least one action name")
    return ActionVocabulary(actions=tuple(actions))


@dataclass(frozen=True)
class SymbolAlphabet:
    """Invertible map between action ids and prompt symbols."""

    mode: str
    seed: int
    forward: dict[int, str] = field(repr=False)
    backward: dict[str, int] = field(repr=False)

    def symbol(self, action_id: int) -> str:
        try:
            return self.forward[action_id]
        except KeyError:
            raise UnknownAction(f"action id {action_id} not in alphabet") from None

    def action(self, symbol: str) -> int:
        try:
            return self.backward[symbol]
        except KeyError:
            raise UnknownSymbol(f"symbol {symbol!r} not in alphabet") from None

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.backward

    def to_json(self) -> str:
        doc = {"mode": self.mode, "seed": self.seed,
               "forward": {str(k): v for k, v in sorted(self.forward.items())}}
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SymbolAlphabet":
        doc = json.loads(text)
        forward = {int(k): v for k, v in doc["forward"].items()}
        backward = {v: k for k, v in forward.items()}
        return cls(mode=doc["mode"], seed=int(doc["seed"]),
                   forward=forward, backward=backward)


def build_alphabet(vocab: ActionVocabulary, mode: str, seed: int = 0) -> SymbolAlphabet:
    """Build the relabeling for a vocabulary; deterministic in (vocab, mode, seed)."""
    if mode not in ALPHABET_MODES:
        raise ValueError(f"mode must be one of {ALPHABET_MODES}, got {mode!r}")
    if mode == "numerical":
        forward = {aid: str(aid) for aid, _ in vocab.actions}
    elif mode == "semantic":
        forward = {aid: name for aid, name in vocab.actions}
    else:
        if vocab.size > len(RANDOM_SYMBOL_POOL):
            raise PoolExhausted(
                f"vocabulary size {vocab.size} exceeds the random pool "
                f"({len(RANDOM_SYMBOL_POOL)} symbols)")
        pool = list(RANDOM_SYMBOL_POOL)
        random.Random(seed).shuffle(pool)
        forward = {aid: pool[aid] for aid, _ in vocab.actions}
    backward = {sym: aid for aid, sym in forward.items()}
    if len(backward) != len(forward):
        raise InvalidName("symbols are not distinct; action names collide")
    return SymbolAlphabet(mode=mode, seed=seed, forward=forward, backward=backward)


def encode(alphabet: SymbolAlphabet, sequence: Sequence[int]) -> list[str]:
    return [alphabet.symbol(a) for a in sequence]


def decode(alphabet: SymbolAlphabet, symbols: Sequence[str]) -> list[int]:
    return [alphabet.action(s) for s in symbols]


@dataclass(frozen=True)
class StepRecord:
    """One executed step, with its mistake annotation if any."""

    step_index: int
    action_id: int
    start_frame: Optional[int] = None
    end_frame: Optional[int] = None
    is_mistake: bool = False
    mistake_type: Optional[str] = None

    def __post_init__(self):
        if self.mistake_type is not None and self.mistake_type not in MISTAKE_TYPES:
            raise UnknownMistakeType(
                f"unknown mistake_type {self.mistake_type!r}; "
                f"expected one of {MISTAKE_TYPES}")
        if not self.is_mistake and self.mistake_type is not None:
            raise ValueError("mistake_type requires is_mistake=true")
        if (self.start_frame is not None and self.end_frame is not None
                and self.end_frame < self.start_frame):
            raise ValueError("end_frame < start_frame")


@dataclass(frozen=True)
class Procedure:
    """An ordered sequence of steps executed by one actor on one task."""

    procedure_id: str
    toy_or_task_id: str
    actor_id: str
    steps: tuple[StepRecord, ...]
    confidence: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not self.steps:
            raise ValueError(f"procedure {self.procedure_id!r} has no steps")
        for pos, step in enumerate(self.steps):
            if step.step_index != pos:
                raise NonContiguousSteps(
                    f"procedure {self.procedure_id!r}: step_index {step.step_index} "
                    f"at position {pos}")
        if self.confidence is not None:
            for c in self.confidence:
                if not 0.0 <= c <= 1.0:
                    raise ValueError(f"confidence {c} outside [0, 1]")

    def action_sequence(self) -> list[int]:
        return [s.action_id for s in self.steps]

    def mistake_labels(self) -> list[bool]:
        return [s.is_mistake for s in self.steps]

    def first_mistake_index(self) -> Optional[int]:
        for s in self.steps:
            if s.is_mistake:
                return s.step_index
        return None
