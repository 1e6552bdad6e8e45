"""The online misalignment engine.

Walks a recognized step sequence causally: at each step the anticipation
backend sees exactly the preceding prefix, and a step is flagged as a
mistake when the recognized action is not among the anticipated ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .anticipation import AnticipationResult
from .errors import BudgetExceeded, TransportError

STOP_POLICIES = ("full_sequence", "stop_at_first")

CAUSES = ("misalignment", "unknown_symbol", "none")


@dataclass(frozen=True)
class Verdict:
    step_index: int
    recognized: int
    anticipated: tuple[int, ...]
    is_mistake: bool
    cause: str

    def to_json_obj(self, procedure_id: Optional[str] = None) -> dict:
        obj = {
            "step_index": self.step_index,
            "recognized": self.recognized,
            "anticipated": list(self.anticipated),
            "is_mistake": self.is_mistake,
            "cause": self.cause,
        }
        if procedure_id is not None:
            obj["procedure_id"] = procedure_id
        return obj


@dataclass
class DetectionRun:
    procedure_id: str
    verdicts: list[Verdict] = field(default_factory=list)
    stop_policy: str = "full_sequence"
    incomplete: bool = False
    error: Optional[str] = None

    @property
    def first_mistake_index(self) -> Optional[int]:
        for v in self.verdicts:
            if v.is_mistake:
                return v.step_index
        return None

    def to_jsonl(self) -> str:
        return "\n".join(
            json.dumps(v.to_json_obj(self.procedure_id), sort_keys=True)
            for v in self.verdicts)


def detect_step(
    recognized: int, anticipated: AnticipationResult, step_index: int = 0
) -> Verdict:
    """Apply the misalignment rule to one step.

    With k > 1 the recognized action aligns if it matches any anticipated
    action. An empty anticipation (undecodable LLM emission) counts as a
    mismatch with its own cause so reports can tell the two apart.
    """
    if not anticipated.predictions:
        return Verdict(
            step_index=step_index, recognized=recognized, anticipated=(),
            is_mistake=True, cause="unknown_symbol")
    mistake = recognized not in anticipated.predictions
    return Verdict(
        step_index=step_index,
        recognized=recognized,
        anticipated=tuple(anticipated.predictions),
        is_mistake=mistake,
        cause="misalignment" if mistake else "none",
    )


def run_online(
    sequence: Sequence[int],
    backend,
    k: int = 1,
    stop_policy: str = "full_sequence",
    procedure_id: str = "",
) -> DetectionRun:
    """Detect mistakes over one sequence, step by step.

    The backend is queried with exactly sequence[0:t] when judging step t;
    the first step has no history to anticipate from and is always CORRECT.
    Transport or budget failures return the partial run flagged incomplete
    instead of losing the verdicts produced so far.
    """
    if not sequence:
        raise ValueError("sequence must be non-empty")
    if stop_policy not in STOP_POLICIES:
        raise ValueError(f"stop_policy must be one of {STOP_POLICIES}")
    run = DetectionRun(procedure_id=procedure_id, stop_policy=stop_policy)
    run.verdicts.append(Verdict(
        step_index=0, recognized=sequence[0], anticipated=(),
        is_mistake=False, cause="none"))
    for t in range(1, len(sequence)):
        try:
            result = backend.predict(list(sequence[:t]), k)
        except (TransportError, BudgetExceeded) as e:
            run.incomplete = True
            run.error = str(e)
            return run
        verdict = detect_step(sequence[t], result, step_index=t)
        run.verdicts.append(verdict)
        if stop_policy == "stop_at_first" and verdict.is_mistake:
            break
    return run
