"""Prompt rendering for the LLM anticipation backend.

Three frozen styles (see docs/prompts.md for the bit-exact layout):

  referenced_context   "Given the following sequences:" / "Complete the
                       sequence:" / "Answer:"
  unreferenced_context "Context:" / "Input:" / "Output:"
  elaborate            "Given the sequences of the following type:" /
                       "Complete the following sequence:" / "Sequence is
                       completed with:"

Context sequences are one per line with comma-separated symbols; the
history line ends with a trailing comma and no newline content after the
final marker, so the model is positioned to complete the sequence.
Rendering is deterministic: equal specs produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .anticipation import ContextSet, PROMPT_STYLES
from .core import SymbolAlphabet, encode
from .errors import UnencodableAction, UnknownAction

# (context header, history header, completion marker) per style.
_TEMPLATES = {
    "referenced_context": (
        "Given the following sequences:",
        "Complete the sequence:",
        "Answer:",
    ),
    "unreferenced_context": (
        "Context:",
        "Input:",
        "Output:",
    ),
    "elaborate": (
        "Given the sequences of the following type:",
        "Complete the following sequence:",
        "Sequence is completed with:",
    ),
}


@dataclass(frozen=True)
class PromptSpec:
    style: str
    alphabet: SymbolAlphabet
    context: ContextSet
    history: tuple[int, ...]

    def __post_init__(self):
        if self.style not in PROMPT_STYLES:
            raise ValueError(f"style must be one of {PROMPT_STYLES}")
        if not self.history:
            raise ValueError("history must be non-empty")


def render_prompt(spec: PromptSpec) -> str:
    ctx_header, hist_header, marker = _TEMPLATES[spec.style]
    try:
        ctx_lines = [
            ",".join(encode(spec.alphabet, seq))
            for seq in spec.context.action_sequences()
        ]
        history = ",".join(encode(spec.alphabet, spec.history))
    except UnknownAction as e:
        raise UnencodableAction(str(e)) from None
    parts = [ctx_header]
    parts.extend(ctx_lines)
    parts.append(hist_header)
    parts.append(history + ",")
    parts.append(marker)
    return "\n".join(parts) + "\n"
