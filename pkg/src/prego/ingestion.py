"""Readers for annotation, prediction and confidence JSONL files.

Three wire formats, one object per line:

  annotations: {"procedure_id", "toy_or_task_id", "actor_id", "step_index",
                "action_name", "start_frame", "end_frame", "is_mistake",
                "mistake_type"}
  predictions: {"video_id", "frame", "action_id", "score"}
  confidence:  {"video_id", "frame", "confidence"}

Lines whose object carries a "_header" key are run metadata echoed by the
CLI and are skipped by every reader.

Per-frame prediction streams are collapsed so that no two equal actions
appear back to back (the recognizer emits the same action over consecutive
frames); the collapse keeps the first frame of each run so that predicted
steps can later be matched to annotated frame spans.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .core import ActionVocabulary, Procedure, StepRecord, build_vocabulary
from .errors import (
    NonContiguousSteps,
    OutOfOrderFrames,
    ParseError,
    UnknownAction,
)

TRANSCRIPT_KINDS = ("oracle", "predicted")


@dataclass(frozen=True)
class FramePrediction:
    video_id: str
    frame: int
    action_id: int
    score: Optional[float] = None  # parsed but unused by detection


@dataclass(frozen=True)
class TranscriptSource:
    """Where recognized actions come from: ground truth or a frame stream."""

    kind: str
    origin: str

    def __post_init__(self):
        if self.kind not in TRANSCRIPT_KINDS:
            raise ValueError(f"kind must be one of {TRANSCRIPT_KINDS}")


def _iter_jsonl(path) -> "list[tuple[int, dict]]":
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(line_no, f"invalid JSON: {e}") from None
        if not isinstance(obj, dict):
            raise ParseError(line_no, "expected a JSON object")
        if "_header" in obj:
            continue
        rows.append((line_no, obj))
    return rows


def parse_annotations(
    path, vocab: Optional[ActionVocabulary] = None
) -> tuple[list[Procedure], ActionVocabulary]:
    """Parse an annotations file into Procedures grouped by procedure_id.

    If no vocabulary is given, one is built from the action names in
    first-occurrence order; otherwise every name must already be known.
    """
    rows = _iter_jsonl(path)
    if not rows:
        raise ParseError(0, f"no records in {path}")

    by_proc: dict[str, list[tuple[int, dict]]] = {}
    names_in_order: list[str] = []
    seen_names: set[str] = set()
    for line_no, obj in rows:
        for key in ("procedure_id", "step_index", "action_name"):
            if key not in obj:
                raise ParseError(line_no, f"missing field {key!r}")
        by_proc.setdefault(str(obj["procedure_id"]), []).append((line_no, obj))
        name = str(obj["action_name"]).strip()
        if name not in seen_names:
            seen_names.add(name)
            names_in_order.append(name)

    if vocab is None:
        vocab = build_vocabulary(names_in_order)
    else:
        known = set(vocab.names())
        for name in names_in_order:
            if name not in known:
                raise UnknownAction(f"action name {name!r} not in provided vocabulary")

    procedures = []
    for pid, entries in by_proc.items():
        entries.sort(key=lambda e: int(e[1]["step_index"]))
        steps = []
        for pos, (line_no, obj) in enumerate(entries):
            idx = int(obj["step_index"])
            if idx != pos:
                raise NonContiguousSteps(
                    f"procedure {pid!r}: expected step_index {pos}, got {idx} "
                    f"(line {line_no})")
            try:
                steps.append(StepRecord(
                    step_index=idx,
                    action_id=vocab.id_of(str(obj["action_name"]).strip()),
                    start_frame=obj.get("start_frame"),
                    end_frame=obj.get("end_frame"),
                    is_mistake=bool(obj.get("is_mistake", False)),
                    mistake_type=obj.get("mistake_type"),
                ))
            except ValueError as e:
                raise ParseError(line_no, str(e)) from None
        first = entries[0][1]
        procedures.append(Procedure(
            procedure_id=pid,
            toy_or_task_id=str(first.get("toy_or_task_id", "")),
            actor_id=str(first.get("actor_id", "")),
            steps=tuple(steps),
        ))
    return procedures, vocab


def parse_predictions(path) -> dict[str, list[FramePrediction]]:
    """Parse a per-frame prediction stream, keyed by video_id.

    Frames within one video must arrive strictly increasing.
    """
    streams: dict[str, list[FramePrediction]] = {}
    for line_no, obj in _iter_jsonl(path):
        for key in ("video_id", "frame", "action_id"):
            if key not in obj:
                raise ParseError(line_no, f"missing field {key!r}")
        pred = FramePrediction(
            video_id=str(obj["video_id"]),
            frame=int(obj["frame"]),
            action_id=int(obj["action_id"]),
            score=obj.get("score"),
        )
        stream = streams.setdefault(pred.video_id, [])
        if stream and pred.frame <= stream[-1].frame:
            raise OutOfOrderFrames(
                f"video {pred.video_id!r}: frame {pred.frame} after "
                f"{stream[-1].frame} (line {line_no})")
        stream.append(pred)
    return streams


def parse_confidence(path) -> dict[str, list[float]]:
    """Per-frame performer confidence traces, keyed by video_id."""
    traces: dict[str, list[float]] = {}
    last_frame: dict[str, int] = {}
    for line_no, obj in _iter_jsonl(path):
        for key in ("video_id", "frame", "confidence"):
            if key not in obj:
                raise ParseError(line_no, f"missing field {key!r}")
        vid = str(obj["video_id"])
        frame = int(obj["frame"])
        if vid in last_frame and frame <= last_frame[vid]:
            raise OutOfOrderFrames(
                f"video {vid!r}: frame {frame} after {last_frame[vid]} "
                f"(line {line_no})")
        last_frame[vid] = frame
        value = float(obj["confidence"])
        if not 0.0 <= value <= 1.0:
            raise ParseError(line_no, f"confidence {value} outside [0, 1]")
        traces.setdefault(vid, []).append(value)
    return traces


def attach_confidence(
    procedures: Sequence[Procedure], traces: dict[str, list[float]]
) -> list[Procedure]:
    """Return copies of the procedures with confidence traces attached."""
    out = []
    for proc in procedures:
        trace = traces.get(proc.procedure_id)
        if trace is None:
            out.append(proc)
        else:
            out.append(Procedure(
                procedure_id=proc.procedure_id,
                toy_or_task_id=proc.toy_or_task_id,
                actor_id=proc.actor_id,
                steps=proc.steps,
                confidence=tuple(trace),
            ))
    return out


def _dedup_runs(predictions: Sequence[FramePrediction]) -> list[tuple[int, int]]:
    """Collapse consecutive equal predictions to (action_id, first_frame) runs."""
    prev_frame = None
    runs: list[tuple[int, int]] = []
    for pred in predictions:
        if prev_frame is not None and pred.frame <= prev_frame:
            raise OutOfOrderFrames(
                f"frame {pred.frame} not after {prev_frame}")
        prev_frame = pred.frame
        if not runs or runs[-1][0] != pred.action_id:
            runs.append((pred.action_id, pred.frame))
    return runs


def dedup_stream(predictions: Sequence[FramePrediction]) -> list[int]:
    """Run-length collapse: no two equal adjacent actions survive.

    A recurring action legally reappears after an intervening different one.
    """
    return [action for action, _ in _dedup_runs(predictions)]


def to_step_sequence(
    source: TranscriptSource, vocab: Optional[ActionVocabulary] = None
) -> dict[str, list[int]]:
    """Load recognized action sequences keyed by procedure/video id.

    Oracle sources pass through annotated actions; predicted sources apply
    the run-length collapse.
    """
    if source.kind == "oracle":
        procedures, _ = parse_annotations(source.origin, vocab)
        return {p.procedure_id: p.action_sequence() for p in procedures}
    streams = parse_predictions(source.origin)
    return {vid: dedup_stream(stream) for vid, stream in streams.items()}


def align_predicted_steps(
    procedure: Procedure, predictions: Sequence[FramePrediction]
) -> list[bool]:
    """Ground-truth mistake label for each deduplicated predicted step.

    A predicted step inherits the label of the annotated step whose frame
    span contains the step's first frame; steps matching no span count as
    correct. Prediction streams carry no mistake ground truth of their own,
    so this span rule is the single point where the two are reconciled.
    """
    labels = []
    for _, first_frame in _dedup_runs(predictions):
        label = False
        for step in procedure.steps:
            if (step.start_frame is not None and step.end_frame is not None
                    and step.start_frame <= first_frame <= step.end_frame):
                label = step.is_mistake
                break
        labels.append(label)
    return labels
