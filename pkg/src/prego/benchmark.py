"""Benchmark construction and evaluation.

Two split policies mirror the benchmark datasets: the one-class split puts
every fully-correct procedure in the train set and distributes mistaken
ones over val/test; the confidence split assigns procedures by the median
of the performer's per-frame confidence trace. Metrics are micro-averaged
step-level precision/recall/F1 over the verdict streams.
"""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import Procedure
from .detection import DetectionRun
from .errors import AlignmentMismatch, NoCorrectProcedures

log = logging.getLogger(__name__)

SPLIT_POLICIES = ("occ_by_mistake", "confidence")

DEFAULT_CONFIDENCE_THRESHOLD = 0.6


@dataclass(frozen=True)
class BenchmarkSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    policy: str
    threshold: Optional[float] = None

    def to_json(self) -> str:
        doc = {"policy": self.policy}
        if self.threshold is not None:
            doc["threshold"] = self.threshold
        doc.update(train=list(self.train), val=list(self.val),
                   test=list(self.test))
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkSplit":
        doc = json.loads(text)
        return cls(
            train=tuple(doc["train"]), val=tuple(doc["val"]),
            test=tuple(doc["test"]), policy=doc["policy"],
            threshold=doc.get("threshold"))


def _has_mistake(procedure: Procedure) -> bool:
    return any(s.is_mistake for s in procedure.steps)


def split_occ(
    procedures: Sequence[Procedure], val_ratio: float = 0.5
) -> BenchmarkSplit:
    """One-class split: train holds exactly the mistake-free procedures.

    Mistaken procedures go to val or test by a deterministic hash of their
    id, so the assignment is stable across runs and machines.
    """
    train, val, test = [], [], []
    for proc in procedures:
        if not _has_mistake(proc):
            train.append(proc.procedure_id)
        else:
            digest = hashlib.sha256(proc.procedure_id.encode("utf-8")).hexdigest()
            bucket = int(digest[:8], 16) / 0x100000000
            (val if bucket < val_ratio else test).append(proc.procedure_id)
    if not train:
        raise NoCorrectProcedures("no mistake-free procedures to train on")
    if not val and not test:
        log.warning("all procedures are correct; val and test are empty")
    return BenchmarkSplit(
        train=tuple(train), val=tuple(val), test=tuple(test),
        policy="occ_by_mistake")


def split_by_confidence(
    procedures: Sequence[Procedure],
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> BenchmarkSplit:
    """Confidence split: median trace below the threshold (or no trace) → test."""
    train, test = [], []
    for proc in procedures:
        if proc.confidence is None or not proc.confidence:
            test.append(proc.procedure_id)
        elif statistics.median(proc.confidence) < threshold:
            test.append(proc.procedure_id)
        else:
            train.append(proc.procedure_id)
    return BenchmarkSplit(
        train=tuple(train), val=(), test=tuple(test),
        policy="confidence", threshold=threshold)


def trim_to_first_mistake(procedure: Procedure) -> Procedure:
    """Truncate after the first mistaken step; correct procedures pass through."""
    first = procedure.first_mistake_index()
    if first is None:
        return procedure
    return Procedure(
        procedure_id=procedure.procedure_id,
        toy_or_task_id=procedure.toy_or_task_id,
        actor_id=procedure.actor_id,
        steps=procedure.steps[:first + 1],
        confidence=procedure.confidence,
    )


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        return cls(tp=tp, fp=fp, tn=tn, fn=fn,
                   precision=precision, recall=recall, f1=f1)

    def to_json_obj(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1}

    def to_table(self) -> str:
        # Same column order as the benchmark tables: Precision, Recall, F1.
        header = f"{'Precision':>10} {'Recall':>10} {'F1':>10}"
        row = f"{self.precision:>10.3f} {self.recall:>10.3f} {self.f1:>10.3f}"
        return header + "\n" + row


def compute_metrics(
    runs: Sequence[DetectionRun],
    ground_truth: dict[str, Sequence[bool]],
    average: str = "micro",
) -> MetricsReport:
    """Score verdict streams against aligned step labels.

    Micro averaging pools the step-level confusion counts over all runs;
    macro averages per-run precision/recall and reports pooled counts.
    """
    if average not in ("micro", "macro"):
        raise ValueError("average must be 'micro' or 'macro'")
    tp = fp = tn = fn = 0
    per_run: list[tuple[int, int, int, int]] = []
    for run in runs:
        if run.procedure_id not in ground_truth:
            raise AlignmentMismatch(
                f"no ground truth for procedure {run.procedure_id!r}")
        labels = list(ground_truth[run.procedure_id])
        if len(labels) != len(run.verdicts):
            raise AlignmentMismatch(
                f"procedure {run.procedure_id!r}: {len(run.verdicts)} verdicts "
                f"vs {len(labels)} labels")
        rtp = rfp = rtn = rfn = 0
        for verdict, truth in zip(run.verdicts, labels):
            if verdict.is_mistake and truth:
                rtp += 1
            elif verdict.is_mistake and not truth:
                rfp += 1
            elif not verdict.is_mistake and truth:
                rfn += 1
            else:
                rtn += 1
        tp, fp, tn, fn = tp + rtp, fp + rfp, tn + rtn, fn + rfn
        per_run.append((rtp, rfp, rtn, rfn))
    if average == "micro":
        return MetricsReport.from_counts(tp, fp, tn, fn)
    precisions, recalls = [], []
    for rtp, rfp, rtn, rfn in per_run:
        precisions.append(rtp / (rtp + rfp) if rtp + rfp else 0.0)
        recalls.append(rtp / (rtp + rfn) if rtp + rfn else 0.0)
    precision = sum(precisions) / len(precisions) if precisions else 0.0
    recall = sum(recalls) / len(recalls) if recalls else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return MetricsReport(tp=tp, fp=fp, tn=tn, fn=fn,
                         precision=precision, recall=recall, f1=f1)


def first_alarm_accuracy(
    runs: Sequence[DetectionRun],
    ground_truth: dict[str, Sequence[bool]],
) -> float:
    """Auxiliary per-procedure metric: fraction of runs whose first flagged
    step coincides with the first true mistake (or where both are absent)."""
    if not runs:
        return 0.0
    hits = 0
    for run in runs:
        labels = list(ground_truth.get(run.procedure_id, []))
        true_first = next(
            (i for i, m in enumerate(labels) if m), None)
        if run.first_mistake_index == true_first:
            hits += 1
    return hits / len(runs)
