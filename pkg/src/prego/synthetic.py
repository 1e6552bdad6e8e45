"""Synthetic procedure grammars for oracle-backed testing.

A grammar is a set of tasks, each a DAG over named steps; correct
procedures are linearizations of a task's DAG, and mistakes are injected
as deterministic deviations (wrong action, repeat, order violation,
omission). Grammar files are JSON:

  {"tasks": [{"task_id": ..., "steps": [names...], "edges": [[i, j], ...]}]}

with an edge [i, j] meaning step i must precede step j.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Optional, Sequence

from .core import ActionVocabulary, Procedure, StepRecord, build_vocabulary
from .errors import CyclicGrammar, NoValidInjection

# Above this many topological orders we stop enumerating and fall back to
# random greedy sampling (documented bias: not exactly uniform).
UNIFORM_ENUMERATION_LIMIT = 10_000

INJECTABLE_KINDS = ("order", "omit", "repeat", "wrong_action")


@dataclass(frozen=True)
class TaskGrammar:
    task_id: str
    steps: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = len(self.steps)
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"task {self.task_id!r}: bad edge ({i}, {j})")

    def predecessors(self) -> dict[int, set[int]]:
        preds: dict[int, set[int]] = {i: set() for i in range(len(self.steps))}
        for i, j in self.edges:
            preds[j].add(i)
        return preds

    def check_acyclic(self) -> None:
        ts = TopologicalSorter({j: {i for i, j2 in self.edges if j2 == j}
                                for j in range(len(self.steps))})
        try:
            ts.prepare()
        except CycleError as e:
            raise CyclicGrammar(f"task {self.task_id!r} has a cycle: {e}") from None


@dataclass(frozen=True)
class SyntheticGrammar:
    tasks: tuple[TaskGrammar, ...]
    vocab: ActionVocabulary
    seed: int = 0

    def task(self, task_id: str) -> TaskGrammar:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(f"unknown task {task_id!r}")


def grammar_from_obj(doc: dict, seed: int = 0) -> SyntheticGrammar:
    tasks = tuple(
        TaskGrammar(
            task_id=str(t["task_id"]),
            steps=tuple(str(s) for s in t["steps"]),
            edges=tuple((int(i), int(j)) for i, j in t.get("edges", [])),
        )
        for t in doc["tasks"]
    )
    names: list[str] = []
    for t in tasks:
        names.extend(t.steps)
    # Step names shared across tasks map to one action id.
    seen, unique = set(), []
    for n in names:
        if n not in seen:
            seen.add(n)
            unique.append(n)
    grammar = SyntheticGrammar(
        tasks=tasks, vocab=build_vocabulary(unique), seed=seed)
    for t in tasks:
        t.check_acyclic()
    return grammar


def load_grammar(path, seed: int = 0) -> SyntheticGrammar:
    return grammar_from_obj(json.loads(Path(path).read_text()), seed=seed)


def enumerate_topological_orders(
    task: TaskGrammar, limit: int = UNIFORM_ENUMERATION_LIMIT
) -> Optional[list[tuple[int, ...]]]:
    """All linearizations of the task DAG, or None past the limit."""
    task.check_acyclic()
    preds = task.predecessors()
    n = len(task.steps)
    orders: list[tuple[int, ...]] = []

    def extend(order: list[int], done: set[int]) -> bool:
        if len(order) == n:
            orders.append(tuple(order))
            return len(orders) <= limit
        for cand in range(n):
            if cand in done or not preds[cand] <= done:
                continue
            order.append(cand)
            done.add(cand)
            ok = extend(order, done)
            order.pop()
            done.remove(cand)
            if not ok:
                return False
        return True

    if not extend([], set()):
        return None
    return orders


def _sample_linearization(task: TaskGrammar, rng: random.Random) -> list[int]:
    orders = enumerate_topological_orders(task)
    if orders is not None:
        return list(rng.choice(orders))
    # Random greedy fallback for very large DAGs; each step picks uniformly
    # among currently available nodes, which is not exactly uniform over orders.
    preds = task.predecessors()
    done: set[int] = set()
    order: list[int] = []
    while len(order) < len(task.steps):
        ready = sorted(i for i in range(len(task.steps))
                       if i not in done and preds[i] <= done)
        pick = rng.choice(ready)
        order.append(pick)
        done.add(pick)
    return order


def generate_procedures(
    grammar: SyntheticGrammar, n: int, seed: Optional[int] = None
) -> list[Procedure]:
    """Sample n correct procedures, cycling through the grammar's tasks."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(grammar.seed if seed is None else seed)
    for task in grammar.tasks:
        task.check_acyclic()
    procedures = []
    for i in range(n):
        task = grammar.tasks[i % len(grammar.tasks)]
        order = _sample_linearization(task, rng)
        steps = tuple(
            StepRecord(step_index=pos,
                       action_id=grammar.vocab.id_of(task.steps[local]))
            for pos, local in enumerate(order)
        )
        procedures.append(Procedure(
            procedure_id=f"synth-{task.task_id}-{i:04d}",
            toy_or_task_id=task.task_id,
            actor_id="synthetic",
            steps=steps,
        ))
    return procedures


def _local_order(grammar: SyntheticGrammar, procedure: Procedure) -> list[int]:
    task = grammar.task(procedure.toy_or_task_id)
    name_to_local = {name: i for i, name in enumerate(task.steps)}
    out = []
    for step in procedure.steps:
        name = grammar.vocab.name_of(step.action_id)
        if name not in name_to_local:
            raise NoValidInjection(
                f"step {name!r} is not part of task {task.task_id!r}")
        out.append(name_to_local[name])
    return out


def _rebuild(procedure: Procedure, prefix: Sequence[StepRecord],
             final_action: int, kind: str, position: int) -> Procedure:
    steps = tuple(prefix) + (StepRecord(
        step_index=len(prefix), action_id=final_action,
        is_mistake=True, mistake_type=kind),)
    return Procedure(
        procedure_id=f"{procedure.procedure_id}-{kind}@{position}",
        toy_or_task_id=procedure.toy_or_task_id,
        actor_id=procedure.actor_id,
        steps=steps,
    )


def inject_mistake(
    grammar: SyntheticGrammar,
    procedure: Procedure,
    kind: str,
    position: int,
    rng: random.Random,
) -> Procedure:
    """Derive a mistaken procedure, already trimmed at the deviation.

    order        swap steps at position/position+1; only valid when the
                 later step depends on the earlier one, so the swapped-in
                 step arrives before its prerequisite
    omit         drop the step at position; the following step (which must
                 depend on it) arrives too early and carries the mistake
    repeat       duplicate the previous step at position
    wrong_action substitute an action invalid at that point, preferring
                 actions from other tasks so the deviation is unambiguous
    """
    if kind not in INJECTABLE_KINDS:
        raise NoValidInjection(
            f"kind must be one of {INJECTABLE_KINDS}, got {kind!r}")
    if any(s.is_mistake for s in procedure.steps):
        raise NoValidInjection("procedure already contains a mistake")
    n = len(procedure.steps)
    local = _local_order(grammar, procedure)
    task = grammar.task(procedure.toy_or_task_id)
    edge_set = set(task.edges)
    prefix = procedure.steps[:position]

    if kind == "order":
        if not 0 <= position < n - 1:
            raise NoValidInjection(f"order needs two adjacent steps at {position}")
        if (local[position], local[position + 1]) not in edge_set:
            raise NoValidInjection(
                "swapping these steps does not violate any dependency")
        return _rebuild(procedure, prefix,
                        procedure.steps[position + 1].action_id, kind, position)

    if kind == "omit":
        if not 0 <= position < n - 1:
            raise NoValidInjection(f"omit needs a following step at {position}")
        if (local[position], local[position + 1]) not in edge_set:
            raise NoValidInjection(
                "the following step does not depend on the omitted one")
        return _rebuild(procedure, prefix,
                        procedure.steps[position + 1].action_id, kind, position)

    if kind == "repeat":
        if not 1 <= position < n:
            raise NoValidInjection("repeat needs a previous step")
        return _rebuild(procedure, prefix,
                        procedure.steps[position - 1].action_id, kind, position)

    # wrong_action
    if not 0 <= position < n:
        raise NoValidInjection(f"position {position} outside the procedure")
    task_actions = {grammar.vocab.id_of(name) for name in task.steps}
    foreign = sorted(set(range(grammar.vocab.size)) - task_actions)
    if foreign:
        substitute = rng.choice(foreign)
    else:
        # Single-task vocabularies: pick an in-task action whose
        # prerequisites are not yet satisfied at this position.
        preds = task.predecessors()
        done = set(local[:position])
        invalid = sorted(
            grammar.vocab.id_of(task.steps[i])
            for i in range(len(task.steps))
            if i not in done and not preds[i] <= done)
        if not invalid:
            raise NoValidInjection(
                f"every action is valid at position {position}")
        substitute = rng.choice(invalid)
    return _rebuild(procedure, prefix, substitute, kind, position)
