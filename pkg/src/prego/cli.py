"""Operator CLI: prego split | run | eval | synth | prompt.

Every command is reproducible from (config file, seed, inputs); the
resolved configuration is echoed into a header of each output artifact.
Options may come from a TOML config file (--config); explicit flags win.

Exit codes: 0 ok, 2 input error, 3 evaluation error, 4 transport/budget.
"""

from __future__ import annotations

import json
import random
import sys

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import __version__
from .anticipation import (
    CONTEXT_POLICIES,
    PROMPT_STYLES,
    PatternMachineBackend,
    TransitionMatrixBackend,
    build_context,
    fit_transition_matrix,
)
from .benchmark import (
    BenchmarkSplit,
    compute_metrics,
    first_alarm_accuracy,
    split_by_confidence,
    split_occ,
    trim_to_first_mistake,
)
from .core import ALPHABET_MODES, build_alphabet
from .detection import STOP_POLICIES, run_online
from .errors import (
    AlignmentMismatch,
    BudgetExceeded,
    PregoError,
    TransportError,
)
from .ingestion import (
    align_predicted_steps,
    attach_confidence,
    dedup_stream,
    parse_annotations,
    parse_confidence,
    parse_predictions,
)
from .llm import LLMBackend, LLMClient, TokenBudget
from .prompts import PromptSpec, render_prompt
from .synthetic import generate_procedures, inject_mistake, load_grammar

EXIT_INPUT = 2
EXIT_EVAL = 3
EXIT_TRANSPORT = 4

BACKENDS = ("one_step", "pattern", "llm")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        _fail(EXIT_INPUT, f"no such file: {path}")
    return p


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return tomllib.loads(_require_file(path).read_text())
    except tomllib.TOMLDecodeError as e:
        _fail(EXIT_INPUT, f"bad config file {path}: {e}")


def _resolve(config: dict, key: str, cli_value, default=None):
    """Flag beats config beats default; None marks an unset flag."""
    if cli_value is not None:
        return cli_value
    return config.get(key, default)


def _header_line(command: str, config: dict) -> str:
    return json.dumps(
        {"_header": {"tool": f"prego {__version__}", "command": command,
                     "config": config}}, sort_keys=True)


@click.group()
def main():
    """Online procedural-mistake detection toolkit."""


@main.command("split")
@click.option("--config", "config_path", default=None)
@click.option("--annotations", default=None)
@click.option("--policy", type=click.Choice(["occ", "confidence"]), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--confidence", "confidence_path", default=None,
              help="Per-frame confidence JSONL (confidence policy).")
@click.option("--val-ratio", type=float, default=None)
@click.option("--out", default=None)
def cmd_split(config_path, annotations, policy, threshold, confidence_path,
              val_ratio, out):
    """Build a train/val/test split manifest."""
    cfg = _load_config(config_path)
    annotations = _resolve(cfg, "annotations", annotations)
    policy = _resolve(cfg, "policy", policy, "occ")
    threshold = _resolve(cfg, "threshold", threshold, 0.6)
    confidence_path = _resolve(cfg, "confidence", confidence_path)
    val_ratio = _resolve(cfg, "val_ratio", val_ratio, 0.5)
    out = _resolve(cfg, "out", out)
    if annotations is None:
        _fail(EXIT_INPUT, "missing --annotations")
    try:
        procedures, _ = parse_annotations(_require_file(annotations))
        if policy == "occ":
            split = split_occ(procedures, val_ratio=val_ratio)
        else:
            if confidence_path is not None:
                traces = parse_confidence(_require_file(confidence_path))
                procedures = attach_confidence(procedures, traces)
            split = split_by_confidence(procedures, threshold=threshold)
    except PregoError as e:
        _fail(EXIT_INPUT, str(e))
    doc = json.loads(split.to_json())
    doc["config"] = {"annotations": str(annotations), "policy": policy,
                     "threshold": threshold, "val_ratio": val_ratio}
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n")
        click.echo(f"wrote {out}: {len(split.train)} train / "
                   f"{len(split.val)} val / {len(split.test)} test")
    else:
        click.echo(text)


def _build_backend(backend, train_procs, target, context_policy, vocab,
                  alphabet, prompt_style, llm_client):
    context = build_context(train_procs, target, context_policy)
    if backend == "pattern":
        return PatternMachineBackend(context, alphabet)
    if backend == "llm":
        return LLMBackend(llm_client, alphabet, context, prompt_style)
    raise ValueError(backend)


@main.command("run")
@click.option("--config", "config_path", default=None)
@click.option("--annotations", default=None)
@click.option("--split", "split_path", default=None)
@click.option("--backend", type=click.Choice(BACKENDS), default=None)
@click.option("--mode", type=click.Choice(ALPHABET_MODES), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--context-policy", type=click.Choice(CONTEXT_POLICIES), default=None)
@click.option("--k", type=int, default=None)
@click.option("--stop-policy", type=click.Choice(STOP_POLICIES), default=None)
@click.option("--source", type=click.Choice(["oracle", "predicted"]), default=None)
@click.option("--predictions", "predictions_path", default=None)
@click.option("--prompt-style", type=click.Choice(PROMPT_STYLES), default=None)
@click.option("--endpoint", default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--max-tokens", type=int, default=None)
@click.option("--budget", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--dry-run", is_flag=True, default=False)
@click.option("--out", default=None)
def cmd_run(config_path, annotations, split_path, backend, mode, seed,
            context_policy, k, stop_policy, source, predictions_path,
            prompt_style, endpoint, temperature, max_tokens, budget, jobs,
            dry_run, out):
    """Run detection over the test split, one DetectionRun per procedure."""
    cfg = _load_config(config_path)
    annotations = _resolve(cfg, "annotations", annotations)
    split_path = _resolve(cfg, "split", split_path)
    backend = _resolve(cfg, "backend", backend, "pattern")
    mode = _resolve(cfg, "mode", mode, "numerical")
    seed = _resolve(cfg, "seed", seed, 0)
    context_policy = _resolve(cfg, "context_policy", context_policy, "same_task")
    k = _resolve(cfg, "k", k, 1)
    stop_policy = _resolve(cfg, "stop_policy", stop_policy, "full_sequence")
    source = _resolve(cfg, "source", source, "oracle")
    predictions_path = _resolve(cfg, "predictions", predictions_path)
    prompt_style = _resolve(cfg, "prompt_style", prompt_style, "referenced_context")
    endpoint = _resolve(cfg, "endpoint", endpoint)
    temperature = _resolve(cfg, "temperature", temperature, 0.6)
    max_tokens = _resolve(cfg, "max_tokens", max_tokens, 4)
    budget = _resolve(cfg, "budget", budget)
    jobs = _resolve(cfg, "jobs", jobs, 1)
    out = _resolve(cfg, "out", out)

    if annotations is None or split_path is None:
        _fail(EXIT_INPUT, "missing --annotations or --split")
    if not 1 <= k <= 5:
        _fail(EXIT_INPUT, f"k must be in [1, 5], got {k}")
    if backend == "llm" and endpoint is None:
        _fail(EXIT_INPUT, "--backend llm requires --endpoint")
    if source == "predicted" and predictions_path is None:
        _fail(EXIT_INPUT, "--source predicted requires --predictions")

    resolved = {
        "annotations": str(annotations), "split": str(split_path),
        "backend": backend, "mode": mode, "seed": seed,
        "context_policy": context_policy, "k": k, "stop_policy": stop_policy,
        "source": source, "prompt_style": prompt_style,
        "temperature": temperature, "max_tokens": max_tokens,
        "budget": budget, "jobs": jobs,
    }

    try:
        procedures, vocab = parse_annotations(_require_file(annotations))
        split = BenchmarkSplit.from_json(_require_file(split_path).read_text())
    except PregoError as e:
        _fail(EXIT_INPUT, str(e))

    by_id = {p.procedure_id: p for p in procedures}
    missing = [pid for pid in split.train + split.test if pid not in by_id]
    if missing:
        _fail(EXIT_INPUT, f"split names unknown procedures: {missing[:5]}")
    train_procs = [by_id[pid] for pid in split.train]
    test_procs = [trim_to_first_mistake(by_id[pid]) for pid in split.test]
    alphabet = build_alphabet(vocab, mode, seed)

    # Recognized sequences plus the aligned ground-truth mistake labels.
    sequences: dict[str, list[int]] = {}
    gt_labels: dict[str, list[bool]] = {}
    if source == "oracle":
        for proc in test_procs:
            sequences[proc.procedure_id] = proc.action_sequence()
            gt_labels[proc.procedure_id] = proc.mistake_labels()
    else:
        try:
            streams = parse_predictions(_require_file(predictions_path))
        except PregoError as e:
            _fail(EXIT_INPUT, str(e))
        for proc in test_procs:
            stream = streams.get(proc.procedure_id)
            if stream is None:
                continue
            sequences[proc.procedure_id] = dedup_stream(stream)
            gt_labels[proc.procedure_id] = align_predicted_steps(proc, stream)

    matrix = None
    if backend == "one_step":
        matrix = fit_transition_matrix(
            [p.action_sequence() for p in train_procs], vocab.size)

    llm_client = None
    if backend == "llm" and not dry_run:
        llm_client = LLMClient(
            endpoint=endpoint, temperature=temperature, max_tokens=max_tokens,
            budget=TokenBudget(budget) if budget else None)

    if dry_run and backend == "llm":
        for proc in test_procs:
            seq = sequences.get(proc.procedure_id)
            if not seq:
                continue
            context = build_context(train_procs, proc, context_policy)
            for t in range(1, len(seq)):
                spec = PromptSpec(style=prompt_style, alphabet=alphabet,
                                  context=context, history=tuple(seq[:t]))
                click.echo(f"--- {proc.procedure_id} step {t} ---")
                click.echo(render_prompt(spec), nl=False)
        return

    def detect_one(proc):
        seq = sequences.get(proc.procedure_id)
        if not seq:
            return None
        if backend == "one_step":
            b = TransitionMatrixBackend(matrix)
        else:
            b = _build_backend(backend, train_procs, proc, context_policy,
                               vocab, alphabet, prompt_style, llm_client)
        return run_online(seq, b, k=k, stop_policy=stop_policy,
                          procedure_id=proc.procedure_id)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = [r for r in pool.map(detect_one, test_procs) if r]
    else:
        runs = [r for r in map(detect_one, test_procs) if r]

    lines = [_header_line("run", resolved)]
    records = []
    for run in runs:
        labels = gt_labels.get(run.procedure_id, [])
        for verdict in run.verdicts:
            obj = verdict.to_json_obj(run.procedure_id)
            if verdict.step_index < len(labels):
                obj["gt_mistake"] = labels[verdict.step_index]
            records.append(obj)
    if jobs > 1:
        records.sort(key=lambda o: (o["procedure_id"], o["step_index"]))
    lines.extend(json.dumps(o, sort_keys=True) for o in records)

    aborted = [r for r in runs if r.incomplete]
    if aborted:
        lines.append(json.dumps(
            {"_header": {"incomplete": [r.procedure_id for r in aborted],
                         "error": aborted[0].error}}, sort_keys=True))
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}: {len(records)} verdicts over {len(runs)} procedures")
    else:
        click.echo(text, nl=False)
    if aborted:
        _fail(EXIT_TRANSPORT,
              f"partial results: {len(aborted)} procedure(s) aborted "
              f"({aborted[0].error})")


@main.command("eval")
@click.option("--config", "config_path", default=None)
@click.option("--verdicts", default=None)
@click.option("--annotations", default=None)
@click.option("--average", type=click.Choice(["micro", "macro"]), default=None)
@click.option("--out", default=None)
def cmd_eval(config_path, verdicts, annotations, average, out):
    """Score a verdicts file against ground truth."""
    cfg = _load_config(config_path)
    verdicts = _resolve(cfg, "verdicts", verdicts)
    annotations = _resolve(cfg, "annotations", annotations)
    average = _resolve(cfg, "average", average, "micro")
    out = _resolve(cfg, "out", out)
    if verdicts is None:
        _fail(EXIT_INPUT, "missing --verdicts")

    from .detection import DetectionRun, Verdict
    rows = []
    for line_no, line in enumerate(
            _require_file(verdicts).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if "_header" in obj:
            continue
        rows.append(obj)
    if not rows:
        _fail(EXIT_EVAL, f"no verdicts in {verdicts}")

    runs: dict[str, DetectionRun] = {}
    gt: dict[str, list[bool]] = {}
    for obj in sorted(rows, key=lambda o: (o["procedure_id"], o["step_index"])):
        pid = obj["procedure_id"]
        run = runs.setdefault(pid, DetectionRun(procedure_id=pid))
        run.verdicts.append(Verdict(
            step_index=obj["step_index"], recognized=obj["recognized"],
            anticipated=tuple(obj["anticipated"]),
            is_mistake=obj["is_mistake"], cause=obj["cause"]))
        gt.setdefault(pid, []).append(bool(obj.get("gt_mistake", False)))

    if annotations is not None:
        # Re-derive ground truth from the (trimmed) annotations where the
        # verdict lines did not carry labels of their own.
        try:
            procedures, _ = parse_annotations(_require_file(annotations))
        except PregoError as e:
            _fail(EXIT_INPUT, str(e))
        trimmed = {p.procedure_id: trim_to_first_mistake(p) for p in procedures}
        for pid, run in runs.items():
            if pid in trimmed and not any(
                    "gt_mistake" in o for o in rows
                    if o["procedure_id"] == pid):
                gt[pid] = trimmed[pid].mistake_labels()

    try:
        report = compute_metrics(list(runs.values()), gt, average=average)
    except AlignmentMismatch as e:
        _fail(EXIT_EVAL, str(e))
    aux = first_alarm_accuracy(list(runs.values()), gt)
    doc = report.to_json_obj()
    doc["first_alarm_accuracy_auxiliary"] = aux
    doc["average"] = average
    doc["config"] = {"verdicts": str(verdicts), "average": average}
    click.echo(report.to_table())
    click.echo(f"first-alarm accuracy (auxiliary, per-procedure): {aux:.3f}")
    if out:
        Path(out).write_text(json.dumps(doc, indent=2) + "\n")
        click.echo(f"wrote {out}")


@main.command("synth")
@click.option("--config", "config_path", default=None)
@click.option("--grammar", "grammar_path", default=None)
@click.option("--n", type=int, default=None)
@click.option("--mistakes", type=int, default=None,
              help="Number of additional mistaken procedures to inject.")
@click.option("--kinds", default=None,
              help="Comma-separated injection kinds (default order,repeat,wrong_action).")
@click.option("--seed", type=int, default=None)
@click.option("--out", default=None)
def cmd_synth(config_path, grammar_path, n, mistakes, kinds, seed, out):
    """Generate a synthetic annotations file from a grammar."""
    cfg = _load_config(config_path)
    grammar_path = _resolve(cfg, "grammar", grammar_path)
    n = _resolve(cfg, "n", n, 10)
    mistakes = _resolve(cfg, "mistakes", mistakes, 0)
    kinds = _resolve(cfg, "kinds", kinds, "order,repeat,wrong_action")
    seed = _resolve(cfg, "seed", seed, 0)
    out = _resolve(cfg, "out", out)
    if grammar_path is None:
        _fail(EXIT_INPUT, "missing --grammar")
    kind_list = [s.strip() for s in kinds.split(",") if s.strip()]

    try:
        grammar = load_grammar(_require_file(grammar_path), seed=seed)
        correct = generate_procedures(grammar, n, seed=seed)
    except PregoError as e:
        _fail(EXIT_INPUT, str(e))

    rng = random.Random(seed + 1)
    mistaken = []
    attempts = 0
    while len(mistaken) < mistakes and attempts < mistakes * 50 + 50:
        attempts += 1
        base = rng.choice(correct)
        kind = kind_list[len(mistaken) % len(kind_list)]
        position = rng.randrange(1, len(base.steps))
        try:
            proc = inject_mistake(grammar, base, kind, position, rng)
        except PregoError:
            continue
        if any(p.procedure_id == proc.procedure_id for p in mistaken):
            continue
        mistaken.append(proc)
    if len(mistaken) < mistakes:
        _fail(EXIT_INPUT,
              f"could only inject {len(mistaken)} of {mistakes} mistakes")

    resolved = {"grammar": str(grammar_path), "n": n, "mistakes": mistakes,
                "kinds": kinds, "seed": seed}
    lines = [_header_line("synth", resolved)]
    for proc in correct + mistaken:
        for step in proc.steps:
            obj = {
                "procedure_id": proc.procedure_id,
                "toy_or_task_id": proc.toy_or_task_id,
                "actor_id": proc.actor_id,
                "step_index": step.step_index,
                "action_name": grammar.vocab.name_of(step.action_id),
                "is_mistake": step.is_mistake,
            }
            if step.mistake_type is not None:
                obj["mistake_type"] = step.mistake_type
            lines.append(json.dumps(obj, sort_keys=True))
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}: {len(correct)} correct + "
                   f"{len(mistaken)} mistaken procedures")
    else:
        click.echo(text, nl=False)


@main.command("prompt")
@click.option("--config", "config_path", default=None)
@click.option("--annotations", default=None)
@click.option("--split", "split_path", default=None)
@click.option("--procedure", "procedure_id", default=None,
              help="Test procedure to render (default: first in the split).")
@click.option("--style", type=click.Choice(PROMPT_STYLES), default=None)
@click.option("--mode", type=click.Choice(ALPHABET_MODES), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--context-policy", type=click.Choice(CONTEXT_POLICIES), default=None)
@click.option("--history-len", type=int, default=None)
def cmd_prompt(config_path, annotations, split_path, procedure_id, style,
               mode, seed, context_policy, history_len):
    """Render and print one anticipation prompt for inspection."""
    cfg = _load_config(config_path)
    annotations = _resolve(cfg, "annotations", annotations)
    split_path = _resolve(cfg, "split", split_path)
    style = _resolve(cfg, "prompt_style", style, "referenced_context")
    mode = _resolve(cfg, "mode", mode, "numerical")
    seed = _resolve(cfg, "seed", seed, 0)
    context_policy = _resolve(cfg, "context_policy", context_policy, "same_task")
    history_len = _resolve(cfg, "history_len", history_len)
    if annotations is None or split_path is None:
        _fail(EXIT_INPUT, "missing --annotations or --split")
    try:
        procedures, vocab = parse_annotations(_require_file(annotations))
        split = BenchmarkSplit.from_json(_require_file(split_path).read_text())
    except PregoError as e:
        _fail(EXIT_INPUT, str(e))
    by_id = {p.procedure_id: p for p in procedures}
    if procedure_id is None:
        if not split.test:
            _fail(EXIT_INPUT, "split has no test procedures")
        procedure_id = split.test[0]
    if procedure_id not in by_id:
        _fail(EXIT_INPUT, f"unknown procedure {procedure_id!r}")
    target = trim_to_first_mistake(by_id[procedure_id])
    train_procs = [by_id[pid] for pid in split.train if pid in by_id]
    alphabet = build_alphabet(vocab, mode, seed)
    context = build_context(train_procs, target, context_policy)
    seq = target.action_sequence()
    t = history_len if history_len is not None else max(1, len(seq) - 1)
    t = max(1, min(t, len(seq)))
    spec = PromptSpec(style=style, alphabet=alphabet, context=context,
                      history=tuple(seq[:t]))
    click.echo(render_prompt(spec), nl=False)


if __name__ == "__main__":
    main()
