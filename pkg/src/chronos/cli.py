"""Command line entry point: ingest, index, ask, eval, report."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Any

import click

from .agent import AgentConfig, run_agent
from .eval import (
    AblationConfig,
    aggregate_report,
    category_counts,
    dump_results,
    format_report,
    load_benchmark,
    read_results,
    run_eval,
    stratified_sample,
)
from .eval.benchmark import apply_exclusions, parse_bench_datetime
from .eval.datasets import excluded_ids, mini_scripts, resolve_bench
from .eval.judge import make_judge
from .eval.sampling import DEFAULT_SEED, parse_sample_spec
from .extraction import extract_sessions
from .models import MemoryQuery, Session, TemporalEvent
from .providers import ConfigurationError, MockScripts, build_providers, load_config
from .store import CalendarStore, read_jsonl

SESSIONS_FILE = "sessions.jsonl"
EVENTS_FILE = "events.jsonl"
INDEX_DIR = "index"


def _providers(mode: str, config: str | None, agent_script: str | None = None,
               extractor_script: str | None = None, mini: bool = False):
    if mode == "mock":
        if mini:
            scripts = mini_scripts()
        else:
            scripts = MockScripts(
                agent=json.loads(Path(agent_script).read_text()) if agent_script else {},
                extractor=json.loads(Path(extractor_script).read_text()) if extractor_script else None,
            )
        return build_providers("mock", scripts=scripts)
    return build_providers("remote", load_config(config))


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _read_sessions(path: Path, question_id: str | None) -> list[Session]:
    data = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(data, dict) and "sessions" in data:
        data = data["sessions"]
    if isinstance(data, list) and data and "haystack_sessions" in data[0]:
        questions = load_benchmark(path)
        chosen = next((q for q in questions if q.question_id == question_id), None) if question_id else questions[0]
        if chosen is None:
            raise click.BadParameter(f"question {question_id} not in {path}")
        return list(chosen.haystack)
    return [Session.from_dict(s) for s in data]


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
def main(verbose: int) -> None:
    """Temporal conversational memory: build calendars, ask questions, run evaluations."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


_provider_opts = [
    click.option("--providers", "mode", type=click.Choice(["mock", "remote"]), default="mock", show_default=True),
    click.option("--config", type=click.Path(exists=True, dir_okay=False), help="Provider config (TOML)."),
]


def provider_options(fn):
    for opt in reversed(_provider_opts):
        fn = opt(fn)
    return fn


@main.command()
@click.argument("haystack", type=click.Path(exists=True, dir_okay=False))
@click.option("--workdir", type=click.Path(file_okay=False), default="chronos_store", show_default=True)
@click.option("--question-id", help="Which question's haystack to take from a benchmark file.")
@click.option("--extractor-script", type=click.Path(exists=True, dir_okay=False),
              help="Scripted extractor replies for mock mode.")
@click.option("--workers", default=4, show_default=True)
@provider_options
def ingest(haystack, workdir, question_id, extractor_script, workers, mode, config):
    """Extract temporal events from a haystack of dated sessions."""
    sessions = _read_sessions(Path(haystack), question_id)
    providers = _providers(mode, config, extractor_script=extractor_script)
    results = extract_sessions(sessions, providers.extractor, workers=workers)
    events = [e for r in results for e in r.events]
    out = Path(workdir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / SESSIONS_FILE, (s.to_dict() for s in sessions))
    _write_jsonl(out / EVENTS_FILE, (e.to_dict() for e in events))
    failed = sum(len(r.failed_batches) for r in results)
    click.echo(f"{len(sessions)} sessions, {sum(len(s.turns) for s in sessions)} turns, "
               f"{len(events)} events ({failed} failed batches) -> {out}")


@main.command()
@click.option("--workdir", type=click.Path(file_okay=False, exists=True), default="chronos_store", show_default=True)
@provider_options
def index(workdir, mode, config):
    """Embed turns and events into the two calendars."""
    root = Path(workdir)
    sessions = [Session.from_dict(r) for r in read_jsonl(root / SESSIONS_FILE)]
    events = [TemporalEvent.from_dict(r) for r in read_jsonl(root / EVENTS_FILE)]
    providers = _providers(mode, config)
    store = CalendarStore.build(sessions, events, providers.embedder)
    store.save(root / INDEX_DIR)
    snap = store.snapshot
    click.echo(f"indexed {len(snap.turns)} turns and {len(snap.events)} events (dim {snap.turns.dimension})")


@main.command()
@click.argument("question")
@click.option("--date", "question_date", required=True, help="Question date, YYYY-MM-DD.")
@click.option("--workdir", type=click.Path(file_okay=False, exists=True), default="chronos_store", show_default=True)
@click.option("--agent-script", type=click.Path(exists=True, dir_okay=False), help="Scripted agent for mock mode.")
@click.option("--max-steps", default=10, show_default=True)
@click.option("--trace", "show_trace", is_flag=True, help="Print the full trace as JSON.")
@provider_options
def ask(question, question_date, workdir, agent_script, max_steps, show_trace, mode, config):
    """Answer one question from an indexed store."""
    store = CalendarStore.load(Path(workdir) / INDEX_DIR)
    providers = _providers(mode, config, agent_script=agent_script)
    answer, trace = run_agent(MemoryQuery(question, parse_bench_datetime(question_date).date()), store,
                              providers, AgentConfig(max_steps=max_steps))
    click.echo(answer)
    if show_trace:
        click.echo(json.dumps(trace.to_dict(), indent=2, sort_keys=True))
    if trace.metadata.get("failed"):
        sys.exit(1)


@main.command("eval")
@click.option("--bench", required=True, help="'mini', 'longmemeval_s' or a path to a benchmark JSON file.")
@click.option("--sample", help="Subsample, e.g. stratified:116.")
@click.option("--seed", default=DEFAULT_SEED, show_default=True, help="Sampling seed.")
@click.option("--ablate", multiple=True,
              help="Ablation flags, comma separated; repeat for several runs. 'full' is the unablated run.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="results.jsonl", show_default=True)
@click.option("--report-out", type=click.Path(dir_okay=False), help="Also write the JSON report here.")
@click.option("--workers", default=4, show_default=True)
@click.option("--max-steps", default=10, show_default=True)
@click.option("--exclude-known-defects", is_flag=True, help="Skip questions listed in the exclusion file.")
@click.option("--agent-script", type=click.Path(exists=True, dir_okay=False))
@click.option("--extractor-script", type=click.Path(exists=True, dir_okay=False))
@provider_options
def eval_cmd(bench, sample, seed, ablate, out_path, report_out, workers, max_steps, exclude_known_defects,
             agent_script, extractor_script, mode, config):
    """Run the benchmark and write one JSON line per (run, question)."""
    try:
        providers = _providers(mode, config, agent_script, extractor_script, mini=bench == "mini")
    except ConfigurationError as exc:
        raise click.ClickException(str(exc)) from exc
    questions = load_benchmark(resolve_bench(bench))
    click.echo("loaded " + " ".join(f"{k}={v}" for k, v in category_counts(questions).items())
               + f" total={len(questions)}", err=True)
    if exclude_known_defects:
        questions = apply_exclusions(questions, excluded_ids())
    if sample:
        questions = stratified_sample(questions, parse_sample_spec(sample), seed)
        click.echo("sampled " + " ".join(f"{k}={v}" for k, v in category_counts(questions).items()), err=True)
    try:
        ablations = [AblationConfig.parse(a) for a in ablate] or [AblationConfig()]
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--ablate") from exc
    results = run_eval(questions, providers, ablations, judge=make_judge(providers.judge),
                       workers=workers, max_steps=max_steps)
    dump_results(results, out_path)
    report = aggregate_report(results)
    click.echo(format_report(report))
    if report_out:
        Path(report_out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


@main.command()
@click.argument("results", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "json_out", type=click.Path(dir_okay=False), help="Write the machine-readable report here.")
def report(results, json_out):
    """Summarize a results file."""
    data: Any = aggregate_report(read_results(results))
    click.echo(format_report(data))
    if json_out:
        Path(json_out).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":  # pragma: no cover
    main()
