"""``slogette``: compile, run, dump, explain and check programs in batch."""

from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence, Tuple, TypeVar

import click
from tqdm import tqdm

from src.backend.corpus import list_entries, load_entry
from src.backend.engine import EvalConfig, load_fact_sources
from src.backend.errors import INCONCLUSIVE_EXIT_CODE, OracleMismatch, SlogError
from src.backend.planner import format_plan
from src.backend.syntax import format_program, parse_fact
from src.backend.tools import (
    INCONCLUSIVE,
    MISMATCH,
    CheckReport,
    CompiledProgram,
    check_entry,
    check_program,
    compile_program,
    evaluate_program,
    explain_lazy,
    explain_outdir,
)

from .manifest import ManifestError, RunManifest, load_manifest, looks_like_manifest
from .outputs import read_relation, write_outputs

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

EMIT_CHOICES = ("surface", "core", "plan")


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def reports_errors(command: F) -> F:
    """Turn engine errors into their exit codes and manifest errors into usage errors."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except ManifestError as exc:
            raise click.UsageError(str(exc)) from exc
        except SlogError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper  # type: ignore[return-value]


def verbose_option(command: F) -> F:
    return click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")(command)


def _emit(compiled: CompiledProgram, kinds: Sequence[str]) -> None:
    for kind in kinds:
        if kind == "surface":
            text = format_program(compiled.surface)
        elif kind == "core":
            text = str(compiled.core)
        else:
            text = format_plan(compiled.plan, compiled.store)
        click.echo(f"// --emit {kind}")
        click.echo(text.rstrip("\n"))


def _manifest_from(
    program: Optional[Path], manifest_path: Optional[Path], overrides: dict
) -> RunManifest:
    if manifest_path is not None:
        base = load_manifest(manifest_path)
    elif program is not None:
        base = RunManifest(program=program)
    else:
        raise click.UsageError("give a PROGRAM or --manifest")
    update = {key: value for key, value in overrides.items() if value is not None and value is not False and value != ()}
    if program is not None:
        update["program"] = program
    if "facts" in update:
        update["facts"] = list(update["facts"])
    if "emit" in update:
        update["emit"] = list(update["emit"])
    try:
        return RunManifest.model_validate({**base.model_dump(), **update})
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc


def _report_check(report: CheckReport) -> None:
    for line in report.to_lines():
        click.echo(line)
    if report.status == MISMATCH:
        sys.exit(OracleMismatch.exit_code)
    if report.status == INCONCLUSIVE:
        sys.exit(INCONCLUSIVE_EXIT_CODE)


@click.group()
def cli() -> None:
    """First-class-fact Datalog: batch driver."""


@cli.command()
@click.argument("program", required=False, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")
@click.option("--facts", multiple=True, type=click.Path(exists=True, path_type=Path), help="Fact file or directory.")
@click.option("--workers", type=int, default=None)
@click.option("--buckets", type=int, default=None)
@click.option("--subbuckets", type=int, default=None)
@click.option("--max-iters", "max_iterations", type=int, default=None, help="Supersteps allowed per stratum.")
@click.option("--max-height", "max_fact_height", type=int, default=None, help="Tallest fact allowed.")
@click.option("--eager-why", is_flag=True, help="Record deriv(body, head) edges.")
@click.option("--lazy-why", default=None, metavar="FACT", help="Seed the lazy explain_t rewrite on FACT.")
@click.option("--where", is_flag=True, help="Record column-level where-provenance.")
@click.option("--emit", multiple=True, type=click.Choice(EMIT_CHOICES), help="Print an intermediate form.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--oracle", is_flag=True, help="Also compare against the reference evaluator.")
@verbose_option
@reports_errors
def run(program: Optional[Path], manifest_path: Optional[Path], verbose: bool, **overrides: Any) -> None:
    """Evaluate PROGRAM to its fixpoint and write the output directory."""
    _configure_logging(verbose)
    manifest = _manifest_from(program, manifest_path, overrides)
    if manifest.out is None:
        raise click.UsageError("--out is required")
    text = manifest.program.read_text(encoding="utf-8")
    facts = load_fact_sources(manifest.facts)
    options = manifest.run_options()
    if manifest.emit:
        _emit(compile_program(text, options), manifest.emit)
    result = evaluate_program(text, facts, options)
    write_outputs(manifest.out, result)
    stats = result.db.stats
    click.echo(f"fixpoint: {result.db.count()} facts, {sum(stats.supersteps)} supersteps -> {manifest.out}")
    if manifest.oracle:
        _report_check(check_program(text, facts, manifest.eval_config()))


@cli.command()
@click.argument("program", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--emit", "kinds", multiple=True, required=True, type=click.Choice(EMIT_CHOICES))
@verbose_option
@reports_errors
def emit(program: Path, kinds: Tuple[str, ...], verbose: bool) -> None:
    """Print the surface, core or planned form of PROGRAM."""
    _configure_logging(verbose)
    _emit(compile_program(program.read_text(encoding="utf-8")), kinds)


@cli.command()
@click.argument("outdir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("relation")
@reports_errors
def dump(outdir: Path, relation: str) -> None:
    """Print RELATION from a finished run, sorted by printed text."""
    for row in read_relation(outdir, relation):
        click.echo(row)


@cli.command()
@click.argument("target", type=click.Path(exists=True, path_type=Path))
@click.argument("fact")
@click.option("--mode", type=click.Choice(("eager", "lazy")), default="eager", show_default=True)
@click.option("--facts", multiple=True, type=click.Path(exists=True, path_type=Path))
@verbose_option
@reports_errors
def explain(target: Path, fact: str, mode: str, facts: Tuple[Path, ...], verbose: bool) -> None:
    """List the EDB facts FACT was derived from.

    Eager mode reads TARGET as the output directory of a run made with
    --eager-why. Lazy mode re-runs TARGET (a program or manifest) with the
    lazy rewrite seeded on FACT.
    """
    _configure_logging(verbose)
    wanted = parse_fact(fact)
    if mode == "eager":
        if not target.is_dir():
            raise click.UsageError("eager explain needs a run output directory")
        lineage = explain_outdir(target, wanted)
    else:
        if target.is_dir():
            raise click.UsageError("lazy explain needs a program or manifest")
        if looks_like_manifest(target):
            manifest = load_manifest(target)
            sources: List[Path] = [*manifest.facts, *facts]
            program, config = manifest.program, manifest.eval_config()
        else:
            sources, program, config = list(facts), target, EvalConfig()
        lineage = explain_lazy(program.read_text(encoding="utf-8"), load_fact_sources(sources), wanted, config)
    for line in lineage:
        click.echo(line)


@cli.command()
@click.argument("outdir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("fact")
@reports_errors
def why(outdir: Path, fact: str) -> None:
    """Eager lineage of FACT from a run made with --eager-why."""
    for line in explain_outdir(outdir, parse_fact(fact)):
        click.echo(line)


@cli.command()
@click.argument("target", required=False, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--facts", multiple=True, type=click.Path(exists=True, path_type=Path))
@click.option("--corpus", "whole_corpus", is_flag=True, help="Check every corpus entry.")
@click.option("--max-iters", "max_iterations", type=int, default=None)
@click.option("--max-height", "max_fact_height", type=int, default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@verbose_option
@reports_errors
def check(
    target: Optional[Path],
    facts: Tuple[Path, ...],
    whole_corpus: bool,
    max_iterations: Optional[int],
    max_fact_height: Optional[int],
    workers: int,
    verbose: bool,
) -> None:
    """Compare the engine against the reference evaluator."""
    _configure_logging(verbose)
    if whole_corpus:
        _check_corpus(workers)
        return
    if target is None:
        raise click.UsageError("give a PROGRAM, a manifest or --corpus")
    if looks_like_manifest(target):
        manifest = load_manifest(target)
        program, sources, config = manifest.program, [*manifest.facts, *facts], manifest.eval_config()
    else:
        try:
            config = EvalConfig(workers=workers, max_iterations=max_iterations, max_fact_height=max_fact_height)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
        program, sources = target, list(facts)
    report = check_program(program.read_text(encoding="utf-8"), load_fact_sources(sources), config)
    _report_check(report)


def _check_corpus(workers: int) -> None:
    names = list_entries()
    failed = inconclusive = 0
    for name in tqdm(names, desc="corpus", unit="entry", disable=not sys.stderr.isatty()):
        entry = load_entry(name)
        config = EvalConfig(
            workers=workers,
            max_iterations=entry.max_iterations,
            max_fact_height=entry.max_fact_height,
        )
        report = check_entry(entry, config)
        click.echo(f"{name}\t{report.status}" + (f"\t{report.reason}" if report.reason else ""))
        for line in report.diff.to_lines():
            click.echo(f"  {line}")
        failed += report.status == MISMATCH
        inconclusive += report.status == INCONCLUSIVE
    if failed:
        sys.exit(OracleMismatch.exit_code)
    if inconclusive:
        sys.exit(INCONCLUSIVE_EXIT_CODE)


def main(argv: Optional[Sequence[str]] = None) -> None:
    cli.main(args=list(argv) if argv is not None else None, prog_name="slogette")
