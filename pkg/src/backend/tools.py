from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

from .corpus import CorpusEntry
from .engine import Database, EvalConfig, SuperstepHook, canonical_fact_set, run_fixpoint, subfact_close_ingest
from .errors import EvaluationError, FactLookupError
from .flatten import CoreProgram, flatten_program
from .planner import ProgramPlan, plan_program
from .provenance import (
    lazy_lineage,
    load_deriv_graph,
    rewrite_eager_why,
    rewrite_lazy_why,
    rewrite_where,
    why_closure,
)
from .reference import FactDiff, diff_fact_sets, naive_fixpoint
from .syntax import Program, load_program
from .terms import NestedFact, TermStore, format_nested

logger = logging.getLogger(__name__)

OK = "ok"
MISMATCH = "mismatch"
INCONCLUSIVE = "inconclusive"

PlanHook = Callable[[ProgramPlan], ProgramPlan]


@dataclass
class RunOptions:
    eager_why: bool = False
    where: bool = False
    lazy_target: Optional[NestedFact] = None
    config: EvalConfig = field(default_factory=EvalConfig)
    on_superstep: Optional[SuperstepHook] = None


@dataclass
class CompiledProgram:
    surface: Program
    core: CoreProgram
    store: TermStore
    plan: ProgramPlan


@dataclass
class RunResult:
    compiled: CompiledProgram
    db: Database

    @property
    def store(self) -> TermStore:
        return self.compiled.store


@dataclass
class CheckReport:
    status: str
    diff: FactDiff = field(default_factory=FactDiff)
    engine_facts: int = 0
    oracle_facts: int = 0
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK

    def to_lines(self) -> List[str]:
        lines = [f"status\t{self.status}"]
        if self.reason:
            lines.append(f"reason\t{self.reason}")
        lines.append(f"engine_facts\t{self.engine_facts}")
        lines.append(f"oracle_facts\t{self.oracle_facts}")
        return lines + self.diff.to_lines()


def _with_companions(core: CoreProgram, rewritten: Sequence[CoreProgram]) -> CoreProgram:
    rules = list(core.rules)
    arities = dict(core.arities)
    for program in rewritten:
        rules.extend(program.rules[len(core.rules):])
        arities.update(program.arities)
    return CoreProgram(tuple(rules), arities)


def compile_program(text: str, options: Optional[RunOptions] = None) -> CompiledProgram:
    """Parse, validate, desugar, flatten, rewrite and plan."""
    opts = options or RunOptions()
    surface = load_program(text)
    core = flatten_program(surface)
    rewritten: List[CoreProgram] = []
    if opts.eager_why:
        rewritten.append(rewrite_eager_why(core))
    if opts.lazy_target is not None:
        rewritten.append(rewrite_lazy_why(core, opts.lazy_target))
    if opts.where:
        rewritten.append(rewrite_where(core))
    if rewritten:
        core = _with_companions(core, rewritten)
    store = TermStore(opts.config.bucket_count)
    plan = plan_program(core, store)
    logger.debug("Compiled %d surface rules into %d core rules", len(surface.rules), len(core.rules))
    return CompiledProgram(surface, core, store, plan)


def evaluate_program(
    text: str,
    facts: Iterable[NestedFact] = (),
    options: Optional[RunOptions] = None,
    plan_hook: Optional[PlanHook] = None,
) -> RunResult:
    opts = options or RunOptions()
    compiled = compile_program(text, opts)
    if plan_hook is not None:
        compiled.plan = plan_hook(compiled.plan)
    db = subfact_close_ingest(facts, compiled.store)
    run_fixpoint(compiled.plan, db, opts.config, opts.on_superstep)
    return RunResult(compiled, db)


def _require(db: Database, fact: NestedFact) -> int:
    fact_id = db.lookup_nested(fact)
    if fact_id is None:
        raise FactLookupError(f"{format_nested(fact)} is not in the database")
    return fact_id


def _printed(db: Database, ids: Iterable[int]) -> List[str]:
    return sorted(db.store.deep_print(fact_id) for fact_id in ids)


def explain_eager(result: RunResult, fact: NestedFact) -> List[str]:
    """EDB lineage of ``fact`` from a run made with ``eager_why``."""
    return _printed(result.db, why_closure(result.db, _require(result.db, fact)))


def explain_outdir(outdir: Path, fact: NestedFact) -> List[str]:
    """EDB lineage of ``fact`` read back from a finished run's output directory."""
    graph, table = load_deriv_graph(outdir)
    text = format_nested(fact)
    matches = [fact_id for fact_id, printed in table.items() if printed == text]
    if not matches:
        raise FactLookupError(f"{text} is not in the run at {outdir}")
    return sorted(table[fact_id] for fact_id in graph.closure(matches[0]))


def explain_lazy(
    text: str,
    facts: Iterable[NestedFact],
    fact: NestedFact,
    config: Optional[EvalConfig] = None,
) -> List[str]:
    """Re-run with the lazy rewrite seeded on ``fact`` and read ``explain_t``."""
    result = evaluate_program(text, facts, RunOptions(lazy_target=fact, config=config or EvalConfig()))
    _require(result.db, fact)
    return _printed(result.db, lazy_lineage(result.db))


def _check(
    text: str, facts: Sequence[NestedFact], opts: EvalConfig, plan_hook: Optional[PlanHook]
) -> Tuple[CheckReport, Optional[RunResult]]:
    try:
        result = evaluate_program(text, facts, RunOptions(config=opts), plan_hook)
        oracle = naive_fixpoint(
            result.compiled.surface,
            facts,
            max_iterations=opts.max_iterations,
            max_height=opts.max_fact_height,
        )
    except EvaluationError as exc:
        logger.info("Check inconclusive: %s", exc)
        return CheckReport(INCONCLUSIVE, reason=f"{type(exc).__name__}: {exc}"), None
    engine = canonical_fact_set(result.db)
    diff = diff_fact_sets(engine, oracle)
    return CheckReport(OK if diff.empty else MISMATCH, diff, len(engine), len(oracle)), result


def check_program(
    text: str,
    facts: Sequence[NestedFact] = (),
    config: Optional[EvalConfig] = None,
    plan_hook: Optional[PlanHook] = None,
) -> CheckReport:
    """Run engine and reference evaluator and compare their fact sets."""
    return _check(text, facts, config or EvalConfig(), plan_hook)[0]


def check_entry(entry: CorpusEntry, config: Optional[EvalConfig] = None) -> CheckReport:
    """Check a corpus entry against the oracle and, if it has any, its fixtures."""
    opts = config or EvalConfig(
        max_iterations=entry.max_iterations,
        max_fact_height=entry.max_fact_height,
    )
    report, engine = _check(entry.program_text(), entry.facts(), opts, None)
    if entry.expect_error:
        if report.status == INCONCLUSIVE and report.reason.startswith(entry.expect_error + ":"):
            return CheckReport(OK, reason=f"expected {entry.expect_error}")
        return CheckReport(MISMATCH, report.diff, report.engine_facts, report.oracle_facts,
                           f"expected {entry.expect_error}, got {report.status}")
    if engine is None or report.status != OK or entry.expected_mode != "fixture":
        return report
    for relation, rows in entry.expected().items():
        got = relation_rows(engine.db, relation)
        if got != sorted(rows):
            missing = sorted(set(rows) - set(got))
            extra = sorted(set(got) - set(rows))
            return CheckReport(MISMATCH, FactDiff(missing, extra), report.engine_facts,
                               report.oracle_facts, f"fixture {relation} differs")
    return report


def relation_rows(db: Database, relation: str) -> List[str]:
    """Deep-printed facts of one relation, sorted by text."""
    return sorted(format_nested(fact) for fact in db.nested_facts(relation))