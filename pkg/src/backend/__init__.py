from __future__ import annotations

from .engine import Database, EvalConfig, load_facts, run_fixpoint, subfact_close_ingest
from .errors import SlogError
from .terms import NestedFact, TermStore
from .tools import (
    CheckReport,
    CompiledProgram,
    RunOptions,
    RunResult,
    check_entry,
    check_program,
    compile_program,
    evaluate_program,
    explain_eager,
    explain_lazy,
    explain_outdir,
)

__all__ = [
    "compile_program",
    "evaluate_program",
    "explain_eager",
    "explain_lazy",
    "explain_outdir",
    "check_program",
    "check_entry",
    "RunOptions",
    "RunResult",
    "CompiledProgram",
    "CheckReport",
    "EvalConfig",
    "Database",
    "TermStore",
    "NestedFact",
    "SlogError",
    "load_facts",
    "run_fixpoint",
    "subfact_close_ingest",
]
