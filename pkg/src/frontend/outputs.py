"""Output directory layout of a finished run.

::

    <out>/relations/<rel>.tsv   deep-printed columns, then the fact's hex id
    <out>/intern.tsv            <hex id> TAB <deep print>, sorted by id
    <out>/edb.tsv               hex ids of EDB facts
    <out>/stats.tsv             run statistics
    <out>/relations.txt         every relation the run knows about
"""

from __future__ import annotations

import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, List

from src.backend.errors import FactLookupError
from src.backend.provenance import EDB_FILE, INTERN_FILE, RELATIONS_DIR
from src.backend.tools import RunResult

logger = logging.getLogger(__name__)

STATS_FILE = "stats.tsv"
RELATIONS_FILE = "relations.txt"


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    text = "".join(f"{line}\n" for line in lines)
    path.write_text(text, encoding="utf-8")


def relation_lines(result: RunResult, relation: str) -> List[str]:
    db, store = result.db, result.store
    rows = []
    for fact_id, args in db.rows(relation):
        columns = [store.format_value(arg) for arg in args]
        rows.append((store.deep_print(fact_id), "\t".join([*columns, f"{fact_id:#018x}"])))
    return [line for _, line in sorted(rows)]


def known_relations(result: RunResult) -> List[str]:
    names = set(result.db.relation_names()) | set(result.compiled.plan.relations)
    return sorted(names)


def write_outputs(outdir: Path, result: RunResult) -> Path:
    """Write every output file, replacing ``outdir`` in one rename."""
    outdir = Path(outdir)
    outdir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{outdir.name}.", dir=outdir.parent))
    try:
        (staging / RELATIONS_DIR).mkdir()
        relations = known_relations(result)
        for relation in relations:
            _write_lines(staging / RELATIONS_DIR / f"{relation}.tsv", relation_lines(result, relation))
        _write_lines(staging / INTERN_FILE, result.store.dump_intern_table())
        _write_lines(staging / EDB_FILE, (f"{fact_id:#018x}" for fact_id in sorted(result.db.edb_ids)))
        _write_lines(staging / STATS_FILE, result.db.stats.to_lines())
        _write_lines(staging / RELATIONS_FILE, relations)
        if outdir.exists():
            shutil.rmtree(outdir)
        os.replace(staging, outdir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("Wrote %d relations to %s", len(relations), outdir)
    return outdir


def read_relation(outdir: Path, relation: str) -> List[str]:
    """Rows of ``relation`` as deep-printed facts, sorted by text."""
    outdir = Path(outdir)
    listing = outdir / RELATIONS_FILE
    if not listing.is_file():
        raise FactLookupError(f"{outdir} is not a run output directory")
    known = listing.read_text(encoding="utf-8").split()
    if relation not in known:
        raise FactLookupError(f"unknown relation {relation!r} in {outdir}")
    path = outdir / RELATIONS_DIR / f"{relation}.tsv"
    rows: List[str] = []
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            columns = line.split("\t")[:-1]
            rows.append(f"{relation}({', '.join(columns)})")
    return sorted(rows)
