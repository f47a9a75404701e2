"""Provenance as program rewriting.

Every rewrite returns a new core program containing the original rules plus
companions. The annotations they produce (``deriv``, ``explain_t``,
``column``, ``prov_<R>``) are ordinary relations whose columns hold fact ids.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Set, Tuple

from .errors import FactLookupError
from .flatten import CoreProgram, CoreRule, flatten_rule
from .syntax import Clause, Lit, SurfaceRule, Subclause, Var
from .terms import NestedFact, ValueKind

if TYPE_CHECKING:
    from .engine import Database

logger = logging.getLogger(__name__)

DERIV = "deriv"
EXPLAIN = "explain_t"
COLUMN = "column"
LITERAL_ORIGIN = "literal_origin"
PROV_PREFIX = "prov_"

RELATIONS_DIR = "relations"
INTERN_FILE = "intern.tsv"
EDB_FILE = "edb.tsv"


class _Names:
    def __init__(self, rule: CoreRule) -> None:
        self.taken = rule.variables()
        self.counter = 0

    def __call__(self, stem: str) -> Var:
        while True:
            name = f"${stem}{self.counter}"
            self.counter += 1
            if name not in self.taken:
                self.taken.add(name)
                return Var(name)


def _with_binders(rule: CoreRule, names: _Names) -> Tuple[Tuple[Clause, ...], List[Var]]:
    """The body with every clause given a variable id binder."""
    body: List[Clause] = []
    ids: List[Var] = []
    for clause in rule.body:
        if isinstance(clause.binder, Var):
            body.append(clause)
            ids.append(clause.binder)
        else:
            binder = names("b")
            body.append(replace(clause, binder=binder))
            ids.append(binder)
    return tuple(body), ids


def _head_lookup(rule: CoreRule, names: _Names) -> Tuple[Clause, Var]:
    head_id = names("h")
    return replace(rule.head, binder=head_id), head_id


def _merge(program: CoreProgram, extra: Iterable[CoreRule], arities: Dict[str, int]) -> CoreProgram:
    merged = dict(program.arities)
    merged.update(arities)
    return CoreProgram(program.rules + tuple(extra), merged)


def rewrite_eager_why(program: CoreProgram) -> CoreProgram:
    """Add ``deriv(body_id, head_id)`` companions, one per body clause."""
    extra: List[CoreRule] = []
    for rule in program.rules:
        if rule.fact or not rule.body:
            continue
        names = _Names(rule)
        body, ids = _with_binders(rule, names)
        lookup, head_id = _head_lookup(rule, names)
        for body_id in ids:
            extra.append(
                CoreRule(
                    Clause(DERIV, (body_id, head_id)),
                    body + (lookup,),
                    rule.negated,
                    rule.constraints,
                    rule.origin,
                )
            )
    logger.debug("Eager why-provenance added %d companion rules", len(extra))
    return _merge(program, extra, {DERIV: 2})


def nested_to_clause(fact: NestedFact) -> Clause:
    args: List[Subclause] = []
    for arg in fact.args:
        args.append(nested_to_clause(arg) if isinstance(arg, NestedFact) else Lit(arg))
    return Clause(fact.rel, tuple(args))


def rewrite_lazy_why(program: CoreProgram, target: Optional[NestedFact] = None) -> CoreProgram:
    """Add ``explain_t`` companions that walk derivations top-down.

    The seed is a rule, ``explain_t(t) :- t = <target>.``, so it only fires
    once the target itself has been derived or ingested.
    """
    extra: List[CoreRule] = []
    for rule in program.rules:
        if rule.fact or not rule.body:
            continue
        names = _Names(rule)
        body, ids = _with_binders(rule, names)
        lookup, head_id = _head_lookup(rule, names)
        guard = Clause(EXPLAIN, (head_id,))
        for body_id in ids:
            extra.append(
                CoreRule(
                    Clause(EXPLAIN, (body_id,)),
                    body + (lookup, guard),
                    rule.negated,
                    rule.constraints,
                    rule.origin,
                )
            )
    if target is not None:
        seed_var = Var("$t")
        seed = SurfaceRule(
            (Clause(EXPLAIN, (seed_var,)),),
            (replace(nested_to_clause(target), binder=seed_var),),
        )
        extra.extend(flatten_rule(seed))
    logger.debug("Lazy why-provenance added %d companion rules", len(extra))
    return _merge(program, extra, {EXPLAIN: 1})


def rewrite_where(program: CoreProgram) -> CoreProgram:
    """Add ``column`` facts for every relation and ``prov_<R>`` per rule.

    A ``prov_<R>`` fact holds, per head column, the id of the ``column`` fact
    it was copied from (leftmost occurrence in the body), the id of the body
    fact when the column is that fact's id, or ``literal_origin(v)`` for a
    literal.
    """
    extra: List[CoreRule] = []
    arities: Dict[str, int] = {COLUMN: 3, LITERAL_ORIGIN: 1}
    relations = dict(program.arities)
    for rule in program.rules:
        relations.setdefault(rule.head.rel, len(rule.head.args))

    for name, arity in sorted(relations.items()):
        columns = tuple(Var(f"$x{k}") for k in range(arity))
        fact_id = Var("$i")
        for k in range(arity):
            extra.append(
                CoreRule(
                    Clause(COLUMN, (fact_id, Lit(k), columns[k])),
                    (Clause(name, columns, fact_id),),
                )
            )

    literals: Set[Lit] = set()
    for rule in program.rules:
        if rule.fact or not rule.body:
            continue
        names = _Names(rule)
        body, ids = _with_binders(rule, names)
        sources: List[Clause] = []
        prov_args: List[Subclause] = []
        for arg in rule.head.args:
            if isinstance(arg, Lit):
                literals.add(arg)
                marker = names("c")
                sources.append(Clause(LITERAL_ORIGIN, (arg,), marker))
                prov_args.append(marker)
                continue
            assert isinstance(arg, Var)
            if arg in ids:
                prov_args.append(arg)
                continue
            origin = _leftmost(body, arg)
            if origin is None:
                raise ValueError(f"head variable {arg} has no body occurrence in {rule}")
            position, column = origin
            marker = names("c")
            sources.append(Clause(COLUMN, (ids[position], Lit(column), arg), marker))
            prov_args.append(marker)
        head_name = PROV_PREFIX + rule.head.rel
        arities[head_name] = len(prov_args)
        extra.append(
            CoreRule(
                Clause(head_name, tuple(prov_args)),
                body + tuple(sources),
                rule.negated,
                rule.constraints,
                rule.origin,
            )
        )
    for literal in sorted(literals, key=lambda lit: (isinstance(lit.value, str), str(lit.value))):
        extra.append(CoreRule(Clause(LITERAL_ORIGIN, (literal,)), fact=True))
    logger.debug("Where-provenance added %d companion rules", len(extra))
    return _merge(program, extra, arities)


def _leftmost(body: Tuple[Clause, ...], var: Var) -> Optional[Tuple[int, int]]:
    for position, clause in enumerate(body):
        for column, arg in enumerate(clause.args):
            if arg == var:
                return position, column
    return None


# ----------------------------------------------------------------------
# Lineage queries
# ----------------------------------------------------------------------
@dataclass
class DerivGraph:
    """Reverse ``deriv`` edges: head id -> body ids."""

    parents: Dict[int, List[int]] = field(default_factory=dict)
    edb: Set[int] = field(default_factory=set)
    known: Set[int] = field(default_factory=set)

    def add(self, body: int, head: int) -> None:
        self.parents.setdefault(head, []).append(body)

    def closure(self, target: int) -> Set[int]:
        if target not in self.known:
            raise FactLookupError(f"fact {target:#018x} is not in the database")
        found: Set[int] = set()
        seen = {target}
        queue = deque([target])
        while queue:
            node = queue.popleft()
            if node in self.edb:
                found.add(node)
                continue
            for parent in self.parents.get(node, ()):
                if parent not in seen:
                    seen.add(parent)
                    queue.append(parent)
        return found


def build_deriv_graph(db: "Database") -> DerivGraph:
    graph = DerivGraph(edb=set(db.edb_ids), known=set(db.ids()))
    for _, (body, head) in db.rows(DERIV):
        graph.add(body.payload, head.payload)
    return graph


def why_closure(db: "Database", target: int) -> Set[int]:
    """EDB ids reachable from ``target`` over reverse ``deriv`` edges."""
    return build_deriv_graph(db).closure(target)


def lazy_lineage(db: "Database") -> Set[int]:
    """EDB ids that ended up in ``explain_t``."""
    found: Set[int] = set()
    for _, (value,) in db.rows(EXPLAIN):
        if value.kind is ValueKind.FACT_ID and value.payload in db.edb_ids:
            found.add(value.payload)
    return found


def _read_lines(path: Path) -> List[str]:
    if not path.exists():
        return []
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line]


def load_intern_table(outdir: Path) -> Dict[int, str]:
    table: Dict[int, str] = {}
    for line in _read_lines(Path(outdir) / INTERN_FILE):
        hex_id, text = line.split("\t", 1)
        table[int(hex_id, 16)] = text
    return table


def load_deriv_graph(outdir: Path) -> Tuple[DerivGraph, Dict[int, str]]:
    """Rebuild the ``deriv`` graph of a finished run from its output directory."""
    outdir = Path(outdir)
    deriv_file = outdir / RELATIONS_DIR / f"{DERIV}.tsv"
    if not deriv_file.exists():
        raise FactLookupError(f"{outdir} has no {DERIV} relation; rerun with --eager-why")
    table = load_intern_table(outdir)
    by_text = {text: fact_id for fact_id, text in table.items()}
    graph = DerivGraph(known=set(table))
    graph.edb = {int(line.strip(), 16) for line in _read_lines(outdir / EDB_FILE)}
    for line in _read_lines(deriv_file):
        body_text, head_text, _ = line.split("\t")
        graph.add(by_text[body_text], by_text[head_text])
    return graph, table

