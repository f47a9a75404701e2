"""Execution planning: stratification, semi-naive versions and indices."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

from frozendict import frozendict

from .errors import UnstratifiableNegation
from .flatten import CoreProgram, CoreRule
from .syntax import Constraint, Lit, Var, Wildcard
from .terms import RelationInfo, TermStore, Value

logger = logging.getLogger(__name__)

FULL = "full"
DELTA = "delta"
ALL = "all"


# ----------------------------------------------------------------------
# Dependency graph and stratification
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DependencyGraph:
    """Edges point from a body relation to the head relation it feeds."""

    nodes: Tuple[str, ...]
    edges: FrozenSet[Tuple[str, str]]
    negative: FrozenSet[Tuple[str, str]]

    def dependencies(self) -> Dict[str, List[str]]:
        deps: Dict[str, List[str]] = {node: [] for node in self.nodes}
        for body, head in sorted(self.edges):
            deps[head].append(body)
        return deps


def dependency_graph(program: CoreProgram) -> DependencyGraph:
    nodes: Set[str] = set(program.arities)
    edges: Set[Tuple[str, str]] = set()
    negative: Set[Tuple[str, str]] = set()
    for rule in program.rules:
        head = rule.head.rel
        nodes.add(head)
        for clause in rule.body:
            nodes.add(clause.rel)
            edges.add((clause.rel, head))
        for clause in rule.negated:
            nodes.add(clause.rel)
            edges.add((clause.rel, head))
            negative.add((clause.rel, head))
    return DependencyGraph(tuple(sorted(nodes)), frozenset(edges), frozenset(negative))


def strongly_connected_components(
    nodes: Sequence[str], successors: Mapping[str, Sequence[str]]
) -> List[List[str]]:
    """Iterative Tarjan; a component is emitted after everything it reaches."""
    index: Dict[str, int] = {}
    lowlink: Dict[str, int] = {}
    on_stack: Set[str] = set()
    stack: List[str] = []
    components: List[List[str]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work: List[Tuple[str, int]] = [(root, 0)]
        while work:
            node, position = work.pop()
            if position == 0:
                index[node] = lowlink[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            children = successors.get(node, ())
            descended = False
            while position < len(children):
                child = children[position]
                position += 1
                if child not in index:
                    work.append((node, position))
                    work.append((child, 0))
                    descended = True
                    break
                if child in on_stack:
                    lowlink[node] = min(lowlink[node], index[child])
            if descended:
                continue
            if lowlink[node] == index[node]:
                component: List[str] = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(sorted(component))
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
    return components


@dataclass(frozen=True)
class Stratum:
    index: int
    relations: FrozenSet[str]
    rules: Tuple[CoreRule, ...] = ()
    recursive: bool = False

    def __str__(self) -> str:
        names = ", ".join(sorted(self.relations))
        return f"stratum {self.index} {{{names}}}" + (" recursive" if self.recursive else "")


def _cycle_through(graph: DependencyGraph, members: FrozenSet[str], body: str, head: str) -> List[str]:
    """Dependency cycle ``head -> body -> ... -> head`` inside one component."""
    if body == head:
        return [head]
    deps = graph.dependencies()
    parents: Dict[str, str] = {}
    seen = {body}
    queue = deque([body])
    while queue:
        node = queue.popleft()
        if node == head:
            break
        for nxt in deps[node]:
            if nxt in members and nxt not in seen:
                seen.add(nxt)
                parents[nxt] = node
                queue.append(nxt)
    path: List[str] = []
    node = head
    while node != body:
        node = parents[node]
        path.append(node)
    path.reverse()
    return [head] + path


def stratify(graph: DependencyGraph, program: Optional[CoreProgram] = None) -> List[Stratum]:
    """Condense the dependency graph into strata, dependencies first."""
    deps = graph.dependencies()
    components = strongly_connected_components(graph.nodes, deps)
    strata: List[Stratum] = []
    for position, component in enumerate(components):
        members = frozenset(component)
        for body, head in sorted(graph.negative):
            if body in members and head in members:
                raise UnstratifiableNegation(_cycle_through(graph, members, body, head))
        recursive = len(component) > 1 or any((node, node) in graph.edges for node in component)
        rules: List[CoreRule] = []
        if program is not None:
            rules = [rule for rule in program.rules if rule.head.rel in members]
        strata.append(Stratum(position, members, tuple(rules), recursive))
    logger.debug("Stratified %d relations into %d strata", len(graph.nodes), len(strata))
    return strata


# ----------------------------------------------------------------------
# Compiled rule versions
# ----------------------------------------------------------------------
class Operand(NamedTuple):
    """A variable slot (``slot >= 0``) or a constant."""

    slot: int = -1
    const: Optional[Value] = None

    def read(self, env: Sequence[Optional[Value]]) -> Value:
        return self.const if self.slot < 0 else env[self.slot]  # type: ignore[return-value]


class ColumnOp(NamedTuple):
    column: int
    action: str
    operand: Operand


class Filter(NamedTuple):
    op: str
    left: Operand
    right: Operand

    def holds(self, env: Sequence[Optional[Value]]) -> bool:
        equal = self.left.read(env) == self.right.read(env)
        return equal if self.op == "=" else not equal


@dataclass(frozen=True)
class JoinStep:
    """One clause visit: probe an index, then bind or check columns.

    ``mode`` is ``scan`` (no bound columns), ``index`` (secondary index on
    ``key_columns``), ``canonical`` (all columns bound, probe the interning
    index) or ``id`` (the clause's id is already bound).
    """

    position: int
    relation: RelationInfo
    source: str
    mode: str
    key_columns: Tuple[int, ...]
    key: Tuple[Operand, ...]
    columns: Tuple[ColumnOp, ...]
    id_slot: Optional[int]
    bind_id: Optional[int]
    filters: Tuple[Filter, ...] = ()


@dataclass(frozen=True)
class AntiJoin:
    relation: RelationInfo
    key_columns: Tuple[int, ...]
    key: Tuple[Operand, ...]

    @property
    def canonical(self) -> bool:
        return len(self.key_columns) == self.relation.arity


@dataclass(frozen=True)
class PlannedRule:
    rule: CoreRule
    rule_index: int
    delta_position: Optional[int]
    steps: Tuple[JoinStep, ...]
    anti_joins: Tuple[AntiJoin, ...]
    head: RelationInfo
    head_args: Tuple[Operand, ...]
    slots: Tuple[str, ...]
    filters: Tuple[Filter, ...] = ()

    @property
    def once(self) -> bool:
        return self.delta_position is None


def _operand(term: object, bound: Mapping[str, int], store: TermStore) -> Operand:
    if isinstance(term, Lit):
        return Operand(const=store.literal(term.value))
    if isinstance(term, Var):
        return Operand(slot=bound[term.name])
    raise TypeError(f"cannot read {term!r}")


def _constraint_vars(constraint: Constraint) -> Set[str]:
    return {side.name for side in (constraint.left, constraint.right) if isinstance(side, Var)}


def compile_version(
    rule: CoreRule,
    rule_index: int,
    order: Sequence[int],
    sources: Mapping[int, str],
    store: TermStore,
    delta_position: Optional[int] = None,
) -> PlannedRule:
    """Compile one visit order of a rule's body into join steps."""
    bound: Dict[str, int] = {}
    slots: List[str] = []
    pending = list(rule.constraints)

    def new_slot(name: str) -> int:
        bound[name] = len(slots)
        slots.append(name)
        return bound[name]

    def ready_filters() -> Tuple[Filter, ...]:
        ready = [c for c in pending if _constraint_vars(c) <= set(bound)]
        for constraint in ready:
            pending.remove(constraint)
        return tuple(
            Filter(c.op, _operand(c.left, bound, store), _operand(c.right, bound, store))
            for c in ready
        )

    initial_filters = ready_filters()
    steps: List[JoinStep] = []
    for position in order:
        clause = rule.body[position]
        info = store.register(clause.rel, len(clause.args))
        binder = clause.binder.name if isinstance(clause.binder, Var) else None
        id_slot = bound.get(binder) if binder is not None else None
        key_columns: List[int] = []
        key: List[Operand] = []
        columns: List[ColumnOp] = []
        fresh_here: Dict[str, int] = {}
        for column, arg in enumerate(clause.args):
            if isinstance(arg, Wildcard):
                continue
            if isinstance(arg, Lit) or (isinstance(arg, Var) and arg.name in bound and arg.name not in fresh_here):
                operand = _operand(arg, bound, store)
                if id_slot is None:
                    key_columns.append(column)
                    key.append(operand)
                else:
                    columns.append(ColumnOp(column, "check", operand))
            elif isinstance(arg, Var) and arg.name in fresh_here:
                columns.append(ColumnOp(column, "check", Operand(slot=fresh_here[arg.name])))
            elif isinstance(arg, Var):
                slot = new_slot(arg.name)
                fresh_here[arg.name] = slot
                columns.append(ColumnOp(column, "bind", Operand(slot=slot)))
        if id_slot is not None:
            mode = "id"
        elif key_columns and len(key_columns) == info.arity:
            mode = "canonical"
        elif key_columns:
            mode = "index"
        else:
            mode = "scan"
        bind_id = None
        if binder is not None and id_slot is None:
            if binder in fresh_here:
                columns.append(ColumnOp(-1, "check", Operand(slot=fresh_here[binder])))
            else:
                bind_id = new_slot(binder)
        steps.append(
            JoinStep(
                position,
                info,
                sources.get(position, FULL),
                mode,
                tuple(key_columns),
                tuple(key),
                tuple(columns),
                id_slot,
                bind_id,
                ready_filters(),
            )
        )

    anti_joins: List[AntiJoin] = []
    for clause in rule.negated:
        info = store.register(clause.rel, len(clause.args))
        cols = [c for c, arg in enumerate(clause.args) if not isinstance(arg, Wildcard)]
        anti_joins.append(
            AntiJoin(info, tuple(cols), tuple(_operand(clause.args[c], bound, store) for c in cols))
        )

    head = store.register(rule.head.rel, len(rule.head.args))
    head_args = tuple(_operand(arg, bound, store) for arg in rule.head.args)
    if pending:
        raise ValueError(f"constraint variables never bound in rule {rule}")
    return PlannedRule(
        rule,
        rule_index,
        delta_position,
        tuple(steps),
        tuple(anti_joins),
        head,
        head_args,
        tuple(slots),
        initial_filters,
    )


def semi_naive_versions(
    rule: CoreRule, stratum: Stratum, store: TermStore, rule_index: int = 0
) -> List[PlannedRule]:
    """One version per same-stratum body clause, that clause reading delta.

    Earlier same-stratum clauses read full and delta, later ones read full
    only. A rule with no same-stratum clause gets a single full version that
    runs once, at stratum start.
    """
    recursive = [i for i, clause in enumerate(rule.body) if clause.rel in stratum.relations]
    everything = list(range(len(rule.body)))
    if not recursive:
        return [compile_version(rule, rule_index, everything, {}, store)]
    versions: List[PlannedRule] = []
    for k in recursive:
        sources = {j: (ALL if j < k else FULL) for j in recursive}
        sources[k] = DELTA
        order = [k] + [j for j in everything if j != k]
        versions.append(compile_version(rule, rule_index, order, sources, store, k))
    return versions


def select_indices(versions: Iterable[PlannedRule], store: TermStore) -> Mapping[str, FrozenSet[Tuple[int, ...]]]:
    """Index sets per relation; the canonical all-columns index is always present."""
    chosen: Dict[str, Set[Tuple[int, ...]]] = {
        info.name: {tuple(range(info.arity))} for info in store.relations
    }
    for version in versions:
        for step in version.steps:
            if step.mode == "index":
                chosen.setdefault(step.relation.name, set()).add(step.key_columns)
        for anti in version.anti_joins:
            if not anti.canonical and anti.key_columns:
                chosen.setdefault(anti.relation.name, set()).add(anti.key_columns)
    return frozendict({name: frozenset(cols) for name, cols in sorted(chosen.items())})


@dataclass(frozen=True)
class ProgramPlan:
    program: CoreProgram
    strata: Tuple[Stratum, ...]
    versions: Tuple[Tuple[PlannedRule, ...], ...]
    indices: Mapping[str, FrozenSet[Tuple[int, ...]]]
    relations: Mapping[str, RelationInfo]

    def secondary_indices(self, relation: str) -> List[Tuple[int, ...]]:
        arity = self.relations[relation].arity
        return sorted(cols for cols in self.indices.get(relation, ()) if len(cols) != arity and cols)


def plan_program(program: CoreProgram, store: TermStore) -> ProgramPlan:
    for name, arity in program.arities.items():
        store.register(name, arity)
    graph = dependency_graph(program)
    strata = stratify(graph, program)
    rule_ids = {id(rule): index for index, rule in enumerate(program.rules)}
    per_stratum: List[Tuple[PlannedRule, ...]] = []
    for stratum in strata:
        versions: List[PlannedRule] = []
        for rule in stratum.rules:
            versions.extend(semi_naive_versions(rule, stratum, store, rule_ids[id(rule)]))
        per_stratum.append(tuple(versions))
    indices = select_indices((v for group in per_stratum for v in group), store)
    relations = frozendict({info.name: info for info in store.relations})
    logger.debug(
        "Planned %d rule versions over %d strata",
        sum(len(group) for group in per_stratum),
        len(strata),
    )
    return ProgramPlan(program, tuple(strata), tuple(per_stratum), indices, relations)


def check_plan_keys(plan: ProgramPlan) -> List[str]:
    """Report join steps whose key columns are not bound by earlier steps."""
    problems: List[str] = []
    for group in plan.versions:
        for version in group:
            bound: Set[int] = set()
            for step in version.steps:
                for operand in step.key:
                    if operand.slot >= 0 and operand.slot not in bound:
                        problems.append(f"rule {version.rule_index}: unbound key slot in {step.relation.name}")
                if step.id_slot is not None and step.id_slot not in bound:
                    problems.append(f"rule {version.rule_index}: unbound id slot in {step.relation.name}")
                bound.update(op.operand.slot for op in step.columns if op.action == "bind")
                if step.bind_id is not None:
                    bound.add(step.bind_id)
    return problems


# ----------------------------------------------------------------------
# Printing
# ----------------------------------------------------------------------
def _format_operand(operand: Operand, slots: Sequence[str], store: TermStore) -> str:
    if operand.slot >= 0:
        return slots[operand.slot]
    assert operand.const is not None
    return store.format_value(operand.const)


def format_plan(plan: ProgramPlan, store: TermStore) -> str:
    lines: List[str] = []
    for stratum, group in zip(plan.strata, plan.versions):
        lines.append(str(stratum))
        for version in group:
            tag = "once" if version.once else f"delta at {version.delta_position}"
            lines.append(f"  rule {version.rule_index} [{tag}]: {version.rule}")
            for step in version.steps:
                if step.mode == "id":
                    how = f"by id {version.slots[step.id_slot or 0]}"
                elif step.mode == "scan":
                    how = "scan"
                else:
                    keys = ", ".join(_format_operand(op, version.slots, store) for op in step.key)
                    cols = ",".join(str(c) for c in step.key_columns)
                    how = f"{step.mode} ({cols}) = ({keys})"
                lines.append(f"    {step.source} {step.relation.name}: {how}")
            for anti in version.anti_joins:
                cols = ",".join(str(c) for c in anti.key_columns)
                lines.append(f"    not {anti.relation.name} on ({cols})")
    lines.append("indices:")
    for name, column_sets in plan.indices.items():
        rendered = " ".join("(" + ",".join(str(c) for c in cols) + ")" for cols in sorted(column_sets))
        lines.append(f"  {name}: {rendered}")
    return "\n".join(lines) + "\n"
