"""Slow, structural oracle: naive immediate consequence over nested facts.

Nothing here touches the term store or the engine. Facts are plain
:class:`NestedFact` trees and rules are matched structurally, so a binder
simply binds the matched fact itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

from .errors import HeightLimitExceeded, IterationLimitExceeded
from .planner import DependencyGraph, stratify
from .syntax import Clause, Constraint, Lit, Program, SurfaceRule, Subclause, Var, Wildcard, iter_clauses
from .terms import NestedArg, NestedFact, format_nested, nested_height

logger = logging.getLogger(__name__)

Env = Dict[str, NestedArg]
Index = Mapping[str, Iterable[NestedFact]]


def subfact(fact: NestedArg) -> Set[NestedFact]:
    """The fact plus every fact nested inside it; literals contribute nothing."""
    found: Set[NestedFact] = set()
    stack = [fact]
    while stack:
        item = stack.pop()
        if isinstance(item, NestedFact) and item not in found:
            found.add(item)
            stack.extend(item.args)
    return found


def subfact_closure(facts: Iterable[NestedFact]) -> Set[NestedFact]:
    closed: Set[NestedFact] = set()
    for fact in facts:
        closed |= subfact(fact)
    return closed


def is_subfact_closed(db: Set[NestedFact]) -> bool:
    return all(arg in db for fact in db for arg in fact.args if isinstance(arg, NestedFact))


# ----------------------------------------------------------------------
# Structural matching
# ----------------------------------------------------------------------
def _match_arg(pattern: Subclause, value: NestedArg, env: Env, used: List[NestedFact]) -> bool:
    if isinstance(pattern, Wildcard):
        return True
    if isinstance(pattern, Lit):
        return type(pattern.value) is type(value) and pattern.value == value
    if isinstance(pattern, Var):
        if pattern.name in env:
            return env[pattern.name] == value
        env[pattern.name] = value
        return True
    if not isinstance(value, NestedFact):
        return False
    return _match_clause(pattern, value, env, used)


def _match_clause(clause: Clause, fact: NestedFact, env: Env, used: List[NestedFact]) -> bool:
    if clause.rel != fact.rel or len(clause.args) != len(fact.args):
        return False
    if isinstance(clause.binder, Var):
        if not _match_arg(clause.binder, fact, env, used):
            return False
    for pattern, value in zip(clause.args, fact.args):
        if not _match_arg(pattern, value, env, used):
            return False
    used.append(fact)
    return True


def _instantiate(item: Subclause, env: Env) -> NestedArg:
    if isinstance(item, Lit):
        return item.value
    if isinstance(item, Var):
        return env[item.name]
    if isinstance(item, Clause):
        return NestedFact(item.rel, tuple(_instantiate(arg, env) for arg in item.args))
    raise ValueError("wildcards cannot be instantiated")


def _read(term: object, env: Env) -> NestedArg:
    if isinstance(term, Lit):
        return term.value
    assert isinstance(term, Var)
    return env[term.name]


def _holds(constraint: Constraint, env: Env) -> bool:
    left, right = _read(constraint.left, env), _read(constraint.right, env)
    equal = type(left) is type(right) and left == right
    return equal if constraint.op == "=" else not equal


def _exists(clause: Clause, env: Env, index: Index) -> bool:
    for fact in index.get(clause.rel, ()):
        if _match_clause(clause, fact, dict(env), []):
            return True
    return False


def rule_matches(rule: SurfaceRule, index: Index) -> Iterator[Tuple[Env, Tuple[NestedFact, ...]]]:
    """Every substitution satisfying the body, with the facts it used."""
    positives = [item for item in rule.body if isinstance(item, Clause) and not item.negated]
    negatives = [item for item in rule.body if isinstance(item, Clause) and item.negated]
    constraints = [item for item in rule.body if isinstance(item, Constraint)]

    def search(depth: int, env: Env, used: Tuple[NestedFact, ...]) -> Iterator[Tuple[Env, Tuple[NestedFact, ...]]]:
        if depth == len(positives):
            if all(_holds(c, env) for c in constraints) and not any(
                _exists(n, env, index) for n in negatives
            ):
                yield env, used
            return
        clause = positives[depth]
        for fact in list(index.get(clause.rel, ())):
            local = dict(env)
            matched: List[NestedFact] = []
            if _match_clause(clause, fact, local, matched):
                yield from search(depth + 1, local, used + tuple(matched))

    yield from search(0, {}, ())


def created_facts(rule: SurfaceRule, env: Env) -> List[NestedFact]:
    """Facts a rule instance constructs: each head clause, nested ones included."""
    created: List[NestedFact] = []
    for head in rule.heads:
        for clause in iter_clauses(head):
            fact = _instantiate(clause, env)
            assert isinstance(fact, NestedFact)
            created.append(fact)
    return created


# ----------------------------------------------------------------------
# Stratification of surface programs
# ----------------------------------------------------------------------
def _head_relations(rule: SurfaceRule) -> Set[str]:
    return {clause.rel for head in rule.heads for clause in iter_clauses(head)}


def surface_graph(program: Program) -> DependencyGraph:
    nodes: Set[str] = {decl.name for decl in program.decls}
    edges: Set[Tuple[str, str]] = set()
    negative: Set[Tuple[str, str]] = set()
    for rule in program.rules:
        heads = _head_relations(rule)
        nodes |= heads
        for head in rule.heads:
            for clause in iter_clauses(head):
                for arg in clause.args:
                    if isinstance(arg, Clause):
                        edges.add((arg.rel, clause.rel))
        for item in rule.body:
            if not isinstance(item, Clause):
                continue
            for clause in iter_clauses(item):
                nodes.add(clause.rel)
                for head in heads:
                    edges.add((clause.rel, head))
                    if item.negated:
                        negative.add((clause.rel, head))
    return DependencyGraph(tuple(sorted(nodes)), frozenset(edges), frozenset(negative))


# ----------------------------------------------------------------------
# Naive fixpoint
# ----------------------------------------------------------------------
def _index(db: Iterable[NestedFact]) -> Dict[str, Set[NestedFact]]:
    index: Dict[str, Set[NestedFact]] = {}
    for fact in db:
        index.setdefault(fact.rel, set()).add(fact)
    return index


def _frozen_index(db: Dict[str, Set[NestedFact]]) -> Dict[str, List[NestedFact]]:
    return {rel: list(facts) for rel, facts in db.items()}


def naive_fixpoint(
    program: Program,
    edb: Iterable[NestedFact] = (),
    max_iterations: Optional[int] = None,
    max_height: Optional[int] = None,
) -> Set[NestedFact]:
    """Least fixpoint of immediate consequence, stratum by stratum."""
    db = subfact_closure(edb)
    index = _index(db)
    strata = stratify(surface_graph(program))
    for stratum in strata:
        rules = [rule for rule in program.rules if _head_relations(rule) & stratum.relations]
        if not rules:
            continue
        rounds = 0
        while True:
            rounds += 1
            snapshot = _frozen_index(index)
            added: Set[NestedFact] = set()
            for rule in rules:
                for env, _ in rule_matches(rule, snapshot):
                    for fact in created_facts(rule, env):
                        if fact.rel in stratum.relations and fact not in db and fact not in added:
                            if max_height is not None and nested_height(fact) > max_height:
                                raise HeightLimitExceeded(max_height, format_nested(fact))
                            added.add(fact)
            if not added:
                break
            db |= added
            for fact in added:
                index.setdefault(fact.rel, set()).add(fact)
            if max_iterations is not None and rounds >= max_iterations:
                raise IterationLimitExceeded(max_iterations, stratum.index)
    logger.debug("Reference fixpoint holds %d facts", len(db))
    return db


# ----------------------------------------------------------------------
# Model checking
# ----------------------------------------------------------------------
def herbrand_violations(db: Set[NestedFact], program: Program) -> List[str]:
    problems: List[str] = []
    for fact in sorted(db, key=format_nested):
        for arg in fact.args:
            if isinstance(arg, NestedFact) and arg not in db:
                problems.append(f"{format_nested(fact)} references missing {format_nested(arg)}")
    index = _frozen_index(_index(db))
    for number, rule in enumerate(program.rules):
        for env, _ in rule_matches(rule, index):
            for fact in created_facts(rule, env):
                if fact not in db:
                    problems.append(f"rule {number} derives {format_nested(fact)}, which is missing")
    return problems


def herbrand_model_check(db: Set[NestedFact], program: Program) -> bool:
    """True iff ``db`` is subfact-closed and closed under every rule."""
    return not herbrand_violations(set(db), program)


# ----------------------------------------------------------------------
# Lineage
# ----------------------------------------------------------------------
def derivation_leaves(
    program: Program, db: Set[NestedFact], edb: Iterable[NestedFact]
) -> Dict[NestedFact, FrozenSet[NestedFact]]:
    """Union of EDB leaves over every finite derivation tree of each fact.

    Instances with no body facts produce EDB facts of their own.
    """
    base = set(edb)
    index = _frozen_index(_index(db))
    instances: List[Tuple[List[NestedFact], Tuple[NestedFact, ...]]] = []
    for rule in program.rules:
        for env, used in rule_matches(rule, index):
            created = created_facts(rule, env)
            if not used:
                base.update(created)
            instances.append((created, used))

    leaves: Dict[NestedFact, Set[NestedFact]] = {fact: {fact} for fact in base}
    changed = True
    while changed:
        changed = False
        for created, used in instances:
            if any(fact not in leaves for fact in used):
                continue
            gathered: Set[NestedFact] = set()
            for fact in used:
                gathered |= leaves[fact]
            for fact in created:
                if fact in base:
                    continue
                if fact not in leaves:
                    leaves[fact] = set(gathered)
                    changed = True
                elif not gathered <= leaves[fact]:
                    leaves[fact] |= gathered
                    changed = True
    return {fact: frozenset(found) for fact, found in leaves.items()}


# ----------------------------------------------------------------------
# Comparison
# ----------------------------------------------------------------------
@dataclass
class FactDiff:
    missing: List[str] = field(default_factory=list)
    extra: List[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.missing and not self.extra

    def to_lines(self) -> List[str]:
        return [f"- {text}" for text in self.missing] + [f"+ {text}" for text in self.extra]


def diff_fact_sets(engine: Iterable[NestedFact], oracle: Iterable[NestedFact]) -> FactDiff:
    """``missing``: oracle facts the engine lacks; ``extra``: the reverse."""
    engine_set, oracle_set = set(engine), set(oracle)
    return FactDiff(
        sorted(format_nested(f) for f in oracle_set - engine_set),
        sorted(format_nested(f) for f in engine_set - oracle_set),
    )
