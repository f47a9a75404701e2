"""Compile surface rules with nested clauses into flat core rules.

Body clauses are flattened with ``subcl``: a nested clause becomes a fresh id
variable plus the flat clauses that bind it. A nested head cannot be bound by a
single fresh head id, so it is split into one rule per nested subclause,
innermost first, all sharing the original body.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .syntax import (
    WILDCARD,
    Clause,
    Constraint,
    Program,
    SurfaceRule,
    Subclause,
    Var,
    Wildcard,
    format_rules,
    is_flat,
    relation_arities,
    rule_vars,
)

logger = logging.getLogger(__name__)

FRESH_PREFIX = "$f"


@dataclass(frozen=True)
class CoreRule:
    """A flat rule: ``head :- body, !negated, constraints``.

    ``body`` clauses carry an id binder (``None`` reads as a wildcard). The head
    never has one; its id is the fresh existential of the rule.
    ``fact`` marks rules that came from a bodiless source rule.
    """

    head: Clause
    body: Tuple[Clause, ...] = ()
    negated: Tuple[Clause, ...] = ()
    constraints: Tuple[Constraint, ...] = ()
    origin: Optional[int] = field(default=None, compare=False)
    auxiliary: bool = field(default=False, compare=False)
    fact: bool = field(default=False, compare=False)

    def to_surface(self) -> SurfaceRule:
        return SurfaceRule((self.head,), (*self.body, *self.negated, *self.constraints))

    def variables(self) -> Set[str]:
        return rule_vars(self.to_surface())

    def __str__(self) -> str:
        return format_rules([self.to_surface()]).strip()


@dataclass(frozen=True)
class CoreProgram:
    rules: Tuple[CoreRule, ...]
    arities: Dict[str, int]

    def head_relations(self) -> Set[str]:
        return {rule.head.rel for rule in self.rules}

    def __str__(self) -> str:
        return format_rules([rule.to_surface() for rule in self.rules])


def _wildcard_free(item: Subclause) -> bool:
    if isinstance(item, Wildcard):
        return False
    if isinstance(item, Clause):
        return all(_wildcard_free(arg) for arg in item.args)
    return True


class _Fresh:
    def __init__(self, taken: Iterable[str]) -> None:
        self.taken = set(taken)
        self.counter = 0

    def __call__(self) -> Var:
        while True:
            name = f"{FRESH_PREFIX}{self.counter}"
            self.counter += 1
            if name not in self.taken:
                self.taken.add(name)
                return Var(name)


class _BodyFlattener:
    def __init__(self, fresh: _Fresh) -> None:
        self.fresh = fresh
        self.memo: Dict[Clause, Var] = {}

    def subcl(self, item: Subclause, out: List[Clause]) -> Subclause:
        if not isinstance(item, Clause):
            return item
        shareable = item.binder is None and _wildcard_free(item)
        if shareable and item in self.memo:
            return self.memo[item]
        binder = item.binder if isinstance(item.binder, Var) else None
        var = binder or self.fresh()
        if shareable:
            self.memo[item] = var
        slot = len(out)
        out.append(item)
        args = tuple(self.subcl(arg, out) for arg in item.args)
        out[slot] = Clause(item.rel, args, var, False, item.pos)
        return var

    def clause(self, item: Clause, out: List[Clause]) -> None:
        slot = len(out)
        out.append(item)
        args = tuple(self.subcl(arg, out) for arg in item.args)
        out[slot] = replace(item, args=args)


def subcl(item: Subclause, taken: Iterable[str] = ()) -> Tuple[Subclause, List[Clause]]:
    """Flatten one subclause: variables and literals map to themselves."""
    out: List[Clause] = []
    term = _BodyFlattener(_Fresh(taken)).subcl(item, out)
    return term, out


def _dedupe(clauses: Sequence[Clause]) -> Tuple[Clause, ...]:
    seen: Set[Clause] = set()
    result: List[Clause] = []
    for clause in clauses:
        if clause not in seen:
            seen.add(clause)
            result.append(clause)
    return tuple(result)


def flatten_body(rule: SurfaceRule, origin: Optional[int] = None) -> CoreRule:
    """Flatten the body of a single-head rule; the head is left as written."""
    if len(rule.heads) != 1:
        raise ValueError("flatten_body expects a desugared single-head rule")
    flattener = _BodyFlattener(_Fresh(rule_vars(rule)))
    positive: List[Clause] = []
    negated: List[Clause] = []
    constraints: List[Constraint] = []
    for item in rule.body:
        if isinstance(item, Constraint):
            constraints.append(item)
        elif item.negated:
            negated.append(item)
        else:
            flattener.clause(item, positive)
    return CoreRule(
        rule.heads[0],
        _dedupe(positive),
        _dedupe(negated),
        tuple(constraints),
        origin,
        fact=not rule.body,
    )


def head_materialization_split(rule: CoreRule) -> List[CoreRule]:
    """Split a nested head into rules that each create one fact.

    Every nested head subclause gets its own rule, emitted innermost first; a
    rule's extra body clauses look up exactly the facts its head columns refer
    to, so each rule only references ids its own body can produce.
    """
    if is_flat(rule.head):
        return [rule]
    fresh = _Fresh(rule.variables())
    memo: Dict[Clause, Var] = {}
    made: Dict[str, Clause] = {}
    order: List[str] = []

    def lift(item: Subclause) -> Subclause:
        if not isinstance(item, Clause):
            return item
        key = replace(item, binder=None)
        if key in memo:
            return memo[key]
        args = tuple(lift(arg) for arg in item.args)
        var = fresh()
        memo[key] = var
        made[var.name] = Clause(item.rel, args, var, False, item.pos)
        order.append(var.name)
        return var

    head_args = tuple(lift(arg) for arg in rule.head.args)

    def needed(args: Sequence[Subclause]) -> List[Clause]:
        wanted: Set[str] = set()
        stack = [arg.name for arg in args if isinstance(arg, Var) and arg.name in made]
        while stack:
            name = stack.pop()
            if name in wanted:
                continue
            wanted.add(name)
            stack.extend(
                arg.name for arg in made[name].args if isinstance(arg, Var) and arg.name in made
            )
        return [made[name] for name in order if name in wanted]

    rules: List[CoreRule] = []
    for name in order:
        aux = made[name]
        rules.append(
            replace(
                rule,
                head=Clause(aux.rel, aux.args, None, False, aux.pos),
                body=rule.body + tuple(needed(aux.args)),
                auxiliary=True,
            )
        )
    rules.append(
        replace(
            rule,
            head=Clause(rule.head.rel, head_args, None, False, rule.head.pos),
            body=rule.body + tuple(needed(head_args)),
        )
    )
    return rules


def flatten_rule(rule: SurfaceRule, origin: Optional[int] = None) -> List[CoreRule]:
    return head_materialization_split(flatten_body(rule, origin))


def flatten_program(program: Program) -> CoreProgram:
    arities = relation_arities(program)
    rules: List[CoreRule] = []
    for index, rule in enumerate(program.rules):
        rules.extend(flatten_rule(rule, index))
    logger.debug("Flattened %d surface rules into %d core rules", len(program.rules), len(rules))
    return CoreProgram(tuple(rules), arities)


def introduced_variables(source: SurfaceRule, core: Sequence[CoreRule]) -> Set[str]:
    names: Set[str] = set()
    for rule in core:
        names.update(rule.variables())
    return names - rule_vars(source)


def is_flat_rule(rule: CoreRule) -> bool:
    return all(is_flat(clause) for clause in (rule.head, *rule.body, *rule.negated))
