"""Surface language: AST, parser, validation, desugaring and printing."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

from .errors import (
    ArityError,
    IllFormedIdUnification,
    IngestError,
    NestedNegation,
    SlogSyntaxError,
    UnsafeHeadVariable,
)
from .terms import NestedFact, format_literal

logger = logging.getLogger(__name__)


class Pos(NamedTuple):
    line: int
    column: int


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Wildcard:
    def __str__(self) -> str:
        return "_"


WILDCARD = Wildcard()


@dataclass(frozen=True)
class Lit:
    value: Union[int, str]

    def __str__(self) -> str:
        return format_literal(self.value)


Binder = Union[Var, Wildcard]


@dataclass(frozen=True)
class Clause:
    rel: str
    args: Tuple["Subclause", ...] = ()
    binder: Optional[Binder] = None
    negated: bool = False
    pos: Optional[Pos] = field(default=None, compare=False)

    def __str__(self) -> str:
        return format_subclause(self)


Subclause = Union[Clause, Var, Wildcard, Lit]
Term = Union[Var, Lit]


@dataclass(frozen=True)
class Constraint:
    op: str
    left: Term
    right: Term
    pos: Optional[Pos] = field(default=None, compare=False)

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


BodyItem = Union[Clause, Constraint]


@dataclass(frozen=True)
class SurfaceRule:
    heads: Tuple[Clause, ...]
    body: Tuple[BodyItem, ...] = ()
    pos: Optional[Pos] = field(default=None, compare=False)

    def __str__(self) -> str:
        return format_rule(self)


@dataclass(frozen=True)
class Decl:
    name: str
    columns: Tuple[str, ...]
    pos: Optional[Pos] = field(default=None, compare=False)

    @property
    def arity(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class Program:
    rules: Tuple[SurfaceRule, ...] = ()
    decls: Tuple[Decl, ...] = ()


# ----------------------------------------------------------------------
# Lexer
# ----------------------------------------------------------------------
class Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int


_TOKEN_SPEC = [
    ("COMMENT", r"//[^\n]*"),
    ("NEWLINE", r"\n"),
    ("SPACE", r"[ \t\r\f\v]+"),
    ("DECL", r"\.decl\b"),
    ("IMPLIES", r":-"),
    ("NEQ", r"!="),
    ("NUMBER", r"-?\d+"),
    ("STRING", r'"(?:[^"\\\n]|\\.)*"'),
    ("WILDCARD", r"_(?![\w$'])"),
    ("IDENT", r"(?:[^\W\d]|\$)[\w$']*"),
    ("PUNCT", r"[(),.=!]"),
    ("MISMATCH", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    line, line_start = 1, 0
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup or "MISMATCH"
        column = match.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = match.end()
            continue
        if kind in ("SPACE", "COMMENT"):
            continue
        if kind == "MISMATCH":
            raise SlogSyntaxError(f"unexpected character {match.group()!r}", line, column)
        tokens.append(Token(kind, match.group(), line, column))
    tokens.append(Token("EOF", "", line, len(text) - line_start + 1))
    return tokens


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------
class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.index = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def at(self, kind: str, text: Optional[str] = None, offset: int = 0) -> bool:
        token = self.peek(offset)
        return token.kind == kind and (text is None or token.text == text)

    def advance(self) -> Token:
        token = self.peek()
        self.index += 1
        return token

    def expect(self, kind: str, text: Optional[str] = None, what: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            self.fail(f"expected {what or text or kind.lower()}")
        return self.advance()

    def fail(self, message: str) -> None:
        token = self.peek()
        found = "end of input" if token.kind == "EOF" else repr(token.text)
        raise SlogSyntaxError(f"{message}, found {found}", token.line, token.column)

    # Program level -----------------------------------------------------
    def program(self) -> Program:
        rules: List[SurfaceRule] = []
        decls: List[Decl] = []
        while not self.at("EOF"):
            if self.at("DECL"):
                decls.append(self.decl())
            else:
                rules.append(self.rule())
        return Program(tuple(rules), tuple(decls))

    def decl(self) -> Decl:
        start = self.advance()
        name = self.expect("IDENT", what="relation name").text
        self.expect("PUNCT", "(")
        columns: List[str] = []
        if not self.at("PUNCT", ")"):
            columns.append(self.expect("IDENT", what="column name").text)
            while self.at("PUNCT", ","):
                self.advance()
                columns.append(self.expect("IDENT", what="column name").text)
        self.expect("PUNCT", ")")
        if self.at("PUNCT", "."):
            self.advance()
        return Decl(name, tuple(columns), Pos(start.line, start.column))

    def rule(self) -> SurfaceRule:
        start = self.peek()
        heads = [self.head_clause()]
        while self.at("PUNCT", ","):
            self.advance()
            heads.append(self.head_clause())
        body: List[BodyItem] = []
        if self.at("IMPLIES"):
            self.advance()
            body.append(self.body_item())
            while self.at("PUNCT", ","):
                self.advance()
                body.append(self.body_item())
        self.expect("PUNCT", ".", what="'.' at end of rule")
        return SurfaceRule(tuple(heads), tuple(body), Pos(start.line, start.column))

    # Clauses -----------------------------------------------------------
    def _at_binder(self) -> bool:
        return (
            (self.at("IDENT") or self.at("WILDCARD"))
            and self.at("PUNCT", "=", 1)
            and self.at("IDENT", offset=2)
            and self.at("PUNCT", "(", 3)
        )

    def head_clause(self) -> Clause:
        if self._at_binder():
            return self.bound_clause()
        if not (self.at("IDENT") and self.at("PUNCT", "(", 1)):
            self.fail("expected a head clause")
        return self.clause()

    def bound_clause(self) -> Clause:
        token = self.advance()
        binder: Binder = WILDCARD if token.kind == "WILDCARD" else Var(token.text)
        self.expect("PUNCT", "=")
        return replace(self.clause(), binder=binder)

    def clause(self, negated: bool = False) -> Clause:
        token = self.expect("IDENT", what="relation name")
        self.expect("PUNCT", "(")
        args: List[Subclause] = []
        if not self.at("PUNCT", ")"):
            args.append(self.subclause())
            while self.at("PUNCT", ","):
                self.advance()
                args.append(self.subclause())
        self.expect("PUNCT", ")", what="')' closing the clause")
        return Clause(token.text, tuple(args), None, negated, Pos(token.line, token.column))

    def subclause(self) -> Subclause:
        if self._at_binder():
            return self.bound_clause()
        if self.at("IDENT") and self.at("PUNCT", "(", 1):
            return self.clause()
        if self.at("WILDCARD"):
            self.advance()
            return WILDCARD
        return self.term()

    def term(self) -> Term:
        token = self.peek()
        if token.kind == "IDENT":
            self.advance()
            return Var(token.text)
        if token.kind == "NUMBER":
            self.advance()
            return Lit(int(token.text))
        if token.kind == "STRING":
            self.advance()
            try:
                return Lit(json.loads(token.text))
            except ValueError as exc:
                raise SlogSyntaxError("malformed string literal", token.line, token.column) from exc
        self.fail("expected a variable, literal or clause")
        raise AssertionError("unreachable")

    def body_item(self) -> BodyItem:
        if self.at("PUNCT", "!"):
            self.advance()
            return self.clause(negated=True)
        if self._at_binder():
            return self.bound_clause()
        if self.at("IDENT") and self.at("PUNCT", "(", 1):
            return self.clause()
        start = self.peek()
        left = self.term()
        if self.at("NEQ"):
            op = self.advance().text
        elif self.at("PUNCT", "="):
            op = self.advance().text
        else:
            self.fail("expected '=' or '!=' in a guard")
            raise AssertionError("unreachable")
        right = self.term()
        return Constraint(op, left, right, Pos(start.line, start.column))

    # Ground terms ------------------------------------------------------
    def ground_terms(self) -> List[NestedFact]:
        facts: List[NestedFact] = []
        while not self.at("EOF"):
            facts.append(self.ground_fact())
            if self.at("PUNCT", "."):
                self.advance()
        return facts

    def ground_fact(self) -> NestedFact:
        token = self.peek()
        if not (token.kind == "IDENT" and self.at("PUNCT", "(", 1)):
            if token.kind in ("IDENT", "WILDCARD"):
                raise IngestError(
                    f"non-ground term: variable '{token.text}' at line {token.line}, column {token.column}"
                )
            self.fail("expected a fact")
        clause = self.clause()
        return _ground(clause)


def _ground(item: Subclause) -> NestedFact:
    if isinstance(item, Clause):
        args: List[Union[NestedFact, int, str]] = []
        for arg in item.args:
            if isinstance(arg, Clause):
                args.append(_ground(arg))
            elif isinstance(arg, Lit):
                args.append(arg.value)
            else:
                where = f" at line {item.pos.line}" if item.pos else ""
                raise IngestError(f"non-ground term: '{arg}' inside {item.rel}(...){where}")
        return NestedFact(item.rel, tuple(args))
    raise IngestError(f"'{item}' is not a fact")


def parse_program(text: str) -> Program:
    program = _Parser(text).program()
    declared: Dict[str, Decl] = {}
    for decl in program.decls:
        previous = declared.get(decl.name)
        if previous is not None and previous.arity != decl.arity:
            raise ArityError(
                f"relation '{decl.name}' declared with arity {previous.arity} and {decl.arity}"
            )
        declared[decl.name] = decl
    logger.debug("Parsed %d rules and %d declarations", len(program.rules), len(program.decls))
    return program


def parse_facts(text: str) -> List[NestedFact]:
    """Parse ground terms, e.g. the contents of a ``.facts`` file."""
    try:
        return _Parser(text).ground_terms()
    except SlogSyntaxError as exc:
        raise IngestError(f"cannot parse facts: {exc}") from exc


def parse_fact(text: str) -> NestedFact:
    facts = parse_facts(text)
    if len(facts) != 1:
        raise IngestError(f"expected exactly one fact, found {len(facts)}")
    return facts[0]


# ----------------------------------------------------------------------
# Traversal helpers
# ----------------------------------------------------------------------
def iter_clauses(item: Subclause) -> Iterator[Clause]:
    """Yield ``item`` and every clause nested inside it, outermost first."""
    if isinstance(item, Clause):
        yield item
        for arg in item.args:
            yield from iter_clauses(arg)


def subclause_vars(item: Subclause) -> Iterator[str]:
    if isinstance(item, Var):
        yield item.name
    elif isinstance(item, Clause):
        if isinstance(item.binder, Var):
            yield item.binder.name
        for arg in item.args:
            yield from subclause_vars(arg)


def item_vars(item: BodyItem) -> Iterator[str]:
    if isinstance(item, Constraint):
        for side in (item.left, item.right):
            if isinstance(side, Var):
                yield side.name
    else:
        yield from subclause_vars(item)


def rule_vars(rule: SurfaceRule) -> Set[str]:
    names: Set[str] = set()
    for head in rule.heads:
        names.update(subclause_vars(head))
    for item in rule.body:
        names.update(item_vars(item))
    return names


def is_flat(clause: Clause) -> bool:
    return not any(isinstance(arg, Clause) for arg in clause.args)


def relation_arities(program: Program) -> Dict[str, int]:
    """Arity of every relation, checking declarations and every use agree."""
    arities: Dict[str, int] = {decl.name: decl.arity for decl in program.decls}

    def record(clause: Clause) -> None:
        known = arities.setdefault(clause.rel, len(clause.args))
        if known != len(clause.args):
            where = f" at line {clause.pos.line}" if clause.pos else ""
            raise ArityError(
                f"relation '{clause.rel}' used with arity {len(clause.args)}{where}, expected {known}"
            )

    for rule in program.rules:
        for item in (*rule.heads, *rule.body):
            if isinstance(item, Clause):
                for clause in iter_clauses(item):
                    record(clause)
    return arities


# ----------------------------------------------------------------------
# Validation and desugaring
# ----------------------------------------------------------------------
def _validate_rule(rule: SurfaceRule) -> None:
    positive: Set[str] = set()
    for item in rule.body:
        if isinstance(item, Clause) and not item.negated:
            positive.update(subclause_vars(item))

    for item in rule.body:
        if isinstance(item, Constraint):
            for name in item_vars(item):
                if name not in positive:
                    raise UnsafeHeadVariable(
                        name, f"guard variable '{name}' is not bound by a positive body clause"
                    )
        elif item.negated:
            if not is_flat(item):
                raise NestedNegation(f"negated clause !{item.rel}(...) contains a nested clause")
            for name in subclause_vars(item):
                if name not in positive:
                    raise UnsafeHeadVariable(
                        name, f"variable '{name}' of !{item.rel}(...) is not bound positively"
                    )

    head_binders = [
        clause.binder.name
        for head in rule.heads
        for clause in iter_clauses(head)
        if isinstance(clause.binder, Var)
    ]
    for name in head_binders:
        uses = 0
        for head in rule.heads:
            uses += sum(1 for seen in subclause_vars(head) if seen == name)
        for item in rule.body:
            uses += sum(1 for seen in item_vars(item) if seen == name)
        if uses > 1:
            raise IllFormedIdUnification(name)

    for head in rule.heads:
        for clause in iter_clauses(head):
            for arg in clause.args:
                if isinstance(arg, Wildcard):
                    raise UnsafeHeadVariable("_", f"wildcard in head clause {clause.rel}(...)")
                if isinstance(arg, Var) and arg.name not in positive:
                    raise UnsafeHeadVariable(arg.name)


def validate(program: Program) -> Program:
    relation_arities(program)
    for rule in program.rules:
        _validate_rule(rule)
    return program


def _strip_binders(clause: Clause) -> Clause:
    args = tuple(_strip_binders(arg) if isinstance(arg, Clause) else arg for arg in clause.args)
    return replace(clause, args=args, binder=None)


def desugar(program: Program) -> Program:
    """Split conjunctive heads so every rule has exactly one head clause.

    Head id binders are dropped here; validation has already ensured they are
    not referenced anywhere else.
    """
    rules: List[SurfaceRule] = []
    for rule in program.rules:
        for head in rule.heads:
            rules.append(SurfaceRule((_strip_binders(head),), rule.body, rule.pos))
    return Program(tuple(rules), program.decls)


def load_program(text: str) -> Program:
    return desugar(validate(parse_program(text)))


# ----------------------------------------------------------------------
# Printing
# ----------------------------------------------------------------------
def format_subclause(item: Subclause) -> str:
    if not isinstance(item, Clause):
        return str(item)
    text = f"{item.rel}({', '.join(format_subclause(arg) for arg in item.args)})"
    if item.negated:
        text = "!" + text
    if item.binder is not None:
        text = f"{item.binder} = {text}"
    return text


def format_rule(rule: SurfaceRule) -> str:
    heads = ", ".join(format_subclause(head) for head in rule.heads)
    if not rule.body:
        return f"{heads}."
    body = ", ".join(str(item) for item in rule.body)
    return f"{heads} :- {body}."


def format_program(program: Program) -> str:
    lines = [f".decl {decl.name}({', '.join(decl.columns)})" for decl in program.decls]
    lines.extend(format_rule(rule) for rule in program.rules)
    return "\n".join(lines) + ("\n" if lines else "")


def format_rules(rules: Sequence[SurfaceRule]) -> str:
    return format_program(Program(tuple(rules)))
