"""Example programs, their inputs and generators.

Every entry under ``data/corpus/<name>/`` carries ``program.slg``, a
``facts/`` directory, an ``expected/`` directory and a ``manifest.json``
describing how results are checked: against hand-written fixtures or
against the reference evaluator.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import jsonschema

from .engine import load_fact_sources
from .errors import IngestError
from .terms import NestedFact

logger = logging.getLogger(__name__)

CORPUS_ROOT = Path(__file__).resolve().parents[2] / "data" / "corpus"

MANIFEST_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["name", "program", "facts", "expected"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[a-z][a-z0-9_]*$"},
        "description": {"type": "string"},
        "program": {"type": "string"},
        "facts": {"type": "array", "items": {"type": "string"}},
        "expected": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["fixture", "oracle"]},
                "relations": {"type": "array", "items": {"type": "string"}},
            },
        },
        "max_iterations": {"type": "integer", "minimum": 1},
        "max_fact_height": {"type": "integer", "minimum": 1},
        "expect_error": {"type": "string"},
    },
}


@dataclass
class CorpusEntry:
    name: str
    root: Path
    description: str = ""
    program: str = "program.slg"
    fact_dirs: List[str] = field(default_factory=list)
    expected_mode: str = "oracle"
    expected_relations: List[str] = field(default_factory=list)
    max_iterations: Optional[int] = None
    max_fact_height: Optional[int] = None
    expect_error: Optional[str] = None

    @property
    def program_path(self) -> Path:
        return self.root / self.program

    @property
    def fact_paths(self) -> List[Path]:
        return [self.root / name for name in self.fact_dirs]

    def program_text(self) -> str:
        return self.program_path.read_text(encoding="utf-8")

    def facts(self) -> List[NestedFact]:
        return load_fact_sources(self.fact_paths)

    def expected(self) -> Dict[str, List[str]]:
        """Deep-printed rows per relation, as listed in ``expected/<rel>.txt``."""
        rows: Dict[str, List[str]] = {}
        for relation in self.expected_relations:
            path = self.root / "expected" / f"{relation}.txt"
            text = path.read_text(encoding="utf-8") if path.exists() else ""
            rows[relation] = [line for line in text.splitlines() if line.strip()]
        return rows


def list_entries(root: Optional[Path] = None) -> List[str]:
    base = Path(root) if root is not None else CORPUS_ROOT
    if not base.is_dir():
        return []
    return sorted(child.name for child in base.iterdir() if (child / "manifest.json").is_file())


def load_entry(name: str, root: Optional[Path] = None) -> CorpusEntry:
    base = Path(root) if root is not None else CORPUS_ROOT
    path = base / name / "manifest.json"
    if not path.is_file():
        raise IngestError(f"no corpus entry named {name!r} under {base}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
    except (ValueError, jsonschema.ValidationError) as exc:
        raise IngestError(f"invalid corpus manifest {path}: {exc}") from exc
    expected = manifest["expected"]
    return CorpusEntry(
        name=manifest["name"],
        root=path.parent,
        description=manifest.get("description", ""),
        program=manifest["program"],
        fact_dirs=list(manifest["facts"]),
        expected_mode=expected["mode"],
        expected_relations=list(expected.get("relations", [])),
        max_iterations=manifest.get("max_iterations"),
        max_fact_height=manifest.get("max_fact_height"),
        expect_error=manifest.get("expect_error"),
    )


def load_corpus(root: Optional[Path] = None) -> List[CorpusEntry]:
    return [load_entry(name, root) for name in list_entries(root)]


# ----------------------------------------------------------------------
# Transitive closure
# ----------------------------------------------------------------------
TC_PROGRAM = """\
tc(x, y) :- edge(x, y).
tc(x, z) :- tc(x, y), edge(y, z).
"""


def gen_tc(n: int, p: float, seed: int) -> List[NestedFact]:
    """A seeded random digraph on nodes ``1..n`` without self-loops."""
    if n < 1:
        raise ValueError("gen_tc needs at least one node")
    rng = random.Random(seed)
    edges: List[NestedFact] = []
    for src in range(1, n + 1):
        for dst in range(1, n + 1):
            if src != dst and rng.random() < p:
                edges.append(NestedFact("edge", (src, dst)))
    return edges


def reachability(edges: Iterable[NestedFact]) -> Set[Tuple[int, int]]:
    """Every (x, y) joined by a non-empty edge path."""
    succ: Dict[Any, Set[Any]] = {}
    for edge in edges:
        succ.setdefault(edge.args[0], set()).add(edge.args[1])
    pairs: Set[Tuple[int, int]] = set()
    for start in succ:
        stack = list(succ[start])
        seen: Set[Any] = set()
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            pairs.add((start, node))
            stack.extend(succ.get(node, ()))
    return pairs


# ----------------------------------------------------------------------
# Random programs
# ----------------------------------------------------------------------
_COLUMN_VARS = ("x", "y", "z", "u")
_DOMAIN = 3


def _random_arg(rng: random.Random) -> str:
    roll = rng.random()
    if roll < 0.15:
        return str(rng.randint(0, _DOMAIN))
    if roll < 0.25:
        return "_"
    return rng.choice(_COLUMN_VARS)


def _args_of(rng: random.Random, count: int, bound: Sequence[str] = ()) -> List[str]:
    """Random arguments; once anything is bound, at least one of them joins on it."""
    args = [_random_arg(rng) for _ in range(count)]
    if bound and not any(arg in bound for arg in args):
        args[rng.randrange(count)] = rng.choice(list(bound))
    return args


def _random_rule(rng: random.Random, level: int, arities: Sequence[int], datalog: bool) -> str:
    body: List[str] = []
    bound: List[str] = []
    binders = 0
    recursive = False

    def positive(text: str, args: Sequence[str], binder: Optional[str] = None) -> None:
        body.append(f"{binder} = {text}" if binder else text)
        bound.extend(arg for arg in args if arg in _COLUMN_VARS and arg not in bound)
        if binder:
            bound.append(binder)

    for _ in range(rng.randint(1, 3)):
        roll = rng.random()
        if roll < 0.25:
            args = _args_of(rng, 2, bound)
            positive(f"e({', '.join(args)})", args)
        elif roll < 0.4:
            args = _args_of(rng, 1, bound)
            positive(f"n({args[0]})", args)
        elif not datalog and roll < 0.5:
            args = _args_of(rng, 2, bound)
            positive(f"w(pair({', '.join(args)}))", args)
        elif not datalog and roll < 0.6 and level > 0:
            args = _args_of(rng, 1, bound)
            binder = f"id{binders}"
            binders += 1
            positive(f"mk{rng.randrange(level)}({args[0]})", args, binder)
        else:
            target = rng.randint(0, level)
            recursive = recursive or target == level
            args = _args_of(rng, arities[target], bound)
            binder = None
            if not datalog and target < level and rng.random() < 0.3:
                binder = f"id{binders}"
                binders += 1
            positive(f"r{target}({', '.join(args)})", args, binder)
    if not bound:
        positive("n(x)", ["x"])

    def bound_or_blank() -> str:
        roll = rng.random()
        if roll < 0.2:
            return "_"
        if roll < 0.3:
            return str(rng.randint(0, _DOMAIN))
        return rng.choice(bound)

    if rng.random() < 0.3:
        choices = [("e", 2), ("n", 1)] + [(f"r{j}", arities[j]) for j in range(level)]
        name, arity = rng.choice(choices)
        body.append(f"!{name}({', '.join(bound_or_blank() for _ in range(arity))})")
    if rng.random() < 0.3:
        left = rng.choice(bound)
        if len(bound) > 1 and rng.random() < 0.6:
            right = rng.choice([var for var in bound if var != left])
            body.append(f"{left} != {right}")
        else:
            body.append(f"{left} {rng.choice(['=', '!='])} {rng.randint(0, _DOMAIN)}")

    head = [rng.choice(bound) for _ in range(arities[level])]
    if not datalog and not recursive and rng.random() < 0.4:
        slot = rng.randrange(len(head))
        head[slot] = f"mk{level}({rng.choice(bound)})"
    return f"r{level}({', '.join(head)}) :- {', '.join(body)}."


def gen_program(seed: int, relations: int = 4, rules: int = 6, datalog: bool = False) -> Tuple[str, List[NestedFact]]:
    """A seeded random stratified program that terminates, with its EDB.

    ``r<i>`` reads lower relations, itself only under a flat head, and the
    ``mk<j>`` facts made by strictly lower relations, so each stratum only
    ever sees finitely many values. With ``datalog`` there are no nested
    clauses and no id binders at all.
    """
    if relations < 1 or rules < 1:
        raise ValueError("gen_program needs at least one relation and one rule")
    rng = random.Random(seed)
    arities = [rng.randint(1, 2) for _ in range(relations)]
    facts = [NestedFact("e", (rng.randint(0, _DOMAIN), rng.randint(0, _DOMAIN))) for _ in range(6)]
    facts += [NestedFact("n", (rng.randint(0, _DOMAIN),)) for _ in range(3)]
    if not datalog:
        facts += [
            NestedFact("w", (NestedFact("pair", (rng.randint(0, _DOMAIN), rng.randint(0, _DOMAIN))),))
            for _ in range(3)
        ]
    levels = list(range(relations)) + [rng.randrange(relations) for _ in range(max(0, rules - relations))]
    lines = [_random_rule(rng, level, arities, datalog) for level in sorted(levels)]
    return "\n".join(lines) + "\n", facts


# ----------------------------------------------------------------------
# Lambda terms
# ----------------------------------------------------------------------
BOT = NestedFact("bot")


def ref(x: int) -> NestedFact:
    return NestedFact("ref", (x,))


def lam(x: int, body: NestedFact) -> NestedFact:
    return NestedFact("lam", (x, body))


def app(fn: NestedFact, arg: NestedFact) -> NestedFact:
    return NestedFact("app", (fn, arg))


def bind(env: NestedFact, x: int, value: Any) -> NestedFact:
    return NestedFact("bind", (env, x, value))


def clo(fn: NestedFact, env: NestedFact) -> NestedFact:
    return NestedFact("clo", (fn, env))


class _OutOfFuel(Exception):
    pass


def evaluate_cbv(term: NestedFact, env: NestedFact = BOT, fuel: int = 2_000) -> Optional[NestedFact]:
    """Big-step call-by-value evaluation over the fact encoding.

    Returns the final closure, or ``None`` when evaluation gets stuck on a
    free variable or runs out of fuel.
    """
    budget = [fuel]

    def lookup(rho: NestedFact, x: int) -> NestedFact:
        while rho.rel == "bind":
            parent, name, value = rho.args
            if name == x:
                return value
            rho = parent
        raise LookupError(x)

    def step(e: NestedFact, rho: NestedFact) -> NestedFact:
        budget[0] -= 1
        if budget[0] < 0:
            raise _OutOfFuel()
        if e.rel == "ref":
            return lookup(rho, e.args[0])
        if e.rel == "lam":
            return clo(e, rho)
        fn = step(e.args[0], rho)
        arg = step(e.args[1], rho)
        (x, body), fn_env = fn.args[0].args, fn.args[1]
        return step(body, bind(fn_env, x, arg))

    try:
        return step(term, env)
    except (_OutOfFuel, LookupError, RecursionError):
        return None


def random_lambda_term(depth: int, rng: random.Random) -> NestedFact:
    """A closed term whose binders are numbered in creation order."""
    counter = [0]

    def fresh() -> int:
        counter[0] += 1
        return counter[0] - 1

    def build(level: int, scope: Sequence[int]) -> NestedFact:
        if level <= 1:
            if scope:
                return ref(rng.choice(scope))
            x = fresh()
            return lam(x, ref(x))
        roll = rng.random()
        if scope and roll < 0.2:
            return ref(rng.choice(scope))
        if roll < 0.6:
            x = fresh()
            return lam(x, build(level - 1, [*scope, x]))
        return app(build(level - 1, scope), build(level - 1, scope))

    return build(depth, [])


def lambda_facts(term: NestedFact) -> List[NestedFact]:
    """The interpreter's input: the seed ``eval(term, bot())``."""
    return [NestedFact("eval", (term, BOT))]


def term_size(term: NestedFact) -> int:
    """Number of lam, app and ref nodes."""
    if term.rel == "ref":
        return 1
    if term.rel == "lam":
        return 1 + term_size(term.args[-1])
    return 1 + term_size(term.args[0]) + term_size(term.args[1])


def gen_lambda_term(
    depth: int,
    seed: int,
    fuel: int = 2_000,
    attempts: int = 64,
    max_size: Optional[int] = None,
) -> List[NestedFact]:
    """Seeded closed term of at most ``depth`` levels that terminates under CBV.

    With ``max_size`` set, terms with more nodes than that are redrawn too.
    """
    if depth < 1:
        raise ValueError("gen_lambda_term needs depth >= 1")
    rng = random.Random(seed)
    for _ in range(attempts):
        term = random_lambda_term(depth, rng)
        if max_size is not None and term_size(term) > max_size:
            continue
        if evaluate_cbv(term, fuel=fuel) is not None:
            return lambda_facts(term)
    logger.debug("No terminating term after %d attempts (seed %d); using identity", attempts, seed)
    return lambda_facts(lam(0, ref(0)))


def identity_application() -> NestedFact:
    return app(lam(0, ref(0)), lam(1, ref(1)))


def church_two_id_id() -> NestedFact:
    """``((λf.λx.f (f x)) (λy.y)) (λz.z)``."""
    two = lam(0, lam(1, app(ref(0), app(ref(0), ref(1)))))
    return app(app(two, lam(2, ref(2))), lam(3, ref(3)))


# ----------------------------------------------------------------------
# Simply-typed lambda calculus
# ----------------------------------------------------------------------
STLC_ENTRIES = ("stlc_identity", "stlc_app", "stlc_illtyped")


def stlc_lam(x: int, type_: Any, body: NestedFact) -> NestedFact:
    return NestedFact("lam", (x, type_, body))


def arrow(domain: Any, codomain: Any) -> NestedFact:
    return NestedFact("arrow", (domain, codomain))


def ck(term: NestedFact, gamma: NestedFact) -> NestedFact:
    return NestedFact("ck", (term, gamma))


def stlc_corpus(root: Optional[Path] = None) -> List[CorpusEntry]:
    return [load_entry(name, root) for name in STLC_ENTRIES]


# ----------------------------------------------------------------------
# Global-store m-CFA
# ----------------------------------------------------------------------
MCFA_ENTRY = "mcfa_identity"
MCFA_NESTED_ENTRY = "mcfa_identity_nested"
MCFA_STATES = ("eval", "ret", "apply")


def initial_context(nested: bool = False) -> NestedFact:
    if nested:
        return NestedFact("cons", (0, NestedFact("cons", (0, NestedFact("cons", (0, NestedFact("nil")))))))
    return NestedFact("ctx", (0, 0, 0))


def mcfa_facts(term: NestedFact, nested: bool = False) -> List[NestedFact]:
    """Initial state: ``eval(term, empty(), halt(), ctx0)``."""
    return [NestedFact("eval", (term, NestedFact("empty"), NestedFact("halt"), initial_context(nested)))]


def mcfa_corpus(
    depth: int,
    seed: int,
    nested: bool = False,
    root: Optional[Path] = None,
    max_size: Optional[int] = None,
) -> Tuple[str, List[NestedFact]]:
    """The analysis program plus a generated input term."""
    entry = load_entry(MCFA_NESTED_ENTRY if nested else MCFA_ENTRY, root)
    term = gen_lambda_term(depth, seed, max_size=max_size)[0].args[0]
    assert isinstance(term, NestedFact)
    return entry.program_text(), mcfa_facts(term, nested)


def state_counts(facts: Iterable[NestedFact]) -> Mapping[str, int]:
    counts = {name: 0 for name in MCFA_STATES}
    for fact in facts:
        if fact.rel in counts:
            counts[fact.rel] += 1
    return counts
