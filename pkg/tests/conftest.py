from __future__ import annotations

from typing import Callable, Iterable, List, Union

import pytest

from src.backend.corpus import TC_PROGRAM
from src.backend.engine import EvalConfig
from src.backend.syntax import parse_facts
from src.backend.terms import NestedFact
from src.backend.tools import RunOptions, RunResult, evaluate_program

WORKED_EXAMPLE = """\
T(g) :- g = G(A()).
T(h) :- T(g), g = G(_), h = G(g).
"""

NAT_GENERATOR = """\
S(z) :- z = Z().
S(n) :- n = S(_).
"""

PATH_EDGES = "edge(1, 2). edge(2, 3)."

Facts = Union[str, Iterable[NestedFact]]


def as_facts(facts: Facts) -> List[NestedFact]:
    return parse_facts(facts) if isinstance(facts, str) else list(facts)


def run(text: str, facts: Facts = (), **options) -> RunResult:
    config = EvalConfig(**{k: options.pop(k) for k in list(options) if k in EvalConfig.__dataclass_fields__})
    return evaluate_program(text, as_facts(facts), RunOptions(config=config, **options))


def printed(result: RunResult, relation: str) -> List[str]:
    return sorted(str(fact) for fact in result.db.nested_facts(relation))


@pytest.fixture
def run_program() -> Callable[..., RunResult]:
    return run


@pytest.fixture
def tc_path() -> RunResult:
    return run(TC_PROGRAM, PATH_EDGES)


@pytest.fixture
def worked_example() -> RunResult:
    return run(WORKED_EXAMPLE, "G(G(A())).", trace=True)
