from src.backend.flatten import (
    flatten_program,
    flatten_rule,
    introduced_variables,
    is_flat_rule,
    subcl,
)
from src.backend.syntax import WILDCARD, Clause, Lit, Var, load_program

from conftest import WORKED_EXAMPLE


def _rules(text):
    return load_program(text).rules


def test_binder_clause_with_nested_argument():
    first, _ = _rules(WORKED_EXAMPLE)
    (core,) = flatten_rule(first)
    assert core.head == Clause("T", (Var("g"),))
    assert core.body == (
        Clause("G", (Var("$f0"),), Var("g")),
        Clause("A", (), Var("$f0")),
    )
    assert is_flat_rule(core)


def test_recursive_worked_rule_is_already_flat():
    _, second = _rules(WORKED_EXAMPLE)
    (core,) = flatten_rule(second)
    assert core.body == (
        Clause("T", (Var("g"),)),
        Clause("G", (WILDCARD,), Var("g")),
        Clause("G", (Var("g"),), Var("h")),
    )


def test_identical_subterms_share_one_lookup():
    (rule,) = _rules("p(x) :- q(f(x)), r(f(x)).")
    (core,) = flatten_rule(rule)
    assert len(core.body) == 3
    assert [clause.rel for clause in core.body].count("f") == 1
    assert core.body[0].args == core.body[2].args


def test_wildcard_subterms_are_not_shared():
    (rule,) = _rules("p(x) :- q(x, f(_)), r(f(_)).")
    (core,) = flatten_rule(rule)
    lookups = [clause for clause in core.body if clause.rel == "f"]
    assert len(lookups) == 2
    assert lookups[0].binder != lookups[1].binder


def test_subcl_maps_terms_to_themselves():
    assert subcl(Var("x")) == (Var("x"), [])
    assert subcl(Lit(3)) == (Lit(3), [])
    term, clauses = subcl(Clause("f", (Clause("g", (Var("x"),)),)))
    assert term == Var("$f0")
    assert clauses == [
        Clause("f", (Var("$f1"),), Var("$f0")),
        Clause("g", (Var("x"),), Var("$f1")),
    ]


def test_head_split_creates_one_rule_per_nested_clause():
    (rule,) = _rules("p(pair(x, y)) :- q(x), r(y).")
    aux, main = flatten_rule(rule)
    assert aux.auxiliary and not main.auxiliary
    assert aux.head == Clause("pair", (Var("x"), Var("y")))
    assert aux.body == main.body[:2]
    assert main.head == Clause("p", (Var("$f0"),))
    assert main.body[-1] == Clause("pair", (Var("x"), Var("y")), Var("$f0"))


def test_head_split_is_innermost_first():
    (rule,) = _rules("p(a(b(x))) :- q(x).")
    rules = flatten_rule(rule)
    assert [core.head.rel for core in rules] == ["b", "a", "p"]
    assert [len(core.body) for core in rules] == [1, 2, 3]
    for core in rules:
        assert is_flat_rule(core)


def test_every_core_variable_is_bound_by_the_body():
    (rule,) = _rules("out(pair(x, f(x)), g(y)) :- in(x, h(y)).")
    for core in flatten_rule(rule):
        body_vars = set()
        for clause in core.body:
            body_vars |= {arg.name for arg in clause.args if isinstance(arg, Var)}
            if isinstance(clause.binder, Var):
                body_vars.add(clause.binder.name)
        head_vars = {arg.name for arg in core.head.args if isinstance(arg, Var)}
        assert head_vars <= body_vars


def test_flatten_program_tracks_origin_and_facts():
    core = flatten_program(load_program("Z().\np(s(x)) :- q(x).\n"))
    assert [rule.origin for rule in core.rules] == [0, 1, 1]
    assert core.rules[0].fact
    assert not core.rules[2].fact
    assert core.arities == {"Z": 0, "p": 1, "s": 1, "q": 1}
    assert core.head_relations() == {"Z", "s", "p"}


def test_introduced_variables_are_fresh():
    (rule,) = _rules("p(s(x)) :- q(f(x)).")
    assert introduced_variables(rule, flatten_rule(rule)) == {"$f0", "$f1"}
