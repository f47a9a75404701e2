import random

import pytest

from src.backend.corpus import TC_PROGRAM, gen_tc
from src.backend.engine import EvalConfig
from src.backend.errors import FactLookupError
from src.backend.flatten import flatten_program
from src.backend.provenance import (
    COLUMN,
    DERIV,
    EXPLAIN,
    build_deriv_graph,
    rewrite_eager_why,
    rewrite_lazy_why,
    rewrite_where,
    why_closure,
)
from src.backend.reference import derivation_leaves, naive_fixpoint
from src.backend.syntax import Clause, Lit, Program, Var, load_program, parse_fact, parse_facts
from src.backend.tools import RunOptions, evaluate_program, explain_eager, explain_lazy

from conftest import PATH_EDGES, WORKED_EXAMPLE, printed, run


def _core(text):
    return flatten_program(load_program(text))


def test_eager_rewrite_adds_one_companion_per_body_clause():
    core = _core(TC_PROGRAM)
    rewritten = rewrite_eager_why(core)
    extra = rewritten.rules[len(core.rules):]
    assert len(extra) == 3
    assert all(rule.head.rel == DERIV for rule in extra)
    assert rewritten.arities[DERIV] == 2
    step = extra[1]
    assert step.body[:2] == (
        Clause("tc", (Var("x"), Var("y")), Var("$b0")),
        Clause("edge", (Var("y"), Var("z")), Var("$b1")),
    )
    assert step.body[2] == Clause("tc", (Var("x"), Var("z")), Var("$h2"))
    assert step.head == Clause(DERIV, (Var("$b0"), Var("$h2")))


def test_eager_rewrite_skips_fact_rules():
    core = _core("Z().\nS(z) :- z = Z().\n")
    extra = rewrite_eager_why(core).rules[len(core.rules):]
    assert len(extra) == 1
    assert extra[0].head.args[0] == Var("z")


def test_lazy_rewrite_guards_on_the_head():
    core = _core(TC_PROGRAM)
    rewritten = rewrite_lazy_why(core, parse_fact("tc(1, 3)"))
    extra = rewritten.rules[len(core.rules):]
    companions, seed = extra[:3], extra[3:]
    for rule in companions:
        assert rule.head.rel == EXPLAIN
        assert rule.body[-1].rel == EXPLAIN
    (seed_rule,) = seed
    assert seed_rule.head == Clause(EXPLAIN, (Var("$t"),))
    assert seed_rule.body == (Clause("tc", (Lit(1), Lit(3)), Var("$t")),)


def test_where_rewrite_relations():
    core = _core(TC_PROGRAM)
    rewritten = rewrite_where(core)
    heads = {rule.head.rel for rule in rewritten.rules[len(core.rules):]}
    assert heads == {COLUMN, "prov_tc"}
    assert rewritten.arities["prov_tc"] == 2


def test_where_provenance_points_at_source_columns():
    result = evaluate_program(TC_PROGRAM, parse_facts(PATH_EDGES), RunOptions(where=True))
    store = result.store
    sources = set()
    for _, args in result.db.rows("prov_tc"):
        for rel, (fact, index, value) in (store.resolve(arg) for arg in args):
            assert rel == COLUMN
            sources.add((store.deep_print(fact), index.payload, store.format_value(value)))
    assert ("edge(1, 2)", 0, "1") in sources
    assert ("edge(2, 3)", 1, "3") in sources
    assert ("tc(1, 2)", 0, "1") in sources


def test_where_literal_origins():
    result = evaluate_program('p(x, "tag") :- q(x).', parse_facts("q(1)."), RunOptions(where=True))
    assert printed(result, "literal_origin") == ['literal_origin("tag")']
    ((_, (origin, marker)),) = result.db.rows("prov_p")
    assert result.store.deep_print(marker) == 'literal_origin("tag")'
    assert result.store.deep_print(origin) == "column(q(1), 0, 1)"


def test_eager_explain_on_a_path():
    result = evaluate_program(TC_PROGRAM, parse_facts(PATH_EDGES), RunOptions(eager_why=True))
    assert explain_eager(result, parse_fact("tc(1, 3)")) == ["edge(1, 2)", "edge(2, 3)"]
    assert explain_eager(result, parse_fact("edge(1, 2)")) == ["edge(1, 2)"]
    with pytest.raises(FactLookupError):
        explain_eager(result, parse_fact("tc(3, 1)"))


def test_companions_do_not_change_the_program_result():
    plain = run(WORKED_EXAMPLE, "G(G(A())).")
    traced = run(WORKED_EXAMPLE, "G(G(A())).", eager_why=True, where=True)
    assert printed(traced, "T") == printed(plain, "T")


def test_eager_explain_through_nested_heads():
    result = evaluate_program(WORKED_EXAMPLE, parse_facts("G(G(A()))."), RunOptions(eager_why=True))
    lineage = explain_eager(result, parse_fact("T(G(G(A())))"))
    assert lineage == ["A()", "G(A())", "G(G(A()))"]


def test_lazy_explain_on_a_path():
    facts = parse_facts(PATH_EDGES)
    assert explain_lazy(TC_PROGRAM, facts, parse_fact("tc(1, 3)")) == ["edge(1, 2)", "edge(2, 3)"]
    assert explain_lazy(TC_PROGRAM, facts, parse_fact("edge(2, 3)")) == ["edge(2, 3)"]
    with pytest.raises(FactLookupError):
        explain_lazy(TC_PROGRAM, facts, parse_fact("tc(3, 1)"))


def test_unseeded_lazy_run_leaves_explain_empty():
    core = _core(TC_PROGRAM)
    result = evaluate_program(TC_PROGRAM, parse_facts(PATH_EDGES), RunOptions())
    assert result.db.count(EXPLAIN) == 0
    assert len(rewrite_lazy_why(core).rules) == len(core.rules) + 3


def test_why_closure_rejects_unknown_ids():
    result = evaluate_program(TC_PROGRAM, parse_facts(PATH_EDGES), RunOptions(eager_why=True))
    with pytest.raises(FactLookupError):
        why_closure(result.db, 0xDEADBEEF)


@pytest.mark.parametrize("seed", range(20))
def test_why_closure_matches_derivation_leaves(seed):
    edges = gen_tc(10, 0.2, seed)
    result = evaluate_program(TC_PROGRAM, edges, RunOptions(eager_why=True))
    graph = build_deriv_graph(result.db)
    surface = Program(tuple(rule.to_surface() for rule in _core(TC_PROGRAM).rules))
    leaves = derivation_leaves(surface, naive_fixpoint(surface, edges), edges)
    store = result.store
    for fact_id in result.db.ids("tc"):
        expected = sorted(str(fact) for fact in leaves[store.to_nested(fact_id)])
        assert sorted(store.deep_print(i) for i in graph.closure(fact_id)) == expected


@pytest.mark.parametrize("seed", range(20))
def test_lazy_agrees_with_eager(seed):
    edges = gen_tc(10, 0.2, seed)
    eager = evaluate_program(TC_PROGRAM, edges, RunOptions(eager_why=True))
    targets = sorted(eager.db.nested_facts("tc"), key=str)
    rng = random.Random(seed)
    for target in rng.sample(targets, min(10, len(targets))):
        assert explain_lazy(TC_PROGRAM, edges, target, EvalConfig(workers=2)) == explain_eager(eager, target)
