import pytest
from frozendict import frozendict

from src.backend.corpus import TC_PROGRAM
from src.backend.errors import UnstratifiableNegation
from src.backend.flatten import flatten_program
from src.backend.planner import (
    ALL,
    DELTA,
    FULL,
    check_plan_keys,
    dependency_graph,
    format_plan,
    plan_program,
    strongly_connected_components,
)
from src.backend.syntax import load_program
from src.backend.terms import TermStore

from conftest import WORKED_EXAMPLE


def _plan(text):
    store = TermStore(4)
    return plan_program(flatten_program(load_program(text)), store), store


def _stratum_of(plan, relation):
    return next(s for s in plan.strata if relation in s.relations)


def _versions_for(plan, relation):
    stratum = _stratum_of(plan, relation)
    return [v for v in plan.versions[stratum.index] if v.head.name == relation]


def test_tarjan_emits_dependencies_first():
    successors = {"c": ["b"], "b": ["a"], "a": []}
    assert strongly_connected_components(["c", "b", "a"], successors) == [["a"], ["b"], ["c"]]


def test_tarjan_groups_cycles():
    successors = {"a": ["b"], "b": ["a", "c"], "c": []}
    assert strongly_connected_components(["a", "b", "c"], successors) == [["c"], ["a", "b"]]


def test_negated_relation_is_evaluated_first():
    plan, _ = _plan("p(x) :- q(x), !r(x).\nr(x) :- s(x).\n")
    assert _stratum_of(plan, "r").index < _stratum_of(plan, "p").index
    assert _stratum_of(plan, "s").index < _stratum_of(plan, "r").index


def test_mutual_recursion_shares_a_stratum():
    plan, _ = _plan("p(x) :- s(x).\np(x) :- q(x).\nq(x) :- p(x).\n")
    assert _stratum_of(plan, "p") is _stratum_of(plan, "q")
    assert _stratum_of(plan, "p").recursive
    assert not _stratum_of(plan, "s").recursive


def test_negation_through_recursion_is_rejected():
    with pytest.raises(UnstratifiableNegation) as info:
        _plan("p(x) :- s(x), !q(x).\nq(x) :- s(x), p(x).\n")
    assert info.value.cycle == ("p", "q")
    assert info.value.exit_code == 5


def test_self_negation_is_rejected():
    with pytest.raises(UnstratifiableNegation) as info:
        _plan("p(x) :- s(x), !p(x).")
    assert info.value.cycle == ("p",)


def test_dependency_graph_marks_negative_edges():
    graph = dependency_graph(flatten_program(load_program("p(x) :- q(x), !r(x).")))
    assert graph.edges == {("q", "p"), ("r", "p")}
    assert graph.negative == {("r", "p")}


def test_tc_versions():
    plan, _ = _plan(TC_PROGRAM)
    base, step = _versions_for(plan, "tc")
    assert base.once
    assert [s.source for s in base.steps] == [FULL]
    assert step.delta_position == 0
    assert [(s.relation.name, s.source, s.mode) for s in step.steps] == [
        ("tc", DELTA, "scan"),
        ("edge", FULL, "index"),
    ]
    assert step.steps[1].key_columns == (0,)


def test_two_recursive_clauses_get_two_versions():
    plan, _ = _plan("tc(x, y) :- edge(x, y).\ntc(x, z) :- tc(x, y), tc(y, z).\n")
    versions = [v for v in _versions_for(plan, "tc") if not v.once]
    assert len(versions) == 2
    first, second = versions
    assert [(s.position, s.source) for s in first.steps] == [(0, DELTA), (1, FULL)]
    assert [(s.position, s.source) for s in second.steps] == [(1, DELTA), (0, ALL)]


def test_index_selection():
    plan, _ = _plan(TC_PROGRAM)
    assert isinstance(plan.indices, frozendict)
    assert plan.indices["edge"] == frozenset({(0, 1), (0,)})
    assert plan.secondary_indices("edge") == [(0,)]
    assert plan.secondary_indices("tc") == []
    assert check_plan_keys(plan) == []


def test_id_and_canonical_modes():
    plan, _ = _plan(WORKED_EXAMPLE)
    step = next(v for v in _versions_for(plan, "T") if not v.once)
    modes = [(s.relation.name, s.mode) for s in step.steps]
    assert modes == [("T", "scan"), ("G", "id"), ("G", "canonical")]
    assert step.steps[2].bind_id is not None


def test_constraints_become_filters():
    plan, _ = _plan("p(x, y) :- q(x), q(y), x != y.")
    (version,) = _versions_for(plan, "p")
    assert not version.filters
    assert [f.op for f in version.steps[1].filters] == ["!="]


def test_anti_join_keys():
    plan, _ = _plan("p(x) :- q(x, y), !r(y, _).")
    (version,) = _versions_for(plan, "p")
    (anti,) = version.anti_joins
    assert anti.key_columns == (0,)
    assert not anti.canonical
    assert (0,) in plan.indices["r"]


def test_format_plan_lists_strata_and_indices():
    plan, store = _plan(TC_PROGRAM)
    text = format_plan(plan, store)
    assert "recursive" in text
    assert "delta tc: scan" in text
    assert "full edge: index (0) = (y)" in text
    assert text.splitlines()[-2:] == ["  edge: (0) (0,1)", "  tc: (0,1)"]
