import json

import pytest

from src.backend.corpus import (
    BOT,
    MCFA_ENTRY,
    MCFA_NESTED_ENTRY,
    MCFA_STATES,
    STLC_ENTRIES,
    TC_PROGRAM,
    app,
    arrow,
    church_two_id_id,
    ck,
    clo,
    evaluate_cbv,
    gen_lambda_term,
    gen_program,
    gen_tc,
    identity_application,
    lam,
    list_entries,
    load_entry,
    mcfa_corpus,
    reachability,
    ref,
    state_counts,
    stlc_corpus,
    stlc_lam,
    term_size,
)
from src.backend.engine import EvalConfig, canonical_fact_set
from src.backend.errors import IngestError
from src.backend.reference import herbrand_model_check, naive_fixpoint
from src.backend.syntax import load_program
from src.backend.terms import NestedFact
from src.backend.tools import check_entry, check_program, relation_rows

from conftest import run


def _state_counts(result):
    return dict(state_counts(fact for name in MCFA_STATES for fact in result.db.nested_facts(name)))


# ----------------------------------------------------------------------
# Entries
# ----------------------------------------------------------------------
def test_list_entries_finds_every_manifest():
    names = list_entries()
    assert len(names) == 12
    assert names == sorted(names)
    assert {"tc_path", "worked_example", MCFA_ENTRY, MCFA_NESTED_ENTRY, *STLC_ENTRIES} <= set(names)


def test_list_entries_of_missing_root_is_empty(tmp_path):
    assert list_entries(tmp_path / "nowhere") == []


def test_load_entry_reads_manifest():
    entry = load_entry("tc_path")
    assert entry.expected_mode == "fixture"
    assert entry.expected_relations == ["tc"]
    assert entry.program_text() == TC_PROGRAM
    assert sorted(map(str, entry.facts())) == ["edge(1, 2)", "edge(2, 3)"]
    assert entry.expected() == {"tc": ["tc(1, 2)", "tc(1, 3)", "tc(2, 3)"]}


def test_load_entry_missing(tmp_path):
    with pytest.raises(IngestError, match="no corpus entry"):
        load_entry("absent", tmp_path)


@pytest.mark.parametrize(
    "manifest",
    [
        "{not json",
        json.dumps({"name": "bad", "program": "program.slg", "facts": []}),
        json.dumps({"name": "Bad", "program": "p.slg", "facts": [], "expected": {"mode": "oracle"}}),
        json.dumps({"name": "bad", "program": "p.slg", "facts": [], "expected": {"mode": "guess"}}),
    ],
)
def test_load_entry_invalid_manifest(tmp_path, manifest):
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "manifest.json").write_text(manifest, encoding="utf-8")
    with pytest.raises(IngestError, match="invalid corpus manifest") as excinfo:
        load_entry("bad", tmp_path)
    assert excinfo.value.exit_code == 7


@pytest.mark.parametrize("name", list_entries())
def test_every_entry_checks(name):
    report = check_entry(load_entry(name))
    assert report.ok, report.to_lines()


@pytest.mark.parametrize("name", [name for name in list_entries() if not load_entry(name).expect_error])
def test_every_entry_is_a_model(name):
    entry = load_entry(name)
    result = run(entry.program_text(), entry.facts())
    assert herbrand_model_check(canonical_fact_set(result.db), load_program(entry.program_text()))


def test_expected_error_entry_reports_reason():
    report = check_entry(load_entry("nat_generator"))
    assert report.ok
    assert report.reason == "expected HeightLimitExceeded"


# ----------------------------------------------------------------------
# Transitive closure
# ----------------------------------------------------------------------
def test_gen_tc_complete_graph():
    assert len(gen_tc(3, 1.0, seed=7)) == 6


def test_gen_tc_edge_cases():
    assert gen_tc(1, 1.0, seed=0) == []
    assert gen_tc(5, 0.0, seed=0) == []
    with pytest.raises(ValueError):
        gen_tc(0, 0.5, seed=0)


def test_gen_tc_is_seeded():
    assert gen_tc(15, 0.2, seed=3) == gen_tc(15, 0.2, seed=3)
    assert all(edge.args[0] != edge.args[1] for edge in gen_tc(15, 0.5, seed=3))


def test_reachability_of_cycle():
    edges = [NestedFact("edge", (1, 2)), NestedFact("edge", (2, 1))]
    assert reachability(edges) == {(1, 2), (2, 1), (1, 1), (2, 2)}


def test_generated_tc_matches_reachability():
    edges = gen_tc(20, 0.1, seed=42)
    result = run(TC_PROGRAM, edges, workers=2)
    assert {fact.args for fact in result.db.nested_facts("tc")} == reachability(edges)


# ----------------------------------------------------------------------
# Random programs
# ----------------------------------------------------------------------
def test_gen_program_rejects_empty():
    with pytest.raises(ValueError):
        gen_program(0, relations=0)
    with pytest.raises(ValueError):
        gen_program(0, rules=0)


def test_gen_program_is_seeded():
    assert gen_program(11) == gen_program(11)


def test_gen_program_defines_every_level():
    text, _ = gen_program(5, relations=4, rules=4)
    heads = {line.split("(", 1)[0] for line in text.splitlines()}
    assert {"r0", "r1", "r2", "r3"} <= heads


def test_datalog_programs_are_flat():
    text, facts = gen_program(9, datalog=True)
    assert "mk" not in text
    assert "pair(" not in text
    assert "id0" not in text
    assert {fact.rel for fact in facts} == {"e", "n"}


# ----------------------------------------------------------------------
# Lambda calculus
# ----------------------------------------------------------------------
def test_cbv_identity_application():
    assert evaluate_cbv(identity_application()) == clo(lam(1, ref(1)), BOT)


def test_cbv_church_two():
    assert evaluate_cbv(church_two_id_id()) == clo(lam(3, ref(3)), BOT)


def test_cbv_stuck_and_out_of_fuel():
    assert evaluate_cbv(ref(0)) is None
    omega = lam(0, NestedFact("app", (ref(0), ref(0))))
    assert evaluate_cbv(NestedFact("app", (omega, omega)), fuel=50) is None


def test_term_size():
    assert term_size(ref(0)) == 1
    assert term_size(identity_application()) == 5
    assert term_size(church_two_id_id()) == 13


def test_gen_lambda_term_max_size():
    for seed in range(10):
        [fact] = gen_lambda_term(6, seed, max_size=8)
        assert term_size(fact.args[0]) <= 8
        assert evaluate_cbv(fact.args[0]) is not None


def test_gen_lambda_term():
    with pytest.raises(ValueError):
        gen_lambda_term(0, seed=1)
    [seed] = gen_lambda_term(4, seed=1)
    assert seed.rel == "eval"
    assert seed.args[1] == BOT
    assert evaluate_cbv(seed.args[0]) is not None
    assert gen_lambda_term(4, seed=1) == [seed]


@pytest.mark.parametrize("seed", range(5))
def test_interpreter_agrees_with_cbv(seed):
    program = load_entry("lambda_identity").program_text()
    facts = gen_lambda_term(3, seed)
    result = run(program, facts)
    values = [fact.args[1] for fact in result.db.nested_facts("evals") if fact.args[0] == facts[0]]
    assert values == [evaluate_cbv(facts[0].args[0])]


def test_interpreter_church_two():
    entry = load_entry("lambda_church")
    result = run(entry.program_text(), entry.facts())
    top = entry.facts()[0]
    assert [fact.args[1] for fact in result.db.nested_facts("evals") if fact.args[0] == top] == [
        evaluate_cbv(church_two_id_id())
    ]


# ----------------------------------------------------------------------
# Type checking
# ----------------------------------------------------------------------
def test_stlc_corpus_entries():
    entries = stlc_corpus()
    assert [entry.name for entry in entries] == list(STLC_ENTRIES)
    for entry in entries:
        assert check_entry(entry).ok


def test_stlc_identity_has_arrow_type():
    entry = load_entry("stlc_identity")
    identity = stlc_lam(0, "A", ref(0))
    assert entry.facts() == [ck(identity, BOT)]
    result = run(entry.program_text(), entry.facts())
    assert NestedFact("type", (ck(identity, BOT), arrow("A", "A"))) in result.db.nested_facts("type")


def test_stlc_higher_order_application():
    fn_type = arrow("A", "A")
    term = app(stlc_lam(0, fn_type, ref(0)), stlc_lam(1, "A", ref(1)))
    program = load_entry("stlc_identity").program_text()
    result = run(program, [ck(term, BOT)], workers=2)
    types = result.db.nested_facts("type")
    assert NestedFact("type", (ck(term, BOT), fn_type)) in types
    assert NestedFact("type", (ck(term.args[0], BOT), arrow(fn_type, fn_type))) in types
    assert check_program(program, [ck(term, BOT)]).ok


def test_stlc_app_types_the_application():
    entry = load_entry("stlc_app")
    result = run(entry.program_text(), entry.facts())
    assert 'type(ck(app(lam(0, "A", ref(0)), ref(1)), bind(bot(), 1, "A")), "A")' in relation_rows(result.db, "type")


def test_stlc_illtyped_leaves_application_untyped():
    entry = load_entry("stlc_illtyped")
    result = run(entry.program_text(), entry.facts())
    assert not any(row.startswith("type(ck(app(") for row in relation_rows(result.db, "type"))


# ----------------------------------------------------------------------
# m-CFA
# ----------------------------------------------------------------------
@pytest.mark.parametrize("name", [MCFA_ENTRY, MCFA_NESTED_ENTRY])
def test_mcfa_identity_state_counts(name):
    entry = load_entry(name)
    result = run(entry.program_text(), entry.facts())
    assert _state_counts(result) == {"eval": 4, "ret": 4, "apply": 1}


def test_mcfa_single_state_counts():
    entry = load_entry("mcfa_single")
    result = run(entry.program_text(), entry.facts())
    assert _state_counts(result) == {"eval": 1, "ret": 1, "apply": 0}


@pytest.mark.parametrize("nested", [False, True])
def test_mcfa_corpus_seeds_one_eval(nested):
    program, facts = mcfa_corpus(3, seed=2, nested=nested)
    assert program == load_entry(MCFA_NESTED_ENTRY if nested else MCFA_ENTRY).program_text()
    [seed] = facts
    assert seed.rel == "eval"
    assert seed.args[1:3] == (NestedFact("empty"), NestedFact("halt"))
    context = seed.args[3]
    assert context.rel == ("cons" if nested else "ctx")


@pytest.mark.parametrize("nested", [False, True])
@pytest.mark.parametrize("seed", range(4))
def test_mcfa_generated_term_state_counts_match_oracle(seed, nested):
    program, facts = mcfa_corpus(6, seed, nested=nested, max_size=8)
    assert term_size(facts[0].args[0]) <= 8
    report = check_program(program, facts, EvalConfig(workers=2))
    assert report.ok, report.to_lines()
    result = run(program, facts, workers=2)
    oracle = naive_fixpoint(load_program(program), facts)
    assert _state_counts(result) == dict(state_counts(oracle))
    assert _state_counts(result)["eval"] >= 1


def test_mcfa_engine_is_worker_invariant():
    entry = load_entry(MCFA_ENTRY)
    single = run(entry.program_text(), entry.facts())
    several = run(entry.program_text(), entry.facts(), workers=4, buckets=8)
    for name in MCFA_STATES:
        assert relation_rows(single.db, name) == relation_rows(several.db, name)


def test_check_entry_with_explicit_config():
    report = check_entry(load_entry("tc_diamond"), EvalConfig(workers=3))
    assert report.ok
    assert report.engine_facts == report.oracle_facts


@pytest.mark.parametrize("workers", [2, 4, 8])
def test_interpreter_is_worker_invariant(workers):
    program = load_entry("lambda_identity").program_text()
    facts = gen_lambda_term(6, seed=3)
    baseline = canonical_fact_set(run(program, facts).db)
    assert canonical_fact_set(run(program, facts, workers=workers).db) == baseline
