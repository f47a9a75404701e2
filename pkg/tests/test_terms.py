import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.backend.errors import ArityError, CapacityError, FactLookupError
from src.backend.terms import (
    MAX_BUCKET,
    MAX_COUNTER,
    MAX_REL,
    NestedFact,
    TermStore,
    Value,
    ValueKind,
    fact_value,
    format_nested,
    int_value,
    nested_height,
    pack_id,
    stable_hash,
    unpack_id,
)


def test_pack_id_layout():
    assert pack_id(1, 2, 3) == 0x0001000200000003
    assert pack_id(0, 0, 0) == 0
    assert pack_id(MAX_REL, MAX_BUCKET, MAX_COUNTER) == 0xFFFFFFFFFFFFFFFF


@pytest.mark.parametrize("fields", [(MAX_REL + 1, 0, 0), (0, MAX_BUCKET + 1, 0), (0, 0, MAX_COUNTER + 1), (-1, 0, 0)])
def test_pack_id_rejects_out_of_range_fields(fields):
    with pytest.raises(CapacityError):
        pack_id(*fields)


@settings(max_examples=500)
@given(
    st.integers(0, MAX_REL),
    st.integers(0, MAX_BUCKET),
    st.integers(0, MAX_COUNTER),
)
def test_unpack_inverts_pack(rel, bucket, counter):
    assert unpack_id(pack_id(rel, bucket, counter)) == (rel, bucket, counter)


def test_pack_unpack_seeded_batch():
    rng = random.Random(2024)
    for _ in range(10_000):
        fields = (rng.randint(0, MAX_REL), rng.randint(0, MAX_BUCKET), rng.randint(0, MAX_COUNTER))
        packed = pack_id(*fields)
        assert 0 <= packed < 1 << 64
        assert unpack_id(packed) == fields


def test_int_value_bounds():
    assert int_value(-(1 << 63)).payload == -(1 << 63)
    with pytest.raises(CapacityError):
        int_value(1 << 63)


def test_stable_hash_is_deterministic_and_64_bit():
    values = [int_value(1), int_value(2)]
    assert stable_hash(values) == stable_hash(list(values))
    assert 0 <= stable_hash(values) < 1 << 64
    assert stable_hash(values) != stable_hash(values[::-1])
    assert stable_hash([int_value(7)]) != stable_hash([Value(ValueKind.STR, 7)])


def test_intern_is_idempotent():
    store = TermStore(4)
    first = store.intern("A", ())
    assert store.intern("A", ()) == first
    assert len(store) == 1


def test_intern_distinguishes_structures():
    store = TermStore(4)
    a = store.intern("A", ())
    g = store.intern("G", (a,))
    assert a != g
    assert store.resolve(g) == ("G", (a,))
    assert store.resolve(a) == ("A", ())


def test_resolve_literal_row():
    store = TermStore(2)
    one, two = store.literal(1), store.literal(2)
    edge = store.intern("edge", (one, two))
    assert store.resolve(edge) == ("edge", (one, two))
    assert store.deep_print(edge) == "edge(1, 2)"


def test_resolve_unknown_id():
    store = TermStore(2)
    store.intern("A", ())
    with pytest.raises(FactLookupError):
        store.resolve(pack_id(1, 1, 99))


def test_fact_lands_in_its_canonical_bucket():
    store = TermStore(8)
    for n in range(50):
        args = (store.literal(n), store.literal(n * n))
        fact = store.intern("sq", args)
        assert unpack_id(fact.payload)[1] == stable_hash(args) % 8


def test_counters_are_bump_allocated_per_bucket():
    store = TermStore(1)
    ids = [store.intern("n", (store.literal(k),)).payload for k in range(5)]
    assert [unpack_id(fact_id)[2] for fact_id in ids] == [0, 1, 2, 3, 4]


def test_arity_conflict():
    store = TermStore()
    store.register("p", 1)
    with pytest.raises(ArityError):
        store.register("p", 2)
    with pytest.raises(ArityError):
        store.intern("p", (store.literal(1), store.literal(2)))


def test_intern_rejects_dangling_argument():
    store = TermStore(2)
    with pytest.raises(FactLookupError):
        store.intern("G", (fact_value(pack_id(5, 0, 0)),))


def test_intern_nested_stores_subfacts():
    store = TermStore(4)
    g2 = store.intern_nested(NestedFact("G", (NestedFact("G", (NestedFact("A"),)),)))
    assert store.deep_print(g2) == "G(G(A()))"
    assert store.lookup("A", ()) is not None
    a = store.lookup("A", ())
    assert store.lookup("G", (a,)) is not None
    assert store.height(g2) == 3
    assert store.height(a) == 1


def test_lookup_misses():
    store = TermStore()
    assert store.lookup("nothing", ()) is None
    store.register("p", 1)
    assert store.lookup("p", (store.literal(3),)) is None


def test_string_literals_share_handles():
    store = TermStore()
    first = store.literal("tab\there")
    assert store.literal("tab\there") == first
    assert store.strings.find("tab\there") == first.payload
    assert store.strings.find("other") is None
    assert store.format_value(first) == '"tab\\there"'


def test_dump_intern_table_is_sorted_by_id():
    store = TermStore(4)
    store.intern_nested(NestedFact("pair", (NestedFact("A"), "x")))
    lines = store.dump_intern_table()
    ids = [int(line.split("\t")[0], 16) for line in lines]
    assert ids == sorted(ids)
    assert {line.split("\t")[1] for line in lines} == {"A()", 'pair(A(), "x")'}


def test_nested_height():
    assert nested_height(3) == 0
    assert nested_height(NestedFact("A")) == 1
    assert nested_height(NestedFact("G", (NestedFact("A"), 1))) == 2


literals = st.one_of(st.integers(-(1 << 63), (1 << 63) - 1), st.text(max_size=4))


def _fact(args):
    return NestedFact(f"r{len(args)}", tuple(args))


nested_args = st.recursive(
    literals | st.just(NestedFact("leaf")),
    lambda children: st.lists(children, max_size=3).map(_fact),
    max_leaves=12,
)
nested_facts = st.lists(nested_args, max_size=3).map(_fact)


@given(nested_facts, st.integers(1, 8))
def test_interned_trees_print_and_rebuild(fact, buckets):
    store = TermStore(buckets)
    value = store.intern_nested(fact)
    assert store.to_nested(value) == fact
    assert store.deep_print(value) == format_nested(fact)
    assert store.intern_nested(fact) == value
